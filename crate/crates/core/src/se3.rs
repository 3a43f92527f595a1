//! SE(3)/SO(3) numerics: exponential and logarithm maps, composition,
//! inversion, SVD orthonormalization, and the point-based pose error metric.
//!
//! Conventions, fixed once for the whole crate:
//! - A [`Twist`] is ordered `(v, omega)`: translational part first (mm),
//!   rotational part second (radians).
//! - A [`Pose`] maps model coordinates to camera coordinates:
//!   `p_cam = R * p_model + t`.
//! - All pose math is `f64`; observation/network math elsewhere is `f32`.

use thiserror::Error;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Angle below which exp/log switch to Taylor-series limits.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Orthonormality drift (Frobenius) above which composition re-projects
/// the rotation onto SO(3).
pub const ORTHO_DRIFT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("matrix is singular, cannot orthonormalize (min singular value {0:.3e})")]
    SingularMatrix(f64),
    #[error("pose error requires a non-empty point set")]
    EmptyPointSet,
}

/// Element of se(3): translational part `v` (mm) then rotational part
/// `omega` (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub v: Vec3,
    pub omega: Vec3,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: [0.0; 3], omega: [0.0; 3] };

    pub fn new(v: Vec3, omega: Vec3) -> Self {
        Twist { v, omega }
    }

    /// Build from a 6-array ordered `(v, omega)`.
    pub fn from_array(x: [f64; 6]) -> Self {
        Twist { v: [x[0], x[1], x[2]], omega: [x[3], x[4], x[5]] }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.v[0], self.v[1], self.v[2], self.omega[0], self.omega[1], self.omega[2]]
    }

    /// Rotation angle `theta = ||omega||`.
    pub fn angle(&self) -> f64 {
        norm3(self.omega)
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.omega.iter()).all(|x| x.is_finite())
    }
}

/// Rigid transform: rotation matrix plus translation (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub r: Mat3,
    pub t: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { r: MAT3_ID, t: [0.0; 3] };

    pub fn new(r: Mat3, t: Vec3) -> Self {
        Pose { r, t }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose { r: MAT3_ID, t }
    }

    /// Apply to a point: `R p + t`.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        add3(mat_vec(&self.r, p), self.t)
    }

    /// Frobenius distance of `R^T R` from identity.
    pub fn ortho_drift(&self) -> f64 {
        let rtr = mat_mul(&transpose(&self.r), &self.r);
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = rtr[i][j] - MAT3_ID[i][j];
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// True when `R^T R = I` and `det R = 1`, both within `tol` (Frobenius
    /// for the first, absolute for the second).
    pub fn is_valid(&self, tol: f64) -> bool {
        self.ortho_drift() <= tol && (det3(&self.r) - 1.0).abs() <= tol
    }
}

pub const MAT3_ID: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

// Small fixed-size helpers. Kept free functions so callers can use them on
// raw arrays without wrapping.

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Skew-symmetric matrix `[w]x` such that `[w]x p = w × p`.
pub fn skew(w: Vec3) -> Mat3 {
    [
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ]
}

fn mat_add(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

fn mat_scale(a: &Mat3, s: f64) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] * s;
        }
    }
    out
}

/// Exponential map se(3) -> SE(3).
///
/// `R = exp([w]x)` by Rodrigues, `t = V v` with
/// `V = I + (1-cos t)/t^2 [w]x + (t-sin t)/t^3 [w]x^2`.
/// Below [`SMALL_ANGLE`] the Taylor limits `R -> I + [w]x` and
/// `V -> I + [w]x/2 + [w]x^2/6` apply.
pub fn se3_exp(xi: &Twist) -> Pose {
    let theta = xi.angle();
    let k = skew(xi.omega);
    let k2 = mat_mul(&k, &k);

    let (r, v_mat) = if theta < SMALL_ANGLE {
        let r = mat_add(&MAT3_ID, &k);
        let v_mat = mat_add(&mat_add(&MAT3_ID, &mat_scale(&k, 0.5)), &mat_scale(&k2, 1.0 / 6.0));
        (r, v_mat)
    } else {
        let (s, c) = theta.sin_cos();
        let a = s / theta;
        let b = (1.0 - c) / (theta * theta);
        let cc = (theta - s) / (theta * theta * theta);
        let r = mat_add(&mat_add(&MAT3_ID, &mat_scale(&k, a)), &mat_scale(&k2, b));
        let v_mat = mat_add(&mat_add(&MAT3_ID, &mat_scale(&k, b)), &mat_scale(&k2, cc));
        (r, v_mat)
    };

    Pose { r, t: mat_vec(&v_mat, xi.v) }
}

/// Logarithm map SE(3) -> se(3). Returned angle lies in `[0, pi]`.
///
/// At `theta = pi` the rotation axis sign is ambiguous; the convention here
/// is deterministic: the axis is recovered from the dominant diagonal entry
/// of `R`, with that component taken positive.
pub fn se3_log(p: &Pose) -> Twist {
    let tr = p.r[0][0] + p.r[1][1] + p.r[2][2];
    let cos_theta = ((tr - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();

    let omega: Vec3 = if theta < SMALL_ANGLE {
        // vee of the skew part; first order in theta
        [
            (p.r[2][1] - p.r[1][2]) * 0.5,
            (p.r[0][2] - p.r[2][0]) * 0.5,
            (p.r[1][0] - p.r[0][1]) * 0.5,
        ]
    } else if theta > std::f64::consts::PI - 1e-6 {
        // Near pi the antisymmetric part vanishes; recover the axis from
        // R = -I + 2 a a^T via the dominant diagonal entry.
        let mut k = 0;
        for i in 1..3 {
            if p.r[i][i] > p.r[k][k] {
                k = i;
            }
        }
        let ak = ((p.r[k][k] + 1.0) * 0.5).max(0.0).sqrt();
        let mut a = [0.0; 3];
        a[k] = ak;
        if ak > 0.0 {
            for j in 0..3 {
                if j != k {
                    a[j] = (p.r[j][k] + p.r[k][j]) / (4.0 * ak);
                }
            }
        }
        let n = norm3(a);
        scale3(a, theta / n)
    } else {
        let s = theta.sin();
        let f = theta / (2.0 * s);
        [
            (p.r[2][1] - p.r[1][2]) * f,
            (p.r[0][2] - p.r[2][0]) * f,
            (p.r[1][0] - p.r[0][1]) * f,
        ]
    };

    // V^{-1} = I - [w]x/2 + D [w]x^2 with D = (1 - A/(2B))/theta^2,
    // A = sin(t)/t, B = (1-cos t)/t^2; D -> 1/12 as t -> 0.
    let k = skew(omega);
    let k2 = mat_mul(&k, &k);
    let d = if theta < SMALL_ANGLE {
        1.0 / 12.0
    } else {
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        (1.0 - a / (2.0 * b)) / (theta * theta)
    };
    let v_inv = mat_add(&mat_add(&MAT3_ID, &mat_scale(&k, -0.5)), &mat_scale(&k2, d));

    Twist { v: mat_vec(&v_inv, p.t), omega }
}

/// Homogeneous product `a * b`. Re-orthonormalizes the rotation when the
/// accumulated drift exceeds [`ORTHO_DRIFT`].
pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    let mut out = Pose {
        r: mat_mul(&a.r, &b.r),
        t: add3(mat_vec(&a.r, b.t), a.t),
    };
    if out.ortho_drift() > ORTHO_DRIFT {
        // drift can only come from accumulated rounding, never singular
        out.r = orthonormalize(&out.r).expect("composed rotation cannot be singular");
    }
    out
}

/// Inverse transform: `R' = R^T`, `t' = -R^T t`.
pub fn pose_inverse(p: &Pose) -> Pose {
    let rt = transpose(&p.r);
    Pose { r: rt, t: scale3(mat_vec(&rt, p.t), -1.0) }
}

/// Nearest rotation in Frobenius norm: `R = U diag(1, 1, det(U V^T)) V^T`
/// from the SVD `m = U S V^T`.
pub fn orthonormalize(m: &Mat3) -> Result<Mat3, GeomError> {
    let nm = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
    let svd = nm.svd(true, true);
    let sigma_min = svd.singular_values.min();
    let sigma_max = svd.singular_values.max();
    if !(sigma_min > sigma_max * 1e-12) {
        return Err(GeomError::SingularMatrix(sigma_min));
    }
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let d = (u * vt).determinant();
    let fix = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d.signum()));
    let r = u * fix * vt;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = r[(i, j)];
        }
    }
    Ok(out)
}

/// Mean squared displacement of `points` under the relative pose
/// `T_rel = target^{-1} * current`, in mm^2.
pub fn pose_error(current: &Pose, target: &Pose, points: &[Vec3]) -> Result<f64, GeomError> {
    if points.is_empty() {
        return Err(GeomError::EmptyPointSet);
    }
    let rel = pose_compose(&pose_inverse(target), current);
    let mut acc = 0.0;
    for &p in points {
        let q = rel.apply(p);
        let d = sub3(p, q);
        acc += dot3(d, d);
    }
    Ok(acc / points.len() as f64)
}

/// Rotation about z by `angle` radians.
pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotation about x by `angle` radians.
pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::expm4_oracle;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pose_dist(a: &Pose, b: &Pose) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s = s.max((a.r[i][j] - b.r[i][j]).abs());
            }
            s = s.max((a.t[i] - b.t[i]).abs());
        }
        s
    }

    fn random_twist<R: Rng>(rng: &mut R, max_angle: f64, max_trans: f64) -> Twist {
        let mut omega = [0.0; 3];
        let mut v = [0.0; 3];
        for i in 0..3 {
            omega[i] = rng.random_range(-1.0..1.0);
            if max_trans > 0.0 {
                v[i] = rng.random_range(-max_trans..max_trans);
            }
        }
        let n = norm3(omega);
        let theta = rng.random_range(0.0..max_angle);
        if n > 0.0 {
            omega = scale3(omega, theta / n);
        }
        Twist { v, omega }
    }

    #[test]
    fn exp_zero_twist_is_identity() {
        let p = se3_exp(&Twist::ZERO);
        assert!(pose_dist(&p, &Pose::IDENTITY) < 1e-15);
    }

    #[test]
    fn exp_pure_rotation_about_z() {
        let p = se3_exp(&Twist::new([0.0; 3], [0.0, 0.0, PI / 2.0]));
        let expected = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((p.r[i][j] - expected[i][j]).abs() < 1e-12);
            }
            assert!(p.t[i].abs() < 1e-12);
        }
    }

    #[test]
    fn exp_coupled_case_matches_matrix_exponential() {
        // xi = (1,0,0, 0,0,pi): R = rot-z(180 deg), t = (0, 2/pi, 0)
        let xi = Twist::new([1.0, 0.0, 0.0], [0.0, 0.0, PI]);
        let p = se3_exp(&xi);
        assert!((p.t[0] - 0.0).abs() < 1e-9);
        assert!((p.t[1] - 2.0 / PI).abs() < 1e-9);
        assert!((p.t[2] - 0.0).abs() < 1e-9);
        let oracle = expm4_oracle(&xi);
        assert!(pose_dist(&p, &oracle) < 1e-9, "dist {}", pose_dist(&p, &oracle));
    }

    #[test]
    fn exp_matches_matrix_exponential_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let xi = random_twist(&mut rng, PI - 0.01, 50.0);
            let p = se3_exp(&xi);
            let oracle = expm4_oracle(&xi);
            assert!(pose_dist(&p, &oracle) < 1e-9);
        }
    }

    #[test]
    fn log_identity_is_zero() {
        let xi = se3_log(&Pose::IDENTITY);
        assert!(xi.to_array().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn log_pure_rotation() {
        let p = Pose::new(rot_z(PI / 2.0), [0.0; 3]);
        let xi = se3_log(&p);
        assert!(norm3(xi.v) < 1e-12);
        assert!((xi.omega[2] - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_at_pi_recovers_twist() {
        let p = Pose::new(rot_z(PI), [0.0, 2.0 / PI, 0.0]);
        let xi = se3_log(&p);
        let expected = [1.0, 0.0, 0.0, 0.0, 0.0, PI];
        for (got, want) in xi.to_array().iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-9, "got {:?}", xi);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let xi = random_twist(&mut rng, PI - 0.1, 80.0);
            let back = se3_log(&se3_exp(&xi));
            for (a, b) in xi.to_array().iter().zip(back.to_array().iter()) {
                assert!((a - b).abs() < 1e-8, "{:?} vs {:?}", xi, back);
            }
        }
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = se3_exp(&random_twist(&mut rng, PI - 0.2, 30.0));
            let q = pose_compose(&Pose::IDENTITY, &p);
            assert!(pose_dist(&q, &p) < 1e-15);
            let id = pose_compose(&p, &pose_inverse(&p));
            assert!(pose_dist(&id, &Pose::IDENTITY) < 1e-9);
            // direct 4x4 inverse oracle
            let inv = pose_inverse(&p);
            let oracle_t = scale3(mat_vec(&transpose(&p.r), p.t), -1.0);
            for i in 0..3 {
                assert!((inv.t[i] - oracle_t[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compose_translations_add() {
        let a = Pose::from_translation([1.0, 2.0, 3.0]);
        let b = Pose::from_translation([4.0, 5.0, 6.0]);
        let c = pose_compose(&a, &b);
        assert_eq!(c.t, [5.0, 7.0, 9.0]);
    }

    #[test]
    fn group_closure_preserves_validity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut p = Pose::IDENTITY;
        for _ in 0..2000 {
            p = pose_compose(&p, &se3_exp(&random_twist(&mut rng, 0.5, 10.0)));
            assert!(p.is_valid(1e-9));
        }
    }

    #[test]
    fn small_angle_continuity() {
        // || exp(xi) - (I + twist-matrix) ||_F <= C ||xi||^2 for small xi
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut xi = random_twist(&mut rng, 1e-3, 1e-3);
            let n = {
                let a = xi.to_array();
                a.iter().map(|x| x * x).sum::<f64>().sqrt()
            };
            if n > 1e-3 {
                let s = 1e-3 / n;
                xi = Twist::from_array(xi.to_array().map(|x| x * s));
            }
            let p = se3_exp(&xi);
            let k = skew(xi.omega);
            let mut frob = 0.0f64;
            for i in 0..3 {
                for j in 0..3 {
                    let lin = MAT3_ID[i][j] + k[i][j];
                    frob += (p.r[i][j] - lin).powi(2);
                }
                frob += (p.t[i] - xi.v[i]).powi(2);
            }
            let norm_xi: f64 = xi.to_array().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(frob.sqrt() <= 2.0 * norm_xi * norm_xi + 1e-15);
        }
    }

    #[test]
    fn orthonormalize_fixed_point_and_scaling() {
        let r0 = rot_z(0.7);
        let r1 = orthonormalize(&r0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r0[i][j] - r1[i][j]).abs() < 1e-12);
            }
        }
        let scaled = mat_scale(&MAT3_ID, 1.001);
        let r2 = orthonormalize(&scaled).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r2[i][j] - MAT3_ID[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormalize_rejects_singular() {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        assert!(matches!(orthonormalize(&m), Err(GeomError::SingularMatrix(_))));
    }

    #[test]
    fn orthonormalize_noisy_rotation_matches_procrustes_search() {
        // Oracle: brute-force small-angle search around the noisy matrix for
        // the rotation minimizing the Frobenius distance.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r0 = se3_exp(&random_twist(&mut rng, 2.0, 0.0)).r;
        let mut noisy = r0;
        for row in noisy.iter_mut() {
            for x in row.iter_mut() {
                *x += rng.random_range(-1e-3..1e-3);
            }
        }
        let r_svd = orthonormalize(&noisy).unwrap();

        let frob = |a: &Mat3, b: &Mat3| -> f64 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += (a[i][j] - b[i][j]).powi(2);
                }
            }
            s.sqrt()
        };

        // multi-level grid search over delta rotations applied to r0
        let mut best = r0;
        let mut best_d = frob(&r0, &noisy);
        let mut center = [0.0f64; 3];
        let mut half = 3e-3;
        for _ in 0..8 {
            for ix in -3i32..=3 {
                for iy in -3i32..=3 {
                    for iz in -3i32..=3 {
                        let w = [
                            center[0] + half * ix as f64 / 3.0,
                            center[1] + half * iy as f64 / 3.0,
                            center[2] + half * iz as f64 / 3.0,
                        ];
                        let cand = mat_mul(&se3_exp(&Twist::new([0.0; 3], w)).r, &r0);
                        let d = frob(&cand, &noisy);
                        if d < best_d {
                            best_d = d;
                            best = cand;
                            center = w;
                        }
                    }
                }
            }
            half /= 3.0;
        }

        // the SVD answer must be at least as close to the noisy input as the
        // searched optimum (up to grid resolution), and near the original
        assert!(frob(&r_svd, &noisy) <= best_d + 1e-9);
        assert!(frob(&r_svd, &best) < 1e-4);
        assert!(frob(&r_svd, &r0) < 2e-3);
        assert!((det3(&r_svd) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pose_error_identity_is_zero() {
        let points = vec![[1.0, 2.0, 3.0], [-4.0, 0.5, 2.0]];
        let p = se3_exp(&Twist::new([3.0, -1.0, 2.0], [0.1, 0.2, -0.1]));
        assert!(pose_error(&p, &p, &points).unwrap() < 1e-18);
    }

    #[test]
    fn pose_error_pure_translation_is_norm_squared() {
        // T_rel = translation (3,4,0) -> 25 mm^2 for any point set
        let target = Pose::IDENTITY;
        let current = Pose::from_translation([3.0, 4.0, 0.0]);
        let points = vec![[10.0, -5.0, 2.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let m = pose_error(&current, &target, &points).unwrap();
        assert!((m - 25.0).abs() < 1e-12);
    }

    #[test]
    fn pose_error_rotation_case() {
        // T_rel = rot-z(180 deg), P = {(1,0,0)} -> point maps to (-1,0,0), 4 mm^2
        let current = Pose::new(rot_z(PI), [0.0; 3]);
        let m = pose_error(&current, &Pose::IDENTITY, &[[1.0, 0.0, 0.0]]).unwrap();
        assert!((m - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pose_error_empty_points_errors() {
        assert!(matches!(
            pose_error(&Pose::IDENTITY, &Pose::IDENTITY, &[]),
            Err(GeomError::EmptyPointSet)
        ));
    }

    #[test]
    fn pose_error_zero_iff_identity_for_spanning_points() {
        let points = vec![
            [60.0, 0.0, 0.0],
            [0.0, 60.0, 0.0],
            [0.0, 0.0, 60.0],
            [20.0, 20.0, 20.0],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let xi = random_twist(&mut rng, 0.3, 20.0);
            let p = se3_exp(&xi);
            let m = pose_error(&p, &Pose::IDENTITY, &points).unwrap();
            assert!(m >= 0.0);
            let xin: f64 = xi.to_array().iter().map(|x| x * x).sum::<f64>().sqrt();
            if xin > 1e-6 {
                assert!(m > 0.0);
            }
        }
    }
}
