//! Independent reference implementations used only by tests and the
//! acceptance suite. Nothing here shares code with the paths it checks:
//! the matrix exponential is a scaled power series, ray casting is
//! Moller-Trumbore per pixel, and gradients come from central finite
//! differences.

use crate::camera::CameraIntrinsics;
use crate::raster::Z_NEAR;
use crate::se3::{skew, Pose, Twist, Vec3};

/// exp of the 4x4 twist matrix by scaling-and-squaring series summation.
pub fn expm4_oracle(xi: &Twist) -> Pose {
    let mut a = [[0.0f64; 4]; 4];
    let k = skew(xi.omega);
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = k[i][j];
        }
        a[i][3] = xi.v[i];
    }
    let s = 10u32;
    let scale = 1.0 / f64::from(1u32 << s);
    for row in a.iter_mut() {
        for x in row.iter_mut() {
            *x *= scale;
        }
    }
    let mut result = [[0.0f64; 4]; 4];
    for (i, row) in result.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut term = result;
    for n in 1..30 {
        term = mul4(&term, &a);
        for row in term.iter_mut() {
            for x in row.iter_mut() {
                *x /= n as f64;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = mul4(&result, &result);
    }
    let mut r = [[0.0; 3]; 3];
    let mut t = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = result[i][j];
        }
        t[i] = result[i][3];
    }
    Pose { r, t }
}

fn mul4(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for (k, bk) in b.iter().enumerate() {
                out[i][j] += a[i][k] * bk[j];
            }
        }
    }
    out
}

/// Result of casting the pixel ray against every face.
#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub face: usize,
    /// Depth of the nearest hit, mm.
    pub z: f64,
    /// Depth margin to the second-nearest hit (`f64::INFINITY` if unique).
    pub margin: f64,
    /// Smallest barycentric coordinate of the winning hit; tiny values
    /// mean the ray grazes a triangle edge.
    pub min_bary: f64,
}

/// Moller-Trumbore intersection of the ray through pixel `(row, col)`
/// (center convention `(col + 0.5, row + 0.5)`) against camera-frame
/// triangles. Faces with any vertex at `z <= Z_NEAR` are skipped, matching
/// the rasterizer's clipping contract.
pub fn raycast_pixel(
    cam_vertices: &[[f64; 3]],
    faces: &[[u32; 3]],
    k: &CameraIntrinsics,
    row: usize,
    col: usize,
) -> Option<RayHit> {
    let dir = [
        (col as f64 + 0.5 - k.cx) / k.fx,
        (row as f64 + 0.5 - k.cy) / k.fy,
        1.0,
    ];
    let mut best: Option<RayHit> = None;
    let mut second_z = f64::INFINITY;

    for (fi, face) in faces.iter().enumerate() {
        let v0 = cam_vertices[face[0] as usize];
        let v1 = cam_vertices[face[1] as usize];
        let v2 = cam_vertices[face[2] as usize];
        if v0[2] <= Z_NEAR || v1[2] <= Z_NEAR || v2[2] <= Z_NEAR {
            continue;
        }
        let e1 = sub(v1, v0);
        let e2 = sub(v2, v0);
        let p = cross(dir, e2);
        let det = dot(e1, p);
        if det.abs() < 1e-14 {
            continue;
        }
        let inv_det = 1.0 / det;
        // ray origin is the camera center (0,0,0)
        let tvec = [-v0[0], -v0[1], -v0[2]];
        let u = dot(tvec, p) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let q = cross(tvec, e1);
        let v = dot(dir, q) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        let t = dot(e2, q) * inv_det;
        // with dir.z = 1 the parameter t equals the hit depth
        if t <= Z_NEAR {
            continue;
        }
        let min_bary = u.min(v).min(1.0 - u - v);
        match &mut best {
            Some(b) if t < b.z => {
                second_z = b.z;
                *b = RayHit { face: fi, z: t, margin: 0.0, min_bary };
            }
            Some(b) => {
                if t < second_z {
                    second_z = t;
                }
                let _ = b;
            }
            None => best = Some(RayHit { face: fi, z: t, margin: 0.0, min_bary }),
        }
    }
    best.map(|mut b| {
        b.margin = second_z - b.z;
        b
    })
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Central finite difference of `f` along the `i`-th coordinate of `x`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Relative error between an analytic directional derivative and its
/// finite-difference estimate, with an absolute floor for near-zero pairs.
pub fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-9 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}
