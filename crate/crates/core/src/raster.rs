//! CPU z-buffer rasterizer over labeled triangle meshes.
//!
//! Conventions (fixed so oracle tests are bit-exact):
//! - pixel `(row i, col j)` samples the image plane at `(j + 0.5, i + 0.5)`
//! - back-face culling is disabled; both windings rasterize
//! - a face with any camera-frame vertex at `z <= Z_NEAR` is dropped whole
//! - the z-buffer keeps the nearest face; exact depth ties keep the lower
//!   face index
//! - depth is interpolated perspective-correct (linear in 1/z), all of it
//!   in `f64`

use crate::camera::CameraIntrinsics;
use crate::scene::SceneModel;
use crate::se3::Pose;

/// Near-plane distance in mm; geometry closer than this is clipped.
pub const Z_NEAR: f64 = 0.1;

/// Sentinel for pixels not covered by any face.
pub const NO_FACE: i32 = -1;

/// Depth and face-index buffers from a single rasterization pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterBuffers {
    pub width: usize,
    pub height: usize,
    /// Depth in mm, `f64::INFINITY` where no face is visible.
    pub depth: Vec<f64>,
    /// Winning face index per pixel, [`NO_FACE`] where empty.
    pub pix_to_face: Vec<i32>,
}

impl RasterBuffers {
    pub fn empty(width: usize, height: usize) -> Self {
        RasterBuffers {
            width,
            height,
            depth: vec![f64::INFINITY; width * height],
            pix_to_face: vec![NO_FACE; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn covered_pixels(&self) -> usize {
        self.pix_to_face.iter().filter(|&&f| f != NO_FACE).count()
    }
}

/// Signed parallelogram area of `(b - a) x (p - a)` in screen space.
#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Rasterize `scene` under `pose` (model -> camera) with intrinsics `k`.
/// An empty result (no visible face) is valid output.
pub fn rasterize(scene: &SceneModel, pose: &Pose, k: &CameraIntrinsics) -> RasterBuffers {
    let width = k.width as usize;
    let height = k.height as usize;
    let mut buf = RasterBuffers::empty(width, height);

    // camera-frame vertices once per pass
    let cam: Vec<[f64; 3]> = scene.vertices.iter().map(|&v| pose.apply(v)).collect();

    for (fi, face) in scene.faces.iter().enumerate() {
        let p0 = cam[face[0] as usize];
        let p1 = cam[face[1] as usize];
        let p2 = cam[face[2] as usize];
        if p0[2] <= Z_NEAR || p1[2] <= Z_NEAR || p2[2] <= Z_NEAR {
            continue;
        }
        let s0 = k.project(p0);
        let s1 = k.project(p1);
        let s2 = k.project(p2);

        let area = edge(s0, s1, s2);
        if area == 0.0 {
            continue; // projects to a line
        }

        let min_x = s0[0].min(s1[0]).min(s2[0]);
        let max_x = s0[0].max(s1[0]).max(s2[0]);
        let min_y = s0[1].min(s1[1]).min(s2[1]);
        let max_y = s0[1].max(s1[1]).max(s2[1]);
        if max_x < 0.5 || max_y < 0.5 || min_x > width as f64 - 0.5 || min_y > height as f64 - 0.5 {
            continue;
        }
        // pixel centers at (col + 0.5, row + 0.5)
        let col_lo = ((min_x - 0.5).ceil().max(0.0)) as usize;
        let col_hi = ((max_x - 0.5).floor()).min(width as f64 - 1.0) as usize;
        let row_lo = ((min_y - 0.5).ceil().max(0.0)) as usize;
        let row_hi = ((max_y - 0.5).floor()).min(height as f64 - 1.0) as usize;

        let inv_z = [1.0 / p0[2], 1.0 / p1[2], 1.0 / p2[2]];
        let inv_area = 1.0 / area;

        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let p = [col as f64 + 0.5, row as f64 + 0.5];
                let w0 = edge(s1, s2, p);
                let w1 = edge(s2, s0, p);
                let w2 = edge(s0, s1, p);
                let inside = if area > 0.0 {
                    w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0
                } else {
                    w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0
                };
                if !inside {
                    continue;
                }
                let l0 = w0 * inv_area;
                let l1 = w1 * inv_area;
                let l2 = w2 * inv_area;
                let z = 1.0 / (l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2]);
                let at = buf.idx(row, col);
                if z < buf.depth[at] {
                    buf.depth[at] = z;
                    buf.pix_to_face[at] = fi as i32;
                }
            }
        }
    }
    buf
}
