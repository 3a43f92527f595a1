//! Six-channel observations assembled from raster buffers, plus the binary
//! morphology helpers shared with target augmentation.
//!
//! Channel layout (CHW, `f32` in `[0, 1]`):
//! 0 ligament mask, 1 right-ridge mask, 2 left-ridge mask,
//! 3 liver silhouette (morphological boundary of the liver mask),
//! 4 normalized inverse depth inside the liver mask, 5 liver mask.

use crate::raster::{RasterBuffers, NO_FACE};
use crate::scene::{ComponentId, SceneModel};

pub const N_CHANNELS: usize = 6;
pub const CH_LIGAMENT: usize = 0;
pub const CH_RIDGE_RIGHT: usize = 1;
pub const CH_RIDGE_LEFT: usize = 2;
pub const CH_SILHOUETTE: usize = 3;
pub const CH_DEPTH: usize = 4;
pub const CH_LIVER: usize = 5;

/// Channels that count as distinct structures for pose retention
/// (the silhouette is excluded: it is derived from the liver mask).
pub const STRUCTURE_CHANNELS: [usize; 4] = [CH_LIGAMENT, CH_RIDGE_RIGHT, CH_RIDGE_LEFT, CH_LIVER];

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    /// `6 * height * width` values, channel-major.
    pub data: Vec<f32>,
}

impl Observation {
    pub fn zeros(height: usize, width: usize) -> Self {
        Observation { height, width, data: vec![0.0; N_CHANNELS * height * width] }
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn count_nonzero(&self, c: usize) -> usize {
        self.channel(c).iter().filter(|&&v| v > 0.0).count()
    }

    /// Structural invariants: binary channels are exactly 0/1, all values
    /// lie in [0, 1], and the depth channel's support is inside the liver
    /// mask. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for c in [CH_LIGAMENT, CH_RIDGE_RIGHT, CH_RIDGE_LEFT, CH_SILHOUETTE, CH_LIVER] {
            if let Some(v) = self.channel(c).iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(format!("channel {c} not binary: {v}"));
            }
        }
        let p = self.plane();
        for i in 0..p {
            let d = self.data[CH_DEPTH * p + i];
            if !(0.0..=1.0).contains(&d) {
                return Err(format!("depth value {d} outside [0,1] at {i}"));
            }
            if d > 0.0 && self.data[CH_LIVER * p + i] == 0.0 {
                return Err(format!("depth support outside liver mask at {i}"));
            }
        }
        Ok(())
    }
}

/// 3x3 binary erosion; pixels outside the image count as background.
pub fn erode3x3(mask: &[f32], height: usize, width: usize) -> Vec<f32> {
    let mut out = vec![0.0; height * width];
    for row in 0..height {
        for col in 0..width {
            let mut all = true;
            'n: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let r = row as i64 + dr;
                    let c = col as i64 + dc;
                    if r < 0 || c < 0 || r >= height as i64 || c >= width as i64
                        || mask[r as usize * width + c as usize] == 0.0
                    {
                        all = false;
                        break 'n;
                    }
                }
            }
            if all {
                out[row * width + col] = 1.0;
            }
        }
    }
    out
}

/// 3x3 binary dilation.
pub fn dilate3x3(mask: &[f32], height: usize, width: usize) -> Vec<f32> {
    let mut out = vec![0.0; height * width];
    for row in 0..height {
        for col in 0..width {
            let mut any = false;
            'n: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let r = row as i64 + dr;
                    let c = col as i64 + dc;
                    if r >= 0 && c >= 0 && r < height as i64 && c < width as i64
                        && mask[r as usize * width + c as usize] > 0.0
                    {
                        any = true;
                        break 'n;
                    }
                }
            }
            if any {
                out[row * width + col] = 1.0;
            }
        }
    }
    out
}

/// Min-max normalize `values` at `support` indices in place; a degenerate
/// range (all equal) zeroes the channel instead.
pub fn minmax_normalize(values: &mut [f32], support: &[usize]) {
    if support.is_empty() {
        return;
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &i in support {
        lo = lo.min(values[i]);
        hi = hi.max(values[i]);
    }
    if hi - lo < 1e-12 {
        for &i in support {
            values[i] = 0.0;
        }
    } else {
        let inv = 1.0 / (hi - lo);
        for &i in support {
            values[i] = ((values[i] - lo) * inv).clamp(0.0, 1.0);
        }
    }
}

/// Build the six-channel observation from raster buffers.
///
/// `clip_percentiles` optionally clamps inverse depth to the given
/// percentile range (in percent, e.g. `(1.0, 99.0)`) before min-max
/// normalization inside the liver mask.
pub fn assemble_observation(
    buf: &RasterBuffers,
    scene: &SceneModel,
    clip_percentiles: Option<(f64, f64)>,
) -> Observation {
    let mut obs = Observation::zeros(buf.height, buf.width);
    let plane = obs.plane();

    let mut liver_pixels: Vec<usize> = Vec::new();
    for i in 0..plane {
        let f = buf.pix_to_face[i];
        if f == NO_FACE {
            continue;
        }
        let comp = scene.face_component[f as usize];
        obs.data[comp.channel() * plane + i] = 1.0;
        if comp == ComponentId::Liver {
            liver_pixels.push(i);
        }
    }

    // silhouette: liver mask minus its erosion
    {
        let liver = obs.channel(CH_LIVER).to_vec();
        let eroded = erode3x3(&liver, buf.height, buf.width);
        let sil = obs.channel_mut(CH_SILHOUETTE);
        for i in 0..plane {
            sil[i] = if liver[i] > 0.0 && eroded[i] == 0.0 { 1.0 } else { 0.0 };
        }
    }

    // normalized inverse depth inside the liver mask
    if !liver_pixels.is_empty() {
        let mut inv: Vec<f32> = liver_pixels.iter().map(|&i| (1.0 / buf.depth[i]) as f32).collect();
        if let Some((lo_pct, hi_pct)) = clip_percentiles {
            let mut sorted = inv.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = |p: f64| -> f32 {
                let idx = ((p / 100.0) * (sorted.len() - 1) as f64).round() as usize;
                sorted[idx.min(sorted.len() - 1)]
            };
            let (lo, hi) = (rank(lo_pct), rank(hi_pct));
            for v in inv.iter_mut() {
                *v = v.clamp(lo, hi);
            }
        }
        let depth = obs.channel_mut(CH_DEPTH);
        for (k, &i) in liver_pixels.iter().enumerate() {
            depth[i] = inv[k];
        }
        minmax_normalize(depth, &liver_pixels);
    }

    debug_assert!(obs.check_invariants().is_ok());
    obs
}

/// Number of channels among {ligament, right ridge, left ridge, liver}
/// with at least `min_pixels` set pixels.
pub fn count_visible_structures(obs: &Observation, min_pixels: usize) -> usize {
    STRUCTURE_CHANNELS
        .iter()
        .filter(|&&c| obs.count_nonzero(c) >= min_pixels)
        .count()
}
