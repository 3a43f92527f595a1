//! Target-view augmentation: per-channel morphology, random erasing,
//! synthetic depth occlusion with re-normalization, and the optional
//! circular field-of-view mask.

use super::EnvConfig;
use crate::obs::{dilate3x3, erode3x3, minmax_normalize, Observation, CH_DEPTH, CH_LIVER};
use rand::Rng;

/// Augmentation strengths. Setting every count to zero (and the fov mask
/// off) makes [`augment_target`] the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugConfig {
    /// Max dilation/erosion iterations on the four semantic mask channels.
    pub morph_max: u32,
    /// Max erased rectangles per semantic channel.
    pub erase_max: u32,
    /// Erased-rectangle area fraction range.
    pub erase_frac_min: f64,
    pub erase_frac_max: f64,
    /// Max zeroed occlusion rectangles on the depth channel.
    pub depth_occ_max: u32,
    /// Max morphology iterations on the liver mask channel.
    pub mask_morph_max: u32,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            morph_max: 2,
            erase_max: 3,
            erase_frac_min: 0.02,
            erase_frac_max: 0.10,
            depth_occ_max: 2,
            mask_morph_max: 2,
        }
    }
}

impl AugConfig {
    /// Identity augmentation.
    pub fn disabled() -> Self {
        AugConfig {
            morph_max: 0,
            erase_max: 0,
            erase_frac_min: 0.02,
            erase_frac_max: 0.10,
            depth_occ_max: 0,
            mask_morph_max: 0,
        }
    }
}

/// Fov disk radius as a fraction of the short image side.
pub const FOV_RADIUS_FRAC: f64 = 0.48;

fn random_rect<R: Rng>(rng: &mut R, h: usize, w: usize, frac_min: f64, frac_max: f64) -> (usize, usize, usize, usize) {
    let area = rng.random_range(frac_min..frac_max) * (h * w) as f64;
    let aspect = rng.random_range(0.5..2.0);
    let rw = ((area * aspect).sqrt().round() as usize).clamp(1, w);
    let rh = ((area / aspect).sqrt().round() as usize).clamp(1, h);
    let col = rng.random_range(0..=(w - rw));
    let row = rng.random_range(0..=(h - rh));
    (row, col, rh, rw)
}

fn zero_rect(plane: &mut [f32], w: usize, rect: (usize, usize, usize, usize)) {
    let (row, col, rh, rw) = rect;
    for r in row..row + rh {
        plane[r * w + col..r * w + col + rw].fill(0.0);
    }
}

fn morph_iterations<R: Rng>(plane: &mut Vec<f32>, h: usize, w: usize, iters: u32, rng: &mut R) {
    for _ in 0..iters {
        let dilate: bool = rng.random();
        *plane = if dilate { dilate3x3(plane, h, w) } else { erode3x3(plane, h, w) };
    }
}

/// Augment a rendered target observation. The observation invariants hold
/// on the output: binary channels stay binary, and the depth channel is
/// re-normalized over its remaining support inside the (augmented) liver
/// mask.
pub fn augment_target<R: Rng>(obs: &Observation, rng: &mut R, cfg: &EnvConfig) -> Observation {
    let mut out = obs.clone();
    let (h, w) = (out.height, out.width);
    let aug = &cfg.aug;

    // channels 1-4: morphology then random erasing
    for c in 0..4 {
        let mut plane = out.channel(c).to_vec();
        let iters = if aug.morph_max > 0 { rng.random_range(0..=aug.morph_max) } else { 0 };
        morph_iterations(&mut plane, h, w, iters, rng);
        let erases = if aug.erase_max > 0 { rng.random_range(0..=aug.erase_max) } else { 0 };
        for _ in 0..erases {
            let rect = random_rect(rng, h, w, aug.erase_frac_min, aug.erase_frac_max);
            zero_rect(&mut plane, w, rect);
        }
        out.channel_mut(c).copy_from_slice(&plane);
    }

    // channel 5: synthetic occlusion rectangles
    let mut occluded = vec![false; h * w];
    let occs = if aug.depth_occ_max > 0 { rng.random_range(0..=aug.depth_occ_max) } else { 0 };
    for _ in 0..occs {
        let (row, col, rh, rw) = random_rect(rng, h, w, aug.erase_frac_min, aug.erase_frac_max);
        for r in row..row + rh {
            for cc in col..col + rw {
                occluded[r * w + cc] = true;
            }
        }
    }

    // channel 6: additional morphology on the liver mask
    {
        let mut plane = out.channel(CH_LIVER).to_vec();
        let iters = if aug.mask_morph_max > 0 { rng.random_range(0..=aug.mask_morph_max) } else { 0 };
        morph_iterations(&mut plane, h, w, iters, rng);
        out.channel_mut(CH_LIVER).copy_from_slice(&plane);
    }

    // optional circular field-of-view mask over every channel
    if cfg.fov_mask {
        let radius = FOV_RADIUS_FRAC * h.min(w) as f64;
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        for c in 0..crate::obs::N_CHANNELS {
            let plane = out.channel_mut(c);
            for row in 0..h {
                for col in 0..w {
                    let dx = col as f64 + 0.5 - cx;
                    let dy = row as f64 + 0.5 - cy;
                    if dx * dx + dy * dy > radius * radius {
                        plane[row * w + col] = 0.0;
                    }
                }
            }
        }
    }

    // depth support = augmented liver mask minus occlusions; zero the rest
    // and re-min-max over what remains
    {
        let liver = out.channel(CH_LIVER).to_vec();
        let plane_len = h * w;
        let mut support = Vec::new();
        let depth = out.channel_mut(CH_DEPTH);
        for i in 0..plane_len {
            if liver[i] > 0.0 && !occluded[i] {
                support.push(i);
            } else {
                depth[i] = 0.0;
            }
        }
        minmax_normalize(depth, &support);
    }

    debug_assert!(out.check_invariants().is_ok());
    out
}
