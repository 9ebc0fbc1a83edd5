use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GprSequence;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceKind {
    /// i.i.d. noise with σ = level·rms.
    Gaussian,
    /// Horizontal bands spanning every frame at a few random depths.
    Stripe,
    /// Random along-track spans zeroed or replaced with noise; `level` is the
    /// fraction of frames affected.
    Burst,
}

impl FromStr for InterferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "stripe" => Ok(Self::Stripe),
            "burst" => Ok(Self::Burst),
            other => Err(Error::Usage(format!(
                "unknown interference kind {other:?} (expected gaussian, stripe or burst)"
            ))),
        }
    }
}

/// Corrupts `seq` deterministically under `seed`. Level 0 is a no-op.
pub fn add_interference(
    seq: &GprSequence,
    kind: InterferenceKind,
    level: f64,
    seed: u64,
) -> Result<GprSequence> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::Usage(format!(
            "interference level {level} must be ≥ 0"
        )));
    }
    if level == 0.0 {
        return Ok(seq.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rms = seq.rms();
    let (s, d, c) = (seq.len(), seq.depth_bins(), seq.channels());
    let mut frames = seq.frames().clone();
    let data = frames.data_mut();
    match kind {
        InterferenceKind::Gaussian => {
            let sigma = level * rms;
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            }
        }
        InterferenceKind::Stripe => {
            let bands = (d / 16).max(1);
            for _ in 0..bands {
                let top = rng.gen_range(0..d);
                let thickness = rng.gen_range(1..=3usize);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let amp = sign * level * rms * rng.gen_range(1.0..2.0);
                for f in 0..s {
                    for z in top..(top + thickness).min(d) {
                        for ch in 0..c {
                            data[(f * d + z) * c + ch] += amp;
                        }
                    }
                }
            }
        }
        InterferenceKind::Burst => {
            let target = ((level.min(1.0) * s as f64).round() as usize).max(1);
            let max_span = (s / 10).max(1);
            let mut hit = vec![false; s];
            let noise = Normal::new(0.0, rms.max(f64::MIN_POSITIVE)).expect("finite sigma");
            while hit.iter().filter(|&&h| h).count() < target {
                let len = rng.gen_range(1..=max_span);
                let start = rng.gen_range(0..s);
                let zero = rng.gen_bool(0.5);
                for f in start..(start + len).min(s) {
                    hit[f] = true;
                    for v in &mut data[f * d * c..(f + 1) * d * c] {
                        *v = if zero { 0.0 } else { noise.sample(&mut rng) };
                    }
                }
            }
        }
    }
    frames.round_to_f32();
    Ok(seq.with_frames(frames))
}
