//! Depth-stretch measurement shared by the simulator tests and acceptance.
#![allow(dead_code)]

use edenet::gpr_sim::{
    peak_position, random_scene, render_bscan, straight_trajectory, MediumProfile, Reflector,
    SimConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sparse scenes with a narrow beam so most columns see a single echo.
pub fn stretch_config() -> SimConfig {
    SimConfig {
        depth_bins: 128,
        channels: 1,
        time_bin: 0.4,
        beamwidth: 0.3,
        reflector_density: 0.15,
        max_depth: 1.5,
        ..SimConfig::default()
    }
}

pub struct StretchResult {
    /// Largest `|peak(ε) − peak(4)·√(ε/4)|` in bins over all compared columns.
    pub max_deviation: f64,
    pub columns: usize,
}

/// Renders one random scene at ε = 4 and at `epsilon`, and compares the
/// echo peak of every column that sees exactly one reflector.
pub fn depth_stretch(scene_seed: u64, epsilon: f64) -> StretchResult {
    let cfg = stretch_config();
    let frames = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    let scene = random_scene(&mut rng, (frames - 1) as f64 * cfg.frame_spacing, &cfg);
    let traj = straight_trajectory(frames, cfg.frame_spacing);
    let base = render_bscan(&scene, &MediumProfile::Uniform(4.0), &cfg, &traj).unwrap();
    let other = render_bscan(&scene, &MediumProfile::Uniform(epsilon), &cfg, &traj).unwrap();
    let visible = |x: f64| -> Vec<&Reflector> {
        scene
            .iter()
            .filter(|r| (x - r.along_track).abs() <= r.cone_half_width(cfg.beamwidth))
            .collect()
    };
    let scale = (epsilon / 4.0).sqrt();
    let mut out = StretchResult {
        max_deviation: 0.0,
        columns: 0,
    };
    for f in 0..frames {
        if visible(f as f64 * cfg.frame_spacing).len() != 1 {
            continue;
        }
        let (Some(a), Some(b)) = (
            peak_position(&base.trace(f, 0)),
            peak_position(&other.trace(f, 0)),
        ) else {
            continue;
        };
        out.max_deviation = out.max_deviation.max((b - a * scale).abs());
        out.columns += 1;
    }
    out
}
