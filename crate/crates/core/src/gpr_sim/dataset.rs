use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    add_interference, render_bscan, GprSequence, InterferenceKind, MediumProfile, Pose, Reflector,
    SimConfig,
};
use crate::error::{Error, Result};

/// Easting/northing of the first frame of generated trajectories.
pub const UTM_ORIGIN: (f64, f64) = (587_000.0, 4_477_000.0);

/// A map survey and a revisit of the same track.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub scene: Vec<Reflector>,
    pub map: GprSequence,
    pub queries: GprSequence,
}

/// `n` poses heading east from [`UTM_ORIGIN`], `spacing` metres apart.
pub fn straight_trajectory(n: usize, spacing: f64) -> Vec<Pose> {
    (0..n)
        .map(|i| Pose::new(UTM_ORIGIN.0 + i as f64 * spacing, UTM_ORIGIN.1))
        .collect()
}

/// Uniformly scattered reflectors covering `[0, length]` plus one beam cone
/// on either side.
pub fn random_scene(rng: &mut impl Rng, length: f64, cfg: &SimConfig) -> Vec<Reflector> {
    let pad = cfg.max_depth * cfg.beamwidth.tan();
    let span = length + 2.0 * pad;
    let count = (span * cfg.reflector_density).round().max(1.0) as usize;
    let min_depth = (0.1f64).min(cfg.max_depth / 2.0);
    let mut scene: Vec<Reflector> = (0..count)
        .map(|_| Reflector {
            along_track: rng.gen_range(-pad..length + pad),
            depth: rng.gen_range(min_depth..=cfg.max_depth),
            radius: rng.gen_range(0.0..0.1),
            reflectivity: rng.gen_range(0.3..=1.0),
        })
        .collect();
    scene.sort_by(|a, b| a.along_track.total_cmp(&b.along_track));
    scene
}

/// One random scene surveyed twice along the same track: once at
/// `map_epsilon`, once at `query_epsilon` with Gaussian interference of
/// relative level `query_noise`. Frame `i` of both sequences shares pose `i`.
pub fn make_dataset(
    scene_seed: u64,
    n_locations: usize,
    cfg: &SimConfig,
    map_epsilon: f64,
    query_epsilon: f64,
    query_noise: f64,
) -> Result<Dataset> {
    cfg.validate()?;
    if n_locations < 2 {
        return Err(Error::Config(format!(
            "n_locations must be ≥ 2, got {n_locations}"
        )));
    }
    if !(query_noise >= 0.0) {
        return Err(Error::Config("query_noise must be non-negative".into()));
    }
    let trajectory = straight_trajectory(n_locations, cfg.frame_spacing);
    let length = (n_locations - 1) as f64 * cfg.frame_spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    let scene = random_scene(&mut rng, length, cfg);

    let map_medium = MediumProfile::Uniform(map_epsilon);
    let query_medium = MediumProfile::Uniform(query_epsilon);
    let mut map = render_bscan(&scene, &map_medium, cfg, &trajectory)?;
    let mut queries = render_bscan(&scene, &query_medium, cfg, &trajectory)?;

    let noise_seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ scene_seed;
    if cfg.noise_sigma > 0.0 {
        map = add_interference(
            &map,
            InterferenceKind::Gaussian,
            cfg.noise_sigma,
            noise_seed,
        )?;
        queries = add_interference(
            &queries,
            InterferenceKind::Gaussian,
            cfg.noise_sigma,
            noise_seed.wrapping_add(1),
        )?;
    }
    queries = add_interference(
        &queries,
        InterferenceKind::Gaussian,
        query_noise,
        noise_seed.wrapping_add(2),
    )?;
    Ok(Dataset {
        scene,
        map,
        queries,
    })
}
