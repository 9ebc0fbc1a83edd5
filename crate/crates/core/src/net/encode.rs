use super::{Descriptor, EdeNet};
use crate::error::{dim_err, Error, Result};
use crate::gpr_sim::{GprSequence, Pose};

/// Number of stride-1 windows of `window` frames over `seq`.
pub fn window_count(seq: &GprSequence, window: usize) -> Result<usize> {
    if window == 0 || window > seq.len() {
        return Err(Error::Usage(format!(
            "window of {window} frames does not fit a {}-frame sequence",
            seq.len()
        )));
    }
    Ok(seq.len() - window + 1)
}

/// Pose attributed to the window starting at `start`: its centre frame.
pub fn window_pose(seq: &GprSequence, start: usize, window: usize) -> Pose {
    seq.poses()[start + window / 2]
}

/// Descriptor of every stride-1 window, tagged with the centre-frame pose.
pub fn encode_sequence(
    seq: &GprSequence,
    window: usize,
    net: &EdeNet,
) -> Result<Vec<(Descriptor, Pose)>> {
    let n = window_count(seq, window)?;
    let cfg = &net.config;
    if window != cfg.window || seq.depth_bins() != cfg.depth_bins || seq.channels() != cfg.channels
    {
        return Err(dim_err!(
            "data windows are C×D×W = {}×{}×{window} but the network expects {}×{}×{}",
            seq.channels(),
            seq.depth_bins(),
            cfg.channels,
            cfg.depth_bins,
            cfg.window
        ));
    }
    let encoder = net.encoder()?;
    (0..n)
        .map(|start| {
            let x = seq.window(start, window)?;
            Ok((encoder.encode(&x)?, window_pose(seq, start, window)))
        })
        .collect()
}

/// Baseline: mean absolute amplitude per depth bin over the window (all
/// channels), L2-normalized. Blind to echo shape.
pub fn encode_energy_profile(seq: &GprSequence, window: usize) -> Result<Vec<(Descriptor, Pose)>> {
    let n = window_count(seq, window)?;
    let (d, c) = (seq.depth_bins(), seq.channels());
    let data = seq.frames().data();
    (0..n)
        .map(|start| {
            let mut profile = vec![0.0; d];
            for f in start..start + window {
                for (z, acc) in profile.iter_mut().enumerate() {
                    let row = &data[(f * d + z) * c..(f * d + z + 1) * c];
                    *acc += row.iter().map(|v| v.abs()).sum::<f64>();
                }
            }
            let scale = 1.0 / (window * c) as f64;
            profile.iter_mut().for_each(|v| *v *= scale);
            Ok((
                Descriptor::normalized(profile)?,
                window_pose(seq, start, window),
            ))
        })
        .collect()
}
