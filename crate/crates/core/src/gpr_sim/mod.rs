//! Synthetic multi-channel B-scan generation.
//!
//! Buried point reflectors produce two-way travel-time hyperbolas
//! `t = (2/v)·√(d0² + x²)` with `v = c/√ε_r`; a Ricker wavelet is deposited
//! at that time in every frame whose beam cone covers the reflector. Changing
//! `ε_r` stretches every echo along the depth axis by `√ε_r` while leaving the
//! shape of the pattern intact.

mod dataset;
mod interference;

pub use dataset::{make_dataset, random_scene, straight_trajectory, Dataset, UTM_ORIGIN};
pub use interference::{add_interference, InterferenceKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Speed of light in vacuum, metres per nanosecond.
pub const SPEED_OF_LIGHT: f64 = 0.2998;
/// Cross-track spacing between adjacent radar channels, metres.
pub const CHANNEL_SPACING: f64 = 0.01;
/// Wavelet support, in multiples of its width.
const WAVELET_SUPPORT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    /// Metres along the survey line.
    pub along_track: f64,
    /// Depth of the reflector, metres.
    pub depth: f64,
    /// Radius, metres.
    pub radius: f64,
    pub reflectivity: f64,
}

impl Reflector {
    pub fn validate(&self) -> Result<()> {
        let ok = self.depth > 0.0
            && self.radius >= 0.0
            && self.reflectivity > 0.0
            && self.reflectivity <= 1.0
            && self.along_track.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid reflector {self:?}")))
        }
    }

    /// Half-width of the along-track interval over which the beam sees it.
    pub fn cone_half_width(&self, beamwidth: f64) -> f64 {
        (self.depth + 2.0 * self.radius) * beamwidth.tan()
    }
}

/// Relative dielectric constant of the subsurface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumProfile {
    Uniform(f64),
    /// `(start, ε_r)` pairs sorted by start; each applies from its start
    /// position (metres along track) until the next one.
    Piecewise(Vec<(f64, f64)>),
}

impl MediumProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |e: f64| !(e >= 1.0 && e.is_finite());
        match self {
            Self::Uniform(e) if bad(*e) => Err(Error::Domain(format!("ε_r = {e} < 1"))),
            Self::Piecewise(segs) if segs.is_empty() => {
                Err(Error::Domain("piecewise medium without segments".into()))
            }
            Self::Piecewise(segs) => {
                if let Some((_, e)) = segs.iter().find(|(_, e)| bad(*e)) {
                    return Err(Error::Domain(format!("ε_r = {e} < 1")));
                }
                if segs.windows(2).any(|w| w[1].0 < w[0].0) {
                    return Err(Error::Domain("medium segments must be sorted".into()));
                }
                Ok(())
            }
            Self::Uniform(_) => Ok(()),
        }
    }

    /// ε_r under the antenna at along-track position `x`.
    pub fn epsilon_at(&self, x: f64) -> f64 {
        match self {
            Self::Uniform(e) => *e,
            Self::Piecewise(segs) => {
                segs.iter()
                    .take_while(|(start, _)| *start <= x)
                    .last()
                    .unwrap_or(&segs[0])
                    .1
            }
        }
    }
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Wave speed in vacuum, m/ns.
    pub c: f64,
    /// Nanoseconds per depth sample.
    pub time_bin: f64,
    /// Metres between consecutive frames.
    pub frame_spacing: f64,
    pub depth_bins: usize,
    pub channels: usize,
    /// Half-angle of the antenna beam, radians.
    pub beamwidth: f64,
    /// Ricker width parameter, nanoseconds.
    pub wavelet_width: f64,
    /// Receiver noise added to every rendered sequence, relative to its RMS.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Reflectors per metre of track in generated scenes.
    pub reflector_density: f64,
    /// Deepest reflector placed by the scene generator, metres.
    pub max_depth: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            c: SPEED_OF_LIGHT,
            time_bin: 0.4,
            frame_spacing: 1.0,
            depth_bins: 64,
            channels: 2,
            beamwidth: 1.0,
            wavelet_width: 1.0,
            noise_sigma: 0.0,
            seed: 0,
            reflector_density: 1.0,
            max_depth: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c", self.c),
            ("time_bin", self.time_bin),
            ("frame_spacing", self.frame_spacing),
            ("beamwidth", self.beamwidth),
            ("wavelet_width", self.wavelet_width),
            ("reflector_density", self.reflector_density),
            ("max_depth", self.max_depth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "sim.{name} must be positive, got {v}"
                )));
            }
        }
        if self.beamwidth >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Config("sim.beamwidth must be below π/2".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("sim.noise_sigma must be non-negative".into()));
        }
        if self.depth_bins == 0 || self.channels == 0 {
            return Err(Error::Config(
                "sim.depth_bins and sim.channels must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    /// Two-way time covered by the depth axis, ns.
    pub fn time_window(&self) -> f64 {
        self.depth_bins as f64 * self.time_bin
    }
}

/// Planar position of a frame (UTM easting, northing), metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub utm_x: f64,
    pub utm_y: f64,
}

impl Pose {
    pub fn new(utm_x: f64, utm_y: f64) -> Self {
        Self { utm_x, utm_y }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.utm_x - other.utm_x).hypot(self.utm_y - other.utm_y)
    }
}

/// `S×D×C` echo volume with one pose per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GprSequence {
    frames: Tensor,
    poses: Vec<Pose>,
}

impl GprSequence {
    pub fn new(frames: Tensor, poses: Vec<Pose>) -> Result<Self> {
        let [s, _, _] = *frames.shape() else {
            return Err(Error::Dimension(format!(
                "frames must be S×D×C, got {:?}",
                frames.shape()
            )));
        };
        if poses.len() != s {
            return Err(Error::Dimension(format!(
                "{s} frames but {} poses",
                poses.len()
            )));
        }
        frames.ensure_finite("echo intensities")?;
        Ok(Self { frames, poses })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn depth_bins(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn at(&self, frame: usize, depth: usize, channel: usize) -> f64 {
        let (d, c) = (self.depth_bins(), self.channels());
        self.frames.data()[(frame * d + depth) * c + channel]
    }

    /// One A-scan: the depth profile of `channel` in `frame`.
    pub fn trace(&self, frame: usize, channel: usize) -> Vec<f64> {
        (0..self.depth_bins())
            .map(|d| self.at(frame, d, channel))
            .collect()
    }

    /// Frames `start..start+len` as a `C×D×len` image stack (channels as
    /// image channels, depth down the rows, along-track across the columns).
    pub fn window(&self, start: usize, len: usize) -> Result<Tensor> {
        if len == 0 || start + len > self.len() {
            return Err(Error::Usage(format!(
                "window {start}..{} outside a sequence of {} frames",
                start + len,
                self.len()
            )));
        }
        let (d, c) = (self.depth_bins(), self.channels());
        let src = self.frames.data();
        let mut out = vec![0.0; c * d * len];
        for t in 0..len {
            for z in 0..d {
                let row = ((start + t) * d + z) * c;
                for ch in 0..c {
                    out[(ch * d + z) * len + t] = src[row + ch];
                }
            }
        }
        Tensor::new(&[c, d, len], out)
    }

    pub fn rms(&self) -> f64 {
        let n = self.frames.len() as f64;
        (self.frames.data().iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }

    pub(crate) fn with_frames(&self, frames: Tensor) -> Self {
        Self {
            frames,
            poses: self.poses.clone(),
        }
    }
}

/// Two-way travel time (ns) to a point reflector at depth `depth`, seen from
/// a horizontal offset `x_offset`.
pub fn travel_time(x_offset: f64, depth: f64, epsilon_r: f64, c: f64) -> Result<f64> {
    if !(epsilon_r >= 1.0) {
        return Err(Error::Domain(format!("ε_r = {epsilon_r} must be ≥ 1")));
    }
    if !(depth > 0.0) || !(c > 0.0) {
        return Err(Error::Domain(format!(
            "depth {depth} and wave speed {c} must be positive"
        )));
    }
    let v = c / epsilon_r.sqrt();
    Ok(2.0 / v * depth.hypot(x_offset))
}

/// Ricker wavelet with width parameter `width`, unit peak at `tau = 0`.
pub fn ricker(tau: f64, width: f64) -> f64 {
    let u = (tau / width).powi(2);
    (1.0 - u) * (-u / 2.0).exp()
}

/// Cumulative along-track distance of each pose from the first.
pub fn along_track_positions(trajectory: &[Pose]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(trajectory.len());
    for (i, p) in trajectory.iter().enumerate() {
        if i > 0 {
            acc += trajectory[i - 1].distance(p);
        }
        out.push(acc);
    }
    out
}

/// Lateral offset of channel `ch` from the array centre, metres.
pub fn channel_offset(ch: usize, channels: usize) -> f64 {
    (ch as f64 - (channels as f64 - 1.0) / 2.0) * CHANNEL_SPACING
}

/// Renders `scene` along `trajectory`.
///
/// Echoes later than the depth window are clipped without error. Output is
/// rounded to `f32` precision so it survives a file round trip unchanged.
pub fn render_bscan(
    scene: &[Reflector],
    medium: &MediumProfile,
    cfg: &SimConfig,
    trajectory: &[Pose],
) -> Result<GprSequence> {
    cfg.validate()?;
    medium.validate()?;
    if trajectory.is_empty() {
        return Err(Error::Usage("empty trajectory".into()));
    }
    for r in scene {
        r.validate()?;
    }
    let (s, d, c) = (trajectory.len(), cfg.depth_bins, cfg.channels);
    let positions = along_track_positions(trajectory);
    let mut data = vec![0.0; s * d * c];
    let support = WAVELET_SUPPORT * cfg.wavelet_width;
    for (f, &x_f) in positions.iter().enumerate() {
        let eps = medium.epsilon_at(x_f);
        for r in scene {
            let dx = x_f - r.along_track;
            if dx.abs() > r.cone_half_width(cfg.beamwidth) {
                continue;
            }
            for ch in 0..c {
                let offset = dx.hypot(channel_offset(ch, c));
                let t = travel_time(offset, r.depth, eps, cfg.c)?;
                let amplitude = r.reflectivity / (1.0 + t);
                let lo = ((t - support) / cfg.time_bin).ceil().max(0.0) as usize;
                let hi = ((t + support) / cfg.time_bin).floor();
                if hi < 0.0 {
                    continue;
                }
                let hi = (hi as usize).min(d.saturating_sub(1));
                for bin in lo..=hi {
                    let tau = bin as f64 * cfg.time_bin - t;
                    data[(f * d + bin) * c + ch] += amplitude * ricker(tau, cfg.wavelet_width);
                }
            }
        }
    }
    let mut frames = Tensor::new(&[s, d, c], data)?;
    frames.round_to_f32();
    GprSequence::new(frames, trajectory.to_vec())
}

/// Sub-bin position of the strongest sample in a trace, refined by a
/// parabola through its neighbours. `None` for an all-zero trace.
pub fn peak_position(trace: &[f64]) -> Option<f64> {
    let (imax, vmax) = trace
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (i, v)| if v > best.1 { (i, v) } else { best },
        );
    if vmax == 0.0 {
        return None;
    }
    if imax == 0 || imax + 1 == trace.len() {
        return Some(imax as f64);
    }
    let (a, b, c) = (
        trace[imax - 1].abs(),
        trace[imax].abs(),
        trace[imax + 1].abs(),
    );
    let denom = a - 2.0 * b + c;
    if denom.abs() < f64::EPSILON {
        return Some(imax as f64);
    }
    Some(imax as f64 + 0.5 * (a - c) / denom)
}
