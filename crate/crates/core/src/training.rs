//! Triplet training with geographic mining.
//!
//! Positives come from map windows within `geo_radius` of the query pose
//! (the one nearest in embedding space wins); negatives are drawn uniformly
//! from map windows farther away. The loss is the hinged triplet
//! `Σ_n max(0, δ + d(q,p) − d(q,n))` with Euclidean `d`.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{dim_err, Error, Result};
use crate::formats::Ntc;
use crate::gpr_sim::{GprSequence, Pose};
use crate::net::{window_pose, Descriptor, EdeNet, NetConfig, NetTrace};
use crate::numerics::{grad_check, GradCheckReport, ParamSet, Probe, Tensor};
use crate::retrieval::{build_index, recall_at_k};

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Triplet margin `δ`.
    pub margin: f64,
    pub learning_rate: f64,
    /// Negatives per query.
    pub negatives: usize,
    pub epochs: usize,
    /// Queries per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Windows closer than this (metres) are positives, farther ones
    /// negatives.
    pub geo_radius: f64,
    /// Leading fraction of the track used for training; the rest validates.
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.3,
            learning_rate: 1e-4,
            negatives: 10,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            geo_radius: 3.0,
            train_fraction: 0.7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("margin", self.margin),
            ("learning_rate", self.learning_rate),
            ("geo_radius", self.geo_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "train.{name} must be positive, got {v}"
                )));
            }
        }
        if self.negatives == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "train.negatives and train.batch_size must be ≥ 1".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train.train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Index of the candidate nearest to `query` in embedding space; the
/// lowest index wins ties.
pub fn mine_positive(query: &Descriptor, candidates: &[(Descriptor, Pose)]) -> Result<usize> {
    nearest(query.values(), candidates.iter().map(|(d, _)| d.values()))
}

fn nearest<'a>(query: &[f64], candidates: impl Iterator<Item = &'a [f64]>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.enumerate() {
        let d = euclidean(query, c);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Mining("no positive candidates".into()))
}

fn check_dims(q: &[f64], p: &[f64], negatives: &[&[f64]]) -> Result<()> {
    if p.len() != q.len() || negatives.iter().any(|n| n.len() != q.len()) {
        return Err(dim_err!("triplet embeddings differ in dimension"));
    }
    Ok(())
}

/// `Σ_n max(0, δ + ‖q−p‖ − ‖q−n‖)`.
pub fn triplet_loss(q: &[f64], p: &[f64], negatives: &[&[f64]], margin: f64) -> Result<f64> {
    check_dims(q, p, negatives)?;
    let dp = euclidean(q, p);
    Ok(negatives
        .iter()
        .map(|n| (margin + dp - euclidean(q, n)).max(0.0))
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    /// Number of negatives inside the margin.
    pub active: usize,
}

/// Loss and its gradient w.r.t. every embedding. The distance gradient is
/// taken as zero where two embeddings coincide.
pub fn triplet_loss_grad(
    q: &[f64],
    p: &[f64],
    negatives: &[&[f64]],
    margin: f64,
) -> Result<TripletGrad> {
    check_dims(q, p, negatives)?;
    let dim = q.len();
    let unit = |a: &[f64], b: &[f64]| -> (f64, Vec<f64>) {
        let d = euclidean(a, b);
        let u = if d > 0.0 {
            a.iter().zip(b).map(|(x, y)| (x - y) / d).collect()
        } else {
            vec![0.0; dim]
        };
        (d, u)
    };
    let (dp, up) = unit(q, p);
    let mut out = TripletGrad {
        loss: 0.0,
        q: vec![0.0; dim],
        p: vec![0.0; dim],
        negatives: vec![vec![0.0; dim]; negatives.len()],
        active: 0,
    };
    for (n, gn) in negatives.iter().zip(out.negatives.iter_mut()) {
        let (dn, un) = unit(q, n);
        let l = margin + dp - dn;
        if l <= 0.0 {
            continue;
        }
        out.loss += l;
        out.active += 1;
        for i in 0..dim {
            out.q[i] += up[i] - un[i];
            out.p[i] -= up[i];
            gn[i] += un[i];
        }
    }
    Ok(out)
}

/// Checks the network's backward pass against central differences of the
/// triplet loss over one random triplet (seeded) with three negatives.
/// `tamper` runs after the analytic backward pass and may alter the
/// accumulated gradients; pass a no-op for a genuine check.
pub fn triplet_grad_check(
    net: &mut EdeNet,
    seed: u64,
    h: f64,
    tamper: impl Fn(&mut EdeNet),
) -> Result<GradCheckReport> {
    // a margin of 2 keeps every hinge open for unit-norm embeddings
    const MARGIN: f64 = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = net.config.input_shape();
    let n: usize = shape.iter().product();
    let inputs: Vec<Tensor> = (0..5)
        .map(|_| Tensor::new(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect::<Result<_>>()?;

    let probe = |net: &EdeNet| -> Result<(Vec<(Tensor, NetTrace)>, Probe)> {
        let outs = inputs
            .iter()
            .map(|x| net.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let negs: Vec<&[f64]> = outs[2..].iter().map(|(o, _)| o.data()).collect();
        let g = triplet_loss_grad(outs[0].0.data(), outs[1].0.data(), &negs, MARGIN)?;
        let mut hasher = DefaultHasher::new();
        g.active.hash(&mut hasher);
        for (_, t) in &outs {
            t.branch().hash(&mut hasher);
        }
        let value = g.loss;
        Ok((
            outs,
            Probe {
                value,
                branch: hasher.finish(),
            },
        ))
    };

    grad_check(
        net,
        h,
        |net| {
            let (outs, _) = probe(net)?;
            let negs: Vec<&[f64]> = outs[2..].iter().map(|(o, _)| o.data()).collect();
            let g = triplet_loss_grad(outs[0].0.data(), outs[1].0.data(), &negs, MARGIN)?;
            let grads = std::iter::once(&g.q)
                .chain(std::iter::once(&g.p))
                .chain(&g.negatives);
            for ((x, (out, trace)), gx) in inputs.iter().zip(&outs).zip(grads) {
                net.backward(x, trace, &Tensor::new(out.shape(), gx.clone())?)?;
            }
            tamper(net);
            Ok(())
        },
        |net| probe(net).map(|(_, p)| p),
    )
}

/// Adam with bias correction. Parameters are rounded to `f32` after every
/// update so checkpoints reload bit-exactly.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients and clears them.
    /// Returns `false` (and leaves parameters untouched) if any gradient is
    /// non-finite.
    pub fn step<M: ParamSet + ?Sized>(&mut self, model: &mut M) -> Result<bool> {
        let mut params = model.params_mut();
        let grads: Vec<Vec<f64>> = params.iter().map(|(_, p)| p.grad()).collect();
        if let Some((name, _)) = params
            .iter()
            .zip(&grads)
            .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
            .map(|(p, g)| (p.0.clone(), g))
        {
            warn!("non-finite gradient in {name}; skipping update");
            params.iter_mut().for_each(|(_, p)| p.zero_grad());
            return Ok(false);
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != grads.len() || self.m.iter().zip(&grads).any(|(m, g)| m.len() != g.len())
        {
            return Err(dim_err!(
                "optimizer state does not match the parameter layout"
            ));
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for (((_, p), g), (m, v)) in params
            .iter_mut()
            .zip(&grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.requires_grad {
                let value = p.value.data_mut();
                for i in 0..g.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    let mh = m[i] / b1t;
                    let vh = v[i] / b2t;
                    value[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
                p.value.round_to_f32();
            }
            p.zero_grad();
        }
        Ok(true)
    }
}

/// Network weights plus the optimizer step count.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: EdeNet,
    pub step: u64,
}

const CHECKPOINT_KIND: &str = "edenet-checkpoint";

impl Checkpoint {
    pub fn to_ntc(&self) -> Ntc {
        Ntc {
            tensors: self
                .net
                .params()
                .into_iter()
                .map(|(n, p)| (n, p.value.clone()))
                .collect(),
            metadata: json!({
                "kind": CHECKPOINT_KIND,
                "net": self.net.config,
                "step": self.step,
            }),
        }
    }

    pub fn from_ntc(ntc: &Ntc) -> Result<Self> {
        if ntc.metadata.get("kind").and_then(|k| k.as_str()) != Some(CHECKPOINT_KIND) {
            return Err(Error::Format(
                "container is not a network checkpoint".into(),
            ));
        }
        let config: NetConfig = serde_json::from_value(ntc.metadata["net"].clone())
            .map_err(|e| Error::Format(format!("checkpoint network config: {e}")))?;
        let step = ntc.metadata["step"]
            .as_u64()
            .ok_or_else(|| Error::Format("checkpoint step missing".into()))?;
        let mut net = EdeNet::new(&config, 0)?;
        let expected = net.params().len();
        if ntc.tensors.len() != expected {
            return Err(dim_err!(
                "checkpoint holds {} tensors, the network has {expected}",
                ntc.tensors.len()
            ));
        }
        for (name, p) in net.params_mut() {
            let t = ntc.require(&name)?;
            if t.shape() != p.shape() {
                return Err(dim_err!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    p.shape()
                ));
            }
            p.value = t.clone();
        }
        Ok(Self { net, step })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_ntc().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_ntc(&Ntc::load(path)?)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub step: u64,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    /// Recall@1 of held-out query windows against the whole map; NaN when
    /// the held-out segment is shorter than a window.
    pub val_recall_at_1: f64,
}

impl TrainRecord {
    pub const HEADER: &'static str = "epoch,step,loss,val_recall@1";
}

impl fmt::Display for TrainRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{:.6},{:.4}",
            self.epoch, self.step, self.loss, self.val_recall_at_1
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainRecord>,
    /// Queries dropped for lack of positives or negatives.
    pub skipped: usize,
}

struct Windows {
    tensors: Vec<Tensor>,
    poses: Vec<Pose>,
}

impl Windows {
    fn collect(seq: &GprSequence, starts: std::ops::Range<usize>, window: usize) -> Result<Self> {
        let mut out = Windows {
            tensors: Vec::new(),
            poses: Vec::new(),
        };
        for s in starts {
            out.tensors.push(seq.window(s, window)?);
            out.poses.push(window_pose(seq, s, window));
        }
        Ok(out)
    }
}

/// Frame ranges of the training and validation segments.
pub fn split_frames(
    frames: usize,
    train_fraction: f64,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let cut = ((frames as f64) * train_fraction).round() as usize;
    let cut = cut.min(frames);
    (0..cut, cut..frames)
}

fn window_starts(frames: std::ops::Range<usize>, window: usize) -> std::ops::Range<usize> {
    if frames.len() < window {
        frames.start..frames.start
    } else {
        frames.start..frames.end - window + 1
    }
}

fn check_aligned(map: &GprSequence, queries: &GprSequence) -> Result<()> {
    if map.len() != queries.len()
        || map.depth_bins() != queries.depth_bins()
        || map.channels() != queries.channels()
    {
        return Err(dim_err!(
            "map is {}×{}×{} but queries are {}×{}×{} (S×D×C)",
            map.len(),
            map.depth_bins(),
            map.channels(),
            queries.len(),
            queries.depth_bins(),
            queries.channels()
        ));
    }
    if map
        .poses()
        .iter()
        .zip(queries.poses())
        .any(|(a, b)| a.distance(b) > 1e-6)
    {
        return Err(Error::Config("map and query poses are not aligned".into()));
    }
    Ok(())
}

/// Trains a freshly initialized network (seeded by `cfg.seed`).
pub fn train(
    map: &GprSequence,
    queries: &GprSequence,
    cfg: &TrainConfig,
    net_cfg: &NetConfig,
    on_record: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    let net = EdeNet::new(net_cfg, cfg.seed)?;
    train_net(net, map, queries, cfg, on_record)
}

pub fn train_net(
    mut net: EdeNet,
    map: &GprSequence,
    queries: &GprSequence,
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_aligned(map, queries)?;
    let window = net.config.window;
    if map.depth_bins() != net.config.depth_bins || map.channels() != net.config.channels {
        return Err(dim_err!(
            "data is D×C = {}×{} but the network expects {}×{}",
            map.depth_bins(),
            map.channels(),
            net.config.depth_bins,
            net.config.channels
        ));
    }
    let (train_frames, val_frames) = split_frames(map.len(), cfg.train_fraction);
    let train_starts = window_starts(train_frames.clone(), window);
    if train_starts.is_empty() && cfg.epochs > 0 {
        return Err(Error::Config(format!(
            "training segment of {} frames is shorter than the {window}-frame window",
            train_frames.len()
        )));
    }
    let map_train = Windows::collect(map, train_starts.clone(), window)?;
    let query_train = Windows::collect(queries, train_starts, window)?;
    let query_val = Windows::collect(queries, window_starts(val_frames, window), window)?;
    let map_all = Windows::collect(map, window_starts(0..map.len(), window), window)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_7A1B);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0;
    let mut step = 0u64;

    for epoch in 1..=cfg.epochs {
        let cache = map_train
            .tensors
            .iter()
            .map(|x| net.forward(x).map(|(o, _)| o.into_data()))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..query_train.tensors.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, used, dropped) = triplet_step(
                &mut net,
                batch,
                &query_train,
                &map_train,
                &cache,
                cfg,
                &mut rng,
            )?;
            skipped += dropped;
            if used == 0 {
                continue;
            }
            if adam.step(&mut net)? {
                step += 1;
            }
            loss_sum += loss;
            batches += 1;
        }
        let record = TrainRecord {
            epoch,
            step,
            loss: if batches > 0 {
                loss_sum / batches as f64
            } else {
                f64::NAN
            },
            val_recall_at_1: validation_recall(&net, &query_val, &map_all, cfg.geo_radius)?,
        };
        debug!("{record}");
        on_record(&record);
        log.push(record);
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint { net, step },
        log,
        skipped,
    })
}

/// Forward/backward over one batch of queries. Returns the mean loss, the
/// number of queries used and the number skipped.
fn triplet_step(
    net: &mut EdeNet,
    batch: &[usize],
    queries: &Windows,
    map: &Windows,
    cache: &[Vec<f64>],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize, usize)> {
    struct Triplet {
        query: usize,
        positive: usize,
        negatives: Vec<usize>,
    }
    let mut triplets = Vec::new();
    let mut query_out: Vec<(usize, Tensor, NetTrace)> = Vec::new();
    let mut skipped = 0;
    for &qi in batch {
        let qpose = queries.poses[qi];
        let (near, far): (Vec<usize>, Vec<usize>) =
            (0..map.poses.len()).partition(|&m| map.poses[m].distance(&qpose) <= cfg.geo_radius);
        if near.is_empty() || far.is_empty() {
            warn!(
                "query window {qi} skipped: {} positive and {} negative candidates",
                near.len(),
                far.len()
            );
            skipped += 1;
            continue;
        }
        let (out, trace) = net.forward(&queries.tensors[qi])?;
        let pick = nearest(out.data(), near.iter().map(|&m| cache[m].as_slice()))?;
        let negatives: Vec<usize> = far
            .choose_multiple(rng, cfg.negatives.min(far.len()))
            .copied()
            .collect();
        let positive = near[pick];
        if map.poses[positive].distance(&qpose) > cfg.geo_radius
            || negatives
                .iter()
                .any(|&n| map.poses[n].distance(&qpose) <= cfg.geo_radius)
        {
            return Err(Error::Mining(
                "mined triplet violates the geographic radius".into(),
            ));
        }
        triplets.push(Triplet {
            query: query_out.len(),
            positive,
            negatives,
        });
        query_out.push((qi, out, trace));
    }
    if triplets.is_empty() {
        return Ok((0.0, 0, skipped));
    }

    // each map window is encoded (and back-propagated) once per step
    let mut map_out: BTreeMap<usize, (Tensor, NetTrace, Vec<f64>)> = BTreeMap::new();
    for t in &triplets {
        for &m in std::iter::once(&t.positive).chain(&t.negatives) {
            if !map_out.contains_key(&m) {
                let (out, trace) = net.forward(&map.tensors[m])?;
                let dim = out.len();
                map_out.insert(m, (out, trace, vec![0.0; dim]));
            }
        }
    }
    let scale = 1.0 / triplets.len() as f64;
    let mut query_grads: Vec<Vec<f64>> = query_out
        .iter()
        .map(|(_, o, _)| vec![0.0; o.len()])
        .collect();
    let mut total = 0.0;
    for t in &triplets {
        let q = query_out[t.query].1.data();
        let p = map_out[&t.positive].0.data().to_vec();
        let negs: Vec<Vec<f64>> = t
            .negatives
            .iter()
            .map(|n| map_out[n].0.data().to_vec())
            .collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
        let g = triplet_loss_grad(q, &p, &neg_refs, cfg.margin)?;
        total += g.loss * scale;
        axpy(&mut query_grads[t.query], scale, &g.q);
        axpy(
            &mut map_out.get_mut(&t.positive).expect("encoded").2,
            scale,
            &g.p,
        );
        for (n, gn) in t.negatives.iter().zip(&g.negatives) {
            axpy(&mut map_out.get_mut(n).expect("encoded").2, scale, gn);
        }
    }
    for ((qi, out, trace), g) in query_out.iter().zip(query_grads) {
        net.backward(&queries.tensors[*qi], trace, &Tensor::new(out.shape(), g)?)?;
    }
    for (m, (out, trace, g)) in map_out {
        net.backward(&map.tensors[m], &trace, &Tensor::new(out.shape(), g)?)?;
    }
    Ok((total, triplets.len(), skipped))
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    dst.iter_mut().zip(x).for_each(|(d, v)| *d += a * v);
}

fn validation_recall(net: &EdeNet, val: &Windows, map: &Windows, radius: f64) -> Result<f64> {
    if val.tensors.is_empty() {
        return Ok(f64::NAN);
    }
    let encoder = net.encoder()?;
    let entries = map
        .tensors
        .iter()
        .zip(&map.poses)
        .enumerate()
        .map(|(i, (x, p))| Ok((encoder.encode(x)?, *p, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let index = build_index(entries)?;
    let results = val
        .tensors
        .iter()
        .map(|x| index.query(&encoder.encode(x)?, 1))
        .collect::<Result<Vec<_>>>()?;
    recall_at_k(&results, &val.poses, 1, radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_loss() {
        // d(q,p) = 0.5, d(q,n) = 0.2
        let q = [0.0, 0.0];
        let p = [0.5, 0.0];
        let n = [0.0, 0.2];
        let l = triplet_loss(&q, &p, &[&n], 0.3).unwrap();
        assert!((l - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cleared_margin_gives_zero() {
        let q = [1.0, 0.0];
        let far = [0.0, 1.0];
        assert_eq!(triplet_loss(&q, &q, &[&far, &far], 0.3).unwrap(), 0.0);
        let g = triplet_loss_grad(&q, &q, &[&far], 0.3).unwrap();
        assert_eq!(g.active, 0);
        assert!(g.q.iter().chain(&g.p).all(|&v| v == 0.0));
    }

    #[test]
    fn mining_picks_nearest() {
        let d = |v: &[f64]| Descriptor::normalized(v.to_vec()).unwrap();
        let p = Pose::new(0.0, 0.0);
        assert_eq!(
            mine_positive(&d(&[1.0, 0.0]), &[(d(&[0.0, 1.0]), p)]).unwrap(),
            0
        );
        let cands = vec![
            (d(&[0.0, 1.0]), p),
            (d(&[1.0, 0.0]), p),
            (d(&[1.0, 0.0]), p),
        ];
        assert_eq!(mine_positive(&d(&[1.0, 0.0]), &cands).unwrap(), 1);
        assert!(matches!(
            mine_positive(&d(&[1.0]), &[]),
            Err(Error::Mining(_))
        ));
    }

    #[test]
    fn split_is_contiguous() {
        assert_eq!(split_frames(50, 0.7), (0..35, 35..50));
        assert_eq!(window_starts(35..50, 12), 35..39);
        assert!(window_starts(35..40, 12).is_empty());
    }

    #[test]
    fn record_format() {
        let r = TrainRecord {
            epoch: 2,
            step: 10,
            loss: 0.25,
            val_recall_at_1: 0.5,
        };
        assert_eq!(r.to_string(), "2,10,0.250000,0.5000");
    }
}
