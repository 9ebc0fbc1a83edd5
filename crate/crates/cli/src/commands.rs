use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use edenet::formats::{load_sequence, save_sequence, DescriptorSet};
use edenet::gpr_sim::{make_dataset, Pose, SimConfig};
use edenet::lgf::kernel_grid_pgm;
use edenet::net::{
    encode_energy_profile, encode_sequence, param_group, Descriptor, EdeNet, NetConfig,
};
use edenet::numerics::{ParamSet, Tensor};
use edenet::retrieval::{build_index, recall_at_k, DescriptorIndex, MatchResult};
use edenet::training::{train as train_net, triplet_grad_check, Checkpoint, TrainRecord};
use edenet::Error;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::{Baseline, Preset};

const GRAD_TOLERANCE: f64 = 1e-3;
const GRAD_STEP: f64 = 1e-5;

type Result<T = ()> = anyhow::Result<T>;

pub fn print_config(preset: Preset) -> Result {
    let cfg = match preset {
        Preset::Default => ExperimentConfig::default(),
        Preset::Tiny => ExperimentConfig::tiny(),
    };
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&cfg)?)?;
    Ok(())
}

pub fn print_schema() -> Result {
    let schema = schemars::schema_for!(ExperimentConfig);
    writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(&schema)?
    )?;
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("config {}", path.display()))
}

fn load_seq(path: &Path) -> Result<edenet::gpr_sim::GprSequence> {
    load_sequence(path).with_context(|| format!("reading {}", path.display()))
}

pub fn simulate(config: &Path, map_path: &Path, queries_path: &Path) -> Result {
    let cfg = load_config(config)?;
    let d = &cfg.dataset;
    let ds = make_dataset(
        cfg.seed,
        d.n_locations,
        &cfg.sim,
        d.map_epsilon,
        d.query_epsilon,
        d.query_noise,
    )?;
    save_sequence(map_path, &ds.map).with_context(|| format!("writing {}", map_path.display()))?;
    save_sequence(queries_path, &ds.queries)
        .with_context(|| format!("writing {}", queries_path.display()))?;
    let depths = ds.scene.iter().map(|r| r.depth);
    let (lo, hi) = depths.fold((f64::INFINITY, 0.0f64), |(lo, hi), z| {
        (lo.min(z), hi.max(z))
    });
    eprintln!(
        "scene {}: {} reflectors at {:.2}–{:.2} m depth; {} frames of {}×{} (D×C); \
         ε_r {} → {}, query interference {}",
        cfg.seed,
        ds.scene.len(),
        lo,
        hi,
        ds.map.len(),
        ds.map.depth_bins(),
        ds.map.channels(),
        d.map_epsilon,
        d.query_epsilon,
        d.query_noise
    );
    Ok(())
}

pub fn train(
    config: &Path,
    map_path: &Path,
    queries_path: &Path,
    out: &Path,
    log_path: Option<&Path>,
) -> Result {
    let cfg = load_config(config)?;
    let map = load_seq(map_path)?;
    let queries = load_seq(queries_path)?;
    let mut sink: Box<dyn Write> = match log_path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(sink, "{}", TrainRecord::HEADER)?;
    let mut write_err = None;
    let started = Instant::now();
    let outcome = train_net(&map, &queries, &cfg.train, &cfg.net, |r| {
        info!(
            "epoch {} step {} loss {:.4} val recall@1 {:.3}",
            r.epoch, r.step, r.loss, r.val_recall_at_1
        );
        if let Err(e) = writeln!(sink, "{r}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing the training log");
    }
    sink.flush()?;
    if outcome.skipped > 0 {
        info!(
            "{} query windows skipped for lack of triplets",
            outcome.skipped
        );
    }
    outcome
        .checkpoint
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    info!(
        "{} steps in {:.1} s → {}",
        outcome.checkpoint.step,
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("checkpoint {}", path.display()))
}

pub fn encode(
    input: &Path,
    out: &Path,
    checkpoint: Option<&Path>,
    baseline: Option<Baseline>,
    window: Option<usize>,
) -> Result {
    let seq = load_seq(input)?;
    let (encoded, window, encoder) = match (checkpoint, baseline) {
        (_, Some(Baseline::Energy)) => {
            let w = window.ok_or_else(|| Error::Usage("--baseline needs --window".into()))?;
            (encode_energy_profile(&seq, w)?, w, "energy")
        }
        (Some(path), None) => {
            let ckpt = load_checkpoint(path)?;
            let w = ckpt.net.config.window;
            if window.is_some_and(|v| v != w) {
                return Err(
                    Error::Usage(format!("the checkpoint fixes the window at {w} frames")).into(),
                );
            }
            (
                encode_sequence(&seq, w, &ckpt.net).with_context(|| input.display().to_string())?,
                w,
                "edenet",
            )
        }
        (None, None) => return Err(Error::Usage("need --checkpoint or --baseline".into()).into()),
    };
    let entries = encoded
        .into_iter()
        .enumerate()
        .map(|(start, (d, p))| (d, p, (start + window / 2) as u64))
        .collect::<Vec<_>>();
    info!("{} windows of {window} frames encoded", entries.len());
    let set = DescriptorSet {
        entries,
        metadata: json!({"kind": "descriptors", "encoder": encoder, "window": window}),
    };
    set.save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn load_descriptors(path: &Path) -> Result<DescriptorSet> {
    DescriptorSet::load(path).with_context(|| format!("descriptors {}", path.display()))
}

fn load_index(path: &Path) -> Result<DescriptorIndex> {
    Ok(build_index(load_descriptors(path)?.entries)?)
}

pub fn index(descriptors: &Path, out: &Path) -> Result {
    let mut set = load_descriptors(descriptors)?;
    let index = build_index(set.entries.clone())?;
    set.metadata = json!({
        "kind": "index",
        "entries": index.len(),
        "dim": index.dim(),
        "source": set.metadata,
    });
    set.save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    info!("{} entries of dimension {}", index.len(), index.dim());
    Ok(())
}

fn run_queries(
    index: &DescriptorIndex,
    queries: &DescriptorSet,
    topk: usize,
) -> Result<Vec<MatchResult>> {
    if topk > index.len() {
        return Err(Error::Usage(format!(
            "top-{topk} requested from an index of {} entries",
            index.len()
        ))
        .into());
    }
    queries
        .entries
        .iter()
        .map(|(d, _, id)| {
            index
                .query(d, topk)
                .with_context(|| format!("query window at frame {id}"))
        })
        .collect()
}

pub fn query(index_path: &Path, queries_path: &Path, topk: usize) -> Result {
    let index = load_index(index_path)?;
    let queries = load_descriptors(queries_path)?;
    let results = run_queries(&index, &queries, topk)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "query_frame,rank,match_frame,distance,utm_x,utm_y")?;
    for ((_, _, qid), r) in queries.entries.iter().zip(&results) {
        for rank in 0..r.len() {
            let p = r.poses[rank];
            writeln!(
                out,
                "{qid},{},{},{:.6},{},{}",
                rank + 1,
                r.frame_ids[rank],
                r.distances[rank],
                p.utm_x,
                p.utm_y
            )?;
        }
    }
    Ok(())
}

pub fn eval(index_path: &Path, queries_path: &Path, config: Option<&Path>) -> Result {
    let eval = match config {
        Some(p) => load_config(p)?.eval,
        None => Default::default(),
    };
    let index = load_index(index_path)?;
    let queries = load_descriptors(queries_path)?;
    let deepest = *eval.k.last().expect("validated non-empty");
    let results = run_queries(&index, &queries, deepest)?;
    let truth: Vec<Pose> = queries.entries.iter().map(|e| e.1).collect();
    let recalls = eval
        .k
        .iter()
        .map(|&k| recall_at_k(&results, &truth, k, eval.dist_thresh))
        .collect::<edenet::Result<Vec<_>>>()?;
    let header: Vec<String> = eval.k.iter().map(|k| format!("recall@{k}")).collect();
    let values: Vec<String> = recalls.iter().map(|r| format!("{r:.6}")).collect();
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", header.join(","))?;
    writeln!(out, "{}", values.join(","))?;
    Ok(())
}

pub fn gradcheck(config: Option<&Path>, seed: u64, inject_fault: bool) -> Result {
    let net_cfg = match config {
        Some(p) => load_config(p)?.net,
        None => NetConfig::tiny(),
    };
    let mut net = EdeNet::new(&net_cfg, seed)?;
    let started = Instant::now();
    let report = triplet_grad_check(&mut net, seed.wrapping_add(1), GRAD_STEP, |net| {
        if inject_fault {
            for (_, p) in net.params_mut() {
                let g: Vec<f64> = p.grad().iter().map(|v| 1.1 * v + 1e-4).collect();
                p.zero_grad();
                p.accumulate(&g).expect("same shape");
            }
        }
    })?;
    let groups = report.grouped(|n| param_group(n).to_string());
    let mut out = std::io::stdout().lock();
    writeln!(out, "group,max_rel_error,checked,skipped")?;
    for g in &groups {
        writeln!(
            out,
            "{},{:.3e},{},{}",
            g.name, g.max_rel_error, g.checked, g.skipped
        )?;
    }
    info!(
        "gradient check took {:.1} s",
        started.elapsed().as_secs_f64()
    );
    let failed: Vec<&str> = groups
        .iter()
        .filter(|g| !(g.max_rel_error < GRAD_TOLERANCE))
        .map(|g| g.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Error::Numeric(format!(
            "relative gradient error ≥ {GRAD_TOLERANCE} in {}",
            failed.join(", ")
        ))
        .into());
    }
    Ok(())
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn bench(checkpoint: &Path, index_size: usize, trials: usize) -> Result {
    if index_size == 0 || trials == 0 {
        return Err(
            Error::Usage("bench needs a non-empty index and at least one trial".into()).into(),
        );
    }
    let net = load_checkpoint(checkpoint)?.net;
    let cfg = &net.config;
    let sim = SimConfig {
        depth_bins: cfg.depth_bins,
        channels: cfg.channels,
        ..SimConfig::default()
    };
    let seq = make_dataset(0, cfg.window.max(2), &sim, 4.0, 4.0, 0.0)?.map;
    let x = seq.window(0, cfg.window)?;

    let mut encode_ms = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t = Instant::now();
        std::hint::black_box(net.encode(&x)?);
        encode_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut random_unit = || -> edenet::Result<Descriptor> {
        Descriptor::normalized(
            (0..cfg.descriptor_dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
    };
    let entries = (0..index_size)
        .map(|i| Ok((random_unit()?, Pose::new(i as f64, 0.0), i as u64)))
        .collect::<edenet::Result<Vec<_>>>()?;
    let index = build_index(entries)?;
    const QUERIES_PER_TRIAL: usize = 10;
    let topk = index.len().min(10);
    let mut query_ms = Vec::with_capacity(trials);
    for _ in 0..trials {
        let qs = (0..QUERIES_PER_TRIAL)
            .map(|_| random_unit())
            .collect::<edenet::Result<Vec<_>>>()?;
        let t = Instant::now();
        for q in &qs {
            std::hint::black_box(index.query(q, topk)?);
        }
        query_ms.push(t.elapsed().as_secs_f64() * 1e3 / QUERIES_PER_TRIAL as f64);
    }

    let mut out = std::io::stdout().lock();
    writeln!(out, "operation,trials,mean_ms,std_ms")?;
    for (name, samples) in [("encode_window", &encode_ms), ("query", &query_ms)] {
        let (mean, std) = mean_std(samples);
        writeln!(out, "{name},{},{mean:.4},{std:.4}", samples.len())?;
    }
    info!(
        "window {}×{}×{} frames; index of {index_size} × {}",
        cfg.channels, cfg.depth_bins, cfg.window, cfg.descriptor_dim
    );
    Ok(())
}

pub fn kernels(checkpoint: &Path, out: &Path, block: usize, channel: usize) -> Result {
    let net = load_checkpoint(checkpoint)?.net;
    let b = net.blocks.get(block).ok_or_else(|| {
        Error::Usage(format!(
            "block {block} requested, the network has {}",
            net.blocks.len()
        ))
    })?;
    let bank = b.lgf.kernels()?;
    let [n, c, k, _] = *bank.shape() else {
        unreachable!("kernel banks are rank 4")
    };
    if channel >= c {
        return Err(
            Error::Usage(format!("channel {channel} requested, the network has {c}")).into(),
        );
    }
    let tiles = (0..n)
        .map(|dir| {
            let off = (dir * c + channel) * k * k;
            Tensor::new(&[k, k], bank.data()[off..off + k * k].to_vec())
        })
        .collect::<edenet::Result<Vec<_>>>()?;
    let cols = (n as f64).sqrt().ceil() as usize;
    std::fs::write(out, kernel_grid_pgm(&tiles, cols)?)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
