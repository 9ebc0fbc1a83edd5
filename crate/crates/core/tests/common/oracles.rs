//! Scalar-loop reference implementations used as test oracles.
//!
//! Written directly from the textbook definitions on plain slices, with no
//! calls into the library, so they stay independent of the code they check.
#![allow(dead_code)]

pub fn conv2d_ref(
    x: &[f64],
    (cin, h, w): (usize, usize, usize),
    k: &[f64],
    (cout, kk): (usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kk) / stride + 1;
    let ow = (w + 2 * pad - kk) / stride + 1;
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..cin {
                    for u in 0..kk {
                        for v in 0..kk {
                            let iy = (oy * stride + u) as i64 - pad as i64;
                            let ix = (ox * stride + v) as i64 - pad as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            acc += k[((co * cin + ci) * kk + u) * kk + v]
                                * x[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    (out, oh, ow)
}

pub fn maxpool_ref(
    x: &[f64],
    (c, h, w): (usize, usize, usize),
    window: usize,
    stride: usize,
) -> Vec<f64> {
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for u in 0..window {
                    for v in 0..window {
                        m = m.max(x[(ch * h + oy * stride + u) * w + ox * stride + v]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

pub fn gap_ref(x: &[f64], (c, h, w): (usize, usize, usize)) -> Vec<f64> {
    (0..c)
        .map(|ch| {
            let mut s = 0.0;
            for i in 0..h {
                for j in 0..w {
                    s += x[(ch * h + i) * w + j];
                }
            }
            s / (h * w) as f64
        })
        .collect()
}

pub fn linear_ref(x: &[f64], wt: &[f64], b: Option<&[f64]>, m: usize) -> Vec<f64> {
    let n = x.len();
    (0..m)
        .map(|r| {
            let mut s = 0.0;
            for c in 0..n {
                s += wt[r * n + c] * x[c];
            }
            s + b.map_or(0.0, |b| b[r])
        })
        .collect()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Squeeze, bottleneck gate and residual recalibration of an `n×h×w` stack.
pub fn daa_ref(v: &[f64], (n, h, w): (usize, usize, usize), f1: &[f64], f2: &[f64]) -> Vec<f64> {
    let hidden = f1.len() / n;
    let d = gap_ref(v, (n, h, w));
    let mut a = vec![0.0; hidden];
    for r in 0..hidden {
        let mut s = 0.0;
        for c in 0..n {
            s += f1[r * n + c] * d[c];
        }
        a[r] = if s > 0.0 { s } else { 0.0 };
    }
    let mut out = vec![0.0; v.len()];
    for c in 0..n {
        let mut z = 0.0;
        for r in 0..hidden {
            z += f2[c * hidden + r] * a[r];
        }
        let t = sigmoid(z);
        for p in 0..h * w {
            out[c * h * w + p] = t * v[c * h * w + p] + v[c * h * w + p];
        }
    }
    out
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

pub fn triplet_ref(q: &[f64], p: &[f64], negs: &[Vec<f64>], margin: f64) -> f64 {
    let dp = euclid(q, p);
    let mut total = 0.0;
    for n in negs {
        let term = margin + dp - euclid(q, n);
        if term > 0.0 {
            total += term;
        }
    }
    total
}

/// Exhaustive scan; ranks by distance, then by insertion index.
pub fn knn_ref(rows: &[Vec<f64>], q: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, euclid(r, q)))
        .collect();
    // insertion sort keeps equal distances in index order
    for i in 1..all.len() {
        let mut j = i;
        while j > 0 && all[j - 1].1 > all[j].1 {
            all.swap(j - 1, j);
            j -= 1;
        }
    }
    all.truncate(k);
    all
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}
