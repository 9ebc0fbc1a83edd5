//! Central-difference verification of reverse-mode gradients.

use super::tensor::ParamSet;
use crate::error::{Error, Result};

/// Denominator floor of the relative error.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// One evaluation of the scalar objective.
///
/// `branch` fingerprints every discrete decision the forward pass made
/// (ReLU masks, pooling argmaxes, active hinge terms). A finite difference
/// whose two probes saw different fingerprints straddled a kink and is
/// excluded from the comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub branch: u64,
}

impl Probe {
    pub fn smooth(value: f64) -> Self {
        Self { value, branch: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    /// Collapses parameters into groups using `group_of(name)`, keeping the
    /// first-seen group order.
    pub fn grouped(&self, group_of: impl Fn(&str) -> String) -> Vec<ParamCheck> {
        let mut out: Vec<ParamCheck> = Vec::new();
        for p in &self.params {
            let g = group_of(&p.name);
            match out.iter_mut().find(|q| q.name == g) {
                Some(q) => {
                    q.max_rel_error = q.max_rel_error.max(p.max_rel_error);
                    q.checked += p.checked;
                    q.skipped += p.skipped;
                }
                None => out.push(ParamCheck {
                    name: g,
                    ..p.clone()
                }),
            }
        }
        out
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the gradients left in `model`'s parameters by `analytic` against
/// central differences `(f(p+h) − f(p−h)) / 2h` of `objective`, element by
/// element, for every parameter with `requires_grad`.
pub fn grad_check<M, A, F>(
    model: &mut M,
    h: f64,
    mut analytic: A,
    mut objective: F,
) -> Result<GradCheckReport>
where
    M: ParamSet,
    A: FnMut(&mut M) -> Result<()>,
    F: FnMut(&M) -> Result<Probe>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Usage(format!("step {h} must be positive")));
    }
    model.zero_grad();
    analytic(model)?;
    let grads: Vec<(String, bool, Vec<f64>)> = model
        .params()
        .into_iter()
        .map(|(name, p)| (name, p.requires_grad, p.grad()))
        .collect();
    let base = checked(objective(model)?)?;

    let mut params = Vec::with_capacity(grads.len());
    for (pi, (name, trainable, grad)) in grads.iter().enumerate() {
        if !trainable {
            continue;
        }
        let mut report = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        for (ei, &a) in grad.iter().enumerate() {
            let original = nudge(model, pi, ei, None);
            nudge(model, pi, ei, Some(original + h));
            let plus = objective(model).and_then(checked);
            nudge(model, pi, ei, Some(original - h));
            let minus = objective(model).and_then(checked);
            nudge(model, pi, ei, Some(original));
            let (plus, minus) = (plus?, minus?);
            if plus.branch != base.branch || minus.branch != base.branch {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.value - minus.value) / (2.0 * h);
            report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric));
            report.checked += 1;
        }
        params.push(report);
    }
    Ok(GradCheckReport { params })
}

fn checked(p: Probe) -> Result<Probe> {
    if p.value.is_finite() {
        Ok(p)
    } else {
        Err(Error::Numeric(format!(
            "objective evaluated to {}",
            p.value
        )))
    }
}

/// Reads element `ei` of parameter `pi`, optionally overwriting it.
fn nudge<M: ParamSet>(model: &mut M, pi: usize, ei: usize, value: Option<f64>) -> f64 {
    let mut params = model.params_mut();
    let slot = &mut params[pi].1.value.data_mut()[ei];
    let old = *slot;
    if let Some(v) = value {
        *slot = v;
    }
    old
}
