//! Exact nearest-neighbour search over descriptors and recall evaluation.

use std::cmp::Ordering;

use crate::error::{dim_err, Error, Result};
use crate::gpr_sim::Pose;
use crate::net::Descriptor;

/// Default ground-truth radius for a correct match, metres.
pub const DEFAULT_DIST_THRESH: f64 = 3.0;

/// Immutable row-major descriptor matrix with poses and frame ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorIndex {
    dim: usize,
    rows: Vec<f64>,
    poses: Vec<Pose>,
    frame_ids: Vec<u64>,
}

/// Ranked candidates, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub frame_ids: Vec<u64>,
    pub distances: Vec<f64>,
    pub poses: Vec<Pose>,
}

impl MatchResult {
    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }
}

pub fn build_index(entries: Vec<(Descriptor, Pose, u64)>) -> Result<DescriptorIndex> {
    let dim = entries
        .first()
        .map(|(d, _, _)| d.dim())
        .ok_or_else(|| Error::Usage("cannot build an index from zero descriptors".into()))?;
    let mut index = DescriptorIndex {
        dim,
        rows: Vec::with_capacity(entries.len() * dim),
        poses: Vec::with_capacity(entries.len()),
        frame_ids: Vec::with_capacity(entries.len()),
    };
    for (i, (desc, pose, id)) in entries.into_iter().enumerate() {
        if desc.dim() != dim {
            return Err(dim_err!(
                "descriptor {i} has dimension {} but the index holds {dim}",
                desc.dim()
            ));
        }
        index.rows.extend_from_slice(desc.values());
        index.poses.push(pose);
        index.frame_ids.push(id);
    }
    Ok(index)
}

impl DescriptorIndex {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn frame_ids(&self) -> &[u64] {
        &self.frame_ids
    }

    /// Exact top-`topk` by Euclidean distance; equal distances keep
    /// insertion order.
    pub fn query(&self, q: &Descriptor, topk: usize) -> Result<MatchResult> {
        if q.dim() != self.dim {
            return Err(dim_err!(
                "query has dimension {} but the index holds {}",
                q.dim(),
                self.dim
            ));
        }
        if topk == 0 || topk > self.len() {
            return Err(Error::Usage(format!(
                "top-k of {topk} requested from an index of {}",
                self.len()
            )));
        }
        let qv = q.values();
        let mut scored: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.iter().zip(qv).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        if topk < scored.len() {
            scored.select_nth_unstable_by(topk - 1, order);
            scored.truncate(topk);
        }
        scored.sort_unstable_by(order);
        Ok(MatchResult {
            frame_ids: scored.iter().map(|&(_, i)| self.frame_ids[i]).collect(),
            distances: scored.iter().map(|&(d2, _)| d2.sqrt()).collect(),
            poses: scored.iter().map(|&(_, i)| self.poses[i]).collect(),
        })
    }
}

pub fn query(index: &DescriptorIndex, q: &Descriptor, topk: usize) -> Result<MatchResult> {
    index.query(q, topk)
}

/// Fraction of queries with any of their first `k` candidates within
/// `dist_thresh` metres of the true pose.
pub fn recall_at_k(
    results: &[MatchResult],
    query_poses: &[Pose],
    k: usize,
    dist_thresh: f64,
) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Usage("recall of zero queries".into()));
    }
    if results.len() != query_poses.len() {
        return Err(dim_err!(
            "{} results for {} query poses",
            results.len(),
            query_poses.len()
        ));
    }
    if k == 0 || !(dist_thresh > 0.0) {
        return Err(Error::Usage(format!(
            "recall needs k ≥ 1 and a positive radius, got k={k}, {dist_thresh} m"
        )));
    }
    let hits = results
        .iter()
        .zip(query_poses)
        .filter(|(r, truth)| {
            r.poses
                .iter()
                .take(k)
                .any(|p| p.distance(truth) <= dist_thresh)
        })
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// Pose of the rank-1 candidate.
pub fn localize(result: &MatchResult) -> Option<Pose> {
    result.poses.first().copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Descriptor {
        Descriptor::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn single_and_duplicate_entries() {
        let p = Pose::new(1.0, 2.0);
        let idx = build_index(vec![(unit(&[1.0, 0.0]), p, 7)]).unwrap();
        assert_eq!(idx.len(), 1);
        let r = idx.query(&unit(&[0.0, 1.0]), 1).unwrap();
        assert_eq!(localize(&r), Some(p));

        let idx = build_index(vec![
            (unit(&[1.0, 1.0]), Pose::new(0.0, 0.0), 0),
            (unit(&[1.0, 1.0]), Pose::new(5.0, 0.0), 1),
        ])
        .unwrap();
        let r = idx.query(&unit(&[1.0, 1.0]), 2).unwrap();
        assert_eq!(r.frame_ids, vec![0, 1]);
        assert_eq!(r.distances, vec![0.0, 0.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_index(vec![]), Err(Error::Usage(_))));
        let mixed = vec![
            (unit(&[1.0, 0.0]), Pose::new(0.0, 0.0), 0),
            (unit(&[1.0, 0.0, 0.0]), Pose::new(0.0, 0.0), 1),
        ];
        assert!(matches!(build_index(mixed), Err(Error::Dimension(_))));
        let idx = build_index(vec![(unit(&[1.0, 0.0]), Pose::new(0.0, 0.0), 0)]).unwrap();
        assert!(matches!(
            idx.query(&unit(&[1.0, 0.0]), 2),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            recall_at_k(&[], &[], 1, 3.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn far_poses_give_zero_recall() {
        let idx = build_index(vec![
            (unit(&[1.0, 0.0]), Pose::new(100.0, 0.0), 0),
            (unit(&[0.0, 1.0]), Pose::new(200.0, 0.0), 1),
        ])
        .unwrap();
        let r = idx.query(&unit(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(
            recall_at_k(&[r], &[Pose::new(0.0, 0.0)], 2, 3.0).unwrap(),
            0.0
        );
    }
}
