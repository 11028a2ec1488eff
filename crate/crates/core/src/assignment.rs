//! Temporally-consistent hard assignment of windows to clusters.
//!
//! For fixed cluster models the assignment minimizes
//! `sum_t cost(t, label_t) + beta * #{t : label_t != label_{t-1}}`,
//! solved exactly by a Viterbi recursion over the `count x K` cost table.
//! Labels are 0-based in memory.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::WindowBatch;
use crate::likelihood::{cluster_cost, ClusterModel};

const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Cluster index per window with the achieved objective.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentPath {
    pub labels: Vec<usize>,
    pub objective: f64,
    pub k: usize,
    pub beta: f64,
}

impl AssignmentPath {
    /// Number of positions where the label changes.
    pub fn switches(&self) -> usize {
        self.labels.windows(2).filter(|p| p[0] != p[1]).count()
    }

    /// Window rows per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (row, &l) in self.labels.iter().enumerate() {
            out[l].push(row);
        }
        out
    }
}

/// `count x K` table of per-window cluster costs.
pub fn cost_matrix(batch: &WindowBatch, models: &[ClusterModel]) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if models.is_empty() {
        return Err(Error::InvalidConfig("at least one cluster model is required".into()));
    }
    for m in models {
        if m.dim() != batch.dim() {
            return Err(Error::ModelDimensionMismatch {
                expected: batch.dim(),
                found: m.dim(),
            });
        }
    }
    (0..batch.count())
        .into_par_iter()
        .map(|t| {
            models
                .iter()
                .map(|m| cluster_cost(batch.lower(t), batch.upper(t), m))
                .collect()
        })
        .collect()
}

/// Objective of a label path, accumulated in the same order as the recursion.
pub fn path_objective(costs: &[Vec<f64>], labels: &[usize], beta: f64) -> f64 {
    let mut acc = costs[0][labels[0]];
    for t in 1..labels.len() {
        let pen = if labels[t] != labels[t - 1] { beta } else { 0.0 };
        acc = (acc + pen) + costs[t][labels[t]];
    }
    acc
}

/// Exact minimizer via dynamic programming over a cost table.
///
/// Ties resolve to the smallest cluster index.
pub fn viterbi_from_costs(costs: &[Vec<f64>], beta: f64) -> AssignmentPath {
    let count = costs.len();
    let k = costs[0].len();
    let mut delta = costs[0].clone();
    let mut back = vec![vec![0usize; k]; count];
    let mut next = vec![0.0; k];
    for t in 1..count {
        for j in 0..k {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (i, &d) in delta.iter().enumerate() {
                let v = d + if i != j { beta } else { 0.0 };
                if v < best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + costs[t][j];
            back[t][j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for j in 1..k {
        if delta[j] < delta[last] {
            last = j;
        }
    }
    let objective = delta[last];
    let mut labels = vec![0; count];
    labels[count - 1] = last;
    for t in (1..count).rev() {
        labels[t - 1] = back[t][labels[t]];
    }
    AssignmentPath {
        labels,
        objective,
        k,
        beta,
    }
}

/// Globally optimal assignment for fixed models.
pub fn viterbi_assign(batch: &WindowBatch, models: &[ClusterModel], beta: f64) -> Result<AssignmentPath> {
    let costs = cost_matrix(batch, models)?;
    Ok(viterbi_from_costs(&costs, beta))
}

/// Exhaustive search over all `K^count` paths; ties go to the
/// lexicographically smallest label sequence.
pub fn brute_force_from_costs(costs: &[Vec<f64>], beta: f64) -> Result<AssignmentPath> {
    let count = costs.len();
    let k = costs[0].len();
    let paths = (k as f64).powi(count as i32);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyPaths { paths });
    }
    let mut labels = vec![0usize; count];
    let mut best_labels = labels.clone();
    let mut best = f64::INFINITY;
    loop {
        let v = path_objective(costs, &labels, beta);
        if v < best {
            best = v;
            best_labels.copy_from_slice(&labels);
        }
        // Odometer increment, last position fastest, so enumeration is lexicographic.
        let mut pos = count;
        loop {
            if pos == 0 {
                return Ok(AssignmentPath {
                    labels: best_labels,
                    objective: best,
                    k,
                    beta,
                });
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
    }
}

pub fn brute_force_assign(
    batch: &WindowBatch,
    models: &[ClusterModel],
    beta: f64,
) -> Result<AssignmentPath> {
    let paths = (models.len() as f64).powi(batch.count() as i32);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyPaths { paths });
    }
    let costs = cost_matrix(batch, models)?;
    brute_force_from_costs(&costs, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn single_cluster() {
        let c = table(&[&[1.0], &[2.0], &[0.5]]);
        let p = viterbi_from_costs(&c, 3.0);
        assert_eq!(p.labels, vec![0, 0, 0]);
        assert_eq!(p.objective, 3.5);
    }

    #[test]
    fn zero_beta_is_independent_argmin() {
        let c = table(&[&[1.0, 0.0, 2.0], &[0.1, 0.2, 0.3], &[5.0, 4.0, 3.0], &[1.0, 0.5, 0.6]]);
        let p = viterbi_from_costs(&c, 0.0);
        assert_eq!(p.labels, vec![1, 0, 2, 1]);
    }

    #[test]
    fn single_step_brute_force() {
        let c = table(&[&[0.4, 0.3, 0.9]]);
        let p = brute_force_from_costs(&c, 1.0).unwrap();
        assert_eq!(p.labels, vec![1]);
        assert_eq!(p.objective, 0.3);
    }

    #[test]
    fn huge_beta_gives_constant_path() {
        let c = table(&[&[0.0, 5.0], &[5.0, 0.0], &[0.0, 5.0], &[5.0, 0.0], &[5.0, 0.0]]);
        let p = viterbi_from_costs(&c, 1e9);
        assert_eq!(p.switches(), 0);
        let b = brute_force_from_costs(&c, 1e9).unwrap();
        assert_eq!(p.labels, b.labels);
    }

    #[test]
    fn brute_force_ties_are_lexicographic() {
        let c = table(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(brute_force_from_costs(&c, 0.0).unwrap().labels, vec![0, 0]);
    }

    #[test]
    fn too_many_paths() {
        let c = vec![vec![0.0; 4]; 11];
        assert!(matches!(brute_force_from_costs(&c, 0.0), Err(Error::TooManyPaths { .. })));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let b = WindowBatch::from_vectors(1, 1, vec![], vec![]).unwrap();
        assert!(matches!(viterbi_assign(&b, &[], 0.0), Err(Error::EmptyBatch)));
    }

    fn random_costs() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=8, 1usize..=3).prop_flat_map(|(count, k)| {
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, k), count)
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(costs in random_costs(), beta in prop::sample::select(vec![0.0, 0.5, 2.0])) {
            let v = viterbi_from_costs(&costs, beta);
            let b = brute_force_from_costs(&costs, beta).unwrap();
            prop_assert_eq!(v.objective, b.objective);
            prop_assert_eq!(path_objective(&costs, &v.labels, beta), v.objective);
        }

        #[test]
        fn switches_non_increasing_in_beta(costs in random_costs()) {
            let mut prev = usize::MAX;
            for beta in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
                let s = viterbi_from_costs(&costs, beta).switches();
                prop_assert!(s <= prev);
                prev = s;
            }
        }

        #[test]
        fn shift_invariance(costs in random_costs(), shift in -3.0f64..3.0, beta in 0.0f64..2.0) {
            let shifted: Vec<Vec<f64>> = costs.iter().map(|r| r.iter().map(|c| c + shift).collect()).collect();
            let a = viterbi_from_costs(&costs, beta);
            let b = viterbi_from_costs(&shifted, beta);
            prop_assert_eq!(a.labels, b.labels);
        }
    }
}
