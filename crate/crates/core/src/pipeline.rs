//! Alternating fit of assignments and cluster precisions, model selection,
//! and the model file format.
//!
//! The fitted objective is
//!
//! ```text
//! Σ_t cost(t, label_t) + β · #switches + ½ Σ_k Σ_{i≠j} p_λk(|θ^k_ij|)
//! ```
//!
//! where `cost` is the two-bound Gaussian negative log-likelihood. The
//! precision solver minimizes exactly this per cluster (up to a constant and
//! a factor `2/|P_k|`), so each alternation can only lower it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::assignment::{cost_matrix, viterbi_from_costs, AssignmentPath};
use crate::error::{Error, Result};
use crate::ingest::WindowBatch;
use crate::likelihood::{cluster_cost, empirical_moments, scad, ClusterModel};
use crate::linalg::quad_form;
use crate::precision::{estimate_precision, lla_outer_loop, PenaltyKind, SolverConfig};
use crate::toeplitz::{BlockToeplitzIndex, ToeplitzMatrix};

const KMEANS_ITERS: usize = 100;

/// Regularization strength for every cluster or one per cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSpec {
    Shared(f64),
    PerCluster(Vec<f64>),
}

impl LambdaSpec {
    fn resolve(&self, k: usize) -> Result<Vec<f64>> {
        let values = match self {
            LambdaSpec::Shared(v) => vec![*v; k],
            LambdaSpec::PerCluster(v) => {
                if v.len() != k {
                    return Err(Error::InvalidConfig(format!(
                        "{} per-cluster lambdas for K = {k}",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if values.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig("lambda must be non-negative".into()));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub k: usize,
    pub beta: f64,
    pub lambda: LambdaSpec,
    pub solver: SolverConfig,
    /// Maximum number of assignment/estimation alternations.
    pub max_alt: usize,
    /// Independent initializations; the fit with the lowest objective is kept.
    pub restarts: usize,
    pub seed: u64,
}

impl FitOptions {
    pub fn new(k: usize, beta: f64, lambda: f64) -> Self {
        Self {
            k,
            beta,
            lambda: LambdaSpec::Shared(lambda),
            solver: SolverConfig::default(),
            max_alt: 20,
            restarts: 4,
            seed: 0,
        }
    }
}

/// A fitted clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub k: usize,
    pub n: usize,
    pub w: usize,
    pub beta: f64,
    pub lambdas: Vec<f64>,
    pub models: Vec<ClusterModel>,
    pub path: AssignmentPath,
    /// Full objective after every alternation.
    pub objective_trace: Vec<f64>,
    /// BIC in its default (printed-sign) form; infinite if a cluster is empty.
    pub bic: f64,
    /// Labels stopped changing before `max_alt`.
    pub converged: bool,
    /// Every precision solve of the last alternation met its tolerances.
    pub solver_converged: bool,
    /// Clusters without members in the final assignment (0-based).
    pub empty_clusters: Vec<usize>,
    /// Number of clusters reseeded after emptying.
    pub reseeds: usize,
}

impl FitResult {
    /// Final value of the fitted objective.
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn member_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &l in &self.path.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// `½ Σ_{i≠j} p_λ(|θ_ij|)` of one cluster's structured precision.
pub fn penalty_half(model: &ClusterModel, penalty: PenaltyKind, a: f64) -> Result<f64> {
    let dense = model.precision_dense();
    let d = dense.nrows();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let b = dense[(i, j)].abs();
                total += match penalty {
                    PenaltyKind::Lasso => model.lambda() * b,
                    PenaltyKind::Scad => scad(b, model.lambda(), a)?,
                };
            }
        }
    }
    Ok(0.5 * total)
}

/// Full fitted objective for given models and labels.
pub fn total_objective(
    batch: &WindowBatch,
    models: &[ClusterModel],
    labels: &[usize],
    beta: f64,
    solver: &SolverConfig,
) -> Result<f64> {
    let costs = cost_matrix(batch, models)?;
    let mut value = crate::assignment::path_objective(&costs, labels, beta);
    for m in models {
        value += penalty_half(m, solver.penalty, solver.scad_a)?;
    }
    Ok(value)
}

fn cluster_part(batch: &WindowBatch, members: &[usize], model: &ClusterModel, solver: &SolverConfig) -> Result<f64> {
    let mut v = penalty_half(model, solver.penalty, solver.scad_a)?;
    for &r in members {
        v += cluster_cost(batch.lower(r), batch.upper(r), model)?;
    }
    Ok(v)
}

/// k-means++ seeding and Lloyd iterations on concatenated bound vectors,
/// followed by one pass relabeling isolated single-window runs.
pub fn initial_labels(batch: &WindowBatch, k: usize, seed: u64) -> Vec<usize> {
    let count = batch.count();
    let points: Vec<DVector<f64>> = (0..count)
        .map(|r| {
            let d = batch.dim();
            DVector::from_fn(2 * d, |j, _| if j < d { batch.lower(r)[j] } else { batch.upper(r)[j - d] })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers = vec![points[rng.random_range(0..count)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| (p - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = count - 1;
            for (i, &d2) in nearest.iter().enumerate() {
                if target < d2 {
                    chosen = i;
                    break;
                }
                target -= d2;
            }
            chosen
        } else {
            rng.random_range(0..count)
        };
        centers.push(points[pick].clone());
        let c = centers.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min((p - c).norm_squared());
        }
    }

    let assign = |centers: &[DVector<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (j, c) in centers.iter().enumerate() {
                    let d2 = (p - c).norm_squared();
                    if d2 < best_d {
                        best_d = d2;
                        best = j;
                    }
                }
                best
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..KMEANS_ITERS {
        for (j, c) in centers.iter_mut().enumerate() {
            let members: Vec<&DVector<f64>> =
                points.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(p, _)| p).collect();
            if !members.is_empty() {
                let mut sum = DVector::zeros(c.len());
                for p in &members {
                    sum += *p;
                }
                *c = sum / members.len() as f64;
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }

    for t in 1..count.saturating_sub(1) {
        if labels[t - 1] == labels[t + 1] && labels[t] != labels[t - 1] {
            labels[t] = labels[t - 1];
        }
    }
    labels
}

/// Moves the worst-fitting windows into empty clusters. `fit_cost[r]` is how
/// badly window `r` fits its current cluster. Returns the number of clusters
/// reseeded.
fn reseed_empty(labels: &mut [usize], k: usize, fit_cost: &[f64]) -> Result<usize> {
    let count = labels.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    if empty.is_empty() {
        return Ok(0);
    }
    let quota = (count / k).max(1);
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| fit_cost[b].total_cmp(&fit_cost[a]).then(a.cmp(&b)));
    let mut moved = vec![false; count];
    for &e in &empty {
        let mut taken = 0;
        for &r in &order {
            if taken == quota {
                break;
            }
            let src = labels[r];
            if moved[r] || counts[src] <= 1 {
                continue;
            }
            counts[src] -= 1;
            counts[e] += 1;
            labels[r] = e;
            moved[r] = true;
            taken += 1;
        }
        if taken == 0 {
            return Err(Error::DegenerateClustering(format!("cannot reseed empty cluster {e}")));
        }
    }
    Ok(empty.len())
}

fn members_of(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (r, &l) in labels.iter().enumerate() {
        out[l].push(r);
    }
    out
}

/// Per-cluster means and precisions for the given labels. A cluster keeps
/// its previous precision when that scores better on its new members, and its
/// whole previous model when it has no members.
fn m_step(
    batch: &WindowBatch,
    labels: &[usize],
    prev: Option<&[ClusterModel]>,
    lambdas: &[f64],
    idx: &BlockToeplitzIndex,
    solver: &SolverConfig,
) -> Result<(Vec<ClusterModel>, bool)> {
    let k = lambdas.len();
    let members = members_of(labels, k);
    let solved: Vec<(ClusterModel, bool)> = (0..k)
        .into_par_iter()
        .map(|j| {
            let old = prev.map(|ms| &ms[j]);
            if members[j].is_empty() {
                return match old {
                    Some(m) => Ok((m.clone(), true)),
                    None => Err(Error::EmptyCluster(j)),
                };
            }
            let moments = empirical_moments(batch, &members[j])?;
            let est = estimate_precision(&moments, lambdas[j], idx, solver)?;
            let fresh = ClusterModel::new(
                moments.mean_lower.clone(),
                moments.mean_upper.clone(),
                est.precision,
                lambdas[j],
            )?;
            if let Some(old) = old {
                let kept = ClusterModel::new(moments.mean_lower, moments.mean_upper, old.precision().clone(), lambdas[j])?;
                if cluster_part(batch, &members[j], &kept, solver)? < cluster_part(batch, &members[j], &fresh, solver)? {
                    return Ok((kept, est.converged));
                }
            }
            Ok((fresh, est.converged))
        })
        .collect::<Result<_>>()?;
    let ok = solved.iter().all(|(_, c)| *c);
    Ok((solved.into_iter().map(|(m, _)| m).collect(), ok))
}

/// Fits `K` clusters, keeping the best of `restarts` initializations.
pub fn fit(batch: &WindowBatch, opts: &FitOptions) -> Result<FitResult> {
    if opts.restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be positive".into()));
    }
    let fits: Vec<FitResult> = (0..opts.restarts as u64)
        .into_par_iter()
        .map(|r| fit_once(batch, opts, opts.seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15))))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.objective() < fits[best].objective() {
            best = i;
        }
    }
    Ok(fits.into_iter().nth(best).expect("at least one restart"))
}

/// One run from a single initialization: alternating Viterbi assignment and
/// per-cluster precision estimation until labels stop changing or `max_alt`
/// is reached.
fn fit_once(batch: &WindowBatch, opts: &FitOptions, seed: u64) -> Result<FitResult> {
    let k = opts.k;
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if batch.count() < k {
        return Err(Error::DegenerateClustering(format!(
            "{} windows cannot fill {k} clusters",
            batch.count()
        )));
    }
    if !(opts.beta >= 0.0 && opts.beta.is_finite()) {
        return Err(Error::InvalidConfig("beta must be non-negative".into()));
    }
    if opts.max_alt == 0 {
        return Err(Error::InvalidConfig("max_alt must be positive".into()));
    }
    opts.solver.validate()?;
    let lambdas = opts.lambda.resolve(k)?;
    let idx = BlockToeplitzIndex::new(batch.n(), batch.w());

    let mut labels = initial_labels(batch, k, seed);
    let mut models: Option<Vec<ClusterModel>> = None;
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut reseeds = 0;
    let mut converged = false;
    let mut solver_converged = true;
    let mut path = None;

    for _ in 0..opts.max_alt {
        let fit_cost: Vec<f64> = match &models {
            Some(ms) => (0..batch.count())
                .map(|r| cluster_cost(batch.lower(r), batch.upper(r), &ms[labels[r]]))
                .collect::<Result<_>>()?,
            None => vec![0.0; batch.count()],
        };
        reseeds += reseed_empty(&mut labels, k, &fit_cost)?;
        let (fitted, ok) = m_step(batch, &labels, models.as_deref(), &lambdas, &idx, &opts.solver)?;
        solver_converged = ok;

        let costs = cost_matrix(batch, &fitted)?;
        let next = viterbi_from_costs(&costs, opts.beta);
        let mut value = next.objective;
        for m in &fitted {
            value += penalty_half(m, opts.solver.penalty, opts.solver.scad_a)?;
        }
        trace.push(value);
        models = Some(fitted);
        let unchanged = next.labels == labels || previous.as_ref() == Some(&next.labels);
        previous = Some(next.labels.clone());
        let fitted_on = std::mem::replace(&mut labels, next.labels.clone());
        path = Some(next);
        if unchanged {
            converged = true;
        }
        if unchanged || opts.max_alt == trace.len() {
            // Re-estimate on the final labels if reseeding moved windows.
            if fitted_on != labels {
                let (refit, ok) = m_step(batch, &labels, models.as_deref(), &lambdas, &idx, &opts.solver)?;
                solver_converged = ok;
                let costs = cost_matrix(batch, &refit)?;
                let p = path.as_mut().expect("assigned above");
                p.objective = crate::assignment::path_objective(&costs, &labels, opts.beta);
                let mut value = p.objective;
                for m in &refit {
                    value += penalty_half(m, opts.solver.penalty, opts.solver.scad_a)?;
                }
                trace.push(value);
                models = Some(refit);
            }
            break;
        }
    }

    let models = models.expect("at least one alternation");
    let path = path.expect("at least one alternation");
    let counts = {
        let mut c = vec![0usize; k];
        for &l in &path.labels {
            c[l] += 1;
        }
        c
    };
    let empty_clusters: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    let bic = if empty_clusters.is_empty() {
        bic_sum(&models, &counts, batch.n(), batch.w(), BicVariant::Printed)
    } else {
        f64::INFINITY
    };

    Ok(FitResult {
        k,
        n: batch.n(),
        w: batch.w(),
        beta: opts.beta,
        lambdas,
        models,
        path,
        objective_trace: trace,
        bic,
        converged,
        solver_converged,
        empty_clusters,
        reseeds,
    })
}

/// Sign of the complexity term in the BIC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BicVariant {
    /// `- ln|P_k| · params`, as in the original formula.
    #[default]
    Printed,
    /// `+ ln|P_k| · params`, the usual Schwarz criterion.
    Standard,
}

/// Free parameters of one block-Toeplitz precision: `(w-1)n² + n(n+1)/2`.
pub fn parameter_count(n: usize, w: usize) -> usize {
    BlockToeplitzIndex::group_count_for(n, w)
}

fn bic_term(model: &ClusterModel, count: usize, n: usize, w: usize, variant: BicVariant) -> f64 {
    let m = count as f64;
    let d = (n * w) as f64;
    let params = parameter_count(n, w) as f64;
    let sign = match variant {
        BicVariant::Printed => -1.0,
        BicVariant::Standard => 1.0,
    };
    -m * model.log_det() + m * d * (1.0 + (2.0 * std::f64::consts::PI).ln()) + sign * m.ln() * params
}

fn bic_sum(models: &[ClusterModel], counts: &[usize], n: usize, w: usize, variant: BicVariant) -> f64 {
    models
        .iter()
        .zip(counts)
        .map(|(m, &c)| bic_term(m, c, n, w, variant))
        .sum()
}

/// BIC of a fitted clustering. Fails if any cluster is empty.
pub fn bic_score(result: &FitResult, variant: BicVariant) -> Result<f64> {
    let counts = result.member_counts();
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCluster(j));
    }
    Ok(bic_sum(&result.models, &counts, result.n, result.w, variant))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicRow {
    pub k: usize,
    /// Infinite when the fit left a cluster empty.
    pub bic: f64,
    pub empty_clusters: usize,
}

#[derive(Debug, Clone)]
pub struct SelectKResult {
    pub best_k: usize,
    pub table: Vec<BicRow>,
    pub fits: Vec<FitResult>,
}

impl SelectKResult {
    pub fn best_fit(&self) -> &FitResult {
        self.fits.iter().find(|f| f.k == self.best_k).expect("best K was fitted")
    }
}

/// Fits every `K` in `kset` and returns the BIC minimizer; ties go to the smaller `K`.
///
/// A fit that leaves a cluster empty scores an infinite BIC.
pub fn select_k(batch: &WindowBatch, kset: &[usize], opts: &FitOptions, variant: BicVariant) -> Result<SelectKResult> {
    if kset.is_empty() {
        return Err(Error::InvalidConfig("candidate K set is empty".into()));
    }
    let fits: Vec<FitResult> = kset
        .par_iter()
        .map(|&k| {
            let o = FitOptions { k, ..opts.clone() };
            fit(batch, &o)
        })
        .collect::<Result<_>>()?;
    let table: Vec<BicRow> = fits
        .iter()
        .map(|f| BicRow {
            k: f.k,
            bic: bic_score(f, variant).unwrap_or(f64::INFINITY),
            empty_clusters: f.empty_clusters.len(),
        })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.k.cmp(&b.k)))
        .expect("non-empty table");
    Ok(SelectKResult {
        best_k: best.k,
        table,
        fits,
    })
}

/// Which end of the cross-validation score is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvSelect {
    #[default]
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_lambda: f64,
    /// `(lambda, score)` per grid value.
    pub scores: Vec<(f64, f64)>,
}

/// Splits `members` into `folds` contiguous blocks of near-equal size.
pub fn contiguous_folds(members: &[usize], folds: usize) -> Vec<Vec<usize>> {
    let m = members.len();
    (0..folds)
        .map(|v| members[v * m / folds..(v + 1) * m / folds].to_vec())
        .collect()
}

/// V-fold cross-validation of `λ` for one cluster.
///
/// The score is `Σ_v [ |P_v| log det Θ̂⁻ᵛ + Σ_{i∈P_v} (quadratic forms of the
/// held-out lower and upper vectors under Θ̂⁻ᵛ) ]`, with held-out vectors
/// centered on the training-fold means.
pub fn cv_lambda(
    batch: &WindowBatch,
    members: &[usize],
    grid: &[f64],
    folds: usize,
    idx: &BlockToeplitzIndex,
    cfg: &SolverConfig,
    select: CvSelect,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if folds < 2 || members.len() < folds {
        return Err(Error::FoldTooSmall {
            members: members.len(),
            folds,
        });
    }
    let split = contiguous_folds(members, folds);
    let scores: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&lambda| {
            let mut score = 0.0;
            for held in &split {
                let train: Vec<usize> = members.iter().copied().filter(|r| !held.contains(r)).collect();
                let moments = empirical_moments(batch, &train)?;
                let est = lla_outer_loop(&moments, lambda, idx, cfg)?;
                let theta = est.precision.to_dense();
                let log_det = crate::linalg::log_det_spd(&theta)?;
                score += held.len() as f64 * log_det;
                for &r in held {
                    score += quad_form(&theta, &(batch.lower(r) - &moments.mean_lower));
                    score += quad_form(&theta, &(batch.upper(r) - &moments.mean_upper));
                }
            }
            Ok((lambda, score))
        })
        .collect::<Result<_>>()?;
    let pick = match select {
        CvSelect::Min => scores.iter().min_by(|a, b| a.1.total_cmp(&b.1)),
        CvSelect::Max => scores.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0))),
    }
    .expect("non-empty grid");
    Ok(CvResult {
        best_lambda: pick.0,
        scores,
    })
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

fn num_list(values: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = values.into_iter().map(num).collect();
    format!("[{}]", items.join(","))
}

/// Writes a fitted model as JSON. Reals carry 17 significant digits; labels are 1-based.
pub fn save_model(result: &FitResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    let _ = write!(
        s,
        "{{\n  \"version\": 1,\n  \"n\": {},\n  \"w\": {},\n  \"K\": {},\n  \"beta\": {},\n  \"lambda\": {},\n",
        result.n,
        result.w,
        result.k,
        num(result.beta),
        num_list(result.lambdas.iter().copied())
    );
    let labels: Vec<String> = result.path.labels.iter().map(|l| (l + 1).to_string()).collect();
    let _ = writeln!(s, "  \"labels\": [{}],", labels.join(","));
    let _ = writeln!(s, "  \"objective\": {},", num(result.path.objective));
    let _ = writeln!(s, "  \"objectiveTrace\": {},", num_list(result.objective_trace.iter().copied()));
    let _ = writeln!(s, "  \"bic\": {},", num(result.bic));
    let _ = writeln!(s, "  \"converged\": {},", result.converged);
    let _ = writeln!(s, "  \"solverConverged\": {},", result.solver_converged);
    let empty: Vec<String> = result.empty_clusters.iter().map(|e| (e + 1).to_string()).collect();
    let _ = writeln!(s, "  \"emptyClusters\": [{}],", empty.join(","));
    let _ = writeln!(s, "  \"reseeds\": {},", result.reseeds);
    s.push_str("  \"clusters\": [\n");
    for (j, m) in result.models.iter().enumerate() {
        let blocks: Vec<String> = m
            .precision()
            .blocks()
            .iter()
            .map(|b| num_list((0..b.nrows()).flat_map(|r| (0..b.ncols()).map(move |c| b[(r, c)]))))
            .collect();
        let _ = write!(
            s,
            "    {{\"meanLower\": {}, \"meanUpper\": {}, \"blocks\": [{}]}}{}\n",
            num_list(m.mean_lower().iter().copied()),
            num_list(m.mean_upper().iter().copied()),
            blocks.join(", "),
            if j + 1 < result.models.len() { "," } else { "" }
        );
    }
    s.push_str("  ]\n}\n");
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ModelFile {
    version: u32,
    n: usize,
    w: usize,
    #[serde(rename = "K")]
    k: usize,
    beta: f64,
    lambda: Vec<f64>,
    labels: Vec<usize>,
    objective: Option<f64>,
    #[serde(default)]
    objective_trace: Vec<Option<f64>>,
    bic: Option<f64>,
    #[serde(default = "yes")]
    converged: bool,
    #[serde(default = "yes")]
    solver_converged: bool,
    #[serde(default)]
    empty_clusters: Vec<usize>,
    #[serde(default)]
    reseeds: usize,
    clusters: Vec<ClusterFile>,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ClusterFile {
    mean_lower: Vec<f64>,
    mean_upper: Vec<f64>,
    blocks: Vec<Vec<f64>>,
}

/// Reads a model written by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<FitResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<FitResult> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    if file.version != 1 {
        return Err(Error::SchemaMismatch(format!("unsupported version {}", file.version)));
    }
    let (n, w, k) = (file.n, file.w, file.k);
    if n == 0 || w == 0 || k == 0 {
        return Err(Error::SchemaMismatch("n, w and K must be positive".into()));
    }
    if file.clusters.len() != k || file.lambda.len() != k {
        return Err(Error::SchemaMismatch(format!(
            "K = {k} but {} clusters and {} lambdas",
            file.clusters.len(),
            file.lambda.len()
        )));
    }
    let d = n * w;
    let mut models = Vec::with_capacity(k);
    for (j, c) in file.clusters.into_iter().enumerate() {
        if c.mean_lower.len() != d || c.mean_upper.len() != d {
            return Err(Error::SchemaMismatch(format!("cluster {} means are not of length n*w = {d}", j + 1)));
        }
        if c.blocks.len() != w || c.blocks.iter().any(|b| b.len() != n * n) {
            return Err(Error::SchemaMismatch(format!(
                "cluster {} must have {w} blocks of {} values",
                j + 1,
                n * n
            )));
        }
        let blocks: Vec<DMatrix<f64>> = c.blocks.iter().map(|b| DMatrix::from_row_slice(n, n, b)).collect();
        let precision = ToeplitzMatrix::from_blocks(blocks).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
        let model = ClusterModel::new(
            DVector::from_vec(c.mean_lower),
            DVector::from_vec(c.mean_upper),
            precision,
            file.lambda[j],
        )
        .map_err(|e| Error::SchemaMismatch(format!("cluster {}: {e}", j + 1)))?;
        models.push(model);
    }
    if file.labels.iter().any(|&l| l == 0 || l > k) {
        return Err(Error::SchemaMismatch("labels must lie in 1..=K".into()));
    }
    let labels: Vec<usize> = file.labels.iter().map(|l| l - 1).collect();
    Ok(FitResult {
        k,
        n,
        w,
        beta: file.beta,
        lambdas: file.lambda,
        models,
        path: AssignmentPath {
            labels,
            objective: file.objective.unwrap_or(f64::NAN),
            k,
            beta: file.beta,
        },
        objective_trace: file.objective_trace.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        bic: file.bic.unwrap_or(f64::INFINITY),
        converged: file.converged,
        solver_converged: file.solver_converged,
        empty_clusters: file.empty_clusters.iter().map(|e| e.saturating_sub(1)).collect(),
        reseeds: file.reseeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{demo_regimes, regime_windows};

    fn small_batch() -> WindowBatch {
        let (b, _) = regime_windows(&demo_regimes(), 2, 3, 2, 60, 3).unwrap();
        b
    }

    #[test]
    fn parameter_count_matches_formula() {
        assert_eq!(parameter_count(2, 3), 11);
    }

    #[test]
    fn single_cluster_fit() {
        let b = small_batch();
        let r = fit(&b, &FitOptions::new(1, 1.0, 0.1)).unwrap();
        assert!(r.path.labels.iter().all(|&l| l == 0));
        assert_eq!(r.objective_trace.len(), 1);
        assert!(r.converged);
    }

    #[test]
    fn bic_of_identity_precision() {
        let b = small_batch();
        let mut r = fit(&b, &FitOptions::new(1, 1.0, 0.1)).unwrap();
        let m = &r.models[0];
        r.models[0] = ClusterModel::new(
            m.mean_lower().clone(),
            m.mean_upper().clone(),
            ToeplitzMatrix::identity(2, 3),
            0.1,
        )
        .unwrap();
        let count = b.count() as f64;
        let expected = count * 6.0 * (1.0 + (2.0 * std::f64::consts::PI).ln()) - count.ln() * 11.0;
        assert!((bic_score(&r, BicVariant::Printed).unwrap() - expected).abs() < 1e-9);
        let standard = count * 6.0 * (1.0 + (2.0 * std::f64::consts::PI).ln()) + count.ln() * 11.0;
        assert!((bic_score(&r, BicVariant::Standard).unwrap() - standard).abs() < 1e-9);
    }

    #[test]
    fn huge_beta_leaves_one_cluster() {
        let b = small_batch();
        let r = fit(&b, &FitOptions::new(2, 1e9, 0.1)).unwrap();
        let nonempty = r.member_counts().iter().filter(|&&c| c > 0).count();
        assert_eq!(nonempty, 1);
        assert_eq!(r.empty_clusters.len(), 1);
        assert!(matches!(bic_score(&r, BicVariant::Printed), Err(Error::EmptyCluster(_))));
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let b = small_batch();
        let r = fit(&b, &FitOptions::new(3, 2.0, 0.5)).unwrap();
        if r.reseeds == 0 {
            for p in r.objective_trace.windows(2) {
                assert!(p[1] <= p[0] + 1e-6, "{:?}", r.objective_trace);
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let b = small_batch();
        let o = FitOptions {
            seed: 17,
            ..FitOptions::new(2, 1.0, 0.2)
        };
        assert_eq!(fit(&b, &o).unwrap(), fit(&b, &o).unwrap());
    }

    #[test]
    fn relabeling_preserves_objective() {
        let b = small_batch();
        let r = fit(&b, &FitOptions::new(2, 1.0, 0.2)).unwrap();
        let solver = SolverConfig::default();
        let a = total_objective(&b, &r.models, &r.path.labels, 1.0, &solver).unwrap();
        let swapped_models = vec![r.models[1].clone(), r.models[0].clone()];
        let swapped_labels: Vec<usize> = r.path.labels.iter().map(|l| 1 - l).collect();
        let s = total_objective(&b, &swapped_models, &swapped_labels, 1.0, &solver).unwrap();
        assert!((a - s).abs() <= 1e-9 * a.abs());
        assert!((a - r.objective()).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn invalid_fit_inputs() {
        let b = small_batch();
        assert!(fit(&b, &FitOptions::new(0, 1.0, 0.1)).is_err());
        assert!(matches!(
            fit(&b.select(&[0]), &FitOptions::new(2, 1.0, 0.1)),
            Err(Error::DegenerateClustering(_))
        ));
        let o = FitOptions {
            lambda: LambdaSpec::PerCluster(vec![0.1]),
            ..FitOptions::new(2, 1.0, 0.1)
        };
        assert!(fit(&b, &o).is_err());
    }

    #[test]
    fn select_k_shapes() {
        let b = small_batch();
        let r = select_k(&b, &[3], &FitOptions::new(1, 1.0, 0.1), BicVariant::Standard).unwrap();
        assert_eq!(r.best_k, 3);
        let r = select_k(&b, &[1, 2, 3], &FitOptions::new(1, 1.0, 0.1), BicVariant::Standard).unwrap();
        assert_eq!(r.table.len(), 3);
        assert!(select_k(&b, &[], &FitOptions::new(1, 1.0, 0.1), BicVariant::Standard).is_err());
    }

    #[test]
    fn folds_are_a_disjoint_cover() {
        let members: Vec<usize> = (10..33).collect();
        let folds = contiguous_folds(&members, 5);
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, members);
        assert!(folds.iter().all(|f| f.len() >= 4));
    }

    #[test]
    fn cv_singleton_grid_and_small_folds() {
        let b = small_batch();
        let members: Vec<usize> = (0..b.count()).collect();
        let idx = BlockToeplitzIndex::new(2, 3);
        let cfg = SolverConfig::default();
        let r = cv_lambda(&b, &members, &[0.3], 3, &idx, &cfg, CvSelect::Min).unwrap();
        assert_eq!(r.best_lambda, 0.3);
        assert!(matches!(
            cv_lambda(&b, &members[..2], &[0.3], 3, &idx, &cfg, CvSelect::Min),
            Err(Error::FoldTooSmall { .. })
        ));
    }

    #[test]
    fn model_round_trip() {
        let b = small_batch();
        let r = fit(&b, &FitOptions::new(2, 1.0, 0.2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&r, &p).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(r, back);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        let blocks = v["clusters"][0]["blocks"].as_array().unwrap();
        let stored: usize = blocks.iter().map(|b| b.as_array().unwrap().len()).sum();
        assert_eq!(stored, 3 * 2 * 2);
    }

    #[test]
    fn model_schema_errors() {
        let b = small_batch();
        let r = fit(&b, &FitOptions::new(1, 1.0, 0.2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&r, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let wrong_w = text.replacen("\"w\": 3", "\"w\": 4", 1);
        assert!(matches!(parse_model(&wrong_w), Err(Error::SchemaMismatch(_))));
        assert!(matches!(parse_model(&text[..text.len() / 2]), Err(Error::CorruptFile(_))));
        let bad_version = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(parse_model(&bad_version), Err(Error::SchemaMismatch(_))));
    }
}
