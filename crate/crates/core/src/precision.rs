//! Block-Toeplitz sparse precision estimation for one cluster.
//!
//! Minimizes
//!
//! ```text
//! tr(S_l Θ) + tr(S_u Θ) - 2 log det Θ + (1/|P|) Σ_{i≠j} p_λ(|θ_ij|)   s.t. Θ block-Toeplitz
//! ```
//!
//! by ADMM on the split `Θ = Γ`, `Γ` block-Toeplitz, with scaled penalty
//! `(1/2ρ)||Θ - Γ||²` and multiplier `Λ`. Each outer iteration runs:
//!
//! 1. Γ-step: group averages of `Θ + ρΛ` (closed form).
//! 2. Θ-step: weighted-L1 graphical elastic net, solved by column-cyclic
//!    coordinate descent on a running inverse `W = Θ⁻¹`.
//! 3. Dual step: `Λ ← Λ + (Θ - Γ)/ρ`.
//!
//! SCAD is handled by local linear approximation: the L1 weights of each
//! Θ-step are `p'_λ(|θ_ij|)/|P|` at the previous iterate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::likelihood::{scad, scad_derivative, ClusterMoments, DEFAULT_SCAD_A};
use crate::linalg::{inverse_spd, log_det_spd};
use crate::toeplitz::{project_average, BlockToeplitzIndex, ToeplitzMatrix};

/// Sparsity penalty applied to off-diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyKind {
    /// Plain weighted L1 with fixed weights `λ/|P|`.
    Lasso,
    /// SCAD through per-iteration LLA re-weighting.
    #[default]
    Scad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    pub max_outer: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub inner_sweeps: usize,
    pub inner_tol: f64,
    pub scad_a: f64,
    pub min_eig_floor: f64,
    pub penalty: PenaltyKind,
    /// Keep every ADMM iterate for diagnostics.
    pub keep_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_outer: 200,
            tol_primal: 1e-5,
            tol_dual: 1e-5,
            inner_sweeps: 20,
            inner_tol: 1e-6,
            scad_a: DEFAULT_SCAD_A,
            min_eig_floor: 1e-6,
            penalty: PenaltyKind::Scad,
            keep_history: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("tol_primal", self.tol_primal),
            ("tol_dual", self.tol_dual),
            ("inner_tol", self.inner_tol),
            ("min_eig_floor", self.min_eig_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer == 0 || self.inner_sweeps == 0 {
            return Err(Error::InvalidConfig("iteration limits must be positive".into()));
        }
        if !(self.scad_a > 2.0) {
            return Err(Error::InvalidA(self.scad_a));
        }
        Ok(())
    }
}

/// One ADMM iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: DMatrix<f64>,
    pub gamma: ToeplitzMatrix,
    pub dual: DMatrix<f64>,
    pub rho: f64,
    pub iteration: usize,
    /// `||Θ - Γ||_F`.
    pub primal_residual: f64,
    /// `||Γ(q+1) - Γ(q)||_F / ρ`.
    pub dual_residual: f64,
}

/// The Θ-step subproblem
/// `tr((S + Λ)Θ) - 2 log det Θ + Σ G_ij |θ_ij| + (1/2ρ)||Θ - Γ||²`.
#[derive(Debug, Clone, Copy)]
pub struct ThetaProblem<'a> {
    /// `S_l + S_u`.
    pub scatter: &'a DMatrix<f64>,
    pub gamma: &'a DMatrix<f64>,
    pub dual: &'a DMatrix<f64>,
    /// Off-diagonal L1 weights; the diagonal is ignored.
    pub weights: &'a DMatrix<f64>,
    pub rho: f64,
}

impl ThetaProblem<'_> {
    fn linear_term(&self) -> DMatrix<f64> {
        self.scatter + self.dual - self.gamma / self.rho
    }

    /// Surrogate objective value at `theta`.
    pub fn objective(&self, theta: &DMatrix<f64>) -> Result<f64> {
        let log_det = log_det_spd(theta)?;
        let d = theta.nrows();
        let mut l1 = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    l1 += self.weights[(i, j)] * theta[(i, j)].abs();
                }
            }
        }
        Ok((self.scatter + self.dual).dot(theta) - 2.0 * log_det
            + l1
            + (theta - self.gamma).norm_squared() / (2.0 * self.rho))
    }

    /// Largest entrywise violation of the subgradient optimality condition.
    ///
    /// For `θ_ij ≠ 0` the residual is `|g_ij + G_ij sign(θ_ij)|`; at zero it is
    /// `max(|g_ij| - G_ij, 0)`, with `g` the smooth gradient.
    pub fn stationarity_residual(&self, theta: &DMatrix<f64>) -> Result<f64> {
        let w = inverse_spd(theta)?;
        let grad = self.scatter + self.dual - &w * 2.0 + (theta - self.gamma) / self.rho;
        let d = theta.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let g = grad[(i, j)];
                let r = if i == j {
                    g.abs()
                } else {
                    let weight = self.weights[(i, j)];
                    let t = theta[(i, j)];
                    if t != 0.0 {
                        (g + weight * t.signum()).abs()
                    } else {
                        (g.abs() - weight).max(0.0)
                    }
                };
                worst = worst.max(r);
            }
        }
        Ok(worst)
    }
}

/// Result of a Θ-step solve.
#[derive(Debug, Clone)]
pub struct ThetaStep {
    pub theta: DMatrix<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Diagonal updates raised to the eigenvalue floor.
    pub clamped: usize,
}

/// Solves the Θ-step by cycling over columns.
///
/// Within column `j`, each off-diagonal pair `(i, j)`, `i < j`, is moved to
/// the exact minimizer of the objective along that symmetric coordinate: the
/// soft-threshold test at `θ_ij = 0` first, otherwise a safeguarded Newton
/// root of the smooth derivative on the active sign branch. The diagonal entry
/// then has a closed-form update. The working matrix `W = Θ⁻¹` is kept in sync
/// with rank-one/two updates and refreshed by full inversion every sweep.
pub fn theta_step(problem: &ThetaProblem<'_>, start: &DMatrix<f64>, cfg: &SolverConfig) -> Result<ThetaStep> {
    let d = start.nrows();
    let rho = problem.rho;
    let lin = problem.linear_term();
    let mut theta = start.clone();
    let mut clamped = 0;

    for sweep in 1..=cfg.inner_sweeps {
        let mut w = inverse_spd(&theta).map_err(|_| Error::SingularWorkingMatrix { column: 0 })?;
        let mut max_change: f64 = 0.0;
        let scale = theta.amax().max(1.0);

        for j in 0..d {
            for i in 0..j {
                let t = pair_step(
                    theta[(i, j)],
                    lin[(i, j)],
                    problem.weights[(i, j)].max(0.0),
                    (w[(i, i)], w[(j, j)], w[(i, j)]),
                    rho,
                );
                if t != 0.0 {
                    let new = if t == -theta[(i, j)] { 0.0 } else { theta[(i, j)] + t };
                    let t = new - theta[(i, j)];
                    theta[(i, j)] = new;
                    theta[(j, i)] = new;
                    pair_update(&mut w, i, j, t).ok_or(Error::SingularWorkingMatrix { column: j })?;
                    max_change = max_change.max(t.abs());
                }
            }

            let wjj = w[(j, j)];
            let b = lin[(j, j)] * rho * wjj + theta[(j, j)] * wjj - 1.0;
            let disc = (b * b + 8.0 * rho * wjj * wjj).sqrt();
            let u = if b >= 0.0 {
                4.0 * rho * wjj * wjj / (b + disc)
            } else {
                (disc - b) / 2.0
            };
            let mut t = (u - 1.0) / wjj;
            if theta[(j, j)] + t < cfg.min_eig_floor {
                t = cfg.min_eig_floor - theta[(j, j)];
                clamped += 1;
            }
            if t != 0.0 {
                let denom = 1.0 + t * wjj;
                if !(denom > 0.0) {
                    return Err(Error::SingularWorkingMatrix { column: j });
                }
                theta[(j, j)] += t;
                let col = w.column(j).clone_owned();
                w.ger(-t / denom, &col, &col, 1.0);
                max_change = max_change.max(t.abs());
            }
        }

        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularWorkingMatrix { column: d.saturating_sub(1) });
        }
        if max_change <= cfg.inner_tol * scale {
            return Ok(ThetaStep {
                theta,
                sweeps: sweep,
                converged: true,
                clamped,
            });
        }
    }
    Ok(ThetaStep {
        theta,
        sweeps: cfg.inner_sweeps,
        converged: false,
        clamped,
    })
}

/// Exact coordinate step for the symmetric pair `(i, j)`.
///
/// `w = (w_ii, w_jj, w_ij)` from the current inverse; `lin` is the linear
/// coefficient of the pair; returns the step `t` added to `θ_ij`.
fn pair_step(theta: f64, lin: f64, weight: f64, w: (f64, f64, f64), rho: f64) -> f64 {
    let (wii, wjj, wij) = w;
    let s = (wii * wjj).sqrt();
    let q = wij * wij - wii * wjj;
    // log det stays finite for t in (lo, hi).
    let lo = -1.0 / (wij + s);
    let hi = 1.0 / (s - wij);
    if !(lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
        return 0.0;
    }
    // Smooth part of the derivative (halved), increasing in t.
    let h = |t: f64| {
        let num = wij + t * q;
        let f = 1.0 + 2.0 * t * wij + t * t * q;
        lin - 2.0 * num / f + (theta + t) / rho
    };
    let dh = |t: f64| {
        let num = wij + t * q;
        let f = 1.0 + 2.0 * t * wij + t * t * q;
        -2.0 * (q * f - 2.0 * num * num) / (f * f) + 1.0 / rho
    };

    let kink = -theta;
    if weight == 0.0 {
        return solve_increasing(&h, &dh, 0.0, lo, hi);
    }
    if kink > lo && kink < hi {
        let at_kink = h(kink);
        if at_kink.abs() <= weight {
            kink
        } else if at_kink > weight {
            solve_increasing(&|t| h(t) - weight, &dh, kink, lo, kink)
        } else {
            solve_increasing(&|t| h(t) + weight, &dh, kink, kink, hi)
        }
    } else {
        let sign = theta.signum();
        solve_increasing(&|t| h(t) + sign * weight, &dh, 0.0, lo, hi)
    }
}

/// Root of an increasing function on `(lo, hi)` that tends to `-∞`/`+∞` at the ends
/// (or changes sign inside). Newton steps with bisection fallback.
fn solve_increasing(g: &dyn Fn(f64) -> f64, dg: &dyn Fn(f64) -> f64, start: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut t = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let v = g(t);
        if v == 0.0 {
            return t;
        }
        if v.is_nan() {
            t = 0.5 * (lo + hi);
            continue;
        }
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let slope = dg(t);
        let mut next = if slope > 0.0 && slope.is_finite() { t - v / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let width = (hi - lo).abs();
        if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) || width <= 2.0 * f64::EPSILON * (lo.abs().max(hi.abs())) {
            return next;
        }
        t = next;
    }
    t
}

/// `W ← (Θ + t(e_i e_jᵀ + e_j e_iᵀ))⁻¹` given `W = Θ⁻¹`.
fn pair_update(w: &mut DMatrix<f64>, i: usize, j: usize, t: f64) -> Option<()> {
    let (wii, wjj, wij) = (w[(i, i)], w[(j, j)], w[(i, j)]);
    // (I + C UᵀWU)⁻¹ C with C = t [[0,1],[1,0]].
    let a = 1.0 + t * wij;
    let det = a * a - t * t * wii * wjj;
    if !(det > 0.0) {
        return None;
    }
    // inv(I + B) = [[a, -t wjj], [-t wii, a]] / det, then times C.
    let p00 = -t * t * wjj / det;
    let p01 = t * a / det;
    let p10 = t * a / det;
    let p11 = -t * t * wii / det;
    let ci = w.column(i).clone_owned();
    let cj = w.column(j).clone_owned();
    // W -= [ci cj] P [ci cj]ᵀ
    w.ger(-p00, &ci, &ci, 1.0);
    w.ger(-p01, &ci, &cj, 1.0);
    w.ger(-p10, &cj, &ci, 1.0);
    w.ger(-p11, &cj, &cj, 1.0);
    Some(())
}

/// Closed-form Γ-step.
pub fn gamma_step(
    theta: &DMatrix<f64>,
    dual: &DMatrix<f64>,
    rho: f64,
    idx: &BlockToeplitzIndex,
) -> Result<ToeplitzMatrix> {
    project_average(theta, dual, rho, idx)
}

/// LLA weights `p'_λ(|θ_ij|)/|P|` off the diagonal, zero on it.
pub fn lla_weights(theta: &DMatrix<f64>, lambda: f64, count: usize, a: f64) -> Result<DMatrix<f64>> {
    let d = theta.nrows();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                g[(i, j)] = scad_derivative(theta[(i, j)].abs(), lambda, a)? / count as f64;
            }
        }
    }
    Ok(g)
}

fn lasso_weights(d: usize, lambda: f64, count: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { lambda / count as f64 })
}

/// Penalized objective of the cluster problem at a dense `theta`.
pub fn penalized_objective(
    theta: &DMatrix<f64>,
    scatter: &DMatrix<f64>,
    lambda: f64,
    count: usize,
    penalty: PenaltyKind,
    a: f64,
) -> Result<f64> {
    let log_det = log_det_spd(theta)?;
    let d = theta.nrows();
    let mut pen = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                let b = theta[(i, j)].abs();
                pen += match penalty {
                    PenaltyKind::Lasso => lambda * b,
                    PenaltyKind::Scad => scad(b, lambda, a)?,
                };
            }
        }
    }
    Ok(scatter.dot(theta) - 2.0 * log_det + pen / count as f64)
}

/// Output of [`estimate_precision`].
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    /// Structured estimate (the consensus variable Γ, with groups that are
    /// identically zero in Θ set to exactly zero).
    pub precision: ToeplitzMatrix,
    /// Final unstructured iterate Θ.
    pub theta: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Count of Θ-step diagonal clamps at the eigenvalue floor.
    pub clamped: usize,
    /// Θ-steps that hit the sweep limit.
    pub inner_unconverged: usize,
    /// Iterates `0..=iterations` when `keep_history` is set.
    pub history: Vec<AdmmState>,
}

/// ADMM estimate of a block-Toeplitz sparse precision matrix.
///
/// Non-convergence within `max_outer` is reported through `converged`, not
/// as an error; the last iterate is returned.
pub fn estimate_precision(
    moments: &ClusterMoments,
    lambda: f64,
    idx: &BlockToeplitzIndex,
    cfg: &SolverConfig,
) -> Result<PrecisionEstimate> {
    cfg.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {lambda}")));
    }
    let d = idx.dim();
    if moments.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: moments.dim(),
        });
    }
    let scatter = moments.scatter_sum();
    if !scatter.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidConfig("covariance has non-finite entries".into()));
    }
    let count = moments.count.max(1);
    let rho = cfg.rho;

    let mean_diag = scatter.diagonal().mean().abs();
    let eps = cfg.min_eig_floor.max(1e-8 * mean_diag);
    let mut theta = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0 / (scatter[(i, i)] / 2.0 + eps)
        } else {
            0.0
        }
    });
    let mut dual = DMatrix::zeros(d, d);
    let mut gamma = project_average(&theta, &dual, rho, idx)?;

    let mut history = Vec::new();
    let mut primal = (&theta - gamma.to_dense()).norm();
    let mut dual_res = 0.0;
    if cfg.keep_history {
        history.push(AdmmState {
            theta: theta.clone(),
            gamma: gamma.clone(),
            dual: dual.clone(),
            rho,
            iteration: 0,
            primal_residual: primal,
            dual_residual: dual_res,
        });
    }

    let mut converged = false;
    let mut clamped = 0;
    let mut inner_unconverged = 0;
    let mut iterations = 0;
    for q in 1..=cfg.max_outer {
        iterations = q;
        let weights = match cfg.penalty {
            PenaltyKind::Lasso => lasso_weights(d, lambda, count),
            PenaltyKind::Scad => lla_weights(&theta, lambda, count, cfg.scad_a)?,
        };
        let gamma_next = gamma_step(&theta, &dual, rho, idx)?;
        let gamma_dense = gamma_next.to_dense();
        let problem = ThetaProblem {
            scatter: &scatter,
            gamma: &gamma_dense,
            dual: &dual,
            weights: &weights,
            rho,
        };
        let step = theta_step(&problem, &theta, cfg)?;
        clamped += step.clamped;
        if !step.converged {
            inner_unconverged += 1;
        }
        let theta_change = (&step.theta - &theta).norm();
        theta = step.theta;
        let gap = &theta - &gamma_dense;
        dual += &gap / rho;
        primal = gap.norm();
        dual_res = (&gamma_dense - gamma.to_dense()).norm() / rho;
        gamma = gamma_next;

        if cfg.keep_history {
            history.push(AdmmState {
                theta: theta.clone(),
                gamma: gamma.clone(),
                dual: dual.clone(),
                rho,
                iteration: q,
                primal_residual: primal,
                dual_residual: dual_res,
            });
        }
        let gamma_norm = gamma_dense.norm().max(f64::MIN_POSITIVE);
        // D-norm of the (Λ, Θ) step.
        let step_norm = ((primal * primal + theta_change * theta_change) / rho).sqrt();
        if primal / gamma_norm < cfg.tol_primal && dual_res < cfg.tol_dual && step_norm < cfg.tol_dual {
            converged = true;
            break;
        }
    }

    let precision = sparsify_like(&gamma, &theta, idx);
    let precision = if log_det_spd(&precision.to_dense()).is_ok() {
        precision
    } else {
        let fallback = sparsify_like(&project_average(&theta, &DMatrix::zeros(d, d), rho, idx)?, &theta, idx);
        log_det_spd(&fallback.to_dense())?;
        fallback
    };

    Ok(PrecisionEstimate {
        precision,
        theta,
        iterations,
        converged,
        primal_residual: primal,
        dual_residual: dual_res,
        clamped,
        inner_unconverged,
        history,
    })
}

/// Zeroes every group whose cells are all exactly zero in `theta`.
fn sparsify_like(gamma: &ToeplitzMatrix, theta: &DMatrix<f64>, idx: &BlockToeplitzIndex) -> ToeplitzMatrix {
    let values: Vec<f64> = idx
        .groups()
        .iter()
        .map(|g| {
            if g.cells.iter().all(|&c| theta[c] == 0.0) {
                0.0
            } else {
                gamma.get(g.cells[0].0, g.cells[0].1)
            }
        })
        .collect();
    idx.assemble(&values)
}

/// SCAD-penalized estimate with LLA re-weighting at every ADMM iteration.
pub fn lla_outer_loop(
    moments: &ClusterMoments,
    lambda: f64,
    idx: &BlockToeplitzIndex,
    cfg: &SolverConfig,
) -> Result<PrecisionEstimate> {
    let cfg = SolverConfig {
        penalty: PenaltyKind::Scad,
        ..cfg.clone()
    };
    estimate_precision(moments, lambda, idx, &cfg)
}

/// Per-iterate convergence measurements of an ADMM history.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `ρ||Λ(q) - Λ(final)||² + (1/ρ)||Θ(q) - Θ(final)||²`.
    pub distance_to_final: Vec<f64>,
    /// `||U(q) - U(q+1)||_D` with `U = (Λ, Θ)`.
    pub step_norms: Vec<f64>,
    pub violations: Vec<String>,
}

impl ConvergenceReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that step norms vanish (final step below `step_tol`) and that the
/// D-distance to the final iterate never increases beyond `slack`.
pub fn convergence_diagnostics(history: &[AdmmState], step_tol: f64, slack: f64) -> ConvergenceReport {
    let mut violations = Vec::new();
    if history.len() < 3 {
        violations.push(format!("history too short: {} iterates", history.len()));
        return ConvergenceReport {
            distance_to_final: Vec::new(),
            step_norms: Vec::new(),
            violations,
        };
    }
    let last = history.last().unwrap();
    let d_norm = |a: &AdmmState, b: &AdmmState| {
        let rho = a.rho;
        rho * (&a.dual - &b.dual).norm_squared() + (&a.theta - &b.theta).norm_squared() / rho
    };
    let distance_to_final: Vec<f64> = history.iter().map(|s| d_norm(s, last)).collect();
    let step_norms: Vec<f64> = history.windows(2).map(|p| d_norm(&p[0], &p[1]).sqrt()).collect();

    for (q, pair) in distance_to_final.windows(2).enumerate() {
        if pair[1] > pair[0] + slack {
            violations.push(format!(
                "distance to final increased at iteration {}: {:.3e} -> {:.3e}",
                q + 1,
                pair[0],
                pair[1]
            ));
        }
    }
    let final_step = *step_norms.last().unwrap();
    if !(final_step < step_tol) {
        violations.push(format!("final step norm {final_step:.3e} not below {step_tol:.1e}"));
    }
    ConvergenceReport {
        distance_to_final,
        step_norms,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * ridge
    }

    fn random_sym(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-scale..scale));
        (&a + a.transpose()) * 0.5
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            inner_sweeps: 2000,
            inner_tol: 1e-13,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn pair_update_matches_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = random_spd(&mut rng, 5, 1.0);
        let mut w = inverse_spd(&theta).unwrap();
        pair_update(&mut w, 1, 3, 0.2).unwrap();
        let mut moved = theta.clone();
        moved[(1, 3)] += 0.2;
        moved[(3, 1)] += 0.2;
        let exact = inverse_spd(&moved).unwrap();
        assert!((w - exact).amax() < 1e-12);
    }

    #[test]
    fn decoupled_diagonal_problem() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let zeros = DMatrix::zeros(3, 3);
        let problem = ThetaProblem {
            scatter: &s,
            gamma: &zeros,
            dual: &zeros,
            weights: &zeros,
            rho: 1e12,
        };
        let out = theta_step(&problem, &DMatrix::identity(3, 3), &tight()).unwrap();
        for i in 0..3 {
            assert!((out.theta[(i, i)] - 2.0 / s[(i, i)]).abs() < 1e-9);
        }
        assert_eq!(out.theta[(0, 1)], 0.0);
        assert_eq!(out.theta[(1, 2)], 0.0);
    }

    #[test]
    fn two_by_two_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = random_spd(&mut rng, 2, 0.2);
            let gamma = random_spd(&mut rng, 2, 0.5);
            let dual = random_sym(&mut rng, 2, 0.3);
            let g = rng.random_range(0.0..0.5);
            let weights = DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0]);
            let problem = ThetaProblem {
                scatter: &s,
                gamma: &gamma,
                dual: &dual,
                weights: &weights,
                rho: rng.random_range(0.2..5.0),
            };
            let out = theta_step(&problem, &DMatrix::identity(2, 2), &tight()).unwrap();
            assert!(problem.stationarity_residual(&out.theta).unwrap() < 1e-6);
        }
    }

    #[test]
    fn one_sweep_decreases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let one = SolverConfig {
            inner_sweeps: 1,
            ..SolverConfig::default()
        };
        for _ in 0..100 {
            let d = 4;
            let s = random_spd(&mut rng, d, 0.1);
            let gamma = random_spd(&mut rng, d, 0.5);
            let dual = random_sym(&mut rng, d, 0.2);
            let mut weights = random_sym(&mut rng, d, 0.3).abs();
            weights.fill_diagonal(0.0);
            let problem = ThetaProblem {
                scatter: &s,
                gamma: &gamma,
                dual: &dual,
                weights: &weights,
                rho: 1.0,
            };
            let start = random_spd(&mut rng, d, 1.0);
            let before = problem.objective(&start).unwrap();
            let out = theta_step(&problem, &start, &one).unwrap();
            let after = problem.objective(&out.theta).unwrap();
            assert!(after <= before + 1e-12, "{after} > {before}");
        }
    }

    #[test]
    fn gamma_step_with_zero_dual_is_group_mean() {
        let idx = BlockToeplitzIndex::new(1, 2);
        let theta = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 3.0]);
        let g = gamma_step(&theta, &DMatrix::zeros(2, 2), 2.0, &idx).unwrap();
        assert_eq!(g.blocks()[0][(0, 0)], 2.0);
        assert_eq!(g.blocks()[1][(0, 0)], 0.5);
    }

    #[test]
    fn lla_weights_vanish_in_clipped_region() {
        let theta = DMatrix::from_row_slice(2, 2, &[5.0, 4.0, 4.0, 5.0]);
        let g = lla_weights(&theta, 1.0, 10, 3.7).unwrap();
        assert_eq!(g[(0, 1)], 0.0);
        let g = lla_weights(&DMatrix::identity(2, 2), 1.0, 10, 3.7).unwrap();
        assert_eq!(g[(0, 1)], 0.1);
        assert_eq!(g[(0, 0)], 0.0);
        let g = lla_weights(&theta, 0.0, 10, 3.7).unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            scad_a: 2.0,
            ..SolverConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidA(_))));
        let bad = SolverConfig {
            rho: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_history_is_trivially_monotone() {
        let idx = BlockToeplitzIndex::new(1, 2);
        let state = AdmmState {
            theta: DMatrix::identity(2, 2),
            gamma: ToeplitzMatrix::identity(1, 2),
            dual: DMatrix::zeros(2, 2),
            rho: 1.0,
            iteration: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
        };
        let _ = idx;
        let report = convergence_diagnostics(&[state.clone(), state.clone(), state], 1e-5, 1e-8);
        assert!(report.is_clean());
        assert!(report.step_norms.iter().all(|&s| s == 0.0));
        assert_eq!(*report.distance_to_final.last().unwrap(), 0.0);
    }
}
