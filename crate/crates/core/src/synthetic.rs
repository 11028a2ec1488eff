//! Synthetic regime-switching interval data with known block-Toeplitz structure.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ingest::{IntervalSeries, WindowBatch};
use crate::linalg::inverse_spd;
use crate::toeplitz::ToeplitzMatrix;

/// Gaussian window model used to generate one regime.
#[derive(Debug, Clone)]
pub struct Regime {
    pub mean_lower: DVector<f64>,
    pub mean_upper: DVector<f64>,
    pub precision: ToeplitzMatrix,
}

/// Draws `count` vectors from `N(mean, precision⁻¹)`.
pub fn sample_gaussian(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<DVector<f64>>> {
    let cov = inverse_spd(precision)?;
    let chol = cov.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    Ok((0..count)
        .map(|_| {
            let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            mean + &l * z
        })
        .collect())
}

/// Two sparse block-Toeplitz regimes for `n = 2`, `w = 3`.
///
/// Regime A couples the two series contemporaneously; regime B has no
/// contemporaneous link but a strong lag-1 cross dependence.
pub fn demo_regimes() -> [Regime; 2] {
    let a = ToeplitzMatrix::from_blocks(vec![
        DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]),
        DMatrix::zeros(2, 2),
        DMatrix::zeros(2, 2),
    ])
    .expect("valid blocks");
    let b = ToeplitzMatrix::from_blocks(vec![
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, -0.45, 0.0, 0.0]),
        DMatrix::zeros(2, 2),
    ])
    .expect("valid blocks");
    let mean = |lo: f64, hi: f64| (DVector::from_element(6, lo), DVector::from_element(6, hi));
    let (la, ua) = mean(0.0, 4.0);
    let (lb, ub) = mean(0.0, 4.0);
    [
        Regime {
            mean_lower: la,
            mean_upper: ua,
            precision: a,
        },
        Regime {
            mean_lower: lb,
            mean_upper: ub,
            precision: b,
        },
    ]
}

/// Independent windows from alternating regimes.
///
/// `segments` blocks of `per_segment` windows each, regime `s % regimes.len()`
/// for block `s`. Returns the batch and the true regime of every window.
pub fn regime_windows(
    regimes: &[Regime],
    n: usize,
    w: usize,
    segments: usize,
    per_segment: usize,
    seed: u64,
) -> Result<(WindowBatch, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut truth = Vec::new();
    for s in 0..segments {
        let k = s % regimes.len();
        let r = &regimes[k];
        let dense = r.precision.to_dense();
        let lo = sample_gaussian(&r.mean_lower, &dense, per_segment, &mut rng)?;
        let up = sample_gaussian(&r.mean_upper, &dense, per_segment, &mut rng)?;
        for (mut l, mut u) in lo.into_iter().zip(up) {
            order_bounds(&mut l, &mut u);
            lower.push(l);
            upper.push(u);
            truth.push(k);
        }
    }
    Ok((WindowBatch::from_vectors(n, w, lower, upper)?, truth))
}

fn order_bounds(l: &mut DVector<f64>, u: &mut DVector<f64>) {
    for j in 0..l.len() {
        if l[j] > u[j] {
            std::mem::swap(&mut l[j], &mut u[j]);
        }
    }
}

/// A regime-switching interval series.
///
/// Each bound follows the Markov chain whose `w`-step windows have precision
/// `precision`: the newest observation is drawn from its Gaussian conditional
/// given the previous `w - 1`. Regime `s % regimes.len()` runs for
/// `per_segment` steps. Returns the series and the regime of every time step.
pub fn regime_series(
    regimes: &[Regime],
    n: usize,
    w: usize,
    segments: usize,
    per_segment: usize,
    seed: u64,
) -> Result<(IntervalSeries, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = segments * per_segment;
    if len < w {
        return Err(Error::WindowTooLarge { w, len });
    }
    let mut lower = DMatrix::zeros(len, n);
    let mut upper = DMatrix::zeros(len, n);
    let mut truth = Vec::with_capacity(len);

    let first = &regimes[0];
    let dense = first.precision.to_dense();
    for (side, mean) in [(&mut lower, &first.mean_lower), (&mut upper, &first.mean_upper)] {
        let x = &sample_gaussian(mean, &dense, 1, &mut rng)?[0];
        for tau in 0..w - 1 {
            for i in 0..n {
                side[(tau, i)] = x[tau * n + i];
            }
        }
    }

    for t in 0..len {
        let k = (t / per_segment) % regimes.len();
        truth.push(k);
        if t < w - 1 {
            continue;
        }
        let r = &regimes[k];
        let theta = r.precision.to_dense();
        let p = (w - 1) * n;
        let tnn = theta.view((p, p), (n, n)).clone_owned();
        let tnp = theta.view((p, 0), (n, p)).clone_owned();
        let tnn_inv = inverse_spd(&tnn)?;
        let chol = tnn_inv.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        for (side, mean) in [(&mut lower, &r.mean_lower), (&mut upper, &r.mean_upper)] {
            let past = DVector::from_fn(p, |j, _| side[(t + 1 - w + j / n, j % n)] - mean[j]);
            let cond_mean = mean.rows(p, n) - &tnn_inv * (&tnp * past);
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = cond_mean + chol.l() * z;
            for i in 0..n {
                side[(t, i)] = x[i];
            }
        }
    }
    for t in 0..len {
        for i in 0..n {
            if lower[(t, i)] > upper[(t, i)] {
                let tmp = lower[(t, i)];
                lower[(t, i)] = upper[(t, i)];
                upper[(t, i)] = tmp;
            }
        }
    }
    Ok((IntervalSeries::new(lower, upper)?, truth))
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let sum_rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = sum_rows * sum_cols / total;
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::log_det_spd;

    #[test]
    fn demo_regimes_are_spd() {
        for r in demo_regimes() {
            assert!(log_det_spd(&r.precision.to_dense()).is_ok());
        }
    }

    #[test]
    fn ari_extremes() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        let v = adjusted_rand_index(&[0, 1, 0, 1], &[0, 0, 1, 1]);
        assert!(v < 0.0);
    }

    #[test]
    fn series_is_valid_and_deterministic() {
        let regimes = demo_regimes();
        let (a, ta) = regime_series(&regimes, 2, 3, 4, 50, 7).unwrap();
        let (b, _) = regime_series(&regimes, 2, 3, 4, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        assert_eq!(ta[60], 1);
    }
}
