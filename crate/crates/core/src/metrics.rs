//! Interval forecast errors and a ridge baseline forecaster.
//!
//! Intervals are compared in (center, half-width) coordinates.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::WindowBatch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    /// Interval with the given center and half-width; negative widths become 0.
    pub fn from_center(center: f64, half_width: f64) -> Self {
        let r = half_width.max(0.0);
        Self::new(center - r, center + r)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    fn delta(&self, other: &Interval) -> Vector2<f64> {
        Vector2::new(self.center() - other.center(), self.half_width() - other.half_width())
    }
}

/// Euclidean distance between (center, half-width) pairs.
pub fn d1(a: &Interval, b: &Interval) -> f64 {
    a.delta(b).norm()
}

/// `√(vᵀ K v)` for `v = (Δcenter, Δhalf-width)`.
pub fn dk(a: &Interval, b: &Interval, kernel: &Matrix2<f64>) -> Result<f64> {
    check_kernel(kernel)?;
    Ok(dk_unchecked(a, b, kernel))
}

fn dk_unchecked(a: &Interval, b: &Interval, kernel: &Matrix2<f64>) -> f64 {
    let v = a.delta(b);
    (v.dot(&(kernel * v))).max(0.0).sqrt()
}

pub fn check_kernel(kernel: &Matrix2<f64>) -> Result<()> {
    let symmetric = (kernel[(0, 1)] - kernel[(1, 0)]).abs() <= 1e-12 * kernel.abs().max();
    if !symmetric || kernel.iter().any(|v| !v.is_finite()) || kernel.cholesky().is_none() {
        return Err(Error::KernelNotSpd);
    }
    Ok(())
}

/// Kernel used for the weighted interval distance by default.
pub fn default_kernel() -> Matrix2<f64> {
    Matrix2::new(5.0, 1.0, 1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    D1,
    Dk(Matrix2<f64>),
}

/// Predicted and actual intervals over a horizon, `T_f × n` each.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalForecast {
    /// First forecast time step (1-based).
    pub horizon_start: usize,
    pub predicted_lower: DMatrix<f64>,
    pub predicted_upper: DMatrix<f64>,
    pub actual_lower: DMatrix<f64>,
    pub actual_upper: DMatrix<f64>,
}

impl IntervalForecast {
    pub fn new(
        horizon_start: usize,
        predicted_lower: DMatrix<f64>,
        predicted_upper: DMatrix<f64>,
        actual_lower: DMatrix<f64>,
        actual_upper: DMatrix<f64>,
    ) -> Result<Self> {
        let shape = predicted_lower.shape();
        for m in [&predicted_upper, &actual_lower, &actual_upper] {
            if m.shape() != shape {
                return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", m.shape(), shape)));
            }
        }
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::ShapeMismatch("empty forecast horizon".into()));
        }
        Ok(Self {
            horizon_start,
            predicted_lower,
            predicted_upper,
            actual_lower,
            actual_upper,
        })
    }

    pub fn len(&self) -> usize {
        self.predicted_lower.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.predicted_lower.ncols()
    }

    pub fn predicted(&self, t: usize, i: usize) -> Interval {
        Interval::new(self.predicted_lower[(t, i)], self.predicted_upper[(t, i)])
    }

    pub fn actual(&self, t: usize, i: usize) -> Interval {
        Interval::new(self.actual_lower[(t, i)], self.actual_upper[(t, i)])
    }
}

/// Mean distance error over all steps and series.
pub fn mde(forecast: &IntervalForecast, metric: Metric) -> Result<f64> {
    if let Metric::Dk(k) = &metric {
        check_kernel(k)?;
    }
    let n = forecast.n();
    let cells = forecast.len() * n;
    let total: f64 = (0..cells)
        .into_par_iter()
        .map(|c| {
            let (p, a) = (forecast.predicted(c / n, c % n), forecast.actual(c / n, c % n));
            match &metric {
                Metric::D1 => d1(&p, &a),
                Metric::Dk(k) => dk_unchecked(&p, &a, k),
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / cells as f64)
}

/// Linear predictor with intercept fitted by ridge regression on centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub coefficients: DMatrix<f64>,
    pub intercept: DVector<f64>,
}

impl RidgeModel {
    /// Solves `min ‖Y − 1bᵀ − XB‖² + ridge‖B‖²`.
    pub fn fit(features: &DMatrix<f64>, targets: &DMatrix<f64>, ridge: f64) -> Result<Self> {
        let (rows, p) = features.shape();
        if targets.nrows() != rows {
            return Err(Error::RowMismatch(format!("{rows} feature rows, {} target rows", targets.nrows())));
        }
        if rows == 0 {
            return Err(Error::EmptyBatch);
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::InvalidConfig("ridge must be non-negative".into()));
        }
        let x_mean = features.row_mean();
        let y_mean = targets.row_mean();
        let xc = DMatrix::from_fn(rows, p, |r, c| features[(r, c)] - x_mean[c]);
        let yc = DMatrix::from_fn(rows, targets.ncols(), |r, c| targets[(r, c)] - y_mean[c]);
        let gram = xc.transpose() * &xc + DMatrix::identity(p, p) * ridge;
        if ridge == 0.0 {
            let eig = gram.clone().symmetric_eigenvalues();
            let max = eig.max().max(0.0);
            if p > 0 && (max == 0.0 || eig.min() <= max * 1e-12) {
                return Err(Error::SingularDesign);
            }
        }
        let coefficients = match gram.cholesky() {
            Some(ch) => ch.solve(&(xc.transpose() * &yc)),
            None => return Err(Error::SingularDesign),
        };
        let intercept = (y_mean - x_mean * &coefficients).transpose();
        Ok(Self {
            coefficients,
            intercept,
        })
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.coefficients.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.nrows(),
                found: features.ncols(),
            });
        }
        let mut out = features * &self.coefficients;
        for mut row in out.row_iter_mut() {
            row += self.intercept.transpose();
        }
        Ok(out)
    }
}

/// Reads a `windowRow,f1,..,fp` CSV and aligns its rows to window rows `0..count`.
pub fn load_features(path: impl AsRef<Path>, count: usize) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(file, count)
}

pub fn read_features(reader: impl std::io::Read, count: usize) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let bad_header = names.first().map(String::as_str) != Some("windowRow")
        || names.len() < 2
        || names[1..].iter().enumerate().any(|(i, h)| *h != format!("f{}", i + 1));
    if bad_header {
        return Err(Error::Parse {
            line: 1,
            message: "header must be windowRow,f1,..,fp".into(),
        });
    }
    let p = names.len() - 1;
    let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != p + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", p + 1, rec.len()),
            });
        }
        let row: usize = rec[0].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid window row {:?}", &rec[0]),
        })?;
        let values: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("invalid feature value {v:?}"),
                    })
            })
            .collect::<Result<_>>()?;
        if row >= count {
            return Err(Error::RowMismatch(format!("window row {row} outside 0..{count}")));
        }
        if rows.insert(row, values).is_some() {
            return Err(Error::RowMismatch(format!("window row {row} listed twice")));
        }
    }
    if let Some(missing) = (0..count).find(|r| !rows.contains_key(r)) {
        return Err(Error::RowMismatch(format!("window row {missing} has no features")));
    }
    Ok(DMatrix::from_fn(count, p, |r, c| rows[&r][c]))
}

/// Flattened `[lower; upper]` vector of every window.
pub fn raw_window_features(batch: &WindowBatch) -> DMatrix<f64> {
    let d = batch.dim();
    DMatrix::from_fn(batch.count(), 2 * d, |r, c| {
        if c < d {
            batch.lower(r)[c]
        } else {
            batch.upper(r)[c - d]
        }
    })
}

/// Next-step `(centers, half-widths)` of every window but the last: row `r`
/// holds the newest time step of window `r + 1`.
pub fn next_step_targets(batch: &WindowBatch) -> DMatrix<f64> {
    let n = batch.n();
    let d = batch.dim();
    DMatrix::from_fn(batch.count().saturating_sub(1), 2 * n, |r, c| {
        let i = d - n + c % n;
        let iv = Interval::new(batch.lower(r + 1)[i], batch.upper(r + 1)[i]);
        if c < n {
            iv.center()
        } else {
            iv.half_width()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Share of forecastable windows held out as the test horizon.
    pub test_fraction: f64,
    pub ridge: f64,
    pub kernel: Matrix2<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            ridge: 1e-3,
            kernel: default_kernel(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub forecast: IntervalForecast,
    pub mde_d1: f64,
    pub mde_dk: f64,
    /// Predicted half-widths raised to zero.
    pub clamped: usize,
}

/// Rolling-origin evaluation: every test window is forecast one step ahead by
/// a ridge model fitted on all earlier windows whose targets are observed.
pub fn rolling_origin(batch: &WindowBatch, features: &DMatrix<f64>, opts: &EvalOptions) -> Result<EvalReport> {
    check_kernel(&opts.kernel)?;
    if features.nrows() != batch.count() {
        return Err(Error::RowMismatch(format!(
            "{} feature rows for {} windows",
            features.nrows(),
            batch.count()
        )));
    }
    if !(opts.test_fraction > 0.0 && opts.test_fraction < 1.0) {
        return Err(Error::InvalidConfig("test fraction must lie in (0, 1)".into()));
    }
    let targets = next_step_targets(batch);
    let samples = targets.nrows();
    let test = ((samples as f64 * opts.test_fraction).ceil() as usize).max(1);
    if samples < test + 2 {
        return Err(Error::InvalidConfig(format!("{} windows are too few to evaluate", batch.count())));
    }
    let first = samples - test;
    let n = batch.n();

    let predictions: Vec<DMatrix<f64>> = (first..samples)
        .into_par_iter()
        .map(|s| {
            let model = RidgeModel::fit(&features.rows(0, s).into_owned(), &targets.rows(0, s).into_owned(), opts.ridge)?;
            model.predict(&features.rows(s, 1).into_owned())
        })
        .collect::<Result<_>>()?;

    let mut clamped = 0;
    let mut pl = DMatrix::zeros(test, n);
    let mut pu = DMatrix::zeros(test, n);
    let mut al = DMatrix::zeros(test, n);
    let mut au = DMatrix::zeros(test, n);
    for (t, pred) in predictions.iter().enumerate() {
        for i in 0..n {
            let hw = pred[(0, n + i)];
            if hw < 0.0 {
                clamped += 1;
            }
            let p = Interval::from_center(pred[(0, i)], hw);
            pl[(t, i)] = p.lower;
            pu[(t, i)] = p.upper;
            let a = Interval::from_center(targets[(first + t, i)], targets[(first + t, n + i)]);
            al[(t, i)] = a.lower;
            au[(t, i)] = a.upper;
        }
    }
    // Sample s forecasts the last step of window s + 1, which ends at time s + 1 + w.
    let forecast = IntervalForecast::new(first + 1 + batch.w(), pl, pu, al, au)?;
    Ok(EvalReport {
        mde_d1: mde(&forecast, Metric::D1)?,
        mde_dk: mde(&forecast, Metric::Dk(opts.kernel))?,
        forecast,
        clamped,
    })
}
