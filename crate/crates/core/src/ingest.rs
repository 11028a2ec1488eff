//! Interval-valued series ingestion and windowing.
//!
//! Input files are long-format CSV with the header `t,series,lower,upper`,
//! 1-based `t` and `series`, and one row per `(t, series)` pair.
//!
//! Windows stack observations time-major: the window ending at time `t`
//! is `[y(t-w+1, 1..n), y(t-w+2, 1..n), ..., y(t, 1..n)]`, so the lag-`d`
//! block of a block-Toeplitz precision matrix couples series across `d`
//! time steps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["t", "series", "lower", "upper"];

/// `n` interval-valued series observed over `T` time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSeries {
    lower: DMatrix<f64>,
    upper: DMatrix<f64>,
}

impl IntervalSeries {
    /// Builds a series from `T x n` bound matrices, validating ordering and finiteness.
    pub fn new(lower: DMatrix<f64>, upper: DMatrix<f64>) -> Result<Self> {
        if lower.shape() != upper.shape() {
            return Err(Error::ShapeMismatch(format!(
                "lower is {:?}, upper is {:?}",
                lower.shape(),
                upper.shape()
            )));
        }
        if lower.nrows() == 0 || lower.ncols() == 0 {
            return Err(Error::ShapeMismatch("series must be non-empty".into()));
        }
        for t in 0..lower.nrows() {
            for i in 0..lower.ncols() {
                let (lo, up) = (lower[(t, i)], upper[(t, i)]);
                if !lo.is_finite() || !up.is_finite() {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("non-finite value at t={}, series={}", t + 1, i + 1),
                    });
                }
                if lo > up {
                    return Err(Error::IntervalOrderViolation {
                        t: t + 1,
                        series: i + 1,
                        lower: lo,
                        upper: up,
                    });
                }
            }
        }
        Ok(Self { lower, upper })
    }

    /// Number of series.
    pub fn n(&self) -> usize {
        self.lower.ncols()
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.lower.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.nrows() == 0
    }

    /// `T x n` lower bounds; row `t` holds time `t + 1`.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DMatrix<f64> {
        &self.upper
    }
}

/// Reads a long-format interval CSV.
pub fn read_interval_csv(path: impl AsRef<Path>) -> Result<IntervalSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_interval_reader(file)
}

/// Parses long-format interval CSV from any reader.
pub fn read_interval_reader<R: std::io::Read>(reader: R) -> Result<IntervalSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `t,series,lower,upper`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut rows: Vec<(usize, usize, f64, f64, u64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let index = |k: usize, name: &str| -> Result<usize> {
            let v: usize = record[k].parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {name} `{}`", &record[k]),
            })?;
            if v == 0 {
                return Err(Error::Parse {
                    line,
                    message: format!("{name} indices are 1-based"),
                });
            }
            Ok(v)
        };
        let value = |k: usize, name: &str| -> Result<f64> {
            let v: f64 = record[k].parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {name} `{}`", &record[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite {name} `{}`", &record[k]),
                });
            }
            Ok(v)
        };
        let t = index(0, "t")?;
        let series = index(1, "series")?;
        let lower = value(2, "lower")?;
        let upper = value(3, "upper")?;
        if lower > upper {
            return Err(Error::IntervalOrderViolation {
                t,
                series,
                lower,
                upper,
            });
        }
        rows.push((t, series, lower, upper, line));
    }

    let len = rows.iter().map(|r| r.0).max().ok_or(Error::Parse {
        line: 1,
        message: "no observations".into(),
    })?;
    let n = rows.iter().map(|r| r.1).max().unwrap_or(0);

    let mut lower = DMatrix::<f64>::zeros(len, n);
    let mut upper = DMatrix::<f64>::zeros(len, n);
    let mut seen = vec![false; len * n];
    for &(t, series, lo, up, line) in &rows {
        let cell = (t - 1) * n + (series - 1);
        if seen[cell] {
            return Err(Error::Parse {
                line,
                message: format!("duplicate observation for t={t}, series={series}"),
            });
        }
        seen[cell] = true;
        lower[(t - 1, series - 1)] = lo;
        upper[(t - 1, series - 1)] = up;
    }
    if let Some(cell) = seen.iter().position(|s| !s) {
        return Err(Error::MissingCell {
            t: cell / n + 1,
            series: cell % n + 1,
        });
    }

    IntervalSeries::new(lower, upper)
}

/// Writes a series in the same long format, sorted by `(t, series)`.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_interval_csv(series: &IntervalSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "t,series,lower,upper")?;
        for t in 0..series.len() {
            for i in 0..series.n() {
                writeln!(
                    out,
                    "{},{},{:?},{:?}",
                    t + 1,
                    i + 1,
                    series.lower[(t, i)],
                    series.upper[(t, i)]
                )?;
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Fixed-width interval vectors built from a series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    n: usize,
    w: usize,
    lower: Vec<DVector<f64>>,
    upper: Vec<DVector<f64>>,
    source_time: Vec<usize>,
}

impl WindowBatch {
    /// Assembles a batch from precomputed window vectors of length `n * w`.
    /// Row `r` is assigned the ending time `r + w`.
    pub fn from_vectors(
        n: usize,
        w: usize,
        lower: Vec<DVector<f64>>,
        upper: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if n == 0 || w == 0 {
            return Err(Error::InvalidConfig("n and w must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} lower windows vs {} upper windows",
                lower.len(),
                upper.len()
            )));
        }
        let d = n * w;
        for (lo, up) in lower.iter().zip(&upper) {
            for v in [lo, up] {
                if v.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: v.len(),
                    });
                }
            }
            if lo.iter().zip(up.iter()).any(|(a, b)| a > b) {
                return Err(Error::ShapeMismatch(
                    "window lower bound exceeds upper bound".into(),
                ));
            }
        }
        let source_time = (0..lower.len()).map(|r| r + w).collect();
        Ok(Self {
            n,
            w,
            lower,
            upper,
            source_time,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Window vector dimension `n * w`.
    pub fn dim(&self) -> usize {
        self.n * self.w
    }

    /// Number of windows.
    pub fn count(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self, row: usize) -> &DVector<f64> {
        &self.lower[row]
    }

    pub fn upper(&self, row: usize) -> &DVector<f64> {
        &self.upper[row]
    }

    pub fn lower_vecs(&self) -> &[DVector<f64>] {
        &self.lower
    }

    pub fn upper_vecs(&self) -> &[DVector<f64>] {
        &self.upper
    }

    /// 1-based ending time of window `row`.
    pub fn source_time(&self, row: usize) -> usize {
        self.source_time[row]
    }

    /// Values of series `dim` inside window `row`, oldest first.
    pub fn channel(&self, row: usize, side: crate::BoundSide, dim: usize) -> Vec<f64> {
        let v = match side {
            crate::BoundSide::Lower => &self.lower[row],
            crate::BoundSide::Upper => &self.upper[row],
        };
        (0..self.w).map(|tau| v[tau * self.n + dim]).collect()
    }

    /// Batch restricted to the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            n: self.n,
            w: self.w,
            lower: rows.iter().map(|&r| self.lower[r].clone()).collect(),
            upper: rows.iter().map(|&r| self.upper[r].clone()).collect(),
            source_time: rows.iter().map(|&r| self.source_time[r]).collect(),
        }
    }
}

/// Builds the `T - w + 1` full-width windows of a series.
///
/// Leading windows shorter than `w` are not produced.
pub fn build_windows(series: &IntervalSeries, w: usize) -> Result<WindowBatch> {
    let len = series.len();
    if w == 0 {
        return Err(Error::InvalidConfig("window width must be positive".into()));
    }
    if w > len {
        return Err(Error::WindowTooLarge { w, len });
    }
    let n = series.n();
    let count = len - w + 1;
    let stack = |m: &DMatrix<f64>, r: usize| {
        DVector::from_fn(n * w, |j, _| m[(r + j / n, j % n)])
    };
    let lower = (0..count).map(|r| stack(&series.lower, r)).collect();
    let upper = (0..count).map(|r| stack(&series.upper, r)).collect();
    Ok(WindowBatch {
        n,
        w,
        lower,
        upper,
        source_time: (0..count).map(|r| r + w).collect(),
    })
}
