//! Recurrence-plot images of windows and export of a labeled image dataset.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentPath;
use crate::error::{Error, Result};
use crate::ingest::WindowBatch;
use crate::BoundSide;

/// Windows sampled when deriving thresholds from distance quantiles.
pub const QUANTILE_SAMPLE: usize = 200;
const QUANTILE_SEED: u64 = 0x5eed;

/// How the per-dimension thresholds are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    Fixed(Vec<f64>),
    /// Quantile `q ∈ (0, 1)` of pairwise trajectory distances.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpConfig {
    /// Trajectory dimension.
    pub m: usize,
    /// Time gap between trajectory coordinates.
    pub kappa: usize,
    pub thresholds: Thresholds,
}

impl Default for RpConfig {
    fn default() -> Self {
        Self {
            m: 1,
            kappa: 1,
            thresholds: Thresholds::Quantile(0.5),
        }
    }
}

impl RpConfig {
    /// Image side for windows of width `w`.
    pub fn side(&self, w: usize) -> Result<usize> {
        let span = (self.m.max(1) - 1) * self.kappa;
        let side = w as isize - span as isize;
        if self.m == 0 || self.kappa == 0 || side < 2 {
            return Err(Error::WindowTooShortForTrajectory { side });
        }
        Ok(side as usize)
    }

    pub fn validate(&self, n: usize, w: usize) -> Result<()> {
        self.side(w)?;
        match &self.thresholds {
            Thresholds::Fixed(eps) => {
                if eps.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: eps.len(),
                    });
                }
                if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(Error::InvalidConfig("thresholds must be positive".into()));
                }
            }
            Thresholds::Quantile(q) => {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(Error::InvalidConfig(format!("quantile {q} outside (0, 1)")));
                }
            }
        }
        Ok(())
    }

    /// Concrete thresholds for `batch`, computing quantiles if requested.
    pub fn resolve(&self, batch: &WindowBatch) -> Result<RpParams> {
        self.validate(batch.n(), batch.w())?;
        let eps = match &self.thresholds {
            Thresholds::Fixed(eps) => eps.clone(),
            Thresholds::Quantile(_) => thresholds_from_quantile(batch, self)?,
        };
        Ok(RpParams {
            m: self.m,
            kappa: self.kappa,
            eps,
        })
    }
}

/// Trajectory settings with one threshold per series.
#[derive(Debug, Clone, PartialEq)]
pub struct RpParams {
    pub m: usize,
    pub kappa: usize,
    pub eps: Vec<f64>,
}

/// Square 0/1 image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    side: usize,
    pixels: Vec<u8>,
}

impl BinaryImage {
    pub fn from_fn(side: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut pixels = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                pixels.push(f(i, j) as u8);
            }
        }
        Self { side, pixels }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.pixels[i * self.side + j] == 1
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.side).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn has_unit_diagonal(&self) -> bool {
        (0..self.side).all(|i| self.get(i, i))
    }

    /// Encodes as an 8-bit grayscale PNG, 1 → 255 and 0 → 0.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.side as u32, self.side as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let data: Vec<u8> = self.pixels.iter().map(|&p| p * 255).collect();
        let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
        let mut writer = enc.write_header().map_err(to_io)?;
        writer.write_image_data(&data).map_err(to_io)?;
        writer.finish().map_err(to_io)
    }
}

fn trajectories(series: &[f64], m: usize, kappa: usize) -> Result<Vec<Vec<f64>>> {
    let side = series.len() as isize - ((m.max(1) - 1) * kappa) as isize;
    if m == 0 || kappa == 0 || side < 2 {
        return Err(Error::WindowTooShortForTrajectory { side });
    }
    Ok((0..side as usize)
        .map(|i| (0..m).map(|c| series[i + c * kappa]).collect())
        .collect())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Recurrence plot of one scalar series with threshold `params.eps[dim]`.
/// A pair is recurrent when its distance is at most the threshold.
pub fn rp_matrix(series: &[f64], params: &RpParams, dim: usize) -> Result<BinaryImage> {
    let traj = trajectories(series, params.m, params.kappa)?;
    let eps = params.eps[dim];
    Ok(BinaryImage::from_fn(traj.len(), |i, j| eps - distance(&traj[i], &traj[j]) >= 0.0))
}

/// Element-wise product of recurrence plots.
pub fn jrp_fuse(rps: &[BinaryImage]) -> Result<BinaryImage> {
    let first = rps
        .first()
        .ok_or_else(|| Error::InvalidConfig("no recurrence plots to fuse".into()))?;
    for rp in rps {
        if rp.side != first.side {
            return Err(Error::SideMismatch {
                expected: first.side,
                found: rp.side,
            });
        }
    }
    let mut out = first.clone();
    for rp in &rps[1..] {
        for (o, p) in out.pixels.iter_mut().zip(&rp.pixels) {
            *o &= p;
        }
    }
    Ok(out)
}

/// Joint recurrence plot of one bound of one window.
pub fn window_jrp(batch: &WindowBatch, row: usize, side: BoundSide, params: &RpParams) -> Result<BinaryImage> {
    let rps: Vec<BinaryImage> = (0..batch.n())
        .map(|h| rp_matrix(&batch.channel(row, side, h), params, h))
        .collect::<Result<_>>()?;
    jrp_fuse(&rps)
}

/// Type-7 (linear interpolation) sample quantile of unsorted values.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Per-series thresholds as the `q`-quantile of pairwise trajectory distances
/// pooled over both bounds of up to [`QUANTILE_SAMPLE`] windows.
///
/// A series whose distances are all zero gets the smallest positive threshold.
pub fn thresholds_from_quantile(batch: &WindowBatch, cfg: &RpConfig) -> Result<Vec<f64>> {
    let q = match cfg.thresholds {
        Thresholds::Quantile(q) if q > 0.0 && q < 1.0 => q,
        Thresholds::Quantile(q) => return Err(Error::InvalidConfig(format!("quantile {q} outside (0, 1)"))),
        Thresholds::Fixed(_) => return Err(Error::InvalidConfig("thresholds are fixed".into())),
    };
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    cfg.side(batch.w())?;
    let rows: Vec<usize> = if batch.count() <= QUANTILE_SAMPLE {
        (0..batch.count()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(QUANTILE_SEED);
        let mut picked = rand::seq::index::sample(&mut rng, batch.count(), QUANTILE_SAMPLE).into_vec();
        picked.sort_unstable();
        picked
    };
    (0..batch.n())
        .map(|h| {
            let mut dists = Vec::new();
            for &r in &rows {
                for side in BoundSide::BOTH {
                    let traj = trajectories(&batch.channel(r, side, h), cfg.m, cfg.kappa)?;
                    for i in 0..traj.len() {
                        for j in i + 1..traj.len() {
                            dists.push(distance(&traj[i], &traj[j]));
                        }
                    }
                }
            }
            if dists.iter().all(|&d| d == 0.0) {
                log::warn!("series {} has only zero trajectory distances", h + 1);
                return Ok(f64::MIN_POSITIVE);
            }
            Ok(quantile(&mut dists, q))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestEntry {
    pub file: String,
    /// 1-based cluster label.
    pub label: usize,
    pub window_row: usize,
    pub bound_side: BoundSide,
}

/// Writes two JRP images per window (one per bound) named
/// `cls{label}_t{row}_{lower|upper}.png` and a `manifest.json` listing them.
pub fn build_image_dataset(
    batch: &WindowBatch,
    path: &AssignmentPath,
    params: &RpParams,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestEntry>> {
    let out_dir = out_dir.as_ref();
    if path.labels.len() != batch.count() {
        return Err(Error::RowMismatch(format!(
            "{} labels for {} windows",
            path.labels.len(),
            batch.count()
        )));
    }
    if params.eps.len() != batch.n() {
        return Err(Error::DimensionMismatch {
            expected: batch.n(),
            found: params.eps.len(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let jobs: Vec<(usize, BoundSide)> = (0..batch.count())
        .flat_map(|r| BoundSide::BOTH.into_iter().map(move |s| (r, s)))
        .collect();
    let manifest: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|&(row, side)| {
            let label = path.labels[row] + 1;
            let file = format!("cls{label}_t{row}_{}.png", side.as_str());
            window_jrp(batch, row, side, params)?.write_png(&out_dir.join(&file))?;
            Ok(ManifestEntry {
                file,
                label,
                window_row: row,
                bound_side: side,
            })
        })
        .collect::<Result<_>>()?;
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::CorruptFile(e.to_string()))?;
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eps: f64) -> RpParams {
        RpParams {
            m: 1,
            kappa: 1,
            eps: vec![eps],
        }
    }

    #[test]
    fn three_point_example() {
        let rp = rp_matrix(&[0.0, 1.0, 3.0], &params(1.5), 0).unwrap();
        let expected = [[1, 1, 0], [1, 1, 0], [0, 0, 1]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(rp.get(i, j), expected[i][j] == 1);
            }
        }
    }

    #[test]
    fn threshold_hit_is_recurrent() {
        let rp = rp_matrix(&[0.0, 1.0], &params(1.0), 0).unwrap();
        assert!(rp.get(0, 1));
    }

    #[test]
    fn embedding_side() {
        let p = RpParams {
            m: 2,
            kappa: 2,
            eps: vec![1.0],
        };
        let rp = rp_matrix(&[0.0, 1.0, 2.0, 3.0, 4.0], &p, 0).unwrap();
        assert_eq!(rp.side(), 3);
        let p = RpParams { m: 3, ..p };
        assert!(matches!(
            rp_matrix(&[0.0, 1.0, 2.0, 3.0, 4.0], &p, 0),
            Err(Error::WindowTooShortForTrajectory { side: 1 })
        ));
    }

    #[test]
    fn median_of_three_distances() {
        let b = WindowBatch::from_vectors(
            1,
            3,
            vec![nalgebra::DVector::from_vec(vec![0.0, 1.0, 3.0])],
            vec![nalgebra::DVector::from_vec(vec![0.0, 1.0, 3.0])],
        )
        .unwrap();
        let eps = thresholds_from_quantile(&b, &RpConfig::default()).unwrap();
        assert_eq!(eps, vec![2.0]);
    }

    #[test]
    fn type7_quantile() {
        assert_eq!(quantile(&mut [4.0, 1.0, 2.0, 3.0], 0.5), 2.5);
        assert_eq!(quantile(&mut [5.0], 0.3), 5.0);
    }

    #[test]
    fn fuse_rejects_mixed_sides() {
        let a = BinaryImage::from_fn(2, |_, _| true);
        let b = BinaryImage::from_fn(3, |_, _| true);
        assert!(matches!(jrp_fuse(&[a, b]), Err(Error::SideMismatch { .. })));
        assert!(jrp_fuse(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RpConfig::default().validate(2, 3).is_ok());
        let bad_q = RpConfig {
            thresholds: Thresholds::Quantile(1.0),
            ..RpConfig::default()
        };
        assert!(bad_q.validate(2, 3).is_err());
        let wrong_len = RpConfig {
            thresholds: Thresholds::Fixed(vec![1.0]),
            ..RpConfig::default()
        };
        assert!(wrong_len.validate(2, 3).is_err());
        assert!(RpConfig::default().validate(2, 1).is_err());
    }
}
