use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use itsclust::imaging::{jrp_fuse, rp_matrix, BinaryImage, RpParams};
use itsclust::ingest::WindowBatch;
use itsclust::metrics::{mde, read_features, IntervalForecast, Metric, RidgeModel};

fn params(m: usize, kappa: usize, eps: f64) -> RpParams {
    RpParams {
        m,
        kappa,
        eps: vec![eps],
    }
}

proptest! {
    #[test]
    fn rp_is_symmetric_with_unit_diagonal(
        series in prop::collection::vec(-5.0f64..5.0, 4..12),
        m in 1usize..3,
        eps in 0.0f64..4.0,
    ) {
        let rp = rp_matrix(&series, &params(m, 1, eps), 0).unwrap();
        prop_assert!(rp.is_symmetric());
        prop_assert!(rp.has_unit_diagonal());
    }

    #[test]
    fn larger_threshold_only_adds_recurrences(
        series in prop::collection::vec(-5.0f64..5.0, 3..10),
        lo in 0.0f64..3.0,
        extra in 0.0f64..3.0,
    ) {
        let a = rp_matrix(&series, &params(1, 1, lo), 0).unwrap();
        let b = rp_matrix(&series, &params(1, 1, lo + extra), 0).unwrap();
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            prop_assert!(x <= y);
        }
    }

    #[test]
    fn fusion_is_order_free(bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 16), 3)) {
        let imgs: Vec<BinaryImage> = bits.iter().map(|b| BinaryImage::from_fn(4, |i, j| b[i * 4 + j])).collect();
        let abc = jrp_fuse(&imgs).unwrap();
        let cab = jrp_fuse(&[imgs[2].clone(), imgs[0].clone(), imgs[1].clone()]).unwrap();
        let nested = jrp_fuse(&[jrp_fuse(&imgs[..2]).unwrap(), imgs[2].clone()]).unwrap();
        prop_assert_eq!(&abc, &cab);
        prop_assert_eq!(&abc, &nested);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(abc.get(i, j), bits.iter().all(|b| b[i * 4 + j]));
            }
        }
        prop_assert_eq!(jrp_fuse(&imgs[..1]).unwrap(), imgs[0].clone());
    }

    #[test]
    fn mde_matches_double_loop(
        cells in prop::collection::vec((-3.0f64..3.0, 0.0f64..2.0, -3.0f64..3.0, 0.0f64..2.0), 6),
    ) {
        let (t, n) = (3, 2);
        let get = |k: usize| cells[k];
        let pl = DMatrix::from_fn(t, n, |r, c| get(r * n + c).0);
        let pu = DMatrix::from_fn(t, n, |r, c| get(r * n + c).0 + get(r * n + c).1);
        let al = DMatrix::from_fn(t, n, |r, c| get(r * n + c).2);
        let au = DMatrix::from_fn(t, n, |r, c| get(r * n + c).2 + get(r * n + c).3);
        let f = IntervalForecast::new(1, pl.clone(), pu.clone(), al.clone(), au.clone()).unwrap();
        let mut total = 0.0;
        for r in 0..t {
            for c in 0..n {
                let dc = (pl[(r, c)] + pu[(r, c)]) / 2.0 - (al[(r, c)] + au[(r, c)]) / 2.0;
                let dr = (pu[(r, c)] - pl[(r, c)]) / 2.0 - (au[(r, c)] - al[(r, c)]) / 2.0;
                total += (dc * dc + dr * dr).sqrt();
            }
        }
        let v = mde(&f, Metric::D1).unwrap();
        prop_assert!((v - total / 6.0).abs() < 1e-12);

        let swap = |m: &DMatrix<f64>| DMatrix::from_fn(t, n, |r, c| m[(r, n - 1 - c)]);
        let g = IntervalForecast::new(1, swap(&pl), swap(&pu), swap(&al), swap(&au)).unwrap();
        prop_assert!((mde(&g, Metric::D1).unwrap() - v).abs() < 1e-12);
    }
}

#[test]
fn ridge_matches_normal_equations() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let x = DMatrix::from_fn(20, 5, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(20, 2, |_, _| rng.random_range(-1.0..1.0));
        let ridge = rng.random_range(0.0..1.0);
        let model = RidgeModel::fit(&x, &y, ridge).unwrap();

        // Augmented design with an unpenalized intercept column.
        let xa = DMatrix::from_fn(20, 6, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] });
        let mut penalty = DMatrix::identity(6, 6) * ridge;
        penalty[(0, 0)] = 0.0;
        let beta = (xa.transpose() * &xa + penalty).lu().solve(&(xa.transpose() * &y)).unwrap();
        for k in 0..2 {
            assert!((model.intercept[k] - beta[(0, k)]).abs() < 1e-8);
            for j in 0..5 {
                assert!((model.coefficients[(j, k)] - beta[(j + 1, k)]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn shuffled_feature_rows_align() {
    let ordered = "windowRow,f1,f2\n0,1,2\n1,3,4\n2,5,6\n";
    let shuffled = "windowRow,f1,f2\n2,5,6\n0,1,2\n1,3,4\n";
    assert_eq!(read_features(ordered.as_bytes(), 3).unwrap(), read_features(shuffled.as_bytes(), 3).unwrap());
}

#[test]
fn raw_window_features_pass_through() {
    use itsclust::metrics::{raw_window_features, rolling_origin, EvalOptions};
    let count = 40;
    let lower: Vec<DVector<f64>> = (0..count).map(|r| DVector::from_fn(2, |i, _| ((r + i) as f64 * 0.7).sin())).collect();
    let upper: Vec<DVector<f64>> = lower.iter().map(|l| l.map(|v| v + 1.0)).collect();
    let batch = WindowBatch::from_vectors(1, 2, lower, upper).unwrap();
    let raw = raw_window_features(&batch);
    let mut csv = String::from("windowRow,f1,f2,f3,f4\n");
    for r in (0..count).rev() {
        let row: Vec<String> = raw.row(r).iter().map(|v| format!("{v:?}")).collect();
        csv.push_str(&format!("{r},{}\n", row.join(",")));
    }
    let loaded = read_features(csv.as_bytes(), count).unwrap();
    let opts = EvalOptions::default();
    let a = rolling_origin(&batch, &raw, &opts).unwrap();
    let b = rolling_origin(&batch, &loaded, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn leaked_targets_forecast_perfectly() {
    use itsclust::metrics::{next_step_targets, rolling_origin, EvalOptions};
    let count = 60;
    let lower: Vec<DVector<f64>> = (0..count).map(|r| DVector::from_fn(2, |i, _| ((r + i) as f64 * 1.3).cos())).collect();
    let upper: Vec<DVector<f64>> = lower.iter().enumerate().map(|(r, l)| l.map(|v| v + 0.5 + (r % 3) as f64)).collect();
    let batch = WindowBatch::from_vectors(1, 2, lower, upper).unwrap();
    let targets = next_step_targets(&batch);
    let features = DMatrix::from_fn(count, 2, |r, c| if r + 1 < count { targets[(r, c)] } else { 0.0 });
    let opts = EvalOptions {
        ridge: 1e-9,
        ..EvalOptions::default()
    };
    let report = rolling_origin(&batch, &features, &opts).unwrap();
    assert!(report.mde_d1 < 1e-6, "{}", report.mde_d1);
    assert!(report.mde_dk < 1e-6);
}
