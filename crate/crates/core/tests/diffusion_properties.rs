use latentwarn_core::diffusion::{
    embed, embed_with_drift, estimate_drift, kernel_matrix, markov_eigenvalues, markov_normalize, spectral_embedding, Dimension,
    DriftField, KernelConfig,
};
use latentwarn_core::ingest::{Origin, TimeSeriesMatrix};
use latentwarn_core::stats::spearman;
use latentwarn_core::synthetic::{generate, SyntheticSpec};
use latentwarn_core::{seed, Matrix};
use proptest::prelude::*;
use rand::Rng;

fn random_points(n: usize, dim: usize, seed: u64) -> TimeSeriesMatrix {
    let mut rng = seed::rng(seed);
    let data: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    TimeSeriesMatrix::new(Matrix::from_vec(n, dim, data).unwrap(), 0.0625, Origin::Synthetic).unwrap()
}

fn double_well(length: usize, seed: u64) -> latentwarn_core::synthetic::SyntheticData {
    generate(&SyntheticSpec { length, seed, ..SyntheticSpec::default() }).unwrap()
}

#[test]
fn markov_rows_sum_to_one() {
    let ts = random_points(500, 20, 1);
    for cfg in [KernelConfig::isotropic(1.0), KernelConfig::directed(1.0)] {
        let k = kernel_matrix(&ts, &cfg, Some(&estimate_drift(&ts))).unwrap();
        let op = markov_normalize(&k).unwrap();
        for r in 0..500 {
            let s: f64 = op.transition.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn isotropic_kernel_symmetric_directed_not() {
    let data = double_well(120, 3);
    let drift = estimate_drift(&data.observed);
    let iso = kernel_matrix(&data.observed, &KernelConfig::isotropic(1.0), None).unwrap();
    let dir = kernel_matrix(&data.observed, &KernelConfig::directed(1.0), Some(&drift)).unwrap();
    assert_eq!(iso, iso.transpose());
    assert!(dir.max_abs_diff(&dir.transpose()) > 0.0);
    for i in 0..120 {
        assert_eq!(iso[(i, i)], 1.0);
        assert_eq!(dir[(i, i)], 1.0);
    }
}

#[test]
fn two_point_fixture() {
    // kernel between x = 0 and y = 1 at epsilon 1
    let ts = TimeSeriesMatrix::new(Matrix::from_rows(&[[0.0], [1.0], [9.0]]).unwrap(), 1.0, Origin::Synthetic).unwrap();
    let a = kernel_matrix(&ts, &KernelConfig::isotropic(1.0), None).unwrap()[(0, 1)];
    assert_eq!(a, (-1.0f64).exp());
    let k = Matrix::from_rows(&[[1.0, a], [a, 1.0]]).unwrap();
    let op = markov_normalize(&k).unwrap();
    let lam = markov_eigenvalues(&op).unwrap();
    assert!((lam[0] - 1.0).abs() < 1e-12);
    assert!((lam[1] - (1.0 - a) / (1.0 + a)).abs() < 1e-12);
    assert!((lam[1] - 0.462_117).abs() < 1e-6);
    let s = spectral_embedding(&op, 1, &KernelConfig::isotropic(1.0)).unwrap();
    assert!(s.eigenvectors.column(0).iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn isotropic_leading_pair_is_stationary() {
    let data = double_well(400, 5);
    let e = embed(&data.observed, &KernelConfig::isotropic(1.0), 6, Dimension::Fixed(3)).unwrap();
    assert!((e.eigenvalues[0] - 1.0).abs() < 1e-9);
    let first = e.eigenvectors.column(0);
    let (lo, hi) = first.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!((hi - lo) / hi.abs() < 1e-6);
    assert!(e.eigenvalues.iter().all(|l| l.abs() <= 1.0 + 1e-9));
    for c in 0..3 {
        let lam = e.coordinate_eigenvalue(c);
        for i in 0..400 {
            assert_eq!(e.coordinates[(i, c)], lam * e.eigenvectors[(i, c + 1)]);
        }
    }
}

#[test]
fn directed_leading_eigenvalue_below_one() {
    let data = double_well(200, 7);
    let e = embed(&data.observed, &KernelConfig::directed(1.0), 4, Dimension::Fixed(1)).unwrap();
    assert!(e.eigenvalues[0] < 1.0 - 1e-9, "{:?}", e.eigenvalues);
    assert!(e.eigenvalues.iter().all(|l| l.abs() <= 1.0 + 1e-9));
    assert_eq!(e.coordinate_offset, 0);
}

#[test]
fn training_points_extend_to_their_coordinates() {
    let data = double_well(300, 9);
    let e = embed(&data.observed, &KernelConfig::isotropic(1.0), 5, Dimension::Fixed(3)).unwrap();
    let ext = e.extend(data.observed.data(), data.observed.dt()).unwrap();
    assert!(ext.max_abs_diff(&e.coordinates) < 1e-8);
}

#[test]
fn midpoint_of_symmetric_pair_extends_to_mean() {
    let ts = TimeSeriesMatrix::new(Matrix::from_rows(&[[-1.0], [1.0], [-0.2], [0.2]]).unwrap(), 1.0, Origin::Synthetic)
        .unwrap();
    let e = embed(&ts, &KernelConfig::isotropic(1.0), 2, Dimension::Fixed(1)).unwrap();
    let ext = e.extend(&Matrix::from_rows(&[[0.0]]).unwrap(), 1.0).unwrap();
    let mean = 0.5 * (e.coordinates[(0, 0)] + e.coordinates[(1, 0)]);
    assert!((ext[(0, 0)] - mean).abs() < 1e-12);
}

#[test]
fn held_out_points_match_full_embedding() {
    let data = double_well(1000, 13);
    let x = data.observed.data();
    let mut rng = seed::rng(2);
    let mut held: Vec<usize> = Vec::new();
    while held.len() < 50 {
        let i = rng.gen_range(0..1000);
        if !held.contains(&i) {
            held.push(i);
        }
    }
    let train: Vec<usize> = (0..1000).filter(|i| !held.contains(i)).collect();
    let cfg = KernelConfig::isotropic(1.0);
    let ts_train = TimeSeriesMatrix::new(x.select_rows(&train), data.observed.dt(), Origin::Synthetic).unwrap();
    let partial = embed(&ts_train, &cfg, 3, Dimension::Fixed(1)).unwrap();
    let full = embed(&data.observed, &cfg, 3, Dimension::Fixed(1)).unwrap();
    let ext = partial.extend(&x.select_rows(&held), data.observed.dt()).unwrap();
    let truth: Vec<f64> = held.iter().map(|&i| full.coordinates[(i, 0)]).collect();
    let got = ext.column(0);
    let sign = if truth.iter().zip(&got).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let column = full.coordinates.column(0);
    let range = column.iter().cloned().fold(f64::MIN, f64::max) - column.iter().cloned().fold(f64::MAX, f64::min);
    let worst = truth.iter().zip(&got).map(|(a, b)| (a - sign * b).abs()).fold(0.0, f64::max);
    assert!(worst < 0.05 * range, "{worst} vs range {range}");
}

#[test]
fn linear_lift_first_coordinate_tracks_latent() {
    let data = double_well(800, 21);
    let e = embed(&data.observed, &KernelConfig::isotropic(1.0), 3, Dimension::Fixed(1)).unwrap();
    let rho = spearman(&e.coordinates.column(0), &data.latent.data().column(0));
    assert!(rho.abs() > 0.9, "{rho}");
}

#[test]
fn explicit_field_matches_estimated_field() {
    let data = double_well(150, 4);
    let estimated = estimate_drift(&data.observed);
    let explicit = DriftField::from_gradient(estimated.gradient().clone()).unwrap();
    let cfg = KernelConfig::directed(1.0);
    let a = embed(&data.observed, &cfg, 3, Dimension::Fixed(1)).unwrap();
    let b = embed_with_drift(&data.observed, &cfg, Some(&explicit), 3, Dimension::Fixed(1)).unwrap();
    assert_eq!(a.coordinates, b.coordinates);
}

proptest! {
    #[test]
    fn wider_kernel_raises_every_off_diagonal(points in prop::collection::vec(-2.0f64..2.0, 6..20), e1 in 0.1f64..2.0, factor in 1.01f64..3.0) {
        let n = points.len() / 2;
        let ts = TimeSeriesMatrix::new(Matrix::from_vec(n, 2, points[..2 * n].to_vec()).unwrap(), 1.0, Origin::Synthetic);
        prop_assume!(ts.is_ok());
        let ts = ts.unwrap();
        let a = kernel_matrix(&ts, &KernelConfig::isotropic(e1), None).unwrap();
        let b = kernel_matrix(&ts, &KernelConfig::isotropic(e1 * factor), None).unwrap();
        for i in 0..n {
            for j in 0..n {
                let same = ts.data().row(i) == ts.data().row(j);
                if i != j && !same && a[(i, j)] > 0.0 {
                    prop_assert!(b[(i, j)] > a[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn markov_rows_stochastic(points in prop::collection::vec(-3.0f64..3.0, 9..60), eps in 0.05f64..5.0) {
        let n = points.len() / 3;
        let ts = TimeSeriesMatrix::new(Matrix::from_vec(n, 3, points[..3 * n].to_vec()).unwrap(), 0.5, Origin::Synthetic).unwrap();
        let drift = estimate_drift(&ts);
        let k = kernel_matrix(&ts, &KernelConfig::directed(eps), Some(&drift)).unwrap();
        let op = markov_normalize(&k).unwrap();
        for r in 0..n {
            let s: f64 = op.transition.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
