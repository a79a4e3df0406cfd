use latentwarn_core::sde::{
    fit, fit_traced, make_snapshots, mean_loss_and_gradient, simulate, validate_density, DescentMethod, FitOptions,
    LatentSde, SnapshotOptions, SnapshotSet, DEFAULT_GUARD,
};
use latentwarn_core::{seed, Matrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Independent one-step pairs from `sde`, starting points uniform on
/// `[-a, a]`, first `train` pairs for training.
fn one_step_pairs(sde: &LatentSde, n: usize, train: usize, dt: f64, a: f64, seed: u64) -> SnapshotSet {
    let mut rng = seed::rng(seed);
    let mut cur = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.gen_range(-a..a);
        let xi: f64 = rng.sample(StandardNormal);
        cur.push(z);
        next.push(z + dt * sde.drift(&[z])[0] + dt.sqrt() * sde.diffusion(&[z])[0] * xi);
    }
    SnapshotSet::from_pairs(
        Matrix::column_vector(&cur),
        Matrix::column_vector(&next),
        dt,
        (0..train).collect(),
        (train..n).collect(),
    )
    .unwrap()
}

#[test]
fn recovers_ornstein_uhlenbeck() {
    let truth = LatentSde::univariate(&[0.0, -1.0], 0.5);
    let set = one_step_pairs(&truth, 10_000, 10_000, 0.01, 3.0, 11);
    let opts = FitOptions { drift_degree: 3, diffusion_degree: 0, ..FitOptions::default() };
    let model = fit(&set, &opts).unwrap();
    let c = &model.drift_coeffs()[0];
    assert!((c[1] + 1.0).abs() < 0.15, "{c:?}");
    assert!(c[0].abs() < 0.15 && c[2].abs() < 0.15 && c[3].abs() < 0.15, "{c:?}");
    assert!((model.diffusion(&[0.0])[0] - 0.5).abs() < 0.05);
    assert!(model.diagnostics.as_ref().unwrap().converged);
}

/// Closed-form drift for fixed diffusion: weighted least squares with
/// weights `1 / eta^2`, targets `dz / dt`.
fn wls_drift(set: &SnapshotSet, eta: f64, degree: usize) -> Vec<f64> {
    let p = degree + 1;
    let rows = set.train.len();
    let mut x = DMatrix::zeros(rows, p);
    let mut y = DVector::zeros(rows);
    let w = 1.0 / eta;
    for (r, &i) in set.train.iter().enumerate() {
        let z = set.current[(i, 0)];
        for k in 0..p {
            x[(r, k)] = w * z.powi(k as i32);
        }
        y[r] = w * (set.next[(i, 0)] - z) / set.dt;
    }
    let svd = x.svd(true, true);
    svd.solve(&y, 1e-14).unwrap().iter().copied().collect()
}

#[test]
fn frozen_diffusion_matches_weighted_least_squares() {
    for s in 0..5u64 {
        let mut rng = seed::rng(seed::derive(99, s));
        let drift: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta = rng.gen_range(0.2..0.8);
        let truth = LatentSde::univariate(&drift, eta);
        let set = one_step_pairs(&truth, 2000, 1600, 0.05, 1.5, s);
        let opts = FitOptions { freeze_diffusion: true, initial_diffusion: Some(vec![vec![eta]]), ..FitOptions::default() };
        let model = fit(&set, &opts).unwrap();
        let oracle = wls_drift(&set, eta, 3);
        for (a, b) in model.drift_coeffs()[0].iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-4, "dataset {s}: {a} vs {b}");
        }
    }
}

#[test]
fn noiseless_data_recovers_generating_polynomial() {
    let drift = [0.2, 0.5, -0.6, -1.5];
    let dt = 0.0625;
    let mut rng = seed::rng(5);
    let cur: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let poly = |z: f64| drift.iter().enumerate().map(|(k, c)| c * z.powi(k as i32)).sum::<f64>();
    let next: Vec<f64> = cur.iter().map(|z| z + poly(*z) * dt).collect();
    let set = SnapshotSet::from_pairs(
        Matrix::column_vector(&cur),
        Matrix::column_vector(&next),
        dt,
        (0..400).collect(),
        (400..500).collect(),
    )
    .unwrap();
    let opts = FitOptions { freeze_diffusion: true, initial_diffusion: Some(vec![vec![0.01]]), ..FitOptions::default() };
    let model = fit(&set, &opts).unwrap();
    for (a, b) in model.drift_coeffs()[0].iter().zip(&drift) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let truth = LatentSde::new(2, 3, 1, vec![vec![0.1; 10], vec![-0.2; 10]], vec![vec![0.5, 0.1, 0.0], vec![0.4, 0.0, 0.1]]).unwrap();
    let mut rng = seed::rng(8);
    let n = 200;
    let mut cur = Matrix::zeros(n, 2);
    let mut next = Matrix::zeros(n, 2);
    for i in 0..n {
        let z = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        cur.row_mut(i).copy_from_slice(&z);
        let path = simulate(&truth, &z, 2, 0.1, rng.gen(), DEFAULT_GUARD).unwrap();
        next.row_mut(i).copy_from_slice(path.row(1));
    }
    let set = SnapshotSet::from_pairs(cur, next, 0.1, (0..n).collect(), vec![]).unwrap();
    let idx = set.all_indices();
    for point in 0..10 {
        let mut model = truth.clone();
        let mut theta = model.parameters();
        for (k, v) in theta.iter_mut().enumerate() {
            // keep the constant diffusion terms well away from zero
            let is_constant_diffusion = k == 20 || k == 23;
            *v = if is_constant_diffusion { rng.gen_range(0.4..1.0) } else { rng.gen_range(-0.3..0.3) };
        }
        model.set_parameters(&theta);
        let (_, grad) = mean_loss_and_gradient(&model, &set, &idx).unwrap();
        let h = 1e-5;
        for k in 0..theta.len() {
            let mut plus = theta.clone();
            plus[k] += h;
            let mut minus = theta.clone();
            minus[k] -= h;
            model.set_parameters(&plus);
            let lp = mean_loss_and_gradient(&model, &set, &idx).unwrap().0;
            model.set_parameters(&minus);
            let lm = mean_loss_and_gradient(&model, &set, &idx).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / grad[k].abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-5, "point {point}, parameter {k}: analytic {} vs fd {fd}", grad[k]);
        }
    }
}

#[test]
fn accepted_steps_never_increase_loss() {
    let truth = LatentSde::univariate(&[0.0, 1.0, 0.0, -1.0], 0.5);
    let set = one_step_pairs(&truth, 1000, 800, 0.0625, 1.5, 3);
    for method in [DescentMethod::Fisher, DescentMethod::Gradient { initial_step: 0.1 }] {
        let opts = FitOptions { method, max_iterations: 2000, ..FitOptions::default() };
        let (_, trace) = fit_traced(&set, &opts).unwrap();
        assert!(trace.len() > 1);
        assert!(trace.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn permutation_of_training_pairs_leaves_fit_unchanged() {
    let truth = LatentSde::univariate(&[0.0, 1.0, 0.0, -1.0], 0.5);
    let set = one_step_pairs(&truth, 600, 600, 0.0625, 1.5, 4);
    let mut shuffled = set.clone();
    shuffled.train.reverse();
    let a = fit(&set, &FitOptions::default()).unwrap();
    let b = fit(&shuffled, &FitOptions::default()).unwrap();
    for (x, y) in a.parameters().iter().zip(b.parameters()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn fit_is_deterministic() {
    let truth = LatentSde::univariate(&[0.0, -1.0], 0.3);
    let path = simulate(&truth, &[0.0], 800, 0.05, 2, DEFAULT_GUARD).unwrap();
    let set = make_snapshots(&path, 0.05, &SnapshotOptions { seed: 1, ..SnapshotOptions::default() }).unwrap();
    assert_eq!(fit(&set, &FitOptions::default()).unwrap(), fit(&set, &FitOptions::default()).unwrap());
}

#[test]
fn double_well_long_run_has_modes_near_unit_wells() {
    let dw = LatentSde::univariate(&[0.0, 1.0, 0.0, -1.0], 0.5);
    let path = simulate(&dw, &[0.0], 1_000_000, 0.01, 17, DEFAULT_GUARD).unwrap();
    let hist = latentwarn_core::stats::Histogram::new(path.as_slice(), -2.0, 2.0, 40);
    let smooth: Vec<f64> = hist.counts.iter().map(|c| *c as f64).collect();
    let peaks = latentwarn_core::stats::prominent_peaks(&smooth, 0.1 * smooth.iter().cloned().fold(0.0, f64::max));
    assert_eq!(peaks.len(), 2, "{:?}", hist.counts);
    let centre = |b: usize| -2.0 + (b as f64 + 0.5) * 0.1;
    assert!((centre(peaks[0]) + 1.0).abs() <= 0.1);
    assert!((centre(peaks[1]) - 1.0).abs() <= 0.1);
}

#[test]
fn predictive_density_on_own_data() {
    let dw = LatentSde::univariate(&[0.0, 1.0, 0.0, -1.0], 0.5);
    // 2000 test pairs: with a few hundred, sampling noise alone across 30
    // bins puts the distance near 0.25
    let path = simulate(&dw, &[1.0], 10_001, 0.0625, 21, DEFAULT_GUARD).unwrap();
    let set = make_snapshots(&path, 0.0625, &SnapshotOptions { train_fraction: 0.8, seed: 2, rescale: true }).unwrap();
    let model = fit(&set, &FitOptions::default()).unwrap();
    let report = validate_density(&model, &set, 9).unwrap();
    assert_eq!(report.test_pairs, 2000);
    assert!(report.l1_distance() < 0.15, "{}", report.l1_distance());
}

#[test]
fn predictive_distance_shrinks_with_test_size() {
    let dw = LatentSde::univariate(&[0.0, 1.0, 0.0, -1.0], 0.5);
    let distance = |n: usize| {
        let set = one_step_pairs(&dw, n, 0, 0.0625, 1.5, n as u64);
        validate_density(&dw, &set, 1).unwrap().l1_distance()
    };
    let (small, large) = (distance(100), distance(10_000));
    assert!(large < small, "{small} -> {large}");
}

#[test]
fn bimodal_latent_gives_bimodal_prediction() {
    let dw = LatentSde::univariate(&[0.0, 1.0, 0.0, -1.0], 0.5);
    let set = one_step_pairs(&dw, 3000, 0, 0.0625, 1.0, 0);
    // starting points concentrated near both wells
    let cur: Vec<f64> = set.current.as_slice().iter().map(|z| z.signum() * (0.8 + 0.2 * z.abs())).collect();
    let mut rng = seed::rng(1);
    let next: Vec<f64> = cur
        .iter()
        .map(|z| z + 0.0625 * dw.drift(&[*z])[0] + 0.25 * 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let set =
        SnapshotSet::from_pairs(Matrix::column_vector(&cur), Matrix::column_vector(&next), 0.0625, vec![], (0..3000).collect())
            .unwrap();
    let report = validate_density(&dw, &set, 4).unwrap();
    assert_eq!(report.components[0].predicted_modes, 2);
}
