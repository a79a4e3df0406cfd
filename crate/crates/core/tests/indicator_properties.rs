use latentwarn_core::indicators::{
    om_functional, om_ratio_series, sample_entropy, sample_entropy_series, sample_entropy_series_strided, std_baseline, transition_probability_series,
    warning_point, IndicatorKind, IndicatorParams, IndicatorSeries, RegionSpec, SampEnParams,
};
use latentwarn_core::sde::{simulate, LatentSde, DEFAULT_GUARD};
use latentwarn_core::stats::{kendall_tau_vs_index, median};
use latentwarn_core::synthetic::sampen_bruteforce;
use latentwarn_core::{seed, Matrix};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn window_strategy() -> impl Strategy<Value = (Matrix, SampEnParams)> {
    (1usize..4, 1usize..4, 1usize..3, 0.1f64..1.5, 1usize..3).prop_flat_map(|(m, p, q, r, channels)| {
        let min_l = m + p + q;
        (min_l..=40).prop_flat_map(move |l| {
            prop::collection::vec(prop::collection::vec(-3i32..=3, l), channels).prop_map(move |cols| {
                // coarse integer levels make exact ties and near-ties common
                let mut w = Matrix::zeros(l, cols.len());
                for (c, col) in cols.iter().enumerate() {
                    w.set_column(c, &col.iter().map(|v| f64::from(*v) * 0.5).collect::<Vec<_>>());
                }
                (w, SampEnParams { m, p, q, r, l })
            })
        })
    })
}

proptest! {
    #[test]
    fn sampen_counts_match_bruteforce((w, params) in window_strategy()) {
        let fast = sample_entropy(&w, &params).unwrap();
        let slow = sampen_bruteforce(&w, &params).unwrap();
        prop_assert_eq!((fast.a, fast.b), (slow.a, slow.b));
        prop_assert_eq!(fast.infinite, slow.infinite);
        prop_assert!(fast.value.to_bits() == slow.value.to_bits() || (fast.value.is_nan() && slow.value.is_nan()));
    }

    #[test]
    fn sampen_invariant_under_common_rescale((w, params) in window_strategy(), factor in prop::sample::select(vec![0.25, 0.5, 2.0, 4.0, 8.0])) {
        // powers of two keep every comparison exact
        let mut scaled = w.clone();
        for v in scaled.as_mut_slice() {
            *v *= factor;
        }
        let a = sample_entropy(&w, &params).unwrap();
        let b = sample_entropy(&scaled, &params).unwrap();
        prop_assert_eq!((a.a, a.b), (b.a, b.b));
    }

    #[test]
    fn om_additive_over_concatenated_windows(
        z in prop::collection::vec(-1.5f64..1.5, 20..80),
        coeffs in prop::collection::vec(-1.0f64..1.0, 4),
        eta in 0.2f64..1.0,
        cut in 0.0f64..1.0,
    ) {
        let sde = LatentSde::univariate(&coeffs, eta);
        let z = Matrix::column_vector(&z);
        let last = z.rows() - 2;
        let b = 1 + ((last - 1) as f64 * cut) as usize;
        let whole = om_functional(&z, &sde, 1, last, 0.1).unwrap();
        let left = om_functional(&z, &sde, 1, b, 0.1).unwrap();
        let right = if b < last { om_functional(&z, &sde, b + 1, last, 0.1).unwrap() } else { 0.0 };
        prop_assert!((whole - left - right).abs() < 1e-10 * whole.abs().max(1.0));
    }

    #[test]
    fn tp_values_in_unit_interval(z in prop::collection::vec(-1.0f64..1.0, 10..80), split in -0.5f64..0.5, e in 1usize..10) {
        let zm = Matrix::column_vector(&z);
        let regions = RegionSpec::split_first(split, 1);
        if let Ok(s) = transition_probability_series(&zm, &regions, e.min(z.len())) {
            prop_assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(s.values()[0], 0.0);
        }
    }

    #[test]
    fn warning_monotone_in_threshold(values in prop::collection::vec(prop_oneof![Just(f64::NAN), 0.0f64..1.0], 1..50), t1 in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let s = IndicatorSeries::new((0..values.len()).collect(), values, IndicatorKind::TransitionProbability, IndicatorParams::StdBaseline { l: 1 }).unwrap();
        match (warning_point(&s, t1), warning_point(&s, t1 + dt)) {
            (Some(a), Some(b)) => prop_assert!(b >= a),
            (None, Some(_)) => prop_assert!(false, "higher threshold crossed earlier"),
            _ => {}
        }
    }

    #[test]
    fn std_baseline_translation_and_scale(z in prop::collection::vec(-2.0f64..2.0, 10..60), shift in -5.0f64..5.0, scale in 0.1f64..10.0, l in 2usize..10) {
        let base = std_baseline(&Matrix::column_vector(&z), l).unwrap();
        let moved: Vec<f64> = z.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = z.iter().map(|v| v * scale).collect();
        let a = std_baseline(&Matrix::column_vector(&moved), l).unwrap();
        let b = std_baseline(&Matrix::column_vector(&scaled), l).unwrap();
        for ((x, y), w) in base.values().iter().zip(a.values()).zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
            prop_assert!((x * scale - w).abs() < 1e-9 * scale.max(1.0));
        }
    }
}

#[test]
fn sampen_all_matching_gives_zero() {
    let z = Matrix::column_vector(&white_noise(60, 3));
    let c = sample_entropy(&z, &SampEnParams { m: 2, p: 2, q: 1, r: 1e9, l: 60 }).unwrap();
    assert_eq!(c.a, c.b);
    assert_eq!(c.value, 0.0);
}

#[test]
fn sampen_noise_exceeds_sine() {
    let params = SampEnParams::default();
    let mut wins = 0;
    for s in 0..20u64 {
        let noise = Matrix::column_vector(&white_noise(300, s));
        let mut rng = seed::rng(seed::derive(s, 1));
        let phase: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
        let sine: Vec<f64> = (0..300).map(|i| (0.2 * i as f64 + phase).sin()).collect();
        let hn = sample_entropy(&noise, &params).unwrap().value;
        let hs = sample_entropy(&Matrix::column_vector(&sine), &params).unwrap().value;
        if hn > hs {
            wins += 1;
        }
    }
    assert!(wins >= 18, "{wins}/20");
}

#[test]
fn sampen_series_constant_is_nan() {
    let params = SampEnParams { m: 2, p: 1, q: 1, r: 0.5, l: 20 };
    let s = sample_entropy_series(&Matrix::column_vector(&[2.0; 50]), &params).unwrap();
    assert_eq!(s.len(), 31);
    assert!(s.all_nan());
}

/// One 1500-sample series holds only a handful of independent 300-sample
/// windows, so single-run tau spreads over +-0.5; the trend check is on the
/// mean over seeds.
#[test]
fn sampen_series_on_stationary_data_has_no_trend() {
    let ou = LatentSde::univariate(&[0.0, -1.0], 0.5);
    let params = SampEnParams { m: 2, p: 2, q: 1, r: 0.5, l: 300 };
    let taus: Vec<f64> = (0..20u64)
        .map(|s| {
            let z = simulate(&ou, &[0.0], 1500, 0.0625, s, DEFAULT_GUARD).unwrap();
            kendall_tau_vs_index(sample_entropy_series_strided(&z, &params, 5).unwrap().values())
        })
        .collect();
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    assert!(mean.abs() <= 0.2, "{taus:?}");
}

#[test]
fn om_ratio_on_stationary_ou_hovers_near_one() {
    let ou = LatentSde::univariate(&[0.0, -1.0], 0.5);
    for s in 0..20u64 {
        let z = simulate(&ou, &[0.0], 1500, 0.0625, s, DEFAULT_GUARD).unwrap();
        let r = om_ratio_series(&z, &ou, 300, 0.0625).unwrap();
        let m = median(r.values());
        assert!((0.7..=1.3).contains(&m), "seed {s}: median {m}");
    }
}

/// Two-state chain: A -> B with probability `up` per step, B -> A with `down`.
/// From A, `P(B at lag t) = up / (up + down) * (1 - (1 - up - down)^t)`.
#[test]
fn telegraph_crossing_matches_chain() {
    let (up, down) = (0.02, 0.005);
    let pi_b: f64 = up / (up + down);
    let analytic = (1.0 - 0.5 / pi_b).ln() / (1.0 - up - down).ln();
    for s in 0..3u64 {
        let mut rng = seed::rng(seed::derive(77, s));
        let mut state_b = false;
        let z: Vec<f64> = (0..12_000)
            .map(|_| {
                let u: f64 = rng.gen();
                state_b = if state_b { u >= down } else { u < up };
                if state_b { 1.0 } else { -1.0 }
            })
            .collect();
        let tp = transition_probability_series(&Matrix::column_vector(&z), &RegionSpec::split_first(0.0, 1), 10_000).unwrap();
        let crossing = warning_point(&tp, 0.5).unwrap() as f64;
        assert!((crossing - analytic).abs() <= 0.2 * analytic, "seed {s}: {crossing} vs {analytic}");
    }
}

#[test]
fn baseline_doubles_with_variance() {
    let mut rng = seed::rng(4);
    let z: Vec<f64> = (0..4000)
        .map(|i| {
            let sd = if i < 2000 { 1.0 } else { 2.0f64.sqrt() };
            sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let s = std_baseline(&Matrix::column_vector(&z), 100).unwrap();
    let v = s.values();
    // windows entirely before / after the change
    let before: Vec<f64> = v[..1900].iter().map(|x| x * x).collect();
    let after: Vec<f64> = v[2000..].iter().map(|x| x * x).collect();
    let ratio = median(&after) / median(&before);
    assert!((1.8..=2.2).contains(&ratio), "{ratio}");
}
