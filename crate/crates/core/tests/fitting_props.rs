use hmrf::gmm_fit::fit_gmm_traced;
use hmrf::{fit_gmm, kmeans, Component, FitConfig, LabelModel, ObservationField};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn params(m: &LabelModel) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    m.components()
        .iter()
        .map(|wc| {
            (
                wc.weight,
                wc.component.mean(),
                wc.component.covariance().iter().copied().collect(),
            )
        })
        .collect()
}

fn two_gaussian_sample(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = Normal::new(0.0, 1.0).unwrap();
    let hi = Normal::new(10.0, 1.0).unwrap();
    let mut values = Vec::with_capacity(n);
    let mut from_hi = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rand::Rng::random_bool(&mut rng, 0.5);
        values.push(if pick { hi.sample(&mut rng) } else { lo.sample(&mut rng) });
        from_hi.push(pick);
    }
    (values, from_hi)
}

#[test]
fn recovers_two_component_mixture() {
    let (values, from_hi) = two_gaussian_sample(500, 42);
    // oracle: statistics of each ground-truth component in the drawn sample
    let mean_of = |flag: bool| {
        let sel: Vec<f64> = values.iter().zip(&from_hi).filter(|(_, &f)| f == flag).map(|(v, _)| *v).collect();
        (sel.iter().sum::<f64>() / sel.len() as f64, sel.len() as f64 / values.len() as f64)
    };
    let (lo_mean, lo_frac) = mean_of(false);
    let (hi_mean, hi_frac) = mean_of(true);

    let y = ObservationField::scalar(values).unwrap();
    let cfg = FitConfig { components: 2, max_inner_iters: 200, ..FitConfig::default() };
    let m = fit_gmm(&y, &vec![1.0; 500], &cfg, None).unwrap();
    let mut comps = params(&m);
    comps.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]));
    assert!((comps[0].1[0] - lo_mean).abs() < 0.3);
    assert!((comps[1].1[0] - hi_mean).abs() < 0.3);
    assert!((comps[0].0 - lo_frac).abs() < 0.1);
    assert!((comps[1].0 - hi_frac).abs() < 0.1);
    assert!((comps[0].1[0] - 0.0).abs() < 0.3 && (comps[1].1[0] - 10.0).abs() < 0.3);
    assert!((comps[0].0 - 0.5).abs() < 0.1);
}

#[test]
fn inner_em_log_likelihood_is_monotone() {
    let (values, _) = two_gaussian_sample(300, 7);
    let y = ObservationField::scalar(values).unwrap();
    let weights: Vec<f64> = (0..300).map(|i| 0.2 + (i % 7) as f64 / 7.0).collect();
    for g in [2, 3] {
        let cfg = FitConfig { components: g, max_inner_iters: 100, tol: 1e-12, ..FitConfig::default() };
        let fit = fit_gmm_traced(&y, &weights, &cfg, None).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn color_mixture_fit_is_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 4.0).unwrap();
    let mut rows = Vec::new();
    for i in 0..200 {
        let base = if i % 2 == 0 { [200.0, 30.0, 30.0] } else { [20.0, 40.0, 220.0] };
        rows.push(base.iter().map(|b| b + noise.sample(&mut rng)).collect::<Vec<f64>>());
    }
    let y = ObservationField::from_rows(&rows).unwrap();
    let cfg = FitConfig { components: 2, ..FitConfig::default() };
    let m = fit_gmm(&y, &vec![1.0; 200], &cfg, None).unwrap();
    let mut reds: Vec<f64> = m.components().iter().map(|c| c.component.mean()[0]).collect();
    reds.sort_by(f64::total_cmp);
    assert!((reds[0] - 20.0).abs() < 2.0 && (reds[1] - 200.0).abs() < 2.0);
    for c in m.components() {
        assert!(matches!(c.component, Component::Multi(_)));
        let eig = nalgebra::SymmetricEigen::new(c.component.covariance()).eigenvalues;
        assert!(eig.iter().all(|&v| v > 0.0));
    }
}

proptest! {
    #[test]
    fn single_component_matches_closed_form(
        data in prop::collection::vec(-100.0f64..100.0, 2..40),
        raw_w in prop::collection::vec(0.01f64..5.0, 40),
    ) {
        let w = &raw_w[..data.len()];
        let y = ObservationField::scalar(data.clone()).unwrap();
        let m = fit_gmm(&y, w, &FitConfig::default(), None).unwrap();
        let s: f64 = w.iter().sum();
        let mu: f64 = data.iter().zip(w).map(|(v, wi)| wi * v).sum::<f64>() / s;
        let var: f64 = data.iter().zip(w).map(|(v, wi)| wi * (v - mu) * (v - mu)).sum::<f64>() / s;
        let got = &params(&m)[0];
        prop_assert!((got.1[0] - mu).abs() < 1e-12 * (1.0 + mu.abs()));
        if var >= 1e-6 {
            prop_assert!((got.2[0] - var).abs() < 1e-12 * (1.0 + var));
        }
    }

    #[test]
    fn weight_scaling_is_invariant(
        data in prop::collection::vec(-10.0f64..10.0, 6..30),
        scale in 1e-3f64..1e3,
        g in 1usize..3,
    ) {
        let y = ObservationField::scalar(data.clone()).unwrap();
        let w: Vec<f64> = (0..data.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        let scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let cfg = FitConfig { components: g, ..FitConfig::default() };
        let a = params(&fit_gmm(&y, &w, &cfg, None).unwrap());
        let b = params(&fit_gmm(&y, &scaled, &cfg, None).unwrap());
        for (pa, pb) in a.iter().zip(&b) {
            prop_assert!((pa.0 - pb.0).abs() < 1e-10);
            prop_assert!((pa.1[0] - pb.1[0]).abs() < 1e-10 * (1.0 + pa.1[0].abs()));
            prop_assert!((pa.2[0] - pb.2[0]).abs() < 1e-10 * (1.0 + pa.2[0].abs()));
        }
    }

    #[test]
    fn kmeans_is_order_invariant(
        data in prop::collection::vec(0.0f64..1000.0, 8..60),
        k in 2usize..4,
        rot in 1usize..7,
    ) {
        // distinct values to avoid ties
        let mut data = data;
        data.sort_by(f64::total_cmp);
        data.dedup();
        prop_assume!(data.len() >= k);
        let mut shuffled = data.clone();
        shuffled.rotate_left(rot % data.len());
        shuffled.reverse();
        let a = kmeans(&ObservationField::scalar(data.clone()).unwrap(), k, 5, 200).unwrap();
        let b = kmeans(&ObservationField::scalar(shuffled.clone()).unwrap(), k, 5, 200).unwrap();
        for (ca, cb) in a.centers.iter().zip(&b.centers) {
            prop_assert!((ca[0] - cb[0]).abs() < 1e-9);
        }
        for (v, la) in data.iter().zip(a.labels.as_slice()) {
            let pos = shuffled.iter().position(|s| s == v).unwrap();
            prop_assert_eq!(*la, b.labels.get(pos));
        }
    }

    #[test]
    fn kmeans_inertia_monotone_and_all_labels_used(
        data in prop::collection::vec(prop::collection::vec(0.0f64..255.0, 3), 10..80),
        k in 2usize..6,
    ) {
        let y = ObservationField::from_rows(&data).unwrap();
        let r = kmeans(&y, k, 11, 100).unwrap();
        for w in r.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9);
        }
        prop_assert!(r.labels.histogram().iter().all(|&c| c > 0));
    }
}
