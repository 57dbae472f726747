use cfgmm::{
    baseline_em_fit, check_and_project, constrained_em_fit, digamma, em_fit, gamma_log_density,
    gamma_mode, gen_gamma_log_density, initialize, ln_gamma, log_likelihood, multi_restart_fit,
    newton_solve_b, responsibilities, trigamma, update_component, update_weights,
    weighted_gamma_loglik, weighted_gamma_mle, FitConfig, GammaParams, GenGammaParams,
    MixtureModel, ModeBounds, ModeInterval, WeightedStats,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mixture() -> impl Strategy<Value = MixtureModel> {
    (1usize..=3).prop_flat_map(|k| {
        (
            prop::collection::vec(0.1f64..1.0, k),
            prop::collection::vec(0.3f64..12.0, k),
            prop::collection::vec(0.05f64..5.0, k),
        )
            .prop_map(|(w, a, b)| {
                let t: f64 = w.iter().sum();
                let mut w: Vec<f64> = w.iter().map(|v| v / t).collect();
                let rest: f64 = w[1..].iter().sum();
                w[0] = 1.0 - rest;
                MixtureModel::from_parts(&w, &a, &b).unwrap()
            })
    })
}

fn sample(model: &MixtureModel, n: usize, seed: u64) -> Vec<f64> {
    cfgmm::sim::generate_mixture_sample(model, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn weights_for(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.01..1.0)).collect()
}

fn fast() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn responsibility_rows_and_weights_sum_to_one(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 200, seed);
        let z = responsibilities(&x, &m).unwrap();
        for r in z.rows() {
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let w = update_weights(&z);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_product_is_weighted_mean(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 150, seed);
        let z = weights_for(x.len(), seed ^ 1);
        let (a, b) = update_component(&x, &z).unwrap();
        let stats = WeightedStats::from_weights(&x, &z).unwrap();
        let mean = stats.weighted_mean();
        prop_assert!((a * b - mean).abs() <= 1e-10 * mean);
    }

    #[test]
    fn closed_form_is_scale_equivariant(m in mixture(), seed in any::<u64>(), c in 0.01f64..100.0) {
        let x = sample(&m, 150, seed);
        let z = weights_for(x.len(), seed ^ 2);
        let xc: Vec<f64> = x.iter().map(|v| v * c).collect();
        let (a1, b1) = update_component(&x, &z).unwrap();
        let (a2, b2) = update_component(&xc, &z).unwrap();
        prop_assert!((a1 / a2 - 1.0).abs() <= 1e-9);
        prop_assert!((b1 * c / b2 - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn mle_dominates_closed_form(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 150, seed);
        let z = weights_for(x.len(), seed ^ 3);
        let stats = WeightedStats::from_weights(&x, &z).unwrap();
        let (ac, bc) = update_component(&x, &z).unwrap();
        let (am, bm) = weighted_gamma_mle(&x, &z).unwrap();
        let lc = weighted_gamma_loglik(&stats, ac, bc);
        let lm = weighted_gamma_loglik(&stats, am, bm);
        prop_assert!(lm >= lc - 1e-9 * lc.abs().max(1.0), "{lm} < {lc}");
    }

    #[test]
    fn mle_is_a_stationary_point(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 150, seed);
        let z = weights_for(x.len(), seed ^ 4);
        let stats = WeightedStats::from_weights(&x, &z).unwrap();
        let (a, b) = weighted_gamma_mle(&x, &z).unwrap();
        let l0 = weighted_gamma_loglik(&stats, a, b);
        for (da, db) in [(1.001, 1.0), (0.999, 1.0), (1.0, 1.001), (1.0, 0.999)] {
            prop_assert!(weighted_gamma_loglik(&stats, a * da, b * db) <= l0 + 1e-9 * l0.abs().max(1.0));
        }
    }

    #[test]
    fn digamma_recurrence_and_derivative(x in 1e-3f64..1e4) {
        let psi = digamma(x).unwrap();
        let lhs = digamma(x + 1.0).unwrap() - psi;
        prop_assert!((lhs - 1.0 / x).abs() <= 1e-12 * (1.0 / x).max(psi.abs()).max(1.0));
        let tri = trigamma(x).unwrap();
        let diff = tri - trigamma(x + 1.0).unwrap();
        prop_assert!((diff - 1.0 / (x * x)).abs() <= 1e-12 * tri.max(1.0));
        let h = 1e-5 * x;
        let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - tri).abs() <= 1e-5 * tri);
        let lg = ln_gamma(x).unwrap();
        let fd_lg = (ln_gamma(x + h).unwrap() - ln_gamma(x - h).unwrap()) / (2.0 * h);
        prop_assert!((fd_lg - psi).abs() <= 1e-5 * psi.abs().max(1.0).max(lg.abs() / x));
    }

    #[test]
    fn ln_gamma_recurrence(x in 1e-3f64..1e4) {
        let lhs = ln_gamma(x + 1.0).unwrap() - ln_gamma(x).unwrap();
        prop_assert!((lhs - x.ln()).abs() <= 1e-12 * ln_gamma(x + 1.0).unwrap().abs().max(1.0));
    }

    #[test]
    fn generalized_gamma_reduces_at_power_one(a in 0.05f64..50.0, b in 0.01f64..100.0, x in 1e-3f64..1e3) {
        let g = gamma_log_density(x, &GammaParams::new(a, b).unwrap()).unwrap();
        let gg = gen_gamma_log_density(x, &GenGammaParams::new(a, b, 1.0).unwrap()).unwrap();
        prop_assert!((g - gg).abs() <= 1e-13 * g.abs().max(1.0));
    }

    #[test]
    fn mode_is_grid_maximum(a in 1.05f64..30.0, b in 0.05f64..10.0) {
        let p = GammaParams::new(a, b).unwrap();
        let mode = gamma_mode(&p);
        let at_mode = gamma_log_density(mode, &p).unwrap();
        for i in 1..200 {
            let x = mode * (i as f64) / 100.0;
            prop_assert!(gamma_log_density(x, &p).unwrap() <= at_mode + 1e-12 * at_mode.abs().max(1.0));
        }
    }

    #[test]
    fn projection_lands_on_the_bound(m in mixture(), seed in any::<u64>(), lower in 0.01f64..5.0, width in 0.1f64..5.0) {
        let x = sample(&m, 150, seed);
        let z = weights_for(x.len(), seed ^ 5);
        let (a, b) = update_component(&x, &z).unwrap();
        let interval = ModeInterval::new(lower, lower + width).unwrap();
        let p = check_and_project(&x, &z, a, b, &interval).unwrap();
        let mode = if p.shape < 1.0 { f64::NEG_INFINITY } else { (p.shape - 1.0) * p.scale };
        if p.was_projected {
            let target = if (a - 1.0) * b < lower || a < 1.0 { lower } else { lower + width };
            prop_assert!((mode - target).abs() <= 1e-10 * target);
        } else {
            prop_assert!(interval.contains(mode));
            prop_assert_eq!((p.shape, p.scale), (a, b));
        }
    }

    #[test]
    fn boundary_solution_matches_grid_scan(m in mixture(), seed in any::<u64>(), mode in 0.05f64..5.0) {
        let x = sample(&m, 120, seed);
        let z = weights_for(x.len(), seed ^ 6);
        let b = newton_solve_b(&x, &z, mode).unwrap();
        let stats = WeightedStats::from_weights(&x, &z).unwrap();
        let ll = |b: f64| weighted_gamma_loglik(&stats, mode / b + 1.0, b);
        // the root maximizes the likelihood along the mode curve
        let best = ll(b);
        for i in -50..=50 {
            let t = b * (1.0 + f64::from(i) * 0.01).max(0.01);
            prop_assert!(ll(t) <= best + 1e-9 * best.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(fast())]

    #[test]
    fn fits_are_scale_equivariant(m in mixture(), seed in any::<u64>(), c in 0.05f64..20.0) {
        let x = sample(&m, 300, seed);
        let xc: Vec<f64> = x.iter().map(|v| v * c).collect();
        let k = m.k();
        let cfg = FitConfig { seed, restarts: 1, ..FitConfig::default() };
        if let (Ok(f1), Ok(f2)) = (em_fit(&x, k, &cfg), em_fit(&xc, k, &cfg)) {
            prop_assert_eq!(f1.iterations, f2.iterations);
            for (p, q) in f1.model.components().iter().zip(f2.model.components()) {
                prop_assert!((p.shape / q.shape - 1.0).abs() < 1e-6);
                prop_assert!((p.scale * c / q.scale - 1.0).abs() < 1e-6);
                prop_assert!((p.weight - q.weight).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn seeded_entry_points_are_deterministic(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 200, seed);
        prop_assert_eq!(&x, &sample(&m, 200, seed));
        let k = m.k();
        let i1 = initialize(&x, k, &mut ChaCha8Rng::seed_from_u64(seed));
        let i2 = initialize(&x, k, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(i1, i2);
        let cfg = FitConfig { seed, restarts: 2, ..FitConfig::default() };
        let f1 = multi_restart_fit(&x, k, &cfg).map(|f| (f.model, f.iterations, f.loglik_trajectory));
        let f2 = multi_restart_fit(&x, k, &cfg).map(|f| (f.model, f.iterations, f.loglik_trajectory));
        prop_assert_eq!(f1, f2);
        let b1 = baseline_em_fit(&x, k, &cfg).map(|f| f.model);
        prop_assert_eq!(b1, baseline_em_fit(&x, k, &cfg).map(|f| f.model));
    }

    #[test]
    fn baseline_log_likelihood_is_monotone(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 250, seed);
        let cfg = FitConfig { seed, restarts: 1, ..FitConfig::default() };
        if let Ok(f) = baseline_em_fit(&x, m.k(), &cfg) {
            for w in f.loglik_trajectory.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
            let ll = log_likelihood(&x, &f.model).unwrap();
            prop_assert!((ll - f.final_loglik).abs() <= 1e-9 * ll.abs().max(1.0));
        }
    }

    #[test]
    fn unbounded_constraints_reproduce_plain_fit(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 200, seed);
        let k = m.k();
        let cfg = FitConfig { seed, restarts: 1, ..FitConfig::default() };
        let plain = em_fit(&x, k, &cfg).map(|f| f.model);
        let constrained = constrained_em_fit(&x, k, &ModeBounds::unbounded(k), &cfg).map(|f| f.model);
        prop_assert_eq!(plain, constrained);
    }

    #[test]
    fn constrained_fit_respects_bounds(seed in any::<u64>()) {
        let truth = cfgmm::sim::Preset::TwoComponent.model();
        let x = sample(&truth, 300, seed);
        let bounds = ModeBounds::from_pairs(&[(f64::NEG_INFINITY, 0.0), (3.0, 5.0)]).unwrap();
        let cfg = FitConfig { seed, restarts: 1, ..FitConfig::default() };
        if let Ok(f) = constrained_em_fit(&x, 2, &bounds, &cfg) {
            for (c, i) in f.model.components().iter().zip(bounds.intervals()) {
                let mode = c.mode();
                prop_assert!(i.contains(mode) || (mode - i.lower).abs() <= 1e-10 * i.lower.abs().max(1.0) || (mode - i.upper).abs() <= 1e-10 * i.upper.abs().max(1.0));
            }
        }
    }

    #[test]
    fn multi_restart_never_worse_than_first_start(m in mixture(), seed in any::<u64>()) {
        let x = sample(&m, 200, seed);
        let k = m.k();
        let single = em_fit(&x, k, &FitConfig { seed, restarts: 1, ..FitConfig::default() });
        let multi = multi_restart_fit(&x, k, &FitConfig { seed, restarts: 3, ..FitConfig::default() });
        if let (Ok(s), Ok(mr)) = (single, multi) {
            if s.converged {
                prop_assert!(mr.final_loglik >= s.final_loglik);
            }
        }
    }
}
