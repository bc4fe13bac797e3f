use proptest::prelude::*;

use rough_em_lab::brownian::sample_path;
use rough_em_lab::cli::ExperimentConfig;
use rough_em_lab::cutoff::{cutoff_model, psi};
use rough_em_lab::integrator::integrate_model;
use rough_em_lab::models::{make_catalog_model, CatalogParams, Model};
use rough_em_lab::modulus::{estimate_seminorm, phi_tilde, Domain, Modulus};
use rough_em_lab::rates::fit_rate;

fn catalog(name: &str) -> Model {
    make_catalog_model(name, &CatalogParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn refine_then_coarsen_is_identity(seed in any::<u64>(), path in 0u64..1000, level in 1u32..8) {
        let w = sample_path(seed, path, 1.0, level, 1).unwrap();
        let fine = w.refine().unwrap();
        prop_assert_eq!(fine.len(), 2 * w.len());
        let back = fine.coarsen(level).unwrap();
        for (a, b) in back.iter().zip(w.increments()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn coarsened_sums_match_endpoint(seed in any::<u64>(), level in 2u32..9, coarse in 0u32..2) {
        let w = sample_path(seed, 0, 1.0, level, 2).unwrap();
        let inc = w.coarsen(coarse).unwrap();
        let end = w.value_at(w.len()).unwrap();
        for (d, e) in end.iter().enumerate() {
            let s: f64 = inc.iter().skip(d).step_by(2).sum();
            prop_assert!((s - e).abs() < 1e-10);
        }
    }

    #[test]
    fn phi_tilde_dominates(beta in 0.05f64..1.0, s in 1e-8f64..4.0) {
        let m = Modulus::power(beta).unwrap();
        let t = phi_tilde(&m).eval(s).unwrap();
        prop_assert!(t >= s.sqrt() * (1.0 - 1e-12));
        prop_assert!(t >= m.eval(s).unwrap() * (1.0 - 1e-12));
    }

    #[test]
    fn psi_is_a_monotone_bump(r in 0.0f64..3.0, dr in 0.0f64..1.0) {
        let a = psi(r);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(psi(r + dr) <= a + 1e-15);
    }

    #[test]
    fn cutoff_leaves_the_ball_untouched(x in -4.0f64..4.0, t in 0.0f64..1.0) {
        let Model::Standard(m) = catalog("unbounded-holder") else { unreachable!() };
        let k = 4.0;
        let cut = cutoff_model(&m, k).unwrap();
        let a = m.eval_drift(t, &[x]).unwrap();
        let b = cut.eval_drift(t, &[x]).unwrap();
        prop_assert_eq!(a, b);
        let far = cut.eval_drift(t, &[2.0 * k + x.abs() + 0.1]).unwrap();
        prop_assert_eq!(far[0], 0.0);
    }

    #[test]
    fn constant_drift_scheme_is_exact(seed in any::<u64>(), level in 0u32..7, x0 in -2.0f64..2.0) {
        let model = catalog("constant-drift");
        let w = sample_path(seed, 3, 1.0, 8, 1).unwrap();
        let traj = integrate_model(&model, &w, level, &[x0]).unwrap();
        for k in (0..traj.len()).step_by(17) {
            let wk = w.value_at(k).unwrap()[0];
            let exact = x0 + traj.times[k] + wk;
            prop_assert!((traj.state(k)[0] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_scheme_is_odd_in_the_noise(seed in any::<u64>(), level in 0u32..6) {
        let model = catalog("kinetic");
        let w = sample_path(seed, 0, 1.0, 7, 1).unwrap();
        let a = integrate_model(&model, &w, level, &[0.0, 0.0]).unwrap();
        let b = integrate_model(&model, &w.negated(), level, &[0.0, 0.0]).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            prop_assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn seminorm_estimate_grows_with_pairs(seed in any::<u64>(), n in 1usize..200, extra in 1usize..200) {
        let psi = Modulus::power(0.5).unwrap();
        let domain = Domain { bounds: vec![(-2.0, 2.0)] };
        let f = |x: &[f64]| Ok(vec![x[0].abs().sqrt()]);
        let small = estimate_seminorm(f, &psi, &domain, n, seed).unwrap();
        let large = estimate_seminorm(f, &psi, &domain, n + extra, seed).unwrap();
        prop_assert!(large >= small);
        prop_assert!(large <= 1.0 + 1e-12);
    }

    #[test]
    fn fit_rate_recovers_power_laws(rate in 0.1f64..3.0, scale in 1e-6f64..1e3) {
        let deltas: Vec<f64> = (3..12).map(|j| 0.5f64.powi(j)).collect();
        let errors: Vec<f64> = deltas.iter().map(|d| scale * d.powf(rate)).collect();
        let fit = fit_rate(&deltas, &errors).unwrap();
        prop_assert!((fit.slope - rate).abs() < 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn config_dump_round_trips(seed in any::<u64>(), paths in 1usize..10_000, lo in 1u32..6, span in 0u32..5,
                               beta in 0.05f64..1.0, tol in 0.001f64..0.5) {
        let mut cfg = ExperimentConfig {
            seed,
            paths,
            levels: (lo..=lo + span).collect(),
            reference_level: lo + span + 4,
            tol,
            ..ExperimentConfig::default()
        };
        cfg.params.beta = beta;
        let back = ExperimentConfig::parse(&cfg.dump()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
