//! Acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion that every criterion passed.

use std::time::Instant;

use rough_em_lab::brownian::sample_path;
use rough_em_lab::cutoff::cutoff_model;
use rough_em_lab::integrator::{integrate_model, one_step_moment_check, MomentStudy};
use rough_em_lab::kolmogorov::{
    bismut_gradient, check_solution_bounds, constants, flow_moments, gradient_bound, semigroup_apply, solve_u_lambda, McOptions,
    PicardOptions, SemigroupMethod,
};
use rough_em_lab::models::{catalog_log_modulus, make_catalog_model, CatalogParams, Model, CATALOG};
use rough_em_lab::modulus::{check_class, Modulus};
use rough_em_lab::rates::{bound_curve_cutoff, bound_curve_dini, default_eps_grid, strong_error, RateReport, RateStudy, Reference};

struct Line {
    id: &'static str,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn catalog(name: &str) -> Model {
    make_catalog_model(name, &CatalogParams::default()).unwrap()
}

fn study(levels: std::ops::RangeInclusive<u32>, reference_level: u32, n_paths: usize, x0: Vec<f64>, reference: Reference) -> RateStudy {
    RateStudy { levels: levels.collect(), reference_level, n_paths, seed: 42, x0, reference, threads: None }
}

fn errors_text(r: &RateReport) -> String {
    r.errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ")
}

fn slope(r: &RateReport) -> f64 {
    r.fit.map(|f| f.slope).unwrap_or(f64::NAN)
}

fn exactness() -> Line {
    let start = Instant::now();
    let r = strong_error(&catalog("zero"), &study(6..=10, 12, 100, vec![0.0], Reference::Euler)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = r.errors.iter().fold(0.0f64, |a, b| a.max(*b));
    Line {
        id: "1",
        name: "exactness on the zero model",
        passed: worst <= 1e-12 && secs < 1.0,
        detail: format!("max error {worst:.3e} (tol 1e-12), runtime {secs:.2}s (< 1s)"),
    }
}

fn classical_order() -> Line {
    let r = strong_error(&catalog("ou"), &study(6..=10, 16, 1000, vec![0.0], Reference::Euler)).unwrap();
    let fit = r.fit.unwrap();
    Line {
        id: "2",
        name: "classical order on ou",
        passed: (0.85..=1.15).contains(&fit.slope) && fit.r_squared >= 0.98 && !r.reference_limited,
        detail: format!(
            "slope {:.4} (want [0.85, 1.15]), R2 {:.5} (>= 0.98), reference-limited {}; errors {}",
            fit.slope,
            fit.r_squared,
            r.reference_limited,
            errors_text(&r)
        ),
    }
}

fn holder_envelope() -> Line {
    let m = catalog("holder");
    let r = strong_error(&m, &study(6..=10, 16, 1000, vec![0.0], Reference::Euler)).unwrap();
    let bound = bound_curve_dini(&Modulus::power(0.5).unwrap(), 1.0, &r.deltas, None).unwrap().values;
    let r = r.with_bound(bound, 0.05).unwrap();
    let env = r.envelope.clone().unwrap();
    Line {
        id: "3",
        name: "Hoelder envelope delta^(1/2)",
        passed: env.passed && slope(&r) >= 0.45,
        detail: format!("trend slope {:.4} (>= -0.05), A* {:.3e}, fitted slope {:.4} (>= 0.45)", env.trend_slope, env.constant, slope(&r)),
    }
}

fn dini_envelope() -> Line {
    let m = catalog("log-dini");
    let r = strong_error(&m, &study(6..=10, 16, 1000, vec![0.0], Reference::Euler)).unwrap();
    let phi = catalog_log_modulus(5f64.exp(), 2.0).unwrap();
    let bound = bound_curve_dini(&phi, 1.0, &r.deltas, None).unwrap().values;
    let r = r.with_bound(bound, 0.05).unwrap();
    let env = r.envelope.clone().unwrap();
    Line {
        id: "4",
        name: "Dini envelope phi(sqrt(delta))^2",
        passed: env.passed && r.monotone,
        detail: format!(
            "trend slope {:.4} (>= -0.05), A* {:.3e}, monotone {}; errors {}",
            env.trend_slope,
            env.constant,
            r.monotone,
            errors_text(&r)
        ),
    }
}

fn unbounded_regime() -> Line {
    let m = catalog("unbounded-holder");
    let cut = Model::Standard(cutoff_model(m.as_standard().unwrap(), 8.0).unwrap());
    let r = strong_error(&cut, &study(5..=9, 13, 1000, vec![0.0], Reference::Euler)).unwrap();
    let grid = default_eps_grid();
    let bound: Vec<f64> = r.deltas.iter().map(|d| bound_curve_cutoff(0.5, *d, &grid)).collect::<Result<_, _>>().unwrap();
    let finite = bound.iter().all(|b| b.is_finite() && *b > 0.0);
    let r = r.with_bound(bound, 0.05).unwrap();
    let env = r.envelope.clone().unwrap();
    let ratio = r.errors[4] / r.errors[0];
    Line {
        id: "5",
        name: "unbounded regime with cut-off k = 8",
        passed: r.monotone && ratio < 0.25 && finite && env.passed,
        detail: format!(
            "monotone {}, e9/e5 {ratio:.4} (< 0.25), bound finite {finite}, trend slope {:.4}, A* {:.3e}",
            r.monotone, env.trend_slope, env.constant
        ),
    }
}

fn degenerate() -> Line {
    let kin = strong_error(&catalog("kinetic"), &study(6..=10, 16, 1000, vec![0.0, 0.0], Reference::Exact)).unwrap();
    let s = slope(&kin);
    let lipschitz = (0.85..=1.15).contains(&s);
    let m = catalog("kinetic-rough");
    let r = strong_error(&m, &study(6..=10, 14, 1000, vec![0.0, 0.0], Reference::Euler)).unwrap();
    let bound = bound_curve_dini(m.rate_modulus(), 1.0, &r.deltas, None).unwrap().values;
    let r = r.with_bound(bound, 0.05).unwrap();
    let env = r.envelope.clone().unwrap();
    Line {
        id: "6",
        name: "degenerate scheme",
        passed: lipschitz && env.passed,
        detail: format!(
            "kinetic vs exact: slope {s:.4} (want [0.85, 1.15]); kinetic-rough: trend slope {:.4} (>= -0.05), A* {:.3e}",
            env.trend_slope, env.constant
        ),
    }
}

fn one_step_moments() -> Line {
    let mut passed = true;
    let mut detail = vec![];
    for (name, x0) in [("holder", vec![0.0]), ("kinetic-rough", vec![0.0, 0.0])] {
        let s = MomentStudy { levels: (4..=9).collect(), n_paths: 10_000, seed: 42, x0, tol: 0.1, threads: None };
        let rep = one_step_moment_check(&catalog(name), &s).unwrap();
        passed &= (0.9..=1.1).contains(&rep.slope);
        detail.push(format!("{name} slope {:.4}", rep.slope));
    }
    Line { id: "7", name: "one-step moments", passed, detail: format!("{} (want [0.9, 1.1])", detail.join(", ")) }
}

fn bismut() -> Line {
    let start = Instant::now();
    let m = catalog("zero");
    let m = m.as_standard().unwrap();
    let opts = McOptions { paths: 100_000, seed: 42, level: 6, threads: None };
    let g1 = bismut_gradient(m, 0.0, 1.0, |y| y[0], &[0.0], &[1.0], opts).unwrap();
    let g2 = bismut_gradient(m, 0.0, 1.0, |y| y[0] * y[0], &[1.0], &[1.0], opts).unwrap();
    let z1 = (g1.value - 1.0) / g1.stderr;
    let z2 = (g2.value - 2.0) / g2.stderr;
    let clip = |y: &[f64]| y[0].clamp(-1.0, 1.0);
    let mut bound_ok = true;
    for (s, t, x) in [(0.0, 1.0, 0.0), (0.0, 0.25, 0.5), (0.5, 1.0, -1.0)] {
        let g = bismut_gradient(m, s, t, clip, &[x], &[1.0], opts).unwrap();
        let q = SemigroupMethod::Quadrature { order: 64 };
        let pf2 = semigroup_apply(m, s, t, |y| clip(y).powi(2), &[x], q).unwrap().value;
        let b = gradient_bound(m, s, t, &[1.0], pf2).unwrap();
        let low = (g.value.abs() - 3.0 * g.stderr).max(0.0);
        bound_ok &= low * low <= b;
    }
    let secs = start.elapsed().as_secs_f64();
    Line {
        id: "8",
        name: "Bismut gradient",
        passed: z1.abs() <= 4.0 && z2.abs() <= 4.0 && bound_ok && secs < 60.0,
        detail: format!(
            "grad y: {:.4} ({z1:+.2} se), grad y^2 at 1: {:.4} ({z2:+.2} se), |f|<=1 bound holds {bound_ok}, runtime {secs:.1}s",
            g1.value, g2.value
        ),
    }
}

fn flow() -> Line {
    let m = catalog("perturbed-sigma");
    let opts = McOptions { paths: 100_000, seed: 42, level: 6, threads: None };
    let fm = flow_moments(m.as_standard().unwrap(), 0.0, 1.0, &[0.0], &[1.0], opts).unwrap();
    Line {
        id: "9",
        name: "variational flow moments",
        passed: fm.within_bounds(2.326),
        detail: format!(
            "E|flow|^2 {:.5} +- {:.1e} vs {:.5}; E|flow|^4 {:.5} +- {:.1e} vs {:.5} (99% one-sided)",
            fm.second.value, fm.second.stderr, fm.second_bound, fm.fourth.value, fm.fourth.stderr, fm.fourth_bound
        ),
    }
}

fn kolmogorov_suite() -> Line {
    let c = constants(catalog("zero").as_standard().unwrap()).unwrap();
    let consts_ok =
        (c.lambda - 1.0).abs() <= 1e-12 && (c.lambda_tilde - 288.0 * 2f64.sqrt()).abs() <= 1e-12 && (c.lambda_min - 4.0).abs() <= 1e-12;
    let p = CatalogParams { constant: vec![0.7], ..Default::default() };
    let cm = make_catalog_model("constant-drift", &p).unwrap();
    let lambda = 5.0;
    let sol = solve_u_lambda(cm.as_standard().unwrap(), lambda, &PicardOptions::default()).unwrap();
    let mut fixed_err: f64 = 0.0;
    for (i, t) in sol.times.iter().enumerate() {
        let exact = 0.7 * (1.0 - (-lambda * (1.0 - t)).exp()) / lambda;
        for v in &sol.values[i] {
            fixed_err = fixed_err.max((v - exact).abs());
        }
    }
    let hm = catalog("holder");
    let hm = hm.as_standard().unwrap();
    let hc = constants(hm).unwrap();
    let hs = solve_u_lambda(hm, hc.lambda_min, &PicardOptions::default()).unwrap();
    let worst_ratio = hs.contraction_ratios().iter().skip(1).fold(0.0f64, |a, b| a.max(*b));
    let bounds = check_solution_bounds(&hs, &hc, 1e-3).unwrap();
    Line {
        id: "10",
        name: "Kolmogorov equation suite",
        passed: consts_ok && fixed_err <= 1e-6 && worst_ratio <= 0.5 && bounds.grad_max <= 0.5 + 1e-3,
        detail: format!(
            "constants exact {consts_ok}; constant-drift error {fixed_err:.2e} (<= 1e-6); holder ratio {worst_ratio:.4} (<= 0.5), grad max {:.4} (<= 0.501)",
            bounds.grad_max
        ),
    }
}

fn infrastructure() -> Line {
    // telescoping of the dyadic construction
    let mut tele: f64 = 0.0;
    for p in 0..8u64 {
        let fine = sample_path(9, p, 1.0, 14, 2).unwrap();
        for level in [0, 3, 7, 11] {
            let direct = sample_path(9, p, 1.0, level, 2).unwrap();
            for (a, b) in fine.coarsen(level).unwrap().iter().zip(direct.increments()) {
                tele = tele.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    // bit-identical reruns across thread counts
    let runs: Vec<RateReport> = [1, 4, 8]
        .iter()
        .map(|&t| {
            strong_error(&catalog("holder"), &RateStudy { threads: Some(t), ..study(3..=6, 10, 300, vec![0.0], Reference::Euler) }).unwrap()
        })
        .collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    // cut-off identity inside the ball
    let m = catalog("unbounded-holder");
    let m = m.as_standard().unwrap();
    let k = 4.0;
    let cut = cutoff_model(m, k).unwrap();
    let mut identity = true;
    for i in 0..=800 {
        let x = -k + 2.0 * k * i as f64 / 800.0;
        for t in [0.0, 0.5, 1.0] {
            identity &= m.eval_drift(t, &[x]).unwrap() == cut.eval_drift(t, &[x]).unwrap();
            identity &= m.eval_diffusion(t, &[x]).unwrap() == cut.eval_diffusion(t, &[x]).unwrap();
        }
    }
    let (orig, cutm) = (Model::Standard(m.clone()), Model::Standard(cut));
    for p in 0..32u64 {
        let path = sample_path(5, p, 1.0, 10, 1).unwrap();
        let a = integrate_model(&orig, &path, 6, &[0.5]).unwrap();
        if a.states.iter().all(|v| v.abs() < k) {
            identity &= a
                == integrate_model(&cutm, &path, 6, &[0.5])
                    .map(|mut b| {
                        b.model = a.model.clone();
                        b
                    })
                    .unwrap();
        }
    }
    // class checks of every catalog modulus
    let mut classes = true;
    for name in CATALOG {
        let phi = catalog(name).rate_modulus().clone();
        for flag in &phi.claims {
            classes &= check_class(&phi, *flag, 1000, 1e-10).unwrap().passed;
        }
    }
    Line {
        id: "11",
        name: "infrastructure invariants",
        passed: tele <= 1e-12 && identical && identity && classes,
        detail: format!(
            "telescoping {tele:.2e} (<= 1e-12), threads 1/4/8 identical {identical}, cut-off identity {identity}, class checks {classes}"
        ),
    }
}

#[test]
fn acceptance() {
    let checks: [fn() -> Line; 11] = [
        exactness,
        classical_order,
        holder_envelope,
        dini_envelope,
        unbounded_regime,
        degenerate,
        one_step_moments,
        bismut,
        flow,
        kolmogorov_suite,
        infrastructure,
    ];
    let mut failed = vec![];
    for check in checks {
        let line = check();
        println!("{} [{}] {}: {}", if line.passed { "PASS" } else { "FAIL" }, line.id, line.name, line.detail);
        if !line.passed {
            failed.push(line.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
