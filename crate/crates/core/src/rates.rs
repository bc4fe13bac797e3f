//! Coupled strong-error studies, log-log rate fits and bound curves.
//!
//! For every path index one Brownian grid is generated at the reference
//! level `L`; the reference run and every scheme level consume that same
//! grid, so the measured error isolates the discretization error.

use std::io::Write;

use crate::brownian::{sample_path, BrownianPathGrid};
use crate::error::{Error, Result};
use crate::integrator::{exact_solution, integrate_model, Trajectory};
use crate::linalg;
use crate::models::Model;
use crate::modulus::Modulus;
use crate::parallel;
use crate::stats::{least_squares, mean_stderr, LineFit};

/// Mean-square errors below this are treated as rounding noise.
pub const ROUNDOFF: f64 = 1e-20;

/// What plays the role of the true solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Euler–Maruyama at the reference level.
    Euler,
    /// Exact simulation on the same path (models with a closed form).
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub levels: Vec<u32>,
    pub reference_level: u32,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    pub reference: Reference,
    pub threads: Option<usize>,
}

impl RateStudy {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter("no scheme levels".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("scheme levels must be strictly increasing".into()));
        }
        let top = *self.levels.last().unwrap();
        if self.reference_level <= top {
            return Err(Error::InvalidParameter(format!(
                "reference level {} must exceed the largest scheme level {top}",
                self.reference_level
            )));
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter("need at least two paths".into()));
        }
        Ok(())
    }
}

/// Measured errors against a bound curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// `A* = max_j e_j / bound_j`.
    pub constant: f64,
    /// Least-squares slope of `log(e_j / bound_j)` against `log delta_j`.
    pub trend_slope: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub model: String,
    pub levels: Vec<u32>,
    pub deltas: Vec<f64>,
    /// `E sup_t |X_t - Y_t|^2` per level.
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n_paths: usize,
    /// Log-log fit; `None` when some error is zero.
    pub fit: Option<LineFit>,
    /// Mean square sup-distance between the reference at `L` and `L - 1`.
    pub reference_error: f64,
    pub reference_stderr: f64,
    pub reference_limited: bool,
    /// Errors are non-increasing in level up to two standard errors.
    pub monotone: bool,
    pub bound: Option<Vec<f64>>,
    pub envelope: Option<EnvelopeReport>,
}

/// Largest Euclidean distance between the states of two trajectories on the same grid.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dim != b.dim || a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} x {} vs {} x {}", a.len(), a.dim, b.len(), b.dim)));
    }
    if a.times != b.times {
        return Err(Error::GridMismatch("fine times differ".into()));
    }
    let mut best: f64 = 0.0;
    for k in 0..a.len() {
        best = best.max(linalg::distance(a.state(k), b.state(k)));
    }
    Ok(best)
}

fn reference_run(model: &Model, path: &BrownianPathGrid, study: &RateStudy) -> Result<Trajectory> {
    match study.reference {
        Reference::Euler => integrate_model(model, path, study.reference_level, &study.x0),
        Reference::Exact => exact_solution(model.as_degenerate()?, path, &study.x0),
    }
}

/// Squared sup errors of one path: the scheme levels, then the reference check.
fn path_errors(model: &Model, study: &RateStudy, p: usize) -> Result<Vec<f64>> {
    let path = sample_path(study.seed, p as u64, model.horizon(), study.reference_level, model.noise_dim())?;
    let reference = reference_run(model, &path, study)?;
    let mut out = Vec::with_capacity(study.levels.len() + 1);
    for &level in &study.levels {
        let tr = integrate_model(model, &path, level, &study.x0)?;
        out.push(sup_distance(&reference, &tr)?.powi(2));
    }
    let check = match study.reference {
        Reference::Euler => {
            let below = integrate_model(model, &path, study.reference_level - 1, &study.x0)?;
            sup_distance(&reference, &below)?.powi(2)
        }
        Reference::Exact => 0.0,
    };
    out.push(check);
    Ok(out)
}

/// Run the study. Any divergent path aborts it with the first failure by path index.
pub fn strong_error(model: &Model, study: &RateStudy) -> Result<RateReport> {
    study.validate()?;
    if study.x0.len() != model.state_dim() {
        return Err(Error::InvalidParameter(format!("x0 has {} components, model state has {}", study.x0.len(), model.state_dim())));
    }
    let chunks = parallel::with_threads(study.threads, || {
        parallel::map_chunks(study.n_paths, |range| range.map(|p| path_errors(model, study, p)).collect::<Vec<_>>())
    })?;
    let mut rows = Vec::with_capacity(study.n_paths);
    let mut failures = 0;
    let mut first = None;
    for r in chunks.into_iter().flatten() {
        match r {
            Ok(v) => rows.push(v),
            Err(e) => {
                failures += 1;
                first.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first {
        return Err(match e {
            Error::Divergence { time } => {
                eprintln!("{failures} of {} paths diverged", study.n_paths);
                Error::Divergence { time }
            }
            other => other,
        });
    }
    let column = |i: usize| -> (f64, f64) { mean_stderr(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()) };
    let k = study.levels.len();
    let (errors, stderrs): (Vec<f64>, Vec<f64>) = (0..k).map(column).unzip();
    let (reference_error, reference_stderr) = column(k);
    let deltas: Vec<f64> = study.levels.iter().map(|&l| model.horizon() / (1u64 << l) as f64).collect();
    let fit = fit_rate(&deltas, &errors).ok();
    let monotone = errors.windows(2).zip(stderrs.windows(2)).all(|(e, s)| e[1] <= e[0] + 2.0 * s[0].hypot(s[1]));
    Ok(RateReport {
        model: model.name().to_string(),
        levels: study.levels.clone(),
        deltas,
        reference_limited: errors[0] > ROUNDOFF && 4.0 * reference_error > errors[0],
        errors,
        stderrs,
        n_paths: study.n_paths,
        fit,
        reference_error,
        reference_stderr,
        monotone,
        bound: None,
        envelope: None,
    })
}

/// Ordinary least squares of `log e` on `log delta`.
pub fn fit_rate(deltas: &[f64], errors: &[f64]) -> Result<LineFit> {
    if deltas.len() != errors.len() {
        return Err(Error::InvalidParameter("deltas and errors differ in length".into()));
    }
    if let Some(index) = errors.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::NonPositiveError { index });
    }
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParameter("step sizes must be positive".into()));
    }
    if deltas.iter().all(|d| *d == deltas[0]) {
        return Err(Error::InvalidParameter("need at least two distinct step sizes".into()));
    }
    let x: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(least_squares(&x, &y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    /// `phi(C sqrt(delta_j))^2`.
    pub values: Vec<f64>,
    /// Smallest `A` with `A * values[j] >= errors[j]`, ignoring errors at
    /// rounding level (0 without errors).
    pub envelope: f64,
}

/// The curve `phi(C sqrt(delta))^2` and its envelope constant for `errors`.
pub fn bound_curve_dini(phi: &Modulus, c: f64, deltas: &[f64], errors: Option<&[f64]>) -> Result<BoundCurve> {
    if !(c >= 1.0) {
        return Err(Error::InvalidParameter(format!("C = {c} must be at least 1")));
    }
    let values = deltas
        .iter()
        .map(|d| {
            if !(*d >= 0.0) {
                return Err(Error::Domain(format!("step {d} is negative")));
            }
            Ok(phi.eval(c * d.sqrt())?.powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    let envelope = match errors {
        Some(e) => envelope_constant(e, &values)?,
        None => 0.0,
    };
    Ok(BoundCurve { values, envelope })
}

fn envelope_constant(errors: &[f64], bounds: &[f64]) -> Result<f64> {
    if errors.len() != bounds.len() {
        return Err(Error::InvalidParameter("errors and bound values differ in length".into()));
    }
    let mut a: f64 = 0.0;
    for (e, b) in errors.iter().zip(bounds) {
        if *e > ROUNDOFF {
            a = a.max(e / b);
        }
    }
    Ok(a)
}

/// `{0.05, 0.10, ..., 0.95}`.
pub fn default_eps_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

/// `min over eps of (log log delta^{-alpha eps})^{-1/4} + delta^{alpha (1 - eps)}`.
///
/// Grid points where the iterated logarithm is not positive are skipped.
pub fn bound_curve_cutoff(alpha: f64, delta: f64, eps_grid: &[f64]) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1/2]")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    let ln_inv = -delta.ln();
    let mut best = f64::INFINITY;
    for &eps in eps_grid {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("eps = {eps} outside (0, 1)")));
        }
        let loglog = (alpha * eps * ln_inv).ln();
        if loglog <= 0.0 {
            continue;
        }
        best = best.min(loglog.powf(-0.25) + delta.powf(alpha * (1.0 - eps)));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Domain(format!("delta = {delta} is too large: log log(delta^(-alpha eps)) <= 0 on the whole eps grid")))
    }
}

/// Pass iff `log(e_j / bound_j)` has least-squares slope `>= -tol` in `log delta_j`.
/// Levels whose error is at rounding level are ignored.
pub fn envelope_check(deltas: &[f64], errors: &[f64], bounds: &[f64], tol: f64) -> Result<EnvelopeReport> {
    if deltas.len() != errors.len() || errors.len() != bounds.len() {
        return Err(Error::InvalidParameter("levels of errors and bound values do not match".into()));
    }
    let (mut x, mut y) = (vec![], vec![]);
    let mut constant: f64 = 0.0;
    for ((d, e), b) in deltas.iter().zip(errors).zip(bounds) {
        if *e <= ROUNDOFF {
            continue;
        }
        if !(*b > 0.0) {
            return Ok(EnvelopeReport { constant: f64::INFINITY, trend_slope: f64::NEG_INFINITY, passed: false });
        }
        constant = constant.max(e / b);
        x.push(d.ln());
        y.push((e / b).ln());
    }
    let trend_slope = if x.len() >= 2 { least_squares(&x, &y).slope } else { 0.0 };
    Ok(EnvelopeReport { constant, trend_slope, passed: trend_slope >= -tol })
}

impl RateReport {
    /// Attach bound values and run the envelope check.
    pub fn with_bound(mut self, bounds: Vec<f64>, tol: f64) -> Result<Self> {
        self.envelope = Some(envelope_check(&self.deltas, &self.errors, &bounds, tol)?);
        self.bound = Some(bounds);
        Ok(self)
    }

    /// CSV with columns `level, delta, mean_sq_sup_error, stderr, n_paths, bound_value, residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# rough-em-lab v1")?;
        writeln!(w, "level,delta,mean_sq_sup_error,stderr,n_paths,bound_value,residual")?;
        for i in 0..self.levels.len() {
            let (b, r) = match &self.bound {
                Some(b) => (format!("{:.17e}", b[i]), format!("{:.17e}", self.errors[i] / b[i])),
                None => ("nan".into(), "nan".into()),
            };
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{},{b},{r}",
                self.levels[i], self.deltas[i], self.errors[i], self.stderrs[i], self.n_paths
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("model {}\npaths {}\n", self.model, self.n_paths);
        match &self.fit {
            Some(f) => s.push_str(&format!("slope {:.6}\nintercept {:.6}\nr2 {:.6}\n", f.slope, f.intercept, f.r_squared)),
            None => s.push_str("slope n/a (zero errors)\n"),
        }
        if let Some(e) = &self.envelope {
            s.push_str(&format!(
                "envelope_constant {:.6e}\ntrend_slope {:.6}\nenvelope {}\n",
                e.constant,
                e.trend_slope,
                if e.passed { "pass" } else { "fail" }
            ));
        }
        s.push_str(&format!(
            "reference_error {:.6e} +- {:.2e}\nreference_limited {}\nmonotone {}\n",
            self.reference_error, self.reference_stderr, self.reference_limited, self.monotone
        ));
        s
    }
}
