//! Continuous-time Euler–Maruyama schemes evaluated on the finest dyadic grid.
//!
//! With scheme step `delta = T / 2^j` and `t_delta` the scheme-grid floor of `t`,
//!
//! ```text
//! Y_t = Y_{t_delta} + b(t_delta, Y_{t_delta}) (t - t_delta) + sigma(t_delta, Y_{t_delta}) (W_t - W_{t_delta})
//! ```
//!
//! at every fine time `t`. Brownian increments inside a scheme step are
//! accumulated left to right, which is exactly how [`BrownianPathGrid::coarsen`]
//! forms coarse increments, so grid values agree with the recursive update.

use std::io::Write;

use crate::brownian::BrownianPathGrid;
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{DegenerateSdeModel, ExactSolution, Model, SdeModel};
use crate::parallel;
use crate::rng::{CounterStream, Purpose};
use crate::stats::{least_squares, mean_stderr};

/// A scheme solution sampled at every fine time of its Brownian grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Row-major `(2^L + 1) x dim`.
    pub states: Vec<f64>,
    pub dim: usize,
    pub scheme_level: u32,
    pub model: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// CSV with columns `time, x0, x1, ...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# rough-em-lab v1")?;
        let cols: Vec<String> = (0..self.dim).map(|d| format!("x{d}")).collect();
        writeln!(w, "time,{}", cols.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let row: Vec<String> = self.state(k).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{t:.17e},{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_shapes(path: &BrownianPathGrid, scheme_level: u32, noise_dim: usize, x0_len: usize, state_dim: usize, horizon: f64) -> Result<()> {
    if scheme_level > path.finest_level {
        return Err(Error::InvalidParameter(format!("scheme level {scheme_level} exceeds the path's finest level {}", path.finest_level)));
    }
    if path.dims != noise_dim {
        return Err(Error::InvalidParameter(format!("path has {} dims, model noise has {noise_dim}", path.dims)));
    }
    if x0_len != state_dim {
        return Err(Error::InvalidParameter(format!("x0 has {x0_len} entries, state dimension is {state_dim}")));
    }
    if path.horizon != horizon {
        return Err(Error::InvalidParameter(format!("path horizon {} differs from model horizon {horizon}", path.horizon)));
    }
    Ok(())
}

fn fine_times(path: &BrownianPathGrid) -> Vec<f64> {
    let h = path.step();
    (0..=path.len()).map(|k| k as f64 * h).collect()
}

fn diverged(state: &[f64]) -> bool {
    state.iter().any(|v| !v.is_finite())
}

/// Euler–Maruyama for a non-degenerate model.
pub fn integrate(model: &SdeModel, path: &BrownianPathGrid, scheme_level: u32, x0: &[f64]) -> Result<Trajectory> {
    let n = model.dim;
    check_shapes(path, scheme_level, n, x0.len(), n, model.horizon)?;
    let ratio = 1usize << (path.finest_level - scheme_level);
    let steps = 1usize << scheme_level;
    let h = path.step();
    let times = fine_times(path);
    let mut states = Vec::with_capacity((path.len() + 1) * n);
    states.extend_from_slice(x0);
    let mut y = x0.to_vec();
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * n];
    let mut dw = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let mut cur = vec![0.0; n];
    for i in 0..steps {
        let t0 = times[i * ratio];
        model.drift_into(t0, &y, &mut b);
        model.diffusion_into(t0, &y, &mut sigma);
        dw.fill(0.0);
        for m in 1..=ratio {
            let k = i * ratio + m;
            for (d, w) in dw.iter_mut().enumerate() {
                *w += path.increment(k - 1)[d];
            }
            linalg::mat_vec(&sigma, &dw, &mut noise);
            let elapsed = m as f64 * h;
            for d in 0..n {
                cur[d] = y[d] + b[d] * elapsed + noise[d];
            }
            if diverged(&cur) {
                return Err(Error::Divergence { time: times[k] });
            }
            states.extend_from_slice(&cur);
        }
        y.copy_from_slice(&cur);
    }
    Ok(Trajectory { times, states, dim: n, scheme_level, model: model.name.clone() })
}

/// Euler–Maruyama for a degenerate model: the first block moves by its
/// frozen drift only, the second by frozen drift plus frozen noise.
pub fn integrate_degenerate(model: &DegenerateSdeModel, path: &BrownianPathGrid, scheme_level: u32, x0: &[f64]) -> Result<Trajectory> {
    let n = model.half_dim;
    check_shapes(path, scheme_level, n, x0.len(), 2 * n, model.horizon)?;
    let ratio = 1usize << (path.finest_level - scheme_level);
    let steps = 1usize << scheme_level;
    let h = path.step();
    let times = fine_times(path);
    let mut states = Vec::with_capacity((path.len() + 1) * 2 * n);
    states.extend_from_slice(x0);
    let mut y = x0.to_vec();
    let mut b = vec![0.0; 2 * n];
    let mut sigma = vec![0.0; n * n];
    let mut dw = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let mut cur = vec![0.0; 2 * n];
    for i in 0..steps {
        let t0 = times[i * ratio];
        model.drift_into(t0, &y, &mut b);
        model.sigma_into(t0, &y, &mut sigma);
        dw.fill(0.0);
        for m in 1..=ratio {
            let k = i * ratio + m;
            for (d, w) in dw.iter_mut().enumerate() {
                *w += path.increment(k - 1)[d];
            }
            linalg::mat_vec(&sigma, &dw, &mut noise);
            let elapsed = m as f64 * h;
            for d in 0..n {
                cur[d] = y[d] + b[d] * elapsed;
                cur[n + d] = y[n + d] + b[n + d] * elapsed + noise[d];
            }
            if diverged(&cur) {
                return Err(Error::Divergence { time: times[k] });
            }
            states.extend_from_slice(&cur);
        }
        y.copy_from_slice(&cur);
    }
    Ok(Trajectory { times, states, dim: 2 * n, scheme_level, model: model.name.clone() })
}

/// Dispatch on the model kind.
pub fn integrate_model(model: &Model, path: &BrownianPathGrid, scheme_level: u32, x0: &[f64]) -> Result<Trajectory> {
    match model {
        Model::Standard(m) => integrate(m, path, scheme_level, x0),
        Model::Degenerate(m) => integrate_degenerate(m, path, scheme_level, x0),
    }
}

/// The exact solution on the fine grid for models with a closed form.
///
/// For the integrated Brownian motion, each fine slot of length `h` adds
/// `W_k h + dW_k h / 2 + zeta_k` to the first block, where `zeta_k ~ N(0, h^3/12)`
/// is the bridge area, independent of the increments and drawn from the
/// `(seed, path_index)` bridge-area stream.
pub fn exact_solution(model: &DegenerateSdeModel, path: &BrownianPathGrid, x0: &[f64]) -> Result<Trajectory> {
    let n = model.half_dim;
    match model.exact {
        Some(ExactSolution::IntegratedBrownian) => {}
        None => return Err(Error::InvalidParameter(format!("model '{}' has no exact simulator", model.name))),
    }
    check_shapes(path, path.finest_level, n, x0.len(), 2 * n, model.horizon)?;
    let h = path.step();
    let area_scale = (h * h * h / 12.0).sqrt();
    let mut areas = CounterStream::new(path.seed, Purpose::BridgeArea, path.path_index);
    let times = fine_times(path);
    let mut states = Vec::with_capacity((path.len() + 1) * 2 * n);
    states.extend_from_slice(x0);
    let mut w = vec![0.0; n];
    let mut integral = vec![0.0; n];
    let mut cur = vec![0.0; 2 * n];
    for k in 0..path.len() {
        let inc = path.increment(k);
        for d in 0..n {
            integral[d] += w[d] * h + 0.5 * inc[d] * h + area_scale * areas.normal();
            w[d] += inc[d];
        }
        let t = times[k + 1];
        for d in 0..n {
            cur[d] = x0[d] + x0[n + d] * t + integral[d];
            cur[n + d] = x0[n + d] + w[d];
        }
        states.extend_from_slice(&cur);
    }
    Ok(Trajectory { times, states, dim: 2 * n, scheme_level: path.finest_level, model: model.name.clone() })
}

/// Parameters of the one-step displacement study.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStudy {
    pub levels: Vec<u32>,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    /// Pass iff the fitted slope is at least `1 - tol`.
    pub tol: f64,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub levels: Vec<u32>,
    pub deltas: Vec<f64>,
    /// `sup_t E|Y_t - Y_{t_delta}|^2` over the sampled times, per level.
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Smallest `beta` with `values <= beta * delta` at every level.
    pub beta: f64,
    pub passed: bool,
}

impl MomentReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("level delta sup_mean_sq_displacement stderr\n");
        for i in 0..self.levels.len() {
            s.push_str(&format!("{} {:.6e} {:.6e} {:.3e}\n", self.levels[i], self.deltas[i], self.values[i], self.stderrs[i]));
        }
        s.push_str(&format!(
            "slope {:.4} r2 {:.4} beta {:.4} {}\n",
            self.slope,
            self.r_squared,
            self.beta,
            if self.passed { "pass" } else { "fail" }
        ));
        s
    }
}

/// Monte-Carlo `E|Y_t - Y_{t_delta}|^2` at the midpoints `t = t_delta + delta/2`
/// of every scheme step; the sup over those times is fitted against `delta`.
pub fn one_step_moment_check(model: &Model, study: &MomentStudy) -> Result<MomentReport> {
    if study.levels.len() < 2 || study.n_paths < 2 {
        return Err(Error::InvalidParameter("need at least two levels and two paths".into()));
    }
    if let Model::Standard(m) = model {
        if m.bounds.drift.is_none() {
            return Err(Error::InvalidParameter(format!("'{}' is not a bounded-regime model", m.name)));
        }
    }
    let horizon = model.horizon();
    let mut values = vec![];
    let mut stderrs = vec![];
    let mut deltas = vec![];
    for &level in &study.levels {
        let fine = level + 1;
        let steps = 1usize << level;
        // per path: displacement^2 at every sampled time
        let per_chunk = parallel::with_threads(study.threads, || {
            parallel::map_chunks(study.n_paths, |range| -> Result<Vec<Vec<f64>>> {
                let mut out = Vec::with_capacity(range.len());
                for p in range {
                    let path = crate::brownian::sample_path(study.seed, p as u64, horizon, fine, model.noise_dim())?;
                    let tr = integrate_model(model, &path, level, &study.x0)?;
                    let sq: Vec<f64> = (0..steps).map(|i| linalg::distance(tr.state(2 * i + 1), tr.state(2 * i)).powi(2)).collect();
                    out.push(sq);
                }
                Ok(out)
            })
        })?;
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(study.n_paths);
        for chunk in per_chunk {
            samples.extend(chunk?);
        }
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut column = vec![0.0; samples.len()];
        for i in 0..steps {
            for (c, s) in column.iter_mut().zip(&samples) {
                *c = s[i];
            }
            let (mean, se) = mean_stderr(&column);
            if mean > best.0 {
                best = (mean, se);
            }
        }
        values.push(best.0);
        stderrs.push(best.1);
        deltas.push(horizon / steps as f64);
    }
    let fit = least_squares(&deltas.iter().map(|d| d.ln()).collect::<Vec<_>>(), &values.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let beta = values.iter().zip(&deltas).map(|(v, d)| v / d).fold(0.0, f64::max);
    Ok(MomentReport {
        levels: study.levels.clone(),
        deltas,
        values,
        stderrs,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        beta,
        passed: fit.slope >= 1.0 - study.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::sample_path;
    use crate::models::{make_catalog_model, CatalogParams, Field};
    use std::sync::Arc;

    fn catalog(name: &str) -> Model {
        make_catalog_model(name, &CatalogParams::default()).unwrap()
    }

    fn ode_model() -> SdeModel {
        let one: Field = Arc::new(|_t, _x, out: &mut [f64]| out[0] = 1.0);
        let zero: Field = Arc::new(|_t, _x, out: &mut [f64]| out[0] = 0.0);
        SdeModel::new("ode", 1, 1.0, one, zero)
    }

    #[test]
    fn zero_model_is_brownian_motion() {
        let m = catalog("zero");
        let path = sample_path(3, 0, 1.0, 8, 1).unwrap();
        for level in [0, 3, 8] {
            let tr = integrate_model(&m, &path, level, &[0.5]).unwrap();
            assert_eq!(tr.state(0), &[0.5]);
            for k in [1, 17, 256] {
                let w = path.value_at(k).unwrap()[0];
                assert!((tr.state(k)[0] - 0.5 - w).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn deterministic_euler_on_unit_drift() {
        let m = ode_model();
        let path = sample_path(1, 0, 1.0, 6, 1).unwrap();
        let tr = integrate(&m, &path, 3, &[0.0]).unwrap();
        for k in 0..=64 {
            assert!((tr.state(k)[0] - k as f64 / 64.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ou_single_step() {
        let m = catalog("ou");
        let path = sample_path(7, 2, 1.0, 4, 1).unwrap();
        let tr = integrate_model(&m, &path, 0, &[1.0]).unwrap();
        let w = path.value_at(16).unwrap()[0];
        assert!((tr.terminal()[0] - (1.0 - 1.0 + w)).abs() < 1e-14);
        // closed-form recursion at level 2
        let tr = integrate_model(&m, &path, 2, &[1.0]).unwrap();
        let coarse = path.coarsen(2).unwrap();
        let mut y: f64 = 1.0;
        for (i, dw) in coarse.iter().enumerate() {
            y = y - y * 0.25 + dw;
            assert!((tr.state(4 * (i + 1))[0] - y).abs() < 1e-14);
        }
    }

    #[test]
    fn scheme_consistency_under_refinement() {
        let m = catalog("ou");
        let path = sample_path(2, 5, 1.0, 7, 1).unwrap();
        let fine = path.refine().unwrap();
        let a = integrate_model(&m, &path, 7, &[0.3]).unwrap();
        let b = integrate_model(&m, &fine, 7, &[0.3]).unwrap();
        for k in 0..=128 {
            assert!((a.state(k)[0] - b.state(2 * k)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_problem_is_exact() {
        let p = CatalogParams { dim: 2, constant: vec![0.5, -1.0], ..Default::default() };
        let m = make_catalog_model("constant-drift", &p).unwrap();
        let path = sample_path(4, 1, 1.0, 9, 2).unwrap();
        let tr = integrate_model(&m, &path, 2, &[1.0, 2.0]).unwrap();
        for k in [0, 5, 200, 512] {
            let w = path.value_at(k).unwrap();
            let t = tr.times[k];
            let exact = [1.0 + 0.5 * t + w[0], 2.0 - t + w[1]];
            for (x, e) in tr.state(k).iter().zip(exact) {
                assert!((x - e).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn kinetic_at_finest_level_is_riemann_sum() {
        let m = catalog("kinetic");
        let path = sample_path(8, 0, 1.0, 6, 1).unwrap();
        let tr = integrate_model(&m, &path, 6, &[0.0, 1.0]).unwrap();
        let h = path.step();
        let mut x1 = 0.0;
        for k in 0..64 {
            let x2 = 1.0 + path.value_at(k).unwrap()[0];
            assert!((tr.state(k)[1] - x2).abs() < 1e-14);
            x1 += x2 * h;
            assert!((tr.state(k + 1)[0] - x1).abs() < 1e-13);
        }
    }

    #[test]
    fn first_block_ignores_noise() {
        let zero: Field = Arc::new(|_t, _x, out: &mut [f64]| out.fill(0.0));
        let eye: Field = Arc::new(|_t, _x, out: &mut [f64]| out[0] = 1.0);
        let m = DegenerateSdeModel::new("free", 1, 1.0, zero.clone(), zero, eye.clone(), eye, crate::modulus::Modulus::zero(), 1.0);
        let path = sample_path(8, 3, 1.0, 5, 1).unwrap();
        let a = integrate_degenerate(&m, &path, 3, &[0.7, 0.0]).unwrap();
        let b = integrate_degenerate(&m, &path.negated(), 3, &[0.7, 0.0]).unwrap();
        for k in 0..=32 {
            assert_eq!(a.state(k)[0], 0.7);
            assert_eq!(a.state(k)[0], b.state(k)[0]);
            let w = path.value_at(k).unwrap()[0];
            assert!((a.state(k)[1] - w).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_kinetic_moments() {
        // Var(int_0^1 W) = 1/3 and Cov(int W, W_1) = 1/2
        let m = catalog("kinetic");
        let d = m.as_degenerate().unwrap();
        let n = 20_000;
        let (mut v, mut c) = (vec![], vec![]);
        for p in 0..n {
            let path = sample_path(12, p, 1.0, 6, 1).unwrap();
            let tr = exact_solution(d, &path, &[0.0, 0.0]).unwrap();
            let s = tr.terminal();
            v.push(s[0] * s[0]);
            c.push(s[0] * s[1]);
        }
        let (mv, sv) = mean_stderr(&v);
        let (mc, sc) = mean_stderr(&c);
        assert!((mv - 1.0 / 3.0).abs() < 4.0 * sv, "{mv} {sv}");
        assert!((mc - 0.5).abs() < 4.0 * sc, "{mc} {sc}");
        assert!(
            exact_solution(catalog("kinetic-rough").as_degenerate().unwrap(), &sample_path(1, 0, 1.0, 3, 1).unwrap(), &[0.0, 0.0]).is_err()
        );
    }

    #[test]
    fn divergence_is_reported() {
        let blow: Field = Arc::new(|_t, x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] * 1e200);
        let one: Field = Arc::new(|_t, _x, out: &mut [f64]| out[0] = 1.0);
        let m = SdeModel::new("blow", 1, 1.0, blow, one);
        let path = sample_path(1, 0, 1.0, 6, 1).unwrap();
        match integrate(&m, &path, 6, &[10.0]) {
            Err(Error::Divergence { time }) => assert!(time > 0.0 && time <= 1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn shape_errors() {
        let m = catalog("zero");
        let path = sample_path(1, 0, 1.0, 4, 1).unwrap();
        assert!(integrate_model(&m, &path, 5, &[0.0]).is_err());
        assert!(integrate_model(&m, &path, 2, &[0.0, 1.0]).is_err());
        let path2 = sample_path(1, 0, 1.0, 4, 2).unwrap();
        assert!(integrate_model(&m, &path2, 2, &[0.0]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = catalog("zero");
        let path = sample_path(1, 0, 1.0, 2, 1).unwrap();
        let tr = integrate_model(&m, &path, 1, &[0.0]).unwrap();
        let mut buf = vec![];
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# rough-em-lab v1");
        assert_eq!(lines[1], "time,x0");
        assert_eq!(lines.len(), 2 + 5);
    }

    #[test]
    fn moment_check_zero_and_ode() {
        let study = MomentStudy { levels: vec![3, 4, 5, 6], n_paths: 4000, seed: 1, x0: vec![0.0], tol: 0.1, threads: Some(1) };
        let rep = one_step_moment_check(&catalog("zero"), &study).unwrap();
        assert!(rep.passed, "{}", rep.to_text());
        assert!((rep.slope - 1.0).abs() < 0.1);
        let rep = one_step_moment_check(
            &Model::Standard(ode_model().with_bounds(crate::models::CoefficientBounds::scaled_identity(0.0, Some(1.0)))),
            &study,
        )
        .unwrap();
        assert!((rep.slope - 2.0).abs() < 1e-12);
        assert!(rep.passed);
        for (v, d) in rep.values.iter().zip(&rep.deltas) {
            assert!((v - d * d / 4.0).abs() < 1e-15);
        }
    }
}
