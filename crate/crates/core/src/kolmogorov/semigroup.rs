//! Driftless semigroup `P^0_{s,t}`, variational flows and Bismut estimators.

use super::{constants, Estimate};
use crate::brownian::sample_path;
use crate::error::{Error, Result};
use crate::linalg;
use crate::models::SdeModel;
use crate::parallel;
use crate::quadrature::standard_normal_rule;
use crate::rng::{CounterStream, Purpose};
use crate::stats::mean_stderr;

/// Monte-Carlo settings: `paths` samples on an internal grid of `2^level` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub paths: usize,
    pub seed: u64,
    pub level: u32,
    pub threads: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { paths: 10_000, seed: 0, level: 6, threads: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemigroupMethod {
    /// Tensor Gauss-Hermite of the given order (constant diffusion only).
    Quadrature {
        order: usize,
    },
    MonteCarlo(McOptions),
}

/// Largest dimension handled by the semigroup and Bismut routines.
const MAX_DIM: usize = 3;

fn check_interval(model: &SdeModel, s: f64, t: f64) -> Result<()> {
    if !(0.0 <= s && s < t && t <= model.horizon) {
        return Err(Error::Domain(format!("need 0 <= s < t <= T (s = {s}, t = {t}, T = {})", model.horizon)));
    }
    if model.dim > MAX_DIM {
        return Err(Error::InvalidParameter(format!("dimension {} exceeds {MAX_DIM}", model.dim)));
    }
    Ok(())
}

fn check_paths(opts: &McOptions) -> Result<()> {
    if opts.paths < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least two paths".into()));
    }
    Ok(())
}

/// `P^0_{s,t} f(x) = E f(Z_t^{s,x})` for `dZ = sigma(Z) dW`.
pub fn semigroup_apply<F>(model: &SdeModel, s: f64, t: f64, f: F, x: &[f64], method: SemigroupMethod) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_interval(model, s, t)?;
    let n = model.dim;
    match method {
        SemigroupMethod::Quadrature { order } => {
            if !model.has_constant_diffusion() {
                return Err(Error::InvalidParameter(format!("quadrature needs a constant diffusion; '{}' is not", model.name)));
            }
            let rule = standard_normal_rule(order);
            let mut sigma = vec![0.0; n * n];
            model.diffusion_into(s, x, &mut sigma);
            let scale = (t - s).sqrt();
            let mut idx = vec![0usize; n];
            let mut xi = vec![0.0; n];
            let mut shift = vec![0.0; n];
            let mut y = vec![0.0; n];
            let mut total = 0.0;
            let count = order.pow(n as u32);
            for c in 0..count {
                let mut rem = c;
                let mut w = 1.0;
                for d in 0..n {
                    idx[d] = rem % order;
                    rem /= order;
                    xi[d] = rule.nodes[idx[d]];
                    w *= rule.weights[idx[d]];
                }
                linalg::mat_vec(&sigma, &xi, &mut shift);
                for d in 0..n {
                    y[d] = x[d] + scale * shift[d];
                }
                total += w * f(&y);
            }
            Ok(Estimate { value: total, stderr: 0.0 })
        }
        SemigroupMethod::MonteCarlo(opts) => {
            check_paths(&opts)?;
            let samples = mc_samples(opts, |p| {
                let flow = simulate(model, s, t, x, None, false, opts.seed, p as u64, opts.level, Purpose::Brownian)?;
                Ok(f(flow.terminal_state()))
            })?;
            let (value, stderr) = mean_stderr(&samples);
            Ok(Estimate { value, stderr })
        }
    }
}

fn mc_samples<G>(opts: McOptions, g: G) -> Result<Vec<f64>>
where
    G: Fn(usize) -> Result<f64> + Sync,
{
    let chunks =
        parallel::with_threads(opts.threads, || parallel::map_chunks(opts.paths, |range| range.map(&g).collect::<Result<Vec<f64>>>()))?;
    let mut out = Vec::with_capacity(opts.paths);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// `Z` together with the first-order flow `∇_η Z` on a fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    pub times: Vec<f64>,
    /// Row-major `(steps + 1) x n`.
    pub states: Vec<f64>,
    pub flow: Vec<f64>,
    pub dim: usize,
    /// `sum <sigma^-1(Z_r) ∇_η Z_r, dW_r>` (left endpoints), when requested.
    pub bismut_integral: Option<f64>,
}

impl FlowPath {
    pub fn terminal_state(&self) -> &[f64] {
        let n = self.dim;
        &self.states[self.states.len() - n..]
    }

    pub fn terminal_flow(&self) -> &[f64] {
        let n = self.dim;
        &self.flow[self.flow.len() - n..]
    }
}

/// Step for finite-difference derivatives of the diffusion.
const FD_STEP: f64 = 1e-4;

/// `(∇_v sigma)(z)` by a central difference along `v`.
fn directional(model: &SdeModel, t: f64, z: &[f64], v: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let len = linalg::norm(v);
    if len == 0.0 || model.has_constant_diffusion() {
        return;
    }
    let n = z.len();
    let zp: Vec<f64> = (0..n).map(|i| z[i] + FD_STEP * v[i] / len).collect();
    let zm: Vec<f64> = (0..n).map(|i| z[i] - FD_STEP * v[i] / len).collect();
    let mut a = vec![0.0; n * n];
    model.diffusion_into(t, &zp, out);
    model.diffusion_into(t, &zm, &mut a);
    for (o, m) in out.iter_mut().zip(&a) {
        *o = (*o - m) * len / (2.0 * FD_STEP);
    }
}

/// `(∇_u ∇_v sigma)(z)` by a four-point mixed difference.
fn mixed(model: &SdeModel, t: f64, z: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let (lu, lv) = (linalg::norm(u), linalg::norm(v));
    if lu == 0.0 || lv == 0.0 || model.has_constant_diffusion() {
        return;
    }
    let n = z.len();
    let h = 1e-3;
    let mut tmp = vec![0.0; n * n];
    for (su, sv, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
        let p: Vec<f64> = (0..n).map(|i| z[i] + h * (su * u[i] / lu + sv * v[i] / lv)).collect();
        model.diffusion_into(t, &p, &mut tmp);
        for (o, m) in out.iter_mut().zip(&tmp) {
            *o += sign * m;
        }
    }
    for o in out.iter_mut() {
        *o *= lu * lv / (4.0 * h * h);
    }
}

/// `(∇_v sigma^-1)(z)` by a central difference along `v`.
fn directional_inverse(model: &SdeModel, t: f64, z: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
    out.fill(0.0);
    let len = linalg::norm(v);
    if len == 0.0 || model.has_constant_diffusion() {
        return Ok(());
    }
    let n = z.len();
    let zp: Vec<f64> = (0..n).map(|i| z[i] + FD_STEP * v[i] / len).collect();
    let zm: Vec<f64> = (0..n).map(|i| z[i] - FD_STEP * v[i] / len).collect();
    let mut a = vec![0.0; n * n];
    model.diffusion_inverse_into(t, &zp, out)?;
    model.diffusion_inverse_into(t, &zm, &mut a)?;
    for (o, m) in out.iter_mut().zip(&a) {
        *o = (*o - m) * len / (2.0 * FD_STEP);
    }
    Ok(())
}

/// Euler–Maruyama for `(Z, ∇_η Z)` on `[s, t]` with `2^level` steps, driven by
/// path `path_index` of the `(seed, purpose)` Brownian family. With `eta = None`
/// only `Z` is simulated; `with_integral` adds the Bismut integral.
#[allow(clippy::too_many_arguments)]
fn simulate(
    model: &SdeModel,
    s: f64,
    t: f64,
    x: &[f64],
    eta: Option<&[f64]>,
    with_integral: bool,
    seed: u64,
    path_index: u64,
    level: u32,
    purpose: Purpose,
) -> Result<FlowPath> {
    let n = model.dim;
    if x.len() != n || eta.is_some_and(|e| e.len() != n) {
        return Err(Error::InvalidParameter(format!("vectors must have {n} entries")));
    }
    let increments = brownian_increments(seed, purpose, path_index, t - s, level, n)?;
    run_flow(model, s, t, x, eta, with_integral, &increments, level)
}

fn brownian_increments(seed: u64, purpose: Purpose, path_index: u64, horizon: f64, level: u32, n: usize) -> Result<Vec<f64>> {
    match purpose {
        Purpose::Brownian => Ok(sample_path(seed, path_index, horizon, level, n)?.increments().to_vec()),
        _ => {
            let mut stream = CounterStream::new(seed, purpose, path_index);
            let h = horizon / (1u64 << level) as f64;
            let mut out = vec![0.0; (1usize << level) * n];
            stream.fill_normal(&mut out);
            for v in out.iter_mut() {
                *v *= h.sqrt();
            }
            Ok(out)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_flow(
    model: &SdeModel,
    s: f64,
    t: f64,
    x: &[f64],
    eta: Option<&[f64]>,
    with_integral: bool,
    increments: &[f64],
    level: u32,
) -> Result<FlowPath> {
    let n = model.dim;
    let steps = 1usize << level;
    let h = (t - s) / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|k| s + k as f64 * h).collect();
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut flow = Vec::with_capacity((steps + 1) * n);
    let mut z = x.to_vec();
    let mut v = eta.map(|e| e.to_vec()).unwrap_or_default();
    states.extend_from_slice(&z);
    flow.extend_from_slice(&v);
    let mut sigma = vec![0.0; n * n];
    let mut dsigma = vec![0.0; n * n];
    let mut sinv = vec![0.0; n * n];
    let mut tmp = vec![0.0; n];
    let mut tmp2 = vec![0.0; n];
    let mut integral = 0.0;
    for k in 0..steps {
        let dw = &increments[k * n..(k + 1) * n];
        let tk = times[k];
        model.diffusion_into(tk, &z, &mut sigma);
        if eta.is_some() {
            if with_integral {
                model.diffusion_inverse_into(tk, &z, &mut sinv)?;
                linalg::mat_vec(&sinv, &v, &mut tmp);
                integral += tmp.iter().zip(dw).map(|(a, b)| a * b).sum::<f64>();
            }
            directional(model, tk, &z, &v, &mut dsigma);
            linalg::mat_vec(&dsigma, dw, &mut tmp2);
        }
        linalg::mat_vec(&sigma, dw, &mut tmp);
        for d in 0..n {
            z[d] += tmp[d];
        }
        if eta.is_some() {
            for d in 0..n {
                v[d] += tmp2[d];
            }
        }
        if z.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Divergence { time: times[k + 1] });
        }
        states.extend_from_slice(&z);
        flow.extend_from_slice(&v);
    }
    Ok(FlowPath { times, states, flow, dim: n, bismut_integral: with_integral.then_some(integral) })
}

/// The flow `∇_η Z` on a given Brownian path, started at time `s`; the path
/// covers `[s, s + path.horizon]`.
pub fn variational_flow(model: &SdeModel, path: &crate::brownian::BrownianPathGrid, s: f64, x: &[f64], eta: &[f64]) -> Result<FlowPath> {
    let t = s + path.horizon;
    check_interval(model, s, t.min(model.horizon))?;
    if t > model.horizon * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("path ends at {t}, beyond T = {}", model.horizon)));
    }
    if path.dims != model.dim {
        return Err(Error::InvalidParameter(format!("path has {} dims, model has {}", path.dims, model.dim)));
    }
    run_flow(model, s, t, x, Some(eta), false, path.increments(), path.finest_level)
}

/// Monte-Carlo second and fourth moments of `|∇_η Z_t|` with their bounds
/// `|η|² e^{T||∇σ||²}` and `8 |η|⁴ e^{288 T² ||∇σ||⁴}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMoments {
    pub second: Estimate,
    pub fourth: Estimate,
    pub second_bound: f64,
    pub fourth_bound: f64,
}

impl FlowMoments {
    /// Both bounds hold with one-sided confidence `z` standard errors.
    pub fn within_bounds(&self, z: f64) -> bool {
        self.second.value - z * self.second.stderr <= self.second_bound && self.fourth.value - z * self.fourth.stderr <= self.fourth_bound
    }
}

pub fn flow_moments(model: &SdeModel, s: f64, t: f64, x: &[f64], eta: &[f64], opts: McOptions) -> Result<FlowMoments> {
    check_interval(model, s, t)?;
    check_paths(&opts)?;
    let norms = mc_samples(opts, |p| {
        let f = simulate(model, s, t, x, Some(eta), false, opts.seed, p as u64, opts.level, Purpose::Brownian)?;
        Ok(linalg::norm(f.terminal_flow()).powi(2))
    })?;
    let fourth: Vec<f64> = norms.iter().map(|v| v * v).collect();
    let (m2, s2) = mean_stderr(&norms);
    let (m4, s4) = mean_stderr(&fourth);
    let g2 = model.bounds.grad_sigma.powi(2);
    let big_t = model.horizon;
    let e2 = linalg::norm(eta).powi(2);
    Ok(FlowMoments {
        second: Estimate { value: m2, stderr: s2 },
        fourth: Estimate { value: m4, stderr: s4 },
        second_bound: e2 * (big_t * g2).exp(),
        fourth_bound: 8.0 * e2 * e2 * (288.0 * big_t * big_t * g2 * g2).exp(),
    })
}

fn require_inverse(model: &SdeModel) -> Result<()> {
    if !model.has_inverse() {
        return Err(Error::MissingMetadata(format!("'{}' provides no inverse diffusion", model.name)));
    }
    Ok(())
}

/// Bismut estimator of `∇_η P^0_{s,t} f(x)`.
#[allow(clippy::too_many_arguments)]
pub fn bismut_gradient<F>(model: &SdeModel, s: f64, t: f64, f: F, x: &[f64], eta: &[f64], opts: McOptions) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_interval(model, s, t)?;
    check_paths(&opts)?;
    require_inverse(model)?;
    let samples = mc_samples(opts, |p| {
        let fp = simulate(model, s, t, x, Some(eta), true, opts.seed, p as u64, opts.level, Purpose::Brownian)?;
        Ok(f(fp.terminal_state()) * fp.bismut_integral.unwrap_or(0.0) / (t - s))
    })?;
    let (value, stderr) = mean_stderr(&samples);
    Ok(Estimate { value, stderr })
}

/// Nested estimator of `∇_{η'} ∇_η P^0_{s,t} f(x)`.
///
/// Outer paths run to the midpoint `r = (s + t) / 2` carrying
/// `I1 = ∫<σ^-1 ∇_η Z, dW>`, `I2 = ∫<(∇_{∇_{η'} Z} σ^-1) ∇_η Z, dW>` and
/// `I3 = ∫<σ^-1 ∇_η ∇_{η'} Z, dW>`. At `Z_r`, `sqrt(M)` inner paths give
/// `P^0_{r,t} f` and its Bismut gradient along `∇_{η'} Z_r`. The sample is
/// `2 (G I1 + P I2 + P I3) / (t - s)`.
#[allow(clippy::too_many_arguments)]
pub fn bismut_hessian<F>(model: &SdeModel, s: f64, t: f64, f: F, x: &[f64], eta: &[f64], eta2: &[f64], opts: McOptions) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_interval(model, s, t)?;
    check_paths(&opts)?;
    require_inverse(model)?;
    let n = model.dim;
    if x.len() != n || eta.len() != n || eta2.len() != n {
        return Err(Error::InvalidParameter(format!("vectors must have {n} entries")));
    }
    let mid = 0.5 * (s + t);
    let inner = ((opts.paths as f64).sqrt().ceil() as usize).max(2);
    let steps = 1usize << opts.level;
    let h = (mid - s) / steps as f64;
    let samples = mc_samples(opts, |p| {
        let dw_all = brownian_increments(opts.seed, Purpose::Brownian, p as u64, mid - s, opts.level, n)?;
        let mut z = x.to_vec();
        let mut v = eta.to_vec();
        let mut v2 = eta2.to_vec();
        let mut gamma = vec![0.0; n];
        let (mut i1, mut i2, mut i3) = (0.0, 0.0, 0.0);
        let mut sigma = vec![0.0; n * n];
        let mut sinv = vec![0.0; n * n];
        let mut dsinv = vec![0.0; n * n];
        let mut d_v = vec![0.0; n * n];
        let mut d_v2 = vec![0.0; n * n];
        let mut d_g = vec![0.0; n * n];
        let mut d_mix = vec![0.0; n * n];
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for k in 0..steps {
            let dw = &dw_all[k * n..(k + 1) * n];
            let tk = s + k as f64 * h;
            model.diffusion_into(tk, &z, &mut sigma);
            model.diffusion_inverse_into(tk, &z, &mut sinv)?;
            directional_inverse(model, tk, &z, &v2, &mut dsinv)?;
            let dot = |m: &[f64], vec: &[f64], out: &mut Vec<f64>| -> f64 {
                linalg::mat_vec(m, vec, out);
                out.iter().zip(dw).map(|(p, q)| p * q).sum()
            };
            i1 += dot(&sinv, &v, &mut a);
            i2 += dot(&dsinv, &v, &mut a);
            i3 += dot(&sinv, &gamma, &mut a);
            directional(model, tk, &z, &v, &mut d_v);
            directional(model, tk, &z, &v2, &mut d_v2);
            directional(model, tk, &z, &gamma, &mut d_g);
            mixed(model, tk, &z, &v, &v2, &mut d_mix);
            for (g, m) in d_g.iter_mut().zip(&d_mix) {
                *g += m;
            }
            linalg::mat_vec(&d_g, dw, &mut a);
            for d in 0..n {
                gamma[d] += a[d];
            }
            linalg::mat_vec(&d_v, dw, &mut a);
            linalg::mat_vec(&d_v2, dw, &mut b);
            for d in 0..n {
                v[d] += a[d];
                v2[d] += b[d];
            }
            linalg::mat_vec(&sigma, dw, &mut a);
            for d in 0..n {
                z[d] += a[d];
            }
        }
        if z.iter().chain(&v).chain(&v2).chain(&gamma).any(|c| !c.is_finite()) {
            return Err(Error::Divergence { time: mid });
        }
        // inner estimates from Z_mid along ∇_{η'} Z_mid
        let (mut p_sum, mut g_sum) = (0.0, 0.0);
        for j in 0..inner {
            let idx = p as u64 * inner as u64 + j as u64;
            let incs = brownian_increments(opts.seed, Purpose::InnerPaths, idx, t - mid, opts.level, n)?;
            let fp = run_flow(model, mid, t, &z, Some(&v2), true, &incs, opts.level)?;
            let fv = f(fp.terminal_state());
            p_sum += fv;
            g_sum += fv * fp.bismut_integral.unwrap_or(0.0) / (t - mid);
        }
        let pv = p_sum / inner as f64;
        let gv = g_sum / inner as f64;
        Ok(2.0 * (gv * i1 + pv * i2 + pv * i3) / (t - s))
    })?;
    let (value, stderr) = mean_stderr(&samples);
    Ok(Estimate { value, stderr })
}

/// `Λ² |η|² P f² / (t - s)`, the right side of the gradient bound.
pub fn gradient_bound(model: &SdeModel, s: f64, t: f64, eta: &[f64], pf2: f64) -> Result<f64> {
    let c = constants(model)?;
    Ok(c.lambda * c.lambda * linalg::norm(eta).powi(2) * pf2 / (t - s))
}
