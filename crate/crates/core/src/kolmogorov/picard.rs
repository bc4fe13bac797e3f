//! Picard iteration for the mild form of the regularized Kolmogorov equation
//! in one dimension with constant diffusion.
//!
//! One backward step of length `h` uses the semigroup property,
//!
//! ```text
//! u_s = ∫_0^h e^{-λτ} P_τ f_{s+τ} dτ + e^{-λh} P_h u_{s+h},   f = b (1 + ∂u)
//! ```
//!
//! with the time integral replaced by `w P_h f_{s+h}`, `w = (1 - e^{-λh}) / λ`
//! (exact for constant `f`). Every source term thus passes through the
//! semigroup, which keeps the discrete map contracting in the gradient.
//! `P_h` is Gauss-Hermite quadrature over linear interpolation on the space
//! grid, extended by constants outside the window, and the gradient uses
//! `∂_x P_h g(x) = E[g(x + σ√h ξ) ξ] / (σ√h)` with the same nodes.

use std::io::Write;

use rayon::prelude::*;

use super::ConstantsReport;
use crate::error::{Error, Result};
use crate::models::SdeModel;
use crate::quadrature::standard_normal_rule;

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOptions {
    pub time_steps: usize,
    pub space_step: f64,
    /// The space grid covers `[-window, window]`.
    pub window: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub quadrature_order: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { time_steps: 64, space_step: 1.0 / 512.0, window: 8.0, tol: 1e-10, max_iter: 60, quadrature_order: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KolmogorovSolution {
    pub lambda: f64,
    pub times: Vec<f64>,
    pub grid: Vec<f64>,
    /// `values[i][j] = u(times[i], grid[j])`.
    pub values: Vec<Vec<f64>>,
    /// `∂_x u` from the Gaussian-integration-by-parts form of `∂_x P_h`.
    pub gradients: Vec<Vec<f64>>,
    /// `max(sup |u^(m+1) - u^(m)|, sup |∂u^(m+1) - ∂u^(m)|)` per iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

struct Grid {
    x0: f64,
    h: f64,
    len: usize,
}

impl Grid {
    #[inline]
    fn interpolate(&self, v: &[f64], x: f64) -> f64 {
        let pos = (x - self.x0) / self.h;
        if pos <= 0.0 {
            return v[0];
        }
        if pos >= (self.len - 1) as f64 {
            return v[self.len - 1];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        v[i] + frac * (v[i + 1] - v[i])
    }
}

/// Solve for `u^λ` by Picard iteration.
pub fn solve_u_lambda(model: &SdeModel, lambda: f64, opts: &PicardOptions) -> Result<KolmogorovSolution> {
    if model.dim != 1 {
        return Err(Error::InvalidParameter(format!("the Picard solver is one-dimensional; '{}' has n = {}", model.name, model.dim)));
    }
    if !model.has_constant_diffusion() {
        return Err(Error::InvalidParameter(format!("the Picard solver needs a constant diffusion; '{}' is not", model.name)));
    }
    if !(lambda > 0.0) || opts.time_steps == 0 || !(opts.space_step > 0.0) || !(opts.window > opts.space_step) {
        return Err(Error::InvalidParameter("need lambda > 0, time_steps >= 1 and 0 < space_step < window".into()));
    }
    let horizon = model.horizon;
    let nt = opts.time_steps;
    let dt = horizon / nt as f64;
    let times: Vec<f64> = (0..=nt).map(|i| horizon * i as f64 / nt as f64).collect();
    let half = (opts.window / opts.space_step).round() as usize;
    let len = 2 * half + 1;
    let h = opts.space_step;
    let grid: Vec<f64> = (0..len).map(|j| (j as f64 - half as f64) * h).collect();
    let g = Grid { x0: grid[0], h, len };
    let sigma = model.eval_diffusion(0.0, &[0.0])?[0].abs();
    let rule = standard_normal_rule(opts.quadrature_order);
    let spread = sigma * dt.sqrt();
    let shifts: Vec<f64> = rule.nodes.iter().map(|xi| spread * xi).collect();

    let decay = (-lambda * dt).exp();
    let weight = -(-lambda * dt).exp_m1() / lambda;

    // drift on the grid (the window edge values extend outward)
    let drift: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| grid.iter().map(|&x| model.eval_drift(t, &[x]).map(|b| b[0])).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;

    let mut values = vec![vec![0.0; len]; nt + 1];
    let mut gradients = vec![vec![0.0; len]; nt + 1];
    let mut history = vec![];
    let mut increases = 0;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let source: Vec<Vec<f64>> = (0..=nt).map(|i| drift[i].iter().zip(&gradients[i]).map(|(b, du)| b * (1.0 + du)).collect()).collect();
        let mut next = vec![vec![0.0; len]; nt + 1];
        let mut next_grad = vec![vec![0.0; len]; nt + 1];
        for i in (0..nt).rev() {
            let carry: Vec<f64> = source[i + 1].iter().zip(&next[i + 1]).map(|(f, u)| weight * f + decay * u).collect();
            let (row, grad): (Vec<f64>, Vec<f64>) = (0..len)
                .into_par_iter()
                .map(|j| {
                    let x = grid[j];
                    let (mut acc, mut dacc) = (0.0, 0.0);
                    for ((w, s), xi) in rule.weights.iter().zip(&shifts).zip(&rule.nodes) {
                        let v = w * g.interpolate(&carry, x + s);
                        acc += v;
                        dacc += v * xi;
                    }
                    (acc, dacc / spread)
                })
                .unzip();
            next[i] = row;
            next_grad[i] = grad;
        }
        let mut delta: f64 = 0.0;
        for i in 0..=nt {
            for j in 0..len {
                delta = delta.max((next[i][j] - values[i][j]).abs()).max((next_grad[i][j] - gradients[i][j]).abs());
            }
        }
        values = next;
        gradients = next_grad;
        if let Some(&last) = history.last() {
            if delta > last {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        history.push(delta);
        if !delta.is_finite() || increases >= 3 {
            return Err(Error::NonContraction { iterations: history.len() });
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(KolmogorovSolution { lambda, times, grid, values, gradients, history, converged })
}

impl KolmogorovSolution {
    /// Successive ratios `history[m+1] / history[m]`.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.history.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect()
    }

    pub fn grad_max(&self) -> f64 {
        self.gradients.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest second central difference over interior nodes.
    pub fn hessian_max(&self) -> f64 {
        let h = self.grid[1] - self.grid[0];
        let mut best: f64 = 0.0;
        for u in &self.values {
            for j in 1..u.len() - 1 {
                best = best.max(((u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h)).abs());
            }
        }
        best
    }

    /// CSV with columns `time, x, u, du`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# rough-em-lab v1")?;
        writeln!(w, "time,x,u,du")?;
        for (i, t) in self.times.iter().enumerate() {
            for (j, x) in self.grid.iter().enumerate() {
                writeln!(w, "{t:.17e},{x:.17e},{:.17e},{:.17e}", self.values[i][j], self.gradients[i][j])?;
            }
        }
        Ok(())
    }

    fn time_index(&self, s: f64) -> Result<usize> {
        let dt = self.times[1] - self.times[0];
        let i = (s / dt).round();
        if !(i >= 0.0 && (i as usize) < self.times.len() && (self.times[i as usize] - s).abs() <= 1e-12 * dt.max(1.0)) {
            return Err(Error::Domain(format!("time {s} is not a solution grid time")));
        }
        Ok(i as usize)
    }

    /// `u(s, x)` by linear interpolation in space; `s` must be a grid time.
    pub fn value_at(&self, s: f64, x: f64) -> Result<f64> {
        let i = self.time_index(s)?;
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if !(lo..=hi).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside the solution window [{lo}, {hi}]")));
        }
        let g = Grid { x0: lo, h: self.grid[1] - self.grid[0], len: self.grid.len() };
        Ok(g.interpolate(&self.values[i], x))
    }
}

/// `x + u^λ(s, x)`.
pub fn zvonkin_transform(solution: &KolmogorovSolution, s: f64, x: f64) -> Result<f64> {
    Ok(x + solution.value_at(s, x)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBoundsReport {
    pub grad_max: f64,
    pub grad_limit: f64,
    pub hessian_max: f64,
    pub hessian_bound: f64,
    pub passed: bool,
}

impl SolutionBoundsReport {
    pub fn to_text(&self) -> String {
        format!(
            "grad_max {:.6e} limit {:.6e}\nhessian_max {:.6e} bound {:.6e}\n{}\n",
            self.grad_max,
            self.grad_limit,
            self.hessian_max,
            self.hessian_bound,
            if self.passed { "pass" } else { "fail" }
        )
    }
}

/// Compare the grid gradient with `1/2 + grid_tol` and the grid second
/// derivative with the explicit Hessian bound.
pub fn check_solution_bounds(solution: &KolmogorovSolution, constants: &ConstantsReport, grid_tol: f64) -> Result<SolutionBoundsReport> {
    let grad_max = solution.grad_max();
    let hessian_max = solution.hessian_max();
    let hessian_bound = constants.hessian_bound(solution.lambda)?;
    let grad_limit = 0.5 + grid_tol;
    Ok(SolutionBoundsReport {
        grad_max,
        grad_limit,
        hessian_max,
        hessian_bound,
        passed: grad_max <= grad_limit && hessian_max <= hessian_bound,
    })
}
