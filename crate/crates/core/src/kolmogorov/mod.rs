//! Quantitative side of the regularized Kolmogorov equation: explicit
//! constants, the driftless semigroup, variational flows, Bismut estimators
//! and a Picard solver for `u^lambda`.

mod picard;
mod semigroup;

pub use picard::{check_solution_bounds, solve_u_lambda, zvonkin_transform, KolmogorovSolution, PicardOptions, SolutionBoundsReport};
pub use semigroup::{
    bismut_gradient, bismut_hessian, flow_moments, gradient_bound, semigroup_apply, variational_flow, FlowMoments, FlowPath, McOptions,
    SemigroupMethod,
};

use crate::error::{Error, Result};
use crate::models::SdeModel;
use crate::modulus::{phi_tilde, Modulus};
use crate::quadrature::gauss_legendre;

/// A Monte-Carlo (or exact) value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Explicit constants of the Kolmogorov estimates for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsReport {
    pub horizon: f64,
    /// `Λ = e^{T ||∇σ||² / 2} ||σ^-1||`.
    pub lambda: f64,
    /// `𝛬̃`, the second-order Bismut constant.
    pub lambda_tilde: f64,
    /// `Υ = sqrt(𝛬̃) {3 + 2||b|| + 28 (Λ + sqrt(𝛬̃)) ||b||²}`.
    pub upsilon: f64,
    /// `9π Λ² ||b||² + 4 (||b|| + Λ)²`.
    pub lambda_min: f64,
    pub drift_sup: f64,
    pub sigma_sup: f64,
    modulus: Modulus,
}

/// Constants from the model's sup-norm metadata.
pub fn constants(model: &SdeModel) -> Result<ConstantsReport> {
    let b = model
        .bounds
        .drift
        .ok_or_else(|| Error::MissingMetadata(format!("'{}' has no drift sup-norm (linear-growth regime)", model.name)))?;
    let c = &model.bounds;
    let t = model.horizon;
    let g2 = c.grad_sigma * c.grad_sigma;
    let lambda = (0.5 * t * g2).exp() * c.sigma_inv;
    let inner = 6.0 * std::f64::consts::SQRT_2 * (t * g2).exp() * c.sigma_inv.powi(4)
        + t * c.grad_sigma_inv * c.grad_sigma_inv
        + 2.0 * t * t * c.hess_sigma * c.hess_sigma * c.sigma_inv * c.sigma_inv * (2.0 * t * g2).exp();
    let lambda_tilde = 48.0 * (288.0 * t * t * g2 * g2).exp() * inner;
    let root = lambda_tilde.sqrt();
    let upsilon = root * (3.0 + 2.0 * b + 28.0 * (lambda + root) * b * b);
    let lambda_min = 9.0 * std::f64::consts::PI * lambda * lambda * b * b + 4.0 * (b + lambda) * (b + lambda);
    Ok(ConstantsReport {
        horizon: t,
        lambda,
        lambda_tilde,
        upsilon,
        lambda_min,
        drift_sup: b,
        sigma_sup: c.sigma,
        modulus: model.spatial_modulus.clone(),
    })
}

impl ConstantsReport {
    /// `Υ ∫_0^T e^{-λt} t^{-1} φ̃(||σ|| sqrt(t)) dt`.
    ///
    /// Computed in `v = log(1/t)`, where the integrand becomes
    /// `e^{-λ e^{-v}} φ̃(||σ|| e^{-v/2})`, over panels of doubling length.
    pub fn hessian_bound(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must be positive")));
        }
        let tilde = phi_tilde(&self.modulus);
        let s = self.sigma_sup;
        let g = |v: f64| -> Result<f64> { Ok((-lambda * (-v).exp()).exp() * tilde.eval(s * (-0.5 * v).exp())?) };
        let rule = gauss_legendre(24);
        let mut a = -self.horizon.ln();
        let mut width = 1.0;
        let mut total = 0.0;
        for _ in 0..200 {
            let b = a + width;
            let mut err = None;
            let part = rule.integrate(a, b, |v| match g(v) {
                Ok(x) => x,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            total += part;
            if part <= 1e-15 * total && b > 50.0 {
                break;
            }
            a = b;
            width *= 2.0;
        }
        Ok(self.upsilon * total)
    }

    pub fn to_text(&self) -> String {
        format!(
            "Lambda {:.12e}\nLambda_tilde {:.12e}\nUpsilon {:.12e}\nlambda_min {:.12e}\ndrift_sup {:.12e}\nsigma_sup {:.12e}\nhessian_bound(lambda_min) {}\n",
            self.lambda,
            self.lambda_tilde,
            self.upsilon,
            self.lambda_min,
            self.drift_sup,
            self.sigma_sup,
            self.hessian_bound(self.lambda_min).map(|v| format!("{v:.12e}")).unwrap_or_else(|e| e.to_string()),
        )
    }
}
