//! Cut-off localization of linear-growth models.
//!
//! `psi(r) = q(2 - r) / (q(2 - r) + q(r - 1))` with `q(s) = exp(-1/s)` for
//! `s > 0` and `0` otherwise: smooth, equal to 1 on `[0, 1]`, 0 on `[2, inf)`.

use std::sync::{Arc, OnceLock};

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kolmogorov::constants;
use crate::linalg;
use crate::models::{CoefficientBounds, Field, Regime, SdeModel};
use crate::modulus::Modulus;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub k: f64,
}

impl CutoffSpec {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("cut-off radius {k} must be positive")));
        }
        Ok(CutoffSpec { k })
    }

    /// `psi(|x| / k)`.
    pub fn weight(&self, x: &[f64]) -> f64 {
        psi(linalg::norm(x) / self.k)
    }
}

fn q(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// The profile `psi`.
pub fn psi(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let a = q(2.0 - r);
    a / (a + q(r - 1.0))
}

/// `psi(r)` for a given spec (the profile does not depend on `k`).
pub fn eval_psi(_spec: &CutoffSpec, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("psi evaluated at {r}")));
    }
    Ok(psi(r))
}

/// `(sup |psi'|, sup |psi''|)` on `[1, 2]`, by central differences on a fine grid.
pub fn psi_derivative_bounds() -> (f64, f64) {
    static BOUNDS: OnceLock<(f64, f64)> = OnceLock::new();
    *BOUNDS.get_or_init(|| {
        let n = 100_000;
        let h = 1e-4;
        let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
        for i in 0..=n {
            let r = 1.0 + i as f64 / n as f64;
            let (a, b, c) = (psi(r - h), psi(r), psi(r + h));
            d1 = d1.max(((c - a) / (2.0 * h)).abs());
            d2 = d2.max(((c - 2.0 * b + a) / (h * h)).abs());
        }
        (d1, d2)
    })
}

/// Grid points used to recompute sup-norms over the ball `|x| <= 2k`.
const SUP_GRID_POINTS: usize = 100_000;

fn ball_grid(n: usize, radius: f64) -> Result<Vec<Vec<f64>>> {
    let per_axis = match n {
        1 => SUP_GRID_POINTS,
        2 => (SUP_GRID_POINTS as f64).sqrt().ceil() as usize,
        _ => return Err(Error::InvalidParameter(format!("cut-off metadata needs n <= 2, got {n}"))),
    };
    let coord = |i: usize| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64;
    let mut out = vec![];
    if n == 1 {
        for i in 0..per_axis {
            out.push(vec![coord(i)]);
        }
    } else {
        for i in 0..per_axis {
            for j in 0..per_axis {
                let x = vec![coord(i), coord(j)];
                if linalg::norm(&x) <= radius {
                    out.push(x);
                }
            }
        }
    }
    Ok(out)
}

/// `b^(k)(x) = b(x) psi(|x|/k)` and `sigma^(k)(x) = sigma(psi(|x|/k) x)`, with
/// bounded-regime metadata recomputed over `|x| <= 2k`.
pub fn cutoff_model(model: &SdeModel, k: f64) -> Result<SdeModel> {
    let spec = CutoffSpec::new(k)?;
    let n = model.dim;
    let inner = model.clone();
    let drift: Field = {
        let m = inner.clone();
        Arc::new(move |t, x: &[f64], out: &mut [f64]| {
            let w = spec.weight(x);
            m.drift_into(t, x, out);
            for o in out.iter_mut() {
                *o *= w;
            }
        })
    };
    let squash = move |x: &[f64]| -> Vec<f64> {
        let w = spec.weight(x);
        x.iter().map(|v| w * v).collect()
    };
    let diffusion: Field = {
        let m = inner.clone();
        Arc::new(move |t, x: &[f64], out: &mut [f64]| m.diffusion_into(t, &squash(x), out))
    };

    let grid = ball_grid(n, 2.0 * k)?;
    let times: Vec<f64> = (0..=4).map(|i| model.horizon * i as f64 / 4.0).collect();
    let mut b = vec![0.0; n];
    let mut drift_sup: f64 = 0.0;
    let mut raw_sup: f64 = 0.0;
    for &t in &times {
        for x in &grid {
            model.drift_into(t, x, &mut b);
            let raw = linalg::norm(&b);
            raw_sup = raw_sup.max(raw);
            drift_sup = drift_sup.max(raw * spec.weight(x));
        }
    }
    let (d1, d2) = psi_derivative_bounds();
    let chain = 1.0 + 2.0 * d1;
    let src = &model.bounds;
    let bounds = CoefficientBounds {
        drift: Some(drift_sup),
        grad_sigma: src.grad_sigma * chain,
        hess_sigma: src.hess_sigma * chain * chain + src.grad_sigma * (2.0 * d1 + 2.0 * d2) / k,
        sigma_inv: src.sigma_inv,
        grad_sigma_inv: src.grad_sigma_inv * chain,
        sigma: src.sigma,
    };
    // |b psi(x) - b psi(y)| <= phi(|x-y|) + sup_{|y|<=2k} |b(y)| sup|psi'| / k |x-y|
    let spatial = Modulus::sum(model.spatial_modulus.clone(), Modulus::linear(raw_sup * d1 / k)?);
    let mut cut = SdeModel::new(&format!("{}@k={k}", model.name), n, model.horizon, drift, diffusion)
        .with_bounds(bounds)
        .with_moduli(spatial, model.time_modulus.clone())
        .with_regime(Regime::Bounded);
    if model.has_inverse() {
        let m = inner;
        let inverse: Field = Arc::new(move |t, x: &[f64], out: &mut [f64]| {
            let _ = m.diffusion_inverse_into(t, &squash(x), out);
        });
        cut = cut.with_inverse(inverse);
    }
    cut.window = (2.5 * k).max(model.window);
    Ok(cut)
}

/// The two readings of the cut-off modulus constant: `e^{c0 k^4}` or `e^{e^{c0 k^4}}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentForm {
    Single,
    Double,
}

/// λ threshold of the cut-off argument, kept in log form since it overflows quickly.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaThreshold {
    pub form: ExponentForm,
    pub ln_value: f64,
    /// `exp(ln_value)`; infinite when it overflows.
    pub value: f64,
}

fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// ```text
/// { 2 Υ (E ||σ||^α Γ(α/2) + ||σ||^{1/2} Γ(1/4)) }^{2/α} + 9π Λ² ||b||² + 4 (||b|| + Λ)²
/// ```
/// for the cut-off model, with `E = e^{c0 k^4}` or `e^{e^{c0 k^4}}`.
pub fn lambda_threshold(cut: &SdeModel, k: f64, alpha: f64, c0: f64, form: ExponentForm) -> Result<LambdaThreshold> {
    if !(alpha > 0.0 && alpha <= 0.5) || !(c0 > 0.0) {
        return Err(Error::InvalidParameter(format!("need alpha in (0, 1/2] and c0 > 0 (alpha = {alpha}, c0 = {c0})")));
    }
    let c = constants(cut)?;
    let s = cut.bounds.sigma;
    let exponent = c0 * k.powi(4);
    let ln_e = match form {
        ExponentForm::Single => exponent,
        ExponentForm::Double => exponent.exp(),
    };
    let first = ln_e + alpha * s.ln() + ln_gamma(alpha / 2.0);
    let second = 0.5 * s.ln() + ln_gamma(0.25);
    let ln_head = (2.0 / alpha) * ((2.0 * c.upsilon).ln() + ln_add(first, second));
    let tail = c.lambda_min;
    let ln_value = ln_add(ln_head, tail.ln());
    Ok(LambdaThreshold { form, ln_value, value: ln_value.exp() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::sample_path;
    use crate::integrator::integrate;
    use crate::models::{make_catalog_model, CatalogParams};

    fn unbounded() -> SdeModel {
        make_catalog_model("unbounded-holder", &CatalogParams::default()).unwrap().as_standard().unwrap().clone()
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(0.5), 1.0);
        assert_eq!(psi(1.0), 1.0);
        assert_eq!(psi(2.5), 0.0);
        assert_eq!(psi(2.0), 0.0);
        assert!((psi(1.5) - 0.5).abs() < 1e-15);
        assert!(eval_psi(&CutoffSpec::new(3.0).unwrap(), -1.0).is_err());
    }

    #[test]
    fn psi_is_monotone_and_smooth() {
        let mut prev = 1.0;
        for i in 0..=10_000 {
            let v = psi(1.0 + i as f64 / 10_000.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        let (d1, d2) = psi_derivative_bounds();
        assert!(d1.is_finite() && d1 > 1.0 && d1 < 10.0, "{d1}");
        assert!(d2.is_finite() && d2 < 100.0, "{d2}");
    }

    #[test]
    fn identity_inside_and_zero_outside() {
        let m = unbounded();
        let c = cutoff_model(&m, 4.0).unwrap();
        for x in [-4.0, -1.3, 0.0, 2.2, 4.0] {
            assert_eq!(c.eval_drift(0.5, &[x]).unwrap(), m.eval_drift(0.5, &[x]).unwrap());
            assert_eq!(c.eval_diffusion(0.5, &[x]).unwrap(), m.eval_diffusion(0.5, &[x]).unwrap());
        }
        for x in [-9.0, 8.0, 100.0] {
            assert_eq!(c.eval_drift(0.5, &[x]).unwrap(), vec![0.0]);
            assert_eq!(c.eval_diffusion(0.5, &[x]).unwrap(), m.eval_diffusion(0.5, &[0.0]).unwrap());
        }
    }

    #[test]
    fn idempotent_on_inner_ball() {
        let m = unbounded();
        let once = cutoff_model(&m, 3.0).unwrap();
        let twice = cutoff_model(&once, 6.0).unwrap();
        for i in 0..=600 {
            let x = -6.0 + i as f64 / 50.0;
            assert_eq!(once.eval_drift(0.0, &[x]).unwrap(), twice.eval_drift(0.0, &[x]).unwrap());
        }
    }

    #[test]
    fn recomputed_sup_within_growth_bound() {
        let m = unbounded();
        let growth = match m.regime {
            Regime::LinearGrowth { growth } => growth,
            Regime::Bounded => unreachable!(),
        };
        for k in [1.0, 4.0, 8.0] {
            let c = cutoff_model(&m, k).unwrap();
            let sup = c.bounds.drift.unwrap();
            assert!(sup.is_finite() && sup <= growth * (1.0 + 2.0 * k), "{sup}");
            assert!(sup >= k - 1.0);
        }
    }

    #[test]
    fn cut_model_validates() {
        let c = cutoff_model(&unbounded(), 2.0).unwrap();
        let rep = crate::models::validate_model(&crate::models::Model::Standard(c), 5000, 3, 1e-8);
        assert!(rep.passed, "{}", rep.to_text());
    }

    #[test]
    fn trajectories_agree_inside_the_ball() {
        let m = unbounded();
        let c = cutoff_model(&m, 4.0).unwrap();
        let mut inside = 0;
        for p in 0..50 {
            let path = sample_path(9, p, 1.0, 8, 1).unwrap();
            let a = integrate(&m, &path, 5, &[0.5]).unwrap();
            let b = integrate(&c, &path, 5, &[0.5]).unwrap();
            if a.states.iter().all(|v| v.abs() < 4.0) {
                inside += 1;
                assert_eq!(a.states, b.states);
            }
        }
        assert!(inside > 40);
    }

    #[test]
    fn threshold_forms() {
        let c = cutoff_model(&unbounded(), 1.0).unwrap();
        let single = lambda_threshold(&c, 1.0, 0.5, 1.0, ExponentForm::Single).unwrap();
        let double = lambda_threshold(&c, 1.0, 0.5, 1.0, ExponentForm::Double).unwrap();
        assert!(single.value.is_finite() && double.ln_value > single.ln_value);
        let lmin = constants(&c).unwrap().lambda_min;
        assert!(single.value > lmin);
        let big = lambda_threshold(&c, 8.0, 0.5, 1.0, ExponentForm::Double).unwrap();
        assert!(big.value.is_infinite() && big.ln_value.is_infinite());
        assert!(lambda_threshold(&c, 1.0, 0.7, 1.0, ExponentForm::Single).is_err());
    }
}
