//! SDE coefficient bundles, the model catalog and sampled validation of the
//! declared regularity.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::modulus::{holder_dini_lift, ClassFlag, Modulus};
use crate::rng::{CounterStream, Purpose};

/// Coefficient callback `(t, x, out)`. Matrices are written row-major.
pub type Field = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Declared sup-norms over `[0, T] x R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBounds {
    /// `||b||_{T,inf}`; `None` for drifts of linear growth.
    pub drift: Option<f64>,
    pub grad_sigma: f64,
    pub hess_sigma: f64,
    pub sigma_inv: f64,
    pub grad_sigma_inv: f64,
    pub sigma: f64,
}

impl CoefficientBounds {
    /// Bounds for `sigma = s * I` in dimension `n` with drift bound `drift`.
    pub fn scaled_identity(s: f64, drift: Option<f64>) -> Self {
        CoefficientBounds { drift, grad_sigma: 0.0, hess_sigma: 0.0, sigma_inv: 1.0 / s, grad_sigma_inv: 0.0, sigma: s }
    }
}

/// Which assumption set the model is meant to satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Bounded coefficients, global modulus.
    Bounded,
    /// Linear growth `|b(x)| + ... <= K_T (1 + |x|)`.
    LinearGrowth { growth: f64 },
}

/// Non-degenerate model `dX = b_t(X) dt + sigma_t(X) dW` on `R^n`.
#[derive(Clone)]
pub struct SdeModel {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
    drift: Field,
    diffusion: Field,
    diffusion_inverse: Option<Field>,
    pub bounds: CoefficientBounds,
    /// Spatial modulus of the drift (global, also for linear-growth models).
    pub spatial_modulus: Modulus,
    /// Joint time modulus of drift and diffusion.
    pub time_modulus: Modulus,
    pub regime: Regime,
    /// Half-width of the box sampled by validation.
    pub window: f64,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("bounds", &self.bounds)
            .field("spatial_modulus", &self.spatial_modulus.describe())
            .field("regime", &self.regime)
            .finish()
    }
}

impl SdeModel {
    /// A model with unit-identity metadata; adjust with the `with_*` setters.
    pub fn new(name: &str, dim: usize, horizon: f64, drift: Field, diffusion: Field) -> Self {
        SdeModel {
            name: name.to_string(),
            dim,
            horizon,
            drift,
            diffusion,
            diffusion_inverse: None,
            bounds: CoefficientBounds::scaled_identity(1.0, None),
            spatial_modulus: Modulus::zero(),
            time_modulus: Modulus::zero(),
            regime: Regime::Bounded,
            window: 4.0,
        }
    }

    pub fn with_inverse(mut self, inverse: Field) -> Self {
        self.diffusion_inverse = Some(inverse);
        self
    }

    pub fn with_bounds(mut self, bounds: CoefficientBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_moduli(mut self, spatial: Modulus, time: Modulus) -> Self {
        self.spatial_modulus = spatial;
        self.time_modulus = time;
        self
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    pub fn has_inverse(&self) -> bool {
        self.diffusion_inverse.is_some()
    }

    /// Diffusion independent of the state (used to pick quadrature over Monte Carlo).
    pub fn has_constant_diffusion(&self) -> bool {
        self.bounds.grad_sigma == 0.0
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    pub fn eval_drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut out = vec![0.0; self.dim];
        (self.drift)(t, x, &mut out);
        Ok(out)
    }

    pub fn eval_diffusion(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut out = vec![0.0; self.dim * self.dim];
        (self.diffusion)(t, x, &mut out);
        Ok(out)
    }

    #[inline]
    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    #[inline]
    pub fn diffusion_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    /// `sigma^-1(t, x)`, from the supplied inverse or by numerical inversion.
    pub fn diffusion_inverse_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if let Some(inv) = &self.diffusion_inverse {
            inv(t, x, out);
            return Ok(());
        }
        let mut s = vec![0.0; self.dim * self.dim];
        (self.diffusion)(t, x, &mut s);
        let inv = linalg::inverse(&s, self.dim).ok_or_else(|| Error::Domain(format!("diffusion singular at t = {t}, x = {x:?}")))?;
        out.copy_from_slice(&inv);
        Ok(())
    }
}

/// Closed-form solutions available as downstream oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    /// `b1 = x2, b2 = 0, sigma = I`: `X2 = x2 + W`, `X1 = x1 + x2 t + int W`.
    IntegratedBrownian,
}

/// Degenerate (kinetic) model on `R^{2n}`: noise acts on the second block only.
/// All callbacks receive the stacked state `(x1, x2)`.
#[derive(Clone)]
pub struct DegenerateSdeModel {
    pub name: String,
    pub half_dim: usize,
    pub horizon: f64,
    drift1: Field,
    drift2: Field,
    grad2_drift1: Field,
    diffusion: Field,
    /// Dini modulus `phi` of the assumptions.
    pub dini_modulus: Modulus,
    pub time_modulus: Modulus,
    pub ellipticity_floor: f64,
    pub exact: Option<ExactSolution>,
    pub window: f64,
}

impl fmt::Debug for DegenerateSdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DegenerateSdeModel")
            .field("name", &self.name)
            .field("half_dim", &self.half_dim)
            .field("horizon", &self.horizon)
            .field("dini_modulus", &self.dini_modulus.describe())
            .field("exact", &self.exact)
            .finish()
    }
}

impl DegenerateSdeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        half_dim: usize,
        horizon: f64,
        drift1: Field,
        drift2: Field,
        grad2_drift1: Field,
        diffusion: Field,
        dini_modulus: Modulus,
        ellipticity_floor: f64,
    ) -> Self {
        DegenerateSdeModel {
            name: name.to_string(),
            half_dim,
            horizon,
            drift1,
            drift2,
            grad2_drift1,
            diffusion,
            dini_modulus,
            time_modulus: Modulus::zero(),
            ellipticity_floor,
            exact: None,
            window: 4.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.half_dim
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// Stacked drift `(b1; b2)`.
    pub fn eval_drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut out = vec![0.0; self.state_dim()];
        self.drift_into(t, x, &mut out);
        Ok(out)
    }

    /// Row-major `2n x n` block `(0; sigma)`.
    pub fn eval_diffusion(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let n = self.half_dim;
        let mut s = vec![0.0; n * n];
        (self.diffusion)(t, x, &mut s);
        let mut out = vec![0.0; 2 * n * n];
        out[n * n..].copy_from_slice(&s);
        Ok(out)
    }

    #[inline]
    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.half_dim;
        let (a, b) = out.split_at_mut(n);
        (self.drift1)(t, x, a);
        (self.drift2)(t, x, b);
    }

    #[inline]
    pub fn drift1_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift1)(t, x, out)
    }

    #[inline]
    pub fn drift2_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift2)(t, x, out)
    }

    /// The `n x n` diffusion acting on the second block.
    #[inline]
    pub fn sigma_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    pub fn grad2_drift1_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.grad2_drift1)(t, x, out)
    }
}

/// Either kind of catalog model.
#[derive(Debug, Clone)]
pub enum Model {
    Standard(SdeModel),
    Degenerate(DegenerateSdeModel),
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Standard(m) => &m.name,
            Model::Degenerate(m) => &m.name,
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Model::Standard(m) => m.horizon,
            Model::Degenerate(m) => m.horizon,
        }
    }

    /// Dimension of the state vector.
    pub fn state_dim(&self) -> usize {
        match self {
            Model::Standard(m) => m.dim,
            Model::Degenerate(m) => m.state_dim(),
        }
    }

    /// Number of Brownian coordinates.
    pub fn noise_dim(&self) -> usize {
        match self {
            Model::Standard(m) => m.dim,
            Model::Degenerate(m) => m.half_dim,
        }
    }

    pub fn eval_drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Standard(m) => m.eval_drift(t, x),
            Model::Degenerate(m) => m.eval_drift(t, x),
        }
    }

    pub fn eval_diffusion(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Standard(m) => m.eval_diffusion(t, x),
            Model::Degenerate(m) => m.eval_diffusion(t, x),
        }
    }

    /// Modulus whose `phi(sqrt(delta))^2` is the strong-error bound curve.
    pub fn rate_modulus(&self) -> &Modulus {
        match self {
            Model::Standard(m) => &m.spatial_modulus,
            Model::Degenerate(m) => &m.dini_modulus,
        }
    }

    pub fn as_standard(&self) -> Result<&SdeModel> {
        match self {
            Model::Standard(m) => Ok(m),
            Model::Degenerate(m) => Err(Error::InvalidParameter(format!("'{}' is a degenerate model", m.name))),
        }
    }

    pub fn as_degenerate(&self) -> Result<&DegenerateSdeModel> {
        match self {
            Model::Degenerate(m) => Ok(m),
            Model::Standard(m) => Err(Error::InvalidParameter(format!("'{}' is not a degenerate model", m.name))),
        }
    }
}

/// Names accepted by [`make_catalog_model`].
pub const CATALOG: &[&str] = &[
    "zero",
    "constant-drift",
    "ou",
    "holder",
    "log-dini",
    "unbounded-holder",
    "time-holder",
    "perturbed-sigma",
    "kinetic",
    "kinetic-rough",
];

/// Catalog parameters; unused fields are ignored by a given model.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogParams {
    pub dim: usize,
    pub horizon: f64,
    /// Hoelder exponent for "holder", "unbounded-holder", "time-holder".
    pub beta: f64,
    /// Drift of "constant-drift" (a single value is broadcast).
    pub constant: Vec<f64>,
    /// Noise scale of "ou".
    pub sigma: f64,
    /// `c` and `p` of the log-power modulus.
    pub log_c: f64,
    pub log_p: f64,
    /// Amplitude `a` in `sigma(y) = 1 + a sin(y)` for "perturbed-sigma".
    pub amplitude: f64,
}

impl Default for CatalogParams {
    fn default() -> Self {
        CatalogParams { dim: 1, horizon: 1.0, beta: 0.5, constant: vec![1.0], sigma: 1.0, log_c: 5f64.exp(), log_p: 2.0, amplitude: 0.1 }
    }
}

impl CatalogParams {
    /// Set a parameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("'{key}' expects a number, got '{v}'")))
        };
        match key {
            "n" | "dim" => {
                self.dim = value.trim().parse().map_err(|_| Error::InvalidParameter(format!("'{key}' expects a count, got '{value}'")))?
            }
            "horizon" | "T" => self.horizon = num(value)?,
            "beta" => self.beta = num(value)?,
            "c" | "constant" => {
                self.constant = value.split(',').map(num).collect::<Result<_>>()?;
            }
            "sigma" => self.sigma = num(value)?,
            "log_c" => self.log_c = num(value)?,
            "log_p" => self.log_p = num(value)?,
            "amplitude" => self.amplitude = num(value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown model parameter '{key}'"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs that reproduce `self` through [`CatalogParams::set`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("n".into(), self.dim.to_string()),
            ("horizon".into(), fmt_f64(self.horizon)),
            ("beta".into(), fmt_f64(self.beta)),
            ("constant".into(), self.constant.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")),
            ("sigma".into(), fmt_f64(self.sigma)),
            ("log_c".into(), fmt_f64(self.log_c)),
            ("log_p".into(), fmt_f64(self.log_p)),
            ("amplitude".into(), fmt_f64(self.amplitude)),
        ]
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Odd, mean-reverting profile `-sign(z) g(min(|z|, 1))`.
fn reverting(g: impl Fn(f64) -> f64, z: f64) -> f64 {
    -sign(z) * g(z.abs().min(1.0))
}

fn identity_field(n: usize, scale: f64) -> Field {
    Arc::new(move |_t, _x, out: &mut [f64]| {
        out.fill(0.0);
        for i in 0..n {
            out[i * n + i] = scale;
        }
    })
}

fn zero_field() -> Field {
    Arc::new(|_t, _x, out: &mut [f64]| out.fill(0.0))
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.into()))
    }
}

/// The catalog's Dini modulus for the log-type models: `LogPower(c, p)`
/// claiming membership of D, D^0.1 and S_0.
pub fn catalog_log_modulus(c: f64, p: f64) -> Result<Modulus> {
    let m = Modulus::log_power(c, p)?;
    let mut claims = m.claims.clone();
    if claims.contains(&ClassFlag::DSquareConcave) {
        claims.push(ClassFlag::DEpsConcave(0.1));
    }
    Ok(m.with_claims(claims))
}

/// Odd bounded drift with exact modulus `r^beta`: `-2^(beta-1) sign(x) min(1,|x|)^beta`.
fn holder_profile(beta: f64) -> impl Fn(f64) -> f64 + Clone {
    let scale = 2f64.powf(beta - 1.0);
    move |x: f64| scale * reverting(|u| u.powf(beta), x)
}

/// Build a catalog model.
pub fn make_catalog_model(name: &str, params: &CatalogParams) -> Result<Model> {
    let n = params.dim;
    let horizon = params.horizon;
    require(n >= 1, "dimension must be at least 1")?;
    require(horizon > 0.0, "horizon must be positive")?;
    let one_dim = |what: &str| require(n == 1, format!("'{what}' is defined for n = 1 only"));
    let model = match name {
        "zero" => Model::Standard(
            SdeModel::new("zero", n, horizon, zero_field(), identity_field(n, 1.0))
                .with_inverse(identity_field(n, 1.0))
                .with_bounds(CoefficientBounds::scaled_identity(1.0, Some(0.0)))
                .with_moduli(Modulus::zero(), Modulus::zero()),
        ),
        "constant-drift" => {
            let c: Vec<f64> = match params.constant.len() {
                1 => vec![params.constant[0]; n],
                k if k == n => params.constant.clone(),
                k => return Err(Error::InvalidParameter(format!("constant has {k} entries, expected {n}"))),
            };
            let sup = linalg::norm(&c);
            let drift: Field = Arc::new(move |_t, _x, out: &mut [f64]| out.copy_from_slice(&c));
            Model::Standard(
                SdeModel::new("constant-drift", n, horizon, drift, identity_field(n, 1.0))
                    .with_inverse(identity_field(n, 1.0))
                    .with_bounds(CoefficientBounds::scaled_identity(1.0, Some(sup)))
                    .with_moduli(Modulus::zero(), Modulus::zero()),
            )
        }
        "ou" => {
            let s = params.sigma;
            require(s > 0.0, "ou needs sigma > 0")?;
            let drift: Field = Arc::new(|_t, x: &[f64], out: &mut [f64]| {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -xi;
                }
            });
            let rn = (n as f64).sqrt();
            Model::Standard(
                SdeModel::new("ou", n, horizon, drift, identity_field(n, s))
                    .with_inverse(identity_field(n, 1.0 / s))
                    .with_bounds(CoefficientBounds::scaled_identity(s, None))
                    .with_moduli(Modulus::linear(1.0)?, Modulus::zero())
                    .with_regime(Regime::LinearGrowth { growth: 1.0 + s * rn + rn / s }),
            )
        }
        "holder" | "time-holder" => {
            one_dim(name)?;
            let beta = params.beta;
            let modulus = Modulus::power(beta)?;
            let h = holder_profile(beta);
            let sup = 2f64.powf(beta - 1.0);
            if name == "holder" {
                let drift: Field = Arc::new(move |_t, x: &[f64], out: &mut [f64]| out[0] = h(x[0]));
                Model::Standard(
                    SdeModel::new("holder", 1, horizon, drift, identity_field(1, 1.0))
                        .with_inverse(identity_field(1, 1.0))
                        .with_bounds(CoefficientBounds::scaled_identity(1.0, Some(sup)))
                        .with_moduli(modulus, Modulus::zero()),
                )
            } else {
                let drift: Field = Arc::new(move |t, x: &[f64], out: &mut [f64]| out[0] = h(x[0]) + t.sqrt());
                Model::Standard(
                    SdeModel::new("time-holder", 1, horizon, drift, identity_field(1, 1.0))
                        .with_inverse(identity_field(1, 1.0))
                        .with_bounds(CoefficientBounds::scaled_identity(1.0, Some(sup + horizon.sqrt())))
                        .with_moduli(modulus, Modulus::power(0.5)?),
                )
            }
        }
        "log-dini" => {
            one_dim(name)?;
            let phi = catalog_log_modulus(params.log_c, params.log_p)?;
            let sup = 0.5 * phi.at(1.0);
            let p = phi.clone();
            let drift: Field = Arc::new(move |_t, x: &[f64], out: &mut [f64]| out[0] = 0.5 * reverting(|u| p.at(u), x[0]));
            Model::Standard(
                SdeModel::new("log-dini", 1, horizon, drift, identity_field(1, 1.0))
                    .with_inverse(identity_field(1, 1.0))
                    .with_bounds(CoefficientBounds::scaled_identity(1.0, Some(sup)))
                    .with_moduli(phi, Modulus::zero()),
            )
        }
        "unbounded-holder" => {
            one_dim(name)?;
            let beta = params.beta;
            let h = holder_profile(beta);
            let drift: Field = Arc::new(move |_t, x: &[f64], out: &mut [f64]| out[0] = -x[0] + h(x[0]));
            let modulus = Modulus::sum(Modulus::linear(1.0)?, Modulus::power(beta)?);
            Model::Standard(
                SdeModel::new("unbounded-holder", 1, horizon, drift, identity_field(1, 1.0))
                    .with_inverse(identity_field(1, 1.0))
                    .with_bounds(CoefficientBounds::scaled_identity(1.0, None))
                    .with_moduli(modulus, Modulus::zero())
                    .with_regime(Regime::LinearGrowth { growth: 3.0 }),
            )
        }
        "perturbed-sigma" => {
            one_dim(name)?;
            let a = params.amplitude;
            require(a.abs() < 1.0, "perturbed-sigma needs |amplitude| < 1")?;
            let diffusion: Field = Arc::new(move |_t, x: &[f64], out: &mut [f64]| out[0] = 1.0 + a * x[0].sin());
            let inverse: Field = Arc::new(move |_t, x: &[f64], out: &mut [f64]| out[0] = 1.0 / (1.0 + a * x[0].sin()));
            let lo = 1.0 - a.abs();
            Model::Standard(
                SdeModel::new("perturbed-sigma", 1, horizon, zero_field(), diffusion)
                    .with_inverse(inverse)
                    .with_bounds(CoefficientBounds {
                        drift: Some(0.0),
                        grad_sigma: a.abs(),
                        hess_sigma: a.abs(),
                        sigma_inv: 1.0 / lo,
                        grad_sigma_inv: a.abs() / (lo * lo),
                        sigma: 1.0 + a.abs(),
                    })
                    .with_moduli(Modulus::zero(), Modulus::zero()),
            )
        }
        "kinetic" => {
            let drift1: Field = Arc::new(move |_t, x: &[f64], out: &mut [f64]| out.copy_from_slice(&x[n..2 * n]));
            let mut m = DegenerateSdeModel::new(
                "kinetic",
                n,
                horizon,
                drift1,
                zero_field(),
                identity_field(n, 1.0),
                identity_field(n, 1.0),
                Modulus::linear(1.0)?,
                1.0,
            );
            m.exact = Some(ExactSolution::IntegratedBrownian);
            Model::Degenerate(m)
        }
        "kinetic-rough" => {
            one_dim(name)?;
            let phi = catalog_log_modulus(params.log_c, params.log_p)?;
            let lift = holder_dini_lift(&phi, 2.0 / 3.0)?;
            let p = phi.clone();
            let drift1: Field = Arc::new(|_t, x: &[f64], out: &mut [f64]| out[0] = x[1]);
            let drift2: Field = Arc::new(move |_t, x: &[f64], out: &mut [f64]| {
                out[0] = 0.5 * reverting(|u| lift.at(u), x[0]) + 0.5 * reverting(|u| p.at(u).powf(3.5), x[1]);
            });
            Model::Degenerate(DegenerateSdeModel::new(
                "kinetic-rough",
                1,
                horizon,
                drift1,
                drift2,
                identity_field(1, 1.0),
                identity_field(1, 1.0),
                phi,
                1.0,
            ))
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(model)
}

/// One sampled inequality check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Largest `lhs / rhs` seen (0 when the left side vanished everywhere).
    pub worst_ratio: f64,
    /// Largest `lhs - rhs` seen.
    pub worst_excess: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub model: String,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("model {} {}\n", self.model, if self.passed { "pass" } else { "fail" });
        for c in &self.checks {
            s.push_str(&format!(
                "  {:<22} {} worst_ratio={:.6e} worst_excess={:.6e}\n",
                c.name,
                if c.passed { "pass" } else { "fail" },
                c.worst_ratio,
                c.worst_excess
            ));
        }
        s
    }
}

struct Tally {
    name: &'static str,
    ratio: f64,
    excess: f64,
    tol: f64,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Tally { name, ratio: 0.0, excess: f64::NEG_INFINITY, tol }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        if lhs > 0.0 {
            let r = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
            self.ratio = self.ratio.max(r);
        }
        let e = if lhs.is_nan() || rhs.is_nan() { f64::INFINITY } else { lhs - rhs };
        self.excess = self.excess.max(e);
    }

    fn finish(self) -> CheckResult {
        let excess = if self.excess == f64::NEG_INFINITY { 0.0 } else { self.excess };
        CheckResult { name: self.name.to_string(), worst_ratio: self.ratio, worst_excess: excess, passed: excess <= self.tol }
    }
}

/// Pair sampler: mixes far pairs, near pairs and pairs concentrated at the origin.
struct PairSampler {
    stream: CounterStream,
    window: f64,
}

impl PairSampler {
    fn pair(&mut self, x: &mut [f64], y: &mut [f64]) {
        let mode = self.stream.next_bits() % 3;
        match mode {
            0 => {
                for v in x.iter_mut().chain(y.iter_mut()) {
                    *v = self.window * (2.0 * self.stream.uniform() - 1.0);
                }
            }
            1 => {
                let r = 10f64.powf(-8.0 * self.stream.uniform());
                for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
                    *xi = self.window * (2.0 * self.stream.uniform() - 1.0);
                    *yi = *xi + r * (2.0 * self.stream.uniform() - 1.0);
                }
            }
            _ => {
                let scale = 10f64.powf(-8.0 * self.stream.uniform());
                for v in x.iter_mut().chain(y.iter_mut()) {
                    *v = scale * (2.0 * self.stream.uniform() - 1.0);
                }
            }
        }
    }

    fn time(&mut self, horizon: f64) -> f64 {
        horizon * self.stream.uniform()
    }
}

/// Check every declared modulus inequality and nonsingularity at sampled points.
pub fn validate_model(model: &Model, n_samples: usize, seed: u64, tol: f64) -> ValidationReport {
    match model {
        Model::Standard(m) => validate_standard(m, n_samples, seed, tol),
        Model::Degenerate(m) => validate_degenerate(m, n_samples, seed, tol),
    }
}

/// Condition numbers above this count as singular.
const MAX_CONDITION: f64 = 1e8;

fn validate_standard(m: &SdeModel, n_samples: usize, seed: u64, tol: f64) -> ValidationReport {
    let n = m.dim;
    let mut sampler = PairSampler { stream: CounterStream::new(seed, Purpose::Validation, 0), window: m.window };
    let mut spatial = Tally::new("spatial-drift", tol);
    let mut temporal = Tally::new("temporal", tol);
    let mut inverse = Tally::new("diffusion-inverse", 1e-8);
    let mut condition = Tally::new("nonsingular", 0.0);
    let mut growth = Tally::new("drift-bound", tol);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let (mut sx, mut sy) = (vec![0.0; n * n], vec![0.0; n * n]);
    let mut sinv = vec![0.0; n * n];
    let eye = linalg::identity(n);
    for _ in 0..n_samples {
        sampler.pair(&mut x, &mut y);
        let t = sampler.time(m.horizon);
        let s = sampler.time(m.horizon);
        m.drift_into(t, &x, &mut bx);
        m.drift_into(t, &y, &mut by);
        spatial.record(linalg::distance(&bx, &by), m.spatial_modulus.at(linalg::distance(&x, &y)));

        m.drift_into(s, &x, &mut by);
        m.diffusion_into(t, &x, &mut sx);
        m.diffusion_into(s, &x, &mut sy);
        let lhs = linalg::distance(&bx, &by) + linalg::hs_distance(&sx, &sy);
        temporal.record(lhs, m.time_modulus.at((t - s).abs()));

        if m.has_inverse() && m.diffusion_inverse_into(t, &x, &mut sinv).is_ok() {
            let mut prod = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    prod[i * n + j] = (0..n).map(|k| sx[i * n + k] * sinv[k * n + j]).sum();
                }
            }
            inverse.record(linalg::hs_distance(&prod, &eye), 0.0);
        }
        let (lo, hi) = linalg::singular_range(&sx, n, n);
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        condition.record(cond, MAX_CONDITION);
        // report the condition number itself as the ratio
        condition.ratio = condition.ratio.max(cond / MAX_CONDITION);

        let bound = match (m.regime, m.bounds.drift) {
            (Regime::Bounded, Some(sup)) => sup,
            (Regime::LinearGrowth { growth: k }, _) => k * (1.0 + linalg::norm(&x)),
            (Regime::Bounded, None) => f64::INFINITY,
        };
        growth.record(linalg::norm(&bx), bound);
    }
    let mut checks = vec![spatial.finish(), temporal.finish()];
    if m.has_inverse() {
        checks.push(inverse.finish());
    }
    checks.push(condition.finish());
    checks.push(growth.finish());
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { model: m.name.clone(), checks, passed }
}

fn validate_degenerate(m: &DegenerateSdeModel, n_samples: usize, seed: u64, tol: f64) -> ValidationReport {
    let n = m.half_dim;
    let mut sampler = PairSampler { stream: CounterStream::new(seed, Purpose::Validation, 1), window: m.window };
    let mut ellipticity = Tally::new("ellipticity", tol);
    let mut first_block = Tally::new("drift1-first-block", tol);
    let mut gradient = Tally::new("grad2-drift1", tol);
    let mut second = Tally::new("drift2", tol);
    let mut temporal = Tally::new("temporal", tol);
    let mut condition = Tally::new("nonsingular", 0.0);
    let phi = &m.dini_modulus;
    let holder_dini = |r: f64| r.powf(2.0 / 3.0) * phi.at(r);
    let (mut x, mut y) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    let (mut ga, mut gb) = (vec![0.0; n * n], vec![0.0; n * n]);
    let (mut sa, mut sb) = (vec![0.0; n * n], vec![0.0; n * n]);
    let mut z = vec![0.0; 2 * n];
    for _ in 0..n_samples {
        sampler.pair(&mut x, &mut y);
        let t = sampler.time(m.horizon);
        let s = sampler.time(m.horizon);

        m.grad2_drift1_into(t, &x, &mut ga);
        let (lo, _) = linalg::singular_range(&ga, n, n);
        ellipticity.record(m.ellipticity_floor - lo, 0.0);

        // x2 = y2
        z[..n].copy_from_slice(&y[..n]);
        z[n..].copy_from_slice(&x[n..]);
        m.drift1_into(t, &x, &mut a);
        m.drift1_into(t, &z, &mut b);
        first_block.record(linalg::distance(&a, &b), holder_dini(linalg::distance(&x[..n], &y[..n])));

        // x1 = y1
        z[..n].copy_from_slice(&x[..n]);
        z[n..].copy_from_slice(&y[n..]);
        m.grad2_drift1_into(t, &z, &mut gb);
        gradient.record(linalg::hs_distance(&ga, &gb), phi.at(linalg::distance(&x[n..], &y[n..])));

        m.drift2_into(t, &x, &mut a);
        m.drift2_into(t, &y, &mut b);
        let rhs = holder_dini(linalg::distance(&x[..n], &y[..n])) + phi.at(linalg::distance(&x[n..], &y[n..])).powf(3.5);
        second.record(linalg::distance(&a, &b), rhs);

        let mut lhs = 0.0;
        m.drift1_into(t, &x, &mut a);
        m.drift1_into(s, &x, &mut b);
        lhs += linalg::distance(&a, &b);
        m.drift2_into(t, &x, &mut a);
        m.drift2_into(s, &x, &mut b);
        lhs += linalg::distance(&a, &b);
        m.sigma_into(t, &x, &mut sa);
        m.sigma_into(s, &x, &mut sb);
        lhs += linalg::hs_distance(&sa, &sb);
        temporal.record(lhs, m.time_modulus.at((t - s).abs()));

        let (lo, hi) = linalg::singular_range(&sa, n, n);
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        condition.record(cond, MAX_CONDITION);
        condition.ratio = condition.ratio.max(cond / MAX_CONDITION);
    }
    let checks =
        vec![ellipticity.finish(), first_block.finish(), gradient.finish(), second.finish(), temporal.finish(), condition.finish()];
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { model: m.name.clone(), checks, passed }
}

/// `max |b(t, x)|` over a uniform grid of `[-radius, radius]^n` (`points` per
/// axis) and `time_points` times in `[0, T]`.
pub fn drift_sup_on_grid(m: &SdeModel, radius: f64, points: usize, time_points: usize) -> f64 {
    let n = m.dim;
    let total = points.pow(n as u32);
    let mut x = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut best: f64 = 0.0;
    for ti in 0..time_points.max(1) {
        let t = if time_points <= 1 { m.horizon } else { m.horizon * ti as f64 / (time_points - 1) as f64 };
        for idx in 0..total {
            let mut rem = idx;
            for xi in x.iter_mut() {
                let k = rem % points;
                rem /= points;
                *xi = -radius + 2.0 * radius * k as f64 / (points - 1) as f64;
            }
            m.drift_into(t, &x, &mut b);
            best = best.max(linalg::norm(&b));
        }
    }
    best
}
