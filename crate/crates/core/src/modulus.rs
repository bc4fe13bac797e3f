//! Moduli of continuity and numerical checks of their class memberships
//! (Dini, concavity of `phi^2` and `phi^(2(1+eps))`, slow variation at zero).

use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, Rule};
use crate::rng::{CounterStream, Purpose};
use crate::stats::neville;

/// Parametric shape of a modulus `phi: R+ -> R+`.
#[derive(Debug, Clone, PartialEq)]
pub enum ModulusKind {
    /// `r^beta`, `beta` in (0, 1].
    Power { beta: f64 },
    /// `(log(c + 1/r))^(-p)`, 0 at 0.
    LogPower { c: f64, p: f64 },
    /// `r^alpha * inner(r)`.
    Product { alpha: f64, inner: Box<Modulus> },
    /// `slope * r`.
    Linear { slope: f64 },
    /// Piecewise-linear interpolation of sorted `(r, phi(r))` samples.
    Tabulated { points: Vec<(f64, f64)> },
    /// `r^alpha * inner(r)` on (0, 1] and `2 c_alpha r` beyond 1.
    HolderDiniLift { alpha: f64, c_alpha: f64, inner: Box<Modulus> },
    /// `sqrt(inner(r)^2 + r)`.
    PhiTilde { inner: Box<Modulus> },
    /// `a(r) + b(r)`.
    Sum(Box<Modulus>, Box<Modulus>),
}

/// Class memberships a modulus may claim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassFlag {
    Dini,
    DSquareConcave,
    DEpsConcave(f64),
    SlowlyVarying,
    Increasing,
}

impl ClassFlag {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "Dini" | "dini" => return Ok(ClassFlag::Dini),
            "DSquareConcave" | "d-square-concave" => return Ok(ClassFlag::DSquareConcave),
            "SlowlyVarying" | "slowly-varying" => return Ok(ClassFlag::SlowlyVarying),
            "Increasing" | "increasing" => return Ok(ClassFlag::Increasing),
            _ => {}
        }
        let eps = t
            .strip_prefix("DEpsConcave(")
            .or_else(|| t.strip_prefix("d-eps-concave("))
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|v| v.trim().parse::<f64>().ok());
        match eps {
            Some(e) if e > 0.0 && e < 1.0 => Ok(ClassFlag::DEpsConcave(e)),
            _ => Err(Error::UnknownClass(s.to_string())),
        }
    }
}

impl fmt::Display for ClassFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassFlag::Dini => write!(f, "Dini"),
            ClassFlag::DSquareConcave => write!(f, "DSquareConcave"),
            ClassFlag::DEpsConcave(e) => write!(f, "DEpsConcave({e})"),
            ClassFlag::SlowlyVarying => write!(f, "SlowlyVarying"),
            ClassFlag::Increasing => write!(f, "Increasing"),
        }
    }
}

/// A modulus of continuity together with the classes it claims to belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulus {
    pub kind: ModulusKind,
    pub claims: Vec<ClassFlag>,
}

impl Modulus {
    pub fn power(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("power exponent {beta} outside (0, 1]")));
        }
        let mut claims = vec![ClassFlag::Increasing, ClassFlag::Dini];
        if beta <= 0.5 {
            claims.push(ClassFlag::DSquareConcave);
        }
        Ok(Modulus { kind: ModulusKind::Power { beta }, claims })
    }

    pub fn log_power(c: f64, p: f64) -> Result<Self> {
        if !(c >= std::f64::consts::E) || !(p > 0.0) {
            return Err(Error::InvalidParameter(format!("log-power needs c >= e and p > 0 (got c = {c}, p = {p})")));
        }
        let mut claims = vec![ClassFlag::Increasing, ClassFlag::SlowlyVarying];
        if p > 1.0 {
            claims.push(ClassFlag::Dini);
        }
        // phi^q is concave on R+ as soon as log(c) >= q + 1
        if c.ln() >= 2.0 * p + 1.0 {
            claims.push(ClassFlag::DSquareConcave);
        }
        Ok(Modulus { kind: ModulusKind::LogPower { c, p }, claims })
    }

    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope >= 0.0) {
            return Err(Error::InvalidParameter(format!("negative slope {slope}")));
        }
        Ok(Modulus { kind: ModulusKind::Linear { slope }, claims: vec![ClassFlag::Increasing, ClassFlag::Dini] })
    }

    /// The zero modulus.
    pub fn zero() -> Self {
        Modulus::linear(0.0).expect("zero slope is valid")
    }

    pub fn product(alpha: f64, inner: Modulus) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("product exponent {alpha} outside [0, 1)")));
        }
        let mut claims = vec![ClassFlag::Increasing];
        if inner.claims.contains(&ClassFlag::Dini) {
            claims.push(ClassFlag::Dini);
        }
        Ok(Modulus { kind: ModulusKind::Product { alpha, inner: Box::new(inner) }, claims })
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter("tabulated modulus needs at least two points".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidParameter("tabulated abscissae must be strictly increasing".into()));
            }
        }
        if points[0].0 < 0.0 || points.iter().any(|p| !(p.1 >= 0.0)) {
            return Err(Error::InvalidParameter("tabulated modulus must be non-negative on R+".into()));
        }
        let increasing = points.windows(2).all(|w| w[1].1 >= w[0].1);
        let claims = if increasing { vec![ClassFlag::Increasing] } else { vec![] };
        Ok(Modulus { kind: ModulusKind::Tabulated { points }, claims })
    }

    pub fn sum(a: Modulus, b: Modulus) -> Self {
        let mut claims = vec![];
        for flag in [ClassFlag::Increasing, ClassFlag::Dini] {
            if a.claims.contains(&flag) && b.claims.contains(&flag) {
                claims.push(flag);
            }
        }
        Modulus { kind: ModulusKind::Sum(Box::new(a), Box::new(b)), claims }
    }

    /// Replace the claimed classes.
    pub fn with_claims(mut self, claims: Vec<ClassFlag>) -> Self {
        self.claims = claims;
        self
    }

    pub fn claims(&self, flag: ClassFlag) -> bool {
        self.claims.contains(&flag)
    }

    /// `phi(r)`. Errors for negative `r` or `r` outside a table.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("modulus evaluated at {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(match &self.kind {
            ModulusKind::Power { beta } => r.powf(*beta),
            ModulusKind::LogPower { c, p } => (c + r.recip()).ln().powf(-p),
            ModulusKind::Product { alpha, inner } => r.powf(*alpha) * inner.eval(r)?,
            ModulusKind::Linear { slope } => slope * r,
            ModulusKind::Tabulated { points } => interpolate(points, r)?,
            ModulusKind::HolderDiniLift { alpha, c_alpha, inner } => {
                if r <= 1.0 {
                    r.powf(*alpha) * inner.eval(r)?
                } else {
                    2.0 * c_alpha * r
                }
            }
            ModulusKind::PhiTilde { inner } => {
                let v = inner.eval(r)?;
                (v * v + r).sqrt()
            }
            ModulusKind::Sum(a, b) => a.eval(r)? + b.eval(r)?,
        })
    }

    /// Evaluation for arguments known to be in the domain.
    pub(crate) fn at(&self, r: f64) -> f64 {
        self.eval(r).unwrap_or(f64::NAN)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            ModulusKind::Power { beta } => format!("power({beta})"),
            ModulusKind::LogPower { c, p } => format!("log-power(c={c}, p={p})"),
            ModulusKind::Product { alpha, inner } => format!("r^{alpha}*{}", inner.describe()),
            ModulusKind::Linear { slope } => format!("linear({slope})"),
            ModulusKind::Tabulated { points } => format!("tabulated({} points)", points.len()),
            ModulusKind::HolderDiniLift { alpha, c_alpha, inner } => {
                format!("lift[{alpha}](c={c_alpha}, {})", inner.describe())
            }
            ModulusKind::PhiTilde { inner } => format!("tilde({})", inner.describe()),
            ModulusKind::Sum(a, b) => format!("{}+{}", a.describe(), b.describe()),
        }
    }
}

fn interpolate(points: &[(f64, f64)], r: f64) -> Result<f64> {
    let (x0, _) = points[0];
    let (xn, yn) = points[points.len() - 1];
    if r < x0 || r > xn {
        return Err(Error::Domain(format!("{r} outside tabulated range [{x0}, {xn}]")));
    }
    if r == xn {
        return Ok(yn);
    }
    let i = points.partition_point(|p| p.0 <= r) - 1;
    let (a, fa) = points[i];
    let (b, fb) = points[i + 1];
    Ok(fa + (fb - fa) * (r - a) / (b - a))
}

/// `int_{lower_cut}^1 phi(s)/s ds`, by composite Gauss-Legendre in `u = log(1/s)`.
pub fn dini_integral(m: &Modulus, lower_cut: f64, quadrature_points: usize) -> Result<f64> {
    if !(lower_cut > 0.0 && lower_cut < 1.0) {
        return Err(Error::Domain(format!("lower cut {lower_cut} outside (0, 1)")));
    }
    let rule = gauss_legendre(8);
    let panels = quadrature_points.div_ceil(8).max(1);
    log_integral(m, -lower_cut.ln(), panels, &rule)
}

fn log_integral(m: &Modulus, upper: f64, panels: usize, rule: &Rule) -> Result<f64> {
    let h = upper / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let a = k as f64 * h;
        let mut err = None;
        total += rule.integrate(a, a + h, |u| match m.eval((-u).exp()) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(total)
}

/// Outcome of one class-membership check.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub flag: ClassFlag,
    pub passed: bool,
    pub worst_violation: f64,
    /// Where the worst violation occurred (argument of phi, or probe level).
    pub location: f64,
}

impl ClassReport {
    /// One-line text form: `flag pass|fail worst_violation location`.
    pub fn to_line(&self) -> String {
        format!("{} {} {:.6e} {:.6e}", self.flag, if self.passed { "pass" } else { "fail" }, self.worst_violation, self.location)
    }
}

/// Sample points in (0, 1]: half log-spaced down to 1e-12, half uniform.
fn sample_points(n: usize) -> Vec<f64> {
    let n_log = n / 2;
    let n_lin = n - n_log;
    let mut pts = Vec::with_capacity(n);
    for i in 0..n_log {
        let f = i as f64 / (n_log.max(2) - 1) as f64;
        pts.push(10f64.powf(-12.0 * (1.0 - f)));
    }
    for i in 1..=n_lin {
        pts.push(i as f64 / n_lin as f64);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

// probe depths ell for limits at zero, evaluated at s = exp(-ell)
const PROBES_WIDE: [f64; 7] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0];
const PROBES_NARROW: [f64; 6] = [200.0, 300.0, 400.0, 500.0, 600.0, 700.0];

/// Check one class property numerically; pass iff the worst violation is at most `tol`.
///
/// * `Increasing`: largest decrease between consecutive sample points.
/// * `DSquareConcave` / `DEpsConcave(eps)`: largest midpoint-concavity defect of
///   `phi^2` (resp. `phi^(2(1+eps))`) over all sampled pairs.
/// * `SlowlyVarying`: limit of `phi(l t)/phi(t) - 1` as `t -> 0`, for
///   `l` in {1/2, 2, 10}, extrapolated in `1/log(1/t)`.
/// * `Dini`: Cauchy defect of `int_eps^1 phi(s)/s ds` along `eps = e^-100k`,
///   measured as the disagreement of two extrapolations of the limit.
pub fn check_class(m: &Modulus, flag: ClassFlag, n_samples: usize, tol: f64) -> Result<ClassReport> {
    if n_samples < 3 {
        return Err(Error::InvalidParameter("check_class needs at least 3 samples".into()));
    }
    let (worst, location) = match flag {
        ClassFlag::Increasing => {
            let pts = sample_points(n_samples);
            let vals: Vec<f64> = pts.iter().map(|&s| m.eval(s)).collect::<Result<_>>()?;
            let mut worst = (0.0, 0.0);
            for i in 0..pts.len() - 1 {
                let d = vals[i] - vals[i + 1];
                if d > worst.0 {
                    worst = (d, pts[i]);
                }
            }
            worst
        }
        ClassFlag::DSquareConcave => concavity_defect(m, 2.0, n_samples)?,
        ClassFlag::DEpsConcave(eps) => concavity_defect(m, 2.0 * (1.0 + eps), n_samples)?,
        ClassFlag::SlowlyVarying => {
            let mut worst = (0.0, 0.0);
            for lam in [0.5, 2.0, 10.0] {
                let limit = slow_variation_limit(m, lam, &PROBES_WIDE)?;
                let v = if limit.is_nan() { f64::INFINITY } else { limit.abs() };
                if v > worst.0 || (v.is_infinite() && !worst.0.is_infinite()) {
                    worst = (v, lam);
                }
            }
            worst
        }
        ClassFlag::Dini => {
            let panels_per_unit = (n_samples / 1000).clamp(1, 4);
            let rule = gauss_legendre(8);
            let mut wide = Vec::with_capacity(PROBES_WIDE.len());
            let mut prev = 0.0;
            let mut monotone_defect: f64 = 0.0;
            for &ell in &PROBES_WIDE {
                let v = log_integral(m, ell, ell as usize * panels_per_unit, &rule)?;
                monotone_defect = monotone_defect.max(prev - v);
                prev = v;
                wide.push(v);
            }
            let inv = |ps: &[f64]| ps.iter().map(|l| 1.0 / l).collect::<Vec<_>>();
            let a = neville(&inv(&PROBES_WIDE), &wide, 0.0);
            let b = neville(&inv(&PROBES_NARROW), &wide[1..], 0.0);
            let defect = if a.is_finite() && b.is_finite() { (a - b).abs() } else { f64::INFINITY };
            (defect.max(monotone_defect), 0.0)
        }
    };
    Ok(ClassReport { flag, passed: worst <= tol, worst_violation: worst, location })
}

fn concavity_defect(m: &Modulus, power: f64, n_samples: usize) -> Result<(f64, f64)> {
    let pts = sample_points(n_samples);
    let g: Vec<f64> = pts.iter().map(|&s| m.eval(s).map(|v| v.powf(power))).collect::<Result<_>>()?;
    let mut worst = (0.0, 0.0);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let mid = 0.5 * (pts[i] + pts[j]);
            let gm = m.eval(mid)?.powf(power);
            let d = 0.5 * (g[i] + g[j]) - gm;
            if d > worst.0 {
                worst = (d, mid);
            }
        }
    }
    Ok(worst)
}

fn slow_variation_limit(m: &Modulus, lam: f64, probes: &[f64]) -> Result<f64> {
    let mut vs = Vec::with_capacity(probes.len());
    let mut ys = Vec::with_capacity(probes.len());
    for &ell in probes {
        let t = (-ell).exp();
        let den = m.eval(t)?;
        vs.push(1.0 / ell);
        ys.push(m.eval(lam * t)? / den - 1.0);
    }
    Ok(neville(&vs, &ys, 0.0))
}

/// Grid size for the `c_alpha` search.
const LIFT_GRID: usize = 10_000;

/// `phi_[alpha]`: `t^alpha phi(t)` on (0, 1], `2 c_alpha t` on (1, inf),
/// with `c_alpha = sup_{(0,1]} s^alpha phi(s)`.
pub fn holder_dini_lift(m: &Modulus, alpha: f64) -> Result<Modulus> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("lift order {alpha} outside [0, 1)")));
    }
    let g = |s: f64| -> Result<f64> { Ok(s.powf(alpha) * m.eval(s)?) };
    let lo = -12.0f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    let grid: Vec<f64> = (0..LIFT_GRID).map(|i| 10f64.powf(lo * (1.0 - i as f64 / (LIFT_GRID - 1) as f64))).collect();
    for (i, &s) in grid.iter().enumerate() {
        let v = g(s)?;
        if v > best.0 {
            best = (v, i);
        }
    }
    // golden-section refinement on the bracketing cell
    let i = best.1;
    let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(LIFT_GRID - 1)]);
    let mut c_alpha = best.0;
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = b - ratio * (b - a);
        let x2 = a + ratio * (b - a);
        let (f1, f2) = (g(x1)?, g(x2)?);
        c_alpha = c_alpha.max(f1).max(f2);
        if f1 < f2 {
            a = x1;
        } else {
            b = x2;
        }
    }
    let mut claims = vec![ClassFlag::Increasing];
    if m.claims(ClassFlag::Dini) {
        claims.push(ClassFlag::Dini);
    }
    Ok(Modulus { kind: ModulusKind::HolderDiniLift { alpha, c_alpha, inner: Box::new(m.clone()) }, claims })
}

/// `s -> sqrt(phi(s)^2 + s)`.
pub fn phi_tilde(m: &Modulus) -> Modulus {
    Modulus { kind: ModulusKind::PhiTilde { inner: Box::new(m.clone()) }, claims: vec![ClassFlag::Increasing] }
}

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub bounds: Vec<(f64, f64)>,
}

/// Lower bound for `[f]_psi = sup_{|x-y| <= 1} |f(x) - f(y)| / psi(|x-y|)` over
/// `n_pairs` sampled pairs in the box. Pair `i` depends only on `(seed, i)`,
/// so the estimate is non-decreasing in `n_pairs`.
pub fn estimate_seminorm<F>(f: F, psi: &Modulus, domain: &Domain, n_pairs: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be positive".into()));
    }
    let dim = domain.bounds.len();
    if dim == 0 || domain.bounds.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::InvalidParameter("degenerate box".into()));
    }
    let mut stream = CounterStream::new(seed, Purpose::Seminorm, 0);
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut best: f64 = 0.0;
    for _ in 0..n_pairs {
        for (k, (lo, hi)) in domain.bounds.iter().enumerate() {
            x[k] = lo + (hi - lo) * stream.uniform();
            y[k] = lo + (hi - lo) * stream.uniform();
        }
        let radius = stream.uniform();
        let d0 = crate::linalg::distance(&x, &y);
        if d0 > 1.0 {
            // shrink towards x; the box is convex so y stays inside
            for k in 0..dim {
                y[k] = x[k] + (y[k] - x[k]) * radius / d0;
            }
        }
        let r = crate::linalg::distance(&x, &y);
        if r == 0.0 {
            continue;
        }
        let denom = psi.eval(r)?;
        let fx = f(&x)?;
        let fy = f(&y)?;
        let num = crate::linalg::distance(&fx, &fy);
        if denom > 0.0 {
            best = best.max(num / denom);
        } else if num > 0.0 {
            best = f64::INFINITY;
        }
    }
    Ok(best)
}
