//! Closed-form generalization certificates.
//!
//! Every calculator returns a [`BoundCertificate`] whose `total` is the sum
//! of its non-null components. Logarithms are natural.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which result a certificate instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TheoremId {
    /// Strongly convex and smooth losses.
    #[serde(rename = "THM_2_3")]
    Thm2_3,
    /// Single trajectory of length `T`.
    #[serde(rename = "COR_2_4")]
    Cor2_4,
    /// Early stopping at `t`.
    #[serde(rename = "COR_2_5")]
    Cor2_5,
    /// Hausdorff-dimension form.
    #[serde(rename = "EQ_8_FRACTAL")]
    Eq8Fractal,
    /// Piecewise quadratic approximation.
    #[serde(rename = "THM_3_2")]
    Thm3_2,
    /// Regularized multi-index models.
    #[serde(rename = "THM_4_1")]
    Thm4_1,
    /// Soft K-means.
    #[serde(rename = "THM_4_3")]
    Thm4_3,
    /// Hard K-means.
    #[serde(rename = "THM_4_4")]
    Thm4_4,
    /// Piecewise contractive iterative algorithms.
    #[serde(rename = "THM_5_3")]
    Thm5_3,
    /// The master covering bound.
    #[serde(rename = "THM_B_1")]
    ThmB1,
    #[serde(rename = "THM_D_1")]
    ThmD1,
    #[serde(rename = "THM_D_2")]
    ThmD2,
    #[serde(rename = "COR_D_3")]
    CorD3,
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

impl std::str::FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_uppercase())).map_err(|_| Error::Unknown {
            kind: "theorem",
            name: s.to_string(),
        })
    }
}

/// Inputs a certificate was computed from; derived quantities (`T`, `P`,
/// `gamma`, ...) are recorded too.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BoundInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub B: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub L: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub R: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub R_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub T: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub P: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub Q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub K: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// `log |Phi|`; the cardinality itself may not fit a float.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_cover_cardinality: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub C: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_H: Option<f64>,
    /// `ceil(d_H + log(2LR) / log(1/gamma))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fractal_exponent: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundComponents {
    /// `BT/n`: samples the cover entries depend on.
    pub sample_dependency_term: Option<f64>,
    /// The Hoeffding plus union-bound term.
    pub concentration_term: Option<f64>,
    /// `2 L eps` for the cover radius (`1/n` in the packaged theorems).
    pub covering_slack_term: Option<f64>,
    /// `2 L (gamma^T R + sum gamma^j * error)` of the surrogate covers.
    pub approximation_term: Option<f64>,
}

impl BoundComponents {
    pub fn sum(&self) -> f64 {
        [
            self.sample_dependency_term,
            self.concentration_term,
            self.covering_slack_term,
            self.approximation_term,
        ]
        .iter()
        .flatten()
        .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub theorem: TheoremId,
    pub inputs: BoundInputs,
    pub components: BoundComponents,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl BoundCertificate {
    fn new(theorem: TheoremId, inputs: BoundInputs, components: BoundComponents, flags: Vec<String>) -> Result<Self> {
        let total = components.sum();
        if !total.is_finite() {
            return Err(Error::NonFinite("certificate total"));
        }
        Ok(BoundCertificate {
            theorem,
            inputs,
            components,
            total,
            flags,
        })
    }

    /// Human-readable component table.
    pub fn table(&self) -> String {
        let mut s = format!("{}\n", self.theorem);
        let rows = [
            ("sample_dependency_term", self.components.sample_dependency_term),
            ("concentration_term", self.components.concentration_term),
            ("covering_slack_term", self.components.covering_slack_term),
            ("approximation_term", self.components.approximation_term),
        ];
        for (name, v) in rows {
            if let Some(v) = v {
                s += &format!("  {name:<24}{v:>14.6e}\n");
            }
        }
        s += &format!("  {:<24}{:>14.6e}\n", "total", self.total);
        for f in &self.flags {
            s += &format!("  note: {f}\n");
        }
        s
    }
}

fn check_n(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok(n as f64)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", "must lie in (0, 1]"));
    }
    Ok(())
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, "must be finite and nonnegative"));
    }
    Ok(())
}

fn check_pos(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(name, "must be finite and positive"));
    }
    Ok(())
}

fn check_gamma(gamma: f64, flags: &mut Vec<String>) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", "must lie in [0, 1)"));
    }
    if gamma == 0.0 {
        flags.push("gamma = 0: instant contraction, T = 0".into());
    }
    Ok(())
}

/// `max(ceil(log(x) / log(1/gamma)), 0)`, with ratios within `1e-9` of an
/// integer snapped to it; 0 when `gamma = 0`.
pub fn log_horizon(x: f64, gamma: f64) -> usize {
    if gamma == 0.0 || x <= 1.0 {
        return 0;
    }
    let r = x.ln() / (1.0 / gamma).ln();
    let c = if (r - r.round()).abs() <= 1e-9 { r.round() } else { r.ceil() };
    c.max(0.0) as usize
}

/// `ceil(x)`, with values within `1e-9` (relative) of an integer snapped.
fn snap_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `B sqrt((log_count + log(2/delta)) / (2n))`.
fn concentration(b: f64, log_count: f64, delta: f64, n: f64) -> f64 {
    b * ((log_count + (2.0 / delta).ln()) / (2.0 * n)).sqrt()
}

/// `sum_{j<T} gamma^j`, equal to `T` at `gamma = 1`.
fn geometric(gamma: f64, t: usize) -> f64 {
    if gamma == 1.0 {
        t as f64
    } else {
        (1.0 - gamma.powi(t as i32)) / (1.0 - gamma)
    }
}

fn base_inputs(n: usize, delta: f64, b: f64) -> BoundInputs {
    BoundInputs {
        n: Some(n),
        delta: Some(delta),
        B: Some(b),
        ..Default::default()
    }
}

/// `(BT+1)/n + B sqrt((T log n + log(2/delta)) / (2n))` with
/// `T = max(ceil(log(2LRn) / log(1/gamma)), 0)`.
pub fn bound_strongly_convex(n: usize, delta: f64, b: f64, l: f64, r: f64, gamma: f64) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_nonneg("B", b)?;
    check_nonneg("L", l)?;
    check_pos("R", r)?;
    let mut flags = Vec::new();
    check_gamma(gamma, &mut flags)?;
    let t = log_horizon(2.0 * l * r * nf, gamma);
    let inputs = BoundInputs {
        L: Some(l),
        R: Some(r),
        gamma: Some(gamma),
        T: Some(t),
        ..base_inputs(n, delta, b)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * t as f64 / nf),
        concentration_term: Some(concentration(b, t as f64 * nf.ln(), delta, nf)),
        covering_slack_term: Some(1.0 / nf),
        approximation_term: None,
    };
    BoundCertificate::new(TheoremId::Thm2_3, inputs, components, flags)
}

/// `(BT+1)/n + B sqrt(log(2/delta) / (2n))` for one trajectory and a given `T`.
pub fn bound_single_trajectory(n: usize, delta: f64, b: f64, t: usize) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_nonneg("B", b)?;
    let inputs = BoundInputs {
        T: Some(t),
        ..base_inputs(n, delta, b)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * t as f64 / nf),
        concentration_term: Some(concentration(b, 0.0, delta, nf)),
        covering_slack_term: Some(1.0 / nf),
        approximation_term: None,
    };
    BoundCertificate::new(TheoremId::Cor2_4, inputs, components, vec![])
}

/// `Bt/n + B sqrt(log(2/delta) / (2n))` at iteration `t`.
pub fn bound_early(n: usize, delta: f64, b: f64, t: usize) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_nonneg("B", b)?;
    let inputs = BoundInputs {
        t: Some(t),
        ..base_inputs(n, delta, b)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * t as f64 / nf),
        concentration_term: Some(concentration(b, 0.0, delta, nf)),
        covering_slack_term: None,
        approximation_term: None,
    };
    BoundCertificate::new(TheoremId::Cor2_5, inputs, components, vec![])
}

/// The strongly convex bound with `ceil(d_H + log(2LR)/log(1/gamma)) log n`
/// inside the root.
pub fn bound_fractal(n: usize, delta: f64, b: f64, l: f64, r: f64, gamma: f64, d_h: f64) -> Result<BoundCertificate> {
    check_nonneg("d_H", d_h)?;
    let mut cert = bound_strongly_convex(n, delta, b, l, r, gamma)?;
    let nf = n as f64;
    let (exponent, mut flags) = if gamma == 0.0 {
        (0, cert.flags.clone())
    } else {
        let e = d_h + (2.0 * l * r).ln() / (1.0 / gamma).ln();
        let c = if (e - e.round()).abs() <= 1e-9 { e.round() } else { e.ceil() };
        (c.max(0.0) as usize, cert.flags.clone())
    };
    if l * r == 0.0 {
        flags.push("L R = 0: the log term is taken as 0".into());
    }
    let exponent = if l * r == 0.0 { d_h.ceil() as usize } else { exponent };
    cert.theorem = TheoremId::Eq8Fractal;
    cert.inputs.d_H = Some(d_h);
    cert.inputs.fractal_exponent = Some(exponent);
    cert.components.concentration_term = Some(concentration(b, exponent as f64 * nf.ln(), delta, nf));
    BoundCertificate::new(TheoremId::Eq8Fractal, cert.inputs, cert.components, flags)
}

#[allow(clippy::too_many_arguments)]
fn piecewise_shape(
    n: usize,
    delta: f64,
    b: f64,
    l: f64,
    r: f64,
    gamma: f64,
    t: Option<usize>,
    p: f64,
    step_error: f64,
) -> Result<(BoundInputs, BoundComponents, Vec<String>)> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_nonneg("B", b)?;
    check_nonneg("L", l)?;
    check_pos("R", r)?;
    check_nonneg("xi", step_error)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid("P", "must be at least 1"));
    }
    let mut flags = Vec::new();
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", "must lie in [0, 1]"));
    }
    if gamma == 1.0 {
        flags.push("gamma = 1: geometric sum replaced by its limit T".into());
    }
    let t = match t {
        Some(t) => t,
        None => {
            if gamma == 1.0 {
                return Err(Error::invalid("T", "must be supplied when gamma = 1"));
            }
            if gamma == 0.0 {
                flags.push("gamma = 0: instant contraction, T = 0".into());
            }
            log_horizon(3.0 * l * r * nf, gamma)
        }
    };
    let slack = 2.0 * l * (gamma.powi(t as i32) * r + geometric(gamma, t) * step_error);
    let inputs = BoundInputs {
        L: Some(l),
        R: Some(r),
        gamma: Some(gamma),
        T: Some(t),
        P: Some(p),
        ..base_inputs(n, delta, b)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * t as f64 / nf),
        concentration_term: Some(concentration(b, t as f64 * (nf.ln() + p.ln()), delta, nf)),
        covering_slack_term: None,
        approximation_term: Some(slack),
    };
    Ok((inputs, components, flags))
}

/// `BT/n + B sqrt((T log(nP) + log(2/delta)) / (2n)) + 2L(gamma^T R + sum_{j<T} gamma^j eta xi)`.
/// `T` defaults to `max(ceil(log(3LRn) / log(1/gamma)), 0)`.
#[allow(clippy::too_many_arguments)]
pub fn bound_piecewise_approx(
    n: usize,
    delta: f64,
    b: f64,
    l: f64,
    r: f64,
    gamma: f64,
    t: Option<usize>,
    p: f64,
    xi: f64,
    eta: f64,
) -> Result<BoundCertificate> {
    check_nonneg("eta", eta)?;
    check_nonneg("xi", xi)?;
    let (mut inputs, comps, flags) = piecewise_shape(n, delta, b, l, r, gamma, t, p, eta * xi)?;
    inputs.xi = Some(xi);
    inputs.eta = Some(eta);
    BoundCertificate::new(TheoremId::Thm3_2, inputs, comps, flags)
}

/// As [`bound_piecewise_approx`] with map error `xi` in place of `eta xi`.
#[allow(clippy::too_many_arguments)]
pub fn bound_piecewise_contractive(
    n: usize,
    delta: f64,
    b: f64,
    l: f64,
    r: f64,
    gamma: f64,
    t: Option<usize>,
    p: f64,
    xi: f64,
) -> Result<BoundCertificate> {
    let (mut inputs, comps, flags) = piecewise_shape(n, delta, b, l, r, gamma, t, p, xi)?;
    inputs.xi = Some(xi);
    BoundCertificate::new(TheoremId::Thm5_3, inputs, comps, flags)
}

/// `(kappa, P)` of the multi-index construction:
/// `kappa = 1/(12 beta eta K L R_x T n)`, `P = ceil(2 R R_x / kappa)`.
#[allow(clippy::too_many_arguments)]
pub fn multi_index_pieces(beta: f64, eta: f64, k: usize, l: f64, r: f64, r_x: f64, t: usize, n: usize) -> (f64, f64) {
    let kappa = 1.0 / (12.0 * beta * eta * k as f64 * l * r_x * t as f64 * n as f64);
    (kappa, snap_ceil(2.0 * r * r_x / kappa))
}

/// Regularized multi-index models, `gamma = |1 - eta lambda|`.
#[allow(clippy::too_many_arguments)]
pub fn bound_multi_index(
    n: usize,
    delta: f64,
    b: f64,
    l: f64,
    r: f64,
    r_x: f64,
    k: usize,
    q: usize,
    beta: f64,
    eta: f64,
    lambda: f64,
) -> Result<BoundCertificate> {
    bound_multi_index_with_horizon(n, delta, b, l, r, r_x, k, q, beta, eta, lambda, None)
}

/// [`bound_multi_index`] with an optional fixed `T`.
#[allow(clippy::too_many_arguments)]
pub fn bound_multi_index_with_horizon(
    n: usize,
    delta: f64,
    b: f64,
    l: f64,
    r: f64,
    r_x: f64,
    k: usize,
    q: usize,
    beta: f64,
    eta: f64,
    lambda: f64,
    horizon: Option<usize>,
) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_nonneg("B", b)?;
    check_pos("L", l)?;
    check_pos("R", r)?;
    check_pos("R_x", r_x)?;
    check_pos("beta", beta)?;
    check_pos("lambda", lambda)?;
    if k == 0 || q == 0 {
        return Err(Error::invalid("K/Q", "must be positive"));
    }
    if !(eta > 0.0 && eta < 2.0 / lambda) {
        return Err(Error::invalid("eta", "must lie in (0, 2/lambda)"));
    }
    let mut flags = Vec::new();
    let gamma = (1.0 - eta * lambda).abs();
    check_gamma(gamma, &mut flags)?;
    let t = horizon.unwrap_or_else(|| log_horizon(3.0 * l * r * nf, gamma));
    let (kappa, p) = if t == 0 {
        flags.push("T = 0: no pieces are needed, P = 1".into());
        (f64::INFINITY, 1.0)
    } else {
        multi_index_pieces(beta, eta, k, l, r, r_x, t, n)
    };
    let log_count = t as f64 * (nf.ln() + k as f64 * p.ln() + (q as f64).ln());
    let inputs = BoundInputs {
        L: Some(l),
        R: Some(r),
        R_x: Some(r_x),
        gamma: Some(gamma),
        T: Some(t),
        P: Some(p),
        Q: Some(q),
        K: Some(k),
        eta: Some(eta),
        beta: Some(beta),
        lambda: Some(lambda),
        kappa: kappa.is_finite().then_some(kappa),
        ..base_inputs(n, delta, b)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * t as f64 / nf),
        concentration_term: Some(concentration(b, log_count, delta, nf)),
        covering_slack_term: Some(1.0 / nf),
        approximation_term: None,
    };
    BoundCertificate::new(TheoremId::Thm4_1, inputs, components, flags)
}

/// Constants of the soft K-means objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SoftKMeansConstants {
    pub B: f64,
    pub L: f64,
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
    /// Largest admissible step `K e^{-zeta B}`.
    pub eta_max: f64,
}

pub fn soft_kmeans_constants(k: usize, r: f64, zeta: f64) -> Result<SoftKMeansConstants> {
    if k == 0 {
        return Err(Error::invalid("K", "must be positive"));
    }
    check_pos("R", r)?;
    check_pos("zeta", zeta)?;
    let kf = k as f64;
    let b = 4.0 * (r + 1.0).powi(2);
    let e = (zeta * b).exp();
    if !e.is_finite() {
        return Err(Error::NonFinite("exp(zeta B)"));
    }
    Ok(SoftKMeansConstants {
        B: b,
        L: 4.0 * r / kf.sqrt() * e,
        alpha: 2.0 / kf / e,
        beta: 2.0 / kf * e,
        beta_prime: 4.0 * zeta * b * e + 4.0 * zeta * b + 2.0,
        eta_max: kf / e,
    })
}

/// `gamma = sqrt(1 - 4 eta e^{-zeta B}/K + 4 eta^2/K^2)`.
pub fn soft_kmeans_gamma(k: usize, b: f64, zeta: f64, eta: f64) -> f64 {
    let kf = k as f64;
    (1.0 - 4.0 * eta * (-zeta * b).exp() / kf + 4.0 * eta * eta / (kf * kf)).max(0.0).sqrt()
}

pub fn bound_soft_kmeans(n: usize, delta: f64, k: usize, r: f64, zeta: f64, eta: f64) -> Result<BoundCertificate> {
    bound_soft_kmeans_with_horizon(n, delta, k, r, zeta, eta, None)
}

/// [`bound_soft_kmeans`] with an optional fixed `T`.
pub fn bound_soft_kmeans_with_horizon(
    n: usize,
    delta: f64,
    k: usize,
    r: f64,
    zeta: f64,
    eta: f64,
    horizon: Option<usize>,
) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    let c = soft_kmeans_constants(k, r, zeta)?;
    if !(eta > 0.0 && eta < c.eta_max) {
        return Err(Error::invalid("eta", format!("must lie in (0, {})", c.eta_max)));
    }
    let mut flags = Vec::new();
    let gamma = soft_kmeans_gamma(k, c.B, zeta, eta);
    check_gamma(gamma, &mut flags)?;
    let t = horizon.unwrap_or_else(|| log_horizon(3.0 * c.L * r * nf, gamma));
    let kf = k as f64;
    let (kappa, p) = if t == 0 {
        flags.push("T = 0: no pieces are needed, P = 1".into());
        (f64::INFINITY, 1.0)
    } else {
        let kappa = 1.0 / (12.0 * (c.beta + c.beta_prime) * eta * kf.sqrt() * c.L * t as f64 * nf);
        (kappa, snap_ceil(2.0 * r / kappa))
    };
    let log_count = t as f64 * (nf.ln() + kf * p.ln());
    let inputs = BoundInputs {
        L: Some(c.L),
        R: Some(r),
        gamma: Some(gamma),
        T: Some(t),
        P: Some(p),
        K: Some(k),
        eta: Some(eta),
        beta: Some(c.beta),
        beta_prime: Some(c.beta_prime),
        zeta: Some(zeta),
        kappa: kappa.is_finite().then_some(kappa),
        ..base_inputs(n, delta, c.B)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(c.B * t as f64 / nf),
        concentration_term: Some(concentration(c.B, log_count, delta, nf)),
        covering_slack_term: Some(1.0 / nf),
        approximation_term: None,
    };
    BoundCertificate::new(TheoremId::Thm4_3, inputs, components, flags)
}

/// `(BKT+1)/n + B sqrt((KT log(2n) + log(2/delta)) / (2n))`, `B = 4R^2`,
/// `gamma = |1 - 2 eta|`, `T = max(ceil(log(16 sqrt(K) R^2 n) / log(1/gamma)), 0)`.
pub fn bound_hard_kmeans(n: usize, delta: f64, k: usize, r: f64, eta: f64) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_pos("R", r)?;
    if k == 0 {
        return Err(Error::invalid("K", "must be positive"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta", "must lie in (0, 1)"));
    }
    let mut flags = Vec::new();
    let gamma = (1.0 - 2.0 * eta).abs();
    check_gamma(gamma, &mut flags)?;
    let b = 4.0 * r * r;
    let kf = k as f64;
    let t = log_horizon(16.0 * kf.sqrt() * r * r * nf, gamma);
    let inputs = BoundInputs {
        R: Some(r),
        gamma: Some(gamma),
        T: Some(t),
        K: Some(k),
        eta: Some(eta),
        ..base_inputs(n, delta, b)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * kf * t as f64 / nf),
        concentration_term: Some(concentration(b, kf * t as f64 * (2.0 * nf).ln(), delta, nf)),
        covering_slack_term: Some(1.0 / nf),
        approximation_term: None,
    };
    BoundCertificate::new(TheoremId::Thm4_4, inputs, components, flags)
}

/// `BT/n + B sqrt(log(2|Phi|/delta) / (2n)) + 2 L eps`.
pub fn bound_master_covering(
    n: usize,
    delta: f64,
    b: f64,
    l: f64,
    t: usize,
    cover_cardinality: f64,
    epsilon: f64,
) -> Result<BoundCertificate> {
    if !(cover_cardinality >= 1.0) {
        return Err(Error::invalid("cover_cardinality", "must be at least 1"));
    }
    bound_master_covering_log(n, delta, b, l, t, cover_cardinality.ln(), epsilon)
}

/// [`bound_master_covering`] taking `log |Phi|`.
pub fn bound_master_covering_log(
    n: usize,
    delta: f64,
    b: f64,
    l: f64,
    t: usize,
    log_cardinality: f64,
    epsilon: f64,
) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_delta(delta)?;
    check_nonneg("B", b)?;
    check_nonneg("L", l)?;
    check_nonneg("epsilon", epsilon)?;
    check_nonneg("log_cover_cardinality", log_cardinality)?;
    let inputs = BoundInputs {
        L: Some(l),
        T: Some(t),
        epsilon: Some(epsilon),
        log_cover_cardinality: Some(log_cardinality),
        ..base_inputs(n, delta, b)
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * t as f64 / nf),
        concentration_term: Some(concentration(b, log_cardinality, delta, nf)),
        covering_slack_term: Some(2.0 * l * epsilon),
        approximation_term: None,
    };
    BoundCertificate::new(TheoremId::ThmB1, inputs, components, vec![])
}

/// Bounds on the expected gap: `(BT+1)/n`, plus `C B sqrt(T log n / n)`
/// (`THM_D_2`) or `C B sqrt(1/n)` (`COR_D_3`). `C` is an unspecified
/// absolute constant; 1 is the conventional default.
pub fn bound_expectation(n: usize, b: f64, t: usize, variant: TheoremId, c: f64) -> Result<BoundCertificate> {
    let nf = check_n(n)?;
    check_nonneg("B", b)?;
    check_pos("C", c)?;
    let extra = match variant {
        TheoremId::ThmD1 => None,
        TheoremId::ThmD2 => Some(c * b * (t as f64 * nf.ln() / nf).sqrt()),
        TheoremId::CorD3 => Some(c * b * (1.0 / nf).sqrt()),
        other => {
            return Err(Error::Unknown {
                kind: "expectation variant",
                name: other.to_string(),
            })
        }
    };
    let inputs = BoundInputs {
        n: Some(n),
        B: Some(b),
        T: Some(t),
        C: extra.map(|_| c),
        ..Default::default()
    };
    let components = BoundComponents {
        sample_dependency_term: Some(b * t as f64 / nf),
        concentration_term: extra,
        covering_slack_term: Some(1.0 / nf),
        approximation_term: None,
    };
    let flags = if extra.is_some() {
        vec![format!("absolute constant C = {c} is not determined by the analysis")]
    } else {
        vec![]
    };
    BoundCertificate::new(variant, inputs, components, flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn strongly_convex_examples() {
        let c = bound_strongly_convex(100, 0.05, 0.0, 1.0, 1.0, 0.5).unwrap();
        assert!(close(c.total, 0.01, 1e-15));
        let c = bound_strongly_convex(100, 0.05, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(c.inputs.T, Some(8));
        // 0.09 + sqrt((8 ln 100 + ln 40) / 200), high-precision reference
        assert!(close(c.total, 0.540_167_973_883, 1e-9), "{}", c.total);
        let c = bound_strongly_convex(100_000_000, 0.05, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(c.total < 1e-2);
        assert!(bound_strongly_convex(100, 0.05, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(bound_strongly_convex(100, 1.5, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(bound_strongly_convex(100, 0.0, 1.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn single_trajectory_and_early() {
        let c = bound_single_trajectory(1000, 0.05, 1.0, 8).unwrap();
        assert!(close(c.total, 0.051_946_940_8, 1e-9));
        assert!(bound_single_trajectory(1000, 2.0, 1.0, 8).is_err());
        let c = bound_early(100, 0.05, 1.0, 0).unwrap();
        assert!(close(c.total, 0.135_810_151_6, 1e-9));
        let a = bound_early(100, 0.05, 1.0, 7).unwrap();
        let b2 = bound_early(100, 0.05, 1.0, 14).unwrap();
        assert!(close(b2.total - a.total, 7.0 / 100.0, 1e-15));
        let c = bound_early(100, 0.05, 1.0, 100).unwrap();
        assert_eq!(c.components.sample_dependency_term, Some(1.0));
        // same (B, n, delta): the two differ exactly by the 1/n slack
        let s = bound_single_trajectory(100, 0.05, 1.0, 5).unwrap();
        let e = bound_early(100, 0.05, 1.0, 5).unwrap();
        assert!(close(s.total - e.total, 0.01, 1e-15));
    }

    #[test]
    fn fractal_examples() {
        let c = bound_fractal(100, 0.05, 1.0, 1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(c.inputs.fractal_exponent, Some(2));
        let c = bound_fractal(100, 0.05, 1.0, 1.0, 1.0, 0.5, 0.63).unwrap();
        assert_eq!(c.inputs.fractal_exponent, Some(2));
        let c = bound_fractal(100, 0.05, 1.0, 0.5, 1.0, 0.5, 0.0).unwrap();
        assert_eq!(c.inputs.fractal_exponent, Some(0));
        let h = bound_early(100, 0.05, 1.0, 0).unwrap();
        assert!(close(c.components.concentration_term.unwrap(), h.total, 1e-15));
        // d_H = log n / log(1/gamma) recovers the strongly convex exponent
        let n = 64;
        let d = (n as f64).ln() / 2f64.ln();
        let f = bound_fractal(n, 0.05, 1.0, 1.0, 1.0, 0.5, d).unwrap();
        let s = bound_strongly_convex(n, 0.05, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(close(f.total, s.total, 1e-12));
    }

    #[test]
    fn piecewise_examples() {
        let c = bound_piecewise_approx(100, 0.05, 1.0, 1.0, 1.0, 0.5, Some(8), 1.0, 0.0, 0.1).unwrap();
        assert!(close(c.components.approximation_term.unwrap(), 2.0 / 256.0, 1e-15));
        for g in [0.01, 0.2, 0.5, 0.9, 0.999] {
            for t in [1, 5, 50] {
                assert!(geometric(g, t) <= t as f64 + 1e-12);
            }
        }
        let s = bound_piecewise_contractive(1, 0.05, 1.0, 1.0, 1.0, 0.9, Some(50), 1.0, 0.001).unwrap();
        assert!(close(s.components.approximation_term.unwrap(), 0.030_204_474_9, 1e-9));
        let g1 = bound_piecewise_contractive(100, 0.05, 1.0, 1.0, 1.0, 1.0, Some(4), 2.0, 0.1).unwrap();
        assert!(close(g1.components.approximation_term.unwrap(), 2.0 * (1.0 + 0.4), 1e-12));
        assert!(!g1.flags.is_empty());
        assert!(bound_piecewise_contractive(100, 0.05, 1.0, 1.0, 1.0, 1.0, None, 2.0, 0.1).is_err());
        let d = bound_piecewise_approx(100, 0.05, 1.0, 1.0, 1.0, 0.5, None, 1.0, 0.0, 0.1).unwrap();
        assert_eq!(d.inputs.T, Some(9));
    }

    #[test]
    fn multi_index_examples() {
        let (kappa, p) = multi_index_pieces(1.0, 0.1, 2, 1.0, 1.0, 1.0, 5, 10);
        assert!(close(kappa, 1.0 / 120.0, 1e-15));
        assert_eq!(p, 240.0);
        let (_, p2) = multi_index_pieces(1.0, 0.1, 2, 1.0, 1.0, 2.0, 5, 10);
        assert_eq!(p2, 960.0);

        let c = bound_multi_index_with_horizon(10, 0.05, 1.0, 1.0, 1.0, 1.0, 2, 1, 1.0, 0.1, 1.0, Some(5)).unwrap();
        assert_eq!(c.inputs.P, Some(240.0));
        let expect = 0.6 + (5.0 * (10f64.ln() + 2.0 * 240f64.ln()) + 40f64.ln()).sqrt() / 20f64.sqrt();
        assert!(close(c.total, expect, 1e-12));

        let c = bound_multi_index(100, 0.05, 1.0, 1.0, 1.0, 1.0, 1, 1, 1.0, 0.5, 1.0).unwrap();
        let p = c.inputs.P.unwrap();
        let t = c.inputs.T.unwrap() as f64;
        let conc = (t * (100.0 * p).ln() + 40f64.ln()).sqrt() / 200f64.sqrt();
        assert!(close(c.components.concentration_term.unwrap(), conc, 1e-12));

        let c = bound_multi_index(100, 0.05, 1.0, 1.0, 1.0, 1.0, 1, 1, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.inputs.T, Some(0));
        assert!(!c.flags.is_empty());
        assert!(bound_multi_index(100, 0.05, 1.0, 1.0, 1.0, 1.0, 1, 1, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn soft_kmeans_examples() {
        let c = soft_kmeans_constants(4, 1.0, 0.01).unwrap();
        assert_eq!(c.B, 16.0);
        assert!(close(c.L, 2.347_021_742_0, 1e-9));
        for frac in [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let g = soft_kmeans_gamma(4, c.B, 0.01, frac * c.eta_max);
            assert!(g < 1.0 && g >= 0.0);
        }
        let cert = bound_soft_kmeans(1000, 0.05, 4, 1.0, 0.01, 0.5).unwrap();
        assert!(cert.total.is_finite() && cert.total > 0.0);
        assert!(bound_soft_kmeans(1000, 0.05, 4, 1.0, 0.01, c.eta_max).is_err());
        assert!(bound_soft_kmeans(1000, 0.05, 4, 1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn soft_kmeans_scales_like_sqrt_k() {
        // matched constants: same eta / K so gamma and L sqrt(K) agree
        let n = 1_000_000;
        let (r, zeta) = (1.0, 0.01);
        let base = 0.25;
        let k = 4;
        let a = bound_soft_kmeans(n, 0.05, k, r, zeta, base * k as f64).unwrap();
        let b = bound_soft_kmeans(n, 0.05, 4 * k, r, zeta, base * 4.0 * k as f64).unwrap();
        let ratio = b.components.concentration_term.unwrap() / a.components.concentration_term.unwrap();
        assert!(ratio < 2.1, "{ratio}");
    }

    #[test]
    fn hard_kmeans_examples() {
        let c = bound_hard_kmeans(1000, 0.05, 2, 1.0, 0.25).unwrap();
        assert_eq!(c.inputs.gamma, Some(0.5));
        assert_eq!(c.inputs.T, Some(15));
        assert_eq!(c.inputs.B, Some(4.0));
        let c = bound_hard_kmeans(1000, 0.05, 2, 1.0, 0.5).unwrap();
        assert_eq!(c.inputs.T, Some(0));
        assert!(close(c.total, 0.001 + 4.0 * (40f64.ln() / 2000.0).sqrt(), 1e-12));
        assert!(bound_hard_kmeans(1000, 0.05, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn master_examples() {
        let m = bound_master_covering(100, 0.05, 1.0, 1.0, 0, 1.0, 0.0).unwrap();
        let h = bound_early(100, 0.05, 1.0, 0).unwrap();
        assert!(close(m.total, h.total, 1e-15));
        let a = bound_master_covering(100, 0.05, 1.0, 2.0, 3, 10.0, 0.1).unwrap();
        let b = bound_master_covering(100, 0.05, 1.0, 2.0, 3, 10.0, 0.2).unwrap();
        assert!(close(b.total - a.total, 2.0 * 2.0 * 0.1, 1e-15));
        assert!(bound_master_covering(100, 0.05, 1.0, 1.0, 0, 0.5, 0.0).is_err());
    }

    #[test]
    fn expectation_examples() {
        let d1 = bound_expectation(100, 1.0, 8, TheoremId::ThmD1, 1.0).unwrap();
        assert!(close(d1.total, 0.09, 1e-15));
        let d2 = bound_expectation(100, 1.0, 8, TheoremId::ThmD2, 1.0).unwrap();
        let d3 = bound_expectation(100, 1.0, 8, TheoremId::CorD3, 1.0).unwrap();
        assert!(d2.total >= d1.total && d3.total <= d2.total);
        assert!(bound_expectation(100, 1.0, 8, TheoremId::Thm2_3, 1.0).is_err());
    }

    #[test]
    fn theorem_ids_round_trip() {
        assert_eq!(serde_json::to_string(&TheoremId::Eq8Fractal).unwrap(), "\"EQ_8_FRACTAL\"");
        assert_eq!("thm_2_3".parse::<TheoremId>().unwrap(), TheoremId::Thm2_3);
        assert!("THM_9".parse::<TheoremId>().is_err());
        let c = bound_strongly_convex(100, 0.05, 1.0, 1.0, 1.0, 0.5).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["theorem"], "THM_2_3");
        assert!(v["components"]["approximation_term"].is_null());
        assert!(c.table().contains("total"));
    }
}
