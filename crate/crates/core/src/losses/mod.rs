//! Per-sample loss families `f(theta; z)` with their (auxiliary) gradients
//! and the constants the generalization certificates consume.
//!
//! Every family carries the feasible set it is meant to be optimized over
//! and whether SGD projects onto it. The K-means families run unprojected;
//! the trajectory engine checks that their iterates stay inside the ball.
//!
//! Parameters of multi-block families (`K` centers or indices of dimension
//! `d`) are flat vectors of length `K * d`, block `j` occupying
//! `j*d..(j+1)*d`.

mod kmeans;
mod multi_index;
mod simple;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::domain::{ConvexDomain, ParamPoint};
use crate::error::{Error, Result};

pub use kmeans::{HardKMeans, SoftKMeans, TieRule};
pub use multi_index::{Link, LinkSpec, MultiIndex};
pub use simple::{QuadraticCenters, SmoothFunction, StabilityCounterexample};

/// Constants of a family; unset fields do not apply to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct LossConstants {
    /// Strong convexity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Smoothness.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Bound on the Hessian norm of each smooth piece.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_prime: Option<f64>,
    /// Weak-Lipschitz constant: `|f(a;z)-h(a)-(f(b;z)-h(b))| <= L |a-b|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub L: Option<f64>,
    /// Bounded deviation: `sup_z f(theta;z) - inf_z f(theta;z) <= B`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub B: Option<f64>,
    /// Plain Lipschitz constant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub L_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub R: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub R_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub K: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub Q: Option<usize>,
}

impl LossConstants {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("alpha", self.alpha, false),
            ("beta", self.beta, true),
            ("beta_prime", self.beta_prime, false),
            ("L", self.L, false),
            ("B", self.B, false),
            ("L_prime", self.L_prime, false),
            ("R", self.R, true),
            ("R_x", self.R_x, true),
            ("lambda", self.lambda, false),
            ("zeta", self.zeta, true),
        ];
        for (name, v, strict) in reals {
            if let Some(v) = v {
                let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
                if !ok {
                    return Err(Error::invalid(name, format!("out of range: {v}")));
                }
            }
        }
        if let (Some(a), Some(b)) = (self.alpha, self.beta) {
            if a > b {
                return Err(Error::invalid("alpha", "must not exceed beta"));
            }
        }
        if self.K == Some(0) || self.Q == Some(0) {
            return Err(Error::invalid("K/Q", "must be positive"));
        }
        Ok(())
    }

    pub fn require(&self, name: &'static str) -> Result<f64> {
        let v = match name {
            "alpha" => self.alpha,
            "beta" => self.beta,
            "beta_prime" => self.beta_prime,
            "L" => self.L,
            "B" => self.B,
            "L_prime" => self.L_prime,
            "R" => self.R,
            "R_x" => self.R_x,
            "lambda" => self.lambda,
            "zeta" => self.zeta,
            _ => None,
        };
        v.ok_or_else(|| Error::invalid(name, "constant not declared by this family"))
    }
}

/// Evaluators behind a [`LossFamily`]. Coordinates are raw slices whose
/// length the family has already checked.
pub trait LossModel: Send + Sync + fmt::Debug {
    fn value(&self, theta: &[f64], z: &Sample) -> Result<f64>;

    /// Gradient, or the family's auxiliary gradient where `f` is not
    /// differentiable.
    fn gradient(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>>;

    /// Number `Q` of smooth pieces of `f(.; z)`.
    fn piece_count(&self) -> usize {
        1
    }

    /// Index of the smooth piece active at `theta`.
    fn piece_of(&self, _theta: &[f64], _z: &Sample) -> Result<usize> {
        Ok(0)
    }

    /// Value of the smooth extension of piece `q`.
    fn piece_value(&self, _q: usize, theta: &[f64], z: &Sample) -> Result<f64> {
        self.value(theta, z)
    }

    /// Gradient of the smooth extension of piece `q`.
    fn piece_gradient(&self, _q: usize, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        self.gradient(theta, z)
    }

    /// Checks that `z` belongs to the sample space.
    fn check_sample(&self, _z: &Sample) -> Result<()> {
        Ok(())
    }
}

/// A loss family: evaluators, constants, and the feasible set.
#[derive(Clone)]
pub struct LossFamily {
    name: String,
    constants: LossConstants,
    domain: ConvexDomain,
    projected: bool,
    model: Arc<dyn LossModel>,
    descriptor: Option<FamilySpec>,
}

impl fmt::Debug for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossFamily")
            .field("name", &self.name)
            .field("constants", &self.constants)
            .field("domain", &self.domain)
            .field("projected", &self.projected)
            .finish_non_exhaustive()
    }
}

impl LossFamily {
    pub fn new(
        name: impl Into<String>,
        constants: LossConstants,
        domain: ConvexDomain,
        projected: bool,
        model: Arc<dyn LossModel>,
    ) -> Result<Self> {
        constants.validate()?;
        domain.validate()?;
        Ok(LossFamily {
            name: name.into(),
            constants,
            domain,
            projected,
            model,
            descriptor: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn constants(&self) -> &LossConstants {
        &self.constants
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    /// Whether SGD on this family projects onto [`LossFamily::domain`].
    pub fn projected(&self) -> bool {
        self.projected
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn model(&self) -> &Arc<dyn LossModel> {
        &self.model
    }

    pub fn descriptor(&self) -> Option<&FamilySpec> {
        self.descriptor.as_ref()
    }

    pub fn value(&self, theta: &ParamPoint, z: &Sample) -> Result<f64> {
        theta.check_dim(self.dim())?;
        self.value_raw(theta.coords(), z)
    }

    pub fn gradient(&self, theta: &ParamPoint, z: &Sample) -> Result<ParamPoint> {
        theta.check_dim(self.dim())?;
        let g = self.gradient_raw(theta.coords(), z)?;
        ParamPoint::new(g).map_err(|_| Error::NonFinite("gradient"))
    }

    pub(crate) fn value_raw(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        let v = self.model.value(theta, z)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("loss value"));
        }
        Ok(v)
    }

    pub(crate) fn gradient_raw(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let g = self.model.gradient(theta, z)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        Ok(g)
    }

    /// Empirical risk `(1/n) sum_i f(theta; z_i)`.
    pub fn empirical_risk(&self, theta: &ParamPoint, samples: &[Sample]) -> Result<f64> {
        theta.check_dim(self.dim())?;
        let mut s = 0.0;
        for z in samples {
            s += self.value_raw(theta.coords(), z)?;
        }
        Ok(s / samples.len() as f64)
    }

    pub fn check_sample(&self, z: &Sample) -> Result<()> {
        self.model.check_sample(z)
    }

    /// Builds a family from its JSON descriptor `{"name": ..., params...}`.
    pub fn from_descriptor(value: &serde_json::Value) -> Result<Self> {
        let spec: FamilySpec = serde_json::from_value(value.clone())
            .map_err(|e| Error::invalid("family", e.to_string()))?;
        spec.build()
    }

    fn with_descriptor(mut self, spec: FamilySpec) -> Self {
        self.descriptor = Some(spec);
        self
    }
}

/// `f(theta; z) = 1/2 |theta - z|^2` on the centered ball of radius `r`,
/// with `z` ranging over `centers`.
pub fn quadratic_centers(centers: &[ParamPoint], radius: f64) -> Result<LossFamily> {
    let dim = centers
        .first()
        .map(|c| c.dim())
        .ok_or_else(|| Error::invalid("centers", "need at least one center"))?;
    let fam = simple::quadratic_centers_family(dim, radius, centers)?;
    Ok(fam.with_descriptor(FamilySpec::QuadraticCenters {
        R: radius,
        d: Some(dim),
        centers: centers.to_vec(),
    }))
}

/// Regularized multi-index model `l(theta_1.x, ..., theta_K.x; y) +
/// lambda/2 sum_j |theta_j|^2` over `K` blocks of dimension `d`.
pub fn multi_index(
    link: Arc<dyn Link>,
    lambda: f64,
    radius: f64,
    input_radius: f64,
    blocks: usize,
    block_dim: usize,
) -> Result<LossFamily> {
    let spec = link.descriptor();
    let fam = multi_index::family(link, lambda, radius, input_radius, blocks, block_dim)?;
    Ok(match spec {
        Some(link) => fam.with_descriptor(FamilySpec::MultiIndex {
            link,
            lambda,
            R: radius,
            R_x: input_radius,
            K: blocks,
            d: block_dim,
        }),
        None => fam,
    })
}

/// Soft K-means objective `-(1/zeta) log sum_j exp(-zeta |theta_j - z|^2)`.
pub fn soft_kmeans(k: usize, zeta: f64, radius: f64, dim: usize) -> Result<LossFamily> {
    Ok(kmeans::soft_family(k, zeta, radius, dim)?.with_descriptor(FamilySpec::SoftKMeans {
        K: k,
        zeta,
        R: radius,
        d: dim,
    }))
}

/// Hard K-means objective `min_j |theta_j - z|^2` with a tie rule for the
/// auxiliary gradient.
pub fn hard_kmeans(k: usize, radius: f64, dim: usize, tie_rule: &str) -> Result<LossFamily> {
    let rule: TieRule = tie_rule.parse()?;
    Ok(kmeans::hard_family(k, radius, dim, rule)?.with_descriptor(FamilySpec::HardKMeans {
        K: k,
        R: radius,
        d: dim,
        tie_rule: tie_rule.to_string(),
    }))
}

/// One-dimensional piecewise example on `[0, 4]` with `z in {0, 1}` on which
/// uniform stability stays bounded away from zero.
pub fn stability_counterexample_1d() -> LossFamily {
    simple::stability_family().with_descriptor(FamilySpec::StabilityCounterexample {})
}

/// `f(theta) = sin(theta_1) + cos(theta_2)` on the centered disc of radius
/// `radius`, independent of the sample.
pub fn sin_cos(radius: f64) -> Result<LossFamily> {
    Ok(simple::sin_cos_family(radius)?.with_descriptor(FamilySpec::SinCos { R: radius }))
}

fn default_tie_rule() -> String {
    "lowest_index".to_string()
}

/// JSON descriptor of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
#[allow(non_snake_case)]
pub enum FamilySpec {
    QuadraticCenters {
        R: f64,
        #[serde(default)]
        d: Option<usize>,
        #[serde(default)]
        centers: Vec<ParamPoint>,
    },
    MultiIndex {
        link: LinkSpec,
        lambda: f64,
        R: f64,
        R_x: f64,
        K: usize,
        d: usize,
    },
    #[serde(rename = "soft_kmeans")]
    SoftKMeans {
        K: usize,
        zeta: f64,
        R: f64,
        d: usize,
    },
    #[serde(rename = "hard_kmeans")]
    HardKMeans {
        K: usize,
        R: f64,
        d: usize,
        #[serde(default = "default_tie_rule")]
        tie_rule: String,
    },
    StabilityCounterexample {},
    SinCos {
        R: f64,
    },
}

impl FamilySpec {
    pub fn build(&self) -> Result<LossFamily> {
        match self {
            FamilySpec::QuadraticCenters { R, d, centers } => {
                if centers.is_empty() {
                    let dim = d.ok_or_else(|| {
                        Error::invalid("d", "needed when no centers are listed")
                    })?;
                    Ok(simple::quadratic_centers_family(dim, *R, &[])?.with_descriptor(self.clone()))
                } else {
                    if let Some(dim) = d {
                        centers[0].check_dim(*dim)?;
                    }
                    quadratic_centers(centers, *R)
                }
            }
            FamilySpec::MultiIndex {
                link,
                lambda,
                R,
                R_x,
                K,
                d,
            } => multi_index(link.build(*K)?, *lambda, *R, *R_x, *K, *d),
            FamilySpec::SoftKMeans { K, zeta, R, d } => soft_kmeans(*K, *zeta, *R, *d),
            FamilySpec::HardKMeans { K, R, d, tie_rule } => hard_kmeans(*K, *R, *d, tie_rule),
            FamilySpec::StabilityCounterexample {} => Ok(stability_counterexample_1d()),
            FamilySpec::SinCos { R } => sin_cos(*R),
        }
    }
}
