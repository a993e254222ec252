//! Parameter vectors, convex feasible sets and Euclidean projection.
//!
//! All logarithms elsewhere in the crate are natural logarithms; all
//! arithmetic is `f64`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the parameter space. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamPoint(Vec<f64>);

impl TryFrom<Vec<f64>> for ParamPoint {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        ParamPoint::new(coords)
    }
}

impl From<ParamPoint> for Vec<f64> {
    fn from(p: ParamPoint) -> Self {
        p.0
    }
}

impl ParamPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(ParamPoint(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamPoint(vec![0.0; dim])
    }

    /// Wraps coordinates produced by arithmetic on finite inputs. Callers
    /// that cannot rule out overflow should use [`ParamPoint::new`].
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        ParamPoint(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Block `j` of a point laid out as `blocks` consecutive chunks.
    pub fn block(&self, j: usize, block_dim: usize) -> &[f64] {
        &self.0[j * block_dim..(j + 1) * block_dim]
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ROUNDING_SLACK: f64 = 1.0 + 4.0 * f64::EPSILON;

/// Euclidean distance between two points of equal dimension.
pub fn distance(x: &ParamPoint, y: &ParamPoint) -> Result<f64> {
    y.check_dim(x.dim())?;
    Ok(sq_dist(x.coords(), y.coords()).sqrt())
}

/// Feasible parameter sets supported by [`ConvexDomain::project`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexDomain {
    Ball {
        center: ParamPoint,
        radius: f64,
    },
    Box {
        lower: ParamPoint,
        upper: ParamPoint,
    },
    /// `blocks` copies of the centered ball of radius `radius` in
    /// `block_dim` dimensions, stored block after block.
    ProductOfBalls {
        blocks: usize,
        block_dim: usize,
        radius: f64,
    },
    WholeSpace {
        dim: usize,
    },
}

impl ConvexDomain {
    pub fn ball(center: ParamPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", "must be positive and finite"));
        }
        Ok(ConvexDomain::Ball { center, radius })
    }

    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(ParamPoint::zeros(dim), radius)
    }

    pub fn bounding_box(lower: ParamPoint, upper: ParamPoint) -> Result<Self> {
        upper.check_dim(lower.dim())?;
        if lower.coords().iter().zip(upper.coords()).any(|(l, u)| l > u) {
            return Err(Error::invalid("box", "lower must be <= upper componentwise"));
        }
        Ok(ConvexDomain::Box { lower, upper })
    }

    pub fn product_of_balls(blocks: usize, block_dim: usize, radius: f64) -> Result<Self> {
        if blocks == 0 || block_dim == 0 {
            return Err(Error::invalid("blocks", "block count and dimension must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", "must be positive and finite"));
        }
        Ok(ConvexDomain::ProductOfBalls {
            blocks,
            block_dim,
            radius,
        })
    }

    pub fn whole_space(dim: usize) -> Self {
        ConvexDomain::WholeSpace { dim }
    }

    /// Checks the variant invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexDomain::Ball { center, radius } => {
                Self::ball(center.clone(), *radius).map(|_| ())
            }
            ConvexDomain::Box { lower, upper } => {
                Self::bounding_box(lower.clone(), upper.clone()).map(|_| ())
            }
            ConvexDomain::ProductOfBalls {
                blocks,
                block_dim,
                radius,
            } => Self::product_of_balls(*blocks, *block_dim, *radius).map(|_| ()),
            ConvexDomain::WholeSpace { .. } => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexDomain::Ball { center, .. } => center.dim(),
            ConvexDomain::Box { lower, .. } => lower.dim(),
            ConvexDomain::ProductOfBalls {
                blocks, block_dim, ..
            } => blocks * block_dim,
            ConvexDomain::WholeSpace { dim } => *dim,
        }
    }

    /// Smallest `R` with the domain inside the centered ball of radius `R`
    /// (infinite for the whole space).
    pub fn bounding_radius(&self) -> f64 {
        match self {
            ConvexDomain::Ball { center, radius } => center.norm() + radius,
            ConvexDomain::Box { lower, upper } => lower
                .coords()
                .iter()
                .zip(upper.coords())
                .map(|(l, u)| {
                    let m = l.abs().max(u.abs());
                    m * m
                })
                .sum::<f64>()
                .sqrt(),
            ConvexDomain::ProductOfBalls { blocks, radius, .. } => {
                radius * (*blocks as f64).sqrt()
            }
            ConvexDomain::WholeSpace { .. } => f64::INFINITY,
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, x: &ParamPoint) -> Result<ParamPoint> {
        x.check_dim(self.dim())?;
        let mut out = x.coords().to_vec();
        self.project_in_place(&mut out);
        Ok(ParamPoint::from_vec_unchecked(out))
    }

    /// Projection on a raw coordinate buffer of the right length.
    ///
    /// Points within a few ulps of a sphere count as inside, so the radial
    /// shrink (whose result can land just outside) is exactly idempotent.
    pub(crate) fn project_in_place(&self, x: &mut [f64]) {
        match self {
            ConvexDomain::Ball { center, radius } => {
                let c = center.coords();
                let d = sq_dist(x, c).sqrt();
                if d > *radius * ROUNDING_SLACK {
                    let s = radius / d;
                    for (xi, ci) in x.iter_mut().zip(c) {
                        *xi = ci + (*xi - ci) * s;
                    }
                }
            }
            ConvexDomain::Box { lower, upper } => {
                for ((xi, l), u) in x.iter_mut().zip(lower.coords()).zip(upper.coords()) {
                    *xi = xi.clamp(*l, *u);
                }
            }
            ConvexDomain::ProductOfBalls {
                block_dim, radius, ..
            } => {
                for block in x.chunks_mut(*block_dim) {
                    let d = norm(block);
                    if d > *radius * ROUNDING_SLACK {
                        let s = radius / d;
                        block.iter_mut().for_each(|v| *v *= s);
                    }
                }
            }
            ConvexDomain::WholeSpace { .. } => {}
        }
    }

    /// How far `x` lies outside the domain (0 for members).
    pub fn excess(&self, x: &ParamPoint) -> Result<f64> {
        let p = self.project(x)?;
        distance(x, &p)
    }

    pub fn contains(&self, x: &ParamPoint, tol: f64) -> Result<bool> {
        Ok(self.excess(x)? <= tol)
    }

    /// A uniformly distributed member of the domain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamPoint> {
        match self {
            ConvexDomain::Ball { center, radius } => {
                let mut v = uniform_in_ball(rng, center.dim(), *radius);
                for (vi, ci) in v.iter_mut().zip(center.coords()) {
                    *vi += ci;
                }
                Ok(ParamPoint::from_vec_unchecked(v))
            }
            ConvexDomain::Box { lower, upper } => Ok(ParamPoint::from_vec_unchecked(
                lower
                    .coords()
                    .iter()
                    .zip(upper.coords())
                    .map(|(l, u)| if l == u { *l } else { rng.random_range(*l..*u) })
                    .collect(),
            )),
            ConvexDomain::ProductOfBalls {
                blocks,
                block_dim,
                radius,
            } => {
                let mut v = Vec::with_capacity(blocks * block_dim);
                for _ in 0..*blocks {
                    v.extend(uniform_in_ball(rng, *block_dim, *radius));
                }
                Ok(ParamPoint::from_vec_unchecked(v))
            }
            ConvexDomain::WholeSpace { .. } => Err(Error::invalid(
                "domain",
                "cannot sample uniformly from the whole space",
            )),
        }
    }
}

/// Uniform draw from the centered `dim`-ball of radius `radius`.
pub(crate) fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&g);
        if n > 0.0 {
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            return g.into_iter().map(|x| x * r / n).collect();
        }
    }
}

/// Two-sided Hoeffding tail `min(1, 2 exp(-2 n eps^2 / width^2))` for the
/// mean of `n` i.i.d. variables supported on an interval of width `width`.
pub fn hoeffding_tail(n: usize, epsilon: f64, range_width: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    if !(range_width > 0.0) {
        return Err(Error::invalid("range_width", "must be positive"));
    }
    let exponent = -2.0 * n as f64 * epsilon * epsilon / (range_width * range_width);
    Ok((2.0 * exponent.exp()).min(1.0))
}

/// Numerical tolerances shared by checks and reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub deterministic_tol: f64,
    pub statistical_confidence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            deterministic_tol: 1e-9,
            statistical_confidence: 0.95,
        }
    }
}

impl Tolerances {
    pub fn new(deterministic_tol: f64, statistical_confidence: f64) -> Result<Self> {
        if !(deterministic_tol > 0.0) {
            return Err(Error::invalid("deterministic_tol", "must be positive"));
        }
        if !(statistical_confidence > 0.0 && statistical_confidence < 1.0) {
            return Err(Error::invalid("statistical_confidence", "must lie in (0,1)"));
        }
        Ok(Tolerances {
            deterministic_tol,
            statistical_confidence,
        })
    }
}
