use std::fmt;
use std::sync::Arc;

use super::{LossConstants, LossFamily, LossModel};
use crate::data::Sample;
use crate::domain::{sq_dist, ConvexDomain, ParamPoint};
use crate::error::{Error, Result};

/// `1/2 |theta - z|^2` with `z` a point of the ball.
#[derive(Debug, Clone)]
pub struct QuadraticCenters {
    dim: usize,
    radius: f64,
}

impl LossModel for QuadraticCenters {
    fn value(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        let c = z.as_point()?;
        c.check_dim(self.dim)?;
        Ok(0.5 * sq_dist(theta, c.coords()))
    }

    fn gradient(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let c = z.as_point()?;
        c.check_dim(self.dim)?;
        Ok(theta.iter().zip(c.coords()).map(|(t, c)| t - c).collect())
    }

    fn check_sample(&self, z: &Sample) -> Result<()> {
        let c = z.as_point()?;
        c.check_dim(self.dim)?;
        if c.norm() > self.radius * (1.0 + 1e-12) {
            return Err(Error::SampleMismatch(format!(
                "center of norm {} outside the ball of radius {}",
                c.norm(),
                self.radius
            )));
        }
        Ok(())
    }
}

pub(super) fn quadratic_centers_family(
    dim: usize,
    radius: f64,
    centers: &[ParamPoint],
) -> Result<LossFamily> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("R", "must be positive"));
    }
    let model = QuadraticCenters { dim, radius };
    for c in centers {
        model.check_sample(&Sample::Point(c.clone()))?;
    }
    let constants = LossConstants {
        alpha: Some(1.0),
        beta: Some(1.0),
        beta_prime: Some(1.0),
        // weak Lipschitz with h = |theta|^2 / 2: f - h = -<theta, z> + |z|^2/2
        L: Some(radius),
        B: Some(2.0 * radius * radius),
        L_prime: Some(2.0 * radius),
        R: Some(radius),
        Q: Some(1),
        ..Default::default()
    };
    LossFamily::new(
        "quadratic_centers",
        constants,
        ConvexDomain::centered_ball(dim, radius)?,
        true,
        Arc::new(model),
    )
}

/// `f(x; 1) = (x-1)^2`, `f(x; 0) = min{(x-1)^2, 1/2 + (x-3)^2/2}` on `[0, 4]`.
/// The left piece owns `[0, 2]`, so the auxiliary gradient at the kink
/// `x = 2` is `2`.
#[derive(Debug, Clone, Copy)]
pub struct StabilityCounterexample;

impl StabilityCounterexample {
    fn label(z: &Sample) -> Result<u8> {
        let v = z.as_scalar()?;
        if v == 0.0 {
            Ok(0)
        } else if v == 1.0 {
            Ok(1)
        } else {
            Err(Error::SampleMismatch(format!("expected z in {{0, 1}}, got {v}")))
        }
    }

    fn left(x: f64) -> f64 {
        (x - 1.0) * (x - 1.0)
    }

    fn right(x: f64) -> f64 {
        0.5 + 0.5 * (x - 3.0) * (x - 3.0)
    }
}

impl LossModel for StabilityCounterexample {
    fn value(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        let x = theta[0];
        Ok(match Self::label(z)? {
            1 => Self::left(x),
            _ => Self::left(x).min(Self::right(x)),
        })
    }

    fn gradient(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let q = self.piece_of(theta, z)?;
        self.piece_gradient(q, theta, z)
    }

    fn piece_count(&self) -> usize {
        2
    }

    fn piece_of(&self, theta: &[f64], z: &Sample) -> Result<usize> {
        Ok(match Self::label(z)? {
            1 => 0,
            _ if theta[0] <= 2.0 => 0,
            _ => 1,
        })
    }

    fn piece_value(&self, q: usize, theta: &[f64], z: &Sample) -> Result<f64> {
        let x = theta[0];
        Ok(match (Self::label(z)?, q) {
            (0, 1) => Self::right(x),
            _ => Self::left(x),
        })
    }

    fn piece_gradient(&self, q: usize, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let x = theta[0];
        Ok(match (Self::label(z)?, q) {
            (0, 1) => vec![x - 3.0],
            _ => vec![2.0 * (x - 1.0)],
        })
    }

    fn check_sample(&self, z: &Sample) -> Result<()> {
        Self::label(z).map(|_| ())
    }
}

pub(super) fn stability_family() -> LossFamily {
    let constants = LossConstants {
        alpha: Some(1.0),
        beta: Some(2.0),
        beta_prime: Some(2.0),
        // |f'| <= 6 on [0, 4]; f(4;1) - f(4;0) = 9 - 1
        L: Some(6.0),
        B: Some(8.0),
        L_prime: Some(6.0),
        R: Some(4.0),
        Q: Some(2),
        ..Default::default()
    };
    let domain = ConvexDomain::Box {
        lower: ParamPoint::from_vec_unchecked(vec![0.0]),
        upper: ParamPoint::from_vec_unchecked(vec![4.0]),
    };
    LossFamily::new(
        "stability_counterexample",
        constants,
        domain,
        true,
        Arc::new(StabilityCounterexample),
    )
    .expect("static constants are valid")
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A smooth, sample-independent function given by closures.
#[derive(Clone)]
pub struct SmoothFunction {
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
}

impl fmt::Debug for SmoothFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothFunction")
    }
}

impl SmoothFunction {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        SmoothFunction {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    /// Wraps the function as a family on `domain`.
    pub fn into_family(
        self,
        name: &str,
        constants: LossConstants,
        domain: ConvexDomain,
    ) -> Result<LossFamily> {
        LossFamily::new(name, constants, domain, true, Arc::new(self))
    }
}

impl LossModel for SmoothFunction {
    fn value(&self, theta: &[f64], _z: &Sample) -> Result<f64> {
        Ok((self.value)(theta))
    }

    fn gradient(&self, theta: &[f64], _z: &Sample) -> Result<Vec<f64>> {
        Ok((self.gradient)(theta))
    }
}

pub(super) fn sin_cos_family(radius: f64) -> Result<LossFamily> {
    let f = SmoothFunction::new(
        |t| t[0].sin() + t[1].cos(),
        |t| vec![t[0].cos(), -t[1].sin()],
    );
    let constants = LossConstants {
        beta_prime: Some(1.0),
        L: Some(2f64.sqrt()),
        B: Some(0.0),
        R: Some(radius),
        Q: Some(1),
        ..Default::default()
    };
    f.into_family("sin_cos", constants, ConvexDomain::centered_ball(2, radius)?)
}
