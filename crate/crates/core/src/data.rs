//! Samples, datasets and the distributions they are drawn from.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{norm, uniform_in_ball, ParamPoint};
use crate::error::{Error, Result};
use crate::rng;

/// One element `z` of the sample space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sample {
    Scalar(f64),
    Point(ParamPoint),
    Labeled { y: f64, x: ParamPoint },
}

impl Sample {
    pub fn point(coords: Vec<f64>) -> Result<Self> {
        Ok(Sample::Point(ParamPoint::new(coords)?))
    }

    pub fn as_point(&self) -> Result<&ParamPoint> {
        match self {
            Sample::Point(p) => Ok(p),
            other => Err(Error::SampleMismatch(format!("expected a point, got {other:?}"))),
        }
    }

    pub fn as_labeled(&self) -> Result<(f64, &ParamPoint)> {
        match self {
            Sample::Labeled { y, x } => Ok((*y, x)),
            other => Err(Error::SampleMismatch(format!(
                "expected a labeled sample, got {other:?}"
            ))),
        }
    }

    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Sample::Scalar(v) => Ok(*v),
            other => Err(Error::SampleMismatch(format!("expected a scalar, got {other:?}"))),
        }
    }

    /// Flat coordinates, used for hashing and CSV dumps.
    pub fn flat(&self) -> Vec<f64> {
        match self {
            Sample::Scalar(v) => vec![*v],
            Sample::Point(p) => p.coords().to_vec(),
            Sample::Labeled { y, x } => std::iter::once(*y).chain(x.coords().iter().copied()).collect(),
        }
    }
}

/// A named sampling distribution `mu` over the sample space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleGenerator {
    /// Uniform over a finite support; population risks are exact.
    Finite { support: Vec<Sample> },
    UniformBall { dim: usize, radius: f64 },
    /// Uniformly chosen center plus isotropic Gaussian noise, projected back
    /// into the centered ball of radius `radius`.
    GaussianClusters {
        centers: Vec<ParamPoint>,
        sigma: f64,
        radius: f64,
    },
    /// `x` uniform in the ball of radius `input_radius`,
    /// `y = <weights, x> + noise * N(0,1)`.
    LinearTeacher {
        weights: ParamPoint,
        noise: f64,
        input_radius: f64,
    },
    /// Label `y` uniform over the classes, `x` = class center plus noise,
    /// projected into the ball of radius `input_radius`.
    LabeledClusters {
        centers: Vec<ParamPoint>,
        sigma: f64,
        input_radius: f64,
    },
}

impl SampleGenerator {
    pub fn validate(&self) -> Result<()> {
        match self {
            SampleGenerator::Finite { support } if support.is_empty() => {
                Err(Error::invalid("support", "must not be empty"))
            }
            SampleGenerator::UniformBall { dim, radius } if *dim == 0 || !(*radius > 0.0) => {
                Err(Error::invalid("uniform_ball", "needs dim >= 1 and radius > 0"))
            }
            SampleGenerator::GaussianClusters {
                centers,
                sigma,
                radius,
            }
            | SampleGenerator::LabeledClusters {
                centers,
                sigma,
                input_radius: radius,
            } => {
                if centers.is_empty() || !(*sigma >= 0.0) || !(*radius > 0.0) {
                    return Err(Error::invalid(
                        "clusters",
                        "needs at least one center, sigma >= 0 and radius > 0",
                    ));
                }
                let d = centers[0].dim();
                for c in centers {
                    c.check_dim(d)?;
                }
                Ok(())
            }
            SampleGenerator::LinearTeacher {
                noise,
                input_radius,
                ..
            } if !(*noise >= 0.0) || !(*input_radius > 0.0) => Err(Error::invalid(
                "linear_teacher",
                "needs noise >= 0 and input_radius > 0",
            )),
            _ => Ok(()),
        }
    }

    /// The support when it is finite (uniform weights).
    pub fn finite_support(&self) -> Option<&[Sample]> {
        match self {
            SampleGenerator::Finite { support } => Some(support),
            _ => None,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        match self {
            SampleGenerator::Finite { support } => support[rng.random_range(0..support.len())].clone(),
            SampleGenerator::UniformBall { dim, radius } => {
                Sample::Point(ParamPoint::from_vec_unchecked(uniform_in_ball(rng, *dim, *radius)))
            }
            SampleGenerator::GaussianClusters {
                centers,
                sigma,
                radius,
            } => {
                let c = &centers[rng.random_range(0..centers.len())];
                Sample::Point(noisy_in_ball(rng, c, *sigma, *radius))
            }
            SampleGenerator::LinearTeacher {
                weights,
                noise,
                input_radius,
            } => {
                let x = uniform_in_ball(rng, weights.dim(), *input_radius);
                let eps: f64 = StandardNormal.sample(rng);
                let y = crate::domain::dot(weights.coords(), &x) + noise * eps;
                Sample::Labeled {
                    y,
                    x: ParamPoint::from_vec_unchecked(x),
                }
            }
            SampleGenerator::LabeledClusters {
                centers,
                sigma,
                input_radius,
            } => {
                let label = rng.random_range(0..centers.len());
                Sample::Labeled {
                    y: label as f64,
                    x: noisy_in_ball(rng, &centers[label], *sigma, *input_radius),
                }
            }
        }
    }
}

fn noisy_in_ball<R: Rng + ?Sized>(rng: &mut R, c: &ParamPoint, sigma: f64, radius: f64) -> ParamPoint {
    let mut v: Vec<f64> = c
        .coords()
        .iter()
        .map(|ci| {
            let e: f64 = StandardNormal.sample(rng);
            ci + sigma * e
        })
        .collect::<Vec<f64>>();
    let n = norm(&v);
    if n > radius {
        v.iter_mut().for_each(|x| *x *= radius / n);
    }
    ParamPoint::from_vec_unchecked(v)
}

/// The training sample `z_1, ..., z_n`, with the distribution it came from
/// when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    #[serde(default)]
    pub generator: Option<SampleGenerator>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("dataset", "needs at least one sample"));
        }
        Ok(Dataset {
            samples,
            generator: None,
            seed: None,
        })
    }

    pub fn with_generator(mut self, generator: SampleGenerator) -> Self {
        self.generator = Some(generator);
        self
    }

    /// `n` i.i.d. draws from `generator` using stream 0 of `seed`.
    pub fn generate(generator: &SampleGenerator, n: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, 0);
        let mut ds = Self::generate_with(generator, n, &mut r)?;
        ds.seed = Some(seed);
        Ok(ds)
    }

    pub fn generate_with<R: Rng + ?Sized>(
        generator: &SampleGenerator,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        generator.validate()?;
        if n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        let samples = (0..n).map(|_| generator.draw(rng)).collect();
        Ok(Dataset {
            samples,
            generator: Some(generator.clone()),
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<&Sample> {
        self.samples.get(index).ok_or(Error::IndexOutOfRange {
            index,
            n: self.samples.len(),
        })
    }
}
