//! Family and dataset construction shared by the scenario commands.

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sgd_cover::data::{Dataset, Sample, SampleGenerator};
use sgd_cover::domain::{ConvexDomain, ParamPoint};
use sgd_cover::losses::{FamilySpec, LossFamily};

use crate::config::{usage, CliResult, FamilyArg, Json};

/// A loss family plus the data SGD runs on.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ScenarioArgs {
    /// Family name (quadratic_centers, soft_kmeans, hard_kmeans,
    /// stability_counterexample, sin_cos) or a JSON descriptor.
    #[arg(long)]
    pub family: Option<FamilyArg>,
    /// Dataset size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Parameter (or sample) dimension for named families.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Domain radius for named families.
    #[arg(long = "R")]
    pub R: Option<f64>,
    /// Number of centers for the K-means families.
    #[arg(long = "K")]
    pub K: Option<usize>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub tie_rule: Option<String>,
    /// Centers for quadratic_centers, as a JSON array of points.
    #[arg(long)]
    pub centers: Option<Json<Vec<ParamPoint>>>,
    /// Sampling distribution as JSON, e.g. {"kind":"uniform_ball","dim":2,"radius":1}.
    #[arg(long)]
    pub generator: Option<Json<SampleGenerator>>,
    /// Explicit dataset as a JSON array of samples; overrides the generator draw.
    #[arg(long)]
    pub samples: Option<Json<Vec<Sample>>>,
    /// Seed for drawing the dataset (defaults to the run seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
}

pub const DEFAULT_N: usize = 10;

pub struct Scenario {
    pub family: LossFamily,
    pub spec: FamilySpec,
    pub dataset: Dataset,
}

impl ScenarioArgs {
    pub fn family_spec(&self) -> CliResult<FamilySpec> {
        let r = self.R.unwrap_or(1.0);
        let d = self.dim.unwrap_or(2);
        let k = self.K.unwrap_or(2);
        let name = match &self.family {
            None => "quadratic_centers".to_string(),
            Some(FamilyArg(Value::String(s))) => s.clone(),
            Some(FamilyArg(v @ Value::Object(_))) => {
                return serde_json::from_value(v.clone()).map_err(|e| crate::config::CliError::Usage(format!("family: {e}")))
            }
            Some(FamilyArg(other)) => return usage(format!("family: expected a name or an object, got {other}")),
        };
        Ok(match name.as_str() {
            "quadratic_centers" => {
                let centers = self.centers.clone().map(|c| c.0).unwrap_or_default();
                FamilySpec::QuadraticCenters {
                    R: r,
                    d: if centers.is_empty() { Some(d) } else { self.dim },
                    centers,
                }
            }
            "soft_kmeans" => FamilySpec::SoftKMeans {
                K: k,
                zeta: self.zeta.unwrap_or(0.1),
                R: r,
                d,
            },
            "hard_kmeans" => FamilySpec::HardKMeans {
                K: k,
                R: r,
                d,
                tie_rule: self.tie_rule.clone().unwrap_or_else(|| "lowest_index".into()),
            },
            "stability_counterexample" => FamilySpec::StabilityCounterexample {},
            "sin_cos" => FamilySpec::SinCos { R: r },
            "multi_index" => return usage("family multi_index needs a JSON descriptor (link, lambda, R, R_x, K, d)"),
            other => return usage(format!("unknown family `{other}`")),
        })
    }

    /// The generator used when none is given.
    fn default_generator(spec: &FamilySpec) -> CliResult<SampleGenerator> {
        Ok(match spec {
            FamilySpec::QuadraticCenters { centers, .. } if !centers.is_empty() => SampleGenerator::Finite {
                support: centers.iter().cloned().map(Sample::Point).collect(),
            },
            FamilySpec::QuadraticCenters { R, d, .. } => SampleGenerator::UniformBall {
                dim: d.unwrap_or(2),
                radius: *R,
            },
            FamilySpec::SoftKMeans { R, d, .. } | FamilySpec::HardKMeans { R, d, .. } => {
                SampleGenerator::UniformBall { dim: *d, radius: *R }
            }
            FamilySpec::StabilityCounterexample {} => SampleGenerator::Finite {
                support: vec![Sample::Scalar(0.0), Sample::Scalar(1.0)],
            },
            FamilySpec::SinCos { R } => SampleGenerator::UniformBall { dim: 2, radius: *R },
            FamilySpec::MultiIndex { .. } => {
                return usage("family multi_index needs an explicit --generator (linear_teacher or labeled_clusters)")
            }
        })
    }

    pub fn generator(&self, spec: &FamilySpec) -> CliResult<SampleGenerator> {
        match &self.generator {
            Some(g) => Ok(g.0.clone()),
            None => Self::default_generator(spec),
        }
    }

    pub fn build(&self, seed: u64) -> CliResult<Scenario> {
        let spec = self.family_spec()?;
        let family = spec.build()?;
        let dataset = match &self.samples {
            Some(s) => {
                let ds = Dataset::new(s.0.clone())?;
                match &self.generator {
                    Some(g) => ds.with_generator(g.0.clone()),
                    None => ds,
                }
            }
            None => {
                let g = self.generator(&spec)?;
                g.validate()?;
                let n = self.n.unwrap_or(DEFAULT_N);
                Dataset::generate(&g, n, self.data_seed.unwrap_or(seed))?
            }
        };
        for z in &dataset.samples {
            family.check_sample(z)?;
        }
        Ok(Scenario {
            family,
            spec,
            dataset,
        })
    }
}

/// Points spread over `domain`: a lattice of `per_axis^d` points when
/// `d <= 2`, otherwise `per_axis^2` seeded draws.
pub fn domain_points(domain: &ConvexDomain, per_axis: usize, seed: u64) -> CliResult<Vec<ParamPoint>> {
    let d = domain.dim();
    let (lo, hi) = match domain {
        ConvexDomain::Box { lower, upper } => (lower.coords().to_vec(), upper.coords().to_vec()),
        ConvexDomain::Ball { center, radius } => (
            center.coords().iter().map(|c| c - radius).collect(),
            center.coords().iter().map(|c| c + radius).collect(),
        ),
        ConvexDomain::ProductOfBalls { radius, .. } => (vec![-radius; d], vec![*radius; d]),
        ConvexDomain::WholeSpace { .. } => return usage("this command needs a bounded domain"),
    };
    if d > 2 {
        let mut r = sgd_cover::rng::stream(seed, 20);
        return (0..per_axis * per_axis).map(|_| Ok(domain.sample(&mut r)?)).collect();
    }
    let steps = per_axis.max(2);
    let axis = |k: usize, j: usize| lo[k] + (hi[k] - lo[k]) * j as f64 / (steps - 1) as f64;
    let mut out = Vec::new();
    let total = steps.pow(d as u32);
    for flat in 0..total {
        let mut rem = flat;
        let coords: Vec<f64> = (0..d)
            .map(|k| {
                let j = rem % steps;
                rem /= steps;
                axis(k, j)
            })
            .collect();
        let p = ParamPoint::new(coords)?;
        if domain.contains(&p, 0.0)? {
            out.push(p);
        }
    }
    Ok(out)
}
