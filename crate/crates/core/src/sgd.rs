//! Projected constant-step SGD, synchronous coupling and contraction
//! measurement.
//!
//! An [`UpdateMap`] is the per-sample map `g_i`; a trajectory is the
//! composition `g_{i_t} o ... o g_{i_1}` applied to the initial point.
//! Mini-batches average the per-sample maps before projecting.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::domain::{sq_dist, ConvexDomain, ParamPoint};
use crate::error::{Error, Result};
use crate::losses::LossFamily;
use crate::rng;

/// How the sample indices `i_1, ..., i_t` are chosen. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexSource {
    /// A fixed sequence of `steps * batch_size` indices.
    Explicit { indices: Vec<usize> },
    /// I.i.d. uniform with replacement.
    Uniform { seed: u64 },
    /// One random permutation of `0..n`, cycled if more indices are needed.
    WithoutReplacement { seed: u64 },
    /// A fresh permutation every epoch.
    RandomShuffle { seed: u64 },
}

impl IndexSource {
    /// The first `count` indices for a dataset of size `n`.
    pub fn indices(&self, n: usize, count: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::invalid("dataset", "needs at least one sample"));
        }
        match self {
            IndexSource::Explicit { indices } => {
                if indices.len() < count {
                    return Err(Error::invalid(
                        "indices",
                        format!("{} explicit indices for {count} draws", indices.len()),
                    ));
                }
                if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
                    return Err(Error::IndexOutOfRange { index: bad, n });
                }
                Ok(indices[..count].to_vec())
            }
            IndexSource::Uniform { seed } => {
                let mut r = rng::stream(*seed, 1);
                Ok((0..count).map(|_| r.random_range(0..n)).collect())
            }
            IndexSource::WithoutReplacement { seed } => {
                let mut r = rng::stream(*seed, 1);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut r);
                Ok((0..count).map(|k| perm[k % n]).collect())
            }
            IndexSource::RandomShuffle { seed } => {
                let mut r = rng::stream(*seed, 1);
                let mut out = Vec::with_capacity(count);
                let mut perm: Vec<usize> = (0..n).collect();
                while out.len() < count {
                    perm.shuffle(&mut r);
                    out.extend(perm.iter().take(count - out.len()));
                }
                Ok(out)
            }
        }
    }
}

fn default_batch() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub eta: f64,
    pub init: ParamPoint,
    pub steps: usize,
    pub index_source: IndexSource,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl SgdConfig {
    pub fn new(eta: f64, init: ParamPoint, steps: usize, index_source: IndexSource) -> Self {
        SgdConfig {
            eta,
            init,
            steps,
            index_source,
            batch_size: 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if let IndexSource::Explicit { indices } = &self.index_source {
            if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: bad, n });
            }
        }
        Ok(())
    }
}

type CustomFn = dyn Fn(&[f64], &Sample) -> Result<Vec<f64>> + Send + Sync;

#[derive(Clone)]
pub enum UpdateKind {
    /// `theta - eta * grad f(theta; z)`.
    Sgd { family: LossFamily, eta: f64 },
    /// An arbitrary per-sample update `g(theta; z)`.
    Custom(Arc<CustomFn>),
}

impl fmt::Debug for UpdateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateKind::Sgd { family, eta } => f
                .debug_struct("Sgd")
                .field("family", &family.name())
                .field("eta", eta)
                .finish(),
            UpdateKind::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// The per-sample update `g_i`, followed by projection onto `domain` when
/// `project` is set. With `enforce_domain`, trajectories error as soon as an
/// unprojected iterate leaves the domain.
#[derive(Debug, Clone)]
pub struct UpdateMap {
    pub kind: UpdateKind,
    pub domain: ConvexDomain,
    pub project: bool,
    pub enforce_domain: bool,
}

impl UpdateMap {
    /// SGD on `family` with step `eta`, projecting iff the family does.
    pub fn sgd(family: &LossFamily, eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid("eta", "must be nonnegative"));
        }
        Ok(UpdateMap {
            domain: family.domain().clone(),
            project: family.projected(),
            enforce_domain: !family.projected(),
            kind: UpdateKind::Sgd {
                family: family.clone(),
                eta,
            },
        })
    }

    pub fn custom(
        g: impl Fn(&[f64], &Sample) -> Result<Vec<f64>> + Send + Sync + 'static,
        domain: ConvexDomain,
        project: bool,
    ) -> Self {
        UpdateMap {
            kind: UpdateKind::Custom(Arc::new(g)),
            domain,
            project,
            enforce_domain: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Step size of an SGD map.
    pub fn eta(&self) -> Option<f64> {
        match &self.kind {
            UpdateKind::Sgd { eta, .. } => Some(*eta),
            UpdateKind::Custom(_) => None,
        }
    }

    pub fn family(&self) -> Option<&LossFamily> {
        match &self.kind {
            UpdateKind::Sgd { family, .. } => Some(family),
            UpdateKind::Custom(_) => None,
        }
    }

    fn single(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        match &self.kind {
            UpdateKind::Sgd { family, eta } => {
                let g = family.gradient_raw(theta, z)?;
                Ok(theta.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect())
            }
            UpdateKind::Custom(f) => {
                let out = f(theta, z)?;
                if out.len() != theta.len() {
                    return Err(Error::DimensionMismatch {
                        expected: theta.len(),
                        got: out.len(),
                    });
                }
                Ok(out)
            }
        }
    }

    /// Applies the average of the maps of `batch`, then projects.
    pub(crate) fn apply_raw(&self, theta: &[f64], batch: &[usize], data: &Dataset) -> Result<Vec<f64>> {
        let mut out = match batch {
            [i] => self.single(theta, data.get(*i)?)?,
            _ => {
                let mut acc = vec![0.0; theta.len()];
                for &i in batch {
                    for (a, v) in acc.iter_mut().zip(self.single(theta, data.get(i)?)?) {
                        *a += v;
                    }
                }
                let m = batch.len() as f64;
                acc.iter_mut().for_each(|a| *a /= m);
                acc
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("update"));
        }
        if self.project {
            self.domain.project_in_place(&mut out);
        }
        Ok(out)
    }

    /// Applies the map for the mini-batch `batch`.
    pub fn apply(&self, theta: &ParamPoint, batch: &[usize], data: &Dataset) -> Result<ParamPoint> {
        theta.check_dim(self.dim())?;
        if batch.is_empty() {
            return Err(Error::invalid("batch", "must not be empty"));
        }
        Ok(ParamPoint::from_vec_unchecked(self.apply_raw(theta.coords(), batch, data)?))
    }
}

/// One step `g_i(theta)`.
pub fn sgd_step(map: &UpdateMap, theta: &ParamPoint, index: usize, data: &Dataset) -> Result<ParamPoint> {
    map.apply(theta, &[index], data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `theta^(0), ..., theta^(t)`.
    pub points: Vec<ParamPoint>,
    /// Realized indices, `batch_size` per step.
    pub indices: Vec<usize>,
    pub batch_size: usize,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn last(&self) -> &ParamPoint {
        self.points.last().expect("trajectory holds the initial point")
    }

    /// Indices used at step `s` (1-based step number).
    pub fn batch(&self, s: usize) -> &[usize] {
        &self.indices[(s - 1) * self.batch_size..s * self.batch_size]
    }

    /// CSV with columns `step,index,x0,x1,...`. The initial point has an
    /// empty index; mini-batch indices are joined with `;`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.points[0].dim();
        let mut header = vec!["step".to_string(), "index".to_string()];
        header.extend((0..d).map(|j| format!("x{j}")));
        out.write_record(&header)?;
        for (s, p) in self.points.iter().enumerate() {
            let idx = if s == 0 {
                String::new()
            } else {
                self.batch(s)
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            };
            let mut rec = vec![s.to_string(), idx];
            rec.extend(p.coords().iter().map(|v| format!("{v:?}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_inside(map: &UpdateMap, x: &[f64], step: usize) -> Result<()> {
    if map.enforce_domain {
        let excess = map.domain.excess(&ParamPoint::from_vec_unchecked(x.to_vec()))?;
        if excess > 1e-9 * map.domain.bounding_radius().max(1.0) {
            return Err(Error::LeftDomain { step, excess });
        }
    }
    Ok(())
}

/// Runs `config.steps` updates from `config.init`.
pub fn run_trajectory(map: &UpdateMap, config: &SgdConfig, data: &Dataset) -> Result<Trajectory> {
    config.validate(data.len())?;
    config.init.check_dim(map.dim())?;
    let b = config.batch_size;
    let indices = config.index_source.indices(data.len(), config.steps * b)?;
    let mut points = Vec::with_capacity(config.steps + 1);
    let mut x = config.init.coords().to_vec();
    check_inside(map, &x, 0)?;
    points.push(config.init.clone());
    for s in 0..config.steps {
        x = map.apply_raw(&x, &indices[s * b..(s + 1) * b], data)?;
        check_inside(map, &x, s + 1)?;
        points.push(ParamPoint::from_vec_unchecked(x.clone()));
    }
    Ok(Trajectory {
        points,
        indices,
        batch_size: b,
    })
}

/// Runs independent trajectories in parallel; output order follows `configs`.
pub fn run_trajectories(map: &UpdateMap, configs: &[SgdConfig], data: &Dataset) -> Result<Vec<Trajectory>> {
    configs.par_iter().map(|c| run_trajectory(map, c, data)).collect()
}

/// Final iterate only, without storing the path.
pub fn run_endpoint(map: &UpdateMap, init: &[f64], indices: &[usize], batch_size: usize, data: &Dataset) -> Result<Vec<f64>> {
    let mut x = init.to_vec();
    for (s, batch) in indices.chunks(batch_size).enumerate() {
        x = map.apply_raw(&x, batch, data)?;
        check_inside(map, &x, s + 1)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// `|g(a) - g(b)| / |a - b|` per step.
    pub ratios: Vec<f64>,
    /// First step after which the coupled runs agree to within `1e-14 R`;
    /// ratios from there on are reported as 0.
    pub coalesced_at: Option<usize>,
}

impl ContractionReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().cloned().fold(0.0, f64::max)
    }
}

/// Runs two copies of `map` from `a` and `b` with the same index at each
/// step and records the per-step distance ratios.
pub fn coupled_contraction_ratio(
    map: &UpdateMap,
    a: &ParamPoint,
    b: &ParamPoint,
    indices: &[usize],
    data: &Dataset,
) -> Result<ContractionReport> {
    let batches: Vec<Vec<usize>> = indices.iter().map(|&i| vec![i]).collect();
    coupled_contraction_ratio_batched(map, a, b, &batches, data)
}

/// Like [`coupled_contraction_ratio`] with a mini-batch per step.
pub fn coupled_contraction_ratio_batched(
    map: &UpdateMap,
    a: &ParamPoint,
    b: &ParamPoint,
    batches: &[Vec<usize>],
    data: &Dataset,
) -> Result<ContractionReport> {
    a.check_dim(map.dim())?;
    b.check_dim(map.dim())?;
    if a == b {
        return Err(Error::invalid("theta_b", "coupled runs must start apart"));
    }
    let r = map.domain.bounding_radius();
    let thresh = 1e-14 * if r.is_finite() { r } else { 1.0 };
    let (mut x, mut y) = (a.coords().to_vec(), b.coords().to_vec());
    let mut ratios = Vec::with_capacity(batches.len());
    let mut coalesced_at = None;
    for (s, batch) in batches.iter().enumerate() {
        if coalesced_at.is_some() {
            ratios.push(0.0);
            continue;
        }
        let before = sq_dist(&x, &y).sqrt();
        x = map.apply_raw(&x, batch, data)?;
        y = map.apply_raw(&y, batch, data)?;
        let after = sq_dist(&x, &y).sqrt();
        if after <= thresh {
            coalesced_at = Some(s + 1);
            ratios.push(0.0);
        } else {
            ratios.push(after / before);
        }
    }
    Ok(ContractionReport {
        ratios,
        coalesced_at,
    })
}

/// `sqrt(1 - 2 alpha eta + alpha beta eta^2)` for `0 < eta < 2/beta`.
pub fn contraction_factor(alpha: f64, beta: f64, eta: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::invalid("alpha/beta", "must be positive"));
    }
    if alpha > beta {
        return Err(Error::invalid("alpha", "must not exceed beta"));
    }
    if !(eta > 0.0) {
        return Err(Error::invalid("eta", "must be positive"));
    }
    if eta >= 2.0 / beta {
        return Err(Error::invalid("eta", "must be below 2/beta for contraction"));
    }
    let rad = 1.0 - 2.0 * alpha * eta + alpha * beta * eta * eta;
    if rad < -1e-12 {
        return Err(Error::invalid("eta", format!("negative radicand {rad}")));
    }
    Ok(rad.max(0.0).sqrt())
}
