//! Localized covers of SGD trajectories.
//!
//! Every iterate `theta^(t)` with `t >= T` lies within `gamma^T R` of the
//! point obtained by applying its last `T` updates to the origin, so the
//! `n^T` compositions from the origin form a cover whose entries each depend
//! on at most `T` samples. The piecewise variant also branches over the
//! quadratic pieces of a surrogate loss.

mod ifs;
mod piecewise;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::domain::{sq_dist, ParamPoint};
use crate::error::{Error, Result};
use crate::rng;
use crate::sgd::UpdateMap;

pub use ifs::{box_counting_dimension, ifs_dimension, IfsDimension, IfsModel};
pub use piecewise::{
    build_piecewise_approx, enumerate_piecewise_cover, verify_piecewise_cover, ApproxOptions,
    PiecewiseQuadraticApprox, QuadraticPiece,
};

/// Default refusal threshold for enumeration sizes.
pub const DEFAULT_CAP: u128 = 10_000_000;

/// `max(ceil(log(R/eps) / log(1/gamma)), 0)`.
///
/// Ratios within `1e-9` of an integer are snapped to it before the ceiling,
/// so exact powers do not pick up a spurious extra step from rounding.
pub fn cover_horizon(radius: f64, epsilon: f64, gamma: f64) -> Result<usize> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("R", "must be positive"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", "must lie in [0, 1)"));
    }
    if epsilon >= radius {
        return Ok(0);
    }
    if gamma == 0.0 {
        return Ok(1);
    }
    let ratio = (radius / epsilon).ln() / (1.0 / gamma).ln();
    let snapped = if (ratio - ratio.round()).abs() <= 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    };
    Ok(snapped.max(0.0) as usize)
}

/// Checks `choices^horizon <= cap` and returns the count.
pub(crate) fn checked_count(choices: usize, horizon: usize, cap: u128) -> Result<u128> {
    let exp = u32::try_from(horizon).map_err(|_| Error::CapExceeded {
        required: u128::MAX,
        cap,
    })?;
    let required = (choices as u128).checked_pow(exp).unwrap_or(u128::MAX);
    if required > cap {
        return Err(Error::CapExceeded { required, cap });
    }
    Ok(required)
}

/// All `choices^horizon` compositions from `anchor`, flattened, in
/// lexicographic order of the choice sequence (first choice most
/// significant).
pub(crate) fn enumerate_compositions<F>(
    anchor: &[f64],
    choices: usize,
    horizon: usize,
    cap: u128,
    step: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], usize) -> Result<Vec<f64>> + Sync,
{
    checked_count(choices, horizon, cap)?;
    let dim = anchor.len();
    let mut level = anchor.to_vec();
    for _ in 0..horizon {
        let blocks: Vec<Vec<f64>> = level
            .par_chunks(dim)
            .map(|p| {
                let mut out = Vec::with_capacity(choices * dim);
                for c in 0..choices {
                    out.extend(step(p, c)?);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        level = blocks.concat();
    }
    Ok(level)
}

/// One cover entry: the index sequence `i_1, ..., i_T` (applied in that
/// order), the surrogate pieces for the piecewise variant, the point, and
/// the samples it depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverEntry {
    pub seq: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<usize>>,
    pub point: ParamPoint,
    pub deps: Vec<usize>,
}

/// A localized cover `Psi_T(anchor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverSet {
    /// Radius the cover is meant to achieve, when known.
    pub epsilon: Option<f64>,
    pub horizon: usize,
    pub anchor: ParamPoint,
    /// Dataset size.
    pub n: usize,
    /// Pieces per sample for the piecewise variant.
    pub pieces: Option<usize>,
    dim: usize,
    points: Vec<f64>,
    /// Lexicographic ids of the kept entries after deduplication.
    ids: Option<Vec<u64>>,
}

impl CoverSet {
    pub(crate) fn from_points(
        anchor: ParamPoint,
        n: usize,
        pieces: Option<usize>,
        horizon: usize,
        points: Vec<f64>,
    ) -> Self {
        CoverSet {
            epsilon: None,
            horizon,
            dim: anchor.dim(),
            anchor,
            n,
            pieces,
            points,
            ids: None,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn deduplicated(&self) -> bool {
        self.ids.is_some()
    }

    fn choices(&self) -> usize {
        self.n * self.pieces.unwrap_or(1)
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    fn id(&self, k: usize) -> u64 {
        self.ids.as_ref().map_or(k as u64, |ids| ids[k])
    }

    /// Choice sequence of the entry with lexicographic id `id`.
    fn decode(&self, mut id: u64) -> Vec<usize> {
        let c = self.choices() as u64;
        let mut out = vec![0; self.horizon];
        for slot in out.iter_mut().rev() {
            *slot = (id % c) as usize;
            id /= c;
        }
        out
    }

    pub fn entry(&self, k: usize) -> CoverEntry {
        let choices = self.decode(self.id(k));
        let p = self.pieces.unwrap_or(1);
        let seq: Vec<usize> = choices.iter().map(|c| c / p).collect();
        let pieces = self.pieces.map(|_| choices.iter().map(|c| c % p).collect());
        let mut deps = seq.clone();
        deps.sort_unstable();
        deps.dedup();
        CoverEntry {
            seq,
            pieces,
            point: ParamPoint::from_vec_unchecked(self.point(k).to_vec()),
            deps,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = CoverEntry> + '_ {
        (0..self.len()).map(|k| self.entry(k))
    }

    /// Position of the entry with lexicographic id `id`, if kept.
    fn position(&self, id: u64) -> Option<usize> {
        match &self.ids {
            None => Some(id as usize),
            Some(ids) => ids.binary_search(&id).ok(),
        }
    }

    /// Drops entries whose point bit-for-bit repeats an earlier one.
    pub fn dedup(mut self) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut ids = Vec::new();
        let mut points = Vec::new();
        for k in 0..self.len() {
            let key: Vec<u64> = self.point(k).iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                ids.push(self.id(k));
                points.extend_from_slice(self.point(k));
            }
        }
        self.ids = Some(ids);
        self.points = points;
        self
    }

    /// Distance from `x` to the nearest entry.
    pub fn min_distance(&self, x: &[f64]) -> f64 {
        self.points
            .par_chunks(self.dim)
            .map(|p| sq_dist(p, x))
            .reduce(|| f64::INFINITY, f64::min)
            .sqrt()
    }

    /// JSON lines: a `{"meta": ...}` header, then one entry per line in
    /// canonical order.
    pub fn write_jsonl<W: Write>(&self, mut w: W, meta: &serde_json::Value) -> Result<()> {
        let mut header = serde_json::Map::new();
        let mut m = match meta {
            serde_json::Value::Object(o) => o.clone(),
            serde_json::Value::Null => serde_json::Map::new(),
            other => {
                let mut o = serde_json::Map::new();
                o.insert("info".into(), other.clone());
                o
            }
        };
        m.insert("horizon".into(), self.horizon.into());
        m.insert("n".into(), self.n.into());
        m.insert("entries".into(), self.len().into());
        m.insert("epsilon".into(), serde_json::to_value(self.epsilon)?);
        m.insert("anchor".into(), serde_json::to_value(&self.anchor)?);
        if let Some(p) = self.pieces {
            m.insert("pieces".into(), p.into());
        }
        m.insert("deduplicated".into(), self.deduplicated().into());
        header.insert("meta".into(), serde_json::Value::Object(m));
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for e in self.entries() {
            serde_json::to_writer(&mut w, &e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// The anchor used by all covers: the origin, projected when the map
/// projects (it is already feasible for every built-in domain).
pub(crate) fn cover_anchor(map: &UpdateMap) -> ParamPoint {
    let mut a = vec![0.0; map.dim()];
    if map.project {
        map.domain.project_in_place(&mut a);
    }
    ParamPoint::from_vec_unchecked(a)
}

/// All `n^T` compositions `g_{i_T} o ... o g_{i_1}(0)`.
pub fn enumerate_cover(map: &UpdateMap, data: &Dataset, horizon: usize, cap: u128) -> Result<CoverSet> {
    let anchor = cover_anchor(map);
    let n = data.len();
    let points = enumerate_compositions(anchor.coords(), n, horizon, cap, |p, i| {
        map.apply_raw(p, &[i], data)
    })?;
    Ok(CoverSet::from_points(anchor, n, None, horizon, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub trials: usize,
    /// Endpoints are drawn at `t` uniform in `[T, T + max_extra_steps]`.
    pub max_extra_steps: usize,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub steps: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub trials: usize,
    pub epsilon: f64,
    pub horizon: usize,
    /// Largest endpoint-to-cover distance. Each distance is to the entry
    /// sharing the endpoint's last `T` updates, or to the nearest entry when
    /// that one is farther than `epsilon`.
    pub max_distance: f64,
    pub mean_distance: f64,
    pub failures: Vec<TrialOutcome>,
    pub pass: bool,
}

/// Runs the trials of `cfg`; `track` maps `(theta, index)` to the next
/// iterate and the cover choice made by that step.
pub(crate) fn run_verification<F>(cover: &CoverSet, map: &UpdateMap, data: &Dataset, cfg: &VerifyConfig, track: F) -> Result<CoverReport>
where
    F: Fn(&[f64], usize) -> Result<(Vec<f64>, usize)> + Sync,
{
    if cfg.trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let n = data.len();
    let big_t = cover.horizon;
    let c = cover.choices() as u64;
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::substream(cfg.seed, trial as u64, 0);
            let mut x = map.domain.sample(&mut r)?.into_coords();
            let steps = big_t + r.random_range(0..=cfg.max_extra_steps);
            let mut id: u64 = 0;
            let modulus = c.checked_pow(big_t as u32).unwrap_or(u64::MAX);
            for _ in 0..steps {
                let i = r.random_range(0..n);
                let (next, choice) = track(&x, i)?;
                x = next;
                if big_t > 0 {
                    id = (id % (modulus / c)) * c + choice as u64;
                }
            }
            let near = cover.position(id).map(|k| sq_dist(cover.point(k), &x).sqrt());
            let distance = match near {
                Some(d) if d <= cfg.epsilon => d,
                _ => cover.min_distance(&x),
            };
            Ok(TrialOutcome {
                trial,
                steps,
                distance,
            })
        })
        .collect::<Result<_>>()?;
    let max_distance = outcomes.iter().map(|o| o.distance).fold(0.0, f64::max);
    let mean_distance = outcomes.iter().map(|o| o.distance).sum::<f64>() / outcomes.len() as f64;
    let failures: Vec<TrialOutcome> = outcomes.into_iter().filter(|o| o.distance > cfg.epsilon).collect();
    Ok(CoverReport {
        trials: cfg.trials,
        epsilon: cfg.epsilon,
        horizon: big_t,
        max_distance,
        mean_distance,
        pass: failures.is_empty(),
        failures,
    })
}

/// Simulates trajectories from random starts and checks every endpoint is
/// within `epsilon` of the cover.
pub fn verify_cover(cover: &CoverSet, map: &UpdateMap, data: &Dataset, cfg: &VerifyConfig) -> Result<CoverReport> {
    if cover.pieces.is_some() {
        return Err(Error::invalid("cover", "piecewise covers need verify_piecewise_cover"));
    }
    if cover.n != data.len() || cover.dim() != map.dim() {
        return Err(Error::invalid("cover", "built for a different map or dataset"));
    }
    run_verification(cover, map, data, cfg, |x, i| Ok((map.apply_raw(x, &[i], data)?, i)))
}

#[cfg(test)]
mod tests;
