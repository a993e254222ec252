//! Piecewise quadratic surrogates of piecewise smooth losses.
//!
//! Each smooth piece `l_q` of `f(.; z)` is linearized at the anchors of a
//! lattice cover of the domain and given curvature `beta`:
//!
//! `h_{q,p}(theta) = l_q(phi_p) + grad l_q(phi_p).(theta - phi_p) + beta/2 |theta - phi_p|^2`.
//!
//! Inside the region of piece `q`, `theta` uses its nearest anchor (lowest
//! index on ties). With anchor spacing `eps = xi / (beta + beta')` the
//! surrogate gradient is within `xi` of the true one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{enumerate_compositions, run_verification, CoverReport, CoverSet, VerifyConfig};
use crate::data::{Dataset, Sample};
use crate::domain::{sq_dist, ConvexDomain, ParamPoint};
use crate::error::{Error, Result};
use crate::losses::LossFamily;
use crate::sgd::UpdateMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxOptions {
    /// Largest lattice the builder will scan.
    pub cap: u128,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions { cap: 1_000_000 }
    }
}

/// One quadratic piece `h_{q,p}` for a fixed sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPiece {
    pub q: usize,
    pub p: usize,
    pub anchor: ParamPoint,
    pub value: f64,
    pub gradient: ParamPoint,
    pub curvature: f64,
}

impl QuadraticPiece {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        let a = self.anchor.coords();
        let lin: f64 = self
            .gradient
            .coords()
            .iter()
            .zip(theta.iter().zip(a))
            .map(|(g, (t, c))| g * (t - c))
            .sum();
        self.value + lin + 0.5 * self.curvature * sq_dist(theta, a)
    }

    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        surrogate_gradient(self.gradient.coords(), self.anchor.coords(), self.curvature, theta)
    }
}

fn surrogate_gradient(g0: &[f64], anchor: &[f64], beta: f64, theta: &[f64]) -> Vec<f64> {
    g0.iter()
        .zip(theta.iter().zip(anchor))
        .map(|(g, (t, a))| g + beta * (t - a))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PiecewiseQuadraticApprox {
    family: LossFamily,
    anchors: Vec<ParamPoint>,
    smooth_pieces: usize,
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub xi: f64,
    /// Anchor cover radius `xi / (beta + beta')`.
    pub spacing: f64,
    /// `Q (3 (beta + beta') R / xi)^d`.
    pub piece_bound: f64,
}

impl PiecewiseQuadraticApprox {
    pub fn family(&self) -> &LossFamily {
        &self.family
    }

    pub fn anchors(&self) -> &[ParamPoint] {
        &self.anchors
    }

    /// Pieces per sample, `Q * anchors`.
    pub fn piece_count(&self) -> usize {
        self.smooth_pieces * self.anchors.len()
    }

    pub fn within_bound(&self) -> bool {
        self.piece_count() as f64 <= self.piece_bound
    }

    /// Nearest anchor, lowest index on ties.
    pub fn nearest_anchor(&self, theta: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, a) in self.anchors.iter().enumerate() {
            let d = sq_dist(a.coords(), theta);
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Flat piece id `q * anchors + p` active at `theta`.
    pub fn piece_id(&self, theta: &[f64], z: &Sample) -> Result<usize> {
        let q = self.family.model().piece_of(theta, z)?;
        Ok(q * self.anchors.len() + self.nearest_anchor(theta))
    }

    /// The piece with flat id `id` for sample `z`.
    pub fn piece(&self, id: usize, z: &Sample) -> Result<QuadraticPiece> {
        let a = self.anchors.len();
        let (q, p) = (id / a, id % a);
        if q >= self.smooth_pieces {
            return Err(Error::IndexOutOfRange {
                index: id,
                n: self.piece_count(),
            });
        }
        let anchor = &self.anchors[p];
        let m = self.family.model();
        let value = m.piece_value(q, anchor.coords(), z)?;
        let gradient = ParamPoint::new(m.piece_gradient(q, anchor.coords(), z)?)
            .map_err(|_| Error::NonFinite("piece gradient"))?;
        Ok(QuadraticPiece {
            q,
            p,
            anchor: anchor.clone(),
            value,
            gradient,
            curvature: self.beta,
        })
    }

    /// All pieces for sample `z`, in flat-id order.
    pub fn pieces_for(&self, z: &Sample) -> Result<Vec<QuadraticPiece>> {
        (0..self.piece_count()).map(|id| self.piece(id, z)).collect()
    }

    pub fn value(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        Ok(self.piece(self.piece_id(theta, z)?, z)?.eval(theta))
    }

    pub fn gradient(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        Ok(self.piece(self.piece_id(theta, z)?, z)?.grad(theta))
    }

    /// `max |grad f - grad h|` over `points`.
    pub fn max_gradient_error(&self, points: &[ParamPoint], z: &Sample) -> Result<f64> {
        points
            .par_iter()
            .map(|x| {
                let g = self.family.gradient(x, z)?;
                let h = self.gradient(x.coords(), z)?;
                Ok(sq_dist(g.coords(), &h).sqrt())
            })
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }
}

fn bounding_box(domain: &ConvexDomain) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(match domain {
        ConvexDomain::Ball { center, radius } => (center.coords().to_vec(), vec![*radius; center.dim()]),
        ConvexDomain::Box { lower, upper } => (
            lower.coords().iter().zip(upper.coords()).map(|(l, u)| 0.5 * (l + u)).collect(),
            lower.coords().iter().zip(upper.coords()).map(|(l, u)| 0.5 * (u - l)).collect(),
        ),
        ConvexDomain::ProductOfBalls { blocks, block_dim, radius } => {
            (vec![0.0; blocks * block_dim], vec![*radius; blocks * block_dim])
        }
        ConvexDomain::WholeSpace { .. } => {
            return Err(Error::invalid("domain", "anchor lattice needs a bounded domain"))
        }
    })
}

/// Axis-aligned lattice of spacing `2 eps / sqrt(d)` restricted to points
/// within `eps` of the domain, projected into it and deduplicated.
fn anchor_lattice(domain: &ConvexDomain, eps: f64, cap: u128) -> Result<Vec<ParamPoint>> {
    let (center, half) = bounding_box(domain)?;
    let d = center.len();
    let s = 2.0 * eps / (d as f64).sqrt();
    let m: Vec<i64> = half.iter().map(|h| ((h / s - 0.5).ceil()).max(0.0) as i64).collect();
    let total = m
        .iter()
        .try_fold(1u128, |acc, mj| acc.checked_mul(2 * *mj as u128 + 1))
        .unwrap_or(u128::MAX);
    if total > cap {
        return Err(Error::CapExceeded { required: total, cap });
    }
    let mut k: Vec<i64> = m.iter().map(|mj| -mj).collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    loop {
        let x: Vec<f64> = center.iter().zip(&k).map(|(c, kj)| c + *kj as f64 * s).collect();
        let p = ParamPoint::from_vec_unchecked(x);
        if domain.excess(&p)? <= eps {
            let mut y = p.into_coords();
            domain.project_in_place(&mut y);
            if seen.insert(y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()) {
                out.push(ParamPoint::from_vec_unchecked(y));
            }
        }
        // odometer, last coordinate fastest
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            if k[j] < m[j] {
                k[j] += 1;
                break;
            }
            k[j] = -m[j];
        }
    }
}

/// Builds the surrogate for `family` with gradient error `xi`; `alpha_beta`
/// is the `(alpha, beta)` the surrogate pieces certify (`beta` is their
/// curvature). The family must declare `beta_prime`.
pub fn build_piecewise_approx(
    family: &LossFamily,
    xi: f64,
    alpha_beta: (f64, f64),
    opts: ApproxOptions,
) -> Result<PiecewiseQuadraticApprox> {
    let (alpha, beta) = alpha_beta;
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::invalid("xi", "must be positive"));
    }
    if !(beta > 0.0 && beta.is_finite() && (0.0..=beta).contains(&alpha)) {
        return Err(Error::invalid("alpha_beta", "need 0 <= alpha <= beta, beta > 0"));
    }
    let beta_prime = family.constants().require("beta_prime")?;
    let spacing = xi / (beta + beta_prime);
    let anchors = anchor_lattice(family.domain(), spacing, opts.cap)?;
    let q = family.model().piece_count();
    let r = family.domain().bounding_radius();
    let d = family.dim() as i32;
    Ok(PiecewiseQuadraticApprox {
        family: family.clone(),
        anchors,
        smooth_pieces: q,
        alpha,
        beta,
        beta_prime,
        xi,
        spacing,
        piece_bound: q as f64 * (3.0 * (beta + beta_prime) * r / xi).powi(d),
    })
}

/// All `(nP)^T` compositions of `g_{i,p}(theta) = theta - eta grad h_p(theta; z_i)`
/// (projected when `map` projects) from the origin.
pub fn enumerate_piecewise_cover(
    approx: &PiecewiseQuadraticApprox,
    map: &UpdateMap,
    data: &Dataset,
    horizon: usize,
    cap: u128,
) -> Result<CoverSet> {
    let eta = map
        .eta()
        .ok_or_else(|| Error::invalid("map", "piecewise covers need an SGD map"))?;
    let p = approx.piece_count();
    let n = data.len();
    super::checked_count(n * p, horizon, cap)?;
    let pieces: Vec<QuadraticPiece> = data
        .samples
        .iter()
        .map(|z| approx.pieces_for(z))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let anchor = super::cover_anchor(map);
    let points = enumerate_compositions(anchor.coords(), n * p, horizon, cap, |x, c| {
        let h = &pieces[c];
        let g = h.grad(x);
        let mut y: Vec<f64> = x.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surrogate update"));
        }
        if map.project {
            map.domain.project_in_place(&mut y);
        }
        Ok(y)
    })?;
    Ok(CoverSet::from_points(anchor, n, Some(p), horizon, points))
}

/// Like [`super::verify_cover`] for a piecewise cover: trajectories run the
/// true SGD map and are matched to the entry built from their last `T`
/// (index, piece) choices.
pub fn verify_piecewise_cover(
    cover: &CoverSet,
    approx: &PiecewiseQuadraticApprox,
    map: &UpdateMap,
    data: &Dataset,
    cfg: &VerifyConfig,
) -> Result<CoverReport> {
    let p = approx.piece_count();
    if cover.pieces != Some(p) || cover.n != data.len() {
        return Err(Error::invalid("cover", "built for a different approximation or dataset"));
    }
    run_verification(cover, map, data, cfg, |x, i| {
        let z = data.get(i)?;
        let piece = approx.piece_id(x, z)?;
        Ok((map.apply_raw(x, &[i], data)?, i * p + piece))
    })
}
