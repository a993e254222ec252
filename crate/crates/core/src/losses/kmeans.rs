use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{LossConstants, LossFamily, LossModel};
use crate::data::Sample;
use crate::domain::{sq_dist, ConvexDomain};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

fn check_center(z: &Sample, dim: usize, radius: f64) -> Result<()> {
    let p = z.as_point()?;
    p.check_dim(dim)?;
    if p.norm() > radius * (1.0 + 1e-12) {
        return Err(Error::SampleMismatch(format!(
            "sample of norm {} outside the ball of radius {radius}",
            p.norm()
        )));
    }
    Ok(())
}

fn sq_dists(theta: &[f64], z: &[f64], dim: usize) -> Vec<f64> {
    theta.chunks(dim).map(|b| sq_dist(b, z)).collect()
}

/// Soft assignment objective with sharpness `zeta`.
#[derive(Debug, Clone)]
pub struct SoftKMeans {
    pub k: usize,
    pub dim: usize,
    pub zeta: f64,
    pub radius: f64,
}

impl SoftKMeans {
    /// Softmax weights `w_j = exp(-zeta d_j) / sum_k exp(-zeta d_k)` and the
    /// log-sum-exp `log sum_j exp(-zeta d_j)`.
    pub fn weights(&self, theta: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
        let d = sq_dists(theta, z, self.dim);
        let m = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let e: Vec<f64> = d.iter().map(|dj| (-self.zeta * (dj - m)).exp()).collect();
        let s: f64 = e.iter().sum();
        let lse = -self.zeta * m + s.ln();
        (e.into_iter().map(|v| v / s).collect(), lse)
    }
}

impl LossModel for SoftKMeans {
    fn value(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        let p = z.as_point()?;
        p.check_dim(self.dim)?;
        let (_, lse) = self.weights(theta, p.coords());
        Ok(-lse / self.zeta)
    }

    fn gradient(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let p = z.as_point()?;
        p.check_dim(self.dim)?;
        let (w, _) = self.weights(theta, p.coords());
        let mut g = Vec::with_capacity(theta.len());
        for (block, wj) in theta.chunks(self.dim).zip(&w) {
            g.extend(block.iter().zip(p.coords()).map(|(t, c)| 2.0 * (t - c) * wj));
        }
        Ok(g)
    }

    fn check_sample(&self, z: &Sample) -> Result<()> {
        check_center(z, self.dim, self.radius)
    }
}

pub(super) fn soft_family(k: usize, zeta: f64, radius: f64, dim: usize) -> Result<LossFamily> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::invalid("zeta", "must be positive"));
    }
    if k == 0 || dim == 0 {
        return Err(Error::invalid("K", "K and d must be positive"));
    }
    let kf = k as f64;
    let b = 4.0 * (radius + 1.0).powi(2);
    let e = (zeta * b).exp();
    let constants = LossConstants {
        alpha: Some(2.0 / kf / e),
        beta: Some(2.0 / kf * e),
        beta_prime: Some(4.0 * zeta * b * e + 4.0 * zeta * b + 2.0),
        L: Some(4.0 * radius / kf.sqrt() * e),
        B: Some(b),
        R: Some(radius),
        zeta: Some(zeta),
        K: Some(k),
        Q: Some(1),
        ..Default::default()
    };
    LossFamily::new(
        "soft_kmeans",
        constants,
        ConvexDomain::product_of_balls(k, dim, radius)?,
        false,
        Arc::new(SoftKMeans {
            k,
            dim,
            zeta,
            radius,
        }),
    )
}

/// Which minimizing clusters receive gradient at ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// The smallest minimizing index.
    LowestIndex,
    /// Every minimizing index.
    FullSet,
    /// One minimizing index chosen by a seeded hash of `(theta, z)`, so the
    /// evaluator stays a pure function.
    RandomSingleton { seed: u64 },
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowest_index" => Ok(TieRule::LowestIndex),
            "full_set" => Ok(TieRule::FullSet),
            "random_singleton" => Ok(TieRule::RandomSingleton { seed: 0 }),
            other => match other.strip_prefix("random_singleton:") {
                Some(seed) => seed
                    .parse()
                    .map(|seed| TieRule::RandomSingleton { seed })
                    .map_err(|_| Error::Unknown {
                        kind: "tie rule",
                        name: other.to_string(),
                    }),
                None => Err(Error::Unknown {
                    kind: "tie rule",
                    name: other.to_string(),
                }),
            },
        }
    }
}

/// `min_j |theta_j - z|^2` with auxiliary gradient `2 (theta_j - z)` on the
/// selected minimizers and zero elsewhere.
#[derive(Debug, Clone)]
pub struct HardKMeans {
    pub k: usize,
    pub dim: usize,
    pub radius: f64,
    pub tie_rule: TieRule,
}

impl HardKMeans {
    /// The set `S` of blocks that receive gradient.
    pub fn selected(&self, theta: &[f64], z: &[f64]) -> Vec<usize> {
        let d = sq_dists(theta, z, self.dim);
        let m = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let argmin: Vec<usize> = (0..d.len()).filter(|&j| d[j] == m).collect();
        match self.tie_rule {
            TieRule::LowestIndex => vec![argmin[0]],
            TieRule::FullSet => argmin,
            TieRule::RandomSingleton { seed } => {
                if argmin.len() == 1 {
                    return argmin;
                }
                let h = theta
                    .iter()
                    .chain(z)
                    .fold(seed, |acc, v| derive_seed(acc, v.to_bits()));
                vec![argmin[(h % argmin.len() as u64) as usize]]
            }
        }
    }
}

impl LossModel for HardKMeans {
    fn value(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        let p = z.as_point()?;
        p.check_dim(self.dim)?;
        Ok(sq_dists(theta, p.coords(), self.dim)
            .into_iter()
            .fold(f64::INFINITY, f64::min))
    }

    fn gradient(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let p = z.as_point()?;
        p.check_dim(self.dim)?;
        let mut g = vec![0.0; theta.len()];
        for j in self.selected(theta, p.coords()) {
            let r = j * self.dim..(j + 1) * self.dim;
            for ((gi, t), c) in g[r.clone()].iter_mut().zip(&theta[r]).zip(p.coords()) {
                *gi = 2.0 * (t - c);
            }
        }
        Ok(g)
    }

    fn piece_count(&self) -> usize {
        self.k
    }

    fn piece_of(&self, theta: &[f64], z: &Sample) -> Result<usize> {
        let p = z.as_point()?;
        let d = sq_dists(theta, p.coords(), self.dim);
        let m = d.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(d.iter().position(|&v| v == m).unwrap_or(0))
    }

    fn piece_value(&self, q: usize, theta: &[f64], z: &Sample) -> Result<f64> {
        let p = z.as_point()?;
        Ok(sq_dist(&theta[q * self.dim..(q + 1) * self.dim], p.coords()))
    }

    fn piece_gradient(&self, q: usize, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let p = z.as_point()?;
        let mut g = vec![0.0; theta.len()];
        let r = q * self.dim..(q + 1) * self.dim;
        for ((gi, t), c) in g[r.clone()].iter_mut().zip(&theta[r]).zip(p.coords()) {
            *gi = 2.0 * (t - c);
        }
        Ok(g)
    }

    fn check_sample(&self, z: &Sample) -> Result<()> {
        check_center(z, self.dim, self.radius)
    }
}

pub(super) fn hard_family(k: usize, radius: f64, dim: usize, tie_rule: TieRule) -> Result<LossFamily> {
    if k == 0 || dim == 0 {
        return Err(Error::invalid("K", "K and d must be positive"));
    }
    let constants = LossConstants {
        alpha: Some(2.0),
        beta: Some(2.0),
        beta_prime: Some(2.0),
        L: Some(4.0 * radius),
        B: Some(4.0 * radius * radius),
        L_prime: Some(4.0 * radius),
        R: Some(radius),
        K: Some(k),
        Q: Some(k),
        ..Default::default()
    };
    LossFamily::new(
        "hard_kmeans",
        constants,
        ConvexDomain::product_of_balls(k, dim, radius)?,
        false,
        Arc::new(HardKMeans {
            k,
            dim,
            radius,
            tie_rule,
        }),
    )
}
