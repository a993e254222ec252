//! Iterated function systems of similarities and their dimension.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{norm, sq_dist, ParamPoint};
use crate::error::{Error, Result};
use crate::rng;

/// Similarities `g_i(theta) = s theta + t_i` on the centered ball of radius
/// `radius`, with common ratio `gamma = |s|`.
///
/// SGD without projection on `1/2 |theta - c_i|^2` with step `eta` is the
/// case `s = 1 - eta`, `t_i = eta c_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsModel {
    pub scale: f64,
    pub translations: Vec<ParamPoint>,
    pub radius: f64,
}

impl IfsModel {
    pub fn new(scale: f64, translations: Vec<ParamPoint>, radius: f64) -> Result<Self> {
        let gamma = scale.abs();
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid("gamma", "ratio must lie in (0, 1)"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("R", "must be positive"));
        }
        let d = translations
            .first()
            .map(ParamPoint::dim)
            .ok_or_else(|| Error::invalid("maps", "need at least one map"))?;
        for t in &translations {
            t.check_dim(d)?;
        }
        Ok(IfsModel {
            scale,
            translations,
            radius,
        })
    }

    /// The SGD maps of quadratic losses centered at `centers` with step `eta`.
    pub fn quadratic(centers: &[ParamPoint], eta: f64, radius: f64) -> Result<Self> {
        let t = centers
            .iter()
            .map(|c| ParamPoint::new(c.coords().iter().map(|v| eta * v).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(1.0 - eta, t, radius)
    }

    pub fn gamma(&self) -> f64 {
        self.scale.abs()
    }

    pub fn len(&self) -> usize {
        self.translations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.translations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.translations[0].dim()
    }

    pub fn apply(&self, i: usize, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.translations[i].coords())
            .map(|(xi, ti)| self.scale * xi + ti)
            .collect()
    }

    /// Fixed point `t_i / (1 - s)` of map `i`.
    pub fn fixed_point(&self, i: usize) -> Vec<f64> {
        self.translations[i]
            .coords()
            .iter()
            .map(|t| t / (1.0 - self.scale))
            .collect()
    }

    /// Whether the images of the open ball are pairwise disjoint: the images
    /// are balls of radius `gamma R` centered at the translations.
    pub fn images_disjoint(&self) -> bool {
        let need = 2.0 * self.gamma() * self.radius;
        self.pairwise_min(|i| self.translations[i].coords().to_vec()) >= need * (1.0 - 1e-12)
    }

    /// The fixed-point criterion `|c_i - c_j| >= 2 gamma R`.
    pub fn fixed_points_separated(&self) -> bool {
        let need = 2.0 * self.gamma() * self.radius;
        self.pairwise_min(|i| self.fixed_point(i)) >= need * (1.0 - 1e-12)
    }

    fn pairwise_min(&self, f: impl Fn(usize) -> Vec<f64>) -> f64 {
        let pts: Vec<Vec<f64>> = (0..self.len()).map(f).collect();
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.min(sq_dist(&pts[i], &pts[j]).sqrt());
            }
        }
        best
    }

    /// Whether every map sends the ball into itself.
    pub fn maps_ball_into_itself(&self) -> bool {
        self.translations
            .iter()
            .all(|t| t.norm() + self.gamma() * self.radius <= self.radius * (1.0 + 1e-12))
    }

    /// Random-order orbit from the origin: `burn_in` discarded steps, then
    /// `count` recorded points.
    pub fn orbit(&self, count: usize, burn_in: usize, seed: u64) -> Vec<ParamPoint> {
        let mut r = rng::stream(seed, 2);
        let mut x = vec![0.0; self.dim()];
        let mut out = Vec::with_capacity(count);
        for k in 0..burn_in + count {
            x = self.apply(r.random_range(0..self.len()), &x);
            if k >= burn_in {
                out.push(ParamPoint::from_vec_unchecked(x.clone()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsDimension {
    /// `log n / log(1/gamma)`.
    pub d_h: f64,
    pub gamma: f64,
    pub maps: usize,
    /// Images of the open ball pairwise disjoint; the value is certified.
    pub separated: bool,
    /// The fixed-point distance criterion; it does not imply `separated`.
    pub fixed_point_criterion: bool,
    pub warning: Option<String>,
}

/// Similarity dimension of the attractor. The value is returned even when
/// the separation check fails, with a warning.
pub fn ifs_dimension(model: &IfsModel) -> IfsDimension {
    let n = model.len();
    let gamma = model.gamma();
    let d_h = if n <= 1 { 0.0 } else { (n as f64).ln() / (1.0 / gamma).ln() };
    let separated = n <= 1 || model.images_disjoint();
    let fixed_point_criterion = n <= 1 || model.fixed_points_separated();
    let warning = (!separated).then(|| {
        "images of the ball overlap; the dimension formula is not certified".to_string()
    });
    IfsDimension {
        d_h,
        gamma,
        maps: n,
        separated,
        fixed_point_criterion,
        warning,
    }
}

const GRID_SHIFTS: usize = 8;

/// Least-squares slope of `log N(s)` against `log(1/s)`, where `N(s)` is the
/// number of occupied grid cells of side `s`, averaged over grids anchored
/// at the coordinate-wise minimum and shifted diagonally by `k s / 8`.
///
/// A single anchored grid is biased on self-similar sets: points just past
/// a cell edge spill into a neighbour at some scales and not others.
///
/// A set of identical points has dimension 0.
pub fn box_counting_dimension(points: &[ParamPoint], scales: &[f64]) -> Result<f64> {
    if points.len() < 1000 {
        return Err(Error::invalid("points", "need at least 1000 points"));
    }
    if scales.len() < 4 || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("scales", "need at least 4 positive scales"));
    }
    let smin = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = scales.iter().cloned().fold(0.0, f64::max);
    if smax / smin < 100.0 * (1.0 - 1e-12) {
        return Err(Error::invalid("scales", "must span at least two decades"));
    }
    let d = points[0].dim();
    for p in points {
        p.check_dim(d)?;
    }
    let lo: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p.coords()[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let spread = points
        .iter()
        .map(|p| {
            let diff: Vec<f64> = p.coords().iter().zip(&lo).map(|(a, b)| a - b).collect();
            norm(&diff)
        })
        .fold(0.0, f64::max);
    if spread == 0.0 {
        return Ok(0.0);
    }
    let xs: Vec<f64> = scales.iter().map(|s| (1.0 / s).ln()).collect();
    let ys: Vec<f64> = scales
        .iter()
        .map(|s| {
            let total: usize = (0..GRID_SHIFTS)
                .map(|k| {
                    let shift = k as f64 / GRID_SHIFTS as f64;
                    let cells: HashSet<Vec<i64>> = points
                        .iter()
                        .map(|p| {
                            p.coords()
                                .iter()
                                .zip(&lo)
                                .map(|(x, l)| ((x - l) / s + shift).floor() as i64)
                                .collect()
                        })
                        .collect();
                    cells.len()
                })
                .sum();
            (total as f64 / GRID_SHIFTS as f64).ln()
        })
        .collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
