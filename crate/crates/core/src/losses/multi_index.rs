use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{LossConstants, LossFamily, LossModel};
use crate::data::Sample;
use crate::domain::{dot, ConvexDomain};
use crate::error::{Error, Result};

/// A link `l(u_1, ..., u_K; y)` together with its smoothness metadata.
///
/// Piecewise links report their pieces; smooth links keep the defaults.
pub trait Link: Send + Sync + fmt::Debug {
    fn arity(&self) -> usize;
    fn value(&self, u: &[f64], y: f64) -> Result<f64>;
    /// Gradient in `u`; the selected piece's gradient at kinks.
    fn gradient(&self, u: &[f64], y: f64) -> Result<Vec<f64>>;
    /// Per-piece smoothness in `u`.
    fn smoothness(&self) -> f64;

    fn piece_count(&self) -> usize {
        1
    }
    fn piece_of(&self, _u: &[f64], _y: f64) -> Result<usize> {
        Ok(0)
    }
    fn piece_value(&self, _q: usize, u: &[f64], y: f64) -> Result<f64> {
        self.value(u, y)
    }
    fn piece_gradient(&self, _q: usize, u: &[f64], y: f64) -> Result<Vec<f64>> {
        self.gradient(u, y)
    }

    /// `(L, B)`: Lipschitz constant in `theta` of the link term and its
    /// spread over samples, for parameters of block norm `<= r` and inputs
    /// of norm `<= r_x`.
    fn bounds(&self, r: f64, r_x: f64) -> (f64, f64);

    /// Whether the link is convex in `u` (then `lambda` is a strong
    /// convexity constant of the whole loss).
    fn convex(&self) -> bool {
        false
    }

    fn descriptor(&self) -> Option<LinkSpec> {
        None
    }
}

/// `l == 0`; the loss is the pure regularizer.
#[derive(Debug, Clone, Copy)]
pub struct ZeroLink {
    pub k: usize,
}

impl Link for ZeroLink {
    fn arity(&self) -> usize {
        self.k
    }
    fn value(&self, _u: &[f64], _y: f64) -> Result<f64> {
        Ok(0.0)
    }
    fn gradient(&self, u: &[f64], _y: f64) -> Result<Vec<f64>> {
        Ok(vec![0.0; u.len()])
    }
    fn smoothness(&self) -> f64 {
        0.0
    }
    fn bounds(&self, _r: f64, _r_x: f64) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn convex(&self) -> bool {
        true
    }
    fn descriptor(&self) -> Option<LinkSpec> {
        Some(LinkSpec::Zero)
    }
}

/// `1/2 (sum_j u_j - y)^2` with labels `|y| <= y_max`.
#[derive(Debug, Clone, Copy)]
pub struct LeastSquaresLink {
    pub k: usize,
    pub y_max: f64,
}

impl Link for LeastSquaresLink {
    fn arity(&self) -> usize {
        self.k
    }
    fn value(&self, u: &[f64], y: f64) -> Result<f64> {
        let r = u.iter().sum::<f64>() - y;
        Ok(0.5 * r * r)
    }
    fn gradient(&self, u: &[f64], y: f64) -> Result<Vec<f64>> {
        let r = u.iter().sum::<f64>() - y;
        Ok(vec![r; u.len()])
    }
    fn smoothness(&self) -> f64 {
        self.k as f64
    }
    fn bounds(&self, r: f64, r_x: f64) -> (f64, f64) {
        let k = self.k as f64;
        let m = k * r * r_x + self.y_max;
        (k.sqrt() * r_x * m, 0.5 * m * m)
    }
    fn convex(&self) -> bool {
        true
    }
    fn descriptor(&self) -> Option<LinkSpec> {
        Some(LinkSpec::LeastSquares { y_max: self.y_max })
    }
}

/// Multi-class margin link `max_{y' != y} rho(u_y - u_{y'})` with the
/// logistic `rho(t) = log(1 + e^{-t})`. Labels are class indices `0..K`.
/// Piece `q` is the competing class `y'`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothSvmLink {
    pub k: usize,
}

fn rho(t: f64) -> f64 {
    // log(1 + e^{-t}) without overflow
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

fn rho_prime(t: f64) -> f64 {
    // -1 / (1 + e^t)
    if t > 0.0 {
        let e = (-t).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + t.exp())
    }
}

impl SmoothSvmLink {
    fn class(&self, y: f64) -> Result<usize> {
        if y.fract() != 0.0 || y < 0.0 || y >= self.k as f64 {
            return Err(Error::SampleMismatch(format!(
                "label {y} is not a class index below {}",
                self.k
            )));
        }
        Ok(y as usize)
    }
}

impl Link for SmoothSvmLink {
    fn arity(&self) -> usize {
        self.k
    }
    fn value(&self, u: &[f64], y: f64) -> Result<f64> {
        let q = self.piece_of(u, y)?;
        self.piece_value(q, u, y)
    }
    fn gradient(&self, u: &[f64], y: f64) -> Result<Vec<f64>> {
        let q = self.piece_of(u, y)?;
        self.piece_gradient(q, u, y)
    }
    fn smoothness(&self) -> f64 {
        // rho'' <= 1/4 and the direction e_y - e_q has squared norm 2
        0.5
    }
    fn piece_count(&self) -> usize {
        self.k
    }
    /// rho is decreasing, so the maximizing competitor has the largest score;
    /// lowest index on ties.
    fn piece_of(&self, u: &[f64], y: f64) -> Result<usize> {
        let c = self.class(y)?;
        let mut best: Option<usize> = None;
        for j in (0..u.len()).filter(|&j| j != c) {
            if best.is_none_or(|b| u[j] > u[b]) {
                best = Some(j);
            }
        }
        best.ok_or_else(|| Error::invalid("K", "margin link needs at least two classes"))
    }
    fn piece_value(&self, q: usize, u: &[f64], y: f64) -> Result<f64> {
        let c = self.class(y)?;
        Ok(rho(u[c] - u[q]))
    }
    fn piece_gradient(&self, q: usize, u: &[f64], y: f64) -> Result<Vec<f64>> {
        let c = self.class(y)?;
        let mut g = vec![0.0; u.len()];
        if q != c {
            let d = rho_prime(u[c] - u[q]);
            g[c] = d;
            g[q] = -d;
        }
        Ok(g)
    }
    fn bounds(&self, r: f64, r_x: f64) -> (f64, f64) {
        let span = 2.0 * r * r_x;
        (2f64.sqrt() * r_x, rho(-span) - rho(span))
    }
    fn descriptor(&self) -> Option<LinkSpec> {
        Some(LinkSpec::SmoothSvm)
    }
}

fn default_y_max() -> f64 {
    1.0
}

/// JSON descriptor of a built-in link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinkSpec {
    Zero,
    LeastSquares {
        #[serde(default = "default_y_max")]
        y_max: f64,
    },
    SmoothSvm,
}

impl LinkSpec {
    pub fn build(&self, k: usize) -> Result<Arc<dyn Link>> {
        if k == 0 {
            return Err(Error::invalid("K", "must be positive"));
        }
        Ok(match self {
            LinkSpec::Zero => Arc::new(ZeroLink { k }),
            LinkSpec::LeastSquares { y_max } => {
                if !(*y_max >= 0.0 && y_max.is_finite()) {
                    return Err(Error::invalid("y_max", "must be nonnegative"));
                }
                Arc::new(LeastSquaresLink { k, y_max: *y_max })
            }
            LinkSpec::SmoothSvm => {
                if k < 2 {
                    return Err(Error::invalid("K", "margin link needs at least two classes"));
                }
                Arc::new(SmoothSvmLink { k })
            }
        })
    }
}

/// `l(theta_1.x, ..., theta_K.x; y) + lambda/2 sum_j |theta_j|^2`.
#[derive(Debug, Clone)]
pub struct MultiIndex {
    link: Arc<dyn Link>,
    lambda: f64,
    input_radius: f64,
    block_dim: usize,
}

impl MultiIndex {
    fn split<'a>(&self, z: &'a Sample) -> Result<(f64, &'a [f64])> {
        let (y, x) = z.as_labeled()?;
        x.check_dim(self.block_dim)?;
        if x.norm() > self.input_radius * (1.0 + 1e-12) {
            return Err(Error::SampleMismatch(format!(
                "input of norm {} exceeds R_x = {}",
                x.norm(),
                self.input_radius
            )));
        }
        Ok((y, x.coords()))
    }

    fn scores(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        theta.chunks(self.block_dim).map(|b| dot(b, x)).collect()
    }

    fn regularizer(&self, theta: &[f64]) -> f64 {
        0.5 * self.lambda * dot(theta, theta)
    }

    fn lift(&self, du: &[f64], theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut g = Vec::with_capacity(theta.len());
        for (block, dj) in theta.chunks(self.block_dim).zip(du) {
            g.extend(block.iter().zip(x).map(|(t, xi)| dj * xi + self.lambda * t));
        }
        g
    }
}

impl LossModel for MultiIndex {
    fn value(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        let (y, x) = self.split(z)?;
        Ok(self.link.value(&self.scores(theta, x), y)? + self.regularizer(theta))
    }

    fn gradient(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let (y, x) = self.split(z)?;
        let du = self.link.gradient(&self.scores(theta, x), y)?;
        Ok(self.lift(&du, theta, x))
    }

    fn piece_count(&self) -> usize {
        self.link.piece_count()
    }

    fn piece_of(&self, theta: &[f64], z: &Sample) -> Result<usize> {
        let (y, x) = self.split(z)?;
        self.link.piece_of(&self.scores(theta, x), y)
    }

    fn piece_value(&self, q: usize, theta: &[f64], z: &Sample) -> Result<f64> {
        let (y, x) = self.split(z)?;
        Ok(self.link.piece_value(q, &self.scores(theta, x), y)? + self.regularizer(theta))
    }

    fn piece_gradient(&self, q: usize, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let (y, x) = self.split(z)?;
        let du = self.link.piece_gradient(q, &self.scores(theta, x), y)?;
        Ok(self.lift(&du, theta, x))
    }

    fn check_sample(&self, z: &Sample) -> Result<()> {
        self.split(z).map(|_| ())
    }
}

pub(super) fn family(
    link: Arc<dyn Link>,
    lambda: f64,
    radius: f64,
    input_radius: f64,
    blocks: usize,
    block_dim: usize,
) -> Result<LossFamily> {
    if link.arity() != blocks {
        return Err(Error::DimensionMismatch {
            expected: blocks,
            got: link.arity(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", "must be nonnegative"));
    }
    if !(input_radius > 0.0 && input_radius.is_finite()) {
        return Err(Error::invalid("R_x", "must be positive"));
    }
    let (l, b) = link.bounds(radius, input_radius);
    // Hessian in theta is X^T H_l X + lambda I with |X| <= R_x
    let smooth = link.smoothness() * input_radius * input_radius + lambda;
    let constants = LossConstants {
        alpha: (link.convex() && smooth > 0.0).then_some(lambda),
        beta: (smooth > 0.0).then_some(smooth),
        beta_prime: Some(smooth),
        L: Some(l),
        B: Some(b),
        R: Some(radius),
        R_x: Some(input_radius),
        lambda: Some(lambda),
        K: Some(blocks),
        Q: Some(link.piece_count()),
        ..Default::default()
    };
    let model = MultiIndex {
        link,
        lambda,
        input_radius,
        block_dim,
    };
    LossFamily::new(
        "multi_index",
        constants,
        ConvexDomain::product_of_balls(blocks, block_dim, radius)?,
        true,
        Arc::new(model),
    )
}
