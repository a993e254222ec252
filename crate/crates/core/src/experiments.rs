//! Empirical checks of the certificates: generalization gaps, bound
//! validity under resampling, the EM view of soft K-means, the stability
//! counterexample and Hoeffding's inequality.
//!
//! Every routine is deterministic given its seed; parallel work is collected
//! in task order.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{bound_strongly_convex, BoundCertificate};
use crate::data::{Dataset, Sample, SampleGenerator};
use crate::domain::{hoeffding_tail, sq_dist, ParamPoint};
use crate::error::{Error, Result};
use crate::losses::{self, LossFamily};
use crate::rng;
use crate::sgd::{contraction_factor, run_endpoint, Trajectory, UpdateMap};

/// Running mean and variance (Welford). A constant sequence has an exact
/// mean.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn standard_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

fn mean_loss(family: &LossFamily, theta: &ParamPoint, samples: &[Sample]) -> Result<f64> {
    let mut m = Moments::default();
    for z in samples {
        m.push(family.value(theta, z)?);
    }
    Ok(m.mean)
}

/// Hex SHA-256 of the index sequence (little-endian `u64`s).
pub fn indices_digest(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub empirical_risk: f64,
    /// `None` when the dataset carries no generator.
    pub population_risk: Option<f64>,
    /// `empirical_risk - population_risk`.
    pub gap: Option<f64>,
    pub mc_standard_error: f64,
    /// Population risk computed by enumerating a finite support.
    pub exact: bool,
    pub draws: usize,
    pub t: usize,
    pub seed: u64,
    pub indices_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Gap `F_hat - F` at the trajectory endpoint. `F` is exact on a finite
/// support, otherwise the mean of `m` fresh draws (stream 3 of `seed`).
pub fn estimate_gap(
    family: &LossFamily,
    dataset: &Dataset,
    trajectory: &Trajectory,
    m: usize,
    seed: u64,
) -> Result<GapEstimate> {
    let theta = trajectory.last();
    let empirical_risk = mean_loss(family, theta, &dataset.samples)?;
    let mut est = GapEstimate {
        empirical_risk,
        population_risk: None,
        gap: None,
        mc_standard_error: 0.0,
        exact: false,
        draws: 0,
        t: trajectory.steps(),
        seed,
        indices_digest: indices_digest(&trajectory.indices),
        flags: vec![],
    };
    let Some(gen) = &dataset.generator else {
        est.flags.push("no generator: population risk unavailable".into());
        return Ok(est);
    };
    let population = if let Some(support) = gen.finite_support() {
        est.exact = true;
        est.draws = support.len();
        mean_loss(family, theta, support)?
    } else {
        if m == 0 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        let mut r = rng::stream(seed, 3);
        let mut mo = Moments::default();
        for _ in 0..m {
            mo.push(family.value(theta, &gen.draw(&mut r))?);
        }
        est.draws = m;
        est.mc_standard_error = mo.standard_error();
        mo.mean
    };
    est.population_risk = Some(population);
    est.gap = Some(empirical_risk - population);
    Ok(est)
}

/// The strongly convex scenario: quadratic losses centered at a finite,
/// uniformly weighted support in the ball, and projected SGD
/// with step `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationScenario {
    pub n: usize,
    pub eta: f64,
    pub support_size: usize,
    pub dim: usize,
    pub radius: f64,
    pub delta: f64,
    pub resamplings: usize,
    /// Trajectories per resampled dataset.
    pub trials: usize,
    /// Stopping times are drawn uniformly from `[T, T + band]`.
    pub band: usize,
    /// Multiplies the certificate; below 1 gives a negative control.
    pub certificate_scale: f64,
    pub seed: u64,
}

impl Default for ValidationScenario {
    fn default() -> Self {
        ValidationScenario {
            n: 200,
            eta: 0.5,
            support_size: 20,
            dim: 2,
            radius: 1.0,
            delta: 0.05,
            resamplings: 500,
            trials: 100,
            band: 50,
            certificate_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingRow {
    pub resampling: usize,
    pub max_gap: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: ValidationScenario,
    pub certificate: BoundCertificate,
    /// `certificate.total * certificate_scale`.
    pub threshold: f64,
    pub resamplings: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub max_observed_gap: f64,
    pub pass: bool,
    pub rows: Vec<ResamplingRow>,
}

impl ValidationReport {
    /// One row per resampling.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Resamples datasets, runs trajectories from random starts to random
/// `t >= T`, and counts resamplings whose largest `|gap|` exceeds the scaled
/// certificate. Passes iff the violating fraction is at most `delta`.
pub fn validate_bound(scenario: &ValidationScenario) -> Result<ValidationReport> {
    let sc = scenario;
    if sc.resamplings == 0 || sc.trials == 0 || sc.support_size == 0 || sc.dim == 0 {
        return Err(Error::invalid("scenario", "counts must be positive"));
    }
    if !(sc.certificate_scale > 0.0) {
        return Err(Error::invalid("certificate_scale", "must be positive"));
    }
    let mut sr = rng::stream(sc.seed, 10);
    let support: Vec<ParamPoint> = (0..sc.support_size)
        .map(|_| crate::domain::ConvexDomain::centered_ball(sc.dim, sc.radius)?.sample(&mut sr))
        .collect::<Result<_>>()?;
    let family = losses::quadratic_centers(&support, sc.radius)?;
    let c = family.constants();
    let (alpha, beta) = (c.require("alpha")?, c.require("beta")?);
    if !(sc.eta > 0.0 && sc.eta < 2.0 / beta) {
        return Err(Error::Hypothesis(format!(
            "step {} outside (0, 2/beta) = (0, {})",
            sc.eta,
            2.0 / beta
        )));
    }
    let gamma = contraction_factor(alpha, beta, sc.eta)?;
    let certificate = bound_strongly_convex(sc.n, sc.delta, c.require("B")?, c.require("L")?, c.require("R")?, gamma)?;
    let horizon = certificate.inputs.T.unwrap_or(0);
    let threshold = certificate.total * sc.certificate_scale;

    let generator = SampleGenerator::Finite {
        support: support.iter().cloned().map(Sample::Point).collect(),
    };
    let support_samples = generator.finite_support().unwrap_or(&[]).to_vec();
    let map = UpdateMap::sgd(&family, sc.eta)?;
    let domain = family.domain().clone();

    let rows = (0..sc.resamplings)
        .into_par_iter()
        .map(|r| -> Result<ResamplingRow> {
            let mut dr = rng::substream(sc.seed, r as u64, 0);
            let data = Dataset::generate_with(&generator, sc.n, &mut dr)?;
            let mut max_gap: f64 = 0.0;
            for k in 0..sc.trials {
                let mut tr = rng::substream(sc.seed, r as u64, k as u64 + 1);
                let init = domain.sample(&mut tr)?;
                let t = horizon + tr.random_range(0..=sc.band);
                let idx: Vec<usize> = (0..t).map(|_| tr.random_range(0..sc.n)).collect();
                let end = ParamPoint::from_vec_unchecked(run_endpoint(&map, init.coords(), &idx, 1, &data)?);
                let fh = mean_loss(&family, &end, &data.samples)?;
                let f = mean_loss(&family, &end, &support_samples)?;
                max_gap = max_gap.max((fh - f).abs());
            }
            Ok(ResamplingRow {
                resampling: r,
                max_gap,
                violated: max_gap > threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let violations = rows.iter().filter(|r| r.violated).count();
    let violation_fraction = violations as f64 / sc.resamplings as f64;
    Ok(ValidationReport {
        scenario: sc.clone(),
        certificate,
        threshold,
        resamplings: sc.resamplings,
        violations,
        violation_fraction,
        max_observed_gap: rows.iter().map(|r| r.max_gap).fold(0.0, f64::max),
        pass: violation_fraction <= sc.delta,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmStep {
    /// `weights[i][j]`: responsibility of center `j` for sample `i`.
    pub weights: Vec<Vec<f64>>,
    pub theta: Vec<ParamPoint>,
    /// Centers whose total weight underflowed; they are left in place.
    pub held_fixed: Vec<usize>,
}

fn point_samples(dataset: &Dataset, dim: usize) -> Result<Vec<&[f64]>> {
    dataset
        .samples
        .iter()
        .map(|z| {
            let p = z.as_point()?;
            p.check_dim(dim)?;
            Ok(p.coords())
        })
        .collect()
}

fn check_centers(theta: &[ParamPoint]) -> Result<usize> {
    let d = theta
        .first()
        .map(ParamPoint::dim)
        .ok_or_else(|| Error::invalid("theta", "need at least one center"))?;
    for t in theta {
        t.check_dim(d)?;
    }
    Ok(d)
}

/// `(log sum_j exp(a_j), softmax(a))`.
fn log_softmax(a: &[f64]) -> (f64, Vec<f64>) {
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (m + s.ln(), e.iter().map(|v| v / s).collect())
}

/// One alternating update: responsibilities
/// `w_ij ∝ exp(-zeta |theta_j - z_i|^2)`, then weighted means.
pub fn em_step(theta: &[ParamPoint], dataset: &Dataset, zeta: f64) -> Result<EmStep> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::invalid("zeta", "must be positive"));
    }
    let d = check_centers(theta)?;
    let zs = point_samples(dataset, d)?;
    let weights: Vec<Vec<f64>> = zs
        .iter()
        .map(|z| {
            let a: Vec<f64> = theta.iter().map(|t| -zeta * sq_dist(t.coords(), z)).collect();
            log_softmax(&a).1
        })
        .collect();
    let mut new = Vec::with_capacity(theta.len());
    let mut held_fixed = Vec::new();
    for (j, t) in theta.iter().enumerate() {
        let total: f64 = weights.iter().map(|w| w[j]).sum();
        if total <= f64::MIN_POSITIVE {
            held_fixed.push(j);
            new.push(t.clone());
            continue;
        }
        let mut c = vec![0.0; d];
        for (w, z) in weights.iter().zip(&zs) {
            for (ck, zk) in c.iter_mut().zip(z.iter()) {
                *ck += w[j] * zk;
            }
        }
        c.iter_mut().for_each(|v| *v /= total);
        new.push(ParamPoint::new(c)?);
    }
    Ok(EmStep {
        weights,
        theta: new,
        held_fixed,
    })
}

/// Iterates [`em_step`] until no center moves more than `tol`.
pub fn run_em(
    theta: &[ParamPoint],
    dataset: &Dataset,
    zeta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(Vec<ParamPoint>, usize, bool)> {
    let mut cur = theta.to_vec();
    for it in 1..=max_iter {
        let next = em_step(&cur, dataset, zeta)?.theta;
        let moved = cur
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a.coords(), b.coords()).sqrt())
            .fold(0.0, f64::max);
        cur = next;
        if moved <= tol {
            return Ok((cur, it, true));
        }
    }
    Ok((cur, max_iter, false))
}

/// Soft K-means family large enough to contain `theta` and the data.
fn enclosing_soft_kmeans(theta: &[ParamPoint], zs: &[&[f64]], zeta: f64) -> Result<LossFamily> {
    let r = theta
        .iter()
        .map(|t| t.norm())
        .chain(zs.iter().map(|z| crate::domain::norm(z)))
        .fold(1e-12, f64::max);
    losses::soft_kmeans(theta.len(), zeta, r * (1.0 + 1e-9), theta[0].dim())
}

fn flatten(theta: &[ParamPoint]) -> ParamPoint {
    ParamPoint::from_vec_unchecked(theta.iter().flat_map(|t| t.coords().to_vec()).collect())
}

/// Gradient of the soft K-means empirical risk at `theta`.
pub fn soft_kmeans_gradient(theta: &[ParamPoint], dataset: &Dataset, zeta: f64) -> Result<Vec<f64>> {
    let d = check_centers(theta)?;
    let zs = point_samples(dataset, d)?;
    let fam = enclosing_soft_kmeans(theta, &zs, zeta)?;
    let flat = flatten(theta);
    let mut g = vec![0.0; flat.dim()];
    for z in &dataset.samples {
        for (gi, v) in g.iter_mut().zip(fam.gradient(&flat, z)?.coords()) {
            *gi += v;
        }
    }
    let n = dataset.len() as f64;
    Ok(g.into_iter().map(|v| v / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmEquivalenceReport {
    /// `sum_i log((1/K)(zeta/pi)^{d/2} sum_j exp(-zeta |theta_j - z_i|^2))`.
    pub gmm_log_likelihood: f64,
    /// Soft K-means empirical risk.
    pub empirical_risk: f64,
    /// `-zeta n F_hat + n log((zeta/pi)^{d/2} / K)`.
    pub predicted: f64,
    pub relative_residual: f64,
    /// Residual of the map `x -> -nKx + log((zeta/pi)^{d/2}/K)` on the risk,
    /// kept for comparison; it does not hold in general.
    pub alternative_transform_residual: f64,
    pub pass: bool,
}

/// Checks that the isotropic Gaussian-mixture log-likelihood is an affine
/// function of the soft K-means empirical risk.
pub fn verify_em_equivalence(theta: &[ParamPoint], dataset: &Dataset, zeta: f64) -> Result<EmEquivalenceReport> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::invalid("zeta", "must be positive"));
    }
    let d = check_centers(theta)?;
    let zs = point_samples(dataset, d)?;
    let k = theta.len() as f64;
    let n = zs.len() as f64;
    let log_norm = 0.5 * d as f64 * (zeta / std::f64::consts::PI).ln() - k.ln();
    let gmm: f64 = zs
        .iter()
        .map(|z| {
            let a: Vec<f64> = theta.iter().map(|t| -zeta * sq_dist(t.coords(), z)).collect();
            log_norm + log_softmax(&a).0
        })
        .sum();
    let fam = enclosing_soft_kmeans(theta, &zs, zeta)?;
    let risk = fam.empirical_risk(&flatten(theta), &dataset.samples)?;
    let predicted = -zeta * n * risk + n * log_norm;
    let scale = gmm.abs().max(predicted.abs()).max(1e-300);
    let relative_residual = (gmm - predicted).abs() / scale;
    let alt = -n * k * risk + log_norm;
    Ok(EmEquivalenceReport {
        gmm_log_likelihood: gmm,
        empirical_risk: risk,
        predicted,
        relative_residual,
        alternative_transform_residual: (gmm - alt).abs() / scale,
        pass: relative_residual <= 1e-8,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eta: f64,
    pub n: usize,
    pub inits: usize,
    pub steps: usize,
    pub seed: u64,
    /// Mean of `f(theta_t; 1)` on the all-zero dataset.
    pub mean_loss_s: f64,
    /// The same on the dataset whose first sample is flipped to 1.
    pub mean_loss_s_prime: f64,
    pub difference: f64,
    /// Runs ending within `1e-6` of a fixed point (1 or 3).
    pub converged_s: usize,
    pub converged_s_prime: usize,
    /// Deterministic starts in `[0, 2]` reach 1 and starts in `(2, 4]` reach 3.
    pub basin_check: bool,
}

fn near_fixed_point(x: f64) -> bool {
    (x - 1.0).abs() <= 1e-6 || (x - 3.0).abs() <= 1e-6
}

/// SGD on the one-dimensional counterexample from `Unif[0, 4]` starts on
/// two datasets of size `n` differing in one sample.
pub fn stability_experiment(eta: f64, n: usize, inits: usize, steps: usize, seed: u64) -> Result<StabilityReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta", "must lie in (0, 1)"));
    }
    if n == 0 || inits == 0 {
        return Err(Error::invalid("n/inits", "must be positive"));
    }
    let family = losses::stability_counterexample_1d();
    let map = UpdateMap::sgd(&family, eta)?;
    let s = Dataset::new(vec![Sample::Scalar(0.0); n])?;
    let mut flipped = vec![Sample::Scalar(0.0); n];
    flipped[0] = Sample::Scalar(1.0);
    let s_prime = Dataset::new(flipped)?;
    let one = Sample::Scalar(1.0);

    let ends = (0..inits)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let x0: f64 = rng::substream(seed, i as u64, 0).random_range(0.0..=4.0);
            let mut ir = rng::substream(seed, i as u64, 1);
            let idx: Vec<usize> = (0..steps).map(|_| ir.random_range(0..n)).collect();
            let a = run_endpoint(&map, &[x0], &idx, 1, &s)?[0];
            let b = run_endpoint(&map, &[x0], &idx, 1, &s_prime)?[0];
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ms = Moments::default();
    let mut mp = Moments::default();
    for (a, b) in &ends {
        ms.push(family.value(&ParamPoint::from_vec_unchecked(vec![*a]), &one)?);
        mp.push(family.value(&ParamPoint::from_vec_unchecked(vec![*b]), &one)?);
    }

    let zeros = vec![0; steps.max(200)];
    let mut basin_check = true;
    for k in 0..=40 {
        let x0 = 0.1 * k as f64;
        let x = run_endpoint(&map, &[x0], &zeros, 1, &s)?[0];
        let target = if x0 <= 2.0 { 1.0 } else { 3.0 };
        basin_check &= (x - target).abs() <= 1e-6;
    }

    Ok(StabilityReport {
        eta,
        n,
        inits,
        steps,
        seed,
        mean_loss_s: ms.mean,
        mean_loss_s_prime: mp.mean,
        difference: ms.mean - mp.mean,
        converged_s: ends.iter().filter(|e| near_fixed_point(e.0)).count(),
        converged_s_prime: ends.iter().filter(|e| near_fixed_point(e.1)).count(),
        basin_check,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingCell {
    pub n: usize,
    pub epsilon: f64,
    pub violations: usize,
    pub rate: f64,
    pub bound: f64,
    /// `bound + 3 sqrt(bound (1 - bound) / resamplings)`.
    pub allowance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingReport {
    pub mean: f64,
    pub mean_exact: bool,
    pub range_width: f64,
    pub resamplings: usize,
    pub cells: Vec<HoeffdingCell>,
    pub pass: bool,
}

/// Empirical frequency of `|(1/n) sum f(theta; z_i) - E f(theta; Z)| >= eps`
/// against the Hoeffding tail, with range width the family's `B`.
///
/// The mean is exact on a finite support and otherwise estimated from
/// `10^6` draws.
pub fn hoeffding_check(
    family: &LossFamily,
    generator: &SampleGenerator,
    theta: &ParamPoint,
    n_grid: &[usize],
    epsilon_grid: &[f64],
    resamplings: usize,
    seed: u64,
) -> Result<HoeffdingReport> {
    generator.validate()?;
    theta.check_dim(family.dim())?;
    if epsilon_grid.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::invalid("epsilon", "must be nonnegative"));
    }
    if resamplings == 0 || n_grid.contains(&0) {
        return Err(Error::invalid("grid", "sizes must be positive"));
    }
    let range_width = family.constants().require("B")?;
    let (mean, mean_exact) = match generator.finite_support() {
        Some(s) => (mean_loss(family, theta, s)?, true),
        None => {
            let mut r = rng::stream(seed, 4);
            let mut m = Moments::default();
            for _ in 0..1_000_000 {
                m.push(family.value(theta, &generator.draw(&mut r))?);
            }
            (m.mean, false)
        }
    };
    let mut cells = Vec::new();
    for (a, &n) in n_grid.iter().enumerate() {
        let devs = (0..resamplings)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let mut g = rng::substream(seed, a as u64, r as u64);
                let mut s = 0.0;
                for _ in 0..n {
                    s += family.value(theta, &generator.draw(&mut g))?;
                }
                Ok((s / n as f64 - mean).abs())
            })
            .collect::<Result<Vec<_>>>()?;
        for &epsilon in epsilon_grid {
            let violations = devs.iter().filter(|&&d| d >= epsilon).count();
            let rate = violations as f64 / resamplings as f64;
            // eps = 0 makes the statement vacuous
            let bound = if epsilon == 0.0 {
                1.0
            } else {
                hoeffding_tail(n, epsilon, range_width)?
            };
            let allowance = bound + 3.0 * (bound * (1.0 - bound) / resamplings as f64).sqrt();
            cells.push(HoeffdingCell {
                n,
                epsilon,
                violations,
                rate,
                bound,
                allowance,
                pass: rate <= allowance,
            });
        }
    }
    let pass = cells.iter().all(|c| c.pass);
    Ok(HoeffdingReport {
        mean,
        mean_exact,
        range_width,
        resamplings,
        cells,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgd::{run_trajectory, IndexSource, SgdConfig};

    fn p(v: &[f64]) -> ParamPoint {
        ParamPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn gap_vanishes_for_sample_free_loss() {
        let fam = losses::sin_cos(1.0).unwrap();
        let gen = SampleGenerator::UniformBall { dim: 2, radius: 1.0 };
        let data = Dataset::generate(&gen, 30, 1).unwrap();
        let map = UpdateMap::sgd(&fam, 0.1).unwrap();
        let cfg = SgdConfig::new(0.1, p(&[0.3, -0.2]), 10, IndexSource::Uniform { seed: 2 });
        let tr = run_trajectory(&map, &cfg, &data).unwrap();
        let g = estimate_gap(&fam, &data, &tr, 1000, 3).unwrap();
        assert_eq!(g.gap, Some(0.0));
        assert_eq!(g.mc_standard_error, 0.0);
        assert_eq!(g.t, 10);
        assert_eq!(g.indices_digest.len(), 64);
    }

    #[test]
    fn gap_oracle_agrees_with_monte_carlo() {
        let centers = vec![p(&[0.5, 0.0]), p(&[-0.3, 0.4]), p(&[0.0, -0.9]), p(&[0.2, 0.2])];
        let fam = losses::quadratic_centers(&centers, 1.0).unwrap();
        let support: Vec<Sample> = centers.iter().cloned().map(Sample::Point).collect();
        let finite = SampleGenerator::Finite { support };
        let data = Dataset::generate(&finite, 4, 5).unwrap();
        let map = UpdateMap::sgd(&fam, 0.5).unwrap();
        let cfg = SgdConfig::new(0.5, p(&[0.1, 0.1]), 5, IndexSource::Uniform { seed: 6 });
        let tr = run_trajectory(&map, &cfg, &data).unwrap();
        let exact = estimate_gap(&fam, &data, &tr, 0, 7).unwrap();
        assert!(exact.exact);
        // closed form: average of 1/2 |theta - c|^2 over the centers
        let th = tr.last();
        let oracle: f64 = centers.iter().map(|c| 0.5 * sq_dist(th.coords(), c.coords())).sum::<f64>() / 4.0;
        assert!((exact.population_risk.unwrap() - oracle).abs() < 1e-15);

        // the same distribution seen as a black box
        let clusters = SampleGenerator::GaussianClusters {
            centers: centers.clone(),
            sigma: 0.0,
            radius: 1.0,
        };
        let black = data.clone().with_generator(clusters);
        let mc = estimate_gap(&fam, &black, &tr, 20_000, 8).unwrap();
        assert!(!mc.exact);
        let diff = (mc.population_risk.unwrap() - oracle).abs();
        assert!(diff <= 3.0 * mc.mc_standard_error, "{diff} vs {}", mc.mc_standard_error);

        let mc4 = estimate_gap(&fam, &black, &tr, 80_000, 8).unwrap();
        let ratio = mc4.mc_standard_error / mc.mc_standard_error;
        assert!((ratio - 0.5).abs() <= 0.1, "{ratio}");
    }

    #[test]
    fn gap_without_generator_is_flagged() {
        let fam = losses::sin_cos(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Scalar(0.0)]).unwrap();
        let tr = Trajectory {
            points: vec![p(&[0.0, 0.0])],
            indices: vec![],
            batch_size: 1,
        };
        let g = estimate_gap(&fam, &data, &tr, 10, 0).unwrap();
        assert!(g.population_risk.is_none() && !g.flags.is_empty());
    }

    #[test]
    fn validation_small_scale() {
        let sc = ValidationScenario {
            resamplings: 20,
            trials: 10,
            seed: 3,
            ..Default::default()
        };
        let a = validate_bound(&sc).unwrap();
        assert_eq!(a.violations, 0);
        assert!(a.pass);
        let b = validate_bound(&sc).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let vacuous = validate_bound(&ValidationScenario {
            delta: 1.0,
            certificate_scale: 1e-6,
            ..sc.clone()
        })
        .unwrap();
        assert!(vacuous.pass);
        let bad = ValidationScenario { eta: 2.5, ..sc };
        assert!(matches!(validate_bound(&bad), Err(Error::Hypothesis(_))));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("resampling,max_gap,violated\n0,"));
    }

    #[test]
    fn em_examples() {
        let data = Dataset::new(vec![
            Sample::point(vec![1.0, 2.0]).unwrap(),
            Sample::point(vec![3.0, -1.0]).unwrap(),
            Sample::point(vec![-1.0, 0.5]).unwrap(),
        ])
        .unwrap();
        let step = em_step(&[p(&[7.0, 7.0])], &data, 0.3).unwrap();
        assert!((step.theta[0].coords()[0] - 1.0).abs() < 1e-15);
        assert!((step.theta[0].coords()[1] - 0.5).abs() < 1e-15);

        let sym = Dataset::new(vec![
            Sample::point(vec![-1.0]).unwrap(),
            Sample::point(vec![-0.8]).unwrap(),
            Sample::point(vec![0.8]).unwrap(),
            Sample::point(vec![1.0]).unwrap(),
        ])
        .unwrap();
        let s = em_step(&[p(&[-0.5]), p(&[0.5])], &sym, 2.0).unwrap();
        assert!((s.theta[0].coords()[0] + s.theta[1].coords()[0]).abs() < 1e-15);
        for row in &s.weights {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        let (fixed, _, ok) = run_em(&[p(&[-0.5]), p(&[0.5])], &sym, 2.0, 10_000, 1e-14).unwrap();
        assert!(ok);
        let g = soft_kmeans_gradient(&fixed, &sym, 2.0).unwrap();
        assert!(crate::domain::norm(&g) <= 1e-6);
    }

    #[test]
    fn em_equivalence_examples() {
        let data = Dataset::new(vec![Sample::point(vec![0.4]).unwrap()]).unwrap();
        let r = verify_em_equivalence(&[p(&[0.4])], &data, 2.0).unwrap();
        let expect = 0.5 * (2.0 / std::f64::consts::PI).ln();
        assert!((r.gmm_log_likelihood - expect).abs() < 1e-15);
        assert!(r.pass);

        let data = Dataset::new(vec![
            Sample::point(vec![0.1, 0.2]).unwrap(),
            Sample::point(vec![-0.5, 0.3]).unwrap(),
        ])
        .unwrap();
        let theta = [p(&[0.0, 0.1]), p(&[0.4, -0.4])];
        let mut shifts = Vec::new();
        for zeta in [0.5, 1.0, 2.0, 4.0] {
            let r = verify_em_equivalence(&theta, &data, zeta).unwrap();
            assert!(r.relative_residual <= 1e-8);
            shifts.push(r.gmm_log_likelihood - r.predicted);
        }
        assert!(shifts.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn stability_small_scale() {
        let r = stability_experiment(1.0 / 3.0, 10, 2000, 200, 11).unwrap();
        assert!(r.basin_check);
        assert!((r.mean_loss_s - 2.0).abs() < 0.2, "{}", r.mean_loss_s);
        assert!(r.mean_loss_s_prime.abs() < 0.05);
        assert!(r.difference >= 1.5);
        assert_eq!(r.converged_s, 2000);
        assert!(stability_experiment(1.0, 10, 10, 10, 0).is_err());
    }

    #[test]
    fn hoeffding_small_scale() {
        let centers = vec![p(&[1.0, 0.0]), p(&[-1.0, 0.0]), p(&[0.0, 0.5])];
        let fam = losses::quadratic_centers(&centers, 1.0).unwrap();
        let gen = SampleGenerator::Finite {
            support: centers.into_iter().map(Sample::Point).collect(),
        };
        let r = hoeffding_check(&fam, &gen, &p(&[0.2, 0.1]), &[10, 100], &[0.0, 0.6], 500, 4).unwrap();
        assert!(r.pass && r.mean_exact);
        assert_eq!(r.cells[0].bound, 1.0);
        assert_eq!(r.cells[0].rate, 1.0);
        assert!(r.cells[3].rate <= r.cells[1].rate);
    }
}
