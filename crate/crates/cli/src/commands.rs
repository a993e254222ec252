//! One function per subcommand. Each returns the result document; writing
//! it out is left to `main`.

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sgd_cover::bounds::{self, BoundCertificate, TheoremId};
use sgd_cover::cover::{
    box_counting_dimension, build_piecewise_approx, cover_horizon, enumerate_cover, enumerate_piecewise_cover,
    ifs_dimension, verify_cover, verify_piecewise_cover, ApproxOptions, CoverReport, CoverSet, IfsModel, VerifyConfig,
    DEFAULT_CAP,
};
use sgd_cover::data::{Dataset, SampleGenerator};
use sgd_cover::domain::{ConvexDomain, ParamPoint};
use sgd_cover::experiments::{
    estimate_gap, hoeffding_check, run_em, stability_experiment, validate_bound, verify_em_equivalence,
    ValidationScenario,
};
use sgd_cover::losses::{self, LossFamily};
use sgd_cover::rng;
use sgd_cover::sgd::{contraction_factor, coupled_contraction_ratio, run_trajectory, IndexSource, SgdConfig, UpdateMap};

use crate::config::{usage, CliError, CliResult, Json, Status};
use crate::scenario::{domain_points, ScenarioArgs};

/// A tabular mirror of the result for `--format csv`.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub struct Outcome {
    pub status: Status,
    pub result: Value,
    pub table: Option<Table>,
    /// Human-readable rendering, when better than flattened key/values.
    pub text: Option<String>,
    /// Covers are written as JSON lines instead of one document.
    pub cover: Option<CoverSet>,
}

impl Outcome {
    fn new(status: Status, result: impl Serialize) -> CliResult<Self> {
        Ok(Outcome {
            status,
            result: serde_json::to_value(result)?,
            table: None,
            text: None,
            cover: None,
        })
    }
}

fn required<T: Copy>(v: Option<T>, flag: &str, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("{what} needs --{flag}")))
}

fn default_eta(family: &LossFamily) -> f64 {
    family.constants().beta.map(|b| 0.5 / b).unwrap_or(0.1)
}

/// The origin, projected into the family's domain.
fn origin(family: &LossFamily) -> CliResult<ParamPoint> {
    Ok(family.domain().project(&ParamPoint::zeros(family.dim()))?)
}

fn start_domain(family: &LossFamily) -> CliResult<ConvexDomain> {
    Ok(match family.domain() {
        ConvexDomain::WholeSpace { dim } => ConvexDomain::centered_ball(*dim, 1.0)?,
        d => d.clone(),
    })
}

fn cap_from_env() -> CliResult<Option<u128>> {
    match std::env::var("SGD_COVER_CAP") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("SGD_COVER_CAP: not a nonnegative integer: {s:?}"))),
        Err(_) => Ok(None),
    }
}

// ---------------------------------------------------------------- contract

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractParams {
    #[command(flatten)]
    #[serde(default)]
    pub scenario: ScenarioArgs,
    /// Step size (default 1/(2 beta)).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Coupled pairs of starting points.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Shared-index steps per pair.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Allowed excess of a ratio over the predicted factor.
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn contract(p: &ContractParams, seed: u64) -> CliResult<Outcome> {
    let sc = p.scenario.build(seed)?;
    let fam = &sc.family;
    let eta = p.eta.unwrap_or_else(|| default_eta(fam));
    let pairs = p.pairs.unwrap_or(100);
    let steps = p.steps.unwrap_or(3);
    let tol = p.tol.unwrap_or(1e-9);
    if pairs == 0 || steps == 0 {
        return usage("contract needs --pairs and --steps of at least 1");
    }
    let map = UpdateMap::sgd(fam, eta)?;
    let c = fam.constants();
    let predicted = match (c.alpha, c.beta) {
        (Some(a), Some(b)) if a > 0.0 => Some(contraction_factor(a, b, eta)?),
        _ => None,
    };
    let starts = start_domain(fam)?;
    let n = sc.dataset.len();
    let reports = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, 30, k as u64);
            let a = starts.sample(&mut r)?;
            let b = starts.sample(&mut r)?;
            let idx = IndexSource::Uniform {
                seed: rng::derive_seed(seed, 31 + k as u64),
            }
            .indices(n, steps)?;
            coupled_contraction_ratio(&map, &a, &b, &idx, &sc.dataset)
        })
        .collect::<sgd_cover::Result<Vec<_>>>()?;
    let ratios: Vec<f64> = reports.iter().flat_map(|r| r.ratios.iter().copied()).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let coalesced = reports.iter().filter(|r| r.coalesced_at.is_some()).count();
    let pass = predicted.map(|g| max_ratio <= g + tol);
    let status = pass.map(Status::from_pass).unwrap_or(Status::Ok);
    Outcome::new(
        status,
        json!({
            "eta": eta,
            "gamma_predicted": predicted,
            "max_ratio": max_ratio,
            "mean_ratio": mean_ratio,
            "pairs": pairs,
            "steps": steps,
            "coalesced_pairs": coalesced,
            "tol": tol,
            "pass": pass,
        }),
    )
}

// ------------------------------------------------------------------- cover

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct CoverParams {
    #[command(flatten)]
    #[serde(default)]
    pub scenario: ScenarioArgs,
    /// Step size (default 1/(2 beta)).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Cover horizon; derived from --epsilon and the contraction factor when absent.
    #[arg(long = "T")]
    pub T: Option<usize>,
    /// Target radius (default 1/n).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Largest enumeration allowed (default: SGD_COVER_CAP, else 10^7).
    #[arg(long)]
    pub cap: Option<u128>,
    /// Drop repeated points.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dedup: Option<bool>,
    /// Build the piecewise-quadratic cover with this gradient error.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Strong convexity certified by the surrogate pieces.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Curvature of the surrogate pieces.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Random trajectories to check against the cover (0 = no check).
    #[arg(long)]
    pub verify: Option<usize>,
    /// Verified endpoints are drawn at t in [T, T + extra_steps].
    #[arg(long)]
    pub extra_steps: Option<usize>,
}

fn surrogate_constants(fam: &LossFamily, alpha: Option<f64>, beta: Option<f64>) -> (f64, f64) {
    let c = fam.constants();
    let beta = beta.or(c.beta).unwrap_or(1.0);
    let alpha = alpha.or(c.alpha).unwrap_or(beta).min(beta);
    (alpha, beta)
}

pub fn cover(p: &CoverParams, seed: u64) -> CliResult<Outcome> {
    let sc = p.scenario.build(seed)?;
    let fam = &sc.family;
    let data = &sc.dataset;
    let n = data.len();
    let eta = p.eta.unwrap_or_else(|| default_eta(fam));
    let map = UpdateMap::sgd(fam, eta)?;
    let cap = match p.cap {
        Some(c) => c,
        None => cap_from_env()?.unwrap_or(DEFAULT_CAP),
    };
    let r = fam.domain().bounding_radius();
    let approx = match p.xi {
        Some(xi) => {
            let ab = surrogate_constants(fam, p.alpha, p.beta);
            Some(build_piecewise_approx(fam, xi, ab, ApproxOptions { cap })?)
        }
        None => None,
    };
    let gamma = match &approx {
        Some(a) if a.alpha > 0.0 => contraction_factor(a.alpha, a.beta, eta).ok(),
        Some(_) => None,
        None => {
            let c = fam.constants();
            match (c.alpha, c.beta) {
                (Some(a), Some(b)) if a > 0.0 => contraction_factor(a, b, eta).ok(),
                _ => None,
            }
        }
    };
    let horizon = match (p.T, gamma) {
        (Some(t), _) => t,
        (None, Some(g)) => cover_horizon(r, p.epsilon.unwrap_or(1.0 / n as f64), g)?,
        (None, None) => return usage("cover needs --T when the family has no contraction factor"),
    };
    // radius the cover achieves: gamma^T R plus the surrogate error
    let derived_eps = gamma.map(|g| {
        let slack = approx.as_ref().map_or(0.0, |a| (0..horizon).map(|j| g.powi(j as i32)).sum::<f64>() * eta * a.xi);
        g.powi(horizon as i32) * r + slack
    });
    let epsilon = p.epsilon.or(derived_eps);
    let mut set = match &approx {
        Some(a) => enumerate_piecewise_cover(a, &map, data, horizon, cap)?,
        None => enumerate_cover(&map, data, horizon, cap)?,
    };
    if let Some(e) = epsilon {
        set = set.with_epsilon(e);
    }
    if p.dedup.unwrap_or(false) {
        set = set.dedup();
    }
    let trials = p.verify.unwrap_or(0);
    let report: Option<CoverReport> = if trials > 0 {
        let Some(eps) = epsilon else {
            return usage("cover --verify needs --epsilon when the family has no contraction factor");
        };
        let cfg = VerifyConfig {
            trials,
            max_extra_steps: p.extra_steps.unwrap_or(50),
            epsilon: eps,
            seed,
        };
        Some(match &approx {
            Some(a) => verify_piecewise_cover(&set, a, &map, data, &cfg)?,
            None => verify_cover(&set, &map, data, &cfg)?,
        })
    } else {
        None
    };
    let status = report.as_ref().map(|r| Status::from_pass(r.pass)).unwrap_or(Status::Ok);
    let result = json!({
        "family": sc.spec,
        "eta": eta,
        "gamma": gamma,
        "horizon": horizon,
        "epsilon": epsilon,
        "cap": cap.to_string(),
        "entries": set.len(),
        "pieces": approx.as_ref().map(|a| a.piece_count()),
        "verification": report,
    });
    let header = ["seq", "pieces", "deps"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..set.dim()).map(|k| format!("x{k}")))
        .collect();
    let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    let rows = set
        .entries()
        .map(|e| {
            let mut row = vec![
                join(&e.seq),
                e.pieces.as_deref().map(join).unwrap_or_default(),
                join(&e.deps),
            ];
            row.extend(e.point.coords().iter().map(|x| x.to_string()));
            row
        })
        .collect();
    let mut out = Outcome::new(status, result)?;
    out.table = Some(Table { header, rows });
    out.cover = Some(set);
    Ok(out)
}

// ------------------------------------------------------------------ approx

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxParams {
    #[command(flatten)]
    #[serde(default)]
    pub scenario: ScenarioArgs,
    /// Target gradient error.
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Check points per axis (a lattice up to d = 2, random draws above).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Largest anchor lattice the builder may scan.
    #[arg(long)]
    pub cap: Option<u128>,
}

pub fn approx(p: &ApproxParams, seed: u64) -> CliResult<Outcome> {
    let sc = p.scenario.build(seed)?;
    let fam = &sc.family;
    let xi = p.xi.unwrap_or(0.5);
    let ab = surrogate_constants(fam, p.alpha, p.beta);
    let cap = match p.cap {
        Some(c) => c,
        None => cap_from_env()?.unwrap_or(ApproxOptions::default().cap),
    };
    let a = build_piecewise_approx(fam, xi, ab, ApproxOptions { cap })?;
    let points = domain_points(fam.domain(), p.grid.unwrap_or(101), seed)?;
    let mut worst = 0.0f64;
    for z in &sc.dataset.samples {
        worst = worst.max(a.max_gradient_error(&points, z)?);
    }
    let mut flags = Vec::new();
    if !a.within_bound() {
        flags.push(format!("{} pieces exceed the bound {}", a.piece_count(), a.piece_bound));
    }
    Outcome::new(
        Status::from_pass(worst <= xi),
        json!({
            "family": sc.spec,
            "xi": xi,
            "alpha": a.alpha,
            "beta": a.beta,
            "beta_prime": a.beta_prime,
            "spacing": a.spacing,
            "anchors": a.anchors().len(),
            "pieces": a.piece_count(),
            "piece_bound": a.piece_bound,
            "within_bound": a.within_bound(),
            "check_points": points.len(),
            "samples_checked": sc.dataset.len(),
            "max_gradient_error": worst,
            "flags": flags,
        }),
    )
}

// ------------------------------------------------------------------- bound

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct BoundParams {
    /// THM_2_3, COR_2_4, COR_2_5, EQ_8_FRACTAL, THM_3_2, THM_4_1, THM_4_3,
    /// THM_4_4, THM_5_3, THM_B_1, THM_D_1, THM_D_2 or COR_D_3 (any case).
    #[arg(long)]
    pub theorem: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Confidence parameter (default 0.05).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "B")]
    pub B: Option<f64>,
    #[arg(long = "L")]
    pub L: Option<f64>,
    #[arg(long = "R")]
    pub R: Option<f64>,
    #[arg(long = "R_x")]
    pub R_x: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "T")]
    pub T: Option<usize>,
    /// Stopping time for the early-stopping bound.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long = "P")]
    pub P: Option<f64>,
    #[arg(long = "Q")]
    pub Q: Option<usize>,
    #[arg(long = "K")]
    pub K: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub cover_cardinality: Option<f64>,
    #[arg(long)]
    pub log_cover_cardinality: Option<f64>,
    /// Absolute constant of the expectation bounds (default 1).
    #[arg(long = "C")]
    pub C: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long = "d_H")]
    pub d_H: Option<f64>,
}

pub fn certificate(p: &BoundParams) -> CliResult<BoundCertificate> {
    let name = p.theorem.as_deref().ok_or_else(|| CliError::Usage("bound needs --theorem".into()))?;
    let th: TheoremId = name.parse()?;
    let w = th.to_string();
    let w = w.as_str();
    let n = required(p.n, "n", w)?;
    let delta = p.delta.unwrap_or(0.05);
    let b = || required(p.B, "B", w);
    let l = || required(p.L, "L", w);
    let r = || required(p.R, "R", w);
    let gamma = || required(p.gamma, "gamma", w);
    let t_big = || required(p.T, "T", w);
    let eta = || required(p.eta, "eta", w);
    let k = || required(p.K, "K", w);
    Ok(match th {
        TheoremId::Thm2_3 => bounds::bound_strongly_convex(n, delta, b()?, l()?, r()?, gamma()?)?,
        TheoremId::Cor2_4 => bounds::bound_single_trajectory(n, delta, b()?, t_big()?)?,
        TheoremId::Cor2_5 => bounds::bound_early(n, delta, b()?, required(p.t, "t", w)?)?,
        TheoremId::Eq8Fractal => {
            bounds::bound_fractal(n, delta, b()?, l()?, r()?, gamma()?, required(p.d_H, "d_H", w)?)?
        }
        TheoremId::Thm3_2 => bounds::bound_piecewise_approx(
            n,
            delta,
            b()?,
            l()?,
            r()?,
            gamma()?,
            p.T,
            required(p.P, "P", w)?,
            required(p.xi, "xi", w)?,
            eta()?,
        )?,
        TheoremId::Thm5_3 => bounds::bound_piecewise_contractive(
            n,
            delta,
            b()?,
            l()?,
            r()?,
            gamma()?,
            p.T,
            required(p.P, "P", w)?,
            required(p.xi, "xi", w)?,
        )?,
        TheoremId::Thm4_1 => bounds::bound_multi_index_with_horizon(
            n,
            delta,
            b()?,
            l()?,
            r()?,
            required(p.R_x, "R_x", w)?,
            k()?,
            required(p.Q, "Q", w)?,
            required(p.beta, "beta", w)?,
            eta()?,
            required(p.lambda, "lambda", w)?,
            p.T,
        )?,
        TheoremId::Thm4_3 => {
            bounds::bound_soft_kmeans_with_horizon(n, delta, k()?, r()?, required(p.zeta, "zeta", w)?, eta()?, p.T)?
        }
        TheoremId::Thm4_4 => bounds::bound_hard_kmeans(n, delta, k()?, r()?, eta()?)?,
        TheoremId::ThmB1 => {
            let eps = required(p.epsilon, "epsilon", w)?;
            match (p.cover_cardinality, p.log_cover_cardinality) {
                (Some(c), None) => bounds::bound_master_covering(n, delta, b()?, l()?, t_big()?, c, eps)?,
                (None, Some(lc)) => bounds::bound_master_covering_log(n, delta, b()?, l()?, t_big()?, lc, eps)?,
                _ => return usage(format!("{w} needs exactly one of --cover-cardinality and --log-cover-cardinality")),
            }
        }
        TheoremId::ThmD1 | TheoremId::ThmD2 | TheoremId::CorD3 => {
            bounds::bound_expectation(n, b()?, t_big()?, th, p.C.unwrap_or(1.0))?
        }
    })
}

pub fn bound(p: &BoundParams) -> CliResult<Outcome> {
    let cert = certificate(p)?;
    let mut out = Outcome::new(Status::Ok, &cert)?;
    let c = &cert.components;
    let rows = [
        ("sample_dependency_term", c.sample_dependency_term),
        ("concentration_term", c.concentration_term),
        ("covering_slack_term", c.covering_slack_term),
        ("approximation_term", c.approximation_term),
        ("total", Some(cert.total)),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.map(|v| vec![k.to_string(), v.to_string()]))
    .collect();
    out.table = Some(Table {
        header: vec!["component".into(), "value".into()],
        rows,
    });
    out.text = Some(cert.table());
    Ok(out)
}

// --------------------------------------------------------------------- gap

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapParams {
    #[command(flatten)]
    #[serde(default)]
    pub scenario: ScenarioArgs,
    /// Step size (default 1/(2 beta)).
    #[arg(long)]
    pub eta: Option<f64>,
    /// SGD steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Monte Carlo draws for the population risk.
    #[arg(long)]
    pub m: Option<usize>,
    /// Initial point as a JSON array (default: the origin, projected).
    #[arg(long)]
    pub init: Option<Json<ParamPoint>>,
    /// uniform, without_replacement or random_shuffle.
    #[arg(long)]
    pub sampling: Option<String>,
}

pub fn index_source(name: Option<&str>, seed: u64) -> CliResult<IndexSource> {
    Ok(match name.unwrap_or("uniform") {
        "uniform" => IndexSource::Uniform { seed },
        "without_replacement" => IndexSource::WithoutReplacement { seed },
        "random_shuffle" => IndexSource::RandomShuffle { seed },
        other => return usage(format!("unknown sampling scheme `{other}`")),
    })
}

pub fn gap(p: &GapParams, seed: u64) -> CliResult<Outcome> {
    let sc = p.scenario.build(seed)?;
    let fam = &sc.family;
    let eta = p.eta.unwrap_or_else(|| default_eta(fam));
    let init = match &p.init {
        Some(x) => x.0.clone(),
        None => origin(fam)?,
    };
    let map = UpdateMap::sgd(fam, eta)?;
    let cfg = SgdConfig::new(eta, init, p.steps.unwrap_or(50), index_source(p.sampling.as_deref(), seed)?);
    let traj = run_trajectory(&map, &cfg, &sc.dataset)?;
    let est = estimate_gap(fam, &sc.dataset, &traj, p.m.unwrap_or(100_000), seed)?;
    Outcome::new(
        Status::Ok,
        json!({
            "family": sc.spec,
            "eta": eta,
            "n": sc.dataset.len(),
            "final_point": traj.last(),
            "estimate": est,
        }),
    )
}

// ---------------------------------------------------------------- validate

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ValidateParams {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Number of centers in the finite support.
    #[arg(long)]
    pub support_size: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "R")]
    pub R: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Independent datasets.
    #[arg(long)]
    pub resamplings: Option<usize>,
    /// Trajectories per dataset.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Stopping times are drawn from [T, T + band].
    #[arg(long)]
    pub band: Option<usize>,
    /// Multiplies the certificate; values below 1 give a negative control.
    #[arg(long)]
    pub certificate_scale: Option<f64>,
}

pub fn validate(p: &ValidateParams, seed: u64) -> CliResult<Outcome> {
    let d = ValidationScenario::default();
    let sc = ValidationScenario {
        n: p.n.unwrap_or(d.n),
        eta: p.eta.unwrap_or(d.eta),
        support_size: p.support_size.unwrap_or(d.support_size),
        dim: p.dim.unwrap_or(d.dim),
        radius: p.R.unwrap_or(d.radius),
        delta: p.delta.unwrap_or(d.delta),
        resamplings: p.resamplings.unwrap_or(d.resamplings),
        trials: p.trials.unwrap_or(d.trials),
        band: p.band.unwrap_or(d.band),
        certificate_scale: p.certificate_scale.unwrap_or(d.certificate_scale),
        seed,
    };
    let rep = validate_bound(&sc)?;
    let rows = rep
        .rows
        .iter()
        .map(|r| vec![r.resampling.to_string(), r.max_gap.to_string(), r.violated.to_string()])
        .collect();
    let mut out = Outcome::new(Status::from_pass(rep.pass), &rep)?;
    out.table = Some(Table {
        header: vec!["resampling".into(), "max_gap".into(), "violated".into()],
        rows,
    });
    Ok(out)
}

// ------------------------------------------------------------------ kmeans

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct KMeansParams {
    /// soft or hard.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long = "K")]
    pub K: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "R")]
    pub R: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Step size (default: half the admissible maximum for soft, 0.25 for hard).
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Spread of the Gaussian clusters the data is drawn from.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Monte Carlo draws for the population risk.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// EM iterations from the same start (soft variant).
    #[arg(long)]
    pub em_iters: Option<usize>,
}

fn cluster_centers(k: usize, dim: usize, r: f64) -> CliResult<Vec<ParamPoint>> {
    (0..k)
        .map(|j| {
            let mut c = vec![0.0; dim];
            if dim == 1 {
                c[0] = if k == 1 { 0.0 } else { r * (j as f64 / (k - 1) as f64 - 0.5) };
            } else {
                let a = std::f64::consts::TAU * j as f64 / k as f64;
                c[0] = 0.5 * r * a.cos();
                c[1] = 0.5 * r * a.sin();
            }
            Ok(ParamPoint::new(c)?)
        })
        .collect()
}

pub fn kmeans(p: &KMeansParams, seed: u64) -> CliResult<Outcome> {
    let k = p.K.unwrap_or(2);
    let dim = p.dim.unwrap_or(2);
    let r = p.R.unwrap_or(1.0);
    let zeta = p.zeta.unwrap_or(0.1);
    let n = p.n.unwrap_or(100);
    let delta = p.delta.unwrap_or(0.05);
    let soft = match p.variant.as_deref().unwrap_or("soft") {
        "soft" => true,
        "hard" => false,
        other => return usage(format!("unknown K-means variant `{other}` (soft or hard)")),
    };
    let fam = if soft {
        losses::soft_kmeans(k, zeta, r, dim)?
    } else {
        losses::hard_kmeans(k, r, dim, "lowest_index")?
    };
    let eta = match p.eta {
        Some(e) => e,
        None if soft => bounds::soft_kmeans_constants(k, r, zeta)?.eta_max / 2.0,
        None => 0.25,
    };
    let gen = SampleGenerator::GaussianClusters {
        centers: cluster_centers(k, dim, r)?,
        sigma: p.sigma.unwrap_or(0.1),
        radius: r,
    };
    let data = Dataset::generate(&gen, n, seed)?;
    let init = fam.domain().sample(&mut rng::stream(seed, 40))?;
    let map = UpdateMap::sgd(&fam, eta)?;
    let cfg = SgdConfig::new(eta, init.clone(), p.steps.unwrap_or(200), IndexSource::Uniform { seed });
    let traj = run_trajectory(&map, &cfg, &data)?;
    let gap = estimate_gap(&fam, &data, &traj, p.m.unwrap_or(100_000), seed)?;
    let cert = if soft {
        bounds::bound_soft_kmeans(n, delta, k, r, zeta, eta)
    } else {
        bounds::bound_hard_kmeans(n, delta, k, r, eta)
    };
    let (cert, cert_error) = match cert {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let blocks = |x: &ParamPoint| -> CliResult<Vec<ParamPoint>> {
        x.coords()
            .chunks(dim)
            .map(|c| Ok(ParamPoint::new(c.to_vec())?))
            .collect()
    };
    let (em, status) = if soft {
        let (em_theta, iters, converged) = run_em(&blocks(&init)?, &data, zeta, p.em_iters.unwrap_or(200), 1e-10)?;
        let eq = verify_em_equivalence(&blocks(traj.last())?, &data, zeta)?;
        let pass = eq.pass;
        (
            Some(json!({"theta": em_theta, "iterations": iters, "converged": converged, "equivalence": eq})),
            Status::from_pass(pass),
        )
    } else {
        (None, Status::Ok)
    };
    let within = match (&cert, gap.gap) {
        (Some(c), Some(g)) => Some(g.abs() <= c.total),
        _ => None,
    };
    Outcome::new(
        status,
        json!({
            "variant": if soft { "soft" } else { "hard" },
            "family": fam.descriptor(),
            "eta": eta,
            "n": n,
            "generator": gen,
            "final_centers": blocks(traj.last())?,
            "gap": gap,
            "certificate": cert,
            "certificate_error": cert_error,
            "gap_within_certificate": within,
            "em": em,
        }),
    )
}

// --------------------------------------------------------------- stability

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityParams {
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Random starting points.
    #[arg(long)]
    pub inits: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Allowed distance of the two mean losses from 2 and 0.
    #[arg(long)]
    pub tol: Option<f64>,
}

pub fn stability(p: &StabilityParams, seed: u64) -> CliResult<Outcome> {
    let tol = p.tol.unwrap_or(0.05);
    let rep = stability_experiment(
        p.eta.unwrap_or(1.0 / 3.0),
        p.n.unwrap_or(10),
        p.inits.unwrap_or(10_000),
        p.steps.unwrap_or(200),
        seed,
    )?;
    let pass = rep.basin_check && (rep.mean_loss_s - 2.0).abs() <= tol && rep.mean_loss_s_prime.abs() <= tol;
    let mut v = serde_json::to_value(&rep)?;
    v["tol"] = json!(tol);
    v["pass"] = json!(pass);
    Outcome::new(Status::from_pass(pass), v)
}

// --------------------------------------------------------------------- ifs

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct IfsParams {
    /// Quadratic centers as a JSON array of points (default [[-1],[1]]).
    #[arg(long)]
    pub centers: Option<Json<Vec<ParamPoint>>>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "R")]
    pub R: Option<f64>,
    /// Orbit length.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Box sides as a JSON array (default 2R gamma^k, k = 1..6).
    #[arg(long)]
    pub scales: Option<Json<Vec<f64>>>,
    /// Allowed gap between the box-counting and similarity dimensions.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Dataset size for the accompanying certificate.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "B")]
    pub B: Option<f64>,
    #[arg(long = "L")]
    pub L: Option<f64>,
}

pub fn ifs(p: &IfsParams, seed: u64) -> CliResult<Outcome> {
    let centers = match &p.centers {
        Some(c) => c.0.clone(),
        None => vec![ParamPoint::new(vec![-1.0])?, ParamPoint::new(vec![1.0])?],
    };
    let r = p.R.unwrap_or(1.0);
    let model = IfsModel::quadratic(&centers, p.eta.unwrap_or(2.0 / 3.0), r)?;
    let dim = ifs_dimension(&model);
    let orbit = model.orbit(p.points.unwrap_or(200_000), p.burn_in.unwrap_or(100), seed);
    let scales = match &p.scales {
        Some(s) => s.0.clone(),
        None => (1..=6).map(|k| 2.0 * r * model.gamma().powi(k)).collect(),
    };
    let est = box_counting_dimension(&orbit, &scales)?;
    let tol = p.tol.unwrap_or(0.05);
    let cert = bounds::bound_fractal(
        p.n.unwrap_or(100),
        p.delta.unwrap_or(0.05),
        p.B.unwrap_or(1.0),
        p.L.unwrap_or(1.0),
        r,
        model.gamma(),
        dim.d_h,
    )?;
    let pass = dim.separated && (est - dim.d_h).abs() <= tol;
    Outcome::new(
        Status::from_pass(pass),
        json!({
            "similarity": dim,
            "box_counting": est,
            "scales": scales,
            "points": orbit.len(),
            "tol": tol,
            "certificate": cert,
            "pass": pass,
        }),
    )
}

// --------------------------------------------------------------- hoeffding

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoeffdingParams {
    #[command(flatten)]
    #[serde(default)]
    pub scenario: ScenarioArgs,
    /// Fixed parameter as a JSON array (default: the origin, projected).
    #[arg(long)]
    pub theta: Option<Json<ParamPoint>>,
    /// Sample sizes as a JSON array.
    #[arg(long)]
    pub n_grid: Option<Json<Vec<usize>>>,
    /// Deviations as a JSON array (default 0.05, 0.1, 0.2, 0.3 times B).
    #[arg(long)]
    pub epsilon_grid: Option<Json<Vec<f64>>>,
    #[arg(long)]
    pub resamplings: Option<usize>,
}

pub fn hoeffding(p: &HoeffdingParams, seed: u64) -> CliResult<Outcome> {
    let spec = p.scenario.family_spec()?;
    let fam = spec.build()?;
    let gen = p.scenario.generator(&spec)?;
    let theta = match &p.theta {
        Some(t) => t.0.clone(),
        None => origin(&fam)?,
    };
    let b = fam.constants().require("B")?;
    let n_grid = p.n_grid.clone().map(|g| g.0).unwrap_or_else(|| vec![10, 30, 100, 300]);
    let eps = p
        .epsilon_grid
        .clone()
        .map(|g| g.0)
        .unwrap_or_else(|| [0.05, 0.1, 0.2, 0.3].iter().map(|f| f * b).collect());
    let rep = hoeffding_check(&fam, &gen, &theta, &n_grid, &eps, p.resamplings.unwrap_or(10_000), seed)?;
    let rows = rep
        .cells
        .iter()
        .map(|c| {
            vec![
                c.n.to_string(),
                c.epsilon.to_string(),
                c.violations.to_string(),
                c.rate.to_string(),
                c.bound.to_string(),
                c.allowance.to_string(),
                c.pass.to_string(),
            ]
        })
        .collect();
    let mut out = Outcome::new(Status::from_pass(rep.pass), json!({"family": spec, "theta": theta, "report": rep}))?;
    out.table = Some(Table {
        header: ["n", "epsilon", "violations", "rate", "bound", "allowance", "pass"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    });
    Ok(out)
}
