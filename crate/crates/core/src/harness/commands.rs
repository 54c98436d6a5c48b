//! One function per CLI command.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{num, to_value, Ctx, Outcome, Table};
use crate::averaging::{avg_beta_check, extend_continuous as run_continuous, theta_measure_spectrum, ArcFamily, FamilySpec};
use crate::error::{Error, Result};
use crate::extend::{extend_bp, power_maximal_b1};
use crate::factor::factor_bho_full;
use crate::geometry::{DiscPoint, GridNode, UnitArc};
use crate::io::{continuous_fixtures, fixture_dir, read_json, ContinuousFixture, MartingaleSpec};
use crate::lattice::{certify, DyadicDomain, TreeWeight};
use crate::martingale::{
    azuma_fit, carleson_sup, counterexample_build, default_probes, default_r_grid, divergence_terms, trace_weak_l1, BuildSpec,
    DyadicInterval, PointSeq, Thresholds, TraceReport,
};
use crate::sample::{cascade_weight, radial_power, random_domain, rough_weight};

const DEFAULT_DEPTH: u32 = 8;

/// Where a tree weight comes from. Generated weights use the run depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSource {
    File {
        path: PathBuf,
    },
    /// A file under the bundled `fixtures/` directory.
    Fixture {
        name: String,
    },
    Cascade {
        step: f64,
        #[serde(default)]
        theta: f64,
    },
    Rough {
        spread: f64,
        #[serde(default)]
        theta: f64,
    },
    RadialPower {
        alpha: f64,
        #[serde(default)]
        theta: f64,
    },
    Constant {
        value: f64,
        #[serde(default)]
        theta: f64,
    },
}

impl WeightSource {
    pub(crate) fn load(&self, ctx: &mut Ctx, depth: u32) -> Result<TreeWeight> {
        match self {
            Self::File { path } => read_json(&ctx.resolve(path)),
            Self::Fixture { name } => read_json(&fixture_dir().join(name)),
            Self::Cascade { step, theta } => cascade_weight(*theta, depth, *step, ctx.rng("a cascade weight")?),
            Self::Rough { spread, theta } => rough_weight(*theta, depth, *spread, ctx.rng("a rough weight")?),
            Self::RadialPower { alpha, theta } => radial_power(*theta, depth, *alpha),
            Self::Constant { value, theta } => TreeWeight::constant(*theta, depth, *value),
        }
    }
}

/// Where a dyadic domain comes from; `full` means the whole disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSource {
    Full,
    File { path: PathBuf },
    Nodes { nodes: Vec<(u32, u64)> },
    Random { max_level: Option<u32>, density: f64 },
}

impl DomainSource {
    pub(crate) fn load(&self, ctx: &mut Ctx, w: &TreeWeight) -> Result<Option<DyadicDomain>> {
        let d = match self {
            Self::Full => return Ok(None),
            Self::File { path } => read_json::<DyadicDomain>(&ctx.resolve(path))?,
            Self::Nodes { nodes } => {
                let nodes = nodes.iter().map(|&(l, i)| GridNode::new(w.theta(), l, i)).collect::<Result<Vec<_>>>()?;
                DyadicDomain::new(w.theta(), nodes)?
            }
            Self::Random { max_level, density } => {
                random_domain(w.theta(), max_level.unwrap_or(w.depth()), *density, ctx.rng("a random domain")?)?
            }
        };
        if (d.theta() - w.theta()).abs() > 1e-15 {
            return Err(Error::GridMismatch(format!("domain on grid {} but weight on grid {}", d.theta(), w.theta())));
        }
        Ok(Some(d))
    }
}

fn check(violations: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        violations.push(msg());
    }
}

fn weight_table(name: &str, w: &TreeWeight, extra: &[(&str, &str, &[f64])]) -> Table {
    let mut cols = vec![("level", "tree level of the cell"), ("index", "position of the cell within its level"), ("w", "weight value")];
    cols.extend(extra.iter().map(|(n, d, _)| (*n, *d)));
    let mut t = Table::new(name, &cols);
    for (h, node) in w.nodes().enumerate() {
        let mut row = vec![node.level().to_string(), node.index().to_string(), num(w.values()[h])];
        row.extend(extra.iter().map(|(_, _, x)| num(x[h])));
        t.push(row);
    }
    t
}

// constants

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct ConstantsConfig {
    pub weight: WeightSource,
    pub domain: DomainSource,
    /// Exponents; 1 gives the B_1 constant.
    pub p: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            weight: WeightSource::Cascade { step: 0.5, theta: 0.0 },
            domain: DomainSource::Full,
            p: vec![1.0, 1.5, 2.0, 3.0],
            gamma: vec![0.25, 0.5, 0.75],
        }
    }
}

pub(crate) fn constants(cfg: ConstantsConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let depth = ctx.depth_or(DEFAULT_DEPTH);
    let w = cfg.weight.load(ctx, depth)?;
    let omega = cfg.domain.load(ctx, &w)?;
    let mut violations = Vec::new();
    let mut table = Table::new(
        "constants",
        &[
            ("p", "exponent (1 means the B_1 constant)"),
            ("constant", "[w]_{B_p,D} or [w]_{B_1,D}, restricted to the domain when one is given"),
            ("c_w", "oscillation constant C_w"),
            ("l_w", "oscillation constant L_w"),
        ],
    );
    let mut certs = Vec::new();
    for &p in &cfg.p {
        let c = certify(&w, p, None, omega.as_ref())?;
        let value = c.bp_constant.or(c.b1_constant).unwrap_or(f64::NAN);
        if omega.is_none() {
            check(&mut violations, value >= 1.0 - 1e-12, || format!("[w]_{{B_{p}}} = {value} is below 1 on the full disc"));
        }
        table.push_nums(&[p, value, c.c_w, c.l_w]);
        certs.push(c);
    }
    let mut rh = Table::new("reverse_holder", &[("r", "exponent"), ("ratio", "sup over boxes of avg(w^r)^(1/r) / avg(w)")]);
    if let Some(c) = certs.first() {
        for (r, v) in &c.reverse_holder {
            rh.push_nums(&[*r, *v]);
        }
    }
    let mut maximal = Vec::new();
    for &g in &cfg.gamma {
        let pm = power_maximal_b1(&w, g)?;
        check(&mut violations, pm.b1_constant <= pm.bound, || format!("[(M w)^{g}]_B1 = {} exceeds {}", pm.b1_constant, pm.bound));
        maximal.push(json!({"gamma": g, "b1_constant": pm.b1_constant, "bound": pm.bound}));
    }
    Ok(Outcome {
        config: json!({"depth": w.depth(), "theta": w.theta(), "weight": cfg.weight, "domain": cfg.domain, "p": cfg.p, "gamma": cfg.gamma}),
        certificates: json!({"weights": certs, "power_maximal": maximal, "domain_cells": omega.as_ref().map(|d| d.len())}),
        violations,
        tables: vec![table, rh],
        artifacts: Vec::new(),
    })
}

// factorize

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct FactorizeConfig {
    pub weight: WeightSource,
    pub p: f64,
}

impl Default for FactorizeConfig {
    fn default() -> Self {
        Self { weight: WeightSource::Fixture { name: "bho_b2_weight.json".into() }, p: 2.0 }
    }
}

pub(crate) fn factorize(cfg: FactorizeConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let w = cfg.weight.load(ctx, ctx.depth_or(DEFAULT_DEPTH))?;
    let f = factor_bho_full(&w, cfg.p)?;
    let r = &f.result;
    let table =
        weight_table("factors", &w, &[("w1", "first factor w1 (B_1)", r.w1.values()), ("w2", "second factor w2 (B_1)", r.w2.values())]);
    Ok(Outcome {
        config: json!({"depth": w.depth(), "theta": w.theta(), "weight": cfg.weight, "p": cfg.p}),
        certificates: json!({
            "s_norm_bound": r.s_norm_bound,
            "iterations": r.iterations,
            "tail_bound": r.tail_bound,
            "fixed_point_ratio": r.fixed_point_ratio,
            "reconstruction_residual": r.reconstruction_residual,
            "b1_w1": r.b1_w1, "b1_w1_bound": r.b1_w1_bound,
            "b1_w2": r.b1_w2, "b1_w2_bound": r.b1_w2_bound,
            "c_w": r.c_w, "c_w1": r.c_w1, "c_w1_bound": r.c_w1_bound, "c_w2": r.c_w2, "c_w2_bound": r.c_w2_bound,
            "l_w": f.l_w, "l_w1": f.l_w1, "l_w2": f.l_w2,
        }),
        violations: r.violations(),
        tables: vec![table],
        artifacts: vec![("w1.json".into(), to_value(&r.w1)), ("w2.json".into(), to_value(&r.w2))],
    })
}

// extend-dyadic

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct ExtendDyadicConfig {
    pub weight: WeightSource,
    pub domain: DomainSource,
    pub p: f64,
    pub q: f64,
}

impl Default for ExtendDyadicConfig {
    fn default() -> Self {
        Self {
            weight: WeightSource::Cascade { step: 0.4, theta: 0.0 },
            domain: DomainSource::Random { max_level: None, density: 0.05 },
            p: 1.0,
            q: 2.0,
        }
    }
}

pub(crate) fn extend_dyadic(cfg: ExtendDyadicConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let w = cfg.weight.load(ctx, ctx.depth_or(DEFAULT_DEPTH))?;
    let omega =
        cfg.domain.load(ctx, &w)?.ok_or_else(|| Error::Precondition("extension needs a proper domain, not the full disc".into()))?;
    let r = extend_bp(&w, &omega, cfg.p, cfg.q)?;
    let mut violations = r.violations();
    let disagree = omega.members().filter(|m| r.weight.value(m).ok() != w.value(m).ok()).count();
    check(&mut violations, disagree == 0, || format!("W differs from w on {disagree} domain cells"));
    let in_omega: Vec<f64> = w.nodes().map(|n| if omega.contains(&n) { 1.0 } else { 0.0 }).collect();
    let table = weight_table(
        "extension",
        &w,
        &[
            ("in_domain", "1 if the cell belongs to the domain", &in_omega),
            ("extension", "extended weight W", r.weight.values()),
            ("k", "multiplier k", r.k.values()),
        ],
    );
    Ok(Outcome {
        config: json!({"depth": w.depth(), "theta": w.theta(), "weight": cfg.weight, "domain": cfg.domain, "p": cfg.p, "q": cfg.q}),
        certificates: json!({
            "domain_cells": omega.len(),
            "input_constant": r.input_constant,
            "input_l": r.input_l,
            "m1": r.m1,
            "m2": r.m2,
            "measured_constant": r.measured_constant,
            "measured_l": r.measured_l,
            "agreement_residual": r.agreement_residual,
            "k_window": r.k_window,
            "k_range": r.k_range,
        }),
        violations,
        tables: vec![table],
        artifacts: vec![("extension.json".into(), to_value(&r.weight)), ("domain.json".into(), to_value(&omega))],
    })
}

// extend-continuous

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct ExtendContinuousConfig {
    /// Fixture file; defaults to the first bundled continuous fixture.
    pub fixture: Option<PathBuf>,
    pub p: f64,
    pub q: f64,
    /// `log2` of the θ-counts to run.
    pub theta_log2: Vec<u32>,
    pub family: FamilySpec,
}

impl Default for ExtendContinuousConfig {
    fn default() -> Self {
        Self { fixture: None, p: 1.0, q: 2.0, theta_log2: vec![6, 7], family: FamilySpec::default() }
    }
}

pub(crate) fn extend_continuous(cfg: ExtendContinuousConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let fixture: ContinuousFixture = match &cfg.fixture {
        Some(p) => read_json(&ctx.resolve(p))?,
        None => continuous_fixtures()?.into_iter().next().ok_or_else(|| Error::EmptyDomain("no bundled continuous fixtures".into()))?,
    };
    if cfg.theta_log2.is_empty() {
        return Err(Error::Precondition("theta_log2 lists no θ-counts".into()));
    }
    let depth = ctx.depth_or(fixture.depth);
    let omega = fixture.domain()?;
    let w = fixture.weight.build()?;
    let family = ArcFamily::standard(&cfg.family);
    let mut violations = Vec::new();
    let mut runs = Vec::new();
    let mut table = Table::new(
        "theta",
        &[
            ("theta_count", "number of θ samples in the run"),
            ("theta", "grid rotation"),
            ("good_nodes", "size of the good-node set G_θ"),
            ("restricted_constant", "[w_θ^q] over Ω_θ (B_p, or B_1 when p = 1)"),
            ("l_restricted", "oscillation constant of w_θ on Ω_θ"),
            ("extension_constant", "constant of the dyadic extension W_θ"),
            ("extension_l", "oscillation constant of W_θ"),
            ("min_good", "fewest good cells met by a generator's probe points"),
        ],
    );
    for &m in &cfg.theta_log2 {
        let out = run_continuous(&w, &omega, cfg.p, cfg.q, depth, m, &family)?;
        for d in &out.diagnostics {
            table.push_nums(&[
                out.theta_count as f64,
                d.theta,
                d.good_nodes as f64,
                d.restricted_constant,
                d.l_restricted,
                d.extension_constant,
                d.extension_l,
                d.min_good as f64,
            ]);
        }
        let min_good = out.diagnostics.iter().map(|d| d.min_good).min().unwrap_or(0);
        check(&mut violations, out.constant.is_finite() && out.log_gap.is_finite(), || {
            format!("θ-count {}: constant {} log-gap {}", out.theta_count, out.constant, out.log_gap)
        });
        check(&mut violations, out.minkowski_gap <= 1e-9, || {
            format!("θ-count {}: log-Minkowski gap {}", out.theta_count, out.minkowski_gap)
        });
        check(&mut violations, min_good >= 1, || format!("θ-count {}: a generator meets no good cell", out.theta_count));
        runs.push(json!({
            "theta_count": out.theta_count,
            "input_constant": out.input_constant,
            "constant": out.constant,
            "factor_constants": out.factor_constants,
            "log_gap": out.log_gap,
            "minkowski_gap": out.minkowski_gap,
            "restriction_ratio": out.restriction_ratio,
            "min_good": min_good,
            "max_meeting_cells": out.diagnostics.iter().map(|d| d.meeting_cells).max(),
        }));
    }
    let constants: Vec<f64> = runs.iter().map(|r| r["constant"].as_f64().unwrap_or(f64::NAN)).collect();
    let drift: Vec<f64> = constants.windows(2).map(|c| (c[1] - c[0]).abs() / c[0]).collect();
    Ok(Outcome {
        config: json!({"fixture": fixture.name, "generators": fixture.generators, "weight": fixture.weight, "depth": depth,
                       "p": cfg.p, "q": cfg.q, "theta_log2": cfg.theta_log2, "family": cfg.family, "family_size": family.arcs.len()}),
        certificates: json!({"runs": runs, "constant_drift": drift}),
        violations,
        tables: vec![table],
        artifacts: Vec::new(),
    })
}

// average

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct AverageConfig {
    pub arcs: usize,
    /// Arc lengths are `2^-u` with `u` uniform below this.
    pub max_octaves: f64,
    pub pairs: usize,
    pub resolution: u32,
}

impl Default for AverageConfig {
    fn default() -> Self {
        Self { arcs: 1000, max_octaves: 14.0, pairs: 1000, resolution: 12 }
    }
}

pub(crate) fn average(cfg: AverageConfig, ctx: &mut Ctx) -> Result<Outcome> {
    if cfg.resolution > 20 || !(cfg.max_octaves > 0.0 && cfg.max_octaves <= 40.0) {
        return Err(Error::OutOfRange("resolution must be at most 20 and max_octaves in (0, 40]".into()));
    }
    let rng = ctx.rng("the averaging check")?;
    let mut worst_sum: f64 = 0.0;
    let mut worst_bucket: Vec<f64> = Vec::new();
    for _ in 0..cfg.arcs {
        let arc = UnitArc::new(rng.gen_range(0.0..1.0), (-rng.gen_range(0.0..cfg.max_octaves)).exp2())?;
        let spec = theta_measure_spectrum(&arc);
        worst_sum = worst_sum.max((spec.values().sum::<f64>() - 1.0).abs());
        for (&k, &m) in &spec {
            if worst_bucket.len() <= k as usize {
                worst_bucket.resize(k as usize + 1, 0.0);
            }
            worst_bucket[k as usize] = worst_bucket[k as usize].max(m * (k as f64).exp2());
        }
    }
    let mut pairs = Vec::with_capacity(cfg.pairs);
    for _ in 0..cfg.pairs {
        let mut point = || DiscPoint::from_polar(1.0 - (-rng.gen_range(0.0..12.0f64)).exp2(), rng.gen_range(0.0..1.0));
        pairs.push((point()?, point()?));
    }
    let beta = avg_beta_check(&pairs, cfg.resolution);
    let envelope = worst_bucket.iter().skip(2).copied().fold(0.0, f64::max);
    let mut violations = Vec::new();
    check(&mut violations, worst_sum <= 1e-12, || format!("spectrum sums miss 1 by {worst_sum}"));
    check(&mut violations, envelope <= 4.0, || format!("spectrum bucket reaches {envelope}·2^-k"));
    check(&mut violations, beta.max_ratio <= 50.0, || format!("θ-averaged β ratio {}", beta.max_ratio));
    let mut table =
        Table::new("spectrum", &[("k", "bucket |P_θ(I)| = 2^(k-N)"), ("max_scaled_measure", "largest 2^k · measure(k) over the arcs")]);
    for (k, v) in worst_bucket.iter().enumerate() {
        table.push_nums(&[k as f64, *v]);
    }
    Ok(Outcome {
        config: to_value(&cfg),
        certificates: json!({"spectrum_sum_error": worst_sum, "spectrum_envelope": envelope, "avg_beta": beta}),
        violations,
        tables: vec![table],
        artifacts: Vec::new(),
    })
}

// azuma

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct AzumaConfig {
    pub martingale: MartingaleSpec,
    /// Binary address of the base interval.
    pub base: String,
    pub eps: Vec<f64>,
    pub k_max: u32,
}

impl Default for AzumaConfig {
    fn default() -> Self {
        Self { martingale: MartingaleSpec::kahane(), base: String::new(), eps: vec![0.3, 0.5, 0.7], k_max: 20 }
    }
}

fn build_martingale(spec: &MartingaleSpec, ctx: &mut Ctx) -> Result<(MartingaleSpec, crate::martingale::Martingale)> {
    let mut spec = spec.clone();
    if spec.kind == crate::io::MartingaleKind::Materialized {
        if spec.depth.is_none() {
            spec.depth = ctx.depth;
        }
        if spec.values.is_none() && spec.seed.is_none() {
            spec.seed = Some(ctx.rng("a random martingale")?.gen());
        }
    }
    let m = spec.build()?;
    Ok((spec, m))
}

pub(crate) fn azuma(cfg: AzumaConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let (spec, m) = build_martingale(&cfg.martingale, ctx)?;
    let base = DyadicInterval::parse(&cfg.base)?;
    let k_max = ctx.depth.unwrap_or(cfg.k_max);
    let k_grid: Vec<u32> = (1..=k_max).collect();
    let fit = azuma_fit(&m, &base, &cfg.eps, &k_grid)?;
    let mut violations = Vec::new();
    check(&mut violations, fit.gamma > 0.0, || format!("fitted γ = {} is not positive", fit.gamma));
    let mut table = Table::new(
        "azuma",
        &[
            ("eps", "deviation ε"),
            ("k", "relative depth"),
            ("count", "l_I(ε,k): intervals J with |M_J - M_I| > εk"),
            ("envelope", "2^k · C · exp(-γ ε² k) with the fitted γ and enveloping C"),
        ],
    );
    for p in &fit.points {
        let env = (p.k as f64).exp2() * fit.c_envelope * (-fit.gamma * p.eps * p.eps * p.k as f64).exp();
        table.push(vec![num(p.eps), p.k.to_string(), p.count.to_string(), num(env)]);
    }
    Ok(Outcome {
        config: json!({"martingale": spec, "base": cfg.base, "eps": cfg.eps, "k_max": k_max}),
        certificates: json!({"gamma": fit.gamma, "c_fit": fit.c_fit, "c_envelope": fit.c_envelope, "zero_counts": fit.zero_counts}),
        violations,
        tables: vec![table],
        artifacts: Vec::new(),
    })
}

// trace

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub(crate) enum SequenceSource {
    File { path: PathBuf },
    Build { spec: BuildSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct TraceConfig {
    pub sequence: SequenceSource,
    pub martingale: MartingaleSpec,
    pub lambdas: Vec<f64>,
    /// Radii `1 - 2^-m` for `m = 1..=r_depth`.
    pub r_depth: u32,
}

impl Default for TraceConfig {
    fn default() -> Self {
        let spec = BuildSpec { thresholds: Thresholds::JLogJ { c: 1.0 }, generations: 4, ..BuildSpec::default() };
        Self {
            sequence: SequenceSource::Build { spec },
            martingale: MartingaleSpec::kahane(),
            lambdas: vec![0.0, 0.05, 0.5, 1.0],
            r_depth: 50,
        }
    }
}

pub(crate) fn trace(cfg: TraceConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let (spec, m) = build_martingale(&cfg.martingale, ctx)?;
    let (seq, thresholds) = match &cfg.sequence {
        SequenceSource::File { path } => (read_json::<PointSeq>(&ctx.resolve(path))?, None),
        SequenceSource::Build { spec } => {
            let built = counterexample_build(&m, spec)?;
            if let Some(e) = &built.exhausted {
                return Err(Error::Precondition(format!("sequence builder stopped: {e}")));
            }
            (built.sequence, Some(built.thresholds))
        }
    };
    if seq.is_empty() {
        return Err(Error::EmptyDomain("the sequence has no points".into()));
    }
    let probes = default_probes(&seq);
    let grid = default_r_grid(cfg.r_depth);
    let carleson = carleson_sup(&seq, &probes)?;
    let mut violations = Vec::new();
    let mut table = Table::new(
        "trace",
        &[
            ("lambda", "λ"),
            ("sup_i", "sup over probes and radii of the condition (i) sum"),
            ("sup_r", "radius attaining sup_i"),
            ("weak_l1", "largest weak-L1 norm of the condition (ii) sequence over the probes"),
        ],
    );
    let mut reports = Vec::new();
    for &lambda in &cfg.lambdas {
        let r = TraceReport::new(&seq, &m, lambda, &probes, &grid, thresholds.as_deref())?;
        check(&mut violations, r.sup_i.value.is_finite() && r.weak_l1.is_finite(), || format!("λ = {lambda}: trace sums are not finite"));
        table.push_nums(&[lambda, r.sup_i.value, r.sup_i.r, r.weak_l1]);
        reports.push(r);
    }
    Ok(Outcome {
        config: json!({"sequence": cfg.sequence, "martingale": spec, "lambdas": cfg.lambdas, "r_depth": cfg.r_depth, "points": seq.len()}),
        certificates: json!({"carleson": carleson, "traces": reports}),
        violations,
        tables: vec![table],
        artifacts: vec![("sequence.json".into(), to_value(&seq))],
    })
}

// counterexample

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct CounterexampleConfig {
    pub build: BuildSpec,
    pub lambdas: Vec<f64>,
    /// λ for the weak-L1 trace of condition (ii).
    pub weak_lambda: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self { build: BuildSpec::default(), lambdas: vec![0.5, 1.0], weak_lambda: 0.05 }
    }
}

pub(crate) fn counterexample(mut cfg: CounterexampleConfig, ctx: &mut Ctx) -> Result<Outcome> {
    if let Some(d) = ctx.depth {
        cfg.build.depth_budget = d;
    }
    let m = crate::martingale::Martingale::Kahane;
    let built = counterexample_build(&m, &cfg.build)?;
    let mut violations = Vec::new();
    if let Some(e) = &built.exhausted {
        violations.push(format!("completed {} of {} generations: {e}", built.completed, cfg.build.generations));
    }
    for g in &built.ledger {
        let j = g.generation as i32;
        check(&mut violations, g.min_score >= g.threshold, || format!("generation {j}: score {} below s_j = {}", g.min_score, g.threshold));
        check(&mut violations, g.min_parent_ratio >= 0.25 && g.max_parent_ratio <= 0.5, || {
            format!("generation {j}: parent mass ratios [{}, {}] leave [1/4, 1/2]", g.min_parent_ratio, g.max_parent_ratio)
        });
        check(&mut violations, g.mass >= 0.25f64.powi(j), || format!("generation {j}: mass {} below 4^-j", g.mass));
        check(&mut violations, g.separated, || format!("generation {j}: successor boxes overlap"));
    }
    let mut columns = vec![
        ("generation".to_string(), "j".to_string()),
        ("threshold".to_string(), "s_j".to_string()),
        ("points".to_string(), "number of points in generation j".to_string()),
        ("mass".to_string(), "sum of 1-|z|^2 over generation j".to_string()),
    ];
    let mut divergence = Vec::new();
    for &lambda in &cfg.lambdas {
        let t = divergence_terms(&built.sequence, &built.thresholds[..built.completed as usize], lambda)?;
        for (i, tj) in t.iter().enumerate() {
            let env = (lambda * built.thresholds[i]).exp() * 0.25f64.powi(i as i32 + 1);
            check(&mut violations, *tj >= env, || format!("λ = {lambda}: t_{} = {tj} below e^(λ s_j) 4^-j = {env}", i + 1));
        }
        columns.push((format!("t_{lambda}"), format!("t_j = e^(λ s_j) · mass at λ = {lambda}")));
        columns.push((format!("envelope_{lambda}"), format!("e^(λ s_j) 4^-j at λ = {lambda}")));
        divergence.push(json!({"lambda": lambda, "terms": t, "partial_sum": t.iter().sum::<f64>()}));
    }
    let cols: Vec<(&str, &str)> = columns.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut table = Table::new("divergence", &cols);
    for (i, g) in built.ledger.iter().enumerate() {
        let mut row = vec![g.generation as f64, g.threshold, g.points as f64, g.mass];
        for d in &divergence {
            let lambda = d["lambda"].as_f64().unwrap_or(f64::NAN);
            row.push(d["terms"][i].as_f64().unwrap_or(f64::NAN));
            row.push((lambda * g.threshold).exp() * 0.25f64.powi(i as i32 + 1));
        }
        table.push_nums(&row);
    }
    let (carleson, weak) = if built.sequence.is_empty() {
        (None, None)
    } else {
        let probes = default_probes(&built.sequence);
        let c = carleson_sup(&built.sequence, &probes)?;
        let mut weak: f64 = 0.0;
        for z in &probes {
            weak = weak.max(trace_weak_l1(&built.sequence, &m, cfg.weak_lambda, z)?.norm);
        }
        check(&mut violations, c.sup.is_finite() && weak.is_finite(), || "Carleson or weak-L1 sums are not finite".into());
        // the strong sums against the Carleson bound; reported, not a certificate
        for d in &mut divergence {
            d["over_carleson"] = json!(d["partial_sum"].as_f64().unwrap_or(f64::NAN) / c.sup);
        }
        (Some(c), Some(weak))
    };
    Ok(Outcome {
        config: to_value(&cfg),
        certificates: json!({
            "completed": built.completed,
            "exhausted": built.exhausted,
            "best_root_ratio": built.best_root_ratio,
            "thresholds": built.thresholds,
            "ledger": built.ledger,
            "divergence": divergence,
            "carleson": carleson,
            "weak_l1": weak,
        }),
        violations,
        tables: vec![table],
        artifacts: vec![("sequence.json".into(), to_value(&built.sequence))],
    })
}
