//! A fast pass over the invariants of every module.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Ctx, Outcome, Table};
use crate::averaging::{
    avg_beta_check, extend_continuous, log_minkowski_gap, theta_measure_spectrum, ArcFamily, ContinuousDomain, FamilySpec, GeoAverage,
    Resolution, SampledWeight,
};
use crate::error::Result;
use crate::extend::{extend_bp, power_maximal_b1};
use crate::factor::factor_bho_full;
use crate::geometry::{DiscPoint, UnitArc};
use crate::io::{fixture_dir, read_json};
use crate::lattice::{bp_constant, TreeWeight};
use crate::martingale::{
    azuma_fit, bloch_seminorm, counterexample_build, midpoint_violation, BuildSpec, DyadicInterval, Martingale, Thresholds,
};
use crate::sample::{cascade_weight, random_domain, rough_weight};

/// Seed used when the run gives none; the self-test is a fixed suite, not an experiment.
const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct SelftestConfig {}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn checks(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut add = |name, pass, detail: String| out.push(Check { name, pass, detail });

    let one = TreeWeight::constant(0.0, 6, 1.0)?;
    let mut worst: f64 = 0.0;
    for p in [1.5, 2.0, 3.0] {
        worst = worst.max((bp_constant(&one, p, None)? - 1.0).abs());
    }
    for _ in 0..10 {
        let w = cascade_weight(0.0, 6, 0.7, rng)?;
        let lhs = bp_constant(&w, 2.0, None)?;
        let rhs = bp_constant(&w.powf(-1.0)?, 2.0, None)?;
        worst = worst.max((lhs - rhs).abs() / lhs);
    }
    add("unit weight and duality", worst <= 1e-10, format!("largest error {worst:.2e}"));

    let mut excess: f64 = 0.0;
    for _ in 0..10 {
        let w = rough_weight(0.0, 6, 3.0, rng)?;
        for g in [0.25, 0.5, 0.75] {
            let r = power_maximal_b1(&w, g)?;
            excess = excess.max(r.b1_constant / r.bound);
        }
    }
    add("maximal powers are B_1", excess <= 1.0, format!("largest constant/bound {excess:.4}"));

    let w: TreeWeight = read_json(&fixture_dir().join("bho_b2_weight.json"))?;
    let f = factor_bho_full(&w, 2.0)?;
    let v = f.result.violations();
    add("bundled B_2 factorization", v.is_empty(), format!("residual {:.2e}, {} violations", f.result.reconstruction_residual, v.len()));

    let mut bad = 0;
    for i in 0..10 {
        let w = cascade_weight(0.0, 6, 0.4, rng)?;
        let omega = random_domain(0.0, 6, 0.08, rng)?;
        let r = extend_bp(&w, &omega, if i % 2 == 0 { 1.0 } else { 2.0 }, 2.0)?;
        let agrees = omega.members().all(|m| r.weight.value(&m).ok() == w.value(&m).ok());
        if !agrees || !r.violations().is_empty() {
            bad += 1;
        }
    }
    add("dyadic extensions", bad == 0, format!("{bad} of 10 instances fail"));

    let mut spectrum: f64 = 0.0;
    for _ in 0..100 {
        let arc = UnitArc::new(rng.gen_range(0.0..1.0), (-rng.gen_range(0.0..12.0f64)).exp2())?;
        for (k, m) in theta_measure_spectrum(&arc) {
            if k >= 2 {
                spectrum = spectrum.max(m * (k as f64).exp2());
            }
        }
    }
    let trees: Vec<TreeWeight> = (0..4).map(|i| cascade_weight((i as f64 + 0.5) / 4.0, 5, 0.5, rng)).collect::<Result<_>>()?;
    let fam = ArcFamily::standard(&FamilySpec { center_bits: 3, length_octaves: 3, random_arcs: 20, seed: 1 });
    let gap = log_minkowski_gap(&GeoAverage::new(&trees)?, &fam, &Resolution::default());
    let pairs: Vec<(DiscPoint, DiscPoint)> = (0..100)
        .map(|_| {
            let mut p = || DiscPoint::from_polar(1.0 - (-rng.gen_range(0.0..10.0f64)).exp2(), rng.gen_range(0.0..1.0));
            Ok((p()?, p()?))
        })
        .collect::<Result<_>>()?;
    let beta = avg_beta_check(&pairs, 10);
    add(
        "θ-averaging",
        spectrum <= 4.0 && gap <= 1e-9 && beta.max_ratio <= 50.0,
        format!("bucket {spectrum:.3}, Minkowski gap {gap:.1e}, β ratio {:.3}", beta.max_ratio),
    );

    let omega = ContinuousDomain::new(vec![UnitArc::new(0.1, 0.2)?, UnitArc::new(0.17, 0.15)?])?;
    let run = extend_continuous(&SampledWeight::constant(2.0), &omega, 2.0, 2.0, 5, 2, &fam)?;
    add("continuous pipeline on a constant", run.log_gap <= 1e-12, format!("log-gap {:.1e}, constant {:.6}", run.log_gap, run.constant));

    let k = Martingale::Kahane;
    let fig = k.level_values(2)? == [1.0, -1.0, -1.0, 1.0]
        && k.level_values(4)? == [2.0, 0.0, 0.0, 2.0, 0.0, -2.0, -2.0, 0.0, 0.0, -2.0, -2.0, 0.0, 2.0, 0.0, 0.0, 2.0];
    let semi = bloch_seminorm(&k, 12)?;
    let walk = (2..=12u32).all(|n| {
        let i = DyadicInterval::new(n, (1u128 << (n - 1)) - 1).expect("level below the limit");
        Martingale::RandomWalk.value(&i).ok() == Some(n as f64 - 2.0)
    });
    let mid = midpoint_violation(&k, 10, 60, 1000, rng)?.max(midpoint_violation(&Martingale::RandomWalk, 10, 60, 1000, rng)?);
    add("martingales", fig && semi <= 2.0 && walk && mid == 0.0, format!("Kahane seminorm {semi}, midpoint error {mid}"));

    let k_grid: Vec<u32> = (1..=14).collect();
    let fit = azuma_fit(&k, &DyadicInterval::root(), &[0.3, 0.5, 0.7], &k_grid)?;
    add("Azuma fit", fit.gamma >= 0.05 && fit.c_fit <= 10.0, format!("γ̂ {:.3}, Ĉ {:.3}", fit.gamma, fit.c_fit));

    let spec = BuildSpec { thresholds: Thresholds::JLogJ { c: 1.0 }, generations: 2, ..BuildSpec::default() };
    let built = counterexample_build(&k, &spec)?;
    let ok = built.completed == 2
        && built
            .ledger
            .iter()
            .all(|g| g.min_score >= g.threshold && g.min_parent_ratio >= 0.25 && g.max_parent_ratio <= 0.5 && g.separated);
    add("sequence builder", ok, format!("{} points in {} generations", built.sequence.len(), built.completed));
    Ok(out)
}

pub(crate) fn run(_cfg: SelftestConfig, ctx: &mut Ctx) -> Result<Outcome> {
    let seed = *ctx.seed.get_or_insert(DEFAULT_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = checks(&mut rng)?;
    let mut table = Table::new("selftest", &[("check", "invariant group"), ("pass", "true or false"), ("detail", "measured values")]);
    let mut violations = Vec::new();
    for c in &results {
        table.push(vec![c.name.to_string(), c.pass.to_string(), c.detail.clone()]);
        if !c.pass {
            violations.push(format!("{}: {}", c.name, c.detail));
        }
    }
    Ok(Outcome {
        config: json!({}),
        certificates: json!({"checks": results.iter().map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail})).collect::<Vec<_>>()}),
        violations,
        tables: vec![table],
        artifacts: Vec::new(),
    })
}
