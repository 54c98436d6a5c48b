//! Continuous weights, shifted-grid averaging and the continuous extension pipeline.

mod pipeline;
pub mod region;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::geometry::{beta_dyadic, beta_hyperbolic, DiscPoint, UnitArc};
use region::{rect_nodes, region_pieces, top_band, PolarRect};

pub use pipeline::{
    covering_check, dyadic_restriction, extend_continuous, geo_average, good_nodes, log_minkowski_gap, omega_samples, probe_points,
    restricted_oscillation, ContinuousExtension, CoveringCheck, DyadicRestriction, GeoAverage, ThetaDiagnostics, ThetaFamily,
    GOOD_FRACTION,
};

/// `Ω = ∪ T(I)` over a list of generator arcs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDomain {
    generators: Vec<UnitArc>,
}

impl ContinuousDomain {
    pub fn new(generators: Vec<UnitArc>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::EmptyDomain("a continuous domain needs at least one generator".into()));
        }
        for g in &generators {
            UnitArc::new(g.center(), g.length())?;
        }
        Ok(Self { generators })
    }

    pub fn generators(&self) -> &[UnitArc] {
        &self.generators
    }

    pub fn contains(&self, z: &DiscPoint) -> bool {
        let r = z.modulus();
        let t = z.angle();
        self.generators.iter().any(|g| {
            let (a, b) = top_band(g);
            a <= r && r < b && g.contains_angle(t)
        })
    }

    /// Smallest radius reached by Ω.
    pub fn inner_radius(&self) -> f64 {
        self.generators.iter().map(|g| top_band(g).0).fold(1.0, f64::min)
    }
}

/// Quadrature settings for region averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Gauss–Legendre points per direction on each polar rectangle.
    pub nodes: usize,
    /// Radial dyadic bands used for Carleson boxes on the full disc.
    pub bands: u32,
    /// Upper bound on angular splits of a rectangle.
    pub max_split: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { nodes: 3, bands: 8, max_split: 8 }
    }
}

type Evaluator = dyn Fn(&DiscPoint) -> f64 + Send + Sync;

/// A positive weight given by an evaluator.
#[derive(Clone)]
pub struct SampledWeight {
    eval: Arc<Evaluator>,
    /// Continuous oscillation constant `L` with `|log w(z) - log w(ζ)| <= L (1 + β(z,ζ))`, when known.
    pub oscillation: Option<f64>,
    pub resolution: Resolution,
}

impl std::fmt::Debug for SampledWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampledWeight")
            .field("oscillation", &self.oscillation)
            .field("resolution", &self.resolution)
            .finish_non_exhaustive()
    }
}

impl SampledWeight {
    pub fn new(f: impl Fn(&DiscPoint) -> f64 + Send + Sync + 'static, oscillation: Option<f64>) -> Self {
        Self { eval: Arc::new(f), oscillation, resolution: Resolution::default() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, Some(0.0))
    }

    /// `(1-|z|^2)^alpha`; its oscillation constant is `|alpha|` times that of `1-|z|^2`, which is at most 2.
    pub fn radial_power(alpha: f64) -> Self {
        Self::new(move |z| z.mass().powf(alpha), Some(2.0 * alpha.abs()))
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn eval(&self, z: &DiscPoint) -> f64 {
        (self.eval)(z)
    }

    pub fn powf(&self, a: f64) -> Self {
        let inner = self.eval.clone();
        Self { eval: Arc::new(move |z| inner(z).powf(a)), oscillation: self.oscillation.map(|l| l * a.abs()), resolution: self.resolution }
    }
}

/// Lebesgue measure of `{θ : |P_θ(I)| = 2^{k-N}}` for each `k`, where `2^{-N} <= |I| < 2^{-N+1}`.
pub fn theta_measure_spectrum(arc: &UnitArc) -> BTreeMap<u32, f64> {
    let l = arc.length();
    let n = if l >= 1.0 { 0 } else { (-l.log2()).ceil() as u32 };
    // probability that I fits inside a grid arc of level m
    let fits = |m: u32| -> f64 {
        if m == 0 {
            1.0
        } else {
            (1.0 - l * (m as f64).exp2()).max(0.0)
        }
    };
    (0..=n).map(|k| (k, fits(n - k) - fits(n - k + 1))).collect()
}

/// A reproducible family of arcs for continuous suprema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcFamily {
    pub arcs: Vec<UnitArc>,
}

/// Parameters of [`ArcFamily::standard`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    /// Centers on the grid `j 2^-center_bits`.
    pub center_bits: u32,
    /// Lengths `2^{-j/2}` for `j = 0..=2 * length_octaves`.
    pub length_octaves: u32,
    pub random_arcs: usize,
    pub seed: u64,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self { center_bits: 7, length_octaves: 6, random_arcs: 1000, seed: 7 }
    }
}

impl ArcFamily {
    pub fn standard(spec: &FamilySpec) -> Self {
        let mut arcs = Vec::new();
        let centers = 1u64 << spec.center_bits;
        for j in 0..=2 * spec.length_octaves {
            let len = (-(j as f64) / 2.0).exp2();
            for c in 0..centers {
                arcs.push(UnitArc::new(c as f64 / centers as f64, len).expect("valid arc"));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for _ in 0..spec.random_arcs {
            let len = (-rng.gen_range(0.0..spec.length_octaves as f64)).exp2();
            arcs.push(UnitArc::new(rng.gen_range(0.0..1.0), len).expect("valid arc"));
        }
        Self { arcs }
    }

    /// The dyadic arcs of the grid `θ` down to `depth`.
    pub fn dyadic(theta: f64, depth: u32) -> Self {
        let mut arcs = Vec::new();
        for level in 0..=depth {
            for j in 0..(1u64 << level) {
                arcs.push(crate::geometry::GridNode::new(theta, level, j).expect("valid node").arc());
            }
        }
        Self { arcs }
    }
}

/// Quadrature nodes for `S(I) ∩ Ω` (or `S(I)` when `omega` is `None`).
pub fn box_nodes(arc: &UnitArc, omega: Option<&ContinuousDomain>, res: &Resolution) -> Vec<(DiscPoint, f64)> {
    let l = arc.length();
    let mut rects: Vec<PolarRect> = Vec::new();
    match omega {
        None => {
            for j in 0..=res.bands {
                let r0 = 1.0 - l * (-(j as f64)).exp2();
                let r1 = if j == res.bands { 1.0 } else { 1.0 - l * (-(j as f64) - 1.0).exp2() };
                rects.push(PolarRect { r0, r1, t0: arc.start(), dt: l });
            }
        }
        Some(d) => rects = region_pieces(1.0 - l, 1.0, arc, d.generators()),
    }
    let mut out = Vec::new();
    for rect in rects {
        let thick = rect.r1 - rect.r0;
        let parts = ((rect.dt / thick).ceil() as usize).clamp(1, res.max_split);
        for piece in rect.split_angle(parts) {
            rect_nodes(&piece, res.nodes, &mut out);
        }
    }
    out
}

/// `[W]_{B_p,Ω}` over an arc family; `p = 1` gives the `B_1` constant (average over infimum).
pub fn continuous_bp_constant(w: &SampledWeight, p: f64, omega: Option<&ContinuousDomain>, family: &ArcFamily) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(out_of_range(format!("p = {p} must be at least 1")));
    }
    let res = w.resolution;
    let value = family
        .arcs
        .par_iter()
        .map(|arc| {
            let nodes = box_nodes(arc, omega, &res);
            if nodes.is_empty() {
                return 0.0;
            }
            let a = crate::geometry::area_carleson(arc.length()).expect("valid arc");
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut lo = f64::INFINITY;
            for (z, wt) in &nodes {
                let v = w.eval(z);
                s1 += v * wt;
                if p == 1.0 {
                    lo = lo.min(v);
                } else {
                    s2 += v.powf(-1.0 / (p - 1.0)) * wt;
                }
            }
            if p == 1.0 {
                s1 / a / lo
            } else {
                (s1 / a) * (s2 / a).powf(p - 1.0)
            }
        })
        .reduce(|| 0.0, f64::max);
    if !value.is_finite() {
        return Err(Error::Precondition("weight is not finite on the quadrature mesh".into()));
    }
    Ok(value)
}

/// Report of [`avg_beta_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvgBetaReport {
    /// Largest `(∫ β_θ dθ) / (1 + β)`.
    pub max_ratio: f64,
    /// Largest `β / (1 + β_θ)` over all sampled `(z, ζ, θ)`.
    pub max_pointwise: f64,
}

/// θ-averages of the dyadic distance with `2^resolution` midpoint samples.
pub fn avg_beta_check(pairs: &[(DiscPoint, DiscPoint)], resolution: u32) -> AvgBetaReport {
    let count = 1usize << resolution;
    pairs
        .par_iter()
        .map(|(z, w)| {
            let beta = beta_hyperbolic(z, w);
            let mut sum = 0.0;
            let mut pointwise: f64 = 0.0;
            for i in 0..count {
                let theta = (i as f64 + 0.5) / count as f64;
                let b = beta_dyadic(theta, z, w);
                sum += b;
                pointwise = pointwise.max(beta / (1.0 + b));
            }
            AvgBetaReport { max_ratio: sum / count as f64 / (1.0 + beta), max_pointwise: pointwise }
        })
        .reduce(
            || AvgBetaReport { max_ratio: 0.0, max_pointwise: 0.0 },
            |a, b| AvgBetaReport { max_ratio: a.max_ratio.max(b.max_ratio), max_pointwise: a.max_pointwise.max(b.max_pointwise) },
        )
}
