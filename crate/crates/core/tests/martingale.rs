use approx::assert_relative_eq;
use dyadlab::geometry::{node_point, one_minus_rho_sq, GridNode};
use dyadlab::martingale::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kahane's martingale built quarter by quarter: odd levels copy, even levels add (1,-1,-1,1).
fn kahane_rows(depth: u32) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0]];
    for level in 1..=depth {
        let prev = rows.last().unwrap();
        let row = if level % 2 == 1 {
            prev.iter().flat_map(|&v| [v, v]).collect()
        } else {
            let grand = &rows[rows.len() - 2];
            grand.iter().flat_map(|&v| [v + 1.0, v - 1.0, v - 1.0, v + 1.0]).collect()
        };
        rows.push(row);
    }
    rows
}

fn random_walk_oracle(level: u32, index: u128) -> f64 {
    (0..level).map(|i| if (index >> (level - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 }).sum()
}

fn node(addr: &str) -> DyadicInterval {
    DyadicInterval::parse(addr).unwrap()
}

fn seq(addrs: &[&str]) -> PointSeq {
    PointSeq::new(0.0, addrs.iter().map(|a| SeqEntry { address: node(a), generation: 0 }).collect()).unwrap()
}

fn disc_point(n: &DyadicInterval) -> dyadlab::geometry::DiscPoint {
    node_point(&GridNode::new(0.0, n.level(), n.index() as u64).unwrap())
}

#[test]
fn kahane_first_generations() {
    let m = Martingale::Kahane;
    assert_eq!(m.level_values(1).unwrap(), vec![0.0, 0.0]);
    assert_eq!(m.level_values(2).unwrap(), vec![1.0, -1.0, -1.0, 1.0]);
    assert_eq!(m.level_values(3).unwrap(), vec![1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0]);
    let row4 = [2.0, 0.0, 0.0, 2.0, 0.0, -2.0, -2.0, 0.0, 0.0, -2.0, -2.0, 0.0, 2.0, 0.0, 0.0, 2.0];
    assert_eq!(m.level_values(4).unwrap(), row4.to_vec());
}

#[test]
fn kahane_matches_the_quarter_construction() {
    let rows = kahane_rows(14);
    let m = Martingale::Kahane;
    for (level, row) in rows.iter().enumerate() {
        assert_eq!(&m.level_values(level as u32).unwrap(), row);
        for (j, v) in row.iter().enumerate().step_by(37) {
            assert_eq!(m.value(&DyadicInterval::new(level as u32, j as u128).unwrap()).unwrap(), *v);
        }
    }
    let seminorm = rows.iter().flat_map(|r| r.windows(2).map(|w| (w[0] - w[1]).abs())).fold(0.0, f64::max);
    assert_eq!(seminorm, 2.0);
    assert_eq!(bloch_seminorm(&m, 14).unwrap(), 2.0);
}

#[test]
fn kahane_extremal_path_grows_linearly() {
    for k in (2..=120).step_by(2) {
        let v = Martingale::Kahane.value(&DyadicInterval::new(k, 0).unwrap()).unwrap();
        assert_eq!(v, k as f64 / 2.0);
    }
}

#[test]
fn random_walk_on_the_central_intervals() {
    let m = Martingale::RandomWalk;
    assert_eq!(m.value(&DyadicInterval::root()).unwrap(), 0.0);
    for k in 2..=12u32 {
        // I_k = [1/2 - 2^-k, 1/2) and J_k = [1/2, 1/2 + 2^-k)
        let i = DyadicInterval::new(k, (1u128 << (k - 1)) - 1).unwrap();
        let j = DyadicInterval::new(k, 1u128 << (k - 1)).unwrap();
        assert_eq!(i.right_neighbor(), Some(j));
        assert_eq!(m.value(&i).unwrap(), k as f64 - 2.0);
        assert_eq!(m.value(&j).unwrap(), -(k as f64 - 2.0));
    }
}

#[test]
fn random_walk_seminorm_is_attained_at_the_center() {
    for depth in 1..=12u32 {
        let mut best: f64 = 0.0;
        for level in 1..=depth {
            for j in 0..(1u128 << level) - 1 {
                best = best.max((random_walk_oracle(level, j) - random_walk_oracle(level, j + 1)).abs());
            }
        }
        assert_eq!(bloch_seminorm(&Martingale::RandomWalk, depth).unwrap(), best);
        assert_eq!(best, f64::max(2.0, 2.0 * (depth as f64 - 2.0)));
    }
}

#[test]
fn midpoint_law_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in [Martingale::Kahane, Martingale::RandomWalk] {
        assert_eq!(midpoint_violation(&m, 12, 100, 10_000, &mut rng).unwrap(), 0.0);
    }
    let tree = TreeMartingale::random_signs(12, &mut rng).unwrap();
    assert_eq!(midpoint_violation(&Martingale::Materialized(tree), 12, 12, 0, &mut rng).unwrap(), 0.0);
    let mut bad = vec![0.0; 7];
    bad[1] = 1.0;
    assert!(TreeMartingale::new(2, bad).is_err());
}

#[test]
fn azuma_trivial_cases() {
    let base = DyadicInterval::root();
    assert_eq!(azuma_counts(&Martingale::Kahane, &base, 1.0, 10).unwrap(), 0);
    for k in 1..=16 {
        assert_eq!(azuma_counts(&Martingale::RandomWalk, &base, 1.0, k).unwrap(), 0);
    }
    // |S_k| > k/2 by brute force over all paths
    let k = 14;
    let brute = (0..1u128 << k).filter(|&j| random_walk_oracle(k, j).abs() > 0.5 * k as f64).count() as u64;
    assert_eq!(azuma_counts(&Martingale::RandomWalk, &base, 0.5, k).unwrap(), brute);
}

#[test]
fn azuma_counts_match_enumeration_below_deep_bases() {
    let rows = kahane_rows(16);
    for (base_level, base_index) in [(0u32, 0u128), (2, 3), (3, 5)] {
        let base = DyadicInterval::new(base_level, base_index).unwrap();
        let m0 = rows[base_level as usize][base_index as usize];
        for k in [4u32, 9, 13] {
            let row = &rows[(base_level + k) as usize];
            let first = (base_index << k) as usize;
            let brute = row[first..first + (1 << k)].iter().filter(|v| (*v - m0).abs() > 0.3 * k as f64).count() as u64;
            assert_eq!(azuma_counts(&Martingale::Kahane, &base, 0.3, k).unwrap(), brute);
        }
    }
}

#[test]
fn kahane_azuma_fit() {
    let k_grid: Vec<u32> = (1..=20).collect();
    let fit = azuma_fit(&Martingale::Kahane, &DyadicInterval::root(), &[0.3, 0.5, 0.7], &k_grid).unwrap();
    println!("Kahane: γ̂ = {:.4}, Ĉ = {:.4} (envelope {:.4}), zero counts {}", fit.gamma, fit.c_fit, fit.c_envelope, fit.zero_counts);
    assert!(fit.gamma >= 0.05);
    assert!(fit.c_fit <= 10.0);
    for p in &fit.points {
        let bound = (p.k as f64).exp2() * fit.c_envelope * (-fit.gamma * p.eps * p.eps * p.k as f64).exp();
        assert!(p.count as f64 <= bound * (1.0 + 1e-12));
    }
}

#[test]
fn random_martingales_obey_azuma() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k_grid: Vec<u32> = (2..=16).collect();
    for _ in 0..20 {
        let m = Martingale::Materialized(TreeMartingale::random_signs(16, &mut rng).unwrap());
        let fit = azuma_fit(&m, &DyadicInterval::root(), &[0.3, 0.5, 0.7], &k_grid).unwrap();
        assert!(fit.gamma > 0.05, "γ̂ = {}", fit.gamma);
        assert!(fit.c_envelope.is_finite());
    }
}

#[test]
fn carleson_of_a_single_point() {
    let s = seq(&["0110"]);
    let r = carleson_sup(&s, &default_probes(&s)).unwrap();
    assert_relative_eq!(r.sup, 1.0, epsilon = 1e-15);
    assert_eq!(r.argmax, node("0110"));
}

#[test]
fn carleson_of_a_radial_chain() {
    let addrs: Vec<String> = (1..=12).map(|j| "0".repeat(j)).collect();
    let refs: Vec<&str> = addrs.iter().map(String::as_str).collect();
    let s = seq(&refs);
    let closed: f64 = (1..=12).map(|j| (-(j as f64)).exp2() * (2.0 - (-(j as f64)).exp2())).sum();
    let at_root = carleson_sup(&s, &[DyadicInterval::root()]).unwrap();
    assert_relative_eq!(at_root.sup, closed, max_relative = 1e-14);
    let r = carleson_sup(&s, &default_probes(&s)).unwrap();
    println!("radial chain: sup {:.4} at {:?}, box sup {:.4}", r.sup, r.argmax.address(), r.box_sup);
    assert!(r.sup >= closed && r.sup <= 2.5);
}

#[test]
fn rho_terms_agree_with_disc_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let mut pick = || {
            let level = rng.gen_range(0..20u32);
            DyadicInterval::new(level, rng.gen_range(0..1u128 << level)).unwrap()
        };
        let (a, b) = (pick(), pick());
        let (rho_sq, one_minus) = rho_terms(&a, &b);
        let direct = one_minus_rho_sq(&disc_point(&a), &disc_point(&b));
        assert!((one_minus - direct).abs() <= 1e-9 * direct.max(1e-6), "{a:?} {b:?}: {one_minus} vs {direct}");
        assert!((rho_sq + one_minus - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn constant_martingale_reduces_traces_to_carleson() {
    let zero = Martingale::Materialized(TreeMartingale::new(12, vec![0.0; (1 << 13) - 1]).unwrap());
    let s = seq(&["0", "01", "0110", "111", "1010101", "110011001100"]);
    let probes = default_probes(&s);
    let c = carleson_sup(&s, &probes).unwrap();
    let t = trace_sup_i(&s, &zero, 3.0, &probes, &default_r_grid(50)).unwrap();
    assert_relative_eq!(t.value, c.sup, max_relative = 1e-12);
    for z in &probes {
        let w = trace_weak_l1(&s, &zero, 3.0, z).unwrap();
        assert!(w.norm <= c.sup * (1.0 + 1e-12));
    }
    let single = seq(&["0110"]);
    let w = trace_weak_l1(&single, &Martingale::Kahane, 0.5, &node("1")).unwrap();
    let (rho_sq, mass) = rho_terms(&node("1"), &node("0110"));
    let d2 = (Martingale::Kahane.value(&node("0110")).unwrap() - 0.0f64).powi(2);
    assert_relative_eq!(w.norm, (0.5 * d2 / -(1.0 - rho_sq).ln()).exp() * mass, max_relative = 1e-12);
}

#[test]
fn traces_grow_with_lambda() {
    let spec = BuildSpec { thresholds: Thresholds::JLogJ { c: 1.0 }, generations: 2, ..BuildSpec::default() };
    let built = counterexample_build(&Martingale::Kahane, &spec).unwrap();
    let s = &built.sequence;
    let probes = default_probes(s);
    let grid = default_r_grid(40);
    let mut last = 0.0;
    for lambda in [0.0, 0.05, 0.2, 0.5, 1.0] {
        let t = trace_sup_i(s, &Martingale::Kahane, lambda, &probes, &grid).unwrap();
        assert!(t.value.is_finite() && t.value >= last);
        last = t.value;
    }
}

#[test]
fn builder_output_satisfies_its_ledger() {
    let spec = BuildSpec { thresholds: Thresholds::JLogJ { c: 1.0 }, generations: 4, ..BuildSpec::default() };
    let built = counterexample_build(&Martingale::Kahane, &spec).unwrap();
    assert_eq!(built.completed, 4, "{:?}", built.exhausted);
    let entries = built.sequence.entries();
    for e in entries {
        let v = Martingale::Kahane.value(&e.address).unwrap();
        let s = built.thresholds[e.generation as usize - 1];
        assert!(v * v / -e.address.mass().ln() >= s);
        assert!(e.address.level() <= spec.depth_budget);
    }
    // each point of Λ_j has disjoint successors with total mass in [¼,½] of its own
    let mut parents = vec![DyadicInterval::root()];
    for j in 1..=4u32 {
        let gen: Vec<DyadicInterval> = entries.iter().filter(|e| e.generation == j).map(|e| e.address).collect();
        for p in &parents {
            let kids: Vec<&DyadicInterval> = gen.iter().filter(|c| p.is_ancestor_of(c)).collect();
            let ratio = kids.iter().map(|c| c.mass()).sum::<f64>() / p.mass();
            assert!((0.25..=0.5).contains(&ratio), "generation {j}: ratio {ratio}");
            for (a, b) in kids.iter().zip(kids.iter().skip(1)) {
                assert!(!a.is_ancestor_of(b) && !b.is_ancestor_of(a));
            }
        }
        let mass: f64 = gen.iter().map(|c| c.mass()).sum();
        assert!(mass >= 0.25f64.powi(j as i32));
        assert!(built.ledger[j as usize - 1].separated);
        parents = gen;
    }
    for lambda in [0.5, 1.0] {
        let t = divergence_terms(&built.sequence, &built.thresholds, lambda).unwrap();
        for (j, (tj, s)) in t.iter().zip(&built.thresholds).enumerate() {
            assert!(*tj >= (lambda * s).exp() * 0.25f64.powi(j as i32 + 1));
        }
    }
    let c = carleson_sup(&built.sequence, &default_probes(&built.sequence)).unwrap();
    println!("builder output: carleson sup {:.4}, box sup {:.4}", c.sup, c.box_sup);
    // a box holds its first sequence points (mass <= 2|I|) and their telescoping descendants
    assert!(c.sup.is_finite() && c.box_sup <= 4.0);
}

#[test]
fn default_thresholds_report_exhaustion() {
    let built = counterexample_build(&Martingale::Kahane, &BuildSpec::default()).unwrap();
    println!("default build: completed {}, root ratio {:?}", built.completed, built.best_root_ratio);
    if built.completed < 4 {
        assert!(built.exhausted.is_some());
    }
}

#[test]
fn oversized_generation_stops_the_build() {
    // three generations at c = 1 are feasible only through a second generation of ~3e5 points
    let spec = BuildSpec { thresholds: Thresholds::JLogJ { c: 1.0 }, generations: 3, ..BuildSpec::default() };
    let built = counterexample_build(&Martingale::Kahane, &spec).unwrap();
    assert_eq!(built.completed, 1);
    assert!(built.exhausted.as_deref().unwrap().contains("point budget"));
    let small = BuildSpec { point_budget: 1_000_000, node_budget: 10, ..spec };
    let built = counterexample_build(&Martingale::Kahane, &small).unwrap();
    assert!(built.exhausted.as_deref().unwrap().contains("node budget"));
}

#[test]
fn sequence_json_round_trips() {
    let s = seq(&["0", "0110", "1"]);
    let text = serde_json::to_string(&s).unwrap();
    assert!(text.contains("\"0110\""));
    let back: PointSeq = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
    let dup = r#"{"grid_theta": 0.0, "entries": [{"address": "01"}, {"address": "01"}]}"#;
    assert!(serde_json::from_str::<PointSeq>(dup).is_err());
}

proptest! {
    #[test]
    fn parse_and_address_round_trip(bits in proptest::collection::vec(0u8..2, 0..120)) {
        let addr: String = bits.iter().map(|b| char::from(b'0' + b)).collect();
        let n = DyadicInterval::parse(&addr).unwrap();
        prop_assert_eq!(n.address(), addr);
        if let Some(p) = n.parent() {
            prop_assert!(p.is_ancestor_of(&n));
        }
    }

    #[test]
    fn random_walk_agrees_with_digit_sums(level in 0u32..100, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index = if level == 0 { 0 } else { rng.gen::<u128>() >> (128 - level) };
        let n = DyadicInterval::new(level, index).unwrap();
        prop_assert_eq!(Martingale::RandomWalk.value(&n).unwrap(), random_walk_oracle(level, index));
    }
}
