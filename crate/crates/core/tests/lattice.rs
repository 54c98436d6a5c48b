use approx::assert_relative_eq;
use dyadlab::geometry::GridNode;
use dyadlab::lattice::*;
use dyadlab::sample::{cascade_weight, radial_power, random_domain, rough_weight};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Ω-area of the cell of `node`, computed from scratch.
fn omega_cell_area(node: &GridNode, depth: u32, omega: Option<&DyadicDomain>) -> f64 {
    match omega {
        None => cell_area(node.level(), depth),
        Some(d) if d.contains(node) => {
            let l = node.length();
            // T(I) = {1-l <= r < 1-l/2}
            l * ((1.0 - l / 2.0).powi(2) - (1.0 - l).powi(2))
        }
        Some(_) => 0.0,
    }
}

fn brute_integral(w: &TreeWeight, box_node: &GridNode, omega: Option<&DyadicDomain>, power: f64) -> f64 {
    w.nodes().filter(|c| box_node.is_ancestor_of(c)).map(|c| w.value(&c).unwrap().powf(power) * omega_cell_area(&c, w.depth(), omega)).sum()
}

fn brute_bp(w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>) -> f64 {
    w.nodes()
        .filter_map(|i| {
            let a = box_area(i.level());
            let s1 = brute_integral(w, &i, omega, 1.0);
            if s1 == 0.0 {
                return None;
            }
            let s2 = brute_integral(w, &i, omega, -1.0 / (p - 1.0));
            Some(s1 / a * (s2 / a).powf(p - 1.0))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn brute_maximal(f: &TreeWeight, omega: Option<&DyadicDomain>) -> Vec<f64> {
    f.nodes()
        .map(|z| {
            (0..=z.level())
                .map(|l| {
                    let i = z.ancestor_at(l).unwrap();
                    brute_integral(f, &i, omega, 1.0) / box_area(l)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[test]
fn random_box_integrals_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = rough_weight(0.3, 6, 2.0, &mut rng).unwrap();
    let omega = random_domain(0.3, 6, 0.3, &mut rng).unwrap();
    for node in w.nodes() {
        for power in [1.0, -1.0, 0.5] {
            for om in [None, Some(&omega)] {
                let fast = box_integral(&w, &node, om, power).unwrap();
                let slow = brute_integral(&w, &node, om, power);
                assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1e-300), "{fast} vs {slow}");
            }
        }
    }
}

#[test]
fn constant_weight_has_unit_constants() {
    for p in [1.5, 2.0, 3.0] {
        let w = TreeWeight::constant(0.0, 8, 5.0).unwrap();
        assert_relative_eq!(bp_constant(&w, p, None).unwrap(), 1.0, max_relative = 1e-12);
    }
    let w = TreeWeight::constant(0.0, 6, 2.0).unwrap();
    assert_relative_eq!(b1_constant(&w, None).unwrap(), 1.0, max_relative = 1e-12);
    let (c, l) = osc_constants(&w, None).unwrap();
    assert_eq!(c, 1.0);
    assert_eq!(l, 0.0);
    for r in [1.1, 2.0, 4.0] {
        assert_relative_eq!(reverse_holder(&w, r).unwrap(), 1.0, max_relative = 1e-12);
    }
}

#[test]
fn radial_weight_matches_brute_force_sup() {
    let w = radial_power(0.0, 10, 0.5).unwrap();
    let fast = bp_constant(&w, 2.0, None).unwrap();
    let small = radial_power(0.0, 7, 0.5).unwrap();
    assert_relative_eq!(bp_constant(&small, 2.0, None).unwrap(), brute_bp(&small, 2.0, None), max_relative = 1e-12);
    assert!(fast.is_finite() && fast >= 1.0);
}

#[test]
fn maximal_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = rough_weight(0.0, 6, 3.0, &mut rng).unwrap();
    let omega = random_domain(0.0, 6, 0.25, &mut rng).unwrap();
    for om in [None, Some(&omega)] {
        let fast = maximal(&f, om).unwrap();
        let slow = brute_maximal(&f, om);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }
    let c = TreeWeight::constant(0.0, 5, 1.7).unwrap();
    for v in maximal(&c, None).unwrap().values() {
        assert_relative_eq!(*v, 1.7, max_relative = 1e-13);
    }
}

#[test]
fn duality_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let w = cascade_weight(0.0, 8, 0.7, &mut rng).unwrap();
        let omega = random_domain(0.0, 8, 0.1, &mut rng).unwrap();
        for p in [1.5, 2.0, 3.0] {
            for om in [None, Some(&omega)] {
                let lhs = bp_constant(&w, p, om).unwrap().powf(1.0 / (p - 1.0));
                let sigma = w.powf(-1.0 / (p - 1.0)).unwrap();
                let rhs = bp_constant(&sigma, p / (p - 1.0), om).unwrap();
                assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
            }
        }
    }
}

#[test]
fn maximal_power_is_b1() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let w = rough_weight(0.0, 7, 3.0, &mut rng).unwrap();
        let m = maximal(&w, None).unwrap();
        for gamma in [0.25, 0.5, 0.75] {
            let mg = m.powf(gamma).unwrap();
            assert!(b1_constant(&mg, None).unwrap() <= (2.0 - gamma) / (1.0 - gamma));
            // pointwise form M((Mw)^γ) ≤ C (Mw)^γ
            let mm = maximal(&mg, None).unwrap();
            for (a, b) in mm.values().iter().zip(mg.values()) {
                assert!(*a <= (2.0 - gamma) / (1.0 - gamma) * b);
            }
        }
    }
}

#[test]
fn product_of_b1_weights_is_bp() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let w1 = maximal(&rough_weight(0.0, 7, 2.0, &mut rng).unwrap(), None).unwrap().powf(0.5).unwrap();
        let w2 = maximal(&rough_weight(0.0, 7, 2.0, &mut rng).unwrap(), None).unwrap().powf(0.5).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let w = w1.zip_with(&w2, |a, b| a * b.powf(1.0 - p)).unwrap();
            let lhs = bp_constant(&w, p, None).unwrap();
            let rhs = b1_constant(&w1, None).unwrap() * b1_constant(&w2, None).unwrap().powf(p - 1.0);
            assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
        }
    }
}

#[test]
fn weak_type_bounded_by_bp() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..100 {
        let w = cascade_weight(0.0, 8, 0.8, &mut rng).unwrap();
        let f = rough_weight(0.0, 8, 2.5, &mut rng).unwrap();
        let omega = random_domain(0.0, 8, 0.05, &mut rng).unwrap();
        let om = if i % 2 == 0 { None } else { Some(&omega) };
        let p = [1.5, 2.0, 3.0][i % 3];
        let bp = bp_constant(&w, p, om).unwrap();
        let m = maximal(&f, om).unwrap();
        let top = m.values().iter().cloned().fold(0.0, f64::max);
        for t in [0.1, 0.5, 0.9] {
            let r = weak_type_ratio(&w, p, om, &f, t * top).unwrap();
            assert!(r <= bp * (1.0 + 1e-12), "ratio {r} exceeds {bp}");
        }
    }
    let w = cascade_weight(0.0, 6, 0.5, &mut rng).unwrap();
    let one = TreeWeight::constant(0.0, 6, 1.0).unwrap();
    let r = weak_type_ratio(&w, 2.0, None, &one, 0.5).unwrap();
    assert_relative_eq!(r, 0.25, max_relative = 1e-12);
}

#[test]
fn single_box_testing_inequality() {
    // w(S(I)∩Ω) ≤ [w] (A(S(I))/A(K))^p w(K) for K ⊂ S(I)
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let w = cascade_weight(0.0, 8, 0.6, &mut rng).unwrap();
    let p = 2.0;
    let bp = bp_constant(&w, p, None).unwrap();
    let i = GridNode::new(0.0, 2, 1).unwrap();
    let k = GridNode::new(0.0, 6, 21).unwrap();
    assert!(i.is_ancestor_of(&k));
    let lhs = box_integral(&w, &i, None, 1.0).unwrap();
    let rhs = bp * (box_area(2) / box_area(6)).powf(p) * box_integral(&w, &k, None, 1.0).unwrap();
    assert!(lhs <= rhs);
}

#[test]
fn doubling_weight_reverse_holder_grows() {
    let mut prev = 0.0;
    for depth in [4u32, 6, 8, 10] {
        let w = TreeWeight::from_fn(0.0, depth, |n| 4f64.powi(n.level() as i32)).unwrap();
        let rh = reverse_holder(&w, 3.0).unwrap();
        assert!(rh > prev);
        prev = rh;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w = cascade_weight(0.0, 10, 0.3, &mut rng).unwrap();
    assert!(reverse_holder(&w, 1.1).unwrap().is_finite());
}

#[test]
fn oscillation_equivalence_on_full_disc() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let w = cascade_weight(0.0, 6, 0.5, &mut rng).unwrap();
        let (c, l) = osc_constants(&w, None).unwrap();
        assert!(l <= 2.0 * c.ln() + 1e-12, "L={l} C={c}");
        assert!(c <= (3.0 * l).exp() * (1.0 + 1e-12));
    }
}

#[test]
fn squared_distance_weight_is_not_uniformly_oscillating() {
    let mut ls = Vec::new();
    for depth in [4u32, 7, 10] {
        let w = TreeWeight::from_fn(0.0, depth, |n| ((n.level() as f64).powi(2) * 0.05).exp()).unwrap();
        let (c, l) = osc_constants(&w, None).unwrap();
        assert!(c.is_finite());
        ls.push(l);
    }
    assert!(ls[0] < ls[1] && ls[1] < ls[2]);
}

#[test]
fn maximal_function_is_almost_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let f = rough_weight(0.0, 7, 4.0, &mut rng).unwrap();
        let omega = random_domain(0.0, 7, 0.2, &mut rng).unwrap();
        for om in [None, Some(&omega)] {
            let m = maximal(&f, om).unwrap();
            let (c, _) = osc_constants(&m, om).unwrap();
            assert!(c <= 4.0, "C = {c}");
        }
    }
}

#[test]
fn near_constant_weights_on_domains_have_finite_l() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut done = 0;
    while done < 50 {
        let w = cascade_weight(0.0, 7, 0.3, &mut rng).unwrap();
        let omega = random_domain(0.0, 7, 0.1, &mut rng).unwrap();
        let (c, l) = osc_constants(&w, Some(&omega)).unwrap();
        if c > 2.0 {
            continue;
        }
        assert!(bp_constant(&w, 2.0, Some(&omega)).unwrap().is_finite());
        assert!(l.is_finite());
        done += 1;
    }
}

#[test]
fn sampled_l_covers_large_domains() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = cascade_weight(0.0, 13, 0.4, &mut rng).unwrap();
    let (_, l) = osc_constants(&w, None).unwrap();
    assert!(l > 0.0 && l.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bp_at_least_one_on_full_disc(seed in any::<u64>(), p in 1.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = rough_weight(0.0, 5, 2.0, &mut rng).unwrap();
        prop_assert!(bp_constant(&w, p, None).unwrap() >= 1.0 - 1e-12);
        prop_assert!(b1_constant(&w, None).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn maximal_is_positively_homogeneous(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rough_weight(0.0, 5, 2.0, &mut rng).unwrap();
        let m = maximal(&f, None).unwrap();
        let mc = maximal(&f.map(|v| v * c).unwrap(), None).unwrap();
        for (a, b) in m.values().iter().zip(mc.values()) {
            prop_assert!(*a > 0.0);
            prop_assert!((b - c * a).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn scaling_invariance_of_bp(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = cascade_weight(0.0, 6, 0.5, &mut rng).unwrap();
        let a = bp_constant(&w, 2.0, None).unwrap();
        let b = bp_constant(&w.map(|v| v * c).unwrap(), 2.0, None).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }
}
