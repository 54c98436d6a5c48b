use approx::assert_relative_eq;
use dyadlab::factor::*;
use dyadlab::lattice::*;
use dyadlab::sample::{cascade_weight, radial_power, random_domain, rough_weight};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn dominance_and_sublinearity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..20 {
        let w = cascade_weight(0.0, 6, 0.6, &mut rng).unwrap();
        let f = rough_weight(0.0, 6, 1.5, &mut rng).unwrap();
        let g = rough_weight(0.0, 6, 1.5, &mut rng).unwrap();
        let omega = random_domain(0.0, 6, 0.2, &mut rng).unwrap();
        let om = if i % 2 == 0 { None } else { Some(&omega) };
        let p = [1.3, 1.7, 2.0][i % 3];
        let sf = op_s(&f, &w, p, om).unwrap();
        let m1 = maximal(&f.zip_with(&w, |a, b| a * b).unwrap(), om).unwrap();
        let m2 = maximal(&f.powf(1.0 / (p - 1.0)).unwrap(), om).unwrap();
        for h in 0..sf.values().len() {
            let s = sf.values()[h];
            assert!(m1.values()[h] <= s * w.values()[h] * (1.0 + 1e-12));
            assert!(m2.values()[h].powf(p - 1.0) <= s * (1.0 + 1e-12));
        }
        let sum = f.zip_with(&g, |a, b| a + b).unwrap();
        let s_sum = op_s(&sum, &w, p, om).unwrap();
        let sg = op_s(&g, &w, p, om).unwrap();
        for h in 0..sf.values().len() {
            assert!(s_sum.values()[h] <= (sf.values()[h] + sg.values()[h]) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn norm_bound_dominates_measured_ratios() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = cascade_weight(0.0, 7, 0.5, &mut rng).unwrap();
    let omega = random_domain(0.0, 7, 0.15, &mut rng).unwrap();
    for p in [1.5, 2.0] {
        let full = s_norm_bound(&w, p, None, NormMode::FullDisc).unwrap();
        let (q, delta) = (2.0, 0.75);
        let restricted = s_norm_bound(&w, p, Some(&omega), NormMode::Restricted { q, delta }).unwrap();
        let wdq = w.powf(delta * q).unwrap();
        for _ in 0..100 {
            let f = rough_weight(0.0, 7, 3.0, &mut rng).unwrap();
            let r = dual_norm(&op_s(&f, &w, p, None).unwrap(), &w, p, None).unwrap() / dual_norm(&f, &w, p, None).unwrap();
            assert!(r <= full, "{r} > {full}");
            let om = Some(&omega);
            let r = dual_norm(&op_s(&f, &wdq, p, om).unwrap(), &wdq, p, om).unwrap() / dual_norm(&f, &wdq, p, om).unwrap();
            assert!(r <= restricted, "{r} > {restricted}");
        }
    }
}

#[test]
fn random_bho_weights_factor_within_certificates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let w = cascade_weight(0.0, 8, 0.5, &mut rng).unwrap();
        let r = factor(&w, 2.0, None, NormMode::FullDisc, 40).unwrap();
        assert!(r.violations().is_empty(), "{:?}", r.violations());
        assert!(r.b1_w1 <= 2.0 * r.s_norm_bound);
        assert!(r.b1_w2 <= 2.0 * r.s_norm_bound);
        assert!(r.reconstruction_residual <= 1e-10);
        let f = r.w2.values();
        let (m1, m2) = (maximal(&r.w1, None).unwrap(), maximal(&r.w2, None).unwrap());
        for (h, fh) in f.iter().enumerate() {
            assert!(m2.values()[h] <= 2.0 * r.s_norm_bound * fh * (1.0 + 1e-9));
            assert!(m1.values()[h] <= 2.0 * r.s_norm_bound * r.w1.values()[h] * (1.0 + 1e-9));
        }
    }
}

#[test]
fn other_exponents_and_restricted_domains() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in [1.5, 3.0, 4.0] {
        let w = cascade_weight(0.0, 7, 0.4, &mut rng).unwrap();
        let r = factor(&w, p, None, NormMode::FullDisc, DEFAULT_TERMS).unwrap();
        assert!(r.violations().is_empty(), "p={p}: {:?}", r.violations());
        let omega = random_domain(0.0, 7, 0.1, &mut rng).unwrap();
        let r = factor(&w, p, Some(&omega), NormMode::Restricted { q: 2.0, delta: 0.75 }, DEFAULT_TERMS).unwrap();
        assert!(r.violations().is_empty(), "p={p} restricted: {:?}", r.violations());
        let target = w.powf(1.5).unwrap();
        for ((a, b), v) in r.w1.values().iter().zip(r.w2.values()).zip(target.values()) {
            assert_relative_eq!(a * b.powf(1.0 - p), *v, max_relative = 1e-10);
        }
    }
}

#[test]
fn radial_weight_factors_have_finite_oscillation() {
    let w = radial_power(0.0, 8, 0.5).unwrap();
    let r = factor_bho_full(&w, 2.0).unwrap();
    assert!(r.result.violations().is_empty());
    assert!(r.l_w1.is_finite() && r.l_w2.is_finite());
    // factoring the product again gives a valid factorization of the same weight
    let product = r.result.w1.zip_with(&r.result.w2, |a, b| a / b).unwrap();
    let again = factor_bho_full(&product, 2.0).unwrap();
    assert!(again.result.violations().is_empty());
    for (a, b) in product.values().iter().zip(w.values()) {
        assert_relative_eq!(*a, *b, max_relative = 1e-10);
    }
}
