mod common;

use common::*;
use landmarks::christoffel::christoffel_inverse_det;
use landmarks::{
    christoffel_inverse, christoffel_inverse_projection, christoffel_inverse_soft, qp_oracle,
    ChristoffelQuery,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_query(n: usize, c: usize, gamma: f64, rng: &mut ChaCha8Rng) -> ChristoffelQuery {
    let idx = rand::seq::index::sample(rng, n, c + 1).into_vec();
    ChristoffelQuery::new(idx[0], idx[1..].to_vec(), gamma)
}

#[test]
fn schur_determinant_and_projection_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for inst in 0..20 {
        let s = setup(15, 2, 1.0, 0.1, 100 + inst);
        let q = random_query(15, 4, 0.1, &mut rng);
        let schur = christoffel_inverse(&s.p, &q).unwrap();
        let det = christoffel_inverse_det(&s.p, &q).unwrap().value;
        let proj = christoffel_inverse_projection(&s.p, &q).unwrap();
        assert!(relative_gap(schur, det) < 1e-8, "{schur} {det}");
        assert!(relative_gap(schur, proj) < 1e-8, "{schur} {proj}");
    }
}

#[test]
fn determinant_ratio_is_marginal_probability_ratio() {
    let s = setup(12, 2, 0.8, 0.05, 7);
    let q = ChristoffelQuery::new(3, vec![0, 7, 9], 0.05);
    let mut with_z = q.exclusion.clone();
    with_z.push(q.z);
    let p = s.p.entries();
    let num = submatrix(p, &with_z, &with_z).determinant();
    let den = submatrix(p, &q.exclusion, &q.exclusion).determinant();
    let value = christoffel_inverse(&s.p, &q).unwrap();
    assert!(relative_gap(value * 12.0, num / den) < 1e-10);
}

#[test]
fn qp_reciprocal_and_feasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for inst in 0..10 {
        let n = 10 + 4 * inst as usize;
        let gamma = 10f64.powf(-rng.random_range(0.5..2.5));
        let s = setup(n, 2, 1.0, gamma, 200 + inst);
        let c = rng.random_range(0..5usize);
        let q = random_query(n, c, gamma, &mut rng);
        let sol = qp_oracle(&s.k, &q, None).unwrap();
        let inv = christoffel_inverse(&s.p, &q).unwrap();
        assert!((sol.value * inv - 1.0).abs() < 1e-7, "n={n} {} {}", sol.value, inv);

        let f = s.k.entries() * &sol.alpha;
        assert!((f[q.z] - 1.0).abs() < 1e-8);
        for &j in &q.exclusion {
            assert!(f[j].abs() < 1e-8);
        }
        assert!(relative_gap(sol.objective * (n * n) as f64, sol.value) < 1e-12);

        let r = residual_dense(s.p.entries(), &q.exclusion);
        let closed = inverse(s.k.entries()) * r.column(q.z) / r[(q.z, q.z)];
        let gap = (&closed - &sol.alpha).norm() / closed.norm();
        assert!(gap < 1e-6, "alpha gap {gap}");
    }
}

#[test]
fn soft_form_matches_weighted_qp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for inst in 0..5 {
        let s = setup(15, 2, 1.0, 0.1, 300 + inst);
        let q = random_query(15, 4, 0.1, &mut rng).soft(1e-3);
        let soft = christoffel_inverse_soft(&s.p, &q).unwrap();

        let weights: Vec<f64> = (0..15)
            .map(|i| if q.exclusion.contains(&i) { 1.0 + 1e3 } else { 1.0 })
            .collect();
        let sol = qp_oracle(&s.k, &q, Some(&weights)).unwrap();
        assert!((sol.value * soft - 1.0).abs() < 1e-6);
        let implicit = qp_oracle(&s.k, &q, None).unwrap();
        assert!(relative_gap(implicit.value, sol.value) < 1e-12);

        let hard = christoffel_inverse(&s.p, &ChristoffelQuery::new(q.z, q.exclusion.clone(), 0.1)).unwrap();
        assert!(soft >= hard - 1e-12);
    }
}

#[test]
fn monotone_under_exclusion_growth_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for inst in 0..10 {
        let n = 20;
        let s = setup(n, 2, 1.0, 0.05, 400 + inst);
        let order = rand::seq::index::sample(&mut rng, n, 8).into_vec();
        let z = order[0];
        let upper = s.p.entries().diagonal().max() / n as f64;
        let mut prev = f64::INFINITY;
        for m in 0..8 {
            let q = ChristoffelQuery::new(z, order[1..=m.min(7)].to_vec(), 0.05);
            let v = christoffel_inverse(&s.p, &q).unwrap();
            assert!(v <= prev + 1e-12);
            assert!((0.0..=upper + 1e-15).contains(&v));
            prev = v;
        }
    }
}

#[test]
fn soft_form_tends_to_scaled_leverage() {
    let s = setup(15, 2, 1.0, 0.1, 500);
    let q = ChristoffelQuery::new(2, vec![0, 5, 9], 0.1).soft(1e8);
    let v = christoffel_inverse_soft(&s.p, &q).unwrap();
    assert!((v - s.p.entries()[(2, 2)] / 15.0).abs() < 1e-6);
}

#[test]
fn soft_form_approaches_hard_form() {
    let s = setup(15, 3, 1.0, 0.1, 600);
    let hard_q = ChristoffelQuery::new(4, vec![1, 8, 11, 14], 0.1);
    let hard = christoffel_inverse(&s.p, &hard_q).unwrap();
    let mut prev_gap = f64::INFINITY;
    for eps in [1e-2, 1e-4, 1e-6] {
        let soft = christoffel_inverse_soft(&s.p, &hard_q.clone().soft(eps)).unwrap();
        let gap = (soft - hard) / hard;
        assert!(gap >= -1e-12 && gap < prev_gap);
        prev_gap = gap;
    }
    assert!(prev_gap <= 1e-4);
}
