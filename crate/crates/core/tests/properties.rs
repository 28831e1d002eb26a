use std::collections::BTreeSet;

use proptest::prelude::*;
use twoadic::cmcat::{Catalog, EntryKind};
use twoadic::galimg::{
    adapt_basis, c2_count, dual_kernel, is_adapted_basis, pushforward, pushforward_with_basis,
    rational_cyclic_subgroups, torsion_from_image, RationalCyclic,
};
use twoadic::matgrp::{
    closure, is_conjugate, is_stable_level, twist_by_character, Character, FiniteMatGroup, Mat2,
    Vec2,
};
use twoadic::ring2::{hensel_solve, val2, IntPoly, Residue};
use twoadic::BigInt;

fn naive_mul(x: [u64; 4], y: [u64; 4], n: u32) -> [u64; 4] {
    let m = 1u128 << n;
    let f = |a: u64, b: u64, c: u64, d: u64| {
        ((a as u128 * b as u128 + c as u128 * d as u128) % m) as u64
    };
    [
        f(x[0], y[0], x[1], y[2]),
        f(x[0], y[1], x[1], y[3]),
        f(x[2], y[0], x[3], y[2]),
        f(x[2], y[1], x[3], y[3]),
    ]
}

fn arr(g: &Mat2) -> [u64; 4] {
    let (a, b, c, d) = g.entries();
    [a as u64, b as u64, c as u64, d as u64]
}

fn elem_set(g: &FiniteMatGroup) -> BTreeSet<[u64; 4]> {
    g.elements().iter().map(arr).collect()
}

fn invertible(level: u32) -> impl Strategy<Value = Mat2> {
    (
        0i64..1 << level,
        0i64..1 << level,
        0i64..1 << level,
        0i64..1 << level,
    )
        .prop_map(move |(a, b, c, d)| Mat2::new(level, a, b, c, d).unwrap())
        .prop_filter("invertible", |m| m.is_invertible())
}

fn image_entries() -> Vec<&'static str> {
    Catalog::builtin()
        .entries
        .iter()
        .filter(|e| e.kind != EntryKind::Element)
        .map(|e| e.name.as_str())
        .collect()
}

fn any_image() -> impl Strategy<Value = &'static str> {
    prop::sample::select(image_entries())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mat2_product_matches_naive(n in 1u32..=16, x in any::<[u64; 4]>(), y in any::<[u64; 4]>()) {
        let mask = (1u64 << n) - 1;
        let x = x.map(|v| v & mask);
        let y = y.map(|v| v & mask);
        let a = Mat2::new(n, x[0] as i64, x[1] as i64, x[2] as i64, x[3] as i64).unwrap();
        let b = Mat2::new(n, y[0] as i64, y[1] as i64, y[2] as i64, y[3] as i64).unwrap();
        prop_assert_eq!(arr(&a.mul(&b)), naive_mul(x, y, n));
        let det = (x[0] as i128 * x[3] as i128 - x[1] as i128 * x[2] as i128).rem_euclid(1 << n);
        prop_assert_eq!(a.det() as i128, det);
        prop_assert_eq!(a.is_invertible(), det % 2 == 1);
        if let Some(ai) = a.inv() {
            prop_assert!(a.mul(&ai).is_identity());
            prop_assert!(ai.mul(&a).is_identity());
        }
    }

    #[test]
    fn residue_ops_match_naive(n in 1u32..=63, x in any::<i64>(), y in any::<i64>()) {
        let m = 1i128 << n;
        let rx = Residue::new(x, n).unwrap();
        let ry = Residue::new(y, n).unwrap();
        let red = |v: i128| v.rem_euclid(m) as u64;
        prop_assert_eq!((rx + ry).value(), red(x as i128 + y as i128));
        prop_assert_eq!((rx - ry).value(), red(x as i128 - y as i128));
        prop_assert_eq!((rx * ry).value(), red(x as i128 * y as i128));
        prop_assert_eq!((-rx).value(), red(-(x as i128)));
        if x % 2 != 0 {
            prop_assert_eq!((rx * rx.inv().unwrap()).value(), 1);
        } else {
            prop_assert!(rx.inv().is_none());
        }
    }

    #[test]
    fn val2_matches_trailing_zeros(x in any::<i64>().prop_filter("nonzero", |x| *x != 0)) {
        prop_assert_eq!(val2(&BigInt::from(x)), Some(x.trailing_zeros() as u64));
    }

    #[test]
    fn closure_commutes_with_reduction(gens in prop::collection::vec(invertible(4), 1..3), k in 1u32..4) {
        let g = closure(&gens, 4).unwrap();
        let low: Vec<Mat2> = gens.iter().map(|m| m.reduce(k).unwrap()).collect();
        prop_assert_eq!(elem_set(&g.reduce_group(k).unwrap()), elem_set(&closure(&low, k).unwrap()));
        for x in g.elements() {
            for h in &gens {
                prop_assert!(g.contains(&x.mul(h)));
            }
        }
    }

    #[test]
    fn twist_join_identity(name in any_image(), seed in any::<u64>()) {
        let g = Catalog::builtin().get(name).unwrap().at_level(3).unwrap();
        let signs: Vec<i8> = (0..g.generators().len())
            .map(|i| if seed >> (i % 64) & 1 == 1 { -1 } else { 1 })
            .collect();
        // only sign patterns that extend to a character are meaningful
        if let Ok(chi) = Character::from_generator_signs(&g, &signs) {
            let t = twist_by_character(&g, &chi).unwrap();
            let folds = g.contains_minus_id() && chi.value(&g.minus_id()) < 0;
            prop_assert_eq!(t.order() * if folds { 2 } else { 1 }, g.order());
            prop_assert_eq!(
                elem_set(&t.join_minus_id().unwrap()),
                elem_set(&g.join_minus_id().unwrap())
            );
        }
    }

    #[test]
    fn trivial_pushforward_is_conjugation(name in any_image(), b in invertible(3)) {
        let g = Catalog::builtin().get(name).unwrap().at_level(3).unwrap();
        let k = RationalCyclic::new(Vec2::new(3, 0, 0).unwrap());
        prop_assert!(is_adapted_basis(&g, &k, &b));
        let w = pushforward_with_basis(&g, &k, &b).unwrap();
        let bi = b.inv().unwrap();
        let direct: BTreeSet<_> = g.elements().iter().map(|h| arr(&bi.mul(h).mul(&b))).collect();
        prop_assert_eq!(elem_set(&w), direct);
    }

    #[test]
    fn pushforward_keeps_scalars(name in any_image(), pick in any::<prop::sample::Index>()) {
        let g = Catalog::builtin().get(name).unwrap().at_level(5).unwrap();
        let ks: Vec<_> = rational_cyclic_subgroups(&g, 2)
            .unwrap()
            .into_iter()
            .filter(|k| k.order_exp > 0)
            .collect();
        if !ks.is_empty() {
            let k = pick.get(&ks);
            let w = pushforward(&g, k).unwrap();
            let m = w.level();
            for alpha in [-1i64, 3, 5] {
                let s = Mat2::scalar(alpha, 5).unwrap();
                if g.contains(&s) {
                    prop_assert!(w.contains(&Mat2::scalar(alpha, m).unwrap()));
                }
            }
            prop_assert_eq!(w.det_image(), g.reduce_group(m).unwrap().det_image());
        }
    }

    #[test]
    fn pushforward_independent_of_adapted_basis(
        name in any_image(),
        pick in any::<prop::sample::Index>(),
        t in (0i64..16, 0i64..16, 0i64..16, 0i64..16),
    ) {
        let g = Catalog::builtin().get(name).unwrap().at_level(5).unwrap();
        let ks: Vec<_> = rational_cyclic_subgroups(&g, 1)
            .unwrap()
            .into_iter()
            .filter(|k| k.order_exp == 1)
            .collect();
        if !ks.is_empty() {
            let k = pick.get(&ks);
            let b0 = adapt_basis(&g, k).unwrap();
            let (al, be, ga, de) = (2 * t.0 + 1, t.1, t.2, 2 * t.3 + 1);
            let tm = Mat2::new(5, al, 2 * be, ga, de).unwrap();
            let b1 = b0.mul(&tm);
            prop_assert!(is_adapted_basis(&g, k, &b1));
            let w0 = pushforward_with_basis(&g, k, &b0).unwrap();
            let w1 = pushforward_with_basis(&g, k, &b1).unwrap();
            let s = Mat2::new(4, al, be, 2 * ga, de).unwrap();
            let si = s.inv().unwrap();
            let moved: BTreeSet<_> = w0.elements().iter().map(|h| arr(&si.mul(h).mul(&s))).collect();
            prop_assert_eq!(elem_set(&w1), moved);
        }
    }

    #[test]
    fn hensel_root_is_a_root(
        c in prop::collection::vec(-50i64..50, 2..5),
        seed in 0i64..64,
        n in 1u32..=20,
    ) {
        let f = IntPoly::from_i64(&c);
        if let Ok(sol) = hensel_solve(&f, &BigInt::from(seed), n, 2, None) {
            let m = BigInt::from(1u64 << n);
            let v = f.eval(&sol.root);
            prop_assert_eq!(((v % &m) + &m) % &m, BigInt::from(0));
            prop_assert_eq!(sol.residue, BigInt::from(0));
        }
        let fs: i64 = c.iter().rev().fold(0, |a, &x| a * seed + x);
        let ds: i64 = c.iter().enumerate().skip(1).rev().fold(0, |a, (i, &x)| a * seed + i as i64 * x);
        if ds % 2 != 0 && fs % 2 == 0 {
            prop_assert!(hensel_solve(&f, &BigInt::from(seed), n, 2, None).is_ok());
        }
    }
}

#[test]
fn dual_kernel_round_trip_on_star_graphs() {
    for name in ["TableA.32a.E1", "TableA.64a.E1", "TableB.256a.E1"] {
        let g = Catalog::builtin().get(name).unwrap().at_level(6).unwrap();
        let base = g.reduce_group(4).unwrap();
        for k in rational_cyclic_subgroups(&g, 1).unwrap() {
            if k.order_exp != 1 {
                continue;
            }
            let w = pushforward(&g, &k).unwrap();
            let kd = dual_kernel(5, 1).unwrap();
            assert!(kd.is_stable_under(&w), "{name}");
            let back = pushforward(&w, &kd).unwrap();
            assert_eq!(back.level(), 4);
            assert!(is_conjugate(&back, &base).unwrap().is_some(), "{name}");
        }
    }
}

#[test]
fn catalog_wide_bounds() {
    let cat = Catalog::builtin();
    for e in &cat.entries {
        if e.kind == EntryKind::Element {
            continue;
        }
        let spec = e.spec();
        for k in [3, 4] {
            assert!(
                is_stable_level(&spec, k).unwrap(),
                "{} not stable at {k}",
                e.name
            );
        }
        let c2 = c2_count(&spec, 5).unwrap();
        assert!(c2 <= 8, "{}: {c2}", e.name);
        let t = torsion_from_image(&spec.at_level(5).unwrap()).unwrap();
        assert!(t.in_mazur_list(), "{}: {t:?}", e.name);
    }
}
