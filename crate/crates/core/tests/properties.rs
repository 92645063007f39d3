//! Property tests for the invariants of each module.

use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;

use ulab_core::averages::{
    cube_average, multi_average, recurrence_average, recurrence_average_grid, AverageSpec, CubeIndex, Weight,
};
use ulab_core::gowers::{
    gowers_norm, gowers_norm_boxproduct, gowers_u2_spectral, CyclicSequence,
};
use ulab_core::patterns::{find_pattern, pattern_census, validate_witness, IntegerSet};
use ulab_core::primes::{build_tables, modified_mangoldt, PrimeTables, WTrickParams};
use ulab_core::sequences::{
    closest_integer_correction, identity_verifier, BracketKind, BracketPattern, IntervalWeight, Irrational,
};
use ulab_core::systems::{
    group_mul, intersection_measure, nilsequence_sample, reduce, rotate_set, CircleSet, DynamicalSystem,
    HeisenbergSystem, NilsequenceKind, Observable, Real, RotationSystem,
};
use ulab_core::Phase;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn tables() -> &'static PrimeTables {
    static T: OnceLock<PrimeTables> = OnceLock::new();
    T.get_or_init(|| build_tables(200_000).unwrap())
}

const LABELS: [&str; 3] = ["sqrt2", "sqrt3", "golden"];

fn alpha() -> impl Strategy<Value = Irrational> {
    (0..3usize).prop_map(|i| Irrational::parse(LABELS[i]).unwrap())
}

fn kind() -> impl Strategy<Value = BracketKind> {
    prop_oneof![Just(BracketKind::FloorScaled), Just(BracketKind::ScaledFloor)]
}

fn complex_vec(m: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b)), m)
}

fn cyclic(values: Vec<Complex64>) -> CyclicSequence {
    CyclicSequence::new(values).unwrap()
}

fn arcs() -> impl Strategy<Value = CircleSet> {
    prop::collection::vec((-0.5..1.0f64, 0.0..0.4f64), 1..4)
        .prop_map(|v| CircleSet::from_arcs(&v.iter().map(|&(lo, len)| (lo, lo + len)).collect::<Vec<_>>()).unwrap())
}

fn torus_dist(a: Phase, b: Phase) -> f64 {
    (a - b).dist_to_zero() as f64 / 2f64.powi(128)
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn pi_steps_match_primality(n in 2u64..200_000) {
        let t = tables();
        let step = t.pi(n) - t.pi(n - 1);
        prop_assert!(step <= 1);
        prop_assert_eq!(step == 1, t.is_prime(n));
    }

    #[test]
    fn modified_mangoldt_is_nonnegative(w in prop::sample::select(vec![3u64, 5, 7]), r in 1u64..210, n in 1u64..5000) {
        if let Ok(p) = WTrickParams::new(w, r % WTrickParams::new(w, 1).unwrap().modulus().max(1)) {
            prop_assert!(modified_mangoldt(tables(), &p, n).unwrap() >= 0.0);
        }
    }

    #[test]
    fn bracket_differences_telescope(a in alpha(), kd in kind(), k in 1usize..5, n in -500i64..500, h in 0i64..200) {
        let p = BracketPattern::new(kd, k, Some(a)).unwrap();
        for v in 1..=k {
            let whole = p.exponent(v, n + h).unwrap() - p.exponent(v, n).unwrap();
            let steps: i64 = (0..h).map(|j| p.exponent(v, n + j + 1).unwrap() - p.exponent(v, n + j).unwrap()).sum();
            prop_assert_eq!(whole, steps);
        }
    }

    #[test]
    fn unit_correction_is_zero_or_one(a in alpha(), h in 1i64..1_000_000) {
        let c = closest_integer_correction(&a, 1, h).unwrap();
        prop_assert!(c == 0 || c == 1);
    }

    #[test]
    fn verifier_clean_on_subintervals(a in alpha(), kd in kind(), k in 1usize..4, cell in 0u64..1000, t0 in 0.0..1.0f64, t1 in 0.0..1.0f64) {
        let m = IntervalWeight::factorial_cells(k).unwrap();
        let i = cell % m;
        let (lo, hi) = (t0.min(t1), t0.max(t1));
        let mf = m as f64;
        let w = IntervalWeight::new(k, (i as f64 + lo) / mf, (i as f64 + hi) / mf).unwrap();
        let p = BracketPattern::new(kd, k, Some(a)).unwrap();
        prop_assert!(identity_verifier(&p, &w, 300, 60).unwrap().is_clean());
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn gowers_triangle_and_homogeneity(m in prop::sample::select(vec![8usize, 12, 16]), d in 2usize..4, seed in complex_vec(32), seed2 in complex_vec(32), lam in (-3.0..3.0f64, -3.0..3.0f64)) {
        let a = cyclic(seed[..m].to_vec());
        let b = cyclic(seed2[..m].to_vec());
        let sum = cyclic(a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect());
        let na = gowers_norm(&a, d).unwrap().value;
        let nb = gowers_norm(&b, d).unwrap().value;
        prop_assert!(gowers_norm(&sum, d).unwrap().value <= na + nb + 1e-10);
        let l = Complex64::new(lam.0, lam.1);
        let scaled = cyclic(a.values().iter().map(|x| x * l).collect());
        prop_assert!((gowers_norm(&scaled, d).unwrap().value - l.norm() * na).abs() <= 1e-10 * (1.0 + l.norm() * na));
    }

    #[test]
    fn gowers_monotone_in_d(m in 4usize..17, v in complex_vec(16)) {
        let a = cyclic(v[..m].to_vec());
        let mut prev = 0.0;
        for d in 1..=3 {
            let x = gowers_norm(&a, d).unwrap().value;
            prop_assert!(prev <= x + 1e-12);
            prev = x;
        }
    }

    #[test]
    fn gowers_invariances(m in 4usize..33, c in 0usize..32, xi in 0u64..32, v in complex_vec(32)) {
        let a = cyclic(v[..m].to_vec());
        let shifted = cyclic((0..m).map(|j| a.values()[(j + c) % m]).collect());
        let conj = cyclic(a.values().iter().map(|x| x.conj()).collect());
        for d in 2..=3 {
            let base = gowers_norm(&a, d).unwrap().value;
            prop_assert!((gowers_norm(&shifted, d).unwrap().value - base).abs() < 1e-12);
            prop_assert!((gowers_norm(&conj, d).unwrap().value - base).abs() < 1e-12);
        }
        let modulated = cyclic((0..m).map(|j| a.values()[j] * ulab_core::systems::e(Phase::from_ratio((xi as usize * j % m) as u64, m as u64))).collect());
        prop_assert!((gowers_norm(&modulated, 2).unwrap().value - gowers_norm(&a, 2).unwrap().value).abs() < 1e-10);
    }

    #[test]
    fn gowers_oracles_agree(m in 4usize..33, v in complex_vec(32)) {
        let a = cyclic(v[..m].to_vec());
        let ind = gowers_norm(&a, 2).unwrap().value;
        prop_assert!((gowers_norm_boxproduct(&a, 2).unwrap().value - ind).abs() <= 1e-10 * ind.max(1e-300));
        prop_assert!((gowers_u2_spectral(&a).unwrap().value - ind).abs() <= 1e-9 * ind.max(1e-300));
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn rotation_preserves_measure(a in alpha(), set in arcs(), steps in -1_000_000i64..1_000_000) {
        let sys = RotationSystem::circle(a);
        let r = rotate_set(&sys, &set, steps).unwrap();
        prop_assert_eq!(r.cell_count(), set.cell_count());
    }

    #[test]
    fn exact_intersections_match_quadrature(a in alpha(), set in arcs(), s1 in 1i64..1000, s2 in 1i64..1000) {
        let sys = RotationSystem::circle(a);
        let sets = [set.clone(), rotate_set(&sys, &set, s1).unwrap(), rotate_set(&sys, &set, s2).unwrap()];
        let g = 1u64 << 16;
        let hits = (0..g).filter(|&j| {
            let x = Phase::from_ratio(2 * j + 1, 2 * g);
            sets.iter().all(|s| s.contains(x))
        }).count();
        prop_assert!((intersection_measure(&sets) - hits as f64 / g as f64).abs() < 5e-4);
    }

    #[test]
    fn heisenberg_group_law(p in prop::array::uniform3(-3.0..3.0f64), q in prop::array::uniform3(-3.0..3.0f64), r in prop::array::uniform3(-3.0..3.0f64)) {
        let once = reduce(p);
        let twice = reduce(once);
        for i in 0..3 {
            prop_assert!((once[i] - twice[i]).abs() < 1e-12);
        }
        let left = group_mul(group_mul(p, q), r);
        let right = group_mul(p, group_mul(q, r));
        for i in 0..3 {
            prop_assert!((left[i] - right[i]).abs() < 1e-12 * (1.0 + left[i].abs()));
        }
    }

    #[test]
    fn heisenberg_powers_compose(e1 in -5000i64..5000, e2 in -5000i64..5000, x in prop::array::uniform3(0.0..1.0f64)) {
        let sys = HeisenbergSystem::new(
            Real::from_irrational(&Irrational::parse("sqrt2").unwrap()),
            Real::from_irrational(&Irrational::parse("sqrt3").unwrap()),
            Real::from_f64(0.25),
        );
        let x0 = [Phase::from_f64(x[0]), Phase::from_f64(x[1]), Phase::from_f64(x[2])];
        let joint = sys.power(e1 + e2).unwrap().act(&x0);
        let split = sys.power(e1).unwrap().act(&sys.power(e2).unwrap().act(&x0));
        for i in 0..3 {
            prop_assert!(torus_dist(joint[i], split[i]) < 1e-10, "coordinate {} differs", i);
        }
    }

    #[test]
    fn nilsequences_are_bounded(c in prop::collection::vec(0.0..1.0f64, 1..5), len in 1usize..500) {
        let kind = NilsequenceKind::polynomial(c.iter().map(|&x| Phase::from_f64(x)).collect()).unwrap();
        let w = nilsequence_sample(&kind, len).unwrap();
        prop_assert!(w.sup() <= 1.0 + 1e-12);
        let heis = NilsequenceKind::HeisenbergLipschitz {
            system: HeisenbergSystem::new(Real::from_f64(c[0] + 0.1), Real::from_f64(0.7), Real::from_f64(0.0)),
            x0: [Phase::ZERO; 3],
        };
        prop_assert!(nilsequence_sample(&heis, len).unwrap().sup() <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn averages_are_linear_and_bounded(a in alpha(), kd in kind(), set in arcs(), c in (-2.0..2.0f64, -2.0..2.0f64), n in 10usize..200) {
        let sys = DynamicalSystem::Rotation(RotationSystem::circle(Irrational::parse("sqrt5").unwrap()));
        let p = BracketPattern::new(kd, 2, Some(a)).unwrap();
        let ind = Observable::ArcIndicator(set);
        let ch = Observable::character([1, 0, 0]);
        let lam = Complex64::new(c.0, c.1);
        let scaled = Observable::TrigPolynomial(vec![(lam, [1, 0, 0])]);
        let sum = Observable::TrigPolynomial(vec![(Complex64::new(1.0, 0.0), [1, 0, 0]), (lam, [2, 0, 0])]);
        let run = |f: Observable| multi_average(&AverageSpec::new(sys.clone(), vec![f, ind.clone()], p.clone(), n, 64), None).unwrap();
        let base = run(ch.clone());
        let sc = run(scaled);
        let s = run(sum);
        let second = run(Observable::character([2, 0, 0]));
        for i in 0..base.values().len() {
            prop_assert!((sc.values()[i] - lam * base.values()[i]).norm() < 1e-10);
            prop_assert!((s.values()[i] - base.values()[i] - lam * second.values()[i]).norm() < 1e-10);
        }
        prop_assert!(base.sup_norm() <= 1.0 + 1e-12);
        let ii = run(ind.clone());
        prop_assert!(ii.values().iter().all(|v| v.re >= 0.0 && v.re <= 1.0 && v.im == 0.0));
    }

    #[test]
    fn exact_and_grid_recurrence(a in alpha(), kd in kind(), set in arcs(), n in 5usize..60) {
        let sys = RotationSystem::circle(Irrational::parse("sqrt5").unwrap());
        let p = BracketPattern::new(kd, 2, Some(a)).unwrap();
        let exact = recurrence_average(&sys, &set, &p, n, &Weight::Unit, None).unwrap();
        let quad = recurrence_average_grid(&sys, &set, &p, n, &Weight::Unit, 1 << 16, None).unwrap();
        prop_assert!((exact - quad).abs() < 5e-4, "{} vs {}", exact, quad);
    }

    #[test]
    fn cube_symmetric_under_axis_swap(s1 in arcs(), s2 in arcs(), n in 20usize..120) {
        let sys = DynamicalSystem::Rotation(RotationSystem::circle(Irrational::parse("sqrt2").unwrap()));
        let f = Observable::ArcIndicator(s1);
        let g = Observable::ArcIndicator(s2);
        let a = cube_average(&sys, &[f.clone(), f.clone(), g.clone()], 2, n, CubeIndex::Primes, 32, 1e12, Some(tables())).unwrap();
        let h = Observable::ArcIndicator(CircleSet::from_arcs(&[(0.1, 0.6)]).unwrap());
        let b = cube_average(&sys, &[h.clone(), f.clone(), g.clone()], 2, n, CubeIndex::Primes, 32, 1e12, Some(tables())).unwrap();
        let b_swapped = cube_average(&sys, &[f, h, g], 2, n, CubeIndex::Primes, 32, 1e12, Some(tables())).unwrap();
        prop_assert_eq!(b, b_swapped);
        prop_assert!(a.values().iter().all(|v| (0.0..=1.0).contains(&v.re)));
    }

    #[test]
    fn census_consistent_and_monotone(seed in 0u64..1000, dens in 0.05..0.6f64, k in 1usize..4, kd in kind(), shift in prop::sample::select(vec![-1i64, 1])) {
        let n = 3000;
        let small = IntegerSet::bernoulli(n, dens, seed).unwrap();
        let extra = IntegerSet::bernoulli(n, 0.3, seed + 1).unwrap();
        let mut members = small.members();
        members.extend(extra.members());
        let big = IntegerSet::from_members(n, &members).unwrap();
        prop_assert!(small.is_subset(&big));
        let p = BracketPattern::new(kd, k, Some(Irrational::parse("sqrt2").unwrap())).unwrap();
        let cs = pattern_census(&small, &p, shift, 400, tables()).unwrap();
        let cb = pattern_census(&big, &p, shift, 400, tables()).unwrap();
        for (x, y) in cs.iter().zip(&cb) {
            prop_assert!(x.count <= y.count);
        }
        let w = find_pattern(&small, &p, shift, 400, tables()).unwrap();
        prop_assert_eq!(w.is_none(), cs.iter().all(|r| r.count == 0));
        if let Some(w) = w {
            prop_assert!(validate_witness(&small, &p, shift, &w, tables()).is_ok());
            let first = cs.iter().find(|r| r.count > 0).unwrap();
            prop_assert_eq!(first.n, w.n);
        }
    }
}
