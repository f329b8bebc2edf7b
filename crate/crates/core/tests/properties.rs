use lerw3d::analysis::curve::{modulus_statistic, modulus_statistic_naive, parametrize, rho_distance};
use lerw3d::analysis::tube::{build_stagewise, evaluate_tower, verify_length_decomposition};
use lerw3d::loop_erasure::erase_loops_by_last_visits;
use lerw3d::{
    cut_times, decode_path, decompose_at_cut, encode_path, erase_loops, hausdorff_distance, LatticePath, LatticePoint,
    RandomSource, TubePartition,
};
use proptest::prelude::*;

fn walk(scale: u8, steps: &[u8]) -> LatticePath {
    LatticePath::from_steps(LatticePoint::origin(scale), steps).unwrap()
}

fn steps(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 0..max)
}

fn points(scale: u8) -> impl Strategy<Value = Vec<LatticePoint>> {
    prop::collection::vec(prop::array::uniform3(-6i64..6), 1..8)
        .prop_map(move |v| v.into_iter().map(|s| LatticePoint::new(s, scale)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn loop_erasure_properties(st in steps(200)) {
        let w = walk(0, &st);
        let le = erase_loops(&w);
        prop_assert!(le.is_simple());
        prop_assert_eq!(le.at(0), w.at(0));
        prop_assert_eq!(le.at(le.len()), w.at(w.len()));
        prop_assert!(le.sites().iter().all(|s| w.sites().contains(s)));
        prop_assert_eq!(erase_loops(le.as_path()).into_path(), le.as_path().clone());
        prop_assert_eq!(erase_loops_by_last_visits(&w).into_path(), le.into_path());
    }

    #[test]
    fn cut_decomposition(st in steps(150)) {
        let w = walk(0, &st);
        let whole = erase_loops(&w);
        for k in cut_times(&w) {
            let (a, b) = decompose_at_cut(&w, k).unwrap();
            prop_assert_eq!(&a.concat(b.as_path()).unwrap(), whole.as_path());
        }
    }

    #[test]
    fn concat_identities(a in steps(30), b in steps(30), c in steps(30)) {
        let x = walk(2, &a);
        let y = LatticePath::from_steps(x.end(), &b).unwrap();
        let z = LatticePath::from_steps(y.end(), &c).unwrap();
        let xy = x.concat(&y).unwrap();
        prop_assert_eq!(xy.len(), x.len() + y.len());
        prop_assert_eq!(xy.concat(&z).unwrap(), x.concat(&y.concat(&z).unwrap()).unwrap());
        prop_assert_eq!(LatticePath::trivial(x.start()).concat(&x).unwrap(), x.clone());
        prop_assert_eq!(xy.slice(0, x.len()).unwrap(), x.clone());
        prop_assert_eq!(xy.slice(x.len(), xy.len()).unwrap(), y);
    }

    #[test]
    fn codec_roundtrip(st in steps(100), start in prop::array::uniform3(any::<i64>().prop_map(|v| v >> 2)), n in 0u8..20) {
        let p = LatticePath::from_steps(LatticePoint::new(start, n), &st).unwrap();
        let b = encode_path(&p);
        prop_assert_eq!(decode_path(&b).unwrap(), p);
        prop_assert_eq!(encode_path(&decode_path(&b).unwrap()), b);
    }

    #[test]
    fn hausdorff_is_a_metric(a in points(1), b in points(1), c in points(1)) {
        let d = |x: &[LatticePoint], y: &[LatticePoint]| hausdorff_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn rho_is_a_metric(a in steps(40), b in steps(40), c in steps(40), beta in 1.05f64..1.66) {
        let cv = |s: &[u8]| parametrize(&walk(3, s), beta).unwrap();
        let (x, y, z) = (cv(&a), cv(&b), cv(&c));
        prop_assert_eq!(rho_distance(&x, &x), 0.0);
        prop_assert!((rho_distance(&x, &y) - rho_distance(&y, &x)).abs() <= 1e-12);
        prop_assert!(rho_distance(&x, &z) <= rho_distance(&x, &y) + rho_distance(&y, &z) + 1e-12);
    }

    // every time gap is at most 1 here, so |s - t|^h shrinks as h grows
    #[test]
    fn modulus_grows_with_h(st in steps(40), h1 in 0.05f64..1.0, h2 in 0.05f64..1.0) {
        let c = parametrize(&walk(4, &st), 1.5).unwrap();
        prop_assume!(c.duration() <= 1.0 && !st.is_empty());
        let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        let a = modulus_statistic(&c, lo, None).unwrap().value;
        let b = modulus_statistic(&c, hi, None).unwrap().value;
        prop_assert!(a <= b * (1.0 + 1e-12));
        let naive = modulus_statistic_naive(&c, hi, None).unwrap().value;
        prop_assert!((b - naive).abs() <= 1e-12 * naive.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn length_decomposition_holds_when_flagged(seed in any::<u64>(), stages in 1usize..=5, with_d in any::<bool>()) {
        let t = TubePartition::new(2, 2, 6).unwrap();
        let mut rng = RandomSource::new(seed, 0);
        let pre = build_stagewise(&t, 5.0, 1.6, stages, with_d, 1_000_000, &mut rng).unwrap();
        let rep = evaluate_tower(&pre, &t, 5.0, 1.6).unwrap();
        let flagged = rep.flagged_fg();
        prop_assert!(flagged.len() >= stages - 1);
        for i in flagged {
            let d = verify_length_decomposition(&pre, &t, &rep, i).unwrap();
            prop_assert!(d.holds, "{:?}", d);
        }
    }
}
