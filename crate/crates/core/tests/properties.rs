//! Property-based invariants of the geometry, the Hamiltonian and the
//! dynamics rates, over randomized lattice parameters.

use hiermeta::energy::{flip_delta, relative_energy};
use hiermeta::lattice::{
    block_members, distance, enumerate_isometry_images, nary_decomposition, translation_count,
    Configuration, LatticeParams, VertexId,
};
use hiermeta::refpath::{profile_closed_form, theta, PathKind, ReferencePath};
use proptest::prelude::*;

/// Random small lattice (V <= 27) with positive couplings and field.
fn small_params() -> impl Strategy<Value = LatticeParams> {
    (
        prop_oneof![
            Just((2u32, 2u32)),
            Just((2, 3)),
            Just((2, 4)),
            Just((3, 2)),
            Just((3, 3)),
            Just((4, 2)),
            Just((5, 2))
        ],
        proptest::collection::vec(0.02f64..1.5, 4),
        0.05f64..1.8,
        any::<bool>(),
    )
        .prop_map(|((dim, levels), raw, h, non_increasing)| {
            let mut js: Vec<f64> = raw[..levels as usize].to_vec();
            if non_increasing {
                js.sort_by(|a, b| b.partial_cmp(a).unwrap());
            }
            LatticeParams::new(dim, levels, js, h).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ultrametric_inequality((p, seeds) in (small_params(), proptest::collection::vec(0u64..u64::MAX, 3))) {
        let v = p.vertex_count();
        let a = VertexId(seeds[0] % v);
        let b = VertexId(seeds[1] % v);
        let c = VertexId(seeds[2] % v);
        let dab = distance(a, b, &p).unwrap();
        let dbc = distance(b, c, &p).unwrap();
        let dac = distance(a, c, &p).unwrap();
        prop_assert!(dac <= dab.max(dbc));
        prop_assert_eq!(distance(a, a, &p).unwrap(), 0);
        prop_assert_eq!(dab, distance(b, a, &p).unwrap());
    }

    #[test]
    fn blocks_partition_and_bound_distance((p, seed, level) in (small_params(), any::<u64>(), 0u32..3)) {
        let level = level.min(p.levels);
        let v = VertexId(seed % p.vertex_count());
        let range = block_members(v, level, &p).unwrap();
        prop_assert_eq!(range.end - range.start, p.block_size(level));
        prop_assert!(range.contains(&v.0));
        for w in range.clone() {
            prop_assert!(distance(v, VertexId(w), &p).unwrap() <= level);
        }
    }

    #[test]
    fn digits_reconstruct((p, seed) in (small_params(), any::<u64>())) {
        let k = seed % (p.vertex_count() + 1);
        let digits = nary_decomposition(k, &p).unwrap();
        prop_assert_eq!(digits.value(p.dim), k);
    }

    #[test]
    fn flip_increment_is_energy_difference((p, code_seed, v_seed) in (small_params(), any::<u64>(), any::<u64>())) {
        let v_count = p.vertex_count();
        prop_assume!(v_count <= 27);
        let code = code_seed & ((1u64 << v_count) - 1);
        let sigma = Configuration::from_bitcode(code, &p).unwrap();
        let vertex = VertexId(v_seed % v_count);
        let delta = flip_delta(&sigma, vertex, &p).unwrap();
        let direct = relative_energy(&sigma.flip(vertex), &p).unwrap().0
            - relative_energy(&sigma, &p).unwrap().0;
        prop_assert!((delta - direct).abs() < 1e-12);
    }

    #[test]
    fn energy_is_isometry_invariant((p, code_seed) in (small_params(), any::<u64>())) {
        let v_count = p.vertex_count();
        prop_assume!(v_count <= 16);
        let code = code_seed & ((1u64 << v_count) - 1);
        let sigma = Configuration::from_bitcode(code, &p).unwrap();
        let e = relative_energy(&sigma, &p).unwrap().0;
        let orbit = enumerate_isometry_images(&sigma, &p, 1 << 17).unwrap();
        for image in orbit.iter().take(24) {
            prop_assert!((relative_energy(image, &p).unwrap().0 - e).abs() < 1e-11);
        }
    }

    #[test]
    fn reference_orbit_matches_count((p, vol_seed) in (small_params(), any::<u64>())) {
        let v_count = p.vertex_count();
        prop_assume!(v_count <= 16);
        let m = vol_seed % (v_count + 1);
        let sigma = Configuration::prefix(m, &p).unwrap();
        let orbit = enumerate_isometry_images(&sigma, &p, 1 << 17).unwrap();
        prop_assert_eq!(orbit.len() as u128, translation_count(m, &p).unwrap());
    }

    #[test]
    fn natural_profile_closed_form_matches_direct((p, k_seed) in (small_params(), any::<u64>())) {
        let k = k_seed % (p.vertex_count() + 1);
        let direct = relative_energy(&Configuration::prefix(k, &p).unwrap(), &p).unwrap().0;
        prop_assert!((profile_closed_form(k, &p).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn spread_order_is_bijective(p in small_params()) {
        let v = p.vertex_count();
        let mut seen: Vec<u64> = (1..=v).map(|k| theta(k, &p).unwrap().0).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..v).collect::<Vec<_>>());
    }

    #[test]
    fn paths_end_at_the_extremes((p, spread) in (small_params(), any::<bool>())) {
        let kind = if spread { PathKind::Spread } else { PathKind::Natural };
        let path = ReferencePath::new(kind, &p);
        prop_assert!(path.config(0).unwrap().is_empty());
        prop_assert!(path.config(p.vertex_count()).unwrap().is_full());
        // Consecutive configurations differ at exactly the flipped vertex.
        let v = p.vertex_count();
        let k = 1 + v / 2;
        let before = path.config(k - 1).unwrap();
        let after = path.config(k).unwrap();
        let flipped = path.flipped_vertex(k).unwrap();
        prop_assert!(!before.contains(flipped));
        prop_assert!(after.contains(flipped));
        prop_assert_eq!(after.volume(), before.volume() + 1);
    }

    #[test]
    fn rates_satisfy_detailed_balance((p, code_seed, v_seed, beta) in (small_params(), any::<u64>(), any::<u64>(), 0.0f64..6.0)) {
        let v_count = p.vertex_count();
        prop_assume!(v_count <= 27);
        let code = code_seed & ((1u64 << v_count) - 1);
        let sigma = Configuration::from_bitcode(code, &p).unwrap();
        let vertex = VertexId(v_seed % v_count);
        let e = relative_energy(&sigma, &p).unwrap().0;
        let d = flip_delta(&sigma, vertex, &p).unwrap();
        // c(s,t) e^{-beta E(s)} = c(t,s) e^{-beta E(t)} in log form to avoid
        // overflow: -[d]_+ - E(s) vs -[-d]_+ - E(t).
        let lhs = -beta * d.max(0.0) - beta * e;
        let rhs = -beta * (-d).max(0.0) - beta * (e + d);
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }
}
