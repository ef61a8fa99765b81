mod common;

use cone_bandit::analysis::{dissimilarity, effective_mixture, RegretTrace};
use cone_bandit::cone::ConeSpec;
use cone_bandit::environment::{DistributionSpec, Phase, ShiftSchedule};
use cone_bandit::pareto::{
    gap, gap_to_front, pareto_indices, pareto_set, pref_distance, ArmMeanTable, GapMode, GapSolverConfig,
};
use cone_bandit::partition::{cell_of, BinId, TreeState};
use proptest::prelude::*;

fn well_conditioned_cone(dim: usize) -> impl Strategy<Value = ConeSpec> {
    prop::collection::vec(-0.3f64..0.3, dim * dim).prop_map(move |off| {
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { off[i * dim + j] }).collect())
            .collect();
        ConeSpec::from_generators(&rows).unwrap()
    })
}

fn cone_and_dim() -> impl Strategy<Value = ConeSpec> {
    prop_oneof![
        Just(ConeSpec::orthant(2).unwrap()),
        Just(ConeSpec::orthant(3).unwrap()),
        well_conditioned_cone(2),
        well_conditioned_cone(3),
    ]
}

fn vecs(dim: usize, n: std::ops::RangeInclusive<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(lo..hi, dim), n)
}

fn front_of(points: Vec<Vec<f64>>, cone: &ConeSpec) -> Vec<Vec<f64>> {
    pareto_indices(&points, cone).into_iter().map(|k| points[k].clone()).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn combine(cone: &ConeSpec, coef: &[f64]) -> Vec<f64> {
    cone.generator_rows()
        .iter()
        .map(|r| r.iter().zip(coef).map(|(a, c)| a * c).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dominance_is_a_strict_partial_order(
        (cone, x, c1, c2) in cone_and_dim().prop_flat_map(|c| {
            let d = c.dim();
            (Just(c), prop::collection::vec(-5.0f64..5.0, d), prop::collection::vec(0.0f64..1.0, d), prop::collection::vec(0.0f64..1.0, d))
        })
    ) {
        prop_assert!(!cone.dominates(&x, &x).unwrap());
        prop_assert!(cone.weakly_dominates(&x, &x).unwrap());
        let y = add(&x, &combine(&cone, &c1));
        let z = add(&y, &combine(&cone, &c2));
        if cone.dominates(&y, &x).unwrap() && cone.dominates(&z, &y).unwrap() {
            prop_assert!(cone.dominates(&z, &x).unwrap());
        }
        if cone.dominates(&y, &x).unwrap() {
            prop_assert!(!cone.dominates(&x, &y).unwrap());
        }
    }

    #[test]
    fn generators_and_halfspaces_agree(
        (cone, coef) in cone_and_dim().prop_flat_map(|c| {
            let d = c.dim();
            (Just(c), prop::collection::vec(-1.0f64..1.0, d))
        })
    ) {
        let v = combine(&cone, &coef);
        let margins = cone.margins(&v).unwrap();
        for (m, c) in margins.iter().zip(&coef) {
            prop_assert!((m - c).abs() < 1e-9);
        }
        let inside = coef.iter().all(|c| *c >= 1e-9);
        let outside = coef.iter().any(|c| *c <= -1e-9);
        if inside { prop_assert!(cone.contains(&v).unwrap()); }
        if outside { prop_assert!(!cone.contains(&v).unwrap()); }
    }

    #[test]
    fn pareto_set_is_internally_stable_and_externally_dominant(
        (cone, pts) in cone_and_dim().prop_flat_map(|c| {
            let d = c.dim();
            (Just(c), vecs(d, 1..=12, 0.0, 3.0))
        })
    ) {
        let front = pareto_indices(&pts, &cone);
        prop_assert!(!front.is_empty());
        for &a in &front {
            for &b in &front {
                prop_assert!(!cone.dominates(&pts[a], &pts[b]).unwrap());
            }
        }
        for k in 0..pts.len() {
            if !front.contains(&k) {
                prop_assert!(front.iter().any(|&f| cone.dominates(&pts[f], &pts[k]).unwrap()));
            }
        }
    }

    #[test]
    fn gap_is_scale_invariant(
        pts in vecs(2, 2..=6, 0.2, 5.0),
        alpha in 0.1f64..10.0,
    ) {
        let cone = common::orthant2();
        let table = ArmMeanTable::from_means(pts).unwrap();
        let scaled = table.scaled(alpha);
        let front = pareto_set(&table, &cone).unwrap();
        prop_assert_eq!(&front, &pareto_set(&scaled, &cone).unwrap());
        let cfg = GapSolverConfig::default();
        for k in 0..table.len() {
            let a = gap(k, &front, &table, &cone, &cfg).unwrap();
            let b = gap(k, &front, &scaled, &cone, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn front_members_have_zero_gap_and_dominated_arms_positive_gap(pts in vecs(2, 2..=8, 0.2, 5.0)) {
        let cone = common::orthant2();
        let table = ArmMeanTable::from_means(pts).unwrap();
        let front = pareto_set(&table, &cone).unwrap();
        let cfg = GapSolverConfig::default();
        for k in 0..table.len() {
            let g = gap(k, &front, &table, &cone, &cfg).unwrap();
            if front.contains(&k) {
                prop_assert_eq!(g, 0.0);
            } else {
                let strictly = front.iter().any(|&f| cone.strictly_dominates(table.mean(f), table.mean(k)).unwrap());
                prop_assert_eq!(g > 0.0, strictly);
            }
        }
    }

    #[test]
    fn distance_is_symmetric_nonnegative_and_zero_on_the_diagonal(
        a in vecs(2, 1..=4, 0.1, 10.0),
        b in vecs(2, 1..=4, 0.1, 10.0),
    ) {
        let cone = common::orthant2();
        let cfg = GapSolverConfig::default();
        let (fa, fb) = (front_of(a, &cone), front_of(b, &cone));
        let ab = pref_distance(&fa, &fb, &cone, &cfg).unwrap();
        let ba = pref_distance(&fb, &fa, &cone, &cfg).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert_eq!(pref_distance(&fa, &fa, &cone, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn partition_always_tiles_the_cube(
        dim in 1usize..=3,
        xs in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 1..40),
    ) {
        let mut tree = TreeState::new(dim, 2, 2).unwrap();
        for x in &xs {
            let x = &x[..dim];
            let bin = tree.locate(x).unwrap();
            prop_assert!(tree.is_leaf(bin));
            prop_assert!(cell_of(bin, dim).unwrap().contains(x));
            if bin.depth < 4 {
                tree.split(bin).unwrap();
            }
        }
        prop_assert!(tree.audit().is_empty(), "{:?}", tree.audit());
        let volume: f64 = tree.leaves().iter().map(|b| cell_of(*b, dim).unwrap().volume()).sum();
        prop_assert!((volume - 1.0).abs() < 1e-12);
        for leaf in tree.leaves() {
            let mut b = *leaf;
            while let Some(p) = b.parent(dim) {
                prop_assert!(!tree.is_leaf(p));
                b = p;
            }
            prop_assert_eq!(b, BinId::ROOT);
        }
    }

    #[test]
    fn dissimilarity_is_at_least_one(nu in -0.5f64..4.0, h in 0u32..8) {
        let p = DistributionSpec::power_law(nu);
        let q = DistributionSpec::uniform(1);
        let r = dissimilarity(&p, &q, h, 1).unwrap().value();
        prop_assert!(r >= 1.0 - 1e-9);
        let s = dissimilarity(&q, &p, h, 1).unwrap().value();
        prop_assert!(s >= 1.0 - 1e-9);
    }

    #[test]
    fn mixture_weights_follow_durations(durations in prop::collection::vec(1u64..5000, 1..5)) {
        let phases: Vec<Phase> = durations
            .iter()
            .enumerate()
            .map(|(i, d)| Phase { dist: DistributionSpec::power_law(i as f64), duration: *d })
            .collect();
        let total: u64 = durations.iter().sum();
        let s = ShiftSchedule { phases, target: DistributionSpec::uniform(1), horizon: total + 1 };
        let m = effective_mixture(&s).unwrap();
        prop_assert!(m.validate().is_ok());
        if let DistributionSpec::Mixture { components } = m {
            for (c, d) in components.iter().zip(&durations) {
                prop_assert!((c.weight - *d as f64 / total as f64).abs() < 1e-15);
            }
        } else {
            prop_assert_eq!(durations.len(), 1);
        }
    }

    #[test]
    fn cumulative_regret_is_nondecreasing(values in prop::collection::vec(0.0f64..3.0, 0..200)) {
        let mut t = RegretTrace::new(0, "", 1);
        for v in &values {
            t.push(*v);
        }
        prop_assert!(t.cumulative.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(t.instant.iter().all(|v| *v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn orthant_closed_form_matches_grid_oracle(
        v in prop::collection::vec(0.5f64..2.0, 2),
        front in vecs(2, 1..=4, 0.5, 2.0),
    ) {
        let cone = common::orthant2();
        let closed = GapSolverConfig { mode: GapMode::OrthantClosedForm, ..GapSolverConfig::default() };
        let grid = GapSolverConfig::grid_oracle();
        let a = gap_to_front(&v, &front, &cone, &closed).unwrap();
        let b = gap_to_front(&v, &front, &cone, &grid).unwrap();
        prop_assert!((a - b).abs() <= 2.0 * grid.grid_resolution, "closed {} grid {}", a, b);
    }
}
