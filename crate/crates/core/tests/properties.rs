use std::collections::HashSet;

use patchmg::dense_oracle::dense_patch_matrix;
use patchmg::dof_map::{DofVector, GridLayout};
use patchmg::fdm::{apply_fdm, build_fdm};
use patchmg::instrument::ArrayId;
use patchmg::laplace::LaplaceOperator;
use patchmg::mesh::{MeshHierarchy, PatchOrdering, Schedule};
use patchmg::multigrid::Transfer;
use patchmg::smoothers::{LevelContext, SmootherConfig, SmootherKind};
use patchmg::traffic::{record_trace, simulate_lru, Access, AccessTrace, CacheConfig, TraceOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_pair(grid: GridLayout, seed: u64) -> (DofVector, DofVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DofVector::random(grid, &mut rng);
    let mut v = DofVector::random(grid, &mut rng);
    u.zero_boundary();
    v.zero_boundary();
    (u, v)
}

fn ordering() -> impl Strategy<Value = PatchOrdering> {
    prop_oneof![Just(PatchOrdering::ZCurve), Just(PatchOrdering::Hierarchical)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operator_is_symmetric_and_positive(d in 2usize..=3, p in 1usize..=4, l in 0usize..=1, seed: u64) {
        let grid = GridLayout::new(d, p, l).unwrap();
        let op = LaplaceOperator::new(grid).unwrap();
        let (u, v) = vec_pair(grid, seed);
        let (au, av) = (op.apply(&u), op.apply(&v));
        let (uv, vu) = (au.dot(&v), u.dot(&av));
        prop_assert!((uv - vu).abs() <= 1e-12 * au.norm_l2() * v.norm_l2());
        prop_assert!(u.dot(&au) > 0.0);
        prop_assert!(au.boundary_is_zero());
    }

    #[test]
    fn operator_is_linear(p in 1usize..=5, alpha in -3.0f64..3.0, seed: u64) {
        let grid = GridLayout::new(2, p, 1).unwrap();
        let op = LaplaceOperator::new(grid).unwrap();
        let (u, v) = vec_pair(grid, seed);
        let mut w = u.clone();
        w.axpy(alpha, &v);
        let mut want = op.apply(&u);
        want.axpy(alpha, &op.apply(&v));
        prop_assert!(op.apply(&w).max_abs_diff(&want) <= 1e-11 * want.norm_inf().max(1.0));
    }

    #[test]
    fn fdm_inverts_patch_matrix(d in 2usize..=3, p in 1usize..=5, level in 0i32..6, seed: u64) {
        let h = 0.5f64.powi(level + 1);
        let a = dense_patch_matrix(p, h, d).unwrap();
        let fdm = build_fdm(p, h, d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..a.size()).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let y = apply_fdm(&fdm, &a.matvec(&x)).unwrap();
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "error {err:e}");
    }

    #[test]
    fn restriction_is_adjoint_of_prolongation(d in 2usize..=3, p in 1usize..=4, seed: u64) {
        let coarse = GridLayout::new(d, p, 0).unwrap();
        let t = Transfer::new(coarse).unwrap();
        let (x, _) = vec_pair(coarse, seed);
        let (y, _) = vec_pair(*t.fine(), seed ^ 1);
        let lhs = t.prolongate(&x).unwrap().dot(&y);
        let rhs = x.dot(&t.restrict(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn schedule_partitions_patches(d in 2usize..=3, l in 0usize..=2, nb in 1usize..40, ord in ordering()) {
        let mesh = MeshHierarchy::new(d, l).unwrap();
        let s = Schedule::new(&mesh, l, ord, nb).unwrap();
        let mut seen = HashSet::new();
        for (_, color, list) in s.entries() {
            prop_assert!(list.len() <= nb);
            for (i, a) in list.iter().enumerate() {
                prop_assert_eq!(a.color(), color);
                prop_assert!(seen.insert(*a));
                for b in &list[i + 1..] {
                    prop_assert!(!a.shares_cell_with(b));
                }
            }
        }
        prop_assert_eq!(seen.len(), mesh.n_patches(l));
    }

    #[test]
    fn orderings_are_permutations(d in 2usize..=3, l in 0usize..=3, ord in ordering()) {
        let patches = MeshHierarchy::new(d, l).unwrap().enumerate_patches(l).unwrap();
        let mut perm = ord.permutation(&patches);
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..patches.len()).collect::<Vec<_>>());
    }

    #[test]
    fn lru_traffic_monotone_in_capacity(
        accesses in prop::collection::vec((0u8..3, 0usize..200, any::<bool>()), 1..400),
        small in 1usize..16,
        extra in 1usize..16,
        line in 1usize..5,
    ) {
        let mut trace = AccessTrace::new();
        for (a, index, write) in accesses {
            trace.push(Access { array: ArrayId::from_u8(a).unwrap(), index, write });
        }
        let lo = simulate_lru(&trace, &CacheConfig::new(small, line).unwrap(), 200);
        let hi = simulate_lru(&trace, &CacheConfig::new(small + extra, line).unwrap(), 200);
        prop_assert!(hi.loads <= lo.loads);
        prop_assert!(hi.writebacks <= lo.writebacks);
        prop_assert!(hi.doubles_per_dof <= lo.doubles_per_dof);
    }

    #[test]
    fn trace_binary_round_trip(
        accesses in prop::collection::vec((0u8..4, 0usize..(1usize << 40), any::<bool>()), 0..200),
    ) {
        let mut trace = AccessTrace::new();
        for (a, index, write) in accesses {
            trace.push(Access { array: ArrayId::from_u8(a).unwrap(), index, write });
        }
        let mut buf = Vec::new();
        trace.write_binary(&mut buf).unwrap();
        prop_assert_eq!(AccessTrace::read_binary(buf.as_slice()).unwrap(), trace);
    }
}

#[test]
fn sweep_traffic_monotone_in_capacity() {
    let ctx = LevelContext::new(2, 3, 3).unwrap();
    let config = SmootherConfig::new(SmootherKind::Combined);
    let schedule = config.schedule(2, 3).unwrap();
    let trace = record_trace(&ctx, &config, &schedule, &TraceOptions::default()).unwrap();
    let mut last = f64::MAX;
    for lines in [8, 16, 32, 64, 128, 256, 1024] {
        let r = simulate_lru(&trace, &CacheConfig::new(lines, 8).unwrap(), ctx.n_dofs());
        assert!(r.doubles_per_dof <= last);
        last = r.doubles_per_dof;
    }
}
