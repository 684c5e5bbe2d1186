use elastic_core::gpu::GpuSpec;
use elastic_core::planner::{
    enumerate_candidates, feasible, oscore, shrink_design_space, slicing_plan, wiscore, CriticalProfile,
    ElasticCandidate, OverheadParams,
};
use elastic_core::workload::KernelSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn slicing_plan_is_dyadic_and_integral(m in 1u32..=1_000_000) {
        let plan = slicing_plan(m).unwrap();
        prop_assert_eq!(*plan.last().unwrap(), m);
        prop_assert!(plan.iter().all(|&s| s >= 1 && m % s == 0));
        prop_assert!(plan.windows(2).all(|w| w[1] == 2 * w[0]));
        // The smallest slice is odd: the plan cannot be halved further.
        prop_assert_eq!(plan[0] % 2, 1);
        prop_assert_eq!(plan.len() as u32, m.trailing_zeros() + 1);
    }

    #[test]
    fn feasibility_is_monotone(
        n_sm in prop::sample::select(vec![8u32, 34]),
        n_blk in 1u32..200,
        s_blk in prop::sample::select(vec![32u32, 64, 128, 256, 512, 1024]),
        shard in 1u32..40,
        block in 1u32..1024,
        shrink_shard in 0u32..40,
        shrink_block in 0u32..1024,
    ) {
        let gpu = GpuSpec { n_sm, ..GpuSpec::rtx2060_like() };
        let p = CriticalProfile::new(n_blk, s_blk);
        let c = ElasticCandidate { shard_grid: shard, block, n_shards: 1 };
        if feasible(&c, &p, &gpu) {
            let smaller = ElasticCandidate {
                shard_grid: shard.saturating_sub(shrink_shard).max(1),
                block: block.saturating_sub(shrink_block).max(1),
                n_shards: 1,
            };
            prop_assert!(feasible(&smaller, &p, &gpu));
        }
    }

    #[test]
    fn combined_score_is_zero_without_oscore(
        grid in 1u32..256,
        block in prop::sample::select(vec![32u32, 64, 128, 256]),
        crit_blocks in 1u32..100,
        crit_threads in prop::sample::select(vec![32u32, 64, 128, 256]),
        budget in 1e-6f64..1e-3,
    ) {
        let gpu = GpuSpec::rtx2060_like();
        let k = KernelSpec::new(0, grid, block, 1.0, 0.2);
        let overhead = OverheadParams { max_blk: budget, max_pt: budget, ..OverheadParams::default() };
        let s = shrink_design_space(&k, &[CriticalProfile::new(crit_blocks, crit_threads)], &gpu, &overhead).unwrap();
        for row in &s.rows {
            prop_assert!((0.0..=1.0).contains(&row.scored.combined));
            if row.scored.oscore == 0 {
                prop_assert_eq!(row.scored.combined, 0.0);
            }
            prop_assert_eq!(row.scored.oscore, oscore(&row.scored.candidate, &overhead, block));
            prop_assert!(row.scored.candidate.n_shards * row.scored.candidate.shard_grid >= grid);
            prop_assert!(row.scored.candidate.block >= 1 && row.scored.candidate.block <= block);
        }
    }
}

#[test]
fn wiscore_in_unit_interval_over_10k_feasible_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 10_000 {
        let gpu = if rng.gen_bool(0.5) {
            GpuSpec::rtx2060_like()
        } else {
            GpuSpec::xavier_like()
        };
        let p = CriticalProfile::new(rng.gen_range(1..500), rng.gen_range(1..=gpu.l_threads));
        let c = ElasticCandidate::new(4096, rng.gen_range(1..=gpu.n_sm), rng.gen_range(1..=gpu.l_threads));
        if !feasible(&c, &p, &gpu) {
            assert!(wiscore(&c, &p, &gpu).is_err());
            continue;
        }
        let w = wiscore(&c, &p, &gpu).unwrap();
        // Oracle: the raw product before clamping already lies in [0, 1].
        let inter = (p.n_blk % gpu.n_sm + c.shard_grid) as f64 / gpu.n_sm as f64;
        let intra = (p.s_blk + c.block) as f64 / gpu.l_threads as f64;
        assert!((0.0..=1.0).contains(&w), "{w}");
        assert_eq!(w, inter * intra);
        checked += 1;
    }
}

#[test]
fn shrink_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let gpu = GpuSpec::rtx2060_like();
        let k = KernelSpec::new(0, rng.gen_range(1..=512), 32 * rng.gen_range(1..=16), 1.0, 0.3);
        let profiles: Vec<CriticalProfile> = (0..rng.gen_range(1..4))
            .map(|_| CriticalProfile::new(rng.gen_range(1..200), 32 * rng.gen_range(1..=16)))
            .collect();
        let a = shrink_design_space(&k, &profiles, &gpu, &OverheadParams::default()).unwrap();
        let b = shrink_design_space(&k, &profiles, &gpu, &OverheadParams::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.rows.len(), enumerate_candidates(&k, &gpu).unwrap().len());
        assert!(!a.selected.is_empty());
        assert!(a.selected.windows(2).all(|w| w[0].combined >= w[1].combined));
    }
}

#[test]
fn sixteen_by_256_keeps_eight_of_forty() {
    let gpu = GpuSpec::rtx2060_like();
    let k = KernelSpec::new(0, 16, 256, 1.0, 0.0);
    let s = shrink_design_space(&k, &[CriticalProfile::new(30, 128)], &gpu, &OverheadParams::default()).unwrap();
    assert_eq!(s.raw_count(), 40);
    assert_eq!(s.selected.len(), 8);
    assert!((s.pruned_fraction() - 0.8).abs() < 1e-12);
}
