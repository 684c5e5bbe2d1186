use elastic_core::planner::slicing_plan;
use elastic_dsl::{
    elasticize, elasticize_with, interpret, load_dir, naive_resize, parse_kernel, print_kernel, random_inputs,
    shipped_dir, trials, user_body, verification_block_sizes, verify_equivalence, Arrays, Builtin, CorpusEntry,
    ElasticOptions, Expr, IndexMode, LaunchConfig,
};

const WARP: u32 = 32;

fn corpus() -> Vec<CorpusEntry> {
    load_dir(&shipped_dir()).unwrap()
}

fn all_trials(e: &CorpusEntry) -> Vec<elastic_dsl::Trial> {
    trials(
        e.grid,
        &slicing_plan(e.grid).unwrap(),
        &verification_block_sizes(e.block, WARP),
    )
}

#[test]
fn every_plan_and_block_size_is_bit_exact() {
    let corpus = corpus();
    assert!(corpus.len() >= 8);
    for e in &corpus {
        let inputs = random_inputs(&e.kernel, 17);
        for mode in [IndexMode::Computation, IndexMode::Memory] {
            let elastic = elasticize(&e.kernel, mode).unwrap();
            let report = verify_equivalence(&e.kernel, &elastic, e.grid, e.block, &all_trials(e), &inputs, 3).unwrap();
            let failures: Vec<_> = report.failures().collect();
            assert!(
                failures.is_empty(),
                "{} ({}): {failures:?}",
                e.kernel.name,
                mode.as_str()
            );
        }
    }
}

#[test]
fn corpus_kernels_are_race_free() {
    for e in corpus() {
        let run = interpret(
            &e.kernel,
            &LaunchConfig::plain(e.grid, e.block),
            &random_inputs(&e.kernel, 1),
        )
        .unwrap();
        assert!(
            run.conflicts.is_empty(),
            "{}: {:?}",
            e.kernel.name,
            run.conflicts.first()
        );
    }
}

#[test]
fn naive_resize_breaks_some_kernels_but_not_all() {
    let mut broken = Vec::new();
    let mut safe = Vec::new();
    for e in corpus() {
        let r = naive_resize(&e.kernel, e.grid, e.block, &random_inputs(&e.kernel, 5)).unwrap();
        if r.difference.is_some() {
            broken.push(e.kernel.name.clone());
        } else {
            safe.push(e.kernel.name.clone());
        }
    }
    assert!(broken.contains(&"block_reduce".to_string()), "{broken:?}");
    assert!(safe.contains(&"vector_add".to_string()), "{safe:?}");
}

#[test]
fn skipping_a_rewrite_is_caught() {
    let corpus = corpus();
    for skipped in Builtin::PHYSICAL {
        let mut caught = Vec::new();
        for e in &corpus {
            if !e.kernel.uses_builtin(skipped) {
                continue;
            }
            let opts = ElasticOptions {
                mode: IndexMode::Computation,
                skip_rewrite: Some(skipped),
            };
            let broken = elasticize_with(&e.kernel, opts).unwrap();
            let inputs = random_inputs(&e.kernel, 8);
            let report = verify_equivalence(&e.kernel, &broken, e.grid, e.block, &all_trials(e), &inputs, 0).unwrap();
            if !report.passed() {
                caught.push(e.kernel.name.clone());
            }
        }
        assert!(!caught.is_empty(), "skipping {} went unnoticed", skipped.spelling());
        if skipped == Builtin::GridDim {
            assert!(caught.contains(&"grid_stride".to_string()), "{caught:?}");
        }
    }
}

#[test]
fn every_logical_thread_runs_exactly_once() {
    let probe = corpus()
        .into_iter()
        .find(|e| e.kernel.name == "global_id_probe")
        .unwrap();
    let (m, b) = (probe.grid, probe.block);
    let zeros: Arrays = [("hits".to_string(), vec![0; (m * b) as usize])].into();
    for mode in [IndexMode::Computation, IndexMode::Memory] {
        let elastic = elasticize(&probe.kernel, mode).unwrap();
        for t in all_trials(&probe) {
            let mut memory = zeros.clone();
            for &(start, count) in &t.plan {
                let run = interpret(
                    &elastic,
                    &LaunchConfig::shard(start, count, t.block, m, b, mode),
                    &memory,
                )
                .unwrap();
                memory.extend(run.outputs);
            }
            assert!(memory["hits"].iter().all(|&h| h == 1), "{t:?}");
        }
    }
}

#[test]
fn transformed_user_code_has_no_physical_identifiers() {
    for e in corpus() {
        for mode in [IndexMode::Computation, IndexMode::Memory] {
            let elastic = elasticize(&e.kernel, mode).unwrap();
            let body = user_body(&elastic).unwrap();
            assert_eq!(body.len(), e.kernel.body.len());
            for s in body {
                s.visit_exprs(&mut |x| {
                    if let Expr::Builtin(b) = x {
                        assert!(!Builtin::PHYSICAL.contains(b), "{}: {}", e.kernel.name, b.spelling());
                    }
                });
            }
        }
    }
}

#[test]
fn index_modes_give_identical_outputs_and_different_sources() {
    for e in corpus() {
        let inputs = random_inputs(&e.kernel, 21);
        let comp = elasticize(&e.kernel, IndexMode::Computation).unwrap();
        let mem = elasticize(&e.kernel, IndexMode::Memory).unwrap();
        assert_ne!(print_kernel(&comp), print_kernel(&mem));
        for size in slicing_plan(e.grid).unwrap() {
            let run = |k, mode| {
                let mut memory = inputs.clone();
                for (start, count) in elastic_dsl::uniform_plan(e.grid, size) {
                    let cfg = LaunchConfig::shard(start, count, (e.block / 2).max(1), e.grid, e.block, mode);
                    memory.extend(interpret(k, &cfg, &memory).unwrap().outputs);
                }
                memory
            };
            assert_eq!(
                run(&comp, IndexMode::Computation),
                run(&mem, IndexMode::Memory),
                "{}",
                e.kernel.name
            );
        }
    }
}

#[test]
fn corpus_round_trips_through_the_printer() {
    for e in corpus() {
        let printed = print_kernel(&e.kernel);
        assert_eq!(parse_kernel(&printed).unwrap(), e.kernel, "{printed}");
        for mode in [IndexMode::Computation, IndexMode::Memory] {
            let elastic = elasticize(&e.kernel, mode).unwrap();
            assert_eq!(parse_kernel(&print_kernel(&elastic)).unwrap(), elastic);
        }
    }
}
