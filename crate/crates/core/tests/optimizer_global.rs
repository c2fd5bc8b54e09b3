use stylesplit_core::harness::{prepare, CohortConfig, ExperimentConfig};
use stylesplit_core::objective::{compute_baseline, Evaluator, ObjectiveKind};
use stylesplit_core::{optimize_partition, GaConfig, Layout, Partition, StyleSpec};

fn all_partitions(n: usize) -> Vec<Partition> {
    (1u32..1 << (n - 1))
        .map(|v| {
            Partition::new(
                (0..n)
                    .map(|i| i > 0 && (v >> (n - 1 - i)) & 1 == 1)
                    .collect(),
            )
        })
        .collect()
}

#[test]
fn ga_finds_exhaustive_minimum_on_ten_scans() {
    let cfg = ExperimentConfig {
        cohort: CohortConfig {
            styles: StyleSpec::parse_list("shift-up:10:4,shift-down:10:4").unwrap(),
            layout: Layout::Custom {
                styles: 2,
                total: 14,
                pretrain: 4,
            },
            seed: 21,
            ..CohortConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let prepared = prepare(&cfg).unwrap();
    let trainer = prepared.trainer.as_ref();
    assert_eq!(trainer.len(), 10);
    let baseline = compute_baseline(trainer, cfg.recursive.baseline_floor).unwrap();

    // 511 canonical partitions: more than the 200 warm-up evaluations.
    let space = all_partitions(10);
    let exhaustive = Evaluator::new(trainer, &baseline, ObjectiveKind::ProxyG, 0);
    let global = exhaustive
        .evaluate_batch(&space)
        .unwrap()
        .iter()
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);

    let mut hits = 0;
    for seed in 0..20 {
        let ga = GaConfig {
            seed,
            ..GaConfig::default()
        };
        let evaluator = Evaluator::new(trainer, &baseline, ObjectiveKind::ProxyG, seed);
        let run = optimize_partition(&evaluator, &ga).unwrap();
        assert!(run.true_evaluations <= ga.max_true_evaluations);
        assert_eq!(evaluator.true_evaluations(), run.true_evaluations);
        assert!(run.history.iter().any(|(p, _)| *p == run.best));
        hits += usize::from(run.best_value <= global);
    }
    assert!(hits >= 19, "global minimum in {hits}/20 runs");
}
