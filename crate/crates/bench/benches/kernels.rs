use criterion::{black_box, criterion_group, criterion_main, Criterion};
use stylesplit_bench::{disk, erosion_dilation_cohort};
use stylesplit_core::distance::boundary_distance_field;
use stylesplit_core::metrics::{dsc, sdsc_slice};
use stylesplit_core::objective::{compute_baseline, proxy_g, DEFAULT_BASELINE_FLOOR};
use stylesplit_core::optimizer::PartitionFitness;
use stylesplit_core::{optimize_partition, GaConfig, MetricConfig, Partition, Result};

fn metrics(c: &mut Criterion) {
    let g = disk(128, 30.0, 64.0, 0.08);
    let p = disk(128, 33.0, 66.0, 0.08);
    let cfg = MetricConfig::default();
    c.bench_function("dsc 128x128", |b| {
        b.iter(|| dsc(black_box(&g), black_box(&p)))
    });
    c.bench_function("sdsc_slice 128x128", |b| {
        b.iter(|| sdsc_slice(black_box(&g), black_box(&p), &cfg))
    });
    let border = g.boundary();
    c.bench_function("boundary_distance_field 128x128", |b| {
        b.iter(|| boundary_distance_field(black_box(&border)))
    });
}

/// Distance to a fixed split, so the search cost is measured without fits.
struct ToTarget(Partition);

impl PartitionFitness for ToTarget {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn evaluate(&self, batch: &[Partition]) -> Result<Vec<f64>> {
        Ok(batch
            .iter()
            .map(|p| {
                let d = p.hamming(&self.0);
                d.min(p.len() - d) as f64
            })
            .collect())
    }
}

fn search(c: &mut Criterion) {
    let target = Partition::new((0..20).map(|i| i % 3 == 1).collect());
    let fitness = ToTarget(target);
    c.bench_function("optimize_partition n=20 budget=250", |b| {
        b.iter(|| optimize_partition(&fitness, &GaConfig::default()))
    });
}

fn objective(c: &mut Criterion) {
    let prepared = erosion_dilation_cohort();
    let trainer = prepared.trainer.as_ref();
    let baseline = compute_baseline(trainer, DEFAULT_BASELINE_FLOOR).unwrap();
    let truth = Partition::from_labels(&prepared.labels).unwrap();
    let mut group = c.benchmark_group("objective");
    group.sample_size(10);
    group.bench_function("proxy_g warm session", |b| {
        b.iter(|| proxy_g(trainer, &baseline, black_box(&truth)))
    });
    group.bench_function("pretrain and bind", |b| b.iter(erosion_dilation_cohort));
    group.finish();
}

criterion_group!(benches, metrics, search, objective);
criterion_main!(benches);
