use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use splatreg::cascade::{cascade_extract, CascadeMode};
use splatreg::exec::Execution;
use splatreg::registration::{register_scenes, Extractor, PipelineParams};
use splatreg::swc::SwcParams;
use splatreg::synth::{make_pair, ScenePair, SyntheticPairTemplate};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pair(num_gaussians: usize) -> ScenePair {
    let mut template = SyntheticPairTemplate::exact_recovery();
    template.base.num_gaussians = num_gaussians;
    make_pair(&template.instantiate(1).unwrap()).unwrap()
}

fn swc_extraction(c: &mut Criterion) {
    let scene = pair(50_000).a;
    let mut group = c.benchmark_group("swc_50k");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        let params = SwcParams {
            execution: exec,
            ..SwcParams::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| cascade_extract(black_box(&scene), &params, CascadeMode::Both).unwrap())
        });
    }
    group.finish();
}

fn registration(c: &mut Criterion) {
    let p = pair(5_000);
    let base = PipelineParams::default().with_seed(3);
    let resolved = register_scenes(&p.a, &p.b, &base).unwrap();
    let mut group = c.benchmark_group("register_5k");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, exec) in STRATEGIES {
        let with_swc = base.with_scales_of(&resolved).with_execution(exec);
        let mut bypass = with_swc;
        bypass.extractor = Extractor::MaskOnly {
            opacity_threshold: SwcParams::default().opacity_threshold,
        };
        for (label, params) in [("swc", with_swc), ("bypass", bypass.with_execution(exec))] {
            group.bench_with_input(BenchmarkId::new(label, name), &params, |b, params| {
                b.iter(|| register_scenes(black_box(&p.a), black_box(&p.b), params).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, swc_extraction, registration);
criterion_main!(benches);
