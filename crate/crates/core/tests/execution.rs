use splatreg::exec::Execution;
use splatreg::registration::{register_scenes, PipelineParams, StageTimings};
use splatreg::synth::{make_pair, SyntheticPairTemplate};

#[test]
fn sequential_and_parallel_agree() {
    let mut template = SyntheticPairTemplate::robust();
    template.base.num_gaussians = 2000;
    for seed in 0..3 {
        let pair = make_pair(&template.instantiate(seed).unwrap()).unwrap();
        let run = |exec| {
            let params = PipelineParams::default().with_seed(seed).with_execution(exec);
            let mut r = register_scenes(&pair.a, &pair.b, &params).unwrap();
            r.timings = StageTimings::default();
            r
        };
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel), "seed {seed}");
    }
}
