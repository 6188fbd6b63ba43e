use serde_json::Value;
use splatreg::io::{run_registration, RunConfig, SceneSource};
use splatreg::synth::SyntheticPairTemplate;

fn schema() -> jsonschema::Validator {
    let text = include_str!("../schema/report.schema.json");
    let schema: Value = serde_json::from_str(text).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn small_config() -> RunConfig {
    let mut template = SyntheticPairTemplate::exact_recovery();
    template.base.num_gaussians = 1500;
    let mut cfg = RunConfig::new(SceneSource::Synthetic { template });
    cfg.trials = 2;
    cfg.seed = 11;
    cfg
}

fn assert_valid(v: &jsonschema::Validator, report: &Value) {
    let errors: Vec<String> = v
        .iter_errors(report)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn successful_run_matches_schema() {
    let report = run_registration(&small_config()).unwrap();
    assert_eq!(report.summary.failures, 0);
    let json: Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_valid(&schema(), &json);
}

#[test]
fn failed_trials_match_schema() {
    let mut cfg = small_config();
    cfg.swc.opacity_threshold = 1.0;
    let report = run_registration(&cfg).unwrap();
    assert_eq!(report.summary.failures, 2);
    let json: Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_valid(&schema(), &json);
}

#[test]
fn schema_rejects_altered_reports() {
    let report = run_registration(&small_config()).unwrap();
    let good: Value = serde_json::from_str(&report.to_json()).unwrap();
    let v = schema();

    let mut short_matrix = good.clone();
    short_matrix["trials"][0]["result"]["transform"]["matrix"]
        .as_array_mut()
        .unwrap()
        .pop();
    assert!(!v.is_valid(&short_matrix));

    let mut extra = good.clone();
    extra["summary"]["median"] = Value::from(1.0);
    assert!(!v.is_valid(&extra));

    let mut both = good.clone();
    both["trials"][0]["failure"] = Value::from("boom");
    assert!(!v.is_valid(&both));

    let mut version = good;
    version["schema_version"] = Value::from(2);
    assert!(!v.is_valid(&version));
}
