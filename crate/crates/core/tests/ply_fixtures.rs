mod common;

use common::{check_golden, check_malformed, expected, fixture, round_trips};
use splatreg::io::{load_ply_gaussians, save_ply, PlyFormat, PlyOptions, PlyScalar};

#[test]
fn golden_files_decode_to_recorded_values() {
    let exp = expected();
    let vertices = exp["vertices"].as_array().unwrap();
    for name in exp["golden"].as_array().unwrap() {
        let cloud = load_ply_gaussians(fixture(name.as_str().unwrap()), PlyOptions::default()).unwrap();
        check_golden(&cloud, vertices).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn ascii_and_binary_fixtures_agree() {
    let a = load_ply_gaussians(fixture("golden_ascii.ply"), PlyOptions::default()).unwrap();
    let b = load_ply_gaussians(fixture("golden_binary.ply"), PlyOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn golden_files_round_trip() {
    for name in expected()["golden"].as_array().unwrap() {
        let cloud = load_ply_gaussians(fixture(name.as_str().unwrap()), PlyOptions::default()).unwrap();
        round_trips(&cloud).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn saved_file_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = load_ply_gaussians(fixture("golden_binary.ply"), PlyOptions::default()).unwrap();
    let path = dir.path().join("out.ply");
    save_ply(
        &path,
        &cloud,
        PlyFormat::BinaryLittleEndian,
        PlyScalar::Double,
        PlyOptions::default(),
    )
    .unwrap();
    assert_eq!(load_ply_gaussians(&path, PlyOptions::default()).unwrap(), cloud);
}

#[test]
fn raw_opacity_skips_activation() {
    let exp = expected();
    let cloud = load_ply_gaussians(fixture("golden_binary.ply"), PlyOptions { opacity_raw: true });
    // Stored logits include values outside [0, 1], which raw mode must reject.
    let stored: Vec<f64> = exp["vertices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| {
            f64::from_bits(
                u64::from_str_radix(v["opacity_stored"].as_str().unwrap().trim_start_matches("0x"), 16).unwrap(),
            )
        })
        .collect();
    let outside: Vec<usize> = (0..stored.len())
        .filter(|&i| !(0.0..=1.0).contains(&stored[i]))
        .collect();
    match cloud {
        Err(splatreg::Error::Data { indices }) => assert_eq!(indices, outside),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_fixtures_fail_as_recorded() {
    for spec in expected()["malformed"].as_array().unwrap() {
        check_malformed(spec).unwrap();
    }
}

#[test]
fn missing_file_names_the_path() {
    let err = load_ply_gaussians("/no/such/scene.ply", PlyOptions::default()).unwrap_err();
    assert!(err.to_string().contains("/no/such/scene.ply"), "{err}");
}
