//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::Value;
use splatreg::gaussian::GaussianCloud;
use splatreg::io::{parse_ply, write_ply, PlyFormat, PlyOptions, PlyScalar};
use splatreg::Error;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn expected() -> Value {
    let text = std::fs::read_to_string(fixture("expected.json")).expect("expected.json");
    serde_json::from_str(&text).expect("expected.json parses")
}

fn from_bits(v: &Value) -> f64 {
    let s = v.as_str().expect("hex string");
    f64::from_bits(u64::from_str_radix(s.trim_start_matches("0x"), 16).expect("hex"))
}

fn bits_list(v: &Value) -> Vec<f64> {
    v.as_array().expect("array").iter().map(from_bits).collect()
}

/// Compares a decoded cloud with the recorded vertices, bit for bit.
pub fn check_golden(cloud: &GaussianCloud, vertices: &[Value]) -> Result<(), String> {
    if cloud.len() != vertices.len() {
        return Err(format!("{} vertices, expected {}", cloud.len(), vertices.len()));
    }
    let scales = cloud.scales().ok_or("no scales")?;
    let rots = cloud.rotations().ok_or("no rotations")?;
    let sh = cloud.sh().ok_or("no sh")?;
    for (i, v) in vertices.iter().enumerate() {
        let same = |what: &str, got: &[f64], want: Vec<f64>| {
            if got.iter().map(|g| g.to_bits()).eq(want.iter().map(|w| w.to_bits())) {
                Ok(())
            } else {
                Err(format!("vertex {i} {what}: got {got:?}, expected {want:?}"))
            }
        };
        let p = cloud.positions()[i];
        same("position", &[p.x, p.y, p.z], bits_list(&v["position"]))?;
        same("opacity", &[cloud.opacities()[i]], vec![from_bits(&v["opacity"])])?;
        same("scale", scales[i].as_slice(), bits_list(&v["scale"]))?;
        let q = rots[i].quaternion();
        same("rotation", &[q.w, q.i, q.j, q.k], bits_list(&v["rotation_wxyz"]))?;
        same("sh", sh.row(i), bits_list(&v["sh"]))?;
    }
    Ok(())
}

/// Writes `cloud` in every format that is exact for its values and reparses.
pub fn round_trips(cloud: &GaussianCloud) -> Result<(), String> {
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let bytes = write_ply(cloud, format, PlyScalar::Double, PlyOptions::default());
        let back = parse_ply(&bytes, PlyOptions::default()).map_err(|e| e.to_string())?;
        if &back != cloud {
            return Err(format!("{format:?} round trip changed the cloud"));
        }
    }
    Ok(())
}

/// Checks that a malformed fixture fails the way `spec` says.
pub fn check_malformed(spec: &Value) -> Result<(), String> {
    let name = spec["file"].as_str().unwrap();
    let bytes = std::fs::read(fixture(name)).map_err(|e| e.to_string())?;
    let err = match parse_ply(&bytes, PlyOptions::default()) {
        Ok(_) => return Err(format!("{name}: parsed without error")),
        Err(e) => e,
    };
    let ok = match (spec["kind"].as_str().unwrap(), &err) {
        ("parse", Error::Parse { offset, .. }) => Some(*offset as u64) == spec["offset"].as_u64(),
        ("schema", Error::Schema(_)) => true,
        ("data", Error::Data { indices }) => {
            let want: Vec<usize> = spec["indices"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap() as usize)
                .collect();
            *indices == want
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{name}: got {err:?}, expected {spec}"))
    }
}
