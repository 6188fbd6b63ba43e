//! Declarative run configuration, TOML or JSON.
//!
//! ```toml
//! trials = 10
//! seed = 42
//! mode = "both"
//!
//! [source]
//! type = "preset"
//! name = "robust"
//!
//! [swc]
//! num_clusters = 5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeMode, Provenance, SceneSnapshot};
use crate::io::ply::{load_ply_gaussians, PlyOptions};
use crate::registration::{Extractor, IcpParams, PipelineParams, RansacParams};
use crate::swc::SwcParams;
use crate::synth::{make_pair, ScenePair, SyntheticPairTemplate};
use crate::transform::RigidTransform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Exact,
    Robust,
}

impl Preset {
    pub fn template(self) -> SyntheticPairTemplate {
        match self {
            Preset::Exact => SyntheticPairTemplate::exact_recovery(),
            Preset::Robust => SyntheticPairTemplate::robust(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Preset::Exact),
            "robust" => Ok(Preset::Robust),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected exact or robust)"
            ))),
        }
    }
}

/// One scene on disk: its canonical Gaussians and, optionally, the same
/// Gaussians deformed at time `t`. Without a deformed file the canonical
/// cloud is used for both blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePaths {
    #[serde(rename = "static")]
    pub static_path: PathBuf,
    #[serde(default)]
    pub deformed: Option<PathBuf>,
    #[serde(default)]
    pub t: f64,
}

impl ScenePaths {
    pub fn load(&self, opts: PlyOptions) -> Result<SceneSnapshot> {
        let canonical = load_ply_gaussians(&self.static_path, opts)?;
        let deformed = match &self.deformed {
            Some(p) => load_ply_gaussians(p, opts)?,
            None => canonical.clone(),
        };
        SceneSnapshot::new(canonical, deformed, self.t, Provenance::External)
    }

    fn paths(&self) -> impl Iterator<Item = &Path> {
        std::iter::once(self.static_path.as_path()).chain(self.deformed.as_deref())
    }

    fn rebase(&mut self, dir: &Path) {
        self.static_path = dir.join(&self.static_path);
        if let Some(d) = &mut self.deformed {
            *d = dir.join(&*d);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    Preset {
        name: Preset,
    },
    Synthetic {
        template: SyntheticPairTemplate,
    },
    Files {
        a: ScenePaths,
        b: ScenePaths,
        /// JSON `{"matrix": [16 numbers, row-major]}` mapping A to B.
        #[serde(default)]
        ground_truth: Option<PathBuf>,
        #[serde(default)]
        opacity_raw: bool,
    },
}

/// A scene pair ready for registration.
#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub a: SceneSnapshot,
    pub b: SceneSnapshot,
    pub ground_truth: Option<RigidTransform>,
}

impl From<ScenePair> for LoadedPair {
    fn from(p: ScenePair) -> Self {
        Self {
            a: p.a,
            b: p.b,
            ground_truth: Some(p.ground_truth),
        }
    }
}

pub fn load_ground_truth(path: &Path) -> Result<RigidTransform> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl SceneSource {
    /// The pair for trial seed `seed`. File sources ignore the seed.
    pub fn pair(&self, seed: u64) -> Result<LoadedPair> {
        match self {
            SceneSource::Preset { name } => Ok(make_pair(&name.template().instantiate(seed)?)?.into()),
            SceneSource::Synthetic { template } => Ok(make_pair(&template.instantiate(seed)?)?.into()),
            SceneSource::Files {
                a,
                b,
                ground_truth,
                opacity_raw,
            } => {
                let opts = PlyOptions {
                    opacity_raw: *opacity_raw,
                };
                Ok(LoadedPair {
                    a: a.load(opts)?,
                    b: b.load(opts)?,
                    ground_truth: ground_truth.as_deref().map(load_ground_truth).transpose()?,
                })
            }
        }
    }

    pub fn is_file_based(&self) -> bool {
        matches!(self, SceneSource::Files { .. })
    }

    fn check_paths(&self) -> Result<()> {
        if let SceneSource::Files { a, b, ground_truth, .. } = self {
            for p in a.paths().chain(b.paths()).chain(ground_truth.as_deref()) {
                if !p.exists() {
                    return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
                }
            }
        }
        Ok(())
    }
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SceneSource,
    /// `num_clusters = 0` bypasses clustering.
    #[serde(default)]
    pub swc: SwcParams,
    #[serde(default)]
    pub ransac: RansacParams,
    #[serde(default)]
    pub icp: IcpParams,
    #[serde(default)]
    pub mode: CascadeMode,
    #[serde(default = "one")]
    pub trials: usize,
    /// Master seed; trial `i` runs with `seed::derive(seed, i)`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Multiplier applied to reported translation errors, e.g. to get mm.
    #[serde(default = "unit")]
    pub units_scale: f64,
}

impl RunConfig {
    pub fn new(source: SceneSource) -> Self {
        Self {
            source,
            swc: SwcParams::default(),
            ransac: RansacParams::default(),
            icp: IcpParams::default(),
            mode: CascadeMode::Both,
            trials: 1,
            seed: 0,
            output: None,
            units_scale: 1.0,
        }
    }

    /// Reads `.json` as JSON and anything else as TOML. Relative scene and
    /// ground-truth paths are taken relative to the file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: RunConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let (SceneSource::Files { a, b, ground_truth, .. }, Some(dir)) = (&mut cfg.source, path.parent()) {
            a.rebase(dir);
            b.rebase(dir);
            if let Some(g) = ground_truth {
                *g = dir.join(&*g);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.units_scale > 0.0 && self.units_scale.is_finite()) {
            return Err(Error::Config(format!(
                "units_scale must be positive, got {}",
                self.units_scale
            )));
        }
        if self.swc.num_clusters > 0 {
            self.swc.validate()?;
        }
        self.ransac.validate()?;
        self.icp.validate()?;
        self.source.check_paths()
    }

    pub fn extractor(&self) -> Extractor {
        Extractor::from_clusters(self.swc.num_clusters, self.swc)
    }

    /// Pipeline settings for trial seed `seed`.
    pub fn pipeline(&self, seed: u64) -> PipelineParams {
        PipelineParams {
            extractor: self.extractor(),
            ransac: self.ransac,
            icp: self.icp,
            mode: self.mode,
        }
        .with_seed(seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_defaults_mirror_pipeline_defaults() {
        let cfg: RunConfig = toml::from_str("[source]\ntype = \"preset\"\nname = \"exact\"\n").unwrap();
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.swc, SwcParams::default());
        assert_eq!(cfg.mode, CascadeMode::Both);
        assert_eq!(
            (cfg.swc.num_clusters, cfg.swc.opacity_threshold, cfg.swc.drop_rate),
            (5, 0.8, 0.5)
        );
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml_and_json() {
        let mut cfg = RunConfig::new(SceneSource::Synthetic {
            template: SyntheticPairTemplate::robust(),
        });
        cfg.trials = 7;
        cfg.mode = CascadeMode::StaticOnly;
        cfg.ransac.inlier_distance = Some(0.01);
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig::new(SceneSource::Preset { name: Preset::Exact });
        cfg.trials = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let unknown = "bogus = 1\n[source]\ntype = \"preset\"\nname = \"exact\"\n";
        assert!(toml::from_str::<RunConfig>(unknown).is_err());
    }

    #[test]
    fn missing_files_name_the_path() {
        let cfg = RunConfig::new(SceneSource::Files {
            a: ScenePaths {
                static_path: "/nonexistent/a.ply".into(),
                deformed: None,
                t: 0.0,
            },
            b: ScenePaths {
                static_path: "/nonexistent/b.ply".into(),
                deformed: None,
                t: 0.0,
            },
            ground_truth: None,
            opacity_raw: false,
        });
        match cfg.validate() {
            Err(Error::Io { path, source }) => {
                assert_eq!(path, PathBuf::from("/nonexistent/a.ply"));
                assert_eq!(source.kind(), std::io::ErrorKind::NotFound);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_paths_are_relative_to_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.toml");
        let text = "[source]\ntype = \"files\"\nground_truth = \"gt.json\"\n\
                    [source.a]\nstatic = \"a.ply\"\n[source.b]\nstatic = \"/abs/b.ply\"\ndeformed = \"b_def.ply\"\nt = 0.5\n";
        std::fs::write(&path, text).unwrap();
        let cfg = RunConfig::from_path(&path).unwrap();
        let SceneSource::Files { a, b, ground_truth, .. } = cfg.source else {
            panic!("not a file source");
        };
        assert_eq!(a.static_path, dir.path().join("a.ply"));
        assert_eq!(b.static_path, PathBuf::from("/abs/b.ply"));
        assert_eq!(b.deformed, Some(dir.path().join("b_def.ply")));
        assert_eq!(b.t, 0.5);
        assert_eq!(ground_truth, Some(dir.path().join("gt.json")));
    }

    #[test]
    fn ground_truth_json_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..50 {
            let gt = crate::synth::random_rigid(seed, 30.0, 0.7);
            let path = dir.path().join("gt.json");
            std::fs::write(&path, serde_json::to_string(&gt).unwrap()).unwrap();
            let back = load_ground_truth(&path).unwrap();
            assert_eq!(back.to_row_major(), gt.to_row_major(), "seed {seed}");
        }
    }

    #[test]
    fn zero_clusters_selects_bypass() {
        let mut cfg = RunConfig::new(SceneSource::Preset { name: Preset::Exact });
        cfg.swc.num_clusters = 0;
        cfg.validate().unwrap();
        assert!(matches!(cfg.extractor(), Extractor::MaskOnly { opacity_threshold } if opacity_threshold == 0.8));
    }
}
