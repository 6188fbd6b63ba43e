use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use splatreg::cascade::{CascadeMode, SceneSnapshot};
use splatreg::gaussian::GaussianCloud;
use splatreg::io::{
    csv_string, run_ablation, run_bench, run_registration, trial_seeds, write_ply, PlyFormat, PlyOptions, PlyScalar,
    Preset, RunConfig, ScenePaths, SceneSource, Sweep,
};
use splatreg::{Error, Result};

macro_rules! to_json {
    ($v:expr) => {
        serde_json::to_string_pretty($v).expect("serializable") + "\n"
    };
}

fn register(args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.config()?;
    let report = run_registration(&cfg)?;
    let text = match args.format.unwrap_or(Format::Json) {
        Format::Json => report.to_json() + "\n",
        Format::Csv => csv_string(&report.csv_rows()),
    };
    write_out(cfg.output.as_deref(), &text)?;
    let s = &report.summary;
    match (s.mean_rotation_error_deg, s.mean_translation_error) {
        (Some(r), Some(t)) => eprintln!(
            "{} trials, {} failed, mean dR {r:.4} deg, mean dt {t:.6}",
            s.trials, s.failures
        ),
        _ => eprintln!("{} trials, {} failed", s.trials, s.failures),
    }
    for t in report.trials.iter().filter(|t| t.failure.is_some()) {
        eprintln!("trial {}: {}", t.trial, t.failure.as_deref().unwrap_or_default());
    }
    Ok(if s.failures == s.trials {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn ablate(sweep: SweepArg, args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.config()?;
    let sweep = match sweep {
        SweepArg::Clusters => Sweep::Clusters,
        SweepArg::Cascade => Sweep::Cascade,
    };
    let cells = run_ablation(&cfg, sweep);
    for c in &cells {
        if let Some(f) = &c.failure {
            eprintln!("cell {}: {f}", c.row.sweep_value);
        }
    }
    let rows: Vec<_> = cells.iter().map(|c| c.row.clone()).collect();
    let text = match args.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_string(&rows),
        Format::Json => to_json!(&rows),
    };
    write_out(cfg.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn bench(args: &RunArgs) -> Result<ExitCode> {
    if args.format == Some(Format::Csv) {
        return Err(Error::Config("bench reports are JSON only".into()));
    }
    let cfg = args.config()?;
    let report = run_bench(&cfg)?;
    write_out(cfg.output.as_deref(), &to_json!(&report))?;
    eprintln!(
        "swc {:.3} s, bypass {:.3} s, ratio {:.3}",
        report.mean_swc_s, report.mean_bypass_s, report.ratio
    );
    Ok(ExitCode::SUCCESS)
}

fn synth(args: &SynthArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::new(SceneSource::Preset {
            name: args.preset.map_or(Preset::Robust, Preset::from),
        }),
    };
    if cfg.source.is_file_based() {
        return Err(Error::Config("synth needs a synthetic source, not files".into()));
    }
    if let Some(p) = args.preset.filter(|_| args.config.is_some()) {
        cfg.source = SceneSource::Preset { name: p.into() };
    }
    set_times(&mut cfg.source, args.t_a, args.t_b);
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.trials = 1;
    let pair = cfg.source.pair(trial_seeds(&cfg)[0])?;
    let gt = pair.ground_truth.expect("synthetic pairs carry ground truth");

    let dir = &args.out;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let save = |name: &str, cloud: &GaussianCloud| {
        let path = dir.join(name);
        let bytes = write_ply(
            cloud,
            PlyFormat::BinaryLittleEndian,
            PlyScalar::Double,
            PlyOptions::default(),
        );
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))
    };
    save("a_static.ply", pair.a.static_cloud())?;
    save("a_deformed.ply", pair.a.deformed_cloud())?;
    save("b_static.ply", pair.b.static_cloud())?;
    save("b_deformed.ply", pair.b.deformed_cloud())?;
    write_out(Some(&dir.join("ground_truth.json")), &to_json!(&gt))?;

    let scene = |prefix: &str, snap: &SceneSnapshot| ScenePaths {
        static_path: format!("{prefix}_static.ply").into(),
        deformed: Some(format!("{prefix}_deformed.ply").into()),
        t: snap.timestamp(),
    };
    let mut pair_cfg = cfg.clone();
    pair_cfg.source = SceneSource::Files {
        a: scene("a", &pair.a),
        b: scene("b", &pair.b),
        ground_truth: Some("ground_truth.json".into()),
        opacity_raw: false,
    };
    pair_cfg.output = None;
    write_out(Some(&dir.join("pair.toml")), &pair_cfg.to_toml()?)?;
    eprintln!(
        "wrote {} + {} Gaussians to {}",
        pair.a.len(),
        pair.b.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn swc_cmd(args: &SwcArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::new(SceneSource::Preset { name: Preset::Exact });
    args.swc.apply(&mut cfg);
    cfg.validate()?;
    let paths = ScenePaths {
        static_path: args.static_path.clone(),
        deformed: args.deformed.clone(),
        t: args.t,
    };
    for p in std::iter::once(&paths.static_path).chain(&paths.deformed) {
        if !p.exists() {
            return Err(io_err(p, std::io::ErrorKind::NotFound.into()));
        }
    }
    let opts = PlyOptions {
        opacity_raw: args.opacity_raw,
    };
    let snap = paths.load(opts)?;
    let keypoints = cfg.pipeline(cfg.seed).extractor.extract(&snap, cfg.mode)?;
    let n = snap.len();
    let opacity = |i: usize| {
        if i < n {
            snap.static_cloud().opacities()[i]
        } else {
            snap.deformed_cloud().opacities()[i - n]
        }
    };
    let cloud = GaussianCloud::new(
        keypoints.positions.clone(),
        keypoints.source_indices.iter().map(|&i| opacity(i)).collect(),
    )?;
    let bytes = write_ply(&cloud, PlyFormat::BinaryLittleEndian, PlyScalar::Double, opts);
    fs::write(&args.out, bytes).map_err(|e| io_err(&args.out, e))?;
    eprintln!("{} keypoints from {} Gaussians", keypoints.len(), n);
    Ok(ExitCode::SUCCESS)
}

/// Input and configuration problems exit with 2, pipeline failures with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Schema(_) | Error::Data { .. } | Error::Config(_) => 2,
        _ => 1,
    }
}

#[derive(Parser)]
#[command(
    name = "splatreg",
    version,
    about = "Keypoint extraction and rigid registration of Gaussian-splat scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register scene pairs and report pose errors.
    Register(RunArgs),
    /// Write a synthetic scene pair as PLY files, ground truth and a config.
    Synth(SynthArgs),
    /// Extract keypoints from one scene and write them as PLY.
    Swc(SwcArgs),
    /// Run a clusters or cascade sweep and emit one row per cell.
    Ablate {
        #[arg(long, value_enum)]
        sweep: SweepArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Time the SWC pipeline against the opacity-mask-only bypass.
    Bench(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Exact,
    Robust,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Both,
    Static,
    Deformed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Clusters,
    Cascade,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<ModeArg> for CascadeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Both => CascadeMode::Both,
            ModeArg::Static => CascadeMode::StaticOnly,
            ModeArg::Deformed => CascadeMode::DeformedOnly,
        }
    }
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Exact => Preset::Exact,
            PresetArg::Robust => Preset::Robust,
        }
    }
}

#[derive(Args)]
struct SwcFlags {
    /// Number of clusters; 0 bypasses clustering.
    #[arg(long)]
    clusters: Option<usize>,
    /// Opacity threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fraction of each cluster dropped.
    #[arg(long)]
    drop_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

impl SwcFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(n) = self.clusters {
            cfg.swc.num_clusters = n;
        }
        if let Some(e) = self.epsilon {
            cfg.swc.opacity_threshold = e;
        }
        if let Some(d) = self.drop_rate {
            cfg.swc.drop_rate = d;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic preset used when neither --config nor --a/--b is given.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Static PLY of scene A.
    #[arg(long, requires = "b")]
    a: Option<PathBuf>,
    /// Static PLY of scene B.
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    #[arg(long, requires = "a")]
    a_deformed: Option<PathBuf>,
    #[arg(long, requires = "b")]
    b_deformed: Option<PathBuf>,
    /// JSON {"matrix": [16 numbers, row-major]} mapping A to B.
    #[arg(long, requires = "a")]
    ground_truth: Option<PathBuf>,
    /// PLY opacities are already in [0, 1].
    #[arg(long)]
    opacity_raw: bool,
    #[command(flatten)]
    swc: SwcFlags,
    #[arg(long)]
    t_a: Option<f64>,
    #[arg(long)]
    t_b: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Multiplier applied to reported translation errors.
    #[arg(long)]
    units_scale: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => RunConfig::from_path(path)?,
            (None, preset) => RunConfig::new(SceneSource::Preset {
                name: preset.map_or(Preset::Robust, Preset::from),
            }),
        };
        if let Some(p) = self.preset.filter(|_| self.config.is_some()) {
            cfg.source = SceneSource::Preset { name: p.into() };
        }
        if let (Some(a), Some(b)) = (&self.a, &self.b) {
            cfg.source = SceneSource::Files {
                a: ScenePaths {
                    static_path: a.clone(),
                    deformed: self.a_deformed.clone(),
                    t: 0.0,
                },
                b: ScenePaths {
                    static_path: b.clone(),
                    deformed: self.b_deformed.clone(),
                    t: 0.0,
                },
                ground_truth: self.ground_truth.clone(),
                opacity_raw: self.opacity_raw,
            };
        }
        set_times(&mut cfg.source, self.t_a, self.t_b);
        if let SceneSource::Files { opacity_raw, .. } = &mut cfg.source {
            *opacity_raw |= self.opacity_raw;
        }
        self.swc.apply(&mut cfg);
        if let Some(n) = self.trials {
            cfg.trials = n;
        }
        if let Some(u) = self.units_scale {
            cfg.units_scale = u;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set_times(source: &mut SceneSource, t_a: Option<f64>, t_b: Option<f64>) {
    if t_a.is_none() && t_b.is_none() {
        return;
    }
    if let SceneSource::Preset { name } = *source {
        *source = SceneSource::Synthetic {
            template: name.template(),
        };
    }
    match source {
        SceneSource::Synthetic { template } => {
            template.t_a = t_a.unwrap_or(template.t_a);
            template.t_b = t_b.unwrap_or(template.t_b);
        }
        SceneSource::Files { a, b, .. } => {
            a.t = t_a.unwrap_or(a.t);
            b.t = t_b.unwrap_or(b.t);
        }
        SceneSource::Preset { .. } => unreachable!(),
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Master seed; the pair is the one trial 0 of a run with this seed uses.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_a: Option<f64>,
    #[arg(long)]
    t_b: Option<f64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SwcArgs {
    /// Canonical Gaussians.
    #[arg(long = "static")]
    static_path: PathBuf,
    /// Deformed Gaussians; the canonical cloud is used when absent.
    #[arg(long)]
    deformed: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long)]
    opacity_raw: bool,
    #[command(flatten)]
    swc: SwcFlags,
    /// Output PLY with one vertex per keypoint.
    #[arg(long)]
    out: PathBuf,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Register(a) => register(a),
        Command::Synth(a) => synth(a),
        Command::Swc(a) => swc_cmd(a),
        Command::Ablate { sweep, run } => ablate(*sweep, run),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let mut shown = e.to_string();
            eprintln!("error: {shown}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let text = s.to_string();
                if !shown.contains(&text) {
                    eprintln!("  caused by: {text}");
                }
                shown = text;
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
