//! Run configuration: defaults, optional TOML config file, command-line
//! flags. Flags override the file, the file overrides defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::Deserialize;

use mespot::flow::{BlockMatchFlow, FlowBackend, FlowParams};
use mespot::ingest::{builtin_profiles, DatasetProfile, ExpressionKind};
use mespot::mdmd::BinOrientation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindChoice {
    Macro,
    Micro,
    Both,
}

impl KindChoice {
    pub fn kinds(self) -> Vec<ExpressionKind> {
        match self {
            KindChoice::Macro => vec![ExpressionKind::Macro],
            KindChoice::Micro => vec![ExpressionKind::Micro],
            KindChoice::Both => vec![ExpressionKind::Macro, ExpressionKind::Micro],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationChoice {
    /// Direction sector 0 centered on angle 0.
    Axis,
    /// Direction sector 0 starting at angle 0.
    Quadrant,
}

impl From<OrientationChoice> for BinOrientation {
    fn from(c: OrientationChoice) -> Self {
        match c {
            OrientationChoice::Axis => BinOrientation::AxisCentered,
            OrientationChoice::Quadrant => BinOrientation::Quadrant,
        }
    }
}

/// Keys accepted in a `--config` TOML file; every key mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<String>,
    pub kind: Option<KindChoice>,
    pub p: Option<f64>,
    pub flow: Option<String>,
    pub flow_window: Option<usize>,
    pub flow_search: Option<usize>,
    pub flow_stride: Option<usize>,
    pub jobs: Option<usize>,
    pub bin_orientation: Option<OrientationChoice>,
    pub frames_root: Option<PathBuf>,
    pub landmarks_root: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dump_series: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Flags shared by the pipeline subcommands (`spot`, `sweep`).
#[derive(Debug, clap::Args)]
pub struct PipelineArgs {
    /// Directory holding one sub-directory of frames per video.
    #[arg(long)]
    pub frames_root: Option<PathBuf>,

    /// Directory holding one `<video_id>.csv` (or `.json`) landmark file per video.
    #[arg(long)]
    pub landmarks_root: Option<PathBuf>,

    /// Builtin profile name (`casme2`, `samm`) or path to a profile TOML file.
    #[arg(long)]
    pub profile: Option<String>,

    /// Expression kinds to spot.
    #[arg(long, value_enum)]
    pub kind: Option<KindChoice>,

    /// Flow backend name.
    #[arg(long)]
    pub flow: Option<String>,

    /// Flow matching window radius in pixels.
    #[arg(long)]
    pub flow_window: Option<usize>,

    /// Flow search radius in pixels.
    #[arg(long)]
    pub flow_search: Option<usize>,

    /// Flow sample grid stride in pixels (1 = dense).
    #[arg(long)]
    pub flow_stride: Option<usize>,

    /// Worker threads for video-level parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,

    /// Direction sector anchoring.
    #[arg(long, value_enum)]
    pub bin_orientation: Option<OrientationChoice>,

    /// TOML config file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved pipeline configuration.
pub struct RunConfig {
    pub profile: DatasetProfile,
    pub kinds: Vec<ExpressionKind>,
    pub backend: Box<dyn FlowBackend>,
    pub orientation: BinOrientation,
    pub frames_root: PathBuf,
    pub landmarks_root: PathBuf,
    pub out: PathBuf,
    pub dump_series: Option<PathBuf>,
    pub jobs: usize,
}

/// Resolve a profile argument: builtin name first, then a TOML file path.
pub fn resolve_profile(arg: &str) -> Result<DatasetProfile> {
    if let Some(profile) = builtin_profiles().remove(arg) {
        return Ok(profile);
    }
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading profile file {}", path.display()))?;
        let profile: DatasetProfile = toml::from_str(&text)
            .with_context(|| format!("parsing profile file {}", path.display()))?;
        return Ok(profile);
    }
    bail!("unknown profile `{arg}` (builtin: casme2, samm; or pass a TOML file path)");
}

pub fn make_backend(name: &str, params: FlowParams) -> Result<Box<dyn FlowBackend>> {
    match name {
        "reference" => Ok(Box::new(BlockMatchFlow::new(params))),
        other => bail!("unknown flow backend `{other}` (available: reference)"),
    }
}

pub fn resolve_run_config(
    args: &PipelineArgs,
    dump_series: Option<PathBuf>,
) -> Result<RunConfig> {
    let file = FileConfig::load(args.config.as_deref())?;

    let profile_arg = args
        .profile
        .clone()
        .or(file.profile)
        .unwrap_or_else(|| "casme2".to_string());
    let profile = resolve_profile(&profile_arg)?;

    let kinds = args.kind.or(file.kind).unwrap_or(KindChoice::Both).kinds();

    let defaults = FlowParams::for_crop_size(profile.crop_size);
    let params = FlowParams {
        window_radius: args.flow_window.or(file.flow_window).unwrap_or(defaults.window_radius),
        search_radius: args.flow_search.or(file.flow_search).unwrap_or(defaults.search_radius),
        stride: args.flow_stride.or(file.flow_stride).unwrap_or(defaults.stride),
    };
    let backend_name = args.flow.clone().or(file.flow).unwrap_or_else(|| "reference".to_string());
    let backend = make_backend(&backend_name, params)?;

    let orientation = args
        .bin_orientation
        .or(file.bin_orientation)
        .map_or(BinOrientation::default(), BinOrientation::from);

    let frames_root = args
        .frames_root
        .clone()
        .or(file.frames_root)
        .context("--frames-root is required (flag or config file)")?;
    let landmarks_root = args
        .landmarks_root
        .clone()
        .or(file.landmarks_root)
        .context("--landmarks-root is required (flag or config file)")?;
    let out = args
        .out
        .clone()
        .or(file.out)
        .context("--out is required (flag or config file)")?;

    let jobs = args
        .jobs
        .or(file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        bail!("--jobs must be >= 1");
    }

    Ok(RunConfig {
        profile,
        kinds,
        backend,
        orientation,
        frames_root,
        landmarks_root,
        out,
        dump_series: dump_series.or(file.dump_series),
        jobs,
    })
}

/// Resolve `p` for `spot`: flag, then config file, then 0.01.
pub fn resolve_p(flag: Option<f64>, config: Option<&Path>) -> Result<f64> {
    let file = FileConfig::load(config)?;
    let p = flag.or(file.p).unwrap_or(0.01);
    if !(0.0..=1.0).contains(&p) {
        bail!("p must be in [0, 1], got {p}");
    }
    Ok(p)
}
