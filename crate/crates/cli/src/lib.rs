//! Command-line front end: dataset generation, training, inference,
//! benchmarking and rendering.

pub mod render;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use trajgrid::bench::{self, BenchConfig, Budget, Learned};
use trajgrid::datagen::{build_dataset, read_dataset, DatasetConfig, DatasetSample, SceneKind};
use trajgrid::grid::GridConfig;
use trajgrid::nn::OptimState;
use trajgrid::planners::Planner;
use trajgrid::tpnet::{train_tpnet_with, Tpnet32, TpnetConfig, TpnetTrainOptions};
use trajgrid::tsnet::{build_tsnet_samples, extract_goal, train_tsnet_with, Tsnet32, TsnetConfig, TsnetTrainOptions};
use trajgrid::Error;

use render::{render_scene, Layers, RenderSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "trajgrid", version, about = "Occupancy grids to diverse candidate trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled scene dataset (TPDS).
    Gen(GenArgs),
    /// Train the proposal network.
    TrainTpnet(TrainTpArgs),
    /// Train the sampler network on proposals from a trained proposal network.
    TrainTsnet(TrainTsArgs),
    /// Run both networks on one scene; writes waypoints.json and proposals.ppm.
    Infer(InferArgs),
    /// Timing and path-length tables as CSV.
    Bench(BenchArgs),
    /// Render one scene, optionally with network outputs, as PPM.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    scenes: usize,
    /// Scene kind; repeat for a mix. Defaults to tjunction, intersection,
    /// bifurcation and corridor.
    #[arg(long = "kind")]
    kinds: Vec<SceneKind>,
    /// Grid side in cells.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainTpArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 16)]
    base_channels: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    no_skip: bool,
    #[arg(long)]
    no_dilation: bool,
    #[arg(long)]
    no_deep_supervision: bool,
    #[arg(long)]
    single_head: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainTsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Proposal network weights used to produce the training proposals.
    #[arg(long)]
    tpnet: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 16)]
    waypoints: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    weights_tp: PathBuf,
    #[arg(long)]
    weights_ts: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    cell_size: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    /// 20 scenes on 32×32 grids.
    Toy,
    /// 200 scenes on 32×32 grids.
    Desk,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Tables {
    Timing,
    Pathlength,
    Both,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "toy")]
    suite: Suite,
    /// Scene-count override for the suite.
    #[arg(long)]
    scenes: Option<usize>,
    /// Number of seeds, 0..n.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "both")]
    tables: Tables,
    /// Use the virtual clock so the CSV is reproducible.
    #[arg(long)]
    deterministic: bool,
    /// Include the learned pipeline (needs both weight files).
    #[arg(long, requires = "weights_ts")]
    weights_tp: Option<PathBuf>,
    #[arg(long, requires = "weights_tp")]
    weights_ts: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, requires = "weights_ts")]
    weights_tp: Option<PathBuf>,
    #[arg(long, requires = "weights_tp")]
    weights_ts: Option<PathBuf>,
    /// Overlay the dataset's label polylines.
    #[arg(long)]
    labels: bool,
    #[arg(long, default_value_t = 4)]
    cell_size: usize,
    #[arg(long)]
    out: PathBuf,
}

/// `infer` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferOutput {
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub height: usize,
    pub width: usize,
    /// `k` arrays of `T` normalized `[row, col]` pairs.
    pub waypoints: Vec<Vec<[f64; 2]>>,
    /// Goal cell per head, `null` when no cell reaches the threshold.
    pub goals: Vec<Option<[usize; 2]>>,
    pub diversity_deg: f64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => EXIT_USAGE,
            CliError::Core(
                Error::Data(_) | Error::Format { .. } | Error::Io(_) | Error::Label(_) | Error::Input(_) | Error::Dimension(_),
            ) => EXIT_DATA,
            CliError::Core(_) => EXIT_RUNTIME,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::TrainTpnet(a) => train_tp(a),
        Command::TrainTsnet(a) => train_ts(a),
        Command::Infer(a) => infer(a),
        Command::Bench(a) => run_bench(a),
        Command::Render(a) => run_render(a),
    }
}

const DEFAULT_KINDS: [SceneKind; 4] =
    [SceneKind::TJunction, SceneKind::CrossIntersection, SceneKind::Bifurcation, SceneKind::StraightCorridor];

fn gen(a: GenArgs) -> CliResult<()> {
    if a.scenes == 0 {
        return Err(CliError::Usage("--scenes must be at least 1".into()));
    }
    let kinds = if a.kinds.is_empty() { DEFAULT_KINDS.to_vec() } else { a.kinds };
    let cfg = DatasetConfig::for_grid(GridConfig::with_size(a.size, a.size));
    let summary = build_dataset(a.scenes, &kinds, &cfg, &a.out, a.seed)?;
    println!("{summary}");
    Ok(())
}

fn load_scene(path: &Path, index: usize) -> CliResult<DatasetSample> {
    let mut data = read_dataset(path)?;
    if index >= data.len() {
        return Err(CliError::Core(Error::Data(format!("index {index} out of range, dataset has {} scenes", data.len()))));
    }
    Ok(data.swap_remove(index))
}

fn train_tp(a: TrainTpArgs) -> CliResult<()> {
    let data = read_dataset(&a.data)?;
    let d = TpnetConfig::default();
    let config = TpnetConfig {
        num_heads: a.heads,
        base_channels: a.base_channels,
        depth: a.depth,
        alpha: a.alpha.unwrap_or(d.alpha),
        lambda: a.lambda.unwrap_or(d.lambda),
        enable_skip: !a.no_skip,
        enable_dilation: !a.no_dilation,
        enable_deep_supervision: !a.no_deep_supervision,
        enable_multi_head: !a.single_head,
        ..d
    };
    config.validate()?;
    let opts = TpnetTrainOptions { epochs: a.epochs, batch_size: a.batch, steps_per_epoch: None, seed: a.seed };
    let mut optim = OptimState::proposal_default();
    let (net, log) = train_tpnet_with::<f32>(&data, &config, &mut optim, &opts, |e| {
        eprintln!("epoch {} loss_td {:.5} loss_obs {:.5} lr {}", e.epoch, e.loss_td, e.loss_obs, e.lr);
    })?;
    net.save(&a.out)?;
    if let Some(p) = &a.log {
        log.write_csv(p)?;
    }
    println!("heads used {:?}", log.head_totals());
    Ok(())
}

fn train_ts(a: TrainTsArgs) -> CliResult<()> {
    let data = read_dataset(&a.data)?;
    let tp = Tpnet32::load(&a.tpnet)?;
    let config = TsnetConfig { waypoints: a.waypoints, hidden_size: a.hidden, channels: a.channels, ..Default::default() };
    config.validate()?;
    let (samples, skipped) = build_tsnet_samples(&tp, &data, &config, a.seed)?;
    eprintln!("{} training pairs, {skipped} heads skipped", samples.len());
    let opts = TsnetTrainOptions { epochs: a.epochs, batch_size: a.batch, steps_per_epoch: None, seed: a.seed };
    let mut optim = OptimState::sampler_default();
    let (net, log) = train_tsnet_with::<f32>(&samples, &config, &mut optim, &opts, |e| {
        eprintln!("epoch {} loss {:.5} ade {:.3} lr {}", e.epoch, e.loss, e.ade, e.lr);
    })?;
    net.save(&a.out)?;
    if let Some(p) = &a.log {
        log.write_csv(p)?;
    }
    Ok(())
}

fn infer(a: InferArgs) -> CliResult<()> {
    let tp = Tpnet32::load(&a.weights_tp)?;
    let ts = Tsnet32::load(&a.weights_ts)?;
    let scene = load_scene(&a.input, a.index)?;
    let learned = Learned { tpnet: &tp, tsnet: &ts };
    let (proposals, trajectories) = learned.infer(&scene)?;
    let cfg = proposals.config;
    let tau = ts.config().goal_threshold;
    let goals = (0..proposals.num_heads())
        .map(|k| extract_goal(proposals.traversable(k), &cfg, cfg.ego_cell, tau).ok().map(|g| [g.0, g.1]))
        .collect();
    let out = InferOutput {
        k: proposals.num_heads(),
        t: ts.config().waypoints,
        height: cfg.height,
        width: cfg.width,
        waypoints: trajectories.iter().map(|w| w.points.clone()).collect(),
        goals,
        diversity_deg: bench::diversity_metric(&proposals, cfg.ego_cell, tau),
    };
    fs::create_dir_all(&a.out)?;
    let json = serde_json::to_string_pretty(&out).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(a.out.join("waypoints.json"), json + "\n")?;
    let grid = scene.grid()?;
    let history = scene.input.history_mask();
    let layers = Layers { history: Some(&history), proposals: Some(&proposals), plans: &[], waypoints: &trajectories };
    fs::write(a.out.join("proposals.ppm"), render_scene(&grid, &layers, &RenderSpec { cell_size: a.cell_size, ..Default::default() }))?;
    println!("k={} T={} diversity={:.1}", out.k, out.t, out.diversity_deg);
    Ok(())
}

fn run_bench(a: BenchArgs) -> CliResult<()> {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let n = a.scenes.unwrap_or(match a.suite {
        Suite::Toy => 20,
        Suite::Desk => 200,
    });
    let cfg = DatasetConfig::for_grid(GridConfig::with_size(32, 32));
    let (scenes, _) = trajgrid::datagen::generate_dataset(n, &DEFAULT_KINDS, &cfg, a.seed)?;
    let base = if a.deterministic { BenchConfig::deterministic() } else { BenchConfig::default() };
    let config = BenchConfig { seeds: (0..a.seeds).collect(), ..base };
    let nets = match (&a.weights_tp, &a.weights_ts) {
        (Some(tp), Some(ts)) => Some((Tpnet32::load(tp)?, Tsnet32::load(ts)?)),
        _ => None,
    };
    let learned = nets.as_ref().map(|(tp, ts)| Learned { tpnet: tp, tsnet: ts });
    let mut rows = Vec::new();
    if matches!(a.tables, Tables::Timing | Tables::Both) {
        rows.extend(bench::bench_timing(&scenes, learned.as_ref(), &Planner::ALL, &config)?);
    }
    if matches!(a.tables, Tables::Pathlength | Tables::Both) {
        rows.extend(bench::bench_pathlength(&scenes, learned.as_ref(), &Planner::ALL, &Budget::DESK, &config)?);
    }
    bench::write_bench_csv(&rows, &a.out)?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(())
}

fn run_render(a: RenderArgs) -> CliResult<()> {
    let scene = load_scene(&a.input, a.index)?;
    let grid = scene.grid()?;
    let cfg = *grid.config();
    let history = scene.input.history_mask();
    let nets = match (&a.weights_tp, &a.weights_ts) {
        (Some(tp), Some(ts)) => Some((Tpnet32::load(tp)?, Tsnet32::load(ts)?)),
        _ => None,
    };
    let outputs = match &nets {
        Some((tp, ts)) => Some(Learned { tpnet: tp, tsnet: ts }.infer(&scene)?),
        None => None,
    };
    let plans: Vec<Vec<_>> = if a.labels {
        scene.labels.iter().map(|l| l.polyline.iter().map(|p| cfg.to_metric(p[0] as f64, p[1] as f64)).collect()).collect()
    } else {
        Vec::new()
    };
    let layers = Layers {
        history: Some(&history),
        proposals: outputs.as_ref().map(|o| &o.0),
        plans: &plans,
        waypoints: outputs.as_ref().map_or(&[], |o| &o.1),
    };
    fs::write(&a.out, render_scene(&grid, &layers, &RenderSpec { cell_size: a.cell_size, ..Default::default() }))?;
    println!("wrote {}", a.out.display());
    Ok(())
}
