//! Benchmark harness: compute time for a set of trajectories (learned
//! pipeline vs. goal sampling plus planning), path length against planning
//! budget, and the proposal diversity and obstacle-overlap metrics.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::datagen::{angle_between_deg, bearing_deg, sample_goals, scene_seed, DatasetSample};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridConfig};
use crate::planners::{path_length, Clock, Planner, PlannerConfig, Termination};
use crate::scalar::Scalar;
use crate::tpnet::{csv_error, ProposalSet, Tpnet};
use crate::tsnet::{extract_goal, Tsnet, WaypointSequence};

pub const CSV_HEADER: [&str; 8] =
    ["scene_id", "method", "n_traj", "termination", "total_time_s", "mean_path_len_m", "diversity_deg", "obstacle_overlap"];

/// Method name of the learned pipeline in bench rows.
pub const LEARNED: &str = "learned";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub scene_id: usize,
    pub method: String,
    pub n_traj: usize,
    pub termination: String,
    /// Seconds, including goal detection for planners.
    pub total_time_s: f64,
    /// Metres.
    pub mean_path_len_m: f64,
    /// Learned rows only.
    pub diversity_deg: Option<f64>,
    /// Learned rows only.
    pub obstacle_overlap: Option<f64>,
}

/// Planning budget of a path-length run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    FirstPath,
    /// Seconds, optimizing path length until exhausted.
    Seconds(f64),
}

impl Budget {
    /// First path, then 0.2 s and 0.5 s.
    pub const DESK: [Budget; 3] = [Budget::FirstPath, Budget::Seconds(0.2), Budget::Seconds(0.5)];

    pub fn label(self) -> String {
        match self {
            Budget::FirstPath => "first_path".into(),
            Budget::Seconds(s) => format!("budget_{s}s"),
        }
    }

    fn apply(self, cfg: PlannerConfig) -> PlannerConfig {
        match self {
            Budget::FirstPath => cfg,
            Budget::Seconds(s) => cfg.with_budget(Termination::BestWithinBudget, Some(s)),
        }
    }
}

/// How times are measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Timing {
    Wall,
    /// Deterministic: planners charge `seconds_per_iteration` per iteration,
    /// the learned pipeline `seconds_per_forward` per network call, goal
    /// detection nothing.
    Virtual { seconds_per_iteration: f64, seconds_per_forward: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// Goals per scene for planners.
    pub n_goals: usize,
    pub seeds: Vec<u64>,
    pub timing: Timing,
    /// Goal threshold for the diversity metric and head matching.
    pub goal_threshold: f64,
    /// Iteration cap for every planner run.
    pub max_iterations: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_goals: 4,
            seeds: (0..5).collect(),
            timing: Timing::Wall,
            goal_threshold: 0.5,
            max_iterations: 200_000,
        }
    }
}

impl BenchConfig {
    /// Virtual clock at 0.1 ms per planner iteration and 5 ms per network
    /// call, so tables are reproducible bit for bit.
    pub fn deterministic() -> Self {
        BenchConfig {
            timing: Timing::Virtual { seconds_per_iteration: 1e-4, seconds_per_forward: 5e-3 },
            ..Default::default()
        }
    }

    fn planner(&self, grid: &GridConfig, seed: u64) -> PlannerConfig {
        let mut cfg = PlannerConfig::for_grid(grid).with_seed(seed);
        cfg.max_iterations = self.max_iterations;
        if let Timing::Virtual { seconds_per_iteration, .. } = self.timing {
            cfg.clock = Clock::Virtual { seconds_per_iteration };
        }
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.n_goals == 0 || self.seeds.is_empty() {
            return Err(Error::Config("bench needs at least one goal and one seed".into()));
        }
        Ok(())
    }
}

/// Proposal and sampler networks run together.
pub struct Learned<'a, T> {
    pub tpnet: &'a Tpnet<T>,
    pub tsnet: &'a Tsnet<T>,
}

impl<T: Scalar> Learned<'_, T> {
    /// One proposal forward and one batched sampler forward over all heads.
    pub fn infer(&self, sample: &DatasetSample) -> Result<(ProposalSet, Vec<WaypointSequence>)> {
        let proposals = self.tpnet.forward(&sample.input)?;
        let cfg = proposals.config;
        let maps: Vec<&[f64]> = (0..proposals.num_heads()).map(|k| proposals.traversable(k)).collect();
        let ego = cfg.normalize(cfg.ego_cell.0 as f64, cfg.ego_cell.1 as f64);
        let trajectories = self.tsnet.forward_batch(&maps, &vec![ego; maps.len()], &cfg)?;
        Ok((proposals, trajectories))
    }
}

/// Maximum pairwise bearing difference between the goals of the heads that
/// have one; 0 with fewer than two.
pub fn diversity_metric(proposals: &ProposalSet, ego: Cell, tau_g: f64) -> f64 {
    let origin = (ego.0 as f64, ego.1 as f64);
    let bearings: Vec<f64> = (0..proposals.num_heads())
        .filter_map(|k| extract_goal(proposals.traversable(k), &proposals.config, ego, tau_g).ok())
        .map(|g| bearing_deg(origin, g.0 as f64, g.1 as f64))
        .collect();
    let mut best: f64 = 0.0;
    for (i, a) in bearings.iter().enumerate() {
        for b in &bearings[i + 1..] {
            best = best.max(angle_between_deg(*a, *b));
        }
    }
    best
}

/// Share of the total `R⁰` mass, over all heads, that falls on occupied
/// cells.
pub fn obstacle_overlap(proposals: &ProposalSet, occupied: &[bool]) -> Result<f64> {
    if occupied.len() != proposals.config.cells() {
        return Err(Error::Dimension("occupancy mask and proposals differ in size".into()));
    }
    let (mut on, mut total) = (0.0, 0.0);
    for k in 0..proposals.num_heads() {
        for (p, o) in proposals.traversable(k).iter().zip(occupied) {
            total += p;
            if *o {
                on += p;
            }
        }
    }
    Ok(if total > 0.0 { on / total } else { 0.0 })
}

fn metric_length(w: &WaypointSequence, grid: &GridConfig) -> f64 {
    path_length(&w.to_metric(grid))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn timed<R>(f: impl FnOnce() -> Result<R>) -> Result<(R, f64)> {
    let t = Instant::now();
    let r = f()?;
    Ok((r, t.elapsed().as_secs_f64()))
}

/// One learned timing measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedRun {
    pub time_s: f64,
    pub trajectories: Vec<WaypointSequence>,
    pub proposals: ProposalSet,
}

pub fn time_learned<T: Scalar>(learned: &Learned<'_, T>, sample: &DatasetSample, timing: Timing) -> Result<LearnedRun> {
    let ((proposals, trajectories), wall) = timed(|| learned.infer(sample))?;
    let time_s = match timing {
        Timing::Wall => wall,
        Timing::Virtual { seconds_per_forward, .. } => 2.0 * seconds_per_forward,
    };
    Ok(LearnedRun { time_s, trajectories, proposals })
}

/// One planner timing measurement: goal detection plus one first-path plan
/// per goal.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerRun {
    pub time_s: f64,
    pub goals: usize,
    /// Metres, one per solved goal.
    pub lengths: Vec<f64>,
}

pub fn time_planner(planner: Planner, sample: &DatasetSample, config: &BenchConfig, seed: u64) -> Result<PlannerRun> {
    let grid = sample.grid()?;
    let cfg = *grid.config();
    let (goals, detect) = timed(|| Ok(sample_goals(&grid, cfg.ego_cell, config.n_goals)))?;
    let mut time_s = match config.timing {
        Timing::Wall => detect,
        Timing::Virtual { .. } => 0.0,
    };
    let pc = config.planner(&cfg, seed);
    let mut lengths = Vec::new();
    for g in &goals {
        let r = planner.plan(&grid, cfg.cell_center(cfg.ego_cell), cfg.cell_center(*g), &pc)?;
        time_s += r.elapsed;
        if r.success() {
            lengths.push(r.length);
        }
    }
    Ok(PlannerRun { time_s, goals: goals.len(), lengths })
}

/// Compute-time table: per scene, the learned pipeline (when given) and each
/// planner under first-path termination, averaged over seeds. Runs
/// sequentially so measurements do not contend. Planner rows are omitted for
/// scenes where nothing was solved.
pub fn bench_timing<T: Scalar>(
    scenes: &[DatasetSample],
    learned: Option<&Learned<'_, T>>,
    planners: &[Planner],
    config: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (id, s) in scenes.iter().enumerate() {
        if let Some(l) = learned {
            let mut times = Vec::with_capacity(config.seeds.len());
            let mut last = None;
            for _ in &config.seeds {
                let run = time_learned(l, s, config.timing)?;
                times.push(run.time_s);
                last = Some(run);
            }
            let run = last.expect("at least one seed");
            rows.push(learned_row(id, &run, mean(&times), s, config.goal_threshold)?);
        }
        for &p in planners {
            let mut times = Vec::new();
            let mut lengths = Vec::new();
            let mut solved = 0;
            for &seed in &config.seeds {
                let run = time_planner(p, s, config, scene_seed(seed, id))?;
                times.push(run.time_s);
                solved += run.lengths.len();
                lengths.extend(run.lengths);
            }
            if solved > 0 {
                rows.push(BenchRow {
                    scene_id: id,
                    method: p.name().into(),
                    n_traj: solved.div_ceil(config.seeds.len()),
                    termination: Budget::FirstPath.label(),
                    total_time_s: mean(&times),
                    mean_path_len_m: mean(&lengths),
                    diversity_deg: None,
                    obstacle_overlap: None,
                });
            }
        }
    }
    Ok(rows)
}

fn learned_row(id: usize, run: &LearnedRun, time_s: f64, s: &DatasetSample, tau_g: f64) -> Result<BenchRow> {
    let cfg = run.proposals.config;
    let lengths: Vec<f64> = run.trajectories.iter().map(|w| metric_length(w, &cfg)).collect();
    Ok(BenchRow {
        scene_id: id,
        method: LEARNED.into(),
        n_traj: run.trajectories.len(),
        termination: "single_pass".into(),
        total_time_s: time_s,
        mean_path_len_m: mean(&lengths),
        diversity_deg: Some(diversity_metric(&run.proposals, cfg.ego_cell, tau_g)),
        obstacle_overlap: Some(obstacle_overlap(&run.proposals, &s.input.mask(0))?),
    })
}

/// Path lengths of one planner, budget and seed on one scene's goal set.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTrial {
    pub scene_id: usize,
    pub planner: Planner,
    pub budget: Budget,
    pub seed: u64,
    /// Metres per goal; `None` where planning failed.
    pub lengths: Vec<Option<f64>>,
    /// Planning time summed over goals.
    pub time_s: f64,
}

impl PathTrial {
    /// Mean over goals when every goal was solved.
    pub fn mean_length(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.lengths.iter().copied().collect();
        v.filter(|v| !v.is_empty()).map(|v| mean(&v))
    }
}

/// Every (scene, planner, budget, seed) combination on the scene's sampled
/// goals. The same seed drives every budget, so runs are paired. Scenes
/// run in parallel under virtual timing and sequentially under wall timing.
pub fn pathlength_trials(
    scenes: &[DatasetSample],
    planners: &[Planner],
    budgets: &[Budget],
    config: &BenchConfig,
) -> Result<Vec<PathTrial>> {
    config.validate()?;
    let one = |(id, s): (usize, &DatasetSample)| -> Result<Vec<PathTrial>> {
        let grid = s.grid()?;
        let cfg = *grid.config();
        let goals = sample_goals(&grid, cfg.ego_cell, config.n_goals);
        let start = cfg.cell_center(cfg.ego_cell);
        let mut out = Vec::new();
        for &planner in planners {
            for &budget in budgets {
                for &seed in &config.seeds {
                    let pc = budget.apply(config.planner(&cfg, scene_seed(seed, id)));
                    let mut lengths = Vec::with_capacity(goals.len());
                    let mut time_s = 0.0;
                    for g in &goals {
                        let r = planner.plan(&grid, start, cfg.cell_center(*g), &pc)?;
                        time_s += r.elapsed;
                        lengths.push(r.success().then_some(r.length));
                    }
                    out.push(PathTrial { scene_id: id, planner, budget, seed, lengths, time_s });
                }
            }
        }
        Ok(out)
    };
    let per_scene: Vec<Result<Vec<PathTrial>>> = match config.timing {
        Timing::Wall => scenes.iter().enumerate().map(one).collect(),
        Timing::Virtual { .. } => crate::worker_pool()?.install(|| scenes.par_iter().enumerate().map(one).collect()),
    };
    let mut trials = Vec::new();
    for t in per_scene {
        trials.extend(t?);
    }
    Ok(trials)
}

/// Path-length table: per scene, each planner and budget averaged over the
/// fully solved seeds, plus the learned pipeline's trajectory for the head
/// whose goal is nearest in bearing to each planner goal (within 30°).
pub fn bench_pathlength<T: Scalar>(
    scenes: &[DatasetSample],
    learned: Option<&Learned<'_, T>>,
    planners: &[Planner],
    budgets: &[Budget],
    config: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    let trials = pathlength_trials(scenes, planners, budgets, config)?;
    let mut rows = Vec::new();
    for (id, s) in scenes.iter().enumerate() {
        if let Some(l) = learned {
            if let Some(row) = learned_pathlength_row(id, s, l, config)? {
                rows.push(row);
            }
        }
        for &p in planners {
            for &b in budgets {
                let solved: Vec<(f64, f64)> = trials
                    .iter()
                    .filter(|t| t.scene_id == id && t.planner == p && t.budget == b)
                    .filter_map(|t| t.mean_length().map(|m| (m, t.time_s)))
                    .collect();
                if solved.is_empty() {
                    continue;
                }
                let n_traj = trials.iter().find(|t| t.scene_id == id).map_or(0, |t| t.lengths.len());
                let (lengths, times): (Vec<f64>, Vec<f64>) = solved.into_iter().unzip();
                rows.push(BenchRow {
                    scene_id: id,
                    method: p.name().into(),
                    n_traj,
                    termination: b.label(),
                    total_time_s: mean(&times),
                    mean_path_len_m: mean(&lengths),
                    diversity_deg: None,
                    obstacle_overlap: None,
                });
            }
        }
    }
    Ok(rows)
}

fn learned_pathlength_row<T: Scalar>(
    id: usize,
    s: &DatasetSample,
    learned: &Learned<'_, T>,
    config: &BenchConfig,
) -> Result<Option<BenchRow>> {
    let grid = s.grid()?;
    let cfg = *grid.config();
    let ego = cfg.ego_cell;
    let origin = (ego.0 as f64, ego.1 as f64);
    let goals = sample_goals(&grid, ego, config.n_goals);
    let run = time_learned(learned, s, config.timing)?;
    let head_bearings: Vec<Option<f64>> = (0..run.proposals.num_heads())
        .map(|k| {
            extract_goal(run.proposals.traversable(k), &cfg, ego, config.goal_threshold)
                .ok()
                .map(|g| bearing_deg(origin, g.0 as f64, g.1 as f64))
        })
        .collect();
    let mut lengths = Vec::new();
    for g in goals {
        let gb = bearing_deg(origin, g.0 as f64, g.1 as f64);
        let best = head_bearings
            .iter()
            .enumerate()
            .filter_map(|(k, b)| b.map(|b| (k, angle_between_deg(b, gb))))
            .filter(|(_, d)| *d <= 30.0)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k, _)) = best {
            lengths.push(metric_length(&run.trajectories[k], &cfg));
        }
    }
    if lengths.is_empty() {
        return Ok(None);
    }
    let mut row = learned_row(id, &run, run.time_s, s, config.goal_threshold)?;
    row.n_traj = lengths.len();
    row.mean_path_len_m = mean(&lengths);
    Ok(Some(row))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_bench_csv_to<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.scene_id.to_string(),
            r.method.clone(),
            r.n_traj.to_string(),
            r.termination.clone(),
            r.total_time_s.to_string(),
            r.mean_path_len_m.to_string(),
            opt(r.diversity_deg),
            opt(r.obstacle_overlap),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    write_bench_csv_to(rows, std::fs::File::create(path)?)
}

pub fn read_bench_csv_from<R: Read>(input: R) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format(format!("unexpected bench header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let bad = |field: &str| Error::format_at(i, format!("bad {field}"));
        let num = |j: usize, field: &str| rec[j].parse::<f64>().map_err(|_| bad(field));
        let opt_num = |j: usize, field: &str| {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                rec[j].parse::<f64>().map(Some).map_err(|_| bad(field))
            }
        };
        rows.push(BenchRow {
            scene_id: rec[0].parse().map_err(|_| bad("scene_id"))?,
            method: rec[1].to_string(),
            n_traj: rec[2].parse().map_err(|_| bad("n_traj"))?,
            termination: rec[3].to_string(),
            total_time_s: num(4, "total_time_s")?,
            mean_path_len_m: num(5, "mean_path_len_m")?,
            diversity_deg: opt_num(6, "diversity_deg")?,
            obstacle_overlap: opt_num(7, "obstacle_overlap")?,
        });
    }
    Ok(rows)
}

pub fn read_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRow>> {
    read_bench_csv_from(std::fs::File::open(path)?)
}
