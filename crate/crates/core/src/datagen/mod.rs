//! Synthetic scenes, goal sampling, path rasterization into training labels
//! and the TPDS dataset container.

mod format;
mod goals;
mod scenes;

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

pub use format::{decode_dataset, encode_dataset, read_dataset, write_dataset};
pub use goals::{
    angle_between_deg, bearing_deg, frontier_cells, reachable_from, sample_goals, DEFAULT_MAX_GOALS,
    GOAL_SEPARATION_DEG,
};
pub use scenes::{generate_scene, SceneKind, SceneParams};

use crate::error::{Error, Result};
use crate::grid::{assemble_input, supercover, Cell, GridConfig, NetworkInput, OccupancyGrid, Point2};
use crate::planners::{rrt_star, segment_collision_free, PlannerConfig, Termination};

/// Default label dilation, cells.
pub const DEFAULT_THICKNESS: usize = 1;

/// Traversable region of one ground-truth trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLabel {
    /// `P⁰`, row-major.
    pub traversable: Vec<bool>,
    /// Source path as `(row, col)` in cell units.
    pub polyline: Vec<[f32; 2]>,
}

impl TrajectoryLabel {
    /// `P¹ = 1 − P⁰`.
    pub fn complement(&self) -> Vec<bool> {
        self.traversable.iter().map(|v| !v).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.traversable.iter().filter(|v| **v).count()
    }

    /// Polyline vertices as metric points in the grid's ego frame.
    pub fn path(&self, config: &GridConfig) -> Vec<Point2> {
        self.polyline.iter().map(|p| config.to_metric(p[0] as f64, p[1] as f64)).collect()
    }

    /// Checks the label invariants against its source grid.
    pub fn validate(&self, grid: &OccupancyGrid) -> Result<()> {
        if self.traversable.len() != grid.config().cells() {
            return Err(Error::Dimension(format!("label has {} cells, grid {}", self.traversable.len(), grid.config().cells())));
        }
        if self.cell_count() == 0 {
            return Err(Error::Label("traversable mask is empty".into()));
        }
        if self.traversable.iter().zip(grid.states()).any(|(t, s)| *t && *s != crate::grid::CellState::Free) {
            return Err(Error::Label("traversable cell outside free space".into()));
        }
        let path = self.path(grid.config());
        if path.len() < 2 || path.windows(2).any(|w| !segment_collision_free(grid, w[0], w[1])) {
            return Err(Error::Label("source polyline is not collision-free".into()));
        }
        Ok(())
    }
}

/// Supercover cells of the polyline dilated by a disk of radius
/// `thickness` cells (`dr² + dc² ≤ (thickness + ½)²`), clipped to free space.
pub fn rasterize_path(path: &[Point2], grid: &OccupancyGrid, thickness: usize) -> Result<TrajectoryLabel> {
    if path.is_empty() {
        return Err(Error::Label("empty path".into()));
    }
    let cfg = grid.config();
    let pts: Vec<(f64, f64)> = path.iter().map(|p| cfg.to_grid(*p)).collect();
    let mut core = Vec::new();
    if pts.len() == 1 {
        core.extend(supercover(pts[0], pts[0]));
    }
    for w in pts.windows(2) {
        core.extend(supercover(w[0], w[1]));
    }
    let t = thickness as i64;
    let reach = (thickness as f64 + 0.5).powi(2);
    let mut traversable = vec![false; cfg.cells()];
    for (r, c) in core {
        for dr in -t..=t {
            for dc in -t..=t {
                if ((dr * dr + dc * dc) as f64) > reach {
                    continue;
                }
                let (nr, nc) = (r + dr, c + dc);
                if cfg.contains(nr, nc) && grid.is_free((nr as usize, nc as usize)) {
                    traversable[nr as usize * cfg.width + nc as usize] = true;
                }
            }
        }
    }
    if !traversable.iter().any(|v| *v) {
        return Err(Error::Label("path covers no free cell".into()));
    }
    let polyline = pts.iter().map(|(r, c)| [*r as f32, *c as f32]).collect();
    Ok(TrajectoryLabel { traversable, polyline })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneMeta {
    pub kind: SceneKind,
    pub seed: u64,
}

/// One training scene `I_t` and its label pool `P_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSample {
    pub input: NetworkInput,
    pub labels: Vec<TrajectoryLabel>,
    /// Not carried by the TPDS container; `None` after reading a file.
    pub meta: Option<SceneMeta>,
}

impl DatasetSample {
    pub fn grid(&self) -> Result<OccupancyGrid> {
        self.input.grid()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSummary {
    pub scenes_requested: usize,
    pub scenes_kept: usize,
    pub labels_total: usize,
    pub dropped_no_goals: usize,
    pub dropped_no_path: usize,
    pub goals_failed: usize,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scenes_requested={} scenes_kept={} labels_total={} dropped_no_goals={} dropped_no_path={} goals_failed={}",
            self.scenes_requested, self.scenes_kept, self.labels_total, self.dropped_no_goals, self.dropped_no_path, self.goals_failed
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub grid: GridConfig,
    pub scene: SceneParams,
    pub planner: PlannerConfig,
    pub max_goals: usize,
    pub thickness: usize,
}

impl DatasetConfig {
    /// RRT* labels refined for a fixed iteration budget (half the cell
    /// count), so generation is reproducible.
    pub fn for_grid(grid: GridConfig) -> Self {
        let planner = PlannerConfig {
            max_iterations: (grid.cells() / 2).max(500),
            ..PlannerConfig::for_grid(&grid).with_budget(Termination::BestWithinBudget, None)
        };
        DatasetConfig { grid, scene: SceneParams::default(), planner, max_goals: DEFAULT_MAX_GOALS, thickness: DEFAULT_THICKNESS }
    }
}

/// Stream of per-scene seeds derived from a dataset seed.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum SceneOutcome {
    Kept(DatasetSample, usize),
    NoGoals,
    NoPath(usize),
}

/// Generates one scene, plans to each sampled goal and rasterizes every
/// success. Also returns the goal count and the number of failed goals.
pub fn label_scene(kind: SceneKind, cfg: &DatasetConfig, seed: u64) -> Result<(DatasetSample, usize, usize)> {
    let (grid, history) = generate_scene(kind, &cfg.scene, &cfg.grid, seed)?;
    let ego = cfg.grid.ego_cell;
    let goals = sample_goals(&grid, ego, cfg.max_goals);
    let start = cfg.grid.cell_center(ego);
    let mut labels = Vec::new();
    let mut failed = 0;
    for (i, goal) in goals.iter().enumerate() {
        let pc = PlannerConfig { seed: scene_seed(seed, i), ..cfg.planner };
        let plan = rrt_star(&grid, start, cfg.grid.cell_center(*goal), &pc)?;
        if !plan.success() {
            failed += 1;
            continue;
        }
        let label = rasterize_path(&plan.path, &grid, cfg.thickness)?;
        // the stored polyline is single precision; keep only labels that
        // survive the rounding
        if label.validate(&grid).is_err() {
            failed += 1;
            continue;
        }
        labels.push(label);
    }
    let input = assemble_input(&grid, &history)?;
    Ok((DatasetSample { input, labels, meta: Some(SceneMeta { kind, seed }) }, goals.len(), failed))
}

fn run_scene(kind: SceneKind, cfg: &DatasetConfig, seed: u64) -> Result<SceneOutcome> {
    let (sample, goals, failed) = label_scene(kind, cfg, seed)?;
    Ok(if goals == 0 {
        SceneOutcome::NoGoals
    } else if sample.labels.is_empty() {
        SceneOutcome::NoPath(failed)
    } else {
        SceneOutcome::Kept(sample, failed)
    })
}

/// Scene `i` uses `kinds[i % kinds.len()]` and seed `scene_seed(seed, i)`.
/// Scenes parallelize across the worker pool; output order is by index.
pub fn generate_dataset(n_scenes: usize, kinds: &[SceneKind], cfg: &DatasetConfig, seed: u64) -> Result<(Vec<DatasetSample>, DatasetSummary)> {
    if kinds.is_empty() {
        return Err(Error::Config("no scene kinds given".into()));
    }
    cfg.grid.validate()?;
    cfg.planner.validate(&cfg.grid)?;
    if cfg.max_goals == 0 || cfg.max_goals > u8::MAX as usize {
        return Err(Error::Config(format!("max_goals {} outside 1..=255", cfg.max_goals)));
    }
    let outcomes: Vec<Result<SceneOutcome>> = crate::worker_pool()?.install(|| {
        (0..n_scenes)
            .into_par_iter()
            .map(|i| run_scene(kinds[i % kinds.len()], cfg, scene_seed(seed, i)))
            .collect()
    });
    let mut summary = DatasetSummary { scenes_requested: n_scenes, ..Default::default() };
    let mut samples = Vec::new();
    for o in outcomes {
        match o? {
            SceneOutcome::Kept(s, failed) => {
                summary.goals_failed += failed;
                summary.labels_total += s.labels.len();
                samples.push(s);
            }
            SceneOutcome::NoGoals => summary.dropped_no_goals += 1,
            SceneOutcome::NoPath(failed) => {
                summary.goals_failed += failed;
                summary.dropped_no_path += 1;
            }
        }
    }
    summary.scenes_kept = samples.len();
    Ok((samples, summary))
}

/// Generates and writes a dataset.
pub fn build_dataset(
    n_scenes: usize,
    kinds: &[SceneKind],
    cfg: &DatasetConfig,
    out_path: impl AsRef<Path>,
    seed: u64,
) -> Result<DatasetSummary> {
    let (samples, summary) = generate_dataset(n_scenes, kinds, cfg, seed)?;
    write_dataset(out_path, &samples)?;
    Ok(summary)
}

/// Goal cells of a scene, exposed for evaluation code that needs the same
/// goal set as the labels.
pub fn scene_goals(grid: &OccupancyGrid, cfg: &DatasetConfig) -> Vec<Cell> {
    sample_goals(grid, cfg.grid.ego_cell, cfg.max_goals)
}
