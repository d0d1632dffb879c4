//! Trajectory sampler network: encodes one proposal map and unrolls a
//! three-layer LSTM into `T` waypoints, plus the planner-based ground truth
//! it is trained against.

mod model;
mod train;

use rayon::prelude::*;

pub use model::{batch_inputs, sequence_loss_graph, Tsnet, LSTM_LAYERS};
pub use train::{train_tsnet, train_tsnet_with, TsnetEpochStats, TsnetTrainOptions, TsnetTrainingLog};

use crate::datagen::{scene_seed, DatasetSample};
use crate::error::{Error, Result};
use crate::grid::{Cell, CellState, GridConfig, OccupancyGrid, Point2};
use crate::planners::{bspline_smooth, resample_polyline, rrt_star, segment_collision_free, PlannerConfig, Termination};
use crate::scalar::Scalar;
use crate::tpnet::Tpnet;

pub type Tsnet32 = Tsnet<f32>;
pub type Tsnet64 = Tsnet<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct TsnetConfig {
    /// `T`, waypoints per sequence.
    pub waypoints: usize,
    pub hidden_size: usize,
    /// Encoder width.
    pub channels: usize,
    /// Minimum `R⁰` of a goal cell.
    pub goal_threshold: f64,
    /// Cells below this `R⁰` are obstacles when planning ground truth.
    pub region_gate: f64,
}

impl Default for TsnetConfig {
    fn default() -> Self {
        TsnetConfig { waypoints: 16, hidden_size: 128, channels: 16, goal_threshold: 0.5, region_gate: 0.1 }
    }
}

impl TsnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints < 2 {
            return Err(Error::Config(format!("need at least 2 waypoints, got {}", self.waypoints)));
        }
        if self.hidden_size == 0 || self.channels == 0 {
            return Err(Error::Config("hidden_size and channels must be positive".into()));
        }
        if !(self.region_gate > 0.0 && self.region_gate <= self.goal_threshold && self.goal_threshold < 1.0) {
            return Err(Error::Config(format!(
                "thresholds need 0 < region_gate ({}) <= goal_threshold ({}) < 1",
                self.region_gate, self.goal_threshold
            )));
        }
        Ok(())
    }
}

/// Ordered `(row, col)` points normalized to `[0, 1]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaypointSequence {
    pub points: Vec<[f64; 2]>,
}

impl WaypointSequence {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks length `T` and the unit-square bound.
    pub fn validate(&self, waypoints: usize) -> Result<()> {
        if self.points.len() != waypoints {
            return Err(Error::Dimension(format!("{} waypoints, expected {waypoints}", self.points.len())));
        }
        if self.points.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input("waypoint outside the unit square".into()));
        }
        Ok(())
    }

    /// Points in fractional grid coordinates.
    pub fn to_grid(&self, grid: &GridConfig) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| grid.denormalize(*p)).collect()
    }

    /// Points as metric positions in the ego frame.
    pub fn to_metric(&self, grid: &GridConfig) -> Vec<Point2> {
        self.to_grid(grid).into_iter().map(|(r, c)| grid.to_metric(r, c)).collect()
    }

    /// Cell containing each point.
    pub fn cells(&self, grid: &GridConfig) -> Vec<Cell> {
        self.to_grid(grid)
            .into_iter()
            .map(|(r, c)| {
                let clamp = |v: f64, n: usize| (v.round().max(0.0) as usize).min(n - 1);
                (clamp(r, grid.height), clamp(c, grid.width))
            })
            .collect()
    }
}

/// Mean over steps of `‖ŵ_t − w_t‖`.
pub fn tsnet_loss(pred: &WaypointSequence, gt: &WaypointSequence) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Dimension(format!("sequence lengths {} and {}", pred.len(), gt.len())));
    }
    let sum: f64 = pred.points.iter().zip(&gt.points).map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1])).sum();
    Ok(sum / pred.len() as f64)
}

/// Average displacement in cells.
pub fn ade_cells(pred: &WaypointSequence, gt: &WaypointSequence, grid: &GridConfig) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Dimension(format!("sequence lengths {} and {}", pred.len(), gt.len())));
    }
    let (a, b) = (pred.to_grid(grid), gt.to_grid(grid));
    Ok(a.iter().zip(&b).map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1)).sum::<f64>() / a.len() as f64)
}

/// Farthest cell from `ego` with `R⁰ ≥ tau_g`; ties go to the higher
/// probability, then to row-major order.
pub fn extract_goal(traversable: &[f64], grid: &GridConfig, ego: Cell, tau_g: f64) -> Result<Cell> {
    if traversable.len() != grid.cells() {
        return Err(Error::Dimension(format!("proposal has {} cells, grid {}", traversable.len(), grid.cells())));
    }
    let mut best: Option<(usize, i64, f64)> = None;
    for (i, &p) in traversable.iter().enumerate() {
        if !(p >= tau_g) {
            continue;
        }
        let (dr, dc) = ((i / grid.width) as i64 - ego.0 as i64, (i % grid.width) as i64 - ego.1 as i64);
        let d2 = dr * dr + dc * dc;
        let better = match best {
            None => true,
            Some((_, bd, bp)) => d2 > bd || (d2 == bd && p > bp),
        };
        if better {
            best = Some((i, d2, p));
        }
    }
    best.map(|(i, _, _)| (i / grid.width, i % grid.width))
        .ok_or(Error::EmptyProposal)
}

/// Occupancy grid restricted to the proposal region: free cells with
/// `R⁰ < tau_r` become occupied. The ego cell keeps its state.
pub fn confine_to_proposal(grid: &OccupancyGrid, traversable: &[f64], ego: Cell, tau_r: f64) -> Result<OccupancyGrid> {
    let cfg = *grid.config();
    if traversable.len() != cfg.cells() {
        return Err(Error::Dimension("proposal and grid sizes differ".into()));
    }
    let cells = grid
        .states()
        .iter()
        .zip(traversable)
        .enumerate()
        .map(|(i, (s, p))| if *s == CellState::Free && *p < tau_r && i != cfg.index(ego) { CellState::Occupied } else { *s })
        .collect();
    OccupancyGrid::from_states(cfg, cells)
}

/// Planner settings used for sampler ground truth: RRT* refined for a fixed
/// iteration budget, so the targets are reproducible.
pub fn groundtruth_planner(grid: &GridConfig, seed: u64) -> PlannerConfig {
    PlannerConfig {
        max_iterations: (grid.cells() / 2).max(500),
        ..PlannerConfig::for_grid(grid).with_budget(Termination::BestWithinBudget, None).with_seed(seed)
    }
}

/// RRT* from the ego cell to the proposal's goal inside the proposal region,
/// B-spline smoothed and resampled to `T` points by arc length. Falls back
/// to the resampled raw path when the smoothed curve leaves the region.
pub fn make_tsnet_groundtruth(
    traversable: &[f64],
    ego: Cell,
    grid: &OccupancyGrid,
    config: &TsnetConfig,
    planner: &PlannerConfig,
) -> Result<WaypointSequence> {
    config.validate()?;
    let cfg = *grid.config();
    let goal = extract_goal(traversable, &cfg, ego, config.goal_threshold)?;
    let region = confine_to_proposal(grid, traversable, ego, config.region_gate)?;
    if !region.is_free(goal) {
        return Err(Error::NoPath);
    }
    let plan = rrt_star(&region, cfg.cell_center(ego), cfg.cell_center(goal), planner)?;
    if !plan.success() {
        return Err(Error::NoPath);
    }
    let smooth = bspline_smooth(&plan.path, config.waypoints)?;
    let points = if smooth.windows(2).all(|w| segment_collision_free(&region, w[0], w[1])) {
        smooth
    } else {
        resample_polyline(&plan.path, config.waypoints)?
    };
    let points = points
        .into_iter()
        .map(|p| {
            let (r, c) = cfg.to_grid(p);
            let n = cfg.normalize(r, c);
            [n[0].clamp(0.0, 1.0), n[1].clamp(0.0, 1.0)]
        })
        .collect();
    Ok(WaypointSequence { points })
}

/// One sampler training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TsnetSample {
    /// `R⁰` map the sequence was planned in.
    pub proposal: Vec<f64>,
    pub grid: GridConfig,
    /// Normalized ego position, the decoder's first input.
    pub ego: [f64; 2],
    pub target: WaypointSequence,
}

/// Sampler pairs from every head of a proposal network over `scenes`.
/// Heads without a goal or a path are skipped; returns the pairs and the
/// number of skipped heads.
pub fn build_tsnet_samples<T: Scalar>(
    tpnet: &Tpnet<T>,
    scenes: &[DatasetSample],
    config: &TsnetConfig,
    seed: u64,
) -> Result<(Vec<TsnetSample>, usize)> {
    config.validate()?;
    let per_scene: Vec<Result<(Vec<TsnetSample>, usize)>> = crate::worker_pool()?.install(|| {
        scenes
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let grid = s.grid()?;
                let cfg = *grid.config();
                let ego = cfg.ego_cell;
                let proposals = tpnet.forward(&s.input)?;
                let mut out = Vec::new();
                let mut skipped = 0;
                for k in 0..proposals.num_heads() {
                    let r0 = proposals.traversable(k);
                    let planner = groundtruth_planner(&cfg, scene_seed(seed, i * 16 + k));
                    match make_tsnet_groundtruth(r0, ego, &grid, config, &planner) {
                        Ok(target) => out.push(TsnetSample {
                            proposal: r0.to_vec(),
                            grid: cfg,
                            ego: cfg.normalize(ego.0 as f64, ego.1 as f64),
                            target,
                        }),
                        Err(Error::EmptyProposal | Error::NoPath) => skipped += 1,
                        Err(e) => return Err(e),
                    }
                }
                Ok((out, skipped))
            })
            .collect()
    });
    let mut samples = Vec::new();
    let mut skipped = 0;
    for r in per_scene {
        let (s, k) = r?;
        samples.extend(s);
        skipped += k;
    }
    Ok((samples, skipped))
}
