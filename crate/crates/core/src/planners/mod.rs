//! Classical planners over occupancy grids: RRT*, Informed-RRT*, BIT* and an
//! 8-connected Dijkstra oracle, plus collision checking, B-spline smoothing
//! and path metrics.
//!
//! Only free cells are traversable; unknown space blocks like obstacles.

mod bit;
mod dijkstra;
mod geometry;
mod rrt;
mod spatial;

use std::time::Instant;

pub use bit::bit_star;
pub use dijkstra::dijkstra_shortest;
pub use geometry::{bspline_smooth, path_length, point_free, resample_polyline, segment_collision_free};
pub use rrt::{informed_rrt_star, rrt_star};

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{GridConfig, OccupancyGrid, Point2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Termination {
    /// Return as soon as a solution shorter than `threshold` metres exists.
    FirstPath { threshold: f64 },
    /// Keep improving until the budget runs out.
    BestWithinBudget,
}

/// How elapsed time is measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Clock {
    Wall,
    /// Each planner iteration costs a fixed number of seconds, making
    /// budgets and reported times reproducible.
    Virtual { seconds_per_iteration: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Metres.
    pub step_size: f64,
    /// Rewire constant γ in `γ·sqrt(ln n / n)`; derived from the free area
    /// when `None`.
    pub gamma: Option<f64>,
    /// Metres.
    pub goal_tolerance: f64,
    pub goal_bias: f64,
    pub max_iterations: usize,
    /// Seconds.
    pub time_budget: Option<f64>,
    pub termination: Termination,
    /// Samples per BIT* batch.
    pub batch_size: usize,
    pub seed: u64,
    pub clock: Clock,
}

impl PlannerConfig {
    /// Step of 2 cells, goal tolerance of 1 cell, first-path threshold of
    /// the grid perimeter.
    pub fn for_grid(grid: &GridConfig) -> Self {
        PlannerConfig {
            step_size: 2.0 * grid.resolution,
            gamma: None,
            goal_tolerance: grid.resolution,
            goal_bias: 0.05,
            max_iterations: 5_000_000,
            time_budget: Some(2.0),
            termination: Termination::FirstPath { threshold: 2.0 * (grid.height + grid.width) as f64 * grid.resolution },
            batch_size: 200,
            seed: 0,
            clock: Clock::Wall,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, termination: Termination, time_budget: Option<f64>) -> Self {
        self.termination = termination;
        self.time_budget = time_budget;
        self
    }

    pub fn validate(&self, grid: &GridConfig) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        if !(self.goal_tolerance >= grid.resolution) {
            return Err(Error::Config(format!(
                "goal_tolerance {} below the grid resolution {}",
                self.goal_tolerance, grid.resolution
            )));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(Error::Config("goal_bias must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::Config("gamma must be positive".into()));
            }
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return Err(Error::Config("time_budget must be positive".into()));
            }
        }
        if let Clock::Virtual { seconds_per_iteration } = self.clock {
            if !(seconds_per_iteration > 0.0) {
                return Err(Error::Config("virtual clock needs a positive iteration cost".into()));
            }
        }
        if let Termination::FirstPath { threshold } = self.termination {
            if !(threshold > 0.0) {
                return Err(Error::Config("first-path threshold must be positive".into()));
            }
        }
        Ok(())
    }

    /// RRT* rewiring constant for a 2-D free space of `free_area` m².
    pub fn gamma_for(&self, free_area: f64) -> f64 {
        self.gamma.unwrap_or_else(|| 2.0 * 1.5f64.sqrt() * (free_area / std::f64::consts::PI).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminationReason {
    FirstPath,
    BudgetExhausted,
    Failure,
}

/// A sample drawn after a solution existed, with the best cost at the time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InformedSample {
    pub point: Point2,
    pub best_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    /// Metres, ego frame; empty on failure.
    pub path: Vec<Point2>,
    pub length: f64,
    pub elapsed: f64,
    pub iterations: usize,
    pub termination_reason: TerminationReason,
    /// `(iteration, best cost)` each time the best solution improved.
    pub cost_trace: Vec<(usize, f64)>,
    /// Seconds until the first solution.
    pub first_solution_time: Option<f64>,
    /// Post-solution samples, recorded by Informed-RRT* only.
    pub informed_samples: Vec<InformedSample>,
}

impl PlanResult {
    pub fn success(&self) -> bool {
        self.termination_reason != TerminationReason::Failure
    }

    pub(crate) fn failure(elapsed: f64, iterations: usize) -> Self {
        PlanResult {
            path: Vec::new(),
            length: f64::INFINITY,
            elapsed,
            iterations,
            termination_reason: TerminationReason::Failure,
            cost_trace: Vec::new(),
            first_solution_time: None,
            informed_samples: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Planner {
    RrtStar,
    InformedRrtStar,
    BitStar,
}

impl Planner {
    pub const ALL: [Planner; 3] = [Planner::RrtStar, Planner::InformedRrtStar, Planner::BitStar];

    pub fn name(self) -> &'static str {
        match self {
            Planner::RrtStar => "rrt_star",
            Planner::InformedRrtStar => "informed_rrt_star",
            Planner::BitStar => "bit_star",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Planner::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn plan(self, grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlannerConfig) -> Result<PlanResult> {
        match self {
            Planner::RrtStar => rrt_star(grid, start, goal, cfg),
            Planner::InformedRrtStar => informed_rrt_star(grid, start, goal, cfg),
            Planner::BitStar => bit_star(grid, start, goal, cfg),
        }
    }
}

/// Elapsed-time bookkeeping shared by the sampling planners.
pub(crate) struct Stopwatch {
    start: Instant,
    clock: Clock,
}

impl Stopwatch {
    pub(crate) fn start(clock: Clock) -> Self {
        Stopwatch { start: Instant::now(), clock }
    }

    pub(crate) fn elapsed(&self, iterations: usize) -> f64 {
        match self.clock {
            Clock::Wall => self.start.elapsed().as_secs_f64(),
            Clock::Virtual { seconds_per_iteration } => iterations as f64 * seconds_per_iteration,
        }
    }

    pub(crate) fn exhausted(&self, cfg: &PlannerConfig, iterations: usize) -> bool {
        iterations >= cfg.max_iterations || cfg.time_budget.is_some_and(|t| self.elapsed(iterations) >= t)
    }
}

/// Uniform sampling over free space: a uniform free cell, then a uniform
/// offset inside it.
pub(crate) struct FreeSampler {
    cells: Vec<Point2>,
    half: f64,
}

impl FreeSampler {
    pub(crate) fn new(grid: &OccupancyGrid) -> Self {
        let cfg = grid.config();
        let cells = grid.free_cells().into_iter().map(|c| cfg.cell_center(c)).collect();
        FreeSampler { cells, half: 0.5 * cfg.resolution }
    }

    pub(crate) fn area(&self) -> f64 {
        self.cells.len() as f64 * 4.0 * self.half * self.half
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> Point2 {
        let c = self.cells[rng.gen_range(0..self.cells.len())];
        // keep the offset strictly inside the cell so rounding maps back to it
        let h = self.half * (1.0 - 1e-9);
        Point2::new(c.x + rng.gen_range(-h..h), c.y + rng.gen_range(-h..h))
    }
}

/// Uniform sample from the ellipse with foci `a`, `b` and transverse
/// diameter `c_best`.
pub(crate) fn sample_ellipse<R: Rng>(a: Point2, b: Point2, c_best: f64, rng: &mut R) -> Point2 {
    let c_min = a.dist(b);
    let r1 = 0.5 * c_best;
    let r2 = 0.5 * (c_best * c_best - c_min * c_min).max(0.0).sqrt();
    let (theta, rad) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen::<f64>().sqrt());
    let (u, v) = (rad * theta.cos() * r1, rad * theta.sin() * r2);
    let (cos, sin) = if c_min > 0.0 { ((b.x - a.x) / c_min, (b.y - a.y) / c_min) } else { (1.0, 0.0) };
    let centre = a.lerp(b, 0.5);
    Point2::new(centre.x + cos * u - sin * v, centre.y + sin * u + cos * v)
}

pub(crate) fn check_endpoints(grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlannerConfig) -> Result<bool> {
    cfg.validate(grid.config())?;
    if ![start.x, start.y, goal.x, goal.y].iter().all(|v| v.is_finite()) {
        return Err(Error::Input("non-finite start or goal".into()));
    }
    if !point_free(grid, start) {
        return Err(Error::Input(format!("start ({:.3}, {:.3}) is not in free space", start.x, start.y)));
    }
    Ok(point_free(grid, goal))
}
