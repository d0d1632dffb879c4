use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::goals::{frontier_cells, reachable_from};
use crate::error::{Error, Result};
use crate::grid::{rasterize_history, straight_history, CellState, GridConfig, OccupancyGrid, TrackHistory, DEFAULT_HISTORY_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SceneKind {
    StraightCorridor,
    TJunction,
    CrossIntersection,
    Bifurcation,
    RandomObstacles,
    OpenSpace,
}

impl SceneKind {
    pub const ALL: [SceneKind; 6] = [
        SceneKind::StraightCorridor,
        SceneKind::TJunction,
        SceneKind::CrossIntersection,
        SceneKind::Bifurcation,
        SceneKind::RandomObstacles,
        SceneKind::OpenSpace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::StraightCorridor => "corridor",
            SceneKind::TJunction => "tjunction",
            SceneKind::CrossIntersection => "intersection",
            SceneKind::Bifurcation => "bifurcation",
            SceneKind::RandomObstacles => "obstacles",
            SceneKind::OpenSpace => "open",
        }
    }

    pub fn code(self) -> u8 {
        SceneKind::ALL.iter().position(|k| *k == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        SceneKind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scene kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    /// Corridor width in cells; `None` uses an eighth of the grid width.
    pub corridor_width: Option<usize>,
    /// Fraction of cells covered by blocks in `RandomObstacles` scenes.
    pub obstacle_density: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams { corridor_width: None, obstacle_density: 0.08 }
    }
}

/// Ground-truth world as a free-space mask in grid coordinates.
struct World {
    h: usize,
    w: usize,
    free: Vec<bool>,
}

impl World {
    fn new(h: usize, w: usize) -> Self {
        World { h, w, free: vec![false; h * w] }
    }

    /// Frees every cell whose centre lies within `width / 2` of the segment.
    fn corridor(&mut self, a: (f64, f64), b: (f64, f64), width: f64) {
        let half = width / 2.0;
        let (dr, dc) = (b.0 - a.0, b.1 - a.1);
        let len2 = dr * dr + dc * dc;
        for r in 0..self.h {
            for c in 0..self.w {
                let (pr, pc) = (r as f64 - a.0, c as f64 - a.1);
                let t = if len2 > 0.0 { ((pr * dr + pc * dc) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (qr, qc) = (pr - t * dr, pc - t * dc);
                if qr * qr + qc * qc <= half * half {
                    self.free[r * self.w + c] = true;
                }
            }
        }
    }
}

/// Observed grid: world-free cells in range are free, non-free cells
/// touching them (8-neighbourhood) are occupied walls, everything else is
/// unknown.
fn observe(world: &World, config: &GridConfig) -> Result<OccupancyGrid> {
    let (h, w) = (world.h, world.w);
    let in_range = |r: usize, c: usize| config.cell_center((r, c)).dist(Default::default()) <= config.range;
    let mut cells = vec![CellState::Unknown; h * w];
    for r in 0..h {
        for c in 0..w {
            if !in_range(r, c) {
                continue;
            }
            if world.free[r * w + c] {
                cells[r * w + c] = CellState::Free;
                continue;
            }
            let wall = (-1i64..=1).any(|dr| {
                (-1i64..=1).any(|dc| {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    config.contains(nr, nc) && world.free[nr as usize * w + nc as usize] && in_range(nr as usize, nc as usize)
                })
            });
            if wall {
                cells[r * w + c] = CellState::Occupied;
            }
        }
    }
    OccupancyGrid::from_states(*config, cells)
}

/// Lays out a scene of the given kind around the ego cell and observes it.
/// Deterministic per seed.
pub fn generate_scene(kind: SceneKind, params: &SceneParams, config: &GridConfig, seed: u64) -> Result<(OccupancyGrid, TrackHistory)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind.code() as u64) << 56);
    let (h, w) = (config.height, config.width);
    let (er, ec) = (config.ego_cell.0 as f64, config.ego_cell.1 as f64);
    let width = params.corridor_width.unwrap_or((w / 8).max(3)) as f64;
    let bottom = (h - 1) as f64 + width;
    let mut attempt = 0u64;
    let grid = loop {
        let mut world = World::new(h, w);
        match kind {
            SceneKind::StraightCorridor => {
                let drift = rng.gen_range(-(w as f64) / 8.0..=(w as f64) / 8.0);
                world.corridor((bottom, ec), (er, ec), width);
                world.corridor((er, ec), (-width, ec + drift), width);
            }
            SceneKind::TJunction | SceneKind::CrossIntersection => {
                let jr = rng.gen_range(h as f64 * 0.2..=h as f64 * 0.5);
                let tilt = rng.gen_range(-(h as f64) / 16.0..=(h as f64) / 16.0);
                world.corridor((bottom, ec), (jr, ec), width);
                world.corridor((jr + tilt, -width), (jr - tilt, (w - 1) as f64 + width), width);
                if kind == SceneKind::CrossIntersection {
                    world.corridor((jr, ec), (-width, ec), width);
                }
            }
            SceneKind::Bifurcation => {
                let fr = rng.gen_range(h as f64 * 0.45..=h as f64 * 0.7);
                world.corridor((bottom, ec), (fr, ec), width);
                for side in [-1.0, 1.0] {
                    let angle = rng.gen_range(30f64..=50.0).to_radians();
                    let reach = fr + width;
                    let end = (fr - reach, ec + side * reach * angle.tan());
                    world.corridor((fr, ec), end, width);
                }
            }
            SceneKind::OpenSpace => world.free.fill(true),
            SceneKind::RandomObstacles => {
                world.free.fill(true);
                let target = (params.obstacle_density * (h * w) as f64) as usize;
                let mut covered = 0;
                for _ in 0..16 * target.max(1) {
                    if covered >= target {
                        break;
                    }
                    let (bh, bw) = (rng.gen_range(1..=h / 8), rng.gen_range(1..=w / 8));
                    let (r0, c0) = (rng.gen_range(0..h - bh), rng.gen_range(0..w - bw));
                    for r in r0..r0 + bh {
                        for c in c0..c0 + bw {
                            let near_ego = (r as f64 - er).abs() <= 2.0 && (c as f64 - ec).abs() <= 2.0;
                            if !near_ego && world.free[r * w + c] {
                                world.free[r * w + c] = false;
                                covered += 1;
                            }
                        }
                    }
                }
            }
        }
        let grid = observe(&world, config)?;
        let ego = config.ego_cell;
        let reach = reachable_from(&grid, ego);
        let ok = grid.is_free(ego) && frontier_cells(&grid).iter().any(|c| reach[config.index(*c)]);
        if ok {
            break grid;
        }
        attempt += 1;
        if attempt > 64 {
            return Err(Error::Data(format!("could not lay out a valid {kind} scene for seed {seed}")));
        }
    };
    let history = rasterize_history(&straight_history(DEFAULT_HISTORY_LEN, 2.0 * config.resolution), config)?;
    Ok((grid, history))
}
