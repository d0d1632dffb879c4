use std::collections::VecDeque;

use crate::grid::{Cell, CellState, GridConfig, OccupancyGrid};

/// Angular separation between goal representatives, degrees.
pub const GOAL_SEPARATION_DEG: f64 = 30.0;
pub const DEFAULT_MAX_GOALS: usize = 4;

/// Free cells with a 4-neighbour that is unknown or off the grid.
pub fn frontier_cells(grid: &OccupancyGrid) -> Vec<Cell> {
    grid.free_cells()
        .into_iter()
        .filter(|&(r, c)| {
            [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|(dr, dc)| grid.state_at(r as i64 + dr, c as i64 + dc) == CellState::Unknown)
        })
        .collect()
}

/// 4-connected flood fill over free cells.
pub fn reachable_from(grid: &OccupancyGrid, start: Cell) -> Vec<bool> {
    let cfg = grid.config();
    let mut seen = vec![false; cfg.cells()];
    if !grid.is_free(start) {
        return seen;
    }
    seen[cfg.index(start)] = true;
    let mut queue = VecDeque::from([start]);
    while let Some((r, c)) = queue.pop_front() {
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if cfg.contains(nr, nc) {
                let n = (nr as usize, nc as usize);
                if !seen[cfg.index(n)] && grid.is_free(n) {
                    seen[cfg.index(n)] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    seen
}

/// Bearing of a cell seen from `origin`, degrees, counter-clockwise from the
/// forward (up-grid) axis.
pub fn bearing_deg(origin: (f64, f64), row: f64, col: f64) -> f64 {
    (origin.1 - col).atan2(origin.0 - row).to_degrees()
}

pub fn angle_between_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// One goal per dominant direction of motion: reachable frontier cells ahead
/// of the robot, taken farthest first, each kept only if its bearing is at
/// least 30° from every goal already chosen.
pub fn sample_goals(grid: &OccupancyGrid, ego: Cell, max_goals: usize) -> Vec<Cell> {
    let cfg: &GridConfig = grid.config();
    let reach = reachable_from(grid, ego);
    let origin = (ego.0 as f64, ego.1 as f64);
    let dist2 = |c: &Cell| {
        let (dr, dc) = (c.0 as f64 - origin.0, c.1 as f64 - origin.1);
        dr * dr + dc * dc
    };
    // the track history points straight back, so only cells ahead qualify
    let mut candidates: Vec<Cell> =
        frontier_cells(grid).into_iter().filter(|c| reach[cfg.index(*c)] && c.0 < ego.0).collect();
    candidates.sort_by(|a, b| dist2(b).total_cmp(&dist2(a)).then(a.cmp(b)));
    let mut goals: Vec<(Cell, f64)> = Vec::new();
    for c in candidates {
        if goals.len() >= max_goals {
            break;
        }
        let b = bearing_deg(origin, c.0 as f64, c.1 as f64);
        if goals.iter().all(|(_, gb)| angle_between_deg(b, *gb) >= GOAL_SEPARATION_DEG) {
            goals.push((c, b));
        }
    }
    goals.into_iter().map(|(c, _)| c).collect()
}
