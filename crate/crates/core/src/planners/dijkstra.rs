use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::{PlanResult, TerminationReason};
use crate::error::{Error, Result};
use crate::grid::{OccupancyGrid, Point2};

/// Total-ordered wrapper for non-NaN costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Cost(pub f64);

impl Eq for Cost {}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const MOVES: [(i64, i64); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Exact shortest path on the 8-connected free-cell graph with edge weights
/// of 1 and √2 cells. Diagonal moves need both side cells free. Start and
/// goal snap to their cell centres.
pub fn dijkstra_shortest(grid: &OccupancyGrid, start: Point2, goal: Point2) -> Result<PlanResult> {
    let clock = Instant::now();
    let cfg = *grid.config();
    let s = cfg.cell_of(start).filter(|c| grid.is_free(*c)).ok_or_else(|| Error::Input("start is not in free space".into()))?;
    let Some(t) = cfg.cell_of(goal).filter(|c| grid.is_free(*c)) else {
        return Ok(PlanResult::failure(clock.elapsed().as_secs_f64(), 0));
    };
    let free = |r: i64, c: i64| cfg.contains(r, c) && grid.is_free((r as usize, c as usize));
    let mut dist = vec![f64::INFINITY; cfg.cells()];
    let mut prev = vec![usize::MAX; cfg.cells()];
    let mut heap = BinaryHeap::new();
    dist[cfg.index(s)] = 0.0;
    heap.push(Reverse((Cost(0.0), cfg.index(s))));
    let mut expanded = 0usize;
    while let Some(Reverse((Cost(d), i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        expanded += 1;
        if i == cfg.index(t) {
            break;
        }
        let (r, c) = ((i / cfg.width) as i64, (i % cfg.width) as i64);
        for (dr, dc) in MOVES {
            let (nr, nc) = (r + dr, c + dc);
            if !free(nr, nc) || (dr != 0 && dc != 0 && !(free(r + dr, c) && free(r, c + dc))) {
                continue;
            }
            let w = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            let j = nr as usize * cfg.width + nc as usize;
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                prev[j] = i;
                heap.push(Reverse((Cost(nd), j)));
            }
        }
    }
    let ti = cfg.index(t);
    if !dist[ti].is_finite() {
        return Ok(PlanResult::failure(clock.elapsed().as_secs_f64(), expanded));
    }
    let mut cells = vec![ti];
    while *cells.last().unwrap() != cfg.index(s) {
        cells.push(prev[*cells.last().unwrap()]);
    }
    cells.reverse();
    let path: Vec<Point2> = cells.iter().map(|&i| cfg.cell_center((i / cfg.width, i % cfg.width))).collect();
    let length = dist[ti] * cfg.resolution;
    Ok(PlanResult {
        path,
        length,
        elapsed: clock.elapsed().as_secs_f64(),
        iterations: expanded,
        termination_reason: TerminationReason::BudgetExhausted,
        cost_trace: vec![(expanded, length)],
        first_solution_time: None,
        informed_samples: Vec::new(),
    })
}
