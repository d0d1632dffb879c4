use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::{point_free, segment_collision_free};
use super::spatial::SpatialHash;
use super::{
    check_endpoints, sample_ellipse, FreeSampler, InformedSample, PlanResult, PlannerConfig, Stopwatch, Termination,
    TerminationReason,
};
use crate::error::Result;
use crate::grid::{OccupancyGrid, Point2};

/// Ellipse draws tried before accepting a sample outside free space.
const ELLIPSE_TRIES: usize = 64;

pub fn rrt_star(grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlannerConfig) -> Result<PlanResult> {
    run(grid, start, goal, cfg, false)
}

/// RRT* that, once a solution of cost `c` exists, samples only the ellipse
/// with foci `start` and `goal` and transverse diameter `c`.
pub fn informed_rrt_star(grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlannerConfig) -> Result<PlanResult> {
    run(grid, start, goal, cfg, true)
}

struct Tree {
    pts: Vec<Point2>,
    parent: Vec<usize>,
    cost: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    fn push(&mut self, p: Point2, parent: usize, cost: f64) -> usize {
        let id = self.pts.len();
        self.pts.push(p);
        self.parent.push(parent);
        self.cost.push(cost);
        self.children.push(Vec::new());
        if parent != usize::MAX {
            self.children[parent].push(id);
        }
        id
    }

    fn reparent(&mut self, node: usize, parent: usize, cost: f64) {
        let old = self.parent[node];
        self.children[old].retain(|c| *c != node);
        self.children[parent].push(node);
        self.parent[node] = parent;
        let delta = cost - self.cost[node];
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            self.cost[n] += delta;
            stack.extend_from_slice(&self.children[n]);
        }
    }

    fn path_to(&self, mut node: usize) -> Vec<Point2> {
        let mut path = vec![self.pts[node]];
        while self.parent[node] != usize::MAX {
            node = self.parent[node];
            path.push(self.pts[node]);
        }
        path.reverse();
        path
    }
}

fn run(grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlannerConfig, informed: bool) -> Result<PlanResult> {
    let watch = Stopwatch::start(cfg.clock);
    if !check_endpoints(grid, start, goal, cfg)? {
        return Ok(PlanResult::failure(watch.elapsed(0), 0));
    }
    let sampler = FreeSampler::new(grid);
    let gamma = cfg.gamma_for(sampler.area());
    let cap = 3.0 * cfg.step_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tree = Tree { pts: Vec::new(), parent: Vec::new(), cost: Vec::new(), children: Vec::new() };
    let mut index = SpatialHash::new(grid.config(), cap);
    index.insert(tree.push(start, usize::MAX, 0.0), start);

    let mut goal_nodes: Vec<usize> = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut cost_trace = Vec::new();
    let mut first_solution_time = None;
    let mut informed_samples = Vec::new();
    let mut iterations = 0usize;
    let mut reached_first_path = false;

    while !watch.exhausted(cfg, iterations) {
        iterations += 1;
        let x_rand = if rng.gen::<f64>() < cfg.goal_bias {
            goal
        } else if let (true, Some((c_best, _))) = (informed, best) {
            let mut s = sample_ellipse(start, goal, c_best, &mut rng);
            for _ in 1..ELLIPSE_TRIES {
                if point_free(grid, s) {
                    break;
                }
                s = sample_ellipse(start, goal, c_best, &mut rng);
            }
            s
        } else {
            sampler.sample(&mut rng)
        };
        if let (true, Some((c_best, _))) = (informed, best) {
            informed_samples.push(InformedSample { point: x_rand, best_cost: c_best });
        }

        let Some((nearest, d)) = index.nearest(x_rand) else { break };
        if d <= 0.0 {
            continue;
        }
        let x_new = if d <= cfg.step_size { x_rand } else { tree.pts[nearest].lerp(x_rand, cfg.step_size / d) };
        if !point_free(grid, x_new) {
            continue;
        }
        let n = (tree.pts.len() + 1) as f64;
        let radius = (gamma * (n.ln() / n).sqrt()).min(cap);
        let mut near = index.within(x_new, radius);
        if !near.contains(&nearest) {
            near.push(nearest);
        }

        let mut candidates: Vec<(f64, usize)> = near.iter().map(|&j| (tree.cost[j] + tree.pts[j].dist(x_new), j)).collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some(&(new_cost, parent)) =
            candidates.iter().find(|(_, j)| segment_collision_free(grid, tree.pts[*j], x_new))
        else {
            continue;
        };
        let new = tree.push(x_new, parent, new_cost);
        index.insert(new, x_new);

        for &j in &near {
            if j == parent {
                continue;
            }
            let c = new_cost + x_new.dist(tree.pts[j]);
            if c < tree.cost[j] - 1e-12 && segment_collision_free(grid, x_new, tree.pts[j]) {
                tree.reparent(j, new, c);
            }
        }

        if x_new.dist(goal) <= cfg.goal_tolerance && segment_collision_free(grid, x_new, goal) {
            goal_nodes.push(new);
        }
        let candidate = goal_nodes
            .iter()
            .map(|&g| (tree.cost[g] + tree.pts[g].dist(goal), g))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((c, g)) = candidate {
            if best.is_none_or(|(b, _)| c < b - 1e-12) {
                if best.is_none() {
                    first_solution_time = Some(watch.elapsed(iterations));
                }
                cost_trace.push((iterations, c));
            }
            best = Some((c, g));
            if let Termination::FirstPath { threshold } = cfg.termination {
                if c <= threshold {
                    reached_first_path = true;
                    break;
                }
            }
        }
    }

    let elapsed = watch.elapsed(iterations);
    let Some((_, node)) = best else {
        let mut r = PlanResult::failure(elapsed, iterations);
        r.informed_samples = informed_samples;
        return Ok(r);
    };
    let mut path = tree.path_to(node);
    if *path.last().unwrap() != goal {
        path.push(goal);
    }
    Ok(PlanResult {
        length: super::path_length(&path),
        path,
        elapsed,
        iterations,
        termination_reason: if reached_first_path {
            TerminationReason::FirstPath
        } else {
            TerminationReason::BudgetExhausted
        },
        cost_trace,
        first_solution_time,
        informed_samples,
    })
}
