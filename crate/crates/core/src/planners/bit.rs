use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dijkstra::Cost;
use super::geometry::{point_free, segment_collision_free};
use super::spatial::SpatialHash;
use super::{
    check_endpoints, sample_ellipse, FreeSampler, PlanResult, PlannerConfig, Stopwatch, Termination, TerminationReason,
};
use crate::error::Result;
use crate::grid::{OccupancyGrid, Point2};

const START: usize = 0;
const GOAL: usize = 1;
const ELLIPSE_TRIES: usize = 64;

struct Graph {
    pts: Vec<Point2>,
    in_tree: Vec<bool>,
    /// In the tree since before the current batch.
    old: Vec<bool>,
    expanded: Vec<bool>,
    parent: Vec<usize>,
    g: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Graph {
    fn add(&mut self, p: Point2) -> usize {
        self.pts.push(p);
        self.in_tree.push(false);
        self.old.push(false);
        self.expanded.push(false);
        self.parent.push(usize::MAX);
        self.g.push(f64::INFINITY);
        self.children.push(Vec::new());
        self.pts.len() - 1
    }

    fn connect(&mut self, x: usize, parent: usize, cost: f64) {
        if self.parent[x] != usize::MAX {
            let old = self.parent[x];
            self.children[old].retain(|c| *c != x);
        }
        self.children[parent].push(x);
        self.parent[x] = parent;
        self.in_tree[x] = true;
        let delta = cost - self.g[x];
        if delta.is_finite() {
            let mut stack = vec![x];
            while let Some(n) = stack.pop() {
                self.g[n] += delta;
                stack.extend_from_slice(&self.children[n]);
            }
        } else {
            self.g[x] = cost;
        }
    }
}

/// Batch Informed Trees: batches of `batch_size` samples are searched
/// best-first through an edge queue ordered by `g(v) + ĉ(v, x) + ĥ(x)`, with
/// collision checks deferred until an edge is popped. After a solution
/// exists, new batches are drawn from the informed ellipse and samples that
/// cannot improve it are pruned.
pub fn bit_star(grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlannerConfig) -> Result<PlanResult> {
    let watch = Stopwatch::start(cfg.clock);
    if !check_endpoints(grid, start, goal, cfg)? {
        return Ok(PlanResult::failure(watch.elapsed(0), 0));
    }
    let sampler = FreeSampler::new(grid);
    let gamma = cfg.gamma_for(sampler.area());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bucket = (4.0 * cfg.step_size).max(grid.config().resolution);
    let mut vertices = SpatialHash::new(grid.config(), bucket);
    let mut samples = SpatialHash::new(grid.config(), bucket);
    let mut gr = Graph {
        pts: Vec::new(),
        in_tree: Vec::new(),
        old: Vec::new(),
        expanded: Vec::new(),
        parent: Vec::new(),
        g: Vec::new(),
        children: Vec::new(),
    };
    gr.add(start);
    gr.in_tree[START] = true;
    gr.g[START] = 0.0;
    vertices.insert(START, start);
    gr.add(goal);
    samples.insert(GOAL, goal);
    let mut sample_ids: Vec<usize> = vec![GOAL];

    let h = |p: Point2| p.dist(goal);
    let gh = |p: Point2| p.dist(start);
    let mut c_best = f64::INFINITY;
    let mut radius = f64::INFINITY;
    let mut vq: BinaryHeap<Reverse<(Cost, usize)>> = BinaryHeap::new();
    let mut eq: BinaryHeap<Reverse<(Cost, usize, usize)>> = BinaryHeap::new();
    let mut cost_trace = Vec::new();
    let mut first_solution_time = None;
    let mut iterations = 0usize;
    let mut reached_first_path = false;

    'search: while !watch.exhausted(cfg, iterations) {
        if vq.is_empty() && eq.is_empty() {
            iterations += 1;
            if c_best.is_finite() {
                sample_ids.retain(|&s| {
                    let keep = gr.in_tree[s] || gh(gr.pts[s]) + h(gr.pts[s]) < c_best;
                    if !keep {
                        samples.remove(s, gr.pts[s]);
                    }
                    keep && !gr.in_tree[s]
                });
            }
            for _ in 0..cfg.batch_size {
                let p = if c_best.is_finite() {
                    let mut s = sample_ellipse(start, goal, c_best, &mut rng);
                    for _ in 1..ELLIPSE_TRIES {
                        if point_free(grid, s) {
                            break;
                        }
                        s = sample_ellipse(start, goal, c_best, &mut rng);
                    }
                    if !point_free(grid, s) {
                        continue;
                    }
                    s
                } else {
                    sampler.sample(&mut rng)
                };
                let id = gr.add(p);
                samples.insert(id, p);
                sample_ids.push(id);
            }
            let q = (vertices.len() + samples.len()) as f64;
            radius = gamma * (q.ln() / q).sqrt();
            for v in 0..gr.pts.len() {
                if gr.in_tree[v] {
                    gr.old[v] = true;
                    gr.expanded[v] = false;
                    vq.push(Reverse((Cost(gr.g[v] + h(gr.pts[v])), v)));
                }
            }
        }

        while let Some(&Reverse((Cost(vk), v))) = vq.peek() {
            let ek = eq.peek().map_or(f64::INFINITY, |Reverse((Cost(k), _, _))| *k);
            if vk > ek {
                break;
            }
            vq.pop();
            if gr.expanded[v] {
                continue;
            }
            gr.expanded[v] = true;
            let pv = gr.pts[v];
            for x in samples.within(pv, radius) {
                let c = pv.dist(gr.pts[x]);
                if gh(pv) + c + h(gr.pts[x]) < c_best {
                    eq.push(Reverse((Cost(gr.g[v] + c + h(gr.pts[x])), v, x)));
                }
            }
            if !gr.old[v] {
                for w in vertices.within(pv, radius) {
                    if w == v || gr.parent[v] == w || gr.parent[w] == v {
                        continue;
                    }
                    let c = pv.dist(gr.pts[w]);
                    if gh(pv) + c + h(gr.pts[w]) < c_best && gr.g[v] + c < gr.g[w] {
                        eq.push(Reverse((Cost(gr.g[v] + c + h(gr.pts[w])), v, w)));
                    }
                }
            }
        }

        let Some(Reverse((_, v, x))) = eq.pop() else {
            continue;
        };
        iterations += 1;
        let (pv, px) = (gr.pts[v], gr.pts[x]);
        let c_hat = pv.dist(px);
        if gr.g[v] + c_hat + h(px) >= c_best {
            eq.clear();
            vq.clear();
            continue;
        }
        if gr.parent[x] == v || gh(pv) + c_hat + h(px) >= c_best || gr.g[v] + c_hat >= gr.g[x] {
            continue;
        }
        if !segment_collision_free(grid, pv, px) {
            continue;
        }
        let was_vertex = gr.in_tree[x];
        gr.connect(x, v, gr.g[v] + c_hat);
        if !was_vertex {
            samples.remove(x, px);
            vertices.insert(x, px);
            vq.push(Reverse((Cost(gr.g[x] + h(px)), x)));
        }
        if gr.in_tree[GOAL] && gr.g[GOAL] < c_best - 1e-12 {
            if c_best.is_infinite() {
                first_solution_time = Some(watch.elapsed(iterations));
            }
            c_best = gr.g[GOAL];
            cost_trace.push((iterations, c_best));
            if let Termination::FirstPath { threshold } = cfg.termination {
                if c_best <= threshold {
                    reached_first_path = true;
                    break 'search;
                }
            }
        }
    }

    let elapsed = watch.elapsed(iterations);
    if !gr.in_tree[GOAL] {
        return Ok(PlanResult::failure(elapsed, iterations));
    }
    let mut path = vec![goal];
    let mut n = GOAL;
    while gr.parent[n] != usize::MAX {
        n = gr.parent[n];
        path.push(gr.pts[n]);
    }
    path.reverse();
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
        informed_samples: Vec::new(),
    })
}
