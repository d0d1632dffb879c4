//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Positional arguments select criteria by number,
//! e.g. `cargo test --release --test acceptance -- 3 4`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajgrid::bench::*;
use trajgrid::datagen::*;
use trajgrid::grid::{Cell, GridConfig, OccupancyGrid, Point2};
use trajgrid::nn::*;
use trajgrid::planners::*;
use trajgrid::tpnet::*;
use trajgrid::tsnet::*;
use trajgrid::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[(bool, String)]) -> Outcome {
    let pass = checks.iter().all(|c| c.0);
    let detail = checks.iter().map(|(ok, d)| if *ok { d.clone() } else { format!("FAILED {d}") }).collect::<Vec<_>>().join("; ");
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- oracles

/// Central differences on sampled coordinates, compared with the analytic
/// gradient as `|a − n| / max(|a|, |n|, 1e-6)`.
fn fd_max_rel_error<F>(store: &ParamStore<f64>, samples: usize, seed: u64, objective: F) -> f64
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, ParamGrads<f64>)>,
{
    const EPS: f64 = 1e-5;
    let (_, grads) = objective(store).unwrap();
    let coords: Vec<(ParamId, usize)> = store.ids().flat_map(|id| (0..store.get(id).len()).map(move |i| (id, i))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, coords.len(), samples.min(coords.len())).into_vec();
    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for idx in picked {
        let (id, i) = coords[idx];
        let x = store.get(id).data()[i];
        probe.get_mut(id).data_mut()[i] = x + EPS;
        let plus = objective(&probe).unwrap().0;
        probe.get_mut(id).data_mut()[i] = x - EPS;
        let minus = objective(&probe).unwrap().0;
        probe.get_mut(id).data_mut()[i] = x;
        let numeric = (plus - minus) / (2.0 * EPS);
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

/// `mean(−α·P⁰·ln R⁰ − (1−α)·P¹·ln(1 − R⁰))` by hand.
fn weighted_ce_oracle(r0: &[f64], target: &[bool], alpha: f64) -> f64 {
    let s: f64 =
        r0.iter().zip(target).map(|(p, t)| if *t { -alpha * p.ln() } else { -(1.0 - alpha) * (1.0 - p).ln() }).sum();
    s / r0.len() as f64
}

/// Eight-connected shortest path length in metres between cell centres;
/// diagonal steps need both side cells free.
fn dijkstra8_oracle(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<f64> {
    let cfg = *grid.config();
    let free = |r: i64, c: i64| cfg.contains(r, c) && grid.is_free((r as usize, c as usize));
    let mut dist = vec![u64::MAX; cfg.cells()];
    // integer costs: 1000 per straight step, 1414 per diagonal step, so the
    // queue ordering is exact; lengths are recomputed from step counts
    let mut steps = vec![(0u32, 0u32); cfg.cells()];
    let mut heap = BinaryHeap::new();
    dist[cfg.index(start)] = 0;
    heap.push(Reverse((0u64, cfg.index(start))));
    while let Some(Reverse((d, i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == cfg.index(goal) {
            let (s, dg) = steps[i];
            return Some((s as f64 + dg as f64 * std::f64::consts::SQRT_2) * cfg.resolution);
        }
        let (r, c) = ((i / cfg.width) as i64, (i % cfg.width) as i64);
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                if (dr, dc) == (0, 0) || !free(r + dr, c + dc) {
                    continue;
                }
                let diag = dr != 0 && dc != 0;
                if diag && !(free(r + dr, c) && free(r, c + dc)) {
                    continue;
                }
                let j = (r + dr) as usize * cfg.width + (c + dc) as usize;
                let nd = d + if diag { 1414 } else { 1000 };
                if nd < dist[j] {
                    dist[j] = nd;
                    steps[j] = if diag { (steps[i].0, steps[i].1 + 1) } else { (steps[i].0 + 1, steps[i].1) };
                    heap.push(Reverse((nd, j)));
                }
            }
        }
    }
    None
}

/// Dense point sampling along every segment, 50 points per cell length.
fn dense_collision_free(grid: &OccupancyGrid, path: &[Point2]) -> bool {
    let cfg = *grid.config();
    path.windows(2).all(|w| {
        let n = ((w[0].dist(w[1]) / cfg.resolution) * 50.0).ceil().max(1.0) as usize;
        (0..=n).all(|i| cfg.cell_of(w[0].lerp(w[1], i as f64 / n as f64)).is_some_and(|c| grid.is_free(c)))
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn grid32() -> DatasetConfig {
    DatasetConfig::for_grid(GridConfig::with_size(32, 32))
}

// ------------------------------------------------------------- criteria

fn finish(g: &Graph<f64>, store: &ParamStore<f64>, loss: Var) -> Result<(f64, ParamGrads<f64>)> {
    let grads = g.backward(loss)?.params(g, store);
    Ok((g.value(loss).item(), grads))
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Fixed random projection to a scalar so every output entry matters.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.value(y).shape().to_vec();
    let r = g.constant(random_tensor(&shape, &mut rng));
    let prod = g.mul(y, r)?;
    let n = g.value(prod).len() as f64;
    let m = g.mean(prod);
    Ok(g.scale(m, n))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut errors: Vec<(&str, f64)> = Vec::new();

    for (name, stride, dilation) in [("conv", 1, 1), ("conv s2", 2, 1), ("conv d2", 1, 2)] {
        let mut s = ParamStore::new();
        let conv = Conv2d::new(&mut s, "c", ConvSpec::new(2, 3, 3).stride(stride).dilation(dilation).padding(dilation), &mut rng).unwrap();
        let x = s.add("x", random_tensor(&[2, 2, 6, 6], &mut rng)).unwrap();
        errors.push((name, fd_max_rel_error(&s, 150, 2, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let y = conv.forward(&mut g, p, xv)?;
            let l = project(&mut g, y, 3)?;
            finish(&g, p, l)
        })));
    }
    {
        let mut s = ParamStore::new();
        let up = Conv2d::transposed(&mut s, "u", ConvSpec::new(2, 3, 4).stride(2).padding(1), &mut rng).unwrap();
        let x = s.add("x", random_tensor(&[1, 2, 3, 3], &mut rng)).unwrap();
        errors.push(("conv transpose", fd_max_rel_error(&s, 150, 4, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let y = up.forward(&mut g, p, xv)?;
            let l = project(&mut g, y, 5)?;
            finish(&g, p, l)
        })));
    }
    {
        let mut s = ParamStore::new();
        let lin = Linear::new(&mut s, "l", 5, 3, &mut rng).unwrap();
        s.get_mut(lin.bias_id()).data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        let x = s.add("x", random_tensor(&[4, 5], &mut rng)).unwrap();
        errors.push(("linear", fd_max_rel_error(&s, 64, 6, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let y = lin.forward(&mut g, p, xv)?;
            let l = project(&mut g, y, 7)?;
            finish(&g, p, l)
        })));
    }
    {
        let mut s = ParamStore::new();
        let lstm = LstmParams::new(&mut s, "lstm", 3, 4, &mut rng).unwrap();
        let xs: Vec<Tensor<f64>> = (0..3).map(|_| random_tensor(&[2, 3], &mut rng)).collect();
        errors.push(("lstm", fd_max_rel_error(&s, 128, 8, |p| {
            let mut g = Graph::new();
            let mut h = g.constant(Tensor::zeros(&[2, 4]));
            let mut c = g.constant(Tensor::zeros(&[2, 4]));
            let mut outs = Vec::new();
            for x in &xs {
                let xv = g.constant(x.clone());
                (h, c) = lstm_cell(&mut g, p, &lstm, xv, h, c)?;
                outs.push(h);
            }
            let all = g.concat(&outs)?;
            let l = project(&mut g, all, 9)?;
            finish(&g, p, l)
        })));
    }
    {
        let mut s = ParamStore::new();
        let x = s.add("x", random_tensor(&[2, 4, 3, 3], &mut rng)).unwrap();
        errors.push(("activations + pooling", fd_max_rel_error(&s, 72, 10, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let a = g.relu(xv);
            let b = g.sigmoid(xv);
            let c = g.tanh(xv);
            let ab = g.add(a, b)?;
            let abc = g.mul(ab, c)?;
            let pooled = g.global_avg_pool(abc)?;
            let l = project(&mut g, pooled, 11)?;
            finish(&g, p, l)
        })));
    }
    {
        let mut s = ParamStore::new();
        let x = s.add("logits", random_tensor(&[2, 4, 3, 3], &mut rng)).unwrap();
        let target: Vec<bool> = (0..9).map(|i| i % 3 == 0).collect();
        let occupied: Vec<bool> = (0..18).map(|i| i % 4 == 1).collect();
        errors.push(("softmax + weighted ce + obstacle nll", fd_max_rel_error(&s, 72, 12, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let probs = g.pair_softmax(xv)?;
            let t2: Vec<bool> = target.iter().chain(&target).copied().collect();
            let ce = g.head_cross_entropy(probs, &t2, 0.95)?;
            let ce = project(&mut g, ce, 13)?;
            let obs = g.obstacle_nll(probs, &occupied)?;
            let l = g.add(ce, obs)?;
            finish(&g, p, l)
        })));
    }
    {
        let mut s = ParamStore::new();
        let x = s.add("x", random_tensor(&[3, 2], &mut rng)).unwrap();
        let target = [0.1, 0.2, -0.3, 0.5, 0.9, -0.7];
        errors.push(("point distance", fd_max_rel_error(&s, 6, 14, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let d = g.point_distance(xv, &target)?;
            let l = project(&mut g, d, 15)?;
            finish(&g, p, l)
        })));
    }
    {
        let (data, _) = generate_dataset(1, &[SceneKind::TJunction], &DatasetConfig::for_grid(GridConfig::with_size(16, 16)), 3).unwrap();
        let scene = &data[0];
        let occupied = scene.input.mask(0);
        let target = scene.labels[0].traversable.clone();
        let cfg = TpnetConfig { base_channels: 3, ..Default::default() };
        let net = Tpnet64::new(cfg.clone(), 9).unwrap();
        errors.push(("full proposal loss 16x16", fd_max_rel_error(net.params(), 160, 16, |p| {
            let net = Tpnet64::from_params(cfg.clone(), p)?;
            let mut g = Graph::new();
            let x = g.constant(stack_inputs(&[&scene.input])?);
            let out = net.forward_graph(&mut g, x)?;
            let l = total_loss_graph(&mut g, out.heads, out.intermediate, &target, &occupied, &cfg)?;
            finish(&g, p, l.total)
        })));
    }
    {
        let grid = GridConfig::with_size(8, 8);
        let config = TsnetConfig { waypoints: 4, hidden_size: 3, channels: 2, ..Default::default() };
        let net = Tsnet64::new(config.clone(), 4).unwrap();
        let maps: Vec<Vec<f64>> = (0..2).map(|_| (0..grid.cells()).map(|_| rng.gen::<f64>()).collect()).collect();
        let egos = [[0.9, 0.5], [0.8, 0.4]];
        let targets: Vec<Vec<f64>> =
            (0..4).map(|t| vec![0.8 - 0.2 * t as f64, 0.5, 0.7 - 0.1 * t as f64, 0.3 + 0.1 * t as f64]).collect();
        errors.push(("full sampler loss T=4", fd_max_rel_error(net.params(), 300, 17, |p| {
            let net = Tsnet64::from_params(config.clone(), p)?;
            let mut g = Graph::new();
            let (x, e) = batch_inputs(&mut g, &[maps[0].as_slice(), maps[1].as_slice()], &egos, &grid)?;
            let steps = net.forward_graph(&mut g, x, e)?;
            let l = sequence_loss_graph(&mut g, &steps, &targets)?;
            finish(&g, p, l)
        })));
    }
    let secs = t.elapsed().as_secs_f64();
    let (name, worst) = errors.iter().copied().fold(("", 0.0), |a, b| if b.1 >= a.1 { b } else { a });
    outcome(&[
        (worst < 1e-4, format!("max rel error {worst:.2e} ({name}) over {} checks", errors.len())),
        (secs < 60.0, format!("runtime {secs:.1}s < 60s")),
    ])
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut bad_min, mut bad_perturb, mut bad_iso, mut bad_obs_zero, mut bad_obs_mono) = (0, 0, 0, 0, 0);
    let mut perturbed = 0;
    for _ in 0..100 {
        let (h, w, k) = (rng.gen_range(2..7), rng.gen_range(2..7), rng.gen_range(2..6));
        let cfg = GridConfig::with_size(h, w);
        let n = cfg.cells();
        let alpha = rng.gen_range(0.05..0.95);
        let mut maps: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(0.02..0.98)).collect()).collect();
        let mut target: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        target[0] = true;
        let label = TrajectoryLabel { traversable: target.clone(), polyline: Vec::new() };
        let ps = ProposalSet::from_traversable(cfg, &maps).unwrap();
        let oracle: Vec<f64> = maps.iter().map(|m| weighted_ce_oracle(m, &target, alpha)).collect();
        let best = oracle.iter().copied().fold(f64::INFINITY, f64::min);
        let argmin = oracle.iter().position(|v| *v == best).unwrap();
        let (ltd, chosen) = trajectory_diversity_loss(&ps, &label, alpha).unwrap();
        if (ltd - best).abs() > 1e-9 || chosen != argmin || oracle.iter().any(|v| ltd > v + 1e-12) {
            bad_min += 1;
        }

        // perturb a non-chosen head, keeping it non-chosen
        let other = (chosen + 1) % k;
        let saved = maps[other].clone();
        for v in maps[other].iter_mut() {
            *v = (*v + rng.gen_range(-0.3..0.3)).clamp(0.02, 0.98);
        }
        if weighted_ce_oracle(&maps[other], &target, alpha) > best + 1e-6 {
            perturbed += 1;
            let ps2 = ProposalSet::from_traversable(cfg, &maps).unwrap();
            if trajectory_diversity_loss(&ps2, &label, alpha).unwrap().0 != ltd {
                bad_perturb += 1;
            }
        }
        maps[other] = saved;

        // reverse mode: no gradient reaches non-chosen heads
        let logits: Vec<f64> = (0..k)
            .flat_map(|j| {
                let m = &maps[j];
                let pos: Vec<f64> = m.iter().map(|p| (p / (1.0 - p)).ln()).collect();
                pos.into_iter().chain(std::iter::repeat_n(0.0, n))
            })
            .collect();
        let mut store = ParamStore::new();
        let id = store.add("logits", Tensor::new(vec![1, 2 * k, h, w], logits).unwrap()).unwrap();
        let mut g = Graph::<f64>::new();
        let lv = g.param(&store, id);
        let probs = g.pair_softmax(lv).unwrap();
        let (l, c) = diversity_graph(&mut g, probs, &target, alpha).unwrap();
        let grads = g.backward(l).unwrap().params(&g, &store);
        let gl = grads.get(id).unwrap().data();
        let leak = (0..k).filter(|j| *j != c[0]).any(|j| gl[2 * j * n..(2 * j + 2) * n].iter().any(|v| *v != 0.0));
        if leak || (g.value(l).item() - best).abs() > 1e-9 {
            bad_iso += 1;
        }

        // obstacle loss
        if obstacle_avoidance_loss(&ps, &vec![false; n]).unwrap() != 0.0 {
            bad_obs_zero += 1;
        }
        let occupied: Vec<bool> = (0..n).map(|i| i == 0 || rng.gen_bool(0.3)).collect();
        let before = obstacle_avoidance_loss(&ps, &occupied).unwrap();
        let j = rng.gen_range(0..k);
        maps[j][0] *= 0.5; // R¹ rises at an occupied cell
        let after = obstacle_avoidance_loss(&ProposalSet::from_traversable(cfg, &maps).unwrap(), &occupied).unwrap();
        if after >= before || after.is_nan() {
            bad_obs_mono += 1;
        }
    }
    outcome(&[
        (bad_min == 0, format!("L_td = min head CE on 100/100 (violations {bad_min})")),
        (bad_perturb == 0 && perturbed >= 50, format!("non-chosen perturbation unchanged on {perturbed} (violations {bad_perturb})")),
        (bad_iso == 0, format!("zero gradient into non-chosen heads (violations {bad_iso})")),
        (bad_obs_zero == 0 && bad_obs_mono == 0, format!("L_obs zero/monotone violations {bad_obs_zero}/{bad_obs_mono}")),
    ])
}

/// Scenes with their sampled goals.
fn planner_suite(n: usize, seed: u64) -> Vec<(OccupancyGrid, Vec<Cell>)> {
    let (data, _) = generate_dataset(n, &SceneKind::ALL, &grid32(), seed).unwrap();
    data.iter()
        .map(|s| {
            let grid = s.grid().unwrap();
            let goals = sample_goals(&grid, grid.config().ego_cell, DEFAULT_MAX_GOALS);
            (grid, goals)
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let suite = planner_suite(20, 31);
    let (mut runs, mut unverified, mut worst_ratio, mut below_euclid, mut failures) = (0, 0, 0.0f64, 0, 0);
    let (mut samples, mut outside) = (0usize, 0usize);
    for (i, (grid, goals)) in suite.iter().enumerate() {
        let cfg = *grid.config();
        let start = cfg.cell_center(cfg.ego_cell);
        let goal_cell = goals[0];
        let goal = cfg.cell_center(goal_cell);
        let oracle = dijkstra8_oracle(grid, cfg.ego_cell, goal_cell).expect("sampled goals are reachable");
        for p in Planner::ALL {
            let pc = PlannerConfig::for_grid(&cfg).with_seed(i as u64);
            let r = p.plan(grid, start, goal, &pc).unwrap();
            runs += 1;
            if !r.success() {
                failures += 1;
                continue;
            }
            let ok = r.path.windows(2).all(|w| segment_collision_free(grid, w[0], w[1])) && dense_collision_free(grid, &r.path);
            unverified += !ok as usize;
        }
        let pc = PlannerConfig { max_iterations: 20_000, ..PlannerConfig::for_grid(&cfg).with_seed(i as u64) }
            .with_budget(Termination::BestWithinBudget, None);
        let r = rrt_star(grid, start, goal, &pc).unwrap();
        runs += 1;
        if !r.success() {
            failures += 1;
            continue;
        }
        unverified += !dense_collision_free(grid, &r.path) as usize;
        worst_ratio = worst_ratio.max(r.length / oracle);
        below_euclid += (r.length < start.dist(goal) - 1e-9) as usize;
        let pc = PlannerConfig { max_iterations: 5_000, ..pc };
        let r = informed_rrt_star(grid, start, goal, &pc).unwrap();
        for s in &r.informed_samples {
            samples += 1;
            outside += (s.point.dist(start) + s.point.dist(goal) > s.best_cost + 1e-9) as usize;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(&[
        (suite.len() == 20 && failures == 0 && unverified == 0, format!("{runs} paths on {} scenes re-verified ({unverified} bad, {failures} failed)", suite.len())),
        (worst_ratio <= 1.3 && below_euclid == 0, format!("converged RRT* worst ratio to Dijkstra-8 {worst_ratio:.3} <= 1.3, {below_euclid} below Euclidean")),
        (samples > 0 && outside == 0, format!("{outside} of {samples} informed samples outside the ellipse")),
        (secs < 300.0, format!("runtime {secs:.0}s < 300s")),
    ])
}

fn criterion_4() -> Outcome {
    let (data, _) = generate_dataset(10, &SceneKind::ALL, &grid32(), 41).unwrap();
    let config = BenchConfig { seeds: (0..5).collect(), ..BenchConfig::deterministic() };
    let trials = pathlength_trials(&data, &Planner::ALL, &Budget::DESK, &config).unwrap();
    let mut checks = Vec::new();
    for p in Planner::ALL {
        let (mut pairs, mut comparisons, mut violations) = (0, 0, 0);
        let mut sums = [0.0; 3];
        for t in trials.iter().filter(|t| t.planner == p && t.budget == Budget::FirstPath) {
            let chain: Option<Vec<f64>> = Budget::DESK
                .iter()
                .map(|b| {
                    trials
                        .iter()
                        .find(|u| u.planner == p && u.scene_id == t.scene_id && u.seed == t.seed && u.budget == *b)
                        .and_then(PathTrial::mean_length)
                })
                .collect();
            if let Some(m) = chain {
                pairs += 1;
                comparisons += 2;
                violations += (m[1] > m[0] + 1e-9) as usize + (m[2] > m[1] + 1e-9) as usize;
                sums.iter_mut().zip(&m).for_each(|(s, v)| *s += v);
            }
        }
        let means = sums.map(|s| s / pairs.max(1) as f64);
        checks.push((
            pairs >= 45 && violations * 20 <= comparisons,
            format!(
                "{}: {:.3} -> {:.3} -> {:.3} m over {pairs} paired seeds, {violations}/{comparisons} violations",
                p.name(),
                means[0],
                means[1],
                means[2]
            ),
        ));
    }
    outcome(&checks)
}

fn criterion_5() -> Outcome {
    let (pool, _) = generate_dataset(400, &[SceneKind::OpenSpace, SceneKind::CrossIntersection, SceneKind::RandomObstacles], &grid32(), 51).unwrap();
    let scenes: Vec<DatasetSample> = pool
        .into_iter()
        .filter(|s| {
            let grid = s.grid().unwrap();
            sample_goals(&grid, grid.config().ego_cell, 4).len() == 4
        })
        .take(200)
        .collect();
    let tp4 = Tpnet32::new(TpnetConfig::default(), 1).unwrap();
    let tp1 = Tpnet32::new(TpnetConfig { enable_multi_head: false, ..Default::default() }, 1).unwrap();
    let ts = Tsnet32::new(TsnetConfig::default(), 2).unwrap();
    let (l4, l1) = (Learned { tpnet: &tp4, tsnet: &ts }, Learned { tpnet: &tp1, tsnet: &ts });
    l4.infer(&scenes[0]).unwrap();
    l1.infer(&scenes[0]).unwrap();
    let (mut t4, mut t1) = (0.0, 0.0);
    for s in &scenes {
        t1 += time_learned(&l1, s, Timing::Wall).unwrap().time_s;
        t4 += time_learned(&l4, s, Timing::Wall).unwrap().time_s;
    }
    let learned_ratio = t4 / t1;
    let mut checks = vec![(
        scenes.len() == 200 && learned_ratio <= 1.5,
        format!("learned k=4 / k=1 time {learned_ratio:.2} <= 1.5 ({:.4}s vs {:.4}s mean)", t4 / 200.0, t1 / 200.0),
    )];
    // One goal means a rotating member of the scene's 4-goal set; always
    // taking the first (farthest) goal would charge the costliest plan.
    for p in Planner::ALL {
        let four = BenchConfig { n_goals: 4, seeds: vec![0], ..Default::default() };
        let farthest = BenchConfig { n_goals: 1, ..four.clone() };
        let (mut p1, mut p4, mut pf) = (0.0, 0.0, 0.0);
        for (i, s) in scenes.iter().enumerate() {
            let grid = s.grid().unwrap();
            let cfg = *grid.config();
            let t = Instant::now();
            let goals = sample_goals(&grid, cfg.ego_cell, 4);
            let detect = t.elapsed().as_secs_f64();
            let pc = PlannerConfig::for_grid(&cfg).with_seed(scene_seed(1, i));
            p1 += detect + p.plan(&grid, cfg.cell_center(cfg.ego_cell), cfg.cell_center(goals[i % 4]), &pc).unwrap().elapsed;
            p4 += time_planner(p, s, &four, i as u64).unwrap().time_s;
            pf += time_planner(p, s, &farthest, i as u64).unwrap().time_s;
        }
        checks.push((
            p4 >= 3.0 * p1,
            format!("{} 4 goals / 1 goal time {:.2} >= 3 (vs farthest goal only {:.2})", p.name(), p4 / p1, p4 / pf),
        ));
    }
    outcome(&checks)
}

/// Desk-scale proposal network shared by criteria 6 and 7.
struct LearnedSuite {
    train: Vec<DatasetSample>,
    held_out: Vec<DatasetSample>,
    tpnet: Tpnet32,
    head_totals: Vec<usize>,
    train_secs: f64,
}

fn desk_tpnet(multi_head: bool) -> TpnetConfig {
    TpnetConfig { base_channels: 8, enable_multi_head: multi_head, ..Default::default() }
}

fn train_desk(train: &[DatasetSample], config: &TpnetConfig) -> (Tpnet32, TpnetTrainingLog) {
    let mut optim = OptimState::proposal_default();
    let opts = TpnetTrainOptions { epochs: 400, batch_size: 32, steps_per_epoch: None, seed: 0 };
    train_tpnet::<f32>(train, config, &mut optim, &opts).unwrap()
}

fn learned_suite() -> &'static LearnedSuite {
    static SUITE: OnceLock<LearnedSuite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let kinds = [SceneKind::TJunction, SceneKind::CrossIntersection, SceneKind::Bifurcation, SceneKind::StraightCorridor];
        let (train, _) = generate_dataset(500, &kinds, &grid32(), 61).unwrap();
        let (held_out, _) = generate_dataset(50, &[SceneKind::TJunction, SceneKind::CrossIntersection], &grid32(), 62).unwrap();
        let t = Instant::now();
        let (tpnet, log) = train_desk(&train, &desk_tpnet(true));
        LearnedSuite { train, held_out, tpnet, head_totals: log.head_totals(), train_secs: t.elapsed().as_secs_f64() }
    })
}

fn spread_and_overlap(net: &Tpnet32, scenes: &[DatasetSample]) -> (f64, f64) {
    let mut spreads = Vec::new();
    let mut overlap = 0.0;
    for s in scenes {
        let ps = net.forward(&s.input).unwrap();
        spreads.push(diversity_metric(&ps, ps.config.ego_cell, 0.5));
        overlap += obstacle_overlap(&ps, &s.input.mask(0)).unwrap();
    }
    (median(spreads), overlap / scenes.len() as f64)
}

fn criterion_6() -> Outcome {
    let suite = learned_suite();
    let (spread, overlap) = spread_and_overlap(&suite.tpnet, &suite.held_out);
    let used = suite.head_totals.iter().filter(|c| **c > 0).count();
    let t = Instant::now();
    let (ablation, _) = train_desk(&suite.train, &desk_tpnet(false));
    let ablation_secs = t.elapsed().as_secs_f64();
    let (ablation_spread, _) = spread_and_overlap(&ablation, &suite.held_out);
    let secs = suite.train_secs + ablation_secs;
    outcome(&[
        (suite.train.len() >= 500, format!("{} training scenes, {} held out", suite.train.len(), suite.held_out.len())),
        (spread >= 60.0, format!("median bearing spread {spread:.1} deg >= 60")),
        (used >= 2, format!("chosen-head totals {:?} use {used} heads >= 2", suite.head_totals)),
        (overlap < 0.02, format!("obstacle overlap {overlap:.4} < 0.02")),
        (ablation_spread < 15.0, format!("single-head ablation spread {ablation_spread:.1} deg < 15")),
        (secs <= 7200.0, format!("training {secs:.0}s <= 7200s")),
    ])
}

fn criterion_7() -> Outcome {
    let suite = learned_suite();
    let config = TsnetConfig::default();
    let (train, skipped) = build_tsnet_samples(&suite.tpnet, &suite.train, &config, 71).unwrap();
    let (held_out, _) = build_tsnet_samples(&suite.tpnet, &suite.held_out, &config, 72).unwrap();
    if train.is_empty() || held_out.is_empty() {
        return outcome(&[(false, format!("no sampler ground truth ({skipped} heads skipped)"))]);
    }
    let mut optim = OptimState::sampler_default();
    let (ts, _) = train_tsnet::<f32>(&train, &config, &mut optim, &TsnetTrainOptions::default()).unwrap();
    let ade: f64 = held_out
        .iter()
        .map(|s| ade_cells(&ts.forward(&s.proposal, s.ego, &s.grid).unwrap(), &s.target, &s.grid).unwrap())
        .sum::<f64>()
        / held_out.len() as f64;
    let learned = Learned { tpnet: &suite.tpnet, tsnet: &ts };
    let (mut inside, mut total, mut outputs, mut broken) = (0, 0, 0, 0);
    for s in &suite.held_out {
        let (ps, trajectories) = learned.infer(s).unwrap();
        for (k, w) in trajectories.iter().enumerate() {
            outputs += 1;
            broken += w.validate(config.waypoints).is_err() as usize;
            for c in w.cells(&ps.config) {
                total += 1;
                inside += (ps.traversable(k)[ps.config.index(c)] >= config.region_gate) as usize;
            }
        }
    }
    let frac = inside as f64 / total.max(1) as f64;
    outcome(&[
        (ade < 3.0, format!("held-out ADE {ade:.2} cells < 3 ({} train / {} held-out pairs)", train.len(), held_out.len())),
        (frac >= 0.9, format!("{:.1}% of waypoints in R0 >= 0.1", 100.0 * frac)),
        (broken == 0, format!("{}/{outputs} outputs satisfy the length-T/[0,1] contract", outputs - broken)),
    ])
}

fn criterion_8() -> Outcome {
    let cfg = DatasetConfig::for_grid(GridConfig::with_size(16, 16));
    let kinds = [SceneKind::TJunction, SceneKind::Bifurcation];
    let gen = || generate_dataset(6, &kinds, &cfg, 81).unwrap().0;
    let (a, b) = (gen(), gen());
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.tpds"), dir.path().join("b.tpds"));
    write_dataset(&pa, &a).unwrap();
    write_dataset(&pb, &b).unwrap();
    let bytes = std::fs::read(&pa).unwrap();
    let datasets_identical = bytes == std::fs::read(&pb).unwrap();
    let mut back = read_dataset(&pa).unwrap();
    back.iter_mut().zip(&a).for_each(|(r, o)| r.meta = o.meta);
    let tpds_exact = back == a && encode_dataset(&back).unwrap() == bytes;

    let tp_opts = TpnetTrainOptions { epochs: 2, batch_size: 3, steps_per_epoch: None, seed: 5 };
    let tp_cfg = TpnetConfig { base_channels: 2, ..Default::default() };
    let train_tp = || train_tpnet::<f32>(&a, &tp_cfg, &mut OptimState::proposal_default(), &tp_opts).unwrap().0;
    let (t1, t2) = (train_tp(), train_tp());
    let ts_cfg = TsnetConfig { waypoints: 6, hidden_size: 8, channels: 3, ..Default::default() };
    let samples: Vec<TsnetSample> = a
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let grid = s.grid().unwrap();
            let c = *grid.config();
            let r0: Vec<f64> = s.labels[0].traversable.iter().map(|t| if *t { 1.0 } else { 0.0 }).collect();
            let target = make_tsnet_groundtruth(&r0, c.ego_cell, &grid, &ts_cfg, &groundtruth_planner(&c, i as u64)).ok()?;
            Some(TsnetSample { proposal: r0, grid: c, ego: c.normalize(c.ego_cell.0 as f64, c.ego_cell.1 as f64), target })
        })
        .collect();
    let ts_opts = TsnetTrainOptions { epochs: 2, batch_size: 3, steps_per_epoch: None, seed: 6 };
    let train_ts = || train_tsnet::<f32>(&samples, &ts_cfg, &mut OptimState::sampler_default(), &ts_opts).unwrap().0;
    let (s1, s2) = (train_ts(), train_ts());
    let checkpoints_identical = t1.to_bytes().unwrap() == t2.to_bytes().unwrap() && s1.to_bytes().unwrap() == s2.to_bytes().unwrap();
    let tp_back = Tpnet32::from_bytes(&t1.to_bytes().unwrap()).unwrap();
    let ts_back = Tsnet32::from_bytes(&s1.to_bytes().unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store32 = ParamStore::<f32>::new();
    store32.add("w", Tensor::from_fn(&[3, 4, 5], |_| rng.gen_range(-1.0f32..1.0))).unwrap();
    let edge = [0.0, -0.0, 1e-40, f32::MAX, f32::MIN_POSITIVE, 3.5, -2.25];
    store32.add("b", Tensor::from_fn(&[7], |i| edge[i])).unwrap();
    let store_back = decode_checkpoint::<f32>(&encode_checkpoint(&store32).unwrap()).unwrap();
    let tgwt_exact = tp_back.params() == t1.params()
        && tp_back.to_bytes().unwrap() == t1.to_bytes().unwrap()
        && ts_back.params() == s1.params()
        && ts_back.to_bytes().unwrap() == s1.to_bytes().unwrap()
        && store_back == store32
        && store_back.ids().all(|id| {
            store_back.get(id).data().iter().zip(store32.get(id).data()).all(|(x, y)| x.to_bits() == y.to_bits())
        });

    let (scenes, _) = generate_dataset(3, &SceneKind::ALL, &grid32(), 82).unwrap();
    let learned = Learned { tpnet: &t1, tsnet: &s1 };
    let bench = BenchConfig { seeds: vec![0, 1], max_iterations: 20_000, ..BenchConfig::deterministic() };
    let csv = || {
        let mut rows = bench_timing(&scenes, Some(&learned), &Planner::ALL, &bench).unwrap();
        rows.extend(bench_pathlength(&scenes, Some(&learned), &Planner::ALL, &Budget::DESK, &bench).unwrap());
        let mut buf = Vec::new();
        write_bench_csv_to(&rows, &mut buf).unwrap();
        buf
    };
    let csv_a = csv();
    let csv_identical = csv_a == csv();
    let rows = read_bench_csv_from(csv_a.as_slice()).unwrap();
    let mut again = Vec::new();
    write_bench_csv_to(&rows, &mut again).unwrap();
    outcome(&[
        (datasets_identical, "dataset files bit-identical".into()),
        (checkpoints_identical, "checkpoints bit-identical".into()),
        (csv_identical && again == csv_a, format!("bench CSVs bit-identical ({} rows)", rows.len())),
        (tpds_exact, "TPDS round trip exact".into()),
        (tgwt_exact, "TGWT round trips exact".into()),
    ])
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("gradient correctness", criterion_1),
        ("loss invariants", criterion_2),
        ("planner correctness", criterion_3),
        ("path length vs budget", criterion_4),
        ("compute time vs trajectory count", criterion_5),
        ("proposal diversity", criterion_6),
        ("sampler quality", criterion_7),
        ("determinism and formats", criterion_8),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {name}: {verdict} [{:.0}s] {}", t.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
