use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajgrid::grid::{CellState, GridConfig, OccupancyGrid, Point2};
use trajgrid::planners::{
    dijkstra_shortest, informed_rrt_star, path_length, rrt_star, segment_collision_free, Clock, PlanResult, Planner,
    PlannerConfig, Termination, TerminationReason,
};

fn open(size: usize) -> OccupancyGrid {
    OccupancyGrid::filled(GridConfig::with_size(size, size), CellState::Free).unwrap()
}

/// Random rectangular blocks, keeping the start and goal cells clear.
fn cluttered(size: usize, seed: u64, keep: &[(usize, usize)]) -> OccupancyGrid {
    let mut g = open(size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..size / 4 {
        let (r, c) = (rng.gen_range(0..size - 3), rng.gen_range(0..size - 3));
        let (h, w) = (rng.gen_range(1..4), rng.gen_range(1..6));
        for rr in r..(r + h).min(size) {
            for cc in c..(c + w).min(size) {
                if keep.iter().all(|k| k.0.abs_diff(rr) > 1 || k.1.abs_diff(cc) > 1) {
                    g.set((rr, cc), CellState::Occupied);
                }
            }
        }
    }
    g
}

fn check_invariants(grid: &OccupancyGrid, start: Point2, goal: Point2, cfg: &PlannerConfig, r: &PlanResult) {
    assert!(r.success());
    assert_eq!(r.path[0], start);
    assert!(r.path.last().unwrap().dist(goal) <= cfg.goal_tolerance);
    for w in r.path.windows(2) {
        assert!(segment_collision_free(grid, w[0], w[1]), "segment {:?} collides", w);
    }
    assert!((path_length(&r.path) - r.length).abs() < 1e-9);
    assert!(r.length >= start.dist(goal) - 1e-12);
    assert!(r.cost_trace.windows(2).all(|w| w[1].1 <= w[0].1));
}

#[test]
fn rrt_star_converges_on_open_grid() {
    let g = open(64);
    let (start, goal) = (Point2::new(0.0, 0.0), Point2::new(10.0, 0.0));
    let mut total = 0.0;
    for seed in 0..20 {
        let cfg = PlannerConfig::for_grid(g.config())
            .with_seed(seed)
            .with_budget(Termination::BestWithinBudget, None);
        let cfg = PlannerConfig { max_iterations: 4000, ..cfg };
        let r = rrt_star(&g, start, goal, &cfg).unwrap();
        check_invariants(&g, start, goal, &cfg, &r);
        assert!(r.length >= 10.0 && r.length <= 11.0, "seed {seed}: {}", r.length);
        total += r.length;
    }
    assert!(total / 20.0 <= 11.0);
}

#[test]
fn goal_in_obstacle_fails() {
    let mut g = open(32);
    let cfg = *g.config();
    g.set((5, 16), CellState::Occupied);
    let goal = cfg.cell_center((5, 16));
    let pc = PlannerConfig { max_iterations: 500, ..PlannerConfig::for_grid(&cfg) };
    for p in Planner::ALL {
        let r = p.plan(&g, Point2::new(0.0, 0.0), goal, &pc).unwrap();
        assert_eq!(r.termination_reason, TerminationReason::Failure);
        assert!(r.path.is_empty());
    }
}

#[test]
fn start_outside_free_space_is_an_error() {
    let g = OccupancyGrid::filled(GridConfig::with_size(16, 16), CellState::Unknown).unwrap();
    let cfg = PlannerConfig::for_grid(g.config());
    assert!(rrt_star(&g, Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), &cfg).is_err());
}

#[test]
fn informed_matches_rrt_until_first_solution() {
    let g = cluttered(64, 4, &[(60, 32), (20, 32)]);
    let cfgg = *g.config();
    let (start, goal) = (Point2::new(0.0, 0.0), cfgg.cell_center((20, 32)));
    for seed in 0..5 {
        let cfg = PlannerConfig { max_iterations: 20_000, ..PlannerConfig::for_grid(&cfgg).with_seed(seed) };
        let a = rrt_star(&g, start, goal, &cfg).unwrap();
        let b = informed_rrt_star(&g, start, goal, &cfg).unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn informed_samples_stay_in_ellipse() {
    let g = cluttered(64, 9, &[(60, 32), (15, 20)]);
    let cfgg = *g.config();
    let (start, goal) = (Point2::new(0.0, 0.0), cfgg.cell_center((15, 20)));
    let cfg = PlannerConfig { max_iterations: 6000, ..PlannerConfig::for_grid(&cfgg) }
        .with_budget(Termination::BestWithinBudget, None);
    let r = informed_rrt_star(&g, start, goal, &cfg).unwrap();
    check_invariants(&g, start, goal, &cfg, &r);
    assert!(!r.informed_samples.is_empty());
    for s in &r.informed_samples {
        assert!(s.point.dist(start) + s.point.dist(goal) <= s.best_cost + 1e-9);
    }
}

#[test]
fn bit_star_first_batch_is_near_straight() {
    let g = open(64);
    let (start, goal) = (Point2::new(0.0, 0.0), Point2::new(10.0, 0.0));
    for seed in 0..20 {
        let cfg = PlannerConfig::for_grid(g.config()).with_seed(seed);
        let r = trajgrid::planners::bit_star(&g, start, goal, &cfg).unwrap();
        check_invariants(&g, start, goal, &cfg, &r);
        assert!(r.length <= 1.05 * 10.0, "seed {seed}: {}", r.length);
    }
}

#[test]
fn all_planners_valid_and_deterministic_on_clutter() {
    for scene in 0..6u64 {
        let g = cluttered(32, scene, &[(28, 16), (4, 16)]);
        let cfgg = *g.config();
        let (start, goal) = (Point2::new(0.0, 0.0), cfgg.cell_center((4, 16)));
        let oracle = dijkstra_shortest(&g, start, goal).unwrap();
        for p in Planner::ALL {
            let cfg = PlannerConfig { max_iterations: 3000, ..PlannerConfig::for_grid(&cfgg).with_seed(scene) }
                .with_budget(Termination::BestWithinBudget, None);
            let r = p.plan(&g, start, goal, &cfg).unwrap();
            if !oracle.success() {
                assert!(!r.success());
                continue;
            }
            check_invariants(&g, start, goal, &cfg, &r);
            assert_eq!(r.path, p.plan(&g, start, goal, &cfg).unwrap().path);
        }
    }
}

#[test]
fn virtual_clock_budget_is_reproducible() {
    let g = cluttered(32, 2, &[(28, 16), (4, 16)]);
    let cfgg = *g.config();
    let cfg = PlannerConfig {
        clock: Clock::Virtual { seconds_per_iteration: 1e-4 },
        ..PlannerConfig::for_grid(&cfgg).with_budget(Termination::BestWithinBudget, Some(0.2))
    };
    let a = rrt_star(&g, Point2::new(0.0, 0.0), cfgg.cell_center((4, 16)), &cfg).unwrap();
    let b = rrt_star(&g, Point2::new(0.0, 0.0), cfgg.cell_center((4, 16)), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iterations, 2000);
    assert!((a.elapsed - 0.2).abs() < 1e-12);
}

fn cluttered_suite() -> Vec<(OccupancyGrid, Point2, Point2)> {
    (0..5u64)
        .map(|scene| {
            let goal = (8 + 2 * scene as usize, 14 + 6 * scene as usize);
            let g = cluttered(64, 100 + scene, &[(60, 32), goal]);
            let goal = g.config().cell_center(goal);
            (g, Point2::new(0.0, 0.0), goal)
        })
        .filter(|(g, s, t)| dijkstra_shortest(g, *s, *t).unwrap().success())
        .collect()
}

#[test]
fn informed_is_no_longer_than_rrt_star() {
    let suite = cluttered_suite();
    let (mut rrt, mut inf) = (0.0, 0.0);
    for seed in 0..50u64 {
        let (g, s, t) = &suite[seed as usize % suite.len()];
        let cfg = PlannerConfig::for_grid(g.config())
            .with_seed(seed)
            .with_budget(Termination::BestWithinBudget, Some(0.5));
        rrt += rrt_star(g, *s, *t, &cfg).unwrap().length;
        inf += informed_rrt_star(g, *s, *t, &cfg).unwrap().length;
    }
    assert!(inf <= rrt, "informed mean {} vs rrt* mean {}", inf / 50.0, rrt / 50.0);
}

#[test]
fn bit_star_finds_first_solution_sooner() {
    let suite = cluttered_suite();
    let (mut rrt, mut bit) = (0.0, 0.0);
    for seed in 0..50u64 {
        let (g, s, t) = &suite[seed as usize % suite.len()];
        let cfg = PlannerConfig::for_grid(g.config()).with_seed(seed);
        rrt += rrt_star(g, *s, *t, &cfg).unwrap().first_solution_time.unwrap();
        bit += trajgrid::planners::bit_star(g, *s, *t, &cfg).unwrap().first_solution_time.unwrap();
    }
    assert!(bit <= rrt, "bit* {bit} s vs rrt* {rrt} s");
}
