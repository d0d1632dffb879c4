//! Binary PPM rendering of grids, proposals, planner paths and waypoints.

use trajgrid::grid::{CellState, OccupancyGrid, Point2};
use trajgrid::tpnet::ProposalSet;
use trajgrid::tsnet::WaypointSequence;

pub type Rgb = [u8; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    pub occupied: Rgb,
    pub free: Rgb,
    pub unknown: Rgb,
    pub history: Rgb,
    /// Proposal head `k` uses `heads[k % 4]`.
    pub heads: [Rgb; 4],
    pub path: Rgb,
    pub waypoint: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            occupied: [0, 0, 0],
            free: [255, 255, 255],
            unknown: [128, 128, 128],
            history: [40, 90, 220],
            heads: [[230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48]],
            path: [120, 0, 160],
            waypoint: [20, 20, 20],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSpec {
    /// Output pixels per grid cell.
    pub cell_size: usize,
    pub palette: Palette,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec { cell_size: 4, palette: Palette::default() }
    }
}

/// Everything drawn on top of the grid.
#[derive(Clone, Copy, Debug, Default)]
pub struct Layers<'a> {
    pub history: Option<&'a [bool]>,
    pub proposals: Option<&'a ProposalSet>,
    /// Metric polylines in the ego frame.
    pub plans: &'a [Vec<Point2>],
    pub waypoints: &'a [WaypointSequence],
}

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    fn line(&mut self, from: (f64, f64), to: (f64, f64), c: Rgb) {
        let steps = (to.0 - from.0).abs().max((to.1 - from.1).abs()).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (from.0 + t * (to.0 - from.0), from.1 + t * (to.1 - from.1));
            self.put(x.floor() as i64, y.floor() as i64, c);
        }
    }

    fn dot(&mut self, centre: (f64, f64), radius: i64, c: Rgb) {
        let (cx, cy) = (centre.0.floor() as i64, centre.1.floor() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                self.put(cx + dx, cy + dy, c);
            }
        }
    }
}

/// `base` blended toward `over` by `alpha`, rounded per channel.
pub fn blend(base: Rgb, over: Rgb, alpha: f64) -> Rgb {
    let a = alpha.clamp(0.0, 1.0);
    let mix = |b: u8, o: u8| (b as f64 * (1.0 - a) + o as f64 * a).round() as u8;
    [mix(base[0], over[0]), mix(base[1], over[1]), mix(base[2], over[2])]
}

/// P6 raster with layers composited grid, history, proposals (alpha = R⁰,
/// head by head), planner paths, then waypoints.
pub fn render_scene(grid: &OccupancyGrid, layers: &Layers<'_>, spec: &RenderSpec) -> Vec<u8> {
    let cfg = *grid.config();
    let cs = spec.cell_size.max(1);
    let pal = &spec.palette;
    let mut cells: Vec<Rgb> = grid
        .states()
        .iter()
        .map(|s| match s {
            CellState::Occupied => pal.occupied,
            CellState::Free => pal.free,
            CellState::Unknown => pal.unknown,
        })
        .collect();
    if let Some(h) = layers.history {
        for (c, on) in cells.iter_mut().zip(h) {
            if *on {
                *c = pal.history;
            }
        }
    }
    if let Some(ps) = layers.proposals {
        for k in 0..ps.num_heads() {
            let hue = pal.heads[k % pal.heads.len()];
            for (c, p) in cells.iter_mut().zip(ps.traversable(k)) {
                *c = blend(*c, hue, *p);
            }
        }
    }
    let (width, height) = (cfg.width * cs, cfg.height * cs);
    let mut canvas = Canvas { width, height, pixels: vec![[0; 3]; width * height] };
    for y in 0..height {
        for x in 0..width {
            canvas.pixels[y * width + x] = cells[(y / cs) * cfg.width + x / cs];
        }
    }
    // cell centres sit at integer grid coordinates
    let px = |row: f64, col: f64| ((col + 0.5) * cs as f64, (row + 0.5) * cs as f64);
    for plan in layers.plans {
        let pts: Vec<(f64, f64)> = plan.iter().map(|p| cfg.to_grid(*p)).map(|(r, c)| px(r, c)).collect();
        for w in pts.windows(2) {
            canvas.line(w[0], w[1], pal.path);
        }
    }
    let radius = (cs as i64 / 4).max(0);
    for seq in layers.waypoints {
        for (r, c) in seq.to_grid(&cfg) {
            canvas.dot(px(r, c), radius, pal.waypoint);
        }
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height * 3);
    for p in &canvas.pixels {
        out.extend_from_slice(p);
    }
    out
}
