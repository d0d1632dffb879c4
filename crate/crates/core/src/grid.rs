//! Bird's-eye-view occupancy representation.
//!
//! Grid coordinates are `(row, col)` with row 0 at the top; the robot sits at
//! `ego_cell` facing up-grid. Metric coordinates are in the ego frame: `x`
//! forward (towards row 0), `y` to the left (towards col 0). Continuous grid
//! coordinates put cell centres on integers, so cell `(r, c)` spans
//! `[r − ½, r + ½) × [c − ½, c + ½)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Integer grid cell `(row, col)`.
pub type Cell = (usize, usize);

/// A 2-D point in metres, ego frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        Point2::new(self.x + (o.x - self.x) * t, self.y + (o.y - self.y) * t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConfig {
    pub height: usize,
    pub width: usize,
    /// Metres per cell.
    pub resolution: f64,
    pub ego_cell: Cell,
    /// Height band (metres) whose points count as obstacles.
    pub z_min: f64,
    pub z_max: f64,
    /// Sensing radius in metres.
    pub range: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::with_size(64, 64)
    }
}

impl GridConfig {
    /// `height × width` cells at 0.2 m, ego four rows above the bottom edge
    /// and horizontally centred, range reaching the farthest corner.
    pub fn with_size(height: usize, width: usize) -> Self {
        let resolution = 0.2;
        let ego_cell = (height.saturating_sub(4), width / 2);
        let far_rows = ego_cell.0.max(height.saturating_sub(1 + ego_cell.0)) as f64;
        let far_cols = ego_cell.1.max(width.saturating_sub(1 + ego_cell.1)) as f64;
        GridConfig {
            height,
            width,
            resolution,
            ego_cell,
            z_min: 0.3,
            z_max: 2.0,
            range: far_rows.hypot(far_cols) * resolution + resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!("grid {}×{} smaller than 8×8", self.height, self.width)));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!("resolution {} must be positive", self.resolution)));
        }
        if self.ego_cell.0 >= self.height || self.ego_cell.1 >= self.width {
            return Err(Error::Config(format!("ego cell {:?} outside the grid", self.ego_cell)));
        }
        if !(self.z_min < self.z_max) {
            return Err(Error::Config(format!("height band [{}, {}] is empty", self.z_min, self.z_max)));
        }
        if !(self.range > 0.0) {
            return Err(Error::Config("sensing range must be positive".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.0 * self.width + cell.1
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    /// Continuous grid coordinates of a metric point.
    pub fn to_grid(&self, p: Point2) -> (f64, f64) {
        (self.ego_cell.0 as f64 - p.x / self.resolution, self.ego_cell.1 as f64 - p.y / self.resolution)
    }

    /// Metric point of continuous grid coordinates.
    pub fn to_metric(&self, row: f64, col: f64) -> Point2 {
        Point2::new((self.ego_cell.0 as f64 - row) * self.resolution, (self.ego_cell.1 as f64 - col) * self.resolution)
    }

    pub fn cell_center(&self, cell: Cell) -> Point2 {
        self.to_metric(cell.0 as f64, cell.1 as f64)
    }

    /// Cell containing a metric point, if inside the grid.
    pub fn cell_of(&self, p: Point2) -> Option<Cell> {
        let (r, c) = self.to_grid(p);
        let (r, c) = (r.round() as i64, c.round() as i64);
        self.contains(r, c).then_some((r as usize, c as usize))
    }

    /// Normalised `[0, 1]²` coordinates of continuous grid coordinates.
    pub fn normalize(&self, row: f64, col: f64) -> [f64; 2] {
        [row / (self.height - 1) as f64, col / (self.width - 1) as f64]
    }

    pub fn denormalize(&self, p: [f64; 2]) -> (f64, f64) {
        (p[0] * (self.height - 1) as f64, p[1] * (self.width - 1) as f64)
    }
}

/// Every cell touched by the segment between two continuous grid points,
/// including both side cells where the segment passes exactly through a
/// cell corner. Cells are returned in traversal order and may lie outside
/// any particular grid.
pub fn supercover(from: (f64, f64), to: (f64, f64)) -> Vec<(i64, i64)> {
    const TIE: f64 = 1e-9;
    // shift so that cell i spans [i, i + 1)
    let (u0, v0) = (from.0 + 0.5, from.1 + 0.5);
    let (u1, v1) = (to.0 + 0.5, to.1 + 0.5);
    let (mut i, mut j) = (u0.floor() as i64, v0.floor() as i64);
    let (ie, je) = (u1.floor() as i64, v1.floor() as i64);
    let (du, dv) = (u1 - u0, v1 - v0);
    let axis = |d: f64, start: f64, cell: i64| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((cell + 1) as f64 - start) / d, 1.0 / d)
        } else if d < 0.0 {
            (-1, (start - cell as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (si, mut ti, dti) = axis(du, u0, i);
    let (sj, mut tj, dtj) = axis(dv, v0, j);
    let mut cells = vec![(i, j)];
    let budget = (ie - i).abs() + (je - j).abs() + 2;
    for _ in 0..budget {
        if (i, j) == (ie, je) {
            break;
        }
        if (ti - tj).abs() < TIE {
            cells.push((i + si, j));
            cells.push((i, j + sj));
            i += si;
            j += sj;
            ti += dti;
            tj += dtj;
        } else if ti < tj {
            i += si;
            ti += dti;
        } else {
            j += sj;
            tj += dtj;
        }
        cells.push((i, j));
    }
    cells
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellState {
    Occupied,
    Free,
    Unknown,
}

/// Three mutually exclusive, jointly exhaustive masks, stored as one state
/// per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    config: GridConfig,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn filled(config: GridConfig, state: CellState) -> Result<Self> {
        config.validate()?;
        Ok(OccupancyGrid { config, cells: vec![state; config.cells()] })
    }

    pub fn from_states(config: GridConfig, cells: Vec<CellState>) -> Result<Self> {
        config.validate()?;
        if cells.len() != config.cells() {
            return Err(Error::Dimension(format!("{} cells for a {}×{} grid", cells.len(), config.height, config.width)));
        }
        Ok(OccupancyGrid { config, cells })
    }

    /// Builds a grid from the occupied/free/unknown masks, rejecting cells
    /// where the masks are not one-hot.
    pub fn from_masks(config: GridConfig, occupied: &[bool], free: &[bool], unknown: &[bool]) -> Result<Self> {
        config.validate()?;
        let n = config.cells();
        if occupied.len() != n || free.len() != n || unknown.len() != n {
            return Err(Error::Dimension("mask sizes differ from the grid".into()));
        }
        let cells = (0..n)
            .map(|i| match (occupied[i], free[i], unknown[i]) {
                (true, false, false) => Ok(CellState::Occupied),
                (false, true, false) => Ok(CellState::Free),
                (false, false, true) => Ok(CellState::Unknown),
                _ => Err(Error::Data(format!("cell {i} is not exactly one of occupied/free/unknown"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OccupancyGrid { config, cells })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn states(&self) -> &[CellState] {
        &self.cells
    }

    pub fn state(&self, cell: Cell) -> CellState {
        self.cells[self.config.index(cell)]
    }

    pub fn set(&mut self, cell: Cell, state: CellState) {
        let i = self.config.index(cell);
        self.cells[i] = state;
    }

    /// State at signed coordinates; outside the grid reads as unknown.
    pub fn state_at(&self, row: i64, col: i64) -> CellState {
        if self.config.contains(row, col) {
            self.cells[row as usize * self.config.width + col as usize]
        } else {
            CellState::Unknown
        }
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.state(cell) == CellState::Free
    }

    pub fn mask(&self, state: CellState) -> Vec<bool> {
        self.cells.iter().map(|s| *s == state).collect()
    }

    pub fn occupied_mask(&self) -> Vec<bool> {
        self.mask(CellState::Occupied)
    }

    pub fn free_mask(&self) -> Vec<bool> {
        self.mask(CellState::Free)
    }

    pub fn unknown_mask(&self) -> Vec<bool> {
        self.mask(CellState::Unknown)
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|s| **s == state).count()
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let w = self.config.width;
        self.cells.iter().enumerate().filter(|(_, s)| **s == CellState::Free).map(|(i, _)| (i / w, i % w)).collect()
    }
}

/// Points beyond the sensing range are ignored; points outside the grid
/// clear free space along their ray but mark nothing occupied.
pub fn project_pointcloud(points: &[[f64; 3]], config: &GridConfig) -> Result<OccupancyGrid> {
    config.validate()?;
    if let Some(p) = points.iter().find(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Input(format!("non-finite point {p:?}")));
    }
    let n = config.cells();
    let mut occupied = vec![false; n];
    let mut free = vec![false; n];
    let ego = (config.ego_cell.0 as f64, config.ego_cell.1 as f64);
    for p in points {
        let metric = Point2::new(p[0], p[1]);
        if metric.dist(Point2::default()) > config.range {
            continue;
        }
        let (r, c) = config.to_grid(metric);
        let target = (r.round(), c.round());
        let obstacle = p[2] >= config.z_min && p[2] <= config.z_max;
        let end = (target.0 as i64, target.1 as i64);
        for (row, col) in supercover(ego, target) {
            if !config.contains(row, col) || (obstacle && (row, col) == end) {
                continue;
            }
            free[row as usize * config.width + col as usize] = true;
        }
        if obstacle && config.contains(end.0, end.1) {
            occupied[end.0 as usize * config.width + end.1 as usize] = true;
        }
    }
    let cells = (0..n)
        .map(|i| {
            if occupied[i] {
                CellState::Occupied
            } else if free[i] {
                CellState::Free
            } else {
                CellState::Unknown
            }
        })
        .collect();
    OccupancyGrid::from_states(*config, cells)
}

/// Parses whitespace-separated `x y z` lines; `#` starts a comment line.
pub fn parse_pointcloud(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?;
        match vals.as_slice() {
            [x, y, z] => points.push([*x, *y, *z]),
            _ => return Err(Error::Input(format!("line {}: expected 3 values, got {}", lineno + 1, vals.len()))),
        }
    }
    Ok(points)
}

pub fn read_pointcloud(path: impl AsRef<Path>) -> Result<Vec<[f64; 3]>> {
    parse_pointcloud(&fs::read_to_string(path)?)
}

/// Planar pose in the ego frame: metres and radians.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading }
    }
}

/// Past ego poses and their raster.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackHistory {
    pub poses: Vec<Pose>,
    pub raster: Vec<bool>,
}

impl TrackHistory {
    pub fn cell_count(&self) -> usize {
        self.raster.iter().filter(|v| **v).count()
    }
}

/// Number of history poses the scene generator lays down.
pub const DEFAULT_HISTORY_LEN: usize = 10;

/// `count` poses along the ego heading ending at the origin, `stride` metres
/// apart, oldest first.
pub fn straight_history(count: usize, stride: f64) -> Vec<Pose> {
    (0..count).map(|i| Pose::new(-((count - 1 - i) as f64) * stride, 0.0, 0.0)).collect()
}

/// Marks every cell a pose falls in and the supercover line between
/// consecutive poses, clipped to the grid.
pub fn rasterize_history(poses: &[Pose], config: &GridConfig) -> Result<TrackHistory> {
    config.validate()?;
    let mut raster = vec![false; config.cells()];
    let mut mark = |cells: Vec<(i64, i64)>| {
        for (r, c) in cells {
            if config.contains(r, c) {
                raster[r as usize * config.width + c as usize] = true;
            }
        }
    };
    let grid_pts: Vec<(f64, f64)> = poses.iter().map(|p| config.to_grid(Point2::new(p.x, p.y))).collect();
    for p in &grid_pts {
        mark(vec![(p.0.round() as i64, p.1.round() as i64)]);
    }
    for w in grid_pts.windows(2) {
        let a = (w[0].0.round(), w[0].1.round());
        let b = (w[1].0.round(), w[1].1.round());
        mark(supercover(a, b));
    }
    Ok(TrackHistory { poses: poses.to_vec(), raster })
}

/// Four-channel network input `(occupied, free, unknown, history)`,
/// channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkInput {
    pub channels: Vec<f32>,
    pub config: GridConfig,
}

impl NetworkInput {
    pub const CHANNELS: usize = 4;

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.config.cells();
        &self.channels[c * n..(c + 1) * n]
    }

    pub fn mask(&self, c: usize) -> Vec<bool> {
        self.channel(c).iter().map(|v| *v != 0.0).collect()
    }

    /// Recovers the occupancy grid from channels 0..3.
    pub fn grid(&self) -> Result<OccupancyGrid> {
        OccupancyGrid::from_masks(self.config, &self.mask(0), &self.mask(1), &self.mask(2))
    }

    pub fn history_mask(&self) -> Vec<bool> {
        self.mask(3)
    }
}

pub fn assemble_input(grid: &OccupancyGrid, history: &TrackHistory) -> Result<NetworkInput> {
    let n = grid.config().cells();
    if history.raster.len() != n {
        return Err(Error::Dimension(format!("history raster has {} cells, grid has {n}", history.raster.len())));
    }
    let mut channels = vec![0.0f32; NetworkInput::CHANNELS * n];
    for (i, s) in grid.states().iter().enumerate() {
        let c = match s {
            CellState::Occupied => 0,
            CellState::Free => 1,
            CellState::Unknown => 2,
        };
        channels[c * n + i] = 1.0;
    }
    for (i, h) in history.raster.iter().enumerate() {
        if *h {
            channels[3 * n + i] = 1.0;
        }
    }
    Ok(NetworkInput { channels, config: *grid.config() })
}
