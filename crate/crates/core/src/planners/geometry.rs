use crate::error::{Error, Result};
use crate::grid::{supercover, OccupancyGrid, Point2};

/// True iff the point lies in a free cell of the grid.
pub fn point_free(grid: &OccupancyGrid, p: Point2) -> bool {
    grid.config().cell_of(p).is_some_and(|c| grid.is_free(c))
}

/// True iff every cell on the supercover line from `a` to `b` is free.
pub fn segment_collision_free(grid: &OccupancyGrid, a: Point2, b: Point2) -> bool {
    let cfg = grid.config();
    supercover(cfg.to_grid(a), cfg.to_grid(b))
        .into_iter()
        .all(|(r, c)| cfg.contains(r, c) && grid.is_free((r as usize, c as usize)))
}

pub fn path_length(path: &[Point2]) -> f64 {
    path.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// `samples` points spaced uniformly by arc length along the polyline,
/// starting and ending exactly at its endpoints.
pub fn resample_polyline(path: &[Point2], samples: usize) -> Result<Vec<Point2>> {
    if path.is_empty() || samples < 2 {
        return Err(Error::Input(format!("cannot resample {} points into {samples}", path.len())));
    }
    let total = path_length(path);
    let mut out = Vec::with_capacity(samples);
    out.push(path[0]);
    let (mut seg, mut walked) = (0usize, 0.0);
    for i in 1..samples - 1 {
        let target = total * i as f64 / (samples - 1) as f64;
        while seg + 1 < path.len() - 1 && walked + path[seg].dist(path[seg + 1]) < target {
            walked += path[seg].dist(path[seg + 1]);
            seg += 1;
        }
        let Some(&next) = path.get(seg + 1) else {
            out.push(path[seg]);
            continue;
        };
        let len = path[seg].dist(next);
        let t = if len > 0.0 { ((target - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[seg].lerp(next, t));
    }
    out.push(*path.last().unwrap());
    Ok(out)
}

/// Clamped B-spline through the path vertices as control points (cubic,
/// or of degree `len − 1` for shorter paths), resampled at `samples` points
/// uniformly by arc length.
pub fn bspline_smooth(path: &[Point2], samples: usize) -> Result<Vec<Point2>> {
    if path.len() < 2 {
        return Err(Error::Input("B-spline smoothing needs at least 2 points".into()));
    }
    let n = path.len();
    let p = 3.min(n - 1);
    let spans = n - p;
    let mut knots = vec![0.0; p + 1];
    knots.extend((1..spans).map(|i| i as f64 / spans as f64));
    knots.extend(std::iter::repeat_n(1.0, p + 1));
    let dense = (16 * n).max(64);
    let curve: Vec<Point2> = (0..=dense).map(|i| de_boor(path, &knots, p, i as f64 / dense as f64)).collect();
    let mut out = resample_polyline(&curve, samples)?;
    out[0] = path[0];
    out[samples - 1] = path[n - 1];
    Ok(out)
}

fn de_boor(ctrl: &[Point2], knots: &[f64], p: usize, u: f64) -> Point2 {
    let n = ctrl.len();
    // span index k with knots[k] <= u < knots[k + 1], clamped for u = 1
    let mut k = p;
    while k < n - 1 && u >= knots[k + 1] {
        k += 1;
    }
    let mut d: Vec<Point2> = (0..=p).map(|j| ctrl[j + k - p]).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let i = j + k - p;
            let denom = knots[i + p + 1 - r] - knots[i];
            let a = if denom > 0.0 { (u - knots[i]) / denom } else { 0.0 };
            d[j] = d[j - 1].lerp(d[j], a);
        }
    }
    d[p]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellState, GridConfig};

    fn free_grid() -> OccupancyGrid {
        OccupancyGrid::filled(GridConfig::with_size(16, 16), CellState::Free).unwrap()
    }

    #[test]
    fn collision_rules() {
        let mut g = free_grid();
        let cfg = *g.config();
        let a = cfg.cell_center((2, 2));
        assert!(segment_collision_free(&g, a, a));
        g.set((3, 3), CellState::Occupied);
        assert!(!segment_collision_free(&g, cfg.cell_center((2, 2)), cfg.cell_center((4, 4))));
        // corner touch: (2,2)->(3,3) passes the corner shared with (2,3) and (3,2)
        let mut g2 = free_grid();
        g2.set((2, 3), CellState::Occupied);
        assert!(!segment_collision_free(&g2, cfg.cell_center((2, 2)), cfg.cell_center((3, 3))));
        let unknown = OccupancyGrid::filled(cfg, CellState::Unknown).unwrap();
        assert!(!segment_collision_free(&unknown, cfg.cell_center((1, 1)), cfg.cell_center((1, 5))));
        assert!(!segment_collision_free(&free_grid(), a, Point2::new(100.0, 0.0)));
    }

    #[test]
    fn lengths() {
        assert_eq!(path_length(&[Point2::new(1.0, 1.0)]), 0.0);
        let square = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0), Point2::new(0.0, 1.0)];
        assert!((path_length(&square) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_spline_is_straight() {
        let (a, b) = (Point2::new(0.0, 0.0), Point2::new(2.0, 1.0));
        let s = bspline_smooth(&[a, b], 5).unwrap();
        for (i, p) in s.iter().enumerate() {
            let q = a.lerp(b, i as f64 / 4.0);
            assert!(p.dist(q) < 1e-9, "{p:?} vs {q:?}");
        }
    }

    #[test]
    fn collinear_stays_collinear_and_zigzag_shortens() {
        let line: Vec<Point2> = (0..6).map(|i| Point2::new(i as f64 * 0.7, i as f64 * 0.35)).collect();
        for p in bspline_smooth(&line, 20).unwrap() {
            assert!((p.y - 0.5 * p.x).abs() < 1e-9);
        }
        let zig: Vec<Point2> = (0..8).map(|i| Point2::new(i as f64, if i % 2 == 0 { 0.0 } else { 1.0 })).collect();
        let s = bspline_smooth(&zig, 50).unwrap();
        assert!(path_length(&s) <= path_length(&zig));
        assert_eq!(s[0], zig[0]);
        assert_eq!(s[49], zig[7]);
    }

    #[test]
    fn resampling_is_uniform() {
        let path = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 3.0)];
        let r = resample_polyline(&path, 5).unwrap();
        for w in r.windows(2) {
            assert!((w[0].dist(w[1]) - 1.0).abs() < 1e-12);
        }
        assert!(resample_polyline(&path, 1).is_err());
    }
}
