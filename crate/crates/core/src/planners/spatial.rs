use crate::grid::{GridConfig, Point2};

/// Uniform bucket grid over the metric extent of an occupancy grid.
pub(crate) struct SpatialHash {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<(usize, Point2)>>,
    len: usize,
}

impl SpatialHash {
    pub(crate) fn new(grid: &GridConfig, cell: f64) -> Self {
        let a = grid.to_metric(-0.5, -0.5);
        let b = grid.to_metric(grid.height as f64 - 0.5, grid.width as f64 - 0.5);
        let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
        let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
        let nx = (((x1 - x0) / cell).ceil() as usize).max(1);
        let ny = (((y1 - y0) / cell).ceil() as usize).max(1);
        SpatialHash { x0, y0, cell, nx, ny, buckets: vec![Vec::new(); nx * ny], len: 0 }
    }

    fn bucket(&self, p: Point2) -> (usize, usize) {
        let bx = ((p.x - self.x0) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let by = ((p.y - self.y0) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (bx, by)
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn insert(&mut self, id: usize, p: Point2) {
        let (bx, by) = self.bucket(p);
        self.buckets[bx * self.ny + by].push((id, p));
        self.len += 1;
    }

    pub(crate) fn remove(&mut self, id: usize, p: Point2) {
        let (bx, by) = self.bucket(p);
        let b = &mut self.buckets[bx * self.ny + by];
        if let Some(i) = b.iter().position(|(j, _)| *j == id) {
            b.swap_remove(i);
            self.len -= 1;
        }
    }

    /// Closest stored point; ties go to the smaller id.
    pub(crate) fn nearest(&self, q: Point2) -> Option<(usize, f64)> {
        if self.len == 0 {
            return None;
        }
        let (bx, by) = self.bucket(q);
        let mut best: Option<(usize, f64)> = None;
        for k in 0..=self.nx.max(self.ny) {
            let (lo_x, hi_x) = (bx as i64 - k as i64, bx as i64 + k as i64);
            let (lo_y, hi_y) = (by as i64 - k as i64, by as i64 + k as i64);
            for x in lo_x.max(0)..=hi_x.min(self.nx as i64 - 1) {
                for y in lo_y.max(0)..=hi_y.min(self.ny as i64 - 1) {
                    if x != lo_x && x != hi_x && y != lo_y && y != hi_y {
                        continue;
                    }
                    for &(id, p) in &self.buckets[x as usize * self.ny + y as usize] {
                        let d = p.dist(q);
                        if best.is_none_or(|(bi, bd)| d < bd || (d == bd && id < bi)) {
                            best = Some((id, d));
                        }
                    }
                }
            }
            if let Some((_, d)) = best {
                if d <= k as f64 * self.cell {
                    break;
                }
            }
        }
        best
    }

    /// Ids of stored points within `r` of `q`, sorted by id.
    pub(crate) fn within(&self, q: Point2, r: f64) -> Vec<usize> {
        let lo = self.bucket(Point2::new(q.x - r, q.y - r));
        let hi = self.bucket(Point2::new(q.x + r, q.y + r));
        let mut out = Vec::new();
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                out.extend(self.buckets[x * self.ny + y].iter().filter(|(_, p)| p.dist(q) <= r).map(|(id, _)| *id));
            }
        }
        out.sort_unstable();
        out
    }
}
