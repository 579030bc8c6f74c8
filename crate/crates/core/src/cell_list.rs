//! Uniform-bin spatial hashing for short-range pair searches.

use crate::geometry::Vec2;

/// Bins cap: beyond this many bins per particle the bin size is enlarged, so a
/// few far outliers cannot blow up memory.
const MAX_BINS_PER_POINT: usize = 4;

pub struct CellList {
    origin: Vec2,
    cell_size: f64,
    nx: usize,
    ny: usize,
    /// `cell_start[c]..cell_start[c + 1]` indexes `sorted` for bin `c`.
    cell_start: Vec<usize>,
    sorted: Vec<usize>,
}

impl CellList {
    /// `cell_size` is a lower bound; the actual size may be larger.
    pub fn new(positions: &[Vec2], cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && cell_size.is_finite());
        let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
        for p in positions {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if positions.is_empty() {
            lo = Vec2::ZERO;
            hi = Vec2::ZERO;
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y);
        let max_bins = MAX_BINS_PER_POINT * positions.len() + 16;
        let mut size = cell_size;
        let bins_for = |s: f64| {
            let nx = ((hi.x - lo.x) / s).floor() as usize + 1;
            let ny = ((hi.y - lo.y) / s).floor() as usize + 1;
            (nx, ny)
        };
        let (mut nx, mut ny) = bins_for(size);
        while nx.saturating_mul(ny) > max_bins {
            size = size.max(span / (max_bins as f64).sqrt()) * 1.5;
            (nx, ny) = bins_for(size);
        }

        let bin_of = |p: &Vec2| {
            let cx = (((p.x - lo.x) / size) as usize).min(nx - 1);
            let cy = (((p.y - lo.y) / size) as usize).min(ny - 1);
            cy * nx + cx
        };
        let mut counts = vec![0usize; nx * ny + 1];
        for p in positions {
            counts[bin_of(p) + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut sorted = vec![0usize; positions.len()];
        for (i, p) in positions.iter().enumerate() {
            let b = bin_of(p);
            sorted[fill[b]] = i;
            fill[b] += 1;
        }
        CellList {
            origin: lo,
            cell_size: size,
            nx,
            ny,
            cell_start: counts,
            sorted,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Calls `visit(j)` for every indexed point that may lie within `radius`
    /// of `center` (a superset; callers filter by distance). Visiting order is
    /// deterministic.
    pub fn for_each_candidate(&self, center: Vec2, radius: f64, mut visit: impl FnMut(usize)) {
        let to_bin = |v: f64, o: f64, n: usize| -> (usize, usize) {
            let lo = ((v - radius - o) / self.cell_size).floor();
            let hi = ((v + radius - o) / self.cell_size).floor();
            let clamp = |x: f64| x.max(0.0).min((n - 1) as f64) as usize;
            if hi < 0.0 || lo > (n - 1) as f64 {
                (1, 0)
            } else {
                (clamp(lo), clamp(hi))
            }
        };
        let (x0, x1) = to_bin(center.x, self.origin.x, self.nx);
        let (y0, y1) = to_bin(center.y, self.origin.y, self.ny);
        if x0 > x1 || y0 > y1 {
            return;
        }
        for cy in y0..=y1 {
            let row = cy * self.nx;
            let (start, end) = (self.cell_start[row + x0], self.cell_start[row + x1 + 1]);
            for &j in &self.sorted[start..end] {
                visit(j);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_exactly_the_brute_force_neighbors() {
        let pts: Vec<Vec2> = (0..400)
            .map(|i| {
                let t = i as f64;
                Vec2::new((t * 0.618).fract() * 10.0 - 5.0, (t * 0.414).fract() * 6.0)
            })
            .chain([Vec2::new(1e6, -1e6)])
            .collect();
        let list = CellList::new(&pts, 0.7);
        for (i, &c) in pts.iter().enumerate().step_by(7) {
            let r = 0.9;
            let mut fast = Vec::new();
            list.for_each_candidate(c, r, |j| {
                if (pts[j] - c).norm() < r {
                    fast.push(j)
                }
            });
            fast.sort_unstable();
            let slow: Vec<usize> = (0..pts.len()).filter(|&j| (pts[j] - c).norm() < r).collect();
            assert_eq!(fast, slow, "point {i}");
        }
    }
}
