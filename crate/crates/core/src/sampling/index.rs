//! Bucketed nearest-neighbour search on the image plane.

use super::Pixel;

const BLOCK: i64 = 8;

/// Integer pixels with removal support. Nearest-neighbour queries order
/// candidates by `(squared distance, row, col)`.
pub(crate) struct PixelIndex {
    blocks_w: i64,
    blocks_h: i64,
    blocks: Vec<Vec<Pixel>>,
    live: std::collections::BTreeSet<Pixel>,
}

impl PixelIndex {
    pub fn new<'a>(width: u32, height: u32, pixels: impl IntoIterator<Item = &'a Pixel>) -> Self {
        let blocks_w = ((width as i64 + BLOCK - 1) / BLOCK).max(1);
        let blocks_h = ((height as i64 + BLOCK - 1) / BLOCK).max(1);
        let mut blocks = vec![Vec::new(); (blocks_w * blocks_h) as usize];
        let mut live = std::collections::BTreeSet::new();
        for &p in pixels {
            if live.insert(p) {
                assert!(p.col < width && p.row < height, "pixel {p} outside {width}x{height}");
                let b = (p.row as i64 / BLOCK) * blocks_w + p.col as i64 / BLOCK;
                blocks[b as usize].push(p);
            }
        }
        Self {
            blocks_w,
            blocks_h,
            blocks,
            live,
        }
    }

    pub fn remove(&mut self, p: &Pixel) -> bool {
        if !self.live.remove(p) {
            return false;
        }
        let b = self.block_of(p);
        self.blocks[b].retain(|q| q != p);
        true
    }

    fn block_of(&self, p: &Pixel) -> usize {
        ((p.row as i64 / BLOCK) * self.blocks_w + p.col as i64 / BLOCK) as usize
    }

    /// Remaining pixels in `(row, col)` order.
    pub fn iter(&self) -> impl Iterator<Item = &Pixel> {
        self.live.iter()
    }

    /// Nearest live pixel to `q` (which may itself be live; `q` is then returned).
    pub fn nearest(&self, q: &Pixel) -> Option<(Pixel, i64)> {
        if self.live.is_empty() {
            return None;
        }
        let (qb_c, qb_r) = (q.col as i64 / BLOCK, q.row as i64 / BLOCK);
        let max_ring = self.blocks_w + self.blocks_h + qb_c.abs() + qb_r.abs();
        let mut best: Option<(i64, Pixel)> = None;
        for ring in 0..=max_ring {
            if ring > 0 {
                let lower = (ring - 1) * BLOCK + 1;
                if let Some((d2, _)) = best {
                    if lower * lower > d2 {
                        break;
                    }
                }
            }
            for br in (qb_r - ring)..=(qb_r + ring) {
                if br < 0 || br >= self.blocks_h {
                    continue;
                }
                for bc in (qb_c - ring)..=(qb_c + ring) {
                    if bc < 0 || bc >= self.blocks_w {
                        continue;
                    }
                    if (br - qb_r).abs() != ring && (bc - qb_c).abs() != ring {
                        continue;
                    }
                    let idx = (br * self.blocks_w + bc) as usize;
                    for p in &self.blocks[idx] {
                        let d2 = q.dist2(p);
                        let better = match &best {
                            None => true,
                            Some((bd, bp)) => (d2, p.row, p.col) < (*bd, bp.row, bp.col),
                        };
                        if better {
                            best = Some((d2, *p));
                        }
                    }
                }
            }
        }
        best.map(|(d2, p)| (p, d2))
    }
}

/// Real-valued 2D points; nearest-neighbour queries by entry index with
/// ties going to the smaller index.
pub(crate) struct PointGrid<'a> {
    points: &'a [[f64; 2]],
    origin: [f64; 2],
    cell: f64,
    cols: i64,
    rows: i64,
    cells: Vec<Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [[f64; 2]], cell: f64) -> Self {
        assert!(cell > 0.0);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let cols = ((hi[0] - lo[0]) / cell).floor() as i64 + 1;
        let rows = ((hi[1] - lo[1]) / cell).floor() as i64 + 1;
        let mut cells = vec![Vec::new(); (cols * rows) as usize];
        for (i, p) in points.iter().enumerate() {
            let c = ((p[0] - lo[0]) / cell).floor() as i64;
            let r = ((p[1] - lo[1]) / cell).floor() as i64;
            cells[(r * cols + c) as usize].push(i);
        }
        Self {
            points,
            origin: lo,
            cell,
            cols,
            rows,
            cells,
        }
    }

    /// Nearest entry to entry `i` other than itself. With `skip_coincident`,
    /// entries at distance zero are ignored as well.
    pub fn nearest_other(&self, i: usize, skip_coincident: bool) -> Option<(usize, f64)> {
        let q = self.points[i];
        let qc = ((q[0] - self.origin[0]) / self.cell).floor() as i64;
        let qr = ((q[1] - self.origin[1]) / self.cell).floor() as i64;
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..=self.cols.max(self.rows) {
            if ring > 0 {
                let lower = (ring - 1) as f64 * self.cell;
                if let Some((d2, _)) = best {
                    if lower * lower > d2 {
                        break;
                    }
                }
            }
            for r in (qr - ring)..=(qr + ring) {
                if r < 0 || r >= self.rows {
                    continue;
                }
                for c in (qc - ring)..=(qc + ring) {
                    if c < 0 || c >= self.cols {
                        continue;
                    }
                    if (r - qr).abs() != ring && (c - qc).abs() != ring {
                        continue;
                    }
                    for &j in &self.cells[(r * self.cols + c) as usize] {
                        let p = self.points[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if j == i || (skip_coincident && d2 == 0.0) {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bd, bj)) => d2 < bd || (d2 == bd && j < bj),
                        };
                        if better {
                            best = Some((d2, j));
                        }
                    }
                }
            }
        }
        best.map(|(d2, j)| (j, d2.sqrt()))
    }
}
