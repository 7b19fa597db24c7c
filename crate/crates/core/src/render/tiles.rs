use super::ProjectedSplat;

pub const TILE_SIZE: usize = 16;

/// Per-tile splat lists, each sorted front to back by `(depth, index)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TileBinning {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileBinning {
    pub fn build(projected: &[Option<ProjectedSplat>], width: usize, height: usize) -> Self {
        let tiles_x = width.div_ceil(TILE_SIZE);
        let tiles_y = height.div_ceil(TILE_SIZE);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for (i, p) in projected.iter().enumerate() {
            let Some(p) = p else { continue };
            let Some((x0, x1, y0, y1)) = pixel_range(p, width, height) else {
                continue;
            };
            for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
                for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                    lists[ty * tiles_x + tx].push(i as u32);
                }
            }
        }
        for list in &mut lists {
            list.sort_by(|&a, &b| {
                let da = projected[a as usize].as_ref().map_or(0.0, |p| p.depth);
                let db = projected[b as usize].as_ref().map_or(0.0, |p| p.depth);
                da.total_cmp(&db).then(a.cmp(&b))
            });
        }
        Self { tiles_x, tiles_y, lists }
    }

    pub fn tile_count(&self) -> usize {
        self.lists.len()
    }

    /// Pixel bounds `[x0, x1) × [y0, y1)` of tile `t`, clipped to the image.
    pub fn tile_bounds(&self, t: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        (
            tx * TILE_SIZE,
            ((tx + 1) * TILE_SIZE).min(width),
            ty * TILE_SIZE,
            ((ty + 1) * TILE_SIZE).min(height),
        )
    }
}

/// Inclusive range of pixels whose squares overlap the splat's extent box.
pub(crate) fn pixel_range(p: &ProjectedSplat, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
    if width == 0 || height == 0 {
        return None;
    }
    let axis = |m: f64, e: f64, n: usize| -> Option<(usize, usize)> {
        let lo = (m - e).floor().max(0.0);
        let hi = ((m + e).ceil() - 1.0).min(n as f64 - 1.0);
        if lo.is_nan() || hi.is_nan() || lo > hi {
            None
        } else {
            Some((lo as usize, hi as usize))
        }
    };
    let (x0, x1) = axis(p.mean[0], p.extent[0], width)?;
    let (y0, y1) = axis(p.mean[1], p.extent[1], height)?;
    Some((x0, x1, y0, y1))
}
