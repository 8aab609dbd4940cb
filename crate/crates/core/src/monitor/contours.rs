use serde::{Deserialize, Serialize};

use crate::detect::Heatmap;
use crate::geo::{GeoTransform, Polygon};

/// Outer border and holes of one 8-connected foreground region, traced
/// along pixel edges in scene pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub exterior: Polygon,
    pub holes: Vec<Polygon>,
    pub pixel_count: usize,
}

impl Contour {
    /// Enclosed area in square pixels, holes excluded.
    pub fn area_px(&self) -> f64 {
        self.exterior.area() - self.holes.iter().map(Polygon::area).sum::<f64>()
    }

    pub fn hectares(&self, geo: &GeoTransform) -> f64 {
        self.area_px() * geo.pixel_hectares()
    }
}

/// Contours of the pixels scoring at least `threshold`.
pub fn extract_contours(h: &Heatmap, threshold: f32) -> Vec<Contour> {
    let mask: Vec<bool> = h.scores.iter().zip(&h.validity).map(|(&s, &v)| v && s >= threshold).collect();
    mask_contours(&mask, h.width, h.height)
        .into_iter()
        .map(|c| {
            let (dx, dy) = (h.origin[0] as f64, h.origin[1] as f64);
            Contour {
                exterior: c.exterior.translate(dx, dy),
                holes: c.holes.iter().map(|p| p.translate(dx, dy)).collect(),
                pixel_count: c.pixel_count,
            }
        })
        .collect()
}

// Edge directions in image coordinates (y down): +x, +y, -x, -y.
const STEP: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

fn left_of(d: usize) -> usize {
    (d + 3) % 4
}

/// Pixel whose boundary the directed edge leaving vertex `(x, y)` in
/// direction `d` belongs to; boundaries run clockwise on screen.
fn edge_owner(x: i64, y: i64, d: usize) -> (i64, i64) {
    match d {
        0 => (x, y),
        1 => (x - 1, y),
        2 => (x - 1, y - 1),
        _ => (x, y - 1),
    }
}

fn label_components(mask: &[bool], w: usize, h: usize) -> (Vec<usize>, Vec<usize>) {
    let mut labels = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || labels[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && labels[j] == usize::MAX {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Border following on a `w × h` binary mask with 8-connected foreground.
/// Each region yields one outer ring and one ring per hole, with vertices on
/// pixel corners, so ring areas reproduce pixel counts exactly. Where two
/// region pixels touch only diagonally the ring passes through the shared
/// corner twice.
pub fn mask_contours(mask: &[bool], w: usize, h: usize) -> Vec<Contour> {
    assert_eq!(mask.len(), w * h, "mask length must equal w * h");
    let (labels, sizes) = label_components(mask, w, h);
    let fg = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && mask[y as usize * w + x as usize];
    let vw = w + 1;
    let vid = |x: i64, y: i64| y as usize * vw + x as usize;
    let mut out_edges = vec![0u8; vw * (h + 1)];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !fg(x, y) {
                continue;
            }
            if !fg(x, y - 1) {
                out_edges[vid(x, y)] |= 1 << 0;
            }
            if !fg(x + 1, y) {
                out_edges[vid(x + 1, y)] |= 1 << 1;
            }
            if !fg(x, y + 1) {
                out_edges[vid(x + 1, y + 1)] |= 1 << 2;
            }
            if !fg(x - 1, y) {
                out_edges[vid(x, y + 1)] |= 1 << 3;
            }
        }
    }
    let mut used = vec![0u8; out_edges.len()];
    let mut exteriors: Vec<Option<Polygon>> = vec![None; sizes.len()];
    let mut holes: Vec<Vec<Polygon>> = vec![Vec::new(); sizes.len()];
    for v in 0..out_edges.len() {
        for d0 in 0..4 {
            if out_edges[v] & (1 << d0) == 0 || used[v] & (1 << d0) != 0 {
                continue;
            }
            let (x0, y0) = ((v % vw) as i64, (v / vw) as i64);
            let (ox, oy) = edge_owner(x0, y0, d0);
            let owner = labels[oy as usize * w + ox as usize];
            let mut ring = Vec::new();
            let (mut x, mut y, mut d) = (x0, y0, d0);
            loop {
                used[vid(x, y)] |= 1 << d;
                ring.push([x as f64, y as f64]);
                x += STEP[d].0;
                y += STEP[d].1;
                let bits = out_edges[vid(x, y)];
                let next = if bits & (1 << left_of(d)) != 0 {
                    left_of(d)
                } else {
                    bits.trailing_zeros() as usize
                };
                d = next;
                if (x, y) == (x0, y0) && d == d0 {
                    break;
                }
            }
            let poly = Polygon::new(drop_collinear(ring));
            if signed_area(&poly.exterior) > 0.0 {
                debug_assert!(exteriors[owner].is_none(), "region {owner} has two outer rings");
                exteriors[owner] = Some(poly);
            } else {
                holes[owner].push(poly);
            }
        }
    }
    exteriors
        .into_iter()
        .zip(holes)
        .zip(sizes)
        .map(|((ext, holes), pixel_count)| Contour {
            exterior: ext.expect("every region has an outer ring"),
            holes,
            pixel_count,
        })
        .collect()
}

fn drop_collinear(ring: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let n = ring.len();
    (0..n)
        .filter(|&i| {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) != 0.0
        })
        .map(|i| ring[i])
        .collect()
}

fn signed_area(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}
