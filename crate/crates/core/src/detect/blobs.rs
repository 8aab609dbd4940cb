use super::heatmap::Heatmap;
use super::mode::SensitivityMode;

/// Scale-space steps between `min_sigma` and `2 · min_sigma`.
const NUM_SCALES: usize = 5;
/// Minimum scale-normalized Hessian determinant for a maximum to count.
const DOH_THRESHOLD: f64 = 0.01;
/// Blobs overlapping more than this fraction of the smaller one are merged.
const OVERLAP: f64 = 0.5;
const TRUNCATE: f64 = 4.0;

/// A bright blob: center pixel, Gaussian scale and normalized response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub x: usize,
    pub y: usize,
    pub sigma: f64,
    pub response: f64,
}

fn kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let radius = (TRUNCATE * sigma).ceil() as i64;
    let s2 = sigma * sigma;
    let g: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * s2)).exp()).collect();
    let norm: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / norm).collect();
    let d1 = (-radius..=radius).zip(&g).map(|(x, v)| -(x as f64) / s2 * v).collect();
    let d2 = (-radius..=radius)
        .zip(&g)
        .map(|(x, v)| ((x * x) as f64 / (s2 * s2) - 1.0 / s2) * v)
        .collect();
    (g, d1, d2)
}

/// Correlates rows (`horizontal`) or columns with `k`, zero outside.
fn filter(src: &[f64], w: usize, h: usize, k: &[f64], horizontal: bool) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let off = t as i64 - r;
                let (sx, sy) = if horizontal { (x as i64 + off, y as i64) } else { (x as i64, y as i64 + off) };
                if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    acc += kv * src[sy as usize * w + sx as usize];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// `σ⁴ · det(H)` of the Gaussian-smoothed image at each scale, zeroed where
/// the Laplacian is non-negative so only bright blobs respond.
pub fn doh_scale_space(image: &[f32], w: usize, h: usize, sigmas: &[f64]) -> Vec<Vec<f64>> {
    let img: Vec<f64> = image.iter().map(|v| *v as f64).collect();
    sigmas
        .iter()
        .map(|&s| {
            let (g, d1, d2) = kernels(s);
            let gx = filter(&img, w, h, &g, true);
            let d1x = filter(&img, w, h, &d1, true);
            let d2x = filter(&img, w, h, &d2, true);
            let lxx = filter(&d2x, w, h, &g, false);
            let lyy = filter(&gx, w, h, &d2, false);
            let lxy = filter(&d1x, w, h, &d1, false);
            let s4 = s.powi(4);
            (0..w * h)
                .map(|i| {
                    if lxx[i] + lyy[i] < 0.0 {
                        s4 * (lxx[i] * lyy[i] - lxy[i] * lxy[i])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn circle_overlap(a: &Blob, b: &Blob) -> f64 {
    let (r1, r2) = (a.sigma * std::f64::consts::SQRT_2, b.sigma * std::f64::consts::SQRT_2);
    let d = ((a.x as f64 - b.x as f64).powi(2) + (a.y as f64 - b.y as f64).powi(2)).sqrt();
    let small = r1.min(r2);
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        return 1.0;
    }
    let a1 = r1 * r1 * ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = r2 * r2 * ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let a3 = 0.5 * ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0).sqrt();
    (a1 + a2 - a3) / (std::f64::consts::PI * small * small)
}

/// Zeroes scores below the mode's pixel threshold, then returns local maxima
/// (3×3×3 in space and scale) of the determinant-of-Hessian response over
/// `min_sigma ..= 2 · min_sigma`, with heavily overlapping blobs merged into
/// the larger one.
pub fn detect_blobs(heatmap: &Heatmap, mode: &SensitivityMode) -> Vec<Blob> {
    let (w, h) = (heatmap.width, heatmap.height);
    let image: Vec<f32> = heatmap
        .scores
        .iter()
        .map(|&s| if s < mode.pixel_threshold { 0.0 } else { s })
        .collect();
    if image.iter().all(|v| *v == 0.0) {
        return Vec::new();
    }
    let sigmas: Vec<f64> = (0..NUM_SCALES)
        .map(|k| mode.min_sigma * 2f64.powf(k as f64 / (NUM_SCALES - 1) as f64))
        .collect();
    let cube = doh_scale_space(&image, w, h, &sigmas);
    let mut blobs = Vec::new();
    for (si, layer) in cube.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let v = layer[y * w + x];
                if v <= DOH_THRESHOLD {
                    continue;
                }
                let here = (si * h + y) * w + x;
                let mut is_max = true;
                'nb: for sj in si.saturating_sub(1)..=(si + 1).min(NUM_SCALES - 1) {
                    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                            let u = cube[sj][ny * w + nx];
                            let there = (sj * h + ny) * w + nx;
                            // Plateaus keep their first element in scan order.
                            if u > v || (u == v && there < here) {
                                is_max = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_max {
                    blobs.push(Blob {
                        x,
                        y,
                        sigma: sigmas[si],
                        response: v,
                    });
                }
            }
        }
    }
    let mut alive = vec![true; blobs.len()];
    for i in 0..blobs.len() {
        for j in i + 1..blobs.len() {
            if !(alive[i] && alive[j]) || circle_overlap(&blobs[i], &blobs[j]) <= OVERLAP {
                continue;
            }
            if blobs[i].sigma > blobs[j].sigma {
                alive[j] = false;
            } else {
                alive[i] = false;
            }
        }
    }
    blobs.into_iter().zip(alive).filter(|(_, a)| *a).map(|(b, _)| b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::SensitivityModes;
    use crate::detect::ModeName;

    fn bump(w: usize, h: usize, centers: &[[f64; 2]], sigma: f64, peak: f32) -> Heatmap {
        let mut scores = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                for c in centers {
                    let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                    scores[y * w + x] += peak * (-d2 / (2.0 * sigma * sigma)).exp() as f32;
                }
            }
        }
        Heatmap::from_scores(w, h, scores).unwrap()
    }

    #[test]
    fn empty_heatmap_has_no_blobs() {
        let modes = SensitivityModes::default();
        assert!(detect_blobs(&Heatmap::zeros(32, 32), &modes.get(ModeName::High)).is_empty());
    }

    #[test]
    fn single_bump_found_at_center() {
        let modes = SensitivityModes::default();
        let blobs = detect_blobs(&bump(64, 64, &[[30.0, 34.0]], 6.0, 1.0), &modes.get(ModeName::Med));
        assert_eq!(blobs.len(), 1, "{blobs:?}");
        let b = blobs[0];
        assert!((b.x as f64 - 30.0).abs() <= 2.0 && (b.y as f64 - 34.0).abs() <= 2.0);
    }

    #[test]
    fn two_bumps_and_low_mode_threshold() {
        let modes = SensitivityModes::default();
        let two = bump(100, 60, &[[30.0, 30.0], [70.0, 30.0]], 6.0, 1.0);
        assert_eq!(detect_blobs(&two, &modes.get(ModeName::Med)).len(), 2);
        let dim = bump(100, 60, &[[30.0, 30.0], [70.0, 30.0]], 6.0, 0.7);
        assert!(detect_blobs(&dim, &modes.get(ModeName::Low)).is_empty());
    }

    #[test]
    fn overlap_fraction_bounds() {
        let b = |x, sigma| Blob { x, y: 0, sigma, response: 1.0 };
        assert_eq!(circle_overlap(&b(0, 2.0), &b(100, 2.0)), 0.0);
        assert_eq!(circle_overlap(&b(0, 5.0), &b(1, 1.0)), 1.0);
        let half = circle_overlap(&b(0, 3.0), &b(3, 3.0));
        assert!(half > 0.0 && half < 1.0);
    }
}
