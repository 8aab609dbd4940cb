use proptest::prelude::*;
use wastemap_core::detect::{
    average_timesteps, candidate_id, cross_validate, detect_blobs, CandidateSite, Heatmap, ModeName, PatchScoreGrid, SensitivityModes,
    SiteStatus, GRID_STRIDE,
};
use wastemap_core::geo::YearMonth;

/// Gaussian bumps of the given (center, sigma, peak) on a zero field.
fn bumps(w: usize, h: usize, spec: &[([f64; 2], f64, f32)]) -> Heatmap {
    let mut scores = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            for (c, sigma, peak) in spec {
                let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                scores[y * w + x] += peak * (-d2 / (2.0 * sigma * sigma)).exp() as f32;
            }
        }
    }
    for s in scores.iter_mut() {
        *s = s.min(1.0);
    }
    Heatmap::from_scores(w, h, scores).unwrap()
}

/// 4-connected components of `score ≥ threshold`, as pixel lists.
fn components(h: &Heatmap, threshold: f32) -> Vec<Vec<(usize, usize)>> {
    let (w, hh) = (h.width, h.height);
    let mut seen = vec![false; w * hh];
    let mut out = Vec::new();
    for start in 0..w * hh {
        if seen[start] || h.scores[start] < threshold {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.push((x, y));
            let mut nb = Vec::new();
            if x > 0 {
                nb.push(i - 1);
            }
            if x + 1 < w {
                nb.push(i + 1);
            }
            if y > 0 {
                nb.push(i - w);
            }
            if y + 1 < hh {
                nb.push(i + w);
            }
            for j in nb {
                if !seen[j] && h.scores[j] >= threshold {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn centroid(c: &[(usize, usize)]) -> [f64; 2] {
    let n = c.len() as f64;
    let s = c.iter().fold([0.0, 0.0], |s, &(x, y)| [s[0] + x as f64, s[1] + y as f64]);
    [s[0] / n, s[1] / n]
}

fn site_at(x: usize, y: usize) -> CandidateSite {
    let m = YearMonth::new(2021, 3).unwrap();
    CandidateSite {
        id: candidate_id([x as f64, y as f64], m),
        center_px: [x, y],
        center: [x as f64, y as f64],
        blob_sigma: 3.5,
        pixel_score: 0.9,
        patch_score: None,
        mode: ModeName::High,
        status: SiteStatus::Candidate,
        first_month: m,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blobs_agree_with_component_oracle(
        cells in prop::collection::btree_set(0usize..9, 0..=4),
        jitter in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0, 4.0f64..6.0, 0.8f32..1.0), 4),
    ) {
        // bumps sit on a 3×3 grid of 32 px cells, so they never touch
        let spec: Vec<_> = cells
            .iter()
            .zip(&jitter)
            .map(|(&cell, &(dx, dy, sigma, peak))| {
                ([16.0 + 32.0 * (cell % 3) as f64 + dx, 16.0 + 32.0 * (cell / 3) as f64 + dy], sigma, peak)
            })
            .collect();
        let h = bumps(96, 96, &spec);
        let mode = SensitivityModes::default().get(ModeName::High);
        let comps = components(&h, mode.pixel_threshold);
        let blobs = detect_blobs(&h, &mode);
        prop_assert_eq!(blobs.len(), comps.len());
        for c in &comps {
            let [cx, cy] = centroid(c);
            prop_assert!(
                blobs.iter().any(|b| (b.x as f64 - cx).abs() <= 2.0 && (b.y as f64 - cy).abs() <= 2.0),
                "no blob near component centroid ({cx:.1}, {cy:.1}): {blobs:?}"
            );
        }
    }

    #[test]
    fn raising_the_threshold_never_grows_the_mask(scores in prop::collection::vec(0.0f32..1.0, 64), t1 in 0.0f32..1.0, t2 in 0.0f32..1.0) {
        let h = Heatmap::from_scores(8, 8, scores).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let area = |t: f32| components(&h, t).iter().map(Vec::len).sum::<usize>();
        prop_assert!(area(hi) <= area(lo));
    }

    #[test]
    fn cross_validation_keeps_a_subset(
        grid_scores in prop::collection::vec(0.0f32..1.0, 25),
        cands in prop::collection::vec((0usize..60, 0usize..60), 0..12),
        thr in 0.0f32..1.0,
    ) {
        let grid = PatchScoreGrid::new(5, 5, grid_scores).unwrap();
        let sites: Vec<CandidateSite> = cands.iter().map(|&(x, y)| site_at(x, y)).collect();
        let mut mode = SensitivityModes::default().get(ModeName::High);
        mode.patch_threshold = thr;
        let cv = cross_validate(&sites, &grid, &mode);
        prop_assert_eq!(cv.kept.len() + cv.dropped.len() + cv.uncovered.len(), sites.len());
        for k in &cv.kept {
            prop_assert!(sites.iter().any(|s| s.id == k.id && s.center_px == k.center_px));
            let best = grid.covering(k.center_px[0], k.center_px[1]).iter().map(|&(c, r)| grid.score(c, r)).fold(f32::MIN, f32::max);
            prop_assert_eq!(k.patch_score, Some(best));
            prop_assert!(best > thr);
        }
    }

    #[test]
    fn timestep_average_ignores_order(
        planes in prop::collection::vec((prop::collection::vec(0.0f32..1.0, 36), prop::collection::vec(any::<bool>(), 36)), 1..6),
        rot in 0usize..6,
    ) {
        let maps: Vec<Heatmap> = planes
            .iter()
            .map(|(s, v)| {
                let mut h = Heatmap::from_scores(6, 6, s.clone()).unwrap();
                h.validity = v.clone();
                h
            })
            .collect();
        let a = average_timesteps(&maps).unwrap();
        let mut shuffled = maps.clone();
        shuffled.rotate_left(rot % maps.len());
        shuffled.reverse();
        let b = average_timesteps(&shuffled).unwrap();
        prop_assert_eq!(&a.validity, &b.validity);
        for i in 0..36 {
            prop_assert_eq!(a.scores[i].to_bits(), b.scores[i].to_bits());
            // masked-mean oracle
            let vals: Vec<f64> = maps.iter().filter(|m| m.validity[i]).map(|m| m.scores[i] as f64).collect();
            if vals.is_empty() {
                prop_assert!(!a.validity[i]);
            } else {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                prop_assert!((a.scores[i] as f64 - mean).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn worked_blob_examples() {
    let modes = SensitivityModes::default();
    let zeros = Heatmap::from_scores(64, 64, vec![0.0; 64 * 64]).unwrap();
    assert!(detect_blobs(&zeros, &modes.get(ModeName::High)).is_empty());

    let one = bumps(64, 64, &[([30.0, 33.0], 6.0, 1.0)]);
    let b = detect_blobs(&one, &modes.get(ModeName::High));
    assert_eq!(b.len(), 1);
    assert!((b[0].x as f64 - 30.0).abs() <= 2.0 && (b[0].y as f64 - 33.0).abs() <= 2.0);

    let two = bumps(100, 60, &[([30.0, 30.0], 6.0, 1.0), ([70.0, 30.0], 6.0, 1.0)]);
    assert_eq!(detect_blobs(&two, &modes.get(ModeName::Med)).len(), 2);
    let faint = bumps(100, 60, &[([30.0, 30.0], 6.0, 0.7), ([70.0, 30.0], 6.0, 0.7)]);
    assert!(detect_blobs(&faint, &modes.get(ModeName::Low)).is_empty());
}

#[test]
fn averaging_worked_values() {
    let mut a = Heatmap::from_scores(1, 1, vec![0.2]).unwrap();
    let b = Heatmap::from_scores(1, 1, vec![0.8]).unwrap();
    assert!((average_timesteps(&[a.clone(), b.clone()]).unwrap().scores[0] - 0.5).abs() < 1e-7);
    assert_eq!(average_timesteps(std::slice::from_ref(&a)).unwrap(), a);
    a.validity[0] = false;
    assert_eq!(average_timesteps(&[a, b]).unwrap().scores[0], 0.8);
}

#[test]
fn grid_geometry() {
    assert_eq!(GRID_STRIDE, 8);
    assert_eq!(PatchScoreGrid::dims_for(28, 28).unwrap(), (1, 1));
    assert_eq!(PatchScoreGrid::dims_for(44, 44).unwrap(), (3, 3));
    let g = PatchScoreGrid::new(3, 3, vec![0.0; 9]).unwrap();
    assert_eq!(g.to_pixel(2, 1), [16, 8]);
}
