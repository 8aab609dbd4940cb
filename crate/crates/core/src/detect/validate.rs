use super::candidate::CandidateSite;
use super::mode::SensitivityMode;
use super::patch_grid::PatchScoreGrid;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrossValidation {
    /// Candidates with a covering patch above the threshold, carrying the
    /// best covering patch score.
    pub kept: Vec<CandidateSite>,
    /// Covered candidates whose patches all scored at or below threshold.
    pub dropped: Vec<CandidateSite>,
    /// Candidates outside every patch extent.
    pub uncovered: Vec<CandidateSite>,
}

/// Keeps a candidate iff some patch whose 28-pixel extent contains its
/// center scores above the mode's patch threshold.
pub fn cross_validate(cands: &[CandidateSite], grid: &PatchScoreGrid, mode: &SensitivityMode) -> CrossValidation {
    let mut out = CrossValidation::default();
    for c in cands {
        let cover = grid.covering(c.center_px[0], c.center_px[1]);
        let Some(best) = cover.iter().map(|&(col, row)| grid.score(col, row)).reduce(f32::max) else {
            log::warn!("candidate {} at {:?} is outside patch-grid coverage", c.id, c.center_px);
            out.uncovered.push(c.clone());
            continue;
        };
        let mut site = c.clone();
        site.patch_score = Some(best);
        if best > mode.patch_threshold {
            out.kept.push(site);
        } else {
            out.dropped.push(site);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{ModeName, SensitivityModes, SiteStatus};
    use crate::geo::YearMonth;

    fn site(x: usize, y: usize) -> CandidateSite {
        CandidateSite {
            id: format!("{x}-{y}"),
            center_px: [x, y],
            center: [0.0, 0.0],
            blob_sigma: 5.0,
            pixel_score: 0.9,
            patch_score: None,
            mode: ModeName::Med,
            status: SiteStatus::Candidate,
            first_month: YearMonth::new(2020, 1).unwrap(),
        }
    }

    #[test]
    fn single_covering_patch() {
        let mode = SensitivityModes::default().get(ModeName::Med);
        let grid = PatchScoreGrid::new(1, 1, vec![0.65]).unwrap();
        let r = cross_validate(&[site(5, 5)], &grid, &mode);
        assert_eq!(r.kept.len(), 1);
        let grid = PatchScoreGrid::new(1, 1, vec![0.6]).unwrap();
        assert_eq!(cross_validate(&[site(5, 5)], &grid, &mode).dropped.len(), 1);
    }

    #[test]
    fn best_of_four_covering_patches() {
        let mode = SensitivityModes::default().get(ModeName::Med);
        // On a 2x2 lattice, pixel (20, 20) lies in all four extents.
        let grid = PatchScoreGrid::new(2, 2, vec![0.1, 0.7, 0.2, 0.3]).unwrap();
        assert_eq!(grid.covering(20, 20).len(), 4);
        let r = cross_validate(&[site(20, 20)], &grid, &mode);
        assert_eq!(r.kept[0].patch_score, Some(0.7));
    }

    #[test]
    fn outside_coverage_is_reported() {
        let mode = SensitivityModes::default().get(ModeName::Med);
        let grid = PatchScoreGrid::new(1, 1, vec![0.9]).unwrap();
        let r = cross_validate(&[site(30, 3)], &grid, &mode);
        assert_eq!(r.uncovered.len(), 1);
        assert!(r.kept.is_empty());
    }
}
