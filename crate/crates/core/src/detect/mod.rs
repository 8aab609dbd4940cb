//! Candidate generation: tiled pixel inference, stride-8 patch scoring,
//! timestep averaging, determinant-of-Hessian blobs and patch
//! cross-validation.

mod blobs;
mod candidate;
mod heatmap;
mod mode;
mod patch_grid;
mod pipeline;
mod validate;

pub use blobs::{detect_blobs, doh_scale_space, Blob};
pub use candidate::{candidate_id, candidates_from_geojson, candidates_to_geojson, CandidateSite, SiteStatus};
pub use heatmap::{average_timesteps, infer_heatmap, infer_heatmap_tiled, Heatmap};
pub use mode::{ModeName, SensitivityMode, SensitivityModes};
pub use patch_grid::{infer_patch_grid, PatchScoreGrid, GRID_STRIDE};
pub use pipeline::{run_detection, DetectionModels, DetectionOutput, Tiling};
pub use validate::{cross_validate, CrossValidation};
