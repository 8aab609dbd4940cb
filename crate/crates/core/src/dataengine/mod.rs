//! Training-data generation: masked minimum compositing, six-month
//! spectrogram pairing, NDVI filtering, per-band normalization, patch and
//! pixel dataset assembly, and the synthetic scene generator.

mod composite;
mod dataset;
mod labels;
mod patch;
mod spectrogram;
pub mod synth;

pub use composite::{min_composite, pair_starts, CompositePair, PAIR_OFFSET_MONTHS};
pub use dataset::{
    assemble_pixel_dataset, sample_labeled_patches, sample_unlabeled_patches, PatchSampling, PixelDataset, PixelDatasetOptions,
    UNLABELED_TRUTH_MIN_PIXELS,
};
pub use labels::{patches_from_label_records, LabelClass, LabelRecord, DEFAULT_LABEL_RADIUS};
pub use patch::{patch_tensor, LabeledPatch, PatchLabel, PatchTensor, PATCH_CHANNELS, PATCH_SIZE};
pub use spectrogram::{build_spectrogram_field, ndvi, ndvi_of, NormStats, Spectrogram, SpectrogramField, NDVI_THRESHOLD};
