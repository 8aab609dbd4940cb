//! Classifier definitions: the pixel spectrogram CNN, the patch CNN with its
//! teacher ensemble, and the RBF-kernel SVM.

mod bundle;
mod ensemble;
mod patch;
mod pixel;
mod svm;

pub use bundle::{config_hash, BundleManifest, ModelBundle, BUNDLE_MANIFEST};
pub use ensemble::{train_teacher_ensemble, EnsembleConfig, MemberReport, TeacherEnsemble, ENSEMBLE_SIZE};
pub use patch::{dihedral, expand_dihedral, make_patch_classifier, patch_batch, AugmentMode, DihedralAugment, PatchArch, PatchClassifier};
pub use pixel::{make_pixel_classifier, pixel_specs, spectrogram_batch, train_pixel_classifier, PixelClassifier, PIXEL_INPUT_SHAPE};
pub use svm::{flatten_patches, train_svm, RbfSvm, SvmParams};

/// Inference chunk size; fixed so results never depend on thread count.
pub const PREDICT_CHUNK: usize = 256;
