use wastemap_nn::{build_network, train, LayerSpec, Network, Padding, Tensor, TrainConfig, TrainReport};

use crate::dataengine::{PixelDataset, Spectrogram};
use crate::error::{CoreError, Result};
use crate::raster::BAND_COUNT;

use super::PREDICT_CHUNK;

/// One spectrogram as a (time, band, channel) image.
pub const PIXEL_INPUT_SHAPE: [usize; 3] = [2, BAND_COUNT, 1];

/// Shared 1×3 kernels slide along the band axis of both time rows, then
/// dense layers mix bands and epochs.
pub fn pixel_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv2d(1, 16, [1, 3], Padding::Valid),
        LayerSpec::Relu,
        LayerSpec::max_pool([1, 2]),
        LayerSpec::Flatten,
        LayerSpec::dense(2 * 5 * 16, 64),
        LayerSpec::Relu,
        LayerSpec::dropout(0.3),
        LayerSpec::dense(64, 32),
        LayerSpec::Relu,
        LayerSpec::dense(32, 1),
        LayerSpec::Sigmoid,
    ]
}

/// Scores single pixels from their (2, 12) spectrogram.
#[derive(Debug, Clone)]
pub struct PixelClassifier {
    pub net: Network,
}

pub fn make_pixel_classifier(seed: u64) -> Result<PixelClassifier> {
    PixelClassifier::from_network(build_network(&PIXEL_INPUT_SHAPE, &pixel_specs(), seed)?)
}

impl PixelClassifier {
    pub fn from_network(net: Network) -> Result<Self> {
        if net.input_shape() != PIXEL_INPUT_SHAPE || net.output_shape() != [1] {
            return Err(CoreError::InvalidInput(format!(
                "pixel classifier must map {:?} to [1], got {:?} -> {:?}",
                PIXEL_INPUT_SHAPE,
                net.input_shape(),
                net.output_shape()
            )));
        }
        Ok(PixelClassifier { net })
    }

    /// Scores of normalized spectrograms, in input order.
    pub fn score(&self, spectrograms: &[Spectrogram]) -> Result<Vec<f32>> {
        if let Some(s) = spectrograms.iter().find(|s| !s.normalized) {
            return Err(CoreError::InvalidInput(format!(
                "spectrogram at ({}, {}) is not normalized",
                s.x, s.y
            )));
        }
        self.score_rows(&spectrogram_batch(spectrograms))
    }

    /// Scores a `[N, 2, 12, 1]` batch.
    pub fn score_rows(&self, batch: &Tensor) -> Result<Vec<f32>> {
        Ok(self.net.predict(batch, PREDICT_CHUNK)?.into_data())
    }
}

/// Trains a fresh pixel classifier, initialized from `cfg.seed`, on the
/// normalized spectrograms of `data`.
pub fn train_pixel_classifier(data: &PixelDataset, cfg: &TrainConfig) -> Result<(PixelClassifier, TrainReport)> {
    if data.positives.is_empty() || data.negatives.is_empty() {
        return Err(CoreError::SingleClass(format!(
            "{} positive and {} negative spectrograms",
            data.positives.len(),
            data.negatives.len()
        )));
    }
    let (rows, targets): (Vec<Spectrogram>, Vec<f32>) = data.samples().map(|(s, t)| (s.clone(), t)).unzip();
    let mut model = make_pixel_classifier(cfg.seed)?;
    let report = train(&mut model.net, &spectrogram_batch(&rows), &targets, cfg, None)?;
    log::info!(
        "pixel classifier: {} samples, final accuracy {:.4}",
        targets.len(),
        report.final_accuracy
    );
    Ok((model, report))
}

/// Packs spectrograms into a `[N, 2, 12, 1]` tensor.
pub fn spectrogram_batch(spectrograms: &[Spectrogram]) -> Tensor {
    let data: Vec<f32> = spectrograms.iter().flat_map(|s| s.flat()).collect();
    let mut shape = vec![spectrograms.len()];
    shape.extend_from_slice(&PIXEL_INPUT_SHAPE);
    Tensor::from_vec(&shape, data).expect("spectrogram batch shape")
}
