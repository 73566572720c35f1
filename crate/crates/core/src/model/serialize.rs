//! Versioned JSON model files: layer shapes, row-major weights, and the
//! encoding map. Floats are written with shortest-round-trip formatting,
//! so save → load → save reproduces the file byte for byte.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{ModelError, TrainedModel};
use crate::data::Encoder;

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    in_dim: usize,
    out_dim: usize,
    /// Row-major, `in_dim` rows of `out_dim` entries.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    classes: Vec<String>,
    encoder: Encoder,
    layers: Vec<LayerFile>,
    train_accuracy: Option<f64>,
    validation_accuracy: Option<f64>,
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        classes: model.classes().to_vec(),
        encoder: model.encoder().clone(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerFile {
                in_dim: l.w.nrows(),
                out_dim: l.w.ncols(),
                weights: l.w.iter().copied().collect(),
                bias: l.b.to_vec(),
            })
            .collect(),
        train_accuracy: model.train_accuracy(),
        validation_accuracy: model.validation_accuracy(),
    };
    let json = serde_json::to_string_pretty(&file).expect("model file serializes");
    std::fs::write(path, json).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| ModelError::BadFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(ModelError::BadFile {
            path: path.display().to_string(),
            reason: format!(
                "format version {} unsupported (expected {FORMAT_VERSION})",
                file.format_version
            ),
        });
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.into_iter().enumerate() {
        if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
            return Err(ModelError::BadFile {
                path: path.display().to_string(),
                reason: format!("layer {i} sizes do not match its declared shape"),
            });
        }
        let w =
            Array2::from_shape_vec((l.in_dim, l.out_dim), l.weights).expect("length checked above");
        layers.push((w, Array1::from_vec(l.bias)));
    }
    let mut model = TrainedModel::from_parts(file.encoder, file.classes, layers)?;
    model.set_accuracies(file.train_accuracy, file.validation_accuracy);
    Ok(model)
}
