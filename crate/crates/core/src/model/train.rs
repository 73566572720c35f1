//! Mini-batch SGD training of the classifier.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::{argmax, Layer, ModelConfig, TrainedModel};
use crate::data::{Dataset, EncodeError, Encoder};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("cannot train on an unlabeled dataset")]
    Unlabeled,
    #[error("training diverged at epoch {epoch} (loss {loss}); lower the learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

fn he_init(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    dims.windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            Layer {
                w: Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(rng)),
                b: Array1::zeros(fan_out),
            }
        })
        .collect()
}

/// Train a ReLU feedforward classifier with softmax cross-entropy and
/// mini-batch SGD. Deterministic given `cfg.seed` (it drives the
/// initialization, the validation split, and every epoch's shuffle).
pub fn train(ds: &Dataset, cfg: &ModelConfig) -> Result<TrainedModel, TrainError> {
    cfg.check()?;
    if ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if ds.labels().is_empty() {
        return Err(TrainError::Unlabeled);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Validation holdout, drawn uniformly via one shuffled permutation.
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let val_n = (ds.len() as f64 * cfg.validation_fraction) as usize;
    let val_ds = ds.take(&order[..val_n]);
    let train_ds = ds.take(&order[val_n..]);
    if train_ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    // Standardization statistics come from the training portion only.
    let encoder = Encoder::fit(&train_ds)?;
    let x = encoder.encode(&train_ds)?.matrix;
    let y = train_ds.labels().to_vec();
    let n = x.nrows();
    let m = ds.schema().class_count();

    let mut dims = vec![encoder.dim()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(m);
    let mut layers = he_init(&dims, &mut rng);
    let n_layers = layers.len();

    let mut batch_order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        batch_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in batch_order.chunks(cfg.batch_size) {
            let bsz = chunk.len();
            let xb = Array2::from_shape_fn((bsz, x.ncols()), |(i, j)| x[(chunk[i], j)]);

            // Forward, keeping each layer's input for the backward pass.
            let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
            acts.push(xb);
            for (i, layer) in layers.iter().enumerate() {
                let mut z = acts[i].dot(&layer.w) + &layer.b;
                if i < n_layers - 1 {
                    z.mapv_inplace(|v| v.max(0.0));
                }
                acts.push(z);
            }
            let logits = acts.pop().unwrap();

            // Stable softmax probabilities and the mean cross-entropy.
            let mut probs = logits;
            for (row, label) in probs
                .axis_iter_mut(Axis(0))
                .zip(chunk.iter().map(|&i| y[i]))
            {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
                epoch_loss += (lse - row[label]) / n as f64;
                let mut r = row;
                r.mapv_inplace(|z| (z - max).exp());
                let sum = r.sum();
                r.mapv_inplace(|p| p / sum);
            }

            // delta = (P − onehot(y)) / B at the logits.
            let mut delta = probs;
            for (i, &row_idx) in chunk.iter().enumerate() {
                delta[(i, y[row_idx])] -= 1.0;
            }
            delta /= bsz as f64;

            for i in (0..n_layers).rev() {
                let gw = acts[i].t().dot(&delta) + &(&layers[i].w * cfg.l2);
                let gb = delta.sum_axis(Axis(0));
                if i > 0 {
                    // acts[i] is the post-ReLU input of layer i; its
                    // positivity pattern is the ReLU mask of layer i−1.
                    delta = delta.dot(&layers[i].w.t()) * acts[i].mapv(|a| f64::from(a > 0.0));
                }
                layers[i].w.scaled_add(-cfg.learning_rate, &gw);
                layers[i].b.scaled_add(-cfg.learning_rate, &gb);
            }
        }
        let penalty: f64 = layers
            .iter()
            .map(|l| l.w.iter().map(|w| w * w).sum::<f64>())
            .sum();
        epoch_loss += 0.5 * cfg.l2 * penalty;
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
    }
    if layers
        .iter()
        .any(|l| l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()))
    {
        return Err(TrainError::Diverged {
            epoch: cfg.epochs - 1,
            loss: f64::NAN,
        });
    }

    let mut model =
        TrainedModel::from_layers_unchecked(layers, encoder, ds.schema().label.classes.clone());
    let train_acc = accuracy_encoded(&model, &x, &y);
    let val_acc = if val_ds.is_empty() {
        None
    } else {
        let xv = model
            .encoder()
            .encode(&val_ds)
            .map_err(TrainError::Encode)?;
        Some(accuracy_encoded(&model, &xv.matrix, val_ds.labels()))
    };
    model.set_accuracies(Some(train_acc), val_acc);
    Ok(model)
}

fn accuracy_encoded(model: &TrainedModel, x: &Array2<f64>, y: &[usize]) -> f64 {
    let logits = model.logits_batch(x).expect("shapes match by construction");
    let hits = logits
        .axis_iter(Axis(0))
        .zip(y)
        .filter(|(row, &label)| argmax(*row) == label)
        .count();
    hits as f64 / y.len() as f64
}
