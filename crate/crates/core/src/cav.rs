//! Concept activation vectors: linear separators between concept-positive
//! and concept-negative examples in a layer's activation space. The unit
//! normal of the separator, oriented toward the positives, is the CAV; its
//! held-out accuracy says whether the concept is linearly represented at
//! that layer at all.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::model::{ModelError, TrainedModel};

/// Minimum examples per side for [`train_cav`]; below this a held-out
/// accuracy estimate is meaningless.
pub const MIN_EXAMPLES_PER_SIDE: usize = 20;

/// L2 penalty on the separator weights.
const CAV_L2: f64 = 1e-3;
/// Full-batch gradient-descent epochs.
const CAV_EPOCHS: usize = 200;

#[derive(Debug, Error)]
pub enum CavError {
    #[error("{side} side has {got} examples; need at least {need} to train a CAV")]
    TooFewExamples {
        side: &'static str,
        got: usize,
        need: usize,
    },
    #[error("positive examples have width {pos} but negative examples have width {neg}")]
    WidthMismatch { pos: usize, neg: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where the examples behind a CAV came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CavSource {
    TrainData,
    TestData,
    Uniform,
    GeneratorP1,
    GeneratorP2,
}

impl CavSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CavSource::TrainData => "train-data",
            CavSource::TestData => "test-data",
            CavSource::Uniform => "uniform",
            CavSource::GeneratorP1 => "generator-p1",
            CavSource::GeneratorP2 => "generator-p2",
        }
    }
}

impl std::fmt::Display for CavSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CavSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train-data" => Ok(CavSource::TrainData),
            "test-data" => Ok(CavSource::TestData),
            "uniform" => Ok(CavSource::Uniform),
            "generator-p1" => Ok(CavSource::GeneratorP1),
            "generator-p2" => Ok(CavSource::GeneratorP2),
            other => Err(format!(
                "unknown CAV source `{other}` (expected train-data, test-data, uniform, \
                 generator-p1 or generator-p2)"
            )),
        }
    }
}

/// A trained concept activation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cav {
    /// Predicate text of the concept this vector represents.
    pub concept: String,
    /// Hidden layer whose activation space the vector lives in.
    pub layer: String,
    /// Unit normal of the separating hyperplane, oriented toward the
    /// positives.
    pub vector: Vec<f64>,
    /// Accuracy of the underlying linear classifier on its held-out split.
    pub accuracy: f64,
    /// Seed recorded for provenance (the fit itself is deterministic given
    /// the example matrices).
    pub seed: u64,
    pub source: CavSource,
}

impl Cav {
    pub fn vector_view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.vector)
    }
}

/// σ(t) in a form whose floating-point evaluation is exactly symmetric
/// under sign flips of `t` — the property that makes swapping a CAV's
/// positive and negative sides negate the vector bit-for-bit.
fn sigmoid(t: f64) -> f64 {
    0.5 * (1.0 + (0.5 * t).tanh())
}

/// Full-batch gradient descent on L2-regularized logistic loss with ±1
/// labels. The step size is fixed from the smoothness bound of the loss
/// (max squared row norm bounds the Hessian), so descent is monotone and
/// needs no line search.
///
/// The two sides are kept separate and their gradient sums combined with a
/// single commutative addition, never interleaved: that makes the whole
/// fit exactly antisymmetric under swapping the sides, since IEEE rounding
/// commutes with sign flips but not with reordering long sums.
fn fit_logistic(
    pos: &ArrayView2<f64>,
    neg: &ArrayView2<f64>,
    l2: f64,
    epochs: usize,
) -> (Array1<f64>, f64) {
    let n = (pos.nrows() + neg.nrows()) as f64;
    let d = pos.ncols();
    let max_sq = pos
        .rows()
        .into_iter()
        .chain(neg.rows())
        .map(|r| r.dot(&r))
        .fold(0.0f64, f64::max);
    let step = 1.5 / (0.25 * (max_sq + 1.0) + l2);

    let mut w = Array1::zeros(d);
    let mut b = 0.0f64;
    for _ in 0..epochs {
        // dℓ/ds for ℓ = log(1 + exp(−y·s)), evaluated per side.
        let c_pos = (pos.dot(&w) + b).mapv(|s| -sigmoid(-s));
        let c_neg = (neg.dot(&w) + b).mapv(sigmoid);
        let grad_w = (pos.t().dot(&c_pos) + neg.t().dot(&c_neg)) / n + &w * l2;
        let grad_b = (c_pos.sum() + c_neg.sum()) / n;
        w.scaled_add(-step, &grad_w);
        b -= step * grad_b;
    }
    (w, b)
}

/// Train one CAV from positive/negative activation matrices (one row per
/// example).
///
/// The first 80% of each side trains the separator and the last 20% is
/// held out for the accuracy estimate — callers wanting a randomized split
/// shuffle or resample the rows first, which is exactly what
/// [`train_cav_ensemble`] does. The returned vector is the classifier's
/// weight normalized to unit length and oriented so the mean positive
/// activation scores higher than the mean negative one. A separator that
/// collapses to the zero vector (no signal whatsoever) falls back to the
/// first coordinate axis, with the honest near-chance accuracy attached.
pub fn train_cav(
    pos: ArrayView2<f64>,
    neg: ArrayView2<f64>,
    concept: &str,
    layer: &str,
    source: CavSource,
    seed: u64,
) -> Result<Cav, CavError> {
    if pos.ncols() != neg.ncols() {
        return Err(CavError::WidthMismatch {
            pos: pos.ncols(),
            neg: neg.ncols(),
        });
    }
    for (side, m) in [("positive", &pos), ("negative", &neg)] {
        if m.nrows() < MIN_EXAMPLES_PER_SIDE {
            return Err(CavError::TooFewExamples {
                side,
                got: m.nrows(),
                need: MIN_EXAMPLES_PER_SIDE,
            });
        }
    }

    let pos_split = pos.nrows() * 4 / 5;
    let neg_split = neg.nrows() * 4 / 5;
    let (w, b) = fit_logistic(
        &pos.slice(ndarray::s![..pos_split, ..]),
        &neg.slice(ndarray::s![..neg_split, ..]),
        CAV_L2,
        CAV_EPOCHS,
    );

    let held_pos = pos.slice(ndarray::s![pos_split.., ..]).dot(&w) + b;
    let held_neg = neg.slice(ndarray::s![neg_split.., ..]).dot(&w) + b;
    let correct = held_pos.iter().filter(|&&s| s >= 0.0).count()
        + held_neg.iter().filter(|&&s| s < 0.0).count();
    let accuracy = correct as f64 / (held_pos.len() + held_neg.len()) as f64;

    let norm = w.dot(&w).sqrt();
    let mut v = if norm < 1e-12 {
        let mut e1 = Array1::zeros(pos.ncols());
        e1[0] = 1.0;
        e1
    } else {
        w / norm
    };

    // Orient toward the concept: the mean positive activation must project
    // higher than the mean negative one.
    let mean_diff = pos.mean_axis(Axis(0)).unwrap() - neg.mean_axis(Axis(0)).unwrap();
    if mean_diff.dot(&v) < 0.0 {
        v.mapv_inplace(|c| -c);
    }

    Ok(Cav {
        concept: concept.to_owned(),
        layer: layer.to_owned(),
        vector: v.to_vec(),
        accuracy,
        seed,
        source,
    })
}

/// An ensemble of CAVs for one (concept, layer), with its accuracy spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavEnsemble {
    pub cavs: Vec<Cav>,
    pub accuracy_mean: f64,
    /// Sample standard deviation of the per-run accuracies.
    pub accuracy_std: f64,
}

fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seed for one side's bootstrap in one run. Keyed by the side's *content*
/// rather than its role, so that training the complementary concept — same
/// pools, sides swapped — resamples identical rows and yields exactly
/// negated vectors.
fn side_seed(side: &ArrayView2<f64>, base_seed: u64, run: u64) -> u64 {
    let content = fnv1a64(side.iter().flat_map(|v| v.to_le_bytes()));
    content ^ base_seed ^ run.wrapping_mul(0x9e3779b97f4a7c15)
}

fn bootstrap(side: &ArrayView2<f64>, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side.nrows();
    let mut out = Array2::zeros(side.raw_dim());
    for i in 0..n {
        out.row_mut(i).assign(&side.row(rng.random_range(0..n)));
    }
    out
}

/// Train `n_runs` CAVs on independent bootstrap resamples of the example
/// pools. Per-run seeds are fixed up front, so runs are order-independent
/// and the whole ensemble is deterministic in `base_seed`.
pub fn train_cav_ensemble(
    pos: ArrayView2<f64>,
    neg: ArrayView2<f64>,
    concept: &str,
    layer: &str,
    source: CavSource,
    n_runs: usize,
    base_seed: u64,
) -> Result<CavEnsemble, CavError> {
    assert!(n_runs >= 2, "an ensemble needs at least 2 runs");
    let mut cavs = Vec::with_capacity(n_runs);
    for run in 0..n_runs as u64 {
        let pos_boot = bootstrap(&pos, side_seed(&pos, base_seed, run));
        let neg_boot = bootstrap(&neg, side_seed(&neg, base_seed, run));
        let run_seed = base_seed ^ run.wrapping_mul(0x9e3779b97f4a7c15);
        cavs.push(train_cav(
            pos_boot.view(),
            neg_boot.view(),
            concept,
            layer,
            source,
            run_seed,
        )?);
    }
    let accs: Vec<f64> = cavs.iter().map(|c| c.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64;
    Ok(CavEnsemble {
        cavs,
        accuracy_mean: mean,
        accuracy_std: var.sqrt(),
    })
}

/// Activation matrix f_l(x) of every row of `rows` at `layer` — the space
/// CAVs are trained in.
pub fn compute_activations(
    model: &TrainedModel,
    rows: &Dataset,
    layer: &str,
) -> Result<Array2<f64>, ModelError> {
    let idx = model.layer_index(layer)?;
    let width = model.layer_width(layer)?;
    model.encoder().check_schema(rows.schema())?;

    let mut out = Array2::zeros((rows.len(), width));
    let mut buf = vec![0.0; model.input_dim()];
    for (i, row) in rows.rows().iter().enumerate() {
        model.encoder().encode_row_into(row, &mut buf)?;
        let pass = model.forward_with_activations(ArrayView1::from(&buf))?;
        out.row_mut(i).assign(&pass.activations[idx]);
    }
    Ok(out)
}
