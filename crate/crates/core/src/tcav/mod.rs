//! Conceptual sensitivity and TCAV scores: how much a class logit moves
//! when a layer's activation is nudged in a CAV's direction, averaged over
//! the inputs of that class. A score near zero (equivalently a mean angle
//! near 90°) means the model's evidence for the class is insensitive to
//! the concept; the statistical test separates real sensitivity from what
//! label-shuffled "random concepts" produce.

mod pipeline;

pub use pipeline::{
    derive_seed, fairness_audit, run_tcav, ConceptPoolSummary, FairnessConfig, FairnessEntry,
    FairnessReport, TcavConfig, TcavReport, TcavResult, REPORT_SCHEMA_VERSION,
};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cav::{Cav, CavError};
use crate::data::Dataset;
use crate::generator::GeneratorError;
use crate::model::{GradientSpace, ModelError, TrainedModel};
use crate::predicate::ValidateError;

/// Significance level of the statistical test, unless overridden.
pub const DEFAULT_ALPHA: f64 = 0.05;
/// A concept additionally fails the test when its CAVs cannot even
/// classify the concept this well.
pub const ACCURACY_FLOOR: f64 = 0.6;
/// Rows whose gradient norm falls at or below this are skipped by the
/// angle (their direction is undefined).
pub const ZERO_GRAD_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TcavError {
    #[error("class {class} has no rows in the evaluation data")]
    EmptyClass { class: usize },
    #[error("expected every row to be labeled class {expected}, found class {got} at row {row}")]
    WrongLabel {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("dataset is unlabeled; class-conditioned scores need labels")]
    Unlabeled,
    #[error("CAV for layer `{layer}` has dimension {got}, expected {expected}")]
    CavDimension {
        layer: String,
        got: usize,
        expected: usize,
    },
    #[error("every class-{class} gradient at `{layer}` is zero; the mean angle is undefined")]
    AllGradientsZero { class: usize, layer: String },
    #[error(
        "statistical test needs at least 2 scores per sample, got {concept} concept and \
         {random} random"
    )]
    TooFewScores { concept: usize, random: usize },
    #[error("natural {side} side of `{concept}` has {got} rows; need at least {need}")]
    ThinConceptSide {
        concept: String,
        side: &'static str,
        got: usize,
        need: usize,
    },
    #[error(
        "uniform sampling budget of {budget} draws exhausted for `{concept}`: collected \
         {positives} positive and {negatives} negative examples of {requested} per side"
    )]
    UniformBudgetExhausted {
        concept: String,
        budget: usize,
        requested: usize,
        positives: usize,
        negatives: usize,
    },
    #[error("column `{column}` is not a categorical column, so it cannot be a protected feature")]
    BadProtectedColumn { column: String },
    #[error("value `{value}` is not in protected column `{column}`'s domain")]
    ProtectedValueAbsent { column: String, value: String },
    #[error("class `{0}` is not one of the model's classes")]
    UnknownClassLabel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cav(#[from] CavError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Predicate(#[from] ValidateError),
}

/// How per-input sensitivities aggregate into the TCAV score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreVariant {
    /// Signed mean of the directional derivatives — the reading under
    /// which scores can be negative.
    #[default]
    MeanDerivative,
    /// Fraction of inputs with strictly positive sensitivity, as in the
    /// original TCAV formulation.
    SignFraction,
}

impl std::fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreVariant::MeanDerivative => "mean-derivative",
            ScoreVariant::SignFraction => "sign-fraction",
        })
    }
}

impl std::str::FromStr for ScoreVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean-derivative" => Ok(ScoreVariant::MeanDerivative),
            "sign-fraction" => Ok(ScoreVariant::SignFraction),
            other => Err(format!(
                "unknown score variant `{other}` (expected mean-derivative or sign-fraction)"
            )),
        }
    }
}

/// Logit gradients ∇h_{l,k}(f_l(x)) of one class at one layer, one row per
/// class-k input. Computing these once and dotting many CAVs against them
/// is what makes ensembles cheap.
#[derive(Debug, Clone)]
pub struct ClassGradients {
    layer: String,
    class_index: usize,
    grads: Array2<f64>,
    norms: Vec<f64>,
}

/// Gradients of class `k`'s logit with respect to the `layer` activation,
/// over every row of `ds` labeled `k`.
pub fn class_gradients(
    model: &TrainedModel,
    ds: &Dataset,
    layer: &str,
    k: usize,
) -> Result<ClassGradients, TcavError> {
    if !ds.is_labeled() {
        return Err(TcavError::Unlabeled);
    }
    if k >= model.classes().len() {
        return Err(ModelError::ClassOutOfRange {
            class: k,
            classes: model.classes().len(),
        }
        .into());
    }
    let width = model.layer_width(layer)?;
    model
        .encoder()
        .check_schema(ds.schema())
        .map_err(ModelError::from)?;

    let indices: Vec<usize> = ds
        .labels()
        .iter()
        .enumerate()
        .filter(|&(_, &label)| label == k)
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(TcavError::EmptyClass { class: k });
    }

    let mut grads = Array2::zeros((indices.len(), width));
    let mut buf = vec![0.0; model.input_dim()];
    for (out_row, &i) in indices.iter().enumerate() {
        model
            .encoder()
            .encode_row_into(&ds.rows()[i], &mut buf)
            .map_err(ModelError::from)?;
        let g =
            model.grad_logit_wrt_layer(ArrayView1::from(&buf), layer, k, GradientSpace::Logit)?;
        grads.row_mut(out_row).assign(&g);
    }
    let norms = grads.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    Ok(ClassGradients {
        layer: layer.to_owned(),
        class_index: k,
        grads,
        norms,
    })
}

/// Mean angle over class inputs, with the rows that had to be skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcavAngle {
    /// Mean angle in degrees, in [0°, 180°].
    pub degrees: f64,
    /// Rows excluded because their gradient norm was ≤ 1e-12.
    pub skipped_rows: usize,
}

impl ClassGradients {
    #[cfg(test)]
    pub(crate) fn from_raw(layer: &str, class_index: usize, grads: Array2<f64>) -> Self {
        let norms = grads.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        ClassGradients {
            layer: layer.to_owned(),
            class_index,
            grads,
            norms,
        }
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn n_rows(&self) -> usize {
        self.grads.nrows()
    }

    pub fn zero_gradient_rows(&self) -> usize {
        self.norms.iter().filter(|&&n| n <= ZERO_GRAD_NORM).count()
    }

    fn check_dim(&self, v: ArrayView1<f64>) -> Result<(), TcavError> {
        if v.len() != self.grads.ncols() {
            return Err(TcavError::CavDimension {
                layer: self.layer.clone(),
                got: v.len(),
                expected: self.grads.ncols(),
            });
        }
        Ok(())
    }

    /// TCAV score of direction `v` over these inputs. `v` need not be
    /// normalized — the mean-derivative score is linear in it.
    pub fn score(&self, v: ArrayView1<f64>, variant: ScoreVariant) -> Result<f64, TcavError> {
        self.check_dim(v)?;
        let dots = self.grads.dot(&v);
        Ok(match variant {
            ScoreVariant::MeanDerivative => dots.sum() / dots.len() as f64,
            ScoreVariant::SignFraction => {
                dots.iter().filter(|&&s| s > 0.0).count() as f64 / dots.len() as f64
            }
        })
    }

    /// Mean angle between the per-row gradients and `v`, in degrees.
    pub fn angle(&self, v: ArrayView1<f64>) -> Result<TcavAngle, TcavError> {
        self.check_dim(v)?;
        let v_norm = v.dot(&v).sqrt();
        let mut sum = 0.0;
        let mut used = 0usize;
        for (row, &norm) in self.grads.rows().into_iter().zip(&self.norms) {
            if norm <= ZERO_GRAD_NORM {
                continue;
            }
            let cos = (row.dot(&v) / (norm * v_norm)).clamp(-1.0, 1.0);
            sum += cos.acos().to_degrees();
            used += 1;
        }
        if used == 0 {
            return Err(TcavError::AllGradientsZero {
                class: self.class_index,
                layer: self.layer.clone(),
            });
        }
        Ok(TcavAngle {
            degrees: sum / used as f64,
            skipped_rows: self.n_rows() - used,
        })
    }
}

/// Conceptual sensitivity of one encoded input: the directional derivative
/// of class `k`'s logit along the CAV, taken in the CAV's layer.
pub fn sensitivity(
    model: &TrainedModel,
    x: ArrayView1<f64>,
    cav: &Cav,
    k: usize,
) -> Result<f64, TcavError> {
    let grad = model.grad_logit_wrt_layer(x, &cav.layer, k, GradientSpace::Logit)?;
    if grad.len() != cav.vector.len() {
        return Err(TcavError::CavDimension {
            layer: cav.layer.clone(),
            got: cav.vector.len(),
            expected: grad.len(),
        });
    }
    Ok(grad.dot(&cav.vector_view()))
}

fn check_class_pure(x_k: &Dataset, k: usize) -> Result<(), TcavError> {
    if !x_k.is_labeled() {
        return Err(TcavError::Unlabeled);
    }
    for (row, &label) in x_k.labels().iter().enumerate() {
        if label != k {
            return Err(TcavError::WrongLabel {
                row,
                got: label,
                expected: k,
            });
        }
    }
    Ok(())
}

/// TCAV score: mean sensitivity over the class-`k` dataset `x_k` (which
/// must contain only class-`k` rows).
pub fn tcav_score(
    model: &TrainedModel,
    x_k: &Dataset,
    cav: &Cav,
    k: usize,
) -> Result<f64, TcavError> {
    tcav_score_with(model, x_k, cav, k, ScoreVariant::MeanDerivative)
}

/// [`tcav_score`] with an explicit aggregation variant.
pub fn tcav_score_with(
    model: &TrainedModel,
    x_k: &Dataset,
    cav: &Cav,
    k: usize,
    variant: ScoreVariant,
) -> Result<f64, TcavError> {
    check_class_pure(x_k, k)?;
    class_gradients(model, x_k, &cav.layer, k)?.score(cav.vector_view(), variant)
}

/// TCAV angle: mean angle between per-input logit gradients and the CAV,
/// in degrees. 90° means the class is insensitive to the concept.
pub fn tcav_angle(
    model: &TrainedModel,
    x_k: &Dataset,
    cav: &Cav,
    k: usize,
) -> Result<TcavAngle, TcavError> {
    check_class_pure(x_k, k)?;
    class_gradients(model, x_k, &cav.layer, k)?.angle(cav.vector_view())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test p-value. Both slices need at least 2 entries.
/// When both samples have zero variance the p-value degenerates to 1 for
/// equal means (indistinguishable constants) and 0 otherwise.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0 by construction");
    2.0 * dist.cdf(-t.abs())
}

/// Outcome of testing a concept's per-run scores against random-CAV runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTest {
    pub p_value: f64,
    pub passed: bool,
}

/// Welch-test the concept ensemble's scores against the random-CAV scores.
/// Passing requires both significance (p < `alpha`) and CAVs that actually
/// recognize the concept (`cav_accuracy_mean` above the 0.6 floor).
pub fn statistical_test(
    concept_scores: &[f64],
    random_scores: &[f64],
    alpha: f64,
    cav_accuracy_mean: f64,
) -> Result<StatTest, TcavError> {
    if concept_scores.len() < 2 || random_scores.len() < 2 {
        return Err(TcavError::TooFewScores {
            concept: concept_scores.len(),
            random: random_scores.len(),
        });
    }
    let p_value = welch_p_value(concept_scores, random_scores);
    Ok(StatTest {
        p_value,
        passed: p_value < alpha && cav_accuracy_mean > ACCURACY_FLOOR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cav::CavSource;
    use crate::data::gen_xor_synthetic;
    use crate::model::{train, ModelConfig};
    use ndarray::array;

    fn grads_fixture() -> ClassGradients {
        // Norms 5, 0, 5 — the middle row must be skipped by the angle.
        ClassGradients::from_raw("hidden_1", 1, array![[3.0, 4.0], [0.0, 0.0], [5.0, 0.0]])
    }

    #[test]
    fn score_matches_hand_summation() {
        let g = grads_fixture();
        let v = array![1.0, 0.0];
        // Sensitivities: 3, 0, 5 → mean 8/3.
        let s = g.score(v.view(), ScoreVariant::MeanDerivative).unwrap();
        assert!((s - 8.0 / 3.0).abs() < 1e-12);
        // Strictly positive rows: 2 of 3.
        let f = g.score(v.view(), ScoreVariant::SignFraction).unwrap();
        assert_eq!(f, 2.0 / 3.0);
    }

    #[test]
    fn score_is_linear_in_the_direction() {
        let g = grads_fixture();
        let v = array![0.3, -0.7];
        let s1 = g.score(v.view(), ScoreVariant::MeanDerivative).unwrap();
        let s2 = g
            .score((&v * 2.5).view(), ScoreVariant::MeanDerivative)
            .unwrap();
        assert!((s2 - 2.5 * s1).abs() < 1e-12);
    }

    #[test]
    fn angle_skips_zero_gradients_and_averages_the_rest() {
        let g = grads_fixture();
        let a = g.angle(array![1.0, 0.0].view()).unwrap();
        assert_eq!(a.skipped_rows, 1);
        // Rows: arccos(3/5) = 53.1301…°, arccos(1) = 0° → mean.
        let expected = (3.0f64 / 5.0).acos().to_degrees() / 2.0;
        assert!((a.degrees - expected).abs() < 1e-9);
        assert_eq!(g.zero_gradient_rows(), 1);
    }

    #[test]
    fn angle_hits_0_90_and_180_on_aligned_directions() {
        let g = ClassGradients::from_raw("l", 0, array![[2.0, 0.0], [7.0, 0.0]]);
        let along = g.angle(array![1.0, 0.0].view()).unwrap();
        let across = g.angle(array![0.0, -3.0].view()).unwrap();
        let against = g.angle(array![-0.5, 0.0].view()).unwrap();
        assert!(along.degrees.abs() < 1e-9);
        assert!((across.degrees - 90.0).abs() < 1e-9);
        assert!((against.degrees - 180.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_gradients_make_the_angle_undefined() {
        let g = ClassGradients::from_raw("l", 3, Array2::zeros((4, 2)));
        assert!(matches!(
            g.angle(array![1.0, 0.0].view()),
            Err(TcavError::AllGradientsZero { class: 3, .. })
        ));
        // The score is still fine: every sensitivity is exactly 0.
        assert_eq!(
            g.score(array![1.0, 0.0].view(), ScoreVariant::MeanDerivative)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn dimension_mismatch_is_reported_with_the_layer() {
        let g = grads_fixture();
        match g.score(array![1.0, 0.0, 0.0].view(), ScoreVariant::MeanDerivative) {
            Err(TcavError::CavDimension {
                layer,
                got: 3,
                expected: 2,
            }) => assert_eq!(layer, "hidden_1"),
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    /// sensitivity == ||∇|| · cos(row angle) for unit CAVs, per row.
    #[test]
    fn sensitivity_angle_identity_on_a_trained_model() {
        let ds = gen_xor_synthetic(600, 2);
        let cfg = ModelConfig {
            hidden: vec![10, 6],
            epochs: 4,
            ..ModelConfig::default()
        };
        let model = train(&ds, &cfg).unwrap();

        // An arbitrary unit direction serves as the CAV.
        let width = model.layer_width("hidden_2").unwrap();
        let mut raw: Vec<f64> = (0..width)
            .map(|i| ((i * 7 + 3) % 11) as f64 - 5.0)
            .collect();
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.iter_mut().for_each(|v| *v /= norm);
        let cav = Cav {
            concept: "probe".into(),
            layer: "hidden_2".into(),
            vector: raw,
            accuracy: 1.0,
            seed: 0,
            source: CavSource::TestData,
        };

        let mut buf = vec![0.0; model.input_dim()];
        let mut checked = 0;
        for i in 0..40 {
            let row_ds = ds.take(&[i]);
            let k = row_ds.labels()[0];
            model
                .encoder()
                .encode_row_into(&row_ds.rows()[0], &mut buf)
                .unwrap();
            let s = sensitivity(&model, ArrayView1::from(&buf), &cav, k).unwrap();
            let g = model
                .grad_logit_wrt_layer(ArrayView1::from(&buf), "hidden_2", k, GradientSpace::Logit)
                .unwrap();
            let norm = g.dot(&g).sqrt();
            if norm <= ZERO_GRAD_NORM {
                continue;
            }
            let angle = tcav_angle(&model, &row_ds, &cav, k).unwrap();
            assert!(
                (s - norm * angle.degrees.to_radians().cos()).abs() < 1e-9,
                "row {i}: s={s}, norm={norm}, angle={}",
                angle.degrees
            );
            checked += 1;
        }
        assert!(checked > 30, "too many zero gradients ({checked} checked)");
    }

    /// tcav_score against a brute-force mean of per-row sensitivities.
    #[test]
    fn tcav_score_matches_per_row_oracle() {
        let ds = gen_xor_synthetic(300, 9);
        let cfg = ModelConfig {
            hidden: vec![8, 4],
            epochs: 3,
            ..ModelConfig::default()
        };
        let model = train(&ds, &cfg).unwrap();
        let width = model.layer_width("hidden_1").unwrap();
        let mut v = vec![0.0; width];
        v[0] = 0.6;
        v[1] = -0.8;
        let cav = Cav {
            concept: "probe".into(),
            layer: "hidden_1".into(),
            vector: v,
            accuracy: 1.0,
            seed: 0,
            source: CavSource::TestData,
        };

        let k = 1;
        let x_k = ds.rows_of_class(k);
        let score = tcav_score(&model, &x_k, &cav, k).unwrap();

        let mut buf = vec![0.0; model.input_dim()];
        let mut sum = 0.0;
        for row in x_k.rows() {
            model.encoder().encode_row_into(row, &mut buf).unwrap();
            sum += sensitivity(&model, ArrayView1::from(&buf), &cav, k).unwrap();
        }
        let oracle = sum / x_k.len() as f64;
        assert!(
            (score - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
            "score {score} vs oracle {oracle}"
        );
    }

    #[test]
    fn class_purity_is_enforced() {
        let ds = gen_xor_synthetic(100, 4);
        let cfg = ModelConfig {
            hidden: vec![4, 3],
            epochs: 1,
            ..ModelConfig::default()
        };
        let model = train(&ds, &cfg).unwrap();
        let cav = Cav {
            concept: "c".into(),
            layer: "hidden_1".into(),
            vector: vec![1.0, 0.0, 0.0, 0.0],
            accuracy: 1.0,
            seed: 0,
            source: CavSource::TestData,
        };
        // Mixed labels must be rejected.
        assert!(matches!(
            tcav_score(&model, &ds, &cav, 1),
            Err(TcavError::WrongLabel { .. })
        ));
    }

    #[test]
    fn welch_p_matches_reference_values() {
        // Reference p-values computed with an independent implementation
        // of Welch's unequal-variance t-test.
        let cases: [(&[f64], &[f64], f64); 3] = [
            (
                &[0.52, 0.48, 0.55, 0.50, 0.47],
                &[0.01, -0.02, 0.03, 0.00, -0.01],
                2.9536153363034245e-08,
            ),
            (
                &[0.1, -0.2, 0.15, 0.05, -0.1],
                &[0.02, 0.12, -0.08, -0.03, 0.09],
                0.7590826288493508,
            ),
            (
                &[1.1, 0.9, 1.3],
                &[0.2, 0.5, 0.1, 0.4, 0.3, 0.25],
                0.0077139765889041485,
            ),
        ];
        for (a, b, expected) in cases {
            let p = welch_p_value(a, b);
            assert!(
                (p / expected - 1.0).abs() < 1e-9,
                "p {p} vs expected {expected}"
            );
        }
    }

    #[test]
    fn degenerate_variances_shortcut() {
        assert_eq!(welch_p_value(&[0.5, 0.5, 0.5], &[0.5, 0.5]), 1.0);
        assert_eq!(welch_p_value(&[0.5, 0.5, 0.5], &[0.1, 0.1]), 0.0);
    }

    #[test]
    fn statistical_test_combines_p_and_accuracy() {
        let concept = [0.5, 0.52, 0.48, 0.51, 0.5];
        let random = [0.01, -0.02, 0.0, 0.02, -0.01];
        let strong = statistical_test(&concept, &random, 0.05, 0.95).unwrap();
        assert!(strong.p_value < 1e-6);
        assert!(strong.passed);

        // Significant but unskilled CAVs do not pass…
        let unskilled = statistical_test(&concept, &random, 0.05, 0.55).unwrap();
        assert!(!unskilled.passed);

        // …nor do insignificant differences.
        let null = statistical_test(&[0.1, -0.2, 0.15], &[0.05, -0.1, 0.12], 0.05, 0.95).unwrap();
        assert!(null.p_value > 0.05);
        assert!(!null.passed);

        assert!(matches!(
            statistical_test(&[0.1], &random, 0.05, 0.9),
            Err(TcavError::TooFewScores { concept: 1, .. })
        ));
    }
}
