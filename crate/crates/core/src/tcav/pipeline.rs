//! End-to-end TCAV runs and the fairness audit: assemble concept example
//! pools from the configured source, train CAV ensembles plus their
//! label-shuffled random counterparts, and aggregate scores, angles and
//! test outcomes into serializable reports.

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cav::{
    compute_activations, train_cav, train_cav_ensemble, Cav, CavEnsemble, CavSource,
    MIN_EXAMPLES_PER_SIDE,
};
use crate::data::{uniform_sample, ColumnDomain, Dataset, Row};
use crate::generator::{concept_examples_p1, concept_examples_p2, P2_BUDGET_FACTOR};
use crate::model::TrainedModel;
use crate::predicate::{evaluate, split_dataset, validate, CompareOp, Literal, Predicate};
use crate::tcav::{
    class_gradients, statistical_test, ClassGradients, ScoreVariant, TcavError, DEFAULT_ALPHA,
};

/// Version of the JSON report layout emitted by [`TcavReport`] and
/// [`FairnessReport`].
pub const REPORT_SCHEMA_VERSION: u32 = 1;

const GOLDEN: u64 = 0x9e3779b97f4a7c15;

/// Decorrelate a derived seed from its base without losing determinism.
///
/// Used throughout the pipeline to give every sub-task (per-concept pools,
/// shuffles, bootstrap draws) its own seed; callers layering more stages on
/// top (data generation per sweep entry, say) should derive theirs the same
/// way so that no two stages ever share a raw seed.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    base ^ salt.wrapping_add(1).wrapping_mul(GOLDEN)
}

fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Configuration of a TCAV run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavConfig {
    /// Layers to analyze; empty means every hidden layer.
    pub layers: Vec<String>,
    /// CAVs per ensemble (and per random ensemble).
    pub n_runs: usize,
    /// Significance level of the statistical test.
    pub alpha: f64,
    /// Concept examples per side (cap, for natural sources).
    pub examples_per_side: usize,
    pub seed: u64,
    /// Where concept examples come from.
    pub source: CavSource,
    pub score_variant: ScoreVariant,
}

impl Default for TcavConfig {
    fn default() -> Self {
        TcavConfig {
            layers: Vec::new(),
            n_runs: 10,
            alpha: DEFAULT_ALPHA,
            examples_per_side: 500,
            seed: 0,
            source: CavSource::TestData,
            score_variant: ScoreVariant::MeanDerivative,
        }
    }
}

/// Where one concept's example pool ended up coming from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptPoolSummary {
    pub concept: String,
    pub source: CavSource,
    pub n_positive: usize,
    pub n_negative: usize,
    /// Fraction of pool positives actually satisfying the predicate (1.0
    /// except for per-side generation, which does not re-filter).
    pub positive_satisfaction_rate: f64,
    pub negative_violation_rate: f64,
    /// Generator draws spent, where a generator was involved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<usize>,
}

/// TCAV outcome for one (concept, class, layer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavResult {
    pub concept: String,
    pub class_index: usize,
    pub class_label: String,
    pub layer: String,
    /// Per-ensemble-run TCAV scores.
    pub scores: Vec<f64>,
    pub score_mean: f64,
    pub score_std: f64,
    /// Per-ensemble-run mean angles, degrees.
    pub angles: Vec<f64>,
    pub angle_mean: f64,
    pub angle_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub p_value: f64,
    pub passed: bool,
    /// |X_k|: class-k inputs the scores were averaged over.
    pub n_class_inputs: usize,
    /// Inputs skipped by the angle because their gradient vanished.
    pub zero_gradient_rows: usize,
}

/// Full output of [`run_tcav`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavReport {
    pub schema_version: u32,
    pub source: CavSource,
    pub score_variant: ScoreVariant,
    pub alpha: f64,
    pub n_runs: usize,
    pub examples_per_side: usize,
    pub seed: u64,
    pub layers: Vec<String>,
    pub classes: Vec<String>,
    pub concepts: Vec<ConceptPoolSummary>,
    /// Grouped by concept, then layer, then class.
    pub results: Vec<TcavResult>,
}

fn resolve_layers(model: &TrainedModel, requested: &[String]) -> Result<Vec<String>, TcavError> {
    if requested.is_empty() {
        return Ok(model.layer_names().to_vec());
    }
    for layer in requested {
        model.layer_index(layer)?;
    }
    Ok(requested.to_vec())
}

/// Deterministically subsample `ds` down to at most `n` rows.
fn cap_rows(ds: Dataset, n: usize, seed: u64) -> Dataset {
    if ds.len() <= n {
        return ds;
    }
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    indices.truncate(n);
    ds.take(&indices)
}

fn natural_pool(
    data: &Dataset,
    pred: &Predicate,
    cfg: &TcavConfig,
    seed: u64,
) -> Result<(Dataset, Dataset), TcavError> {
    let (pos, neg) = split_dataset(pred, data);
    for (side, part) in [("positive", &pos), ("negative", &neg)] {
        if part.len() < MIN_EXAMPLES_PER_SIDE {
            return Err(TcavError::ThinConceptSide {
                concept: pred.to_string(),
                side,
                got: part.len(),
                need: MIN_EXAMPLES_PER_SIDE,
            });
        }
    }
    Ok((
        cap_rows(pos, cfg.examples_per_side, derive_seed(seed, 101)),
        cap_rows(neg, cfg.examples_per_side, derive_seed(seed, 102)),
    ))
}

fn uniform_pool(
    data: &Dataset,
    pred: &Predicate,
    cfg: &TcavConfig,
    seed: u64,
) -> Result<(Dataset, Dataset, usize), TcavError> {
    let n = cfg.examples_per_side;
    let budget = P2_BUDGET_FACTOR * n;
    let batch = n.max(256);
    let mut pos_rows: Vec<Row> = Vec::with_capacity(n);
    let mut neg_rows: Vec<Row> = Vec::with_capacity(n);
    let mut draws = 0usize;
    let mut batch_idx = 0u64;
    while (pos_rows.len() < n || neg_rows.len() < n) && draws < budget {
        let sample = uniform_sample(
            data.schema(),
            batch.min(budget - draws),
            derive_seed(seed, 7 + batch_idx),
        );
        batch_idx += 1;
        for row in sample.rows() {
            if pos_rows.len() >= n && neg_rows.len() >= n {
                break;
            }
            draws += 1;
            if evaluate(pred, row, data.schema()) {
                if pos_rows.len() < n {
                    pos_rows.push(row.clone());
                }
            } else if neg_rows.len() < n {
                neg_rows.push(row.clone());
            }
        }
    }
    if pos_rows.len() < n || neg_rows.len() < n {
        return Err(TcavError::UniformBudgetExhausted {
            concept: pred.to_string(),
            budget,
            requested: n,
            positives: pos_rows.len(),
            negatives: neg_rows.len(),
        });
    }
    let schema = data.schema().clone();
    Ok((
        Dataset::unlabeled(schema.clone(), pos_rows).expect("uniform rows conform"),
        Dataset::unlabeled(schema, neg_rows).expect("uniform rows conform"),
        draws,
    ))
}

fn concept_pool(
    data: &Dataset,
    pred: &Predicate,
    cfg: &TcavConfig,
    seed: u64,
) -> Result<(Dataset, Dataset, ConceptPoolSummary), TcavError> {
    let concept = pred.to_string();
    let (pos, neg, rates, draws) = match cfg.source {
        CavSource::TrainData | CavSource::TestData => {
            let (pos, neg) = natural_pool(data, pred, cfg, seed)?;
            (pos, neg, (1.0, 1.0), None)
        }
        CavSource::Uniform => {
            let (pos, neg, draws) = uniform_pool(data, pred, cfg, seed)?;
            (pos, neg, (1.0, 1.0), Some(draws))
        }
        CavSource::GeneratorP1 => {
            let ex = concept_examples_p1(data, pred, cfg.examples_per_side, derive_seed(seed, 11))?;
            let rates = (ex.positive_satisfaction_rate, ex.negative_violation_rate);
            (ex.positives, ex.negatives, rates, Some(ex.n_draws))
        }
        CavSource::GeneratorP2 => {
            let ex = concept_examples_p2(data, pred, cfg.examples_per_side, derive_seed(seed, 13))?;
            let rates = (ex.positive_satisfaction_rate, ex.negative_violation_rate);
            (ex.positives, ex.negatives, rates, Some(ex.n_draws))
        }
    };
    let summary = ConceptPoolSummary {
        concept,
        source: cfg.source,
        n_positive: pos.len(),
        n_negative: neg.len(),
        positive_satisfaction_rate: rates.0,
        negative_violation_rate: rates.1,
        n_draws: draws,
    };
    Ok((pos, neg, summary))
}

/// Train `n_runs` "random concept" CAVs by reshuffling the pooled example
/// labels each run. Seeds are keyed by the pool's content (not its role),
/// which keeps complementary-concept audits exactly symmetric.
fn random_cavs(
    pos_acts: &Array2<f64>,
    neg_acts: &Array2<f64>,
    concept: &str,
    layer: &str,
    source: CavSource,
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<Cav>, TcavError> {
    let pool =
        concatenate(Axis(0), &[pos_acts.view(), neg_acts.view()]).expect("sides share a width");
    let content = fnv1a64(pool.iter().flat_map(|v| v.to_le_bytes()));
    let n_pos = pos_acts.nrows();
    let mut cavs = Vec::with_capacity(n_runs);
    for run in 0..n_runs as u64 {
        let seed = content ^ base_seed ^ run.wrapping_mul(GOLDEN);
        let mut indices: Vec<usize> = (0..pool.nrows()).collect();
        indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled_pos = pool.select(Axis(0), &indices[..n_pos]);
        let shuffled_neg = pool.select(Axis(0), &indices[n_pos..]);
        cavs.push(train_cav(
            shuffled_pos.view(),
            shuffled_neg.view(),
            concept,
            layer,
            source,
            seed,
        )?);
    }
    Ok(cavs)
}

fn ensemble_result(
    grads: &ClassGradients,
    ensemble: &CavEnsemble,
    random: &[Cav],
    class_label: &str,
    alpha: f64,
    variant: ScoreVariant,
) -> Result<TcavResult, TcavError> {
    let mut scores = Vec::with_capacity(ensemble.cavs.len());
    let mut angles = Vec::with_capacity(ensemble.cavs.len());
    for cav in &ensemble.cavs {
        scores.push(grads.score(cav.vector_view(), variant)?);
        angles.push(grads.angle(cav.vector_view())?.degrees);
    }
    let random_scores: Vec<f64> = random
        .iter()
        .map(|cav| grads.score(cav.vector_view(), variant))
        .collect::<Result<_, _>>()?;
    let test = statistical_test(&scores, &random_scores, alpha, ensemble.accuracy_mean)?;
    let (score_mean, score_std) = mean_std(&scores);
    let (angle_mean, angle_std) = mean_std(&angles);
    Ok(TcavResult {
        concept: ensemble.cavs[0].concept.clone(),
        class_index: grads.class_index(),
        class_label: class_label.to_owned(),
        layer: grads.layer().to_owned(),
        scores,
        score_mean,
        score_std,
        angles,
        angle_mean,
        angle_std,
        accuracy_mean: ensemble.accuracy_mean,
        accuracy_std: ensemble.accuracy_std,
        p_value: test.p_value,
        passed: test.passed,
        n_class_inputs: grads.n_rows(),
        zero_gradient_rows: grads.zero_gradient_rows(),
    })
}

/// Run the full TCAV analysis of `concepts` against `model`.
///
/// `data` plays two roles: its class-k rows are the inputs scores average
/// over, and — depending on `cfg.source` — it is either split directly
/// into concept examples (natural sources) or used to fit the generative
/// model behind them. Everything is deterministic in `cfg.seed`.
pub fn run_tcav(
    model: &TrainedModel,
    data: &Dataset,
    concepts: &[Predicate],
    cfg: &TcavConfig,
) -> Result<TcavReport, TcavError> {
    assert!(cfg.n_runs >= 2, "an ensemble needs at least 2 runs");
    assert!(!concepts.is_empty(), "need at least one concept");
    if !data.is_labeled() {
        return Err(TcavError::Unlabeled);
    }
    for pred in concepts {
        validate(pred, data.schema())?;
    }
    let layers = resolve_layers(model, &cfg.layers)?;
    let classes = model.classes().to_vec();

    // Gradients depend only on (layer, class); share them across concepts
    // and ensemble runs.
    let mut grads = Vec::with_capacity(layers.len());
    for layer in &layers {
        let mut per_class = Vec::with_capacity(classes.len());
        for k in 0..classes.len() {
            per_class.push(class_gradients(model, data, layer, k)?);
        }
        grads.push(per_class);
    }

    let mut summaries = Vec::with_capacity(concepts.len());
    let mut results = Vec::with_capacity(concepts.len() * layers.len() * classes.len());
    for (ci, pred) in concepts.iter().enumerate() {
        let concept_seed = derive_seed(cfg.seed, ci as u64);
        let (pos, neg, summary) = concept_pool(data, pred, cfg, concept_seed)?;
        summaries.push(summary);
        let concept = pred.to_string();
        for (li, layer) in layers.iter().enumerate() {
            let pos_acts = compute_activations(model, &pos, layer)?;
            let neg_acts = compute_activations(model, &neg, layer)?;
            let ensemble = train_cav_ensemble(
                pos_acts.view(),
                neg_acts.view(),
                &concept,
                layer,
                cfg.source,
                cfg.n_runs,
                concept_seed,
            )?;
            let random = random_cavs(
                &pos_acts,
                &neg_acts,
                &concept,
                layer,
                cfg.source,
                cfg.n_runs,
                concept_seed,
            )?;
            for (k, class_label) in classes.iter().enumerate() {
                results.push(ensemble_result(
                    &grads[li][k],
                    &ensemble,
                    &random,
                    class_label,
                    cfg.alpha,
                    cfg.score_variant,
                )?);
            }
        }
    }

    Ok(TcavReport {
        schema_version: REPORT_SCHEMA_VERSION,
        source: cfg.source,
        score_variant: cfg.score_variant,
        alpha: cfg.alpha,
        n_runs: cfg.n_runs,
        examples_per_side: cfg.examples_per_side,
        seed: cfg.seed,
        layers,
        classes,
        concepts: summaries,
        results,
    })
}

/// Configuration of [`fairness_audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessConfig {
    /// Layers to audit; empty means every hidden layer.
    pub layers: Vec<String>,
    pub n_runs: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Class counted as the favorable outcome by demographic parity;
    /// defaults to the model's last class.
    pub positive_class: Option<String>,
    pub score_variant: ScoreVariant,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            layers: Vec::new(),
            n_runs: 10,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            positive_class: None,
            score_variant: ScoreVariant::MeanDerivative,
        }
    }
}

/// Fairness diagnostics for one (class, layer) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessEntry {
    pub class_index: usize,
    pub class_label: String,
    pub layer: String,
    /// |TCAV_C1 − TCAV_C2| over the ensemble score means.
    pub gap: f64,
    /// Mean TCAV angles, degrees.
    pub angle_c1: f64,
    pub angle_c2: f64,
    /// Their absolute deviations from the 90° insensitivity point.
    pub angle_dev_c1: f64,
    pub angle_dev_c2: f64,
    pub c1: TcavResult,
    pub c2: TcavResult,
}

/// Full output of [`fairness_audit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub schema_version: u32,
    pub protected_column: String,
    pub protected_value: String,
    /// Predicate text of C1 = (A == A1) and its complement C2.
    pub concept_c1: String,
    pub concept_c2: String,
    /// Demographic parity of the model's predictions on the audit data:
    /// Pr[positive | A == A1] − Pr[positive | A != A1].
    pub epsilon: f64,
    pub positive_class: String,
    pub n_runs: usize,
    pub alpha: f64,
    pub seed: u64,
    pub layers: Vec<String>,
    pub classes: Vec<String>,
    /// Grouped by class, then layer.
    pub entries: Vec<FairnessEntry>,
}

/// Audit the model's sensitivity to a protected feature.
///
/// Builds the complementary concepts C1 = (A == A1) and C2 = NOT C1,
/// trains CAV ensembles for both from the natural split of `eval` at each
/// layer, and reports the per-(class, layer) TCAV gap and angles next to
/// the model's measured demographic parity. Because ensemble and
/// random-CAV seeding is keyed by example content rather than by concept
/// role, auditing the complementary value swaps C1/C2 in the report but
/// leaves every gap bit-identical.
pub fn fairness_audit(
    model: &TrainedModel,
    eval: &Dataset,
    protected_column: &str,
    protected_value: &str,
    cfg: &FairnessConfig,
) -> Result<FairnessReport, TcavError> {
    assert!(cfg.n_runs >= 2, "an ensemble needs at least 2 runs");
    if !eval.is_labeled() {
        return Err(TcavError::Unlabeled);
    }
    let schema = eval.schema();
    let col = schema
        .column(protected_column)
        .ok_or_else(|| TcavError::BadProtectedColumn {
            column: protected_column.to_owned(),
        })?;
    match &col.domain {
        ColumnDomain::Categorical { values } => {
            if !values.iter().any(|v| v == protected_value) {
                return Err(TcavError::ProtectedValueAbsent {
                    column: protected_column.to_owned(),
                    value: protected_value.to_owned(),
                });
            }
        }
        ColumnDomain::Numeric { .. } => {
            return Err(TcavError::BadProtectedColumn {
                column: protected_column.to_owned(),
            });
        }
    }

    let c1 = Predicate::cmp(
        protected_column,
        CompareOp::Eq,
        Literal::Str(protected_value.to_owned()),
    );
    let c2 = Predicate::not(c1.clone());
    validate(&c1, schema)?;

    let (side1, side2) = split_dataset(&c1, eval);
    for (side, part) in [("positive", &side1), ("negative", &side2)] {
        if part.len() < MIN_EXAMPLES_PER_SIDE {
            return Err(TcavError::ThinConceptSide {
                concept: c1.to_string(),
                side,
                got: part.len(),
                need: MIN_EXAMPLES_PER_SIDE,
            });
        }
    }

    // Demographic parity of the model on the audit data.
    let classes = model.classes().to_vec();
    let positive_class = match &cfg.positive_class {
        Some(name) => classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TcavError::UnknownClassLabel(name.clone()))?,
        None => classes.len() - 1,
    };
    let predictions = model.predict(eval)?;
    let col_idx = schema.column_index(protected_column).expect("checked");
    let (mut n_a, mut pos_a, mut n_b, mut pos_b) = (0u64, 0u64, 0u64, 0u64);
    for (pred_class, row) in predictions.iter().zip(eval.rows()) {
        let hit = u64::from(*pred_class == positive_class);
        if row[col_idx].as_categorical() == Some(protected_value) {
            n_a += 1;
            pos_a += hit;
        } else {
            n_b += 1;
            pos_b += hit;
        }
    }
    let epsilon = pos_a as f64 / n_a as f64 - pos_b as f64 / n_b as f64;

    let layers = resolve_layers(model, &cfg.layers)?;
    let concept_c1 = c1.to_string();
    let concept_c2 = c2.to_string();

    let mut grads = Vec::with_capacity(layers.len());
    let mut ensembles = Vec::with_capacity(layers.len());
    for layer in &layers {
        let acts1 = compute_activations(model, &side1, layer)?;
        let acts2 = compute_activations(model, &side2, layer)?;
        let ens1 = train_cav_ensemble(
            acts1.view(),
            acts2.view(),
            &concept_c1,
            layer,
            CavSource::TestData,
            cfg.n_runs,
            cfg.seed,
        )?;
        let ens2 = train_cav_ensemble(
            acts2.view(),
            acts1.view(),
            &concept_c2,
            layer,
            CavSource::TestData,
            cfg.n_runs,
            cfg.seed,
        )?;
        let rand1 = random_cavs(
            &acts1,
            &acts2,
            &concept_c1,
            layer,
            CavSource::TestData,
            cfg.n_runs,
            cfg.seed,
        )?;
        let rand2 = random_cavs(
            &acts2,
            &acts1,
            &concept_c2,
            layer,
            CavSource::TestData,
            cfg.n_runs,
            cfg.seed,
        )?;
        ensembles.push((ens1, ens2, rand1, rand2));

        let mut per_class = Vec::with_capacity(classes.len());
        for k in 0..classes.len() {
            per_class.push(class_gradients(model, eval, layer, k)?);
        }
        grads.push(per_class);
    }

    let mut entries = Vec::with_capacity(classes.len() * layers.len());
    for (k, class_label) in classes.iter().enumerate() {
        for li in 0..layers.len() {
            let (ens1, ens2, rand1, rand2) = &ensembles[li];
            let r1 = ensemble_result(
                &grads[li][k],
                ens1,
                rand1,
                class_label,
                cfg.alpha,
                cfg.score_variant,
            )?;
            let r2 = ensemble_result(
                &grads[li][k],
                ens2,
                rand2,
                class_label,
                cfg.alpha,
                cfg.score_variant,
            )?;
            entries.push(FairnessEntry {
                class_index: k,
                class_label: class_label.clone(),
                layer: layers[li].clone(),
                gap: (r1.score_mean - r2.score_mean).abs(),
                angle_c1: r1.angle_mean,
                angle_c2: r2.angle_mean,
                angle_dev_c1: (r1.angle_mean - 90.0).abs(),
                angle_dev_c2: (r2.angle_mean - 90.0).abs(),
                c1: r1,
                c2: r2,
            });
        }
    }

    Ok(FairnessReport {
        schema_version: REPORT_SCHEMA_VERSION,
        protected_column: protected_column.to_owned(),
        protected_value: protected_value.to_owned(),
        concept_c1,
        concept_c2,
        epsilon,
        positive_class: classes[positive_class].clone(),
        n_runs: cfg.n_runs,
        alpha: cfg.alpha,
        seed: cfg.seed,
        layers,
        classes,
        entries,
    })
}
