//! Acceptance gate for the workspace: one test per criterion, covering the
//! headline behaviours end to end — sign patterns on a synthetic XOR task,
//! gradient and identity checks, source regimes, generator procedures, the
//! bias sweep, parity oracles and determinism.
//!
//! Each test prints `criterion N (<label>): PASS [<elapsed>]` once its
//! assertions hold, so the suite's output is one pass/fail line per
//! criterion (run with `--nocapture` to see the timing lines too).

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use once_cell::sync::Lazy;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use tabcav_core::cav::{compute_activations, train_cav, train_cav_ensemble, Cav, CavSource};
use tabcav_core::data::{
    demographic_parity, gen_biased_income, gen_xor_synthetic, protected_column, write_csv, Dataset,
    Encoder, Row, TableSchema, Value, INCOME_GROUP_A, INCOME_GROUP_B, INCOME_POSITIVE_CLASS,
    INCOME_PROTECTED_COLUMN,
};
use tabcav_core::generator::{concept_examples_p1, concept_examples_p2, Procedure};
use tabcav_core::model::{self, ModelConfig, TrainedModel};
use tabcav_core::predicate::{
    evaluate, parse_predicate, split_dataset, CompareOp, Literal, Predicate,
};
use tabcav_core::tcav::{
    class_gradients, derive_seed, fairness_audit, run_tcav, tcav_angle, tcav_score, FairnessConfig,
    FairnessReport, ScoreVariant, TcavConfig,
};

// ---------------------------------------------------------------------------
// Shared fixtures

/// XOR benchmark: the label says whether X1 and X2 have opposite signs, so
/// the two mixed-sign quadrant concepts push class 1 and the two same-sign
/// quadrant concepts push class 0, while X5 and X10 carry no signal.
struct XorFixture {
    train: Dataset,
    test: Dataset,
    model: TrainedModel,
    elapsed: Duration,
}

static XOR: Lazy<XorFixture> = Lazy::new(|| {
    let t0 = Instant::now();
    let train = gen_xor_synthetic(50_000, 41);
    let test = gen_xor_synthetic(10_000, 42);
    let model = model::train(&train, &ModelConfig::default()).expect("xor model trains");
    XorFixture {
        train,
        test,
        model,
        elapsed: t0.elapsed(),
    }
});

/// The six XOR concepts: two quadrants implying a negative product, two
/// irrelevant half-spaces, two quadrants implying a positive product.
const XOR_CONCEPTS: [(&str, &str); 6] = [
    ("C1", "X1 > 0 AND X2 < 0"),
    ("C2", "X1 < 0 AND X2 > 0"),
    ("C3", "X5 > 0"),
    ("C4", "X10 < 0"),
    ("C5", "X1 > 0 AND X2 > 0"),
    ("C6", "X1 < 0 AND X2 < 0"),
];

fn xor_predicates() -> Vec<Predicate> {
    XOR_CONCEPTS
        .iter()
        .map(|(_, text)| parse_predicate(text).expect("concept parses"))
        .collect()
}

/// Expected TCAV score sign of each concept for class `1`; `0` marks the
/// irrelevant concepts (no expectation). Signs flip for class `0`.
const XOR_SIGNS_FOR_CLASS_1: [i8; 6] = [1, 1, 0, 0, -1, -1];

const SWEEP_EPSILONS: [f64; 4] = [-0.3, -0.2, -0.1, 0.0];

struct SweepEntry {
    epsilon_target: f64,
    model: TrainedModel,
    eval: Dataset,
    report: FairnessReport,
}

struct SweepFixture {
    entries: Vec<SweepEntry>,
    elapsed: Duration,
}

/// The bias sweep: per ε, generate a biased income table, train the default
/// classifier on it, and audit the protected column on fresh data. Entries
/// run on four threads, mirroring how the CLI parallelizes the sweep.
static SWEEP: Lazy<SweepFixture> = Lazy::new(|| {
    use rayon::prelude::*;
    let t0 = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .expect("thread pool");
    let entries: Vec<SweepEntry> = pool.install(|| {
        SWEEP_EPSILONS
            .par_iter()
            .enumerate()
            .map(|(i, &eps)| {
                let train_ds = gen_biased_income(30_000, eps, derive_seed(60, 2 * i as u64))
                    .expect("feasible epsilon");
                let eval = gen_biased_income(10_000, eps, derive_seed(60, 2 * i as u64 + 1))
                    .expect("feasible epsilon");
                // Audits read signal from the representation, so the sweep
                // trains with weak decay: the protected column must stay
                // decodable even where the model ignores it, otherwise the
                // ε=0 control's CAVs degenerate to noise directions with
                // arbitrary angles.
                let cfg = ModelConfig {
                    seed: derive_seed(60, 100 + i as u64),
                    l2: 1e-4,
                    ..ModelConfig::default()
                };
                let model = model::train(&train_ds, &cfg).expect("income model trains");
                let audit = FairnessConfig {
                    layers: Vec::new(),
                    n_runs: 10,
                    alpha: 0.05,
                    seed: 60,
                    positive_class: Some(INCOME_POSITIVE_CLASS.to_string()),
                    score_variant: ScoreVariant::MeanDerivative,
                };
                let report = fairness_audit(
                    &model,
                    &eval,
                    INCOME_PROTECTED_COLUMN,
                    INCOME_GROUP_A,
                    &audit,
                )
                .expect("audit runs");
                SweepEntry {
                    epsilon_target: eps,
                    model,
                    eval,
                    report,
                }
            })
            .collect()
    });
    SweepFixture {
        entries,
        elapsed: t0.elapsed(),
    }
});

// ---------------------------------------------------------------------------
// Small helpers

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(xs: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut r = vec![0.0; xs.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                r[idx] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// A unit probe vector packaged as a CAV so the public score/angle/
/// sensitivity entry points accept it.
fn probe_cav(layer: &str, vector: Vec<f64>) -> Cav {
    Cav {
        concept: "probe".to_string(),
        layer: layer.to_string(),
        vector,
        accuracy: 1.0,
        seed: 0,
        source: CavSource::TestData,
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr_standard()))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Standard normal sampling without pulling in another dev-dependency:
/// Box–Muller over the rng's uniforms.
struct BoxMuller;
impl rand::distr::Distribution<f64> for BoxMuller {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
fn rand_distr_standard() -> BoxMuller {
    BoxMuller
}

// ---------------------------------------------------------------------------
// Criterion 1

#[test]
fn criterion_1_xor_sign_pattern() {
    let t0 = Instant::now();
    let fx = &*XOR;
    let predicates = xor_predicates();
    let cfg = TcavConfig {
        layers: Vec::new(),
        n_runs: 10,
        alpha: 0.05,
        examples_per_side: 500,
        seed: 7,
        source: CavSource::TestData,
        score_variant: ScoreVariant::MeanDerivative,
    };
    let report = run_tcav(&fx.model, &fx.test, &predicates, &cfg).expect("tcav runs");
    assert_eq!(report.layers.len(), 3, "default model has three layers");
    assert_eq!(report.results.len(), 6 * 3 * 2);

    let texts: Vec<String> = predicates.iter().map(|p| p.to_string()).collect();
    for r in &report.results {
        let ci = texts
            .iter()
            .position(|t| *t == r.concept)
            .expect("result maps back to a concept");
        let expected_for_1 = XOR_SIGNS_FOR_CLASS_1[ci];
        if expected_for_1 != 0 {
            let expected = if r.class_label == "1" {
                expected_for_1
            } else {
                -expected_for_1
            };
            assert!(
                (r.score_mean > 0.0) == (expected > 0),
                "{} at {} for class {}: score {} has the wrong sign",
                XOR_CONCEPTS[ci].0,
                r.layer,
                r.class_label,
                r.score_mean,
            );
        } else {
            // Irrelevant concepts must fail the statistical test, with
            // chance-level CAV accuracy or an insignificant p-value.
            assert!(
                !r.passed,
                "{} at {} unexpectedly passed (p = {}, accuracy {})",
                XOR_CONCEPTS[ci].0, r.layer, r.p_value, r.accuracy_mean,
            );
            assert!(
                (0.4..=0.65).contains(&r.accuracy_mean) || r.p_value >= 0.05,
                "{} at {}: accuracy {} and p {} both look significant",
                XOR_CONCEPTS[ci].0,
                r.layer,
                r.accuracy_mean,
                r.p_value,
            );
        }
    }
    let elapsed = t0.elapsed() + fx.elapsed;
    assert!(
        elapsed < Duration::from_secs(300),
        "took {elapsed:?}, budget 5 minutes"
    );
    println!("criterion 1 (xor sign pattern): PASS [{elapsed:.1?}]");
}

// ---------------------------------------------------------------------------
// Criterion 2

/// A random ReLU classifier over the XOR schema with 1–3 hidden layers.
fn random_model(rng: &mut ChaCha8Rng, encoder: &Encoder) -> TrainedModel {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![encoder.dim()];
    for _ in 0..depth {
        dims.push(rng.random_range(3..=14));
    }
    let n_classes = rng.random_range(2..=3);
    dims.push(n_classes);
    let layers = dims
        .windows(2)
        .map(|w| {
            let scale = 1.0 / (w[0] as f64).sqrt();
            let weights = Array2::from_shape_fn((w[0], w[1]), |_| {
                rng.sample::<f64, _>(rand_distr_standard()) * scale
            });
            let bias =
                Array1::from_shape_fn(w[1], |_| rng.sample::<f64, _>(rand_distr_standard()) * 0.1);
            (weights, bias)
        })
        .collect();
    let classes = (0..n_classes).map(|i| format!("c{i}")).collect();
    TrainedModel::from_parts(encoder.clone(), classes, layers).expect("valid shapes")
}

#[test]
fn criterion_2_gradient_matches_finite_differences() {
    let t0 = Instant::now();
    let encoder = Encoder::fit(&gen_xor_synthetic(200, 1)).expect("encoder fits");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    'models: for _ in 0..40 {
        let net = random_model(&mut rng, &encoder);
        let layer_names: Vec<String> = net.layer_names().to_vec();
        for _ in 0..12 {
            let x = Array1::from_shape_fn(encoder.dim(), |_| {
                rng.sample::<f64, _>(rand_distr_standard()) * 1.5
            });
            let layer = layer_names[rng.random_range(0..layer_names.len())].clone();
            let k = rng.random_range(0..net.classes().len());
            let pass = net.forward_with_activations(x.view()).expect("forward");
            let idx = net.layer_index(&layer).unwrap();
            let a = pass.activations[idx].clone();

            // Keep only tuples safely away from ReLU kinks: there the
            // restriction of the logit to a line is exactly linear, so the
            // central difference has no truncation error at all.
            let margin = net.kink_margin(&layer, a.view()).expect("margin");
            if margin < 1e-3 {
                continue;
            }
            let v = random_unit(&mut rng, a.len());
            let cav = probe_cav(&layer, v.clone());
            let analytic =
                tabcav_core::tcav::sensitivity(&net, x.view(), &cav, k).expect("sensitivity");
            if analytic.abs() < 1e-6 {
                continue;
            }
            let h = 1e-6 * a.iter().fold(1.0f64, |m, &z| m.max(z.abs()));
            let vv = Array1::from(v);
            let f = |t: f64| {
                net.logits_from_layer(&layer, (&a + &(t * &vv)).view())
                    .expect("logits")[k]
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let rel = (fd - analytic).abs() / analytic.abs();
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "relative error {rel} at layer {layer}, class {k} (fd {fd}, analytic {analytic})"
            );
            checked += 1;
            if checked >= 150 {
                break 'models;
            }
        }
    }
    assert!(checked >= 100, "only {checked} kink-free tuples sampled");
    let elapsed = t0.elapsed();
    assert!(
        elapsed < Duration::from_secs(30),
        "took {elapsed:?}, budget 30 seconds"
    );
    println!(
        "criterion 2 (gradients vs finite differences, {checked} tuples, worst rel {worst:.2e}): PASS [{elapsed:.1?}]"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3

#[test]
fn criterion_3_score_angle_identity() {
    let t0 = Instant::now();
    let fx = &*XOR;
    let mut rng = ChaCha8Rng::seed_from_u64(3030);
    let class_rows = [fx.test.rows_of_class(0), fx.test.rows_of_class(1)];
    let layer_names: Vec<String> = fx.model.layer_names().to_vec();

    let mut checked = 0usize;
    while checked < 120 {
        let k = rng.random_range(0..2usize);
        let rows = &class_rows[k];
        let j = rng.random_range(0..rows.len());
        let one = rows.take(&[j]);
        let layer = &layer_names[rng.random_range(0..layer_names.len())];
        let width = fx.model.layer_width(layer).unwrap();
        let cav = probe_cav(layer, random_unit(&mut rng, width));

        let s = tcav_score(&fx.model, &one, &cav, k).expect("score");
        let angle = tcav_angle(&fx.model, &one, &cav, k).expect("angle");
        assert_eq!(angle.skipped_rows, 0);

        // Reconstruct the gradient norm through the same public scoring
        // interface by probing along every basis vector: score(e_i) is the
        // i-th gradient coordinate for a single-row class set.
        let grads = class_gradients(&fx.model, &one, layer, k).expect("gradients");
        let mut sq = 0.0;
        for i in 0..width {
            let mut e = vec![0.0; width];
            e[i] = 1.0;
            let gi = grads
                .score(ArrayView1::from(&e), ScoreVariant::MeanDerivative)
                .unwrap();
            sq += gi * gi;
        }
        let norm = sq.sqrt();
        let reconstructed = norm * angle.degrees.to_radians().cos();
        assert!(
            (s - reconstructed).abs() <= 1e-9 * norm.max(1.0),
            "row {j}, layer {layer}, class {k}: score {s} vs |grad|·cos {reconstructed}"
        );
        checked += 1;
    }
    let elapsed = t0.elapsed();
    println!("criterion 3 (score/angle identity, {checked} rows): PASS [{elapsed:.1?}]");
}

// ---------------------------------------------------------------------------
// Criterion 4

#[test]
fn criterion_4_uniform_source_equivalence() {
    let t0 = Instant::now();
    let fx = &*XOR;
    let predicates = xor_predicates();
    let cfg = TcavConfig {
        layers: Vec::new(),
        n_runs: 10,
        alpha: 0.05,
        examples_per_side: 500,
        seed: 7,
        source: CavSource::Uniform,
        score_variant: ScoreVariant::MeanDerivative,
    };
    let report = run_tcav(&fx.model, &fx.test, &predicates, &cfg).expect("tcav runs");
    let texts: Vec<String> = predicates.iter().map(|p| p.to_string()).collect();
    for r in &report.results {
        let ci = texts.iter().position(|t| *t == r.concept).unwrap();
        let expected_for_1 = XOR_SIGNS_FOR_CLASS_1[ci];
        if expected_for_1 == 0 {
            continue;
        }
        let expected = if r.class_label == "1" {
            expected_for_1
        } else {
            -expected_for_1
        };
        assert!(
            (r.score_mean > 0.0) == (expected > 0),
            "uniform source: {} at {} for class {} has score {}",
            XOR_CONCEPTS[ci].0,
            r.layer,
            r.class_label,
            r.score_mean,
        );
    }

    // On the correlated income table the uniform source severs the columns'
    // joint structure, which shows up as markedly less stable concept
    // classifiers across ensemble runs.
    let sweep = &*SWEEP;
    let entry = &sweep.entries[1];
    assert_eq!(entry.epsilon_target, -0.2);
    let concept = vec![parse_predicate("education == 'Doctorate'").unwrap()];
    let mut stds = Vec::new();
    for source in [CavSource::TestData, CavSource::Uniform] {
        let cfg = TcavConfig {
            layers: Vec::new(),
            n_runs: 10,
            alpha: 0.05,
            examples_per_side: 400,
            seed: 13,
            source,
            score_variant: ScoreVariant::MeanDerivative,
        };
        let rep = run_tcav(&entry.model, &entry.eval, &concept, &cfg).expect("tcav runs");
        // Accuracy stats are per concept × layer; class 0's copy suffices.
        let per_layer: Vec<(String, f64)> = rep
            .results
            .iter()
            .filter(|r| r.class_label == rep.classes[0])
            .map(|r| (r.layer.clone(), r.accuracy_std))
            .collect();
        assert_eq!(per_layer.len(), 3);
        stds.push(per_layer);
    }
    let mut uniform_wider = 0;
    for ((layer, natural), (_, uniform)) in stds[0].iter().zip(&stds[1]) {
        if uniform > natural {
            uniform_wider += 1;
        }
        println!("  layer {layer}: accuracy std natural {natural:.4} vs uniform {uniform:.4}");
    }
    assert!(
        uniform_wider >= 2,
        "uniform-source accuracy std wider on only {uniform_wider} of 3 layers"
    );
    let elapsed = t0.elapsed();
    println!("criterion 4 (uniform-source equivalence): PASS [{elapsed:.1?}]");
}

// ---------------------------------------------------------------------------
// Criterion 5

#[test]
fn criterion_5_procedure_equivalence() {
    let t0 = Instant::now();
    let fx = &*XOR;
    let layer_names: Vec<String> = fx.model.layer_names().to_vec();
    let class_rows = [fx.test.rows_of_class(0), fx.test.rows_of_class(1)];

    for (name, text) in &XOR_CONCEPTS[..2] {
        let pred = parse_predicate(text).unwrap();
        let p1 = concept_examples_p1(&fx.train, &pred, 500, 91).expect("p1 synthesizes");
        let p2 = concept_examples_p2(&fx.train, &pred, 500, 92).expect("p2 synthesizes");
        for layer in &layer_names {
            let ensembles: Vec<_> = [&p1, &p2]
                .iter()
                .map(|ex| {
                    let pos = compute_activations(&fx.model, &ex.positives, layer).unwrap();
                    let neg = compute_activations(&fx.model, &ex.negatives, layer).unwrap();
                    let source = match ex.procedure {
                        Procedure::P1 => CavSource::GeneratorP1,
                        Procedure::P2 => CavSource::GeneratorP2,
                    };
                    train_cav_ensemble(pos.view(), neg.view(), text, layer, source, 10, 500)
                        .expect("ensemble trains")
                })
                .collect();

            let mean_vec = |cavs: &[Cav]| -> Vec<f64> {
                let dim = cavs[0].vector.len();
                let mut m = vec![0.0; dim];
                for cav in cavs {
                    for (mi, vi) in m.iter_mut().zip(&cav.vector) {
                        *mi += vi / cavs.len() as f64;
                    }
                }
                m
            };
            let cos = cosine(&mean_vec(&ensembles[0].cavs), &mean_vec(&ensembles[1].cavs));
            assert!(
                cos > 0.7,
                "{name} at {layer}: procedures disagree, cosine {cos:.3}"
            );

            for (k, rows) in class_rows.iter().enumerate() {
                let grads = class_gradients(&fx.model, rows, layer, k).unwrap();
                let mean_score = |cavs: &[Cav]| -> f64 {
                    cavs.iter()
                        .map(|c| {
                            grads
                                .score(c.vector_view(), ScoreVariant::MeanDerivative)
                                .unwrap()
                        })
                        .sum::<f64>()
                        / cavs.len() as f64
                };
                let s1 = mean_score(&ensembles[0].cavs);
                let s2 = mean_score(&ensembles[1].cavs);
                assert!(
                    (s1 > 0.0) == (s2 > 0.0),
                    "{name} at {layer}, class {k}: scores {s1} vs {s2} disagree in sign"
                );
            }
        }
    }
    let elapsed = t0.elapsed();
    assert!(
        elapsed < Duration::from_secs(180),
        "took {elapsed:?}, budget 3 minutes"
    );
    println!("criterion 5 (procedure 1 vs procedure 2): PASS [{elapsed:.1?}]");
}

// ---------------------------------------------------------------------------
// Criterion 6

#[test]
fn criterion_6_fairness_trend() {
    let t0 = Instant::now();
    let sweep = &*SWEEP;
    let layers: Vec<String> = sweep.entries[0].report.layers.clone();
    assert_eq!(layers.len(), 3);

    let model_eps: Vec<f64> = sweep.entries.iter().map(|e| e.report.epsilon).collect();
    let abs_eps: Vec<f64> = model_eps.iter().map(|e| e.abs()).collect();
    for (entry, &target) in sweep.entries.iter().zip(&SWEEP_EPSILONS) {
        println!(
            "  target {target:+.1}: data model epsilon {:+.4}",
            entry.report.epsilon
        );
    }

    // (a) The score gap grows with the measured bias, layer by layer.
    for layer in &layers {
        let gaps: Vec<f64> = sweep
            .entries
            .iter()
            .map(|e| {
                e.report
                    .entries
                    .iter()
                    .find(|x| x.layer == *layer && x.class_label == INCOME_POSITIVE_CLASS)
                    .expect("cell exists")
                    .gap
            })
            .collect();
        let rho = spearman(&gaps, &abs_eps);
        assert!(
            rho >= 0.8,
            "layer {layer}: gap {gaps:?} vs |epsilon| {abs_eps:?} has Spearman {rho:.2}"
        );
    }

    // (b) In the most biased model the audited group's concept opposes the
    // favourable class (angle past 90°) while its complement supports it.
    let most_biased = sweep
        .entries
        .iter()
        .max_by(|a, b| a.report.epsilon.abs().total_cmp(&b.report.epsilon.abs()))
        .unwrap();
    for layer in &layers {
        let cell = most_biased
            .report
            .entries
            .iter()
            .find(|x| x.layer == *layer && x.class_label == INCOME_POSITIVE_CLASS)
            .unwrap();
        assert!(
            cell.angle_c1 > 90.0 && 90.0 > cell.angle_c2,
            "most biased model, layer {layer}: angles {:.2}° / {:.2}°",
            cell.angle_c1,
            cell.angle_c2,
        );
    }

    // (c) The unbiased model leaves both groups near indifference.
    let unbiased = sweep
        .entries
        .iter()
        .find(|e| e.epsilon_target == 0.0)
        .unwrap();
    for layer in &layers {
        let cell = unbiased
            .report
            .entries
            .iter()
            .find(|x| x.layer == *layer && x.class_label == INCOME_POSITIVE_CLASS)
            .unwrap();
        for angle in [cell.angle_c1, cell.angle_c2] {
            assert!(
                (80.0..=100.0).contains(&angle),
                "unbiased model, layer {layer}: angle {angle:.2}° strays from 90°"
            );
        }
    }

    let elapsed = t0.elapsed() + sweep.elapsed;
    assert!(
        elapsed < Duration::from_secs(900),
        "took {elapsed:?}, budget 15 minutes"
    );
    println!("criterion 6 (fairness trend across the sweep): PASS [{elapsed:.1?}]");
}

// ---------------------------------------------------------------------------
// Criterion 7

#[test]
fn criterion_7_demographic_parity_oracle() {
    let t0 = Instant::now();
    // Group a: 10 rows, 2 favourable. Group b: 10 rows, 5 favourable.
    let mut predictions = vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 0];
    predictions.extend([1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
    let mut groups = vec!["a"; 10];
    groups.extend(vec!["b"; 10]);
    let eps = demographic_parity(&predictions, &groups, "a", "b", 1).expect("parity");
    assert_eq!(eps, -0.3, "hand-constructed rates (0.2, 0.5)");

    for (i, target) in [-0.3, -0.1, 0.0, 0.25].into_iter().enumerate() {
        let ds = gen_biased_income(50_000, target, 700 + i as u64).expect("feasible");
        let protected = protected_column(&ds, INCOME_PROTECTED_COLUMN).unwrap();
        let positive = ds
            .schema()
            .label
            .classes
            .iter()
            .position(|c| c == INCOME_POSITIVE_CLASS)
            .unwrap();
        let measured = demographic_parity(
            ds.labels(),
            &protected,
            INCOME_GROUP_A,
            INCOME_GROUP_B,
            positive,
        )
        .unwrap();
        assert!(
            (measured - target).abs() <= 0.02,
            "target {target}: measured {measured}"
        );
    }
    let elapsed = t0.elapsed();
    println!("criterion 7 (demographic parity oracle): PASS [{elapsed:.1?}]");
}

// ---------------------------------------------------------------------------
// Criterion 8

/// Straight-line reimplementation of predicate semantics used as the
/// reference: type-matched comparisons, AND/OR/NOT by Rust's operators,
/// and `false` whenever value and literal kinds disagree.
fn naive_eval(pred: &Predicate, row: &Row, schema: &TableSchema) -> bool {
    match pred {
        Predicate::And(l, r) => naive_eval(l, row, schema) && naive_eval(r, row, schema),
        Predicate::Or(l, r) => naive_eval(l, row, schema) || naive_eval(r, row, schema),
        Predicate::Not(c) => !naive_eval(c, row, schema),
        Predicate::Comparison {
            column,
            op,
            literal,
        } => {
            let idx = schema
                .columns
                .iter()
                .position(|c| c.name == *column)
                .expect("validated column");
            match (&row[idx], literal) {
                (Value::Number(x), Literal::Number(y)) => match op {
                    CompareOp::Lt => x < y,
                    CompareOp::Le => x <= y,
                    CompareOp::Gt => x > y,
                    CompareOp::Ge => x >= y,
                    CompareOp::Eq => x == y,
                    CompareOp::Ne => x != y,
                },
                (Value::Categorical(x), Literal::Str(y)) => match op {
                    CompareOp::Eq => x == y,
                    CompareOp::Ne => x != y,
                    _ => unreachable!("validation rejects ordered categoricals"),
                },
                _ => false,
            }
        }
    }
}

/// A random, schema-valid predicate of the given depth.
fn random_predicate(rng: &mut ChaCha8Rng, schema: &TableSchema, depth: usize) -> Predicate {
    if depth == 0 || rng.random::<f64>() < 0.4 {
        let col = &schema.columns[rng.random_range(0..schema.columns.len())];
        match &col.domain {
            tabcav_core::data::ColumnDomain::Numeric { min, max } => {
                let ops = [
                    CompareOp::Lt,
                    CompareOp::Le,
                    CompareOp::Gt,
                    CompareOp::Ge,
                    CompareOp::Eq,
                    CompareOp::Ne,
                ];
                let op = ops[rng.random_range(0..ops.len())];
                let span = (max - min).max(1.0);
                let x = min - 0.25 * span + rng.random::<f64>() * 1.5 * span;
                // Keep the literal on the parser's round-trippable grid.
                let x = (x * 16.0).round() / 16.0;
                Predicate::cmp(&col.name, op, Literal::Number(x))
            }
            tabcav_core::data::ColumnDomain::Categorical { values } => {
                let op = if rng.random::<bool>() {
                    CompareOp::Eq
                } else {
                    CompareOp::Ne
                };
                let value = values[rng.random_range(0..values.len())].clone();
                Predicate::cmp(&col.name, op, Literal::Str(value))
            }
        }
    } else {
        let l = Box::new(random_predicate(rng, schema, depth - 1));
        let r = Box::new(random_predicate(rng, schema, depth - 1));
        match rng.random_range(0..3) {
            0 => Predicate::And(l, r),
            1 => Predicate::Or(l, r),
            _ => Predicate::Not(l),
        }
    }
}

#[test]
fn criterion_8_oracle_suites() {
    let t0 = Instant::now();

    // (a) 1,000 randomized predicate/row pairs against the naive
    // interpreter, plus pretty-print → reparse round trips.
    let ds = gen_biased_income(500, -0.1, 88).unwrap();
    let schema = ds.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for i in 0..1_000 {
        let pred = random_predicate(&mut rng, schema, 3);
        let row = &ds.rows()[i % ds.len()];
        assert_eq!(
            evaluate(&pred, row, schema),
            naive_eval(&pred, row, schema),
            "pair {i}: {pred} disagrees with the naive interpreter"
        );
        let reparsed = parse_predicate(&pred.to_string()).expect("round-trips");
        assert_eq!(reparsed, pred, "pretty-print round trip changed {pred}");
    }

    // (b) tcav_score equals a naive mean of single-row sensitivities.
    let fx = &*XOR;
    let mut rng = ChaCha8Rng::seed_from_u64(818);
    for k in 0..2usize {
        let rows = fx.test.rows_of_class(k);
        let subset = rows.take(&(0..200).collect::<Vec<_>>());
        for layer in fx.model.layer_names() {
            let width = fx.model.layer_width(layer).unwrap();
            let cav = probe_cav(layer, random_unit(&mut rng, width));
            let batch = tcav_score(&fx.model, &subset, &cav, k).unwrap();
            let mut naive_sum = 0.0;
            for j in 0..subset.len() {
                let one = subset.take(&[j]);
                naive_sum += tcav_score(&fx.model, &one, &cav, k).unwrap();
            }
            let naive = naive_sum / subset.len() as f64;
            assert!(
                (batch - naive).abs() <= 1e-12 * naive.abs().max(1.0),
                "class {k} layer {layer}: batch {batch} vs naive {naive}"
            );
        }
    }

    // (c) Unit norm and orientation invariants on freshly emitted CAVs.
    let predicates = xor_predicates();
    for (ci, pred) in predicates.iter().enumerate() {
        let (pos_rows, neg_rows) = split_dataset(pred, &fx.test);
        let pos_rows = pos_rows.take(&(0..400.min(pos_rows.len())).collect::<Vec<_>>());
        let neg_rows = neg_rows.take(&(0..400.min(neg_rows.len())).collect::<Vec<_>>());
        for layer in fx.model.layer_names() {
            let pos = compute_activations(&fx.model, &pos_rows, layer).unwrap();
            let neg = compute_activations(&fx.model, &neg_rows, layer).unwrap();
            let ensemble = train_cav_ensemble(
                pos.view(),
                neg.view(),
                &pred.to_string(),
                layer,
                CavSource::TestData,
                5,
                404,
            )
            .unwrap();
            let single = train_cav(
                pos.view(),
                neg.view(),
                &pred.to_string(),
                layer,
                CavSource::TestData,
                404,
            )
            .unwrap();

            // Orientation contract: the full-pool mean difference projects
            // non-negatively onto the emitted vector.
            let mean_diff: Array1<f64> =
                pos.mean_axis(Axis(0)).unwrap() - neg.mean_axis(Axis(0)).unwrap();
            assert!(
                mean_diff.dot(&single.vector_view()) >= 0.0,
                "{}: single CAV at {layer} points away from the positives",
                XOR_CONCEPTS[ci].0,
            );
            for cav in std::iter::once(&single).chain(&ensemble.cavs) {
                let norm: f64 = cav.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(
                    (norm - 1.0).abs() <= 1e-9,
                    "{}: CAV at {layer} has norm {norm}",
                    XOR_CONCEPTS[ci].0,
                );
            }
            // Signal-bearing concepts orient every bootstrap run the same way.
            if XOR_SIGNS_FOR_CLASS_1[ci] != 0 {
                for cav in &ensemble.cavs {
                    assert!(
                        mean_diff.dot(&cav.vector_view()) > 0.0,
                        "{}: bootstrap CAV at {layer} flipped orientation",
                        XOR_CONCEPTS[ci].0,
                    );
                }
            }
        }
    }

    // (d) Byte-determinism of reports and generated data under fixed seeds.
    let cfg = TcavConfig {
        layers: vec!["hidden_2".to_string()],
        n_runs: 3,
        alpha: 0.05,
        examples_per_side: 120,
        seed: 99,
        source: CavSource::TestData,
        score_variant: ScoreVariant::MeanDerivative,
    };
    let concepts = &predicates[..2];
    let r1 = run_tcav(&fx.model, &fx.test, concepts, &cfg).unwrap();
    let r2 = run_tcav(&fx.model, &fx.test, concepts, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&r1).unwrap(),
        serde_json::to_string(&r2).unwrap(),
        "tcav reports differ between identical runs"
    );

    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_csv(&gen_xor_synthetic(2_000, 31), &pa).unwrap();
    write_csv(&gen_xor_synthetic(2_000, 31), &pb).unwrap();
    assert_eq!(
        std::fs::read(&pa).unwrap(),
        std::fs::read(&pb).unwrap(),
        "generated CSVs differ between identical seeds"
    );

    let elapsed = t0.elapsed();
    println!("criterion 8 (oracle suites): PASS [{elapsed:.1?}]");
}
