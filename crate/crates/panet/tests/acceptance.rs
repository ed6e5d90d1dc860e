//! Top-level acceptance gate. Runs every headline property serially and
//! prints one pass/fail line per criterion; the test fails if any does.

use panet::autograd::Tape;
use panet::gradcheck::{end_to_end_check, primitive_suite};
use panet::introspect::{mean_offdiag, part_correlation};
use panet::model::{
    bind, cross_view_associate, forward, sample_parts, total_loss, HyperParams, Mode, ModelParams,
};
use panet::shapegen::dataset::{
    build_dataset, read_dataset, write_dataset, MultiViewSample, Regime, Sampler,
};
use panet::shapegen::render::render_view;
use panet::shapegen::shape::{apply_pose_regime, generate_shape, PoseRegime};
use panet::shapegen::viewpoints::{arc_distance, sample_random_with, sample_viewpoints_fps};
use panet::tensor::Tensor;
use panet::train::{
    evaluate, load_checkpoint, metrics_from_predictions, save_checkpoint, train_model, AdamW,
    TrainConfig, ADAM_EPS,
};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

// Reduced desk-scale configuration shared by the trend criteria (3, 5-7).
const CAL_SEEDS: [u64; 3] = [0, 1, 4];
const CAL_TRAIN_PER_CLASS: u32 = 20;
const CAL_TEST_PER_CLASS: u32 = 20;
const CAL_EPOCHS: usize = 50;
const CAL_DATA_SEED: u64 = 4242;
// The sampler comparison trains six models, so it runs shorter.
const SAMPLER_SEEDS: [u64; 3] = [1, 2, 4];
const SAMPLER_EPOCHS: usize = 15;

fn cal_hp(use_cva: bool) -> HyperParams {
    HyperParams {
        k: 6,
        r: 32,
        encoder_channels: vec![1, 8, 16, 32],
        m: 16,
        l: 8,
        apr_depth: 2,
        heads: 4,
        use_cva,
    }
}

fn cal_cfg(seed: u64, gamma: f64) -> TrainConfig {
    TrainConfig {
        epochs: CAL_EPOCHS,
        gamma,
        seed,
        ..TrainConfig::default()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn eval_probs(hp: &HyperParams, params: &ModelParams, sample: &MultiViewSample) -> Tensor {
    let tape = Tape::new();
    let bound = bind(&tape, params);
    forward(&tape, &bound, hp, sample, 0.0, 0.0, Mode::Eval)
        .unwrap()
        .averaged
        .value()
        .clone()
}

fn mean_part_diversity(
    hp: &HyperParams,
    params: &ModelParams,
    samples: &[MultiViewSample],
) -> f64 {
    let mut total = 0.0;
    for s in samples {
        let tape = Tape::new();
        let bound = bind(&tape, params);
        let fwd = forward(&tape, &bound, hp, s, 0.0, 0.0, Mode::Eval).unwrap();
        let corr = part_correlation(fwd.global_parts.value()).unwrap();
        total += mean_offdiag(&corr).unwrap();
    }
    total / samples.len() as f64
}

/// Criterion 1: analytic gradients match finite differences for every
/// primitive (< 1e-4) and end to end (< 1e-3) across 5 seeds, in < 60 s.
fn gradient_suite() -> (bool, String) {
    let start = Instant::now();
    let mut worst_prim = 0.0f64;
    let mut worst_e2e = 0.0f64;
    for seed in 0..5u64 {
        worst_prim = worst_prim.max(primitive_suite(seed).unwrap());
        worst_e2e = worst_e2e.max(end_to_end_check(seed).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_prim < 1e-4 && worst_e2e < 1e-3 && secs < 60.0,
        format!(
            "primitive {:.2e}, end-to-end {:.2e}, {:.1}s",
            worst_prim, worst_e2e, secs
        ),
    )
}

/// Criterion 2: averaged probabilities are invariant to view order,
/// |difference|_inf < 1e-9 over 20 permutations of 20 arbitrary samples.
fn permutation_invariance() -> (bool, String) {
    let hp = HyperParams {
        r: 16,
        ..cal_hp(true)
    };
    let params = ModelParams::init(&hp, 77).unwrap();
    let data = build_dataset(Regime::Arbitrary, Sampler::Random, 4, 6, 16, 101).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for sample in data.samples.iter().take(20) {
        let base = eval_probs(&hp, &params, sample);
        for _ in 0..20 {
            let mut order: Vec<usize> = (0..sample.view_count()).collect();
            order.shuffle(&mut rng);
            let permuted = MultiViewSample {
                label: sample.label,
                viewpoints: order.iter().map(|&i| sample.viewpoints[i]).collect(),
                views: order.iter().map(|&i| sample.views[i].clone()).collect(),
            };
            worst = worst.max(base.max_abs_diff(&eval_probs(&hp, &params, &permuted)));
        }
    }
    (worst < 1e-9, format!("max |diff| = {:.2e}", worst))
}

/// A 20-view arbitrary-regime test set so one checkpoint can be evaluated
/// on leading subsets of the same views.
fn twenty_view_test_set(per_class: u32, r: usize, seed: u64) -> Vec<MultiViewSample> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in 0..6u32 {
        for _ in 0..per_class {
            let shape = generate_shape(class, master.next_u64()).unwrap();
            let shape = apply_pose_regime(shape, PoseRegime::Rotated, master.next_u64());
            let mut vrng = ChaCha8Rng::seed_from_u64(master.next_u64());
            let viewpoints = sample_random_with(&mut vrng, 20);
            let views = viewpoints
                .iter()
                .map(|&vp| {
                    render_view(&shape, vp, r)
                        .into_iter()
                        .map(|p| p as f32)
                        .collect()
                })
                .collect();
            out.push(MultiViewSample {
                label: class,
                viewpoints,
                views,
            });
        }
    }
    out
}

fn truncated(sample: &MultiViewSample, v: usize) -> MultiViewSample {
    MultiViewSample {
        label: sample.label,
        viewpoints: sample.viewpoints[..v].to_vec(),
        views: sample.views[..v].to_vec(),
    }
}

/// Criterion 3: a fixed checkpoint evaluates at v in {1,5,10,15,20} and the
/// 3-seed median accuracy decreases on at most one consecutive step.
fn view_count_freedom(trained: &[(HyperParams, ModelParams)]) -> (bool, String) {
    let counts = [1usize, 5, 10, 15, 20];
    let test = twenty_view_test_set(10, 32, CAL_DATA_SEED ^ 0x20);
    let mut medians = Vec::new();
    for &v in &counts {
        let mut accs = Vec::new();
        for (hp, params) in trained {
            let subset: Vec<MultiViewSample> = test.iter().map(|s| truncated(s, v)).collect();
            accs.push(evaluate(hp, params, &subset).unwrap().per_instance_acc);
        }
        medians.push(median(accs));
    }
    let decreasing = medians.windows(2).filter(|w| w[1] < w[0]).count();
    (
        decreasing <= 1,
        format!(
            "median accuracy by view count {:?} = {:?} ({} decreasing steps)",
            counts,
            medians.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            decreasing
        ),
    )
}

/// Criterion 4: full-scale learning run. Arbitrary regime, 6 classes,
/// 600 train / 180 test objects, M=64, L=16, 30 epochs: test instance
/// accuracy >= 0.85 (>= 5x the 1/6 chance level) in under 15 minutes.
fn learning_at_scale() -> (bool, String) {
    let start = Instant::now();
    let hp = HyperParams::full();
    let cfg = TrainConfig {
        seed: 11,
        ..TrainConfig::default()
    };
    let train = build_dataset(Regime::Arbitrary, Sampler::Random, 100, 6, 32, 900).unwrap();
    let test = build_dataset(Regime::Arbitrary, Sampler::Random, 30, 6, 32, 901).unwrap();
    let (params, _, _) = train_model(&hp, &cfg, &train.samples, None).unwrap();
    let metrics = evaluate(&hp, &params, &test.samples).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let acc = metrics.per_instance_acc;
    (
        acc >= 0.85 && acc >= 5.0 / 6.0 && secs < 900.0,
        format!("instance accuracy {:.3} (chance 0.167), {:.0}s", acc, secs),
    )
}

struct ComponentRuns {
    // One (hyperparams, trained params, test accuracy) per seed per setting.
    baseline: Vec<(HyperParams, ModelParams, f64)>,
    cva: Vec<(HyperParams, ModelParams, f64)>,
    awe: Vec<(HyperParams, ModelParams, f64)>,
    test: Vec<MultiViewSample>,
}

fn train_component_runs() -> ComponentRuns {
    let train = build_dataset(
        Regime::Arbitrary,
        Sampler::Random,
        CAL_TRAIN_PER_CLASS,
        6,
        32,
        CAL_DATA_SEED,
    )
    .unwrap();
    let test = build_dataset(
        Regime::Arbitrary,
        Sampler::Random,
        CAL_TEST_PER_CLASS,
        6,
        32,
        CAL_DATA_SEED ^ 0x5EED,
    )
    .unwrap();
    let run_setting = |use_cva: bool, gamma: f64| {
        CAL_SEEDS
            .iter()
            .map(|&seed| {
                let hp = cal_hp(use_cva);
                let (params, _, _) =
                    train_model(&hp, &cal_cfg(seed, gamma), &train.samples, None).unwrap();
                let acc = evaluate(&hp, &params, &test.samples)
                    .unwrap()
                    .per_instance_acc;
                (hp, params, acc)
            })
            .collect::<Vec<_>>()
    };
    ComponentRuns {
        baseline: run_setting(false, 0.0),
        cva: run_setting(true, 0.0),
        awe: run_setting(false, 1.0),
        test: test.samples,
    }
}

/// Criterion 5: adding cross-view association and adding the part-aware
/// loss each keep median accuracy within 0.01 of baseline and at least one
/// improves it by >= 0.01.
fn component_ablation(runs: &ComponentRuns) -> (bool, String) {
    let med = |rs: &[(HyperParams, ModelParams, f64)]| {
        median(rs.iter().map(|(_, _, a)| *a).collect())
    };
    let (base, cva, awe) = (med(&runs.baseline), med(&runs.cva), med(&runs.awe));
    let no_harm = cva >= base - 0.01 && awe >= base - 0.01;
    let improves = cva >= base + 0.01 || awe >= base + 0.01;
    (
        no_harm && improves,
        format!(
            "median accuracy baseline {:.3}, +association {:.3}, +part loss {:.3}",
            base, cva, awe
        ),
    )
}

/// Criterion 6: the part-aware loss decorrelates global parts: median
/// test-set mean off-diagonal |cosine| is strictly lower at gamma=1.
fn part_diversity(runs: &ComponentRuns) -> (bool, String) {
    let div = |rs: &[(HyperParams, ModelParams, f64)]| {
        median(
            rs.iter()
                .map(|(hp, p, _)| mean_part_diversity(hp, p, &runs.test))
                .collect(),
        )
    };
    let (at_zero, at_one) = (div(&runs.baseline), div(&runs.awe));
    (
        at_one < at_zero,
        format!("median correlation gamma=0: {:.4}, gamma=1: {:.4}", at_zero, at_one),
    )
}

/// Criterion 7: random and furthest-point viewpoint sampling reach similar
/// accuracy (3-seed medians within 0.05).
fn sampler_robustness() -> (bool, String) {
    let acc_for = |sampler: Sampler| {
        let train = build_dataset(
            Regime::Arbitrary,
            sampler,
            CAL_TRAIN_PER_CLASS,
            6,
            32,
            CAL_DATA_SEED ^ 0x7,
        )
        .unwrap();
        let test = build_dataset(
            Regime::Arbitrary,
            sampler,
            CAL_TEST_PER_CLASS,
            6,
            32,
            CAL_DATA_SEED ^ 0x7 ^ 0x5EED,
        )
        .unwrap();
        let hp = cal_hp(false);
        median(
            SAMPLER_SEEDS
                .iter()
                .map(|&seed| {
                    let mut cfg = cal_cfg(seed, 0.0);
                    cfg.epochs = SAMPLER_EPOCHS;
                    cfg.sampler = sampler;
                    let (params, _, _) = train_model(&hp, &cfg, &train.samples, None).unwrap();
                    evaluate(&hp, &params, &test.samples)
                        .unwrap()
                        .per_instance_acc
                })
                .collect(),
        )
    };
    let random = acc_for(Sampler::Random);
    let fps = acc_for(Sampler::Fps);
    (
        (random - fps).abs() <= 0.05,
        format!("median accuracy random {:.3}, fps {:.3}", random, fps),
    )
}

fn fps_oracle(candidates: &[[f64; 3]], n: usize) -> Vec<[f64; 3]> {
    let mut chosen: Vec<usize> = vec![0];
    while chosen.len() < n {
        let mut best = 0;
        let mut best_d = -1.0;
        for i in 0..candidates.len() {
            let d = chosen
                .iter()
                .map(|&j| arc_distance(candidates[i], candidates[j]))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        chosen.push(best);
    }
    chosen.iter().map(|&i| candidates[i]).collect()
}

/// Criterion 8: implementation vs independent oracles: confusion metrics on
/// 1000 random cases, furthest-point selection vs exhaustive greedy, and
/// bit-exact dataset/checkpoint round-trips.
fn oracle_equivalences() -> (bool, String) {
    // Confusion metrics against a brute-force recomputation.
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let k = 6;
    let labels: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..k)).collect();
    let preds: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..k)).collect();
    let metrics = metrics_from_predictions(&labels, &preds, k).unwrap();
    let mut confusion = vec![vec![0u64; k]; k];
    for (&y, &p) in labels.iter().zip(preds.iter()) {
        confusion[y][p] += 1;
    }
    let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let inst = correct as f64 / 1000.0;
    let recalls: Vec<f64> = confusion
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().sum::<u64>() > 0)
        .map(|(i, row)| row[i] as f64 / row.iter().sum::<u64>() as f64)
        .collect();
    let class = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let confusion_ok = metrics.confusion == confusion
        && metrics.per_instance_acc == inst
        && metrics.per_class_acc == class;

    // Furthest-point sampling against the exhaustive greedy oracle.
    let mut fps_ok = true;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(8..=64usize);
        let n = rng.gen_range(1..=m);
        let candidates = sample_random_with(&mut rng, m);
        let got = sample_viewpoints_fps(&candidates, n, 0).unwrap();
        fps_ok &= got == fps_oracle(&candidates, n);
    }

    // Bit-exact round-trips.
    let dir = tempfile::tempdir().unwrap();
    let data = build_dataset(Regime::Arbitrary, Sampler::Fps, 2, 4, 8, 5).unwrap();
    let (p1, p2) = (dir.path().join("a.pds"), dir.path().join("b.pds"));
    write_dataset(&data, &p1).unwrap();
    write_dataset(&read_dataset(&p1).unwrap(), &p2).unwrap();
    let dataset_ok = std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();

    let hp = HyperParams::tiny();
    let params = ModelParams::init(&hp, 6).unwrap();
    let opt = AdamW::new(&params);
    let cfg = TrainConfig::default();
    let (c1, c2) = (dir.path().join("a.pck"), dir.path().join("b.pck"));
    save_checkpoint(&hp, &params, &opt, &cfg, &c1).unwrap();
    let (hp2, params2, opt2, cfg2) = load_checkpoint(&c1).unwrap();
    save_checkpoint(&hp2, &params2, &opt2, &cfg2, &c2).unwrap();
    let ckpt_ok = std::fs::read(&c1).unwrap() == std::fs::read(&c2).unwrap();

    (
        confusion_ok && fps_ok && dataset_ok && ckpt_ok,
        format!(
            "confusion {}, fps {}, dataset round-trip {}, checkpoint round-trip {}",
            confusion_ok, fps_ok, dataset_ok, ckpt_ok
        ),
    )
}

/// Criterion 9: hand-computed oracle values reproduce within 1e-6.
fn hand_values() -> (bool, String) {
    // Scalar association example: softmax over dot scores of views 2 and 4.
    let tape = Tape::new();
    let a = tape.leaf(Tensor::new(vec![1, 1, 1], vec![2.0]));
    let b = tape.leaf(Tensor::new(vec![1, 1, 1], vec![4.0]));
    let out = cross_view_associate(&[a, b]).unwrap();
    let (w2, w4) = (4.0f64.exp(), 8.0f64.exp());
    let cva_expected = (2.0 * w2 + 4.0 * w4) / (w2 + w4);
    let cva_err = (out[0].value().item() - cva_expected).abs()
        .max((cva_expected - 3.964027_580_075_817).abs());

    // Part sampling: features [1, 3] under attention [0, 1] average to 1.5.
    let tape = Tape::new();
    let f = tape.leaf(Tensor::new(vec![1, 2, 1], vec![1.0, 3.0]));
    let att = tape.leaf(Tensor::new(vec![1, 2, 1], vec![0.0, 1.0]));
    let t = sample_parts(&[f], &[att]).unwrap();
    let part_err = (t.value().item() - 1.5).abs();

    // Loss: -ln 0.75 - ln 0.5.
    let tape = Tape::new();
    let p = tape.constant(Tensor::new(vec![2], vec![0.75, 0.25]));
    let q = tape.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]));
    let terms = total_loss(&tape, &p, &q, 0, 1.0, 0.0).unwrap();
    let loss_expected = -(0.75f64.ln()) - 0.5f64.ln();
    let loss_err = (terms.total.value().item() - loss_expected).abs();

    // One optimizer step from all-ones parameters and gradients at lr 0.1.
    let hp = HyperParams::tiny();
    let mut params = ModelParams::init(&hp, 1).unwrap();
    let shapes: Vec<Vec<usize>> = params.named().iter().map(|(_, t)| t.shape().to_vec()).collect();
    for (_, t) in params.named_mut() {
        *t = Tensor::full(t.shape().to_vec(), 1.0);
    }
    let grads: Vec<Tensor> = shapes.iter().map(|s| Tensor::full(s.clone(), 1.0)).collect();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut opt = AdamW::new(&params);
    opt.apply(&mut params, &grads, &cfg).unwrap();
    let adam_expected = 1.0 - 0.1 / (1.0 + ADAM_EPS);
    let mut adam_err = (adam_expected - 0.9).abs();
    for (_, t) in params.named() {
        for &x in t.data() {
            adam_err = adam_err.max((x - adam_expected).abs());
        }
    }

    let worst = cva_err.max(part_err).max(loss_err).max(adam_err);
    (
        worst < 1e-6,
        format!(
            "association {:.1e}, part {:.1e}, loss {:.1e}, optimizer {:.1e}",
            cva_err, part_err, loss_err, adam_err
        ),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, bool, String)> = Vec::new();
    let mut record = |id: usize, name: &'static str, (pass, detail): (bool, String)| {
        println!(
            "criterion {} ({}): {} [{}]",
            id,
            name,
            if pass { "PASS" } else { "FAIL" },
            detail
        );
        results.push((id, name, pass, detail));
    };

    record(1, "gradient suite", gradient_suite());
    record(2, "permutation invariance", permutation_invariance());

    let runs = train_component_runs();
    let baseline_models: Vec<(HyperParams, ModelParams)> = runs
        .baseline
        .iter()
        .map(|(hp, p, _)| (hp.clone(), p.clone()))
        .collect();
    record(3, "view-count freedom", view_count_freedom(&baseline_models));
    record(4, "learning at scale", learning_at_scale());
    record(5, "component ablation direction", component_ablation(&runs));
    record(6, "part diversity", part_diversity(&runs));
    record(7, "sampler robustness", sampler_robustness());
    record(8, "oracle equivalences", oracle_equivalences());
    record(9, "hand-value spot checks", hand_values());

    let failed: Vec<String> = results
        .iter()
        .filter(|(_, _, pass, _)| !pass)
        .map(|(id, name, _, detail)| format!("criterion {} ({}): {}", id, name, detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
