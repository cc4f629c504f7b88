//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` are reported but do not fail the
//! run; any other failure exits nonzero. See the README for why those
//! criteria are not met. Pass criterion numbers as arguments to run a
//! subset.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hscf_core::analysis::{
    confusion_metrics, group_mean_sfc, stage_difference, stage_pair_report, threshold_quantile,
    top_k_connections, ConfusionCounts, Direction, ThresholdScope,
};
use hscf_core::data::{
    empirical_group_mean, generate_synthetic_cohort, load_cohort, save_cohort, Cohort,
    PlantedEdges, Stage, Task,
};
use hscf_core::gradcheck::{check_model_gradients, GradCheckOptions};
use hscf_core::losses::{cls_loss, cos_loss, kl_loss};
use hscf_core::model::{LatentPair, LatentRep};
use hscf_core::train::{checkpoint_json, fit, parse_checkpoint, TrainConfig, TrainingMeta, Widths};
use hscf_core::{HscfModel, ModelConfig, Tensor};

const EXPECTED_FAILURES: &[usize] = &[5, 6];

const LEARN_DATA_SEED: u64 = 2024;
const LEARN_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn metric_reproduction() -> Outcome {
    let cases = [
        (
            ConfusionCounts::new(70, 6, 68, 8),
            [90.78, 92.10, 89.47, 90.90],
        ),
        (
            ConfusionCounts::new(70, 6, 72, 4),
            [93.42, 92.10, 94.73, 93.33],
        ),
    ];
    let mut bad = Vec::new();
    for (counts, expected) in cases {
        let got = confusion_metrics(&counts).unwrap().percent_truncated();
        for (g, e) in got.iter().zip(expected) {
            if !g.is_some_and(|g| close(g, e, 1e-9)) {
                bad.push(format!("{counts:?}: {g:?} vs {e}"));
            }
        }
    }
    outcome(bad.is_empty(), format!("8 percentages; mismatches {bad:?}"))
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let report = check_model_gradients(&GradCheckOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let groups = ["sep_", "rec_", "clm_", "cls."];
    let covered = groups
        .iter()
        .all(|g| report.params.iter().any(|p| p.name.starts_with(g)));
    let worst = report.worst().unwrap();
    outcome(
        report.passed() && covered && worst.worst_rel_error < 1e-4 && secs < 60.0,
        format!(
            "{} tensors, {} coords; worst {:.2e} on {}; {secs:.1}s",
            report.params.len(),
            report.coords(),
            worst.worst_rel_error,
            worst.name
        ),
    )
}

fn loss_oracles() -> Outcome {
    let standard = LatentPair {
        mu: Tensor::zeros(&[4, 3]),
        logvar: Tensor::zeros(&[4, 3]),
    };
    let kl0 = kl_loss(&[
        standard.clone(),
        standard.clone(),
        standard.clone(),
        standard,
    ]);
    let kl1 = kl_loss(&[LatentPair {
        mu: Tensor::new(&[1, 1], vec![1.0]).unwrap(),
        logvar: Tensor::zeros(&[1, 1]),
    }]);
    let rep = |v: Vec<f64>| LatentRep {
        z: Tensor::new(&[2, 2], v).unwrap(),
    };
    let base = rep(vec![1.0, 2.0, -3.0, 0.5]);
    let parallel = cos_loss(&base, &rep(vec![2.0, 4.0, -6.0, 1.0])).unwrap();
    let orthogonal = cos_loss(&base, &rep(vec![2.0, -1.0, 0.5, 3.0])).unwrap();
    let anti = cos_loss(&base, &rep(vec![-1.0, -2.0, 3.0, -0.5])).unwrap();
    let cls = cls_loss(&[0.5, 0.5], Stage::Emci, Task::NcVsEmci).unwrap();
    let pass = close(kl0, 0.0, 1e-12)
        && close(kl1, 0.5, 1e-12)
        && close(parallel, 1.0, 1e-12)
        && close(orthogonal, 0.0, 1e-12)
        && close(anti, -1.0, 1e-12)
        && close(cls, std::f64::consts::LN_2, 1e-12);
    outcome(
        pass,
        format!("kl {kl0:e}, {kl1}; cos {parallel}, {orthogonal}, {anti}; cls {cls:.15}"),
    )
}

/// Why `t` is not a symmetric matrix with entries in (0, 1), if it is not.
fn symmetric_unit(t: &Tensor) -> Option<String> {
    let n = t.rows();
    for i in 0..n {
        for j in 0..n {
            let v = t.at(i, j);
            if !(v > 0.0 && v < 1.0) {
                return Some(format!("entry ({i},{j}) = {v}"));
            }
            if v != t.at(j, i) {
                return Some(format!("asymmetric at ({i},{j})"));
            }
        }
    }
    None
}

fn structural_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut worst_perm: f64 = 0.0;
    for trial in 0..100 {
        let n = if trial % 10 == 0 {
            90
        } else {
            rng.random_range(6..=24)
        };
        let signal = rng.random_range(0.0..=1.0);
        let cohort = generate_synthetic_cohort(rng.random(), 2, n, signal).unwrap();
        let subject = cohort.subjects.choose(&mut rng).unwrap();
        let model = HscfModel::new(ModelConfig::standard(n), rng.random()).unwrap();
        let out = model.forward(subject, &mut rng, true).unwrap();
        for (name, t) in [
            ("a1_rec", &out.a1_rec),
            ("a2_rec", &out.a2_rec),
            ("a_m", &out.a_m),
        ] {
            if let Some(why) = symmetric_unit(t) {
                failures.push(format!("trial {trial} (N={n}): {name} {why}"));
            }
        }
        if !close(out.probs[0] + out.probs[1], 1.0, 1e-12) {
            failures.push(format!("trial {trial}: probs {:?}", out.probs));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let a = model.forward_eval(subject).unwrap().probs;
        let b = model.forward_eval(&subject.permuted(&perm)).unwrap().probs;
        let d = (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
        worst_perm = worst_perm.max(d);
        if d > 1e-9 {
            failures.push(format!("trial {trial}: permutation moved probs by {d:e}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!("100 forwards; worst permutation change {worst_perm:.1e}; failures {failures:?}"),
    )
}

fn learn_config(seed: u64) -> TrainConfig {
    TrainConfig {
        task: Task::NcVsEmci,
        seed,
        eval_every: 0,
        ..TrainConfig::default()
    }
}

fn learnability(trained: &mut Vec<HscfModel>, cohort: &Cohort) -> Outcome {
    let mut accs = Vec::new();
    let mut secs: f64 = 0.0;
    for seed in LEARN_SEEDS {
        let start = Instant::now();
        let out = fit(&learn_config(seed), cohort).unwrap();
        secs = secs.max(start.elapsed().as_secs_f64());
        accs.push(out.report.final_eval.unwrap().acc);
        trained.push(out.model);
    }
    let control = generate_synthetic_cohort(LEARN_DATA_SEED, 76, 90, 0.0).unwrap();
    let control_accs: Vec<f64> = LEARN_SEEDS
        .iter()
        .map(|&seed| {
            fit(&learn_config(seed), &control)
                .unwrap()
                .report
                .final_eval
                .unwrap()
                .acc
        })
        .collect();
    let control_mean = control_accs.iter().sum::<f64>() / control_accs.len() as f64;
    let hits = accs.iter().filter(|&&a| a >= 0.85).count();
    outcome(
        hits >= 4 && (0.35..=0.65).contains(&control_mean) && secs <= 600.0,
        format!(
            "acc {accs:.3?} ({hits}/5 >= 0.85); control acc {control_accs:.3?} mean {control_mean:.3}; slowest run {secs:.0}s"
        ),
    )
}

/// Planted sets recovered by the top-5 lists of both stage pairs, as
/// `(recovered, planted)` per list in the order NC→EMCI inc/dec,
/// EMCI→LMCI inc/dec.
fn recovery(means: &[Tensor; 3], cohort: &Cohort) -> Vec<(usize, usize)> {
    let planted = PlantedEdges::for_rois(cohort.n_rois());
    let mut out = Vec::new();
    for (i, from) in [Stage::Nc, Stage::Emci].into_iter().enumerate() {
        let diff = stage_difference(&means[i + 1], &means[i]).unwrap();
        let to = if from == Stage::Nc {
            Stage::Emci
        } else {
            Stage::Lmci
        };
        let report = stage_pair_report(
            &diff,
            from,
            to,
            &cohort.atlas,
            0.75,
            5,
            ThresholdScope::Pooled,
        )
        .unwrap();
        let (inc, dec) = planted.transition(from).unwrap();
        for (found, want) in [(&report.increased, inc), (&report.decreased, dec)] {
            let want: BTreeSet<(usize, usize)> = want.iter().copied().collect();
            let got: BTreeSet<(usize, usize)> =
                found.iter().map(|c| (c.a_index, c.b_index)).collect();
            out.push((got.intersection(&want).count(), want.len()));
        }
    }
    out
}

fn analysis_recovery(trained: &[HscfModel], cohort: &Cohort) -> Outcome {
    let stages = [Stage::Nc, Stage::Emci, Stage::Lmci];
    let input = stages.map(|s| empirical_group_mean(cohort, s).unwrap());
    let input_rec = recovery(&input, cohort);
    let input_exact = input_rec.iter().all(|&(got, want)| want == 5 && got == 5);
    let learned_rec = trained.first().map(|model| {
        let means = stages.map(|s| group_mean_sfc(model, cohort, s).unwrap());
        recovery(&means, cohort)
    });
    let learned_ok = learned_rec
        .as_ref()
        .is_some_and(|r| r.iter().all(|&(got, _)| got >= 4));
    outcome(
        input_exact && learned_ok,
        format!(
            "input-based {:?} (exact: {input_exact}); learned {:?} (>= 4 of 5: {learned_ok})",
            input_rec.iter().map(|r| r.0).collect::<Vec<_>>(),
            learned_rec.map(|r| r.iter().map(|x| x.0).collect::<Vec<_>>())
        ),
    )
}

fn determinism() -> Outcome {
    let cohort = generate_synthetic_cohort(11, 6, 10, 0.5).unwrap();
    let config = TrainConfig {
        epochs: 4,
        seed: 5,
        eval_every: 0,
        widths: Some(Widths {
            hidden1: 16,
            hidden2: 8,
            latent: 4,
            cls_hidden1: 8,
            cls_hidden2: 4,
        }),
        ..TrainConfig::default()
    };
    let meta = TrainingMeta::from_config(&config);
    let a = checkpoint_json(&fit(&config, &cohort).unwrap().model, &meta).unwrap();
    let b = checkpoint_json(&fit(&config, &cohort).unwrap().model, &meta).unwrap();
    let bitwise = a == b;

    let (model, _) = parse_checkpoint(&a).unwrap();
    let fresh = fit(&config, &cohort).unwrap().model;
    let mut worst: f64 = 0.0;
    for s in &cohort.subjects {
        let x = fresh.forward_eval(s).unwrap();
        let y = model.forward_eval(s).unwrap();
        for (p, q) in [
            (&x.a_m, &y.a_m),
            (&x.a1_rec, &y.a1_rec),
            (&x.a2_rec, &y.a2_rec),
        ] {
            for (u, v) in p.data().iter().zip(q.data()) {
                worst = worst.max((u - v).abs());
            }
        }
        worst = worst.max((x.probs[1] - y.probs[1]).abs());
    }

    let dir = tempfile::tempdir().unwrap();
    let manifest = save_cohort(&cohort, dir.path()).unwrap();
    let round_trip = load_cohort(&manifest).unwrap() == cohort;

    outcome(
        bitwise && worst <= 1e-12 && round_trip,
        format!(
            "bitwise checkpoints {bitwise}; reload max diff {worst:e}; cohort round trip {round_trip}"
        ),
    )
}

fn brute_threshold(values: &[f64], q: f64) -> f64 {
    let m = values.len();
    let need = (q * m as f64).ceil().max(1.0) as usize;
    // smallest value with at least `need` values at or below it
    values
        .iter()
        .copied()
        .filter(|&v| values.iter().filter(|&&w| w <= v).count() >= need)
        .fold(f64::INFINITY, f64::min)
}

fn quantile_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let coarse = rng.random_bool(0.5);
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = if coarse {
                    rng.random_range(-3..=3) as f64 * 0.5
                } else {
                    rng.random_range(-1.0..1.0)
                };
                t.set(i, j, v);
                t.set(j, i, v);
            }
        }
        let pairs: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, t.at(i, j)))
            .collect();
        let q = rng.random_range(0.01..0.99);
        let mags: Vec<f64> = pairs.iter().map(|p| p.2.abs()).collect();
        let thr = brute_threshold(&mags, q);
        let want: Vec<(usize, usize)> = pairs
            .iter()
            .filter(|p| p.2.abs() > thr)
            .map(|p| (p.0, p.1))
            .collect();
        let sel = threshold_quantile(&t, q).unwrap();
        let got: Vec<(usize, usize)> = sel.selected.iter().map(|d| (d.roi_a, d.roi_b)).collect();
        if sel.threshold != thr || got != want {
            mismatches += 1;
        }

        let k = rng.random_range(0..=pairs.len());
        for dir in [Direction::Increased, Direction::Decreased] {
            let sign = if dir == Direction::Increased {
                1.0
            } else {
                -1.0
            };
            // an entry is kept when fewer than k eligible entries beat it
            let mut want: Vec<(usize, usize, f64)> = pairs
                .iter()
                .copied()
                .filter(|p| sign * p.2 > 0.0)
                .filter(|p| {
                    pairs
                        .iter()
                        .filter(|o| {
                            sign * o.2 > 0.0
                                && (sign * o.2 > sign * p.2
                                    || (o.2 == p.2 && (o.0, o.1) < (p.0, p.1)))
                        })
                        .count()
                        < k
                })
                .collect();
            want.sort_by(|x, y| {
                (sign * y.2)
                    .total_cmp(&(sign * x.2))
                    .then((x.0, x.1).cmp(&(y.0, y.1)))
            });
            let got: Vec<(usize, usize, f64)> = top_k_connections(&t, k, dir)
                .unwrap()
                .iter()
                .map(|d| (d.roi_a, d.roi_b, d.delta))
                .collect();
            if got != want {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("1000 matrices; {mismatches} mismatches"),
    )
}

fn main() -> ExitCode {
    // `cargo test --test acceptance -- 4 8` runs only the listed criteria
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |id: usize, name: &'static str, run: &mut dyn FnMut() -> Outcome| {
        if !only.is_empty() && !only.contains(&id) {
            return;
        }
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && EXPECTED_FAILURES.contains(&id) {
            " (expected failure)"
        } else {
            ""
        };
        println!(
            "criterion {id} [PRIMARY] {name}: {status}{note} | {} | {:.1}s",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((id, name, o));
    };

    report(1, "metric formula reproduction", &mut metric_reproduction);
    report(2, "gradient integrity", &mut gradient_integrity);
    report(3, "loss oracles", &mut loss_oracles);
    report(4, "structural invariants", &mut structural_invariants);
    let cohort = generate_synthetic_cohort(LEARN_DATA_SEED, 76, 90, 0.4).unwrap();
    let mut trained = Vec::new();
    report(5, "learnability on planted signal", &mut || {
        learnability(&mut trained, &cohort)
    });
    report(6, "analysis recovery", &mut || {
        analysis_recovery(&trained, &cohort)
    });
    report(7, "determinism and round trips", &mut determinism);
    report(8, "quantile and threshold oracle", &mut quantile_oracle);

    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let unexpected: Vec<usize> = results
        .iter()
        .filter(|r| !r.2.pass && !EXPECTED_FAILURES.contains(&r.0))
        .map(|r| r.0)
        .collect();
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
