//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rankpair::assign::{paa_star_assign, PaaCandidate};
use rankpair::eval::average_precision;
use rankpair::geometry::{giou_loss, iou, nms, BBox};
use rankpair::harness::{
    generate_instance, grad_check, grad_check_giou, random_instance, train_toy, AssignerKind,
    ScenarioConfig,
};
use rankpair::rankloss::{ape_loss, error_driven_gradients, precision_loss, valid_negative_filter};
use rankpair::{
    arps, AdaptiveNegativeSets, BalanceConstant, DetectionInstance, DistanceFunction, LossConfig,
    Role,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ce_equals_error_driven() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = LossConfig::with_distance(DistanceFunction::ce_sigmoid(8.0).map_err(e2s)?);
    let sig = DistanceFunction::sigmoid(8.0).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 20, 200, 1.0);
        let sets = AdaptiveNegativeSets::plain(&inst);
        let ce = ape_loss(&inst, &sets, &cfg).map_err(e2s)?;
        let ed = error_driven_gradients(&inst, &sig, &sets).map_err(e2s)?;
        worst = worst.max(ce.gradient.max_abs_diff(&ed.gradient));
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-10, || format!("max elementwise difference {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("max diff {worst:e}, {elapsed:.2?}"))
}

fn gradient_oracle() -> Outcome {
    let cfg = ScenarioConfig::default();
    let ape = grad_check(&cfg, 100).map_err(e2s)?;
    ensure(ape.skipped.is_none(), || format!("skipped: {:?}", ape.skipped))?;
    let giou = grad_check_giou(cfg.seed, 100).map_err(e2s)?;
    ensure(ape.max_rel_error < 1e-6, || format!("APE rel error {:e}", ape.max_rel_error))?;
    ensure(giou.max_rel_error < 1e-6, || format!("GIoU rel error {:e}", giou.max_rel_error))?;
    Ok(format!(
        "APE rel error {:e} (abs {:e}), GIoU rel error {:e} (abs {:e})",
        ape.max_rel_error, ape.max_abs_error, giou.max_rel_error, giou.max_abs_error
    ))
}

fn gradient_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ce = LossConfig::default();
    let valid = LossConfig {
        balance: BalanceConstant::ValidNegCount { threshold: 0.0 },
        ..LossConfig::default()
    };
    let step = DistanceFunction::piecewise_step(0.5).map_err(e2s)?;
    let sig = DistanceFunction::sigmoid(8.0).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 20, 200, 1.0);
        let plain = AdaptiveNegativeSets::plain(&inst);
        let adaptive = arps(&inst);
        let mut outputs = Vec::new();
        for sets in [&plain, &adaptive] {
            outputs.push(ape_loss(&inst, sets, &ce).map_err(e2s)?);
            match ape_loss(&inst, sets, &valid) {
                Ok(out) => outputs.push(out),
                Err(rankpair::Error::DegenerateDenominator { .. }) => {}
                Err(e) => return Err(e.to_string()),
            }
            outputs.push(error_driven_gradients(&inst, &step, sets).map_err(e2s)?);
            outputs.push(error_driven_gradients(&inst, &sig, sets).map_err(e2s)?);
        }
        for out in outputs {
            worst = worst.max(out.gradient.sum().abs());
            checked += 1;
        }
    }
    ensure(worst <= 1e-12, || format!("|sum| up to {worst:e}"))?;
    Ok(format!("{checked} gradients, max |sum| {worst:e}"))
}

fn precision_matches_ap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = DistanceFunction::piecewise_step(1e-9).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 20, 200, 1.0);
        let distinct: BTreeSet<u64> = inst.logits.iter().map(|x| x.to_bits()).collect();
        ensure(distinct.len() == inst.len(), || "tied logits".into())?;
        let pos = inst.positives();
        let mut mean = 0.0;
        for &u in &pos {
            mean += precision_loss(u, &inst, &d).map_err(e2s)?;
        }
        mean /= pos.len() as f64;
        let labels: Vec<bool> = (0..inst.len()).map(|i| inst.is_positive(i)).collect();
        let ap = average_precision(&inst.logits, &labels).map_err(e2s)?;
        worst = worst.max((1.0 - mean - ap).abs());
    }
    ensure(worst <= 1e-6, || format!("max |1 - loss - AP| {worst:e}"))?;
    Ok(format!("max |1 - loss - AP| {worst:e}"))
}

fn ape_matches_counts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = LossConfig::with_distance(DistanceFunction::piecewise_step(1e-9).map_err(e2s)?);
    let mut worst: f64 = 0.0;
    let mut terms = 0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 20, 200, 1.0);
        let out = ape_loss(&inst, &arps(&inst), &cfg).map_err(e2s)?;
        for &(u, loss) in &out.per_positive {
            let su = inst.logits[u];
            let above: Vec<usize> = (0..inst.len()).filter(|&v| inst.logits[v] > su).collect();
            let fp = above.iter().filter(|&&v| !inst.is_positive(v)).count();
            let tp = 1 + above.iter().filter(|&&v| inst.is_positive(v)).count();
            let afp = above
                .iter()
                .filter(|&&v| inst.is_positive(v) && inst.ious[v] < inst.ious[u])
                .count();
            let expected = (fp + afp) as f64 / ((tp - afp) + (fp + afp)) as f64;
            worst = worst.max((loss - expected).abs());
            terms += 1;
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("{terms} positives, max deviation {worst:e}"))
}

fn random_layout(rng: &mut ChaCha8Rng) -> DetectionInstance {
    let n = rng.random_range(1..40);
    let mut roles = Vec::with_capacity(n);
    let mut ious = Vec::with_capacity(n);
    for _ in 0..n {
        let role = match rng.random_range(0..10) {
            0..=3 => Role::Positive,
            4..=8 => Role::Negative,
            _ => Role::Ignored,
        };
        // coarse grid so equal IoUs occur
        ious.push(rng.random_range(0..=10) as f64 / 10.0);
        roles.push(role);
    }
    let logits = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    DetectionInstance::new(logits, roles, ious).expect("valid layout")
}

fn arps_restatement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut sets_checked = 0;
    for layout in 0..1000 {
        let inst = random_layout(&mut rng);
        let sets = arps(&inst);
        let positives = inst.positives();
        let negatives = inst.negatives();
        ensure(sets.len() == positives.len(), || format!("layout {layout}: set count"))?;
        for &u in &positives {
            let got: BTreeSet<usize> = sets.get(u).ok_or("missing set")?.iter().copied().collect();
            let expected: BTreeSet<usize> = (0..inst.len())
                .filter(|&v| {
                    v != u
                        && (inst.roles[v] == Role::Negative
                            || (inst.roles[v] == Role::Positive && inst.ious[v] < inst.ious[u]))
                })
                .collect();
            ensure(got == expected, || format!("layout {layout}, positive {u}"))?;
            let lower = positives.iter().filter(|&&v| inst.ious[v] < inst.ious[u]).count();
            ensure(got.len() == negatives.len() + lower, || {
                format!("layout {layout}, positive {u}: cardinality")
            })?;
            sets_checked += 1;
        }
    }
    Ok(format!("1000 layouts, {sets_checked} pair sets"))
}

fn correlation_gain() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut sums = [[0.0f64; 3]; 2];
    let seeds = 50;
    for seed in 0..seeds {
        let mut finals = [[0.0f64; 3]; 2];
        for (k, kind) in [AssignerKind::IouThreshold, AssignerKind::Arps].into_iter().enumerate() {
            let mut cfg = ScenarioConfig {
                seed,
                ..ScenarioConfig::default()
            };
            cfg.assigner.assigner = kind;
            let inst = generate_instance(&cfg).map_err(e2s)?;
            let last = *train_toy(&inst, &cfg).map_err(e2s)?.last();
            let vals = [last.pcc, last.scc, last.kcc];
            for (j, v) in vals.iter().enumerate() {
                finals[k][j] = v.ok_or_else(|| format!("seed {seed}: undefined correlation"))?;
            }
        }
        if finals[1][2] > finals[0][2] {
            wins += 1;
        }
        for k in 0..2 {
            for j in 0..3 {
                sums[k][j] += finals[k][j];
            }
        }
    }
    let elapsed = start.elapsed();
    let n = seeds as f64;
    let mean = |k: usize, j: usize| sums[k][j] / n;
    let summary = format!(
        "APE KCC wins {wins}/{seeds}; mean PCC {:.3} vs {:.3}, SCC {:.3} vs {:.3}, KCC {:.3} vs {:.3}; {elapsed:.2?}",
        mean(1, 0),
        mean(0, 0),
        mean(1, 1),
        mean(0, 1),
        mean(1, 2),
        mean(0, 2)
    );
    ensure(wins * 10 >= seeds * 9, || summary.clone())?;
    ensure((0..3).all(|j| mean(1, j) > mean(0, j)), || summary.clone())?;
    ensure(elapsed < Duration::from_secs(120), || summary.clone())?;
    Ok(summary)
}

fn gmm_two_clusters() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.05).map_err(e2s)?;
    let mut candidates = Vec::with_capacity(100);
    let mut truth = Vec::with_capacity(100);
    for i in 0..100 {
        let centre = if i < 50 { 0.1 } else { 0.9 };
        candidates.push(PaaCandidate {
            sample: i,
            gt: 0,
            rank_score: centre + noise.sample(&mut rng),
            loc_score: centre + noise.sample(&mut rng),
        });
        truth.push(i >= 50);
    }
    let first = paa_star_assign(&candidates, 100, 11).map_err(e2s)?;
    let second = paa_star_assign(&candidates, 100, 11).map_err(e2s)?;
    let correct = (0..100)
        .filter(|&i| first.positives.contains(&i) == truth[i])
        .count();
    let a = serde_json::to_vec(&first).map_err(e2s)?;
    let b = serde_json::to_vec(&second).map_err(e2s)?;
    ensure(correct >= 95, || format!("{correct}/100 correct"))?;
    ensure(a == b, || "rerun differs".into())?;
    Ok(format!("{correct}/100 correct, rerun identical"))
}

fn truncation_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..100 {
        let inst = random_instance(&mut rng, 20, 200, 1.0);
        let sets = arps(&inst);
        let largest = sets.sets.values().map(Vec::len).max().unwrap_or(0);
        for balance in [
            BalanceConstant::RankSum,
            BalanceConstant::ValidNegCount { threshold: 0.0 },
        ] {
            let unlimited = LossConfig {
                q: None,
                balance,
                ..LossConfig::default()
            };
            let reference = match ape_loss(&inst, &sets, &unlimited) {
                Ok(out) => out,
                Err(rankpair::Error::DegenerateDenominator { .. }) => continue,
                Err(e) => return Err(e.to_string()),
            };
            for q in [largest.max(1), largest + 1, largest * 3 + 7] {
                let capped = LossConfig {
                    q: Some(q),
                    ..unlimited.clone()
                };
                let out = ape_loss(&inst, &sets, &capped).map_err(e2s)?;
                ensure(out == reference, || format!("trial {trial}: q = {q} changes the loss"))?;
            }
        }

        let max_gap = inst
            .logits
            .iter()
            .fold(f64::NEG_INFINITY, |m, &x| m.max(x))
            - inst.logits.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let threshold = max_gap + 1.0;
        for &u in &inst.positives() {
            let kept = valid_negative_filter(u, &inst, sets.get(u).unwrap_or(&[]), threshold)
                .map_err(e2s)?;
            ensure(kept.is_empty(), || format!("trial {trial}: positive {u} keeps pairs"))?;
        }
        let filtered = LossConfig {
            balance: BalanceConstant::ValidNegCount { threshold },
            ..LossConfig::default()
        };
        let out = ape_loss(&inst, &sets, &filtered).map_err(e2s)?;
        ensure(out.loss == 0.0, || format!("trial {trial}: loss {}", out.loss))?;
        ensure(out.gradient.grads.iter().all(|&g| g == 0.0), || {
            format!("trial {trial}: non-zero gradient")
        })?;
    }
    Ok("100 instances".into())
}

fn geometry_fixtures() -> Outcome {
    let b = |x1, y1, x2, y2| BBox::new(x1, y1, x2, y2).map_err(e2s);
    let left = b(0.0, 0.0, 2.0, 2.0)?;
    let right = b(1.0, 0.0, 3.0, 2.0)?;
    let v = iou(&left, &right).map_err(e2s)?;
    ensure(v == 1.0 / 3.0, || format!("IoU {v}"))?;
    let l = giou_loss(&left, &right).map_err(e2s)?;
    ensure(l == 2.0 / 3.0, || format!("GIoU loss {l}"))?;

    let a = b(0.0, 0.0, 1.0, 1.0)?;
    let bb = b(0.0, 0.0, 1.0, 0.7)?;
    let c = b(5.0, 5.0, 6.0, 6.0)?;
    ensure(nms(&[a], &[0.9], 0.15, 0.6).map_err(e2s)? == vec![0], || "single box".into())?;
    ensure(nms(&[a, a], &[0.9, 0.8], 0.15, 0.6).map_err(e2s)? == vec![0], || {
        "identical boxes".into()
    })?;
    let kept = nms(&[a, bb, c], &[0.9, 0.8, 0.7], 0.15, 0.6).map_err(e2s)?;
    ensure(kept == vec![0, 2], || format!("kept {kept:?}"))?;
    Ok("IoU 1/3, GIoU loss 2/3, kept {A, C}".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 CE pairwise error equals sigmoid error-driven update", ce_equals_error_driven),
        ("2 analytic gradients match finite differences", gradient_oracle),
        ("3 gradients sum to zero", gradient_balance),
        ("4 one minus precision loss equals AP", precision_matches_ap),
        ("5 adaptive loss equals explicit counts", ape_matches_counts),
        ("6 pair selection matches membership restatement", arps_restatement),
        ("7 adaptive pairs raise score/IoU correlation", correlation_gain),
        ("8 GMM assigner separates two clusters", gmm_two_clusters),
        ("9 truncation and filter no-op identities", truncation_identities),
        ("10 geometry and NMS fixtures", geometry_fixtures),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
