//! Acceptance gate: one PASS/FAIL line per primary criterion.
//!
//! Run with `cargo test -p xpcr-cli --test acceptance`. Exits non-zero if any line fails.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xpcr_core::evaluation::{quality_measures, run_study, Measures, StudyConfig};
use xpcr_core::forecasters::ModelPool;
use xpcr_core::metalearn::{grouped_folds, select_best, LearnerBundle, LearnerConfig, MetaTable, Method};
use xpcr_core::metrics::{mape, mase, rmse};
use xpcr_core::propertydb::{index_scale, property_names, Direction, PcrGroup, PropertyDatabase};
use xpcr_core::recommender::{rank_estimates, Mode};
use xpcr_core::scoring::{compound, default_weights, RatingScale, WeightVector};
use xpcr_core::synthetic::demo_corpus;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn models(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i}")).collect()
}

fn index_scale_law() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..1000 {
        let n = rng.random_range(1..=12);
        let raw: BTreeMap<String, f64> = models(n)
            .into_iter()
            .map(|m| (m, 10f64.powf(rng.random_range(-6.0..6.0))))
            .collect();
        let f = index_scale(&raw, Direction::LowerIsBetter);
        let max = f.values().copied().fold(f64::MIN, f64::max);
        ensure(max == 1.0, || format!("trial {trial}: max index {max}"))?;
        ensure(f.values().all(|v| *v > 0.0 && *v <= 1.0), || format!("trial {trial}: value outside (0,1]"))?;
        for (a, ra) in &raw {
            for (b, rb) in &raw {
                if ra < rb {
                    ensure(f[a] > f[b], || format!("trial {trial}: ordering not inverted"))?;
                }
            }
        }
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: BTreeMap<String, f64> = raw.iter().map(|(m, v)| (m.clone(), v * c)).collect();
        let g = index_scale(&scaled, Direction::LowerIsBetter);
        for (m, v) in &f {
            ensure((v - g[m]).abs() < 1e-12, || format!("trial {trial}: scale changed {m}: {v} vs {}", g[m]))?;
        }
    }
    let zero: BTreeMap<String, f64> = [("A".to_string(), 0.0), ("B".to_string(), 2.0)].into();
    let f = index_scale(&zero, Direction::LowerIsBetter);
    ensure(f["A"] == 1.0 && (f["B"] - 5e-13).abs() < 1e-25, || format!("zero clamp gave {f:?}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 random maps plus the zero-clamp example in {:.2}s", elapsed.as_secs_f64()))
}

fn random_estimates(rng: &mut ChaCha8Rng, n: usize) -> BTreeMap<String, BTreeMap<String, f64>> {
    models(n)
        .into_iter()
        .map(|m| {
            let e = property_names().map(|p| (p.to_string(), rng.random_range(0.01..1.0))).collect();
            (m, e)
        })
        .collect()
}

fn compound_law() -> Outcome {
    let start = Instant::now();
    let w = default_weights();
    for g in [PcrGroup::Prediction, PcrGroup::Complexity, PcrGroup::Resources] {
        ensure(w.group_sum(g) == 1.0 / 3.0, || format!("{g:?} sums to {}", w.group_sum(g)))?;
    }
    let pair = WeightVector::from_pairs([("mase", 0.5), ("rmse", 0.5)]).map_err(|e| e.to_string())?;
    let est: BTreeMap<String, f64> = [("mase".to_string(), 0.8), ("rmse".to_string(), 0.4)].into();
    let v = compound(&est, &pair).map_err(|e| e.to_string())?.value;
    ensure((v - 0.6).abs() < 1e-12, || format!("dot product example gave {v}"))?;

    let scale = RatingScale::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..1000 {
        let est = random_estimates(&mut rng, 6);
        // one-hot weights reduce to the single-property argmax
        let p = property_names().nth(rng.random_range(0..9)).unwrap();
        let one_hot = WeightVector::only(p).map_err(|e| e.to_string())?;
        let rec = rank_estimates("d", &est, &one_hot, &scale).map_err(|e| e.to_string())?;
        let mut best: Option<(&String, f64)> = None;
        for (m, e) in &est {
            if best.is_none_or(|(_, b)| e[p] > b) {
                best = Some((m, e[p]));
            }
        }
        ensure(rec.top() == Some(best.unwrap().0.as_str()), || format!("trial {trial}: one-hot {p} argmax"))?;

        let raw: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let wa = WeightVector::from_pairs(property_names().zip(raw.iter().copied())).map_err(|e| e.to_string())?;
        let wb = WeightVector::from_pairs(property_names().zip(raw.iter().map(|v| v * c))).map_err(|e| e.to_string())?;
        let a = rank_estimates("d", &est, &wa, &scale).map_err(|e| e.to_string())?;
        let b = rank_estimates("d", &est, &wb, &scale).map_err(|e| e.to_string())?;
        ensure(a.top() == b.top(), || format!("trial {trial}: scaling by {c} moved the argmax"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("group sums exactly 1/3, 1000 one-hot and 1000 scaling trials in {:.2}s", elapsed.as_secs_f64()))
}

fn metric_oracles() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let insample = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let m = mase(&[7.0, 8.0], &[6.0, 6.0], &insample, 1).map_err(|e| e.to_string())?;
    ensure(close(m, 1.5), || format!("MASE example gave {m}"))?;
    ensure(mase(&[7.0], &[7.0], &insample, 1).map_err(|e| e.to_string())? == 0.0, || "perfect MASE".into())?;
    ensure(mase(&[1.0], &[2.0], &[5.0; 4], 1).is_err(), || "constant insample MASE must fail".into())?;
    let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    ensure(close(r, 12.5f64.sqrt()), || format!("RMSE example gave {r}"))?;
    ensure(close(rmse(&[1.0], &[3.0]).map_err(|e| e.to_string())?, 2.0), || "single-point RMSE".into())?;
    let p = mape(&[100.0], &[110.0]).map_err(|e| e.to_string())?;
    ensure(close(p, 0.10), || format!("MAPE example gave {p}"))?;
    ensure(mape(&[0.0, 1.0], &[1.0, 1.0]).is_err(), || "zero actual MAPE must fail".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..1000 {
        let n = rng.random_range(1..10);
        let actual: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let forecast: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let insample: Vec<f64> = (0..n + 5).map(|_| rng.random_range(1.0..100.0)).collect();
        let c = rng.random_range(0.01..100.0);
        let s = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let m0 = mase(&actual, &forecast, &insample, 1).map_err(|e| e.to_string())?;
        let m1 = mase(&s(&actual), &s(&forecast), &s(&insample), 1).map_err(|e| e.to_string())?;
        let p0 = mape(&actual, &forecast).map_err(|e| e.to_string())?;
        let p1 = mape(&s(&actual), &s(&forecast)).map_err(|e| e.to_string())?;
        let r0 = rmse(&actual, &forecast).map_err(|e| e.to_string())?;
        let r1 = rmse(&s(&actual), &s(&forecast)).map_err(|e| e.to_string())?;
        ensure((m0 - m1).abs() <= 1e-9 * m0.max(1.0), || format!("trial {trial}: MASE not scale-free"))?;
        ensure((p0 - p1).abs() <= 1e-9 * p0.max(1.0), || format!("trial {trial}: MAPE not scale-free"))?;
        ensure((r0 * c - r1).abs() <= 1e-9 * r1.max(1.0), || format!("trial {trial}: RMSE not homogeneous"))?;
    }
    Ok("hand examples to 1e-9, 1000 scale trials".into())
}

/// Independent ranking measures: full sorts, explicit loops.
fn naive_measures(truth: &BTreeMap<String, f64>, est: &BTreeMap<String, f64>, threshold: f64) -> Measures {
    let sorted = |m: &BTreeMap<String, f64>| {
        let mut v: Vec<(String, f64)> = m.iter().map(|(k, x)| (k.clone(), *x)).collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        v.into_iter().map(|(k, _)| k).collect::<Vec<_>>()
    };
    let (t, e) = (sorted(truth), sorted(est));
    let mut sum = 0.0;
    let mut within = 0;
    for (m, f) in truth {
        let eps = (f - est[m]).abs();
        sum += eps;
        if eps < threshold {
            within += 1;
        }
    }
    let mut overlap = 0;
    for a in &t[..5] {
        for b in &e[..5] {
            if a == b {
                overlap += 1;
            }
        }
    }
    Measures {
        abs_error: sum / truth.len() as f64,
        within_threshold: within as f64 / truth.len() as f64,
        top1: if t[0] == e[0] { 1.0 } else { 0.0 },
        top5_hit: if e[..5].contains(&t[0]) { 1.0 } else { 0.0 },
        top5_overlap: overlap as f64,
    }
}

fn ranking_measures() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..1000 {
        // coarse values so ties occur and exercise the tie rule
        let draw = |rng: &mut ChaCha8Rng| -> BTreeMap<String, f64> {
            models(6).into_iter().map(|m| (m, f64::from(rng.random_range(1..=10u8)) / 10.0)).collect()
        };
        let truth = draw(&mut rng);
        let est = draw(&mut rng);
        let fast = quality_measures(&truth, &est, 0.1).map_err(|e| e.to_string())?;
        let slow = naive_measures(&truth, &est, 0.1);
        ensure(fast == slow, || format!("trial {trial}: {fast:?} vs {slow:?}"))?;
        ensure(fast.top1 <= fast.top5_hit, || format!("trial {trial}: top-1 without top-5 hit"))?;
        ensure(fast.top5_hit == 0.0 || fast.top5_overlap >= 1.0, || format!("trial {trial}: top-5 hit without overlap"))?;
    }
    Ok("1000 random 6-model maps match the naive implementation; top-1 implies top-5 hit implies overlap >= 1".into())
}

fn synthetic_table(groups: usize, per_group: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> MetaTable {
    let mut t = MetaTable::new("synthetic", (0..5).map(|i| format!("x{i}")).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g in 0..groups {
        for i in 0..per_group {
            let row: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = f(&row);
            t.push(row, y, &format!("g{g}"), &format!("d{g}_{i}"), "m").unwrap();
        }
    }
    t
}

fn selection_oracle() -> Outcome {
    let cfg = LearnerConfig::default();
    let linear = synthetic_table(20, 100, 5, |x| 0.3 + 0.4 * x[1] - 0.2 * x[3]);
    let a = select_best(&linear, &Method::ALL, 5, &cfg).map_err(|e| e.to_string())?;
    let err = a.report.error_of(Method::LinearRidge).unwrap();
    ensure(a.report.chosen == Method::LinearRidge, || format!("linear target chose {}", a.report.chosen))?;
    ensure(err < 1e-6, || format!("linear CV error {err}"))?;
    let b = select_best(&linear, &Method::ALL, 5, &cfg).map_err(|e| e.to_string())?;
    ensure(a.report == b.report && a.learner == b.learner, || "selection not deterministic".into())?;

    let step = synthetic_table(10, 20, 6, |x| if x[2] > 0.0 { 1.0 } else { 0.2 });
    let s = select_best(&step, &Method::ALL, 5, &cfg).map_err(|e| e.to_string())?;
    ensure(s.report.chosen == Method::DecisionTree, || format!("step target chose {}", s.report.chosen))?;
    let chosen = s.report.error_of(s.report.chosen).unwrap();
    ensure(s.report.scores.iter().all(|m| chosen <= m.mean_abs_error), || "chosen is not the minimum".into())?;
    Ok(format!("linear -> linear_ridge (CV error {err:.1e}), step -> decision_tree, repeatable"))
}

fn grouped_cv_leakage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rows_checked = 0usize;
    for layout in 0..100 {
        let n_groups = rng.random_range(2..40);
        let n_folds = rng.random_range(2..=n_groups.min(10));
        let mut groups = Vec::new();
        for g in 0..n_groups {
            for _ in 0..rng.random_range(1..8) {
                groups.push(format!("grp{g}"));
            }
        }
        // shuffle row order so groups are not contiguous
        for i in (1..groups.len()).rev() {
            let j = rng.random_range(0..=i);
            groups.swap(i, j);
        }
        let seed = rng.random::<u64>();
        let folds = grouped_folds(&groups, n_folds, seed).map_err(|e| e.to_string())?;
        let sizes = folds.fold_sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        ensure(hi - lo <= 1, || format!("layout {layout}: unbalanced folds {sizes:?}"))?;
        for f in 0..n_folds {
            let (train, valid) = folds.split(&groups, f);
            let tg: BTreeSet<&String> = train.iter().map(|&i| &groups[i]).collect();
            let leaked = valid.iter().filter(|&&i| tg.contains(&groups[i])).count();
            ensure(leaked == 0, || format!("layout {layout} fold {f}: {leaked} leaked rows"))?;
            ensure(train.len() + valid.len() == groups.len(), || format!("layout {layout}: rows lost"))?;
            rows_checked += valid.len();
        }
    }
    Ok(format!("100 random layouts, {rows_checked} validation rows, zero shared groups"))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let corpus = demo_corpus(42).map_err(|e| e.to_string())?;
    let pool = ModelPool::default();
    let config = StudyConfig::default();
    let out = run_study(&corpus, &pool, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let r = &out.report;
    let groups: BTreeSet<&str> = corpus.iter().map(|d| d.group.as_str()).collect();
    ensure(groups.len() == 19 && corpus.len() == 114, || format!("{} groups, {} datasets", groups.len(), corpus.len()))?;
    ensure(r.db_rows == 684 && out.db.datasets().len() * pool.len() == 684, || format!("{} rows", r.db_rows))?;
    ensure(elapsed < Duration::from_secs(600), || format!("study took {elapsed:?}"))?;
    ensure(r.in_fold_evaluations == 0, || format!("{} in-fold evaluations", r.in_fold_evaluations))?;

    for (mode, conv) in &r.convergence {
        for c in &conv.per_dataset {
            let monotone = c.points.windows(2).all(|w| w[0].quality_ratio <= w[1].quality_ratio);
            let last = c.points.last().unwrap();
            ensure(monotone, || format!("{mode:?}/{}: quality not monotone", c.dataset))?;
            ensure(last.k == 6 && last.quality_ratio == 1.0 && last.cost_ratio == 1.0, || {
                format!("{mode:?}/{}: endpoint {last:?}", c.dataset)
            })?;
        }
    }
    ensure(r.oracle_top1 == 1.0, || format!("oracle top-1 {}", r.oracle_top1))?;

    let comp = r.modes.get(&Mode::Compositional).ok_or("compositional row missing")?;
    let direct = r.modes.get(&Mode::Direct).ok_or("direct row missing")?;
    let baseline = 5.0 / 6.0;
    ensure(comp.top5_hit.mean > baseline, || {
        format!("out-of-fold top-5 hit {:.3} does not beat {baseline:.3}", comp.top5_hit.mean)
    })?;

    let again = run_study(&corpus, &pool, &config).map_err(|e| e.to_string())?;
    let a = serde_json::to_string(&out.report).map_err(|e| e.to_string())?;
    let b = serde_json::to_string(&again.report).map_err(|e| e.to_string())?;
    ensure(a == b, || "reports differ between identical runs".into())?;

    Ok(format!(
        "684 rows in {:.1}s, deterministic; oracle top-1 1.0; top-5 hit compositional {:.3} +/- {:.3}, \
         direct {:.3} +/- {:.3} (random 0.833); top-1 compositional {:.3}, direct {:.3}",
        elapsed.as_secs_f64(),
        comp.top5_hit.mean,
        comp.top5_hit.std,
        direct.top5_hit.mean,
        direct.top5_hit.std,
        comp.top1.mean,
        direct.top1.mean
    ))
}

fn persistence() -> Outcome {
    let corpus: Vec<_> = demo_corpus(42).map_err(|e| e.to_string())?.into_iter().take(30).collect();
    let (db, _) = xpcr_core::evaluation::build_database(&corpus, &ModelPool::default(), &Default::default())
        .map_err(|e| e.to_string())?;
    let bundle = LearnerBundle::train(&db, &WeightVector::default(), 5, &LearnerConfig::default())
        .map_err(|e| e.to_string())?
        .bundle;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db_path = dir.path().join("db.jsonl");
    let bundle_path = dir.path().join("bundle.json");
    db.save(&db_path).map_err(|e| e.to_string())?;
    bundle.save(&bundle_path).map_err(|e| e.to_string())?;
    let db2 = PropertyDatabase::load(&db_path).map_err(|e| e.to_string())?;
    let bundle2 = LearnerBundle::load(&bundle_path).map_err(|e| e.to_string())?;
    ensure(db2 == db, || "database differs after round trip".into())?;
    ensure(bundle2 == bundle, || "bundle differs after round trip".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let width = bundle.schema.width();
    let learners: Vec<_> = bundle.learners.values().chain(bundle.compound.as_ref()).collect();
    let loaded: Vec<_> = bundle2.learners.values().chain(bundle2.compound.as_ref()).collect();
    for _ in 0..100 {
        let row: Vec<f64> = (0..width).map(|_| rng.random_range(-100.0..100.0)).collect();
        for (a, b) in learners.iter().zip(&loaded) {
            let (pa, pb) = (a.predict(&row).map_err(|e| e.to_string())?, b.predict(&row).map_err(|e| e.to_string())?);
            ensure(pa.to_bits() == pb.to_bits(), || format!("{}: {pa} vs {pb}", a.property))?;
        }
    }
    Ok(format!("{} records and {} learners equal; 100 random rows bit-identical", db.len(), learners.len()))
}

fn cli_contract() -> Outcome {
    use support::*;
    let ws = Workspace::new();
    let mut checked = Vec::new();
    let mut golden = |name: &str, out: &std::process::Output, expect: i32| -> Result<(), String> {
        ensure(code(out) == expect, || format!("{name}: exit {} (expected {expect})", code(out)))?;
        check_golden(name, &normalize(&stdout_json(out), ws.path()))?;
        checked.push(name.to_string());
        Ok(())
    };
    golden("demo_data.json", &ws.demo, 0)?;
    golden("profile.json", &ws.profile, 0)?;
    golden("train.json", &ws.train, 0)?;
    let rec = ws.run(&["recommend", "--manifest", "data/synth00.json", "--bundle", "bundle.json"]);
    golden("recommend_default.json", &rec, 0)?;
    let rec2 = ws.run(&[
        "recommend", "--manifest", "data/synth00.json", "--bundle", "bundle.json", "--k", "2", "--weights", "mase=1",
    ]);
    golden("recommend_mase_k2.json", &rec2, 0)?;
    let eval = ws.run(&["evaluate", "--data", "data", "--folds", "3", "--out", "study"]);
    golden("evaluate.json", &eval, 0)?;

    let server = spawn_server(ws.path(), &["--db", "db.jsonl", "--bundle", "bundle.json"]);
    let (_, body) = wait_ready(server.port, "/api/datasets", Duration::from_secs(60)).ok_or("server never ready")?;
    let listing: serde_json::Value = serde_json::from_str(&body).map_err(|e| e.to_string())?;
    check_golden("serve_datasets.json", &normalize(&listing, ws.path()))?;
    drop(server);

    let exits = [
        (ws.run(&["profile", "--data", "missing"]), 2),
        (ws.run(&["train", "--db", "db.jsonl", "--folds", "7", "--out", "b7.json"]), 3),
        (ws.run(&["frobnicate"]), 2),
    ];
    for (i, (out, want)) in exits.iter().enumerate() {
        ensure(code(out) == *want, || format!("exit case {i}: got {} want {want}", code(out)))?;
    }
    let text = std::fs::read_to_string(ws.path().join("bundle.json")).map_err(|e| e.to_string())?;
    let hash = stdout_json(&ws.train)["schema_hash"].as_str().unwrap_or_default().to_string();
    std::fs::write(ws.path().join("bad.json"), text.replacen(&hash, &"0".repeat(64), 1)).map_err(|e| e.to_string())?;
    let bad = ws.run(&["recommend", "--manifest", "data/synth00.json", "--bundle", "bad.json"]);
    ensure(code(&bad) == 4, || format!("schema mismatch exit {}", code(&bad)))?;
    Ok(format!("{} golden outputs plus serve listing; exit codes 0/2/3/4", checked.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("index-scale law", index_scale_law),
        ("compound-score law", compound_law),
        ("metric oracles", metric_oracles),
        ("ranking measures vs brute force", ranking_measures),
        ("meta-learner selection oracle", selection_oracle),
        ("grouped CV leakage", grouped_cv_leakage),
        ("end-to-end desk-scale study", end_to_end),
        ("persistence round-trips", persistence),
        ("CLI contract", cli_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
