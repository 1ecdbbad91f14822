//! Acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any fails.

#[path = "../../core/tests/support/hfs_oracle.rs"]
mod hfs_oracle;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use eldt_bench::output::write_outputs;
use eldt_bench::stats::wilcoxon_rank_sum;
use eldt_bench::{run_experiment, Algorithm, ExperimentConfig, Problem};
use eldt_core::baselines::{ga_run, gp_evolve, hfs_space, random_search, GaParams, GpParams};
use eldt_core::datagen::{self, gen_hfs, gen_makeorbuy, HfsVariant};
use eldt_core::env::{EnvFactory, ToyThresholdFactory};
use eldt_core::ge::{run_eldt, EvolutionConfig, Grammar};
use eldt_core::hfs::{check_feasible, decode_list_schedule, lower_bounds, HfsFactory};
use eldt_core::makeorbuy::{simulate, MakeOrBuyParams};
use eldt_core::record::{RunRecord, Solution, TreeArtifact};
use eldt_core::rng;
use eldt_core::tree::{q_update, Leaf};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Trees = Vec<(String, TreeArtifact)>;
type Check = Box<dyn FnOnce(&mut Trees) -> Outcome>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {:.1}s, limit {}s", t.as_secs_f64(), limit.as_secs()))
}

fn tree_of(rec: &RunRecord) -> Result<&TreeArtifact, String> {
    match &rec.solution {
        Solution::Tree(art) => Ok(art),
        _ => Err(format!("{} produced no tree", rec.algorithm)),
    }
}

fn c1_all_outsource_revenue() -> Outcome {
    let start = Instant::now();
    let p = MakeOrBuyParams::default();
    let mut checked = 0;
    for dataset in 0..20 {
        let orders = gen_makeorbuy(100, dataset);
        for seed in [0, 1, 99, u64::MAX] {
            let r = simulate(&orders, &[true; 100], &p, seed).revenue;
            ensure(r == 7000.0, || format!("dataset {dataset} seed {seed}: revenue {r}"))?;
            checked += 1;
        }
    }
    within(start, Duration::from_secs(1))?;
    Ok(format!("{checked} (dataset, seed) pairs give exactly 7000"))
}

fn c2_revenue_bound() -> Outcome {
    let start = Instant::now();
    let p = MakeOrBuyParams::default();
    let orders = gen_makeorbuy(100, 0);
    let mut r = rng::from_seed(2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..1000 {
        let bits: Vec<bool> = (0..100).map(|_| r.gen()).collect();
        let out = simulate(&orders, &bits, &p, r.gen());
        ensure((0.0..=10_000.0).contains(&out.revenue), || format!("pair {i}: revenue {}", out.revenue))?;
        ensure(out.n_on_time + out.n_late == 100, || format!("pair {i}: {} + {}", out.n_on_time, out.n_late))?;
        lo = lo.min(out.revenue);
        hi = hi.max(out.revenue);
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("1000 pairs, revenue in [{lo}, {hi}]"))
}

fn c3_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng::from_seed(31);
    let mut decodes = 0;
    for case in 0..50 {
        let inst = hfs_oracle::random_instance(&mut r, 5, 2);
        for perm in hfs_oracle::permutations(inst.jobs().len()) {
            let s = decode_list_schedule(&inst, &perm).map_err(|e| e.to_string())?;
            let (_, expected) = hfs_oracle::oracle_schedule(&inst, &perm);
            ensure(s.makespan() == expected, || format!("case {case} perm {perm:?}: {} vs oracle {expected}", s.makespan()))?;
            decodes += 1;
        }
    }
    within(start, Duration::from_secs(120))?;
    Ok(format!("50 instances, {decodes} permutations match the oracle"))
}

fn c4_feasibility_fuzz() -> Outcome {
    let start = Instant::now();
    let mut r = rng::from_seed(41);
    let variants = [HfsVariant::D1, HfsVariant::D2, HfsVariant::D3, HfsVariant::D4];
    for i in 0..10_000u64 {
        let inst = if i % 2 == 0 {
            hfs_oracle::random_instance(&mut r, 8, 3)
        } else {
            gen_hfs(variants[(i / 2 % 4) as usize], r.gen_range(1..=30), i)
        };
        let mut perm: Vec<usize> = (0..inst.jobs().len()).collect();
        perm.shuffle(&mut r);
        let s = decode_list_schedule(&inst, &perm).map_err(|e| e.to_string())?;
        let v = check_feasible(&inst, &s);
        ensure(v.is_empty(), || format!("decode {i}: {v:?}"))?;
        let lb = lower_bounds(&inst);
        ensure(s.makespan() >= lb - 1e-9, || format!("decode {i}: makespan {} below bound {lb}", s.makespan()))?;
    }
    within(start, Duration::from_secs(300))?;
    Ok("10000 decodes, no violations, all at or above the bound".into())
}

fn c5_eldt_learns(trees: &mut Trees) -> Outcome {
    let start = Instant::now();
    let f = ToyThresholdFactory::default();
    let grammar = Grammar::for_spec(f.spec(), 9);
    let config = EvolutionConfig { budget: 2000, ..Default::default() };
    let mut fits = Vec::new();
    for seed in 0..10 {
        let rec = run_eldt(&config, &grammar, &f, seed).map_err(|e| e.to_string())?;
        trees.push((format!("eldt toy seed {seed}"), tree_of(&rec)?.clone()));
        fits.push(rec.best_fitness);
    }
    let good = fits.iter().filter(|&&x| x >= 47.5).count();
    within(start, Duration::from_secs(120))?;
    ensure(good >= 8, || format!("{good}/10 seeds reached 47.5: {fits:?}"))?;
    Ok(format!("{good}/10 seeds reached 47.5 (best fitness {fits:?})"))
}

fn c6_bellman() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut l = Leaf::with_q(vec![0.0]);
    let a = q_update(&mut l, 0, 1.0, 0.0, 0.1, 0.9);
    ensure(close(a, 0.1) && close(l.q()[0], 0.1), || format!("first example gave {a}"))?;
    let mut l = Leaf::with_q(vec![0.42]);
    let b = q_update(&mut l, 0, 3.0, 2.0, 0.0, 0.9);
    ensure(close(b, 0.42), || format!("alpha 0 gave {b}"))?;
    let mut l = Leaf::with_q(vec![0.5]);
    let c = q_update(&mut l, 0, 0.0, 1.0, 0.5, 0.9);
    ensure(close(c, 0.7), || format!("third example gave {c}"))?;
    Ok(format!("{a}, {b} (unchanged), {c}"))
}

fn write_datasets(dir: &Path) -> Result<(std::path::PathBuf, std::path::PathBuf), String> {
    let orders = dir.join("orders.csv");
    let jobs = dir.join("jobs.csv");
    datagen::save_orders(&orders, &gen_makeorbuy(100, 0)).map_err(|e| e.to_string())?;
    datagen::save_jobs(&jobs, &datagen::gen_hfs_jobs(HfsVariant::D1, 30, 0)).map_err(|e| e.to_string())?;
    Ok((orders, jobs))
}

fn campaigns(orders: &Path, jobs: &Path) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for a in [Algorithm::Eldt, Algorithm::Gp, Algorithm::Rs, Algorithm::Ga, Algorithm::Aco] {
        out.push(ExperimentConfig::new(Problem::Makeorbuy, a, orders.to_path_buf()));
    }
    for a in Algorithm::ALL {
        out.push(ExperimentConfig::new(Problem::Hfs, a, jobs.to_path_buf()));
    }
    out
}

fn c7_budget() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (orders, jobs) = write_datasets(dir.path())?;
    let mut done = Vec::new();
    for mut config in campaigns(&orders, &jobs) {
        config.budget = 5000;
        config.runs = 1;
        let exp = run_experiment(&config, None).map_err(|e| e.to_string())?;
        let rec = &exp.records[0];
        let want = if config.algorithm == Algorithm::Greedy { 1 } else { 5000 };
        let label = format!("{} {}", config.problem, config.algorithm);
        ensure(rec.episodes == want, || format!("{label}: {} episodes", rec.episodes))?;
        ensure(rec.trace.len() == want as usize, || format!("{label}: trace of {}", rec.trace.len()))?;
        ensure(rec.trace_is_monotone(), || format!("{label}: trace not monotone"))?;
        done.push(label);
    }
    Ok(format!("exact budget and monotone trace for {}", done.join(", ")))
}

fn c8_ga_vs_rs(trees: &mut Trees) -> Outcome {
    let start = Instant::now();
    let inst = gen_hfs(HfsVariant::D1, 30, 0);
    let space = hfs_space(inst.clone()).map_err(|e| e.to_string())?;
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let ga = -ga_run(&space, 500, &GaParams::default(), seed).map_err(|e| e.to_string())?.best_fitness;
        let rs = -random_search(&space, 500, seed).map_err(|e| e.to_string())?.best_fitness;
        if ga <= rs {
            wins += 1;
        }
        pairs.push(format!("{ga}/{rs}"));
    }
    // The vector baselines yield no trees; the tree learners run on the same
    // instance and budget to feed the pruning check.
    let f = HfsFactory::new(inst).map_err(|e| e.to_string())?;
    let grammar = Grammar::for_spec(f.spec(), 9);
    for seed in 0..3 {
        let eldt = run_eldt(&EvolutionConfig { budget: 500, ..Default::default() }, &grammar, &f, seed).map_err(|e| e.to_string())?;
        trees.push((format!("eldt hfs seed {seed}"), tree_of(&eldt)?.clone()));
        let gp = gp_evolve(&f, 500, &GpParams::default(), seed).map_err(|e| e.to_string())?;
        trees.push((format!("gp hfs seed {seed}"), tree_of(&gp)?.clone()));
    }
    within(start, Duration::from_secs(600))?;
    ensure(wins >= 8, || format!("GA <= RS in {wins}/10 seeds (ga/rs: {})", pairs.join(" ")))?;
    Ok(format!("GA <= RS in {wins}/10 seeds (ga/rs: {})", pairs.join(" ")))
}

fn c9_wilcoxon() -> Outcome {
    let a = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    let b = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    ensure(a.exact && (a.p - 0.1).abs() <= 1e-12, || format!("(3,3) gave p = {}", a.p))?;
    ensure(b.exact && (b.p - 1.0 / 3.0).abs() <= 1e-12, || format!("(2,2) gave p = {}", b.p))?;
    Ok(format!("(3,3) p = {}, (2,2) p = {}", a.p, b.p))
}

fn c10_pruning(trees: &[(String, TreeArtifact)]) -> Outcome {
    ensure(!trees.is_empty(), || "no trees recorded".into())?;
    let mut steps = 0;
    for (label, art) in trees {
        ensure(!art.replay.is_empty(), || format!("{label}: empty trace"))?;
        for (i, obs) in art.replay.iter().enumerate() {
            let full = art.tree.greedy_action(obs).map_err(|e| e.to_string())?;
            let pruned = art.pruned.greedy_action(obs).map_err(|e| e.to_string())?;
            ensure(full == pruned, || format!("{label} step {i}: {full} vs pruned {pruned}"))?;
            steps += 1;
        }
    }
    Ok(format!("{} trees, {steps} recorded steps agree", trees.len()))
}

fn artifacts(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let p = e.map_err(|e| e.to_string())?.path();
            Ok((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).map_err(|e| e.to_string())?))
        })
        .collect::<Result<_, String>>()?;
    files.retain(|(name, _)| name != "timing.txt");
    files.sort();
    Ok(files)
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (orders, jobs) = write_datasets(dir.path())?;
    let mut compared = 0;
    for (k, mut config) in campaigns(&orders, &jobs).into_iter().enumerate() {
        config.budget = 200;
        config.runs = 4;
        config.seed = 17;
        let mut outputs = Vec::new();
        for (rep, threads) in [1, 4, 1].into_iter().enumerate() {
            let out = dir.path().join(format!("c{k}_{rep}"));
            let exp = run_experiment(&config, Some(threads)).map_err(|e| e.to_string())?;
            write_outputs(&out, &exp).map_err(|e| e.to_string())?;
            outputs.push(artifacts(&out)?);
        }
        let label = format!("{} {}", config.problem, config.algorithm);
        ensure(outputs[0].len() >= 5, || format!("{label}: only {} files", outputs[0].len()))?;
        for other in &outputs[1..] {
            ensure(other == &outputs[0], || format!("{label}: outputs differ between invocations"))?;
        }
        compared += outputs[0].len();
    }
    Ok(format!("{compared} files byte-identical across 3 invocations (1, 4, 1 threads)"))
}

fn main() {
    let mut trees = Vec::new();
    let criteria: Vec<(&str, Check)> = vec![
        ("revenue anchor", Box::new(|_| c1_all_outsource_revenue())),
        ("revenue bound", Box::new(|_| c2_revenue_bound())),
        ("decoder oracle equivalence", Box::new(|_| c3_oracle_equivalence())),
        ("feasibility fuzzing", Box::new(|_| c4_feasibility_fuzz())),
        ("eldt learning", Box::new(c5_eldt_learns)),
        ("bellman anchors", Box::new(|_| c6_bellman())),
        ("budget conformance", Box::new(|_| c7_budget())),
        ("ga vs random search", Box::new(c8_ga_vs_rs)),
        ("wilcoxon exactness", Box::new(|_| c9_wilcoxon())),
        ("pruning semantics", Box::new(|t: &mut Trees| c10_pruning(t))),
        ("determinism", Box::new(|_| c11_determinism())),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut trees))).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
