//! Campaign artifacts. Every CSV starts with one `#` comment line naming
//! the campaign and its seeds; all content is a function of the config, so
//! reruns are byte-identical. Wall-clock times go to `timing.txt` only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eldt_core::hfs;
use eldt_core::record::Solution;
use eldt_core::tree::{export, ExportFormat};

use crate::runner::{objective, Experiment};
use crate::stats::aggregate;
use crate::BenchError;

fn header(exp: &Experiment) -> String {
    let c = &exp.config;
    let seeds: Vec<String> = exp.records.iter().map(|r| r.seed.to_string()).collect();
    format!(
        "# problem={} algo={} dataset={} budget={} runs={} seeds={}\n",
        c.problem,
        c.algorithm,
        c.dataset.display(),
        c.budget,
        exp.records.len(),
        seeds.join(",")
    )
}

/// `algo,run,seed,eval_index,best_so_far`, one block per run.
pub fn history_csv(exp: &Experiment) -> String {
    let (p, a) = (exp.config.problem, exp.config.algorithm);
    let mut out = header(exp);
    out.push_str("algo,run,seed,eval_index,best_so_far\n");
    for (run, r) in exp.records.iter().enumerate() {
        for (i, &f) in r.trace.iter().enumerate() {
            writeln!(out, "{a},{run},{},{},{}", r.seed, i + 1, objective(p, a, f)).unwrap();
        }
    }
    out
}

/// `algo,run,seed,episodes,final_objective`.
pub fn runs_csv(exp: &Experiment) -> String {
    let a = exp.config.algorithm;
    let mut out = header(exp);
    out.push_str("algo,run,seed,episodes,final_objective\n");
    for (run, (r, obj)) in exp.records.iter().zip(exp.objectives()).enumerate() {
        writeln!(out, "{a},{run},{},{},{obj}", r.seed, r.episodes).unwrap();
    }
    out
}

/// `algo,n,mean,std` over the runs' final objectives.
pub fn summary_csv(exp: &Experiment) -> Result<String, BenchError> {
    let objectives = exp.objectives();
    let (mean, std) = aggregate(&objectives)?;
    let mut out = header(exp);
    out.push_str("algo,n,mean,std\n");
    writeln!(out, "{},{},{mean},{std}", exp.config.algorithm, objectives.len()).unwrap();
    Ok(out)
}

/// `algo,eval_index,mean_best,std_best` across runs; all traces must have
/// the same length.
pub fn trend_csv(exp: &Experiment) -> Result<String, BenchError> {
    let (p, a) = (exp.config.problem, exp.config.algorithm);
    let len = exp.records[0].trace.len();
    if let Some(r) = exp.records.iter().find(|r| r.trace.len() != len) {
        return Err(BenchError::Config(format!("trace lengths differ ({len} vs {})", r.trace.len())));
    }
    let mut out = header(exp);
    out.push_str("algo,eval_index,mean_best,std_best\n");
    for i in 0..len {
        let column: Vec<f64> = exp.records.iter().map(|r| objective(p, a, r.trace[i])).collect();
        let (mean, std) = aggregate(&column)?;
        writeln!(out, "{a},{},{mean},{std}", i + 1).unwrap();
    }
    Ok(out)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), BenchError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| BenchError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Writes every artifact of the campaign into `dir`.
pub fn write_outputs(dir: &Path, exp: &Experiment) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    write(dir, "config.toml", &exp.config.to_toml())?;
    write(dir, "history.csv", &history_csv(exp))?;
    write(dir, "runs.csv", &runs_csv(exp))?;
    write(dir, "summary.csv", &summary_csv(exp)?)?;
    write(dir, "trend.csv", &trend_csv(exp)?)?;

    let best = exp.best_run();
    if let Solution::Tree(art) = &exp.records[best].solution {
        let spec = exp.loaded.factory.spec();
        write(dir, "best_tree.dot", &export(&art.pruned, ExportFormat::Dot, Some(spec)))?;
        write(dir, "best_tree.txt", &export(&art.pruned, ExportFormat::Text, Some(spec)))?;
    }
    if let (Some(inst), Some(perm)) = (&exp.loaded.instance, exp.permutation(best)) {
        let schedule = hfs::decode_list_schedule(inst, &perm)?;
        let mut text = header(exp);
        text.push_str(&schedule.to_csv(inst));
        write(dir, "best_schedule.csv", &text)?;
    }
    if let Solution::Binary(bits) = &exp.records[best].solution {
        let mut text = header(exp);
        text.push_str("order_index,outsource\n");
        for (i, b) in bits.iter().enumerate() {
            writeln!(text, "{i},{b}").unwrap();
        }
        write(dir, "best_decisions.csv", &text)?;
    }

    let mut timing = String::from("run,seed,wall_seconds\n");
    for (run, r) in exp.records.iter().enumerate() {
        writeln!(timing, "{run},{},{:.3}", r.seed, r.wall_time.as_secs_f64()).unwrap();
    }
    write(dir, "timing.txt", &timing)
}
