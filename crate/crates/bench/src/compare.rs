//! Pairwise rank-sum comparison of campaigns read back from `runs.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::stats::wilcoxon_rank_sum;
use crate::BenchError;

/// Final objectives of one campaign directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub problem: String,
    pub dataset: String,
    pub algorithm: String,
    pub objectives: Vec<f64>,
}

fn header_field<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    header.trim_start_matches('#').split_whitespace().find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
}

pub fn read_campaign(dir: &Path) -> Result<Campaign, BenchError> {
    let path = dir.join("runs.csv");
    let text = fs::read_to_string(&path).map_err(|e| BenchError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let bad = |line: usize, m: &str| BenchError::Io { path: path.display().to_string(), message: format!("line {line}: {m}") };
    let mut lines = text.lines();
    let header = lines.next().filter(|l| l.starts_with('#')).ok_or_else(|| bad(1, "missing campaign header"))?;
    let problem = header_field(header, "problem").ok_or_else(|| bad(1, "no problem"))?.to_string();
    let dataset = header_field(header, "dataset").ok_or_else(|| bad(1, "no dataset"))?.to_string();
    let algorithm = header_field(header, "algo").ok_or_else(|| bad(1, "no algo"))?.to_string();
    if lines.next() != Some("algo,run,seed,episodes,final_objective") {
        return Err(bad(2, "unexpected column header"));
    }
    let mut objectives = Vec::new();
    for (i, line) in lines.enumerate() {
        let v = line.rsplit(',').next().and_then(|x| x.parse::<f64>().ok()).ok_or_else(|| bad(i + 3, "bad objective"))?;
        objectives.push(v);
    }
    if objectives.is_empty() {
        return Err(bad(3, "no runs"));
    }
    Ok(Campaign { problem, dataset, algorithm, objectives })
}

/// `problem,dataset,algo_a,algo_b,n_a,n_b,u,p,exact` for every pair of
/// campaigns that share problem and dataset.
pub fn compare(campaigns: &[Campaign]) -> Result<String, BenchError> {
    let mut groups: BTreeMap<(&str, &str), Vec<&Campaign>> = BTreeMap::new();
    for c in campaigns {
        groups.entry((&c.problem, &c.dataset)).or_default().push(c);
    }
    let mut out = String::from("problem,dataset,algo_a,algo_b,n_a,n_b,u,p,exact\n");
    for ((problem, dataset), mut group) in groups {
        group.sort_by(|a, b| a.algorithm.cmp(&b.algorithm));
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                let r = wilcoxon_rank_sum(&a.objectives, &b.objectives)?;
                writeln!(
                    out,
                    "{problem},{dataset},{},{},{},{},{},{},{}",
                    a.algorithm,
                    b.algorithm,
                    a.objectives.len(),
                    b.objectives.len(),
                    r.u,
                    r.p,
                    r.exact
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}
