use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use eldt_core::baselines::{AcoParams, GaParams, GpParams};
use eldt_core::ge::EvolutionConfig;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Makeorbuy,
    Hfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Eldt,
    Rs,
    Ga,
    Aco,
    Greedy,
    Gp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [Algorithm::Eldt, Algorithm::Rs, Algorithm::Ga, Algorithm::Aco, Algorithm::Greedy, Algorithm::Gp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Eldt => "eldt",
            Algorithm::Rs => "rs",
            Algorithm::Ga => "ga",
            Algorithm::Aco => "aco",
            Algorithm::Greedy => "greedy",
            Algorithm::Gp => "gp",
        }
    }

    pub fn produces_tree(self) -> bool {
        matches!(self, Algorithm::Eldt | Algorithm::Gp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Makeorbuy => "makeorbuy",
            Problem::Hfs => "hfs",
        })
    }
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "makeorbuy" => Ok(Problem::Makeorbuy),
            "hfs" => Ok(Problem::Hfs),
            _ => Err(format!("unknown problem {s:?}, expected makeorbuy or hfs")),
        }
    }
}

/// One campaign: `runs` runs of one algorithm on one dataset, run `i`
/// seeded with `seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub algorithm: Algorithm,
    /// Orders CSV (make-or-buy) or jobs CSV (flow shop).
    pub dataset: PathBuf,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Make-or-buy simulation parameters (TOML); defaults when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    /// Machine type table (CSV); the bundled table when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_types: Option<PathBuf>,
    /// Transport days added to every delivery (flow shop); 0 leaves it out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_days: Option<f64>,
    /// Grammar file for ELDT; generated from the observation schema when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammar: Option<PathBuf>,
    #[serde(default)]
    pub eldt: EvolutionConfig,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default)]
    pub aco: AcoParams,
    #[serde(default)]
    pub gp: GpParams,
}

fn default_budget() -> u64 {
    5000
}

fn default_runs() -> usize {
    10
}

impl ExperimentConfig {
    pub fn new(problem: Problem, algorithm: Algorithm, dataset: PathBuf) -> Self {
        ExperimentConfig {
            problem,
            algorithm,
            dataset,
            budget: default_budget(),
            runs: default_runs(),
            seed: 0,
            params: None,
            machine_types: None,
            transport_days: None,
            grammar: None,
            eldt: EvolutionConfig::default(),
            ga: GaParams::default(),
            aco: AcoParams::default(),
            gp: GpParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// The top-level budget governs every algorithm, so the ELDT section is
    /// written with the same value.
    pub fn to_toml(&self) -> String {
        let mut c = self.clone();
        c.eldt.budget = c.budget;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.runs == 0 {
            return Err(BenchError::Config("runs must be at least 1".into()));
        }
        if self.budget == 0 {
            return Err(BenchError::Config("budget must be at least 1".into()));
        }
        if self.algorithm == Algorithm::Greedy && self.problem != Problem::Hfs {
            return Err(BenchError::Config("greedy applies to the flow shop problem only".into()));
        }
        if self.seed.checked_add(self.runs as u64).is_none() {
            return Err(BenchError::Config("seed + runs overflows".into()));
        }
        Ok(())
    }

    /// Seeds of the runs actually executed; greedy runs once.
    pub fn seeds(&self) -> Vec<u64> {
        let runs = if self.algorithm == Algorithm::Greedy { 1 } else { self.runs };
        (0..runs as u64).map(|i| self.seed + i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = ExperimentConfig::from_toml("problem = \"hfs\"\nalgorithm = \"ga\"\ndataset = \"jobs.csv\"\n").unwrap();
        assert_eq!((c.budget, c.runs, c.seed), (5000, 10, 0));
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        let small = ExperimentConfig { budget: 70, ..c };
        assert!(small.to_toml().contains("[eldt]\npopulation_size = 30\nmutation_prob = 0.05\ncrossover_prob = 0.5\ntournament_size = 2\ngenotype_length = 100\ng_max = 40000\npenalty_fitness = -1000000000.0\nbudget = 70\n"));
        assert!(ExperimentConfig::from_toml("problem = \"hfs\"\nalgorithm = \"ga\"\ndataset = \"x\"\nbudgte = 3\n").is_err());
    }

    #[test]
    fn validation_and_seeds() {
        let mut c = ExperimentConfig::new(Problem::Makeorbuy, Algorithm::Greedy, "o.csv".into());
        assert!(c.validate().is_err());
        c.problem = Problem::Hfs;
        c.seed = 4;
        assert!(c.validate().is_ok());
        assert_eq!(c.seeds(), vec![4]);
        c.algorithm = Algorithm::Rs;
        c.runs = 3;
        assert_eq!(c.seeds(), vec![4, 5, 6]);
        c.seed = u64::MAX;
        assert!(c.validate().is_err());
        assert_eq!("aco".parse::<Algorithm>(), Ok(Algorithm::Aco));
        assert!("tpe".parse::<Algorithm>().is_err());
    }
}
