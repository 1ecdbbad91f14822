use std::time::Duration;

use crate::env::{self, BudgetCounter, EnvError, EnvFactory};
use crate::rng;
use crate::tree::{DecisionTree, LearningConfig};

/// Whether larger or smaller objective values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }
}

/// Final policy of a tree-producing run.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeArtifact {
    /// Best tree as evaluated (Q-values after learning), visit counters from
    /// the replay pass.
    pub tree: DecisionTree,
    pub pruned: DecisionTree,
    /// Observations met during the replay pass, in order.
    pub replay: Vec<Vec<f64>>,
    pub replay_return: f64,
}

impl TreeArtifact {
    /// One greedy episode (no learning, no exploration) with cleared visit
    /// counters, then pruning of every branch the episode did not reach.
    /// Charges one episode.
    pub fn replay(mut tree: DecisionTree, factory: &dyn EnvFactory, seed: u64, budget: &BudgetCounter) -> Result<Self, EnvError> {
        tree.reset_visits();
        let mut env = factory.make(rng::derive_seed(&[seed, u64::MAX, 0]));
        let (replay_return, transitions) =
            env::run_episode_traced(env.as_mut(), &mut tree, &LearningConfig::frozen(), &mut rng::stream(&[seed, u64::MAX, 1]), budget)?;
        let pruned = tree.prune_unreached();
        Ok(TreeArtifact { tree, pruned, replay: transitions.into_iter().map(|t| t.state).collect(), replay_return })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    Binary(Vec<u8>),
    Permutation(Vec<usize>),
    Tree(Box<TreeArtifact>),
}

/// One algorithm run.
///
/// `trace[i]` is the best fitness known after `i + 1` episodes (maximization
/// convention; minimization objectives are stored negated by the caller's
/// fitness function). `trace.len() == episodes`.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: String,
    pub seed: u64,
    pub trace: Vec<f64>,
    pub best_fitness: f64,
    pub solution: Solution,
    pub episodes: u64,
    /// Hyperparameters the run used, as TOML.
    pub settings: String,
    pub wall_time: Duration,
}

impl RunRecord {
    /// Equality of everything except wall time.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.algorithm == other.algorithm
            && self.seed == other.seed
            && self.trace.len() == other.trace.len()
            && self.trace.iter().zip(&other.trace).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.best_fitness.to_bits() == other.best_fitness.to_bits()
            && self.solution == other.solution
            && self.episodes == other.episodes
            && self.settings == other.settings
    }

    pub fn trace_is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Records the best-so-far value once per consumed episode.
#[derive(Debug, Clone, Default)]
pub(crate) struct Tracker {
    pub best: Option<f64>,
    pub trace: Vec<f64>,
}

impl Tracker {
    /// Registers an evaluation worth `episodes` entries; returns true when it
    /// improved the best value.
    pub fn record(&mut self, fitness: f64, episodes: u64) -> bool {
        let improved = self.best.is_none_or(|b| fitness > b);
        if improved {
            self.best = Some(fitness);
        }
        let b = self.best.expect("set above");
        self.trace.extend(std::iter::repeat_n(b, episodes as usize));
        improved
    }
}
