//! Comparison optimizers. Schedule-as-a-whole methods (random search, GA,
//! ACO, greedy EDD) search over binary vectors or permutations; GP evolves
//! decision trees with fixed-action leaves. All charge one budget unit per
//! simulation run and report a best-so-far trace of the same length.

mod aco;
mod ga;
mod gp;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::env::{BudgetCounter, EnvError};
use crate::hfs::{self, HfsInstance};
use crate::makeorbuy::{self, MakeOrBuyParams, Order};
use crate::record::{RunRecord, Solution, Tracker};
use crate::rng::{self, SimRng};

pub use aco::{aco_run, construct_binary, construct_permutation, AcoParams, Pheromone};
pub use ga::{bit_flip, ga_run, one_point, order_crossover, swap_mutation, GaParams};
pub use gp::{gp_evolve, random_tree, subtree_crossover, subtree_mutation, GpParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("search space must have at least one position")]
    EmptySpace,
    #[error("budget {budget} is below the {needed} evaluations one iteration needs")]
    BudgetTooSmall { budget: u64, needed: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Binary(usize),
    Permutation(usize),
}

impl SpaceKind {
    pub fn len(self) -> usize {
        match self {
            SpaceKind::Binary(n) | SpaceKind::Permutation(n) => n,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

type EvalFn<'a> = dyn Fn(&Solution, u64) -> f64 + Send + Sync + 'a;

/// Candidate kind plus a fitness function (larger is better) that receives
/// the candidate and a simulation seed.
pub struct SearchSpace<'a> {
    kind: SpaceKind,
    eval: Box<EvalFn<'a>>,
}

impl<'a> SearchSpace<'a> {
    pub fn new(kind: SpaceKind, eval: impl Fn(&Solution, u64) -> f64 + Send + Sync + 'a) -> Result<Self, BaselineError> {
        if kind.is_empty() {
            return Err(BaselineError::EmptySpace);
        }
        Ok(SearchSpace { kind, eval: Box::new(eval) })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn evaluate(&self, candidate: &Solution, seed: u64) -> f64 {
        (self.eval)(candidate, seed)
    }

    pub fn random_candidate(&self, rng: &mut SimRng) -> Solution {
        match self.kind {
            SpaceKind::Binary(n) => Solution::Binary((0..n).map(|_| rng.gen_range(0..=1)).collect()),
            SpaceKind::Permutation(n) => {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                Solution::Permutation(p)
            }
        }
    }
}

/// Outsourcing decisions; fitness is the simulated revenue.
pub fn makeorbuy_space(orders: Vec<Order>, params: MakeOrBuyParams) -> Result<SearchSpace<'static>, BaselineError> {
    let n = orders.len();
    SearchSpace::new(SpaceKind::Binary(n), move |c, seed| {
        let Solution::Binary(bits) = c else { unreachable!("binary space") };
        let decisions: Vec<bool> = bits.iter().map(|&b| b == 1).collect();
        makeorbuy::simulate(&orders, &decisions, &params, seed).revenue
    })
}

/// Job orders; fitness is minus the decoded makespan.
pub fn hfs_space(instance: HfsInstance) -> Result<SearchSpace<'static>, BaselineError> {
    let n = instance.jobs().len();
    SearchSpace::new(SpaceKind::Permutation(n), move |c, _| {
        let Solution::Permutation(p) = c else { unreachable!("permutation space") };
        -hfs::decode_list_schedule(&instance, p).expect("operators keep permutations valid").makespan()
    })
}

/// Charges the budget, tracks the best candidate and the trace.
pub(crate) struct Evaluator<'s, 'a> {
    space: &'s SearchSpace<'a>,
    seed: u64,
    budget: BudgetCounter,
    tracker: Tracker,
    best: Option<(f64, Solution)>,
    started: Instant,
}

impl<'s, 'a> Evaluator<'s, 'a> {
    pub fn new(space: &'s SearchSpace<'a>, budget: u64, seed: u64) -> Self {
        Evaluator { space, seed, budget: BudgetCounter::new(budget), tracker: Tracker::default(), best: None, started: Instant::now() }
    }

    /// Fitness of `c`, or `None` once the budget is spent.
    pub fn eval(&mut self, c: &Solution) -> Option<f64> {
        self.budget.try_charge(1).ok()?;
        let f = self.space.evaluate(c, rng::derive_seed(&[self.seed, self.budget.consumed(), 0x65]));
        if self.tracker.record(f, 1) {
            self.best = Some((f, c.clone()));
        }
        Some(f)
    }

    pub fn exhausted(&self) -> bool {
        self.budget.remaining() == 0
    }

    pub fn finish(self, algorithm: &str, settings: String) -> RunRecord {
        let (best_fitness, solution) = self.best.expect("at least one evaluation");
        RunRecord {
            algorithm: algorithm.into(),
            seed: self.seed,
            trace: self.tracker.trace,
            best_fitness,
            solution,
            episodes: self.budget.consumed(),
            settings,
            wall_time: self.started.elapsed(),
        }
    }
}

/// `budget` independent uniform candidates.
pub fn random_search(space: &SearchSpace, budget: u64, seed: u64) -> Result<RunRecord, BaselineError> {
    if budget == 0 {
        return Err(BaselineError::BudgetTooSmall { budget, needed: 1 });
    }
    let mut rng = rng::stream(&[seed, 0x7273]);
    let mut ev = Evaluator::new(space, budget, seed);
    while !ev.exhausted() {
        let c = space.random_candidate(&mut rng);
        ev.eval(&c);
    }
    Ok(ev.finish("rs", format!("budget = {budget}\n")))
}

/// Jobs sorted by due day (stable), decoded once.
pub fn greedy_edd(instance: &HfsInstance) -> RunRecord {
    let started = Instant::now();
    let perm = hfs::edd_permutation(instance.jobs());
    let f = -hfs::decode_list_schedule(instance, &perm).expect("EDD order is a permutation").makespan();
    RunRecord {
        algorithm: "greedy".into(),
        seed: 0,
        trace: vec![f],
        best_fitness: f,
        solution: Solution::Permutation(perm),
        episodes: 1,
        settings: String::new(),
        wall_time: started.elapsed(),
    }
}

/// Index of the best of `size` uniform picks, lowest index on ties.
pub(crate) fn tournament(fitness: &[f64], size: usize, rng: &mut SimRng) -> usize {
    let mut best = rng.gen_range(0..fitness.len());
    for _ in 1..size.max(1) {
        let c = rng.gen_range(0..fitness.len());
        if fitness[c] > fitness[best] || (fitness[c] == fitness[best] && c < best) {
            best = c;
        }
    }
    best
}
