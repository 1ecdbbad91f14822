use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BaselineError, Evaluator, SearchSpace, SpaceKind};
use crate::record::{RunRecord, Solution};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcoParams {
    pub colony_size: usize,
    /// Evaporation rate rho.
    pub evaporation: f64,
    pub tau_init: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Largest deposit, given when the iteration best matches the best so far.
    pub deposit: f64,
}

impl Default for AcoParams {
    fn default() -> Self {
        AcoParams { colony_size: 20, evaporation: 0.1, tau_init: 1.0, tau_min: 0.01, tau_max: 10.0, deposit: 1.0 }
    }
}

impl AcoParams {
    fn validate(&self) -> Result<(), BaselineError> {
        if self.colony_size == 0 {
            return Err(BaselineError::Config("colony_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.evaporation) {
            return Err(BaselineError::Config("evaporation must lie in [0, 1]".into()));
        }
        if !(0.0 < self.tau_min && self.tau_min <= self.tau_init && self.tau_init <= self.tau_max && self.deposit > 0.0) {
            return Err(BaselineError::Config("need 0 < tau_min <= tau_init <= tau_max and deposit > 0".into()));
        }
        Ok(())
    }
}

/// Pheromone matrix: rows are positions, columns are values (binary) or
/// jobs (permutation).
#[derive(Debug, Clone, PartialEq)]
pub struct Pheromone {
    tau: Vec<Vec<f64>>,
}

impl Pheromone {
    pub fn new(rows: usize, cols: usize, init: f64) -> Self {
        Pheromone { tau: vec![vec![init; cols]; rows] }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.tau[row][col]
    }

    /// Probability of choosing `col` at `row` among `allowed`.
    pub fn prob(&self, row: usize, col: usize, allowed: &[usize]) -> f64 {
        self.tau[row][col] / allowed.iter().map(|&c| self.tau[row][c]).sum::<f64>()
    }

    pub fn evaporate(&mut self, rho: f64) {
        self.tau.iter_mut().flatten().for_each(|t| *t *= 1.0 - rho);
    }

    pub fn deposit(&mut self, row: usize, col: usize, amount: f64) {
        self.tau[row][col] += amount;
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        self.tau.iter_mut().flatten().for_each(|t| *t = t.clamp(lo, hi));
    }

    fn sample(&self, row: usize, allowed: &[usize], rng: &mut SimRng) -> usize {
        let total: f64 = allowed.iter().map(|&c| self.tau[row][c]).sum();
        let mut x = rng.gen::<f64>() * total;
        for &c in allowed {
            x -= self.tau[row][c];
            if x < 0.0 {
                return c;
            }
        }
        *allowed.last().expect("non-empty choice set")
    }
}

pub fn construct_binary(tau: &Pheromone, rng: &mut SimRng) -> Vec<u8> {
    (0..tau.tau.len()).map(|i| tau.sample(i, &[0, 1], rng) as u8).collect()
}

/// Fills positions in order, sampling among jobs not yet placed.
pub fn construct_permutation(tau: &Pheromone, rng: &mut SimRng) -> Vec<usize> {
    let n = tau.tau.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    (0..n)
        .map(|pos| {
            let job = tau.sample(pos, &remaining, rng);
            remaining.retain(|&j| j != job);
            job
        })
        .collect()
}

/// Ant colony optimization with MAX-MIN style bounds. After each colony
/// the trail evaporates and the iteration best deposits
/// `deposit / (1 + gap)`, where `gap` is its relative distance to the best
/// fitness so far.
pub fn aco_run(space: &SearchSpace, budget: u64, params: &AcoParams, seed: u64) -> Result<RunRecord, BaselineError> {
    params.validate()?;
    if budget < params.colony_size as u64 {
        return Err(BaselineError::BudgetTooSmall { budget, needed: params.colony_size as u64 });
    }
    let (rows, cols) = match space.kind() {
        SpaceKind::Binary(n) => (n, 2),
        SpaceKind::Permutation(n) => (n, n),
    };
    let mut tau = Pheromone::new(rows, cols, params.tau_init);
    let mut rng = rng::stream(&[seed, 0x6163]);
    let mut ev = Evaluator::new(space, budget, seed);
    let mut best_so_far = f64::NEG_INFINITY;

    'iterations: while !ev.exhausted() {
        let mut iteration_best: Option<(f64, Solution)> = None;
        for _ in 0..params.colony_size {
            let ant = match space.kind() {
                SpaceKind::Binary(_) => Solution::Binary(construct_binary(&tau, &mut rng)),
                SpaceKind::Permutation(_) => Solution::Permutation(construct_permutation(&tau, &mut rng)),
            };
            let Some(f) = ev.eval(&ant) else { break 'iterations };
            if iteration_best.as_ref().is_none_or(|(b, _)| f > *b) {
                iteration_best = Some((f, ant));
            }
        }
        let (f_ib, ant) = iteration_best.expect("colony is non-empty");
        best_so_far = best_so_far.max(f_ib);
        let gap = (best_so_far - f_ib) / best_so_far.abs().max(1.0);
        let amount = params.deposit / (1.0 + gap);
        tau.evaporate(params.evaporation);
        match &ant {
            Solution::Binary(b) => b.iter().enumerate().for_each(|(i, &v)| tau.deposit(i, v as usize, amount)),
            Solution::Permutation(p) => p.iter().enumerate().for_each(|(i, &j)| tau.deposit(i, j, amount)),
            Solution::Tree(_) => unreachable!("vector spaces only"),
        }
        tau.clamp(params.tau_min, params.tau_max);
    }
    let settings = toml::to_string(params).expect("params serialize");
    Ok(ev.finish("aco", format!("budget = {budget}\n{settings}")))
}
