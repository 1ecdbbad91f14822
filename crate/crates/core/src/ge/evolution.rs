use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, BudgetCounter, EnvFactory, EnvSpec};
use crate::record::{RunRecord, Solution, Tracker, TreeArtifact};
use crate::rng;
use crate::tree::{DecisionTree, LearningConfig, TreeError};

use super::{crossover_one_point, mutate, GeError, Genotype, Grammar, IncompleteDerivation};

/// Hyperparameters of the evolutionary loop. Every field has a default, so a
/// config file only needs the keys it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    /// Per-codon probability of uniform mutation.
    pub mutation_prob: f64,
    /// Probability that a selected pair is recombined.
    pub crossover_prob: f64,
    pub tournament_size: usize,
    pub genotype_length: usize,
    pub g_max: u32,
    /// Fitness of genotypes whose derivation does not complete.
    pub penalty_fitness: f64,
    /// Episodes per fitness evaluation; the environment decides when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes_per_eval: Option<usize>,
    /// Total episode budget of the run.
    pub budget: u64,
    /// Split points per numeric feature in the generated grammar.
    pub thresholds: usize,
    pub learning: LearningConfig,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 30,
            mutation_prob: 0.05,
            crossover_prob: 0.5,
            tournament_size: 2,
            genotype_length: 100,
            g_max: 40_000,
            penalty_fitness: -1e9,
            episodes_per_eval: None,
            budget: 5000,
            thresholds: 9,
            learning: LearningConfig::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn from_toml(text: &str) -> Result<Self, GeError> {
        toml::from_str(text).map_err(|e| GeError::Config(e.to_string()))
    }

    pub fn episodes_for(&self, spec: &EnvSpec) -> usize {
        self.episodes_per_eval.unwrap_or_else(|| spec.default_episodes())
    }

    pub fn validate(&self, spec: &EnvSpec) -> Result<(), GeError> {
        let bad = |m: String| Err(GeError::Config(m));
        for (name, p) in [("mutation_prob", self.mutation_prob), ("crossover_prob", self.crossover_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        for (name, n) in [
            ("population_size", self.population_size),
            ("tournament_size", self.tournament_size),
            ("genotype_length", self.genotype_length),
            ("thresholds", self.thresholds),
        ] {
            if n == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.genotype_length < 2 {
            return bad("genotype_length must be at least 2 for one-point crossover".into());
        }
        if self.episodes_per_eval == Some(0) {
            return bad("episodes_per_eval must be at least 1".into());
        }
        if !self.penalty_fitness.is_finite() {
            return bad("penalty_fitness must be finite".into());
        }
        let e = self.episodes_for(spec) as u64;
        if self.budget < 2 || self.budget < self.population_size as u64 * e {
            return bad(format!("budget {} is below one population evaluation ({} x {e} episodes)", self.budget, self.population_size));
        }
        self.learning.validate().map_err(GeError::Config)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Incomplete(#[from] IncompleteDerivation),
    #[error("derived text is not a valid tree: {0}")]
    InvalidTree(#[from] TreeError),
}

/// Genotype to decision tree. Leaves start with zero Q-values.
pub fn decode(genotype: &Genotype, grammar: &Grammar, spec: &EnvSpec) -> Result<DecisionTree, DecodeError> {
    let derivation = grammar.derive(genotype)?;
    let tree = DecisionTree::parse(&derivation.text(), spec.action_count(), Some(spec))?;
    tree.check_schema(spec)?;
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phenotype {
    Tree(DecisionTree),
    Invalid(DecodeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genotype: Genotype,
    pub phenotype: Phenotype,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(genotype: Genotype, grammar: &Grammar, spec: &EnvSpec) -> Self {
        let phenotype = match decode(&genotype, grammar, spec) {
            Ok(t) => Phenotype::Tree(t),
            Err(e) => Phenotype::Invalid(e),
        };
        Individual { genotype, phenotype, fitness: None }
    }

    /// Individual with a known fitness, phenotype not decoded.
    pub fn scored(genotype: Genotype, fitness: f64) -> Self {
        Individual {
            genotype,
            phenotype: Phenotype::Invalid(DecodeError::Incomplete(IncompleteDerivation { consumed: 0 })),
            fitness: Some(fitness),
        }
    }

    fn score(&self) -> f64 {
        self.fitness.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Index of the best among `candidates`, lowest population index on ties.
pub fn tournament_winner(population: &[Individual], candidates: &[usize]) -> usize {
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        let (fc, fb) = (population[c].score(), population[best].score());
        if fc > fb || (fc == fb && c < best) {
            best = c;
        }
    }
    best
}

/// Tournament selection with replacement; returns a population index.
pub fn select_parent(population: &[Individual], tournament_size: usize, rng: &mut rng::SimRng) -> usize {
    assert!(!population.is_empty(), "selection from an empty population");
    let picks: Vec<usize> = (0..tournament_size.max(1)).map(|_| rng.gen_range(0..population.len())).collect();
    tournament_winner(population, &picks)
}

/// Keeps the best `population.len()` of parents followed by offspring.
/// Sorting is stable, so on equal fitness incumbents and lower indices win.
pub fn replace_steady_state(population: Vec<Individual>, offspring: Vec<Individual>) -> Vec<Individual> {
    let size = population.len();
    let mut merged = population;
    merged.extend(offspring);
    merged.sort_by(|a, b| b.score().total_cmp(&a.score()));
    merged.truncate(size);
    merged
}

struct Run<'a> {
    config: &'a EvolutionConfig,
    factory: &'a dyn EnvFactory,
    episodes: u64,
    evo_limit: u64,
    seed: u64,
    budget: BudgetCounter,
    tracker: Tracker,
    best: Option<(f64, DecisionTree)>,
}

impl Run<'_> {
    /// Evaluates in order until the evolutionary budget runs out. Returns
    /// the number of episodes charged; individuals past the budget stay
    /// unevaluated.
    fn evaluate(&mut self, batch: &mut [Individual], generation: u64) -> Result<u64, GeError> {
        let mut charged = 0;
        for (i, ind) in batch.iter_mut().enumerate() {
            let tree = match &ind.phenotype {
                Phenotype::Invalid(_) => {
                    ind.fitness = Some(self.config.penalty_fitness);
                    continue;
                }
                Phenotype::Tree(t) => t,
            };
            let k = self.episodes.min(self.evo_limit - self.budget.consumed());
            if k == 0 {
                break;
            }
            let mut tree = tree.clone();
            let learning = &self.config.learning;
            let mut init = rng::stream(&[self.seed, generation, i as u64, 0]);
            tree.randomize_leaves(&mut init, learning.q_init_low, learning.q_init_high);
            let eval_seed = rng::derive_seed(&[self.seed, generation, i as u64, 1]);
            let f = env::evaluate_fitness(&mut tree, self.factory, k as usize, learning, eval_seed, &self.budget)?;
            charged += k;
            ind.fitness = Some(f);
            if self.tracker.record(f, k) {
                self.best = Some((f, tree.clone()));
            }
            ind.phenotype = Phenotype::Tree(tree);
        }
        Ok(charged)
    }
}

fn breed(
    population: &[Individual],
    config: &EvolutionConfig,
    grammar: &Grammar,
    spec: &EnvSpec,
    rng: &mut rng::SimRng,
) -> Result<Vec<Individual>, GeError> {
    let mut offspring = Vec::with_capacity(config.population_size);
    while offspring.len() < config.population_size {
        let a = &population[select_parent(population, config.tournament_size, rng)].genotype;
        let b = &population[select_parent(population, config.tournament_size, rng)].genotype;
        let (c1, c2) = if rng.gen::<f64>() < config.crossover_prob { crossover_one_point(a, b, rng)? } else { (a.clone(), b.clone()) };
        for child in [c1, c2] {
            if offspring.len() < config.population_size {
                offspring.push(Individual::new(mutate(&child, config.mutation_prob, rng), grammar, spec));
            }
        }
    }
    Ok(offspring)
}

/// Consecutive generations without a decodable offspring before giving up.
const MAX_IDLE_GENERATIONS: usize = 1000;

/// Evolves tree structures with grammatical evolution while leaves learn by
/// Q-learning during fitness evaluation.
///
/// Every episode counts against `config.budget`. The last episode is a
/// greedy replay of the best tree (no learning, no exploration) whose visit
/// counts drive pruning. The returned trace therefore has exactly `budget`
/// entries. When the budget runs out mid-generation the remaining offspring
/// are discarded; an evaluation cut short averages the episodes it ran.
pub fn run_eldt(config: &EvolutionConfig, grammar: &Grammar, factory: &dyn EnvFactory, seed: u64) -> Result<RunRecord, GeError> {
    let started = Instant::now();
    let spec = factory.spec().clone();
    config.validate(&spec)?;
    let episodes = config.episodes_for(&spec) as u64;
    let mut run = Run {
        config,
        factory,
        episodes,
        evo_limit: config.budget - 1,
        seed,
        budget: BudgetCounter::new(config.budget),
        tracker: Tracker::default(),
        best: None,
    };

    let mut generation = 0u64;
    let mut rng = rng::stream(&[seed, generation, u64::MAX]);
    let mut population: Vec<Individual> = (0..config.population_size)
        .map(|_| Individual::new(Genotype::random(config.genotype_length, config.g_max, &mut rng), grammar, &spec))
        .collect();
    run.evaluate(&mut population, generation)?;
    population.retain(|i| i.fitness.is_some());

    let mut idle = 0;
    while run.budget.consumed() < run.evo_limit {
        generation += 1;
        let mut rng = rng::stream(&[seed, generation, u64::MAX]);
        let mut offspring = breed(&population, config, grammar, &spec, &mut rng)?;
        let charged = run.evaluate(&mut offspring, generation)?;
        offspring.retain(|i| i.fitness.is_some());
        population = replace_steady_state(population, offspring);
        idle = if charged == 0 { idle + 1 } else { 0 };
        if idle >= MAX_IDLE_GENERATIONS {
            return Err(GeError::NoValidIndividuals(generation as usize));
        }
    }

    let (best_fitness, tree) = run.best.take().ok_or(GeError::NoValidIndividuals(generation as usize))?;
    let artifact = TreeArtifact::replay(tree, factory, seed, &run.budget)?;
    run.tracker.trace.push(best_fitness);

    let mut resolved = config.clone();
    resolved.episodes_per_eval = Some(episodes as usize);
    Ok(RunRecord {
        algorithm: "eldt".into(),
        seed,
        trace: run.tracker.trace,
        best_fitness,
        solution: Solution::Tree(Box::new(artifact)),
        episodes: run.budget.consumed(),
        settings: toml::to_string(&resolved).expect("config serializes"),
        wall_time: started.elapsed(),
    })
}
