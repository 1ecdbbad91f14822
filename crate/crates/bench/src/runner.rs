use std::fs;

use eldt_core::baselines::{aco_run, ga_run, gp_evolve, greedy_edd, hfs_space, makeorbuy_space, random_search, SearchSpace};
use eldt_core::datagen;
use eldt_core::env::EnvFactory;
use eldt_core::ge::{run_eldt, Grammar};
use eldt_core::hfs::{self, HfsFactory, HfsInstance, DEFAULT_ASSEMBLY_AREAS, DEFAULT_CAPACITY, DEFAULT_TRANSPORT_DAYS};
use eldt_core::makeorbuy::{self, MakeOrBuyFactory, MakeOrBuyParams};
use eldt_core::record::{Direction, RunRecord, Solution};
use eldt_core::tree::DecisionTree;
use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig, Problem};
use crate::BenchError;

/// Dataset and environment of one campaign, shared by all runs.
pub struct Loaded {
    pub problem: Problem,
    pub factory: Box<dyn EnvFactory>,
    pub space: SearchSpace<'static>,
    pub grammar: Grammar,
    pub instance: Option<HfsInstance>,
}

fn read_text(path: &std::path::Path) -> Result<String, BenchError> {
    fs::read_to_string(path).map_err(|e| BenchError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn load(config: &ExperimentConfig) -> Result<Loaded, BenchError> {
    let (factory, space, instance): (Box<dyn EnvFactory>, _, _) = match config.problem {
        Problem::Makeorbuy => {
            let orders = datagen::load_orders(&config.dataset)?;
            let params = match &config.params {
                Some(p) => MakeOrBuyParams::from_toml(&read_text(p)?)?,
                None => MakeOrBuyParams::default(),
            };
            let space = makeorbuy_space(orders.clone(), params.clone())?;
            (Box::new(MakeOrBuyFactory::new(orders, params)?), space, None)
        }
        Problem::Hfs => {
            let types = match &config.machine_types {
                Some(p) => datagen::load_phase_spec(p)?,
                None => hfs::default_machine_types(),
            };
            let jobs = datagen::load_jobs(&config.dataset, &types)?;
            let transport = config.transport_days.unwrap_or(DEFAULT_TRANSPORT_DAYS);
            let instance = HfsInstance::new(jobs, [DEFAULT_CAPACITY; 3], DEFAULT_ASSEMBLY_AREAS, transport, types)?;
            let space = hfs_space(instance.clone())?;
            (Box::new(HfsFactory::new(instance.clone())?), space, Some(instance))
        }
    };
    let grammar = match &config.grammar {
        Some(p) => Grammar::parse(&read_text(p)?)?,
        None => Grammar::for_spec(factory.spec(), config.eldt.thresholds),
    };
    Ok(Loaded { problem: config.problem, factory, space, grammar, instance })
}

pub fn run_one(config: &ExperimentConfig, loaded: &Loaded, seed: u64) -> Result<RunRecord, BenchError> {
    let budget = config.budget;
    Ok(match config.algorithm {
        Algorithm::Eldt => {
            let eldt = eldt_core::ge::EvolutionConfig { budget, ..config.eldt.clone() };
            run_eldt(&eldt, &loaded.grammar, loaded.factory.as_ref(), seed)?
        }
        Algorithm::Gp => gp_evolve(loaded.factory.as_ref(), budget, &config.gp, seed)?,
        Algorithm::Rs => random_search(&loaded.space, budget, seed)?,
        Algorithm::Ga => ga_run(&loaded.space, budget, &config.ga, seed)?,
        Algorithm::Aco => aco_run(&loaded.space, budget, &config.aco, seed)?,
        Algorithm::Greedy => {
            let inst = loaded.instance.as_ref().ok_or_else(|| BenchError::Config("greedy needs a flow shop instance".into()))?;
            RunRecord { seed, ..greedy_edd(inst) }
        }
    })
}

pub fn direction(problem: Problem) -> Direction {
    match problem {
        Problem::Makeorbuy => Direction::Maximize,
        Problem::Hfs => Direction::Minimize,
    }
}

/// Fitness in natural units: revenue for make-or-buy, makespan in days for
/// the flow shop. Tree policies report scaled episode returns.
pub fn objective(problem: Problem, algorithm: Algorithm, fitness: f64) -> f64 {
    match (problem, algorithm.produces_tree()) {
        (Problem::Makeorbuy, true) => fitness * makeorbuy::REWARD_SCALE,
        (Problem::Makeorbuy, false) => fitness,
        (Problem::Hfs, true) => -fitness * hfs::MAKESPAN_SCALE,
        (Problem::Hfs, false) => -fitness,
    }
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    /// The tree policies' environment, for exporting trees and schedules.
    pub loaded: Loaded,
}

impl Experiment {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| objective(self.config.problem, self.config.algorithm, r.best_fitness)).collect()
    }

    /// Index of the run with the best objective; the lowest index on ties.
    pub fn best_run(&self) -> usize {
        let dir = direction(self.config.problem);
        let obj = self.objectives();
        (0..obj.len()).fold(0, |b, i| if dir.better(obj[i], obj[b]) { i } else { b })
    }

    /// Job order of a run's solution (flow shop only).
    pub fn permutation(&self, run: usize) -> Option<Vec<usize>> {
        let inst = self.loaded.instance.as_ref()?;
        match &self.records[run].solution {
            Solution::Permutation(p) => Some(p.clone()),
            Solution::Tree(art) => Some(hfs::priorities_to_permutation(&tree_priorities(&art.pruned, &self.loaded)?, inst.jobs())),
            Solution::Binary(_) => None,
        }
    }
}

fn tree_priorities(tree: &DecisionTree, loaded: &Loaded) -> Option<Vec<usize>> {
    let mut env = loaded.factory.make(0);
    let mut obs = env.reset();
    let mut out = Vec::new();
    loop {
        let a = tree.greedy_action(&obs).ok()?;
        out.push(a);
        let step = env.step(a);
        if step.done {
            return Some(out);
        }
        obs = step.observation;
    }
}

/// Runs every seed, in parallel on `threads` workers (rayon's default when
/// `None`). Records come back in seed order whatever the thread count.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<Experiment, BenchError> {
    config.validate()?;
    let loaded = load(config)?;
    let seeds = config.seeds();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| BenchError::Config(e.to_string()))?;
    let records: Result<Vec<RunRecord>, BenchError> = pool.install(|| seeds.par_iter().map(|&s| run_one(config, &loaded, s)).collect());
    Ok(Experiment { config: config.clone(), records: records?, loaded })
}
