//! Episodic environment contract, tree-policy episode runner and fitness
//! evaluation under a shared episode budget.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use thiserror::Error;

use crate::rng::{self, SimRng};
use crate::tree::{self, DecisionTree, LearningConfig, TreeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode budget exhausted ({consumed}/{limit})")]
    BudgetExhausted { consumed: u64, limit: u64 },
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("observation has {got} features, schema expects {expected}")]
    ObservationLength { expected: usize, got: usize },
    #[error("feature {feature} value {value} is not a valid category id")]
    BadCategory { feature: usize, value: f64 },
    #[error("feature {feature} value {value} is not finite")]
    NonFinite { feature: usize, value: f64 },
    #[error("action {action} out of range (action count {count})")]
    BadAction { action: usize, count: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Numeric { low: f64, high: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn numeric(name: impl Into<String>, low: f64, high: f64) -> Self {
        Feature { name: name.into(), kind: FeatureKind::Numeric { low, high } }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        Feature { name: name.into(), kind: FeatureKind::Categorical { categories } }
    }
}

/// Observation schema, action space and episode length of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    features: Vec<Feature>,
    action_names: Vec<String>,
    horizon: usize,
    stochastic: bool,
}

impl EnvSpec {
    pub fn new(features: Vec<Feature>, action_names: Vec<String>, horizon: usize, stochastic: bool) -> Result<Self, EnvError> {
        if features.is_empty() {
            return Err(EnvError::InvalidSpec("observation schema is empty".into()));
        }
        if action_names.len() < 2 {
            return Err(EnvError::InvalidSpec("at least two actions are required".into()));
        }
        if horizon == 0 {
            return Err(EnvError::InvalidSpec("episode length must be at least 1".into()));
        }
        for f in &features {
            match &f.kind {
                FeatureKind::Numeric { low, high } => {
                    if !(low.is_finite() && high.is_finite() && low <= high) {
                        return Err(EnvError::InvalidSpec(format!("feature {} has range [{low}, {high}]", f.name)));
                    }
                }
                FeatureKind::Categorical { categories } => {
                    if categories.is_empty() {
                        return Err(EnvError::InvalidSpec(format!("feature {} has no categories", f.name)));
                    }
                }
            }
        }
        Ok(EnvSpec { features, action_names, horizon, stochastic })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn action_count(&self) -> usize {
        self.action_names.len()
    }

    /// Maximum number of steps per episode.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    /// Episodes per fitness evaluation used when none is configured.
    pub fn default_episodes(&self) -> usize {
        if self.stochastic {
            3
        } else {
            1
        }
    }

    pub fn validate(&self, obs: &[f64]) -> Result<(), EnvError> {
        if obs.len() != self.features.len() {
            return Err(EnvError::ObservationLength { expected: self.features.len(), got: obs.len() });
        }
        for (i, (f, &v)) in self.features.iter().zip(obs).enumerate() {
            if !v.is_finite() {
                return Err(EnvError::NonFinite { feature: i, value: v });
            }
            if let FeatureKind::Categorical { categories } = &f.kind {
                if v < 0.0 || v.fract() != 0.0 || v as usize >= categories.len() {
                    return Err(EnvError::BadCategory { feature: i, value: v });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// One recorded interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Step;
}

/// Creates fresh environment instances; each episode gets its own.
pub trait EnvFactory: Send + Sync {
    fn spec(&self) -> &EnvSpec;
    fn make(&self, seed: u64) -> Box<dyn Environment>;
}

/// Shared episode counter. One simulation run is one episode.
#[derive(Debug)]
pub struct BudgetCounter {
    consumed: AtomicU64,
    limit: u64,
}

impl BudgetCounter {
    pub fn new(limit: u64) -> Self {
        BudgetCounter { consumed: AtomicU64::new(0), limit }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn consumed(&self) -> u64 {
        self.consumed.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.consumed()
    }

    /// Atomically charges `n` episodes, or nothing if that would pass the limit.
    pub fn try_charge(&self, n: u64) -> Result<(), EnvError> {
        let mut cur = self.consumed.load(Ordering::SeqCst);
        loop {
            let next = cur.checked_add(n).filter(|&v| v <= self.limit);
            let Some(next) = next else {
                return Err(EnvError::BudgetExhausted { consumed: cur, limit: self.limit });
            };
            match self.consumed.compare_exchange(cur, next, Ordering::SeqCst, Ordering::SeqCst) {
                Ok(_) => return Ok(()),
                Err(actual) => cur = actual,
            }
        }
    }
}

/// Runs one episode with in-loop Q-learning on the tree's leaves and returns
/// the undiscounted sum of rewards. Charges one episode to `budget` before
/// touching the environment.
pub fn run_episode(
    env: &mut dyn Environment,
    tree: &mut DecisionTree,
    learning: &LearningConfig,
    rng: &mut SimRng,
    budget: &BudgetCounter,
) -> Result<f64, EnvError> {
    episode(env, tree, learning, rng, budget, None)
}

/// Like [`run_episode`] but also records every transition.
pub fn run_episode_traced(
    env: &mut dyn Environment,
    tree: &mut DecisionTree,
    learning: &LearningConfig,
    rng: &mut SimRng,
    budget: &BudgetCounter,
) -> Result<(f64, Vec<Transition>), EnvError> {
    let mut trace = Vec::new();
    let ret = episode(env, tree, learning, rng, budget, Some(&mut trace))?;
    Ok((ret, trace))
}

fn episode(
    env: &mut dyn Environment,
    tree: &mut DecisionTree,
    learning: &LearningConfig,
    rng: &mut SimRng,
    budget: &BudgetCounter,
    mut trace: Option<&mut Vec<Transition>>,
) -> Result<f64, EnvError> {
    let n_actions = env.spec().action_count();
    if tree.n_actions() != n_actions {
        return Err(EnvError::BadAction { action: tree.n_actions(), count: n_actions });
    }
    let horizon = env.spec().horizon();
    budget.try_charge(1)?;

    let mut obs = env.reset();
    env.spec().validate(&obs)?;
    let mut ret = Sum::default();
    // (leaf, action, reward) awaiting its bootstrap target
    let mut pending: Option<(tree::NodeId, usize, f64)> = None;

    for t in 0..horizon {
        let leaf = tree.traverse(&obs)?;
        if let Some((prev, a, r)) = pending.take() {
            let max_next = tree.leaf(leaf).max_q();
            tree::q_update(tree.leaf_mut(prev), a, r, max_next, learning.alpha, learning.gamma);
        }
        let action = tree::act_epsilon_greedy(tree.leaf(leaf), learning.epsilon, rng);
        let step = env.step(action);
        if !step.reward.is_finite() {
            return Err(EnvError::NonFinite { feature: usize::MAX, value: step.reward });
        }
        ret.add(step.reward);
        let terminal = step.done || t + 1 == horizon;
        if terminal {
            tree::q_update(tree.leaf_mut(leaf), action, step.reward, 0.0, learning.alpha, learning.gamma);
        } else {
            env.spec().validate(&step.observation)?;
            pending = Some((leaf, action, step.reward));
        }
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(Transition { state: obs.clone(), action, reward: step.reward, next_state: step.observation.clone(), terminal });
        }
        if terminal {
            break;
        }
        obs = step.observation;
    }
    Ok(ret.value())
}

/// Mean return over `episodes` fresh environments with learning enabled.
///
/// Episode `i` uses environment seed `derive(seed, i, 0)` and agent stream
/// `derive(seed, i, 1)`.
pub fn evaluate_fitness(
    tree: &mut DecisionTree,
    factory: &dyn EnvFactory,
    episodes: usize,
    learning: &LearningConfig,
    seed: u64,
    budget: &BudgetCounter,
) -> Result<f64, EnvError> {
    let returns = episode_returns(tree, factory, episodes, learning, seed, budget)?;
    Ok(mean(&returns))
}

pub fn episode_returns(
    tree: &mut DecisionTree,
    factory: &dyn EnvFactory,
    episodes: usize,
    learning: &LearningConfig,
    seed: u64,
    budget: &BudgetCounter,
) -> Result<Vec<f64>, EnvError> {
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes as u64 {
        let mut env = factory.make(rng::derive_seed(&[seed, i, 0]));
        let mut agent = rng::stream(&[seed, i, 1]);
        returns.push(run_episode(env.as_mut(), tree, learning, &mut agent, budget)?);
    }
    Ok(returns)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn mean(values: &[f64]) -> f64 {
    let mut s = Sum::default();
    values.iter().for_each(|&v| s.add(v));
    s.value() / values.len() as f64
}

/// Test fixture: each step shows `x ~ U[0,1]`; reward 1 when the action is 1
/// exactly if `x > 0.5`. Fifty steps, so the optimal return is 50.
#[derive(Debug)]
pub struct ToyThresholdEnv {
    spec: EnvSpec,
    rng: SimRng,
    x: f64,
    t: usize,
}

pub const TOY_HORIZON: usize = 50;

impl ToyThresholdEnv {
    pub fn new(seed: u64) -> Self {
        ToyThresholdEnv { spec: toy_spec(), rng: rng::from_seed(seed), x: 0.0, t: 0 }
    }
}

pub fn toy_spec() -> EnvSpec {
    EnvSpec::new(vec![Feature::numeric("x", 0.0, 1.0)], vec!["low".into(), "high".into()], TOY_HORIZON, true).expect("static spec")
}

impl Environment for ToyThresholdEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.t = 0;
        self.x = self.rng.gen::<f64>();
        vec![self.x]
    }

    fn step(&mut self, action: usize) -> Step {
        let reward = if (action == 1) == (self.x > 0.5) { 1.0 } else { 0.0 };
        self.t += 1;
        self.x = self.rng.gen::<f64>();
        Step { observation: vec![self.x], reward, done: self.t >= TOY_HORIZON }
    }
}

#[derive(Debug)]
pub struct ToyThresholdFactory {
    spec: EnvSpec,
}

impl Default for ToyThresholdFactory {
    fn default() -> Self {
        ToyThresholdFactory { spec: toy_spec() }
    }
}

impl EnvFactory for ToyThresholdFactory {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn make(&self, seed: u64) -> Box<dyn Environment> {
        Box::new(ToyThresholdEnv::new(seed))
    }
}
