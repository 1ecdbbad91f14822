use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{tournament, BaselineError};
use crate::env::{self, BudgetCounter, EnvFactory, EnvSpec, FeatureKind};
use crate::record::{RunRecord, Solution, Tracker, TreeArtifact};
use crate::rng::{self, SimRng};
use crate::tree::{Condition, DecisionTree, Leaf, LearningConfig, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpParams {
    pub population_size: usize,
    /// Maximum number of splits on any root-to-leaf path.
    pub max_depth: usize,
    /// Initial trees are ramped over depths `1..=init_max_depth`.
    pub init_max_depth: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub tournament_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes_per_eval: Option<usize>,
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams {
            population_size: 30,
            max_depth: 6,
            init_max_depth: 4,
            crossover_prob: 0.9,
            mutation_prob: 0.2,
            tournament_size: 2,
            episodes_per_eval: None,
        }
    }
}

impl GpParams {
    fn validate(&self) -> Result<(), BaselineError> {
        if !(0.0..=1.0).contains(&self.crossover_prob) || !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(BaselineError::Config("probabilities must lie in [0, 1]".into()));
        }
        if self.population_size == 0 || self.tournament_size == 0 || self.init_max_depth == 0 {
            return Err(BaselineError::Config("population, tournament and init depth must be at least 1".into()));
        }
        if self.init_max_depth > self.max_depth || self.episodes_per_eval == Some(0) {
            return Err(BaselineError::Config("need init_max_depth <= max_depth and episodes_per_eval >= 1".into()));
        }
        Ok(())
    }
}

fn random_condition(spec: &EnvSpec, rng: &mut SimRng) -> Condition {
    let feature = rng.gen_range(0..spec.features().len());
    match &spec.features()[feature].kind {
        FeatureKind::Numeric { low, high } => {
            let threshold = if low < high { rng.gen_range(*low..*high) } else { *low };
            Condition::Greater { feature, threshold }
        }
        FeatureKind::Categorical { categories } => Condition::Equals { feature, category: rng.gen_range(0..categories.len()) as u32 },
    }
}

/// Random tree of depth at most `depth`; `full` trees split down to exactly
/// `depth`, others stop early with probability 0.3 per node.
pub fn random_tree(spec: &EnvSpec, depth: usize, full: bool, rng: &mut SimRng) -> TreeNode {
    if depth == 0 || (!full && rng.gen::<f64>() < 0.3) {
        return TreeNode::Leaf(Leaf::constant(rng.gen_range(0..spec.action_count()), spec.action_count()));
    }
    let condition = random_condition(spec, rng);
    let yes = random_tree(spec, depth - 1, full, rng);
    let no = random_tree(spec, depth - 1, full, rng);
    TreeNode::split(condition, yes, no)
}

/// Preorder node `idx` and its depth.
fn locate(node: &TreeNode, idx: usize) -> (&TreeNode, usize) {
    fn go<'t>(node: &'t TreeNode, idx: &mut usize, depth: usize) -> Option<(&'t TreeNode, usize)> {
        if *idx == 0 {
            return Some((node, depth));
        }
        *idx -= 1;
        match node {
            TreeNode::Leaf(_) => None,
            TreeNode::Split { yes, no, .. } => go(yes, idx, depth + 1).or_else(|| go(no, idx, depth + 1)),
        }
    }
    go(node, &mut { idx }, 0).expect("index within tree size")
}

fn replace(node: &mut TreeNode, idx: usize, with: TreeNode) {
    fn go(node: &mut TreeNode, idx: &mut usize, with: &mut Option<TreeNode>) {
        if *idx == 0 {
            *node = with.take().expect("replaced once");
            return;
        }
        *idx -= 1;
        if let TreeNode::Split { yes, no, .. } = node {
            go(yes, idx, with);
            if with.is_some() {
                go(no, idx, with);
            }
        }
    }
    go(node, &mut { idx }, &mut Some(with));
}

/// Swaps uniformly chosen subtrees; a child deeper than `max_depth` is
/// replaced by a copy of its first parent.
pub fn subtree_crossover(a: &TreeNode, b: &TreeNode, max_depth: usize, rng: &mut SimRng) -> (TreeNode, TreeNode) {
    let ia = rng.gen_range(0..a.size());
    let ib = rng.gen_range(0..b.size());
    let (sa, _) = locate(a, ia);
    let (sb, _) = locate(b, ib);
    let mut c1 = a.clone();
    replace(&mut c1, ia, sb.clone());
    let mut c2 = b.clone();
    replace(&mut c2, ib, sa.clone());
    let c1 = if c1.depth() <= max_depth { c1 } else { a.clone() };
    let c2 = if c2.depth() <= max_depth { c2 } else { b.clone() };
    (c1, c2)
}

/// Replaces a uniformly chosen subtree by a random one that respects `max_depth`.
pub fn subtree_mutation(t: &TreeNode, spec: &EnvSpec, max_depth: usize, rng: &mut SimRng) -> TreeNode {
    let idx = rng.gen_range(0..t.size());
    let (_, depth) = locate(t, idx);
    let room = max_depth.saturating_sub(depth).min(3);
    let mut out = t.clone();
    replace(&mut out, idx, random_tree(spec, room, false, rng));
    out
}

/// Genetic programming over decision trees with constant-action leaves.
/// Fitness is the mean return with learning switched off. Like the
/// grammatical evolution loop, the last budget unit replays the best tree
/// greedily to drive pruning.
pub fn gp_evolve(factory: &dyn EnvFactory, budget: u64, params: &GpParams, seed: u64) -> Result<RunRecord, BaselineError> {
    params.validate()?;
    let started = Instant::now();
    let spec = factory.spec().clone();
    let e = params.episodes_per_eval.unwrap_or_else(|| spec.default_episodes()) as u64;
    let needed = params.population_size as u64 * e + 1;
    if budget < needed {
        return Err(BaselineError::BudgetTooSmall { budget, needed });
    }
    let counter = BudgetCounter::new(budget);
    let limit = budget - 1;
    let frozen = LearningConfig::frozen();
    let mut tracker = Tracker::default();
    let mut best: Option<(f64, DecisionTree)> = None;

    let mut evaluate = |node: &TreeNode, generation: u64, i: usize| -> Result<Option<f64>, BaselineError> {
        let k = e.min(limit - counter.consumed());
        if k == 0 {
            return Ok(None);
        }
        let mut tree = DecisionTree::from_node(node.clone()).map_err(crate::env::EnvError::from)?;
        let eval_seed = rng::derive_seed(&[seed, generation, i as u64, 1]);
        let f = env::evaluate_fitness(&mut tree, factory, k as usize, &frozen, eval_seed, &counter)?;
        if tracker.record(f, k) {
            best = Some((f, tree));
        }
        Ok(Some(f))
    };

    let mut rng = rng::stream(&[seed, 0, u64::MAX]);
    let mut pop: Vec<TreeNode> =
        (0..params.population_size).map(|i| random_tree(&spec, 1 + (i / 2) % params.init_max_depth, i % 2 == 0, &mut rng)).collect();
    let mut fit = Vec::with_capacity(pop.len());
    for (i, t) in pop.iter().enumerate() {
        fit.push(evaluate(t, 0, i)?.expect("budget covers the first generation"));
    }

    let mut generation = 0u64;
    'generations: while counter.consumed() < limit {
        generation += 1;
        let mut rng = rng::stream(&[seed, generation, u64::MAX]);
        let elite = (0..fit.len()).fold(0, |b, i| if fit[i] > fit[b] { i } else { b });
        let mut next = vec![pop[elite].clone()];
        let mut next_fit = vec![fit[elite]];
        while next.len() < params.population_size {
            let a = &pop[tournament(&fit, params.tournament_size, &mut rng)];
            let b = &pop[tournament(&fit, params.tournament_size, &mut rng)];
            let (c1, c2) = if rng.gen::<f64>() < params.crossover_prob {
                subtree_crossover(a, b, params.max_depth, &mut rng)
            } else {
                (a.clone(), b.clone())
            };
            for mut c in [c1, c2] {
                if next.len() == params.population_size {
                    break;
                }
                if rng.gen::<f64>() < params.mutation_prob {
                    c = subtree_mutation(&c, &spec, params.max_depth, &mut rng);
                }
                let Some(f) = evaluate(&c, generation, next.len())? else { break 'generations };
                next.push(c);
                next_fit.push(f);
            }
        }
        pop = next;
        fit = next_fit;
    }

    let (best_fitness, tree) = best.expect("first generation evaluated");
    let artifact = TreeArtifact::replay(tree, factory, seed, &counter)?;
    tracker.trace.push(best_fitness);
    let settings = toml::to_string(&GpParams { episodes_per_eval: Some(e as usize), ..params.clone() }).expect("params serialize");
    Ok(RunRecord {
        algorithm: "gp".into(),
        seed,
        trace: tracker.trace,
        best_fitness,
        solution: Solution::Tree(Box::new(artifact)),
        episodes: counter.consumed(),
        settings: format!("budget = {budget}\n{settings}"),
        wall_time: started.elapsed(),
    })
}
