use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{tournament, BaselineError, Evaluator, SearchSpace};
use crate::record::{RunRecord, Solution};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population_size: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; `1 / n` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutation_prob: Option<f64>,
    pub tournament_size: usize,
    /// Best individuals copied unchanged into the next generation.
    pub elites: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams { population_size: 50, crossover_prob: 0.9, mutation_prob: None, tournament_size: 4, elites: 5 }
    }
}

impl GaParams {
    fn validate(&self) -> Result<(), BaselineError> {
        let probs = [Some(self.crossover_prob), self.mutation_prob];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(BaselineError::Config("probabilities must lie in [0, 1]".into()));
        }
        if self.population_size == 0 || self.tournament_size == 0 || self.elites >= self.population_size {
            return Err(BaselineError::Config("need population >= 1, tournament >= 1 and elites < population".into()));
        }
        Ok(())
    }
}

/// Children `a[..cut] ++ b[cut..]` and `b[..cut] ++ a[cut..]`.
pub fn one_point(a: &[u8], b: &[u8], cut: usize) -> (Vec<u8>, Vec<u8>) {
    let c1 = a[..cut].iter().chain(&b[cut..]).copied().collect();
    let c2 = b[..cut].iter().chain(&a[cut..]).copied().collect();
    (c1, c2)
}

/// Order crossover: the child keeps `a[lo..=hi]` in place and fills the
/// other positions, starting after `hi` and wrapping, with the missing
/// elements in the order they appear in `b` from `hi + 1`.
pub fn order_crossover(a: &[usize], b: &[usize], lo: usize, hi: usize) -> Vec<usize> {
    let n = a.len();
    let mut child = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for i in lo..=hi {
        child[i] = a[i];
        used[a[i]] = true;
    }
    let mut pos = (hi + 1) % n;
    for k in 0..n {
        let gene = b[(hi + 1 + k) % n];
        if !used[gene] {
            child[pos] = gene;
            used[gene] = true;
            pos = (pos + 1) % n;
        }
    }
    child
}

pub fn bit_flip(bits: &mut [u8], p: f64, rng: &mut SimRng) {
    for b in bits {
        if rng.gen::<f64>() < p {
            *b ^= 1;
        }
    }
}

/// Each position swaps with a uniform partner with probability `p`.
pub fn swap_mutation(perm: &mut [usize], p: f64, rng: &mut SimRng) {
    let n = perm.len();
    for i in 0..n {
        if rng.gen::<f64>() < p {
            perm.swap(i, rng.gen_range(0..n));
        }
    }
}

fn recombine(a: &Solution, b: &Solution, rng: &mut SimRng) -> (Solution, Solution) {
    match (a, b) {
        (Solution::Binary(x), Solution::Binary(y)) => {
            let cut = if x.len() > 1 { rng.gen_range(1..x.len()) } else { 0 };
            let (c1, c2) = one_point(x, y, cut);
            (Solution::Binary(c1), Solution::Binary(c2))
        }
        (Solution::Permutation(x), Solution::Permutation(y)) => {
            let n = x.len();
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let (lo, hi) = (i.min(j), i.max(j));
            (Solution::Permutation(order_crossover(x, y, lo, hi)), Solution::Permutation(order_crossover(y, x, lo, hi)))
        }
        _ => unreachable!("parents share the space"),
    }
}

fn mutate(c: &mut Solution, p: f64, rng: &mut SimRng) {
    match c {
        Solution::Binary(b) => bit_flip(b, p, rng),
        Solution::Permutation(q) => swap_mutation(q, p, rng),
        Solution::Tree(_) => unreachable!("vector spaces only"),
    }
}

/// Elitist generational GA with tournament selection. Binary spaces use
/// one-point crossover and bit flips; permutation spaces use order
/// crossover and swaps.
pub fn ga_run(space: &SearchSpace, budget: u64, params: &GaParams, seed: u64) -> Result<RunRecord, BaselineError> {
    Ok(evolve(space, budget, params, seed)?.0)
}

pub(super) fn evolve(space: &SearchSpace, budget: u64, params: &GaParams, seed: u64) -> Result<(RunRecord, Vec<Solution>), BaselineError> {
    params.validate()?;
    let size = params.population_size;
    if budget < size as u64 {
        return Err(BaselineError::BudgetTooSmall { budget, needed: size as u64 });
    }
    let m = params.mutation_prob.unwrap_or(1.0 / space.kind().len() as f64);
    let mut rng = rng::stream(&[seed, 0x6761]);
    let mut ev = Evaluator::new(space, budget, seed);

    let mut pop: Vec<Solution> = (0..size).map(|_| space.random_candidate(&mut rng)).collect();
    let mut fit: Vec<f64> = pop.iter().map(|c| ev.eval(c).expect("budget covers the first generation")).collect();

    'generations: while !ev.exhausted() {
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]));
        let mut next: Vec<Solution> = order[..params.elites].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..params.elites].iter().map(|&i| fit[i]).collect();
        while next.len() < size {
            let a = &pop[tournament(&fit, params.tournament_size, &mut rng)];
            let b = &pop[tournament(&fit, params.tournament_size, &mut rng)];
            let (c1, c2) = if rng.gen::<f64>() < params.crossover_prob { recombine(a, b, &mut rng) } else { (a.clone(), b.clone()) };
            for mut c in [c1, c2] {
                if next.len() == size {
                    break;
                }
                mutate(&mut c, m, &mut rng);
                let Some(f) = ev.eval(&c) else { break 'generations };
                next.push(c);
                next_fit.push(f);
            }
        }
        pop = next;
        fit = next_fit;
    }
    let settings = toml::to_string(&GaParams { mutation_prob: Some(m), ..params.clone() }).expect("params serialize");
    Ok((ev.finish("ga", format!("budget = {budget}\n{settings}")), pop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{random_search, SpaceKind};
    use crate::hfs::is_permutation;
    use proptest::prelude::*;

    fn onemax(n: usize) -> SearchSpace<'static> {
        SearchSpace::new(SpaceKind::Binary(n), |c, _| match c {
            Solution::Binary(b) => b.iter().map(|&x| x as f64).sum(),
            _ => unreachable!(),
        })
        .unwrap()
    }

    #[test]
    fn ox_example() {
        let c = order_crossover(&[0, 1, 2, 3], &[3, 2, 1, 0], 1, 2);
        assert!(is_permutation(&c, 4));
        assert_eq!(&c[1..=2], &[1, 2]);
        assert_eq!(c, vec![3, 1, 2, 0]);
    }

    #[test]
    fn one_point_example() {
        assert_eq!(one_point(&[0, 0, 0], &[1, 1, 1], 1), (vec![0, 1, 1], vec![1, 0, 0]));
    }

    #[test]
    fn no_variation_keeps_initial_genotypes() {
        let space = onemax(12);
        let params = GaParams { crossover_prob: 0.0, mutation_prob: Some(0.0), population_size: 10, ..Default::default() };
        let mut rng = rng::stream(&[5, 0x6761]);
        let initial: Vec<Solution> = (0..10).map(|_| space.random_candidate(&mut rng)).collect();
        let (rec, last) = evolve(&space, 200, &params, 5).unwrap();
        assert!(last.iter().all(|c| initial.contains(c)));
        assert_eq!(rec.trace.len(), 200);
    }

    #[test]
    fn beats_random_search_on_onemax() {
        let space = onemax(20);
        let mut ga_total = 0.0;
        let mut rs_total = 0.0;
        for seed in 0..10 {
            ga_total += ga_run(&space, 1000, &GaParams::default(), seed).unwrap().best_fitness;
            rs_total += random_search(&space, 1000, seed).unwrap().best_fitness;
        }
        assert!(ga_total >= rs_total, "ga {ga_total} rs {rs_total}");
    }

    #[test]
    fn exact_budget_on_uneven_generations() {
        let space = onemax(8);
        let rec = ga_run(&space, 137, &GaParams::default(), 2).unwrap();
        assert_eq!((rec.episodes, rec.trace.len()), (137, 137));
        assert!(rec.trace_is_monotone());
        assert!(ga_run(&space, 49, &GaParams::default(), 2).is_err());
    }

    proptest! {
        #[test]
        fn permutation_operators_stay_bijective(n in 1usize..30, seed in any::<u64>()) {
            let mut r = rng::from_seed(seed);
            let space = SearchSpace::new(SpaceKind::Permutation(n), |_, _| 0.0).unwrap();
            let (a, b) = (space.random_candidate(&mut r), space.random_candidate(&mut r));
            let (c1, c2) = recombine(&a, &b, &mut r);
            for mut c in [c1, c2] {
                mutate(&mut c, 0.3, &mut r);
                let Solution::Permutation(p) = c else { unreachable!() };
                prop_assert!(is_permutation(&p, n));
            }
        }
    }
}
