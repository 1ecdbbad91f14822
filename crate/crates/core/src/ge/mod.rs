//! Grammatical evolution of decision-tree policies.

mod evolution;
mod grammar;

use rand::Rng;
use thiserror::Error;

use crate::rng::SimRng;

pub use evolution::{
    decode, replace_steady_state, run_eldt, select_parent, tournament_winner, DecodeError, EvolutionConfig, Individual, Phenotype,
};
pub use grammar::{Derivation, Grammar, GrammarError, IncompleteDerivation, Symbol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeError {
    #[error("codon {codon} at position {position} exceeds g_max {g_max}")]
    CodonOutOfRange { position: usize, codon: u32, g_max: u32 },
    #[error("genotype lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("one-point crossover needs genotypes of length >= 2, got {0}")]
    TooShort(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no decodable individual after {0} generations")]
    NoValidIndividuals(usize),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// Fixed-length codon vector, each codon in `0..=g_max`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genotype {
    codons: Vec<u32>,
    g_max: u32,
}

impl Genotype {
    pub fn new(codons: Vec<u32>, g_max: u32) -> Result<Self, GeError> {
        if let Some((position, &codon)) = codons.iter().enumerate().find(|(_, &c)| c > g_max) {
            return Err(GeError::CodonOutOfRange { position, codon, g_max });
        }
        Ok(Genotype { codons, g_max })
    }

    pub fn random(len: usize, g_max: u32, rng: &mut SimRng) -> Self {
        Genotype { codons: (0..len).map(|_| rng.gen_range(0..=g_max)).collect(), g_max }
    }

    pub fn codons(&self) -> &[u32] {
        &self.codons
    }

    pub fn g_max(&self) -> u32 {
        self.g_max
    }

    pub fn len(&self) -> usize {
        self.codons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codons.is_empty()
    }
}

/// Uniform mutation: each codon is redrawn from `0..=g_max` with probability `m_p`.
pub fn mutate(genotype: &Genotype, m_p: f64, rng: &mut SimRng) -> Genotype {
    let g_max = genotype.g_max;
    let codons = genotype.codons.iter().map(|&c| if rng.gen::<f64>() < m_p { rng.gen_range(0..=g_max) } else { c }).collect();
    Genotype { codons, g_max }
}

/// One-point crossover with the cut drawn uniformly from `1..len`.
pub fn crossover_one_point(a: &Genotype, b: &Genotype, rng: &mut SimRng) -> Result<(Genotype, Genotype), GeError> {
    if a.len() != b.len() {
        return Err(GeError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(GeError::TooShort(a.len()));
    }
    let point = rng.gen_range(1..a.len());
    crossover_at(a, b, point)
}

/// Children `a[..point] ++ b[point..]` and `b[..point] ++ a[point..]`.
pub fn crossover_at(a: &Genotype, b: &Genotype, point: usize) -> Result<(Genotype, Genotype), GeError> {
    if a.len() != b.len() {
        return Err(GeError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(GeError::TooShort(a.len()));
    }
    let point = point.clamp(1, a.len() - 1);
    let g_max = a.g_max.max(b.g_max);
    let c1 = a.codons[..point].iter().chain(&b.codons[point..]).copied().collect();
    let c2 = b.codons[..point].iter().chain(&a.codons[point..]).copied().collect();
    Ok((Genotype { codons: c1, g_max }, Genotype { codons: c2, g_max }))
}
