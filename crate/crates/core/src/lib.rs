//! Evolved decision-tree policies with Q-learning leaves, two supply-chain
//! simulators (make-or-buy and hybrid flow shop), baseline optimizers and
//! dataset generators.

pub mod baselines;
pub mod datagen;
pub mod env;
pub mod ge;
pub mod hfs;
pub mod makeorbuy;
pub mod record;
pub mod rng;
pub mod tree;
