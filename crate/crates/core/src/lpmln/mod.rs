//! Grounding and exact inference for weighted Horn programs under stable model semantics.
//!
//! A context (rules plus facts) is grounded into hard and soft instances. Each stable model
//! is weighted by `exp` of the summed weights of the soft instances it satisfies, after
//! keeping only models that satisfy the most hard instances.

mod ground;
mod oracle;
mod solve;

pub use ground::{
    ground, least_model, type_facts, AtomId, DefiniteInstance, GroundError, GroundProgram,
    Instance, Origin,
};
pub use oracle::{
    brute_force_distribution, brute_force_query, brute_force_query_in, OracleScope, ORACLE_LIMIT,
};
pub use solve::{
    Interpretation, Marginals, QueryResult, ReasonError, Reasoner, StableModel, StableModelSet,
    DEFAULT_BUDGET,
};

use crate::rules::{Atom, Registry};

/// Stable models of a ground program with the default budget.
pub fn stable_models(program: &GroundProgram) -> Result<StableModelSet, ReasonError> {
    Reasoner::default().stable_models(program)
}

/// Marginal probability of `atom` with the default budget.
pub fn query(program: &GroundProgram, atom: &Atom) -> Result<QueryResult, ReasonError> {
    Reasoner::default().query(program, atom)
}

/// Target weight of hypothesis `h` with the default budget.
pub fn hypothesis_weight(
    program: &GroundProgram,
    registry: &Registry,
    h: &Atom,
) -> Result<f64, ReasonError> {
    Reasoner::default().hypothesis_weight(program, registry, h)
}
