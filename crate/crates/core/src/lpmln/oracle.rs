//! Reference semantics by exhaustive enumeration of interpretations.
//!
//! Shares nothing with the solver beyond the ground program: facts hold in every
//! interpretation, every subset of the remaining atom universe is checked for stability by
//! naive forward chaining from the facts, and probabilities are plain ratios of exponentials.

use super::ground::{AtomId, GroundProgram};
use super::solve::{QueryResult, ReasonError};
use crate::rules::Atom;

/// Largest atom universe the oracle will enumerate.
pub const ORACLE_LIMIT: usize = 16;

/// Which atoms are allowed to vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleScope {
    /// Facts and atoms mentioned by some ground instance.
    Relevant,
    /// The whole Herbrand base of the program.
    FullBase,
}

struct Clause {
    body: Vec<AtomId>,
    head: Option<AtomId>,
    weight: Option<f64>,
}

/// Probability distribution over the stable models of `program`, as (model, probability).
pub fn brute_force_distribution(
    program: &GroundProgram,
    scope: OracleScope,
) -> Result<Vec<(Vec<Atom>, f64)>, ReasonError> {
    let universe: Vec<AtomId> = match scope {
        OracleScope::Relevant => program.relevant_atoms(),
        OracleScope::FullBase => (0..program.base_len()).collect(),
    };
    if universe.len() > ORACLE_LIMIT {
        return Err(ReasonError::OracleTooLarge {
            atoms: universe.len(),
            limit: ORACLE_LIMIT,
        });
    }
    let universe: Vec<AtomId> = universe
        .into_iter()
        .filter(|&a| !program.is_fact(a))
        .collect();
    let mut clauses: Vec<Clause> = Vec::new();
    for inst in &program.hard {
        clauses.push(Clause {
            body: inst.body.clone(),
            head: inst.head,
            weight: None,
        });
    }
    for (inst, w) in &program.soft {
        clauses.push(Clause {
            body: inst.body.clone(),
            head: inst.head,
            weight: Some(*w),
        });
    }

    let size = program.base_len();
    let mut models: Vec<(Vec<bool>, usize, f64)> = Vec::new();
    for mask in 0u32..(1u32 << universe.len()) {
        let mut interp = vec![false; size];
        for &f in program.fact_ids() {
            interp[f] = true;
        }
        for (bit, &a) in universe.iter().enumerate() {
            interp[a] = mask >> bit & 1 == 1;
        }
        let holds = |c: &Clause, i: &[bool]| -> bool {
            !c.body.iter().all(|&b| i[b]) || c.head.is_some_and(|h| i[h])
        };
        let satisfied: Vec<&Clause> = clauses.iter().filter(|c| holds(c, &interp)).collect();
        let mut lm = vec![false; size];
        for &f in program.fact_ids() {
            lm[f] = true;
        }
        loop {
            let mut changed = false;
            for c in &satisfied {
                if let Some(h) = c.head {
                    if !lm[h] && c.body.iter().all(|&b| lm[b]) {
                        lm[h] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if lm != interp {
            continue;
        }
        let hard = satisfied.iter().filter(|c| c.weight.is_none()).count();
        let soft: f64 = satisfied.iter().filter_map(|c| c.weight).sum();
        models.push((interp, hard, soft));
    }
    let best = models.iter().map(|m| m.1).max().unwrap_or(0);
    let kept: Vec<_> = models.into_iter().filter(|m| m.1 == best).collect();
    let z: f64 = kept.iter().map(|m| m.2.exp()).sum();
    Ok(kept
        .into_iter()
        .map(|(interp, _, soft)| {
            let atoms = (0..size)
                .filter(|&i| interp[i])
                .map(|i| program.atom(i).clone())
                .collect();
            (atoms, soft.exp() / z)
        })
        .collect())
}

/// Marginal probability of `atom` by exhaustive enumeration over the relevant atoms.
pub fn brute_force_query(program: &GroundProgram, atom: &Atom) -> Result<QueryResult, ReasonError> {
    brute_force_query_in(program, atom, OracleScope::Relevant)
}

pub fn brute_force_query_in(
    program: &GroundProgram,
    atom: &Atom,
    scope: OracleScope,
) -> Result<QueryResult, ReasonError> {
    let dist = brute_force_distribution(program, scope)?;
    let probability = dist
        .iter()
        .filter(|(m, _)| m.contains(atom))
        .map(|(_, p)| p)
        .sum();
    Ok(QueryResult {
        atom: atom.clone(),
        probability,
    })
}
