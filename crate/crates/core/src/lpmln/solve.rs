use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::ground::{AtomId, GroundProgram, Instance};
use crate::rules::{Atom, Registry, RuleError};

/// Default cap on candidate atoms enumerated per independent component.
pub const DEFAULT_BUDGET: usize = 24;
const MAX_BUDGET: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasonError {
    #[error("{candidates} candidate atoms exceed the enumeration budget of {budget}")]
    BudgetExceeded { candidates: usize, budget: usize },
    #[error("brute force over {atoms} atoms exceeds the limit of {limit}")]
    OracleTooLarge { atoms: usize, limit: usize },
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// A set of ground atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interpretation {
    pub atoms: BTreeSet<Atom>,
}

impl Interpretation {
    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }
}

#[derive(Clone, Debug)]
pub struct StableModel {
    pub interpretation: Interpretation,
    /// Hard instances satisfied.
    pub hard_count: usize,
    /// Sum of weights of satisfied soft instances.
    pub soft_weight_sum: f64,
    pub unnormalized_weight: f64,
    pub probability: f64,
}

/// Stable models that satisfy the maximal number of hard instances.
#[derive(Clone, Debug)]
pub struct StableModelSet {
    pub models: Vec<StableModel>,
    pub normalizer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub atom: Atom,
    pub probability: f64,
}

/// Marginal probabilities of every atom that can hold.
#[derive(Clone, Debug, Default)]
pub struct Marginals {
    probs: HashMap<Atom, f64>,
}

impl Marginals {
    /// Probability of `atom`, zero when the atom cannot be derived.
    pub fn probability(&self, atom: &Atom) -> f64 {
        self.probs.get(atom).copied().unwrap_or(0.0)
    }

    pub fn is_supported(&self, atom: &Atom) -> bool {
        self.probs.contains_key(atom)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, f64)> {
        self.probs.iter().map(|(a, &p)| (a, p))
    }

    /// Target weight of a hypothesis.
    ///
    /// If the hypothesis can be derived its probability is returned. Otherwise, if its
    /// complement can be derived, one minus the complement's probability. Otherwise the closed
    /// world applies: positive atoms get 0 and negative atoms get 1.
    pub fn hypothesis_weight(&self, registry: &Registry, h: &Atom) -> Result<f64, RuleError> {
        if let Some(&p) = self.probs.get(h) {
            return Ok(p);
        }
        let comp = registry.negate(h)?;
        if let Some(&p) = self.probs.get(&comp) {
            return Ok(1.0 - p);
        }
        Ok(if registry.is_negative(&h.predicate) {
            1.0
        } else {
            0.0
        })
    }
}

#[derive(Clone, Copy)]
enum Head {
    Bit(u64),
    Falsum,
}

struct Compiled {
    body: u64,
    head: Head,
    weight: Option<f64>,
}

/// Instances restricted to a set of candidate atoms, encoded as bitmasks.
struct Local {
    atoms: Vec<AtomId>,
    instances: Vec<Compiled>,
}

impl Local {
    /// Returns `None` when the instance holds in every interpretation.
    fn compile(
        program: &GroundProgram,
        index: &HashMap<AtomId, u32>,
        inst: &Instance,
        weight: Option<f64>,
    ) -> Option<Compiled> {
        let mut body = 0u64;
        for b in &inst.body {
            if program.is_fact(*b) {
                continue;
            }
            body |= 1 << index.get(b)?;
        }
        let head = match inst.head {
            None => Head::Falsum,
            Some(h) if program.is_fact(h) => return None,
            Some(h) => Head::Bit(1 << index[&h]),
        };
        Some(Compiled { body, head, weight })
    }

    /// Stable models as (mask, hard satisfied, soft weight sum), keeping only those with the
    /// largest hard count.
    ///
    /// An interpretation is stable exactly when each of its atoms can be derived, in some
    /// order, from facts and earlier atoms. The search grows such sets one derivable atom at a
    /// time and branches on including or excluding it, so each leaf is a distinct stable model.
    fn enumerate(&self) -> Vec<(u64, usize, f64)> {
        let mut out = Vec::new();
        let mut best: Option<usize> = None;
        let mut stack = vec![(0u64, 0u64)];
        while let Some((mask, excluded)) = stack.pop() {
            let next = self.instances.iter().find_map(|c| match c.head {
                Head::Bit(h) if (mask | excluded) & h == 0 && c.body & !mask == 0 => Some(h),
                _ => None,
            });
            if let Some(h) = next {
                stack.push((mask, excluded | h));
                stack.push((mask | h, excluded));
                continue;
            }
            let mut hard = 0;
            let mut soft = 0.0;
            for c in &self.instances {
                let sat = c.body & !mask != 0 || matches!(c.head, Head::Bit(h) if mask & h != 0);
                if sat {
                    match c.weight {
                        Some(w) => soft += w,
                        None => hard += 1,
                    }
                }
            }
            match best {
                Some(b) if hard < b => continue,
                Some(b) if hard == b => {}
                _ => {
                    best = Some(hard);
                    out.clear();
                }
            }
            out.push((mask, hard, soft));
        }
        out.sort_by_key(|r| r.0);
        out
    }
}

/// Softmax weights with max subtraction.
fn normalize(soft: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let m = soft.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = soft.map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Exact inference by stable model enumeration.
#[derive(Clone, Debug)]
pub struct Reasoner {
    budget: usize,
}

impl Default for Reasoner {
    fn default() -> Self {
        Reasoner {
            budget: DEFAULT_BUDGET,
        }
    }
}

impl Reasoner {
    pub fn new(budget: usize) -> Self {
        Reasoner {
            budget: budget.min(MAX_BUDGET),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    fn check(&self, n: usize) -> Result<(), ReasonError> {
        if n > self.budget {
            Err(ReasonError::BudgetExceeded {
                candidates: n,
                budget: self.budget,
            })
        } else {
            Ok(())
        }
    }

    /// Enumerates every stable model of the whole program (no decomposition).
    pub fn stable_models(&self, program: &GroundProgram) -> Result<StableModelSet, ReasonError> {
        let candidates = program.candidates();
        self.check(candidates.len())?;
        let index: HashMap<AtomId, u32> = candidates
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, i as u32))
            .collect();
        let mut const_hard = 0;
        let mut const_soft = 0.0;
        let mut instances = Vec::new();
        let all = program
            .hard
            .iter()
            .map(|i| (i, None))
            .chain(program.soft.iter().map(|(i, w)| (i, Some(*w))));
        for (inst, w) in all {
            match Local::compile(program, &index, inst, w) {
                Some(c) => instances.push(c),
                None => match w {
                    Some(w) => const_soft += w,
                    None => const_hard += 1,
                },
            }
        }
        let local = Local {
            atoms: candidates,
            instances,
        };
        let raw = local.enumerate();
        let probs = normalize(raw.iter().map(|r| r.2));
        let facts: BTreeSet<Atom> = program.facts().cloned().collect();
        let models: Vec<StableModel> = raw
            .iter()
            .zip(probs)
            .map(|(&(mask, hard, soft), p)| {
                let mut atoms = facts.clone();
                for (bit, &id) in local.atoms.iter().enumerate() {
                    if mask >> bit & 1 == 1 {
                        atoms.insert(program.atom(id).clone());
                    }
                }
                let soft = soft + const_soft;
                StableModel {
                    interpretation: Interpretation { atoms },
                    hard_count: hard + const_hard,
                    soft_weight_sum: soft,
                    unnormalized_weight: soft.exp(),
                    probability: p,
                }
            })
            .collect();
        let normalizer = models.iter().map(|m| m.unnormalized_weight).sum();
        Ok(StableModelSet { models, normalizer })
    }

    /// Marginals of all supported atoms, solving independent components separately.
    pub fn marginals(&self, program: &GroundProgram) -> Result<Marginals, ReasonError> {
        let candidates = program.candidates();
        let index: HashMap<AtomId, usize> = candidates
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, i))
            .collect();
        let mut parent: Vec<usize> = (0..candidates.len()).collect();
        let all: Vec<(&Instance, Option<f64>)> = program
            .hard
            .iter()
            .map(|i| (i, None))
            .chain(program.soft.iter().map(|(i, w)| (i, Some(*w))))
            .collect();
        let mut owner: Vec<Option<usize>> = vec![None; all.len()];
        for (k, (inst, _)) in all.iter().enumerate() {
            if inst
                .body
                .iter()
                .any(|b| !program.is_supported(program.atom(*b)))
            {
                continue;
            }
            if inst.head.is_some_and(|h| program.is_fact(h)) {
                continue;
            }
            let mut members = inst
                .body
                .iter()
                .chain(inst.head.iter())
                .filter_map(|a| index.get(a).copied());
            let Some(first) = members.next() else {
                continue;
            };
            let root = find(&mut parent, first);
            for m in members {
                let r = find(&mut parent, m);
                parent[r] = root;
            }
            owner[k] = Some(first);
        }
        let mut groups: HashMap<usize, (Vec<AtomId>, Vec<usize>)> = HashMap::new();
        for (i, &a) in candidates.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().0.push(a);
        }
        for (k, o) in owner.iter().enumerate() {
            if let Some(o) = o {
                let root = find(&mut parent, *o);
                groups.get_mut(&root).unwrap().1.push(k);
            }
        }

        let mut probs = HashMap::new();
        for f in program.facts() {
            probs.insert(f.clone(), 1.0);
        }
        let mut roots: Vec<usize> = groups.keys().copied().collect();
        roots.sort_unstable();
        for root in roots {
            let (atoms, insts) = &groups[&root];
            self.check(atoms.len())?;
            let local_index: HashMap<AtomId, u32> = atoms
                .iter()
                .enumerate()
                .map(|(i, &a)| (a, i as u32))
                .collect();
            let instances = insts
                .iter()
                .filter_map(|&k| Local::compile(program, &local_index, all[k].0, all[k].1))
                .collect();
            let local = Local {
                atoms: atoms.clone(),
                instances,
            };
            let raw = local.enumerate();
            let ps = normalize(raw.iter().map(|r| r.2));
            let mut marg = vec![0.0; atoms.len()];
            for (&(mask, _, _), p) in raw.iter().zip(ps) {
                for (bit, m) in marg.iter_mut().enumerate() {
                    if mask >> bit & 1 == 1 {
                        *m += p;
                    }
                }
            }
            for (&a, m) in atoms.iter().zip(marg) {
                probs.insert(program.atom(a).clone(), m);
            }
        }
        Ok(Marginals { probs })
    }

    /// Marginal probability of one atom.
    pub fn query(&self, program: &GroundProgram, atom: &Atom) -> Result<QueryResult, ReasonError> {
        let m = self.marginals(program)?;
        Ok(QueryResult {
            atom: atom.clone(),
            probability: m.probability(atom),
        })
    }

    /// Target weight of a hypothesis (see [`Marginals::hypothesis_weight`]).
    pub fn hypothesis_weight(
        &self,
        program: &GroundProgram,
        registry: &Registry,
        h: &Atom,
    ) -> Result<f64, ReasonError> {
        Ok(self.marginals(program)?.hypothesis_weight(registry, h)?)
    }
}
