use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use indexmap::IndexSet;
use thiserror::Error;

use crate::rules::{Atom, Registry, Rule, RuleError, Term};

pub type AtomId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("fact `{0}` is not ground")]
    NotGround(String),
    #[error("comparison `{0}` cannot be asserted as a fact")]
    ComparisonFact(String),
    #[error("constant `{constant}` used as `{first}` and as `{second}`")]
    TypeMismatch {
        constant: String,
        first: String,
        second: String,
    },
    #[error("comparison `{0}` over non-integer constants")]
    NonIntegerComparison(String),
}

/// Where a ground instance comes from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    /// Index into [`GroundProgram::rules`].
    Rule(usize),
    /// `p(a,b) -> p(b,a)` for a symmetric predicate.
    Symmetry,
    /// `:- p(a,b), negp(a,b)`.
    Exclusion,
}

/// A ground rule instance. `head == None` is an integrity constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub body: Vec<AtomId>,
    pub head: Option<AtomId>,
    pub origin: Origin,
}

/// A grounded context: asserted facts plus hard and weighted soft ground instances.
///
/// Instances are generated by joining rule bodies against the atoms that can possibly hold
/// (facts and heads of generated instances, closed under iteration). Instances whose bodies
/// can never hold are omitted: they are satisfied by every interpretation and shift every
/// model's weight by the same factor.
#[derive(Clone, Debug)]
pub struct GroundProgram {
    base: IndexSet<Atom>,
    is_fact: Vec<bool>,
    is_head: Vec<bool>,
    facts: Vec<AtomId>,
    pub hard: Vec<Instance>,
    pub soft: Vec<(Instance, f64)>,
    domain: BTreeSet<String>,
    rules: Vec<Rule>,
}

impl GroundProgram {
    /// The Herbrand base: facts, every atom mentioned by an instance and the complementary
    /// form of each of them.
    pub fn herbrand_base(&self) -> impl Iterator<Item = &Atom> {
        self.base.iter()
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        &self.base[id]
    }

    pub fn id_of(&self, atom: &Atom) -> Option<AtomId> {
        self.base.get_index_of(atom)
    }

    pub fn facts(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter().map(|&i| &self.base[i])
    }

    pub fn fact_ids(&self) -> &[AtomId] {
        &self.facts
    }

    pub fn is_fact(&self, id: AtomId) -> bool {
        self.is_fact[id]
    }

    /// True when the atom heads some instance.
    pub fn is_head(&self, id: AtomId) -> bool {
        self.is_head[id]
    }

    /// Atoms that may belong to a stable model: facts and instance heads.
    pub fn is_supported(&self, atom: &Atom) -> bool {
        self.id_of(atom)
            .is_some_and(|i| self.is_fact[i] || self.is_head[i])
    }

    /// Non-fact heads, in id order. Only these can vary between stable models.
    pub fn candidates(&self) -> Vec<AtomId> {
        (0..self.base.len())
            .filter(|&i| self.is_head[i] && !self.is_fact[i])
            .collect()
    }

    /// Facts plus every atom mentioned by some instance.
    pub fn relevant_atoms(&self) -> Vec<AtomId> {
        let mut seen = vec![false; self.base.len()];
        for &f in &self.facts {
            seen[f] = true;
        }
        for inst in self.instances() {
            for &b in &inst.body {
                seen[b] = true;
            }
            if let Some(h) = inst.head {
                seen[h] = true;
            }
        }
        (0..seen.len()).filter(|&i| seen[i]).collect()
    }

    pub fn domain(&self) -> &BTreeSet<String> {
        &self.domain
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Hard instances followed by soft instances.
    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.hard.iter().chain(self.soft.iter().map(|(i, _)| i))
    }

    /// Instances of the given rule (by index into [`GroundProgram::rules`]).
    pub fn rule_instances(&self, rule: usize) -> impl Iterator<Item = &Instance> {
        self.instances()
            .filter(move |i| i.origin == Origin::Rule(rule))
    }

    /// Number of ground instances of context rules (axioms excluded).
    pub fn triggered_count(&self) -> usize {
        self.instances()
            .filter(|i| matches!(i.origin, Origin::Rule(_)))
            .count()
    }

    pub fn describe(&self, inst: &Instance) -> String {
        let body: Vec<String> = inst
            .body
            .iter()
            .map(|&b| self.base[b].to_string())
            .collect();
        let head = inst
            .head
            .map_or_else(|| "false".to_string(), |h| self.base[h].to_string());
        format!("{} -> {}", body.join(" & "), head)
    }
}

/// Checks facts against the registry and returns each constant's inferred type.
pub fn type_facts(
    registry: &Registry,
    facts: &[Atom],
) -> Result<BTreeMap<String, String>, GroundError> {
    let mut types = BTreeMap::<String, String>::new();
    for fact in facts {
        let sig = registry.require(&fact.predicate)?;
        if sig.is_comparison() {
            return Err(GroundError::ComparisonFact(fact.to_string()));
        }
        if !fact.is_ground() {
            return Err(GroundError::NotGround(fact.to_string()));
        }
        for (term, ty) in fact.args.iter().zip(sig.arg_types.iter()) {
            let c = term.as_const().unwrap();
            match types.get(c) {
                Some(prev) if prev != ty => {
                    return Err(GroundError::TypeMismatch {
                        constant: c.to_string(),
                        first: prev.clone(),
                        second: ty.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    types.insert(c.to_string(), ty.clone());
                }
            }
        }
    }
    Ok(types)
}

struct Grounder<'a> {
    registry: &'a Registry,
    base: IndexSet<Atom>,
    is_head: Vec<bool>,
    by_pred: HashMap<String, Vec<AtomId>>,
    seen: HashSet<(Origin, Vec<AtomId>)>,
    hard: Vec<Instance>,
    soft: Vec<(Instance, f64)>,
}

impl<'a> Grounder<'a> {
    fn intern(&mut self, atom: Atom) -> (AtomId, bool) {
        let (id, fresh) = self.base.insert_full(atom);
        if fresh {
            self.is_head.push(false);
            let pred = self.base[id].predicate.clone();
            self.by_pred.entry(pred).or_default().push(id);
        }
        (id, fresh)
    }

    fn push(&mut self, inst: Instance, weight: Option<f64>) {
        if !self.seen.insert((inst.origin.clone(), inst.body.clone())) {
            return;
        }
        if let Some(h) = inst.head {
            self.is_head[h] = true;
        }
        match weight {
            Some(w) => self.soft.push((inst, w)),
            None => self.hard.push(inst),
        }
    }

    /// All substitutions making every relational body atom an existing atom.
    fn join(
        &self,
        body: &[&Atom],
        subst: &mut BTreeMap<String, String>,
        matched: &mut Vec<AtomId>,
        out: &mut Vec<(BTreeMap<String, String>, Vec<AtomId>)>,
    ) {
        let Some((first, rest)) = body.split_first() else {
            out.push((subst.clone(), matched.clone()));
            return;
        };
        let Some(ids) = self.by_pred.get(&first.predicate) else {
            return;
        };
        for &id in ids {
            let cand = &self.base[id];
            let mut added = Vec::new();
            let mut ok = true;
            for (pat, val) in first.args.iter().zip(cand.args.iter()) {
                let val = val.as_const().unwrap();
                match pat {
                    Term::Const(c) => ok &= c == val,
                    Term::Var(v) => match subst.get(v) {
                        Some(bound) => ok &= bound == val,
                        None => {
                            subst.insert(v.clone(), val.to_string());
                            added.push(v.clone());
                        }
                    },
                }
                if !ok {
                    break;
                }
            }
            if ok {
                matched.push(id);
                self.join(rest, subst, matched, out);
                matched.pop();
            }
            for v in added {
                subst.remove(&v);
            }
        }
    }
}

fn comparison_holds(
    registry: &Registry,
    atom: &Atom,
    subst: &BTreeMap<String, String>,
) -> Result<bool, GroundError> {
    let cmp = registry.comparison(&atom.predicate).unwrap();
    let ground = atom.substitute(subst);
    let parse = |t: &Term| -> Result<i64, GroundError> {
        t.as_const()
            .and_then(|c| c.parse::<i64>().ok())
            .ok_or_else(|| GroundError::NonIntegerComparison(ground.to_string()))
    };
    Ok(cmp.holds(parse(&ground.args[0])?, parse(&ground.args[1])?))
}

/// Grounds `rules` over the constants of `facts`.
///
/// Adds hard symmetry instances for symmetric predicates and hard mutual-exclusion
/// constraints for every `p(a,b)` / `negp(a,b)` pair that can both hold. Comparison atoms are
/// evaluated and removed. Soft instance weights are the log-odds of the rule confidence.
pub fn ground(
    rules: &[Rule],
    registry: &Registry,
    facts: &[Atom],
) -> Result<GroundProgram, GroundError> {
    type_facts(registry, facts)?;
    for rule in rules {
        rule.validate(registry)?;
    }
    let mut g = Grounder {
        registry,
        base: IndexSet::new(),
        is_head: Vec::new(),
        by_pred: HashMap::new(),
        seen: HashSet::new(),
        hard: Vec::new(),
        soft: Vec::new(),
    };
    let mut fact_ids = Vec::new();
    for fact in facts {
        let (id, fresh) = g.intern(fact.clone());
        if fresh {
            fact_ids.push(id);
        }
    }
    let prepared: Vec<(Vec<&Atom>, Vec<&Atom>, Option<f64>)> = rules
        .iter()
        .map(|r| {
            let (cmp, rel): (Vec<&Atom>, Vec<&Atom>) = r
                .body
                .iter()
                .partition(|a| registry.comparison(&a.predicate).is_some());
            (rel, cmp, r.weight())
        })
        .collect();

    loop {
        let before = g.base.len();
        for (ri, (rel, cmps, weight)) in prepared.iter().enumerate() {
            let mut matches = Vec::new();
            g.join(rel, &mut BTreeMap::new(), &mut Vec::new(), &mut matches);
            for (subst, body) in matches {
                if g.seen.contains(&(Origin::Rule(ri), body.clone())) {
                    continue;
                }
                let mut keep = true;
                for c in cmps {
                    keep &= comparison_holds(registry, c, &subst)?;
                }
                if !keep {
                    continue;
                }
                let (head, _) = g.intern(rules[ri].head.substitute(&subst));
                g.push(
                    Instance {
                        body,
                        head: Some(head),
                        origin: Origin::Rule(ri),
                    },
                    *weight,
                );
            }
        }
        let mut id = 0;
        while id < g.base.len() {
            let atom = &g.base[id];
            if g.registry.is_symmetric(&atom.predicate) && atom.args[0] != atom.args[1] {
                let swapped = atom.swapped();
                if !g.seen.contains(&(Origin::Symmetry, vec![id])) {
                    let (head, _) = g.intern(swapped);
                    g.push(
                        Instance {
                            body: vec![id],
                            head: Some(head),
                            origin: Origin::Symmetry,
                        },
                        None,
                    );
                }
            }
            id += 1;
        }
        if g.base.len() == before {
            break;
        }
    }

    let possible = g.base.len();
    let mut is_fact = vec![false; possible];
    for &f in &fact_ids {
        is_fact[f] = true;
    }
    for id in 0..possible {
        let atom = &g.base[id];
        if registry.is_negative(&atom.predicate) {
            continue;
        }
        let comp = registry.negate(atom)?;
        if let Some(cid) = g.base.get_index_of(&comp) {
            if is_fact[cid] || g.is_head[cid] {
                g.push(
                    Instance {
                        body: vec![id, cid],
                        head: None,
                        origin: Origin::Exclusion,
                    },
                    None,
                );
            }
        }
    }
    for id in 0..possible {
        let comp = registry.negate(&g.base[id])?;
        g.intern(comp);
    }
    is_fact.resize(g.base.len(), false);

    let domain = facts
        .iter()
        .flat_map(|f| f.args.iter().filter_map(Term::as_const).map(str::to_string))
        .collect();

    Ok(GroundProgram {
        base: g.base,
        is_fact,
        is_head: g.is_head,
        facts: fact_ids,
        hard: g.hard,
        soft: g.soft,
        domain,
        rules: rules.to_vec(),
    })
}

/// A definite ground rule over atoms (no constraint, single head).
#[derive(Clone, Debug, PartialEq)]
pub struct DefiniteInstance {
    pub body: Vec<Atom>,
    pub head: Atom,
}

/// Least fixpoint of forward chaining from `facts` under `instances`.
pub fn least_model(facts: &BTreeSet<Atom>, instances: &[DefiniteInstance]) -> BTreeSet<Atom> {
    let mut model = facts.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for inst in instances {
            if !model.contains(&inst.head) && inst.body.iter().all(|b| model.contains(b)) {
                model.insert(inst.head.clone());
                changed = true;
            }
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{fact, parse_rule, Registry};

    fn registry() -> Registry {
        Registry::parse(
            "child person person\nparent person person\nspouse person person yes\n\
             birthYear person year\nfoundYear company year\nfounder company person\n",
        )
        .unwrap()
    }

    #[test]
    fn grounds_triggered_hard_rule() {
        let mut reg = registry();
        let r = parse_rule("1.0 :: child(A,C) & parent(C,B) -> spouse(A,B)", &mut reg).unwrap();
        let facts = [
            fact("child", "Alice", "Carl"),
            fact("parent", "Carl", "Bob"),
        ];
        let p = ground(&[r], &reg, &facts).unwrap();
        let rule_inst: Vec<String> = p.rule_instances(0).map(|i| p.describe(i)).collect();
        assert_eq!(
            rule_inst,
            ["child(Alice,Carl) & parent(Carl,Bob) -> spouse(Alice,Bob)"]
        );
        assert!(p.hard.iter().any(|i| i.origin == Origin::Symmetry));
        assert!(p.soft.is_empty());
        assert_eq!(p.domain().len(), 3);
    }

    #[test]
    fn comparison_filters_instances() {
        let mut reg = registry();
        let r = parse_rule(
            "0.99 :: birthYear(B,D) & foundYear(A,C) & <(C,D) -> negfounder(A,B)",
            &mut reg,
        )
        .unwrap();
        let facts = [
            fact("foundYear", "Ford", "1903"),
            fact("birthYear", "Musk", "1971"),
        ];
        let p = ground(std::slice::from_ref(&r), &reg, &facts).unwrap();
        assert!(p.is_supported(&fact("negfounder", "Ford", "Musk")));
        assert_eq!(p.soft.len(), 1);
        let late = [
            fact("foundYear", "Ford", "1990"),
            fact("birthYear", "Musk", "1971"),
        ];
        let p = ground(std::slice::from_ref(&r), &reg, &late).unwrap();
        assert_eq!(p.triggered_count(), 0);
        let bad = [
            fact("foundYear", "Ford", "early"),
            fact("birthYear", "Musk", "1971"),
        ];
        assert!(matches!(
            ground(&[r], &reg, &bad),
            Err(GroundError::NonIntegerComparison(_))
        ));
    }

    #[test]
    fn no_rules_only_vocabulary() {
        let reg = registry();
        let p = ground(&[], &reg, &[fact("child", "Eve", "David")]).unwrap();
        assert_eq!(p.hard.len() + p.soft.len(), 0);
        let base: Vec<String> = p.herbrand_base().map(|a| a.to_string()).collect();
        assert!(base.contains(&"child(Eve,David)".to_string()));
        assert!(base.contains(&"negchild(Eve,David)".to_string()));
    }

    #[test]
    fn exclusion_only_for_possible_pairs() {
        let reg = registry();
        let facts = [
            fact("child", "Eve", "David"),
            fact("negchild", "Eve", "David"),
        ];
        let p = ground(&[], &reg, &facts).unwrap();
        assert_eq!(p.hard.len(), 1);
        assert_eq!(p.hard[0].origin, Origin::Exclusion);
    }

    #[test]
    fn type_mismatch() {
        let reg = registry();
        let facts = [
            fact("founder", "Ford", "Musk"),
            fact("child", "Ford", "Bob"),
        ];
        assert!(matches!(
            ground(&[], &reg, &facts),
            Err(GroundError::TypeMismatch { .. })
        ));
        assert!(matches!(
            ground(&[], &reg, &[fact("<", "1", "2")]),
            Err(GroundError::ComparisonFact(_))
        ));
    }

    #[test]
    fn least_model_chains() {
        let a = fact("p", "x", "y");
        let b = fact("q", "x", "y");
        let c = fact("r", "x", "y");
        let facts: BTreeSet<Atom> = [a.clone()].into();
        let insts = [
            DefiniteInstance {
                body: vec![b.clone()],
                head: c.clone(),
            },
            DefiniteInstance {
                body: vec![a.clone()],
                head: b.clone(),
            },
        ];
        let lm = least_model(&facts, &insts);
        assert_eq!(lm, [a.clone(), b, c].into());
        assert_eq!(least_model(&facts, &[]), facts);
    }

    #[test]
    fn least_model_derives_spouse() {
        let f1 = fact("child", "Alice", "Carl");
        let f2 = fact("parent", "Carl", "Bob");
        let h = fact("spouse", "Alice", "Bob");
        let lm = least_model(
            &[f1.clone(), f2.clone()].into(),
            &[DefiniteInstance {
                body: vec![f1.clone(), f2.clone()],
                head: h.clone(),
            }],
        );
        assert_eq!(lm, [f1, f2, h].into());
    }
}
