use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{label_for, unit_rng, Example, ExampleMeta, GenConfig, GenError, Group, Pools};
use crate::lpmln::{ground, type_facts, GroundProgram, Marginals, Reasoner};
use crate::rules::{Atom, Registry, Rule, Term};

const MAX_ATTEMPTS: usize = 64;
const SAMPLE_TRIES: usize = 64;
const MAX_CHUNK: usize = 256;

/// Hands out constants from the type pools and remembers each constant's type, so one
/// constant never serves two types within a context.
struct Cast<'a> {
    pools: &'a Pools,
    types: HashMap<String, String>,
}

impl<'a> Cast<'a> {
    fn new(pools: &'a Pools) -> Self {
        Cast {
            pools,
            types: HashMap::new(),
        }
    }

    fn pool(&self, ty: &str) -> Result<&'a [String], GenError> {
        self.pools
            .get(ty)
            .map(Vec::as_slice)
            .ok_or_else(|| GenError::MissingPool(ty.to_string()))
    }

    /// A constant not used so far.
    fn fresh(&mut self, ty: &str, rng: &mut impl Rng) -> Result<String, GenError> {
        let pool = self.pool(ty)?;
        let free: Vec<&String> = pool
            .iter()
            .filter(|c| !self.types.contains_key(*c))
            .collect();
        let c = free
            .choose(rng)
            .ok_or_else(|| GenError::PoolExhausted(ty.to_string()))?
            .to_string();
        self.types.insert(c.clone(), ty.to_string());
        Ok(c)
    }

    /// Any constant of the type, possibly one already in use.
    fn any(&mut self, ty: &str, rng: &mut impl Rng) -> Result<String, GenError> {
        let pool = self.pool(ty)?;
        let ok: Vec<&String> = pool
            .iter()
            .filter(|c| self.types.get(*c).is_none_or(|t| t == ty))
            .collect();
        let c = ok
            .choose(rng)
            .ok_or_else(|| GenError::PoolExhausted(ty.to_string()))?
            .to_string();
        self.types.insert(c.clone(), ty.to_string());
        Ok(c)
    }

    fn release(&mut self, c: &str) {
        self.types.remove(c);
    }
}

fn comparisons_hold(rule: &Rule, registry: &Registry, subst: &BTreeMap<String, String>) -> bool {
    rule.body
        .iter()
        .all(|a| match registry.comparison(&a.predicate) {
            None => true,
            Some(cmp) => {
                let g = a.substitute(subst);
                match (g.args[0].as_const(), g.args[1].as_const()) {
                    (Some(l), Some(r)) => match (l.parse::<i64>(), r.parse::<i64>()) {
                        (Ok(l), Ok(r)) => cmp.holds(l, r),
                        _ => false,
                    },
                    _ => false,
                }
            }
        })
}

/// Binds every variable of `rule` not in `fixed` to a fresh constant so that all comparison
/// atoms hold.
fn instantiate(
    rule: &Rule,
    registry: &Registry,
    cast: &mut Cast,
    rng: &mut impl Rng,
    fixed: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>, GenError> {
    let types = rule.variable_types(registry)?;
    for _ in 0..SAMPLE_TRIES {
        let mut subst = fixed.clone();
        let mut drawn = Vec::new();
        for var in rule.variables_head_first() {
            if subst.contains_key(&var) {
                continue;
            }
            let c = cast.fresh(&types[&var], rng)?;
            drawn.push(c.clone());
            subst.insert(var, c);
        }
        if comparisons_hold(rule, registry, &subst) {
            return Ok(subst);
        }
        for c in &drawn {
            cast.release(c);
        }
    }
    Err(GenError::Rejected(format!(
        "comparisons of `{}` not satisfiable",
        rule.id
    )))
}

fn body_facts(rule: &Rule, registry: &Registry, subst: &BTreeMap<String, String>) -> Vec<Atom> {
    rule.relational_body(registry)
        .map(|a| a.substitute(subst))
        .collect()
}

/// Positive relational predicates of the rule bodies and heads, in first-seen order.
fn vocabulary(rules: &[&Rule], registry: &Registry) -> Result<Vec<String>, GenError> {
    let mut out: Vec<String> = Vec::new();
    for r in rules {
        for a in r.relational_body(registry).chain(std::iter::once(&r.head)) {
            let base = registry.base_of(&a.predicate)?.to_string();
            if !out.contains(&base) {
                out.push(base);
            }
        }
    }
    Ok(out)
}

/// Random-polarity facts over `preds`. Facts duplicating or contradicting `existing`, and
/// facts over any pair in `avoid` (in either order), are skipped.
fn distractors(
    preds: &[String],
    registry: &Registry,
    cast: &mut Cast,
    rng: &mut impl Rng,
    count: usize,
    existing: &[Atom],
    avoid: &HashSet<(String, String)>,
) -> Result<Vec<Atom>, GenError> {
    let mut out: Vec<Atom> = Vec::new();
    let mut seen: HashSet<Atom> = existing.iter().cloned().collect();
    let mut tries = 0;
    while out.len() < count && tries < count * 8 {
        tries += 1;
        let base = preds.choose(rng).expect("nonempty vocabulary");
        let sig = registry.require(base)?;
        let [t0, t1] = sig.arg_types.clone();
        let name = if rng.gen_bool(0.5) {
            base.clone()
        } else {
            registry.complement_of(base)?.to_string()
        };
        let s = cast.any(&t0, rng)?;
        let o = cast.any(&t1, rng)?;
        if s == o
            || avoid.contains(&(s.clone(), o.clone()))
            || avoid.contains(&(o.clone(), s.clone()))
        {
            continue;
        }
        let atom = Atom::new(name, Term::Const(s), Term::Const(o));
        let comp = registry.negate(&atom)?;
        if seen.contains(&atom) || seen.contains(&comp) {
            continue;
        }
        seen.insert(atom.clone());
        out.push(atom);
    }
    Ok(out)
}

/// Random facts over the rule's predicates followed by one instantiation of its body.
///
/// The total stays within `max(m, |body|)`: between zero and `m - |body|` distractors with
/// random polarity over the body and head predicates, then the positive triggering facts.
pub fn gen_facts(
    rule: &Rule,
    m: usize,
    registry: &Registry,
    pools: &Pools,
    rng: &mut impl Rng,
) -> Result<Vec<Atom>, GenError> {
    let mut cast = Cast::new(pools);
    Ok(single_facts(rule, m, registry, &mut cast, rng)?.0)
}

fn single_facts(
    rule: &Rule,
    m: usize,
    registry: &Registry,
    cast: &mut Cast,
    rng: &mut impl Rng,
) -> Result<(Vec<Atom>, Atom), GenError> {
    let subst = instantiate(rule, registry, cast, rng, &BTreeMap::new())?;
    let trigger = body_facts(rule, registry, &subst);
    let head = rule.head.substitute(&subst);
    let k = rng.gen_range(0..=m.saturating_sub(trigger.len()));
    let avoid = pair_of(&head);
    let mut facts = distractors(
        &vocabulary(&[rule], registry)?,
        registry,
        cast,
        rng,
        k,
        &trigger,
        &avoid,
    )?;
    facts.extend(trigger);
    Ok((facts, head))
}

fn pair_of(atom: &Atom) -> HashSet<(String, String)> {
    let c = |i: usize| atom.args[i].as_const().unwrap_or_default().to_string();
    [(c(0), c(1))].into()
}

/// A grounded and solved context.
struct Solved<'a> {
    registry: &'a Registry,
    rules: Vec<Rule>,
    facts: Vec<Atom>,
    program: GroundProgram,
    marginals: Marginals,
    by_type: BTreeMap<String, Vec<String>>,
}

impl<'a> Solved<'a> {
    fn new(
        registry: &'a Registry,
        rules: Vec<Rule>,
        facts: Vec<Atom>,
        budget: usize,
    ) -> Result<Self, GenError> {
        let program = ground(&rules, registry, &facts)?;
        let marginals = Reasoner::new(budget).marginals(&program)?;
        let mut by_type: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (c, ty) in type_facts(registry, &facts)? {
            by_type.entry(ty).or_default().push(c);
        }
        Ok(Solved {
            registry,
            rules,
            facts,
            program,
            marginals,
            by_type,
        })
    }

    fn weight(&self, h: &Atom) -> Result<f64, GenError> {
        Ok(self.marginals.hypothesis_weight(self.registry, h)?)
    }

    fn example(&self, h: Atom, class: &str, depth: usize) -> Result<Example, GenError> {
        let weight = self.weight(&h)?;
        Ok(Example {
            id: String::new(),
            rules: self.rules.clone(),
            facts: self.facts.clone(),
            hypothesis: h,
            weight,
            label: label_for(weight),
            meta: ExampleMeta {
                hyp_class: class.to_string(),
                rule_ids: self.rules.iter().map(|r| r.id.clone()).collect(),
                depth,
                triggered_count: self.program.triggered_count(),
            },
        })
    }

    /// A fact whose alteration is false (h1, h2).
    fn fact_pair(&self, candidates: &[Atom], rng: &mut impl Rng) -> Result<(Atom, Atom), GenError> {
        let mut order: Vec<&Atom> = candidates.iter().collect();
        order.shuffle(rng);
        for f in order {
            let alt = self.registry.alter(f, rng)?;
            if self.weight(f)? == 1.0 && self.weight(&alt)? == 0.0 {
                return Ok((f.clone(), alt));
            }
        }
        Err(GenError::Rejected("no fact has a false alteration".into()))
    }

    /// A conclusion and its alteration (h3, h4). A negated conclusion must carry the
    /// complementary weight.
    fn conclusion_pair(&self, h: Atom, rng: &mut impl Rng) -> Result<(Atom, Atom), GenError> {
        let alt = self.registry.alter(&h, rng)?;
        if alt == self.registry.negate(&h)? {
            let sum = self.weight(&h)? + self.weight(&alt)?;
            if (sum - 1.0).abs() > 1e-9 {
                return Err(GenError::Rejected(format!("{h} and {alt} sum to {sum}")));
            }
        }
        Ok((h, alt))
    }

    /// An atom over `predicate` such that neither it nor its complement can be derived,
    /// preferring constants of the context.
    fn unsupported(
        &self,
        predicate: &str,
        cast: &mut Cast,
        rng: &mut impl Rng,
    ) -> Result<Atom, GenError> {
        let types = self.registry.require(predicate)?.arg_types.clone();
        for attempt in 0..SAMPLE_TRIES {
            let from_context = attempt < SAMPLE_TRIES / 2;
            let s = self.pick(&types[0], from_context, cast, rng)?;
            let o = self.pick(&types[1], from_context, cast, rng)?;
            if s == o {
                continue;
            }
            let atom = Atom::new(predicate, Term::Const(s), Term::Const(o));
            if !self.program.is_supported(&atom)
                && !self.program.is_supported(&self.registry.negate(&atom)?)
            {
                return Ok(atom);
            }
        }
        Err(GenError::Rejected(format!(
            "no unsupported `{predicate}` atom"
        )))
    }

    fn pick(
        &self,
        ty: &str,
        from_context: bool,
        cast: &mut Cast,
        rng: &mut impl Rng,
    ) -> Result<String, GenError> {
        match self.by_type.get(ty) {
            Some(cs) if from_context => Ok(cs.choose(rng).expect("nonempty").clone()),
            _ => cast.any(ty, rng),
        }
    }

    /// Heads of triggered instances of the rule at `index`.
    fn conclusions(&self, index: usize) -> Vec<Atom> {
        let mut out: Vec<Atom> = Vec::new();
        for inst in self.program.rule_instances(index) {
            let h = self
                .program
                .atom(inst.head.expect("rules have heads"))
                .clone();
            if !out.contains(&h) {
                out.push(h);
            }
        }
        out
    }

    /// h5 to h8 for a context whose last rule is `rule`.
    fn unsatisfied(
        &self,
        rule: &Rule,
        cast: &mut Cast,
        rng: &mut impl Rng,
    ) -> Result<[Atom; 4], GenError> {
        let head_base = self.registry.base_of(&rule.head.predicate)?.to_string();
        let body_refs: Vec<&Rule> = self.rules.iter().collect();
        let mut preds: Vec<String> = vocabulary(&body_refs, self.registry)?
            .into_iter()
            .filter(|p| *p != head_base)
            .collect();
        if preds.is_empty() {
            preds = self
                .registry
                .positive_predicates()
                .filter(|s| s.name != head_base)
                .map(|s| s.name.clone())
                .collect();
        }
        let p5 = preds
            .choose(rng)
            .ok_or_else(|| GenError::Config("registry has a single predicate".into()))?;
        let h5 = self.unsupported(p5, cast, rng)?;
        let h6 = self.registry.negate(&h5)?;
        let h7 = self.unsupported(&rule.head.predicate, cast, rng)?;
        let h8 = self.registry.negate(&h7)?;
        Ok([h5, h6, h7, h8])
    }
}

fn seed_cast<'a>(
    pools: &'a Pools,
    registry: &Registry,
    facts: &[Atom],
) -> Result<Cast<'a>, GenError> {
    let mut cast = Cast::new(pools);
    cast.types = type_facts(registry, facts)?.into_iter().collect();
    Ok(cast)
}

/// One single-rule context and its eight hypotheses.
fn single_context(
    rule: &Rule,
    registry: &Registry,
    pools: &Pools,
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Example>, GenError> {
    let mut cast = Cast::new(pools);
    let (facts, head) = single_facts(rule, config.m, registry, &mut cast, rng)?;
    let solved = Solved::new(registry, vec![rule.clone()], facts, config.budget)?;
    let (h1, h2) = solved.fact_pair(&solved.facts, rng)?;
    let conclusions = solved.conclusions(0);
    let h3 = conclusions.choose(rng).cloned().unwrap_or(head);
    let (h3, h4) = solved.conclusion_pair(h3, rng)?;
    let [h5, h6, h7, h8] = solved.unsatisfied(rule, &mut cast, rng)?;
    let classes = [
        (h1, "h1", 0),
        (h2, "h2", 0),
        (h3, "h3", 1),
        (h4, "h4", 1),
        (h5, "h5", 1),
        (h6, "h6", 1),
        (h7, "h7", 1),
        (h8, "h8", 1),
    ];
    classes
        .into_iter()
        .map(|(h, c, d)| solved.example(h, c, d))
        .collect()
}

fn run_unit<F>(prefix: &str, seed: u64, unit: usize, make: &F) -> Result<Group, GenError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<Example>, GenError>,
{
    let key = format!("{prefix}-{unit:05}");
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = unit_rng(seed, &format!("{key}#{attempt}"));
        match make(&mut rng) {
            Ok(mut examples) => {
                for (k, e) in examples.iter_mut().enumerate() {
                    e.id = format!("{key}-{k:03}");
                }
                return Ok(Group { key, examples });
            }
            Err(e) if e.retryable() => last = Some(Box::new(e)),
            Err(e) => return Err(e),
        }
    }
    Err(GenError::Exhausted {
        unit: key,
        attempts: MAX_ATTEMPTS,
        last: last.expect("at least one attempt"),
    })
}

/// Generates whole units in parallel until at least `target` examples exist.
fn drive<F>(
    prefix: &str,
    seed: u64,
    target: usize,
    per_unit: usize,
    make: F,
) -> Result<Vec<Group>, GenError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<Example>, GenError> + Sync,
{
    let mut groups = Vec::new();
    let mut total = 0;
    let mut next = 0;
    while total < target {
        let chunk = (target - total)
            .div_ceil(per_unit.max(1))
            .clamp(1, MAX_CHUNK);
        let batch: Vec<Group> = (next..next + chunk)
            .into_par_iter()
            .map(|u| run_unit(prefix, seed, u, &make))
            .collect::<Result<_, _>>()?;
        next += chunk;
        for g in batch {
            if total >= target {
                break;
            }
            total += g.examples.len();
            groups.push(g);
        }
    }
    Ok(groups)
}

/// `ceil(n / 8)` contexts for one rule, eight hypotheses each (h1 to h8).
pub fn gen_single_rule(
    rule: &Rule,
    registry: &Registry,
    config: &GenConfig,
) -> Result<Vec<Group>, GenError> {
    config.validate()?;
    rule.validate(registry)?;
    let pools = config.effective_pools();
    drive(
        &format!("single-{}", rule.id),
        config.seed,
        config.n,
        8,
        |rng| single_context(rule, registry, &pools, config, rng),
    )
}

/// Examples per overlap batch: `8 r + 2 (2^r - 1 - r)`.
pub fn overlap_count(rules: usize) -> usize {
    8 * rules + 2 * ((1usize << rules) - 1 - rules)
}

/// Subsets of `0..r` with at least two members, by size and then lexicographically.
fn subsets(r: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0u32..(1 << r))
        .filter(|m| m.count_ones() >= 2)
        .map(|m| (0..r).filter(|i| m >> i & 1 == 1).collect())
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn subset_context(
    rules: &[&Rule],
    registry: &Registry,
    pools: &Pools,
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Example>, GenError> {
    let mut cast = Cast::new(pools);
    let first = rules[0];
    let sig = registry.require(&first.head.predicate)?;
    let a = cast.fresh(&sig.arg_types[0], rng)?;
    let b = cast.fresh(&sig.arg_types[1], rng)?;
    let mut trigger: Vec<Atom> = Vec::new();
    for r in rules {
        let fixed: BTreeMap<String, String> = [
            (r.head.args[0].as_var().unwrap().to_string(), a.clone()),
            (r.head.args[1].as_var().unwrap().to_string(), b.clone()),
        ]
        .into();
        let subst = instantiate(r, registry, &mut cast, rng, &fixed)?;
        for f in body_facts(r, registry, &subst) {
            if !trigger.contains(&f) {
                trigger.push(f);
            }
        }
    }
    let k = rng.gen_range(0..=config.m.saturating_sub(trigger.len()));
    let avoid: HashSet<(String, String)> = [(a.clone(), b.clone())].into();
    let mut facts = distractors(
        &vocabulary(rules, registry)?,
        registry,
        &mut cast,
        rng,
        k,
        &trigger,
        &avoid,
    )?;
    facts.extend(trigger);
    let solved = Solved::new(
        registry,
        rules.iter().map(|r| (*r).clone()).collect(),
        facts,
        config.budget,
    )?;
    let conclusion = Atom::new(first.head.predicate.clone(), Term::Const(a), Term::Const(b));
    let negation = registry.negate(&conclusion)?;
    let tag = |h: &Atom| {
        if registry.is_negative(&h.predicate) {
            "overlap-"
        } else {
            "overlap+"
        }
    };
    Ok(vec![
        solved.example(conclusion.clone(), tag(&conclusion), 1)?,
        solved.example(negation.clone(), tag(&negation), 1)?,
    ])
}

/// Overlapping conclusions for rules sharing one head predicate (in either polarity).
///
/// Each batch holds one single-rule context per rule (eight examples each) and, for every
/// subset of two or more rules, a context in which exactly those rules fire on a shared head
/// pair, with the conclusion and its negation as hypotheses.
pub fn gen_overlap(
    rules: &[Rule],
    registry: &Registry,
    config: &GenConfig,
) -> Result<Vec<Group>, GenError> {
    config.validate()?;
    if rules.len() < 2 {
        return Err(GenError::Overlap("need at least two rules".into()));
    }
    if rules.len() > 10 {
        return Err(GenError::Overlap("at most ten rules are supported".into()));
    }
    let base = registry.base_of(&rules[0].head.predicate)?.to_string();
    for r in rules {
        r.validate(registry)?;
        if registry.base_of(&r.head.predicate)? != base {
            return Err(GenError::Overlap(format!(
                "rule `{}` does not conclude `{base}` or its negation",
                r.id
            )));
        }
        let vars: Vec<_> = r.head.args.iter().filter_map(Term::as_var).collect();
        if vars.len() != 2 || vars[0] == vars[1] {
            return Err(GenError::Overlap(format!(
                "rule `{}` needs two distinct head variables",
                r.id
            )));
        }
    }
    let pools = config.effective_pools();
    let combos = subsets(rules.len());
    let per = overlap_count(rules.len());
    drive("overlap", config.seed, config.n, per, |rng| {
        let mut out = Vec::with_capacity(per);
        for r in rules {
            out.extend(single_context(r, registry, &pools, config, rng)?);
        }
        for combo in &combos {
            let chosen: Vec<&Rule> = combo.iter().map(|&i| &rules[i]).collect();
            out.extend(subset_context(&chosen, registry, &pools, config, rng)?);
        }
        Ok(out)
    })
}

/// For each rule, the (rule, body atom) pairs its head can feed.
fn links(pool: &[Rule], registry: &Registry) -> Vec<Vec<(usize, usize)>> {
    pool.iter()
        .enumerate()
        .map(|(i, r)| {
            let mut out = Vec::new();
            for (j, next) in pool.iter().enumerate() {
                if i == j {
                    continue;
                }
                for (k, a) in next.body.iter().enumerate() {
                    if registry.comparison(&a.predicate).is_none()
                        && a.predicate == r.head.predicate
                    {
                        out.push((j, k));
                    }
                }
            }
            out
        })
        .collect()
}

fn chain_exists(links: &[Vec<(usize, usize)>], len: usize) -> bool {
    fn extend(links: &[Vec<(usize, usize)>], path: &mut Vec<usize>, len: usize) -> bool {
        if path.len() == len {
            return true;
        }
        let last = *path.last().unwrap();
        for &(j, _) in &links[last] {
            if !path.contains(&j) {
                path.push(j);
                if extend(links, path, len) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    (0..links.len()).any(|i| extend(links, &mut vec![i], len))
}

/// Uniformly extends a random start rule with eligible distinct rules.
fn sample_chain(
    links: &[Vec<(usize, usize)>],
    len: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>, GenError> {
    for _ in 0..SAMPLE_TRIES {
        let mut chain = vec![(rng.gen_range(0..links.len()), 0)];
        while chain.len() < len {
            let last = chain.last().unwrap().0;
            let options: Vec<&(usize, usize)> = links[last]
                .iter()
                .filter(|(j, _)| !chain.iter().any(|(c, _)| c == j))
                .collect();
            match options.choose(rng) {
                Some(&&next) => chain.push(next),
                None => break,
            }
        }
        if chain.len() == len {
            return Ok(chain);
        }
    }
    Err(GenError::Rejected(format!(
        "no chain of length {len} sampled"
    )))
}

fn chain_context(
    pool: &[Rule],
    links: &[Vec<(usize, usize)>],
    max_depth: usize,
    registry: &Registry,
    pools: &Pools,
    config: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Example>, GenError> {
    let depth = rng.gen_range(1..=max_depth);
    let chain = sample_chain(links, depth, rng)?;
    let mut cast = Cast::new(pools);
    let first = &pool[chain[0].0];
    let subst = instantiate(first, registry, &mut cast, rng, &BTreeMap::new())?;
    let roots = body_facts(first, registry, &subst);
    let mut base = roots.clone();
    let mut heads = vec![first.head.substitute(&subst)];
    for &(j, k) in &chain[1..] {
        let rule = &pool[j];
        let prev = heads.last().unwrap();
        let link = &rule.body[k];
        let mut fixed = BTreeMap::new();
        for (t, c) in link.args.iter().zip(prev.args.iter()) {
            let (v, c) = (
                t.as_var().unwrap().to_string(),
                c.as_const().unwrap().to_string(),
            );
            if fixed.get(&v).is_some_and(|old| *old != c) {
                return Err(GenError::Rejected(format!("`{link}` cannot match {prev}")));
            }
            fixed.insert(v, c);
        }
        let subst = instantiate(rule, registry, &mut cast, rng, &fixed)?;
        for (i, a) in rule.body.iter().enumerate() {
            if i != k && registry.comparison(&a.predicate).is_none() {
                let f = a.substitute(&subst);
                if !base.contains(&f) {
                    base.push(f);
                }
            }
        }
        heads.push(rule.head.substitute(&subst));
    }
    let rules: Vec<Rule> = chain.iter().map(|&(j, _)| pool[j].clone()).collect();
    let refs: Vec<&Rule> = rules.iter().collect();
    let avoid: HashSet<(String, String)> = heads.iter().flat_map(pair_of).collect();
    let k = rng.gen_range(0..=config.m.saturating_sub(base.len()));
    let mut facts = distractors(
        &vocabulary(&refs, registry)?,
        registry,
        &mut cast,
        rng,
        k,
        &base,
        &avoid,
    )?;
    facts.extend(base);
    let solved = Solved::new(registry, rules, facts, config.budget)?;
    let mut cast = seed_cast(pools, registry, &solved.facts)?;

    let mut out = Vec::new();
    let (h1, h2) = solved.fact_pair(&roots, rng)?;
    out.push(solved.example(h1, "chain-h1", 0)?);
    out.push(solved.example(h2, "chain-h2", 0)?);
    for (d, h) in heads.iter().enumerate() {
        if !solved.program.is_supported(h)
            || solved
                .program
                .fact_ids()
                .iter()
                .any(|&f| solved.program.atom(f) == h)
        {
            return Err(GenError::Rejected(format!(
                "{h} is not a derived conclusion"
            )));
        }
        let (h3, h4) = solved.conclusion_pair(h.clone(), rng)?;
        out.push(solved.example(h3, "chain-h3", d + 1)?);
        out.push(solved.example(h4, "chain-h4", d + 1)?);
    }
    let last = &pool[chain.last().unwrap().0];
    let [h5, h6, h7, h8] = solved.unsatisfied(last, &mut cast, rng)?;
    for (h, c) in [
        (h5, "chain-h5"),
        (h6, "chain-h6"),
        (h7, "chain-h7"),
        (h8, "chain-h8"),
    ] {
        out.push(solved.example(h, c, depth)?);
    }
    Ok(out)
}

/// Chained reasoning examples. Each context samples a chain length in `1..=max_depth` and a
/// chain of distinct rules where every head matches a body atom of the next rule, then emits
/// the base fact (depth 0) and every intermediate conclusion with their alterations, plus
/// four unsupported hypotheses.
pub fn gen_chain(
    pool: &[Rule],
    registry: &Registry,
    max_depth: usize,
    config: &GenConfig,
) -> Result<Vec<Group>, GenError> {
    config.validate()?;
    if max_depth == 0 {
        return Err(GenError::Config("chain depth must be at least 1".into()));
    }
    for r in pool {
        r.validate(registry)?;
    }
    let links = links(pool, registry);
    if pool.is_empty() || !chain_exists(&links, max_depth) {
        return Err(GenError::NoChain(max_depth));
    }
    let pools = config.effective_pools();
    let per = (max_depth + 1) + 6;
    drive("chain", config.seed, config.n, per, |rng| {
        chain_context(pool, &links, max_depth, registry, &pools, config, rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::rules::parse_rule;
    use rand::SeedableRng;

    #[test]
    fn overlap_counts() {
        assert_eq!([2, 3, 4, 5].map(overlap_count), [18, 32, 54, 92]);
        for r in 2..=6 {
            assert_eq!(overlap_count(r), 8 * r + 2 * subsets(r).len());
        }
    }

    #[test]
    fn facts_trigger_rule() {
        let mut reg = corpus::registry();
        let rule = parse_rule("0.9 :: child(A,B) -> parent(B,A)", &mut reg).unwrap();
        let pools = super::super::default_pools();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let facts = gen_facts(&rule, 5, &reg, &pools, &mut rng).unwrap();
            assert!(facts.len() <= 5);
            let prog = ground(std::slice::from_ref(&rule), &reg, &facts).unwrap();
            assert!(prog.triggered_count() >= 1);
            assert!(facts.last().unwrap().predicate == "child");
            let mut again = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(
                gen_facts(&rule, 5, &reg, &pools, &mut again).unwrap(),
                facts
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let exact = gen_facts(&rule, 1, &reg, &pools, &mut rng).unwrap();
        assert_eq!(exact.len(), 1);
    }

    #[test]
    fn comparison_rules_trigger() {
        let rules = corpus::single_rules();
        let rule = rules.get("s02").unwrap();
        let pools = super::super::default_pools();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let facts = gen_facts(rule, 3, &rules.registry, &pools, &mut rng).unwrap();
        let prog = ground(std::slice::from_ref(rule), &rules.registry, &facts).unwrap();
        assert_eq!(prog.triggered_count(), 1);
    }

    #[test]
    fn single_context_classes() {
        let mut reg = corpus::registry();
        let rule =
            parse_rule("0.825 :: parent(C,A) & child(B,C) -> spouse(A,B)", &mut reg).unwrap();
        let cfg = GenConfig {
            n: 16,
            ..GenConfig::default()
        };
        let groups = gen_single_rule(&rule, &reg, &cfg).unwrap();
        assert_eq!(groups.len(), 2);
        for g in &groups {
            let classes: Vec<&str> = g
                .examples
                .iter()
                .map(|e| e.meta.hyp_class.as_str())
                .collect();
            assert_eq!(classes, ["h1", "h2", "h3", "h4", "h5", "h6", "h7", "h8"]);
            let w: Vec<f64> = g.examples.iter().map(|e| e.weight).collect();
            assert_eq!(
                (w[0], w[1], w[4], w[5], w[6], w[7]),
                (1.0, 0.0, 0.0, 1.0, 0.0, 1.0)
            );
        }
        let again = gen_single_rule(&rule, &reg, &cfg).unwrap();
        assert_eq!(
            groups[1]
                .examples
                .iter()
                .map(|e| e.hypothesis.clone())
                .collect::<Vec<_>>(),
            again[1]
                .examples
                .iter()
                .map(|e| e.hypothesis.clone())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn chain_pool_must_link() {
        let mut reg = corpus::registry();
        let pool = vec![
            parse_rule("0.7 :: child(A,B) -> parent(B,A)", &mut reg).unwrap(),
            parse_rule("0.7 :: relative(A,B) -> spouse(A,B)", &mut reg).unwrap(),
        ];
        let cfg = GenConfig::default();
        assert!(matches!(
            gen_chain(&pool, &reg, 2, &cfg),
            Err(GenError::NoChain(2))
        ));
        assert!(gen_chain(&pool, &reg, 1, &cfg).is_ok());
    }
}
