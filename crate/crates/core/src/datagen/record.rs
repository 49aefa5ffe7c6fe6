use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{label_for, Example, GenError};
use crate::lpmln::{ground, Reasoner};
use crate::rules::{parse_fact, parse_rule_with_id, Atom, Registry, Rule};
use crate::verbalize::TemplateRegistry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolicContext {
    /// `id: confidence :: body -> head`.
    pub rules: Vec<String>,
    pub facts: Vec<String>,
}

impl SymbolicContext {
    pub fn from_parts(rules: &[Rule], facts: &[Atom]) -> Self {
        SymbolicContext {
            rules: rules.iter().map(|r| format!("{}: {}", r.id, r)).collect(),
            facts: facts.iter().map(Atom::to_string).collect(),
        }
    }

    pub fn parse(&self, registry: &mut Registry) -> Result<(Vec<Rule>, Vec<Atom>), GenError> {
        let rules = self
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| parse_rule_with_id(r, registry, &format!("r{}", i + 1)))
            .collect::<Result<_, _>>()?;
        let facts = self
            .facts
            .iter()
            .map(|f| parse_fact(f, registry))
            .collect::<Result<_, _>>()?;
        Ok((rules, facts))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub rule_ids: Vec<String>,
    pub hyp_class: String,
    pub depth: usize,
    pub triggered_count: usize,
    pub symbolic_context: SymbolicContext,
    pub symbolic_hypothesis: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// One JSONL line of a dataset. Unknown fields survive a read/write round trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub context: String,
    pub hypothesis: String,
    pub label: bool,
    pub weight: f64,
    pub meta: RecordMeta,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Example {
    pub fn to_record(
        &self,
        templates: &TemplateRegistry,
        registry: &Registry,
    ) -> Result<ExampleRecord, GenError> {
        Ok(ExampleRecord {
            id: self.id.clone(),
            context: templates.context(registry, &self.rules, &self.facts, None)?,
            hypothesis: templates.fact(registry, &self.hypothesis)?,
            label: self.label,
            weight: self.weight,
            meta: RecordMeta {
                rule_ids: self.meta.rule_ids.clone(),
                hyp_class: self.meta.hyp_class.clone(),
                depth: self.meta.depth,
                triggered_count: self.meta.triggered_count,
                symbolic_context: SymbolicContext::from_parts(&self.rules, &self.facts),
                symbolic_hypothesis: self.hypothesis.to_string(),
                extra: Default::default(),
            },
            extra: Default::default(),
        })
    }
}

/// Outcome of re-deriving every stored weight.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub checked: usize,
    /// Ids whose stored weight or label differs from the recomputed one.
    pub mismatches: Vec<String>,
    /// Ids violating a hypothesis-class weight law.
    pub law_violations: Vec<String>,
    /// Number of examples a class law applied to.
    pub law_checked: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.law_violations.is_empty()
    }
}

fn class_law(class: &str) -> Option<f64> {
    match class.trim_start_matches("chain-") {
        "h1" | "h6" => Some(1.0),
        "h2" | "h5" => Some(0.0),
        _ => None,
    }
}

/// Recomputes each record's weight from its symbolic context and checks the class laws:
/// h1 and h6 weigh 1, h2 and h5 weigh 0, and a conclusion plus its negated alteration
/// weigh 1 together.
pub fn audit(
    records: &[ExampleRecord],
    registry: &Registry,
    budget: usize,
) -> Result<AuditReport, GenError> {
    let mut by_context: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = serde_json::to_string(&r.meta.symbolic_context)?;
        by_context.entry(key).or_default().push(i);
    }
    let reasoner = Reasoner::new(budget);
    let outcomes: Vec<AuditReport> = by_context
        .into_par_iter()
        .map(|(_, idx)| -> Result<AuditReport, GenError> {
            let mut reg = registry.clone();
            let ctx = &records[idx[0]].meta.symbolic_context;
            let (rules, facts) = ctx.parse(&mut reg)?;
            let program = ground(&rules, &reg, &facts)?;
            let marg = reasoner.marginals(&program)?;
            let mut rep = AuditReport::default();
            let mut conclusions: HashMap<(usize, &str), (Atom, f64)> = HashMap::new();
            let mut alterations: Vec<(usize, Atom, f64, &str)> = Vec::new();
            for &i in &idx {
                let r = &records[i];
                let h = parse_fact(&r.meta.symbolic_hypothesis, &mut reg)?;
                let w = marg.hypothesis_weight(&reg, &h)?;
                rep.checked += 1;
                if w != r.weight || label_for(w) != r.label {
                    rep.mismatches.push(r.id.clone());
                }
                let class = r.meta.hyp_class.as_str();
                if let Some(expected) = class_law(class) {
                    rep.law_checked += 1;
                    if r.weight != expected {
                        rep.law_violations.push(r.id.clone());
                    }
                }
                let stem = class.trim_start_matches("chain-");
                if stem == "h3" {
                    conclusions.insert((r.meta.depth, class), (h, r.weight));
                } else if stem == "h4" {
                    alterations.push((r.meta.depth, h, r.weight, &r.id));
                }
            }
            for (depth, alt, w, id) in alterations {
                let key = conclusions.keys().find(|(d, _)| *d == depth).copied();
                if let Some((h, hw)) = key.and_then(|k| conclusions.get(&k)) {
                    if reg.negate(h)? == alt {
                        rep.law_checked += 1;
                        if (hw + w - 1.0).abs() > 1e-9 {
                            rep.law_violations.push(id.to_string());
                        }
                    }
                }
            }
            Ok(rep)
        })
        .collect::<Result<_, _>>()?;
    let mut total = AuditReport::default();
    for o in outcomes {
        total.checked += o.checked;
        total.law_checked += o.law_checked;
        total.mismatches.extend(o.mismatches);
        total.law_violations.extend(o.law_violations);
    }
    total.mismatches.sort();
    total.law_violations.sort();
    Ok(total)
}
