//! Synthetic English rendering of facts, rules and contexts, and prompt encoding.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::RngCore;
use thiserror::Error;

use crate::lpmln::{ground, GroundError, Origin};
use crate::rules::{Atom, Comparison, Registry, Rule, RuleError, Term};

const SUBJECT: &str = "{subject}";
const OBJECT: &str = "{object}";
const NOT: &str = "not";

pub const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerbalizeError {
    #[error("template line {line}: {message}")]
    Template { line: usize, message: String },
    #[error("no template for predicate `{0}`")]
    MissingTemplate(String),
    #[error("rule `{rule}` needs more than {max} ordinals for type `{ty}`")]
    TooManyVariables {
        rule: String,
        ty: String,
        max: usize,
    },
    #[error("prompt parts must be nonempty")]
    EmptyPrompt,
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Ground(#[from] GroundError),
}

#[derive(Clone, Debug, PartialEq)]
struct Template {
    pos: String,
    neg: String,
    head_pos: Option<String>,
    head_neg: Option<String>,
}

fn fill(pattern: &str, subject: &str, object: &str) -> String {
    pattern.replace(SUBJECT, subject).replace(OBJECT, object)
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn check_slots(pattern: &str) -> Result<(), String> {
    let rest = pattern.replace(SUBJECT, "").replace(OBJECT, "");
    if pattern.matches(SUBJECT).count() != 1 || pattern.matches(OBJECT).count() != 1 {
        return Err(format!(
            "`{pattern}` must contain {SUBJECT} and {OBJECT} exactly once"
        ));
    }
    if rest.contains('{') || rest.contains('}') {
        return Err(format!("`{pattern}` has an unknown slot"));
    }
    Ok(())
}

/// True when `neg` equals `pos` with a single `not` token inserted.
fn is_negation_of(pos: &str, neg: &str) -> bool {
    let p: Vec<&str> = pos.split_whitespace().collect();
    let n: Vec<&str> = neg.split_whitespace().collect();
    n.len() == p.len() + 1
        && (0..n.len()).any(|i| n[i] == NOT && n[..i] == p[..i] && n[i + 1..] == p[i..])
}

/// Sentence patterns per predicate plus the nouns and ordinals used in rules.
#[derive(Clone, Debug)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, Template>,
    nouns: BTreeMap<String, String>,
}

impl TemplateRegistry {
    /// Parses `predicate | positive | negated [| head positive | head negated]` lines.
    ///
    /// Patterns use `{subject}` and `{object}` slots. Each negated pattern must be its positive
    /// pattern with one `not` inserted, and no two patterns may coincide.
    pub fn parse(text: &str) -> Result<Self, VerbalizeError> {
        let mut templates = BTreeMap::new();
        let mut seen: HashMap<String, String> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| VerbalizeError::Template {
                line: idx + 1,
                message,
            };
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            if cols.len() != 3 && cols.len() != 5 {
                return Err(err("expected 3 or 5 `|`-separated columns".into()));
            }
            let pred = cols[0].to_string();
            for pair in cols[1..].chunks(2) {
                for p in pair {
                    check_slots(p).map_err(err)?;
                }
                if !is_negation_of(pair[0], pair[1]) {
                    return Err(err(format!(
                        "`{}` is not `{}` with one `not` inserted",
                        pair[1], pair[0]
                    )));
                }
            }
            for p in [cols[1], cols[2]] {
                if let Some(other) = seen.insert(p.to_string(), pred.clone()) {
                    return Err(err(format!("pattern `{p}` already used by `{other}`")));
                }
            }
            let t = Template {
                pos: cols[1].to_string(),
                neg: cols[2].to_string(),
                head_pos: cols.get(3).map(|s| s.to_string()),
                head_neg: cols.get(4).map(|s| s.to_string()),
            };
            if templates.insert(pred.clone(), t).is_some() {
                return Err(err(format!("predicate `{pred}` listed twice")));
            }
        }
        Ok(TemplateRegistry {
            templates,
            nouns: BTreeMap::new(),
        })
    }

    /// Overrides the noun used in ordinal phrases for a type (defaults to the type name).
    pub fn with_noun(mut self, ty: &str, noun: &str) -> Self {
        self.nouns.insert(ty.to_string(), noun.to_string());
        self
    }

    fn noun<'a>(&'a self, ty: &'a str) -> &'a str {
        self.nouns.get(ty).map_or(ty, String::as_str)
    }

    /// Fails if some relational predicate of `registry` has no template.
    pub fn check_covers(&self, registry: &Registry) -> Result<(), VerbalizeError> {
        for sig in registry.positive_predicates() {
            if !self.templates.contains_key(&sig.name) {
                return Err(VerbalizeError::MissingTemplate(sig.name.clone()));
            }
        }
        Ok(())
    }

    fn pattern(
        &self,
        registry: &Registry,
        predicate: &str,
        head: bool,
    ) -> Result<&str, VerbalizeError> {
        let negative = registry.is_negative(predicate);
        let base = registry.base_of(predicate)?;
        let t = self
            .templates
            .get(base)
            .ok_or_else(|| VerbalizeError::MissingTemplate(predicate.to_string()))?;
        let pick = match (head, negative) {
            (true, false) => t.head_pos.as_ref().unwrap_or(&t.pos),
            (true, true) => t.head_neg.as_ref().unwrap_or(&t.neg),
            (false, false) => &t.pos,
            (false, true) => &t.neg,
        };
        Ok(pick)
    }

    /// Lower-case clause for a ground atom, e.g. `the child of Eve is David`.
    pub fn clause(&self, registry: &Registry, atom: &Atom) -> Result<String, VerbalizeError> {
        let render = |t: &Term| match t {
            Term::Const(c) | Term::Var(c) => c.clone(),
        };
        let pattern = self.pattern(registry, &atom.predicate, false)?;
        Ok(fill(
            pattern,
            &render(&atom.args[0]),
            &render(&atom.args[1]),
        ))
    }

    /// A fact or hypothesis as a sentence: `The child of Eve is David.`
    pub fn fact(&self, registry: &Registry, atom: &Atom) -> Result<String, VerbalizeError> {
        Ok(format!("{}.", capitalize(&self.clause(registry, atom)?)))
    }

    /// A rule as an `If ..., then ....` sentence with ordinal variable phrases.
    ///
    /// Variables are numbered per type, head variables first and then the remaining body
    /// variables in order of appearance.
    pub fn rule(&self, registry: &Registry, rule: &Rule) -> Result<String, VerbalizeError> {
        let types = rule.variable_types(registry)?;
        let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
        let mut phrases: BTreeMap<String, String> = BTreeMap::new();
        for var in rule.variables_head_first() {
            let ty = types[&var].as_str();
            let k = counters.entry(ty).or_insert(0);
            let ord = ORDINALS
                .get(*k)
                .ok_or_else(|| VerbalizeError::TooManyVariables {
                    rule: rule.id.clone(),
                    ty: ty.to_string(),
                    max: ORDINALS.len(),
                })?;
            *k += 1;
            phrases.insert(var, format!("the {ord} {}", self.noun(ty)));
        }
        let phrase = |t: &Term| match t {
            Term::Var(v) => phrases[v].clone(),
            Term::Const(c) => c.clone(),
        };
        let mut body = Vec::new();
        for atom in &rule.body {
            let (s, o) = (phrase(&atom.args[0]), phrase(&atom.args[1]));
            body.push(match registry.comparison(&atom.predicate) {
                Some(Comparison::Less) => format!("{s} is less than {o}"),
                Some(Comparison::Greater) => format!("{s} is greater than {o}"),
                None => fill(self.pattern(registry, &atom.predicate, false)?, &s, &o),
            });
        }
        let head = fill(
            self.pattern(registry, &rule.head.predicate, true)?,
            &phrase(&rule.head.args[0]),
            &phrase(&rule.head.args[1]),
        );
        Ok(format!("If {}, then {}.", body.join(", and "), head))
    }

    /// Renders a context. Facts that trigger no rule come first, then each rule followed by
    /// the facts that first trigger it, all in their original order. With `shuffle`, the
    /// resulting sentences are permuted.
    pub fn context(
        &self,
        registry: &Registry,
        rules: &[Rule],
        facts: &[Atom],
        shuffle: Option<&mut dyn RngCore>,
    ) -> Result<String, VerbalizeError> {
        let program = ground(rules, registry, facts)?;
        let mut owner: Vec<Option<usize>> = vec![None; facts.len()];
        let position: HashMap<&Atom, usize> = facts
            .iter()
            .enumerate()
            .rev()
            .map(|(i, f)| (f, i))
            .collect();
        for inst in program.instances() {
            if let Origin::Rule(r) = inst.origin {
                for &b in &inst.body {
                    if let Some(&i) = position.get(program.atom(b)) {
                        owner[i] = Some(owner[i].map_or(r, |o| o.min(r)));
                    }
                }
            }
        }
        let mut sentences = Vec::new();
        for (i, f) in facts.iter().enumerate() {
            if owner[i].is_none() {
                sentences.push(self.fact(registry, f)?);
            }
        }
        for (r, rule) in rules.iter().enumerate() {
            sentences.push(self.rule(registry, rule)?);
            for (i, f) in facts.iter().enumerate() {
                if owner[i] == Some(r) {
                    sentences.push(self.fact(registry, f)?);
                }
            }
        }
        if let Some(rng) = shuffle {
            sentences.shuffle(rng);
        }
        Ok(sentences.join(" "))
    }
}

/// Context and hypothesis joined with boundary markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prompt {
    pub context_text: String,
    pub hypothesis_text: String,
    pub encoded: String,
}

const OPEN: &str = "<s>";
const SEP: &str = "</s></s>";
const CLOSE: &str = "</s>";

/// `<s>context</s></s>hypothesis</s>`.
pub fn assemble_prompt(
    context_text: &str,
    hypothesis_text: &str,
) -> Result<Prompt, VerbalizeError> {
    if context_text.is_empty() || hypothesis_text.is_empty() {
        return Err(VerbalizeError::EmptyPrompt);
    }
    Ok(Prompt {
        context_text: context_text.to_string(),
        hypothesis_text: hypothesis_text.to_string(),
        encoded: format!("{OPEN}{context_text}{SEP}{hypothesis_text}{CLOSE}"),
    })
}

impl Prompt {
    /// Recovers the two parts of an encoded prompt.
    pub fn decode(encoded: &str) -> Option<Prompt> {
        let inner = encoded.strip_prefix(OPEN)?.strip_suffix(CLOSE)?;
        let (ctx, hyp) = inner.split_once(SEP)?;
        assemble_prompt(ctx, hyp).ok()
    }
}
