//! Symbolic vocabulary: terms, atoms, weighted Horn rules and the rule/fact DSL.
//!
//! Surface syntax, one rule per line:
//!
//! ```text
//! 0.7 :: child(A,C) & parent(C,B) -> spouse(A,B)
//! r5: 0.99 :: birthYear(B,D) & foundYear(A,C) & <(C,D) -> negfounder(A,B)
//! ```
//!
//! A variable is a single uppercase ASCII letter optionally followed by digits (`A`, `X2`).
//! Anything else in argument position is a constant: a bare identifier (`Eve`), an integer
//! (`1903`) or a double-quoted string (`"E. Musk"`, `"A"`).

mod parse;
mod registry;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

pub use parse::{parse_atom, parse_fact, parse_rule, parse_rule_with_id};
pub use registry::{
    fact, Comparison, PredicateSig, Registry, ENTITY_TYPE, NEG_PREFIX, NUMBER_TYPE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error(
        "variable `{0}` in rule head (or comparison) does not occur in a relational body atom"
    )]
    UnsafeVariable(String),
    #[error("confidence {0} outside (0, 1]")]
    Confidence(f64),
    #[error("comparison atom `{0}` cannot be a rule head")]
    ComparisonHead(String),
    #[error("fact `{atom}` contains unbound variable `{var}`")]
    UnboundVariable { atom: String, var: String },
    #[error("comparison predicate `{0}` has no negated form")]
    ComparisonNegation(String),
    #[error("variable `{var}` used with types `{first}` and `{second}`")]
    VariableType {
        var: String,
        first: String,
        second: String,
    },
    #[error("duplicate rule id `{0}`")]
    DuplicateRuleId(String),
    #[error("weight is only defined for confidences strictly inside (0, 1), got {0}")]
    WeightDomain(f64),
    #[error("registry: {0}")]
    Registry(String),
}

impl RuleError {
    /// Moves a syntax error to a line of a multi-line file.
    pub fn at_line(self, line: usize) -> Self {
        match self {
            RuleError::Syntax {
                column, message, ..
            } => RuleError::Syntax {
                line,
                column,
                message,
            },
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn constant(value: impl Into<String>) -> Self {
        Term::Const(value.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn as_const(&self) -> Option<&str> {
        match self {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

/// True when `s` would be read as a variable by the parser.
pub fn looks_like_variable(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase()) && chars.all(|c| c.is_ascii_digit())
}

fn is_bare_constant(s: &str) -> bool {
    if s.is_empty() || looks_like_variable(s) {
        return false;
    }
    if let Some(digits) = s.strip_prefix('-') {
        return !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit());
    }
    let mut chars = s.chars();
    let first = chars.next().unwrap();
    if first.is_ascii_digit() {
        return s.chars().all(|c| c.is_ascii_digit());
    }
    (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) if is_bare_constant(c) => f.write_str(c),
            Term::Const(c) => {
                f.write_str("\"")?;
                for ch in c.chars() {
                    if ch == '"' || ch == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{ch}")?;
                }
                f.write_str("\"")
            }
        }
    }
}

/// A binary atom `pred(subject, object)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: [Term; 2],
}

impl Atom {
    pub fn new(predicate: impl Into<String>, subject: Term, object: Term) -> Self {
        Atom {
            predicate: predicate.into(),
            args: [subject, object],
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const(_)))
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }

    pub fn subject(&self) -> &Term {
        &self.args[0]
    }

    pub fn object(&self) -> &Term {
        &self.args[1]
    }

    /// Replaces variables bound in `subst`; unbound variables are left in place.
    pub fn substitute(&self, subst: &BTreeMap<String, String>) -> Atom {
        let map = |t: &Term| match t {
            Term::Var(v) => subst
                .get(v)
                .map(|c| Term::Const(c.clone()))
                .unwrap_or_else(|| t.clone()),
            Term::Const(_) => t.clone(),
        };
        Atom {
            predicate: self.predicate.clone(),
            args: [map(&self.args[0]), map(&self.args[1])],
        }
    }

    pub fn swapped(&self) -> Atom {
        Atom {
            predicate: self.predicate.clone(),
            args: [self.args[1].clone(), self.args[0].clone()],
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.predicate, self.args[0], self.args[1])
    }
}

/// A weighted Horn rule. Confidence `1.0` is a hard rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub id: String,
    pub confidence: f64,
    pub body: Vec<Atom>,
    pub head: Atom,
}

impl Rule {
    pub fn is_hard(&self) -> bool {
        self.confidence >= 1.0
    }

    /// Log-odds weight of a soft rule; `None` for hard rules.
    pub fn weight(&self) -> Option<f64> {
        if self.is_hard() {
            None
        } else {
            confidence_to_weight(self.confidence).ok()
        }
    }

    /// Variables in order of first appearance, head first.
    pub fn variables_head_first(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for atom in std::iter::once(&self.head).chain(self.body.iter()) {
            for v in atom.variables() {
                if !seen.iter().any(|s| s == v) {
                    seen.push(v.to_string());
                }
            }
        }
        seen
    }

    pub fn relational_body<'a>(
        &'a self,
        registry: &'a Registry,
    ) -> impl Iterator<Item = &'a Atom> + 'a {
        self.body
            .iter()
            .filter(move |a| registry.comparison(&a.predicate).is_none())
    }

    /// Type of every variable, inferred from relational atom slots.
    pub fn variable_types(
        &self,
        registry: &Registry,
    ) -> Result<BTreeMap<String, String>, RuleError> {
        let mut types = BTreeMap::<String, String>::new();
        for atom in self.body.iter().chain(std::iter::once(&self.head)) {
            let sig = registry.require(&atom.predicate)?;
            if sig.is_comparison() {
                continue;
            }
            for (term, ty) in atom.args.iter().zip(sig.arg_types.iter()) {
                if let Term::Var(v) = term {
                    match types.get(v) {
                        Some(prev) if prev != ty => {
                            return Err(RuleError::VariableType {
                                var: v.clone(),
                                first: prev.clone(),
                                second: ty.clone(),
                            })
                        }
                        Some(_) => {}
                        None => {
                            types.insert(v.clone(), ty.clone());
                        }
                    }
                }
            }
        }
        Ok(types)
    }

    /// Safety, confidence range and head checks.
    pub fn validate(&self, registry: &Registry) -> Result<(), RuleError> {
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(RuleError::Confidence(self.confidence));
        }
        let head_sig = registry.require(&self.head.predicate)?;
        if head_sig.is_comparison() {
            return Err(RuleError::ComparisonHead(self.head.to_string()));
        }
        let mut bound = HashSet::new();
        for atom in &self.body {
            if registry.require(&atom.predicate)?.is_comparison() {
                continue;
            }
            bound.extend(atom.variables());
        }
        for atom in &self.body {
            if registry.comparison(&atom.predicate).is_some() {
                if let Some(v) = atom.variables().find(|v| !bound.contains(v)) {
                    return Err(RuleError::UnsafeVariable(v.to_string()));
                }
            }
        }
        if let Some(v) = self.head.variables().find(|v| !bound.contains(v)) {
            return Err(RuleError::UnsafeVariable(v.to_string()));
        }
        if bound.is_empty()
            && self
                .body
                .iter()
                .all(|a| registry.comparison(&a.predicate).is_some())
        {
            return Err(RuleError::Syntax {
                line: 1,
                column: 1,
                message: "rule body needs at least one relational atom".into(),
            });
        }
        self.variable_types(registry)?;
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :: ", self.confidence)?;
        for (i, atom) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{atom}")?;
        }
        write!(f, " -> {}", self.head)
    }
}

/// Log-odds of a confidence: `ln(c / (1 - c))`.
///
/// A single soft rule with this weight, triggered once and unopposed, makes its head true with
/// probability exactly `c`. Hard rules (`c = 1`) never go through this map.
pub fn confidence_to_weight(c: f64) -> Result<f64, RuleError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(RuleError::WeightDomain(c));
    }
    Ok((c / (1.0 - c)).ln())
}

/// A rule corpus together with the predicate metadata it refers to.
#[derive(Clone, Debug)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub registry: Registry,
}

impl RuleSet {
    pub fn new(registry: Registry) -> Self {
        RuleSet {
            rules: Vec::new(),
            registry,
        }
    }

    pub fn push(&mut self, rule: Rule) -> Result<(), RuleError> {
        if self.rules.iter().any(|r| r.id == rule.id) {
            return Err(RuleError::DuplicateRuleId(rule.id));
        }
        rule.validate(&self.registry)?;
        self.rules.push(rule);
        Ok(())
    }

    /// Parses a corpus file: one rule per line, `#` comments and blank lines ignored.
    /// Rules without an explicit `id:` prefix are named `r<k>` by their position (1-based).
    pub fn parse_corpus(text: &str, registry: Registry) -> Result<Self, RuleError> {
        let mut set = RuleSet::new(registry);
        let mut count = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = registry::strip_comment(raw);
            if line.trim().is_empty() {
                continue;
            }
            count += 1;
            let default_id = format!("r{count}");
            let rule = parse_rule_with_id(line, &mut set.registry, &default_id)
                .map_err(|e| e.at_line(idx + 1))?;
            set.push(rule)?;
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn to_text(&self) -> String {
        self.rules
            .iter()
            .map(|r| format!("{}: {r}\n", r.id))
            .collect()
    }

    pub fn predicates_used(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .flat_map(|r| r.body.iter().chain(std::iter::once(&r.head)))
            .map(|a| a.predicate.as_str())
            .collect()
    }
}

/// Parses a facts file: one ground atom per line, `#` comments and blank lines ignored.
pub fn parse_facts(text: &str, registry: &mut Registry) -> Result<Vec<Atom>, RuleError> {
    let mut facts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = registry::strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        facts.push(parse_fact(line, registry).map_err(|e| e.at_line(idx + 1))?);
    }
    Ok(facts)
}
