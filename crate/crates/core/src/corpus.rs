//! Bundled predicate registry, templates and rule corpora.

use crate::rules::{parse_facts, Atom, Registry, RuleError, RuleSet};

pub const REGISTRY: &str = include_str!("../data/registry.txt");
pub const TEMPLATES: &str = include_str!("../data/templates.txt");
pub const SINGLE_RULES: &str = include_str!("../data/single_rules.txt");
pub const OVERLAP_RULES: &str = include_str!("../data/overlap_rules.txt");
pub const CHAIN_RULES: &str = include_str!("../data/chain_rules.txt");
pub const HOUSEHOLD_RULES: &str = include_str!("../data/household.rules");
pub const HOUSEHOLD_FACTS: &str = include_str!("../data/household.facts");

pub fn registry() -> Registry {
    Registry::parse(REGISTRY).expect("bundled registry is valid")
}

pub fn single_rules() -> RuleSet {
    RuleSet::parse_corpus(SINGLE_RULES, registry()).expect("bundled corpus is valid")
}

pub fn overlap_rules() -> RuleSet {
    RuleSet::parse_corpus(OVERLAP_RULES, registry()).expect("bundled corpus is valid")
}

pub fn chain_rules() -> RuleSet {
    RuleSet::parse_corpus(CHAIN_RULES, registry()).expect("bundled corpus is valid")
}

/// The four-rule, four-fact example about Anne, Mike, Mark and Laure.
pub fn household() -> Result<(RuleSet, Vec<Atom>), RuleError> {
    let mut rules = RuleSet::parse_corpus(HOUSEHOLD_RULES, registry())?;
    let facts = parse_facts(HOUSEHOLD_FACTS, &mut rules.registry)?;
    Ok((rules, facts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_corpora_parse() {
        assert_eq!(single_rules().rules.len(), 16);
        assert_eq!(overlap_rules().rules.len(), 5);
        assert_eq!(chain_rules().rules.len(), 20);
        let (rules, facts) = household().unwrap();
        assert_eq!((rules.rules.len(), facts.len()), (4, 4));
    }
}
