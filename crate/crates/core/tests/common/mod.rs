#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use softhorn::lpmln::{ground, GroundProgram};
use softhorn::rules::{parse_rule, Atom, Registry, Rule};

pub const REGISTRY: &str =
    "p person person no\nq person person no\nr person person no\ns person person yes\n";

pub fn registry() -> Registry {
    Registry::parse(REGISTRY).unwrap()
}

/// Shape of a random program.
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    /// Allow hard rules.
    pub hard: bool,
    /// Allow negative-form facts and complementary fact pairs.
    pub conflicts: bool,
    pub max_base: usize,
}

pub struct RandomProgram {
    pub registry: Registry,
    pub rules: Vec<Rule>,
    pub facts: Vec<Atom>,
    pub program: GroundProgram,
}

const POSITIVE: [&str; 4] = ["p", "q", "r", "s"];
const CONSTANTS: [&str; 3] = ["a", "b", "c"];
const VARS: [&str; 3] = ["A", "B", "C"];

fn predicate(rng: &mut impl Rng, negative: bool) -> String {
    let p = POSITIVE.choose(rng).unwrap();
    if negative && rng.gen_bool(0.3) {
        format!("neg{p}")
    } else {
        p.to_string()
    }
}

fn rule_text(rng: &mut impl Rng, hard: bool) -> String {
    let len = rng.gen_range(1..=2);
    let mut used = Vec::new();
    let body: Vec<String> = (0..len)
        .map(|_| {
            let (x, y) = (*VARS.choose(rng).unwrap(), *VARS.choose(rng).unwrap());
            used.push(x);
            used.push(y);
            format!("{}({x},{y})", predicate(rng, true))
        })
        .collect();
    let head = format!(
        "{}({},{})",
        predicate(rng, true),
        used.choose(rng).unwrap(),
        used.choose(rng).unwrap()
    );
    let conf = if hard && rng.gen_bool(0.2) {
        "1.0".to_string()
    } else {
        format!("{:.3}", rng.gen_range(0.05..0.95))
    };
    format!("{conf} :: {} -> {head}", body.join(" & "))
}

fn random_fact(rng: &mut impl Rng, negative: bool) -> Atom {
    softhorn::rules::fact(
        &predicate(rng, negative),
        CONSTANTS.choose(rng).unwrap(),
        CONSTANTS.choose(rng).unwrap(),
    )
}

/// Draws until a program with at most `shape.max_base` atoms in its base comes up.
pub fn random_program(rng: &mut impl Rng, shape: Shape) -> RandomProgram {
    loop {
        let mut registry = registry();
        let rules: Vec<Rule> = (0..rng.gen_range(1..=3))
            .map(|_| parse_rule(&rule_text(rng, shape.hard), &mut registry).unwrap())
            .collect();
        let mut facts: Vec<Atom> = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let f = random_fact(rng, shape.conflicts);
            if facts.contains(&f) {
                continue;
            }
            let complement = registry.negate(&f).unwrap();
            if !shape.conflicts && facts.contains(&complement) {
                continue;
            }
            facts.push(f);
        }
        let program = ground(&rules, &registry, &facts).unwrap();
        if program.base_len() <= shape.max_base {
            return RandomProgram {
                registry,
                rules,
                facts,
                program,
            };
        }
    }
}
