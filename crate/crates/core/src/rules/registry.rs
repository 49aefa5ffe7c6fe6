//! Predicate metadata: argument types, symmetry and the positive/negative pairing.

use std::collections::BTreeMap;

use rand::Rng;

use super::{Atom, RuleError, Term};

/// Prefix that turns a positive predicate name into its negated form (`spouse` -> `negspouse`).
pub const NEG_PREFIX: &str = "neg";

/// Type name used for the argument slots of the builtin comparison predicates.
pub const NUMBER_TYPE: &str = "number";

/// Builtin numeric comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparison {
    Less,
    Greater,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Less => "<",
            Comparison::Greater => ">",
        }
    }

    pub fn holds(self, left: i64, right: i64) -> bool {
        match self {
            Comparison::Less => left < right,
            Comparison::Greater => left > right,
        }
    }
}

/// Signature of a binary predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateSig {
    pub name: String,
    pub arg_types: [String; 2],
    pub symmetric: bool,
    /// Name of the positive counterpart when this is a negative form.
    pub negative_of: Option<String>,
    pub comparison: Option<Comparison>,
}

impl PredicateSig {
    pub fn arity(&self) -> usize {
        2
    }

    pub fn is_negative_form(&self) -> bool {
        self.negative_of.is_some()
    }

    pub fn is_comparison(&self) -> bool {
        self.comparison.is_some()
    }
}

/// All predicates known to a rule corpus.
///
/// Every relational predicate is registered together with its complementary form, so `negate`
/// is total on relational atoms. Comparison predicates `<` and `>` are always present.
#[derive(Clone, Debug)]
pub struct Registry {
    preds: BTreeMap<String, PredicateSig>,
    complement: BTreeMap<String, String>,
    auto_register: bool,
}

/// Default argument type for predicates created by an auto-registering registry.
pub const ENTITY_TYPE: &str = "entity";

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        let mut preds = BTreeMap::new();
        for cmp in [Comparison::Less, Comparison::Greater] {
            preds.insert(
                cmp.symbol().to_string(),
                PredicateSig {
                    name: cmp.symbol().to_string(),
                    arg_types: [NUMBER_TYPE.to_string(), NUMBER_TYPE.to_string()],
                    symmetric: false,
                    negative_of: None,
                    comparison: Some(cmp),
                },
            );
        }
        Registry {
            preds,
            complement: BTreeMap::new(),
            auto_register: false,
        }
    }

    /// A registry that registers unseen predicates on first use as non-symmetric
    /// `entity x entity` predicates (negative forms are recognised by the `neg` prefix).
    pub fn auto_registering() -> Self {
        Registry {
            auto_register: true,
            ..Self::new()
        }
    }

    pub fn is_auto_registering(&self) -> bool {
        self.auto_register
    }

    /// Parses the registry file format: one predicate per line,
    /// `name type1 type2 [symmetric] [negform-of]`, `#` comments.
    ///
    /// The fourth column is `yes`/`true`/`symmetric` or `no`/`false`/`-`. The fifth column names
    /// the positive predicate when the line declares an explicit negative form. Negative forms
    /// that are not declared are derived as `neg<name>`.
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut registry = Registry::new();
        let mut negatives = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() < 3 || cols.len() > 5 {
                return Err(RuleError::Registry(format!(
                    "line {lineno}: expected `name type1 type2 [symmetric] [negform-of]`"
                )));
            }
            let symmetric = match cols.get(3).copied() {
                None => false,
                Some(flag) => parse_flag(flag).ok_or_else(|| {
                    RuleError::Registry(format!("line {lineno}: bad symmetry flag `{flag}`"))
                })?,
            };
            let base = cols.get(4).copied().filter(|b| *b != "-");
            let entry = (
                cols[0].to_string(),
                [cols[1].to_string(), cols[2].to_string()],
                symmetric,
            );
            match base {
                Some(base) => negatives.push((lineno, entry, base.to_string())),
                None => {
                    if registry.preds.contains_key(cols[0]) {
                        return Err(RuleError::Registry(format!(
                            "line {lineno}: predicate `{}` declared twice",
                            cols[0]
                        )));
                    }
                    registry.insert_positive(entry.0, entry.1, entry.2);
                }
            }
        }
        for (lineno, (name, types, symmetric), base) in negatives {
            registry
                .declare_negative(&name, &base, types, symmetric)
                .map_err(|e| RuleError::Registry(format!("line {lineno}: {e}")))?;
        }
        Ok(registry)
    }

    /// Declares a positive relational predicate and its default negative form.
    pub fn declare(
        &mut self,
        name: &str,
        arg_types: [&str; 2],
        symmetric: bool,
    ) -> Result<&PredicateSig, RuleError> {
        if self.preds.contains_key(name) {
            return Err(RuleError::Registry(format!(
                "predicate `{name}` declared twice"
            )));
        }
        self.insert_positive(
            name.to_string(),
            [arg_types[0].to_string(), arg_types[1].to_string()],
            symmetric,
        );
        Ok(&self.preds[name])
    }

    fn insert_positive(&mut self, name: String, arg_types: [String; 2], symmetric: bool) {
        let neg = format!("{NEG_PREFIX}{name}");
        self.preds.insert(
            neg.clone(),
            PredicateSig {
                name: neg.clone(),
                arg_types: arg_types.clone(),
                symmetric,
                negative_of: Some(name.clone()),
                comparison: None,
            },
        );
        self.complement.insert(neg.clone(), name.clone());
        self.complement.insert(name.clone(), neg);
        self.preds.insert(
            name.clone(),
            PredicateSig {
                name,
                arg_types,
                symmetric,
                negative_of: None,
                comparison: None,
            },
        );
    }

    /// Replaces the derived negative form of `base` by an explicitly named one.
    fn declare_negative(
        &mut self,
        name: &str,
        base: &str,
        arg_types: [String; 2],
        symmetric: bool,
    ) -> Result<(), RuleError> {
        let base_sig = self
            .preds
            .get(base)
            .ok_or_else(|| RuleError::Registry(format!("unknown base predicate `{base}`")))?;
        if base_sig.is_negative_form() || base_sig.is_comparison() {
            return Err(RuleError::Registry(format!(
                "`{base}` cannot have a negative form"
            )));
        }
        if base_sig.arg_types != arg_types || base_sig.symmetric != symmetric {
            return Err(RuleError::Registry(format!(
                "negative form `{name}` must share types and symmetry with `{base}`"
            )));
        }
        if let Some(existing) = self.preds.get(name) {
            if existing.negative_of.as_deref() != Some(base) {
                return Err(RuleError::Registry(format!(
                    "predicate `{name}` declared twice"
                )));
            }
        }
        let old = self.complement[base].clone();
        self.preds.remove(&old);
        self.complement.remove(&old);
        self.preds.insert(
            name.to_string(),
            PredicateSig {
                name: name.to_string(),
                arg_types,
                symmetric,
                negative_of: Some(base.to_string()),
                comparison: None,
            },
        );
        self.complement.insert(base.to_string(), name.to_string());
        self.complement.insert(name.to_string(), base.to_string());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&PredicateSig> {
        self.preds.get(name)
    }

    /// Looks a predicate up, registering it first when the registry is auto-registering.
    pub fn resolve(&mut self, name: &str) -> Result<&PredicateSig, RuleError> {
        if !self.preds.contains_key(name) {
            if !self.auto_register {
                return Err(RuleError::UnknownPredicate(name.to_string()));
            }
            let base = name
                .strip_prefix(NEG_PREFIX)
                .filter(|b| !b.is_empty())
                .unwrap_or(name);
            if !self.preds.contains_key(base) {
                self.insert_positive(
                    base.to_string(),
                    [ENTITY_TYPE.to_string(), ENTITY_TYPE.to_string()],
                    false,
                );
            }
            if !self.preds.contains_key(name) {
                return Err(RuleError::UnknownPredicate(name.to_string()));
            }
        }
        Ok(&self.preds[name])
    }

    pub fn require(&self, name: &str) -> Result<&PredicateSig, RuleError> {
        self.preds
            .get(name)
            .ok_or_else(|| RuleError::UnknownPredicate(name.to_string()))
    }

    pub fn predicates(&self) -> impl Iterator<Item = &PredicateSig> {
        self.preds.values()
    }

    /// Relational predicates in positive form.
    pub fn positive_predicates(&self) -> impl Iterator<Item = &PredicateSig> {
        self.preds
            .values()
            .filter(|p| !p.is_comparison() && !p.is_negative_form())
    }

    /// Name of the complementary predicate form (`p` <-> `negp`).
    pub fn complement_of(&self, name: &str) -> Result<&str, RuleError> {
        let sig = self.require(name)?;
        if sig.is_comparison() {
            return Err(RuleError::ComparisonNegation(name.to_string()));
        }
        Ok(self.complement[name].as_str())
    }

    /// Positive base name of a relational predicate (identity on positive forms).
    pub fn base_of<'a>(&'a self, name: &'a str) -> Result<&'a str, RuleError> {
        let sig = self.require(name)?;
        Ok(sig.negative_of.as_deref().unwrap_or(name))
    }

    pub fn is_symmetric(&self, name: &str) -> bool {
        self.preds.get(name).is_some_and(|p| p.symmetric)
    }

    pub fn is_negative(&self, name: &str) -> bool {
        self.preds.get(name).is_some_and(|p| p.is_negative_form())
    }

    pub fn comparison(&self, name: &str) -> Option<Comparison> {
        self.preds.get(name).and_then(|p| p.comparison)
    }

    /// The same atom under the complementary predicate form.
    pub fn negate(&self, atom: &Atom) -> Result<Atom, RuleError> {
        let other = self.complement_of(&atom.predicate)?;
        Ok(Atom {
            predicate: other.to_string(),
            args: atom.args.clone(),
        })
    }

    /// Counter-hypothesis for a ground atom: negation for symmetric predicates, otherwise
    /// negation when `draw > 0.5` and subject/object swap when `draw <= 0.5`.
    pub fn alter_with_draw(&self, atom: &Atom, draw: f64) -> Result<Atom, RuleError> {
        let sig = self.require(&atom.predicate)?;
        if sig.is_comparison() {
            return Err(RuleError::ComparisonNegation(atom.predicate.clone()));
        }
        if sig.symmetric || draw > 0.5 {
            self.negate(atom)
        } else {
            let [s, o] = atom.args.clone();
            Ok(Atom {
                predicate: atom.predicate.clone(),
                args: [o, s],
            })
        }
    }

    /// [`Registry::alter_with_draw`] with a uniform draw taken from `rng`.
    ///
    /// Symmetric predicates consume no randomness.
    pub fn alter<R: Rng + ?Sized>(&self, atom: &Atom, rng: &mut R) -> Result<Atom, RuleError> {
        let sig = self.require(&atom.predicate)?;
        if sig.is_comparison() {
            return Err(RuleError::ComparisonNegation(atom.predicate.clone()));
        }
        if sig.symmetric {
            return self.negate(atom);
        }
        let draw: f64 = rng.gen();
        self.alter_with_draw(atom, draw)
    }

    /// Serialises the registry back to the file format (positive forms with derived negatives
    /// are written as a single line).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for sig in self.positive_predicates() {
            out.push_str(&format!(
                "{} {} {} {}\n",
                sig.name,
                sig.arg_types[0],
                sig.arg_types[1],
                if sig.symmetric { "yes" } else { "no" }
            ));
        }
        for sig in self.preds.values().filter(|p| p.is_negative_form()) {
            let base = sig.negative_of.as_deref().unwrap_or_default();
            if sig.name != format!("{NEG_PREFIX}{base}") {
                out.push_str(&format!(
                    "{} {} {} {} {}\n",
                    sig.name,
                    sig.arg_types[0],
                    sig.arg_types[1],
                    if sig.symmetric { "yes" } else { "no" },
                    base
                ));
            }
        }
        out
    }

    /// Argument types of a relational atom's slots.
    pub fn slot_types(&self, atom: &Atom) -> Result<[&str; 2], RuleError> {
        let sig = self.require(&atom.predicate)?;
        Ok([sig.arg_types[0].as_str(), sig.arg_types[1].as_str()])
    }
}

fn parse_flag(flag: &str) -> Option<bool> {
    match flag.to_ascii_lowercase().as_str() {
        "yes" | "y" | "true" | "1" | "symmetric" | "sym" => Some(true),
        "no" | "n" | "false" | "0" | "-" => Some(false),
        _ => None,
    }
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Convenience for tests and generators: ground atom from predicate and two constants.
pub fn fact(predicate: &str, subject: &str, object: &str) -> Atom {
    Atom {
        predicate: predicate.to_string(),
        args: [Term::constant(subject), Term::constant(object)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn family() -> Registry {
        Registry::parse(
            "# family\nchild person person no\nparent person person no\nspouse person person yes\n",
        )
        .unwrap()
    }

    #[test]
    fn derived_negative_forms() {
        let reg = family();
        let neg = reg.get("negspouse").unwrap();
        assert!(neg.symmetric);
        assert_eq!(neg.negative_of.as_deref(), Some("spouse"));
        assert_eq!(reg.complement_of("negchild").unwrap(), "child");
        assert!(reg.get("<").unwrap().is_comparison());
    }

    #[test]
    fn explicit_negative_form() {
        let reg =
            Registry::parse("founder company person no\nnotFounder company person no founder\n")
                .unwrap();
        assert_eq!(reg.complement_of("founder").unwrap(), "notFounder");
        assert!(reg.get("negfounder").is_none());
    }

    #[test]
    fn negative_form_must_share_metadata() {
        let err = Registry::parse("spouse person person yes\nnotSpouse person person no spouse\n");
        assert!(matches!(err, Err(RuleError::Registry(_))));
        let err = Registry::parse("x person person\nnegy person person no negx\n");
        assert!(err.is_err());
    }

    #[test]
    fn negate_is_an_involution() {
        let reg = family();
        let a = fact("child", "Joe", "Garry");
        let n = reg.negate(&a).unwrap();
        assert_eq!(n, fact("negchild", "Joe", "Garry"));
        assert_eq!(reg.negate(&n).unwrap(), a);
    }

    #[test]
    fn negate_rejects_comparisons() {
        let reg = family();
        let cmp = fact("<", "1903", "1971");
        assert!(matches!(
            reg.negate(&cmp),
            Err(RuleError::ComparisonNegation(_))
        ));
        assert!(reg.alter_with_draw(&cmp, 0.9).is_err());
    }

    #[test]
    fn alter_branches() {
        let reg = family();
        let spouse = fact("spouse", "Alice", "Bob");
        for draw in [0.0, 0.3, 0.9] {
            assert_eq!(
                reg.alter_with_draw(&spouse, draw).unwrap(),
                fact("negspouse", "Alice", "Bob")
            );
        }
        let child = fact("child", "Eve", "Bob");
        assert_eq!(
            reg.alter_with_draw(&child, 0.7).unwrap(),
            fact("negchild", "Eve", "Bob")
        );
        assert_eq!(
            reg.alter_with_draw(&child, 0.5).unwrap(),
            fact("child", "Bob", "Eve")
        );
        assert_eq!(
            reg.alter_with_draw(&child, 0.2).unwrap(),
            fact("child", "Bob", "Eve")
        );
    }

    #[test]
    fn alter_symmetric_ignores_rng() {
        let reg = family();
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let spouse = fact("spouse", "Alice", "Bob");
        reg.alter(&spouse, &mut a).unwrap();
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn auto_registration() {
        let mut reg = Registry::auto_registering();
        assert_eq!(
            reg.resolve("negfoo").unwrap().negative_of.as_deref(),
            Some("foo")
        );
        assert!(reg.get("foo").is_some());
        let mut strict = Registry::new();
        assert!(matches!(
            strict.resolve("foo"),
            Err(RuleError::UnknownPredicate(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let reg = Registry::parse("founder company person no\nnotFounder company person no founder\nspouse person person yes\n").unwrap();
        let again = Registry::parse(&reg.to_text()).unwrap();
        let names = |r: &Registry| r.predicates().cloned().collect::<Vec<_>>();
        assert_eq!(names(&reg), names(&again));
    }
}
