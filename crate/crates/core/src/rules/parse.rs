//! Recursive-descent parser for the rule and fact DSL.

use super::{looks_like_variable, Atom, Registry, Rule, RuleError, Term};

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    fn column(&self) -> usize {
        self.src[..self.pos].chars().count() + 1
    }

    fn error(&self, message: impl Into<String>) -> RuleError {
        RuleError::Syntax {
            line: 1,
            column: self.column(),
            message: message.into(),
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), RuleError> {
        if self.eat(token) {
            Ok(())
        } else {
            let found = self
                .peek()
                .map_or("end of input".to_string(), |c| format!("`{c}`"));
            Err(self.error(format!("expected `{token}`, found {found}")))
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                self.bump();
            }
            _ => return None,
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Some(&self.src[start..self.pos])
    }

    fn number(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some('-') {
            self.bump();
        }
        let digits = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.pos == digits {
            self.pos = start;
            return None;
        }
        Some(&self.src[start..self.pos])
    }

    fn decimal(&mut self) -> Result<f64, RuleError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '-' || c == '+')
        {
            self.bump();
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.error(format!("expected a confidence value, found `{text}`"))
        })
    }

    fn quoted(&mut self) -> Result<String, RuleError> {
        self.expect("\"")?;
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string constant")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some(c) => out.push(c),
                    None => return Err(self.error("unterminated string constant")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn term(&mut self) -> Result<Term, RuleError> {
        self.skip_ws();
        match self.peek() {
            Some('"') => Ok(Term::Const(self.quoted()?)),
            Some(c) if c.is_ascii_digit() || c == '-' => self
                .number()
                .map(|n| Term::Const(n.to_string()))
                .ok_or_else(|| self.error("expected an integer")),
            _ => {
                let id = self
                    .ident()
                    .ok_or_else(|| self.error("expected a variable or constant"))?;
                if looks_like_variable(id) {
                    Ok(Term::Var(id.to_string()))
                } else {
                    Ok(Term::Const(id.to_string()))
                }
            }
        }
    }

    fn atom(&mut self, registry: &mut Registry) -> Result<Atom, RuleError> {
        self.skip_ws();
        let start = self.pos;
        let predicate = if self.eat("<") {
            "<".to_string()
        } else if self.eat(">") {
            ">".to_string()
        } else {
            self.ident()
                .ok_or_else(|| self.error("expected a predicate name"))?
                .to_string()
        };
        registry.resolve(&predicate).map_err(|e| match e {
            RuleError::UnknownPredicate(_) => {
                self.pos = start;
                RuleError::UnknownPredicate(predicate.clone())
            }
            other => other,
        })?;
        self.expect("(")?;
        let subject = self.term()?;
        self.expect(",")?;
        let object = self.term()?;
        self.expect(")")?;
        Ok(Atom {
            predicate,
            args: [subject, object],
        })
    }
}

/// Parses `<conf> :: <atom> (& <atom>)* -> <atom>`, optionally prefixed by `id:`.
pub fn parse_rule(text: &str, registry: &mut Registry) -> Result<Rule, RuleError> {
    parse_rule_with_id(text, registry, "r1")
}

/// Like [`parse_rule`] with the id used when the text carries no `id:` prefix.
pub fn parse_rule_with_id(
    text: &str,
    registry: &mut Registry,
    default_id: &str,
) -> Result<Rule, RuleError> {
    let mut cur = Cursor::new(text);
    let mut id = default_id.to_string();
    let save = cur.pos;
    if let Some(label) = cur.ident() {
        if cur.eat(":") && !cur.rest().starts_with(':') {
            id = label.to_string();
        } else {
            cur.pos = save;
        }
    }
    let confidence = cur.decimal()?;
    cur.expect("::")?;
    let mut body = vec![cur.atom(registry)?];
    while cur.eat("&") {
        body.push(cur.atom(registry)?);
    }
    cur.expect("->")?;
    let head = cur.atom(registry)?;
    if !cur.at_end() {
        return Err(cur.error("unexpected trailing input"));
    }
    let rule = Rule {
        id,
        confidence,
        body,
        head,
    };
    rule.validate(registry)?;
    Ok(rule)
}

/// Parses a single atom; variables are allowed.
pub fn parse_atom(text: &str, registry: &mut Registry) -> Result<Atom, RuleError> {
    let mut cur = Cursor::new(text);
    let atom = cur.atom(registry)?;
    cur.eat(".");
    if !cur.at_end() {
        return Err(cur.error("unexpected trailing input"));
    }
    Ok(atom)
}

/// Parses a ground relational atom such as `child(Eve,David)`.
pub fn parse_fact(text: &str, registry: &mut Registry) -> Result<Atom, RuleError> {
    let atom = parse_atom(text, registry)?;
    if let Some(var) = atom.variables().next() {
        return Err(RuleError::UnboundVariable {
            atom: atom.to_string(),
            var: var.to_string(),
        });
    }
    Ok(atom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> Registry {
        Registry::parse(
            "child person person\nparent person person\nspouse person person yes\n\
             birthYear person year\nfoundYear company year\nfounder company person\n",
        )
        .unwrap()
    }

    #[test]
    fn soft_rule() {
        let mut reg = registry();
        let r = parse_rule("0.7 :: child(A,C) & parent(C,B) -> spouse(A,B)", &mut reg).unwrap();
        assert_eq!(r.confidence, 0.7);
        assert_eq!(r.body.len(), 2);
        assert_eq!(r.body[0].to_string(), "child(A,C)");
        assert_eq!(r.body[1].to_string(), "parent(C,B)");
        assert_eq!(r.head.to_string(), "spouse(A,B)");
        assert!(!r.is_hard());
    }

    #[test]
    fn comparison_and_negative_head() {
        let mut reg = registry();
        let r = parse_rule(
            "0.99 :: birthYear(B,D) & foundYear(A,C) & <(C,D) -> negfounder(A,B)",
            &mut reg,
        )
        .unwrap();
        assert_eq!(r.body[2].predicate, "<");
        assert!(reg.get("negfounder").unwrap().is_negative_form());
    }

    #[test]
    fn hard_rule() {
        let mut reg = registry();
        let r = parse_rule("1.0 :: child(B,A) -> parent(A,B)", &mut reg).unwrap();
        assert!(r.is_hard());
        assert_eq!(r.weight(), None);
    }

    #[test]
    fn rejects_bad_rules() {
        let mut reg = registry();
        assert!(matches!(
            parse_rule("0.5 :: child(A,C) -> spouse(A,B)", &mut reg),
            Err(RuleError::UnsafeVariable(v)) if v == "B"
        ));
        assert!(matches!(
            parse_rule("1.5 :: child(A,B) -> spouse(A,B)", &mut reg),
            Err(RuleError::Confidence(_))
        ));
        assert!(matches!(
            parse_rule("0 :: child(A,B) -> spouse(A,B)", &mut reg),
            Err(RuleError::Confidence(_))
        ));
        assert!(matches!(
            parse_rule("0.5 :: birthYear(A,C) & birthYear(B,D) -> <(C,D)", &mut reg),
            Err(RuleError::ComparisonHead(_))
        ));
        assert!(matches!(
            parse_rule("0.5 :: child(A,B) -> unknownPred(A,B)", &mut reg),
            Err(RuleError::UnknownPredicate(_))
        ));
        assert!(matches!(
            parse_rule("0.5 :: child(A,B) & <(A,C) -> spouse(A,B)", &mut reg),
            Err(RuleError::UnsafeVariable(_))
        ));
        assert!(matches!(
            parse_rule(
                "0.5 :: child(A,B) & foundYear(A,C) -> spouse(A,B)",
                &mut reg
            ),
            Err(RuleError::VariableType { .. })
        ));
    }

    #[test]
    fn syntax_error_column() {
        let mut reg = registry();
        match parse_rule("0.5 :: child(A,B) spouse(A,B)", &mut reg) {
            Err(RuleError::Syntax { column, .. }) => assert_eq!(column, 19),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_rule("0.5 child(A,B) -> spouse(A,B)", &mut reg),
            Err(RuleError::Syntax { .. })
        ));
    }

    #[test]
    fn facts() {
        let mut reg = registry();
        let f = parse_fact("child(Eve,David)", &mut reg).unwrap();
        assert!(f.is_ground());
        assert_eq!(f.to_string(), "child(Eve,David)");
        let n = parse_fact("negparent(Eve,Carl)", &mut reg).unwrap();
        assert!(reg.get(&n.predicate).unwrap().is_negative_form());
        assert!(matches!(
            parse_fact("child(Eve,X)", &mut reg),
            Err(RuleError::UnboundVariable { .. })
        ));
        assert!(matches!(
            parse_fact("cousin(Eve,Bob)", &mut reg),
            Err(RuleError::UnknownPredicate(_))
        ));
        let quoted = parse_fact("founder(Ford,\"E. Musk\")", &mut reg).unwrap();
        assert_eq!(quoted.args[1], Term::constant("E. Musk"));
        let letters = parse_fact("child(\"A\",\"B\")", &mut reg).unwrap();
        assert_eq!(letters.to_string(), "child(\"A\",\"B\")");
    }

    #[test]
    fn explicit_id() {
        let mut reg = registry();
        let r = parse_rule("r4: 1 :: child(B,A) -> parent(A,B)", &mut reg).unwrap();
        assert_eq!(r.id, "r4");
    }
}
