use std::collections::BTreeSet;
use std::fmt;

use super::kb::quote;
use super::lexer::{lex, Cursor, Spanned, Tok};
use super::RelationalError;

/// Head variables: the query pair binds `D1` and `D2`.
pub const HEAD_VARS: [&str; 2] = ["D1", "D2"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => f.write_str(&quote(c)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: [Term; 2],
}

impl Atom {
    pub fn new(predicate: impl Into<String>, a: Term, b: Term) -> Self {
        Self { predicate: predicate.into(), args: [a, b] }
    }

    /// Shorthand for an atom over two variables.
    pub fn vars(predicate: impl Into<String>, a: &str, b: &str) -> Self {
        Self::new(predicate, Term::var(a), Term::var(b))
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.predicate, self.args[0], self.args[1])
    }
}

/// A body literal. A negated literal is a conjunction under
/// negation-as-failure: it holds when no assignment of its local variables
/// makes every atom a fact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Pos(Atom),
    Neg(Vec<Atom>),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Pos(a) => write!(f, "{a}"),
            Literal::Neg(atoms) if atoms.len() == 1 => write!(f, "\\+ {}", atoms[0]),
            Literal::Neg(atoms) => {
                f.write_str("\\+ (")?;
                for (i, a) in atoms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// `interacts(D1,D2) :- body.` with the regression value of its tree leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub body: Vec<Literal>,
    pub leaf_value: f64,
}

impl Rule {
    pub fn new(body: Vec<Literal>, leaf_value: f64) -> Self {
        Self { body, leaf_value }
    }

    /// Checks variable scoping. A variable that first occurs inside a negated
    /// literal is local to it; it may not be bound by a later positive literal.
    pub fn validate(&self) -> Result<(), RelationalError> {
        let mut bound: BTreeSet<&str> = HEAD_VARS.into_iter().collect();
        let mut locals: BTreeSet<&str> = BTreeSet::new();
        for lit in &self.body {
            match lit {
                Literal::Pos(a) => {
                    for v in a.variables() {
                        if locals.contains(v) {
                            return Err(RelationalError::MalformedRule(format!(
                                "variable {v} occurs in a negated literal before any positive literal binds it"
                            )));
                        }
                        bound.insert(v);
                    }
                }
                Literal::Neg(atoms) => {
                    if atoms.is_empty() {
                        return Err(RelationalError::MalformedRule("empty negated conjunction".into()));
                    }
                    locals.extend(atoms.iter().flat_map(Atom::variables).filter(|v| !bound.contains(v)));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "interacts({},{})", HEAD_VARS[0], HEAD_VARS[1])?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, lit) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{lit}")?;
            }
        }
        write!(f, ".  % leaf={}", self.leaf_value)
    }
}

/// Ordered rules; the order fixes the relational embedding coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rule> {
        self.rules.iter()
    }

    /// One clause per line, in embedding order.
    pub fn to_text(&self) -> String {
        self.rules.iter().map(|r| format!("{r}\n")).collect()
    }

    /// Inverse of [`RuleSet::to_text`]. The `% leaf=v` trailer is optional
    /// (missing means 0).
    pub fn parse(text: &str) -> Result<Self, RelationalError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (clause, comment) = split_comment(line);
            if clause.trim().is_empty() {
                continue;
            }
            let toks = lex(clause).map_err(|e| relocate(e, i + 1))?;
            let mut cur = Cursor::new(&toks, clause);
            let body = parse_clause(&mut cur).map_err(|e| relocate(e, i + 1))?;
            let leaf_value = match comment.and_then(|c| c.trim().strip_prefix("leaf=")) {
                Some(v) => v.trim().parse::<f64>().map_err(|_| RelationalError::Syntax {
                    line: i + 1,
                    col: clause.len() + 1,
                    msg: format!("invalid leaf value `{}`", v.trim()),
                })?,
                None => 0.0,
            };
            let rule = Rule::new(body, leaf_value);
            rule.validate()?;
            rules.push(rule);
        }
        Ok(Self { rules })
    }
}

/// Splits off a `%` comment, ignoring `%` inside quoted constants.
fn split_comment(line: &str) -> (&str, Option<&str>) {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '%' if !in_str => return (&line[..i], Some(&line[i + 1..])),
            _ => {}
        }
    }
    (line, None)
}

fn relocate(e: RelationalError, line: usize) -> RelationalError {
    match e {
        RelationalError::Syntax { col, msg, .. } => RelationalError::Syntax { line, col, msg },
        other => other,
    }
}

fn parse_clause(cur: &mut Cursor<'_>) -> Result<Vec<Literal>, RelationalError> {
    let (head, _, _) = cur.ident()?;
    if head != "interacts" {
        return Err(cur.error_here(format!("rule head must be `interacts`, found `{head}`")));
    }
    cur.expect(&Tok::LParen)?;
    for (i, want) in HEAD_VARS.iter().enumerate() {
        if i > 0 {
            cur.expect(&Tok::Comma)?;
        }
        let (v, _, _) = cur.ident()?;
        if v != *want {
            return Err(cur.error_here(format!("rule head must be interacts(D1,D2), found {v}")));
        }
    }
    cur.expect(&Tok::RParen)?;
    let mut body = Vec::new();
    if matches!(cur.peek().map(|s| &s.tok), Some(Tok::Neck)) {
        cur.next();
        loop {
            if matches!(cur.peek().map(|s| &s.tok), Some(Tok::Not)) {
                cur.next();
                if matches!(cur.peek().map(|s| &s.tok), Some(Tok::LParen)) {
                    cur.next();
                    let mut atoms = vec![parse_atom(cur)?];
                    while matches!(cur.peek().map(|s| &s.tok), Some(Tok::Comma)) {
                        cur.next();
                        atoms.push(parse_atom(cur)?);
                    }
                    cur.expect(&Tok::RParen)?;
                    body.push(Literal::Neg(atoms));
                } else {
                    body.push(Literal::Neg(vec![parse_atom(cur)?]));
                }
            } else {
                body.push(Literal::Pos(parse_atom(cur)?));
            }
            if matches!(cur.peek().map(|s| &s.tok), Some(Tok::Comma)) {
                cur.next();
            } else {
                break;
            }
        }
    }
    cur.expect(&Tok::Dot)?;
    if !cur.at_end() {
        return Err(cur.error_here("unexpected text after clause"));
    }
    Ok(body)
}

fn parse_atom(cur: &mut Cursor<'_>) -> Result<Atom, RelationalError> {
    let (pred, _, _) = cur.ident()?;
    cur.expect(&Tok::LParen)?;
    let a = parse_term(cur)?;
    cur.expect(&Tok::Comma)?;
    let b = parse_term(cur)?;
    cur.expect(&Tok::RParen)?;
    Ok(Atom::new(pred, a, b))
}

fn parse_term(cur: &mut Cursor<'_>) -> Result<Term, RelationalError> {
    match cur.peek() {
        Some(Spanned { tok: Tok::Str(s), .. }) => {
            cur.next();
            Ok(Term::Const(s.clone()))
        }
        Some(Spanned { tok: Tok::Ident(s), .. }) if s.starts_with(|c: char| c.is_uppercase() || c == '_') => {
            cur.next();
            Ok(Term::Var(s.clone()))
        }
        Some(s) => Err(cur.error_here(format!("expected variable or quoted constant, found {}", s.tok.describe()))),
        None => Err(cur.error_here("expected variable or quoted constant, found end of input")),
    }
}
