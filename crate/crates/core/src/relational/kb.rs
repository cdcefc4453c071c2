use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use super::lexer::{lex, Cursor, Spanned, Tok};
use super::RelationalError;

pub(crate) type ConstId = u32;
pub(crate) type PredId = usize;

/// A ground binary fact `predicate(drug, protein)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub predicate: String,
    pub drug: String,
    pub protein: String,
}

impl Fact {
    pub fn new(predicate: impl Into<String>, drug: impl Into<String>, protein: impl Into<String>) -> Self {
        Self { predicate: predicate.into(), drug: drug.into(), protein: protein.into() }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{}).", self.predicate, quote(&self.drug), quote(&self.protein))
    }
}

pub(crate) fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Relation {
    pub pairs: BTreeSet<(ConstId, ConstId)>,
    pub by_drug: HashMap<ConstId, Vec<ConstId>>,
    pub by_protein: HashMap<ConstId, Vec<ConstId>>,
}

/// Interned set of binary facts. Drugs occupy the first argument position
/// and proteins the second; one constant table serves both.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    constants: Vec<String>,
    const_ids: HashMap<String, ConstId>,
    drugs: BTreeSet<ConstId>,
    proteins: BTreeSet<ConstId>,
    pred_ids: BTreeMap<String, PredId>,
    pred_names: Vec<String>,
    relations: Vec<Relation>,
    declared: Option<BTreeSet<String>>,
    duplicates: usize,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// A KB that rejects facts whose predicate is not in `signature`.
    pub fn with_signature<I, S>(signature: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { declared: Some(signature.into_iter().map(Into::into).collect()), ..Self::default() }
    }

    fn intern(&mut self, s: &str) -> ConstId {
        if let Some(&id) = self.const_ids.get(s) {
            return id;
        }
        let id = self.constants.len() as ConstId;
        self.constants.push(s.to_string());
        self.const_ids.insert(s.to_string(), id);
        id
    }

    /// Adds a fact; returns `false` (and counts a duplicate) when it was
    /// already present.
    pub fn add_fact(&mut self, fact: &Fact) -> Result<bool, RelationalError> {
        if let Some(sig) = &self.declared {
            if !sig.contains(&fact.predicate) {
                return Err(RelationalError::UnknownPredicate(fact.predicate.clone()));
            }
        }
        let p = match self.pred_ids.get(&fact.predicate) {
            Some(&p) => p,
            None => {
                let p = self.pred_names.len();
                self.pred_ids.insert(fact.predicate.clone(), p);
                self.pred_names.push(fact.predicate.clone());
                self.relations.push(Relation::default());
                p
            }
        };
        let d = self.intern(&fact.drug);
        let t = self.intern(&fact.protein);
        let rel = &mut self.relations[p];
        if !rel.pairs.insert((d, t)) {
            self.duplicates += 1;
            return Ok(false);
        }
        rel.by_drug.entry(d).or_default().push(t);
        rel.by_protein.entry(t).or_default().push(d);
        self.drugs.insert(d);
        self.proteins.insert(t);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.relations.iter().map(|r| r.pairs.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    /// Predicates in name order.
    pub fn predicates(&self) -> Vec<&str> {
        self.pred_ids.keys().map(String::as_str).collect()
    }

    pub fn drugs(&self) -> BTreeSet<&str> {
        self.drugs.iter().map(|&i| self.constants[i as usize].as_str()).collect()
    }

    pub fn proteins(&self) -> BTreeSet<&str> {
        self.proteins.iter().map(|&i| self.constants[i as usize].as_str()).collect()
    }

    pub fn constants(&self) -> &[String] {
        &self.constants
    }

    pub fn contains(&self, predicate: &str, drug: &str, protein: &str) -> bool {
        match (self.pred_ids.get(predicate), self.const_ids.get(drug), self.const_ids.get(protein)) {
            (Some(&p), Some(&d), Some(&t)) => self.relations[p].pairs.contains(&(d, t)),
            _ => false,
        }
    }

    /// All facts, sorted by predicate then arguments.
    pub fn facts(&self) -> Vec<Fact> {
        let mut out: Vec<Fact> = self
            .pred_names
            .iter()
            .zip(&self.relations)
            .flat_map(|(name, rel)| {
                rel.pairs.iter().map(move |&(d, t)| {
                    Fact::new(name.clone(), self.constants[d as usize].clone(), self.constants[t as usize].clone())
                })
            })
            .collect();
        out.sort();
        out
    }

    pub fn to_facts_text(&self) -> String {
        self.facts().iter().map(|f| format!("{f}\n")).collect()
    }

    /// Facts whose drug argument is in `keep`; used to restrict the KB to
    /// training drugs.
    pub fn restricted_to(&self, keep: &BTreeSet<String>) -> KnowledgeBase {
        let mut kb = KnowledgeBase { declared: self.declared.clone(), ..KnowledgeBase::default() };
        for f in self.facts() {
            if keep.contains(&f.drug) {
                kb.add_fact(&f).expect("predicate already accepted");
            }
        }
        kb
    }

    pub(crate) fn const_id(&self, s: &str) -> Option<ConstId> {
        self.const_ids.get(s).copied()
    }

    pub(crate) fn pred_id(&self, s: &str) -> Option<PredId> {
        self.pred_ids.get(s).copied()
    }

    pub(crate) fn relation(&self, p: PredId) -> &Relation {
        &self.relations[p]
    }
}

/// Parses a facts file: `Predicate("drug","protein").` per fact, `%` comments.
/// Equal when both hold the same facts, regardless of insertion order.
impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.facts() == other.facts()
    }
}

pub fn parse_facts(text: &str) -> Result<KnowledgeBase, RelationalError> {
    parse_into(text, KnowledgeBase::new())
}

/// As [`parse_facts`], rejecting predicates outside `signature`.
pub fn parse_facts_with_signature(text: &str, signature: &[&str]) -> Result<KnowledgeBase, RelationalError> {
    parse_into(text, KnowledgeBase::with_signature(signature.iter().copied()))
}

fn parse_into(text: &str, mut kb: KnowledgeBase) -> Result<KnowledgeBase, RelationalError> {
    let toks = lex(text)?;
    let mut cur = Cursor::new(&toks, text);
    while !cur.at_end() {
        let (pred, line, col) = cur.ident()?;
        cur.expect(&Tok::LParen)?;
        let mut args = Vec::new();
        loop {
            match cur.next() {
                Some(Spanned { tok: Tok::Str(s), .. }) => args.push(s.clone()),
                Some(Spanned { tok, line, col }) => {
                    return Err(RelationalError::Syntax {
                        line: *line,
                        col: *col,
                        msg: format!("expected quoted constant, found {}", tok.describe()),
                    })
                }
                None => return Err(cur.error_here("expected quoted constant, found end of input")),
            }
            match cur.peek().map(|s| &s.tok) {
                Some(Tok::Comma) => {
                    cur.next();
                }
                _ => break,
            }
        }
        cur.expect(&Tok::RParen)?;
        cur.expect(&Tok::Dot)?;
        if args.len() != 2 {
            return Err(RelationalError::Arity { line, col, predicate: pred.to_string(), got: args.len() });
        }
        kb.add_fact(&Fact::new(pred, args[0].clone(), args[1].clone())).map_err(|e| match e {
            RelationalError::UnknownPredicate(p) => {
                RelationalError::Syntax { line, col, msg: format!("undeclared predicate `{p}`") }
            }
            other => other,
        })?;
    }
    if kb.duplicates > 0 {
        log::warn!("dropped {} duplicate facts", kb.duplicates);
    }
    Ok(kb)
}
