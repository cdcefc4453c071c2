use std::collections::HashMap;
use std::ops::ControlFlow;

use super::kb::{ConstId, KnowledgeBase, PredId};
use super::rule::{Atom, Literal, Rule, RuleSet, Term, HEAD_VARS};
use super::RelationalError;

/// Binding for a head constant the KB has never seen; matches nothing.
const ABSENT: ConstId = ConstId::MAX;

#[derive(Debug, Clone, Copy)]
enum CTerm {
    Var(usize),
    Const(ConstId),
}

#[derive(Debug, Clone)]
struct CAtom {
    pred: Option<PredId>,
    args: [CTerm; 2],
}

/// A conjunction compiled against one KB. Variables `0..outer` are shared
/// with the enclosing scope; the rest are local.
#[derive(Debug, Clone)]
struct Conj {
    atoms: Vec<CAtom>,
}

#[derive(Debug, Clone)]
struct Compiled {
    n_vars: usize,
    positives: Conj,
    negations: Vec<Conj>,
}

struct VarTable {
    names: HashMap<String, usize>,
}

impl VarTable {
    fn new() -> Self {
        let names = HEAD_VARS.iter().enumerate().map(|(i, v)| (v.to_string(), i)).collect();
        Self { names }
    }

    fn id(&mut self, name: &str) -> usize {
        let next = self.names.len();
        *self.names.entry(name.to_string()).or_insert(next)
    }
}

fn compile_atom(a: &Atom, kb: &KnowledgeBase, vars: &mut VarTable) -> CAtom {
    let term = |t: &Term, vars: &mut VarTable| match t {
        Term::Var(v) => CTerm::Var(vars.id(v)),
        Term::Const(c) => CTerm::Const(kb.const_id(c).unwrap_or(ABSENT)),
    };
    let a0 = term(&a.args[0], vars);
    let a1 = term(&a.args[1], vars);
    CAtom { pred: kb.pred_id(&a.predicate), args: [a0, a1] }
}

fn compile(rule: &Rule, kb: &KnowledgeBase) -> Result<Compiled, RelationalError> {
    rule.validate()?;
    let mut vars = VarTable::new();
    let mut positives = Vec::new();
    for lit in &rule.body {
        if let Literal::Pos(a) = lit {
            positives.push(compile_atom(a, kb, &mut vars));
        }
    }
    // Negations see every positive variable (validated above); their own
    // fresh variables get ids past the positive ones, renamed per negation.
    let outer = vars.names.len();
    let mut negations = Vec::new();
    let mut n_vars = outer;
    for lit in &rule.body {
        if let Literal::Neg(atoms) = lit {
            let mut local = VarTable { names: vars.names.clone() };
            let atoms = atoms.iter().map(|a| compile_atom(a, kb, &mut local)).collect();
            n_vars = n_vars.max(local.names.len());
            negations.push(Conj { atoms });
        }
    }
    Ok(Compiled { n_vars, positives: Conj { atoms: positives }, negations })
}

fn value(t: CTerm, bind: &[Option<ConstId>]) -> Option<ConstId> {
    match t {
        CTerm::Var(i) => bind[i],
        CTerm::Const(c) => Some(c),
    }
}

/// Enumerates every assignment of the conjunction's unbound variables that
/// makes all atoms facts, calling `f` once per assignment.
fn solve(
    kb: &KnowledgeBase,
    conj: &Conj,
    bind: &mut Vec<Option<ConstId>>,
    done: &mut Vec<bool>,
    remaining: usize,
    f: &mut dyn FnMut(&[Option<ConstId>]) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if remaining == 0 {
        return f(bind);
    }
    // most-bound atom first
    let (idx, _) = conj
        .atoms
        .iter()
        .enumerate()
        .filter(|(i, _)| !done[*i])
        .map(|(i, a)| (i, a.args.iter().filter(|t| value(**t, bind).is_some()).count()))
        .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)))
        .expect("remaining > 0");
    let atom = &conj.atoms[idx];
    let Some(pred) = atom.pred else { return ControlFlow::Continue(()) };
    let rel = kb.relation(pred);
    let v0 = value(atom.args[0], bind);
    let v1 = value(atom.args[1], bind);
    if v0 == Some(ABSENT) || v1 == Some(ABSENT) {
        return ControlFlow::Continue(());
    }

    let candidates: Vec<(ConstId, ConstId)> = match (v0, v1) {
        (Some(d), Some(t)) => {
            if rel.pairs.contains(&(d, t)) {
                vec![(d, t)]
            } else {
                vec![]
            }
        }
        (Some(d), None) => rel.by_drug.get(&d).map_or(vec![], |ts| ts.iter().map(|&t| (d, t)).collect()),
        (None, Some(t)) => rel.by_protein.get(&t).map_or(vec![], |ds| ds.iter().map(|&d| (d, t)).collect()),
        (None, None) => rel.pairs.iter().copied().collect(),
    };

    done[idx] = true;
    for (d, t) in candidates {
        let mut newly = [None, None];
        let mut ok = true;
        for (k, v) in [(0, d), (1, t)] {
            if let CTerm::Var(i) = atom.args[k] {
                match bind[i] {
                    Some(x) if x != v => ok = false,
                    Some(_) => {}
                    None => {
                        bind[i] = Some(v);
                        newly[k] = Some(i);
                    }
                }
            }
        }
        let flow = if ok { solve(kb, conj, bind, done, remaining - 1, f) } else { ControlFlow::Continue(()) };
        for i in newly.into_iter().flatten() {
            bind[i] = None;
        }
        if flow.is_break() {
            done[idx] = false;
            return flow;
        }
    }
    done[idx] = false;
    ControlFlow::Continue(())
}

fn exists(kb: &KnowledgeBase, conj: &Conj, bind: &[Option<ConstId>]) -> bool {
    let mut scratch = bind.to_vec();
    let mut done = vec![false; conj.atoms.len()];
    solve(kb, conj, &mut scratch, &mut done, conj.atoms.len(), &mut |_| ControlFlow::Break(())).is_break()
}

fn head_binding(kb: &KnowledgeBase, pair: (&str, &str), n_vars: usize) -> Vec<Option<ConstId>> {
    let mut bind = vec![None; n_vars.max(2)];
    bind[0] = Some(kb.const_id(pair.0).unwrap_or(ABSENT));
    bind[1] = Some(kb.const_id(pair.1).unwrap_or(ABSENT));
    bind
}

impl Compiled {
    fn count(&self, kb: &KnowledgeBase, pair: (&str, &str)) -> u64 {
        let mut bind = head_binding(kb, pair, self.n_vars);
        let mut done = vec![false; self.positives.atoms.len()];
        let mut n = 0u64;
        let _ = solve(kb, &self.positives, &mut bind, &mut done, self.positives.atoms.len(), &mut |b| {
            if !self.negations.iter().any(|neg| exists(kb, neg, b)) {
                n += 1;
            }
            ControlFlow::Continue(())
        });
        n
    }
}

/// Number of distinct substitutions of the rule's positive body variables
/// (head variables bound to `pair`) under which every positive literal is a
/// fact and no negated conjunction has a satisfying extension. An empty body
/// counts 1.
pub fn count_groundings(rule: &Rule, pair: (&str, &str), kb: &KnowledgeBase) -> Result<u64, RelationalError> {
    Ok(compile(rule, kb)?.count(kb, pair))
}

/// Grounding counts of every rule for `pair`, in rule order.
pub fn relational_embed(rules: &RuleSet, pair: (&str, &str), kb: &KnowledgeBase) -> Result<Vec<u64>, RelationalError> {
    Ok(CompiledRules::new(rules, kb)?.embed(pair))
}

/// A rule set compiled once against a KB for repeated embedding.
#[derive(Debug, Clone)]
pub struct CompiledRules<'kb> {
    kb: &'kb KnowledgeBase,
    rules: Vec<Compiled>,
}

impl<'kb> CompiledRules<'kb> {
    pub fn new(rules: &RuleSet, kb: &'kb KnowledgeBase) -> Result<Self, RelationalError> {
        let rules = rules.iter().map(|r| compile(r, kb)).collect::<Result<_, _>>()?;
        Ok(Self { kb, rules })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn embed(&self, pair: (&str, &str)) -> Vec<u64> {
        self.rules.iter().map(|r| r.count(self.kb, pair)).collect()
    }
}

/// Whether some extension of the head binding satisfies every atom.
pub(crate) fn conjunction_holds(kb: &KnowledgeBase, atoms: &[Atom], pair: (&str, &str)) -> bool {
    let mut vars = VarTable::new();
    let conj = Conj { atoms: atoms.iter().map(|a| compile_atom(a, kb, &mut vars)).collect() };
    let bind = head_binding(kb, pair, vars.names.len());
    exists(kb, &conj, &bind)
}
