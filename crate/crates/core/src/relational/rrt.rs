use std::collections::BTreeMap;

use super::ground::conjunction_holds;
use super::kb::KnowledgeBase;
use super::rule::{Atom, Literal, Rule, RuleSet, Term, HEAD_VARS};
use super::RelationalError;

/// Gains at or below this are treated as zero.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RrtConfig {
    pub max_depth: usize,
    pub min_examples: usize,
    /// Also propose two-literal tests `p(D1,P), q(D2,P)` sharing a fresh
    /// protein variable, which no single literal can express.
    pub lookahead: bool,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self { max_depth: 5, min_examples: 10, lookahead: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrtExample {
    pub drug_a: String,
    pub drug_b: String,
    pub target: f64,
}

impl RrtExample {
    pub fn new(drug_a: impl Into<String>, drug_b: impl Into<String>, target: f64) -> Self {
        Self { drug_a: drug_a.into(), drug_b: drug_b.into(), target }
    }

    fn pair(&self) -> (&str, &str) {
        (&self.drug_a, &self.drug_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
        examples: usize,
    },
    /// Examples for which `path ∧ test` has a satisfying substitution go to `yes`.
    Split {
        test: Vec<Atom>,
        gain: f64,
        yes: Box<TreeNode>,
        no: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub root: TreeNode,
}

impl RegressionTree {
    pub fn num_leaves(&self) -> usize {
        fn go(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { yes, no, .. } => go(yes) + go(no),
            }
        }
        go(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn go(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { yes, no, .. } => 1 + go(yes).max(go(no)),
            }
        }
        go(&self.root)
    }

    /// Leaf index (depth-first, yes before no) reached by `pair`.
    pub fn route(&self, pair: (&str, &str), kb: &KnowledgeBase) -> usize {
        let mut node = &self.root;
        let mut path: Vec<Atom> = Vec::new();
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return offset,
                TreeNode::Split { test, yes, no, .. } => {
                    let mut conj = path.clone();
                    conj.extend(test.iter().cloned());
                    if conjunction_holds(kb, &conj, pair) {
                        path = conj;
                        node = yes;
                    } else {
                        offset += RegressionTree { root: (**yes).clone() }.num_leaves();
                        node = no;
                    }
                }
            }
        }
    }

    pub fn predict(&self, pair: (&str, &str), kb: &KnowledgeBase) -> f64 {
        let target = self.route(pair, kb);
        let mut leaves = Vec::new();
        collect_leaves(&self.root, &mut leaves);
        leaves[target]
    }
}

fn collect_leaves(n: &TreeNode, out: &mut Vec<f64>) {
    match n {
        TreeNode::Leaf { value, .. } => out.push(*value),
        TreeNode::Split { yes, no, .. } => {
            collect_leaves(yes, out);
            collect_leaves(no, out);
        }
    }
}

fn sse(targets: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = targets.clone().fold((0usize, 0.0), |(n, s), t| (n + 1, s + t));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    targets.map(|t| (t - mean) * (t - mean)).sum()
}

fn protein_vars(path: &[Atom]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in path {
        if let Term::Var(v) = &a.args[1] {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
    }
    out
}

/// Candidate tests at a node whose true-path conjunction is `path`: each
/// predicate over a head drug variable and either a fresh or an already bound
/// protein variable, plus (with lookahead) two-literal chains joining both
/// drugs through one fresh protein.
pub fn candidate_tests(path: &[Atom], kb: &KnowledgeBase, lookahead: bool) -> Vec<Vec<Atom>> {
    let bound = protein_vars(path);
    let fresh = format!("P{}", bound.len() + 1);
    let preds = kb.predicates();
    let mut out = Vec::new();
    for p in &preds {
        for d in HEAD_VARS {
            out.push(vec![Atom::vars(*p, d, &fresh)]);
            for b in &bound {
                let a = Atom::vars(*p, d, b);
                if !path.contains(&a) {
                    out.push(vec![a]);
                }
            }
        }
    }
    if lookahead {
        for p in &preds {
            for q in &preds {
                out.push(vec![Atom::vars(*p, HEAD_VARS[0], &fresh), Atom::vars(*q, HEAD_VARS[1], &fresh)]);
            }
        }
    }
    out
}

fn partition(path: &[Atom], test: &[Atom], examples: &[&RrtExample], kb: &KnowledgeBase) -> Vec<bool> {
    let mut conj = path.to_vec();
    conj.extend(test.iter().cloned());
    examples.iter().map(|e| conjunction_holds(kb, &conj, e.pair())).collect()
}

/// Reduction in summed squared error from splitting `examples` on `test`.
pub fn score_split(path: &[Atom], test: &[Atom], examples: &[&RrtExample], kb: &KnowledgeBase) -> f64 {
    let side = partition(path, test, examples, kb);
    let all = sse(examples.iter().map(|e| e.target));
    let yes = sse(examples.iter().zip(&side).filter(|(_, s)| **s).map(|(e, _)| e.target));
    let no = sse(examples.iter().zip(&side).filter(|(_, s)| !**s).map(|(e, _)| e.target));
    all - yes - no
}

fn render(test: &[Atom]) -> String {
    test.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn grow(path: &[Atom], examples: &[&RrtExample], depth: usize, kb: &KnowledgeBase, cfg: &RrtConfig) -> TreeNode {
    let value = examples.iter().map(|e| e.target).sum::<f64>() / examples.len() as f64;
    let leaf = TreeNode::Leaf { value, examples: examples.len() };
    if depth >= cfg.max_depth || examples.len() < cfg.min_examples {
        return leaf;
    }
    let mut best: Option<(f64, Vec<Atom>)> = None;
    for test in candidate_tests(path, kb, cfg.lookahead) {
        let gain = score_split(path, &test, examples, kb);
        let better = match &best {
            None => true,
            Some((g, t)) => {
                gain > g + MIN_GAIN
                    || ((gain - g).abs() <= MIN_GAIN && (test.len(), render(&test)) < (t.len(), render(t)))
            }
        };
        if better {
            best = Some((gain, test));
        }
    }
    let Some((gain, test)) = best.filter(|(g, _)| *g > MIN_GAIN) else { return leaf };
    let side = partition(path, &test, examples, kb);
    let yes_ex: Vec<&RrtExample> = examples.iter().zip(&side).filter(|(_, s)| **s).map(|(e, _)| *e).collect();
    let no_ex: Vec<&RrtExample> = examples.iter().zip(&side).filter(|(_, s)| !**s).map(|(e, _)| *e).collect();
    let mut yes_path = path.to_vec();
    yes_path.extend(test.iter().cloned());
    let yes = grow(&yes_path, &yes_ex, depth + 1, kb, cfg);
    let no = grow(path, &no_ex, depth + 1, kb, cfg);
    TreeNode::Split { test, gain, yes: Box::new(yes), no: Box::new(no) }
}

/// Top-down induction of a relational regression tree over pair examples.
/// Each node picks the candidate test with the largest squared-error
/// reduction, breaking ties by fewer literals and then by clause text.
pub fn learn_rrt(
    examples: &[RrtExample],
    kb: &KnowledgeBase,
    config: &RrtConfig,
) -> Result<RegressionTree, RelationalError> {
    if examples.is_empty() {
        return Err(RelationalError::NoExamples);
    }
    if let Some(e) = examples.iter().find(|e| !e.target.is_finite()) {
        return Err(RelationalError::InvalidTarget { drug_a: e.drug_a.clone(), drug_b: e.drug_b.clone() });
    }
    let refs: Vec<&RrtExample> = examples.iter().collect();
    Ok(RegressionTree { root: grow(&[], &refs, 0, kb, config) })
}

/// Renames every non-head variable to a fresh local name.
fn localise(atoms: &[Atom], next: &mut usize) -> Vec<Atom> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    let mut rename = |t: &Term| match t {
        Term::Var(v) if !HEAD_VARS.contains(&v.as_str()) => Term::Var(
            map.entry(v.clone())
                .or_insert_with(|| {
                    *next += 1;
                    format!("N{next}")
                })
                .clone(),
        ),
        other => other.clone(),
    };
    atoms.iter().map(|a| Atom::new(a.predicate.clone(), rename(&a.args[0]), rename(&a.args[1]))).collect()
}

/// One rule per leaf in depth-first order, yes branches first. A false
/// branch contributes `\+ (path ∧ test)` with its variables made local, so a
/// rule's grounding count is non-zero exactly for pairs that reach its leaf.
pub fn extract_rules(tree: &RegressionTree) -> RuleSet {
    fn go(n: &TreeNode, path: &mut Vec<Atom>, body: &mut Vec<Literal>, out: &mut Vec<Rule>) {
        match n {
            TreeNode::Leaf { value, .. } => out.push(Rule::new(body.clone(), *value)),
            TreeNode::Split { test, yes, no, .. } => {
                let (plen, blen) = (path.len(), body.len());
                path.extend(test.iter().cloned());
                body.extend(test.iter().cloned().map(Literal::Pos));
                go(yes, path, body, out);
                path.truncate(plen);
                body.truncate(blen);

                let mut next = body
                    .iter()
                    .filter_map(|l| match l {
                        Literal::Neg(atoms) => Some(atoms),
                        Literal::Pos(_) => None,
                    })
                    .flatten()
                    .flat_map(Atom::variables)
                    .filter(|v| !HEAD_VARS.contains(v))
                    .collect::<std::collections::BTreeSet<_>>()
                    .len();
                let mut conj = path.clone();
                conj.extend(test.iter().cloned());
                body.push(Literal::Neg(localise(&conj, &mut next)));
                go(no, path, body, out);
                body.truncate(blen);
            }
        }
    }
    let mut out = Vec::new();
    go(&tree.root, &mut Vec::new(), &mut Vec::new(), &mut out);
    RuleSet::new(out)
}
