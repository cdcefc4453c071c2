//! Input builders shared by the benchmarks.

use hetddi::relational::{Atom, Fact, KnowledgeBase, Literal, Rule};
use hetddi::tensor::{rng_from_seed, Tensor};
use rand::Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).expect("shape matches data")
}

/// Drugs `d0..` each inhibiting one of `n_enzymes` enzymes and agonising a
/// random target.
pub fn enzyme_kb(n_drugs: usize, n_enzymes: usize, seed: u64) -> KnowledgeBase {
    let mut rng = rng_from_seed(seed);
    let mut kb = KnowledgeBase::new();
    for d in 0..n_drugs {
        let drug = format!("d{d}");
        kb.add_fact(&Fact::new("EnzymeInhibitor", drug.clone(), format!("e{}", rng.gen_range(0..n_enzymes))))
            .expect("valid fact");
        kb.add_fact(&Fact::new("TargetAgonist", drug, format!("t{}", rng.gen_range(0..n_enzymes)))).expect("valid fact");
    }
    kb
}

/// `EnzymeInhibitor(D1,P) ∧ EnzymeInhibitor(D2,P) ∧ ¬TargetAgonist(D2,T)`-style
/// rule with a negated conjunction, the most expensive shape we learn.
pub fn shared_enzyme_rule() -> Rule {
    Rule::new(
        vec![
            Literal::Pos(Atom::vars("EnzymeInhibitor", "D1", "P1")),
            Literal::Pos(Atom::vars("EnzymeInhibitor", "D2", "P1")),
            Literal::Neg(vec![Atom::vars("TargetAgonist", "D2", "T1")]),
        ],
        1.0,
    )
}

pub fn smiles_corpus(n: usize, seed: u64) -> Vec<Vec<String>> {
    let frags = ["C", "CC", "O", "N", "c1ccccc1", "C(=O)O", "Cl", "S", "CN", "OC"];
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let s: String = (0..12).map(|_| frags[rng.gen_range(0..frags.len())]).collect();
            hetddi::smiles::tokenize_smiles(&s, 8).expect("tokenizable")
        })
        .collect()
}
