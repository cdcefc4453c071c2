pub mod tensor;
pub mod image;
pub mod embeddings;
pub mod smiles;
pub mod relational;
pub mod fusion;
pub mod baselines;
pub mod pipeline;
