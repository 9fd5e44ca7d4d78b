pub mod store;
pub mod text;
pub mod classifier;
pub mod retriever;
pub mod rerank;
pub mod synthesis;
pub mod synth;
pub mod pipeline;
pub mod eval;
pub mod import;
