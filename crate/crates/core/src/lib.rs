pub mod causal;
pub mod cli;
pub mod cohort;
pub mod eval;
pub mod format;
pub mod glm;
pub mod preprocess;
pub mod rng;
pub mod synth;
