//! Desk-scale privacy-preserving speech pipeline.
//!
//! The crate synthesizes a labeled toy-speech corpus, learns a quantized
//! content representation with attribute-conditioned resynthesis (gender and
//! speaker embeddings feeding an autoregressive mu-law vocoder), applies five
//! attribute-mapping settings (SI / RI / RG / SIRG / RISG), and scores the
//! result with an attacker suite: a gender classifier, a speaker verifier
//! scored by equal error rate, and a CTC content recognizer scored by token
//! error rate.

pub mod anonymizer;
pub mod attackers;
pub mod checkpoint;
pub mod conditioner;
pub mod config;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod runner;
pub mod train;
pub mod vocoder;
pub mod vq;

pub use anonymizer::Setting;
pub use config::RunConfig;
pub use corpus::{CorpusSpec, Gender, Utterance};
pub use metrics::EvaluationReport;
