//! Soft Horn rule reasoning and synthetic dataset generation.
//!
//! * [`rules`]: predicates, atoms, weighted rules and their text syntax.
//! * [`lpmln`]: grounding and exact probabilistic inference.
//! * [`verbalize`]: synthetic English and prompt encoding.
//! * [`datagen`]: synthetic example generation, splitting and auditing.
//! * [`metrics`]: weighted loss, evaluation metrics and a toy logistic trainer.
//! * [`corpus`]: bundled registry, templates and rule corpora.

pub mod corpus;
pub mod datagen;
pub mod lpmln;
pub mod metrics;
pub mod rules;
pub mod verbalize;
