//! Self-aware agents for small text worlds.
//!
//! Data construction labels every gold step as fast, slow or knowledgeable
//! thinking using a probe policy; a linear-softmax decision-grammar policy is
//! trained with SFT and then RPO; inference dispatches on the first decoded
//! token to commit, reflect or pull a rule from the knowledge base.

pub mod minienv;
pub mod knowledge;
pub mod policy;
pub mod labeler;
pub mod trainer;
pub mod runtime;
pub mod pipeline;
