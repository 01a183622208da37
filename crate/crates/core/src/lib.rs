//! Fixed-budget LLM-guided evolutionary program search.
//!
//! See the guide under `book/` for a walkthrough of each module.

pub mod accounting;
pub mod analysis;
pub mod base;
pub mod engine;
pub mod geom;
pub mod mutation;
pub mod rng;
pub mod store;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/tasks.md")]
    struct Tasks;
    #[doc = include_str!("../../../book/src/protocols.md")]
    struct Protocols;
    #[doc = include_str!("../../../book/src/bandits.md")]
    struct Bandits;
    #[doc = include_str!("../../../book/src/backends.md")]
    struct Backends;
    #[doc = include_str!("../../../book/src/accounting.md")]
    struct Accounting;
    #[doc = include_str!("../../../book/src/analysis.md")]
    struct Analysis;
}
