//! Dockerfile build-failure triage and repair.
//!
//! The crate follows a failing build from its captured logs to a fix:
//!
//! * [`corpus`]: build records, corpus files, outcome classification
//! * [`dockerfile`]: span-preserving Dockerfile AST and splicing
//! * [`builder`]: optional in-context builds through a container engine CLI
//! * [`logpipe`]: log tails, normalization, tokenization
//! * [`embed`]: hashed n-gram and remote embedders
//! * [`cluster`]: exact HDBSCAN and grid search
//! * [`rules`]: pattern → repair/suggestion database, matching, patching
//! * [`search`]: keyword extraction and top-5 forum search
//! * [`metrics`]: coverage, per-cluster proportions, patch equivalence
//! * [`workbench`]: HTTP API for authoring rules against live clusters

#[cfg(feature = "builder")]
pub mod builder;
pub mod cli;
pub mod cluster;
pub mod corpus;
pub mod dockerfile;
pub mod embed;
pub mod logpipe;
pub mod metrics;
pub mod pipeline;
pub mod rules;
pub mod search;
pub mod workbench;
