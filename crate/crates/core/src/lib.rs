//! Data-control policy toolchain.
//!
//! Policies attach purposes, storage, deletion and permission groups to each
//! datum. This crate parses policies and traces, executes the policy-level
//! trace semantics, audits traces against the compliance rules, derives
//! privacy architectures, reasons about who can obtain which datum (`HAS`
//! properties) and cross-checks the two levels against each other.

pub mod arch;
pub mod cli;
pub mod compliance;
pub mod dsl;
pub mod logic;
pub mod mapping;
pub mod model;
pub mod semantics;
