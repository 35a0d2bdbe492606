//! Noisily observed nearest-neighbor Ising fields on the square lattice.
//!
//! A hidden Ising configuration is masked site by site: with probability
//! `epsilon` the observed spin is replaced by -1. The observed field is a
//! variable-neighborhood random field whose one-point conditional at a site
//! depends only on the smallest all-plus-bounded region around it (the
//! *context*). This crate computes contexts, exact small-window conditionals,
//! closed-form finiteness thresholds, and Monte Carlo statistics over
//! parameter grids.

pub mod context;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod oracle;
pub mod sampler;
pub mod specification;
pub mod theory;
pub mod verification;

mod union_find;

pub use error::{Error, Result};
pub use lattice::{BoundaryCondition, Configuration, Site, SiteSet, Spin, Window, MINUS, PLUS};
