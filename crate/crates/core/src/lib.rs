//! Regularized optimal transport distances between empirical samples, with
//! the inference tools that go with them.
//!
//! | Module | What it provides |
//! |--------|------------------|
//! | [`measures`] | samples, 1D discrete measures, projections, seeding |
//! | [`ot1d`] | exact 1D `W_p^p` (quantile, CDF, order statistics) and dual potentials |
//! | [`ot_nd`] | exact `W_p^p` between point clouds via assignment |
//! | [`sliced`] | average/max-sliced `W_p` and their asymptotic variances |
//! | [`smooth`] | mollifier kernel, smooth `W_p` by noise injection, truncation |
//! | [`entropic`] | log-domain Sinkhorn, ε-rescaling, EOT variances |
//! | [`inference`] | bootstrap, subsampling, normal CIs, CLT Monte Carlo harness |
//! | [`cli`] | the `rot-infer` command line (dist, ci, clt, selftest) |
//!
//! Low-level routines return `W_p^p`; the p-th root is only taken for reporting.

// parameter guards are written `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod entropic;
pub mod error;
pub mod inference;
pub mod measures;
pub mod ot1d;
pub mod ot_nd;
pub mod sliced;
pub mod smooth;

pub use error::{Error, Result};
pub use measures::{Direction, Discrete1D, SampleMatrix, SeedPolicy};
