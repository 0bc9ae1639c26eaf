//! Batch driver for IPDG Helmholtz studies: configuration, convergence and
//! adaptive loops, approximation-factor sweeps, CSV records and field output.

pub mod check;
pub mod config;
pub mod error;
pub mod fields;
pub mod record;
pub mod study;
