//! Command-line front end for `bonnet-core`: synthesize a phantom dataset,
//! learn regularization parameters, reconstruct the test set and score it.

pub mod commands;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod plot;
