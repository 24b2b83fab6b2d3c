//! Experiment harness for heavy-tailed PCA: replicated sweeps, principal
//! direction recovery, bias/RMSE studies, image denoising and file I/O.

pub mod config;
pub mod denoise;
pub mod experiments;
pub mod io;
pub mod manifest;
