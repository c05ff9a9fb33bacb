//! Klein-Gordon fields on static AdS backgrounds with boundary conditions
//! B = θ_ℓ A: mode spectra, mode-sum propagators, identity checks and a
//! 1+1 time-domain evolution with deformations.

pub mod boundary_symbol;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod io;
pub mod mode_spectrum;
pub mod propagators;
pub mod series;
pub mod special;
pub mod verify;
