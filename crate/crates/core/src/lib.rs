//! Electron-nuclear spin Hamiltonians and simulations for coupled lanthanide
//! dimers: spectra, level crossings, thermodynamics, fitting and
//! Landau-Zener hysteresis.

pub mod error;
pub mod dynamics;
pub mod export;
pub mod fitting;
pub mod hamiltonian;
pub mod observables;
pub mod spectrum;
pub mod spinops;
pub mod units;

pub use error::{Error, Result};
