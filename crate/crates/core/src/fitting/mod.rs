//! Parameter estimation: spin-Hamiltonian parameters from resonance fields,
//! generalized Debye fits of AC susceptibility and Arrhenius fits of
//! relaxation times.

mod arrhenius;
mod debye;
mod resonance;

pub use arrhenius::{arrhenius_fit, runs_test, ArrheniusFit, ArrheniusParams, RunsTest};
pub use debye::{debye_fit, generalized_debye, DebyeFit, DebyeParams};
pub use resonance::{
    evaluate_targets, fit_resonances, FitParam, FitResult, FitValue, ResonanceFitOptions,
    ResonanceTarget, ResonanceTargets, TargetKind, TargetResidual,
};
