//! Exact diagonalization over field sweeps, diabatic labelling, and level
//! crossing analysis.

pub mod crossings;
pub mod eigen;
pub mod sweep;
pub mod system;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use crossings::{
    classify, classify_crossing, co_tunneling_fields, distinct_fields, find_crossings,
    CrossingClass, CrossingEvent, CrossingOptions,
};
pub use eigen::{diagonalize, EigenSolution};
pub use sweep::{field_vector, linear_grid, zeeman_sweep, ZeemanDiagram};
pub use system::{electronic_gap, ModelMode, SpinSystem, StateLabel, DOUBLET_ISOLATION_MIN};

use crate::error::Result;
use crate::hamiltonian::DimerModel;
use crate::spinops::HalfInteger;
use crate::units::MU_B;

const EASY_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

/// Number of states in the ground electronic manifold (two doublets times
/// both nuclear spaces).
pub fn ground_manifold_size(model: &DimerModel) -> usize {
    4 * (model.ion1.i.twice() as usize + 1) * (model.ion2.i.twice() as usize + 1)
}

/// First-order co-tunneling field for total nuclear projection `sum_iz` when
/// both ions share `A_hf` (T).
pub fn first_order_co_tunneling_field(model: &DimerModel, sum_iz: f64) -> f64 {
    let a = 0.5 * (model.ion1.a_hf + model.ion2.a_hf);
    let g = 0.5 * (model.ion1.g_j + model.ion2.g_j);
    -a * sum_iz / (2.0 * g * MU_B)
}

/// First-order single-flip field: electronic gap over the slope difference
/// of the ferromagnetic and single-flip tracks (T).
pub fn first_order_single_flip_field(model: &DimerModel) -> Result<f64> {
    let gap = electronic_gap(model)?;
    let slope = model.ion1.g_j * MU_B * model.ion1.j.value() + model.ion2.g_j * MU_B * model.ion2.j.value();
    Ok(gap / slope)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceOptions {
    pub mode: ModelMode,
    pub n_points: usize,
    /// Half-width of the sweep (T); chosen from the hyperfine scale when `None`.
    pub half_width: Option<f64>,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        ResonanceOptions { mode: ModelMode::Effective, n_points: 201, half_width: None }
    }
}

fn resonance_half_width(model: &DimerModel) -> f64 {
    let smax = model.ion1.i.value() + model.ion2.i.value();
    let a = model.ion1.a_hf.abs().max(model.ion2.a_hf.abs());
    let g = model.ion1.g_j.min(model.ion2.g_j);
    (1.5 * a * smax / (2.0 * g * MU_B)).max(0.1)
}

/// Crossing census of the ground manifold on the easy axis.
pub fn ground_manifold_crossings(
    model: &DimerModel,
    opts: &ResonanceOptions,
    crossing: &CrossingOptions,
) -> Result<(ZeemanDiagram, Vec<CrossingEvent>)> {
    let system = SpinSystem::new(model, opts.mode)?;
    let w = opts.half_width.unwrap_or_else(|| resonance_half_width(model));
    let grid = linear_grid(-w, w, opts.n_points);
    let diagram = zeeman_sweep(&system, &grid, EASY_AXIS, Some(ground_manifold_size(model)))?;
    let manifold: Vec<usize> = (0..diagram.n_tracks()).collect();
    let events = find_crossings(&system, &diagram, &manifold, (-w, w), crossing)?;
    Ok((diagram, events))
}

/// Co-tunneling resonance fields keyed by conserved total nuclear projection (T).
pub fn resonance_fields(
    model: &DimerModel,
    opts: &ResonanceOptions,
) -> Result<BTreeMap<HalfInteger, f64>> {
    let (_, events) = ground_manifold_crossings(model, opts, &CrossingOptions::default())?;
    Ok(co_tunneling_fields(&events))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleFlipOptions {
    pub mode: ModelMode,
    pub n_points: usize,
    /// Only crossings with `min_field <= |H| <= max_field` count (T).
    pub min_field: f64,
    pub max_field: f64,
}

impl Default for SingleFlipOptions {
    fn default() -> Self {
        SingleFlipOptions { mode: ModelMode::Effective, n_points: 601, min_field: 0.1, max_field: 1.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleFlipSummary {
    /// Mean field of the nuclear-conserving single-flip crossings at
    /// positive and negative field (T).
    pub positive: f64,
    pub negative: f64,
    pub n_events: usize,
    /// Spread (max - min) of the individual crossing fields (T).
    pub spread: f64,
}

pub fn single_flip_fields(model: &DimerModel, opts: &SingleFlipOptions) -> Result<SingleFlipSummary> {
    let system = SpinSystem::new(model, opts.mode)?;
    let w = opts.max_field;
    let grid = linear_grid(-w, w, opts.n_points);
    let diagram = zeeman_sweep(&system, &grid, EASY_AXIS, Some(ground_manifold_size(model)))?;
    let manifold: Vec<usize> = (0..diagram.n_tracks()).collect();
    let events = find_crossings(&system, &diagram, &manifold, (-w, w), &CrossingOptions::default())?;
    let sf: Vec<&CrossingEvent> = events
        .iter()
        .filter(|e| {
            e.class == CrossingClass::SingleFlip
                && e.sum_iz.is_some()
                && e.field.abs() >= opts.min_field
                && e.field.abs() <= opts.max_field
        })
        .collect();
    let mean = |pos: bool| {
        let v: Vec<f64> = sf.iter().map(|e| e.field).filter(|f| (*f > 0.0) == pos).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let pos: Vec<f64> = sf.iter().map(|e| e.field).filter(|f| *f > 0.0).collect();
    let spread = pos.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - pos.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SingleFlipSummary { positive: mean(true), negative: mean(false), n_events: sf.len(), spread })
}
