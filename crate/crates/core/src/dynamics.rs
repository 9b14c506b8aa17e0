//! Landau-Zener staircase hysteresis.
//!
//! Populations ride diabatic tracks of the ground electronic manifold. At each
//! registered crossing a fraction `p_LZ` of the population difference swaps
//! between the two tracks. Between crossings nothing relaxes, so the loop
//! reflects only the initial nuclear distribution and the tunnel splittings.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::DimerModel;
use crate::observables::boltzmann_populations;
use crate::spectrum::{
    classify, find_crossings, ground_manifold_size, linear_grid, zeeman_sweep, CrossingClass, CrossingOptions,
    ModelMode, SpinSystem, StateLabel, ZeemanDiagram,
};
use crate::spinops::HalfInteger;
use crate::units::{HBAR_CM_S, K_B};

const EASY_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

/// Minimum separation, in units of `kB T`, between the polarized electronic
/// configuration and every other one at the start field.
pub const POLARIZATION_MIN_KT: f64 = 10.0;

/// Field tolerance for matching user-supplied splittings to crossings (T).
pub const TABLE_FIELD_TOL: f64 = 5e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    /// T
    pub start_field: f64,
    /// T
    pub end_field: f64,
    /// T/s
    pub rate: f64,
    /// K
    pub temperature: f64,
    /// Nuclear spins fully equilibrated at the start field; otherwise they
    /// start unpolarized.
    pub init_wait: bool,
    /// Points of the output trace.
    pub n_points: usize,
}

impl SweepProtocol {
    pub fn new(start_field: f64, end_field: f64, rate: f64, temperature: f64) -> Self {
        SweepProtocol { start_field, end_field, rate, temperature, init_wait: true, n_points: 2001 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(Error::InvalidArgument(format!("sweep rate must be positive, got {}", self.rate)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.start_field == self.end_field || !self.start_field.is_finite() || !self.end_field.is_finite() {
            return Err(Error::InvalidArgument("sweep needs distinct finite start and end fields".into()));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidArgument("trace needs at least two points".into()));
        }
        Ok(())
    }

    fn direction(&self) -> f64 {
        (self.end_field - self.start_field).signum()
    }
}

/// `p = 1 - exp(-pi gap^2 / (2 hbar |slope_diff| rate))` with `gap` in cm^-1,
/// `slope_diff` in cm^-1/T, `rate` in T/s and `hbar` in cm^-1 s.
pub fn lz_probability(gap: f64, slope_diff: f64, rate: f64) -> f64 {
    if gap == 0.0 {
        return 0.0;
    }
    let v = slope_diff.abs() * rate;
    if v == 0.0 {
        return 1.0;
    }
    -(-std::f64::consts::PI * gap * gap / (2.0 * HBAR_CM_S * v)).exp_m1()
}

/// Tunnel splittings per crossing class (cm^-1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGaps {
    pub co_tunneling: f64,
    pub single_flip: f64,
    pub nuclear_nonconserving: f64,
}

impl ClassGaps {
    pub fn co_tunneling_only(gap: f64) -> Self {
        ClassGaps { co_tunneling: gap, single_flip: 0.0, nuclear_nonconserving: 0.0 }
    }

    fn get(&self, class: CrossingClass) -> f64 {
        match class {
            CrossingClass::CoTunneling => self.co_tunneling,
            CrossingClass::SingleFlip => self.single_flip,
            CrossingClass::NuclearNonconserving => self.nuclear_nonconserving,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingEntry {
    /// T
    pub field: f64,
    pub class: CrossingClass,
    /// cm^-1
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplittingSource {
    Phenomenological(ClassGaps),
    /// Minimum adiabatic gaps from the spectrum module.
    Computed,
    /// Explicit gaps; every crossing in the sweep window must be covered.
    Table(Vec<SplittingEntry>),
}

/// Resolved splitting of one diabatic track pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingRow {
    pub field: f64,
    pub class: CrossingClass,
    pub sum_iz: Option<HalfInteger>,
    pub track_a: usize,
    pub track_b: usize,
    pub gap: f64,
    pub slope_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingTable {
    pub rows: Vec<SplittingRow>,
}

impl SplittingTable {
    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !(r.gap >= 0.0) {
                return Err(Error::Configuration(format!("negative gap at {} T", r.field)));
            }
            if r.gap > 0.0 && !(r.slope_diff > 0.0) {
                return Err(Error::Configuration(format!("tunneling crossing at {} T has no slope difference", r.field)));
            }
        }
        Ok(())
    }
}

/// One transfer event in field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub field: f64,
    pub class: CrossingClass,
    pub sum_iz: Option<HalfInteger>,
    pub gap: f64,
    pub probability: f64,
    /// Net population moved across the crossing.
    pub transfer: f64,
    /// Change of `M/M_s` caused by the transfer.
    pub delta_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HysteresisTrace {
    pub field: Vec<f64>,
    pub m_normalized: Vec<f64>,
    pub step_registry: Vec<StepRecord>,
    /// Population per total nuclear projection at the start and end.
    pub sum_iz_start: BTreeMap<HalfInteger, f64>,
    pub sum_iz_end: BTreeMap<HalfInteger, f64>,
    /// Largest deviation of the total population from one along the sweep.
    pub max_population_error: f64,
    pub splittings: SplittingTable,
}

impl HysteresisTrace {
    /// Magnetization change per co-tunneling nuclear channel.
    pub fn co_tunneling_steps(&self) -> BTreeMap<HalfInteger, (f64, f64)> {
        let mut out: BTreeMap<HalfInteger, (f64, f64)> = BTreeMap::new();
        for s in &self.step_registry {
            if s.class == CrossingClass::CoTunneling {
                if let Some(k) = s.sum_iz {
                    let e = out.entry(k).or_insert((s.field, 0.0));
                    e.1 += s.delta_m.abs();
                }
            }
        }
        out
    }

    /// Net reversal `(m_end - m_start) / 2`.
    pub fn reversed_fraction(&self) -> f64 {
        0.5 * (self.m_normalized[self.m_normalized.len() - 1] - self.m_normalized[0]).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOptions {
    /// Points of the Zeeman sweep used to locate crossings.
    pub diagram_points: usize,
    /// Gaussian field spread of the single-flip resonances (T); 0 disables.
    pub single_flip_broadening: f64,
    /// Ensemble size for the broadening average.
    pub broadening_samples: usize,
    pub crossing: CrossingOptions,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            diagram_points: 801,
            single_flip_broadening: 0.0,
            broadening_samples: 21,
            crossing: CrossingOptions::default(),
        }
    }
}

/// Nuclear sublevel populations of the polarized electronic configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuclearPopulation {
    pub labels: Vec<StateLabel>,
    pub energies: Vec<f64>,
    pub populations: Vec<f64>,
    /// Separation from the nearest other electronic configuration (cm^-1).
    pub polarization_gap: f64,
}

impl NuclearPopulation {
    pub fn by_sum_iz(&self) -> BTreeMap<HalfInteger, f64> {
        let mut m = BTreeMap::new();
        for (l, p) in self.labels.iter().zip(&self.populations) {
            *m.entry(HalfInteger::nearest(l.sum_iz())).or_insert(0.0) += p;
        }
        m
    }
}

fn signs(l: &StateLabel) -> (i8, i8) {
    l.electronic_signs()
}

/// Picks the electronic configuration of the lowest state and its nuclear
/// sublevels; errors when the configuration is not isolated by
/// `POLARIZATION_MIN_KT kB T`.
fn polarized_subset(labels: &[StateLabel], energies: &[f64], field: f64, t: f64) -> Result<(Vec<usize>, f64)> {
    let ground = (0..energies.len()).fold(0, |b, k| if energies[k] < energies[b] { k } else { b });
    let config = signs(&labels[ground]);
    let members: Vec<usize> = (0..labels.len()).filter(|&k| signs(&labels[k]) == config).collect();
    let top = members.iter().map(|&k| energies[k]).fold(f64::NEG_INFINITY, f64::max);
    let other = (0..labels.len())
        .filter(|&k| signs(&labels[k]) != config)
        .map(|k| energies[k])
        .fold(f64::INFINITY, f64::min);
    let gap = other - top;
    let required = POLARIZATION_MIN_KT * K_B * t;
    if !(gap >= required) {
        return Err(Error::Polarization { field, gap, required });
    }
    Ok((members, gap))
}

/// Boltzmann populations of the nuclear sublevels of the polarized
/// electronic state at `field` (T) on the easy axis.
pub fn thermal_init(model: &DimerModel, field: f64, t: f64) -> Result<NuclearPopulation> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {t}")));
    }
    let sys = SpinSystem::new(model, ModelMode::Effective)?;
    let sol = sys.solve([0.0, 0.0, field], Some(ground_manifold_size(model)))?;
    let labels: Vec<StateLabel> = (0..sol.len()).map(|i| sys.label(sol.state(i))).collect();
    let (members, gap) = polarized_subset(&labels, &sol.energies, field, t)?;
    let energies: Vec<f64> = members.iter().map(|&k| sol.energies[k]).collect();
    let populations = boltzmann_populations(&energies, t)?;
    Ok(NuclearPopulation {
        labels: members.iter().map(|&k| labels[k]).collect(),
        energies,
        populations,
        polarization_gap: gap,
    })
}

struct Transfer {
    field: f64,
    row: usize,
}

fn resolve_splittings(
    system: &SpinSystem,
    diagram: &ZeemanDiagram,
    window: (f64, f64),
    source: &SplittingSource,
    opts: &DynamicsOptions,
) -> Result<SplittingTable> {
    let mut copts = opts.crossing.clone();
    copts.compute_gaps = matches!(source, SplittingSource::Computed);
    let manifold: Vec<usize> = (0..diagram.n_tracks()).collect();
    let events = find_crossings(system, diagram, &manifold, window, &copts)?;
    let labels = &diagram.labels[0];
    let mut rows = Vec::new();
    for e in &events {
        for &(a, b) in &e.track_pairs {
            let class = classify(&labels[a], &labels[b]);
            let conserved = (labels[a].iz1 - labels[b].iz1).abs() < 0.2 && (labels[a].iz2 - labels[b].iz2).abs() < 0.2;
            let sum_iz = conserved.then(|| HalfInteger::nearest(labels[a].sum_iz()));
            let k = diagram.interval_of(e.field);
            let slope_diff = (diagram.slopes[k][a] - diagram.slopes[k][b]).abs();
            let gap = match source {
                SplittingSource::Phenomenological(g) => {
                    // a single-flip pair that also changes a nuclear projection
                    // is treated as nuclear non-conserving
                    if class == CrossingClass::SingleFlip && !conserved {
                        g.nuclear_nonconserving
                    } else {
                        g.get(class)
                    }
                }
                SplittingSource::Computed => e.min_gap.unwrap_or(0.0),
                SplittingSource::Table(entries) => entries
                    .iter()
                    .find(|t| t.class == class && (t.field - e.field).abs() <= TABLE_FIELD_TOL)
                    .map(|t| t.gap)
                    .ok_or_else(|| {
                        Error::Configuration(format!("no splitting given for the {class} crossing at {:.4} mT", e.field * 1e3))
                    })?,
            };
            rows.push(SplittingRow { field: e.field, class, sum_iz, track_a: a, track_b: b, gap, slope_diff });
        }
    }
    let table = SplittingTable { rows };
    table.validate()?;
    Ok(table)
}

fn sum_iz_histogram(labels: &[StateLabel], pops: &[f64]) -> BTreeMap<HalfInteger, f64> {
    let mut m = BTreeMap::new();
    for (l, p) in labels.iter().zip(pops) {
        *m.entry(HalfInteger::nearest(l.sum_iz())).or_insert(0.0) += p;
    }
    m
}

/// Runs one sweep for a fixed set of crossing fields.
fn run_ensemble_member(
    protocol: &SweepProtocol,
    table: &SplittingTable,
    field_shift: &dyn Fn(&SplittingRow) -> f64,
    moments: &[f64],
    init: &[f64],
    out_grid: &[f64],
) -> (Vec<f64>, Vec<StepRecord>, Vec<f64>, f64) {
    let dir = protocol.direction();
    let mut order: Vec<Transfer> = table
        .rows
        .iter()
        .enumerate()
        .map(|(row, r)| Transfer { field: r.field + field_shift(r), row })
        .collect();
    order.sort_by(|x, y| (dir * x.field).partial_cmp(&(dir * y.field)).unwrap().then(x.row.cmp(&y.row)));

    let mut pops = init.to_vec();
    let m_of = |p: &[f64]| p.iter().zip(moments).map(|(p, m)| p * m).sum::<f64>();
    let mut trace = Vec::with_capacity(out_grid.len());
    let mut steps = Vec::new();
    let mut next = 0;
    let mut worst = 0.0f64;
    for &h in out_grid {
        while next < order.len() && dir * order[next].field <= dir * h {
            let t = &order[next];
            let r = &table.rows[t.row];
            let p = lz_probability(r.gap, r.slope_diff, protocol.rate);
            if p > 0.0 {
                let (a, b) = (r.track_a, r.track_b);
                let moved = p * (pops[a] - pops[b]);
                pops[a] -= moved;
                pops[b] += moved;
                if moved != 0.0 {
                    steps.push(StepRecord {
                        field: t.field,
                        class: r.class,
                        sum_iz: r.sum_iz,
                        gap: r.gap,
                        probability: p,
                        transfer: moved,
                        delta_m: moved * (moments[b] - moments[a]),
                    });
                }
            }
            next += 1;
        }
        worst = worst.max((pops.iter().sum::<f64>() - 1.0).abs());
        trace.push(m_of(&pops));
    }
    (trace, steps, pops, worst)
}

/// Staircase hysteresis along the easy axis in the effective ground manifold.
pub fn sweep_hysteresis(
    model: &DimerModel,
    protocol: &SweepProtocol,
    splittings: &SplittingSource,
    opts: &DynamicsOptions,
) -> Result<HysteresisTrace> {
    protocol.validate()?;
    let system = SpinSystem::new(model, ModelMode::Effective)?;
    let grid = linear_grid(protocol.start_field, protocol.end_field, opts.diagram_points);
    let diagram = zeeman_sweep(&system, &grid, EASY_AXIS, Some(ground_manifold_size(model)))?;
    let window = (protocol.start_field.min(protocol.end_field), protocol.start_field.max(protocol.end_field));
    let table = resolve_splittings(&system, &diagram, window, splittings, opts)?;

    let labels = diagram.labels[0].clone();
    let e0 = &diagram.energies[0];
    let (members, _) = polarized_subset(&labels, e0, protocol.start_field, protocol.temperature)?;
    let sub_e: Vec<f64> = members.iter().map(|&k| e0[k]).collect();
    let sub_p = if protocol.init_wait {
        boltzmann_populations(&sub_e, protocol.temperature)?
    } else {
        vec![1.0 / members.len() as f64; members.len()]
    };
    let mut init = vec![0.0; labels.len()];
    for (&k, p) in members.iter().zip(&sub_p) {
        init[k] = *p;
    }

    let jmax = model.ion1.j.value() + model.ion2.j.value();
    // moment along +z is antiparallel to J for H_Z = +g muB J.B
    let moments: Vec<f64> = labels.iter().map(|l| -(l.jz1 + l.jz2) / jmax).collect();
    let out_grid = linear_grid(protocol.start_field, protocol.end_field, protocol.n_points);

    let sigma = opts.single_flip_broadening;
    let (m, steps, pops, worst) = if sigma > 0.0 && opts.broadening_samples > 1 {
        let n = opts.broadening_samples;
        let offsets: Vec<f64> = (0..n).map(|k| -3.0 + 6.0 * k as f64 / (n - 1) as f64).collect();
        let w: Vec<f64> = offsets.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let wsum: f64 = w.iter().sum();
        let runs: Vec<_> = offsets
            .par_iter()
            .map(|x| {
                let shift = |r: &SplittingRow| if r.class == CrossingClass::SingleFlip { x * sigma * r.field.signum() } else { 0.0 };
                run_ensemble_member(protocol, &table, &shift, &moments, &init, &out_grid)
            })
            .collect();
        let mut m = vec![0.0; out_grid.len()];
        let mut pops = vec![0.0; labels.len()];
        let mut steps = Vec::new();
        let mut worst = 0.0f64;
        for ((trace, s, p, e), wk) in runs.into_iter().zip(&w) {
            let f = wk / wsum;
            for (a, b) in m.iter_mut().zip(&trace) {
                *a += f * b;
            }
            for (a, b) in pops.iter_mut().zip(&p) {
                *a += f * b;
            }
            steps.extend(s.into_iter().map(|mut r| {
                r.transfer *= f;
                r.delta_m *= f;
                r
            }));
            worst = worst.max(e);
        }
        let dir = protocol.direction();
        steps.sort_by(|a, b| (dir * a.field).partial_cmp(&(dir * b.field)).unwrap());
        (m, steps, pops, worst)
    } else {
        run_ensemble_member(protocol, &table, &|_| 0.0, &moments, &init, &out_grid)
    };

    Ok(HysteresisTrace {
        field: out_grid,
        m_normalized: m.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
        step_registry: steps,
        sum_iz_start: sum_iz_histogram(&labels, &init),
        sum_iz_end: sum_iz_histogram(&labels, &pops),
        max_population_error: worst,
        splittings: table,
    })
}

/// Independent sweeps evaluated concurrently, results in input order.
pub fn sweep_many(
    model: &DimerModel,
    protocols: &[SweepProtocol],
    splittings: &SplittingSource,
    opts: &DynamicsOptions,
) -> Vec<Result<HysteresisTrace>> {
    protocols.par_iter().map(|p| sweep_hysteresis(model, p, splittings, opts)).collect()
}
