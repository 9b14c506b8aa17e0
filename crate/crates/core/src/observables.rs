//! Equilibrium thermodynamics: Boltzmann populations, magnetization,
//! molar susceptibility and orientation averages.
//!
//! Hyperfine and quadrupole splittings (< 0.5 cm^-1) are far below `kB T`
//! over the measured range, so by default the thermodynamics is evaluated on
//! the electronic space alone (nuclear spins removed, 169 states for Tb2).
//! [`ThermoSpace::Full`] keeps the nuclei.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    dimer_terms, norm3, single_ion_terms, DimerModel, FieldLinearTerms, FieldSpec, IonModel,
};
use crate::spectrum::eigen::{solve_blocks_expectation, Blocks};
use crate::spinops::SparseOperator;
use crate::units::{K_B, MOLAR_CHI_PER_MUB_PER_TESLA, MU_B};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThermoSpace {
    #[default]
    Electronic,
    Full,
}

impl std::str::FromStr for ThermoSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "electronic" => Ok(ThermoSpace::Electronic),
            "full" => Ok(ThermoSpace::Full),
            other => Err(Error::InvalidArgument(format!("unknown thermo space '{other}'"))),
        }
    }
}

impl std::fmt::Display for ThermoSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThermoSpace::Electronic => "electronic",
            ThermoSpace::Full => "full",
        })
    }
}

/// `p_i ~ exp(-(E_i - E_min) / kB T)`.
pub fn boltzmann_populations(energies: &[f64], t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let beta = 1.0 / (K_B * t);
    let w: Vec<f64> = energies.iter().map(|e| (-(e - e0) * beta).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

/// Quadrature over the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationGrid {
    directions: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl OrientationGrid {
    pub fn new(directions: Vec<[f64; 3]>, weights: Vec<f64>) -> Result<Self> {
        if directions.is_empty() || directions.len() != weights.len() {
            return Err(Error::InvalidArgument("orientation grid needs matching directions and weights".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("orientation weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("orientation weights sum to {total}")));
        }
        if directions.iter().any(|d| (norm3(d) - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidArgument("orientation directions must be unit vectors".into()));
        }
        Ok(OrientationGrid { directions, weights })
    }

    pub fn single(direction: [f64; 3]) -> Result<Self> {
        let n = norm3(&direction);
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("direction must be nonzero".into()));
        }
        Self::new(vec![[direction[0] / n, direction[1] / n, direction[2] / n]], vec![1.0])
    }

    /// Golden-angle spiral with equal weights.
    pub fn fibonacci(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("Fibonacci grid needs at least one point".into()));
        }
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let directions = (0..n)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                [r * phi.cos(), r * phi.sin(), z]
            })
            .collect();
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // make the sum exactly one
        let s: f64 = weights.iter().sum();
        weights[0] += 1.0 - s;
        Self::new(directions, weights)
    }

    /// Gauss-Legendre nodes in `cos(theta)` times a uniform `phi` rule.
    pub fn gauss_legendre(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::InvalidArgument("product grid needs nodes in both angles".into()));
        }
        let (x, wx) = gauss_legendre_nodes(n_theta);
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (z, w) in x.iter().zip(&wx) {
            let r = (1.0 - z * z).max(0.0).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n_phi as f64;
                directions.push([r * phi.cos(), r * phi.sin(), *z]);
                weights.push(0.5 * w / n_phi as f64);
            }
        }
        let s: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= s;
        }
        Self::new(directions, weights)
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Applies the rotation matrix `r` (row-major) to every direction.
    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> Result<Self> {
        let directions = self
            .directions
            .iter()
            .map(|d| {
                let v = [
                    r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2],
                    r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2],
                    r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2],
                ];
                let n = norm3(&v);
                [v[0] / n, v[1] / n, v[2] / n]
            })
            .collect();
        Self::new(directions, self.weights.clone())
    }
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Weighted mean of `f` over the grid, evaluated in parallel and summed in
/// grid order.
pub fn powder_average<F>(f: F, grid: &OrientationGrid) -> Result<f64>
where
    F: Fn([f64; 3]) -> Result<f64> + Sync,
{
    let values: Vec<Result<f64>> = grid.directions.par_iter().map(|d| f(*d)).collect();
    let mut acc = 0.0;
    for (v, w) in values.into_iter().zip(&grid.weights) {
        acc += w * v?;
    }
    Ok(acc)
}

/// Spectrum plus moment projections at one field.
#[derive(Clone, Debug)]
pub struct MomentSpectrum {
    pub energies: Vec<f64>,
    /// `<i| m . n |i>` in muB, `m = -dH/dB`.
    pub moments: Vec<f64>,
}

impl MomentSpectrum {
    pub fn magnetization(&self, t: f64) -> Result<f64> {
        let p = boltzmann_populations(&self.energies, t)?;
        Ok(p.iter().zip(&self.moments).map(|(p, m)| p * m).sum())
    }

    /// `-kB T ln Z`, cm^-1.
    pub fn free_energy(&self, t: f64) -> Result<f64> {
        check_temperature(t)?;
        let e0 = self.energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let kt = K_B * t;
        let z: f64 = self.energies.iter().map(|e| (-(e - e0) / kt).exp()).sum();
        Ok(e0 - kt * z.ln())
    }
}

/// Field-linear Hamiltonian prepared for repeated thermodynamic evaluation.
#[derive(Clone, Debug)]
pub struct ThermoSystem {
    h0: SparseOperator,
    zeeman: [SparseOperator; 3],
}

impl ThermoSystem {
    pub fn dimer(model: &DimerModel, space: ThermoSpace) -> Result<Self> {
        let m = match space {
            ThermoSpace::Electronic => model.clone().without_nuclear_spins(),
            ThermoSpace::Full => model.clone(),
        };
        Ok(Self::from_terms(&dimer_terms(&m)?))
    }

    pub fn ion(ion: &IonModel, space: ThermoSpace) -> Result<Self> {
        let mut ion = ion.clone();
        if space == ThermoSpace::Electronic {
            ion.i = crate::spinops::HalfInteger::ZERO;
            ion.a_hf = 0.0;
            ion.p_quad = 0.0;
        }
        Ok(Self::from_terms(&single_ion_terms(&ion)?))
    }

    fn from_terms(terms: &FieldLinearTerms) -> Self {
        ThermoSystem {
            h0: terms.zero_field.to_sparse(),
            zeeman: [terms.zeeman[0].to_sparse(), terms.zeeman[1].to_sparse(), terms.zeeman[2].to_sparse()],
        }
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    /// Full spectrum at field vector `b` (T) with moments projected on the
    /// unit vector `n`.
    pub fn spectrum(&self, b: [f64; 3], n: [f64; 3]) -> Result<MomentSpectrum> {
        let mut ops = vec![&self.h0];
        for axis in 0..3 {
            if b[axis] != 0.0 {
                ops.push(&self.zeeman[axis]);
            }
        }
        let blocks = Blocks::from_patterns(self.dim(), &ops);
        let parts = [
            (&self.h0, 1.0),
            (&self.zeeman[0], b[0]),
            (&self.zeeman[1], b[1]),
            (&self.zeeman[2], b[2]),
        ];
        let obs = [(&self.zeeman[0], -n[0] / MU_B), (&self.zeeman[1], -n[1] / MU_B), (&self.zeeman[2], -n[2] / MU_B)];
        let (energies, moments) = solve_blocks_expectation(&parts, &obs, &blocks)?;
        Ok(MomentSpectrum { energies, moments })
    }

    /// Magnetization (muB per formula unit) projected on the field direction.
    pub fn magnetization(&self, field: &FieldSpec, t: f64) -> Result<f64> {
        check_temperature(t)?;
        let n = field.effective_direction();
        self.spectrum(field.vector(), n)?.magnetization(t)
    }

    pub fn free_energy(&self, field: &FieldSpec, t: f64) -> Result<f64> {
        self.spectrum(field.vector(), field.effective_direction())?.free_energy(t)
    }

    /// `-dF/dB / muB` by central difference with step `db` (T).
    pub fn magnetization_from_free_energy(&self, field: &FieldSpec, t: f64, db: f64) -> Result<f64> {
        let mut up = field.clone();
        up.magnitude += db;
        let mut dn = field.clone();
        dn.magnitude -= db;
        let fu = self.free_energy(&up, t)?;
        let fd = self.free_energy(&dn, t)?;
        Ok(-(fu - fd) / (2.0 * db) / MU_B)
    }

    /// Powder-averaged magnetization at `magnitude` (T) for every temperature.
    pub fn powder_magnetization(&self, magnitude: f64, temps: &[f64], grid: &OrientationGrid) -> Result<Vec<f64>> {
        for &t in temps {
            check_temperature(t)?;
        }
        let per_dir: Vec<Result<Vec<f64>>> = grid
            .directions
            .par_iter()
            .map(|d| {
                let b = [magnitude * d[0], magnitude * d[1], magnitude * d[2]];
                let s = self.spectrum(b, *d)?;
                temps.iter().map(|&t| s.magnetization(t)).collect()
            })
            .collect();
        let mut acc = vec![0.0; temps.len()];
        for (v, w) in per_dir.into_iter().zip(&grid.weights) {
            for (a, m) in acc.iter_mut().zip(v?) {
                *a += w * m;
            }
        }
        Ok(acc)
    }
}

/// Magnetization along the field of `field` (muB per molecule).
pub fn magnetization(model: &DimerModel, field: &FieldSpec, t: f64, space: ThermoSpace) -> Result<f64> {
    ThermoSystem::dimer(model, space)?.magnetization(field, t)
}

pub fn powder_magnetization(
    model: &DimerModel,
    magnitude: f64,
    t: f64,
    grid: &OrientationGrid,
    space: ThermoSpace,
) -> Result<f64> {
    Ok(ThermoSystem::dimer(model, space)?.powder_magnetization(magnitude, &[t], grid)?[0])
}

/// `chi_mol T` in cm^3 K mol^-1 from a moment in muB at field `b` (T).
pub fn molar_chi_t(moment_mub: f64, b: f64, t: f64) -> f64 {
    MOLAR_CHI_PER_MUB_PER_TESLA * moment_mub / b * t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub axis_name: String,
    pub axis_unit: String,
    pub value_name: String,
    pub value_unit: String,
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    pub meta: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl ObservableSeries {
    fn new(axis: (&str, &str), value: (&str, &str), x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension("series axis and values differ in length".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("series axis must be strictly increasing".into()));
        }
        Ok(ObservableSeries {
            axis_name: axis.0.into(),
            axis_unit: axis.1.into(),
            value_name: value.0.into(),
            value_unit: value.1.into(),
            axis: x,
            values: y,
            meta: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoOptions {
    pub space: ThermoSpace,
    pub grid: OrientationGrid,
    /// Tolerated relative deviation of `M(2H)/2` from `M(H)` at the probe field.
    pub linearity_tol: f64,
}

impl ThermoOptions {
    pub fn powder(n: usize) -> Result<Self> {
        Ok(ThermoOptions { space: ThermoSpace::Electronic, grid: OrientationGrid::fibonacci(n)?, linearity_tol: 0.01 })
    }
}

impl Default for ThermoOptions {
    fn default() -> Self {
        ThermoOptions::powder(200).expect("valid default grid")
    }
}

/// Powder `chi T` on a temperature grid with `chi = M / H` at `probe_field`.
pub fn chi_t(model: &DimerModel, temps: &[f64], probe_field: f64, opts: &ThermoOptions) -> Result<ObservableSeries> {
    if !(probe_field > 0.0) {
        return Err(Error::InvalidArgument("probe field must be positive".into()));
    }
    let sys = ThermoSystem::dimer(model, opts.space)?;
    let m1 = sys.powder_magnetization(probe_field, temps, &opts.grid)?;
    let values: Vec<f64> = m1.iter().zip(temps).map(|(m, t)| molar_chi_t(*m, probe_field, *t)).collect();
    let mut s = ObservableSeries::new(("T", "K"), ("chi_T", "cm^3 K mol^-1"), temps.to_vec(), values)?;

    let m2 = sys.powder_magnetization(2.0 * probe_field, temps, &opts.grid)?;
    let worst = m1
        .iter()
        .zip(&m2)
        .map(|(a, b)| if *a != 0.0 { (b / 2.0 - a).abs() / a.abs() } else { 0.0 })
        .fold(0.0, f64::max);
    if worst > opts.linearity_tol {
        s.warnings.push(format!(
            "probe field {probe_field} T is outside the linear regime: M(2H)/2 deviates by {:.2}%",
            100.0 * worst
        ));
    }
    s.meta.insert("model".into(), model.fingerprint());
    s.meta.insert("probe_field_T".into(), probe_field.to_string());
    s.meta.insert("space".into(), opts.space.to_string());
    s.meta.insert("orientations".into(), opts.grid.len().to_string());
    s.meta.insert("linearity_deviation".into(), format!("{worst:.3e}"));
    Ok(s)
}

/// Powder `M(H)` at temperature `t` (muB per molecule).
pub fn m_vs_h(model: &DimerModel, fields: &[f64], t: f64, opts: &ThermoOptions) -> Result<ObservableSeries> {
    let sys = ThermoSystem::dimer(model, opts.space)?;
    let values = fields
        .iter()
        .map(|&b| Ok(sys.powder_magnetization(b, &[t], &opts.grid)?[0]))
        .collect::<Result<Vec<f64>>>()?;
    let mut s = ObservableSeries::new(("H", "T"), ("M", "muB"), fields.to_vec(), values)?;
    s.meta.insert("model".into(), model.fingerprint());
    s.meta.insert("T_K".into(), t.to_string());
    s.meta.insert("space".into(), opts.space.to_string());
    s.meta.insert("orientations".into(), opts.grid.len().to_string());
    Ok(s)
}
