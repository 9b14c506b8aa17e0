use std::collections::BTreeMap;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::DimerModel;
use crate::spectrum::{resonance_fields, single_flip_fields, ResonanceOptions, SingleFlipOptions};
use crate::spinops::HalfInteger;

/// Parameters the resonance fitter can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FitParam {
    /// Hyperfine constant, shared by both ions.
    AHf,
    /// Quadrupole constant, shared by both ions.
    P,
    /// zz element of the anisotropic coupling.
    Dzz,
    /// Isotropic exchange.
    JEx,
}

impl FitParam {
    pub const ALL: [FitParam; 4] = [FitParam::AHf, FitParam::P, FitParam::Dzz, FitParam::JEx];

    pub fn name(self) -> &'static str {
        match self {
            FitParam::AHf => "A_hf",
            FitParam::P => "P",
            FitParam::Dzz => "D_zz",
            FitParam::JEx => "J_ex",
        }
    }

    pub fn unit(self) -> &'static str {
        "cm^-1"
    }

    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            FitParam::AHf => (0.005, 0.05),
            FitParam::P => (0.0, 0.05),
            FitParam::Dzz => (-0.05, 0.05),
            FitParam::JEx => (-0.05, 0.05),
        }
    }

    pub fn get(self, model: &DimerModel) -> Result<f64> {
        Ok(match self {
            FitParam::AHf => 0.5 * (model.ion1.a_hf + model.ion2.a_hf),
            FitParam::P => 0.5 * (model.ion1.p_quad + model.ion2.p_quad),
            FitParam::Dzz => model.coupling_tensor()?[2][2],
            FitParam::JEx => model.j_ex,
        })
    }

    pub fn set(self, model: &DimerModel, value: f64) -> Result<DimerModel> {
        let mut m = model.clone();
        match self {
            FitParam::AHf => {
                m.ion1.a_hf = value;
                m.ion2.a_hf = value;
            }
            FitParam::P => {
                m.ion1.p_quad = value;
                m.ion2.p_quad = value;
            }
            FitParam::Dzz => m = m.with_dzz(value)?,
            FitParam::JEx => m.j_ex = value,
        }
        Ok(m)
    }
}

impl std::str::FromStr for FitParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FitParam::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fit parameter '{s}'")))
    }
}

impl std::fmt::Display for FitParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    CoTunneling { sum_iz: HalfInteger },
    SingleFlip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceTarget {
    pub kind: TargetKind,
    /// T
    pub field: f64,
    pub weight: f64,
}

impl ResonanceTarget {
    pub fn label(&self) -> String {
        match self.kind {
            TargetKind::CoTunneling { sum_iz } => format!("co_tunneling[{sum_iz}]"),
            TargetKind::SingleFlip => "single_flip".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceTargets {
    targets: Vec<ResonanceTarget>,
}

impl ResonanceTargets {
    pub fn new(targets: Vec<ResonanceTarget>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("at least one resonance target is required".into()));
        }
        for t in &targets {
            if !t.field.is_finite() {
                return Err(Error::InvalidArgument(format!("target {} is not finite", t.label())));
            }
            if !(t.weight > 0.0) || !t.weight.is_finite() {
                return Err(Error::InvalidArgument(format!("target {} needs a positive weight", t.label())));
            }
        }
        Ok(ResonanceTargets { targets })
    }

    /// Unit-weight co-tunneling targets keyed by total nuclear projection.
    pub fn co_tunneling(fields: &BTreeMap<HalfInteger, f64>) -> Result<Self> {
        Self::new(
            fields
                .iter()
                .map(|(s, f)| ResonanceTarget { kind: TargetKind::CoTunneling { sum_iz: *s }, field: *f, weight: 1.0 })
                .collect(),
        )
    }

    /// Assigns unlabelled co-tunneling fields to consecutive total nuclear
    /// projections outward from zero field: the `k`-th positive field gets
    /// `-k`, the `k`-th negative field gets `+k`, a zero field gets 0.
    pub fn from_unlabelled(fields: &[f64], zero_tol: f64) -> Result<Self> {
        let mut pos: Vec<f64> = fields.iter().cloned().filter(|f| *f > zero_tol).collect();
        let mut neg: Vec<f64> = fields.iter().cloned().filter(|f| *f < -zero_tol).collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        neg.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut map = BTreeMap::new();
        if fields.iter().any(|f| f.abs() <= zero_tol) {
            map.insert(HalfInteger::ZERO, 0.0);
        }
        for (k, f) in pos.iter().enumerate() {
            map.insert(HalfInteger::from_int(-(k as i32 + 1)), *f);
        }
        for (k, f) in neg.iter().enumerate() {
            map.insert(HalfInteger::from_int(k as i32 + 1), *f);
        }
        Self::co_tunneling(&map)
    }

    pub fn with_single_flip(mut self, field: f64, weight: f64) -> Result<Self> {
        self.targets.push(ResonanceTarget { kind: TargetKind::SingleFlip, field, weight });
        Self::new(self.targets)
    }

    pub fn targets(&self) -> &[ResonanceTarget] {
        &self.targets
    }

    pub fn co_tunneling_fields(&self) -> BTreeMap<HalfInteger, f64> {
        self.targets
            .iter()
            .filter_map(|t| match t.kind {
                TargetKind::CoTunneling { sum_iz } => Some((sum_iz, t.field)),
                TargetKind::SingleFlip => None,
            })
            .collect()
    }

    pub fn single_flip_field(&self) -> Option<f64> {
        self.targets.iter().find(|t| t.kind == TargetKind::SingleFlip).map(|t| t.field)
    }

    /// Field and nuclear projection reversed together.
    pub fn time_reversed(&self) -> Self {
        let targets = self
            .targets
            .iter()
            .map(|t| ResonanceTarget {
                kind: match t.kind {
                    TargetKind::CoTunneling { sum_iz } => TargetKind::CoTunneling { sum_iz: -sum_iz },
                    k => k,
                },
                field: -t.field,
                weight: t.weight,
            })
            .collect();
        ResonanceTargets { targets }
    }

    fn needs_co_tunneling(&self) -> bool {
        self.targets.iter().any(|t| matches!(t.kind, TargetKind::CoTunneling { .. }))
    }

    fn needs_single_flip(&self) -> bool {
        self.targets.iter().any(|t| t.kind == TargetKind::SingleFlip)
    }
}

/// Deviation charged for a target with no computed counterpart (T).
pub const MISSING_TARGET_PENALTY: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetResidual {
    pub label: String,
    pub target: f64,
    pub computed: Option<f64>,
    pub weight: f64,
}

impl TargetResidual {
    pub fn deviation(&self) -> f64 {
        match self.computed {
            Some(c) => c - self.target,
            None => MISSING_TARGET_PENALTY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFitOptions {
    pub resonance: ResonanceOptions,
    pub single_flip: SingleFlipOptions,
    /// Coarse-scan points per free parameter; chosen from the dimension when `None`.
    pub grid_points: Option<usize>,
    pub max_iters: u64,
    /// Simplex standard-deviation tolerance on the squared-residual objective (T^2).
    pub tolerance: f64,
}

impl Default for ResonanceFitOptions {
    fn default() -> Self {
        ResonanceFitOptions {
            resonance: ResonanceOptions { n_points: 121, ..Default::default() },
            single_flip: SingleFlipOptions { n_points: 301, ..Default::default() },
            grid_points: None,
            max_iters: 300,
            tolerance: 1e-20,
        }
    }
}

/// Computed counterparts of every target for one model.
pub fn evaluate_targets(
    model: &DimerModel,
    targets: &ResonanceTargets,
    opts: &ResonanceFitOptions,
) -> Vec<TargetResidual> {
    let ct = if targets.needs_co_tunneling() { resonance_fields(model, &opts.resonance).ok() } else { None };
    // the single-flip resonance is the crossing out of a ferromagnetic
    // ground doublet; the antiferromagnetic branch with equal |C_zz| is excluded
    let ferro = model.effective_coupling().map(|c| c[2][2] > 0.0).unwrap_or(false);
    let sf = if targets.needs_single_flip() && ferro {
        single_flip_fields(model, &opts.single_flip).ok()
    } else {
        None
    };
    targets
        .targets
        .iter()
        .map(|t| {
            let computed = match t.kind {
                TargetKind::CoTunneling { sum_iz } => ct.as_ref().and_then(|m| m.get(&sum_iz).copied()),
                TargetKind::SingleFlip => sf.as_ref().and_then(|s| {
                    let f = if t.field >= 0.0 { s.positive } else { s.negative };
                    f.is_finite().then_some(f)
                }),
            };
            TargetResidual { label: t.label(), target: t.field, computed, weight: t.weight }
        })
        .collect()
}

fn weighted_residuals(res: &[TargetResidual]) -> Vec<f64> {
    let wsum: f64 = res.iter().map(|r| r.weight).sum();
    res.iter().map(|r| (r.weight / wsum).sqrt() * r.deviation()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitValue {
    pub param: FitParam,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Norm of the residual gradient with respect to this parameter (T per cm^-1).
    pub sensitivity: f64,
    /// False when the targets barely constrain the parameter.
    pub identifiable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitValue>,
    /// Weighted RMS deviation (T).
    pub residual: f64,
    pub iterations: u64,
    pub evaluations: usize,
    pub converged: bool,
    /// Ratio of extreme singular values of the weighted Jacobian in
    /// bound-scaled coordinates; infinite when some direction is unconstrained.
    pub condition_number: f64,
    pub residuals: Vec<TargetResidual>,
    pub model: DimerModel,
}

impl FitResult {
    pub fn value(&self, p: FitParam) -> Option<f64> {
        self.params.iter().find(|v| v.param == p).map(|v| v.value)
    }

    /// `key = value` report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for v in &self.params {
            s += &format!("{} = {:.6e} {}\n", v.param, v.value, v.param.unit());
            s += &format!("{}.bounds = [{}, {}]\n", v.param, v.lower, v.upper);
            s += &format!("{}.sensitivity = {:.3e} T/cm^-1\n", v.param, v.sensitivity);
            s += &format!("{}.identifiable = {}\n", v.param, v.identifiable);
        }
        s += &format!("residual_rms = {:.6e} T\n", self.residual);
        s += &format!("iterations = {}\n", self.iterations);
        s += &format!("evaluations = {}\n", self.evaluations);
        s += &format!("converged = {}\n", self.converged);
        s += &format!("condition_number = {:.3e}\n", self.condition_number);
        s += &format!("model = {}\n", self.model.fingerprint());
        s
    }

    /// `target,label,target_T,computed_T,deviation_T,weight` rows.
    pub fn residual_csv(&self) -> String {
        let mut s = String::from("label,target_T,computed_T,deviation_T,weight\n");
        for r in &self.residuals {
            let c = r.computed.map(|c| format!("{c:.9e}")).unwrap_or_default();
            s += &format!("{},{:.9e},{},{:.9e},{}\n", r.label, r.target, c, r.deviation(), r.weight);
        }
        s
    }
}

struct Box_ {
    params: Vec<FitParam>,
    bounds: Vec<(f64, f64)>,
}

impl Box_ {
    fn log_scaled(&self, k: usize) -> bool {
        let (lo, hi) = self.bounds[k];
        lo > 0.0 && hi / lo > 4.0
    }

    fn to_physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(k, &x)| {
                let x = x.clamp(0.0, 1.0);
                let (lo, hi) = self.bounds[k];
                if self.log_scaled(k) {
                    lo * (hi / lo).powf(x)
                } else {
                    lo + x * (hi - lo)
                }
            })
            .collect()
    }

    fn apply(&self, template: &DimerModel, x: &[f64]) -> Result<DimerModel> {
        let mut m = template.clone();
        for (p, v) in self.params.iter().zip(x) {
            m = p.set(&m, *v)?;
        }
        Ok(m)
    }
}

struct Objective<'a> {
    template: &'a DimerModel,
    targets: &'a ResonanceTargets,
    opts: &'a ResonanceFitOptions,
    space: &'a Box_,
    evaluations: std::sync::atomic::AtomicUsize,
}

impl Objective<'_> {
    fn cost_at(&self, u: &[f64]) -> f64 {
        self.evaluations.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        // soft wall outside the unit box
        let outside: f64 = u.iter().map(|x| (x.max(1.0) - 1.0).powi(2) + x.min(0.0).powi(2)).sum();
        let x = self.space.to_physical(u);
        let penalty = MISSING_TARGET_PENALTY * MISSING_TARGET_PENALTY;
        match self.space.apply(self.template, &x) {
            Ok(m) => {
                let r = weighted_residuals(&evaluate_targets(&m, self.targets, self.opts));
                r.iter().map(|v| v * v).sum::<f64>() + penalty * outside
            }
            Err(_) => penalty * (1.0 + outside),
        }
    }
}

struct Borrowed<'o, 'a>(&'o Objective<'a>);

impl CostFunction for Borrowed<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, u: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.0.cost_at(u))
    }
}

fn default_grid_points(d: usize) -> usize {
    match d {
        1 => 25,
        2 => 9,
        3 => 5,
        _ => 4,
    }
}

/// Coarse scan over the bounded box followed by Nelder-Mead refinement.
pub fn fit_resonances(
    template: &DimerModel,
    targets: &ResonanceTargets,
    free: &[FitParam],
    bounds: &BTreeMap<FitParam, (f64, f64)>,
    opts: &ResonanceFitOptions,
) -> Result<FitResult> {
    let mut params: Vec<FitParam> = free.to_vec();
    params.sort();
    params.dedup();
    if params.is_empty() {
        return Err(Error::InvalidArgument("no free parameters".into()));
    }
    let bounds: Vec<(f64, f64)> = params.iter().map(|p| bounds.get(p).copied().unwrap_or(p.default_bounds())).collect();
    for (p, (lo, hi)) in params.iter().zip(&bounds) {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("empty bounds for {p}: [{lo}, {hi}]")));
        }
    }
    let space = Box_ { params: params.clone(), bounds };
    let d = params.len();
    let obj = Objective { template, targets, opts, space: &space, evaluations: Default::default() };

    let n = opts.grid_points.unwrap_or_else(|| default_grid_points(d)).max(2);
    let total = n.pow(d as u32);
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let k = idx % n;
                    idx /= n;
                    k as f64 / (n - 1) as f64
                })
                .collect()
        })
        .collect();
    let costs: Vec<f64> = points.par_iter().map(|u| obj.cost_at(u)).collect();
    let best = (0..total).fold(0, |b, k| if costs[k] < costs[b] { k } else { b });
    let u0 = points[best].clone();

    let h = 1.0 / (n - 1) as f64;
    let mut simplex = vec![u0.clone()];
    for k in 0..d {
        let mut v = u0.clone();
        v[k] = if v[k] + h <= 1.0 { v[k] + h } else { v[k] - h };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.tolerance)
        .map_err(|e| Error::Configuration(e.to_string()))?;
    let res = Executor::new(Borrowed(&obj), solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| Error::Configuration(e.to_string()))?;
    let state = res.state();
    let (u_best, refined_cost) = match state.get_best_param() {
        Some(p) => (p.clone(), state.get_best_cost()),
        None => (u0.clone(), costs[best]),
    };
    let (u_best, cost) = if refined_cost <= costs[best] { (u_best, refined_cost) } else { (u0, costs[best]) };
    let iterations = state.get_iter();
    let stalled = matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::MaxItersReached));

    let x = space.to_physical(&u_best);
    let model = space.apply(template, &x)?;
    let residuals = evaluate_targets(&model, targets, opts);
    let all_found = residuals.iter().all(|r| r.computed.is_some());

    // Jacobian of the weighted residuals in physical units
    let base = weighted_residuals(&residuals);
    let mut jac = DMatrix::<f64>::zeros(base.len(), d);
    for k in 0..d {
        let (lo, hi) = space.bounds[k];
        let step = 1e-3 * (hi - lo);
        let eval = |v: f64| -> Result<Vec<f64>> {
            let m = params[k].set(&model, v)?;
            Ok(weighted_residuals(&evaluate_targets(&m, targets, opts)))
        };
        let (up, dn) = (eval(x[k] + step)?, eval(x[k] - step)?);
        for r in 0..base.len() {
            jac[(r, k)] = (up[r] - dn[r]) / (2.0 * step);
        }
    }
    let scaled = DMatrix::from_fn(jac.nrows(), d, |r, c| jac[(r, c)] * (space.bounds[c].1 - space.bounds[c].0));
    let sv = scaled.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_number = if d > base.len() || smin <= 1e-9 * smax { f64::INFINITY } else { smax / smin };
    let col_scaled: Vec<f64> = (0..d).map(|c| scaled.column(c).norm()).collect();
    let col_max = col_scaled.iter().cloned().fold(0.0, f64::max);

    let values = (0..d)
        .map(|k| FitValue {
            param: params[k],
            value: x[k],
            lower: space.bounds[k].0,
            upper: space.bounds[k].1,
            sensitivity: jac.column(k).norm(),
            identifiable: col_scaled[k] > 1e-6 * col_max.max(1e-300) && col_scaled[k] > 1e-12,
        })
        .collect();
    Ok(FitResult {
        params: values,
        residual: cost.max(0.0).sqrt(),
        iterations,
        evaluations: obj.evaluations.load(std::sync::atomic::Ordering::Relaxed),
        converged: !stalled && all_found && cost.is_finite(),
        condition_number,
        residuals,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unlabelled_fields_are_assigned_outward() {
        let t = ResonanceTargets::from_unlabelled(&[0.0154, -0.0304, 0.0304, 0.0, -0.0154], 1e-6).unwrap();
        let m = t.co_tunneling_fields();
        assert_eq!(m[&HalfInteger::from_int(-1)], 0.0154);
        assert_eq!(m[&HalfInteger::from_int(-2)], 0.0304);
        assert_eq!(m[&HalfInteger::from_int(2)], -0.0304);
        assert_eq!(m[&HalfInteger::ZERO], 0.0);
        let r = t.time_reversed().co_tunneling_fields();
        assert_eq!(r[&HalfInteger::from_int(1)], -0.0154);
    }

    #[test]
    fn invalid_targets() {
        assert!(ResonanceTargets::new(vec![]).is_err());
        let bad = ResonanceTarget { kind: TargetKind::SingleFlip, field: 0.5, weight: 0.0 };
        assert!(ResonanceTargets::new(vec![bad]).is_err());
        assert!("A_HF".parse::<FitParam>().is_ok());
        assert!("B".parse::<FitParam>().is_err());
    }

    #[test]
    fn box_mapping_respects_bounds() {
        let b = Box_ { params: vec![FitParam::AHf, FitParam::JEx], bounds: vec![(0.005, 0.05), (-0.05, 0.05)] };
        let x = b.to_physical(&[0.0, 1.0]);
        assert!((x[0] - 0.005).abs() < 1e-15 && (x[1] - 0.05).abs() < 1e-15);
        let x = b.to_physical(&[1.5, -1.0]);
        assert!((x[0] - 0.05).abs() < 1e-15 && (x[1] + 0.05).abs() < 1e-15);
    }
}
