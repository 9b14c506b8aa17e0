//! Level-crossing detection, refinement, classification and tunnel gaps.

use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::eigen::EigenSolution;
use crate::spectrum::sweep::{field_vector, ZeemanDiagram};
use crate::spectrum::system::{SpinSystem, StateLabel};
use crate::spinops::HalfInteger;

/// Tolerance on nuclear projections for a crossing to count as
/// nuclear-conserving.
pub const NUCLEAR_TOL: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingClass {
    CoTunneling,
    SingleFlip,
    NuclearNonconserving,
}

impl CrossingClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CrossingClass::CoTunneling => "co_tunneling",
            CrossingClass::SingleFlip => "single_flip",
            CrossingClass::NuclearNonconserving => "nuclear_nonconserving",
        }
    }
}

impl std::fmt::Display for CrossingClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One distinct crossing point between two levels. When levels are
/// degenerate (several tracks share one energy), every track pair meeting at
/// the same field and energy is folded into a single event and listed in
/// `track_pairs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossingEvent {
    /// T.
    pub field: f64,
    /// Energy at the crossing, cm^-1.
    pub energy: f64,
    pub track_a: usize,
    pub track_b: usize,
    pub labels_a: StateLabel,
    pub labels_b: StateLabel,
    /// Smallest adiabatic separation near the crossing, cm^-1.
    pub min_gap: Option<f64>,
    /// Field at which `min_gap` occurs, T.
    pub gap_field: Option<f64>,
    pub class: CrossingClass,
    pub sum_iz: Option<HalfInteger>,
    /// `|dE_a/dB - dE_b/dB|` at the crossing, cm^-1 / T.
    pub slope_diff: f64,
    pub track_pairs: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingOptions {
    /// Field resolution of the crossing location, T.
    pub bisection_tol: f64,
    /// Half-width of the adiabatic gap scan around each crossing, T.
    pub gap_window: f64,
    /// Step of the adiabatic gap scan, T.
    pub gap_step: f64,
    pub compute_gaps: bool,
    /// Energy differences below this (cm^-1) carry no sign information, so
    /// pairs that never separate further are not reported as crossing.
    pub zero_tol: f64,
    /// Events closer than this in energy (cm^-1) at the same field merge.
    pub merge_energy_tol: f64,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        CrossingOptions {
            bisection_tol: 1e-8,
            gap_window: 2e-4,
            gap_step: 5e-6,
            compute_gaps: false,
            zero_tol: 1e-7,
            merge_energy_tol: 1e-5,
        }
    }
}

pub fn classify(a: &StateLabel, b: &StateLabel) -> CrossingClass {
    let flip1 = a.jz1 * b.jz1 < 0.0;
    let flip2 = a.jz2 * b.jz2 < 0.0;
    let conserved = nuclear_conserved(a, b);
    match (flip1, flip2) {
        (true, true) if conserved => CrossingClass::CoTunneling,
        (true, false) | (false, true) => CrossingClass::SingleFlip,
        _ => CrossingClass::NuclearNonconserving,
    }
}

pub fn classify_crossing(event: &CrossingEvent) -> CrossingClass {
    classify(&event.labels_a, &event.labels_b)
}

fn nuclear_conserved(a: &StateLabel, b: &StateLabel) -> bool {
    (a.iz1 - b.iz1).abs() < NUCLEAR_TOL && (a.iz2 - b.iz2).abs() < NUCLEAR_TOL
}

fn sum_iz_of(a: &StateLabel, b: &StateLabel) -> Option<HalfInteger> {
    nuclear_conserved(a, b).then(|| HalfInteger::nearest(0.5 * (a.sum_iz() + b.sum_iz())))
}

/// Root of the cubic Hermite interpolant of `d` on `[0, 1]` with end values
/// `d0, d1` and end derivatives `m0, m1`, by bisection.
fn hermite_root(d0: f64, d1: f64, m0: f64, m1: f64, tol: f64) -> f64 {
    let p = |t: f64| {
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * d0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * d1
            + (t3 - t2) * m1
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut plo = p(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let pm = p(mid);
        if pm == 0.0 {
            return mid;
        }
        if (pm < 0.0) == (plo < 0.0) {
            lo = mid;
            plo = pm;
        } else {
            hi = mid;
        }
    }
    // final linear step inside the bracket
    let phi = p(hi);
    if phi != plo {
        (lo - plo * (hi - lo) / (phi - plo)).clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    }
}

struct RawEvent {
    field: f64,
    energy: f64,
    a: usize,
    b: usize,
    k: usize,
    class: CrossingClass,
    slope_diff: f64,
}

/// All crossings between tracks of `manifold` inside `window`.
pub fn find_crossings(
    system: &SpinSystem,
    diagram: &ZeemanDiagram,
    manifold: &[usize],
    window: (f64, f64),
    opts: &CrossingOptions,
) -> Result<Vec<CrossingEvent>> {
    let grid = &diagram.field_grid;
    let (glo, ghi) = (grid[0].min(grid[grid.len() - 1]), grid[0].max(grid[grid.len() - 1]));
    let (wlo, whi) = (window.0.min(window.1), window.0.max(window.1));
    if grid.len() < 2 || wlo < glo - 1e-12 || whi > ghi + 1e-12 {
        return Err(Error::Range { lo: wlo, hi: whi, grid_lo: glo, grid_hi: ghi });
    }
    if manifold.iter().any(|&t| t >= diagram.n_tracks()) {
        return Err(Error::InvalidArgument("manifold names a track outside the diagram".into()));
    }

    let mut raw = Vec::new();
    for (ia, &a) in manifold.iter().enumerate() {
        for &b in &manifold[ia + 1..] {
            raw.extend(pair_crossings(diagram, a, b, (wlo, whi), opts));
        }
    }

    let mut events = merge_events(diagram, raw, opts);
    if opts.compute_gaps {
        let cache = SolveCache::new(system, diagram);
        for ev in &mut events {
            let (gap, at) = min_gap(&cache, diagram, ev, opts)?;
            ev.min_gap = Some(gap);
            ev.gap_field = Some(at);
        }
    }
    events.sort_by(|x, y| x.field.total_cmp(&y.field).then(x.energy.total_cmp(&y.energy)));
    Ok(events)
}

fn pair_crossings(
    d: &ZeemanDiagram,
    a: usize,
    b: usize,
    window: (f64, f64),
    opts: &CrossingOptions,
) -> Vec<RawEvent> {
    let grid = &d.field_grid;
    let diff = |k: usize| d.energies[k][a] - d.energies[k][b];
    let mut out = Vec::new();
    // last grid point with a definite sign
    let mut last: Option<usize> = None;
    for k in 0..grid.len() {
        let dk = diff(k);
        if dk.abs() <= opts.zero_tol {
            continue;
        }
        if let Some(j) = last {
            let dj = diff(j);
            if (dj < 0.0) != (dk < 0.0) {
                if let Some(ev) = refine_pair(d, a, b, j, k, opts) {
                    if ev.field >= window.0 - opts.bisection_tol
                        && ev.field <= window.1 + opts.bisection_tol
                    {
                        out.push(ev);
                    }
                }
            }
        }
        last = Some(k);
    }
    out
}

fn refine_pair(
    d: &ZeemanDiagram,
    a: usize,
    b: usize,
    j: usize,
    k: usize,
    opts: &CrossingOptions,
) -> Option<RawEvent> {
    let (h0, h1) = (d.field_grid[j], d.field_grid[k]);
    let span = h1 - h0;
    let d0 = d.energies[j][a] - d.energies[j][b];
    let d1 = d.energies[k][a] - d.energies[k][b];
    let m0 = (d.slopes[j][a] - d.slopes[j][b]) * span;
    let m1 = (d.slopes[k][a] - d.slopes[k][b]) * span;
    let t = hermite_root(d0, d1, m0, m1, (opts.bisection_tol / span.abs()).min(1e-3));
    let field = h0 + t * span;

    // one energy at the crossing from the lower-curvature end of track a
    let ea = if t < 0.5 {
        d.energies[j][a] + d.slopes[j][a] * (field - h0)
    } else {
        d.energies[k][a] + d.slopes[k][a] * (field - h1)
    };
    let la = &d.labels[j][a];
    let lb = &d.labels[j][b];
    let sd = if t < 0.5 { d.slopes[j][a] - d.slopes[j][b] } else { d.slopes[k][a] - d.slopes[k][b] };
    Some(RawEvent {
        field,
        energy: ea,
        a,
        b,
        k: if t < 0.5 { j } else { k },
        class: classify(la, lb),
        slope_diff: sd.abs(),
    })
}

fn merge_events(d: &ZeemanDiagram, mut raw: Vec<RawEvent>, opts: &CrossingOptions) -> Vec<CrossingEvent> {
    raw.sort_by(|x, y| x.field.total_cmp(&y.field));
    let field_tol = (10.0 * opts.bisection_tol).max(1e-9);
    let mut groups: Vec<Vec<RawEvent>> = Vec::new();
    'outer: for ev in raw {
        for g in groups.iter_mut().rev() {
            let head = &g[0];
            if ev.field - head.field > field_tol {
                break;
            }
            if (ev.energy - head.energy).abs() < opts.merge_energy_tol {
                g.push(ev);
                continue 'outer;
            }
        }
        groups.push(vec![ev]);
    }

    groups
        .into_iter()
        .map(|g| {
            // representative: most specific class, nuclear-conserving first
            let key = |e: &RawEvent| {
                let conserved = nuclear_conserved(&d.labels[e.k][e.a], &d.labels[e.k][e.b]);
                (e.class, !conserved, e.a, e.b)
            };
            let rep = g.iter().min_by_key(|e| key(e)).expect("nonempty group");
            let la = d.labels[rep.k][rep.a];
            let lb = d.labels[rep.k][rep.b];
            let field = g.iter().map(|e| e.field).sum::<f64>() / g.len() as f64;
            CrossingEvent {
                field,
                energy: rep.energy,
                track_a: rep.a,
                track_b: rep.b,
                labels_a: la,
                labels_b: lb,
                min_gap: None,
                gap_field: None,
                class: rep.class,
                sum_iz: sum_iz_of(&la, &lb),
                slope_diff: rep.slope_diff,
                track_pairs: g.iter().map(|e| (e.a, e.b)).collect(),
            }
        })
        .collect()
}

/// Small memo of solutions keyed by exact field value.
struct SolveCache<'a> {
    system: &'a SpinSystem,
    n: usize,
    direction: [f64; 3],
    entries: RefCell<Vec<(u64, std::rc::Rc<EigenSolution>)>>,
}

impl<'a> SolveCache<'a> {
    const CAPACITY: usize = 8;

    fn new(system: &'a SpinSystem, d: &ZeemanDiagram) -> Self {
        SolveCache { system, n: d.n_tracks(), direction: d.direction, entries: RefCell::new(Vec::new()) }
    }

    fn get(&self, h: f64) -> Result<std::rc::Rc<EigenSolution>> {
        let key = h.to_bits();
        if let Some((_, s)) = self.entries.borrow().iter().find(|(k, _)| *k == key) {
            return Ok(s.clone());
        }
        let sol = std::rc::Rc::new(self.system.solve(field_vector(h, self.direction), Some(self.n))?);
        let mut e = self.entries.borrow_mut();
        if e.len() >= Self::CAPACITY {
            e.remove(0);
        }
        e.push((key, sol.clone()));
        Ok(sol)
    }
}

/// Minimum separation of the two adiabatic states spanning the diabatic
/// pair of `ev`, scanned on a local grid that includes the crossing field.
fn min_gap(
    cache: &SolveCache<'_>,
    d: &ZeemanDiagram,
    ev: &CrossingEvent,
    opts: &CrossingOptions,
) -> Result<(f64, f64)> {
    let k = d.interval_of(ev.field);
    let hk = d.field_grid[k];
    let refsol = cache.get(hk)?;
    let va = refsol.state(d.eig_index[k][ev.track_a]).to_owned();
    let vb = refsol.state(d.eig_index[k][ev.track_b]).to_owned();

    let steps = (opts.gap_window / opts.gap_step).round().max(0.0) as i64;
    let mut fields: Vec<f64> = (-steps..=steps).map(|i| ev.field + i as f64 * opts.gap_step).collect();
    fields.push(ev.field);

    let mut best = (f64::INFINITY, ev.field);
    for h in fields {
        let sol = cache.get(h)?;
        let ov_a = sol.states.adjoint() * &va;
        let ov_b = sol.states.adjoint() * &vb;
        let mut w: Vec<(f64, usize)> = (0..sol.len())
            .map(|i| (ov_a[i].norm_sqr() + ov_b[i].norm_sqr(), i))
            .collect();
        w.sort_by(|x, y| y.0.total_cmp(&x.0));
        let gap = (sol.energies[w[0].1] - sol.energies[w[1].1]).abs();
        if gap < best.0 {
            best = (gap, h);
        }
    }
    Ok(best)
}

/// Co-tunneling crossings grouped by conserved total nuclear projection;
/// each value is the mean field of that group (T).
pub fn co_tunneling_fields(events: &[CrossingEvent]) -> BTreeMap<HalfInteger, f64> {
    let mut acc: BTreeMap<HalfInteger, (f64, usize)> = BTreeMap::new();
    for ev in events.iter().filter(|e| e.class == CrossingClass::CoTunneling) {
        if let Some(s) = ev.sum_iz {
            let e = acc.entry(s).or_insert((0.0, 0));
            e.0 += ev.field;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Distinct co-tunneling fields after merging values closer than `tol` (T).
pub fn distinct_fields(events: &[CrossingEvent], class: CrossingClass, tol: f64) -> Vec<f64> {
    let mut f: Vec<f64> = events.iter().filter(|e| e.class == class).map(|e| e.field).collect();
    f.sort_by(f64::total_cmp);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for x in f {
        match out.last_mut() {
            Some(g) if x - g[g.len() - 1] < tol => g.push(x),
            _ => out.push(vec![x]),
        }
    }
    out.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(jz1: f64, jz2: f64, iz1: f64, iz2: f64) -> StateLabel {
        StateLabel { jz1, jz2, iz1, iz2, purity: 1.0 }
    }

    #[test]
    fn classification_rules() {
        let a = label(-6.0, -6.0, 1.5, 1.5);
        assert_eq!(classify(&a, &label(6.0, 6.0, 1.5, 1.5)), CrossingClass::CoTunneling);
        assert_eq!(classify(&label(6.0, -6.0, 0.5, 0.5), &label(6.0, 6.0, 0.5, 0.5)), CrossingClass::SingleFlip);
        assert_eq!(
            classify(&label(-6.0, -6.0, 0.5, -0.5), &label(6.0, 6.0, -0.5, 0.5)),
            CrossingClass::NuclearNonconserving
        );
    }

    #[test]
    fn hermite_root_of_line_is_exact() {
        let t = hermite_root(-1.0, 3.0, 4.0, 4.0, 1e-12);
        assert!((t - 0.25).abs() < 1e-12);
    }
}
