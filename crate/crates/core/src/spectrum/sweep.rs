//! Field sweeps with diabatic track stitching.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::norm3;
use crate::spectrum::eigen::EigenSolution;
use crate::spectrum::system::{SpinSystem, StateLabel};

/// Energies, labels and slopes of `n_tracks` diabatic tracks on a field grid.
///
/// Track `t` at grid point `k` is eigenpair `eig_index[k][t]` of the sorted
/// spectrum at that point. Tracks are numbered by energy at the first point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeemanDiagram {
    pub field_grid: Vec<f64>,
    pub direction: [f64; 3],
    pub energies: Vec<Vec<f64>>,
    pub labels: Vec<Vec<StateLabel>>,
    /// `dE/dB` along `direction`, cm^-1 / T.
    pub slopes: Vec<Vec<f64>>,
    pub eig_index: Vec<Vec<usize>>,
}

impl ZeemanDiagram {
    pub fn n_points(&self) -> usize {
        self.field_grid.len()
    }

    pub fn n_tracks(&self) -> usize {
        self.energies.first().map_or(0, Vec::len)
    }

    pub fn track_energies(&self, track: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[track]).collect()
    }

    /// Tracks whose electronic projections at the first grid point both
    /// exceed `min_abs_jz` in magnitude.
    pub fn manifold_by_jz(&self, min_abs_jz: f64) -> Vec<usize> {
        (0..self.n_tracks())
            .filter(|&t| {
                let l = &self.labels[0][t];
                l.jz1.abs() >= min_abs_jz && l.jz2.abs() >= min_abs_jz
            })
            .collect()
    }

    /// Grid index `k` with `field_grid[min(k, k+1)..]` bracketing `h`.
    pub(crate) fn interval_of(&self, h: f64) -> usize {
        let n = self.n_points();
        for k in 0..n - 1 {
            let (a, b) = (self.field_grid[k], self.field_grid[k + 1]);
            if (a.min(b)..=a.max(b)).contains(&h) {
                return k;
            }
        }
        n - 2
    }
}

pub fn field_vector(magnitude: f64, direction: [f64; 3]) -> [f64; 3] {
    [magnitude * direction[0], magnitude * direction[1], magnitude * direction[2]]
}

/// Evenly spaced grid including both ends.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn normalized(direction: [f64; 3]) -> Result<[f64; 3]> {
    let n = norm3(&direction);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidArgument("sweep direction must be a nonzero vector".into()));
    }
    Ok([direction[0] / n, direction[1] / n, direction[2] / n])
}

/// Diagonalizes at every grid point and stitches the lowest `n_tracks`
/// states by greedy maximum-overlap matching between neighbours.
pub fn zeeman_sweep(
    system: &SpinSystem,
    grid: &[f64],
    direction: [f64; 3],
    n_tracks: Option<usize>,
) -> Result<ZeemanDiagram> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least two field points".into()));
    }
    let ascending = grid.windows(2).all(|w| w[1] > w[0]);
    let descending = grid.windows(2).all(|w| w[1] < w[0]);
    if !(ascending || descending) || grid.iter().any(|h| !h.is_finite()) {
        return Err(Error::InvalidArgument("sweep grid must be strictly monotone".into()));
    }
    let direction = normalized(direction)?;
    let n = n_tracks.unwrap_or(system.dim()).min(system.dim());

    let mut diagram = ZeemanDiagram {
        field_grid: grid.to_vec(),
        direction,
        energies: Vec::with_capacity(grid.len()),
        labels: Vec::with_capacity(grid.len()),
        slopes: Vec::with_capacity(grid.len()),
        eig_index: Vec::with_capacity(grid.len()),
    };
    let mut prev: Option<EigenSolution> = None;
    let mut prev_index: Vec<usize> = (0..n).collect();
    for &h in grid {
        let sol = system.solve(field_vector(h, direction), Some(n))?;
        let index: Vec<usize> = match &prev {
            None => (0..n).collect(),
            Some(p) => {
                let assign = match_states(&p.states, &sol.states);
                // track t sat at prev_index[t]; follow it to its match
                prev_index.iter().map(|&i| assign[i]).collect()
            }
        };
        diagram.energies.push(index.iter().map(|&i| sol.energies[i]).collect());
        diagram.labels.push(index.iter().map(|&i| system.label(sol.state(i))).collect());
        diagram
            .slopes
            .push(index.iter().map(|&i| system.slope(sol.state(i), direction)).collect());
        diagram.eig_index.push(index.clone());
        prev_index = index;
        prev = Some(sol);
    }
    Ok(diagram)
}

/// `assign[i]` is the column of `cur` matched to column `i` of `prev`.
pub(crate) fn match_states(prev: &Mat<C64>, cur: &Mat<C64>) -> Vec<usize> {
    let n = prev.ncols();
    let overlap = prev.adjoint() * cur;
    let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let w = overlap[(i, j)].norm_sqr();
            if w > 1e-12 {
                cand.push((w, i, j));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assign = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, i, j) in cand {
        if assign[i] == usize::MAX && !taken[j] {
            assign[i] = j;
            taken[j] = true;
        }
    }
    // states that moved out of the tracked window: pair leftovers in order
    let mut free = (0..n).filter(|&j| !taken[j]);
    for a in assign.iter_mut() {
        if *a == usize::MAX {
            *a = free.next().expect("as many free columns as unassigned rows");
        }
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::DimerModel;

    #[test]
    fn decoupled_no_hyperfine_tracks_are_straight() {
        let model = DimerModel::tb2_paper().decoupled().with_hyperfine(0.0, 0.0);
        let sys = SpinSystem::effective(&model).unwrap();
        let grid = linear_grid(-0.05, 0.05, 11);
        let d = zeeman_sweep(&sys, &grid, [0.0, 0.0, 1.0], None).unwrap();
        let gmu = 1.5 * crate::units::MU_B;
        for t in 0..d.n_tracks() {
            let l = d.labels[0][t];
            let expected = gmu * (l.jz1 + l.jz2);
            for k in 0..d.n_points() {
                assert!((d.slopes[k][t] - expected).abs() < 1e-10);
            }
        }
        // +gJ muB J.B: the +6,+6 states are lowest at negative field
        let t = 0;
        assert!(d.labels[0][t].jz1 > 5.9 && d.labels[10][t].jz1 > 5.9);
    }

    #[test]
    fn bad_grid_rejected() {
        let sys = SpinSystem::effective(&DimerModel::tb2_paper()).unwrap();
        assert!(zeeman_sweep(&sys, &[0.0], [0.0, 0.0, 1.0], None).is_err());
        assert!(zeeman_sweep(&sys, &[0.0, 0.1, 0.05], [0.0, 0.0, 1.0], None).is_err());
    }
}
