//! Working representation of a dimer Hamiltonian, either on the full product
//! space or projected onto the ligand-field ground doublets.

use faer::{ColRef, Mat, MatRef, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{dimer_terms, ligand_field_h, DimerModel, IonModel};
use crate::spectrum::eigen::{solve_blocks, Blocks, EigenSolution, LABEL_WEIGHTS};
use crate::spinops::{angular_momentum_ops, SparseOperator};

/// Minimum separation (cm^-1) between an ion's ground doublet and its next
/// ligand-field level for the projected model to be accepted.
pub const DOUBLET_ISOLATION_MIN: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    Full,
    #[default]
    Effective,
}

impl std::str::FromStr for ModelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelMode::Full),
            "effective" => Ok(ModelMode::Effective),
            other => Err(Error::InvalidArgument(format!("unknown model mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelMode::Full => "full",
            ModelMode::Effective => "effective",
        })
    }
}

/// Expectation values of the four z projections plus the weight of the
/// dominant basis state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateLabel {
    pub jz1: f64,
    pub jz2: f64,
    pub iz1: f64,
    pub iz2: f64,
    pub purity: f64,
}

impl StateLabel {
    pub fn sum_iz(&self) -> f64 {
        self.iz1 + self.iz2
    }

    /// Nearest half-integer nuclear projections.
    pub fn nuclear_pair(&self) -> (f64, f64) {
        ((self.iz1 * 2.0).round() / 2.0, (self.iz2 * 2.0).round() / 2.0)
    }

    /// Electronic configuration as signs of the two projections.
    pub fn electronic_signs(&self) -> (i8, i8) {
        (sign_of(self.jz1), sign_of(self.jz2))
    }
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Clone, Debug)]
pub struct SpinSystem {
    mode: ModelMode,
    slot_dims: [usize; 4],
    /// z projection of each slot on every working basis state.
    projections: [Vec<f64>; 4],
    label_diag: Vec<f64>,
    h0: SparseOperator,
    zeeman: [SparseOperator; 3],
    /// Separation of each ion's ground doublet from its next level (cm^-1).
    doublet_gaps: [f64; 2],
}

impl SpinSystem {
    pub fn new(model: &DimerModel, mode: ModelMode) -> Result<Self> {
        match mode {
            ModelMode::Full => Self::full(model),
            ModelMode::Effective => Self::effective(model),
        }
    }

    pub fn full(model: &DimerModel) -> Result<Self> {
        let terms = dimer_terms(model)?;
        let spaces = model.spaces()?;
        let slot_dims = [
            spaces[0].dimension(),
            spaces[1].dimension(),
            spaces[2].dimension(),
            spaces[3].dimension(),
        ];
        let slot_m: Vec<Vec<f64>> = spaces.iter().map(|s| s.m_values()).collect();
        let doublet_gaps = [doublet(&model.ion1)?.1, doublet(&model.ion2)?.1];
        Ok(Self::assemble(
            ModelMode::Full,
            slot_dims,
            &slot_m,
            terms.zero_field.to_sparse(),
            [terms.zeeman[0].to_sparse(), terms.zeeman[1].to_sparse(), terms.zeeman[2].to_sparse()],
            doublet_gaps,
        ))
    }

    /// Projection onto `span{ground doublet of ion 1} (x) span{ground doublet
    /// of ion 2} (x) nuclear space`. Each doublet is rotated to diagonalize the
    /// projected `Jz`, so the two working states carry `+|jz|` then `-|jz|`.
    /// Couplings to excited ligand-field levels enter only at second order
    /// and are dropped.
    pub fn effective(model: &DimerModel) -> Result<Self> {
        let (w1, gap1) = doublet(&model.ion1)?;
        let (w2, gap2) = doublet(&model.ion2)?;
        for (ion, gap) in [(1, gap1), (2, gap2)] {
            if gap < DOUBLET_ISOLATION_MIN {
                return Err(Error::DoubletIsolation { ion, gap, required: DOUBLET_ISOLATION_MIN });
            }
        }
        let terms = dimer_terms(model)?;
        let spaces = model.spaces()?;
        let bases: [Option<MatRef<'_, C64>>; 4] = [Some(w1.as_ref()), Some(w2.as_ref()), None, None];
        let project = |op: &crate::hamiltonian::OperatorSum| op.to_projected(&bases);
        let h0 = project(&terms.zero_field);
        let z = [project(&terms.zeeman[0]), project(&terms.zeeman[1]), project(&terms.zeeman[2])];
        // roundoff left by the projection would otherwise merge invariant blocks
        let scale = h0
            .col_iter()
            .flat_map(|c| c.iter().map(|x| x.norm()).collect::<Vec<_>>())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let thr = 1e-13 * scale;
        let jz_proj = |w: &Mat<C64>, ion: &IonModel| -> Vec<f64> {
            let jz = angular_momentum_ops(ion.electronic_space().expect("validated")).z;
            let p = w.adjoint() * jz.data() * w;
            vec![p[(0, 0)].re, p[(1, 1)].re]
        };
        let slot_m = vec![
            jz_proj(&w1, &model.ion1),
            jz_proj(&w2, &model.ion2),
            spaces[2].m_values(),
            spaces[3].m_values(),
        ];
        Ok(Self::assemble(
            ModelMode::Effective,
            [2, 2, spaces[2].dimension(), spaces[3].dimension()],
            &slot_m,
            SparseOperator::from_dense(h0.as_ref(), thr),
            [
                SparseOperator::from_dense(z[0].as_ref(), thr),
                SparseOperator::from_dense(z[1].as_ref(), thr),
                SparseOperator::from_dense(z[2].as_ref(), thr),
            ],
            [gap1, gap2],
        ))
    }

    fn assemble(
        mode: ModelMode,
        slot_dims: [usize; 4],
        slot_m: &[Vec<f64>],
        h0: SparseOperator,
        zeeman: [SparseOperator; 3],
        doublet_gaps: [f64; 2],
    ) -> Self {
        let dim: usize = slot_dims.iter().product();
        let mut projections: [Vec<f64>; 4] = Default::default();
        for p in projections.iter_mut() {
            p.reserve(dim);
        }
        let mut label_diag = Vec::with_capacity(dim);
        for idx in 0..dim {
            let mut rem = idx;
            let mut digits = [0usize; 4];
            for s in (0..4).rev() {
                digits[s] = rem % slot_dims[s];
                rem /= slot_dims[s];
            }
            let mut l = 0.0;
            for s in 0..4 {
                let m = slot_m[s][digits[s]];
                projections[s].push(m);
                l += LABEL_WEIGHTS[s] * m;
            }
            label_diag.push(l);
        }
        SpinSystem { mode, slot_dims, projections, label_diag, h0, zeeman, doublet_gaps }
    }

    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.label_diag.len()
    }

    pub fn slot_dims(&self) -> [usize; 4] {
        self.slot_dims
    }

    pub fn doublet_gaps(&self) -> [f64; 2] {
        self.doublet_gaps
    }

    pub fn zero_field_operator(&self) -> &SparseOperator {
        &self.h0
    }

    pub fn zeeman_operator(&self, axis: usize) -> &SparseOperator {
        &self.zeeman[axis]
    }

    /// Dense `H(B)` in the working basis.
    pub fn dense_hamiltonian(&self, field: [f64; 3]) -> Mat<C64> {
        let mut m = self.h0.to_dense();
        for (axis, b) in field.iter().enumerate() {
            for &(r, c, v) in self.zeeman[axis].entries() {
                m[(r, c)] += v * *b;
            }
        }
        m
    }

    fn blocks_for(&self, field: [f64; 3]) -> Blocks {
        let mut ops = vec![&self.h0];
        for (axis, b) in field.iter().enumerate() {
            if *b != 0.0 {
                ops.push(&self.zeeman[axis]);
            }
        }
        Blocks::from_patterns(self.dim(), &ops)
    }

    /// Invariant block structure for fields along `direction`.
    pub fn block_sizes(&self, direction: [f64; 3]) -> Vec<usize> {
        self.blocks_for(direction).members.iter().map(Vec::len).collect()
    }

    /// Lowest `n_lowest` eigenpairs (all when `None`) at field vector `field` (T).
    pub fn solve(&self, field: [f64; 3], n_lowest: Option<usize>) -> Result<EigenSolution> {
        let blocks = self.blocks_for(field);
        let parts = [
            (&self.h0, 1.0),
            (&self.zeeman[0], field[0]),
            (&self.zeeman[1], field[1]),
            (&self.zeeman[2], field[2]),
        ];
        solve_blocks(&parts, &blocks, &self.label_diag, n_lowest)
    }

    pub fn label(&self, v: ColRef<'_, C64>) -> StateLabel {
        let mut acc = [0.0; 4];
        let mut purity = 0.0_f64;
        for k in 0..v.nrows() {
            let w = v[k].norm_sqr();
            if w == 0.0 {
                continue;
            }
            purity = purity.max(w);
            for (s, a) in acc.iter_mut().enumerate() {
                *a += w * self.projections[s][k];
            }
        }
        StateLabel { jz1: acc[0], jz2: acc[1], iz1: acc[2], iz2: acc[3], purity }
    }

    /// `dE/dB` along `direction` (cm^-1/T) by Hellmann-Feynman.
    pub fn slope(&self, v: ColRef<'_, C64>, direction: [f64; 3]) -> f64 {
        let mut s = 0.0;
        for (axis, d) in direction.iter().enumerate() {
            if *d != 0.0 {
                s += d * self.zeeman[axis].expectation(v);
            }
        }
        s
    }
}

/// Lowest two ligand-field states of `ion`, rotated so that `Jz` is diagonal
/// within them (positive projection first), and the gap to the third level.
fn doublet(ion: &IonModel) -> Result<(Mat<C64>, f64)> {
    let lf = ligand_field_h(ion)?;
    let n = lf.dim();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "electronic multiplet too small for a ground doublet".into(),
        ));
    }
    let evd = lf
        .data()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let e: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let gap = e[2] - e[1];
    let w = evd.U().subcols(0, 2).to_owned();
    let jz = angular_momentum_ops(ion.electronic_space()?).z;
    let p = w.adjoint() * jz.data() * &w;
    let p = Mat::<C64>::from_fn(2, 2, |i, j| (p[(i, j)] + p[(j, i)].conj()) * 0.5);
    let r = p
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let rotated = &w * r.U();
    // eigenvalues ascending: put the positive projection first
    let mut out = Mat::<C64>::zeros(n, 2);
    for (dst, src) in [(0, 1), (1, 0)] {
        let col = rotated.col(src);
        let mut best = 0;
        for i in 0..n {
            if col[i].norm() > col[best].norm() + 1e-12 {
                best = i;
            }
        }
        let phase = col[best].conj() / col[best].norm();
        for i in 0..n {
            out[(i, dst)] = col[i] * phase;
        }
    }
    Ok((out, gap))
}

/// Energy of the first excited electronic level above the ground level at zero
/// field, with nuclear spins removed (cm^-1). The ground doublet of the dimer
/// counts as one level.
pub fn electronic_gap(model: &DimerModel) -> Result<f64> {
    let sys = SpinSystem::full(&model.clone().without_nuclear_spins())?;
    let sol = sys.solve([0.0; 3], None)?;
    let e0 = sol.energies[0];
    sol.energies
        .iter()
        .find(|&&e| e - e0 > 1e-6)
        .map(|e| e - e0)
        .ok_or_else(|| Error::InvalidArgument("spectrum has a single level".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_dimension_and_labels() {
        let sys = SpinSystem::effective(&DimerModel::tb2_paper()).unwrap();
        assert_eq!(sys.dim(), 64);
        let sol = sys.solve([0.0, 0.0, 0.2], None).unwrap();
        let l = sys.label(sol.state(0));
        assert!((l.jz1 + 6.0).abs() < 1e-9 && (l.jz2 + 6.0).abs() < 1e-9);
        for k in 0..64 {
            let l = sys.label(sol.state(k));
            assert!(l.jz1.abs() <= 6.0 + 1e-9 && l.iz1.abs() <= 1.5 + 1e-9);
        }
    }

    #[test]
    fn full_blocks_are_small_along_easy_axis() {
        let sys = SpinSystem::full(&DimerModel::tb2_paper_with_exchange()).unwrap();
        assert_eq!(sys.dim(), 2704);
        let sizes = sys.block_sizes([0.0, 0.0, 1.0]);
        assert_eq!(sizes.iter().sum::<usize>(), 2704);
        assert!(*sizes.iter().max().unwrap() < 300);
    }

    #[test]
    fn poorly_isolated_doublet_rejected() {
        let mut model = DimerModel::tb2_paper();
        model.ion2.lf.a20 = 1.0;
        model.ion2.lf.a40 = 0.0;
        assert!(matches!(
            SpinSystem::effective(&model),
            Err(Error::DoubletIsolation { ion: 2, .. })
        ));
    }

    #[test]
    fn gaps_with_and_without_exchange() {
        let g = electronic_gap(&DimerModel::tb2_paper()).unwrap();
        assert!((g - 3.208).abs() < 0.01, "{g}");
        let g = electronic_gap(&DimerModel::tb2_paper_with_exchange()).unwrap();
        assert!((g - 4.605).abs() < 0.01, "{g}");
    }
}
