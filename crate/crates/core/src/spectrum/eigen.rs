//! Hermitian eigensolver that splits the matrix into the connected blocks of
//! its sparsity pattern before handing each block to a dense solver.

use faer::{ColRef, Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spinops::{OperatorMatrix, SparseOperator, SpinSpace};

/// Energies closer than this (cm^-1) are treated as one degenerate cluster.
pub(crate) const DEGENERACY_TOL: f64 = 1e-8;

/// Weights of the per-slot projections in the operator used to fix the basis
/// inside degenerate clusters. Incommensurate so that distinct product
/// states never share a value.
pub(crate) const LABEL_WEIGHTS: [f64; 4] = [1.0, 0.31, 0.071, 0.0173];

#[derive(Clone, Debug)]
pub struct EigenSolution {
    /// Ascending, cm^-1.
    pub energies: Vec<f64>,
    /// Column eigenvectors, one per energy.
    pub states: Mat<C64>,
    /// `max |H v - E v|` over all returned pairs, cm^-1.
    pub residual: f64,
    /// Index of the invariant block each eigenvector lives in.
    pub block: Vec<usize>,
}

impl EigenSolution {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn state(&self, i: usize) -> ColRef<'_, C64> {
        self.states.col(i)
    }

    pub fn spectral_range(&self) -> f64 {
        match (self.energies.first(), self.energies.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// Partition of basis indices into invariant subspaces.
#[derive(Clone, Debug)]
pub(crate) struct Blocks {
    pub members: Vec<Vec<usize>>,
    pub block_of: Vec<usize>,
    pub local: Vec<usize>,
}

impl Blocks {
    /// Connected components of the union of the nonzero patterns.
    pub fn from_patterns(dim: usize, ops: &[&SparseOperator]) -> Blocks {
        let mut parent: Vec<usize> = (0..dim).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for op in ops {
            for &(r, c, _) in op.entries() {
                if r != c {
                    let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut root_block = vec![usize::MAX; dim];
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut block_of = vec![0; dim];
        let mut local = vec![0; dim];
        for i in 0..dim {
            let r = find(&mut parent, i);
            if root_block[r] == usize::MAX {
                root_block[r] = members.len();
                members.push(Vec::new());
            }
            let b = root_block[r];
            block_of[i] = b;
            local[i] = members[b].len();
            members[b].push(i);
        }
        Blocks { members, block_of, local }
    }
}

/// Diagonal of the label operator on a composite space.
pub(crate) fn label_diagonal(spaces: &[SpinSpace]) -> Vec<f64> {
    let dims: Vec<usize> = spaces.iter().map(SpinSpace::dimension).collect();
    let d: usize = dims.iter().product();
    (0..d)
        .map(|mut idx| {
            let mut acc = 0.0;
            for s in (0..spaces.len()).rev() {
                let k = idx % dims[s];
                idx /= dims[s];
                acc += LABEL_WEIGHTS.get(s).copied().unwrap_or(0.0) * spaces[s].m_at(k);
            }
            acc
        })
        .collect()
}

/// Full eigendecomposition of a Hermitian operator.
pub fn diagonalize(h: &OperatorMatrix) -> Result<EigenSolution> {
    let dev = h.hermiticity_deviation();
    if dev > 1e-12 {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let sparse = SparseOperator::from_dense(h.data(), 0.0);
    let blocks = Blocks::from_patterns(h.dim(), &[&sparse]);
    let labels = label_diagonal(h.spaces());
    solve_blocks(&[(&sparse, 1.0)], &blocks, &labels, None)
}

/// Eigenpairs of `sum_k w_k A_k`, whose pattern must be covered by `blocks`.
/// Returns the `n_lowest` lowest pairs (all when `None`).
pub(crate) fn solve_blocks(
    parts: &[(&SparseOperator, f64)],
    blocks: &Blocks,
    label_diag: &[f64],
    n_lowest: Option<usize>,
) -> Result<EigenSolution> {
    let dim = blocks.block_of.len();
    let mut mats: Vec<Mat<C64>> =
        blocks.members.iter().map(|m| Mat::<C64>::zeros(m.len(), m.len())).collect();
    for &(op, w) in parts {
        if w == 0.0 {
            continue;
        }
        for &(r, c, v) in op.entries() {
            let b = blocks.block_of[r];
            debug_assert_eq!(b, blocks.block_of[c], "pattern not covered by blocks");
            mats[b][(blocks.local[r], blocks.local[c])] += v * w;
        }
    }

    struct Pair {
        energy: f64,
        block: usize,
        col: usize,
    }
    let mut pairs = Vec::with_capacity(dim);
    let mut vecs: Vec<Mat<C64>> = Vec::with_capacity(mats.len());
    let mut residual = 0.0_f64;
    for (b, m) in mats.iter().enumerate() {
        let labels: Vec<f64> = blocks.members[b].iter().map(|&i| label_diag[i]).collect();
        let (e, v, r) = solve_dense_block(m, &labels)?;
        residual = residual.max(r);
        for (col, &energy) in e.iter().enumerate() {
            pairs.push(Pair { energy, block: b, col });
        }
        vecs.push(v);
    }
    pairs.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.block.cmp(&b.block)));
    let keep = n_lowest.unwrap_or(dim).min(dim);
    pairs.truncate(keep);

    let mut states = Mat::<C64>::zeros(dim, keep);
    for (k, p) in pairs.iter().enumerate() {
        for (li, &gi) in blocks.members[p.block].iter().enumerate() {
            states[(gi, k)] = vecs[p.block][(li, p.col)];
        }
    }
    Ok(EigenSolution {
        energies: pairs.iter().map(|p| p.energy).collect(),
        block: pairs.iter().map(|p| p.block).collect(),
        states,
        residual,
    })
}

/// Energies and expectation values of `sum_k u_k B_k` for every eigenstate,
/// sorted by energy. No basis fixing: sums over degenerate clusters are
/// basis independent, which is all thermal averages need.
pub(crate) fn solve_blocks_expectation(
    parts: &[(&SparseOperator, f64)],
    observable: &[(&SparseOperator, f64)],
    blocks: &Blocks,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut hs: Vec<Mat<C64>> = blocks.members.iter().map(|m| Mat::<C64>::zeros(m.len(), m.len())).collect();
    for &(op, w) in parts {
        if w == 0.0 {
            continue;
        }
        for &(r, c, v) in op.entries() {
            hs[blocks.block_of[r]][(blocks.local[r], blocks.local[c])] += v * w;
        }
    }
    let mut os: Vec<Vec<(usize, usize, C64)>> = vec![Vec::new(); hs.len()];
    for &(op, w) in observable {
        if w == 0.0 {
            continue;
        }
        for &(r, c, v) in op.entries() {
            let b = blocks.block_of[r];
            // entries coupling different blocks never reach an eigenstate
            if b == blocks.block_of[c] {
                os[b].push((blocks.local[r], blocks.local[c], v * w));
            }
        }
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(blocks.block_of.len());
    for (h, o) in hs.iter().zip(&os) {
        let n = h.nrows();
        if n == 1 {
            pairs.push((h[(0, 0)].re, o.iter().map(|e| e.2.re).sum()));
            continue;
        }
        let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        let u = evd.U();
        for k in 0..n {
            let acc: f64 = o.iter().map(|&(r, c, v)| (u[(r, k)].conj() * v * u[(c, k)]).re).sum();
            pairs.push((evd.S().column_vector()[k].re, acc));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

fn solve_dense_block(m: &Mat<C64>, labels: &[f64]) -> Result<(Vec<f64>, Mat<C64>, f64)> {
    let n = m.nrows();
    if n == 1 {
        let mut v = Mat::<C64>::zeros(1, 1);
        v[(0, 0)] = C64::new(1.0, 0.0);
        return Ok((vec![m[(0, 0)].re], v, m[(0, 0)].im.abs()));
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let mut energies: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let mut vecs = evd.U().to_owned();

    // fix the basis inside degenerate clusters
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && energies[end] - energies[end - 1] < DEGENERACY_TOL {
            end += 1;
        }
        if end - start > 1 {
            rotate_cluster(m, &mut vecs, &mut energies, start, end, labels)?;
        }
        start = end;
    }
    for k in 0..n {
        fix_phase(&mut vecs, k);
    }

    let hv = m * &vecs;
    let mut residual = 0.0_f64;
    for k in 0..n {
        for i in 0..n {
            residual = residual.max((hv[(i, k)] - vecs[(i, k)] * energies[k]).norm());
        }
    }
    Ok((energies, vecs, residual))
}

fn rotate_cluster(
    m: &Mat<C64>,
    vecs: &mut Mat<C64>,
    energies: &mut [f64],
    start: usize,
    end: usize,
    labels: &[f64],
) -> Result<()> {
    let n = vecs.nrows();
    let k = end - start;
    let vc = vecs.subcols(start, k).to_owned();
    let lv = Mat::<C64>::from_fn(n, k, |i, j| vc[(i, j)] * labels[i]);
    let small = vc.adjoint() * &lv;
    let small = Mat::<C64>::from_fn(k, k, |i, j| (small[(i, j)] + small[(j, i)].conj()) * 0.5);
    let evd = small
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    // descending label value inside the cluster
    let w = evd.U();
    let rotated = &vc * w;
    for j in 0..k {
        let src = k - 1 - j;
        for i in 0..n {
            vecs[(i, start + j)] = rotated[(i, src)];
        }
    }
    let hv = m * vecs.subcols(start, k);
    for j in 0..k {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            acc += vecs[(i, start + j)].conj() * hv[(i, j)];
        }
        energies[start + j] = acc.re;
    }
    // Rayleigh quotients may reorder by roundoff
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| energies[start + a].total_cmp(&energies[start + b]));
    if order.iter().enumerate().any(|(i, &o)| i != o) {
        let ev: Vec<f64> = order.iter().map(|&o| energies[start + o]).collect();
        let cols = vecs.subcols(start, k).to_owned();
        for (j, &o) in order.iter().enumerate() {
            energies[start + j] = ev[j];
            for i in 0..n {
                vecs[(i, start + j)] = cols[(i, o)];
            }
        }
    }
    Ok(())
}

fn fix_phase(vecs: &mut Mat<C64>, k: usize) {
    let n = vecs.nrows();
    let mut best = 0;
    let mut best_abs = -1.0;
    for i in 0..n {
        let a = vecs[(i, k)].norm();
        if a > best_abs + 1e-12 {
            best = i;
            best_abs = a;
        }
    }
    if best_abs > 0.0 {
        let phase = vecs[(best, k)].conj() / best_abs;
        for i in 0..n {
            vecs[(i, k)] *= phase;
        }
    }
}
