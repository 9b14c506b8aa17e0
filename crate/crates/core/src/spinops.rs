//! Angular-momentum operator algebra on single multiplets and on tensor-product
//! spaces.
//!
//! Every multiplet uses the same basis ordering: `m` runs from `+j` down to
//! `-j`. Composite spaces are ordered slot by slot with slot 0 most
//! significant, so a dimer state `(m_J1, m_J2, m_I1, m_I2)` has index
//! `((a * d2 + b) * d3 + c) * d4 + d`.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-negative or negative multiple of one half, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct HalfInteger(i32);

impl HalfInteger {
    pub const ZERO: HalfInteger = HalfInteger(0);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInteger(twice)
    }

    pub const fn from_int(n: i32) -> Self {
        HalfInteger(2 * n)
    }

    /// Rounds `x` to the nearest half-integer, failing if it is more than
    /// `1e-9` away from one.
    pub fn from_f64(x: f64) -> Result<Self> {
        let twice = (2.0 * x).round();
        if !x.is_finite() || (2.0 * x - twice).abs() > 1e-9 || twice.abs() > i32::MAX as f64 {
            return Err(Error::InvalidArgument(format!(
                "{x} is not a multiple of 1/2"
            )));
        }
        Ok(HalfInteger(twice as i32))
    }

    /// Nearest half-integer, without validation.
    pub fn nearest(x: f64) -> Self {
        HalfInteger((2.0 * x).round() as i32)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }
}

impl From<HalfInteger> for f64 {
    fn from(h: HalfInteger) -> f64 {
        h.value()
    }
}

impl TryFrom<f64> for HalfInteger {
    type Error = Error;
    fn try_from(x: f64) -> Result<Self> {
        HalfInteger::from_f64(x)
    }
}

impl Add for HalfInteger {
    type Output = HalfInteger;
    fn add(self, rhs: HalfInteger) -> HalfInteger {
        HalfInteger(self.0 + rhs.0)
    }
}

impl Sub for HalfInteger {
    type Output = HalfInteger;
    fn sub(self, rhs: HalfInteger) -> HalfInteger {
        HalfInteger(self.0 - rhs.0)
    }
}

impl Neg for HalfInteger {
    type Output = HalfInteger;
    fn neg(self) -> HalfInteger {
        HalfInteger(-self.0)
    }
}

impl fmt::Display for HalfInteger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for HalfInteger {
    type Err = Error;

    /// Accepts `6`, `-3/2` or `1.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("cannot parse {s:?} as a half-integer"));
        if let Some((num, den)) = s.split_once('/') {
            let num: i32 = num.trim().parse().map_err(|_| bad())?;
            match den.trim() {
                "1" => Ok(HalfInteger(2 * num)),
                "2" => Ok(HalfInteger(num)),
                _ => Err(bad()),
            }
        } else {
            let x: f64 = s.parse().map_err(|_| bad())?;
            HalfInteger::from_f64(x)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinKind {
    Electronic,
    Nuclear,
}

/// A single angular-momentum multiplet with basis `m = +j, j-1, ..., -j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinSpace {
    quantum_number: HalfInteger,
    kind: SpinKind,
}

impl SpinSpace {
    pub fn new(quantum_number: HalfInteger, kind: SpinKind) -> Result<Self> {
        if quantum_number.twice() < 0 {
            return Err(Error::InvalidArgument(format!(
                "angular momentum quantum number must be non-negative, got {quantum_number}"
            )));
        }
        Ok(SpinSpace { quantum_number, kind })
    }

    pub fn quantum_number(&self) -> HalfInteger {
        self.quantum_number
    }

    pub fn j(&self) -> f64 {
        self.quantum_number.value()
    }

    pub fn kind(&self) -> SpinKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.quantum_number.twice() as usize + 1
    }

    /// Projection `m` of basis state `index` (0 is `m = +j`).
    pub fn m_at(&self, index: usize) -> f64 {
        self.j() - index as f64
    }

    pub fn m_values(&self) -> Vec<f64> {
        (0..self.dimension()).map(|i| self.m_at(i)).collect()
    }
}

/// Builds a spin space from a real quantum number, which must be a
/// non-negative multiple of 1/2.
pub fn make_spin_space(quantum_number: f64, kind: SpinKind) -> Result<SpinSpace> {
    SpinSpace::new(HalfInteger::from_f64(quantum_number)?, kind)
}

/// Dense complex square matrix tagged with the ordered list of spaces whose
/// tensor product defines its basis.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    data: Mat<C64>,
    spaces: Vec<SpinSpace>,
}

impl OperatorMatrix {
    pub fn new(data: Mat<C64>, spaces: Vec<SpinSpace>) -> Result<Self> {
        let dim = composite_dimension(&spaces);
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::Dimension(format!(
                "matrix is {}x{} but the tagged spaces have dimension {dim}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(OperatorMatrix { data, spaces })
    }

    pub(crate) fn from_parts(data: Mat<C64>, spaces: Vec<SpinSpace>) -> Self {
        debug_assert_eq!(data.nrows(), composite_dimension(&spaces));
        OperatorMatrix { data, spaces }
    }

    pub fn zeros(spaces: &[SpinSpace]) -> Self {
        let d = composite_dimension(spaces);
        OperatorMatrix { data: Mat::zeros(d, d), spaces: spaces.to_vec() }
    }

    pub fn identity(spaces: &[SpinSpace]) -> Self {
        let d = composite_dimension(spaces);
        OperatorMatrix { data: Mat::identity(d, d), spaces: spaces.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> MatRef<'_, C64> {
        self.data.as_ref()
    }

    pub fn into_data(self) -> Mat<C64> {
        self.data
    }

    pub fn spaces(&self) -> &[SpinSpace] {
        &self.spaces
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.data[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm_l2()
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix { data: self.data.adjoint().to_owned(), spaces: self.spaces.clone() }
    }

    /// `||A - A^dagger||_F / ||A||_F`, or the absolute deviation for a zero matrix.
    pub fn hermiticity_deviation(&self) -> f64 {
        let diff = (&self.data - self.data.adjoint()).norm_l2();
        let norm = self.frobenius_norm();
        if norm > 0.0 {
            diff / norm
        } else {
            diff
        }
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_deviation() <= rel_tol
    }

    pub fn scale(&self, factor: C64) -> OperatorMatrix {
        let data = Mat::from_fn(self.dim(), self.dim(), |i, j| self.data[(i, j)] * factor);
        OperatorMatrix { data, spaces: self.spaces.clone() }
    }

    pub fn try_add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix { data: &self.data + &other.data, spaces: self.spaces.clone() })
    }

    pub fn try_sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix { data: &self.data - &other.data, spaces: self.spaces.clone() })
    }

    pub fn try_mul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same_basis(other)?;
        Ok(OperatorMatrix { data: &self.data * &other.data, spaces: self.spaces.clone() })
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same_basis(other)?;
        let ab = &self.data * &other.data;
        let ba = &other.data * &self.data;
        Ok(OperatorMatrix { data: ab - ba, spaces: self.spaces.clone() })
    }

    /// Largest entry modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                m = m.max((self.data[(i, j)] - other.data[(i, j)]).norm());
            }
        }
        m
    }

    fn check_same_basis(&self, other: &OperatorMatrix) -> Result<()> {
        if self.spaces != other.spaces {
            return Err(Error::Dimension(
                "operators act on different composite spaces".to_string(),
            ));
        }
        Ok(())
    }
}

pub fn composite_dimension(spaces: &[SpinSpace]) -> usize {
    spaces.iter().map(SpinSpace::dimension).product()
}

/// Cartesian and ladder operators of one multiplet.
#[derive(Clone, Debug)]
pub struct AngularMomentum {
    pub x: OperatorMatrix,
    pub y: OperatorMatrix,
    pub z: OperatorMatrix,
    pub plus: OperatorMatrix,
    pub minus: OperatorMatrix,
}

impl AngularMomentum {
    pub fn component(&self, axis: usize) -> &OperatorMatrix {
        match axis {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Cartesian axis index {axis} out of range"),
        }
    }
}

pub fn angular_momentum_ops(space: SpinSpace) -> AngularMomentum {
    let d = space.dimension();
    let j = space.j();
    let jj = j * (j + 1.0);
    let spaces = vec![space];

    let z = Mat::from_fn(d, d, |r, c| {
        if r == c {
            C64::new(space.m_at(r), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    // J+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>; row r-1 holds m+1 in descending order.
    let plus = Mat::from_fn(d, d, |r, c| {
        if r + 1 == c {
            let m = space.m_at(c);
            C64::new((jj - m * (m + 1.0)).max(0.0).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let minus = plus.adjoint().to_owned();
    let x = Mat::from_fn(d, d, |r, c| (plus[(r, c)] + minus[(r, c)]) * 0.5);
    let y = Mat::from_fn(d, d, |r, c| (plus[(r, c)] - minus[(r, c)]) * C64::new(0.0, -0.5));

    let wrap = |m: Mat<C64>| OperatorMatrix::from_parts(m, spaces.clone());
    AngularMomentum { x: wrap(x), y: wrap(y), z: wrap(z), plus: wrap(plus), minus: wrap(minus) }
}

/// Operator-equivalent (Stevens) operator `O_k^q` of the cosine type.
///
/// Supports every even `k <= 6` with `0 <= q <= k`. Definitions follow the
/// standard operator-equivalent tables, written as symmetrized polynomials in
/// `Jz` and `J+^q + J-^q`.
pub fn stevens_operator(space: SpinSpace, k: u32, q: u32) -> Result<OperatorMatrix> {
    if k % 2 != 0 || k > 6 || q > k {
        return Err(Error::UnsupportedOperator { k, q });
    }
    let d = space.dimension();
    let j = space.j();
    let x = j * (j + 1.0);
    let ops = angular_momentum_ops(space);

    // diagonal polynomial in Jz, coefficients by ascending power
    let poly = |coeffs: &[f64]| -> Mat<C64> {
        Mat::from_fn(d, d, |r, c| {
            if r == c {
                let m = space.m_at(r);
                let v = coeffs.iter().rev().fold(0.0, |acc, &a| acc * m + a);
                C64::new(v, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    };
    let ladder_sum = |power: u32| -> Mat<C64> {
        let mut p = Mat::<C64>::identity(d, d);
        let mut m = Mat::<C64>::identity(d, d);
        for _ in 0..power {
            p = &p * ops.plus.data();
            m = &m * ops.minus.data();
        }
        p + m
    };
    // 1/4 [f(Jz) B + B f(Jz)]
    let symmetrized = |coeffs: &[f64], power: u32| -> Mat<C64> {
        let f = poly(coeffs);
        let b = ladder_sum(power);
        let s = &f * &b + &b * &f;
        Mat::from_fn(d, d, |r, c| s[(r, c)] * 0.25)
    };
    let half_ladder = |power: u32| -> Mat<C64> {
        let b = ladder_sum(power);
        Mat::from_fn(d, d, |r, c| b[(r, c)] * 0.5)
    };

    let data = match (k, q) {
        (0, 0) => Mat::identity(d, d),
        (2, 0) => poly(&[-x, 0.0, 3.0]),
        (2, 1) => symmetrized(&[0.0, 1.0], 1),
        (2, 2) => half_ladder(2),
        (4, 0) => poly(&[3.0 * x * x - 6.0 * x, 0.0, -(30.0 * x - 25.0), 0.0, 35.0]),
        (4, 1) => symmetrized(&[0.0, -(3.0 * x + 1.0), 0.0, 7.0], 1),
        (4, 2) => symmetrized(&[-x - 5.0, 0.0, 7.0], 2),
        (4, 3) => symmetrized(&[0.0, 1.0], 3),
        (4, 4) => half_ladder(4),
        (6, 0) => poly(&[
            -5.0 * x * x * x + 40.0 * x * x - 60.0 * x,
            0.0,
            105.0 * x * x - 525.0 * x + 294.0,
            0.0,
            -(315.0 * x - 735.0),
            0.0,
            231.0,
        ]),
        (6, 1) => symmetrized(
            &[0.0, 5.0 * x * x - 10.0 * x + 12.0, 0.0, -(30.0 * x - 15.0), 0.0, 33.0],
            1,
        ),
        (6, 2) => symmetrized(&[x * x + 10.0 * x + 102.0, 0.0, -(18.0 * x + 123.0), 0.0, 33.0], 2),
        (6, 3) => symmetrized(&[0.0, -(3.0 * x + 59.0), 0.0, 11.0], 3),
        (6, 4) => symmetrized(&[-x - 38.0, 0.0, 11.0], 4),
        (6, 5) => symmetrized(&[0.0, 1.0], 5),
        (6, 6) => half_ladder(6),
        _ => return Err(Error::UnsupportedOperator { k, q }),
    };
    Ok(OperatorMatrix::from_parts(data, vec![space]))
}

/// Kronecker-embeds a single-space operator into `composite` at `slot`,
/// with identities on every other slot.
pub fn embed(op: &OperatorMatrix, slot: usize, composite: &[SpinSpace]) -> Result<OperatorMatrix> {
    let target = composite.get(slot).ok_or_else(|| {
        Error::Dimension(format!("slot {slot} out of range for {} spaces", composite.len()))
    })?;
    if op.spaces() != [*target] {
        return Err(Error::Dimension(format!(
            "operator space does not match composite slot {slot}"
        )));
    }
    let d = composite_dimension(composite);
    let mut data = Mat::<C64>::zeros(d, d);
    accumulate_kron(&mut data, composite, C64::new(1.0, 0.0), &[(slot, op.data())]);
    Ok(OperatorMatrix::from_parts(data, composite.to_vec()))
}

/// Nonzero entries of `coeff * (F_1 (x) F_2 (x) ...)`, where each factor acts
/// on its own slot and unspecified slots carry the identity. Factors may have
/// any dimension as long as it matches `dims[slot]`.
pub(crate) fn kron_entries(
    dims: &[usize],
    coeff: C64,
    factors: &[(usize, MatRef<'_, C64>)],
) -> Vec<(usize, usize, C64)> {
    let n_slots = dims.len();
    let mut strides = vec![1usize; n_slots];
    for s in (0..n_slots.saturating_sub(1)).rev() {
        strides[s] = strides[s + 1] * dims[s + 1];
    }

    let mut entries: Vec<(usize, usize, C64)> = vec![(0, 0, coeff)];
    for slot in 0..n_slots {
        let local: Vec<(usize, usize, C64)> = match factors.iter().find(|(s, _)| *s == slot) {
            Some((_, f)) => {
                debug_assert_eq!(f.nrows(), dims[slot]);
                let mut v = Vec::new();
                for c in 0..f.ncols() {
                    for r in 0..f.nrows() {
                        let x = f[(r, c)];
                        if x.re != 0.0 || x.im != 0.0 {
                            v.push((r, c, x));
                        }
                    }
                }
                v
            }
            None => (0..dims[slot]).map(|i| (i, i, C64::new(1.0, 0.0))).collect(),
        };
        let stride = strides[slot];
        let mut next = Vec::with_capacity(entries.len() * local.len());
        for &(r, c, v) in &entries {
            for &(lr, lc, lv) in &local {
                next.push((r + lr * stride, c + lc * stride, v * lv));
            }
        }
        entries = next;
    }
    entries
}

/// Adds `coeff * (F_1 (x) F_2 (x) ...)` to `target`; see [`kron_entries`].
pub(crate) fn accumulate_kron_dims(
    target: &mut Mat<C64>,
    dims: &[usize],
    coeff: C64,
    factors: &[(usize, MatRef<'_, C64>)],
) {
    for (r, c, v) in kron_entries(dims, coeff, factors) {
        target[(r, c)] += v;
    }
}

/// Square operator stored as sorted, deduplicated `(row, col, value)` triplets.
#[derive(Clone, Debug, Default)]
pub struct SparseOperator {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        SparseOperator { dim, entries: Vec::new() }
    }

    /// Sums duplicate positions and drops entries that cancel exactly.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut entries: Vec<(usize, usize, C64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2.re != 0.0 || e.2.im != 0.0);
        SparseOperator { dim, entries }
    }

    /// Keeps entries with magnitude above `threshold`.
    pub fn from_dense(m: MatRef<'_, C64>, threshold: f64) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)].norm() > threshold {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        SparseOperator::from_triplets(m.nrows(), t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &SparseOperator, factor: f64) -> SparseOperator {
        assert_eq!(self.dim, other.dim);
        if factor == 0.0 {
            return self.clone();
        }
        let mut t = self.entries.clone();
        t.extend(other.entries.iter().map(|&(r, c, v)| (r, c, v * factor)));
        SparseOperator::from_triplets(self.dim, t)
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] += v.re;
            }
        }
        d
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries.iter().all(|&(r, c, _)| r == c)
    }

    /// `<v|A|v>` (real part) for a column vector `v`.
    pub fn expectation(&self, v: faer::ColRef<'_, C64>) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(r, c, x) in &self.entries {
            acc += v[r].conj() * x * v[c];
        }
        acc.re
    }
}

pub(crate) fn accumulate_kron(
    target: &mut Mat<C64>,
    composite: &[SpinSpace],
    coeff: C64,
    factors: &[(usize, MatRef<'_, C64>)],
) {
    let dims: Vec<usize> = composite.iter().map(SpinSpace::dimension).collect();
    accumulate_kron_dims(target, &dims, coeff, factors);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(z: C64) -> f64 {
        assert!(z.im.abs() < 1e-12, "unexpected imaginary part {z}");
        z.re
    }

    #[test]
    fn half_integer_parsing_and_display() {
        assert_eq!("3/2".parse::<HalfInteger>().unwrap(), HalfInteger::from_twice(3));
        assert_eq!("1.5".parse::<HalfInteger>().unwrap(), HalfInteger::from_twice(3));
        assert_eq!("-6".parse::<HalfInteger>().unwrap(), HalfInteger::from_int(-6));
        assert!("1/3".parse::<HalfInteger>().is_err());
        assert!("0.3".parse::<HalfInteger>().is_err());
        assert_eq!(HalfInteger::from_twice(-3).to_string(), "-3/2");
        assert_eq!(HalfInteger::from_int(6).to_string(), "6");
    }

    #[test]
    fn spin_space_dimensions() {
        assert_eq!(make_spin_space(0.5, SpinKind::Nuclear).unwrap().dimension(), 2);
        assert_eq!(make_spin_space(6.0, SpinKind::Electronic).unwrap().dimension(), 13);
        assert_eq!(make_spin_space(1.5, SpinKind::Nuclear).unwrap().dimension(), 4);
        let s = make_spin_space(1.5, SpinKind::Nuclear).unwrap();
        assert_eq!(s.m_values(), vec![1.5, 0.5, -0.5, -1.5]);
    }

    #[test]
    fn invalid_quantum_numbers_rejected() {
        assert!(matches!(make_spin_space(-1.0, SpinKind::Nuclear), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_spin_space(0.7, SpinKind::Nuclear), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn spin_half_matrices() {
        let ops = angular_momentum_ops(make_spin_space(0.5, SpinKind::Nuclear).unwrap());
        assert_eq!(re(ops.z.get(0, 0)), 0.5);
        assert_eq!(re(ops.z.get(1, 1)), -0.5);
        assert!((re(ops.x.get(0, 1)) - 0.5).abs() < 1e-15);
        assert!((re(ops.x.get(1, 0)) - 0.5).abs() < 1e-15);
        assert!((ops.y.get(0, 1) - C64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn trace_jz_squared_for_j6() {
        let ops = angular_momentum_ops(make_spin_space(6.0, SpinKind::Electronic).unwrap());
        let oracle: f64 = 2.0 * (1..=6).map(|m| (m * m) as f64).sum::<f64>();
        let jz2 = ops.z.try_mul(&ops.z).unwrap();
        assert_eq!(oracle, 182.0);
        assert!((re(jz2.trace()) - oracle).abs() < 1e-12);
    }

    #[test]
    fn stevens_diagonal_entries_j6() {
        let s = make_spin_space(6.0, SpinKind::Electronic).unwrap();
        let o20 = stevens_operator(s, 2, 0).unwrap();
        assert!((re(o20.get(0, 0)) - 66.0).abs() < 1e-12);
        assert!((re(o20.get(12, 12)) - 66.0).abs() < 1e-12);
        assert!((re(o20.get(6, 6)) + 42.0).abs() < 1e-12);
    }

    #[test]
    fn stevens_o44_element_matches_ladder_product() {
        let s = make_spin_space(6.0, SpinKind::Electronic).unwrap();
        let o44 = stevens_operator(s, 4, 4).unwrap();
        // <6|O44|2>: row index 0 (m=6), column index 4 (m=2)
        let jj = 42.0_f64;
        let prod: f64 = (2..6).map(|m| (jj - (m * (m + 1)) as f64).sqrt()).product();
        assert!((re(o44.get(0, 4)) - 0.5 * prod).abs() < 1e-10);
        assert!((0.5 * prod - 266.98314553).abs() < 1e-6);
        for r in 0..13 {
            for c in 0..13 {
                let dm = (r as i64 - c as i64).abs();
                if dm != 4 {
                    assert!(o44.get(r, c).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unsupported_stevens_rejected() {
        let s = make_spin_space(6.0, SpinKind::Electronic).unwrap();
        assert!(matches!(stevens_operator(s, 3, 0), Err(Error::UnsupportedOperator { k: 3, q: 0 })));
        assert!(matches!(stevens_operator(s, 2, 4), Err(Error::UnsupportedOperator { .. })));
        assert!(matches!(stevens_operator(s, 8, 0), Err(Error::UnsupportedOperator { .. })));
    }

    #[test]
    fn embed_dimensions_and_identity() {
        let j = make_spin_space(6.0, SpinKind::Electronic).unwrap();
        let i = make_spin_space(1.5, SpinKind::Nuclear).unwrap();
        let composite = [j, j, i, i];
        let jz = angular_momentum_ops(j).z;
        let e = embed(&jz, 0, &composite).unwrap();
        assert_eq!(e.dim(), 2704);

        let half = make_spin_space(0.5, SpinKind::Nuclear).unwrap();
        let toy = [half, half, half];
        let id = OperatorMatrix::identity(&[half]);
        let e = embed(&id, 1, &toy).unwrap();
        assert!(e.max_abs_diff(&OperatorMatrix::identity(&toy)) < 1e-15);
    }

    #[test]
    fn embed_rejects_mismatched_slot() {
        let j = make_spin_space(6.0, SpinKind::Electronic).unwrap();
        let i = make_spin_space(1.5, SpinKind::Nuclear).unwrap();
        let jz = angular_momentum_ops(j).z;
        assert!(matches!(embed(&jz, 2, &[j, j, i, i]), Err(Error::Dimension(_))));
        assert!(matches!(embed(&jz, 7, &[j, j, i, i]), Err(Error::Dimension(_))));
    }

    #[test]
    fn embedded_trace_identity() {
        let half = make_spin_space(0.5, SpinKind::Nuclear).unwrap();
        let one = make_spin_space(1.0, SpinKind::Electronic).unwrap();
        let composite = [half, one, half];
        let a = angular_momentum_ops(one).z.try_mul(&angular_momentum_ops(one).z).unwrap();
        let e = embed(&a, 1, &composite).unwrap();
        // other dims: 2 * 2
        assert!((e.trace() - a.trace() * 4.0).norm() < 1e-12);
    }
}
