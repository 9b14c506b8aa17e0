//! Single-ion and dimer Hamiltonians: ligand field, Zeeman, hyperfine,
//! quadrupole, and the anisotropic plus isotropic ion-ion coupling.
//!
//! Sign conventions:
//! * Zeeman: `+ gJ muB J.B`, so `m = -J` is lowest for a positive field.
//! * Coupling: `-2 J1 . C . J2` with `C = D + J_ex * 1`. A positive `D_zz`
//!   is ferromagnetic for Ising moments.
//! * The point-dipole tensor is evaluated in Gaussian units and mapped onto
//!   the `-2` convention by the factor `-1/2`:
//!   `D = -(1/2) (muB^2 / r^3) [g1^T g2 - 3 (g1^T R)(R^T g2)]`.

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinops::{
    accumulate_kron_dims, angular_momentum_ops, kron_entries, stevens_operator, AngularMomentum,
    HalfInteger, OperatorMatrix, SparseOperator, SpinKind, SpinSpace,
};
use crate::units::{ANGSTROM_CM, HC_ERG_CM, MU_B, MU_B_ERG_PER_GAUSS};

pub type Tensor3 = [[f64; 3]; 3];

/// Standard Stevens multiplicative factors of the Tb(III) 7F6 ground term.
pub const TB_STEVENS_ALPHA: f64 = -1.0 / 99.0;
pub const TB_STEVENS_BETA: f64 = 2.0 / 16335.0;
pub const TB_STEVENS_GAMMA: f64 = -1.0 / 891891.0;

/// Tb...Tb distance in the dimer crystal structure, in angstrom.
pub const TB2_DISTANCE_ANGSTROM: f64 = 3.5230;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LigandFieldParams {
    pub a20: f64,
    pub a40: f64,
    pub a60: f64,
    pub a44: f64,
    pub a64: f64,
    pub stevens_alpha: f64,
    pub stevens_beta: f64,
    pub stevens_gamma: f64,
}

impl LigandFieldParams {
    /// Axial parameters with the Tb(III) Stevens factors; all other terms zero.
    pub fn tb_axial(a20: f64, a40: f64) -> Self {
        LigandFieldParams { a20, a40, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.a20,
            self.a40,
            self.a60,
            self.a44,
            self.a64,
            self.stevens_alpha,
            self.stevens_beta,
            self.stevens_gamma,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("ligand-field parameters must be finite".into()));
        }
        Ok(())
    }
}

impl Default for LigandFieldParams {
    fn default() -> Self {
        LigandFieldParams {
            a20: 0.0,
            a40: 0.0,
            a60: 0.0,
            a44: 0.0,
            a64: 0.0,
            stevens_alpha: TB_STEVENS_ALPHA,
            stevens_beta: TB_STEVENS_BETA,
            stevens_gamma: TB_STEVENS_GAMMA,
        }
    }
}

/// One lanthanide ion: electronic multiplet `J`, nuclear spin `I`, and every
/// single-ion energy scale (cm^-1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonModel {
    pub j: HalfInteger,
    pub i: HalfInteger,
    pub g_j: f64,
    pub lf: LigandFieldParams,
    pub a_hf: f64,
    pub p_quad: f64,
}

impl IonModel {
    /// 159Tb(III): J = 6, I = 3/2, gJ = 3/2 with axial ligand field.
    pub fn terbium(a20: f64, a40: f64, a_hf: f64, p_quad: f64) -> Self {
        IonModel {
            j: HalfInteger::from_int(6),
            i: HalfInteger::from_twice(3),
            g_j: 1.5,
            lf: LigandFieldParams::tb_axial(a20, a40),
            a_hf,
            p_quad,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_j > 0.0) || !self.g_j.is_finite() {
            return Err(Error::InvalidArgument(format!("gJ must be positive, got {}", self.g_j)));
        }
        if !self.a_hf.is_finite() || !self.p_quad.is_finite() {
            return Err(Error::InvalidArgument("A_hf and P must be finite".into()));
        }
        self.electronic_space()?;
        self.nuclear_space()?;
        self.lf.validate()
    }

    pub fn electronic_space(&self) -> Result<SpinSpace> {
        SpinSpace::new(self.j, SpinKind::Electronic)
    }

    pub fn nuclear_space(&self) -> Result<SpinSpace> {
        SpinSpace::new(self.i, SpinKind::Nuclear)
    }
}

/// Ising g-matrix `diag(0, 0, g)`.
pub fn ising_g(g: f64) -> Tensor3 {
    [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, g]]
}

pub fn isotropic_g(g: f64) -> Tensor3 {
    [[g, 0.0, 0.0], [0.0, g, 0.0], [0.0, 0.0, g]]
}

/// Two coupled ions. Slot order of the composite space is `(J1, J2, I1, I2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimerModel {
    pub ion1: IonModel,
    pub ion2: IonModel,
    /// Displacement from ion 1 to ion 2, angstrom.
    pub r_vec: [f64; 3],
    pub g_tensor1: Tensor3,
    pub g_tensor2: Tensor3,
    /// Isotropic exchange, cm^-1, in the `-2 J1.J2` convention.
    pub j_ex: f64,
    /// Replaces the computed dipolar tensor when present (cm^-1).
    pub coupling_override: Option<Tensor3>,
}

impl DimerModel {
    /// The Tb2 dimer with the two axial ligand-field sets, shared hyperfine and
    /// quadrupole parameters, Ising dipolar coupling along z and no exchange.
    pub fn tb2_paper() -> Self {
        let a_hf = 0.0215;
        let p = 0.010;
        DimerModel {
            ion1: IonModel::terbium(289.0, -209.0, a_hf, p),
            ion2: IonModel::terbium(293.0, -197.0, a_hf, p),
            r_vec: [0.0, 0.0, TB2_DISTANCE_ANGSTROM],
            g_tensor1: ising_g(1.5),
            g_tensor2: ising_g(1.5),
            j_ex: 0.0,
            coupling_override: None,
        }
    }

    /// Same as [`DimerModel::tb2_paper`] with the isotropic exchange that
    /// moves the single-flip transition to about 550 mT.
    pub fn tb2_paper_with_exchange() -> Self {
        DimerModel { j_ex: 0.0097, ..Self::tb2_paper() }
    }

    pub fn validate(&self) -> Result<()> {
        self.ion1.validate()?;
        self.ion2.validate()?;
        let r = norm3(&self.r_vec);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument("ion-ion displacement must be nonzero".into()));
        }
        if !self.j_ex.is_finite() {
            return Err(Error::InvalidArgument("J_ex must be finite".into()));
        }
        let c = self.coupling_tensor()?;
        let scale = c.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
        for a in 0..3 {
            for b in 0..3 {
                if (c[a][b] - c[b][a]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(
                        "effective coupling tensor must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Anisotropic part `D` of the coupling (override or point dipole).
    pub fn coupling_tensor(&self) -> Result<Tensor3> {
        match self.coupling_override {
            Some(t) => Ok(t),
            None => dipolar_tensor(&self.g_tensor1, &self.g_tensor2, &self.r_vec),
        }
    }

    /// `D + J_ex * 1`.
    pub fn effective_coupling(&self) -> Result<Tensor3> {
        let mut c = self.coupling_tensor()?;
        for (a, row) in c.iter_mut().enumerate() {
            row[a] += self.j_ex;
        }
        Ok(c)
    }

    pub fn spaces(&self) -> Result<[SpinSpace; 4]> {
        Ok([
            self.ion1.electronic_space()?,
            self.ion2.electronic_space()?,
            self.ion1.nuclear_space()?,
            self.ion2.nuclear_space()?,
        ])
    }

    pub fn with_hyperfine(mut self, a_hf: f64, p_quad: f64) -> Self {
        self.ion1.a_hf = a_hf;
        self.ion2.a_hf = a_hf;
        self.ion1.p_quad = p_quad;
        self.ion2.p_quad = p_quad;
        self
    }

    /// Replaces the zz element of the anisotropic coupling, keeping the rest.
    pub fn with_dzz(mut self, dzz: f64) -> Result<Self> {
        let mut t = self.coupling_tensor()?;
        t[2][2] = dzz;
        self.coupling_override = Some(t);
        Ok(self)
    }

    /// Drops both nuclear spins (I = 0), leaving the 169-dim electronic dimer.
    pub fn without_nuclear_spins(mut self) -> Self {
        for ion in [&mut self.ion1, &mut self.ion2] {
            ion.i = HalfInteger::ZERO;
            ion.a_hf = 0.0;
            ion.p_quad = 0.0;
        }
        self
    }

    /// Both ions uncoupled.
    pub fn decoupled(mut self) -> Self {
        self.coupling_override = Some([[0.0; 3]; 3]);
        self.j_ex = 0.0;
        self
    }

    /// Hex SHA-256 of the JSON form of the model, used to tag outputs.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }
}

/// Applied field: magnitude in tesla along a unit direction, optionally tilted
/// away from it by `misalignment_deg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub magnitude: f64,
    direction: [f64; 3],
    pub misalignment_deg: Option<f64>,
}

impl FieldSpec {
    pub fn new(magnitude: f64, direction: [f64; 3]) -> Result<Self> {
        let n = norm3(&direction);
        if !(n > 0.0) || !n.is_finite() || !magnitude.is_finite() {
            return Err(Error::InvalidArgument("field direction must be a nonzero vector".into()));
        }
        let direction = [direction[0] / n, direction[1] / n, direction[2] / n];
        Ok(FieldSpec { magnitude, direction, misalignment_deg: None })
    }

    /// Field along the easy (z) axis.
    pub fn along_z(magnitude: f64) -> Self {
        FieldSpec { magnitude, direction: [0.0, 0.0, 1.0], misalignment_deg: None }
    }

    pub fn with_misalignment(mut self, degrees: f64) -> Self {
        self.misalignment_deg = Some(degrees);
        self
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction
    }

    /// Unit direction after applying the misalignment tilt. The tilt rotates
    /// the direction towards `x` (or towards `z` if the direction is along `x`).
    pub fn effective_direction(&self) -> [f64; 3] {
        match self.misalignment_deg {
            None => self.direction,
            Some(deg) if deg == 0.0 => self.direction,
            Some(deg) => tilt(self.direction, deg.to_radians()),
        }
    }

    pub fn vector(&self) -> [f64; 3] {
        let d = self.effective_direction();
        [self.magnitude * d[0], self.magnitude * d[1], self.magnitude * d[2]]
    }
}

fn tilt(d: [f64; 3], angle: f64) -> [f64; 3] {
    // component of x (or z) orthogonal to d
    let reference = if d[0].abs() > 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let proj = dot3(&reference, &d);
    let mut perp = [reference[0] - proj * d[0], reference[1] - proj * d[1], reference[2] - proj * d[2]];
    let n = norm3(&perp);
    for p in perp.iter_mut() {
        *p /= n;
    }
    let (s, c) = angle.sin_cos();
    [c * d[0] + s * perp[0], c * d[1] + s * perp[1], c * d[2] + s * perp[2]]
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Point-dipole coupling tensor in cm^-1 for the `-2 J1.D.J2` convention.
pub fn dipolar_tensor(g1: &Tensor3, g2: &Tensor3, r_vec: &[f64; 3]) -> Result<Tensor3> {
    let r = norm3(r_vec);
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument("dipolar tensor needs a nonzero displacement".into()));
    }
    let rhat = [r_vec[0] / r, r_vec[1] / r, r_vec[2] / r];
    let r_cm = r * ANGSTROM_CM;
    let prefactor = MU_B_ERG_PER_GAUSS * MU_B_ERG_PER_GAUSS / (r_cm * r_cm * r_cm) / HC_ERG_CM;

    // g1^T R and R^T g2
    let mut g1r = [0.0; 3];
    let mut rg2 = [0.0; 3];
    for a in 0..3 {
        for k in 0..3 {
            g1r[a] += g1[k][a] * rhat[k];
            rg2[a] += rhat[k] * g2[k][a];
        }
    }
    let mut d = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let gg: f64 = (0..3).map(|k| g1[k][a] * g2[k][b]).sum();
            d[a][b] = -0.5 * prefactor * (gg - 3.0 * g1r[a] * rg2[b]);
        }
    }
    Ok(d)
}

/// `coeff * (F_a (x) F_b (x) ...)` with each factor on its own slot.
#[derive(Clone, Debug)]
pub struct ProductTerm {
    pub coeff: C64,
    pub factors: Vec<(usize, Mat<C64>)>,
}

/// A Hermitian operator stored as a sum of Kronecker products over a fixed
/// composite space. Assembling it densely or projecting single slots onto
/// subspaces both work term by term.
#[derive(Clone, Debug)]
pub struct OperatorSum {
    spaces: Vec<SpinSpace>,
    terms: Vec<ProductTerm>,
}

impl OperatorSum {
    pub fn new(spaces: Vec<SpinSpace>) -> Self {
        OperatorSum { spaces, terms: Vec::new() }
    }

    pub fn spaces(&self) -> &[SpinSpace] {
        &self.spaces
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn push(&mut self, coeff: f64, factors: Vec<(usize, MatRef<'_, C64>)>) {
        if coeff == 0.0 {
            return;
        }
        self.terms.push(ProductTerm {
            coeff: C64::new(coeff, 0.0),
            factors: factors.into_iter().map(|(s, m)| (s, m.to_owned())).collect(),
        });
    }

    pub fn dims(&self) -> Vec<usize> {
        self.spaces.iter().map(SpinSpace::dimension).collect()
    }

    pub fn to_matrix(&self) -> OperatorMatrix {
        let dims = self.dims();
        let d: usize = dims.iter().product();
        let mut data = Mat::<C64>::zeros(d, d);
        for term in &self.terms {
            let refs: Vec<(usize, MatRef<'_, C64>)> =
                term.factors.iter().map(|(s, m)| (*s, m.as_ref())).collect();
            accumulate_kron_dims(&mut data, &dims, term.coeff, &refs);
        }
        OperatorMatrix::from_parts(data, self.spaces.clone())
    }

    pub fn to_sparse(&self) -> SparseOperator {
        let dims = self.dims();
        let d: usize = dims.iter().product();
        let mut triplets = Vec::new();
        for term in &self.terms {
            let refs: Vec<(usize, MatRef<'_, C64>)> =
                term.factors.iter().map(|(s, m)| (*s, m.as_ref())).collect();
            triplets.extend(kron_entries(&dims, term.coeff, &refs));
        }
        SparseOperator::from_triplets(d, triplets)
    }

    /// Dense matrix of `W^dagger H W` where `W` is the Kronecker product of the
    /// per-slot isometries in `bases` (`None` keeps a slot whole).
    pub fn to_projected(&self, bases: &[Option<MatRef<'_, C64>>]) -> Mat<C64> {
        assert_eq!(bases.len(), self.spaces.len());
        let dims: Vec<usize> = self
            .dims()
            .iter()
            .zip(bases)
            .map(|(&d, b)| b.map_or(d, |w| w.ncols()))
            .collect();
        let d: usize = dims.iter().product();
        let mut data = Mat::<C64>::zeros(d, d);
        for term in &self.terms {
            let projected: Vec<(usize, Mat<C64>)> = term
                .factors
                .iter()
                .map(|(s, m)| match bases[*s] {
                    Some(w) => (*s, w.adjoint() * m * w),
                    None => (*s, m.clone()),
                })
                .collect();
            let refs: Vec<(usize, MatRef<'_, C64>)> =
                projected.iter().map(|(s, m)| (*s, m.as_ref())).collect();
            // identity factors on projected slots stay identities of the new dimension
            accumulate_kron_dims(&mut data, &dims, term.coeff, &refs);
        }
        data
    }
}

/// Zero-field operator plus the three field-derivative operators
/// `dH/dB_alpha` (cm^-1 / T), so that `H(B) = H0 + sum_alpha B_alpha Z_alpha`.
#[derive(Clone, Debug)]
pub struct FieldLinearTerms {
    pub zero_field: OperatorSum,
    pub zeeman: [OperatorSum; 3],
}

impl FieldLinearTerms {
    pub fn assemble(&self, field: [f64; 3]) -> OperatorMatrix {
        let mut sum = self.zero_field.clone();
        for (axis, b) in field.iter().enumerate() {
            for term in &self.zeeman[axis].terms {
                let mut t = term.clone();
                t.coeff *= *b;
                if *b != 0.0 {
                    sum.terms.push(t);
                }
            }
        }
        sum.to_matrix()
    }
}

struct IonOperators {
    j: AngularMomentum,
    i: AngularMomentum,
    lf: OperatorMatrix,
}

fn ion_operators(ion: &IonModel) -> Result<IonOperators> {
    ion.validate()?;
    let jspace = ion.electronic_space()?;
    Ok(IonOperators {
        j: angular_momentum_ops(jspace),
        i: angular_momentum_ops(ion.nuclear_space()?),
        lf: ligand_field_h(ion)?,
    })
}

/// Adds the single-ion terms of `ion` with its electronic multiplet on
/// `j_slot` and its nucleus on `i_slot`.
fn push_single_ion(
    h0: &mut OperatorSum,
    zeeman: &mut [OperatorSum; 3],
    ion: &IonModel,
    ops: &IonOperators,
    j_slot: usize,
    i_slot: usize,
) {
    h0.push(1.0, vec![(j_slot, ops.lf.data())]);
    for axis in 0..3 {
        h0.push(
            ion.a_hf,
            vec![(j_slot, ops.j.component(axis).data()), (i_slot, ops.i.component(axis).data())],
        );
        zeeman[axis].push(ion.g_j * MU_B, vec![(j_slot, ops.j.component(axis).data())]);
    }
    let i = ion.i.value();
    let d = ion.i.twice() as usize + 1;
    let quad = Mat::<C64>::from_fn(d, d, |r, c| {
        if r == c {
            let m = i - r as f64;
            C64::new(m * m - i * (i + 1.0) / 3.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    h0.push(ion.p_quad, vec![(i_slot, quad.as_ref())]);
}

/// Ligand-field operator on the electronic multiplet alone.
pub fn ligand_field_h(ion: &IonModel) -> Result<OperatorMatrix> {
    let space = ion.electronic_space()?;
    let lf = &ion.lf;
    let terms = [
        (lf.stevens_alpha * lf.a20, 2, 0),
        (lf.stevens_beta * lf.a40, 4, 0),
        (lf.stevens_beta * lf.a44, 4, 4),
        (lf.stevens_gamma * lf.a60, 6, 0),
        (lf.stevens_gamma * lf.a64, 6, 4),
    ];
    let mut h = OperatorMatrix::zeros(&[space]);
    for (coeff, k, q) in terms {
        // Stevens operators above 2J vanish identically
        if coeff != 0.0 && k <= ion.j.twice() as u32 {
            h = h.try_add(&stevens_operator(space, k, q)?.scale(C64::new(coeff, 0.0)))?;
        }
    }
    Ok(h)
}

/// Field-linear decomposition of the single-ion Hamiltonian on `J (x) I`.
pub fn single_ion_terms(ion: &IonModel) -> Result<FieldLinearTerms> {
    let ops = ion_operators(ion)?;
    let spaces = vec![ion.electronic_space()?, ion.nuclear_space()?];
    let mut h0 = OperatorSum::new(spaces.clone());
    let mut zeeman = [
        OperatorSum::new(spaces.clone()),
        OperatorSum::new(spaces.clone()),
        OperatorSum::new(spaces),
    ];
    push_single_ion(&mut h0, &mut zeeman, ion, &ops, 0, 1);
    Ok(FieldLinearTerms { zero_field: h0, zeeman })
}

pub fn single_ion_h(ion: &IonModel, field: &FieldSpec) -> Result<OperatorMatrix> {
    Ok(single_ion_terms(ion)?.assemble(field.vector()))
}

/// Field-linear decomposition of the dimer Hamiltonian on `(J1, J2, I1, I2)`.
pub fn dimer_terms(model: &DimerModel) -> Result<FieldLinearTerms> {
    model.validate()?;
    let spaces = model.spaces()?.to_vec();
    let ops1 = ion_operators(&model.ion1)?;
    let ops2 = ion_operators(&model.ion2)?;

    let mut h0 = OperatorSum::new(spaces.clone());
    let mut zeeman = [
        OperatorSum::new(spaces.clone()),
        OperatorSum::new(spaces.clone()),
        OperatorSum::new(spaces),
    ];
    push_single_ion(&mut h0, &mut zeeman, &model.ion1, &ops1, 0, 2);
    push_single_ion(&mut h0, &mut zeeman, &model.ion2, &ops2, 1, 3);

    let c = model.effective_coupling()?;
    for a in 0..3 {
        for b in 0..3 {
            h0.push(
                -2.0 * c[a][b],
                vec![(0, ops1.j.component(a).data()), (1, ops2.j.component(b).data())],
            );
        }
    }
    Ok(FieldLinearTerms { zero_field: h0, zeeman })
}

pub fn dimer_h(model: &DimerModel, field: &FieldSpec) -> Result<OperatorMatrix> {
    Ok(dimer_terms(model)?.assemble(field.vector()))
}
