use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generalized Debye relaxation, `chi(w) = chi_S + (chi_T - chi_S) / (1 + (i w tau)^(1 - alpha))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebyeParams {
    /// Isothermal susceptibility, cm^3 mol^-1.
    pub chi_t: f64,
    /// Adiabatic susceptibility, cm^3 mol^-1.
    pub chi_s: f64,
    /// Relaxation time, s.
    pub tau: f64,
    pub alpha: f64,
}

impl DebyeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi_t > self.chi_s && self.chi_s >= 0.0 && self.tau > 0.0 && (0.0..1.0).contains(&self.alpha)) {
            return Err(Error::InvalidArgument(format!("invalid Debye parameters {self:?}")));
        }
        Ok(())
    }
}

/// `(chi', chi'')` at frequency `nu` (Hz), with `chi = chi' - i chi''`.
pub fn generalized_debye(p: &DebyeParams, nu: f64) -> (f64, f64) {
    let z = debye_complex(p.chi_t, p.chi_s, p.tau.ln(), p.alpha, nu);
    (z.re, -z.im)
}

fn debye_complex(chi_t: f64, chi_s: f64, ln_tau: f64, alpha: f64, nu: f64) -> Complex64 {
    let u = debye_u(ln_tau, alpha, nu);
    chi_s + (chi_t - chi_s) / (1.0 + u)
}

/// `(i w tau)^(1 - alpha)`.
fn debye_u(ln_tau: f64, alpha: f64, nu: f64) -> Complex64 {
    let l = Complex64::new((2.0 * std::f64::consts::PI * nu).ln() + ln_tau, std::f64::consts::FRAC_PI_2);
    ((1.0 - alpha) * l).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebyeFit {
    pub params: DebyeParams,
    /// RMS of the joint `(chi', chi'')` residuals.
    pub residual: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// False when the largest `chi''` sits at an end of the frequency window.
    pub peak_in_window: bool,
    /// The unconstrained fit gave `alpha < 0`; refitted with `alpha = 0`.
    pub alpha_clamped: bool,
}

struct DebyeProblem<'a> {
    nu: &'a [f64],
    chi1: &'a [f64],
    chi2: &'a [f64],
    /// `[chi_T, chi_S, ln tau, alpha]`; alpha is dropped when fixed.
    p: DVector<f64>,
    fixed_alpha: Option<f64>,
}

impl DebyeProblem<'_> {
    fn unpack(&self) -> (f64, f64, f64, f64) {
        let alpha = self.fixed_alpha.unwrap_or_else(|| self.p[3]);
        (self.p[0], self.p[1], self.p[2], alpha)
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for DebyeProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let (ct, cs, lt, a) = self.unpack();
        let n = self.nu.len();
        let mut r = DVector::zeros(2 * n);
        for k in 0..n {
            let z = debye_complex(ct, cs, lt, a, self.nu[k]);
            r[k] = z.re - self.chi1[k];
            r[n + k] = -z.im - self.chi2[k];
        }
        Some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let (ct, cs, lt, a) = self.unpack();
        let n = self.nu.len();
        let mut j = DMatrix::zeros(2 * n, self.p.len());
        for k in 0..n {
            let u = debye_u(lt, a, self.nu[k]);
            let inv = 1.0 / (1.0 + u);
            let d = ct - cs;
            let mut cols = vec![inv, 1.0 - inv, -d * u * (1.0 - a) * inv * inv];
            if self.fixed_alpha.is_none() {
                let l = Complex64::new((2.0 * std::f64::consts::PI * self.nu[k]).ln() + lt, std::f64::consts::FRAC_PI_2);
                cols.push(d * inv * inv * u * l);
            }
            for (c, dz) in cols.into_iter().enumerate() {
                j[(k, c)] = dz.re;
                j[(n + k, c)] = -dz.im;
            }
        }
        Some(j)
    }
}

fn run_lm(problem: DebyeProblem<'_>) -> (DebyeProblem<'_>, bool, usize) {
    let (problem, report) = LevenbergMarquardt::new().with_patience(200).minimize(problem);
    (problem, report.termination.was_successful(), report.number_of_evaluations)
}

/// Joint least-squares fit of `chi'` and `chi''` on frequencies `nu` (Hz).
pub fn debye_fit(nu: &[f64], chi_prime: &[f64], chi_dblprime: &[f64]) -> Result<DebyeFit> {
    if nu.len() != chi_prime.len() || nu.len() != chi_dblprime.len() {
        return Err(Error::Dimension("frequency and susceptibility arrays differ in length".into()));
    }
    if nu.len() < 4 {
        return Err(Error::InvalidArgument("Debye fit needs at least four frequencies".into()));
    }
    if nu.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument("frequencies must be positive".into()));
    }
    if chi_prime.iter().chain(chi_dblprime).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("susceptibilities must be finite".into()));
    }

    let (kmax, _) = chi_dblprime
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, v)| if *v > best.1 { (k, *v) } else { best });
    let lo = nu.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let peak_in_window = nu[kmax] > lo && nu[kmax] < hi;

    // chi' falls from chi_T to chi_S with frequency
    let by_freq = |pick_low: bool| {
        let k = (0..nu.len())
            .min_by(|&a, &b| {
                let o = nu[a].partial_cmp(&nu[b]).unwrap();
                if pick_low { o } else { o.reverse() }
            })
            .unwrap();
        chi_prime[k]
    };
    let chi_t0 = by_freq(true);
    let chi_s0 = by_freq(false).min(chi_t0).max(0.0);
    let tau0 = 1.0 / (2.0 * std::f64::consts::PI * nu[kmax]);
    let start = DVector::from_vec(vec![chi_t0, chi_s0, tau0.ln(), 0.05]);

    let problem = DebyeProblem { nu, chi1: chi_prime, chi2: chi_dblprime, p: start.clone(), fixed_alpha: None };
    let (mut problem, mut ok, mut evals) = run_lm(problem);
    let mut alpha_clamped = false;
    if problem.p[3] < 0.0 {
        alpha_clamped = true;
        let fixed = DebyeProblem {
            nu,
            chi1: chi_prime,
            chi2: chi_dblprime,
            p: problem.p.rows(0, 3).into_owned(),
            fixed_alpha: Some(0.0),
        };
        let (p, o, e) = run_lm(fixed);
        problem = p;
        ok = o;
        evals += e;
    }
    let (chi_t, chi_s, ln_tau, alpha) = problem.unpack();
    let params = DebyeParams { chi_t, chi_s, tau: ln_tau.exp(), alpha };
    let r = problem.residuals().unwrap_or_else(|| DVector::from_element(1, f64::NAN));
    let residual = (r.norm_squared() / r.len() as f64).sqrt();
    let converged = ok && peak_in_window && residual.is_finite() && params.validate().is_ok();
    Ok(DebyeFit { params, residual, evaluations: evals, converged, peak_in_window, alpha_clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_finite_difference() {
        let nu = [1.0, 30.0, 160.0, 900.0, 5000.0];
        let data = [0.0; 5];
        let mut prob = DebyeProblem {
            nu: &nu,
            chi1: &data,
            chi2: &data,
            p: DVector::from_vec(vec![3.0, 0.4, (1e-3f64).ln(), 0.2]),
            fixed_alpha: None,
        };
        let j = prob.jacobian().unwrap();
        let p0 = prob.p.clone();
        for c in 0..4 {
            let h = 1e-6;
            let mut up = p0.clone();
            up[c] += h;
            prob.set_params(&up);
            let ru = prob.residuals().unwrap();
            let mut dn = p0.clone();
            dn[c] -= h;
            prob.set_params(&dn);
            let rd = prob.residuals().unwrap();
            for r in 0..ru.len() {
                let fd = (ru[r] - rd[r]) / (2.0 * h);
                assert!((fd - j[(r, c)]).abs() < 1e-6, "col {c} row {r}: {fd} vs {}", j[(r, c)]);
            }
        }
    }

    #[test]
    fn too_few_points() {
        assert!(debye_fit(&[1.0, 2.0, 3.0], &[1.0; 3], &[0.1; 3]).is_err());
        assert!(debye_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0; 3], &[0.1; 4]).is_err());
    }
}
