use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use cotunnel_core::dynamics::{sweep_hysteresis, sweep_many, ClassGaps, SplittingSource, SweepProtocol};
use cotunnel_core::fitting::{
    arrhenius_fit, debye_fit, fit_resonances, generalized_debye, DebyeParams, FitParam, ResonanceTargets,
};
use cotunnel_core::hamiltonian::{DimerModel, FieldSpec};
use cotunnel_core::observables::{chi_t, OrientationGrid, ThermoOptions, ThermoSpace, ThermoSystem};
use cotunnel_core::spectrum::{
    co_tunneling_fields, distinct_fields, electronic_gap, ground_manifold_crossings, resonance_fields,
    single_flip_fields, CrossingClass, CrossingOptions, ModelMode, ResonanceOptions, SingleFlipOptions, SpinSystem,
};
use cotunnel_core::spinops::{angular_momentum_ops, embed, make_spin_space, HalfInteger, OperatorMatrix, SpinKind};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|x| x.to_string())
}

fn dipolar_coupling() -> Outcome {
    let dzz = e(DimerModel::tb2_paper().coupling_tensor())?[2][2];
    ensure((dzz.abs() - 0.0223).abs() <= 0.0005, format!("|D_zz| = {:.5} cm^-1 (target 0.0223 +- 0.0005)", dzz.abs()))
}

fn electronic_gaps() -> Outcome {
    let dip = e(electronic_gap(&DimerModel::tb2_paper()))?;
    let ex = e(electronic_gap(&DimerModel::tb2_paper_with_exchange()))?;
    ensure(
        (dip - 3.21).abs() <= 0.05 && (ex - 4.6).abs() <= 0.1,
        format!("gap {dip:.3} cm^-1 dipolar (3.21 +- 0.05), {ex:.3} cm^-1 with exchange (4.6 +- 0.1)"),
    )
}

fn co_tunneling_positions() -> Outcome {
    let fields = e(resonance_fields(&DimerModel::tb2_paper(), &ResonanceOptions::default()))?;
    let want = [0.0, 15.4, 30.4, 45.7];
    let mut worst = 0.0_f64;
    let mut ok = fields.len() == 7;
    for (s, h) in &fields {
        let k = s.value().abs().round() as usize;
        let mt = h * 1e3;
        worst = worst.max((mt.abs() - want[k.min(3)]).abs());
        if k > 3 || (s.value() != 0.0 && mt.signum() != -s.value().signum()) {
            ok = false;
        }
    }
    let list: Vec<String> = fields.values().map(|h| format!("{:.2}", h * 1e3)).collect();
    ensure(ok && worst <= 1.0, format!("fields [{}] mT, worst deviation {worst:.2} mT (tol 1 mT)", list.join(", ")))
}

fn crossing_census() -> Outcome {
    let (_, events) = e(ground_manifold_crossings(
        &DimerModel::tb2_paper(),
        &ResonanceOptions::default(),
        &CrossingOptions::default(),
    ))?;
    let co = events.iter().filter(|x| x.class == CrossingClass::CoTunneling).count();
    let distinct = distinct_fields(&events, CrossingClass::CoTunneling, 5e-4).len();
    let by_sum = co_tunneling_fields(&events).len();
    ensure(
        events.len() == 100 && co == 10 && distinct == 7 && by_sum == 7,
        format!("{} crossings, {co} co-tunneling, {distinct} distinct fields (100, 10, 7)", events.len()),
    )
}

fn single_flip() -> Outcome {
    let ex = e(single_flip_fields(&DimerModel::tb2_paper_with_exchange(), &SingleFlipOptions::default()))?;
    let dip = e(single_flip_fields(&DimerModel::tb2_paper(), &SingleFlipOptions::default()))?;
    ensure(
        (ex.positive - 0.55).abs() <= 0.03,
        format!(
            "with exchange {:.1} mT (550 +- 30); dipolar only {:.1} mT, below the reference ~430 mT (known discrepancy)",
            ex.positive * 1e3,
            dip.positive * 1e3
        ),
    )
}

fn susceptibility() -> Outcome {
    let curie = e(chi_t(&DimerModel::tb2_paper().decoupled(), &[1.0e5], 0.1, &e(ThermoOptions::powder(20))?))?.values[0];
    let low = e(chi_t(&DimerModel::tb2_paper(), &[2.0], 0.1, &e(ThermoOptions::powder(100))?))?.values[0];
    ensure(
        (curie - 23.6).abs() <= 0.1 && low >= 30.0 && rel(low, 35.3) <= 0.2,
        format!("chi T decoupled high-T {curie:.3} (23.6 +- 0.1), coupled at 2 K {low:.2} (>= 30, within 20% of 35.3)"),
    )
}

fn powder_magnetization() -> Outcome {
    let sys = e(ThermoSystem::dimer(&DimerModel::tb2_paper(), ThermoSpace::Electronic))?;
    let m = e(sys.powder_magnetization(7.0, &[2.0], &e(OrientationGrid::fibonacci(200))?))?[0];
    ensure(rel(m, 9.2) <= 0.10, format!("powder M(7 T, 2 K) = {m:.3} muB (within 10% of 9.2)"))
}

fn parameter_fits() -> Outcome {
    let targets = e(ResonanceTargets::from_unlabelled(&[0.0154, 0.0304, 0.0457], 1e-6))?;
    let fit = e(fit_resonances(&DimerModel::tb2_paper(), &targets, &[FitParam::AHf], &BTreeMap::new(), &Default::default()))?;
    let a = fit.value(FitParam::AHf).ok_or("no A_hf in fit")?;
    let sf = e(e(ResonanceTargets::from_unlabelled(&[0.0], 1e-6))?.with_single_flip(0.55, 1.0))?;
    let fit = e(fit_resonances(&DimerModel::tb2_paper(), &sf, &[FitParam::JEx], &BTreeMap::new(), &Default::default()))?;
    let j = fit.value(FitParam::JEx).ok_or("no J_ex in fit")?;
    ensure(
        (a - 0.0215).abs() <= 0.001 && rel(j, 0.0097) <= 0.15,
        format!("A_hf = {a:.5} cm^-1 (0.0215 +- 0.001), J_ex = {j:.5} cm^-1 (within 15% of 0.0097)"),
    )
}

fn operator_algebra() -> Outcome {
    let i = C64::new(0.0, 1.0);
    let mut worst = 0.0_f64;
    for twice in 1..=16 {
        let j = twice as f64 / 2.0;
        let space = e(make_spin_space(j, SpinKind::Electronic))?;
        let ops = angular_momentum_ops(space);
        let (x, y, z) = (&ops.x, &ops.y, &ops.z);
        for (a, b, c) in [(x, y, z), (y, z, x), (z, x, y)] {
            let d = e(e(a.commutator(b))?.try_sub(&c.scale(i)))?;
            worst = worst.max(d.frobenius_norm());
        }
        let casimir = e(e(e(x.try_mul(x))?.try_add(&e(y.try_mul(y))?))?.try_add(&e(z.try_mul(z))?))?;
        let id = OperatorMatrix::identity(&[space]).scale(C64::new(j * (j + 1.0), 0.0));
        worst = worst.max(casimir.max_abs_diff(&id));
        for op in [x, y, z] {
            worst = worst.max(op.hermiticity_deviation());
        }
        // Tr(A (x) B) = Tr A Tr B with a spin-3/2 partner
        let nuc = e(make_spin_space(1.5, SpinKind::Nuclear))?;
        let composite = [space, nuc];
        let a = e(z.try_mul(z))?;
        let iz = angular_momentum_ops(nuc).z;
        let b = e(iz.try_mul(&iz))?;
        let ab = e(e(embed(&a, 0, &composite))?.try_mul(&e(embed(&b, 1, &composite))?))?;
        worst = worst.max((ab.trace() - a.trace() * b.trace()).norm() / (a.trace() * b.trace()).norm());
    }
    ensure(worst <= 1e-12, format!("J = 1/2..8: worst commutator/Casimir/Hermiticity/trace deviation {worst:.2e} (tol 1e-12)"))
}

fn free_energy_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for _ in 0..12 {
        let mut model = DimerModel::tb2_paper();
        model.ion1.lf.a20 *= rng.random_range(0.8..1.2);
        model.ion2.lf.a20 *= rng.random_range(0.8..1.2);
        model.j_ex = rng.random_range(-0.02..0.02);
        let t = rng.random_range(2.0..50.0);
        let h = rng.random_range(0.05..5.0);
        let dir = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0)];
        let field = e(FieldSpec::new(h, dir))?;
        let sys = e(ThermoSystem::dimer(&model, ThermoSpace::Electronic))?;
        let m = e(sys.magnetization(&field, t))?;
        let fd = e(sys.magnetization_from_free_energy(&field, t, 1e-4))?;
        worst = worst.max(rel(fd, m));
    }
    ensure(worst <= 1e-6, format!("M vs -dF/dH over 12 seeded cases: worst relative deviation {worst:.2e} (tol 1e-6)"))
}

fn effective_model() -> Outcome {
    let model = DimerModel::tb2_paper();
    let full = e(SpinSystem::full(&model))?;
    let eff = e(SpinSystem::effective(&model))?;
    let mut worst = 0.0_f64;
    for h in [-0.1, -0.046, -0.015, 0.0, 0.03, 0.1] {
        let a = e(full.solve([0.0, 0.0, h], Some(64)))?;
        let b = e(eff.solve([0.0, 0.0, h], None))?;
        for (x, y) in a.energies.iter().zip(&b.energies) {
            worst = worst.max((x - y).abs());
        }
    }
    let opts = ResonanceOptions { mode: ModelMode::Full, n_points: 81, half_width: Some(0.1) };
    let rf = e(resonance_fields(&model, &opts))?;
    let re = e(resonance_fields(&model, &ResonanceOptions::default()))?;
    let mut dfield = 0.0_f64;
    for (s, h) in &rf {
        dfield = dfield.max(re.get(s).map_or(f64::INFINITY, |x| (x - h).abs()));
    }
    ensure(
        worst <= 1e-3 && dfield <= 2e-4 && rf.len() == re.len(),
        format!("ground energies differ by {worst:.2e} cm^-1 (tol 1e-3), resonance fields by {:.3} mT (tol 0.2)", dfield * 1e3),
    )
}

fn hysteresis() -> Outcome {
    let model = DimerModel::tb2_paper();
    let co_only = SplittingSource::Phenomenological(ClassGaps::co_tunneling_only(1e-6));
    let res = e(resonance_fields(&model, &ResonanceOptions::default()))?;

    let tr = e(sweep_hysteresis(&model, &SweepProtocol::new(-1.0, 1.0, 0.14, 1.0), &co_only, &Default::default()))?;
    let steps = tr.co_tunneling_steps();
    let mut dpos = 0.0_f64;
    for (s, (f, _)) in &steps {
        dpos = dpos.max(res.get(s).map_or(f64::INFINITY, |x| (x - f).abs()));
    }
    let mut dhist = 0.0_f64;
    for (k, v) in &tr.sum_iz_start {
        dhist = dhist.max((v - tr.sum_iz_end.get(k).copied().unwrap_or(f64::NAN)).abs());
    }

    let temps = [0.03, 0.1, 0.3, 1.0];
    let protocols: Vec<SweepProtocol> = temps.iter().map(|t| SweepProtocol::new(-1.0, 1.0, 0.14, *t)).collect();
    let mut traces = Vec::new();
    for r in sweep_many(&model, &protocols, &co_only, &Default::default()) {
        traces.push(e(r)?);
    }
    let ratio = |k: usize, s: i32| {
        let st = traces[k].co_tunneling_steps();
        let h = |s: i32| st.get(&HalfInteger::from_int(s)).map_or(0.0, |v| v.1);
        h(s) / h(0).max(1e-300)
    };
    let near: Vec<f64> = (0..temps.len()).map(|k| ratio(k, 3)).collect();
    let far: Vec<f64> = (0..temps.len()).map(|k| ratio(k, -3)).collect();
    let trend = near.windows(2).all(|w| w[1] > w[0]) && far.windows(2).all(|w| w[1] < w[0]);
    ensure(
        steps.len() == 7 && dpos <= 5e-5 && dhist <= 1e-12 && trend,
        format!(
            "{} steps, position error {:.1e} T (tol 5e-5), histogram drift {dhist:.1e} (tol 1e-12), near/far ratios {} / {}",
            steps.len(),
            dpos,
            near.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "),
            far.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn relaxation_fits() -> Outcome {
    let truth = DebyeParams { chi_t: 4.0, chi_s: 0.5, tau: 1e-3, alpha: 0.0 };
    let nu: Vec<f64> = (0..25).map(|k| 10f64.powf(4.0 * k as f64 / 24.0)).collect();
    let (c1, c2): (Vec<f64>, Vec<f64>) = nu.iter().map(|f| generalized_debye(&truth, *f)).unzip();
    let exact = e(debye_fit(&nu, &c1, &c2))?.params;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = e(Normal::new(0.0, 0.01))?;
    let n1: Vec<f64> = c1.iter().map(|v| v * (1.0 + noise.sample(&mut rng))).collect();
    let n2: Vec<f64> = c2.iter().map(|v| v * (1.0 + noise.sample(&mut rng))).collect();
    let noisy = e(debye_fit(&nu, &n1, &n2))?.params;

    let temps: [f64; 5] = [3.0, 4.0, 5.0, 6.5, 8.0];
    let taus: Vec<f64> = temps.iter().map(|t| 1e-7 * (42.0 / t).exp()).collect();
    let ar = e(arrhenius_fit(&taus, &temps))?.params;
    let noisy_taus: Vec<f64> = taus.iter().map(|v| v * (1.0 + noise.sample(&mut rng))).collect();
    let ar_noisy = e(arrhenius_fit(&noisy_taus, &temps))?.params;
    ensure(
        rel(exact.tau, 1e-3) < 1e-6
            && rel(ar.ueff_k, 42.0) < 1e-9
            && rel(noisy.tau, 1e-3) <= 0.05
            && rel(ar_noisy.ueff_k, 42.0) <= 0.05,
        format!(
            "exact tau {:.4e} s, Ueff {:.4} K; with 1% noise tau {:.4e} s, Ueff {:.3} K (tol 5%)",
            exact.tau, ar.ueff_k, noisy.tau, ar_noisy.ueff_k
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("dipolar coupling", dipolar_coupling),
        ("electronic gap", electronic_gaps),
        ("co-tunneling fields", co_tunneling_positions),
        ("crossing census", crossing_census),
        ("single-flip field", single_flip),
        ("susceptibility", susceptibility),
        ("powder magnetization", powder_magnetization),
        ("parameter fits", parameter_fits),
        ("operator algebra", operator_algebra),
        ("free-energy consistency", free_energy_consistency),
        ("effective model", effective_model),
        ("hysteresis steps", hysteresis),
        ("relaxation fits", relaxation_fits),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("PASS {} {name}: {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name}: {d}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
