use cotunnel_core::hamiltonian::{
    dimer_h, single_ion_h, DimerModel, FieldSpec, IonModel, LigandFieldParams,
};
use cotunnel_core::spectrum::*;
use cotunnel_core::spinops::HalfInteger;
use cotunnel_core::units::MU_B;
use proptest::prelude::*;

fn eff_census(model: &DimerModel, n_points: usize) -> Vec<CrossingEvent> {
    let opts = ResonanceOptions { mode: ModelMode::Effective, n_points, half_width: Some(0.1) };
    ground_manifold_crossings(model, &opts, &CrossingOptions::default()).unwrap().1
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn crossing_census_of_ground_manifold() {
    let events = eff_census(&DimerModel::tb2_paper(), 801);
    assert_eq!(events.len(), 100);
    let co: Vec<_> = events.iter().filter(|e| e.class == CrossingClass::CoTunneling).collect();
    assert_eq!(co.len(), 10);
    let fields = distinct_fields(&events, CrossingClass::CoTunneling, 5e-4);
    assert_eq!(fields.len(), 7);

    // unordered nuclear pairs grouped by their sum: 1+1+2+2+2+1+1
    let mut by_sum = std::collections::BTreeMap::new();
    for e in &co {
        *by_sum.entry(e.sum_iz.unwrap()).or_insert(0) += 1;
    }
    let counts: Vec<i32> = by_sum.values().copied().collect();
    assert_eq!(counts, vec![1, 1, 2, 2, 2, 1, 1]);
}

#[test]
fn resonance_fields_match_first_order_oracle() {
    let model = DimerModel::tb2_paper();
    let fields = resonance_fields(&model, &ResonanceOptions::default()).unwrap();
    assert_eq!(fields.len(), 7);
    for (s, h) in &fields {
        let oracle = first_order_co_tunneling_field(&model, s.value());
        assert!((h - oracle).abs() < 2e-5, "sum {s}: {h} vs {oracle}");
    }
    let h1 = fields[&HalfInteger::from_int(1)].abs() * 1e3;
    assert!((14.4..=16.4).contains(&h1), "{h1}");
    let h3 = first_order_co_tunneling_field(&model, 3.0) * 1e3;
    assert!((h3 + 3.0 * 0.0215 / (2.0 * 1.5 * MU_B) * 1e3).abs() < 1e-9);
    assert!((h3 + 46.05).abs() < 0.01);
}

#[test]
fn resonance_fields_antisymmetric_in_sum_iz() {
    let fields = resonance_fields(&DimerModel::tb2_paper(), &ResonanceOptions::default()).unwrap();
    for (s, h) in &fields {
        let partner = fields[&(-*s)];
        assert!((h + partner).abs() < 1e-4, "{s}");
    }
}

#[test]
fn zero_hyperfine_collapses_resonances() {
    let model = DimerModel::tb2_paper().with_hyperfine(0.0, 0.010);
    let fields = resonance_fields(&model, &ResonanceOptions::default()).unwrap();
    assert!(!fields.is_empty());
    for h in fields.values() {
        assert!(h.abs() < 1e-9);
    }
}

#[test]
fn reversed_sweep_finds_same_events() {
    let model = DimerModel::tb2_paper();
    let system = SpinSystem::effective(&model).unwrap();
    let mut grid = linear_grid(-0.1, 0.1, 301);
    let fwd = zeeman_sweep(&system, &grid, [0.0, 0.0, 1.0], None).unwrap();
    grid.reverse();
    let rev = zeeman_sweep(&system, &grid, [0.0, 0.0, 1.0], None).unwrap();
    let all: Vec<usize> = (0..64).collect();
    let opts = CrossingOptions::default();
    let a = find_crossings(&system, &fwd, &all, (-0.1, 0.1), &opts).unwrap();
    let b = find_crossings(&system, &rev, &all, (-0.1, 0.1), &opts).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.field - y.field).abs() < 1e-7);
        assert_eq!(x.class, y.class);
    }
}

#[test]
fn window_outside_grid_is_range_error() {
    let system = SpinSystem::effective(&DimerModel::tb2_paper()).unwrap();
    let grid = linear_grid(-0.05, 0.05, 11);
    let d = zeeman_sweep(&system, &grid, [0.0, 0.0, 1.0], None).unwrap();
    let r = find_crossings(&system, &d, &[0, 1], (-0.2, 0.0), &CrossingOptions::default());
    assert!(matches!(r, Err(cotunnel_core::Error::Range { .. })));
}

#[test]
fn axial_crossings_are_diabatic_and_transverse_term_opens_gaps() {
    let opts = ResonanceOptions { mode: ModelMode::Effective, n_points: 401, half_width: Some(0.1) };
    let gaps = CrossingOptions { compute_gaps: true, ..Default::default() };
    let co_gaps = |m: &DimerModel| -> Vec<f64> {
        ground_manifold_crossings(m, &opts, &gaps)
            .unwrap()
            .1
            .iter()
            .filter(|e| e.class == CrossingClass::CoTunneling)
            .map(|e| e.min_gap.unwrap())
            .collect()
    };
    let axial = co_gaps(&DimerModel::tb2_paper());
    assert_eq!(axial.len(), 10);
    let axial_max = axial.iter().cloned().fold(0.0, f64::max);
    assert!(axial_max < 1e-6);

    let mut tilted = DimerModel::tb2_paper();
    tilted.ion1.lf.a44 = 100.0;
    tilted.ion2.lf.a44 = 100.0;
    let opened = co_gaps(&tilted);
    assert!(!opened.is_empty());
    assert!(opened.iter().all(|&g| g > axial_max));
}

#[test]
fn single_ion_spectrum_groups() {
    let ion = IonModel::terbium(289.0, -209.0, 0.0215, 0.010);
    let h = single_ion_h(&ion, &FieldSpec::along_z(0.0)).unwrap();
    let sol = diagonalize(&h).unwrap();
    assert_eq!(sol.len(), 52);
    let e = &sol.energies;
    assert!(e[7] - e[0] < 1.0);
    assert!(e[8] - e[7] > 300.0);

    // first-order hyperfine ladder of the |+-6> doublet
    let e6 = -344.666_666_666_666_7;
    let oracle = sorted(
        [6.0_f64, -6.0]
            .iter()
            .flat_map(|m| {
                [1.5_f64, 0.5, -0.5, -1.5]
                    .map(|iz| e6 + 0.0215 * m * iz + 0.010 * (iz * iz - 1.25))
            })
            .collect(),
    );
    for (a, b) in e[..8].iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
    let trace: f64 = e.iter().sum();
    assert!((trace - h.trace().re).abs() < 1e-8 * trace.abs().max(1.0));
}

#[test]
fn dimer_ground_manifold_and_first_excited() {
    let system = SpinSystem::full(&DimerModel::tb2_paper()).unwrap();
    let sol = system.solve([0.0; 3], Some(64)).unwrap();
    let e = &sol.energies;
    assert!(e[31] - e[0] < 1.0);
    assert!(e[32] - e[31] > 1.5);
    // hyperfine shifts are traceless over each manifold
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let gap = mean(&e[32..64]) - mean(&e[..32]);
    assert!((gap - 3.21).abs() < 0.01, "{gap}");
    assert!(sol.residual < 1e-8 * (e[e.len() - 1] - e[0]).max(1.0));
    let l = system.label(sol.state(0));
    assert!(l.jz1 * l.jz2 > 35.0, "ground state must be ferromagnetic");
}

#[test]
fn effective_model_matches_full_ground_manifold() {
    let model = DimerModel::tb2_paper();
    let full = SpinSystem::full(&model).unwrap();
    let eff = SpinSystem::effective(&model).unwrap();
    let mut worst = 0.0_f64;
    for h in [-0.1, -0.046, -0.015, 0.0, 0.03, 0.1] {
        let a = full.solve([0.0, 0.0, h], Some(64)).unwrap();
        let b = eff.solve([0.0, 0.0, h], None).unwrap();
        for (x, y) in a.energies.iter().zip(&b.energies) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst < 1e-3, "{worst}");

    let opts_f = ResonanceOptions { mode: ModelMode::Full, n_points: 81, half_width: Some(0.1) };
    let rf = resonance_fields(&model, &opts_f).unwrap();
    let re = resonance_fields(&model, &ResonanceOptions::default()).unwrap();
    assert_eq!(rf.len(), re.len());
    for (s, h) in &rf {
        assert!((h - re[s]).abs() < 2e-4, "{s}");
    }
}

#[test]
fn full_model_census_is_also_100() {
    let opts = ResonanceOptions { mode: ModelMode::Full, n_points: 81, half_width: Some(0.1) };
    let (_, events) =
        ground_manifold_crossings(&DimerModel::tb2_paper(), &opts, &CrossingOptions::default()).unwrap();
    assert_eq!(events.len(), 100);
}

#[test]
fn single_flip_fields_with_and_without_exchange() {
    let dip = single_flip_fields(&DimerModel::tb2_paper(), &SingleFlipOptions::default()).unwrap();
    let oracle = first_order_single_flip_field(&DimerModel::tb2_paper()).unwrap();
    assert!((dip.positive - oracle).abs() < 5e-3, "{} vs {oracle}", dip.positive);
    assert!((dip.positive + dip.negative).abs() < 1e-6);
    let ex = single_flip_fields(&DimerModel::tb2_paper_with_exchange(), &SingleFlipOptions::default())
        .unwrap();
    assert!((ex.positive - 0.55).abs() < 0.03, "{}", ex.positive);
}

#[test]
fn classification_examples_on_real_events() {
    let events = eff_census(&DimerModel::tb2_paper(), 401);
    let e = events
        .iter()
        .find(|e| e.class == CrossingClass::CoTunneling && e.sum_iz == Some(HalfInteger::from_int(3)))
        .unwrap();
    assert!((e.field * 1e3 + 46.05).abs() < 0.5);
    assert_eq!(classify_crossing(e), CrossingClass::CoTunneling);
    let (a, b) = (e.labels_a, e.labels_b);
    assert!(a.jz1 * b.jz1 < 0.0 && a.jz2 * b.jz2 < 0.0);
    assert!((a.iz1 - 1.5).abs() < 0.2 && (a.iz2 - 1.5).abs() < 0.2);
}

#[test]
fn decoupled_tb_dimer_is_minkowski_sum() {
    let model = DimerModel::tb2_paper().decoupled();
    let field = FieldSpec::along_z(0.05);
    let s1 = diagonalize(&single_ion_h(&model.ion1, &field).unwrap()).unwrap().energies;
    let s2 = diagonalize(&single_ion_h(&model.ion2, &field).unwrap()).unwrap().energies;
    let oracle = sorted(s1.iter().flat_map(|a| s2.iter().map(move |b| a + b)).collect());
    let sys = SpinSystem::full(&model).unwrap();
    let got = sys.solve([0.0, 0.0, 0.05], None).unwrap().energies;
    for (a, b) in got.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9);
    }
}

fn toy_ion(a20: f64, a_hf: f64, g: f64) -> IonModel {
    IonModel {
        j: HalfInteger::from_int(1),
        i: HalfInteger::from_twice(1),
        g_j: g,
        lf: LigandFieldParams { a20, ..Default::default() },
        a_hf,
        p_quad: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn toy_decoupled_spectrum_factorizes(
        a20a in -5.0..5.0f64, a20b in -5.0..5.0f64,
        ha in -0.5..0.5f64, hb in -0.5..0.5f64,
        b in -1.0..1.0f64, theta in 0.0..3.14f64,
    ) {
        let ion1 = toy_ion(a20a, ha, 1.3);
        let ion2 = toy_ion(a20b, hb, 0.7);
        let model = DimerModel {
            ion1: ion1.clone(),
            ion2: ion2.clone(),
            r_vec: [0.0, 0.0, 3.0],
            g_tensor1: cotunnel_core::hamiltonian::isotropic_g(1.3),
            g_tensor2: cotunnel_core::hamiltonian::isotropic_g(0.7),
            j_ex: 0.0,
            coupling_override: Some([[0.0; 3]; 3]),
        };
        let field = FieldSpec::new(b, [theta.sin(), 0.0, theta.cos()]).unwrap();
        let s1 = diagonalize(&single_ion_h(&ion1, &field).unwrap()).unwrap().energies;
        let s2 = diagonalize(&single_ion_h(&ion2, &field).unwrap()).unwrap().energies;
        let oracle = sorted(s1.iter().flat_map(|a| s2.iter().map(move |b| a + b)).collect());
        let h = dimer_h(&model, &field).unwrap();
        prop_assert!(h.is_hermitian(1e-12));
        let got = diagonalize(&h).unwrap();
        for (a, b) in got.energies.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let tr: f64 = got.energies.iter().sum();
        prop_assert!((tr - h.trace().re).abs() < 1e-8 * h.frobenius_norm().max(1.0));
    }
}
