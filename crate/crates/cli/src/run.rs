//! Subcommand implementations. Each one computes everything in memory and
//! returns a [`Report`]; files are written only after a run succeeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cotunnel_core::dynamics::{sweep_many, ClassGaps, DynamicsOptions, SplittingSource, SweepProtocol};
use cotunnel_core::export::{self, num, CsvDocument};
use cotunnel_core::fitting::{
    arrhenius_fit, debye_fit, fit_resonances, FitParam, FitResult, ResonanceFitOptions, ResonanceTarget, ResonanceTargets,
    TargetKind,
};
use cotunnel_core::hamiltonian::DimerModel;
use cotunnel_core::observables::{chi_t, m_vs_h, ObservableSeries, ThermoOptions, ThermoSpace};
use cotunnel_core::spectrum::{
    co_tunneling_fields, electronic_gap, field_vector, ground_manifold_crossings, linear_grid, single_flip_fields,
    zeeman_sweep, CrossingClass, CrossingOptions, ModelMode, ResonanceOptions, SingleFlipOptions, SpinSystem,
};
use cotunnel_core::spinops::HalfInteger;

use crate::config::{Config, ConfigError};
use crate::plot::{line_plot, Curve};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Sweep,
    Crossings,
    Thermo,
    Fit,
    Hysteresis,
    ReproducePaper,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Sweep => "sweep",
            Command::Crossings => "crossings",
            Command::Thermo => "thermo",
            Command::Fit => "fit",
            Command::Hysteresis => "hysteresis",
            Command::ReproducePaper => "reproduce-paper",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] cotunnel_core::Error),
    #[error("{0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl RunError {
    /// 2 for invalid input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        use cotunnel_core::Error as E;
        match self {
            RunError::Model(E::NotHermitian { .. } | E::Eigensolver(_) | E::Rank(_)) => 3,
            RunError::Output(_) => 1,
            _ => 2,
        }
    }
}

pub struct Artifact {
    pub name: String,
    pub content: String,
}

pub struct Report {
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<Artifact>,
    pub converged: bool,
}

impl Report {
    fn new() -> Self {
        Report { summary: Vec::new(), warnings: Vec::new(), artifacts: Vec::new(), converged: true }
    }

    fn file(&mut self, name: impl Into<String>, content: String) {
        self.artifacts.push(Artifact { name: name.into(), content });
    }

    fn line(&mut self, s: String) {
        self.summary.push(s);
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::Output(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            fs::write(&p, &a.content).map_err(|e| RunError::Output(format!("{}: {e}", p.display())))?;
            written.push(p);
        }
        Ok(written)
    }
}

struct Ctx<'a> {
    cfg: &'a Config,
    model: DimerModel,
    provenance: Vec<(String, String)>,
    plots: bool,
}

impl Ctx<'_> {
    fn prov(&self) -> &[(String, String)] {
        &self.provenance
    }
}

pub fn run(command: Command, cfg: &Config) -> Result<Report, RunError> {
    let model = cfg.model()?;
    let provenance = vec![
        ("command".to_string(), command.name().to_string()),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("config".to_string(), cfg.hash()),
        ("model".to_string(), model.fingerprint()),
    ];
    let ctx = Ctx { cfg, model, provenance, plots: cfg.flag("output.plots") };
    let mut report = Report::new();
    match command {
        Command::Spectrum => spectrum(&ctx, &mut report)?,
        Command::Sweep => sweep(&ctx, &mut report)?,
        Command::Crossings => crossings(&ctx, &mut report)?,
        Command::Thermo => thermo(&ctx, &mut report)?,
        Command::Fit => fit(&ctx, &mut report)?,
        Command::Hysteresis => hysteresis(&ctx, &mut report)?,
        Command::ReproducePaper => reproduce(&ctx, &mut report)?,
    }
    report.file("config.cfg", cfg.to_canonical());
    Ok(report)
}

fn mode(cfg: &Config, path: &str) -> ModelMode {
    cfg.word(path).parse().expect("schema restricts the mode")
}

fn direction(cfg: &Config, path: &str) -> [f64; 3] {
    let th = cfg.num(path).to_radians();
    [th.sin(), 0.0, th.cos()]
}

fn spectrum(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let system = SpinSystem::new(&ctx.model, mode(cfg, "spectrum.mode"))?;
    let dir = direction(cfg, "spectrum.field_angle");
    let n = cfg.int("spectrum.levels").min(system.dim());
    let mut d = CsvDocument::new("lowest eigenvalues")
        .provenance(ctx.prov())
        .meta("mode", cfg.word("spectrum.mode"))
        .meta("direction", format!("{dir:?}"))
        .column("field_T", "T")
        .column("level", "1")
        .column("energy", "cm^-1")
        .column("relative_energy", "cm^-1")
        .column("jz1", "1")
        .column("jz2", "1")
        .column("iz1", "1")
        .column("iz2", "1")
        .column("purity", "1");
    for &h in cfg.list("spectrum.fields") {
        let sol = system.solve(field_vector(h, dir), Some(n))?;
        let e0 = sol.energies[0];
        for (k, e) in sol.energies.iter().enumerate() {
            let l = system.label(sol.state(k));
            d.row(vec![
                num(h),
                k.to_string(),
                num(*e),
                num(e - e0),
                num(l.jz1),
                num(l.jz2),
                num(l.iz1),
                num(l.iz2),
                num(l.purity),
            ]);
        }
    }
    report.file("spectrum.csv", d.render());
    report.line(format!("spectrum: {n} levels at {} field(s)", cfg.list("spectrum.fields").len()));
    report.line(format!("first excited electronic level (cm^-1): {:.3}", electronic_gap(&ctx.model)?));
    Ok(())
}

fn sweep(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let system = SpinSystem::new(&ctx.model, mode(cfg, "sweep.mode"))?;
    let (lo, hi) = (cfg.num("sweep.field_min"), cfg.num("sweep.field_max"));
    let grid = linear_grid(lo, hi, cfg.int("sweep.points"));
    let tracks = cfg.int("sweep.tracks").min(system.dim());
    let diagram = zeeman_sweep(&system, &grid, direction(cfg, "sweep.field_angle"), Some(tracks))?;
    report.file("zeeman.csv", export::zeeman_csv(&diagram, ctx.prov()));
    report.file("tracks.csv", export::track_labels_csv(&diagram, ctx.prov()));
    if ctx.plots {
        let energies: Vec<Vec<f64>> = (0..tracks).map(|k| diagram.track_energies(k)).collect();
        let curves: Vec<Curve<'_>> = energies.iter().map(|e| Curve { x: &diagram.field_grid, y: e }).collect();
        report.file("zeeman.svg", line_plot("Zeeman diagram", "H (T)", "E (cm^-1)", &curves));
    }
    report.line(format!("Zeeman diagram: {tracks} tracks over {lo}..{hi} T ({} points)", grid.len()));
    Ok(())
}

/// `0.0 ±15.4 ±30.7` when the fields pair up under sign reversal, otherwise
/// the signed list.
pub fn format_fields_mt(fields: &[f64]) -> String {
    let mut v: Vec<f64> = fields.iter().map(|f| f * 1e3).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let paired = v.iter().all(|x| x.abs() < 1e-6 || v.iter().any(|y| (x + y).abs() < 1e-3));
    if !paired {
        return v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" ");
    }
    let mut out: Vec<String> = Vec::new();
    if v.iter().any(|x| x.abs() < 1e-6) {
        out.push("0.0".into());
    }
    for x in v.iter().filter(|x| **x > 1e-6) {
        let partner = v.iter().find(|y| (*x + **y).abs() < 1e-3).copied().unwrap_or(-x);
        out.push(format!("±{:.1}", 0.5 * (x - partner)));
    }
    out.join(" ")
}

struct Census {
    co_fields: BTreeMap<HalfInteger, f64>,
    total: usize,
    co_classes: usize,
}

fn census(ctx: &Ctx<'_>, model: &DimerModel, report: &mut Report) -> Result<Census, RunError> {
    let cfg = ctx.cfg;
    let ropts = ResonanceOptions {
        mode: mode(cfg, "crossings.mode"),
        n_points: cfg.int("crossings.points"),
        half_width: cfg.opt("crossings.half_width"),
    };
    let copts = CrossingOptions { compute_gaps: cfg.flag("crossings.compute_gaps"), ..Default::default() };
    let (_, events) = ground_manifold_crossings(model, &ropts, &copts)?;
    let co_fields = co_tunneling_fields(&events);
    let co_classes = events.iter().filter(|e| e.class == CrossingClass::CoTunneling).count();
    report.file("crossings.csv", export::crossings_csv(&events, ctx.prov()));
    let mut d = CsvDocument::new("co-tunneling resonance fields")
        .provenance(ctx.prov())
        .column("sum_iz", "1")
        .column("field_T", "T")
        .column("field_mT", "mT");
    for (s, f) in &co_fields {
        d.row(vec![s.to_string(), num(*f), num(f * 1e3)]);
    }
    report.file("resonances.csv", d.render());
    Ok(Census { total: events.len(), co_classes, co_fields })
}

fn crossings(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let c = census(ctx, &ctx.model, report)?;
    let fields: Vec<f64> = c.co_fields.values().copied().collect();
    report.line(format!("co-tunneling fields (mT): {}", format_fields_mt(&fields)));
    report.line(format!(
        "crossings: {} in ground manifold, {} co-tunneling, {} resonance fields",
        c.total,
        c.co_classes,
        fields.len()
    ));
    let sopts = SingleFlipOptions {
        mode: mode(cfg, "crossings.mode"),
        n_points: cfg.int("crossings.single_flip_points"),
        min_field: cfg.num("crossings.single_flip_min"),
        max_field: cfg.num("crossings.single_flip_max"),
    };
    let sf = single_flip_fields(&ctx.model, &sopts)?;
    if sf.positive.is_finite() {
        report.line(format!(
            "single-flip field (mT): +{:.1} / {:.1} over {} crossings, spread {:.1}",
            sf.positive * 1e3,
            sf.negative * 1e3,
            sf.n_events,
            sf.spread * 1e3
        ));
    } else {
        report.line("single-flip field (mT): none in window".into());
    }
    Ok(())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| if i + 1 == n { hi } else { (a + (b - a) * i as f64 / (n - 1) as f64).exp() }).collect()
}

fn thermo_options(cfg: &Config) -> Result<ThermoOptions, RunError> {
    let mut opts = ThermoOptions::powder(cfg.int("thermo.orientations"))?;
    opts.space = cfg.word("thermo.space").parse::<ThermoSpace>()?;
    Ok(opts)
}

fn series_plot(report: &mut Report, name: &str, s: &ObservableSeries) {
    let x = format!("{} ({})", s.axis_name, s.axis_unit);
    let y = format!("{} ({})", s.value_name, s.value_unit);
    report.file(name, line_plot(&format!("{} vs {}", s.value_name, s.axis_name), &x, &y, &[Curve { x: &s.axis, y: &s.values }]));
}

fn thermo(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let opts = thermo_options(cfg)?;
    let temps = log_grid(cfg.num("thermo.T_min"), cfg.num("thermo.T_max"), cfg.int("thermo.T_points"));
    let chi = chi_t(&ctx.model, &temps, cfg.num("thermo.probe_field"), &opts)?;
    let hmax = cfg.num("thermo.M_field_max");
    let tm = cfg.num("thermo.M_temperature");
    let fields = linear_grid(0.0, hmax, cfg.int("thermo.M_points"));
    let m = m_vs_h(&ctx.model, &fields, tm, &opts)?;
    report.warnings.extend(chi.warnings.iter().cloned());
    report.file("chi_t.csv", export::series_csv(&chi, ctx.prov()));
    report.file("m_vs_h.csv", export::series_csv(&m, ctx.prov()));
    if ctx.plots {
        series_plot(report, "chi_t.svg", &chi);
        series_plot(report, "m_vs_h.svg", &m);
    }
    let (n, last) = (chi.values.len(), m.values.len() - 1);
    report.line(format!(
        "chi T (cm^3 K mol^-1): {:.2} at {} K, {:.2} at {} K",
        chi.values[n - 1],
        chi.axis[n - 1],
        chi.values[0],
        chi.axis[0]
    ));
    report.line(format!("powder M at {} T, {} K (muB): {:.2}", m.axis[last], tm, m.values[last]));
    Ok(())
}

/// Reads numeric columns from a comma-separated file; `#` lines and a
/// non-numeric first row are skipped.
pub fn read_columns(path: &Path, n: usize) -> Result<Vec<Vec<f64>>, RunError> {
    let bad = |m: String| RunError::Input(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut cols = vec![Vec::new(); n];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().take(n).map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == n => {
                for (c, x) in cols.iter_mut().zip(v) {
                    c.push(x);
                }
            }
            _ if i == 0 => continue,
            _ => return Err(bad(format!("row {} needs {n} numeric columns", i + 1))),
        }
    }
    if cols[0].is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok(cols)
}

fn data_path(cfg: &Config) -> Result<PathBuf, RunError> {
    match cfg.word("fit.data") {
        "none" => Err(ConfigError { line: None, key: Some("fit.data".into()), message: "this fit kind needs a data file".into() }.into()),
        p => Ok(PathBuf::from(p)),
    }
}

fn fit(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    match ctx.cfg.word("fit.kind") {
        "resonance" => fit_resonance(ctx, report),
        "debye" => fit_debye(ctx, report),
        _ => fit_arrhenius(ctx, report),
    }
}

fn header(ctx: &Ctx<'_>, title: &str) -> String {
    let mut s = format!("# {title}\n");
    for (k, v) in ctx.prov() {
        s += &format!("# {k} = {v}\n");
    }
    s
}

fn resonance_fit_run(
    ctx: &Ctx<'_>,
    template: &DimerModel,
    targets: &ResonanceTargets,
    free: &[FitParam],
    tag: &str,
    report: &mut Report,
) -> Result<FitResult, RunError> {
    let fit = fit_resonances(template, targets, free, &BTreeMap::new(), &ResonanceFitOptions::default())?;
    report.file(format!("fit_{tag}.txt"), header(ctx, "resonance fit; values in the units listed after each number") + &fit.report());
    report.file(format!("fit_{tag}_residuals.csv"), export::fit_residuals_csv(&fit, ctx.prov()));
    let values: Vec<String> =
        fit.params.iter().map(|v| format!("{} = {:.5} {}", v.param, v.value, v.param.unit())).collect();
    report.line(format!(
        "fit: {} (rms residual {:.2e} T, {})",
        values.join(", "),
        fit.residual,
        if fit.converged { "converged" } else { "not converged" }
    ));
    for v in fit.params.iter().filter(|v| !v.identifiable) {
        report.warnings.push(format!("{} is not constrained by the targets", v.param));
    }
    report.converged &= fit.converged;
    Ok(fit)
}

fn single_flip_target(field: f64, weight: f64) -> ResonanceTarget {
    ResonanceTarget { kind: TargetKind::SingleFlip, field, weight }
}

fn fit_resonance(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let co = cfg.list("fit.co_tunneling_targets");
    let mut targets: Vec<ResonanceTarget> = Vec::new();
    if !co.is_empty() {
        targets.extend_from_slice(ResonanceTargets::from_unlabelled(co, cfg.num("fit.zero_tol"))?.targets());
    }
    if let Some(f) = cfg.opt("fit.single_flip_target") {
        targets.push(single_flip_target(f, cfg.num("fit.single_flip_weight")));
    }
    if targets.is_empty() {
        return Err(ConfigError {
            line: None,
            key: Some("fit.co_tunneling_targets".into()),
            message: "a resonance fit needs co-tunneling or single-flip targets".into(),
        }
        .into());
    }
    let targets = ResonanceTargets::new(targets)?;
    let free: Vec<FitParam> = cfg.words("fit.free").iter().map(|w| w.parse()).collect::<Result<_, _>>()?;
    resonance_fit_run(ctx, &ctx.model, &targets, &free, "resonance", report)?;
    Ok(())
}

fn fit_debye(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cols = read_columns(&data_path(ctx.cfg)?, 3)?;
    let fit = debye_fit(&cols[0], &cols[1], &cols[2])?;
    let p = &fit.params;
    let mut s = header(ctx, "generalized Debye fit");
    s += &format!("chi_T = {:.6e} (data units)\nchi_S = {:.6e} (data units)\n", p.chi_t, p.chi_s);
    s += &format!("tau = {:.6e} s\nalpha = {:.6e}\n", p.tau, p.alpha);
    s += &format!("residual = {:.6e}\nevaluations = {}\n", fit.residual, fit.evaluations);
    s += &format!("peak_in_window = {}\nalpha_clamped = {}\nconverged = {}\n", fit.peak_in_window, fit.alpha_clamped, fit.converged);
    report.file("fit_debye.txt", s);
    if !fit.peak_in_window {
        report.warnings.push("chi'' maximum lies at the edge of the frequency window".into());
    }
    report.line(format!(
        "Debye fit: tau = {:.4e} s, alpha = {:.4}, chi_T = {:.4e}, chi_S = {:.4e} ({})",
        p.tau,
        p.alpha,
        p.chi_t,
        p.chi_s,
        if fit.converged { "converged" } else { "not converged" }
    ));
    report.converged &= fit.converged;
    Ok(())
}

fn fit_arrhenius(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cols = read_columns(&data_path(ctx.cfg)?, 2)?;
    let fit = arrhenius_fit(&cols[1], &cols[0])?;
    let p = &fit.params;
    let mut s = header(ctx, "Arrhenius fit, tau = tau0 exp(Ueff / kB T)");
    s += &format!("tau0 = {:.6e} s\nUeff = {:.6e} K\nUeff_cm = {:.6e} cm^-1\n", p.tau0, p.ueff_k, p.ueff_cm());
    s += &format!("residual = {:.6e}\nsystematic_residuals = {}\n", fit.residual, fit.systematic_residuals);
    report.file("fit_arrhenius.txt", s);
    let mut d = CsvDocument::new("Arrhenius residuals, ln tau data minus model")
        .provenance(ctx.prov())
        .column("T", "K")
        .column("ln_tau_residual", "1");
    for (t, r) in cols[0].iter().zip(&fit.residuals) {
        d.row(vec![num(*t), num(*r)]);
    }
    report.file("fit_arrhenius_residuals.csv", d.render());
    if fit.systematic_residuals {
        report.warnings.push("residuals are systematic; a single Orbach process does not describe the data".into());
    }
    report.line(format!("Arrhenius fit: tau0 = {:.4e} s, Ueff = {:.2} K", p.tau0, p.ueff_k));
    Ok(())
}

fn hysteresis(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let temps = cfg.list("hysteresis.temperatures");
    let protocols: Vec<SweepProtocol> = temps
        .iter()
        .map(|&t| SweepProtocol {
            init_wait: cfg.flag("hysteresis.init_wait"),
            n_points: cfg.int("hysteresis.points"),
            ..SweepProtocol::new(cfg.num("hysteresis.start"), cfg.num("hysteresis.end"), cfg.num("hysteresis.rate"), t)
        })
        .collect();
    let source = match cfg.word("hysteresis.splittings") {
        "computed" => SplittingSource::Computed,
        _ => SplittingSource::Phenomenological(ClassGaps {
            co_tunneling: cfg.num("hysteresis.gap_co_tunneling"),
            single_flip: cfg.num("hysteresis.gap_single_flip"),
            nuclear_nonconserving: cfg.num("hysteresis.gap_nonconserving"),
        }),
    };
    let opts = DynamicsOptions { single_flip_broadening: cfg.num("hysteresis.broadening"), ..Default::default() };
    let traces = sweep_many(&ctx.model, &protocols, &source, &opts);
    for (t, tr) in temps.iter().zip(traces) {
        let tr = tr?;
        let tag = format!("{t}K");
        let prov: Vec<(String, String)> =
            ctx.prov().iter().cloned().chain([("temperature_K".to_string(), t.to_string())]).collect();
        report.file(format!("hysteresis_{tag}.csv"), export::trace_csv(&tr, &prov));
        report.file(format!("steps_{tag}.csv"), export::registry_csv(&tr, &prov));
        if ctx.plots {
            report.file(
                format!("hysteresis_{tag}.svg"),
                line_plot(&format!("hysteresis at {t} K"), "H (T)", "M/Ms", &[Curve { x: &tr.field, y: &tr.m_normalized }]),
            );
        }
        let steps = tr.co_tunneling_steps();
        let fields: Vec<String> = steps.values().map(|(f, _)| format!("{:.1}", f * 1e3)).collect();
        let sf = tr.step_registry.iter().filter(|s| s.class == CrossingClass::SingleFlip).count();
        report.line(format!(
            "hysteresis at {t} K: {} co-tunneling steps at (mT) {}; {sf} single-flip events; reversed fraction {:.4}",
            steps.len(),
            fields.join(" "),
            tr.reversed_fraction()
        ));
    }
    Ok(())
}

/// Dipolar-only and exchange numbers for the configured dimer, with the
/// resonance and single-flip fits of the target fields.
fn reproduce(ctx: &Ctx<'_>, report: &mut Report) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let dipolar = DimerModel { j_ex: 0.0, ..ctx.model.clone() };
    let exchange = DimerModel { j_ex: if ctx.model.j_ex != 0.0 { ctx.model.j_ex } else { 0.0097 }, ..ctx.model.clone() };
    let mut kv: Vec<(String, String)> = Vec::new();

    let dzz = dipolar.coupling_tensor()?[2][2];
    report.line(format!("dipolar D_zz (cm^-1): {dzz:+.4}"));
    kv.push(("D_zz_cm".into(), num(dzz)));

    let (g0, g1) = (electronic_gap(&dipolar)?, electronic_gap(&exchange)?);
    report.line(format!("first excited manifold (cm^-1): {g0:.2} dipolar only, {g1:.2} with J_ex = {}", exchange.j_ex));
    kv.push(("gap_dipolar_cm".into(), num(g0)));
    kv.push(("gap_exchange_cm".into(), num(g1)));

    let c = census(ctx, &ctx.model, report)?;
    let fields: Vec<f64> = c.co_fields.values().copied().collect();
    report.line(format!("co-tunneling fields (mT): {}", format_fields_mt(&fields)));
    report.line(format!(
        "crossings: {} in ground manifold, {} co-tunneling, {} resonance fields",
        c.total,
        c.co_classes,
        fields.len()
    ));
    for (s, f) in &c.co_fields {
        kv.push((format!("resonance_field_T[{s}]"), num(*f)));
    }
    kv.push(("crossings_total".into(), c.total.to_string()));
    kv.push(("crossings_co_tunneling".into(), c.co_classes.to_string()));

    let sopts = SingleFlipOptions::default();
    let (sd, se) = (single_flip_fields(&dipolar, &sopts)?, single_flip_fields(&exchange, &sopts)?);
    report.line(format!(
        "single-flip field (mT): {:.1} dipolar only, {:.1} with J_ex = {}",
        sd.positive * 1e3,
        se.positive * 1e3,
        exchange.j_ex
    ));
    kv.push(("single_flip_dipolar_T".into(), num(sd.positive)));
    kv.push(("single_flip_exchange_T".into(), num(se.positive)));

    let opts = thermo_options(cfg)?;
    let curie = chi_t(&ctx.model.clone().decoupled(), &[1e5], cfg.num("thermo.probe_field"), &opts)?;
    let low = chi_t(&ctx.model, &[cfg.num("thermo.T_min"), cfg.num("thermo.T_max")], cfg.num("thermo.probe_field"), &opts)?;
    report.warnings.extend(low.warnings.iter().cloned());
    report.line(format!(
        "chi T (cm^3 K mol^-1): Curie limit {:.2}, {:.2} at {} K, {:.2} at {} K",
        curie.values[0],
        low.values[1],
        low.axis[1],
        low.values[0],
        low.axis[0]
    ));
    kv.push(("chi_t_curie".into(), num(curie.values[0])));
    kv.push((format!("chi_t_{}K", low.axis[0]), num(low.values[0])));
    kv.push((format!("chi_t_{}K", low.axis[1]), num(low.values[1])));

    let (hmax, tm) = (cfg.num("thermo.M_field_max"), cfg.num("thermo.M_temperature"));
    let m = m_vs_h(&ctx.model, &[hmax], tm, &opts)?;
    report.line(format!("powder M at {hmax} T, {tm} K (muB): {:.2}", m.values[0]));
    kv.push(("powder_M_muB".into(), num(m.values[0])));

    let positive: Vec<f64> = cfg.list("fit.co_tunneling_targets").iter().copied().filter(|f| *f > 0.0).collect();
    if !positive.is_empty() {
        let targets = ResonanceTargets::from_unlabelled(&positive, cfg.num("fit.zero_tol"))?;
        let f = resonance_fit_run(ctx, &ctx.model, &targets, &[FitParam::AHf], "A_hf", report)?;
        kv.push(("fit_A_hf_cm".into(), num(f.value(FitParam::AHf).unwrap_or(f64::NAN))));
    }
    if let Some(sf) = cfg.opt("fit.single_flip_target") {
        let targets = ResonanceTargets::new(vec![single_flip_target(sf, 1.0)])?;
        let f = resonance_fit_run(ctx, &dipolar, &targets, &[FitParam::JEx], "J_ex", report)?;
        kv.push(("fit_J_ex_cm".into(), num(f.value(FitParam::JEx).unwrap_or(f64::NAN))));
    }

    let mut s = header(ctx, "reproduced numbers; suffixes give units (cm = cm^-1, T, muB, chi_t in cm^3 K mol^-1)");
    for (k, v) in kv {
        s += &format!("{k} = {v}\n");
    }
    report.file("reproduce.txt", s);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_formatting() {
        let f = [-0.04606, -0.0307, -0.01536, 0.0, 0.01536, 0.0307, 0.04606];
        assert_eq!(format_fields_mt(&f), "0.0 ±15.4 ±30.7 ±46.1");
        assert_eq!(format_fields_mt(&[0.01, 0.02]), "10.0 20.0");
    }
}
