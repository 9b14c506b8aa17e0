use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cotunnel_cli::{Config, BUNDLED_TB2};
use cotunnel_core::hamiltonian::DimerModel;

fn cotunnel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotunnel")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn bundled_config_round_trips_byte_identically() {
    let cfg = Config::parse(BUNDLED_TB2).unwrap();
    assert_eq!(cfg.to_canonical(), BUNDLED_TB2);
    let again = Config::parse(&cfg.to_canonical()).unwrap();
    assert_eq!(again, cfg);
    let m = cfg.model().unwrap();
    assert_eq!(m.ion1.lf.a20, 289.0);
    assert_eq!(m.ion2.lf.a40, -197.0);
    assert_eq!((m.ion1.a_hf, m.ion1.p_quad, m.j_ex), (0.0215, 0.01, 0.0097));
    assert_eq!(m.r_vec[2], 3.523);
    assert_eq!(m, DimerModel::tb2_paper_with_exchange());
}

#[test]
fn empty_model_block_lists_required_keys() {
    let e = Config::parse("[model]\n").unwrap_err();
    for k in ["model.site1.A20", "model.site2.A40", "model.A_hf", "model.P", "model.distance"] {
        assert!(e.message.contains(k), "{e}");
    }
}

#[test]
fn missing_unit_is_rejected_with_location() {
    let text = BUNDLED_TB2.replace("A_hf = 0.0215 [cm^-1]", "A_hf = 0.0215");
    let e = Config::parse(&text).unwrap_err();
    assert_eq!(e.key.as_deref(), Some("model.A_hf"));
    assert!(e.line.is_some());
    assert!(e.message.contains("missing unit"), "{e}");
}

#[test]
fn unknown_keys_sections_and_duplicates_are_rejected() {
    let e = Config::parse(&format!("{BUNDLED_TB2}\n[model]\nA_hff = 1 [cm^-1]\n")).unwrap_err();
    assert!(e.message.contains("unknown key"), "{e}");
    let last = BUNDLED_TB2.lines().count() + 3;
    assert_eq!(e.line, Some(last));
    assert!(Config::parse("[modle]\n").unwrap_err().message.contains("unknown section"));
    let dup = BUNDLED_TB2.replace("P = 0.01 [cm^-1]", "P = 0.01 [cm^-1]\nP = 0.02 [cm^-1]");
    assert!(Config::parse(&dup).unwrap_err().message.contains("twice"));
    assert!(Config::parse("A_hf = 1 [cm^-1]\n").unwrap_err().message.contains("outside"));
}

#[test]
fn units_convert_to_canonical_form() {
    let text = BUNDLED_TB2.replace("distance = 3.523 [A]", "distance = 0.3523 [nm]").replace("rate = 0.14 [T/s]", "rate = 140 [mT/s]");
    let cfg = Config::parse(&text).unwrap();
    assert!((cfg.num("model.distance") - 3.523).abs() < 1e-12);
    assert_eq!(cfg.num("hysteresis.rate"), 0.14);
    assert!(cfg.to_canonical().contains("rate = 0.14 [T/s]"));
    let bad = BUNDLED_TB2.replace("temperatures = 0.03 [K]", "temperatures = -1 [K]");
    assert!(Config::parse(&bad).unwrap_err().message.contains("positive"));
}

#[test]
fn overrides_validate_like_the_file() {
    let mut cfg = Config::parse(BUNDLED_TB2).unwrap();
    cfg.set("model.J_ex=0 [cm^-1]").unwrap();
    assert_eq!(cfg.model().unwrap().j_ex, 0.0);
    assert!(cfg.set("model.J_ex=0").is_err());
    assert!(cfg.set("model.nope=1").is_err());
    assert!(cfg.set("sweep.field_min=1 [T]").is_err());
    assert_eq!(cfg.num("sweep.field_min"), -0.1);
}

#[test]
fn nonexistent_config_exits_2_without_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = cotunnel(&["crossings", "--config", "/nonexistent/run.cfg", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn crossings_prints_resonance_fields_and_writes_headed_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = cotunnel(&["crossings", "--threads", "1", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let line = s.lines().find(|l| l.starts_with("co-tunneling fields (mT): ")).expect("summary line");
    let parts: Vec<&str> = line["co-tunneling fields (mT): ".len()..].split(' ').collect();
    assert_eq!(parts[0], "0.0");
    for (p, want) in parts[1..].iter().zip([15.4, 30.4, 45.7]) {
        let v: f64 = p.strip_prefix('±').unwrap().parse().unwrap();
        assert!((v - want).abs() <= 1.0, "{line}");
    }
    assert!(s.contains("crossings: 100 in ground manifold, 10 co-tunneling, 7 resonance fields"), "{s}");

    let o = cotunnel(&["crossings", "--out", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(files(&a), ["config.cfg", "crossings.csv", "resonances.csv"]);
    for f in files(&a) {
        let x = fs::read_to_string(a.join(&f)).unwrap();
        assert_eq!(x, fs::read_to_string(b.join(&f)).unwrap(), "{f} differs between runs");
        assert!(x.starts_with("# "), "{f}");
        if f.ends_with(".csv") {
            assert!(x.lines().any(|l| l.starts_with("# columns: ") && l.contains('[')), "{f}");
            assert!(x.contains("# config = "));
        }
    }
    assert_eq!(fs::read_to_string(a.join("config.cfg")).unwrap(), BUNDLED_TB2);
}

#[test]
fn decoupled_thermo_reaches_curie_limit() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cotunnel(&[
        "thermo",
        "--set",
        "model.D_zz=0 [cm^-1]",
        "--set",
        "model.J_ex=0 [cm^-1]",
        "--set",
        "thermo.T_max=100000 [K]",
        "--set",
        "thermo.T_points=2",
        "--set",
        "thermo.orientations=20",
        "--set",
        "thermo.M_points=2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let line = s.lines().find(|l| l.starts_with("chi T")).unwrap();
    let v: f64 = line.split(": ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!((v - 23.6).abs() < 0.1, "{line}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: probe field"));
    let csv = fs::read_to_string(tmp.path().join("chi_t.csv")).unwrap();
    assert!(csv.contains("# columns: T_K [K], chi_T [cm^3 K mol^-1]"));
}

fn write_debye_data(dir: &Path, tau: f64) -> String {
    let mut s = String::from("# nu_Hz, chi1, chi2\nnu,chi1,chi2\n");
    for k in 0..25 {
        let nu = 10f64.powf(-1.0 + 5.0 * k as f64 / 24.0);
        let w = 2.0 * std::f64::consts::PI * nu * tau;
        let (c1, c2) = (0.1 + 2.0 / (1.0 + w * w), 2.0 * w / (1.0 + w * w));
        s += &format!("{nu},{c1},{c2}\n");
    }
    let p = dir.join(format!("debye_{tau}.csv"));
    fs::write(&p, s).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn debye_fit_converges_or_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_debye_data(tmp.path(), 1e-2);
    let out = tmp.path().join("good");
    let o = cotunnel(&["fit", "--set", "fit.kind=debye", "--set", &format!("fit.data={good}"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("Debye fit: tau = 1.0000e-2 s"), "{}", stdout(&o));

    // relaxation far below the frequency window: no chi'' maximum inside it
    let edge = write_debye_data(tmp.path(), 1e3);
    let out = tmp.path().join("edge");
    let o = cotunnel(&["fit", "--set", "fit.kind=debye", "--set", &format!("fit.data={edge}"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(out.join("fit_debye.txt").exists());
}

#[test]
fn arrhenius_fit_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("tau.csv");
    let mut s = String::from("T_K,tau_s\n");
    for t in [4.0, 5.0, 6.0, 7.0, 8.0] {
        s += &format!("{t},{}\n", 1e-9 * (50.0 / t as f64).exp());
    }
    fs::write(&p, s).unwrap();
    let o = cotunnel(&[
        "fit",
        "--set",
        "fit.kind=arrhenius",
        "--set",
        &format!("fit.data={}", p.display()),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Ueff = 50.00 K"), "{}", stdout(&o));
    let missing = cotunnel(&["fit", "--set", "fit.kind=arrhenius", "--out", tmp.path().join("m").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn hysteresis_summary_and_polarization_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h");
    let o = cotunnel(&["hysteresis", "--set", "output.plots=true", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("hysteresis at 0.03 K: 7 co-tunneling steps"), "{}", stdout(&o));
    assert_eq!(files(&out), ["config.cfg", "hysteresis_0.03K.csv", "hysteresis_0.03K.svg", "steps_0.03K.csv"]);
    assert!(fs::read_to_string(out.join("steps_0.03K.csv")).unwrap().contains("field_T,class,sum_iz,transfer"));

    let bad = tmp.path().join("bad");
    let o = cotunnel(&["hysteresis", "--set", "hysteresis.start=-0.002 [T]", "--out", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!bad.exists());
}

#[test]
fn spectrum_and_sweep_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cotunnel(&["spectrum", "--set", "model.J_ex=0 [cm^-1]", "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("first excited electronic level (cm^-1): 3.2"), "{}", stdout(&o));
    let o = cotunnel(&["sweep", "--set", "sweep.points=21", "--out", tmp.path().join("w").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let z = fs::read_to_string(tmp.path().join("w/zeeman.csv")).unwrap();
    assert_eq!(z.lines().filter(|l| !l.starts_with('#')).count(), 22);
}
