//! Run configuration: UTF-8 `key = value [unit]` lines grouped under
//! `[section]` headers. `#` starts a comment line.
//!
//! Every key is declared in [`SCHEMA`]. Dimensional values must carry a unit
//! and are stored in the canonical unit of their dimension; the canonical
//! serialization lists every key in schema order.

use std::collections::BTreeMap;
use std::fmt;

use cotunnel_core::hamiltonian::{ising_g, isotropic_g, DimerModel, IonModel, LigandFieldParams};
use cotunnel_core::spinops::HalfInteger;
use cotunnel_core::units::K_B;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key {k}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key {k}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

fn err(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, key: key.map(str::to_string), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Energy,
    Field,
    Temperature,
    Length,
    Rate,
    Angle,
}

impl Dim {
    pub fn canonical(self) -> &'static str {
        match self {
            Dim::Energy => "cm^-1",
            Dim::Field => "T",
            Dim::Temperature => "K",
            Dim::Length => "A",
            Dim::Rate => "T/s",
            Dim::Angle => "deg",
        }
    }

    /// Factor `(mul, div)` taking a value in `unit` to the canonical unit.
    fn conversion(self, unit: &str) -> Option<(f64, f64)> {
        let c = match (self, unit) {
            (Dim::Energy, "cm^-1") => (1.0, 1.0),
            (Dim::Energy, "K") => (K_B, 1.0),
            (Dim::Energy, "meV") => (8.065_543_937, 1.0),
            (Dim::Field, "T") => (1.0, 1.0),
            (Dim::Field, "mT") => (1.0, 1e3),
            (Dim::Temperature, "K") => (1.0, 1.0),
            (Dim::Temperature, "mK") => (1.0, 1e3),
            (Dim::Length, "A") => (1.0, 1.0),
            (Dim::Length, "nm") => (10.0, 1.0),
            (Dim::Rate, "T/s") => (1.0, 1.0),
            (Dim::Rate, "mT/s") => (1.0, 1e3),
            (Dim::Angle, "deg") => (1.0, 1.0),
            (Dim::Angle, "rad") => (180.0 / std::f64::consts::PI, 1.0),
            _ => return None,
        };
        Some(c)
    }

    fn units(self) -> &'static str {
        match self {
            Dim::Energy => "cm^-1, K, meV",
            Dim::Field => "T, mT",
            Dim::Temperature => "K, mK",
            Dim::Length => "A, nm",
            Dim::Rate => "T/s, mT/s",
            Dim::Angle => "deg, rad",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Any,
    Positive,
    NonNegative,
    AtLeast(f64),
}

impl Bound {
    fn check(self, x: f64) -> Result<(), String> {
        if !x.is_finite() {
            return Err("value must be finite".into());
        }
        match self {
            Bound::Any => Ok(()),
            Bound::Positive if x > 0.0 => Ok(()),
            Bound::Positive => Err(format!("value must be positive, got {x}")),
            Bound::NonNegative if x >= 0.0 => Ok(()),
            Bound::NonNegative => Err(format!("value must be non-negative, got {x}")),
            Bound::AtLeast(m) if x >= m => Ok(()),
            Bound::AtLeast(m) => Err(format!("value must be at least {m}, got {x}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    Quantity(Dim, Bound),
    /// Comma-separated values sharing one trailing unit; `none` when empty.
    QuantityList(Dim, Bound),
    /// A quantity or `none`.
    OptQuantity(Dim, Bound),
    Number(Bound),
    Integer(i64),
    Bool,
    Spin,
    Choice(&'static [&'static str]),
    Choices(&'static [&'static str]),
    Text,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    List(Vec<f64>),
    Opt(Option<f64>),
    Int(i64),
    Bool(bool),
    Spin(HalfInteger),
    Word(String),
    Words(Vec<String>),
    Text(String),
}

pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    pub kind: Kind,
    /// Canonical text of the default; `None` marks a required key.
    pub default: Option<&'static str>,
}

const fn k(section: &'static str, key: &'static str, kind: Kind, default: Option<&'static str>) -> KeySpec {
    KeySpec { section, key, kind, default }
}

use Bound::*;
use Dim::*;
use Kind::*;

const FIT_PARAMS: &[&str] = &["A_hf", "P", "D_zz", "J_ex"];

pub const SECTIONS: [&str; 8] = ["model", "spectrum", "sweep", "crossings", "thermo", "fit", "hysteresis", "output"];

pub const SCHEMA: &[KeySpec] = &[
    k("model", "site1.A20", Quantity(Energy, Any), None),
    k("model", "site1.A40", Quantity(Energy, Any), None),
    k("model", "site1.A60", Quantity(Energy, Any), Some("0 [cm^-1]")),
    k("model", "site1.A44", Quantity(Energy, Any), Some("0 [cm^-1]")),
    k("model", "site1.A64", Quantity(Energy, Any), Some("0 [cm^-1]")),
    k("model", "site2.A20", Quantity(Energy, Any), None),
    k("model", "site2.A40", Quantity(Energy, Any), None),
    k("model", "site2.A60", Quantity(Energy, Any), Some("0 [cm^-1]")),
    k("model", "site2.A44", Quantity(Energy, Any), Some("0 [cm^-1]")),
    k("model", "site2.A64", Quantity(Energy, Any), Some("0 [cm^-1]")),
    k("model", "J", Spin, Some("6")),
    k("model", "I", Spin, Some("3/2")),
    k("model", "gJ", Number(Positive), Some("1.5")),
    k("model", "stevens_alpha", Number(Any), Some("-0.010101010101010102")),
    k("model", "stevens_beta", Number(Any), Some("0.0001224364860728497")),
    k("model", "stevens_gamma", Number(Any), Some("-0.0000011212132424253636")),
    k("model", "A_hf", Quantity(Energy, Any), None),
    k("model", "P", Quantity(Energy, Any), None),
    k("model", "distance", Quantity(Length, Positive), None),
    k("model", "g_model", Choice(&["ising", "isotropic"]), Some("ising")),
    k("model", "g_dipolar", Number(NonNegative), Some("1.5")),
    k("model", "J_ex", Quantity(Energy, Any), Some("0 [cm^-1]")),
    k("model", "D_zz", OptQuantity(Energy, Any), Some("none")),
    k("model", "nuclear_spins", Bool, Some("true")),
    k("spectrum", "fields", QuantityList(Field, Any), Some("0 [T]")),
    k("spectrum", "levels", Integer(1), Some("32")),
    k("spectrum", "mode", Choice(&["effective", "full"]), Some("effective")),
    k("spectrum", "field_angle", Quantity(Angle, Any), Some("0 [deg]")),
    k("sweep", "field_min", Quantity(Field, Any), Some("-0.1 [T]")),
    k("sweep", "field_max", Quantity(Field, Any), Some("0.1 [T]")),
    k("sweep", "points", Integer(2), Some("401")),
    k("sweep", "tracks", Integer(1), Some("64")),
    k("sweep", "mode", Choice(&["effective", "full"]), Some("effective")),
    k("sweep", "field_angle", Quantity(Angle, Any), Some("0 [deg]")),
    k("crossings", "half_width", OptQuantity(Field, Positive), Some("none")),
    k("crossings", "points", Integer(3), Some("201")),
    k("crossings", "mode", Choice(&["effective", "full"]), Some("effective")),
    k("crossings", "single_flip_min", Quantity(Field, NonNegative), Some("0.1 [T]")),
    k("crossings", "single_flip_max", Quantity(Field, Positive), Some("1.5 [T]")),
    k("crossings", "single_flip_points", Integer(3), Some("601")),
    k("crossings", "compute_gaps", Bool, Some("false")),
    k("thermo", "T_min", Quantity(Temperature, Positive), Some("2 [K]")),
    k("thermo", "T_max", Quantity(Temperature, Positive), Some("300 [K]")),
    k("thermo", "T_points", Integer(2), Some("60")),
    k("thermo", "probe_field", Quantity(Field, Positive), Some("0.1 [T]")),
    k("thermo", "M_temperature", Quantity(Temperature, Positive), Some("2 [K]")),
    k("thermo", "M_field_max", Quantity(Field, Positive), Some("7 [T]")),
    k("thermo", "M_points", Integer(2), Some("15")),
    k("thermo", "orientations", Integer(1), Some("200")),
    k("thermo", "space", Choice(&["electronic", "full"]), Some("electronic")),
    k("fit", "kind", Choice(&["resonance", "debye", "arrhenius"]), Some("resonance")),
    k("fit", "free", Choices(FIT_PARAMS), Some("A_hf")),
    k("fit", "co_tunneling_targets", QuantityList(Field, Any), Some("none")),
    k("fit", "single_flip_target", OptQuantity(Field, Positive), Some("none")),
    k("fit", "single_flip_weight", Number(Positive), Some("1")),
    k("fit", "zero_tol", Quantity(Field, NonNegative), Some("0.001 [T]")),
    k("fit", "data", Text, Some("none")),
    k("hysteresis", "start", Quantity(Field, Any), Some("-1 [T]")),
    k("hysteresis", "end", Quantity(Field, Any), Some("1 [T]")),
    k("hysteresis", "rate", Quantity(Rate, Positive), Some("0.14 [T/s]")),
    k("hysteresis", "temperatures", QuantityList(Temperature, Positive), Some("0.03 [K]")),
    k("hysteresis", "init_wait", Bool, Some("true")),
    k("hysteresis", "points", Integer(2), Some("2001")),
    k("hysteresis", "splittings", Choice(&["phenomenological", "computed"]), Some("phenomenological")),
    k("hysteresis", "gap_co_tunneling", Quantity(Energy, NonNegative), Some("0.000001 [cm^-1]")),
    k("hysteresis", "gap_single_flip", Quantity(Energy, NonNegative), Some("0.00001 [cm^-1]")),
    k("hysteresis", "gap_nonconserving", Quantity(Energy, NonNegative), Some("0 [cm^-1]")),
    k("hysteresis", "broadening", Quantity(Field, NonNegative), Some("0 [T]")),
    k("output", "directory", Text, Some("out")),
    k("output", "plots", Bool, Some("false")),
];

fn spec(section: &str, key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.section == section && s.key == key)
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("cannot parse {:?} as a number", s.trim()))
}

/// Splits a trailing `[unit]` off a raw value.
fn split_unit(raw: &str) -> Result<(&str, Option<&str>), String> {
    let raw = raw.trim();
    if let Some(stripped) = raw.strip_suffix(']') {
        let open = stripped.rfind('[').ok_or("unbalanced unit bracket")?;
        Ok((stripped[..open].trim(), Some(stripped[open + 1..].trim())))
    } else if raw.contains('[') {
        Err("unit bracket must close the value".into())
    } else {
        Ok((raw, None))
    }
}

fn convert(dim: Dim, unit: Option<&str>) -> Result<(f64, f64), String> {
    let unit = unit.ok_or_else(|| format!("missing unit; expected one of [{}]", dim.units()))?;
    dim.conversion(unit).ok_or_else(|| format!("unit [{unit}] not accepted; expected one of [{}]", dim.units()))
}

fn parse_value(kind: Kind, raw: &str) -> Result<Value, String> {
    let (body, unit) = split_unit(raw)?;
    let unitless = |v: Value| match unit {
        None => Ok(v),
        Some(u) => Err(format!("dimensionless value takes no unit, got [{u}]")),
    };
    match kind {
        Quantity(dim, bound) => {
            let (m, d) = convert(dim, unit)?;
            let x = parse_number(body)? * m / d;
            bound.check(x)?;
            Ok(Value::Num(x))
        }
        QuantityList(dim, bound) => {
            if body == "none" {
                return Ok(Value::List(Vec::new()));
            }
            let (m, d) = convert(dim, unit)?;
            let mut v = Vec::new();
            for item in body.split(',') {
                let x = parse_number(item)? * m / d;
                bound.check(x)?;
                v.push(x);
            }
            Ok(Value::List(v))
        }
        OptQuantity(dim, bound) => {
            if body == "none" {
                return Ok(Value::Opt(None));
            }
            let (m, d) = convert(dim, unit)?;
            let x = parse_number(body)? * m / d;
            bound.check(x)?;
            Ok(Value::Opt(Some(x)))
        }
        Number(bound) => {
            let x = parse_number(body)?;
            bound.check(x)?;
            unitless(Value::Num(x))
        }
        Integer(min) => {
            let n: i64 = body.parse().map_err(|_| format!("cannot parse {body:?} as an integer"))?;
            if n < min {
                return Err(format!("value must be at least {min}, got {n}"));
            }
            unitless(Value::Int(n))
        }
        Bool => match body {
            "true" => unitless(Value::Bool(true)),
            "false" => unitless(Value::Bool(false)),
            _ => Err(format!("expected true or false, got {body:?}")),
        },
        Spin => {
            let s: HalfInteger = body.parse().map_err(|e: cotunnel_core::Error| e.to_string())?;
            if s.twice() < 0 {
                return Err("spin must be non-negative".into());
            }
            unitless(Value::Spin(s))
        }
        Choice(options) => {
            if options.contains(&body) {
                unitless(Value::Word(body.into()))
            } else {
                Err(format!("expected one of {}, got {body:?}", options.join(", ")))
            }
        }
        Choices(options) => {
            let mut v: Vec<String> = Vec::new();
            for item in body.split(',').map(str::trim) {
                if !options.contains(&item) {
                    return Err(format!("expected entries from {}, got {item:?}", options.join(", ")));
                }
                if v.iter().any(|x| x == item) {
                    return Err(format!("{item} listed twice"));
                }
                v.push(item.into());
            }
            unitless(Value::Words(v))
        }
        Text => {
            if body.is_empty() {
                return Err("empty value".into());
            }
            Ok(Value::Text(raw.trim().into()))
        }
    }
}

fn render_value(kind: Kind, v: &Value) -> String {
    match (kind, v) {
        (Quantity(d, _), Value::Num(x)) => format!("{} [{}]", fmt_num(*x), d.canonical()),
        (QuantityList(_, _), Value::List(l)) if l.is_empty() => "none".into(),
        (QuantityList(d, _), Value::List(l)) => {
            let items: Vec<String> = l.iter().map(|x| fmt_num(*x)).collect();
            format!("{} [{}]", items.join(", "), d.canonical())
        }
        (OptQuantity(_, _), Value::Opt(None)) => "none".into(),
        (OptQuantity(d, _), Value::Opt(Some(x))) => format!("{} [{}]", fmt_num(*x), d.canonical()),
        (Number(_), Value::Num(x)) => fmt_num(*x),
        (_, Value::Int(n)) => n.to_string(),
        (_, Value::Bool(b)) => b.to_string(),
        (_, Value::Spin(s)) => s.to_string(),
        (_, Value::Word(w)) => w.clone(),
        (_, Value::Words(w)) => w.join(", "),
        (_, Value::Text(t)) => t.clone(),
        _ => unreachable!("value does not match its schema kind"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<(&'static str, &'static str), Value>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut given: BTreeMap<(&'static str, &'static str), (usize, String)> = BTreeMap::new();
        let mut section: Option<&'static str> = None;
        for (n, line) in text.lines().enumerate() {
            let n = n + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|s| **s == name)
                        .copied()
                        .ok_or_else(|| err(Some(n), None, format!("unknown section [{name}]")))?,
                );
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| err(Some(n), None, "expected `key = value` or `[section]`"))?;
            let key = key.trim();
            let sec = section.ok_or_else(|| err(Some(n), Some(key), "key outside any section"))?;
            let full = format!("{sec}.{key}");
            let s = spec(sec, key).ok_or_else(|| err(Some(n), Some(&full), "unknown key"))?;
            if given.insert((s.section, s.key), (n, raw.trim().to_string())).is_some() {
                return Err(err(Some(n), Some(&full), "key given twice"));
            }
        }
        Self::build(given)
    }

    fn build(given: BTreeMap<(&'static str, &'static str), (usize, String)>) -> Result<Config, ConfigError> {
        let missing: Vec<String> = SCHEMA
            .iter()
            .filter(|s| s.default.is_none() && !given.contains_key(&(s.section, s.key)))
            .map(|s| format!("{}.{}", s.section, s.key))
            .collect();
        if !missing.is_empty() {
            return Err(err(None, None, format!("missing required keys: {}", missing.join(", "))));
        }
        let mut values = BTreeMap::new();
        for s in SCHEMA {
            let full = format!("{}.{}", s.section, s.key);
            let v = match given.get(&(s.section, s.key)) {
                Some((n, raw)) => parse_value(s.kind, raw).map_err(|m| err(Some(*n), Some(&full), m))?,
                None => parse_value(s.kind, s.default.expect("default present")).expect("schema defaults parse"),
            };
            values.insert((s.section, s.key), v);
        }
        let cfg = Config { values };
        cfg.cross_check()?;
        Ok(cfg)
    }

    fn cross_check(&self) -> Result<(), ConfigError> {
        let pair = |lo: &str, hi: &str| -> Result<(), ConfigError> {
            if self.num(lo) >= self.num(hi) {
                return Err(err(None, Some(hi), format!("must exceed {lo}")));
            }
            Ok(())
        };
        pair("sweep.field_min", "sweep.field_max")?;
        pair("thermo.T_min", "thermo.T_max")?;
        pair("crossings.single_flip_min", "crossings.single_flip_max")?;
        if self.num("hysteresis.start") == self.num("hysteresis.end") {
            return Err(err(None, Some("hysteresis.end"), "sweep must span a nonzero field range"));
        }
        if self.list("spectrum.fields").is_empty() {
            return Err(err(None, Some("spectrum.fields"), "at least one field is required"));
        }
        if self.list("hysteresis.temperatures").is_empty() {
            return Err(err(None, Some("hysteresis.temperatures"), "at least one temperature is required"));
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| err(None, None, format!("override {assignment:?} must be section.key=value")))?;
        let path = path.trim();
        let (sec, key) = path
            .split_once('.')
            .ok_or_else(|| err(None, Some(path), "override key must be section.key"))?;
        let s = spec(sec, key).ok_or_else(|| err(None, Some(path), "unknown key"))?;
        let v = parse_value(s.kind, raw).map_err(|m| err(None, Some(path), m))?;
        let old = self.values.insert((s.section, s.key), v);
        if let Err(e) = self.cross_check() {
            self.values.insert((s.section, s.key), old.expect("schema key present"));
            return Err(e);
        }
        Ok(())
    }

    pub fn to_canonical(&self) -> String {
        let mut s = String::from("# cotunnel run configuration; quantities carry units in brackets\n");
        for sec in SECTIONS {
            s += &format!("\n[{sec}]\n");
            for spec in SCHEMA.iter().filter(|k| k.section == sec) {
                s += &format!("{} = {}\n", spec.key, render_value(spec.kind, &self.values[&(spec.section, spec.key)]));
            }
        }
        s
    }

    /// Hex SHA-256 prefix of the canonical serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_canonical().as_bytes()))[..16].to_string()
    }

    fn get(&self, path: &str) -> &Value {
        let (sec, key) = path.split_once('.').expect("section.key path");
        let s = spec(sec, key).unwrap_or_else(|| panic!("unknown config key {path}"));
        &self.values[&(s.section, s.key)]
    }

    pub fn num(&self, path: &str) -> f64 {
        match self.get(path) {
            Value::Num(x) => *x,
            v => panic!("{path} is not a number: {v:?}"),
        }
    }

    pub fn list(&self, path: &str) -> &[f64] {
        match self.get(path) {
            Value::List(l) => l,
            v => panic!("{path} is not a list: {v:?}"),
        }
    }

    pub fn opt(&self, path: &str) -> Option<f64> {
        match self.get(path) {
            Value::Opt(x) => *x,
            v => panic!("{path} is not optional: {v:?}"),
        }
    }

    pub fn int(&self, path: &str) -> usize {
        match self.get(path) {
            Value::Int(n) => *n as usize,
            v => panic!("{path} is not an integer: {v:?}"),
        }
    }

    pub fn flag(&self, path: &str) -> bool {
        match self.get(path) {
            Value::Bool(b) => *b,
            v => panic!("{path} is not a flag: {v:?}"),
        }
    }

    pub fn word(&self, path: &str) -> &str {
        match self.get(path) {
            Value::Word(w) | Value::Text(w) => w,
            v => panic!("{path} is not a word: {v:?}"),
        }
    }

    pub fn words(&self, path: &str) -> &[String] {
        match self.get(path) {
            Value::Words(w) => w,
            v => panic!("{path} is not a word list: {v:?}"),
        }
    }

    fn spin(&self, path: &str) -> HalfInteger {
        match self.get(path) {
            Value::Spin(s) => *s,
            v => panic!("{path} is not a spin: {v:?}"),
        }
    }

    pub fn model(&self) -> cotunnel_core::Result<DimerModel> {
        let ion = |site: &str| {
            let lf = LigandFieldParams {
                a20: self.num(&format!("model.{site}.A20")),
                a40: self.num(&format!("model.{site}.A40")),
                a60: self.num(&format!("model.{site}.A60")),
                a44: self.num(&format!("model.{site}.A44")),
                a64: self.num(&format!("model.{site}.A64")),
                stevens_alpha: self.num("model.stevens_alpha"),
                stevens_beta: self.num("model.stevens_beta"),
                stevens_gamma: self.num("model.stevens_gamma"),
            };
            IonModel {
                j: self.spin("model.J"),
                i: self.spin("model.I"),
                g_j: self.num("model.gJ"),
                lf,
                a_hf: self.num("model.A_hf"),
                p_quad: self.num("model.P"),
            }
        };
        let g = self.num("model.g_dipolar");
        let gt = if self.word("model.g_model") == "ising" { ising_g(g) } else { isotropic_g(g) };
        let mut model = DimerModel {
            ion1: ion("site1"),
            ion2: ion("site2"),
            r_vec: [0.0, 0.0, self.num("model.distance")],
            g_tensor1: gt,
            g_tensor2: gt,
            j_ex: self.num("model.J_ex"),
            coupling_override: None,
        };
        if !self.flag("model.nuclear_spins") {
            model = model.without_nuclear_spins();
        }
        if let Some(d) = self.opt("model.D_zz") {
            model = model.with_dzz(d)?;
        }
        model.validate()?;
        Ok(model)
    }
}
