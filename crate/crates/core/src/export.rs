//! CSV documents with `#` comment headers: a title line, provenance
//! `key = value` lines, and a column/unit line, then comma-separated rows.

use crate::dynamics::HysteresisTrace;
use crate::fitting::FitResult;
use crate::observables::ObservableSeries;
use crate::spectrum::{CrossingEvent, ZeemanDiagram};

/// Fixed-precision float formatting used in every data file.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0"
        return format!("{:.10e}", 0.0);
    }
    format!("{x:.10e}")
}

#[derive(Clone, Debug, Default)]
pub struct CsvDocument {
    title: String,
    provenance: Vec<(String, String)>,
    columns: Vec<(String, String)>,
    rows: Vec<Vec<String>>,
}

impl CsvDocument {
    pub fn new(title: &str) -> Self {
        CsvDocument { title: title.into(), ..Default::default() }
    }

    pub fn provenance(mut self, items: &[(String, String)]) -> Self {
        self.provenance.extend(items.iter().cloned());
        self
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.push((key.into(), value.to_string()));
        self
    }

    /// Adds a column with its unit (`"1"` for dimensionless, `"-"` for text).
    pub fn column(mut self, name: &str, unit: &str) -> Self {
        self.columns.push((name.into(), unit.into()));
        self
    }

    pub fn row(&mut self, values: Vec<String>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values);
    }

    pub fn render(&self) -> String {
        let mut s = format!("# {}\n", self.title);
        for (k, v) in &self.provenance {
            s += &format!("# {k} = {v}\n");
        }
        let units: Vec<String> = self.columns.iter().map(|(n, u)| format!("{n} [{u}]")).collect();
        s += &format!("# columns: {}\n", units.join(", "));
        let names: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        s += &names.join(",");
        s.push('\n');
        for r in &self.rows {
            s += &r.join(",");
            s.push('\n');
        }
        s
    }
}

pub fn series_csv(series: &ObservableSeries, provenance: &[(String, String)]) -> String {
    let mut d = CsvDocument::new(&format!("{} vs {}", series.value_name, series.axis_name)).provenance(provenance);
    for (k, v) in &series.meta {
        d = d.meta(k, v);
    }
    for w in &series.warnings {
        d = d.meta("warning", w);
    }
    let axis = format!("{}_{}", series.axis_name, series.axis_unit);
    let mut d = d.column(&axis, &series.axis_unit).column(&series.value_name, &series.value_unit);
    for (x, y) in series.axis.iter().zip(&series.values) {
        d.row(vec![num(*x), num(*y)]);
    }
    d.render()
}

pub fn zeeman_csv(diagram: &ZeemanDiagram, provenance: &[(String, String)]) -> String {
    let mut d = CsvDocument::new("Zeeman diagram, diabatic tracks")
        .provenance(provenance)
        .meta("direction", format!("{:?}", diagram.direction))
        .column("field_T", "T");
    for k in 0..diagram.n_tracks() {
        d = d.column(&format!("E{k}"), "cm^-1");
    }
    for (h, e) in diagram.field_grid.iter().zip(&diagram.energies) {
        let mut r = vec![num(*h)];
        r.extend(e.iter().map(|v| num(*v)));
        d.row(r);
    }
    d.render()
}

/// Track labels at the first sweep point.
pub fn track_labels_csv(diagram: &ZeemanDiagram, provenance: &[(String, String)]) -> String {
    let mut d = CsvDocument::new("track labels at sweep start")
        .provenance(provenance)
        .column("track", "1")
        .column("jz1", "1")
        .column("jz2", "1")
        .column("iz1", "1")
        .column("iz2", "1")
        .column("purity", "1");
    if let Some(labels) = diagram.labels.first() {
        for (k, l) in labels.iter().enumerate() {
            d.row(vec![k.to_string(), num(l.jz1), num(l.jz2), num(l.iz1), num(l.iz2), num(l.purity)]);
        }
    }
    d.render()
}

pub fn crossings_csv(events: &[CrossingEvent], provenance: &[(String, String)]) -> String {
    let mut d = CsvDocument::new("level crossings")
        .provenance(provenance)
        .column("field_T", "T")
        .column("energy", "cm^-1")
        .column("class", "-")
        .column("sum_iz", "1")
        .column("jz1_a", "1")
        .column("jz2_a", "1")
        .column("iz1_a", "1")
        .column("iz2_a", "1")
        .column("jz1_b", "1")
        .column("jz2_b", "1")
        .column("iz1_b", "1")
        .column("iz2_b", "1")
        .column("min_gap", "cm^-1")
        .column("slope_diff", "cm^-1/T")
        .column("track_pairs", "1");
    for e in events {
        let (a, b) = (&e.labels_a, &e.labels_b);
        d.row(vec![
            num(e.field),
            num(e.energy),
            e.class.as_str().into(),
            e.sum_iz.map(|s| s.to_string()).unwrap_or_default(),
            num(a.jz1),
            num(a.jz2),
            num(a.iz1),
            num(a.iz2),
            num(b.jz1),
            num(b.jz2),
            num(b.iz1),
            num(b.iz2),
            e.min_gap.map(num).unwrap_or_default(),
            num(e.slope_diff),
            e.track_pairs.len().to_string(),
        ]);
    }
    d.render()
}

pub fn trace_csv(trace: &HysteresisTrace, provenance: &[(String, String)]) -> String {
    let mut d = CsvDocument::new("hysteresis trace")
        .provenance(provenance)
        .column("field_T", "T")
        .column("m_norm", "M/Ms");
    for (h, m) in trace.field.iter().zip(&trace.m_normalized) {
        d.row(vec![num(*h), num(*m)]);
    }
    d.render()
}

pub fn registry_csv(trace: &HysteresisTrace, provenance: &[(String, String)]) -> String {
    let mut d = CsvDocument::new("hysteresis step registry")
        .provenance(provenance)
        .column("field_T", "T")
        .column("class", "-")
        .column("sum_iz", "1")
        .column("transfer", "1")
        .column("delta_m", "M/Ms")
        .column("gap", "cm^-1")
        .column("probability", "1");
    for s in &trace.step_registry {
        d.row(vec![
            num(s.field),
            s.class.as_str().into(),
            s.sum_iz.map(|v| v.to_string()).unwrap_or_default(),
            num(s.transfer),
            num(s.delta_m),
            num(s.gap),
            num(s.probability),
        ]);
    }
    d.render()
}

pub fn fit_residuals_csv(fit: &FitResult, provenance: &[(String, String)]) -> String {
    let mut d = CsvDocument::new("resonance fit residuals")
        .provenance(provenance)
        .meta("model", fit.model.fingerprint())
        .column("label", "-")
        .column("target", "T")
        .column("computed", "T")
        .column("deviation", "T")
        .column("weight", "1");
    for r in &fit.residuals {
        d.row(vec![r.label.clone(), num(r.target), r.computed.map(num).unwrap_or_default(), num(r.deviation()), num(r.weight)]);
    }
    d.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_layout() {
        let mut d = CsvDocument::new("demo").meta("config", "abc").column("T_K", "K").column("v", "1");
        d.row(vec![num(2.0), num(-0.0)]);
        let s = d.render();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# demo");
        assert_eq!(lines[1], "# config = abc");
        assert_eq!(lines[2], "# columns: T_K [K], v [1]");
        assert_eq!(lines[3], "T_K,v");
        assert_eq!(lines[4], "2.0000000000e0,0.0000000000e0");
    }
}
