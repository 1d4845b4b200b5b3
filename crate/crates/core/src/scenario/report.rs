//! Flat, deterministic report rows rendered as text or CSV.

use std::fmt::Write as _;

use crate::detection::DetectionReport;
use crate::estimator::EstimationResult;
use crate::grid::NetworkModel;
use crate::market::DispatchResult;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            // fixed precision, and never "-0.000000"
            Value::Num(v) => {
                let s = format!("{v:.6}");
                if s.trim_start_matches('-')
                    .chars()
                    .all(|c| c == '0' || c == '.')
                {
                    s.trim_start_matches('-').to_string()
                } else {
                    s
                }
            }
            Value::Int(v) => v.to_string(),
            Value::Bool(v) => v.to_string(),
            Value::Text(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub stage: String,
    pub quantity: String,
    /// Meter number, bus id, generator or branch number; empty for scalars.
    pub index: Option<i64>,
    pub value: Value,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub rows: Vec<Row>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, stage: &str, quantity: &str, index: Option<i64>, value: Value) {
        self.rows.push(Row {
            stage: stage.to_string(),
            quantity: quantity.to_string(),
            index,
            value,
        });
    }

    pub fn num(&mut self, stage: &str, quantity: &str, value: f64) {
        self.push(stage, quantity, None, Value::Num(value));
    }

    pub fn series<I>(&mut self, stage: &str, quantity: &str, values: I)
    where
        I: IntoIterator<Item = (i64, f64)>,
    {
        for (i, v) in values {
            self.push(stage, quantity, Some(i), Value::Num(v));
        }
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
    }

    /// Look up a row value, mostly for tests.
    pub fn get(&self, stage: &str, quantity: &str, index: Option<i64>) -> Option<&Value> {
        self.rows
            .iter()
            .find(|r| r.stage == stage && r.quantity == quantity && r.index == index)
            .map(|r| &r.value)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {}", self.title).unwrap();
        let mut stage = "";
        for row in &self.rows {
            if row.stage != stage {
                stage = &row.stage;
                writeln!(out, "[{stage}]").unwrap();
            }
            match row.index {
                Some(i) => writeln!(out, "{}[{}] = {}", row.quantity, i, row.value.render()),
                None => writeln!(out, "{} = {}", row.quantity, row.value.render()),
            }
            .unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["stage", "quantity", "index", "value"])
            .unwrap();
        for row in &self.rows {
            let index = row.index.map(|i| i.to_string()).unwrap_or_default();
            w.write_record([
                row.stage.as_str(),
                &row.quantity,
                &index,
                &row.value.render(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
    }
}

fn meter_no(i: usize) -> i64 {
    i as i64 + 1
}

pub fn estimation_rows(
    report: &mut Report,
    stage: &str,
    net: &NetworkModel,
    est: &EstimationResult,
) {
    let state_bus = |i: usize| i64::from(net.state_bus(i).expect("state index").0);
    report.series(
        stage,
        "theta_rad",
        est.state
            .0
            .iter()
            .enumerate()
            .map(|(i, &v)| (state_bus(i), v)),
    );
    report.series(
        stage,
        "fitted_pu",
        est.fitted
            .iter()
            .enumerate()
            .map(|(i, &v)| (meter_no(i), v)),
    );
    report.series(
        stage,
        "residual_pu",
        est.residual
            .iter()
            .enumerate()
            .map(|(i, &v)| (meter_no(i), v)),
    );
    report.num(stage, "objective", est.objective);
}

pub fn detection_rows(report: &mut Report, stage: &str, det: &DetectionReport) {
    let q = |name: &str| format!("{}.{name}", det.method);
    report.num(stage, &q("statistic"), det.statistic);
    report.num(stage, &q("threshold"), det.threshold);
    report.num(stage, &q("confidence"), det.confidence);
    report.push(
        stage,
        &q("detected"),
        None,
        Value::Bool(det.bad_data_detected),
    );
    if let Some(s) = det.suspect_meter {
        report.push(stage, &q("suspect_meter"), None, Value::Int(meter_no(s)));
    }
    for &e in &det.excluded_meters {
        report.push(
            stage,
            &q("excluded_meter"),
            Some(meter_no(e)),
            Value::Bool(true),
        );
    }
}

pub fn dispatch_rows(report: &mut Report, stage: &str, net: &NetworkModel, res: &DispatchResult) {
    report.series(
        stage,
        "gen_mw",
        res.gen_output
            .iter()
            .enumerate()
            .map(|(g, &v)| (g as i64 + 1, v)),
    );
    report.series(
        stage,
        "flow_mw",
        res.flows
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as i64 + 1, v)),
    );
    report.series(
        stage,
        "lmp",
        net.buses()
            .iter()
            .zip(&res.lmp)
            .map(|(b, &v)| (i64::from(b.0), v)),
    );
    report.num(stage, "objective", res.objective);
    for &k in &res.binding_lines {
        report.push(
            stage,
            "binding_line",
            Some(k as i64 + 1),
            Value::Num(res.congestion_price[k]),
        );
    }
}
