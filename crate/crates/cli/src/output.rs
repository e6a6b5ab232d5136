use serde::Serialize;

use rbl_crlb::bounds::BoundReport;
use rbl_crlb::estimators::{Estimator, EstimatorSummary};
use rbl_crlb::stats::loglog_slope;
use rbl_crlb::validation::SuiteReport;

use crate::Format;

const BOUND_COLUMNS: [&str; 9] =
    ["sweep_value", "crlb_t", "crlb_t_approx", "crlb_Q", "crlb_Q_approx", "ccrb_Q", "cond_Ft", "cond_FQ", "flags"];

pub struct BoundRow {
    pub sweep_value: Option<f64>,
    pub bounds: BoundReport,
    pub estimators: Vec<EstimatorSummary>,
}

pub struct Table {
    format: Format,
    estimators: Vec<Estimator>,
    rows: Vec<BoundRow>,
}

#[derive(Serialize)]
struct JsonOut {
    columns: Vec<String>,
    rows: Vec<serde_json::Map<String, serde_json::Value>>,
    /// Least-squares slope of log(column) against log(sweep_value).
    loglog_slopes: serde_json::Map<String, serde_json::Value>,
}

fn number(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

impl Table {
    pub fn new(format: Format, estimators: Vec<Estimator>) -> Self {
        Self { format, estimators, rows: Vec::new() }
    }

    pub fn push(&mut self, row: BoundRow) {
        self.rows.push(row);
    }

    fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = BOUND_COLUMNS.iter().map(|s| s.to_string()).collect();
        for e in &self.estimators {
            let n = e.name();
            cols.extend([
                format!("mse_t_{n}"),
                format!("se_t_{n}"),
                format!("mse_Q_{n}"),
                format!("se_Q_{n}"),
                format!("fail_rate_{n}"),
            ]);
        }
        cols
    }

    /// Numeric cells of one row, `None` for the flags column.
    fn values(row: &BoundRow) -> Vec<Option<f64>> {
        let b = &row.bounds;
        let mut v = vec![
            row.sweep_value,
            Some(b.crlb_t),
            Some(b.crlb_t_approx),
            Some(b.crlb_q),
            Some(b.crlb_q_approx),
            Some(b.ccrb_q),
            Some(b.cond_ft),
            Some(b.cond_fq),
            None,
        ];
        for s in &row.estimators {
            v.extend([s.mse_t, s.se_t, s.mse_q, s.se_q, s.fail_rate].map(Some));
        }
        v
    }

    pub fn render(&self) -> Result<String, String> {
        match self.format {
            Format::Csv => self.csv(),
            Format::Json => self.json(),
        }
    }

    fn csv(&self) -> Result<String, String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns()).map_err(|e| e.to_string())?;
        for row in &self.rows {
            let cells: Vec<String> = Self::values(row)
                .into_iter()
                .enumerate()
                .map(|(i, v)| match (i, v) {
                    (8, _) => row.bounds.flags.describe(),
                    (_, Some(x)) => number(x),
                    (_, None) => String::new(),
                })
                .collect();
            w.write_record(cells).map_err(|e| e.to_string())?;
        }
        String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
    }

    fn json(&self) -> Result<String, String> {
        use serde_json::{Map, Value};
        let columns = self.columns();
        let to_value = |x: f64| serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (i, (name, v)) in columns.iter().zip(Self::values(row)).enumerate() {
                    let value = match (i, v) {
                        (8, _) => Value::String(row.bounds.flags.describe()),
                        (_, Some(x)) => to_value(x),
                        (_, None) => Value::Null,
                    };
                    m.insert(name.clone(), value);
                }
                m
            })
            .collect();
        let mut slopes = Map::new();
        let x: Vec<f64> = self.rows.iter().filter_map(|r| r.sweep_value).collect();
        if x.len() == self.rows.len() && x.len() >= 2 {
            for (i, name) in columns.iter().enumerate().skip(1) {
                if i == 8 || name.starts_with("se_") || name.starts_with("fail_rate") {
                    continue;
                }
                let y: Vec<f64> = self.rows.iter().map(|r| Self::values(r)[i].unwrap_or(f64::NAN)).collect();
                let slope = loglog_slope(&x, &y).map(to_value).unwrap_or(Value::Null);
                slopes.insert(name.clone(), slope);
            }
        }
        let out = JsonOut { columns, rows, loglog_slopes: slopes };
        serde_json::to_string_pretty(&out).map(|s| s + "\n").map_err(|e| e.to_string())
    }
}

pub fn validation_text(reports: &[SuiteReport], format: Format) -> Result<String, String> {
    match format {
        Format::Csv => {
            let mut out: String = reports.iter().map(|r| r.to_string()).collect();
            let total: usize = reports.iter().map(|r| r.checks.len()).sum();
            let passed: usize = reports.iter().map(|r| r.pass_count()).sum();
            out.push_str(&format!("{passed}/{total} checks passed\n"));
            Ok(out)
        }
        Format::Json => {
            let v: Vec<serde_json::Value> = reports
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "suite": r.suite,
                        "passed": r.pass_count(),
                        "total": r.checks.len(),
                        "checks": r.checks.iter().map(|c| serde_json::json!({
                            "name": c.name, "passed": c.passed, "detail": c.detail
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect();
            serde_json::to_string_pretty(&v).map(|s| s + "\n").map_err(|e| e.to_string())
        }
    }
}
