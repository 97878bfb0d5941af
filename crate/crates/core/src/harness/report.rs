//! Experiment report types, aggregation, CSV output and least-squares fits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::eval::MetricReport;
use crate::io::fmt_num;

pub const REPORT_SCHEMA: &str = "ec3.experiment/1";
pub const TIMING_SCHEMA: &str = "ec3.timings/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// Experiment-specific setting, such as `x=30` or `drop=2`.
    pub setting: String,
    pub method: String,
    pub repeat: usize,
    pub seed: u64,
    pub metrics: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> MeanSd {
        let n = values.len();
        if n == 0 {
            return MeanSd { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub setting: String,
    pub method: String,
    pub runs: usize,
    pub auc: MeanSd,
    pub f_score: MeanSd,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, MeanSd>,
}

/// Groups rows by (setting, method) in order of first appearance.
pub fn aggregate(rows: &[RunRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.setting.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(setting, method)| {
            let sel: Vec<&RunRow> = rows
                .iter()
                .filter(|r| r.setting == setting && r.method == method)
                .collect();
            let col = |f: &dyn Fn(&RunRow) -> Option<f64>| -> Vec<f64> { sel.iter().filter_map(|r| f(r)).collect() };
            let names: BTreeSet<&String> = sel.iter().flat_map(|r| r.extra.keys()).collect();
            let extra = names
                .into_iter()
                .map(|k| (k.clone(), MeanSd::of(&col(&|r| r.extra.get(k).copied()))))
                .collect();
            Aggregate {
                runs: sel.len(),
                auc: MeanSd::of(&col(&|r| Some(r.metrics.auc))),
                f_score: MeanSd::of(&col(&|r| Some(r.metrics.f_score))),
                extra,
                setting,
                method,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub kind: String,
    pub config: serde_json::Value,
    pub runs: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl ExperimentReport {
    pub fn new(kind: &str, config: serde_json::Value, runs: Vec<RunRow>, summary: serde_json::Value) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            kind: kind.into(),
            config,
            aggregates: aggregate(&runs),
            runs,
            summary,
        }
    }

    pub fn aggregate_for(&self, setting: &str, method: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.setting == setting && a.method == method)
    }

    /// One line per run: fixed columns, then every extra key in sorted order.
    pub fn runs_csv(&self) -> String {
        let extras: BTreeSet<&String> = self.runs.iter().flat_map(|r| r.extra.keys()).collect();
        let mut out = String::from("setting,method,repeat,seed,auc,f_score,iterations");
        for k in &extras {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                csv_field(&r.setting),
                csv_field(&r.method),
                r.repeat,
                r.seed,
                fmt_num(r.metrics.auc),
                fmt_num(r.metrics.f_score),
                r.iterations.map(|i| i.to_string()).unwrap_or_default()
            ));
            for k in &extras {
                out.push(',');
                if let Some(v) = r.extra.get(*k) {
                    out.push_str(&fmt_num(*v));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Aggregates as an aligned text table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:<18} {:>4} {:>16} {:>16}\n",
            "setting", "method", "runs", "auc", "f_score"
        );
        for a in &self.aggregates {
            out.push_str(&format!(
                "{:<28} {:<18} {:>4} {:>7.4} ± {:<6.4} {:>7.4} ± {:<6.4}\n",
                a.setting, a.method, a.runs, a.auc.mean, a.auc.sd, a.f_score.mean, a.f_score.sd
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub setting: String,
    pub method: String,
    pub repeat: usize,
    pub seconds: f64,
}

/// Wall-clock measurements, kept apart from [`ExperimentReport`] so that
/// report stays reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub schema: String,
    pub kind: String,
    pub rows: Vec<TimingRow>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl TimingReport {
    pub fn new(kind: &str, rows: Vec<TimingRow>, summary: serde_json::Value) -> Self {
        Self {
            schema: TIMING_SCHEMA.into(),
            kind: kind.into(),
            rows,
            summary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub timings: TimingReport,
}

/// Least-squares polynomial fit, coefficients from the constant term up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

/// Fits a polynomial of the given degree (at most 3) by solving the normal
/// equations on centered, scaled abscissae.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Option<PolyFit> {
    let n = x.len();
    let m = degree + 1;
    if n != y.len() || n < m || degree > 3 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let sx = x.iter().map(|v| (v - mx).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let t: Vec<f64> = x.iter().map(|v| (v - mx) / sx).collect();

    // Normal equations for y = sum_k c_k t^k.
    let mut a = vec![vec![0.0; m + 1]; m];
    for (ti, yi) in t.iter().zip(y) {
        let pw: Vec<f64> = (0..m).map(|k| ti.powi(k as i32)).collect();
        for r in 0..m {
            for c in 0..m {
                a[r][c] += pw[r] * pw[c];
            }
            a[r][m] += pw[r] * yi;
        }
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let ct: Vec<f64> = (0..m).map(|k| a[k][m] / a[k][k]).collect();

    // Back to powers of x: t = (x - mx) / sx.
    let mut coefficients = vec![0.0; m];
    for (k, &ck) in ct.iter().enumerate() {
        // ck * ((x - mx) / sx)^k, expanded binomially.
        for j in 0..=k {
            let binom = (1..=j).fold(1.0, |acc, i| acc * (k + 1 - i) as f64 / i as f64);
            coefficients[j] += ck * binom * (-mx).powi((k - j) as i32) / sx.powi(k as i32);
        }
    }

    let my = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = t
        .iter()
        .zip(y)
        .map(|(ti, yi)| {
            let p: f64 = ct.iter().enumerate().map(|(k, c)| c * ti.powi(k as i32)).sum();
            (yi - p).powi(2)
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(PolyFit {
        coefficients,
        r_squared,
    })
}
