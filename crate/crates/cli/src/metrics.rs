//! Metric records and the CSV results contract.
//!
//! Every run emits rows under the fixed header
//! `task,method,seed,n_samples,alpha,gamma,lambda,metric,value`; inapplicable
//! numeric columns stay empty, aggregate rows leave `seed` empty and suffix
//! the metric name with `_mean` / `_std`, an exact-zero divergence is written
//! as `-inf`, and failed estimates as `divergent`.

use std::collections::BTreeMap;

pub const CSV_HEADER: &str = "task,method,seed,n_samples,alpha,gamma,lambda,metric,value";

/// Divergence of a distribution estimate from the truth, on a log scale:
/// `ln KL(truth || estimated)` with the estimate floored at 1e-12 inside the
/// log, so missing support costs a large but finite penalty. Returns negative
/// infinity when the estimate matches the truth exactly.
pub fn log_kl(estimated: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(estimated.len(), truth.len());
    let mut kl = 0.0;
    for (&e, &t) in estimated.iter().zip(truth) {
        if t > 0.0 {
            kl += t * (t / e.max(1e-12)).ln();
        }
    }
    if kl <= 0.0 {
        f64::NEG_INFINITY
    } else {
        kl.ln()
    }
}

/// Log of the mean squared error of a batch of scalar estimates.
pub fn log_mse(estimates: &[f64], truth: f64) -> f64 {
    assert!(!estimates.is_empty(), "log_mse over no estimates");
    let mse = estimates
        .iter()
        .map(|e| (e - truth) * (e - truth))
        .sum::<f64>()
        / estimates.len() as f64;
    if mse == 0.0 {
        f64::NEG_INFINITY
    } else {
        mse.ln()
    }
}

/// One result cell. Finite values serialize with Rust's shortest-round-trip
/// float formatting, so equal computations give identical bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Finite(f64),
    /// A run that aborted numerically (objective guard, no convergence, or
    /// a degenerate estimate); recorded, never silently dropped.
    Divergent,
}

impl MetricValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            MetricValue::Finite(v) => Some(v),
            MetricValue::Divergent => None,
        }
    }
}

fn write_value(out: &mut String, value: MetricValue) {
    match value {
        MetricValue::Finite(v) if v == f64::NEG_INFINITY => out.push_str("-inf"),
        MetricValue::Finite(v) => {
            use std::fmt::Write as _;
            let _ = write!(out, "{v}");
        }
        MetricValue::Divergent => out.push_str("divergent"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub task: &'static str,
    pub method: String,
    /// `None` on aggregate rows.
    pub seed: Option<u64>,
    /// Walk length or trajectory length, depending on the task.
    pub n_samples: Option<usize>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub metric: String,
    pub value: MetricValue,
}

impl MetricRecord {
    fn csv_row(&self) -> String {
        use std::fmt::Write as _;
        let mut row = String::new();
        let _ = write!(row, "{},{},", self.task, self.method);
        if let Some(seed) = self.seed {
            let _ = write!(row, "{seed}");
        }
        row.push(',');
        if let Some(n) = self.n_samples {
            let _ = write!(row, "{n}");
        }
        row.push(',');
        if let Some(alpha) = self.alpha {
            let _ = write!(row, "{alpha}");
        }
        row.push(',');
        if let Some(gamma) = self.gamma {
            let _ = write!(row, "{gamma}");
        }
        row.push(',');
        if let Some(lambda) = self.lambda {
            let _ = write!(row, "{lambda}");
        }
        let _ = write!(row, ",{},", self.metric);
        write_value(&mut row, self.value);
        row
    }
}

/// Renders records to CSV text under the stable header.
pub fn to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for record in records {
        out.push_str(&record.csv_row());
        out.push('\n');
    }
    out
}

/// Group key: everything identifying a cell except the seed.
type CellKey = (
    &'static str,
    String,
    Option<usize>,
    Option<u64>,
    Option<u64>,
    Option<u64>,
    String,
);

fn key_of(record: &MetricRecord) -> CellKey {
    (
        record.task,
        record.method.clone(),
        record.n_samples,
        record.alpha.map(f64::to_bits),
        record.gamma.map(f64::to_bits),
        record.lambda.map(f64::to_bits),
        record.metric.clone(),
    )
}

/// Mean and standard deviation (population form, so a single seed reports
/// deviation zero) of each per-seed metric across seeds. Divergent seeds are
/// excluded; a cell where every seed diverged aggregates to `divergent`. A
/// negative-infinity member (an exact-zero divergence) makes the mean
/// negative infinity and the deviation `divergent`.
pub fn aggregate(records: &[MetricRecord]) -> Vec<MetricRecord> {
    let mut groups: BTreeMap<CellKey, Vec<&MetricRecord>> = BTreeMap::new();
    let mut order: Vec<CellKey> = Vec::new();
    for record in records.iter().filter(|r| r.seed.is_some()) {
        let key = key_of(record);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(record);
    }
    let mut out = Vec::with_capacity(order.len() * 2);
    for key in order {
        let members = &groups[&key];
        let template = members[0];
        let finite: Vec<f64> = members.iter().filter_map(|r| r.value.finite()).collect();
        let (mean, std) = if finite.is_empty() {
            (MetricValue::Divergent, MetricValue::Divergent)
        } else if finite.iter().any(|&v| v == f64::NEG_INFINITY) {
            (MetricValue::Finite(f64::NEG_INFINITY), MetricValue::Divergent)
        } else {
            let n = finite.len() as f64;
            let mean = finite.iter().sum::<f64>() / n;
            let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (MetricValue::Finite(mean), MetricValue::Finite(var.sqrt()))
        };
        for (suffix, value) in [("_mean", mean), ("_std", std)] {
            out.push(MetricRecord {
                seed: None,
                metric: format!("{}{suffix}", template.metric),
                value,
                task: template.task,
                method: template.method.clone(),
                n_samples: template.n_samples,
                alpha: template.alpha,
                gamma: template.gamma,
                lambda: template.lambda,
            });
        }
    }
    out
}
