use super::{MetricReport, StudyResult};
use std::fmt::Write;

/// A metric column of the evaluation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Psnr,
    Ssim,
    Rmse,
    Mae,
    /// Learned perceptual distance; only available through a sidecar.
    Lpips,
}

impl MetricKind {
    pub const PIXEL: [MetricKind; 4] = [MetricKind::Psnr, MetricKind::Ssim, MetricKind::Rmse, MetricKind::Mae];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Psnr => "psnr",
            MetricKind::Ssim => "ssim",
            MetricKind::Rmse => "rmse",
            MetricKind::Mae => "mae",
            MetricKind::Lpips => "lpips",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [Self::Psnr, Self::Ssim, Self::Rmse, Self::Mae, Self::Lpips]
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(name.trim()))
    }

    fn title(self) -> &'static str {
        match self {
            MetricKind::Psnr => "PSNR",
            MetricKind::Ssim => "SSIM",
            MetricKind::Rmse => "RMSE",
            MetricKind::Mae => "MAE",
            MetricKind::Lpips => "LPIPS",
        }
    }

    fn digits(self) -> usize {
        if self == MetricKind::Psnr {
            2
        } else {
            4
        }
    }
}

/// One evaluated image.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub report: MetricReport,
    pub lpips: Option<f64>,
}

impl MetricRow {
    pub fn new(name: impl Into<String>, report: MetricReport) -> Self {
        Self {
            name: name.into(),
            report,
            lpips: None,
        }
    }

    pub fn value(&self, kind: MetricKind) -> f64 {
        let r = &self.report;
        match kind {
            MetricKind::Psnr => r.psnr,
            MetricKind::Ssim => r.ssim,
            MetricKind::Rmse => r.rmse,
            MetricKind::Mae => r.mae,
            MetricKind::Lpips => self.lpips.unwrap_or(f64::NAN),
        }
    }
}

/// Arithmetic mean of each column.
pub fn mean_values(rows: &[MetricRow], cols: &[MetricKind]) -> Option<Vec<f64>> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some(
        cols.iter()
            .map(|&k| rows.iter().map(|r| r.value(k)).sum::<f64>() / n)
            .collect(),
    )
}

/// `name,<cols>` rows followed by a `mean` row.
pub fn metrics_csv(rows: &[MetricRow], cols: &[MetricKind]) -> String {
    let mut out = String::from("name");
    for k in cols {
        write!(out, ",{}", k.as_str()).unwrap();
    }
    out.push('\n');
    let mut line = |name: &str, vals: &mut dyn Iterator<Item = f64>| {
        out.push_str(name);
        for v in vals {
            write!(out, ",{v:.6}").unwrap();
        }
        out.push('\n');
    };
    for r in rows {
        line(&r.name, &mut cols.iter().map(|&k| r.value(k)));
    }
    if let Some(mean) = mean_values(rows, cols) {
        line("mean", &mut mean.into_iter());
    }
    out
}

pub fn metrics_markdown(rows: &[MetricRow], cols: &[MetricKind]) -> String {
    let mut out = String::from("| image |");
    for k in cols {
        write!(out, " {} |", k.title()).unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(cols.len()));
    out.push('\n');
    let mut line = |name: &str, vals: Vec<f64>| {
        write!(out, "| {name} |").unwrap();
        for (k, v) in cols.iter().zip(vals) {
            write!(out, " {:.*} |", k.digits(), v).unwrap();
        }
        out.push('\n');
    };
    for r in rows {
        line(&r.name, cols.iter().map(|&k| r.value(k)).collect());
    }
    if let Some(mean) = mean_values(rows, cols) {
        line("**mean**", mean);
    }
    out
}

/// Ranked `rank,method,z[,ci_low,ci_high]` rows.
pub fn study_csv(r: &StudyResult) -> String {
    let mut out = String::from(if r.ci.is_some() {
        "rank,method,z,ci_low,ci_high\n"
    } else {
        "rank,method,z\n"
    });
    for (rank, i) in r.ranking().into_iter().enumerate() {
        write!(out, "{},{},{:.6}", rank + 1, r.methods[i], r.z[i]).unwrap();
        if let Some(ci) = &r.ci {
            write!(out, ",{:.6},{:.6}", ci[i].0, ci[i].1).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn study_markdown(r: &StudyResult) -> String {
    let mut out = String::new();
    match &r.ci {
        Some(_) => out.push_str("| rank | method | z | 95% CI |\n|---|---|---|---|\n"),
        None => out.push_str("| rank | method | z |\n|---|---|---|\n"),
    }
    for (rank, i) in r.ranking().into_iter().enumerate() {
        write!(out, "| {} | {} | {:+.3} |", rank + 1, r.methods[i], r.z[i]).unwrap();
        if let Some(ci) = &r.ci {
            write!(out, " [{:+.3}, {:+.3}] |", ci[i].0, ci[i].1).unwrap();
        }
        out.push('\n');
    }
    out
}
