//! Run summaries, the method comparison table, and accuracy-vs-SNR plots
//! as CSV and SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::SNR_LEVELS;
use crate::error::{Error, Result};
use crate::trainer::EvalResult;

pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Benchmark,
    Nt,
    Pq,
    Kd,
    Dp,
    Dq,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Benchmark => "Benchmark",
            Method::Nt => "NT",
            Method::Pq => "PQ",
            Method::Kd => "KD",
            Method::Dp => "DP",
            Method::Dq => "DQ",
        }
    }

    fn has_pe(self) -> bool {
        matches!(self, Method::Nt | Method::Dp)
    }

    fn has_cq(self) -> bool {
        matches!(self, Method::Pq | Method::Dq)
    }

    /// (sparsity, storage efficiency, computation efficiency).
    fn benefits(self) -> (bool, bool, bool) {
        match self {
            Method::Benchmark => (false, false, false),
            Method::Nt | Method::Dp => (true, true, true),
            Method::Pq => (false, true, false),
            Method::Kd | Method::Dq => (false, true, true),
        }
    }
}

/// One compressed (or baseline) model's headline numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub method: Method,
    pub network: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c_q: Option<f64>,
    pub accuracy_overall: f64,
    /// Accuracy per SNR bin, ascending SNR.
    pub acc_by_snr: Vec<(i8, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_accuracy: Option<f64>,
    pub provenance: BTreeMap<String, String>,
}

impl CompressionReport {
    pub fn new(method: Method, network: &str, eval: &EvalResult) -> Self {
        CompressionReport {
            method,
            network: network.into(),
            p_e: None,
            c_q: None,
            accuracy_overall: eval.overall_acc,
            acc_by_snr: eval.acc_by_snr.iter().map(|(&s, &a)| (s, a)).collect(),
            baseline_accuracy: None,
            provenance: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_e.is_some() != self.method.has_pe() {
            return Err(Error::format(format!(
                "{} report {} carry p_e",
                self.method.label(),
                if self.method.has_pe() { "must" } else { "must not" }
            )));
        }
        if self.c_q.is_some() != self.method.has_cq() {
            return Err(Error::format(format!(
                "{} report {} carry C_Q",
                self.method.label(),
                if self.method.has_cq() { "must" } else { "must not" }
            )));
        }
        if self.acc_by_snr.len() != SNR_LEVELS.len() {
            return Err(Error::format(format!(
                "report has {} SNR bins, expected {}",
                self.acc_by_snr.len(),
                SNR_LEVELS.len()
            )));
        }
        Ok(())
    }

    pub fn delta(&self) -> Option<f64> {
        self.baseline_accuracy.map(|b| self.accuracy_overall - b)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let p = dir.join(REPORT_FILE);
        let json = serde_json::to_vec_pretty(self).expect("report serializes");
        std::fs::write(&p, json).map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(REPORT_FILE);
        let text = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let r: CompressionReport =
            serde_json::from_slice(&text).map_err(|e| Error::format(format!("{}: {e}", p.display())))?;
        r.validate()?;
        Ok(r)
    }
}

/// Accuracy change (in points) treated as no change.
const COMPARABLE_POINTS: f64 = 0.5;

fn verdict(delta: Option<f64>) -> &'static str {
    match delta.map(|d| d * 100.0) {
        None => "",
        Some(d) if d > COMPARABLE_POINTS => "improved",
        Some(d) if d < -COMPARABLE_POINTS => "degraded",
        Some(_) => "comparable",
    }
}

/// Method comparison table, one row per report.
pub fn summary_csv(reports: &[CompressionReport]) -> Result<String> {
    let mut s = String::from("method,network,p_e,C_Q,accuracy,accuracy_delta,accuracy_verdict,sparsity,storage,computation\n");
    let opt = |v: Option<f64>| v.map_or(String::from("-"), |x| x.to_string());
    let mark = |b: bool| if b { "yes" } else { "-" };
    for r in reports {
        r.validate()?;
        let (sp, st, co) = r.method.benefits();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method.label(),
            r.network,
            opt(r.p_e),
            opt(r.c_q),
            r.accuracy_overall,
            opt(r.delta()),
            verdict(r.delta()),
            mark(sp),
            mark(st),
            mark(co)
        )
        .unwrap();
    }
    Ok(s)
}

/// One labelled accuracy-vs-SNR curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(i8, f64)>,
}

impl Series {
    pub fn from_eval(label: &str, e: &EvalResult) -> Self {
        Series {
            label: label.into(),
            points: e.acc_by_snr.iter().map(|(&s, &a)| (s, a)).collect(),
        }
    }
}

fn check_series(series: &[Series]) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(Error::param("a plot needs at least one non-empty series"));
    }
    if series.iter().any(|s| s.label.contains(',') || s.label.contains('\n')) {
        return Err(Error::param("series labels may not contain commas or newlines"));
    }
    Ok(())
}

pub fn series_csv(series: &[Series]) -> Result<String> {
    check_series(series)?;
    let mut s = String::from("series,snr_db,accuracy\n");
    for ser in series {
        for (snr, acc) in &ser.points {
            writeln!(s, "{},{snr},{acc}", ser.label).unwrap();
        }
    }
    Ok(s)
}

pub fn parse_series_csv(text: &str) -> Result<Vec<Series>> {
    let mut lines = text.lines();
    if lines.next() != Some("series,snr_db,accuracy") {
        return Err(Error::format("missing series CSV header"));
    }
    let mut out: Vec<Series> = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let [label, snr, acc] = f[..] else {
            return Err(Error::format(format!("bad series row {line:?}")));
        };
        let snr: i8 = snr.parse().map_err(|_| Error::format(format!("bad SNR in {line:?}")))?;
        let acc: f64 = acc.parse().map_err(|_| Error::format(format!("bad accuracy in {line:?}")))?;
        match out.last_mut() {
            Some(s) if s.label == label => s.points.push((snr, acc)),
            _ => out.push(Series {
                label: label.into(),
                points: vec![(snr, acc)],
            }),
        }
    }
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const SNR_MIN: f64 = -20.0;
const SNR_MAX: f64 = 18.0;

fn px(snr: f64) -> f64 {
    LEFT + (snr - SNR_MIN) / (SNR_MAX - SNR_MIN) * (WIDTH - LEFT - RIGHT)
}

fn py(acc: f64) -> f64 {
    HEIGHT - BOTTOM - acc.clamp(0.0, 1.0) * (HEIGHT - TOP - BOTTOM)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of accuracy (0..1) against SNR (−20..18 dB).
pub fn accuracy_vs_snr_svg(series: &[Series], title: &str) -> Result<String> {
    check_series(series)?;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    for i in 0..=10 {
        let a = i as f64 / 10.0;
        let y = py(a);
        writeln!(
            s,
            r##"<line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##,
            WIDTH - RIGHT
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{a:.1}</text>"#, LEFT - 6.0, y + 4.0).unwrap();
    }
    for snr in (-20..=18).step_by(4) {
        let x = px(f64::from(snr));
        writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{snr}</text>"#,
            HEIGHT - BOTTOM + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<polyline points="{LEFT:.1},{TOP:.1} {LEFT:.1},{b:.1} {r:.1},{b:.1}" fill="none" stroke="black"/>"#,
        b = HEIGHT - BOTTOM,
        r = WIDTH - RIGHT
    )
    .unwrap();
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR (dB)</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 12.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">Accuracy</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0
    )
    .unwrap();
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(i8, f64)> = ser.points.clone();
        pts.sort_by_key(|p| p.0);
        let path: Vec<String> = pts
            .iter()
            .map(|&(snr, acc)| format!("{:.2},{:.2}", px(f64::from(snr)), py(acc)))
            .collect();
        writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        )
        .unwrap();
        let ly = TOP + 8.0 + 16.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            LEFT + 12.0,
            LEFT + 32.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text class="legend" x="{:.1}" y="{:.1}">{}</text>"#,
            LEFT + 38.0,
            ly + 4.0,
            escape(&ser.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(label: &str, acc: f64) -> Series {
        Series {
            label: label.into(),
            points: SNR_LEVELS.iter().map(|&s| (s, acc)).collect(),
        }
    }

    #[test]
    fn constant_series_is_flat() {
        let svg = accuracy_vs_snr_svg(&[flat("a", 0.5)], "t").unwrap();
        let line = svg.lines().find(|l| l.contains("class=\"series\"")).unwrap();
        let start = line.find("points=\"").unwrap() + 8;
        let pts = &line[start..start + line[start..].find('"').unwrap()];
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.iter().all(|y| *y == ys[0]));
        assert_eq!(ys[0], format!("{:.2}", py(0.5)));
    }

    #[test]
    fn csv_roundtrip_and_legends() {
        let s = vec![flat("benchmark", 0.61), flat("eps=0.02", 1.0 / 3.0), flat("eps=0.08", 0.1)];
        let csv = series_csv(&s).unwrap();
        assert_eq!(parse_series_csv(&csv).unwrap(), s);
        let svg = accuracy_vs_snr_svg(&s, "NT").unwrap();
        assert_eq!(svg.matches("class=\"legend\"").count(), 3);
        assert!(accuracy_vs_snr_svg(&[], "x").is_err());
    }

    #[test]
    fn method_fields_are_enforced() {
        let mut r = CompressionReport {
            method: Method::Nt,
            network: "vtcnn2".into(),
            p_e: Some(0.9),
            c_q: None,
            accuracy_overall: 0.5,
            acc_by_snr: SNR_LEVELS.iter().map(|&s| (s, 0.5)).collect(),
            baseline_accuracy: Some(0.49),
            provenance: BTreeMap::new(),
        };
        assert!(r.validate().is_ok());
        r.c_q = Some(3.0);
        assert!(r.validate().is_err());
        r.c_q = None;
        r.method = Method::Kd;
        assert!(r.validate().is_err());
        r.p_e = None;
        let csv = summary_csv(&[r]).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("KD,vtcnn2,-,-,0.5,"));
    }
}
