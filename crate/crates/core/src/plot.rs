//! SVG line charts of metric logs.
//!
//! Output depends only on the input records, so identical logs always give
//! byte-identical files.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::train::log::{read_log, MetricRecord, SplitName};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    F1,
    Em,
    Avna,
    Loss,
}

impl Metric {
    pub fn key(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::Em => "em",
            Metric::Avna => "avna",
            Metric::Loss => "loss",
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            Metric::F1 => "F1",
            Metric::Em => "EM",
            Metric::Avna => "AvNA",
            Metric::Loss => "loss",
        }
    }

    fn value(self, r: &MetricRecord) -> f64 {
        match self {
            Metric::F1 => r.f1,
            Metric::Em => r.em,
            Metric::Avna => r.avna,
            Metric::Loss => r.loss,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Metric::F1),
            "em" => Ok(Metric::Em),
            "avna" => Ok(Metric::Avna),
            "loss" => Ok(Metric::Loss),
            _ => Err(Error::Plot(format!("unknown metric `{s}` (expected f1, em, avna or loss)"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub metric: Metric,
    pub split: SplitName,
    /// `(label, path)` in legend order.
    pub logs: Vec<(String, PathBuf)>,
    pub out: PathBuf,
    pub title: Option<String>,
    /// Trailing moving-average window; `None` plots raw values.
    pub smooth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Mean of each value and the `window - 1` values before it.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let part = &values[lo..=i];
            part.iter().sum::<f64>() / part.len() as f64
        })
        .collect()
}

pub fn series_from_records(label: &str, records: &[MetricRecord], metric: Metric, split: SplitName, smooth: Option<usize>) -> Result<Series> {
    let picked: Vec<&MetricRecord> = records.iter().filter(|r| r.split == split).collect();
    if picked.is_empty() {
        return Err(Error::Plot(format!("log `{label}` has no {split} records")));
    }
    let mut ys: Vec<f64> = picked.iter().map(|r| metric.value(r)).collect();
    if let Some(w) = smooth {
        ys = moving_average(&ys, w);
    }
    Ok(Series {
        label: label.to_string(),
        points: picked.iter().zip(ys).map(|(r, y)| (r.step as f64, y)).collect(),
    })
}

/// Reads every log named in `spec`.
pub fn load_series(spec: &PlotSpec) -> Result<Vec<Series>> {
    if spec.logs.is_empty() {
        return Err(Error::Plot("no input logs".into()));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(spec.logs.len());
    for (label, path) in &spec.logs {
        if !seen.insert(label.as_str()) {
            return Err(Error::Plot(format!("duplicate label `{label}`")));
        }
        let records = read_log(path)?;
        out.push(series_from_records(label, &records, spec.metric, spec.split, spec.smooth)?);
    }
    Ok(out)
}

pub fn emit_plot(spec: &PlotSpec) -> Result<()> {
    let series = load_series(spec)?;
    let title = spec
        .title
        .clone()
        .unwrap_or_else(|| format!("{}/{}", spec.split, spec.metric.axis_label()));
    let svg = render_svg(&series, spec.metric, &title);
    fs::write(&spec.out, svg).map_err(|e| Error::io(&spec.out, e))
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Tick positions covering `[lo, hi]` at a 1/2/5 step.
fn ticks(lo: f64, hi: f64, target: usize) -> (Vec<f64>, f64) {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".to_string()
    } else {
        s
    }
}

pub fn render_svg(series: &[Series], metric: Metric, title: &str) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if metric != Metric::Loss {
        y_lo = y_lo.min(0.0);
        y_hi = y_hi.max(0.0);
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let (xt, x_step) = ticks(x_lo, x_hi, 6);
    let (yt, y_step) = ticks(y_lo, y_hi, 5);
    let (x_lo, x_hi) = (xt[0], *xt.last().unwrap());
    let (y_lo, y_hi) = (yt[0], *yt.last().unwrap());
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    s.push_str("<g class=\"grid\" stroke=\"#dddddd\" stroke-width=\"1\">\n");
    for &v in &xt {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}"/>"#, px(v), TOP, TOP + plot_h);
    }
    for &v in &yt {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}"/>"#, LEFT, py(v), LEFT + plot_w);
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    s.push_str("<g class=\"x-ticks\" text-anchor=\"middle\">\n");
    for &v in &xt {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, px(v), TOP + plot_h + 16.0, tick_label(v, x_step));
    }
    s.push_str("</g>\n<g class=\"y-ticks\" text-anchor=\"end\">\n");
    for &v in &yt {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, LEFT - 6.0, py(v) + 4.0, tick_label(v, y_step));
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
        TOP + plot_h / 2.0,
        metric.axis_label()
    );
    for (i, series) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            escape(&series.label),
            pts.join(" ")
        );
    }
    s.push_str("<g class=\"legend\">\n");
    for (i, series) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 12.0 + 20.0 * i as f64;
        let x = LEFT + plot_w + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#,
            x,
            x + 22.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 28.0, y + 4.0, escape(&series.label));
    }
    s.push_str("</g>\n</svg>\n");
    s
}
