//! Deterministic artifact emission.
//!
//! Every file begins with (or embeds) the dynamics seed and the SHA-256 of
//! the effective configuration, so any artifact can be traced back to the
//! exact run that produced it. Writers avoid wall-clock data and iterate
//! ordered containers only, so rerunning a command with the same seed
//! produces byte-identical files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

/// Emission formats selectable via `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Format {
    /// Comma-separated time series and tables.
    Csv,
    /// Structured reports.
    Json,
    /// Static line charts.
    Svg,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

/// Writes artifacts for one command invocation.
pub struct Emitter {
    dir: PathBuf,
    formats: BTreeSet<Format>,
    seed: u64,
    config_hash: String,
    written: Vec<PathBuf>,
}

impl Emitter {
    /// Creates the output directory and remembers the stamp fields.
    pub fn new(dir: &Path, formats: &[Format], seed: u64, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            formats: formats.iter().copied().collect(),
            seed,
            config_hash: config_hash.to_string(),
            written: Vec::new(),
        })
    }

    /// Whether a format was requested.
    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    /// Paths written so far, in emission order.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, format: Format, content: &str) -> Result<()> {
        let path = self.dir.join(format!("{name}.{}", format.extension()));
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    /// Emits a CSV table when CSV output is requested. `header` is the
    /// column line; each row is already comma-joined.
    pub fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let mut out = format!(
            "# seed={} config=sha256:{}\n{header}\n",
            self.seed, self.config_hash
        );
        for row in rows {
            out.push_str(row);
            out.push('\n');
        }
        self.write(name, Format::Csv, &out)
    }

    /// Emits a pre-rendered CSV body (header line included) when CSV
    /// output is requested.
    pub fn csv_text(&mut self, name: &str, body: &str) -> Result<()> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let out = format!(
            "# seed={} config=sha256:{}\n{body}",
            self.seed, self.config_hash
        );
        self.write(name, Format::Csv, &out)
    }

    /// Emits a JSON report when JSON output is requested. The seed and
    /// config hash are injected as top-level fields; key order is sorted,
    /// so the bytes are stable.
    pub fn json(&mut self, name: &str, value: impl serde::Serialize) -> Result<()> {
        if !self.wants(Format::Json) {
            return Ok(());
        }
        let mut value = serde_json::to_value(value).context("serializing report")?;
        match &mut value {
            Value::Object(map) => {
                map.insert("seed".into(), Value::from(self.seed));
                map.insert(
                    "config_sha256".into(),
                    Value::from(self.config_hash.clone()),
                );
            }
            _ => anyhow::bail!("reports must serialize to JSON objects"),
        }
        let text = format!("{}\n", serde_json::to_string_pretty(&value)?);
        self.write(name, Format::Json, &text)
    }

    /// Emits a line chart when SVG output is requested.
    pub fn svg(&mut self, name: &str, chart: &LineChart) -> Result<()> {
        if !self.wants(Format::Svg) {
            return Ok(());
        }
        let body = chart.render(self.seed, &self.config_hash);
        self.write(name, Format::Svg, &body)
    }
}

/// A static polyline chart with labeled axes.
pub struct LineChart {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<(String, Vec<(f64, f64)>)>,
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 400.0;
const MARGIN: f64 = 52.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

impl LineChart {
    /// An empty chart with the given labels.
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LineChart {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    /// Adds a named polyline.
    pub fn series(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push((name.to_string(), points));
        self
    }

    fn render(&self, seed: u64, config_hash: &str) -> String {
        let all: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|(_, pts)| pts.iter().copied())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let (x0, x1) = span(all.iter().map(|p| p.0));
        let (y0, y1) = span(all.iter().map(|p| p.1));
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (CHART_W - 2.0 * MARGIN);
        let sy = |y: f64| CHART_H - MARGIN - (y - y0) / (y1 - y0) * (CHART_H - 2.0 * MARGIN);
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {CHART_W} {CHART_H}\" font-family=\"monospace\" font-size=\"12\">\n"
        ));
        out.push_str(&format!(
            "<!-- seed={seed} config=sha256:{config_hash} -->\n"
        ));
        out.push_str(&format!(
            "<rect width=\"{CHART_W}\" height=\"{CHART_H}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            CHART_W / 2.0,
            xml_escape(&self.title)
        ));
        let axis = format!(
            "<path d=\"M {m} {m2} L {m} {h} L {w} {h}\" stroke=\"black\" fill=\"none\"/>\n",
            m = MARGIN,
            m2 = MARGIN / 2.0,
            h = CHART_H - MARGIN,
            w = CHART_W - MARGIN / 2.0
        );
        out.push_str(&axis);
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            CHART_W / 2.0,
            CHART_H - 12.0,
            xml_escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
            CHART_H / 2.0,
            CHART_H / 2.0,
            xml_escape(&self.y_label)
        ));
        for (frac, label_x, label_y) in [(0.0, x0, y0), (0.5, mid(x0, x1), mid(y0, y1)), (1.0, x1, y1)] {
            let px = MARGIN + frac * (CHART_W - 2.0 * MARGIN);
            let py = CHART_H - MARGIN - frac * (CHART_H - 2.0 * MARGIN);
            out.push_str(&format!(
                "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                CHART_H - MARGIN + 16.0,
                num(label_x)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{py:.1}\" text-anchor=\"end\">{}</text>\n",
                MARGIN - 6.0,
                num(label_y)
            ));
        }
        for (k, (name, pts)) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = pts
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if !path.is_empty() {
                out.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                    path.join(" ")
                ));
            }
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
                CHART_W - MARGIN - 150.0,
                MARGIN + 16.0 * k as f64,
                xml_escape(name)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn mid(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

fn num(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e6) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
