//! Dependency-free SVG line charts for run metrics: one polyline per
//! series, an optional shaded min/max or mean±spread band behind it, axes
//! with ticks, and a legend. Also the aggregation that turns per-episode
//! records from many runs into a mean curve with a spread band.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One plotted curve.
#[derive(Clone, Debug, Default)]
pub struct Series {
    pub label: String,
    /// (x, y); non-finite points are dropped.
    pub points: Vec<(f64, f64)>,
    /// (x, lo, hi) envelope drawn translucently behind the line; empty for
    /// none.
    pub band: Vec<(f64, f64, f64)>,
}

/// Collapse many runs' records into one curve of `value` per episode:
/// returns the mean points and a mean±population-standard-deviation band.
/// Episodes where `value` is absent in every run are skipped.
pub fn episode_mean_band(
    records: &[MetricsRecord],
    value: impl Fn(&MetricsRecord) -> Option<f64>,
) -> (Vec<(f64, f64)>, Vec<(f64, f64, f64)>) {
    use std::collections::BTreeMap;
    let mut by_episode: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for rec in records {
        if let Some(v) = value(rec) {
            by_episode.entry(rec.episode).or_default().push(v);
        }
    }
    let mut points = Vec::with_capacity(by_episode.len());
    let mut band = Vec::with_capacity(by_episode.len());
    for (ep, vals) in by_episode {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        points.push((ep as f64, mean));
        band.push((ep as f64, mean - sd, mean + sd));
    }
    (points, band)
}

/// Render the chart as a standalone SVG document.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
        for &(x, lo, hi) in &s.band {
            if x.is_finite() && lo.is_finite() && hi.is_finite() {
                xs.push(x);
                ys.push(lo);
                ys.push(hi);
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::Contract("nothing plottable in any series".into()));
    }
    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);
        (px, py)
    };

    let mut svg = String::with_capacity(4096);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));

    // Axes with five ticks each.
    let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_R
    ));
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{MARGIN_T}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let yv = y_min + f * (y_max - y_min);
        let (px, _) = to_px(xv, y_min);
        let (_, py) = to_px(x_min, yv);
        svg.push_str(&format!(
            "  <line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 20.0,
            tick(xv)
        ));
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{py}\" x2=\"{x0}\" y2=\"{py}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            x0 - 9.0,
            py + 4.0,
            tick(yv)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        escape(y_label)
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.band.is_empty() {
            // Band outline: lows left-to-right, then highs back.
            let mut pts = String::new();
            for &(x, lo, _) in s.band.iter().filter(|b| finite3(b)) {
                let (px, py) = to_px(x, lo);
                pts.push_str(&format!("{px:.2},{py:.2} "));
            }
            for &(x, _, hi) in s.band.iter().rev().filter(|b| finite3(b)) {
                let (px, py) = to_px(x, hi);
                pts.push_str(&format!("{px:.2},{py:.2} "));
            }
            svg.push_str(&format!(
                "  <polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                pts.trim_end()
            ));
        }
        let pts: String = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ");
        svg.push_str(&format!(
            "  <polyline points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        ));
        // Legend entry, stacked top-right.
        let ly = MARGIN_T + 8.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_R - 150.0;
        svg.push_str(&format!(
            "  <line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 22.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 28.0,
            ly + 4.0,
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg_path(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    std::fs::write(path, line_chart(title, x_label, y_label, series)?)?;
    Ok(())
}

fn finite3(b: &(f64, f64, f64)) -> bool {
    b.0.is_finite() && b.1.is_finite() && b.2.is_finite()
}

/// Expand a value range by 5%, or by ±1 when it is a single point.
fn padded_range(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 10000.0 || a < 0.001 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
