//! Static SVG line charts from CSV columns.

use crate::setup::{usage, write_manifest, Common};
use anyhow::{Context, Result};
use clap::Args;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// CSV with a header row (e.g. `loss.csv` from `train`, a `restore --log`).
    #[arg(long)]
    pub input: PathBuf,
    /// SVG file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Column for the horizontal axis (default: first column).
    #[arg(long)]
    pub x: Option<String>,
    /// Comma-separated columns to draw (default: every other numeric column).
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<String>,
    #[arg(long)]
    pub title: Option<String>,
}

#[derive(Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Reads the requested columns; blank or non-numeric cells are skipped.
pub fn read_series(text: &str, x: Option<&str>, y: &[String]) -> Result<Vec<Series>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if header.is_empty() || rows.is_empty() {
        return Err(usage("CSV has no data rows"));
    }
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("column `{name}` not found; have {header:?}")))
    };
    let xi = match x {
        Some(name) => col(name)?,
        None => 0,
    };
    let numeric = |k: usize, r: &csv::StringRecord| r.get(k).and_then(|c| c.trim().parse::<f64>().ok()).filter(|v| v.is_finite());
    let ys: Vec<usize> = if y.is_empty() {
        (0..header.len()).filter(|&k| k != xi && rows.iter().any(|r| numeric(k, r).is_some())).collect()
    } else {
        y.iter().map(|name| col(name)).collect::<Result<_>>()?
    };
    let series: Vec<Series> = ys
        .into_iter()
        .map(|k| Series {
            name: header[k].clone(),
            points: rows.iter().filter_map(|r| Some((numeric(xi, r)?, numeric(k, r)?))).collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    if series.is_empty() {
        return Err(usage("no numeric columns to plot"));
    }
    Ok(series)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(series: &[Series], x_label: &str, title: &str) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(xv), bottom + 18.0, tick(xv));
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(yv) + 4.0, tick(yv));
        let _ = writeln!(svg, r##"<line x1="{left}" x2="{right}" y1="{0:.1}" y2="{0:.1}" stroke="#eee"/>"##, sy(yv));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(x_label));
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(svg, r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, right - 110.0, right - 90.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, right - 84.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn plot(common: &Common, args: &PlotArgs) -> Result<()> {
    let cfg = common.load()?;
    let text = std::fs::read_to_string(&args.input).map_err(|e| usage(format!("cannot read {}: {e}", args.input.display())))?;
    let series = read_series(&text, args.x.as_deref(), &args.y).with_context(|| format!("plotting {}", args.input.display()))?;
    let x_label = match &args.x {
        Some(x) => x.clone(),
        None => text.lines().next().and_then(|h| h.split(',').next()).unwrap_or("x").trim().to_string(),
    };
    let title = args.title.clone().unwrap_or_else(|| args.input.display().to_string());
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&args.out, render_svg(&series, &x_label, &title))
        .with_context(|| format!("writing {}", args.out.display()))?;
    write_manifest("plot", &cfg, cfg.train.seed, &args.out, std::slice::from_ref(&args.out))?;
    Ok(())
}
