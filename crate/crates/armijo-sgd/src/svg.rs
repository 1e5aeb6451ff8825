//! Minimal deterministic SVG line plots for convergence curves. No external
//! renderer: output is a fixed-size viewBox with axes, polylines and a
//! legend, byte-stable for identical inputs.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot log10 of the y values (requires all y > 0; non-positive values
    /// are dropped from the plot, never from the data files).
    pub log_y: bool,
}

fn fmt(v: f64) -> String {
    // Fixed-precision coordinates keep the file byte-stable and small.
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 10_000.0) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Writes a line plot of the given series. Series are drawn in order with a
/// fixed palette; the legend sits in the right margin.
pub fn write_line_plot(path: &Path, spec: &PlotSpec, series: &[Series]) -> Result<()> {
    let transform = |y: f64| if spec.log_y { y.log10() } else { y };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if spec.log_y && y <= 0.0 {
                continue;
            }
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(transform(y));
            }
        }
    }
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min).max(1e-300) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min).max(1e-300) * plot_h;

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    )?;
    writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>")?;
    writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        escape(&spec.title)
    )?;
    // Axes.
    writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h)
    )?;
    writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP + plot_h),
        fmt(MARGIN_LEFT + plot_w),
        fmt(MARGIN_TOP + plot_h)
    )?;
    // Corner tick labels.
    for (value, x, y, anchor) in [
        (x_min, MARGIN_LEFT, MARGIN_TOP + plot_h + 16.0, "start"),
        (x_max, MARGIN_LEFT + plot_w, MARGIN_TOP + plot_h + 16.0, "end"),
    ] {
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            fmt(x),
            fmt(y),
            fmt_tick(value)
        )?;
    }
    let y_tick = |v: f64| {
        if spec.log_y {
            format!("1e{v:.2}")
        } else {
            fmt_tick(v)
        }
    };
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
        fmt(MARGIN_LEFT - 6.0),
        fmt(MARGIN_TOP + 4.0),
        y_tick(y_max)
    )?;
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
        fmt(MARGIN_LEFT - 6.0),
        fmt(MARGIN_TOP + plot_h + 4.0),
        y_tick(y_min)
    )?;
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0),
        escape(&spec.x_label)
    )?;
    writeln!(
        out,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0),
        escape(&format!(
            "{}{}",
            if spec.log_y { "log10 " } else { "" },
            spec.y_label
        ))
    )?;

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path_points: Vec<String> = s
            .points
            .iter()
            .filter(|&&(x, y)| x.is_finite() && y.is_finite() && (!spec.log_y || y > 0.0))
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(transform(y)))))
            .collect();
        if !path_points.is_empty() {
            writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                path_points.join(" ")
            )?;
        }
        let ly = MARGIN_TOP + 14.0 * i as f64 + 10.0;
        writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            fmt(WIDTH - MARGIN_RIGHT + 8.0),
            fmt(ly - 4.0),
            fmt(WIDTH - MARGIN_RIGHT + 28.0),
            fmt(ly - 4.0)
        )?;
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            fmt(WIDTH - MARGIN_RIGHT + 34.0),
            fmt(ly),
            escape(&s.label)
        )?;
    }
    writeln!(out, "</svg>")?;
    out.flush()?;
    Ok(())
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
