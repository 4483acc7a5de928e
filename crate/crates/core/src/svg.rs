//! Tiny dependency-free SVG scatter plots.
//!
//! Enough for the diagnostic artifacts this toolkit emits (noise sweeps,
//! metric-vs-metric scatters): fixed canvas, linear axes with ticks, one
//! color per series, legend. Output is deterministic for identical input,
//! so plot files can be byte-compared across runs.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;
const TICKS: usize = 5;
const POINT_R: f64 = 3.0;

/// Series colors, cycled in order of insertion.
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// A named point set to draw.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Scatter plot builder; `render` produces the final SVG document.
#[derive(Debug, Clone)]
pub struct ScatterPlot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

impl ScatterPlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    pub fn add_series(&mut self, name: &str, points: Vec<(f64, f64)>) -> &mut Self {
        self.series.push(Series {
            name: name.to_string(),
            points,
        });
        self
    }

    /// Data bounds over all series, padded so a flat axis still has extent.
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() {
                    xs = (xs.0.min(x), xs.1.max(x));
                }
                if y.is_finite() {
                    ys = (ys.0.min(y), ys.1.max(y));
                }
            }
        }
        let pad = |(lo, hi): (f64, f64)| -> (f64, f64) {
            if lo > hi {
                // No finite data at all; pick an arbitrary unit window.
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                let m = (hi - lo) * 0.05;
                (lo - m, hi + m)
            }
        };
        let (x0, x1) = pad(xs);
        let (y0, y1) = pad(ys);
        (x0, x1, y0, y1)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
            WIDTH / 2.0,
            escape(&self.title)
        );

        // Axes.
        let (bx0, bx1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (by0, by1) = (HEIGHT - MARGIN_B, MARGIN_T);
        let _ = writeln!(
            out,
            "<line x1=\"{bx0}\" y1=\"{by0}\" x2=\"{bx1}\" y2=\"{by0}\" stroke=\"black\"/>"
        );
        let _ = writeln!(
            out,
            "<line x1=\"{bx0}\" y1=\"{by0}\" x2=\"{bx0}\" y2=\"{by1}\" stroke=\"black\"/>"
        );
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let xpx = px(xv);
            let ypx = py(yv);
            let _ = writeln!(
                out,
                "<line x1=\"{xpx}\" y1=\"{by0}\" x2=\"{xpx}\" y2=\"{}\" stroke=\"black\"/>",
                by0 + 5.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{xpx}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                by0 + 18.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                out,
                "<line x1=\"{}\" y1=\"{ypx}\" x2=\"{bx0}\" y2=\"{ypx}\" stroke=\"black\"/>",
                bx0 - 5.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                bx0 - 8.0,
                ypx + 4.0,
                fmt_tick(yv)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            (bx0 + bx1) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {})\">{}</text>",
            (by0 + by1) / 2.0,
            (by0 + by1) / 2.0,
            escape(&self.y_label)
        );

        // Points.
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            for &(x, y) in &s.points {
                if !(x.is_finite() && y.is_finite()) {
                    continue;
                }
                let _ = writeln!(
                    out,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"{POINT_R}\" fill=\"{color}\" fill-opacity=\"0.8\"/>",
                    px(x),
                    py(y)
                );
            }
        }

        // Legend, top-right inside the plot area.
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let ly = MARGIN_T + 14.0 + 18.0 * si as f64;
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
                bx1 - 150.0,
                ly - 9.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
                bx1 - 135.0,
                ly,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && (a >= 1e4 || a < 1e-3) {
        format!("{v:.2e}")
    } else {
        // Trim trailing zeros from a fixed rendering so ticks stay short.
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".to_string() } else { s.to_string() }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
