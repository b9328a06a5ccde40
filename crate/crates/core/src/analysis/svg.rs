//! Standalone SVG charts: line/scatter plots, bar charts and heatmaps.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

pub const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

#[derive(Debug, Clone)]
enum Mark {
    Line { points: Vec<(f64, f64)>, color: String, label: Option<String> },
    Dots { points: Vec<(f64, f64)>, color: String, radius: f64 },
    Bars { lo: f64, width: f64, heights: Vec<f64>, color: String },
}

/// A plot on linear axes. Ranges default to the data extent.
#[derive(Debug, Clone)]
pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x_range: Option<(f64, f64)>,
    y_range: Option<(f64, f64)>,
    marks: Vec<Mark>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range: None,
            y_range: None,
            marks: Vec::new(),
        }
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    pub fn line(mut self, points: Vec<(f64, f64)>, color: &str, label: Option<&str>) -> Self {
        self.marks.push(Mark::Line { points, color: color.into(), label: label.map(Into::into) });
        self
    }

    pub fn dots(mut self, points: Vec<(f64, f64)>, color: &str, radius: f64) -> Self {
        self.marks.push(Mark::Dots { points, color: color.into(), radius });
        self
    }

    /// Equal-width bars starting at `lo`.
    pub fn bars(mut self, lo: f64, width: f64, heights: Vec<f64>, color: &str) -> Self {
        self.marks.push(Mark::Bars { lo, width, heights, color: color.into() });
        self
    }

    fn extent(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        let mut see = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                xs = (xs.0.min(x), xs.1.max(x));
                ys = (ys.0.min(y), ys.1.max(y));
            }
        };
        for m in &self.marks {
            match m {
                Mark::Line { points, .. } | Mark::Dots { points, .. } => points.iter().for_each(|&(x, y)| see(x, y)),
                Mark::Bars { lo, width, heights, .. } => {
                    see(*lo, 0.0);
                    for (i, &h) in heights.iter().enumerate() {
                        see(lo + width * (i + 1) as f64, h);
                    }
                }
            }
        }
        (pad_range(self.x_range.unwrap_or(xs)), pad_range(self.y_range.unwrap_or(ys)))
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.extent();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = header(WIDTH, HEIGHT, &self.title);
        axes(&mut s, (x0, x1), (y0, y1), &self.x_label, &self.y_label);
        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        let mut legend = Vec::new();
        for m in &self.marks {
            match m {
                Mark::Line { points, color, label } => {
                    let path: Vec<String> = points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
                    if let Some(l) = label {
                        legend.push((l.clone(), color.clone()));
                    }
                }
                Mark::Dots { points, color, radius } => {
                    for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{color}"/>"#, sx(x), sy(y));
                    }
                }
                Mark::Bars { lo, width, heights, color } => {
                    for (i, &h) in heights.iter().enumerate() {
                        let (a, b) = (sx(lo + width * i as f64), sx(lo + width * (i + 1) as f64));
                        let (top, base) = (sy(h.max(0.0)), sy(0.0_f64.max(y0)));
                        let _ = writeln!(
                            s,
                            r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" stroke="white" stroke-width="0.5"/>"#,
                            (b - a).max(0.0),
                            (base - top).max(0.0)
                        );
                    }
                }
            }
        }
        let _ = writeln!(s, "</g>");
        for (i, (label, color)) in legend.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = WIDTH - RIGHT - 110.0;
            let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 18.0);
            let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, x + 24.0, y + 4.0, escape(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Colour-coded matrix. `cells[row][col]`; `None` cells are hatched grey so
/// they stay distinguishable from zero.
pub fn heatmap_svg(title: &str, row_label: &str, col_label: &str, rows: &[f64], cols: &[f64], cells: &[Vec<Option<f64>>]) -> String {
    let pw = WIDTH - LEFT - RIGHT - 60.0;
    let ph = HEIGHT - TOP - BOTTOM;
    let mut s = header(WIDTH, HEIGHT, title);
    let max = cells.iter().flatten().flatten().copied().fold(0.0_f64, f64::max);
    let (nr, nc) = (rows.len().max(1) as f64, cols.len().max(1) as f64);
    let (cw, ch) = (pw / nc, ph / nr);
    let _ = writeln!(
        s,
        r##"<defs><pattern id="empty" width="4" height="4" patternUnits="userSpaceOnUse"><rect width="4" height="4" fill="#eeeeee"/><path d="M0,4 L4,0" stroke="#bbbbbb" stroke-width="0.7"/></pattern></defs>"##
    );
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let x = LEFT + cw * j as f64;
            // first row at the bottom, like a y axis
            let y = TOP + ph - ch * (i + 1) as f64;
            let fill = match cell {
                Some(v) => color_scale(if max > 0.0 { v / max } else { 0.0 }),
                None => "url(#empty)".to_string(),
            };
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#, cw + 0.05, ch + 0.05);
        }
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (k, frac) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        if let (Some(&c), Some(&r)) = (cols.get(((nc - 1.0) * frac) as usize), rows.get(((nr - 1.0) * frac) as usize)) {
            let x = LEFT + pw * frac;
            let y = TOP + ph - ph * frac;
            let anchor = ["start", "middle", "end"][k];
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" font-size="11" text-anchor="{anchor}">{}</text>"#, TOP + ph + 16.0, tick(c));
            let _ = writeln!(s, r#"<text x="{}" y="{y:.2}" font-size="11" text-anchor="end">{}</text>"#, LEFT - 6.0, tick(r));
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(col_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(row_label)
    );
    // colour bar
    let bx = LEFT + pw + 20.0;
    for k in 0..50 {
        let f = k as f64 / 49.0;
        let _ = writeln!(s, r#"<rect x="{bx}" y="{:.2}" width="14" height="{:.2}" fill="{}"/>"#, TOP + ph * (1.0 - f) - ph / 50.0, ph / 50.0 + 0.2, color_scale(f));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{}</text>"#, bx, TOP - 4.0, tick(max));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">0</text>"#, bx, TOP + ph + 12.0);
    s.push_str("</svg>\n");
    s
}

fn header(w: f64, h: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath></defs>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    s
}

fn axes(s: &mut String, (x0, x1): (f64, f64), (y0, y1): (f64, f64), x_label: &str, y_label: &str) {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let x = LEFT + pw * f;
        let y = TOP + ph - ph * f;
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="#e5e5e5"/>"##, TOP + ph);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e5e5e5"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, tick(x0 + (x1 - x0) * f));
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick(y0 + (y1 - y0) * f));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
}

fn pad_range((lo, hi): (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// White to dark red.
fn color_scale(f: f64) -> String {
    let f = f.clamp(0.0, 1.0);
    let r = 255.0 - 90.0 * f;
    let g = 255.0 * (1.0 - f);
    let b = 255.0 * (1.0 - f).powi(2);
    format!("rgb({},{},{})", r.round(), g.round(), b.round())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
