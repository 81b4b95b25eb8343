//! Minimal SVG line plots and sign-field maps.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, Default)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// Circles at these points.
    pub markers: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed vertical lines with labels.
    pub vlines: Vec<(f64, String)>,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 0.0 {
        let d = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return (lo - d, hi + d);
    }
    (lo - 0.03 * span, hi + 0.03 * span)
}

fn frame_for(
    xs: impl Iterator<Item = f64> + Clone,
    ys: impl Iterator<Item = f64> + Clone,
) -> Frame {
    let fin = |it: &mut dyn Iterator<Item = f64>| {
        it.filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            })
    };
    let (x0, x1) = fin(&mut xs.clone());
    let (y0, y1) = fin(&mut ys.clone());
    Frame {
        x: padded(x0, x1),
        y: padded(y0, y1),
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for k in 0..=4 {
        let s = k as f64 / 4.0;
        let xv = f.x.0 + s * (f.x.1 - f.x.0);
        let yv = f.y.0 + s * (f.y.1 - f.y.0);
        let (x, y) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            b + 5.0,
            b + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 5.0,
            l - 8.0,
            y + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Figure {
    pub fn render(&self) -> String {
        let xs = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().chain(&s.markers).map(|p| p.0))
            .chain(self.vlines.iter().map(|v| v.0));
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().chain(&s.markers).map(|p| p.1));
        let f = frame_for(xs, ys);
        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, &f, &self.x_label, &self.y_label);
        for (x, label) in &self.vlines {
            let px = f.px(*x);
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{MARGIN}" x2="{px:.2}" y2="{}" stroke="#555" stroke-dasharray="6 4"/><text x="{:.2}" y="{}" fill="#555">{}</text>"##,
                HEIGHT - MARGIN,
                px + 4.0,
                MARGIN + 14.0,
                escape(label)
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = if s.color.is_empty() {
                PALETTE[k % PALETTE.len()]
            } else {
                &s.color
            };
            for run in s.points.split(|p| !(p.0.is_finite() && p.1.is_finite())) {
                if run.len() < 2 {
                    continue;
                }
                let pts: Vec<String> = run
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            for &(x, y) in &s.markers {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="none" stroke="{color}"/>"#,
                    f.px(x),
                    f.py(y)
                );
            }
            let ly = MARGIN + 16.0 * (k as f64 + 1.0);
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                WIDTH - MARGIN - 150.0,
                WIDTH - MARGIN - 130.0,
                WIDTH - MARGIN - 125.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Sign field of `values` (row-major over `xs × ys`) with the zero contour.
pub fn sign_map(
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
    values: &[Option<f64>],
) -> String {
    let f = frame_for(xs.iter().copied(), ys.iter().copied());
    let mut out = String::new();
    header(&mut out, title);
    let ny = ys.len();
    let half = |v: &[f64], i: usize| {
        let lo = if i > 0 { 0.5 * (v[i - 1] + v[i]) } else { v[i] };
        let hi = if i + 1 < v.len() {
            0.5 * (v[i] + v[i + 1])
        } else {
            v[i]
        };
        (lo, hi)
    };
    for i in 0..xs.len() {
        for j in 0..ny {
            let (x0, x1) = half(xs, i);
            let (y0, y1) = half(ys, j);
            let fill = match values[i * ny + j] {
                Some(v) if v > 0.0 => "#f4a6a6",
                Some(v) if v < 0.0 => "#a6c8f4",
                Some(_) => "#ffffff",
                None => "#cccccc",
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                f.px(x0),
                f.py(y1),
                f.px(x1) - f.px(x0),
                f.py(y0) - f.py(y1)
            );
        }
    }
    for (a, b) in zero_contour(xs, ys, values) {
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            f.px(a.0),
            f.py(a.1),
            f.px(b.0),
            f.py(b.1)
        );
    }
    axes(&mut out, &f, x_label, y_label);
    out.push_str("</svg>\n");
    out
}

type Segment = ((f64, f64), (f64, f64));

/// Marching-squares segments of the zero level; cells with a missing corner are skipped.
pub fn zero_contour(xs: &[f64], ys: &[f64], values: &[Option<f64>]) -> Vec<Segment> {
    let ny = ys.len();
    let mut segs = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let v: Option<Vec<f64>> = c.iter().map(|&(a, b)| values[a * ny + b]).collect();
            let Some(v) = v else { continue };
            let mut hits = Vec::new();
            for e in 0..4 {
                let (p, q) = (e, (e + 1) % 4);
                if (v[p] < 0.0) != (v[q] < 0.0) {
                    let t = v[p] / (v[p] - v[q]);
                    let (pa, pb) = (c[p], c[q]);
                    hits.push((
                        xs[pa.0] + t * (xs[pb.0] - xs[pa.0]),
                        ys[pa.1] + t * (ys[pb.1] - ys[pa.1]),
                    ));
                }
            }
            for pair in hits.chunks_exact(2) {
                segs.push((pair[0], pair[1]));
            }
        }
    }
    segs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_figure_is_a_bare_canvas() {
        let svg = Figure::default().render();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("polyline"));
    }

    #[test]
    fn series_become_polylines() {
        let fig = Figure {
            series: vec![Series {
                label: "a".into(),
                points: vec![
                    (0.0, 0.0),
                    (1.0, 1.0),
                    (f64::NAN, 0.0),
                    (2.0, 1.0),
                    (3.0, 0.0),
                ],
                markers: vec![(1.0, 1.0)],
                ..Default::default()
            }],
            vlines: vec![(0.5, "m".into())],
            ..Default::default()
        };
        let svg = fig.render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn contour_of_linear_field_is_straight() {
        let xs: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let ys = xs.clone();
        let vals: Vec<Option<f64>> = (0..25).map(|k| Some((k / 5) as f64 - 1.5)).collect();
        let segs = zero_contour(&xs, &ys, &vals);
        assert_eq!(segs.len(), 4);
        for (a, b) in segs {
            assert!((a.0 - 1.5).abs() < 1e-12 && (b.0 - 1.5).abs() < 1e-12);
        }
    }
}
