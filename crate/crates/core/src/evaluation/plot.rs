//! Static SVG rendering of samples, decoded paths and density profiles.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const PANEL: f64 = 400.0;
const MARGIN: f64 = 40.0;

/// A labelled polyline; rows are `(x, y)`.
#[derive(Clone, Debug)]
pub struct PlotSeries {
    pub label: String,
    pub points: Array2<f64>,
}

struct Frame {
    x0: f64,
    y0: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn fit<'a>(x0: f64, sets: impl Iterator<Item = ArrayView2<'a, f64>>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for set in sets {
            for r in set.rows() {
                for k in 0..2 {
                    if r[k].is_finite() {
                        lo[k] = lo[k].min(r[k]);
                        hi[k] = hi[k].max(r[k]);
                    }
                }
            }
        }
        for k in 0..2 {
            if !lo[k].is_finite() {
                (lo[k], hi[k]) = (0.0, 1.0);
            }
            let pad = 0.05 * (hi[k] - lo[k]).max(1e-9);
            lo[k] -= pad;
            hi[k] += pad;
        }
        Self { x0, y0: MARGIN, lo, hi }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let px = self.x0 + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * PANEL;
        let py = self.y0 + PANEL - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * PANEL;
        (px, py)
    }

    fn border(&self, out: &mut String, title: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#444"/>"##,
            self.x0, self.y0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
            self.x0 + PANEL / 2.0,
            self.y0 - 12.0,
            escape(title)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, frame: &Frame, pts: ArrayView2<f64>, color: &str) {
    let mut coords = String::new();
    for r in pts.rows() {
        let (x, y) = frame.map(r[0], r[1]);
        let _ = write!(coords, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
        coords.trim_end()
    );
}

/// Two panels: data samples with decoded paths on the left, density profiles
/// (parameter against density) on the right. Samples beyond 5000 are thinned.
pub fn render_svg<'a>(samples: ArrayView2<'a, f64>, paths: &'a [PlotSeries], profiles: &[PlotSeries]) -> String {
    let width = 3.0 * MARGIN + 2.0 * PANEL;
    let height = 2.0 * MARGIN + PANEL + 20.0 * paths.len().max(profiles.len()) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let left = Frame::fit(MARGIN, std::iter::once(samples).chain(paths.iter().map(|p| p.points.view())));
    left.border(&mut out, "data space");
    let stride = (samples.nrows() / 5000).max(1);
    for r in samples.rows().into_iter().step_by(stride) {
        let (x, y) = left.map(r[0], r[1]);
        let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="1" fill="#999" fill-opacity="0.4"/>"##);
    }
    for (i, p) in paths.iter().enumerate() {
        polyline(&mut out, &left, p.points.view(), PALETTE[i % PALETTE.len()]);
    }

    let right = Frame::fit(2.0 * MARGIN + PANEL, profiles.iter().map(|p| p.points.view()));
    right.border(&mut out, "density along path");
    for (i, p) in profiles.iter().enumerate() {
        polyline(&mut out, &right, p.points.view(), PALETTE[i % PALETTE.len()]);
    }

    let n_legend = paths.len().max(profiles.len());
    for i in 0..n_legend {
        let label = paths.get(i).or_else(|| profiles.get(i)).map(|p| p.label.as_str()).unwrap_or("");
        let y = 2.0 * MARGIN + PANEL + 20.0 * i as f64 - 10.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/>"#,
            MARGIN + 24.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, MARGIN + 30.0, y + 4.0, escape(label));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn renders_well_formed_document() {
        let samples = array![[0.0, 1.0], [1.0, 0.0], [-1.0, 0.0]];
        let paths = vec![PlotSeries { label: "a<b".into(), points: array![[0.0, 1.0], [1.0, 0.0]] }];
        let profiles = vec![PlotSeries { label: "a<b".into(), points: array![[0.0, 0.5], [1.0, 0.7]] }];
        let svg = render_svg(samples.view(), &paths, &profiles);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }
}
