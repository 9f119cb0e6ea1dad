//! Static SVG figures: curves against oracle calls and 2-D region overlays.

use crate::error::{Error, Result};
use crate::geometry::Polytope;
use nalgebra::DVector;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD_L: f64 = 80.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.04 * (hi - lo);
        Axis { lo: lo - pad, hi: hi + pad, log }
    }

    fn frac(&self, v: f64) -> Option<f64> {
        let v = if self.log { v.log10() } else { v };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn label(&self, f: f64) -> String {
        let v = self.lo + f * (self.hi - self.lo);
        if self.log {
            format!("1e{v:.1}")
        } else if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
            format!("{v:.2e}")
        } else {
            format!("{v:.3}")
        }
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn frame(out: &mut String, xa: &Axis, ya: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (PAD_L, W - PAD_R, H - PAD_B, PAD_T);
    let _ = writeln!(out, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = x0 + f * (x1 - x0);
        let y = y0 - f * (y0 - y1);
        let _ = writeln!(out, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, xa.label(f));
        let _ = writeln!(out, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 8.0, y + 4.0, ya.label(f));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 15.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn to_px(xa: &Axis, ya: &Axis, x: f64, y: f64) -> Option<(f64, f64)> {
    let fx = xa.frac(x)?;
    let fy = ya.frac(y)?;
    Some((PAD_L + fx * (W - PAD_L - PAD_R), H - PAD_B - fy * (H - PAD_B - PAD_T)))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of several series. Non-positive values are dropped on log axes.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_x: bool, log_y: bool) -> String {
    let xa = Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), log_x);
    let ya = Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), log_y);
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, &xa, &ya, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter_map(|&(x, y)| to_px(&xa, &ya, x, y))
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = PAD_T + 16.0 + 16.0 * k as f64;
        let lx = W - PAD_R - 160.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

/// Vertices of a bounded 2-D polytope in counter-clockwise order.
pub fn polygon(p: &Polytope) -> Result<Vec<(f64, f64)>> {
    if p.d() != 2 {
        return Err(Error::Dimension { expected: 2, got: p.d() });
    }
    let verts = p.enumerate_vertices()?;
    let n = verts.len().max(1) as f64;
    let cx = verts.iter().map(|v| v[0]).sum::<f64>() / n;
    let cy = verts.iter().map(|v| v[1]).sum::<f64>() / n;
    let mut pts: Vec<(f64, f64)> = verts.iter().map(|v| (v[0], v[1])).collect();
    pts.sort_by(|a, b| {
        let ta = (a.1 - cy).atan2(a.0 - cx);
        let tb = (b.1 - cy).atan2(b.0 - cx);
        ta.total_cmp(&tb)
    });
    Ok(pts)
}

/// True region (solid), estimated region (dashed, clipped to a margin around
/// the truth) and the iterate path.
pub fn region_plot(title: &str, truth: &Polytope, estimate: Option<&Polytope>, iterates: &[DVector<f64>]) -> Result<String> {
    let solid = polygon(truth)?;
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &solid {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    let (mx, my) = (0.15 * (xhi - xlo), 0.15 * (yhi - ylo));
    let dashed = match estimate {
        Some(e) => {
            let clip = Polytope::cube(
                &DVector::from_vec(vec![xlo - mx, ylo - my]),
                &DVector::from_vec(vec![xhi + mx, yhi + my]),
            );
            let clipped = e.intersect(&clip)?;
            if clipped.is_empty() {
                None
            } else {
                Some(polygon(&clipped)?)
            }
        }
        None => None,
    };
    let xa = Axis::fit([xlo - mx, xhi + mx].into_iter(), false);
    let ya = Axis::fit([ylo - my, yhi + my].into_iter(), false);
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, &xa, &ya, "x1", "x2");
    let path = |pts: &[(f64, f64)]| -> String {
        pts.iter()
            .filter_map(|&(x, y)| to_px(&xa, &ya, x, y))
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.08" stroke="#1f77b4" stroke-width="2"/>"##, path(&solid));
    if let Some(d) = dashed {
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
            path(&d)
        );
    }
    let it: Vec<(f64, f64)> = iterates.iter().map(|v| (v[0], v[1])).collect();
    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1"/>"#, path(&it));
    for (x, y) in it.iter().filter_map(|&(x, y)| to_px(&xa, &ya, x, y)) {
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="black"/>"#);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_of_box_is_ordered() {
        let pts = polygon(&Polytope::unit_box(2)).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
    }

    #[test]
    fn svg_has_solid_and_dashed_regions() {
        let truth = Polytope::unit_box(2);
        let est = truth.shrink(0.05).unwrap();
        let svg = region_plot("overlay", &truth, Some(&est), &[DVector::from_vec(vec![0.5, 0.5])]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("<polygon").count(), 2);
    }

    #[test]
    fn log_axes_drop_nonpositive() {
        let s = Series { label: "f".into(), points: vec![(1.0, 1.0), (10.0, 0.0), (100.0, 0.1)] };
        let svg = line_plot("t", "x", "y", &[s], true, true);
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 2);
    }
}
