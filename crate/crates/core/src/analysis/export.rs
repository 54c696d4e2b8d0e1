//! CSV and SVG output for boundary grids.

use std::fmt::Write as _;
use std::io::Write;

use super::{AnalysisError, BoundaryGrid, Bounds};

const PANEL: f64 = 320.0;
const MARGIN: f64 = 24.0;
const TITLE: f64 = 20.0;

/// Fill color for a 1-based class label; anything beyond 3 is grey.
pub fn class_color(label: usize) -> &'static str {
    match label {
        1 => "#d62728",
        2 => "#1f77b4",
        3 => "#2ca02c",
        _ => "#7f7f7f",
    }
}

/// One row per cell: `x,y,label_a,label_b` at the cell center.
pub fn write_grid_csv<W: Write>(grid: &BoundaryGrid, out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    let pts = grid.cell_centers();
    let io = |e: csv::Error| AnalysisError::Io(e.into());
    w.write_record(["x", "y", "label_a", "label_b"]).map_err(io)?;
    for c in 0..pts.ncols() {
        w.write_record([
            format!("{:.16e}", pts[[0, c]]),
            format!("{:.16e}", pts[[1, c]]),
            grid.labels_a[c].to_string(),
            grid.labels_b[c].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// A line `normal . x + offset = 0` drawn across a panel.
#[derive(Debug, Clone)]
pub struct SvgLine {
    pub normal: [f64; 2],
    pub offset: f64,
    pub color: String,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct SvgPanel {
    pub title: String,
    pub bounds: Bounds,
    /// Cell labels in grid order, with the grid resolution.
    pub cells: Option<((usize, usize), Vec<usize>)>,
    pub points: Vec<([f64; 2], usize)>,
    pub lines: Vec<SvgLine>,
}

impl SvgPanel {
    pub fn new(title: impl Into<String>, bounds: Bounds) -> Self {
        Self {
            title: title.into(),
            bounds,
            cells: None,
            points: Vec::new(),
            lines: Vec::new(),
        }
    }

    pub fn with_cells(mut self, resolution: (usize, usize), labels: Vec<usize>) -> Self {
        self.cells = Some((resolution, labels));
        self
    }

    pub fn with_points(mut self, points: Vec<([f64; 2], usize)>) -> Self {
        self.points = points;
        self
    }

    pub fn with_line(mut self, line: SvgLine) -> Self {
        self.lines.push(line);
        self
    }
}

/// Lays the panels out side by side in one SVG document.
pub fn render_svg(panels: &[SvgPanel]) -> String {
    let width = panels.len().max(1) as f64 * (PANEL + 2.0 * MARGIN);
    let height = PANEL + 2.0 * MARGIN + TITLE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        let ox = i as f64 * (PANEL + 2.0 * MARGIN) + MARGIN;
        let oy = MARGIN + TITLE;
        render_panel(&mut s, p, ox, oy);
    }
    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, p: &SvgPanel, ox: f64, oy: f64) {
    let b = &p.bounds;
    let sx = PANEL / (b.x_max - b.x_min);
    let sy = PANEL / (b.y_max - b.y_min);
    let px = |x: f64| ox + (x - b.x_min) * sx;
    let py = |y: f64| oy + (b.y_max - y) * sy;

    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13">{}</text>"#,
        ox,
        oy - 8.0,
        escape(&p.title)
    );
    let _ = writeln!(s, r#"<clipPath id="c{ox:.0}"><rect x="{ox:.2}" y="{oy:.2}" width="{PANEL}" height="{PANEL}"/></clipPath>"#);
    let _ = writeln!(s, r#"<g clip-path="url(#c{ox:.0})">"#);
    if let Some(((nx, ny), labels)) = &p.cells {
        let cw = PANEL / *nx as f64;
        let ch = PANEL / *ny as f64;
        for j in 0..*ny {
            for i in 0..*nx {
                let l = labels[j * nx + i];
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.3}" height="{:.3}" fill="{}" fill-opacity="0.25"/>"#,
                    ox + i as f64 * cw,
                    oy + PANEL - (j + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05,
                    class_color(l)
                );
            }
        }
    }
    for ([x, y], l) in &p.points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.2" fill="{}"/>"#,
            px(*x),
            py(*y),
            class_color(*l)
        );
    }
    for line in &p.lines {
        if let Some(((x0, y0), (x1, y1))) = clip_line(line.normal, line.offset, b) {
            let dash = if line.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.8"{dash}/>"#,
                px(x0),
                py(y0),
                px(x1),
                py(y1),
                line.color
            );
        }
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<rect x="{ox:.2}" y="{oy:.2}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
    );
}

/// Segment of `n . x + c = 0` inside the bounds, if any.
fn clip_line(n: [f64; 2], c: f64, b: &Bounds) -> Option<((f64, f64), (f64, f64))> {
    let mut hits: Vec<(f64, f64)> = Vec::new();
    if n[1] != 0.0 {
        for x in [b.x_min, b.x_max] {
            let y = -(c + n[0] * x) / n[1];
            if (b.y_min..=b.y_max).contains(&y) {
                hits.push((x, y));
            }
        }
    }
    if n[0] != 0.0 {
        for y in [b.y_min, b.y_max] {
            let x = -(c + n[1] * y) / n[0];
            if (b.x_min..=b.x_max).contains(&x) {
                hits.push((x, y));
            }
        }
    }
    let first = *hits.first()?;
    let far = hits
        .iter()
        .copied()
        .max_by(|a, q| {
            let da = (a.0 - first.0).hypot(a.1 - first.1);
            let dq = (q.0 - first.0).hypot(q.1 - first.1);
            da.total_cmp(&dq)
        })
        .expect("non-empty");
    Some((first, far))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{boundary_grid, LinearClassifier};
    use ndarray::array;

    #[test]
    fn grid_csv_rows() {
        let a = LinearClassifier::new(array![[1.0, 0.0]], Some(array![-0.5]));
        let g = boundary_grid(&a, &a, &Bounds::unit(), (3, 2)).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "x,y,label_a,label_b");
        assert!(lines[1].ends_with(",2,2"));
        assert!(lines[3].ends_with(",1,1"));
    }

    #[test]
    fn svg_has_colors_and_line() {
        let panel = SvgPanel::new("a < b", Bounds::unit())
            .with_cells((2, 2), vec![1, 2, 3, 1])
            .with_points(vec![([0.5, 0.5], 2)])
            .with_line(SvgLine {
                normal: [1.0, -1.0],
                offset: 0.0,
                color: "black".into(),
                dashed: true,
            });
        let svg = render_svg(&[panel.clone(), panel]);
        assert!(svg.starts_with("<svg"));
        for c in ["#d62728", "#1f77b4", "#2ca02c"] {
            assert!(svg.contains(c));
        }
        assert_eq!(svg.matches("<line").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn clipping() {
        let b = Bounds::unit();
        let (p, q) = clip_line([1.0, 0.0], -0.25, &b).unwrap();
        assert_eq!(p.0, 0.25);
        assert_eq!(q.0, 0.25);
        assert!((p.1 - q.1).abs() == 1.0);
        assert!(clip_line([1.0, 0.0], -3.0, &b).is_none());
    }
}
