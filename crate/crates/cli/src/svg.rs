//! Minimal SVG scatter and polyline writer.

use std::fmt::Write as _;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 24.0;

pub struct Plot {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

impl Plot {
    /// Square plot covering the given data ranges; the shorter side is widened to keep aspect.
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let (cx, cy) = ((x.0 + x.1) / 2.0, (y.0 + y.1) / 2.0);
        let half = ((x.1 - x.0).max(y.1 - y.0) / 2.0).max(1e-9);
        Self {
            x: (cx - half, cx + half),
            y: (cy - half, cy + half),
            body: String::new(),
        }
    }

    /// Bounding box of `points` padded by `pad` of its extent.
    pub fn fitting(points: &[[f64; 2]], pad: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points
            .iter()
            .filter(|p| p[0].is_finite() && p[1].is_finite())
        {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if lo[0] > hi[0] {
            return Self::new((-1.0, 1.0), (-1.0, 1.0));
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
        Self::new(
            (lo[0] - pad * span, hi[0] + pad * span),
            (lo[1] - pad * span, hi[1] + pad * span),
        )
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let inner = SIZE - 2.0 * MARGIN;
        let u = MARGIN + (p[0] - self.x.0) / (self.x.1 - self.x.0) * inner;
        let v = SIZE - MARGIN - (p[1] - self.y.0) / (self.y.1 - self.y.0) * inner;
        (u, v)
    }

    fn visible(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x.0 && p[0] <= self.x.1 && p[1] >= self.y.0 && p[1] <= self.y.1
    }

    pub fn points(&mut self, pts: &[[f64; 2]], color: &str, radius: f64, opacity: f64) {
        let _ = write!(self.body, "<g fill=\"{color}\" fill-opacity=\"{opacity}\">");
        for &p in pts {
            if !self.visible(p) {
                continue;
            }
            let (u, v) = self.px(p);
            let _ = write!(
                self.body,
                "<circle cx=\"{u:.2}\" cy=\"{v:.2}\" r=\"{radius}\"/>"
            );
        }
        self.body.push_str("</g>\n");
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], color: &str, width: f64) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p[0].is_finite() && p[1].is_finite())
            .map(|&p| {
                let (u, v) = self.px(p);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" stroke-opacity=\"0.6\" points=\"{}\"/>",
            coords.join(" ")
        );
    }

    /// Dashed lines at the region boundaries `+-spacing/2` on both axes.
    pub fn region_lines(&mut self, spacing: f64) {
        for b in [-spacing / 2.0, spacing / 2.0] {
            for (a, c) in [
                ([b, self.y.0], [b, self.y.1]),
                ([self.x.0, b], [self.x.1, b]),
            ] {
                let (u1, v1) = self.px(a);
                let (u2, v2) = self.px(c);
                let _ = writeln!(
                    self.body,
                    "<line x1=\"{u1:.2}\" y1=\"{v1:.2}\" x2=\"{u2:.2}\" y2=\"{v2:.2}\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>"
                );
            }
        }
    }

    pub fn title(&mut self, text: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{MARGIN}\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
            escape(text)
        );
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_visible_points_only() {
        let mut p = Plot::new((0.0, 1.0), (0.0, 1.0));
        p.points(&[[0.5, 0.5], [5.0, 5.0]], "black", 1.0, 1.0);
        p.title("a < b");
        let svg = p.render();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn y_axis_points_up() {
        let p = Plot::new((0.0, 1.0), (0.0, 1.0));
        assert!(p.px([0.0, 1.0]).1 < p.px([0.0, 0.0]).1);
    }
}
