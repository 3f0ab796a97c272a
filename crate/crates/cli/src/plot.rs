//! Minimal SVG line plots: axes, labels and one polyline per series.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.0e}")
    } else {
        format!("{v:.3}")
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts = || {
            self.series
                .iter()
                .flat_map(|s| s.points.iter())
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0))
        };
        let (x0, x1) = bounds(pts().map(|p| tx(p.0)));
        let (y0, y1) = bounds(pts().map(|p| p.1));
        let sx = |x: f64| MARGIN + (tx(x) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, MARGIN / 2.0, esc(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(&self.y_label)
        );
        let x_lab = |v: f64| if self.log_x { 10f64.powf(v) } else { v };
        for (v, anchor) in [(x0, "start"), (x1, "end")] {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#, MARGIN + (v - x0) / (x1 - x0) * (W - 2.0 * MARGIN), H - MARGIN + 16.0, tick(x_lab(v)));
        }
        for v in [y0, y1] {
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, sy(v) + 4.0, tick(v));
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            let ly = MARGIN + 16.0 + 16.0 * k as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - MARGIN - 8.0 - 100.0, esc(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let p = Plot {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            series: vec![
                Series { name: "one".into(), points: vec![(1e-3, 0.0), (1.0, 1.0), (1e3, 2.0)] },
                Series { name: "two".into(), points: vec![(1e-3, 2.0), (1e3, 0.0)] },
            ],
        };
        let svg = p.render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn flat_series_does_not_divide_by_zero() {
        let p = Plot {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            log_x: false,
            series: vec![Series { name: "c".into(), points: vec![(0.0, 1.0), (1.0, 1.0)] }],
        };
        assert!(!p.render().contains("NaN"));
    }
}
