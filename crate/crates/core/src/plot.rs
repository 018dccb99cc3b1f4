//! Minimal SVG line plots: axes, ticks, a legend and one polyline per series.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// Non-finite y values leave a gap.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Categorical tick labels at x = 0, 1, ...; numeric ticks when empty.
    pub x_ticks: Vec<String>,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = if self.x_ticks.is_empty() {
            range(pts().map(|p| p.0))
        } else {
            (0.0, (self.x_ticks.len().max(2) - 1) as f64)
        };
        let (y0, y1) = range(pts().map(|p| p.1));
        let y_pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - y_pad, y1 + y_pad);
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_L + pw / 2.0, escape(&self.title));
        let (bx, by) = (MARGIN_L, MARGIN_T + ph);
        let _ = writeln!(o, r#"<path d="M{bx},{MARGIN_T} V{by} H{}" stroke="black" fill="none"/>"#, MARGIN_L + pw);

        let x_ticks: Vec<(f64, String)> = if self.x_ticks.is_empty() {
            (0..=4).map(|i| x0 + (x1 - x0) * i as f64 / 4.0).map(|x| (x, format!("{x:.3}"))).collect()
        } else {
            self.x_ticks.iter().enumerate().map(|(i, l)| (i as f64, l.clone())).collect()
        };
        for (x, label) in x_ticks {
            let px = sx(x);
            let _ = writeln!(o, r#"<line x1="{px:.1}" y1="{by}" x2="{px:.1}" y2="{}" stroke="black"/>"#, by + 5.0);
            let _ = writeln!(o, r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#, by + 18.0, escape(&label));
        }
        for i in 0..=4 {
            let y = y0 + (y1 - y0) * f64::from(i) / 4.0;
            let py = sy(y);
            let _ = writeln!(o, r#"<line x1="{}" y1="{py:.1}" x2="{bx}" y2="{py:.1}" stroke="black"/>"#, bx - 5.0);
            let _ = writeln!(o, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.3}</text>"#, bx - 8.0, py + 4.0);
        }
        let _ = writeln!(o, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN_L + pw / 2.0, HEIGHT - 15.0, escape(&self.x_label));
        let _ = writeln!(
            o,
            r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );

        for (k, s) in self.series.iter().enumerate() {
            let colour = COLOURS[k % COLOURS.len()];
            let mut run: Vec<String> = Vec::new();
            let flush = |run: &mut Vec<String>, o: &mut String| {
                if !run.is_empty() {
                    let _ = writeln!(o, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, run.join(" "));
                    run.clear();
                }
            };
            for &(x, y) in &s.points {
                if y.is_finite() && x.is_finite() {
                    let _ = writeln!(o, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#, sx(x), sy(y));
                    run.push(format!("{:.1},{:.1}", sx(x), sy(y)));
                } else {
                    flush(&mut run, &mut o);
                }
            }
            flush(&mut run, &mut o);
            let ly = MARGIN_T + 10.0 + 20.0 * k as f64;
            let lx = MARGIN_L + pw + 15.0;
            let _ = writeln!(o, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(o, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
        }
        o.push_str("</svg>\n");
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot() -> LinePlot {
        LinePlot {
            title: "acc <vs> m".into(),
            x_label: "classes".into(),
            y_label: "pixel accuracy".into(),
            x_ticks: vec!["2".into(), "4".into(), "8".into()],
            series: vec![
                Series { name: "softmax".into(), points: vec![(0.0, 0.9), (1.0, 0.8), (2.0, 0.7)] },
                Series { name: "log".into(), points: vec![(0.0, 0.85), (1.0, f64::NAN), (2.0, 0.6)] },
            ],
        }
    }

    #[test]
    fn one_polyline_per_unbroken_run() {
        let svg = plot().to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.contains("acc &lt;vs&gt; m"));
        assert!(svg.contains(">softmax<") && svg.contains(">log<"));
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan() {
        let p = LinePlot { series: vec![Series { name: "flat".into(), points: vec![(1.0, 2.0)] }], ..Default::default() };
        assert!(!p.to_svg().contains("NaN"));
        assert!(!LinePlot::default().to_svg().contains("NaN"));
    }
}
