//! Self-contained log-log SVG charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// A straight line in log-log space, `log10 y = slope * log10 x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    pub slope: f64,
    pub intercept: f64,
}

impl PowerLaw {
    /// Least-squares line through the given slope: the intercept is the mean residual.
    pub fn through(points: &[(f64, f64)], slope: f64) -> Option<Self> {
        let pts: Vec<_> = positive(points).collect();
        if pts.is_empty() || !slope.is_finite() {
            return None;
        }
        let n = pts.len() as f64;
        let intercept = pts.iter().map(|(x, y)| y.log10() - slope * x.log10()).sum::<f64>() / n;
        Some(Self { slope, intercept })
    }

    pub fn eval(&self, x: f64) -> f64 {
        10f64.powf(self.slope * x.log10() + self.intercept)
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Join the points with a polyline.
    pub connect: bool,
    /// Draw this fitted line as a polyline over the data's x range.
    pub fit: Option<PowerLaw>,
}

fn positive(points: &[(f64, f64)]) -> impl Iterator<Item = (f64, f64)> + '_ {
    points
        .iter()
        .copied()
        .filter(|&(x, y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
}

/// Decade bounds `[10^lo, 10^hi]` enclosing `values`.
fn decades(values: impl Iterator<Item = f64>) -> (i32, i32) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !lo.is_finite() {
        return (0, 1);
    }
    let (lo, mut hi) = (lo.floor() as i32, hi.ceil() as i32);
    if hi <= lo {
        hi = lo + 1;
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn loglog(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (x0, x1) = decades(series.iter().flat_map(|s| positive(&s.points).map(|p| p.0)));
    let (y0, y1) = decades(series.iter().flat_map(|s| positive(&s.points).map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x0 as f64) / (x1 - x0) as f64 * pw;
    let sy = |y: f64| TOP + ph - (y.log10() - y0 as f64) / (y1 - y0) as f64 * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" data-xmin="1e{x0}" data-xmax="1e{x1}" data-ymin="1e{y0}" data-ymax="1e{y1}">"#
    );
    for d in x0..=x1 {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"##,
            TOP + ph,
            TOP + ph + 18.0
        );
    }
    for d in y0..=y1 {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );
    s.push_str("</g>\n");

    for (n, ser) in series.iter().enumerate() {
        let color = COLORS[n % COLORS.len()];
        let pts: Vec<_> = positive(&ser.points).collect();
        let _ = writeln!(s, r#"<g class="series" data-name="{}">"#, escape(&ser.name));
        for &(x, y) in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-x="{x:e}" data-y="{y:e}"/>"#,
                sx(x),
                sy(y)
            );
        }
        if ser.connect && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="data" points="{}" fill="none" stroke="{color}"/>"#,
                path.join(" ")
            );
        }
        let mut label = ser.name.clone();
        if let (Some(fit), false) = (ser.fit, pts.is_empty()) {
            let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(
                s,
                r#"<polyline class="fit" data-slope="{:e}" points="{:.2},{:.2} {:.2},{:.2}" fill="none" stroke="{color}" stroke-dasharray="6 3"/>"#,
                fit.slope,
                sx(lo),
                sy(fit.eval(lo)),
                sx(hi),
                sy(fit.eval(hi))
            );
            label = format!("{label} (slope {:.2})", fit.slope);
        }
        let ly = TOP + 14.0 + 18.0 * n as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 9.0,
            lx + 14.0,
            escape(&label)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
