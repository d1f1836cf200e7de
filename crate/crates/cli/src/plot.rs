//! Static SVG figures drawn directly from geometry.

use std::fmt::Write;

use hitl_core::reward::{HighPerfRegion, RewardSurface};
use hitl_core::supervisor::TrialRecord;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;

/// Band edges for the surface contour fill, lowest first.
const BANDS: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
const BAND_FILL: [&str; 7] = [
    "#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6", "#3182bd", "#08519c",
];

/// Affine map from data to pixel coordinates.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }

    fn scale_x(&self) -> f64 {
        (WIDTH - LEFT - RIGHT) / (self.x1 - self.x0)
    }

    fn scale_y(&self) -> f64 {
        (HEIGHT - TOP - BOTTOM) / (self.y1 - self.y0)
    }
}

fn open(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn close(svg: &mut String, stamp: &str) {
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="9" fill="#777">{}</text>"##,
        WIDTH - 4.0,
        HEIGHT - 4.0,
        escape(stamp)
    );
    svg.push_str("</svg>\n");
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str, ticks: usize) {
    let (l, r) = (f.px(f.x0), f.px(f.x1));
    let (b, t) = (f.py(f.y0), f.py(f.y1));
    let _ = writeln!(
        svg,
        r#"<path d="M{l:.2},{t:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=ticks {
        let u = k as f64 / ticks as f64;
        let x = f.x0 + u * (f.x1 - f.x0);
        let y = f.y0 + u * (f.y1 - f.y0);
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{b:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            b + 4.0,
            b + 18.0,
            tick_label(x)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{l:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            l - 4.0,
            l - 6.0,
            py + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 16.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn band(v: f64) -> usize {
    BANDS.iter().take_while(|&&edge| v >= edge).count()
}

/// Gain trajectory over the banded reward surface, with the high-performance
/// region, its twice-radius containment circle and the center.
pub fn gain_trajectory(
    surface: &RewardSurface,
    region: &HighPerfRegion,
    records: &[TrialRecord],
    stamp: &str,
) -> String {
    let g = &surface.grid;
    let (ge, gi) = (g.gamma_e, g.gamma_i);
    let f = Frame::new(gi.min, gi.max, ge.min, ge.max);
    let mut svg = String::new();
    open(&mut svg, "gain trajectory over the reward surface");

    // Cells are centred on grid nodes and clipped to the axes.
    let (hx, hy) = (gi.step() / 2.0, ge.step() / 2.0);
    for ie in 0..ge.n {
        for ii in 0..gi.n {
            let (x, y) = (gi.node(ii), ge.node(ie));
            let (xa, xb) = ((x - hx).max(gi.min), (x + hx).min(gi.max));
            let (ya, yb) = ((y - hy).max(ge.min), (y + hy).min(ge.max));
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                f.px(xa),
                f.py(yb),
                (xb - xa) * f.scale_x(),
                (yb - ya) * f.scale_y(),
                BAND_FILL[band(surface.value(ie, ii))]
            );
        }
    }
    for &(ie, ii) in &region.members {
        let (x, y) = (gi.node(ii), ge.node(ie));
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="#fdae6b"/>"##,
            f.px(x),
            f.py(y)
        );
    }
    let c = region.center;
    let reach = 2.0 * region.effective_radius;
    let _ = writeln!(
        svg,
        r##"<ellipse cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" fill="none" stroke="#e6550d" stroke-dasharray="6 4"/>"##,
        f.px(c.gamma_i),
        f.py(c.gamma_e),
        reach * f.scale_x(),
        reach * f.scale_y()
    );

    if !records.is_empty() {
        let mut d = String::new();
        let points = records
            .iter()
            .map(|r| r.gain_before)
            .chain(records.last().map(|r| r.gain_after));
        for (k, p) in points.enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2} ",
                if k == 0 { 'M' } else { 'L' },
                f.px(p.gamma_i),
                f.py(p.gamma_e)
            );
        }
        let _ = writeln!(
            svg,
            r##"<path d="{}" fill="none" stroke="#222" stroke-width="1" stroke-opacity="0.8"/>"##,
            d.trim_end()
        );
    }
    let (cx, cy) = (f.px(c.gamma_i), f.py(c.gamma_e));
    let _ = writeln!(
        svg,
        r##"<path d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}" stroke="#a50f15" stroke-width="2"/>"##,
        cx - 6.0,
        cy - 6.0,
        cx + 6.0,
        cy + 6.0,
        cx - 6.0,
        cy + 6.0,
        cx + 6.0,
        cy - 6.0
    );
    axes(&mut svg, &f, "inhibitory gain gamma_I", "excitatory gain gamma_E", 5);
    legend(&mut svg);
    close(&mut svg, stamp);
    svg
}

fn legend(svg: &mut String) {
    let x = WIDTH - RIGHT - 110.0;
    for (k, fill) in BAND_FILL.iter().enumerate().rev() {
        let y = TOP + 4.0 + (BAND_FILL.len() - 1 - k) as f64 * 14.0;
        let label = match k {
            0 => format!("< {}", BANDS[0]),
            k => format!(">= {}", BANDS[k - 1]),
        };
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{y:.1}" width="12" height="12" fill="{fill}" stroke="black" stroke-width="0.5"/><text x="{:.1}" y="{:.1}" font-size="10">{label}</text>"#,
            x + 16.0,
            y + 10.0
        );
    }
}

/// A per-task series with an optional horizontal reference line.
pub fn series(title: &str, values: &[f64], reference: Option<f64>, stamp: &str) -> String {
    let n = values.len().max(1);
    let lo = values
        .iter()
        .copied()
        .chain(reference)
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let hi = values
        .iter()
        .copied()
        .chain(reference)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let f = Frame::new(
        0.0,
        (n - 1).max(1) as f64,
        lo.clamp(0.0, 1.0).min(hi),
        hi.clamp(0.0, 1.0).max(lo),
    );
    let mut svg = String::new();
    open(&mut svg, title);
    if let Some(r) = reference {
        let y = f.py(r);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e6550d" stroke-dasharray="6 4"/>"##,
            f.px(f.x0),
            f.px(f.x1)
        );
    }
    if !values.is_empty() {
        let mut d = String::new();
        for (k, v) in values.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2} ",
                if k == 0 { 'M' } else { 'L' },
                f.px(k as f64),
                f.py(*v)
            );
        }
        let _ = writeln!(
            svg,
            r##"<path d="{}" fill="none" stroke="#3182bd" stroke-width="1.2"/>"##,
            d.trim_end()
        );
    }
    axes(&mut svg, &f, "task", title, 5);
    close(&mut svg, stamp);
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_edges() {
        assert_eq!(band(0.1), 0);
        assert_eq!(band(0.5), 1);
        assert_eq!(band(0.93), 5);
        assert_eq!(band(1.0), 6);
    }

    #[test]
    fn series_contains_reference_and_path() {
        let svg = series("p", &[0.6, 0.7, 0.65], Some(0.5), "seed 1");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert!(svg.contains("M64.00,"));
        assert!(svg.contains("seed 1"));
    }

    #[test]
    fn empty_series_is_still_a_document() {
        let svg = series("p", &[], None, "");
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn frame_maps_corners() {
        let f = Frame::new(0.0, 1.0, 0.0, 2.0);
        assert_eq!(f.px(0.0), LEFT);
        assert_eq!(f.px(1.0), WIDTH - RIGHT);
        assert_eq!(f.py(0.0), HEIGHT - BOTTOM);
        assert_eq!(f.py(2.0), TOP);
    }

    #[test]
    fn labels_trim_zeros() {
        assert_eq!(tick_label(0.5), "0.5");
        assert_eq!(tick_label(2.0), "2");
        assert_eq!(tick_label(-0.0), "0");
    }
}
