//! Static SVG charts. Every data mark carries class `mark` and its value in
//! `data-*` attributes, so a figure can be checked against its CSV.

use std::fmt::Write as _;

const W: f64 = 720.0;
const PANEL_H: f64 = 240.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    /// Maps `[lo, hi]` onto pixels `[a, b]`; a degenerate domain is padded by one unit.
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        Scale { lo, hi, a, b }
    }

    fn px(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn extent<I: IntoIterator<Item = f64>>(values: I, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = if include_zero { (0.0, 0.0) } else { (f64::INFINITY, f64::NEG_INFINITY) };
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

fn header(s: &mut String, height: f64, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
}

fn y_axis(s: &mut String, y: &Scale, x0: f64, label: &str) {
    let _ = writeln!(s, r##"<line x1="{x0}" y1="{:.2}" x2="{x0}" y2="{:.2}" stroke="#333"/>"##, y.px(y.lo), y.px(y.hi));
    for k in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            y.px(v) + 4.0,
            tick(v)
        );
    }
    let mid = (y.px(y.lo) + y.px(y.hi)) / 2.0;
    let _ = writeln!(
        s,
        r#"<text x="14" y="{mid:.2}" transform="rotate(-90 14 {mid:.2})" text-anchor="middle">{}</text>"#,
        esc(label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{v:.2e}")
    } else {
        format!("{v:.1}")
    }
}

/// One bar per `(label, value)`.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let h = TOP + PANEL_H + BOTTOM;
    let mut s = String::new();
    header(&mut s, h, title);
    let (lo, hi) = extent(bars.iter().map(|b| b.1), true);
    let y = Scale::new(lo, hi, TOP + PANEL_H, TOP);
    y_axis(&mut s, &y, LEFT, y_label);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    let zero = y.px(0.0);
    let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#333"/>"##, W - RIGHT);
    let every = bars.len().div_ceil(24).max(1);
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.1;
        let top = y.px(v.max(0.0));
        let height = (y.px(v.min(0.0)) - top).abs();
        let color = if *v < 0.0 { PALETTE[3] } else { PALETTE[0] };
        let _ = writeln!(
            s,
            r#"<rect class="mark" data-label="{}" data-value="{v:.4}" x="{x:.2}" y="{top:.2}" width="{:.2}" height="{height:.2}" fill="{color}"/>"#,
            esc(label),
            slot * 0.8
        );
        if i % every == 0 {
            let lx = x + slot * 0.4;
            let ly = TOP + PANEL_H + 14.0;
            let _ = writeln!(
                s,
                r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="end" transform="rotate(-40 {lx:.2} {ly:.2})">{}</text>"#,
                esc(label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Vertically stacked scatter panels sharing one x range.
pub fn scatter_panels(title: &str, x_label: &str, y_label: &str, x_range: (f64, f64), panels: &[(String, Vec<(f64, f64)>)]) -> String {
    let h = TOP + panels.len().max(1) as f64 * (PANEL_H + BOTTOM);
    let mut s = String::new();
    header(&mut s, h, title);
    let x = Scale::new(x_range.0, x_range.1, LEFT + 10.0, W - RIGHT - 10.0);
    for (k, (name, pts)) in panels.iter().enumerate() {
        let top = TOP + k as f64 * (PANEL_H + BOTTOM);
        let (lo, hi) = extent(pts.iter().map(|p| p.1), true);
        let y = Scale::new(lo, hi, top + PANEL_H, top + 20.0);
        y_axis(&mut s, &y, LEFT, y_label);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#, LEFT + 6.0, top + 12.0, esc(name));
        let base = top + PANEL_H;
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="#333"/>"##, W - RIGHT);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, W / 2.0, base + 30.0, esc(x_label));
        let color = PALETTE[k % PALETTE.len()];
        for &(px, py) in pts {
            let _ = writeln!(
                s,
                r#"<circle class="mark" data-panel="{}" data-x="{px}" data-y="{py:.4}" cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.5"/>"#,
                esc(name),
                x.px(px),
                y.px(py)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One stacked bar per category; `values[i][j]` is series `j` of category `i`.
pub fn stacked_bars(title: &str, y_label: &str, categories: &[String], series: &[&str], values: &[Vec<f64>]) -> String {
    let h = TOP + PANEL_H + BOTTOM + 20.0;
    let mut s = String::new();
    header(&mut s, h, title);
    let (lo, hi) = extent(values.iter().map(|v| v.iter().sum::<f64>()), true);
    let y = Scale::new(lo, hi, TOP + PANEL_H, TOP);
    y_axis(&mut s, &y, LEFT, y_label);
    let slot = (W - LEFT - RIGHT) / categories.len().max(1) as f64;
    for (i, cat) in categories.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let mut acc = 0.0;
        for (j, name) in series.iter().enumerate() {
            let v = values[i][j];
            let (y0, y1) = (y.px(acc), y.px(acc + v));
            acc += v;
            let _ = writeln!(
                s,
                r#"<rect class="mark" data-label="{}" data-series="{name}" data-value="{v:.4}" x="{x:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                esc(cat),
                slot * 0.7,
                (y0 - y1).abs(),
                PALETTE[j % PALETTE.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            TOP + PANEL_H + 14.0,
            esc(cat)
        );
    }
    for (j, name) in series.iter().enumerate() {
        let lx = LEFT + 150.0 * j as f64;
        let ly = TOP + PANEL_H + 40.0;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{:.2}" width="10" height="10" fill="{}"/>"#, ly - 9.0, PALETTE[j % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.2}">{name}</text>"#, lx + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Number of data marks in an SVG produced here.
pub fn count_marks(svg: &str) -> usize {
    svg.matches(r#"class="mark""#).count()
}
