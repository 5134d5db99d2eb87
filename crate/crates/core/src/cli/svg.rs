//! Minimal static SVG charts: line charts with optional dashed reference
//! lines, scatter plots and grouped bars.

use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Short numeric label.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// A value axis mapping data to pixels.
#[derive(Debug, Clone)]
pub struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    ticks: Vec<f64>,
}

impl Scale {
    pub fn linear(lo: f64, hi: f64) -> Self {
        let (mut lo, mut hi) = (lo, hi);
        if !(hi > lo) {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        let step = nice_step(hi - lo);
        let lo = (lo / step).floor() * step;
        let hi = (hi / step).ceil() * step;
        let n = ((hi - lo) / step).round() as usize;
        let ticks = (0..=n).map(|i| lo + i as f64 * step).collect();
        Self { lo, hi, log: false, ticks }
    }

    /// Decade axis; both bounds must be positive.
    pub fn log(lo: f64, hi: f64) -> Self {
        let a = lo.log10().floor() as i32;
        let mut b = hi.log10().ceil() as i32;
        if b == a {
            b += 1;
        }
        let ticks = (a..=b).map(|e| 10f64.powi(e)).collect();
        Self {
            lo: 10f64.powi(a),
            hi: 10f64.powi(b),
            log: true,
            ticks,
        }
    }

    pub fn is_log(&self) -> bool {
        self.log
    }

    /// Position in `[0, 1]`.
    fn unit(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Horizontal dashed reference line.
#[derive(Debug, Clone)]
pub struct Reference {
    pub name: String,
    pub y: f64,
    /// Index into the palette, to match a series.
    pub color: usize,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Category labels at x = 0, 1, ...; numeric x axis when `None`.
    pub x_categories: Option<Vec<String>>,
    pub series: Vec<Series>,
    pub references: Vec<Reference>,
    /// Use a log y axis when the data span at least this ratio.
    pub log_y_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 48.0;

struct Plot {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Plot {
    fn of(f: Frame) -> Self {
        Self {
            left: f.x + MARGIN_L,
            top: f.y + MARGIN_T,
            width: f.w - MARGIN_L - MARGIN_R,
            height: f.h - MARGIN_T - MARGIN_B,
        }
    }

    fn px(&self, s: &Scale, v: f64) -> f64 {
        self.left + s.unit(v) * self.width
    }

    fn py(&self, s: &Scale, v: f64) -> f64 {
        self.top + (1.0 - s.unit(v)) * self.height
    }
}

#[allow(clippy::too_many_arguments)]
fn axes(out: &mut String, p: &Plot, xs: &Scale, ys: &Scale, title: &str, x_label: &str, y_label: &str, x_categories: Option<&[String]>) {
    let bottom = p.top + p.height;
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        p.left, p.top, p.width, p.height
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        p.left + p.width / 2.0,
        p.top - 12.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        p.left + p.width / 2.0,
        bottom + 38.0,
        escape(x_label)
    );
    let (lx, ly) = (p.left - 48.0, p.top + p.height / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
        escape(y_label)
    );
    for &t in &ys.ticks {
        let y = p.py(ys, t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##,
            p.left,
            p.left + p.width,
            p.left - 4.0,
            y + 3.0,
            fmt_tick(t)
        );
    }
    match x_categories {
        Some(cats) => {
            for (i, c) in cats.iter().enumerate() {
                let x = p.px(xs, i as f64);
                let _ = writeln!(
                    out,
                    r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                    bottom + 14.0,
                    escape(c)
                );
            }
        }
        None => {
            for &t in &xs.ticks {
                let x = p.px(xs, t);
                let _ = writeln!(
                    out,
                    r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                    bottom + 14.0,
                    fmt_tick(t)
                );
            }
        }
    }
}

fn legend(out: &mut String, p: &Plot, entries: &[(String, usize, bool)]) {
    let x = p.left + p.width + 12.0;
    for (i, (name, c, dashed)) in entries.iter().enumerate() {
        let y = p.top + 8.0 + 16.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            x + 18.0,
            color(*c),
            x + 22.0,
            y + 3.0,
            escape(name)
        );
    }
}

impl LineChart {
    pub fn y_scale(&self) -> Scale {
        let ys: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(self.references.iter().map(|r| r.y))
            .filter(|v| v.is_finite())
            .collect();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if ys.is_empty() {
            return Scale::linear(0.0, 1.0);
        }
        match self.log_y_ratio {
            Some(ratio) if lo > 0.0 && hi / lo >= ratio => Scale::log(lo, hi),
            _ => Scale::linear(lo, hi),
        }
    }

    fn x_scale(&self) -> Scale {
        if let Some(c) = &self.x_categories {
            let n = c.len().max(1) as f64;
            return Scale {
                lo: -0.5,
                hi: n - 0.5,
                log: false,
                ticks: Vec::new(),
            };
        }
        let xs: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if xs.is_empty() {
            Scale::linear(0.0, 1.0)
        } else {
            Scale::linear(lo, hi)
        }
    }

    /// One `<polyline>` per series; references are dashed `<line>`s.
    pub fn render(&self, frame: Frame) -> String {
        let p = Plot::of(frame);
        let (xs, ys) = (self.x_scale(), self.y_scale());
        let mut out = String::new();
        let y_label = if ys.is_log() {
            format!("{} (log)", self.y_label)
        } else {
            self.y_label.clone()
        };
        axes(&mut out, &p, &xs, &ys, &self.title, &self.x_label, &y_label, self.x_categories.as_deref());
        let mut entries = Vec::new();
        for r in &self.references {
            let y = p.py(&ys, r.y);
            let _ = writeln!(
                out,
                r#"<line class="reference" x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="1.5" stroke-dasharray="5,3"/>"#,
                p.left,
                p.left + p.width,
                color(r.color)
            );
            entries.push((r.name.clone(), r.color, true));
        }
        for (i, s) in self.series.iter().enumerate() {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!ys.is_log() || *y > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", p.px(&xs, x), p.py(&ys, y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline class="series" data-series="{}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
                escape(&s.name),
                color(i),
                pts.join(" ")
            );
            for pt in &pts {
                let (cx, cy) = pt.split_once(',').expect("formatted pair");
                let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{}"/>"#, color(i));
            }
            entries.push((s.name.clone(), i, false));
        }
        legend(&mut out, &p, &entries);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Scatter {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub groups: Vec<Series>,
}

impl Scatter {
    pub fn render(&self, frame: Frame) -> String {
        let p = Plot::of(frame);
        let all: Vec<(f64, f64)> = self
            .groups
            .iter()
            .flat_map(|g| g.points.iter().copied())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let bound = |f: fn(&(f64, f64)) -> f64| {
            let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            if all.is_empty() {
                Scale::linear(0.0, 1.0)
            } else {
                Scale::linear(lo, hi)
            }
        };
        let (xs, ys) = (bound(|p| p.0), bound(|p| p.1));
        let mut out = String::new();
        axes(&mut out, &p, &xs, &ys, &self.title, &self.x_label, &self.y_label, None);
        let mut entries = Vec::new();
        for (i, g) in self.groups.iter().enumerate() {
            let _ = writeln!(out, r#"<g class="group" data-series="{}">"#, escape(&g.name));
            for &(x, y) in g.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"/>"#,
                    p.px(&xs, x),
                    p.py(&ys, y),
                    color(i)
                );
            }
            out.push_str("</g>\n");
            entries.push((g.name.clone(), i, false));
        }
        legend(&mut out, &p, &entries);
        out
    }
}

/// Grouped bars: one group per category, one bar per series.
#[derive(Debug, Clone)]
pub struct Bars {
    pub title: String,
    pub y_label: String,
    pub categories: Vec<String>,
    /// `(series name, one value per category)`
    pub series: Vec<(String, Vec<f64>)>,
}

impl Bars {
    pub fn render(&self, frame: Frame) -> String {
        let p = Plot::of(frame);
        let hi = self
            .series
            .iter()
            .flat_map(|s| s.1.iter().copied())
            .fold(0.0f64, f64::max);
        let ys = Scale::linear(0.0, hi.max(1.0));
        let n = self.categories.len().max(1) as f64;
        let xs = Scale {
            lo: -0.5,
            hi: n - 0.5,
            log: false,
            ticks: Vec::new(),
        };
        let mut out = String::new();
        axes(&mut out, &p, &xs, &ys, &self.title, "", &self.y_label, Some(&self.categories));
        let slot = p.width / n;
        let bw = 0.8 * slot / self.series.len().max(1) as f64;
        let mut entries = Vec::new();
        for (si, (name, vals)) in self.series.iter().enumerate() {
            for (ci, &v) in vals.iter().enumerate() {
                let x = p.left + slot * ci as f64 + 0.1 * slot + bw * si as f64;
                let y = p.py(&ys, v);
                let _ = writeln!(
                    out,
                    r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                    (p.top + p.height - y).max(0.0),
                    color(si)
                );
            }
            entries.push((name.clone(), si, false));
        }
        legend(&mut out, &p, &entries);
        out
    }
}

/// Wraps rendered panels in a standalone SVG document.
pub fn document(width: f64, height: f64, panels: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for p in panels {
        out.push_str("<g>\n");
        out.push_str(p);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_axis_only_for_wide_ranges() {
        let mut c = LineChart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x_categories: None,
            series: vec![Series {
                name: "a".into(),
                points: vec![(0.0, 0.01), (1.0, 0.5)],
            }],
            references: vec![],
            log_y_ratio: Some(100.0),
        };
        assert!(!c.y_scale().is_log());
        c.series[0].points.push((2.0, 1.0));
        assert!(c.y_scale().is_log());
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn linear_ticks_cover_range() {
        let s = Scale::linear(0.13, 0.87);
        assert!(s.ticks.first().unwrap() <= &0.13 && s.ticks.last().unwrap() >= &0.87);
        let flat = Scale::linear(2.0, 2.0);
        assert!(flat.hi > flat.lo);
    }
}
