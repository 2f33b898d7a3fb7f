//! Deterministic SVG charts for the report: adversary learning curve,
//! per-policy collision counts, and minimum-headway curves. Everything is
//! emitted with fixed precision and fixed ordering, so identical inputs
//! produce identical bytes.

use std::fmt::Write as _;

use arc_core::a2c::AdvEpisodeLog;

use crate::logs::AdvRow;

// ===== running mean ======================================================

/// Trailing mean over up to `window` samples; the prefix (fewer than
/// `window` samples seen) averages what is available.
pub fn running_mean(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "running mean needs a positive window");
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i.min(window - 1) + 1) as f64);
    }
    out
}

// ===== chart scaffolding ==================================================

const W: f64 = 640.0;
const H: f64 = 400.0;
const ML: f64 = 66.0;
const MR: f64 = 16.0;
const MT: f64 = 30.0;
const MB: f64 = 48.0;

/// Maps data coordinates onto the pixel frame.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    /// Data ranges padded so strokes stay inside the frame; degenerate
    /// ranges widen by one unit.
    fn new(mut x0: f64, mut x1: f64, mut y0: f64, mut y1: f64) -> Frame {
        if x1 <= x0 {
            x0 -= 0.5;
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 = y0 + 1.0;
        }
        let pad = (y1 - y0) * 0.05;
        Frame { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn sx(&self, x: f64) -> f64 {
        ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn sy(&self, y: f64) -> f64 {
        H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        (ML + W - MR) / 2.0
    );
}

/// Axis lines, five ticks per axis, and axis captions.
fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        "<path d=\"M {ml:.2} {mt:.2} L {ml:.2} {hb:.2} L {wr:.2} {hb:.2}\" \
         fill=\"none\" stroke=\"black\"/>\n",
        ml = ML,
        mt = MT,
        hb = H - MB,
        wr = W - MR
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let x = f.x0 + t * (f.x1 - f.x0);
        let y = f.y0 + t * (f.y1 - f.y0);
        let sx = f.sx(x);
        let sy = f.sy(y);
        let _ = write!(
            out,
            "<line x1=\"{sx:.2}\" y1=\"{hb:.2}\" x2=\"{sx:.2}\" y2=\"{hb2:.2}\" stroke=\"black\"/>\n\
             <text x=\"{sx:.2}\" y=\"{ty:.2}\" text-anchor=\"middle\">{x:.1}</text>\n\
             <line x1=\"{ml:.2}\" y1=\"{sy:.2}\" x2=\"{ml2:.2}\" y2=\"{sy:.2}\" stroke=\"black\"/>\n\
             <text x=\"{tx:.2}\" y=\"{sy2:.2}\" text-anchor=\"end\">{y:.2}</text>\n",
            hb = H - MB,
            hb2 = H - MB + 5.0,
            ty = H - MB + 18.0,
            ml = ML,
            ml2 = ML - 5.0,
            tx = ML - 8.0,
            sy2 = sy + 4.0
        );
    }
    let _ = write!(
        out,
        "<text x=\"{cx:.2}\" y=\"{cy:.2}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"16\" y=\"{my:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {my:.2})\">{y_label}</text>\n",
        cx = (ML + W - MR) / 2.0,
        cy = H - 10.0,
        my = (MT + H - MB) / 2.0
    );
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], style: &str) {
    if pts.is_empty() {
        return;
    }
    let _ = write!(out, "<polyline fill=\"none\" {style} points=\"");
    for (i, (x, y)) in pts.iter().enumerate() {
        let sep = if i == 0 { "" } else { " " };
        let _ = write!(out, "{sep}{:.2},{:.2}", f.sx(*x), f.sy(*y));
    }
    let _ = write!(out, "\"/>\n");
}

fn finite_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

// ===== figures ============================================================

/// Learning curve of one adversary: raw per-episode mean step reward
/// underlaid in grey, running mean (window 50) on top.
pub fn fig_adversary_reward(log: &[AdvEpisodeLog]) -> Option<String> {
    if log.is_empty() {
        return None;
    }
    let raw: Vec<f64> = log.iter().map(|r| r.mean_step_reward).collect();
    let smooth = running_mean(&raw, 50);
    let (lo, hi) = finite_bounds(raw.iter().copied());
    let f = Frame::new(0.0, (raw.len() - 1) as f64, lo.min(0.0), hi);

    let mut out = String::new();
    svg_open(&mut out, "Adversary mean step reward per episode");
    axes(&mut out, &f, "episode", "mean step reward");
    let pts = |ys: &[f64]| -> Vec<(f64, f64)> {
        ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect()
    };
    polyline(&mut out, &f, &pts(&raw), "stroke=\"#bbbbbb\" stroke-width=\"1\"");
    polyline(&mut out, &f, &pts(&smooth), "stroke=\"#1f77b4\" stroke-width=\"2\"");
    let _ = write!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#1f77b4\">running mean (50)</text>\n</svg>\n",
        ML + 10.0,
        MT + 16.0
    );
    Some(out)
}

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Collision counts from adversarial testing: one marker per run, mean ±
/// std whiskers per policy, and a dashed line at the baseline policy's
/// mean for comparison.
pub fn fig_collisions(rows: &[AdvRow], baseline: Option<&str>) -> Option<String> {
    if rows.is_empty() {
        return None;
    }
    // Group by label in first-appearance order.
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let counts = |label: &str| -> Vec<f64> {
        rows.iter().filter(|r| r.label == label).map(|r| r.collisions as f64).collect()
    };

    let (_, hi) = finite_bounds(rows.iter().map(|r| r.collisions as f64));
    let f = Frame::new(0.0, labels.len() as f64, 0.0, hi.max(1.0));
    let mut out = String::new();
    svg_open(&mut out, "Collisions per adversarial-testing run");
    axes(&mut out, &f, "policy", "collisions");

    for (k, label) in labels.iter().enumerate() {
        let xs = k as f64 + 0.5;
        let ys = counts(label);
        let (mean, std) = mean_std(&ys);
        // Whisker, mean bar, then the run markers.
        let _ = write!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{a:.2}\" x2=\"{x:.2}\" y2=\"{b:.2}\" \
             stroke=\"#d62728\" stroke-width=\"1.5\"/>\n\
             <line x1=\"{x0:.2}\" y1=\"{m:.2}\" x2=\"{x1:.2}\" y2=\"{m:.2}\" \
             stroke=\"#d62728\" stroke-width=\"2.5\"/>\n",
            x = f.sx(xs),
            a = f.sy((mean - std).max(f.y0)),
            b = f.sy((mean + std).min(f.y1)),
            x0 = f.sx(xs) - 14.0,
            x1 = f.sx(xs) + 14.0,
            m = f.sy(mean)
        );
        for (j, y) in ys.iter().enumerate() {
            let _ = write!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>\n",
                f.sx(xs) + (j as f64 - (ys.len() - 1) as f64 / 2.0) * 5.0,
                f.sy(*y)
            );
        }
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{label}</text>\n",
            f.sx(xs),
            H - MB + 32.0
        );
    }

    if let Some(base) = baseline {
        if labels.contains(&base) {
            let (mean, _) = mean_std(&counts(base));
            let _ = write!(
                out,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"#555555\" stroke-dasharray=\"6 4\"/>\n\
                 <text x=\"{:.2}\" y=\"{:.2}\" fill=\"#555555\">{base} mean</text>\n",
                ML,
                W - MR,
                ML + 8.0,
                f.sy(mean) - 5.0,
                y = f.sy(mean)
            );
        }
    }
    out.push_str("</svg>\n");
    Some(out)
}

/// Minimum episode headway during adversarial testing: per-episode mean
/// across runs with a ±std band.
pub fn fig_min_headway(label: &str, curves: &[Vec<(u32, f64)>]) -> Option<String> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    if len == 0 {
        return None;
    }
    let mut means = Vec::with_capacity(len);
    let mut stds = Vec::with_capacity(len);
    for i in 0..len {
        let ys: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
        let (m, s) = mean_std(&ys);
        means.push(m);
        stds.push(s);
    }
    let (lo, hi) = finite_bounds(
        means.iter().zip(&stds).flat_map(|(m, s)| [m - s, m + s]),
    );
    let f = Frame::new(0.0, (len - 1) as f64, lo.min(0.0), hi);

    let mut out = String::new();
    svg_open(&mut out, &format!("Minimum episode headway — {label}"));
    axes(&mut out, &f, "episode", "min t_h [s]");

    // Shaded band: upper edge forward, lower edge reversed.
    let _ = write!(out, "<polygon fill=\"#1f77b4\" fill-opacity=\"0.2\" points=\"");
    for i in 0..len {
        let sep = if i == 0 { "" } else { " " };
        let _ = write!(
            out,
            "{sep}{:.2},{:.2}",
            f.sx(i as f64),
            f.sy(means[i] + stds[i])
        );
    }
    for i in (0..len).rev() {
        let _ = write!(out, " {:.2},{:.2}", f.sx(i as f64), f.sy(means[i] - stds[i]));
    }
    let _ = write!(out, "\"/>\n");

    let pts: Vec<(f64, f64)> =
        means.iter().enumerate().map(|(i, &m)| (i as f64, m)).collect();
    polyline(&mut out, &f, &pts, "stroke=\"#1f77b4\" stroke-width=\"2\"");
    let _ = write!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#1f77b4\">mean ± std over {} runs</text>\n</svg>\n",
        ML + 10.0,
        MT + 16.0,
        curves.len()
    );
    Some(out)
}

// ===== tests =============================================================
