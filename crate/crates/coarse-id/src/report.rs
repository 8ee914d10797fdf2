//! Self-contained SVG plots of experiment results.

use crate::experiment::{EstimationRow, ResultRow};
use anyhow::{ensure, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Median and quartiles over the extended reals. `nan` entries (no
/// controller) are dropped, `+inf` entries count as large values.
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        if lo == hi || v[hi] == v[lo] {
            v[lo]
        } else if v[hi].is_infinite() {
            // Interpolating toward infinity is meaningless; round to the rank.
            if pos - lo as f64 >= 0.5 {
                v[hi]
            } else {
                v[lo]
            }
        } else {
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        }
    };
    Some((at(0.25), at(0.5), at(0.75)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub q1: Vec<f64>,
    pub median: Vec<f64>,
    pub q3: Vec<f64>,
}

impl Series {
    /// Groups `(x, value)` pairs by `x` and summarizes each group.
    pub fn from_groups(label: &str, groups: &BTreeMap<usize, Vec<f64>>) -> Self {
        let mut s = Series { label: label.to_string(), x: vec![], q1: vec![], median: vec![], q3: vec![] };
        for (&x, vals) in groups {
            if let Some((a, m, b)) = quartiles(vals) {
                s.x.push(x as f64);
                s.q1.push(a);
                s.median.push(m);
                s.q3.push(b);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn usable(v: f64, log: bool) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

fn tr(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

fn range(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|&v| usable(v, log)).map(|v| tr(v, log)) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64, log: bool) -> String {
    let x = if log { 10f64.powf(v) } else { v };
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-2) {
        format!("{x:.1e}")
    } else {
        format!("{}", (x * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn to_svg(&self) -> String {
        let (x0, x1) = range(self.series.iter().flat_map(|s| s.x.iter().copied()), self.log_x);
        let (y0, y1) = range(self.series.iter().flat_map(|s| s.q1.iter().chain(&s.median).chain(&s.q3).copied()), self.log_y);
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |v: f64| LEFT + (tr(v, self.log_x) - x0) / (x1 - x0) * pw;
        let sy = |v: f64| TOP + ph - (tr(v, self.log_y) - y0) / (y1 - y0) * ph;
        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(o, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let px = LEFT + f * pw;
            let py = TOP + ph - f * ph;
            let _ = writeln!(o, r##"<line x1="{px}" y1="{TOP}" x2="{px}" y2="{}" stroke="#ddd"/>"##, TOP + ph);
            let _ = writeln!(o, r##"<line x1="{LEFT}" y1="{py}" x2="{}" y2="{py}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(o, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, tick_label(xv, self.log_x));
            let _ = writeln!(o, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, tick_label(yv, self.log_y));
        }
        let _ = writeln!(o, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(
            o,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let idx: Vec<usize> = (0..s.x.len())
                .filter(|&i| usable(s.x[i], self.log_x) && usable(s.q1[i], self.log_y) && usable(s.q3[i], self.log_y))
                .collect();
            if idx.len() > 1 {
                let mut pts: Vec<String> = idx.iter().map(|&i| format!("{:.2},{:.2}", sx(s.x[i]), sy(s.q3[i]))).collect();
                pts.extend(idx.iter().rev().map(|&i| format!("{:.2},{:.2}", sx(s.x[i]), sy(s.q1[i]))));
                let _ = writeln!(o, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, pts.join(" "));
            }
            let med: Vec<String> = (0..s.x.len())
                .filter(|&i| usable(s.x[i], self.log_x) && usable(s.median[i], self.log_y))
                .map(|i| format!("{:.2},{:.2}", sx(s.x[i]), sy(s.median[i])))
                .collect();
            if !med.is_empty() {
                let _ = writeln!(o, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, med.join(" "));
                for p in &med {
                    let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
                    let _ = writeln!(o, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(o, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
            let _ = writeln!(o, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
        }
        o.push_str("</svg>\n");
        o
    }
}

fn methods_of(rows: &[ResultRow], filter: Option<&[String]>) -> Result<Vec<String>> {
    let mut seen: Vec<String> = Vec::new();
    for r in rows {
        if !seen.contains(&r.method) {
            seen.push(r.method.clone());
        }
    }
    match filter {
        None => Ok(seen),
        Some(f) => {
            let kept: Vec<String> = seen.into_iter().filter(|m| f.contains(m)).collect();
            ensure!(!kept.is_empty(), "method filter {f:?} matches no method in the results");
            Ok(kept)
        }
    }
}

fn grouped<'a>(rows: impl Iterator<Item = &'a ResultRow>, value: impl Fn(&ResultRow) -> f64) -> BTreeMap<usize, Vec<f64>> {
    let mut g: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in rows {
        g.entry(r.n_rollouts).or_default().push(value(r));
    }
    g
}

/// Relative suboptimality vs `N`, one series per method.
pub fn suboptimality_plot(rows: &[ResultRow], filter: Option<&[String]>) -> Result<Plot> {
    let series = methods_of(rows, filter)?
        .iter()
        .map(|m| Series::from_groups(m, &grouped(rows.iter().filter(|r| &r.method == m), |r| r.rel_subopt)))
        .collect();
    Ok(Plot {
        title: String::from("Relative suboptimality"),
        x_label: String::from("rollouts N"),
        y_label: String::from("(J - J*) / J*"),
        log_x: true,
        log_y: true,
        series,
    })
}

/// Fraction of trials whose controller stabilizes the true system.
pub fn stabilization_plot(rows: &[ResultRow], filter: Option<&[String]>) -> Result<Plot> {
    let series = methods_of(rows, filter)?
        .iter()
        .map(|m| {
            let g = grouped(rows.iter().filter(|r| &r.method == m), |r| if r.stabilized == Some(true) { 1.0 } else { 0.0 });
            let mut s = Series { label: m.clone(), x: vec![], q1: vec![], median: vec![], q3: vec![] };
            for (n, v) in g {
                let f = v.iter().sum::<f64>() / v.len() as f64;
                s.x.push(n as f64);
                s.q1.push(f);
                s.median.push(f);
                s.q3.push(f);
            }
            s
        })
        .collect();
    Ok(Plot {
        title: String::from("Stabilization frequency"),
        x_label: String::from("rollouts N"),
        y_label: String::from("fraction stabilized"),
        log_x: true,
        log_y: false,
        series,
    })
}

/// Operator-norm estimation error and radius vs `N` on log-log axes.
pub fn estimation_plot(rows: &[EstimationRow]) -> Result<Plot> {
    ensure!(!rows.is_empty(), "no estimation rows");
    let pick = |f: fn(&EstimationRow) -> f64| {
        let mut g: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in rows {
            g.entry(r.n_rollouts).or_default().push(f(r));
        }
        g
    };
    let src = &rows[0].eps_source;
    Ok(Plot {
        title: String::from("Estimation error"),
        x_label: String::from("rollouts N"),
        y_label: String::from("operator norm"),
        log_x: true,
        log_y: true,
        series: vec![
            Series::from_groups("||A - A_hat||", &pick(|r| r.err_a)),
            Series::from_groups("||B - B_hat||", &pick(|r| r.err_b)),
            Series::from_groups(&format!("eps_A ({src})"), &pick(|r| r.eps_a)),
            Series::from_groups(&format!("eps_B ({src})"), &pick(|r| r.eps_b)),
        ],
    })
}

/// Writes the three plots into `dir` and returns their paths.
pub fn write_report(dir: &Path, rows: &[ResultRow], estimation: &[EstimationRow], filter: Option<&[String]>) -> Result<Vec<PathBuf>> {
    if let Some(f) = filter {
        ensure!(!f.is_empty(), "method filter is empty");
    }
    let mut out = Vec::new();
    let mut emit = |name: &str, plot: Plot| -> Result<()> {
        let path = dir.join(name);
        crate::io::write_atomic(&path, plot.to_svg().as_bytes())?;
        out.push(path);
        Ok(())
    };
    emit("suboptimality.svg", suboptimality_plot(rows, filter)?)?;
    emit("stabilization.svg", stabilization_plot(rows, filter)?)?;
    if !estimation.is_empty() {
        emit("estimation.svg", estimation_plot(estimation)?)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_over_extended_reals() {
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]), Some((2.0, 3.0, 4.0)));
        let (_, m, q3) = quartiles(&[1.0, f64::INFINITY, f64::INFINITY, f64::NAN]).unwrap();
        assert_eq!(m, f64::INFINITY);
        assert_eq!(q3, f64::INFINITY);
        assert_eq!(quartiles(&[f64::NAN]), None);
    }
}
