//! Box-plot data for squared error, one box per (N, ε, estimator), plus a
//! plain SVG rendering of it on a log scale.

use std::fmt::Write as _;
use std::path::Path;

use super::SummaryRow;
use crate::error::{Error, Result};
use crate::estimators::Estimator;

pub const PLOT_DATA_HEADER: &str = "panel,n,epsilon,estimator,min,q1,median,q3,max,mean,count";

const LOG_FLOOR: f64 = 1e-8;
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 50.0;

fn colour(e: Estimator) -> &'static str {
    match e {
        Estimator::Naive => "#d95f02",
        Estimator::Vb => "#1b9e77",
        Estimator::Bayes => "#7570b3",
    }
}

fn panels(rows: &[SummaryRow]) -> Vec<u64> {
    let mut ns: Vec<u64> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns
}

/// Writes the box table to `path` and the figure next to it with an `.svg`
/// extension. Rows must come from `summarize`, which fixes their order.
pub fn emit_plot_data(rows: &[SummaryRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Usage("nothing to plot".into()));
    }
    let ns = panels(rows);
    let mut text = String::from(PLOT_DATA_HEADER);
    text.push('\n');
    for r in rows {
        let panel = ns.iter().position(|&n| n == r.n).unwrap_or(0);
        let _ = writeln!(
            text,
            "{panel},{},{},{},{},{},{},{},{},{},{}",
            r.n, r.epsilon, r.estimator, r.min, r.q1, r.median, r.q3, r.max, r.mean, r.count
        );
    }
    std::fs::write(path, text)?;
    std::fs::write(path.with_extension("svg"), render_svg(rows))?;
    Ok(())
}

pub fn render_svg(rows: &[SummaryRow]) -> String {
    let ns = panels(rows);
    let lg = |v: f64| v.max(LOG_FLOOR).log10();
    let lo = rows.iter().map(|r| lg(r.min)).fold(f64::INFINITY, f64::min).floor();
    let hi = rows.iter().map(|r| lg(r.max)).fold(f64::NEG_INFINITY, f64::max).ceil();
    let hi = if hi <= lo { lo + 1.0 } else { hi };
    let y = |v: f64| MARGIN + PANEL_H * (hi - lg(v)) / (hi - lo);

    let width = MARGIN * 2.0 + PANEL_W;
    let height = (MARGIN + PANEL_H + MARGIN) * ns.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    for (p, &n) in ns.iter().enumerate() {
        let _ = writeln!(s, r#"<g transform="translate(0,{:.0})">"#, p as f64 * (PANEL_H + 2.0 * MARGIN));
        let _ = writeln!(s, r#"<text x="{MARGIN:.0}" y="20">N = {n}</text>"#);
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN:.0}" y="{MARGIN:.0}" width="{PANEL_W:.0}" height="{PANEL_H:.0}" fill="none" stroke="#999"/>"##
        );
        let mut tick = lo;
        while tick <= hi {
            let ty = MARGIN + PANEL_H * (hi - tick) / (hi - lo);
            let _ = writeln!(s, r#"<text x="4" y="{ty:.1}">1e{tick:.0}</text>"#);
            tick += 1.0;
        }
        let cells: Vec<&SummaryRow> = rows.iter().filter(|r| r.n == n).collect();
        let slot = PANEL_W / cells.len() as f64;
        for (c, r) in cells.iter().enumerate() {
            let x0 = MARGIN + slot * c as f64 + slot * 0.15;
            let w = slot * 0.7;
            let xm = x0 + w / 2.0;
            let col = colour(r.estimator);
            let _ = writeln!(
                s,
                r#"<line x1="{xm:.2}" y1="{:.2}" x2="{xm:.2}" y2="{:.2}" stroke="{col}"/>"#,
                y(r.max),
                y(r.min)
            );
            let (top, bottom) = (y(r.q3), y(r.q1));
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}" fill="{col}" fill-opacity="0.35" stroke="{col}"/>"#,
                (bottom - top).max(0.5)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{x0:.2}" y1="{m:.2}" x2="{:.2}" y2="{m:.2}" stroke="{col}" stroke-width="2"/>"#,
                x0 + w,
                m = y(r.median)
            );
            if r.estimator == Estimator::Naive {
                let _ = writeln!(
                    s,
                    r#"<text x="{x0:.2}" y="{:.0}">ε={}</text>"#,
                    MARGIN + PANEL_H + 14.0,
                    r.epsilon
                );
            }
        }
        s.push_str("</g>\n");
    }
    let mut lx = MARGIN;
    for e in Estimator::ALL {
        let _ = writeln!(
            s,
            r#"<text x="{lx:.0}" y="{:.0}" fill="{}">{e}</text>"#,
            height - 8.0,
            colour(e)
        );
        lx += 60.0;
    }
    s.push_str("</svg>\n");
    s
}
