//! CSV, JSON and SVG artifacts for grid results. All output is a pure
//! function of the cells, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{GridError, HeatmapCell};
use crate::potentials::TheoremVerdict;

pub const CSV_HEADER: &str = "m,p,k,trials,survived,survival_rate,mean_elim_time,verdict";

fn verdict_label(v: &TheoremVerdict) -> &'static str {
    match v {
        TheoremVerdict::ProvenElimination { .. } => "ProvenElimination",
        TheoremVerdict::ProvenSurvival { .. } => "ProvenSurvival",
        TheoremVerdict::Unknown => "Unknown",
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2}")).unwrap_or_default()
}

/// The heatmap table. A missing elimination time (no eliminated trial) is an
/// empty field.
pub fn emit_csv(cells: &[HeatmapCell]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{:?},{},{}",
            c.m,
            c.p,
            c.k,
            c.trials,
            c.survived,
            c.survival_rate,
            opt(c.mean_elim_time),
            verdict_label(&c.verdict)
        );
    }
    out
}

/// Extra per-cell metrics: the literal PF-exists survival reading, the
/// verdict source and invariant violations when monitored.
pub fn emit_metrics_csv(cells: &[HeatmapCell]) -> String {
    let mut out =
        String::from("m,p,k,trials,survived,survival_rate,pf_exists,pf_exists_rate,verdict,verdict_source,invariant_violations\n");
    for c in cells {
        let source = c.verdict.source().map(|s| s.name()).or(c.verdict_note.as_ref().map(|_| "not-regular")).unwrap_or("");
        let violations = c.invariants.as_ref().map(|r| r.total_violations().to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{:?},{},{:?},{},{},{}",
            c.m,
            c.p,
            c.k,
            c.trials,
            c.survived,
            c.survival_rate,
            c.pf_exists,
            c.pf_exists_rate,
            verdict_label(&c.verdict),
            source,
            violations
        );
    }
    out
}

pub fn cells_json(cells: &[HeatmapCell]) -> String {
    serde_json::to_string_pretty(cells).expect("cells serialize") + "\n"
}

/// Cells grouped by `M`, in first-seen order.
fn panels(cells: &[HeatmapCell]) -> Vec<(&str, Vec<&HeatmapCell>)> {
    let mut out: Vec<(&str, Vec<&HeatmapCell>)> = Vec::new();
    for c in cells {
        match out.iter_mut().find(|(m, _)| *m == c.m) {
            Some((_, v)) => v.push(c),
            None => out.push((&c.m, vec![c])),
        }
    }
    out
}

fn axis_values(cells: &[&HeatmapCell]) -> (Vec<f64>, Vec<usize>) {
    let mut ps: Vec<f64> = cells.iter().map(|c| c.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let mut ks: Vec<usize> = cells.iter().map(|c| c.k).collect();
    ks.sort_unstable();
    ks.dedup();
    (ps, ks)
}

const CW: f64 = 44.0;
const CH: f64 = 28.0;
const LEFT: f64 = 46.0;
const TOP: f64 = 44.0;
const GAP: f64 = 40.0;

fn gray(rate: f64) -> u8 {
    (245.0 - 205.0 * rate.clamp(0.0, 1.0)).round() as u8
}

/// One p-by-k panel per `M` value. Darker cells survived more often; hatching
/// marks cells with a proven verdict (`/` elimination, `\` survival).
pub fn emit_svg(cells: &[HeatmapCell]) -> String {
    let groups = panels(cells);
    let dims: Vec<(Vec<f64>, Vec<usize>)> = groups.iter().map(|(_, cs)| axis_values(cs)).collect();
    let panel_w = |ps: &Vec<f64>| LEFT + ps.len() as f64 * CW + GAP;
    let width: f64 = dims.iter().map(|(ps, _)| panel_w(ps)).sum::<f64>() + 10.0;
    let max_rows = dims.iter().map(|(_, ks)| ks.len()).max().unwrap_or(0) as f64;
    let height = TOP + max_rows * CH + 90.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif">"#
    );
    s.push_str(concat!(
        "<defs>\n",
        r#"<pattern id="elim" width="6" height="6" patternUnits="userSpaceOnUse"><path d="M0,6 L6,0" stroke="black" stroke-width="0.8"/></pattern>"#,
        "\n",
        r#"<pattern id="surv" width="6" height="6" patternUnits="userSpaceOnUse"><path d="M0,0 L6,6" stroke="black" stroke-width="0.8"/></pattern>"#,
        "\n</defs>\n"
    ));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let mut x0 = 0.0;
    for ((m, cs), (ps, ks)) in groups.iter().zip(&dims) {
        let gx = x0 + LEFT;
        let _ = writeln!(s, r#"<g id="panel-m{m}">"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">m = {m}</text>"#,
            gx + ps.len() as f64 * CW / 2.0
        );
        for c in cs {
            let col = ps.iter().position(|&p| p == c.p).unwrap() as f64;
            let row = (ks.len() - 1 - ks.iter().position(|&k| k == c.k).unwrap()) as f64;
            let (x, y) = (gx + col * CW, TOP + row * CH);
            let g = gray(c.survival_rate);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{CW:.1}" height="{CH:.1}" fill="rgb({g},{g},{g})" stroke="white" stroke-width="0.5"/>"#
            );
            let hatch = match c.verdict {
                TheoremVerdict::ProvenElimination { .. } => Some("elim"),
                TheoremVerdict::ProvenSurvival { .. } => Some("surv"),
                TheoremVerdict::Unknown => None,
            };
            if let Some(h) = hatch {
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{CW:.1}" height="{CH:.1}" fill="url(#{h})" opacity="0.45"/>"#
                );
            }
            let ink = if c.survival_rate > 0.55 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" fill="{ink}">{:.2}</text>"#,
                x + CW / 2.0,
                y + CH / 2.0 + 3.5,
                c.survival_rate
            );
        }
        for (i, p) in ps.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{p}</text>"#,
                gx + (i as f64 + 0.5) * CW,
                TOP + ks.len() as f64 * CH + 14.0
            );
        }
        for (i, k) in ks.iter().enumerate() {
            let row = (ks.len() - 1 - i) as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{k}</text>"#,
                gx - 6.0,
                TOP + row * CH + CH / 2.0 + 3.5
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">p</text>"#,
            gx + ps.len() as f64 * CW / 2.0,
            TOP + ks.len() as f64 * CH + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">k</text>"#,
            gx - 30.0,
            TOP + ks.len() as f64 * CH / 2.0
        );
        s.push_str("</g>\n");
        x0 += panel_w(ps);
    }

    // Legend: intensity scale and the two hatchings.
    let ly = TOP + max_rows * CH + 48.0;
    for i in 0..=10 {
        let rate = i as f64 / 10.0;
        let g = gray(rate);
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{ly:.1}" width="18" height="12" fill="rgb({g},{g},{g})" stroke="black" stroke-width="0.3"/>"#,
            LEFT + i as f64 * 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="10">survival rate 0 to 1</text>"#,
        LEFT + 11.0 * 18.0 + 6.0,
        ly + 10.0
    );
    let hx = LEFT + 11.0 * 18.0 + 130.0;
    for (i, (id, text)) in [("elim", "proven elimination"), ("surv", "proven survival")].iter().enumerate() {
        let x = hx + i as f64 * 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{ly:.1}" width="18" height="12" fill="url(#{id})" stroke="black" stroke-width="0.3"/>"#
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10">{text}</text>"#, x + 24.0, ly + 10.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Survival rate against `p`, one panel per `M` and one line per `k`.
pub fn emit_line_chart(cells: &[HeatmapCell]) -> String {
    const W: f64 = 320.0;
    const H: f64 = 220.0;
    const PAD: f64 = 40.0;
    let groups = panels(cells);
    let width = groups.len() as f64 * (W + PAD) + PAD;
    let height = H + 2.0 * PAD + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (gi, (m, cs)) in groups.iter().enumerate() {
        let (ps, ks) = axis_values(cs);
        let ox = PAD + gi as f64 * (W + PAD);
        let oy = PAD;
        let (pmin, pmax) = (ps[0], ps[ps.len() - 1]);
        let span = if pmax > pmin { pmax - pmin } else { 1.0 };
        let sx = |p: f64| ox + (p - pmin) / span * W;
        let sy = |r: f64| oy + (1.0 - r) * H;
        let _ = writeln!(s, r#"<g id="lines-m{m}">"#);
        let _ = writeln!(
            s,
            r#"<rect x="{ox:.1}" y="{oy:.1}" width="{W:.1}" height="{H:.1}" fill="none" stroke="black" stroke-width="0.6"/>"#
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">m = {m}</text>"#, ox + W / 2.0, oy - 12.0);
        for (i, k) in ks.iter().enumerate() {
            let mut pts: Vec<&&HeatmapCell> = cs.iter().filter(|c| c.k == *k).collect();
            pts.sort_by(|a, b| a.p.total_cmp(&b.p));
            let path: Vec<String> = pts.iter().map(|c| format!("{:.1},{:.1}", sx(c.p), sy(c.survival_rate))).collect();
            let shade = if ks.len() > 1 { (180.0 * i as f64 / (ks.len() - 1) as f64).round() as u8 } else { 0 };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="rgb({shade},{shade},{shade})" stroke-width="1.2"><title>k = {k}</title></polyline>"#,
                path.join(" ")
            );
        }
        for r in [0.0, 0.5, 1.0] {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{r:.1}</text>"#, ox - 4.0, sy(r) + 3.5);
        }
        for p in [pmin, pmax] {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{p}</text>"#, sx(p), oy + H + 14.0);
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">p</text>"#, ox + W / 2.0, oy + H + 28.0);
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `grid.csv`, `metrics.csv`, `cells.json`, `heatmap.svg` and
/// `survival_vs_p.svg` into `dir`.
pub fn write_artifacts(dir: &Path, cells: &[HeatmapCell]) -> Result<Vec<PathBuf>, GridError> {
    if cells.is_empty() {
        return Err(GridError::field("cells", "nothing to write"));
    }
    std::fs::create_dir_all(dir)?;
    let files = [
        ("grid.csv", emit_csv(cells)),
        ("metrics.csv", emit_metrics_csv(cells)),
        ("cells.json", cells_json(cells)),
        ("heatmap.svg", emit_svg(cells)),
        ("survival_vs_p.svg", emit_line_chart(cells)),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        out.push(path);
    }
    Ok(out)
}
