use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::plan::{CellReport, ExperimentReport, Mark};
use crate::error::{Error, Result};
use crate::gridworlds::EnvKind;
use crate::penalty::BaselineKind;

pub const CSV_HEADER: [&str; 8] = ["env", "baseline", "measure", "discount", "summary", "beta", "seed", "final_perf"];

fn row_fields(cell: &CellReport) -> [String; 5] {
    let k = &cell.key;
    let (baseline, measure, discount, summary) = match k.baseline {
        Some(b) => (
            b.to_string(),
            k.variant.measure.to_string(),
            if k.variant.discounted { "discounted" } else { "undiscounted" }.to_string(),
            if k.variant.measure == crate::penalty::Measure::Ur {
                String::new()
            } else {
                k.variant.summary.to_string()
            },
        ),
        None => (String::new(), "none".into(), String::new(), String::new()),
    };
    [k.env.to_string(), baseline, measure, discount, summary]
}

/// One row per (cell, beta, seed).
pub fn results_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for cell in &report.cells {
        let fields = row_fields(cell);
        for b in &cell.per_beta {
            for (seed, f) in cell.seeds.iter().zip(&b.finals) {
                let mut rec: Vec<String> = fields.to_vec();
                rec.push(b.beta.to_string());
                rec.push(seed.to_string());
                rec.push(f.to_string());
                w.write_record(&rec)?;
            }
        }
    }
    finish(w)
}

/// One row per cell at its chosen beta, plus skipped cells.
pub fn summary_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["env", "baseline", "measure", "discount", "summary", "chosen_beta", "mean", "std", "mark", "note"])?;
    for cell in &report.cells {
        let mut rec: Vec<String> = row_fields(cell).to_vec();
        let c = cell.chosen();
        rec.extend([
            c.beta.to_string(),
            format!("{:.4}", c.mean),
            format!("{:.4}", c.std),
            cell.mark().symbol().to_string(),
            String::new(),
        ]);
        w.write_record(&rec)?;
    }
    for s in &report.skipped {
        let k = &s.key;
        w.write_record([
            k.env.to_string(),
            k.baseline.map(|b| b.to_string()).unwrap_or_default(),
            k.variant.measure.to_string(),
            if k.variant.discounted { "discounted" } else { "undiscounted" }.to_string(),
            k.variant.summary.to_string(),
            String::new(),
            String::new(),
            String::new(),
            "skipped".into(),
            s.reason.clone(),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Plain-text table: one row per variant, one column per baseline.
pub fn text_table(report: &ExperimentReport, env: EnvKind) -> String {
    let cells: Vec<&CellReport> = report.cells.iter().filter(|c| c.key.env == env).collect();
    let mut variants: Vec<String> = Vec::new();
    for c in &cells {
        let l = c.key.variant.label();
        if !variants.contains(&l) {
            variants.push(l);
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{env}");
    let _ = writeln!(out, "{:<12} {:<16} {:<16} {:<16}", "variant", "starting", "inaction", "stepwise");
    for v in variants {
        let _ = write!(out, "{v:<12}");
        if v == "none" {
            if let Some(c) = cells.iter().find(|c| c.key.baseline.is_none()) {
                let _ = write!(out, " {:<16}", fmt_cell(c));
            }
        } else {
            for b in BaselineKind::ALL {
                let entry = cells
                    .iter()
                    .find(|c| c.key.baseline == Some(*b) && c.key.variant.label() == v)
                    .map(|c| fmt_cell(c))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, " {entry:<16}");
            }
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
    out
}

fn fmt_cell(c: &CellReport) -> String {
    let chosen = c.chosen();
    format!("{} {:.2} b={}", c.mark().symbol(), chosen.mean, chosen.beta)
}

/// Bar chart for one environment: a panel per baseline, a bar per variant
/// at its chosen beta, whiskers at one standard deviation.
pub fn env_svg(report: &ExperimentReport, env: EnvKind) -> String {
    const PANEL_W: f64 = 300.0;
    const PANEL_H: f64 = 220.0;
    const TOP: f64 = 40.0;
    const LEFT: f64 = 50.0;
    const BOTTOM: f64 = 70.0;
    let none = report.cells.iter().find(|c| c.key.env == env && c.key.baseline.is_none());
    let panels: Vec<BaselineKind> = BaselineKind::ALL
        .iter()
        .copied()
        .filter(|b| report.cells.iter().any(|c| c.key.env == env && c.key.baseline == Some(*b)))
        .collect();
    let width = LEFT + PANEL_W * panels.len().max(1) as f64 + 20.0;
    let height = TOP + PANEL_H + BOTTOM;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>{env}</title>"#);
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="14" text-anchor="middle">{env}</text>"#, width / 2.0);
    // scaled performance axis spans [-1, 1]
    let y_of = |v: f64| TOP + PANEL_H * (1.0 - (v.clamp(-1.0, 1.0) + 1.0) / 2.0);
    for (pi, b) in panels.iter().enumerate() {
        let x0 = LEFT + pi as f64 * PANEL_W;
        let _ = writeln!(s, r#"<g class="panel" data-baseline="{b}">"#);
        let _ = writeln!(
            s,
            r##"<rect x="{x0}" y="{TOP}" width="{}" height="{PANEL_H}" fill="none" stroke="#999999"/>"##,
            PANEL_W - 10.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{b}</text>"#, x0 + PANEL_W / 2.0 - 5.0, TOP - 6.0);
        for v in [-1.0, 0.0, 1.0] {
            let y = y_of(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"##,
                x0 + PANEL_W - 10.0
            );
            if pi == 0 {
                let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#, x0 - 4.0, y + 4.0);
            }
        }
        let mut bars: Vec<&CellReport> = none.into_iter().collect();
        bars.extend(report.cells.iter().filter(|c| c.key.env == env && c.key.baseline == Some(*b)));
        let slot = (PANEL_W - 20.0) / bars.len().max(1) as f64;
        for (i, c) in bars.iter().enumerate() {
            let chosen = c.chosen();
            let bx = x0 + 5.0 + i as f64 * slot;
            let (y_top, y_bot) = if chosen.mean >= 0.0 {
                (y_of(chosen.mean), y_of(0.0))
            } else {
                (y_of(0.0), y_of(chosen.mean))
            };
            let fill = match c.mark() {
                Mark::Pass => "#4c9a5a",
                Mark::Fail => "#c0504d",
                Mark::Unclear => "#e0a030",
            };
            let label = c.key.variant.label();
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-variant="{label}" x="{bx:.1}" y="{y_top:.1}" width="{:.1}" height="{:.1}" fill="{fill}"/>"#,
                slot * 0.7,
                (y_bot - y_top).max(0.5)
            );
            let cx = bx + slot * 0.35;
            let _ = writeln!(
                s,
                r##"<line class="whisker" x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#333333"/>"##,
                y_of(chosen.mean + chosen.std),
                y_of(chosen.mean - chosen.std)
            );
            let ty = TOP + PANEL_H + 8.0;
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{ty:.1}" transform="rotate(60 {cx:.1} {ty:.1})">{label}</text>"#
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `results.csv`, `summary.csv`, `report.json` and one SVG per
/// environment into `dir`. Returns the written paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    put("results.csv".into(), results_csv(report)?)?;
    put("summary.csv".into(), summary_csv(report)?)?;
    put("report.json".into(), serde_json::to_string_pretty(report)?)?;
    let mut envs: Vec<EnvKind> = report.cells.iter().map(|c| c.key.env).collect();
    envs.dedup();
    for env in envs {
        put(format!("{env}.svg"), env_svg(report, env))?;
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
