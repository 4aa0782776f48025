//! Learning curves and comparison tables over stored runs.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use geossl::evaluation::{aggregate_trials, CurvePoint, TrialSummary};
use geossl::training::{ExperimentConfig, Method, ModuleKind, LossVariant};
use geossl::model::Placement;

use crate::manifest::{RunStatus, RunStore};
use crate::runner::{eval_run, series_for};
use crate::table::Table;

/// All seeds of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub dataset: String,
    pub runs: Vec<String>,
    pub curve: Vec<CurvePoint>,
    pub last: TrialSummary,
}

pub fn variant_label(cfg: &ExperimentConfig) -> String {
    let mut s = match cfg.method {
        Method::Simclr => "SimCLR",
        Method::Byol => "BYOL",
    }
    .to_string();
    let module = match cfg.module {
        ModuleKind::None => None,
        ModuleKind::Affine => Some("A".to_string()),
        ModuleKind::Homography => Some("H".to_string()),
        other => Some(format!("{other:?}").to_lowercase()),
    };
    if let Some(m) = module {
        s.push_str(" + ");
        s.push_str(&m);
    }
    match cfg.loss_variant {
        LossVariant::Regression => {}
        LossVariant::Invariant => s.push_str(" (invariant)"),
        LossVariant::Concat => s.push_str(" (concat)"),
    }
    if cfg.placement == Placement::OnG {
        s.push_str(" on g");
    }
    if cfg.two_modules {
        s.push_str(" x2");
    }
    s
}

/// Config with the fields that differ between seeds of one variant cleared.
fn group_key(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.seed = 0;
    c.name = String::new();
    Ok(c.to_toml()?)
}

/// Expands sweep names into their runs, in sweep order.
pub fn expand_targets(store: &RunStore, targets: &[String]) -> Result<Vec<String>> {
    let all = store.list()?;
    let mut out = Vec::new();
    for t in targets {
        let t = t.trim_end_matches('/');
        if store.exists(t) {
            out.push(t.to_string());
            continue;
        }
        if let Ok(rec) = crate::sweep::load_sweep(store, t) {
            out.extend(rec.cells.iter().filter(|c| store.exists(&c.run_id)).map(|c| c.run_id.clone()));
            continue;
        }
        let below: Vec<&String> = all.iter().filter(|id| id.starts_with(&format!("{t}/"))).collect();
        if below.is_empty() {
            bail!("no run or sweep `{t}` in {}", store.root.display());
        }
        out.extend(below.into_iter().cloned());
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|id| seen.insert(id.clone()));
    Ok(out)
}

/// Groups runs by configuration (ignoring seed and name) and evaluates every
/// checkpoint, reusing stored evaluations. Returns warnings for runs that
/// cannot be compared directly.
pub fn collect_variants(store: &RunStore, runs: &[String], confidence: f64) -> Result<(Vec<Variant>, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut groups: Vec<(String, ExperimentConfig, Vec<String>)> = Vec::new();
    for id in runs {
        let m = store.load(id)?;
        if m.status != RunStatus::Completed {
            warnings.push(format!("run `{id}` is {:?}; skipped", m.status).to_lowercase());
            continue;
        }
        let key = group_key(&m.config)?;
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.2.push(id.clone()),
            None => groups.push((key, m.config.clone(), vec![id.clone()])),
        }
    }
    if groups.is_empty() {
        bail!("no completed runs to report");
    }
    let first = &groups[0].1;
    for (_, cfg, ids) in &groups[1..] {
        if cfg.data.dataset != first.data.dataset || cfg.epochs != first.epochs {
            warnings.push(format!(
                "`{}` ({}, {} epochs) is not directly comparable with `{}` ({}, {} epochs)",
                ids[0], cfg.data.dataset, cfg.epochs, groups[0].2[0], first.data.dataset, first.epochs
            ));
        }
    }
    let mut variants = Vec::new();
    for (_, cfg, ids) in &groups {
        let mut per_run = Vec::new();
        for id in ids {
            series_for(store, id)?;
            per_run.push(eval_run(store, id, None, None, None)?);
        }
        let epochs: Vec<usize> = per_run[0]
            .iter()
            .map(|(e, _)| *e)
            .filter(|e| per_run[1..].iter().all(|r| r.iter().any(|(x, _)| x == e)))
            .collect();
        let mut curve = Vec::new();
        for &epoch in &epochs {
            let accuracies: Vec<f64> =
                per_run.iter().map(|r| r.iter().find(|(x, _)| *x == epoch).expect("shared").1.accuracy).collect();
            let s = aggregate_trials(&accuracies, confidence)?;
            curve.push(CurvePoint { epoch, mean: s.mean, std: s.std, accuracies });
        }
        let Some(lastp) = curve.last() else { bail!("runs {ids:?} share no checkpoint epochs") };
        let last = aggregate_trials(&lastp.accuracies, confidence)?;
        variants.push(Variant { label: variant_label(cfg), dataset: cfg.data.dataset.clone(), runs: ids.clone(), curve, last });
    }
    let labels: Vec<String> = variants.iter().map(|v| v.label.clone()).collect();
    for (i, v) in variants.iter_mut().enumerate() {
        if labels.iter().filter(|l| **l == labels[i]).count() > 1 {
            v.label = format!("{} [{}]", v.label, i + 1);
        }
    }
    Ok((variants, warnings))
}

/// Final-checkpoint accuracy per variant; the best mean is marked.
pub fn comparison_table(variants: &[Variant]) -> Table {
    let mut t = Table::new(["method", "dataset", "epoch", "seeds", "accuracy (%)", "best"]);
    let best = variants.iter().map(|v| v.last.mean).fold(f64::NEG_INFINITY, f64::max);
    for v in variants {
        t.push(vec![
            v.label.clone(),
            v.dataset.clone(),
            v.curve.last().map_or(0, |p| p.epoch).to_string(),
            v.last.n.to_string(),
            v.last.display_percent(),
            if v.last.mean == best { "*".into() } else { String::new() },
        ]);
    }
    t
}

/// Long format: one row per variant and checkpoint epoch.
pub fn curve_table(variants: &[Variant]) -> Table {
    let mut t = Table::new(["variant", "epoch", "mean_acc", "std"]);
    for v in variants {
        for p in &v.curve {
            t.push(vec![v.label.clone(), p.epoch.to_string(), format!("{:.6}", p.mean), format!("{:.6}", p.std)]);
        }
    }
    t
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static SVG: mean accuracy per variant with a one-standard-deviation band.
pub fn curves_svg(variants: &[Variant], title: &str) -> String {
    let (w, h) = (720.0, 440.0);
    let (l, r, t, b) = (64.0, 190.0, 40.0, 52.0);
    let (pw, ph) = (w - l - r, h - t - b);
    let max_epoch = variants.iter().flat_map(|v| v.curve.iter().map(|p| p.epoch)).max().unwrap_or(1).max(1) as f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in variants.iter().flat_map(|v| &v.curve) {
        lo = lo.min(p.mean - p.std);
        hi = hi.max(p.mean + p.std);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(0.01);
    let (lo, hi) = (((lo - pad) * 20.0).floor() / 20.0, ((hi + pad) * 20.0).ceil() / 20.0);
    let x = |e: f64| l + pw * e / max_epoch;
    let y = |a: f64| t + ph * (1.0 - (a - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, l + pw / 2.0, esc(title));
    let ticks = 5;
    for i in 0..=ticks {
        let a = lo + (hi - lo) * i as f64 / ticks as f64;
        let yy = y(a);
        let _ = writeln!(s, r##"<line x1="{l}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#e0e0e0"/>"##, l + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.1}</text>"#, l - 6.0, yy + 4.0, a * 100.0);
        let e = max_epoch * i as f64 / ticks as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, x(e), t + ph + 18.0, e.round());
    }
    let _ = writeln!(s, r##"<rect x="{l}" y="{t}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#, l + pw / 2.0, h - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">linear eval accuracy (%)</text>"#,
        t + ph / 2.0,
        t + ph / 2.0
    );
    for (i, v) in variants.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let upper: Vec<String> = v.curve.iter().map(|p| format!("{:.1},{:.1}", x(p.epoch as f64), y(p.mean + p.std))).collect();
        let lower: Vec<String> = v.curve.iter().rev().map(|p| format!("{:.1},{:.1}", x(p.epoch as f64), y(p.mean - p.std))).collect();
        let _ = writeln!(s, r#"<polygon points="{} {}" fill="{c}" fill-opacity="0.18" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let line: Vec<String> = v.curve.iter().map(|p| format!("{:.1},{:.1}", x(p.epoch as f64), y(p.mean))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
        let ly = t + 12.0 + 20.0 * i as f64;
        let lx = l + pw + 14.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, esc(&v.label));
    }
    s.push_str("</svg>\n");
    s
}
