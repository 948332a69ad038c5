//! Fits table, scatter panels and the markdown summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::stats::{
    ballistic_fit, compare_fits, fitts_fit, index_of_difficulty, remove_outliers, FitComparison,
    FittsFit, OutlierRule,
};
use crate::trajectory::{provenance_comment, Provenance, Source, TrialMetric};

pub const FITS_HEADER: &str =
    "source,model,a,b,se_a,se_b,r2,F,p,lof_F,lof_p,n_kept,n_removed";

/// Per-condition success counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub distance_m: f64,
    pub width_m: f64,
    pub trials: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceReport {
    pub source: Source,
    pub trials: usize,
    pub removed: Vec<TrialMetric>,
    pub conditions: Vec<ConditionSummary>,
    /// `Err` holds the reason a fit could not be computed.
    pub fitts: std::result::Result<FittsFit, String>,
    pub ballistic: std::result::Result<FittsFit, String>,
}

impl SourceReport {
    pub fn kept_count(&self) -> usize {
        self.fitts.as_ref().map_or(0, |f| f.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub human: Option<SourceReport>,
    pub policy: Option<SourceReport>,
    pub comparison: Option<FitComparison>,
}

fn summarize(source: Source, trials: &[TrialMetric], rule: OutlierRule) -> SourceReport {
    let mut groups: BTreeMap<(u64, u64), ConditionSummary> = BTreeMap::new();
    for t in trials {
        let g = groups
            .entry((t.distance_m.to_bits(), t.width_m.to_bits()))
            .or_insert(ConditionSummary { distance_m: t.distance_m, width_m: t.width_m, trials: 0, successes: 0 });
        g.trials += 1;
        g.successes += usize::from(t.success);
    }
    let mut conditions: Vec<_> = groups.into_values().collect();
    conditions.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then(a.width_m.total_cmp(&b.width_m)));
    let successful: Vec<TrialMetric> = trials.iter().filter(|t| t.success).cloned().collect();
    let (kept, removed) = remove_outliers(&successful, rule);
    SourceReport {
        source,
        trials: trials.len(),
        removed,
        conditions,
        fitts: fitts_fit(&kept).map_err(|e| e.to_string()),
        ballistic: ballistic_fit(&kept).map_err(|e| e.to_string()),
    }
}

/// Fits every available source and compares them when both are present.
pub fn analyze_metrics(
    human: Option<&[TrialMetric]>,
    policy: Option<&[TrialMetric]>,
    rule: OutlierRule,
) -> AnalysisReport {
    let human = human.map(|t| summarize(Source::Human, t, rule));
    let policy = policy.map(|t| summarize(Source::Policy, t, rule));
    let comparison = match (&human, &policy) {
        (Some(h), Some(p)) => match (&h.fitts, &p.fitts) {
            (Ok(a), Ok(b)) => compare_fits(a, b).ok(),
            _ => None,
        },
        _ => None,
    };
    AnalysisReport { human, policy, comparison }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn fits_csv(report: &AnalysisReport, prov: &Provenance) -> String {
    let mut out = provenance_comment(prov);
    out.push_str(FITS_HEADER);
    out.push('\n');
    for src in [&report.human, &report.policy].into_iter().flatten() {
        for (name, fit) in [("fitts", &src.fitts), ("ballistic", &src.ballistic)] {
            let removed = src.removed.len();
            match fit {
                Ok(f) => {
                    let (lf, lp) = f.lack_of_fit.map_or((String::new(), String::new()), |l| (num(l.f), num(l.p)));
                    let _ = writeln!(
                        out,
                        "{},{name},{},{},{},{},{},{},{},{lf},{lp},{},{removed}",
                        src.source,
                        num(f.a),
                        num(f.b),
                        num(f.se_a),
                        num(f.se_b),
                        num(f.r_squared),
                        num(f.anova.f),
                        num(f.anova.p),
                        f.n,
                    );
                }
                Err(_) => {
                    let _ = writeln!(out, "{},{name},,,,,,,,,,0,{removed}", src.source);
                }
            }
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Nice tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-9);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// MT-versus-ID scatter with the fitted line, in the style of a journal panel.
pub fn scatter_svg(title: &str, fit: &FittsFit, prov: &Provenance) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const L: f64 = 64.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 52.0;
    let xs = fit.points.iter().map(|p| p.0);
    let ys = fit.points.iter().map(|p| p.1);
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let line_y = [fit.a + fit.b * x0, fit.a + fit.b * x1];
    let (mut y0, mut y1) = ys
        .chain(line_y)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let xpad = ((x1 - x0) * 0.08).max(0.05);
    let ypad = ((y1 - y0) * 0.08).max(0.02);
    x0 -= xpad;
    x1 += xpad;
    y0 -= ypad;
    y1 += ypad;
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<!-- config_hash={} seed={} -->", prov.config_hash, prov.seed);
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>", W / 2.0, escape(title));
    let _ = writeln!(
        s,
        "<rect x=\"{L}\" y=\"{T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - L - R,
        H - T - B
    );
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>", H - B, H - B + 5.0);
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{t:.1}</text>", H - B + 18.0);
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(s, "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{L}\" y2=\"{y:.2}\" stroke=\"black\"/>", L - 5.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{t:.2}</text>", L - 8.0, y + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">Index of difficulty (bits)</text>", (L + W - R) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">Movement time (s)</text>",
        (T + H - B) / 2.0
    );
    for (x, y) in &fit.points {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.6\"/>", px(*x), py(*y));
    }
    let (lx0, lx1) = (x0 + xpad, x1 - xpad);
    let _ = writeln!(
        s,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"firebrick\" stroke-width=\"2\"/>",
        px(lx0),
        py(fit.a + fit.b * lx0),
        px(lx1),
        py(fit.a + fit.b * lx1)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\">R² = {:.3}   MT = {:.3} + {:.3}·ID   n = {}</text>",
        L + 8.0,
        T + 16.0,
        fit.r_squared,
        fit.a,
        fit.b,
        fit.n
    );
    s.push_str("</svg>\n");
    s
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn fit_row(model: &str, fit: &std::result::Result<FittsFit, String>) -> String {
    match fit {
        Ok(f) => {
            let lof = f
                .lack_of_fit
                .map_or("n/a | n/a".to_string(), |l| format!("{:.3} | {}", l.f, fmt_p(l.p)));
            format!(
                "| {model} | {:.4} | {:.4} | {:.4} | {:.4} | {:.3} | {:.2} | {} | {lof} | {} |\n",
                f.a,
                f.b,
                f.se_a,
                f.se_b,
                f.r_squared,
                f.anova.f,
                fmt_p(f.anova.p),
                f.n
            )
        }
        Err(e) => format!("| {model} | not fitted: {e} | | | | | | | | | |\n"),
    }
}

pub fn summary_markdown(report: &AnalysisReport, prov: &Provenance) -> String {
    let mut s = String::from("# Fitts benchmark summary\n\n");
    let _ = writeln!(s, "- config hash: `{}`", prov.config_hash);
    let _ = writeln!(s, "- seed: {}\n", prov.seed);
    for (label, src) in [("Human demonstrations", &report.human), ("Policy rollouts", &report.policy)] {
        let _ = writeln!(s, "## {label}\n");
        let Some(src) = src else {
            s.push_str("No metrics available.\n\n");
            continue;
        };
        let successes: usize = src.conditions.iter().map(|c| c.successes).sum();
        let _ = writeln!(
            s,
            "{} trials, {} successful, {} removed as outliers.\n",
            src.trials,
            successes,
            src.removed.len()
        );
        s.push_str("| D (m) | W (m) | ID (bits) | trials | successes | success rate |\n");
        s.push_str("|---|---|---|---|---|---|\n");
        for c in &src.conditions {
            let id = index_of_difficulty(c.distance_m, c.width_m).unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                "| {} | {} | {:.3} | {} | {} | {:.2} |",
                c.distance_m,
                c.width_m,
                id,
                c.trials,
                c.successes,
                c.successes as f64 / c.trials.max(1) as f64
            );
        }
        s.push_str("\n| model | a | b | se(a) | se(b) | R² | F | p | lack-of-fit F | lack-of-fit p | n |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        s.push_str(&fit_row("fitts", &src.fitts));
        s.push_str(&fit_row("ballistic", &src.ballistic));
        s.push('\n');
    }
    s.push_str("## Human versus policy (Fitts model)\n\n");
    match &report.comparison {
        Some(c) => {
            let _ = writeln!(s, "- slope difference (human - policy): {:.4} s/bit", c.slope_difference);
            let _ = writeln!(s, "- pooled standard error: {:.4}", c.pooled_se);
            let _ = writeln!(s, "- t = {:.3}, df = {}, two-sided p = {}", c.t, c.df, fmt_p(c.p));
            let _ = writeln!(s, "- R² difference (human - policy): {:.3}", c.delta_r_squared);
        }
        None => s.push_str("Comparison absent: both human and policy Fitts fits are required.\n"),
    }
    s
}
