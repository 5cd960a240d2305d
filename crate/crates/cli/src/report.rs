//! Markdown and CSV rendering. Markdown rounds to table precision; CSV keeps
//! full precision and every number the Markdown shows.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sevlogit::domain::{ColumnSummary, DescriptiveTable, SegmentKey, SeverityClass};
use sevlogit::estimate::{FitResult, RetentionAction, RetentionReport};
use sevlogit::inference::{MarginalEffectsTable, RandomShareRow};
use sevlogit::model::{ParameterRole, Term};
use sevlogit::modeltests::{BatteryReport, TestResult, TransferCell};

/// Everything written for one fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// `full`, `rural`, `urban`, or a segment label.
    pub label: String,
    pub title: String,
    pub pooled: bool,
    pub fit: FitResult,
    pub marginal_effects: MarginalEffectsTable,
    pub random_shares: Vec<RandomShareRow>,
    pub retention: RetentionReport,
}

pub fn pooled_title(label: &str) -> String {
    match label {
        "full" => "Full model (all segments)".into(),
        "rural" => "Rural (all lighting conditions)".into(),
        "urban" => "Urban (all lighting conditions)".into(),
        other => other.into(),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn opt(v: Option<f64>, dp: usize) -> String {
    v.map(|x| format!("{x:.dp$}")).unwrap_or_default()
}

fn opt_full(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Loading groups in first-appearance order: which alternatives a coefficient enters.
fn groups(fit: &FitResult) -> Vec<(Vec<SeverityClass>, Vec<String>)> {
    let mut out: Vec<(Vec<SeverityClass>, Vec<String>)> = Vec::new();
    for c in fit.spec.coefficients() {
        let mut alts: Vec<SeverityClass> = c.loadings.iter().map(|l| l.alternative).collect();
        alts.sort();
        alts.dedup();
        match out.iter_mut().find(|(a, _)| *a == alts) {
            Some((_, ids)) => ids.push(c.id),
            None => out.push((alts, vec![c.id])),
        }
    }
    out
}

fn variable_label(fit: &FitResult, coefficient: &str) -> String {
    let terms: Vec<&Term> = fit.spec.terms.iter().filter(|t| t.id() == coefficient).collect();
    match terms.as_slice() {
        [] => "Constant".into(),
        [t] => t.covariate.clone(),
        many => {
            let mut names: Vec<&str> = many.iter().map(|t| t.covariate.as_str()).collect();
            names.dedup();
            names.join(", ")
        }
    }
}

pub fn render_fit_markdown(r: &ModelReport) -> String {
    let fit = &r.fit;
    let alts = &r.marginal_effects.alternatives;
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", r.title);
    if fit.is_mixed() {
        let _ = writeln!(
            s,
            "Mixed logit, {} Halton draws per observation ({} leading elements discarded).\n",
            fit.n_draws, fit.discard
        );
    } else {
        s.push_str("Multinomial logit.\n\n");
    }
    s.push_str("| Variable | Coefficient | t-statistic | p-value |");
    for a in alts {
        let _ = write!(s, " ME {} |", a.label());
    }
    s.push_str("\n|---|---:|---:|---:|");
    for _ in alts {
        s.push_str("---:|");
    }
    s.push('\n');
    let blank_me = " |".repeat(alts.len());
    let me_cells = |effects: &[f64]| -> String { effects.iter().map(|e| format!(" {e:.4} |")).collect() };

    for (group, ids) in groups(fit) {
        let names: Vec<&str> = group.iter().map(|a| a.label()).collect();
        let _ = writeln!(s, "| *Defined for {}* | | | |{blank_me}", names.join(" and "));
        for id in ids {
            let label = variable_label(fit, &id);
            let terms: Vec<&Term> = fit.spec.terms.iter().filter(|t| t.id() == id).collect();
            for p in fit.parameters.iter().filter(|p| p.coefficient == id) {
                let held = if p.held { " (held)" } else { "" };
                let (name, me) = match p.role {
                    ParameterRole::Sd => (
                        format!("{label} (standard deviation of parameter distribution)"),
                        blank_me.clone(),
                    ),
                    _ => {
                        let me = match terms.as_slice() {
                            [t] => r
                                .marginal_effects
                                .row(&t.id())
                                .map(|row| me_cells(&row.effects))
                                .unwrap_or_else(|| blank_me.clone()),
                            _ => blank_me.clone(),
                        };
                        (label.clone(), me)
                    }
                };
                let _ = writeln!(
                    s,
                    "| {name}{held} | {:.2} | {} | {} |{me}",
                    p.estimate,
                    opt(p.t_stat, 2),
                    opt(p.p_value, 3)
                );
            }
            if terms.len() > 1
                && fit
                    .parameters
                    .iter()
                    .any(|p| p.coefficient == id && p.role != ParameterRole::Sd)
            {
                for t in &terms {
                    if let Some(row) =
                        r.marginal_effects.rows.iter().find(|m| {
                            m.coefficient == id && m.covariate == t.covariate && m.alternative == t.alternative
                        })
                    {
                        let _ = writeln!(
                            s,
                            "| {} in {} utility | | | |{}",
                            t.covariate,
                            t.alternative.label(),
                            me_cells(&row.effects)
                        );
                    }
                }
            }
        }
    }

    if !r.random_shares.is_empty() {
        s.push_str("\nRandom parameters, share of the normal distribution above and below zero:\n\n");
        for sh in &r.random_shares {
            let _ = writeln!(
                s,
                "- {} ({}): mean {:.2}, standard deviation {:.2}; {:.1}% above zero, {:.1}% below zero",
                variable_label(fit, &sh.coefficient),
                sh.coefficient,
                sh.mean,
                sh.sd,
                100.0 * sh.share.positive,
                100.0 * sh.share.negative
            );
        }
    }

    s.push_str("\n| Model statistics | |\n|---|---:|\n");
    let _ = writeln!(s, "| Number of observations | {} |", fit.n_obs);
    let _ = writeln!(s, "| Log-likelihood at zero | {:.2} |", fit.ll_zero);
    let _ = writeln!(
        s,
        "| Restricted log-likelihood (constants only) | {:.2} |",
        fit.ll_restricted
    );
    let _ = writeln!(s, "| Log-likelihood at convergence | {:.2} |", fit.ll_converged);
    let _ = writeln!(s, "| ρ² | {:.3} |", fit.rho2);

    let ret = &r.retention;
    if !ret.flags.is_empty() {
        let _ = writeln!(
            s,
            "\nBelow the {:.0}% two-tailed threshold (|t| < {:.3}):\n",
            100.0 * ret.confidence,
            ret.critical_t
        );
        for f in &ret.flags {
            let action = match f.action {
                RetentionAction::Drop => "candidate for removal",
                RetentionAction::DemoteToFixed => "candidate for a fixed coefficient",
            };
            let _ = writeln!(s, "- {} (t = {:.2}): {action}", f.parameter, f.t_stat);
        }
    }
    if !fit.warnings.is_empty() {
        s.push_str("\nWarnings:\n\n");
        for w in &fit.warnings {
            let _ = writeln!(s, "- {w}");
        }
    }
    s
}

pub fn coefficient_rows(r: &ModelReport) -> Vec<Vec<String>> {
    r.fit
        .parameters
        .iter()
        .map(|p| {
            vec![
                r.label.clone(),
                p.name.clone(),
                p.coefficient.clone(),
                role_key(p.role).into(),
                p.estimate.to_string(),
                opt_full(p.std_error),
                opt_full(p.t_stat),
                opt_full(p.p_value),
                p.held.to_string(),
            ]
        })
        .collect()
}

pub const COEFFICIENT_HEADER: [&str; 9] = [
    "model",
    "parameter",
    "coefficient",
    "role",
    "estimate",
    "std_error",
    "t_stat",
    "p_value",
    "held",
];

fn role_key(role: ParameterRole) -> &'static str {
    match role {
        ParameterRole::Fixed => "fixed",
        ParameterRole::Mean => "mean",
        ParameterRole::Sd => "sd",
    }
}

pub const EFFECT_HEADER: [&str; 7] = [
    "model",
    "coefficient",
    "covariate",
    "alternative",
    "me_major",
    "me_minor",
    "me_possible_no",
];

pub fn effect_rows(r: &ModelReport) -> Vec<Vec<String>> {
    let alts = &r.marginal_effects.alternatives;
    r.marginal_effects
        .rows
        .iter()
        .map(|row| {
            let mut v = vec![
                r.label.clone(),
                row.coefficient.clone(),
                row.covariate.clone(),
                row.alternative.key().to_string(),
            ];
            for class in SeverityClass::ALL {
                v.push(
                    alts.iter()
                        .position(|a| *a == class)
                        .map(|i| row.effects[i].to_string())
                        .unwrap_or_default(),
                );
            }
            v
        })
        .collect()
}

pub const STATS_HEADER: [&str; 12] = [
    "model",
    "n_obs",
    "n_parameters",
    "ll_zero",
    "ll_restricted",
    "ll_converged",
    "rho2",
    "n_draws",
    "discard",
    "convergence",
    "iterations",
    "covariance_fallback",
];

pub fn stats_row(r: &ModelReport) -> Vec<String> {
    let f = &r.fit;
    vec![
        r.label.clone(),
        f.n_obs.to_string(),
        f.n_estimated().to_string(),
        f.ll_zero.to_string(),
        f.ll_restricted.to_string(),
        f.ll_converged.to_string(),
        f.rho2.to_string(),
        f.n_draws.to_string(),
        f.discard.to_string(),
        format!("{:?}", f.convergence.status).to_lowercase(),
        f.convergence.iterations.to_string(),
        f.covariance_fallback.to_string(),
    ]
}

pub const SHARE_HEADER: [&str; 6] = ["model", "coefficient", "mean", "sd", "share_positive", "share_negative"];

pub fn share_rows(r: &ModelReport) -> Vec<Vec<String>> {
    r.random_shares
        .iter()
        .map(|sh| {
            vec![
                r.label.clone(),
                sh.coefficient.clone(),
                sh.mean.to_string(),
                sh.sd.to_string(),
                sh.share.positive.to_string(),
                sh.share.negative.to_string(),
            ]
        })
        .collect()
}

pub const RETENTION_HEADER: [&str; 6] = ["model", "parameter", "coefficient", "t_stat", "critical_t", "action"];

pub fn retention_rows(r: &ModelReport) -> Vec<Vec<String>> {
    r.retention
        .flags
        .iter()
        .map(|f| {
            vec![
                r.label.clone(),
                f.parameter.clone(),
                f.coefficient.clone(),
                f.t_stat.to_string(),
                r.retention.critical_t.to_string(),
                match f.action {
                    RetentionAction::Drop => "drop".into(),
                    RetentionAction::DemoteToFixed => "demote_to_fixed".into(),
                },
            ]
        })
        .collect()
}

/// Segment counts, then one table per segment; `None` tables are empty segments.
pub fn render_describe_markdown(
    counts: &[(SegmentKey, usize)],
    excluded: usize,
    tables: &[(SegmentKey, Option<DescriptiveTable>)],
) -> String {
    let total: usize = counts.iter().map(|(_, n)| n).sum::<usize>() + excluded;
    let mut s =
        String::from("# Descriptive statistics\n\n| Segment | Observations | Percent of total |\n|---|---:|---:|\n");
    for (key, n) in counts {
        let pct = if total > 0 {
            100.0 * *n as f64 / total as f64
        } else {
            0.0
        };
        let _ = writeln!(s, "| {} | {n} | {pct:.1} |", key.title());
    }
    let _ = writeln!(
        s,
        "| Excluded (dawn/dusk) | {excluded} | {:.1} |",
        if total > 0 {
            100.0 * excluded as f64 / total as f64
        } else {
            0.0
        }
    );
    let _ = writeln!(s, "| Total | {total} | |");

    for (key, table) in tables {
        let _ = writeln!(s, "\n## {}\n", key.title());
        let Some(t) = table else {
            s.push_str("No observations in this segment; table omitted.\n");
            continue;
        };
        let _ = writeln!(s, "Observations: {}\n", t.n);
        s.push_str("| Severity | Percent |\n|---|---:|\n");
        for c in SeverityClass::ALL {
            let _ = writeln!(
                s,
                "| {} | {:.1} |",
                capitalize(c.label()),
                t.severity_percent[c.index()]
            );
        }
        let indicators: Vec<_> = t
            .rows
            .iter()
            .filter_map(|r| match r.summary {
                ColumnSummary::Indicator { percent } => Some((&r.name, percent)),
                _ => None,
            })
            .collect();
        if !indicators.is_empty() {
            s.push_str("\n| Indicator variable | Percent |\n|---|---:|\n");
            for (name, pct) in indicators {
                let _ = writeln!(s, "| {name} | {pct:.1} |");
            }
        }
        let continuous: Vec<_> = t
            .rows
            .iter()
            .filter_map(|r| match r.summary {
                ColumnSummary::Continuous { mean, sd, min, max } => Some((&r.name, mean, sd, min, max)),
                _ => None,
            })
            .collect();
        if !continuous.is_empty() {
            s.push_str("\n| Continuous variable | Mean | Standard deviation | Minimum | Maximum |\n|---|---:|---:|---:|---:|\n");
            for (name, mean, sd, min, max) in continuous {
                let _ = writeln!(s, "| {name} | {mean:.2} | {sd:.2} | {min:.2} | {max:.2} |");
            }
        }
    }
    s
}

pub const DESCRIBE_HEADER: [&str; 8] = ["segment", "variable", "kind", "percent", "mean", "sd", "min", "max"];

pub fn describe_rows(key: &SegmentKey, t: &DescriptiveTable) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in SeverityClass::ALL {
        rows.push(vec![
            key.label(),
            format!("severity={}", c.key()),
            "severity".into(),
            t.severity_percent[c.index()].to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    for r in &t.rows {
        rows.push(match r.summary {
            ColumnSummary::Indicator { percent } => vec![
                key.label(),
                r.name.clone(),
                "indicator".into(),
                percent.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
            ColumnSummary::Continuous { mean, sd, min, max } => vec![
                key.label(),
                r.name.clone(),
                "continuous".into(),
                String::new(),
                mean.to_string(),
                sd.to_string(),
                min.to_string(),
                max.to_string(),
            ],
        });
    }
    rows
}

/// Comment column of the partition table.
pub fn comment(result: &TestResult) -> &'static str {
    if result.reject_null {
        "LR > χ²"
    } else {
        "LR ≤ χ²"
    }
}

pub fn render_tests_markdown(report: &BatteryReport, hausman: &[(String, TestResult)]) -> String {
    let mut s = String::from("# Model specification tests\n");
    let _ = writeln!(s, "\nConfidence level: {:.0}%", 100.0 * report.confidence);

    s.push_str("\n## (a) Pooled versus segment models\n\n");
    if report.partition.is_empty() {
        s.push_str("No partition tests.\n");
    } else {
        s.push_str("| Model | LL pooled | Segment LLs | Σ LL segments | LR | df | χ² critical | Comment |\n");
        s.push_str("|---|---:|---|---:|---:|---:|---:|---|\n");
        for row in &report.partition {
            let r = &row.result;
            let pooled = &r.inputs[0];
            let parts = &r.inputs[1..];
            let list: Vec<String> = parts.iter().map(|p| format!("{:.2}", p.log_likelihood)).collect();
            let sum: f64 = parts.iter().map(|p| p.log_likelihood).sum();
            let _ = writeln!(
                s,
                "| {} | {:.2} | {} | {:.2} | {:.2} | {} | {:.2} | {} |",
                pooled_title(&row.label),
                pooled.log_likelihood,
                list.join(", "),
                sum,
                r.statistic,
                r.df,
                r.critical_value,
                comment(r)
            );
        }
    }

    s.push_str("\n## (b) Transferability between segments\n\n");
    s.push_str("Rows hold the data segment, columns the segment whose parameters are applied.\n");
    if report.transfer.is_empty() {
        s.push_str("\nNo transfer tests.\n");
    }
    for m in &report.transfer {
        let _ = writeln!(s, "\n### {}\n", capitalize(m.area.key()));
        s.push_str("| Data \\ Parameters |");
        for k in &m.segments {
            let _ = write!(s, " {} |", k.title());
        }
        s.push_str("\n|---|");
        for _ in &m.segments {
            s.push_str("---:|");
        }
        s.push('\n');
        for (k1, row) in m.segments.iter().zip(&m.cells) {
            let _ = write!(s, "| {} |", k1.title());
            for cell in row {
                let text = match cell {
                    TransferCell::Diagonal => "0".to_string(),
                    TransferCell::Test { result } => format!(
                        "{:.2} (df = {}){}",
                        result.statistic,
                        result.df,
                        if result.reject_null { " *" } else { "" }
                    ),
                    TransferCell::NotEvaluable { .. } => "n/a".to_string(),
                };
                let _ = write!(s, " {text} |");
            }
            s.push('\n');
        }
    }
    if report
        .transfer
        .iter()
        .any(|m| m.cells.iter().flatten().any(|c| matches!(c, TransferCell::Test { .. })))
    {
        let _ = writeln!(
            s,
            "\n\\* LR exceeds the χ² critical value at {:.0}%.",
            100.0 * report.confidence
        );
    }

    if !hausman.is_empty() {
        s.push_str("\n## (c) Hausman–McFadden IIA screen\n\n");
        s.push_str("| Segment | Statistic | df | χ² critical | Comment |\n|---|---:|---:|---:|---|\n");
        for (label, r) in hausman {
            let _ = writeln!(
                s,
                "| {label} | {:.2} | {} | {:.2} | {} |",
                r.statistic,
                r.df,
                r.critical_value,
                if r.reject_null {
                    "IIA rejected"
                } else {
                    "IIA not rejected"
                }
            );
        }
    }

    let mut notes: Vec<String> = report.notes.clone();
    for m in &report.transfer {
        for (k1, row) in m.segments.iter().zip(&m.cells) {
            for (k2, cell) in m.segments.iter().zip(row) {
                if let TransferCell::NotEvaluable { reason } = cell {
                    notes.push(format!("{k2} parameters on {k1} data not evaluable: {reason}"));
                }
            }
        }
    }
    for (label, r) in hausman {
        notes.extend(r.warnings.iter().map(|w| format!("{label} Hausman: {w}")));
    }
    if !notes.is_empty() {
        s.push_str("\nNotes:\n\n");
        for n in notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    s
}

pub const PARTITION_HEADER: [&str; 9] = [
    "model",
    "ll_pooled",
    "ll_segments_sum",
    "segments",
    "statistic",
    "df",
    "critical_value",
    "confidence",
    "reject_null",
];

pub fn partition_rows(report: &BatteryReport) -> Vec<Vec<String>> {
    report
        .partition
        .iter()
        .map(|row| {
            let r = &row.result;
            let parts = &r.inputs[1..];
            vec![
                row.label.clone(),
                r.inputs[0].log_likelihood.to_string(),
                parts.iter().map(|p| p.log_likelihood).sum::<f64>().to_string(),
                parts
                    .iter()
                    .map(|p| format!("{}={}", p.label, p.log_likelihood))
                    .collect::<Vec<_>>()
                    .join(";"),
                r.statistic.to_string(),
                r.df.to_string(),
                r.critical_value.to_string(),
                r.confidence.to_string(),
                r.reject_null.to_string(),
            ]
        })
        .collect()
}

pub const TRANSFER_HEADER: [&str; 10] = [
    "area",
    "data_segment",
    "parameter_segment",
    "ll_native",
    "ll_transferred",
    "statistic",
    "df",
    "critical_value",
    "reject_null",
    "note",
];

pub fn transfer_rows(report: &BatteryReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for m in &report.transfer {
        for (k1, row) in m.segments.iter().zip(&m.cells) {
            for (k2, cell) in m.segments.iter().zip(row) {
                let mut v = vec![m.area.key().to_string(), k1.label(), k2.label()];
                match cell {
                    TransferCell::Diagonal => v.extend(["", "", "0", "", "", "", "diagonal"].map(String::from)),
                    TransferCell::Test { result } => v.extend([
                        result.inputs[0].log_likelihood.to_string(),
                        result.inputs[1].log_likelihood.to_string(),
                        result.statistic.to_string(),
                        result.df.to_string(),
                        result.critical_value.to_string(),
                        result.reject_null.to_string(),
                        result.warnings.join("; "),
                    ]),
                    TransferCell::NotEvaluable { reason } => {
                        v.extend(["", "", "", "", "", ""].map(String::from));
                        v.push(format!("not evaluable: {reason}"));
                    }
                }
                rows.push(v);
            }
        }
    }
    rows
}

pub const HAUSMAN_HEADER: [&str; 7] = [
    "segment",
    "statistic",
    "df",
    "critical_value",
    "confidence",
    "reject_null",
    "warnings",
];

pub fn hausman_rows(results: &[(String, TestResult)]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|(label, r)| {
            vec![
                label.clone(),
                r.statistic.to_string(),
                r.df.to_string(),
                r.critical_value.to_string(),
                r.confidence.to_string(),
                r.reject_null.to_string(),
                r.warnings.join("; "),
            ]
        })
        .collect()
}
