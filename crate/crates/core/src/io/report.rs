//! Persistent result records: one JSON report with stable key order plus
//! flat CSV tables for external plotting. Writing the same record twice
//! produces identical bytes — timestamps are optional and left unset by the
//! deterministic paths.

use crate::error::{CiaError, Result};
use crate::eval::{AsrReport, CeProfile, EpsilonReport, SweepAbCell, VariantReport};
use crate::io::config::{run_id, RunConfig, TOOL_VERSION};
use crate::objective::LossBreakdown;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledAsr {
    pub label: String,
    pub report: AsrReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCeProfile {
    pub label: String,
    pub profile: CeProfile,
}

/// Everything a run produced. Sections irrelevant to a given subcommand
/// stay empty and their tables are simply not written.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ResultRecord {
    pub run_id: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub started_at: Option<String>,
    pub finished_at: Option<String>,
    pub loss_history: Vec<LossBreakdown>,
    pub asr_reports: Vec<LabeledAsr>,
    pub ce_profiles: Vec<LabeledCeProfile>,
    pub sweep_ab: Vec<SweepAbCell>,
    pub sweep_eps: Vec<EpsilonReport>,
    pub method_table: Vec<VariantReport>,
    /// Files the run wrote, relative to its output directory.
    pub artifacts: Vec<String>,
}

impl ResultRecord {
    pub fn new(config: RunConfig) -> Result<Self> {
        Ok(ResultRecord {
            run_id: run_id(&config)?,
            tool_version: TOOL_VERSION.to_string(),
            config,
            ..ResultRecord::default()
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_file(path: &Path, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CiaError::io(path.display().to_string(), e))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn asr_table(labeled: &[LabeledAsr]) -> String {
    let mut out = String::from("label,category,hits,total,asr\n");
    for l in labeled {
        for c in &l.report.per_category {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&l.label),
                c.category,
                c.hits,
                c.total,
                c.asr
            ));
        }
        out.push_str(&format!(
            "{},overall,{},{},{}\n",
            csv_field(&l.label),
            l.report.hits,
            l.report.total,
            l.report.overall_asr
        ));
    }
    out
}

fn verdict_table(labeled: &[LabeledAsr]) -> String {
    let mut out = String::from("label,category,prompt,generated,hit\n");
    for l in labeled {
        for v in &l.report.verdicts {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&l.label),
                v.category,
                csv_field(&v.prompt),
                csv_field(&v.generated),
                v.hit
            ));
        }
    }
    out
}

fn ce_table(labeled: &[LabeledCeProfile]) -> String {
    let mut out = String::from("label,position,segment,ce\n");
    for l in labeled {
        for p in &l.profile.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&l.label),
                p.position,
                p.segment,
                p.ce
            ));
        }
    }
    out
}

fn sweep_ab_table(cells: &[SweepAbCell]) -> String {
    let mut out = String::from("alpha,beta,overall_asr\n");
    for c in cells {
        out.push_str(&format!("{},{},{}\n", c.alpha, c.beta, c.overall_asr));
    }
    out
}

fn sweep_eps_table(reports: &[EpsilonReport]) -> String {
    let mut out = String::from("epsilon,hits,total,overall_asr\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epsilon, r.report.hits, r.report.total, r.report.overall_asr
        ));
    }
    out
}

fn method_tables(rows: &[VariantReport]) -> String {
    let mut out = String::from("variant,category,hits,total,asr\n");
    for row in rows {
        for c in &row.report.per_category {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.variant, c.category, c.hits, c.total, c.asr
            ));
        }
        out.push_str(&format!(
            "{},overall,{},{},{}\n",
            row.variant, row.report.hits, row.report.total, row.report.overall_asr
        ));
    }
    out
}

fn loss_table(history: &[LossBreakdown]) -> String {
    let mut out = String::from("iteration,l_v,l_t,l_o,l_total\n");
    for (i, b) in history.iter().enumerate() {
        out.push_str(&format!("{},{},{},{},{}\n", i, b.l_v, b.l_t, b.l_o, b.l_total));
    }
    out
}

/// Write `report.json` plus one CSV per non-empty section into `dir`.
/// Returns every path written, `report.json` first.
pub fn write_report(record: &ResultRecord, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| CiaError::io(dir.display().to_string(), e))?;
    let mut written = Vec::new();

    let mut json = serde_json::to_string_pretty(record)
        .map_err(|e| CiaError::Config(format!("report serialization failed: {e}")))?;
    json.push('\n');
    write_file(&dir.join("report.json"), &json, &mut written)?;

    if !record.asr_reports.is_empty() {
        write_file(&dir.join("asr.csv"), &asr_table(&record.asr_reports), &mut written)?;
        write_file(
            &dir.join("verdicts.csv"),
            &verdict_table(&record.asr_reports),
            &mut written,
        )?;
    }
    if !record.ce_profiles.is_empty() {
        write_file(
            &dir.join("ce_profiles.csv"),
            &ce_table(&record.ce_profiles),
            &mut written,
        )?;
    }
    if !record.sweep_ab.is_empty() {
        write_file(&dir.join("sweep_ab.csv"), &sweep_ab_table(&record.sweep_ab), &mut written)?;
    }
    if !record.sweep_eps.is_empty() {
        write_file(
            &dir.join("sweep_eps.csv"),
            &sweep_eps_table(&record.sweep_eps),
            &mut written,
        )?;
    }
    if !record.method_table.is_empty() {
        write_file(
            &dir.join("methods.csv"),
            &method_tables(&record.method_table),
            &mut written,
        )?;
    }
    if !record.loss_history.is_empty() {
        write_file(
            &dir.join("loss_history.csv"),
            &loss_table(&record.loss_history),
            &mut written,
        )?;
    }
    Ok(written)
}

/// Parse a `report.json` back into a record.
pub fn read_report(path: impl AsRef<Path>) -> Result<ResultRecord> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CiaError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CiaError::format(path.display().to_string(), e.to_string()))
}
