use std::fmt::Write as _;
use std::path::Path;

use super::config::ExperimentConfig;
use super::metrics::{
    attn_table, conflict_table, results_table, train_log_header, vic_table, Table, ATTN_FILE, ATTN_HEADER,
    CONFLICT_FILE, CONFLICT_HEADER, RESULTS_FILE, RESULTS_HEADER, TRAIN_LOG_FILE, VIC_FILE, VIC_HEADER,
};
use super::run::{evaluate_checkpoint, prepare_dir, train_run, write_table, PretrainOutput};
use crate::checkpoint::Checkpoint;
use crate::diagnostics::{box_stats, BoxStats, GradConflictRecord};
use crate::error::{Error, Result};
use crate::eval::{EvalResult, ProbeKind};
use crate::regimes::{GraftOrder, LowerMode, Regime};

pub const REPORT_FILE: &str = "report.md";

const MIM_CL: Regime = Regime::Graft { order: GraftOrder::MimCl, lower: LowerMode::Freeze };
const CL_MIM: Regime = Regime::Graft { order: GraftOrder::ClMim, lower: LowerMode::Freeze };

/// Whether `MIM→CL > MTL > CL→MIM` holds for one probe.
#[derive(Clone, Debug, PartialEq)]
pub struct TrendFlag {
    pub probe: String,
    pub mim_cl: f64,
    pub mtl: f64,
    pub cl_mim: f64,
    pub ordering_holds: bool,
    pub mim_cl_beats_cl_mim: bool,
}

/// Gradient-conflict summary of the joint run's final measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct ConflictSummary {
    pub epoch: usize,
    pub records: Vec<GradConflictRecord>,
    pub boxes: BoxStats,
    pub negative: usize,
    pub skipped_blocks: usize,
}

/// Comparison of the six regimes under the three probes.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    /// Regime-major, probe-minor, in suite order.
    pub results: Vec<EvalResult>,
    pub trends: Vec<TrendFlag>,
    pub conflict: Option<ConflictSummary>,
    /// Every joint-training log row carries both losses.
    pub mtl_losses_logged: bool,
    /// Every joint-training row satisfies `total == mim + cl` exactly.
    pub mtl_losses_add_up: bool,
    pub checkpoint_hashes: Vec<(String, u64)>,
    pub train_log: Table,
    pub conflict_log: Table,
    pub vic: Table,
    pub attn: Table,
    pub results_table: Table,
}

fn run_id(cfg: &ExperimentConfig, regime: Regime) -> String {
    cfg.with_regime(regime).run_id()
}

/// Trains the six regimes from one seed, reusing the single-objective
/// checkpoints as phase 1 of the two-phase regimes, and evaluates each
/// with the linear, 1% and 10% probes.
pub fn reproduce_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    reproduce_suite_with(cfg, &mut |_| {})
}

/// [`reproduce_suite`] reporting a line per finished stage.
pub fn reproduce_suite_with(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<SuiteReport> {
    cfg.validate()?;
    let n_stages = cfg.train.stage_plan.n_stages();
    let mut report = SuiteReport {
        results: Vec::new(),
        trends: Vec::new(),
        conflict: None,
        mtl_losses_logged: false,
        mtl_losses_add_up: false,
        checkpoint_hashes: Vec::new(),
        train_log: Table::new(&train_log_header(n_stages)),
        conflict_log: Table::new(&CONFLICT_HEADER),
        vic: Table::new(&VIC_HEADER),
        attn: Table::new(&ATTN_HEADER),
        results_table: Table::new(&RESULTS_HEADER),
    };
    let mut mim_ckpt: Option<Checkpoint<f32>> = None;
    let mut cl_ckpt: Option<Checkpoint<f32>> = None;
    for regime in Regime::SUITE {
        let rcfg = cfg.with_regime(regime);
        let phase1 = match regime {
            r if r == CL_MIM => cl_ckpt.as_ref(),
            Regime::Mim | Regime::Cl | Regime::Mtl => None,
            _ => mim_ckpt.as_ref(),
        };
        if regime.graft().is_some() && phase1.is_none() {
            return Err(Error::Config(format!("suite order leaves {regime} without a phase-1 checkpoint")));
        }
        let out = train_run(&rcfg, phase1)?;
        let id = out.run_id.clone();
        progress(&format!("trained {} ({} steps)", regime.label(), out.train.log.len()));
        let rows = evaluate_checkpoint(&rcfg, &out.checkpoint, &regime.to_string())?;
        progress(&format!(
            "evaluated {}: {}",
            regime.label(),
            rows.iter().map(|r| format!("{} {:.4}", r.probe, r.top1)).collect::<Vec<_>>().join(", ")
        ));
        report.train_log.extend(out.train_log(n_stages));
        report.conflict_log.extend(conflict_table(&id, &out.train.conflicts));
        report.vic.extend(vic_table(&id, &out.vic));
        report.attn.extend(attn_table(&id, &out.attn));
        report.results_table.extend(results_table(&id, &rows));
        report.checkpoint_hashes.push((id, out.checkpoint.content_hash()));
        report.results.extend(rows);
        if regime == Regime::Mtl {
            summarize_mtl(cfg, &out, &mut report)?;
        }
        match regime {
            Regime::Mim => mim_ckpt = Some(out.checkpoint),
            Regime::Cl => cl_ckpt = Some(out.checkpoint),
            _ => {}
        }
    }
    report.trends = trends(&report.results);
    Ok(report)
}

fn summarize_mtl(cfg: &ExperimentConfig, out: &PretrainOutput, report: &mut SuiteReport) -> Result<()> {
    let log = &out.train.log;
    report.mtl_losses_logged = !log.is_empty() && log.iter().all(|r| r.loss_mim.is_some() && r.loss_cl.is_some());
    report.mtl_losses_add_up = report.mtl_losses_logged
        && log.iter().all(|r| {
            let (m, c) = (r.loss_mim.unwrap_or(f64::NAN), r.loss_cl.unwrap_or(f64::NAN));
            f64::from(m as f32 + c as f32) == r.loss_total
        });
    if let Some(&(last, _)) = out.train.conflicts.last() {
        let records: Vec<GradConflictRecord> =
            out.train.conflicts.iter().filter(|(e, _)| *e == last).map(|(_, r)| r.clone()).collect();
        let boxes = box_stats(&records, cfg.vit.depth)?;
        report.conflict = Some(ConflictSummary {
            epoch: last,
            negative: records.iter().filter(|r| r.cosine < 0.0).count(),
            boxes,
            records,
            skipped_blocks: out.train.skipped_conflict_blocks,
        });
    }
    Ok(())
}

fn top1(results: &[EvalResult], regime: Regime, probe: &str) -> f64 {
    let name = regime.to_string();
    results
        .iter()
        .find(|r| r.regime == name && r.probe == probe)
        .map_or(f64::NAN, |r| r.top1)
}

fn trends(results: &[EvalResult]) -> Vec<TrendFlag> {
    ProbeKind::SUITE
        .iter()
        .map(|k| {
            let probe = k.to_string();
            let (a, b, c) = (top1(results, MIM_CL, &probe), top1(results, Regime::Mtl, &probe), top1(results, CL_MIM, &probe));
            TrendFlag {
                probe,
                mim_cl: a,
                mtl: b,
                cl_mim: c,
                ordering_holds: a > b && b > c,
                mim_cl_beats_cl_mim: a > c,
            }
        })
        .collect()
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl SuiteReport {
    /// Markdown report: accuracy table, trend observations and the
    /// per-block conflict boxes of the joint run.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let probes: Vec<String> = ProbeKind::SUITE.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "# Desk-scale regime comparison\n");
        let _ = writeln!(s, "| Regime | {} |", probes.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(probes.len()));
        for regime in Regime::SUITE {
            let cells: Vec<String> = probes.iter().map(|p| format!("{:.2}", 100.0 * top1(&self.results, regime, p))).collect();
            let _ = writeln!(s, "| {} | {} |", regime.label(), cells.join(" | "));
        }
        let _ = writeln!(s, "\n## Observed trends (not asserted)\n");
        for t in &self.trends {
            let _ = writeln!(
                s,
                "- {}: MIM->CL {:.4}, MTL {:.4}, CL->MIM {:.4}; MIM->CL > MTL > CL->MIM: {}; MIM->CL > CL->MIM: {}",
                t.probe,
                t.mim_cl,
                t.mtl,
                t.cl_mim,
                yes_no(t.ordering_holds),
                yes_no(t.mim_cl_beats_cl_mim)
            );
        }
        let _ = writeln!(
            s,
            "- MTL losses logged separately: {}; total equals their sum: {}",
            yes_no(self.mtl_losses_logged),
            yes_no(self.mtl_losses_add_up)
        );
        match &self.conflict {
            None => {
                let _ = writeln!(s, "\nNo gradient-conflict measurement (diag.conflict_batches = 0).");
            }
            Some(c) => {
                let _ = writeln!(s, "\n## MTL gradient conflict after epoch {}\n", c.epoch + 1);
                let _ = writeln!(s, "| Block | n | min | q1 | median | q3 | max |");
                let _ = writeln!(s, "|---|---|---|---|---|---|---|");
                for b in &c.boxes.blocks {
                    let _ = writeln!(
                        s,
                        "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                        b.block, b.n, b.min, b.q1, b.median, b.q3, b.max
                    );
                }
                let _ = writeln!(
                    s,
                    "\nMedian regression: slope {:.5} per block, intercept {:.5}.",
                    c.boxes.slope, c.boxes.intercept
                );
                let _ = writeln!(
                    s,
                    "Negative cosines: {} of {} (present: {}). Blocks skipped for zero gradients: {}.",
                    c.negative,
                    c.records.len(),
                    yes_no(c.negative > 0),
                    c.skipped_blocks
                );
            }
        }
        s
    }

    /// Writes the resolved config, the metrics files and the report.
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        prepare_dir(cfg, dir)?;
        write_table(&self.train_log, &dir.join(TRAIN_LOG_FILE))?;
        write_table(&self.conflict_log, &dir.join(CONFLICT_FILE))?;
        write_table(&self.vic, &dir.join(VIC_FILE))?;
        write_table(&self.attn, &dir.join(ATTN_FILE))?;
        write_table(&self.results_table, &dir.join(RESULTS_FILE))?;
        std::fs::write(dir.join(REPORT_FILE), self.render())?;
        Ok(())
    }

    /// Identifier of `regime` in this report's tables.
    pub fn run_id(cfg: &ExperimentConfig, regime: Regime) -> String {
        run_id(cfg, regime)
    }
}
