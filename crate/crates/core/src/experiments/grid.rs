use std::collections::BTreeMap;

use super::config::ExperimentConfig;
use super::metrics::{grid_header, num, opt, Table};
use super::run::train_run;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::eval::{evaluate, ProbeKind};
use crate::regimes::{Regime, StagePlan};

/// One stage learning-rate combination and its probe scores.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    /// Position in the canonical (first stage slowest) enumeration.
    pub index: usize,
    pub stage_lr: Vec<f64>,
    pub linear_top1: f64,
    pub finetune_top1: Option<f64>,
    pub checkpoint_hash: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutput {
    /// Cells in canonical order, whatever order they ran in.
    pub cells: Vec<GridCell>,
    /// Index of the cell with the best linear probe (lowest index on ties).
    pub best: usize,
}

/// Every assignment of `values` to `n_stages` stages, first stage slowest.
pub fn grid_cells(values: &[f64], n_stages: usize) -> Vec<Vec<f64>> {
    let mut cells = vec![Vec::new()];
    for _ in 0..n_stages {
        cells = cells
            .into_iter()
            .flat_map(|c: Vec<f64>| {
                values.iter().map(move |&v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    cells
}

/// Configuration of the layer-grafted run of one cell.
pub fn cell_config(cfg: &ExperimentConfig, stage_lr: &[f64]) -> ExperimentConfig {
    let mut c = cfg.with_regime(Regime::LayerGrafted);
    c.train.stage_plan = StagePlan { base_lr: stage_lr.to_vec() };
    c.diag.vic = false;
    c.diag.attn = false;
    c.diag.conflict_batches = 0;
    c
}

/// Phase-2 contrastive training from `phase1` with `stage_lr`, then the
/// linear probe and, when enabled, full fine-tuning.
pub fn run_grid_cell(cfg: &ExperimentConfig, phase1: &Checkpoint<f32>, index: usize, stage_lr: &[f64]) -> Result<GridCell> {
    let c = cell_config(cfg, stage_lr);
    let out = train_run(&c, Some(phase1))?;
    let data = c.data_config();
    let tag = cell_id(cfg, index);
    let linear = evaluate(&out.checkpoint, &c.vit, &data, &c.probe_config(ProbeKind::Linear), &tag)?;
    let finetune = if cfg.grid.finetune {
        Some(evaluate(&out.checkpoint, &c.vit, &data, &c.probe_config(ProbeKind::Finetune), &tag)?.top1)
    } else {
        None
    };
    Ok(GridCell {
        index,
        stage_lr: stage_lr.to_vec(),
        linear_top1: linear.top1,
        finetune_top1: finetune,
        checkpoint_hash: out.checkpoint.content_hash(),
    })
}

pub fn cell_id(cfg: &ExperimentConfig, index: usize) -> String {
    format!("grid-s{}-cell{index}", cfg.seed)
}

/// Runs every cell of `grid.values` over the configured stages. `order`
/// permutes execution (default canonical); `grid.workers` threads share
/// the cells.
pub fn lr_grid_search(cfg: &ExperimentConfig, phase1: &Checkpoint<f32>, order: Option<&[usize]>) -> Result<GridOutput> {
    cfg.validate()?;
    let cells = grid_cells(&cfg.grid.values, cfg.train.stage_plan.n_stages());
    let order: Vec<usize> = order.map_or_else(|| (0..cells.len()).collect(), <[usize]>::to_vec);
    let mut sorted = order.clone();
    sorted.sort_unstable();
    if sorted != (0..cells.len()).collect::<Vec<_>>() {
        return Err(Error::Config(format!("cell order must be a permutation of 0..{}", cells.len())));
    }
    let workers = cfg.grid.workers.min(order.len()).max(1);
    let mut done: BTreeMap<usize, GridCell> = BTreeMap::new();
    if workers == 1 {
        for &i in &order {
            done.insert(i, run_grid_cell(cfg, phase1, i, &cells[i])?);
        }
    } else {
        let results: Vec<Result<Vec<GridCell>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let mine: Vec<usize> = order.iter().copied().skip(w).step_by(workers).collect();
                    let cells = &cells;
                    s.spawn(move || mine.iter().map(|&i| run_grid_cell(cfg, phase1, i, &cells[i])).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("grid worker panicked")).collect()
        });
        for r in results {
            for cell in r? {
                done.insert(cell.index, cell);
            }
        }
    }
    let cells: Vec<GridCell> = done.into_values().collect();
    let best = cells
        .iter()
        .enumerate()
        .fold(0, |b, (i, c)| if c.linear_top1 > cells[b].linear_top1 { i } else { b });
    Ok(GridOutput { cells, best })
}

impl GridOutput {
    pub fn table(&self, cfg: &ExperimentConfig) -> Table {
        let n = cfg.train.stage_plan.n_stages();
        let mut t = Table::new(&grid_header(n));
        for c in &self.cells {
            let mut row = vec![cell_id(cfg, c.index)];
            row.extend(c.stage_lr.iter().map(|&v| num(v)));
            row.push(num(c.linear_top1));
            row.push(opt(c.finetune_top1));
            t.push(row);
        }
        t
    }

    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}
