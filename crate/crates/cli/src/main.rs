use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use graftlab::checkpoint::Checkpoint;
use graftlab::data::write_dump;
use graftlab::experiments::{
    attn_rows, attn_table, check_seed, checkpoint_config, conflict_rows, evaluate_checkpoint, lr_grid_search,
    num, phase1_regime, prepare_dir, reproduce_suite_with, resolve_out_dir, results_table, train_run, vic_rows,
    vic_table, write_table, ExperimentConfig, Table, ATTN_FILE, CONFLICT_FILE, CONFLICT_HEADER, GRID_FILE,
    OUT_DIR_ENV, RESULTS_FILE, VIC_FILE,
};
use graftlab::Error;

#[derive(Parser, Debug)]
#[command(name = "graftlab", version, about = "Layer-grafted self-supervised pre-training at desk scale")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key; later overrides win over earlier ones and the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (beats the GRAFTLAB_OUT variable and `out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pre-train the configured regime from scratch.
    Pretrain,
    /// Run phase 2 of a two-phase regime from a phase-1 checkpoint.
    Graft {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
    },
    /// Run the configured probes on a checkpoint.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
    },
    /// Representation diagnostics of a checkpoint.
    Diagnose {
        #[arg(value_enum)]
        kind: Diagnostic,
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
    },
    /// Stage learning-rate grid search from a reconstruction phase-1 checkpoint.
    GridSearch {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
    },
    /// Write images and labels of one split to a binary file.
    DumpDataset {
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        /// Number of images (default: the whole split).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train and evaluate the six regimes and write the comparison report.
    Suite,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Diagnostic {
    GradConflict,
    Vic,
    Attn,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Split {
    Train,
    Eval,
}

fn kind(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Config(_) | Error::UnknownConfigKey(_) | Error::InvalidConfigValue { .. } => ("config", 2),
        Error::Checkpoint(_) | Error::PathMismatch { .. } => ("checkpoint", 3),
        Error::SeedConflict { .. } => ("seed-conflict", 4),
        Error::Io(_) => ("io", 5),
        Error::Dataset(_) => ("dataset", 6),
        _ => ("internal", 1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (k, code) = kind(&e);
            eprintln!("error[{k}]: {e}");
            ExitCode::from(code)
        }
    }
}

/// Defaults, then the checkpoint's run config (except its output
/// directory), then `--config`, then `--set` in order.
fn resolve(cli: &Cli, base: Option<&ExperimentConfig>) -> graftlab::Result<ExperimentConfig> {
    let mut cfg = base.cloned().unwrap_or_default();
    cfg.out_dir = ExperimentConfig::default().out_dir;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for s in &cli.sets {
        cfg.apply_override(s)?;
    }
    let env = std::env::var(OUT_DIR_ENV).ok();
    cfg.out_dir = resolve_out_dir(&cfg, cli.out.as_deref(), env.as_deref());
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a checkpoint and the config of the run that wrote it.
fn load_ckpt(cli: &Cli, path: &Path) -> graftlab::Result<(ExperimentConfig, Option<ExperimentConfig>, Checkpoint<f32>)> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("{} does not exist", path.display())));
    }
    let ckpt_cfg = checkpoint_config(path)?;
    let cfg = resolve(cli, ckpt_cfg.as_ref())?;
    check_seed(&cfg, ckpt_cfg.as_ref())?;
    Ok((cfg, ckpt_cfg, Checkpoint::load(path)?))
}

fn say(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn run(cli: &Cli) -> graftlab::Result<()> {
    match &cli.command {
        Command::Pretrain => {
            let cfg = resolve(cli, None)?;
            let out = train_run(&cfg, None)?;
            out.write(&cfg, &cfg.out_dir)?;
            say(&format!("{}: {} steps -> {}", out.run_id, out.train.log.len(), cfg.out_dir.display()));
        }
        Command::Graft { ckpt } => {
            let (cfg, ckpt_cfg, phase1) = load_ckpt(cli, ckpt)?;
            let regime = cfg.train.regime;
            let expected = phase1_regime(regime)
                .ok_or_else(|| Error::Config(format!("regime: graft needs a two-phase regime, got {regime}")))?;
            if let Some(c) = &ckpt_cfg {
                if c.train.regime != expected {
                    return Err(Error::Config(format!(
                        "regime: {regime} starts from a {expected} checkpoint, {} holds {}",
                        ckpt.display(),
                        c.train.regime
                    )));
                }
            }
            let out = train_run(&cfg, Some(&phase1))?;
            out.write(&cfg, &cfg.out_dir)?;
            say(&format!("{}: {} steps -> {}", out.run_id, out.train.log.len(), cfg.out_dir.display()));
        }
        Command::Evaluate { ckpt } => {
            let (cfg, _, weights) = load_ckpt(cli, ckpt)?;
            let rows = evaluate_checkpoint(&cfg, &weights, &cfg.train.regime.to_string())?;
            prepare_dir(&cfg, &cfg.out_dir)?;
            write_table(&results_table(&cfg.run_id(), &rows), &cfg.out_dir.join(RESULTS_FILE))?;
            for r in &rows {
                say(&format!("{} {} top1={}", r.regime, r.probe, num(r.top1)));
            }
        }
        Command::Diagnose { kind, ckpt } => {
            let (cfg, _, weights) = load_ckpt(cli, ckpt)?;
            prepare_dir(&cfg, &cfg.out_dir)?;
            let id = cfg.run_id();
            match kind {
                Diagnostic::GradConflict => {
                    let (records, skipped) = conflict_rows(&cfg, &weights)?;
                    let mut t = Table::new(&CONFLICT_HEADER);
                    for r in &records {
                        t.push(vec![id.clone(), String::new(), r.block.to_string(), r.batch.to_string(), num(r.cosine)]);
                    }
                    write_table(&t, &cfg.out_dir.join(CONFLICT_FILE))?;
                    say(&format!("{} conflict rows, {skipped} blocks skipped", records.len()));
                }
                Diagnostic::Vic => {
                    let rows = vic_rows(&cfg, &weights)?;
                    write_table(&vic_table(&id, &rows), &cfg.out_dir.join(VIC_FILE))?;
                    say(&format!("{} vic rows", rows.len()));
                }
                Diagnostic::Attn => {
                    let rows = attn_rows(&cfg, &weights)?;
                    write_table(&attn_table(&id, &rows), &cfg.out_dir.join(ATTN_FILE))?;
                    say(&format!("{} attention rows", rows.len()));
                }
            }
        }
        Command::GridSearch { ckpt } => {
            let (cfg, ckpt_cfg, phase1) = load_ckpt(cli, ckpt)?;
            if let Some(c) = &ckpt_cfg {
                if c.train.regime != graftlab::regimes::Regime::Mim {
                    return Err(Error::Config(format!(
                        "regime: grid search starts from a mim checkpoint, {} holds {}",
                        ckpt.display(),
                        c.train.regime
                    )));
                }
            }
            let grid = lr_grid_search(&cfg, &phase1, None)?;
            prepare_dir(&cfg, &cfg.out_dir)?;
            write_table(&grid.table(&cfg), &cfg.out_dir.join(GRID_FILE))?;
            let best = grid.best_cell();
            let lrs: Vec<String> = best.stage_lr.iter().map(|v| num(*v)).collect();
            std::fs::write(
                cfg.out_dir.join("best.txt"),
                format!("graft.stage_lr={}\nlinear_top1={}\n", lrs.join(","), num(best.linear_top1)),
            )?;
            say(&format!("{} cells; best graft.stage_lr={} linear_top1={}", grid.cells.len(), lrs.join(","), num(best.linear_top1)));
        }
        Command::DumpDataset { split, count } => {
            let cfg = resolve(cli, None)?;
            let data = cfg.data_config();
            let mut indices = match split {
                Split::Train => data.train_indices(),
                Split::Eval => data.eval_indices(),
            };
            if let Some(n) = count {
                indices.truncate(*n);
            }
            prepare_dir(&cfg, &cfg.out_dir)?;
            let name = match split {
                Split::Train => "train.bin",
                Split::Eval => "eval.bin",
            };
            let path = cfg.out_dir.join(name);
            let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write_dump(&data, &indices, &mut file)?;
            file.flush()?;
            say(&format!("{} images -> {}", indices.len(), path.display()));
        }
        Command::Suite => {
            let cfg = resolve(cli, None)?;
            let report = reproduce_suite_with(&cfg, &mut |l| eprintln!("{l}"))?;
            report.write(&cfg, &cfg.out_dir)?;
            say(&report.render());
        }
    }
    Ok(())
}
