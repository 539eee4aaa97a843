//! Command-line front end.

pub mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;
use crate::eval::{ablations_from_runs, sweep_m_from_runs, write_plot_data, MethodResult, MetricsReport, SweepRow, Variant};
use crate::pipeline::{PipelineConfig, SeedRun};
pub use store::{Manifest, StageError, Store, STAGES};

#[derive(Debug, Parser)]
#[command(name = "demo-mbo", version, about = "Offline model-based optimization by design editing")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; omitted sections and keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run a single seed instead of `run.seeds`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts, manifest and reports.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Use the published full-scale hyperparameters.
    #[arg(long, global = true)]
    pub paper_parity: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "DEMO_MBO_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// All stages: data, surrogate, synthetic data, diffusion, editing, evaluation.
    Pipeline,
    GenData,
    TrainSurrogate,
    Synthesize,
    TrainDiffusion,
    Edit,
    /// Scores the edited candidates and writes the metrics report.
    Evaluate,
    /// Full method against its two ablations on shared seeds.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "full,no_pseudo_target,no_editing")]
        variants: Vec<String>,
    },
    /// Re-edits with each noise level using the trained networks.
    SweepM {
        #[arg(long, value_delimiter = ',', default_value = "0,100,200,300,400,500,600,700,800,900,1000")]
        m_values: Vec<usize>,
    },
}

/// Config from the common flags.
pub fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => PipelineConfig::default(),
    };
    if common.paper_parity {
        cfg.apply_paper_parity();
    }
    if let Some(s) = common.seed {
        cfg.run.seeds = vec![s];
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output of a full pipeline run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub candidates: Vec<PathBuf>,
    pub report_dir: PathBuf,
    pub report: MetricsReport,
}

fn stage_err(stage: &'static str) -> impl FnOnce(crate::Error) -> StageError {
    move |source| StageError { stage, source }
}

fn edit_all(store: &mut Store) -> std::result::Result<Vec<SeedRun>, StageError> {
    let seeds = store.cfg.run.seeds.clone();
    seeds.into_iter().map(|s| store.edit(s)).collect()
}

fn evaluate(store: &mut Store, runs: &[SeedRun]) -> std::result::Result<(PathBuf, MetricsReport), StageError> {
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    let dir = store.report_dir("evaluate", &seeds);
    let build = || -> Result<MetricsReport> {
        let task = store.cfg.task.name.clone();
        let scores = runs.iter().map(|r| r.candidates.iter().map(|c| c.y_norm).collect()).collect();
        let result = MethodResult::new("demo", &task, seeds.clone(), scores)?;
        let report = MetricsReport::build(std::slice::from_ref(&result))?;
        std::fs::create_dir_all(&dir)?;
        report.write_csv(&dir.join("metrics.csv"))?;
        report.write_json(&dir.join("metrics.json"))?;
        Ok(report)
    };
    let report = build().map_err(stage_err("evaluate"))?;
    store.mark_evaluated(&seeds, &dir)?;
    Ok((dir, report))
}

/// Runs every stage for every configured seed under `out`.
pub fn cmd_pipeline(cfg: PipelineConfig, out: &Path) -> std::result::Result<PipelineOutcome, StageError> {
    let mut store = Store::open(out, cfg).map_err(stage_err("gen-data"))?;
    let runs = edit_all(&mut store)?;
    let (report_dir, report) = evaluate(&mut store, &runs)?;
    let candidates = runs.iter().map(|r| store.candidates_path(r.seed)).collect();
    Ok(PipelineOutcome {
        candidates,
        report_dir,
        report,
    })
}

/// Writes the ablation report and returns its directory.
pub fn cmd_ablate(cfg: PipelineConfig, out: &Path, variants: &[Variant]) -> std::result::Result<PathBuf, StageError> {
    let mut store = Store::open(out, cfg).map_err(stage_err("gen-data"))?;
    let runs = edit_all(&mut store)?;
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    let dir = store.report_dir("ablate", &seeds);
    let cfg = store.cfg.clone();
    let go = || -> Result<()> {
        let results = crate::par::try_map_range(variants.len(), |i| match variants[i] {
            Variant::NoPseudoTarget => {
                // Reuse the persisted plain network where possible.
                let scores = runs
                    .iter()
                    .map(|r| {
                        let net = store.plain_diffusion(&r.offline, r.seed)?;
                        let raw = crate::pipeline::edit(&net, &r.offline, &cfg.edit_config(), r.seed)?;
                        Ok(crate::pipeline::score_candidates(&r.offline, &raw)?.into_iter().map(|c| c.y_norm).collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                MethodResult::new(variants[i].name(), &cfg.task.name, seeds.clone(), scores)
            }
            v => Ok(ablations_from_runs(&cfg, &runs, &[v])?.remove(0)),
        })?;
        let report = MetricsReport::build(&results)?;
        std::fs::create_dir_all(&dir)?;
        report.write_csv(&dir.join("metrics.csv"))?;
        report.write_json(&dir.join("metrics.json"))?;
        let rows: Vec<(f64, f64, f64)> = report
            .methods
            .iter()
            .enumerate()
            .map(|(i, m)| (i as f64, m.max.mean, m.max.stderr))
            .collect();
        let names: Vec<&str> = report.methods.iter().map(|m| m.method.as_str()).collect();
        write_plot_data(&dir.join("ablation.dat"), &format!("variant max stderr ({})", names.join(", ")), &rows)?;
        Ok(())
    };
    go().map_err(stage_err("evaluate"))?;
    Ok(dir)
}

/// Writes the m-sweep table and plot data and returns the rows.
pub fn cmd_sweep_m(
    cfg: PipelineConfig,
    out: &Path,
    ms: &[usize],
) -> std::result::Result<(PathBuf, Vec<SweepRow>), StageError> {
    let mut store = Store::open(out, cfg).map_err(stage_err("gen-data"))?;
    let seeds = store.cfg.run.seeds.clone();
    let runs = seeds
        .into_iter()
        .map(|s| store.train_diffusion(s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let dir = store.report_dir(&format!("sweep-m {ms:?}"), &store.cfg.run.seeds.clone());
    let go = || -> Result<Vec<SweepRow>> {
        let rows = sweep_m_from_runs(&store.cfg, &runs, ms)?;
        std::fs::create_dir_all(&dir)?;
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        w.write_record(["m", "max_mean", "max_stderr"])?;
        for r in &rows {
            w.write_record([r.m.to_string(), r.mean.to_string(), r.stderr.to_string()])?;
        }
        w.flush()?;
        let plot: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.m as f64, r.mean, r.stderr)).collect();
        write_plot_data(&dir.join("sweep.dat"), "m max stderr", &plot)?;
        Ok(rows)
    };
    let rows = go().map_err(stage_err("edit"))?;
    Ok((dir, rows))
}

fn run_stage(cmd: &Command, cfg: PipelineConfig, out: &Path) -> std::result::Result<(), StageError> {
    let seeds = cfg.run.seeds.clone();
    match cmd {
        Command::Pipeline => {
            let o = cmd_pipeline(cfg, out)?;
            for c in &o.candidates {
                println!("candidates: {}", c.display());
            }
            for m in &o.report.methods {
                println!(
                    "max {:.4} ± {:.4}  median {:.4} ± {:.4}  above-best {:.4}",
                    m.max.mean, m.max.stderr, m.median.mean, m.median.stderr, m.proportion.mean
                );
            }
            println!("report: {}", o.report_dir.display());
        }
        Command::Ablate { variants } => {
            let vs = variants
                .iter()
                .map(|v| v.parse::<Variant>())
                .collect::<Result<Vec<_>>>()
                .map_err(stage_err("evaluate"))?;
            let dir = cmd_ablate(cfg, out, &vs)?;
            println!("report: {}", dir.display());
        }
        Command::SweepM { m_values } => {
            let (dir, rows) = cmd_sweep_m(cfg, out, m_values)?;
            for r in rows {
                println!("m {:>4}  max {:.4} ± {:.4}", r.m, r.mean, r.stderr);
            }
            println!("report: {}", dir.display());
        }
        Command::Evaluate => {
            let mut store = Store::open(out, cfg).map_err(stage_err("evaluate"))?;
            let runs = edit_all(&mut store)?;
            let (dir, _) = evaluate(&mut store, &runs)?;
            println!("report: {}", dir.display());
        }
        stage => {
            let mut store = Store::open(out, cfg).map_err(stage_err("gen-data"))?;
            for s in seeds {
                match stage {
                    Command::GenData => drop(store.gen_data(s)?),
                    Command::TrainSurrogate => drop(store.train_surrogate(s)?),
                    Command::Synthesize => drop(store.synthesize(s)?),
                    Command::TrainDiffusion => drop(store.train_diffusion(s)?),
                    Command::Edit => {
                        store.edit(s)?;
                        println!("candidates: {}", store.candidates_path(s).display());
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
    Ok(())
}

fn threads(common: &Common) -> Result<()> {
    match common.threads {
        Some(0) | None => Ok(()),
        Some(n) => crate::par::init_threads(n),
    }
}

/// Parses arguments, runs the command and maps failures to exit code 1
/// (config errors) or 2 (stage failures).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match threads(&cli.common).and_then(|_| load_config(&cli.common)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_stage(&cli.command, cfg, &cli.common.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.task.dim = 2;
        c.dataset.n = 40;
        c.surrogate.epochs = 3;
        c.surrogate.hidden_dim = 8;
        c.diffusion.epochs = 2;
        c.diffusion.hidden_dim = 8;
        c.edit.k = 4;
        c.edit.sampler_steps = 6;
        c.run.seeds = vec![0];
        c
    }

    #[test]
    fn pipeline_completes_all_stages() {
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_pipeline(tiny(), dir.path()).unwrap();
        let m = Manifest::load(dir.path()).unwrap().unwrap();
        assert_eq!(m.completed(0), STAGES.to_vec());
        assert_eq!(m.config_hash, tiny().hash());
        assert!(out.candidates[0].exists());
        assert!(out.report_dir.join("metrics.csv").exists());
    }

    #[test]
    fn rerun_reuses_and_matches() {
        let dir = tempfile::tempdir().unwrap();
        let a = cmd_pipeline(tiny(), dir.path()).unwrap();
        let bytes = std::fs::read(&a.candidates[0]).unwrap();
        let b = cmd_pipeline(tiny(), dir.path()).unwrap();
        assert_eq!(std::fs::read(&b.candidates[0]).unwrap(), bytes);
        let fresh = tempfile::tempdir().unwrap();
        let c = cmd_pipeline(tiny(), fresh.path()).unwrap();
        assert_eq!(std::fs::read(&c.candidates[0]).unwrap(), bytes);
    }

    #[test]
    fn budget_above_dataset_fails_in_edit() {
        let mut c = tiny();
        c.edit.k = 41;
        let dir = tempfile::tempdir().unwrap();
        let err = cmd_pipeline(c, dir.path()).unwrap_err();
        assert_eq!(err.stage, "edit");
        assert!(err.to_string().contains("budget K = 41 exceeds the 40 designs"), "{err}");
        let m = Manifest::load(dir.path()).unwrap().unwrap();
        let last = m.seeds[&0].last().unwrap();
        assert_eq!((last.stage.as_str(), last.status.as_str()), ("edit", "failed"));
        assert!(dir.path().join(&m.seeds[&0][3].path).join("score.ckpt").exists());
    }

    #[test]
    fn manifest_config_reproduces_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), tiny()).unwrap();
        store.gen_data(0).unwrap();
        let m = Manifest::load(dir.path()).unwrap().unwrap();
        assert_eq!(PipelineConfig::from_toml(&m.config).unwrap().hash(), m.config_hash);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[run]\nseeds = [1, 2]\n").unwrap();
        let cli = Cli::try_parse_from(["demo-mbo", "gen-data", "--config", p.to_str().unwrap(), "--seed", "7"]).unwrap();
        assert_eq!(load_config(&cli.common).unwrap().run.seeds, vec![7]);
        let cli = Cli::try_parse_from(["demo-mbo", "pipeline", "--paper-parity"]).unwrap();
        let c = load_config(&cli.common).unwrap();
        assert_eq!((c.task.dim, c.run.seeds.len()), (60, 8));
    }
}
