//! Content-addressed artifact store and run manifest.
//!
//! Each stage writes into `<out>/<stage>/<key>/`, where the key hashes the
//! config sections the stage depends on plus the keys of its inputs. A stage
//! directory is built under a temporary name and renamed into place, so an
//! existing directory is always complete and is reused as-is. Downstream
//! stages always read their inputs back from disk, which makes a resumed run
//! identical to a fresh one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{ScoreNetwork, TrainLog};
use crate::error::{invalid, Error, Result};
use crate::numeric::checkpoint;
use crate::pipeline::config::section_toml;
use crate::pipeline::{self, hash_parts, Offline, PipelineConfig, SeedRun};
use crate::surrogate::{dataset_mse, TrainedSurrogate};
use crate::tasks::io::{read_candidates, read_dataset, write_candidates, write_dataset, CandidateRow};
use crate::tasks::Dataset;

pub const STAGES: [&str; 6] = ["gen-data", "train-surrogate", "synthesize", "train-diffusion", "edit", "evaluate"];

const KEY_LEN: usize = 16;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// `complete` or `failed`.
    pub status: String,
    /// Artifact directory relative to the output root.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    /// Full config, enough to re-run any stage.
    pub config: String,
    /// Stage records per seed, in completion order.
    pub seeds: BTreeMap<u64, Vec<StageRecord>>,
}

impl Manifest {
    pub fn path(out: &Path) -> PathBuf {
        out.join("manifest.json")
    }

    pub fn load(out: &Path) -> Result<Option<Self>> {
        let p = Self::path(out);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p)?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::Format {
            path: p,
            reason: e.to_string(),
        })
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| invalid(format!("manifest: {e}")))?;
        std::fs::write(Self::path(out), text + "\n")?;
        Ok(())
    }

    pub fn completed(&self, seed: u64) -> Vec<&str> {
        self.seeds
            .get(&seed)
            .map(|v| v.iter().filter(|r| r.status == "complete").map(|r| r.stage.as_str()).collect())
            .unwrap_or_default()
    }

    fn record(&mut self, seed: u64, rec: StageRecord) {
        let list = self.seeds.entry(seed).or_default();
        list.retain(|r| r.stage != rec.stage);
        list.push(rec);
    }
}

/// A stage failure, tagged with the stage that failed.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

pub struct Store {
    pub out: PathBuf,
    pub cfg: PipelineConfig,
    manifest: Manifest,
}

impl Store {
    pub fn open(out: &Path, cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        std::fs::create_dir_all(out)?;
        let hash = cfg.hash();
        let manifest = match Manifest::load(out)? {
            Some(m) if m.config_hash == hash => m,
            _ => Manifest {
                config_hash: hash,
                config: cfg.to_toml(),
                seeds: BTreeMap::new(),
            },
        };
        std::fs::write(out.join("config.toml"), cfg.to_toml())?;
        Ok(Self {
            out: out.to_path_buf(),
            cfg,
            manifest,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn p_uncond(&self) -> String {
        format!("p_uncond={}", self.cfg.guidance.p_uncond)
    }

    fn data_key(&self, seed: u64) -> String {
        hash_parts(&[
            "data",
            &section_toml(&self.cfg.task),
            &section_toml(&self.cfg.dataset),
            &seed.to_string(),
        ])
    }

    fn surrogate_key(&self, seed: u64) -> String {
        hash_parts(&["surrogate", &self.data_key(seed), &section_toml(&self.cfg.surrogate)])
    }

    fn synthetic_key(&self, seed: u64) -> String {
        hash_parts(&["synthetic", &self.surrogate_key(seed)])
    }

    fn diffusion_key(&self, training_key: &str) -> String {
        hash_parts(&[
            "diffusion",
            training_key,
            &section_toml(&self.cfg.schedule),
            &self.p_uncond(),
            &section_toml(&self.cfg.diffusion),
        ])
    }

    fn edit_key(&self, seed: u64) -> String {
        hash_parts(&[
            "edit",
            &self.diffusion_key(&self.synthetic_key(seed)),
            &section_toml(&self.cfg.edit),
            &format!("omega={}", self.cfg.guidance.omega),
        ])
    }

    fn dir(&self, stage: &str, key: &str) -> PathBuf {
        self.out.join(stage).join(&key[..KEY_LEN])
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().into_owned()
    }

    /// Builds `dir` through `build` unless it already exists.
    fn materialize(&self, dir: &Path, build: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        if dir.is_dir() {
            log::info!("reusing {}", dir.display());
            return Ok(());
        }
        let tmp = dir.with_extension(format!("tmp{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        std::fs::create_dir_all(&tmp)?;
        build(&tmp)?;
        std::fs::rename(&tmp, dir)?;
        Ok(())
    }

    /// Runs one stage, recording completion or failure in the manifest.
    fn stage<T>(
        &mut self,
        name: &'static str,
        seed: u64,
        dir: &Path,
        f: impl FnOnce(&Self) -> Result<T>,
    ) -> std::result::Result<T, StageError> {
        let res = f(self);
        let rec = StageRecord {
            stage: name.to_string(),
            status: if res.is_ok() { "complete" } else { "failed" }.into(),
            path: self.relative(dir),
            error: res.as_ref().err().map(|e| e.to_string()),
        };
        self.manifest.record(seed, rec);
        let saved = self.manifest.save(&self.out);
        let value = res.map_err(|source| StageError { stage: name, source })?;
        saved.map_err(|source| StageError { stage: name, source })?;
        Ok(value)
    }

    pub fn gen_data(&mut self, seed: u64) -> std::result::Result<Offline, StageError> {
        let dir = self.dir("data", &self.data_key(seed));
        self.stage("gen-data", seed, &dir.clone(), |s| {
            let file = dir.join("offline.csv");
            s.materialize(&dir, |tmp| {
                let off = pipeline::gen_data(&s.cfg, seed)?;
                write_dataset(&tmp.join("offline.csv"), &off.data, &off.task.kind, seed)
            })?;
            let (data, _) = read_dataset(&file)?;
            Ok(Offline::new(s.cfg.task()?, data, s.cfg.dataset.standardize))
        })
    }

    pub fn train_surrogate(&mut self, seed: u64) -> std::result::Result<(Offline, TrainedSurrogate), StageError> {
        let off = self.gen_data(seed)?;
        let dir = self.dir("surrogate", &self.surrogate_key(seed));
        let sur = self.stage("train-surrogate", seed, &dir.clone(), |s| {
            s.materialize(&dir, |tmp| {
                let sur = pipeline::fit_surrogate(&s.cfg, &off, seed)?;
                let meta = vec![("kind".to_string(), "surrogate".to_string())];
                checkpoint::save(&tmp.join("surrogate.ckpt"), &sur.params, &meta)
            })?;
            let (params, meta) = checkpoint::load(&dir.join("surrogate.ckpt"))?;
            if !meta.iter().any(|(k, v)| k == "kind" && v == "surrogate") {
                return Err(invalid("checkpoint is not a surrogate"));
            }
            let final_mse = dataset_mse(&params, &off.model_data)?;
            Ok(TrainedSurrogate { params, final_mse })
        })?;
        Ok((off, sur))
    }

    pub fn synthesize(
        &mut self,
        seed: u64,
    ) -> std::result::Result<(Offline, TrainedSurrogate, Dataset), StageError> {
        let (off, sur) = self.train_surrogate(seed)?;
        let dir = self.dir("synthetic", &self.synthetic_key(seed));
        let synth = self.stage("synthesize", seed, &dir.clone(), |s| {
            s.materialize(&dir, |tmp| {
                let synth = pipeline::synthesize(&s.cfg, &off, &sur)?;
                write_dataset(&tmp.join("synthetic.csv"), &synth, &off.task.kind, seed)
            })?;
            Ok(read_dataset(&dir.join("synthetic.csv"))?.0)
        })?;
        Ok((off, sur, synth))
    }

    fn diffusion_artifact(&self, dir: &Path, training: &Dataset, seed: u64) -> Result<(ScoreNetwork, TrainLog)> {
        self.materialize(dir, |tmp| {
            let (net, log) = pipeline::fit_diffusion(&self.cfg, training, seed)?;
            net.save(&tmp.join("score.ckpt"))?;
            let losses: String = log.epoch_losses.iter().map(|l| format!("{l}\n")).collect();
            std::fs::write(tmp.join("losses.txt"), losses)?;
            Ok(())
        })?;
        let net = ScoreNetwork::load(&dir.join("score.ckpt"))?;
        let epoch_losses = std::fs::read_to_string(dir.join("losses.txt"))?
            .lines()
            .map(|l| l.parse::<f64>().map_err(|e| invalid(format!("losses.txt: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((net, TrainLog { epoch_losses }))
    }

    /// Runs every stage up to the score network; the returned run has no
    /// candidates yet.
    pub fn train_diffusion(&mut self, seed: u64) -> std::result::Result<SeedRun, StageError> {
        let (offline, surrogate, synthetic) = self.synthesize(seed)?;
        let dir = self.dir("diffusion", &self.diffusion_key(&self.synthetic_key(seed)));
        let (network, log) =
            self.stage("train-diffusion", seed, &dir.clone(), |s| s.diffusion_artifact(&dir, &synthetic, seed))?;
        Ok(SeedRun {
            seed,
            offline,
            surrogate,
            synthetic,
            network,
            log,
            candidates: Vec::new(),
        })
    }

    /// Score network trained on the offline data alone.
    pub fn plain_diffusion(&self, off: &Offline, seed: u64) -> Result<ScoreNetwork> {
        let dir = self.dir("diffusion", &self.diffusion_key(&self.data_key(seed)));
        Ok(self.diffusion_artifact(&dir, &off.model_data, seed)?.0)
    }

    pub fn candidates_path(&self, seed: u64) -> PathBuf {
        self.dir("candidates", &self.edit_key(seed)).join("candidates.csv")
    }

    pub fn edit(&mut self, seed: u64) -> std::result::Result<SeedRun, StageError> {
        let mut run = self.train_diffusion(seed)?;
        let dir = self.dir("candidates", &self.edit_key(seed));
        let candidates = self.stage("edit", seed, &dir.clone(), |s| {
            s.materialize(&dir, |tmp| {
                let raw = pipeline::edit(&run.network, &run.offline, &s.cfg.edit_config(), seed)?;
                let rows = pipeline::score_candidates(&run.offline, &raw)?;
                write_candidates(&tmp.join("candidates.csv"), &rows)
            })?;
            read_candidates(&dir.join("candidates.csv"))
        })?;
        run.candidates = candidates;
        Ok(run)
    }

    /// Records the evaluate stage for each seed against a shared report dir.
    pub fn mark_evaluated(&mut self, seeds: &[u64], dir: &Path) -> std::result::Result<(), StageError> {
        for &seed in seeds {
            self.stage("evaluate", seed, dir, |_| Ok(()))?;
        }
        Ok(())
    }

    pub fn report_dir(&self, kind: &str, seeds: &[u64]) -> PathBuf {
        let keys: Vec<String> = seeds.iter().map(|&s| self.edit_key(s)).collect();
        let mut parts: Vec<&str> = vec![kind];
        parts.extend(keys.iter().map(String::as_str));
        self.dir("reports", &hash_parts(&parts))
    }

    pub fn candidates(&self, seed: u64) -> Result<Vec<CandidateRow>> {
        read_candidates(&self.candidates_path(seed))
    }
}
