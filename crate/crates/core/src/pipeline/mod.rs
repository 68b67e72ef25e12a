//! End-to-end experiment driver.
//!
//! Stages run in order: graph statistics, seed embeddings, PTSS sampling,
//! fine-tuning, evaluation, and the line-graph baseline. Each stage writes
//! its artifacts into the output directory and records their SHA-256 in
//! `manifest.json`. A rerun skips every stage whose inputs and artifacts
//! still match the manifest, and refuses to continue past an artifact that
//! was modified since it was recorded.

mod compare;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport, ReportMetadata};
use crate::kg::{compute_stats, load_triples, KnowledgeGraph};
use crate::rng::derive_seed;
use crate::sampler::{build_dataset, PtssDataset};
use crate::seed::{
    import_embeddings, read_indexed_tsv, train_seed, write_indexed_tsv, EmbeddingSet, ModelTag, SeedTrainConfig,
    ValueKind,
};
use crate::siamese::{init_embedding_layer, train, AggregationOp, Checkpoint, FineTuneConfig, SiameseModel};
use crate::triple2vec::{run_triple2vec, write_corpus, Triple2vecConfig};

pub use compare::{compare_report, ComparisonRow, ComparisonTable, Metric};
pub use manifest::{sha256_bytes, sha256_file, RunManifest, StageRecord};

pub const STAGES: [&str; 7] = ["stats", "seed", "sample", "finetune", "eval", "baseline", "compare"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportSection {
    pub entities: PathBuf,
    pub predicates: PathBuf,
    /// Defaults to the layout the seed model uses.
    #[serde(default)]
    pub value_kind: Option<ValueKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    pub model: ModelTag,
    /// When present, embeddings are read from these files instead of trained.
    pub import: Option<ImportSection>,
    pub train: SeedTrainConfig,
}

impl Default for SeedSection {
    fn default() -> Self {
        SeedSection {
            model: ModelTag::TransE,
            import: None,
            train: SeedTrainConfig::default(),
        }
    }
}

/// Experiment description, usually read from a TOML file.
///
/// Stage-level `rng_seed` fields are ignored: every stage draws from a
/// stream derived from the top-level `rng_seed` and the stage name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Tab-separated triple files; their union is the graph.
    pub dataset: Vec<PathBuf>,
    #[serde(default)]
    pub dataset_name: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rng_seed: u64,
    /// Candidates per slot for PTSS sampling.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation: AggregationOp,
    #[serde(default)]
    pub seed: SeedSection,
    #[serde(default)]
    pub finetune: FineTuneConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_true")]
    pub run_baseline: bool,
    /// The skip-gram width always follows the PTSS triple embedding width.
    #[serde(default)]
    pub baseline: Triple2vecConfig,
}

fn default_n() -> usize {
    5
}

fn default_aggregation() -> AggregationOp {
    AggregationOp::Avg
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Config with every default and the given inputs.
    pub fn new(dataset: Vec<PathBuf>, output_dir: PathBuf) -> Self {
        ExperimentConfig {
            dataset,
            dataset_name: String::new(),
            output_dir,
            rng_seed: 0,
            n: default_n(),
            aggregation: default_aggregation(),
            seed: SeedSection::default(),
            finetune: FineTuneConfig::default(),
            eval: EvalConfig::default(),
            run_baseline: true,
            baseline: Triple2vecConfig::default(),
        }
    }

    /// Parses TOML; relative paths are taken relative to the file.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dataset.iter_mut().for_each(fix);
        fix(&mut cfg.output_dir);
        if let Some(imp) = &mut cfg.seed.import {
            fix(&mut imp.entities);
            fix(&mut imp.predicates);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dataset.is_empty() {
            return bad("no dataset files given".into());
        }
        for p in &self.dataset {
            if !p.is_file() {
                return bad(format!("dataset file {} does not exist", p.display()));
            }
        }
        if let Some(imp) = &self.seed.import {
            for p in [&imp.entities, &imp.predicates] {
                if !p.is_file() {
                    return bad(format!("embedding file {} does not exist", p.display()));
                }
            }
        } else {
            self.seed
                .train
                .validate(self.seed.model)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        self.finetune.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.eval.folds < 2 {
            return bad("eval.folds must be at least 2".into());
        }
        if self.baseline.walks_per_node == 0 || self.baseline.walk_length == 0 {
            return bad("baseline walks_per_node and walk_length must be positive".into());
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.rng_seed, stage)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Recompute every stage regardless of the manifest.
    pub force: bool,
}

struct Runner<'a> {
    dir: &'a Path,
    previous: Option<RunManifest>,
    manifest: RunManifest,
    force: bool,
}

fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage: stage.into(),
            message: other.to_string(),
        },
    }
}

impl Runner<'_> {
    fn checksum(&self, artifact: &str) -> Result<String> {
        self.manifest
            .stages
            .iter()
            .find_map(|s| s.artifacts.get(artifact).cloned())
            .ok_or_else(|| Error::invalid(format!("artifact {artifact} has not been produced")))
    }

    fn key(&self, stage: &str, config: serde_json::Value, upstream: &[&str]) -> Result<String> {
        let mut ups = BTreeMap::new();
        for a in upstream {
            ups.insert(a.to_string(), self.checksum(a)?);
        }
        let blob = serde_json::json!({
            "stage": stage,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "inputs": self.manifest.inputs,
            "upstream": ups,
        });
        Ok(sha256_bytes(blob.to_string().as_bytes()))
    }

    /// Runs `work` unless a matching record exists. `work` returns the
    /// artifact names it wrote.
    fn run(&mut self, stage: &str, key: String, work: impl FnOnce() -> Result<Vec<String>>) -> Result<bool> {
        if !self.force {
            if let Some(prev) = self
                .previous
                .as_ref()
                .and_then(|m| m.stage(stage))
                .filter(|s| s.input_key == key)
            {
                let mut record = prev.clone();
                for (name, sum) in &record.artifacts {
                    let path = self.dir.join(name);
                    let actual = if path.is_file() {
                        Some(sha256_file(&path)?)
                    } else {
                        None
                    };
                    if actual.as_ref() != Some(sum) {
                        return Err(Error::Stage {
                            stage: stage.into(),
                            message: format!(
                                "artifact {name} is missing or differs from its recorded checksum; \
                                 refusing to resume (rerun with --force to recompute)"
                            ),
                        });
                    }
                }
                info!("stage {stage}: up to date, skipped");
                record.skipped = true;
                self.manifest.stages.push(record);
                return Ok(false);
            }
        }
        info!("stage {stage}: running");
        let start = Instant::now();
        let names = work().map_err(|e| stage_error(stage, e))?;
        let mut artifacts = BTreeMap::new();
        for n in names {
            artifacts.insert(
                n.clone(),
                sha256_file(&self.dir.join(&n)).map_err(|e| stage_error(stage, e))?,
            );
        }
        self.manifest.stages.push(StageRecord {
            name: stage.into(),
            input_key: key,
            artifacts,
            seconds: start.elapsed().as_secs_f64(),
            skipped: false,
        });
        self.manifest.save(&self.dir.join("manifest.json"))?;
        Ok(true)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn load_graph(cfg: &ExperimentConfig) -> Result<KnowledgeGraph> {
    Ok(load_triples(&cfg.dataset)?.0)
}

fn value_kind(cfg: &ExperimentConfig) -> ValueKind {
    cfg.seed
        .import
        .as_ref()
        .and_then(|i| i.value_kind)
        .unwrap_or_else(|| cfg.seed.model.value_kind())
}

fn load_seed(g: &KnowledgeGraph, dir: &Path, cfg: &ExperimentConfig) -> Result<EmbeddingSet> {
    import_embeddings(
        g,
        &dir.join("seed_entities.tsv"),
        &dir.join("seed_predicates.tsv"),
        value_kind(cfg),
        cfg.seed.model,
    )
}

fn metadata(cfg: &ExperimentConfig, method: &str, dim: usize) -> ReportMetadata {
    let mut seeds = BTreeMap::new();
    seeds.insert("rng_seed".into(), cfg.rng_seed);
    let (seed_model, aggregation) = if method == "triple2vec" {
        (None, None)
    } else {
        (Some(cfg.seed.model.to_string()), Some(cfg.aggregation.to_string()))
    };
    ReportMetadata {
        method: method.into(),
        dataset: cfg.dataset_name.clone(),
        seed_model,
        aggregation,
        dim,
        seeds,
    }
}

/// Runs every stage, resuming from `output_dir/manifest.json` when present.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut inputs = BTreeMap::new();
    for (i, p) in cfg.dataset.iter().enumerate() {
        inputs.insert(format!("dataset[{i}]"), sha256_file(p)?);
    }
    if let Some(imp) = &cfg.seed.import {
        inputs.insert("import.entities".into(), sha256_file(&imp.entities)?);
        inputs.insert("import.predicates".into(), sha256_file(&imp.predicates)?);
    }
    let manifest_path = dir.join("manifest.json");
    let previous = if manifest_path.is_file() {
        Some(RunManifest::load(&manifest_path)?)
    } else {
        None
    };
    let mut r = Runner {
        dir,
        previous,
        manifest: RunManifest {
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(cfg)?,
            inputs,
            stages: Vec::new(),
        },
        force: opts.force,
    };

    let g = load_graph(cfg).map_err(|e| stage_error("stats", e))?;

    // stats
    let key = r.key("stats", serde_json::to_value(&cfg.dataset_name)?, &[])?;
    r.run("stats", key, || {
        write_json(&dir.join("stats.json"), &compute_stats(&g))?;
        Ok(vec!["stats.json".into()])
    })?;

    // seed
    let mut seed_train = cfg.seed.train.clone();
    seed_train.rng_seed = cfg.stage_seed("seed");
    let key = r.key(
        "seed",
        serde_json::to_value((
            &cfg.seed.model,
            &cfg.seed.import.is_some(),
            &seed_train,
            value_kind(cfg),
        ))?,
        &[],
    )?;
    r.run("seed", key, || {
        let emb = match &cfg.seed.import {
            Some(imp) => import_embeddings(&g, &imp.entities, &imp.predicates, value_kind(cfg), cfg.seed.model)?,
            None => {
                let trained = train_seed(&g, cfg.seed.model, &seed_train)?;
                write_json(&dir.join("seed_losses.json"), &trained.epoch_losses)?;
                trained.embeddings
            }
        };
        emb.export(&g, &dir.join("seed_entities.tsv"), &dir.join("seed_predicates.tsv"))?;
        Ok(vec!["seed_entities.tsv".into(), "seed_predicates.tsv".into()])
    })?;
    let seed_files = ["seed_entities.tsv", "seed_predicates.tsv"];

    // sample
    let sample_seed = cfg.stage_seed("sample");
    let key = r.key("sample", serde_json::to_value((cfg.n, sample_seed))?, &seed_files)?;
    r.run("sample", key, || {
        let emb = load_seed(&g, dir, cfg)?;
        build_dataset(&g, &emb, cfg.n, sample_seed)?.write_tsv(&dir.join("ptss.tsv"))?;
        Ok(vec!["ptss.tsv".into()])
    })?;

    // finetune
    let mut ft = cfg.finetune.clone();
    ft.rng_seed = cfg.stage_seed("finetune");
    let key = r.key(
        "finetune",
        serde_json::to_value((&cfg.aggregation, &ft))?,
        &["ptss.tsv", seed_files[0], seed_files[1]],
    )?;
    r.run("finetune", key, || {
        let emb = load_seed(&g, dir, cfg)?;
        let data = PtssDataset::read_tsv(&dir.join("ptss.tsv"))?;
        let init = init_embedding_layer(&g, &emb, cfg.aggregation)?;
        let out = train(SiameseModel::new(init, ft.rng_seed), &data, &ft)?;
        write_indexed_tsv(&dir.join("ptss_embeddings.tsv"), &out.model.export_triple_embeddings())?;
        write_json(&dir.join("finetune_losses.json"), &out.epoch_losses)?;
        Checkpoint {
            model: out.model,
            config: ft.clone(),
        }
        .save(&dir.join("model.json"))?;
        Ok(vec![
            "ptss_embeddings.tsv".into(),
            "finetune_losses.json".into(),
            "model.json".into(),
        ])
    })?;

    // eval
    let mut ev = cfg.eval.clone();
    ev.rng_seed = cfg.stage_seed("eval");
    let key = r.key(
        "eval",
        serde_json::to_value((&ev, &cfg.aggregation, &cfg.dataset_name))?,
        &["ptss_embeddings.tsv", seed_files[0], seed_files[1]],
    )?;
    r.run("eval", key, || {
        let tuned = read_indexed_tsv(&dir.join("ptss_embeddings.tsv"))?;
        let ptss = evaluate(&tuned, &g, &ev, metadata(cfg, "ptss", tuned.cols()))?;
        ptss.write_json(&dir.join("report_ptss.json"))?;
        let init = init_embedding_layer(&g, &load_seed(&g, dir, cfg)?, cfg.aggregation)?;
        let base = evaluate(&init, &g, &ev, metadata(cfg, "init", init.cols()))?;
        base.write_json(&dir.join("report_init.json"))?;
        Ok(vec!["report_ptss.json".into(), "report_init.json".into()])
    })?;

    let mut reports = vec!["report_ptss.json", "report_init.json"];

    // baseline
    if cfg.run_baseline {
        let mut bl = cfg.baseline.clone();
        bl.skipgram.rng_seed = cfg.stage_seed("baseline");
        bl.skipgram.dim = cfg
            .aggregation
            .output_dim(load_seed(&g, dir, cfg).map_err(|e| stage_error("baseline", e))?.dim());
        let key = r.key("baseline", serde_json::to_value((&bl, &ev, &cfg.dataset_name))?, &[])?;
        r.run("baseline", key, || {
            let out = run_triple2vec(&g, &bl)?;
            write_corpus(&dir.join("walks.txt"), &out.corpus)?;
            write_indexed_tsv(&dir.join("triple2vec_embeddings.tsv"), &out.embeddings)?;
            let rep = evaluate(
                &out.embeddings,
                &g,
                &ev,
                metadata(cfg, "triple2vec", out.embeddings.cols()),
            )?;
            rep.write_json(&dir.join("report_triple2vec.json"))?;
            Ok(vec![
                "walks.txt".into(),
                "triple2vec_embeddings.tsv".into(),
                "report_triple2vec.json".into(),
            ])
        })?;
        reports.push("report_triple2vec.json");
    }

    // compare
    let key = r.key("compare", serde_json::Value::Null, &reports)?;
    r.run("compare", key, || {
        let loaded = reports
            .iter()
            .map(|n| EvalReport::read_json(&dir.join(n)))
            .collect::<Result<Vec<_>>>()?;
        let table = compare_report(&loaded)?;
        std::fs::write(dir.join("comparison.csv"), table.to_csv()).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("comparison.json"), &table)?;
        Ok(vec!["comparison.csv".into(), "comparison.json".into()])
    })?;

    r.manifest.save(&manifest_path)?;
    Ok(r.manifest)
}
