//! The benchmark loop: splits × classifier seeds × shift samples ×
//! quantifiers, scored with AE and RAE.
//!
//! Every stochastic stage draws from a seed derived from the master seed and
//! the trial coordinates, and results are sorted by trial key before they are
//! written, so the output CSV is byte-identical for any degree of
//! parallelism.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, PosteriorMatrix, TrainConfig};
use crate::graph::load_graph;
use crate::metrics::{ae, rae};
use crate::quantifiers::{make_quantifier, FittedQuantifier, Flag, QuantifierConfig};
use crate::samplers::{self, SamplePlan, TestSample};
use crate::sis::{class_weights, density_ratio, ClassWeights};
use crate::synthetic::{cluster_graph, ClusterGraphParams};
use crate::{make_split, rng, Error, Graph, Result, Split};

/// A dataset given either as files or as synthetic cluster-graph parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<ClusterGraphParams>,
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Graph> {
        match (&self.edges, &self.synthetic) {
            (Some(edges), None) => load_graph(edges, self.features.as_deref(), self.labels.as_deref()),
            (None, Some(params)) => Ok(cluster_graph(params)?.graph),
            _ => Err(Error::param(
                "dataset",
                "exactly one of `edges` or `synthetic` must be given",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seeds: Vec<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.05, 0.15, 0.80],
            seeds: vec![0],
        }
    }
}

/// `kind` is `logistic` (trained per split and seed) or `posteriors` (one
/// CSV row per graph node, in node-id order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ClassifierConfig {
    pub fn logistic(train: TrainConfig) -> Self {
        ClassifierConfig {
            kind: "logistic".into(),
            name: None,
            seeds: default_seeds(),
            train,
            path: None,
        }
    }

    pub fn display_name(&self) -> String {
        match (&self.name, self.kind.as_str()) {
            (Some(n), _) => n.clone(),
            (None, "logistic") if self.train.propagation.is_some() => "logistic-ppr".into(),
            (None, k) => k.into(),
        }
    }

    /// Posteriors for every node of `g` for the given split and seed.
    pub fn posteriors(&self, g: &Graph, split: &Split, seed: u64) -> Result<PosteriorMatrix> {
        let all: Vec<usize> = (0..g.num_nodes()).collect();
        match self.kind.as_str() {
            "logistic" => {
                let train = TrainConfig {
                    seed,
                    ..self.train.clone()
                };
                classifier::fit(g, &split.classifier_train, &train)?.predict_proba(g, &all)
            }
            "posteriors" => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::param("classifier.path", "required for kind=posteriors"))?;
                let p = classifier::load_posteriors(path, g.num_classes())?;
                if p.len() != g.num_nodes() {
                    return Err(Error::InvalidInput(format!(
                        "{}: {} posterior rows for {} nodes",
                        path.display(),
                        p.len(),
                        g.num_nodes()
                    )));
                }
                Ok(p)
            }
            other => Err(Error::param(
                "classifier.kind",
                format!("unknown classifier kind {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub quantifiers: Vec<QuantifierConfig>,
    #[serde(default)]
    pub shifts: Vec<SamplePlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a JSON config; relative paths are resolved against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.dataset.edges);
        resolve(&mut cfg.dataset.features);
        resolve(&mut cfg.dataset.labels);
        resolve(&mut cfg.classifier.path);
        resolve(&mut cfg.output);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantifiers.is_empty() {
            return Err(Error::param("quantifiers", "at least one quantifier is required"));
        }
        for q in &self.quantifiers {
            q.validate()?;
        }
        for s in &self.shifts {
            s.validate()?;
        }
        if self.split.seeds.is_empty() {
            return Err(Error::param("split.seeds", "at least one seed is required"));
        }
        if self.classifier.seeds.is_empty() {
            return Err(Error::param("classifier.seeds", "at least one seed is required"));
        }
        Ok(())
    }

    /// Actual seed for split `split_seed`.
    pub fn split_seed(&self, master: u64, split_seed: u64) -> u64 {
        rng::mix(&[master, 1, split_seed])
    }

    pub fn classifier_seed(&self, master: u64, split_seed: u64, clf_seed: u64) -> u64 {
        rng::mix(&[master, 2, split_seed, clf_seed])
    }

    /// Plan with its seed bound to the master seed and split.
    pub fn bound_plan(&self, plan: &SamplePlan, master: u64, split_seed: u64) -> SamplePlan {
        SamplePlan {
            seed: rng::mix(&[master, 3, split_seed, plan.protocol as u64, plan.seed]),
            ..plan.clone()
        }
    }
}

/// One scored (split, classifier seed, sample, quantifier) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub dataset: String,
    pub shift: String,
    pub classifier: String,
    pub quantifier: String,
    pub split_seed: u64,
    pub clf_seed: u64,
    pub sample_id: usize,
    pub ae: f64,
    pub rae: f64,
    pub flags: String,
}

impl TrialResult {
    fn key(&self) -> (&str, &str, &str, &str, u64, u64, usize) {
        (
            &self.dataset,
            &self.shift,
            &self.classifier,
            &self.quantifier,
            self.split_seed,
            self.clf_seed,
            self.sample_id,
        )
    }
}

/// A trial that raised an error; it has no result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub dataset: String,
    pub shift: String,
    pub classifier: String,
    pub quantifier: String,
    pub split_seed: u64,
    pub clf_seed: u64,
    pub sample_id: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchOutput {
    pub results: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

fn join_flags(flags: impl IntoIterator<Item = Flag>) -> String {
    let set: BTreeSet<Flag> = flags.into_iter().collect();
    set.iter().map(Flag::to_string).collect::<Vec<_>>().join("|")
}

struct Cell<'a> {
    cfg: &'a RunConfig,
    g: &'a Graph,
    split_seed: u64,
    clf_seed: u64,
    classifier: String,
}

impl Cell<'_> {
    fn failure(&self, shift: &str, quantifier: &str, sample_id: Option<usize>, e: &Error) -> TrialFailure {
        TrialFailure {
            dataset: self.cfg.dataset.name.clone(),
            shift: shift.into(),
            classifier: self.classifier.clone(),
            quantifier: quantifier.into(),
            split_seed: self.split_seed,
            clf_seed: self.clf_seed,
            sample_id,
            error: e.to_string(),
        }
    }
}

/// Runs every trial of `cfg` on `g` with `jobs` worker threads.
pub fn run_benchmark(cfg: &RunConfig, g: &Graph, master_seed: u64, jobs: usize) -> Result<BenchOutput> {
    cfg.validate()?;
    let labels = g.require_labels()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    let mut out = BenchOutput::default();
    let classifier_name = cfg.classifier.display_name();

    pool.install(|| -> Result<()> {
        for &split_seed in &cfg.split.seeds {
            let split = make_split(g, cfg.split.ratios, cfg.split_seed(master_seed, split_seed))?;
            let train_labels: Vec<usize> = split.quantifier_train.iter().map(|&u| labels[u]).collect();
            let plans: Vec<(SamplePlan, Result<Vec<TestSample>>)> = cfg
                .shifts
                .iter()
                .map(|p| {
                    let plan = cfg.bound_plan(p, master_seed, split_seed);
                    let samples = samplers::sample(g, &split.quantifier_test_pool, &plan);
                    (plan, samples)
                })
                .collect();

            for &clf_seed in &cfg.classifier.seeds {
                let cell = Cell {
                    cfg,
                    g,
                    split_seed,
                    clf_seed,
                    classifier: classifier_name.clone(),
                };
                let posteriors =
                    match cfg
                        .classifier
                        .posteriors(g, &split, cfg.classifier_seed(master_seed, split_seed, clf_seed))
                    {
                        Ok(p) => p,
                        Err(e) => {
                            out.failures.push(cell.failure("*", "*", None, &e));
                            continue;
                        }
                    };
                let train_post = posteriors.select(&split.quantifier_train);
                // Quantifiers without SIS are fitted once per classifier.
                let fitted: Vec<Option<Result<FittedQuantifier>>> = cfg
                    .quantifiers
                    .iter()
                    .map(|q| {
                        q.sis
                            .is_none()
                            .then(|| make_quantifier(q, &train_post, &train_labels, None))
                    })
                    .collect();

                for (plan, samples) in &plans {
                    let shift = plan.protocol.as_str();
                    let samples = match samples {
                        Ok(s) => s,
                        Err(e) => {
                            out.failures.push(cell.failure(shift, "*", None, e));
                            continue;
                        }
                    };
                    let per_sample: Vec<Vec<std::result::Result<TrialResult, TrialFailure>>> = samples
                        .par_iter()
                        .enumerate()
                        .map(|(sample_id, sample)| {
                            run_sample(
                                &cell,
                                shift,
                                sample_id,
                                sample,
                                &posteriors,
                                &split,
                                &train_post,
                                &train_labels,
                                &fitted,
                            )
                        })
                        .collect();
                    for r in per_sample.into_iter().flatten() {
                        match r {
                            Ok(t) => out.results.push(t),
                            Err(f) => out.failures.push(f),
                        }
                    }
                }
            }
        }
        Ok(())
    })?;

    out.results.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
#[allow(clippy::result_large_err)]
fn run_sample(
    cell: &Cell<'_>,
    shift: &str,
    sample_id: usize,
    sample: &TestSample,
    posteriors: &PosteriorMatrix,
    split: &Split,
    train_post: &PosteriorMatrix,
    train_labels: &[usize],
    fitted: &[Option<Result<FittedQuantifier>>],
) -> Vec<std::result::Result<TrialResult, TrialFailure>> {
    let test_post = posteriors.select(&sample.nodes);
    let k = posteriors.num_classes();
    // Importance weights depend only on the SIS settings; share them across
    // quantifiers with identical settings.
    let mut weight_cache: Vec<(String, Result<ClassWeights>)> = Vec::new();
    let mut sis_weights = |q: &QuantifierConfig| -> Result<ClassWeights> {
        let sis = q.sis.as_ref().expect("SIS quantifier");
        let key = serde_json::to_string(sis).unwrap_or_default();
        if let Some((_, w)) = weight_cache.iter().find(|(k2, _)| *k2 == key) {
            return w.as_ref().cloned().map_err(|e| Error::InvalidInput(e.to_string()));
        }
        let w = (|| {
            let q_kernel = sis.q_kernel()?;
            let p_kernel = sis.p_kernel()?;
            let rho = density_ratio(
                cell.g,
                &split.quantifier_train,
                &sample.nodes,
                &q_kernel,
                &p_kernel,
                sis.floor(),
            )?;
            class_weights(&rho, train_labels, k)
        })();
        let ret = w
            .as_ref()
            .map(Clone::clone)
            .map_err(|e| Error::InvalidInput(e.to_string()));
        weight_cache.push((key, w));
        ret
    };

    cell.cfg
        .quantifiers
        .iter()
        .zip(fitted)
        .map(|(qcfg, pre)| {
            let name = qcfg.display_name();
            let mut trial = || -> Result<TrialResult> {
                let mut flags = Vec::new();
                if sample.short {
                    flags.push(Flag::ShortSample);
                }
                let outcome = match pre {
                    Some(fit) => fit
                        .as_ref()
                        .map_err(|e| Error::InvalidInput(e.to_string()))?
                        .quantify(&test_post)?,
                    None => {
                        let w = sis_weights(qcfg)?;
                        if w.any_fallback() {
                            flags.push(Flag::SisFallback);
                        }
                        make_quantifier(qcfg, train_post, train_labels, Some(&w))?.quantify(&test_post)?
                    }
                };
                flags.extend(outcome.flags.iter().copied());
                let n = sample.nodes.len();
                Ok(TrialResult {
                    dataset: cell.cfg.dataset.name.clone(),
                    shift: shift.into(),
                    classifier: cell.classifier.clone(),
                    quantifier: name.clone(),
                    split_seed: cell.split_seed,
                    clf_seed: cell.clf_seed,
                    sample_id,
                    ae: ae(&sample.true_prevalence, &outcome.prevalence)?,
                    rae: rae(&sample.true_prevalence, &outcome.prevalence, n)?,
                    flags: join_flags(flags),
                })
            };
            trial().map_err(|e| cell.failure(shift, &name, Some(sample_id), &e))
        })
        .collect()
}

pub const RESULTS_HEADER: &str = "dataset,shift,classifier,quantifier,split_seed,clf_seed,sample_id,ae,rae,flags";

pub fn write_results(results: &[TrialResult], path: &Path) -> Result<()> {
    crate::graph::write_file(path, &results_csv(results)?)
}

/// Results as CSV bytes with the canonical header.
pub fn results_csv(results: &[TrialResult]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in results {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut bytes = format!("{RESULTS_HEADER}\n").into_bytes();
    bytes.extend(body);
    Ok(bytes)
}

pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidInput(format!("{other:?}")),
        })?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Ok(Vec::new());
    }
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("unexpected header {:?}", header.join(",")),
        });
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<TrialResult>, _>>()?)
}

pub fn write_failures(failures: &[TrialFailure], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for f in failures {
        w.serialize(f)?;
    }
    if failures.is_empty() {
        w.write_record([
            "dataset",
            "shift",
            "classifier",
            "quantifier",
            "split_seed",
            "clf_seed",
            "sample_id",
            "error",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    crate::graph::write_file(path, &bytes)
}
