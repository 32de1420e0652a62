use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use graphquant::bench::{read_results, run_benchmark, write_failures, write_results, RunConfig};
use graphquant::classifier::{self, load_posteriors, load_posteriors_inferred, PosteriorMatrix, TrainConfig};
use graphquant::graph::read_labels;
use graphquant::kernels::KernelConfig;
use graphquant::metrics::{ae, rae};
use graphquant::quantifiers::{make_quantifier, Outcome, QuantifierConfig, SisConfig};
use graphquant::report::rank_and_test;
use graphquant::samplers::{self, load_samples, save_samples, Protocol, SamplePlan};
use graphquant::sis::{class_weights, density_ratio};
use graphquant::{make_split, Error, Prevalence, Result, Split};

#[derive(Parser)]
#[command(
    name = "graphquant",
    version,
    about = "Quantification on graphs under structural shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; falls back to GQ_SEED, then the config, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct QuantifierOverrides {
    /// Quantifier kind or display name; comma-separated for bench.
    #[arg(long)]
    quantifier: Option<String>,
    /// KDEy bandwidth.
    #[arg(long)]
    sigma: Option<f64>,
    /// Enables SIS with the interpolated PPR kernel at this mix weight.
    #[arg(long = "lambda-mix")]
    lambda_mix: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Split the labeled nodes into classifier-train, quantifier-train and test pool.
    Split {
        #[command(flatten)]
        common: Common,
    },
    /// Train the logistic classifier and write the model and per-node posteriors.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        split: PathBuf,
    },
    /// Draw shifted test samples from the test pool.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        split: PathBuf,
        /// pps, rw or bfs.
        #[arg(long)]
        shift: Option<String>,
    },
    /// Estimate prevalences from posterior files or from a split and samples.
    Quantify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: QuantifierOverrides,
        /// Test posteriors, one row per instance.
        #[arg(long, conflicts_with_all = ["samples", "node_posteriors"])]
        posteriors: Option<PathBuf>,
        #[arg(long, requires = "train_labels")]
        train_posteriors: Option<PathBuf>,
        #[arg(long, requires = "train_posteriors")]
        train_labels: Option<PathBuf>,
        #[arg(long, requires_all = ["samples", "node_posteriors"])]
        split: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Posteriors for every node, in node-id order.
        #[arg(long)]
        node_posteriors: Option<PathBuf>,
    },
    /// Run the full benchmark and write the results CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: QuantifierOverrides,
        /// Comma-separated protocols to keep.
        #[arg(long)]
        shift: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Rank quantifiers and mark best-equivalent ones from a results CSV.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: PathBuf,
    },
}

fn master_seed(flag: Option<u64>, cfg: Option<&RunConfig>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var("GQ_SEED") {
        return v
            .trim()
            .parse()
            .map_err(|_| Error::param("GQ_SEED", format!("not an unsigned integer: {v:?}")));
    }
    Ok(cfg.and_then(|c| c.seed).unwrap_or(0))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::param("config", "--config is required"))?;
    RunConfig::load(path)
}

fn out_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
                _ => Ok(()),
            }
        }
    }
}

fn first(seeds: &[u64], key: &str) -> Result<u64> {
    seeds
        .first()
        .copied()
        .ok_or_else(|| Error::param(key, "at least one seed is required"))
}

fn cmd_split(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let master = master_seed(common.seed, Some(&cfg))?;
    let g = cfg.dataset.load()?;
    let seed = cfg.split_seed(master, first(&cfg.split.seeds, "split.seeds")?);
    let split = make_split(&g, cfg.split.ratios, seed)?;
    let out = out_path(common, "split.json");
    split.save(&out)?;
    eprintln!(
        "split: {} / {} / {} nodes -> {}",
        split.classifier_train.len(),
        split.quantifier_train.len(),
        split.quantifier_test_pool.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(common: &Common, split_path: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    if cfg.classifier.kind != "logistic" {
        return Err(Error::param("classifier.kind", "train needs kind=logistic"));
    }
    let master = master_seed(common.seed, Some(&cfg))?;
    let g = cfg.dataset.load()?;
    let split = Split::load(split_path)?;
    split.validate(g.num_nodes())?;
    let seed = cfg.classifier_seed(
        master,
        first(&cfg.split.seeds, "split.seeds")?,
        first(&cfg.classifier.seeds, "classifier.seeds")?,
    );
    let train = TrainConfig {
        seed,
        ..cfg.classifier.train.clone()
    };
    let model = classifier::fit(&g, &split.classifier_train, &train)?;
    let all: Vec<usize> = (0..g.num_nodes()).collect();
    let post = model.predict_proba(&g, &all)?;
    let dir = out_path(common, ".");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&model, Some(&dir.join("model.json")))?;
    post.save(&dir.join("posteriors.csv"))?;
    eprintln!("train: model.json and posteriors.csv -> {}", dir.display());
    Ok(())
}

fn cmd_sample(common: &Common, split_path: &Path, shift: Option<&str>) -> Result<()> {
    let cfg = load_config(common)?;
    let master = master_seed(common.seed, Some(&cfg))?;
    let g = cfg.dataset.load()?;
    let split = Split::load(split_path)?;
    split.validate(g.num_nodes())?;
    let plan = match shift {
        Some(s) => {
            let protocol: Protocol = s.parse()?;
            cfg.shifts
                .iter()
                .find(|p| p.protocol == protocol)
                .cloned()
                .unwrap_or_else(|| SamplePlan::new(protocol, 0))
        }
        None => match cfg.shifts.as_slice() {
            [only] => only.clone(),
            _ => {
                return Err(Error::param(
                    "shift",
                    "--shift is required unless the config has exactly one shift",
                ))
            }
        },
    };
    let plan = cfg.bound_plan(&plan, master, first(&cfg.split.seeds, "split.seeds")?);
    let samples = samplers::sample(&g, &split.quantifier_test_pool, &plan)?;
    let out = out_path(common, "samples.json");
    save_samples(&samples, &out)?;
    eprintln!(
        "sample: {} {} samples -> {}",
        samples.len(),
        plan.protocol.as_str(),
        out.display()
    );
    Ok(())
}

/// Picks the quantifier named by `--quantifier` from the config (by display
/// name or kind), or builds a default one, then applies overrides.
fn select_quantifier(cfg: Option<&RunConfig>, ov: &QuantifierOverrides) -> Result<QuantifierConfig> {
    let listed = cfg.map(|c| c.quantifiers.as_slice()).unwrap_or_default();
    let mut q = match &ov.quantifier {
        Some(name) => listed
            .iter()
            .find(|q| q.display_name() == *name)
            .or_else(|| listed.iter().find(|q| q.kind == *name && q.sis.is_none()))
            .cloned()
            .unwrap_or_else(|| QuantifierConfig::of_kind(name)),
        None => match listed {
            [only] => only.clone(),
            _ => return Err(Error::param("quantifier", "--quantifier is required")),
        },
    };
    apply_overrides(&mut q, ov);
    q.validate()?;
    Ok(q)
}

fn apply_overrides(q: &mut QuantifierConfig, ov: &QuantifierOverrides) {
    if let Some(s) = ov.sigma {
        if q.kind()
            .is_ok_and(|k| k == graphquant::quantifiers::QuantifierKind::Kdey)
        {
            q.sigma = Some(s);
        }
    }
    if let Some(mix) = ov.lambda_mix {
        let weighted = q.kind().is_ok_and(|k| k.accepts_weights());
        match &mut q.sis {
            Some(sis) => {
                sis.kernel.kind = "interpolated-ppr".into();
                sis.kernel.lambda_mix = Some(mix);
            }
            None if weighted && ov.quantifier.is_some() => {
                q.sis = Some(SisConfig {
                    kernel: KernelConfig {
                        kind: "interpolated-ppr".into(),
                        lambda_mix: Some(mix),
                        ..KernelConfig::constant()
                    },
                    floor: None,
                    p_kernel: None,
                });
            }
            None => {}
        }
    }
}

#[derive(Serialize)]
struct Estimate<'a> {
    quantifier: String,
    prevalence: &'a Prevalence,
    flags: Vec<String>,
}

fn estimate(name: &str, o: &Outcome) -> serde_json::Value {
    json!(Estimate {
        quantifier: name.into(),
        prevalence: &o.prevalence,
        flags: o.flags.iter().map(|f| f.to_string()).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_quantify(
    common: &Common,
    ov: &QuantifierOverrides,
    posteriors: Option<&Path>,
    train_posteriors: Option<&Path>,
    train_labels: Option<&Path>,
    split: Option<&Path>,
    samples: Option<&Path>,
    node_posteriors: Option<&Path>,
) -> Result<()> {
    let cfg = common.config.as_ref().map(|_| load_config(common)).transpose()?;
    let q = select_quantifier(cfg.as_ref(), ov)?;
    let name = q.display_name();

    if let Some(test_path) = posteriors {
        if q.sis.is_some() {
            return Err(Error::param(
                "lambda-mix",
                "SIS needs a graph; use --split/--samples/--node-posteriors",
            ));
        }
        let test = load_posteriors_inferred(test_path)?;
        let (train, labels) = match (train_posteriors, train_labels) {
            (Some(tp), Some(tl)) => (load_posteriors(tp, test.num_classes())?, read_labels(tl)?),
            _ => (PosteriorMatrix::new(Vec::new(), test.num_classes())?, Vec::new()),
        };
        if train.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: train.len(),
                got: labels.len(),
            });
        }
        let outcome = make_quantifier(&q, &train, &labels, None)?.quantify(&test)?;
        return write_json(&estimate(&name, &outcome), common.out.as_deref());
    }

    let (Some(split), Some(samples), Some(node_posteriors)) = (split, samples, node_posteriors) else {
        return Err(Error::param(
            "posteriors",
            "give --posteriors, or --split with --samples and --node-posteriors",
        ));
    };
    let cfg = cfg.ok_or_else(|| Error::param("config", "--config is required with --split"))?;
    let g = cfg.dataset.load()?;
    let labels = g.require_labels()?;
    let split = Split::load(split)?;
    split.validate(g.num_nodes())?;
    let post = load_posteriors(node_posteriors, g.num_classes())?;
    if post.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: g.num_nodes(),
            got: post.len(),
        });
    }
    let train = post.select(&split.quantifier_train);
    let train_labels: Vec<usize> = split.quantifier_train.iter().map(|&u| labels[u]).collect();
    let base = match q.sis {
        None => Some(make_quantifier(&q, &train, &train_labels, None)?),
        Some(_) => None,
    };
    let mut out = Vec::new();
    for (id, s) in load_samples(samples)?.iter().enumerate() {
        let test = post.select(&s.nodes);
        let outcome = match (&base, &q.sis) {
            (Some(f), _) => f.quantify(&test)?,
            (None, Some(sis)) => {
                let rho = density_ratio(
                    &g,
                    &split.quantifier_train,
                    &s.nodes,
                    &sis.q_kernel()?,
                    &sis.p_kernel()?,
                    sis.floor(),
                )?;
                let w = class_weights(&rho, &train_labels, g.num_classes())?;
                make_quantifier(&q, &train, &train_labels, Some(&w))?.quantify(&test)?
            }
            (None, None) => unreachable!(),
        };
        let mut e = estimate(&name, &outcome);
        e["sample_id"] = json!(id);
        e["true_prevalence"] = json!(s.true_prevalence);
        e["ae"] = json!(ae(&s.true_prevalence, &outcome.prevalence)?);
        e["rae"] = json!(rae(&s.true_prevalence, &outcome.prevalence, s.nodes.len())?);
        out.push(e);
    }
    write_json(&out, common.out.as_deref())
}

fn cmd_bench(common: &Common, ov: &QuantifierOverrides, shift: Option<&str>, jobs: usize) -> Result<()> {
    let mut cfg = load_config(common)?;
    let master = master_seed(common.seed, Some(&cfg))?;
    if let Some(names) = &ov.quantifier {
        let wanted: Vec<&str> = names.split(',').map(str::trim).collect();
        cfg.quantifiers
            .retain(|q| wanted.iter().any(|w| *w == q.display_name() || *w == q.kind));
        if cfg.quantifiers.is_empty() {
            return Err(Error::param(
                "quantifier",
                format!("no configured quantifier matches {names:?}"),
            ));
        }
    }
    for q in &mut cfg.quantifiers {
        apply_overrides(
            q,
            &QuantifierOverrides {
                quantifier: None,
                ..ov.clone()
            },
        );
    }
    if let Some(shifts) = shift {
        let wanted = shifts
            .split(',')
            .map(|s| s.trim().parse::<Protocol>())
            .collect::<Result<Vec<_>>>()?;
        cfg.shifts.retain(|p| wanted.contains(&p.protocol));
        for w in wanted {
            if !cfg.shifts.iter().any(|p| p.protocol == w) {
                cfg.shifts.push(SamplePlan::new(w, 0));
            }
        }
    }
    let g = cfg.dataset.load()?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results.csv"));
    let result = run_benchmark(&cfg, &g, master, jobs)?;
    write_results(&result.results, &out)?;
    if !result.failures.is_empty() {
        let path = out.with_extension("failures.csv");
        write_failures(&result.failures, &path)?;
    }
    eprintln!(
        "bench: {} trials, {} failures -> {}",
        result.results.len(),
        result.failures.len(),
        out.display()
    );
    Ok(())
}

fn cmd_report(common: &Common, results: &Path) -> Result<()> {
    let table = rank_and_test(&read_results(results)?)?;
    let out = out_path(common, "ranks.csv");
    table.save(&out)?;
    eprintln!("report: {} rows -> {}", table.rows.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split { common } => cmd_split(&common),
        Command::Train { common, split } => cmd_train(&common, &split),
        Command::Sample { common, split, shift } => cmd_sample(&common, &split, shift.as_deref()),
        Command::Quantify {
            common,
            overrides,
            posteriors,
            train_posteriors,
            train_labels,
            split,
            samples,
            node_posteriors,
        } => cmd_quantify(
            &common,
            &overrides,
            posteriors.as_deref(),
            train_posteriors.as_deref(),
            train_labels.as_deref(),
            split.as_deref(),
            samples.as_deref(),
            node_posteriors.as_deref(),
        ),
        Command::Bench {
            common,
            overrides,
            shift,
            jobs,
        } => cmd_bench(&common, &overrides, shift.as_deref(), jobs),
        Command::Report { common, results } => cmd_report(&common, &results),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": e.kind(), "key": e.key(), "message": e.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}
