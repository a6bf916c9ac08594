//! `segrecall` command line.
//!
//! Exit codes: 0 on success, 1 for runtime and data errors, 2 for usage
//! errors (bad flags, empty inputs, inconsistent dimensions).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use segrecall_core::archcalc::{report_variant, UdbVariant, DEFAULT_DECODER_WIDTH, DEFAULT_GCNET_KERNEL};
use segrecall_core::decision::{decide_bayes, decide_ml, PriorCounts, DEFAULT_FLOOR, DEFAULT_SIGMA};
use segrecall_core::gcn::{gcn_classify, FeatureMap, GcnWeights, DEFAULT_LEAKY_SLOPE};
use segrecall_core::linalg::Matrix;
use segrecall_core::losses::{
    check_logit_gradient, cross_entropy, cross_entropy_gradient, ial, ial_frozen_objective, ial_gradient,
    FrequencyWeights, ImportanceConfig, DEFAULT_SMOOTHING,
};
use segrecall_core::metrics::{ConfusionMatrix, EvalReport, Group, GroupSpec};
use segrecall_core::{ClassSpec, Error as CoreError, LabelMap, ProbMap};

use crate::config::{
    load_classes, load_groups, read_json, write_json, ClassSpecFile, GraphFile, ImportanceConfigFile, PriorsSidecar,
    RunRecord,
};
use crate::manifest::{load_labels, load_probs, DatasetManifest};
use crate::pgm::PgmError;
use crate::report::{arch_table, write_metrics_csv, ArchJson};
use crate::sft::{self, SftError};

/// A mistake in how the tool was invoked; exits with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "segrecall",
    version,
    about = "Recall-oriented decision rules, metrics and losses for semantic segmentation"
)]
pub struct Cli {
    /// Maximum worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate smoothed per-pixel class priors from a manifest's label maps.
    Priors(PriorsArgs),
    /// Turn probability maps into label maps with the Bayes or ML rule.
    Decide(DecideArgs),
    /// Score predicted label maps against ground truth and write a CSV report.
    Evaluate(EvaluateArgs),
    /// Compute a loss value, optionally checking its gradient numerically.
    Loss(LossArgs),
    /// Classify a feature map with GCN-derived class selectors.
    Gcn(GcnArgs),
    /// Report shapes, receptive fields and parameter counts of a decoder variant.
    Arch(ArchArgs),
}

#[derive(Debug, Args)]
pub struct PriorsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Gaussian smoothing sigma in pixels; 0 disables smoothing.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Lower cut-off applied after smoothing.
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    /// Output tensor; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleName {
    Bayes,
    Ml,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub rule: RuleName,
    /// Priors tensor written by `segrecall priors` (required for `--rule ml`).
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of predicted `.pgm` label maps.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Directory of ground-truth `.pgm` maps with matching file names.
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Class spec JSON or a preset (`camvid`, `cityscapes`).
    #[arg(long)]
    pub classes: String,
    /// Groups JSON or a preset (`camvid`, `cityscapes`, `single`).
    #[arg(long, default_value = "single")]
    pub groups: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossName {
    Ce,
    Wce,
    Ial,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Probability map tensor `[height, width, classes]`.
    #[arg(long, requires = "gt", required_unless_present = "random")]
    pub probs: Option<PathBuf>,
    /// Ground-truth label map.
    #[arg(long, requires = "probs")]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: LossName,
    /// Importance config JSON (for `--loss ial`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Class spec JSON or preset; defaults to the config's preset or generic names.
    #[arg(long)]
    pub classes: Option<String>,
    /// Smoothing constant `a` of the frequency weights (for `--loss wce`).
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    pub smoothing: f64,
    /// Class frequencies for `--loss wce`; measured on `--gt` when omitted.
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<f64>>,
    /// Compare the analytic logit gradient with central differences.
    #[arg(long)]
    pub grad_check: bool,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Use a seeded random instance of the given size instead of files.
    #[arg(long, value_name = "HxWxC", value_parser = parse_dims::<3>, conflicts_with_all = ["probs", "gt"])]
    pub random: Option<[usize; 3]>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GcnArgs {
    /// Feature map tensor `[height, width, depth]`.
    #[arg(long)]
    pub features: PathBuf,
    /// Graph JSON (explicit adjacency or group rule).
    #[arg(long)]
    pub graph: PathBuf,
    /// Layer weight matrices in order, one `--weights` per layer.
    #[arg(long = "weights", required = true)]
    pub weights: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LEAKY_SLOPE)]
    pub leaky_slope: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantName {
    Basic,
    Erf,
    GcnetLate,
    GcnetEarly,
}

#[derive(Debug, Args)]
pub struct ArchArgs {
    #[arg(long, value_enum)]
    pub variant: VariantName,
    /// Dilation rate of each factorized pair (erf only).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub dilations: Vec<usize>,
    /// Large-kernel size (gcnet variants only).
    #[arg(long, default_value_t = DEFAULT_GCNET_KERNEL)]
    pub kernel: usize,
    #[arg(long, value_name = "HxW", default_value = "768x768", value_parser = parse_dims::<2>)]
    pub input: [usize; 2],
    /// Decoder channel width.
    #[arg(long, default_value_t = DEFAULT_DECODER_WIDTH)]
    pub width: usize,
    #[arg(long, default_value_t = 19)]
    pub classes: usize,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    pub json: bool,
}

fn parse_dims<const N: usize>(s: &str) -> std::result::Result<[usize; N], String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != N {
        return Err(format!("expected {N} positive integers separated by 'x', got {s:?}"));
    }
    let mut out = [0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().ok().filter(|&v| v > 0).ok_or_else(|| format!("{p:?} is not a positive integer"))?;
    }
    Ok(out)
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let usage_core = |e: &CoreError| matches!(e, CoreError::EmptyInput | CoreError::DimensionMismatch(_));
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        let core = cause
            .downcast_ref::<CoreError>()
            .or_else(|| match cause.downcast_ref::<SftError>() {
                Some(SftError::Domain(e)) => Some(e),
                _ => None,
            })
            .or_else(|| match cause.downcast_ref::<PgmError>() {
                Some(PgmError::Label(e)) => Some(e),
                _ => None,
            });
        if core.is_some_and(usage_core) {
            return 2;
        }
    }
    1
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j as usize);
    }
    let pool = pool.build().context("cannot start worker pool")?;
    pool.install(|| match cli.command {
        Command::Priors(a) => priors(a),
        Command::Decide(a) => decide(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Loss(a) => loss(a),
        Command::Gcn(a) => gcn(a),
        Command::Arch(a) => arch(a),
    })
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn sidecar_path(out: &Path) -> Result<PathBuf> {
    if out.extension().is_some_and(|e| e == "json") {
        return Err(usage(format!("{} would collide with its own .json sidecar", out.display())));
    }
    Ok(out.with_extension("json"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            fs::create_dir_all(p).with_context(|| format!("cannot create {}", p.display()))
        }
        _ => Ok(()),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn priors(a: PriorsArgs) -> Result<()> {
    let sidecar = sidecar_path(&a.out)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    if manifest.is_empty() {
        return Err(anyhow!(CoreError::EmptyInput).context(format!("manifest {} has no entries", show(&a.manifest))));
    }
    let (h, w) = manifest.resolution.expect("non-empty manifest has a resolution");
    let c = manifest.classes.num_classes();
    let partial = (0..manifest.len())
        .into_par_iter()
        .map(|i| {
            let mut counts = PriorCounts::new(h, w, c);
            counts.add(&manifest.load_labels(i)?)?;
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = PriorCounts::new(h, w, c);
    for p in &partial {
        counts.merge(p)?;
    }
    let priors = counts.finish(a.sigma, a.floor)?;
    ensure_parent(&a.out)?;
    sft::save(&a.out, &sft::Tensor::from(&priors)).with_context(|| format!("cannot write {}", show(&a.out)))?;
    let record = PriorsSidecar {
        sigma: a.sigma,
        floor: a.floor,
        shape: [h, w, c],
        maps: manifest.len(),
        manifest_sha256: manifest.sha256.clone(),
        classes: ClassSpecFile::from(&manifest.classes),
        run: RunRecord::new(
            "priors",
            json!({ "manifest": show(&a.manifest), "sigma": a.sigma, "floor": a.floor, "out": show(&a.out) }),
        ),
    };
    write_json(&sidecar, &record)
}

/// Loads a priors tensor and its sidecar, checking them against each other.
pub fn load_priors(path: &Path) -> Result<(segrecall_core::decision::PriorsMap, PriorsSidecar)> {
    let sidecar: PriorsSidecar =
        read_json(&sidecar_path(path)?).with_context(|| format!("priors {} need their .json sidecar", show(path)))?;
    let t = sft::load(path).with_context(|| show(path))?;
    let priors = sft::priors_from_tensor(&t, sidecar.sigma, sidecar.floor).with_context(|| show(path))?;
    let shape = [priors.height(), priors.width(), priors.num_classes()];
    if shape != sidecar.shape {
        bail!("priors tensor {shape:?} disagrees with its sidecar {:?}", sidecar.shape);
    }
    Ok((priors, sidecar))
}

fn decide(a: DecideArgs) -> Result<()> {
    let priors = match (a.rule, &a.priors) {
        (RuleName::Ml, None) => return Err(usage("--rule ml needs --priors")),
        (RuleName::Bayes, Some(_)) => return Err(usage("--priors only applies to --rule ml")),
        (RuleName::Ml, Some(p)) => Some(load_priors(p)?),
        (RuleName::Bayes, None) => None,
    };
    let manifest = DatasetManifest::load(&a.manifest)?;
    if manifest.is_empty() {
        return Err(anyhow!(CoreError::EmptyInput).context(format!("manifest {} has no entries", show(&a.manifest))));
    }
    if let Some((p, side)) = &priors {
        if side.classes.names != manifest.classes.names() {
            bail!(
                "priors were estimated for classes {:?}, manifest has {:?}",
                side.classes.names,
                manifest.classes.names()
            );
        }
        let (h, w) = manifest.resolution.expect("non-empty manifest has a resolution");
        if (p.height(), p.width()) != (h, w) {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{h}x{w} priors"),
                found: format!("{}x{}", p.height(), p.width()),
            }
            .into());
        }
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", show(&a.out_dir)))?;
    let outputs = (0..manifest.len())
        .into_par_iter()
        .map(|i| {
            let p = manifest.load_probs(i)?;
            let labels = match &priors {
                Some((pr, _)) => decide_ml(&p, pr)?,
                None => decide_bayes(&p),
            };
            let name = manifest.entries[i].output_name().expect("checked at load");
            crate::pgm::save(&a.out_dir.join(&name), &labels).with_context(|| format!("cannot write {name}"))?;
            Ok(name)
        })
        .collect::<Result<Vec<_>>>()?;
    let record = RunRecord::new(
        "decide",
        json!({
            "manifest": show(&a.manifest),
            "manifest_sha256": manifest.sha256,
            "rule": if a.rule == RuleName::Ml { "ml" } else { "bayes" },
            "priors": a.priors.as_deref().map(show),
            "priors_sha256": a.priors.as_deref().map(sha256_file).transpose()?,
            "outputs": outputs,
        }),
    );
    write_json(&a.out_dir.join("run.json"), &record)
}

fn pgm_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot list {}", show(dir)))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "pgm") {
            names.push(path.file_name().expect("file has a name").to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let sidecar = sidecar_path(&a.out)?;
    let classes = load_classes(&a.classes, Path::new(""))?;
    let groups = load_groups(&a.groups, &classes)?;
    groups.assignment().context("every class must belong to a group")?;
    let names = pgm_names(&a.pred_dir)?;
    if names.is_empty() {
        return Err(anyhow!(CoreError::EmptyInput).context(format!("no .pgm files in {}", show(&a.pred_dir))));
    }
    let c = classes.num_classes();
    let partial = names
        .par_iter()
        .map(|n| {
            let pred = load_labels(&a.pred_dir.join(n), &classes)?;
            let gt = load_labels(&a.gt_dir.join(n), &classes)?;
            ConfusionMatrix::from_maps(c, &pred, &gt).with_context(|| format!("evaluating {n}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::new(c);
    for p in &partial {
        cm.merge(p)?;
    }
    let report = EvalReport::from_confusion(cm, &groups);
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &report, &classes, &groups)?;
    ensure_parent(&a.out)?;
    fs::write(&a.out, buf).with_context(|| format!("cannot write {}", show(&a.out)))?;
    let record = RunRecord::new(
        "evaluate",
        json!({
            "pred_dir": show(&a.pred_dir),
            "gt_dir": show(&a.gt_dir),
            "classes": ClassSpecFile::from(&classes),
            "groups": groups.groups().iter().map(|g| json!({
                "name": g.name,
                "classes": g.classes.iter().map(|&k| classes.name(k)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "images": names,
            "out": show(&a.out),
        }),
    );
    write_json(&sidecar, &record)
}

/// Contiguous thirds of the class list as G1..G3 (fewer groups below 3 classes).
fn default_groups(c: usize) -> GroupSpec {
    let n = c.min(3);
    let groups = (0..n)
        .map(|g| Group { name: format!("G{}", g + 1), classes: (g * c / n..(g + 1) * c / n).collect() })
        .collect();
    GroupSpec::new(c, groups).expect("partition is valid")
}

fn generic_classes(c: usize) -> Result<ClassSpec> {
    Ok(ClassSpec::with_default_ignore((0..c).map(|k| format!("class{k}")))?)
}

type Objective = Box<dyn Fn(&ProbMap) -> segrecall_core::Result<f64> + Sync>;

fn loss(a: LossArgs) -> Result<()> {
    let config_file: Option<ImportanceConfigFile> = a.config.as_deref().map(read_json).transpose()?;
    let (logits, dims, gt) = match (&a.random, &a.probs, &a.gt) {
        (Some([h, w, c]), _, _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let logits: Vec<f64> = (0..h * w * c).map(|_| rng.random_range(-3.0..3.0)).collect();
            let labels =
                (0..h * w).map(|_| if rng.random_bool(0.1) { 255 } else { rng.random_range(0..*c) as u8 }).collect();
            (logits, [*h, *w, *c], LabelMap::new(*h, *w, labels)?)
        }
        (None, Some(p), Some(g)) => {
            let probs = load_probs(p)?;
            let dims = [probs.height(), probs.width(), probs.num_classes()];
            // softmax(ln p) reproduces p; the clamp keeps zero entries finite
            let logits = probs.data().iter().map(|&v| v.max(1e-300).ln()).collect();
            let raw = crate::pgm::load(g).with_context(|| show(g))?;
            (logits, dims, raw)
        }
        _ => return Err(usage("give --probs and --gt, or --random HxWxC")),
    };
    let [h, w, c] = dims;
    let classes = match (&a.classes, config_file.as_ref().and_then(|f| f.groups.preset_classes())) {
        (Some(s), _) => load_classes(s, Path::new(""))?,
        (None, Some(spec)) if spec.num_classes() == c => spec,
        _ => generic_classes(c)?,
    };
    if classes.num_classes() != c {
        return Err(CoreError::DimensionMismatch(format!(
            "class spec has {} classes, probability map has {c}",
            classes.num_classes()
        ))
        .into());
    }
    let gt = LabelMap::with_ignore_id(gt.height(), gt.width(), gt.into_data(), classes.ignore_id())?;
    gt.validate(&classes)?;
    let p = ProbMap::from_logits(h, w, c, logits.clone())?;

    let mut report = serde_json::Map::new();
    let (value, grad, objective): (f64, Vec<f64>, Objective) = match a.loss {
        LossName::Ce => {
            let gt2 = gt.clone();
            (
                cross_entropy(&p, &gt, None)?,
                cross_entropy_gradient(&p, &gt, None)?,
                Box::new(move |q| cross_entropy(q, &gt2, None)),
            )
        }
        LossName::Wce => {
            let fw = match &a.frequencies {
                Some(f) => FrequencyWeights::new(f.clone(), a.smoothing)?,
                None => FrequencyWeights::from_label_maps([&gt], c, a.smoothing)?,
            };
            report.insert("frequencies".into(), json!(fw.frequencies()));
            report.insert("weights".into(), json!(fw.weights()));
            let value = cross_entropy(&p, &gt, Some(&fw))?;
            let grad = cross_entropy_gradient(&p, &gt, Some(&fw))?;
            let gt2 = gt.clone();
            (value, grad, Box::new(move |q| cross_entropy(q, &gt2, Some(&fw))))
        }
        LossName::Ial => {
            let cfg = match &config_file {
                Some(f) => f.resolve(&classes)?,
                None if a.random.is_some() => ImportanceConfig::with_defaults(default_groups(c))?,
                None => return Err(usage("--loss ial needs --config (or --random)")),
            };
            let b = ial(&p, &gt, &cfg)?;
            report.insert(
                "groups".into(),
                json!(cfg
                    .groups()
                    .groups()
                    .iter()
                    .map(|g| json!({
                        "name": g.name,
                        "classes": g.classes.iter().map(|&k| classes.name(k)).collect::<Vec<_>>(),
                    }))
                    .collect::<Vec<_>>()),
            );
            report.insert("group_losses".into(), json!(b.group_losses));
            report.insert("dynamic_weights".into(), json!(b.dynamic_weights));
            report.insert("multipliers".into(), json!(cfg.group_multipliers(&b.dynamic_weights)));
            let grad = ial_gradient(&p, &gt, &cfg)?;
            let gt2 = gt.clone();
            let frozen = b.dynamic_weights.clone();
            (b.total, grad, Box::new(move |q| ial_frozen_objective(q, &gt2, &cfg, &frozen)))
        }
    };
    report.insert("value".into(), json!(value));
    report.insert("pixels".into(), json!((0..gt.len()).filter(|&i| !gt.is_ignored(i)).count()));
    if a.grad_check {
        let gc = check_logit_gradient(&logits, h, w, c, &grad, a.step, objective)?;
        report.insert(
            "grad_check".into(),
            json!({
                "step": a.step,
                "entries": gc.entries,
                "max_abs_error": gc.max_abs_error,
                "max_rel_error": gc.max_rel_error,
            }),
        );
    }
    let record = RunRecord::new(
        "loss",
        json!({
            "loss": format!("{:?}", a.loss).to_lowercase(),
            "probs": a.probs.as_deref().map(show),
            "gt": a.gt.as_deref().map(show),
            "random": a.random,
            "seed": a.random.map(|_| a.seed),
            "config": config_file,
            "classes": ClassSpecFile::from(&classes),
            "smoothing": (a.loss == LossName::Wce).then_some(a.smoothing),
            "grad_check_step": a.grad_check.then_some(a.step),
        }),
    );
    report.insert("run".into(), serde_json::to_value(record)?);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &a.out {
        Some(path) => {
            ensure_parent(path)?;
            fs::write(path, text).with_context(|| format!("cannot write {}", show(path)))
        }
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn gcn(a: GcnArgs) -> Result<()> {
    let graph_file: GraphFile = read_json(&a.graph)?;
    let graph = graph_file.resolve(a.graph.parent().unwrap_or(Path::new("")))?;
    let layers = a
        .weights
        .iter()
        .map(|p| {
            let t = sft::load(p).with_context(|| show(p))?;
            Matrix::try_from(&t).with_context(|| show(p))
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = GcnWeights::new(layers, a.leaky_slope)?;
    let features = FeatureMap::try_from(&sft::load(&a.features).with_context(|| show(&a.features))?)
        .with_context(|| show(&a.features))?;
    let probs = gcn_classify(&features, &graph, &weights)?;
    let labels = decide_bayes(&probs);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", show(&a.out_dir)))?;
    sft::save(&a.out_dir.join("probs.sft"), &sft::Tensor::from(&probs))?;
    crate::pgm::save(&a.out_dir.join("labels.pgm"), &labels)?;
    let record = RunRecord::new(
        "gcn",
        json!({
            "features": show(&a.features),
            "features_sha256": sha256_file(&a.features)?,
            "graph": graph_file,
            "nodes": graph.num_nodes(),
            "adjacency": graph.adjacency().chunks(graph.num_nodes()).collect::<Vec<_>>(),
            "weights": a.weights.iter().map(|p| show(p)).collect::<Vec<_>>(),
            "weights_sha256": a.weights.iter().map(|p| sha256_file(p)).collect::<Result<Vec<_>>>()?,
            "layer_dims": weights.layers().iter().map(|m| [m.rows(), m.cols()]).collect::<Vec<_>>(),
            "leaky_slope": a.leaky_slope,
        }),
    );
    write_json(&a.out_dir.join("run.json"), &record)
}

fn arch(a: ArchArgs) -> Result<()> {
    let variant = match a.variant {
        VariantName::Basic => UdbVariant::Basic,
        VariantName::Erf => UdbVariant::Erf { dilations: a.dilations.clone() },
        VariantName::GcnetLate => UdbVariant::GcnetLate { k: a.kernel },
        VariantName::GcnetEarly => UdbVariant::GcnetEarly { k: a.kernel },
    };
    let report =
        report_variant(&variant, (a.input[0], a.input[1]), a.width, a.classes).map_err(|e| usage(e.to_string()))?;
    let text = if a.json {
        let mut s = serde_json::to_string_pretty(&ArchJson::from(&report))?;
        s.push('\n');
        s
    } else {
        arch_table(&report)
    };
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dimension_strings() {
        assert_eq!(parse_dims::<2>("768x512"), Ok([768, 512]));
        assert_eq!(parse_dims::<3>("4x4x4"), Ok([4, 4, 4]));
        assert!(parse_dims::<2>("768").is_err());
        assert!(parse_dims::<2>("0x4").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&usage("x")), 2);
        assert_eq!(exit_code(&anyhow!(CoreError::EmptyInput).context("outer")), 2);
        assert_eq!(exit_code(&SftError::Domain(CoreError::DimensionMismatch("d".into())).into()), 2);
        assert_eq!(exit_code(&CoreError::InvalidClass(3).into()), 1);
        assert_eq!(exit_code(&anyhow!("io")), 1);
    }

    #[test]
    fn default_groups_partition_classes() {
        let g = default_groups(7);
        assert_eq!(g.len(), 3);
        assert!(g.assignment().is_ok());
        assert_eq!(default_groups(2).len(), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
