use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use mislabel_core::dataio::embeddings::write_matrix;
use mislabel_core::dataio::manifest::{write_mask, MANIFEST_VERSION};
use mislabel_core::dataio::{
    labels::write_labels, load_manifest, write_split, DatasetBundle, DatasetManifest, Labels, SplitData, SplitEntry,
    SyntheticGenerator, SyntheticSpec, TaskKind,
};
use mislabel_core::detectors::confident::detect_confident_learning;
use mislabel_core::detectors::{run_detector, DetectorSettings, Method, MislabelReport};
use mislabel_core::eval::{
    detection_f1, retrain_after_cleaning, retrain_multilabel_after_cleaning, roc_auc, sweep_data_fractions,
    sweep_noise_levels, tracin_threshold_sweep, FractionSweepData, NoiseSweepConfig, NoiseSweepData, SweepResult,
};
use mislabel_core::multilabel::{
    binary_confident_learning, optimal_per_class_removal_from, per_class_auc, plan_for_strategy, CleaningStrategy,
    RemovalPlan,
};
use mislabel_core::noise::{inject, load_external_labels, NoiseKind, NoiseSpec};
use mislabel_core::{EmbeddingTensor, Error, LabelSet, MultiLabelSet};
use serde_json::{json, Value};

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or inputs, found before or during setup (exit 1).
    Validation(String),
    /// Failure while computing or writing results (exit 2).
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Validation(_) | Error::Format { .. } | Error::MissingClass { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Output directory that remembers what was written to it.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| invalid(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.path(name), contents)?;
        self.record(name);
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.text(name, &(text + "\n"))
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

pub fn run(cmd: &Command, out: &mut Output) -> Result<Value> {
    match cmd {
        Command::Gen(a) => gen(a, out),
        Command::InjectNoise(a) => inject_noise(a, out),
        Command::Detect(a) => detect(a, out),
        Command::Clean(a) => clean(a, out),
        Command::Retrain(a) => retrain(&a.clean, out),
        Command::Eval(a) => eval(a, out),
        Command::SweepNoise(a) => sweep_noise(a, out),
        Command::SweepFractions(a) => sweep_fractions(a, out),
        Command::Gridsearch(a) => gridsearch(a, out),
    }
}

// ---------------------------------------------------------------------------
// Loading helpers

fn load(path: &Path) -> Result<DatasetBundle> {
    load_manifest(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn absolute(base: &Path, p: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(base.join(p))?)
}

/// The entry with every path made absolute, so a manifest written elsewhere
/// still points at the original files.
fn rebase(entry: &SplitEntry, base: &Path) -> Result<SplitEntry> {
    Ok(SplitEntry {
        embeddings: absolute(base, &entry.embeddings)?,
        labels: absolute(base, &entry.labels)?,
        clean_labels: entry.clean_labels.as_ref().map(|p| absolute(base, p)).transpose()?,
        noise_mask: entry.noise_mask.as_ref().map(|p| absolute(base, p)).transpose()?,
        n: entry.n,
        views: entry.views,
    })
}

/// A manifest derived from `bundle`, written into a different directory.
fn derived_manifest(bundle: &DatasetBundle, manifest_path: &Path, train: SplitEntry) -> Result<DatasetManifest> {
    let m = &bundle.manifest;
    let base = &bundle.base_dir;
    Ok(DatasetManifest {
        train,
        validation: m.validation.as_ref().map(|e| rebase(e, base)).transpose()?,
        test: m.test.as_ref().map(|e| rebase(e, base)).transpose()?,
        class_embeddings: m.class_embeddings.as_ref().map(|p| absolute(base, p)).transpose()?,
        removal_plan: None,
        source_manifest: Some(std::path::absolute(manifest_path)?),
        ..m.clone()
    })
}

fn write_manifest(out: &mut Output, manifest: &DatasetManifest) -> Result<PathBuf> {
    out.text("manifest.toml", &manifest.to_toml()?)?;
    Ok(out.path("manifest.toml"))
}

fn single_labels(bundle: &DatasetBundle, what: &str) -> Result<LabelSet> {
    match &bundle.train.labels {
        Labels::Single(l) => Ok(l.clone()),
        Labels::Multi(_) => Err(invalid(format!("{what} needs a single-label dataset"))),
    }
}

fn multi_labels(bundle: &DatasetBundle, what: &str) -> Result<MultiLabelSet> {
    match &bundle.train.labels {
        Labels::Multi(l) => Ok(l.clone()),
        Labels::Single(_) => Err(invalid(format!("{what} needs a multi-label dataset"))),
    }
}

/// Ground-truth labels of a split: the clean labels when recorded.
fn truth(split: &SplitData) -> &Labels {
    split.clean_labels.as_ref().unwrap_or(&split.labels)
}

/// Held-out split for retraining: test when present, else validation.
fn held_out<'a>(bundle: &'a DatasetBundle, what: &str) -> Result<(&'a str, &'a SplitData)> {
    match (&bundle.test, &bundle.validation) {
        (Some(t), _) => Ok(("test", t)),
        (None, Some(v)) => Ok(("validation", v)),
        _ => Err(invalid(format!("{what} needs a test or validation split"))),
    }
}

fn settings(bundle: &DatasetBundle, d: &DetectorArgs, t: &TrainArgs) -> DetectorSettings {
    DetectorSettings {
        train: t.config(),
        tta: d.tta,
        mode: d.mode,
        knn: d.knn(),
        sgd: d.sgd(),
        class_embeddings: bundle.class_embeddings.clone(),
    }
}

fn check_methods(bundle: &DatasetBundle, methods: &[Method], d: &DetectorArgs) -> Result<()> {
    if methods.contains(&Method::ZeroShot) && bundle.class_embeddings.is_none() {
        return Err(invalid("zero-shot detection needs class_embeddings in the manifest"));
    }
    if methods.contains(&Method::Knn) && d.rounds % 2 == 0 {
        return Err(invalid(format!("--rounds must be odd, got {}", d.rounds)));
    }
    Ok(())
}

fn detect_on(
    bundle: &DatasetBundle,
    y: &LabelSet,
    method: Method,
    d: &DetectorArgs,
    t: &TrainArgs,
) -> Result<MislabelReport> {
    check_methods(bundle, &[method], d)?;
    let s = settings(bundle, d, t);
    s.train.validate()?;
    let x = &bundle.train.embeddings;
    let cl = match method {
        Method::ConfidentLearning | Method::TracIn => Some(detect_confident_learning(x, y, &s.train, s.tta, s.mode)?),
        _ => None,
    };
    Ok(run_detector(method, x, y, &s, cl.as_ref())?)
}

fn read_report(path: &Path, n: usize) -> Result<MislabelReport> {
    let r = MislabelReport::read_csv(path).map_err(|e| invalid(e.to_string()))?;
    if r.len() != n {
        return Err(invalid(format!("{} covers {} examples, the dataset has {n}", path.display(), r.len())));
    }
    Ok(r)
}

fn read_plan(path: &Path, n: usize, c: usize) -> Result<RemovalPlan> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    RemovalPlan::from_csv(&text, n, c).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Detection metrics of a report against a known noise mask.
fn score_report(report: &MislabelReport, mask: &[bool]) -> Result<Value> {
    let s = detection_f1(&report.flags, mask)?;
    let auc = roc_auc(&report.scores, mask).ok();
    Ok(json!({
        "f1": s.f1,
        "precision": s.precision,
        "recall": s.recall,
        "score_auc": auc,
        "noised": mask.iter().filter(|&&m| m).count(),
    }))
}

// ---------------------------------------------------------------------------
// Commands

fn gen(a: &GenArgs, out: &mut Output) -> Result<Value> {
    let mut spec =
        SyntheticSpec::single_label(a.classes, a.n, a.dim, a.separation, a.seed).with_views(a.views, a.jitter);
    if a.multilabel {
        let c = a.classes;
        spec.cooccurrence = Some(
            (0..c)
                .map(|i| (0..c).map(|j| if i == j { a.prevalence } else { a.cooccurrence }).collect())
                .collect(),
        );
    }
    spec.validate()?;
    if a.n == 0 {
        return Err(invalid("--n must be at least 1"));
    }
    let g = SyntheticGenerator::new(spec)?;
    let mut split = |stem: &str, n: usize, stream: u64| -> Result<Option<SplitEntry>> {
        if n == 0 {
            return Ok(None);
        }
        let d = g.sample(n, stream)?;
        let entry = write_split(&out.dir, stem, &d.embeddings, &d.labels, None)?;
        out.record(&format!("{stem}.emb"));
        out.record(&format!("{stem}.labels"));
        Ok(Some(entry))
    };
    let train = split("train", a.n, 0)?.expect("n > 0");
    let validation = split("validation", a.validation, 1)?;
    let test = split("test", a.test, 2)?;
    write_matrix(out.path("classes.emb"), g.centers())?;
    out.record("classes.emb");
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        task: if a.multilabel {
            TaskKind::MultiLabel
        } else {
            TaskKind::SingleLabel
        },
        class_names: (0..a.classes).map(|c| format!("class{c}")).collect(),
        dim: a.dim,
        encoder: Some("synthetic-gaussian".into()),
        augmentation: (a.views > 1).then(|| format!("jitter-{}", a.jitter)),
        class_embeddings: Some("classes.emb".into()),
        removal_plan: None,
        source_manifest: None,
        train,
        validation,
        test,
        noise: None,
    };
    let path = write_manifest(out, &manifest)?;
    Ok(json!({ "manifest": path, "n": a.n, "classes": a.classes, "views": a.views }))
}

fn inject_noise(a: &InjectArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    let clean = match truth(&bundle.train) {
        Labels::Single(l) => l.clone(),
        Labels::Multi(_) => return Err(invalid("noise injection needs a single-label dataset")),
    };
    let spec = NoiseSpec {
        exact_count: a.exact,
        ..NoiseSpec::new(a.kind, a.rate, a.seed)
    };
    spec.validate(clean.num_classes())?;
    let result = match a.kind {
        NoiseKind::ExternalFile => {
            let path = a.labels.as_ref().ok_or_else(|| invalid("--kind external needs --labels"))?;
            load_external_labels(path, &clean).map_err(|e| invalid(e.to_string()))?
        }
        _ => {
            if a.labels.is_some() {
                return Err(invalid("--labels only applies to --kind external"));
            }
            let cfg = a.train_config();
            cfg.validate()?;
            inject(&spec, &clean, Some(&bundle.train.embeddings), &cfg)?
        }
    };
    write_labels(out.path("train.labels"), &result.noisy)?;
    write_labels(out.path("train.clean.labels"), &result.clean)?;
    write_mask(out.path("train.mask"), &result.mask)?;
    for f in ["train.labels", "train.clean.labels", "train.mask"] {
        out.record(f);
    }
    let base = &bundle.base_dir;
    let train = SplitEntry {
        embeddings: absolute(base, &bundle.manifest.train.embeddings)?,
        labels: "train.labels".into(),
        clean_labels: Some("train.clean.labels".into()),
        noise_mask: Some("train.mask".into()),
        ..bundle.manifest.train.clone()
    };
    let mut manifest = derived_manifest(&bundle, &a.io.manifest, train)?;
    manifest.noise = Some(result.spec.clone());
    let path = write_manifest(out, &manifest)?;
    Ok(json!({
        "manifest": path,
        "kind": result.spec.kind,
        "rate": result.spec.rate,
        "changed": result.num_changed(),
        "observed_rate": result.observed_rate(),
    }))
}

fn detect(a: &DetectArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    let y = single_labels(&bundle, "detect")?;
    let report = detect_on(&bundle, &y, a.method, &a.detector, &a.train)?;
    out.text("report.csv", &report.to_csv())?;
    let mut summary = json!({
        "method": a.method,
        "n": report.len(),
        "flagged": report.num_flagged(),
    });
    if let Some(mask) = &bundle.train.noise_mask {
        summary["detection"] = score_report(&report, mask)?;
    }
    out.json("summary.json", &summary)?;
    Ok(summary)
}

/// The report a single-label clean or retrain works from.
fn cleaning_report(a: &CleanArgs, bundle: &DatasetBundle, y: &LabelSet) -> Result<MislabelReport> {
    if a.plan.is_some() {
        return Err(invalid("--plan applies to multi-label datasets; use --report"));
    }
    match &a.report {
        Some(p) => read_report(p, y.len()),
        None => detect_on(bundle, y, a.method, &a.detector, &a.train),
    }
}

/// The removal plan a multi-label clean or retrain works from.
fn cleaning_plan(a: &CleanArgs, bundle: &DatasetBundle, y: &MultiLabelSet) -> Result<RemovalPlan> {
    if a.report.is_some() {
        return Err(invalid("--report applies to single-label datasets; use --plan"));
    }
    let (n, c) = (y.len(), y.num_classes());
    if let Some(p) = &a.plan {
        return read_plan(p, n, c);
    }
    if let Some(p) = &bundle.manifest.removal_plan {
        info!("using the manifest's removal plan {}", p.display());
        return read_plan(&bundle.base_dir.join(p), n, c);
    }
    let validation = match (&bundle.validation, a.strategy) {
        (Some(v), _) => Some((&v.embeddings, multi(truth(v))?)),
        (None, CleaningStrategy::Optimal) => {
            return Err(invalid("--strategy optimal needs a validation split"));
        }
        (None, _) => None,
    };
    let cfg = a.train.config();
    cfg.validate()?;
    let x = &bundle.train.embeddings;
    let cls = binary_confident_learning(x, y, &cfg)?;
    Ok(plan_for_strategy(a.strategy, &cls, x, y, validation, &a.grid.grid(), &cfg)?)
}

fn multi(l: &Labels) -> Result<&MultiLabelSet> {
    l.as_multi().ok_or_else(|| invalid("split labels are not multi-label"))
}

fn single(l: &Labels) -> Result<&LabelSet> {
    l.as_single().ok_or_else(|| invalid("split labels are not single-label"))
}

fn plan_summary(plan: &RemovalPlan) -> Value {
    json!({
        "removed_annotations": plan.total_removed(),
        "removed_per_class": (0..plan.num_classes).map(|c| plan.removed_count(c)).collect::<Vec<_>>(),
        "dropped_examples": plan.dropped.iter().filter(|&&d| d).count(),
        "strategies": plan.strategies,
        "alphas": plan.alphas,
    })
}

fn clean(a: &CleanArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    match bundle.task() {
        TaskKind::SingleLabel => {
            let y = single_labels(&bundle, "clean")?;
            let report = cleaning_report(a, &bundle, &y)?;
            out.text("report.csv", &report.to_csv())?;
            let keep = report.kept_indices();
            let train = &bundle.train;
            let x = train.embeddings.select_rows(&keep);
            let given = train.labels.select(&keep);
            let clean = train.clean_labels.as_ref().map(|l| l.select(&keep));
            let entry = write_split(&out.dir, "train", &x, &given, clean.as_ref())?;
            out.record("train.emb");
            out.record("train.labels");
            if clean.is_some() {
                out.record("train.clean.labels");
            }
            let manifest = derived_manifest(&bundle, &a.io.manifest, entry)?;
            let path = write_manifest(out, &manifest)?;
            Ok(json!({ "manifest": path, "removed": report.num_flagged(), "kept": keep.len() }))
        }
        TaskKind::MultiLabel => {
            let y = multi_labels(&bundle, "clean")?;
            let plan = cleaning_plan(a, &bundle, &y)?;
            out.text("plan.csv", &plan.to_csv())?;
            let train = rebase(&bundle.manifest.train, &bundle.base_dir)?;
            let mut manifest = derived_manifest(&bundle, &a.io.manifest, train)?;
            manifest.removal_plan = Some("plan.csv".into());
            let path = write_manifest(out, &manifest)?;
            let mut summary = plan_summary(&plan);
            summary["manifest"] = json!(path);
            Ok(summary)
        }
    }
}

fn retrain(a: &CleanArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    let (split_name, eval) = held_out(&bundle, "retrain")?;
    let cfg = a.train.config();
    cfg.validate()?;
    let summary = match bundle.task() {
        TaskKind::SingleLabel => {
            let y = single_labels(&bundle, "retrain")?;
            let report = cleaning_report(a, &bundle, &y)?;
            let o = retrain_after_cleaning(
                &bundle.train.embeddings,
                &y,
                &report.kept_indices(),
                &cfg,
                &eval.embeddings,
                single(truth(eval))?,
            )?;
            json!({
                "eval_split": split_name,
                "method": report.method,
                "removed": o.removed,
                "accuracy_before": o.before,
                "accuracy_after": o.after,
                "gain": o.gain(),
            })
        }
        TaskKind::MultiLabel => {
            let y = multi_labels(&bundle, "retrain")?;
            let plan = cleaning_plan(a, &bundle, &y)?;
            out.text("plan.csv", &plan.to_csv())?;
            let o = retrain_multilabel_after_cleaning(
                &bundle.train.embeddings,
                &y,
                &plan,
                &cfg,
                &eval.embeddings,
                multi(truth(eval))?,
            )?;
            json!({
                "eval_split": split_name,
                "removed_annotations": plan.total_removed(),
                "macro_auc_before": o.before_macro,
                "macro_auc_after": o.after_macro,
                "per_class_auc_before": o.before,
                "per_class_auc_after": o.after,
            })
        }
    };
    out.json("retrain.json", &summary)?;
    Ok(summary)
}

fn eval(a: &EvalArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    let summary = match bundle.task() {
        TaskKind::SingleLabel => {
            let n = bundle.train.embeddings.n();
            let path = a.report.as_ref().ok_or_else(|| invalid("eval on a single-label dataset needs --report"))?;
            let report = read_report(path, n)?;
            let mask = bundle
                .train
                .noise_mask
                .as_ref()
                .ok_or_else(|| invalid("the manifest records no clean labels or noise mask to score against"))?;
            let mut summary = score_report(&report, mask)?;
            summary["method"] = json!(report.method);
            summary["flagged"] = json!(report.num_flagged());
            if let Some(grid) = &a.thresholds {
                let cutoffs = grid
                    .0
                    .iter()
                    .map(|&t| {
                        (t >= 0.0 && t.fract() == 0.0 && t <= n as f64)
                            .then_some(t as usize)
                            .ok_or_else(|| invalid(format!("threshold {t} is not a count in 0..={n}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let marked = a.marked.or(Some(report.num_flagged()));
                let sweep = tracin_threshold_sweep(&report.ranking, mask, &cutoffs, marked)?;
                out.text("threshold_sweep.csv", &sweep.to_csv())?;
                summary["threshold_best"] = json!(sweep.best());
                summary["threshold_marked"] = json!(sweep.marked);
            }
            summary
        }
        TaskKind::MultiLabel => {
            if a.report.is_some() || a.thresholds.is_some() {
                return Err(invalid("--report and --thresholds apply to single-label datasets"));
            }
            let y = multi_labels(&bundle, "eval")?;
            let (split_name, split) = held_out(&bundle, "eval")?;
            let plan = match (&a.plan, &bundle.manifest.removal_plan) {
                (Some(p), _) => read_plan(p, y.len(), y.num_classes())?,
                (None, Some(p)) => read_plan(&bundle.base_dir.join(p), y.len(), y.num_classes())?,
                (None, None) => RemovalPlan::empty(y.len(), y.num_classes()),
            };
            let cfg = a.train.config();
            cfg.validate()?;
            let auc = per_class_auc(&bundle.train.embeddings, &y, &plan, &split.embeddings, multi(truth(split))?, &cfg)?;
            json!({
                "eval_split": split_name,
                "per_class_auc": auc,
                "macro_auc": mislabel_core::eval::macro_average(&auc),
                "removed_annotations": plan.total_removed(),
            })
        }
    };
    out.json("eval.json", &summary)?;
    Ok(summary)
}

fn write_sweep(out: &mut Output, sweep: &SweepResult, plot_data: bool) -> Result<Value> {
    out.text("sweep.csv", &sweep.to_csv())?;
    let summary = sweep.summary_json();
    out.json("sweep_summary.json", &summary)?;
    if plot_data {
        for (name, csv) in sweep.plot_data() {
            out.text(&name, &csv)?;
        }
    }
    Ok(summary)
}

fn sweep_noise(a: &SweepNoiseArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    let clean = match truth(&bundle.train) {
        Labels::Single(l) => l.clone(),
        Labels::Multi(_) => return Err(invalid("sweep-noise needs a single-label dataset")),
    };
    if a.kind == NoiseKind::ExternalFile {
        return Err(invalid("sweep-noise injects synthetic noise; external labels cannot be swept"));
    }
    check_methods(&bundle, &a.methods, &a.detector)?;
    let eval = if a.retrain {
        let (_, split) = held_out(&bundle, "--retrain")?;
        Some((&split.embeddings, single(truth(split))?))
    } else {
        None
    };
    let cfg = NoiseSweepConfig {
        kind: a.kind,
        detectors: settings(&bundle, &a.detector, &a.train),
        retrain: a.retrain,
    };
    cfg.detectors.train.validate()?;
    let data = NoiseSweepData {
        x: &bundle.train.embeddings,
        clean: &clean,
        eval,
    };
    let sweep = sweep_noise_levels(&data, &a.methods, &a.levels.0, &a.seeds, &cfg)?;
    write_sweep(out, &sweep, a.plot_data)
}

fn validation_and_test(bundle: &DatasetBundle, what: &str) -> Result<(&'static str, ValTest)> {
    let v = bundle.validation.as_ref().ok_or_else(|| invalid(format!("{what} needs a validation split")))?;
    let t = bundle.test.as_ref().ok_or_else(|| invalid(format!("{what} needs a test split")))?;
    Ok((
        "test",
        ValTest {
            xv: v.embeddings.clone(),
            yv: multi(truth(v))?.clone(),
            xt: t.embeddings.clone(),
            yt: multi(truth(t))?.clone(),
        },
    ))
}

struct ValTest {
    xv: EmbeddingTensor,
    yv: MultiLabelSet,
    xt: EmbeddingTensor,
    yt: MultiLabelSet,
}

fn sweep_fractions(a: &SweepFractionsArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    let y = multi_labels(&bundle, "sweep-fractions")?;
    let (_, vt) = validation_and_test(&bundle, "sweep-fractions")?;
    let cfg = a.train.config();
    cfg.validate()?;
    let data = FractionSweepData {
        x_train: &bundle.train.embeddings,
        y_train: &y,
        x_val: &vt.xv,
        y_val: &vt.yv,
        x_eval: &vt.xt,
        y_eval: &vt.yt,
    };
    let sweep = sweep_data_fractions(&data, &a.fractions.0, &a.strategies, &a.seeds, &a.grid.grid(), &cfg)?;
    write_sweep(out, &sweep, a.plot_data)
}

fn gridsearch(a: &GridsearchArgs, out: &mut Output) -> Result<Value> {
    let bundle = load(&a.io.manifest)?;
    let y = multi_labels(&bundle, "gridsearch")?;
    let v = bundle.validation.as_ref().ok_or_else(|| invalid("gridsearch needs a validation split"))?;
    let cfg = a.train.config();
    cfg.validate()?;
    let x = &bundle.train.embeddings;
    let cls = binary_confident_learning(x, &y, &cfg)?;
    let result = optimal_per_class_removal_from(&cls, x, &y, &v.embeddings, multi(truth(v))?, &a.grid.grid(), &cfg)?;
    out.text("grid.csv", &result.grid_csv())?;
    out.text("plan.csv", &result.plan.to_csv())?;
    out.json("choices.json", &json!(result.choices))?;
    let train = rebase(&bundle.manifest.train, &bundle.base_dir)?;
    let mut manifest = derived_manifest(&bundle, &a.io.manifest, train)?;
    manifest.removal_plan = Some("plan.csv".into());
    let path = write_manifest(out, &manifest)?;
    let mut summary = plan_summary(&result.plan);
    summary["manifest"] = json!(path);
    summary["choices"] = json!(result.choices);
    Ok(summary)
}
