//! Pipeline stages. Each reads its inputs from, and writes its artifacts to,
//! the run's output directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ensemble_ids::classifier::{mlp_init, mlp_predict, mlp_predict_proba, mlp_train, MlpConfig};
use ensemble_ids::clustering::{FcmModel, KMeansModel};
use ensemble_ids::dataset::{
    apply_scaler, binarize_labels, build_encoding_map, encode_categoricals, fit_scaler, load_csv, CsvOptions,
    DatasetFlavor, RawTable,
};
use ensemble_ids::ensemble::{label_dataset, LabelSummary, VoteWeights};
use ensemble_ids::feature_select::{select_features, FeatureSet};
use ensemble_ids::metrics::{classification_report, clustering_report, confusion, pr_curve, roc_curve, ConfusionMatrix};
use ensemble_ids::{ClassReport, ClusterReport, Matrix, Mlp};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{RunConfig, SelectionMode};
use crate::manifest::RunManifest;

pub const MATRIX: &str = "matrix.csv";
pub const TEST_MATRIX: &str = "test_matrix.csv";
pub const ENCODING: &str = "encoding.json";
pub const SCALER: &str = "scaler.json";
pub const PREPROCESS: &str = "preprocess.json";
pub const FEATURES: &str = "features.json";
pub const LABELED: &str = "labeled.csv";
pub const VOTES: &str = "votes.csv";
pub const AUDIT: &str = "label_audit.json";
pub const MODEL: &str = "model.json";
pub const TRAIN_LOG: &str = "training_log.csv";
pub const EVAL: &str = "eval.json";
pub const ROC: &str = "roc.csv";
pub const PR: &str = "pr.csv";
pub const REPORT: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

pub struct Ctx {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let dir = cfg.output_dir.clone();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let manifest = RunManifest::open(&dir, &cfg)?;
        Ok(Self { cfg, dir, manifest })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, name: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.is_file() {
            bail!("{} not found; run `{producer}` first", p.display());
        }
        Ok(p)
    }

    fn finish(&mut self, stage: &str, start: Instant, files: &[&str], detail: BTreeMap<String, f64>) -> Result<()> {
        self.manifest
            .record_stage(stage, start.elapsed().as_secs_f64(), &self.dir, files, detail)?;
        self.manifest.save(&self.dir)
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

// ---------------------------------------------------------------- preprocess

fn read_table(path: &Path, cfg: &RunConfig) -> Result<RawTable> {
    let flavor = cfg.data.flavor;
    let delimiter = cfg.data.delimiter as u8;
    let columns = if flavor.has_header() {
        None
    } else {
        let mut first = String::new();
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?).read_line(&mut first)?;
        let arity = first.trim_end().split(delimiter as char).count();
        Some(
            flavor
                .schema(arity)
                .with_context(|| format!("{}: no {flavor:?} schema has {arity} columns", path.display()))?,
        )
    };
    let opts = CsvOptions {
        delimiter,
        has_header: flavor.has_header(),
        columns,
        malformed: cfg.data.malformed,
    };
    Ok(load_csv(path, &opts)?)
}

/// Strips non-feature columns and pulls out ground truth when present.
fn split_labels(mut table: RawTable, cfg: &RunConfig) -> Result<(RawTable, Option<Vec<u8>>)> {
    let mut drop = cfg.data.flavor.drop_columns();
    drop.extend(cfg.data.drop_columns.iter().cloned());
    table.drop_columns(&drop);
    let labels = match cfg.data.label_column() {
        Some(col) if table.header.contains(&col) => {
            let y = binarize_labels(&table, &col, &cfg.data.normal_token())?;
            table.drop_columns(&[col]);
            Some(y)
        }
        Some(col) if cfg.data.label_column.is_some() => bail!("label column {col:?} not found"),
        _ => None,
    };
    Ok((table, labels))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub flavor: DatasetFlavor,
    pub rows: usize,
    pub dropped_rows: usize,
    pub features: usize,
    pub categorical_columns: Vec<String>,
    pub ground_truth: bool,
    pub malicious: Option<usize>,
    pub test_rows: Option<usize>,
}

pub fn preprocess(ctx: &mut Ctx) -> Result<()> {
    let start = Instant::now();
    let cfg = ctx.cfg.clone();
    let train = cfg.train_path()?.to_path_buf();
    let (table, truth) = split_labels(read_table(&train, &cfg)?, &cfg)?;
    let dropped = table.dropped_rows;
    let categorical = cfg.data.flavor.categorical_columns(&table, &[]);
    let map = build_encoding_map(&table, &categorical, &cfg.data.flavor.fixed_maps())?;
    let raw = encode_categoricals::<f64>(&table, &map, &[], cfg.data.unseen)?;
    let scaler = fit_scaler(&raw)?;
    let mut x = apply_scaler(&raw, &scaler)?;
    x.labels = truth.clone();
    x.save_csv(ctx.path(MATRIX))?;
    std::fs::write(ctx.path(ENCODING), map.to_json()? + "\n")?;
    write_json(&ctx.path(SCALER), &scaler)?;
    ctx.manifest.record_input("train", &train)?;

    let mut files = vec![MATRIX, ENCODING, SCALER, PREPROCESS];
    let test_rows = match &cfg.data.test {
        Some(test) => {
            let (t, y) = split_labels(read_table(test, &cfg)?, &cfg)?;
            let mut tx = apply_scaler(&encode_categoricals::<f64>(&t, &map, &[], cfg.data.unseen)?, &scaler)?;
            if tx.names != x.names {
                bail!("test columns {:?} differ from training columns {:?}", tx.names, x.names);
            }
            tx.labels = y;
            tx.save_csv(ctx.path(TEST_MATRIX))?;
            ctx.manifest.record_input("test", test)?;
            files.push(TEST_MATRIX);
            Some(tx.n_rows())
        }
        None => {
            let _ = std::fs::remove_file(ctx.path(TEST_MATRIX));
            None
        }
    };
    let summary = PreprocessSummary {
        flavor: cfg.data.flavor,
        rows: x.n_rows(),
        dropped_rows: dropped,
        features: x.n_cols(),
        categorical_columns: categorical,
        ground_truth: truth.is_some(),
        malicious: truth.as_ref().map(|y| y.iter().filter(|&&v| v == 1).count()),
        test_rows,
    };
    write_json(&ctx.path(PREPROCESS), &summary)?;
    println!(
        "preprocess: {} rows kept, {} dropped, {} features ({} categorical encoded)",
        summary.rows,
        summary.dropped_rows,
        summary.features,
        summary.categorical_columns.len()
    );
    ctx.finish("preprocess", start, &files, BTreeMap::new())
}

// -------------------------------------------------------------------- select

pub fn select(ctx: &mut Ctx) -> Result<()> {
    let start = Instant::now();
    let x = Matrix::load_csv(ctx.require(MATRIX, "preprocess")?)?;
    let stage = &ctx.cfg.select;
    let x = match stage.mode {
        SelectionMode::Calibration => {
            if x.labels.is_none() {
                bail!(
                    "calibration mode needs ground-truth labels in {MATRIX}; \
                     set select.mode = \"pseudo-label\" to select against provisional ensemble labels"
                );
            }
            x
        }
        SelectionMode::PseudoLabel => {
            let pass = label_dataset(&x, None, &ctx.cfg.label.params, None)?;
            let provisional = pass.dataset.labels().to_vec();
            info!(
                "pseudo-label pass over all {} features: {} of {} rows provisionally malicious",
                x.n_cols(),
                provisional.iter().filter(|&&l| l == 1).count(),
                provisional.len()
            );
            x.with_labels(provisional)?
        }
    };
    let fs = select_features(&x, &stage.params)?;
    std::fs::write(ctx.path(FEATURES), fs.to_json()? + "\n")?;
    println!(
        "select ({:?}): {} of {} features kept, FRR = 1 - {}/{} = {:.4}, alpha = {}",
        stage.mode,
        fs.len(),
        fs.total_features,
        fs.len(),
        fs.total_features,
        fs.frr,
        fs.alpha
    );
    for f in &fs.features {
        println!("  {:<28} {:?}  cof {:+.4}  beta {:+.4}", f.name, f.provenance, f.cof, f.beta);
    }
    ctx.finish("select", start, &[FEATURES], BTreeMap::new())
}

fn load_features(ctx: &Ctx) -> Result<FeatureSet> {
    let p = ctx.require(FEATURES, "select")?;
    Ok(FeatureSet::from_json(&std::fs::read_to_string(p)?)?)
}

// --------------------------------------------------------------------- label

#[derive(Debug, Serialize, Deserialize)]
pub struct OpticsAudit {
    pub threshold: Option<f64>,
    pub n_clusters: usize,
    pub largest: Option<i64>,
    pub noise: usize,
    pub warning: Option<String>,
    pub subsample: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AgainstTruth {
    pub clustering: ClusterReport,
    pub confusion: ConfusionMatrix,
    pub classification: ClassReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelAudit {
    pub weights: VoteWeights,
    pub polarity: String,
    pub summary: LabelSummary,
    pub optics: OpticsAudit,
    pub kmeans: KMeansModel<f64>,
    pub fcm: FcmModel<f64>,
    /// Per algorithm and for the vote, when ground truth is available.
    pub against_truth: Option<BTreeMap<String, AgainstTruth>>,
}

fn against(truth: &[u8], pred: &[u8]) -> Result<AgainstTruth> {
    let cm = confusion(truth, pred)?;
    Ok(AgainstTruth {
        clustering: clustering_report(truth, pred)?,
        confusion: cm,
        classification: classification_report(&cm)?,
    })
}

pub fn label(ctx: &mut Ctx) -> Result<()> {
    let start = Instant::now();
    let x = Matrix::load_csv(ctx.require(MATRIX, "preprocess")?)?;
    let fs = load_features(ctx)?;
    let stage = &ctx.cfg.label;
    let truth = x.labels.clone();
    let reference = match (stage.calibrate_polarity, &truth) {
        (true, Some(t)) => Some(t.as_slice()),
        (true, None) => bail!("label.calibrate_polarity needs ground-truth labels"),
        _ => None,
    };
    let out = label_dataset(&x, Some(&fs), &stage.params, reference)?;
    let ds = &out.dataset;
    ds.features.save_csv(ctx.path(LABELED))?;
    ds.write_votes_csv(BufWriter::new(File::create(ctx.path(VOTES))?))?;

    let against_truth = match &truth {
        Some(t) => {
            let mut m = BTreeMap::new();
            m.insert("kmeans".to_string(), against(t, &ds.kmeans)?);
            m.insert("optics".to_string(), against(t, &ds.optics)?);
            m.insert("fcm".to_string(), against(t, &ds.fcm)?);
            m.insert("ensemble".to_string(), against(t, ds.labels())?);
            Some(m)
        }
        None => None,
    };
    let summary = ds.summary();
    let audit = LabelAudit {
        weights: stage.params.weights,
        polarity: if reference.is_some() { "calibration labels" } else { "fcm distance from mean" }.to_string(),
        summary,
        optics: OpticsAudit {
            threshold: out.optics.threshold,
            n_clusters: out.optics.n_clusters,
            largest: out.optics.largest,
            noise: out.optics.noise,
            warning: out.optics.warning.clone(),
            subsample: stage.params.optics.subsample,
        },
        kmeans: out.kmeans_model,
        fcm: out.fcm_model,
        against_truth,
    };
    write_json(&ctx.path(AUDIT), &audit)?;

    println!(
        "label: {} rows, {} malicious, {} benign",
        audit.summary.rows, audit.summary.malicious, audit.summary.benign
    );
    println!("  agreement   kmeans  optics  fcm");
    for (name, row) in ["kmeans", "optics", "fcm"].iter().zip(&audit.summary.agreement) {
        println!("  {name:<10} {:>7.4} {:>7.4} {:>7.4}", row[0], row[1], row[2]);
    }
    if let Some(w) = &audit.optics.warning {
        println!("  OPTICS: {w}");
    }
    let detail = BTreeMap::from([
        ("kmeans_seconds".to_string(), out.seconds[0]),
        ("optics_seconds".to_string(), out.seconds[1]),
        ("fcm_seconds".to_string(), out.seconds[2]),
    ]);
    ctx.finish("label", start, &[LABELED, VOTES, AUDIT], detail)
}

// --------------------------------------------------------------------- train

pub fn train(ctx: &mut Ctx) -> Result<()> {
    let start = Instant::now();
    let d = Matrix::load_csv(ctx.require(LABELED, "label")?)?;
    let y = d.labels.clone().context("labeled matrix has no label column")?;
    let cfg = MlpConfig {
        input_dim: d.n_cols(),
        ..ctx.cfg.mlp.clone()
    };
    let model = mlp_init::<f64>(&cfg)?;
    let (model, log) = mlp_train(model, d.data.view(), &y, &cfg)?;
    std::fs::write(ctx.path(MODEL), model.to_json()? + "\n")?;
    log.write_csv(BufWriter::new(File::create(ctx.path(TRAIN_LOG))?))?;
    let last = log.epochs.last().map(|e| e.loss);
    println!(
        "train: {} rows, {} epochs, final loss {}",
        d.n_rows(),
        log.epochs.len(),
        last.map_or("n/a".to_string(), |l| format!("{l:.5}"))
    );
    let detail = BTreeMap::from([("training_seconds".to_string(), log.total_seconds())]);
    ctx.finish("train", start, &[MODEL, TRAIN_LOG], detail)
}

// ---------------------------------------------------------------------- eval

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub rows: usize,
    pub predicted_malicious: usize,
    pub predicted_benign: usize,
    pub score_histogram: Vec<usize>,
    pub confusion: Option<ConfusionMatrix>,
    pub metrics: Option<ClassReport>,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

pub fn eval(ctx: &mut Ctx) -> Result<()> {
    let start = Instant::now();
    let model_path = ctx.require(MODEL, "train")?;
    let model = Mlp::from_json(&std::fs::read_to_string(&model_path)?)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let fs = load_features(ctx)?;
    let (name, path) = if ctx.path(TEST_MATRIX).is_file() {
        ("test", ctx.path(TEST_MATRIX))
    } else {
        ("train", ctx.require(MATRIX, "preprocess")?)
    };
    let x = Matrix::load_csv(&path)?.select_named(&fs.names())?;
    let t = Instant::now();
    let scores = mlp_predict_proba(&model, x.data.view())?;
    let pred = mlp_predict(&model, x.data.view(), 0.5)?;
    let predict_seconds = t.elapsed().as_secs_f64();
    let malicious = pred.iter().filter(|&&p| p == 1).count();
    let mut histogram = vec![0usize; 10];
    for &s in &scores {
        histogram[((s * 10.0).floor() as usize).min(9)] += 1;
    }
    let mut report = EvalReport {
        dataset: name.to_string(),
        rows: x.n_rows(),
        predicted_malicious: malicious,
        predicted_benign: x.n_rows() - malicious,
        score_histogram: histogram,
        confusion: None,
        metrics: None,
        roc_auc: None,
        pr_auc: None,
    };
    let mut files = vec![EVAL];
    let _ = std::fs::remove_file(ctx.path(ROC));
    let _ = std::fs::remove_file(ctx.path(PR));
    if let Some(truth) = &x.labels {
        let cm = confusion(truth, &pred)?;
        report.metrics = Some(classification_report(&cm)?);
        report.confusion = Some(cm);
        let both = truth.contains(&1) && truth.contains(&0);
        if both {
            let roc = roc_curve(truth, &scores)?;
            let pr = pr_curve(truth, &scores)?;
            roc.write_csv(BufWriter::new(File::create(ctx.path(ROC))?))?;
            pr.write_csv(BufWriter::new(File::create(ctx.path(PR))?))?;
            report.roc_auc = Some(roc.auc);
            report.pr_auc = Some(pr.auc);
            files.extend([ROC, PR]);
        }
    }
    write_json(&ctx.path(EVAL), &report)?;
    match &report.metrics {
        Some(m) => println!(
            "eval ({name}, {} rows): accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} FAR {:.4} specificity {:.4} MCC {:.4} ROC-AUC {}",
            report.rows,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.far,
            m.specificity,
            m.mcc,
            report.roc_auc.map_or("n/a".into(), |a| format!("{a:.4}"))
        ),
        None => println!(
            "eval ({name}, {} rows, no ground truth): {} predicted malicious, {} benign",
            report.rows, report.predicted_malicious, report.predicted_benign
        ),
    }
    let detail = BTreeMap::from([("predict_seconds".to_string(), predict_seconds)]);
    ctx.finish("eval", start, &files, detail)
}

// -------------------------------------------------------------------- report

fn optional_json(path: &Path) -> Result<Option<Value>> {
    if path.is_file() {
        Ok(Some(read_json(path)?))
    } else {
        Ok(None)
    }
}

pub fn report(ctx: &mut Ctx) -> Result<()> {
    let start = Instant::now();
    let preprocess = optional_json(&ctx.path(PREPROCESS))?;
    let features = optional_json(&ctx.path(FEATURES))?;
    let audit = optional_json(&ctx.path(AUDIT))?;
    let eval = optional_json(&ctx.path(EVAL))?;
    let trained = ctx.path(MODEL).is_file();

    let selection = features.as_ref().map(|f| {
        json!({
            "selected": f["features"].as_array().map_or(0, Vec::len),
            "total": f["total_features"],
            "frr": f["frr"],
            "delta": f["delta"],
            "alpha": f["alpha"],
            "features": f["features"].as_array().map(|a| a.iter().map(|x| x["name"].clone()).collect::<Vec<_>>()),
        })
    });
    let ensemble = audit.as_ref().map(|a| {
        json!({
            "weights": a["weights"],
            "polarity": a["polarity"],
            "rows": a["summary"]["rows"],
            "malicious": a["summary"]["malicious"],
            "benign": a["summary"]["benign"],
            "agreement": a["summary"]["agreement"],
            "optics": a["optics"],
        })
    });
    let clustering = audit
        .as_ref()
        .and_then(|a| a.get("against_truth"))
        .filter(|v| !v.is_null())
        .cloned();
    let classifier = match (&eval, trained) {
        (Some(e), true) => json!({ "present": true, "evaluation": e }),
        (None, true) => json!({ "present": true, "evaluation": null }),
        _ => json!({ "present": false }),
    };
    let timings: BTreeMap<String, Value> = ctx
        .manifest
        .stages
        .iter()
        .map(|(k, v)| (k.clone(), json!({ "seconds": v.seconds, "detail": v.detail })))
        .collect();
    let doc = json!({
        "seed": ctx.cfg.seed,
        "preprocess": preprocess,
        "selection": selection,
        "ensemble": ensemble,
        "clustering_vs_truth": clustering,
        "classifier": classifier,
        "timings": timings,
    });
    write_json(&ctx.path(REPORT), &doc)?;
    std::fs::write(ctx.path(REPORT_MD), markdown(&doc))?;
    println!("report: {}", ctx.path(REPORT).display());
    ctx.finish("report", start, &[REPORT, REPORT_MD], BTreeMap::new())
}

fn fmt(v: &Value) -> String {
    match v.as_f64() {
        Some(f) if v.is_f64() => format!("{f:.4}"),
        _ => v.to_string(),
    }
}

fn markdown(doc: &Value) -> String {
    let mut s = String::from("# Run report\n\n");
    if let Some(p) = doc.get("preprocess").filter(|v| !v.is_null()) {
        s += &format!(
            "Rows: {}, features: {}, dropped rows: {}\n\n",
            p["rows"], p["features"], p["dropped_rows"]
        );
    }
    if let Some(f) = doc.get("selection").filter(|v| !v.is_null()) {
        s += &format!(
            "## Feature selection\n\n{} of {} features kept (FRR {}), alpha {}\n\n",
            f["selected"],
            f["total"],
            fmt(&f["frr"]),
            fmt(&f["alpha"])
        );
    }
    if let Some(e) = doc.get("ensemble").filter(|v| !v.is_null()) {
        s += &format!(
            "## Ensemble labels\n\n{} rows: {} malicious, {} benign\n\n",
            e["rows"], e["malicious"], e["benign"]
        );
    }
    if let Some(c) = doc.get("clustering_vs_truth").and_then(Value::as_object) {
        s += "## Against ground truth\n\n| source | accuracy | precision | recall | FAR | homogeneity | completeness | ARI | AMI |\n|---|---|---|---|---|---|---|---|---|\n";
        for (name, r) in c {
            let m = &r["classification"];
            let k = &r["clustering"];
            s += &format!(
                "| {name} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                fmt(&m["accuracy"]),
                fmt(&m["precision"]),
                fmt(&m["recall"]),
                fmt(&m["far"]),
                fmt(&k["homogeneity"]),
                fmt(&k["completeness"]),
                fmt(&k["ari"]),
                fmt(&k["ami"])
            );
        }
        s += "\n";
    }
    let c = &doc["classifier"];
    if c["present"] == json!(true) {
        s += "## Classifier\n\n";
        match c["evaluation"]["metrics"].as_object() {
            Some(m) => {
                for k in ["accuracy", "precision", "recall", "f1", "far", "specificity", "mcc"] {
                    s += &format!("- {k}: {}\n", fmt(&m[k]));
                }
                s += &format!("- roc_auc: {}\n", fmt(&c["evaluation"]["roc_auc"]));
            }
            None => s += "No ground truth available for evaluation.\n",
        }
    } else {
        s += "## Classifier\n\nNot trained in this run.\n";
    }
    s
}
