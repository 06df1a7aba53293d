use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use log::{info, warn};
use xmlad::adifa::{localize, AdifaModel};
use xmlad::detector::{Detector, TrainedModel};
use xmlad::eval::{generate_normal_corpus, insurance_template, learning_curve};
use xmlad::extract::{build_feature_matrix, read_corpus, FeatureMatrix};
use xmlad::flatten::{build_dictionary, flatten_matrix, FlatDataset, Label, TfIdfDictionary};
use xmlad::inject::{make_anomalous_corpus, AttackClass, GroundTruth, InjectionSpec};
use xmlad::schema::{parse_xsd_with, ParseOptions, SchemaVector};

use crate::{parse_algorithm, report, usage, CliError, Command};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    let started = Instant::now();
    let name = command_name(&command);
    match command {
        Command::SchemaParse {
            xsd,
            output,
            no_attributes,
        } => {
            let text =
                fs::read_to_string(&xsd).with_context(|| format!("reading {}", xsd.display()))?;
            let parsed = parse_xsd_with(
                &text,
                ParseOptions {
                    include_attributes: !no_attributes,
                },
            )?;
            for u in &parsed.unsupported {
                warn!("unsupported construct `{}` at {}", u.construct, u.path);
            }
            info!("{} element descriptors", parsed.schema.len());
            parsed.schema.save(&output)?;
        }
        Command::Extract {
            schema,
            corpus,
            output,
        } => {
            let schema = SchemaVector::load(&schema)?;
            let docs = read_corpus(&corpus)?;
            let built = build_feature_matrix(&docs, &schema)?;
            for d in &built.diagnostics {
                warn!("{}: {}", d.id, d.message);
            }
            info!("{} documents measured", built.matrix.rows.len());
            built.matrix.save(&output)?;
        }
        Command::Flatten {
            schema,
            fm,
            output,
            dict,
            tfidf_k,
            dict_out,
            truth,
        } => {
            if dict.is_none() && tfidf_k == 0 {
                return Err(usage("--tfidf-k must be at least 1"));
            }
            let schema = SchemaVector::load(&schema)?;
            let matrix = FeatureMatrix::load(&fm)?;
            let dict = match dict {
                Some(p) => TfIdfDictionary::load(&p)?,
                None => build_dictionary(&matrix, tfidf_k),
            };
            if let Some(p) = dict_out {
                dict.save(&p)?;
            }
            let mut dataset = flatten_matrix(&matrix, &schema, &dict)?;
            if let Some(p) = truth {
                let labels = truth_labels(&GroundTruth::load(&p)?, &matrix)?;
                dataset = dataset.with_labels(labels)?;
            }
            info!("{} rows x {} columns", dataset.len(), dataset.width());
            dataset.save_csv(&output)?;
        }
        Command::Train {
            dataset,
            output,
            model,
        } => {
            let config = model.config()?;
            let dataset = FlatDataset::load_csv(&dataset)?;
            let training = normal_rows(&dataset);
            let trained = TrainedModel::train(&training, &config)?;
            info!("trained {} on {} rows", config.algorithm, training.len());
            trained.save(&output)?;
        }
        Command::Score {
            model,
            dataset,
            output,
            localize: top,
        } => {
            if top == Some(0) {
                return Err(usage("--localize must be at least 1"));
            }
            let model = TrainedModel::load(&model)?;
            if top.is_some() && !matches!(model, TrainedModel::Adifa(_)) {
                return Err(usage("--localize needs an ADIFA model"));
            }
            let dataset = FlatDataset::load_csv(&dataset)?;
            check_width(&model, &dataset)?;
            let scored = Instant::now();
            let text = score_csv(&model, &dataset, top.unwrap_or(0))?;
            info!(
                "classified {} rows in {:.3}s",
                dataset.len(),
                scored.elapsed().as_secs_f64()
            );
            emit(output.as_deref(), &text)?;
        }
        Command::Localize {
            model,
            dataset,
            row,
            top,
        } => {
            if top == 0 {
                return Err(usage("--top must be at least 1"));
            }
            let TrainedModel::Adifa(model) = TrainedModel::load(&model)? else {
                return Err(usage("localize needs an ADIFA model"));
            };
            let dataset = FlatDataset::load_csv(&dataset)?;
            let x = dataset
                .rows
                .get(row)
                .ok_or_else(|| anyhow!("row {row} out of range ({} rows)", dataset.len()))?;
            let result = model.classify(x)?;
            let mut out = String::from("column,likelihood\n");
            for a in localize(&result, top) {
                out.push_str(&format!("{},{}\n", a.column, a.likelihood));
            }
            emit(None, &out)?;
        }
        Command::Inject {
            schema,
            input,
            output,
            anomaly_index,
            seed,
            classes,
            fraction,
            truth,
            leakage_corpus,
        } => {
            if !(anomaly_index > 0.0 && anomaly_index <= 1.0) {
                return Err(usage(format!(
                    "--anomaly-index must be in (0, 1], got {anomaly_index}"
                )));
            }
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(usage(format!(
                    "--fraction must be in (0, 1], got {fraction}"
                )));
            }
            let mut spec = InjectionSpec::new(anomaly_index, seed);
            if let Some(list) = classes {
                spec = spec.with_classes(AttackClass::parse_list(&list).map_err(usage)?);
            }
            if let Some(p) = leakage_corpus {
                spec.leakage_corpus =
                    fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            }
            let schema = SchemaVector::load(&schema)?;
            let docs = read_corpus(&input)?;
            let labeled = make_anomalous_corpus(&docs, &schema, &spec, fraction)?;
            fs::create_dir_all(&output)
                .with_context(|| format!("creating {}", output.display()))?;
            for d in &labeled.documents {
                let p = output.join(&d.id);
                fs::write(&p, &d.xml).with_context(|| format!("writing {}", p.display()))?;
            }
            let short = labeled.truth.records.iter().filter(|r| r.shortfall).count();
            if short > 0 {
                warn!("{short} documents received fewer injections than requested");
            }
            let anomalous = labeled
                .truth
                .records
                .iter()
                .filter(|r| r.label == Label::Anomalous)
                .count();
            info!("{anomalous} of {} documents injected", docs.len());
            labeled
                .truth
                .save(&truth.unwrap_or_else(|| output.join("truth.xadtruth")))?;
        }
        Command::GenCorpus { docs, seed, output } => {
            let template = insurance_template();
            fs::create_dir_all(&output)
                .with_context(|| format!("creating {}", output.display()))?;
            fs::write(output.join("schema.xsd"), &template.xsd)?;
            for d in generate_normal_corpus(&template, docs, seed) {
                fs::write(output.join(format!("{}.xml", d.id)), &d.xml)?;
            }
            info!("{docs} documents written to {}", output.display());
        }
        Command::Evaluate {
            dataset,
            algos,
            seed,
            report: dir,
            alpha,
            tuning,
        } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(usage(format!("--alpha must be in (0, 1), got {alpha}")));
            }
            let configs = algos
                .iter()
                .map(|a| tuning.config(parse_algorithm(a)?))
                .collect::<Result<Vec<_>, CliError>>()?;
            if configs.is_empty() {
                return Err(usage("--algos is empty"));
            }
            let datasets = dataset
                .iter()
                .map(|p| Ok((p.clone(), FlatDataset::load_csv(p)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            report::evaluate(&datasets, &configs, seed, alpha, &dir)?;
        }
        Command::LearningCurve {
            dataset,
            algo,
            seed,
            output,
            tuning,
        } => {
            let config = tuning.config(parse_algorithm(&algo)?)?;
            let dataset = FlatDataset::load_csv(&dataset)?;
            let points = learning_curve(&dataset, &config, seed)?;
            let mut out = String::from("subset_normals,train_size,auc\n");
            for p in points {
                out.push_str(&format!(
                    "{},{},{}\n",
                    p.subset_normals, p.train_size, p.auc
                ));
            }
            emit(output.as_deref(), &out)?;
        }
    }
    info!("{name} finished in {:.3}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::SchemaParse { .. } => "schema-parse",
        Command::Extract { .. } => "extract",
        Command::Flatten { .. } => "flatten",
        Command::Train { .. } => "train",
        Command::Score { .. } => "score",
        Command::Localize { .. } => "localize",
        Command::Inject { .. } => "inject",
        Command::GenCorpus { .. } => "gen-corpus",
        Command::Evaluate { .. } => "evaluate",
        Command::LearningCurve { .. } => "learning-curve",
    }
}

/// Labels in feature-matrix row order, matched by document id.
fn truth_labels(truth: &GroundTruth, matrix: &FeatureMatrix) -> anyhow::Result<Vec<Label>> {
    let by_id: std::collections::HashMap<&str, Label> = truth
        .records
        .iter()
        .map(|r| (r.document_id.as_str(), r.label))
        .collect();
    matrix
        .rows
        .iter()
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .copied()
                .ok_or_else(|| anyhow!("document `{}` has no ground-truth record", r.id))
        })
        .collect()
}

/// The normal rows of a labeled dataset, or all rows of an unlabeled one.
fn normal_rows(dataset: &FlatDataset) -> FlatDataset {
    match &dataset.labels {
        None => dataset.clone(),
        Some(labels) => {
            let keep: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == Label::Normal)
                .collect();
            if keep.len() < labels.len() {
                info!("skipping {} anomalous rows", labels.len() - keep.len());
            }
            let mut out = dataset.select(&keep);
            out.labels = None;
            out
        }
    }
}

fn check_width(model: &TrainedModel, dataset: &FlatDataset) -> anyhow::Result<()> {
    if model.width() != dataset.width() {
        bail!(
            "model expects {} columns, dataset has {}",
            model.width(),
            dataset.width()
        );
    }
    if let TrainedModel::Adifa(m) = model {
        if m.column_names != dataset.column_names {
            bail!("dataset columns differ from the model's training columns");
        }
    }
    Ok(())
}

fn adifa_row(model: &AdifaModel, x: &[f64], top: usize, out: &mut String) -> anyhow::Result<()> {
    let r = model.classify(x)?;
    out.push_str(&format!("{},{},{}", r.score, r.likelihood, r.label));
    for a in localize(&r, top) {
        out.push_str(&format!(",{},{}", a.column, a.likelihood));
    }
    Ok(())
}

fn score_csv(model: &TrainedModel, dataset: &FlatDataset, top: usize) -> anyhow::Result<String> {
    let mut out = String::from("row,score,likelihood,label");
    for k in 1..=top {
        out.push_str(&format!(",column_{k},likelihood_{k}"));
    }
    out.push('\n');
    for (i, x) in dataset.rows.iter().enumerate() {
        out.push_str(&format!("{i},"));
        match model {
            TrainedModel::Adifa(m) => adifa_row(m, x, top, &mut out)?,
            other => {
                let p = other.predict(x)?;
                out.push_str(&format!("{},,{}", p.score, p.label));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
