//! Output files of `evaluate`: fold table, pooled ROC points, summary and
//! significance report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use xmlad::detector::AlgorithmConfig;
use xmlad::eval::stats::pairwise_t_tests;
use xmlad::eval::{cv_5x2, friedman_bonferroni, roc_curve, CvResult, Outcome};
use xmlad::flatten::{FlatDataset, Label};

/// Operating point reported in the summary.
const SUMMARY_FPR: f64 = 0.002;

struct Evaluated {
    name: String,
    digest: String,
    results: Vec<CvResult>,
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

/// Anomaly-oriented scores and labels of every test row over all folds.
fn pooled(result: &CvResult, dataset: &FlatDataset) -> (Vec<f64>, Vec<Label>) {
    let labels = dataset.labels.as_deref().unwrap_or_default();
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for f in &result.folds {
        scores.extend_from_slice(&f.anomaly_scores);
        truth.extend(f.test_rows.iter().map(|&i| labels[i]));
    }
    (scores, truth)
}

fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn outcome_table(out: &mut String, tags: &[&str], outcomes: &[Vec<Outcome>]) {
    let width = tags.iter().map(|t| t.len()).max().unwrap_or(0).max(4);
    let _ = write!(out, "{:width$}", "");
    for t in tags {
        let _ = write!(out, "  {t:>width$}");
    }
    out.push('\n');
    for (i, row) in outcomes.iter().enumerate() {
        let _ = write!(out, "{:width$}", tags[i]);
        for (j, o) in row.iter().enumerate() {
            let cell = if i == j {
                ".".to_string()
            } else {
                o.symbol().to_string()
            };
            let _ = write!(out, "  {cell:>width$}");
        }
        out.push('\n');
    }
}

pub fn evaluate(
    datasets: &[(PathBuf, FlatDataset)],
    configs: &[AlgorithmConfig],
    seed: u64,
    alpha: f64,
    dir: &Path,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tags: Vec<&str> = configs.iter().map(|c| c.algorithm.tag()).collect();
    let single = datasets.len() == 1;

    let mut evaluated = Vec::new();
    for (path, dataset) in datasets {
        let name = dataset_name(path);
        let mut results = Vec::new();
        for config in configs {
            let r = cv_5x2(dataset, config, seed)
                .with_context(|| format!("{name}: {}", config.algorithm))?;
            let seconds: f64 = r.folds.iter().map(|f| f.classify_seconds).sum();
            info!(
                "{name} {}: mean AUC {:.4}, classification {:.3}s",
                config.algorithm, r.mean_auc, seconds
            );
            results.push(r);
        }
        evaluated.push(Evaluated {
            name,
            digest: dataset.digest(),
            results,
        });
    }

    let mut folds = String::from("dataset,algorithm,repetition,fold,train_size,test_size,auc\n");
    let mut summary = String::from(
        "dataset,digest,algorithm,mean_auc,sd_auc,pooled_auc,pooled_tpr_at_fpr_0.002\n",
    );
    for (e, (_, dataset)) in evaluated.iter().zip(datasets) {
        for r in &e.results {
            for f in &r.folds {
                let _ = writeln!(
                    folds,
                    "{},{},{},{},{},{},{}",
                    e.name,
                    r.algorithm,
                    f.repetition,
                    f.fold,
                    f.train_rows.len(),
                    f.test_rows.len(),
                    f.auc
                );
            }
            let (scores, truth) = pooled(r, dataset);
            let roc = roc_curve(&scores, &truth)?;
            let mut points = String::from("threshold,fpr,tpr\n");
            for p in &roc.points {
                let _ = writeln!(points, "{},{},{}", p.threshold, p.fpr, p.tpr);
            }
            let file = if single {
                format!("roc_{}.csv", r.algorithm)
            } else {
                format!("roc_{}_{}.csv", e.name, r.algorithm)
            };
            fs::write(dir.join(file), points)?;
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{},{}",
                e.name,
                e.digest,
                r.algorithm,
                r.mean_auc,
                sd(&r.fold_aucs),
                roc.auc,
                roc.tpr_at_fpr(SUMMARY_FPR)
            );
        }
    }
    fs::write(dir.join("folds.csv"), folds)?;
    fs::write(dir.join("summary.csv"), summary)?;
    fs::write(
        dir.join("significance.txt"),
        significance(&evaluated, &tags, seed, alpha)?,
    )?;
    Ok(())
}

fn significance(
    evaluated: &[Evaluated],
    tags: &[&str],
    seed: u64,
    alpha: f64,
) -> anyhow::Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "seed {seed}, alpha {alpha}");
    let _ = writeln!(
        out,
        "'+' row beats column, '-' row loses, '=' no significant difference\n"
    );
    for e in evaluated {
        let _ = writeln!(out, "dataset {} (sha256 {})", e.name, e.digest);
        let _ = writeln!(out, "one-tailed paired t-test over the 10 fold AUCs:");
        let values: Vec<Vec<f64>> = e.results.iter().map(|r| r.fold_aucs.clone()).collect();
        outcome_table(&mut out, tags, &pairwise_t_tests(&values, alpha)?);
        out.push('\n');
    }

    if tags.len() < 2 {
        out.push_str("Friedman test skipped: needs at least 2 algorithms\n");
        return Ok(out);
    }
    // One block per dataset; with a single dataset the folds act as blocks.
    let (matrix, blocks): (Vec<Vec<f64>>, &str) = if evaluated.len() >= 2 {
        let m = evaluated
            .iter()
            .map(|e| e.results.iter().map(|r| r.mean_auc).collect())
            .collect();
        (m, "datasets (mean AUC)")
    } else {
        let r = &evaluated[0].results;
        let m = (0..r[0].fold_aucs.len())
            .map(|f| r.iter().map(|x| x.fold_aucs[f]).collect())
            .collect();
        (m, "folds of the single dataset")
    };
    let report = friedman_bonferroni(&matrix, 0, alpha)?;
    let _ = writeln!(
        out,
        "adjusted Friedman test, blocks = {} ({}):",
        blocks,
        matrix.len()
    );
    let _ = writeln!(
        out,
        "chi2 {:.6}, F {:.6}, p {:.6}, {}",
        report.friedman.chi_square,
        report.friedman.f_statistic,
        report.friedman.p_value,
        if report.rejected {
            "rejected"
        } else {
            "not rejected"
        }
    );
    out.push_str("mean ranks:");
    for (t, r) in tags.iter().zip(&report.friedman.mean_ranks) {
        let _ = write!(out, " {t}={r:.3}");
    }
    let _ = writeln!(
        out,
        "\nBonferroni-Dunn critical difference {:.6}",
        report.critical_difference
    );
    let _ = writeln!(out, "post-hoc vs {}:", tags[report.reference]);
    for (t, o) in tags.iter().zip(&report.post_hoc).skip(1) {
        let _ = writeln!(out, "  {t:<12} {o}");
    }
    out.push_str("mean-rank comparisons:\n");
    outcome_table(&mut out, tags, &report.pairwise);
    Ok(out)
}
