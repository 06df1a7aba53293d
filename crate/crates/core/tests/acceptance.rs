//! Acceptance criteria, one `PASS`/`FAIL` line each.
//!
//! Run with `cargo test -p xmlad --test acceptance -- --nocapture` to see the report.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmlad::adifa::{localize, train, AdifaConfig, AdifaModel, Aggregation};
use xmlad::baselines::{gde_train, pga_train, GdeSign};
use xmlad::detector::{Algorithm, AlgorithmConfig, TrainedModel};
use xmlad::eval::cv::stratified_halves;
use xmlad::eval::{
    auc, cv_5x2, friedman_bonferroni, generate_normal_corpus, injection_columns,
    insurance_template, learning_curve, paired_t_test, roc_curve, CvResult, Outcome,
};
use xmlad::extract::build_feature_matrix;
use xmlad::flatten::{build_dictionary, flatten_matrix, FlatDataset, Label};
use xmlad::inject::{make_anomalous_corpus, InjectionSpec, LabeledCorpus};
use xmlad::schema::{parse_xsd, SchemaVector};

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn check(&mut self, pass: bool, name: &str, detail: String) {
        let line = format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((pass, line));
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------------------
// Brute-force ADIFA oracle, written directly from the model definition.

fn oracle_sigma(v: &[f64]) -> f64 {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m).sqrt();
    sd.max(1e-9 * mean.abs().max(1.0))
}

fn oracle_density(v: &[f64], x: f64) -> f64 {
    let s = oracle_sigma(v);
    let tau = 1.0 / (2.0 * s * s);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s * s).sqrt();
    v.iter()
        .map(|a| norm * (-tau * (a - x) * (a - x)).exp())
        .sum::<f64>()
        / v.len() as f64
}

fn oracle_entropy(v: &[f64]) -> f64 {
    let mut distinct: Vec<f64> = Vec::new();
    for &x in v {
        if !distinct.contains(&x) {
            distinct.push(x);
        }
    }
    let m = v.len() as f64;
    let counts: Vec<usize> = if distinct.len() <= 32 {
        distinct
            .iter()
            .map(|d| v.iter().filter(|&&x| x == *d).count())
            .collect()
    } else {
        let bins = (1.0 + m.log2()).ceil() as usize;
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut c = vec![0; bins];
        for &x in v {
            let b = ((x - lo) / ((hi - lo) / bins as f64)).floor() as usize;
            c[b.min(bins - 1)] += 1;
        }
        c
    };
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| -(c as f64 / m) * (c as f64 / m).log2())
        .sum()
}

fn oracle_weights(h: &[f64]) -> Vec<f64> {
    let total: f64 = h.iter().sum();
    if h.len() == 1 || total == 0.0 {
        vec![1.0; h.len()]
    } else {
        h.iter().map(|x| 1.0 - x / total).collect()
    }
}

fn oracle_aggregate(psi: Aggregation, t: &[f64]) -> f64 {
    let n = t.len() as f64;
    match psi {
        Aggregation::ArithmeticMean => t.iter().sum::<f64>() / n,
        Aggregation::GeometricMean => {
            if t.iter().any(|&x| x <= 0.0) {
                0.0
            } else {
                (t.iter().map(|x| x.max(1e-300).ln()).sum::<f64>() / n).exp()
            }
        }
        Aggregation::HarmonicMean => {
            if t.iter().any(|&x| x <= 0.0) {
                0.0
            } else {
                n / t.iter().map(|x| 1.0 / x).sum::<f64>()
            }
        }
    }
}

/// Normality score of `x` under a model fit on `rows`.
fn oracle_score(rows: &[Vec<f64>], x: &[f64], psi: Aggregation) -> f64 {
    let n = x.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    let w = oracle_weights(&cols.iter().map(|c| oracle_entropy(c)).collect::<Vec<_>>());
    let terms: Vec<f64> = (0..n)
        .map(|j| w[j] * oracle_density(&cols[j], x[j]))
        .collect();
    oracle_aggregate(psi, &terms)
}

fn oracle_training_scores(rows: &[Vec<f64>], psi: Aggregation) -> Vec<f64> {
    (0..rows.len())
        .map(|i| {
            let rest: Vec<Vec<f64>> = rows
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, r)| r.clone())
                .collect();
            oracle_score(&rest, &rows[i], psi)
        })
        .collect()
}

fn random_dataset(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<Vec<f64>> {
    let kinds: Vec<u8> = (0..n).map(|_| rng.random_range(0..4)).collect();
    (0..m)
        .map(|_| {
            kinds
                .iter()
                .map(|k| match k {
                    0 => rng.random_range(-5.0..5.0),
                    1 => f64::from(rng.random_range(0..4u8)),
                    2 => 100.0 + rng.random_range(0.0..1.0) * rng.random_range(0.0..1.0),
                    _ => 7.0,
                })
                .collect()
        })
        .collect()
}

fn dataset_of(rows: Vec<Vec<f64>>) -> FlatDataset {
    let n = rows[0].len();
    FlatDataset::from_rows((0..n).map(|j| format!("/c{j}#min")).collect(), rows).unwrap()
}

fn oracle_equivalence(report: &mut Report) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut chained: f64 = 0.0;
    for t in 0..20 {
        let m = rng.random_range(3..=30);
        let n = rng.random_range(1..=5);
        let psi = Aggregation::ALL[t % 3];
        let rows = random_dataset(&mut rng, m, n);
        let model = train(
            &dataset_of(rows.clone()),
            AdifaConfig {
                psi,
                ..AdifaConfig::default()
            },
        )
        .unwrap();

        let s = oracle_training_scores(&rows, psi);
        for (a, b) in model.training_scores.iter().zip(&s) {
            worst = worst.max(rel_err(*a, *b));
        }
        for probe in random_dataset(&mut rng, 5, n) {
            let probe: Vec<f64> = probe
                .iter()
                .zip(&rows[0])
                .map(|(p, r)| if t % 2 == 0 { *p } else { r + p * 0.1 })
                .collect();
            let score = model.instance_score(&probe).unwrap();
            worst = worst.max(rel_err(score, oracle_score(&rows, &probe, psi)));
            // the oracle density is fed the model's S, which was checked above; feeding
            // it the oracle's own S adds the conditioning of the meta KDE
            worst = worst.max(rel_err(
                model.meta_density(score),
                oracle_density(&model.training_scores, score),
            ));
            chained = chained.max(rel_err(
                model.meta_density(score),
                oracle_density(&s, score),
            ));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report.check(
        worst <= 1e-10 && secs < 10.0,
        "oracle equivalence (S, s(x), meta-density)",
        format!("max relative error {worst:.2e} (<= 1e-10), {secs:.2}s (< 10s); meta-density on the oracle's own S {chained:.2e}"),
    );
}

// ---------------------------------------------------------------------------

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
    let h = (b - a) / steps as f64;
    let mut sum = f(a) + f(b);
    for i in 1..steps {
        sum += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn kde_normalization(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut models = 0;
    for m in [2usize, 10, 100] {
        for _ in 0..5 {
            let rows = random_dataset(&mut rng, m, 4);
            let model = train(&dataset_of(rows), AdifaConfig::default()).unwrap();
            for a in model.attributes.iter().chain(std::iter::once(&model.meta)) {
                let lo = a.values[0] - 8.0 * a.sigma;
                let hi = a.values[a.values.len() - 1] + 8.0 * a.sigma;
                let steps = 2 * ((hi - lo) / a.sigma * 50.0).ceil() as usize;
                worst = worst.max((simpson(|x| a.likelihood(x), lo, hi, steps) - 1.0).abs());
                models += 1;
            }
        }
    }
    report.check(
        worst <= 1e-3,
        "KDE normalization",
        format!("{models} attribute models, max |integral - 1| = {worst:.2e} (<= 1e-3)"),
    );
}

fn weight_identities(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut in_range = true;
    for _ in 0..100 {
        let n = rng.random_range(1..=40);
        let mut h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..6.0)).collect();
        if rng.random_bool(0.2) {
            h[0] = 0.0;
        }
        let w = xmlad::adifa::compute_weights(&h);
        in_range &= w.iter().all(|a| (0.0..=1.0).contains(a));
        let expected = if n == 1 { 1.0 } else { (n - 1) as f64 };
        worst = worst.max((w.iter().sum::<f64>() - expected).abs());
    }
    report.check(
        worst <= 1e-12 && in_range,
        "weight identities",
        format!("max |sum(alpha) - (n - 1)| = {worst:.1e} (rounding only, <= 1e-12), all alpha in [0, 1]: {in_range}"),
    );
}

// ---------------------------------------------------------------------------

struct Synthetic {
    schema: SchemaVector,
    labeled: LabeledCorpus,
    dataset: FlatDataset,
}

/// The insurance corpus with attacks injected into half the documents; the
/// dictionary comes from the clean corpus.
fn synthetic(docs: usize, anomaly_index: f64, seed: u64) -> Synthetic {
    let template = insurance_template();
    let clean = generate_normal_corpus(&template, docs, seed);
    let schema = template.schema.clone();
    let clean_fm = build_feature_matrix(&clean, &schema).unwrap().matrix;
    let dict = build_dictionary(&clean_fm, 10);
    let labeled = make_anomalous_corpus(
        &clean,
        &schema,
        &InjectionSpec::new(anomaly_index, seed + 1),
        0.5,
    )
    .unwrap();
    let fm = build_feature_matrix(&labeled.documents, &schema)
        .unwrap()
        .matrix;
    let dataset = flatten_matrix(&fm, &schema, &dict)
        .unwrap()
        .with_labels(labeled.truth.labels())
        .unwrap();
    Synthetic {
        schema,
        labeled,
        dataset,
    }
}

fn pooled(result: &CvResult, ds: &FlatDataset) -> (Vec<f64>, Vec<Label>) {
    let labels = ds.labels.as_ref().unwrap();
    let mut s = Vec::new();
    let mut l = Vec::new();
    for f in &result.folds {
        s.extend_from_slice(&f.anomaly_scores);
        l.extend(f.test_rows.iter().map(|&i| labels[i]));
    }
    (s, l)
}

fn end_to_end(report: &mut Report) {
    let started = Instant::now();
    let syn = synthetic(2000, 0.05, 1);
    let leaves = syn.schema.descriptors.len();
    let run = |a: Algorithm| cv_5x2(&syn.dataset, &AlgorithmConfig::new(a), 7).unwrap();
    let gm = run(Algorithm::AdifaGm);
    let baselines: Vec<CvResult> = [Algorithm::Pga, Algorithm::Gde, Algorithm::Lof]
        .into_iter()
        .map(run)
        .collect();
    let secs = started.elapsed().as_secs_f64();

    let beats = baselines.iter().all(|b| gm.mean_auc >= b.mean_auc - 0.02);
    let listing: Vec<String> = baselines
        .iter()
        .map(|b| format!("{} {:.4}", b.algorithm, b.mean_auc))
        .collect();
    report.check(
        gm.mean_auc >= 0.95 && beats && secs < 300.0,
        "synthetic end-to-end detection",
        format!(
            "{} docs, {leaves}-descriptor schema, ADIFA-GM mean AUC {:.4} (>= 0.95), baselines [{}] (GM >= each - 0.02: {beats}), {secs:.1}s (< 300s)",
            syn.dataset.len(),
            gm.mean_auc,
            listing.join(", ")
        ),
    );

    let (s, l) = pooled(&gm, &syn.dataset);
    let roc = roc_curve(&s, &l).unwrap();
    let tpr = roc.tpr_at_fpr(0.002);
    let best = roc
        .points
        .iter()
        .filter(|p| p.fpr <= 0.002)
        .max_by(|a, b| a.tpr.total_cmp(&b.tpr))
        .unwrap();
    report.check(
        tpr >= 0.89,
        "threshold operating point",
        format!(
            "ADIFA-GM over all 10 test folds: TPR {tpr:.4} at FPR {:.4} (likelihood threshold {:.3e}); need TPR >= 0.89 at FPR <= 0.002",
            best.fpr, -best.threshold
        ),
    );

    let curve = learning_curve(&syn.dataset, &AlgorithmConfig::new(Algorithm::AdifaGm), 7).unwrap();
    let (first, last) = (curve[0].auc, curve[9].auc);
    println!("  (learning curve D_1 AUC {first:.4} -> D_10 AUC {last:.4})");
    assert!(
        last >= first - 0.02,
        "learning curve regressed: {first} -> {last}"
    );
}

fn localization(report: &mut Report) {
    let syn = synthetic(2000, 0.01, 21);
    let labels = syn.dataset.labels.clone().unwrap();
    let (a, b) = stratified_halves(&labels, &mut ChaCha8Rng::seed_from_u64(3));
    let (mut detected, mut hits) = (0usize, 0usize);
    for (train_half, test_half) in [(&a, &b), (&b, &a)] {
        let normals: Vec<usize> = train_half
            .iter()
            .copied()
            .filter(|&i| labels[i] == Label::Normal)
            .collect();
        let model: AdifaModel =
            train(&syn.dataset.select(&normals), AdifaConfig::default()).unwrap();
        for &i in test_half.iter() {
            let rec = &syn.labeled.truth.records[i];
            if rec.injections.len() != 1 {
                continue;
            }
            let r = model.classify(&syn.dataset.rows[i]).unwrap();
            if r.label != Label::Anomalous {
                continue;
            }
            detected += 1;
            let cols = injection_columns(&rec.injections[0], &syn.dataset.column_meta);
            if localize(&r, 3).iter().any(|t| {
                cols.iter()
                    .any(|&c| syn.dataset.column_names[c] == t.column)
            }) {
                hits += 1;
            }
        }
    }
    let rate = hits as f64 / detected.max(1) as f64;
    report.check(
        detected > 100 && rate >= 0.8,
        "localization",
        format!("{hits} of {detected} detected single-injection documents localized in the top 3 ({rate:.3}, >= 0.80)"),
    );
}

// ---------------------------------------------------------------------------

fn brute_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0u64, 0u64);
    for (i, si) in scores.iter().enumerate() {
        for (j, sj) in scores.iter().enumerate() {
            if labels[i] == Label::Anomalous && labels[j] == Label::Normal {
                pairs += 2;
                wins += match si.partial_cmp(sj).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    wins as f64 / pairs as f64
}

fn auc_oracle(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;
    let mut sets = 0;
    while sets < 1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..levels)) * 0.37)
            .collect();
        let labels: Vec<Label> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    Label::Anomalous
                } else {
                    Label::Normal
                }
            })
            .collect();
        if !labels.contains(&Label::Anomalous) || !labels.contains(&Label::Normal) {
            continue;
        }
        sets += 1;
        if auc(&scores, &labels).unwrap() != brute_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    report.check(
        mismatches == 0,
        "AUC oracle",
        format!("{mismatches} mismatches over {sets} tied score sets (exact equality)"),
    );
}

fn line(values: &[f64]) -> FlatDataset {
    FlatDataset::from_rows(
        vec!["/x#min".into()],
        values.iter().map(|&v| vec![v]).collect(),
    )
    .unwrap()
}

fn baseline_hand_examples(report: &mut Report) {
    let gde = gde_train(&line(&[0.0, 1.0, 2.0, 10.0]), GdeSign::Corrected, false).unwrap();
    let far = gde.classify(&[20.0]).unwrap();
    let near = gde.classify(&[1.0]).unwrap();
    let pga = pga_train(&line(&[0.0, 1.0, 2.0]), 0.1, 1, false).unwrap();
    let out = pga.classify(&[5.0]).unwrap();
    let pass = far.label == Label::Anomalous
        && near.label == Label::Normal
        && out.label == Label::Anomalous;
    report.check(
        pass,
        "baseline hand examples",
        format!(
            "GDE test 20 -> {} (score {:.4}), test 1 -> {} (score {:.4}); PGA test 5 -> {} (d {}, cutoff {})",
            far.label, far.score, near.label, near.score, out.label, out.score, pga.cutoff
        ),
    );
}

// ---------------------------------------------------------------------------

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) {
    fs::write(dir.join(name), bytes).unwrap();
}

/// Every stage of the pipeline, written to `dir`.
fn run_stages(dir: &Path) {
    let template = insurance_template();
    let clean = generate_normal_corpus(&template, 160, 4);
    for d in clean.iter().step_by(40) {
        write(dir, &format!("{}.xml", d.id), &d.xml);
    }
    let schema = parse_xsd(&template.xsd).unwrap().schema;
    schema.save(&dir.join("schema.xadschema")).unwrap();
    let labeled =
        make_anomalous_corpus(&clean, &schema, &InjectionSpec::new(0.05, 8), 0.5).unwrap();
    labeled.truth.save(&dir.join("truth.xadtruth")).unwrap();
    for d in labeled.documents.iter().step_by(10) {
        write(dir, &format!("injected-{}.xml", d.id), &d.xml);
    }
    let fm = build_feature_matrix(&labeled.documents, &schema)
        .unwrap()
        .matrix;
    fm.save(&dir.join("fm.xadfm")).unwrap();
    let dict = build_dictionary(&fm, 10);
    dict.save(&dir.join("dict.xaddict")).unwrap();
    let ds = flatten_matrix(&fm, &schema, &dict)
        .unwrap()
        .with_labels(labeled.truth.labels())
        .unwrap();
    ds.save_csv(&dir.join("dataset.csv")).unwrap();

    let labels = ds.labels.clone().unwrap();
    let normals: Vec<usize> = (0..ds.len())
        .filter(|&i| labels[i] == Label::Normal)
        .collect();
    let training = ds.select(&normals);
    for a in Algorithm::ALL {
        let mut config = AlgorithmConfig::new(a);
        config.standardize = a == Algorithm::Lof;
        let model = TrainedModel::train(&training, &config).unwrap();
        model.save(&dir.join(format!("{a}.xadmodel"))).unwrap();
        if let TrainedModel::Adifa(m) = &model {
            let results: Vec<_> = ds.rows.iter().map(|x| m.classify(x).unwrap()).collect();
            write(
                dir,
                &format!("{a}-scores.json"),
                serde_json::to_string(&results).unwrap(),
            );
        }
    }
    let mut fold_aucs = Vec::new();
    for a in [Algorithm::AdifaGm, Algorithm::Pga, Algorithm::Lof] {
        let r = cv_5x2(&ds, &AlgorithmConfig::new(a), 11).unwrap();
        write(
            dir,
            &format!("{a}-cv.json"),
            serde_json::to_string(&r).unwrap(),
        );
        fold_aucs.push(r.fold_aucs);
    }
    let curve = learning_curve(&ds, &AlgorithmConfig::new(Algorithm::AdifaHm), 11).unwrap();
    write(dir, "curve.json", serde_json::to_string(&curve).unwrap());
    let matrix: Vec<Vec<f64>> = (0..10)
        .map(|f| fold_aucs.iter().map(|a| a[f]).collect())
        .collect();
    write(
        dir,
        "significance.json",
        serde_json::to_string(&friedman_bonferroni(&matrix, 0, 0.05).unwrap()).unwrap(),
    );
}

fn determinism(report: &mut Report) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_stages(a.path());
    // the second run is confined to one worker thread
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_stages(b.path()));
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| {
            fs::read(a.path().join(n)).unwrap() != fs::read(b.path().join(n)).unwrap_or_default()
        })
        .collect();
    report.check(
        differing.is_empty() && names.len() > 20,
        "determinism",
        format!("{} stage outputs compared byte for byte across two runs (multi- vs single-threaded), differing: {differing:?}", names.len()),
    );
}

// ---------------------------------------------------------------------------
// Student t tail via the regularized incomplete beta function.

fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = G[0];
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn t_upper_tail(t: f64, df: f64) -> f64 {
    let half = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

fn oracle_paired_p(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    t_upper_tail(mean / (sd / n.sqrt()), n - 1.0)
}

fn statistics_oracles(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..=20);
        let shift = rng.random_range(-0.1..0.1);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|x| x - shift + rng.random_range(-0.05..0.05))
            .collect();
        worst = worst.max((paired_t_test(&a, &b).unwrap() - oracle_paired_p(&a, &b)).abs());
    }
    let fixed = (paired_t_test(&[0.9, 0.8, 0.85], &[0.7, 0.6, 0.65]).unwrap()
        - oracle_paired_p(&[0.9, 0.8, 0.85], &[0.7, 0.6, 0.65]))
    .abs();
    report.check(
        worst <= 1e-6 && fixed <= 1e-6,
        "statistics oracles: paired t-test",
        format!(
            "max |p - oracle p| = {:.2e} over 50 random pairs (<= 1e-6)",
            worst.max(fixed)
        ),
    );

    let equal = friedman_bonferroni(&vec![vec![0.8; 6]; 10], 0, 0.05).unwrap();
    let all_equal = !equal.rejected
        && equal
            .pairwise
            .iter()
            .flatten()
            .all(|&o| o == Outcome::Equal);

    // classifier 0 ranks first on all 30 datasets, the rest rotate
    let matrix: Vec<Vec<f64>> = (0..30)
        .map(|d| {
            (0..7)
                .map(|c| {
                    if c == 0 {
                        1.0
                    } else {
                        0.5 + 0.01 * ((c + d) % 6) as f64
                    }
                })
                .collect()
        })
        .collect();
    let dom = friedman_bonferroni(&matrix, 0, 0.05).unwrap();
    let worst_idx = (1..7)
        .max_by(|&i, &j| dom.friedman.mean_ranks[i].total_cmp(&dom.friedman.mean_ranks[j]))
        .unwrap();
    // q_0.05 for 7 classifiers from the Bonferroni-Dunn table is 2.638
    let hand_cd = 2.638 * (7.0 * 8.0 / (6.0 * 30.0f64)).sqrt();
    let dominance = dom.rejected
        && dom.post_hoc[worst_idx] == Outcome::Better
        && (dom.critical_difference - hand_cd).abs() < 1e-3
        && dom.friedman.mean_ranks[0] == 1.0;
    report.check(
        all_equal && dominance,
        "statistics oracles: Friedman / Bonferroni-Dunn",
        format!(
            "all-equal: rejected {} with all '=' {all_equal}; dominance: p {:.2e}, CD {:.4} (hand {hand_cd:.4}), reference vs worst '{}'",
            equal.rejected, dom.friedman.p_value, dom.critical_difference, dom.post_hoc[worst_idx]
        ),
    );
}

#[test]
fn acceptance() {
    let mut report = Report { lines: Vec::new() };
    oracle_equivalence(&mut report);
    kde_normalization(&mut report);
    weight_identities(&mut report);
    end_to_end(&mut report);
    localization(&mut report);
    auc_oracle(&mut report);
    baseline_hand_examples(&mut report);
    determinism(&mut report);
    statistics_oracles(&mut report);

    let failed: Vec<&String> = report
        .lines
        .iter()
        .filter(|(p, _)| !p)
        .map(|(_, l)| l)
        .collect();
    assert!(
        failed.is_empty(),
        "{} criteria failed:\n{}",
        failed.len(),
        failed
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
