use std::path::PathBuf;

use robust_ope::scenarios::generate;
use robust_ope::{load_classification_csv, ClassificationData, PolicySpec};
use robust_ope_bench::analysis::{family_report, pairwise_win_fraction, relative_cdf};
use robust_ope_bench::results::summarize;
use robust_ope_bench::{plan, read_results, run, ExperimentConfig, ResultRow};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn row(cid: &str, est: &str, mse: f64) -> ResultRow {
    ResultRow {
        condition_id: cid.into(),
        dataset: "d".into(),
        logging_policy: "l".into(),
        target_policy: "t".into(),
        shift: "none".into(),
        knowledge_flags: "k".into(),
        estimator: est.into(),
        mse,
        bias: 0.0,
        mean_estimate: 0.0,
        reps: 1,
    }
}

#[test]
fn error_summary_arithmetic() {
    let s = summarize(&[(1.0, 2.0), (3.0, 2.0)]).unwrap();
    assert_eq!((s.mse, s.bias, s.mean_estimate, s.reps), (1.0, 0.0, 2.0, 2));
    let s = summarize(&[(0.25, 0.25)]).unwrap();
    assert_eq!(s.mse, 0.0);
    assert!(summarize(&[]).is_none());
}

#[test]
fn cdf_examples() {
    let same = vec![row("a", "SnIPS", 0.2), row("a", "DM", 0.2), row("b", "SnIPS", 0.1), row("b", "DM", 0.1)];
    let cdf = relative_cdf(&same, "SnIPS").unwrap();
    assert!(cdf.iter().all(|p| p.ratio == 1.0));

    let rows = vec![row("a", "SnIPS", 0.2), row("a", "DM", 0.4), row("b", "SnIPS", 0.2), row("b", "DM", 0.1)];
    let dm: Vec<(f64, f64)> = relative_cdf(&rows, "SnIPS")
        .unwrap()
        .into_iter()
        .filter(|p| p.estimator == "DM")
        .map(|p| (p.ratio, p.cum_fraction))
        .collect();
    assert_eq!(dm, vec![(0.5, 0.5), (2.0, 1.0)]);

    let zero = vec![row("a", "SnIPS", 0.0), row("a", "DM", 0.0), row("a", "DR", 0.3)];
    let cdf = relative_cdf(&zero, "SnIPS").unwrap();
    assert_eq!(cdf.iter().find(|p| p.estimator == "DM").unwrap().ratio, 1.0);
    assert_eq!(cdf.iter().find(|p| p.estimator == "DR").unwrap().ratio, f64::INFINITY);

    assert!(relative_cdf(&[row("a", "DM", 0.1)], "SnIPS").is_err());
}

#[test]
fn family_report_examples() {
    let one = vec![
        row("a", "SnIPS", 0.3),
        row("a", "DM", 0.2),
        row("a", "SnDR", 0.25),
        row("a", "DM(R)", 0.4),
        row("a", "SnDR-PS", 0.1),
    ];
    let r = family_report(&one, &[]);
    assert_eq!(r.conditions, 1);
    for c in &r.counts {
        assert_eq!(c.wins, usize::from(c.family == "DM-PS"), "{c:?}");
    }

    // A tie goes to the earlier family in the fixed order (DM before DM-PS).
    let tie = vec![row("a", "DM", 0.1), row("a", "DM-PS", 0.1)];
    let r = family_report(&tie, &[]);
    assert_eq!(r.counts.iter().find(|c| c.family == "DM").unwrap().wins, 1);
    assert_eq!(pairwise_win_fraction(&tie, "DM-PS", "DM"), (0.0, 1));

    let many: Vec<ResultRow> = (0..7)
        .flat_map(|i| {
            let c = format!("c{i}");
            vec![row(&c, "SnIPS", 0.1 * i as f64), row(&c, "DM", 0.3), row(&c, "DR-PS", 0.2)]
        })
        .collect();
    let r = family_report(&many, &[]);
    assert_eq!(r.counts.iter().map(|c| c.wins).sum::<usize>(), 7);
    assert!((r.counts.iter().map(|c| c.fraction).sum::<f64>() - 1.0).abs() < 1e-12);
}

fn small_config(out: &std::path::Path, reps: usize) -> ExperimentConfig {
    let text = format!(
        r#"
master_seed = 7
repetitions = {reps}
output_dir = "{}"
[[datasets]]
name = "glass"
path = "{}"
label_column = "type"
[[grid]]
logging = [{{ family = "tweak1", rho = 0.9 }}, {{ family = "softened_perfect", lambda = 0.5 }}]
target = [{{ family = "softened_perfect", lambda = 0.7 }}]
knowledge = [
    {{ propensity_known = true, context_ratio_known = true }},
    {{ propensity_known = false, context_ratio_known = true }},
]
[[grid]]
logging = [{{ family = "dirichlet", gamma = 1.0 }}]
target = [{{ family = "softened", lambda = 0.9, zeta = 0.0 }}]
shift = [{{ kind = "gaussian_pca", a = 1.0, b = 1.0 }}]
knowledge = [{{ propensity_known = true, context_ratio_known = false }}]
[training]
epochs = 10
"#,
        out.display(),
        data_dir().join("glass.csv").display()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

#[test]
fn plan_enumerates_the_grid_in_order() {
    let cfg = small_config(std::path::Path::new("/unused"), 1);
    let p = plan(&cfg);
    assert_eq!(p.len(), 5);
    assert_eq!(p.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["c0000", "c0001", "c0002", "c0003", "c0004"]);
    assert!(p[0].condition.knowledge.propensity_known && !p[1].condition.knowledge.propensity_known);
    assert!(p[..4].iter().all(|c| c.estimators.iter().all(|n| !n.needs_gcs())));
    assert_eq!(p[4].estimators.len(), 16);
    assert!(p.iter().all(|c| c.condition.seed == 7));
}

#[test]
fn config_errors_are_reported() {
    assert!(ExperimentConfig::from_toml("master_seed = 1").is_err());
    let cfg = small_config(std::path::Path::new("/unused"), 1);
    let mut bad = cfg.clone();
    bad.repetitions = 0;
    assert!(bad.validate().is_err());
    let mut bad = cfg;
    bad.grids[0].logging.clear();
    assert!(bad.validate().is_err());
}

#[test]
fn runs_are_reproducible_resumable_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small_config(&tmp.path().join("a"), 3);
    let sa = run(&a, 1).unwrap();
    assert!(sa.failed.is_empty(), "{:?}", sa.failed);
    let b = small_config(&tmp.path().join("b"), 3);
    run(&b, 3).unwrap();
    let bytes_a = std::fs::read(&sa.results_path).unwrap();
    assert_eq!(bytes_a, std::fs::read(tmp.path().join("b/results.csv")).unwrap());

    let rows = read_results(&sa.results_path).unwrap();
    for r in &rows {
        assert!(r.mse >= 0.0 && r.mse >= r.bias * r.bias - 1e-9, "{r:?}");
        assert_eq!(r.reps, 3);
    }

    // Interrupt: keep the header, the first condition and half a line.
    let text = String::from_utf8(bytes_a.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let first = lines.iter().skip(1).take_while(|l| l.starts_with("c0000")).count();
    let mut torn = lines[..=first].join("\n");
    torn.push('\n');
    torn.push_str(&lines[first + 1][..10]);
    let c = small_config(&tmp.path().join("c"), 3);
    std::fs::create_dir_all(&c.output_dir).unwrap();
    std::fs::write(c.output_dir.join("results.csv"), torn).unwrap();
    let sc = run(&c, 2).unwrap();
    assert_eq!(sc.resumed, 1);
    assert_eq!(sc.completed, 4);
    assert_eq!(std::fs::read(&sc.results_path).unwrap(), bytes_a);
}

fn glass() -> ClassificationData<f64> {
    load_classification_csv(data_dir().join("glass.csv"), "type").unwrap()
}

/// With matching policies and no shift the weights are all one, so SnIPS is
/// the on-policy mean reward of the evaluation data.
#[test]
fn snips_matches_on_policy_mean_without_shift() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
master_seed = 11
output_dir = "{}"
estimators = ["SnIPS"]
[[datasets]]
name = "glass"
path = "{}"
label_column = "type"
[[grid]]
logging = [{{ family = "softened_perfect", lambda = 0.7 }}]
target = [{{ family = "softened_perfect", lambda = 0.7 }}]
"#,
        tmp.path().display(),
        data_dir().join("glass.csv").display()
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.repetitions, 30);
    let s = run(&cfg, 1).unwrap();
    let rows = read_results(&s.results_path).unwrap();
    assert_eq!(rows.len(), 1);

    let data = glass();
    let cond = &plan(&cfg)[0].condition;
    let sq: Vec<f64> = (0..30)
        .map(|rep| {
            let scn = generate(cond, &data, rep, &cfg.scenario).unwrap();
            let ev = scn.eval_logging.samples();
            let mean = ev.iter().map(|x| x.reward).sum::<f64>() / ev.len() as f64;
            (mean - scn.true_value).powi(2)
        })
        .collect();
    let m = sq.iter().sum::<f64>() / 30.0;
    let sd = (sq.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 29.0).sqrt();
    let se = sd / 30f64.sqrt();
    assert!((rows[0].mse - m).abs() <= 3.0 * se, "SnIPS {} on-policy {m} se {se}", rows[0].mse);
    assert!(matches!(cond.logging, PolicySpec::SoftenedPerfect { .. }));
}
