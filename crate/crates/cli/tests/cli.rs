use proptest::prelude::*;
use r2d2_cli::{canonical_schema, load_csv, load_csv_reader, schemas, write_canonical_csv, CsvSchema, SpatialColumns};
use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn r2d2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_r2d2")).args(args).output().expect("binary runs")
}

fn validate(schema: &str, doc: &Value) {
    let schema: Value = serde_json::from_str(schema).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}\n{doc}");
}

fn gambia_schema() -> CsvSchema {
    CsvSchema {
        response: "pos".into(),
        covariates: ["age", "netuse", "treated", "green", "phc"].map(String::from).to_vec(),
        groups: vec!["village".into()],
        spatial: Some(SpatialColumns { group: "village".into(), x: "x".into(), y: "y".into() }),
        offset: None,
    }
}

const GAMBIA_ARGS: [&str; 12] = [
    "--family",
    "logistic",
    "--response",
    "pos",
    "--covariates",
    "age,netuse,treated,green,phc",
    "--groups",
    "village",
    "--spatial",
    "village",
    "--coords",
    "x,y",
];

#[test]
fn fit_gbp_poisson_matches_reference_cell() {
    let out = r2d2(&["fit-gbp", "--family", "poisson", "--beta0", "0", "--a", "1", "--b", "1"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    validate(schemas::FIT_GBP, &doc);
    for (key, want) in [("a_star", 0.50), ("b_star", 1.83), ("c_star", 2.00), ("d_star", 1.45)] {
        let got = doc[key].as_f64().unwrap();
        assert!((got / want - 1.0).abs() < 0.25, "{key}: {got} vs {want}");
    }
    assert!(doc["ks"].as_f64().unwrap() < 0.03);
}

#[test]
fn empty_density_grid_gives_header_only() {
    let out = r2d2(&["density", "--family", "weibull", "--theta", "1", "--w-max", "0"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "w,exact,qmc,linear,gbp\n");
}

fn density_rows(k: &str) -> Vec<Vec<f64>> {
    let out = r2d2(&["density", "--family", "poisson", "--beta0", "0.5", "--points", "10", "--w-max", "2", "--qmc-k", k]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn qmc_density_column_converges_to_the_closed_form() {
    let coarse = density_rows("1000");
    let fine = density_rows("100000");
    assert_eq!(fine.len(), 10);
    for (c, f) in coarse.iter().zip(&fine) {
        assert!(f[1..].iter().all(|v| v.is_finite() && *v >= 0.0));
        let (ec, ef) = ((c[2] / c[1] - 1.0).abs(), (f[2] / f[1] - 1.0).abs());
        assert!(ef <= ec + 1e-3 && ef < 0.03, "{c:?} {f:?}");
    }
}

#[test]
fn stochastic_subcommands_are_reproducible() {
    let args = ["sample", "--family", "negbin", "--theta", "2", "--beta0", "-1", "--n", "50", "--seed", "9"];
    let a = r2d2(&args);
    let b = r2d2(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut other = args;
    other[10] = "10";
    assert_ne!(r2d2(&other).stdout, a.stdout);

    let sim = ["simulate", "--study", "gaussian", "--reps", "2", "--iters", "300", "--burn-in", "100", "--holdout-n", "50", "--priors", "vague;beta(1,4)", "--seed", "3"];
    let s1 = r2d2(&sim);
    assert!(s1.status.success(), "{}", String::from_utf8_lossy(&s1.stderr));
    assert_eq!(s1.stdout, r2d2(&sim).stdout);
    assert!(String::from_utf8(s1.stdout).unwrap().starts_with("prior,metric,mean,se,reps\n"));
}

#[test]
fn sampled_r2_follows_the_beta_prior() {
    let out = r2d2(&["sample", "--family", "poisson", "--a", "2", "--b", "3", "--n", "4000", "--seed", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let r2: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // Poisson at beta0 = 0 spans the whole unit interval
    let mean = r2.iter().sum::<f64>() / r2.len() as f64;
    let se = (0.04f64 / 4000.0).sqrt();
    assert!((mean - 0.4).abs() < 4.0 * se, "{mean}");
}

#[test]
fn usage_and_runtime_failures_have_distinct_codes() {
    let out = r2d2(&["fit-gbp", "--family", "poisson", "--a", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    validate(schemas::ERROR, &err);
    assert_eq!(err["error"], "Usage");

    assert_eq!(r2d2(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(r2d2(&["density", "--family", "negbin"]).status.code(), Some(2));

    let out = r2d2(&["analyze", "--data", "/does/not/exist.csv", "--family", "logistic", "--response", "pos"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    validate(schemas::ERROR, &err);
    assert_eq!(err["error"], "Io");
}

#[test]
fn degenerate_covariate_is_reported_with_its_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    std::fs::write(&p, "y,a,b\n1,1,2\n0,2,2\n1,3,2\n").unwrap();
    let out = r2d2(&["analyze", "--data", p.to_str().unwrap(), "--family", "logistic", "--response", "y", "--covariates", "a,b"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    validate(schemas::ERROR, &err);
    assert_eq!(err["error"], "DegenerateColumn");
    assert_eq!(err["column"], "b");

    std::fs::write(&p, "y,a\n1,1\n0,NA\n").unwrap();
    let out = r2d2(&["analyze", "--data", p.to_str().unwrap(), "--family", "logistic", "--response", "y", "--covariates", "a"]);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "MissingValue");
    assert_eq!(err["row"], 2);
}

#[test]
fn gambia_format_file_loads() {
    let d = load_csv(&data("gambia_synthetic.csv"), &gambia_schema()).unwrap();
    assert_eq!(d.data.n(), 2035);
    assert_eq!(d.data.p(), 5);
    assert_eq!(d.data.levels(0), 65);
    assert_eq!(d.data.coords.as_ref().unwrap().len(), 65);
    let positives = d.data.y.iter().filter(|&&y| y == 1.0).count();
    assert_eq!(positives, 726);
    let beta0 = r2d2_core::estimate_beta0(&d.data.y, &r2d2_core::ModelFamily::logistic()).unwrap();
    assert!((beta0 + 0.59).abs() < 0.005, "{beta0}");
}

#[test]
fn canonical_csv_round_trips() {
    let d = load_csv(&data("gambia_synthetic.csv"), &gambia_schema()).unwrap();
    let mut buf = Vec::new();
    write_canonical_csv(&d, &mut buf).unwrap();
    let again = load_csv_reader(buf.as_slice(), &canonical_schema(&d)).unwrap();
    assert_eq!(again.data.y, d.data.y);
    assert_eq!(again.data.groups, d.data.groups);
    assert_eq!(again.data.group_labels, d.data.group_labels);
    assert_eq!(again.data.coords, d.data.coords);
    let diff = (&again.data.x - &d.data.x).abs().max();
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn analyze_tiny_fixture_writes_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("s.json");
    let trace = dir.path().join("t.csv");
    let file = data("gambia_tiny.csv");
    let mut args = vec!["analyze", "--data", file.to_str().unwrap()];
    args.extend(GAMBIA_ARGS);
    args.extend(["--iters", "600", "--burn-in", "300", "--seed", "5"]);
    args.extend(["--summary", summary.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    let out = r2d2(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
    validate(schemas::ANALYZE_SUMMARY, &doc);
    assert_eq!(doc["labels"]["village"], serde_json::json!(["1", "2", "3", "4", "5"]));
    assert_eq!(doc["posterior"]["rho"][0]["name"], "village");
    let r2 = doc["posterior"]["r2n"]["mean"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&r2));

    let text = std::fs::read_to_string(&trace).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("beta0,beta[age],beta[netuse]"));
    assert!(header.contains("u[village][5]") && header.contains("sigma2_u[village]") && header.ends_with(",rho,r2n"));
    assert_eq!(text.lines().count(), 301);

    let first = std::fs::read(&trace).unwrap();
    assert!(r2d2(&args).status.success());
    assert_eq!(std::fs::read(&trace).unwrap(), first);
}

#[test]
fn analyze_comparison_priors_on_tiny_fixture() {
    let file = data("gambia_tiny.csv");
    for prior in ["vague", "pc"] {
        let mut args = vec!["analyze", "--data", file.to_str().unwrap()];
        args.extend(GAMBIA_ARGS);
        args.extend(["--prior", prior, "--iters", "400", "--burn-in", "200"]);
        let out = r2d2(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        validate(schemas::ANALYZE_SUMMARY, &doc);
        assert!(doc["gbp"].is_null() && doc["posterior"]["W"].is_null());
    }
}

#[test]
fn poisson_offsets_switch_to_the_offset_family() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("o.csv");
    let mut text = String::from("y,x,e\n");
    for i in 0..40 {
        text.push_str(&format!("{},{},{}\n", i % 5, (i * 7 % 11) as f64, 1.0 + (i % 4) as f64));
    }
    std::fs::write(&p, text).unwrap();
    let out = r2d2(&[
        "analyze", "--data", p.to_str().unwrap(), "--family", "poisson", "--response", "y", "--covariates", "x",
        "--offset", "e", "--iters", "300", "--burn-in", "100",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["family"], "poisson-offset");
    assert!(doc["theta_hat"].as_f64().unwrap() > 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loaded_columns_are_standardized(cols in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 12), 1..4)) {
        prop_assume!(cols.iter().all(|c| c.iter().any(|v| (v - c[0]).abs() > 1e-3)));
        let names: Vec<String> = (0..cols.len()).map(|j| format!("c{j}")).collect();
        let mut text = format!("y,{}\n", names.join(","));
        for i in 0..12 {
            let row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
            text.push_str(&format!("{},{}\n", i % 2, row.join(",")));
        }
        let s = CsvSchema { response: "y".into(), covariates: names, ..Default::default() };
        let d = load_csv_reader(text.as_bytes(), &s).unwrap();
        for j in 0..cols.len() {
            let c = d.data.x.column(j);
            let m = c.sum() / 12.0;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 11.0;
            prop_assert!(m.abs() < 1e-10 && (v - 1.0).abs() < 1e-8);
        }
        let mut buf = Vec::new();
        write_canonical_csv(&d, &mut buf).unwrap();
        let again = load_csv_reader(buf.as_slice(), &canonical_schema(&d)).unwrap();
        prop_assert!((&again.data.x - &d.data.x).abs().max() < 1e-12);
    }
}
