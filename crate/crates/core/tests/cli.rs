use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bnmf_community::cli::Manifest;
use bnmf_community::data::SimilarityMatrix;
use bnmf_community::model::FitResult;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnmf-community"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn project_identity() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.csv"), "learner_id,c1,c2\na,1,0\nb,0,1\n").unwrap();
    ok(dir.path(), &["project", "-i", "c.csv", "-o", "x.csv"]);
    let x = SimilarityMatrix::read_csv(fs::File::open(dir.path().join("x.csv")).unwrap()).unwrap();
    assert_eq!(x.counts(), &ndarray::array![[1, 0], [0, 1]]);
    assert!(dir.path().join("x.csv.manifest.json").exists());
}

#[test]
fn pipeline_synth_fit_assign_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "x.csv", "--n", "60", "--k", "3", "--seed", "4"]);
    ok(d, &["fit", "-i", "x.csv", "-o", "fit.json", "--k0", "10", "--seed", "1"]);
    ok(d, &["fit", "-i", "x.csv", "-o", "fit_again.json", "--k0", "10", "--seed", "1"]);
    assert_eq!(fs::read(d.join("fit.json")).unwrap(), fs::read(d.join("fit_again.json")).unwrap());
    let fit = FitResult::from_json(&fs::read_to_string(d.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit.k_star, 3);

    ok(d, &["rerun", "--manifest", "fit.json.manifest.json", "--out", "replayed.json"]);
    assert_eq!(fs::read(d.join("fit.json")).unwrap(), fs::read(d.join("replayed.json")).unwrap());

    ok(d, &["assign", "-i", "x.csv", "-o", "from_fit.json", "--fit", "fit.json", "--attributes", "x.labels.csv"]);
    ok(d, &["assign", "-i", "x.csv", "-o", "report.json", "--k0", "10", "--restarts", "4", "--seed", "2"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["restarts_used"], 4);
    assert_eq!(report["community_sizes"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(csv.starts_with("learner_id,hard_label,unassigned_flag,p0,p1,p2\n"));
    assert_eq!(csv.lines().count(), 61);
    assert!(d.join("from_fit.crosstab.json").exists());

    let out = run(
        d,
        &["benchmark", "-i", "x.csv", "-o", "bench.json", "--subsets", "2", "--subset-size", "30", "--k0", "8"],
    );
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    for name in ["BNMF", "Pred-Avg", "Pred-0", "RMSE", "NLL"] {
        assert!(table.contains(name), "{table}");
    }
    assert_eq!(fs::read_to_string(d.join("bench.txt")).unwrap().trim_end(), table.trim_end());

    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(d.join("bench.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config.seed, 0);
    assert_eq!(manifest.config.n_subsets, 2);
    assert_eq!(manifest.hyperparameters.unwrap().k0, 8);
    assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["fit", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(d, &["fit", "-i", "missing.csv", "-o", "f.json"]).status.code(), Some(1));

    fs::write(d.join("bad.csv"), "learner_id,c1\na,1\nb,2\n").unwrap();
    assert_eq!(run(d, &["project", "-i", "bad.csv", "-o", "x.csv"]).status.code(), Some(2));

    ok(d, &["synth", "--out", "x.csv", "--n", "12", "--k", "2"]);
    assert_eq!(
        run(d, &["fit", "-i", "x.csv", "-o", "f.json", "--fraction", "0.1"]).status.code(),
        Some(1),
        "benchmark-only flag is a usage error for fit"
    );
    assert_eq!(run(d, &["benchmark", "-i", "x.csv", "-o", "b.json", "--fraction", "1.5"]).status.code(), Some(1));
    // A huge Gamma shape prunes every component in every restart.
    assert_eq!(
        run(d, &["assign", "-i", "x.csv", "-o", "r.json", "--a", "1e15", "--restarts", "2"])
            .status
            .code(),
        Some(3)
    );
}
