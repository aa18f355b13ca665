use std::path::Path;
use std::process::Command;

use landmarks::harness::{self, ExperimentConfig, KChoice, Method, Metric, ScoreTable};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_landmarks"));
    cmd.env_remove("LANDMARKS_WORKERS").env("RUST_LOG", "error");
    cmd
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn sweep_output_is_identical_across_runs_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.cfg");
    std::fs::write(
        &config,
        "# small sweep\ndataset = synthetic:blobs:70\nsigma = 1\ngammas = 1e-2, 1e-4\n\
         methods = das, ras, uniform, rls, approx-ras\nseeds = 0..3\n\
         metrics = opnorm, maxnorm, frob-subsets\nsubset_size = 20\nnum_subsets = 3\n\
         n_features = 300\nepsilon = 0.3\nc = 2\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "4", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let status = bin()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--output")
            .arg(&out)
            .env("LANDMARKS_WORKERS", workers)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(out);
    }
    for name in ["results.csv", "summary.json"] {
        assert_eq!(read(&outputs[0], name), read(&outputs[1], name));
        assert_eq!(read(&outputs[1], name), read(&outputs[2], name));
    }
    let csv = String::from_utf8(read(&outputs[0], "results.csv")).unwrap();
    assert!(csv.starts_with("method,gamma,k,seed,metric,value\n"));
    for line in csv.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.is_finite() && v >= 0.0, "{line}");
    }
    let timings = String::from_utf8(read(&outputs[0], "timings.csv")).unwrap();
    assert!(timings.starts_with("method,gamma,k,seed,phase,wallclock_ms\n"));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.cfg");
    std::fs::write(&config, "dataset = synthetic:moons:40\nsigma = -3\nmethods = uniform\nk = 5\nseeds = 0\n").unwrap();
    let bad = bin().args(["sweep", "--config"]).arg(&config).arg("-o").arg(tmp.path().join("a")).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("sigma"));
    let good = bin()
        .args(["sweep", "--sigma", "0.5", "--config"])
        .arg(&config)
        .arg("-o")
        .arg(tmp.path().join("b"))
        .status()
        .unwrap();
    assert!(good.success());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = bin().args(["sweep", "--dataset", "/nonexistent/data.csv"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let unknown = bin().args(["scores", "--dataset", "synthetic:blobs:20", "--methods", "nope"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));

    // Duplicated rows make K singular, which an unregularized Nyström core cannot absorb.
    let csv = tmp.path().join("dup.csv");
    std::fs::write(&csv, "a,b\n1,2\n1,2\n3,1\n0,0\n").unwrap();
    let singular = bin()
        .args(["sweep", "--methods", "uniform", "--k", "4", "--mu", "0", "--seeds", "0", "--dataset"])
        .arg(&csv)
        .arg("-o")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(singular.status.code(), Some(3), "{}", String::from_utf8_lossy(&singular.stderr));
}

#[test]
fn scores_and_check_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let scores = tmp.path().join("scores.csv");
    let status = bin()
        .args(["scores", "--dataset", "synthetic:ring:60", "--sigma", "1", "--gammas", "1e-3", "--k", "10", "--table", "das", "-o"])
        .arg(&scores)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&scores).unwrap();
    assert!(text.starts_with("# columns:"));
    assert_eq!(text.lines().nth(1), Some("m,landmark,pivot,sigma,bound"));
    assert_eq!(text.lines().count(), 12);

    let out = bin()
        .args(["check", "--dataset", "synthetic:blobs:40", "--sigma", "1", "--gammas", "1e-2", "--epsilon", "0.5", "--delta", "0.2", "--seeds", "0..20"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["all_passed"], serde_json::Value::Bool(true));
    assert!(report["checks"].as_array().unwrap().len() >= 6);
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(text).unwrap()
}

#[test]
fn full_uniform_selection_has_zero_error() {
    let cfg = config("dataset = synthetic:blobs:50\nsigma = 1.5\nmethods = uniform\nk = 50\nseeds = 0,1\ngammas = 1e-3\nmetrics = opnorm,maxnorm,frob-subsets\nsubset_size = 10\nnum_subsets = 3\n");
    let res = harness::run_sweep(&cfg).unwrap();
    assert_eq!(res.rows.len(), 6);
    assert!(res.rows.iter().all(|r| r.value <= 1e-9), "{:?}", res.rows);
}

#[test]
fn from_ras_binds_k_per_cell() {
    let cfg = config("dataset = synthetic:moons:60\nsigma = 1\nmethods = ras,das,uniform,rls\nseeds = 0..4\ngammas = 1e-1,1e-3\nepsilon = 0.3\nc = 1\n");
    assert_eq!(cfg.k, KChoice::FromRas);
    let res = harness::run_sweep(&cfg).unwrap();
    for gamma in [1e-1, 1e-3] {
        for seed in 0..4 {
            let cell: Vec<_> = res.rows.iter().filter(|r| r.gamma == gamma && r.seed == seed && r.metric == Metric::Opnorm).collect();
            assert_eq!(cell.len(), 4);
            let k = cell.iter().find(|r| r.method == Method::Ras).unwrap().k;
            assert!(cell.iter().all(|r| r.k == k));
        }
    }
    let summary = &res.summary.rows;
    assert!(summary.iter().all(|r| r.k == "from-ras"));
}

#[test]
fn das_error_curve_is_monotone_on_housing_sized_data() {
    // 506 points in 13 correlated dimensions at σ = 5.
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("housing_like.csv");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(506);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut text = (0..13).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",") + "\n";
    for _ in 0..506 {
        let latent: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
        let row: Vec<String> = (0..13)
            .map(|j| format!("{:.6}", latent[j % 3] * (1.0 + j as f64 / 5.0) + 0.3 * normal.sample(&mut rng)))
            .collect();
        text += &(row.join(",") + "\n");
    }
    std::fs::write(&path, text).unwrap();
    let cfg = config(&format!(
        "dataset = {}\nsigma = 5\nc = 100\nmethods = das\nk = 10,20,40,80,120\nseeds = 0\ngammas = 1e-3\n",
        path.display()
    ));
    let res = harness::run_sweep(&cfg).unwrap();
    assert_eq!(res.summary.n, 506);
    assert_eq!(res.summary.d, 13);
    let curve: Vec<f64> = res.rows.iter().map(|r| r.value).collect();
    assert_eq!(curve.len(), 5);
    for w in curve.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{curve:?}");
    }
}

#[test]
fn dense_regions_score_higher() {
    let cfg = config("dataset = synthetic:moons:200\nsigma = 0.5\ngammas = 1e-2\nk = 5\n");
    let text = harness::dump_scores(&cfg, ScoreTable::Index).unwrap();
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for line in text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        let region: usize = cols[1].parse().unwrap();
        let christoffel: f64 = cols[4].parse().unwrap();
        sums[region] += christoffel;
        counts[region] += 1;
    }
    assert!(sums[0] / counts[0] as f64 > sums[1] / counts[1] as f64);
}

#[test]
fn das_dump_residuals_monotone_and_bounded() {
    let cfg = config("dataset = synthetic:blobs:80\nsigma = 1\ngammas = 1e-3\nk = 60\n");
    let text = harness::dump_scores(&cfg, ScoreTable::Das).unwrap();
    let mut prev = f64::INFINITY;
    for line in text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        let m: usize = cols[0].parse().unwrap();
        let sigma: f64 = cols[3].parse().unwrap();
        assert!(sigma <= prev + 1e-12);
        prev = sigma;
        if m >= 2 {
            let bound: f64 = cols[4].parse().unwrap();
            assert!(bound >= sigma);
        }
    }
}
