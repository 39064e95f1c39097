use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn privic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    read(p)
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn compare_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "compare".to_owned(),
            "--beta".into(),
            "0.2,1,5".into(),
            "--seed".into(),
            "1,2".into(),
            "--n".into(),
            "2000".into(),
            "--grid".into(),
            "6x8".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    for out in [&a, &b] {
        let o = privic(&args(out).iter().map(String::as_str).collect::<Vec<_>>());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let rows = csv_rows(&a.join("compare.csv"));
    assert_eq!(rows[0], ["mechanism", "beta", "epsilon", "seed", "emd_km"]);
    assert_eq!(rows.len() - 1, 2 * 3 * 2);
    assert_eq!(read(&a.join("compare.csv")), read(&b.join("compare.csv")));
    assert!(read(&a.join("channels.csv"))
        .lines()
        .next()
        .unwrap()
        .contains("mi_nats"));
}

#[test]
fn privic_paris_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = privic(&["privic", "--beta", "0.5,1", "--n", "2000", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traces: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("privic_beta") && n.ends_with(".csv"))
        .collect();
    assert_eq!(traces.len(), 10);
    let rows = csv_rows(&dir.path().join("privic_beta1_seed3.csv"));
    assert_eq!(rows[0], ["N", "round", "beta", "emd_km"]);
    assert_eq!(rows.len() - 1, 15);
    assert_eq!(rows[1][1], "3");

    // the first row is the distance from the uniform start, identical in every trace
    let first: Vec<String> = csv_rows(&dir.path().join("privic_table.csv"))
        .into_iter()
        .skip(1)
        .filter(|r| r[0] == "1")
        .map(|r| r[3].clone())
        .collect();
    assert_eq!(first.len(), 10);
    assert!(first.iter().all(|v| v == &first[0]));

    let metrics_dir = dir.path().join("m");
    let o = privic(&["metrics", "--beta", "1", "--out", &metrics_dir.display().to_string()]);
    assert!(o.status.success());
    let emd0 = csv_rows(&metrics_dir.join("metrics.csv"))
        .into_iter()
        .find(|r| r[0] == "emd_uniform_to_truth")
        .unwrap();
    assert_eq!(emd0[1], first[0]);
}

#[test]
fn sf_config_trace_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = privic(&[
        "privic",
        "--beta",
        "1",
        "--seed",
        "4",
        "--cycles",
        "8",
        "--ba-iters",
        "5",
        "--ibu-iters",
        "5",
        "--grid",
        "17x24",
        "--bbox",
        "37.7228,37.7946,-122.5153,-122.3789",
        "--n",
        "1000",
        "--out",
        &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&dir.path().join("privic_beta1_seed4.csv")).len() - 1, 8);
}

#[test]
fn elastic_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = privic(&["elastic", "--out", &out]);
    assert!(o.status.success());
    let rows = csv_rows(&dir.path().join("elastic_summary.csv"));
    let h = &rows[0];
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (mech, eps, point, src, arg, sum) = (
        col("mechanism"),
        col("epsilon"),
        col("point"),
        col("source_cell"),
        col("argmax_cell"),
        col("row_sum"),
    );
    assert_eq!(rows.len() - 1, 4 * 2 * 2);
    for r in &rows[1..] {
        assert!((r[sum].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
        if r[mech] == "laplace" && r[point] == "A" {
            assert_eq!(r[arg], r[src]);
        }
        if r[mech] == "ba" && r[point] == "A" && r[eps] == "0.4" {
            assert_ne!(r[arg], r[src]);
        }
    }
    let heat = csv_rows(&dir.path().join("elastic_heatmap.csv"));
    assert_eq!(heat.len() - 1, 4 * 2 * 2 * 192);
}

#[test]
fn markov_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a").display().to_string();
    let o = privic(&["markov", "--trials", "300", "--out", &out]);
    assert!(o.status.success());
    let report = read(&Path::new(&out).join("markov.json"));
    assert!(report.contains("\"unique\""));
    let rows = csv_rows(&Path::new(&out).join("hitting_times.csv"));
    assert_eq!(rows[0], ["state", "psi", "inv_expected_tau", "sigma"]);
    assert_eq!(rows.len() - 1, 3);

    let out0 = dir.path().join("b").display().to_string();
    let o = privic(&["markov", "--beta", "0", "--trials", "20", "--out", &out0]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("not unique"));
    assert!(read(&Path::new(&out0).join("markov.json")).contains("non_unique"));

    let o = privic(&["markov", "--m", "5", "--k", "10", "--out", &out0]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn missing_dataset_falls_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = privic(&[
        "compare",
        "--data",
        "/no/such/checkins.txt",
        "--beta",
        "5",
        "--seed",
        "1",
        "--n",
        "500",
        "--grid",
        "4x4",
        "--out",
        &out,
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
    assert!(dir.path().join("compare.csv").exists());
}

#[test]
fn error_exit_codes() {
    assert_eq!(privic(&["compare", "--grid", "12"]).status.code(), Some(2));
    assert_eq!(
        privic(&["compare", "--synthetic", "moon", "--grid", "2x2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(privic(&["ingest", "--data", "/no/such/file"]).status.code(), Some(3));
    assert_eq!(privic(&["privic", "--nonsense"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "colour = 3\n").unwrap();
    assert_eq!(
        privic(&["compare", "--config", &cfg.display().to_string()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "seeds = [9]\nbetas = [0.5, 1.0]\ncycles = 4\nn = 500\nout = \"{}\"\n[dataset]\ngrid = \"5x6\"\n[ba]\niters = 3\n[ibu]\niters = 3\n",
            out.display()
        ),
    )
    .unwrap();
    let o = privic(&["privic", "--config", &cfg.display().to_string(), "--cycles", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("privic_table.csv"));
    assert_eq!(rows.len() - 1, 2 * 2);
    assert!(out.join("privic_beta0.5_seed9.json").exists());
}

#[test]
fn ingest_counts_records() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("checkins.txt");
    fs::write(
        &data,
        "1\t2010-10-19T23:55:27Z\t48.85\t2.30\t100\n\
         2\t2010-10-18T22:17:43Z\t48.86\t2.35\t101\n\
         3\t2010-10-17T23:42:03Z\t40.00\t2.35\t102\n\
         garbage line\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = privic(&[
        "ingest",
        "--data",
        &data.display().to_string(),
        "--out",
        &out.display().to_string(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read(&out.join("ingest_summary.json"));
    assert!(summary.contains("\"records\": 2"));
    assert!(summary.contains("\"outside_bbox\": 1"));
    assert!(summary.contains("\"skipped_malformed\": 1"));
    let rows = csv_rows(&out.join("cell_counts.csv"));
    assert_eq!(rows.len() - 1, 192);
    let total: usize = rows[1..].iter().map(|r| r[5].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 2);
}
