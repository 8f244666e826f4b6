use std::path::Path;
use std::process::{Command, Output};

use pollencast_core::data::{
    generate_synthetic, write_csv_file, Boundary, GeneratorProfile, SeasonDefinition,
};
use pollencast_core::features::SeriesReferences;
use pollencast_core::gbm::GbmModel;
use pollencast_core::pipeline::{Stage1Model, Stage2Model, TrainingSpec};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pollencast"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, years: u32) -> String {
    let path = dir.join("data.csv");
    let o = run(&[
        "synth",
        "--years",
        &years.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    path.to_str().unwrap().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["threshold", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&[]).status.code(), Some(64));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    let o = run(&["threshold", "--beta1", "-1"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(
        stderr(&o).starts_with("error kind=MissingArgument"),
        "{}",
        stderr(&o)
    );
    let o = run(&["threshold", "--beta0", "1", "--beta1", "0"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("kind=ZeroSlope"));
}

#[test]
fn threshold_table_and_min_days() {
    let o = run(&[
        "threshold",
        "--beta0",
        "10",
        "--beta1",
        "-1",
        "--n-max",
        "12",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "N,f_th");
    assert_eq!(lines.len(), 12);
    assert!(lines[1].starts_with("2,"));
    assert_eq!(stderr(&o).trim(), "N_n=7");

    let o = run(&["threshold", "--beta0", "0", "--beta1", "-1"]);
    assert_eq!(stderr(&o).trim(), "N_n=2");
}

#[test]
fn synth_then_label() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 3);
    let o = run(&[
        "label",
        "--input",
        &data,
        "--delta-c",
        "120",
        "--delta-n",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "year,start_day,end_day,length");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("2003,"));

    let o = run(&["label", "--input", &data, "--delta-c", "1e9"]);
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with("NA,NA,NA"));
}

#[test]
fn bad_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "date,pollen\n2003-01-01,1\n").unwrap();
    let o = run(&["label", "--input", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).starts_with("error kind=MissingColumn"),
        "{}",
        stderr(&o)
    );
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = run(&[
        "label",
        "--input",
        dir.path().join("absent.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_values_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"beta0": 10.0, "beta1": -1.0, "n_max": 5}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "threshold"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 5);
    assert_eq!(stderr(&o).trim(), "N_n=NA");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "threshold",
        "--beta0",
        "0",
    ]);
    assert_eq!(stderr(&o).trim(), "N_n=2");

    std::fs::write(&cfg, r#"{"beta_zero": 1}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "threshold"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("kind=ConfigError"));
}

#[test]
fn train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 5);
    let models = dir.path().join("models");
    let o = run(&[
        "train",
        "--input",
        &data,
        "--out-dir",
        models.to_str().unwrap(),
        "--train-years",
        "2003-2006",
        "--trees",
        "20",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("years=4 "));

    let series = dir.path().join("series.csv");
    let forecast = dir.path().join("forecast.json");
    let args = [
        "predict",
        "--models",
        models.to_str().unwrap(),
        "--input",
        &data,
        "--year",
        "2007",
        "--z-first",
        "60",
        "--z-last",
        "100",
        "--series-out",
        series.to_str().unwrap(),
        "--forecast-out",
        forecast.to_str().unwrap(),
    ];
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&series).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "z,y_hat,u_hat");
    assert_eq!(csv.lines().count(), 42);
    let fc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&forecast).unwrap()).unwrap();
    assert!(fc["y_star"].as_f64().unwrap().is_finite());
    assert!(fc["sigma_y_star"].as_f64().unwrap() >= 0.0);
    let first = std::fs::read(&forecast).unwrap();
    assert!(run(&args).status.success());
    assert_eq!(first, std::fs::read(&forecast).unwrap());
}

#[test]
fn flat_stage1_is_a_degenerate_slope() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = synth(dir.path(), 2);
    let data = generate_synthetic(42, 2, &GeneratorProfile::default()).unwrap();
    write_csv_file(&data, &data_path).unwrap();
    let spec = TrainingSpec::new(SeasonDefinition::new(120.0, 4).unwrap(), Boundary::Start);
    let refs = SeriesReferences::from_training(&data, &[2003], &spec.season).unwrap();
    let width = 361;
    let s1 = Stage1Model {
        spec: spec.clone(),
        train_years: vec![2003],
        references: refs,
        gbm: GbmModel::constant(12.0, width),
    };
    let s2 = Stage2Model {
        spec,
        references: refs,
        u_floor: 0.25,
        gbm: GbmModel::constant(1.0, width + 1),
    };
    let models = dir.path().join("flat");
    std::fs::create_dir_all(&models).unwrap();
    std::fs::write(
        models.join("stage1.json"),
        serde_json::to_string(&s1).unwrap(),
    )
    .unwrap();
    std::fs::write(
        models.join("stage2.json"),
        serde_json::to_string(&s2).unwrap(),
    )
    .unwrap();
    let o = run(&[
        "predict",
        "--models",
        models.to_str().unwrap(),
        "--input",
        &data_path,
        "--year",
        "2004",
        "--z-first",
        "60",
        "--z-last",
        "90",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).starts_with("error kind=DegenerateSlope"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn backtest_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 5);
    let out = dir.path().join("bt");
    let o = run(&[
        "backtest",
        "--input",
        &data,
        "--out-dir",
        out.to_str().unwrap(),
        "--test-years",
        "2",
        "--trees",
        "15",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("folds=2 mae="), "{}", stdout(&o));
    for f in [
        "report.json",
        "folds.csv",
        "convergence_2006.csv",
        "convergence_2007.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = run(&[
        "backtest",
        "--input",
        &data,
        "--out-dir",
        out.to_str().unwrap(),
        "--test-years",
        "9",
    ]);
    assert_eq!(o.status.code(), Some(64));
}
