use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logcontrast"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Deterministic pseudo-random value in (-1, 1).
fn wiggle(a: usize, b: usize) -> f64 {
    ((a * 7919 + b * 104_729) as f64 * 0.618_033_988_75).sin()
}

/// Three-component toy: 14 subjects, 6 times on [0, 1], one control. The
/// response follows the first log-ratio.
struct Toy {
    dir: TempDir,
}

impl Toy {
    fn new() -> Toy {
        Toy::scaled(1.0)
    }

    /// Same data with every composition row multiplied by `factor`.
    fn scaled(factor: f64) -> Toy {
        let dir = TempDir::new().unwrap();
        let mut traj = String::from("subject,time,alpha,beta,gamma\n");
        let mut resp = String::from("subject,y,age\n");
        for i in 0..14 {
            let mut signal = 0.0;
            for m in 0..6 {
                let t = m as f64 / 5.0;
                let logs: Vec<f64> = (0..3).map(|j| wiggle(i, j) + wiggle(i, j + 3) * t + 0.2 * wiggle(i * 6 + m, j + 9)).collect();
                let total: f64 = logs.iter().map(|v| v.exp()).sum();
                let vals: Vec<f64> = logs.iter().map(|v| factor * v.exp() / total).collect();
                signal += (logs[0] - logs[1]) / 6.0;
                traj.push_str(&format!("s{i},{t},{},{},{}\n", vals[0], vals[1], vals[2]));
            }
            let age = 30.0 + 10.0 * wiggle(i, 40);
            resp.push_str(&format!("s{i},{},{age}\n", 1.0 + 2.0 * signal + 0.01 * age + 0.05 * wiggle(i, 50)));
        }
        fs::write(dir.path().join("traj.csv"), traj).unwrap();
        fs::write(dir.path().join("resp.csv"), resp).unwrap();
        Toy { dir }
    }

    fn traj(&self) -> PathBuf {
        self.dir.path().join("traj.csv")
    }

    fn resp(&self) -> PathBuf {
        self.dir.path().join("resp.csv")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data_args(&self) -> Vec<String> {
        vec![
            "--trajectories".into(),
            s(&self.traj()).into(),
            "--responses".into(),
            s(&self.resp()).into(),
            "--domain".into(),
            "0,1".into(),
        ]
    }

    fn fit(&self, out: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec!["fit".into()];
        args.extend(self.data_args());
        args.extend(["--out".into(), s(&self.out(out)).into()]);
        args.extend(extra.iter().map(|a| a.to_string()));
        bin().args(&args).output().unwrap()
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn numbers(row: &[String]) -> Vec<f64> {
    row.iter().map(|v| v.parse().unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn predictions(path: &Path) -> Vec<(String, f64)> {
    read_csv(path).1.into_iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect()
}

#[test]
fn version_prints_a_build_identifier() {
    let out = run(&["--version"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("logcontrast "), "{text}");
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn large_penalty_gives_zero_curves() {
    let toy = Toy::new();
    let out = toy.fit("big", &["--lambda", "1e6", "--k", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&toy.out("big").join("curves.csv"));
    assert_eq!(header, ["t", "alpha", "beta", "gamma"]);
    assert_eq!(rows.len(), 101);
    for row in &rows {
        assert!(numbers(&row[1..]).iter().all(|&v| v == 0.0));
    }
    let sel = json(&toy.out("big").join("selection.json"));
    assert_eq!(sel["all_zero"], Value::Bool(true));
    assert!(toy.out("big").join("fit.json").exists());
}

#[test]
fn malformed_csv_names_the_row() {
    let toy = Toy::new();
    let text = fs::read_to_string(toy.traj()).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[3] = "s0,0.4,0.2,abc,0.3".into();
    fs::write(toy.traj(), lines.join("\n")).unwrap();
    let out = toy.fit("bad", &["--lambda", "0.1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 4"), "{}", stderr(&out));
    assert!(!toy.out("bad").join("fit.json").exists());
}

#[test]
fn validation_errors_exit_with_two() {
    let toy = Toy::new();
    for extra in [
        vec!["--lambda", "0.1", "--k", "0"],
        vec!["--lambda", "-1"],
        vec!["--lambda", "0.1", "--variant", "bgl:9"],
        vec!["--lambda", "0.1", "--variant", "bgl"],
        vec!["--lambda", "0.1", "--rho", "0.5"],
        vec!["--lambda-path", "ten:0.1"],
    ] {
        let out = toy.fit("v", &extra);
        assert_eq!(code(&out), 2, "{extra:?}: {}", stderr(&out));
    }
    let mut args = vec!["fit".to_string()];
    args.extend(toy.data_args());
    args[6] = "1,0".into();
    args.extend(["--lambda".into(), "0.1".into()]);
    assert_eq!(code(&bin().args(&args).output().unwrap()), 2);
    // stochastic subcommands refuse to run without a seed
    let mut args = vec!["tune".to_string()];
    args.extend(toy.data_args());
    assert_eq!(code(&bin().args(&args).output().unwrap()), 2);
}

#[test]
fn non_convergence_exits_with_three_and_still_writes() {
    let toy = Toy::new();
    let out = toy.fit("nc", &["--lambda", "0.01", "--eps1", "1e-300", "--eps2", "1e-300", "--k", "4"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let fit = json(&toy.out("nc").join("fit.json"));
    assert_eq!(fit["converged"], Value::Bool(false));
    assert_eq!(json(&toy.out("nc").join("selection.json"))["converged"], Value::Bool(false));
}

#[test]
fn baseline_variant_curves_sum_to_zero() {
    let toy = Toy::new();
    let out = toy.fit("bgl", &["--lambda", "0.005", "--k", "4", "--variant", "bgl:1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, rows) = read_csv(&toy.out("bgl").join("curves.csv"));
    let mut largest: f64 = 0.0;
    for row in &rows {
        let v = numbers(&row[1..]);
        largest = largest.max(v.iter().fold(0.0, |a, x| a.max(x.abs())));
        assert!(v.iter().sum::<f64>().abs() <= 1e-8, "{row:?}");
    }
    assert!(largest > 1e-3, "fit should not be trivial");
}

#[test]
fn prediction_on_training_data_reproduces_fitted_values() {
    let toy = Toy::new();
    assert_eq!(code(&toy.fit("m", &["--lambda", "0.005", "--k", "4"])), 0);
    let mut args = vec!["design-dump".to_string()];
    args.extend(toy.data_args());
    args.extend(["--k".into(), "4".into(), "--out".into(), s(&toy.out("design.csv")).into()]);
    assert!(bin().args(&args).status().unwrap().success());

    let fit = json(&toy.out("m").join("fit.json"));
    let b0 = fit["beta0"].as_f64().unwrap();
    let bc: Vec<f64> = fit["beta_c"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let coef: Vec<f64> = fit["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect::<Vec<_>>())
        .collect();
    let (header, rows) = read_csv(&toy.out("design.csv"));
    assert_eq!(header.len(), 2 + 1 + 12);
    assert_eq!(&header[..4], ["subject", "y", "age", "alpha_1"]);

    let pred = toy.out("pred.csv");
    let out = run(&["predict", "--fit", s(&toy.out("m").join("fit.json")), "--trajectories", s(&toy.traj()), "--controls", s(&toy.resp()), "--out", s(&pred)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let predicted = predictions(&pred);
    assert_eq!(predicted.len(), rows.len());
    for (row, (id, value)) in rows.iter().zip(&predicted) {
        assert_eq!(&row[0], id);
        let x = numbers(&row[2..]);
        let fitted = b0 + bc[0] * x[0] + coef.iter().zip(&x[1..]).map(|(b, z)| b * z).sum::<f64>();
        assert!((fitted - value).abs() <= 1e-10, "{id}: {fitted} vs {value}");
    }
}

#[test]
fn scaled_compositions_predict_identically() {
    let toy = Toy::new();
    let big = Toy::scaled(7.0);
    assert_eq!(code(&toy.fit("m", &["--lambda", "0.005", "--k", "4"])), 0);
    assert_eq!(code(&big.fit("m", &["--lambda", "0.005", "--k", "4"])), 0);
    let predict = |t: &Toy| {
        let out = t.out("pred.csv");
        let status = bin()
            .args(["predict", "--fit", s(&t.out("m").join("fit.json")), "--trajectories", s(&t.traj()), "--controls", s(&t.resp()), "--out", s(&out)])
            .status()
            .unwrap();
        assert!(status.success());
        predictions(&out)
    };
    for ((a, x), (b, y)) in predict(&toy).iter().zip(&predict(&big)) {
        assert_eq!(a, b);
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{a}: {x} vs {y}");
    }
}

#[test]
fn predict_accepts_reordered_columns_and_rejects_foreign_names() {
    let toy = Toy::new();
    assert_eq!(code(&toy.fit("m", &["--lambda", "0.005", "--k", "4"])), 0);
    let fit = toy.out("m").join("fit.json");
    let text = fs::read_to_string(toy.traj()).unwrap();
    let swapped: String = text
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{},{},{},{},{}\n", f[0], f[1], f[4], f[2], f[3])
        })
        .collect();
    let path = toy.out("swapped.csv");
    fs::write(&path, swapped).unwrap();
    let a = toy.out("a.csv");
    let b = toy.out("b.csv");
    for (traj, out) in [(toy.traj(), &a), (path.clone(), &b)] {
        let status = bin()
            .args(["predict", "--fit", s(&fit), "--trajectories", s(&traj), "--controls", s(&toy.resp()), "--out", s(out)])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(predictions(&a), predictions(&b));

    fs::write(&path, text.replacen("gamma", "delta", 1)).unwrap();
    let out = run(&["predict", "--fit", s(&fit), "--trajectories", s(&path), "--controls", s(&toy.resp())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("gamma"), "{}", stderr(&out));

    let out = run(&["predict", "--fit", s(&fit), "--trajectories", s(&toy.traj())]);
    assert_eq!(code(&out), 2, "controls are required when the model has them");
}

#[test]
fn empty_prediction_input_gives_empty_output() {
    let toy = Toy::new();
    assert_eq!(code(&toy.fit("m", &["--lambda", "0.005", "--k", "4"])), 0);
    let empty = toy.out("empty.csv");
    fs::write(&empty, "subject,time,alpha,beta,gamma\n").unwrap();
    let out = run(&["predict", "--fit", s(&toy.out("m").join("fit.json")), "--trajectories", s(&empty)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn lambda_path_writes_one_row_per_penalty() {
    let toy = Toy::new();
    let out = toy.fit("path", &["--lambda-path", "8:0.01", "--k", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&toy.out("path").join("path.csv"));
    assert_eq!(header.last().unwrap(), "gamma");
    assert_eq!(rows.len(), 8);
    let lambdas: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(lambdas.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(rows[0][4], "0");
    let fit = json(&toy.out("path").join("fit.json"));
    assert!((fit["lambda"].as_f64().unwrap() - lambdas[7]).abs() <= 1e-12 * lambdas[7]);
}

#[test]
fn tuning_is_reproducible_across_job_counts() {
    let toy = Toy::new();
    let tune = |out: &str, jobs: &str| {
        let mut args = vec!["tune".to_string()];
        args.extend(toy.data_args());
        for a in ["--seed", "11", "--k-grid", "4,5", "--nlambda", "6", "--folds", "3", "--jobs", jobs, "--out", s(&toy.out(out))] {
            args.push(a.into());
        }
        let out = bin().args(&args).output().unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    };
    let before = (fs::read(toy.traj()).unwrap(), fs::read(toy.resp()).unwrap());
    tune("one", "1");
    tune("two", "2");
    tune("again", "1");
    assert_eq!(before, (fs::read(toy.traj()).unwrap(), fs::read(toy.resp()).unwrap()), "inputs must not change");
    for file in ["cv_table.csv", "fit.json", "curves.csv", "selection.json"] {
        let one = fs::read(toy.out("one").join(file)).unwrap();
        assert_eq!(one, fs::read(toy.out("two").join(file)).unwrap(), "{file}");
        assert_eq!(one, fs::read(toy.out("again").join(file)).unwrap(), "{file}");
    }
    let (header, rows) = read_csv(&toy.out("one").join("cv_table.csv"));
    assert!(header.iter().any(|h| h == "cv_error"), "{header:?}");
    assert_eq!(rows.len(), 12);
}

#[test]
fn bootstrap_writes_selection_proportions() {
    let toy = Toy::new();
    let mut args = vec!["bootstrap".to_string()];
    args.extend(toy.data_args());
    for a in ["--seed", "3", "--replicates", "4", "--k-grid", "4", "--nlambda", "5", "--folds", "3", "--out", s(&toy.out("boot"))] {
        args.push(a.into());
    }
    let out = bin().args(&args).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&toy.out("boot").join("stability.json"));
    let props = report["selection_proportion"].as_array().unwrap();
    assert_eq!(props.len(), 3);
    assert!(props.iter().all(|v| (0.0..=1.0).contains(&v.as_f64().unwrap())));
}

#[test]
fn basis_dump_is_a_partition_of_unity() {
    let out = run(&["basis-dump", "--k", "6", "--degree", "2", "--domain", "-1,3", "--grid", "21"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,phi1,phi2,phi3,phi4,phi5,phi6");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    assert_eq!((rows[0][0], rows[20][0]), (-1.0, 3.0));
    for r in rows {
        assert!((r[1..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(code(&run(&["basis-dump", "--k", "2", "--degree", "3"])), 2);
}

#[test]
fn simulate_and_report_round_trip() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("table.csv");
    let data = dir.path().join("data");
    let simulate = |jobs: &str| {
        let out = run(&[
            "simulate", "--n", "30", "--p", "4", "--M", "6", "--replicates", "2", "--methods", "cgl,average", "--criteria", "cv",
            "--k-grid", "4", "--nlambda", "6", "--folds", "3", "--n-test", "50", "--seed", "9", "--jobs", jobs, "--out", s(&table),
            "--emit-data", s(&data),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        (fs::read_to_string(&table).unwrap(), String::from_utf8(out.stdout).unwrap())
    };
    let (csv_one, printed) = simulate("1");
    let (csv_two, _) = simulate("2");
    assert_eq!(csv_one, csv_two);
    assert_eq!(csv_one.lines().count(), 3);
    assert!(data.join("trajectories.csv").exists() && data.join("responses.csv").exists());

    let out = run(&["report", "--table", s(&table)]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), printed);
}

#[test]
fn report_scales_est_and_pred_by_ten() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("t.csv");
    fs::write(
        &table,
        "criterion,method,est_mean,est_se,pred_mean,pred_se,fpr_mean,fpr_se,fnr_mean,fnr_se,replicates,failures\n\
         cv,cgl,0.5,0.02,0.034,0.001,12.5,1.25,0,0,20,0\n\
         gic,cgl,0.5,0,0.034,0,0,0,0,0,1,0\n",
    )
    .unwrap();
    let out = run(&["report", "--table", s(&table)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[1].contains("5.00 (0.20)") && lines[1].contains("0.34 (0.01)"), "{text}");
    assert!(lines[1].contains("12.50 (1.25)") && lines[1].contains("0.00 (0.00)"), "{text}");
    assert!(lines[2].ends_with('*'), "{text}");
    assert!(lines.len() == 4 && lines[3].starts_with('*'), "{text}");

    fs::write(&table, "criterion,method\ncv,cgl\n").unwrap();
    assert_eq!(code(&run(&["report", "--table", s(&table)])), 2);
}
