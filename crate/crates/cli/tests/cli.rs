use std::fs;
use std::process::{Command, Output};

fn grab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grab"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn without_timing(csv: &str) -> Vec<String> {
    data_rows(csv)
        .iter()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn outputs_start_with_schema_line() {
    for args in [
        vec!["balance-demo", "--n", "20", "--d", "2", "--rounds", "1"],
        vec!["adversarial", "--n-list", "10", "--seeds", "3"],
        vec!["train", "--n", "10", "--d", "2", "--epochs", "2"],
    ] {
        let text = stdout(&grab(&args));
        assert_eq!(text.lines().next(), Some("# schema=1"), "{args:?}");
    }
}

#[test]
fn zero_rounds_prints_only_the_random_baseline() {
    let text = stdout(&grab(&[
        "balance-demo",
        "--n",
        "100",
        "--d",
        "2",
        "--rounds",
        "0",
    ]));
    let rows = data_rows(&text);
    assert!(rows
        .iter()
        .all(|r| !r.starts_with("prefix_herded") && !r.starts_with("round_bound")));
    assert_eq!(
        rows.iter().filter(|r| r.starts_with("prefix_random")).count(),
        100
    );
    assert!(rows.iter().any(|r| r.starts_with("round_linf,0,")));
    assert!(!rows.iter().any(|r| r.starts_with("round_linf,1,")));
}

#[test]
fn running_minimum_never_increases() {
    let text = stdout(&grab(&[
        "balance-demo",
        "--n",
        "200",
        "--d",
        "4",
        "--rounds",
        "10",
    ]));
    let best: Vec<f64> = data_rows(&text)
        .iter()
        .filter_map(|r| r.strip_prefix("best_linf,"))
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(best.len(), 11);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn one_epoch_traces_agree_across_strategies() {
    let base = [
        "train",
        "--problem",
        "quad",
        "--n",
        "24",
        "--d",
        "3",
        "--epochs",
        "1",
        "--seed",
        "4",
    ];
    let reference: Vec<String> = without_timing(&stdout(&grab(&[&base[..], &["--strategy", "so"]].concat())))
        .iter()
        .map(|r| r.replacen(",so,", ",", 1))
        .collect();
    for s in ["flipflop", "greedy", "grab", "grab1", "herd"] {
        let rows = without_timing(&stdout(&grab(&[&base[..], &["--strategy", s]].concat())));
        let rows: Vec<String> = rows
            .iter()
            .map(|r| r.replacen(&format!(",{s},"), ",", 1))
            .collect();
        // the balance bound column is only filled for the grab variants
        let strip = |r: &String| r.rsplit_once(',').unwrap().0.to_string();
        assert_eq!(
            rows.iter().map(strip).collect::<Vec<_>>(),
            reference.iter().map(strip).collect::<Vec<_>>(),
            "{s}"
        );
    }
}

#[test]
fn saved_grab_order_replays_as_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let order = dir.path().join("order.txt");
    let json = dir.path().join("trace.json");
    let order_s = order.to_str().unwrap();
    stdout(&grab(&[
        "train",
        "--n",
        "30",
        "--d",
        "4",
        "--epochs",
        "5",
        "--strategy",
        "grab",
        "--save-order",
        order_s,
        "--json",
        json.to_str().unwrap(),
    ]));
    let saved = fs::read_to_string(&order).unwrap();
    assert!(saved.starts_with("# schema=1\n"));
    assert_eq!(saved.lines().count(), 31);
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(trace["config"]["strategy"]["type"], "grab");
    assert_eq!(trace["records"].as_array().unwrap().len(), 5);

    let fixed = format!("fixed:{order_s}");
    let text = stdout(&grab(&[
        "train",
        "--n",
        "30",
        "--d",
        "4",
        "--epochs",
        "3",
        "--strategy",
        &fixed,
    ]));
    assert!(data_rows(&text).iter().all(|r| r.contains(",fixed,")));
}

#[test]
fn csv_problem_trains() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    fs::write(
        &path,
        "a,b,label\n1.0,0.5,1\n-1.0,0.2,0\n0.3,-0.7,1\n-0.4,0.9,0\n",
    )
    .unwrap();
    let problem = format!("csv:{}", path.display());
    let text = stdout(&grab(&[
        "train",
        "--problem",
        &problem,
        "--epochs",
        "4",
        "--strategy",
        "rr",
    ]));
    assert_eq!(data_rows(&text).len(), 4);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| grab(args).status.code().unwrap();
    assert_eq!(code(&["train", "--strategy", "bogus"]), 2);
    assert_eq!(code(&["train", "--problem", "nope"]), 2);
    assert_eq!(code(&["train", "--epochs", "0"]), 2);
    assert_eq!(code(&["adversarial", "--n-list", "7"]), 2);
    assert_eq!(
        code(&["train", "--problem", "quad", "--lr", "100", "--epochs", "50"]),
        3
    );
    assert_eq!(
        code(&[
            "train",
            "--n",
            "20",
            "--d",
            "3",
            "--balancer",
            "walk",
            "--c",
            "0.001",
            "--epochs",
            "2"
        ]),
        4
    );
    let refused = grab(&["train", "--strategy", "greedy", "--max-gradient-bytes", "100"]);
    assert_eq!(refused.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("8192"));
}

#[test]
fn balance_demo_reads_vector_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("v.csv");
    fs::write(&csv, "# four vectors\n1,0\n-1,0\n0,1\n0,-1\n").unwrap();
    let mut bin = b"GRABVEC1".to_vec();
    bin.extend_from_slice(&4u64.to_le_bytes());
    bin.extend_from_slice(&2u64.to_le_bytes());
    for x in [1.0f64, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0] {
        bin.extend_from_slice(&x.to_le_bytes());
    }
    let binary = dir.path().join("v.bin");
    fs::write(&binary, bin).unwrap();
    let a = stdout(&grab(&[
        "balance-demo",
        "--input",
        csv.to_str().unwrap(),
        "--rounds",
        "2",
    ]));
    let b = stdout(&grab(&[
        "balance-demo",
        "--input",
        binary.to_str().unwrap(),
        "--rounds",
        "2",
    ]));
    assert_eq!(data_rows(&a), data_rows(&b));
    assert_eq!(
        data_rows(&a)
            .iter()
            .filter(|r| r.starts_with("prefix_random"))
            .count(),
        4
    );
}

#[test]
fn holdout_loss_lands_in_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("t.json");
    stdout(&grab(&[
        "train",
        "--n",
        "30",
        "--d",
        "3",
        "--epochs",
        "2",
        "--holdout",
        "10",
        "--json",
        json.to_str().unwrap(),
    ]));
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(trace["problem"]["n"], 30);
    assert!(trace["records"][1]["val_loss"].as_f64().unwrap().is_finite());
}
