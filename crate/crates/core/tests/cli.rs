use std::path::Path;
use std::process::{Command, Output};

fn raqm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raqm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn meta_line(seed: u64) -> String {
    format!("# seed={seed} config_hash=")
}

#[test]
fn bounds_table_spot_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = raqm(&["bounds", "--eta-grid", "1,0.18"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("bounds.csv"));
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with(&meta_line(20211)));
    assert!(lines.next().unwrap().starts_with("label,mu,eta,n_min"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], &["grid", "0.5", "1", "0"]);
    assert!((row[6].parse::<f64>().unwrap() - 0.688).abs() < 5e-4);
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[3], "2");
    assert!((row[6].parse::<f64>().unwrap() - 0.761).abs() < 5e-4);
    assert_eq!(csv.lines().count(), 2 + 2 + 105);
}

#[test]
fn every_output_embeds_seed_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("prog.txt");
    std::fs::write(&prog, "write q1 7,6 0 +\nread q1 7,6 1.38\n").unwrap();
    let runs: [&[&str]; 5] = [
        &["bounds", "--seed", "11"],
        &["characterize", "--seed", "11", "--analytic"],
        &[
            "efficiency-map",
            "--seed",
            "11",
            "--efficiency-shots",
            "1000",
        ],
        &["random-access", "--seed", "11", "--shots", "200"],
        &["compile", prog.to_str().unwrap(), "--seed", "11"],
    ];
    let out = dir.path().join("out");
    for args in runs {
        let o = raqm(args, &out);
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mut hashes = Vec::new();
    for entry in std::fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        let text = read(&path);
        if path.extension().unwrap() == "csv" {
            assert!(text.starts_with(&meta_line(11)), "{}", path.display());
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["meta"]["seed"], 11, "{}", path.display());
            hashes.push(v["meta"]["config_hash"].as_str().unwrap().to_string());
        }
    }
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 1 + 6 + 2 + 2 + 1);
    assert!(hashes.iter().all(|h| h.len() == 16));
}

#[test]
fn compile_rejects_off_larmor_unless_warned() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("prog.txt");
    std::fs::write(&prog, "write q1 2,4 0 U\nread q1 2,4 2.0\n").unwrap();
    let p = prog.to_str().unwrap();

    let strict = raqm(&["compile", p], dir.path());
    assert!(!strict.status.success());
    assert!(String::from_utf8_lossy(&strict.stderr).contains("Larmor"));

    let warned = raqm(&["compile", p, "--warn-timing"], dir.path());
    assert!(warned.status.success());
    assert!(String::from_utf8_lossy(&warned.stderr).contains("warning"));
    let v: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("compiled.json"))).unwrap();
    assert_eq!(v["warnings"].as_array().unwrap().len(), 1);
    for ch in ["control_aod", "write_aod", "read_aod"] {
        assert_eq!(
            v[ch].as_array().unwrap().len(),
            if ch == "control_aod" { 2 } else { 1 }
        );
    }
    let w = &v["write_aod"][0];
    assert_eq!(
        (w["fx_mhz"].as_f64(), w["fy_mhz"].as_f64()),
        (Some(100.0), Some(101.2))
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "# bounds at a brighter source\nmu = 1.0\nseed = 5\n").unwrap();
    let c = cfg.to_str().unwrap();

    let o = raqm(&["bounds", "--config", c, "--eta-grid", "1"], dir.path());
    assert!(o.status.success());
    let csv = read(&dir.path().join("bounds.csv"));
    assert!(csv.starts_with(&meta_line(5)));
    assert!(csv.lines().nth(2).unwrap().starts_with("grid,1,1,"));

    let o = raqm(
        &["bounds", "--config", c, "--seed", "6", "--eta-grid", "1"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(read(&dir.path().join("bounds.csv")).starts_with(&meta_line(6)));

    std::fs::write(&cfg, "mu = 1.0\nunknown_key = 3\n").unwrap();
    let o = raqm(&["bounds", "--config", c], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
}

#[test]
fn efficiency_map_output_feeds_back_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = raqm(&["efficiency-map", "--analytic"], dir.path());
    assert!(o.status.success());
    let map = dir.path().join("efficiency_map.csv");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("efficiency_map_csv = {:?}\nanalytic = true\n", map),
    )
    .unwrap();
    let o = raqm(
        &["characterize", "--config", cfg.to_str().unwrap()],
        &dir.path().join("c"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("slots=105"));
}

#[test]
fn seed_changes_sampled_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(
        raqm(&["random-access", "--seed", "1", "--shots", "200"], &a)
            .status
            .success()
    );
    assert!(
        raqm(&["random-access", "--seed", "2", "--shots", "200"], &b)
            .status
            .success()
    );
    let strip = |p: &Path| {
        read(&p.join("random_access.csv"))
            .lines()
            .skip(1)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_ne!(strip(&a), strip(&b));
}
