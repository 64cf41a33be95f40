use std::process::Command;

fn dlsched() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dlsched"))
}

#[test]
fn version_prints_package_version() {
    let out = dlsched().arg("version").output().unwrap();
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        format!("dlsched {}", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn run_writes_one_header_and_one_row_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(
        &config,
        "[system]\nn_rt = 2\nn_nrt = 2\n[experiment]\npolicies = [\"algorithm1\", \"fixedp\"]\n\
         [experiment.sweep]\nparam = \"v\"\nvalues = [10, 100]\n",
    )
    .unwrap();
    let out = dlsched()
        .args(["run", "--horizon", "500", "--seed", "3", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "the sweep table is ignored by `run`");
    assert!(lines[0].starts_with("policy,sweep_param,sweep_value,replication,seed,slots_run,"));
    assert!(lines[1].starts_with("algorithm1,,,0,3,500,"));
    assert!(lines[2].starts_with("fixedp,,,0,3,500,"));
}

#[test]
fn sweep_honours_policy_filter_and_out() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    let out_path = dir.path().join("out.csv");
    std::fs::write(
        &config,
        "[system]\nhorizon_slots = 300\n[experiment]\nreplications = 2\n\
         [experiment.sweep]\nparam = \"p_avg\"\nvalues = [2, 4, 6]\n",
    )
    .unwrap();
    let status = dlsched()
        .args(["sweep", "--policy", "fixedp", "--jobs", "2", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_path)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_path).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.starts_with("fixedp,p_avg,")));
    assert!(rows[5].starts_with("fixedp,p_avg,6,1,2,300,"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\np_max = 5\np_avg = 6\n").unwrap();
    let out = dlsched()
        .args(["run", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.p_avg"));

    std::fs::write(&bad, "not toml [").unwrap();
    let out = dlsched()
        .args(["run", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = dlsched()
        .args(["run", "--policy", "roundrobin"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = dlsched()
        .args(["sweep", "--horizon", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "no sweep table");
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlsched()
        .args(["run", "--horizon", "10", "--out"])
        .arg(dir.path().join("missing").join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oracle_check_writes_per_state_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("oracle.csv");
    let out = dlsched()
        .args([
            "oracle-check",
            "--states",
            "20",
            "--grid-points",
            "60",
            "--out",
        ])
        .arg(&out_path)
        .output()
        .unwrap();
    // 0 when every state is within tolerance, 1 otherwise.
    assert!(matches!(out.status.code(), Some(0 | 1)));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("20 states,"));
    let csv = std::fs::read_to_string(out_path).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let spec = dlsched::experiment::load_config(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(spec.sweep.is_some(), "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 3);
}
