use std::process::{Command, Output};

fn plmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plmc")).args(args).output().unwrap()
}

#[test]
fn converge_smoke_run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.csv");
    let o = plmc(&[
        "converge", "--model", "doublewell", "--alpha", "1", "--beta", "1", "--d", "2",
        "--h", "2^-2,2^-3,2^-4", "--href", "2^-6", "--T", "1", "--traj", "200", "--seed", "42",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("ORDER,")));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PHI1="));
}

#[test]
fn verify_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        let o = plmc(&["verify", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
}

#[test]
fn corrupted_constants_fail_verify() {
    let o = plmc(&["verify", "--atilde2", "50"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mixing_worked_example() {
    let o = plmc(&["mixing", "--gamma", "1", "--d", "1", "--eps", "0.1", "--C", "1", "--Cstar", "1", "--cstar", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("h=0.05 k=60"), "{text}");
}

#[test]
fn invalid_input_exits_one() {
    assert_eq!(plmc(&["converge", "--bogus"]).status.code(), Some(1));
    assert_eq!(plmc(&["mixing", "--eps", "-1"]).status.code(), Some(1));
    assert_eq!(plmc(&["converge", "--h", "0"]).status.code(), Some(1));
}

#[test]
fn sample_dump_has_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("states.csv");
    let o = plmc(&[
        "sample", "--d", "3", "--h", "2^-4", "--T", "1", "--traj", "25", "--dump", dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&dump).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# scheme,model,d,h,N,M,seed");
    assert!(lines[1].starts_with("# PLMC,"));
    assert_eq!(lines.len(), 27);
    assert!(lines[2..].iter().all(|l| l.split(',').count() == 3));
}
