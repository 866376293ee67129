//! Black-box tests of the `vms2d` binary: help coverage, exit codes,
//! determinism of file outputs, and config-file precedence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vms2d"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vms2d-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_mentions_every_consumed_flag() {
    let cases: &[(&[&str], &[&str])] = &[
        (
            &["--help"],
            &["--config", "--out", "--json", "--quiet", "table", "solve", "bench", "fig2"],
        ),
        (&["table", "--help"], &["--pe-max", "--step", "--modes"]),
        (
            &["solve", "--help"],
            &[
                "--n",
                "--mesh",
                "--mu",
                "--velocity",
                "--velocity-file",
                "--a1",
                "--a2",
                "--source",
                "--tau",
                "--table",
                "--direct-psi",
                "--modes",
                "--format",
            ],
        ),
        (
            &["bench", "constant", "--help"],
            &["--dirs", "--n", "--table", "--ref-factor"],
        ),
        (
            &["bench", "rotational", "--help"],
            &["--n", "--table", "--ref-factor"],
        ),
        (
            &["bench", "external", "--help"],
            &["--mesh", "--velocity", "--mu", "--source", "--table", "--ref-factor"],
        ),
        (&["fig2", "--help"], &["--p-max", "--steps", "--modes"]),
    ];
    for (args, flags) in cases {
        let out = run(args);
        assert!(out.status.success(), "{args:?} --help failed");
        let text = stdout_of(&out);
        for flag in *flags {
            assert!(text.contains(flag), "{args:?} help is missing {flag}");
        }
    }
}

#[test]
fn usage_errors_exit_with_2() {
    // clap: unknown flag
    assert_eq!(run(&["table", "--no-such-flag"]).status.code(), Some(2));
    // our own validation: spectral tau without a table source
    let out = run(&["solve", "--n", "5", "--tau", "spectral"]);
    assert_eq!(out.status.code(), Some(2));
    // bad step
    let out = run(&["table", "--step", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_4() {
    let out = run(&[
        "solve",
        "--n",
        "5",
        "--tau",
        "spectral",
        "--table",
        "/no/such/dir/psi.vmst",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(&["--config", "/no/such/config", "fig2"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn corrupt_table_exits_with_3() {
    let dir = tmp_dir("corrupt");
    let path = dir.join("bad.vmst");
    std::fs::write(&path, b"VMST garbage that is not a real table").unwrap();
    let out = run(&[
        "solve",
        "--n",
        "5",
        "--tau",
        "spectral",
        "--table",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

fn build_table(out: &Path, extra: &[&str]) {
    let mut args = vec![
        "--quiet",
        "--out",
        out.to_str().unwrap(),
        "table",
        "--pe-max",
        "2",
        "--step",
        "0.5",
        "--modes",
        "12",
    ];
    args.extend_from_slice(extra);
    let res = run(&args);
    assert!(res.status.success(), "table build failed: {res:?}");
}

#[test]
fn table_output_is_deterministic() {
    let dir = tmp_dir("det");
    let (a, b) = (dir.join("a.vmst"), dir.join("b.vmst"));
    build_table(&a, &[]);
    build_table(&b, &[]);
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!ba.is_empty());
    assert_eq!(ba, bb, "two table builds differ");
}

#[test]
fn fig2_output_is_deterministic() {
    let args = ["--quiet", "fig2", "--p-max", "4", "--steps", "8", "--modes", "12"];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout, "fig2 runs differ");
    let text = stdout_of(&first);
    assert!(text.starts_with("P,phi_over_4P,curve_Pe1,curve_Pe2"));
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tmp_dir("config");
    let cfg = dir.join("vms2d.conf");
    std::fs::write(&cfg, "# comment\npe_max = 2\nstep = 0.5\nmodes = 12\n").unwrap();

    // values from the config file alone
    let from_cfg = dir.join("from-cfg.vmst");
    let out = run(&[
        "--quiet",
        "--json",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        from_cfg.to_str().unwrap(),
        "table",
    ]);
    assert!(out.status.success());
    // [-2, 2] at step 0.5 has 9 nodes per axis
    assert!(stdout_of(&out).contains("\"n1\":9"), "{}", stdout_of(&out));

    // a flag overrides the same key
    let from_flag = dir.join("from-flag.vmst");
    let out = run(&[
        "--quiet",
        "--json",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        from_flag.to_str().unwrap(),
        "table",
        "--step",
        "0.25",
    ]);
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("\"n1\":17"), "{}", stdout_of(&out));

    // a malformed config line is a usage error
    let broken = dir.join("broken.conf");
    std::fs::write(&broken, "just words\n").unwrap();
    let out = run(&["--config", broken.to_str().unwrap(), "fig2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_csv_and_vtk() {
    let dir = tmp_dir("solve");
    let table = dir.join("psi.vmst");
    build_table(&table, &[]);

    let csv = dir.join("u.csv");
    let out = run(&[
        "--quiet",
        "--out",
        csv.to_str().unwrap(),
        "solve",
        "--n",
        "9",
        "--mu",
        "0.1",
        "--a1",
        "1",
        "--a2",
        "0.25",
        "--tau",
        "spectral",
        "--table",
        table.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "solve failed: {out:?}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,y,u"));
    assert_eq!(text.lines().count(), 82);

    let vtk = dir.join("u.vtk");
    let out = run(&[
        "--quiet",
        "--out",
        vtk.to_str().unwrap(),
        "solve",
        "--n",
        "9",
        "--tau",
        "codina",
        "--format",
        "vtk",
    ]);
    assert!(out.status.success(), "vtk solve failed: {out:?}");
    let text = std::fs::read_to_string(&vtk).unwrap();
    assert!(text.starts_with("# vtk DataFile"));
}

#[test]
fn bench_rotational_report_is_stable_json() {
    let out = run(&["--quiet", "--json", "bench", "rotational", "--n", "8", "--ref-factor", "2"]);
    assert!(out.status.success(), "bench failed: {out:?}");
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = reports.as_array().unwrap();
    assert_eq!(arr.len(), 2);
    for r in arr {
        assert_eq!(r["runtime_s"], 0.0, "stable report leaks wall-clock time");
        assert!(r["l2"].as_f64().unwrap().is_finite());
    }
}
