use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn sensornet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensornet"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(sensornet(&["--bogus"]).status.code(), Some(1));
    assert_eq!(sensornet(&["loops", "enum"]).status.code(), Some(1));
    let o = sensornet(&[
        "loops",
        "enum",
        "--graph",
        p(&data("five_node.txt")),
        "--source",
        "42",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("42"));
    let o = sensornet(&[
        "topo", "gen", "--n", "1", "--width", "10", "--height", "10", "--range", "5",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_succeeds() {
    let o = sensornet(&["--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("loops"));
}

#[test]
fn input_errors_exit_2_and_name_the_file() {
    let missing = tmp("no-such-scenario.scn");
    let o = sensornet(&["sim", "run", "--scenario", p(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-scenario.scn"));

    let bad = tmp("bad.scn");
    std::fs::write(
        &bad,
        format!("topology {}\nhorizon soon\n", p(&data("five_node.txt"))),
    )
    .unwrap();
    let o = sensornet(&["sim", "run", "--scenario", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));

    std::fs::write(&bad, "topology nowhere.txt\n").unwrap();
    let o = sensornet(&["sim", "run", "--scenario", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.scn"));

    let graph = tmp("bad-graph.txt");
    std::fs::write(&graph, "base 1\nedge 1 1 1\n").unwrap();
    let o = sensornet(&["loops", "enum", "--graph", p(&graph)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn all_mode_lists_every_loop_once() {
    let o = sensornet(&[
        "loops",
        "enum",
        "--graph",
        p(&data("five_node.txt")),
        "--all",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let loops = text.lines().filter(|l| l.contains("->")).count();
    assert_eq!(loops, 13);
    assert!(text.starts_with("source 1\n"));
}

#[test]
fn oracle_matches_block_search_on_five_node() {
    let graph = data("five_node.txt");
    let o = sensornet(&["loops", "oracle", "--graph", p(&graph), "--source", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 10);
}

#[test]
fn generated_topology_is_reproducible() {
    let args = [
        "topo", "gen", "--n", "25", "--width", "100", "--height", "100", "--range", "30", "--seed",
        "1",
    ];
    let a = sensornet(&args);
    assert!(a.status.success());
    assert_eq!(
        stdout(&a),
        std::fs::read_to_string(data("gen25.txt")).unwrap()
    );

    let out = tmp("gen.txt");
    let mut with_out = args.to_vec();
    with_out.extend(["--out", p(&out)]);
    let b = sensornet(&with_out);
    assert!(b.status.success() && b.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), stdout(&a));
}

#[test]
fn trace_file_analyzes_like_the_run_report() {
    let trace = tmp("partition.tsv");
    let sc = data("partition.scn");
    let run = sensornet(&["sim", "run", "--scenario", p(&sc), "--trace", p(&trace)]);
    assert!(run.status.success());
    let analyzed = sensornet(&[
        "trace",
        "analyze",
        "--trace",
        p(&trace),
        "--scenario",
        p(&sc),
    ]);
    assert!(analyzed.status.success());
    assert_eq!(stdout(&run), stdout(&analyzed));
    assert!(stdout(&run).contains("orphan_count=9\n"));

    let exact = sensornet(&[
        "trace",
        "analyze",
        "--trace",
        p(&trace),
        "--scenario",
        p(&sc),
        "--every-change",
    ]);
    assert!(stdout(&exact).contains("transient_loops=0\n"));
}

#[test]
fn truncated_trace_reports_partial() {
    let sc = data("quiet.scn");
    let full = stdout(&sensornet(&["sim", "run", "--scenario", p(&sc)]));
    let cut: String = full.lines().take(400).map(|l| format!("{l}\n")).collect();
    let path = tmp("cut.tsv");
    std::fs::write(&path, cut).unwrap();
    let o = sensornet(&[
        "trace",
        "analyze",
        "--trace",
        p(&path),
        "--scenario",
        p(&sc),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("partial=true\n"));
}

#[test]
fn seed_flag_overrides_the_scenario() {
    let sc = data("lossy.scn");
    let a = stdout(&sensornet(&[
        "sim",
        "run",
        "--scenario",
        p(&sc),
        "--seed",
        "9",
    ]));
    let b = stdout(&sensornet(&["sim", "run", "--scenario", p(&sc)]));
    assert_eq!(a, b);
}
