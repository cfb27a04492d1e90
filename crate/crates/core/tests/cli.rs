use std::fs;

use csma_gicn::cli::run_cli;
use csma_gicn::report::{emit_report, Format, ReportRow, CSV_HEADER};
use csma_gicn::DEFAULT_RATE_MBPS;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli(
        std::iter::once("csma-gicn").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn csv_field(line: &str, column: &str) -> f64 {
    let k = CSV_HEADER.split(',').position(|c| c == column).unwrap();
    line.split(',').nth(k).unwrap().parse().unwrap()
}

#[test]
fn csv_header_is_stable() {
    let golden = include_str!("golden/analyze_two_link.csv");
    assert_eq!(golden.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(
        CSV_HEADER,
        "topology,link,icn_norm,icn_mbps,gicn_norm,gicn_mbps,exact_norm,sim_norm,sim_ci,gicn_pcol,sim_pcol,sim_pcol_ci"
    );
}

#[test]
fn analyze_fig1_gicn() {
    let r = cli(&[
        "analyze",
        "--topology",
        "fig1",
        "--model",
        "gicn",
        "--format",
        "csv",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows: Vec<&str> = r.stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let want = [
        (0.7807, 0.0056),
        (0.0606, 0.1709),
        (0.4093, 0.07),
        (0.4093, 0.07),
    ];
    for (line, (th, p)) in rows.iter().zip(want) {
        assert!((csv_field(line, "gicn_norm") - th).abs() < 5e-4, "{line}");
        assert!((csv_field(line, "gicn_pcol") - p).abs() < 5e-4, "{line}");
        assert!(line.contains(",,"), "other models stay empty: {line}");
    }
}

#[test]
fn analyze_two_link_csv_values() {
    let r = cli(&["analyze", "--topology", "two-link", "--format", "csv"]);
    assert_eq!(r.code, 0);
    let line = r.stdout.lines().nth(1).unwrap();
    assert!(line.starts_with("two-link,1,0.457300,"));
    assert!(line.contains("0.441831"));
    assert!(line.contains("0.060606"));
}

#[test]
fn rendered_mbps_is_normalized_times_rate() {
    let r = cli(&[
        "analyze",
        "--topology",
        "chain4",
        "--rate-mbps",
        "11",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 0);
    let rows: Vec<ReportRow> = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(rows[0].rate_mbps, 11.0);
    for l in &rows[0].links {
        assert!((l.icn_mbps.unwrap() - 11.0 * l.icn_norm.unwrap()).abs() < 1e-9);
        assert!((l.gicn_mbps.unwrap() - 11.0 * l.gicn_norm.unwrap()).abs() < 1e-9);
        assert!((l.exact_mbps.unwrap() - 11.0 * l.exact_norm.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn json_round_trips() {
    let r = cli(&[
        "compare",
        "--topology",
        "triangle",
        "--slots",
        "100000",
        "--reps",
        "2",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows: Vec<ReportRow> = serde_json::from_str(&r.stdout).unwrap();
    let mut again = Vec::new();
    emit_report(&rows, Format::Json, &mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), r.stdout);
    let reparsed: Vec<ReportRow> = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(reparsed, rows);
}

#[test]
fn compare_prints_analytics_before_the_combined_table() {
    let r = cli(&[
        "compare",
        "--topology",
        "two-link",
        "--slots",
        "200000",
        "--seed",
        "1",
    ]);
    assert_eq!(r.code, 0);
    let headers: Vec<&str> = r
        .stdout
        .lines()
        .filter(|l| l.starts_with("topology"))
        .collect();
    assert_eq!(headers.len(), 2);
    assert!(!headers[0].contains("sim"));
    for col in ["ICN Mbps", "GICN Mbps", "exact Mbps", "sim Mbps"] {
        assert!(headers[1].contains(col), "{col}");
    }
}

#[test]
fn compare_csv_keeps_stdout_parseable() {
    let r = cli(&[
        "compare",
        "--topology",
        "two-link",
        "--slots",
        "100000",
        "--format",
        "csv",
    ]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.starts_with(CSV_HEADER));
    assert_eq!(r.stdout.lines().count(), 3);
    assert!(r.stderr.contains("GICN Mbps"));
}

#[test]
fn commands_are_deterministic() {
    let args = [
        "simulate",
        "--topology",
        "star3",
        "--slots",
        "200000",
        "--seed",
        "7",
        "--reps",
        "3",
        "--beb",
        "--format",
        "csv",
    ];
    let a = cli(&args);
    let b = cli(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    let c = cli(&[
        "simulate",
        "--topology",
        "star3",
        "--slots",
        "200000",
        "--seed",
        "8",
        "--reps",
        "3",
        "--beb",
        "--format",
        "csv",
    ]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn graph_file_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("ring.txt");
    fs::write(
        &graph,
        "# four links in a ring\nlinks: a b c d\nedge: a b\nedge: b c\nedge: c d\nedge: d a\n",
    )
    .unwrap();
    let out = dir.path().join("report.csv");
    let r = cli(&[
        "analyze",
        "--graph",
        graph.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.is_empty());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("ring,a,"));
    // The ring is vertex-transitive: every link gets the same share.
    let first = csv_field(lines[1], "gicn_norm");
    for line in &lines[2..] {
        assert_eq!(csv_field(line, "gicn_norm"), first);
    }
}

#[test]
fn rho_override() {
    let r = cli(&[
        "analyze",
        "--topology",
        "two-link",
        "--model",
        "icn",
        "--rho",
        "2",
        "--format",
        "csv",
    ]);
    assert_eq!(r.code, 0);
    let th = csv_field(r.stdout.lines().nth(1).unwrap(), "icn_norm");
    assert!((th - 0.4).abs() < 1e-6);
}

#[test]
fn input_errors_exit_1() {
    let cases: [(&[&str], &str); 9] = [
        (
            &["simulate", "--topology", "fig1", "--rate-mbps", "-3"],
            "--rate-mbps",
        ),
        (&["analyze", "--graph", "missing.txt"], "missing.txt"),
        (&["analyze", "--topology", "pentagon"], "--topology"),
        (&["analyze", "--topology", "fig1", "--cw", "abc"], "--cw"),
        (&["analyze", "--topology", "fig1", "--cw", "0"], "--cw"),
        (&["analyze", "--topology", "fig1", "--rho", "-1"], "--rho"),
        (
            &["analyze", "--topology", "fig1", "--rho", "2", "--ttx", "10"],
            "--rho",
        ),
        (
            &[
                "simulate",
                "--topology",
                "fig1",
                "--slots",
                "100",
                "--warmup",
                "100",
            ],
            "--warmup",
        ),
        (&["analyze"], "--graph"),
    ];
    for (args, needle) in cases {
        let r = cli(args);
        assert_eq!(r.code, 1, "{args:?}");
        assert!(r.stderr.contains(needle), "{args:?}: {}", r.stderr);
    }
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "links: 1 2\nedge: 1 3\n").unwrap();
    let r = cli(&["analyze", "--graph", bad.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("graph"));
}

#[test]
fn state_space_limit_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.txt");
    let ids: Vec<String> = (0..30).map(|i| format!("l{i}")).collect();
    fs::write(&path, format!("links: {}\n", ids.join(" "))).unwrap();
    let r = cli(&[
        "analyze",
        "--graph",
        path.to_str().unwrap(),
        "--model",
        "gicn",
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);

    // Small enough to enumerate, too many states for the dense chain solver.
    let ids: Vec<String> = (0..17).map(|i| format!("l{i}")).collect();
    fs::write(&path, format!("links: {}\n", ids.join(" "))).unwrap();
    let r = cli(&[
        "analyze",
        "--graph",
        path.to_str().unwrap(),
        "--model",
        "exact",
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("exact model"));
    let r = cli(&[
        "analyze",
        "--graph",
        path.to_str().unwrap(),
        "--model",
        "gicn",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(cli(&["--help"]).code, 0);
    assert_eq!(cli(&["--version"]).code, 0);
    assert!(cli(&["bench", "--help"]).stdout.contains("--slots"));
}

#[test]
fn bench_analytics_match_reference_table() {
    let r = cli(&[
        "bench", "--slots", "20000", "--reps", "2", "--format", "json",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows: Vec<ReportRow> = serde_json::from_str(&r.stdout).unwrap();
    let icn: [&[f64]; 6] = [
        &[3.3058, 3.3058],
        &[2.2684, 2.2684, 2.2684],
        &[5.3782, 0.8463, 5.3782],
        &[4.1799, 2.2684, 2.2684, 4.1799],
        &[5.6825, 0.4853, 3.0839, 3.0839],
        &[0.1478, 5.9669, 5.9669, 5.9669],
    ];
    let gicn: [&[f64]; 6] = [
        &[3.20, 3.20],
        &[2.12, 2.12, 2.12],
        &[5.3306, 0.788, 5.3306],
        &[4.1145, 2.1575, 2.1565, 4.1145],
        &[5.6434, 0.4375, 2.9592, 2.9592],
        &[0.1302, 5.9576, 5.9576, 5.9576],
    ];
    assert_eq!(rows.len(), 6);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row.rate_mbps, DEFAULT_RATE_MBPS);
        for (i, l) in row.links.iter().enumerate() {
            assert!(
                (l.icn_mbps.unwrap() - icn[k][i]).abs() <= 0.01,
                "{} {i} icn",
                row.topology
            );
            assert!(
                (l.gicn_mbps.unwrap() - gicn[k][i]).abs() <= 0.01,
                "{} {i} gicn",
                row.topology
            );
            assert!(l.sim_norm.is_some() && l.sim_ci.is_some());
        }
    }
}
