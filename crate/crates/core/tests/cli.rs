use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rtrc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtrc"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env_remove("RTRC_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn simulate_writes_chunks_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = rtrc(dir.path(), &["simulate", "--set", "n_chunks=200"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let chunks = fs::read_to_string(dir.path().join("chunks.csv")).unwrap();
    assert!(chunks.contains(
        "chunk_index,policy,qp,offset,encoded_bps,channel_bps,packets_total,packets_delivered,artifact,delivered_psnr_db"
    ));
    assert_eq!(data_rows(&chunks).len(), 200);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    for key in [
        "mean_psnr_db=",
        "packet_drop_rate=",
        "chunk_success_rate=",
        "bandwidth_efficiency=",
    ] {
        assert!(summary.lines().any(|l| l.starts_with(key)), "{key} missing");
    }
}

#[test]
fn unknown_controller_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rtrc(dir.path(), &["simulate", "--set", "controller.kind=bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("controller.kind"), "{}", stderr(&out));
}

#[test]
fn unknown_key_in_config_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.config");
    fs::write(&cfg, "[channel]\nbandwith_hz = 1e6\n").unwrap();
    let out = rtrc(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("channel.bandwith_hz"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rtrc(
        dir.path(),
        &["simulate", "--config", "/nonexistent/rtrc.config"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_example_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../example.config");
    let out = rtrc(
        dir.path(),
        &["simulate", "--config", cfg, "--set", "n_chunks=100"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn sweep_cardinality_order_and_means() {
    let dir = tempfile::tempdir().unwrap();
    let out = rtrc(
        dir.path(),
        &[
            "sweep",
            "--set",
            "n_chunks=300",
            "--set",
            "sweep.policies=[\"predictor\", \"dash\"]",
            "--set",
            "sweep.grid_bps=[8e6, 2e6, 4e6]",
            "--set",
            "sweep.seeds=[3, 4]",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(sweep.contains(
        "avg_channel_bps,policy,seed,mean_psnr_db,packet_drop_rate,chunk_success_rate,bandwidth_efficiency"
    ));
    let rows: Vec<Vec<String>> = data_rows(&sweep)
        .iter()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 12);

    let grid: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(grid.windows(2).all(|w| w[0] <= w[1]), "{grid:?}");

    let means = fs::read_to_string(dir.path().join("sweep_mean.csv")).unwrap();
    let mean_rows = data_rows(&means);
    assert_eq!(mean_rows.len(), 6);
    let header: Vec<&str> = means
        .lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .split(',')
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in mean_rows {
        let f: Vec<&str> = line.split(',').collect();
        let (rate, policy) = (f[col("avg_channel_bps")], f[col("policy")]);
        let group: Vec<&Vec<String>> = rows
            .iter()
            .filter(|r| r[0] == rate && r[1] == policy)
            .collect();
        assert_eq!(group.len(), 2);
        for (i, metric) in [
            "mean_psnr_db",
            "packet_drop_rate",
            "chunk_success_rate",
            "bandwidth_efficiency",
        ]
        .iter()
        .enumerate()
        {
            let expect = group
                .iter()
                .map(|r| r[3 + i].parse::<f64>().unwrap())
                .sum::<f64>()
                / 2.0;
            let got: f64 = f[col(metric)].parse().unwrap();
            assert!(
                (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                "{metric}: {got} vs {expect}"
            );
        }
    }
}

#[test]
fn trace_round_trip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let out = rtrc(
        dir.path(),
        &[
            "gen-trace",
            "--set",
            "n_chunks=100",
            "--out",
            trace.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(data_rows(&text).len(), 100 * 52);

    let out = rtrc(dir.path(), &["validate-trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let cfg = dir.path().join("trace.config");
    fs::write(
        &cfg,
        "n_chunks = 100\n[source]\nkind = \"trace\"\ntrace_path = \"t.csv\"\n",
    )
    .unwrap();
    let out = rtrc(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn corrupted_trace_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let out = rtrc(
        dir.path(),
        &[
            "gen-trace",
            "--set",
            "n_chunks=2",
            "--out",
            trace.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let mut lines: Vec<String> = fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let target = lines
        .iter()
        .position(|l| l.starts_with("0,") && l.contains(",7,"))
        .unwrap();
    let mut fields: Vec<String> = lines[target].split(',').map(String::from).collect();
    fields[3] = "1e15".into();
    lines[target] = fields.join(",");
    fs::write(&trace, lines.join("\n") + "\n").unwrap();

    let out = rtrc(dir.path(), &["validate-trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains(&format!("line {}", target + 1)), "{msg}");
}

#[test]
fn seed_flag_and_output_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, sub: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_rtrc"))
            .args(["simulate", "--set", "n_chunks=100", "--seed", seed])
            .env("RTRC_OUTPUT_DIR", dir.path().join(sub))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        fs::read_to_string(dir.path().join(sub).join("chunks.csv")).unwrap()
    };
    let a = run("5", "a");
    let b = run("6", "b");
    let a2 = run("5", "c");
    assert!(a.contains("# override seed=5"));
    assert_eq!(a, a2);
    assert_ne!(data_rows(&a), data_rows(&b));
}
