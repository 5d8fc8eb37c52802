//! End-to-end tests of the `blast` binary: file formats, exit codes,
//! determinism and the documented behavior of each subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blast_cli::formats;
use blast_linalg::ImageFrame;

static HEAVY: std::sync::Mutex<()> = std::sync::Mutex::new(());

fn blast() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blast"))
}

fn run(args: &[&str]) -> Output {
    blast().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tmpdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let out_dir = dir.join("sim");
    let mut args = vec![
        "simulate",
        "--scenario",
        "intensity",
        "--out-dir",
        path_str(&out_dir),
        "--size",
        "10x10",
        "--t",
        "24",
        "--change-time",
        "12",
        "--n-reference",
        "8",
        "--seed",
        "5",
    ];
    args.extend_from_slice(extra);
    let out = blast().args(&args).output().unwrap();
    assert_ok(&out);
    out_dir
}

#[test]
fn simulate_writes_bundle_and_manifest() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    for file in ["references.bimg", "stream.bimg", "truth_pre.bimg", "truth_post.bimg"] {
        assert!(sim.join(file).exists(), "{file} missing");
    }
    let manifest = fs::read_to_string(sim.join("manifest.txt")).unwrap();
    assert!(manifest.contains("scenario = intensity"));
    assert!(manifest.contains("seed = 5"));
    assert!(manifest.contains("size = 10x10"));

    let refs = formats::read_frames(sim.join("references.bimg")).unwrap();
    assert_eq!(refs.len(), 8);
    let stream = formats::read_frames(sim.join("stream.bimg")).unwrap();
    assert_eq!(stream.len(), 24);
    assert_eq!(stream[0].rows(), 10);
}

#[test]
fn simulate_zero_noise_stream_equals_truth() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &["--noise-sd", "0"]);
    let stream = formats::read_frames(sim.join("stream.bimg")).unwrap();
    let pre = &formats::read_frames(sim.join("truth_pre.bimg")).unwrap()[0];
    let post = &formats::read_frames(sim.join("truth_post.bimg")).unwrap()[0];
    for (idx, frame) in stream.iter().enumerate() {
        let truth = if idx + 1 < 12 { pre } else { post };
        // Frames round-trip through f32 storage; compare at that precision.
        for (a, b) in frame.as_slice().iter().zip(truth.as_slice()) {
            assert!((a - b).abs() < 1e-6, "frame {idx}");
        }
    }
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = tmpdir();
    let a = simulate(dir.path(), &[]);
    let b_dir = dir.path().join("again");
    fs::create_dir(&b_dir).unwrap();
    let b = simulate(&b_dir, &[]);
    for file in ["references.bimg", "stream.bimg", "truth_pre.bimg", "truth_post.bimg"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs between identical-seed runs"
        );
    }
}

#[test]
fn custom_scenario_round_trips_user_images() {
    let dir = tmpdir();
    let pre = ImageFrame::from_fn(6, 7, |i, j| (i * 7 + j) as f64 * 0.1);
    let post = pre.map(|v| v + 1.0);
    let pre_path = dir.path().join("pre.bimg");
    let post_path = dir.path().join("post.bimg");
    formats::write_frames(&pre_path, &[pre]).unwrap();
    formats::write_frames(&post_path, &[post]).unwrap();

    let out_dir = dir.path().join("custom");
    let out = run(&[
        "simulate",
        "--scenario",
        "custom",
        "--pre",
        path_str(&pre_path),
        "--post",
        path_str(&post_path),
        "--out-dir",
        path_str(&out_dir),
        "--t",
        "10",
        "--change-time",
        "5",
        "--n-reference",
        "4",
    ]);
    assert_ok(&out);
    let stream = formats::read_frames(out_dir.join("stream.bimg")).unwrap();
    assert_eq!(stream[0].rows(), 6);
    assert_eq!(stream[0].cols(), 7);
}

#[test]
fn elicit_is_byte_identical_per_seed_and_supports_smoke_path() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    let refs = sim.join("references.bimg");

    let p1 = dir.path().join("a.bpri");
    let p2 = dir.path().join("b.bpri");
    for p in [&p1, &p2] {
        let out = run(&[
            "elicit",
            "--refs",
            path_str(&refs),
            "--layers",
            "2",
            "--filter",
            "seq",
            "--iters",
            "60",
            "--seed",
            "3",
            "--out",
            path_str(p),
        ]);
        assert_ok(&out);
    }
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());

    // Initialization-only smoke path.
    let p0 = dir.path().join("init.bpri");
    let out = run(&[
        "elicit",
        "--refs",
        path_str(&refs),
        "--iters",
        "0",
        "--seed",
        "3",
        "--out",
        path_str(&p0),
    ]);
    assert_ok(&out);
    assert!(matches!(
        formats::read_prior(&p0).unwrap(),
        formats::LoadedPrior::Structured { .. }
    ));

    // Diagonal prior path.
    let pd = dir.path().join("diag.bpri");
    let out = run(&["elicit", "--refs", path_str(&refs), "--diagonal", "--out", path_str(&pd)]);
    assert_ok(&out);
    assert!(matches!(
        formats::read_prior(&pd).unwrap(),
        formats::LoadedPrior::Diagonal(_)
    ));
}

#[test]
fn prior_files_round_trip_losslessly() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    let prior_path = dir.path().join("prior.bpri");
    let out = run(&[
        "elicit",
        "--refs",
        path_str(&sim.join("references.bimg")),
        "--iters",
        "40",
        "--seed",
        "9",
        "--out",
        path_str(&prior_path),
    ]);
    assert_ok(&out);

    let loaded = formats::read_prior(&prior_path).unwrap();
    let formats::LoadedPrior::Structured { rows, cols, mu0, basis, gamma2, provenance } = &loaded
    else {
        panic!("expected structured prior");
    };
    assert_eq!((*rows, *cols), (10, 10));
    assert_eq!(provenance.seed, 9);
    assert!(*gamma2 > 0.0);

    // Re-serialize through the library and compare bytes.
    let rebuilt = blast_dgmrf::ElicitedPrior::from_parts(
        *rows,
        *cols,
        mu0.clone(),
        blast_linalg::SparseSym::from_dense(&basis.reconstruct()).unwrap(),
        basis.clone(),
        *gamma2,
        *provenance,
    )
    .unwrap();
    let copy_path = dir.path().join("copy.bpri");
    formats::write_structured_prior(&copy_path, &rebuilt).unwrap();
    assert_eq!(fs::read(&prior_path).unwrap(), fs::read(&copy_path).unwrap());
}

#[test]
fn truncated_prior_file_is_rejected() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    let prior_path = dir.path().join("prior.bpri");
    assert_ok(&run(&[
        "elicit",
        "--refs",
        path_str(&sim.join("references.bimg")),
        "--iters",
        "5",
        "--out",
        path_str(&prior_path),
    ]));
    let mut bytes = fs::read(&prior_path).unwrap();
    bytes.push(0); // trailing byte
    let bad = dir.path().join("bad.bpri");
    fs::write(&bad, &bytes).unwrap();
    assert!(formats::read_prior(&bad).is_err());
    bytes.truncate(bytes.len() - 10);
    fs::write(&bad, &bytes).unwrap();
    assert!(formats::read_prior(&bad).is_err());
}

#[test]
fn detect_single_frame_stream_yields_trivial_posterior() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    let prior_path = dir.path().join("prior.bpri");
    assert_ok(&run(&[
        "elicit",
        "--refs",
        path_str(&sim.join("references.bimg")),
        "--iters",
        "30",
        "--out",
        path_str(&prior_path),
    ]));

    // One-frame stream.
    let stream = formats::read_frames(sim.join("stream.bimg")).unwrap();
    let single = dir.path().join("single.bimg");
    formats::write_frames(&single, &stream[..1]).unwrap();

    let csv = dir.path().join("post.csv");
    let out = run(&[
        "detect",
        "--prior",
        path_str(&prior_path),
        "--stream",
        path_str(&single),
        "--out",
        path_str(&csv),
    ]);
    assert_ok(&out);
    let body = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines, vec!["t,r,prob", "1,0,1"]);
    let map_body = fs::read_to_string(dir.path().join("post_map.csv")).unwrap();
    assert_eq!(map_body.lines().collect::<Vec<_>>(), vec!["t,map,alarm", "1,0,false"]);
}

#[test]
fn detect_posterior_rows_sum_to_one_with_tail_bound() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    let prior_path = dir.path().join("prior.bpri");
    assert_ok(&run(&[
        "elicit",
        "--refs",
        path_str(&sim.join("references.bimg")),
        "--iters",
        "150",
        "--out",
        path_str(&prior_path),
    ]));
    let csv = dir.path().join("post.csv");
    assert_ok(&run(&[
        "detect",
        "--prior",
        path_str(&prior_path),
        "--stream",
        path_str(&sim.join("stream.bimg")),
        "--sigma2",
        "1.0",
        "--out",
        path_str(&csv),
    ]));

    // Group rows by t; the written mass plus the dropped-row bound must
    // cover 1 within 1e-9.
    let body = fs::read_to_string(&csv).unwrap();
    let mut sums = std::collections::BTreeMap::<usize, (f64, usize)>::new();
    for line in body.lines().skip(1) {
        let mut parts = line.split(',');
        let t: usize = parts.next().unwrap().parse().unwrap();
        let _r: usize = parts.next().unwrap().parse().unwrap();
        let prob: f64 = parts.next().unwrap().parse().unwrap();
        let entry = sums.entry(t).or_insert((0.0, 0));
        entry.0 += prob;
        entry.1 += 1;
    }
    for (t, (sum, rows)) in sums {
        let support = t.min(200 + 1); // truncation default 200
        let dropped = support - rows;
        let tail_bound = dropped as f64 * 1e-10;
        assert!(
            sum <= 1.0 + 1e-9 && sum + tail_bound >= 1.0 - 1e-9,
            "t = {t}: sum {sum}, rows {rows}"
        );
    }
}

#[test]
fn detect_map_increases_after_burn_in_without_change() {
    let dir = tmpdir();
    // High-SNR no-change stream: change at the last step, tiny noise.
    let sim_dir = dir.path().join("sim");
    assert_ok(&run(&[
        "simulate",
        "--scenario",
        "intensity",
        "--out-dir",
        path_str(&sim_dir),
        "--size",
        "10x10",
        "--t",
        "30",
        "--change-time",
        "30",
        "--noise-sd",
        "0.3",
        "--n-reference",
        "8",
        "--seed",
        "11",
    ]));
    let prior_path = dir.path().join("prior.bpri");
    assert_ok(&run(&[
        "elicit",
        "--refs",
        path_str(&sim_dir.join("references.bimg")),
        "--iters",
        "200",
        "--out",
        path_str(&prior_path),
    ]));
    let csv = dir.path().join("post.csv");
    assert_ok(&run(&[
        "detect",
        "--prior",
        path_str(&prior_path),
        "--stream",
        path_str(&sim_dir.join("stream.bimg")),
        "--sigma2",
        "0.09",
        "--out",
        path_str(&csv),
    ]));
    let map_body = fs::read_to_string(dir.path().join("post_map.csv")).unwrap();
    let maps: Vec<usize> = map_body
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // Strictly increasing after burn-in, up to the pre-change horizon.
    for t in 10..29 {
        assert!(
            maps[t] > maps[t - 1],
            "MAP not increasing at t = {}: {:?}",
            t + 1,
            &maps[t - 1..=t]
        );
    }
}

#[test]
fn detect_rejects_dimension_mismatch_with_exit_2() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    let prior_path = dir.path().join("prior.bpri");
    assert_ok(&run(&[
        "elicit",
        "--refs",
        path_str(&sim.join("references.bimg")),
        "--iters",
        "5",
        "--out",
        path_str(&prior_path),
    ]));
    // A 6x6 stream against the 10x10 prior.
    let other = dir.path().join("other.bimg");
    formats::write_frames(&other, &[ImageFrame::zeros(6, 6)]).unwrap();
    let out = run(&[
        "detect",
        "--prior",
        path_str(&prior_path),
        "--stream",
        path_str(&other),
        "--out",
        path_str(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_inputs_exit_2() {
    let out = run(&["elicit", "--refs", "/nonexistent.bimg", "--out", "/tmp/x.bpri"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["detect", "--prior", "/nonexistent.bpri", "--stream", "/nonexistent.bimg", "--out", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate", "--scenario", "warp", "--out-dir", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_is_byte_identical_across_runs_single_threaded() {
    let dir = tmpdir();
    let sim = simulate(dir.path(), &[]);
    let prior_path = dir.path().join("prior.bpri");
    assert_ok(&run(&[
        "elicit",
        "--refs",
        path_str(&sim.join("references.bimg")),
        "--iters",
        "60",
        "--out",
        path_str(&prior_path),
    ]));
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        let out = blast()
            .env("BLAST_THREADS", "1")
            .args([
                "detect",
                "--prior",
                path_str(&prior_path),
                "--stream",
                path_str(&sim.join("stream.bimg")),
                "--out",
                path_str(&csv),
            ])
            .output()
            .unwrap();
        assert_ok(&out);
        outputs.push((fs::read(&csv).unwrap(), fs::read(dir.path().join(format!("{}_map.csv", name.trim_end_matches(".csv")))).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn compare_single_method_single_replicate() {
    let dir = tmpdir();
    let csv = dir.path().join("cmp.csv");
    let out = run(&[
        "compare",
        "--scenario",
        "intensity",
        "--methods",
        "blast",
        "--replicates",
        "1",
        "--size",
        "12x12",
        "--t",
        "30",
        "--change-time",
        "15",
        "--n-reference",
        "10",
        "--iters",
        "150",
        "--seed",
        "2",
        "--out",
        path_str(&csv),
    ]);
    assert_ok(&out);
    let body = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 2, "header plus one row: {body}");
    assert!(lines[1].starts_with("0,blast,"));
    assert!(lines[1].ends_with(",ok"));
}

#[test]
fn bench_reports_setup_only_with_zero_steps() {
    let out = run(&["bench", "--sizes", "8x8,10x10", "--steps", "0"]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("setup"));
    assert!(!stdout.contains("slope"), "no slope without per-step timings");
}

#[test]
fn bench_per_step_time_grows_sublinearly_in_truncation() {
    // At fixed size the per-step cost is O(p^2 + R p): an 8x larger R must
    // grow time far slower than 8x (at 24x24 the projection dominates, so
    // the expected ratio is near 1).
    let _gate = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let t_small = time_bench(25);
    let t_large = time_bench(200);
    let ratio = t_large / t_small;
    assert!(ratio < 4.0, "8x R gave {ratio:.1}x per-step time");
}

fn time_bench(truncation: usize) -> f64 {
    let out = run(&[
        "bench",
        "--sizes",
        "24x24",
        "--steps",
        "250",
        "--truncation",
        &truncation.to_string(),
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    // Parse the per-step duration from the table row.
    let row = stdout.lines().find(|l| l.starts_with("24x24")).expect("bench row");
    let per_step = row.split_whitespace().last().unwrap();
    parse_duration_secs(per_step)
}

fn parse_duration_secs(s: &str) -> f64 {
    if let Some(v) = s.strip_suffix("ms") {
        v.parse::<f64>().unwrap() * 1e-3
    } else if let Some(v) = s.strip_suffix("µs") {
        v.parse::<f64>().unwrap() * 1e-6
    } else if let Some(v) = s.strip_suffix("ns") {
        v.parse::<f64>().unwrap() * 1e-9
    } else {
        s.strip_suffix('s').unwrap().parse::<f64>().unwrap()
    }
}

#[test]
fn detect_alarms_shortly_after_the_change() {
    // Full pipeline through the binary on a paper-scale scenario: the alarm
    // column must first turn true within 5 steps of the change at t = 50
    // and never before it.
    let _gate = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tmpdir();
    let sim = dir.path().join("sim");
    assert_ok(&run(&[
        "simulate", "--scenario", "edge", "--out-dir", path_str(&sim), "--seed", "14",
    ]));
    let prior = dir.path().join("prior.bpri");
    assert_ok(&run(&[
        "elicit",
        "--refs",
        path_str(&sim.join("references.bimg")),
        "--iters",
        "2500",
        "--seed",
        "14",
        "--out",
        path_str(&prior),
    ]));
    let csv = dir.path().join("post.csv");
    let out = run(&[
        "detect",
        "--prior",
        path_str(&prior),
        "--stream",
        path_str(&sim.join("stream.bimg")),
        "--sigma2",
        "1.0",
        "--out",
        path_str(&csv),
    ]);
    assert_ok(&out);
    let map_body = fs::read_to_string(dir.path().join("post_map.csv")).unwrap();
    let alarms: Vec<usize> = map_body
        .lines()
        .skip(1)
        .filter(|l| l.ends_with("true"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let first = *alarms.first().expect("change must be detected");
    assert!((50..=55).contains(&first), "first alarm at t = {first}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("first alarm at t = {first}")));
}

#[test]
fn compare_is_deterministic_across_runs() {
    let _gate = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tmpdir();
    let mut bodies = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        let out = blast()
            .env("BLAST_THREADS", "2")
            .args([
                "compare", "--scenario", "spatial", "--methods", "blast,unblast",
                "--replicates", "2", "--size", "12x12", "--t", "24", "--change-time", "12",
                "--n-reference", "8", "--iters", "120", "--seed", "6",
                "--out", path_str(&csv),
            ])
            .output()
            .unwrap();
        assert_ok(&out);
        bodies.push(fs::read(&csv).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}
