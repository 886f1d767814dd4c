use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 6] = [
    "--set",
    "scene.width=48",
    "--set",
    "scene.height=40",
    "--set",
    "scene.occluder_rect=[12,10,30,26]",
];

fn vmflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmflow"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn generate(dir: &Path, seed: &str) {
    let mut args = vec!["generate", "--out", dir.to_str().unwrap(), "--seed", seed];
    args.extend(SMALL);
    let out = vmflow(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{report}"))
        .parse()
        .unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&vmflow(&["--help"])), 0);
    assert_eq!(code(&vmflow(&["--version"])), 0);
    assert_eq!(code(&vmflow(&[])), 1);
    assert_eq!(code(&vmflow(&["fly"])), 1);
    assert_eq!(code(&vmflow(&["run", "--ablation", "half"])), 1);
}

#[test]
fn generate_then_run_writes_every_product() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = tmp.path().join("out");
    generate(&scene, "3");
    for f in [
        "scene.toml",
        "frame_t.ppm",
        "frame_t2.ppm",
        "events.txt",
        "cloud_t.txt",
        "gt_flow.flo",
        "gt_depth_t.pgm",
    ] {
        assert!(scene.join(f).exists(), "missing {f}");
    }
    let run = vmflow(&[
        "run",
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dump-correlation",
        "--timing",
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = stdout(&run);
    assert!(value(&text, "metrics.epe_2d") < 1.0);
    assert!(text.contains("timing.correlation: "));
    for f in [
        "report.txt",
        "report.json",
        "flow.flo",
        "flow.ppm",
        "fused_t.ppm",
        "pseudo_depth_t.pgm",
        "clusters.pgm",
        "densified.txt",
        "correlation.txt",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(fs::read(out.join("flow.ppm")).unwrap().starts_with(b"P6\n"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(json["losses"]["total"].is_f64());
    assert!(json["metrics"]["epe_2d"].is_f64());
    assert!(json["stats"]["samples"].is_u64());

    let metrics = vmflow(&[
        "metrics",
        "--pred",
        out.join("flow.flo").to_str().unwrap(),
        "--gt",
        scene.join("gt_flow.flo").to_str().unwrap(),
        "--mask",
        scene.join("gt_occlusion.pgm").to_str().unwrap(),
    ]);
    assert_eq!(code(&metrics), 0, "{}", String::from_utf8_lossy(&metrics.stderr));
    assert!(value(&stdout(&metrics), "epe") < 1.0);
}

#[test]
fn reports_are_reproducible() {
    let mut args = vec!["run", "--seed", "4", "--json"];
    args.extend(SMALL);
    let a = vmflow(&args);
    let b = vmflow(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    args[2] = "5";
    assert_ne!(vmflow(&args).stdout, a.stdout);
}

#[test]
fn metrics_of_ground_truth_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "0");
    let gt = tmp.path().join("gt_flow.flo");
    let out = vmflow(&["metrics", "--pred", gt.to_str().unwrap(), "--gt", gt.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(value(&text, "epe"), 0.0);
    assert_eq!(value(&text, "acc"), 100.0);
    let bad = vmflow(&[
        "metrics",
        "--pred",
        gt.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
        "--threshold",
        "0",
    ]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn loss_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), "1");
    let scene = tmp.path().to_str().unwrap();
    for name in ["total", "photometric", "consistency", "pseudo_label", "alignment"] {
        let out = vmflow(&["loss", "--scene", scene, "--name", name]);
        assert_eq!(code(&out), 0, "{name}");
        assert!(value(&stdout(&out), name).is_finite());
    }
    assert_eq!(code(&vmflow(&["loss", "--scene", scene, "--name", "adversarial"])), 1);
    assert_eq!(code(&vmflow(&["loss", "--scene", scene, "--name", "nonsense"])), 1);

    let manifest = tmp.path().join("scene.toml");
    let mut text = fs::read_to_string(&manifest).unwrap();
    text.push_str("\n[discriminator]\nt = [0.6, 0.7]\nt2 = [0.8, 0.5]\n");
    fs::write(&manifest, text).unwrap();
    let out = vmflow(&["loss", "--scene", scene, "--name", "adversarial"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let expect = [0.6f64, 0.7, 0.8, 0.5].iter().map(|d| (1.0 - d).ln()).sum::<f64>() / 4.0;
    assert!((value(&stdout(&out), "adversarial") - expect).abs() < 1e-12);

    let text = fs::read_to_string(&manifest).unwrap().replace("0.8, 0.5", "1.5, 0.5");
    fs::write(&manifest, text).unwrap();
    assert_eq!(code(&vmflow(&["loss", "--scene", scene, "--name", "adversarial"])), 1);
}

#[test]
fn gradcheck_subcommand() {
    let out = vmflow(&[
        "gradcheck",
        "--loss",
        "alignment",
        "--loss",
        "pseudo_label",
        "--seeds",
        "3",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
    assert_eq!(code(&vmflow(&["gradcheck", "--loss", "nope"])), 1);
}

#[test]
fn numerical_failures_exit_with_two() {
    let mut args = vec!["run", "--set", "motion.tau=5e-324"];
    args.extend(SMALL);
    let out = vmflow(&args);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn bad_configuration_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[motion]\ntau = \"warm\"\n").unwrap();
    for args in [
        vec!["run", "--config", cfg.to_str().unwrap()],
        vec!["run", "--config", "/definitely/missing.toml"],
        vec!["run", "--set", "structure.k=0"],
        vec!["run", "--set", "no_equals_sign"],
        vec!["run", "--scene", "/definitely/missing"],
        vec!["run", "--dump-correlation"],
        vec!["generate", "--out", "/proc/forbidden/x"],
    ] {
        let out = vmflow(&args);
        assert_eq!(code(&out), 1, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}
