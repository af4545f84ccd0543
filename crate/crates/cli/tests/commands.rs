use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lumaproxy_cli::output::RunManifest;
use lumaproxy_core::camera::{CameraPose, CameraTrajectory, Intrinsics};
use lumaproxy_core::envlight::{procedural_sky, save_envmap, EnvMap};
use lumaproxy_core::eval::{save_mask_png, EvalReport};
use lumaproxy_core::render::read_lpxy;
use nalgebra::Point3;

const PROMPT: &str =
    "scene: a red vase; a wooden table; vase on_top_of table | lighting: warm sunset | camera: orbit span=30 radius=2";

fn lumaproxy(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lumaproxy"));
    cmd.args(args).env_remove("LIVER_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_run(out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut args = vec![
        "run",
        "--text",
        PROMPT,
        "--width",
        "32",
        "--height",
        "32",
        "--frames",
        "2",
        "--spp",
        "4",
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    lumaproxy(&args, env)
}

fn output_hashes(dir: &Path) -> Vec<(String, String)> {
    let m = RunManifest::load(dir).unwrap();
    m.outputs.into_iter().map(|e| (e.path, e.sha256)).collect()
}

#[test]
fn run_writes_a_verifiable_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    ok(&small_run(&out, &["--threads", "2"], &[]));
    let m = RunManifest::load(&out).unwrap();
    m.verify(&out).unwrap();
    assert_eq!(m.command, "run");
    assert_eq!(m.proxy.len(), 1);
    let p = &m.proxy[0];
    assert_eq!((p.frames, p.channels, p.height, p.width), (2, 9, 32, 32));
    for (k, rel) in p.files.iter().enumerate() {
        let frame = read_lpxy(&std::fs::read(out.join(rel)).unwrap()).unwrap();
        assert_eq!(frame.index as usize, k);
        assert!(frame.planes.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
    for name in ["scene.json", "traj.txt", "env.lenv", "rotation.json", "caption.txt"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert!(out.join("preview/frame_00001_ggx2.png").is_file());
    assert_eq!(std::fs::read_to_string(out.join("caption.txt")).unwrap().trim(), PROMPT);
    assert!(m.inputs.keys().any(|k| k.starts_with("asset:")));
    assert!(m.inputs.contains_key("prompt"));
}

#[test]
fn reruns_and_thread_counts_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&small_run(&a, &["--threads", "1"], &[]));
    ok(&small_run(&b, &["--threads", "8"], &[]));
    ok(&small_run(&c, &["--threads", "3"], &[("LIVER_THREADS", "5")]));
    assert_eq!(output_hashes(&a), output_hashes(&b));
    assert_eq!(output_hashes(&a), output_hashes(&c));

    let d = tmp.path().join("d");
    ok(&small_run(&d, &["--seed", "9"], &[]));
    assert_ne!(output_hashes(&a), output_hashes(&d));
}

#[test]
fn parse_errors_exit_3_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let res = lumaproxy(
        &["run", "--text", "scene: a vase | camera: zoom", "--out", s(&out)],
        &[],
    );
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("parse_prompt"), "{err}");
    assert!(!out.exists());

    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, "frames = \"four\"\n").unwrap();
    let res = lumaproxy(&["run", "--text", PROMPT, "--config", s(&cfg), "--out", s(&out)], &[]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(lumaproxy(&["run", "--out", s(&out)], &[]).status.code(), Some(2));
    assert_eq!(lumaproxy(&["frobnicate"], &[]).status.code(), Some(2));
    let res = small_run(&out, &[], &[("LIVER_THREADS", "zero")]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(lumaproxy(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_4_and_roll_back() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rt");
    // Parses, but there are no frames to plan.
    let res = lumaproxy(
        &[
            "run",
            "--text",
            PROMPT,
            "--frames",
            "0",
            "--width",
            "16",
            "--height",
            "16",
            "--out",
            s(&out),
        ],
        &[],
    );
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    let left: Vec<_> = std::fs::read_dir(&out).map(|d| d.collect()).unwrap_or_default();
    assert!(left.is_empty());
}

#[test]
fn stepwise_commands_match_run() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let size = ["--width", "32", "--height", "32", "--frames", "2", "--spp", "4"];

    let scene_dir = root.join("scene");
    ok(&lumaproxy(
        &["build-scene", "--text", PROMPT, "--out", s(&scene_dir)],
        &[],
    ));
    let scene = scene_dir.join("scene.json");

    let cam_dir = root.join("cam");
    let mut args = vec![
        "plan-camera",
        "--scene",
        s(&scene),
        "--text",
        PROMPT,
        "--out",
        s(&cam_dir),
    ];
    args.extend_from_slice(&size);
    ok(&lumaproxy(&args, &[]));

    let sky_dir = root.join("sky");
    ok(&lumaproxy(&["env", "sky", "--out", s(&sky_dir)], &[]));

    let proxy_dir = root.join("proxy");
    let traj = cam_dir.join("traj.txt");
    let sky = sky_dir.join("sky.lenv");
    let args = [
        "render-proxy",
        "--scene",
        s(&scene),
        "--traj",
        s(&traj),
        "--env",
        s(&sky),
        "--spp",
        "4",
        "--out",
        s(&proxy_dir),
    ];
    ok(&lumaproxy(&args, &[]));

    let run_dir = root.join("run");
    let mut args = vec!["run", "--text", PROMPT, "--out", s(&run_dir)];
    args.extend_from_slice(&size);
    let cfg = root.join("cfg.json");
    std::fs::write(&cfg, r#"{"procedural_env": true}"#).unwrap();
    args.extend_from_slice(&["--config", s(&cfg)]);
    ok(&lumaproxy(&args, &[]));

    for name in [
        "scene.json",
        "traj.txt",
        "env.lenv",
        "proxy/frame_00000.lpxy",
        "proxy/frame_00001.lpxy",
    ] {
        assert_eq!(
            std::fs::read(proxy_dir.join(name)).unwrap(),
            std::fs::read(run_dir.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn env_tools() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let sky = root.join("sky");
    ok(&lumaproxy(&["env", "sky", "--height", "8", "--out", s(&sky)], &[]));
    let rot = root.join("rot");
    let input = sky.join("sky.lenv");
    ok(&lumaproxy(
        &["env", "rotate", "--input", s(&input), "--yaw", "-90", "--out", s(&rot)],
        &[],
    ));
    assert!(rot.join("rotated.lenv").is_file());

    let index = root.join("index.json");
    std::fs::write(
        &index,
        r#"{"dusk": {"file": "dusk.lenv", "tags": ["warm", "sunset"]},
            "noon": {"file": "noon.lenv", "tags": ["noon", "bright"]}}"#,
    )
    .unwrap();
    let sel = root.join("sel");
    let res = lumaproxy(
        &[
            "env",
            "select",
            "--index",
            s(&index),
            "--tags",
            "warm,sunset",
            "--out",
            s(&sel),
        ],
        &[],
    );
    ok(&res);
    assert!(String::from_utf8_lossy(&res.stdout).contains("\"dusk\""));
    let picked: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sel.join("selection.json")).unwrap()).unwrap();
    assert_eq!(picked["env_id"], "dusk");
}

#[test]
fn make_syn_writes_indexed_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("syn");
    let args = [
        "make-syn",
        "--count",
        "2",
        "--width",
        "16",
        "--height",
        "16",
        "--frames",
        "3",
        "--spp",
        "2",
        "--seed",
        "4",
        "--out",
        s(&out),
    ];
    ok(&lumaproxy(&args, &[]));
    let m = RunManifest::load(&out).unwrap();
    m.verify(&out).unwrap();
    assert_eq!(m.proxy.len(), 2);
    let index: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    let samples = index["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 2);
    for (i, sample) in samples.iter().enumerate() {
        let id = format!("syn_{i:05}");
        assert_eq!(sample["sample_id"], id.as_str());
        let total = sample["spec"]["rotation_total_deg"].as_f64().unwrap();
        assert!((180.0..=240.0).contains(&total));
        let rot: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(&id).join("rotation.json")).unwrap()).unwrap();
        assert_eq!(rot["total_deg"].as_f64().unwrap(), total);
        assert!(out.join(&id).join("proxy/frame_00002.lpxy").is_file());
    }
}

fn traj_file(path: &Path, shift: f64) {
    let poses = (0..6)
        .map(|k| {
            let a = k as f64 * 0.3;
            CameraPose::look_at(
                Point3::new(3.0 * a.cos() + shift, 1.0, 3.0 * a.sin()),
                Point3::new(shift, 0.0, 0.0),
                Intrinsics::default_for(32, 32),
            )
        })
        .collect();
    CameraTrajectory { poses }.save(path).unwrap();
}

fn report(dir: &Path) -> EvalReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn eval_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    let (pred, gt) = (root.join("pred.txt"), root.join("gt.txt"));
    traj_file(&pred, 5.0);
    traj_file(&gt, 0.0);
    let out = root.join("traj");
    ok(&lumaproxy(
        &["eval", "traj", "--pred", s(&pred), "--gt", s(&gt), "--out", s(&out)],
        &[],
    ));
    let r = report(&out);
    assert!(r.ate.unwrap() < 1e-6);
    assert!(r.rpe_r.unwrap() < 1e-6);
    assert!(r.miou.is_none());
    assert_eq!(
        std::fs::read_to_string(out.join("per_frame.csv"))
            .unwrap()
            .lines()
            .count(),
        7
    );

    let (lp, lg): (PathBuf, PathBuf) = (root.join("lp"), root.join("lg"));
    std::fs::create_dir_all(&lp).unwrap();
    std::fs::create_dir_all(&lg).unwrap();
    for k in 0..3 {
        let sky = procedural_sky(30.0 * k as f64, 40.0, 0.5, 8).unwrap();
        save_envmap(&sky, &lg.join(format!("frame_{k:05}.lenv"))).unwrap();
        let brighter: EnvMap = sky.scaled(2.0 + k as f32).unwrap();
        save_envmap(&brighter, &lp.join(format!("frame_{k:05}.lenv"))).unwrap();
    }
    let out = root.join("light");
    ok(&lumaproxy(
        &["eval", "light", "--pred", s(&lp), "--gt", s(&lg), "--out", s(&out)],
        &[],
    ));
    let r = report(&out);
    assert!(r.lighting_error.unwrap() < 1e-9);
    assert!(r.lighting_instability.unwrap() < 1e-9);
    let out = root.join("light_seq");
    let args = [
        "eval",
        "light",
        "--pred",
        s(&lp),
        "--gt",
        s(&lg),
        "--scale",
        "per-sequence",
        "--out",
        s(&out),
    ];
    ok(&lumaproxy(&args, &[]));
    assert!(report(&out).lighting_error.unwrap() > 1e-6);

    let (mp, mg) = (root.join("mp"), root.join("mg"));
    std::fs::create_dir_all(&mp).unwrap();
    std::fs::create_dir_all(&mg).unwrap();
    save_mask_png(&mp.join("frame_00000.png"), 1, 3, &[1, 1, 0]).unwrap();
    save_mask_png(&mg.join("frame_00000.png"), 1, 3, &[0, 1, 1]).unwrap();
    save_mask_png(&mp.join("frame_00001.png"), 1, 3, &[2, 0, 0]).unwrap();
    save_mask_png(&mg.join("frame_00001.png"), 1, 3, &[2, 0, 0]).unwrap();
    let out = root.join("layout");
    ok(&lumaproxy(
        &["eval", "layout", "--pred", s(&mp), "--gt", s(&mg), "--out", s(&out)],
        &[],
    ));
    assert!((report(&out).miou.unwrap() - 2.0 / 3.0).abs() < 1e-12);

    let out = root.join("missing");
    let res = lumaproxy(
        &[
            "eval",
            "layout",
            "--pred",
            s(&root.join("nope")),
            "--gt",
            s(&mg),
            "--out",
            s(&out),
        ],
        &[],
    );
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn train_toy_writes_traces_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("train");
    let args = [
        "train-toy",
        "--stages",
        "A,B,C",
        "--samples",
        "4",
        "--pretrain-steps",
        "3",
        "--steps-a",
        "2",
        "--steps-b",
        "2",
        "--steps-c",
        "4",
        "--batch",
        "2",
        "--out",
        s(&out),
    ];
    ok(&lumaproxy(&args, &[]));
    RunManifest::load(&out).unwrap().verify(&out).unwrap();
    for name in [
        "trace_pretrain.csv",
        "trace_A.csv",
        "trace_B.csv",
        "trace_C.csv",
        "checkpoint_C.lckp",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("train_report.json")).unwrap()).unwrap();
    let stages = r["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 3);
    assert_eq!(stages[2]["batches_per_source"], serde_json::json!([2, 2]));
    let ckpt = lumaproxy_latent::checkpoint::load_checkpoint(&out.join("checkpoint_A.lckp")).unwrap();
    assert_eq!(ckpt.stage, "A");

    let res = lumaproxy(&["train-toy", "--stages", "Q", "--out", s(&tmp.path().join("q"))], &[]);
    assert_eq!(res.status.code(), Some(2));
}
