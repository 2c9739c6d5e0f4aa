//! End-to-end runs of the `bodymap` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bodymap::grid::Mask;
use bodymap::mesh::{Surface, TemplateMesh};
use bodymap::metrics::MetricReport;
use bodymap::net::checkpoint::{self, CheckpointInfo};
use bodymap::net::{BodyMapNet, ModelConfig};
use bodymap::synth::dataset::{Dataset, Split};
use candle_core::{DType, Device};
use image::RgbImage;

fn bodymap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bodymap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, seed: &str, extra: &[&str]) {
    let mut args = vec!["gen-data", "--out", p(dir), "--sequences", "10", "--frames", "1", "--image-size", "32", "--seed", seed];
    args.extend_from_slice(extra);
    ok(&bodymap(&args));
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(root).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn untrained_checkpoint(dir: &Path) -> PathBuf {
    let net = BodyMapNet::new(ModelConfig::desk(32), 5, DType::F32, &Device::Cpu).unwrap();
    let path = dir.join("net.safetensors");
    checkpoint::save(&net, &CheckpointInfo::default(), &path).unwrap();
    path
}

#[test]
fn gen_data_is_reproducible_split_and_decodable() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "7", &[]);
    gen(&b, "7", &[]);
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }

    let ds = Dataset::open(&a).unwrap();
    let seqs = |s: Split| ds.entries(s).map(|e| e.sequence).collect::<Vec<_>>();
    let (train, test) = (seqs(Split::Train), seqs(Split::Test));
    assert_eq!((train.len(), test.len()), (9, 1));
    assert!(test.iter().all(|s| !train.contains(s)));

    let surface = Surface::new(TemplateMesh::humanoid()).unwrap();
    let colors: std::collections::HashSet<[u8; 3]> = surface.coloring.colors().iter().copied().collect();
    for s in ds.load(Split::Train).unwrap().iter().chain(&ds.load(Split::Test).unwrap()) {
        for (x, y, c) in s.corr.enumerate_pixels() {
            if s.mask.get(x, y) {
                assert!(colors.contains(&c.0), "invalid color {c:?}");
            } else {
                assert_eq!(c.0, [0, 0, 0]);
            }
        }
    }
}

#[test]
fn eval_oracle_init_and_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "3", &["--set", "synth.frames_per_sequence=4"]);
    let read = |name: &str, flag: &str| -> MetricReport {
        let out = tmp.path().join(name);
        ok(&bodymap(&["eval", "--data", p(&data), flag, "--out", p(&out), "--split", "train"]));
        let text = fs::read_to_string(&out).unwrap();
        let schema: serde_json::Value =
            serde_json::from_str(include_str!("../schema/metric_report.schema.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let validator = jsonschema::validator_for(&schema).unwrap();
        assert!(validator.is_valid(&value), "{text}");
        serde_json::from_str(&text).unwrap()
    };
    let oracle = read("oracle.json", "--oracle");
    for (w, acc) in &oracle.pixel_accuracy {
        assert_eq!(*acc, 100.0, "window {w}");
    }
    assert_eq!((oracle.ap, oracle.ar), (1.0, 1.0));
    let init = read("init.json", "--init-as-prediction");
    for (w, acc) in &init.pixel_accuracy {
        assert!(*acc < oracle.pixel_accuracy[w], "window {w}: {acc}");
    }
}

#[test]
fn predict_outputs_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "1", &[]);
    let ckpt = untrained_checkpoint(tmp.path());
    let sample = data.join("seq0000_f0000");
    let run = |mask: &Path, out: &Path| {
        bodymap(&[
            "predict",
            "--checkpoint",
            p(&ckpt),
            "--image",
            p(&sample.join("rgb.png")),
            "--mask",
            p(mask),
            "--init",
            p(&sample.join("init.png")),
            "--out",
            p(out),
        ])
    };
    let (o1, o2) = (tmp.path().join("o1.png"), tmp.path().join("o2.png"));
    ok(&run(&sample.join("mask.png"), &o1));
    ok(&run(&sample.join("mask.png"), &o2));
    let img = image::open(&o1).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (32, 32));
    assert_eq!(fs::read(&o1).unwrap(), fs::read(&o2).unwrap());

    let empty = tmp.path().join("empty.png");
    Mask::new(32, 32).to_gray().save(&empty).unwrap();
    let o3 = tmp.path().join("o3.png");
    let out = run(&empty, &o3);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(image::open(&o3).unwrap().to_rgb8().pixels().all(|c| c.0 == [0, 0, 0]));

    let out = run(&tmp.path().join("missing.png"), &o3);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.png"));
}

#[test]
fn train_then_eval_and_viz() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "2", &[]);
    let run_dir = tmp.path().join("run");
    let train = |extra: &[&str]| {
        let mut args = vec!["train", "--data", p(&data), "--out", p(&run_dir), "--steps", "3", "--batch-size", "2"];
        args.extend_from_slice(extra);
        bodymap(&args)
    };
    let out = train(&["--set", "train.checkpoint_every=0"]);
    ok(&out);
    let echoed = String::from_utf8_lossy(&out.stderr);
    assert!(echoed.contains("[train.model]") && echoed.contains("steps = 3"), "{echoed}");
    let log = fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let model = run_dir.join("model.safetensors");
    assert!(model.exists());
    assert!(run_dir.join("config.toml").exists());

    // The log is appended to, never truncated.
    ok(&train(&["--set", "train.checkpoint_every=0"]));
    assert_eq!(fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap().lines().count(), 6);

    assert_eq!(train(&["--phase", "finetune"]).status.code(), Some(2));
    let out = train(&["--phase", "finetune", "--init-checkpoint", p(&model), "--finetune-mode", "sparse"]);
    ok(&out);

    let report = tmp.path().join("report.json");
    let plots = tmp.path().join("plots");
    ok(&bodymap(&["eval", "--data", p(&data), "--checkpoint", p(&model), "--out", p(&report), "--plots", p(&plots)]));
    let r: MetricReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.samples, 1);
    assert!(plots.join("accuracy_vs_window.png").exists());

    let viz = tmp.path().join("viz");
    ok(&bodymap(&["viz", "--data", p(&data), "--checkpoint", p(&model), "--out", p(&viz), "--scale", "2"]));
    let panels: Vec<RgbImage> = files(&viz).iter().map(|f| image::open(f).unwrap().to_rgb8()).collect();
    assert_eq!(panels.len(), 1);
    assert_eq!(panels[0].dimensions(), (3 * 64 + 2 * 4, 64));
}

#[test]
fn flags_and_config_errors() {
    assert_eq!(bodymap(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(bodymap(&["--help"]).status.code(), Some(0));
    let out = bodymap(&["gen-data", "--out", "/tmp/x", "--set", "synth.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let out = bodymap(&["eval", "--data", "/nonexistent", "--oracle"]);
    assert_eq!(out.status.code(), Some(3));
    let help = String::from_utf8_lossy(&bodymap(&["eval", "--help"]).stdout).to_string();
    assert!(help.contains("--init-as-prediction") && help.contains("--oracle"));
}
