//! End-to-end tests of the command-line binary: exit codes, output artifacts,
//! and byte-level determinism across reruns.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn daccn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_daccn"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("daccn-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn micro_config(dir: &PathBuf) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!(
            r#"
iterations = 5
batch_size = 1
num_samples = 4
out_dir = "{}"

[model]
branch_channels = [3, 4, 5, 6]
input_h = 32
input_w = 48
d_min = 1.5
d_max = 16.0

[scene]
image_h = 32
image_w = 48
"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn dump_config_roundtrips() {
    let out = daccn().arg("dump-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("iterations = 500"));
    assert!(text.contains("[model]"));
    assert!(text.contains("[optimizer]"));
}

#[test]
fn invalid_config_exits_2() {
    let dir = scratch("badcfg");
    let path = dir.join("bad.toml");
    fs::write(&path, "iterations = 5\nnot_a_key = true\n").unwrap();
    let out = daccn().args(["train", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_with_exit_0() {
    let out = daccn().arg("gradcheck").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("conv2d"));
    assert!(text.contains("cumulative_convolution"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn train_then_eval_reproduces_metrics() {
    let dir = scratch("train-eval");
    let cfg = micro_config(&dir);
    let out = daccn().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics_line = fs::read_to_string(dir.join("out/metrics.txt")).unwrap();
    let trained_record = metrics_line.lines().next().unwrap().to_string();

    let out = daccn()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(dir.join("out/model.ckpt"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let eval_text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(eval_text.lines().next().unwrap(), trained_record);
}

#[test]
fn eval_oracle_is_perfect() {
    let dir = scratch("oracle");
    let cfg = micro_config(&dir);
    assert!(daccn().args(["train", "--config"]).arg(&cfg).status().unwrap().success());
    let out = daccn()
        .args(["eval", "--oracle", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(dir.join("out/model.ckpt"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("abs_rel=0,"), "{text}");
}

#[test]
fn eval_dump_writes_reloadable_pfm() {
    let dir = scratch("dump");
    let cfg = micro_config(&dir);
    assert!(daccn().args(["train", "--config"]).arg(&cfg).status().unwrap().success());
    let dump = dir.join("dump");
    assert!(daccn()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(dir.join("out/model.ckpt"))
        .arg("--dump-dir")
        .arg(&dump)
        .status()
        .unwrap()
        .success());
    let pfm = dump.join("pred_000.pfm");
    assert!(pfm.exists());
    let depth: daccn_core::Tensor<f64> = daccn_core::io::read_pfm(&pfm).unwrap();
    assert_eq!(depth.shape(), &[32, 48]);
    // writing the reloaded map again is byte-identical
    let pfm2 = dump.join("pred_rewrite.pfm");
    daccn_core::io::write_pfm(&pfm2, &depth).unwrap();
    assert_eq!(fs::read(&pfm).unwrap(), fs::read(&pfm2).unwrap());
    assert!(dump.join("target_000.ppm").exists());
    assert!(dump.join("gt_000.pfm").exists());
}

#[test]
fn checkpoint_config_mismatch_exits_2() {
    let dir = scratch("mismatch");
    let cfg = micro_config(&dir);
    assert!(daccn().args(["train", "--config"]).arg(&cfg).status().unwrap().success());
    // evaluating with different model widths must fail the versioned load
    let other = dir.join("other.toml");
    fs::write(
        &other,
        format!(
            r#"
iterations = 5
batch_size = 1
num_samples = 4
out_dir = "{}"

[model]
branch_channels = [4, 4, 5, 6]
input_h = 32
input_w = 48
d_min = 1.5
d_max = 16.0

[scene]
image_h = 32
image_w = 48
"#,
            dir.join("out2").display()
        ),
    )
    .unwrap();
    let out = daccn()
        .args(["eval", "--config"])
        .arg(&other)
        .arg("--checkpoint")
        .arg(dir.join("out/model.ckpt"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir_a = scratch("rerun-a");
    let dir_b = scratch("rerun-b");
    let cfg_a = micro_config(&dir_a);
    let cfg_b = micro_config(&dir_b);
    for cfg in [&cfg_a, &cfg_b] {
        assert!(daccn().args(["train", "--config"]).arg(cfg).status().unwrap().success());
    }
    for name in ["trace.csv", "model.ckpt", "metrics.txt"] {
        let a = fs::read(dir_a.join("out").join(name)).unwrap();
        let b = fs::read(dir_b.join("out").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn flag_overrides_apply() {
    let dir = scratch("override");
    let cfg = micro_config(&dir);
    let out_dir = dir.join("elsewhere");
    assert!(daccn()
        .args(["train", "--config"])
        .arg(&cfg)
        .args(["--iterations", "2", "--out-dir"])
        .arg(&out_dir)
        .status()
        .unwrap()
        .success());
    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3); // header + 2 iterations
}
