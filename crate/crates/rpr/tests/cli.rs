//! End-to-end checks of the `rpr` binary: the full pipeline on a small
//! synthetic dataset, override bookkeeping and exit codes.

use std::path::Path;
use std::process::Command;

fn rpr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rpr"))
}

const SMALL: &[&str] = &[
    "-s", "sim.azimuths=64",
    "-s", "sim.range_bins=48",
    "-s", "sim.range_resolution_m=1.0",
    "-s", "sim.beam_width_rad=0.0982",
    "-s", "sim.n_scatterers=600",
    "-s", "sim.extent_m=120",
    "-s", "sim.loop_radius_m=60",
    "-s", "grid.side_pixels=32",
    "-s", "grid.metres_per_pixel=2.0",
    "-s", "embedder.input_side=32",
    "-s", "embedder.embedding_dim=16",
];

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_string();

    run_ok(rpr().args(["simgen", "--out", &s(&p("data"))]).args(SMALL));
    assert!(p("data").join("meta.txt").exists());
    assert!(p("data").join("config.txt").exists());

    run_ok(
        rpr()
            .args(["train", "--data", &s(&p("data")), "--out", &s(&p("run"))])
            .args(SMALL)
            .args([
                "-s", "variant.name=vTR2",
                "-s", "variant.pairs_per_batch=4",
                "-s", "train.epochs=1",
                "-s", "train.steps_per_epoch=3",
            ]),
    );
    let snapshot = std::fs::read_to_string(p("run").join("config.txt")).unwrap();
    assert!(snapshot.contains("variant.name = vTR2"), "{snapshot}");
    assert!(p("run").join("loss_log.csv").exists());

    run_ok(
        rpr()
            .args([
                "embed",
                "--data", &s(&p("data")),
                "--checkpoint", &s(&p("run").join("model.ckpt")),
                "--out", &s(&p("emb")),
            ])
            .args(SMALL),
    );
    assert!(p("emb").join("embeddings.bin").exists());

    run_ok(
        rpr()
            .args([
                "eval",
                "--queries", &s(&p("emb")),
                "--database", &s(&p("emb")),
                "--out", &s(&p("eval")),
            ])
            .args(SMALL),
    );
    let report = std::fs::read_to_string(p("eval").join("report.json")).unwrap();
    for field in ["pr_curve", "recall_at_p", "recall_at_n", "f1", "f2", "f0_5"] {
        assert!(report.contains(field), "report missing {field}");
    }

    run_ok(rpr().args([
        "plot",
        "--report", &s(&p("eval").join("report.json")),
        "--out", &s(&p("plots")),
    ]));
    for png in ["distance.png", "gt.png", "match_p.png", "match_n.png", "pr_curve.png"] {
        assert!(p("plots").join(png).exists(), "missing {png}");
    }
}

#[test]
fn unknown_config_key_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpr()
        .args(["simgen", "--out", dir.path().join("x").to_str().unwrap()])
        .args(["-s", "train.momentum=0.9"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("train.momentum"), "{stderr}");
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
}

#[test]
fn missing_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpr()
        .args([
            "train",
            "--data", dir.path().join("nope").to_str().unwrap(),
            "--out", dir.path().join("run").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_documents_exit_codes() {
    let out = rpr().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Exit codes"), "{text}");
    for code in ["2 ", "3 ", "4 "] {
        assert!(text.contains(code), "missing exit code {code} in help");
    }
}
