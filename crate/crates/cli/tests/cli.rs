use std::path::Path;
use std::process::{Command, Output};

use streamvc::audio::{read_wav_native, write_mel, write_wav};
use streamvc::pqmf::{PqmfArtifact, PqmfBank};
use streamvc::Tensor;

fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamvc"))
        .args(args)
        .env_remove("STREAMVC_MODEL")
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("spawn streamvc")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with<S: AsRef<std::ffi::OsStr> + std::fmt::Debug>(args: &[S], needle: &str) {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(needle), "stderr lacks `{needle}`: {err}");
}

fn tiny_model(dir: &Path, extra: &[&str]) -> String {
    let p = dir.join("m.svcm").to_string_lossy().into_owned();
    let mut args = vec!["init-model", "--preset", "tiny", "--out", &p];
    args.extend_from_slice(extra);
    ok(&args);
    p
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn mask_prints_rows() {
    assert_eq!(
        ok(&["mask", "--chunk", "2", "--num-chunks", "3"]),
        "110000\n110000\n111100\n111100\n111111\n111111\n"
    );
    assert_eq!(
        ok(&[
            "mask",
            "--chunk",
            "1",
            "--num-chunks",
            "1",
            "--history",
            "0"
        ]),
        "1\n"
    );
    fails_with(&["mask", "--chunk", "0", "--num-chunks", "3"], "invalid");
}

#[test]
fn pqmf_json_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pqmf.json");
    ok(&["design-pqmf", "--out", &s(&p)]);
    let art: PqmfArtifact = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    let bank = PqmfBank::from_artifact(art.clone()).unwrap();
    assert_eq!(bank.to_artifact(), art);
    assert_eq!(bank.num_bands(), 4);
    fails_with(&["design-pqmf", "--taps", "1"], "");
}

#[test]
fn convert_one_second_of_silence() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), &[]);
    let input = dir.path().join("in.wav");
    write_wav(&input, &vec![0.0; 16000], 16000).unwrap();
    let out1 = dir.path().join("a.wav");
    let out2 = dir.path().join("b.wav");
    let report = ok(&[
        "convert",
        "--model",
        &model,
        "--in",
        &s(&input),
        "--out",
        &s(&out1),
        "--chunk-ms",
        "80",
    ]);
    let v: serde_json::Value = serde_json::from_str(report.trim()).unwrap();
    let total = v["total_ms"].as_f64().unwrap();
    let sum: f64 = [
        "chunk_ms",
        "lookahead_ms",
        "encoder_ms",
        "decoder_ms",
        "vocoder_ms",
    ]
    .iter()
    .map(|k| v[k].as_f64().unwrap())
    .sum();
    assert!((total - sum).abs() < 1e-9);
    let (rate, y) = read_wav_native(&out1).unwrap();
    assert_eq!(rate, 16000);
    assert!(y.len().abs_diff(16000) <= 160);
    assert!(y.iter().all(|v| v.is_finite() && v.abs() <= 1.0));

    ok(&[
        "convert",
        "--model",
        &model,
        "--in",
        &s(&input),
        "--out",
        &s(&out2),
        "--chunk-ms",
        "80",
    ]);
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn convert_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), &[]);
    let input = dir.path().join("in.wav");
    write_wav(&input, &vec![0.0; 1600], 16000).unwrap();
    let out = s(&dir.path().join("o.wav"));
    let base = [
        "convert",
        "--model",
        &model,
        "--in",
        &s(&input),
        "--out",
        &out,
    ];
    let with = |extra: &[&'static str]| -> Vec<String> {
        base.iter().chain(extra).map(|a| a.to_string()).collect()
    };
    fails_with(&with(&["--chunk-ms", "50"]), "multiple of 40 ms");
    fails_with(&with(&["--speaker", "99"]), "speaker");
    fails_with(
        &[
            "convert",
            "--model",
            "/nonexistent.svcm",
            "--in",
            &s(&input),
            "--out",
            &out,
        ],
        "loading model",
    );
    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"not a wav").unwrap();
    fails_with(
        &[
            "convert",
            "--model",
            &model,
            "--in",
            &s(&junk),
            "--out",
            &out,
        ],
        "reading",
    );
}

#[test]
fn model_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), &[]);
    let out = Command::new(env!("CARGO_BIN_EXE_streamvc"))
        .args(["bench", "--seconds", "0.2", "--chunk-ms", "40,80"])
        .env("STREAMVC_MODEL", &model)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for rec in &lines[..2] {
        let total = rec["total_ms"].as_f64().unwrap();
        let sum = rec["chunk_ms"].as_f64().unwrap()
            + 30.0
            + rec["encoder_ms"].as_f64().unwrap()
            + rec["decoder_ms"].as_f64().unwrap()
            + rec["vocoder_ms"].as_f64().unwrap();
        assert!((total - sum).abs() < 1e-9);
        assert_eq!(rec["device_label"], "cpu");
    }
    let rtf = lines[2]["rtf"].as_f64().unwrap();
    assert!(rtf.is_finite() && rtf > 0.0);
}

#[test]
fn bench_rejects_zero_seconds() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), &[]);
    fails_with(&["bench", "--model", &model, "--seconds", "0"], "--seconds");
}

fn mel_file(dir: &Path, frames: usize) -> String {
    let p = dir.join(format!("m{frames}.mel"));
    let data = (0..frames * 80)
        .map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0)
        .collect();
    write_mel(&p, &Tensor::new(vec![frames, 80], data).unwrap()).unwrap();
    s(&p)
}

#[test]
fn streaming_vocode_ignores_chunking() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), &[]);
    let mel = mel_file(dir.path(), 30);
    let mut outputs = Vec::new();
    for chunk in ["1", "7", "30"] {
        let out = dir.path().join(format!("v{chunk}.wav"));
        ok(&[
            "vocode",
            "--model",
            &model,
            "--mel",
            &mel,
            "--out",
            &s(&out),
            "--chunk-frames",
            chunk,
        ]);
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let empty = mel_file(dir.path(), 0);
    fails_with(
        &[
            "vocode",
            "--model",
            &model,
            "--mel",
            &empty,
            "--out",
            &s(&dir.path().join("e.wav")),
        ],
        "empty",
    );
}

#[test]
fn crossfade_vocode_runs_both_ways() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), &["--non-causal-vocoder"]);
    let mel = mel_file(dir.path(), 40);
    for n in ["0", "161"] {
        let out = dir.path().join(format!("x{n}.wav"));
        ok(&[
            "vocode",
            "--model",
            &model,
            "--mel",
            &mel,
            "--out",
            &s(&out),
            "--mode",
            "mb_offline_crossfade",
            "--crossfade-n",
            n,
            "--chunk-frames",
            "10",
        ]);
        assert_eq!(read_wav_native(&out).unwrap().1.len(), 6400);
    }
    fails_with(
        &[
            "vocode",
            "--model",
            &model,
            "--mel",
            &mel,
            "--out",
            &s(&dir.path().join("y.wav")),
        ],
        "causal",
    );
    fails_with(
        &[
            "vocode", "--model", &model, "--mel", &mel, "--out", "x.wav", "--mode", "bogus",
        ],
        "mode",
    );
}

#[test]
fn fbank_counts_frames() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    write_wav(&input, &vec![0.1; 8000], 16000).unwrap();
    let out = dir.path().join("f.mel");
    let printed = ok(&["fbank", "--in", &s(&input), "--out", &s(&out)]);
    assert!(printed.contains("\"frames\":50"));
    assert_eq!(streamvc::audio::read_mel(&out).unwrap().rows(), 50);
}

#[test]
fn seeds_control_weights() {
    let dir = tempfile::tempdir().unwrap();
    let a = s(&dir.path().join("a.svcm"));
    let b = s(&dir.path().join("b.svcm"));
    let c = s(&dir.path().join("c.svcm"));
    ok(&["init-model", "--preset", "tiny", "--out", &a]);
    ok(&["--seed", "0", "init-model", "--preset", "tiny", "--out", &b]);
    ok(&["--seed", "1", "init-model", "--preset", "tiny", "--out", &c]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn help_is_available() {
    for sub in [
        "convert",
        "vocode",
        "bench",
        "mask",
        "design-pqmf",
        "fbank",
        "init-model",
    ] {
        assert!(ok(&[sub, "--help"]).contains("Usage"));
    }
}
