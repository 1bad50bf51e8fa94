mod common;

use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use common::*;
use lectureqg_harness::run::OUTPUT_FILES;

fn lectureqg(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn write_config(path: &Path, corpus: &Path, out: &Path, extra_generator: &str, workers: usize) {
    let body = format!(
        r#"corpus = "{}"
output = "{}"
strategies = ["rule-3", "cot+rewrite", "combinemm"]
modalities = ["transcript", "keyframes"]
workers = {workers}

[[generators]]
name = "sim"
provider = "simulated"
model = "sim-1"
{extra_generator}

[captioner]
name = "cap"
provider = "simulated"
model = "sim-vision"
"#,
        corpus.display(),
        out.display()
    );
    std::fs::write(path, body).unwrap();
}

#[test]
fn ingest_twice_is_a_no_op_and_missing_transcript_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    write_frames(&frames, &scene_frames(2, 12));
    let transcript = dir.path().join("t.jsonl");
    std::fs::write(
        &transcript,
        "{\"start_s\":0,\"end_s\":12,\"text\":\"First we define the gradient.\"}\n{\"start_s\":12,\"end_s\":24,\"text\":\"Then we follow it downhill.\"}\n",
    )
    .unwrap();
    let corpus = dir.path().join("corpus");
    let args = |t: &Path| {
        vec![
            "ingest".to_string(),
            "--corpus".into(),
            corpus.display().to_string(),
            "--lecture".into(),
            "l1".into(),
            "--course".into(),
            "Demo".into(),
            "--transcript".into(),
            t.display().to_string(),
            "--frames".into(),
            frames.display().to_string(),
            "--skip-n".into(),
            "3".into(),
        ]
    };
    let run = |a: Vec<String>| Command::new(bin()).args(a).output().unwrap();

    let first = run(args(&transcript));
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("keyframes: done"), "{stdout}");
    assert!(stdout.contains("2 keyframe(s)"), "{stdout}");
    let snapshot: Vec<(String, Vec<u8>)> = walk(&corpus);

    let second = run(args(&transcript));
    assert!(second.status.success());
    let stdout = String::from_utf8_lossy(&second.stdout);
    assert_eq!(stdout.matches("skipped").count(), 5, "{stdout}");
    assert_eq!(walk(&corpus), snapshot, "a repeated ingest changed the corpus");

    let missing = dir.path().join("nope.jsonl");
    let out = run(args(&missing));
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&missing.display().to_string()), "{stderr}");
}

fn walk(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[tokio::test]
async fn run_caption_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_fixture(&corpus, &FixtureSpec::default()).await;
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    write_config(&cfg, &corpus, &out, "", 3);
    let cfg_s = cfg.display().to_string();

    let cap = lectureqg(&["caption", "-c", &cfg_s]);
    assert!(cap.status.success(), "{}", String::from_utf8_lossy(&cap.stderr));
    let run = lectureqg(&["run", "-c", &cfg_s]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    // 5 items × (2 modalities × 2 strategies + CombineMM)
    assert_eq!(stats["units"], 25);
    assert_eq!(stats["failed"], 0);
    let first: Vec<Vec<u8>> = OUTPUT_FILES.iter().map(|f| read(out.join(f))).collect();

    let again = lectureqg(&["run", "-c", &cfg_s]);
    let stats: serde_json::Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(stats["reused"], 25);
    let second: Vec<Vec<u8>> = OUTPUT_FILES.iter().map(|f| read(out.join(f))).collect();
    assert_eq!(first, second);

    std::fs::remove_file(out.join("report.md")).unwrap();
    let rep = lectureqg(&["report", "--run", &out.display().to_string()]);
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    assert_eq!(read(out.join("report.md")), first[3]);
    let report = String::from_utf8(first[3].clone()).unwrap();
    assert!(report.contains("CombineMM") && report.contains("Keyframes"), "{report}");

    let stats = lectureqg(&["report", "--corpus", &corpus.display().to_string()]);
    assert!(String::from_utf8_lossy(&stats.stdout).contains("# Synthetic ML"));
}

#[tokio::test]
async fn killed_run_resumes_to_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_fixture(&corpus, &FixtureSpec::default()).await;
    let clean = dir.path().join("clean");
    let clean_cfg = dir.path().join("clean.toml");
    write_config(&clean_cfg, &corpus, &clean, "", 4);
    assert!(lectureqg(&["run", "-c", &clean_cfg.display().to_string()]).status.success());

    let out = dir.path().join("killed");
    let cfg = dir.path().join("killed.toml");
    write_config(&cfg, &corpus, &out, "simulated_latency_ms = 40", 1);
    let mut child = Command::new(bin())
        .args(["run", "-c", &cfg.display().to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let units = out.join("units");
    let deadline = Instant::now() + Duration::from_secs(60);
    while count_files(&units) < 3 {
        assert!(Instant::now() < deadline, "run made no progress");
        assert!(child.try_wait().unwrap().is_none(), "run finished before it could be killed");
        std::thread::sleep(Duration::from_millis(20));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let done = count_files(&units);
    assert!(done < 25, "kill came too late ({done} units)");
    assert!(!out.join("report.md").exists());

    let resumed = lectureqg(&["run", "-c", &cfg.display().to_string()]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&resumed.stdout).unwrap();
    assert!(stats["reused"].as_u64().unwrap() >= 3);
    for f in OUTPUT_FILES {
        assert_eq!(read(out.join(f)), read(clean.join(f)), "{f} differs after resume");
    }
}

fn count_files(dir: &Path) -> usize {
    if !dir.exists() {
        return 0;
    }
    walk(dir).iter().filter(|(p, _)| p.ends_with(".json")).count()
}

#[test]
fn benchmark_cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    std::fs::write(
        &pairs,
        "{\"q1\":\"what is a tensor\",\"q2\":\"what is a tensor\",\"label\":1}\n{\"q1\":\"a b\",\"q2\":\"c d\",\"label\":0}\n",
    )
    .unwrap();
    let p = pairs.display().to_string();
    let ok = lectureqg(&["benchmark-metrics", "--pairs", &p, "--scorers", "rouge-l,bleu-1"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let md = String::from_utf8_lossy(&ok.stdout);
    assert!(md.contains("| rouge-l | 100.00 | 100.00 |"), "{md}");

    let unknown = lectureqg(&["benchmark-metrics", "--pairs", &p, "--scorers", "meteor"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("meteor"));

    let no_nli = Command::new(bin())
        .args(["benchmark-metrics", "--pairs", &p, "--scorers", "nli"])
        .env_remove("LQG_NLI_ENDPOINT")
        .output()
        .unwrap();
    assert_eq!(no_nli.status.code(), Some(2));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "corpus = \"c\"\noutput = \"o\"\nstrategies = []\n[[generators]]\nname = \"g\"\nprovider = \"simulated\"\nmodel = \"m\"\n").unwrap();
    let out = lectureqg(&["run", "-c", &cfg.display().to_string()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
