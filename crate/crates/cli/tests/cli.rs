use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread;

fn checklist(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_checklist"));
    cmd.args(args).env_remove("CHECKLIST_API_TOKEN");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, n: usize) {
    let o = checklist(&["synth", "--out", dir.to_str().unwrap(), "--n", &n.to_string(), "--seed", "3"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "task = \"acute deterioration\"\noutput = \"out\"\n\n[data]\ntable = \"cohort.csv\"\nschema = \"schema.json\"\n\n[pipeline]\niterations = 8\nfolds = 3\nrefine_steps = 2\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

struct Recorded {
    headers: String,
    body: String,
}

/// Minimal HTTP server answering every request with `reply(body)`.
fn serve(reply: impl Fn(&str) -> (u16, String) + Send + 'static) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                headers.push_str(&line);
            }
            let len = headers
                .lines()
                .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                .unwrap_or(0);
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let body = String::from_utf8(body).unwrap();
            let (status, payload) = reply(&body);
            seen.lock().unwrap().push(Recorded { headers, body });
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (url, log)
}

fn chat(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn offline_run_is_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1500);
    let cfg = config(dir.path(), "");
    let o = checklist(&["run", "-c", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mean test AUROC"));
    let out = dir.path().join("out");
    for f in ["report.json", "transcript.jsonl", "progress.jsonl", "checklists.md"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(std::fs::read_to_string(out.join("checklists.md")).unwrap().contains("| **Total score** |"));
    assert_eq!(std::fs::read_to_string(out.join("progress.jsonl")).unwrap().lines().count(), 3);

    let again = dir.path().join("again");
    let o = checklist(&["run", "-c", cfg.to_str().unwrap(), "--out", again.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(again.join("report.json")).unwrap(), first);

    let replayed = dir.path().join("replayed");
    let t = out.join("transcript.jsonl");
    let o = checklist(&["replay", t.to_str().unwrap(), "-c", cfg.to_str().unwrap(), "--out", replayed.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(replayed.join("checklists.md")).unwrap(),
        std::fs::read_to_string(out.join("checklists.md")).unwrap()
    );

    let single = dir.path().join("single");
    let o = checklist(&["run", "-c", cfg.to_str().unwrap(), "--ablation", "single-pass", "--out", single.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    let cmp = dir.path().join("cmp.json");
    let o = checklist(
        &[
            "compare",
            out.join("report.json").to_str().unwrap(),
            single.join("report.json").to_str().unwrap(),
            "--out",
            cmp.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cmp).unwrap()).unwrap();
    assert_eq!(v["baselines"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_writes_a_frontier_table() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1200);
    let cfg = config(dir.path(), "");
    let o = checklist(&["sweep", "-c", cfg.to_str().unwrap(), "--budgets", "1,3"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("1,3,"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 600);
    let bad = config(dir.path(), "max_rule = 3\n");
    assert_eq!(code(&checklist(&["run", "-c", bad.to_str().unwrap()], &[])), 2);
    let ok = config(dir.path(), "");
    assert_eq!(code(&checklist(&["run", "-c", ok.to_str().unwrap(), "--set", "auc_threshold=0.3"], &[])), 2);
    assert_eq!(code(&checklist(&["run", "-c", ok.to_str().unwrap(), "--set", "colour=red"], &[])), 2);
    assert_eq!(code(&checklist(&["run", "-c", "/nonexistent/run.toml"], &[])), 2);
    let remote = config(dir.path(), "proposer = \"remote\"\n");
    assert_eq!(code(&checklist(&["run", "-c", remote.to_str().unwrap()], &[])), 2);
    let o = checklist(&["synth", "--out", dir.path().join("x").to_str().unwrap(), "--n", "500", "--auroc", "0.9999", "--tolerance", "0.0001"], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let o = checklist(&["run", "-c", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    synth(dir.path(), 600);
    std::fs::write(dir.path().join("cohort.csv"), "label,group_id\n2,a\n").unwrap();
    assert_eq!(code(&checklist(&["run", "-c", cfg.to_str().unwrap()], &[])), 3);
}

#[test]
fn remote_proposer_talks_to_the_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 1500);
    let (url, log) = serve(|body| {
        let rules = if body.contains("binary (0/1) predictors") {
            "{\"type\":\"binary_true\",\"feature\":\"intubated\"}\n{\"type\":\"numeric_threshold\",\"feature\":\"bun\",\"op\":\">=\",\"threshold\":30}\nnot json"
        } else {
            "{\"plausible\": true, \"reason\": \"fine\"}"
        };
        (200, chat(rules))
    });
    let extra = format!(
        "proposer = \"remote\"\nplausibility = \"remote\"\nauc_threshold = 0.55\n\n[remote]\nurl = \"{url}\"\nmodel = \"test-model\"\nmax_attempts = 1\n"
    );
    let cfg = config(dir.path(), &extra);
    let o = checklist(&["run", "-c", cfg.to_str().unwrap()], &[("CHECKLIST_API_TOKEN", "s3cret")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = log.lock().unwrap();
    // 3 folds x 8 proposal calls, plus one review per distinct admissible rule
    assert!(log.len() >= 24, "{}", log.len());
    for r in log.iter() {
        assert!(r.headers.to_ascii_lowercase().contains("authorization: bearer s3cret"));
        let v: serde_json::Value = serde_json::from_str(&r.body).unwrap();
        assert_eq!(v["model"], "test-model");
        assert!(!r.body.contains("p000001"), "row identifiers leaked");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let fold = &report["folds"][0];
    assert_eq!(fold["calls"]["proposal"], 8);
    assert!(fold["malformed"].as_u64().unwrap() >= 8);
}

#[test]
fn exhausted_transport_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 900);
    let (url, log) = serve(|_| (503, "{\"error\": \"overloaded\"}".into()));
    let extra = format!(
        "proposer = \"remote\"\n\n[remote]\nurl = \"{url}\"\nmodel = \"m\"\nmax_attempts = 2\nbase_delay_ms = 1\nmax_delay_ms = 2\n"
    );
    let cfg = config(dir.path(), &extra);
    let o = checklist(&["run", "-c", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    // every proposal call was retried once
    assert_eq!(log.lock().unwrap().len(), 3 * 8 * 2);
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn space_reports_the_memory_wall() {
    let o = checklist(&["space"], &[]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("primitive rules      22000"), "{text}");
    let json: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    let bytes = json["universe_matrix_bytes"].as_f64().unwrap();
    assert!((4.0e17..5.5e17).contains(&bytes));
}
