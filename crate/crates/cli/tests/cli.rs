use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn sample(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample").join(file)
}

fn syndro() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_syndro"));
    for (k, _) in std::env::vars() {
        if k.starts_with("SYNDRO_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn with_sample(cmd: &mut Command) -> &mut Command {
    cmd.arg("--data")
        .arg(sample("instances.tsv"))
        .arg("--schema")
        .arg(sample("schema.json"))
        .arg("--targets")
        .arg(sample("flu_weekly.tsv"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn instance_count() -> u64 {
    fs::read_to_string(sample("instances.tsv")).unwrap().lines().count() as u64 - 1
}

#[test]
fn fit_with_defaults_writes_report_and_syndrome() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let res = run(with_sample(syndro().arg("fit")).arg("--out").arg(&out));
    assert!(res.status.success(), "{}", stderr(&res));
    let r = report(&out);
    let n = instance_count();
    assert_eq!(r["n_instances"], n);
    assert_eq!(r["min_support_count"], (n as f64 * 0.0001).ceil() as u64);
    assert_eq!(r["config"]["min_support"], 0.0001);
    assert!(r["score"]["value"].as_f64().unwrap() > 0.8);
    let syn = fs::read_to_string(dir.path().join("report.syn")).unwrap();
    assert_eq!(syn.trim_end(), r["syndrome"].as_str().unwrap());
    assert!(stderr(&res).contains("\"granularity\":\"weekly\""), "{}", stderr(&res));
}

#[test]
fn invalid_min_support_is_a_usage_error() {
    let res = run(with_sample(syndro().arg("fit")).args(["--min-support", "1.5"]));
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("min-support must be in (0,1)"), "{}", stderr(&res));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let res = run(with_sample(syndro().arg("fit")).arg("--bogus"));
    assert_eq!(res.status.code(), Some(1));
    let res = run(syndro().arg("frobnicate"));
    assert_eq!(res.status.code(), Some(1));
    let res = run(syndro().arg("--help"));
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error() {
    let res = run(syndro()
        .arg("fit")
        .args(["--data", "/nonexistent/instances.tsv"])
        .arg("--schema")
        .arg(sample("schema.json"))
        .arg("--targets")
        .arg(sample("flu_weekly.tsv")));
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("/nonexistent/instances.tsv"));
}

#[test]
fn malformed_syndrome_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("bad.syn");
    fs::write(&syn, "icd = \"J10\" OR temperature >").unwrap();
    let res = run(with_sample(syndro().arg("eval")).arg("--syndrome").arg(&syn));
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("bad.syn"));
}

#[test]
fn eval_prints_series_and_scores() {
    let res = run(with_sample(syndro().arg("eval")).arg("--syndrome").arg(sample("influenza.syn")));
    assert!(res.status.success(), "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("bucket\ttarget\tcount\n2018-W01\t"));
    for name in ["pearson", "spearman", "kendall"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{name}\t"))), "{text}");
    }

    let res = run(with_sample(syndro().arg("eval")).arg("--syndrome").arg(sample("influenza.syn")).arg("--json"));
    assert!(res.status.success());
    let v: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["syndrome"], "icd = \"J10\"\nOR icd = \"J11\"");
    assert_eq!(v["labels"].as_array().unwrap().len(), 104);
    assert_eq!(v["counts"].as_array().unwrap().len(), 104);
    let pearson = v["scores"]["pearson"]["value"].as_f64().unwrap();
    assert!(pearson > 0.8 && pearson <= 1.0, "{pearson}");

    // Independent count of J10/J11 visits per ISO week.
    let tsv = fs::read_to_string(sample("instances.tsv")).unwrap();
    let icd = tsv.lines().next().unwrap().split('\t').position(|h| h == "icd").unwrap();
    let hits = tsv.lines().skip(1).filter(|l| matches!(l.split('\t').nth(icd), Some("J10" | "J11"))).count() as u64;
    let total: u64 = v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, hits);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("r{threads}.json"));
        let res = run(with_sample(syndro().arg("fit")).args(["--threads", threads]).arg("--out").arg(&out));
        assert!(res.status.success(), "{}", stderr(&res));
        bytes.push(fs::read(&out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn blacklist_and_categories_restrict_the_search() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bl.json");
    let res = run(with_sample(syndro().arg("fit"))
        .arg("--blacklist")
        .arg(sample("blacklist.txt"))
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "{}", stderr(&res));
    let syn = report(&out)["syndrome"].as_str().unwrap().to_owned();
    assert!(!syn.is_empty() && syn != "FALSE");
    assert!(!syn.contains("icd") && !syn.contains("flu_test"), "{syn}");

    let out = dir.path().join("cat.json");
    let res = run(with_sample(syndro().arg("fit")).args(["--categories", "2"]).arg("--out").arg(&out));
    assert!(res.status.success(), "{}", stderr(&res));
    let r = report(&out);
    for entry in r["trace"].as_array().unwrap() {
        for cond in entry["conditions"].as_array().unwrap() {
            let attr = cond.as_str().unwrap().split(' ').next().unwrap();
            assert!(["temperature", "heart_rate", "resp_rate", "o2_sat"].contains(&attr), "{cond}");
        }
    }

    let res = run(with_sample(syndro().arg("fit")).args(["--max-conditions", "0"]));
    assert_eq!(res.status.code(), Some(1));
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "no_such_attribute\n").unwrap();
    let res = run(with_sample(syndro().arg("fit")).arg("--blacklist").arg(&bad));
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn environment_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env.json");
    let res = run(with_sample(syndro().arg("fit"))
        .env("SYNDRO_MIN_SUPPORT", "0.01")
        .env("SYNDRO_MAX_RULES", "1")
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "{}", stderr(&res));
    let r = report(&out);
    assert_eq!(r["config"]["min_support"], 0.01);
    assert_eq!(r["min_support_count"], (instance_count() as f64 * 0.01).ceil() as u64);
    assert!(r["trace"].as_array().unwrap().len() <= 1);

    // Flags win over the environment.
    let res = run(with_sample(syndro().arg("fit"))
        .env("SYNDRO_MIN_SUPPORT", "2")
        .args(["--min-support", "0.01"])
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "{}", stderr(&res));
}

#[test]
fn synth_bench_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    let res = run(syndro()
        .arg("synth-bench")
        .args(["--type", "or", "--granularity", "daily,monthly", "--trials", "3"])
        .args(["--instances", "5000", "--attributes", "6", "--values", "5", "--days", "60"])
        .args(["--min-indicator-support", "50", "--seed", "3"])
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "{}", stderr(&res));
    let table = String::from_utf8(res.stdout).unwrap();
    assert!(table.lines().next().unwrap().contains("daily"));
    assert!(table.lines().any(|l| l.trim_start().starts_with("or") && l.contains("all")), "{table}");
    let r = report(&out);
    assert_eq!(r["trials"].as_array().unwrap().len(), 6);
    assert_eq!(r["cells"].as_array().unwrap().len(), 2);

    let res = run(syndro().arg("synth-bench").args(["--type", "and", "--size", "7", "--trials", "1"]));
    assert_eq!(res.status.code(), Some(1));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http_get(port: u16, path: &str) -> String {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).unwrap();
    buf
}

#[test]
fn serve_answers_http() {
    let port = free_port();
    let mut child = syndro()
        .arg("serve")
        .args(["--port", &port.to_string()])
        .arg("--data")
        .arg(sample("instances.tsv"))
        .arg("--schema")
        .arg(sample("schema.json"))
        .arg("--targets")
        .arg(sample("flu_weekly.tsv"))
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let line = lines.next().expect("server stays up").unwrap();
        if line.starts_with("listening on") {
            break;
        }
        assert!(Instant::now() < deadline);
    }
    let resp = http_get(port, "/api/registry");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let body = &resp[resp.find("\r\n\r\n").unwrap() + 4..];
    assert!(body.contains("\"instances\"") && body.contains("\"flu_weekly\""), "{body}");
}
