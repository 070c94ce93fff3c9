use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

fn camre(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_camre")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data(rel: &str) -> String {
    format!("{}/data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn scratch(name: &str) -> String {
    let dir = std::env::temp_dir().join(format!("camre-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn scene_gen_dumps_snapshot() {
    let out = scratch("living.bin");
    camre(&["scene-gen", "--world", "living", "--scan", "full", "--out", &out]);
    assert_eq!(std::fs::metadata(&out).unwrap().len(), 16 + 90 * 56);

    let out = scratch("apartment.bin");
    let printed = camre(&["scene-gen", "--world", &data("rooms/apartment.room"), "--scan", "walk", "--out", &out]);
    assert!(printed.starts_with("29 of 29 objects"), "{printed}");
}

#[test]
fn bench_run_then_tables() {
    let csv = scratch("report.csv");
    let printed = camre(&["bench", "run", "--scenario", &data("scenarios/SD1.json"), "--repeats", "2", "--out", &csv]);
    let table = camre(&["bench", "tables", "--in", &csv]);
    assert_eq!(printed, table);
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().nth(2).unwrap().starts_with("SD1       plain"));
}

#[test]
fn navbench_writes_one_sample_per_line() {
    let out = scratch("samples.csv");
    camre(&["navbench", "--feature", "xray-move", "--reps", "25", "--out", &out]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 25);
    assert!(text.lines().all(|l| l.parse::<f64>().is_ok_and(|v| v >= 0.0)));
}

#[test]
fn relay_starts_and_reports_addresses() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_camre"))
        .args(["relay", "--bind", "127.0.0.1:0", "--gateway", "127.0.0.1:0", "--limit", "netcode", "--framing", "framed"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let second = lines.next().unwrap().unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(first.starts_with("relay on udp 127.0.0.1:") && first.ends_with("(framed, netcode)"), "{first}");
    assert!(second.starts_with("gateway on ws://127.0.0.1:"), "{second}");
}

#[test]
fn bad_input_fails_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_camre"))
        .args(["navbench", "--feature", "teleport"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_camre"))
        .args(["bench", "tables", "--in", "/nonexistent/report.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
