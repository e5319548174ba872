use std::process::Command;

fn tapegrad() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tapegrad"))
}

#[test]
fn tiny_with_naive_reference_succeeds() {
    let out = tapegrad()
        .args(["bench", "tiny", "--iters", "200", "--trials", "2", "--naive-ref"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("tiny"));
    assert!(stdout.contains("tiny-naive"));
}

#[test]
fn csv_is_created_then_appended_without_a_second_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("runs.csv");
    for _ in 0..2 {
        let status = tapegrad()
            .args(["bench", "small", "--iters", "50", "--trials", "2", "--csv"])
            .arg(&csv)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(!lines[1].starts_with(lines[0].split(',').next().unwrap()));
    assert_eq!(lines[0].split(',').count(), lines[2].split(',').count());
}

#[test]
fn dot_output_describes_the_small_graph() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("small.dot");
    let status = tapegrad()
        .args(["bench", "small", "--iters", "5", "--trials", "1", "--dot"])
        .arg(&dot)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph"));
    assert_eq!(text.lines().filter(|l| l.contains("->")).count(), 44);
}

#[test]
fn training_workloads_run_briefly() {
    for w in ["mlp", "gpt"] {
        let out = tapegrad()
            .args(["bench", w, "--trials", "1", "--steps", "1", "--batch", "2"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{w}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn bad_arguments_fail() {
    for args in [
        vec!["bench", "nonsense"],
        vec!["bench", "tiny", "--iters", "many"],
        vec!["bench", "tiny", "--precision", "fp16"],
        vec![],
    ] {
        let out = tapegrad().args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = tapegrad()
        .args(["bench", "mlp", "--corpus", "/nonexistent/corpus.txt"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
