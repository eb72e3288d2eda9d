//! The compiled binary, driven end to end with a shell-script engine.
#![cfg(unix)]

mod common;

use std::process::Command;

use screenlens_core::imaging::BoundingBox;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_screenlens"));
    c.env_remove("SCREENLENS_OCR_CMD").env("RUST_LOG", "warn");
    c
}

#[test]
fn extract_index_query_with_script_engine() {
    let work = tempfile::tempdir().unwrap();
    let input = work.path().join("in");
    let out = work.path().join("out");
    std::fs::create_dir(&input).unwrap();
    let engine = common::script(work.path(), "ocr", r#"echo "token$(cksum < "$1" | cut -d' ' -f1)" > "$2.txt""#);
    for (i, w) in [20u32, 30, 40].iter().enumerate() {
        let png = common::blocks_png(80, 40, &[BoundingBox::new(5, 5, *w, 12)]);
        std::fs::write(input.join(format!("kim_2017030{}T120000.png", i + 1)), png).unwrap();
    }
    let config = work.path().join("screenlens.conf");
    std::fs::write(&config, format!("input = {}\noutput = {}\nparallelism = 2\n", input.display(), out.display())).unwrap();

    let status = bin()
        .args(["--config", config.to_str().unwrap(), "extract", "--engine-cmd"])
        .arg(format!("{} {{input}} {{output}}", engine.display()))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("kim_20170302T120000.txt")).unwrap();
    let token = text.trim().to_owned();
    assert!(token.starts_with("token"));

    let idx = work.path().join("corpus.idx");
    let o = bin().args(["index", "--input"]).arg(out.join("documents.xml")).arg("--output").arg(&idx).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("N=3 "));

    let o = bin().args(["query", "--index"]).arg(&idx).args(["--top-k", "5", &token]).output().unwrap();
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("1 hits\n"), "{stdout}");
    assert!(stdout.contains("kim_20170302T120000"));
    let o = bin().args(["query", "--index"]).arg(&idx).arg("nothingmatches").output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("0 hits"));
}

#[test]
fn env_engine_override_and_exit_codes() {
    let work = tempfile::tempdir().unwrap();
    let input = work.path().join("in");
    std::fs::create_dir(&input).unwrap();
    std::fs::write(input.join("kim_20170301T120000.png"), common::blocks_png(40, 30, &[BoundingBox::new(5, 5, 20, 10)])).unwrap();
    std::fs::write(input.join("kim_20170301T120500.png"), b"broken").unwrap();
    let engine = common::script(work.path(), "ocr", r#"echo from-env > "$2.txt""#);

    let o = bin()
        .env("SCREENLENS_OCR_CMD", format!("{} {{input}} {{output}}", engine.display()))
        .args(["extract", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(work.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(work.path().join("out/kim_20170301T120000.txt")).unwrap(), "from-env\n");

    let o = bin()
        .args(["extract", "--engine-cmd", "/no/such/engine {input} {output}", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(work.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_writes_table_and_report() {
    let work = tempfile::tempdir().unwrap();
    let (hyp, refs) = (work.path().join("hyp"), work.path().join("ref"));
    std::fs::create_dir(&hyp).unwrap();
    std::fs::create_dir(&refs).unwrap();
    std::fs::write(hyp.join("a.txt"), "hello world\n").unwrap();
    std::fs::write(refs.join("a.txt"), "hello there world\n").unwrap();
    let report = work.path().join("report.json");
    let o = bin().args(["evaluate", "--input"]).arg(&hyp).arg("--reference").arg(&refs).arg("--output").arg(&report).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Char ER") && stdout.contains("PER Accuracy"), "{stdout}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["report"]["document_count"], 1);
}
