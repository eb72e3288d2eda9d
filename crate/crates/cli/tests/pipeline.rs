mod common;

use std::path::Path;

use screenlens::{cmd_evaluate, cmd_index, cmd_query, extract_with, render_hits, PipelineError, XML_FILE_NAME};
use screenlens_core::docmodel::{from_xml, to_xml_batch};
use screenlens_core::imaging::BoundingBox;
use screenlens_core::metrics::{evaluate_pair, DocumentOutcome, Normalization};
use screenlens_core::{Bm25Params, ScreenshotDocument};

use common::*;

fn bx(x: u32, y: u32, w: u32, h: u32) -> BoundingBox {
    BoundingBox::new(x, y, w, h)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) {
    std::fs::write(dir.join(name), bytes).unwrap();
}

#[test]
fn empty_directory() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let summary = extract_with(&config(input.path(), out.path()), &GeometryOcr).unwrap();
    assert_eq!((summary.images, summary.documents, summary.segments), (0, 0, 0));
    assert!(summary.failures.is_empty());
    let xml = std::fs::read_to_string(out.path().join(XML_FILE_NAME)).unwrap();
    assert_eq!(xml, to_xml_batch(&[]));
    assert!(from_xml(&xml).unwrap().is_empty());
}

#[test]
fn three_images_against_hand_built_xml() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let body = bx(10, 40, 60, 12);
    let banner = bx(10, 5, 30, 10);
    write(input.path(), "ann_20170301T100000.png", &blocks_png(100, 80, &[banner, body]));
    write(input.path(), "ann_20170301T100500.png", &blocks_png(100, 80, &[body]));
    write(input.path(), "ben_20170302T090000.png", &blocks_png(100, 80, &[banner]));
    let ocr = TableOcr(vec![(banner, "9:41 100%".into()), (body, "Lunch at noon".into())]);

    let summary = extract_with(&config(input.path(), out.path()), &ocr).unwrap();
    assert_eq!((summary.images, summary.documents, summary.segments), (3, 3, 4));
    assert_eq!(summary.banners_removed, 1);
    assert_eq!(summary.exit_code(), 0);

    let xml = std::fs::read_to_string(out.path().join(XML_FILE_NAME)).unwrap();
    let expected = r#"<?xml version="1.0" encoding="UTF-8"?>
<add>
  <doc>
    <field name="id">ann_20170301T100000</field>
    <field name="timestamp">2017-03-01T10:00:00Z</field>
    <field name="category"></field>
    <field name="text">Lunch at noon</field>
    <field name="previous_image"></field>
    <field name="next_image">ann_20170301T100500.png</field>
  </doc>
  <doc>
    <field name="id">ann_20170301T100500</field>
    <field name="timestamp">2017-03-01T10:05:00Z</field>
    <field name="category"></field>
    <field name="text">Lunch at noon</field>
    <field name="previous_image">ann_20170301T100000.png</field>
    <field name="next_image"></field>
  </doc>
  <doc>
    <field name="id">ben_20170302T090000</field>
    <field name="timestamp">2017-03-02T09:00:00Z</field>
    <field name="category"></field>
    <field name="text">9:41 100%</field>
    <field name="previous_image"></field>
    <field name="next_image"></field>
  </doc>
</add>
"#;
    assert_eq!(xml, expected);
    assert_eq!(std::fs::read_to_string(out.path().join("ann_20170301T100000.txt")).unwrap(), "Lunch at noon\n");
    assert_eq!(std::fs::read_to_string(out.path().join("ben_20170302T090000.txt")).unwrap(), "9:41 100%\n");
}

#[test]
fn no_banner_strip_keeps_status_line() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let (banner, body) = (bx(10, 5, 30, 10), bx(10, 40, 60, 12));
    write(input.path(), "ann_20170301T100000.png", &blocks_png(100, 80, &[banner, body]));
    let ocr = TableOcr(vec![(banner, "9:41 100%".into()), (body, "Lunch".into())]);
    let mut s = settings(input.path(), out.path());
    s.set("no-banner-strip", "true");
    let cfg = screenlens::PipelineConfig::from_settings(&s).unwrap();
    let summary = extract_with(&cfg, &ocr).unwrap();
    assert_eq!(summary.banners_removed, 0);
    assert_eq!(std::fs::read_to_string(out.path().join("ann_20170301T100000.txt")).unwrap(), "9:41 100%\nLunch\n");
}

#[test]
fn corrupt_and_misnamed_images_are_isolated() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let png = blocks_png(50, 40, &[bx(5, 5, 30, 10)]);
    write(input.path(), "ann_20170301T100000.png", &png);
    write(input.path(), "ann_20170301T100100.png", b"not a png at all");
    write(input.path(), "ann_20170301T100200.png", &png);
    write(input.path(), "holiday.png", &png);
    write(input.path(), "notes.txt", b"ignored");

    let summary = extract_with(&config(input.path(), out.path()), &GeometryOcr).unwrap();
    assert_eq!(summary.images, 4);
    assert_eq!(summary.documents, 2);
    let failed: Vec<&str> = summary.failures.iter().map(|f| f.file.as_str()).collect();
    assert_eq!(failed, ["ann_20170301T100100.png", "holiday.png"]);
    assert_eq!(summary.exit_code(), 2);
    let docs = from_xml(&std::fs::read_to_string(out.path().join(XML_FILE_NAME)).unwrap()).unwrap();
    assert_eq!(docs.len(), 2);
    // the chain skips the broken frame
    assert_eq!(docs[0].next_image.as_deref(), Some("ann_20170301T100200.png"));
}

#[test]
fn duplicate_ids_across_extensions() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let png = blocks_png(50, 40, &[bx(5, 5, 30, 10)]);
    write(input.path(), "ann_20170301T100000.png", &png);
    write(input.path(), "ann_20170301T100000.PNG", &png);
    let summary = extract_with(&config(input.path(), out.path()), &GeometryOcr).unwrap();
    assert_eq!(summary.documents, 1);
    assert_eq!(summary.failures.len(), 1);
    assert!(summary.failures[0].error.contains("ann_20170301T100000"));
}

#[test]
fn missing_engine_is_fatal() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut s = settings(input.path(), out.path());
    s.set("engine-cmd", "/no/such/engine {input} {output}");
    let cfg = screenlens::PipelineConfig::from_settings(&s).unwrap();
    assert!(matches!(screenlens::cmd_extract(&cfg), Err(PipelineError::Config(_))));
    assert!(!out.path().join(XML_FILE_NAME).exists());
}

#[test]
fn missing_input_directory_is_fatal() {
    let out = tempfile::tempdir().unwrap();
    let s = settings(Path::new("/no/such/dir"), out.path());
    assert!(screenlens::PipelineConfig::from_settings(&s).is_err());
}

#[test]
fn evaluate_identical_dirs_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    for (stem, text) in [("a", "hello world"), ("b", "one two three")] {
        write(dir.path(), &format!("{stem}.txt"), format!("{text}\n").as_bytes());
    }
    let run = cmd_evaluate(dir.path(), dir.path(), &Normalization::default(), "same").unwrap();
    assert_eq!(run.table.rows[0].cells(), [Some(0), Some(10_000), Some(0), Some(10_000), Some(0), Some(10_000)]);
    assert!(run.unmatched_hypotheses.is_empty());
}

#[test]
fn evaluate_matches_metric_oracle_and_reports_problems() {
    let hyp = tempfile::tempdir().unwrap();
    let refs = tempfile::tempdir().unwrap();
    write(hyp.path(), "a.txt", b"the cat sat\n");
    write(refs.path(), "a.txt", b"the cat sat down\n");
    write(hyp.path(), "b.txt", b"anything\n");
    write(refs.path(), "b.txt", b"   \n");
    write(hyp.path(), "orphan.txt", b"x\n");
    write(refs.path(), "lonely.txt", b"y\n");
    let run = cmd_evaluate(hyp.path(), refs.path(), &Normalization::default(), "t").unwrap();
    assert_eq!(run.unmatched_hypotheses, ["orphan"]);
    assert_eq!(run.unmatched_references, ["lonely"]);
    assert_eq!(run.report.document_count, 2);
    let DocumentOutcome::Scored(a) = &run.report.documents[0].outcome else { panic!() };
    assert_eq!(a, &evaluate_pair("the cat sat down", "the cat sat").unwrap());
    assert!(matches!(run.report.documents[1].outcome, DocumentOutcome::Error(_)));
    assert_eq!(run.exit_code(), 2);
}

fn doc(subject: &str, minute: u32, text: &str) -> ScreenshotDocument {
    use chrono::TimeZone;
    ScreenshotDocument::new(subject, chrono::Utc.with_ymd_and_hms(2017, 3, 1, 10, minute, 0).unwrap(), text).unwrap()
}

#[test]
fn index_is_deterministic_and_queryable() {
    let dir = tempfile::tempdir().unwrap();
    let docs = vec![doc("a", 0, "alpha beta"), doc("a", 1, "beta gamma"), doc("b", 2, "gamma delta epsilon")];
    write(dir.path(), "docs.xml", to_xml_batch(&docs).as_bytes());
    let one = dir.path().join("one.idx");
    let two = dir.path().join("two.idx");
    let stats = cmd_index(&dir.path().join("docs.xml"), &one, Bm25Params::default()).unwrap();
    cmd_index(&dir.path().join("docs.xml"), &two, Bm25Params::default()).unwrap();
    assert_eq!(stats.documents, 3);
    assert_eq!(stats.distinct_terms, 5);
    assert_eq!(std::fs::read(&one).unwrap(), std::fs::read(&two).unwrap());

    let (idx, hits) = cmd_query(&one, "epsilon", None, 10, None).unwrap();
    assert_eq!(hits[0].id, "b_20170301T100200");
    assert!(render_hits(&idx, &hits).starts_with("1 hits\n"));
    let (idx, hits) = cmd_query(&one, "xyzzy", None, 10, None).unwrap();
    assert!(render_hits(&idx, &hits).starts_with("0 hits\n"));
    for k in 0..4 {
        let (_, a) = cmd_query(&one, "beta gamma", None, k, None).unwrap();
        let (_, b) = cmd_query(&one, "beta gamma", None, k + 1, None).unwrap();
        assert_eq!(a[..], b[..a.len()]);
    }
}

#[test]
fn index_rejects_duplicate_ids_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let docs = vec![doc("a", 0, "x"), doc("a", 0, "y")];
    write(dir.path(), "docs.xml", to_xml_batch(&docs).as_bytes());
    let err = cmd_index(&dir.path().join("docs.xml"), &dir.path().join("i"), Bm25Params::default()).unwrap_err();
    assert!(err.to_string().contains("a_20170301T100000"), "{err}");
}

#[test]
fn corrupt_index_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.idx", b"SLNSIDX\0garbage");
    assert!(cmd_query(&dir.path().join("bad.idx"), "a", None, 5, None).is_err());
}
