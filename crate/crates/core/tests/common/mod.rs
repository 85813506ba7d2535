#![allow(dead_code)]

use std::io::Write;

use seroprev::domain::{
    validate_dataset, Dataset, NonResponseRow, ParticipantRow, PostStratRow, RawTables, Stratum, TractRow,
    ValidationOptions,
};

/// Writes straight to stderr so the line shows even when test output is
/// captured.
pub fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} [{name}]: {status} ({detail})");
}

/// One region with the given tracts (label, total population). Every tract
/// gets six poststratification cells of equal size.
pub fn frame(tracts: &[(&str, f64)], nonresponse: f64) -> RawTables {
    let mut raw = RawTables::default();
    for (i, &(t, pop)) in tracts.iter().enumerate() {
        raw.tracts.push(TractRow {
            row: i + 1,
            tract: t.into(),
            region: "R".into(),
            total_population: pop,
        });
        for s in Stratum::all() {
            raw.poststrat.push(PostStratRow {
                row: raw.poststrat.len() + 1,
                region: "R".into(),
                tract: t.into(),
                age_group: s.age_group.label().into(),
                sex: s.sex.label().into(),
                adult_population: (pop * 0.75 / 6.0).round(),
            });
        }
    }
    raw.nonresponse.push(NonResponseRow {
        row: 1,
        region: "R".into(),
        rate: nonresponse,
    });
    raw
}

pub fn add_participant(raw: &mut RawTables, tract: &str, tests: [Option<bool>; 3]) {
    let n = raw.participants.len();
    raw.participants.push(ParticipantRow {
        row: n + 1,
        id: format!("p{:04}", n + 1),
        region: "R".into(),
        age_group: Some("45-64".into()),
        sex: Some("female".into()),
        tract: tract.into(),
        tests,
    });
}

pub fn dataset(raw: &RawTables) -> Dataset {
    validate_dataset(raw, ValidationOptions::default()).expect("valid fixture").dataset
}
