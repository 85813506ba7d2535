//! Small hand-built datasets shared by unit tests.

use crate::domain::{
    validate_dataset, Dataset, NonResponseRow, ParticipantRow, PostStratRow, RawTables, Stratum, TractRow,
    ValidationOptions,
};

/// Two regions, five tracts (one never sampled) and fourteen participants
/// with a mix of complete and partial panels.
pub fn tiny_raw() -> RawTables {
    let mut raw = RawTables::default();
    let tracts = [
        ("A1", "East", 1200.0),
        ("A2", "East", 4100.0),
        ("A3", "East", 800.0),
        ("B1", "West", 2600.0),
        ("B2", "West", 9000.0),
    ];
    for (i, &(t, r, pop)) in tracts.iter().enumerate() {
        raw.tracts.push(TractRow {
            row: i + 1,
            tract: t.into(),
            region: r.into(),
            total_population: pop,
        });
        for (k, s) in Stratum::all().enumerate() {
            raw.poststrat.push(PostStratRow {
                row: raw.poststrat.len() + 1,
                region: r.into(),
                tract: t.into(),
                age_group: s.age_group.label().into(),
                sex: s.sex.label().into(),
                adult_population: pop * (0.08 + 0.02 * k as f64),
            });
        }
    }
    raw.nonresponse = vec![
        NonResponseRow {
            row: 1,
            region: "East".into(),
            rate: 0.8,
        },
        NonResponseRow {
            row: 2,
            region: "West".into(),
            rate: 0.75,
        },
    ];
    let y = Some(true);
    let n = Some(false);
    let people: [(&str, &str, &str, &str, [Option<bool>; 3]); 14] = [
        ("A1", "18-44", "male", "East", [n, n, n]),
        ("A1", "45-64", "female", "East", [y, y, y]),
        ("A1", "65+", "female", "East", [n, n, y]),
        ("A2", "18-44", "female", "East", [n, n, n]),
        ("A2", "18-44", "female", "East", [y, n, None]),
        ("A2", "65+", "male", "East", [None, None, n]),
        ("B1", "45-64", "male", "West", [n, None, n]),
        ("B1", "18-44", "female", "West", [y, y, n]),
        ("B1", "65+", "female", "West", [n, y, n]),
        ("B2", "45-64", "female", "West", [n, n, n]),
        ("B2", "45-64", "male", "West", [None, y, None]),
        ("B2", "18-44", "male", "West", [n, n, n]),
        ("B2", "65+", "female", "West", [y, None, y]),
        ("B2", "18-44", "female", "West", [n, n, None]),
    ];
    for (i, &(tract, age, sex, region, tests)) in people.iter().enumerate() {
        raw.participants.push(ParticipantRow {
            row: i + 1,
            id: format!("p{:02}", i + 1),
            region: region.into(),
            age_group: Some(age.into()),
            sex: Some(sex.into()),
            tract: tract.into(),
            tests,
        });
    }
    raw
}

pub fn tiny_dataset() -> Dataset {
    validate_dataset(&tiny_raw(), ValidationOptions::default())
        .expect("fixture is valid")
        .dataset
}
