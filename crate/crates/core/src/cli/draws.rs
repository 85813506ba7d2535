//! Plain-text draws table and its metadata sidecar.
//!
//! One row per kept draw. Values are written with the shortest decimal
//! representation that parses back to the same `f64`, so summaries computed
//! from the file match summaries computed in memory bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, RegressionState, TestParams, N_TESTS};
use crate::sampler::{BlockStats, ChainDraws, Draw};

use super::CliError;

pub const DRAWS_FILE: &str = "draws.csv";
pub const METADATA_FILE: &str = "metadata.toml";

/// Name and meaning of one draws column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub description: String,
}

fn col(name: impl Into<String>, description: impl Into<String>) -> Column {
    Column {
        name: name.into(),
        description: description.into(),
    }
}

/// Column dictionary for a dataset with these regions and sampled tracts.
pub fn columns(regions: &[String], sampled_tracts: &[String]) -> Vec<Column> {
    let mut c = vec![col("chain", "chain index"), col("draw", "kept draw index within the chain")];
    for j in 0..N_TESTS {
        c.push(col(format!("sensitivity[{}]", j + 1), format!("sensitivity of test {}", j + 1)));
    }
    for j in 0..N_TESTS {
        c.push(col(format!("specificity[{}]", j + 1), format!("specificity of test {}", j + 1)));
    }
    c.push(col("cov_infected", "IgG pair covariance among the infected"));
    c.push(col("cov_uninfected", "IgG pair covariance among the uninfected"));
    c.push(col("alpha", "global intercept (logit scale)"));
    c.push(col("sigma", "sd of region intercepts"));
    c.push(col("tau", "sd of tract effects"));
    c.push(col("beta[1]", "age 18-44 contrast"));
    c.push(col("beta[2]", "age 45-64 contrast"));
    c.push(col("beta[3]", "male contrast"));
    c.push(col("beta_tract", "standardized log tract population"));
    for (i, r) in regions.iter().enumerate() {
        c.push(col(format!("alpha_region[{}]", i + 1), format!("intercept of {r}")));
    }
    for (i, t) in sampled_tracts.iter().enumerate() {
        c.push(col(format!("tract_effect[{}]", i + 1), format!("effect of tract {t}")));
    }
    c.push(col("prevalence", "poststratified statewide prevalence"));
    for (i, r) in regions.iter().enumerate() {
        c.push(col(format!("prevalence_region[{}]", i + 1), format!("poststratified prevalence of {r}")));
    }
    c
}

/// Scalar parameters reported with diagnostics, and how to read them.
pub const SCALAR_PARAMETERS: [&str; 16] = [
    "sensitivity[1]",
    "sensitivity[2]",
    "sensitivity[3]",
    "specificity[1]",
    "specificity[2]",
    "specificity[3]",
    "cov_infected",
    "cov_uninfected",
    "alpha",
    "sigma",
    "tau",
    "beta[1]",
    "beta[2]",
    "beta[3]",
    "beta_tract",
    "prevalence",
];

pub fn scalar_value(d: &Draw, name: &str) -> f64 {
    let t = &d.tests;
    let r = &d.regression;
    match name {
        "sensitivity[1]" => t.sensitivity[0],
        "sensitivity[2]" => t.sensitivity[1],
        "sensitivity[3]" => t.sensitivity[2],
        "specificity[1]" => t.specificity[0],
        "specificity[2]" => t.specificity[1],
        "specificity[3]" => t.specificity[2],
        "cov_infected" => t.cov_infected,
        "cov_uninfected" => t.cov_uninfected,
        "alpha" => r.alpha,
        "sigma" => r.sigma(),
        "tau" => r.tau(),
        "beta[1]" => r.beta_stratum[0],
        "beta[2]" => r.beta_stratum[1],
        "beta[3]" => r.beta_stratum[2],
        "beta_tract" => r.beta_tract,
        "prevalence" => d.prevalence,
        _ => panic!("unknown parameter {name}"),
    }
}

fn draw_row(chain: usize, k: usize, d: &Draw) -> Vec<String> {
    let t = &d.tests;
    let r = &d.regression;
    let mut v = vec![chain.to_string(), k.to_string()];
    let nums = t
        .sensitivity
        .iter()
        .chain(&t.specificity)
        .chain([&t.cov_infected, &t.cov_uninfected, &r.alpha])
        .copied()
        .chain([r.sigma(), r.tau()])
        .chain(r.beta_stratum)
        .chain([r.beta_tract])
        .chain(r.alpha_region.iter().copied())
        .chain(r.tract_effects.iter().copied())
        .chain([d.prevalence])
        .chain(d.region_prevalence.iter().copied());
    v.extend(nums.map(|x| x.to_string()));
    v
}

pub fn draws_csv(chains: &[ChainDraws], columns: &[Column]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(columns.iter().map(|c| c.name.as_str())).expect("in-memory write");
    for c in chains {
        for (k, d) in c.draws.iter().enumerate() {
            w.write_record(draw_row(c.chain, k, d)).expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory write")
}

/// Parses a draws table. Variances are rebuilt from the stored sds, which
/// is exact for everything downstream because only the sds are used there.
pub fn read_draws(path: &Path, n_regions: usize, n_tracts: usize) -> Result<Vec<ChainDraws>, CliError> {
    let bytes = super::io::read_file(path)?;
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let width = 2 + 2 * N_TESTS + 2 + 3 + 3 + 1 + n_regions + n_tracts + 1 + n_regions;
    let header = rdr.headers().map_err(|e| CliError::Csv {
        file: file.clone(),
        message: e.to_string(),
    })?
    .clone();
    if header.len() != width {
        return Err(CliError::Csv {
            file,
            message: format!("{} columns, expected {width}", header.len()),
        });
    }
    let mut chains: Vec<ChainDraws> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Csv {
            file: file.clone(),
            message: e.to_string(),
        })?;
        let mut x = Vec::with_capacity(width);
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CliError::Cell {
                file: file.clone(),
                row: i + 1,
                column: header.get(j).unwrap_or("?").to_string(),
                message: format!("'{field}' is not a number"),
            })?;
            x.push(v);
        }
        let chain = x[0] as usize;
        let mut it = x[2..].iter().copied();
        let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
        let s = take(N_TESTS);
        let c = take(N_TESTS);
        let cov = take(2);
        let scal = take(3);
        let beta = take(3);
        let beta_tract = take(1)[0];
        let alpha_region = take(n_regions);
        let tract_effects = take(n_tracts);
        let prevalence = take(1)[0];
        let region_prevalence = take(n_regions);
        let draw = Draw {
            tests: TestParams {
                sensitivity: [s[0], s[1], s[2]],
                specificity: [c[0], c[1], c[2]],
                cov_infected: cov[0],
                cov_uninfected: cov[1],
            },
            regression: RegressionState {
                alpha_region,
                alpha: scal[0],
                sigma2: scal[1] * scal[1],
                beta_stratum: [beta[0], beta[1], beta[2]],
                beta_tract,
                tract_effects,
                tau2: scal[2] * scal[2],
            },
            prevalence,
            region_prevalence,
        };
        match chains.iter_mut().find(|c| c.chain == chain) {
            Some(c) => c.draws.push(draw),
            None => chains.push(ChainDraws {
                chain,
                draws: vec![draw],
                latent: Vec::new(),
                acceptance: Vec::new(),
            }),
        }
    }
    Ok(chains)
}

/// Acceptance rate of one block in one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRecord {
    pub chain: usize,
    pub block: String,
    pub proposed: u64,
    pub accepted: u64,
    pub rate: f64,
    pub final_step: f64,
}

impl AcceptanceRecord {
    pub fn from_stats(chain: usize, s: &BlockStats) -> Self {
        AcceptanceRecord {
            chain,
            block: s.block.to_string(),
            proposed: s.proposed,
            accepted: s.accepted,
            rate: s.rate(),
            final_step: s.step,
        }
    }
}

/// Labels needed to interpret the draws table.
pub fn dataset_labels(data: &Dataset) -> (Vec<String>, Vec<String>) {
    (
        data.regions.clone(),
        data.sampled_tracts.iter().map(|&t| data.tracts[t].label.clone()).collect(),
    )
}
