#![allow(dead_code)]

pub mod oracles;

use ettkit::dataset::{Instrument, PaKey};
use ettkit::design::{ColumnKind, Design};
use ettkit::linalg::RowMatrix;
use ettkit::{AnalysisDataset, Hand, PlateAppearance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn continuous_design(names: &[&str], columns: &[Vec<f64>]) -> Design {
    Design {
        matrix: RowMatrix::from_columns(names.iter().map(|s| s.to_string()).collect(), columns),
        kinds: vec![ColumnKind::Continuous; names.len()],
    }
}

/// One row of a hand-built dataset.
pub struct Row {
    pub year: i32,
    pub stand: Hand,
    pub treated: bool,
    pub y: f64,
    pub z: f64,
    pub covariates: Vec<f64>,
}

pub fn dataset(names: &[&str], rows: Vec<Row>) -> AnalysisDataset {
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| PlateAppearance {
            key: PaKey {
                game_year: r.year,
                game_id: i as u64 / 70,
                at_bat_number: (i % 70) as u32 + 1,
                batter_id: i as u64,
                pitcher_id: 10_000 + i as u64,
                fielding_team: "T01".into(),
            },
            stand: r.stand,
            p_throws: if i % 3 == 0 { Hand::Left } else { Hand::Right },
            treated: r.treated,
            outcome: r.y,
            instrument: Instrument { rate: r.z, std_error: 0.0 },
            covariates: r.covariates,
        })
        .collect();
    AnalysisDataset::new(names.iter().map(|s| s.to_string()).collect(), rows).unwrap()
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
