//! Metadata-shift scenarios: train on one acquisition condition, test on a
//! disjoint one, leaving every other condition out entirely.

use crate::samples::RadargramSample;
use crate::{DataError, Result};
use serde::{Deserialize, Serialize};

/// The four distribution-shift protocols.
///
/// * `A`: train/val at elevations 75 and 100 cm, test at 50 cm (25 cm
///   excluded);
/// * `B`: train/val at 200 MHz, test at 350 MHz; `swap_b` reverses the
///   direction because the source material disagrees with itself on it;
/// * `C`: train/val on dry gravel, test on gravel;
/// * `D`: train/val on wet sand, test on (dry) sand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftScenario {
    A,
    B {
        /// When set, trains at 350 MHz and tests at 200 MHz.
        swap_b: bool,
    },
    C,
    D,
}

impl ShiftScenario {
    /// Parses a scenario name: "A", "B", "B-swapped", "C", "D".
    pub fn from_name(name: &str) -> Option<ShiftScenario> {
        match name {
            "A" | "a" => Some(ShiftScenario::A),
            "B" | "b" => Some(ShiftScenario::B { swap_b: false }),
            "B-swapped" | "b-swapped" => Some(ShiftScenario::B { swap_b: true }),
            "C" | "c" => Some(ShiftScenario::C),
            "D" | "d" => Some(ShiftScenario::D),
            _ => None,
        }
    }

    /// Stable name for reports.
    pub fn name(&self) -> &'static str {
        match self {
            ShiftScenario::A => "A",
            ShiftScenario::B { swap_b: false } => "B",
            ShiftScenario::B { swap_b: true } => "B-swapped",
            ShiftScenario::C => "C",
            ShiftScenario::D => "D",
        }
    }

    /// Returns which side a sample belongs to: trainval, test, or excluded.
    fn side(&self, sample: &RadargramSample) -> Side {
        match self {
            ShiftScenario::A => match sample.meta.elevation_cm {
                75 | 100 => Side::TrainVal,
                50 => Side::Test,
                _ => Side::Excluded,
            },
            ShiftScenario::B { swap_b } => {
                let (train_mhz, test_mhz) = if *swap_b { (350, 200) } else { (200, 350) };
                if sample.meta.frequency_mhz == train_mhz {
                    Side::TrainVal
                } else if sample.meta.frequency_mhz == test_mhz {
                    Side::Test
                } else {
                    Side::Excluded
                }
            }
            ShiftScenario::C => match sample.meta.soil.as_str() {
                "dry_gravel" => Side::TrainVal,
                "gravel" => Side::Test,
                _ => Side::Excluded,
            },
            ShiftScenario::D => match sample.meta.soil.as_str() {
                "wet_sand" => Side::TrainVal,
                "sand" => Side::Test,
                _ => Side::Excluded,
            },
        }
    }
}

#[derive(PartialEq)]
enum Side {
    TrainVal,
    Test,
    Excluded,
}

/// Partitions sample indices into (trainval, test) according to the
/// scenario's metadata filters. Samples matching neither side are dropped.
/// Errors if either side ends up empty.
pub fn apply_scenario(
    samples: &[RadargramSample],
    scenario: ShiftScenario,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut trainval = Vec::new();
    let mut test = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        match scenario.side(sample) {
            Side::TrainVal => trainval.push(i),
            Side::Test => test.push(i),
            Side::Excluded => {}
        }
    }
    if trainval.is_empty() {
        return Err(DataError::Scenario(format!(
            "scenario {}: train/val filter matched no samples",
            scenario.name()
        )));
    }
    if test.is_empty() {
        return Err(DataError::Scenario(format!(
            "scenario {}: test filter matched no samples",
            scenario.name()
        )));
    }
    Ok((trainval, test))
}
