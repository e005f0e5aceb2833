//! The eight laboratory-instrument categories shared by the simulator, the
//! dataset generator and the evaluator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    CellScraper,
    MicroTestTube,
    NeedleHolder,
    PasteurPipette,
    Pipettor,
    CentrifugeTestTube,
    VacuumTestTube,
    Swab,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 8] = [
        ObjectClass::CellScraper,
        ObjectClass::MicroTestTube,
        ObjectClass::NeedleHolder,
        ObjectClass::PasteurPipette,
        ObjectClass::Pipettor,
        ObjectClass::CentrifugeTestTube,
        ObjectClass::VacuumTestTube,
        ObjectClass::Swab,
    ];

    /// COCO category id, 1-based.
    pub fn category_id(self) -> u32 {
        self.index() as u32 + 1
    }

    pub fn index(self) -> usize {
        ObjectClass::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn from_category_id(id: u32) -> Option<Self> {
        (id as usize)
            .checked_sub(1)
            .and_then(|i| ObjectClass::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::CellScraper => "cell_scraper",
            ObjectClass::MicroTestTube => "micro_test_tube",
            ObjectClass::NeedleHolder => "needle_holder",
            ObjectClass::PasteurPipette => "pasteur_pipette",
            ObjectClass::Pipettor => "pipettor",
            ObjectClass::CentrifugeTestTube => "centrifuge_test_tube",
            ObjectClass::VacuumTestTube => "vacuum_test_tube",
            ObjectClass::Swab => "swab",
        }
    }

    /// Human-readable label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ObjectClass::CellScraper => "Cell scraper",
            ObjectClass::MicroTestTube => "Micro test tube",
            ObjectClass::NeedleHolder => "Needle holder",
            ObjectClass::PasteurPipette => "Pasteur pipette",
            ObjectClass::Pipettor => "Pipettor",
            ObjectClass::CentrifugeTestTube => "Centrifuge test tube",
            ObjectClass::VacuumTestTube => "Vacuum test tube",
            ObjectClass::Swab => "Swab",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownClass(pub String);

impl fmt::Display for UnknownClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown object class `{}`", self.0)
    }
}

impl std::error::Error for UnknownClass {}

impl FromStr for ObjectClass {
    type Err = UnknownClass;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownClass(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_names_round_trip() {
        for c in ObjectClass::ALL {
            assert_eq!(ObjectClass::from_category_id(c.category_id()), Some(c));
            assert_eq!(c.name().parse::<ObjectClass>(), Ok(c));
        }
        assert_eq!(ObjectClass::from_category_id(0), None);
        assert_eq!(ObjectClass::from_category_id(9), None);
    }
}
