//! Nucleus classes and per-class count vectors.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 6;

/// Class names for ids 1..=6, in the default order.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "epithelial",
    "lymphocyte",
    "plasma",
    "eosinophil",
    "neutrophil",
    "connective",
];

/// Number of nuclei per class; index 0 is class 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CountVector(pub [u64; NUM_CLASSES]);

impl CountVector {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Count for class id `class` in `1..=6`.
    pub fn class(&self, class: u8) -> u64 {
        self.0[class as usize - 1]
    }

    pub fn add(&mut self, other: &CountVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

impl Index<usize> for CountVector {
    type Output = u64;
    fn index(&self, i: usize) -> &u64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CountVector {
    fn index_mut(&mut self, i: usize) -> &mut u64 {
        &mut self.0[i]
    }
}

/// Maps class ids 1..=6 to names; used to read and write count tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOrder(pub [String; NUM_CLASSES]);

impl Default for ClassOrder {
    fn default() -> Self {
        Self(CLASS_NAMES.map(String::from))
    }
}

impl ClassOrder {
    /// Class id for `name`, compared case-insensitively after trimming.
    pub fn class_of(&self, name: &str) -> Option<u8> {
        let name = name.trim();
        self.0
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| i as u8 + 1)
    }

    pub fn name(&self, class: u8) -> &str {
        &self.0[class as usize - 1]
    }
}
