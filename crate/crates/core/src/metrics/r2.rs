//! Coefficient of determination for per-class counts.

use serde::{Deserialize, Serialize};

use crate::classes::{CountVector, NUM_CLASSES};
use crate::error::{Error, Result};

/// `1 − RSS/TSS`. When the ground truth is constant (TSS = 0) the result is
/// 1 for a perfect prediction and `None` otherwise.
pub fn r_squared(gt: &[u64], pred: &[u64]) -> Result<Option<f64>> {
    if gt.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "{} ground-truth counts but {} predicted",
            gt.len(),
            pred.len()
        )));
    }
    if gt.len() < 2 {
        return Err(Error::Invalid("R² needs at least two patches".into()));
    }
    let mean = gt.iter().map(|&v| v as f64).sum::<f64>() / gt.len() as f64;
    let tss: f64 = gt.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    let rss: f64 = gt.iter().zip(pred).map(|(&g, &p)| (g as f64 - p as f64).powi(2)).sum();
    if tss == 0.0 {
        return Ok((rss == 0.0).then_some(1.0));
    }
    Ok(Some(1.0 - rss / tss))
}

/// Ground-truth and predicted counts, aligned by patch.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountTable {
    gt: Vec<CountVector>,
    pred: Vec<CountVector>,
}

impl CountTable {
    pub fn new(gt: Vec<CountVector>, pred: Vec<CountVector>) -> Result<Self> {
        if gt.len() != pred.len() {
            return Err(Error::Counts(format!(
                "{} ground-truth rows but {} predicted rows",
                gt.len(),
                pred.len()
            )));
        }
        Ok(Self { gt, pred })
    }

    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    pub fn gt(&self) -> &[CountVector] {
        &self.gt
    }

    pub fn pred(&self) -> &[CountVector] {
        &self.pred
    }

    fn column(rows: &[CountVector], c: usize) -> Vec<u64> {
        rows.iter().map(|r| r[c]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiR {
    pub per_class: [Option<f64>; NUM_CLASSES],
    /// Unweighted mean over classes with a defined R².
    pub mean: f64,
}

pub fn multi_r(table: &CountTable) -> Result<MultiR> {
    let mut per_class = [None; NUM_CLASSES];
    for (c, slot) in per_class.iter_mut().enumerate() {
        *slot = r_squared(&CountTable::column(&table.gt, c), &CountTable::column(&table.pred, c))?;
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Undefined("R² undefined for every class".into()));
    }
    Ok(MultiR {
        per_class,
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        assert_eq!(r_squared(&[3, 1, 4], &[3, 1, 4]).unwrap(), Some(1.0));
        assert_eq!(r_squared(&[1, 2, 3], &[1, 2, 4]).unwrap(), Some(0.5));
        assert_eq!(r_squared(&[1, 2, 3], &[2, 2, 2]).unwrap(), Some(0.0));
        assert_eq!(r_squared(&[2, 2], &[2, 2]).unwrap(), Some(1.0));
        assert_eq!(r_squared(&[2, 2], &[2, 3]).unwrap(), None);
    }

    #[test]
    fn invalid_inputs() {
        assert!(r_squared(&[1, 2], &[1]).is_err());
        assert!(r_squared(&[1], &[1]).is_err());
        assert!(CountTable::new(vec![CountVector::default()], vec![]).is_err());
    }

    #[test]
    fn multi_r_composes_per_class() {
        let gt: Vec<CountVector> = (1..=3).map(|v| CountVector([v; 6])).collect();
        let mut pred = gt.clone();
        pred[2][0] = 4;
        let m = multi_r(&CountTable::new(gt.clone(), pred).unwrap()).unwrap();
        assert_eq!(m.per_class[0], Some(0.5));
        assert!((m.mean - 5.5 / 6.0).abs() < 1e-15);

        // A constant, mispredicted column is left out of the mean.
        let mut gt2 = gt.clone();
        for r in &mut gt2 {
            r[3] = 7;
        }
        let mut pred2 = gt2.clone();
        pred2[0][3] = 8;
        let m = multi_r(&CountTable::new(gt2, pred2).unwrap()).unwrap();
        assert_eq!(m.per_class[3], None);
        assert_eq!(m.mean, 1.0);
    }
}
