use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Brute-force k-nearest-neighbors over standardized vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub is_bot: Vec<bool>,
}

impl KnnModel {
    pub fn fit(k: usize, points: Vec<Vec<f64>>, is_bot: Vec<bool>) -> Self {
        Self { k, points, is_bot }
    }

    /// Fraction of the `k` nearest training points labeled bot. Equal
    /// distances are ordered by training index.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let n = self.points.len();
        if self.k > n {
            return Err(Error::KExceedsTrainingSize { k: self.k, n });
        }
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < n {
            d.select_nth_unstable_by(self.k - 1, cmp);
        }
        let bots = d[..self.k].iter().filter(|(_, i)| self.is_bot[*i]).count();
        Ok(bots as f64 / self.k as f64)
    }
}
