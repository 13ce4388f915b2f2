use crate::error::{ensure, Result};

/// Uniform grid over a box of continuous actions, `bins` points per
/// dimension including both bounds. Index `i` enumerates the grid with the
/// first dimension varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    low: Vec<f64>,
    high: Vec<f64>,
    bins: usize,
}

impl ActionGrid {
    pub const MIN_BINS: usize = 2;

    pub fn new(low: Vec<f64>, high: Vec<f64>, bins: usize) -> Result<Self> {
        ensure!(
            low.len() == high.len() && !low.is_empty(),
            "bounds must be non-empty and equal length"
        );
        ensure!(
            bins >= Self::MIN_BINS,
            "need at least {} bins per dimension",
            Self::MIN_BINS
        );
        ensure!(
            low.iter().zip(&high).all(|(l, h)| l < h),
            "each lower bound must be below its upper bound"
        );
        Ok(ActionGrid { low, high, bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn len(&self) -> usize {
        self.bins.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn action(&self, index: usize) -> Vec<f64> {
        assert!(index < self.len(), "grid index {index} out of range");
        let mut rem = index;
        let mut out = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            let k = rem % self.bins;
            rem /= self.bins;
            let f = k as f64 / (self.bins - 1) as f64;
            out[d] = if k == self.bins - 1 {
                self.high[d]
            } else {
                self.low[d] + f * (self.high[d] - self.low[d])
            };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_grid() {
        let g = ActionGrid::new(vec![-2.0], vec![2.0], 5).unwrap();
        let acts: Vec<f64> = (0..g.len()).map(|i| g.action(i)[0]).collect();
        assert_eq!(acts, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn two_dimensional_order() {
        let g = ActionGrid::new(vec![0.0, 10.0], vec![1.0, 20.0], 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.action(0), vec![0.0, 10.0]);
        assert_eq!(g.action(1), vec![0.0, 15.0]);
        assert_eq!(g.action(3), vec![0.5, 10.0]);
        assert_eq!(g.action(8), vec![1.0, 20.0]);
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(ActionGrid::new(vec![0.0], vec![1.0], 1).is_err());
        assert!(ActionGrid::new(vec![1.0], vec![1.0], 3).is_err());
    }
}
