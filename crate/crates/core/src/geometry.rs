use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_1, hi_1) × … × [lo_d, hi_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AaBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::param("box corners must have equal, nonzero dimension"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::param(format!("degenerate box {lo:?}..{hi:?}")));
        }
        Ok(AaBox { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        AaBox {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v < *b)
    }

    /// Volume of `self ∩ other`.
    pub fn overlap(&self, other: &AaBox) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        let mut vol = 1.0;
        for i in 0..self.dim() {
            let a = self.lo[i].max(other.lo[i]);
            let b = self.hi[i].min(other.hi[i]);
            if b <= a {
                return 0.0;
            }
            vol *= b - a;
        }
        vol
    }

    pub fn intersect(&self, other: &AaBox) -> Option<AaBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a < b) {
            Some(AaBox { lo, hi })
        } else {
            None
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_volume() {
        let a = AaBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let b = AaBox::new(vec![0.5, -1.0], vec![2.0, 0.5]).unwrap();
        assert!((a.overlap(&b) - 0.25).abs() < 1e-15);
        assert_eq!(a.intersect(&b).unwrap().volume(), 0.25);
        let c = AaBox::new(vec![1.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(a.overlap(&c), 0.0);
        assert!(a.intersect(&c).is_none());
    }

    #[test]
    fn half_open() {
        let a = AaBox::unit(1);
        assert!(a.contains(&[0.0]));
        assert!(!a.contains(&[1.0]));
    }

    #[test]
    fn rejects_degenerate() {
        assert!(AaBox::new(vec![0.0], vec![0.0]).is_err());
        assert!(AaBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }
}
