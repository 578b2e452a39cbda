//! Space-time domains: finite unions of open axis-aligned boxes in ℝ^{N+1}.

use serde::{Deserialize, Serialize};

use crate::error::{KolmoError, Result};
use crate::group::GroupPoint;

/// An open box ∏ ]lo_i, hi_i[ over coordinates (x₁, …, x_N, t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() < 2 {
            return Err(KolmoError::DimensionMismatch(format!("box bounds of length {} and {}", lo.len(), hi.len())));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(KolmoError::InvalidParameter("box needs finite lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len() - 1
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        c.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a < v && v < b)
    }

    pub fn contains_closed(&self, c: &[f64]) -> bool {
        c.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    /// Largest margin m with the cube of half-width m around c inside.
    pub fn margin(&self, c: &[f64]) -> f64 {
        c.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (a, b))| (v - a).min(b - v)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub boxes: Vec<AxisBox>,
}

impl BoxDomain {
    pub fn new(boxes: Vec<AxisBox>) -> Result<Self> {
        let Some(first) = boxes.first() else {
            return Err(KolmoError::InvalidParameter("domain without boxes".into()));
        };
        if boxes.iter().any(|b| b.dim() != first.dim()) {
            return Err(KolmoError::DimensionMismatch("boxes of different dimension".into()));
        }
        Ok(Self { boxes })
    }

    pub fn single(b: AxisBox) -> Self {
        Self { boxes: vec![b] }
    }

    /// ]−1,1[^N × ]−1,0[.
    pub fn unit_box(n: usize) -> Self {
        let mut lo = vec![-1.0; n + 1];
        let mut hi = vec![1.0; n + 1];
        lo[n] = -1.0;
        hi[n] = 0.0;
        Self::single(AxisBox { lo, hi })
    }

    /// ]−h,h[^{N+1} around a point.
    pub fn cube_around(z: &GroupPoint, half: f64) -> Self {
        let c = z.coords();
        Self::single(AxisBox { lo: c.iter().map(|v| v - half).collect(), hi: c.iter().map(|v| v + half).collect() })
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn contains(&self, z: &GroupPoint) -> bool {
        let c = z.coords();
        self.boxes.iter().any(|b| b.contains(&c))
    }

    pub fn contains_closed(&self, z: &GroupPoint) -> bool {
        let c = z.coords();
        self.boxes.iter().any(|b| b.contains_closed(&c))
    }

    pub fn contains_coords(&self, c: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(c))
    }

    /// Coordinate-wise bounding box of the union.
    pub fn hull(&self) -> AxisBox {
        let d = self.dim() + 1;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for b in &self.boxes {
            for i in 0..d {
                lo[i] = lo[i].min(b.lo[i]);
                hi[i] = hi[i].max(b.hi[i]);
            }
        }
        AxisBox { lo, hi }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(KolmoError::DimensionMismatch(format!(
                "domain lives in dimension {} + 1, operator in {n} + 1",
                self.dim()
            )));
        }
        Ok(())
    }
}
