//! Regular evaluation grids, parallel sweeps and connected-component masks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Domain("bounds need matching non-empty corners".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::Domain("bounds must be finite with lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn square(half_width: f64, dim: usize) -> Self {
        Self { lower: vec![-half_width; dim], upper: vec![half_width; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| v >= l && v <= u)
    }
}

/// Node grid with `counts[k]` points along axis `k`, endpoints included.
/// Flat indices run with the first axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub bounds: Bounds,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: Bounds, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != bounds.dim() || counts.iter().any(|&c| c < 2) {
            return Err(Error::Domain("grid needs at least 2 nodes per axis".into()));
        }
        Ok(Self { bounds, counts })
    }

    pub fn uniform(bounds: Bounds, n: usize) -> Result<Self> {
        let d = bounds.dim();
        Self::new(bounds, vec![n; d])
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bounds.upper[axis] - self.bounds.lower[axis]) / (self.counts[axis] - 1) as f64
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&c| {
                let i = flat % c;
                flat /= c;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for k in (0..idx.len()).rev() {
            flat = flat * self.counts[k] + idx[k];
        }
        flat
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.bounds.lower[k] + i as f64 * self.spacing(k))
            .collect()
    }

    /// Node nearest to `x`, clamped into the grid.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.counts.len())
            .map(|k| {
                let r = ((x[k] - self.bounds.lower[k]) / self.spacing(k)).round();
                r.clamp(0.0, (self.counts[k] - 1) as f64) as usize
            })
            .collect();
        self.flat_index(&idx)
    }

    /// Evaluates `f` at every node.
    pub fn evaluate<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        par_map(self.len(), |k| f(&self.point(k)))
    }

    fn neighbours(&self, flat: usize, out: &mut Vec<usize>) {
        out.clear();
        let idx = self.multi_index(flat);
        let mut stride = 1;
        for k in 0..idx.len() {
            if idx[k] > 0 {
                out.push(flat - stride);
            }
            if idx[k] + 1 < self.counts[k] {
                out.push(flat + stride);
            }
            stride *= self.counts[k];
        }
    }

    /// Nodes with `inside[k]` that are face-connected to `seed`.
    pub fn component(&self, inside: &[bool], seed: usize) -> Vec<bool> {
        let mut mask = vec![false; inside.len()];
        if !inside[seed] {
            return mask;
        }
        let mut queue = VecDeque::from([seed]);
        mask[seed] = true;
        let mut nb = Vec::with_capacity(2 * self.counts.len());
        while let Some(k) = queue.pop_front() {
            self.neighbours(k, &mut nb);
            for &j in &nb {
                if inside[j] && !mask[j] {
                    mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
        mask
    }
}

/// `(0..n).map(f)` collected in order, in parallel when the `parallel`
/// feature is on.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Grid::new(Bounds::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap(), vec![3, 4, 5]).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(k)), k);
        }
        assert_eq!(g.point(g.len() - 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(g.nearest(&[0.49, 0.7, 10.0]), g.flat_index(&[1, 1, 4]));
    }

    #[test]
    fn component_ignores_disconnected_blobs() {
        let g = Grid::uniform(Bounds::square(1.0, 2), 21).unwrap();
        let inside: Vec<bool> = g
            .evaluate(|x| {
                let a = (x[0] + 0.5).powi(2) + x[1].powi(2) < 0.1;
                let b = (x[0] - 0.5).powi(2) + x[1].powi(2) < 0.1;
                a || b
            });
        let seed = g.nearest(&[-0.5, 0.0]);
        let comp = g.component(&inside, seed);
        assert!(comp[seed]);
        assert!(!comp[g.nearest(&[0.5, 0.0])]);
        assert!(inside[g.nearest(&[0.5, 0.0])]);
    }
}
