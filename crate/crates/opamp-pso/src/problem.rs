//! The problem interface the engine optimizes against.

use rand::Rng;

use crate::error::ConfigError;

/// Per-dimension search-space box.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    /// Requires `lower[d] < upper[d]` for every dimension and at least one
    /// dimension.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ConfigError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(ConfigError::new(
                "bounds",
                format!(
                    "dimension mismatch or empty: lower has {}, upper has {}",
                    lower.len(),
                    upper.len()
                ),
            ));
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(ConfigError::new(
                    "bounds",
                    format!("dimension {d}: lower {lo} must be < upper {hi}"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Uniform draw within the box, one value per dimension in order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + rng.gen::<f64>() * (hi - lo))
            .collect()
    }

    pub fn contains(&self, position: &[f64]) -> bool {
        position.len() == self.dim()
            && position
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Per-dimension range `upper - lower`.
    pub fn range(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }
}

/// Outcome of the survivability test: pass/fail plus whatever diagnostics the
/// backend can name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Survival {
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

impl Survival {
    pub fn pass() -> Self {
        Self {
            pass: true,
            diagnostics: Vec::new(),
        }
    }

    pub fn fail(diagnostics: Vec<String>) -> Self {
        Self {
            pass: false,
            diagnostics,
        }
    }
}

/// A constrained minimization problem. `fitness` and `survive` must be
/// deterministic for a fixed position and safe for concurrent read-only
/// invocation; particle evaluations within one iteration may run in
/// parallel.
pub trait Problem: Sync {
    fn fitness(&self, position: &[f64]) -> f64;
    fn survive(&self, position: &[f64]) -> Survival;
    fn bounds(&self) -> Bounds;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn bounds_reject_inverted_interval() {
        assert!(Bounds::new(vec![1.0], vec![1.0]).is_err());
        assert!(Bounds::new(vec![2.0], vec![1.0]).is_err());
        assert!(Bounds::new(vec![], vec![]).is_err());
    }

    #[test]
    fn sample_stays_inside() {
        let b = Bounds::new(vec![-1.0, 10.0], vec![1.0, 20.0]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert!(b.contains(&b.sample(&mut rng)));
        }
    }
}
