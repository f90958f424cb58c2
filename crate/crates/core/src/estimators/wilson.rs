use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Binomial proportion with a 95% Wilson score interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub successes: usize,
    pub replicates: usize,
    /// Event the estimate is conditioned on, if any.
    pub conditioning: Option<String>,
    /// Replicates whose infection reached the truncation boundary.
    pub boundary_contacts: usize,
}

impl EstimateCI {
    pub fn wilson(successes: usize, replicates: usize) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::param("replicates", "need at least one replicate"));
        }
        if successes > replicates {
            return Err(Error::param("successes", "cannot exceed replicates"));
        }
        let n = replicates as f64;
        let p = successes as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Ok(EstimateCI {
            point: p,
            lower: (centre - half).clamp(0.0, p),
            upper: (centre + half).clamp(p, 1.0),
            successes,
            replicates,
            conditioning: None,
            boundary_contacts: 0,
        })
    }

    pub fn conditioned_on(mut self, event: impl Into<String>) -> Self {
        self.conditioning = Some(event.into());
        self
    }

    pub fn with_boundary_contacts(mut self, n: usize) -> Self {
        self.boundary_contacts = n;
        self
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Binomial standard error of the point estimate.
    pub fn std_error(&self) -> f64 {
        (self.point * (1.0 - self.point) / self.replicates as f64).sqrt()
    }

    pub fn boundary_fraction(&self) -> f64 {
        self.boundary_contacts as f64 / self.replicates as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn known_intervals() {
        // Reference values from the closed form evaluated independently.
        let e = EstimateCI::wilson(5, 10).unwrap();
        assert_abs_diff_eq!(e.lower, 0.236_593_090_512_564_3, epsilon = 1e-12);
        assert_abs_diff_eq!(e.upper, 0.763_406_909_487_435_7, epsilon = 1e-12);
        let e = EstimateCI::wilson(0, 100).unwrap();
        assert_eq!(e.lower, 0.0);
        assert_abs_diff_eq!(e.upper, 0.036_993_498_206_986, epsilon = 1e-12);
        let e = EstimateCI::wilson(100, 100).unwrap();
        assert_eq!(e.upper, 1.0);
        assert!(EstimateCI::wilson(0, 0).is_err());
        assert!(EstimateCI::wilson(3, 2).is_err());
    }

    #[test]
    fn tightens_with_more_data() {
        // Fixed deterministic Bernoulli stream: every third trial succeeds.
        let stream = |n: usize| (0..n).filter(|i| i % 3 == 0).count();
        for n in [30, 120, 480, 1920] {
            let a = EstimateCI::wilson(stream(n), n).unwrap();
            let b = EstimateCI::wilson(stream(4 * n), 4 * n).unwrap();
            assert!(b.width() <= a.width());
        }
    }

    proptest! {
        #[test]
        fn bounds_bracket_point(n in 1usize..5000, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac).floor() as usize;
            let e = EstimateCI::wilson(k, n).unwrap();
            prop_assert!(0.0 <= e.lower && e.lower <= e.point);
            prop_assert!(e.point <= e.upper && e.upper <= 1.0);
        }
    }
}
