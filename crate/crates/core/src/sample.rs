//! Sampling plans for randomized identity testing.

use crate::number::Number;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Where and how densely to probe expressions, plus the singularity guard.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SamplePlan {
    /// `[x_lo, x_hi, y_lo, y_hi]`
    pub bounds: [f64; 4],
    /// Number of accepted sample points M.
    pub points: usize,
    pub seed: u64,
    /// Minimum allowed magnitude of any denominator constant term.
    pub eps_sing: f64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        // the default box avoids the 1/x, 1/y coordinate singularities of the
        // common fixtures
        SamplePlan {
            bounds: [0.5, 2.0, 0.5, 2.0],
            points: 25,
            seed: 20110,
            eps_sing: 1e-8,
        }
    }
}

impl SamplePlan {
    pub fn validate(&self) -> Result<(), String> {
        let [x_lo, x_hi, y_lo, y_hi] = self.bounds;
        if !(x_lo < x_hi) {
            return Err(format!("sample box needs x_lo < x_hi, got [{}, {}]", x_lo, x_hi));
        }
        if !(y_lo < y_hi) {
            return Err(format!("sample box needs y_lo < y_hi, got [{}, {}]", y_lo, y_hi));
        }
        if self.points < 1 {
            return Err("sample plan needs at least one point".into());
        }
        if !(self.eps_sing > 0.0) {
            return Err("eps_sing must be positive".into());
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Draw one point on a dyadic sub-lattice of the box. The coordinates are
    /// exact rationals, so all-rational inputs evaluate exactly.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> (Number, Number) {
        let [x_lo, x_hi, y_lo, y_hi] = self.bounds;
        (
            lattice_point(x_lo, x_hi, rng),
            lattice_point(y_lo, y_hi, rng),
        )
    }
}

const LATTICE: i64 = 4096;

fn lattice_point(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Number {
    // interior points only: k in [1, LATTICE-1]
    let k = rng.random_range(1..LATTICE);
    let lo = Number::rat_from_f64(lo);
    let hi = Number::rat_from_f64(hi);
    let t = Number::ratio(k, LATTICE);
    lo.clone() + (hi - lo) * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_exact() {
        let plan = SamplePlan::default();
        let mut r1 = plan.rng();
        let mut r2 = plan.rng();
        for _ in 0..10 {
            let a = plan.draw(&mut r1);
            let b = plan.draw(&mut r2);
            assert_eq!(a, b);
            assert!(a.0.is_exact() && a.1.is_exact());
            let (x, y) = (a.0.to_f64(), a.1.to_f64());
            assert!(x > 0.5 && x < 2.0 && y > 0.5 && y < 2.0);
        }
    }

    #[test]
    fn rejects_bad_box() {
        let mut plan = SamplePlan::default();
        plan.bounds = [2.0, 0.5, 0.5, 2.0];
        assert!(plan.validate().is_err());
    }
}
