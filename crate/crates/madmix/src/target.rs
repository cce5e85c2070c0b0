//! The full-conditional target abstraction shared by the flows and the
//! Gibbs/mean-field baselines.

use num_traits::Float;
use rand::Rng;

use crate::error::{MadMixError, Result};
use crate::pmf::DiscretePmf;

/// A discrete target exposed through its per-coordinate full conditionals and,
/// when tractable, an unnormalized joint log-mass.
///
/// Coordinates are indexed `0..dim()`; atoms are 1-based within each
/// coordinate's support. `conditional(m, x)` must not depend on `x[m]`.
pub trait FullConditionalTarget<T: Float> {
    fn dim(&self) -> usize;

    fn support_size(&self, m: usize) -> usize;

    /// Full conditional PMF of coordinate `m` given the other entries of `x`.
    fn conditional(&self, m: usize, x: &[usize]) -> Result<DiscretePmf<T>>;

    /// Unnormalized joint log-mass, when available.
    fn unnormalized_log_mass(&self, _x: &[usize]) -> Option<T> {
        None
    }

    fn support_sizes(&self) -> Vec<usize> {
        (0..self.dim()).map(|m| self.support_size(m)).collect()
    }

    /// Total number of joint states, or an error above `limit`.
    fn num_states(&self, limit: u128) -> Result<u128> {
        let mut n: u128 = 1;
        for m in 0..self.dim() {
            n = n.saturating_mul(self.support_size(m) as u128);
            if n > limit {
                return Err(MadMixError::StateSpaceTooLarge(n));
            }
        }
        Ok(n)
    }
}

impl<T: Float, U: FullConditionalTarget<T> + ?Sized> FullConditionalTarget<T> for &U {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn support_size(&self, m: usize) -> usize {
        (**self).support_size(m)
    }
    fn conditional(&self, m: usize, x: &[usize]) -> Result<DiscretePmf<T>> {
        (**self).conditional(m, x)
    }
    fn unnormalized_log_mass(&self, x: &[usize]) -> Option<T> {
        (**self).unnormalized_log_mass(x)
    }
}

/// Iterate every joint state in mixed-radix order: the first coordinate is the
/// most significant digit, so Ising states come out in ascending binary order.
pub fn for_each_state<F: FnMut(&[usize])>(support_sizes: &[usize], mut f: F) {
    let m = support_sizes.len();
    let mut x = vec![1usize; m];
    loop {
        f(&x);
        let mut i = m;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if x[i] < support_sizes[i] {
                x[i] += 1;
                break;
            }
            x[i] = 1;
        }
    }
}

/// Flat index of a state under the `for_each_state` ordering.
pub fn state_index(support_sizes: &[usize], x: &[usize]) -> usize {
    let mut idx = 0usize;
    for (xi, &k) in x.iter().zip(support_sizes) {
        idx = idx * k + (xi - 1);
    }
    idx
}

/// Outcome of the conditional-consistency diagnostic.
#[derive(Debug, Clone)]
pub struct TargetDiagnostics {
    /// Largest observed |log ratio mismatch| between the conditionals and the
    /// joint log-mass, over all probed (state, coordinate, atom-pair) triples.
    pub max_deviation: f64,
    pub states_checked: usize,
    /// Worst offender as (coordinate, atom_a, atom_b).
    pub worst_case: Option<(usize, usize, usize)>,
}

impl TargetDiagnostics {
    pub fn consistent(&self, tol: f64) -> bool {
        self.max_deviation <= tol
    }
}

/// Check, on random states, that the conditionals agree with the joint
/// log-mass: log pi_m(a) - log pi_m(b) == log p(x[m<-a]) - log p(x[m<-b]).
pub fn validate_target<T, Tg, R>(target: &Tg, n_states: usize, rng: &mut R) -> Result<TargetDiagnostics>
where
    T: Float,
    Tg: FullConditionalTarget<T>,
    R: Rng,
{
    let dim = target.dim();
    let mut max_dev = 0.0f64;
    let mut worst = None;
    for _ in 0..n_states {
        let mut x: Vec<usize> = (0..dim)
            .map(|m| rng.gen_range(1..=target.support_size(m)))
            .collect();
        for m in 0..dim {
            let pmf = target.conditional(m, &x)?;
            let k = pmf.len();
            if k < 2 {
                continue;
            }
            let a = rng.gen_range(1..=k);
            let mut b = rng.gen_range(1..=k - 1);
            if b >= a {
                b += 1;
            }
            let saved = x[m];
            x[m] = a;
            let la = target.unnormalized_log_mass(&x);
            x[m] = b;
            let lb = target.unnormalized_log_mass(&x);
            x[m] = saved;
            let (la, lb) = match (la, lb) {
                (Some(la), Some(lb)) => (la, lb),
                _ => return Err(MadMixError::LogMassUnavailable),
            };
            let lhs = pmf.prob(a)?.ln() - pmf.prob(b)?.ln();
            let rhs = la - lb;
            let dev = (lhs - rhs).abs().to_f64().unwrap_or(f64::INFINITY);
            if dev > max_dev {
                max_dev = dev;
                worst = Some((m, a, b));
            }
        }
    }
    Ok(TargetDiagnostics {
        max_deviation: max_dev,
        states_checked: n_states,
        worst_case: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A 2-coordinate target backed by an explicit joint table.
    pub struct TableTarget {
        pub sizes: Vec<usize>,
        pub joint: Vec<f64>,
        /// When set, conditionals for this coordinate are deliberately wrong.
        pub corrupt_coord: Option<usize>,
    }

    impl FullConditionalTarget<f64> for TableTarget {
        fn dim(&self) -> usize {
            self.sizes.len()
        }
        fn support_size(&self, m: usize) -> usize {
            self.sizes[m]
        }
        fn conditional(&self, m: usize, x: &[usize]) -> Result<DiscretePmf<f64>> {
            let mut probe = x.to_vec();
            let mut w = Vec::with_capacity(self.sizes[m]);
            for a in 1..=self.sizes[m] {
                probe[m] = a;
                let mut p = self.joint[state_index(&self.sizes, &probe)];
                if self.corrupt_coord == Some(m) && a == 1 {
                    p *= 3.0;
                }
                w.push(p);
            }
            DiscretePmf::from_weights(w)
        }
        fn unnormalized_log_mass(&self, x: &[usize]) -> Option<f64> {
            Some(self.joint[state_index(&self.sizes, x)].ln())
        }
    }

    fn toy() -> TableTarget {
        TableTarget {
            sizes: vec![2, 3],
            joint: vec![0.1, 0.2, 0.05, 0.25, 0.3, 0.1],
            corrupt_coord: None,
        }
    }

    #[test]
    fn consistent_target_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = validate_target(&toy(), 200, &mut rng).unwrap();
        assert!(report.consistent(1e-9), "max dev {}", report.max_deviation);
    }

    #[test]
    fn corrupted_target_flagged() {
        let mut bad = toy();
        bad.corrupt_coord = Some(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = validate_target(&bad, 200, &mut rng).unwrap();
        assert!(report.max_deviation > 0.1);
    }

    #[test]
    fn state_enumeration_order() {
        let mut seen = Vec::new();
        for_each_state(&[2, 3], |x| seen.push(x.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![1, 1]);
        assert_eq!(seen[1], vec![1, 2]);
        assert_eq!(seen[3], vec![2, 1]);
        for (i, x) in seen.iter().enumerate() {
            assert_eq!(state_index(&[2, 3], x), i);
        }
    }
}
