//! Finite probability mass functions with CDF and quantile access.
//!
//! Atoms are indexed `1..=K`; the CDF uses the convention `F(0) = 0` and
//! `F(K) = 1`, with the last partial sum pinned to exactly one so that
//! quantile lookups cannot fail from accumulated rounding.

use num_traits::Float;

use crate::error::{MadMixError, Result};

/// A strictly positive, normalized PMF over `1..=K` with precomputed CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePmf<T> {
    probs: Vec<T>,
    cdf: Vec<T>,
}

impl<T: Float> DiscretePmf<T> {
    /// Build from probabilities that already sum to one (within a scale-aware
    /// tolerance). Every atom must carry strictly positive mass: the flow's
    /// u-correction divides by the mass of the landing atom.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(MadMixError::InvalidPmf("empty support".into()));
        }
        let mut sum = T::zero();
        for (i, &p) in probs.iter().enumerate() {
            if !(p > T::zero()) || !p.is_finite() {
                return Err(MadMixError::ZeroMassAtom(i + 1));
            }
            sum = sum + p;
        }
        let k = T::from(probs.len()).unwrap();
        let tol = T::from(1e-12)
            .unwrap()
            .max(T::epsilon() * k * T::from(16.0).unwrap());
        if (sum - T::one()).abs() > tol {
            return Err(MadMixError::InvalidPmf(format!(
                "probabilities sum to {:e}, not 1",
                sum.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Self::build(probs)
    }

    /// Normalize nonnegative weights and build. Zero weights are rejected.
    pub fn from_weights(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MadMixError::InvalidPmf("empty support".into()));
        }
        let mut sum = T::zero();
        for (i, &w) in weights.iter().enumerate() {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(MadMixError::ZeroMassAtom(i + 1));
            }
            sum = sum + w;
        }
        Self::build(weights.into_iter().map(|w| w / sum).collect())
    }

    /// Normalize log-weights via log-sum-exp and build.
    pub fn from_log_weights(log_weights: &[T]) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(MadMixError::InvalidPmf("empty support".into()));
        }
        let max = log_weights.iter().cloned().fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            return Err(MadMixError::InvalidPmf("non-finite log-weights".into()));
        }
        // Floor each ratio so extreme conditionals keep full support instead
        // of underflowing to zero mass.
        let floor = T::from(1e-12).unwrap();
        Self::from_weights(
            log_weights
                .iter()
                .map(|&lw| (lw - max).exp().max(floor))
                .collect(),
        )
    }

    fn build(probs: Vec<T>) -> Result<Self> {
        let k = probs.len();
        let mut cdf = Vec::with_capacity(k);
        let mut acc = T::zero();
        for &p in &probs {
            acc = acc + p;
            cdf.push(acc.min(T::one()));
        }
        // Pin the total mass exactly; quantile then always has an answer.
        cdf[k - 1] = T::one();
        for i in 1..k {
            if !(cdf[i] > cdf[i - 1]) {
                return Err(MadMixError::InvalidPmf(format!(
                    "cdf not strictly increasing at atom {}",
                    i + 1
                )));
            }
        }
        Ok(Self { probs, cdf })
    }

    /// Support size K.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Mass of atom `x` (1-based).
    pub fn prob(&self, x: usize) -> Result<T> {
        if x == 0 || x > self.probs.len() {
            return Err(MadMixError::AtomOutOfRange {
                index: x,
                support: self.probs.len(),
            });
        }
        Ok(self.probs[x - 1])
    }

    /// `F(l)` for `l` in `0..=K`, with `F(0) = 0` and `F(K) = 1`.
    pub fn cdf_eval(&self, l: usize) -> Result<T> {
        if l > self.probs.len() {
            return Err(MadMixError::CdfIndexOutOfRange(l));
        }
        if l == 0 {
            Ok(T::zero())
        } else {
            Ok(self.cdf[l - 1])
        }
    }

    /// Smallest atom `l` with `F(l) > p` (strict inequality).
    pub fn quantile(&self, p: T) -> Result<usize> {
        if !(p >= T::zero() && p < T::one()) {
            return Err(MadMixError::QuantileOutOfRange(
                p.to_f64().unwrap_or(f64::NAN),
            ));
        }
        Ok(self.cdf.partition_point(|&c| c <= p) + 1)
    }

    /// Draw an atom by inverse CDF from a uniform in `[0, 1)`.
    pub fn sample_atom<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let p = T::from(rng.gen::<f64>()).unwrap();
        self.quantile(p).expect("uniform draw in [0,1)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bimodal_pmf() -> DiscretePmf<f64> {
        DiscretePmf::new(vec![0.1, 0.4, 0.4, 0.1]).unwrap()
    }

    #[test]
    fn cdf_convention() {
        let pmf = bimodal_pmf();
        assert_eq!(pmf.cdf_eval(0).unwrap(), 0.0);
        assert!((pmf.cdf_eval(1).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(pmf.cdf_eval(4).unwrap(), 1.0);
        assert!(pmf.cdf_eval(5).is_err());
    }

    #[test]
    fn quantile_strict_inequality() {
        let pmf = bimodal_pmf();
        assert_eq!(pmf.quantile(0.85).unwrap(), 3);
        // F(2) = 0.5 is not > 0.5, F(3) = 0.9 is.
        assert_eq!(pmf.quantile(0.5).unwrap(), 3);
        assert_eq!(pmf.quantile(0.0).unwrap(), 1);
        assert!(pmf.quantile(1.0).is_err());
        assert!(pmf.quantile(-0.1).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(DiscretePmf::<f64>::new(vec![]).is_err());
        assert!(DiscretePmf::new(vec![0.5, 0.0, 0.5]).is_err());
        assert!(DiscretePmf::new(vec![0.5, 0.4]).is_err());
        assert!(DiscretePmf::new(vec![0.5, f64::NAN]).is_err());
    }

    #[test]
    fn from_weights_normalizes() {
        let pmf = DiscretePmf::from_weights(vec![1.0, 4.0, 4.0, 1.0]).unwrap();
        assert!((pmf.prob(2).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(pmf.cdf_eval(4).unwrap(), 1.0);
    }

    #[test]
    fn from_log_weights_matches_weights() {
        let pmf = DiscretePmf::from_log_weights(&[0.0_f64, 1.0, -1.0]).unwrap();
        let direct =
            DiscretePmf::from_weights(vec![1.0, 1.0_f64.exp(), (-1.0_f64).exp()]).unwrap();
        for a in 1..=3 {
            assert!((pmf.prob(a).unwrap() - direct.prob(a).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn works_in_f32() {
        let pmf = DiscretePmf::<f32>::from_weights(vec![1.0, 2.0, 1.0]).unwrap();
        assert_eq!(pmf.quantile(0.3).unwrap(), 2);
    }

    proptest! {
        // quantile(F(l-1) + eps) == l for eps in (0, pi(l)).
        #[test]
        fn quantile_inverts_cdf(
            weights in proptest::collection::vec(0.01f64..10.0, 1..12),
            atom_frac in 0.0f64..1.0,
            eps_frac in 1e-6f64..0.999,
        ) {
            let pmf = DiscretePmf::from_weights(weights).unwrap();
            let l = 1 + ((atom_frac * pmf.len() as f64) as usize).min(pmf.len() - 1);
            let p = pmf.cdf_eval(l - 1).unwrap() + eps_frac * pmf.prob(l).unwrap();
            if p < pmf.cdf_eval(l).unwrap() {
                prop_assert_eq!(pmf.quantile(p).unwrap(), l);
            }
        }

        // F(Q(p)-1) <= p < F(Q(p)).
        #[test]
        fn quantile_cdf_roundtrip(
            weights in proptest::collection::vec(0.01f64..10.0, 1..12),
            p in 0.0f64..1.0,
        ) {
            let pmf = DiscretePmf::from_weights(weights).unwrap();
            let q = pmf.quantile(p).unwrap();
            prop_assert!(pmf.cdf_eval(q - 1).unwrap() <= p);
            prop_assert!(pmf.cdf_eval(q).unwrap() > p);
        }
    }
}
