//! Randomly generated finite joint-PMF targets with exact conditionals,
//! used wherever an enumerable ground truth is needed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{MadMixError, Result};
use crate::pmf::DiscretePmf;
use crate::target::{state_index, FullConditionalTarget};

/// A target defined by an explicit joint PMF tensor over
/// `{1..K_1} x ... x {1..K_M}`, flattened with the first coordinate most
/// significant.
#[derive(Debug, Clone)]
pub struct ToyTarget {
    sizes: Vec<usize>,
    joint: Vec<f64>,
}

impl ToyTarget {
    /// Symmetric Dirichlet(1) draw over the flattened state space, floored at
    /// 1e-6 per entry and renormalized so every conditional atom has mass.
    pub fn random(sizes: &[usize], seed: u64) -> Result<Self> {
        let total: usize = sizes.iter().product();
        if total == 0 {
            return Err(MadMixError::Model("empty support".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Dirichlet(1) == normalized i.i.d. Exp(1).
        let mut joint: Vec<f64> = (0..total).map(|_| Exp1.sample(&mut rng)).collect();
        let sum: f64 = joint.iter().sum();
        for p in joint.iter_mut() {
            *p = (*p / sum).max(1e-6);
        }
        let sum: f64 = joint.iter().sum();
        for p in joint.iter_mut() {
            *p /= sum;
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            joint,
        })
    }

    /// Build from explicit probabilities in flattened order.
    pub fn from_probs(sizes: &[usize], probs: Vec<f64>) -> Result<Self> {
        let total: usize = sizes.iter().product();
        if probs.len() != total {
            return Err(MadMixError::DimensionMismatch {
                got: probs.len(),
                expected: total,
            });
        }
        // Validate via DiscretePmf (positivity, normalization).
        DiscretePmf::new(probs.clone())?;
        Ok(Self {
            sizes: sizes.to_vec(),
            joint: probs,
        })
    }

    /// Small default supports: 1D on {1..10}, 2D on {1..4}x{1..5},
    /// 3D on {1..10}^3.
    pub fn toy_1d(seed: u64) -> Self {
        Self::random(&[10], seed).unwrap()
    }

    pub fn toy_2d(seed: u64) -> Self {
        Self::random(&[4, 5], seed).unwrap()
    }

    pub fn toy_3d(seed: u64) -> Self {
        Self::random(&[10, 10, 10], seed).unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Exact flattened joint PMF.
    pub fn joint_pmf(&self) -> DiscretePmf<f64> {
        DiscretePmf::new(self.joint.clone()).expect("stored joint is a valid PMF")
    }

    pub fn joint_probs(&self) -> &[f64] {
        &self.joint
    }

    /// Exact marginal PMF of coordinate `m`.
    pub fn marginal(&self, m: usize) -> DiscretePmf<f64> {
        let mut acc = vec![0.0; self.sizes[m]];
        crate::target::for_each_state(&self.sizes, |x| {
            acc[x[m] - 1] += self.joint[state_index(&self.sizes, x)];
        });
        DiscretePmf::from_weights(acc).expect("marginal of a valid joint")
    }

    /// Exact draw from the joint.
    pub fn sample_state<R: rand::Rng>(&self, rng: &mut R) -> Vec<usize> {
        let flat = self.joint_pmf().sample_atom(rng) - 1;
        let mut rem = flat;
        let mut x = vec![1usize; self.sizes.len()];
        for m in (0..self.sizes.len()).rev() {
            x[m] = rem % self.sizes[m] + 1;
            rem /= self.sizes[m];
        }
        x
    }
}

impl FullConditionalTarget<f64> for ToyTarget {
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
            w.push(self.joint[state_index(&self.sizes, &probe)]);
        }
        DiscretePmf::from_weights(w)
    }

    fn unnormalized_log_mass(&self, x: &[usize]) -> Option<f64> {
        Some(self.joint[state_index(&self.sizes, x)].ln())
    }
}
