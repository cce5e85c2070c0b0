//! One-dimensional Ising chain with closed-form full conditionals.
//!
//! Spins live in {-1, +1}; as atom indices, 1 maps to -1 and 2 maps to +1.
//! The exact PMF enumerates all 2^M states in ascending binary order with the
//! first spin as the most significant bit.

use crate::error::{MadMixError, Result};
use crate::pmf::DiscretePmf;
use crate::target::FullConditionalTarget;

#[derive(Debug, Clone)]
pub struct IsingChain {
    n_spins: usize,
    beta: f64,
}

/// Spin value of a 1-based atom index.
pub fn atom_to_spin(atom: usize) -> f64 {
    2.0 * atom as f64 - 3.0
}

impl IsingChain {
    pub fn new(n_spins: usize, beta: f64) -> Result<Self> {
        if n_spins < 2 {
            return Err(MadMixError::Model("Ising chain needs at least 2 spins".into()));
        }
        if !(beta > 0.0) {
            return Err(MadMixError::Model("inverse temperature must be positive".into()));
        }
        Ok(Self { n_spins, beta })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Sum of the neighbor spins of site `m` (0-based).
    fn neighbor_field(&self, m: usize, x: &[usize]) -> f64 {
        let mut field = 0.0;
        if m > 0 {
            field += atom_to_spin(x[m - 1]);
        }
        if m + 1 < self.n_spins {
            field += atom_to_spin(x[m + 1]);
        }
        field
    }

    /// Exact normalized PMF over all 2^M states in ascending binary order
    /// (-1 encoded as bit 0, +1 as bit 1, first spin most significant).
    pub fn exact_pmf(&self) -> Result<DiscretePmf<f64>> {
        if self.n_spins > 20 {
            return Err(MadMixError::StateSpaceTooLarge(1u128 << self.n_spins));
        }
        let mut log_w = Vec::with_capacity(1 << self.n_spins);
        crate::target::for_each_state(&vec![2; self.n_spins], |x| {
            log_w.push(self.unnormalized_log_mass(x).unwrap());
        });
        DiscretePmf::from_log_weights(&log_w)
    }
}

impl FullConditionalTarget<f64> for IsingChain {
    fn dim(&self) -> usize {
        self.n_spins
    }

    fn support_size(&self, _m: usize) -> usize {
        2
    }

    /// `pi_m(s) = exp(beta s (x_{m-1} + x_{m+1})) / (2 cosh(beta (x_{m-1}+x_{m+1})))`,
    /// with a single neighbor term at the chain ends.
    fn conditional(&self, m: usize, x: &[usize]) -> Result<DiscretePmf<f64>> {
        if m >= self.n_spins {
            return Err(MadMixError::AtomOutOfRange {
                index: m,
                support: self.n_spins,
            });
        }
        let field = self.beta * self.neighbor_field(m, x);
        let z = 2.0 * field.cosh();
        DiscretePmf::new(vec![(-field).exp() / z, field.exp() / z])
    }

    fn unnormalized_log_mass(&self, x: &[usize]) -> Option<f64> {
        let mut e = 0.0;
        for m in 0..self.n_spins - 1 {
            e += atom_to_spin(x[m]) * atom_to_spin(x[m + 1]);
        }
        Some(self.beta * e)
    }
}
