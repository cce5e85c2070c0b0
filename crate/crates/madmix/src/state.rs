//! Augmented discrete states: atom indices paired with auxiliary uniforms.

use num_traits::Float;

use crate::error::{MadMixError, Result};

/// Discrete coordinates `x` (each a 1-based atom index) together with one
/// auxiliary uniform in `[0, 1)` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState<T> {
    pub x: Vec<usize>,
    pub u: Vec<T>,
}

impl<T: Float> AugmentedState<T> {
    /// Validates dimensions and uniform ranges. Inputs of exactly `u = 1` are
    /// clamped to the largest representable value below one.
    pub fn new(x: Vec<usize>, mut u: Vec<T>) -> Result<Self> {
        if x.len() != u.len() {
            return Err(MadMixError::DimensionMismatch {
                got: u.len(),
                expected: x.len(),
            });
        }
        for ui in u.iter_mut() {
            if *ui == T::one() {
                *ui = T::one() - T::epsilon();
            }
            if !(*ui >= T::zero() && *ui < T::one()) {
                return Err(MadMixError::UniformOutOfRange(
                    ui.to_f64().unwrap_or(f64::NAN),
                ));
            }
        }
        Ok(Self { x, u })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}
