//! Mixture-of-pushforwards variational family on augmented discrete states:
//! exact log-density by backpropagating the flow, i.i.d. sampling, ELBO
//! estimation, marginal-PMF extraction, and KL-optimal two-reference
//! weighting.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MadMixError, Result};
use crate::mad::{mad_forward_n, mad_inverse, ShiftParam};
use crate::pmf::DiscretePmf;
use crate::state::AugmentedState;
use crate::stats::log_sum_exp;
use crate::target::{for_each_state, FullConditionalTarget};

/// A reference distribution on the augmented space: the flow pushes its draws
/// forward and backpropagates its density.
pub trait Reference<T: Float> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentedState<T>;

    /// Normalized log-density (log-mass in x times uniform density in u).
    fn log_density(&self, state: &AugmentedState<T>) -> T;
}

/// Uniform over the product support, independent uniforms on the auxiliaries.
#[derive(Debug, Clone)]
pub struct UniformReference {
    sizes: Vec<usize>,
}

impl UniformReference {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(!sizes.is_empty() && sizes.iter().all(|&k| k > 0));
        Self { sizes }
    }

    pub fn for_target<T: Float, Tg: FullConditionalTarget<T>>(target: &Tg) -> Self {
        Self::new(target.support_sizes())
    }
}

impl<T: Float> Reference<T> for UniformReference {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentedState<T> {
        let x = self.sizes.iter().map(|&k| rng.gen_range(1..=k)).collect();
        let u = self
            .sizes
            .iter()
            .map(|_| T::from(rng.gen::<f64>()).unwrap())
            .collect();
        AugmentedState::new(x, u).expect("uniform draw is valid")
    }

    fn log_density(&self, state: &AugmentedState<T>) -> T {
        debug_assert_eq!(state.dim(), self.sizes.len());
        -self
            .sizes
            .iter()
            .fold(T::zero(), |acc, &k| acc + T::from(k).unwrap().ln())
    }
}

/// Independent per-coordinate categorical factors (zero mass allowed, so a
/// reference can be confined to one region of the support).
#[derive(Debug, Clone)]
pub struct FactorizedReference<T> {
    factors: Vec<Vec<T>>,
}

impl<T: Float> FactorizedReference<T> {
    pub fn new(factors: Vec<Vec<T>>) -> Result<Self> {
        for f in &factors {
            let sum = f.iter().fold(T::zero(), |a, &p| a + p);
            if f.is_empty() || (sum - T::one()).abs() > T::from(1e-9).unwrap() {
                return Err(MadMixError::InvalidPmf(
                    "factor probabilities must sum to 1".into(),
                ));
            }
            if f.iter().any(|&p| p < T::zero()) {
                return Err(MadMixError::InvalidPmf("negative factor probability".into()));
            }
        }
        Ok(Self { factors })
    }
}

impl<T: Float> Reference<T> for FactorizedReference<T> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentedState<T> {
        let mut x = Vec::with_capacity(self.factors.len());
        for f in &self.factors {
            let p = T::from(rng.gen::<f64>()).unwrap();
            let mut acc = T::zero();
            let mut atom = f.len();
            for (i, &pi) in f.iter().enumerate() {
                acc = acc + pi;
                if acc > p {
                    atom = i + 1;
                    break;
                }
            }
            x.push(atom.min(f.len()).max(1));
        }
        let u = self
            .factors
            .iter()
            .map(|_| T::from(rng.gen::<f64>()).unwrap())
            .collect();
        AugmentedState::new(x, u).expect("factor draw is valid")
    }

    fn log_density(&self, state: &AugmentedState<T>) -> T {
        state
            .x
            .iter()
            .zip(&self.factors)
            .fold(T::zero(), |acc, (&xi, f)| acc + f[xi - 1].ln())
    }
}

/// The discrete mixed variational flow: a uniform mixture over `0..N`
/// applications of the measure-preserving pass to a reference distribution.
#[derive(Debug, Clone)]
pub struct MadMixFlow<T, Tg, Rf> {
    pub target: Tg,
    pub reference: Rf,
    pub n_flow: usize,
    pub xi: ShiftParam<T>,
}

fn mean_se<T: Float>(vals: &[T]) -> (T, T) {
    let n = T::from(vals.len()).unwrap();
    let mean = vals.iter().fold(T::zero(), |a, &v| a + v) / n;
    let var = vals
        .iter()
        .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
        / (n - T::one());
    (mean, (var / n).sqrt())
}

impl<T, Tg, Rf> MadMixFlow<T, Tg, Rf>
where
    T: Float,
    Tg: FullConditionalTarget<T>,
    Rf: Reference<T>,
{
    pub fn new(target: Tg, reference: Rf, n_flow: usize, xi: ShiftParam<T>) -> Result<Self> {
        if n_flow == 0 {
            return Err(MadMixError::Config("flow length must be at least 1".into()));
        }
        Ok(Self {
            target,
            reference,
            n_flow,
            xi,
        })
    }

    /// Exact mixture log-density by backpropagation: N-1 inverse passes with a
    /// running forward log-Jacobian, combined by log-sum-exp.
    pub fn log_density(&self, state: &AugmentedState<T>) -> Result<T> {
        let mut terms = Vec::with_capacity(self.n_flow);
        terms.push(self.reference.log_density(state));
        let mut cur = state.clone();
        // Running log of the forward Jacobian along the backward orbit; the
        // inverse pass reports its own Jacobian, which is the negative.
        let mut log_jac_fwd = T::zero();
        for _ in 1..self.n_flow {
            let res = mad_inverse(&cur, &self.target, self.xi)?;
            log_jac_fwd = log_jac_fwd - res.log_jacobian;
            cur = res.state;
            terms.push(self.reference.log_density(&cur) - log_jac_fwd);
        }
        Ok(log_sum_exp(&terms) - T::from(self.n_flow).unwrap().ln())
    }

    /// One exact i.i.d. draw: choose an orbit depth uniformly, draw from the
    /// reference, and push forward.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AugmentedState<T>> {
        let n = rng.gen_range(0..self.n_flow);
        let s0 = self.reference.sample(rng);
        Ok(mad_forward_n(&s0, &self.target, self.xi, n)?.state)
    }

    /// Deterministic draw for a given seed.
    pub fn sample_seeded(&self, seed: u64) -> Result<AugmentedState<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(&mut rng)
    }

    /// Monte Carlo ELBO estimate with standard error. Requires the target's
    /// unnormalized log-mass.
    pub fn elbo<R: Rng + ?Sized>(&self, n_samples: usize, rng: &mut R) -> Result<(T, T)> {
        if n_samples < 2 {
            return Err(MadMixError::TooFewSamples {
                min: 2,
                got: n_samples,
            });
        }
        let mut vals = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let s = self.sample(rng)?;
            let lp = self
                .target
                .unnormalized_log_mass(&s.x)
                .ok_or(MadMixError::LogMassUnavailable)?;
            vals.push(lp - self.log_density(&s)?);
        }
        Ok(mean_se(&vals))
    }

    /// Discrete marginal of the flow: for every joint state, average the joint
    /// density over `n_u_samples` uniform auxiliary draws, then renormalize.
    /// Returns the PMF and the pre-normalization total mass.
    pub fn exact_marginal_pmf<R: Rng + ?Sized>(
        &self,
        n_u_samples: usize,
        rng: &mut R,
    ) -> Result<(DiscretePmf<T>, T)> {
        let sizes = self.target.support_sizes();
        self.target.num_states(1_000_000)?;
        let mut weights = Vec::new();
        let mut err: Option<MadMixError> = None;
        let mut u_buf: Vec<Vec<T>> = Vec::with_capacity(n_u_samples);
        for _ in 0..n_u_samples {
            u_buf.push(
                (0..sizes.len())
                    .map(|_| T::from(rng.gen::<f64>()).unwrap())
                    .collect(),
            );
        }
        for_each_state(&sizes, |x| {
            if err.is_some() {
                return;
            }
            let mut acc = T::zero();
            for u in &u_buf {
                let s = AugmentedState {
                    x: x.to_vec(),
                    u: u.clone(),
                };
                match self.log_density(&s) {
                    Ok(ld) => acc = acc + ld.exp(),
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                }
            }
            weights.push(acc / T::from(n_u_samples).unwrap());
        });
        if let Some(e) = err {
            return Err(e);
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        Ok((DiscretePmf::from_weights(weights)?, total))
    }
}

/// A convex combination of two flows over the same target, weighted to
/// minimize KL to the target.
pub struct WeightedPair<T, Tg, Rf0, Rf1> {
    pub flow0: MadMixFlow<T, Tg, Rf0>,
    pub flow1: MadMixFlow<T, Tg, Rf1>,
}

const WEIGHT_CLIP: f64 = 1e-3;

impl<T, Tg, Rf0, Rf1> WeightedPair<T, Tg, Rf0, Rf1>
where
    T: Float,
    Tg: FullConditionalTarget<T>,
    Rf0: Reference<T>,
    Rf1: Reference<T>,
{
    pub fn new(flow0: MadMixFlow<T, Tg, Rf0>, flow1: MadMixFlow<T, Tg, Rf1>) -> Result<Self> {
        if flow0.n_flow != flow1.n_flow {
            return Err(MadMixError::Config(
                "weighted components must share the flow length".into(),
            ));
        }
        if flow0.target.support_sizes() != flow1.target.support_sizes() {
            return Err(MadMixError::Config(
                "weighted components must share the target".into(),
            ));
        }
        Ok(Self { flow0, flow1 })
    }

    pub fn mixture_log_density(&self, alpha: T, state: &AugmentedState<T>) -> Result<T> {
        let l0 = self.flow0.log_density(state)?;
        let l1 = self.flow1.log_density(state)?;
        Ok(log_sum_exp(&[
            alpha.ln() + l0,
            (T::one() - alpha).ln() + l1,
        ]))
    }

    /// Draw `n` states from each component (for common-random-number reuse).
    pub fn component_samples<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<AugmentedState<T>>, Vec<AugmentedState<T>>)> {
        let s0 = (0..n)
            .map(|_| self.flow0.sample(rng))
            .collect::<Result<Vec<_>>>()?;
        let s1 = (0..n)
            .map(|_| self.flow1.sample(rng))
            .collect::<Result<Vec<_>>>()?;
        Ok((s0, s1))
    }

    /// KL gradient in the mixture weight: the difference of the two
    /// component expectations of log(mixture / target). Returns (grad, se).
    pub fn kl_gradient<F>(
        &self,
        alpha: T,
        s0: &[AugmentedState<T>],
        s1: &[AugmentedState<T>],
        target_log_mass: &F,
    ) -> Result<(T, T)>
    where
        F: Fn(&AugmentedState<T>) -> T,
    {
        let g0: Vec<T> = s0
            .iter()
            .map(|s| Ok(self.mixture_log_density(alpha, s)? - target_log_mass(s)))
            .collect::<Result<_>>()?;
        let g1: Vec<T> = s1
            .iter()
            .map(|s| Ok(self.mixture_log_density(alpha, s)? - target_log_mass(s)))
            .collect::<Result<_>>()?;
        let (m0, se0) = mean_se(&g0);
        let (m1, se1) = mean_se(&g1);
        Ok((m0 - m1, (se0 * se0 + se1 * se1).sqrt()))
    }

    /// Monte Carlo estimate of KL(mixture || target) with standard error.
    /// `target_log_mass` must be normalized for this to be a true KL.
    pub fn kl_estimate<F>(
        &self,
        alpha: T,
        s0: &[AugmentedState<T>],
        s1: &[AugmentedState<T>],
        target_log_mass: &F,
    ) -> Result<(T, T)>
    where
        F: Fn(&AugmentedState<T>) -> T,
    {
        let g0: Vec<T> = s0
            .iter()
            .map(|s| Ok(self.mixture_log_density(alpha, s)? - target_log_mass(s)))
            .collect::<Result<_>>()?;
        let g1: Vec<T> = s1
            .iter()
            .map(|s| Ok(self.mixture_log_density(alpha, s)? - target_log_mass(s)))
            .collect::<Result<_>>()?;
        let (m0, se0) = mean_se(&g0);
        let (m1, se1) = mean_se(&g1);
        let est = alpha * m0 + (T::one() - alpha) * m1;
        let se = ((alpha * se0) * (alpha * se0)
            + ((T::one() - alpha) * se1) * ((T::one() - alpha) * se1))
            .sqrt();
        Ok((est, se))
    }

    /// Projected gradient descent on the mixture weight, fresh samples per
    /// iteration. Returns the final weight in `[1e-3, 1 - 1e-3]`.
    pub fn optimize_weight<F, R>(
        &self,
        init: T,
        step_size: T,
        n_iters: usize,
        n_samples: usize,
        target_log_mass: &F,
        rng: &mut R,
    ) -> Result<T>
    where
        F: Fn(&AugmentedState<T>) -> T,
        R: Rng + ?Sized,
    {
        let lo = T::from(WEIGHT_CLIP).unwrap();
        let hi = T::one() - lo;
        let mut alpha = init.max(lo).min(hi);
        for iter in 0..n_iters {
            let (s0, s1) = self.component_samples(n_samples, rng)?;
            let (grad, _) = self.kl_gradient(alpha, &s0, &s1, target_log_mass)?;
            if !grad.is_finite() {
                return Err(MadMixError::DivergentWeight {
                    iter,
                    alpha: alpha.to_f64().unwrap_or(f64::NAN),
                });
            }
            alpha = (alpha - step_size * grad).max(lo).min(hi);
        }
        Ok(alpha)
    }
}
