//! Mixed discrete-continuous flow: an uncorrected Hamiltonian step with a
//! deterministic Laplace momentum refresh, composed with the discrete
//! measure-preserving pass. The same mixture construction as the discrete
//! flow gives an exact density and i.i.d. sampling.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MadMixError, Result};
use crate::mad::{mad_forward, mad_inverse, mod_unit, ShiftParam};
use crate::pmf::DiscretePmf;
use crate::state::AugmentedState;
use crate::stats::{laplace, log_sum_exp};
use crate::target::FullConditionalTarget;

/// Joint target over a continuous block and a discrete block, exposing what
/// the Hamiltonian step and the discrete pass each need.
pub trait MixedTarget {
    fn dim_c(&self) -> usize;
    fn dim_d(&self) -> usize;

    /// Support size of discrete coordinate `m`.
    fn support_size(&self, m: usize) -> usize;

    /// Unnormalized joint log-density at (x_c, x_d).
    fn unnormalized_log_density(&self, x_c: &DVector<f64>, x_d: &[usize]) -> f64;

    /// Gradient of the log-density in the continuous block, discrete block
    /// held fixed.
    fn score(&self, x_c: &DVector<f64>, x_d: &[usize]) -> Result<DVector<f64>>;

    /// Full conditional of discrete coordinate `m` given the rest of the
    /// discrete block and the continuous position.
    fn discrete_conditional(
        &self,
        m: usize,
        x_d: &[usize],
        x_c: &DVector<f64>,
    ) -> Result<DiscretePmf<f64>>;
}

impl<U: MixedTarget> MixedTarget for &U {
    fn dim_c(&self) -> usize {
        (**self).dim_c()
    }
    fn dim_d(&self) -> usize {
        (**self).dim_d()
    }
    fn support_size(&self, m: usize) -> usize {
        (**self).support_size(m)
    }
    fn unnormalized_log_density(&self, x_c: &DVector<f64>, x_d: &[usize]) -> f64 {
        (**self).unnormalized_log_density(x_c, x_d)
    }
    fn score(&self, x_c: &DVector<f64>, x_d: &[usize]) -> Result<DVector<f64>> {
        (**self).score(x_c, x_d)
    }
    fn discrete_conditional(
        &self,
        m: usize,
        x_d: &[usize],
        x_c: &DVector<f64>,
    ) -> Result<DiscretePmf<f64>> {
        (**self).discrete_conditional(m, x_d, x_c)
    }
}

/// Full state of the mixed flow: continuous position, momenta, the scalar
/// uniform driving the refresh, and the augmented discrete block.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    pub x_c: DVector<f64>,
    pub momentum: DVector<f64>,
    pub u_c: f64,
    pub x_d: Vec<usize>,
    pub u_d: Vec<f64>,
}

/// Leapfrog and refresh settings for the Hamiltonian step.
#[derive(Debug, Clone, Copy)]
pub struct HamiltonianConfig {
    pub leapfrog_steps: usize,
    pub step_size: f64,
    /// Shift applied to the refresh uniform each pass.
    pub xi_h: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self {
            leapfrog_steps: 10,
            step_size: 0.05,
            xi_h: std::f64::consts::PI / 16.0,
        }
    }
}

impl HamiltonianConfig {
    pub fn validate(&self) -> Result<()> {
        if self.leapfrog_steps == 0 || !(self.step_size > 0.0) {
            return Err(MadMixError::Config(
                "leapfrog needs at least one step of positive size".into(),
            ));
        }
        if self.step_size * self.leapfrog_steps as f64 > 10.0 {
            return Err(MadMixError::Config(
                "leapfrog trajectory length exceeds 10".into(),
            ));
        }
        let frac = mod_unit(self.xi_h);
        if frac < 1e-12 || frac > 1.0 - 1e-12 {
            return Err(MadMixError::DegenerateShift(self.xi_h));
        }
        Ok(())
    }
}

/// Per-momentum refresh offset, an equidistributed irrational sequence.
fn refresh_offset(i: usize) -> f64 {
    mod_unit((i as f64 + 1.0) * std::f64::consts::SQRT_2)
}

/// Result of one mixed pass.
#[derive(Debug, Clone)]
pub struct MixedFlowResult {
    pub state: MixedState,
    pub log_jacobian: f64,
}

/// View of the discrete block at a fixed continuous position, so the
/// discrete pass can run unchanged.
struct DiscreteSlice<'a, Tg> {
    target: &'a Tg,
    x_c: &'a DVector<f64>,
}

impl<Tg: MixedTarget> FullConditionalTarget<f64> for DiscreteSlice<'_, Tg> {
    fn dim(&self) -> usize {
        self.target.dim_d()
    }

    fn support_size(&self, m: usize) -> usize {
        self.target.support_size(m)
    }

    fn conditional(&self, m: usize, x: &[usize]) -> Result<DiscretePmf<f64>> {
        self.target.discrete_conditional(m, x, self.x_c)
    }
}

/// `leapfrog_steps` leapfrog steps with unit mass; volume preserving, so it
/// contributes nothing to the Jacobian. Negative `direction` runs it
/// backwards.
fn leapfrog<Tg: MixedTarget>(
    x_c: &mut DVector<f64>,
    momentum: &mut DVector<f64>,
    x_d: &[usize],
    target: &Tg,
    cfg: &HamiltonianConfig,
    direction: f64,
) -> Result<()> {
    let eps = cfg.step_size * direction;
    for _ in 0..cfg.leapfrog_steps {
        let half = momentum.clone() + target.score(x_c, x_d)? * (eps / 2.0);
        *x_c += &half * eps;
        *momentum = half + target.score(x_c, x_d)? * (eps / 2.0);
    }
    Ok(())
}

fn clamp_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Deterministic momentum refresh: rotate the refresh uniform, then push each
/// momentum through the Laplace CDF, shift on the circle, and pull back.
/// Returns the log-Jacobian of the momentum update.
pub fn momentum_refresh(momentum: &mut DVector<f64>, u_c: &mut f64, xi_h: f64) -> f64 {
    *u_c = mod_unit(*u_c + xi_h);
    let mut log_jac = 0.0;
    for i in 0..momentum.len() {
        let old = momentum[i];
        let shifted = clamp_unit(mod_unit(laplace::cdf(old) + mod_unit(*u_c + refresh_offset(i))));
        momentum[i] = laplace::quantile(shifted);
        log_jac += laplace::log_pdf(old) - laplace::log_pdf(momentum[i]);
    }
    log_jac
}

/// Inverse of [`momentum_refresh`]; returns the log-Jacobian of the inverse
/// momentum update.
pub fn momentum_refresh_inverse(momentum: &mut DVector<f64>, u_c: &mut f64, xi_h: f64) -> f64 {
    let mut log_jac = 0.0;
    for i in 0..momentum.len() {
        let old = momentum[i];
        let shifted = clamp_unit(mod_unit(laplace::cdf(old) - mod_unit(*u_c + refresh_offset(i))));
        momentum[i] = laplace::quantile(shifted);
        log_jac += laplace::log_pdf(old) - laplace::log_pdf(momentum[i]);
    }
    *u_c = mod_unit(*u_c - xi_h);
    log_jac
}

/// One forward mixed pass: leapfrog, momentum refresh, then the discrete
/// measure-preserving pass at the new continuous position.
pub fn mixed_forward<Tg: MixedTarget>(
    state: &MixedState,
    target: &Tg,
    cfg: &HamiltonianConfig,
    xi: ShiftParam<f64>,
) -> Result<MixedFlowResult> {
    cfg.validate()?;
    let mut out = state.clone();
    let mut log_jac = 0.0;
    if target.dim_c() > 0 {
        leapfrog(&mut out.x_c, &mut out.momentum, &out.x_d, target, cfg, 1.0)?;
        log_jac += momentum_refresh(&mut out.momentum, &mut out.u_c, cfg.xi_h);
    }
    if target.dim_d() > 0 {
        let slice = DiscreteSlice {
            target,
            x_c: &out.x_c,
        };
        let aug = AugmentedState {
            x: out.x_d.clone(),
            u: out.u_d.clone(),
        };
        let res = mad_forward(&aug, &slice, xi)?;
        out.x_d = res.state.x;
        out.u_d = res.state.u;
        log_jac += res.log_jacobian;
    }
    Ok(MixedFlowResult {
        state: out,
        log_jacobian: log_jac,
    })
}

/// Inverse mixed pass; the returned log-Jacobian is that of the inverse map.
pub fn mixed_inverse<Tg: MixedTarget>(
    state: &MixedState,
    target: &Tg,
    cfg: &HamiltonianConfig,
    xi: ShiftParam<f64>,
) -> Result<MixedFlowResult> {
    cfg.validate()?;
    let mut out = state.clone();
    let mut log_jac = 0.0;
    if target.dim_d() > 0 {
        let slice = DiscreteSlice {
            target,
            x_c: &out.x_c,
        };
        let aug = AugmentedState {
            x: out.x_d.clone(),
            u: out.u_d.clone(),
        };
        let res = mad_inverse(&aug, &slice, xi)?;
        out.x_d = res.state.x;
        out.u_d = res.state.u;
        log_jac += res.log_jacobian;
    }
    if target.dim_c() > 0 {
        log_jac += momentum_refresh_inverse(&mut out.momentum, &mut out.u_c, cfg.xi_h);
        leapfrog(&mut out.x_c, &mut out.momentum, &out.x_d, target, cfg, -1.0)?;
    }
    Ok(MixedFlowResult {
        state: out,
        log_jacobian: log_jac,
    })
}

/// Reference distribution on the full mixed state.
pub trait MixedReference {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MixedState;
    fn log_density(&self, state: &MixedState) -> f64;
}

/// Default mixed reference: independent Gaussians on the continuous block,
/// unit Laplace momenta, uniform refresh scalar, independent categorical
/// discrete atoms with uniform auxiliaries.
#[derive(Debug, Clone)]
pub struct GaussianReference {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
    pub factors: Vec<Vec<f64>>,
}

impl GaussianReference {
    pub fn new(mean: DVector<f64>, sd: DVector<f64>, factors: Vec<Vec<f64>>) -> Result<Self> {
        if mean.len() != sd.len() {
            return Err(MadMixError::DimensionMismatch {
                got: sd.len(),
                expected: mean.len(),
            });
        }
        if sd.iter().any(|&s| !(s > 0.0)) {
            return Err(MadMixError::Config("reference sd must be positive".into()));
        }
        for f in &factors {
            let sum: f64 = f.iter().sum();
            if f.is_empty() || f.iter().any(|&p| !(p > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(MadMixError::InvalidPmf(
                    "reference atom probabilities must be positive and normalized".into(),
                ));
            }
        }
        Ok(Self { mean, sd, factors })
    }

    /// Uniform atom probabilities over the given support sizes.
    pub fn uniform_atoms(mean: DVector<f64>, sd: DVector<f64>, sizes: Vec<usize>) -> Result<Self> {
        let factors = sizes.iter().map(|&k| vec![1.0 / k as f64; k]).collect();
        Self::new(mean, sd, factors)
    }

    pub fn standard(dim_c: usize, sizes: Vec<usize>) -> Self {
        Self::uniform_atoms(
            DVector::zeros(dim_c),
            DVector::from_element(dim_c, 1.0),
            sizes,
        )
        .expect("uniform reference is valid")
    }
}

impl MixedReference for GaussianReference {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MixedState {
        use rand_distr::{Distribution, StandardNormal};
        let dim = self.mean.len();
        let x_c = DVector::from_fn(dim, |i, _| {
            self.mean[i] + self.sd[i] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        });
        let momentum = DVector::from_fn(dim, |_, _| laplace::sample(rng));
        let x_d = self
            .factors
            .iter()
            .map(|f| {
                let p = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut atom = f.len();
                for (i, &pi) in f.iter().enumerate() {
                    acc += pi;
                    if acc > p {
                        atom = i + 1;
                        break;
                    }
                }
                atom.min(f.len()).max(1)
            })
            .collect();
        MixedState {
            x_c,
            momentum,
            u_c: rng.gen::<f64>(),
            x_d,
            u_d: self.factors.iter().map(|_| rng.gen::<f64>()).collect(),
        }
    }

    fn log_density(&self, state: &MixedState) -> f64 {
        let mut ld = 0.0;
        for i in 0..self.mean.len() {
            let z = (state.x_c[i] - self.mean[i]) / self.sd[i];
            ld += -0.5 * z * z - self.sd[i].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            ld += laplace::log_pdf(state.momentum[i]);
        }
        for (m, f) in self.factors.iter().enumerate() {
            ld += f[state.x_d[m] - 1].ln();
        }
        ld
    }
}

/// Mixture of mixed-pass iterates over a reference, mirroring the discrete
/// flow family.
pub struct MixedMixFlow<Tg, Rf> {
    pub target: Tg,
    pub reference: Rf,
    pub n_flow: usize,
    pub xi: ShiftParam<f64>,
    pub ham: HamiltonianConfig,
}

impl<Tg, Rf> MixedMixFlow<Tg, Rf>
where
    Tg: MixedTarget,
    Rf: MixedReference,
{
    pub fn new(
        target: Tg,
        reference: Rf,
        n_flow: usize,
        xi: ShiftParam<f64>,
        ham: HamiltonianConfig,
    ) -> Result<Self> {
        if n_flow == 0 {
            return Err(MadMixError::Config("flow length must be at least 1".into()));
        }
        ham.validate()?;
        Ok(Self {
            target,
            reference,
            n_flow,
            xi,
            ham,
        })
    }

    /// Exact mixture log-density by backpropagation, as in the discrete flow.
    pub fn log_density(&self, state: &MixedState) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.n_flow);
        terms.push(self.reference.log_density(state));
        let mut cur = state.clone();
        let mut log_jac_fwd = 0.0;
        for _ in 1..self.n_flow {
            let res = mixed_inverse(&cur, &self.target, &self.ham, self.xi)?;
            log_jac_fwd -= res.log_jacobian;
            cur = res.state;
            terms.push(self.reference.log_density(&cur) - log_jac_fwd);
        }
        Ok(log_sum_exp(&terms) - (self.n_flow as f64).ln())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<MixedState> {
        let n = rng.gen_range(0..self.n_flow);
        let mut s = self.reference.sample(rng);
        for _ in 0..n {
            s = mixed_forward(&s, &self.target, &self.ham, self.xi)?.state;
        }
        Ok(s)
    }

    pub fn sample_seeded(&self, seed: u64) -> Result<MixedState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(&mut rng)
    }

    /// Monte Carlo ELBO against the unnormalized joint, with standard error.
    pub fn elbo<R: Rng + ?Sized>(&self, n_samples: usize, rng: &mut R) -> Result<(f64, f64)> {
        if n_samples < 2 {
            return Err(MadMixError::TooFewSamples {
                min: 2,
                got: n_samples,
            });
        }
        let mut vals = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let s = self.sample(rng)?;
            let lp = self.target.unnormalized_log_density(&s.x_c, &s.x_d);
            vals.push(lp - self.log_density(&s)?);
        }
        Ok(crate::stats::mean_and_se(&vals))
    }
}
