//! Spike-and-slab Bayesian linear regression.
//!
//! The Gibbs baseline works on the Dirac-spike model (inactive coefficients
//! pinned at zero) with the inclusion indicators collapsed over the
//! coordinate being updated. The flow target keeps all coefficients alive
//! ("ghost" coefficients carry the slab prior when switched off), which
//! keeps the continuous block a fixed-dimension vector; marginalizing the
//! ghosts recovers the Dirac model, so inclusion probabilities agree.
//!
//! Unconstrained continuous block: `[beta_1..beta_P, log sigma2, log tau2,
//! logit theta]`. Discrete block: one 2-atom coordinate per predictor
//! (atom 1 off, atom 2 on).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{MadMixError, Result};
use crate::mixed::MixedTarget;
use crate::pmf::DiscretePmf;

const LN_2PI: f64 = 1.8378770664093453;

/// Hyperparameters: inverse-gamma noise and slab-scale priors, beta prior on
/// the inclusion probability.
#[derive(Debug, Clone, Copy)]
pub struct SpikeSlabHyper {
    pub alpha1: f64,
    pub alpha2: f64,
    pub s2: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for SpikeSlabHyper {
    fn default() -> Self {
        Self {
            alpha1: 0.1,
            alpha2: 0.1,
            s2: 0.5,
            a: 1.0,
            b: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpikeSlabModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    hyper: SpikeSlabHyper,
    /// Sample the noise-variance conditional as a gamma on sigma2 itself
    /// instead of the conjugate inverse-gamma.
    pub gamma_sigma_conditional: bool,
}

/// Gibbs chain state on the Dirac-spike parametrization. `beta` keeps a slot
/// per predictor; inactive slots are exactly zero.
#[derive(Debug, Clone)]
pub struct SpikeSlabGibbsState {
    pub gamma: Vec<bool>,
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub tau2: f64,
    pub theta: f64,
}

fn inv_gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0).map_err(|e| MadMixError::Model(e.to_string()))?;
    Ok(rate / g.sample(rng).max(1e-300))
}

impl SpikeSlabModel {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, hyper: SpikeSlabHyper) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() == 0 || x.ncols() == 0 {
            return Err(MadMixError::Model("design and response shapes disagree".into()));
        }
        if !(hyper.alpha1 > 0.0 && hyper.alpha2 > 0.0 && hyper.s2 > 0.0)
            || !(hyper.a > 0.0 && hyper.b > 0.0)
        {
            return Err(MadMixError::Model("hyperparameters must be positive".into()));
        }
        Ok(Self {
            x,
            y,
            hyper,
            gamma_sigma_conditional: false,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_pred(&self) -> usize {
        self.x.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.y
    }

    fn masked_fit(&self, gamma: &[bool], beta: &DVector<f64>) -> DVector<f64> {
        let mut fit = DVector::zeros(self.n_obs());
        for p in 0..self.n_pred() {
            if gamma[p] {
                fit += self.x.column(p) * beta[p];
            }
        }
        fit
    }

    /// Collapsed inclusion probability for predictor `p`: with
    /// `z_p = y - X_{-p} beta_{-p}` and `v = x_p' x_p + 1/tau2`,
    /// the Bayes factor is `(1 / (tau sqrt(v))) exp((x_p' z_p)^2 / (2 sigma2 v))`
    /// and `xi_p = theta BF / (theta BF + 1 - theta)`.
    pub fn inclusion_probability(
        &self,
        p: usize,
        state: &SpikeSlabGibbsState,
    ) -> Result<f64> {
        let mut gamma = state.gamma.clone();
        gamma[p] = false;
        let z = &self.y - self.masked_fit(&gamma, &state.beta);
        let xp = self.x.column(p);
        let v = xp.dot(&xp) + 1.0 / state.tau2;
        let proj = xp.dot(&z);
        let log_bf = -state.tau2.sqrt().ln() - 0.5 * v.ln() + proj * proj / (2.0 * state.sigma2 * v);
        let logit_theta = (state.theta / (1.0 - state.theta)).ln();
        let logit = logit_theta + log_bf;
        Ok(1.0 / (1.0 + (-logit).exp()))
    }

    /// One systematic Gibbs sweep: for each predictor the collapsed indicator
    /// then its coefficient, followed by noise variance, slab scale, and
    /// inclusion rate.
    pub fn gibbs_sweep<R: Rng + ?Sized>(
        &self,
        state: &mut SpikeSlabGibbsState,
        rng: &mut R,
    ) -> Result<()> {
        let hp = &self.hyper;
        for p in 0..self.n_pred() {
            let xi = self.inclusion_probability(p, state)?;
            state.gamma[p] = rng.gen::<f64>() < xi;
            if state.gamma[p] {
                // beta_p | rest ~ N(x_p'z_p / v, sigma2 / v).
                let mut gamma = state.gamma.clone();
                gamma[p] = false;
                let z = &self.y - self.masked_fit(&gamma, &state.beta);
                let xp = self.x.column(p);
                let v = xp.dot(&xp) + 1.0 / state.tau2;
                let mean = xp.dot(&z) / v;
                let sd = (state.sigma2 / v).sqrt();
                let n: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                state.beta[p] = mean + sd * n;
            } else {
                state.beta[p] = 0.0;
            }
        }
        let k = state.gamma.iter().filter(|&&g| g).count() as f64;
        let resid = &self.y - self.masked_fit(&state.gamma, &state.beta);
        let rss = resid.dot(&resid);
        let b2: f64 = (0..self.n_pred())
            .filter(|&p| state.gamma[p])
            .map(|p| state.beta[p] * state.beta[p])
            .sum();
        let shape = hp.alpha1 + (self.n_obs() as f64 + k) / 2.0;
        let rate = hp.alpha2 + 0.5 * rss + b2 / (2.0 * state.tau2);
        state.sigma2 = if self.gamma_sigma_conditional {
            let g = Gamma::new(shape, 1.0 / rate).map_err(|e| MadMixError::Model(e.to_string()))?;
            g.sample(rng).max(1e-300)
        } else {
            inv_gamma_sample(shape, rate, rng)?
        };
        state.tau2 = inv_gamma_sample(
            0.5 + k / 2.0,
            hp.s2 / 2.0 + b2 / (2.0 * state.sigma2),
            rng,
        )?;
        let beta_dist = Beta::new(hp.a + k, hp.b + self.n_pred() as f64 - k)
            .map_err(|e| MadMixError::Model(e.to_string()))?;
        state.theta = beta_dist.sample(rng).clamp(1e-12, 1.0 - 1e-12);
        Ok(())
    }

    /// Ridge-regularized least squares, the shared initialization point.
    pub fn least_squares(&self) -> DVector<f64> {
        let p = self.n_pred();
        let a = self.x.transpose() * &self.x + DMatrix::identity(p, p) * 1e-6;
        let rhs = self.x.transpose() * &self.y;
        a.cholesky()
            .expect("ridge-regularized Gram matrix is positive definite")
            .solve(&rhs)
    }

    pub fn init_state(&self) -> SpikeSlabGibbsState {
        let beta = self.least_squares();
        let resid = &self.y - &self.x * &beta;
        SpikeSlabGibbsState {
            gamma: vec![true; self.n_pred()],
            beta,
            sigma2: (resid.dot(&resid) / self.n_obs() as f64).max(1e-3),
            tau2: self.hyper.s2,
            theta: 0.5,
        }
    }

    /// A Gaussian reference centered on the least-squares fit.
    pub fn flow_reference(&self) -> Result<crate::mixed::GaussianReference> {
        let init = self.init_state();
        let p = self.n_pred();
        let mut mean = Vec::with_capacity(p + 3);
        mean.extend(init.beta.iter());
        mean.push(init.sigma2.ln());
        mean.push(init.tau2.ln());
        mean.push(0.0);
        let mut sd = vec![0.25; p + 3];
        sd[p] = 0.5;
        sd[p + 1] = 0.5;
        sd[p + 2] = 0.8;
        crate::mixed::GaussianReference::uniform_atoms(
            DVector::from_vec(mean),
            DVector::from_vec(sd),
            vec![2; p],
        )
    }

    fn unpack(&self, x_c: &DVector<f64>) -> (DVector<f64>, f64, f64, f64) {
        let p = self.n_pred();
        let beta = DVector::from_fn(p, |i, _| x_c[i]);
        let sigma2 = x_c[p].exp();
        let tau2 = x_c[p + 1].exp();
        let theta = 1.0 / (1.0 + (-x_c[p + 2]).exp());
        (beta, sigma2, tau2, theta)
    }
}

/// Gradient of the log posterior in the active coefficients only, all other
/// blocks held fixed: `X_act' r / sigma2 - beta_act / (sigma2 tau2)`.
pub fn spikeslab_score(
    model: &SpikeSlabModel,
    gamma: &[bool],
    beta: &DVector<f64>,
    sigma2: f64,
    tau2: f64,
) -> DVector<f64> {
    let active: Vec<usize> = (0..model.n_pred()).filter(|&p| gamma[p]).collect();
    let fit = model.masked_fit(gamma, beta);
    let resid = model.response() - fit;
    DVector::from_fn(active.len(), |i, _| {
        let p = active[i];
        model.design().column(p).dot(&resid) / sigma2 - beta[p] / (sigma2 * tau2)
    })
}

impl MixedTarget for SpikeSlabModel {
    fn dim_c(&self) -> usize {
        self.n_pred() + 3
    }

    fn dim_d(&self) -> usize {
        self.n_pred()
    }

    fn support_size(&self, _m: usize) -> usize {
        2
    }

    /// Ghost-coefficient joint log-density in the unconstrained coordinates,
    /// with the exp/logit Jacobians folded in. Every coefficient carries the
    /// slab prior `N(0, sigma2 tau2)`; only active ones enter the likelihood.
    fn unnormalized_log_density(&self, x_c: &DVector<f64>, x_d: &[usize]) -> f64 {
        let hp = &self.hyper;
        let (beta, sigma2, tau2, theta) = self.unpack(x_c);
        let n = self.n_obs() as f64;
        let p = self.n_pred() as f64;
        let gamma: Vec<bool> = x_d.iter().map(|&z| z == 2).collect();
        let k = gamma.iter().filter(|&&g| g).count() as f64;
        let resid = &self.y - self.masked_fit(&gamma, &beta);
        let s = x_c[self.n_pred()];
        let t = x_c[self.n_pred() + 1];
        let mut ld = -0.5 * n * (LN_2PI + s) - resid.dot(&resid) / (2.0 * sigma2);
        ld += -0.5 * p * (LN_2PI + s + t) - beta.dot(&beta) / (2.0 * sigma2 * tau2);
        ld += k * theta.ln() + (p - k) * (1.0 - theta).ln();
        // Priors (unnormalized) and the change-of-variables terms.
        ld += -(hp.alpha1 + 1.0) * s - hp.alpha2 / sigma2 + s;
        ld += -1.5 * t - hp.s2 / (2.0 * tau2) + t;
        ld += hp.a * theta.ln() + hp.b * (1.0 - theta).ln();
        ld
    }

    fn score(&self, x_c: &DVector<f64>, x_d: &[usize]) -> Result<DVector<f64>> {
        let hp = &self.hyper;
        let (beta, sigma2, tau2, theta) = self.unpack(x_c);
        let n = self.n_obs() as f64;
        let p = self.n_pred() as f64;
        let gamma: Vec<bool> = x_d.iter().map(|&z| z == 2).collect();
        let k = gamma.iter().filter(|&&g| g).count() as f64;
        let resid = &self.y - self.masked_fit(&gamma, &beta);
        let rss = resid.dot(&resid);
        let b2 = beta.dot(&beta);
        let mut grad = DVector::zeros(self.dim_c());
        for pp in 0..self.n_pred() {
            let lik = if gamma[pp] {
                self.x.column(pp).dot(&resid) / sigma2
            } else {
                0.0
            };
            grad[pp] = lik - beta[pp] / (sigma2 * tau2);
        }
        let np = self.n_pred();
        grad[np] = -0.5 * n + rss / (2.0 * sigma2) - 0.5 * p + b2 / (2.0 * sigma2 * tau2)
            - (hp.alpha1 + 1.0)
            + hp.alpha2 / sigma2
            + 1.0;
        grad[np + 1] = -0.5 * p + b2 / (2.0 * sigma2 * tau2) - 1.5 + hp.s2 / (2.0 * tau2) + 1.0;
        grad[np + 2] = (k + hp.a) * (1.0 - theta) - (p - k + hp.b) * theta;
        if grad.iter().any(|g| !g.is_finite()) {
            let bad = grad
                .iter()
                .enumerate()
                .filter(|(_, g)| !g.is_finite())
                .map(|(i, _)| i)
                .collect();
            return Err(MadMixError::NonFiniteScore(bad));
        }
        Ok(grad)
    }

    /// Inclusion conditional in the ghost representation: the coefficient
    /// prior cancels, leaving the likelihood ratio times the prior odds.
    fn discrete_conditional(
        &self,
        m: usize,
        x_d: &[usize],
        x_c: &DVector<f64>,
    ) -> Result<DiscretePmf<f64>> {
        let (beta, sigma2, _tau2, theta) = self.unpack(x_c);
        let mut gamma: Vec<bool> = x_d.iter().map(|&z| z == 2).collect();
        gamma[m] = false;
        let base = &self.y - self.masked_fit(&gamma, &beta);
        let off = base.dot(&base);
        let with = &base - self.x.column(m) * beta[m];
        let on = with.dot(&with);
        let l_off = (1.0 - theta).ln() - off / (2.0 * sigma2);
        let l_on = theta.ln() - on / (2.0 * sigma2);
        DiscretePmf::from_log_weights(&[l_off, l_on])
    }
}

/// Synthetic regression data: standard-normal design, three strong true
/// coefficients, unit noise.
pub fn spikeslab_synthetic(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    use rand::SeedableRng;
    assert!(p >= 3);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let mut beta = DVector::zeros(p);
    beta[0] = 3.0;
    beta[1] = -2.0;
    beta[2] = 1.5;
    let noise = DVector::from_fn(n, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let y = &x * beta + noise;
    (x, y)
}
