//! Bayesian Gaussian mixture model.
//!
//! Two views of the same posterior:
//! - collapsed-free Gibbs conditionals on the constrained parameters
//!   (simplex weights, means, covariances) for the sampler baseline, and
//! - a joint flow target over labels and an unconstrained parameter vector
//!   (additive log-ratio weights, Cholesky factors with log diagonals),
//!   with the reparametrization Jacobians folded into the density and an
//!   analytic score.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{MadMixError, Result};
use crate::mixed::MixedTarget;
use crate::pmf::DiscretePmf;

const LN_2PI: f64 = 1.8378770664093453;

/// Model: data, cluster count, Dirichlet concentration.
#[derive(Debug, Clone)]
pub struct GmmModel {
    data: DMatrix<f64>,
    k: usize,
    alpha: f64,
}

/// Constrained parameters, with covariances held as lower Cholesky factors.
#[derive(Debug, Clone)]
pub struct GmmParams {
    pub w: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub chol: Vec<DMatrix<f64>>,
}

/// Per-cluster sufficient statistics: count, mean, centered scatter.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub n: f64,
    pub mean: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

/// Gibbs chain state on the constrained parametrization.
#[derive(Debug, Clone)]
pub struct GmmGibbsState {
    pub labels: Vec<usize>,
    pub w: Vec<f64>,
    pub mu: Vec<DVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
}

fn mvn_log_pdf_chol(y: &DVector<f64>, mu: &DVector<f64>, l: &DMatrix<f64>) -> f64 {
    let d = y.len();
    let delta = y - mu;
    let z = l
        .solve_lower_triangular(&delta)
        .expect("Cholesky factor has positive diagonal");
    let log_det = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
    -0.5 * (d as f64 * LN_2PI + log_det + z.dot(&z))
}

impl GmmModel {
    pub fn new(data: DMatrix<f64>, k: usize, alpha: f64) -> Result<Self> {
        if k < 1 || data.nrows() < k {
            return Err(MadMixError::Model(
                "need at least one data point per cluster".into(),
            ));
        }
        if !(alpha > 0.0) {
            return Err(MadMixError::Model("Dirichlet concentration must be positive".into()));
        }
        Ok(Self { data, k, alpha })
    }

    pub fn n_obs(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_clusters(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    fn obs(&self, n: usize) -> DVector<f64> {
        self.data.row(n).transpose()
    }

    /// Counts, cluster means, and centered scatter matrices for a labeling.
    /// Labels are 1-based atoms.
    pub fn sufficient_stats(&self, labels: &[usize]) -> Result<Vec<ClusterStats>> {
        if labels.len() != self.n_obs() {
            return Err(MadMixError::DimensionMismatch {
                got: labels.len(),
                expected: self.n_obs(),
            });
        }
        let d = self.dim();
        let mut stats: Vec<ClusterStats> = (0..self.k)
            .map(|_| ClusterStats {
                n: 0.0,
                mean: DVector::zeros(d),
                scatter: DMatrix::zeros(d, d),
            })
            .collect();
        for (n, &z) in labels.iter().enumerate() {
            let k = z - 1;
            stats[k].n += 1.0;
            stats[k].mean += self.obs(n);
        }
        for s in stats.iter_mut() {
            if s.n > 0.0 {
                s.mean /= s.n;
            }
        }
        for (n, &z) in labels.iter().enumerate() {
            let k = z - 1;
            let delta = self.obs(n) - &stats[k].mean;
            stats[k].scatter += &delta * delta.transpose();
        }
        Ok(stats)
    }

    /// Label conditional: `P(z_n = k) ∝ w_k N(y_n; mu_k, Sigma_k)`.
    pub fn label_conditional(&self, n: usize, params: &GmmParams) -> Result<DiscretePmf<f64>> {
        let y = self.obs(n);
        let logs: Vec<f64> = (0..self.k)
            .map(|k| params.w[k].ln() + mvn_log_pdf_chol(&y, &params.mu[k], &params.chol[k]))
            .collect();
        DiscretePmf::from_log_weights(&logs)
    }

    /// Weight conditional given labels: Dirichlet(alpha + counts).
    pub fn sample_weights<R: Rng + ?Sized>(
        &self,
        stats: &[ClusterStats],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut w = Vec::with_capacity(self.k);
        for s in stats {
            let g = Gamma::new(self.alpha + s.n, 1.0)
                .map_err(|e| MadMixError::Model(e.to_string()))?;
            w.push(g.sample(rng).max(1e-300));
        }
        let total: f64 = w.iter().sum();
        for wi in w.iter_mut() {
            *wi /= total;
        }
        Ok(w)
    }

    /// Covariance conditional under the flat parameter prior:
    /// inverse-Wishart with scale `S_k` and `N_k - D - 1` degrees of freedom.
    pub fn sample_sigma<R: Rng + ?Sized>(
        &self,
        k: usize,
        stats: &ClusterStats,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let nu = stats.n - d as f64 - 1.0;
        if nu <= (d - 1) as f64 {
            return Err(MadMixError::EmptyCluster(k));
        }
        inverse_wishart(&stats.scatter, nu, rng)
    }

    /// Mean conditional: `N(ybar_k, Sigma_k / N_k)`.
    pub fn sample_mu<R: Rng + ?Sized>(
        &self,
        k: usize,
        stats: &ClusterStats,
        sigma: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        if stats.n < 1.0 {
            return Err(MadMixError::EmptyCluster(k));
        }
        let chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| MadMixError::Model("covariance draw not positive definite".into()))?;
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        });
        Ok(&stats.mean + chol.l() * z / stats.n.sqrt())
    }

    /// One systematic Gibbs sweep: labels, then weights, then per-cluster
    /// covariance and mean.
    pub fn gibbs_sweep<R: Rng + ?Sized>(
        &self,
        state: &mut GmmGibbsState,
        rng: &mut R,
    ) -> Result<()> {
        let chol: Vec<DMatrix<f64>> = state
            .sigma
            .iter()
            .map(|s| {
                Cholesky::new(s.clone())
                    .map(|c| c.l().clone_owned())
                    .ok_or_else(|| MadMixError::Model("covariance not positive definite".into()))
            })
            .collect::<Result<_>>()?;
        let params = GmmParams {
            w: state.w.clone(),
            mu: state.mu.clone(),
            chol,
        };
        for n in 0..self.n_obs() {
            state.labels[n] = self.label_conditional(n, &params)?.sample_atom(rng);
        }
        let stats = self.sufficient_stats(&state.labels)?;
        state.w = self.sample_weights(&stats, rng)?;
        for k in 0..self.k {
            state.sigma[k] = self.sample_sigma(k, &stats[k], rng)?;
            state.mu[k] = self.sample_mu(k, &stats[k], &state.sigma[k], rng)?;
        }
        Ok(())
    }

    /// Deterministic initialization: farthest-point centroids, nearest-center
    /// labels, uniform weights, pooled covariance everywhere.
    pub fn init_state(&self) -> Result<GmmGibbsState> {
        let d = self.dim();
        let mut centers = vec![self.obs(0)];
        while centers.len() < self.k {
            let mut best = (0usize, -1.0f64);
            for n in 0..self.n_obs() {
                let y = self.obs(n);
                let dist = centers
                    .iter()
                    .map(|c| (&y - c).norm_squared())
                    .fold(f64::INFINITY, f64::min);
                if dist > best.1 {
                    best = (n, dist);
                }
            }
            centers.push(self.obs(best.0));
        }
        let labels: Vec<usize> = (0..self.n_obs())
            .map(|n| {
                let y = self.obs(n);
                let mut k_best = 0;
                let mut d_best = f64::INFINITY;
                for (k, c) in centers.iter().enumerate() {
                    let dist = (&y - c).norm_squared();
                    if dist < d_best {
                        d_best = dist;
                        k_best = k;
                    }
                }
                k_best + 1
            })
            .collect();
        let stats = self.sufficient_stats(&labels)?;
        let mut pooled = DMatrix::zeros(d, d);
        for s in &stats {
            pooled += &s.scatter;
        }
        pooled /= (self.n_obs() - self.k).max(1) as f64;
        for i in 0..d {
            pooled[(i, i)] += 1e-6;
        }
        Ok(GmmGibbsState {
            labels,
            w: vec![1.0 / self.k as f64; self.k],
            mu: stats.iter().map(|s| s.mean.clone()).collect(),
            sigma: vec![pooled; self.k],
        })
    }

    // Unconstrained packing: [v_1..v_{K-1} | mu_1..mu_K | vech(H_1)..vech(H_K)],
    // H lower triangular row by row with log-scaled diagonal.

    pub fn flat_dim(&self) -> usize {
        let d = self.dim();
        (self.k - 1) + self.k * d + self.k * d * (d + 1) / 2
    }

    /// Unpack a flat unconstrained vector into constrained parameters.
    pub fn unpack(&self, theta: &DVector<f64>) -> Result<GmmParams> {
        if theta.len() != self.flat_dim() {
            return Err(MadMixError::DimensionMismatch {
                got: theta.len(),
                expected: self.flat_dim(),
            });
        }
        let d = self.dim();
        let mut idx = 0;
        // Additive log-ratio weights with the last cluster as reference.
        let mut expv = Vec::with_capacity(self.k);
        for _ in 0..self.k - 1 {
            expv.push(theta[idx].exp());
            idx += 1;
        }
        expv.push(1.0);
        let total: f64 = expv.iter().sum();
        let w: Vec<f64> = expv.iter().map(|e| e / total).collect();
        let mut mu = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            mu.push(DVector::from_fn(d, |i, _| theta[idx + i]));
            idx += d;
        }
        let mut chol = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            let mut l = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..=i {
                    l[(i, j)] = if i == j { theta[idx].exp() } else { theta[idx] };
                    idx += 1;
                }
            }
            chol.push(l);
        }
        Ok(GmmParams { w, mu, chol })
    }

    /// Pack constrained parameters into the flat unconstrained vector.
    pub fn pack(&self, params: &GmmParams) -> DVector<f64> {
        let d = self.dim();
        let mut theta = Vec::with_capacity(self.flat_dim());
        for k in 0..self.k - 1 {
            theta.push((params.w[k] / params.w[self.k - 1]).ln());
        }
        for k in 0..self.k {
            for i in 0..d {
                theta.push(params.mu[k][i]);
            }
        }
        for k in 0..self.k {
            for i in 0..d {
                for j in 0..=i {
                    let l = params.chol[k][(i, j)];
                    theta.push(if i == j { l.ln() } else { l });
                }
            }
        }
        DVector::from_vec(theta)
    }

    /// A Gaussian reference centered on the deterministic initialization.
    pub fn flow_reference(&self) -> Result<crate::mixed::GaussianReference> {
        let init = self.init_state()?;
        let chol = init
            .sigma
            .iter()
            .map(|s| {
                Cholesky::new(s.clone())
                    .map(|c| c.l().clone_owned())
                    .ok_or_else(|| MadMixError::Model("pooled covariance not positive definite".into()))
            })
            .collect::<Result<_>>()?;
        let params = GmmParams {
            w: init.w,
            mu: init.mu,
            chol,
        };
        let mean = self.pack(&params);
        let sd = DVector::from_element(mean.len(), 0.3);
        // Draw reference labels from the label conditional at the reference
        // center; uniform labels put almost all reference mass on scrambled
        // assignments whose gradients destabilize the leapfrog.
        let factors = (0..self.n_obs())
            .map(|n| Ok(self.label_conditional(n, &params)?.probs().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        crate::mixed::GaussianReference::new(mean, sd, factors)
    }
}

/// Likelihood part of the weight score in raw simplex coordinates:
/// `N_k / w_k`.
pub fn raw_weight_score(counts: &[f64], w: &[f64]) -> Vec<f64> {
    counts.iter().zip(w).map(|(n, wi)| n / wi).collect()
}

/// Inverse-Wishart draw via the Bartlett decomposition of the Wishart on the
/// inverse scale.
pub fn inverse_wishart<R: Rng + ?Sized>(
    scale: &DMatrix<f64>,
    nu: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    if nu <= (d - 1) as f64 {
        return Err(MadMixError::Model(
            "inverse-Wishart needs nu > D - 1".into(),
        ));
    }
    let scale_inv = scale
        .clone()
        .cholesky()
        .ok_or_else(|| MadMixError::Model("scale not positive definite".into()))?
        .inverse();
    let l = Cholesky::new(scale_inv)
        .ok_or_else(|| MadMixError::Model("inverse scale not positive definite".into()))?
        .l()
        .clone_owned();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let g = Gamma::new((nu - i as f64) / 2.0, 2.0)
            .map_err(|e| MadMixError::Model(e.to_string()))?;
        a[(i, i)] = g.sample(rng).max(1e-300).sqrt();
        for j in 0..i {
            a[(i, j)] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    let sigma = w
        .cholesky()
        .ok_or_else(|| MadMixError::Model("Wishart draw not positive definite".into()))?
        .inverse();
    Ok(sigma)
}

impl MixedTarget for GmmModel {
    fn dim_c(&self) -> usize {
        self.flat_dim()
    }

    fn dim_d(&self) -> usize {
        self.n_obs()
    }

    fn support_size(&self, _m: usize) -> usize {
        self.k
    }

    /// Joint log-density over labels and unconstrained parameters: mixture
    /// likelihood, Dirichlet(alpha) prior on the weights, flat priors on
    /// means and covariances, plus the log-Jacobians of the weight and
    /// Cholesky reparametrizations.
    fn unnormalized_log_density(&self, x_c: &DVector<f64>, x_d: &[usize]) -> f64 {
        let params = match self.unpack(x_c) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        let d = self.dim();
        let mut ld = 0.0;
        for (n, &z) in x_d.iter().enumerate() {
            let k = z - 1;
            ld += params.w[k].ln()
                + mvn_log_pdf_chol(&self.obs(n), &params.mu[k], &params.chol[k]);
        }
        // Dirichlet(alpha) prior plus the simplex log-Jacobian sum(log w_k).
        for k in 0..self.k {
            ld += self.alpha * params.w[k].ln();
        }
        // Sigma -> (L, log diag) change of variables per cluster.
        for k in 0..self.k {
            for i in 0..d {
                ld += (d - i + 1) as f64 * params.chol[k][(i, i)].ln();
            }
            ld += d as f64 * std::f64::consts::LN_2;
        }
        ld
    }

    /// Analytic gradient in the unconstrained coordinates.
    fn score(&self, x_c: &DVector<f64>, x_d: &[usize]) -> Result<DVector<f64>> {
        let params = self.unpack(x_c)?;
        let d = self.dim();
        let stats = self.sufficient_stats(x_d)?;
        let mut grad = DVector::zeros(self.flat_dim());
        let mut idx = 0;
        // Weights: coefficients c_k = N_k + alpha on log w_k, mapped through
        // the ALR transform.
        let c: Vec<f64> = stats.iter().map(|s| s.n + self.alpha).collect();
        let c_total: f64 = c.iter().sum();
        for k in 0..self.k - 1 {
            grad[idx] = c[k] - params.w[k] * c_total;
            idx += 1;
        }
        // Means: N_k Sigma^{-1} (ybar_k - mu_k).
        // Sigma^{-1} = L^{-T} L^{-1} via triangular solves; refactorizing
        // L L^T can fail spuriously when the leapfrog wanders far out.
        let mut sigma_inv = Vec::with_capacity(self.k);
        for k in 0..self.k {
            let l_inv = params.chol[k]
                .solve_lower_triangular(&DMatrix::identity(d, d))
                .ok_or_else(|| MadMixError::Model("singular Cholesky factor".into()))?;
            sigma_inv.push(l_inv.transpose() * l_inv);
        }
        for k in 0..self.k {
            let g = &sigma_inv[k] * (&stats[k].mean - &params.mu[k]) * stats[k].n;
            for i in 0..d {
                grad[idx + i] = g[i];
            }
            idx += d;
        }
        // Cholesky blocks: with G = d logp / d Sigma (symmetric), the factor
        // gradient is 2 G L on the lower triangle; diagonal entries chain
        // through L_ii = exp(H_ii) and pick up the Jacobian coefficients.
        for k in 0..self.k {
            let a = &stats[k].scatter
                + (&params.mu[k] - &stats[k].mean) * (&params.mu[k] - &stats[k].mean).transpose()
                    * stats[k].n;
            let g_sigma = (&sigma_inv[k] * &a * &sigma_inv[k] - &sigma_inv[k] * stats[k].n) * 0.5;
            let g_l = 2.0 * &g_sigma * &params.chol[k];
            for i in 0..d {
                for j in 0..=i {
                    grad[idx] = if i == j {
                        g_l[(i, i)] * params.chol[k][(i, i)] + (d - i + 1) as f64
                    } else {
                        g_l[(i, j)]
                    };
                    idx += 1;
                }
            }
        }
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

    fn discrete_conditional(
        &self,
        m: usize,
        _x_d: &[usize],
        x_c: &DVector<f64>,
    ) -> Result<DiscretePmf<f64>> {
        let params = self.unpack(x_c)?;
        self.label_conditional(m, &params)
    }
}

/// Well-separated synthetic two-cluster data in two dimensions.
pub fn gmm_synthetic(n: usize, seed: u64) -> DMatrix<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n * 2);
    for i in 0..n {
        let c = if i % 2 == 0 { -2.5 } else { 2.5 };
        let z0: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        let z1: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        rows.push(c + 0.7 * z0);
        rows.push(c + 0.7 * z1);
    }
    DMatrix::from_row_slice(n, 2, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> GmmModel {
        GmmModel::new(gmm_synthetic(40, 0), 2, 1.0).unwrap()
    }

    #[test]
    fn raw_weight_score_example() {
        let s = raw_weight_score(&[2.0, 3.0], &[0.5, 0.5]);
        assert_eq!(s, vec![4.0, 6.0]);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let m = model();
        let init = m.init_state().unwrap();
        let params = GmmParams {
            w: init.w.clone(),
            mu: init.mu.clone(),
            chol: init
                .sigma
                .iter()
                .map(|s| Cholesky::new(s.clone()).unwrap().l().clone_owned())
                .collect(),
        };
        let theta = m.pack(&params);
        assert_eq!(theta.len(), m.flat_dim());
        let back = m.unpack(&theta).unwrap();
        for k in 0..2 {
            assert!((back.w[k] - params.w[k]).abs() < 1e-12);
            assert!((&back.mu[k] - &params.mu[k]).norm() < 1e-12);
            let sigma_in = &params.chol[k] * params.chol[k].transpose();
            let sigma_out = &back.chol[k] * back.chol[k].transpose();
            assert!((&sigma_out - &sigma_in).norm() < 1e-12);
        }
    }

    #[test]
    fn label_conditional_prefers_nearby_cluster() {
        let m = model();
        let params = GmmParams {
            w: vec![0.5, 0.5],
            mu: vec![
                DVector::from_vec(vec![-2.5, -2.5]),
                DVector::from_vec(vec![2.5, 2.5]),
            ],
            chol: vec![DMatrix::identity(2, 2); 2],
        };
        // Observation 0 was generated near (-2.5, -2.5).
        let pmf = m.label_conditional(0, &params).unwrap();
        assert!(pmf.prob(1).unwrap() > 0.99);
    }

    #[test]
    fn mean_score_vanishes_at_cluster_means() {
        let m = model();
        let init = m.init_state().unwrap();
        let stats = m.sufficient_stats(&init.labels).unwrap();
        let params = GmmParams {
            w: init.w.clone(),
            mu: stats.iter().map(|s| s.mean.clone()).collect(),
            chol: init
                .sigma
                .iter()
                .map(|s| Cholesky::new(s.clone()).unwrap().l().clone_owned())
                .collect(),
        };
        let theta = m.pack(&params);
        let grad = m.score(&theta, &init.labels).unwrap();
        // Mean block sits right after the K-1 weight entries.
        for i in 1..5 {
            assert!(grad[i].abs() < 1e-8, "grad[{i}] = {}", grad[i]);
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let m = model();
        let init = m.init_state().unwrap();
        let mut theta = m.pack(&GmmParams {
            w: init.w.clone(),
            mu: init.mu.clone(),
            chol: init
                .sigma
                .iter()
                .map(|s| Cholesky::new(s.clone()).unwrap().l().clone_owned())
                .collect(),
        });
        // Perturb away from any stationary point.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..theta.len() {
            theta[i] += 0.3 * (rng.gen::<f64>() - 0.5);
        }
        let grad = m.score(&theta, &init.labels).unwrap();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (m.unnormalized_log_density(&tp, &init.labels)
                - m.unnormalized_log_density(&tm, &init.labels))
                / (2.0 * h);
            let scale = 1.0 + grad[i].abs();
            assert!(
                (grad[i] - fd).abs() / scale < 1e-4,
                "coord {i}: analytic {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn conditional_consistent_with_joint_density() {
        let m = model();
        let init = m.init_state().unwrap();
        // Overlapping clusters keep both label probabilities far from the
        // underflow floor.
        let theta = m.pack(&GmmParams {
            w: vec![0.4, 0.6],
            mu: vec![
                DVector::from_vec(vec![-0.5, -0.5]),
                DVector::from_vec(vec![0.5, 0.5]),
            ],
            chol: vec![DMatrix::identity(2, 2) * 2.0; 2],
        });
        let mut labels = init.labels.clone();
        let n = 7;
        let pmf = m.discrete_conditional(n, &labels, &theta).unwrap();
        labels[n] = 1;
        let l1 = m.unnormalized_log_density(&theta, &labels);
        labels[n] = 2;
        let l2 = m.unnormalized_log_density(&theta, &labels);
        let ratio = (pmf.prob(1).unwrap() / pmf.prob(2).unwrap()).ln();
        assert!((ratio - (l1 - l2)).abs() < 1e-10);
    }

    #[test]
    fn inverse_wishart_mean() {
        // E[IW(Psi, nu)] = Psi / (nu - D - 1).
        let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let nu = 12.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut acc = DMatrix::zeros(2, 2);
        let reps = 40_000;
        for _ in 0..reps {
            acc += inverse_wishart(&psi, nu, &mut rng).unwrap();
        }
        acc /= reps as f64;
        let expect = &psi / (nu - 3.0);
        assert!((acc - expect).norm() < 0.02, "IW mean off");
    }

    #[test]
    fn mu_conditional_concentrates_at_cluster_mean() {
        let m = model();
        let init = m.init_state().unwrap();
        let stats = m.sufficient_stats(&init.labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut acc = DVector::zeros(2);
        let reps = 20_000;
        for _ in 0..reps {
            acc += m.sample_mu(0, &stats[0], &init.sigma[0], &mut rng).unwrap();
        }
        acc /= reps as f64;
        assert!((acc - &stats[0].mean).norm() < 0.02);
    }

    #[test]
    fn gibbs_sweep_recovers_separation() {
        let m = model();
        let mut state = m.init_state().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            m.gibbs_sweep(&mut state, &mut rng).unwrap();
        }
        // Means should straddle the two generating centers.
        let mut mus: Vec<f64> = state.mu.iter().map(|mu| mu[0]).collect();
        mus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(mus[0] < -1.5 && mus[1] > 1.5, "means {mus:?}");
        assert!((state.w[0] - 0.5).abs() < 0.25);
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let m = model();
        let labels = vec![1usize; m.n_obs()];
        let stats = m.sufficient_stats(&labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            m.sample_sigma(1, &stats[1], &mut rng),
            Err(MadMixError::EmptyCluster(1))
        ));
    }
}
