//! Comparison baselines: a systematic-scan Gibbs sampler driven by the same
//! full conditionals as the flow, and a mean-field coordinate-ascent fit
//! computed by exact enumeration of the joint.

use num_traits::Float;
use rand::Rng;

use crate::error::{MadMixError, Result};
use crate::pmf::DiscretePmf;
use crate::stats::kl_divergence;
use crate::target::{for_each_state, state_index, FullConditionalTarget};

/// Systematic-scan Gibbs chain; one sweep visits the coordinates in the same
/// ascending order as the flow's discrete pass.
#[derive(Debug, Clone)]
pub struct GibbsChain<T, Tg> {
    pub target: Tg,
    pub x: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T, Tg> GibbsChain<T, Tg>
where
    T: Float,
    Tg: FullConditionalTarget<T>,
{
    pub fn new(target: Tg, init: Vec<usize>) -> Result<Self> {
        if init.len() != target.dim() {
            return Err(MadMixError::DimensionMismatch {
                got: init.len(),
                expected: target.dim(),
            });
        }
        for (m, &a) in init.iter().enumerate() {
            let k = target.support_size(m);
            if a < 1 || a > k {
                return Err(MadMixError::AtomOutOfRange {
                    index: a,
                    support: k,
                });
            }
        }
        Ok(Self {
            target,
            x: init,
            _marker: std::marker::PhantomData,
        })
    }

    /// Start every coordinate at its first atom.
    pub fn from_target(target: Tg) -> Result<Self> {
        let init = vec![1; target.dim()];
        Self::new(target, init)
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for m in 0..self.target.dim() {
            let pmf = self.target.conditional(m, &self.x)?;
            self.x[m] = pmf.sample_atom(rng);
        }
        Ok(())
    }
}

/// Raw and smoothed empirical PMFs over a flattened finite support.
#[derive(Debug, Clone)]
pub struct EmpiricalPmf {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
}

/// Histogram of flattened state draws. The smoothed variant adds `1/(2n)` to
/// empty atoms and renormalizes, so downstream KL stays finite.
pub fn empirical_pmf(states: &[Vec<usize>], sizes: &[usize]) -> Result<EmpiricalPmf> {
    if states.is_empty() {
        return Err(MadMixError::TooFewSamples { min: 1, got: 0 });
    }
    let total: usize = sizes.iter().product();
    let n = states.len() as f64;
    let mut raw = vec![0.0; total];
    for x in states {
        raw[state_index(sizes, x)] += 1.0 / n;
    }
    let fill = 1.0 / (2.0 * n);
    let mut smoothed: Vec<f64> = raw
        .iter()
        .map(|&p| if p == 0.0 { fill } else { p })
        .collect();
    let mass: f64 = smoothed.iter().sum();
    for p in smoothed.iter_mut() {
        *p /= mass;
    }
    Ok(EmpiricalPmf { raw, smoothed })
}

/// KL from an estimated PMF vector to the target's exact PMF vector.
pub fn kl_to_target(estimate: &[f64], target: &[f64]) -> f64 {
    kl_divergence(estimate, target)
}

/// Mean-field fit: per-coordinate factors and the ELBO trace.
#[derive(Debug, Clone)]
pub struct CaviResult {
    pub factors: Vec<DiscretePmf<f64>>,
    pub elbo_trace: Vec<f64>,
}

impl CaviResult {
    /// Product-form joint PMF vector over the flattened support.
    pub fn joint_probs(&self, sizes: &[usize]) -> Vec<f64> {
        let mut probs = Vec::with_capacity(sizes.iter().product());
        for_each_state(sizes, |x| {
            let p: f64 = x
                .iter()
                .zip(&self.factors)
                .map(|(&a, f)| f.prob(a).unwrap())
                .product();
            probs.push(p);
        });
        probs
    }
}

/// Coordinate-ascent variational inference against an enumerable target.
///
/// Each update sets `q_m(a)` proportional to the exponentiated expected
/// log-mass under the other factors; the ELBO is recomputed by full
/// enumeration after every sweep and must never decrease.
pub fn cavi_fit<Tg: FullConditionalTarget<f64>>(
    target: &Tg,
    max_sweeps: usize,
    tol: f64,
) -> Result<CaviResult> {
    let sizes = target.support_sizes();
    let total = target.num_states(1_000_000)? as usize;
    let mut log_p = Vec::with_capacity(total);
    let mut missing = false;
    for_each_state(&sizes, |x| match target.unnormalized_log_mass(x) {
        Some(lp) => log_p.push(lp),
        None => missing = true,
    });
    if missing {
        return Err(MadMixError::LogMassUnavailable);
    }
    let dim = sizes.len();
    let mut factors: Vec<Vec<f64>> = sizes.iter().map(|&k| vec![1.0 / k as f64; k]).collect();
    let elbo = |factors: &[Vec<f64>]| -> f64 {
        let mut e = 0.0;
        let mut idx = 0;
        for_each_state(&sizes, |x| {
            let q: f64 = x
                .iter()
                .zip(factors)
                .map(|(&a, f)| f[a - 1])
                .product();
            if q > 0.0 {
                e += q * log_p[idx];
            }
            idx += 1;
        });
        for f in factors {
            for &p in f {
                if p > 0.0 {
                    e -= p * p.ln();
                }
            }
        }
        e
    };
    let mut trace = vec![elbo(&factors)];
    for _ in 0..max_sweeps {
        for m in 0..dim {
            let mut score = vec![0.0; sizes[m]];
            let mut idx = 0;
            for_each_state(&sizes, |x| {
                let mut w = 1.0;
                for (j, &a) in x.iter().enumerate() {
                    if j != m {
                        w *= factors[j][a - 1];
                    }
                }
                score[x[m] - 1] += w * log_p[idx];
                idx += 1;
            });
            let max = score.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut q: Vec<f64> = score.iter().map(|&s| (s - max).exp().max(1e-300)).collect();
            let z: f64 = q.iter().sum();
            for p in q.iter_mut() {
                *p /= z;
            }
            factors[m] = q;
        }
        let e = elbo(&factors);
        let prev = *trace.last().unwrap();
        if e + 1e-9 < prev {
            return Err(MadMixError::Model(format!(
                "mean-field objective decreased from {prev} to {e}"
            )));
        }
        trace.push(e);
        if e - prev < tol {
            break;
        }
    }
    let factors = factors
        .into_iter()
        .map(DiscretePmf::from_weights)
        .collect::<Result<Vec<_>>>()?;
    Ok(CaviResult {
        factors,
        elbo_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mad::{mad_forward, ShiftParam};
    use crate::models::{IsingChain, ToyTarget};
    use crate::state::AugmentedState;
    use crate::stats::total_variation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::RefCell;

    #[test]
    fn single_coordinate_gibbs_is_an_exact_draw() {
        let t = ToyTarget::toy_1d(2);
        let mut chain = GibbsChain::from_target(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 200_000;
        let mut counts = vec![0.0; 10];
        for _ in 0..n {
            chain.sweep(&mut rng).unwrap();
            counts[chain.x[0] - 1] += 1.0 / n as f64;
        }
        let tv = total_variation(&counts, t.joint_probs());
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn gibbs_targets_the_joint_on_a_chain() {
        let ising = IsingChain::new(5, 1.0).unwrap();
        let exact = ising.exact_pmf().unwrap();
        let mut chain = GibbsChain::from_target(&ising).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut states = Vec::with_capacity(n);
        for _ in 0..n {
            chain.sweep(&mut rng).unwrap();
            states.push(chain.x.clone());
        }
        let emp = empirical_pmf(&states, &[2; 5]).unwrap();
        let tv = total_variation(&emp.raw, exact.probs());
        assert!(tv < 0.02, "tv {tv}");
    }

    #[test]
    fn gibbs_rejects_bad_initialization() {
        let t = ToyTarget::toy_2d(0);
        assert!(GibbsChain::<f64, _>::new(&t, vec![1]).is_err());
        assert!(GibbsChain::<f64, _>::new(&t, vec![9, 1]).is_err());
    }

    #[test]
    fn empirical_pmf_smoothing_fills_empty_atoms() {
        let states = vec![vec![1], vec![1], vec![2], vec![2]];
        let emp = empirical_pmf(&states, &[3]).unwrap();
        assert_eq!(emp.raw, vec![0.5, 0.5, 0.0]);
        assert!(emp.smoothed[2] > 0.0);
        assert!((emp.smoothed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // KL against a full-support target stays finite only when smoothed.
        let target = [0.4, 0.4, 0.2];
        assert!(kl_to_target(&emp.smoothed, &target).is_finite());
    }

    #[test]
    fn cavi_is_exact_in_one_dimension() {
        let t = ToyTarget::toy_1d(7);
        let fit = cavi_fit(&t, 50, 1e-12).unwrap();
        let kl = kl_to_target(&fit.joint_probs(&[10]), t.joint_probs());
        assert!(kl < 1e-10, "kl {kl}");
    }

    #[test]
    fn cavi_recovers_factorized_targets() {
        // Joint = outer product of two marginals; mean field is exact.
        let pa = [0.2, 0.3, 0.5];
        let pb = [0.6, 0.4];
        let mut joint = Vec::new();
        for &a in &pa {
            for &b in &pb {
                joint.push(a * b);
            }
        }
        let t = ToyTarget::from_probs(&[3, 2], joint.clone()).unwrap();
        let fit = cavi_fit(&t, 100, 1e-13).unwrap();
        let kl = kl_to_target(&fit.joint_probs(&[3, 2]), &joint);
        assert!(kl < 1e-10, "kl {kl}");
    }

    #[test]
    fn cavi_objective_is_monotone() {
        let t = ToyTarget::toy_2d(11);
        let fit = cavi_fit(&t, 100, 0.0).unwrap();
        for w in fit.elbo_trace.windows(2) {
            assert!(w[1] + 1e-9 >= w[0], "trace dipped: {:?}", w);
        }
        assert!(fit.elbo_trace.len() > 2);
    }

    /// Records the coordinate order in which conditionals are requested.
    struct TraceTarget<'a> {
        inner: &'a ToyTarget,
        visits: RefCell<Vec<usize>>,
    }

    impl FullConditionalTarget<f64> for TraceTarget<'_> {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn support_size(&self, m: usize) -> usize {
            FullConditionalTarget::support_size(self.inner, m)
        }
        fn conditional(&self, m: usize, x: &[usize]) -> crate::error::Result<DiscretePmf<f64>> {
            self.visits.borrow_mut().push(m);
            self.inner.conditional(m, x)
        }
    }

    #[test]
    fn gibbs_sweep_and_flow_pass_visit_coordinates_identically() {
        let toy = ToyTarget::toy_3d(1);
        let tracer = TraceTarget {
            inner: &toy,
            visits: RefCell::new(Vec::new()),
        };
        let mut chain = GibbsChain::from_target(&tracer).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        chain.sweep(&mut rng).unwrap();
        let gibbs_order = tracer.visits.borrow().clone();
        tracer.visits.borrow_mut().clear();
        let s = AugmentedState::new(vec![1, 2, 3], vec![0.3, 0.5, 0.7]).unwrap();
        mad_forward(&s, &tracer, ShiftParam::default_shift()).unwrap();
        let flow_order = tracer.visits.borrow().clone();
        assert_eq!(gibbs_order, flow_order);
        assert_eq!(gibbs_order, vec![0, 1, 2]);
    }
}
