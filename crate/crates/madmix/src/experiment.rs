//! Experiment harness: configuration, metric records, runners for each
//! built-in target and method, timing probes, and CSV/JSON output.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{cavi_fit, empirical_pmf, kl_to_target, GibbsChain};
use crate::error::{MadMixError, Result};
use crate::mad::ShiftParam;
use crate::mixed::{HamiltonianConfig, MixedMixFlow};
use crate::mixflow::{MadMixFlow, UniformReference};
use crate::models::{GmmModel, IsingChain, SpikeSlabHyper, SpikeSlabModel, ToyTarget};
use crate::stats::total_variation;
use crate::target::{for_each_state, FullConditionalTarget};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MADMIX_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Toy1d,
    Toy2d,
    Toy3d,
    Ising,
    Gmm,
    Spikeslab,
}

impl FromStr for Experiment {
    type Err = MadMixError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy1d" => Ok(Self::Toy1d),
            "toy2d" => Ok(Self::Toy2d),
            "toy3d" => Ok(Self::Toy3d),
            "ising" => Ok(Self::Ising),
            "gmm" => Ok(Self::Gmm),
            "spikeslab" => Ok(Self::Spikeslab),
            other => Err(MadMixError::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Toy1d => "toy1d",
            Self::Toy2d => "toy2d",
            Self::Toy3d => "toy3d",
            Self::Ising => "ising",
            Self::Gmm => "gmm",
            Self::Spikeslab => "spikeslab",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Madmix,
    Gibbs,
    Meanfield,
}

impl FromStr for Method {
    type Err = MadMixError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "madmix" => Ok(Self::Madmix),
            "gibbs" => Ok(Self::Gibbs),
            "meanfield" => Ok(Self::Meanfield),
            other => Err(MadMixError::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Madmix => "madmix",
            Self::Gibbs => "gibbs",
            Self::Meanfield => "meanfield",
        }
    }
}

/// Fully resolved experiment configuration; serialized alongside results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    pub n_flow: usize,
    pub xi: f64,
    pub seed: u64,
    pub samples: usize,
    pub leapfrog_steps: usize,
    pub step_size: f64,
    pub ising_m: usize,
    pub ising_beta: f64,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Flow lengths from the experiment defaults: 500 for the 1D/2D toys,
    /// 100 for the 3D toy, 1000 for short Ising chains, 500 for long ones,
    /// 100 for the mixture model, 500 for the regression model.
    pub fn default_n_flow(experiment: Experiment, ising_m: usize) -> usize {
        match experiment {
            Experiment::Toy1d | Experiment::Toy2d => 500,
            Experiment::Toy3d => 100,
            Experiment::Ising => {
                if ising_m <= 5 {
                    1000
                } else {
                    500
                }
            }
            Experiment::Gmm => 100,
            Experiment::Spikeslab => 500,
        }
    }

    pub fn new(experiment: Experiment, method: Method) -> Self {
        let ising_m = 5;
        Self {
            experiment,
            method,
            n_flow: Self::default_n_flow(experiment, ising_m),
            xi: std::f64::consts::PI / 16.0,
            seed: 0,
            samples: 10_000,
            leapfrog_steps: 10,
            step_size: 0.05,
            ising_m,
            ising_beta: 1.0,
            data: None,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_flow == 0 {
            return Err(MadMixError::Config("n-flow must be at least 1".into()));
        }
        if self.samples < 2 {
            return Err(MadMixError::Config("samples must be at least 2".into()));
        }
        ShiftParam::new(self.xi)?;
        if matches!(self.experiment, Experiment::Gmm | Experiment::Spikeslab) {
            HamiltonianConfig {
                leapfrog_steps: self.leapfrog_steps,
                step_size: self.step_size,
                ..Default::default()
            }
            .validate()?;
            if self.method == Method::Meanfield {
                return Err(MadMixError::Config(
                    "mean-field is only available for enumerable discrete targets".into(),
                ));
            }
        }
        if self.experiment == Experiment::Ising && self.ising_m < 2 {
            return Err(MadMixError::Config("ising needs at least 2 spins".into()));
        }
        Ok(())
    }

    pub fn hamiltonian(&self) -> HamiltonianConfig {
        HamiltonianConfig {
            leapfrog_steps: self.leapfrog_steps,
            step_size: self.step_size,
            ..Default::default()
        }
    }

    /// Output directory: explicit flag, then the environment default, then
    /// the current directory.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

/// One long-format metric row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResultRecord {
    pub method: String,
    pub experiment: String,
    pub metric: String,
    pub value: f64,
    pub se: f64,
    pub seed: u64,
}

impl ResultRecord {
    fn new(cfg: &ExperimentConfig, metric: &str, value: f64, se: f64) -> Self {
        Self {
            method: cfg.method.as_str().into(),
            experiment: cfg.experiment.as_str().into(),
            metric: metric.into(),
            value,
            se,
            seed: cfg.seed,
        }
    }

    /// Marker for metrics that exist in the schema but cannot be estimated
    /// for this method/target combination.
    fn unavailable(cfg: &ExperimentConfig, metric: &str) -> Self {
        Self::new(cfg, metric, f64::NAN, f64::NAN)
    }
}

fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows = Vec::new();
    let mut width = 0;
    for record in reader.records() {
        let record = record?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| MadMixError::Config(format!("bad number in {path:?}: {e}")))?;
        if width == 0 {
            width = row.len();
        } else if row.len() != width {
            return Err(MadMixError::Config(format!("ragged rows in {path:?}")));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MadMixError::Config(format!("no data rows in {path:?}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), width, &flat))
}

/// Discrete targets as a boxed trait object plus the exact PMF when the
/// support is enumerable.
fn discrete_target(cfg: &ExperimentConfig) -> Result<(Box<dyn FullConditionalTarget<f64>>, Option<Vec<f64>>)> {
    match cfg.experiment {
        Experiment::Toy1d => {
            let t = ToyTarget::toy_1d(cfg.seed);
            let probs = t.joint_probs().to_vec();
            Ok((Box::new(t), Some(probs)))
        }
        Experiment::Toy2d => {
            let t = ToyTarget::toy_2d(cfg.seed);
            let probs = t.joint_probs().to_vec();
            Ok((Box::new(t), Some(probs)))
        }
        Experiment::Toy3d => {
            let t = ToyTarget::toy_3d(cfg.seed);
            let probs = t.joint_probs().to_vec();
            Ok((Box::new(t), Some(probs)))
        }
        Experiment::Ising => {
            let t = IsingChain::new(cfg.ising_m, cfg.ising_beta)?;
            let probs = if cfg.ising_m <= 20 {
                Some(t.exact_pmf()?.probs().to_vec())
            } else {
                None
            };
            Ok((Box::new(t), probs))
        }
        _ => Err(MadMixError::Config(
            "not a purely discrete experiment".into(),
        )),
    }
}

fn run_discrete(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let (target, exact) = discrete_target(cfg)?;
    let target = &*target;
    let sizes = target.support_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    match cfg.method {
        Method::Madmix => {
            let reference = UniformReference::new(sizes.clone());
            let flow = MadMixFlow::new(target, reference, cfg.n_flow, ShiftParam::new(cfg.xi)?)?;
            let (elbo, se) = flow.elbo(cfg.samples.min(2000), &mut rng)?;
            records.push(ResultRecord::new(cfg, "neg_elbo", -elbo, se));
            if let Some(exact) = &exact {
                let (marginal, _) = flow.exact_marginal_pmf(32, &mut rng)?;
                records.push(ResultRecord::new(
                    cfg,
                    "kl",
                    kl_to_target(marginal.probs(), exact),
                    0.0,
                ));
                records.push(ResultRecord::new(
                    cfg,
                    "tv",
                    total_variation(marginal.probs(), exact),
                    0.0,
                ));
            } else {
                records.push(ResultRecord::unavailable(cfg, "kl"));
                records.push(ResultRecord::unavailable(cfg, "tv"));
            }
        }
        Method::Gibbs => {
            let mut chain = GibbsChain::from_target(target)?;
            let mut states = Vec::with_capacity(cfg.samples);
            for _ in 0..cfg.samples {
                chain.sweep(&mut rng)?;
                states.push(chain.x.clone());
            }
            records.push(ResultRecord::unavailable(cfg, "neg_elbo"));
            if let Some(exact) = &exact {
                let emp = empirical_pmf(&states, &sizes)?;
                records.push(ResultRecord::new(
                    cfg,
                    "kl",
                    kl_to_target(&emp.smoothed, exact),
                    0.0,
                ));
                records.push(ResultRecord::new(
                    cfg,
                    "tv",
                    total_variation(&emp.raw, exact),
                    0.0,
                ));
            } else {
                records.push(ResultRecord::unavailable(cfg, "kl"));
                records.push(ResultRecord::unavailable(cfg, "tv"));
            }
        }
        Method::Meanfield => {
            let fit = cavi_fit(&target, 500, 1e-10)?;
            let elbo = *fit.elbo_trace.last().unwrap();
            records.push(ResultRecord::new(cfg, "neg_elbo", -elbo, 0.0));
            if let Some(exact) = &exact {
                let joint = fit.joint_probs(&sizes);
                records.push(ResultRecord::new(cfg, "kl", kl_to_target(&joint, exact), 0.0));
                records.push(ResultRecord::new(
                    cfg,
                    "tv",
                    total_variation(&joint, exact),
                    0.0,
                ));
            } else {
                records.push(ResultRecord::unavailable(cfg, "kl"));
                records.push(ResultRecord::unavailable(cfg, "tv"));
            }
        }
    }
    Ok(records)
}

fn gmm_model(cfg: &ExperimentConfig) -> Result<GmmModel> {
    let data = match &cfg.data {
        Some(path) => load_matrix(path)?,
        None => crate::models::gmm_synthetic(50, cfg.seed),
    };
    GmmModel::new(data, 2, 1.0)
}

fn run_gmm(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let model = gmm_model(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    match cfg.method {
        Method::Madmix => {
            let reference = model.flow_reference()?;
            let flow = MixedMixFlow::new(
                &model,
                reference,
                cfg.n_flow,
                ShiftParam::new(cfg.xi)?,
                cfg.hamiltonian(),
            )?;
            let n = cfg.samples.min(500);
            let (elbo, se) = flow.elbo(n, &mut rng)?;
            records.push(ResultRecord::new(cfg, "neg_elbo", -elbo, se));
            let mut w0 = Vec::with_capacity(n);
            for _ in 0..n {
                let s = flow.sample(&mut rng)?;
                let params = model.unpack(&s.x_c)?;
                w0.push(params.w[0]);
            }
            let (mean, se) = crate::stats::mean_and_se(&w0);
            records.push(ResultRecord::new(cfg, "w0_mean", mean, se));
        }
        Method::Gibbs => {
            let mut state = model.init_state()?;
            let burn = cfg.samples / 5;
            let mut w0 = Vec::new();
            for i in 0..cfg.samples {
                model.gibbs_sweep(&mut state, &mut rng)?;
                if i >= burn {
                    w0.push(state.w[0]);
                }
            }
            records.push(ResultRecord::unavailable(cfg, "neg_elbo"));
            let (mean, se) = crate::stats::mean_and_se(&w0);
            records.push(ResultRecord::new(cfg, "w0_mean", mean, se));
        }
        Method::Meanfield => unreachable!("rejected by validate"),
    }
    records.push(ResultRecord::unavailable(cfg, "kl"));
    Ok(records)
}

fn spikeslab_model(cfg: &ExperimentConfig) -> Result<SpikeSlabModel> {
    let (x, y) = match &cfg.data {
        Some(path) => {
            let m = load_matrix(path)?;
            if m.ncols() < 2 {
                return Err(MadMixError::Config(
                    "regression data needs at least one predictor and a response".into(),
                ));
            }
            let p = m.ncols() - 1;
            let x = m.columns(0, p).clone_owned();
            let y = m.column(p).clone_owned();
            (x, y)
        }
        None => crate::models::spikeslab_synthetic(100, 8, cfg.seed),
    };
    SpikeSlabModel::new(x, y, SpikeSlabHyper::default())
}

fn run_spikeslab(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let model = spikeslab_model(cfg)?;
    let p = model.n_pred();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut pip = vec![0.0; p];
    match cfg.method {
        Method::Madmix => {
            let reference = model.flow_reference()?;
            let flow = MixedMixFlow::new(
                &model,
                reference,
                cfg.n_flow,
                ShiftParam::new(cfg.xi)?,
                cfg.hamiltonian(),
            )?;
            let n = cfg.samples.min(500);
            for _ in 0..n {
                let s = flow.sample(&mut rng)?;
                for j in 0..p {
                    if s.x_d[j] == 2 {
                        pip[j] += 1.0 / n as f64;
                    }
                }
            }
            records.push(ResultRecord::unavailable(cfg, "neg_elbo"));
        }
        Method::Gibbs => {
            let mut state = model.init_state();
            let burn = cfg.samples / 5;
            let kept = (cfg.samples - burn) as f64;
            for i in 0..cfg.samples {
                model.gibbs_sweep(&mut state, &mut rng)?;
                if i >= burn {
                    for j in 0..p {
                        if state.gamma[j] {
                            pip[j] += 1.0 / kept;
                        }
                    }
                }
            }
            records.push(ResultRecord::unavailable(cfg, "neg_elbo"));
        }
        Method::Meanfield => unreachable!("rejected by validate"),
    }
    for (j, &v) in pip.iter().enumerate() {
        records.push(ResultRecord::new(cfg, &format!("pip_{j}"), v, 0.0));
    }
    Ok(records)
}

/// Run one configuration and return its metric rows. Deterministic for a
/// fixed config and seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Toy1d | Experiment::Toy2d | Experiment::Toy3d | Experiment::Ising => {
            run_discrete(cfg)
        }
        Experiment::Gmm => run_gmm(cfg),
        Experiment::Spikeslab => run_spikeslab(cfg),
    }
}

/// Median wall-clock seconds of `f` over `reps` repetitions (at least 10).
pub fn median_seconds<F: FnMut()>(mut f: F, reps: usize) -> f64 {
    let reps = reps.max(10);
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f();
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    0.5 * (times[(reps - 1) / 2] + times[reps / 2])
}

/// Median per-operation timings: one density evaluation and one sample draw
/// for the configured method, excluding setup.
pub fn timing_probe(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    if matches!(cfg.experiment, Experiment::Gmm | Experiment::Spikeslab) {
        return Err(MadMixError::Config(
            "timing probes cover the discrete experiments".into(),
        ));
    }
    let (target, _) = discrete_target(cfg)?;
    let target = &*target;
    let sizes = target.support_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reps = 11;
    let mut records = Vec::new();
    match cfg.method {
        Method::Madmix => {
            let reference = UniformReference::new(sizes.clone());
            let flow = MadMixFlow::new(target, reference, cfg.n_flow, ShiftParam::new(cfg.xi)?)?;
            let probe = flow.sample(&mut rng)?;
            let density = median_seconds(
                || {
                    let _ = flow.log_density(&probe).unwrap();
                },
                reps,
            );
            let mut rng2 = ChaCha8Rng::seed_from_u64(cfg.seed + 1);
            let sample = median_seconds(
                || {
                    let _ = flow.sample(&mut rng2).unwrap();
                },
                reps,
            );
            records.push(ResultRecord::new(cfg, "seconds_density", density, 0.0));
            records.push(ResultRecord::new(cfg, "seconds_sample", sample, 0.0));
        }
        Method::Gibbs => {
            let mut chain = GibbsChain::from_target(target)?;
            let mut rng2 = ChaCha8Rng::seed_from_u64(cfg.seed);
            let sample = median_seconds(
                || {
                    chain.sweep(&mut rng2).unwrap();
                },
                reps,
            );
            records.push(ResultRecord::unavailable(cfg, "seconds_density"));
            records.push(ResultRecord::new(cfg, "seconds_sample", sample, 0.0));
        }
        Method::Meanfield => {
            let density = median_seconds(
                || {
                    let _ = cavi_fit(&target, 50, 1e-8).unwrap();
                },
                reps,
            );
            records.push(ResultRecord::new(cfg, "seconds_density", density, 0.0));
            records.push(ResultRecord::unavailable(cfg, "seconds_sample"));
        }
    }
    Ok(records)
}

/// Flow and exact marginal PMF tables for an enumerable discrete target.
pub fn pmf_table(cfg: &ExperimentConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let (target, exact) = discrete_target(cfg)?;
    let exact = exact.ok_or(MadMixError::StateSpaceTooLarge(1 << cfg.ising_m))?;
    let target = &*target;
    let sizes = target.support_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reference = UniformReference::new(sizes);
    let flow = MadMixFlow::new(target, reference, cfg.n_flow, ShiftParam::new(cfg.xi)?)?;
    let (marginal, _) = flow.exact_marginal_pmf(32, &mut rng)?;
    Ok((marginal.probs().to_vec(), exact))
}

pub fn write_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for r in reader.deserialize() {
        out.push(r?);
    }
    Ok(out)
}

/// JSON manifest with the fully resolved configuration.
pub fn write_manifest(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    let json = serde_json::to_string_pretty(cfg)?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

/// PMF vectors as JSON arrays of probabilities.
pub fn write_pmf_json(probs: &[f64], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    let json = serde_json::to_string(probs)?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Run a config and write its records, manifest, and (when enumerable) PMF
/// tables under the output directory. Returns the records.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let records = run_experiment(cfg)?;
    let dir = cfg.out_dir();
    let stem = format!(
        "{}_{}_seed{}",
        cfg.experiment.as_str(),
        cfg.method.as_str(),
        cfg.seed
    );
    write_csv(&records, &dir.join(format!("{stem}.csv")))?;
    write_manifest(cfg, &dir.join(format!("{stem}.json")))?;
    if cfg.method == Method::Madmix
        && matches!(
            cfg.experiment,
            Experiment::Toy1d | Experiment::Toy2d | Experiment::Toy3d
        )
    {
        let (flow_pmf, exact_pmf) = pmf_table(cfg)?;
        write_pmf_json(&flow_pmf, &dir.join(format!("{stem}_flow_pmf.json")))?;
        write_pmf_json(&exact_pmf, &dir.join(format!("{stem}_exact_pmf.json")))?;
    }
    Ok(records)
}

/// Flatten a discrete target's exact PMF; helper for tests and the CLI.
pub fn enumerate_exact_pmf<Tg: FullConditionalTarget<f64>>(target: &Tg) -> Result<Vec<f64>> {
    let sizes = target.support_sizes();
    target.num_states(1_000_000)?;
    let mut log_p = Vec::new();
    let mut missing = false;
    for_each_state(&sizes, |x| match target.unnormalized_log_mass(x) {
        Some(lp) => log_p.push(lp),
        None => missing = true,
    });
    if missing {
        return Err(MadMixError::LogMassUnavailable);
    }
    Ok(crate::pmf::DiscretePmf::from_log_weights(&log_p)?
        .probs()
        .to_vec())
}
