use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::output::{format_float, Tabular};
use crate::experiments::parallel::{par_map, worker_count};
use crate::experiments::tuning::tune_lr_with_run;
use crate::experiments::{make_target, LrPolicy, TargetSpec};
use crate::invariants::theoretical_lr;
use crate::linnet::{init_network, train, InitScheme, TrainConfig, TrainStatus, Trajectory};
use crate::matrix::Matrix;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    Diverged,
    TuningFailed,
}

impl From<TrainStatus> for RunStatus {
    fn from(s: TrainStatus) -> Self {
        match s {
            TrainStatus::Converged => RunStatus::Converged,
            TrainStatus::BudgetExhausted => RunStatus::BudgetExhausted,
            TrainStatus::Diverged => RunStatus::Diverged,
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget-exhausted",
            RunStatus::Diverged => "diverged",
            RunStatus::TuningFailed => "tuning-failed",
        })
    }
}

/// Outcome of one training run.
///
/// `wall_time` is informational: it is neither serialized nor compared, so
/// repeated runs produce identical artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub depth: usize,
    pub dim: usize,
    pub init: String,
    pub seed: u64,
    pub lr_mode: String,
    pub eta: f64,
    pub iterations: u64,
    pub final_loss: f64,
    pub status: RunStatus,
    pub longest_plateau: u64,
    pub plateaued: bool,
    #[serde(skip)]
    pub wall_time: f64,
}

impl PartialEq for RunRecord {
    fn eq(&self, o: &Self) -> bool {
        self.depth == o.depth
            && self.dim == o.dim
            && self.init == o.init
            && self.seed == o.seed
            && self.lr_mode == o.lr_mode
            && self.eta.to_bits() == o.eta.to_bits()
            && self.iterations == o.iterations
            && self.final_loss.to_bits() == o.final_loss.to_bits()
            && self.status == o.status
            && self.longest_plateau == o.longest_plateau
            && self.plateaued == o.plateaued
    }
}

impl RunRecord {
    fn from_trajectory(depth: usize, dim: usize, init: InitScheme, seed: u64, lr: LrPolicy, eta: f64, traj: &Trajectory) -> Self {
        RunRecord {
            depth,
            dim,
            init: init.to_string(),
            seed,
            lr_mode: lr_mode(lr),
            eta,
            iterations: traj.iterations,
            final_loss: traj.final_loss,
            status: traj.status.into(),
            longest_plateau: traj.plateau.longest,
            plateaued: traj.plateau.plateaued,
            wall_time: 0.0,
        }
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

fn lr_mode(lr: LrPolicy) -> String {
    match lr {
        LrPolicy::Fixed(_) => "fixed".into(),
        other => other.to_string(),
    }
}

impl Tabular for RunRecord {
    fn header(_: &[Self]) -> Vec<String> {
        [
            "L",
            "d",
            "init",
            "seed",
            "lr_mode",
            "eta",
            "iterations",
            "final_loss",
            "status",
            "longest_plateau",
            "plateaued",
        ]
        .map(String::from)
        .to_vec()
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.depth.to_string(),
            self.dim.to_string(),
            self.init.clone(),
            self.seed.to_string(),
            self.lr_mode.clone(),
            format_float(self.eta),
            self.iterations.to_string(),
            format_float(self.final_loss),
            self.status.to_string(),
            self.longest_plateau.to_string(),
            self.plateaued.to_string(),
        ]
    }
}

/// Trains one network from `init(seed)` with a step size chosen by `lr`,
/// recording the loss every `record_every` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_once(
    depth: usize,
    dim: usize,
    phi: &Matrix,
    init: InitScheme,
    seed: u64,
    lr: LrPolicy,
    eps: f64,
    budget: u64,
    record_every: u64,
) -> Result<(RunRecord, Trajectory)> {
    let start = Instant::now();
    let (eta, traj) = match lr {
        LrPolicy::Auto => {
            let (tuned, traj) = tune_lr_with_run(dim, depth, phi, init, seed, eps, budget, record_every)?;
            (tuned.eta, traj)
        }
        LrPolicy::Fixed(_) | LrPolicy::Theoretical => {
            let eta = match lr {
                LrPolicy::Fixed(eta) => eta,
                _ => theoretical_lr(phi, depth).eta,
            };
            let net = init_network(dim, depth, init, &mut RngState::new(seed))?;
            let config = TrainConfig::new(eta, eps, budget).record_every(record_every);
            (eta, train(net, phi, &config, None)?)
        }
    };
    let mut record = RunRecord::from_trajectory(depth, dim, init, seed, lr, eta, &traj);
    record.wall_time = start.elapsed().as_secs_f64();
    Ok((record, traj))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub depths: Vec<usize>,
    pub dim: usize,
    pub target: TargetSpec,
    pub init: InitScheme,
    pub eps: f64,
    pub lr: LrPolicy,
    pub budget: u64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.depths[0] == 0 || self.depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!("depths must be positive and strictly increasing, got {:?}", self.depths)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.budget == 0 {
            return Err(Error::InvalidInput("budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// One run per depth. A run whose tuning fails is recorded with status
/// `tuning-failed` and the sweep continues.
pub fn depth_sweep(config: &SweepConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let phi = make_target(&config.target, config.dim)?;
    let results = par_map(&config.depths, worker_count(), |&depth| {
        match run_once(depth, config.dim, &phi, config.init, config.seed, config.lr, config.eps, config.budget, u64::MAX) {
            Ok((record, _)) => Ok(record),
            Err(Error::TuningFailed(_)) => Ok(RunRecord {
                depth,
                dim: config.dim,
                init: config.init.to_string(),
                seed: config.seed,
                lr_mode: lr_mode(config.lr),
                eta: f64::NAN,
                iterations: 0,
                final_loss: f64::NAN,
                status: RunStatus::TuningFailed,
                longest_plateau: 0,
                plateaued: false,
                wall_time: 0.0,
            }),
            Err(e) => Err(e),
        }
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub depth: usize,
    pub dim: usize,
    pub target: TargetSpec,
    pub eta: f64,
    pub seeds: Vec<u64>,
    pub budget: u64,
    pub eps: f64,
    /// Perturbation scale for the near-identity runs (`None`: `1/√(dL)`).
    pub sigma: Option<f64>,
}

impl CompareConfig {
    /// Six layers, `η = 0.01`, `Φ = −I`, five seeds, `d = 25`.
    pub fn standard() -> Self {
        CompareConfig {
            depth: 6,
            dim: super::COMPARE_DIM,
            target: TargetSpec::NegIdentity,
            eta: 0.01,
            seeds: (0..5).collect(),
            budget: 100_000,
            eps: super::DEFAULT_EPS,
            sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    /// ZAS first, then one near-identity run per seed.
    pub records: Vec<RunRecord>,
    /// Loss at every iteration, parallel to `records`.
    pub curves: Vec<Vec<f64>>,
}

impl CompareResult {
    /// Loss of run `run` at iteration `iter`; a run that stopped earlier
    /// reports its final loss.
    pub fn loss_at(&self, run: usize, iter: u64) -> f64 {
        let c = &self.curves[run];
        c[(iter as usize).min(c.len() - 1)]
    }

    pub fn curve_points(&self) -> Vec<CurvePoint> {
        self.records
            .iter()
            .zip(&self.curves)
            .enumerate()
            .flat_map(|(run, (r, c))| {
                c.iter().enumerate().map(move |(t, &loss)| CurvePoint {
                    run,
                    init: r.init.clone(),
                    seed: r.seed,
                    iter: t as u64,
                    loss,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub run: usize,
    pub init: String,
    pub seed: u64,
    pub iter: u64,
    pub loss: f64,
}

impl Tabular for CurvePoint {
    fn header(_: &[Self]) -> Vec<String> {
        ["run", "init", "seed", "iter", "loss"].map(String::from).to_vec()
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.run.to_string(),
            self.init.clone(),
            self.seed.to_string(),
            self.iter.to_string(),
            format_float(self.loss),
        ]
    }
}

/// One ZAS run plus one near-identity run per seed, all at the same step.
pub fn compare_inits(config: &CompareConfig) -> Result<CompareResult> {
    if config.seeds.is_empty() {
        return Err(Error::InvalidInput("compare_inits needs at least one seed".into()));
    }
    let phi = make_target(&config.target, config.dim)?;
    let mut jobs = vec![(InitScheme::Zas, 0u64)];
    jobs.extend(config.seeds.iter().map(|&s| (InitScheme::NearIdentity(config.sigma), s)));
    let lr = LrPolicy::Fixed(config.eta);
    let results = par_map(&jobs, worker_count(), |&(init, seed)| {
        run_once(config.depth, config.dim, &phi, init, seed, lr, config.eps, config.budget, 1)
    });
    let mut records = Vec::with_capacity(jobs.len());
    let mut curves = Vec::with_capacity(jobs.len());
    for r in results {
        let (record, traj) = r?;
        records.push(record);
        curves.push(traj.losses());
    }
    Ok(CompareResult { records, curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(depths: Vec<usize>) -> SweepConfig {
        SweepConfig {
            depths,
            dim: 2,
            target: TargetSpec::NegIdentity,
            init: InitScheme::Zas,
            eps: 1e-10,
            lr: LrPolicy::Auto,
            budget: 100_000,
            seed: 0,
        }
    }

    #[test]
    fn sweep_iterations_grow_with_depth() {
        let recs = depth_sweep(&sweep(vec![2, 4, 8, 16])).unwrap();
        assert!(recs.iter().all(RunRecord::converged));
        assert!(recs.windows(2).all(|w| w[1].iterations >= w[0].iterations), "{recs:?}");
    }

    #[test]
    fn sweep_rejects_unsorted_depths() {
        assert!(depth_sweep(&sweep(vec![4, 2])).is_err());
        assert!(depth_sweep(&sweep(vec![])).is_err());
    }

    #[test]
    fn tuning_failure_is_recorded() {
        let mut c = sweep(vec![2, 4]);
        c.budget = 1;
        let recs = depth_sweep(&c).unwrap();
        assert!(recs.iter().all(|r| r.status == RunStatus::TuningFailed));
    }

    #[test]
    fn theoretical_policy_converges_slower() {
        let phi = Matrix::identity(2).scale(-0.5);
        let (fast, _) = run_once(4, 2, &phi, InitScheme::Zas, 0, LrPolicy::Auto, 1e-6, 1_000_000, u64::MAX).unwrap();
        let (slow, _) = run_once(4, 2, &phi, InitScheme::Zas, 0, LrPolicy::Theoretical, 1e-6, 1_000_000, u64::MAX).unwrap();
        assert!(slow.converged() && fast.converged());
        assert!(slow.iterations > fast.iterations);
        assert_eq!(slow.lr_mode, "theoretical");
    }

    #[test]
    fn small_comparison() {
        let config = CompareConfig {
            depth: 3,
            dim: 4,
            budget: 20_000,
            seeds: vec![1, 2],
            ..CompareConfig::standard()
        };
        let res = compare_inits(&config).unwrap();
        assert_eq!(res.records.len(), 3);
        assert_eq!(res.records[0].init, "zas");
        let zas = &res.curves[0];
        assert!(zas.windows(2).all(|w| w[1] < w[0]));
        assert!(!res.records[0].plateaued);
        assert_eq!(res.curve_points().len(), res.curves.iter().map(Vec::len).sum::<usize>());
        assert!(compare_inits(&CompareConfig { seeds: vec![], ..config }).is_err());
    }

    #[test]
    fn record_equality_ignores_wall_time() {
        let phi = Matrix::identity(2).scale(-1.0);
        let (a, _) = run_once(2, 2, &phi, InitScheme::Zas, 0, LrPolicy::Fixed(0.1), 1e-8, 10_000, u64::MAX).unwrap();
        let mut b = a.clone();
        b.wall_time += 1.0;
        assert_eq!(a, b);
    }
}
