use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::theoretical_lr;
use crate::linnet::{init_network, train, InitScheme, TrainConfig, TrainStatus, Trajectory};
use crate::matrix::Matrix;
use crate::rng::RngState;

/// Exclusive upper limit of the step-size grid. At `η = 1` a single step
/// from ZAS lands exactly on `W_L = Φ`, which says nothing about depth.
pub const LR_CAP: f64 = 1.0;
/// Relative slack on the cap, so that a grid point which is `1` up to
/// rounding (`φ` a power of `√2` makes `η₀` a power of two) is excluded too.
const CAP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningProbe {
    pub eta: f64,
    pub status: TrainStatus,
    pub iterations: u64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedLr {
    pub eta: f64,
    pub iterations: u64,
    /// Theoretical step size the grid is anchored at.
    pub base: f64,
    /// Every probe, largest step first.
    pub probes: Vec<TuningProbe>,
}

/// Grid `2^k η₀ < 1`, `k = 0, 1, …`, largest first. A base at or above the
/// cap yields the single point `η₀`.
pub fn lr_grid(base: f64) -> Vec<f64> {
    if base >= LR_CAP * (1.0 - CAP_SLACK) {
        return vec![base];
    }
    let mut grid = Vec::new();
    let mut eta = base;
    while eta < LR_CAP * (1.0 - CAP_SLACK) {
        grid.push(eta);
        eta *= 2.0;
    }
    grid.reverse();
    grid
}

/// Grid step that reaches `eps` in the fewest iterations, ties going to the
/// larger step.
///
/// Every probe starts from the same network, drawn from `seed`. The walk goes
/// down from the largest grid point. Once some step has converged, each later
/// probe only gets enough budget to beat it, and the walk stops at the first
/// probe that fails to. The returned step is therefore grid-locally optimal:
/// `2η` diverged, ran out of budget, or needed more iterations, and so did `η/2`.
pub fn tune_lr(
    dim: usize,
    depth: usize,
    phi: &Matrix,
    init: InitScheme,
    seed: u64,
    eps: f64,
    budget: u64,
) -> Result<TunedLr> {
    tune_lr_with_run(dim, depth, phi, init, seed, eps, budget, u64::MAX).map(|(t, _)| t)
}

/// [`tune_lr`] that also hands back the winning run, recorded every
/// `record_every` steps.
#[allow(clippy::too_many_arguments)]
pub(crate) fn tune_lr_with_run(
    dim: usize,
    depth: usize,
    phi: &Matrix,
    init: InitScheme,
    seed: u64,
    eps: f64,
    budget: u64,
    record_every: u64,
) -> Result<(TunedLr, Trajectory)> {
    if budget == 0 {
        return Err(Error::InvalidInput("tuning budget must be >= 1".into()));
    }
    let net = init_network(dim, depth, init, &mut RngState::new(seed))?;
    let base = theoretical_lr(phi, depth).eta;
    let mut probes = Vec::new();
    let mut best: Option<(f64, Trajectory)> = None;
    for eta in lr_grid(base) {
        let probe_budget = match &best {
            Some((_, t)) if t.iterations == 0 => break,
            Some((_, t)) => t.iterations - 1,
            None => budget,
        };
        let config = TrainConfig::new(eta, eps, probe_budget).record_every(record_every);
        let traj = train(net.clone(), phi, &config, None)?;
        probes.push(TuningProbe {
            eta,
            status: traj.status,
            iterations: traj.iterations,
            final_loss: traj.final_loss,
        });
        if traj.status == TrainStatus::Converged {
            best = Some((eta, traj));
        } else if best.is_some() {
            break;
        }
    }
    if let Some((eta, traj)) = best {
        let iterations = traj.iterations;
        return Ok((TunedLr { eta, iterations, base, probes }, traj));
    }
    let summary: Vec<String> = probes
        .iter()
        .map(|p| format!("eta={:.3e}: {} after {} (loss {:.3e})", p.eta, p.status, p.iterations, p.final_loss))
        .collect();
    Err(Error::TuningFailed(format!(
        "no step size converged to {eps:e} within {budget} iterations (L={depth}, d={dim}); {}",
        summary.join("; ")
    )))
}
