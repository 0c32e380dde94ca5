//! Continuous-time gradient flow `Ẇ_l = −∇_l R`, integrated with classical
//! fixed-step RK4.
//!
//! The invariant matrices are exactly conserved by the flow, so any drift
//! recorded here is integrator error and shrinks as `h⁴`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::invariant_matrices;
use crate::linnet::{GradSet, LinearNet};
use crate::matrix::{sym_eig_min, Matrix, JACOBI_TOL};

pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum FlowTarget {
    /// Whitened objective `½‖W_{L:1} − Φ‖²`.
    Whitened(Matrix),
    /// Un-whitened objective `½‖W_{L:1}X − Y‖²`.
    Data { x: Matrix, y: Matrix },
}

impl FlowTarget {
    fn loss_and_gradients(&self, net: &LinearNet) -> Result<(f64, GradSet)> {
        match self {
            FlowTarget::Whitened(phi) => net.loss_and_gradients(phi),
            FlowTarget::Data { x, y } => net.data_loss_and_gradients(x, y),
        }
    }

    pub fn is_data(&self) -> bool {
        matches!(self, FlowTarget::Data { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub step: f64,
    pub horizon: f64,
    /// Sample every `cadence` steps (the final time is always sampled).
    pub cadence: usize,
}

impl FlowConfig {
    pub fn new(step: f64, horizon: f64) -> Self {
        FlowConfig { step, horizon, cadence: 1 }
    }

    pub fn cadence(mut self, cadence: usize) -> Self {
        self.cadence = cadence;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.horizon > 0.0 && self.step <= self.horizon && self.cadence >= 1) {
            return Err(Error::InvalidInput(format!(
                "flow config needs 0 < h <= T and cadence >= 1, got h={}, T={}, cadence={}",
                self.step, self.horizon, self.cadence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub losses: Vec<f64>,
    /// `max_l ‖D_l(t) − D_l(0)‖_F` at each sampled time.
    pub drifts: Vec<f64>,
    /// Decay rate of the exponential bound: 1 for the whitened objective,
    /// `λ_min(XᵀX)` in data mode.
    pub rate: f64,
    /// `e^{−2·rate·t} R(0)` at each sampled time.
    pub bounds: Vec<f64>,
    pub net: LinearNet,
}

impl FlowTrajectory {
    fn new(rate: f64, net: LinearNet) -> Self {
        FlowTrajectory {
            times: Vec::new(),
            losses: Vec::new(),
            drifts: Vec::new(),
            rate,
            bounds: Vec::new(),
            net,
        }
    }

    pub fn max_drift(&self) -> f64 {
        self.drifts.iter().copied().fold(0.0, f64::max)
    }

    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial sample")
    }

    /// Largest `R(t) / (e^{−2·rate·t} R(0))` over the samples (≤ 1 when the
    /// exponential bound holds).
    pub fn worst_bound_ratio(&self) -> f64 {
        self.losses
            .iter()
            .zip(&self.bounds)
            .map(|(r, b)| if *b > 0.0 { r / b } else if *r == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    /// Whether the sampled loss never increases.
    pub fn is_non_increasing(&self) -> bool {
        self.losses.windows(2).all(|w| w[1] <= w[0])
    }
}

fn shifted(base: &[Matrix], dir: &GradSet, coef: f64) -> LinearNet {
    let weights = base
        .iter()
        .zip(&dir.grads)
        .map(|(w, g)| {
            let mut w = w.clone();
            w.axpy(coef, g);
            w
        })
        .collect();
    LinearNet::from_weights(weights).expect("shapes preserved")
}

fn rk4(net: &LinearNet, target: &FlowTarget, h: f64) -> Result<LinearNet> {
    // k_i are gradients; the velocity is −k_i.
    let (_, k1) = target.loss_and_gradients(net)?;
    let (_, k2) = target.loss_and_gradients(&shifted(net.weights(), &k1, -0.5 * h))?;
    let (_, k3) = target.loss_and_gradients(&shifted(net.weights(), &k2, -0.5 * h))?;
    let (_, k4) = target.loss_and_gradients(&shifted(net.weights(), &k3, -h))?;
    let weights = net
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut incr = k1.grads[i].clone();
            incr.axpy(2.0, &k2.grads[i]);
            incr.axpy(2.0, &k3.grads[i]);
            incr.axpy(1.0, &k4.grads[i]);
            let mut w = w.clone();
            w.axpy(-h / 6.0, &incr);
            w
        })
        .collect();
    LinearNet::from_weights(weights)
}

/// One classical RK4 step of the whitened flow.
pub fn flow_step_rk4(net: &LinearNet, phi: &Matrix, h: f64) -> Result<LinearNet> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("flow step must be > 0, got {h}")));
    }
    let next = rk4(net, &FlowTarget::Whitened(phi.clone()), h)?;
    if !next.is_finite() {
        return Err(Error::FlowDiverged { time: h, partial: None });
    }
    Ok(next)
}

fn max_drift(d0: &[Matrix], net: &LinearNet) -> Result<f64> {
    if d0.is_empty() {
        return Ok(0.0);
    }
    let now = invariant_matrices(net)?;
    Ok(d0
        .iter()
        .zip(&now)
        .map(|(a, b)| b.sub(a).frobenius_norm())
        .fold(0.0, f64::max))
}

/// Integrates the flow from `net` over `[0, T]` with `N = ⌈T/h⌉` equal steps
/// of size `T/N`.
pub fn integrate_flow(net: &LinearNet, target: &FlowTarget, config: &FlowConfig) -> Result<FlowTrajectory> {
    config.validate()?;
    let rate = match target {
        FlowTarget::Whitened(_) => 1.0,
        FlowTarget::Data { x, .. } => sym_eig_min(&x.tmul(x), JACOBI_TOL)?.max(0.0),
    };
    let steps = (config.horizon / config.step - 1e-9).ceil().max(1.0) as usize;
    let h = config.horizon / steps as f64;
    let d0 = if net.depth() >= 2 { invariant_matrices(net)? } else { Vec::new() };

    let mut traj = FlowTrajectory::new(rate, net.clone());
    let (r0, _) = target.loss_and_gradients(net)?;
    let sample = |traj: &mut FlowTrajectory, t: f64, loss: f64, drift: f64| {
        traj.times.push(t);
        traj.losses.push(loss);
        traj.drifts.push(drift);
        traj.bounds.push((-2.0 * rate * t).exp() * r0);
    };
    sample(&mut traj, 0.0, r0, 0.0);

    let mut current = net.clone();
    for k in 1..=steps {
        let next = rk4(&current, target, h)?;
        let t = k as f64 * h;
        if !next.is_finite() {
            traj.net = current;
            return Err(Error::FlowDiverged {
                time: t,
                partial: Some(Box::new(traj)),
            });
        }
        current = next;
        if k % config.cadence == 0 || k == steps {
            let (loss, _) = target.loss_and_gradients(&current)?;
            let drift = max_drift(&d0, &current)?;
            sample(&mut traj, t, loss, drift);
        }
    }
    traj.net = current;
    Ok(traj)
}
