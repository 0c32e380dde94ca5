use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::output::{format_float, Tabular};

/// Scalar target of the toy objective `R(w) = (w_L⋯w_1 − Φ)²/2`.
pub const TOY_TARGET: f64 = -1.0;
/// Gradient norm below which an iterate counts as stalled.
pub const STALL_GRAD_NORM: f64 = 1e-4;
/// The stall flag only applies above this loss, so the neighbourhood of the
/// minimizer (where the gradient also vanishes) is not counted.
pub const STALL_LOSS_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPoint {
    pub iter: u64,
    pub w: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPath {
    pub eta: f64,
    pub points: Vec<ToyPoint>,
    pub stall_iters: u64,
    pub diverged: bool,
}

impl ToyPath {
    /// First iteration with loss ≤ `eps`.
    pub fn first_below(&self, eps: f64) -> Option<u64> {
        self.points.iter().find(|p| p.loss <= eps).map(|p| p.iter)
    }

    pub fn final_point(&self) -> &ToyPoint {
        self.points.last().expect("path holds the start point")
    }
}

/// Loss and gradient of `(Πw − Φ)²/2`.
pub fn toy_loss_grad(w: &[f64]) -> (f64, Vec<f64>) {
    let n = w.len();
    let mut prefix = vec![1.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * w[i];
    }
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * w[i];
    }
    let r = prefix[n] - TOY_TARGET;
    let grad = (0..n).map(|i| r * prefix[i] * suffix[i + 1]).collect();
    (0.5 * r * r, grad)
}

/// Gradient descent on the toy objective for `iters` steps from `start`.
/// Stops early only if the iterate becomes non-finite.
pub fn toy_trajectory(start: &[f64], eta: f64, iters: u64) -> Result<ToyPath> {
    if start.len() < 2 {
        return Err(Error::InvalidInput(format!("toy model needs >= 2 coordinates, got {}", start.len())));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidInput(format!("learning rate must be finite and >= 0, got {eta}")));
    }
    let mut w = start.to_vec();
    let mut points = Vec::with_capacity(iters as usize + 1);
    let mut stall_iters = 0;
    let mut diverged = false;
    for t in 0..=iters {
        let (loss, grad) = toy_loss_grad(&w);
        if !loss.is_finite() {
            diverged = true;
            break;
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let stalled = grad_norm < STALL_GRAD_NORM && loss > STALL_LOSS_FLOOR;
        stall_iters += stalled as u64;
        points.push(ToyPoint { iter: t, w: w.clone(), loss, grad_norm, stalled });
        if t < iters {
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= eta * gi;
            }
        }
    }
    Ok(ToyPath { eta, points, stall_iters, diverged })
}

impl Tabular for ToyPoint {
    fn header(records: &[Self]) -> Vec<String> {
        let n = records.first().map_or(2, |p| p.w.len());
        let mut h = vec!["iter".to_string()];
        h.extend((1..=n).map(|i| format!("w{i}")));
        h.extend(["loss", "grad_norm", "stalled"].map(String::from));
        h
    }

    fn row(&self) -> Vec<String> {
        let mut r = vec![self.iter.to_string()];
        r.extend(self.w.iter().map(|&v| format_float(v)));
        r.push(format_float(self.loss));
        r.push(format_float(self.grad_norm));
        r.push(self.stalled.to_string());
        r
    }
}
