//! Invariant matrices `D_l = W_{l+1}ᵀW_{l+1} − W_l W_lᵀ` and runtime checks
//! for every quantitative condition of the discrete convergence argument:
//! approximate invariance, weight bounds, gradient bounds, one-step drift,
//! the product/power gap, and the theoretical step size.
//!
//! Every inequality is evaluated as `lhs ≤ rhs + SLACK`.

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linnet::{GradSet, LinearNet, StepView, TrainMonitor, Trajectory};
use crate::matrix::{sym_matrix_power, sym_spectral_norm, Matrix};

/// Additive slack absorbing norm-computation error.
pub const SLACK: f64 = 1e-9;

/// One evaluated inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lhs: f64,
    pub rhs: f64,
}

impl Bound {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Bound { lhs, rhs }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + SLACK
    }

    /// `rhs - lhs`; negative when violated.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn require_depth2(net: &LinearNet, op: &str) -> Result<()> {
    if net.depth() < 2 {
        return Err(Error::InvalidInput(format!("{op}: needs depth >= 2, got {}", net.depth())));
    }
    Ok(())
}

/// `D_1 … D_{L−1}`.
pub fn invariant_matrices(net: &LinearNet) -> Result<Vec<Matrix>> {
    require_depth2(net, "invariant_matrices")?;
    let w = net.weights();
    Ok(w.windows(2)
        .map(|pair| pair[1].tmul(&pair[1]).sub(&pair[0].mul_t(&pair[0])))
        .collect())
}

fn sym_norm(m: &Matrix) -> f64 {
    sym_spectral_norm(m).expect("invariant matrices are symmetric")
}

/// `φ = max{2‖Φ‖_F, 3/√L, 1}`.
pub fn phi_of(phi: &Matrix, depth: usize) -> f64 {
    let l = depth as f64;
    (2.0 * phi.frobenius_norm()).max(3.0 / l.sqrt()).max(1.0)
}

/// The constant used by the weight bounds, `max{‖W_{L:1}‖₂, e/√L, 1}`.
/// Reported next to [`phi_of`]; the monitors use [`phi_of`].
pub fn phi_weight_bound(net: &LinearNet) -> f64 {
    let l = net.depth() as f64;
    net.product().norm2().max(E / l.sqrt()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrBudget {
    pub phi: f64,
    pub eta: f64,
    /// `(4L³φ⁶)⁻¹`
    pub cubic_bound: f64,
    /// `(144L²φ⁴)⁻¹`
    pub quadratic_bound: f64,
}

pub fn theoretical_lr(phi: &Matrix, depth: usize) -> LrBudget {
    let p = phi_of(phi, depth);
    let l = depth as f64;
    let cubic_bound = 1.0 / (4.0 * l.powi(3) * p.powi(6));
    let quadratic_bound = 1.0 / (144.0 * l.powi(2) * p.powi(4));
    LrBudget {
        phi: p,
        eta: cubic_bound.min(quadratic_bound),
        cubic_bound,
        quadratic_bound,
    }
}

/// Thresholds `δ = (2L³φ²)⁻¹`, `ε = (4L²)⁻¹` under which the gradient lower
/// bound and the weight bounds are guaranteed.
pub fn invariance_thresholds(depth: usize, phi: f64) -> (f64, f64) {
    let l = depth as f64;
    (1.0 / (2.0 * l.powi(3) * phi * phi), 1.0 / (4.0 * l * l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxInvariance {
    /// `‖D_l‖₂` for `l = 1 … L−2`.
    pub d_norms: Vec<f64>,
    /// `‖I + D_{L−1}‖₂`.
    pub last_gap: f64,
    pub delta: f64,
    pub eps: f64,
    pub hidden_ok: bool,
    pub last_ok: bool,
}

impl ApproxInvariance {
    pub fn max_d_norm(&self) -> f64 {
        self.d_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn ok(&self) -> bool {
        self.hidden_ok && self.last_ok
    }
}

pub fn check_approx_invariance(net: &LinearNet, delta: f64, eps: f64) -> Result<ApproxInvariance> {
    if !(delta > 0.0 && eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "check_approx_invariance: thresholds must be > 0, got delta={delta}, eps={eps}"
        )));
    }
    let ds = invariant_matrices(net)?;
    let (last, hidden) = ds.split_last().expect("depth >= 2 gives at least one D");
    let d_norms: Vec<f64> = hidden.iter().map(sym_norm).collect();
    let last_gap = sym_norm(&last.add_identity(1.0));
    let max_d = d_norms.iter().copied().fold(0.0, f64::max);
    Ok(ApproxInvariance {
        hidden_ok: Bound::new(max_d, delta).holds(),
        last_ok: Bound::new(last_gap, eps).holds(),
        d_norms,
        last_gap,
        delta,
        eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightBounds {
    /// `max_{l<L} ‖W_l‖₂ ∨ 1`
    pub alpha: f64,
    /// `‖W_L‖₂`
    pub beta: f64,
    pub phi: f64,
    /// `α^{2(L−1)} < Lφ²`
    pub growth: Bound,
    /// `α^{2(L−1)} β² < 2φ²`
    pub output: Bound,
}

impl WeightBounds {
    pub fn ok(&self) -> bool {
        self.growth.holds() && self.output.holds()
    }
}

/// `(α, β)` for the current weights.
pub fn alpha_beta(net: &LinearNet) -> (f64, f64) {
    let w = net.weights();
    let (last, hidden) = w.split_last().expect("network is non-empty");
    let alpha = hidden.iter().map(Matrix::norm2).fold(1.0, f64::max);
    (alpha, last.norm2())
}

pub fn check_weight_bounds(net: &LinearNet, phi: f64) -> Result<WeightBounds> {
    if !(phi >= 1.0) {
        return Err(Error::InvalidInput(format!("check_weight_bounds: phi must be >= 1, got {phi}")));
    }
    let (alpha, beta) = alpha_beta(net);
    let l = net.depth() as f64;
    let a_pow = alpha.powf(2.0 * (l - 1.0));
    Ok(WeightBounds {
        alpha,
        beta,
        phi,
        growth: Bound::new(a_pow, l * phi * phi),
        output: Bound::new(a_pow * beta * beta, 2.0 * phi * phi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradLowerBound {
    pub grad_last_sq: f64,
    pub loss: f64,
    /// `‖∇_L R‖²_F / R`, `+∞` at `R = 0`.
    pub ratio: f64,
    pub ok: bool,
}

fn grad_lower_from(grads: &GradSet, loss: f64) -> GradLowerBound {
    let g = grads.last().sum_sq();
    GradLowerBound {
        grad_last_sq: g,
        loss,
        ratio: if loss == 0.0 { f64::INFINITY } else { g / loss },
        ok: Bound::new(loss, g).holds(),
    }
}

/// `‖∇_L R‖²_F ≥ R`.
pub fn check_gradient_lower_bound(net: &LinearNet, phi: &Matrix) -> Result<GradLowerBound> {
    let (loss, grads) = net.loss_and_gradients(phi)?;
    Ok(grad_lower_from(&grads, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradUpperBounds {
    /// Worst `‖∇_l R‖²_F` over `l < L` against `4φ²R`.
    pub hidden: Bound,
    /// `‖∇_L R‖²_F` against `2Lφ²R`.
    pub last: Bound,
}

impl GradUpperBounds {
    pub fn ok(&self) -> bool {
        self.hidden.holds() && self.last.holds()
    }
}

fn grad_upper_from(grads: &GradSet, loss: f64, phi: f64) -> GradUpperBounds {
    let depth = grads.grads.len();
    let (last, hidden) = grads.grads.split_last().expect("non-empty");
    let worst = hidden.iter().map(Matrix::sum_sq).fold(0.0, f64::max);
    GradUpperBounds {
        hidden: Bound::new(worst, 4.0 * phi * phi * loss),
        last: Bound::new(last.sum_sq(), 2.0 * depth as f64 * phi * phi * loss),
    }
}

/// `‖∇_l R‖²_F ≤ 4φ²R` (`l < L`) and `‖∇_L R‖²_F ≤ 2Lφ²R`.
pub fn check_gradient_upper_bounds(net: &LinearNet, target: &Matrix, phi: f64) -> Result<GradUpperBounds> {
    let (loss, grads) = net.loss_and_gradients(target)?;
    Ok(grad_upper_from(&grads, loss, phi))
}

fn drift_from(grads: &GradSet, eta: f64) -> Vec<Matrix> {
    grads
        .grads
        .windows(2)
        .map(|pair| {
            let (lower, upper) = (&pair[0], &pair[1]);
            upper.tmul(upper).sub(&lower.mul_t(lower)).scale(eta * eta)
        })
        .collect()
}

/// Predicted one-step change `η²(∇_{l+1}ᵀ∇_{l+1} − ∇_l∇_lᵀ)` of each `D_l`.
/// The first-order terms cancel by the balance identity `W_{l+1}ᵀ∇_{l+1} = ∇_l W_lᵀ`.
pub fn invariant_drift_exact(net: &LinearNet, target: &Matrix, eta: f64) -> Result<Vec<Matrix>> {
    require_depth2(net, "invariant_drift_exact")?;
    Ok(drift_from(&net.gradients(target)?, eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftBounds {
    /// Worst `‖D_l⁺ − D_l‖₂` over `l ≤ L−2` against `8η²φ²R`.
    pub hidden: Bound,
    /// `‖D_{L−1}⁺ − D_{L−1}‖₂` against `2η²(L+2)φ²R`.
    pub last: Bound,
}

impl DriftBounds {
    pub fn ok(&self) -> bool {
        self.hidden.holds() && self.last.holds()
    }
}

fn drift_bounds_from(before: &[Matrix], after: &[Matrix], loss: f64, eta: f64, phi: f64) -> DriftBounds {
    let depth = before.len() + 1;
    let steps: Vec<f64> = before
        .iter()
        .zip(after)
        .map(|(b, a)| sym_norm(&a.sub(b)))
        .collect();
    let (last, hidden) = steps.split_last().expect("depth >= 2");
    let worst = hidden.iter().copied().fold(0.0, f64::max);
    let scale = eta * eta * phi * phi * loss;
    DriftBounds {
        hidden: Bound::new(worst, 8.0 * scale),
        last: Bound::new(*last, 2.0 * (depth as f64 + 2.0) * scale),
    }
}

/// Evaluates the one-step drift bounds on the actual gradient step.
pub fn drift_bounds_check(net: &LinearNet, target: &Matrix, eta: f64, phi: f64) -> Result<DriftBounds> {
    require_depth2(net, "drift_bounds_check")?;
    let (loss, grads) = net.loss_and_gradients(target)?;
    let next = net.apply_update(&grads, eta);
    Ok(drift_bounds_from(
        &invariant_matrices(net)?,
        &invariant_matrices(&next)?,
        loss,
        eta,
        phi,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerGap {
    /// `‖W_{L−1:1}W_{L−1:1}ᵀ − (W_{L−1}W_{L−1}ᵀ)^{L−1}‖₂`
    pub gap: f64,
    /// `½L²α^{2(L−2)}δ` with `δ = max_{l≤L−2} ‖D_l‖₂`.
    pub bound: f64,
}

impl PowerGap {
    pub fn holds(&self) -> bool {
        Bound::new(self.gap, self.bound).holds()
    }
}

pub fn product_power_gap(net: &LinearNet) -> Result<PowerGap> {
    require_depth2(net, "product_power_gap")?;
    let depth = net.depth();
    let below = net.product_range(1, depth - 1)?;
    let top = net.layer(depth - 1);
    let power = sym_matrix_power(&top.mul_t(top), (depth - 1) as u32)?;
    let gap = sym_norm(&below.mul_t(&below).sub(&power));
    let ds = invariant_matrices(net)?;
    let delta = ds[..ds.len() - 1].iter().map(sym_norm).fold(0.0, f64::max);
    let (alpha, _) = alpha_beta(net);
    let l = depth as f64;
    Ok(PowerGap {
        gap,
        bound: 0.5 * l * l * alpha.powf(2.0 * (l - 2.0)) * delta,
    })
}

/// All state checks at one iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub iter: u64,
    pub loss: f64,
    pub phi: f64,
    pub phi_weight_bound: f64,
    /// Absent at depth 1, where no invariant matrices exist.
    pub approx_invariance: Option<ApproxInvariance>,
    pub weight_bounds: WeightBounds,
    pub grad_lower: GradLowerBound,
    pub grad_upper: Option<GradUpperBounds>,
    pub power_gap: Option<PowerGap>,
}

impl InvariantReport {
    pub fn approx_invariance_ok(&self) -> bool {
        self.approx_invariance.as_ref().is_none_or(ApproxInvariance::ok)
    }

    pub fn weight_bounds_ok(&self) -> bool {
        self.weight_bounds.ok()
    }

    pub fn grad_lower_ok(&self) -> bool {
        self.grad_lower.ok
    }

    pub fn grad_upper_ok(&self) -> bool {
        self.grad_upper.is_none_or(|g| g.ok())
    }

    pub fn all_ok(&self) -> bool {
        self.approx_invariance_ok()
            && self.weight_bounds_ok()
            && self.grad_lower_ok()
            && self.grad_upper_ok()
            && self.power_gap.is_none_or(|p| p.holds())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorLevel {
    /// Thresholds, weight bounds and the gradient lower bound.
    Light,
    /// Everything, including exact drift and per-step contraction.
    Full,
}

/// Builds a full report for `net` against `target` with the step-size `φ` of [`phi_of`].
pub fn invariant_report(net: &LinearNet, target: &Matrix, level: MonitorLevel) -> Result<InvariantReport> {
    let (loss, grads) = net.loss_and_gradients(target)?;
    let phi = phi_of(target, net.depth());
    report_from(0, net, &grads, loss, phi, level)
}

fn report_from(
    iter: u64,
    net: &LinearNet,
    grads: &GradSet,
    loss: f64,
    phi: f64,
    level: MonitorLevel,
) -> Result<InvariantReport> {
    let depth = net.depth();
    let approx_invariance = if depth >= 2 {
        let (delta, eps) = invariance_thresholds(depth, phi);
        Some(check_approx_invariance(net, delta, eps)?)
    } else {
        None
    };
    let full = level == MonitorLevel::Full;
    Ok(InvariantReport {
        iter,
        loss,
        phi,
        phi_weight_bound: phi_weight_bound(net),
        approx_invariance,
        weight_bounds: check_weight_bounds(net, phi)?,
        grad_lower: grad_lower_from(grads, loss),
        grad_upper: full.then(|| grad_upper_from(grads, loss, phi)),
        power_gap: if full && depth >= 2 { Some(product_power_gap(net)?) } else { None },
    })
}

/// Relative Frobenius error of `actual` against `predicted`, with the
/// denominator floored at 1 so near-zero drifts compare absolutely.
pub fn relative_error(actual: &Matrix, predicted: &Matrix) -> f64 {
    actual.sub(predicted).frobenius_norm() / predicted.frobenius_norm().max(1.0)
}

struct PrevStep {
    iter: u64,
    loss: f64,
    ds: Vec<Matrix>,
    predicted: Vec<Matrix>,
}

/// Aggregated outcome of a monitored run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub observations: u64,
    /// Failure count per named check; checks never failed are absent.
    pub violations: BTreeMap<String, u64>,
    pub checks: BTreeMap<String, u64>,
    /// Largest observed `max_l ‖D_l‖₂` (`l ≤ L−2`).
    pub max_d_norm: f64,
    pub max_last_gap: f64,
    /// Smallest `‖∇_L R‖²/R` seen.
    pub min_grad_ratio: f64,
    /// Largest relative error of the exact one-step drift identity.
    pub max_drift_identity_error: f64,
    pub first_violation: Option<String>,
}

impl MonitorSummary {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations_of(&self, check: &str) -> u64 {
        self.violations.get(check).copied().unwrap_or(0)
    }
}

/// [`TrainMonitor`] evaluating every check at each observed iterate.
///
/// Consecutive observations (cadence 1) additionally verify the one-step
/// drift identity and bounds; any gap `k` checks the contraction
/// `R(t+k) ≤ (1 − η/2)^k R(t)`.
pub struct InvariantMonitor {
    level: MonitorLevel,
    keep_reports: bool,
    phi: Option<f64>,
    prev: Option<PrevStep>,
    pub reports: Vec<InvariantReport>,
    pub summary: MonitorSummary,
}

impl InvariantMonitor {
    pub fn new(level: MonitorLevel) -> Self {
        InvariantMonitor {
            level,
            keep_reports: false,
            phi: None,
            prev: None,
            reports: Vec::new(),
            summary: MonitorSummary {
                min_grad_ratio: f64::INFINITY,
                ..Default::default()
            },
        }
    }

    pub fn keep_reports(mut self, keep: bool) -> Self {
        self.keep_reports = keep;
        self
    }

    fn record(&mut self, name: &str, ok: bool, iter: u64, detail: impl FnOnce() -> String) {
        *self.summary.checks.entry(name.to_string()).or_default() += 1;
        if !ok {
            *self.summary.violations.entry(name.to_string()).or_default() += 1;
            if self.summary.first_violation.is_none() {
                self.summary.first_violation = Some(format!("t={iter}: {name}: {}", detail()));
            }
        }
    }

    fn observe_inner(&mut self, step: &StepView<'_>) -> Result<()> {
        let net = step.net;
        let depth = net.depth();
        let phi = *self.phi.get_or_insert_with(|| phi_of(step.target, depth));
        let report = report_from(step.iter, net, step.grads, step.loss, phi, self.level)?;
        let t = step.iter;
        self.summary.observations += 1;

        if let Some(ai) = &report.approx_invariance {
            self.summary.max_d_norm = self.summary.max_d_norm.max(ai.max_d_norm());
            self.summary.max_last_gap = self.summary.max_last_gap.max(ai.last_gap);
            self.record("approx_invariance_hidden", ai.hidden_ok, t, || {
                format!("max ‖D_l‖₂ = {:e} > δ = {:e}", ai.max_d_norm(), ai.delta)
            });
            self.record("approx_invariance_last", ai.last_ok, t, || {
                format!("‖I + D_(L-1)‖₂ = {:e} > ε = {:e}", ai.last_gap, ai.eps)
            });
        }
        let wb = report.weight_bounds;
        self.record("weight_growth", wb.growth.holds(), t, || format!("{:?}", wb.growth));
        self.record("weight_output", wb.output.holds(), t, || format!("{:?}", wb.output));
        let gl = report.grad_lower;
        self.summary.min_grad_ratio = self.summary.min_grad_ratio.min(gl.ratio);
        self.record("grad_lower", gl.ok, t, || format!("‖∇_L‖² = {:e} < R = {:e}", gl.grad_last_sq, gl.loss));
        if let Some(gu) = report.grad_upper {
            self.record("grad_upper_hidden", gu.hidden.holds(), t, || format!("{:?}", gu.hidden));
            self.record("grad_upper_last", gu.last.holds(), t, || format!("{:?}", gu.last));
        }
        if let Some(pg) = report.power_gap {
            self.record("power_gap", pg.holds(), t, || format!("{pg:?}"));
        }

        let ds = if depth >= 2 { invariant_matrices(net)? } else { Vec::new() };
        if let Some(prev) = self.prev.take() {
            let gap = t - prev.iter;
            let factor = (1.0 - step.eta / 2.0).powi(gap as i32);
            let contraction = Bound::new(step.loss, factor * prev.loss);
            self.record("contraction", contraction.holds(), t, || format!("{contraction:?} over {gap} steps"));
            if gap == 1 && self.level == MonitorLevel::Full && depth >= 2 {
                let mut worst: f64 = 0.0;
                for ((before, after), pred) in prev.ds.iter().zip(&ds).zip(&prev.predicted) {
                    worst = worst.max(relative_error(&after.sub(before), pred));
                }
                self.summary.max_drift_identity_error = self.summary.max_drift_identity_error.max(worst);
                self.record("drift_identity", worst <= 1e-12, t, || format!("relative error {worst:e}"));
                let db = drift_bounds_from(&prev.ds, &ds, prev.loss, step.eta, phi);
                self.record("drift_bounds", db.ok(), t, || format!("{db:?}"));
            }
        }
        let predicted = if self.level == MonitorLevel::Full && depth >= 2 {
            drift_from(step.grads, step.eta)
        } else {
            Vec::new()
        };
        self.prev = Some(PrevStep { iter: t, loss: step.loss, ds, predicted });
        if self.keep_reports {
            self.reports.push(report);
        }
        Ok(())
    }
}

impl TrainMonitor for InvariantMonitor {
    fn observe(&mut self, step: &StepView<'_>) {
        if let Err(e) = self.observe_inner(step) {
            self.record("evaluation", false, step.iter, || e.to_string());
        }
    }
}

/// `Σ_{s≤t} R(s) ≤ (2/η) R(0)` on a finished trajectory.
pub fn loss_budget(traj: &Trajectory, eta: f64) -> Bound {
    Bound::new(traj.loss_sum, 2.0 / eta * traj.initial_loss)
}

/// Balance residual `‖∇_l R W_lᵀ − W_{l+1}ᵀ ∇_{l+1} R‖_F` for each `l < L`,
/// normalized by `1 + ‖∇_{l+1}R‖_F ‖W_{l+1}‖_F`.
pub fn balance_residuals(net: &LinearNet, grads: &GradSet) -> Vec<f64> {
    let w = net.weights();
    (0..net.depth().saturating_sub(1))
        .map(|i| {
            let lhs = grads.grads[i].mul_t(&w[i]);
            let rhs = w[i + 1].tmul(&grads.grads[i + 1]);
            let scale = 1.0 + grads.grads[i + 1].frobenius_norm() * w[i + 1].frobenius_norm();
            lhs.sub(&rhs).frobenius_norm() / scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linnet::{init_network, train, InitScheme, TrainConfig};
    use crate::matrix::gaussian_matrix;
    use crate::rng::RngState;

    fn zas(d: usize, depth: usize) -> LinearNet {
        init_network(d, depth, InitScheme::Zas, &mut RngState::new(0)).unwrap()
    }

    #[test]
    fn zas_invariant_matrices() {
        let ds = invariant_matrices(&zas(3, 5)).unwrap();
        assert_eq!(ds.len(), 4);
        for d in &ds[..3] {
            assert!(d.is_zero());
        }
        assert_eq!(ds[3], Matrix::identity(3).scale(-1.0));
    }

    #[test]
    fn identity_and_random_invariant_matrices() {
        let id = init_network(2, 4, InitScheme::Identity, &mut RngState::new(0)).unwrap();
        assert!(invariant_matrices(&id).unwrap().iter().all(Matrix::is_zero));

        let net = init_network(4, 5, InitScheme::Xavier, &mut RngState::new(3)).unwrap();
        for d in invariant_matrices(&net).unwrap() {
            assert!(d.asymmetry() <= 1e-14);
        }
        assert!(invariant_matrices(&zas(2, 1)).is_err());
    }

    #[test]
    fn phi_examples() {
        let neg1 = Matrix::diag(&[-1.0]);
        assert_eq!(phi_of(&neg1, 8), 2.0);
        assert_eq!(phi_of(&Matrix::zeros(2, 2), 4), 1.5);
        assert_eq!(phi_of(&Matrix::zeros(2, 2), 100), 1.0);
    }

    #[test]
    fn lr_examples() {
        let b = theoretical_lr(&Matrix::diag(&[-1.0]), 8);
        assert_eq!(b.cubic_bound, 1.0 / 131_072.0);
        assert_eq!(b.quadratic_bound, 1.0 / 147_456.0);
        assert_eq!(b.eta, 1.0 / 147_456.0);

        // φ = 1 needs 3/√L ≤ 1 and ‖Φ‖ ≤ ½, so check the formula directly at L=1
        let (l, p): (f64, f64) = (1.0, 1.0);
        assert_eq!((1.0 / (4.0 * l.powi(3) * p.powi(6))).min(1.0 / (144.0 * l * l * p.powi(4))), 1.0 / 144.0);

        let small = Matrix::zeros(1, 1);
        let a = theoretical_lr(&small, 16);
        let b = theoretical_lr(&small, 32);
        // φ = 1 at both depths
        assert!((b.cubic_bound / a.cubic_bound - 0.125).abs() < 1e-15);
    }

    #[test]
    fn approx_invariance_cases() {
        let r = check_approx_invariance(&zas(3, 6), 1e-12, 1e-12).unwrap();
        assert!(r.ok());
        assert_eq!(r.max_d_norm(), 0.0);
        assert_eq!(r.last_gap, 0.0);

        let ni = init_network(3, 20, InitScheme::NearIdentity(None), &mut RngState::new(1)).unwrap();
        let (delta, eps) = invariance_thresholds(20, 2.0);
        let r = check_approx_invariance(&ni, delta, eps).unwrap();
        assert!(!r.last_ok);
        assert!(r.last_gap > 0.5);

        let depth = 6;
        let target = Matrix::identity(2).scale(-1.0);
        let phi = phi_of(&target, depth);
        let (delta, eps) = invariance_thresholds(depth, phi);
        let near = init_network(2, depth, InitScheme::NearZas(1e-7), &mut RngState::new(2)).unwrap();
        assert!(check_approx_invariance(&near, delta, eps).unwrap().ok());

        assert!(check_approx_invariance(&zas(2, 3), 0.0, 1.0).is_err());
    }

    #[test]
    fn weight_bound_cases() {
        let wb = check_weight_bounds(&zas(2, 5), 1.0).unwrap();
        assert_eq!((wb.alpha, wb.beta), (1.0, 0.0));
        assert!(wb.ok());

        let id = init_network(2, 2, InitScheme::Identity, &mut RngState::new(0)).unwrap();
        let wb = check_weight_bounds(&id, 1.0).unwrap();
        assert_eq!(wb.growth.lhs, 1.0);
        assert!(wb.ok());

        let depth = 4;
        let phi: f64 = 1.5;
        let scale = (depth as f64 * phi * phi).powf(1.0 / (2.0 * depth as f64 - 2.0)) * 1.01;
        let mut weights = zas(2, depth).into_weights();
        weights[0] = weights[0].scale(scale);
        let inflated = LinearNet::from_weights(weights).unwrap();
        let wb = check_weight_bounds(&inflated, phi).unwrap();
        assert!(!wb.growth.holds());
        assert!(wb.output.holds());

        assert!(check_weight_bounds(&id, 0.5).is_err());
    }

    #[test]
    fn grad_lower_cases() {
        let mut rng = RngState::new(5);
        let target = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let g = check_gradient_lower_bound(&zas(3, 4), &target).unwrap();
        assert_eq!(g.ratio, 2.0);
        assert!(g.ok);

        let id = init_network(3, 4, InitScheme::Identity, &mut rng).unwrap();
        let g = check_gradient_lower_bound(&id, &Matrix::identity(3)).unwrap();
        assert_eq!(g.loss, 0.0);
        assert_eq!(g.ratio, f64::INFINITY);
        assert!(g.ok);
    }

    #[test]
    fn grad_upper_cases() {
        let target = Matrix::identity(2).scale(-1.0);
        let net = zas(2, 4);
        let phi = phi_of(&target, 4);
        let g = check_gradient_upper_bounds(&net, &target, phi).unwrap();
        assert_eq!(g.hidden.lhs, 0.0);
        assert!(g.ok());

        let id = init_network(2, 4, InitScheme::Identity, &mut RngState::new(0)).unwrap();
        let g = check_gradient_upper_bounds(&id, &Matrix::identity(2), 1.0).unwrap();
        assert_eq!((g.hidden.lhs, g.hidden.rhs, g.last.lhs, g.last.rhs), (0.0, 0.0, 0.0, 0.0));
        assert!(g.ok());
    }

    #[test]
    fn grad_upper_on_sampled_nets_within_weight_bounds() {
        let mut rng = RngState::new(17);
        let mut checked = 0;
        for _ in 0..50 {
            let depth = 2 + rng.next_below(6);
            let target = gaussian_matrix(3, 3, 0.0, 0.3, &mut rng).unwrap();
            let net = init_network(3, depth, InitScheme::NearZas(0.05), &mut rng).unwrap();
            let phi = phi_of(&target, depth);
            if !check_weight_bounds(&net, phi).unwrap().ok() {
                continue;
            }
            checked += 1;
            assert!(check_gradient_upper_bounds(&net, &target, phi).unwrap().ok());
        }
        assert!(checked > 10);
    }

    #[test]
    fn drift_identity_and_zero_eta() {
        let mut rng = RngState::new(8);
        let target = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let net = init_network(3, 5, InitScheme::Xavier, &mut rng).unwrap();
        let eta = 0.03;
        let predicted = invariant_drift_exact(&net, &target, eta).unwrap();
        let before = invariant_matrices(&net).unwrap();
        let after = invariant_matrices(&net.gd_step(&target, eta).unwrap()).unwrap();
        for ((b, a), p) in before.iter().zip(&after).zip(&predicted) {
            let err = relative_error(&a.sub(b), p);
            assert!(err <= 1e-12, "{err} {:?}", p);
        }
        for m in invariant_drift_exact(&net, &target, 0.0).unwrap() {
            assert!(m.is_zero());
        }
    }

    #[test]
    fn zas_drift() {
        let mut rng = RngState::new(9);
        let target = gaussian_matrix(2, 2, 0.0, 1.0, &mut rng).unwrap();
        let eta = 0.1;
        let drift = invariant_drift_exact(&zas(2, 4), &target, eta).unwrap();
        assert!(drift[0].is_zero() && drift[1].is_zero());
        assert!(drift[2].sub(&target.tmul(&target).scale(eta * eta)).max_abs() < 1e-16);

        let phi = phi_of(&target, 4);
        assert!(drift_bounds_check(&zas(2, 4), &target, eta, phi).unwrap().ok());
        let db = drift_bounds_check(&zas(2, 4), &target, 0.0, phi).unwrap();
        assert_eq!((db.hidden.lhs, db.last.lhs), (0.0, 0.0));
    }

    #[test]
    fn power_gap_cases() {
        let pg = product_power_gap(&zas(3, 6)).unwrap();
        assert_eq!(pg.gap, 0.0);

        // Balanced net: W_l = Q for all l with Q orthogonal-times-scalar keeps D = 0.
        let q = Matrix::from_rows(&[vec![0.6, -0.8], vec![0.8, 0.6]]).unwrap().scale(1.1);
        let bal = LinearNet::from_weights(vec![q.clone(); 5]).unwrap();
        assert!(product_power_gap(&bal).unwrap().gap <= 1e-12);

        let mut rng = RngState::new(31);
        for _ in 0..20 {
            let net = init_network(3, 6, InitScheme::NearZas(0.01), &mut rng).unwrap();
            assert!(product_power_gap(&net).unwrap().holds());
        }
    }

    #[test]
    fn balance_identity_on_random_nets() {
        let mut rng = RngState::new(40);
        for _ in 0..20 {
            let net = init_network(3, 6, InitScheme::Xavier, &mut rng).unwrap();
            let target = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
            let g = net.gradients(&target).unwrap();
            assert!(balance_residuals(&net, &g).iter().all(|&r| r <= 1e-12));
        }
    }

    #[test]
    fn monitored_theoretical_run_is_clean() {
        let target = Matrix::diag(&[-1.0]);
        let depth = 8;
        let eta = theoretical_lr(&target, depth).eta;
        let net = zas(1, depth);
        let mut monitor = InvariantMonitor::new(MonitorLevel::Full);
        let cfg = TrainConfig::new(eta, 1e-10, 2000);
        let traj = train(net, &target, &cfg, Some(&mut monitor)).unwrap();
        assert!(monitor.summary.clean(), "{:?}", monitor.summary.first_violation);
        assert_eq!(monitor.summary.observations, 2001);
        assert!(loss_budget(&traj, eta).holds());
        // per-step contraction straight from the trajectory
        for pair in traj.records.windows(2) {
            assert!(pair[1].loss <= (1.0 - eta / 2.0) * pair[0].loss + SLACK);
        }
    }

    #[test]
    fn monitor_flags_violations() {
        // Near-identity start with a huge step violates the invariance thresholds.
        let target = Matrix::identity(2).scale(-1.0);
        let net = init_network(2, 6, InitScheme::NearIdentity(None), &mut RngState::new(3)).unwrap();
        let mut monitor = InvariantMonitor::new(MonitorLevel::Light).keep_reports(true);
        let cfg = TrainConfig::new(0.01, 1e-10, 5);
        train(net, &target, &cfg, Some(&mut monitor)).unwrap();
        assert!(monitor.summary.violations_of("approx_invariance_last") > 0);
        assert!(monitor.summary.first_violation.is_some());
        assert_eq!(monitor.reports.len(), 6);
        assert!(!monitor.reports[0].approx_invariance_ok());
    }
}
