//! Deep linear networks `W_L ⋯ W_1` with square `d×d` layers: initialization,
//! the whitened and data losses, closed-form layer gradients, and plain
//! gradient descent.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gaussian_matrix, Matrix};
use crate::rng::RngState;

/// A run is declared diverged once its loss exceeds this multiple of the
/// initial loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Relative per-step loss decrease below which an iteration counts toward a
/// plateau.
pub const PLATEAU_REL_DECREASE: f64 = 1e-4;
/// Consecutive slow iterations needed to flag a run as plateaued.
pub const PLATEAU_MIN_LEN: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "sigma", rename_all = "kebab-case")]
pub enum InitScheme {
    /// `W_1 = ⋯ = W_{L-1} = I`, `W_L = 0`.
    Zas,
    /// ZAS plus i.i.d. `N(0, σ²)` noise on every entry.
    NearZas(f64),
    /// `W_l = I + U_l`, `(U_l)_ij ~ N(0, σ²)`; `None` means `σ² = 1/(dL)`.
    NearIdentity(Option<f64>),
    /// Entries `N(0, 1/d)`.
    Xavier,
    Identity,
}

impl InitScheme {
    fn validate(&self) -> Result<()> {
        let sigma = match self {
            InitScheme::NearZas(s) | InitScheme::NearIdentity(Some(s)) => *s,
            _ => return Ok(()),
        };
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("init sigma must be finite and >= 0, got {sigma}")))
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Zas => write!(f, "zas"),
            InitScheme::NearZas(s) => write!(f, "near-zas:{s}"),
            InitScheme::NearIdentity(None) => write!(f, "near-identity"),
            InitScheme::NearIdentity(Some(s)) => write!(f, "near-identity:{s}"),
            InitScheme::Xavier => write!(f, "xavier"),
            InitScheme::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let sigma = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| Error::InvalidInput(format!("init `{name}` needs :SIGMA")))?;
            a.parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad sigma `{a}`: {e}")))
        };
        let scheme = match (name, arg) {
            ("zas", None) => InitScheme::Zas,
            ("near-zas", a) => InitScheme::NearZas(sigma(a)?),
            ("near-identity", None) => InitScheme::NearIdentity(None),
            ("near-identity", a) => InitScheme::NearIdentity(Some(sigma(a)?)),
            ("xavier", None) => InitScheme::Xavier,
            ("identity", None) => InitScheme::Identity,
            _ => return Err(Error::InvalidInput(format!("unknown init scheme `{s}`"))),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearNet {
    dim: usize,
    weights: Vec<Matrix>,
}

/// Layer gradients; `grads[i]` is the gradient for `weights[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub grads: Vec<Matrix>,
}

impl GradSet {
    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.grads.iter().map(Matrix::frobenius_norm).collect()
    }

    pub fn last(&self) -> &Matrix {
        self.grads.last().expect("gradient set is never empty")
    }
}

/// Initializes a depth-`depth` network of `dim×dim` layers.
///
/// With `depth == 1` the ZAS single layer is the output layer and starts at 0.
pub fn init_network(dim: usize, depth: usize, scheme: InitScheme, rng: &mut RngState) -> Result<LinearNet> {
    if dim == 0 || depth == 0 {
        return Err(Error::InvalidInput(format!(
            "init_network: need dim >= 1 and depth >= 1, got d={dim}, L={depth}"
        )));
    }
    scheme.validate()?;
    let zas = |l: usize| {
        if l + 1 == depth {
            Matrix::zeros(dim, dim)
        } else {
            Matrix::identity(dim)
        }
    };
    let mut weights = Vec::with_capacity(depth);
    for l in 0..depth {
        let w = match scheme {
            InitScheme::Zas => zas(l),
            InitScheme::NearZas(sigma) => zas(l).add(&gaussian_matrix(dim, dim, 0.0, sigma, rng)?),
            InitScheme::NearIdentity(sigma) => {
                let sigma = sigma.unwrap_or_else(|| (1.0 / (dim * depth) as f64).sqrt());
                gaussian_matrix(dim, dim, 0.0, sigma, rng)?.add_identity(1.0)
            }
            InitScheme::Xavier => gaussian_matrix(dim, dim, 0.0, (1.0 / dim as f64).sqrt(), rng)?,
            InitScheme::Identity => Matrix::identity(dim),
        };
        weights.push(w);
    }
    Ok(LinearNet { dim, weights })
}

impl LinearNet {
    pub fn from_weights(weights: Vec<Matrix>) -> Result<Self> {
        let dim = weights
            .first()
            .ok_or_else(|| Error::InvalidInput("network needs at least one layer".into()))?
            .rows();
        for (i, w) in weights.iter().enumerate() {
            if w.shape() != (dim, dim) {
                return Err(Error::shape(
                    "LinearNet::from_weights",
                    format!("{dim}x{dim}"),
                    format!("{}x{} at layer {}", w.rows(), w.cols(), i + 1),
                ));
            }
        }
        if dim == 0 {
            return Err(Error::InvalidInput("network dimension must be >= 1".into()));
        }
        Ok(LinearNet { dim, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// Layer `l`, 1-based as in `W_1 … W_L`.
    pub fn layer(&self, l: usize) -> &Matrix {
        &self.weights[l - 1]
    }

    pub fn into_weights(self) -> Vec<Matrix> {
        self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
    }

    /// `W_{l2} ⋯ W_{l1}` (1-based). The empty range `l2 == l1 - 1` is `I`.
    pub fn product_range(&self, l1: usize, l2: usize) -> Result<Matrix> {
        let depth = self.depth();
        if l1 < 1 || l1 > depth + 1 || l2 > depth || l2 + 1 < l1 {
            return Err(Error::InvalidInput(format!(
                "product_range: need 1 <= l1, l2 <= {depth} (or l2 = l1 - 1), got l1={l1}, l2={l2}"
            )));
        }
        let mut p = Matrix::identity(self.dim);
        for w in &self.weights[l1 - 1..l2] {
            p = w.mul(&p);
        }
        Ok(p)
    }

    /// End-to-end matrix `W_{L:1}`.
    pub fn product(&self) -> Matrix {
        self.product_range(1, self.depth()).expect("full range is valid")
    }

    fn check_target(&self, op: &'static str, phi: &Matrix) -> Result<()> {
        if phi.shape() != (self.dim, self.dim) {
            return Err(Error::shape(
                op,
                format!("{0}x{0} target", self.dim),
                format!("{}x{}", phi.rows(), phi.cols()),
            ));
        }
        Ok(())
    }

    fn check_data(&self, op: &'static str, x: &Matrix, y: &Matrix) -> Result<()> {
        if x.rows() != self.dim || y.rows() != self.dim || x.cols() != y.cols() {
            return Err(Error::shape(
                op,
                format!("X and Y both {}xn", self.dim),
                format!("X {}x{}, Y {}x{}", x.rows(), x.cols(), y.rows(), y.cols()),
            ));
        }
        Ok(())
    }

    /// `prefix[i] = W_i ⋯ W_1` for `i = 0..=L` (`prefix[0] = I`).
    fn prefix_products(&self) -> Vec<Matrix> {
        let mut prefix = Vec::with_capacity(self.depth() + 1);
        prefix.push(Matrix::identity(self.dim));
        for w in &self.weights {
            let next = w.mul(prefix.last().expect("non-empty"));
            prefix.push(next);
        }
        prefix
    }

    /// `suffix[i] = W_L ⋯ W_{i+2}` in 1-based terms, i.e. the product of every
    /// layer above 0-based layer `i`; `suffix[L-1] = I`.
    fn suffix_products(&self) -> Vec<Matrix> {
        let depth = self.depth();
        let mut suffix = vec![Matrix::identity(self.dim); depth];
        for i in (0..depth.saturating_sub(1)).rev() {
            suffix[i] = suffix[i + 1].mul(&self.weights[i + 1]);
        }
        suffix
    }

    /// `½‖W_{L:1} − Φ‖²_F`.
    pub fn loss(&self, phi: &Matrix) -> Result<f64> {
        self.check_target("loss", phi)?;
        Ok(0.5 * self.product().sub(phi).sum_sq())
    }

    /// `½‖W_{L:1} X − Y‖²_F`.
    pub fn data_loss(&self, x: &Matrix, y: &Matrix) -> Result<f64> {
        self.check_data("data_loss", x, y)?;
        Ok(0.5 * self.product().mul(x).sub(y).sum_sq())
    }

    /// Layer gradients `∇_l R = W_{L:l+1}ᵀ (W_{L:1} − Φ) W_{l−1:1}ᵀ`.
    pub fn gradients(&self, phi: &Matrix) -> Result<GradSet> {
        Ok(self.loss_and_gradients(phi)?.1)
    }

    /// Loss and all layer gradients from a single prefix/suffix pass.
    pub fn loss_and_gradients(&self, phi: &Matrix) -> Result<(f64, GradSet)> {
        self.check_target("gradients", phi)?;
        let prefix = self.prefix_products();
        let residual = prefix[self.depth()].sub(phi);
        let loss = 0.5 * residual.sum_sq();
        Ok((loss, self.backprop(&prefix, &residual)))
    }

    /// `∇_l R̃ = W_{L:l+1}ᵀ (W_{L:1} X − Y) Xᵀ W_{l−1:1}ᵀ`.
    pub fn data_gradients(&self, x: &Matrix, y: &Matrix) -> Result<GradSet> {
        Ok(self.data_loss_and_gradients(x, y)?.1)
    }

    pub fn data_loss_and_gradients(&self, x: &Matrix, y: &Matrix) -> Result<(f64, GradSet)> {
        self.check_data("data_gradients", x, y)?;
        let prefix = self.prefix_products();
        let residual = prefix[self.depth()].mul(x).sub(y);
        let loss = 0.5 * residual.sum_sq();
        let pulled = residual.mul_t(x);
        Ok((loss, self.backprop(&prefix, &pulled)))
    }

    fn backprop(&self, prefix: &[Matrix], residual: &Matrix) -> GradSet {
        let suffix = self.suffix_products();
        let grads = (0..self.depth())
            .map(|i| suffix[i].tmul(residual).mul_t(&prefix[i]))
            .collect();
        GradSet { grads }
    }

    /// `W_l ← W_l − η G_l` for every layer at once.
    pub fn apply_update(&self, grads: &GradSet, eta: f64) -> LinearNet {
        let weights = self
            .weights
            .iter()
            .zip(&grads.grads)
            .map(|(w, g)| {
                let mut w = w.clone();
                w.axpy(-eta, g);
                w
            })
            .collect();
        LinearNet { dim: self.dim, weights }
    }

    /// One gradient-descent step on the whitened loss, all layers updated
    /// from gradients at the current iterate.
    pub fn gd_step(&self, phi: &Matrix, eta: f64) -> Result<LinearNet> {
        check_eta(eta, true)?;
        let grads = self.gradients(phi)?;
        Ok(self.apply_update(&grads, eta))
    }
}

fn check_eta(eta: f64, allow_zero: bool) -> Result<()> {
    if eta.is_finite() && (eta > 0.0 || (allow_zero && eta == 0.0)) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("learning rate must be positive and finite, got {eta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    Converged,
    BudgetExhausted,
    Diverged,
}

impl fmt::Display for TrainStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainStatus::Converged => "converged",
            TrainStatus::BudgetExhausted => "budget-exhausted",
            TrainStatus::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iter: u64,
    pub loss: f64,
    pub grad_norms: Vec<f64>,
}

/// Longest run of consecutive steps whose relative loss decrease stayed
/// below the plateau threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauStats {
    pub longest: u64,
    pub plateaued: bool,
}

#[derive(Debug, Clone)]
struct PlateauTracker {
    rel_threshold: f64,
    min_len: u64,
    current: u64,
    longest: u64,
}

impl PlateauTracker {
    fn new(rel_threshold: f64, min_len: u64) -> Self {
        PlateauTracker { rel_threshold, min_len, current: 0, longest: 0 }
    }

    fn push(&mut self, prev: f64, next: f64) {
        let rel = if prev > 0.0 { (prev - next) / prev } else { 0.0 };
        if rel < self.rel_threshold {
            self.current += 1;
            self.longest = self.longest.max(self.current);
        } else {
            self.current = 0;
        }
    }

    fn stats(&self) -> PlateauStats {
        PlateauStats {
            longest: self.longest,
            plateaued: self.longest >= self.min_len,
        }
    }
}

/// Plateau statistics for an already-recorded loss curve.
pub fn plateau_stats(losses: &[f64], rel_threshold: f64, min_len: u64) -> PlateauStats {
    let mut tracker = PlateauTracker::new(rel_threshold, min_len);
    for pair in losses.windows(2) {
        tracker.push(pair[0], pair[1]);
    }
    tracker.stats()
}

/// What a [`TrainMonitor`] sees at an observed iteration, before the update.
pub struct StepView<'a> {
    pub iter: u64,
    pub net: &'a LinearNet,
    pub target: &'a Matrix,
    pub grads: &'a GradSet,
    pub loss: f64,
    pub eta: f64,
}

pub trait TrainMonitor {
    fn observe(&mut self, step: &StepView<'_>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub eps: f64,
    pub max_iters: u64,
    /// Keep a [`StepRecord`] every `record_every` iterations (plus the last).
    pub record_every: u64,
    pub monitor_every: u64,
    pub plateau_rel: f64,
    pub plateau_len: u64,
}

impl TrainConfig {
    pub fn new(eta: f64, eps: f64, max_iters: u64) -> Self {
        TrainConfig {
            eta,
            eps,
            max_iters,
            record_every: 1,
            monitor_every: default_monitor_cadence(max_iters),
            plateau_rel: PLATEAU_REL_DECREASE,
            plateau_len: PLATEAU_MIN_LEN,
        }
    }

    pub fn record_every(mut self, every: u64) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn monitor_every(mut self, every: u64) -> Self {
        self.monitor_every = every.max(1);
        self
    }
}

/// Every step up to 10⁴ iterations, otherwise `⌈T/10⁴⌉`.
pub fn default_monitor_cadence(max_iters: u64) -> u64 {
    if max_iters <= 10_000 {
        1
    } else {
        max_iters.div_ceil(10_000)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub status: TrainStatus,
    /// Number of gradient steps taken.
    pub iterations: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `Σ_{s ≤ iterations} R(s)`, accumulated at every step.
    pub loss_sum: f64,
    pub plateau: PlateauStats,
    pub net: LinearNet,
}

impl Trajectory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

/// Runs gradient descent from `net` until `R ≤ eps`, the step budget runs
/// out, or the loss blows past [`DIVERGENCE_FACTOR`] times its initial value.
pub fn train(
    net: LinearNet,
    phi: &Matrix,
    config: &TrainConfig,
    mut monitor: Option<&mut dyn TrainMonitor>,
) -> Result<Trajectory> {
    check_eta(config.eta, false)?;
    if !(config.eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be > 0, got {}", config.eps)));
    }
    let record_every = config.record_every.max(1);
    let monitor_every = config.monitor_every.max(1);
    let mut plateau = PlateauTracker::new(config.plateau_rel, config.plateau_len);
    let mut records = Vec::new();
    let mut net = net;
    let mut initial_loss = f64::NAN;
    let mut prev_loss = f64::NAN;
    let mut loss_sum = 0.0;
    let mut t: u64 = 0;
    let status = loop {
        let (loss, grads) = net.loss_and_gradients(phi)?;
        if t == 0 {
            initial_loss = loss;
        } else {
            plateau.push(prev_loss, loss);
        }
        prev_loss = loss;
        loss_sum += loss;

        let diverged = !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial_loss;
        let done = diverged || loss <= config.eps || t == config.max_iters;
        if t.is_multiple_of(record_every) || done {
            records.push(StepRecord {
                iter: t,
                loss,
                grad_norms: grads.frobenius_norms(),
            });
        }
        if diverged {
            break TrainStatus::Diverged;
        }
        if let Some(m) = monitor.as_deref_mut() {
            if t.is_multiple_of(monitor_every) || done {
                m.observe(&StepView {
                    iter: t,
                    net: &net,
                    target: phi,
                    grads: &grads,
                    loss,
                    eta: config.eta,
                });
            }
        }
        if loss <= config.eps {
            break TrainStatus::Converged;
        }
        if t == config.max_iters {
            break TrainStatus::BudgetExhausted;
        }
        net = net.apply_update(&grads, config.eta);
        t += 1;
    };
    Ok(Trajectory {
        records,
        status,
        iterations: t,
        initial_loss,
        final_loss: prev_loss,
        loss_sum,
        plateau: plateau.stats(),
        net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_net(ws: &[f64]) -> LinearNet {
        LinearNet::from_weights(ws.iter().map(|&w| Matrix::diag(&[w])).collect()).unwrap()
    }

    fn neg_identity(d: usize) -> Matrix {
        Matrix::identity(d).scale(-1.0)
    }

    #[test]
    fn zas_layout() {
        let net = init_network(3, 4, InitScheme::Zas, &mut RngState::new(0)).unwrap();
        for l in 1..=3 {
            assert_eq!(net.layer(l), &Matrix::identity(3));
        }
        assert!(net.layer(4).is_zero());

        let single = init_network(2, 1, InitScheme::Zas, &mut RngState::new(0)).unwrap();
        assert!(single.layer(1).is_zero());
    }

    #[test]
    fn near_zas_zero_sigma_is_zas() {
        let a = init_network(3, 5, InitScheme::NearZas(0.0), &mut RngState::new(8)).unwrap();
        let b = init_network(3, 5, InitScheme::Zas, &mut RngState::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn near_identity_default_variance() {
        let (d, depth) = (25, 6);
        let net = init_network(d, depth, InitScheme::NearIdentity(None), &mut RngState::new(11)).unwrap();
        let again = init_network(d, depth, InitScheme::NearIdentity(None), &mut RngState::new(11)).unwrap();
        assert_eq!(net, again);
        let samples: Vec<f64> = net
            .weights()
            .iter()
            .flat_map(|w| w.add_identity(-1.0).into_vec())
            .collect();
        let n = samples.len() as f64;
        let var = samples.iter().map(|x| x * x).sum::<f64>() / n;
        let target = 1.0 / 150.0;
        // variance of the sample second moment is 2σ⁴/n
        let se = target * (2.0 / n).sqrt();
        assert!((var - target).abs() < 4.0 * se, "var {var}");
    }

    #[test]
    fn rejects_bad_init() {
        assert!(init_network(0, 3, InitScheme::Zas, &mut RngState::new(0)).is_err());
        assert!(init_network(2, 0, InitScheme::Zas, &mut RngState::new(0)).is_err());
        assert!(init_network(2, 2, InitScheme::NearZas(-1.0), &mut RngState::new(0)).is_err());
    }

    #[test]
    fn init_scheme_parsing() {
        assert_eq!("zas".parse::<InitScheme>().unwrap(), InitScheme::Zas);
        assert_eq!("near-zas:0.01".parse::<InitScheme>().unwrap(), InitScheme::NearZas(0.01));
        assert_eq!("near-identity".parse::<InitScheme>().unwrap(), InitScheme::NearIdentity(None));
        assert_eq!(
            "near-identity:0.2".parse::<InitScheme>().unwrap(),
            InitScheme::NearIdentity(Some(0.2))
        );
        assert!("near-zas".parse::<InitScheme>().is_err());
        assert!("near-zas:-3".parse::<InitScheme>().is_err());
        assert!("bogus".parse::<InitScheme>().is_err());
        for s in ["zas", "near-zas:0.5", "near-identity", "xavier", "identity"] {
            assert_eq!(s.parse::<InitScheme>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn product_range_conventions() {
        let net = init_network(3, 5, InitScheme::Zas, &mut RngState::new(0)).unwrap();
        assert_eq!(net.product_range(1, 4).unwrap(), Matrix::identity(3));
        assert!(net.product_range(1, 5).unwrap().is_zero());
        assert_eq!(net.product_range(3, 2).unwrap(), Matrix::identity(3));
        assert!(net.product_range(0, 2).is_err());
        assert!(net.product_range(1, 6).is_err());
        assert!(net.product_range(4, 2).is_err());
    }

    #[test]
    fn product_range_order() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let net = LinearNet::from_weights(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(net.product_range(1, 2).unwrap(), b.mul(&a));
    }

    #[test]
    fn loss_examples() {
        let net = init_network(3, 4, InitScheme::Zas, &mut RngState::new(0)).unwrap();
        assert_eq!(net.loss(&neg_identity(3)).unwrap(), 1.5);

        let id = init_network(2, 3, InitScheme::Identity, &mut RngState::new(0)).unwrap();
        assert_eq!(id.loss(&Matrix::identity(2)).unwrap(), 0.0);

        assert_eq!(scalar_net(&[1.0, 0.0]).loss(&neg_identity(1)).unwrap(), 0.5);
        assert!(net.loss(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn data_loss_examples() {
        let mut rng = RngState::new(4);
        let net = init_network(3, 3, InitScheme::Xavier, &mut rng).unwrap();
        let phi = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let whitened = net.data_loss(&Matrix::identity(3), &phi).unwrap();
        assert!((whitened - net.loss(&phi).unwrap()).abs() < 1e-14);

        let zero = init_network(3, 2, InitScheme::Zas, &mut rng).unwrap();
        let x = gaussian_matrix(3, 7, 0.0, 1.0, &mut rng).unwrap();
        let y = gaussian_matrix(3, 7, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(zero.data_loss(&x, &y).unwrap(), 0.5 * y.sum_sq());

        assert!(net.data_loss(&x, &Matrix::zeros(3, 6)).is_err());
    }

    #[test]
    fn data_loss_matches_flattened_sum() {
        let mut rng = RngState::new(12);
        let net = init_network(2, 3, InitScheme::Xavier, &mut rng).unwrap();
        let x = gaussian_matrix(2, 4, 0.0, 1.0, &mut rng).unwrap();
        let y = gaussian_matrix(2, 4, 0.0, 1.0, &mut rng).unwrap();
        // brute force: push each column through the layers one at a time
        let mut total = 0.0;
        for c in 0..4 {
            let mut v = x.col_vec(c);
            for w in net.weights() {
                v = (0..2).map(|i| (0..2).map(|k| w[(i, k)] * v[k]).sum()).collect();
            }
            for i in 0..2 {
                total += (v[i] - y[(i, c)]).powi(2);
            }
        }
        assert!((net.data_loss(&x, &y).unwrap() - 0.5 * total).abs() < 1e-12);
    }

    #[test]
    fn zas_gradients() {
        let mut rng = RngState::new(2);
        let phi = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let net = init_network(3, 4, InitScheme::Zas, &mut rng).unwrap();
        let (loss, g) = net.loss_and_gradients(&phi).unwrap();
        assert_eq!(g.last(), &phi.scale(-1.0));
        for gl in &g.grads[..3] {
            assert!(gl.is_zero());
        }
        // ‖∇_L R‖² = 2 R(0) at exact ZAS
        assert!((g.last().sum_sq() - 2.0 * loss).abs() <= 1e-15 * loss);
    }

    #[test]
    fn single_layer_gradient() {
        let mut rng = RngState::new(6);
        let w = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let phi = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let net = LinearNet::from_weights(vec![w.clone()]).unwrap();
        assert_eq!(net.gradients(&phi).unwrap().grads[0], w.sub(&phi));
    }

    #[test]
    fn data_gradients_reduce_to_whitened() {
        let mut rng = RngState::new(7);
        let net = init_network(3, 4, InitScheme::Xavier, &mut rng).unwrap();
        let phi = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let a = net.gradients(&phi).unwrap();
        let b = net.data_gradients(&Matrix::identity(3), &phi).unwrap();
        for (ga, gb) in a.grads.iter().zip(&b.grads) {
            assert!(ga.sub(gb).max_abs() < 1e-13);
        }
        let x = gaussian_matrix(3, 5, 0.0, 1.0, &mut rng).unwrap();
        let y = net.product().mul(&x);
        for g in net.data_gradients(&x, &y).unwrap().grads {
            assert!(g.max_abs() < 1e-13);
        }
    }

    #[test]
    fn gd_step_examples() {
        let mut rng = RngState::new(1);
        let phi = gaussian_matrix(2, 2, 0.0, 1.0, &mut rng).unwrap();
        let net = init_network(2, 3, InitScheme::Zas, &mut rng).unwrap();
        let next = net.gd_step(&phi, 0.25).unwrap();
        assert_eq!(next.layer(1), &Matrix::identity(2));
        assert_eq!(next.layer(2), &Matrix::identity(2));
        assert_eq!(next.layer(3), &phi.scale(0.25));

        assert_eq!(net.gd_step(&phi, 0.0).unwrap(), net);
        assert!(net.gd_step(&phi, -0.1).is_err());

        // (w1, w2) = (1, 0), Φ = −1: ∇ = ((w2w1+1)w2, (w2w1+1)w1) = (0, 1)
        let toy = scalar_net(&[1.0, 0.0]).gd_step(&neg_identity(1), 0.1).unwrap();
        assert_eq!(toy.layer(1)[(0, 0)], 1.0);
        assert!((toy.layer(2)[(0, 0)] + 0.1).abs() < 1e-16);
    }

    #[test]
    fn gd_step_is_deterministic_and_not_splittable() {
        let mut rng = RngState::new(21);
        let phi = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        let net = init_network(3, 4, InitScheme::NearIdentity(None), &mut rng).unwrap();
        let a = net.gd_step(&phi, 0.05).unwrap();
        let b = net.gd_step(&phi, 0.05).unwrap();
        assert_eq!(a, b);
        let half = net.gd_step(&phi, 0.025).unwrap().gd_step(&phi, 0.025).unwrap();
        assert_ne!(a, half);
    }

    #[test]
    fn train_zero_target_converges_immediately() {
        let net = init_network(2, 3, InitScheme::Zas, &mut RngState::new(0)).unwrap();
        let traj = train(net, &Matrix::zeros(2, 2), &TrainConfig::new(0.1, 1e-10, 100), None).unwrap();
        assert_eq!(traj.status, TrainStatus::Converged);
        assert_eq!(traj.iterations, 0);
        assert_eq!(traj.final_loss, 0.0);
    }

    #[test]
    fn train_single_layer_closed_form() {
        let eta = 0.5;
        let net = scalar_net(&[0.0]);
        let traj = train(net, &neg_identity(1), &TrainConfig::new(eta, 1e-12, 1000), None).unwrap();
        assert_eq!(traj.status, TrainStatus::Converged);
        let r0 = traj.initial_loss;
        for rec in &traj.records {
            let expected = (1.0 - eta).powi(2 * rec.iter as i32) * r0;
            assert!((rec.loss - expected).abs() <= 1e-15 + 1e-12 * expected);
        }
    }

    #[test]
    fn train_rejects_bad_config() {
        let net = scalar_net(&[0.0]);
        assert!(train(net.clone(), &neg_identity(1), &TrainConfig::new(0.0, 1e-3, 10), None).is_err());
        assert!(train(net, &neg_identity(1), &TrainConfig::new(0.1, 0.0, 10), None).is_err());
    }

    #[test]
    fn train_flags_divergence() {
        let net = scalar_net(&[0.0]);
        let traj = train(net, &neg_identity(1), &TrainConfig::new(5.0, 1e-10, 1000), None).unwrap();
        assert_eq!(traj.status, TrainStatus::Diverged);
        assert!(traj.iterations < 1000);
    }

    #[test]
    fn train_budget_exhausted() {
        let net = scalar_net(&[0.0]);
        let traj = train(net, &neg_identity(1), &TrainConfig::new(1e-3, 1e-10, 5), None).unwrap();
        assert_eq!(traj.status, TrainStatus::BudgetExhausted);
        assert_eq!(traj.iterations, 5);
        assert_eq!(traj.records.len(), 6);
    }

    #[test]
    fn monitor_cadence() {
        assert_eq!(default_monitor_cadence(10_000), 1);
        assert_eq!(default_monitor_cadence(10_001), 2);
        assert_eq!(default_monitor_cadence(10_000_000), 1000);

        struct Count(Vec<u64>);
        impl TrainMonitor for Count {
            fn observe(&mut self, step: &StepView<'_>) {
                self.0.push(step.iter);
            }
        }
        let mut c = Count(Vec::new());
        let cfg = TrainConfig::new(1e-3, 1e-12, 10).monitor_every(4);
        train(scalar_net(&[0.0]), &neg_identity(1), &cfg, Some(&mut c)).unwrap();
        assert_eq!(c.0, vec![0, 4, 8, 10]);
    }

    #[test]
    fn plateau_detection() {
        let flat = vec![1.0; 1500];
        let s = plateau_stats(&flat, 1e-4, 1000);
        assert_eq!(s.longest, 1499);
        assert!(s.plateaued);
        let fast: Vec<f64> = (0..2000).map(|i| 0.9f64.powi(i)).collect();
        assert!(!plateau_stats(&fast, 1e-4, 1000).plateaued);
    }
}
