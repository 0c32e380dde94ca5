//! Residual network `z_0 = V_0 x`, `z_l = z_{l−1} + U_l ReLU(V_l z_{l−1})`,
//! `f(x) = U_out z_L`, trained with square loss by plain gradient descent.
//!
//! Batches are stored column-wise: `X` is `d×n`, hidden states are `D×n`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::format_float;
use crate::matrix::{gaussian_matrix, Matrix};
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResNetDims {
    /// `d`
    pub input: usize,
    /// `d′`
    pub output: usize,
    /// Skip width `D`.
    pub width: usize,
    /// Block width `m`.
    pub hidden: usize,
    /// Number of residual blocks `L`.
    pub blocks: usize,
}

impl ResNetDims {
    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.width == 0 || self.hidden == 0 {
            return Err(Error::InvalidInput(format!("resnet dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResInit {
    /// Every `U` (including `U_out`) zero; every `V` (including `V_0`)
    /// `N(0, 1/D)`.
    Mzas,
    /// Every matrix `N(0, 1/fan-in)`.
    Xavier,
}

impl fmt::Display for ResInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResInit::Mzas => "mzas",
            ResInit::Xavier => "xavier",
        })
    }
}

impl FromStr for ResInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mzas" => Ok(ResInit::Mzas),
            "xavier" => Ok(ResInit::Xavier),
            _ => Err(Error::InvalidInput(format!("resnet init must be mzas or xavier, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNet {
    pub dims: ResNetDims,
    /// `D×d`
    pub v0: Matrix,
    /// `D×m` each.
    pub us: Vec<Matrix>,
    /// `m×D` each.
    pub vs: Vec<Matrix>,
    /// `d′×D`
    pub u_out: Matrix,
}

/// Gradients with the same layout as [`ResNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResGrads {
    pub v0: Matrix,
    pub us: Vec<Matrix>,
    pub vs: Vec<Matrix>,
    pub u_out: Matrix,
}

impl ResGrads {
    pub fn sum_sq(&self) -> f64 {
        self.v0.sum_sq()
            + self.u_out.sum_sq()
            + self.us.iter().map(Matrix::sum_sq).sum::<f64>()
            + self.vs.iter().map(Matrix::sum_sq).sum::<f64>()
    }
}

pub fn resnet_init(dims: ResNetDims, scheme: ResInit, rng: &mut RngState) -> Result<ResNet> {
    dims.validate()?;
    let ResNetDims { input, output, width, hidden, blocks } = dims;
    let sd = |fan_in: usize| (1.0 / fan_in as f64).sqrt();
    let net = match scheme {
        ResInit::Mzas => {
            let v_sd = sd(width);
            let v0 = gaussian_matrix(width, input, 0.0, v_sd, rng)?;
            let vs = (0..blocks)
                .map(|_| gaussian_matrix(hidden, width, 0.0, v_sd, rng))
                .collect::<Result<_>>()?;
            ResNet {
                dims,
                v0,
                us: vec![Matrix::zeros(width, hidden); blocks],
                vs,
                u_out: Matrix::zeros(output, width),
            }
        }
        ResInit::Xavier => {
            let v0 = gaussian_matrix(width, input, 0.0, sd(input), rng)?;
            let mut us = Vec::with_capacity(blocks);
            let mut vs = Vec::with_capacity(blocks);
            for _ in 0..blocks {
                vs.push(gaussian_matrix(hidden, width, 0.0, sd(width), rng)?);
                us.push(gaussian_matrix(width, hidden, 0.0, sd(hidden), rng)?);
            }
            let u_out = gaussian_matrix(output, width, 0.0, sd(width), rng)?;
            ResNet { dims, v0, us, vs, u_out }
        }
    };
    Ok(net)
}

/// Hidden states `z_0..z_L` and pre-activations `V_l z_{l−1}` of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub zs: Vec<Matrix>,
    pub pre: Vec<Matrix>,
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl ResNet {
    pub fn blocks(&self) -> usize {
        self.us.len()
    }

    pub fn is_finite(&self) -> bool {
        self.v0.is_finite()
            && self.u_out.is_finite()
            && self.us.iter().all(Matrix::is_finite)
            && self.vs.iter().all(Matrix::is_finite)
    }

    /// Forward pass on the columns of `x` (`d×n`); returns `d′×n` outputs.
    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.rows() != self.dims.input {
            return Err(Error::shape("resnet_forward", format!("{} input rows", self.dims.input), format!("{}", x.rows())));
        }
        let mut zs = Vec::with_capacity(self.blocks() + 1);
        let mut pre = Vec::with_capacity(self.blocks());
        zs.push(self.v0.mul(x));
        for (u, v) in self.us.iter().zip(&self.vs) {
            let z = zs.last().expect("z_0 pushed");
            let h = v.mul(z);
            let mut next = z.clone();
            if !u.is_zero() {
                next = next.add(&u.mul(&h.map(relu)));
            }
            pre.push(h);
            zs.push(next);
        }
        let out = self.u_out.mul(zs.last().expect("z_0 pushed"));
        Ok((out, ForwardCache { zs, pre }))
    }

    /// Loss `(1/2n) Σ ‖f(x_i) − y_i‖²` without gradients.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        let (out, _) = self.forward_batch(&data.x)?;
        Ok(0.5 * out.sub(&data.y).sum_sq() / data.n() as f64)
    }

    /// `θ ← θ − η g`.
    pub fn apply(&mut self, grads: &ResGrads, eta: f64) {
        self.v0.axpy(-eta, &grads.v0);
        self.u_out.axpy(-eta, &grads.u_out);
        for (w, g) in self.us.iter_mut().zip(&grads.us) {
            w.axpy(-eta, g);
        }
        for (w, g) in self.vs.iter_mut().zip(&grads.vs) {
            w.axpy(-eta, g);
        }
    }
}

/// Forward pass for a single input vector.
pub fn resnet_forward(net: &ResNet, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let (out, cache) = net.forward_batch(&Matrix::column(x))?;
    Ok((out.into_vec(), cache))
}

/// Square loss and its exact gradient by reverse-mode through the blocks.
/// The ReLU derivative at 0 is taken to be 0.
pub fn resnet_loss_grad(net: &ResNet, batch: &Dataset) -> Result<(f64, ResGrads)> {
    let n = batch.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if batch.y.rows() != net.dims.output {
        return Err(Error::shape("resnet_loss_grad", format!("{} target rows", net.dims.output), format!("{}", batch.y.rows())));
    }
    let (out, cache) = net.forward_batch(&batch.x)?;
    let resid = out.sub(&batch.y);
    let loss = 0.5 * resid.sum_sq() / n as f64;
    let g_out = resid.scale(1.0 / n as f64);

    let blocks = net.blocks();
    let u_out = g_out.mul_t(&cache.zs[blocks]);
    let mut delta = net.u_out.tmul(&g_out);
    let mut us = vec![Matrix::zeros(0, 0); blocks];
    let mut vs = vec![Matrix::zeros(0, 0); blocks];
    for l in (0..blocks).rev() {
        let h = &cache.pre[l];
        us[l] = delta.mul_t(&h.map(relu));
        let da = net.us[l].tmul(&delta);
        let dh = da.zip_with(h, |g, x| if x > 0.0 { g } else { 0.0 });
        vs[l] = dh.mul_t(&cache.zs[l]);
        if !dh.is_zero() {
            delta = delta.add(&net.vs[l].tmul(&dh));
        }
    }
    let v0 = delta.mul_t(&batch.x);
    Ok((loss, ResGrads { v0, us, vs, u_out }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `d×n`
    pub x: Matrix,
    /// `d′×n`
    pub y: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::shape("dataset", format!("{} target columns", x.cols()), format!("{}", y.cols())));
        }
        Ok(Dataset { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.cols()
    }

    /// Whether every target column is a one-hot vector.
    pub fn is_one_hot(&self) -> bool {
        (0..self.n()).all(|j| {
            let col = self.y.col_vec(j);
            col.iter().all(|&v| v == 0.0 || v == 1.0) && col.iter().sum::<f64>() == 1.0
        })
    }

    /// Columns `idx` as a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let pick = |m: &Matrix| {
            let mut out = Matrix::zeros(m.rows(), idx.len());
            for r in 0..m.rows() {
                let src = m.row(r);
                for (c, &j) in idx.iter().enumerate() {
                    out[(r, c)] = src[j];
                }
            }
            out
        };
        Dataset { x: pick(&self.x), y: pick(&self.y) }
    }

    /// Fraction of columns whose largest prediction matches the largest target.
    pub fn accuracy(&self, predictions: &Matrix) -> f64 {
        let argmax = |v: Vec<f64>| {
            v.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0
        };
        let hits = (0..self.n())
            .filter(|&j| argmax(predictions.col_vec(j)) == argmax(self.y.col_vec(j)))
            .count();
        hits as f64 / self.n() as f64
    }
}

/// Gaussian blobs: sample `i` belongs to class `i mod classes`, its input is
/// the class mean plus `N(0, I)` noise, its target is one-hot. Class means
/// are random unit directions scaled by `separation`.
pub fn synth_dataset(n: usize, d: usize, classes: usize, separation: f64, rng: &mut RngState) -> Result<Dataset> {
    if classes < 2 || n == 0 || !n.is_multiple_of(classes) || d == 0 {
        return Err(Error::InvalidInput(format!(
            "need d >= 1, classes >= 2 and n a positive multiple of classes, got n={n}, d={d}, classes={classes}"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidInput(format!("separation must be finite and >= 0, got {separation}")));
    }
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.next_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| separation * x / norm).collect()
        })
        .collect();
    let mut x = Matrix::zeros(d, n);
    let mut y = Matrix::zeros(classes, n);
    for j in 0..n {
        let c = j % classes;
        for i in 0..d {
            x[(i, j)] = means[c][i] + rng.next_normal();
        }
        y[(c, j)] = 1.0;
    }
    Dataset::new(x, y)
}

fn dataset_header(d: usize, d_out: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).chain((0..d_out).map(|i| format!("y{i}"))).collect()
}

pub fn write_csv_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(dataset_header(data.x.rows(), data.y.rows()))?;
    for j in 0..data.n() {
        let row: Vec<String> = data
            .x
            .col_vec(j)
            .into_iter()
            .chain(data.y.col_vec(j))
            .map(format_float)
            .collect();
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a dataset CSV with header `x0..x{d−1},y0..y{d′−1}`. With `one_hot`
/// set, every target row must be a one-hot vector.
pub fn load_csv_dataset(path: &Path, d: usize, d_out: usize, one_hot: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line: line as usize, message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::Empty { path: path.to_path_buf() }),
        Some(h) => h?,
    };
    let expected = dataset_header(d, d_out);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_err(1, format!("header must be {}", expected.join(","))));
    }
    let width = d + d_out;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} columns, found {}", rec.len())));
        }
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(line, format!("`{f}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if one_hot {
            let y = &vals[d..];
            if !(y.iter().all(|&v| v == 0.0 || v == 1.0) && y.iter().sum::<f64>() == 1.0) {
                return Err(parse_err(line, "target columns are not one-hot".into()));
            }
        }
        xs.push(vals[..d].to_vec());
        ys.push(vals[d..].to_vec());
    }
    if xs.is_empty() {
        return Err(Error::Empty { path: path.to_path_buf() });
    }
    // rows are samples; the dataset stores samples as columns
    let x = Matrix::from_rows(&xs)?.transpose();
    let y = Matrix::from_rows(&ys)?.transpose();
    Dataset::new(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResStatus {
    Completed,
    Diverged,
}

impl fmt::Display for ResStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResStatus::Completed => "completed",
            ResStatus::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResTrainConfig {
    pub eta: f64,
    pub epochs: usize,
    /// `None` for full-batch descent.
    pub batch_size: Option<usize>,
    /// Seeds the per-epoch sample order in mini-batch mode.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResTrajectory {
    /// Full-data loss before training and after each completed epoch.
    pub losses: Vec<f64>,
    pub status: ResStatus,
    pub net: ResNet,
}

impl ResTrajectory {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("initial loss recorded")
    }
}

pub fn resnet_train(net: ResNet, data: &Dataset, config: &ResTrainConfig) -> Result<ResTrajectory> {
    if !(config.eta.is_finite() && config.eta >= 0.0) {
        return Err(Error::InvalidInput(format!("learning rate must be finite and >= 0, got {}", config.eta)));
    }
    if data.n() == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let batch = config.batch_size.filter(|&b| b < data.n());
    if batch == Some(0) {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    let mut net = net;
    let mut rng = RngState::new(config.seed);
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    let mut status = ResStatus::Completed;
    let mut pending: Option<f64> = None;
    for _ in 0..config.epochs {
        match batch {
            None => {
                let (loss, grads) = resnet_loss_grad(&net, data)?;
                losses.push(loss);
                if !loss.is_finite() {
                    status = ResStatus::Diverged;
                    break;
                }
                net.apply(&grads, config.eta);
            }
            Some(b) => {
                let loss = pending.take().map_or_else(|| net.loss(data), Ok)?;
                losses.push(loss);
                if !loss.is_finite() {
                    status = ResStatus::Diverged;
                    break;
                }
                rng.shuffle(&mut order);
                for chunk in order.chunks(b) {
                    let (_, grads) = resnet_loss_grad(&net, &data.subset(chunk))?;
                    net.apply(&grads, config.eta);
                }
                pending = Some(net.loss(data)?);
            }
        }
    }
    if status == ResStatus::Completed {
        let last = pending.map_or_else(|| net.loss(data), Ok)?;
        losses.push(last);
        if !last.is_finite() {
            status = ResStatus::Diverged;
        }
    }
    Ok(ResTrajectory { losses, status, net })
}

/// Step size with the lowest loss after `probe_epochs` of training, over
/// `grid`. Diverged probes are skipped; ties go to the larger step.
pub fn tune_resnet_lr(net: &ResNet, data: &Dataset, grid: &[f64], probe_epochs: usize) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &eta in grid {
        let config = ResTrainConfig { eta, epochs: probe_epochs, batch_size: None, seed: 0 };
        let traj = resnet_train(net.clone(), data, &config)?;
        let loss = traj.final_loss();
        if traj.status == ResStatus::Diverged || !loss.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((b_eta, b_loss)) => loss < b_loss || (loss == b_loss && eta > b_eta),
        };
        if better {
            best = Some((eta, loss));
        }
    }
    best.map(|(eta, _)| eta)
        .ok_or_else(|| Error::TuningFailed(format!("every step size in {grid:?} diverged within {probe_epochs} epochs")))
}

/// `2^{-k}` for `k = 0..count`.
pub fn halving_grid(top: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| top * 0.5f64.powi(k as i32)).collect()
}
