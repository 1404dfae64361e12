//! Hand-derived layers. Each `forward` returns its output and a cache; the
//! matching `backward` consumes that cache, accumulates parameter gradients
//! into [`Grads`] and returns the gradient with respect to its input.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::mat::{gemm, Mat};
use super::params::{Grads, Init, ParamId, ParamStore};
use crate::error::contract;
use crate::rng::Rng;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; running statistics are reported as
    /// [`BnUpdate`]s for the caller to apply.
    Train,
    /// Running statistics; the network is a pure function of its inputs.
    Eval,
}

fn check_cols(what: &str, x: &Mat, expected: usize) -> Result<()> {
    if x.cols != expected {
        return Err(contract!(
            "{what}: input has shape {}x{}, expected {} columns",
            x.rows,
            x.cols,
            expected
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        zero: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let init = if zero {
            Init::Zeros
        } else {
            Init::FanInUniform { fan_in: inputs }
        };
        let w = store.register(&format!("{name}.w"), &[inputs, outputs], init, true, rng)?;
        let b = store.register(&format!("{name}.b"), &[outputs], Init::Zeros, true, rng)?;
        Ok(Dense {
            w,
            b,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, p: &ParamStore, x: &Mat) -> Result<Mat> {
        check_cols("dense", x, self.inputs)?;
        let mut y = Mat::zeros(x.rows, self.outputs);
        let b = &p.get(self.b).data;
        for r in 0..x.rows {
            y.row_mut(r).copy_from_slice(b);
        }
        gemm(
            x.rows,
            self.inputs,
            self.outputs,
            &x.data,
            false,
            &p.get(self.w).data,
            false,
            &mut y.data,
            true,
        );
        Ok(y)
    }

    pub fn backward(&self, p: &ParamStore, x: &Mat, dy: &Mat, g: &mut Grads) -> Mat {
        gemm(
            self.inputs,
            x.rows,
            self.outputs,
            &x.data,
            true,
            &dy.data,
            false,
            g.get_mut(self.w),
            true,
        );
        let db = g.get_mut(self.b);
        for r in 0..dy.rows {
            for (d, v) in db.iter_mut().zip(dy.row(r)) {
                *d += v;
            }
        }
        let mut dx = Mat::zeros(x.rows, self.inputs);
        gemm(
            x.rows,
            self.outputs,
            self.inputs,
            &dy.data,
            false,
            &p.get(self.w).data,
            true,
            &mut dx.data,
            false,
        );
        dx
    }
}

pub fn relu(x: &Mat) -> Mat {
    Mat {
        rows: x.rows,
        cols: x.cols,
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Backward of [`relu`] given its output.
pub fn relu_backward(y: &Mat, dy: &Mat) -> Mat {
    Mat {
        rows: y.rows,
        cols: y.cols,
        data: y
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
            .collect(),
    }
}

/// 1-D convolution over variable-length sequences stacked row-wise. `lens`
/// gives the sequence boundaries; padding is zero and "same", so every
/// sequence keeps its length. Kernel size must be odd.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

#[derive(Clone, Debug)]
pub struct ConvCache {
    col: Mat,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(contract!("conv kernel {kernel} must be odd"));
        }
        let fan_in = kernel * in_channels;
        let w = store.register(
            &format!("{name}.w"),
            &[fan_in, out_channels],
            Init::FanInUniform { fan_in },
            true,
            rng,
        )?;
        let b = store.register(&format!("{name}.b"), &[out_channels], Init::Zeros, true, rng)?;
        Ok(Conv1d {
            w,
            b,
            in_channels,
            out_channels,
            kernel,
        })
    }

    fn check_lens(x: &Mat, lens: &[usize]) -> Result<()> {
        let total: usize = lens.iter().sum();
        if total != x.rows {
            return Err(contract!(
                "conv1d: sequence lengths sum to {total}, input has {} rows",
                x.rows
            ));
        }
        Ok(())
    }

    fn im2col(&self, x: &Mat, lens: &[usize]) -> Mat {
        let (k, cin) = (self.kernel, self.in_channels);
        let pad = k / 2;
        let mut col = Mat::zeros(x.rows, k * cin);
        let mut start = 0;
        for &len in lens {
            for pos in 0..len {
                let dst = col.row_mut(start + pos);
                for tap in 0..k {
                    let src = pos as isize + tap as isize - pad as isize;
                    if src >= 0 && (src as usize) < len {
                        dst[tap * cin..(tap + 1) * cin].copy_from_slice(x.row(start + src as usize));
                    }
                }
            }
            start += len;
        }
        col
    }

    pub fn forward(&self, p: &ParamStore, x: &Mat, lens: &[usize]) -> Result<(Mat, ConvCache)> {
        check_cols("conv1d", x, self.in_channels)?;
        Self::check_lens(x, lens)?;
        let col = self.im2col(x, lens);
        let mut y = Mat::zeros(x.rows, self.out_channels);
        let b = &p.get(self.b).data;
        for r in 0..y.rows {
            y.row_mut(r).copy_from_slice(b);
        }
        gemm(
            x.rows,
            self.kernel * self.in_channels,
            self.out_channels,
            &col.data,
            false,
            &p.get(self.w).data,
            false,
            &mut y.data,
            true,
        );
        Ok((y, ConvCache { col }))
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &ConvCache,
        lens: &[usize],
        dy: &Mat,
        g: &mut Grads,
    ) -> Mat {
        let (k, cin) = (self.kernel, self.in_channels);
        let rows = dy.rows;
        gemm(
            k * cin,
            rows,
            self.out_channels,
            &cache.col.data,
            true,
            &dy.data,
            false,
            g.get_mut(self.w),
            true,
        );
        let db = g.get_mut(self.b);
        for r in 0..rows {
            for (d, v) in db.iter_mut().zip(dy.row(r)) {
                *d += v;
            }
        }
        let mut dcol = Mat::zeros(rows, k * cin);
        gemm(
            rows,
            self.out_channels,
            k * cin,
            &dy.data,
            false,
            &p.get(self.w).data,
            true,
            &mut dcol.data,
            false,
        );
        let pad = k / 2;
        let mut dx = Mat::zeros(rows, cin);
        let mut start = 0;
        for &len in lens {
            for pos in 0..len {
                let src_row = dcol.row(start + pos);
                for tap in 0..k {
                    let src = pos as isize + tap as isize - pad as isize;
                    if src >= 0 && (src as usize) < len {
                        let dst = dx.row_mut(start + src as usize);
                        for (d, v) in dst.iter_mut().zip(&src_row[tap * cin..(tap + 1) * cin]) {
                            *d += v;
                        }
                    }
                }
            }
            start += len;
        }
        dx
    }
}

/// Running-statistics update produced by a training-mode batch norm pass.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub momentum: f64,
}

pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        let m = u.momentum;
        for (r, b) in store.get_mut(u.mean).data.iter_mut().zip(&u.batch_mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in store.get_mut(u.var).data.iter_mut().zip(&u.batch_var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

/// Per-feature batch normalization over rows.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub features: usize,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, features: usize, rng: &mut Rng) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.register(&format!("{name}.gamma"), &[features], Init::Constant(1.0), true, rng)?,
            beta: store.register(&format!("{name}.beta"), &[features], Init::Zeros, true, rng)?,
            running_mean: store.register(&format!("{name}.running_mean"), &[features], Init::Zeros, false, rng)?,
            running_var: store.register(&format!("{name}.running_var"), &[features], Init::Constant(1.0), false, rng)?,
            features,
            eps: 1e-5,
            momentum: 0.1,
        })
    }

    pub fn forward(
        &self,
        p: &ParamStore,
        x: &Mat,
        mode: Mode,
        updates: &mut Vec<BnUpdate>,
    ) -> Result<(Mat, BnCache)> {
        check_cols("batchnorm", x, self.features)?;
        let c = self.features;
        let (mean, var) = match mode {
            Mode::Eval => (
                p.get(self.running_mean).data.clone(),
                p.get(self.running_var).data.clone(),
            ),
            Mode::Train => {
                let n = x.rows.max(1) as f64;
                let mut mean = vec![0.0; c];
                for r in 0..x.rows {
                    for (m, v) in mean.iter_mut().zip(x.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; c];
                for r in 0..x.rows {
                    for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n);
                updates.push(BnUpdate {
                    mean: self.running_mean,
                    var: self.running_var,
                    batch_mean: mean.clone(),
                    batch_var: var.clone(),
                    momentum: self.momentum,
                });
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.eps)).collect();
        let gamma = &p.get(self.gamma).data;
        let beta = &p.get(self.beta).data;
        let mut xhat = Mat::zeros(x.rows, c);
        let mut y = Mat::zeros(x.rows, c);
        for r in 0..x.rows {
            let (xr, hr) = (x.row(r), xhat.row_mut(r));
            for j in 0..c {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
            let yr = y.row_mut(r);
            let hr = xhat.row(r);
            for j in 0..c {
                yr[j] = gamma[j] * hr[j] + beta[j];
            }
        }
        Ok((y, BnCache { xhat, inv_std, mode }))
    }

    pub fn backward(&self, p: &ParamStore, cache: &BnCache, dy: &Mat, g: &mut Grads) -> Mat {
        let c = self.features;
        let rows = dy.rows;
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for r in 0..rows {
            for j in 0..c {
                dgamma[j] += dy.row(r)[j] * cache.xhat.row(r)[j];
                dbeta[j] += dy.row(r)[j];
            }
        }
        for (d, v) in g.get_mut(self.gamma).iter_mut().zip(&dgamma) {
            *d += v;
        }
        for (d, v) in g.get_mut(self.beta).iter_mut().zip(&dbeta) {
            *d += v;
        }
        let gamma = &p.get(self.gamma).data;
        let mut dx = Mat::zeros(rows, c);
        match cache.mode {
            Mode::Eval => {
                for r in 0..rows {
                    for j in 0..c {
                        dx.row_mut(r)[j] = dy.row(r)[j] * gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                // dx = inv_std / n * (n dxhat - sum(dxhat) - xhat sum(dxhat xhat)),
                // with dxhat = dy gamma, so the sums are gamma * dbeta, gamma * dgamma.
                let n = rows as f64;
                for r in 0..rows {
                    for j in 0..c {
                        let dxhat = dy.row(r)[j] * gamma[j];
                        dx.row_mut(r)[j] = cache.inv_std[j] / n
                            * (n * dxhat
                                - gamma[j] * dbeta[j]
                                - cache.xhat.row(r)[j] * gamma[j] * dgamma[j]);
                    }
                }
            }
        }
        dx
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// LSTM cell whose recurrent input is the previous output: gates are
/// `x W + b` split as (input, forget, candidate, output), and
/// `c' = f * c + i * g`, `h = o * tanh(c')`. Input and output share width.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub width: usize,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Mat,
    c_prev: Mat,
    /// Activated gates, `rows x 4H` in (i, f, g, o) order.
    gates: Mat,
    tanh_c: Mat,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, rng: &mut Rng) -> Result<Self> {
        let w = store.register(
            &format!("{name}.w"),
            &[width, 4 * width],
            Init::FanInUniform { fan_in: width },
            true,
            rng,
        )?;
        let b = store.register(&format!("{name}.b"), &[4 * width], Init::Zeros, true, rng)?;
        // Forget-gate bias starts at one.
        store.get_mut(b).data[width..2 * width].fill(1.0);
        Ok(LstmCell { w, b, width })
    }

    pub fn forward(&self, p: &ParamStore, x: &Mat, c: &Mat) -> Result<(Mat, Mat, LstmCache)> {
        let h = self.width;
        check_cols("lstm input", x, h)?;
        check_cols("lstm cell", c, h)?;
        if x.rows != c.rows {
            return Err(contract!("lstm: {} input rows, {} cell rows", x.rows, c.rows));
        }
        let rows = x.rows;
        let mut gates = Mat::zeros(rows, 4 * h);
        let b = &p.get(self.b).data;
        for r in 0..rows {
            gates.row_mut(r).copy_from_slice(b);
        }
        gemm(rows, h, 4 * h, &x.data, false, &p.get(self.w).data, false, &mut gates.data, true);
        let mut c_new = Mat::zeros(rows, h);
        let mut tanh_c = Mat::zeros(rows, h);
        let mut out = Mat::zeros(rows, h);
        for r in 0..rows {
            let gr = gates.row_mut(r);
            for j in 0..h {
                gr[j] = sigmoid(gr[j]);
                gr[h + j] = sigmoid(gr[h + j]);
                gr[2 * h + j] = libm::tanh(gr[2 * h + j]);
                gr[3 * h + j] = sigmoid(gr[3 * h + j]);
            }
            let gr = gates.row(r);
            let cp = c.row(r);
            for j in 0..h {
                let cn = gr[h + j] * cp[j] + gr[j] * gr[2 * h + j];
                let tc = libm::tanh(cn);
                c_new.row_mut(r)[j] = cn;
                tanh_c.row_mut(r)[j] = tc;
                out.row_mut(r)[j] = gr[3 * h + j] * tc;
            }
        }
        Ok((
            out,
            c_new,
            LstmCache {
                x: x.clone(),
                c_prev: c.clone(),
                gates,
                tanh_c,
            },
        ))
    }

    /// Returns `(dx, dc_prev)` given gradients on the output and the new cell.
    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &LstmCache,
        dh: &Mat,
        dc_new: &Mat,
        g: &mut Grads,
    ) -> (Mat, Mat) {
        let h = self.width;
        let rows = dh.rows;
        let mut dpre = Mat::zeros(rows, 4 * h);
        let mut dc_prev = Mat::zeros(rows, h);
        for r in 0..rows {
            let gr = cache.gates.row(r);
            let tc = cache.tanh_c.row(r);
            let cp = cache.c_prev.row(r);
            let d = dpre.row_mut(r);
            for j in 0..h {
                let (i, f, gg, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                let dht = dh.row(r)[j];
                let dc = dc_new.row(r)[j] + dht * o * (1.0 - tc[j] * tc[j]);
                d[j] = dc * gg * i * (1.0 - i);
                d[h + j] = dc * cp[j] * f * (1.0 - f);
                d[2 * h + j] = dc * i * (1.0 - gg * gg);
                d[3 * h + j] = dht * tc[j] * o * (1.0 - o);
                dc_prev.row_mut(r)[j] = dc * f;
            }
        }
        gemm(h, rows, 4 * h, &cache.x.data, true, &dpre.data, false, g.get_mut(self.w), true);
        let db = g.get_mut(self.b);
        for r in 0..rows {
            for (a, v) in db.iter_mut().zip(dpre.row(r)) {
                *a += v;
            }
        }
        let mut dx = Mat::zeros(rows, h);
        gemm(rows, 4 * h, h, &dpre.data, false, &p.get(self.w).data, true, &mut dx.data, false);
        (dx, dc_prev)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    Max,
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    lens: Vec<usize>,
    argmax: Vec<usize>,
    kind: Pooling,
    cols: usize,
}

/// Pools each sequence (consecutive `lens` rows) to one row.
pub fn pool(x: &Mat, lens: &[usize], kind: Pooling) -> Result<(Mat, PoolCache)> {
    let total: usize = lens.iter().sum();
    if total != x.rows || lens.contains(&0) {
        return Err(contract!("pool: lengths {lens:?} do not tile {} rows", x.rows));
    }
    let mut y = Mat::zeros(lens.len(), x.cols);
    let mut argmax = Vec::new();
    let mut start = 0;
    for (s, &len) in lens.iter().enumerate() {
        let out = y.row_mut(s);
        match kind {
            Pooling::Mean => {
                for r in start..start + len {
                    for (o, v) in out.iter_mut().zip(x.row(r)) {
                        *o += v;
                    }
                }
                out.iter_mut().for_each(|o| *o /= len as f64);
            }
            Pooling::Max => {
                for j in 0..x.cols {
                    let best = (start..start + len)
                        .max_by(|&a, &b| x.row(a)[j].total_cmp(&x.row(b)[j]).then(b.cmp(&a)))
                        .unwrap();
                    out[j] = x.row(best)[j];
                    argmax.push(best);
                }
            }
        }
        start += len;
    }
    Ok((
        y,
        PoolCache {
            lens: lens.to_vec(),
            argmax,
            kind,
            cols: x.cols,
        },
    ))
}

pub fn pool_backward(cache: &PoolCache, dy: &Mat) -> Mat {
    let total = cache.lens.iter().sum();
    let mut dx = Mat::zeros(total, cache.cols);
    let mut start = 0;
    for (s, &len) in cache.lens.iter().enumerate() {
        match cache.kind {
            Pooling::Mean => {
                for r in start..start + len {
                    for (d, v) in dx.row_mut(r).iter_mut().zip(dy.row(s)) {
                        *d = v / len as f64;
                    }
                }
            }
            Pooling::Max => {
                for j in 0..cache.cols {
                    let r = cache.argmax[s * cache.cols + j];
                    dx.row_mut(r)[j] += dy.row(s)[j];
                }
            }
        }
        start += len;
    }
    dx
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub const LOG_CLAMP: f64 = 1e-12;

/// Cross entropy `-sum(target * ln p)` with `p` clamped at [`LOG_CLAMP`].
/// The flag reports whether clamping touched a supported target.
pub fn cross_entropy(p: &[f64], target: &[f64]) -> (f64, bool) {
    let mut clamped = false;
    let mut loss = 0.0;
    for (&pi, &ti) in p.iter().zip(target) {
        if ti != 0.0 {
            if pi < LOG_CLAMP {
                clamped = true;
            }
            loss -= ti * libm::log(pi.max(LOG_CLAMP));
        }
    }
    (loss, clamped)
}

/// Gradient of `cross_entropy(softmax(logits), target)` w.r.t. the logits
/// for a target that sums to one.
pub fn softmax_cross_entropy_grad(p: &[f64], target: &[f64]) -> Vec<f64> {
    p.iter().zip(target).map(|(a, b)| a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_dense_passes_input_through() {
        let mut store = ParamStore::new();
        let mut r = rng::rng(0);
        let d = Dense::new(&mut store, "d", 3, 3, true, &mut r).unwrap();
        let w = &mut store.get_mut(d.w).data;
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Mat::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        assert_eq!(d.forward(&store, &x).unwrap(), x);
    }

    #[test]
    fn dense_reports_both_shapes() {
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", 3, 2, false, &mut rng::rng(0)).unwrap();
        let err = d.forward(&store, &Mat::zeros(1, 4)).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("1x4") && msg.contains('3'), "{msg}");
    }

    #[test]
    fn conv_same_padding_keeps_length() {
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 2, 3, 7, &mut rng::rng(1)).unwrap();
        let (y, _) = conv.forward(&store, &Mat::zeros(16, 2), &[16]).unwrap();
        assert_eq!(y.shape(), (16, 3));
        assert!(Conv1d::new(&mut store, "e", 2, 3, 4, &mut rng::rng(1)).is_err());
        assert!(conv.forward(&store, &Mat::zeros(16, 2), &[15]).is_err());
    }

    #[test]
    fn softmax_uniform_and_normalized() {
        let p = softmax(&[2.0; 5]);
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        let q = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn softmax_ce_grad_is_p_minus_target() {
        let p = softmax(&[0.3, -1.2, 2.0]);
        let g = softmax_cross_entropy_grad(&p, &[0.0, 1.0, 0.0]);
        assert_eq!(g, vec![p[0], p[1] - 1.0, p[2]]);
        let (l, clamped) = cross_entropy(&[0.0, 1.0], &[1.0, 0.0]);
        assert!(clamped);
        assert!((l + libm::log(LOG_CLAMP)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_eval_starts_as_identity() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2, &mut rng::rng(0)).unwrap();
        let x = Mat::from_vec(1, 2, vec![3.0, -4.0]).unwrap();
        let (y, _) = bn.forward(&store, &x, Mode::Eval, &mut Vec::new()).unwrap();
        for (a, b) in y.data.iter().zip(&x.data) {
            assert!((a - b / libm::sqrt(1.0 + 1e-5)).abs() < 1e-12);
        }
        let mut ups = Vec::new();
        let x = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        bn.forward(&store, &x, Mode::Train, &mut ups).unwrap();
        apply_bn_updates(&mut store, &ups);
        assert!((store.get(bn.running_mean).data[0] - 0.2).abs() < 1e-12);
        assert!((store.get(bn.running_var).data[1] - (0.9 + 0.1 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn pooling_mean_and_max() {
        let x = Mat::from_vec(3, 1, vec![1.0, 5.0, 3.0]).unwrap();
        let (m, _) = pool(&x, &[2, 1], Pooling::Mean).unwrap();
        assert_eq!(m.data, vec![3.0, 3.0]);
        let (mx, cache) = pool(&x, &[3], Pooling::Max).unwrap();
        assert_eq!(mx.data, vec![5.0]);
        let dx = pool_backward(&cache, &Mat::from_vec(1, 1, vec![2.0]).unwrap());
        assert_eq!(dx.data, vec![0.0, 2.0, 0.0]);
    }
}
