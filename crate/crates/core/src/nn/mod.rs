//! Dense ReLU network trained on the relative squared error.
//!
//! Batches are row-major: a batch of `B` inputs is a `B x width` slice.
//! Weights of layer `l` form a row-major `out x in` matrix.

mod adam;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamState, Schedule};
pub use train::{evaluate_loss, train, EpochRecord, TrainOptions, TrainOutcome};

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};

/// Layer widths from input to output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    widths: Vec<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config(
                "architecture needs at least an input and an output width",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::config(format!(
                "architecture widths must be positive: {widths:?}"
            )));
        }
        Ok(Self { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_len(&self) -> usize {
        self.widths[0]
    }

    pub fn output_len(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of affine layers.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Checks that the network maps `input_len` values to `output_len` values.
    pub fn expect_io(&self, input_len: usize, output_len: usize) -> Result<()> {
        if self.input_len() != input_len || self.output_len() != output_len {
            return Err(Error::ArchitectureMismatch {
                expected: vec![input_len, output_len],
                found: vec![self.input_len(), self.output_len()],
            });
        }
        Ok(())
    }
}

/// Two layers per bridged mesh level, halving the width every second
/// layer, followed by three layers of the label width.
///
/// Widths that would fall below `label_len` are clamped to it.
pub fn default_architecture(r: usize, label_len: usize, gap_levels: u32) -> Result<Architecture> {
    if gap_levels == 0 {
        return Err(Error::config("gap_levels must be at least 1"));
    }
    let mut widths = vec![r];
    for j in 1..2 * gap_levels as usize {
        widths.push((r >> (j / 2)).max(label_len));
    }
    widths.extend([label_len; 3]);
    Architecture::new(widths)
}

/// All weights and biases in one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParameters {
    arch: Architecture,
    data: Vec<f64>,
    /// Start of the weights and of the biases of each layer.
    offsets: Vec<(usize, usize)>,
}

fn offsets(arch: &Architecture) -> Vec<(usize, usize)> {
    let mut pos = 0;
    arch.widths
        .windows(2)
        .map(|w| {
            let o = (pos, pos + w[0] * w[1]);
            pos += w[0] * w[1] + w[1];
            o
        })
        .collect()
}

/// `C = A B + beta C` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || ((m - 1) * rsa + (k - 1) * csa < a.len() && (k - 1) * rsb + (n - 1) * csb < b.len()));
    assert!(c.len() >= m * n);
    // SAFETY: the bounds of all three operands are asserted above; C is a
    // dense row-major m x n block that does not alias A or B.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Loss and gradient of one batch.
#[derive(Clone, Debug)]
pub struct LossGrad {
    /// Mean relative loss over the pairs that were used.
    pub loss: f64,
    pub grad: Vec<f64>,
    pub used: usize,
    /// Pairs skipped because their label is zero.
    pub skipped: usize,
}

impl MlpParameters {
    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            offsets: offsets(arch),
            data: vec![0.0; arch.num_params()],
            arch: arch.clone(),
        }
    }

    /// Weights uniform on `[-L, L]` with `L = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init_glorot<R: Rng>(arch: &Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        for l in 0..arch.num_layers() {
            let (fan_in, fan_out) = (arch.widths[l], arch.widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w0, b0) = p.offsets[l];
            for v in &mut p.data[w0..b0] {
                *v = rng.gen_range(-limit..=limit);
            }
        }
        p
    }

    pub fn from_flat(arch: &Architecture, data: Vec<f64>) -> Result<Self> {
        if data.len() != arch.num_params() {
            return Err(Error::config(format!(
                "parameter vector has length {}, architecture needs {}",
                data.len(),
                arch.num_params()
            )));
        }
        Ok(Self {
            offsets: offsets(arch),
            data,
            arch: arch.clone(),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Weights and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (w0, b0) = self.offsets[l];
        let n_out = self.arch.widths[l + 1];
        (&self.data[w0..b0], &self.data[b0..b0 + n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (w0, b0) = self.offsets[l];
        let n_out = self.arch.widths[l + 1];
        let (w, rest) = self.data[w0..b0 + n_out].split_at_mut(b0 - w0);
        (w, rest)
    }

    /// Index ranges of the weights and of the biases of layer `l` in the flat vector.
    pub fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (w0, b0) = self.offsets[l];
        (w0..b0, b0..b0 + self.arch.widths[l + 1])
    }

    fn check_batch(&self, x: &[f64], batch: usize) {
        assert_eq!(
            x.len(),
            batch * self.arch.input_len(),
            "input batch does not match the network width"
        );
    }

    /// Outputs of every layer; entry 0 is the input itself.
    fn activations(&self, x: &[f64], batch: usize) -> Vec<Vec<f64>> {
        self.check_batch(x, batch);
        let mut acts = vec![x.to_vec()];
        let last = self.arch.num_layers() - 1;
        for l in 0..=last {
            let (n_in, n_out) = (self.arch.widths[l], self.arch.widths[l + 1]);
            let (w, b) = self.layer(l);
            let mut z = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            gemm(batch, n_in, n_out, &acts[l], (n_in, 1), w, (1, n_in), 1.0, &mut z);
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Network outputs for a batch of inputs.
    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        self.activations(x, batch).pop().unwrap()
    }

    /// Mean of `0.5 |f(x) - y|^2 / |y|^2` over pairs with nonzero `y`, and its gradient.
    pub fn loss_and_grad(&self, x: &[f64], y: &[f64], batch: usize) -> LossGrad {
        let n_out = self.arch.output_len();
        assert_eq!(y.len(), batch * n_out, "label batch does not match the network width");
        let acts = self.activations(x, batch);
        let out = acts.last().unwrap();
        let mut delta = vec![0.0; batch * n_out];
        let mut total = 0.0;
        let mut used = 0;
        let mut scales = vec![0.0; batch];
        for p in 0..batch {
            let yp = &y[p * n_out..(p + 1) * n_out];
            let yy: f64 = yp.iter().map(|v| v * v).sum();
            if yy == 0.0 {
                continue;
            }
            used += 1;
            scales[p] = 1.0 / yy;
            let op = &out[p * n_out..(p + 1) * n_out];
            let sq: f64 = op.iter().zip(yp).map(|(a, b)| (a - b) * (a - b)).sum();
            total += 0.5 * sq / yy;
        }
        let mut grad = vec![0.0; self.data.len()];
        if used == 0 {
            return LossGrad {
                loss: 0.0,
                grad,
                used,
                skipped: batch,
            };
        }
        let inv_n = 1.0 / used as f64;
        for p in 0..batch {
            if scales[p] == 0.0 {
                continue;
            }
            let s = scales[p] * inv_n;
            for k in p * n_out..(p + 1) * n_out {
                delta[k] = (out[k] - y[k]) * s;
            }
        }

        for l in (0..self.arch.num_layers()).rev() {
            let (n_in, n_out) = (self.arch.widths[l], self.arch.widths[l + 1]);
            let (wr, br) = self.layer_ranges(l);
            {
                let gw = &mut grad[wr];
                gemm(n_out, batch, n_in, &delta, (1, n_out), &acts[l], (n_in, 1), 0.0, gw);
            }
            {
                let gb = &mut grad[br];
                for row in delta.chunks_exact(n_out) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, &delta, (n_out, 1), w, (n_in, 1), 0.0, &mut prev);
            for (d, a) in prev.iter_mut().zip(&acts[l]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            delta = prev;
        }

        LossGrad {
            loss: total * inv_n,
            grad,
            used,
            skipped: batch - used,
        }
    }

    /// Sum of per-pair losses and the number of pairs with nonzero label.
    pub fn loss_sum(&self, x: &[f64], y: &[f64], batch: usize) -> (f64, usize) {
        let n_out = self.arch.output_len();
        let out = self.forward(x, batch);
        let mut total = 0.0;
        let mut used = 0;
        for (op, yp) in out.chunks_exact(n_out).zip(y.chunks_exact(n_out)) {
            let yy: f64 = yp.iter().map(|v| v * v).sum();
            if yy == 0.0 {
                continue;
            }
            used += 1;
            total += 0.5 * op.iter().zip(yp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / yy;
        }
        (total, used)
    }

    /// Writes a checkpoint file.
    pub fn save(&self, path: &Path, epochs_completed: u32) -> Result<()> {
        let mut w = LeWriter::new(BufWriter::new(File::create(path)?));
        w.bytes(CHECKPOINT_MAGIC)?;
        w.u32(CHECKPOINT_VERSION)?;
        w.u32(epochs_completed)?;
        w.u32(self.arch.widths.len() as u32)?;
        for &width in &self.arch.widths {
            w.u32(width as u32)?;
        }
        w.f64s(&self.data)?;
        w.into_inner().flush()?;
        Ok(())
    }

    /// Reads a checkpoint; returns the parameters and the completed epochs.
    pub fn load(path: &Path) -> Result<(Self, u32)> {
        let mut r = LeReader::new(BufReader::new(File::open(path)?));
        r.magic(CHECKPOINT_MAGIC)?;
        let off = r.offset();
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(off, format!("unsupported checkpoint version {version}")));
        }
        let epochs = r.u32("epoch count")?;
        let off = r.offset();
        let n = r.u32("layer count")? as usize;
        if !(2..=1024).contains(&n) {
            return Err(Error::format(off, format!("implausible width count {n}")));
        }
        let mut widths = Vec::with_capacity(n);
        for _ in 0..n {
            let off = r.offset();
            let width = r.u32("width")? as usize;
            if width == 0 {
                return Err(Error::format(off, "zero layer width"));
            }
            widths.push(width);
        }
        let arch = Architecture::new(widths)?;
        let mut data = vec![0.0; arch.num_params()];
        r.f64s(&mut data, "parameters")?;
        r.expect_eof()?;
        Ok((Self::from_flat(&arch, data)?, epochs))
    }

    /// Loads a checkpoint and checks its architecture.
    pub fn load_expecting(path: &Path, arch: &Architecture) -> Result<(Self, u32)> {
        let (p, e) = Self::load(path)?;
        if p.architecture() != arch {
            return Err(Error::ArchitectureMismatch {
                expected: arch.widths.clone(),
                found: p.arch.widths.clone(),
            });
        }
        Ok((p, e))
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LODN";
const CHECKPOINT_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn paper_architecture() {
        let a = default_architecture(1600, 144, 3).unwrap();
        assert_eq!(a.widths(), &[1600, 1600, 800, 800, 400, 400, 144, 144, 144]);
        let direct: usize = a.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        assert_eq!(a.num_params(), direct);
        assert_eq!(a.num_params(), 5_063_504);
    }

    #[test]
    fn desk_architecture() {
        let a = default_architecture(400, 144, 2).unwrap();
        assert_eq!(a.widths(), &[400, 400, 200, 200, 144, 144, 144]);
    }

    #[test]
    fn degenerate_architecture() {
        let a = default_architecture(50, 50, 1).unwrap();
        assert_eq!(a.widths(), &[50; 5]);
        assert_eq!(a.num_params(), 4 * (50 * 50 + 50));
        let clamped = default_architecture(100, 80, 3).unwrap();
        assert!(clamped.widths().iter().all(|&w| w >= 80));
        assert!(default_architecture(10, 4, 0).unwrap_err().is_config());
    }

    #[test]
    fn glorot_bounds_and_variance() {
        let a = Architecture::new(vec![400, 400]).unwrap();
        let p = MlpParameters::init_glorot(&a, &mut ChaCha8Rng::seed_from_u64(1));
        let l = (6.0f64 / 800.0).sqrt();
        let (w, b) = p.layer(0);
        assert!(w.iter().all(|v| v.abs() <= l));
        assert!(b.iter().all(|&v| v == 0.0));
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var / (l * l / 3.0) - 1.0).abs() < 0.1);
        let q = MlpParameters::init_glorot(&a, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(p, q);
    }

    #[test]
    fn bias_only_output() {
        let a = Architecture::new(vec![3, 4, 2]).unwrap();
        let mut p = MlpParameters::zeros(&a);
        p.layer_mut(1).1.copy_from_slice(&[1.5, -2.0]);
        let out = p.forward(&[1.0, 2.0, 3.0, -1.0, 0.0, 4.0], 2);
        assert_eq!(out, vec![1.5, -2.0, 1.5, -2.0]);
    }

    #[test]
    fn single_affine_layer() {
        let a = Architecture::new(vec![2, 3]).unwrap();
        let mut p = MlpParameters::zeros(&a);
        p.as_mut_slice()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, 0.25, -1.0]);
        let out = p.forward(&[1.0, 1.0], 1);
        assert_eq!(out, vec![3.5, 7.25, 10.0]);
    }

    #[test]
    fn bias_gradient_single_pair() {
        let a = Architecture::new(vec![2, 3]).unwrap();
        let mut p = MlpParameters::zeros(&a);
        p.layer_mut(0).1.copy_from_slice(&[1.0, 2.0, 3.0]);
        let y = [2.0, 0.0, 1.0];
        let g = p.loss_and_grad(&[0.3, -0.7], &y, 1);
        let yy = 5.0;
        let expected = [(1.0 - 2.0) / yy, 2.0 / yy, 2.0 / yy];
        let (_, br) = p.layer_ranges(0);
        for (a, b) in g.grad[br].iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((g.loss - 0.5 * 9.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn zero_label_skipped() {
        let a = Architecture::new(vec![2, 2]).unwrap();
        let p = MlpParameters::zeros(&a);
        let g = p.loss_and_grad(&[1.0, 1.0, 1.0, 1.0], &[0.0, 0.0, 1.0, 0.0], 2);
        assert_eq!((g.used, g.skipped), (1, 1));
        assert!((g.loss - 0.5).abs() < 1e-15);
    }
}
