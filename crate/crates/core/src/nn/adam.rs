use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};

/// Epoch count, batch size and piecewise-constant step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_step: f64,
    pub final_step: f64,
    /// First epoch (0-based) that uses `final_step`.
    pub switch_epoch: usize,
}

impl Schedule {
    pub fn step_size(&self, epoch: usize) -> f64 {
        if epoch < self.switch_epoch {
            self.initial_step
        } else {
            self.final_step
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        for (name, v) in [("initial_step", self.initial_step), ("final_step", self.final_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Moment estimates of the ADAM optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"LODA";
const VERSION: u32 = 1;

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update of `params` with step size `lr`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = LeWriter::new(BufWriter::new(File::create(path)?));
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.u64(self.step)?;
        w.u64(self.m.len() as u64)?;
        w.f64s(&[self.beta1, self.beta2, self.eps])?;
        w.f64s(&self.m)?;
        w.f64s(&self.v)?;
        w.into_inner().flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = LeReader::new(BufReader::new(File::open(path)?));
        r.magic(MAGIC)?;
        let off = r.offset();
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(
                off,
                format!("unsupported optimizer state version {version}"),
            ));
        }
        let step = r.u64("step")?;
        let off = r.offset();
        let n = r.u64("length")?;
        if n > 1 << 34 {
            return Err(Error::format(off, format!("implausible parameter count {n}")));
        }
        let mut hyper = [0.0; 3];
        r.f64s(&mut hyper, "hyperparameters")?;
        let mut m = vec![0.0; n as usize];
        let mut v = vec![0.0; n as usize];
        r.f64s(&mut m, "first moments")?;
        r.f64s(&mut v, "second moments")?;
        r.expect_eof()?;
        Ok(Self {
            beta1: hyper[0],
            beta2: hyper[1],
            eps: hyper[2],
            step,
            m,
            v,
        })
    }
}
