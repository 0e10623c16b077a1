//! Offline data generation: sampled coefficients, restricted inputs and
//! flattened local effective matrices, split per family into train,
//! validation and test files.
//!
//! Dataset files start with a 24-byte header (`"LODD"`, version `u32`,
//! input length `u32`, label length `u32`, record count `u64`), followed by
//! fixed-size records: family code, sample index and element as `u32`, then
//! the input and the label as little-endian `f64`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{LeReader, LeWriter};
use crate::coeff::{
    sample_level, sample_multiscale, Coefficient, Interval, StreamSeed, MULTISCALE_FAMILY_CODE, UNIT_FIVE,
};
use crate::error::{Error, Result};
use crate::lod::LodContext;

const MAGIC: &[u8; 4] = b"LODD";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 24;
const META_LEN: u64 = 12;
/// Files up to this size are read into memory once.
const IN_MEMORY_LIMIT: u64 = 2 << 30;

/// A coefficient family: piecewise constant on level `k`, or the multiscale
/// mean over all levels up to the fine level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Family {
    Level(u32),
    Multiscale,
}

impl Family {
    pub fn code(&self) -> u32 {
        match self {
            Family::Level(k) => *k,
            Family::Multiscale => MULTISCALE_FAMILY_CODE as u32,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            c if c == MULTISCALE_FAMILY_CODE as u32 => Some(Family::Multiscale),
            c if c < 0xFE => Some(Family::Level(c)),
            _ => None,
        }
    }

    /// Sample `index` of this family at `eps_level`.
    pub fn sample(&self, eps_level: u32, interval: Interval, master: u64, index: u64) -> Result<Coefficient> {
        let seed = StreamSeed::new(master, self.code() as u8, index);
        match *self {
            Family::Level(k) => sample_level(k, eps_level, interval, &mut seed.level_rng(k)),
            Family::Multiscale => sample_multiscale(eps_level, eps_level, interval, &seed),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Level(k) => write!(f, "{k}"),
            Family::Multiscale => write!(f, "ms"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ms" {
            return Ok(Family::Multiscale);
        }
        s.parse::<u32>()
            .ok()
            .filter(|&k| k < 0xFE)
            .map(Family::Level)
            .ok_or_else(|| Error::config(format!("families: unknown family {s:?}")))
    }
}

impl TryFrom<String> for Family {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn file_name(&self) -> &'static str {
        match self {
            Split::Train => "train.lodd",
            Split::Val => "val.lodd",
            Split::Test => "test.lodd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub coarse_level: u32,
    pub eps_level: u32,
    pub layers: usize,
    pub families: Vec<Family>,
    pub samples_per_family: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
    #[serde(default = "default_interval")]
    pub interval: Interval,
}

fn default_interval() -> Interval {
    UNIT_FIVE
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_level <= self.coarse_level {
            return Err(Error::config(format!(
                "eps_level ({}) must exceed coarse_level ({})",
                self.eps_level, self.coarse_level
            )));
        }
        LodContext::new(self.coarse_level, self.eps_level, self.layers)?;
        if self.families.is_empty() {
            return Err(Error::config("families: at least one family is required"));
        }
        for f in &self.families {
            if let Family::Level(k) = f {
                if *k > self.eps_level {
                    return Err(Error::config(format!(
                        "families: level {k} exceeds eps_level {}",
                        self.eps_level
                    )));
                }
            }
        }
        let mut seen = self.families.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.families.len() {
            return Err(Error::config("families: duplicate entries"));
        }
        if self.samples_per_family == 0 {
            return Err(Error::config("samples_per_family must be positive"));
        }
        if self.split.iter().any(|&s| !(0.0..=1.0).contains(&s)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(format!(
                "split: fractions {:?} must be in [0, 1] and sum to 1",
                self.split
            )));
        }
        self.interval.validate()
    }

    /// Samples per family in train, validation and test.
    pub fn split_counts(&self) -> [usize; 3] {
        let n = self.samples_per_family;
        let train = ((self.split[0] * n as f64).round() as usize).min(n);
        let val = ((self.split[1] * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }

    /// Split of sample index `i`.
    pub fn split_of(&self, i: usize) -> Split {
        let [train, val, _] = self.split_counts();
        if i < train {
            Split::Train
        } else if i < train + val {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn context(&self) -> Result<LodContext> {
        LodContext::new(self.coarse_level, self.eps_level, self.layers)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: u64,
    pub val: u64,
    pub test: u64,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> u64 {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// JSON sidecar describing a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub input_len: usize,
    pub label_len: usize,
    pub elements_per_sample: usize,
    /// Number of pairs per split.
    pub pairs: SplitCounts,
    /// Number of coefficient samples per split.
    pub samples: SplitCounts,
}

impl Manifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(Self::FILE_NAME))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordMeta {
    pub family: u32,
    pub sample: u32,
    pub element: u32,
}

/// Inputs and labels of one sample, in element order.
struct SampleRecords {
    family: Family,
    sample: usize,
    inputs: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
}

fn compute_sample(cfg: &DatasetConfig, ctx: &LodContext, family: Family, sample: usize) -> Result<SampleRecords> {
    let wrap = |element: usize, e: Error| Error::Sample {
        family: family.to_string(),
        sample,
        element,
        source: Box::new(e),
    };
    let coeff = family
        .sample(cfg.eps_level, cfg.interval, cfg.seed, sample as u64)
        .map_err(|e| wrap(0, e))?;
    let mut inputs = Vec::with_capacity(ctx.num_elements());
    let mut labels = Vec::with_capacity(ctx.num_elements());
    for (element, input) in ctx
        .restrictions(&coeff)
        .map_err(|e| wrap(0, e))?
        .into_iter()
        .enumerate()
    {
        let patch = ctx.patch(element).map_err(|e| wrap(element, e))?;
        let local = ctx
            .local_matrix_from_values(&patch, &input)
            .map_err(|e| wrap(element, e))?;
        let label = local.flatten();
        check_label(&patch, &label).map_err(|e| wrap(element, e))?;
        inputs.push(input);
        labels.push(label);
    }
    Ok(SampleRecords {
        family,
        sample,
        inputs,
        labels,
    })
}

/// Labels must be finite and exactly zero on rows and columns without a
/// global counterpart.
fn check_label(patch: &crate::mesh::Patch, label: &[f64]) -> Result<()> {
    let n = patch.num_nodes();
    for j in 0..4 {
        for i in 0..n {
            let v = label[j * n + i];
            if !v.is_finite() {
                return Err(Error::SolverFailure {
                    reason: "non-finite label entry".into(),
                    residual: v,
                });
            }
            if (patch.pi()[i].is_none() || patch.phi()[j].is_none()) && v != 0.0 {
                return Err(Error::SolverFailure {
                    reason: format!("label entry ({i}, {j}) off the interior mesh is {v:e}"),
                    residual: v,
                });
            }
        }
    }
    Ok(())
}

/// Progress after each written sample.
#[derive(Clone, Copy, Debug)]
pub struct Progress {
    pub samples_done: usize,
    pub samples_total: usize,
}

/// Generates the three dataset files and the manifest in `out_dir`.
pub fn generate(cfg: &DatasetConfig, out_dir: &Path, mut progress: impl FnMut(Progress)) -> Result<Manifest> {
    cfg.validate()?;
    let ctx = cfg.context()?;
    fs::create_dir_all(out_dir)?;
    let per_split = cfg.split_counts();
    let nfam = cfg.families.len() as u64;
    let elements = ctx.num_elements() as u64;
    let samples = SplitCounts {
        train: nfam * per_split[0] as u64,
        val: nfam * per_split[1] as u64,
        test: nfam * per_split[2] as u64,
    };
    let pairs = SplitCounts {
        train: samples.train * elements,
        val: samples.val * elements,
        test: samples.test * elements,
    };

    let mut writers = Vec::new();
    for split in Split::ALL {
        let mut w = LeWriter::new(BufWriter::new(File::create(out_dir.join(split.file_name()))?));
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.u32(ctx.input_len() as u32)?;
        w.u32(ctx.label_len() as u32)?;
        w.u64(pairs.get(split))?;
        writers.push(w);
    }

    let jobs: Vec<(Family, usize)> = cfg
        .families
        .iter()
        .flat_map(|&f| (0..cfg.samples_per_family).map(move |i| (f, i)))
        .collect();
    let total = jobs.len();
    let chunk = (2 * rayon::current_num_threads()).max(1);
    let mut done = 0;
    for batch in jobs.chunks(chunk) {
        let results: Vec<SampleRecords> = batch
            .par_iter()
            .map(|&(f, i)| compute_sample(cfg, &ctx, f, i))
            .collect::<Result<_>>()?;
        for rec in results {
            let w = &mut writers[cfg.split_of(rec.sample) as usize];
            for (element, (input, label)) in rec.inputs.iter().zip(&rec.labels).enumerate() {
                w.u32(rec.family.code())?;
                w.u32(rec.sample as u32)?;
                w.u32(element as u32)?;
                w.f64s(input)?;
                w.f64s(label)?;
            }
            done += 1;
            progress(Progress {
                samples_done: done,
                samples_total: total,
            });
        }
    }
    for w in writers {
        w.into_inner().flush()?;
    }

    let manifest = Manifest {
        config: cfg.clone(),
        input_len: ctx.input_len(),
        label_len: ctx.label_len(),
        elements_per_sample: ctx.num_elements(),
        pairs,
        samples,
    };
    fs::write(
        out_dir.join(Manifest::FILE_NAME),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// A minibatch in row-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub meta: Vec<RecordMeta>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }
}

enum Source {
    Memory(Vec<u8>),
    Disk(PathBuf),
}

/// An opened dataset file.
pub struct Dataset {
    input_len: usize,
    label_len: usize,
    count: usize,
    source: Source,
}

impl Dataset {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let size = file.metadata()?.len();
        let mut r = LeReader::new(BufReader::new(file));
        r.magic(MAGIC)?;
        let off = r.offset();
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(off, format!("unsupported version {version}")));
        }
        let input_len = r.u32("input length")? as usize;
        let label_len = r.u32("label length")? as usize;
        let count = r.u64("record count")?;
        let record = META_LEN + 8 * (input_len + label_len) as u64;
        let expected = HEADER_LEN + count * record;
        if size != expected {
            let offset = if size < expected {
                HEADER_LEN + (size.saturating_sub(HEADER_LEN) / record) * record
            } else {
                expected
            };
            return Err(Error::format(
                offset,
                format!("file has {size} bytes, header implies {expected}"),
            ));
        }
        let source = if size <= IN_MEMORY_LIMIT {
            let mut bytes = Vec::with_capacity(size as usize);
            File::open(path)?.read_to_end(&mut bytes)?;
            Source::Memory(bytes)
        } else {
            Source::Disk(path.to_path_buf())
        };
        Ok(Self {
            input_len,
            label_len,
            count: count as usize,
            source,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn label_len(&self) -> usize {
        self.label_len
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn record_len(&self) -> usize {
        META_LEN as usize + 8 * (self.input_len + self.label_len)
    }

    fn decode(&self, bytes: &[u8], batch: &mut Batch) {
        let u = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
        batch.meta.push(RecordMeta {
            family: u(0),
            sample: u(1),
            element: u(2),
        });
        let floats = bytes[META_LEN as usize..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for (k, v) in floats.enumerate() {
            if k < self.input_len {
                batch.inputs.push(v);
            } else {
                batch.labels.push(v);
            }
        }
    }

    /// Reads the given records, in order, into one batch.
    pub fn read(&self, indices: &[usize]) -> Result<Batch> {
        let rl = self.record_len();
        let mut batch = Batch {
            inputs: Vec::with_capacity(indices.len() * self.input_len),
            labels: Vec::with_capacity(indices.len() * self.label_len),
            meta: Vec::with_capacity(indices.len()),
        };
        let mut file = match &self.source {
            Source::Disk(p) => Some(File::open(p)?),
            Source::Memory(_) => None,
        };
        let mut buf = vec![0u8; rl];
        for &i in indices {
            if i >= self.count {
                return Err(Error::config(format!("record {i} out of range ({})", self.count)));
            }
            let start = HEADER_LEN as usize + i * rl;
            match (&self.source, file.as_mut()) {
                (Source::Memory(bytes), _) => self.decode(&bytes[start..start + rl], &mut batch),
                (Source::Disk(_), Some(f)) => {
                    f.seek(SeekFrom::Start(start as u64))?;
                    f.read_exact(&mut buf)?;
                    self.decode(&buf, &mut batch);
                }
                _ => unreachable!(),
            }
        }
        Ok(batch)
    }

    /// Record order of one epoch: identity, or a permutation fixed by `seed`.
    pub fn order(&self, seed: Option<u64>) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.count).collect();
        if let Some(seed) = seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        order
    }

    /// Minibatches covering every record exactly once.
    pub fn batches(&self, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Batches<'_>> {
        if batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        Ok(Batches {
            data: self,
            order: self.order(shuffle_seed),
            batch_size,
            pos: 0,
        })
    }
}

pub struct Batches<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Batches<'_> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for Batches<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.data.read(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }
}
