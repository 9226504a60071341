//! Synthetic survival data from a weighted DAG, censoring, time
//! discretization, splits, and the dataset CSV format.
//!
//! Generation follows the structural equations: a covariate node is a
//! weighted sum of `cos(parent + 1)` terms plus standard normal noise, and
//! the target node is `max(0, c * exp(sum of weighted cos terms) + z_t)`
//! with `z_t` drawn from a configurable normal. Nodes are sampled in
//! topological order, so a value depends only on its ancestors' draws.

use crate::graph::{Dag, GraphError};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset columns disagree: {context} has length {got}, expected {expected}")]
    LengthMismatch {
        context: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("instance {index}: event must be 0 or 1, got {value}")]
    BadEvent { index: usize, value: u8 },
    #[error("instance {index}: raw time {value} is not finite and non-negative")]
    BadTime { index: usize, value: f64 },
    #[error("instance {index}: time bin {bin} exceeds horizon {horizon}")]
    BinBeyondHorizon {
        index: usize,
        bin: usize,
        horizon: usize,
    },
    #[error("all raw times are equal ({value}); discretization range is degenerate")]
    DegenerateRange { value: f64 },
    #[error("split too small: {part} would receive {size} instances")]
    TooSmall { part: &'static str, size: usize },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("cannot censor {requested} instances: only {available} have positive times")]
    CensorInfeasible { requested: usize, available: usize },
    #[error("generated time for sample {sample} is not finite; check edge weights")]
    NonFiniteSample { sample: usize },
    #[error("graph failure: {0}")]
    Graph(#[from] GraphError),
    #[error("dataset file {path}, line {line}: {problem}")]
    Parse {
        path: String,
        line: u64,
        problem: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A right-censored survival dataset. `raw_times` are continuous follow-up
/// times; `time_bins` are their discretized indices in `0..=horizon`, all
/// zero (with horizon zero) until [`discretize`] assigns them. An event flag
/// of 1 means the event was observed, 0 means censored.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    covariates: Array2<f64>,
    raw_times: Array1<f64>,
    time_bins: Vec<usize>,
    events: Vec<u8>,
    horizon: usize,
}

impl SurvivalDataset {
    pub fn new(
        covariates: Array2<f64>,
        raw_times: Array1<f64>,
        time_bins: Vec<usize>,
        events: Vec<u8>,
        horizon: usize,
    ) -> Result<Self, SynthError> {
        let n = covariates.nrows();
        if n == 0 || covariates.ncols() == 0 {
            return Err(SynthError::EmptyDataset);
        }
        for (context, got) in [
            ("raw_times", raw_times.len()),
            ("time_bins", time_bins.len()),
            ("events", events.len()),
        ] {
            if got != n {
                return Err(SynthError::LengthMismatch {
                    context,
                    got,
                    expected: n,
                });
            }
        }
        for (index, &value) in raw_times.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(SynthError::BadTime { index, value });
            }
        }
        for (index, &value) in events.iter().enumerate() {
            if value > 1 {
                return Err(SynthError::BadEvent { index, value });
            }
        }
        for (index, &bin) in time_bins.iter().enumerate() {
            if bin > horizon {
                return Err(SynthError::BinBeyondHorizon {
                    index,
                    bin,
                    horizon,
                });
            }
        }
        Ok(Self {
            covariates,
            raw_times,
            time_bins,
            events,
            horizon,
        })
    }

    /// Dataset with continuous times only; bins stay zero until
    /// [`discretize`] runs.
    pub fn from_raw(
        covariates: Array2<f64>,
        raw_times: Array1<f64>,
        events: Vec<u8>,
    ) -> Result<Self, SynthError> {
        let n = covariates.nrows();
        Self::new(covariates, raw_times, vec![0; n], events, 0)
    }

    pub fn len(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn raw_times(&self) -> &Array1<f64> {
        &self.raw_times
    }

    pub fn time_bins(&self) -> &[usize] {
        &self.time_bins
    }

    pub fn events(&self) -> &[u8] {
        &self.events
    }

    /// Largest valid time bin index (M).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn censored_fraction(&self) -> f64 {
        let censored = self.events.iter().filter(|&&e| e == 0).count();
        censored as f64 / self.len() as f64
    }

    pub fn max_raw_time(&self) -> f64 {
        self.raw_times.iter().copied().fold(0.0, f64::max)
    }

    /// Row subset in the given order; duplicate indices are allowed (used by
    /// bootstrap resampling as well as splits).
    pub fn subset(&self, indices: &[usize]) -> Result<Self, SynthError> {
        if indices.is_empty() {
            return Err(SynthError::EmptyDataset);
        }
        let cov = Array2::from_shape_fn((indices.len(), self.num_covariates()), |(r, c)| {
            self.covariates[[indices[r], c]]
        });
        let times = Array1::from_iter(indices.iter().map(|&i| self.raw_times[i]));
        let bins = indices.iter().map(|&i| self.time_bins[i]).collect();
        let events = indices.iter().map(|&i| self.events[i]).collect();
        Self::new(cov, times, bins, events, self.horizon)
    }
}

/// Configuration of the synthetic generator's target-node equation
/// `t = max(0, scale_c * exp(sum) + z_t)`.
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub num_samples: usize,
    /// The multiplier `c` in front of the exponential.
    pub scale_c: f64,
    pub target_noise_mean: f64,
    /// Spread of `z_t`; interpreted as a variance unless
    /// `noise_scale_is_stddev` is set.
    pub target_noise_scale: f64,
    pub noise_scale_is_stddev: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_samples: 10_000,
            scale_c: 90.0,
            target_noise_mean: 30.0,
            target_noise_scale: 70.0,
            noise_scale_is_stddev: false,
            seed: 0,
        }
    }
}

impl GenConfig {
    fn target_noise_std(&self) -> f64 {
        if self.noise_scale_is_stddev {
            self.target_noise_scale
        } else {
            self.target_noise_scale.sqrt()
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.num_samples == 0 {
            return Err(SynthError::InvalidConfig("num_samples must be positive".into()));
        }
        if !(self.scale_c > 0.0) || !self.scale_c.is_finite() {
            return Err(SynthError::InvalidConfig(format!(
                "scale_c must be a positive real, got {}",
                self.scale_c
            )));
        }
        if !self.target_noise_mean.is_finite() {
            return Err(SynthError::InvalidConfig("target_noise_mean must be finite".into()));
        }
        if !(self.target_noise_scale >= 0.0) || !self.target_noise_scale.is_finite() {
            return Err(SynthError::InvalidConfig(format!(
                "target_noise_scale must be non-negative, got {}",
                self.target_noise_scale
            )));
        }
        Ok(())
    }
}

/// Non-fatal observations from generation, surfaced to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GenWarning {
    /// The target node has outgoing edges: covariates downstream of the
    /// event time carry label information into the feature matrix.
    TargetNotSink { children: Vec<usize> },
}

/// Every node's structural value for one sample, given pre-drawn noise.
/// Separated from the RNG so tests can perturb individual noise entries.
fn sample_values(dag: &Dag, target: usize, config: &GenConfig, noise: &[f64]) -> Vec<f64> {
    let mut values: Vec<f64> = vec![0.0; dag.num_nodes()];
    for &v in dag.topo_order() {
        let mut sum = 0.0;
        for &(u, w) in dag.parents(v) {
            sum += w * (values[u] + 1.0).cos();
        }
        values[v] = if v == target {
            (config.scale_c * sum.exp() + noise[v]).max(0.0)
        } else {
            sum + noise[v]
        };
    }
    values
}

/// Draws `config.num_samples` instances from the DAG's structural equations.
/// The last node index is the survival target; the rest are covariates. All
/// instances come out uncensored (`event = 1`) with zeroed time bins.
pub fn generate(
    dag: &Dag,
    config: &GenConfig,
) -> Result<(SurvivalDataset, Vec<GenWarning>), SynthError> {
    config.validate()?;
    let n_nodes = dag.num_nodes();
    if n_nodes < 2 {
        return Err(SynthError::InvalidConfig(
            "generation needs at least one covariate plus the target node".into(),
        ));
    }
    let target = n_nodes - 1;
    let num_covariates = n_nodes - 1;

    let mut warnings = Vec::new();
    let target_children: Vec<usize> = dag.children(target).iter().map(|&(v, _)| v).collect();
    if !target_children.is_empty() {
        warnings.push(GenWarning::TargetNotSink {
            children: target_children,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let target_noise = Normal::new(config.target_noise_mean, config.target_noise_std())
        .expect("validated std is non-negative");

    let mut covariates = Array2::zeros((config.num_samples, num_covariates));
    let mut raw_times = Array1::zeros(config.num_samples);
    let mut noise = vec![0.0; n_nodes];
    for sample in 0..config.num_samples {
        // Noise is drawn per node index, not per topological position, so
        // the stream is independent of edge structure.
        for (v, slot) in noise.iter_mut().enumerate() {
            *slot = if v == target {
                target_noise.sample(&mut rng)
            } else {
                StandardNormal.sample(&mut rng)
            };
        }
        let values = sample_values(dag, target, config, &noise);
        if !values[target].is_finite() {
            return Err(SynthError::NonFiniteSample { sample });
        }
        for j in 0..num_covariates {
            covariates[[sample, j]] = values[j];
        }
        raw_times[sample] = values[target];
    }

    let events = vec![1u8; config.num_samples];
    Ok((
        SurvivalDataset::from_raw(covariates, raw_times, events)?,
        warnings,
    ))
}

/// How censoring times are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensorMode {
    /// Exactly `round(fraction * N)` instances are censored, each at a time
    /// uniform on `(0, its own event time)`.
    ExactFraction,
    /// Every instance draws a candidate uniform on `(0, max event time)` and
    /// is censored only when the candidate falls before its event; the
    /// realized fraction is then a random quantity near one half.
    UniformGlobal,
}

/// Censors exactly `round(fraction * len)` instances, chosen uniformly among
/// those with positive times; each selected instance gets a censoring time
/// uniform on `(0, its event time)` and its event flag cleared. Times never
/// increase, and an already-censored instance may be re-censored earlier.
pub fn apply_censoring(
    dataset: &SurvivalDataset,
    fraction: f64,
    seed: u64,
) -> Result<SurvivalDataset, SynthError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(SynthError::InvalidConfig(format!(
            "censoring fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let n = dataset.len();
    let k = (fraction * n as f64).round() as usize;
    let mut out = dataset.clone();
    if k == 0 {
        return Ok(out);
    }
    let mut eligible: Vec<usize> = (0..n).filter(|&i| dataset.raw_times[i] > 0.0).collect();
    if eligible.len() < k {
        return Err(SynthError::CensorInfeasible {
            requested: k,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first k slots become the censored subset.
    for i in 0..k {
        let j = rng.random_range(i..eligible.len());
        eligible.swap(i, j);
    }
    let mut chosen = eligible[..k].to_vec();
    chosen.sort_unstable();
    for &i in &chosen {
        let t = out.raw_times[i];
        out.raw_times[i] = rng.random::<f64>() * t;
        out.events[i] = 0;
    }
    Ok(out)
}

/// The [`CensorMode::UniformGlobal`] variant: candidates are uniform on
/// `(0, max event time)` for every instance and only bind when they precede
/// the event.
pub fn apply_censoring_uniform_global(
    dataset: &SurvivalDataset,
    seed: u64,
) -> Result<SurvivalDataset, SynthError> {
    let max = dataset.max_raw_time();
    if max <= 0.0 {
        return Err(SynthError::DegenerateRange { value: max });
    }
    let mut out = dataset.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..out.len() {
        let candidate = rng.random::<f64>() * max;
        if candidate < out.raw_times[i] {
            out.raw_times[i] = candidate;
            out.events[i] = 0;
        }
    }
    Ok(out)
}

/// Equal-width binning of raw times over `[0, max]` into `num_bins + 1`
/// indices: `bin = floor(t / max * num_bins)`, so time zero maps to bin 0
/// and the maximum time maps to bin `num_bins` exactly. Monotone in `t`.
pub fn discretize(dataset: &SurvivalDataset, num_bins: usize) -> Result<SurvivalDataset, SynthError> {
    if num_bins == 0 {
        return Err(SynthError::InvalidConfig("num_bins must be positive".into()));
    }
    let max = dataset.max_raw_time();
    let min = dataset.raw_times.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return Err(SynthError::DegenerateRange { value: max });
    }
    let mut out = dataset.clone();
    out.horizon = num_bins;
    for (bin, &t) in out.time_bins.iter_mut().zip(dataset.raw_times.iter()) {
        *bin = ((t / max * num_bins as f64).floor() as usize).min(num_bins);
    }
    Ok(out)
}

/// Default bin count: one bin per unit of time, `ceil(max raw time)`.
pub fn default_num_bins(dataset: &SurvivalDataset) -> usize {
    (dataset.max_raw_time().ceil() as usize).max(1)
}

/// Shuffles instances and splits them into train, validation, and test
/// parts of sizes `round(train_frac * (1 - val_frac_of_train) * N)`,
/// `round(train_frac * val_frac_of_train * N)`, and the remainder. Indices
/// inside each part stay in original dataset order.
pub fn split(
    dataset: &SurvivalDataset,
    train_frac: f64,
    val_frac_of_train: f64,
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset, SurvivalDataset), SynthError> {
    if !(0.0 < train_frac && train_frac < 1.0) {
        return Err(SynthError::InvalidConfig(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    if !(0.0 < val_frac_of_train && val_frac_of_train < 1.0) {
        return Err(SynthError::InvalidConfig(format!(
            "val_frac_of_train must lie in (0, 1), got {val_frac_of_train}"
        )));
    }
    let n = dataset.len();
    let n_train = (train_frac * (1.0 - val_frac_of_train) * n as f64).round() as usize;
    let n_val = (train_frac * val_frac_of_train * n as f64).round() as usize;
    for (part, size) in [("train", n_train), ("validation", n_val)] {
        if size == 0 {
            return Err(SynthError::TooSmall { part, size });
        }
    }
    if n_train + n_val >= n {
        return Err(SynthError::TooSmall {
            part: "test",
            size: n.saturating_sub(n_train + n_val),
        });
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let mut train: Vec<usize> = indices[..n_train].to_vec();
    let mut val: Vec<usize> = indices[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = indices[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((
        dataset.subset(&train)?,
        dataset.subset(&val)?,
        dataset.subset(&test)?,
    ))
}

/// Writes `x1,...,xL,time,event` with one row per instance. Floats print in
/// shortest round-trip form, so write-then-read is lossless.
pub fn write_dataset_csv(dataset: &SurvivalDataset, path: &str) -> Result<(), SynthError> {
    let io_err = |source| SynthError::Io {
        path: path.into(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = |line: &str| out.write_all(line.as_bytes()).map_err(io_err);
    let l = dataset.num_covariates();
    let header: Vec<String> = (1..=l)
        .map(|j| format!("x{j}"))
        .chain(["time".into(), "event".into()])
        .collect();
    write(&header.join(","))?;
    write("\n")?;
    for i in 0..dataset.len() {
        let mut fields: Vec<String> = (0..l)
            .map(|j| format!("{}", dataset.covariates[[i, j]]))
            .collect();
        fields.push(format!("{}", dataset.raw_times[i]));
        fields.push(format!("{}", dataset.events[i]));
        write(&fields.join(","))?;
        write("\n")?;
    }
    Ok(())
}

/// Reads the format written by [`write_dataset_csv`]. The last two columns
/// must be named `time` and `event`; everything before them is a covariate.
/// Bins come back zeroed; run [`discretize`] afterwards.
pub fn read_dataset_csv(path: &str) -> Result<SurvivalDataset, SynthError> {
    let file = std::fs::File::open(path).map_err(|source| SynthError::Io {
        path: path.into(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, problem: String| SynthError::Parse {
        path: path.into(),
        line,
        problem,
    };

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.len() < 3 {
        return Err(parse_err(
            1,
            format!(
                "expected at least one covariate column plus time,event; got {} columns",
                headers.len()
            ),
        ));
    }
    let l = headers.len() - 2;
    if &headers[l] != "time" || &headers[l + 1] != "event" {
        return Err(parse_err(
            1,
            format!(
                "last two columns must be named time,event; got {:?},{:?}",
                &headers[l],
                &headers[l + 1]
            ),
        ));
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut times = Vec::new();
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("row has {} fields, expected {}", record.len(), headers.len()),
            ));
        }
        for j in 0..l {
            let v: f64 = record[j].parse().map_err(|_| {
                parse_err(line, format!("covariate {:?} is not a real number", &record[j]))
            })?;
            rows.push(v);
        }
        let t: f64 = record[l]
            .parse()
            .map_err(|_| parse_err(line, format!("time {:?} is not a real number", &record[l])))?;
        let e: u8 = match &record[l + 1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(parse_err(
                    line,
                    format!("event must be 0 or 1, got {other:?}"),
                ))
            }
        };
        times.push(t);
        events.push(e);
    }
    if times.is_empty() {
        return Err(SynthError::EmptyDataset);
    }
    let covariates = Array2::from_shape_vec((times.len(), l), rows).expect("row-major fill");
    SurvivalDataset::from_raw(covariates, Array1::from_vec(times), events)
}
