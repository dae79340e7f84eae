//! Experiment configuration: a small `key = value` format with `[section]`
//! headers, plus the compact `n=20,N=500,...` synthetic dataset syntax.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::data::{NoiseScaling, SyntheticSpec};
use crate::error::{Error, Result};
use crate::wavelet::{validate_wavelet, WaveletInit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cdla,
    Ucirc,
    UcdlaBlock,
    Uconv,
    Wdla,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cdla => "cdla",
            Algorithm::Ucirc => "ucirc",
            Algorithm::UcdlaBlock => "ucdla_block",
            Algorithm::Uconv => "uconv",
            Algorithm::Wdla => "wdla",
        }
    }

    /// Learners whose atoms are all cyclic shifts of `L` generators.
    pub fn is_circulant(self) -> bool {
        matches!(self, Algorithm::Cdla | Algorithm::Ucirc | Algorithm::UcdlaBlock)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cdla" => Ok(Algorithm::Cdla),
            "ucirc" => Ok(Algorithm::Ucirc),
            "ucdla_block" | "block" => Ok(Algorithm::UcdlaBlock),
            "uconv" => Ok(Algorithm::Uconv),
            "wdla" => Ok(Algorithm::Wdla),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected cdla, ucirc, ucdla_block, uconv or wdla)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Svd,
    Haar,
    D4,
    Random,
}

impl InitKind {
    pub fn wavelet(self) -> WaveletInit<f64> {
        match self {
            InitKind::Svd => WaveletInit::Svd,
            InitKind::Haar => WaveletInit::Haar,
            InitKind::D4 => WaveletInit::D4,
            InitKind::Random => WaveletInit::Random,
        }
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svd" => Ok(InitKind::Svd),
            "haar" => Ok(InitKind::Haar),
            "d4" => Ok(InitKind::D4),
            "random" => Ok(InitKind::Random),
            other => Err(Error::Config(format!(
                "unknown init {other:?} (expected svd, haar, d4 or random)"
            ))),
        }
    }
}

/// Where the training matrix comes from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Shift-invariant synthetic data; the seed is taken from the run unless set.
    Synthetic {
        #[serde(skip)]
        spec: SyntheticSpec,
        text: String,
        fixed_seed: Option<u64>,
    },
    /// Non-overlapping segments of an ECG trace. Without a file, a synthetic
    /// trace of `length` samples is generated.
    Ecg {
        path: Option<PathBuf>,
        segment: usize,
        length: usize,
    },
    /// Mean-removed `patch × patch` blocks of 8-bit images. Without a
    /// directory, `count` procedural images of side `size` are used.
    Images {
        dir: Option<PathBuf>,
        patch: usize,
        count: usize,
        size: usize,
    },
    /// A SIMX or CSV matrix, one signal per column.
    Matrix { path: PathBuf },
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Snr,
    Sparsity,
    Support,
    Blocks,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "snr" => Ok(SweepParam::Snr),
            "sparsity" | "s" => Ok(SweepParam::Sparsity),
            "support" | "n" => Ok(SweepParam::Support),
            "blocks" | "l" => Ok(SweepParam::Blocks),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected snr, sparsity, support or blocks)"
            ))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Snr => "snr",
            SweepParam::Sparsity => "sparsity",
            SweepParam::Support => "support",
            SweepParam::Blocks => "blocks",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// SNR values (dB) used when an SNR sweep lists none.
pub const DEFAULT_SNR_VALUES: [f64; 6] = [10.0, 15.0, 20.0, 25.0, 30.0, 40.0];
/// Seeds used by a default SNR sweep when none were configured.
pub const DEFAULT_SNR_SEEDS: u64 = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub dataset: DatasetSpec,
    /// `L`; defaults to the synthetic kernel count, else 1.
    pub blocks: Option<usize>,
    /// `s`; defaults to the synthetic sparsity, else 4.
    pub sparsity: Option<usize>,
    /// Kernel or filter length.
    pub support: Option<usize>,
    /// Wavelet stages.
    pub stages: Option<usize>,
    pub iterations: usize,
    pub init: InitKind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub early_stop: bool,
    pub recovery_threshold: f64,
    /// Restrict coding to the first `q` shifts of every generator.
    pub mask_shifts: Option<usize>,
    pub duplicate_threshold: Option<f64>,
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, dataset: DatasetSpec) -> Self {
        Self {
            algorithms: vec![algorithm],
            dataset,
            blocks: None,
            sparsity: None,
            support: None,
            stages: None,
            iterations: 50,
            init: InitKind::Svd,
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            early_stop: true,
            recovery_threshold: 0.99,
            mask_shifts: None,
            duplicate_threshold: Some(0.95),
            sweep: None,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithms[0]
    }

    pub fn synthetic(&self) -> Option<&SyntheticSpec> {
        match &self.dataset {
            DatasetSpec::Synthetic { spec, .. } => Some(spec),
            _ => None,
        }
    }

    pub fn effective_blocks(&self, algorithm: Algorithm) -> usize {
        if algorithm == Algorithm::Cdla {
            return 1;
        }
        self.blocks
            .or_else(|| self.synthetic().map(|s| s.kernels))
            .unwrap_or(1)
    }

    pub fn effective_sparsity(&self) -> usize {
        self.sparsity
            .or_else(|| self.synthetic().map(|s| s.sparsity))
            .unwrap_or(4)
    }

    /// Number of rows of the training matrix, when known without loading it.
    pub fn signal_len(&self) -> Option<usize> {
        match &self.dataset {
            DatasetSpec::Synthetic { spec, .. } => Some(spec.n),
            DatasetSpec::Ecg { segment, .. } => Some(*segment),
            DatasetSpec::Images { patch, .. } => Some(patch * patch),
            DatasetSpec::Matrix { .. } => None,
        }
    }

    /// Checks every algorithm's preconditions against the dataset shape.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithm given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.recovery_threshold) {
            return Err(Error::Config("recovery threshold must lie in [0, 1]".into()));
        }
        if let DatasetSpec::Synthetic { spec, .. } = &self.dataset {
            spec.validate()?;
        }
        if let Some(p) = self.signal_len() {
            for &a in &self.algorithms {
                self.validate_for(a, p)?;
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep needs at least one value".into()));
            }
            if sw.param == SweepParam::Snr && self.synthetic().is_none() {
                return Err(Error::Config("an SNR sweep needs a synthetic dataset".into()));
            }
            for &v in &sw.values {
                if sw.param != SweepParam::Snr && (v < 1.0 || v.fract() != 0.0) {
                    return Err(Error::Config(format!(
                        "sweep value {v} for {} must be a positive integer",
                        sw.param.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Preconditions of one algorithm on signals of length `p`.
    pub fn validate_for(&self, algorithm: Algorithm, p: usize) -> Result<()> {
        let s = self.effective_sparsity();
        if s < 1 || s > p {
            return Err(Error::Config(format!("sparsity s = {s} must lie in 1..={p}")));
        }
        let blocks = self.effective_blocks(algorithm);
        if blocks < 1 {
            return Err(Error::Config("number of blocks L must be at least 1".into()));
        }
        if let Some(q) = self.mask_shifts {
            if q < 1 || q > p {
                return Err(Error::Config(format!(
                    "shift restriction q = {q} must lie in 1..={p}"
                )));
            }
            if !(algorithm.is_circulant() || algorithm == Algorithm::Uconv) {
                return Err(Error::Config(format!(
                    "{algorithm} does not take a shift restriction"
                )));
            }
        }
        match algorithm {
            Algorithm::Uconv => {
                let n = self
                    .support
                    .ok_or_else(|| Error::Config("uconv needs a kernel length n".into()))?;
                if n < 1 || n > p {
                    return Err(Error::Config(format!(
                        "kernel length n = {n} must lie in 1..={p}"
                    )));
                }
            }
            Algorithm::Wdla => {
                let n = self
                    .support
                    .ok_or_else(|| Error::Config("wdla needs a filter length n".into()))?;
                let m = self
                    .stages
                    .ok_or_else(|| Error::Config("wdla needs a number of stages m".into()))?;
                validate_wavelet(p, m, n, &self.init.wavelet())?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Reads a configuration file. Keys may be given bare or as
    /// `section.key`; a `[section]` header prefixes the keys below it.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let map = parse_key_values(&text).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            msg,
        })?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut kv = Settings::new(map);
        let algorithms = parse_list::<Algorithm>(
            &kv.take(&["run.algorithm", "algorithm"])
                .ok_or_else(|| Error::Config("missing key `algorithm`".into()))?,
        )?;
        let dataset = dataset_from(&mut kv)?;
        let mut cfg = ExperimentConfig::new(algorithms[0], dataset);
        cfg.algorithms = algorithms;
        cfg.apply(&mut kv)?;
        if let Some(k) = kv.unused().first() {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, kv: &mut Settings<'_>) -> Result<()> {
        if let Some(v) = kv.take(&["run.blocks", "blocks", "L"]) {
            self.blocks = Some(parse_num(&v, "blocks")?);
        }
        if let Some(v) = kv.take(&["run.sparsity", "sparsity", "s"]) {
            self.sparsity = Some(parse_num(&v, "sparsity")?);
        }
        if let Some(v) = kv.take(&["run.support", "support", "n", "uconv.n", "wdla.n"]) {
            self.support = Some(parse_num(&v, "support")?);
        }
        if let Some(v) = kv.take(&["run.stages", "stages", "m", "wdla.m"]) {
            self.stages = Some(parse_num(&v, "stages")?);
        }
        if let Some(v) = kv.take(&["run.iterations", "iterations", "K"]) {
            self.iterations = parse_num(&v, "iterations")?;
        }
        if let Some(v) = kv.take(&["run.init", "init", "wdla.init"]) {
            self.init = v.parse()?;
        }
        let seeds = kv.take(&["run.seeds", "seeds", "seed"]);
        let seeds_given = seeds.is_some();
        if let Some(v) = seeds {
            self.seeds = parse_seeds(&v)?;
        }
        if let Some(v) = kv.take(&["run.output", "output"]) {
            self.output_dir = PathBuf::from(v);
        }
        if let Some(v) = kv.take(&["run.early_stop", "early_stop"]) {
            self.early_stop = parse_bool(&v)?;
        }
        if let Some(v) = kv.take(&["run.threshold", "threshold"]) {
            self.recovery_threshold = parse_num(&v, "threshold")?;
        }
        if let Some(v) = kv.take(&["run.mask_shifts", "mask_shifts", "ucirc.mask_shifts"]) {
            self.mask_shifts = Some(parse_num(&v, "mask_shifts")?);
        }
        if let Some(v) = kv.take(&["run.duplicate_threshold", "duplicate_threshold"]) {
            self.duplicate_threshold = if v.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(parse_num(&v, "duplicate_threshold")?)
            };
        }
        let param = kv.take(&["sweep.param"]);
        let values = kv.take(&["sweep.values"]);
        match (param, values) {
            (Some(p), v) => {
                let values = v.as_deref().map(parse_list::<f64>).transpose()?;
                self.set_sweep(p.parse()?, values, seeds_given)?;
            }
            (None, None) => {}
            (None, Some(_)) => return Err(Error::Config("`sweep.values` needs `sweep.param`".into())),
        }
        Ok(())
    }

    /// Configures a sweep. Without values only an SNR sweep has defaults:
    /// the SNRs in [`DEFAULT_SNR_VALUES`], over [`DEFAULT_SNR_SEEDS`] seeds
    /// unless seeds were given explicitly.
    pub fn set_sweep(
        &mut self,
        param: SweepParam,
        values: Option<Vec<f64>>,
        seeds_given: bool,
    ) -> Result<()> {
        let values = match (values, param) {
            (Some(v), _) => v,
            (None, SweepParam::Snr) => {
                if !seeds_given {
                    self.seeds = (0..DEFAULT_SNR_SEEDS).collect();
                }
                DEFAULT_SNR_VALUES.to_vec()
            }
            (None, p) => {
                return Err(Error::Config(format!(
                    "a {} sweep needs explicit values",
                    p.name()
                )));
            }
        };
        self.sweep = Some(SweepSpec { param, values });
        Ok(())
    }
}

struct Settings<'a> {
    map: &'a BTreeMap<String, String>,
    used: Vec<&'a str>,
}

impl<'a> Settings<'a> {
    fn new(map: &'a BTreeMap<String, String>) -> Self {
        Self {
            map,
            used: Vec::new(),
        }
    }

    /// First present key among the aliases.
    fn take(&mut self, keys: &[&str]) -> Option<String> {
        for k in keys {
            if let Some((key, v)) = self.map.get_key_value(*k) {
                self.used.push(key);
                return Some(v.clone());
            }
        }
        None
    }

    fn unused(&self) -> Vec<&'a str> {
        self.map
            .keys()
            .map(String::as_str)
            .filter(|k| !self.used.contains(k))
            .collect()
    }
}

fn dataset_from(kv: &mut Settings<'_>) -> Result<DatasetSpec> {
    let source = kv
        .take(&["data.source", "source"])
        .ok_or_else(|| Error::Config("missing key `data.source`".into()))?;
    match source.trim() {
        "synthetic" => {
            let text = kv
                .take(&["data.synthetic", "synthetic"])
                .ok_or_else(|| Error::Config("missing key `data.synthetic`".into()))?;
            let fixed_seed = kv
                .take(&["data.seed"])
                .map(|v| parse_num(&v, "data.seed"))
                .transpose()?;
            synthetic_dataset(&text, fixed_seed)
        }
        "ecg" => Ok(DatasetSpec::Ecg {
            path: kv.take(&["data.path"]).map(PathBuf::from),
            segment: kv
                .take(&["data.segment"])
                .map_or(Ok(64), |v| parse_num(&v, "data.segment"))?,
            length: kv
                .take(&["data.length"])
                .map_or(Ok(64 * 2000), |v| parse_num(&v, "data.length"))?,
        }),
        "images" => Ok(DatasetSpec::Images {
            dir: kv.take(&["data.dir", "data.path"]).map(PathBuf::from),
            patch: kv
                .take(&["data.patch"])
                .map_or(Ok(8), |v| parse_num(&v, "data.patch"))?,
            count: kv
                .take(&["data.count"])
                .map_or(Ok(6), |v| parse_num(&v, "data.count"))?,
            size: kv
                .take(&["data.size"])
                .map_or(Ok(128), |v| parse_num(&v, "data.size"))?,
        }),
        "matrix" => Ok(DatasetSpec::Matrix {
            path: kv
                .take(&["data.path"])
                .map(PathBuf::from)
                .ok_or_else(|| Error::Config("matrix source needs `data.path`".into()))?,
        }),
        other => Err(Error::Config(format!(
            "unknown data source {other:?} (expected synthetic, ecg, images or matrix)"
        ))),
    }
}

/// A synthetic dataset from `n=20,N=500,L=10,q=3,s=4,snr=30` text.
pub fn synthetic_dataset(text: &str, fixed_seed: Option<u64>) -> Result<DatasetSpec> {
    let spec = parse_synthetic(text)?;
    let fixed_seed = fixed_seed.or_else(|| has_key(text, "seed").then_some(spec.seed));
    Ok(DatasetSpec::Synthetic {
        spec,
        text: text.to_string(),
        fixed_seed,
    })
}

fn has_key(text: &str, key: &str) -> bool {
    text.split(',')
        .filter_map(|kv| kv.split_once('='))
        .any(|(k, _)| k.trim() == key)
}

/// Parses the compact synthetic dataset syntax. Keys: `n`, `N`, `L`, `s`,
/// `q`, `snr` (dB or `none`), `lo`, `hi`, `noise` (`dataset` or `column`),
/// `seed`.
pub fn parse_synthetic(text: &str) -> Result<SyntheticSpec> {
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {part:?}")))?;
        fields.insert(k.trim(), v.trim());
    }
    let get = |k: &str| -> Result<usize> {
        fields
            .get(k)
            .ok_or_else(|| Error::Config(format!("synthetic spec is missing `{k}`")))
            .and_then(|v| parse_num(v, k))
    };
    let mut spec = SyntheticSpec::new(get("n")?, get("N")?, get("L")?, get("s")?, get("q")?);
    for (&k, &v) in &fields {
        match k {
            "n" | "N" | "L" | "s" | "q" => {}
            "snr" => {
                spec.snr_db = if v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("inf") {
                    None
                } else {
                    Some(parse_num(v, "snr")?)
                }
            }
            "lo" => spec.coeff_range.0 = parse_num(v, "lo")?,
            "hi" => spec.coeff_range.1 = parse_num(v, "hi")?,
            "noise" => {
                spec.noise_scaling = match v {
                    "dataset" => NoiseScaling::Dataset,
                    "column" => NoiseScaling::PerColumn,
                    other => return Err(Error::Config(format!("unknown noise scaling {other:?}"))),
                }
            }
            "seed" => spec.seed = parse_num(v, "seed")?,
            other => return Err(Error::Config(format!("unknown synthetic key `{other}`"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// `[section]` headers and `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| format!("line {}: unterminated section header", i + 1))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{key}`", i + 1));
        }
    }
    Ok(map)
}

pub fn parse_num<N: FromStr>(v: &str, what: &str) -> Result<N> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for `{what}`")))
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::Config(format!("invalid boolean {other:?}"))),
    }
}

pub fn parse_list<V: FromStr>(v: &str) -> Result<Vec<V>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("invalid list entry {s:?}")))
        })
        .collect()
}

/// `3`, `1,4,9` or a half-open range `0..20`.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = parse_num(a, "seeds")?;
        let b: u64 = parse_num(b, "seeds")?;
        if b <= a {
            return Err(Error::Config(format!("empty seed range {v:?}")));
        }
        return Ok((a..b).collect());
    }
    parse_list(v)
}
