//! Synthetic regression experiments: signal functions, feature dependence,
//! error distributions and signal-to-noise calibration.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::erf::erfc;

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::stats::sample_variance;

/// Named random sub-streams derived from one master seed.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const PERMUTATION: u64 = 2;
    pub const CALIBRATION: u64 = 3;
    pub const CONTAMINATION: u64 = 4;
}

/// Generator for sub-stream `stream` of replication `replication`.
pub fn stream_rng(seed: u64, replication: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    G1,
    G2,
    G3,
}

impl Signal {
    /// Indices of the coordinates the function depends on.
    pub fn active(self) -> Vec<usize> {
        match self {
            Signal::G1 | Signal::G3 => (0..5).collect(),
            Signal::G2 => (0..4).collect(),
        }
    }
}

impl FromStr for Signal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g1" => Ok(Signal::G1),
            "g2" => Ok(Signal::G2),
            "g3" => Ok(Signal::G3),
            _ => Err(Error::InvalidArgument(format!("unknown regression function '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Structure {
    /// Independent coordinates.
    S0,
    /// Correlation 0.8^|i−j|.
    S1,
    /// Correlation 0.8 within blocks of active coordinates.
    S2,
}

impl FromStr for Structure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S0" => Ok(Structure::S0),
            "S1" => Ok(Structure::S1),
            "S2" => Ok(Structure::S2),
            _ => Err(Error::InvalidArgument(format!("unknown correlation structure '{s}'"))),
        }
    }
}

/// Error distributions; the contaminated ones carry their mixing rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    D0,
    D1(f64),
    D2(f64),
    D3,
    D4,
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorModel::D0 => f.write_str("D0"),
            ErrorModel::D1(a) => write!(f, "D1:{a}"),
            ErrorModel::D2(a) => write!(f, "D2:{a}"),
            ErrorModel::D3 => f.write_str("D3"),
            ErrorModel::D4 => f.write_str("D4"),
        }
    }
}

impl FromStr for ErrorModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, rate) = match s.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (s, None),
        };
        let parse_rate = |r: Option<&str>| -> Result<f64> {
            let r = r.ok_or_else(|| Error::InvalidArgument(format!("'{s}' needs a rate, e.g. {name}:0.2")))?;
            let a: f64 = r
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad contamination rate '{r}'")))?;
            if !(0.0..0.5).contains(&a) {
                return Err(Error::InvalidArgument(format!("contamination rate must lie in [0, 0.5), got {a}")));
            }
            Ok(a)
        };
        let model = match name.to_ascii_uppercase().as_str() {
            "D0" => ErrorModel::D0,
            "D1" => ErrorModel::D1(parse_rate(rate)?),
            "D2" => ErrorModel::D2(parse_rate(rate)?),
            "D3" => ErrorModel::D3,
            "D4" => ErrorModel::D4,
            _ => return Err(Error::InvalidArgument(format!("unknown error model '{s}'"))),
        };
        if rate.is_some() && !matches!(model, ErrorModel::D1(_) | ErrorModel::D2(_)) {
            return Err(Error::InvalidArgument(format!("error model '{name}' takes no rate")));
        }
        Ok(model)
    }
}

impl Serialize for ErrorModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ErrorModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How `Var(ε)` enters the noise-scale calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorVarianceMode {
    /// Treat every error model as unit variance, so C depends only on the signal.
    #[default]
    Nominal,
    /// Estimate `Var(ε)` by Monte Carlo; the heavy-tailed model still uses 1.
    MonteCarlo,
}

/// Evaluates a regression function on the leading coordinates of `x`.
pub fn eval_g(which: Signal, x: &[f64]) -> Result<f64> {
    let need = which.active().len();
    if x.len() < need {
        return Err(Error::InvalidArgument(format!(
            "{which:?} needs {need} coordinates, got {}",
            x.len()
        )));
    }
    Ok(match which {
        Signal::G1 => {
            2.0 * x[0] - 2.0 * x[1]
                + 8.0 * (x[2] - 0.5).powi(2)
                + x[3].exp()
                + 0.5 * (8.0 * PI * x[4]).cos() * (2.0 * x[4]).exp()
        }
        Signal::G2 => {
            let d = x[1] * x[3];
            if d == 0.0 {
                return Err(Error::InvalidArgument("g2 denominator x2*x4 is zero".into()));
            }
            let t = x[1] * x[2] - 1.0 / d;
            5.0 * (x[0] * x[0] + t * t).sqrt()
        }
        Signal::G3 => {
            let a: f64 = (0..5)
                .map(|j| {
                    let s = if (j + 1) % 2 == 0 { 1.0 } else { -1.0 };
                    1.0 + s * 0.8 * x[j] + (6.0 * x[j]).sin()
                })
                .sum();
            let b: f64 = (0..3).map(|j| 1.0 + x[j] / 3.0).sum();
            a * b
        }
    })
}

#[inline]
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn blocks(which: Signal) -> Vec<Vec<usize>> {
    match which {
        Signal::G1 | Signal::G3 => vec![vec![0, 1, 2], vec![3, 4]],
        Signal::G2 => vec![vec![0, 1], vec![2, 3]],
    }
}

const RHO: f64 = 0.8;

/// Draws Gaussian-stage coordinates with the structure's correlation.
pub fn gen_gaussian(n: usize, p: usize, structure: Structure, which: Signal, rng: &mut impl Rng) -> Matrix {
    let mut data = Vec::with_capacity(n * p);
    let innov = (1.0 - RHO * RHO).sqrt();
    let block_of: Vec<Option<usize>> = {
        let mut v = vec![None; p];
        for (b, members) in blocks(which).iter().enumerate() {
            for &j in members {
                if j < p {
                    v[j] = Some(b);
                }
            }
        }
        v
    };
    let n_blocks = blocks(which).len();
    let mut row = vec![0.0; p];
    let mut factors = vec![0.0; n_blocks];
    for _ in 0..n {
        match structure {
            Structure::S0 => {
                for z in row.iter_mut() {
                    *z = rng.sample(StandardNormal);
                }
            }
            Structure::S1 => {
                for j in 0..p {
                    let e: f64 = rng.sample(StandardNormal);
                    row[j] = if j == 0 { e } else { RHO * row[j - 1] + innov * e };
                }
            }
            Structure::S2 => {
                for f in factors.iter_mut() {
                    *f = rng.sample(StandardNormal);
                }
                for j in 0..p {
                    let e: f64 = rng.sample(StandardNormal);
                    row[j] = match block_of[j] {
                        Some(b) => RHO.sqrt() * factors[b] + (1.0 - RHO).sqrt() * e,
                        None => e,
                    };
                }
            }
        }
        data.extend_from_slice(&row);
    }
    Matrix::new(n, p, data).expect("shape")
}

/// Uniform-marginal features through a Gaussian copula.
pub fn gen_features(n: usize, p: usize, structure: Structure, which: Signal, rng: &mut impl Rng) -> Result<Matrix> {
    let need = which.active().len();
    if p < need {
        return Err(Error::InvalidArgument(format!("{which:?} needs p ≥ {need}, got {p}")));
    }
    let z = gen_gaussian(n, p, structure, which, rng);
    let mut u: Vec<f64> = z.as_slice().iter().map(|&v| std_normal_cdf(v)).collect();
    if which == Signal::G2 {
        for i in 0..n {
            u[i * p + 1] += 1.0;
            u[i * p + 3] += 1.0;
        }
    }
    Matrix::new(n, p, u)
}

/// Independent draws from an error model.
pub fn gen_errors(model: ErrorModel, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| match model {
            ErrorModel::D0 => rng.sample(StandardNormal),
            ErrorModel::D1(a) => {
                if rng.random::<f64>() < a {
                    let centre = if rng.random::<bool>() { 20.0 } else { -20.0 };
                    centre + 0.1 * rng.sample::<f64, _>(StandardNormal)
                } else {
                    rng.sample(StandardNormal)
                }
            }
            ErrorModel::D2(a) => {
                if rng.random::<f64>() < a {
                    20.0 + 0.1 * rng.sample::<f64, _>(StandardNormal)
                } else {
                    rng.sample(StandardNormal)
                }
            }
            ErrorModel::D3 => {
                let z: f64 = rng.sample(StandardNormal);
                z.exp() - 0.5f64.exp()
            }
            ErrorModel::D4 => Cauchy::new(0.0, 1.0).expect("valid").sample(rng),
        })
        .collect()
}

/// Monte Carlo draws used for calibration.
pub const CALIBRATION_DRAWS: usize = 200_000;

/// Noise multiplier `C = sqrt(Var g(x) / (snr · Var ε))`.
pub fn calibrate_snr(
    which: Signal,
    structure: Structure,
    errors: ErrorModel,
    snr: f64,
    mode: ErrorVarianceMode,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    if draws < 2 {
        return Err(Error::InvalidArgument("calibration needs at least 2 draws".into()));
    }
    let var_g = signal_variance(which, structure, draws, rng)?;
    let var_e = match (mode, errors) {
        (ErrorVarianceMode::Nominal, _) | (_, ErrorModel::D0) | (_, ErrorModel::D4) => 1.0,
        (ErrorVarianceMode::MonteCarlo, m) => sample_variance(&gen_errors(m, draws, rng)),
    };
    Ok((var_g / (snr * var_e)).sqrt())
}

/// Monte Carlo variance of `g(x)` under the feature structure.
pub fn signal_variance(which: Signal, structure: Structure, draws: usize, rng: &mut impl Rng) -> Result<f64> {
    let k = which.active().len();
    let x = gen_features(draws, k, structure, which, rng)?;
    let g = x.rows().map(|r| eval_g(which, r)).collect::<Result<Vec<f64>>>()?;
    Ok(sample_variance(&g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub g: Signal,
    pub structure: Structure,
    pub errors: ErrorModel,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub p: usize,
    pub snr: f64,
    pub seed: u64,
    pub replication: u64,
    pub variance_mode: ErrorVarianceMode,
    pub calibration_draws: usize,
}

impl SimSetting {
    /// One of the three reference designs (1, 2 or 3).
    pub fn reference(id: u8, errors: ErrorModel, seed: u64) -> Result<Self> {
        let (g, structure, n_train, n_val, p, snr) = match id {
            1 => (Signal::G1, Structure::S0, 300, 200, 10, 6.0),
            2 => (Signal::G2, Structure::S1, 3000, 2000, 400, 10.0),
            3 => (Signal::G3, Structure::S2, 300, 200, 400, 10.0),
            _ => return Err(Error::InvalidArgument(format!("unknown setting {id}"))),
        };
        Ok(Self {
            g,
            structure,
            errors,
            n_train,
            n_val,
            n_test: 1000,
            p,
            snr,
            seed,
            replication: 0,
            variance_mode: ErrorVarianceMode::Nominal,
            calibration_draws: CALIBRATION_DRAWS,
        })
    }

    /// Base-learner depth used with this design.
    pub fn reference_depth(&self) -> usize {
        if self.g == Signal::G2 {
            2
        } else {
            1
        }
    }

    pub fn with_replication(mut self, r: u64) -> Self {
        self.replication = r;
        self
    }
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Noise multiplier applied to the errors.
    pub c: f64,
}

/// Builds the three splits; the test split always uses clean errors.
pub fn make_setting(setting: &SimSetting) -> Result<SimData> {
    let mut cal = stream_rng(setting.seed, setting.replication, streams::CALIBRATION);
    let c = calibrate_snr(
        setting.g,
        setting.structure,
        setting.errors,
        setting.snr,
        setting.variance_mode,
        setting.calibration_draws,
        &mut cal,
    )?;
    make_setting_with_scale(setting, c)
}

/// As [`make_setting`] with a given noise multiplier.
pub fn make_setting_with_scale(setting: &SimSetting, c: f64) -> Result<SimData> {
    let mut rng = stream_rng(setting.seed, setting.replication, streams::DATA);
    let mut split = |n: usize, model: ErrorModel| -> Result<Dataset> {
        let x = gen_features(n, setting.p, setting.structure, setting.g, &mut rng)?;
        let e = gen_errors(model, n, &mut rng);
        let y = x
            .rows()
            .zip(&e)
            .map(|(r, ei)| eval_g(setting.g, r).map(|g| g + c * ei))
            .collect::<Result<Vec<f64>>>()?;
        Dataset::unnamed(x, y)
    };
    let train = split(setting.n_train, setting.errors)?;
    let val = split(setting.n_val, setting.errors)?;
    let test = split(setting.n_test, ErrorModel::D0)?;
    Ok(SimData { train, val, test, c })
}

/// Adds `C ε` to observed responses, with `C` set from their sample variance
/// and the nominal unit error variance.
pub fn contaminate(y: &[f64], model: ErrorModel, snr: f64, rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
    if y.len() < 2 {
        return Err(Error::InvalidArgument("contamination needs at least 2 responses".into()));
    }
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    let c = (sample_variance(y) / snr).sqrt();
    let e = gen_errors(model, y.len(), rng);
    Ok((y.iter().zip(&e).map(|(v, ei)| v + c * ei).collect(), c))
}

/// Convenience seeded generator for ad-hoc use.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
