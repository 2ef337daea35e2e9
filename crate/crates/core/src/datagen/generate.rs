//! Synthetic VAR-style series with planted Granger-causal structure.
//!
//! The target follows `x_t = Σ a_j x_{t-j} + Σ_drivers Σ_j c_j u_{t-j} + ε_t`.
//! Around it sit three kinds of decoys: channels driven *by* the target,
//! independent white noise, and vector-valued channels that encode independent
//! noise through a fixed random projection.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Channel, ChannelSpec, DataError, Modality, Role, SeriesFrame};

const MAX_RESAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriverConfig {
    /// Coefficients on lags 1, 2, ... of the driver in the target equation.
    pub coeffs: Vec<f64>,
    /// AR(1) persistence of the driver itself; the driver has unit variance.
    pub persistence: f64,
    pub future_known: bool,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self { coeffs: vec![0.9], persistence: 0.0, future_known: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_steps: usize,
    pub burn_in: usize,
    /// Base AR coefficients of the target on lags 1, 2, ...
    pub ar_coeffs: Vec<f64>,
    /// Uniform jitter added to each AR coefficient per draw; draws that are
    /// not stable are resampled.
    pub ar_jitter: f64,
    pub noise_std: f64,
    pub drivers: Vec<DriverConfig>,
    /// Coupling `d` of each decoy `v_t = d·x_{t-1} + η_t`.
    pub reverse_decoys: Vec<f64>,
    pub noise_decoys: usize,
    /// Vector-valued decoy channels encoding independent noise.
    pub foreign_decoys: Vec<Modality>,
    /// When set, adds a vector channel of this modality that encodes the
    /// first driver.
    pub driver_features: Option<Modality>,
    pub feature_width: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_steps: 5000,
            burn_in: 200,
            ar_coeffs: vec![0.6, -0.2],
            ar_jitter: 0.05,
            noise_std: 0.3,
            drivers: vec![DriverConfig::default()],
            reverse_decoys: vec![0.8],
            noise_decoys: 1,
            foreign_decoys: vec![Modality::Txt],
            driver_features: None,
            feature_width: 8,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |m: &str| Err(DataError::Config(m.to_string()));
        if self.n_steps < 2000 {
            return fail("generator needs at least 2000 steps");
        }
        if self.drivers.is_empty() {
            return fail("generator needs at least one causal driver");
        }
        if self.reverse_decoys.is_empty() {
            return fail("generator needs at least one reverse-coupled decoy");
        }
        if self.noise_decoys == 0 {
            return fail("generator needs at least one white-noise decoy");
        }
        if !(self.noise_std > 0.0) {
            return fail("noise_std must be positive");
        }
        if self.ar_coeffs.is_empty() {
            return fail("ar_coeffs must name at least one lag");
        }
        if self.feature_width == 0 {
            return fail("feature_width must be positive");
        }
        if self.drivers.iter().any(|d| !(d.persistence.abs() < 1.0)) {
            return fail("driver persistence must lie in (-1, 1)");
        }
        if self.foreign_decoys.contains(&Modality::Ts) || self.driver_features == Some(Modality::Ts) {
            return fail("foreign channels must be txt or img");
        }
        Ok(())
    }
}

/// Planted structure for one covariate channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateTruth {
    pub name: String,
    pub causal: bool,
    /// Coefficients on lags 1, 2, ... (empty for non-causal channels).
    pub coeffs: Vec<f64>,
    /// Largest lag with a non-zero coefficient, 0 when none.
    pub lag: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthCausality {
    pub ar_coeffs: Vec<f64>,
    pub covariates: Vec<CovariateTruth>,
}

impl GroundTruthCausality {
    /// Name of the strongest planted ts driver.
    pub fn primary_causal(&self) -> Option<&str> {
        self.covariates
            .iter()
            .filter(|c| c.causal && c.name.starts_with("driver_"))
            .max_by(|a, b| l1(&a.coeffs).total_cmp(&l1(&b.coeffs)))
            .map(|c| c.name.as_str())
    }
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Spectral radius test on the companion matrix of `x_t = Σ a_j x_{t-j}`.
pub fn is_stable(ar: &[f64]) -> bool {
    let p = ar.len();
    if p == 0 {
        return true;
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (j, a) in ar.iter().enumerate() {
        m[(0, j)] = *a;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().all(|z| z.norm() < 1.0)
}

fn draw_ar(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, DataError> {
    for _ in 0..MAX_RESAMPLES {
        let ar: Vec<f64> = cfg
            .ar_coeffs
            .iter()
            .map(|a| if cfg.ar_jitter > 0.0 { a + rng.random_range(-cfg.ar_jitter..=cfg.ar_jitter) } else { *a })
            .collect();
        if is_stable(&ar) {
            return Ok(ar);
        }
    }
    Err(DataError::Generation(format!(
        "no stable AR draw around {:?} after {MAX_RESAMPLES} attempts",
        cfg.ar_coeffs
    )))
}

/// Fixed random projection + tanh from a scalar source to `width` features.
fn feature_map(source: &[f64], width: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let proj: Vec<f64> = (0..width).map(|_| normal.sample(rng)).collect();
    let bias: Vec<f64> = (0..width).map(|_| 0.5 * normal.sample(rng)).collect();
    let mut out = Vec::with_capacity(source.len() * width);
    for s in source {
        out.extend(proj.iter().zip(&bias).map(|(p, b)| (p * s + b).tanh()));
    }
    out
}

fn scalar_channel(name: String, role: Role, future_known: bool, values: Vec<f64>) -> Channel {
    Channel { spec: ChannelSpec { name, modality: Modality::Ts, role, future_known, width: 1 }, values }
}

pub fn generate_var_dataset(
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(SeriesFrame, GroundTruthCausality), DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ar = draw_ar(cfg, &mut rng)?;
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let total = cfg.n_steps + cfg.burn_in;

    let drivers: Vec<Vec<f64>> = cfg
        .drivers
        .iter()
        .map(|d| {
            let innov = (1.0 - d.persistence * d.persistence).sqrt();
            let mut u = vec![0.0; total];
            u[0] = normal.sample(&mut rng);
            for t in 1..total {
                u[t] = d.persistence * u[t - 1] + innov * normal.sample(&mut rng);
            }
            u
        })
        .collect();

    let mut x = vec![0.0; total];
    for t in 0..total {
        let mut v = cfg.noise_std * normal.sample(&mut rng);
        for (j, a) in ar.iter().enumerate() {
            if t > j {
                v += a * x[t - j - 1];
            }
        }
        for (d, u) in cfg.drivers.iter().zip(&drivers) {
            for (j, c) in d.coeffs.iter().enumerate() {
                if t > j {
                    v += c * u[t - j - 1];
                }
            }
        }
        x[t] = v;
    }

    let reverse: Vec<Vec<f64>> = cfg
        .reverse_decoys
        .iter()
        .map(|d| {
            (0..total)
                .map(|t| {
                    let prev = if t > 0 { x[t - 1] } else { 0.0 };
                    d * prev + normal.sample(&mut rng)
                })
                .collect()
        })
        .collect();
    let noise: Vec<Vec<f64>> =
        (0..cfg.noise_decoys).map(|_| (0..total).map(|_| normal.sample(&mut rng)).collect()).collect();

    let keep = |v: &[f64]| v[cfg.burn_in..].to_vec();
    let mut channels = vec![scalar_channel("target".into(), Role::Target, false, keep(&x))];
    let mut truth = Vec::new();
    for (i, (d, u)) in cfg.drivers.iter().zip(&drivers).enumerate() {
        let name = format!("driver_{i}");
        channels.push(scalar_channel(name.clone(), Role::Covariate, d.future_known, keep(u)));
        let lag = d.coeffs.iter().rposition(|c| *c != 0.0).map_or(0, |p| p + 1);
        truth.push(CovariateTruth { name, causal: lag > 0, coeffs: d.coeffs.clone(), lag });
    }
    for (i, v) in reverse.iter().enumerate() {
        let name = format!("reverse_{i}");
        channels.push(scalar_channel(name.clone(), Role::Covariate, false, keep(v)));
        truth.push(CovariateTruth { name, causal: false, coeffs: vec![], lag: 0 });
    }
    for (i, w) in noise.iter().enumerate() {
        let name = format!("noise_{i}");
        channels.push(scalar_channel(name.clone(), Role::Covariate, false, keep(w)));
        truth.push(CovariateTruth { name, causal: false, coeffs: vec![], lag: 0 });
    }

    let mut foreign: Vec<(Channel, CovariateTruth)> = Vec::new();
    if let Some(m) = cfg.driver_features {
        let name = format!("{m}_driver");
        let values = feature_map(&keep(&drivers[0]), cfg.feature_width, &mut rng);
        let d = &cfg.drivers[0];
        let lag = d.coeffs.iter().rposition(|c| *c != 0.0).map_or(0, |p| p + 1);
        foreign.push((
            Channel {
                spec: ChannelSpec {
                    name: name.clone(),
                    modality: m,
                    role: Role::Covariate,
                    future_known: d.future_known,
                    width: cfg.feature_width,
                },
                values,
            },
            CovariateTruth { name, causal: lag > 0, coeffs: d.coeffs.clone(), lag },
        ));
    }
    for (i, m) in cfg.foreign_decoys.iter().enumerate() {
        let name = format!("{m}_noise_{i}");
        let src: Vec<f64> = (0..cfg.n_steps).map(|_| normal.sample(&mut rng)).collect();
        let values = feature_map(&src, cfg.feature_width, &mut rng);
        foreign.push((
            Channel {
                spec: ChannelSpec {
                    name: name.clone(),
                    modality: *m,
                    role: Role::Covariate,
                    future_known: false,
                    width: cfg.feature_width,
                },
                values,
            },
            CovariateTruth { name, causal: false, coeffs: vec![], lag: 0 },
        ));
    }
    foreign.sort_by_key(|(c, _)| c.spec.modality);
    for (c, t) in foreign {
        channels.push(c);
        truth.push(t);
    }

    let frame = SeriesFrame::new(channels, 0)?;
    Ok((frame, GroundTruthCausality { ar_coeffs: ar, covariates: truth }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_frame() {
        let cfg = GeneratorConfig::default();
        let (a, ta) = generate_var_dataset(&cfg, 11).unwrap();
        let (b, tb) = generate_var_dataset(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_var_dataset(&cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_layout() {
        let (f, truth) = generate_var_dataset(&GeneratorConfig::default(), 1).unwrap();
        assert_eq!(f.len(), 5000);
        let names: Vec<&str> = f.channels().iter().map(|c| c.spec.name.as_str()).collect();
        assert_eq!(names, ["target", "driver_0", "reverse_0", "noise_0", "txt_noise_0"]);
        assert_eq!(truth.primary_causal(), Some("driver_0"));
        assert_eq!(truth.covariates.iter().filter(|c| c.causal).count(), 1);
        assert_eq!(truth.covariates.iter().filter(|c| !c.causal).count(), 3);
        assert!(f.channel(1).spec.future_known);
        assert_eq!(f.channel(4).spec.width, 8);
    }

    #[test]
    fn stability_check() {
        assert!(is_stable(&[0.5]));
        assert!(!is_stable(&[1.1]));
        assert!(is_stable(&[0.6, -0.2]));
        assert!(!is_stable(&[0.5, 0.6]));
    }

    #[test]
    fn unstable_spec_fails_after_resampling() {
        let cfg = GeneratorConfig { ar_coeffs: vec![1.5], ar_jitter: 0.01, ..Default::default() };
        assert!(matches!(generate_var_dataset(&cfg, 0), Err(DataError::Generation(_))));
    }

    #[test]
    fn preconditions_enforced() {
        let short = GeneratorConfig { n_steps: 100, ..Default::default() };
        assert!(matches!(generate_var_dataset(&short, 0), Err(DataError::Config(_))));
        let quiet = GeneratorConfig { noise_std: 0.0, ..Default::default() };
        assert!(matches!(generate_var_dataset(&quiet, 0), Err(DataError::Config(_))));
    }

    #[test]
    fn driver_feature_channel_is_vector_valued() {
        let cfg = GeneratorConfig { driver_features: Some(Modality::Txt), feature_width: 4, ..Default::default() };
        let (f, truth) = generate_var_dataset(&cfg, 3).unwrap();
        let idx = f.channel_index("txt_driver").unwrap();
        assert_eq!(f.channel(idx).values.len(), 5000 * 4);
        assert!(truth.covariates.iter().any(|c| c.name == "txt_driver" && c.causal));
    }
}
