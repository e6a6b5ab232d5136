//! Variation functions (measurement noise models): densities, samplers,
//! closed-form information intensities and a Monte Carlo Fisher-information
//! estimator.
//!
//! The noise models couple to the true dissimilarity `g` as follows:
//!
//! | model | coupling |
//! |-------|----------|
//! | Normal | mean `g`, fixed `σ` |
//! | NormalPathloss | mean `g`, variance `β g^α` |
//! | VonMises | circular mean `g`, concentration `ω` |
//! | Nakagami | spread `Υ = g²` (so `E[r²] = g²`) |
//! | Gamma | mean `κυ = g` (so `υ = g/κ`) |

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec::{chunks, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NoiseModel {
    Normal { sigma: f64 },
    NormalPathloss { alpha: f64, beta: f64 },
    VonMises { omega: f64 },
    Nakagami { m: f64 },
    Gamma { kappa: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseModel::Normal { sigma } => sigma > 0.0 && sigma.is_finite(),
            NoiseModel::NormalPathloss { alpha, beta } => alpha >= 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            NoiseModel::VonMises { omega } => omega > 0.0 && omega.is_finite(),
            NoiseModel::Nakagami { m } => m >= 0.5 && m.is_finite(),
            NoiseModel::Gamma { kappa } => kappa > 2.0 && kappa.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?} violates its parameter constraints")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Normal { .. } => "normal",
            NoiseModel::NormalPathloss { .. } => "normal_pathloss",
            NoiseModel::VonMises { .. } => "von_mises",
            NoiseModel::Nakagami { .. } => "nakagami",
            NoiseModel::Gamma { .. } => "gamma",
        }
    }

    /// Returns a copy with the named parameter replaced (used by sweeps).
    pub fn with_param(&self, name: &str, value: f64) -> Result<NoiseModel> {
        let mut out = *self;
        let slot = match (&mut out, name) {
            (NoiseModel::Normal { sigma }, "sigma") => sigma,
            (NoiseModel::NormalPathloss { alpha, .. }, "alpha") => alpha,
            (NoiseModel::NormalPathloss { beta, .. }, "beta") => beta,
            (NoiseModel::VonMises { omega }, "omega") => omega,
            (NoiseModel::Nakagami { m }, "m") => m,
            (NoiseModel::Gamma { kappa }, "kappa") => kappa,
            _ => {
                return Err(Error::Validation(format!(
                    "noise model {} has no parameter '{name}'",
                    self.name()
                )))
            }
        };
        *slot = value;
        out.validate()?;
        Ok(out)
    }

    fn needs_positive_g(&self) -> bool {
        matches!(
            self,
            NoiseModel::NormalPathloss { .. } | NoiseModel::Nakagami { .. } | NoiseModel::Gamma { .. }
        )
    }
}

/// Which closed form backs the Nakagami intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NakagamiSource {
    /// `(4m + 1) / Υ`.
    Table,
    /// `m(4m - 3) / (Υ(m - 1))`, defined for `m > 1`.
    Appendix,
    /// `4m / Υ`, exact for the `Υ = g²` coupling.
    #[default]
    Exact,
    /// Exact value, but fails unless both other forms agree with it.
    Strict,
}

/// Which closed form backs the Gamma intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSource {
    /// `1 / (υ²(κ - 2))`.
    Appendix,
    /// `κ / g²`, exact for the `κυ = g` coupling.
    #[default]
    Exact,
}

/// Which closed form backs the von Mises intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VonMisesSource {
    /// `ω² / 2`.
    Appendix,
    /// `ω I₁(ω) / I₀(ω)`.
    #[default]
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IntensityOptions {
    pub von_mises: VonMisesSource,
    pub nakagami: NakagamiSource,
    pub gamma: GammaSource,
}

/// Relative agreement required by [`NakagamiSource::Strict`].
pub const STRICT_REL_TOL: f64 = 1e-2;

pub fn von_mises_appendix_fisher(omega: f64) -> f64 {
    omega * omega / 2.0
}

/// `E[(ω sin(r − μ))²] = ω² (1 − I₂/I₀) / 2 = ω I₁(ω)/I₀(ω)`.
pub fn von_mises_exact_fisher(omega: f64) -> f64 {
    omega * bessel_i1_i0_ratio(omega)
}

/// `I₁(x) / I₀(x)` by backward recurrence on `r_ν = I_{ν+1}/I_ν`.
pub fn bessel_i1_i0_ratio(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let ax = x.abs();
    let start = (ax + 60.0 + 8.0 * ax.sqrt()) as usize;
    let mut r = 0.0;
    for nu in (0..start).rev() {
        r = 1.0 / (2.0 * (nu as f64 + 1.0) / ax + r);
    }
    r.copysign(x)
}

pub fn nakagami_table_fisher(m: f64, g: f64) -> f64 {
    (4.0 * m + 1.0) / (g * g)
}

pub fn nakagami_appendix_fisher(m: f64, g: f64) -> Result<f64> {
    if m <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "appendix Nakagami formula needs m > 1 (got {m})"
        )));
    }
    Ok(m * (4.0 * m - 3.0) / (g * g * (m - 1.0)))
}

/// `4m / Υ`: the score is `2m (r² − g²) / g³` and `Var(r²) = g⁴ / m`.
pub fn nakagami_exact_fisher(m: f64, g: f64) -> f64 {
    4.0 * m / (g * g)
}

pub fn gamma_appendix_fisher(kappa: f64, g: f64) -> f64 {
    let scale = g / kappa;
    1.0 / (scale * scale * (kappa - 2.0))
}

/// `κ / g²`: the score is `κ (r − g) / g²` and `Var(r) = g² / κ`.
pub fn gamma_exact_fisher(kappa: f64, g: f64) -> f64 {
    kappa / (g * g)
}

fn check_g(model: &NoiseModel, g: f64) -> Result<()> {
    if !g.is_finite() || (model.needs_positive_g() && g <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{} needs a positive finite dissimilarity (got {g})",
            model.name()
        )));
    }
    Ok(())
}

/// Fisher information `F = λ` of one measurement with respect to `g`.
pub fn fisher_information(model: &NoiseModel, g: f64, opts: &IntensityOptions) -> Result<f64> {
    model.validate()?;
    check_g(model, g)?;
    match *model {
        NoiseModel::Normal { sigma } => Ok(1.0 / (sigma * sigma)),
        NoiseModel::NormalPathloss { alpha, beta } => {
            Ok(1.0 / (beta * g.powf(alpha)) + alpha * alpha / (2.0 * g * g))
        }
        NoiseModel::VonMises { omega } => Ok(match opts.von_mises {
            VonMisesSource::Appendix => von_mises_appendix_fisher(omega),
            VonMisesSource::Exact => von_mises_exact_fisher(omega),
        }),
        NoiseModel::Nakagami { m } => match opts.nakagami {
            NakagamiSource::Table => Ok(nakagami_table_fisher(m, g)),
            NakagamiSource::Appendix => nakagami_appendix_fisher(m, g),
            NakagamiSource::Exact => Ok(nakagami_exact_fisher(m, g)),
            NakagamiSource::Strict => {
                let oracle = nakagami_exact_fisher(m, g);
                let table = nakagami_table_fisher(m, g);
                let appendix = nakagami_appendix_fisher(m, g).unwrap_or(f64::INFINITY);
                let off = |v: f64| (v - oracle).abs() > STRICT_REL_TOL * oracle;
                if off(table) || off(appendix) {
                    return Err(Error::UnresolvedIntensity(format!(
                        "Nakagami m = {m}: exact {oracle:.6}, table {table:.6}, appendix {appendix:.6}"
                    )));
                }
                Ok(oracle)
            }
        },
        NoiseModel::Gamma { kappa } => match opts.gamma {
            GammaSource::Appendix => Ok(gamma_appendix_fisher(kappa, g)),
            GammaSource::Exact => Ok(gamma_exact_fisher(kappa, g)),
        },
    }
}

/// Information intensity `√F`.
pub fn intensity(model: &NoiseModel, g: f64, opts: &IntensityOptions) -> Result<f64> {
    fisher_information(model, g, opts).map(f64::sqrt)
}

/// `ln I₀(x)` for `x ≥ 0`.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 50.0 {
        // Σ (x²/4)^k / (k!)²
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum.ln()
    } else {
        // e^x / sqrt(2πx) Σ ((2k-1)!!)² / (k! (8x)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            let kf = k as f64;
            term *= (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
            sum += term;
        }
        x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
    }
}

/// Log-density with its `g`-independent constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct LogDensity {
    model: NoiseModel,
    constant: f64,
}

impl LogDensity {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        model.validate()?;
        let constant = match *model {
            NoiseModel::Normal { sigma } => -0.5 * (2.0 * PI * sigma * sigma).ln(),
            NoiseModel::NormalPathloss { .. } => -0.5 * (2.0 * PI).ln(),
            NoiseModel::VonMises { omega } => -((2.0 * PI).ln() + ln_bessel_i0(omega)),
            NoiseModel::Nakagami { m } => 2f64.ln() + m * m.ln() - ln_gamma(m),
            NoiseModel::Gamma { kappa } => -ln_gamma(kappa),
        };
        Ok(Self { model: *model, constant })
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn log_pdf(&self, r: f64, g: f64) -> Result<f64> {
        check_g(&self.model, g)?;
        match self.model {
            NoiseModel::Normal { sigma } => {
                let z = (r - g) / sigma;
                Ok(self.constant - 0.5 * z * z)
            }
            NoiseModel::NormalPathloss { alpha, beta } => {
                let var = beta * g.powf(alpha);
                Ok(self.constant - 0.5 * var.ln() - 0.5 * (r - g) * (r - g) / var)
            }
            NoiseModel::VonMises { omega } => {
                if !(-PI..=PI).contains(&r) {
                    return Err(Error::OutOfSupport { r });
                }
                Ok(self.constant + omega * (r - g).cos())
            }
            NoiseModel::Nakagami { m } => {
                if r <= 0.0 {
                    return Err(Error::OutOfSupport { r });
                }
                let spread = g * g;
                Ok(self.constant - m * spread.ln() + (2.0 * m - 1.0) * r.ln() - m * r * r / spread)
            }
            NoiseModel::Gamma { kappa } => {
                if r <= 0.0 {
                    return Err(Error::OutOfSupport { r });
                }
                let scale = g / kappa;
                Ok(self.constant - kappa * scale.ln() + (kappa - 1.0) * r.ln() - r / scale)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, g: f64, rng: &mut R) -> f64 {
        sample_model(&self.model, g, rng)
    }
}

pub fn log_pdf(model: &NoiseModel, r: f64, g: f64) -> Result<f64> {
    LogDensity::new(model)?.log_pdf(r, g)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Best–Fisher rejection sampler for the von Mises distribution.
fn sample_von_mises<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return wrap_pi(rng.random_range(-PI..PI));
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let s = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + s * z) / (s + z);
        let c = kappa * (s - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let theta = f.clamp(-1.0, 1.0).acos();
            let theta = if u3 < 0.5 { -theta } else { theta };
            return wrap_pi(mu + theta);
        }
    }
}

fn sample_model<R: Rng + ?Sized>(model: &NoiseModel, g: f64, rng: &mut R) -> f64 {
    match *model {
        NoiseModel::Normal { sigma } => g + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal),
        NoiseModel::NormalPathloss { alpha, beta } => {
            let sd = (beta * g.powf(alpha)).sqrt();
            g + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
        }
        NoiseModel::VonMises { omega } => sample_von_mises(g, omega, rng),
        NoiseModel::Nakagami { m } => {
            // r² ~ Gamma(m, Υ/m)
            let spread = g * g;
            GammaDist::new(m, spread / m).expect("validated").sample(rng).sqrt()
        }
        NoiseModel::Gamma { kappa } => GammaDist::new(kappa, g / kappa).expect("validated").sample(rng),
    }
}

/// Draws one measurement around the true dissimilarity `g`.
pub fn sample<R: Rng + ?Sized>(model: &NoiseModel, g: f64, rng: &mut R) -> Result<f64> {
    model.validate()?;
    check_g(model, g)?;
    Ok(sample_model(model, g, rng))
}

/// RNG for work item `index` of a run seeded with `seed`. Streams are keyed by
/// index, never by worker, so results do not depend on the thread count.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    /// Number of standard errors between the estimate and `reference`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference).abs() / self.std_error
    }
}

pub const MC_FISHER_MIN_SAMPLES: usize = 100_000;
const MC_CHUNK: usize = 8192;

/// Default score step: `1e-4 · max(1, |g|)`.
pub fn default_fd_step(g: f64) -> f64 {
    1e-4 * g.abs().max(1.0)
}

/// `E[(∂ ln p / ∂g)²]` by sampling, with the score taken as a central finite
/// difference of the log-density in `g`.
pub fn mc_fisher(
    model: &NoiseModel,
    g: f64,
    n_samples: usize,
    fd_step: Option<f64>,
    seed: u64,
    exec: Exec,
) -> Result<McEstimate> {
    if n_samples < MC_FISHER_MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "mc_fisher needs at least {MC_FISHER_MIN_SAMPLES} samples"
        )));
    }
    let density = LogDensity::new(model)?;
    check_g(model, g)?;
    let h = fd_step.unwrap_or_else(|| default_fd_step(g));
    if h <= 0.0 || (model.needs_positive_g() && h >= g) {
        return Err(Error::InvalidParameter(format!("bad finite-difference step {h}")));
    }
    let parts = chunks(n_samples, MC_CHUNK);
    let per_chunk: Vec<Result<Vec<f64>>> = exec.map(parts.len(), |c| {
        let (lo, hi) = parts[c];
        let mut rng = stream_rng(seed, c as u64);
        (lo..hi)
            .map(|_| {
                let r = density.sample(g, &mut rng);
                let score = (density.log_pdf(r, g + h)? - density.log_pdf(r, g - h)?) / (2.0 * h);
                Ok(score * score)
            })
            .collect()
    });
    let mut sq = Vec::with_capacity(n_samples);
    for part in per_chunk {
        sq.extend(part?);
    }
    let (value, std_error) = crate::stats::mean_se(&sq);
    Ok(McEstimate { value, std_error, samples: n_samples })
}
