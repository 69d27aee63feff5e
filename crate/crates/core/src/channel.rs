//! Doubly-selective multipath channel: fractional delays through band-limited
//! pulse interpolation, per-path Doppler, AWGN and K-user superposition.
//!
//! Frames are treated as one period of a cyclic signal, so delays wrap
//! modulo MN. The delay-domain interpolation kernel is the raised-cosine
//! response of an RRC transmit filter followed by its matched RRC receive
//! filter; unlike the bare RRC pulse it is Nyquist, so integer delays are
//! exact cyclic shifts. Taps are rescaled per path to unit energy, which
//! keeps the mean received power equal to the path power for white inputs
//! such as ZC sequences.
//!
//! Doppler is applied as an exact complex exponential at the sample
//! instants. Doppler-axis shaping is not modelled in the time domain.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::TdSignal;

const SINGULAR_TOL: f64 = 1e-10;

fn check_roll_off(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidRollOff(beta))
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Root-raised-cosine pulse with unit symbol period, removable singularities
/// at `x = 0` and `|x| = 1/(4 beta)` filled in with their limits.
pub fn rrc_kernel(x: f64, beta: f64) -> Result<f64> {
    check_roll_off(beta)?;
    if x == 0.0 {
        return Ok(1.0 - beta + 4.0 * beta / PI);
    }
    if beta > 0.0 && (1.0 - (4.0 * beta * x).powi(2)).abs() < SINGULAR_TOL {
        let arg = PI / (4.0 * beta);
        return Ok(
            beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos())
        );
    }
    let num = (PI * x * (1.0 - beta)).sin() + 4.0 * beta * x * (PI * x * (1.0 + beta)).cos();
    let den = PI * x * (1.0 - (4.0 * beta * x).powi(2));
    Ok(num / den)
}

/// Raised-cosine pulse, the autocorrelation of [`rrc_kernel`].
pub fn rc_kernel(x: f64, beta: f64) -> Result<f64> {
    check_roll_off(beta)?;
    if beta > 0.0 && (1.0 - (2.0 * beta * x).powi(2)).abs() < SINGULAR_TOL {
        return Ok(PI / 4.0 * sinc(1.0 / (2.0 * beta)));
    }
    Ok(sinc(x) * (PI * beta * x).cos() / (1.0 - (2.0 * beta * x).powi(2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingConfig {
    pub beta_tau: f64,
    pub beta_nu: f64,
    #[serde(default = "ShapingConfig::default_halfwidth")]
    pub kernel_halfwidth: usize,
    /// Doppler-axis shaping; only the `false` setting is supported by the
    /// time-domain simulator.
    #[serde(default)]
    pub doppler_shaping: bool,
}

impl ShapingConfig {
    fn default_halfwidth() -> usize {
        16
    }

    pub fn validate(&self) -> Result<()> {
        check_roll_off(self.beta_tau)?;
        check_roll_off(self.beta_nu)?;
        if self.doppler_shaping {
            return Err(Error::Config {
                path: "shaping.doppler_shaping".into(),
                message: "Doppler-axis shaping is not available in the time-domain channel".into(),
            });
        }
        Ok(())
    }
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            beta_tau: 0.6,
            beta_nu: 0.6,
            kernel_halfwidth: 16,
            doppler_shaping: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

/// One user's propagation paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    paths: Vec<Path>,
}

impl ChannelRealization {
    /// Paths must carry unit total power and non-negative delays.
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidProfile("no paths".into()));
        }
        let power: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
        if (power - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProfile(format!(
                "path powers sum to {power}, expected 1"
            )));
        }
        if paths
            .iter()
            .any(|p| p.delay_s.is_nan() || p.delay_s < 0.0 || !p.doppler_hz.is_finite())
        {
            return Err(Error::InvalidProfile("negative or non-finite path".into()));
        }
        Ok(Self { paths })
    }

    pub fn identity() -> Self {
        Self::single(0.0, 0.0)
    }

    pub fn single(delay_s: f64, doppler_hz: f64) -> Self {
        Self {
            paths: vec![Path {
                gain: Complex64::new(1.0, 0.0),
                delay_s,
                doppler_hz,
            }],
        }
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTap {
    pub delay_us: f64,
    pub power_db: f64,
}

/// Power-delay profile plus maximum Doppler, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub paths: Vec<ProfileTap>,
    pub nu_max_hz: f64,
}

pub const VEH_A_DELAYS_US: [f64; 6] = [0.0, 0.31, 0.71, 1.09, 1.73, 2.51];
pub const VEH_A_POWERS_DB: [f64; 6] = [0.0, -1.0, -9.0, -10.0, -15.0, -20.0];

impl ChannelProfile {
    /// ITU Vehicular-A.
    pub fn veh_a(nu_max_hz: f64) -> Self {
        Self {
            paths: VEH_A_DELAYS_US
                .iter()
                .zip(VEH_A_POWERS_DB)
                .map(|(&delay_us, power_db)| ProfileTap { delay_us, power_db })
                .collect(),
            nu_max_hz,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::InvalidProfile("profile has no paths".into()));
        }
        if self
            .paths
            .iter()
            .any(|t| t.delay_us.is_nan() || t.delay_us < 0.0 || !t.power_db.is_finite())
        {
            return Err(Error::InvalidProfile("bad delay or power entry".into()));
        }
        if self.nu_max_hz.is_nan() || self.nu_max_hz < 0.0 {
            return Err(Error::InvalidProfile("nu_max_hz must be >= 0".into()));
        }
        Ok(())
    }

    pub fn max_delay_s(&self) -> f64 {
        self.paths.iter().map(|t| t.delay_us).fold(0.0, f64::max) * 1e-6
    }

    /// Uniform gain phases on `[0, 2 pi)`, magnitudes from the profile
    /// normalised to unit total power, Dopplers `nu_max cos(theta)` with
    /// `theta ~ U[-pi, pi)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let total: f64 = self
            .paths
            .iter()
            .map(|t| 10f64.powf(t.power_db / 10.0))
            .sum();
        let paths = self
            .paths
            .iter()
            .map(|t| {
                let mag = (10f64.powf(t.power_db / 10.0) / total).sqrt();
                let phase = rng.random::<f64>() * 2.0 * PI;
                let theta = rng.random::<f64>() * 2.0 * PI - PI;
                Path {
                    gain: Complex64::from_polar(mag, phase),
                    delay_s: t.delay_us * 1e-6,
                    doppler_hz: self.nu_max_hz * theta.cos(),
                }
            })
            .collect();
        ChannelRealization { paths }
    }
}

/// Veh-A realisation with Doppler spread `nu_max_hz`.
pub fn sample_veh_a<R: Rng + ?Sized>(rng: &mut R, nu_max_hz: f64) -> ChannelRealization {
    ChannelProfile::veh_a(nu_max_hz).sample(rng)
}

/// Interpolation taps for a fractional delay `frac` in `[0, 1)`, for
/// offsets `m = -L..=L`; tap `m` multiplies `x[n - d - m]`.
fn delay_taps(frac: f64, shp: &ShapingConfig) -> Result<Vec<f64>> {
    let l = shp.kernel_halfwidth as i64;
    let mut taps = (-l..=l)
        .map(|m| rc_kernel(frac - m as f64, shp.beta_tau))
        .collect::<Result<Vec<_>>>()?;
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    Ok(taps)
}

/// `y[n] = sum_i h_i x~(n/B - tau_i) exp(j 2 pi nu_i (n/B - tau_i))`.
pub fn apply_channel(
    x: &TdSignal,
    ch: &ChannelRealization,
    shp: &ShapingConfig,
) -> Result<TdSignal> {
    check_roll_off(shp.beta_tau)?;
    let grid = *x.grid();
    let mn = grid.mn() as i64;
    let bw = grid.bandwidth_hz();
    let src = x.samples();
    let half = shp.kernel_halfwidth as i64;
    let mut out = vec![Complex64::default(); src.len()];

    for path in ch.paths() {
        let delay = path.delay_s * bw;
        let d = delay.floor();
        let frac = delay - d;
        let d = d as i64;
        let integer = frac < 1e-12;
        let taps = if integer {
            Vec::new()
        } else {
            delay_taps(frac, shp)?
        };

        for (n, y) in out.iter_mut().enumerate() {
            let base = n as i64 - d;
            let delayed = if integer {
                src[base.rem_euclid(mn) as usize]
            } else {
                taps.iter()
                    .zip(-half..=half)
                    .map(|(t, m)| src[(base - m).rem_euclid(mn) as usize] * *t)
                    .sum()
            };
            let t = n as f64 / bw - path.delay_s;
            let doppler = Complex64::from_polar(1.0, 2.0 * PI * path.doppler_hz * t);
            *y += path.gain * delayed * doppler;
        }
    }
    TdSignal::new(grid, out)
}

/// Noise variance per complex sample for a given SNR.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Circularly-symmetric complex Gaussian noise with variance
/// `10^(-snr_db/10)` per sample; `snr_db = +inf` leaves `x` untouched.
pub fn add_awgn<R: Rng + ?Sized>(x: &TdSignal, snr_db: f64, rng: &mut R) -> TdSignal {
    if snr_db == f64::INFINITY {
        return x.clone();
    }
    add_noise(x, noise_variance(snr_db), rng)
}

pub(crate) fn add_noise<R: Rng + ?Sized>(x: &TdSignal, variance: f64, rng: &mut R) -> TdSignal {
    let sigma = (variance / 2.0).sqrt();
    let mut y = x.clone();
    for v in y.samples_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re, im) * sigma;
    }
    y
}

/// Elementwise sum of equal-length signals.
pub fn superpose(users: &[TdSignal]) -> Result<TdSignal> {
    let first = users.first().ok_or(Error::LengthMismatch {
        expected: 1,
        actual: 0,
    })?;
    let mut acc = first.clone();
    for u in &users[1..] {
        if u.len() != acc.len() {
            return Err(Error::LengthMismatch {
                expected: acc.len(),
                actual: u.len(),
            });
        }
        for (a, b) in acc.samples_mut().iter_mut().zip(u.samples()) {
            *a += b;
        }
    }
    Ok(acc)
}
