//! Monte-Carlo miss-probability sweeps.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Detector, ExperimentConfig};
use crate::channel::{add_awgn, apply_channel, ChannelProfile, ShapingConfig};
use crate::detectors::{detect_multi_dd, detect_single};
use crate::error::Result;
use crate::gridmath::{build_root_set, GridConfig, RootSet};
use crate::sensing::{build_sensing_matrix, ost_detect, SensingMatrix};
use crate::sequences::PreambleBank;
use crate::transforms::{dzt, TdSignal};

/// Independent generator for trial `trial` at SNR index `snr_index`.
///
/// The 32-byte seed is read from a ChaCha8 stream keyed by the master seed,
/// with stream id `snr_index` and block position `trial`, so any trial can be
/// regenerated without replaying the others.
pub fn trial_rng(master: u64, snr_index: usize, trial: usize) -> ChaCha8Rng {
    let mut root = ChaCha8Rng::seed_from_u64(master);
    root.set_stream(snr_index as u64);
    root.set_word_pos(trial as u128 * 16);
    let mut seed = [0u8; 32];
    root.fill_bytes(&mut seed);
    ChaCha8Rng::from_seed(seed)
}

/// Immutable state shared by every trial of a sweep.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: GridConfig,
    pub roots: RootSet,
    pub bank: PreambleBank,
    pub profile: Option<ChannelProfile>,
    pub shaping: ShapingConfig,
    pub shifts: Vec<u64>,
    pub detectors: Vec<Detector>,
    pub sensing: Option<SensingMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutcome {
    pub detector: Detector,
    /// One flag per transmitted root, in transmission order.
    pub hits: Vec<bool>,
    pub elapsed: Duration,
}

impl DetectorOutcome {
    pub fn misses(&self) -> usize {
        self.hits.iter().filter(|h| !**h).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub transmitted: Vec<u64>,
    pub outcomes: Vec<DetectorOutcome>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        Self::with_matrix(config, None)
    }

    /// Uses `matrix` as the dictionary instead of building one; it must
    /// cover every configured root.
    pub fn with_matrix(config: &ExperimentConfig, matrix: Option<SensingMatrix>) -> Result<Self> {
        config.validate()?;
        let grid = config.grid_config()?;
        let roots = build_root_set(&grid, config.roots)?;
        let detectors = config.detectors();
        let needs_matrix = detectors.iter().any(|d| *d != Detector::Alg1);
        let sensing = match matrix {
            Some(a) => {
                if a.grid().m() != grid.m() || a.grid().n() != grid.n() {
                    return Err(crate::Error::ShapeMismatch(
                        "sensing matrix built for a different grid".into(),
                    ));
                }
                if let Some(u) = roots.iter().find(|&u| !a.contains_root(u)) {
                    return Err(crate::Error::UnknownRoot(u));
                }
                Some(a)
            }
            None if needs_matrix => Some(build_sensing_matrix(
                &roots,
                &grid,
                &config.sensing_config()?,
            )?),
            None => None,
        };
        Ok(Self {
            grid,
            bank: PreambleBank::new(&roots),
            roots,
            profile: config.channel_profile()?,
            shaping: config.shaping,
            shifts: config.shifts(),
            detectors,
            sensing,
            config: config.clone(),
        })
    }

    pub fn users(&self) -> usize {
        self.config.users
    }

    /// `K` distinct roots drawn uniformly from the root set.
    pub fn draw_roots<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        sample(rng, self.roots.len(), self.users())
            .into_iter()
            .map(|i| self.roots.as_slice()[i])
            .collect()
    }

    /// Sum of independently faded preambles plus noise.
    pub fn received<R: Rng + ?Sized>(
        &self,
        transmitted: &[u64],
        snr_db: f64,
        rng: &mut R,
    ) -> Result<TdSignal> {
        let mut y = TdSignal::zeros(self.grid);
        for &u in transmitted {
            let pre = self.bank.get(u).ok_or(crate::Error::UnknownRoot(u))?;
            let faded = match &self.profile {
                Some(p) => apply_channel(&pre.td, &p.sample(rng), &self.shaping)?,
                None => pre.td.clone(),
            };
            for (acc, v) in y.samples_mut().iter_mut().zip(faded.samples()) {
                *acc += v;
            }
        }
        Ok(add_awgn(&y, snr_db, rng))
    }

    /// Detected roots, or an empty list when the detector gives up.
    pub fn detect(&self, detector: Detector, y: &TdSignal) -> Vec<u64> {
        let k = self.users();
        let res = match detector {
            Detector::Alg1 => detect_single(y, self.config.shift, &self.roots).map(|r| r.detected),
            Detector::Alg2 => {
                let a = self.sensing.as_ref().expect("matrix built for alg2");
                let y_dd = dzt(y);
                detect_multi_dd(y, y_dd.as_slice(), &self.shifts, k, a, &self.roots)
                    .map(|r| r.detected)
            }
            Detector::Ost => {
                let a = self.sensing.as_ref().expect("matrix built for ost");
                let y_dd = dzt(y);
                ost_detect(a, y_dd.as_slice(), k).map(|r| r.roots())
            }
        };
        res.unwrap_or_default()
    }

    pub fn run_trial(&self, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
        let transmitted = self.draw_roots(rng);
        let y = self.received(&transmitted, snr_db, rng)?;
        let outcomes = self
            .detectors
            .iter()
            .map(|&d| {
                let start = Instant::now();
                let found = self.detect(d, &y);
                let elapsed = start.elapsed();
                DetectorOutcome {
                    detector: d,
                    hits: transmitted.iter().map(|u| found.contains(u)).collect(),
                    elapsed,
                }
            })
            .collect();
        Ok(TrialOutcome {
            transmitted,
            outcomes,
        })
    }
}

/// One `(detector, SNR)` point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub detector: String,
    pub snr_db: f64,
    pub trials: usize,
    pub misses: usize,
    pub p_md: f64,
    pub stderr_p_md: f64,
    pub mean_ms_per_trial: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    /// Detector-major, SNR ascending in configuration order.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn rows_for(&self, detector: Detector) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.detector == detector.name())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    result.write_csv(std::fs::File::create(path)?)
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| crate::Error::Config {
                    path: "threads".into(),
                    message: e.to_string(),
                })?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs every configured trial; timings exclude preamble and dictionary setup.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let exp = Experiment::new(cfg)?;
    run_sweep_with(&exp)
}

pub fn run_sweep_with(exp: &Experiment) -> Result<SweepResult> {
    let cfg = &exp.config;
    let k = cfg.users;
    with_threads(cfg.threads, || {
        let mut per_snr = Vec::with_capacity(cfg.snr_grid_db.len());
        for (si, &snr) in cfg.snr_grid_db.iter().enumerate() {
            let trials: Vec<TrialOutcome> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| exp.run_trial(snr, &mut trial_rng(cfg.seed, si, t)))
                .collect::<Result<_>>()?;
            per_snr.push(trials);
        }
        let mut rows = Vec::new();
        for (di, &d) in exp.detectors.iter().enumerate() {
            for (si, trials) in per_snr.iter().enumerate() {
                let misses: usize = trials.iter().map(|t| t.outcomes[di].misses()).sum();
                let total = (trials.len() * k) as f64;
                let p = misses as f64 / total;
                let ms = cfg.timing.then(|| {
                    trials
                        .iter()
                        .map(|t| t.outcomes[di].elapsed.as_secs_f64() * 1e3)
                        .sum::<f64>()
                        / trials.len() as f64
                });
                rows.push(SweepRow {
                    detector: d.name().to_string(),
                    snr_db: cfg.snr_grid_db[si],
                    trials: trials.len(),
                    misses,
                    p_md: p,
                    stderr_p_md: (p * (1.0 - p) / total).sqrt(),
                    mean_ms_per_trial: ms,
                });
            }
        }
        let result = SweepResult { rows };
        if let Some(path) = &cfg.output {
            emit_csv(&result, path)?;
        }
        Ok(result)
    })?
}

/// SNR at which a miss curve first falls to `target`, by linear
/// interpolation of `p_md` between adjacent grid points.
pub fn snr_at_p_md(rows: &[&SweepRow], target: f64) -> Option<f64> {
    let first = rows.first()?;
    if first.p_md <= target {
        return (first.p_md == target).then_some(first.snr_db);
    }
    rows.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a.p_md > target && b.p_md <= target)
            .then(|| a.snr_db + (a.p_md - target) / (a.p_md - b.p_md) * (b.snr_db - a.snr_db))
    })
}
