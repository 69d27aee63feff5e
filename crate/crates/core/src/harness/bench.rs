//! Wall-time scaling of the detectors across grid sizes.
//!
//! The root count tracks the grid (`G = round(MN / 4)`, capped by the number
//! of admissible roots) and the dictionary shift grid is held at 3 x 3, so
//! the OST matvec grows as `MN^2` while the chirp detectors grow as
//! `MN log MN`. Dictionary construction is excluded from every timing.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::Detector;
use super::sweep::with_threads;
use crate::channel::add_awgn;
use crate::detectors::{detect_multi_dd, detect_single};
use crate::error::Result;
use crate::gridmath::{build_root_set, default_shifts, valid_root_count, GridConfig};
use crate::sensing::{build_sensing_matrix, ost_detect, SensingConfig};
use crate::sequences::zc_sequence;
use crate::transforms::{dzt, TdSignal};

pub const DEFAULT_BENCH_GRIDS: [(usize, usize); 4] = [(7, 9), (15, 17), (31, 37), (63, 65)];

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub grids: Vec<(usize, usize)>,
    pub detectors: Vec<Detector>,
    pub repetitions: usize,
    /// Users superposed for the multi-user timings.
    pub users: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            grids: DEFAULT_BENCH_GRIDS.to_vec(),
            detectors: vec![Detector::Alg1, Detector::Ost],
            repetitions: 15,
            users: 5,
            snr_db: 10.0,
            seed: 0,
            threads: Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub detector: String,
    pub m: usize,
    pub n: usize,
    pub mn: usize,
    pub roots: usize,
    pub repetitions: usize,
    pub median_ms: f64,
    pub min_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    /// Least-squares slope of `log(median)` against `log(MN)`.
    pub fn slope(&self, detector: Detector) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.detector == detector.name())
            .map(|r| ((r.mn as f64).ln(), r.median_ms.ln()))
            .collect();
        loglog_slope(&pts)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn emit_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fixed 3 x 3 translate grid used for every benchmark size.
pub fn bench_sensing_config() -> SensingConfig {
    SensingConfig {
        delay_shifts: vec![0, 1, 2],
        doppler_shifts: vec![-1, 0, 1],
    }
}

fn time_ms(reps: usize, mut f: impl FnMut()) -> (f64, f64) {
    // one untimed call warms FFT plans and caches
    f();
    let samples: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    (median(samples), min)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult> {
    with_threads(cfg.threads, || {
        let mut rows = Vec::new();
        for &(m, n) in &cfg.grids {
            let grid = GridConfig::new(m, n, 30e3, 0.0, 0.0)?;
            let mn = grid.mn();
            let g = ((mn as f64 / 4.0).round() as usize)
                .clamp(cfg.users.max(1), valid_root_count(&grid));
            let roots = build_root_set(&grid, g)?;
            let shifts = default_shifts(&grid, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let single = add_awgn(
                &zc_sequence(roots.as_slice()[g / 2], &grid)?,
                cfg.snr_db,
                &mut rng,
            );
            let mut multi = TdSignal::zeros(grid);
            for &u in roots
                .as_slice()
                .iter()
                .step_by((g / cfg.users.max(1)).max(1))
                .take(cfg.users)
            {
                let x = zc_sequence(u, &grid)?;
                for (a, b) in multi.samples_mut().iter_mut().zip(x.samples()) {
                    *a += b;
                }
            }
            let multi = add_awgn(&multi, cfg.snr_db, &mut rng);
            let needs_matrix = cfg.detectors.iter().any(|d| *d != Detector::Alg1);
            let matrix = if needs_matrix {
                Some(build_sensing_matrix(
                    &roots,
                    &grid,
                    &bench_sensing_config(),
                )?)
            } else {
                None
            };
            for &d in &cfg.detectors {
                let (median_ms, min_ms) = match d {
                    Detector::Alg1 => time_ms(cfg.repetitions, || {
                        let _ = std::hint::black_box(detect_single(&single, shifts[0], &roots));
                    }),
                    Detector::Alg2 => {
                        let a = matrix.as_ref().expect("matrix built");
                        time_ms(cfg.repetitions, || {
                            let y_dd = dzt(&multi);
                            let _ = std::hint::black_box(detect_multi_dd(
                                &multi,
                                y_dd.as_slice(),
                                &shifts,
                                cfg.users,
                                a,
                                &roots,
                            ));
                        })
                    }
                    Detector::Ost => {
                        let a = matrix.as_ref().expect("matrix built");
                        time_ms(cfg.repetitions, || {
                            let y_dd = dzt(&single);
                            let _ = std::hint::black_box(ost_detect(a, y_dd.as_slice(), 1));
                        })
                    }
                };
                rows.push(BenchRow {
                    detector: d.name().to_string(),
                    m,
                    n,
                    mn,
                    roots: g,
                    repetitions: cfg.repetitions,
                    median_ms,
                    min_ms,
                });
            }
        }
        Ok(BenchResult { rows })
    })?
}
