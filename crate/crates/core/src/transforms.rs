//! Discrete Zak transform, its inverse, the delay-axis FFT into the
//! time-frequency domain, and twisted delay-Doppler shifts.
//!
//! Every primitive root is taken as `xi_m = exp(+j 2 pi / m)`. Arrays hold the
//! fundamental period only, indexed `(k, l)` with `k` the delay bin and `l`
//! the Doppler bin; storage is delay-major (`k * N + l`), which is also the
//! vectorisation order used by the sensing matrix.
//!
//! A DD array obtained from an MN-periodic sequence is quasi-periodic:
//! `X[k + M, l] = xi_N^l X[k, l]` and `X[k, l + N] = X[k, l]`.

use std::cell::{Cell, RefCell};
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::gridmath::GridConfig;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static COUNTS: Cell<TransformCounts> = const { Cell::new(TransformCounts { dzt: 0, idzt: 0, tf: 0 }) };
}

/// Per-thread tally of transform invocations, used to check operation
/// counts of the detectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransformCounts {
    pub dzt: u64,
    pub idzt: u64,
    pub tf: u64,
}

pub fn transform_counts() -> TransformCounts {
    COUNTS.with(Cell::get)
}

pub fn reset_transform_counts() {
    COUNTS.with(|c| c.set(TransformCounts::default()));
}

fn bump(f: impl FnOnce(&mut TransformCounts)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(len)
        } else {
            p.plan_fft_inverse(len)
        }
    })
}

fn run_batched(fft: &dyn Fft<f64>, buf: &mut [Complex64]) {
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
}

/// `exp(j 2 pi e / m)` with the exponent reduced in integer arithmetic first.
pub fn unit_root_pow(e: i64, m: usize) -> Complex64 {
    let r = e.rem_euclid(m as i64) as f64;
    Complex64::from_polar(1.0, TAU * r / m as f64)
}

/// Length-MN time-domain sequence, sample `n` taken at `n / B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdSignal {
    grid: GridConfig,
    samples: Vec<Complex64>,
}

impl TdSignal {
    pub fn new(grid: GridConfig, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.mn() {
            return Err(Error::LengthMismatch {
                expected: grid.mn(),
                actual: samples.len(),
            });
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridConfig) -> Self {
        Self {
            grid,
            samples: vec![Complex64::default(); grid.mn()],
        }
    }

    pub fn from_fn(grid: GridConfig, f: impl FnMut(usize) -> Complex64) -> Self {
        Self {
            grid,
            samples: (0..grid.mn()).map(f).collect(),
        }
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// `sum_n x[n] conj(y[n])`.
    pub fn inner(&self, other: &TdSignal) -> Result<Complex64> {
        check_same(&self.grid, &other.grid)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    /// `n -> x[(n - k0) mod MN] exp(j 2 pi l0 (n - k0) / MN)`, the time-domain
    /// counterpart of [`twisted_shift`].
    pub fn delay_modulate(&self, k0: i64, l0: i64) -> TdSignal {
        let mn = self.grid.mn() as i64;
        TdSignal::from_fn(self.grid, |n| {
            let src = (n as i64 - k0).rem_euclid(mn) as usize;
            self.samples[src] * unit_root_pow(l0 * (n as i64 - k0), mn as usize)
        })
    }
}

fn check_same(a: &GridConfig, b: &GridConfig) -> Result<()> {
    if a.m() != b.m() || a.n() != b.n() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.m(),
            a.n(),
            b.m(),
            b.n()
        )));
    }
    Ok(())
}

/// Fundamental period of a quasi-periodic delay-Doppler array.
#[derive(Debug, Clone, PartialEq)]
pub struct DdArray {
    grid: GridConfig,
    values: Vec<Complex64>,
}

impl DdArray {
    pub fn new(grid: GridConfig, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.mn() {
            return Err(Error::LengthMismatch {
                expected: grid.mn(),
                actual: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridConfig) -> Self {
        Self {
            grid,
            values: vec![Complex64::default(); grid.mn()],
        }
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.values[k * self.grid.n() + l]
    }

    pub fn set(&mut self, k: usize, l: usize, v: Complex64) {
        let n = self.grid.n();
        self.values[k * n + l] = v;
    }

    /// Value at any integer `(k, l)` via the quasi-periodic extension.
    pub fn get_ext(&self, k: i64, l: i64) -> Complex64 {
        let (m, n) = (self.grid.m() as i64, self.grid.n() as i64);
        let q = k.div_euclid(m);
        let base = self.get(k.rem_euclid(m) as usize, l.rem_euclid(n) as usize);
        if q == 0 {
            base
        } else {
            base * unit_root_pow(l * q, n as usize)
        }
    }

    /// Delay-major vectorisation.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.values
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Time-frequency array produced by [`td_to_tf`]; `k` indexes frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TfArray {
    grid: GridConfig,
    values: Vec<Complex64>,
}

impl TfArray {
    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.values[k * self.grid.n() + l]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// `X[k, l] = N^-1/2 sum_n x[k + nM] xi_N^{-ln}`, one N-point FFT per delay bin.
pub fn dzt(x: &TdSignal) -> DdArray {
    let (m, n) = (x.grid.m(), x.grid.n());
    let mut buf = vec![Complex64::default(); m * n];
    for k in 0..m {
        let row = &mut buf[k * n..(k + 1) * n];
        for (i, v) in row.iter_mut().enumerate() {
            *v = x.samples[k + i * m];
        }
    }
    run_batched(plan(n, true).as_ref(), &mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    bump(|c| c.dzt += 1);
    DdArray {
        grid: x.grid,
        values: buf,
    }
}

/// Inverse of [`dzt`]: `x[k + nM] = N^-1/2 sum_l X[k, l] xi_N^{ln}`.
pub fn idzt(x: &DdArray) -> TdSignal {
    let (m, n) = (x.grid.m(), x.grid.n());
    let mut buf = x.values.clone();
    run_batched(plan(n, false).as_ref(), &mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = vec![Complex64::default(); m * n];
    for k in 0..m {
        for i in 0..n {
            out[k + i * m] = buf[k * n + i] * scale;
        }
    }
    bump(|c| c.idzt += 1);
    TdSignal {
        grid: x.grid,
        samples: out,
    }
}

/// `sum_{k,l} X[k,l] conj(Y[k,l])` over the fundamental period.
pub fn dd_inner_product(x: &DdArray, y: &DdArray) -> Result<Complex64> {
    check_same(&x.grid, &y.grid)?;
    Ok(x.values
        .iter()
        .zip(&y.values)
        .map(|(a, b)| a * b.conj())
        .sum())
}

/// Reshape into a time-delay matrix and take an M-point FFT along delay:
/// `Z[k, l] = M^-1/2 sum_n z[l + nN] xi_M^{-kn}`.
pub fn td_to_tf(z: &TdSignal) -> TfArray {
    let (m, n) = (z.grid.m(), z.grid.n());
    let mut buf = vec![Complex64::default(); m * n];
    for l in 0..n {
        let col = &mut buf[l * m..(l + 1) * m];
        for (i, v) in col.iter_mut().enumerate() {
            *v = z.samples[l + i * n];
        }
    }
    run_batched(plan(m, true).as_ref(), &mut buf);
    let scale = 1.0 / (m as f64).sqrt();
    let mut values = vec![Complex64::default(); m * n];
    for l in 0..n {
        for k in 0..m {
            values[k * n + l] = buf[l * m + k] * scale;
        }
    }
    bump(|c| c.tf += 1);
    TfArray {
        grid: z.grid,
        values,
    }
}

/// `Y[k, l] = X_ext[k - k0, l - l0] exp(j 2 pi l0 (k - k0) / MN)`.
///
/// Equals the DZT of [`TdSignal::delay_modulate`] applied in time.
pub fn twisted_shift(x: &DdArray, k0: i64, l0: i64) -> DdArray {
    let (m, n) = (x.grid.m() as i64, x.grid.n() as i64);
    let mn = (m * n) as usize;
    let mut out = DdArray::zeros(x.grid);
    for k in 0..m {
        let ks = k - k0;
        let q = ks.div_euclid(m);
        let kr = ks.rem_euclid(m) as usize;
        for l in 0..n {
            let ls = l - l0;
            // xi_N^{ls q} folded into a single exponent of xi_MN
            let e = l0 * ks + m * ls * q;
            let v = x.get(kr, ls.rem_euclid(n) as usize) * unit_root_pow(e, mn);
            out.set(k as usize, l as usize, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridConfig {
        GridConfig::new(7, 9, 30e3, 2.51e-6, 815.0).unwrap()
    }

    fn random_signal(grid: GridConfig, rng: &mut impl Rng) -> TdSignal {
        TdSignal::from_fn(grid, |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    // Independent oracles: straight double loops over the defining sums.
    fn dzt_direct(x: &TdSignal) -> Vec<Complex64> {
        let (m, n) = (x.grid().m(), x.grid().n());
        let mut out = vec![Complex64::default(); m * n];
        for k in 0..m {
            for l in 0..n {
                let mut acc = Complex64::default();
                for i in 0..n {
                    let ph = -TAU * (l * i) as f64 / n as f64;
                    acc += x.samples()[k + i * m] * Complex64::from_polar(1.0, ph);
                }
                out[k * n + l] = acc / (n as f64).sqrt();
            }
        }
        out
    }

    fn tf_direct(z: &TdSignal) -> Vec<Complex64> {
        let (m, n) = (z.grid().m(), z.grid().n());
        let mut out = vec![Complex64::default(); m * n];
        for k in 0..m {
            for l in 0..n {
                let mut acc = Complex64::default();
                for i in 0..m {
                    let ph = -TAU * (k * i) as f64 / m as f64;
                    acc += z.samples()[l + i * n] * Complex64::from_polar(1.0, ph);
                }
                out[k * n + l] = acc / (m as f64).sqrt();
            }
        }
        out
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn dzt_of_delta_and_constant() {
        let g = grid();
        let n = g.n() as f64;
        let delta = TdSignal::from_fn(g, |i| Complex64::new((i == 0) as u8 as f64, 0.0));
        let x = dzt(&delta);
        for k in 0..g.m() {
            for l in 0..g.n() {
                let want = if k == 0 { 1.0 / n.sqrt() } else { 0.0 };
                assert!((x.get(k, l) - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
        let ones = TdSignal::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let x = dzt(&ones);
        for k in 0..g.m() {
            for l in 0..g.n() {
                let want = if l == 0 { n.sqrt() } else { 0.0 };
                assert!((x.get(k, l) - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dzt_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in [grid(), GridConfig::reference()] {
            let x = random_signal(g, &mut rng);
            assert!(max_diff(dzt(&x).as_slice(), &dzt_direct(&x)) < 1e-10);
        }
    }

    #[test]
    fn idzt_roundtrip_and_single_pulse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = GridConfig::reference();
        let x = random_signal(g, &mut rng);
        assert!(max_diff(idzt(&dzt(&x)).samples(), x.samples()) < 1e-12);

        assert!(idzt(&DdArray::zeros(g))
            .samples()
            .iter()
            .all(|v| v.norm() == 0.0));

        let (k0, l0) = (5usize, 11usize);
        let mut pulse = DdArray::zeros(g);
        pulse.set(k0, l0, Complex64::new(1.0, 0.0));
        let x = idzt(&pulse);
        let (m, n) = (g.m(), g.n());
        for (idx, v) in x.samples().iter().enumerate() {
            let want = if idx % m == k0 {
                let i = idx / m;
                Complex64::from_polar(1.0, TAU * (l0 * i) as f64 / n as f64) / (n as f64).sqrt()
            } else {
                Complex64::default()
            };
            assert!((v - want).norm() < 1e-12);
        }
    }

    #[test]
    fn quasi_periodic_extension_agrees_with_defining_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid();
        let (m, n) = (g.m() as i64, g.n() as i64);
        let x = random_signal(g, &mut rng);
        let big = dzt(&x);
        // evaluate the defining sum at arbitrary (k, l), reading x cyclically
        for (k, l) in [
            (m, 2),
            (m + 3, 4),
            (-2, 5),
            (2 * m + 1, n + 3),
            (-m - 1, -2),
        ] {
            let mut acc = Complex64::default();
            for i in 0..n {
                let idx = (k + i * m).rem_euclid(m * n) as usize;
                acc += x.samples()[idx] * unit_root_pow(-l * i, n as usize);
            }
            acc /= (n as f64).sqrt();
            assert!((big.get_ext(k, l) - acc).norm() < 1e-12, "({k},{l})");
        }
    }

    #[test]
    fn inner_products_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GridConfig::reference();
        for _ in 0..20 {
            let x = random_signal(g, &mut rng);
            let y = random_signal(g, &mut rng);
            let dd = dd_inner_product(&dzt(&x), &dzt(&y)).unwrap();
            assert!((dd - x.inner(&y).unwrap()).norm() < 1e-10);
        }
        let unit = TdSignal::from_fn(g, |i| unit_root_pow((i * i) as i64, 1147));
        let e = dd_inner_product(&dzt(&unit), &dzt(&unit)).unwrap();
        assert!((e - Complex64::new(1147.0, 0.0)).norm() < 1e-9);

        let mut a = DdArray::zeros(g);
        let mut b = DdArray::zeros(g);
        a.set(0, 0, Complex64::new(1.0, 0.0));
        b.set(1, 0, Complex64::new(1.0, 0.0));
        assert_eq!(dd_inner_product(&a, &b).unwrap(), Complex64::default());

        let other = DdArray::zeros(grid());
        assert!(dd_inner_product(&a, &other).is_err());
    }

    #[test]
    fn tf_matches_direct_sum_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GridConfig::reference();
        let z = random_signal(g, &mut rng);
        let tf = td_to_tf(&z);
        assert!(max_diff(tf.as_slice(), &tf_direct(&z)) < 1e-10);
        assert!((tf.energy() - z.energy()).abs() < 1e-9);

        let ones = TdSignal::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let tf = td_to_tf(&ones);
        for k in 1..g.m() {
            for l in 0..g.n() {
                assert!(tf.get(k, l).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn tone_lands_on_a_single_tf_row() {
        let g = GridConfig::reference();
        let c = 981 * 7;
        let z = TdSignal::from_fn(g, |i| unit_root_pow(c * i as i64, 1147));
        let tf = td_to_tf(&z);
        let row = (c % 31) as usize;
        for k in 0..g.m() {
            let e: f64 = (0..g.n()).map(|l| tf.get(k, l).norm_sqr()).sum();
            if k == row {
                assert!((e - 1147.0).abs() < 1e-8);
            } else {
                assert!(e < 1e-18, "row {k} energy {e}");
            }
        }
    }

    #[test]
    fn twisted_shift_matches_time_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for g in [grid(), GridConfig::reference()] {
            let x = random_signal(g, &mut rng);
            let xd = dzt(&x);
            assert_eq!(twisted_shift(&xd, 0, 0), xd);
            for _ in 0..20 {
                let k0 = rng.random_range(-40..40);
                let l0 = rng.random_range(-40..40);
                let lhs = twisted_shift(&xd, k0, l0);
                let rhs = dzt(&x.delay_modulate(k0, l0));
                assert!(
                    max_diff(lhs.as_slice(), rhs.as_slice()) < 1e-10,
                    "({k0},{l0})"
                );
                assert!((lhs.energy() - xd.energy()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn twisted_shift_inverts_up_to_global_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = GridConfig::reference();
        let xd = dzt(&random_signal(g, &mut rng));
        for _ in 0..20 {
            let k0 = rng.random_range(-50..50);
            let l0 = rng.random_range(-50..50);
            let back = twisted_shift(&twisted_shift(&xd, k0, l0), -k0, -l0);
            // the residual phase is exp(-j 2 pi k0 l0 / MN) for every entry
            let phase = unit_root_pow(-k0 * l0, g.mn());
            for (a, b) in back.as_slice().iter().zip(xd.as_slice()) {
                assert!((a.norm() - b.norm()).abs() < 1e-12);
                assert!((a - b * phase).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn twisted_shift_keeps_quasi_periodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = grid();
        let x = random_signal(g, &mut rng);
        let shifted = twisted_shift(&dzt(&x), 3, -5);
        let direct = dzt(&x.delay_modulate(3, -5));
        for (k, l) in [(7i64, 1i64), (-3, 2), (15, -4)] {
            assert!((shifted.get_ext(k, l) - direct.get_ext(k, l)).norm() < 1e-10);
        }
    }

    #[test]
    fn counters_track_calls() {
        reset_transform_counts();
        let g = grid();
        let x = TdSignal::zeros(g);
        let _ = dzt(&x);
        let _ = td_to_tf(&x);
        let _ = td_to_tf(&x);
        let c = transform_counts();
        assert_eq!((c.dzt, c.idzt, c.tf), (1, 0, 2));
    }

    #[test]
    fn length_checked() {
        let g = grid();
        assert!(matches!(
            TdSignal::new(g, vec![Complex64::default(); 10]),
            Err(Error::LengthMismatch {
                expected: 63,
                actual: 10
            })
        ));
    }
}
