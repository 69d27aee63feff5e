//! Zadoff-Chu preambles and the delay-conjugate self-product.
//!
//! For a ZC sequence `x_u[n] = xi_MN^{-u n(n+1)/2}` the product
//! `x_u[n] conj(x_u[n + a])` is a pure tone at frequency `u a (mod MN)`.
//! Its DZT lives on the column `l = u a mod N` and its delay-axis FFT on the
//! row `k = u a mod M`, which is what the chirp detectors exploit.

use crate::error::{Error, Result};
use crate::gridmath::{gcd, validate_shift, GridConfig, RootSet};
use crate::transforms::{dzt, unit_root_pow, DdArray, TdSignal};

/// `x_u[n] = xi_MN^{-u n(n+1)/2}` with the exponent reduced modulo MN exactly.
pub fn zc_sequence(u: u64, grid: &GridConfig) -> Result<TdSignal> {
    let mn = grid.mn() as u64;
    if u == 0 || u >= mn || gcd(u, mn) != 1 {
        return Err(Error::InvalidRoot(u));
    }
    Ok(TdSignal::from_fn(*grid, |n| {
        let n = n as u64;
        let tri = (n * (n + 1) / 2) % mn;
        let e = (tri * u) % mn;
        unit_root_pow(-(e as i64), mn as usize)
    }))
}

/// `z[n] = y[n] conj(y[(n + a) mod MN])`.
pub fn self_product(y: &TdSignal, a: u64) -> Result<TdSignal> {
    if !validate_shift(a as i64, y.grid())? {
        return Err(Error::InvalidShift(a));
    }
    let s = y.samples();
    let mn = s.len();
    let a = a as usize;
    Ok(TdSignal::from_fn(*y.grid(), |n| {
        s[n] * s[(n + a) % mn].conj()
    }))
}

/// Frequency `u a mod MN` of the tone produced by [`self_product`] on `x_u`.
pub fn tone_frequency_of(u: u64, a: u64, grid: &GridConfig) -> u64 {
    let mn = grid.mn() as u64;
    ((u % mn) * (a % mn)) % mn
}

/// A ZC preamble in both time and delay-Doppler form.
#[derive(Debug, Clone)]
pub struct Preamble {
    pub root: u64,
    pub td: TdSignal,
    pub dd: DdArray,
}

impl Preamble {
    pub fn new(root: u64, grid: &GridConfig) -> Result<Self> {
        let td = zc_sequence(root, grid)?;
        let dd = dzt(&td);
        Ok(Self { root, td, dd })
    }
}

/// Preambles for every root of a [`RootSet`], computed once and shared
/// read-only afterwards.
#[derive(Debug, Clone)]
pub struct PreambleBank {
    roots: RootSet,
    preambles: Vec<Preamble>,
}

impl PreambleBank {
    pub fn new(roots: &RootSet) -> Self {
        let preambles = roots
            .iter()
            .map(|u| Preamble::new(u, roots.grid()).expect("root set holds valid roots"))
            .collect();
        Self {
            roots: roots.clone(),
            preambles,
        }
    }

    pub fn roots(&self) -> &RootSet {
        &self.roots
    }

    pub fn get(&self, u: u64) -> Option<&Preamble> {
        self.roots.position(u).map(|i| &self.preambles[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Preamble> {
        self.preambles.iter()
    }
}
