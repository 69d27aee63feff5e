//! Block-structured delay-Doppler dictionary and One-Step Thresholding.
//!
//! Each root contributes a block of `S` unit-norm columns, the DZT of its ZC
//! sequence twisted by every `(k0, l0)` of the shift grid. Columns are stored
//! densely, column-major, behind an `Arc` so that restricting the matrix to a
//! candidate subset shares the storage instead of copying it.
//!
//! # Cache layout
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        b"ZKSM"
//! version      u32 (= 1)
//! M, N         u32, u32
//! nu_p, tau_max, nu_max   f64 x3
//! G, S         u32, u32
//! n_delay      u32, followed by n_delay i32 delay shifts
//! n_doppler    u32, followed by n_doppler i32 Doppler shifts
//! roots        G x u32
//! data         G*S columns, each MN x (f32 re, f32 im)
//! ```
//!
//! Columns are renormalised after loading since the payload is single
//! precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmath::{GridConfig, RootSet};
use crate::sequences::Preamble;
use crate::transforms::twisted_shift;

/// Default ceiling on dense storage, in complex entries (about 2 GiB).
pub const DEFAULT_ENTRY_CAP: usize = 1 << 27;

const MAGIC: &[u8; 4] = b"ZKSM";
const VERSION: u32 = 1;

/// Delay and Doppler translates making up one root's block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub delay_shifts: Vec<i64>,
    pub doppler_shifts: Vec<i64>,
}

impl SensingConfig {
    /// Delay bins `0..ceil(tau_max B)` and Doppler bins
    /// `-round(nu_max T)..=round(nu_max T)`.
    pub fn for_grid(grid: &GridConfig) -> Self {
        let x = ((grid.tau_max_s() * grid.bandwidth_hz()).ceil() as i64).max(1);
        let y = (grid.nu_max_hz() * grid.duration_s()).round() as i64;
        let y = if grid.nu_max_hz() > 0.0 { y.max(1) } else { 0 };
        Self {
            delay_shifts: (0..x).collect(),
            doppler_shifts: (-y..=y).collect(),
        }
    }

    pub fn block_size(&self) -> usize {
        self.delay_shifts.len() * self.doppler_shifts.len()
    }

    pub fn validate(&self, grid: &GridConfig) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::Config {
                path: "sensing".into(),
                message: msg,
            })
        };
        if self.delay_shifts.is_empty() || self.doppler_shifts.is_empty() {
            return bad("shift lists must be non-empty".into());
        }
        if self
            .delay_shifts
            .iter()
            .any(|&d| d < 0 || d >= grid.m() as i64)
        {
            return bad(format!("delay shifts must lie in [0, {})", grid.m()));
        }
        let n = grid.n() as i64;
        if self.doppler_shifts.iter().any(|&l| 2 * l.abs() >= n) {
            return bad(format!(
                "Doppler shifts must satisfy |l0| < {}",
                n as f64 / 2.0
            ));
        }
        let mut d = self.delay_shifts.clone();
        d.sort_unstable();
        d.dedup();
        let mut l = self.doppler_shifts.clone();
        l.sort_unstable();
        l.dedup();
        if d != self.delay_shifts || l != self.doppler_shifts {
            return bad("shift lists must be strictly increasing".into());
        }
        Ok(())
    }

    /// Shift pair of column `j` within a block.
    pub fn shift_of(&self, j: usize) -> (i64, i64) {
        let nd = self.doppler_shifts.len();
        (self.delay_shifts[j / nd], self.doppler_shifts[j % nd])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    root: u64,
    // first column of this block in the shared storage
    first_col: usize,
}

/// Dense `MN x (G S)` dictionary of delay-Doppler translated preambles.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    grid: GridConfig,
    config: Arc<SensingConfig>,
    storage: Arc<Vec<Complex64>>,
    blocks: Vec<Block>,
}

/// Column label: root and the `(k0, l0)` translate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnLabel {
    pub root: u64,
    pub delay: i64,
    pub doppler: i64,
}

/// Dictionary columns for root `u`, in block order.
pub fn block_columns(pre: &Preamble, scfg: &SensingConfig) -> Vec<Complex64> {
    let grid = pre.dd.grid();
    let mn = grid.mn();
    let scale = 1.0 / (mn as f64).sqrt();
    let mut out = Vec::with_capacity(mn * scfg.block_size());
    for &k0 in &scfg.delay_shifts {
        for &l0 in &scfg.doppler_shifts {
            let col = twisted_shift(&pre.dd, k0, l0);
            out.extend(col.as_slice().iter().map(|v| v * scale));
        }
    }
    out
}

pub fn build_sensing_matrix(
    roots: &RootSet,
    grid: &GridConfig,
    scfg: &SensingConfig,
) -> Result<SensingMatrix> {
    build_sensing_matrix_capped(roots, grid, scfg, DEFAULT_ENTRY_CAP)
}

pub fn build_sensing_matrix_capped(
    roots: &RootSet,
    grid: &GridConfig,
    scfg: &SensingConfig,
    cap: usize,
) -> Result<SensingMatrix> {
    if roots.grid().m() != grid.m() || roots.grid().n() != grid.n() {
        return Err(Error::ShapeMismatch(
            "root set built on a different grid".into(),
        ));
    }
    scfg.validate(grid)?;
    let s = scfg.block_size();
    let needed = roots.len() * s * grid.mn();
    if needed > cap {
        return Err(Error::MatrixTooLarge { needed, cap });
    }
    let per_root: Vec<Vec<Complex64>> = roots
        .as_slice()
        .par_iter()
        .map(|&u| Preamble::new(u, grid).map(|p| block_columns(&p, scfg)))
        .collect::<Result<_>>()?;
    let mut storage = Vec::with_capacity(needed);
    per_root.into_iter().for_each(|b| storage.extend(b));
    let blocks = roots
        .iter()
        .enumerate()
        .map(|(i, root)| Block {
            root,
            first_col: i * s,
        })
        .collect();
    Ok(SensingMatrix {
        grid: *grid,
        config: Arc::new(scfg.clone()),
        storage: Arc::new(storage),
        blocks,
    })
}

impl SensingMatrix {
    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn config(&self) -> &SensingConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.grid.mn()
    }

    pub fn block_size(&self) -> usize {
        self.config.block_size()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_columns(&self) -> usize {
        self.blocks.len() * self.block_size()
    }

    pub fn roots(&self) -> impl Iterator<Item = u64> + '_ {
        self.blocks.iter().map(|b| b.root)
    }

    pub fn contains_root(&self, u: u64) -> bool {
        self.block_index(u).is_some()
    }

    fn block_index(&self, u: u64) -> Option<usize> {
        self.blocks.binary_search_by_key(&u, |b| b.root).ok()
    }

    fn storage_column(&self, col: usize) -> &[Complex64] {
        let mn = self.rows();
        &self.storage[col * mn..(col + 1) * mn]
    }

    /// Column `j` of this (possibly restricted) matrix.
    pub fn column(&self, j: usize) -> &[Complex64] {
        let s = self.block_size();
        let b = &self.blocks[j / s];
        self.storage_column(b.first_col + j % s)
    }

    pub fn label(&self, j: usize) -> ColumnLabel {
        let s = self.block_size();
        let (delay, doppler) = self.config.shift_of(j % s);
        ColumnLabel {
            root: self.blocks[j / s].root,
            delay,
            doppler,
        }
    }

    /// Column range of root `u` within this matrix.
    pub fn block_range(&self, u: u64) -> Option<std::ops::Range<usize>> {
        let s = self.block_size();
        self.block_index(u).map(|i| i * s..(i + 1) * s)
    }

    /// Column of root `u` at translate `(k0, l0)`.
    pub fn find_column(&self, u: u64, k0: i64, l0: i64) -> Option<&[Complex64]> {
        let di = self.config.delay_shifts.iter().position(|&d| d == k0)?;
        let li = self.config.doppler_shifts.iter().position(|&l| l == l0)?;
        let b = &self.blocks[self.block_index(u)?];
        Some(self.storage_column(b.first_col + di * self.config.doppler_shifts.len() + li))
    }

    /// `f = A^H y`, one entry per column.
    pub fn adjoint_apply(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y)?;
        Ok((0..self.num_columns())
            .map(|j| conj_dot(self.column(j), y))
            .collect())
    }

    fn check_len(&self, y: &[Complex64]) -> Result<()> {
        if y.len() != self.rows() {
            return Err(Error::LengthMismatch {
                expected: self.rows(),
                actual: y.len(),
            });
        }
        Ok(())
    }

    /// Per-block `sum_j |f_j|^2`, in block order.
    pub fn block_energies(&self, y: &[Complex64]) -> Result<Vec<(u64, f64)>> {
        self.check_len(y)?;
        let s = self.block_size();
        Ok(self
            .blocks
            .par_iter()
            .map(|b| {
                let e = (0..s)
                    .map(|j| conj_dot(self.storage_column(b.first_col + j), y).norm_sqr())
                    .sum();
                (b.root, e)
            })
            .collect())
    }

    pub fn write_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let u32_of = |v: usize| -> Result<[u8; 4]> {
            u32::try_from(v)
                .map(u32::to_le_bytes)
                .map_err(|_| Error::Cache(format!("{v} does not fit in u32")))
        };
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&u32_of(self.grid.m())?)?;
        w.write_all(&u32_of(self.grid.n())?)?;
        for v in [
            self.grid.doppler_period_hz(),
            self.grid.tau_max_s(),
            self.grid.nu_max_hz(),
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&u32_of(self.num_blocks())?)?;
        w.write_all(&u32_of(self.block_size())?)?;
        for list in [&self.config.delay_shifts, &self.config.doppler_shifts] {
            w.write_all(&u32_of(list.len())?)?;
            for &s in list.iter() {
                w.write_all(&(s as i32).to_le_bytes())?;
            }
        }
        for b in &self.blocks {
            w.write_all(&u32_of(b.root as usize)?)?;
        }
        for j in 0..self.num_columns() {
            for v in self.column(j) {
                w.write_all(&(v.re as f32).to_le_bytes())?;
                w.write_all(&(v.im as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        if read_u32(&mut r)? != VERSION {
            return Err(Error::Cache("unsupported version".into()));
        }
        let m = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let nu_p = read_f64(&mut r)?;
        let tau_max = read_f64(&mut r)?;
        let nu_max = read_f64(&mut r)?;
        let grid = GridConfig::new(m, n, nu_p, tau_max, nu_max)?;
        let g = read_u32(&mut r)? as usize;
        let s = read_u32(&mut r)? as usize;
        let mut lists = [Vec::new(), Vec::new()];
        for list in &mut lists {
            let len = read_u32(&mut r)? as usize;
            for _ in 0..len {
                list.push(read_i32(&mut r)? as i64);
            }
        }
        let [delay_shifts, doppler_shifts] = lists;
        let config = SensingConfig {
            delay_shifts,
            doppler_shifts,
        };
        config.validate(&grid)?;
        if config.block_size() != s {
            return Err(Error::Cache("block size disagrees with shift lists".into()));
        }
        let mut roots = Vec::with_capacity(g);
        for _ in 0..g {
            roots.push(read_u32(&mut r)? as u64);
        }
        let root_set = RootSet::from_roots(grid, roots.clone())?;
        if root_set.as_slice() != roots.as_slice() {
            return Err(Error::Cache("roots must be strictly increasing".into()));
        }
        let mn = grid.mn();
        let mut storage = Vec::with_capacity(g * s * mn);
        let mut buf = vec![0u8; mn * 8];
        for _ in 0..g * s {
            r.read_exact(&mut buf)?;
            let start = storage.len();
            storage.extend(buf.chunks_exact(8).map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            }));
            let col = &mut storage[start..];
            let norm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Cache("zero column".into()));
            }
            col.iter_mut().for_each(|v| *v /= norm);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Cache("trailing bytes".into()));
        }
        let blocks = roots
            .iter()
            .enumerate()
            .map(|(i, &root)| Block {
                root,
                first_col: i * s,
            })
            .collect();
        Ok(Self {
            grid,
            config: Arc::new(config),
            storage: Arc::new(storage),
            blocks,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32(r: &mut impl Read) -> Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// `sum_r conj(a_r) y_r` with four independent accumulators.
fn conj_dot(a: &[Complex64], y: &[Complex64]) -> Complex64 {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cy = y.chunks_exact(4);
    let (ra, ry) = (ca.remainder(), cy.remainder());
    for (pa, py) in ca.zip(cy) {
        for i in 0..4 {
            re[i] += pa[i].re * py[i].re + pa[i].im * py[i].im;
            im[i] += pa[i].re * py[i].im - pa[i].im * py[i].re;
        }
    }
    let mut acc = Complex64::new(re.iter().sum(), im.iter().sum());
    for (p, q) in ra.iter().zip(ry) {
        acc += p.conj() * q;
    }
    acc
}

/// A′: exactly the blocks of `subset`, kept in the order of `a`.
pub fn restrict_columns(a: &SensingMatrix, subset: &[u64]) -> Result<SensingMatrix> {
    if subset.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let mut idx = subset
        .iter()
        .map(|&u| a.block_index(u).ok_or(Error::UnknownRoot(u)))
        .collect::<Result<Vec<_>>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(SensingMatrix {
        grid: a.grid,
        config: Arc::clone(&a.config),
        storage: Arc::clone(&a.storage),
        blocks: idx.into_iter().map(|i| a.blocks[i]).collect(),
    })
}

/// Ranked output of [`ost_detect`].
#[derive(Debug, Clone, PartialEq)]
pub struct OstResult {
    /// Top-K `(root, block energy)`, energy descending; ties keep the lower root first.
    pub ranked: Vec<(u64, f64)>,
    /// Energy of every block, in block order.
    pub energies: Vec<(u64, f64)>,
    /// False when every block energy is zero.
    pub confident: bool,
}

impl OstResult {
    pub fn roots(&self) -> Vec<u64> {
        self.ranked.iter().map(|&(u, _)| u).collect()
    }
}

/// One-Step Thresholding: correlate with every column and keep the `k`
/// blocks of largest energy.
pub fn ost_detect(a: &SensingMatrix, y_dd: &[Complex64], k: usize) -> Result<OstResult> {
    if k > a.num_blocks() {
        return Err(Error::KTooLarge {
            requested: k,
            blocks: a.num_blocks(),
        });
    }
    let energies = a.block_energies(y_dd)?;
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&i, &j| energies[j].1.total_cmp(&energies[i].1));
    let ranked = order[..k].iter().map(|&i| energies[i]).collect();
    let confident = energies.iter().any(|&(_, e)| e > 0.0);
    Ok(OstResult {
        ranked,
        energies,
        confident,
    })
}
