//! Chirp-based root detection from self-products of the received frame.
//!
//! A ZC root `u` turns `y[n] conj(y[n + a])` into a tone whose DD energy is
//! concentrated on Doppler column `ua mod N` and whose TF energy is
//! concentrated on row `ua mod M`. Reading both line indices and
//! inverting `a` gives `u` modulo N and modulo M.
//!
//! [`detect_single`] combines the two residues by CRT. [`detect_multi`] keeps
//! the top-K lines per shift, intersects the implied root sets across several
//! shifts and domains, and refines the survivors with OST on the restricted
//! dictionary.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridmath::{crt_combine, mod_inverse, validate_shift, GridConfig, RootSet};
use crate::sensing::{ost_detect, restrict_columns, SensingMatrix};
use crate::sequences::self_product;
use crate::transforms::{dzt, td_to_tf, TdSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Domain {
    Dd,
    Tf,
}

/// Which line of which shift implied a candidate root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Provenance {
    pub shift: u64,
    pub domain: Domain,
    pub line: usize,
}

/// Candidate roots in ascending order, each with the lines that implied it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CandidateSet {
    entries: BTreeMap<u64, Vec<Provenance>>,
}

impl CandidateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, root: u64, p: Provenance) {
        let v = self.entries.entry(root).or_default();
        if !v.contains(&p) {
            v.push(p);
            v.sort_unstable();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, root: u64) -> bool {
        self.entries.contains_key(&root)
    }

    pub fn roots(&self) -> Vec<u64> {
        self.entries.keys().copied().collect()
    }

    pub fn provenance(&self, root: u64) -> &[Provenance] {
        self.entries.get(&root).map_or(&[], Vec::as_slice)
    }

    /// Roots present in both sets, with merged provenance.
    pub fn intersect(&self, other: &CandidateSet) -> CandidateSet {
        let mut out = CandidateSet::new();
        for (&u, ps) in &self.entries {
            if let Some(qs) = other.entries.get(&u) {
                for &p in ps.iter().chain(qs) {
                    out.insert(u, p);
                }
            }
        }
        out
    }

    pub fn union_with(&mut self, other: &CandidateSet) {
        for (&u, ps) in &other.entries {
            for &p in ps {
                self.insert(u, p);
            }
        }
    }
}

/// Per-shift line statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftDiagnostics {
    pub shift: u64,
    /// Selected DD columns, strongest first.
    pub dd_lines: Vec<usize>,
    /// Selected TF rows, strongest first.
    pub tf_lines: Vec<usize>,
    /// `sum_k |Z_dd[k, l]|` for each `l`.
    pub row_sums: Vec<f64>,
    /// `sum_l |Z_tf[k, l]|` for each `k`.
    pub col_sums: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub detected: Vec<u64>,
    pub per_shift: Vec<ShiftDiagnostics>,
    /// Union of pairwise intersections; empty for the single-user detector.
    pub candidates: CandidateSet,
    /// Restricted OST block energies, in root order.
    pub block_energies: Vec<(u64, f64)>,
}

impl DetectionReport {
    /// Strongest DD line of the first shift.
    pub fn dd_line_index(&self) -> usize {
        self.per_shift[0].dd_lines[0]
    }

    /// Strongest TF line of the first shift.
    pub fn tf_line_index(&self) -> usize {
        self.per_shift[0].tf_lines[0]
    }
}

/// DZT of `z`, then `sum_k |Z[k, l]|` for every Doppler column `l`.
pub fn dd_row_sums(z: &TdSignal) -> Vec<f64> {
    let n = z.grid().n();
    let dd = dzt(z);
    let mut s = vec![0.0; n];
    for row in dd.as_slice().chunks_exact(n) {
        for (acc, v) in s.iter_mut().zip(row) {
            *acc += v.norm();
        }
    }
    s
}

/// Delay-axis FFT of `z`, then `sum_l |Z[k, l]|` for every row `k`.
pub fn tf_col_sums(z: &TdSignal) -> Vec<f64> {
    let n = z.grid().n();
    let tf = td_to_tf(z);
    tf.as_slice()
        .chunks_exact(n)
        .map(|row| row.iter().map(|v| v.norm()).sum())
        .collect()
}

/// Indices of the `k` largest entries, largest first; ties go to the lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    idx.truncate(k);
    idx
}

fn shift_inverse(a: u64, modulus: usize) -> Result<i64> {
    mod_inverse(a as i64, modulus as i64).map_err(|_| Error::InvalidShift(a))
}

fn line_candidates(
    lines: &[usize],
    a: u64,
    roots: &RootSet,
    modulus: usize,
    domain: Domain,
) -> Result<CandidateSet> {
    let grid = roots.grid();
    if !validate_shift(a as i64, grid)? {
        return Err(Error::InvalidShift(a));
    }
    let inv = shift_inverse(a, modulus)?;
    let mn = grid.mn() as u64;
    let mut out = CandidateSet::new();
    for &line in lines {
        if line >= modulus {
            return Err(Error::OutOfRange {
                value: line as i64,
                limit: modulus as i64,
            });
        }
        let r = (line as i64 * inv).rem_euclid(modulus as i64) as u64;
        for u in (r..mn).step_by(modulus) {
            if roots.contains(u) {
                out.insert(
                    u,
                    Provenance {
                        shift: a,
                        domain,
                        line,
                    },
                );
            }
        }
    }
    Ok(out)
}

/// Roots `u` in `roots` with `u a mod N` equal to one of `lines`.
pub fn line_candidates_dd(lines: &[usize], a: u64, roots: &RootSet) -> Result<CandidateSet> {
    line_candidates(lines, a, roots, roots.grid().n(), Domain::Dd)
}

/// Roots `u` in `roots` with `u a mod M` equal to one of `lines`.
pub fn line_candidates_tf(lines: &[usize], a: u64, roots: &RootSet) -> Result<CandidateSet> {
    line_candidates(lines, a, roots, roots.grid().m(), Domain::Tf)
}

fn check_grid(y: &TdSignal, roots: &RootSet) -> Result<()> {
    let (g, r) = (y.grid(), roots.grid());
    if g.m() != r.m() || g.n() != r.n() {
        return Err(Error::ShapeMismatch(format!(
            "signal on {}x{} grid, roots on {}x{}",
            g.m(),
            g.n(),
            r.m(),
            r.n()
        )));
    }
    Ok(())
}

fn diagnose(y: &TdSignal, a: u64, k: usize) -> Result<ShiftDiagnostics> {
    let z = self_product(y, a)?;
    let row_sums = dd_row_sums(&z);
    let col_sums = tf_col_sums(&z);
    Ok(ShiftDiagnostics {
        shift: a,
        dd_lines: top_k_indices(&row_sums, k),
        tf_lines: top_k_indices(&col_sums, k),
        row_sums,
        col_sums,
    })
}

/// Single-user detector: one shift, two FFT passes, one CRT.
///
/// Fails with [`Error::NoIntersection`] when the CRT point is not an
/// admissible root.
pub fn detect_single(y: &TdSignal, a: u64, roots: &RootSet) -> Result<DetectionReport> {
    check_grid(y, roots)?;
    let grid = roots.grid();
    let d = diagnose(y, a, 1)?;
    let (l, k) = (d.dd_lines[0], d.tf_lines[0]);
    let u = crt_point(l, k, a, grid)?;
    if !roots.contains(u) {
        return Err(Error::NoIntersection {
            dd_line: l,
            tf_line: k,
            crt_point: u,
        });
    }
    Ok(DetectionReport {
        detected: vec![u],
        per_shift: vec![d],
        candidates: CandidateSet::new(),
        block_energies: Vec::new(),
    })
}

/// Root consistent with DD line `l` and TF line `k` under shift `a`.
pub fn crt_point(l: usize, k: usize, a: u64, grid: &GridConfig) -> Result<u64> {
    let r_n = l as i64 * shift_inverse(a, grid.n())?;
    let r_m = k as i64 * shift_inverse(a, grid.m())?;
    crt_combine(r_n, r_m, grid)
}

/// Multi-user detector over shifts `shifts`, returning up to `k` roots.
pub fn detect_multi(
    y: &TdSignal,
    shifts: &[u64],
    k: usize,
    a: &SensingMatrix,
    roots: &RootSet,
) -> Result<DetectionReport> {
    let y_dd = dzt(y);
    detect_multi_dd(y, y_dd.as_slice(), shifts, k, a, roots)
}

/// [`detect_multi`] with the DD form of `y` supplied by the caller.
pub fn detect_multi_dd(
    y: &TdSignal,
    y_dd: &[Complex64],
    shifts: &[u64],
    k: usize,
    a: &SensingMatrix,
    roots: &RootSet,
) -> Result<DetectionReport> {
    check_grid(y, roots)?;
    if k == 0 {
        return Err(Error::OutOfRange { value: 0, limit: 1 });
    }
    if shifts.is_empty() {
        return Err(Error::InvalidShifts("no shifts given".into()));
    }
    for (i, &s) in shifts.iter().enumerate() {
        if shifts[..i].contains(&s) {
            return Err(Error::InvalidShifts(format!("shift {s} repeated")));
        }
        if !validate_shift(s as i64, roots.grid())? {
            return Err(Error::InvalidShift(s));
        }
    }
    let per_shift = shifts
        .iter()
        .map(|&s| diagnose(y, s, k))
        .collect::<Result<Vec<_>>>()?;
    let mut dd_sets = Vec::with_capacity(shifts.len());
    let mut tf_sets = Vec::with_capacity(shifts.len());
    for d in &per_shift {
        dd_sets.push(line_candidates_dd(&d.dd_lines, d.shift, roots)?);
        tf_sets.push(line_candidates_tf(&d.tf_lines, d.shift, roots)?);
    }
    let mut candidates = CandidateSet::new();
    for u_set in &dd_sets {
        for v_set in &tf_sets {
            candidates.union_with(&u_set.intersect(v_set));
        }
    }
    let subset = candidates.roots();
    if subset.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let restricted = restrict_columns(a, &subset)?;
    let ost = ost_detect(&restricted, y_dd, k.min(subset.len()))?;
    Ok(DetectionReport {
        detected: ost.roots(),
        per_shift,
        candidates,
        block_energies: ost.energies,
    })
}
