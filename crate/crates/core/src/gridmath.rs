//! Zak-OTFS grid parameters and the modular arithmetic behind line
//! intersection: inverses modulo M and N, CRT recombination, and the
//! admissible root and shift sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Sampling grid of a Zak-OTFS frame.
///
/// Only `M`, `N` and the Doppler period are stored; the delay period,
/// bandwidth and duration are derived on demand so the relations
/// `tau_p = 1/nu_p`, `B = M nu_p` and `T = N tau_p` hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    m: usize,
    n: usize,
    doppler_period_hz: f64,
    tau_max_s: f64,
    nu_max_hz: f64,
}

impl GridConfig {
    pub fn new(
        m: usize,
        n: usize,
        doppler_period_hz: f64,
        tau_max_s: f64,
        nu_max_hz: f64,
    ) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(Error::InvalidGrid(format!(
                "M and N must both be at least 2 (got M={m}, N={n})"
            )));
        }
        if gcd(m as u64, n as u64) != 1 {
            return Err(Error::InvalidGrid(format!(
                "M={m} and N={n} are not coprime"
            )));
        }
        if !(doppler_period_hz.is_finite() && doppler_period_hz > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "Doppler period must be positive (got {doppler_period_hz})"
            )));
        }
        if !(tau_max_s >= 0.0 && nu_max_hz >= 0.0) {
            return Err(Error::InvalidGrid(
                "delay and Doppler spreads must be non-negative".into(),
            ));
        }
        let grid = Self {
            m,
            n,
            doppler_period_hz,
            tau_max_s,
            nu_max_hz,
        };
        if tau_max_s >= grid.delay_period_s() || 2.0 * nu_max_hz >= doppler_period_hz {
            return Err(Error::InvalidGrid(format!(
                "crystallization violated: tau_max={tau_max_s} s vs tau_p={} s, 2 nu_max={} Hz vs nu_p={doppler_period_hz} Hz",
                grid.delay_period_s(),
                2.0 * nu_max_hz
            )));
        }
        Ok(grid)
    }

    /// M=31, N=37, nu_p=30 kHz with the Veh-A delay spread and 815 Hz Doppler.
    pub fn reference() -> Self {
        Self::new(31, 37, 30e3, 2.51e-6, 815.0).expect("reference grid is valid")
    }

    /// Same periods and spreads on a different (M, N).
    pub fn with_dims(&self, m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, self.doppler_period_hz, self.tau_max_s, self.nu_max_hz)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    pub fn doppler_period_hz(&self) -> f64 {
        self.doppler_period_hz
    }

    pub fn delay_period_s(&self) -> f64 {
        1.0 / self.doppler_period_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.m as f64 * self.doppler_period_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.n as f64 * self.delay_period_s()
    }

    pub fn tau_max_s(&self) -> f64 {
        self.tau_max_s
    }

    pub fn nu_max_hz(&self) -> f64 {
        self.nu_max_hz
    }
}

/// Extended-Euclid inverse of `a` modulo `m`, returned in `[1, m)`.
pub fn mod_inverse(a: i64, m: i64) -> Result<i64> {
    if m < 2 {
        return Err(Error::NotInvertible {
            value: a,
            modulus: m,
        });
    }
    let a = a.rem_euclid(m);
    let (mut r0, mut r1) = (m, a);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return Err(Error::NotInvertible {
            value: a,
            modulus: m,
        });
    }
    Ok(t0.rem_euclid(m))
}

/// The unique `u` in `[0, MN)` with `u = r_n (mod N)` and `u = r_m (mod M)`.
pub fn crt_combine(r_n: i64, r_m: i64, grid: &GridConfig) -> Result<u64> {
    let (m, n) = (grid.m() as i64, grid.n() as i64);
    if gcd(m as u64, n as u64) != 1 {
        return Err(Error::InvalidGrid(format!(
            "M={m} and N={n} are not coprime"
        )));
    }
    let r_n = r_n.rem_euclid(n);
    let r_m = r_m.rem_euclid(m);
    // u = r_n + N t, with N t = r_m - r_n (mod M)
    let n_inv = mod_inverse(n, m)?;
    let t = ((r_m - r_n).rem_euclid(m) * n_inv).rem_euclid(m);
    Ok((r_n + n * t) as u64)
}

/// True iff `a` is coprime to both M and N.
pub fn validate_shift(a: i64, grid: &GridConfig) -> Result<bool> {
    let mn = grid.mn() as i64;
    if a <= 0 || a >= mn {
        return Err(Error::OutOfRange {
            value: a,
            limit: mn,
        });
    }
    let a = a as u64;
    Ok(gcd(a, grid.m() as u64) == 1 && gcd(a, grid.n() as u64) == 1)
}

/// Number of integers in `(0, MN)` coprime to MN.
pub fn valid_root_count(grid: &GridConfig) -> usize {
    let mn = grid.mn() as u64;
    (1..mn).filter(|&u| gcd(u, mn) == 1).count()
}

/// The first `count` shifts in `2..MN` coprime to M and N.
pub fn default_shifts(grid: &GridConfig, count: usize) -> Vec<u64> {
    let mn = grid.mn() as u64;
    (2..mn).filter(|&a| gcd(a, mn) == 1).take(count).collect()
}

/// Ascending set of admissible Zadoff-Chu roots with O(1) membership.
#[derive(Debug, Clone)]
pub struct RootSet {
    grid: GridConfig,
    roots: Vec<u64>,
    // slot[u] = position of u in `roots`, or u32::MAX
    slot: Vec<u32>,
}

impl RootSet {
    /// Validates an explicit root list; entries are sorted and deduplicated.
    pub fn from_roots(grid: GridConfig, mut roots: Vec<u64>) -> Result<Self> {
        let mn = grid.mn() as u64;
        roots.sort_unstable();
        roots.dedup();
        for &u in &roots {
            if u == 0 || u >= mn || gcd(u, mn) != 1 {
                return Err(Error::InvalidRoot(u));
            }
        }
        let mut slot = vec![u32::MAX; grid.mn()];
        for (i, &u) in roots.iter().enumerate() {
            slot[u as usize] = i as u32;
        }
        Ok(Self { grid, roots, slot })
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.roots
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.roots.iter().copied()
    }

    pub fn contains(&self, u: u64) -> bool {
        self.position(u).is_some()
    }

    pub fn position(&self, u: u64) -> Option<usize> {
        match self.slot.get(u as usize) {
            Some(&i) if i != u32::MAX => Some(i as usize),
            _ => None,
        }
    }
}

/// The `g` smallest roots in `(0, MN)` coprime to MN.
pub fn build_root_set(grid: &GridConfig, g: usize) -> Result<RootSet> {
    let mn = grid.mn() as u64;
    let available = valid_root_count(grid);
    if g > available {
        return Err(Error::TooManyRoots {
            requested: g,
            available,
        });
    }
    let roots = (1..mn).filter(|&u| gcd(u, mn) == 1).take(g).collect();
    RootSet::from_roots(*grid, roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inverses_from_the_worked_example() {
        assert_eq!(mod_inverse(7, 37).unwrap(), 16);
        assert_eq!(mod_inverse(7, 31).unwrap(), 9);
        assert_eq!(mod_inverse(1, 31).unwrap(), 1);
        assert_eq!(mod_inverse(-30, 31).unwrap(), 1);
        assert!(matches!(
            mod_inverse(31, 31),
            Err(Error::NotInvertible { .. })
        ));
        assert!(mod_inverse(6, 9).is_err());
    }

    #[test]
    fn crt_worked_example() {
        let grid = GridConfig::reference();
        assert_eq!(crt_combine(19, 20, &grid).unwrap(), 981);
        assert_eq!(crt_combine(0, 0, &grid).unwrap(), 0);
        // out-of-range residues are canonicalised first
        assert_eq!(crt_combine(19 + 37, 20 - 31, &grid).unwrap(), 981);
    }

    #[test]
    fn crt_matches_exhaustive_scan() {
        let grid = GridConfig::reference();
        let mn = grid.mn() as u64;
        for r_n in 0..37u64 {
            for r_m in (0..31u64).step_by(3) {
                let brute = (0..mn).find(|u| u % 37 == r_n && u % 31 == r_m).unwrap();
                assert_eq!(crt_combine(r_n as i64, r_m as i64, &grid).unwrap(), brute);
            }
        }
    }

    #[test]
    fn crt_is_a_bijection() {
        let grid = GridConfig::new(7, 9, 30e3, 2.51e-6, 815.0).unwrap();
        let mut seen = [false; 63];
        for r_n in 0..9 {
            for r_m in 0..7 {
                let u = crt_combine(r_n, r_m, &grid).unwrap() as usize;
                assert!(!seen[u]);
                seen[u] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn grid_rules() {
        let grid = GridConfig::reference();
        assert_eq!(grid.mn(), 1147);
        assert!((grid.bandwidth_hz() - 930e3).abs() < 1e-6);
        assert!((grid.duration_s() - 37.0 / 30e3).abs() < 1e-15);
        assert!(GridConfig::new(30, 36, 30e3, 2.51e-6, 815.0).is_err());
        assert!(GridConfig::new(31, 37, 30e3, 40e-6, 815.0).is_err());
        assert!(GridConfig::new(31, 37, 30e3, 2.51e-6, 15e3).is_err());
    }

    #[test]
    fn root_set_selection() {
        let grid = GridConfig::reference();
        assert_eq!(build_root_set(&grid, 3).unwrap().as_slice(), &[1, 2, 3]);

        let brute = (1..1147u64).filter(|&u| gcd(u, 1147) == 1).count();
        assert_eq!(brute, 30 * 36);
        assert_eq!(valid_root_count(&grid), brute);

        let all = build_root_set(&grid, 1024).unwrap();
        assert_eq!(all.len(), 1024);
        assert!(!all.contains(31) && !all.contains(37) && !all.contains(74));
        assert!(all.as_slice().windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(|u| gcd(u, 1147) == 1));
        assert_eq!(all.position(981).map(|p| all.as_slice()[p]), Some(981));

        assert!(matches!(
            build_root_set(&grid, 1081),
            Err(Error::TooManyRoots {
                available: 1080,
                ..
            })
        ));
    }

    #[test]
    fn shift_validation() {
        let grid = GridConfig::reference();
        assert!(validate_shift(7, &grid).unwrap());
        assert!(!validate_shift(31, &grid).unwrap());
        assert!(!validate_shift(74, &grid).unwrap());
        assert!(validate_shift(0, &grid).is_err());
        assert!(validate_shift(1147, &grid).is_err());
        for a in [7, 12, 18, 23] {
            assert!(validate_shift(a, &grid).unwrap());
        }
    }

    proptest! {
        #[test]
        fn inverse_roundtrip(a in 1i64..10_000, m in 2i64..2_000) {
            if gcd(a as u64, m as u64) == 1 {
                let b = mod_inverse(a, m).unwrap();
                prop_assert!((1..m).contains(&b) || m == 1);
                prop_assert_eq!((a * b).rem_euclid(m), 1 % m);
            } else {
                prop_assert!(mod_inverse(a, m).is_err());
            }
        }

        #[test]
        fn crt_residues(r_n in -100i64..100, r_m in -100i64..100) {
            let grid = GridConfig::reference();
            let u = crt_combine(r_n, r_m, &grid).unwrap() as i64;
            prop_assert!((0..1147).contains(&u));
            prop_assert_eq!(u % 37, r_n.rem_euclid(37));
            prop_assert_eq!(u % 31, r_m.rem_euclid(31));
        }
    }
}
