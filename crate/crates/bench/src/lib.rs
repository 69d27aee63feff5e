//! Shared fixtures for the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zakrach::gridmath::{build_root_set, default_shifts, valid_root_count, GridConfig, RootSet};
use zakrach::harness::bench::bench_sensing_config;
use zakrach::sensing::{build_sensing_matrix, SensingMatrix};
use zakrach::{add_awgn, zc_sequence, TdSignal};

pub const GRIDS: [(usize, usize); 4] = [(7, 9), (15, 17), (31, 37), (63, 65)];

/// A noisy received frame on one grid, with `G = MN / 4` roots.
pub struct Fixture {
    pub grid: GridConfig,
    pub roots: RootSet,
    pub shifts: Vec<u64>,
    pub single: TdSignal,
    pub multi: TdSignal,
    pub users: usize,
}

impl Fixture {
    pub fn new(m: usize, n: usize) -> Self {
        let grid = GridConfig::new(m, n, 30e3, 0.0, 0.0).expect("coprime grid");
        let g = (grid.mn() / 4).clamp(5, valid_root_count(&grid));
        let roots = build_root_set(&grid, g).expect("enough roots");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = add_awgn(
            &zc_sequence(roots.as_slice()[g / 2], &grid).unwrap(),
            10.0,
            &mut rng,
        );
        let users = 5;
        let mut multi = TdSignal::zeros(grid);
        for &u in roots.as_slice().iter().step_by(g / users).take(users) {
            let x = zc_sequence(u, &grid).unwrap();
            for (a, b) in multi.samples_mut().iter_mut().zip(x.samples()) {
                *a += b;
            }
        }
        let multi = add_awgn(&multi, 10.0, &mut rng);
        Self {
            shifts: default_shifts(&grid, 4),
            grid,
            roots,
            single,
            multi,
            users,
        }
    }

    pub fn matrix(&self) -> SensingMatrix {
        build_sensing_matrix(&self.roots, &self.grid, &bench_sensing_config())
            .expect("fits in memory")
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.grid.m(), self.grid.n())
    }
}
