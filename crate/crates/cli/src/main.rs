use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zakrach::detectors::{
    crt_point, detect_multi_dd, detect_single, line_candidates_dd, line_candidates_tf,
    DetectionReport,
};
use zakrach::harness::bench::{run_bench, BenchConfig, DEFAULT_BENCH_GRIDS};
use zakrach::harness::{
    parse_config, run_sweep, Detector, DetectorChoice, Experiment, ExperimentConfig,
};
use zakrach::sensing::{build_sensing_matrix, ost_detect, SensingMatrix};
use zakrach::transforms::dzt;
use zakrach::Error;

#[derive(Parser)]
#[command(
    name = "zakrach",
    version,
    about = "Zadoff-Chu preamble detection on a Zak-OTFS grid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; the reference setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the configuration.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => parse_config(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::reference(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the single-user detector on one faded, noisy preamble.
    DetectSingle {
        #[command(flatten)]
        common: Common,
        /// Transmitted root.
        #[arg(long, default_value_t = 981)]
        root: u64,
        /// Shift; the configured single-user shift when omitted.
        #[arg(long)]
        shift: Option<u64>,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        snr_db: f64,
    },
    /// Run the multi-user detector and OST on one superposition of K users.
    DetectMulti {
        #[command(flatten)]
        common: Common,
        /// Transmitted roots; K roots drawn from the seed when omitted.
        #[arg(long, value_delimiter = ',')]
        roots: Vec<u64>,
        #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
        snr_db: f64,
        /// Cached sensing matrix written by `gen-matrix`.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Miss-probability sweep over the configured SNR grid, written as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Median detection time per grid size, written as CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Grids as MxN, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_grid)]
        grids: Vec<(usize, usize)>,
        /// Detectors to time.
        #[arg(long, value_delimiter = ',', default_value = "alg1,ost", value_parser = parse_detector)]
        detectors: Vec<Detector>,
        #[arg(long, default_value_t = 15)]
        repetitions: usize,
    },
    /// Build the sensing matrix for a configuration and cache it on disk.
    GenMatrix {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (m, n) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected MxN, got {s}"))?;
    let m = m.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    let n = n.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    Ok((m, n))
}

fn parse_detector(s: &str) -> std::result::Result<Detector, String> {
    match s {
        "alg1" => Ok(Detector::Alg1),
        "alg2" => Ok(Detector::Alg2),
        "ost" => Ok(Detector::Ost),
        _ => Err(format!("unknown detector {s}")),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn preview(v: &[u64], limit: usize) -> String {
    let shown: Vec<String> = v.iter().take(limit).map(u64::to_string).collect();
    if v.len() > limit {
        format!("[{}, ... ({} total)]", shown.join(", "), v.len())
    } else {
        format!("[{}]", shown.join(", "))
    }
}

fn detect_single_cmd(common: &Common, root: u64, shift: Option<u64>, snr_db: f64) -> Result<()> {
    let mut cfg = common.load()?;
    cfg.users = 1;
    cfg.detector = DetectorChoice::Alg1;
    let exp = Experiment::new(&cfg)?;
    if !exp.roots.contains(root) {
        bail!("root {root} is not in the configured root set");
    }
    let a = shift.unwrap_or(cfg.shift);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let y = exp.received(&[root], snr_db, &mut rng)?;
    let grid = exp.grid;
    println!(
        "grid {}x{} (MN = {}), root {root}, shift {a}, SNR {snr_db} dB, seed {}",
        grid.m(),
        grid.n(),
        grid.mn(),
        cfg.seed
    );
    match detect_single(&y, a, &exp.roots) {
        Ok(rep) => {
            let (l, k) = (rep.dd_line_index(), rep.tf_line_index());
            print_lines(&rep, l, k, a, &exp)?;
            println!("detected: {}", rep.detected[0]);
            println!("hit: {}", rep.detected[0] == root);
            if let Some(p) = &common.out {
                std::fs::write(p, serde_json::to_string_pretty(&rep)?)?;
            }
        }
        Err(Error::NoIntersection {
            dd_line,
            tf_line,
            crt_point,
        }) => {
            println!("l' = {dd_line}, k' = {tf_line}");
            println!("CRT point {crt_point} is not an admissible root");
            println!("detected: none");
            println!("hit: false");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn print_lines(rep: &DetectionReport, l: usize, k: usize, a: u64, exp: &Experiment) -> Result<()> {
    let d = &rep.per_shift[0];
    println!("l' = {l} (DD line sum {:.3})", d.row_sums[l]);
    println!("k' = {k} (TF line sum {:.3})", d.col_sums[k]);
    let u_dd = line_candidates_dd(&[l], a, &exp.roots)?.roots();
    let u_tf = line_candidates_tf(&[k], a, &exp.roots)?.roots();
    println!("DD candidates {}", preview(&u_dd, 8));
    println!("TF candidates {}", preview(&u_tf, 8));
    println!("CRT point {}", crt_point(l, k, a, &exp.grid)?);
    Ok(())
}

fn detect_multi_cmd(
    common: &Common,
    roots: &[u64],
    snr_db: f64,
    matrix: Option<&Path>,
) -> Result<()> {
    let mut cfg = common.load()?;
    if !roots.is_empty() {
        cfg.users = roots.len();
    }
    cfg.detector = DetectorChoice::Alg2;
    let cached = match matrix {
        Some(p) => Some(
            SensingMatrix::read_cache(p)
                .with_context(|| format!("reading sensing matrix {}", p.display()))?,
        ),
        None => None,
    };
    let exp = Experiment::with_matrix(&cfg, cached)?;
    let a = exp.sensing.as_ref().expect("alg2 builds a dictionary");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tx = if roots.is_empty() {
        exp.draw_roots(&mut rng)
    } else {
        if let Some(u) = roots.iter().find(|&&u| !exp.roots.contains(u)) {
            bail!("root {u} is not in the configured root set");
        }
        roots.to_vec()
    };
    let k = tx.len();
    let y = exp.received(&tx, snr_db, &mut rng)?;
    let y_dd = dzt(&y);
    let shifts = &exp.shifts;
    println!(
        "grid {}x{}, K = {k}, shifts {:?}, SNR {snr_db} dB, seed {}",
        exp.grid.m(),
        exp.grid.n(),
        shifts,
        cfg.seed
    );
    println!("transmitted {tx:?}");
    match detect_multi_dd(&y, y_dd.as_slice(), shifts, k, a, &exp.roots) {
        Ok(rep) => {
            for d in &rep.per_shift {
                println!(
                    "shift {}: DD lines {:?}, TF lines {:?}",
                    d.shift, d.dd_lines, d.tf_lines
                );
            }
            println!("candidates {}", preview(&rep.candidates.roots(), 12));
            let hits = tx.iter().filter(|u| rep.detected.contains(u)).count();
            println!("alg2 detected {:?} ({hits}/{k} hits)", rep.detected);
            if let Some(p) = &common.out {
                std::fs::write(p, serde_json::to_string_pretty(&rep)?)?;
            }
        }
        Err(e) => println!("alg2 failed: {e}"),
    }
    let ost = ost_detect(a, y_dd.as_slice(), k)?;
    let hits = tx.iter().filter(|u| ost.roots().contains(u)).count();
    println!("ost detected {:?} ({hits}/{k} hits)", ost.roots());
    Ok(())
}

fn sweep_cmd(common: &Common) -> Result<()> {
    let mut cfg = common.load()?;
    if let Some(p) = &common.out {
        cfg.output = Some(p.clone());
    }
    let res = run_sweep(&cfg)?;
    if cfg.output.is_none() {
        print!("{}", res.to_csv_string()?);
    }
    Ok(())
}

fn bench_cmd(
    common: &Common,
    grids: &[(usize, usize)],
    detectors: &[Detector],
    repetitions: usize,
) -> Result<()> {
    let cfg = BenchConfig {
        grids: if grids.is_empty() {
            DEFAULT_BENCH_GRIDS.to_vec()
        } else {
            grids.to_vec()
        },
        detectors: detectors.to_vec(),
        repetitions,
        seed: common.seed.unwrap_or(0),
        threads: Some(common.threads.unwrap_or(1)),
        ..BenchConfig::default()
    };
    let res = run_bench(&cfg)?;
    let mut buf = Vec::new();
    res.write_csv(&mut buf)?;
    write_or_print(common.out.as_deref(), &String::from_utf8(buf)?)?;
    for &d in detectors {
        if let Some(s) = res.slope(d) {
            eprintln!("{} log-log slope vs MN: {s:.3}", d.name());
        }
    }
    Ok(())
}

fn gen_matrix_cmd(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let grid = cfg.grid_config()?;
    let roots = zakrach::build_root_set(&grid, cfg.roots)?;
    let scfg = cfg.sensing_config()?;
    let a = build_sensing_matrix(&roots, &grid, &scfg)?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("sensing.zksm"));
    a.write_cache(&out)?;
    println!(
        "wrote {} ({} x {} = {} roots x {} translates)",
        out.display(),
        a.rows(),
        a.num_columns(),
        a.num_blocks(),
        a.block_size()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::DetectSingle {
            common,
            root,
            shift,
            snr_db,
        } => detect_single_cmd(common, *root, *shift, *snr_db),
        Command::DetectMulti {
            common,
            roots,
            snr_db,
            matrix,
        } => detect_multi_cmd(common, roots, *snr_db, matrix.as_deref()),
        Command::Sweep { common } => sweep_cmd(common),
        Command::Bench {
            common,
            grids,
            detectors,
            repetitions,
        } => bench_cmd(common, grids, detectors, *repetitions),
        Command::GenMatrix { common } => gen_matrix_cmd(common),
    }
}
