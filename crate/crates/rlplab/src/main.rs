//! Command-line front end: seeded experiments plus small inspection tools.
//!
//! Exit codes: 0 when every local assertion passed, 1 when a named
//! assertion failed (names go to stderr), 2 on usage or data errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rlplab::dyadic::{build_sparse, verify_sparse, SparseFamily, SPARSE_ETA};
use rlplab::error::{Error, Result};
use rlplab::experiments::{run_experiment, ExperimentConfig, EXPERIMENTS};
use rlplab::family::FamilySpec;
use rlplab::packet::WavePacketParams;
use rlplab::signal::{Signal, C64};
use rlplab::square::square_fn;
use rlplab::tiles::tiles_for_family;
use rlplab::tree::ModelWorkspace;
use rlplab::weights::{
    a1_characteristic, ainfty_characteristic, ap_characteristic, estimate_opnorm, fit_exponent,
    OpNormMode, Weight, WeightSpec,
};

#[derive(Parser)]
#[command(
    name = "rlplab",
    about = "Square-function laboratory on periodic grids",
    version
)]
struct Cli {
    /// List the experiments and what each one checks.
    #[arg(long)]
    list: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

/// Overrides applied on top of an experiment's defaults.
#[derive(Args, Clone, Debug, Default)]
struct RunArgs {
    /// Grid size (power of two in [64, 8192]).
    #[arg(long)]
    n: Option<usize>,
    /// Base RNG seed; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Family spec: unit | lacunary:<ratio> | congruent:<ratio>:<split> | file:<path>.
    #[arg(long)]
    family: Option<String>,
    /// Weight spec: const:<c> | power:<a>[:<basepoint>] | step:<lo>:<hi>:<frac> | file:<path>.
    #[arg(long)]
    weight: Option<String>,
    /// Lebesgue exponents.
    #[arg(long = "p", value_name = "P", num_args = 1..)]
    p: Vec<f64>,
    /// Trials per measurement.
    #[arg(long)]
    budget: Option<usize>,
    /// Output directory for report.json, data.csv, plot.dat.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the partition-family square function is an L2 isometry.
    Plancherel(RunArgs),
    /// Norm lower bounds across p with a power-law fit.
    #[command(name = "p-growth")]
    PGrowth(RunArgs),
    /// Unit-family norm growth below p = 2 across grid sizes.
    #[command(name = "sub2-failure")]
    Sub2Failure(RunArgs),
    /// Pairing-to-sparse-form ratios across grid sizes.
    #[command(name = "sparse-domination")]
    SparseDomination(RunArgs),
    /// Model-form ratios and the L1-average swap.
    #[command(name = "model-sparse")]
    ModelSparse(RunArgs),
    /// Weighted lower bounds against characteristic powers.
    #[command(name = "weighted-exponent")]
    WeightedExponent(RunArgs),
    /// Weak-type lower bounds at p = 2.
    #[command(name = "weak-endpoint")]
    WeakEndpoint(RunArgs),
    /// Two-stage projection composition and its weighted cap.
    #[command(name = "congruent-composition")]
    CongruentComposition(RunArgs),

    /// Apply the square function to a signal file.
    Sqfn {
        /// Expected grid size; checked against the input file.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        family: String,
        /// Input signal (text format).
        #[arg(long)]
        input: PathBuf,
        /// Where the square function samples are written.
        #[arg(long)]
        output: PathBuf,
    },
    /// Dump the tile collection of a family.
    Tiles {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        family: String,
        /// Output path; one tile per line `k scale pos freq_a freq_b`.
        #[arg(long)]
        dump: PathBuf,
    },
    /// Model form of a pair plus its energy decomposition summary.
    #[command(name = "model-form")]
    ModelForm {
        #[arg(long = "input-f")]
        input_f: PathBuf,
        #[arg(long = "input-g")]
        input_g: PathBuf,
        /// Family the tiles come from.
        #[arg(long, default_value = "lacunary:2")]
        family: String,
        /// Decomposition start level; defaults to the measured top size.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Build a sparse collection from a pair of signals.
    #[command(name = "sparse-build")]
    SparseBuild {
        /// Grid size for generated inputs; checked against files.
        #[arg(long)]
        n: Option<usize>,
        /// Seed for generated inputs when no files are given.
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long = "input-f")]
        input_f: Option<PathBuf>,
        #[arg(long = "input-g")]
        input_g: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Shifted dyadic grid (0, 1 or 2).
        #[arg(long, default_value_t = 0)]
        grid: u8,
    },
    /// Verify a sparse collection file.
    #[command(name = "sparse-verify")]
    SparseVerify {
        /// Required packing fraction.
        #[arg(long, default_value_t = SPARSE_ETA)]
        eta: f64,
        /// Sparse collection (text format).
        file: PathBuf,
    },
    /// Print Muckenhoupt characteristics of a weight.
    Weights {
        #[arg(long)]
        weight: String,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long = "p", value_name = "P", num_args = 1..)]
        p: Vec<f64>,
        /// Accepted for compatibility; the table is always printed.
        #[arg(long)]
        report: bool,
    },
    /// Lower-bound the weighted operator norm by seeded search.
    Opnorm {
        #[arg(long)]
        family: String,
        #[arg(long)]
        weight: String,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long)]
        p: f64,
        /// strong | weak
        #[arg(long, default_value = "strong")]
        mode: String,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Sweep power weights and fit the norm against the characteristic.
    #[command(name = "exponent-fit")]
    ExponentFit {
        #[arg(long)]
        p: f64,
        /// Only `power` is available.
        #[arg(long = "weight-family", default_value = "power")]
        weight_family: String,
        /// Comma-separated power-weight exponents.
        #[arg(long = "a-grid", default_value = "0.1,0.2,0.3,0.4,0.5")]
        a_grid: String,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value = "lacunary:2")]
        family: String,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    if cli.list {
        for (name, what) in EXPERIMENTS {
            println!("{name:<22} {what}");
        }
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no subcommand; try --help or --list");
        return ExitCode::from(2);
    };
    match dispatch(command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Caps the global rayon pool when `RLPLAB_THREADS` is set.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RLPLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| Error::param(format!("RLPLAB_THREADS={raw:?} is not a thread count")))?;
    if threads == 0 {
        return Err(Error::param("RLPLAB_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::param(format!("thread pool: {e}")))
}

/// Runs one subcommand; `Ok(false)` means a named assertion failed.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Plancherel(a) => experiment("plancherel", a),
        Command::PGrowth(a) => experiment("p-growth", a),
        Command::Sub2Failure(a) => experiment("sub2-failure", a),
        Command::SparseDomination(a) => experiment("sparse-domination", a),
        Command::ModelSparse(a) => experiment("model-sparse", a),
        Command::WeightedExponent(a) => experiment("weighted-exponent", a),
        Command::WeakEndpoint(a) => experiment("weak-endpoint", a),
        Command::CongruentComposition(a) => experiment("congruent-composition", a),
        Command::Sqfn { n, family, input, output } => sqfn(n, &family, &input, &output),
        Command::Tiles { n, family, dump } => tiles(n, &family, &dump),
        Command::ModelForm { input_f, input_g, family, lambda } => {
            model_form_cmd(&input_f, &input_g, &family, lambda)
        }
        Command::SparseBuild { n, seed, input_f, input_g, output, grid } => {
            sparse_build_cmd(n, seed, input_f.as_deref(), input_g.as_deref(), &output, grid)
        }
        Command::SparseVerify { eta, file } => sparse_verify_cmd(eta, &file),
        Command::Weights { weight, n, p, report: _ } => weights_cmd(&weight, n, &p),
        Command::Opnorm { family, weight, n, p, mode, budget, seed } => {
            opnorm_cmd(&family, &weight, n, p, &mode, budget, seed)
        }
        Command::ExponentFit { p, weight_family, a_grid, n, family, budget, seed } => {
            exponent_fit_cmd(p, &weight_family, &a_grid, n, &family, budget, seed)
        }
    }
}

fn experiment(name: &str, args: RunArgs) -> Result<bool> {
    let mut cfg = ExperimentConfig::defaults(name)?;
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(family) = args.family {
        cfg.family_spec = family;
    }
    if let Some(weight) = args.weight {
        cfg.weight_spec = weight;
    }
    if !args.p.is_empty() {
        cfg.p_values = args.p;
    }
    if let Some(budget) = args.budget {
        cfg.budget = budget;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    let outcome = run_experiment(&cfg)?;
    outcome.write(&cfg.output_dir)?;
    println!("experiment: {name}");
    println!("passed: {}", outcome.report.passed);
    println!("report: {}", cfg.output_dir.join("report.json").display());
    for (k, v) in &outcome.report.constants_measured {
        println!("  {k} = {v}");
    }
    for failed in &outcome.failures {
        eprintln!("assertion failed: {failed}");
    }
    Ok(outcome.report.passed)
}

fn sqfn(n: Option<usize>, family: &str, input: &std::path::Path, output: &std::path::Path) -> Result<bool> {
    let f = Signal::read_file(input)?;
    if let Some(n) = n {
        if f.n() != n {
            return Err(Error::param(format!(
                "input has {} samples, --n says {n}",
                f.n()
            )));
        }
    }
    let family = FamilySpec::parse(family)?.build(f.n())?;
    let tf = square_fn(&f, &family)?;
    tf.write_file(output)?;
    println!("wrote {} ({} samples)", output.display(), tf.n());
    Ok(true)
}

fn tiles(n: usize, family: &str, dump: &std::path::Path) -> Result<bool> {
    let family = FamilySpec::parse(family)?.build(n)?;
    let tc = tiles_for_family(&family, n)?;
    let mut out = String::new();
    for tile in tc.all_tiles() {
        let scale = tile.time.len.trailing_zeros();
        let pos = tile.time.start / tile.time.len;
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            tile.family, scale, pos, tile.freq.a, tile.freq.b
        ));
    }
    std::fs::write(dump, out)?;
    println!("wrote {} tiles to {}", tc.tile_count(), dump.display());
    Ok(true)
}

fn model_form_cmd(
    input_f: &std::path::Path,
    input_g: &std::path::Path,
    family: &str,
    lambda: Option<f64>,
) -> Result<bool> {
    let f = Signal::read_file(input_f)?;
    let g = Signal::read_file(input_g)?;
    if f.n() != g.n() {
        return Err(Error::param(format!(
            "grid mismatch: f has {} samples, g has {}",
            f.n(),
            g.n()
        )));
    }
    let family = FamilySpec::parse(family)?.build(f.n())?;
    let tc = tiles_for_family(&family, f.n())?;
    let params = WavePacketParams::default();
    let g_vec = rlplab::square::project_many(&g, &family)?;
    let mut ws = ModelWorkspace::new(&tc, &params, &f, Some(&g_vec))?;
    let lambda_value = ws.model_form()?;
    println!("# Lambda = {lambda_value}");
    let start = match lambda {
        Some(l) => l,
        None => ws.vectorial_size(),
    };
    let decomp = ws.energy_decomposition(start)?;
    println!("level,tree_count,sum_IT,size_cap");
    for level in &decomp.levels {
        println!(
            "{},{},{},{}",
            level.index,
            level.trees.len(),
            // An empty level sums to -0.0; normalize for the CSV.
            level.packing + 0.0,
            level.nominal_cap
        );
    }
    Ok(true)
}

fn sparse_build_cmd(
    n: Option<usize>,
    seed: u64,
    input_f: Option<&std::path::Path>,
    input_g: Option<&std::path::Path>,
    output: &std::path::Path,
    grid: u8,
) -> Result<bool> {
    let load = |path: Option<&std::path::Path>, salt: u64| -> Result<Signal> {
        match path {
            Some(p) => Signal::read_file(p),
            None => {
                let size = n.unwrap_or(1024);
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(salt));
                Signal::from_fn(size, 1.0, |_| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            }
        }
    };
    let f = load(input_f, 0)?;
    let g_raw = load(input_g, 1)?;
    if f.n() != g_raw.n() {
        return Err(Error::param(format!(
            "grid mismatch: f has {} samples, g has {}",
            f.n(),
            g_raw.n()
        )));
    }
    if let Some(n) = n {
        if f.n() != n {
            return Err(Error::param(format!(
                "input has {} samples, --n says {n}",
                f.n()
            )));
        }
    }
    let g = Signal::from_fn(g_raw.n(), g_raw.domain_length(), |i| {
        C64::new(g_raw.samples()[i].norm(), 0.0)
    })?;
    let build = build_sparse(&f, 2.0, &g, 1.0, grid)?;
    verify_sparse(&build.family, SPARSE_ETA)?;
    std::fs::write(output, build.family.to_text())?;
    println!(
        "wrote {} members to {} (verified at eta = {})",
        build.family.members.len(),
        output.display(),
        SPARSE_ETA
    );
    Ok(true)
}

fn sparse_verify_cmd(eta: f64, file: &std::path::Path) -> Result<bool> {
    let text = std::fs::read_to_string(file)?;
    let family = SparseFamily::from_text(&text)?;
    match verify_sparse(&family, eta) {
        Ok(()) => {
            println!("ok: {} members satisfy eta = {eta}", family.members.len());
            Ok(true)
        }
        Err(Error::Invariant(msg)) => {
            eprintln!("assertion failed: sparse_packing ({msg})");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

fn weights_cmd(weight: &str, n: usize, ps: &[f64]) -> Result<bool> {
    let w = WeightSpec::parse(weight)?.build(n, 1.0)?;
    println!("characteristic,value");
    println!("a1,{}", a1_characteristic(&w)?);
    let ps: Vec<f64> = if ps.is_empty() { vec![2.0] } else { ps.to_vec() };
    for p in ps {
        println!("a{p},{}", ap_characteristic(&w, p)?);
    }
    println!("ainfty,{}", ainfty_characteristic(&w)?);
    Ok(true)
}

fn opnorm_cmd(
    family: &str,
    weight: &str,
    n: usize,
    p: f64,
    mode: &str,
    budget: usize,
    seed: u64,
) -> Result<bool> {
    let mode = match mode {
        "strong" => OpNormMode::Strong,
        "weak" => OpNormMode::Weak,
        other => return Err(Error::param(format!("mode {other:?} is not strong|weak"))),
    };
    let family = FamilySpec::parse(family)?.build(n)?;
    let w = WeightSpec::parse(weight)?.build(n, 1.0)?;
    let est = estimate_opnorm(&family, &w, p, mode, budget, seed)?;
    println!("value,best_trial,trial_count");
    println!("{},{},{}", est.value, est.best_label, est.trial_count);
    Ok(true)
}

fn exponent_fit_cmd(
    p: f64,
    weight_family: &str,
    a_grid: &str,
    n: usize,
    family: &str,
    budget: usize,
    seed: u64,
) -> Result<bool> {
    if weight_family != "power" {
        return Err(Error::param(format!(
            "weight family {weight_family:?} is not available; use power"
        )));
    }
    let grid: Vec<f64> = a_grid
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::param(format!("bad exponent {s:?} in --a-grid")))
        })
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(Error::param("--a-grid needs at least one exponent"));
    }
    let family = FamilySpec::parse(family)?.build(n)?;
    // The characteristic is taken where the weighted theory lives for the
    // square function: A_{p/2} above p = 2, A_2 at and below.
    let char_exponent = (p / 2.0).max(2.0_f64.min(p));
    let basepoint = n / 3;
    let mut rows = Vec::new();
    println!("a,ap_char,norm_lb");
    for &a in &grid {
        let w = Weight::power(n, 1.0, a, basepoint)?;
        let ap = ap_characteristic(&w, char_exponent)?;
        let est = estimate_opnorm(&family, &w, p, OpNormMode::Strong, budget, seed)?;
        println!("{a},{ap},{}", est.value);
        rows.push((ap, est.value));
    }
    if rows.len() >= 2 {
        let (slope, prefactor) = fit_exponent(&rows)?;
        println!("# slope = {slope}");
        println!("# prefactor = {prefactor}");
    }
    Ok(true)
}
