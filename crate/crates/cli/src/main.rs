//! `mantensor` command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure.

mod parse;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mantensor::experiments::{
    barycentre, benchmark, gen_sphere_1d, gen_spd_1d, nearest_data_barycentre, relative_error, run_method,
    run_rank_sweep, McSettings, Method, StepSize, SweepConfig,
};
use mantensor::io::{self, Repair, DEFAULT_CLAMP_REL};
use mantensor::{ManifoldPoint, MvTensor};
use serde::Serialize;

use parse::{RankList, RankSpec};

#[derive(Parser, Debug)]
#[command(name = "mantensor", version, about = "Low-rank approximation of manifold-valued tensors")]
struct Cli {
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true, env = "MANTENSOR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dataset {
    Sphere1d,
    Spd1d,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Thosvd,
    Cc,
    Mc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Thosvd => Method::Thosvd,
            MethodArg::Cc => Method::Cc,
            MethodArg::Mc => Method::Mc,
        }
    }
}

#[derive(clap::Args, Debug)]
struct BaseArgs {
    /// Base point: `frechet`, `nearest` or an MVT file holding one point.
    #[arg(long, default_value = "frechet")]
    base: String,
}

#[derive(clap::Args, Debug)]
struct McArgs {
    /// MC step size: a number or `auto`.
    #[arg(long, default_value = "auto")]
    tau: String,
    /// MC iteration cap.
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// MC relative gradient tolerance.
    #[arg(long, default_value_t = 1e-2)]
    grad_tol: f64,
}

impl McArgs {
    fn settings(&self) -> Result<McSettings> {
        let step = if self.tau == "auto" {
            StepSize::Auto
        } else {
            let tau: f64 = self.tau.parse().with_context(|| format!("bad --tau {:?}", self.tau))?;
            if tau.is_nan() || tau <= 0.0 {
                bail!("--tau must be positive");
            }
            StepSize::Fixed(tau)
        };
        Ok(McSettings {
            step,
            grad_tol_rel: self.grad_tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic 1D data set.
    Generate {
        dataset: Dataset,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        noise_var: f64,
        /// Variance of the geodesic parameter (spd1d only).
        #[arg(long, default_value_t = 2.0)]
        tau_var: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a base point for the data.
    Barycentre {
        file: PathBuf,
        /// Best data entry instead of the Riemannian barycentre.
        #[arg(long)]
        nearest_data: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Also write the point as a one-entry MVT file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Approximate at one rank.
    Approximate {
        file: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// `full`, `r` (every mode) or `r1,r2,…`.
        #[arg(long, value_parser = parse::rank_spec)]
        rank: RankSpec,
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        mc: McArgs,
        /// JSON file with the base point, factors and core.
        #[arg(long)]
        out_core: Option<PathBuf>,
        /// CSV report; printed to stdout when omitted.
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Approximate over a list of ranks.
    Sweep {
        file: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Ranks such as `1..5`, `1..40:3` or `1,2,8`; each applies to every mode.
        #[arg(long, value_parser = parse::rank_list)]
        ranks: RankList,
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Fill the time_s column.
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-threaded timings per rank.
    Bench {
        file: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_parser = parse::rank_list)]
        ranks: RankList,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a raw 3×3 matrix field into an SPD tensor file.
    IngestSpd {
        raw: PathBuf,
        /// Grid size `X,Y,Z`.
        #[arg(long, value_parser = parse::dims3)]
        dims: [usize; 3],
        /// `x0:x1,y0:y1,z`, 0-based and half-open.
        #[arg(long, value_parser = parse::crop)]
        crop: Option<io::Crop>,
        #[arg(long, default_value_t = DEFAULT_CLAMP_REL)]
        clamp_rel: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<MvTensor> {
    io::read_mvt(path, Repair::Reject).with_context(|| format!("reading {}", path.display()))
}

fn resolve_base(arg: &str, t: &MvTensor) -> Result<ManifoldPoint> {
    let p = match arg {
        "frechet" => barycentre(t, 1e-9, 200)?,
        "nearest" => nearest_data_barycentre(t)?,
        path => {
            let f = load(Path::new(path))?;
            match f.entries().first() {
                Some(p) if f.len() == 1 => p.clone(),
                _ => bail!(mantensor::Error::InvalidArgument(format!("{path} must hold exactly one point"))),
            }
        }
    };
    if p.descriptor() != t.descriptor() {
        bail!(mantensor::Error::DescriptorMismatch(format!(
            "base point on {:?}, data on {:?}",
            p.descriptor(),
            t.descriptor()
        )));
    }
    Ok(p)
}

fn emit_rows(rows: &[mantensor::experiments::SweepRow], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => io::write_report_file(path, rows)?,
        None => io::write_report_csv(std::io::stdout().lock(), rows)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct CoreFile {
    method: String,
    manifold: String,
    base: Vec<f64>,
    data_shape: Vec<usize>,
    core_shape: Vec<usize>,
    /// Core tangent tensor, row-major entries, ambient coordinates per entry.
    core: Vec<f64>,
    /// Factor matrices, one row-major `d_k × r_k` array per mode.
    factors: Vec<Vec<Vec<f64>>>,
    eps_rel: f64,
    iterations: Option<usize>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            dataset,
            n,
            noise_var,
            tau_var,
            seed,
            out,
        } => {
            let t = match dataset {
                Dataset::Sphere1d => gen_sphere_1d(n, noise_var, seed)?,
                Dataset::Spd1d => gen_spd_1d(n, tau_var, noise_var, seed)?,
            };
            io::write_mvt(&out, &t)?;
        }
        Command::Barycentre {
            file,
            nearest_data,
            tol,
            max_iter,
            out,
        } => {
            let t = load(&file)?;
            let p = if nearest_data {
                nearest_data_barycentre(&t)?
            } else {
                barycentre(&t, tol, max_iter)?
            };
            println!("{}", serde_json::to_string(p.coords())?);
            if let Some(path) = out {
                io::write_mvt(path, &MvTensor::new(vec![1], vec![p])?)?;
            }
        }
        Command::Approximate {
            file,
            method,
            rank,
            base,
            mc,
            out_core,
            out_report,
        } => {
            let t = load(&file)?;
            let p = resolve_base(&base.base, &t)?;
            let r = rank.resolve(t.shape(), t.descriptor().intrinsic_dim())?;
            let method = Method::from(method);
            let settings = mc.settings()?;
            let opts = settings.resolve(&p, &t, &r)?;
            let out = run_method(method, &t, &p, &r, &opts)?;
            let mut cfg = SweepConfig::new(method, vec![r.clone()]);
            cfg.mc = McSettings {
                step: StepSize::Fixed(opts.tau),
                ..settings
            };
            let report = run_rank_sweep(&t, &p, &cfg)?;
            emit_rows(&report.rows, out_report.as_deref())?;
            if let Some(path) = out_core {
                let f = &out.factors;
                let doc = CoreFile {
                    method: method.to_string(),
                    manifold: report.meta.manifold.clone(),
                    base: p.coords().to_vec(),
                    data_shape: t.shape().to_vec(),
                    core_shape: f.core_shape().to_vec(),
                    core: f.core.data().to_vec(),
                    factors: f
                        .factors
                        .iter()
                        .map(|u| (0..u.nrows()).map(|i| u.row(i).iter().copied().collect()).collect())
                        .collect(),
                    eps_rel: relative_error(&t, &p, &out.tangent())?,
                    iterations: out.iterations,
                };
                std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
            }
        }
        Command::Sweep {
            file,
            method,
            ranks,
            base,
            mc,
            timing,
            out,
        } => {
            let t = load(&file)?;
            let p = resolve_base(&base.base, &t)?;
            let mut cfg = SweepConfig::new(method.into(), ranks.0.iter().map(|&r| vec![r; t.order()]).collect());
            cfg.mc = mc.settings()?;
            cfg.timing = timing;
            let report = run_rank_sweep(&t, &p, &cfg)?;
            log::info!("{} {:?} base={}", report.meta.manifold, report.meta.shape, base.base);
            emit_rows(&report.rows, out.as_deref())?;
        }
        Command::Bench {
            file,
            method,
            ranks,
            repeats,
            base,
            mc,
            out,
        } => {
            let t = load(&file)?;
            let p = resolve_base(&base.base, &t)?;
            let method = Method::from(method);
            let settings = mc.settings()?;
            let mut rows = Vec::new();
            for r in ranks.0 {
                let rank = vec![r; t.order()];
                let stats = benchmark(method, &t, &p, &rank, repeats, &settings)?;
                let mut cfg = SweepConfig::new(method, vec![rank]);
                cfg.mc = settings.clone();
                let mut row = run_rank_sweep(&t, &p, &cfg)?.rows.remove(0);
                row.time_s = Some(stats.median);
                rows.push(row);
            }
            emit_rows(&rows, out.as_deref())?;
        }
        Command::IngestSpd {
            raw,
            dims,
            crop,
            clamp_rel,
            out,
        } => {
            let t = io::ingest_spd_image(&raw, dims, crop.as_ref(), clamp_rel)?;
            io::write_mvt(&out, &t)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mantensor::Error>() {
        Some(e) if !e.is_validation() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
