//! Synthetic generators, base points, error metrics, rank sweeps and timing.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::correction::{build_curvature_system, cc_refit, discrepancy, zero_delta_lower_bound, CurvatureSystem};
use crate::error::{Error, Result};
use crate::linalg::{norm, spd_log, sym_exp};
use crate::manifold::{exp_map, random_tangent, ManifoldKind, ManifoldPoint, TangentVector};
use crate::metric::{autotune_step, mc_thosvd, McOptions};
use crate::par;
use crate::tensor::{exp_tensor, tangent_norm, tensor_distance, MvTensor, TangentTensor};
use crate::tucker::{reconstruct, thosvd, thosvd_of_log, truncate, TuckerFactors};

/// Seeded generator used by every experiment: ChaCha with 8 rounds.
pub type ExperimentRng = ChaCha8Rng;

pub fn experiment_rng(seed: u64) -> ExperimentRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Noisy great circle on 𝕊⁶: clean entries `(cos φᵢ, sin φᵢ, 0, …, 0)`,
/// `φᵢ = 2π i / n`, perturbed by `exp` of a random tangent vector.
pub fn gen_sphere_1d(n: usize, noise_var: f64, seed: u64) -> Result<MvTensor> {
    check_gen(n, noise_var)?;
    let mut rng = experiment_rng(seed);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let mut x = vec![0.0; 7];
        x[0] = phi.cos();
        x[1] = phi.sin();
        let clean = ManifoldPoint::sphere(x)?;
        entries.push(perturb(clean, noise_var, &mut rng)?);
    }
    MvTensor::new(vec![n], entries)
}

/// Noisy geodesic through the identity in 𝒫(3): clean entries
/// `diag(1, e^{τᵢ}, 1)` with `τᵢ ~ 𝒩(0, tau_var)`.
pub fn gen_spd_1d(n: usize, tau_var: f64, noise_var: f64, seed: u64) -> Result<MvTensor> {
    check_gen(n, noise_var)?;
    if !(tau_var >= 0.0) || !tau_var.is_finite() {
        return Err(Error::InvalidArgument(format!("tau variance must be nonnegative, got {tau_var}")));
    }
    let mut rng = experiment_rng(seed);
    let sd = tau_var.sqrt();
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let clean = ManifoldPoint::spd(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0,
            (sd * z).exp(),
            1.0,
        ])))?;
        entries.push(perturb(clean, noise_var, &mut rng)?);
    }
    MvTensor::new(vec![n], entries)
}

fn check_gen(n: usize, noise_var: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidArgument(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    Ok(())
}

fn perturb(clean: ManifoldPoint, noise_var: f64, rng: &mut ExperimentRng) -> Result<ManifoldPoint> {
    if noise_var == 0.0 {
        return Ok(clean);
    }
    let eta = random_tangent(&clean, noise_var, rng)?;
    exp_map(&clean, &eta)
}

/// Cheap starting point for the barycentre iteration.
fn initial_guess(t: &MvTensor) -> Result<ManifoldPoint> {
    let desc = t.descriptor();
    let m = desc.embedding_dim();
    let n = t.len() as f64;
    match desc.kind() {
        ManifoldKind::Euclidean => {
            let mut mean = vec![0.0; m];
            for e in t.entries() {
                crate::linalg::axpy(1.0 / n, e.coords(), &mut mean);
            }
            Ok(ManifoldPoint::euclidean(mean))
        }
        ManifoldKind::Sphere => {
            let mut mean = vec![0.0; m];
            for e in t.entries() {
                crate::linalg::axpy(1.0 / n, e.coords(), &mut mean);
            }
            let len = norm(&mean);
            if len > 1e-8 {
                ManifoldPoint::sphere(mean.iter().map(|x| x / len).collect())
            } else {
                Ok(t.entries()[0].clone())
            }
        }
        ManifoldKind::Spd => {
            // log-Euclidean mean
            let k = desc.matrix_size().unwrap_or(0);
            let mut acc = DMatrix::zeros(k, k);
            for e in t.entries() {
                if let Some(m) = e.as_matrix() {
                    acc += spd_log(&m) / n;
                }
            }
            ManifoldPoint::spd(&sym_exp(&acc))
        }
    }
}

fn mean_log(p: &ManifoldPoint, t: &MvTensor) -> Result<(Vec<f64>, f64)> {
    let logs = par::try_map_range(t.len(), |i| crate::manifold::log_map(p, &t.entries()[i]))?;
    let m = p.descriptor().embedding_dim();
    let mut mean = vec![0.0; m];
    let mut far: f64 = 0.0;
    for l in &logs {
        crate::linalg::axpy(1.0 / t.len() as f64, l.coords(), &mut mean);
        far = far.max(crate::manifold::norm(l));
    }
    Ok((mean, far))
}

/// Riemannian barycentre by the Karcher fixed-point iteration
/// `p ← exp_p(mean log_p Tᵢ)`, stopped when the step norm drops below `tol`.
pub fn barycentre(t: &MvTensor, tol: f64, max_iter: usize) -> Result<ManifoldPoint> {
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty tensor".into()));
    }
    let hemisphere = t.descriptor().kind() == ManifoldKind::Sphere;
    let mut warned = false;
    let mut p = initial_guess(t)?;
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let (mean, far) = mean_log(&p, t)?;
        if hemisphere && !warned && far > 0.75 * std::f64::consts::PI {
            log::warn!("data leaves the open hemisphere around the barycentre iterate (max distance {far:.3})");
            warned = true;
        }
        let step = TangentVector::new(p.clone(), mean)?;
        last = crate::manifold::norm(&step);
        if last < tol {
            return Ok(p);
        }
        p = exp_map(&p, &step)?;
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        last_step: last,
    })
}

/// The data entry minimizing `Σ d(·, Tᵢ)²`; ties go to the lowest flat index.
pub fn nearest_data_barycentre(t: &MvTensor) -> Result<ManifoldPoint> {
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty tensor".into()));
    }
    let entries = t.entries();
    let costs = par::try_map_range(entries.len(), |i| {
        let mut s = 0.0;
        for x in entries {
            s += crate::manifold::distance(&entries[i], x)?.powi(2);
        }
        Ok::<f64, Error>(s)
    })?;
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    Ok(entries[best].clone())
}

/// `d(T, exp_p Ξ)² / d(T, p)²`, 0 when the data coincides with `p`.
pub fn relative_error(t: &MvTensor, p: &ManifoldPoint, xi: &TangentTensor) -> Result<f64> {
    let approx = exp_tensor(p, xi)?;
    let num = tensor_distance(t, &approx)?.powi(2);
    let den = denominator(t, p)?;
    Ok(ratio(num, den))
}

fn denominator(t: &MvTensor, p: &ManifoldPoint) -> Result<f64> {
    let d = par::try_map_range(t.len(), |i| crate::manifold::distance(&t.entries()[i], p))?;
    Ok(d.iter().map(|x| x * x).sum())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Thosvd,
    Cc,
    Mc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Thosvd => "thosvd",
            Method::Cc => "cc",
            Method::Mc => "mc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thosvd" => Ok(Method::Thosvd),
            "cc" => Ok(Method::Cc),
            "mc" => Ok(Method::Mc),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// Chosen per rank by [`autotune_step`].
    Auto,
}

/// MC-tHOSVD settings for sweeps and benchmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct McSettings {
    pub step: StepSize,
    pub grad_tol_rel: f64,
    pub max_iter: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            step: StepSize::Auto,
            grad_tol_rel: 1e-2,
            max_iter: 1000,
        }
    }
}

impl McSettings {
    /// Concrete descent options for rank `r`; runs the step search when needed.
    pub fn resolve(&self, p: &ManifoldPoint, t: &MvTensor, r: &[usize]) -> Result<McOptions> {
        let tau = match self.step {
            StepSize::Fixed(tau) => tau,
            StepSize::Auto => autotune_step(p, t, r)?,
        };
        Ok(McOptions {
            tau,
            grad_tol_rel: self.grad_tol_rel,
            max_iter: self.max_iter,
        })
    }
}

/// Result of one approximation run.
#[derive(Clone, Debug)]
pub struct MethodOutput {
    pub factors: TuckerFactors,
    pub iterations: Option<usize>,
}

impl MethodOutput {
    pub fn tangent(&self) -> TangentTensor {
        reconstruct(&self.factors)
    }
}

/// Runs one method end to end at rank `r`. `mc` is only read for [`Method::Mc`].
pub fn run_method(method: Method, t: &MvTensor, p: &ManifoldPoint, r: &[usize], mc: &McOptions) -> Result<MethodOutput> {
    match method {
        Method::Thosvd => Ok(MethodOutput {
            factors: truncate(&thosvd(p, t)?, r)?,
            iterations: None,
        }),
        Method::Cc => {
            let sys = build_curvature_system(p, t)?;
            let trunc = truncate(&thosvd_of_log(sys.log_tensor()), r)?;
            Ok(MethodOutput {
                factors: cc_refit(&sys, &trunc)?.factors,
                iterations: None,
            })
        }
        Method::Mc => {
            let (factors, trace) = mc_thosvd(p, t, r, mc)?;
            Ok(MethodOutput {
                factors,
                iterations: Some(trace.iterations()),
            })
        }
    }
}

/// One line of a rank sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub rank: Vec<usize>,
    pub eps_rel: f64,
    pub delta_rel: Option<f64>,
    /// Zero-δ lower bound divided by `d(T, p)²`, on the same scale as `eps_rel`.
    pub lower_bound: f64,
    pub time_s: Option<f64>,
    pub iters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SweepMeta {
    pub manifold: String,
    pub shape: Vec<usize>,
    pub seed: Option<u64>,
    pub base: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub method: Method,
    pub ranks: Vec<Vec<usize>>,
    pub mc: McSettings,
    /// Record wall time per row. Off by default so reports are reproducible byte for byte.
    pub timing: bool,
}

impl SweepConfig {
    pub fn new(method: Method, ranks: Vec<Vec<usize>>) -> Self {
        Self {
            method,
            ranks,
            mc: McSettings::default(),
            timing: false,
        }
    }
}

struct SweepContext {
    sys: CurvatureSystem,
    full: TuckerFactors,
    denom: f64,
}

fn sweep_row(t: &MvTensor, p: &ManifoldPoint, ctx: &SweepContext, cfg: &SweepConfig, r: &[usize]) -> Result<SweepRow> {
    let naive = truncate(&ctx.full, r)?;
    let naive_err = tangent_norm(&reconstruct(&naive).sub(ctx.sys.log_tensor())?).powi(2);
    let lower_bound = ratio(zero_delta_lower_bound(ctx.sys.kappa_max(), naive_err), ctx.denom);
    let opts = match cfg.method {
        Method::Mc => cfg.mc.resolve(p, t, r)?,
        _ => McOptions::default(),
    };
    let start = Instant::now();
    let out = run_method(cfg.method, t, p, r, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    let xi = out.tangent();
    let eps_rel = relative_error(t, p, &xi)?;
    let delta_rel = match cfg.method {
        Method::Cc => Some(discrepancy(t, &xi, &ctx.sys)?.1),
        _ => None,
    };
    if let Some(d) = delta_rel {
        if d.abs() < 1e-3 && lower_bound > eps_rel + 1e-6 {
            log::warn!("rank {r:?}: zero-δ bound {lower_bound:e} exceeds relative error {eps_rel:e}");
        }
    }
    Ok(SweepRow {
        method: cfg.method,
        rank: r.to_vec(),
        eps_rel,
        delta_rel,
        lower_bound,
        time_s: cfg.timing.then_some(elapsed),
        iters: out.iterations,
    })
}

/// One row per rank. A rank that fails is reported with `eps_rel = NaN`
/// instead of aborting the sweep.
pub fn run_rank_sweep(t: &MvTensor, p: &ManifoldPoint, cfg: &SweepConfig) -> Result<SweepReport> {
    let sys = build_curvature_system(p, t)?;
    let full = thosvd_of_log(sys.log_tensor());
    let denom = denominator(t, p)?;
    let ctx = SweepContext { sys, full, denom };
    let mut rows = Vec::with_capacity(cfg.ranks.len());
    for r in &cfg.ranks {
        match sweep_row(t, p, &ctx, cfg, r) {
            Ok(row) => rows.push(row),
            Err(err) => {
                log::warn!("{} rank {r:?} failed: {err}", cfg.method);
                rows.push(SweepRow {
                    method: cfg.method,
                    rank: r.clone(),
                    eps_rel: f64::NAN,
                    delta_rel: None,
                    lower_bound: f64::NAN,
                    time_s: None,
                    iters: None,
                });
            }
        }
    }
    let desc = t.descriptor();
    Ok(SweepReport {
        meta: SweepMeta {
            manifold: manifold_label(desc),
            shape: t.shape().to_vec(),
            seed: None,
            base: String::new(),
        },
        rows,
    })
}

/// `euclidean(d)`, `sphere(d)` or `spd(n)`.
pub fn manifold_label(desc: crate::manifold::ManifoldDescriptor) -> String {
    match desc.kind() {
        ManifoldKind::Euclidean => format!("euclidean({})", desc.intrinsic_dim()),
        ManifoldKind::Sphere => format!("sphere({})", desc.intrinsic_dim()),
        ManifoldKind::Spd => format!("spd({})", desc.matrix_size().unwrap_or(0)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingStats {
    pub median: f64,
    pub min: f64,
    pub samples: Vec<f64>,
}

/// Wall time of `repeats` full runs on one thread, after one warm-up run.
/// The MC step is resolved once, outside the timed region.
pub fn benchmark(
    method: Method,
    t: &MvTensor,
    p: &ManifoldPoint,
    r: &[usize],
    repeats: usize,
    mc: &McSettings,
) -> Result<TimingStats> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    par::single_threaded(|| {
        let opts = match method {
            Method::Mc => mc.resolve(p, t, r)?,
            _ => McOptions::default(),
        };
        run_method(method, t, p, r, &opts)?;
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let out = run_method(method, t, p, r, &opts)?;
            samples.push(start.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        Ok(TimingStats {
            median,
            min: sorted[0],
            samples,
        })
    })
}
