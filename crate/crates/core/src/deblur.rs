//! Image deblurring with total variation and a wavelet-Huber penalty:
//!
//! ```text
//! min_{x ∈ [0, x_max]^N}  λ₁‖∇x‖₁ + λ₂ H_δ(Wx) + ½‖Tx - z‖²
//! ```
//!
//! `T` is a periodic Gaussian blur, `W` an orthonormal Haar transform and
//! `z = T x_clean + noise`. Mapped onto the four-operator inclusion as
//! `A = N_box`, `B = ∂(λ₁‖·‖₁)`, `L = ∇`, `C = ∇(λ₂H_δ∘W)`, `D = ∇(½‖T·-z‖²)`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::ArrayView1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::linops::{DiscreteGradient, GaussianBlur, HaarWavelet, ImageGrid, LinearMap, Vector};
use crate::ops::{BoxIndicator, ForwardOp, L1Norm, QuadraticDataGradient, WeightedHuberGradient};
use crate::pgm::{read_pgm, write_pgm};
use crate::problem::{validate_constants, ProblemSpec, StepConstants, StepSizes};
use crate::solver::{RunReport, Solver, StopRule};

/// Header of `metrics.csv`.
pub const DEBLUR_METRICS_HEADER: &str = "iter,dx,du,rel_pd_err,objective";

const CONFIG_SECTION: &str = "deblur";

#[derive(Debug, Clone, PartialEq)]
pub struct DeblurConfig {
    /// PGM input; `None` selects the seeded phantom.
    pub input: Option<PathBuf>,
    pub rows: usize,
    pub cols: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta: f64,
    pub blur_size: usize,
    pub blur_std: f64,
    /// Noise standard deviation relative to `x_max`.
    pub noise_std: f64,
    pub x_max: f64,
    pub wavelet_levels: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub rel_pd_tol: f64,
    /// Use `τ²β²` in the σ rule instead of `τ²ζ²`.
    pub literal_sigma: bool,
}

impl Default for DeblurConfig {
    fn default() -> Self {
        Self {
            input: None,
            rows: 64,
            cols: 64,
            lambda1: 1e-2,
            lambda2: 1e-4,
            delta: 1e-3,
            blur_size: 9,
            blur_std: 4.0,
            noise_std: 1e-3,
            x_max: 1.0,
            wavelet_levels: 3,
            seed: 2024,
            max_iters: 5000,
            rel_pd_tol: 0.0,
            literal_sigma: false,
        }
    }
}

impl DeblurConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("delta", self.delta),
            ("blur_std", self.blur_std),
            ("x_max", self.x_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::contract("noise_std must be nonnegative"));
        }
        if self.blur_size % 2 == 0 {
            return Err(Error::contract(format!("blur_size must be odd, got {}", self.blur_size)));
        }
        if self.rel_pd_tol < 0.0 {
            return Err(Error::contract("rel_pd_tol must be nonnegative"));
        }
        Ok(())
    }

    /// Reads the `[deblur]` section; missing keys keep their defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let key = |k: &str| format!("{CONFIG_SECTION}.{k}");
        let out = Self {
            input: cfg.get(&key("input")).map(PathBuf::from),
            rows: cfg.get_or(&key("rows"), d.rows)?,
            cols: cfg.get_or(&key("cols"), d.cols)?,
            lambda1: cfg.get_or(&key("lambda1"), d.lambda1)?,
            lambda2: cfg.get_or(&key("lambda2"), d.lambda2)?,
            delta: cfg.get_or(&key("delta"), d.delta)?,
            blur_size: cfg.get_or(&key("blur_size"), d.blur_size)?,
            blur_std: cfg.get_or(&key("blur_std"), d.blur_std)?,
            noise_std: cfg.get_or(&key("noise_std"), d.noise_std)?,
            x_max: cfg.get_or(&key("x_max"), d.x_max)?,
            wavelet_levels: cfg.get_or(&key("wavelet_levels"), d.wavelet_levels)?,
            seed: cfg.get_or(&key("seed"), d.seed)?,
            max_iters: cfg.get_or(&key("max_iters"), d.max_iters)?,
            rel_pd_tol: cfg.get_or(&key("rel_pd_tol"), d.rel_pd_tol)?,
            literal_sigma: cfg.get_or(&key("literal_sigma"), d.literal_sigma)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn to_config(&self) -> Config {
        let mut c = Config::default();
        let mut set = |k: &str, v: String| c.set(&format!("{CONFIG_SECTION}.{k}"), v);
        if let Some(p) = &self.input {
            set("input", p.display().to_string());
        }
        set("rows", self.rows.to_string());
        set("cols", self.cols.to_string());
        set("lambda1", self.lambda1.to_string());
        set("lambda2", self.lambda2.to_string());
        set("delta", self.delta.to_string());
        set("blur_size", self.blur_size.to_string());
        set("blur_std", self.blur_std.to_string());
        set("noise_std", self.noise_std.to_string());
        set("x_max", self.x_max.to_string());
        set("wavelet_levels", self.wavelet_levels.to_string());
        set("seed", self.seed.to_string());
        set("max_iters", self.max_iters.to_string());
        set("rel_pd_tol", self.rel_pd_tol.to_string());
        set("literal_sigma", self.literal_sigma.to_string());
        c
    }

    fn noise_seed(&self) -> u64 {
        self.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
    }
}

/// Seeded piecewise-smooth test image in `[0, x_max]`: a shaded background
/// with a few ellipses and rectangles, one of them carrying a ripple.
pub fn phantom(rows: usize, cols: usize, x_max: f64, seed: u64) -> Result<ImageGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut draw = || unit.sample(&mut rng);
    let (fr, fc) = (rows as f64, cols as f64);
    let mut img = Vector::from_shape_fn(rows * cols, |i| {
        let (r, c) = ((i / cols) as f64 / fr, (i % cols) as f64 / fc);
        0.1 + 0.15 * (r + c)
    });
    for shape in 0..6 {
        let (cr, cc) = (0.15 + 0.7 * draw(), 0.15 + 0.7 * draw());
        let (hr, hc) = (0.06 + 0.18 * draw(), 0.06 + 0.18 * draw());
        let level = 0.2 + 0.7 * draw();
        let ripple = shape == 0;
        for i in 0..rows * cols {
            let (r, c) = ((i / cols) as f64 / fr, (i % cols) as f64 / fc);
            let (dr, dc) = ((r - cr) / hr, (c - cc) / hc);
            let inside = if shape % 2 == 0 {
                dr * dr + dc * dc <= 1.0
            } else {
                dr.abs() <= 1.0 && dc.abs() <= 1.0
            };
            if inside {
                img[i] = if ripple {
                    level * (0.8 + 0.2 * (12.0 * r).sin() * (12.0 * c).cos())
                } else {
                    level
                };
            }
        }
    }
    ImageGrid::new(rows, cols, img.mapv(|v| v.clamp(0.0, 1.0) * x_max))
}

/// `z = T·clean + e` with `e ~ N(0, (noise_std·x_max)²)` from the config
/// seed. Values are not clipped.
pub fn make_observation(clean: &ImageGrid, cfg: &DeblurConfig) -> Result<ImageGrid> {
    cfg.validate()?;
    HaarWavelet::new(clean.rows(), clean.cols(), cfg.wavelet_levels)?;
    let blur = GaussianBlur::new(clean.rows(), clean.cols(), cfg.blur_size, cfg.blur_std)?;
    let mut z = blur.apply(clean.pixels().view());
    let std = cfg.noise_std * cfg.x_max;
    if std > 0.0 {
        let normal = Normal::new(0.0, std).map_err(|e| Error::contract(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed());
        z.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    ImageGrid::new(clean.rows(), clean.cols(), z)
}

/// The assembled problem plus the pieces needed to evaluate the objective.
pub struct DeblurProblem {
    pub spec: ProblemSpec,
    data: Arc<QuadraticDataGradient>,
    huber: Arc<WeightedHuberGradient>,
    gradient: DiscreteGradient,
    lambda1: f64,
}

impl DeblurProblem {
    /// `½‖Tx - z‖² + λ₁‖∇x‖₁ + λ₂H_δ(Wx)`. The box indicator is left out so
    /// the value stays finite at iterates that leave the box by rounding.
    pub fn objective(&self, x: ArrayView1<f64>) -> f64 {
        let tv: f64 = self.gradient.apply(x).iter().map(|v| v.abs()).sum();
        self.data.value(x) + self.lambda1 * tv + self.huber.value(x)
    }

    pub fn beta(&self) -> f64 {
        self.data.constant()
    }

    pub fn zeta(&self) -> f64 {
        self.huber.constant()
    }

    pub fn l_norm(&self) -> f64 {
        self.gradient.norm_bound()
    }
}

pub fn build_deblur_problem(z: &ImageGrid, cfg: &DeblurConfig) -> Result<DeblurProblem> {
    cfg.validate()?;
    let (rows, cols) = (z.rows(), z.cols());
    let n = rows * cols;
    let blur = Arc::new(GaussianBlur::new(rows, cols, cfg.blur_size, cfg.blur_std)?);
    let wavelet = Arc::new(HaarWavelet::new(rows, cols, cfg.wavelet_levels)?);
    let gradient = DiscreteGradient { rows, cols };
    let data = Arc::new(QuadraticDataGradient::new(blur, z.pixels().clone())?);
    let huber = Arc::new(WeightedHuberGradient::new(wavelet, cfg.lambda2, cfg.delta)?);
    let spec = ProblemSpec::builder(Arc::new(BoxIndicator::new(n, 0.0, cfg.x_max)?))
        .b(Arc::new(L1Norm::new(2 * n, cfg.lambda1)))
        .l(Arc::new(gradient))
        .c(huber.clone())
        .d(data.clone())
        .build()?;
    Ok(DeblurProblem {
        spec,
        data,
        huber,
        gradient,
        lambda1: cfg.lambda1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecipe {
    pub steps: StepSizes,
    /// Factor applied to σ to make the steps valid, when one was needed.
    pub sigma_shrink: Option<f64>,
}

/// `ε = 0.8/(1 + √(1 + 16β²))`, `τ = 2βε`, `σ = 0.99(1 - ε - τ²ζ²)/(τ‖L‖²)`.
///
/// `literal_sigma` swaps `τ²ζ²` for `τ²β²`. If the result fails validation,
/// σ is scaled down just enough to pass and the factor is reported.
pub fn paper_step_recipe(beta: f64, zeta: f64, l_norm: f64, literal_sigma: bool) -> Result<StepRecipe> {
    if !(beta > 0.0) || !(zeta >= 0.0) || !(l_norm > 0.0) {
        return Err(Error::contract(format!(
            "recipe needs beta > 0, zeta >= 0, |L| > 0 (got {beta}, {zeta}, {l_norm})"
        )));
    }
    let epsilon = 0.8 / (1.0 + (1.0 + 16.0 * beta * beta).sqrt());
    let tau = 2.0 * beta * epsilon;
    let quad = if literal_sigma { tau * beta } else { tau * zeta };
    let sigma = 0.99 * (1.0 - epsilon - quad * quad) / (tau * l_norm * l_norm);
    let constants = StepConstants {
        rho: 0.0,
        beta: Some(beta),
        zeta: (zeta > 0.0).then_some(zeta),
        l_norm,
    };
    let mut steps = StepSizes::new(tau, sigma, epsilon);
    if validate_constants(&constants, &steps).is_valid() {
        return Ok(StepRecipe {
            steps,
            sigma_shrink: None,
        });
    }
    let sigma_max = (1.0 - epsilon - tau * tau * zeta * zeta) / (tau * l_norm * l_norm);
    let shrunk = sigma_max * (1.0 - 1e-9);
    if !(shrunk > 0.0) {
        return Err(Error::InvalidSteps(validate_constants(&constants, &steps)));
    }
    steps.sigma = shrunk;
    let verdict = validate_constants(&constants, &steps);
    if !verdict.is_valid() {
        return Err(Error::InvalidSteps(verdict));
    }
    Ok(StepRecipe {
        steps,
        sigma_shrink: Some(shrunk / sigma),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub dx: f64,
    pub du: f64,
    pub rel_pd_err: f64,
    pub objective: f64,
}

pub fn psnr(reference: &ImageGrid, img: &ImageGrid, x_max: f64) -> f64 {
    let mse = crate::linops::dist_sq(reference.pixels().view(), img.pixels().view()) / reference.pixels().len() as f64;
    10.0 * (x_max * x_max / mse).log10()
}

pub struct ExperimentReport {
    pub config: DeblurConfig,
    pub run: RunReport,
    pub rows: Vec<MetricsRow>,
    pub recipe: StepRecipe,
    pub clean: ImageGrid,
    pub observation: ImageGrid,
    pub restored: ImageGrid,
    pub initial_objective: f64,
    pub beta: f64,
    pub zeta: f64,
    pub l_norm: f64,
}

impl ExperimentReport {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn psnr_observation(&self) -> f64 {
        psnr(&self.clean, &self.observation, self.config.x_max)
    }

    pub fn psnr_restored(&self) -> f64 {
        psnr(&self.clean, &self.restored, self.config.x_max)
    }

    /// The reproducible configuration plus derived constants and results.
    pub fn manifest(&self) -> Config {
        let mut m = self.config.to_config();
        let s = self.recipe.steps;
        let mut set = |k: &str, v: String| m.set(&format!("derived.{k}"), v);
        set("version", env!("CARGO_PKG_VERSION").to_owned());
        set("rows", self.clean.rows().to_string());
        set("cols", self.clean.cols().to_string());
        set("beta", self.beta.to_string());
        set("zeta", self.zeta.to_string());
        set("l_norm", self.l_norm.to_string());
        set("tau", s.tau.to_string());
        set("sigma", s.sigma.to_string());
        set("epsilon", s.epsilon.to_string());
        set(
            "sigma_shrink",
            self.recipe.sigma_shrink.map_or_else(|| "none".to_owned(), |f| f.to_string()),
        );
        set("noise_seed", self.config.noise_seed().to_string());
        set("noise_abs_std", (self.config.noise_std * self.config.x_max).to_string());
        set("method", self.run.method.to_owned());
        set("termination", self.run.termination.as_str().to_owned());
        set("iterations", self.run.iterations().to_string());
        set("initial_objective", self.initial_objective.to_string());
        if let Some(r) = self.final_row() {
            set("final_objective", r.objective.to_string());
            set("final_rel_pd_err", r.rel_pd_err.to_string());
        }
        set("psnr_observation", self.psnr_observation().to_string());
        set("psnr_restored", self.psnr_restored().to_string());
        m
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        let _ = writeln!(out, "{DEBLUR_METRICS_HEADER}");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.iter, r.dx, r.du, r.rel_pd_err, r.objective);
        }
        out
    }
}

/// Loads the input (or the phantom), simulates the observation and runs the
/// solver from `x_0 = z` clamped to the box, `u_0 = 0`.
pub fn run_deblur(cfg: &DeblurConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let clean = match &cfg.input {
        Some(path) => read_pgm(path, cfg.x_max)?,
        None => phantom(cfg.rows, cfg.cols, cfg.x_max, cfg.seed)?,
    };
    let observation = make_observation(&clean, cfg)?;
    let problem = build_deblur_problem(&observation, cfg)?;
    let recipe = paper_step_recipe(problem.beta(), problem.zeta(), problem.l_norm(), cfg.literal_sigma)?;
    let x0 = observation.pixels().mapv(|v| v.clamp(0.0, cfg.x_max));
    let u0 = Vector::zeros(problem.spec.dual_dim());
    let stop = StopRule {
        max_iters: cfg.max_iters,
        rel_pd_tol: cfg.rel_pd_tol,
    };
    let run = Solver::new(&problem.spec, recipe.steps)
        .stop(stop)
        .objective(|x| problem.objective(x))
        .run(x0.clone(), u0)?;
    let rows = run
        .records
        .iter()
        .map(|r| MetricsRow {
            iter: r.iter,
            dx: r.dx,
            du: r.du,
            rel_pd_err: r.rel_pd_err,
            objective: r.objective.unwrap_or(f64::NAN),
        })
        .collect();
    // z is the box projection, so the restored image is feasible
    let restored = ImageGrid::new(clean.rows(), clean.cols(), run.final_state.z.clone())?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        initial_objective: problem.objective(x0.view()),
        beta: problem.beta(),
        zeta: problem.zeta(),
        l_norm: problem.l_norm(),
        run,
        rows,
        recipe,
        clean,
        observation,
        restored,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// [`run_deblur`] plus artifacts in `out_dir`: `clean.pgm`,
/// `observation.pgm`, `restored.pgm` (16-bit), `metrics.csv` and
/// `manifest.txt`.
pub fn run_experiment(cfg: &DeblurConfig, out_dir: &Path) -> Result<ExperimentReport> {
    let report = run_deblur(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let x_max = cfg.x_max;
    write_pgm(&out_dir.join("clean.pgm"), &report.clean, x_max, 65535)?;
    write_pgm(&out_dir.join("observation.pgm"), &report.observation, x_max, 65535)?;
    write_pgm(&out_dir.join("restored.pgm"), &report.restored, x_max, 65535)?;
    write_file(&out_dir.join("metrics.csv"), report.metrics_csv().as_bytes())?;
    write_file(&out_dir.join("manifest.txt"), report.manifest().render().as_bytes())?;
    Ok(report)
}
