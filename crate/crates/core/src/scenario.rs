//! Synthetic ground truth for experiments: a Gaussian-bump phenomenon, one
//! explanatory sampler per agent and the shared estimation grid.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimator::{Observation, Point};
use crate::rng::{self, Purpose};
use crate::AgentId;

/// Name of the built-in reproduction of the 25-agent Gaussian-mixture setup.
pub const MIXTURE_PRESET: &str = "three-bumps";

/// Regular lattice of estimation points, indexed lexicographically with the
/// first coordinate varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    step: f64,
    axes: Vec<Vec<f64>>,
    points: Vec<Point>,
}

impl Grid {
    /// Lattice `lower + i*step` along each axis, including `upper` when the
    /// extent is a multiple of `step`. An axis shorter than `step` collapses
    /// to its lower end.
    pub fn new(lower: &[f64], upper: &[f64], step: f64) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::param("grid", "dimension must be >= 1"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("grid_step", format!("must be > 0, got {step}")));
        }
        let mut axes = Vec::with_capacity(lower.len());
        for (&lo, &hi) in lower.iter().zip(upper) {
            if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                return Err(Error::param(
                    "grid",
                    format!("need finite bounds with lower <= upper, got [{lo}, {hi}]"),
                ));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            axes.push((0..n).map(|i| lo + i as f64 * step).collect::<Vec<_>>());
        }

        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        for _ in 0..total {
            points.push(Point::new(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect())?);
            for j in (0..axes.len()).rev() {
                idx[j] += 1;
                if idx[j] < axes[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }

        Ok(Grid {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            step,
            axes,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn point(&self, index: usize) -> &Point {
        &self.points[index]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Index of the lattice point at `coords`, up to a tiny tolerance.
    pub fn locate(&self, coords: &[f64]) -> Option<usize> {
        if coords.len() != self.dim() {
            return None;
        }
        let tol = 1e-9 * self.step;
        let mut index = 0;
        for (axis, &c) in self.axes.iter().zip(coords) {
            let i = axis.iter().position(|&a| (a - c).abs() <= tol)?;
            index = index * axis.len() + i;
        }
        Some(index)
    }

    /// Indices of every lattice point inside the axis-aligned box of
    /// half-width `radius` around `center`, in grid order. A superset of the
    /// points within Euclidean distance `radius`.
    pub fn candidates_within(&self, center: &[f64], radius: f64) -> Vec<usize> {
        let r = radius * (1.0 + 1e-9) + 1e-12;
        let mut ranges = Vec::with_capacity(self.dim());
        for (axis, &c) in self.axes.iter().zip(center) {
            let start = axis.partition_point(|&a| a < c - r);
            let end = axis.partition_point(|&a| a <= c + r);
            if start >= end {
                return Vec::new();
            }
            ranges.push((start, end));
        }

        let mut out = Vec::new();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let flat = idx
                .iter()
                .zip(&self.axes)
                .fold(0, |acc, (&i, a)| acc * a.len() + i);
            out.push(flat);
            let mut j = idx.len();
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < ranges[j].1 {
                    break;
                }
                idx[j] = ranges[j].0;
            }
        }
    }
}

/// `amplitude * exp(-|xi - center|^2 / (2 * scale))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    /// Isotropic covariance factor `s` in `s * I`.
    pub scale: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl GaussianBump {
    pub fn value(&self, xi: &[f64]) -> f64 {
        let r2: f64 = xi
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.amplitude * (-r2 / (2.0 * self.scale)).exp()
    }

    /// Largest gradient magnitude, attained at radius `sqrt(scale)`.
    pub fn max_slope(&self) -> f64 {
        self.amplitude.abs() * (-0.5f64).exp() / self.scale.sqrt()
    }
}

/// Latent map `m: R^p -> R^d`, one bump list per output coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phenomenon {
    pub outputs: Vec<Vec<GaussianBump>>,
    /// Declared Lipschitz constant.
    pub lipschitz: f64,
}

impl Phenomenon {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(Error::param("phenomenon", "needs at least one output"));
        }
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::param("lipschitz", "must be finite and >= 0"));
        }
        for bump in self.outputs.iter().flatten() {
            check_dim(input_dim, bump.center.len())?;
            if !(bump.scale > 0.0 && bump.scale.is_finite()) {
                return Err(Error::param("scale", format!("must be > 0, got {}", bump.scale)));
            }
            if !bump.amplitude.is_finite() || bump.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::param("bump", "non-finite amplitude or center"));
            }
        }
        Ok(())
    }

    pub fn out_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn eval(&self, xi: &Point) -> Vec<f64> {
        self.eval_raw(xi.coords())
    }

    fn eval_raw(&self, xi: &[f64]) -> Vec<f64> {
        self.outputs
            .iter()
            .map(|bumps| bumps.iter().map(|b| b.value(xi)).sum())
            .collect()
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        for bump in self.outputs.iter_mut().flatten() {
            bump.amplitude *= factor;
        }
        self
    }
}

/// Largest Jacobian norm of `ph` over the lattice spanned by `grid` refined
/// `refine` times, using central differences. For several outputs the
/// Frobenius norm is used, which never undershoots the operator norm.
pub fn lipschitz_estimate(ph: &Phenomenon, grid: &Grid, refine: usize) -> Result<f64> {
    if refine == 0 {
        return Err(Error::param("refine", "must be >= 1"));
    }
    let fine = Grid::new(grid.lower(), grid.upper(), grid.step() / refine as f64)?;
    let eps = 1e-6;
    let mut best = 0.0f64;
    let mut probe = vec![0.0; fine.dim()];
    for p in fine.points() {
        let mut sq = 0.0;
        for j in 0..fine.dim() {
            probe.copy_from_slice(p.coords());
            probe[j] += eps;
            let up = ph.eval_raw(&probe);
            probe[j] -= 2.0 * eps;
            let down = ph.eval_raw(&probe);
            sq += up
                .iter()
                .zip(&down)
                .map(|(u, d)| ((u - d) / (2.0 * eps)).powi(2))
                .sum::<f64>();
        }
        best = best.max(sq.sqrt());
    }
    Ok(best)
}

/// Per-agent generator of `xi ~ N(mean, spread^2 I)` and
/// `y = m(xi) + eta`, `eta ~ N(0, noise_std^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSampler {
    pub mean: Point,
    pub spread: f64,
    pub noise_std: f64,
}

impl AgentSampler {
    /// Draws one observation. `xi` and `eta` come from separate streams.
    pub fn sample<R1: Rng, R2: Rng>(
        &self,
        ph: &Phenomenon,
        xi_rng: &mut R1,
        eta_rng: &mut R2,
        agent: AgentId,
        t: u64,
    ) -> Observation {
        let xi: Vec<f64> = self
            .mean
            .coords()
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(xi_rng);
                m + self.spread * z
            })
            .collect();
        let mut y = ph.eval_raw(&xi);
        for v in &mut y {
            let z: f64 = StandardNormal.sample(eta_rng);
            *v += self.noise_std * z;
        }
        Observation {
            xi: Point::new(xi).expect("finite sample"),
            y,
            t,
            agent,
        }
    }
}

/// Everything needed to synthesize observations for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub phenomenon: Phenomenon,
    pub grid: Grid,
    pub samplers: Vec<AgentSampler>,
    pub noise_std: f64,
}

/// Scenario description as it appears in a config file. Either `preset`
/// or `phenomenon` must be given; the remaining fields override preset
/// defaults and are required for a custom phenomenon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phenomenon: Option<Phenomenon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Standard deviation of the output noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    /// Standard deviation of each agent's explanatory cloud; defaults to
    /// half the layout cell size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Self {
        ScenarioConfig {
            preset: Some(name.to_string()),
            ..Default::default()
        }
    }

    /// Resolves the description for a network of `agents` agents. Sampler
    /// placement jitter is drawn from `seed`.
    pub fn build(&self, agents: usize, seed: u64) -> Result<Scenario> {
        let (phenomenon, lower, upper, step, noise_std) = match (&self.preset, &self.phenomenon) {
            (Some(name), None) => {
                let base = preset_defaults(name)?;
                (
                    base.phenomenon,
                    self.lower.clone().unwrap_or(base.lower),
                    self.upper.clone().unwrap_or(base.upper),
                    self.grid_step.unwrap_or(base.step),
                    self.noise_std.unwrap_or(base.noise_std),
                )
            }
            (None, Some(ph)) => {
                let missing = |f: &str| Error::Config(format!("custom scenario needs `{f}`"));
                (
                    ph.clone(),
                    self.lower.clone().ok_or_else(|| missing("lower"))?,
                    self.upper.clone().ok_or_else(|| missing("upper"))?,
                    self.grid_step.ok_or_else(|| missing("grid_step"))?,
                    self.noise_std.ok_or_else(|| missing("noise_std"))?,
                )
            }
            _ => {
                return Err(Error::Config(
                    "scenario needs exactly one of `preset` or `phenomenon`".into(),
                ))
            }
        };

        let grid = Grid::new(&lower, &upper, step)?;
        phenomenon.validate(grid.dim())?;
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::param("noise_std", format!("must be > 0, got {noise_std}")));
        }
        if self.phenomenon.is_some() {
            let est = lipschitz_estimate(&phenomenon, &grid, 4)?;
            if est > phenomenon.lipschitz {
                return Err(Error::Config(format!(
                    "declared lipschitz {} is below the numeric estimate {est:.6}",
                    phenomenon.lipschitz
                )));
            }
        }
        let samplers = cover_layout(&grid, agents, self.spread, noise_std, seed)?;
        Ok(Scenario {
            phenomenon,
            grid,
            samplers,
            noise_std,
        })
    }
}

struct PresetDefaults {
    phenomenon: Phenomenon,
    lower: Vec<f64>,
    upper: Vec<f64>,
    step: f64,
    noise_std: f64,
}

fn preset_defaults(name: &str) -> Result<PresetDefaults> {
    match name {
        MIXTURE_PRESET => Ok(PresetDefaults {
            phenomenon: three_bump_mixture(),
            lower: vec![-2.0, -2.0],
            upper: vec![2.0, 2.0],
            step: 0.25,
            noise_std: 0.05f64.sqrt(),
        }),
        other => Err(Error::Config(format!("unknown scenario preset `{other}`"))),
    }
}

/// Three isotropic bumps at (0,0), (1,2) and (2,-2) with covariance factors
/// 0.5, 0.55 and 0.7. The common amplitude is chosen so the numerically
/// estimated slope stays under the declared `L = 0.3` with a 2% margin,
/// measured on a box one unit wider than the domain so every point a
/// boundary kernel can reach is included.
pub fn three_bump_mixture() -> Phenomenon {
    const DECLARED_L: f64 = 0.3;
    let unit = Phenomenon {
        outputs: vec![vec![
            GaussianBump {
                center: vec![0.0, 0.0],
                scale: 0.5,
                amplitude: 1.0,
            },
            GaussianBump {
                center: vec![1.0, 2.0],
                scale: 0.55,
                amplitude: 1.0,
            },
            GaussianBump {
                center: vec![2.0, -2.0],
                scale: 0.7,
                amplitude: 1.0,
            },
        ]],
        lipschitz: DECLARED_L,
    };
    let wide = Grid::new(&[-3.0, -3.0], &[3.0, 3.0], 0.25).expect("static grid");
    let slope = lipschitz_estimate(&unit, &wide, 8).expect("refine >= 1");
    unit.scaled(0.98 * DECLARED_L / slope)
}

/// Places one sampler per agent at the centre of a cell of a regular
/// partition of the grid box, jittered by up to 10% of the cell size.
fn cover_layout(
    grid: &Grid,
    agents: usize,
    spread: Option<f64>,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<AgentSampler>> {
    if agents == 0 {
        return Err(Error::param("agents", "need at least one agent"));
    }
    let p = grid.dim();
    // Cells per axis: smallest n with n^(axes left) >= agents still to place.
    let mut counts = Vec::with_capacity(p);
    let mut remaining = agents;
    for j in 0..p {
        let left = (p - j) as u32;
        let mut n = 1usize;
        while n.pow(left) < remaining {
            n += 1;
        }
        counts.push(n);
        remaining = remaining.div_ceil(n);
    }
    let width: Vec<f64> = (0..p)
        .map(|j| (grid.upper()[j] - grid.lower()[j]) / counts[j] as f64)
        .collect();
    let widest = width.iter().cloned().fold(0.0, f64::max);
    let spread = spread.unwrap_or(if widest > 0.0 { 0.5 * widest } else { 0.5 });
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::param("spread", format!("must be > 0, got {spread}")));
    }

    let mut samplers = Vec::with_capacity(agents);
    for k in 0..agents {
        let mut jitter = rng::stream(seed, k, Purpose::Layout);
        let mut cell = k;
        let mut mean = vec![0.0; p];
        for j in (0..p).rev() {
            let c = cell % counts[j];
            cell /= counts[j];
            let u: f64 = jitter.random_range(-0.1..=0.1);
            mean[j] = grid.lower()[j] + (c as f64 + 0.5 + u) * width[j];
        }
        samplers.push(AgentSampler {
            mean: Point::new(mean)?,
            spread,
            noise_std,
        });
    }
    Ok(samplers)
}
