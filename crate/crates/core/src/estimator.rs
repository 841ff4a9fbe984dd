//! Compactly supported kernels, per-agent kernel statistics and the local
//! kernel-weighted average.
//!
//! An agent never retains raw observations. It folds each observation into
//! running sums on the shared estimation grid:
//!
//! ```text
//! kappa(x) = sum_n K_h(x, xi_n)
//! psi(x)   = sum_n K_h(x, xi_n) * y_n
//! estimate = psi(x) / kappa(x)        (only when kappa(x) > 0)
//! ```
//!
//! [`centralized_estimate`] evaluates the same average directly over a pool
//! of raw observations and serves as the reference the aggregated network
//! estimate is checked against.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scenario::Grid;
use crate::AgentId;

/// A location in the explanatory space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::param("point", format!("non-finite coordinate {c}")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Point) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(euclidean(&self.0, &other.0))
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// One noisy sample `y = m(xi) + eta` taken by `agent` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub xi: Point,
    pub y: Vec<f64>,
    pub t: u64,
    pub agent: AgentId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `K(v) = 1` on `|v| <= 1`.
    #[default]
    Boxcar,
    /// `K(v) = 1 - |v|` on `|v| <= 1`.
    Triangular,
    /// `K(v) = 1 - v^2` on `|v| <= 1`, i.e. the Epanechnikov shape scaled to peak 1.
    Epanechnikov,
}

impl KernelKind {
    /// Kernel profile `K(v)`. Always in `[0, 1]` and zero for `|v| > 1`.
    pub fn profile(self, v: f64) -> f64 {
        let v = v.abs();
        if v > 1.0 || v.is_nan() {
            return 0.0;
        }
        match self {
            KernelKind::Boxcar => 1.0,
            KernelKind::Triangular => 1.0 - v,
            KernelKind::Epanechnikov => (1.0 - v * v).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub kind: KernelKind,
    /// Bandwidth `h`, the support radius.
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        let spec = KernelSpec { kind, bandwidth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::param(
                "bandwidth",
                format!("must be positive and finite, got {}", self.bandwidth),
            ));
        }
        Ok(())
    }

    /// `K_h(x, xi) = K(|x - xi|_2 / h)`.
    pub fn weight(&self, x: &Point, xi: &Point) -> Result<f64> {
        check_dim(x.dim(), xi.dim())?;
        Ok(self.weight_raw(x.coords(), xi.coords()))
    }

    pub(crate) fn weight_raw(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.kind.profile(euclidean(x, xi) / self.bandwidth)
    }
}

/// Running kernel sums of one agent on every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalStats {
    out_dim: usize,
    /// Row-major `points x out_dim`.
    psi: Vec<f64>,
    kappa: Vec<f64>,
    count: u64,
}

impl LocalStats {
    pub fn new(points: usize, out_dim: usize) -> Self {
        LocalStats {
            out_dim,
            psi: vec![0.0; points * out_dim],
            kappa: vec![0.0; points],
            count: 0,
        }
    }

    pub fn points(&self) -> usize {
        self.kappa.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Number of observations folded in so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn kappa(&self, x: usize) -> f64 {
        self.kappa[x]
    }

    pub fn psi(&self, x: usize) -> &[f64] {
        &self.psi[x * self.out_dim..(x + 1) * self.out_dim]
    }

    /// Folds one observation into every grid point within the kernel
    /// support. Returns the indices whose sums changed, in grid order.
    pub fn update(
        &mut self,
        grid: &Grid,
        kernel: &KernelSpec,
        obs: &Observation,
    ) -> Result<Vec<usize>> {
        check_dim(grid.dim(), obs.xi.dim())?;
        check_dim(self.out_dim, obs.y.len())?;
        check_dim(grid.len(), self.points())?;

        let mut touched = Vec::new();
        for x in grid.candidates_within(obs.xi.coords(), kernel.bandwidth) {
            let w = kernel.weight_raw(grid.point(x).coords(), obs.xi.coords());
            if w > 0.0 {
                self.kappa[x] += w;
                let row = &mut self.psi[x * self.out_dim..(x + 1) * self.out_dim];
                for (acc, y) in row.iter_mut().zip(&obs.y) {
                    *acc += w * y;
                }
                touched.push(x);
            }
        }
        self.count += 1;
        Ok(touched)
    }

    /// `psi(x) / kappa(x)`, or `None` while no observation has reached `x`.
    pub fn estimate(&self, x: usize) -> Option<Vec<f64>> {
        ratio(self.psi(x), self.kappa(x))
    }
}

pub(crate) fn ratio(psi: &[f64], kappa: f64) -> Option<Vec<f64>> {
    (kappa > 0.0).then(|| psi.iter().map(|p| p / kappa).collect())
}

/// Kernel estimate over a single pool of raw observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledEstimate {
    pub estimate: Option<Vec<f64>>,
    pub kappa: f64,
}

/// Kernel average at `x` over the union of `observations`, as if a single
/// agent had collected all of them.
pub fn centralized_estimate<'a, I>(
    observations: I,
    x: &Point,
    kernel: &KernelSpec,
) -> Result<PooledEstimate>
where
    I: IntoIterator<Item = &'a Observation>,
{
    let mut psi: Vec<f64> = Vec::new();
    let mut kappa = 0.0;
    let mut out_dim = None;
    for obs in observations {
        check_dim(x.dim(), obs.xi.dim())?;
        match out_dim {
            None => {
                out_dim = Some(obs.y.len());
                psi = vec![0.0; obs.y.len()];
            }
            Some(d) => check_dim(d, obs.y.len())?,
        }
        let w = kernel.weight_raw(x.coords(), obs.xi.coords());
        if w > 0.0 {
            kappa += w;
            for (acc, y) in psi.iter_mut().zip(&obs.y) {
                *acc += w * y;
            }
        }
    }
    Ok(PooledEstimate {
        estimate: ratio(&psi, kappa),
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn obs(xi: &[f64], y: &[f64], t: u64) -> Observation {
        Observation {
            xi: pt(xi),
            y: y.to_vec(),
            t,
            agent: 0,
        }
    }

    const KINDS: [KernelKind; 3] = [
        KernelKind::Boxcar,
        KernelKind::Triangular,
        KernelKind::Epanechnikov,
    ];

    #[test]
    fn boxcar_inside_support_is_one() {
        let k = KernelSpec::new(KernelKind::Boxcar, 0.15).unwrap();
        assert_eq!(k.weight(&pt(&[0.0, 0.0]), &pt(&[0.10, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn every_kind_vanishes_outside_support() {
        for kind in KINDS {
            let k = KernelSpec::new(kind, 0.15).unwrap();
            assert_eq!(k.weight(&pt(&[0.0, 0.0]), &pt(&[0.0, 0.20])).unwrap(), 0.0);
        }
    }

    #[test]
    fn triangular_halfway() {
        let k = KernelSpec::new(KernelKind::Triangular, 1.0).unwrap();
        assert_eq!(k.weight(&pt(&[0.0]), &pt(&[0.5])).unwrap(), 0.5);
    }

    #[test]
    fn epanechnikov_shape() {
        let k = KernelSpec::new(KernelKind::Epanechnikov, 2.0).unwrap();
        assert_eq!(k.weight(&pt(&[0.0]), &pt(&[1.0])).unwrap(), 0.75);
    }

    #[test]
    fn weight_rejects_dimension_mismatch() {
        let k = KernelSpec::new(KernelKind::Boxcar, 1.0).unwrap();
        let err = k.weight(&pt(&[0.0, 0.0]), &pt(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 1 }));
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(KernelSpec::new(KernelKind::Boxcar, 0.0).is_err());
        assert!(KernelSpec::new(KernelKind::Boxcar, -1.0).is_err());
        assert!(KernelSpec::new(KernelKind::Boxcar, f64::NAN).is_err());
    }

    #[test]
    fn point_rejects_non_finite() {
        assert!(Point::new(vec![0.0, f64::INFINITY]).is_err());
    }

    fn line_grid() -> Grid {
        Grid::new(&[0.0], &[1.0], 0.25).unwrap()
    }

    #[test]
    fn update_single_sample_on_grid_point() {
        let grid = line_grid();
        let k = KernelSpec::new(KernelKind::Boxcar, 0.1).unwrap();
        let mut stats = LocalStats::new(grid.len(), 1);
        let touched = stats.update(&grid, &k, &obs(&[0.5], &[2.0], 1)).unwrap();
        assert_eq!(touched, vec![2]);
        assert_eq!(stats.psi(2), &[2.0]);
        assert_eq!(stats.kappa(2), 1.0);
        assert_eq!(stats.count(), 1);
    }

    #[test]
    fn update_far_sample_changes_nothing() {
        let grid = line_grid();
        let k = KernelSpec::new(KernelKind::Boxcar, 0.1).unwrap();
        let mut stats = LocalStats::new(grid.len(), 1);
        let before = stats.clone();
        let touched = stats.update(&grid, &k, &obs(&[0.375], &[2.0], 1)).unwrap();
        assert!(touched.is_empty());
        assert_eq!(stats.kappa, before.kappa);
        assert_eq!(stats.psi, before.psi);
    }

    #[test]
    fn update_rejects_wrong_dimensions() {
        let grid = line_grid();
        let k = KernelSpec::new(KernelKind::Boxcar, 0.1).unwrap();
        let mut stats = LocalStats::new(grid.len(), 1);
        assert!(stats.update(&grid, &k, &obs(&[0.5, 0.0], &[1.0], 1)).is_err());
        assert!(stats.update(&grid, &k, &obs(&[0.5], &[1.0, 2.0], 1)).is_err());
    }

    #[test]
    fn estimate_cases() {
        let grid = line_grid();
        let k = KernelSpec::new(KernelKind::Boxcar, 0.1).unwrap();
        let mut stats = LocalStats::new(grid.len(), 1);
        assert_eq!(stats.estimate(0), None);

        stats.update(&grid, &k, &obs(&[0.0], &[2.5], 1)).unwrap();
        assert_eq!(stats.estimate(0), Some(vec![2.5]));

        stats.update(&grid, &k, &obs(&[1.0], &[1.0], 2)).unwrap();
        stats.update(&grid, &k, &obs(&[1.0], &[3.0], 3)).unwrap();
        assert_eq!(stats.estimate(4), Some(vec![2.0]));
    }

    /// 200 random samples on a 2-d grid, checked against a brute-force
    /// recomputation over every grid point and every logged observation.
    #[test]
    fn incremental_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.25).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for kind in KINDS {
            let k = KernelSpec::new(kind, 0.3).unwrap();
            let mut stats = LocalStats::new(grid.len(), 2);
            let mut log = Vec::new();
            for t in 1..=200 {
                let o = obs(
                    &[rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)],
                    &[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    t,
                );
                stats.update(&grid, &k, &o).unwrap();
                log.push(o);
            }
            for (x, p) in grid.points().iter().enumerate() {
                let mut kappa = 0.0;
                let mut psi = [0.0; 2];
                for o in &log {
                    let d = (0..2)
                        .map(|j| (p[j] - o.xi[j]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let v = d / 0.3;
                    let w = match kind {
                        KernelKind::Boxcar => (v <= 1.0) as u8 as f64,
                        KernelKind::Triangular => (1.0 - v).max(0.0),
                        KernelKind::Epanechnikov => (1.0 - v * v).max(0.0),
                    };
                    kappa += w;
                    psi[0] += w * o.y[0];
                    psi[1] += w * o.y[1];
                }
                assert!(rel_close(stats.kappa(x), kappa, 1e-12), "{kind:?} x={x}");
                assert!(rel_close(stats.psi(x)[0], psi[0], 1e-12));
                assert!(rel_close(stats.psi(x)[1], psi[1], 1e-12));
                assert!(stats.kappa(x) <= stats.count() as f64);
            }
        }
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn pooled_single_agent_matches_local() {
        let grid = line_grid();
        let k = KernelSpec::new(KernelKind::Triangular, 0.4).unwrap();
        let mut stats = LocalStats::new(grid.len(), 1);
        let log: Vec<_> = (1..=20)
            .map(|t| obs(&[t as f64 / 20.0], &[(t as f64).sin()], t))
            .collect();
        for o in &log {
            stats.update(&grid, &k, o).unwrap();
        }
        for (x, p) in grid.points().iter().enumerate() {
            let pooled = centralized_estimate(&log, p, &k).unwrap();
            assert_eq!(pooled.kappa, stats.kappa(x));
            assert_eq!(pooled.estimate, stats.estimate(x));
        }
    }

    #[test]
    fn pooled_ignores_out_of_range_agent() {
        let k = KernelSpec::new(KernelKind::Boxcar, 0.2).unwrap();
        let near = [obs(&[0.1], &[1.0], 1), obs(&[-0.1], &[2.0], 2)];
        let far: Vec<_> = (0..5)
            .map(|i| Observation {
                agent: 1,
                ..obs(&[3.0 + i as f64], &[100.0], i + 1)
            })
            .collect();
        let x = pt(&[0.0]);
        let alone = centralized_estimate(&near, &x, &k).unwrap();
        let both = centralized_estimate(near.iter().chain(&far), &x, &k).unwrap();
        assert_eq!(alone, both);
        assert_eq!(both.estimate, Some(vec![1.5]));
    }

    #[test]
    fn pooled_empty_has_no_estimate() {
        let k = KernelSpec::new(KernelKind::Boxcar, 0.2).unwrap();
        let none: [Observation; 0] = [];
        let p = centralized_estimate(&none, &pt(&[0.0]), &k).unwrap();
        assert_eq!(p.estimate, None);
        assert_eq!(p.kappa, 0.0);
    }

    proptest! {
        #[test]
        fn kernel_range_and_support(v in -5.0f64..5.0) {
            for kind in KINDS {
                let k = kind.profile(v);
                prop_assert!((0.0..=1.0).contains(&k));
                if v.abs() > 1.0 {
                    prop_assert_eq!(k, 0.0);
                }
            }
            prop_assert_eq!(KernelKind::Boxcar.profile(v) == 0.0, v.abs() > 1.0);
        }

        #[test]
        fn estimate_within_observed_range(
            ys in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30),
            offsets in prop::collection::vec(-0.5f64..0.5, 30),
        ) {
            let grid = Grid::new(&[0.0], &[0.0], 1.0).unwrap();
            let k = KernelSpec::new(KernelKind::Triangular, 0.6).unwrap();
            let mut stats = LocalStats::new(1, 2);
            let mut used = Vec::new();
            for (i, (a, b)) in ys.iter().enumerate() {
                let o = obs(&[offsets[i]], &[*a, *b], i as u64 + 1);
                if !stats.update(&grid, &k, &o).unwrap().is_empty() {
                    used.push((*a, *b));
                }
            }
            if let Some(est) = stats.estimate(0) {
                let lo0 = used.iter().map(|u| u.0).fold(f64::INFINITY, f64::min);
                let hi0 = used.iter().map(|u| u.0).fold(f64::NEG_INFINITY, f64::max);
                let lo1 = used.iter().map(|u| u.1).fold(f64::INFINITY, f64::min);
                let hi1 = used.iter().map(|u| u.1).fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-12;
                prop_assert!(est[0] >= lo0 - slack && est[0] <= hi0 + slack);
                prop_assert!(est[1] >= lo1 - slack && est[1] <= hi1 + slack);
            } else {
                prop_assert!(used.is_empty());
            }
        }

        #[test]
        fn fold_order_does_not_matter(
            samples in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 0.5).unwrap();
            let k = KernelSpec::new(KernelKind::Epanechnikov, 0.7).unwrap();
            let log: Vec<_> = samples
                .iter()
                .enumerate()
                .map(|(i, (a, b, y))| obs(&[*a, *b], &[*y], i as u64 + 1))
                .collect();
            let mut shuffled = log.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut s1 = LocalStats::new(grid.len(), 1);
            let mut s2 = LocalStats::new(grid.len(), 1);
            for o in &log { s1.update(&grid, &k, o).unwrap(); }
            for o in &shuffled { s2.update(&grid, &k, o).unwrap(); }
            for x in 0..grid.len() {
                prop_assert!(rel_close(s1.kappa(x), s2.kappa(x), 1e-12));
                // psi can cancel to ~0; compare against the absolute mass.
                let scale: f64 = log.iter().map(|o| o.y[0].abs()).sum::<f64>().max(1.0);
                prop_assert!((s1.psi(x)[0] - s2.psi(x)[0]).abs() <= 1e-12 * scale);
            }
        }

        /// Noise-free data within the support of `x` keeps the estimate within
        /// `L * h` of the truth for an `L`-Lipschitz phenomenon.
        #[test]
        fn noise_free_error_at_most_lipschitz_times_bandwidth(
            offsets in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40),
            slope in -2.0f64..2.0,
        ) {
            let h = 0.3;
            let lip = slope.abs() * 2f64.sqrt();
            let truth = |p: &[f64]| slope * (p[0].sin() + p[1].cos());
            let x = pt(&[0.2, -0.4]);
            let k = KernelSpec::new(KernelKind::Boxcar, h).unwrap();
            let log: Vec<_> = offsets
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let c = [0.2 + a * h / 2f64.sqrt(), -0.4 + b * h / 2f64.sqrt()];
                    obs(&c, &[truth(&c)], i as u64 + 1)
                })
                .collect();
            let est = centralized_estimate(&log, &x, &k).unwrap().estimate.unwrap();
            prop_assert!((est[0] - truth(x.coords())).abs() <= lip * h + 1e-12);
        }
    }
}
