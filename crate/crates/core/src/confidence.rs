//! Error radii for kernel estimates under sub-Gaussian noise.
//!
//! For kernel mass `kappa > 0` the estimate is within
//!
//! ```text
//! beta = L*h + 2*sigma*alpha(kappa)/kappa
//! alpha = sqrt(log(2^(d/2) / delta))                       kappa <= 1
//!       = sqrt(kappa * log((1 + kappa)^(d/2) / delta))     kappa >  1
//! ```
//!
//! of the truth with probability at least `1 - delta`, pointwise in `x`.
//! Logs are natural. With no kernel mass there is no bound and `beta` is
//! `f64::INFINITY`.
//!
//! The noise term rests on a self-normalized inequality: for
//! `S = sum v_n eta_n` and `V = sum v_n^2`,
//! `S'S <= 2 sigma^2 log((V+1)^(d/2) / delta) (V+1)` with probability
//! `1 - delta`. [`SelfNormTrace`] tracks `(S, V)` so the inequality can be
//! checked by simulation.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    /// Lipschitz constant `L` of the phenomenon.
    pub lipschitz: f64,
    /// Sub-Gaussian proxy `sigma` of the noise.
    pub sigma: f64,
    /// Failure probability.
    pub delta: f64,
    /// Output dimension `d`.
    pub dim: usize,
}

impl BoundParams {
    pub fn new(lipschitz: f64, sigma: f64, delta: f64, dim: usize) -> Result<Self> {
        let p = BoundParams {
            lipschitz,
            sigma,
            delta,
            dim,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::param(
                "lipschitz",
                format!("must be finite and >= 0, got {}", self.lipschitz),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(
                "sigma",
                format!("must be finite and > 0, got {}", self.sigma),
            ));
        }
        check_delta(self.delta)?;
        if self.dim == 0 {
            return Err(Error::param("dim", "output dimension must be >= 1"));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::param(
            "delta",
            format!("must lie in (0, 1), got {delta}"),
        ))
    }
}

fn alpha_low(delta: f64, dim: usize) -> f64 {
    (0.5 * dim as f64 * std::f64::consts::LN_2 - delta.ln()).sqrt()
}

fn alpha_high(kappa: f64, delta: f64, dim: usize) -> f64 {
    (kappa * (0.5 * dim as f64 * kappa.ln_1p() - delta.ln())).sqrt()
}

/// Confidence multiplier `alpha(kappa, delta, d)`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
pub fn alpha(kappa: f64, delta: f64, dim: usize) -> Result<f64> {
    check_delta(delta)?;
    if !(kappa >= 0.0) {
        return Err(Error::param("kappa", format!("must be >= 0, got {kappa}")));
    }
    if dim == 0 {
        return Err(Error::param("dim", "output dimension must be >= 1"));
    }
    Ok(if kappa <= 1.0 {
        alpha_low(delta, dim)
    } else {
        alpha_high(kappa, delta, dim)
    })
}

/// Error radius `beta` for kernel mass `kappa`; infinite when `kappa <= 0`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn beta(params: &BoundParams, bandwidth: f64, kappa: f64) -> f64 {
    if !(kappa > 0.0) {
        return f64::INFINITY;
    }
    let a = if kappa <= 1.0 {
        alpha_low(params.delta, params.dim)
    } else {
        alpha_high(kappa, params.delta, params.dim)
    };
    params.lipschitz * bandwidth + 2.0 * params.sigma * a / kappa
}

/// Right-hand side of the self-normalized inequality for a given `V`.
pub fn selfnorm_threshold(v: f64, params: &BoundParams) -> f64 {
    let v1 = v + 1.0;
    2.0 * params.sigma * params.sigma * (0.5 * params.dim as f64 * v1.ln() - params.delta.ln()) * v1
}

/// Running `S = sum v_n eta_n` and `V = sum v_n^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfNormTrace {
    s: Vec<f64>,
    v: f64,
    steps: u64,
}

impl SelfNormTrace {
    pub fn new(dim: usize) -> Self {
        SelfNormTrace {
            s: vec![0.0; dim],
            v: 0.0,
            steps: 0,
        }
    }

    pub fn push(&mut self, weight: f64, noise: &[f64]) -> Result<()> {
        check_dim(self.s.len(), noise.len())?;
        for (s, e) in self.s.iter_mut().zip(noise) {
            *s += weight * e;
        }
        self.v += weight * weight;
        self.steps += 1;
        Ok(())
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `S'S`.
    pub fn energy(&self) -> f64 {
        self.s.iter().map(|s| s * s).sum()
    }

    /// True iff `S'S` strictly exceeds the threshold; equality is not a violation.
    pub fn violated(&self, params: &BoundParams) -> bool {
        self.energy() > selfnorm_threshold(self.v, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn alpha_examples() {
        assert!(close(alpha(0.5, 2.0 / E, 2).unwrap(), 1.0, 1e-12));
        assert!(close(alpha(3.0, 4.0 / (E * E), 2).unwrap(), 6f64.sqrt(), 1e-12));
        // mpmath, 30 digits: sqrt(log(2000)) = 2.75697342380046934711...
        assert!(close(alpha(1.0, 0.001, 2).unwrap(), 2.756_973_423_800_469, 1e-12));
    }

    #[test]
    fn alpha_zero_kappa_uses_first_branch() {
        assert_eq!(alpha(0.0, 0.1, 1).unwrap(), alpha(0.7, 0.1, 1).unwrap());
    }

    #[test]
    fn alpha_rejects_bad_inputs() {
        for d in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(alpha(1.0, d, 1).is_err(), "delta={d}");
        }
        assert!(alpha(-1.0, 0.1, 1).is_err());
        assert!(alpha(1.0, 0.1, 0).is_err());
    }

    #[test]
    fn alpha_branches_meet_at_one() {
        for i in 0..100 {
            let delta = 1e-6 + (0.999 - 1e-6) * i as f64 / 99.0;
            let dim = 1 + i % 10;
            let gap = (alpha_low(delta, dim) - alpha_high(1.0, delta, dim)).abs();
            assert!(gap <= 1e-12, "delta={delta} d={dim} gap={gap}");
        }
    }

    #[test]
    fn alpha_monotone_in_dim_and_delta() {
        for kappa in [0.0, 0.5, 1.0, 2.0, 50.0, 1e5] {
            for dim in 1..6 {
                let a = alpha(kappa, 0.05, dim).unwrap();
                assert!(alpha(kappa, 0.05, dim + 1).unwrap() >= a);
                assert!(alpha(kappa, 0.01, dim).unwrap() >= a);
                assert!(alpha(kappa, 0.2, dim).unwrap() <= a);
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(BoundParams::new(0.3, 0.2, 0.001, 1).is_ok());
        assert!(BoundParams::new(-0.1, 0.2, 0.001, 1).is_err());
        assert!(BoundParams::new(0.3, 0.0, 0.001, 1).is_err());
        assert!(BoundParams::new(0.3, 0.2, 1.0, 1).is_err());
        assert!(BoundParams::new(0.3, 0.2, 0.5, 0).is_err());
        assert!(BoundParams::new(f64::INFINITY, 0.2, 0.5, 1).is_err());
    }

    #[test]
    fn beta_examples() {
        let p = BoundParams::new(0.3, 1e-12, 0.001, 1).unwrap();
        assert!(close(beta(&p, 0.15, 100.0), 0.045, 1e-9));
        assert_eq!(beta(&p, 0.15, 0.0), f64::INFINITY);

        let p = BoundParams::new(0.0, 1.0, 2f64.sqrt() / E, 1).unwrap();
        assert!(close(beta(&p, 0.15, 1.0), 2.0, 1e-12));
    }

    #[test]
    fn beta_bounded_below_and_decays() {
        let p = BoundParams::new(0.3, 0.2236, 0.001, 2).unwrap();
        let h = 0.15;
        let lh = p.lipschitz * h;
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let kappa = 1e-3 * 1.05f64.powi(i);
            let b = beta(&p, h, kappa);
            assert!(b >= lh);
            if kappa >= 1.0 {
                assert!(b <= prev, "kappa={kappa}");
            }
            prev = b;
        }
        let far = beta(&p, h, 1e6) - lh;
        let near = beta(&p, h, 10.0) - lh;
        assert!(far <= 0.01 * near, "far={far} near={near}");
    }

    #[test]
    fn threshold_examples() {
        let p = BoundParams::new(0.0, 1.0, 1.0 / E, 2).unwrap();
        assert!(close(selfnorm_threshold(0.0, &p), 2.0, 1e-12));
        let p = BoundParams::new(0.0, 1.0, 2.0 / E, 2).unwrap();
        assert!(close(selfnorm_threshold(1.0, &p), 4.0, 1e-12));
        // mpmath: 32*log(20) = 95.86343275372771...
        let p = BoundParams::new(0.0, 2.0, 0.1, 1).unwrap();
        assert!(close(selfnorm_threshold(3.0, &p), 95.863_432_753_727_71, 1e-10));
    }

    #[test]
    fn threshold_monotonicity() {
        let base = BoundParams::new(0.0, 1.0, 0.1, 2).unwrap();
        let t = |v: f64, p: BoundParams| selfnorm_threshold(v, &p);
        for v in [0.0, 0.5, 3.0, 40.0] {
            assert!(t(v + 0.1, base) > t(v, base));
            assert!(t(v, BoundParams { sigma: 1.1, ..base }) > t(v, base));
            // d enters through log(V+1), so it only matters once V > 0.
            assert!(t(v + 0.1, BoundParams { dim: 3, ..base }) > t(v + 0.1, base));
            assert!(t(v, BoundParams { delta: 0.05, ..base }) > t(v, base));
        }
    }

    #[test]
    fn zero_sum_never_violates() {
        let p = BoundParams::new(0.0, 1.0, 0.999, 3).unwrap();
        let mut tr = SelfNormTrace::new(3);
        for _ in 0..10 {
            tr.push(0.7, &[0.0, 0.0, 0.0]).unwrap();
        }
        assert!(!tr.violated(&p));
    }

    #[test]
    fn threshold_equality_is_not_a_violation() {
        // Find parameters whose threshold is an exact floating-point square.
        let (p, s) = (1..1000)
            .find_map(|i| {
                let p = BoundParams::new(0.0, 1.0, i as f64 / 1000.0, 1).unwrap();
                let s = selfnorm_threshold(0.0, &p).sqrt();
                (s * s == selfnorm_threshold(0.0, &p)).then_some((p, s))
            })
            .expect("some exact square");
        let mut tr = SelfNormTrace { s: vec![s], v: 0.0, steps: 1 };
        assert_eq!(tr.energy(), selfnorm_threshold(0.0, &p));
        assert!(!tr.violated(&p));
        tr.s[0] = s.next_up();
        assert!(tr.violated(&p));
    }

    #[test]
    fn trace_accumulates() {
        let mut tr = SelfNormTrace::new(2);
        tr.push(0.5, &[1.0, -2.0]).unwrap();
        tr.push(2.0, &[0.5, 0.5]).unwrap();
        assert_eq!(tr.s(), &[1.5, 0.0]);
        assert_eq!(tr.v(), 4.25);
        assert_eq!(tr.steps(), 2);
        assert!(tr.push(1.0, &[1.0]).is_err());
    }
}
