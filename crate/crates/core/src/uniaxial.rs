//! Bingham moment closure on the unit sphere, uniaxial case.
//!
//! The parameter tensor is reduced to `diag(0, 0, -2 lambda)` with the
//! density `exp(-2 lambda cos^2 theta) / z`: `lambda > 0` depletes the
//! poles (oblate), `lambda < 0` concentrates there (prolate). The scalar
//! moments are ratios of confluent hypergeometric functions:
//! `z = 4 pi 1F1(1/2;3/2;-2 lambda)`, `mu = (8 pi / 3z) 1F1(3/2;5/2;-2 lambda)`,
//! `eta = (16 pi / 5z) 1F1(5/2;7/2;-2 lambda)`, with `mu = 2 m33 in (0, 2)`
//! strictly decreasing in `lambda` and `mu' = mu^2 - eta < 0`.

use crate::dd::{DoubleDouble, Real};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_dd, project_pieces_1d, TablePiece, DOMAIN_CLAMP_TOL};
use crate::specfun::hyp1f1_scaled_any;
use crate::tensor::{eig_sym3, rotate4_3, FourthMoment3, Rotation3, SecondMoment3};
use crate::BuildInfo;

type Dd = DoubleDouble;

/// Parameter cap: `mu(+-1e5)` is within ~1e-5 of its limits {0, 2}.
pub const LAMBDA_CAP: f64 = 1e5;

/// Inversion targets are clamped this far inside (0, 2).
pub const MU_TARGET_EPS: f64 = 1e-12;

/// Breakpoints of the piecewise partition of `mu in [0, 2]`; 2/3 is the
/// isotropic point `m11 = m22 = m33`, separating oblate from prolate.
pub fn piecewise_breakpoints() -> [f64; 12] {
    [
        0.0,
        0.045,
        0.103,
        0.2,
        0.36,
        2.0 / 3.0,
        1.26,
        1.56,
        1.73,
        1.84,
        1.925,
        2.0,
    ]
}

pub const PIECEWISE_NL: usize = 18;
pub const GLOBAL_NL: usize = 160;
pub const GLOBAL_QUAD_N: usize = 200;
pub const PIECEWISE_QUAD_N: usize = 64;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Eigenvalue-coincidence tolerance below which the fast uniaxial path is
/// legal.
pub const MULTIPLICITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
pub struct UniaxialState {
    pub lambda: f64,
    /// `2 <cos^2 theta>` = `2 m33` in the diagonal frame; in (0, 2).
    pub mu: f64,
    /// `4 <cos^4 theta>`; in (0, 4).
    pub eta: f64,
}

/// `(mu, eta)` as hypergeometric ratios; the shared exponential scale of
/// the three scaled 1F1 values cancels.
fn forward_gen<S: Real>(lambda: S) -> (S, S) {
    let w = -(lambda + lambda);
    let f1 = hyp1f1_scaled_any(0.5, 1.5, w);
    let f2 = hyp1f1_scaled_any(1.5, 2.5, w);
    let f3 = hyp1f1_scaled_any(2.5, 3.5, w);
    let mu = S::from_f64(2.0 / 3.0) * f2 / f1;
    let eta = S::from_f64(0.8) * f3 / f1;
    (mu, eta)
}

/// Moments of the uniaxial density. Beyond the parameter cap the exact
/// degenerate limits are returned: `(0, 0)` for the equatorial ring,
/// `(2, 4)` for the polar pair.
pub fn forward_moments_uni(lambda: f64) -> Result<UniaxialState> {
    if !lambda.is_finite() {
        return Err(Error::Domain(format!("uniaxial lambda={lambda} not finite")));
    }
    if lambda > LAMBDA_CAP {
        return Ok(UniaxialState {
            lambda,
            mu: 0.0,
            eta: 0.0,
        });
    }
    if lambda < -LAMBDA_CAP {
        return Ok(UniaxialState {
            lambda,
            mu: 2.0,
            eta: 4.0,
        });
    }
    let (mu, eta) = forward_gen::<f64>(lambda);
    Ok(UniaxialState { lambda, mu, eta })
}

/// Newton initialization table sorted by ascending `mu` (descending
/// `lambda`): a sign-split geometric grid over `[-1e5, 1e5]`.
fn mu_init_table() -> &'static Vec<(f64, f64)> {
    use std::sync::LazyLock;
    static TABLE: LazyLock<Vec<(f64, f64)>> = LazyLock::new(|| {
        let n = 1024usize;
        let (lo, hi) = (1e-4f64, LAMBDA_CAP);
        let ratio = hi / lo;
        let mut t = Vec::with_capacity(2 * n + 1);
        for i in (0..n).rev() {
            let lam = lo * ratio.powf(i as f64 / (n - 1) as f64);
            let (mu, _) = forward_gen::<f64>(lam);
            t.push((lam, mu));
        }
        t.push((0.0, 2.0 / 3.0));
        for i in 0..n {
            let lam = -(lo * ratio.powf(i as f64 / (n - 1) as f64));
            let (mu, _) = forward_gen::<f64>(lam);
            t.push((lam, mu));
        }
        t
    });
    &TABLE
}

#[derive(Clone, Copy, Debug)]
pub struct Inversion {
    pub lambda: f64,
    pub iterations: usize,
}

/// Solves `mu(lambda) = mu_target` by Newton iteration with
/// `mu' = mu^2 - eta`, initialized from the nearest table image.
pub fn invert_mu_uni(mu_target: f64) -> Result<Inversion> {
    if !mu_target.is_finite() || !(MU_TARGET_EPS..=2.0 - MU_TARGET_EPS).contains(&mu_target) {
        return Err(Error::Domain(format!(
            "uniaxial mu target {mu_target} outside [1e-12, 2 - 1e-12]"
        )));
    }
    let table = mu_init_table();
    let pos = table
        .partition_point(|&(_, mu)| mu <= mu_target)
        .min(table.len() - 1);
    let mut lambda = if pos > 0
        && (table[pos - 1].1 - mu_target).abs() <= (table[pos].1 - mu_target).abs()
    {
        table[pos - 1].0
    } else {
        table[pos].0
    };
    // The absolute tolerance sits near the ulp scale of mu in (1, 2), so
    // the iteration may land on a limit cycle one ulp either side of the
    // target; accept the best iterate once progress stops within a few
    // ulp (the builder's double-double polish recovers the rest).
    let noise_floor = 8.0 * f64::EPSILON * mu_target.abs().max(1.0);
    let mut best = (f64::INFINITY, lambda);
    let mut prev = f64::NAN;
    let mut stalled = 0usize;
    for iterations in 0..NEWTON_MAX_ITERS {
        let (mu, eta) = forward_gen::<f64>(lambda);
        let resid = (mu - mu_target).abs();
        if resid < best.0 {
            best = (resid, lambda);
            stalled = 0;
        } else {
            stalled += 1;
        }
        if resid <= NEWTON_TOL {
            return Ok(Inversion { lambda, iterations });
        }
        let next = (lambda + (mu_target - mu) / (mu * mu - eta)).clamp(-LAMBDA_CAP, LAMBDA_CAP);
        if (next == lambda || next == prev || stalled >= 5) && best.0 <= noise_floor {
            return Ok(Inversion {
                lambda: best.1,
                iterations,
            });
        }
        if next == lambda || next == prev {
            break;
        }
        prev = lambda;
        lambda = next;
    }
    Err(Error::NonConvergence {
        context: "uniaxial Newton inversion",
        iterations: NEWTON_MAX_ITERS,
    })
}

fn invert_mu_uni_dd(mu_target: Dd) -> Result<(Dd, usize)> {
    let base = invert_mu_uni(mu_target.to_f64())?;
    let mut lambda = Dd::from_f64(base.lambda);
    for _ in 0..2 {
        let (mu, eta) = forward_gen::<Dd>(lambda);
        lambda = lambda + (mu_target - mu) / (mu * mu - eta);
    }
    Ok((lambda, base.iterations))
}

pub use crate::circle::TableVariant;

#[derive(Clone, Debug)]
pub struct UniaxialBuildConfig {
    pub variant: TableVariant,
    pub n_l: Option<usize>,
    pub quad_n: Option<usize>,
    pub breakpoints: Option<Vec<f64>>,
}

impl UniaxialBuildConfig {
    pub fn global() -> Self {
        Self {
            variant: TableVariant::Global,
            n_l: None,
            quad_n: None,
            breakpoints: None,
        }
    }

    pub fn piecewise() -> Self {
        Self {
            variant: TableVariant::Piecewise,
            ..Self::global()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniaxialClosureTable {
    pub variant: TableVariant,
    pub pieces: Vec<TablePiece>,
    pub build: BuildInfo,
}

const FIT_MARGIN: usize = 10;

/// Build the `eta(mu)` table on `mu in [0, 2]` (global single piece with
/// `x = mu - 1`, or the 11-interval piecewise partition).
pub fn build_table_uni(cfg: &UniaxialBuildConfig) -> Result<UniaxialClosureTable> {
    let plan: Vec<(f64, f64, usize)> = match cfg.variant {
        TableVariant::Global => vec![(0.0, 2.0, cfg.n_l.unwrap_or(GLOBAL_NL))],
        TableVariant::Piecewise => {
            let bps: Vec<f64> = cfg
                .breakpoints
                .clone()
                .unwrap_or_else(|| piecewise_breakpoints().to_vec());
            if bps.len() < 2 || bps[0] != 0.0 || *bps.last().unwrap() != 2.0 {
                return Err(Error::Domain(
                    "uniaxial breakpoints must run from 0 to 2".into(),
                ));
            }
            bps.windows(2)
                .map(|w| (w[0], w[1], cfg.n_l.unwrap_or(PIECEWISE_NL)))
                .collect()
        }
    };
    let quad_n = cfg.quad_n.unwrap_or(match cfg.variant {
        TableVariant::Global => GLOBAL_QUAD_N,
        TableVariant::Piecewise => PIECEWISE_QUAD_N,
    });
    let max_nl = plan.iter().map(|p| p.2).max().unwrap();
    if quad_n <= max_nl + FIT_MARGIN {
        return Err(Error::Domain(format!(
            "fit quadrature order {quad_n} must exceed {}",
            max_nl + FIT_MARGIN
        )));
    }
    let rule = gauss_legendre_dd(quad_n)?;
    let (pieces, max_iters) = project_pieces_1d(&plan, &rule, FIT_MARGIN, |mu_j: Dd| {
        let (lambda, iters) = invert_mu_uni_dd(mu_j)?;
        let (_, eta) = forward_gen::<Dd>(lambda);
        Ok((eta, iters))
    })?;
    Ok(UniaxialClosureTable {
        variant: cfg.variant,
        pieces,
        build: BuildInfo {
            fit_quad_n: quad_n,
            moment_quad_n: None,
            newton_tol: NEWTON_TOL,
            max_newton_iters: max_iters,
        },
    })
}

impl UniaxialClosureTable {
    pub fn eval_eta(&self, mu: f64) -> Result<f64> {
        if !mu.is_finite() || mu < -DOMAIN_CLAMP_TOL || mu > 2.0 + DOMAIN_CLAMP_TOL {
            return Err(Error::Domain(format!("uniaxial mu={mu} outside [0, 2]")));
        }
        let mu = mu.clamp(0.0, 2.0);
        let i = self
            .pieces
            .partition_point(|p| p.series.hi < mu)
            .min(self.pieces.len() - 1);
        Ok(self.pieces[i].series.eval_clamped(mu))
    }
}

/// Fast closure path for second moments with a repeated eigenvalue pair.
/// The distinct axis is mapped to the local z axis; the diagonal-frame
/// fourth moment follows from `(mu, eta)` and is rotated back.
pub fn close_3d_uniaxial(
    m_hat: &SecondMoment3,
    table: &UniaxialClosureTable,
) -> Result<FourthMoment3> {
    let (vals, u) = eig_sym3(m_hat);
    let gap12 = vals[1] - vals[0];
    let gap23 = vals[2] - vals[1];
    if gap12.min(gap23) > MULTIPLICITY_TOL {
        return Err(Error::NotUniaxial {
            gap: gap12.min(gap23),
        });
    }
    // pair with the smaller gap is the repeated one; the remaining axis is
    // mapped to local z by an even (proper) column permutation
    let (distinct, u_local) = if gap12 <= gap23 {
        (2usize, u)
    } else {
        let c1 = u.column(1);
        let c2 = u.column(2);
        let c0 = u.column(0);
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            m[r][0] = c1[r];
            m[r][1] = c2[r];
            m[r][2] = c0[r];
        }
        (0usize, Rotation3 { m })
    };
    let mu = (2.0 * vals[distinct]).clamp(0.0, 2.0);
    let eta = table.eval_eta(mu)?;
    let mut q = FourthMoment3::zero();
    let q_equal = 0.375 * (1.0 - mu) + 0.093_75 * eta;
    q.set(2, 2, 2, 2, 0.25 * eta);
    q.set(0, 0, 2, 2, 0.25 * mu - 0.125 * eta);
    q.set(1, 1, 2, 2, 0.25 * mu - 0.125 * eta);
    q.set(0, 0, 0, 0, q_equal);
    q.set(1, 1, 1, 1, q_equal);
    q.set(0, 0, 1, 1, q_equal / 3.0);
    Ok(rotate4_3(&q, &u_local))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_isotropic_point() {
        let s = forward_moments_uni(0.0).unwrap();
        assert!((s.mu - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.eta - 0.8).abs() < 1e-15);
    }

    #[test]
    fn forward_frozen_values() {
        // frozen from the hypergeometric quadrature oracle
        let s = forward_moments_uni(0.5).unwrap();
        assert!((s.mu - 0.507_408_203_607_368_9).abs() < 1e-15);
        let s = forward_moments_uni(-2.0).unwrap();
        assert!((s.mu - 1.409_253_184_698_213_2).abs() < 2e-15);
    }

    #[test]
    fn forward_limits_and_caps() {
        let s = forward_moments_uni(9.9e4).unwrap();
        assert!(s.mu < 1e-4 && s.mu > 0.0, "ring limit mu={}", s.mu);
        let s = forward_moments_uni(-9.9e4).unwrap();
        assert!(s.mu > 2.0 - 1e-4 && s.mu < 2.0, "polar limit mu={}", s.mu);
        assert_eq!(forward_moments_uni(2e5).unwrap().mu, 0.0);
        assert_eq!(forward_moments_uni(-2e5).unwrap().mu, 2.0);
        assert_eq!(forward_moments_uni(-2e5).unwrap().eta, 4.0);
        assert!(forward_moments_uni(f64::NAN).is_err());
    }

    #[test]
    fn mu_decreasing_and_mu_prime_negative() {
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let lambda = -100.0 + i as f64;
            let s = forward_moments_uni(lambda).unwrap();
            assert!(s.mu < prev, "mu not decreasing at {lambda}");
            assert!(
                s.mu * s.mu - s.eta < 0.0,
                "mu^2 - eta = {:e} not negative at lambda={lambda}",
                s.mu * s.mu - s.eta
            );
            prev = s.mu;
        }
    }

    #[test]
    fn invert_round_trips() {
        assert!((invert_mu_uni(2.0 / 3.0).unwrap().lambda).abs() < 1e-12);
        for &lambda in &[-50.0, -2.0, -0.3, 0.0, 0.4, 3.0, 80.0] {
            let s = forward_moments_uni(lambda).unwrap();
            let inv = invert_mu_uni(s.mu).unwrap();
            let back = forward_moments_uni(inv.lambda).unwrap();
            assert!(
                (back.mu - s.mu).abs() <= 1e-15,
                "round trip at {lambda}: {:e}",
                (back.mu - s.mu).abs()
            );
        }
        // mu = 1.9 is prolate (lambda < 0)
        let inv = invert_mu_uni(1.9).unwrap();
        assert!(inv.lambda < 0.0);
        let back = forward_moments_uni(inv.lambda).unwrap();
        assert!((back.mu - 1.9).abs() <= 1e-15);
    }

    #[test]
    fn invert_domain() {
        assert!(invert_mu_uni(0.0).is_err());
        assert!(invert_mu_uni(2.0).is_err());
        assert!(invert_mu_uni(-0.5).is_err());
    }

    #[test]
    fn build_piecewise_residuals() {
        // two spot intervals from the 11-piece partition
        let cfg = UniaxialBuildConfig {
            variant: TableVariant::Piecewise,
            n_l: None,
            quad_n: Some(48),
            breakpoints: None,
        };
        let t = build_table_uni(&cfg).unwrap();
        assert_eq!(t.pieces.len(), 11);
        for p in &t.pieces {
            assert!(p.residual < 1e-13, "residual {:e}", p.residual);
        }
        assert!((t.eval_eta(2.0 / 3.0).unwrap() - 0.8).abs() < 1e-13);
    }

    #[test]
    fn close_isotropic() {
        let cfg = UniaxialBuildConfig {
            variant: TableVariant::Piecewise,
            n_l: Some(18),
            quad_n: Some(48),
            breakpoints: None,
        };
        let t = build_table_uni(&cfg).unwrap();
        let q = close_3d_uniaxial(&SecondMoment3::isotropic(), &t).unwrap();
        for (i, j, k, l) in [(0, 0, 0, 0), (1, 1, 1, 1), (2, 2, 2, 2)] {
            assert!((q.get(i, j, k, l) - 0.2).abs() < 1e-13);
        }
        for (i, j, k, l) in [(0, 0, 1, 1), (0, 0, 2, 2), (1, 1, 2, 2)] {
            assert!((q.get(i, j, k, l) - 1.0 / 15.0).abs() < 1e-13);
        }
        // polar pair: q3333 = 1, everything else 0
        let m = SecondMoment3 {
            m: [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        };
        let q = close_3d_uniaxial(&m, &t).unwrap();
        assert!((q.get(2, 2, 2, 2) - 1.0).abs() < 1e-13);
        assert!(q.get(0, 0, 0, 0).abs() < 1e-13);
        assert!(q.get(0, 0, 2, 2).abs() < 1e-13);
    }

    #[test]
    fn close_rejects_biaxial_input() {
        let cfg = UniaxialBuildConfig {
            variant: TableVariant::Piecewise,
            n_l: Some(12),
            quad_n: Some(32),
            breakpoints: Some(vec![0.0, 2.0 / 3.0, 2.0]),
        };
        let t = build_table_uni(&cfg).unwrap();
        let m = SecondMoment3 {
            m: [0.2, 0.3, 0.5, 0.0, 0.0, 0.0],
        };
        assert!(matches!(
            close_3d_uniaxial(&m, &t),
            Err(Error::NotUniaxial { .. })
        ));
    }

    #[test]
    fn close_prolate_pair_orientation() {
        // two equal small eigenvalues: distinct axis is the first one
        let cfg = UniaxialBuildConfig {
            variant: TableVariant::Piecewise,
            n_l: Some(18),
            quad_n: Some(48),
            breakpoints: None,
        };
        let t = build_table_uni(&cfg).unwrap();
        let m = SecondMoment3 {
            m: [0.6, 0.2, 0.2, 0.0, 0.0, 0.0],
        };
        let q = close_3d_uniaxial(&m, &t).unwrap();
        // contraction identity picks up the input moment
        let c = q.contract();
        for i in 0..6 {
            assert!(
                (c[i] - m.m[i]).abs() < 1e-12,
                "contraction component {i}: {} vs {}",
                c[i],
                m.m[i]
            );
        }
        // symmetry between the two equal axes (2 and 3 here)
        assert!((q.get(1, 1, 1, 1) - q.get(2, 2, 2, 2)).abs() < 1e-12);
    }
}
