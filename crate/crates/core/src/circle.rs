//! Bingham moment closure on the unit circle.
//!
//! With the parameter tensor reduced to `diag(lambda, -lambda)`,
//! `lambda >= 0`, the density is `exp(lambda cos 2theta) / z`. The scalar
//! moments are Bessel ratios `mu = I_1/I_0` (second order) and
//! `eta = (I_2/I_0 + 1)/2` (fourth order). The builder inverts
//! `mu(lambda)` by Newton iteration at mapped Gauss nodes and fits
//! `eta(mu)` with Legendre expansions, globally or piecewise.

use crate::dd::{DoubleDouble, Real};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_dd, project_pieces_1d, TablePiece, DOMAIN_CLAMP_TOL};
use crate::specfun::bessel_i_scaled_any;
use crate::tensor::{eig_sym2, rotate4_2, FourthMoment2, SecondMoment2};
use crate::BuildInfo;

type Dd = DoubleDouble;

/// Largest Lagrange multiplier the Newton iteration will visit
/// (`mu(1e6)` is within ~5e-7 of 1).
pub const LAMBDA_CAP: f64 = 1e6;

/// Inversion targets are capped at `1 - 1e-12`; the exact endpoint
/// `eta(1) = 1` is hardwired in table evaluation.
pub const MU_TARGET_MAX: f64 = 1.0 - 1e-12;

/// Breakpoints of the piecewise partition of `mu in [0, 1]`.
pub const PIECEWISE_BREAKPOINTS: [f64; 7] = [0.0, 0.5, 0.73, 0.84, 0.91, 0.96, 1.0];

/// Expansion orders per piece of the default piecewise table.
pub const PIECEWISE_NL: [usize; 6] = [19, 19, 18, 18, 18, 18];

pub const GLOBAL_NL: usize = 150;
pub const GLOBAL_QUAD_N: usize = 200;
pub const PIECEWISE_QUAD_N: usize = 64;

/// Extra terms fitted beyond the retained degree; their weighted tail is
/// the recorded residual estimate.
pub(crate) const FIT_MARGIN: usize = 10;

pub(crate) const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Scalar moment state of the circle Bingham density.
#[derive(Clone, Copy, Debug)]
pub struct CircleState {
    pub lambda: f64,
    /// `m11 - m22` in the diagonal frame, in [0, 1).
    pub mu: f64,
    /// `z''/z`, in (mu^2, 1).
    pub eta: f64,
}

fn forward_gen<S: Real>(lambda: S) -> (S, S) {
    let i0 = bessel_i_scaled_any(0, lambda);
    let i1 = bessel_i_scaled_any(1, lambda);
    let i2 = bessel_i_scaled_any(2, lambda);
    let half = S::from_f64(0.5);
    (i1 / i0, half * (i2 / i0 + S::one()))
}

/// Moments `(mu, eta)` from the Bessel-ratio formulas. The scaled Bessel
/// values share the `exp(-lambda)` factor, so the ratios stay finite for
/// the whole admissible range.
pub fn forward_moments(lambda: f64) -> Result<CircleState> {
    if !lambda.is_finite() || lambda < 0.0 || lambda > LAMBDA_CAP {
        return Err(Error::Domain(format!(
            "circle lambda={lambda} outside [0, {LAMBDA_CAP:.0e}] (negative anisotropy is an axis swap)"
        )));
    }
    let (mu, eta) = forward_gen::<f64>(lambda);
    Ok(CircleState { lambda, mu, eta })
}

/// Newton initialization table: `(lambda, mu(lambda))` at geometrically
/// spaced multipliers, ascending in both columns.
fn mu_init_table() -> &'static Vec<(f64, f64)> {
    use std::sync::LazyLock;
    static TABLE: LazyLock<Vec<(f64, f64)>> = LazyLock::new(|| {
        let mut t = Vec::with_capacity(2049);
        t.push((0.0, 0.0));
        let (lo, hi) = (1e-4f64, LAMBDA_CAP);
        let ratio = hi / lo;
        for i in 0..2048 {
            let lam = lo * ratio.powf(i as f64 / 2047.0);
            let (mu, _) = forward_gen::<f64>(lam);
            t.push((lam, mu));
        }
        t
    });
    &TABLE
}

/// Result of a Newton inversion.
#[derive(Clone, Copy, Debug)]
pub struct Inversion {
    pub lambda: f64,
    pub iterations: usize,
}

/// Solves `mu(lambda) = mu_target` with the update
/// `lambda <- lambda + (mu_target - mu) / (eta - mu^2)`, starting from the
/// initialization table entry closest to but not exceeding the target.
pub fn invert_mu(mu_target: f64) -> Result<Inversion> {
    if !mu_target.is_finite() || mu_target < 0.0 || mu_target > MU_TARGET_MAX {
        return Err(Error::Domain(format!(
            "mu target {mu_target} outside [0, 1 - 1e-12]"
        )));
    }
    if mu_target == 0.0 {
        return Ok(Inversion {
            lambda: 0.0,
            iterations: 0,
        });
    }
    let table = mu_init_table();
    let pos = table.partition_point(|&(_, mu)| mu <= mu_target);
    let mut lambda = table[pos.saturating_sub(1)].0;
    // accept the best iterate if the update hits a working-precision
    // limit cycle within a few ulp of the target
    let noise_floor = 8.0 * f64::EPSILON;
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
        let next = (lambda + (mu_target - mu) / (eta - mu * mu)).clamp(0.0, LAMBDA_CAP);
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
        context: "circle Newton inversion (mu target too close to 1 for the lambda cap)",
        iterations: NEWTON_MAX_ITERS,
    })
}

/// Builder path: double-double polish of the double-precision root.
fn invert_mu_dd(mu_target: Dd) -> Result<(Dd, usize)> {
    let base = invert_mu(mu_target.to_f64())?;
    let mut lambda = Dd::from_f64(base.lambda);
    for _ in 0..2 {
        let (mu, eta) = forward_gen::<Dd>(lambda);
        lambda = lambda + (mu_target - mu) / (eta - mu * mu);
        if lambda.to_f64() < 0.0 {
            lambda = Dd::ZERO;
        }
    }
    Ok((lambda, base.iterations))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableVariant {
    Global,
    Piecewise,
}

/// Build configuration; `Default` reproduces the reference global table.
#[derive(Clone, Debug)]
pub struct CircleBuildConfig {
    pub variant: TableVariant,
    /// Override the expansion order of every piece.
    pub n_l: Option<usize>,
    /// Override the fit quadrature order.
    pub quad_n: Option<usize>,
    /// Override the piecewise breakpoints.
    pub breakpoints: Option<Vec<f64>>,
}

impl CircleBuildConfig {
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
pub struct CircleClosureTable {
    pub variant: TableVariant,
    pub pieces: Vec<TablePiece>,
    pub build: BuildInfo,
}

/// Resolved per-piece build plan `(lo, hi, n_l)`.
fn piece_plan(cfg: &CircleBuildConfig) -> Result<Vec<(f64, f64, usize)>> {
    match cfg.variant {
        TableVariant::Global => Ok(vec![(0.0, 1.0, cfg.n_l.unwrap_or(GLOBAL_NL))]),
        TableVariant::Piecewise => {
            let bps: Vec<f64> = cfg
                .breakpoints
                .clone()
                .unwrap_or_else(|| PIECEWISE_BREAKPOINTS.to_vec());
            if bps.len() < 2 || bps[0] != 0.0 || *bps.last().unwrap() != 1.0 {
                return Err(Error::Domain(
                    "piecewise breakpoints must run from 0 to 1".into(),
                ));
            }
            let mut plan = Vec::new();
            for w in bps.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Domain("breakpoints must be increasing".into()));
                }
            }
            for (i, w) in bps.windows(2).enumerate() {
                let n_l = cfg.n_l.unwrap_or_else(|| {
                    if cfg.breakpoints.is_none() && i < PIECEWISE_NL.len() {
                        PIECEWISE_NL[i]
                    } else {
                        18
                    }
                });
                plan.push((w[0], w[1], n_l));
            }
            Ok(plan)
        }
    }
}

/// Build a closure table: for every piece, map Gauss nodes to `mu`, invert
/// by Newton (double-double polish), evaluate `eta`, project onto Legendre
/// polynomials in double-double, and record the estimated L2 residual of
/// the retained truncation. Gauss nodes are interior, so the `mu = 1`
/// endpoint is never sampled.
pub fn build_table(cfg: &CircleBuildConfig) -> Result<CircleClosureTable> {
    let plan = piece_plan(cfg)?;
    let quad_n = cfg.quad_n.unwrap_or(match cfg.variant {
        TableVariant::Global => GLOBAL_QUAD_N,
        TableVariant::Piecewise => PIECEWISE_QUAD_N,
    });
    let max_nl = plan.iter().map(|p| p.2).max().unwrap();
    if quad_n <= max_nl + FIT_MARGIN {
        return Err(Error::Domain(format!(
            "fit quadrature order {quad_n} must exceed n_l + {FIT_MARGIN} = {}",
            max_nl + FIT_MARGIN
        )));
    }
    let rule = gauss_legendre_dd(quad_n)?;
    let (pieces, max_iters) = project_pieces_1d(&plan, &rule, FIT_MARGIN, |mu_j: Dd| {
        let (lambda, iters) = invert_mu_dd(mu_j)?;
        let (_, eta) = forward_gen::<Dd>(lambda);
        Ok((eta, iters))
    })?;
    Ok(CircleClosureTable {
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

impl CircleClosureTable {
    /// Piece lookup and Clenshaw evaluation of `eta(mu)`. The endpoint
    /// `mu = 1` returns exactly 1 (the Dirac pair limit).
    pub fn eval_eta(&self, mu: f64) -> Result<f64> {
        if !mu.is_finite() || mu < -DOMAIN_CLAMP_TOL || mu > 1.0 + DOMAIN_CLAMP_TOL {
            return Err(Error::Domain(format!("mu={mu} outside [0, 1]")));
        }
        if mu >= 1.0 {
            return Ok(1.0);
        }
        let mu = mu.max(0.0);
        let i = self
            .pieces
            .partition_point(|p| p.series.hi < mu)
            .min(self.pieces.len() - 1);
        Ok(self.pieces[i].series.eval_clamped(mu))
    }
}

/// Algorithm: diagonalize, look up `eta`, assemble the diagonal-frame
/// fourth moment from `(mu, eta)` and rotate back.
pub fn close_2d(m_hat: &SecondMoment2, table: &CircleClosureTable) -> Result<FourthMoment2> {
    let (l1, l2, u) = eig_sym2(m_hat);
    let mu = (l1 - l2).clamp(0.0, 1.0);
    let eta = table.eval_eta(mu)?;
    let q_diag = FourthMoment2 {
        q: [
            0.25 * (1.0 + 2.0 * mu + eta), // q1111
            0.0,
            0.25 * (1.0 - eta), // q1122
            0.0,
            0.25 * (1.0 - 2.0 * mu + eta), // q2222
        ],
    };
    Ok(rotate4_2(&q_diag, &u))
}

/// Validation oracle limit: beyond this the 4096-point grid under-resolves
/// the density peak.
pub const ORACLE_LAMBDA_MAX: f64 = 500.0;

/// Directly integrated moments of `exp(lambda cos 2theta)`.
///
/// `q[m] = <cos^m(theta) sin^(4-m)(theta)>`; in tensor terms
/// `q1111 = q[4]`, `q1122 = q[2]`, `q2222 = q[0]`.
#[derive(Clone, Copy, Debug)]
pub struct CircleOracleMoments {
    pub mu: f64,
    pub eta: f64,
    pub q: [f64; 5],
}

/// Periodic-trapezoid quadrature (4096 points) of the moment definitions;
/// spectrally accurate for `lambda <= 500`, rejected beyond.
pub fn oracle_moments_2d(lambda: f64) -> Result<CircleOracleMoments> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Domain(format!("oracle lambda={lambda} must be >= 0")));
    }
    if lambda > ORACLE_LAMBDA_MAX {
        return Err(Error::Domain(format!(
            "oracle lambda={lambda} beyond accuracy range {ORACLE_LAMBDA_MAX}"
        )));
    }
    const N: usize = 4096;
    let h = std::f64::consts::TAU / N as f64;
    let mut z = 0.0;
    let mut mu_acc = 0.0;
    let mut eta_acc = 0.0;
    let mut q_acc = [0.0f64; 5];
    for j in 0..N {
        let theta = j as f64 * h;
        let c2 = (2.0 * theta).cos();
        // scaled by exp(-lambda) to stay finite; cancels in the ratios
        let w = (lambda * (c2 - 1.0)).exp();
        z += w;
        mu_acc += w * c2;
        eta_acc += w * c2 * c2;
        let (c, s) = (theta.cos(), theta.sin());
        for (m, q) in q_acc.iter_mut().enumerate() {
            *q += w * c.powi(m as i32) * s.powi(4 - m as i32);
        }
    }
    let mut q = [0.0f64; 5];
    for m in 0..5 {
        q[m] = q_acc[m] / z;
    }
    Ok(CircleOracleMoments {
        mu: mu_acc / z,
        eta: eta_acc / z,
        q,
    })
}
