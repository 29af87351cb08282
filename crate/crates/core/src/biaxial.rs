//! Bingham moment closure on the unit sphere, general (biaxial) case.
//!
//! The parameter tensor is reduced to
//! `diag(-lambda1 - lambda2, -lambda1 + lambda2, 0)`, `lambda1 >= lambda2 >= 0`,
//! with density `exp[-(lambda1 + lambda2 cos 2phi) sin^2 theta] / z`, so that
//! `m11 <= m22 <= m33`. The independent moments are
//! `mu1 = m11 + m22`, `mu2 = m11 - m22 <= 0` and the three fourth-order
//! functionals `eta1, eta2, eta3`, all computable as Gauss quadratures of
//! confluent hypergeometric integrands in `t` (phi = pi t). The admissible
//! `(mu1, mu2)` region is the closed triangle with vertices A(0,0),
//! B(1/2,-1/2), C(2/3,0); it is mapped onto the standard square for
//! Legendre fitting.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use rayon::prelude::*;

use crate::dd::{CompensatedSum, DoubleDouble, Real};
use crate::error::{Error, Result};
use crate::quadrature::{
    fit_legendre_2d, gauss_legendre, gauss_legendre_dd, tail_residual_2d, LegendreSeries2D, Rule,
};
use crate::specfun::{hyp1f1_scaled_any, PiConst};
use crate::tensor::{eig_sym3, rotate4_3, FourthMoment3, SecondMoment3};
use crate::BuildInfo;

type Dd = DoubleDouble;

pub const LAMBDA1_CAP: f64 = 1e5;

/// Default order of the Gauss rule for the moment integrals in `t`
/// (the even integrand is sampled on [0, 1] only).
pub const DEFAULT_MOMENT_QUAD_N: usize = 128;

/// Radius around the isotropic vertex C = (2/3, 0) handled analytically.
pub const ISOTROPY_RADIUS: f64 = 1e-10;

/// Isotropic values of `(eta1, eta2, eta3)`.
pub const ISOTROPIC_ETAS: (f64, f64, f64) = (8.0 / 15.0, 0.0, 4.0 / 15.0);

const TRIANGLE_TOL: f64 = 1e-12;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;
const MAX_STEP_HALVINGS: usize = 30;

/// Fit margin in each direction: the residual estimate is read off the
/// extra coefficients.
const FIT_MARGIN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiaxialParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl BiaxialParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1.is_finite() && lambda2.is_finite())
            || lambda2 < 0.0
            || lambda1 < lambda2
            || lambda1 > LAMBDA1_CAP
        {
            return Err(Error::Domain(format!(
                "biaxial parameters ({lambda1}, {lambda2}) outside lambda1 >= lambda2 >= 0, lambda1 <= {LAMBDA1_CAP:.0e}"
            )));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BiaxialState {
    pub mu1: f64,
    pub mu2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
}

// ---------------------------------------------------------------------------
// moment integrals
// ---------------------------------------------------------------------------

/// Precomputed `cos(pi t_i)` and weights of a Gauss rule mapped onto
/// t in [0, 1]; by evenness `int_-1^1 g dt = sum_i w_i g(t_i)`.
struct MomentGrid<S> {
    cos_pi_t: Vec<S>,
    weights: Vec<S>,
}

fn moment_grid_f64(n: usize) -> Result<Arc<MomentGrid<f64>>> {
    static CACHE: LazyLock<Mutex<HashMap<usize, Arc<MomentGrid<f64>>>>> =
        LazyLock::new(|| Mutex::new(HashMap::new()));
    if let Some(g) = CACHE.lock().unwrap().get(&n) {
        return Ok(g.clone());
    }
    let rule = gauss_legendre(n)?;
    let grid = Arc::new(MomentGrid {
        cos_pi_t: rule
            .nodes
            .iter()
            .map(|&x| (std::f64::consts::PI * 0.5 * (x + 1.0)).cos())
            .collect(),
        weights: rule.weights.clone(),
    });
    CACHE.lock().unwrap().insert(n, grid.clone());
    Ok(grid)
}

fn moment_grid_dd(n: usize) -> Result<Arc<MomentGrid<Dd>>> {
    static CACHE: LazyLock<Mutex<HashMap<usize, Arc<MomentGrid<Dd>>>>> =
        LazyLock::new(|| Mutex::new(HashMap::new()));
    if let Some(g) = CACHE.lock().unwrap().get(&n) {
        return Ok(g.clone());
    }
    let rule: Rule<Dd> = gauss_legendre_dd(n)?;
    let half = Dd::from_f64(0.5);
    let grid = Arc::new(MomentGrid {
        cos_pi_t: rule
            .nodes
            .iter()
            .map(|&x| (Dd::PI * half * (x + Dd::ONE)).cos())
            .collect(),
        weights: rule.weights.clone(),
    });
    CACHE.lock().unwrap().insert(n, grid.clone());
    Ok(grid)
}

/// One pass of hypergeometric evaluations over the grid: returns
/// `(z, mu1, mu2, eta1, eta2, eta3)`.
fn forward_gen<S: Real>(l1: S, l2: S, grid: &MomentGrid<S>) -> (S, [S; 5]) {
    let mut acc: [CompensatedSum<S>; 6] = std::array::from_fn(|_| CompensatedSum::new());
    for i in 0..grid.weights.len() {
        let ct = grid.cos_pi_t[i];
        let w = grid.weights[i];
        let c = l1 + l2 * ct;
        let f1 = hyp1f1_scaled_any(1.0, 1.5, -c);
        let f2 = hyp1f1_scaled_any(2.0, 2.5, -c);
        let f3 = hyp1f1_scaled_any(3.0, 3.5, -c);
        acc[0].add(f1 * w);
        acc[1].add(f2 * w);
        acc[2].add(f2 * ct * w);
        acc[3].add(f3 * w);
        acc[4].add(f3 * ct * w);
        acc[5].add(f3 * ct * ct * w);
    }
    let za = acc[0].value();
    let z = S::from_f64(2.0) * S::pi_const() * za;
    let c23 = S::from_f64(2.0 / 3.0);
    let c815 = S::from_f64(8.0 / 15.0);
    (
        z,
        [
            c23 * acc[1].value() / za,
            c23 * acc[2].value() / za,
            c815 * acc[3].value() / za,
            c815 * acc[4].value() / za,
            c815 * acc[5].value() / za,
        ],
    )
}

/// Partition function and moments of the biaxial density at the given
/// parameters, by `quad_n`-point Gauss quadrature of the 1F1 integrands.
pub fn forward_moments_biaxial(p: &BiaxialParams, quad_n: usize) -> Result<(f64, BiaxialState)> {
    BiaxialParams::new(p.lambda1, p.lambda2)?;
    let grid = moment_grid_f64(quad_n)?;
    let (z, m) = forward_gen(p.lambda1, p.lambda2, &grid);
    Ok((
        z,
        BiaxialState {
            mu1: m[0],
            mu2: m[1],
            eta1: m[2],
            eta2: m[3],
            eta3: m[4],
        },
    ))
}

/// As [`forward_moments_biaxial`] but audited against the doubled rule;
/// errors if any moment moves by more than 1e-11.
pub fn forward_moments_biaxial_checked(
    p: &BiaxialParams,
    quad_n: usize,
) -> Result<(f64, BiaxialState)> {
    let (z, a) = forward_moments_biaxial(p, quad_n)?;
    let (_, b) = forward_moments_biaxial(p, 2 * quad_n)?;
    let drift = (a.mu1 - b.mu1)
        .abs()
        .max((a.mu2 - b.mu2).abs())
        .max((a.eta1 - b.eta1).abs())
        .max((a.eta2 - b.eta2).abs())
        .max((a.eta3 - b.eta3).abs());
    if drift > 1e-11 {
        return Err(Error::QuadratureNotConverged(format!(
            "moment drift {drift:.3e} under rule doubling at ({}, {})",
            p.lambda1, p.lambda2
        )));
    }
    Ok((z, b))
}

// ---------------------------------------------------------------------------
// triangle <-> square mapping
// ---------------------------------------------------------------------------

/// Forward map of the admissible triangle onto the square:
/// `x = 8 mu2 / (3 mu1 + 3 mu2 - 2) - 1`, `y = 3 mu1 + 3 mu2 - 1`.
/// The isotropic vertex C maps onto the whole edge `y = 1` and is rejected.
pub fn map_mu_to_xy(mu1: f64, mu2: f64) -> Result<(f64, f64)> {
    let denom = 3.0 * mu1 + 3.0 * mu2 - 2.0;
    if denom > -1e-13 {
        return Err(Error::Domain(format!(
            "triangle-to-square map singular at ({mu1}, {mu2}) (isotropic vertex)"
        )));
    }
    Ok((8.0 * mu2 / denom - 1.0, 3.0 * (mu1 + mu2) - 1.0))
}

/// Inverse map: `mu1 = (1+x)(1-y)/8 + y/3 + 1/3`, `mu2 = -(1+x)(1-y)/8`.
pub fn map_xy_to_mu(x: f64, y: f64) -> (f64, f64) {
    let p = 0.125 * (1.0 + x) * (1.0 - y);
    (p + y / 3.0 + 1.0 / 3.0, -p)
}

fn inside_triangle(mu1: f64, mu2: f64, tol: f64) -> bool {
    mu2 <= tol && mu1 + mu2 >= -tol && 3.0 * mu1 - mu2 <= 2.0 + tol
}

// ---------------------------------------------------------------------------
// Newton inversion
// ---------------------------------------------------------------------------

const INIT_GRID_N: usize = 64;
const INIT_GRID_QUAD_N: usize = 64;

/// Coarse `(lambda1, lambda2) -> (mu1, mu2)` image grid for Newton starts:
/// a ratio-parameterized main grid plus a sum/difference-parameterized
/// family that resolves the squeezed corner near vertex B, where
/// `lambda1 + lambda2` is large but `lambda1 - lambda2` stays moderate.
fn init_grid() -> &'static Vec<(f64, f64, f64, f64)> {
    static GRID: LazyLock<Vec<(f64, f64, f64, f64)>> = LazyLock::new(|| {
        let grid = moment_grid_f64(INIT_GRID_QUAD_N).expect("init grid rule");
        let mut out = Vec::with_capacity(INIT_GRID_N * INIT_GRID_N + 33 * 33 + 1);
        out.push((0.0, 0.0, 2.0 / 3.0, 0.0));
        for i in 0..INIT_GRID_N {
            let l1 = 1e-3 * (1e7f64).powf(i as f64 / (INIT_GRID_N - 1) as f64);
            for j in 0..INIT_GRID_N {
                let l2 = l1 * j as f64 / (INIT_GRID_N - 1) as f64;
                let (_, m) = forward_gen(l1, l2, &grid);
                out.push((l1, l2, m[0], m[1]));
            }
        }
        for i in 0..=32 {
            let sum = 1e2 * (1e3f64).powf(i as f64 / 32.0);
            for j in 0..=32 {
                let diff = 1e-2 * (1e4f64).powf(j as f64 / 32.0);
                if diff >= sum {
                    continue;
                }
                let (l1, l2) = (0.5 * (sum + diff), 0.5 * (sum - diff));
                let (_, m) = forward_gen(l1, l2, &grid);
                out.push((l1, l2, m[0], m[1]));
            }
        }
        out
    });
    &GRID
}

/// Newton inversion of `(mu1, mu2) -> (lambda1, lambda2)` with the exact
/// Jacobian `dmu1/dl1 = mu1^2 - eta1`, `dmu1/dl2 = mu1 mu2 - eta2`,
/// `dmu2/dl2 = mu2^2 - eta3`. Steps leaving `{l1 >= l2 >= 0}` are halved
/// (up to 30 times), then projected. Returns the parameters and the
/// iteration count.
pub fn invert_mu_biaxial(mu1: f64, mu2: f64, tol: f64) -> Result<(BiaxialParams, usize)> {
    invert_mu_biaxial_with_n(mu1, mu2, tol, DEFAULT_MOMENT_QUAD_N)
}

pub(crate) fn invert_mu_biaxial_with_n(
    mu1: f64,
    mu2: f64,
    tol: f64,
    quad_n: usize,
) -> Result<(BiaxialParams, usize)> {
    if !(mu1.is_finite() && mu2.is_finite()) {
        return Err(Error::Domain("non-finite moment target".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("newton tolerance {tol} must be > 0")));
    }
    let d_iso = ((mu1 - 2.0 / 3.0).powi(2) + mu2 * mu2).sqrt();
    if d_iso <= ISOTROPY_RADIUS {
        return Ok((BiaxialParams { lambda1: 0.0, lambda2: 0.0 }, 0));
    }
    if !inside_triangle(mu1, mu2, TRIANGLE_TOL) {
        return Err(Error::Domain(format!(
            "moment target ({mu1}, {mu2}) outside the admissible triangle"
        )));
    }
    let grid = moment_grid_f64(quad_n)?;
    let mut best = (0.0f64, 0.0f64);
    let mut best_d = f64::INFINITY;
    for &(l1, l2, g1, g2) in init_grid() {
        let d = (g1 - mu1).powi(2) + (g2 - mu2).powi(2);
        if d < best_d {
            best_d = d;
            best = (l1, l2);
        }
    }
    let (mut l1, mut l2) = best;
    // Accept the best iterate when the update stalls: Newton on this
    // convex problem stalls only at the evaluation noise floor of the
    // quadrature-based moments (observed up to ~2e-14 near the squeezed
    // A-B edge, where the Jacobian is nearly singular). Interior targets
    // reach the nominal tolerance; genuinely unreachable ones keep
    // residuals far above the acceptance level. The builder's
    // double-double polish afterwards restores the root beyond 1e-15.
    let noise_floor = 1e-13f64;
    let mut best_seen = (f64::INFINITY, l1, l2);
    let mut prev = (f64::NAN, f64::NAN);
    let mut stalled = 0usize;
    for iterations in 0..NEWTON_MAX_ITERS {
        let (_, m) = forward_gen(l1, l2, &grid);
        let (r1, r2) = (mu1 - m[0], mu2 - m[1]);
        let resid = (r1 * r1 + r2 * r2).sqrt();
        if resid < best_seen.0 {
            best_seen = (resid, l1, l2);
            stalled = 0;
        } else {
            stalled += 1;
        }
        if resid <= tol {
            return Ok((BiaxialParams { lambda1: l1, lambda2: l2 }, iterations));
        }
        let j11 = m[0] * m[0] - m[2];
        let j12 = m[0] * m[1] - m[3];
        let j22 = m[1] * m[1] - m[4];
        let det = j11 * j22 - j12 * j12;
        if det.abs() < 1e-30 {
            return Err(Error::Domain(format!(
                "singular moment Jacobian at ({l1}, {l2})"
            )));
        }
        let d1 = (j22 * r1 - j12 * r2) / det;
        let d2 = (-j12 * r1 + j11 * r2) / det;
        let mut s = 1.0;
        let mut cand = (l1 + d1, l2 + d2);
        for _ in 0..MAX_STEP_HALVINGS {
            if cand.1 >= 0.0 && cand.0 >= cand.1 && cand.0 <= LAMBDA1_CAP {
                break;
            }
            s *= 0.5;
            cand = (l1 + s * d1, l2 + s * d2);
        }
        let next = (cand.0.clamp(cand.1.max(0.0), LAMBDA1_CAP), cand.1.max(0.0));
        let cycling = next == (l1, l2) || next == prev;
        if (cycling || stalled >= 5) && best_seen.0 <= noise_floor.max(tol) {
            return Ok((
                BiaxialParams {
                    lambda1: best_seen.1,
                    lambda2: best_seen.2,
                },
                iterations,
            ));
        }
        if cycling {
            break;
        }
        prev = (l1, l2);
        (l1, l2) = next;
    }
    Err(Error::NonConvergence {
        context: "biaxial Newton inversion",
        iterations: NEWTON_MAX_ITERS,
    })
}

/// Builder path: double-double polish of the double-precision root.
fn invert_mu_biaxial_dd(
    mu1: Dd,
    mu2: Dd,
    quad_n: usize,
    tol: f64,
) -> Result<((Dd, Dd), usize)> {
    let (base, iters) = invert_mu_biaxial_with_n(mu1.to_f64(), mu2.to_f64(), tol, quad_n)?;
    let grid = moment_grid_dd(quad_n)?;
    let mut l1 = Dd::from_f64(base.lambda1);
    let mut l2 = Dd::from_f64(base.lambda2);
    for _ in 0..2 {
        let (_, m) = forward_gen(l1, l2, &grid);
        let (r1, r2) = (mu1 - m[0], mu2 - m[1]);
        let j11 = m[0] * m[0] - m[2];
        let j12 = m[0] * m[1] - m[3];
        let j22 = m[1] * m[1] - m[4];
        let det = j11 * j22 - j12 * j12;
        if det.abs().to_f64() < 1e-30 {
            break;
        }
        let d1 = (j22 * r1 - j12 * r2) / det;
        let d2 = (-j12 * r1 + j11 * r2) / det;
        l1 = l1 + d1;
        l2 = l2 + d2;
        if l2.to_f64() < 0.0 {
            l2 = Dd::ZERO;
        }
        if l1 < l2 {
            l1 = l2;
        }
    }
    Ok(((l1, l2), iters))
}

// ---------------------------------------------------------------------------
// direct sphere oracle
// ---------------------------------------------------------------------------

/// Largest `max|B|` the oracle grid resolves to ~1e-12.
pub const ORACLE_B_MAX: f64 = 200.0;

/// Direct product-quadrature moments of `exp(-m^T B m)` for diagonal `B`:
/// Gauss in `cos theta` (256 nodes) times periodic trapezoid in `phi`
/// (1024 nodes). Returns all second- and fourth-order components,
/// including the odd ones (which must vanish).
pub fn oracle_moments_sphere(b_diag: [f64; 3]) -> Result<(SecondMoment3, FourthMoment3)> {
    if b_diag.iter().any(|b| !b.is_finite()) {
        return Err(Error::Domain("oracle B must be finite".into()));
    }
    if b_diag.iter().any(|b| b.abs() > ORACLE_B_MAX) {
        return Err(Error::Domain(format!(
            "oracle |B| exceeds accuracy range {ORACLE_B_MAX}"
        )));
    }
    let shift = b_diag[0].min(b_diag[1]).min(b_diag[2]);
    let rule = gauss_legendre(256)?;
    const NPHI: usize = 1024;
    let hphi = std::f64::consts::TAU / NPHI as f64;
    let mut z = CompensatedSum::<f64>::new();
    let mut macc: [CompensatedSum<f64>; 6] = std::array::from_fn(|_| CompensatedSum::new());
    let mut qacc: [CompensatedSum<f64>; 15] = std::array::from_fn(|_| CompensatedSum::new());
    for iu in 0..rule.len() {
        let u = rule.nodes[iu];
        let wu = rule.weights[iu];
        let s = (1.0 - u * u).sqrt();
        for ip in 0..NPHI {
            let phi = ip as f64 * hphi;
            let m = [s * phi.cos(), s * phi.sin(), u];
            let expo =
                shift - (b_diag[0] * m[0] * m[0] + b_diag[1] * m[1] * m[1] + b_diag[2] * m[2] * m[2]);
            let w = wu * expo.exp();
            z.add(w);
            macc[0].add(w * m[0] * m[0]);
            macc[1].add(w * m[1] * m[1]);
            macc[2].add(w * m[2] * m[2]);
            macc[3].add(w * m[0] * m[1]);
            macc[4].add(w * m[0] * m[2]);
            macc[5].add(w * m[1] * m[2]);
            for (idx, &(i, j, k, l)) in crate::tensor::UNIQUE3.iter().enumerate() {
                qacc[idx].add(w * m[i] * m[j] * m[k] * m[l]);
            }
        }
    }
    let zv = z.value();
    let mut m = [0.0; 6];
    for i in 0..6 {
        m[i] = macc[i].value() / zv;
    }
    let mut q = FourthMoment3::zero();
    for i in 0..15 {
        q.q[i] = qacc[i].value() / zv;
    }
    Ok((SecondMoment3 { m }, q))
}

// ---------------------------------------------------------------------------
// tables
// ---------------------------------------------------------------------------

pub use crate::circle::TableVariant;

/// Axis-aligned block partition of the square, `(x_lo, x_hi, y_lo, y_hi)`:
/// the top half-strip plus a 2+3 split of the lower strips.
pub const BLOCK_RECTS: [(f64, f64, f64, f64); 6] = [
    (-1.0, 1.0, 0.0, 1.0),
    (-1.0, -1.0 / 3.0, -2.0 / 3.0, 0.0),
    (-1.0 / 3.0, 1.0, -2.0 / 3.0, 0.0),
    (-1.0, -0.8, -1.0, -2.0 / 3.0),
    (-0.8, -1.0 / 3.0, -1.0, -2.0 / 3.0),
    (-1.0 / 3.0, 1.0, -1.0, -2.0 / 3.0),
];

/// Per-block expansion orders `(n1, n2)` for `eta1, eta2, eta3`.
pub const BLOCK_ORDERS: [[(usize, usize); 3]; 6] = [
    [(17, 15), (17, 15), (17, 16)],
    [(22, 22), (22, 21), (23, 21)],
    [(16, 20), (16, 20), (16, 21)],
    [(24, 26), (23, 26), (23, 26)],
    [(23, 24), (23, 25), (22, 26)],
    [(20, 24), (21, 24), (22, 25)],
];

pub const GLOBAL_N1: usize = 100;
pub const GLOBAL_N2: usize = 100;
pub const GLOBAL_FIT_QUAD_N: usize = 120;
pub const PIECEWISE_FIT_QUAD_N: usize = 48;

#[derive(Clone, Debug)]
pub struct BiaxialBuildConfig {
    pub variant: TableVariant,
    /// Override `(n1, n2)` for every block and every eta.
    pub orders: Option<(usize, usize)>,
    pub fit_quad_n: Option<usize>,
    pub moment_quad_n: usize,
    pub newton_tol: f64,
}

impl BiaxialBuildConfig {
    pub fn global() -> Self {
        Self {
            variant: TableVariant::Global,
            orders: None,
            fit_quad_n: None,
            moment_quad_n: DEFAULT_MOMENT_QUAD_N,
            newton_tol: DEFAULT_NEWTON_TOL,
        }
    }

    pub fn piecewise() -> Self {
        Self {
            variant: TableVariant::Piecewise,
            ..Self::global()
        }
    }
}

/// One block: three fitted series (for `eta1, eta2, eta3`) on the local
/// standard square, with per-series residual estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct BiaxialBlock {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub etas: [LegendreSeries2D; 3],
    pub residuals: [f64; 3],
}

impl BiaxialBlock {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_lo..=self.x_hi).contains(&x) && (self.y_lo..=self.y_hi).contains(&y)
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        (
            ((2.0 * x - self.x_lo - self.x_hi) / (self.x_hi - self.x_lo)).clamp(-1.0, 1.0),
            ((2.0 * y - self.y_lo - self.y_hi) / (self.y_hi - self.y_lo)).clamp(-1.0, 1.0),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiaxialClosureTable {
    pub variant: TableVariant,
    pub blocks: Vec<BiaxialBlock>,
    pub build: BuildInfo,
}

/// Build the three `eta_i(x, y)` tables: for every block and Gauss node,
/// map to `(mu1, mu2)`, invert by Newton (double-double polish), evaluate
/// the moment integrals in double-double, audit against the doubled rule,
/// and project onto the tensor Legendre basis.
pub fn build_table_biaxial(cfg: &BiaxialBuildConfig) -> Result<BiaxialClosureTable> {
    let plan: Vec<((f64, f64, f64, f64), [(usize, usize); 3])> = match cfg.variant {
        TableVariant::Global => {
            let orders = cfg.orders.unwrap_or((GLOBAL_N1, GLOBAL_N2));
            vec![((-1.0, 1.0, -1.0, 1.0), [orders; 3])]
        }
        TableVariant::Piecewise => BLOCK_RECTS
            .iter()
            .zip(BLOCK_ORDERS.iter())
            .map(|(&rect, &orders)| {
                let orders = cfg.orders.map(|o| [o; 3]).unwrap_or(orders);
                (rect, orders)
            })
            .collect(),
    };
    let fit_n = cfg.fit_quad_n.unwrap_or(match cfg.variant {
        TableVariant::Global => GLOBAL_FIT_QUAD_N,
        TableVariant::Piecewise => PIECEWISE_FIT_QUAD_N,
    });
    let rule = gauss_legendre_dd(fit_n)?;
    let mut blocks = Vec::with_capacity(plan.len());
    let mut max_iters = 0usize;
    for (bi, &((x_lo, x_hi, y_lo, y_hi), orders)) in plan.iter().enumerate() {
        let n1_fit = orders.iter().map(|o| o.0).max().unwrap() + FIT_MARGIN;
        let n2_fit = orders.iter().map(|o| o.1).max().unwrap() + FIT_MARGIN;
        if fit_n <= n1_fit || fit_n <= n2_fit {
            return Err(Error::Domain(format!(
                "fit quadrature order {fit_n} must exceed ({n1_fit}, {n2_fit})"
            )));
        }
        let half = Dd::from_f64(0.5);
        let map_x = |x: Dd| Dd::from_f64(x_lo) + (Dd::from_f64(x_hi) - Dd::from_f64(x_lo)) * half * (x + Dd::ONE);
        let map_y = |y: Dd| Dd::from_f64(y_lo) + (Dd::from_f64(y_hi) - Dd::from_f64(y_lo)) * half * (y + Dd::ONE);
        let samples: Vec<([Dd; 3], usize)> = (0..fit_n * fit_n)
            .into_par_iter()
            .map(|flat| -> Result<([Dd; 3], usize)> {
                let (i, j) = (flat / fit_n, flat % fit_n);
                let x = map_x(rule.nodes[i]);
                let y = map_y(rule.nodes[j]);
                // inverse of the square map, in double-double
                let p = Dd::from_f64(0.125) * (Dd::ONE + x) * (Dd::ONE - y);
                let third = Dd::ONE / Dd::from_f64(3.0);
                let mu1 = p + y * third + third;
                let mu2 = -p;
                let ((l1, l2), iters) =
                    invert_mu_biaxial_dd(mu1, mu2, cfg.moment_quad_n, cfg.newton_tol).map_err(
                        |e| Error::Domain(format!("block {bi}, node ({i},{j}): {e}")),
                    )?;
                let grid = moment_grid_dd(cfg.moment_quad_n)?;
                let (_, m) = forward_gen(l1, l2, &grid);
                // quadrature audit at the converged parameters
                let p64 = BiaxialParams {
                    lambda1: l1.to_f64(),
                    lambda2: l2.to_f64(),
                };
                let (_, audited) = forward_moments_biaxial(&p64, 2 * cfg.moment_quad_n)?;
                let drift = (m[2].to_f64() - audited.eta1)
                    .abs()
                    .max((m[3].to_f64() - audited.eta2).abs())
                    .max((m[4].to_f64() - audited.eta3).abs());
                if drift > 1e-11 {
                    return Err(Error::QuadratureNotConverged(format!(
                        "block {bi}, node ({i},{j}): eta drift {drift:.3e} under rule doubling"
                    )));
                }
                Ok(([m[2], m[3], m[4]], iters))
            })
            .collect::<Result<Vec<_>>>()?;
        max_iters = max_iters.max(samples.iter().map(|s| s.1).max().unwrap_or(0));
        let mut etas = Vec::with_capacity(3);
        let mut residuals = [0.0; 3];
        for (e, &(n1, n2)) in orders.iter().enumerate() {
            let values: Vec<Dd> = samples.iter().map(|s| s.0[e]).collect();
            let coeffs_ext = fit_legendre_2d(&values, &rule, &rule, n1_fit, n2_fit)?;
            residuals[e] = tail_residual_2d(&coeffs_ext, n1_fit, n2_fit, n1, n2);
            let mut coeffs = Vec::with_capacity((n1 + 1) * (n2 + 1));
            for s in 0..=n1 {
                for t in 0..=n2 {
                    coeffs.push(coeffs_ext[s * (n2_fit + 1) + t].to_f64());
                }
            }
            etas.push(LegendreSeries2D::new(n1, n2, coeffs)?);
        }
        blocks.push(BiaxialBlock {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
            etas: [etas[0].clone(), etas[1].clone(), etas[2].clone()],
            residuals,
        });
    }
    Ok(BiaxialClosureTable {
        variant: cfg.variant,
        blocks,
        build: BuildInfo {
            fit_quad_n: fit_n,
            moment_quad_n: Some(cfg.moment_quad_n),
            newton_tol: cfg.newton_tol,
            max_newton_iters: max_iters,
        },
    })
}

impl BiaxialClosureTable {
    /// Block lookup by rectangle containment; seam points resolve to the
    /// right/upper block consistently.
    fn block_index(&self, x: f64, y: f64) -> usize {
        if self.blocks.len() == 1 {
            return 0;
        }
        if y >= 0.0 {
            0
        } else if y >= -2.0 / 3.0 {
            if x < -1.0 / 3.0 {
                1
            } else {
                2
            }
        } else if x < -0.8 {
            3
        } else if x < -1.0 / 3.0 {
            4
        } else {
            5
        }
    }

    /// `eta1, eta2, eta3` at a point of the admissible triangle. The
    /// isotropic vertex and its vicinity return the analytic constants.
    pub fn eval_etas(&self, mu1: f64, mu2: f64) -> Result<(f64, f64, f64)> {
        if !(mu1.is_finite() && mu2.is_finite()) {
            return Err(Error::Domain("non-finite moment point".into()));
        }
        // the isotropic vertex handles its whole vicinity, including
        // points nudged just past the triangle edges by rounding
        let d_iso = ((mu1 - 2.0 / 3.0).powi(2) + mu2 * mu2).sqrt();
        if d_iso <= ISOTROPY_RADIUS {
            return Ok(ISOTROPIC_ETAS);
        }
        if !inside_triangle(mu1, mu2, TRIANGLE_TOL) {
            return Err(Error::Domain(format!(
                "moment point ({mu1}, {mu2}) outside the admissible triangle"
            )));
        }
        let (x, y) = match map_mu_to_xy(mu1, mu2) {
            Ok(xy) => xy,
            // singular map only at the isotropic vertex
            Err(_) => return Ok(ISOTROPIC_ETAS),
        };
        let x = x.clamp(-1.0, 1.0);
        let y = y.clamp(-1.0, 1.0);
        let b = &self.blocks[self.block_index(x, y)];
        let (xl, yl) = b.local(x, y);
        let mut scratch = vec![0.0; b.etas.iter().map(|s| s.n1 + 1).max().unwrap()];
        let e1 = b.etas[0].eval_with_scratch(xl, yl, &mut scratch[..b.etas[0].n1 + 1]);
        let e2 = b.etas[1].eval_with_scratch(xl, yl, &mut scratch[..b.etas[1].n1 + 1]);
        let e3 = b.etas[2].eval_with_scratch(xl, yl, &mut scratch[..b.etas[2].n1 + 1]);
        Ok((e1, e2, e3))
    }
}

/// Full closure: diagonalize ascending, look up the `eta` table, assemble
/// the diagonal-frame fourth moment and rotate back.
pub fn close_3d(m_hat: &SecondMoment3, table: &BiaxialClosureTable) -> Result<FourthMoment3> {
    let (vals, u) = eig_sym3(m_hat);
    // near-equal eigenvalues may come back out of order by up to the
    // tie-break threshold; clamp the moment point onto the triangle
    let mu2 = (vals[0] - vals[1]).min(0.0);
    let mu1 = (vals[0] + vals[1]).min((2.0 + mu2) / 3.0);
    let (e1, e2, e3) = table.eval_etas(mu1, mu2)?;
    let mut q = FourthMoment3::zero();
    q.set(0, 0, 0, 0, 0.25 * (e1 + 2.0 * e2 + e3));
    q.set(0, 0, 1, 1, 0.25 * (e1 - e3));
    q.set(1, 1, 1, 1, 0.25 * (e1 - 2.0 * e2 + e3));
    q.set(0, 0, 2, 2, 0.5 * ((mu1 + mu2) - (e1 + e2)));
    q.set(1, 1, 2, 2, 0.5 * ((mu1 - mu2) - (e1 - e2)));
    q.set(2, 2, 2, 2, 1.0 - 2.0 * mu1 + e1);
    Ok(rotate4_3(&q, &u))
}

/// Diagonal of the parameter tensor matching the density convention of
/// the moment integrals: `exp(-m^T B m)` with `B = diag(l1+l2, l1-l2, 0)`.
pub fn b_diag_of(p: &BiaxialParams) -> [f64; 3] {
    [p.lambda1 + p.lambda2, p.lambda1 - p.lambda2, 0.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_isotropic() {
        let p = BiaxialParams { lambda1: 0.0, lambda2: 0.0 };
        let (z, m) = forward_moments_biaxial(&p, 64).unwrap();
        assert!((z - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!((m.mu1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.mu2.abs() < 1e-15);
        assert!((m.eta1 - 8.0 / 15.0).abs() < 1e-15);
        assert!(m.eta2.abs() < 1e-15);
        assert!((m.eta3 - 4.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn forward_frozen_point() {
        // frozen from adaptive quadrature of the integral definitions
        let p = BiaxialParams { lambda1: 3.0, lambda2: 1.0 };
        let (_, m) = forward_moments_biaxial_checked(&p, 128).unwrap();
        assert!((m.mu1 - 0.394_317_152_941_670_2).abs() < 1e-14, "mu1 {}", m.mu1);
        assert!((m.mu2 + 0.115_635_486_377_838_3).abs() < 1e-14, "mu2 {}", m.mu2);
    }

    #[test]
    fn forward_matches_sphere_oracle() {
        for &(l1, l2) in &[(0.5, 0.2), (5.0, 2.0), (20.0, 12.5)] {
            let p = BiaxialParams { lambda1: l1, lambda2: l2 };
            let (_, m) = forward_moments_biaxial(&p, 128).unwrap();
            let (mo, qo) = oracle_moments_sphere(b_diag_of(&p)).unwrap();
            assert!((m.mu1 - (mo.m[0] + mo.m[1])).abs() < 1e-12, "mu1 at ({l1},{l2})");
            assert!((m.mu2 - (mo.m[0] - mo.m[1])).abs() < 1e-12, "mu2 at ({l1},{l2})");
            // eta1 = <sin^4 theta> = q1111 + 2 q1122 + q2222 family
            let e1 = qo.get(0, 0, 0, 0) + 2.0 * qo.get(0, 0, 1, 1) + qo.get(1, 1, 1, 1);
            assert!((m.eta1 - e1).abs() < 1e-12, "eta1 at ({l1},{l2})");
        }
    }

    #[test]
    fn oracle_isotropic_and_odd() {
        let (m, q) = oracle_moments_sphere([0.0; 3]).unwrap();
        for i in 0..3 {
            assert!((m.m[i] - 1.0 / 3.0).abs() < 1e-14);
            assert!((q.q[[0usize, 10, 14][i]] - 0.2).abs() < 1e-14);
        }
        for (i, j, k, l) in [(0, 0, 1, 1), (0, 0, 2, 2), (1, 1, 2, 2)] {
            assert!((q.get(i, j, k, l) - 1.0 / 15.0).abs() < 1e-14);
        }
        // Lemma: odd-index moments vanish
        let (m, q) = oracle_moments_sphere([3.0, 1.0, 0.0]).unwrap();
        for &(i, j, k, l) in crate::tensor::UNIQUE3.iter() {
            let counts = [i, j, k, l];
            let odd = (0..3).any(|ax| counts.iter().filter(|&&c| c == ax).count() % 2 == 1);
            if odd {
                assert!(q.get(i, j, k, l).abs() < 1e-14, "odd component {i}{j}{k}{l}");
            }
        }
        for &off in &[3usize, 4, 5] {
            assert!(m.m[off].abs() < 1e-14);
        }
        assert!(oracle_moments_sphere([300.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn map_corners_and_round_trip() {
        assert!(map_mu_to_xy(2.0 / 3.0, 0.0).is_err());
        let (x, y) = map_mu_to_xy(0.0, 0.0).unwrap();
        assert!((x + 1.0).abs() < 1e-15 && (y + 1.0).abs() < 1e-15);
        let (x, y) = map_mu_to_xy(0.5, -0.5).unwrap();
        assert!((x - 1.0).abs() < 1e-14 && (y + 1.0).abs() < 1e-15);
        for &(m1, m2) in &[(0.3, -0.1), (0.55, -0.2), (0.1, -0.05)] {
            let (x, y) = map_mu_to_xy(m1, m2).unwrap();
            let (b1, b2) = map_xy_to_mu(x, y);
            assert!((b1 - m1).abs() < 1e-15 && (b2 - m2).abs() < 1e-15);
        }
    }

    #[test]
    fn invert_isotropic_and_round_trip() {
        let (p, it) = invert_mu_biaxial(2.0 / 3.0, 0.0, 1e-15).unwrap();
        assert_eq!((p.lambda1, p.lambda2), (0.0, 0.0));
        assert_eq!(it, 0);
        let p0 = BiaxialParams { lambda1: 3.0, lambda2: 1.0 };
        let (_, m) = forward_moments_biaxial(&p0, 128).unwrap();
        let (p, iters) = invert_mu_biaxial(m.mu1, m.mu2, 1e-15).unwrap();
        assert!(iters <= 20, "iterations {iters}");
        let (_, back) = forward_moments_biaxial(&p, 128).unwrap();
        let dist = ((back.mu1 - m.mu1).powi(2) + (back.mu2 - m.mu2).powi(2)).sqrt();
        assert!(dist <= 1e-15, "round-trip distance {dist:e}");
        assert!((p.lambda1 - 3.0).abs() < 1e-9 && (p.lambda2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invert_rejects_outside() {
        assert!(invert_mu_biaxial(0.5, 0.1, 1e-15).is_err());
        assert!(invert_mu_biaxial(0.9, -0.1, 1e-15).is_err());
        assert!(invert_mu_biaxial(0.3, -0.4, 1e-15).is_err());
    }

    #[test]
    fn jacobian_negative_semidefinite() {
        // Symmetric Jacobian from the eta relations has eigenvalues <= 0.
        for &(l1, l2) in &[(0.1, 0.0), (1.0, 0.5), (10.0, 3.0), (40.0, 39.0)] {
            let p = BiaxialParams { lambda1: l1, lambda2: l2 };
            let (_, m) = forward_moments_biaxial(&p, 128).unwrap();
            let j11 = m.mu1 * m.mu1 - m.eta1;
            let j12 = m.mu1 * m.mu2 - m.eta2;
            let j22 = m.mu2 * m.mu2 - m.eta3;
            let tr = j11 + j22;
            let det = j11 * j22 - j12 * j12;
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            let emax = 0.5 * (tr + disc);
            assert!(emax <= 1e-12, "max eigenvalue {emax:e} at ({l1},{l2})");
        }
    }

    #[test]
    fn triangle_containment_of_images() {
        for &(l1, l2) in &[(0.0, 0.0), (2.0, 0.0), (7.0, 7.0), (100.0, 40.0)] {
            let p = BiaxialParams { lambda1: l1, lambda2: l2 };
            let (_, m) = forward_moments_biaxial(&p, 128).unwrap();
            assert!(m.mu2 <= 1e-14, "mu2 = {} at ({l1},{l2})", m.mu2);
            assert!(
                3.0 * m.mu1 - m.mu2 <= 2.0 + 1e-12,
                "3mu1 - mu2 = {} at ({l1},{l2})",
                3.0 * m.mu1 - m.mu2
            );
            assert!(m.mu1 + m.mu2 >= -1e-14);
        }
    }

    // Small-order table shared by the unit tests (built once); residuals
    // are looser than the reference orders on purpose.
    fn tiny_table() -> &'static BiaxialClosureTable {
        use std::sync::OnceLock;
        static TABLE: OnceLock<BiaxialClosureTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let cfg = BiaxialBuildConfig {
                variant: TableVariant::Piecewise,
                orders: Some((12, 12)),
                fit_quad_n: Some(24),
                moment_quad_n: 96,
                newton_tol: 1e-15,
            };
            build_table_biaxial(&cfg).unwrap()
        })
    }

    #[test]
    fn close_isotropic_fixed_point() {
        let t = tiny_table();
        let q = close_3d(&SecondMoment3::isotropic(), &t).unwrap();
        for &(i, j, k, l) in &[(0, 0, 0, 0), (1, 1, 1, 1), (2, 2, 2, 2)] {
            assert!((q.get(i, j, k, l) - 0.2).abs() < 1e-13);
        }
        for &(i, j, k, l) in &[(0, 0, 1, 1), (0, 0, 2, 2), (1, 1, 2, 2)] {
            assert!((q.get(i, j, k, l) - 1.0 / 15.0).abs() < 1e-13);
        }
    }

    #[test]
    fn close_matches_oracle_interior() {
        let t = tiny_table();
        for &(l1, l2) in &[(2.0, 0.7), (8.0, 3.0)] {
            let p = BiaxialParams { lambda1: l1, lambda2: l2 };
            let (mo, qo) = oracle_moments_sphere(b_diag_of(&p)).unwrap();
            let q = close_3d(&SecondMoment3 { m: mo.m }, &t).unwrap();
            for idx in 0..15 {
                assert!(
                    (q.q[idx] - qo.q[idx]).abs() < 1e-9,
                    "tiny-table component {idx} at ({l1},{l2}): {} vs {}",
                    q.q[idx],
                    qo.q[idx]
                );
            }
        }
    }

    #[test]
    fn contraction_identity() {
        let t = tiny_table();
        let m = SecondMoment3::sanitize([0.5, 0.3, 0.2, 0.05, -0.03, 0.02]);
        let q = close_3d(&m, &t).unwrap();
        let c = q.contract();
        for i in 0..6 {
            assert!((c[i] - m.m[i]).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn eval_rejects_outside_triangle() {
        let t = tiny_table();
        assert!(t.eval_etas(0.7, 0.01).is_err());
        assert!(t.eval_etas(2.0 / 3.0, 0.0).is_ok());
        let near = t.eval_etas(2.0 / 3.0 - 1e-9, -1e-12).unwrap();
        assert!((near.0 - 8.0 / 15.0).abs() < 1e-7);
        assert!((near.2 - 4.0 / 15.0).abs() < 1e-7);
    }
}
