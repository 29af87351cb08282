//! Gauss-Legendre quadrature rules and Legendre series fitting/evaluation.
//!
//! The fitting kernels are generic over the scalar type: the table builders
//! run them in double-double, the runtime uses plain doubles. All
//! accumulations run in a fixed order so repeated builds are bit-identical.

use crate::dd::{CompensatedSum, DoubleDouble, Real};
use crate::error::{Error, Result};

pub const MAX_RULE_ORDER: usize = 2048;

/// Nodes and weights of an N-point Gauss-Legendre rule on [-1, 1].
/// Nodes are strictly increasing and symmetric about zero by construction.
#[derive(Clone, Debug)]
pub struct Rule<S> {
    pub nodes: Vec<S>,
    pub weights: Vec<S>,
}

pub type QuadratureRule = Rule<f64>;

impl<S: Real> Rule<S> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Legendre polynomial value and derivative `(L_n(x), L_n'(x))` by the
/// joint three-term recurrence.
pub fn legendre_pair<S: Real>(n: usize, x: S) -> (S, S) {
    if n == 0 {
        return (S::one(), S::zero());
    }
    let mut p_prev = S::one();
    let mut p = x;
    let mut dp_prev = S::zero();
    let mut dp = S::one();
    for k in 1..n {
        let kf = k as f64;
        let p_next =
            (S::from_f64(2.0 * kf + 1.0) * x * p - S::from_f64(kf) * p_prev) / S::from_f64(kf + 1.0);
        let dp_next = dp_prev + S::from_f64(2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// N-point Gauss-Legendre rule: nodes are the roots of `L_N` found by Newton
/// iteration from Chebyshev initial guesses, weights `2/((1-x^2) L_N'(x)^2)`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_RULE_ORDER {
        return Err(Error::Domain(format!(
            "quadrature order {n} outside 1..={MAX_RULE_ORDER}"
        )));
    }
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let half = n / 2;
    for i in 0..half {
        // i-th root from the upper end
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        debug_assert!(converged, "Gauss-Legendre Newton stalled at n={n}, i={i}");
        let (_, dp) = legendre_pair(n, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre_pair(n, 0.0);
        nodes[half] = 0.0;
        weights[half] = 2.0 / (dp * dp);
    }
    Ok(Rule { nodes, weights })
}

/// Double-double refinement of a Gauss-Legendre rule: three extra Newton
/// steps per node in compensated arithmetic. Used by the table builders so
/// node placement error does not cap the fit residuals.
pub fn gauss_legendre_dd(n: usize) -> Result<Rule<DoubleDouble>> {
    type Dd = DoubleDouble;
    let base = gauss_legendre(n)?;
    let mut nodes = vec![Dd::ZERO; n];
    let mut weights = vec![Dd::ZERO; n];
    let half = n / 2;
    for i in 0..half {
        let mut z = Dd::from_f64(base.nodes[n - 1 - i]);
        for _ in 0..3 {
            let (p, dp) = legendre_pair(n, z);
            z = z - p / dp;
        }
        let (_, dp) = legendre_pair(n, z);
        let w = Dd::from_f64(2.0) / ((Dd::ONE - z * z) * dp * dp);
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre_pair(n, Dd::ZERO);
        weights[half] = Dd::from_f64(2.0) / (dp * dp);
    }
    Ok(Rule { nodes, weights })
}

/// Clenshaw backward recurrence for `sum_k coeffs[k] L_k(x)`.
pub fn clenshaw<S: Real>(coeffs: &[S], x: S) -> S {
    let n = coeffs.len();
    if n == 0 {
        return S::zero();
    }
    let mut u1 = S::zero();
    let mut u2 = S::zero();
    for k in (1..n).rev() {
        let kf = k as f64;
        let u = coeffs[k] + S::from_f64((2.0 * kf + 1.0) / (kf + 1.0)) * x * u1
            - S::from_f64((kf + 1.0) / (kf + 2.0)) * u2;
        u2 = u1;
        u1 = u;
    }
    coeffs[0] + x * u1 - S::from_f64(0.5) * u2
}

/// Tolerance (in domain units) within which slightly out-of-range inputs
/// are clamped rather than rejected.
pub const DOMAIN_CLAMP_TOL: f64 = 1e-12;

/// A truncated Legendre expansion on an interval `[lo, hi]`, evaluated
/// through the affine map onto [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreSeries1D {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl LegendreSeries1D {
    pub fn eval(&self, u: f64) -> Result<f64> {
        if u < self.lo - DOMAIN_CLAMP_TOL || u > self.hi + DOMAIN_CLAMP_TOL {
            return Err(Error::Domain(format!(
                "series argument {u} outside [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(self.eval_clamped(u))
    }

    /// Evaluate with silent clamping onto the domain.
    pub fn eval_clamped(&self, u: f64) -> f64 {
        let x = ((2.0 * u - self.lo - self.hi) / (self.hi - self.lo)).clamp(-1.0, 1.0);
        clenshaw(&self.coeffs, x)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// A truncated tensor-product Legendre expansion on [-1,1]^2 with
/// coefficients `b[s][t]` stored row-major, `s <= n1`, `t <= n2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LegendreSeries2D {
    pub n1: usize,
    pub n2: usize,
    pub coeffs: Vec<f64>,
}

impl LegendreSeries2D {
    pub fn new(n1: usize, n2: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != (n1 + 1) * (n2 + 1) {
            return Err(Error::Domain(format!(
                "2D series shape mismatch: {} coefficients for ({}+1)x({}+1)",
                coeffs.len(),
                n1,
                n2
            )));
        }
        Ok(Self { n1, n2, coeffs })
    }

    /// Tensor Clenshaw evaluation; `x`, `y` are assumed inside [-1,1]
    /// (callers clamp at the domain boundary).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut scratch = vec![0.0; self.n1 + 1];
        self.eval_with_scratch(x, y, &mut scratch)
    }

    /// Allocation-free variant for batch evaluation.
    pub fn eval_with_scratch(&self, x: f64, y: f64, scratch: &mut [f64]) -> f64 {
        debug_assert_eq!(scratch.len(), self.n1 + 1);
        let w = self.n2 + 1;
        for s in 0..=self.n1 {
            scratch[s] = clenshaw(&self.coeffs[s * w..(s + 1) * w], y);
        }
        clenshaw(scratch, x)
    }
}

/// Discrete Legendre projection `b_k = (2k+1)/2 sum_j f_j L_k(x_j) w_j`
/// for `k <= n_fit`, requiring `n_fit < N`.
pub fn fit_legendre_1d<S: Real>(values: &[S], rule: &Rule<S>, n_fit: usize) -> Result<Vec<S>> {
    if values.len() != rule.len() {
        return Err(Error::Domain(format!(
            "fit shape mismatch: {} samples for {}-point rule",
            values.len(),
            rule.len()
        )));
    }
    if n_fit >= rule.len() {
        return Err(Error::Domain(format!(
            "fit degree {n_fit} must be below quadrature order {}",
            rule.len()
        )));
    }
    let mut acc: Vec<CompensatedSum<S>> = (0..=n_fit).map(|_| CompensatedSum::new()).collect();
    for j in 0..rule.len() {
        let x = rule.nodes[j];
        let fw = values[j] * rule.weights[j];
        let mut p_prev = S::one();
        let mut p = x;
        acc[0].add(fw);
        if n_fit >= 1 {
            acc[1].add(fw * p);
        }
        for k in 2..=n_fit {
            let kf = (k - 1) as f64;
            let p_next = (S::from_f64(2.0 * kf + 1.0) * x * p - S::from_f64(kf) * p_prev)
                / S::from_f64(kf + 1.0);
            p_prev = p;
            p = p_next;
            acc[k].add(fw * p);
        }
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, a)| a.value() * S::from_f64((2.0 * k as f64 + 1.0) / 2.0))
        .collect())
}

/// Tensor-product projection
/// `b_st = 1/(gamma_s gamma_t) sum_ij f_ij L_s(x_i) L_t(y_j) w_i w_j`,
/// computed in two passes. `values` is row-major over the tensor grid
/// (`i * N2 + j`). Returns row-major coefficients `s * (n2+1) + t`.
pub fn fit_legendre_2d<S: Real>(
    values: &[S],
    rule_x: &Rule<S>,
    rule_y: &Rule<S>,
    n1: usize,
    n2: usize,
) -> Result<Vec<S>> {
    let (nx, ny) = (rule_x.len(), rule_y.len());
    if values.len() != nx * ny {
        return Err(Error::Domain(format!(
            "fit shape mismatch: {} samples for {}x{} grid",
            values.len(),
            nx,
            ny
        )));
    }
    if n1 >= nx || n2 >= ny {
        return Err(Error::Domain(format!(
            "fit degrees ({n1},{n2}) must be below quadrature orders ({nx},{ny})"
        )));
    }
    // pass 1: contract the y direction: T[i][t] = sum_j f_ij L_t(y_j) w_j
    let mut t_mat = vec![S::zero(); nx * (n2 + 1)];
    for i in 0..nx {
        let row = &values[i * ny..(i + 1) * ny];
        let fitted = fit_raw_projection(row, rule_y, n2);
        t_mat[i * (n2 + 1)..(i + 1) * (n2 + 1)].copy_from_slice(&fitted);
    }
    // pass 2: contract the x direction and normalize
    let mut out = vec![S::zero(); (n1 + 1) * (n2 + 1)];
    for t in 0..=n2 {
        let col: Vec<S> = (0..nx).map(|i| t_mat[i * (n2 + 1) + t]).collect();
        let fitted = fit_raw_projection(&col, rule_x, n1);
        for s in 0..=n1 {
            let norm = S::from_f64((2.0 * s as f64 + 1.0) / 2.0)
                * S::from_f64((2.0 * t as f64 + 1.0) / 2.0);
            out[s * (n2 + 1) + t] = fitted[s] * norm;
        }
    }
    Ok(out)
}

/// Unnormalized projection `sum_j f_j L_k(x_j) w_j`, `k <= n_fit`.
fn fit_raw_projection<S: Real>(values: &[S], rule: &Rule<S>, n_fit: usize) -> Vec<S> {
    let mut acc: Vec<CompensatedSum<S>> = (0..=n_fit).map(|_| CompensatedSum::new()).collect();
    for j in 0..rule.len() {
        let x = rule.nodes[j];
        let fw = values[j] * rule.weights[j];
        let mut p_prev = S::one();
        let mut p = x;
        acc[0].add(fw);
        if n_fit >= 1 {
            acc[1].add(fw * p);
        }
        for k in 2..=n_fit {
            let kf = (k - 1) as f64;
            let p_next = (S::from_f64(2.0 * kf + 1.0) * x * p - S::from_f64(kf) * p_prev)
                / S::from_f64(kf + 1.0);
            p_prev = p;
            p = p_next;
            acc[k].add(fw * p);
        }
    }
    acc.iter().map(|a| a.value()).collect()
}

/// One piece of a 1D closure table: a Legendre expansion on
/// `[series.lo, series.hi]` plus the builder's estimated L2 residual.
#[derive(Clone, Debug, PartialEq)]
pub struct TablePiece {
    pub series: LegendreSeries1D,
    pub residual: f64,
}

/// Shared 1D table-building pipeline: for every piece `(lo, hi, n_l)` of
/// `plan`, sample `eval` at the double-double Gauss nodes mapped onto the
/// piece (in parallel, gathered in node order), project onto Legendre
/// polynomials with `fit_margin` extra terms, record the tail residual and
/// round the retained coefficients to doubles. Returns the pieces and the
/// largest per-node iteration count reported by `eval`.
pub(crate) fn project_pieces_1d<F>(
    plan: &[(f64, f64, usize)],
    rule: &Rule<DoubleDouble>,
    fit_margin: usize,
    eval: F,
) -> Result<(Vec<TablePiece>, usize)>
where
    F: Fn(DoubleDouble) -> Result<(DoubleDouble, usize)> + Sync,
{
    use rayon::prelude::*;
    type Dd = DoubleDouble;
    let mut pieces = Vec::with_capacity(plan.len());
    let mut max_iters = 0usize;
    for &(lo, hi, n_l) in plan {
        let lo_dd = Dd::from_f64(lo);
        let halfw = (Dd::from_f64(hi) - lo_dd) * Dd::from_f64(0.5);
        let samples: Vec<(Dd, usize)> = (0..rule.len())
            .into_par_iter()
            .map(|j| -> Result<(Dd, usize)> {
                let u = lo_dd + halfw * (rule.nodes[j] + Dd::ONE);
                eval(u).map_err(|e| Error::Domain(format!("piece [{lo}, {hi}], node {j}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        max_iters = max_iters.max(samples.iter().map(|s| s.1).max().unwrap_or(0));
        let values: Vec<Dd> = samples.iter().map(|s| s.0).collect();
        let coeffs_ext = fit_legendre_1d(&values, rule, n_l + fit_margin)?;
        let residual = tail_residual_1d(&coeffs_ext, n_l);
        let coeffs: Vec<f64> = coeffs_ext[..=n_l].iter().map(|c| c.to_f64()).collect();
        pieces.push(TablePiece {
            series: LegendreSeries1D { lo, hi, coeffs },
            residual,
        });
    }
    Ok((pieces, max_iters))
}

/// Estimated L2 truncation error of keeping terms `0..=keep` out of an
/// over-resolved fit: `sqrt(sum_{k>keep} b_k^2 gamma_k)`, `gamma_k = 2/(2k+1)`.
pub fn tail_residual_1d<S: Real>(coeffs: &[S], keep: usize) -> f64 {
    let mut acc = 0.0f64;
    for (k, b) in coeffs.iter().enumerate().skip(keep + 1) {
        let bk = b.to_f64();
        acc += bk * bk * 2.0 / (2.0 * k as f64 + 1.0);
    }
    acc.sqrt()
}

/// 2D analogue over the index set outside the kept `(keep1, keep2)` box.
pub fn tail_residual_2d<S: Real>(
    coeffs: &[S],
    n1: usize,
    n2: usize,
    keep1: usize,
    keep2: usize,
) -> f64 {
    let mut acc = 0.0f64;
    for s in 0..=n1 {
        for t in 0..=n2 {
            if s <= keep1 && t <= keep2 {
                continue;
            }
            let b = coeffs[s * (n2 + 1) + t].to_f64();
            let g = (2.0 / (2.0 * s as f64 + 1.0)) * (2.0 / (2.0 * t as f64 + 1.0));
            acc += b * b * g;
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rule_n1_and_n2() {
        let r1 = gauss_legendre(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert_eq!(r1.weights, vec![2.0]);
        let r2 = gauss_legendre(2).unwrap();
        let s3 = 1.0 / 3f64.sqrt();
        assert!((r2.nodes[0] + s3).abs() < 1e-15);
        assert!((r2.nodes[1] - s3).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-15);
        assert!((r2.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rule_bounds() {
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(MAX_RULE_ORDER + 1).is_err());
    }

    #[test]
    fn rule_symmetry_and_weight_sum() {
        for &n in &[3usize, 16, 63, 200] {
            let r = gauss_legendre(n).unwrap();
            for j in 0..n {
                assert_eq!(r.nodes[j], -r.nodes[n - 1 - j], "node symmetry n={n}");
                assert_eq!(r.weights[j], r.weights[n - 1 - j], "weight symmetry n={n}");
            }
            for j in 1..n {
                assert!(r.nodes[j] > r.nodes[j - 1], "nodes not increasing n={n}");
            }
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-14, "weight sum n={n}: {sum}");
        }
    }

    #[test]
    fn quadrature_exactness_monomials() {
        // int_-1^1 x^k dx reproduced to 1e-14 for k <= 2N-1
        let r = gauss_legendre(64).unwrap();
        let x6: f64 = (0..64).map(|j| r.weights[j] * r.nodes[j].powi(6)).sum();
        assert!((x6 - 2.0 / 7.0).abs() < 1e-15);
        for k in 0..=127usize {
            let got: f64 = (0..64).map(|j| r.weights[j] * r.nodes[j].powi(k as i32)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "monomial degree {k}");
        }
    }

    #[test]
    fn dd_rule_refines_residual() {
        let r = gauss_legendre_dd(32).unwrap();
        for j in 0..32 {
            let (p, _) = legendre_pair(32, r.nodes[j]);
            assert!(p.abs().hi < 1e-28, "dd node residual {j}: {:e}", p.hi);
        }
        let mut sum = crate::dd::DoubleDouble::ZERO;
        for w in &r.weights {
            sum = sum + *w;
        }
        assert!((sum.hi - 2.0).abs() < 1e-28);
    }

    #[test]
    fn clenshaw_trivial() {
        assert_eq!(clenshaw(&[1.0], 0.7), 1.0);
        assert!((clenshaw(&[0.0, 1.0], 0.0) - 0.0).abs() < 1e-16);
        // x^2 = 1/3 + (2/3) L2(x)
        for &x in &[-1.0, -0.3, 0.0, 0.5, 1.0] {
            let v = clenshaw(&[1.0 / 3.0, 0.0, 2.0 / 3.0], x);
            assert!((v - x * x).abs() < 1e-15, "x={x}");
        }
    }

    #[test]
    fn series_domain_and_clamp() {
        let s = LegendreSeries1D {
            lo: 0.0,
            hi: 1.0,
            coeffs: vec![1.0 / 3.0, 0.0, 2.0 / 3.0],
        };
        assert!(s.eval(0.5).is_ok());
        assert!(s.eval(1.0 + 5e-13).is_ok()); // inside clamp tolerance
        assert!(s.eval(1.0 + 1e-11).is_err());
        assert!(s.eval(-1e-11).is_err());
        // constant series
        let c = LegendreSeries1D {
            lo: -2.0,
            hi: 3.0,
            coeffs: vec![1.0],
        };
        assert_eq!(c.eval(0.3).unwrap(), 1.0);
        // L1 at the domain midpoint is zero
        let l1 = LegendreSeries1D {
            lo: 2.0,
            hi: 4.0,
            coeffs: vec![0.0, 1.0],
        };
        assert!(l1.eval(3.0).unwrap().abs() < 1e-16);
    }

    type Dd = crate::dd::DoubleDouble;

    /// Spec-grade tolerances hold on the builder path (double-double
    /// nodes and accumulation); the plain-double path is checked
    /// separately at its realistic few-eps level.
    #[test]
    fn fit_constant_and_orthogonality() {
        let rule = gauss_legendre_dd(24).unwrap();
        let ones = vec![Dd::ONE; 24];
        let b = fit_legendre_1d(&ones, &rule, 10).unwrap();
        assert!((b[0].to_f64() - 1.0).abs() < 1e-16);
        for k in 1..=10 {
            assert!(b[k].to_f64().abs() <= 1e-15, "b[{k}]={:e}", b[k].to_f64());
        }
        // f = L3 picks out exactly b3
        let l3: Vec<Dd> = rule
            .nodes
            .iter()
            .map(|&x| Dd::from_f64(0.5) * (Dd::from_f64(5.0) * x * x * x - Dd::from_f64(3.0) * x))
            .collect();
        let b = fit_legendre_1d(&l3, &rule, 8).unwrap();
        for k in 0..=8 {
            let want = if k == 3 { 1.0 } else { 0.0 };
            assert!((b[k].to_f64() - want).abs() < 1e-15, "b[{k}]");
        }
    }

    #[test]
    fn fit_x_squared_analytic() {
        let rule = gauss_legendre_dd(16).unwrap();
        let vals: Vec<Dd> = rule.nodes.iter().map(|&x| x * x).collect();
        let b = fit_legendre_1d(&vals, &rule, 2).unwrap();
        assert!((b[0].to_f64() - 1.0 / 3.0).abs() < 1e-15);
        assert!(b[1].to_f64().abs() < 1e-16);
        assert!((b[2].to_f64() - 2.0 / 3.0).abs() < 1e-15);
        // plain-double fit of the same function at its own noise level
        let rule = gauss_legendre(16).unwrap();
        let vals: Vec<f64> = rule.nodes.iter().map(|&x| x * x).collect();
        let b = fit_legendre_1d(&vals, &rule, 2).unwrap();
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((b[2] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn fit_exponential_spectral() {
        let rule = gauss_legendre_dd(40).unwrap();
        let vals: Vec<Dd> = rule.nodes.iter().map(|x| x.exp()).collect();
        let b = fit_legendre_1d(&vals, &rule, 20).unwrap();
        let mut max_err = 0.0f64;
        for i in 0..1000 {
            let x = Dd::from_f64(-1.0 + 2.0 * i as f64 / 999.0);
            let err = (clenshaw(&b, x) - x.exp()).abs().to_f64();
            max_err = max_err.max(err);
        }
        assert!(max_err <= 1e-15, "max error {max_err:e}");
        // full double pipeline stays within a few eps of that
        let b64: Vec<f64> = b.iter().map(|c| c.to_f64()).collect();
        let mut max_err = 0.0f64;
        for i in 0..1000 {
            let x = -1.0 + 2.0 * i as f64 / 999.0;
            max_err = max_err.max((clenshaw(&b64, x) - x.exp()).abs());
        }
        assert!(max_err <= 1e-14, "f64 pipeline max error {max_err:e}");
    }

    #[test]
    fn fit_shape_errors() {
        let rule = gauss_legendre(8).unwrap();
        assert!(fit_legendre_1d(&[1.0; 7], &rule, 3).is_err());
        assert!(fit_legendre_1d(&[1.0; 8], &rule, 8).is_err());
        assert!(LegendreSeries2D::new(2, 2, vec![0.0; 8]).is_err());
    }

    #[test]
    fn fit_2d_xy_and_separable() {
        // f(x,y) = x*y has only the b11 = 1 coefficient
        let rx_dd = gauss_legendre_dd(12).unwrap();
        let ry_dd = gauss_legendre_dd(10).unwrap();
        let vals: Vec<Dd> = rx_dd
            .nodes
            .iter()
            .flat_map(|&x| ry_dd.nodes.iter().map(move |&y| x * y))
            .collect();
        let b = fit_legendre_2d(&vals, &rx_dd, &ry_dd, 3, 3).unwrap();
        for s in 0..=3 {
            for t in 0..=3 {
                let want = if (s, t) == (1, 1) { 1.0 } else { 0.0 };
                assert!((b[s * 4 + t].to_f64() - want).abs() < 1e-15, "b[{s}][{t}]");
            }
        }
        let rx = gauss_legendre(12).unwrap();
        let ry = gauss_legendre(10).unwrap();
        // separable f(x)g(y): 2D fit equals tensor product of 1D fits
        let f = |x: f64| (1.2 * x).exp();
        let g = |y: f64| (y * y + 0.5).sin();
        let vals: Vec<f64> = rx
            .nodes
            .iter()
            .flat_map(|&x| ry.nodes.iter().map(move |&y| f(x) * g(y)))
            .collect();
        let b2 = fit_legendre_2d(&vals, &rx, &ry, 7, 7).unwrap();
        let fx: Vec<f64> = rx.nodes.iter().map(|&x| f(x)).collect();
        let gy: Vec<f64> = ry.nodes.iter().map(|&y| g(y)).collect();
        let bf = fit_legendre_1d(&fx, &rx, 7).unwrap();
        let bg = fit_legendre_1d(&gy, &ry, 7).unwrap();
        for s in 0..=7 {
            for t in 0..=7 {
                let got = b2[s * 8 + t];
                let want = bf[s] * bg[t];
                assert!((got - want).abs() < 1e-14, "separable b[{s}][{t}]");
            }
        }
        // evaluation agrees with the product of 1D evaluations
        let series = LegendreSeries2D::new(7, 7, b2).unwrap();
        for &(x, y) in &[(0.3, -0.6), (-0.9, 0.1)] {
            let got = series.eval(x, y);
            let want = clenshaw(&bf, x) * clenshaw(&bg, y);
            assert!((got - want).abs() < 1e-14);
        }
    }

    proptest! {
        /// Fitting an already-fitted series reproduces its coefficients
        /// (the discrete projection is a projection); spec tolerance on
        /// the builder-grade path, few-eps on the double path.
        #[test]
        fn fit_is_projection(coeffs in proptest::collection::vec(-1.0f64..1.0, 1..12)) {
            let n = coeffs.len() - 1;
            let rule_dd = gauss_legendre_dd(24).unwrap();
            let coeffs_dd: Vec<Dd> = coeffs.iter().map(|&c| Dd::from_f64(c)).collect();
            let vals: Vec<Dd> = rule_dd.nodes.iter().map(|&x| clenshaw(&coeffs_dd, x)).collect();
            let b = fit_legendre_1d(&vals, &rule_dd, n).unwrap();
            for k in 0..=n {
                prop_assert!((b[k].to_f64() - coeffs[k]).abs() < 1e-15,
                    "k={} got={} want={}", k, b[k].to_f64(), coeffs[k]);
            }
            let rule = gauss_legendre(24).unwrap();
            let vals: Vec<f64> = rule.nodes.iter().map(|&x| clenshaw(&coeffs, x)).collect();
            let b = fit_legendre_1d(&vals, &rule, n).unwrap();
            for k in 0..=n {
                prop_assert!((b[k] - coeffs[k]).abs() < 1e-14,
                    "f64 k={} got={} want={}", k, b[k], coeffs[k]);
            }
        }
    }

    #[test]
    fn tail_residual_basics() {
        let coeffs = [1.0, 0.5, 0.0, 1e-8, 1e-9];
        let r = tail_residual_1d(&coeffs, 2);
        let want = ((1e-8f64).powi(2) * 2.0 / 7.0 + (1e-9f64).powi(2) * 2.0 / 9.0).sqrt();
        assert!((r - want).abs() < 1e-24);
        assert_eq!(tail_residual_1d(&coeffs, 4), 0.0);
    }
}
