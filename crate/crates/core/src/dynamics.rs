//! Demo consumer: the homogeneous second-moment evolution equation closed
//! with the Bingham closure.
//!
//! `dM/dt = (1/De)[-6(M - I/3) + 4 U0 (M.M - M:Q)] + k.M + M.k^T - c k:Q`
//! where `Q` is the closed fourth moment, `k` the velocity gradient, and
//! `c` selects the literal form (`c = 1`) or the trace-preserving form
//! (`c = 2`); with the contraction identity `sum_k Q_ijkk = M_ij`, only the
//! latter conserves `tr M` exactly.

use crate::biaxial::{close_3d, BiaxialClosureTable};
use crate::error::{Error, Result};
use crate::tensor::{eig_sym3, FourthMoment3, SecondMoment3};

/// Flow and interaction parameters.
#[derive(Clone, Copy, Debug)]
pub struct FlowParams {
    /// Deborah number, > 0.
    pub de: f64,
    /// Maier-Saupe interaction strength, >= 0.
    pub u0: f64,
    /// Velocity gradient tensor.
    pub kappa: [[f64; 3]; 3],
}

impl FlowParams {
    pub fn quiescent(de: f64, u0: f64) -> Self {
        Self {
            de,
            u0,
            kappa: [[0.0; 3]; 3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowVariant {
    /// The literal `-k:Q` coupling.
    Paper,
    /// The `-2 k:Q` coupling that conserves the trace.
    TracePreserving,
}

/// Anything that can close second moments into fourth moments.
pub trait MomentClosure: Sync {
    fn close(&self, m: &SecondMoment3) -> Result<FourthMoment3>;
}

impl MomentClosure for BiaxialClosureTable {
    fn close(&self, m: &SecondMoment3) -> Result<FourthMoment3> {
        close_3d(m, self)
    }
}

/// Baseline quadratic closure `Q ~ sym(M (x) M)`: cheap, but violates the
/// contraction identity; kept for contrast with the Bingham closure.
pub struct QuadraticClosure;

impl MomentClosure for QuadraticClosure {
    fn close(&self, m: &SecondMoment3) -> Result<FourthMoment3> {
        let mut q = FourthMoment3::zero();
        for &(i, j, k, l) in crate::tensor::UNIQUE3.iter() {
            let v = (m.get(i, j) * m.get(k, l)
                + m.get(i, k) * m.get(j, l)
                + m.get(i, l) * m.get(j, k))
                / 3.0;
            q.set(i, j, k, l, v);
        }
        Ok(q)
    }
}

fn as_matrix(m: &SecondMoment3) -> [[f64; 3]; 3] {
    [
        [m.m[0], m.m[3], m.m[4]],
        [m.m[3], m.m[1], m.m[5]],
        [m.m[4], m.m[5], m.m[2]],
    ]
}

/// Right-hand side of the closed moment equation, in unique-component
/// order. Runge-Kutta stages drift slightly off the unit-trace manifold,
/// so the closure-coupled interaction bracket `M.M - M:Q` is evaluated on
/// a sanitized copy throughout (which keeps its exact trace cancellation);
/// the relaxation and advection terms use the raw input.
pub fn rhs(
    m: &SecondMoment3,
    p: &FlowParams,
    closure: &dyn MomentClosure,
    variant: FlowVariant,
) -> Result<[f64; 6]> {
    if !(p.de > 0.0) {
        return Err(Error::Domain(format!("Deborah number {} must be > 0", p.de)));
    }
    let m_san = SecondMoment3::sanitize(m.m);
    let q = closure.close(&m_san)?;
    let mm = as_matrix(m);
    let mm_san = as_matrix(&m_san);
    // M.M on the sanitized state
    let mut m2 = [0.0f64; 6];
    let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
    for (c, &(i, j)) in pairs.iter().enumerate() {
        m2[c] = (0..3).map(|k| mm_san[i][k] * mm_san[k][j]).sum();
    }
    let mq = q.contract_with(&mm_san);
    let kq = q.contract_with(&p.kappa);
    let c_kq = match variant {
        FlowVariant::Paper => 1.0,
        FlowVariant::TracePreserving => 2.0,
    };
    let mut out = [0.0f64; 6];
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let eye = if i == j { 1.0 / 3.0 } else { 0.0 };
        let relax = -6.0 * (m.get(i, j) - eye) + 4.0 * p.u0 * (m2[c] - mq[c]);
        let advect: f64 = (0..3)
            .map(|k| p.kappa[i][k] * mm[k][j] + p.kappa[j][k] * mm[k][i])
            .sum();
        out[c] = relax / p.de + advect - c_kq * kq[c];
    }
    Ok(out)
}

/// Integration output: time grid, states and per-step diagnostics.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SecondMoment3>,
    /// Largest eigenvalue of each state.
    pub lambda_max: Vec<f64>,
    /// Scalar order parameter `S = (3/2)(lambda_max - 1/3)`.
    pub order_param: Vec<f64>,
    /// `tr M - 1` before any renormalization.
    pub trace_drift: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    pub variant: FlowVariant,
    /// Re-project each step onto the unit-trace PSD manifold.
    pub renormalize: bool,
}

/// Classical fixed-step fourth-order Runge-Kutta integration with
/// per-step diagnostics and blow-up detection (eigenvalues leaving
/// `[-0.05, 1.05]` before any projection).
pub fn integrate(
    m0: &SecondMoment3,
    p: &FlowParams,
    closure: &dyn MomentClosure,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) {
        return Err(Error::Domain(format!(
            "bad integration window dt={} t_end={}",
            opts.dt, opts.t_end
        )));
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut m = *m0;
    let mut traj = Trajectory::default();
    let record = |t: f64, m: &SecondMoment3, traj: &mut Trajectory| {
        let (vals, _) = eig_sym3(m);
        traj.times.push(t);
        traj.states.push(*m);
        traj.lambda_max.push(vals[2]);
        traj.order_param.push(1.5 * (vals[2] - 1.0 / 3.0));
        traj.trace_drift.push(m.trace() - 1.0);
    };
    record(0.0, &m, &mut traj);
    let axpy = |m: &SecondMoment3, s: f64, d: &[f64; 6]| -> SecondMoment3 {
        let mut out = *m;
        for i in 0..6 {
            out.m[i] += s * d[i];
        }
        out
    };
    for step in 1..=steps {
        let k1 = rhs(&m, p, closure, opts.variant)?;
        let k2 = rhs(&axpy(&m, 0.5 * opts.dt, &k1), p, closure, opts.variant)?;
        let k3 = rhs(&axpy(&m, 0.5 * opts.dt, &k2), p, closure, opts.variant)?;
        let k4 = rhs(&axpy(&m, opts.dt, &k3), p, closure, opts.variant)?;
        for i in 0..6 {
            m.m[i] += opts.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let (vals, _) = eig_sym3(&m);
        if vals[0] < -0.05 || vals[2] > 1.05 {
            return Err(Error::Domain(format!(
                "blow-up at step {step}: eigenvalues {vals:?}"
            )));
        }
        let t = step as f64 * opts.dt;
        record(t, &m, &mut traj);
        if opts.renormalize {
            m = SecondMoment3::sanitize(m.m);
        }
    }
    Ok(traj)
}

/// Residual norm of the right-hand side, used to detect fixed points.
pub fn rhs_norm(
    m: &SecondMoment3,
    p: &FlowParams,
    closure: &dyn MomentClosure,
    variant: FlowVariant,
) -> Result<f64> {
    let d = rhs(m, p, closure, variant)?;
    // Frobenius norm over the full symmetric tensor
    let f2 = d[0] * d[0]
        + d[1] * d[1]
        + d[2] * d[2]
        + 2.0 * (d[3] * d[3] + d[4] * d[4] + d[5] * d[5]);
    Ok(f2.sqrt())
}
