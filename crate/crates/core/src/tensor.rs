//! Moment tensor containers, symmetric 2x2/3x3 eigendecomposition and
//! fourth-order tensor rotation.
//!
//! Second moments are stored by unique components with unit trace; fourth
//! moments by the unique components under full index symmetry (5 in 2D,
//! 15 in 3D), so symmetry is exact by construction.

use crate::error::{Error, Result};

/// Tolerance for trace / eigenvalue feasibility checks on inputs.
pub const FEASIBILITY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// second moments
// ---------------------------------------------------------------------------

/// Symmetric 2x2 second moment with trace 1: `m22 = 1 - m11`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondMoment2 {
    pub m11: f64,
    pub m12: f64,
}

impl SecondMoment2 {
    pub fn new(m11: f64, m12: f64) -> Result<Self> {
        let m = Self { m11, m12 };
        let (l1, l2, _) = eig_sym2(&m);
        if l1 > 1.0 + FEASIBILITY_TOL || l2 < -FEASIBILITY_TOL {
            return Err(Error::Domain(format!(
                "second moment eigenvalues ({l1}, {l2}) outside [0, 1]"
            )));
        }
        Ok(m)
    }

    /// Accepts slightly infeasible input: clips eigenvalues to [0, 1] and
    /// renormalizes the trace when violations exceed the tolerance.
    pub fn sanitize(m11: f64, m12: f64, m22: f64) -> Self {
        let tr = m11 + m22;
        let (a, b) = if tr == 1.0 { (m11, m12) } else { (m11 / tr, m12 / tr) };
        let m = Self { m11: a, m12: b };
        let (l1, l2, u) = eig_sym2(&m);
        if l1 <= 1.0 + FEASIBILITY_TOL && l2 >= -FEASIBILITY_TOL {
            return m;
        }
        let c1 = l1.clamp(0.0, 1.0);
        let c2 = l2.clamp(0.0, 1.0);
        let s = c1 + c2;
        let (c1, c2) = (c1 / s, c2 / s);
        // reconstruct U diag(c) U^T
        let m11 = c1 * u.m[0][0] * u.m[0][0] + c2 * u.m[0][1] * u.m[0][1];
        let m12 = c1 * u.m[0][0] * u.m[1][0] + c2 * u.m[0][1] * u.m[1][1];
        Self { m11, m12 }
    }

    pub fn m22(&self) -> f64 {
        1.0 - self.m11
    }

    pub fn isotropic() -> Self {
        Self { m11: 0.5, m12: 0.0 }
    }
}

/// Symmetric 3x3 second moment with trace 1.
/// Component order: `m11, m22, m33, m12, m13, m23`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondMoment3 {
    pub m: [f64; 6],
}

impl SecondMoment3 {
    pub fn new(m: [f64; 6]) -> Result<Self> {
        let tr = m[0] + m[1] + m[2];
        if (tr - 1.0).abs() > FEASIBILITY_TOL {
            return Err(Error::Domain(format!("second moment trace {tr} != 1")));
        }
        let out = Self { m };
        let (vals, _) = eig_sym3(&out);
        if vals[0] < -FEASIBILITY_TOL || vals[2] > 1.0 + FEASIBILITY_TOL {
            return Err(Error::Domain(format!(
                "second moment eigenvalues {vals:?} outside [0, 1]"
            )));
        }
        Ok(out)
    }

    /// Rescales the trace to 1 and clips eigenvalues to [0, 1] when the
    /// input is more than marginally infeasible.
    pub fn sanitize(m: [f64; 6]) -> Self {
        let tr = m[0] + m[1] + m[2];
        let mut s = if tr == 1.0 {
            Self { m }
        } else {
            Self {
                m: [
                    m[0] / tr,
                    m[1] / tr,
                    m[2] / tr,
                    m[3] / tr,
                    m[4] / tr,
                    m[5] / tr,
                ],
            }
        };
        let (vals, u) = eig_sym3(&s);
        if vals[0] >= -FEASIBILITY_TOL && vals[2] <= 1.0 + FEASIBILITY_TOL {
            return s;
        }
        let mut c = [0.0; 3];
        for i in 0..3 {
            c[i] = vals[i].clamp(0.0, 1.0);
        }
        let sum: f64 = c.iter().sum();
        for ci in &mut c {
            *ci /= sum;
        }
        s = Self::from_eigensystem(&c, &u);
        s
    }

    /// `U diag(vals) U^T` assembled back into unique components.
    pub fn from_eigensystem(vals: &[f64; 3], u: &Rotation3) -> Self {
        let e = |i: usize, j: usize| -> f64 {
            (0..3).map(|k| vals[k] * u.m[i][k] * u.m[j][k]).sum()
        };
        Self {
            m: [e(0, 0), e(1, 1), e(2, 2), e(0, 1), e(0, 2), e(1, 2)],
        }
    }

    pub fn isotropic() -> Self {
        let t = 1.0 / 3.0;
        Self {
            m: [t, t, t, 0.0, 0.0, 0.0],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.m[0],
            (1, 1) => self.m[1],
            (2, 2) => self.m[2],
            (0, 1) => self.m[3],
            (0, 2) => self.m[4],
            (1, 2) => self.m[5],
            _ => unreachable!(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.m[0] + self.m[1] + self.m[2]
    }

    /// Conjugation `U M U^T`.
    pub fn conjugate(&self, u: &Rotation3) -> Self {
        let e = |i: usize, j: usize| -> f64 {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += u.m[i][a] * u.m[j][b] * self.get(a, b);
                }
            }
            acc
        };
        Self {
            m: [e(0, 0), e(1, 1), e(2, 2), e(0, 1), e(0, 2), e(1, 2)],
        }
    }
}

// ---------------------------------------------------------------------------
// fourth moments
// ---------------------------------------------------------------------------

/// Fully symmetric rank-4 tensor in 2D: unique components in the order
/// `q1111, q1112, q1122, q1222, q2222`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourthMoment2 {
    pub q: [f64; 5],
}

impl FourthMoment2 {
    pub fn zero() -> Self {
        Self { q: [0.0; 5] }
    }

    fn idx(i: usize, j: usize, k: usize, l: usize) -> usize {
        // number of indices equal to 1 (0-based index "1" = second axis)
        i + j + k + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.q[Self::idx(i, j, k, l)]
    }

    /// `sum_k Q_{ijkk}` as `(c11, c12, c22)`.
    pub fn contract(&self) -> (f64, f64, f64) {
        (
            self.get(0, 0, 0, 0) + self.get(0, 0, 1, 1),
            self.get(0, 1, 0, 0) + self.get(0, 1, 1, 1),
            self.get(1, 1, 0, 0) + self.get(1, 1, 1, 1),
        )
    }
}

/// Fully symmetric rank-4 tensor in 3D: 15 unique components ordered by
/// ascending sorted index multisets:
/// `1111 1112 1113 1122 1123 1133 1222 1223 1233 1333 2222 2223 2233 2333 3333`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourthMoment3 {
    pub q: [f64; 15],
}

impl FourthMoment3 {
    pub fn zero() -> Self {
        Self { q: [0.0; 15] }
    }

    pub fn idx(i: usize, j: usize, k: usize, l: usize) -> usize {
        let mut s = [i, j, k, l];
        s.sort_unstable();
        match s {
            [0, 0, 0, 0] => 0,
            [0, 0, 0, 1] => 1,
            [0, 0, 0, 2] => 2,
            [0, 0, 1, 1] => 3,
            [0, 0, 1, 2] => 4,
            [0, 0, 2, 2] => 5,
            [0, 1, 1, 1] => 6,
            [0, 1, 1, 2] => 7,
            [0, 1, 2, 2] => 8,
            [0, 2, 2, 2] => 9,
            [1, 1, 1, 1] => 10,
            [1, 1, 1, 2] => 11,
            [1, 1, 2, 2] => 12,
            [1, 2, 2, 2] => 13,
            [2, 2, 2, 2] => 14,
            _ => unreachable!(),
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.q[Self::idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.q[Self::idx(i, j, k, l)] = v;
    }

    /// `sum_k Q_{ijkk}` in second-moment component order.
    pub fn contract(&self) -> [f64; 6] {
        let c = |i: usize, j: usize| -> f64 {
            self.get(i, j, 0, 0) + self.get(i, j, 1, 1) + self.get(i, j, 2, 2)
        };
        [c(0, 0), c(1, 1), c(2, 2), c(0, 1), c(0, 2), c(1, 2)]
    }

    /// `(A : Q)_{ij} = sum_{kl} A_{kl} Q_{klij}` for a general 3x3 matrix.
    pub fn contract_with(&self, a: &[[f64; 3]; 3]) -> [f64; 6] {
        let e = |i: usize, j: usize| -> f64 {
            let mut acc = 0.0;
            for k in 0..3 {
                for l in 0..3 {
                    acc += a[k][l] * self.get(k, l, i, j);
                }
            }
            acc
        };
        [e(0, 0), e(1, 1), e(2, 2), e(0, 1), e(0, 2), e(1, 2)]
    }
}

// ---------------------------------------------------------------------------
// rotations
// ---------------------------------------------------------------------------

/// Orthogonal 2x2 matrix whose columns are eigenvectors; `M_hat = U D U^T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation2 {
    pub m: [[f64; 2]; 2],
}

impl Rotation2 {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: [[self.m[0][0], self.m[1][0]], [self.m[0][1], self.m[1][1]]],
        }
    }
}

/// Orthogonal 3x3 matrix whose columns are eigenvectors; `M_hat = U D U^T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3 {
    pub m: [[f64; 3]; 3],
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = self.m[j][i];
            }
        }
        Self { m: t }
    }

    pub fn column(&self, k: usize) -> [f64; 3] {
        [self.m[0][k], self.m[1][k], self.m[2][k]]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Max deviation of `U^T U` from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|r| self.m[r][a] * self.m[r][b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// eigendecomposition
// ---------------------------------------------------------------------------

/// Closed-form eigendecomposition of a symmetric trace-1 2x2 matrix.
/// Returns `(l1 >= l2, U)` with `U^T M U = diag(l1, l2)`.
pub fn eig_sym2(m: &SecondMoment2) -> (f64, f64, Rotation2) {
    let a = m.m11;
    let b = m.m12;
    if b == 0.0 {
        let (l1, l2) = (a.max(1.0 - a), a.min(1.0 - a));
        let u = if a >= 0.5 {
            Rotation2::identity()
        } else {
            Rotation2 {
                m: [[0.0, 1.0], [1.0, 0.0]],
            }
        };
        return (l1, l2, u);
    }
    let t = 2.0 * a - 1.0;
    let disc = (t * t + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (1.0 + disc);
    let l2 = 0.5 * (1.0 - disc);
    // eigenvector components l_i - a, rewritten to avoid the cancellation
    // when a is close to an eigenvalue: (disc - |t|)/2 = 2 b^2 / (disc + |t|)
    let (d1, d2) = if t >= 0.0 {
        (2.0 * b * b / (disc + t), -0.5 * (disc + t))
    } else {
        (0.5 * (disc - t), -2.0 * b * b / (disc - t))
    };
    let n1 = (b * b + d1 * d1).sqrt();
    let n2 = (b * b + d2 * d2).sqrt();
    let u = Rotation2 {
        m: [[b / n1, b / n2], [d1 / n1, d2 / n2]],
    };
    (l1, l2, u)
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix. Returns
/// eigenvalues in ascending order and `U` with columns the matching
/// eigenvectors, `det U = +1`. Ordering among (near-)equal eigenvalues is
/// fixed deterministically.
pub fn eig_sym3(m: &SecondMoment3) -> ([f64; 3], Rotation3) {
    let mut a = [
        [m.m[0], m.m[3], m.m[4]],
        [m.m[3], m.m[1], m.m[5]],
        [m.m[4], m.m[5], m.m[2]],
    ];
    let mut v = [[1.0f64, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    for _sweep in 0..15 {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off < 1e-15 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq.abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- J^T A J
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            // V <- V J
            for k in 0..3 {
                let vkp = v[k][p];
                let vkq = v[k][q];
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    let vals = [a[0][0], a[1][1], a[2][2]];
    // ascending eigenvalues; ties broken by the columns' absolute-component
    // lexicographic key so repeated calls are reproducible
    order.sort_by(|&i, &j| {
        if (vals[i] - vals[j]).abs() > 1e-12 {
            vals[i].partial_cmp(&vals[j]).unwrap()
        } else {
            let ki = [v[0][i].abs(), v[1][i].abs(), v[2][i].abs()];
            let kj = [v[0][j].abs(), v[1][j].abs(), v[2][j].abs()];
            kj.partial_cmp(&ki).unwrap()
        }
    });

    let mut evals = [0.0; 3];
    let mut u = [[0.0; 3]; 3];
    for (new, &old) in order.iter().enumerate() {
        evals[new] = vals[old];
        // sign convention: largest-magnitude entry positive
        let col = [v[0][old], v[1][old], v[2][old]];
        let mut dominant = 0;
        for r in 1..3 {
            if col[r].abs() > col[dominant].abs() {
                dominant = r;
            }
        }
        let sign = if col[dominant] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..3 {
            u[r][new] = sign * col[r];
        }
    }
    // right-handed frame: replace the last column by the cross product
    u[0][2] = u[1][0] * u[2][1] - u[2][0] * u[1][1];
    u[1][2] = u[2][0] * u[0][1] - u[0][0] * u[2][1];
    u[2][2] = u[0][0] * u[1][1] - u[1][0] * u[0][1];

    (evals, Rotation3 { m: u })
}

// ---------------------------------------------------------------------------
// fourth-order rotation
// ---------------------------------------------------------------------------

/// `out_{ijkl} = sum U_{ii'} U_{jj'} U_{kk'} U_{ll'} q_{i'j'k'l'}`:
/// rotates a diagonal-frame tensor back to the original frame when `U`
/// columns are the eigenvectors. Output symmetry is exact by construction.
pub fn rotate4_2(q: &FourthMoment2, u: &Rotation2) -> FourthMoment2 {
    let mut full = [[[[0.0f64; 2]; 2]; 2]; 2];
    for (i, fi) in full.iter_mut().enumerate() {
        for (j, fj) in fi.iter_mut().enumerate() {
            for (k, fk) in fj.iter_mut().enumerate() {
                for (l, fl) in fk.iter_mut().enumerate() {
                    *fl = q.get(i, j, k, l);
                }
            }
        }
    }
    for axis in 0..4 {
        full = rotate_axis2(&full, &u.m, axis);
    }
    let mut out = FourthMoment2::zero();
    out.q[0] = full[0][0][0][0];
    out.q[1] = full[0][0][0][1];
    out.q[2] = full[0][0][1][1];
    out.q[3] = full[0][1][1][1];
    out.q[4] = full[1][1][1][1];
    out
}

fn rotate_axis2(t: &[[[[f64; 2]; 2]; 2]; 2], u: &[[f64; 2]; 2], axis: usize) -> [[[[f64; 2]; 2]; 2]; 2] {
    let mut out = [[[[0.0f64; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut acc = 0.0;
                    for r in 0..2 {
                        let v = match axis {
                            0 => t[r][j][k][l],
                            1 => t[i][r][k][l],
                            2 => t[i][j][r][l],
                            _ => t[i][j][k][r],
                        };
                        let row = [i, j, k, l][axis];
                        acc += u[row][r] * v;
                    }
                    out[i][j][k][l] = acc;
                }
            }
        }
    }
    out
}

/// 3D analogue of [`rotate4_2`].
pub fn rotate4_3(q: &FourthMoment3, u: &Rotation3) -> FourthMoment3 {
    let mut full = [[[[0.0f64; 3]; 3]; 3]; 3];
    for (i, fi) in full.iter_mut().enumerate() {
        for (j, fj) in fi.iter_mut().enumerate() {
            for (k, fk) in fj.iter_mut().enumerate() {
                for (l, fl) in fk.iter_mut().enumerate() {
                    *fl = q.get(i, j, k, l);
                }
            }
        }
    }
    for axis in 0..4 {
        full = rotate_axis3(&full, &u.m, axis);
    }
    let mut out = FourthMoment3::zero();
    for idx in 0..15 {
        let (i, j, k, l) = UNIQUE3[idx];
        out.q[idx] = full[i][j][k][l];
    }
    out
}

/// The 15 canonical 3D index multisets, in storage order.
pub const UNIQUE3: [(usize, usize, usize, usize); 15] = [
    (0, 0, 0, 0),
    (0, 0, 0, 1),
    (0, 0, 0, 2),
    (0, 0, 1, 1),
    (0, 0, 1, 2),
    (0, 0, 2, 2),
    (0, 1, 1, 1),
    (0, 1, 1, 2),
    (0, 1, 2, 2),
    (0, 2, 2, 2),
    (1, 1, 1, 1),
    (1, 1, 1, 2),
    (1, 1, 2, 2),
    (1, 2, 2, 2),
    (2, 2, 2, 2),
];

fn rotate_axis3(t: &[[[[f64; 3]; 3]; 3]; 3], u: &[[f64; 3]; 3], axis: usize) -> [[[[f64; 3]; 3]; 3]; 3] {
    let mut out = [[[[0.0f64; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut acc = 0.0;
                    for r in 0..3 {
                        let v = match axis {
                            0 => t[r][j][k][l],
                            1 => t[i][r][k][l],
                            2 => t[i][j][r][l],
                            _ => t[i][j][k][r],
                        };
                        let row = [i, j, k, l][axis];
                        acc += u[row][r] * v;
                    }
                    out[i][j][k][l] = acc;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn rotation3_from_angles(alpha: f64, beta: f64, gamma: f64) -> Rotation3 {
        let (ca, sa) = (alpha.cos(), alpha.sin());
        let (cb, sb) = (beta.cos(), beta.sin());
        let (cg, sg) = (gamma.cos(), gamma.sin());
        let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
        let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        let rz = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
        let mul = |a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]| {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            c
        };
        Rotation3 {
            m: mul(&mul(&rz, &ry), &rx),
        }
    }

    #[test]
    fn eig2_diagonal_branches() {
        let (l1, l2, u) = eig_sym2(&SecondMoment2 { m11: 0.7, m12: 0.0 });
        assert!((l1 - 0.7).abs() < 1e-15 && (l2 - 0.3).abs() < 1e-15);
        assert_eq!(u, Rotation2::identity());
        let (l1, l2, u) = eig_sym2(&SecondMoment2 { m11: 0.3, m12: 0.0 });
        assert!((l1 - 0.7).abs() < 1e-15 && (l2 - 0.3).abs() < 1e-15);
        assert_eq!(u.m, [[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn eig2_rank_one() {
        let (l1, l2, _) = eig_sym2(&SecondMoment2 { m11: 0.5, m12: 0.5 });
        assert!((l1 - 1.0).abs() < 1e-15);
        assert!(l2.abs() < 1e-15);
    }

    #[test]
    fn eig2_general_frozen() {
        // [[0.6, 0.2], [0.2, 0.4]]: eigenvalues (1 +- sqrt(0.2)) / 2,
        // verified against the characteristic polynomial.
        let m = SecondMoment2 { m11: 0.6, m12: 0.2 };
        let (l1, l2, u) = eig_sym2(&m);
        assert!((l1 - 0.723_606_797_749_979).abs() < 1e-15);
        assert!((l2 - 0.276_393_202_250_021).abs() < 1e-15);
        for &l in &[l1, l2] {
            let delta = 0.6 * 0.4 - 0.04;
            assert!((l * l - l + delta).abs() < 1e-15, "char poly at {l}");
        }
        // reconstruction U diag U^T = M
        let rec11 = l1 * u.m[0][0] * u.m[0][0] + l2 * u.m[0][1] * u.m[0][1];
        let rec12 = l1 * u.m[0][0] * u.m[1][0] + l2 * u.m[0][1] * u.m[1][1];
        assert!((rec11 - 0.6).abs() < 1e-15);
        assert!((rec12 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn eig3_isotropic_identity() {
        let (vals, u) = eig_sym3(&SecondMoment3::isotropic());
        for v in vals {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(u.m, Rotation3::identity().m);
    }

    #[test]
    fn eig3_diagonal_permutation() {
        let m = SecondMoment3 {
            m: [0.5, 0.2, 0.3, 0.0, 0.0, 0.0],
        };
        let (vals, u) = eig_sym3(&m);
        assert_eq!(vals, [0.2, 0.3, 0.5]);
        assert!(u.orthogonality_defect() < 1e-15);
        assert!((u.det() - 1.0).abs() < 1e-14);
        // column k is the eigenvector of vals[k]
        let rec = SecondMoment3::from_eigensystem(&vals, &u);
        for i in 0..6 {
            assert!((rec.m[i] - m.m[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn eig3_reconstruction_random() {
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let mut vals = [next(), next(), next()];
            let s: f64 = vals.iter().sum();
            for v in &mut vals {
                *v /= s;
            }
            let r = rotation3_from_angles(
                next() * std::f64::consts::TAU,
                next() * std::f64::consts::PI,
                next() * std::f64::consts::TAU,
            );
            let m = SecondMoment3::from_eigensystem(&vals, &r);
            let (got_vals, u) = eig_sym3(&m);
            assert!(u.orthogonality_defect() < 1e-13);
            assert!((u.det() - 1.0).abs() < 1e-13);
            let rec = SecondMoment3::from_eigensystem(&got_vals, &u);
            for i in 0..6 {
                assert!(
                    (rec.m[i] - m.m[i]).abs() < 1e-14,
                    "reconstruction component {i}: {} vs {}",
                    rec.m[i],
                    m.m[i]
                );
            }
            assert!(got_vals[0] <= got_vals[1] && got_vals[1] <= got_vals[2]);
        }
    }

    #[test]
    fn rotate4_identity_and_quarter_turn() {
        let mut q = FourthMoment2::zero();
        q.q = [0.6, 0.0, 0.1, 0.0, 0.2];
        let same = rotate4_2(&q, &Rotation2::identity());
        assert_eq!(same.q, q.q);
        // 90 degree rotation swaps q1111 and q2222, fixes q1122
        let rot = Rotation2 {
            m: [[0.0, -1.0], [1.0, 0.0]],
        };
        let r = rotate4_2(&q, &rot);
        assert!((r.q[0] - 0.2).abs() < 1e-16);
        assert!((r.q[4] - 0.6).abs() < 1e-16);
        assert!((r.q[2] - 0.1).abs() < 1e-16);
    }

    #[test]
    fn rotate4_3_round_trip_and_contraction() {
        let mut q = FourthMoment3::zero();
        // a valid isotropic-like symmetric tensor with trace identity:
        // q_iiii = 1/5, q_iijj = 1/15
        for &(i, j, k, l) in UNIQUE3.iter() {
            let mut s = [i, j, k, l];
            s.sort_unstable();
            let v = if s[0] == s[3] {
                0.2
            } else if (s[0] == s[1] && s[2] == s[3]) && s[1] != s[2] {
                1.0 / 15.0
            } else {
                0.0
            };
            q.set(i, j, k, l, v);
        }
        let u = rotation3_from_angles(0.4, 1.1, -0.7);
        let r = rotate4_3(&q, &u);
        // isotropic tensor is rotation invariant
        for idx in 0..15 {
            assert!((r.q[idx] - q.q[idx]).abs() < 1e-15, "iso invariance {idx}");
        }
        // round trip with a non-invariant tensor
        let mut q2 = q;
        q2.set(0, 0, 0, 0, 0.5);
        q2.set(2, 2, 2, 2, 0.1);
        let fwd = rotate4_3(&q2, &u);
        let back = rotate4_3(&fwd, &u.transpose());
        for idx in 0..15 {
            assert!((back.q[idx] - q2.q[idx]).abs() < 1e-13, "round trip {idx}");
        }
        // contraction commutes with rotation
        let c_before = q2.contract();
        let m_before = SecondMoment3 { m: c_before };
        let c_after = fwd.contract();
        let m_rot = m_before.conjugate(&u);
        for i in 0..6 {
            assert!(
                (c_after[i] - m_rot.m[i]).abs() < 1e-13,
                "contraction conjugation {i}"
            );
        }
    }

    #[test]
    fn sanitize_clips_infeasible() {
        // trace 2 scaled back, negative eigenvalue clipped
        let m = SecondMoment3::sanitize([1.2, 0.9, -0.1, 0.0, 0.0, 0.0]);
        assert!((m.trace() - 1.0).abs() < 1e-14);
        let (vals, _) = eig_sym3(&m);
        assert!(vals[0] >= -1e-15);
        assert!(vals[2] <= 1.0 + 1e-15);
        // feasible input with exact unit trace is untouched
        let m2 = SecondMoment3::sanitize([0.5, 0.25, 0.25, 0.05, 0.0, 0.0]);
        assert_eq!(m2.m[3], 0.05);
    }

    proptest! {
        #[test]
        fn eig2_reconstructs(a in 0.0f64..1.0, t in -1.0f64..1.0) {
            // b chosen so the matrix stays PSD: (2a-1)^2 + 4b^2 <= 1
            let bmax = (0.25f64 * (1.0 - (2.0 * a - 1.0).powi(2))).max(0.0).sqrt();
            let b = t * bmax;
            let m = SecondMoment2 { m11: a, m12: b };
            let (l1, l2, u) = eig_sym2(&m);
            prop_assert!(l1 >= l2);
            prop_assert!((l1 + l2 - 1.0).abs() < 1e-14);
            let rec11 = l1 * u.m[0][0] * u.m[0][0] + l2 * u.m[0][1] * u.m[0][1];
            let rec12 = l1 * u.m[0][0] * u.m[1][0] + l2 * u.m[0][1] * u.m[1][1];
            let rec22 = l1 * u.m[1][0] * u.m[1][0] + l2 * u.m[1][1] * u.m[1][1];
            prop_assert!((rec11 - a).abs() < 1e-13);
            prop_assert!((rec12 - b).abs() < 1e-13);
            prop_assert!((rec22 - (1.0 - a)).abs() < 1e-13);
        }
    }
}
