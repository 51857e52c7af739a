//! Quaternion arithmetic, the linear vector-field systems on `S^1`, `S^3`,
//! `S^7`, their block-diagonal lifts to `R^N`, and section frames.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::{Error, Result};

/// Tolerance used when a caller hands us a vector that should be unit length.
pub const UNIT_TOL: f64 = 1e-12;

/// Pivot tolerance for completing a frame to an orthonormal basis.
pub const PIVOT_TOL: f64 = 1e-10;

/// A real quaternion `q0 e0 + q1 e1 + q2 e2 + q3 e3`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quaternion {
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Quaternion { q0, q1, q2, q3 }
    }

    /// The basis unit `e_i` for `i` in `0..4`.
    pub fn unit(i: usize) -> Self {
        let mut c = [0.0; 4];
        c[i] = 1.0;
        Self::from_array(c)
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Quaternion::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q0, self.q1, self.q2, self.q3]
    }

    /// Coordinate vector `v_q` in `R^4`.
    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.q0, self.q1, self.q2, self.q3)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Quaternion::new(v[0], v[1], v[2], v[3])
    }

    pub fn conj(self) -> Self {
        Quaternion::new(self.q0, -self.q1, -self.q2, -self.q3)
    }

    pub fn norm_squared(self) -> f64 {
        self.q0 * self.q0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Quaternion::new(self.q0 * s, self.q1 * s, self.q2 * s, self.q3 * s)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} + {} e1 + {} e2 + {} e3",
            self.q0, self.q1, self.q2, self.q3
        )
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.q0 + o.q0, self.q1 + o.q1, self.q2 + o.q2, self.q3 + o.q3)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.q0 - o.q0, self.q1 - o.q1, self.q2 - o.q2, self.q3 - o.q3)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        quat_mul(self, q)
    }
}

/// Hamilton product `pq`.
pub fn quat_mul(p: Quaternion, q: Quaternion) -> Quaternion {
    Quaternion::new(
        p.q0 * q.q0 - p.q1 * q.q1 - p.q2 * q.q2 - p.q3 * q.q3,
        p.q0 * q.q1 + p.q1 * q.q0 + p.q2 * q.q3 - p.q3 * q.q2,
        p.q0 * q.q2 - p.q1 * q.q3 + p.q2 * q.q0 + p.q3 * q.q1,
        p.q0 * q.q3 + p.q1 * q.q2 - p.q2 * q.q1 + p.q3 * q.q0,
    )
}

/// Matrix of `p -> qp` acting on coordinate vectors.
pub fn left_matrix(q: Quaternion) -> Matrix4<f64> {
    let Quaternion { q0, q1, q2, q3 } = q;
    Matrix4::new(
        q0, -q1, -q2, -q3, //
        q1, q0, -q3, q2, //
        q2, q3, q0, -q1, //
        q3, -q2, q1, q0,
    )
}

/// Matrix of `p -> pq` acting on coordinate vectors.
pub fn right_matrix(q: Quaternion) -> Matrix4<f64> {
    let Quaternion { q0, q1, q2, q3 } = q;
    Matrix4::new(
        q0, -q1, -q2, -q3, //
        q1, q0, q3, -q2, //
        q2, -q3, q0, q1, //
        q3, q2, -q1, q0,
    )
}

/// Which quaternion multiplication a `d = 4` system encodes. For `d = 1, 2, 8`
/// there is a single system and the tag is carried along unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Chirality {
    #[default]
    Left,
    Right,
}

impl std::str::FromStr for Chirality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Chirality::Left),
            "right" => Ok(Chirality::Right),
            other => Err(Error::Parse(format!(
                "chirality must be \"left\" or \"right\", got {other:?}"
            ))),
        }
    }
}

/// Orthonormal linear tangent vector fields `A_1, ..., A_{d-1}` on `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldSystem {
    d: usize,
    matrices: Vec<DMatrix<f64>>,
    chirality: Chirality,
}

/// Rows of the `S^7` system: entry `k` of row `r` is the signed 1-based index
/// `s` meaning `(A x)_r = sign(s) x_{|s|}`.
const OCTONION_ROWS: [[i8; 8]; 7] = [
    [2, -1, 4, -3, 6, -5, -8, 7],
    [3, -4, -1, 2, 7, 8, -5, -6],
    [4, 3, -2, -1, 8, -7, 6, -5],
    [5, -6, -7, -8, -1, 2, 3, 4],
    [6, 5, -8, 7, -2, -1, -4, 3],
    [7, 8, 5, -6, -3, 4, -1, -2],
    [8, -7, 6, 5, -4, -3, 2, -1],
];

fn signed_permutation(rows: &[i8]) -> DMatrix<f64> {
    let d = rows.len();
    let mut m = DMatrix::zeros(d, d);
    for (r, &s) in rows.iter().enumerate() {
        m[(r, s.unsigned_abs() as usize - 1)] = f64::from(s.signum());
    }
    m
}

fn to_dmatrix(m: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

impl VectorFieldSystem {
    /// The explicit system for block size `d`.
    pub fn new(d: usize, chirality: Chirality) -> Result<Self> {
        let matrices = match d {
            1 => Vec::new(),
            2 => vec![DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])],
            4 => (1..4)
                .map(|i| match chirality {
                    Chirality::Left => to_dmatrix(&left_matrix(Quaternion::unit(i))),
                    Chirality::Right => to_dmatrix(&right_matrix(Quaternion::unit(i).conj())),
                })
                .collect(),
            8 => OCTONION_ROWS.iter().map(|r| signed_permutation(r)).collect(),
            other => return Err(Error::UnsupportedBlockSize(other)),
        };
        Ok(VectorFieldSystem {
            d,
            matrices,
            chirality,
        })
    }

    /// Builds a system from arbitrary matrices without validation. Use
    /// [`audit_system`] to check it; this exists for fault-injection fixtures.
    pub fn from_matrices_unchecked(
        d: usize,
        matrices: Vec<DMatrix<f64>>,
        chirality: Chirality,
    ) -> Self {
        VectorFieldSystem {
            d,
            matrices,
            chirality,
        }
    }

    /// The conjugated system `gamma A_i gamma^T` for an orthogonal `gamma`.
    pub fn conjugated(&self, gamma: &DMatrix<f64>) -> Result<Self> {
        if gamma.nrows() != self.d || gamma.ncols() != self.d {
            return Err(Error::Dimension(format!(
                "conjugator must be {d}x{d}, got {}x{}",
                gamma.nrows(),
                gamma.ncols(),
                d = self.d
            )));
        }
        let defect = orthogonality_defect(gamma);
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "conjugator is not orthogonal (|g^T g - I| = {defect:e})"
            )));
        }
        let matrices = self
            .matrices
            .iter()
            .map(|a| gamma * a * gamma.transpose())
            .collect();
        Ok(VectorFieldSystem {
            d: self.d,
            matrices,
            chirality: self.chirality,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn chirality(&self) -> Chirality {
        self.chirality
    }

    /// `A_1, ..., A_{d-1}` (the identity `A_0` is implicit).
    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `A_i` for `i` in `0..d`, with `A_0 = I`.
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        if i == 0 {
            DMatrix::identity(self.d, self.d)
        } else {
            self.matrices[i - 1].clone()
        }
    }

    /// `g_lambda = sum_i lambda_i A_i`, an orthogonal `d x d` matrix for unit `lambda`.
    pub fn g_lambda(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        if lambda.len() != self.d {
            return Err(Error::Dimension(format!(
                "lambda has length {}, expected d = {}",
                lambda.len(),
                self.d
            )));
        }
        check_unit("lambda", lambda)?;
        let mut g = DMatrix::identity(self.d, self.d) * lambda[0];
        for (a, &l) in self.matrices.iter().zip(&lambda[1..]) {
            g += a * l;
        }
        Ok(g)
    }

    /// Block lift `diag(A_i, ..., A_i)` with `n` blocks, for `i` in `0..d`.
    pub fn lifted(&self, i: usize, n: usize) -> DMatrix<f64> {
        block_lift(&self.matrix(i), n)
    }
}

/// Largest entry of `|m^T m - I|`.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let id = DMatrix::<f64>::identity(m.ncols(), m.ncols());
    (m.transpose() * m - id).amax()
}

pub(crate) fn check_unit(what: &'static str, v: &[f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        Err(Error::NotUnit { what, norm })
    } else {
        Ok(())
    }
}

/// One failed identity found by [`audit_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct AuditFailure {
    pub identity: String,
    pub defect: f64,
}

/// Checks skew-symmetry, orthogonality, unit determinant and pairwise
/// anticommutation of `A_i^T A_j` for a vector-field system.
pub fn audit_system(sys: &VectorFieldSystem, tol: f64) -> Vec<AuditFailure> {
    let mut failures = Vec::new();
    let d = sys.d();
    let id = DMatrix::<f64>::identity(d, d);
    let mut record = |identity: String, defect: f64| {
        if defect.is_nan() || defect > tol {
            failures.push(AuditFailure { identity, defect });
        }
    };
    for (i, a) in sys.matrices().iter().enumerate() {
        let k = i + 1;
        record(format!("A_{k} skew-symmetric"), (a + a.transpose()).amax());
        record(format!("A_{k} orthogonal"), (a.transpose() * a - &id).amax());
        record(
            format!("det A_{k} = 1"),
            (a.clone().determinant() - 1.0).abs(),
        );
        for (j, b) in sys.matrices().iter().enumerate().skip(i + 1) {
            let defect = (a.transpose() * b + b.transpose() * a).amax();
            record(format!("A_{k}^T A_{} anticommute", j + 1), defect);
        }
    }
    failures
}

/// Radon-Hurwitz number: the count of orthonormal linear tangent fields on `S^{d-1}`.
pub fn radon_hurwitz(d: u64) -> u64 {
    assert!(d >= 1, "radon_hurwitz needs d >= 1");
    let twos = u64::from(d.trailing_zeros());
    let (s, r) = (twos / 4, twos % 4);
    (1u64 << r) + 8 * s - 1
}

/// `diag(block, ..., block)` with `n` copies.
pub fn block_lift(block: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let d = block.nrows();
    let mut out = DMatrix::zeros(d * n, d * n);
    for b in 0..n {
        out.view_mut((b * d, b * d), (d, d)).copy_from(block);
    }
    out
}

/// An element of the block-diagonal symmetry group acting on `R^{dn}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub n: usize,
    pub d: usize,
    pub lambda: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl GroupElement {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(x);
        v.as_slice().to_vec()
    }
}

/// Block lift of `g_lambda` with `n >= 2` equal blocks.
pub fn group_element(sys: &VectorFieldSystem, n: usize, lambda: &[f64]) -> Result<GroupElement> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "block count n must be at least 2, got {n}"
        )));
    }
    let g = sys.g_lambda(lambda)?;
    Ok(GroupElement {
        n,
        d: sys.d(),
        lambda: lambda.to_vec(),
        matrix: block_lift(&g, n),
    })
}

/// The involution `diag(-1, 1, 1, 1)` lifted to `n` blocks of size 4.
pub fn reflect_j(n: usize, d: usize) -> Result<DMatrix<f64>> {
    if d != 4 {
        return Err(Error::InvalidArgument(format!(
            "the reflection J is defined for d = 4 only, got d = {d}"
        )));
    }
    let block = DMatrix::from_diagonal(&DVector::from_column_slice(&[-1.0, 1.0, 1.0, 1.0]));
    Ok(block_lift(&block, n))
}

/// `theta` together with its `d`-frame and an orthonormal basis of the
/// complementary `(N - d)`-dimensional subspace `H_theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionFrame {
    pub theta: DVector<f64>,
    /// `N x d`, columns `theta, A_1 theta, ..., A_{d-1} theta` (lifted).
    pub frame: DMatrix<f64>,
    /// `N x (N - d)` orthonormal basis of `H_theta`.
    pub basis_h: DMatrix<f64>,
}

impl SectionFrame {
    /// Orthogonal projector onto the frame span.
    pub fn frame_projector(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    /// Maps coordinates in `H_theta` back to `R^N`.
    pub fn embed_h(&self, coords: &[f64]) -> Vec<f64> {
        let n = self.basis_h.nrows();
        let mut out = vec![0.0; n];
        for (k, &c) in coords.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.basis_h.column(k).iter()) {
                *o += c * b;
            }
        }
        out
    }
}

/// Frame `F_d(theta)` and a deterministic completion to an orthonormal basis.
pub fn section_frame(sys: &VectorFieldSystem, n: usize, theta: &[f64]) -> Result<SectionFrame> {
    let d = sys.d();
    let dim = d * n;
    if theta.len() != dim {
        return Err(Error::Dimension(format!(
            "theta has length {}, expected N = d n = {dim}",
            theta.len()
        )));
    }
    check_unit("theta", theta)?;
    let th = DVector::from_column_slice(theta);
    let mut frame = DMatrix::zeros(dim, d);
    frame.set_column(0, &th);
    for i in 1..d {
        let col = sys.lifted(i, n) * &th;
        frame.set_column(i, &col);
    }
    let basis_h = complete_basis(&frame, PIVOT_TOL);
    Ok(SectionFrame {
        theta: th,
        frame,
        basis_h,
    })
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// `cols` (assumed orthonormal), built by Gram-Schmidt over the standard
/// basis. Candidates whose residual norm falls below `tol` are skipped.
pub fn complete_basis(cols: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let dim = cols.nrows();
    let need = dim - cols.ncols();
    let mut kept: Vec<DVector<f64>> = cols.column_iter().map(|c| c.into_owned()).collect();
    let mut out = Vec::with_capacity(need);
    for e in 0..dim {
        if out.len() == need {
            break;
        }
        let mut v = DVector::zeros(dim);
        v[e] = 1.0;
        // Two passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for k in &kept {
                let c = k.dot(&v);
                v.axpy(-c, k, 1.0);
            }
        }
        let norm = v.norm();
        if norm < tol {
            continue;
        }
        v /= norm;
        kept.push(v.clone());
        out.push(v);
    }
    DMatrix::from_columns(&out)
}

/// Orthonormal basis of the orthogonal complement of a single unit vector.
pub fn orthogonal_complement(u: &[f64]) -> DMatrix<f64> {
    let col = DMatrix::from_column_slice(u.len(), 1, u);
    complete_basis(&col, PIVOT_TOL)
}
