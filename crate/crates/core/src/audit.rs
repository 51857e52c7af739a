//! Exhaustive audit of the algebraic identities behind the symmetry groups:
//! the quaternion table, norm and determinant identities, commutation of
//! left and right multiplication, the reflection conjugation and the
//! structural properties of every vector-field system.
//!
//! Each identity is checked exactly on basis units and to a relative
//! tolerance on random inputs.

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{
    block_lift, group_element, left_matrix, quat_mul, reflect_j, right_matrix, section_frame, Chirality,
    Quaternion, VectorFieldSystem,
};
use crate::error::Result;

/// Knobs for [`algebra_audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    /// Random inputs per identity.
    pub random_trials: usize,
    pub seed: u64,
    /// Relative tolerance on random inputs.
    pub tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            random_trials: 10_000,
            seed: 0,
            tol: 1e-12,
        }
    }
}

/// Outcome of one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub exact_cases: usize,
    /// Largest defect on basis units; must be exactly zero.
    pub exact_defect: f64,
    pub random_cases: usize,
    /// Largest relative defect on random inputs.
    pub random_defect: f64,
    pub tol: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.exact_defect == 0.0 && self.random_defect <= self.tol
    }
}

/// Tracks the worst defect of one identity.
struct Tally {
    name: String,
    exact_cases: usize,
    exact_defect: f64,
    random_cases: usize,
    random_defect: f64,
}

impl Tally {
    fn new(name: impl Into<String>) -> Self {
        Tally {
            name: name.into(),
            exact_cases: 0,
            exact_defect: 0.0,
            random_cases: 0,
            random_defect: 0.0,
        }
    }

    fn exact(&mut self, defect: f64) {
        self.exact_cases += 1;
        self.exact_defect = worst(self.exact_defect, defect);
    }

    fn random(&mut self, defect: f64) {
        self.random_cases += 1;
        self.random_defect = worst(self.random_defect, defect);
    }

    fn finish(self, tol: f64) -> IdentityCheck {
        IdentityCheck {
            name: self.name,
            exact_cases: self.exact_cases,
            exact_defect: self.exact_defect,
            random_cases: self.random_cases,
            random_defect: self.random_defect,
            tol,
        }
    }
}

// NaN must count as a failure, so it wins over any number.
fn worst(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn quat_defect(a: Quaternion, b: Quaternion) -> f64 {
    (a - b).to_array().iter().fold(0.0, |m, x| worst(m, x.abs()))
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    Quaternion::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    let q = random_quat(rng);
    q.scale(1.0 / q.norm())
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / r).collect()
}

fn m4(m: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| worst(acc, x.abs()))
}

/// Multiplication table of the units written out by hand: entry `[i][j]`
/// is `(sign, k)` with `e_i e_j = sign e_k`.
const UNIT_TABLE: [[(i8, usize); 4]; 4] = [
    [(1, 0), (1, 1), (1, 2), (1, 3)],
    [(1, 1), (-1, 0), (1, 3), (-1, 2)],
    [(1, 2), (-1, 3), (-1, 0), (1, 1)],
    [(1, 3), (1, 2), (-1, 1), (-1, 0)],
];

/// The systems audited by default: every block size, both chiralities at `d = 4`.
pub fn default_systems() -> Result<Vec<VectorFieldSystem>> {
    Ok(vec![
        VectorFieldSystem::new(2, Chirality::Left)?,
        VectorFieldSystem::new(4, Chirality::Left)?,
        VectorFieldSystem::new(4, Chirality::Right)?,
        VectorFieldSystem::new(8, Chirality::Left)?,
    ])
}

/// Runs every identity against the built-in systems.
pub fn algebra_audit(opts: &AuditOptions) -> Result<Vec<IdentityCheck>> {
    algebra_audit_with(&default_systems()?, opts)
}

/// Runs every identity; the structural checks use `systems`, which lets a
/// test feed in a deliberately broken system.
pub fn algebra_audit_with(systems: &[VectorFieldSystem], opts: &AuditOptions) -> Result<Vec<IdentityCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let trials = opts.random_trials;
    let units: Vec<Quaternion> = (0..4).map(Quaternion::unit).collect();
    let mut out = Vec::new();

    let mut table = Tally::new("quaternion unit table and associativity");
    for (i, row) in UNIT_TABLE.iter().enumerate() {
        for (j, &(sign, k)) in row.iter().enumerate() {
            let expected = Quaternion::unit(k).scale(f64::from(sign));
            table.exact(quat_defect(quat_mul(units[i], units[j]), expected));
        }
    }
    for _ in 0..trials {
        let (p, q, r) = (random_quat(&mut rng), random_quat(&mut rng), random_quat(&mut rng));
        let scale = p.norm() * q.norm() * r.norm();
        table.random(quat_defect((p * q) * r, p * (q * r)) / scale);
    }
    out.push(table.finish(opts.tol));

    let mut norms = Tally::new("|pq| = |p| |q|");
    for &p in &units {
        for &q in &units {
            norms.exact(((p * q).norm_squared() - p.norm_squared() * q.norm_squared()).abs());
        }
    }
    for _ in 0..trials {
        let (p, q) = (random_quat(&mut rng), random_quat(&mut rng));
        let expected = p.norm() * q.norm();
        norms.random(((p * q).norm() - expected).abs() / expected);
    }
    out.push(norms.finish(opts.tol));

    let mut dets = Tally::new("det L_q = det R_q = |q|^4");
    for &q in &units {
        dets.exact((left_matrix(q).determinant() - 1.0).abs());
        dets.exact((right_matrix(q).determinant() - 1.0).abs());
    }
    for _ in 0..trials {
        let q = random_quat(&mut rng);
        let expected = q.norm_squared().powi(2);
        let dl = (left_matrix(q).determinant() - expected).abs();
        let dr = (right_matrix(q).determinant() - expected).abs();
        dets.random(dl.max(dr) / expected);
    }
    out.push(dets.finish(opts.tol));

    let mut action = Tally::new("L_q v_p = v_qp and R_q v_p = v_pq");
    let act = |p: Quaternion, q: Quaternion| {
        let l = Quaternion::from_vector(&(left_matrix(q) * p.to_vector()));
        let r = Quaternion::from_vector(&(right_matrix(q) * p.to_vector()));
        quat_defect(l, q * p).max(quat_defect(r, p * q))
    };
    for &p in &units {
        for &q in &units {
            action.exact(act(p, q));
        }
    }
    for _ in 0..trials {
        let (p, q) = (random_quat(&mut rng), random_quat(&mut rng));
        action.random(act(p, q) / (p.norm() * q.norm()));
    }
    out.push(action.finish(opts.tol));

    let left = VectorFieldSystem::new(4, Chirality::Left)?;
    let right = VectorFieldSystem::new(4, Chirality::Right)?;
    let mut commute = Tally::new("lifted left and right rotations commute");
    let commutator = |p: &[f64], q: &[f64]| -> Result<f64> {
        let lp = group_element(&left, 2, p)?.matrix;
        let rq = group_element(&right, 2, q)?.matrix;
        Ok(max_abs(&(&lp * &rq - &rq * &lp)))
    };
    for i in 0..4 {
        for j in 0..4 {
            commute.exact(commutator(&units[i].to_array(), &units[j].to_array())?);
        }
    }
    for _ in 0..trials {
        let (p, q) = (random_unit_quat(&mut rng), random_unit_quat(&mut rng));
        commute.random(commutator(&p.to_array(), &q.to_array())?);
    }
    out.push(commute.finish(opts.tol));

    let mut reflection = Tally::new("J L_q J = R_conj(q) and J A_i J = A'_i");
    let j4 = reflect_j(1, 4)?;
    let j8 = reflect_j(2, 4)?;
    reflection.exact(max_abs(&(&j8 * &j8 - DMatrix::identity(8, 8))));
    for i in 1..4 {
        let conj = &j8 * left.lifted(i, 2) * &j8;
        reflection.exact(max_abs(&(conj - right.lifted(i, 2))));
    }
    let conj_defect = |q: Quaternion| max_abs(&(&j4 * m4(&left_matrix(q)) * &j4 - m4(&right_matrix(q.conj()))));
    for &q in &units {
        reflection.exact(conj_defect(q));
    }
    for _ in 0..trials {
        reflection.random(conj_defect(random_unit_quat(&mut rng)));
    }
    out.push(reflection.finish(opts.tol));

    for sys in systems {
        out.extend(system_checks(sys, &mut rng, opts)?);
    }
    Ok(out)
}

fn system_checks(sys: &VectorFieldSystem, rng: &mut ChaCha8Rng, opts: &AuditOptions) -> Result<Vec<IdentityCheck>> {
    let d = sys.d();
    let tag = format!("d = {d} ({:?})", sys.chirality()).to_lowercase();
    let id = DMatrix::<f64>::identity(d, d);
    let trials = opts.random_trials;

    // Skew-symmetry, exact; on random vectors it reads x . A x = 0.
    let mut skew = Tally::new(format!("{tag}: A_i skew-symmetric"));
    for a in sys.matrices() {
        skew.exact(max_abs(&(a + a.transpose())));
    }
    for _ in 0..trials {
        let x = DVector::from_vec(random_unit(rng, d));
        for a in sys.matrices() {
            skew.random(x.dot(&(a * &x)).abs());
        }
    }

    // A_i^T A_j + A_j^T A_i = 2 delta_ij I; on random vectors the images
    // A_0 x, ..., A_{d-1} x are orthonormal.
    let mut ortho = Tally::new(format!("{tag}: A_i^T A_j + A_j^T A_i = 2 delta_ij I, det A_i = 1"));
    for (i, a) in sys.matrices().iter().enumerate() {
        ortho.exact((a.clone().determinant() - 1.0).abs());
        for (j, b) in sys.matrices().iter().enumerate() {
            let target = if i == j { &id * 2.0 } else { DMatrix::zeros(d, d) };
            ortho.exact(max_abs(&(a.transpose() * b + b.transpose() * a - target)));
        }
    }
    for _ in 0..trials {
        let x = DVector::from_vec(random_unit(rng, d));
        let images = DMatrix::from_columns(&(0..d).map(|i| sys.matrix(i) * &x).collect::<Vec<_>>());
        ortho.random(max_abs(&(images.transpose() * images - &id)));
    }

    let mut group = Tally::new(format!("{tag}: g_lambda orthogonal"));
    for i in 0..d {
        let mut lambda = vec![0.0; d];
        lambda[i] = 1.0;
        let g = sys.g_lambda(&lambda)?;
        group.exact(max_abs(&(g.transpose() * g - &id)));
    }
    for _ in 0..trials {
        let g = sys.g_lambda(&random_unit(rng, d))?;
        group.random(max_abs(&(g.transpose() * g - &id)));
    }

    let n = 2;
    let dim = d * n;
    let mut frames = Tally::new(format!("{tag}: section frames orthonormal"));
    let frame_defect = |theta: &[f64]| -> Result<f64> {
        let f = section_frame(sys, n, theta)?;
        let full = DMatrix::from_columns(
            &f.frame
                .column_iter()
                .chain(f.basis_h.column_iter())
                .map(|c| c.into_owned())
                .collect::<Vec<_>>(),
        );
        Ok(max_abs(&(full.transpose() * full - DMatrix::identity(dim, dim))))
    };
    for k in 0..dim {
        let mut theta = vec![0.0; dim];
        theta[k] = 1.0;
        frames.exact(frame_defect(&theta)?);
    }
    for _ in 0..trials {
        frames.random(frame_defect(&random_unit(rng, dim))?);
    }

    // Lifts stay block diagonal with equal blocks.
    let mut lifts = Tally::new(format!("{tag}: group elements are equal-block lifts"));
    for _ in 0..trials.min(1000) {
        let lambda = random_unit(rng, d);
        let g = group_element(sys, n, &lambda)?;
        lifts.random(max_abs(&(g.matrix - block_lift(&sys.g_lambda(&lambda)?, n))));
    }

    Ok(vec![
        skew.finish(opts.tol),
        ortho.finish(opts.tol),
        group.finish(opts.tol),
        frames.finish(opts.tol),
        lifts.finish(opts.tol),
    ])
}
