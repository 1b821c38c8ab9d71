//! Small dense linear algebra helpers.
//!
//! Symmetric/antisymmetric splits of 3x3 matrices and the Mandel
//! (orthonormal Voigt) representation used to store fourth-order elasticity
//! tensors as 6x6 matrices. Mandel scaling (`sqrt(2)` on shear slots) makes
//! the 6-vector inner product equal to the Frobenius inner product of the
//! underlying symmetric matrices, so eigenvalues of the 6x6 matrix are
//! exactly the eigenvalues of the tensor acting on symmetric matrices.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

/// Symmetric part `(A + A^T)/2`.
pub fn sym(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a + a.transpose()) * 0.5
}

/// Antisymmetric part `(A - A^T)/2`.
pub fn skw(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a - a.transpose()) * 0.5
}

/// Frobenius norm of a 3x3 matrix.
pub fn frob(a: &Matrix3<f64>) -> f64 {
    a.norm()
}

/// Antisymmetric matrix `W` with `W x = w x x` (cross product).
pub fn axial_to_skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

/// Mandel 6-vector of a symmetric matrix:
/// `[S11, S22, S33, sqrt2*S23, sqrt2*S13, sqrt2*S12]`.
pub fn mandel_vec(s: &Matrix3<f64>) -> Vector6<f64> {
    let r = std::f64::consts::SQRT_2;
    Vector6::new(
        s[(0, 0)],
        s[(1, 1)],
        s[(2, 2)],
        r * s[(1, 2)],
        r * s[(0, 2)],
        r * s[(0, 1)],
    )
}

/// Inverse of [`mandel_vec`].
pub fn mandel_mat(v: &Vector6<f64>) -> Matrix3<f64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Matrix3::new(
        v[0],
        r * v[5],
        r * v[4],
        r * v[5],
        v[1],
        r * v[3],
        r * v[4],
        r * v[3],
        v[2],
    )
}

/// Fourth-order elasticity tensor acting on symmetric 3x3 matrices, stored as
/// a symmetric 6x6 matrix in Mandel convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityTensor {
    c: Matrix6<f64>,
}

impl ElasticityTensor {
    /// Wrap a Mandel 6x6 matrix. Fails on NaN, asymmetry, or negative
    /// eigenvalues (positive semi-definite is allowed so degenerate test
    /// models with `C = 0` can be represented; audits flag the lost
    /// coercivity separately).
    pub fn new(c: Matrix6<f64>) -> crate::Result<Self> {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(crate::Error::NonFiniteInput {
                context: "elasticity tensor entries".into(),
            });
        }
        let asym = (c - c.transpose()).norm();
        if asym > 1e-10 * (1.0 + c.norm()) {
            return Err(crate::Error::InvalidParams(format!(
                "elasticity tensor not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let t = Self { c };
        if t.min_eigenvalue() < -1e-10 * (1.0 + c.norm()) {
            return Err(crate::Error::InvalidParams(format!(
                "elasticity tensor indefinite (min eigenvalue {:.3e})",
                t.min_eigenvalue()
            )));
        }
        Ok(t)
    }

    /// Isotropic tensor with shear modulus `mu` and bulk modulus `kappa`:
    /// `C S = 2 mu dev(S) + 3 kappa (tr S / 3) I`.
    pub fn isotropic(mu: f64, kappa: f64) -> crate::Result<Self> {
        let mut c = Matrix6::identity() * (2.0 * mu);
        let m = Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
        c += (m * m.transpose()) * ((3.0 * kappa - 2.0 * mu) / 3.0);
        Self::new(c)
    }

    /// Multiple of the identity on symmetric matrices: `C S = 2 mu S`.
    pub fn scaled_identity(two_mu: f64) -> crate::Result<Self> {
        Self::new(Matrix6::identity() * two_mu)
    }

    /// The zero tensor (degenerate; useful for purely magnetic models).
    pub fn zero() -> Self {
        Self { c: Matrix6::zeros() }
    }

    /// Apply to a symmetric matrix: `C S`.
    pub fn apply(&self, s: &Matrix3<f64>) -> Matrix3<f64> {
        mandel_mat(&(self.c * mandel_vec(s)))
    }

    /// Energy quadratic form `(1/2) C S : S`.
    pub fn energy(&self, s: &Matrix3<f64>) -> f64 {
        let v = mandel_vec(s);
        0.5 * (self.c * v).dot(&v)
    }

    pub fn mandel(&self) -> &Matrix6<f64> {
        &self.c
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.c
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Operator norm on symmetric matrices (largest eigenvalue magnitude).
    pub fn op_norm(&self) -> f64 {
        self.c
            .symmetric_eigenvalues()
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&x| x == 0.0)
    }

    /// If the tensor is isotropic, return `(mu, kappa)`.
    pub fn isotropic_moduli(&self) -> Option<(f64, f64)> {
        let m = Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);
        let kappa = (self.c * m).dot(&m) / 9.0;
        let mu = (self.c.trace() - 3.0 * kappa) / 10.0;
        let reference = match Self::isotropic(mu, kappa) {
            Ok(t) => t,
            Err(_) => return None,
        };
        if (self.c - reference.c).norm() <= 1e-10 * (1.0 + self.c.norm()) {
            Some((mu, kappa))
        } else {
            None
        }
    }

    /// Row-major 36-entry serialization of the Mandel matrix.
    pub fn to_rows(&self) -> Vec<f64> {
        (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| self.c[(i, j)]).collect()
    }

    pub fn from_rows(rows: &[f64]) -> crate::Result<Self> {
        if rows.len() != 36 {
            return Err(crate::Error::InvalidParams(format!(
                "elasticity tensor needs 36 row-major entries, got {}",
                rows.len()
            )));
        }
        Self::new(Matrix6::from_fn(|i, j| rows[6 * i + j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng) -> Matrix3<f64> {
        Matrix3::from_fn(|_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn sym_skw_reconstruct_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_matrix(&mut rng);
            let s = sym(&a);
            let w = skw(&a);
            assert_relative_eq!(s + w, a, epsilon = 1e-14);
            // Exact idempotence: entries of sym(A) are already pairwise equal
            // bitwise, so re-symmetrizing changes nothing at all.
            assert_eq!(sym(&s), s);
            assert_eq!(skw(&w), w);
            assert!(frob(&(s.transpose() - s)) == 0.0);
            assert!(frob(&(w.transpose() + w)) == 0.0);
        }
    }

    #[test]
    fn mandel_roundtrip_preserves_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let s = sym(&random_matrix(&mut rng));
            let t = sym(&random_matrix(&mut rng));
            let roundtrip = mandel_mat(&mandel_vec(&s));
            assert_relative_eq!(roundtrip, s, epsilon = 1e-14);
            let frobenius: f64 = (s.transpose() * t).trace();
            assert_relative_eq!(mandel_vec(&s).dot(&mandel_vec(&t)), frobenius, epsilon = 1e-12);
        }
    }

    #[test]
    fn scaled_identity_energy_is_mu_norm_squared() {
        let c = ElasticityTensor::scaled_identity(2.0 * 1.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let s = sym(&random_matrix(&mut rng));
            assert_relative_eq!(c.energy(&s), 1.7 * s.norm_squared(), epsilon = 1e-12);
            assert_relative_eq!(c.apply(&s), s * (2.0 * 1.7), epsilon = 1e-12);
        }
    }

    #[test]
    fn isotropic_detection() {
        let c = ElasticityTensor::isotropic(1.3, 2.9).unwrap();
        let (mu, kappa) = c.isotropic_moduli().expect("isotropic");
        assert_relative_eq!(mu, 1.3, epsilon = 1e-12);
        assert_relative_eq!(kappa, 2.9, epsilon = 1e-12);

        // Break isotropy in one shear entry.
        let mut m = *c.mandel();
        m[(3, 3)] *= 1.5;
        let aniso = ElasticityTensor::new(m).unwrap();
        assert!(aniso.isotropic_moduli().is_none());
    }

    #[test]
    fn indefinite_tensor_rejected() {
        let m = Matrix6::identity() * -1.0;
        assert!(ElasticityTensor::new(m).is_err());
    }

    #[test]
    fn axial_cross_product() {
        let w = Vector3::new(0.3, -1.2, 0.7);
        let x = Vector3::new(1.0, 2.0, -0.5);
        assert_relative_eq!(axial_to_skew(&w) * x, w.cross(&x), epsilon = 1e-14);
    }
}
