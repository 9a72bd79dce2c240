//! 2D symmetric-tensor algebra in the Kelvin–Mandel basis.
//!
//! A symmetric strain is stored as `(ε11, ε22, √2·ε12)` and a fourth-order
//! elasticity tensor as the symmetric 3×3 matrix
//!
//! ```text
//! [ E1111      E1122      √2·E1112 ]
//! [ E1122      E2222      √2·E2212 ]
//! [ √2·E1112   √2·E2212   2·E1212  ]
//! ```
//!
//! With this scaling the basis is orthonormal, so Frobenius products of
//! tensors are Euclidean products of Mandel vectors and a change of frame is
//! an orthogonal conjugation.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Default absolute tolerance for Loewner comparisons.
pub const LOEWNER_TOL: f64 = 1e-9;

/// Plane-stress bulk and shear modulus of an isotropic phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoModuli {
    pub kappa: f64,
    pub mu: f64,
}

impl IsoModuli {
    pub fn new(kappa: f64, mu: f64) -> Result<Self> {
        if !(kappa > 0.0 && mu > 0.0) || !kappa.is_finite() || !mu.is_finite() {
            return Err(Error::Invalid(format!(
                "moduli must be positive, got kappa={kappa}, mu={mu}"
            )));
        }
        Ok(Self { kappa, mu })
    }

    /// Plane-stress moduli from Young's modulus and Poisson's ratio.
    pub fn from_young_poisson(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0) || !(poisson > -1.0 && poisson < 1.0) {
            return Err(Error::Invalid(format!(
                "need E > 0 and -1 < nu < 1, got E={young}, nu={poisson}"
            )));
        }
        Self::new(young / (2.0 * (1.0 - poisson)), young / (2.0 * (1.0 + poisson)))
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        Self::new(self.kappa * factor, self.mu * factor)
    }

    pub fn tensor(self) -> Tensor4 {
        iso_tensor(self)
    }
}

/// Well-ordered weak/strong pair of isotropic phases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePair {
    pub weak: IsoModuli,
    pub strong: IsoModuli,
}

impl PhasePair {
    pub fn new(weak: IsoModuli, strong: IsoModuli) -> Result<Self> {
        if !(weak.kappa < strong.kappa && weak.mu < strong.mu) {
            return Err(Error::Invalid(format!(
                "phases are not well ordered: weak={weak:?}, strong={strong:?}"
            )));
        }
        Ok(Self { weak, strong })
    }

    /// Strong phase from (E, ν); the weak phase is the strong one scaled by `contrast`.
    pub fn from_contrast(young: f64, poisson: f64, contrast: f64) -> Result<Self> {
        if !(contrast > 0.0 && contrast < 1.0) {
            return Err(Error::Invalid(format!("contrast must lie in (0,1), got {contrast}")));
        }
        let strong = IsoModuli::from_young_poisson(young, poisson)?;
        Self::new(strong.scaled(contrast)?, strong)
    }

    pub fn dkappa(&self) -> f64 {
        self.strong.kappa - self.weak.kappa
    }

    pub fn dmu(&self) -> f64 {
        self.strong.mu - self.weak.mu
    }

    pub fn e_minus(&self) -> Tensor4 {
        iso_tensor(self.weak)
    }

    pub fn e_plus(&self) -> Tensor4 {
        iso_tensor(self.strong)
    }

    /// Arithmetic (Voigt) mixture `(1-v)E⁻ + vE⁺`.
    pub fn voigt(&self, v: f64) -> Tensor4 {
        iso_tensor(IsoModuli {
            kappa: self.weak.kappa + v * self.dkappa(),
            mu: self.weak.mu + v * self.dmu(),
        })
    }
}

/// Elasticity tensor as a symmetric Kelvin–Mandel matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub m: Mat3,
}

impl Tensor4 {
    pub fn new(m: Mat3) -> Self {
        Self { m: 0.5 * (m + m.transpose()) }
    }

    pub fn zero() -> Self {
        Self { m: Mat3::zeros() }
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn energy(&self, e: &StrainM) -> f64 {
        energy(self, e)
    }

    pub fn inverse(&self) -> Option<Tensor4> {
        self.m.try_inverse().map(Tensor4::new)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.m).eigenvalues.min()
    }

    /// Complementary energy `⟨E⁻¹σ,σ⟩`.
    pub fn compliance_energy(&self, s: &StressM) -> Option<f64> {
        self.m.cholesky().map(|c| {
            let y = c.solve(&s.v);
            s.v.dot(&y)
        })
    }
}

/// Orthotropic tensor: base coefficients in the material frame and the
/// orientation of that frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoTensor {
    pub e1111: f64,
    pub e1122: f64,
    pub e2222: f64,
    pub e1212: f64,
    pub phi: f64,
}

impl OrthoTensor {
    pub fn new(e1111: f64, e1122: f64, e2222: f64, e1212: f64, phi: f64) -> Self {
        Self { e1111, e1122, e2222, e1212, phi: normalize_angle(phi) }
    }

    /// Isotropic tensor in orthotropic form (angle zero).
    pub fn iso(m: IsoModuli) -> Self {
        Self::new(m.kappa + m.mu, m.kappa - m.mu, m.kappa + m.mu, m.mu, 0.0)
    }

    /// Base coefficients from Mandel entries `(M11, M12, M22, M33)`.
    pub fn from_mandel(m11: f64, m12: f64, m22: f64, m33: f64, phi: f64) -> Self {
        Self::new(m11, m12, m22, 0.5 * m33, phi)
    }

    pub fn base(&self) -> Tensor4 {
        Tensor4 {
            m: Mat3::new(
                self.e1111, self.e1122, 0.0, //
                self.e1122, self.e2222, 0.0, //
                0.0, 0.0, 2.0 * self.e1212,
            ),
        }
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self { phi: normalize_angle(phi), ..*self }
    }

    pub fn tensor(&self) -> Tensor4 {
        rotate(self)
    }
}

/// Strain Mandel vector `(ε11, ε22, √2·ε12)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainM {
    pub v: Vec3,
}

impl StrainM {
    pub fn new(v: Vec3) -> Self {
        Self { v }
    }

    pub fn from_components(e11: f64, e22: f64, e12: f64) -> Self {
        Self { v: Vec3::new(e11, e22, SQRT_2 * e12) }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        mandel_to_matrix(&self.v)
    }

    pub fn from_matrix(a: &Matrix2<f64>) -> Self {
        Self { v: matrix_to_mandel(a) }
    }

    /// Frobenius norm of the 2×2 tensor (equals the Euclidean Mandel norm).
    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    /// Rescaled copy with `‖ε‖_F = √2/2`; zero stays zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            *self
        } else {
            Self { v: self.v * (FRAC_1_SQRT_2 / n) }
        }
    }

    pub fn invariants(&self) -> (f64, f64) {
        strain_invariants(self)
    }
}

/// Stress Mandel vector `(σ11, σ22, √2·σ12)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressM {
    pub v: Vec3,
}

/// Spectral data of a 2D stress: `s1 ≥ s2` and the matching unit directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Principal {
    pub s1: f64,
    pub s2: f64,
    pub u1: Vector2<f64>,
    pub u2: Vector2<f64>,
}

impl StressM {
    pub fn new(v: Vec3) -> Self {
        Self { v }
    }

    pub fn from_components(s11: f64, s22: f64, s12: f64) -> Self {
        Self { v: Vec3::new(s11, s22, SQRT_2 * s12) }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        mandel_to_matrix(&self.v)
    }

    /// Eigenvalues and principal directions; repeated eigenvalues give the identity frame.
    pub fn principal(&self) -> Principal {
        let (a, b, c) = (self.v[0], self.v[1], self.v[2] * FRAC_1_SQRT_2);
        let mean = 0.5 * (a + b);
        let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
        let (s1, s2) = (mean + rad, mean - rad);
        if (s1 - s2).abs() < 1e-12 * (s1.abs() + s2.abs()).max(1.0) {
            return Principal { s1, s2, u1: Vector2::new(1.0, 0.0), u2: Vector2::new(0.0, 1.0) };
        }
        let th = 0.5 * (2.0 * c).atan2(a - b);
        let (sn, cs) = th.sin_cos();
        Principal { s1, s2, u1: Vector2::new(cs, sn), u2: Vector2::new(-sn, cs) }
    }
}

impl Principal {
    /// Matrix whose columns are the principal directions.
    pub fn basis(&self) -> Matrix2<f64> {
        Matrix2::from_columns(&[self.u1, self.u2])
    }
}

pub fn mandel_to_matrix(v: &Vec3) -> Matrix2<f64> {
    let off = v[2] * FRAC_1_SQRT_2;
    Matrix2::new(v[0], off, off, v[1])
}

pub fn matrix_to_mandel(a: &Matrix2<f64>) -> Vec3 {
    Vec3::new(a[(0, 0)], a[(1, 1)], FRAC_1_SQRT_2 * (a[(0, 1)] + a[(1, 0)]))
}

/// Map `φ` into `[0, π)`.
pub fn normalize_angle(phi: f64) -> f64 {
    let r = phi.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Planar rotation `Q(φ) = [[cos φ, −sin φ], [sin φ, cos φ]]`.
pub fn rot2(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Mandel matrix of the linear map `ε ↦ Q ε Qᵀ` on symmetric tensors.
pub fn mandel_conjugation(q: &Matrix2<f64>) -> Mat3 {
    let basis = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let cols: Vec<Vec3> = basis
        .iter()
        .map(|b| matrix_to_mandel(&(q * mandel_to_matrix(b) * q.transpose())))
        .collect();
    Mat3::from_columns(&cols)
}

/// Mandel rotation `R(φ)`, the matrix of `ε ↦ Q(φ) ε Q(φ)ᵀ`.
pub fn mandel_rotation(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    let cs = SQRT_2 * c * s;
    Mat3::new(
        c * c, s * s, -cs, //
        s * s, c * c, cs, //
        cs, -cs, c * c - s * s,
    )
}

/// Transform a tensor by an orthogonal `Q` with the index rule
/// `E'_ijkl = Q_ip Q_jq Q_kr Q_ls E_pqrs`.
pub fn transform(e: &Tensor4, q: &Matrix2<f64>) -> Tensor4 {
    let r = mandel_conjugation(q);
    Tensor4::new(r * e.m * r.transpose())
}

pub fn iso_tensor(m: IsoModuli) -> Tensor4 {
    let (k, g) = (m.kappa, m.mu);
    Tensor4 {
        m: Mat3::new(
            k + g, k - g, 0.0, //
            k - g, k + g, 0.0, //
            0.0, 0.0, 2.0 * g,
        ),
    }
}

/// Global tensor `R(φ) M_b R(φ)ᵀ`; `energy(rotate(t), ε) = energy(base, QᵀεQ)`.
pub fn rotate(t: &OrthoTensor) -> Tensor4 {
    let r = mandel_rotation(t.phi);
    Tensor4::new(r * t.base().m * r.transpose())
}

/// `a ⪯ b` up to an absolute eigenvalue tolerance.
pub fn loewner_leq(a: &Tensor4, b: &Tensor4, tol: f64) -> bool {
    SymmetricEigen::new(b.m - a.m).eigenvalues.min() >= -tol
}

pub fn strain_invariants(e: &StrainM) -> (f64, f64) {
    let (a, b, c) = (e.v[0], e.v[1], e.v[2]);
    // √2·ε12 = c, so 4ε12² = 2c²
    ((a + b).abs(), ((a - b) * (a - b) + 2.0 * c * c).sqrt())
}

pub fn energy(e: &Tensor4, s: &StrainM) -> f64 {
    s.v.dot(&(e.m * s.v))
}

/// `½(E + T_Q(E))` with the reflection `Q = U·diag(1,−1)·Uᵀ`.
pub fn symmetrize_orthotropic(e: &Tensor4, principal_basis: &Matrix2<f64>) -> Tensor4 {
    let u = principal_basis;
    let q = u * Matrix2::new(1.0, 0.0, 0.0, -1.0) * u.transpose();
    Tensor4::new(0.5 * (e.m + transform(e, &q).m))
}
