//! Energy bounds for two-phase composites of well-ordered isotropic phases.
//!
//! All strain-dependent quantities are evaluated on the sphere
//! `‖ε‖_F = √2/2`, where the invariants satisfy `t² + s² = 1` and the
//! Hashin–Shtrikman correction `q` depends on `t = |tr ε|` only.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::tensor_core::{
    loewner_leq, strain_invariants, OrthoTensor, PhasePair, StrainM, Tensor4, LOEWNER_TOL,
};
use crate::{Error, Result};

/// Active case of the correction `q(t; v)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HsBranch {
    B1,
    B2,
    B3,
}

/// Which realizability bound turns a tensor into a stiff-phase volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VolumeEstimatorKind {
    ZeroOrder,
    Voigt,
    HashinShtrikman,
}

/// Coarse-sampling plus golden-section search over `t ∈ [0,1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig1D {
    pub coarse_samples: usize,
    pub golden_tol: f64,
    pub brackets_max: usize,
}

impl Default for SearchConfig1D {
    fn default() -> Self {
        Self { coarse_samples: 256, golden_tol: 1e-10, brackets_max: 4 }
    }
}

impl SearchConfig1D {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_samples < 3 || !(self.golden_tol > 0.0) || self.brackets_max == 0 {
            return Err(Error::Invalid(format!("bad 1D search config {self:?}")));
        }
        Ok(())
    }
}

const NORM_TOL: f64 = 1e-10;

fn check_unit(x: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{name} = {x} outside [0,1]")));
    }
    Ok(())
}

fn check_normalized(e: &StrainM) -> Result<()> {
    if (e.norm() - FRAC_1_SQRT_2).abs() > NORM_TOL {
        return Err(Error::Domain(format!(
            "strain must have Frobenius norm √2/2, got {}",
            e.norm()
        )));
    }
    Ok(())
}

/// Fails unless `E⁻ ⪯ E ⪯ E⁺` within [`LOEWNER_TOL`].
pub fn check_admissible(e: &Tensor4, p: &PhasePair) -> Result<()> {
    if loewner_leq(&p.e_minus(), e, LOEWNER_TOL) && loewner_leq(e, &p.e_plus(), LOEWNER_TOL) {
        Ok(())
    } else {
        Err(Error::Inadmissible(format!("{:?}", e.m)))
    }
}

/// Branch thresholds `v12(t)`, `v13(t)` on the volume axis.
pub fn branch_thresholds(t: f64, p: &PhasePair) -> (f64, f64) {
    let s = (1.0 - t * t).max(0.0).sqrt();
    let r = t + s;
    let c = p.strong.kappa + p.strong.mu;
    (c / p.dkappa() * s / r, c / p.dmu() * t / r)
}

/// Value of one explicit branch formula, regardless of whether it is active.
pub fn q_branch_value(branch: HsBranch, t: f64, v: f64, p: &PhasePair) -> f64 {
    let (dk, dm) = (p.dkappa(), p.dmu());
    let c = p.strong.kappa + p.strong.mu;
    let s2 = (1.0 - t * t).max(0.0);
    match branch {
        HsBranch::B1 => {
            let w = dk * t - dm * s2.sqrt();
            v * (1.0 - v) * w * w / (c - (dk + dm) * v)
        }
        HsBranch::B2 => (1.0 - v) * (v * t * t * dk * dk / (c - dk * v) - s2 * dm),
        HsBranch::B3 => (1.0 - v) * (v * dm * dm * s2 / (c - dm * v) - t * t * dk),
    }
}

/// Branch selection; B1 is tested first and B2/B3 are mutually exclusive.
pub fn q_branch(t: f64, v: f64, p: &PhasePair) -> HsBranch {
    let (dk, dm) = (p.dkappa(), p.dmu());
    let c = p.strong.kappa + p.strong.mu;
    let s = (1.0 - t * t).max(0.0).sqrt();
    let in12 = v * t * dk <= (c - dk * v) * s;
    let in13 = v * dm * s <= (c - dm * v) * t;
    match (in12, in13) {
        (true, true) => HsBranch::B1,
        (false, true) => HsBranch::B2,
        (true, false) => HsBranch::B3,
        (false, false) => panic!("both B2 and B3 conditions hold at t={t}, v={v}"),
    }
}

/// HS correction `q(t; v) ≥ 0` and its active branch.
pub fn q_correction(t: f64, v: f64, p: &PhasePair) -> Result<(f64, HsBranch)> {
    check_unit(t, "t")?;
    check_unit(v, "v")?;
    let b = q_branch(t, v, p);
    Ok((q_branch_value(b, t, v, p), b))
}

/// Voigt energy of a normalized strain with trace invariant `t`.
pub fn voigt_energy(t: f64, v: f64, p: &PhasePair) -> f64 {
    let t2 = t * t;
    (p.weak.kappa + v * p.dkappa()) * t2 + (p.weak.mu + v * p.dmu()) * (1.0 - t2)
}

/// `f^HS` on the normalized sphere as a function of `(t, v)`.
pub fn hs_energy(t: f64, v: f64, p: &PhasePair) -> f64 {
    let b = q_branch(t, v, p);
    voigt_energy(t, v, p) - q_branch_value(b, t, v, p)
}

/// HS upper energy bound for a normalized strain.
pub fn f_hs(e: &StrainM, v: f64, p: &PhasePair) -> Result<f64> {
    check_normalized(e)?;
    check_unit(v, "v")?;
    let (t, _) = strain_invariants(e);
    let voigt = p.voigt(v).energy(e);
    Ok(voigt - q_correction(t.min(1.0), v, p)?.0)
}

/// Positively 2-homogeneous extension of [`f_hs`] to arbitrary strains.
pub fn f_hs_scaled(e: &StrainM, v: f64, p: &PhasePair) -> Result<f64> {
    let n = e.norm();
    if n == 0.0 {
        return Ok(0.0);
    }
    let k = n / FRAC_1_SQRT_2;
    Ok(k * k * f_hs(&e.normalized(), v, p)?)
}

/// Root of `v ↦ f^HS(t; v) − energy` on `[0,1]` by bisection.
pub fn activating_volume_bisect(t: f64, energy: f64, p: &PhasePair) -> f64 {
    if energy <= hs_energy(t, 0.0, p) {
        return 0.0;
    }
    if energy >= hs_energy(t, 1.0, p) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hs_energy(t, mid, p) < energy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form activating volume for a normalized strain with invariant `t`
/// carrying the energy `energy = ⟨Eε,ε⟩`.
pub fn activating_volume_te(t: f64, energy: f64, p: &PhasePair) -> Result<f64> {
    let e = energy;
    let (kp, mp, km, mm) = (p.strong.kappa, p.strong.mu, p.weak.kappa, p.weak.mu);
    let (dk, dm) = (p.dkappa(), p.dmu());
    let (e0, e1) = (hs_energy(t, 0.0, p), hs_energy(t, 1.0, p));
    let round = 1e-14 * e1;
    if e <= e0 + round {
        return Ok(0.0);
    }
    if e >= e1 - round {
        return Ok(1.0);
    }
    let t2 = t * t;
    let s = (1.0 - t2).max(0.0).sqrt();
    let r2 = (t + s) * (t + s);
    let c = kp + mp;
    let (v12, v13) = branch_thresholds(t, p);
    let seam = 1e-12;

    let lin = e * (dm + dk) + (1.0 - 2.0 * t2) * (dm * kp - dk * mp);
    let bracket = lin + dm * dk * r2;
    let mut d = bracket * bracket - 4.0 * dm * dk * c * r2 * (e + (t2 - 1.0) * mm - t2 * km);
    let scale = bracket * bracket;
    if d < 0.0 {
        if d < -1e-9 * scale.max(1.0) {
            return Err(Error::Numerical(format!("negative discriminant {d} at t={t}, energy={e}")));
        }
        d = 0.0;
    }
    let v1 = 0.5 + (lin - d.sqrt()) / (2.0 * dm * dk * r2);
    if v1 <= v12.min(v13) + seam {
        return Ok(v1.clamp(0.0, 1.0));
    }

    let den2 = e - mp * (1.0 - 2.0 * t2);
    if den2.abs() > seam * e.abs().max(1.0) {
        let v2 = c / dk * (1.0 - t2 * (km + mp) / den2);
        if v2 > v12 - seam && v2 > -seam && v2 < 1.0 + seam {
            return Ok(v2.clamp(0.0, 1.0));
        }
    }
    let den3 = e + kp * (1.0 - 2.0 * t2);
    if den3.abs() > seam * e.abs().max(1.0) {
        let v3 = c / dm * (1.0 - (1.0 - t2) * (kp + mm) / den3);
        if v3 > v13 - seam && v3 > -seam && v3 < 1.0 + seam {
            return Ok(v3.clamp(0.0, 1.0));
        }
    }
    Ok(activating_volume_bisect(t, e, p))
}

/// Smallest `v` with `⟨Eε,ε⟩ = f^HS(ε; v)`.
pub fn activating_volume(e: &StrainM, tensor: &Tensor4, p: &PhasePair) -> Result<f64> {
    check_normalized(e)?;
    check_admissible(tensor, p)?;
    let (t, _) = strain_invariants(e);
    activating_volume_te(t.min(1.0), tensor.energy(e), p)
}

/// Largest energy of the base tensor over normalized strains with `|tr ε| = t`.
pub fn emax_energy(t: f64, base: &OrthoTensor) -> f64 {
    let (a, b, c, g) = (base.e1111, base.e1122, base.e2222, base.e1212);
    let xi = a - 2.0 * b + c - 4.0 * g;
    let delta = a - c;
    let t2 = t * t;
    let s2 = (1.0 - t2).max(0.0);
    if xi < 0.0 && t <= xi.abs() / (xi * xi + delta * delta).sqrt() {
        0.25 * t2 * (a + 2.0 * b + c) + g * s2 - t2 * delta * delta / (4.0 * xi)
    } else {
        0.25 * (a - 2.0 * b + c) + b * t2 + 0.5 * delta.abs() * t * s2.sqrt()
    }
}

/// Cheap block test of the Loewner bounds for an orthotropic base.
pub fn ortho_admissible(base: &OrthoTensor, p: &PhasePair, tol: f64) -> bool {
    let (lo, hi) = (p.e_minus().m, p.e_plus().m);
    let e33 = 2.0 * base.e1212;
    if e33 < lo[(2, 2)] - tol || e33 > hi[(2, 2)] + tol {
        return false;
    }
    let psd2 = |a: f64, b: f64, c: f64| {
        let half_tr = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        half_tr - rad >= -tol
    };
    psd2(base.e1111 - lo[(0, 0)], base.e1122 - lo[(0, 1)], base.e2222 - lo[(1, 1)])
        && psd2(hi[(0, 0)] - base.e1111, hi[(0, 1)] - base.e1122, hi[(1, 1)] - base.e2222)
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Global maximum of `f` on `[0,1]`: coarse sampling, then golden-section
/// refinement of the best local maxima. Ties resolve to the leftmost point.
pub fn maximize_on_unit<F: Fn(f64) -> f64>(f: F, cfg: &SearchConfig1D) -> (f64, f64) {
    let n = cfg.coarse_samples;
    let h = 1.0 / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|k| f(k as f64 * h)).collect();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&k| {
            let left = k == 0 || vals[k] >= vals[k - 1];
            let right = k == n - 1 || vals[k] >= vals[k + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    peaks.truncate(cfg.brackets_max);
    let mut best = (0.0, vals[0]);
    for (k, &v) in vals.iter().enumerate() {
        if v > best.1 {
            best = (k as f64 * h, v);
        }
    }
    for &k in &peaks {
        let a = k.saturating_sub(1) as f64 * h;
        let b = ((k + 1).min(n - 1)) as f64 * h;
        let (x, v) = golden_max(&f, a, b, cfg.golden_tol);
        if v > best.1 || (v == best.1 && x < best.0) {
            best = (x, v);
        }
    }
    best
}

pub(crate) fn worst_case_volume_unchecked(base: &OrthoTensor, p: &PhasePair, cfg: &SearchConfig1D) -> f64 {
    let f = |t: f64| activating_volume_te(t, emax_energy(t, base), p).unwrap_or_else(|_| {
        activating_volume_bisect(t, emax_energy(t, base), p)
    });
    maximize_on_unit(f, cfg).1.clamp(0.0, 1.0)
}

/// `sup_t v̂(t; E_max(t))`, the smallest volume at which the orthotropic
/// tensor satisfies the HS bound for every strain.
pub fn worst_case_volume(base: &OrthoTensor, p: &PhasePair, cfg: &SearchConfig1D) -> Result<f64> {
    cfg.validate()?;
    if !ortho_admissible(base, p, LOEWNER_TOL) {
        return Err(Error::Inadmissible(format!("{base:?}")));
    }
    Ok(worst_case_volume_unchecked(base, p, cfg))
}

/// Smallest `v` with `E ⪯ E⁻ + v(E⁺ − E⁻)`.
pub fn voigt_min_volume(e: &Tensor4, p: &PhasePair) -> Result<f64> {
    check_admissible(e, p)?;
    Ok(voigt_min_volume_unchecked(e, p))
}

pub(crate) fn voigt_min_volume_unchecked(e: &Tensor4, p: &PhasePair) -> f64 {
    let w = p.e_plus().m - p.e_minus().m;
    let eig = SymmetricEigen::new(w);
    let inv_sqrt = eig.eigenvectors
        * nalgebra::Matrix3::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()))
        * eig.eigenvectors.transpose();
    let a = inv_sqrt * (e.m - p.e_minus().m) * inv_sqrt;
    SymmetricEigen::new(0.5 * (a + a.transpose())).eigenvalues.max().clamp(0.0, 1.0)
}

/// Trace-ratio volume `(tr E − tr E⁻)/(tr E⁺ − tr E⁻)`.
pub fn zo_volume(e: &Tensor4, p: &PhasePair) -> Result<f64> {
    check_admissible(e, p)?;
    Ok(zo_volume_unchecked(e, p))
}

pub(crate) fn zo_volume_unchecked(e: &Tensor4, p: &PhasePair) -> f64 {
    let (lo, hi) = (p.e_minus().trace(), p.e_plus().trace());
    ((e.trace() - lo) / (hi - lo)).clamp(0.0, 1.0)
}

impl VolumeEstimatorKind {
    /// Volume attributed to an admissible orthotropic tensor.
    pub fn volume(&self, base: &OrthoTensor, p: &PhasePair, cfg: &SearchConfig1D) -> Result<f64> {
        if !ortho_admissible(base, p, LOEWNER_TOL) {
            return Err(Error::Inadmissible(format!("{base:?}")));
        }
        Ok(self.volume_unchecked(base, p, cfg))
    }

    pub(crate) fn volume_unchecked(&self, base: &OrthoTensor, p: &PhasePair, cfg: &SearchConfig1D) -> f64 {
        match self {
            Self::ZeroOrder => zo_volume_unchecked(&base.base(), p),
            Self::Voigt => voigt_min_volume_unchecked(&base.base(), p),
            Self::HashinShtrikman => worst_case_volume_unchecked(base, p, cfg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::{IsoModuli, Vec3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig_phases() -> PhasePair {
        PhasePair::new(
            IsoModuli::new(0.714e-9, 0.385e-9).unwrap(),
            IsoModuli::new(0.714, 0.385).unwrap(),
        )
        .unwrap()
    }

    fn bench_phases() -> PhasePair {
        PhasePair::from_contrast(1.0, 0.3, 1e-2).unwrap()
    }

    fn t_star(p: &PhasePair) -> f64 {
        p.dmu() / (p.dmu().powi(2) + p.dkappa().powi(2)).sqrt()
    }

    pub(crate) fn random_base(rng: &mut ChaCha8Rng, p: &PhasePair) -> OrthoTensor {
        let (lo, hi) = (p.e_minus().m, p.e_plus().m);
        loop {
            let e11 = rng.gen_range(lo[(0, 0)]..hi[(0, 0)]);
            let e22 = rng.gen_range(lo[(1, 1)]..hi[(1, 1)]);
            let e12 = rng.gen_range(lo[(0, 1)] - 0.5..hi[(0, 1)] + 0.5);
            let e33 = rng.gen_range(lo[(2, 2)]..hi[(2, 2)]);
            let b = OrthoTensor::from_mandel(e11, e12, e22, e33, rng.gen_range(0.0..std::f64::consts::PI));
            if ortho_admissible(&b, p, 0.0) {
                return b;
            }
        }
    }

    fn strain_with_t(t: f64, theta: f64) -> StrainM {
        // tr ε = t and deviatoric part of norm √(1-t²)/2 at angle θ
        let w = (1.0 - t * t).max(0.0).sqrt() / 2.0;
        StrainM::from_components(t / 2.0 + w * theta.cos(), t / 2.0 - w * theta.cos(), w * theta.sin())
    }

    #[test]
    fn q_examples() {
        let p = fig_phases();
        assert_eq!(q_correction(0.3, 0.0, &p).unwrap().0, 0.0);
        assert_eq!(q_correction(0.7, 1.0, &p).unwrap().0, 0.0);
        let ts = t_star(&p);
        assert!((ts - 0.4746).abs() < 1e-4);
        assert!(q_correction(ts, 0.5, &p).unwrap().0.abs() < 1e-12);
        let (q, b) = q_correction(1.0, 0.5, &p).unwrap();
        // with s = 0: B2 applies and q = (1-v)·v·Δκ²/(κ⁺+μ⁺-vΔκ)
        let (dk, c) = (p.dkappa(), p.strong.kappa + p.strong.mu);
        assert_eq!(b, HsBranch::B2);
        assert!((q - 0.25 * dk * dk / (c - 0.5 * dk)).abs() < 1e-14);
        assert!(q_correction(1.2, 0.5, &p).is_err());
        assert!(q_correction(0.5, -0.1, &p).is_err());
    }

    #[test]
    fn q_nonnegative_and_equality_set() {
        for p in [fig_phases(), bench_phases()] {
            let ts = t_star(&p);
            for i in 0..200 {
                for j in 0..200 {
                    let t = i as f64 / 199.0;
                    let v = j as f64 / 199.0;
                    let (q, _) = q_correction(t, v, &p).unwrap();
                    assert!(q >= -1e-15, "q={q} at t={t} v={v}");
                    if q.abs() <= 1e-10 {
                        assert!(j == 0 || j == 199 || (t - ts).abs() < 1e-4, "zero at t={t}, v={v}");
                    }
                }
            }
        }
    }

    #[test]
    fn branch_seams_are_continuous() {
        for p in [fig_phases(), bench_phases()] {
            for i in 1..100 {
                let t = i as f64 / 100.0;
                let (v12, v13) = branch_thresholds(t, &p);
                for (v, other) in [(v12, HsBranch::B2), (v13, HsBranch::B3)] {
                    if v > 0.0 && v < 1.0 {
                        let a = q_branch_value(HsBranch::B1, t, v, &p);
                        let b = q_branch_value(other, t, v, &p);
                        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn f_hs_endpoints_and_interior() {
        let p = bench_phases();
        let e = StrainM::new(Vec3::new(0.3, -0.2, 0.4)).normalized();
        assert!((f_hs(&e, 0.0, &p).unwrap() - p.e_minus().energy(&e)).abs() < 1e-15);
        assert!((f_hs(&e, 1.0, &p).unwrap() - p.e_plus().energy(&e)).abs() < 1e-15);
        assert!(f_hs(&e, 0.4, &p).unwrap() < p.voigt(0.4).energy(&e));
        assert!(f_hs(&StrainM::new(Vec3::new(1.0, 0.0, 0.0)), 0.5, &p).is_err());
    }

    #[test]
    fn activating_volume_examples() {
        let p = bench_phases();
        let e = StrainM::new(Vec3::new(0.3, -0.2, 0.4)).normalized();
        assert_eq!(activating_volume(&e, &p.e_minus(), &p).unwrap(), 0.0);
        assert_eq!(activating_volume(&e, &p.e_plus(), &p).unwrap(), 1.0);
        let v = activating_volume(&e, &p.voigt(0.4), &p).unwrap();
        assert!(v > 0.4);
        let (t, _) = e.invariants();
        assert!((v - activating_volume_bisect(t, p.voigt(0.4).energy(&e), &p)).abs() < 1e-10);
        assert!(activating_volume(&e, &p.e_plus().inverse().unwrap(), &p).is_err());
    }

    #[test]
    fn activating_volume_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [bench_phases(), fig_phases(), PhasePair::from_contrast(1.0, 0.3, 1e-3).unwrap()] {
            for _ in 0..3000 {
                let t = if rng.gen_bool(0.05) { rng.gen_range(0..2) as f64 } else { rng.gen_range(0.0..1.0) };
                let e = rng.gen_range(hs_energy(t, 0.0, &p)..hs_energy(t, 1.0, &p));
                let a = activating_volume_te(t, e, &p).unwrap();
                let b = activating_volume_bisect(t, e, &p);
                assert!((a - b).abs() < 1e-8, "t={t} e={e}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn emax_examples() {
        let iso = OrthoTensor::iso(IsoModuli::new(0.6, 0.25).unwrap());
        for t in [0.0, 0.3, 1.0] {
            assert!((emax_energy(t, &iso) - (0.6 * t * t + 0.25 * (1.0 - t * t))).abs() < 1e-14);
        }
        let sym = OrthoTensor::new(1.0, 0.2, 1.0, 0.6, 0.0);
        assert!(1.0 - 0.4 - 2.4 < 0.0);
        assert!((emax_energy(0.0, &sym) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn emax_matches_strain_sampling() {
        let p = bench_phases();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let b = random_base(&mut rng, &p);
            for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let n = 100_000;
                let best = (0..n)
                    .map(|k| b.base().energy(&strain_with_t(t, 2.0 * std::f64::consts::PI * k as f64 / n as f64)))
                    .fold(f64::MIN, f64::max);
                assert!((best - emax_energy(t, &b)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn worst_case_examples() {
        let p = bench_phases();
        let cfg = SearchConfig1D::default();
        assert_eq!(worst_case_volume(&OrthoTensor::iso(p.weak), &p, &cfg).unwrap(), 0.0);
        assert!((worst_case_volume(&OrthoTensor::iso(p.strong), &p, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let bad = OrthoTensor::new(5.0, 0.0, 1.0, 0.2, 0.0);
        assert!(worst_case_volume(&bad, &p, &cfg).is_err());
    }

    #[test]
    fn worst_case_matches_dense_search() {
        let p = bench_phases();
        let cfg = SearchConfig1D::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let b = random_base(&mut rng, &p);
            let dense = (0..10_000)
                .map(|k| {
                    let t = k as f64 / 9999.0;
                    activating_volume_bisect(t, emax_energy(t, &b), &p)
                })
                .fold(f64::MIN, f64::max);
            let w = worst_case_volume(&b, &p, &cfg).unwrap();
            assert!(w >= dense - 1e-9 && w - dense < 1e-6, "{w} vs {dense}");
            let phi = rng.gen_range(0.0..3.0);
            assert_eq!(worst_case_volume(&b.with_phi(phi), &p, &cfg).unwrap(), w);
        }
    }

    #[test]
    fn estimator_examples() {
        let p = bench_phases();
        let mid = Tensor4::new(0.5 * (p.e_minus().m + p.e_plus().m));
        assert_eq!(zo_volume(&p.e_minus(), &p).unwrap(), 0.0);
        assert_eq!(zo_volume(&p.e_plus(), &p).unwrap(), 1.0);
        assert!((zo_volume(&mid, &p).unwrap() - 0.5).abs() < 1e-14);
        assert!(voigt_min_volume(&p.e_minus(), &p).unwrap().abs() < 1e-14);
        assert!((voigt_min_volume(&mid, &p).unwrap() - 0.5).abs() < 1e-12);
        // iso witness: κ̂ = κ⁻ + θΔκ, μ̂ = μ⁻ has trace volume αθ
        let alpha = p.dkappa() / (p.dkappa() + 2.0 * p.dmu());
        for theta in [0.1, 0.5, 0.9] {
            let e = IsoModuli::new(p.weak.kappa + theta * p.dkappa(), p.weak.mu).unwrap().tensor();
            assert!((zo_volume(&e, &p).unwrap() - alpha * theta).abs() < 1e-14);
        }
    }

    #[test]
    fn voigt_min_volume_matches_loewner_bisection() {
        let p = bench_phases();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let b = random_base(&mut rng, &p).tensor();
            let v = voigt_min_volume(&b, &p).unwrap();
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if loewner_leq(&b, &p.voigt(mid), 0.0) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((v - hi).abs() < 1e-8);
            assert!(loewner_leq(&b, &p.voigt(v), 1e-12));
            assert!(v < 1e-6 || !loewner_leq(&b, &p.voigt(v - 1e-6), 0.0));
        }
    }

    proptest! {
        #[test]
        fn f_hs_strictly_increasing_in_v(t in 0.0f64..1.0, i in 0usize..99) {
            let p = bench_phases();
            let v0 = i as f64 / 100.0;
            prop_assert!(hs_energy(t, v0 + 0.01, &p) > hs_energy(t, v0, &p));
        }

        #[test]
        fn never_both_b2_and_b3(t in 0.0f64..=1.0, v in 0.0f64..=1.0) {
            let p = fig_phases();
            let b = q_branch(t, v, &p);
            let (v12, v13) = branch_thresholds(t, &p);
            prop_assert!(!(v > v12 && v > v13));
            prop_assert!(b != HsBranch::B1 || (v <= v12 + 1e-12 && v <= v13 + 1e-12));
        }

        #[test]
        fn estimator_ordering(seed in 0u64..10_000) {
            let p = bench_phases();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_base(&mut rng, &p);
            let cfg = SearchConfig1D::default();
            let zo = zo_volume(&b.tensor(), &p).unwrap();
            let vo = voigt_min_volume(&b.tensor(), &p).unwrap();
            let hs = worst_case_volume(&b, &p, &cfg).unwrap();
            prop_assert!(zo <= vo + 1e-12 && vo <= hs + 1e-9, "{} {} {}", zo, vo, hs);
        }
    }
}
