//! Single-loadcase alternating minimization with sequential laminates.
//!
//! The material step minimizes the explicit lower bound `f_c^HS(σ; v)` on
//! complementary energy plus a volume price, elementwise, and replaces each
//! element tensor by the rank-one or rank-two laminate attaining that bound.

use nalgebra::{Matrix3x2, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::fem2d::{DesignField, FemModel, Problem};
use crate::sgp_solver::dual_bisection;
use crate::tensor_core::{mandel_rotation, Mat3, OrthoTensor, PhasePair, StressM, Tensor4, Vec3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FcCase {
    /// Simple laminate.
    C1,
    /// Rank-two laminate, trace dominated.
    C2,
    /// Rank-two laminate, deviator dominated.
    C3,
}

/// Active case of `f_c^HS` with the auxiliary scalars that decide it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FcBranch {
    pub case: FcCase,
    pub s_plus: f64,
    pub s_minus: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub a: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaminateParams {
    pub rank: usize,
    pub directions: [[f64; 2]; 2],
    pub weights: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmConfig {
    pub density_change_tol: f64,
    pub compliance_rel_tol: f64,
    pub max_iters: usize,
    pub volume_tol: f64,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self { density_change_tol: 1e-5, compliance_rel_tol: 1e-8, max_iters: 50_000, volume_tol: 1e-8 }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.density_change_tol > 0.0) {
            bad.push("density_change_tol must be > 0");
        }
        if !(self.compliance_rel_tol > 0.0) {
            bad.push("compliance_rel_tol must be > 0");
        }
        if !(self.volume_tol > 0.0) {
            bad.push("volume_tol must be > 0");
        }
        if self.max_iters == 0 {
            bad.push("max_iters must be >= 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(bad.join("; ")))
        }
    }
}

struct Spectral {
    s1: f64,
    s2: f64,
    u1: Vector2<f64>,
    u2: Vector2<f64>,
    /// `⟨(E⁻)⁻¹σ, σ⟩` and `⟨(E⁺)⁻¹σ, σ⟩`.
    a_minus: f64,
    a_plus: f64,
}

fn spectral(s: &StressM, p: &PhasePair) -> Spectral {
    let pr = s.principal();
    let (tr, dev) = (pr.s1 + pr.s2, pr.s1 - pr.s2);
    let comp = |k: f64, g: f64| tr * tr / (4.0 * k) + dev * dev / (4.0 * g);
    Spectral {
        s1: pr.s1,
        s2: pr.s2,
        u1: pr.u1,
        u2: pr.u2,
        a_minus: comp(p.weak.kappa, p.weak.mu),
        a_plus: comp(p.strong.kappa, p.strong.mu),
    }
}

fn branch_of(sp: &Spectral, v: f64, p: &PhasePair) -> FcBranch {
    let (km, gm, kp, gp) = (p.weak.kappa, p.weak.mu, p.strong.kappa, p.strong.mu);
    let (dk, dg) = (p.dkappa(), p.dmu());
    let s_plus = (sp.s1 + sp.s2).abs();
    let s_minus = (sp.s1 - sp.s2).abs();
    let d1 = (1.0 - v) * km * gm * (kp + gp) + v * kp * gp * (km + gm);
    let d2 = km * (kp + gp) + v * gp * dk;
    let d3 = gm * (kp + gp) + v * kp * dg;
    let a = km * kp * dg * s_minus + gm * gp * dk * s_plus;
    let c2 = v * gp * dk * s_plus >= d2 * s_minus;
    let c3 = v * kp * dg * s_minus >= d3 * s_plus;
    let case = if !c2 && !c3 {
        FcCase::C1
    } else if c2 {
        FcCase::C2
    } else {
        FcCase::C3
    };
    FcBranch { case, s_plus, s_minus, d1, d2, d3, a }
}

fn fc_value(sp: &Spectral, v: f64, b: &FcBranch, p: &PhasePair) -> f64 {
    let (km, gm, kp, gp) = (p.weak.kappa, p.weak.mu, p.strong.kappa, p.strong.mu);
    let (dk, dg) = (p.dkappa(), p.dmu());
    match b.case {
        FcCase::C1 => {
            (1.0 - v) * sp.a_minus + v * sp.a_plus
                - v * (1.0 - v) * b.a * b.a / (4.0 * km * kp * gm * gp * b.d1)
        }
        FcCase::C2 => sp.a_plus + (1.0 - v) * dk * (kp + gp) * b.s_plus * b.s_plus / (4.0 * kp * b.d2),
        FcCase::C3 => sp.a_plus + (1.0 - v) * dg * (kp + gp) * b.s_minus * b.s_minus / (4.0 * gp * b.d3),
    }
}

fn fc_slope(sp: &Spectral, v: f64, b: &FcBranch, p: &PhasePair) -> f64 {
    let (km, gm, kp, gp) = (p.weak.kappa, p.weak.mu, p.strong.kappa, p.strong.mu);
    let (dk, dg) = (p.dkappa(), p.dmu());
    match b.case {
        FcCase::C1 => {
            let dd1 = kp * gp * (km + gm) - km * gm * (kp + gp);
            let k = 4.0 * km * kp * gm * gp;
            sp.a_plus - sp.a_minus - b.a * b.a / k * ((1.0 - 2.0 * v) * b.d1 - v * (1.0 - v) * dd1) / (b.d1 * b.d1)
        }
        FcCase::C2 => {
            let c = dk * (kp + gp) * b.s_plus * b.s_plus / (4.0 * kp);
            -c * (b.d2 + (1.0 - v) * gp * dk) / (b.d2 * b.d2)
        }
        FcCase::C3 => {
            let c = dg * (kp + gp) * b.s_minus * b.s_minus / (4.0 * gp);
            -c * (b.d3 + (1.0 - v) * kp * dg) / (b.d3 * b.d3)
        }
    }
}

fn check_volume(v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Domain(format!("volume fraction {v} outside (0,1]")));
    }
    Ok(())
}

/// Explicit lower bound on the complementary energy of any two-phase
/// composite with stiff-phase fraction `v`.
pub fn f_c_hs(s: &StressM, v: f64, p: &PhasePair) -> Result<(f64, FcBranch)> {
    check_volume(v)?;
    let sp = spectral(s, p);
    let b = branch_of(&sp, v, p);
    Ok((fc_value(&sp, v, &b, p), b))
}

/// `f_c^HS` on the closed interval, with `f_c(σ; 0) = ⟨(E⁻)⁻¹σ, σ⟩`.
pub fn f_c_closed(s: &StressM, v: f64, p: &PhasePair) -> f64 {
    let sp = spectral(s, p);
    if v <= 0.0 {
        return sp.a_minus;
    }
    fc_value(&sp, v, &branch_of(&sp, v, p), p)
}

/// `∂f_c^HS/∂v`, closed form on the active case.
pub fn f_c_derivative(s: &StressM, v: f64, p: &PhasePair) -> Result<f64> {
    check_volume(v)?;
    let sp = spectral(s, p);
    Ok(fc_slope(&sp, v, &branch_of(&sp, v, p), p))
}

fn slope_closed(sp: &Spectral, v: f64, p: &PhasePair) -> f64 {
    fc_slope(sp, v, &branch_of(sp, v, p), p)
}

/// Minimizer of the convex map `v ↦ f_c^HS(σ; v) + λv` on `[0, 1]`.
pub fn local_volume_update(s: &StressM, lambda: f64, p: &PhasePair) -> f64 {
    let sp = spectral(s, p);
    let g = |v: f64| slope_closed(&sp, v, p) + lambda;
    let g1 = g(1.0);
    if g1 < 0.0 {
        return 1.0;
    }
    let g0 = g(0.0);
    if g0 >= 0.0 {
        return 0.0;
    }
    // Illinois false position on the nondecreasing slope
    let (mut a, mut b, mut fa, mut fb) = (0.0, 1.0, g0, g1);
    let mut side = 0i8;
    for _ in 0..200 {
        if b - a <= 1e-14 {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = g(c);
        if fc == 0.0 {
            return c;
        }
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

/// `⟨F^c(e)ε, ε⟩ = ⟨E⁺ε,ε⟩ − |τe|²/μ⁺ + (1/μ⁺ − 1/(κ⁺+μ⁺))⟨τe,e⟩²` with `τ = E⁺ε`.
pub fn fc_tensor(e: &Vector2<f64>, p: &PhasePair) -> Result<Tensor4> {
    if (e.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("lamination direction must be a unit vector, |e| = {}", e.norm())));
    }
    Ok(fc_tensor_unchecked(e, p))
}

fn fc_tensor_unchecked(e: &Vector2<f64>, p: &PhasePair) -> Tensor4 {
    let (k, g) = (p.strong.kappa, p.strong.mu);
    let m = p.e_plus().m;
    let l = Matrix3x2::new(e[0], 0.0, 0.0, e[1], FRAC_1_SQRT_2 * e[1], FRAC_1_SQRT_2 * e[0]);
    let n = Vec3::new(e[0] * e[0], e[1] * e[1], 2f64.sqrt() * e[0] * e[1]);
    let mn = m * n;
    let ml = m * l;
    Tensor4::new(m - ml * ml.transpose() / g + (1.0 / g - 1.0 / (k + g)) * mn * mn.transpose())
}

fn r_tensor(p: &PhasePair) -> Mat3 {
    let inv = |t: Tensor4| t.inverse().expect("phase tensors are definite").m;
    let d = inv(p.e_minus()) - inv(p.e_plus());
    d.try_inverse().expect("well-ordered phases")
}

fn laminate_tensor(par: &LaminateParams, v: f64, p: &PhasePair) -> Result<Tensor4> {
    let mut b = r_tensor(p);
    for j in 0..par.rank {
        let e = Vector2::new(par.directions[j][0], par.directions[j][1]);
        b += v * par.weights[j] * fc_tensor_unchecked(&e, p).m;
    }
    let b_inv = b.try_inverse().ok_or_else(|| Error::Numerical("singular laminate matrix".into()))?;
    let s = p.e_plus().inverse().unwrap().m + (1.0 - v) * b_inv;
    let e = s.try_inverse().ok_or_else(|| Error::Numerical("singular laminate compliance".into()))?;
    Ok(Tensor4::new(e))
}

fn compliance_of(t: &Tensor4, s: &StressM) -> f64 {
    t.compliance_energy(s).unwrap_or(f64::INFINITY)
}

/// Directions and weights of the laminate attaining `f_c^HS(σ; v)`.
pub fn laminate_params(s: &StressM, v: f64, p: &PhasePair) -> Result<LaminateParams> {
    check_volume(v)?;
    let sp = spectral(s, p);
    let b = branch_of(&sp, v, p);
    let (u1, u2) = ([sp.u1[0], sp.u1[1]], [sp.u2[0], sp.u2[1]]);
    let (s1, s2) = (sp.s1, sp.s2);
    let (kp, gp) = (p.strong.kappa, p.strong.mu);
    let rank1 = |d: [f64; 2]| LaminateParams { rank: 1, directions: [d, [0.0, 0.0]], weights: [1.0, 0.0] };
    let pick_rank1 = || -> Result<LaminateParams> {
        let (a, c) = (rank1(u1), rank1(u2));
        let ea = compliance_of(&laminate_tensor(&a, v, p)?, s);
        let ec = compliance_of(&laminate_tensor(&c, v, p)?, s);
        Ok(if ea <= ec { a } else { c })
    };
    let m1 = match b.case {
        FcCase::C1 => return pick_rank1(),
        FcCase::C2 if s1 + s2 != 0.0 => 0.5 + b.d2 * (s2 - s1) / (2.0 * v * gp * p.dkappa() * (s1 + s2)),
        FcCase::C3 if s1 != s2 => 0.5 + b.d3 * (s1 + s2) / (2.0 * v * kp * p.dmu() * (s2 - s1)),
        _ => return pick_rank1(),
    };
    let m1 = m1.clamp(0.0, 1.0);
    Ok(LaminateParams { rank: 2, directions: [u1, u2], weights: [m1, 1.0 - m1] })
}

/// Effective tensor of the laminate attaining `f_c^HS(σ; v)`.
pub fn laminate_update(s: &StressM, v: f64, p: &PhasePair) -> Result<Tensor4> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("volume fraction {v} outside [0,1]")));
    }
    if v == 0.0 {
        return Ok(p.e_minus());
    }
    if v == 1.0 {
        return Ok(p.e_plus());
    }
    laminate_tensor(&laminate_params(s, v, p)?, v, p)
}

/// Orthotropic base of a laminate in the principal frame of its stress.
pub fn principal_base(t: &Tensor4, s: &StressM) -> OrthoTensor {
    let pr = s.principal();
    let phi = pr.u1[1].atan2(pr.u1[0]);
    let r = mandel_rotation(phi);
    let m = r.transpose() * t.m * r;
    OrthoTensor::from_mandel(m[(0, 0)], m[(0, 1)], m[(1, 1)], m[(2, 2)], phi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmLog {
    pub iteration: usize,
    pub compliance: f64,
    pub lambda: f64,
    pub max_density_change: f64,
}

#[derive(Clone, Debug)]
pub struct AmOutcome {
    pub design: DesignField,
    pub compliance: f64,
    pub lambda: f64,
    pub log: Vec<AmLog>,
    pub converged: bool,
}

/// Alternating minimization from the all-stiff design. Each iteration
/// solves the state, then picks `λ` by bisection so that the elementwise
/// volume updates meet the volume bound, and replaces every tensor by the
/// optimal laminate for its average stress.
pub fn am_solve(problem: &Problem, cfg: &AmConfig) -> Result<AmOutcome> {
    cfg.validate()?;
    if problem.loadcases.len() != 1 {
        return Err(Error::Invalid("alternating minimization needs exactly one loadcase".into()));
    }
    if !(0.0..=1.0).contains(&problem.vbar) {
        return Err(Error::Invalid(format!("volume bound {} outside [0,1]", problem.vbar)));
    }
    let p = problem.phases;
    let fem = FemModel::from_problem(problem)?;
    let n_el = problem.mesh.n_elems();
    let scale = 1.0 / (n_el as f64 * problem.mesh.elem_area());
    let mut design = DesignField::uniform(n_el, p.e_plus(), 1.0);
    let fnorm2: f64 = fem.force(0).iter().map(|x| x * x).sum();
    let mut bracket = (0.0, 10.0 * p.strong.kappa * fnorm2 / problem.vbar.max(1e-12));
    let mut log = Vec::new();
    let mut prev_c: Option<f64> = None;
    let mut lambda = 0.0;
    let mut last_change = f64::INFINITY;
    for iteration in 0..=cfg.max_iters {
        let state = fem.solve_state(&design.tensors)?;
        let c = state.total_compliance();
        log.push(AmLog { iteration, compliance: c, lambda, max_density_change: last_change });
        if let Some(pc) = prev_c {
            if last_change < cfg.density_change_tol && (pc - c).abs() < cfg.compliance_rel_tol * c.abs() {
                return Ok(AmOutcome { design, compliance: c, lambda, log, converged: true });
            }
        }
        if iteration == cfg.max_iters {
            return Ok(AmOutcome { design, compliance: c, lambda, log, converged: false });
        }
        prev_c = Some(c);
        let stresses: Vec<StressM> = fem.element_fields(&design.tensors, &state)[0].iter().map(|f| f.stress).collect();
        let vols = |lam: f64| -> Vec<f64> {
            stresses.iter().map(|s| local_volume_update(s, lam * scale, &p)).collect()
        };
        let (lam, _) = dual_bisection(
            |l| vols(l).iter().sum::<f64>() / n_el as f64,
            problem.vbar,
            bracket,
            cfg.volume_tol,
        )?;
        lambda = lam;
        bracket.1 = bracket.1.max(2.0 * lam);
        let v_new = vols(lam);
        last_change = v_new.iter().zip(&design.volumes).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let tensors = stresses
            .iter()
            .zip(&v_new)
            .map(|(s, &v)| laminate_update(s, v, &p))
            .collect::<Result<Vec<_>>>()?;
        let bases = stresses.iter().zip(&tensors).map(|(s, t)| principal_base(t, s)).collect();
        design = DesignField { tensors, bases: Some(bases), volumes: v_new };
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hs_bounds::{f_hs, worst_case_volume, SearchConfig1D};
    use crate::tensor_core::{energy, loewner_leq, StrainM};
    use nalgebra::{Matrix2, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phases(contrast: f64) -> PhasePair {
        PhasePair::from_contrast(1.0, 0.3, contrast).unwrap()
    }

    fn random_stress(rng: &mut ChaCha8Rng) -> StressM {
        StressM::from_components(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0))
    }

    // max_ε min(h1, h2) = min_θ max_ε (θh1 + (1−θ)h2), the inner max being σᵀQ(θ)⁻¹σ
    fn variational_oracle(s: &StressM, v: f64, p: &PhasePair) -> f64 {
        let eig = SymmetricEigen::new(s.matrix()).eigenvalues;
        let sig = Vector2::new(eig[0], eig[1]);
        let kr = 1.0 / (1.0 / p.weak.kappa - 1.0 / p.strong.kappa);
        let mr = 1.0 / (1.0 / p.weak.mu - 1.0 / p.strong.mu);
        let c = 4.0 * p.strong.kappa * p.strong.mu / (p.strong.kappa + p.strong.mu);
        let phi = |th: f64| {
            let q = Matrix2::new(kr + mr, kr - mr, kr - mr, kr + mr) + v * c * Matrix2::new(th, 0.0, 0.0, 1.0 - th);
            sig.dot(&(q.try_inverse().unwrap() * sig))
        };
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let (x1, x2) = (b - g * (b - a), a + g * (b - a));
            if phi(x1) < phi(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let a_plus = p.e_plus().compliance_energy(s).unwrap();
        a_plus + (1.0 - v) * phi(0.5 * (a + b))
    }

    #[test]
    fn matches_variational_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for contrast in [1e-2, 1e-3] {
            let p = phases(contrast);
            for _ in 0..200 {
                let s = random_stress(&mut rng);
                let v = rng.gen_range(0.01..0.99);
                let (f, _) = f_c_hs(&s, v, &p).unwrap();
                let o = variational_oracle(&s, v, &p);
                assert!((f - o).abs() <= 1e-4 * o.abs(), "f={f} oracle={o}");
            }
        }
    }

    #[test]
    fn all_cases_occur() {
        let p = phases(1e-2);
        let mut seen = std::collections::HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let s = random_stress(&mut rng);
            let v = rng.gen_range(0.01..0.99);
            seen.insert(f_c_hs(&s, v, &p).unwrap().1.case);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let p = phases(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = random_stress(&mut rng);
            let v = rng.gen_range(0.05..0.95);
            let h = 1e-6;
            let fd = (f_c_closed(&s, v + h, &p) - f_c_closed(&s, v - h, &p)) / (2.0 * h);
            let d = f_c_derivative(&s, v, &p).unwrap();
            assert!((fd - d).abs() <= 1e-5 * d.abs().max(1.0), "fd={fd} d={d}");
        }
    }

    #[test]
    fn continuously_differentiable_across_cases() {
        let p = phases(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut switches = 0;
        for _ in 0..300 {
            let s = random_stress(&mut rng);
            let case = |v: f64| f_c_hs(&s, v, &p).unwrap().1.case;
            let n = 400;
            for k in 1..n {
                let (mut a, mut b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
                if b >= 1.0 || case(a) == case(b) {
                    continue;
                }
                let ca = case(a);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if case(m) == ca {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                switches += 1;
                let (fa, fb) = (f_c_closed(&s, a, &p), f_c_closed(&s, b, &p));
                assert!((fa - fb).abs() <= 1e-8 * fa.abs().max(1.0));
                let (da, db) = (f_c_derivative(&s, a, &p).unwrap(), f_c_derivative(&s, b, &p).unwrap());
                assert!((da - db).abs() <= 1e-6 * da.abs().max(1.0), "slopes {da} {db}");
            }
        }
        assert!(switches > 0);
    }

    #[test]
    fn convex_and_decreasing_in_volume() {
        let p = phases(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = random_stress(&mut rng);
            let f: Vec<f64> = (1..=200).map(|k| f_c_closed(&s, k as f64 / 200.0, &p)).collect();
            for w in f.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-10 * w[1].abs().max(1.0));
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn endpoint_values() {
        let p = phases(1e-2);
        let s = StressM::from_components(1.0, -0.3, 0.4);
        let a_plus = p.e_plus().compliance_energy(&s).unwrap();
        let a_minus = p.e_minus().compliance_energy(&s).unwrap();
        assert!((f_c_closed(&s, 1.0, &p) - a_plus).abs() < 1e-12 * a_plus);
        assert!((f_c_closed(&s, 1e-12, &p) - a_minus).abs() < 1e-8 * a_minus);
        assert!(f_c_hs(&s, 0.0, &p).is_err());
        assert!(f_c_hs(&s, 1.1, &p).is_err());
    }

    fn base_in_frame(t: &Tensor4, s: &StressM) -> OrthoTensor {
        let b = principal_base(t, s);
        assert!((b.tensor().m - t.m).norm() < 1e-9 * t.m.norm());
        b
    }

    #[test]
    fn laminate_attains_bound_and_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = SearchConfig1D::default();
        for contrast in [1e-2, 1e-3] {
            let p = phases(contrast);
            for _ in 0..200 {
                let s = random_stress(&mut rng);
                let v = rng.gen_range(0.02..0.98);
                let t = laminate_update(&s, v, &p).unwrap();
                let (f, _) = f_c_hs(&s, v, &p).unwrap();
                let c = t.compliance_energy(&s).unwrap();
                assert!((c - f).abs() <= 1e-8 * f, "energy {c} bound {f}");
                assert!(loewner_leq(&p.e_minus(), &t, 1e-10));
                assert!(loewner_leq(&t, &p.voigt(v), 1e-10));
                let wv = worst_case_volume(&base_in_frame(&t, &s), &p, &cfg).unwrap();
                assert!((wv - v).abs() <= 1e-4, "worst-case volume {wv} vs {v}");
            }
        }
    }

    #[test]
    fn laminate_energy_below_primal_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let p = phases(1e-2);
        for _ in 0..20 {
            let s = random_stress(&mut rng);
            let v = rng.gen_range(0.05..0.95);
            let t = laminate_update(&s, v, &p).unwrap();
            for _ in 0..500 {
                let e = StrainM::from_components(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    .normalized();
                let bound = f_hs(&e, v, &p).unwrap();
                assert!(energy(&t, &e) <= bound + 1e-8);
            }
        }
    }

    #[test]
    fn rank_two_weights() {
        let p = phases(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut rank2 = 0;
        for _ in 0..2000 {
            let s = random_stress(&mut rng);
            let v = rng.gen_range(0.01..0.99);
            let par = laminate_params(&s, v, &p).unwrap();
            let case = f_c_hs(&s, v, &p).unwrap().1.case;
            assert_eq!(par.rank == 1, case == FcCase::C1);
            if par.rank == 2 {
                rank2 += 1;
                assert!(par.weights.iter().all(|m| (0.0..=1.0).contains(m)));
                assert!((par.weights[0] + par.weights[1] - 1.0).abs() < 1e-14);
            }
        }
        assert!(rank2 > 0);
        let hydro = StressM::from_components(1.0, 1.0, 0.0);
        let v = 0.05;
        assert_eq!(f_c_hs(&hydro, v, &p).unwrap().1.case, FcCase::C2);
        assert_eq!(laminate_params(&hydro, v, &p).unwrap().weights, [0.5, 0.5]);
    }

    #[test]
    fn derivative_sign_over_samples() {
        let p = phases(1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10_000 {
            let s = random_stress(&mut rng);
            let v = rng.gen_range(1e-3..1.0);
            assert!(f_c_derivative(&s, v, &p).unwrap() <= 0.0);
        }
    }

    #[test]
    fn fc_tensor_on_kernel_strain() {
        let p = phases(1e-2);
        let e = Vector2::new(0.6, 0.8);
        // τe = 0 for τ = w w^T with w ⟂ e, and ε = (E⁺)⁻¹τ
        let w = Vector2::new(-0.8, 0.6);
        let tau = crate::tensor_core::matrix_to_mandel(&(w * w.transpose()));
        let eps = StrainM::new(p.e_plus().inverse().unwrap().m * tau);
        let f = fc_tensor(&e, &p).unwrap();
        let want = energy(&p.e_plus(), &eps);
        assert!((energy(&f, &eps) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn laminate_endpoints() {
        let p = phases(1e-2);
        let s = StressM::from_components(0.3, 0.1, 0.0);
        assert_eq!(laminate_update(&s, 0.0, &p).unwrap(), p.e_minus());
        assert_eq!(laminate_update(&s, 1.0, &p).unwrap(), p.e_plus());
        assert!(laminate_update(&s, -0.1, &p).is_err());
    }

    #[test]
    fn gc_closed_form_matches_direction_sampling() {
        let p = phases(1e-2);
        let (k, g) = (p.strong.kappa, p.strong.mu);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let e = StrainM::from_components(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let eig = SymmetricEigen::new(e.matrix()).eigenvalues;
            let closed = 4.0 * k * g / (k + g) * eig[0].powi(2).max(eig[1].powi(2));
            let sampled = (0..20_000)
                .map(|i| {
                    let th = std::f64::consts::PI * i as f64 / 20_000.0;
                    let f = fc_tensor(&Vector2::new(th.cos(), th.sin()), &p).unwrap();
                    energy(&f, &e)
                })
                .fold(f64::MIN, f64::max);
            assert!((sampled - closed).abs() <= 1e-6 * closed.max(1e-12), "{sampled} {closed}");
        }
    }

    #[test]
    fn fc_tensor_is_psd_and_rejects_non_unit() {
        let p = phases(1e-3);
        for i in 0..50 {
            let th = i as f64 * 0.13;
            let f = fc_tensor(&Vector2::new(th.cos(), th.sin()), &p).unwrap();
            assert!(f.min_eigenvalue() >= -1e-12);
            assert!((f.m - f.m.transpose()).norm() < 1e-14);
        }
        assert!(fc_tensor(&Vector2::new(1.0, 1.0), &p).is_err());
    }

    #[test]
    fn volume_update_minimizes_lagrangian() {
        let p = phases(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let s = random_stress(&mut rng);
            let lam = rng.gen_range(0.0..5.0);
            let v = local_volume_update(&s, lam, &p);
            let obj = |x: f64| f_c_closed(&s, x, &p) + lam * x;
            let best = (0..=4000).map(|k| obj(k as f64 / 4000.0)).fold(f64::MAX, f64::min);
            assert!(obj(v) <= best + 1e-9 * best.abs().max(1.0));
        }
        let s = StressM::from_components(1.0, 0.0, 0.0);
        assert_eq!(local_volume_update(&s, 0.0, &p), 1.0);
        assert_eq!(local_volume_update(&s, 1e9, &p), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(AmConfig::default().validate().is_ok());
        let bad = AmConfig { max_iters: 0, density_change_tol: -1.0, ..AmConfig::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("max_iters") && msg.contains("density_change_tol"));
    }
}
