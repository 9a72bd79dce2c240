//! Geometry of the admissible sets: strain-wise support values of the
//! zeroth-order (`A0`), Voigt (`A1`) and Hashin–Shtrikman (`A2`) sets, layered
//! product-space sweeps over `v`, and point clouds of optimal laminates.
//!
//! For a strain `ε` each set lies in the half-space `⟨Eε,ε⟩ ≤ f(ε)` of
//! tensor space. Restricted to three Mandel coordinates `(M_ab)` this is the
//! plane with normal `n_ab = ε_a ε_b (2 − δ_ab)` and offset `f(ε)`; the
//! envelope is the intersection of these planes. [`EnvelopeSurface`] records
//! normal, offset and the foot point `f·n/|n|²` for every sampled strain.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::hs_bounds::{f_hs, voigt_min_volume};
use crate::laminate_am::laminate_update;
use crate::tensor_core::{energy, PhasePair, StrainM, StressM, Tensor4, Vec3};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainSample {
    pub strains: Vec<StrainM>,
}

impl StrainSample {
    pub fn len(&self) -> usize {
        self.strains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strains.is_empty()
    }
}

/// Uniform samples on the Mandel sphere `‖ε‖_F = √2/2`.
pub fn sample_strains(n: usize, seed: u64) -> StrainSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strains = Vec::with_capacity(n);
    while strains.len() < n {
        let g = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let norm = g.norm();
        if norm < 1e-12 {
            continue;
        }
        strains.push(StrainM::new(g * (FRAC_1_SQRT_2 / norm)));
    }
    StrainSample { strains }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetLabel {
    A0,
    A1,
    A2,
}

/// Three Mandel matrix entries used as plot coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub axes: [(usize, usize); 3],
}

impl Default for Projection {
    fn default() -> Self {
        Self { axes: [(0, 0), (1, 1), (2, 2)] }
    }
}

impl Projection {
    pub fn validate(&self) -> Result<()> {
        if self.axes.iter().any(|&(a, b)| a > 2 || b > 2) {
            return Err(Error::Invalid(format!("projection axes out of range: {:?}", self.axes)));
        }
        Ok(())
    }

    pub fn normal(&self, e: &StrainM) -> [f64; 3] {
        self.axes.map(|(a, b)| if a == b { e.v[a] * e.v[a] } else { 2.0 * e.v[a] * e.v[b] })
    }

    pub fn coords(&self, t: &Tensor4) -> [f64; 3] {
        self.axes.map(|(a, b)| t.m[(a, b)])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportPlane {
    pub normal: [f64; 3],
    pub value: f64,
    pub foot: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSurface {
    pub set: SetLabel,
    pub v: f64,
    pub projection: Projection,
    pub planes: Vec<SupportPlane>,
}

impl EnvelopeSurface {
    pub fn values(&self) -> Vec<f64> {
        self.planes.iter().map(|s| s.value).collect()
    }
}

/// Upper support value of `set` at volume `v` for one normalized strain.
pub fn support_value(set: SetLabel, v: f64, e: &StrainM, p: &PhasePair) -> Result<f64> {
    match set {
        SetLabel::A0 => Ok(p.e_plus().energy(e)),
        SetLabel::A1 => Ok(p.voigt(v).energy(e)),
        SetLabel::A2 => f_hs(e, v, p),
    }
}

pub fn envelope(set: SetLabel, v: f64, strains: &StrainSample, p: &PhasePair) -> Result<EnvelopeSurface> {
    envelope_projected(set, v, strains, p, Projection::default())
}

pub fn envelope_projected(
    set: SetLabel,
    v: f64,
    strains: &StrainSample,
    p: &PhasePair,
    projection: Projection,
) -> Result<EnvelopeSurface> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("volume fraction {v} outside [0,1]")));
    }
    projection.validate()?;
    let planes = strains
        .strains
        .iter()
        .map(|e| {
            let value = support_value(set, v, e, p)?;
            let normal = projection.normal(e);
            let n = Vector3::from(normal);
            let n2 = n.norm_squared();
            let foot = if n2 > 0.0 { (n * (value / n2)).into() } else { [0.0; 3] };
            Ok(SupportPlane { normal, value, foot })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvelopeSurface { set, v, projection, planes })
}

/// One `v` layer of the product-space sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepLayer {
    pub v: f64,
    pub voigt: EnvelopeSurface,
    pub hs: EnvelopeSurface,
    /// `max_ε (⟨E^V(v)ε,ε⟩ − f^HS(ε;v))` over the sample; positive when the
    /// Voigt mixture point lies outside the HS layer.
    pub voigt_point_excess: f64,
}

pub fn product_space_sweep(v_samples: &[f64], strains: &StrainSample, p: &PhasePair) -> Result<Vec<SweepLayer>> {
    v_samples
        .iter()
        .map(|&v| {
            let voigt = envelope(SetLabel::A1, v, strains, p)?;
            let hs = envelope(SetLabel::A2, v, strains, p)?;
            let voigt_point_excess = voigt
                .planes
                .iter()
                .zip(&hs.planes)
                .map(|(a, b)| a.value - b.value)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(SweepLayer { v, voigt, hs, voigt_point_excess })
        })
        .collect()
}

/// Voigt decomposition `E = E⁻ + w(E⁺ − E⁻) − D` with `w = voigt_min_volume(E)`
/// and `D ⪰ 0`. Returns `(w, D)`.
pub fn voigt_decomposition(e: &Tensor4, p: &PhasePair) -> Result<(f64, Tensor4)> {
    let w = voigt_min_volume(e, p)?;
    Ok((w, Tensor4::new(p.voigt(w).m - e.m)))
}

/// Optimal laminates at volume `v` for `n` random stresses on the unit
/// Mandel sphere.
pub fn laminate_cloud(n: usize, v: f64, p: &PhasePair, seed: u64) -> Result<Vec<Tensor4>> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Domain(format!("volume fraction {v} outside (0,1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let g = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let s = StressM::new(g / g.norm().max(1e-300));
            laminate_update(&s, v, p)
        })
        .collect()
}

fn sphere_strain(theta: f64, psi: f64) -> StrainM {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    StrainM::new(Vec3::new(st * cp, st * sp, ct) * FRAC_1_SQRT_2)
}

/// `min_ε (f^HS(ε;v) − ⟨Eε,ε⟩)` over the normalized sphere, by a spherical
/// grid with `n` polar rows followed by pattern search. Zero means boundary
/// contact, negative values mean `E` violates the bound.
pub fn boundary_gap(e: &Tensor4, v: f64, p: &PhasePair, n: usize) -> Result<f64> {
    let n = n.max(4);
    let gap = |th: f64, ps: f64| -> Result<f64> {
        let s = sphere_strain(th, ps);
        Ok(f_hs(&s, v, p)? - energy(e, &s))
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=n {
        let th = PI * i as f64 / n as f64;
        for j in 0..2 * n {
            let ps = PI * j as f64 / n as f64;
            let g = gap(th, ps)?;
            if g < best.0 {
                best = (g, th, ps);
            }
        }
    }
    let mut h = PI / n as f64;
    while h > 1e-10 {
        let mut moved = false;
        for (dt, dp) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, h), (-h, -h), (h, -h), (-h, h)] {
            let g = gap(best.1 + dt, best.2 + dp)?;
            if g < best.0 {
                best = (g, best.1 + dt, best.2 + dp);
                moved = true;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok(best.0)
}

/// Fraction of random cloud pairs whose midpoint has no boundary contact,
/// i.e. `boundary_gap > tol`. Laminates at `v` touch the HS boundary, so a
/// positive fraction witnesses that the laminate set is not convex.
pub fn midpoint_nonconvexity(cloud: &[Tensor4], v: f64, p: &PhasePair, pairs: usize, seed: u64, tol: f64) -> Result<f64> {
    if cloud.len() < 2 || pairs == 0 {
        return Err(Error::Invalid("need at least two tensors and one pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = Uniform::new(0, cloud.len());
    let mut off = 0usize;
    for _ in 0..pairs {
        let (i, j) = (pick.sample(&mut rng), pick.sample(&mut rng));
        let mid = Tensor4::new(0.5 * (cloud[i].m + cloud[j].m));
        if boundary_gap(&mid, v, p, 24)? > tol {
            off += 1;
        }
    }
    Ok(off as f64 / pairs as f64)
}
