//! Sequential global programming for orthotropic free material design.
//!
//! Each outer iteration linearizes compliance in the compliance tensors
//! `E⁻¹` at the current design, which gives the separable model
//! `Σ_e ⟨P_e, E_e⁻¹⟩` with `P_e = −Σ_j Ē_e G_e^j Ē_e ⪰ 0`. Since compliance is
//! concave in `E⁻¹`, the model is a majorant that touches at the expansion
//! point. The volume constraint is dualized and every element then solves a
//! small global problem over a sampled set of orthotropic tensors.
//!
//! The elementwise objective is `⟨R(φ)ᵀ P R(φ), S_b⟩ + (λ/n_el)·v̄(S_b)` where
//! `S_b` is the base compliance. For fixed base the angle enters only
//! through `R(φ)ᵀ P R(φ)`, so every element precomputes that product on the
//! angle grid. The base grid is searched coarse-to-fine; the evaluated
//! points are reduced to the lower convex hull of `(v̄, c)` so that the
//! multiplier bisection only queries hulls.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use rustc_hash::{FxHashMap, FxHashSet};
use std::sync::{Mutex, OnceLock};

use crate::fem2d::{DesignField, FemModel, Problem};
use crate::hs_bounds::{SearchConfig1D, VolumeEstimatorKind};
use crate::tensor_core::{mandel_rotation, IsoModuli, Mat3, OrthoTensor, PhasePair, Tensor4, Vec3};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgpConfig {
    pub angle_samples: usize,
    pub diag_grid: usize,
    pub offdiag_grid: usize,
    pub merit_rel_tol: f64,
    pub stall_iters: usize,
    /// Initial multiplier bracket; `None` uses `[0, 10·tr E⁺]`.
    pub lambda_bracket: Option<(f64, f64)>,
    pub volume_tol: f64,
    pub max_iters: usize,
    pub search: SearchConfig1D,
}

impl Default for SgpConfig {
    fn default() -> Self {
        Self {
            angle_samples: 721,
            diag_grid: 41,
            offdiag_grid: 41,
            merit_rel_tol: 1e-7,
            stall_iters: 5,
            lambda_bracket: None,
            volume_tol: 1e-6,
            max_iters: 300,
            search: SearchConfig1D::default(),
        }
    }
}

impl SgpConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.angle_samples < 3 {
            bad.push("angle_samples must be >= 3");
        }
        if self.diag_grid < 3 {
            bad.push("diag_grid must be >= 3");
        }
        if self.offdiag_grid < 3 {
            bad.push("offdiag_grid must be >= 3");
        }
        if !(self.merit_rel_tol > 0.0) {
            bad.push("merit_rel_tol must be > 0");
        }
        if !(self.volume_tol > 0.0) {
            bad.push("volume_tol must be > 0");
        }
        if self.stall_iters == 0 || self.max_iters == 0 {
            bad.push("stall_iters and max_iters must be >= 1");
        }
        if let Some((lo, hi)) = self.lambda_bracket {
            if !(lo >= 0.0 && hi > lo) {
                bad.push("lambda_bracket must satisfy 0 <= lo < hi");
            }
        }
        if self.search.validate().is_err() {
            bad.push("search: bad 1D search settings");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(bad.join("; ")))
        }
    }
}

/// Multi-index `(i11, i22, i33, i12)` of a base grid point.
pub type GridIndex = [u32; 4];

/// A feasible base grid point with its base compliance
/// `(S11, S12, S22, S33)` and estimated volume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub idx: GridIndex,
    pub s: [f64; 4],
    pub vbar: f64,
}


/// Sampled orthotropic bases and angles. Volumes are computed on first use
/// and cached.
pub struct GridTables {
    pub phases: PhasePair,
    pub estimator: VolumeEstimatorKind,
    pub search: SearchConfig1D,
    pub angles: Vec<f64>,
    diag: [Vec<f64>; 3],
    n_off: usize,
    e12_interval: Vec<Option<(f64, f64)>>,
    vbar: Mutex<FxHashMap<usize, f64>>,
    coarse: OnceLock<Vec<GridPoint>>,
    stride0: (usize, usize),
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn coarse_stride(n: usize) -> usize {
    let mut s = 1;
    while (n - 1) / (2 * s) >= 4 {
        s *= 2;
    }
    s
}

fn axis_indices(n: usize, stride: usize) -> Vec<u32> {
    let mut v: Vec<u32> = (0..n).step_by(stride).map(|k| k as u32).collect();
    if *v.last().unwrap() as usize != n - 1 {
        v.push((n - 1) as u32);
    }
    v
}

/// Interval of `E12` with `E⁻ ⪯ [[E11, E12], [E12, E22]] ⪯ E⁺` on the normal block.
pub fn e12_interval(e11: f64, e22: f64, p: &PhasePair) -> Option<(f64, f64)> {
    let (lo, hi) = (p.e_minus().m, p.e_plus().m);
    let (dl1, dl2) = (e11 - lo[(0, 0)], e22 - lo[(1, 1)]);
    let (du1, du2) = (hi[(0, 0)] - e11, hi[(1, 1)] - e22);
    let eps = 1e-14 * hi[(0, 0)];
    if dl1 < -eps || dl2 < -eps || du1 < -eps || du2 < -eps {
        return None;
    }
    let rl = (dl1.max(0.0) * dl2.max(0.0)).sqrt();
    let ru = (du1.max(0.0) * du2.max(0.0)).sqrt();
    let a = (lo[(0, 1)] - rl).max(hi[(0, 1)] - ru);
    let b = (lo[(0, 1)] + rl).min(hi[(0, 1)] + ru);
    (b >= a).then_some((a, b))
}

impl GridTables {
    pub fn new(p: PhasePair, cfg: &SgpConfig, estimator: VolumeEstimatorKind) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = (p.e_minus().m, p.e_plus().m);
        let n = cfg.diag_grid;
        let diag = [
            linspace(lo[(0, 0)], hi[(0, 0)], n),
            linspace(lo[(1, 1)], hi[(1, 1)], n),
            linspace(lo[(2, 2)], hi[(2, 2)], n),
        ];
        let mut intervals = Vec::with_capacity(n * n);
        for &a in &diag[0] {
            for &b in &diag[1] {
                intervals.push(e12_interval(a, b, &p));
            }
        }
        if intervals.iter().all(Option::is_none) {
            return Err(Error::Invalid("empty base grid".into()));
        }
        let angles = (0..cfg.angle_samples).map(|k| FRAC_PI_2 * k as f64 / cfg.angle_samples as f64).collect();
        Ok(Self {
            phases: p,
            estimator,
            search: cfg.search,
            angles,
            diag,
            n_off: cfg.offdiag_grid,
            e12_interval: intervals,
            vbar: Mutex::new(FxHashMap::default()),
            coarse: OnceLock::new(),
            stride0: (coarse_stride(n), coarse_stride(cfg.offdiag_grid)),
        })
    }

    pub fn n_diag(&self) -> usize {
        self.diag[0].len()
    }

    pub fn n_offdiag(&self) -> usize {
        self.n_off
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    fn key(&self, idx: &GridIndex) -> usize {
        let n = self.n_diag();
        ((idx[0] as usize * n + idx[1] as usize) * n + idx[2] as usize) * self.n_off + idx[3] as usize
    }

    fn mandel(&self, idx: &GridIndex) -> Option<(f64, f64, f64, f64)> {
        let n = self.n_diag();
        let (a, b) = self.e12_interval[idx[0] as usize * n + idx[1] as usize]?;
        let e12 = a + (b - a) * idx[3] as f64 / (self.n_off - 1) as f64;
        Some((self.diag[0][idx[0] as usize], e12, self.diag[1][idx[1] as usize], self.diag[2][idx[2] as usize]))
    }

    /// Base tensor of a grid point (angle zero), `None` if infeasible.
    pub fn base(&self, idx: &GridIndex) -> Option<OrthoTensor> {
        self.mandel(idx).map(|(m11, m12, m22, m33)| OrthoTensor::from_mandel(m11, m12, m22, m33, 0.0))
    }

    pub fn vbar(&self, idx: &GridIndex) -> Option<f64> {
        let base = self.base(idx)?;
        let key = self.key(idx);
        if let Some(&v) = self.vbar.lock().unwrap().get(&key) {
            return Some(v);
        }
        let v = self.estimator.volume_unchecked(&base, &self.phases, &self.search);
        self.vbar.lock().unwrap().insert(key, v);
        Some(v)
    }

    pub fn point(&self, idx: &GridIndex) -> Option<GridPoint> {
        let (m11, m12, m22, m33) = self.mandel(idx)?;
        let det = m11 * m22 - m12 * m12;
        let s = [m22 / det, -m12 / det, m11 / det, 1.0 / m33];
        Some(GridPoint { idx: *idx, s, vbar: self.vbar(idx)? })
    }

    /// Every feasible point of the full grid (exhaustive searches and tests).
    pub fn all_points(&self) -> Vec<GridPoint> {
        let (n, m) = (self.n_diag() as u32, self.n_off as u32);
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..m {
                        if let Some(p) = self.point(&[i, j, k, l]) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    fn coarse_points(&self) -> &[GridPoint] {
        self.coarse.get_or_init(|| {
            let d = axis_indices(self.n_diag(), self.stride0.0);
            let o = axis_indices(self.n_off, self.stride0.1);
            let mut out = Vec::new();
            for &i in &d {
                for &j in &d {
                    for &k in &d {
                        for &l in &o {
                            if let Some(p) = self.point(&[i, j, k, l]) {
                                out.push(p);
                            }
                        }
                    }
                }
            }
            out.sort_by(|a, b| a.vbar.total_cmp(&b.vbar));
            out
        })
    }

    fn is_coarse(&self, idx: &GridIndex) -> bool {
        let on = |k: u32, n: usize, s: usize| k as usize % s == 0 || k as usize == n - 1;
        let (n, (sd, so)) = (self.n_diag(), self.stride0);
        on(idx[0], n, sd) && on(idx[1], n, sd) && on(idx[2], n, sd) && on(idx[3], self.n_off, so)
    }

    fn levels(&self) -> usize {
        let s = self.stride0.0.max(self.stride0.1);
        s.trailing_zeros() as usize
    }

    fn strides(&self, level: usize) -> (usize, usize) {
        ((self.stride0.0 >> level).max(1), (self.stride0.1 >> level).max(1))
    }
}

/// `P = −Σ_j Ē G_j Ē`, the model weight of one element. A nearly singular
/// expansion point is replaced by `E⁻ + 10⁻⁶(E⁺ − E⁻)`.
pub fn model_matrix(ebar: &Tensor4, g_list: &[Mat3], p: &PhasePair) -> Mat3 {
    let e = if ebar.min_eigenvalue() < 1e-9 {
        p.e_minus().m + (p.e_plus().m - p.e_minus().m) * 1e-6
    } else {
        ebar.m
    };
    let mut out = Mat3::zeros();
    for g in g_list {
        out -= e * g * e;
    }
    0.5 * (out + out.transpose())
}

/// Angle-dependent weights of one element: the objective at angle `k` and
/// base compliance `s` is `h[k]·s`.
pub struct ElementModel {
    h: Vec<[f64; 4]>,
    samples: Vec<usize>,
    hs: Vec<[f64; 4]>,
}

const EXHAUSTIVE_ANGLES: usize = 64;
const ANGLE_SAMPLES: usize = 32;

#[inline]
fn dot4(h: &[f64; 4], s: &[f64; 4]) -> f64 {
    h[0] * s[0] + h[1] * s[1] + h[2] * s[2] + h[3] * s[3]
}

impl ElementModel {
    pub fn new(p: &Mat3, angles: &[f64]) -> Self {
        let h = angles
            .iter()
            .map(|&phi| {
                let r = mandel_rotation(phi);
                let t = r.transpose() * p * r;
                [t[(0, 0)], 2.0 * t[(0, 1)], t[(1, 1)], t[(2, 2)]]
            })
            .collect::<Vec<_>>();
        let last = h.len() - 1;
        let step = h.len().div_ceil(ANGLE_SAMPLES).max(1);
        let mut samples: Vec<usize> = (0..last).step_by(step).collect();
        samples.push(last);
        let hs = samples.iter().map(|&k| h[k]).collect();
        Self { h, samples, hs }
    }

    #[inline]
    pub fn value(&self, k: usize, s: &[f64; 4]) -> f64 {
        dot4(&self.h[k], s)
    }

    fn scan(&self, s: &[f64; 4], lo: usize, hi: usize) -> (f64, usize) {
        let mut best = (f64::INFINITY, lo);
        for k in lo..=hi {
            let v = self.value(k, s);
            if v < best.0 {
                best = (v, k);
            }
        }
        best
    }

    /// Discrete minimum on `[lo, hi]`, assumed unimodal: start at the vertex
    /// of the parabola through the three samples and walk downhill.
    fn descend(&self, s: &[f64; 4], i: usize, vals: &[f64]) -> (f64, usize) {
        let m = self.samples.len();
        let (il, ir) = (i.saturating_sub(1), (i + 1).min(m - 1));
        let (lo, hi) = (self.samples[il], self.samples[ir]);
        let x = self.samples[i] as f64;
        let mut start = x;
        if il < i && ir > i {
            let (xl, xr) = (self.samples[il] as f64, self.samples[ir] as f64);
            let (fl, f0, fr) = (vals[il], vals[i], vals[ir]);
            let num = (x - xl).powi(2) * (f0 - fr) - (x - xr).powi(2) * (f0 - fl);
            let den = (x - xl) * (f0 - fr) - (x - xr) * (f0 - fl);
            if den.abs() > 0.0 {
                let v = x - 0.5 * num / den;
                if v.is_finite() {
                    start = v.clamp(lo as f64, hi as f64);
                }
            }
        }
        let mut k = start.round() as usize;
        let mut v = self.value(k, s);
        let mut moved = false;
        while k > lo {
            let w = self.value(k - 1, s);
            if w > v {
                break;
            }
            k -= 1;
            v = w;
            moved = true;
        }
        if !moved {
            while k < hi {
                let w = self.value(k + 1, s);
                if w >= v {
                    break;
                }
                k += 1;
                v = w;
            }
        }
        (v, k)
    }

    /// Minimum over the angle grid for base compliance `s`.
    pub fn best_angle(&self, s: &[f64; 4]) -> (f64, usize) {
        let n = self.h.len();
        if n <= EXHAUSTIVE_ANGLES {
            return self.scan(s, 0, n - 1);
        }
        let m = self.samples.len();
        let mut vals = [0.0; ANGLE_SAMPLES + 2];
        for (v, h) in vals.iter_mut().zip(&self.hs) {
            *v = dot4(h, s);
        }
        // two lowest local minima of the sampled sequence
        let mut mins = [(f64::INFINITY, 0usize); 2];
        for i in 0..m {
            let c = vals[i];
            if (i > 0 && c > vals[i - 1]) || (i + 1 < m && c > vals[i + 1]) {
                continue;
            }
            if c < mins[0].0 {
                mins[1] = mins[0];
                mins[0] = (c, i);
            } else if c < mins[1].0 {
                mins[1] = (c, i);
            }
        }
        let mut best = (f64::INFINITY, 0);
        for &(v, i) in &mins {
            if !v.is_finite() {
                continue;
            }
            let r = self.descend(s, i, &vals[..m]);
            if r.0 < best.0 || (r.0 == best.0 && r.1 < best.1) {
                best = r;
            }
        }
        best
    }
}

/// An evaluated design choice: grid point, best angle, model value and volume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub idx: GridIndex,
    pub angle: u32,
    pub c: f64,
    pub v: f64,
}

/// Lower convex hull of `(v, c)`, cut at the minimum of `c`; only these
/// points can minimize `c + μv` for some `μ ≥ 0`.
fn lower_hull(mut pts: Vec<Candidate>) -> Vec<Candidate> {
    pts.sort_by(|a, b| a.v.total_cmp(&b.v));
    lower_hull_sorted(&pts)
}

/// [`lower_hull`] for points already sorted by volume.
fn lower_hull_sorted(pts: &[Candidate]) -> Vec<Candidate> {
    let mut hull: Vec<Candidate> = Vec::new();
    for &p in pts {
        if let Some(last) = hull.last() {
            if p.v == last.v {
                if p.c >= last.c {
                    continue;
                }
                hull.pop();
            }
        }
        if let Some(last) = hull.last() {
            if p.c >= last.c {
                continue;
            }
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.v - a.v) * (p.c - a.c) - (b.c - a.c) * (p.v - a.v);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Whether `p` lies strictly below the piecewise-linear envelope of `hull`.
fn below_envelope(hull: &[Candidate], p: &Candidate) -> bool {
    let k = hull.partition_point(|h| h.v <= p.v);
    if k == 0 {
        return true;
    }
    let a = hull[k - 1];
    if k == hull.len() {
        return p.c < a.c;
    }
    let b = hull[k];
    p.c < a.c + (b.c - a.c) * (p.v - a.v) / (b.v - a.v)
}

/// Index of the hull vertex minimizing `c + μv`; ties go to the smaller volume.
fn hull_query(hull: &[Candidate], mu: f64) -> usize {
    let (mut lo, mut hi) = (0usize, hull.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let (a, b) = (hull[mid], hull[mid + 1]);
        if b.c + mu * b.v < a.c + mu * a.v {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

struct ElementSearch<'a> {
    model: ElementModel,
    tables: &'a GridTables,
    hull: Vec<Candidate>,
    evaluated: Vec<Candidate>,
    /// refined (non-coarse) indices already visited
    seen: FxHashSet<GridIndex>,
}

/// Number of best evaluated points refined at every level besides the hull
/// vertices around the current multiplier.
const REFINE_TOP: usize = 5;

impl<'a> ElementSearch<'a> {
    fn new(model: ElementModel, tables: &'a GridTables) -> Self {
        let pts = tables
            .coarse_points()
            .iter()
            .map(|g| {
                let (c, k) = model.best_angle(&g.s);
                Candidate { idx: g.idx, angle: k as u32, c, v: g.vbar }
            })
            .collect::<Vec<_>>();
        let hull = lower_hull_sorted(&pts);
        Self { model, tables, hull, evaluated: pts, seen: FxHashSet::default() }
    }

    fn choose(&self, mu: f64) -> Candidate {
        self.hull[hull_query(&self.hull, mu)]
    }

    /// Refine around the hull vertices that are optimal for some
    /// `μ ∈ [mu_lo, mu_hi]`, their hull neighbours, and the best evaluated
    /// points at `mu_lo`.
    fn refine(&mut self, level: usize, mu_lo: f64, mu_hi: f64) {
        let (sd, so) = self.tables.strides(level);
        let (nd, no) = (self.tables.n_diag() as i64, self.tables.n_off as i64);
        let k_hi = hull_query(&self.hull, mu_lo);
        let k_lo = hull_query(&self.hull, mu_hi);
        let from = k_lo.saturating_sub(1);
        let to = (k_hi + 1).min(self.hull.len() - 1);
        let mut centers: Vec<Candidate> = self.hull[from..=to].to_vec();
        let score = |c: &Candidate| c.c + mu_lo * c.v;
        let top = REFINE_TOP.min(self.evaluated.len());
        if top > 0 {
            self.evaluated.select_nth_unstable_by(top - 1, |a, b| score(a).total_cmp(&score(b)));
            centers.extend_from_slice(&self.evaluated[..top]);
        }
        let n_old = self.evaluated.len();
        let offs = [-2i64, -1, 0, 1, 2];
        for c in &centers {
            let ax = |i: usize, s: usize, n: i64| -> Vec<u32> {
                let mut v: Vec<u32> = offs
                    .iter()
                    .map(|&o| (c.idx[i] as i64 + o * s as i64).clamp(0, n - 1) as u32)
                    .collect();
                v.dedup();
                v
            };
            let (a0, a1, a2, a3) = (ax(0, sd, nd), ax(1, sd, nd), ax(2, sd, nd), ax(3, so, no));
            for &i in &a0 {
                for &j in &a1 {
                    for &k in &a2 {
                        for &l in &a3 {
                            let idx = [i, j, k, l];
                            if self.tables.is_coarse(&idx) || !self.seen.insert(idx) {
                                continue;
                            }
                            if let Some(g) = self.tables.point(&idx) {
                                let (val, ang) = self.model.best_angle(&g.s);
                                self.evaluated.push(Candidate { idx, angle: ang as u32, c: val, v: g.vbar });
                            }
                        }
                    }
                }
            }
        }
        let mut pts: Vec<Candidate> =
            self.evaluated[n_old..].iter().filter(|p| below_envelope(&self.hull, p)).copied().collect();
        if !pts.is_empty() {
            pts.extend_from_slice(&self.hull);
            self.hull = lower_hull(pts);
        }
    }

    fn solve(mut self, mu: f64) -> Candidate {
        for level in 1..=self.tables.levels() {
            self.refine(level, mu, mu);
        }
        self.choose(mu)
    }
}

fn candidate_tensor(tables: &GridTables, c: &Candidate) -> OrthoTensor {
    tables.base(&c.idx).expect("feasible candidate").with_phi(tables.angles[c.angle as usize])
}

/// Global minimizer over the sampled set of
/// `Σ_j ⟨−Ē G_j Ē, E⁻¹⟩ + (λ/n_el)·v̄(E)` for one element.
pub fn local_subproblem(
    g_list: &[Mat3],
    ebar: &Tensor4,
    lambda: f64,
    n_el: usize,
    tables: &GridTables,
) -> (OrthoTensor, f64) {
    let p = model_matrix(ebar, g_list, &tables.phases);
    let search = ElementSearch::new(ElementModel::new(&p, &tables.angles), tables);
    let best = search.solve(lambda / n_el as f64);
    (candidate_tensor(tables, &best), best.v)
}

/// Bisection on the multiplier so that the mean volume `volume(λ)`, a
/// nonincreasing function, meets `vbar`. The upper end is expanded ×10 up
/// to six times. Returns `(λ, volume(λ))`.
pub fn dual_bisection<F: FnMut(f64) -> f64>(
    mut volume: F,
    vbar: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = bracket;
    let mut f_lo = volume(lo);
    if f_lo <= vbar + tol {
        return Ok((lo, f_lo));
    }
    let mut f_hi = volume(hi);
    let mut expansions = 0;
    while f_hi > vbar + tol {
        if expansions == 6 {
            return Err(Error::Bracket(format!("mean volume {f_hi} > {vbar} at λ = {hi}")));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 10.0;
        f_hi = volume(hi);
        expansions += 1;
    }
    for _ in 0..200 {
        if (f_hi - vbar).abs() <= tol || hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = volume(mid);
        if f_mid > vbar {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if (f_lo - vbar).abs() < (f_hi - vbar).abs() {
        Ok((lo, f_lo))
    } else {
        Ok((hi, f_hi))
    }
}

/// One record per outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    pub iteration: usize,
    pub compliance: f64,
    pub lambda: f64,
    pub volume_residual: f64,
    pub merit: f64,
}

#[derive(Clone, Debug)]
pub struct SgpIterate {
    pub design: DesignField,
    pub compliance: Vec<f64>,
    pub lambda: f64,
    pub merit: f64,
    pub iteration: usize,
}

impl SgpIterate {
    pub fn total_compliance(&self) -> f64 {
        self.compliance.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct SgpOutcome {
    pub iterate: SgpIterate,
    pub log: Vec<IterLog>,
    pub converged: bool,
}

fn default_bracket(p: &PhasePair, cfg: &SgpConfig) -> (f64, f64) {
    cfg.lambda_bracket.unwrap_or((0.0, 10.0 * p.e_plus().trace()))
}

fn check_problem(problem: &Problem) -> Result<()> {
    if !(0.0..=1.0).contains(&problem.vbar) {
        return Err(Error::Invalid(format!("volume bound {} outside [0,1]", problem.vbar)));
    }
    Ok(())
}

/// Shared outer loop: `step` maps the current tensors and sensitivities to
/// `(new design, λ)`.
fn outer_loop<F>(problem: &Problem, cfg: &SgpConfig, initial: DesignField, mut step: F) -> Result<SgpOutcome>
where
    F: FnMut(&DesignField, &[Vec<Mat3>]) -> Result<(DesignField, f64)>,
{
    let fem = FemModel::from_problem(problem)?;
    let mut design = initial;
    let mut lambda = 0.0;
    let mut log = Vec::new();
    let mut best: Option<SgpIterate> = None;
    let mut prev_merit: Option<f64> = None;
    let mut stall = 0;
    let mut converged = false;
    for iteration in 0..=cfg.max_iters {
        let state = fem.solve_state(&design.tensors)?;
        let residual = design.mean_volume() - problem.vbar;
        let merit = state.total_compliance() + lambda * residual;
        log.push(IterLog { iteration, compliance: state.total_compliance(), lambda, volume_residual: residual, merit });
        let current = SgpIterate { design: design.clone(), compliance: state.compliance.clone(), lambda, merit, iteration };
        if iteration > 0 && best.as_ref().map_or(true, |b| merit < b.merit) {
            best = Some(current.clone());
        }
        if let Some(pm) = prev_merit {
            if (pm - merit).abs() < cfg.merit_rel_tol * merit.abs() {
                converged = true;
                return Ok(SgpOutcome { iterate: current, log, converged });
            }
            if pm - merit < cfg.merit_rel_tol * merit.abs() {
                stall += 1;
                if stall >= cfg.stall_iters {
                    converged = true;
                    break;
                }
            } else {
                stall = 0;
            }
        }
        prev_merit = Some(merit);
        if iteration == cfg.max_iters {
            break;
        }
        let sens = fem.sensitivities(&state);
        let (next, lam) = step(&design, &sens)?;
        design = next;
        lambda = lam;
    }
    let iterate = best.expect("at least one design iterate");
    Ok(SgpOutcome { iterate, log, converged })
}

/// SGP for the orthotropic model with the given volume estimator. The Voigt
/// estimator dispatches to [`solve_voigt_reduced`], whose optimum is
/// isotropic.
pub fn sgp_solve(problem: &Problem, kind: VolumeEstimatorKind, cfg: &SgpConfig) -> Result<SgpOutcome> {
    if kind == VolumeEstimatorKind::Voigt {
        return solve_voigt_reduced(problem, cfg);
    }
    let tables = GridTables::new(problem.phases, cfg, kind)?;
    sgp_solve_with_tables(problem, &tables, cfg)
}

pub fn sgp_solve_with_tables(problem: &Problem, tables: &GridTables, cfg: &SgpConfig) -> Result<SgpOutcome> {
    cfg.validate()?;
    check_problem(problem)?;
    let p = problem.phases;
    let n_el = problem.mesh.n_elems();
    let bracket = default_bracket(&p, cfg);
    let initial = DesignField::uniform(n_el, p.voigt(problem.vbar), problem.vbar);
    outer_loop(problem, cfg, initial, |design, sens| {
        let mut searches: Vec<ElementSearch> = (0..n_el)
            .map(|e| {
                let pm = model_matrix(&design.tensors[e], &sens[e], &p);
                ElementSearch::new(ElementModel::new(&pm, &tables.angles), tables)
            })
            .collect();
        let mean_v = |s: &[ElementSearch], lam: f64| {
            let mu = lam / n_el as f64;
            s.iter().map(|e| e.choose(mu).v).sum::<f64>() / n_el as f64
        };
        let (mut lam, _) = dual_bisection(|l| mean_v(&searches, l), problem.vbar, bracket, cfg.volume_tol)?;
        for level in 1..=tables.levels() {
            let mu = lam / n_el as f64;
            for s in searches.iter_mut() {
                s.refine(level, mu, mu);
            }
            lam = dual_bisection(|l| mean_v(&searches, l), problem.vbar, bracket, cfg.volume_tol)?.0;
        }
        let mu = lam / n_el as f64;
        let chosen: Vec<Candidate> = searches.iter().map(|s| s.choose(mu)).collect();
        let bases = chosen.iter().map(|c| candidate_tensor(tables, c)).collect();
        let volumes = chosen.iter().map(|c| c.v).collect();
        Ok((DesignField::from_ortho(bases, volumes), lam))
    })
}

/// Minimizer over `v ∈ [0,1]` of `A/κ(v) + B/μ(v) + m·v` with
/// `κ(v) = κ⁻ + vΔκ`, `μ(v) = μ⁻ + vΔμ`.
pub fn voigt_element_volume(a: f64, b: f64, m: f64, p: &PhasePair) -> f64 {
    let (k0, g0, dk, dg) = (p.weak.kappa, p.weak.mu, p.dkappa(), p.dmu());
    let d = |v: f64| {
        let k = k0 + v * dk;
        let g = g0 + v * dg;
        m - a * dk / (k * k) - b * dg / (g * g)
    };
    if d(1.0) <= 0.0 {
        return 1.0;
    }
    if d(0.0) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(A, B)` with `⟨P, iso(κ, μ)⁻¹⟩ = A/κ + B/μ`.
pub fn iso_split(pm: &Mat3) -> (f64, f64) {
    let h = Vec3::new(1.0, 1.0, 0.0) / 2f64.sqrt();
    let hph = (h.transpose() * pm * h)[(0, 0)];
    (0.5 * hph, 0.5 * (pm.trace() - hph))
}

/// Voigt model on the isotropic ray `E = E⁻ + v(E⁺ − E⁻)`: the same outer
/// loop with an exact one-dimensional convex subproblem per element.
pub fn solve_voigt_reduced(problem: &Problem, cfg: &SgpConfig) -> Result<SgpOutcome> {
    cfg.validate()?;
    check_problem(problem)?;
    let p = problem.phases;
    let n_el = problem.mesh.n_elems();
    let bracket = default_bracket(&p, cfg);
    let initial = DesignField::uniform(n_el, p.voigt(problem.vbar), problem.vbar);
    let make = |v: &[f64]| {
        let bases = v
            .iter()
            .map(|&x| OrthoTensor::iso(IsoModuli { kappa: p.weak.kappa + x * p.dkappa(), mu: p.weak.mu + x * p.dmu() }))
            .collect();
        DesignField::from_ortho(bases, v.to_vec())
    };
    outer_loop(problem, cfg, initial, |design, sens| {
        let ab: Vec<(f64, f64)> =
            (0..n_el).map(|e| iso_split(&model_matrix(&design.tensors[e], &sens[e], &p))).collect();
        let vols = |lam: f64| -> Vec<f64> {
            let mu = lam / n_el as f64;
            ab.iter().map(|&(a, b)| voigt_element_volume(a, b, mu, &p)).collect()
        };
        let (lam, _) = dual_bisection(|l| vols(l).iter().sum::<f64>() / n_el as f64, problem.vbar, bracket, cfg.volume_tol)?;
        Ok((make(&vols(lam)), lam))
    })
}
