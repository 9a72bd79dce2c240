//! Plane-stress Q8 serendipity elements on structured rectangular grids.
//!
//! Element tensors are constant per element and enter through their
//! Kelvin–Mandel matrices; the strain operator `B` maps element dofs to
//! Mandel strains `(ε11, ε22, √2·ε12)`. Stiffness is integrated with 3×3
//! Gauss points and factorized by a sparse Cholesky whose symbolic phase is
//! computed once per mesh.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::tensor_core::{Mat3, OrthoTensor, PhasePair, StrainM, StressM, Tensor4, Vec3};
use crate::{Error, Result};

pub type ElemMat = SMatrix<f64, 16, 16>;
pub type ElemVec = SVector<f64, 16>;
pub type BMat = SMatrix<f64, 3, 16>;

/// Reference coordinates of the eight nodes: corners first (counter-clockwise
/// from the lower left), then the midsides of the bottom, right, top and left edges.
const REF_NODES: [(f64, f64); 8] = [
    (-1.0, -1.0),
    (1.0, -1.0),
    (1.0, 1.0),
    (-1.0, 1.0),
    (0.0, -1.0),
    (1.0, 0.0),
    (0.0, 1.0),
    (-1.0, 0.0),
];

/// Structured grid of equal rectangular Q8 elements.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    pub coords: Vec<[f64; 2]>,
    pub elems: Vec<[usize; 8]>,
    grid_to_node: Vec<usize>,
}

pub fn build_mesh(nx: usize, ny: usize, width: f64, height: f64) -> Result<Mesh> {
    if nx == 0 || ny == 0 || !(width > 0.0) || !(height > 0.0) {
        return Err(Error::Invalid(format!(
            "mesh needs nx, ny >= 1 and positive size, got {nx}x{ny}, {width}x{height}"
        )));
    }
    let (gx, gy) = (2 * nx + 1, 2 * ny + 1);
    let mut grid_to_node = vec![usize::MAX; gx * gy];
    let mut coords = Vec::with_capacity(gx * gy - nx * ny);
    for i in 0..gx {
        for j in 0..gy {
            if i % 2 == 1 && j % 2 == 1 {
                continue;
            }
            grid_to_node[i * gy + j] = coords.len();
            coords.push([width * i as f64 / (gx - 1) as f64, height * j as f64 / (gy - 1) as f64]);
        }
    }
    let mut elems = Vec::with_capacity(nx * ny);
    for ey in 0..ny {
        for ex in 0..nx {
            let (ci, cj) = (2 * ex + 1, 2 * ey + 1);
            let mut conn = [0usize; 8];
            for (k, (xi, eta)) in REF_NODES.iter().enumerate() {
                let i = (ci as f64 + xi) as usize;
                let j = (cj as f64 + eta) as usize;
                conn[k] = grid_to_node[i * gy + j];
            }
            elems.push(conn);
        }
    }
    Ok(Mesh { nx, ny, width, height, coords, elems, grid_to_node })
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn elem_size(&self) -> (f64, f64) {
        (self.width / self.nx as f64, self.height / self.ny as f64)
    }

    pub fn elem_area(&self) -> f64 {
        let (a, b) = self.elem_size();
        a * b
    }

    /// Element index for column `ex` and row `ey` (row-major from the bottom).
    pub fn elem_index(&self, ex: usize, ey: usize) -> usize {
        ey * self.nx + ex
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let (a, b) = self.elem_size();
        let (ex, ey) = (e % self.nx, e / self.nx);
        [(ex as f64 + 0.5) * a, (ey as f64 + 0.5) * b]
    }

    /// Node closest to `(x, y)`.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let gy = 2 * self.ny + 1;
        let i = ((x / self.width) * (2 * self.nx) as f64).round().clamp(0.0, (2 * self.nx) as f64) as usize;
        let j = ((y / self.height) * (2 * self.ny) as f64).round().clamp(0.0, (2 * self.ny) as f64) as usize;
        let n = self.grid_to_node[i * gy + j];
        if n != usize::MAX {
            return n;
        }
        (0..self.n_nodes())
            .min_by(|&a, &b| {
                let d = |k: usize| (self.coords[k][0] - x).powi(2) + (self.coords[k][1] - y).powi(2);
                d(a).total_cmp(&d(b))
            })
            .unwrap()
    }

    /// Nodes with `|x − x0| < tol·width`.
    pub fn nodes_on_vertical_line(&self, x0: f64) -> Vec<usize> {
        let tol = 1e-9 * self.width;
        (0..self.n_nodes()).filter(|&k| (self.coords[k][0] - x0).abs() < tol).collect()
    }

    pub fn elem_dofs(&self, e: usize) -> [usize; 16] {
        let mut d = [0usize; 16];
        for (k, &n) in self.elems[e].iter().enumerate() {
            d[2 * k] = 2 * n;
            d[2 * k + 1] = 2 * n + 1;
        }
        d
    }
}

/// Concentrated force at a node; `dir` is 0 for x and 1 for y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    pub node: usize,
    pub dir: usize,
    pub magnitude: f64,
}

/// Homogeneous Dirichlet dofs and point loads of one loadcase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub fixed_dofs: Vec<usize>,
    pub point_loads: Vec<PointLoad>,
}

impl LoadCase {
    pub fn force_vector(&self, n_dofs: usize) -> Vec<f64> {
        let mut f = vec![0.0; n_dofs];
        for l in &self.point_loads {
            f[2 * l.node + l.dir] += l.magnitude;
        }
        f
    }
}

/// Per-element material state of a design iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignField {
    pub tensors: Vec<Tensor4>,
    pub bases: Option<Vec<OrthoTensor>>,
    pub volumes: Vec<f64>,
}

impl DesignField {
    pub fn uniform(n: usize, tensor: Tensor4, volume: f64) -> Self {
        Self { tensors: vec![tensor; n], bases: None, volumes: vec![volume; n] }
    }

    pub fn from_ortho(bases: Vec<OrthoTensor>, volumes: Vec<f64>) -> Self {
        let tensors = bases.iter().map(|b| b.tensor()).collect();
        Self { tensors, bases: Some(bases), volumes }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn mean_volume(&self) -> f64 {
        self.volumes.iter().sum::<f64>() / self.volumes.len() as f64
    }
}

/// Mesh, loadcases, phases and the volume bound of a compliance problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Mesh,
    pub loadcases: Vec<LoadCase>,
    pub phases: PhasePair,
    pub vbar: f64,
}

/// Square cantilever clamped on the left edge (midside nodes included) with
/// a unit downward load at the bottom-right corner.
pub fn cantilever(nx: usize, ny: usize, width: f64, height: f64) -> Result<(Mesh, Vec<LoadCase>)> {
    let mesh = build_mesh(nx, ny, width, height)?;
    let fixed = mesh.nodes_on_vertical_line(0.0).iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
    let node = mesh.nearest_node(width, 0.0);
    let lc = LoadCase { fixed_dofs: fixed, point_loads: vec![PointLoad { node, dir: 1, magnitude: -1.0 }] };
    Ok((mesh, vec![lc]))
}

/// Rectangle pinned at its four corners with a downward unit load at the top
/// midpoint (loadcase 1) and an upward unit load at the bottom midpoint (loadcase 2).
pub fn multiload(nx: usize, ny: usize, width: f64, height: f64) -> Result<(Mesh, Vec<LoadCase>)> {
    let mesh = build_mesh(nx, ny, width, height)?;
    let mut fixed: Vec<usize> = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)]
        .iter()
        .flat_map(|&(x, y)| {
            let n = mesh.nearest_node(x, y);
            [2 * n, 2 * n + 1]
        })
        .collect();
    fixed.sort_unstable();
    let top = mesh.nearest_node(0.5 * width, height);
    let bottom = mesh.nearest_node(0.5 * width, 0.0);
    let lcs = vec![
        LoadCase { fixed_dofs: fixed.clone(), point_loads: vec![PointLoad { node: top, dir: 1, magnitude: -1.0 }] },
        LoadCase { fixed_dofs: fixed, point_loads: vec![PointLoad { node: bottom, dir: 1, magnitude: 1.0 }] },
    ];
    Ok((mesh, lcs))
}

fn shape_derivs(xi: f64, eta: f64) -> ([f64; 8], [f64; 8]) {
    let mut dxi = [0.0; 8];
    let mut deta = [0.0; 8];
    for (k, &(a, b)) in REF_NODES.iter().enumerate() {
        if a != 0.0 && b != 0.0 {
            dxi[k] = 0.25 * a * (1.0 + eta * b) * (2.0 * xi * a + eta * b);
            deta[k] = 0.25 * b * (1.0 + xi * a) * (xi * a + 2.0 * eta * b);
        } else if a == 0.0 {
            dxi[k] = -xi * (1.0 + eta * b);
            deta[k] = 0.5 * b * (1.0 - xi * xi);
        } else {
            dxi[k] = 0.5 * a * (1.0 - eta * eta);
            deta[k] = -eta * (1.0 + xi * a);
        }
    }
    (dxi, deta)
}

/// Serendipity shape functions at a reference point.
pub fn shape_values(xi: f64, eta: f64) -> [f64; 8] {
    let mut n = [0.0; 8];
    for (k, &(a, b)) in REF_NODES.iter().enumerate() {
        n[k] = if a != 0.0 && b != 0.0 {
            0.25 * (1.0 + xi * a) * (1.0 + eta * b) * (xi * a + eta * b - 1.0)
        } else if a == 0.0 {
            0.5 * (1.0 - xi * xi) * (1.0 + eta * b)
        } else {
            0.5 * (1.0 + xi * a) * (1.0 - eta * eta)
        };
    }
    n
}

/// Strain operator and quadrature weights (including the Jacobian) at the
/// nine Gauss points of an `a × b` element.
pub fn gauss_operators(a: f64, b: f64) -> Vec<(BMat, f64)> {
    let g = (0.6f64).sqrt();
    let pts = [(-g, 5.0 / 9.0), (0.0, 8.0 / 9.0), (g, 5.0 / 9.0)];
    let det = 0.25 * a * b;
    let mut out = Vec::with_capacity(9);
    for &(eta, wy) in &pts {
        for &(xi, wx) in &pts {
            let (dxi, deta) = shape_derivs(xi, eta);
            let mut bm = BMat::zeros();
            for k in 0..8 {
                let dx = dxi[k] * 2.0 / a;
                let dy = deta[k] * 2.0 / b;
                bm[(0, 2 * k)] = dx;
                bm[(1, 2 * k + 1)] = dy;
                bm[(2, 2 * k)] = FRAC_1_SQRT_2 * dy;
                bm[(2, 2 * k + 1)] = FRAC_1_SQRT_2 * dx;
            }
            out.push((bm, wx * wy * det));
        }
    }
    out
}

const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Element-level operators shared by every element of a structured mesh.
#[derive(Clone, Debug)]
pub struct ElementKernel {
    pub gauss: Vec<(BMat, f64)>,
    basis: [ElemMat; 6],
    area: f64,
}

impl ElementKernel {
    pub fn new(a: f64, b: f64) -> Self {
        let gauss = gauss_operators(a, b);
        let basis = SYM_PAIRS.map(|(i, j)| {
            let mut s = Mat3::zeros();
            s[(i, j)] = 1.0;
            s[(j, i)] = 1.0;
            gauss.iter().fold(ElemMat::zeros(), |acc, (bm, w)| acc + bm.transpose() * s * bm * *w)
        });
        Self { gauss, basis, area: a * b }
    }

    /// `K_e = Σ_g w_g Bᵀ M B`, linear in the six entries of `M`.
    pub fn stiffness(&self, m: &Mat3) -> ElemMat {
        let mut k = ElemMat::zeros();
        for (idx, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let c = m[(i, j)];
            if c != 0.0 {
                k += self.basis[idx] * c;
            }
        }
        k
    }

    /// Volume-weighted mean of the Gauss-point strains.
    pub fn mean_strain(&self, ue: &ElemVec) -> Vec3 {
        self.gauss.iter().fold(Vec3::zeros(), |acc, (bm, w)| acc + bm * ue * *w) / self.area
    }

    /// `−∫ ε εᵀ dx` over the element.
    pub fn sensitivity(&self, ue: &ElemVec) -> Mat3 {
        -self.gauss.iter().fold(Mat3::zeros(), |acc, (bm, w)| {
            let e = bm * ue;
            acc + e * e.transpose() * *w
        })
    }
}

/// Displacements and compliances for every loadcase of one design.
#[derive(Clone, Debug)]
pub struct StateSolution {
    pub displacements: Vec<Vec<f64>>,
    pub compliance: Vec<f64>,
    pub max_residual: f64,
}

impl StateSolution {
    pub fn total_compliance(&self) -> f64 {
        self.compliance.iter().sum()
    }
}

/// Averaged element strain and stress for one loadcase.
#[derive(Clone, Copy, Debug)]
pub struct ElementField {
    pub strain: StrainM,
    pub stress: StressM,
}

/// Assembly pattern, symbolic factorization and element operators of a
/// problem; reused across design iterates.
pub struct FemModel {
    pub mesh: Mesh,
    pub loadcases: Vec<LoadCase>,
    pub kernel: ElementKernel,
    free_of_dof: Vec<usize>,
    n_free: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    scatter: Vec<u32>,
    symbolic: SymbolicLlt<usize>,
    forces: Vec<Vec<f64>>,
}

impl FemModel {
    pub fn new(mesh: Mesh, loadcases: Vec<LoadCase>) -> Result<Self> {
        if loadcases.is_empty() {
            return Err(Error::Invalid("at least one loadcase is required".into()));
        }
        let fixed: BTreeSet<usize> = loadcases[0].fixed_dofs.iter().copied().collect();
        for lc in &loadcases {
            let other: BTreeSet<usize> = lc.fixed_dofs.iter().copied().collect();
            if other != fixed {
                return Err(Error::Invalid("loadcases must share their Dirichlet dofs".into()));
            }
            if lc.point_loads.is_empty() || lc.point_loads.iter().all(|l| l.magnitude == 0.0) {
                return Err(Error::Invalid("loadcase without load".into()));
            }
            if lc.point_loads.iter().any(|l| l.node >= mesh.n_nodes() || l.dir > 1) {
                return Err(Error::Invalid("point load references a missing dof".into()));
            }
        }
        if fixed.is_empty() {
            return Err(Error::Invalid("no Dirichlet dofs: stiffness would be singular".into()));
        }
        let nd = mesh.n_dofs();
        if fixed.iter().any(|&d| d >= nd) {
            return Err(Error::Invalid("fixed dof out of range".into()));
        }
        let mut free_of_dof = vec![usize::MAX; nd];
        let mut n_free = 0;
        for (d, slot) in free_of_dof.iter_mut().enumerate() {
            if !fixed.contains(&d) {
                *slot = n_free;
                n_free += 1;
            }
        }
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n_free];
        for e in 0..mesh.n_elems() {
            let dofs = mesh.elem_dofs(e);
            for &di in &dofs {
                for &dj in &dofs {
                    let (fi, fj) = (free_of_dof[di], free_of_dof[dj]);
                    if fi != usize::MAX && fj != usize::MAX && fi >= fj {
                        cols[fj].push(fi);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n_free + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        let mut scatter = vec![u32::MAX; mesh.n_elems() * 256];
        for e in 0..mesh.n_elems() {
            let dofs = mesh.elem_dofs(e);
            for a in 0..16 {
                for b in 0..16 {
                    let (fi, fj) = (free_of_dof[dofs[a]], free_of_dof[dofs[b]]);
                    if fi != usize::MAX && fj != usize::MAX && fi >= fj {
                        let range = &row_idx[col_ptr[fj]..col_ptr[fj + 1]];
                        let pos = range.binary_search(&fi).expect("pattern entry");
                        scatter[e * 256 + a * 16 + b] = (col_ptr[fj] + pos) as u32;
                    }
                }
            }
        }
        let sym = SymbolicSparseColMat::new_checked(n_free, n_free, col_ptr.clone(), None, row_idx.clone());
        let symbolic = SymbolicLlt::try_new(sym.as_ref(), Side::Lower)
            .map_err(|e| Error::Numerical(format!("symbolic factorization failed: {e:?}")))?;
        let (a, b) = mesh.elem_size();
        let forces = loadcases.iter().map(|lc| lc.force_vector(nd)).collect();
        Ok(Self {
            kernel: ElementKernel::new(a, b),
            mesh,
            loadcases,
            free_of_dof,
            n_free,
            col_ptr,
            row_idx,
            scatter,
            symbolic,
            forces,
        })
    }

    pub fn from_problem(p: &Problem) -> Result<Self> {
        Self::new(p.mesh.clone(), p.loadcases.clone())
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn force(&self, lc: usize) -> &[f64] {
        &self.forces[lc]
    }

    /// Lower triangle (CSC values) of the reduced stiffness.
    pub fn assemble_values(&self, tensors: &[Tensor4]) -> Vec<f64> {
        let mut val = vec![0.0; self.row_idx.len()];
        for (e, t) in tensors.iter().enumerate() {
            let ke = self.kernel.stiffness(&t.m);
            let map = &self.scatter[e * 256..(e + 1) * 256];
            for a in 0..16 {
                for b in 0..16 {
                    let s = map[a * 16 + b];
                    if s != u32::MAX {
                        val[s as usize] += ke[(a, b)];
                    }
                }
            }
        }
        val
    }

    /// Reduced stiffness as a dense matrix (small problems and tests).
    pub fn assemble_dense(&self, tensors: &[Tensor4]) -> nalgebra::DMatrix<f64> {
        let val = self.assemble_values(tensors);
        let mut k = nalgebra::DMatrix::zeros(self.n_free, self.n_free);
        for c in 0..self.n_free {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                k[(r, c)] = val[p];
                k[(c, r)] = val[p];
            }
        }
        k
    }

    fn reduced_matvec(&self, val: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_free];
        for c in 0..self.n_free {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                y[r] += val[p] * x[c];
                if r != c {
                    y[c] += val[p] * x[r];
                }
            }
        }
        y
    }

    /// Solve `K u_j = f_j` for all loadcases with one factorization.
    pub fn solve_state(&self, tensors: &[Tensor4]) -> Result<StateSolution> {
        if tensors.len() != self.mesh.n_elems() {
            return Err(Error::Invalid(format!(
                "design has {} tensors for {} elements",
                tensors.len(),
                self.mesh.n_elems()
            )));
        }
        let val = self.assemble_values(tensors);
        let sym = unsafe {
            faer::sparse::SymbolicSparseColMatRef::new_unchecked(
                self.n_free,
                self.n_free,
                &self.col_ptr,
                None,
                &self.row_idx,
            )
        };
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), SparseColMatRef::new(sym, &val), Side::Lower)
            .map_err(|e| Error::Numerical(format!("stiffness not positive definite: {e:?}")))?;
        let nlc = self.loadcases.len();
        let nd = self.mesh.n_dofs();
        let mut rhs = Mat::<f64>::zeros(self.n_free, nlc);
        for j in 0..nlc {
            for d in 0..nd {
                let f = self.free_of_dof[d];
                if f != usize::MAX {
                    rhs[(f, j)] = self.forces[j][d];
                }
            }
        }
        let mut x = rhs.clone();
        llt.solve_in_place(x.as_mut());
        let mut displacements = Vec::with_capacity(nlc);
        let mut compliance = Vec::with_capacity(nlc);
        let mut max_residual: f64 = 0.0;
        for j in 0..nlc {
            let xr: Vec<f64> = (0..self.n_free).map(|i| x[(i, j)]).collect();
            let kx = self.reduced_matvec(&val, &xr);
            let fnorm = (0..self.n_free).map(|i| rhs[(i, j)].powi(2)).sum::<f64>().sqrt();
            let res = (0..self.n_free).map(|i| (kx[i] - rhs[(i, j)]).powi(2)).sum::<f64>().sqrt();
            max_residual = max_residual.max(res / fnorm);
            let mut u = vec![0.0; nd];
            for d in 0..nd {
                let f = self.free_of_dof[d];
                if f != usize::MAX {
                    u[d] = xr[f];
                }
            }
            compliance.push(self.forces[j].iter().zip(&u).map(|(a, b)| a * b).sum());
            displacements.push(u);
        }
        if !(max_residual < 1e-9) {
            return Err(Error::Numerical(format!("equilibrium residual {max_residual:e}")));
        }
        Ok(StateSolution { displacements, compliance, max_residual })
    }

    pub fn elem_displacement(&self, u: &[f64], e: usize) -> ElemVec {
        let dofs = self.mesh.elem_dofs(e);
        ElemVec::from_fn(|i, _| u[dofs[i]])
    }

    /// Gauss-point averaged strain and stress per element and loadcase
    /// (`result[lc][e]`).
    pub fn element_fields(&self, tensors: &[Tensor4], state: &StateSolution) -> Vec<Vec<ElementField>> {
        state
            .displacements
            .iter()
            .map(|u| {
                (0..self.mesh.n_elems())
                    .map(|e| {
                        let eps = self.kernel.mean_strain(&self.elem_displacement(u, e));
                        ElementField { strain: StrainM::new(eps), stress: StressM::new(tensors[e].m * eps) }
                    })
                    .collect()
            })
            .collect()
    }

    /// `∂c_j/∂M_e = −∫_e ε εᵀ dx`.
    pub fn compliance_sensitivity(&self, state: &StateSolution, element: usize, loadcase: usize) -> Mat3 {
        self.kernel.sensitivity(&self.elem_displacement(&state.displacements[loadcase], element))
    }

    /// Sensitivities of all elements, `result[e][lc]`.
    pub fn sensitivities(&self, state: &StateSolution) -> Vec<Vec<Mat3>> {
        (0..self.mesh.n_elems())
            .map(|e| (0..self.loadcases.len()).map(|j| self.compliance_sensitivity(state, e, j)).collect())
            .collect()
    }
}
