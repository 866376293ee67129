//! Stabilized P1 finite elements: assembly of the advection-diffusion
//! bilinear form with a pluggable SUPG coefficient, Dirichlet constraints,
//! and a deterministic sparse solver.
//!
//! Element matrices are computed in parallel (independent work items); the
//! scatter into the global CSR matrix is sequential and index-ordered, so
//! the assembled system is bit-identical across thread counts.

use crate::coeff_table::StabTable;
use crate::geometry::{element_metrics, GeometryError, Mesh};
use crate::par;
use crate::stabilization::{self, PecletPair, StabilizationError, Truncation};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Stabilization(#[from] StabilizationError),
    #[error("nodal velocity sample count {got} does not match mesh node count {expected}")]
    VelocityLength { expected: usize, got: usize },
    #[error("element {element} is singular (area {area:.3e})")]
    SingularElement { element: usize, area: f64 },
    #[error("Dirichlet value supplied for non-boundary node {node}")]
    NonBoundaryNode { node: usize },
    #[error("Dirichlet node index {node} out of range")]
    NodeOutOfRange { node: usize },
    #[error("solver did not reach the residual contract: {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element-wise constant advection velocity provider; sampled at element
/// barycenters during assembly.
#[derive(Debug, Clone)]
pub enum VelocityField {
    Constant { a1: f64, a2: f64 },
    /// The benchmark's piecewise rotational field around (0.5, 0.5): scaled
    /// by 0.1 inside the disc of radius 0.01 around the origin.
    Rotational,
    /// One velocity vector per mesh node; element velocity is the vertex
    /// average at the barycenter.
    NodalSamples(Vec<[f64; 2]>),
}

impl VelocityField {
    pub fn constant_from_angle(magnitude: f64, alpha: f64) -> Self {
        Self::Constant {
            a1: magnitude * alpha.cos(),
            a2: magnitude * alpha.sin(),
        }
    }

    pub fn rotational_at(x: f64, y: f64) -> [f64; 2] {
        let scale = if x.hypot(y) < 0.01 { 0.1 } else { 2.0 };
        [-scale * (y - 0.5), scale * (x - 0.5)]
    }

    fn check(&self, mesh: &Mesh) -> Result<(), FemError> {
        if let Self::NodalSamples(v) = self {
            if v.len() != mesh.num_nodes() {
                return Err(FemError::VelocityLength {
                    expected: mesh.num_nodes(),
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Element-constant velocity `a_K` for element `e` with barycenter `bc`.
    pub fn at_element(&self, mesh: &Mesh, e: usize, bc: [f64; 2]) -> [f64; 2] {
        match self {
            Self::Constant { a1, a2 } => [*a1, *a2],
            Self::Rotational => Self::rotational_at(bc[0], bc[1]),
            Self::NodalSamples(v) => {
                let el = mesh.elements[e];
                let mut a = [0.0, 0.0];
                for n in el {
                    a[0] += v[n][0] / 3.0;
                    a[1] += v[n][1] / 3.0;
                }
                a
            }
        }
    }
}

/// Directional grid Peclet numbers `(h a1 / 2mu, h a2 / 2mu)` and their norm.
pub fn element_peclets(h_k: f64, a: [f64; 2], mu: f64) -> (PecletPair, f64) {
    assert!(mu > 0.0);
    let pe = PecletPair::new(h_k * a[0] / (2.0 * mu), h_k * a[1] / (2.0 * mu));
    let norm = pe.norm();
    (pe, norm)
}

/// Source of the element-wise SUPG coefficient.
#[derive(Debug, Clone, Copy)]
pub enum TauProvider<'a> {
    /// Interpolated `psi` from a prebuilt table: the production path.
    Spectral(&'a StabTable),
    /// Direct `psi` evaluation per element; exact but slow.
    SpectralDirect(Truncation),
    Gen1d,
    Codina,
    /// `tau = 0`: plain Galerkin.
    None,
}

impl TauProvider<'_> {
    pub fn tau(&self, h: f64, mu: f64, a: [f64; 2]) -> Result<f64, StabilizationError> {
        let (pe, _) = element_peclets(h, a, mu);
        match self {
            Self::Spectral(table) => Ok(8.0 * h * h / mu * table.query(pe)?),
            Self::SpectralDirect(tr) => stabilization::tau_spectral(h, mu, pe, *tr),
            Self::Gen1d => Ok(stabilization::tau_gen1d(h, mu, a[0].hypot(a[1]))),
            Self::Codina => stabilization::tau_codina(h, mu, a[0].hypot(a[1])),
            Self::None => Ok(0.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Spectral(_) => "spectral",
            Self::SpectralDirect(_) => "spectral-direct",
            Self::Gen1d => "gen1d",
            Self::Codina => "codina",
            Self::None => "none",
        }
    }
}

/// Square sparse matrix, compressed row storage, columns sorted per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds a zero matrix from per-row sorted column lists.
    fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let vals = vec![0.0; col_idx.len()];
        Self { n, row_ptr, col_idx, vals }
    }

    pub fn nnz_index(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.nnz_index(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }
}

/// Assembled linear system before or after Dirichlet constraints.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
}

/// Nodal solution values plus the solver's achieved relative residual.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

type LocalContribution = ([usize; 3], [[f64; 3]; 3], [f64; 3]);

fn local_system<F>(
    mesh: &Mesh,
    e: usize,
    mu: f64,
    vel: &VelocityField,
    f: &F,
    tau_provider: &TauProvider,
) -> Result<LocalContribution, FemError>
where
    F: Fn(f64, f64) -> f64,
{
    let em = element_metrics(mesh, e)?;
    let c = mesh.element_coords(e);
    let area = em.area;
    if area < 1e-300 {
        return Err(FemError::SingularElement { element: e, area });
    }
    // P1 gradients: grad phi_i = perp of the opposite edge / 2|K|
    let mut grads = [[0.0f64; 2]; 3];
    for i in 0..3 {
        let (p1, p2) = (c[(i + 1) % 3], c[(i + 2) % 3]);
        grads[i] = [
            (p1[1] - p2[1]) / (2.0 * area),
            (p2[0] - p1[0]) / (2.0 * area),
        ];
    }
    let a = vel.at_element(mesh, e, em.barycenter);
    let tau = tau_provider.tau(em.h_k, mu, a)?;
    let adv: Vec<f64> = grads.iter().map(|g| a[0] * g[0] + a[1] * g[1]).collect();

    let mut k = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let diff = mu * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            let advection = adv[j] * area / 3.0;
            let supg = tau * adv[j] * adv[i] * area;
            k[i][j] = diff + advection + supg;
        }
    }

    // degree-2 rule at edge midpoints for (f, V) and (f, a . grad V)
    let mids = [
        [(c[0][0] + c[1][0]) / 2.0, (c[0][1] + c[1][1]) / 2.0],
        [(c[1][0] + c[2][0]) / 2.0, (c[1][1] + c[2][1]) / 2.0],
        [(c[2][0] + c[0][0]) / 2.0, (c[2][1] + c[0][1]) / 2.0],
    ];
    let fm = [
        f(mids[0][0], mids[0][1]),
        f(mids[1][0], mids[1][1]),
        f(mids[2][0], mids[2][1]),
    ];
    let f_mean = (fm[0] + fm[1] + fm[2]) / 3.0;
    let mut rhs = [0.0f64; 3];
    for i in 0..3 {
        // phi_i = 1/2 at the two adjacent edge midpoints, 0 at the opposite
        let galerkin = area / 3.0 * (fm[i] + fm[(i + 2) % 3]) / 2.0;
        let supg = tau * adv[i] * area * f_mean;
        rhs[i] = galerkin + supg;
    }
    Ok((mesh.elements[e], k, rhs))
}

fn sparsity(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut rows: Vec<Vec<usize>> = (0..mesh.num_nodes()).map(|i| vec![i]).collect();
    for el in &mesh.elements {
        for &i in el {
            for &j in el {
                rows[i].push(j);
            }
        }
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    rows
}

fn assemble_impl<F>(
    mesh: &Mesh,
    mu: f64,
    vel: &VelocityField,
    f: &F,
    tau_provider: &TauProvider,
    parallel: bool,
) -> Result<LinearSystem, FemError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    assert!(mu > 0.0);
    vel.check(mesh)?;
    let ne = mesh.num_elements();
    let work = |e: usize| local_system(mesh, e, mu, vel, f, tau_provider);
    let locals: Vec<Result<LocalContribution, FemError>> = if parallel {
        par::map_indexed(ne, work)
    } else {
        par::map_indexed_serial(ne, work)
    };

    let mut matrix = Csr::from_pattern(&sparsity(mesh));
    let mut rhs = vec![0.0; mesh.num_nodes()];
    for local in locals {
        let (nodes, k, r) = local?;
        for i in 0..3 {
            rhs[nodes[i]] += r[i];
            for j in 0..3 {
                let idx = matrix.nnz_index(nodes[i], nodes[j]).expect("pattern covers element");
                matrix.vals[idx] += k[i][j];
            }
        }
    }
    Ok(LinearSystem { matrix, rhs })
}

/// Assembles `mu (grad U, grad V) + (a_K . grad U, V) + sum_K tau_K (a_K . grad U, a_K . grad V)`
/// with the matching right-hand side `(f, V) + sum_K tau_K (f, a_K . grad V)`.
pub fn assemble<F>(
    mesh: &Mesh,
    mu: f64,
    vel: &VelocityField,
    f: &F,
    tau_provider: &TauProvider,
) -> Result<LinearSystem, FemError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    assemble_impl(mesh, mu, vel, f, tau_provider, true)
}

/// Sequential assembly; identical output to [`assemble`].
pub fn assemble_serial<F>(
    mesh: &Mesh,
    mu: f64,
    vel: &VelocityField,
    f: &F,
    tau_provider: &TauProvider,
) -> Result<LinearSystem, FemError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    assemble_impl(mesh, mu, vel, f, tau_provider, false)
}

/// Imposes Dirichlet values on all boundary nodes: zero by default,
/// overridden per node by `overrides`. Constrained rows become identity
/// rows; the known values are moved to the right-hand side of the interior
/// equations and the coupling columns zeroed.
pub fn apply_dirichlet(
    sys: &mut LinearSystem,
    mesh: &Mesh,
    overrides: &[(usize, f64)],
) -> Result<(), FemError> {
    let n = mesh.num_nodes();
    let mut g: Vec<Option<f64>> = mesh
        .boundary_node_flags
        .iter()
        .map(|&b| if b { Some(0.0) } else { None })
        .collect();
    for &(node, value) in overrides {
        if node >= n {
            return Err(FemError::NodeOutOfRange { node });
        }
        if !mesh.boundary_node_flags[node] {
            return Err(FemError::NonBoundaryNode { node });
        }
        g[node] = Some(value);
    }
    let m = &mut sys.matrix;
    for i in 0..n {
        match g[i] {
            Some(value) => {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    m.vals[k] = if m.col_idx[k] == i { 1.0 } else { 0.0 };
                }
                sys.rhs[i] = value;
            }
            None => {
                for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                    if let Some(value) = g[m.col_idx[k]] {
                        sys.rhs[i] -= m.vals[k] * value;
                        m.vals[k] = 0.0;
                    }
                }
            }
        }
    }
    Ok(())
}

/// ILU(0) factorization: L (unit diagonal) and U share the matrix pattern.
fn ilu0(a: &Csr) -> Csr {
    let mut f = a.clone();
    let mut diag = vec![usize::MAX; f.n];
    for i in 0..f.n {
        diag[i] = f.nnz_index(i, i).expect("diagonal entry present");
    }
    for i in 0..f.n {
        for kk in f.row_ptr[i]..f.row_ptr[i + 1] {
            let k = f.col_idx[kk];
            if k >= i {
                break;
            }
            let pivot = f.vals[diag[k]];
            if pivot == 0.0 {
                continue;
            }
            let lik = f.vals[kk] / pivot;
            f.vals[kk] = lik;
            if lik == 0.0 {
                continue;
            }
            for jj in (kk + 1)..f.row_ptr[i + 1] {
                let j = f.col_idx[jj];
                if let Some(kj) = f.nnz_index(k, j) {
                    f.vals[jj] -= lik * f.vals[kj];
                }
            }
        }
    }
    f
}

/// Solves `(LU) z = r` with the combined ILU(0) factor.
fn ilu_apply(f: &Csr, diag: &[usize], r: &[f64], z: &mut [f64]) {
    // forward: L y = r, unit diagonal
    for i in 0..f.n {
        let mut acc = r[i];
        for k in f.row_ptr[i]..f.row_ptr[i + 1] {
            let j = f.col_idx[k];
            if j >= i {
                break;
            }
            acc -= f.vals[k] * z[j];
        }
        z[i] = acc;
    }
    // backward: U x = y
    for i in (0..f.n).rev() {
        let mut acc = z[i];
        for k in (f.row_ptr[i]..f.row_ptr[i + 1]).rev() {
            let j = f.col_idx[k];
            if j <= i {
                break;
            }
            acc -= f.vals[k] * z[j];
        }
        let d = f.vals[diag[i]];
        z[i] = if d != 0.0 { acc / d } else { acc };
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One BiCGSTAB sweep for `A e = r`, starting from `e = 0`. Stops on the
/// recurrence residual reaching `target`, on a recurrence breakdown, or
/// after `max_iter` iterations; the caller re-checks the true residual.
fn bicgstab_cycle(
    a: &Csr,
    f: &Csr,
    diag: &[usize],
    rhs: &[f64],
    e: &mut [f64],
    target: f64,
    max_iter: usize,
) -> usize {
    let n = a.n;
    let mut r = rhs.to_vec();
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];

    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            return it;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        ilu_apply(f, diag, &p, &mut y);
        a.matvec(&y, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            return it;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                e[i] += alpha * y[i];
            }
            return it;
        }
        ilu_apply(f, diag, &s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return it;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            e[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= target || omega == 0.0 {
            return it;
        }
    }
    max_iter
}

/// BiCGSTAB with ILU(0) preconditioning and true-residual restarts.
/// Deterministic; enforces the contract `||Ax - b|| / ||b|| <= 1e-10` on
/// the true residual, not the recurrence.
pub fn solve(sys: &LinearSystem) -> Result<SolutionField, FemError> {
    const TOL: f64 = 1e-10;
    const MAX_RESTARTS: usize = 8;
    let a = &sys.matrix;
    let b = &sys.rhs;
    let n = a.n;
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(SolutionField {
            values: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
        });
    }
    let f = ilu0(a);
    let diag: Vec<usize> = (0..n).map(|i| f.nnz_index(i, i).unwrap()).collect();
    let target = TOL * b_norm * 0.1;
    let max_iter = 200 + 20 * n;

    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut iterations = 0;
    for _ in 0..MAX_RESTARTS {
        a.matvec(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        let residual = norm(&r) / b_norm;
        if residual <= TOL {
            return Ok(SolutionField {
                values: x,
                residual,
                iterations,
            });
        }
        e.iter_mut().for_each(|v| *v = 0.0);
        iterations += bicgstab_cycle(a, &f, &diag, &r, &mut e, target, max_iter);
        for i in 0..n {
            x[i] += e[i];
        }
    }
    a.matvec(&x, &mut ax);
    let residual = (0..n)
        .map(|i| (ax[i] - b[i]) * (ax[i] - b[i]))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    if residual > TOL {
        return Err(FemError::NoConvergence {
            residual,
            iterations,
        });
    }
    Ok(SolutionField {
        values: x,
        residual,
        iterations,
    })
}

/// CSV export: header `x,y,u`, one row per node.
pub fn write_solution_csv<W: Write>(
    mesh: &Mesh,
    field: &SolutionField,
    mut w: W,
) -> Result<(), FemError> {
    writeln!(w, "x,y,u")?;
    for (c, u) in mesh.node_coords.iter().zip(&field.values) {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", c[0], c[1], u)?;
    }
    Ok(())
}

/// Legacy-VTK export of the triangulation with the solution as point data.
pub fn write_solution_vtk<W: Write>(
    mesh: &Mesh,
    field: &SolutionField,
    mut w: W,
) -> Result<(), FemError> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "advection-diffusion solution")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_nodes())?;
    for c in &mesh.node_coords {
        writeln!(w, "{} {} 0", c[0], c[1])?;
    }
    writeln!(w, "CELLS {} {}", mesh.num_elements(), 4 * mesh.num_elements())?;
    for el in &mesh.elements {
        writeln!(w, "3 {} {} {}", el[0], el[1], el[2])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.num_elements())?;
    for _ in 0..mesh.num_elements() {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.num_nodes())?;
    writeln!(w, "SCALARS u double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for u in &field.values {
        writeln!(w, "{}", u)?;
    }
    Ok(())
}
