//! Error norms against refined reference solutions and convergence helpers.
//!
//! References are built on meshes that nest the coarse one, so every coarse
//! node and coarse edge midpoint is a fine node (or an exact P1 average at
//! refinement factor 1) and no point location is ever needed.

use crate::fem::{
    apply_dirichlet, assemble, solve, FemError, SolutionField, TauProvider, VelocityField,
};
use crate::geometry::{
    build_structured_mesh_rect, refine_uniform, GeometryError, Mesh,
};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("refinement factor {0} not supported here (structured meshes need 1 or an even factor, general meshes a power of two)")]
    UnsupportedFactor(usize),
    #[error("reference construction: coarse node {node} does not coincide with its fine image")]
    NodeMismatch { node: usize },
}

enum EvalMode {
    /// Fine mesh is the structured rebuild at an even multiple of the
    /// resolution; `fine_n1` is its node count along x.
    Nested { fine_n1: usize },
    /// Fine mesh came from repeated red refinement; coarse indices are
    /// preserved and `edge_mid` maps a coarse edge to its midpoint node.
    Red { edge_mid: HashMap<(usize, usize), usize> },
    /// Factor 1: the reference lives on the coarse mesh itself.
    Identity,
}

/// A solve on a nesting refinement of the coarse mesh, with exact nodal
/// restriction.
pub struct ReferenceSolution {
    pub mesh: Mesh,
    pub field: SolutionField,
    node_map: Vec<usize>,
    mode: EvalMode,
}

impl ReferenceSolution {
    /// Reference value at the image of coarse node `i`.
    pub fn node_value(&self, i: usize) -> f64 {
        self.field.values[self.node_map[i]]
    }

    /// Reference value at the midpoint of the coarse edge `(a, b)`.
    pub fn edge_midpoint_value(&self, a: usize, b: usize) -> f64 {
        match &self.mode {
            EvalMode::Identity => (self.node_value(a) + self.node_value(b)) / 2.0,
            EvalMode::Red { edge_mid } => {
                let key = (a.min(b), a.max(b));
                self.field.values[edge_mid[&key]]
            }
            EvalMode::Nested { .. } => {
                let fa = self.node_map[a];
                let fb = self.node_map[b];
                // even factor: the midpoint of two image nodes is a fine
                // node on the same grid line or cell diagonal
                let fine_n1 = match self.mode {
                    EvalMode::Nested { fine_n1, .. } => fine_n1,
                    _ => unreachable!(),
                };
                let (ia, ja) = (fa % fine_n1, fa / fine_n1);
                let (ib, jb) = (fb % fine_n1, fb / fine_n1);
                let mid = ((ja + jb) / 2) * fine_n1 + (ia + ib) / 2;
                self.field.values[mid]
            }
        }
    }
}

fn solve_on<F>(
    mesh: &Mesh,
    mu: f64,
    vel: &VelocityField,
    f: &F,
    provider: &TauProvider,
) -> Result<SolutionField, FemError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let mut sys = assemble(mesh, mu, vel, f, provider)?;
    apply_dirichlet(&mut sys, mesh, &[])?;
    solve(&sys)
}

/// Solves the same homogeneous-Dirichlet problem on a `factor` times finer
/// nesting mesh. Structured meshes are rebuilt at the finer resolution
/// (factor 1 or even); other meshes are red-refined `log2(factor)` times,
/// with nodal velocity samples interpolated onto edge midpoints.
pub fn make_reference<F>(
    coarse: &Mesh,
    factor: usize,
    mu: f64,
    vel: &VelocityField,
    f: &F,
    provider: &TauProvider,
) -> Result<ReferenceSolution, AnalysisError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if factor == 1 {
        let field = solve_on(coarse, mu, vel, f, provider)?;
        return Ok(ReferenceSolution {
            mesh: coarse.clone(),
            field,
            node_map: (0..coarse.num_nodes()).collect(),
            mode: EvalMode::Identity,
        });
    }
    let structured = coarse.structured_info.is_some()
        && !matches!(vel, VelocityField::NodalSamples(_));
    if structured {
        if factor % 2 != 0 {
            return Err(AnalysisError::UnsupportedFactor(factor));
        }
        let info = coarse.structured_info.unwrap();
        let corner = coarse.node_coords[coarse.num_nodes() - 1];
        let fine_n1 = (info.n1 - 1) * factor + 1;
        let fine_n2 = (info.n2 - 1) * factor + 1;
        let fine = build_structured_mesh_rect(corner[0], corner[1], fine_n1, fine_n2)?;
        let mut node_map = Vec::with_capacity(coarse.num_nodes());
        for (idx, c) in coarse.node_coords.iter().enumerate() {
            let i = idx % info.n1;
            let j = idx / info.n1;
            let fine_idx = (j * factor) * fine_n1 + i * factor;
            let fc = fine.node_coords[fine_idx];
            if (fc[0] - c[0]).abs() > 1e-12 || (fc[1] - c[1]).abs() > 1e-12 {
                return Err(AnalysisError::NodeMismatch { node: idx });
            }
            node_map.push(fine_idx);
        }
        let field = solve_on(&fine, mu, vel, f, provider)?;
        return Ok(ReferenceSolution {
            mesh: fine,
            field,
            node_map,
            mode: EvalMode::Nested { fine_n1 },
        });
    }
    if !factor.is_power_of_two() {
        return Err(AnalysisError::UnsupportedFactor(factor));
    }
    let mut mesh = coarse.clone();
    let mut vel_fine = vel.clone();
    let mut first_edges: Option<HashMap<(usize, usize), usize>> = None;
    let mut levels = factor;
    while levels > 1 {
        let base_nodes = mesh.num_nodes();
        let (refined, midpoint_of) = refine_uniform(&mesh);
        if let VelocityField::NodalSamples(samples) = &mut vel_fine {
            for &(a, b) in &midpoint_of {
                samples.push([
                    (samples[a][0] + samples[b][0]) / 2.0,
                    (samples[a][1] + samples[b][1]) / 2.0,
                ]);
            }
        }
        if first_edges.is_none() {
            let map = midpoint_of
                .iter()
                .enumerate()
                .map(|(k, &edge)| (edge, base_nodes + k))
                .collect();
            first_edges = Some(map);
        }
        mesh = refined;
        levels /= 2;
    }
    let field = solve_on(&mesh, mu, &vel_fine, f, provider)?;
    Ok(ReferenceSolution {
        mesh,
        field,
        node_map: (0..coarse.num_nodes()).collect(),
        mode: EvalMode::Red {
            edge_mid: first_edges.unwrap(),
        },
    })
}

/// `L2` distance between the coarse solution and the reference, by the
/// degree-2 edge-midpoint rule on coarse elements.
pub fn l2_error(coarse: &Mesh, u: &SolutionField, r: &ReferenceSolution) -> f64 {
    let mut acc = 0.0;
    for e in 0..coarse.num_elements() {
        let el = coarse.elements[e];
        let area = Mesh::signed_area(&coarse.element_coords(e)).abs();
        for i in 0..3 {
            let (a, b) = (el[i], el[(i + 1) % 3]);
            let uh = (u.values[a] + u.values[b]) / 2.0;
            let d = uh - r.edge_midpoint_value(a, b);
            acc += area / 3.0 * d * d;
        }
    }
    acc.sqrt()
}

/// Max-norm distance over coarse nodes.
pub fn linf_error(u: &SolutionField, r: &ReferenceSolution) -> f64 {
    u.values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - r.node_value(i)).abs())
        .fold(0.0, f64::max)
}

/// Successive reduction ratios `e(N) / e(2N)` of an error sequence.
pub fn error_ratio_sequence(errors: &[f64]) -> Vec<f64> {
    assert!(errors.len() >= 2, "need at least two error entries");
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}
