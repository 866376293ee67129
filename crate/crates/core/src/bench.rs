//! End-to-end benchmark drivers: constant-velocity sweep, rotational field
//! on the half-square, and an external-velocity run on an irregular mesh,
//! each reporting errors against a refined reference per coefficient.

use crate::analysis::{l2_error, linf_error, make_reference, AnalysisError};
use crate::coeff_table::StabTable;
use crate::fem::{
    apply_dirichlet, assemble, element_peclets, solve, FemError, SolutionField, TauProvider,
    VelocityField,
};
use crate::geometry::{
    build_structured_mesh, build_structured_mesh_rect, element_metrics, GeometryError, Mesh,
};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("velocity file: {0}")]
    VelocityFormat(String),
    #[error("velocity file has {got} samples for a mesh with {expected} nodes")]
    VelocityMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element Peclet statistics over a whole mesh.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PecletStats {
    pub pe_max: f64,
    pub pe1_min: f64,
    pub pe1_max: f64,
    pub pe2_min: f64,
    pub pe2_max: f64,
}

pub fn peclet_stats(mesh: &Mesh, vel: &VelocityField, mu: f64) -> Result<PecletStats, BenchError> {
    let mut stats = PecletStats {
        pe_max: 0.0,
        pe1_min: f64::INFINITY,
        pe1_max: f64::NEG_INFINITY,
        pe2_min: f64::INFINITY,
        pe2_max: f64::NEG_INFINITY,
    };
    for e in 0..mesh.num_elements() {
        let em = element_metrics(mesh, e)?;
        let a = vel.at_element(mesh, e, em.barycenter);
        let (pe, norm) = element_peclets(em.h_k, a, mu);
        stats.pe_max = stats.pe_max.max(norm);
        stats.pe1_min = stats.pe1_min.min(pe.pe1);
        stats.pe1_max = stats.pe1_max.max(pe.pe1);
        stats.pe2_min = stats.pe2_min.min(pe.pe2);
        stats.pe2_max = stats.pe2_max.max(pe.pe2);
    }
    Ok(stats)
}

/// One benchmark run: mesh size, coefficient, Peclet statistics, errors
/// against the refined reference, and wall-clock seconds for the
/// assemble-and-solve of this coefficient.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchReport {
    pub benchmark: String,
    pub n: usize,
    pub tau_kind: String,
    pub pe_max: f64,
    pub pe1_range: (f64, f64),
    pub pe2_range: (f64, f64),
    pub l2: f64,
    pub linf: f64,
    pub runtime_s: f64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Copy with the wall-clock field zeroed; this is the byte-stable form
    /// compared across repeated runs.
    pub fn stable(&self) -> BenchReport {
        BenchReport {
            runtime_s: 0.0,
            ..self.clone()
        }
    }
}

/// `max(0, max u - hi) + max(0, lo - min u)`: how far the solution leaves
/// the range `[lo, hi]` of the boundary data.
pub fn oscillation_indicator(u: &SolutionField, lo: f64, hi: f64) -> f64 {
    let max = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    (max - hi).max(0.0) + (lo - min).max(0.0)
}

fn run_providers<F>(
    benchmark: &str,
    mesh: &Mesh,
    n: usize,
    mu: f64,
    vel: &VelocityField,
    f: &F,
    providers: &[TauProvider],
    table: &StabTable,
    ref_factor: usize,
) -> Result<Vec<BenchReport>, BenchError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let stats = peclet_stats(mesh, vel, mu)?;
    let reference = make_reference(
        mesh,
        ref_factor,
        mu,
        vel,
        f,
        &TauProvider::Spectral(table),
    )?;
    let mut reports = Vec::new();
    for provider in providers {
        let start = std::time::Instant::now();
        let mut sys = assemble(mesh, mu, vel, f, provider)?;
        apply_dirichlet(&mut sys, mesh, &[])?;
        let u = solve(&sys)?;
        let runtime_s = start.elapsed().as_secs_f64();
        reports.push(BenchReport {
            benchmark: benchmark.to_string(),
            n,
            tau_kind: provider.label().to_string(),
            pe_max: stats.pe_max,
            pe1_range: (stats.pe1_min, stats.pe1_max),
            pe2_range: (stats.pe2_min, stats.pe2_max),
            l2: l2_error(mesh, &u, &reference),
            linf: linf_error(&u, &reference),
            runtime_s,
        });
    }
    Ok(reports)
}

pub const CONSTANT_SPEED: f64 = 1131.3708498984762; // 800 sqrt(2)

/// Constant-velocity sweep on the unit square: `a = 800 sqrt(2) (cos a, sin a)`
/// with `alpha = n_dir pi / 10`, `mu = 1`, `f = sin(pi x) cos(pi y)`,
/// spectral/gen1d/codina coefficients against an 8x spectral reference.
pub fn bench_constant(
    dirs: &[u32],
    n: usize,
    table: &StabTable,
    ref_factor: usize,
) -> Result<Vec<BenchReport>, BenchError> {
    let mu = 1.0;
    let mesh = build_structured_mesh(1.0, 1.0, n, n)?;
    let pi = std::f64::consts::PI;
    let f = move |x: f64, y: f64| (pi * x).sin() * (pi * y).cos();
    let mut reports = Vec::new();
    for &n_dir in dirs {
        let alpha = n_dir as f64 * pi / 10.0;
        let vel = VelocityField::constant_from_angle(CONSTANT_SPEED, alpha);
        let providers = [
            TauProvider::Spectral(table),
            TauProvider::Gen1d,
            TauProvider::Codina,
        ];
        let mut batch = run_providers(
            "constant", &mesh, n, mu, &vel, &f, &providers, table, ref_factor,
        )?;
        for (i, r) in batch.iter_mut().enumerate() {
            r.benchmark = format!("constant-n{n_dir}");
            let _ = i;
        }
        reports.extend(batch);
    }
    Ok(reports)
}

/// Rotational-velocity benchmark on `[0,1] x [0,1/2]` with `N x N` cells,
/// `mu = 1e-3`, `f = 1`; spectral and Codina coefficients.
pub fn bench_rotational(
    n: usize,
    table: &StabTable,
    ref_factor: usize,
) -> Result<Vec<BenchReport>, BenchError> {
    let mesh = rotational_mesh(n)?;
    let vel = VelocityField::Rotational;
    let providers = [TauProvider::Spectral(table), TauProvider::Codina];
    run_providers(
        "rotational",
        &mesh,
        n,
        1e-3,
        &vel,
        &|_, _| 1.0,
        &providers,
        table,
        ref_factor,
    )
}

/// The rotational benchmark mesh: `N x N` cells over `[0,1] x [0,1/2]`.
pub fn rotational_mesh(n: usize) -> Result<Mesh, GeometryError> {
    build_structured_mesh_rect(1.0, 0.5, n + 1, n + 1)
}

/// External-velocity benchmark: imported mesh plus per-node velocity
/// samples, `f` constant; spectral and Codina against a red-refined
/// spectral reference.
pub fn bench_external(
    mesh: &Mesh,
    samples: Vec<[f64; 2]>,
    mu: f64,
    f_const: f64,
    table: &StabTable,
    ref_factor: usize,
) -> Result<Vec<BenchReport>, BenchError> {
    if samples.len() != mesh.num_nodes() {
        return Err(BenchError::VelocityMismatch {
            expected: mesh.num_nodes(),
            got: samples.len(),
        });
    }
    let vel = VelocityField::NodalSamples(samples);
    let providers = [TauProvider::Spectral(table), TauProvider::Codina];
    run_providers(
        "external",
        mesh,
        mesh.num_nodes(),
        mu,
        &vel,
        &move |_, _| f_const,
        &providers,
        table,
        ref_factor,
    )
}

/// File-based wrapper around [`bench_external`].
pub fn bench_external_files<P: AsRef<Path>, Q: AsRef<Path>>(
    mesh_path: P,
    velocity_path: Q,
    mu: f64,
    f_const: f64,
    table: &StabTable,
    ref_factor: usize,
) -> Result<Vec<BenchReport>, BenchError> {
    let mesh = crate::geometry::import_mesh(std::io::BufReader::new(std::fs::File::open(
        mesh_path,
    )?))?;
    let samples = read_velocity_file(std::io::BufReader::new(std::fs::File::open(
        velocity_path,
    )?))?;
    bench_external(&mesh, samples, mu, f_const, table, ref_factor)
}

/// Reads `velocity <n>` followed by `n` lines `ax ay`.
pub fn read_velocity_file<R: BufRead>(reader: R) -> Result<Vec<[f64; 2]>, BenchError> {
    let mut tokens = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        for tok in line?.split_whitespace() {
            tokens.push((ln + 1, tok.to_string()));
        }
    }
    let mut it = tokens.into_iter();
    match it.next() {
        Some((_, ref kw)) if kw == "velocity" => {}
        other => {
            return Err(BenchError::VelocityFormat(format!(
                "expected header 'velocity <n>', found {:?}",
                other.map(|(_, t)| t)
            )))
        }
    }
    let n: usize = match it.next() {
        Some((ln, tok)) => tok.parse().map_err(|_| {
            BenchError::VelocityFormat(format!("bad sample count '{tok}' (line {ln})"))
        })?,
        None => return Err(BenchError::VelocityFormat("missing sample count".into())),
    };
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut comp = [0.0f64; 2];
        for c in &mut comp {
            let (ln, tok) = it
                .next()
                .ok_or_else(|| BenchError::VelocityFormat("file ends early".into()))?;
            *c = tok.parse().map_err(|_| {
                BenchError::VelocityFormat(format!("bad velocity component '{tok}' (line {ln})"))
            })?;
        }
        samples.push(comp);
    }
    if it.next().is_some() {
        return Err(BenchError::VelocityFormat("trailing data".into()));
    }
    Ok(samples)
}

pub fn write_velocity_file<W: Write>(samples: &[[f64; 2]], mut w: W) -> Result<(), BenchError> {
    writeln!(w, "velocity {}", samples.len())?;
    for s in samples {
        writeln!(w, "{} {}", s[0], s[1])?;
    }
    Ok(())
}

/// Analytic stand-in for the cylinder test: a channel `[0,4] x [0,2]` with a
/// circular hole of radius 0.25 at (1,1), meshed by rays between the circle
/// and the outer rectangle, with potential-flow velocity samples at nodes.
pub fn cylinder_fixture(n_theta: usize, n_layers: usize) -> (Mesh, Vec<[f64; 2]>) {
    assert!(n_theta >= 8 && n_layers >= 2);
    let (cx, cy, radius) = (1.0, 1.0, 0.25);
    let (lx, ly) = (4.0, 2.0);
    // distance from the center to the rectangle boundary along direction t
    let wall = |t: f64| -> f64 {
        let (dx, dy) = (t.cos(), t.sin());
        let mut best = f64::INFINITY;
        if dx > 1e-14 {
            best = best.min((lx - cx) / dx);
        }
        if dx < -1e-14 {
            best = best.min(-cx / dx);
        }
        if dy > 1e-14 {
            best = best.min((ly - cy) / dy);
        }
        if dy < -1e-14 {
            best = best.min(-cy / dy);
        }
        best
    };
    let mut node_coords = Vec::with_capacity(n_theta * (n_layers + 1));
    let mut boundary = Vec::with_capacity(n_theta * (n_layers + 1));
    for j in 0..=n_layers {
        // graded layers: finer near the cylinder
        let s = (j as f64 / n_layers as f64).powf(1.4);
        for k in 0..n_theta {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n_theta as f64;
            let r = radius + s * (wall(t) - radius);
            node_coords.push([cx + r * t.cos(), cy + r * t.sin()]);
            boundary.push(j == 0 || j == n_layers);
        }
    }
    let node = |j: usize, k: usize| j * n_theta + (k % n_theta);
    let mut elements = Vec::with_capacity(2 * n_theta * n_layers);
    for j in 0..n_layers {
        for k in 0..n_theta {
            let (p00, p10) = (node(j, k), node(j, k + 1));
            let (p01, p11) = (node(j + 1, k), node(j + 1, k + 1));
            // with theta increasing counterclockwise, the outward-pointing
            // quad diagonal order below keeps both triangles CCW
            elements.push([p00, p11, p10]);
            elements.push([p00, p01, p11]);
        }
    }
    let orientations = vec![crate::geometry::Orientation::General; elements.len()];
    let mesh = Mesh {
        node_coords,
        elements,
        boundary_node_flags: boundary,
        orientations,
        structured_info: None,
    };
    let samples = mesh
        .node_coords
        .iter()
        .map(|c| {
            let (x, y) = (c[0] - cx, c[1] - cy);
            let r2 = x * x + y * y;
            let r4 = r2 * r2;
            // potential flow past a cylinder, unit far-field speed
            [
                1.0 - radius * radius * (x * x - y * y) / r4,
                -2.0 * radius * radius * x * y / r4,
            ]
        })
        .collect();
    (mesh, samples)
}
