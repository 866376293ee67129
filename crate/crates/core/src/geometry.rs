//! Triangular meshes: structured right-isosceles grids and imported irregular
//! meshes, plus per-element geometric queries.

use std::io::{BufRead, Write};

use thiserror::Error;

/// How an element relates to the structured-grid cell it came from.
///
/// `A` is the triangle below the cell anti-diagonal, `B` the one above it.
/// Imported meshes carry `General` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    A,
    B,
    General,
}

/// Extra data available when a mesh came from the structured generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredInfo {
    /// Nodes along x.
    pub n1: usize,
    /// Nodes along y.
    pub n2: usize,
    /// Element side size used in Peclet and tau formulas.
    pub h: f64,
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("grid must have at least 2 nodes per direction (got {0}x{1})")]
    TooFewNodes(usize, usize),
    #[error("domain lengths must be positive")]
    NonPositiveLength,
    #[error("non-square cells: hx={hx} differs from hy={hy}; the eigen-pair formulas assume isosceles right triangles")]
    NonSquareCells { hx: f64, hy: f64 },
    #[error("parse error (line {line}): {msg}")]
    Parse { line: usize, msg: String },
    #[error("node index out of range (line {line})")]
    NodeIndexOutOfRange { line: usize },
    #[error("element with zero or negative area (line {line})")]
    DegenerateElement { line: usize },
    #[error("element index {0} out of range ({1} elements)")]
    ElementIndexOutOfRange(usize, usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// An immutable triangle mesh. Nodes are 2D points, elements are CCW node
/// triples, and every node carries a boundary flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub node_coords: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub boundary_node_flags: Vec<bool>,
    pub orientations: Vec<Orientation>,
    pub structured_info: Option<StructuredInfo>,
}

/// Geometric summary of one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementMetrics {
    pub barycenter: [f64; 2],
    pub area: f64,
    /// Side size: the stored grid side for structured elements,
    /// `sqrt(2*area)` for general ones.
    pub h_k: f64,
    pub orientation: Orientation,
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Vertex coordinates of element `e`.
    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 3] {
        let [i, j, k] = self.elements[e];
        [self.node_coords[i], self.node_coords[j], self.node_coords[k]]
    }

    /// Signed area of the triangle `(p0, p1, p2)`; positive for CCW ordering.
    pub fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
        0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
    }
}

/// Builds a uniform mesh of right isosceles triangles over `[0,L1]x[0,L2]`
/// with `n1 x n2` nodes. Each grid cell is split along its anti-diagonal into
/// one `A` (below) and one `B` (above) triangle. Cells must be square.
pub fn build_structured_mesh(
    l1: f64,
    l2: f64,
    n1: usize,
    n2: usize,
) -> Result<Mesh, GeometryError> {
    if n1 < 2 || n2 < 2 {
        return Err(GeometryError::TooFewNodes(n1, n2));
    }
    if l1 <= 0.0 || l2 <= 0.0 {
        return Err(GeometryError::NonPositiveLength);
    }
    let hx = l1 / (n1 - 1) as f64;
    let hy = l2 / (n2 - 1) as f64;
    if (hx - hy).abs() > 1e-12 * hx {
        return Err(GeometryError::NonSquareCells { hx, hy });
    }
    Ok(build_grid(l1, l2, n1, n2, hx))
}

/// Structured grid over `[0,L1]x[0,L2]` with possibly rectangular cells.
/// The stored `h` is the smaller cell side, which is the convention the
/// rotational benchmark reproduces. Only benchmark code should need this;
/// the spectral formulas assume square cells.
pub(crate) fn build_structured_mesh_rect(
    l1: f64,
    l2: f64,
    n1: usize,
    n2: usize,
) -> Result<Mesh, GeometryError> {
    if n1 < 2 || n2 < 2 {
        return Err(GeometryError::TooFewNodes(n1, n2));
    }
    if l1 <= 0.0 || l2 <= 0.0 {
        return Err(GeometryError::NonPositiveLength);
    }
    let hx = l1 / (n1 - 1) as f64;
    let hy = l2 / (n2 - 1) as f64;
    Ok(build_grid(l1, l2, n1, n2, hx.min(hy)))
}

fn build_grid(l1: f64, l2: f64, n1: usize, n2: usize, h: f64) -> Mesh {
    let hx = l1 / (n1 - 1) as f64;
    let hy = l2 / (n2 - 1) as f64;
    let mut node_coords = Vec::with_capacity(n1 * n2);
    let mut boundary = Vec::with_capacity(n1 * n2);
    for j in 0..n2 {
        for i in 0..n1 {
            let x = if i == n1 - 1 { l1 } else { i as f64 * hx };
            let y = if j == n2 - 1 { l2 } else { j as f64 * hy };
            node_coords.push([x, y]);
            boundary.push(i == 0 || i == n1 - 1 || j == 0 || j == n2 - 1);
        }
    }
    let ncells = (n1 - 1) * (n2 - 1);
    let mut elements = Vec::with_capacity(2 * ncells);
    let mut orientations = Vec::with_capacity(2 * ncells);
    let node = |i: usize, j: usize| j * n1 + i;
    for j in 0..n2 - 1 {
        for i in 0..n1 - 1 {
            // anti-diagonal split: A below, B above
            elements.push([node(i, j), node(i + 1, j), node(i, j + 1)]);
            orientations.push(Orientation::A);
            elements.push([node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
            orientations.push(Orientation::B);
        }
    }
    Mesh {
        node_coords,
        elements,
        boundary_node_flags: boundary,
        orientations,
        structured_info: Some(StructuredInfo { n1, n2, h }),
    }
}

/// Geometric summary of element `e`.
pub fn element_metrics(mesh: &Mesh, e: usize) -> Result<ElementMetrics, GeometryError> {
    if e >= mesh.num_elements() {
        return Err(GeometryError::ElementIndexOutOfRange(e, mesh.num_elements()));
    }
    let p = mesh.element_coords(e);
    let area = Mesh::signed_area(&p);
    let barycenter = [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
    ];
    let orientation = mesh.orientations[e];
    let h_k = match (&mesh.structured_info, orientation) {
        (Some(info), Orientation::A | Orientation::B) => info.h,
        _ => (2.0 * area).sqrt(),
    };
    Ok(ElementMetrics {
        barycenter,
        area,
        h_k,
        orientation,
    })
}

/// Parses a mesh from the plain-text format:
/// `nodes <n>`, then n lines `x y b`, then `elements <m>`, then m lines
/// `i j k` with 0-based CCW node indices.
pub fn import_mesh<R: BufRead>(reader: R) -> Result<Mesh, GeometryError> {
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        for tok in line.split_whitespace() {
            tokens.push((lineno + 1, tok.to_string()));
        }
    }
    let mut pos = 0usize;
    let mut next = |what: &str| -> Result<(usize, String), GeometryError> {
        if pos >= tokens.len() {
            let line = tokens.last().map(|t| t.0).unwrap_or(0);
            return Err(GeometryError::Parse {
                line,
                msg: format!("unexpected end of input, expected {what}"),
            });
        }
        let t = tokens[pos].clone();
        pos += 1;
        Ok(t)
    };

    let (line, kw) = next("'nodes'")?;
    if kw != "nodes" {
        return Err(GeometryError::Parse {
            line,
            msg: format!("expected 'nodes', got '{kw}'"),
        });
    }
    let (line, n_str) = next("node count")?;
    let n: usize = n_str.parse().map_err(|_| GeometryError::Parse {
        line,
        msg: format!("bad node count '{n_str}'"),
    })?;
    let mut node_coords = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, xs) = next("node x")?;
        let x: f64 = xs.parse().map_err(|_| GeometryError::Parse {
            line,
            msg: format!("bad coordinate '{xs}'"),
        })?;
        let (line, ys) = next("node y")?;
        let y: f64 = ys.parse().map_err(|_| GeometryError::Parse {
            line,
            msg: format!("bad coordinate '{ys}'"),
        })?;
        let (line, bs) = next("boundary flag")?;
        let b: u8 = bs.parse().map_err(|_| GeometryError::Parse {
            line,
            msg: format!("bad boundary flag '{bs}'"),
        })?;
        if b > 1 {
            return Err(GeometryError::Parse {
                line,
                msg: format!("boundary flag must be 0 or 1, got {b}"),
            });
        }
        node_coords.push([x, y]);
        boundary.push(b == 1);
    }
    let (line, kw) = next("'elements'")?;
    if kw != "elements" {
        return Err(GeometryError::Parse {
            line,
            msg: format!("expected 'elements', got '{kw}'"),
        });
    }
    let (line, m_str) = next("element count")?;
    let m: usize = m_str.parse().map_err(|_| GeometryError::Parse {
        line,
        msg: format!("bad element count '{m_str}'"),
    })?;
    let mut elements = Vec::with_capacity(m);
    for _ in 0..m {
        let mut idx = [0usize; 3];
        let mut last_line = 0;
        for slot in idx.iter_mut() {
            let (line, s) = next("node index")?;
            last_line = line;
            *slot = s.parse().map_err(|_| GeometryError::Parse {
                line,
                msg: format!("bad node index '{s}'"),
            })?;
            if *slot >= n {
                return Err(GeometryError::NodeIndexOutOfRange { line });
            }
        }
        let p = [node_coords[idx[0]], node_coords[idx[1]], node_coords[idx[2]]];
        if Mesh::signed_area(&p) <= 0.0 {
            return Err(GeometryError::DegenerateElement { line: last_line });
        }
        elements.push(idx);
    }
    let orientations = vec![Orientation::General; elements.len()];
    Ok(Mesh {
        node_coords,
        elements,
        boundary_node_flags: boundary,
        orientations,
        structured_info: None,
    })
}

/// Writes the mesh in the same text format `import_mesh` reads.
/// Coordinates use the shortest round-trip decimal form, so an
/// export/import cycle is bit-exact.
pub fn export_mesh<W: Write>(mesh: &Mesh, mut w: W) -> Result<(), GeometryError> {
    writeln!(w, "nodes {}", mesh.num_nodes())?;
    for (p, &b) in mesh.node_coords.iter().zip(&mesh.boundary_node_flags) {
        writeln!(w, "{} {} {}", p[0], p[1], u8::from(b))?;
    }
    writeln!(w, "elements {}", mesh.num_elements())?;
    for e in &mesh.elements {
        writeln!(w, "{} {} {}", e[0], e[1], e[2])?;
    }
    Ok(())
}

/// Uniform red refinement: every triangle splits into 4 via edge midpoints.
/// Coarse nodes keep their indices; new nodes are appended, and
/// `midpoint_of[k]` records the coarse edge that produced node
/// `coarse_count + k`. Midpoints of boundary edges (edges owned by a single
/// element whose endpoints are both boundary nodes) are flagged boundary.
pub fn refine_uniform(mesh: &Mesh) -> (Mesh, Vec<(usize, usize)>) {
    use std::collections::HashMap;
    let nc = mesh.num_nodes();
    let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint_of: Vec<(usize, usize)> = Vec::new();
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();

    let mut node_coords = mesh.node_coords.clone();
    let mut edge_node = |a: usize, b: usize, coords: &mut Vec<[f64; 2]>| -> usize {
        let key = (a.min(b), a.max(b));
        *edge_ids.entry(key).or_insert_with(|| {
            let id = coords.len();
            coords.push([
                0.5 * (mesh.node_coords[a][0] + mesh.node_coords[b][0]),
                0.5 * (mesh.node_coords[a][1] + mesh.node_coords[b][1]),
            ]);
            midpoint_of.push(key);
            id
        })
    };

    let mut elements = Vec::with_capacity(4 * mesh.num_elements());
    for &[i, j, k] in &mesh.elements {
        for &(a, b) in &[(i, j), (j, k), (k, i)] {
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
        let ij = edge_node(i, j, &mut node_coords);
        let jk = edge_node(j, k, &mut node_coords);
        let ki = edge_node(k, i, &mut node_coords);
        elements.push([i, ij, ki]);
        elements.push([ij, j, jk]);
        elements.push([ki, jk, k]);
        elements.push([ij, jk, ki]);
    }

    let mut boundary = mesh.boundary_node_flags.clone();
    boundary.resize(node_coords.len(), false);
    for (edge, &id) in &edge_ids {
        let on_boundary = edge_count.get(edge).copied().unwrap_or(0) == 1
            && mesh.boundary_node_flags[edge.0]
            && mesh.boundary_node_flags[edge.1];
        boundary[id] = on_boundary;
    }
    // midpoint_of is keyed by insertion order of new nodes
    let mut ordered = vec![(0usize, 0usize); node_coords.len() - nc];
    for (edge, &id) in &edge_ids {
        ordered[id - nc] = *edge;
    }
    let refined = Mesh {
        orientations: vec![Orientation::General; elements.len()],
        node_coords,
        elements,
        boundary_node_flags: boundary,
        structured_info: None,
    };
    (refined, ordered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashMap;
    use std::io::Cursor;

    #[test]
    fn structured_counts_3x3() {
        let m = build_structured_mesh(1.0, 1.0, 3, 3).unwrap();
        assert_eq!(m.num_nodes(), 9);
        assert_eq!(m.num_elements(), 8);
        let nb = m.boundary_node_flags.iter().filter(|&&b| b).count();
        assert_eq!(nb, 8);
        assert_eq!(m.num_nodes() - nb, 1);
    }

    #[test]
    fn structured_counts_81x81() {
        let m = build_structured_mesh(1.0, 1.0, 81, 81).unwrap();
        assert_eq!(m.num_nodes(), 6561);
        assert_eq!(m.num_elements(), 12800);
        assert_relative_eq!(m.structured_info.unwrap().h, 1.0 / 80.0);
    }

    #[test]
    fn structured_counts_rectangle() {
        let m = build_structured_mesh(1.0, 0.5, 101, 51).unwrap();
        assert_eq!(m.num_elements(), 2 * 100 * 50);
        assert_relative_eq!(m.structured_info.unwrap().h, 0.01);
    }

    #[test]
    fn non_square_cells_rejected() {
        let err = build_structured_mesh(1.0, 0.5, 3, 3).unwrap_err();
        assert!(matches!(err, GeometryError::NonSquareCells { .. }));
    }

    #[test]
    fn area_sums_to_domain_area() {
        let m = build_structured_mesh(1.0, 1.0, 17, 17).unwrap();
        let total: f64 = (0..m.num_elements())
            .map(|e| element_metrics(&m, e).unwrap().area)
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn boundary_flags_lie_on_boundary() {
        let m = build_structured_mesh(1.0, 1.0, 9, 9).unwrap();
        for (p, &b) in m.node_coords.iter().zip(&m.boundary_node_flags) {
            let on = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            assert_eq!(b, on, "node {p:?}");
        }
    }

    #[test]
    fn interior_edges_shared_by_two_elements() {
        let m = build_structured_mesh(1.0, 1.0, 7, 7).unwrap();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for &[i, j, k] in &m.elements {
            for &(a, b) in &[(i, j), (j, k), (k, i)] {
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&(a, b), &c) in &count {
            let boundary_edge = c == 1;
            assert!(c == 1 || c == 2);
            if boundary_edge {
                assert!(m.boundary_node_flags[a] && m.boundary_node_flags[b]);
            }
        }
    }

    #[test]
    fn metrics_reference_triangle() {
        let txt = "nodes 3\n0 0 1\n1 0 1\n0 1 1\nelements 1\n0 1 2\n";
        let m = import_mesh(Cursor::new(txt)).unwrap();
        assert_eq!(m.num_elements(), 1);
        let em = element_metrics(&m, 0).unwrap();
        assert_relative_eq!(em.area, 0.5);
        assert_relative_eq!(em.h_k, 1.0);
        assert_relative_eq!(em.barycenter[0], 1.0 / 3.0);
        assert_relative_eq!(em.barycenter[1], 1.0 / 3.0);
    }

    #[test]
    fn metrics_structured_h() {
        let m = build_structured_mesh(1.0, 1.0, 81, 81).unwrap();
        let em = element_metrics(&m, 0).unwrap();
        assert_relative_eq!(em.area, 1.0 / 12800.0, max_relative = 1e-14);
        assert_eq!(em.h_k, m.structured_info.unwrap().h);
        assert_relative_eq!(em.h_k * em.h_k, 2.0 * em.area, max_relative = 1e-12);
    }

    #[test]
    fn metrics_irregular_h() {
        let txt = "nodes 3\n0 0 1\n2 0 1\n0 1 1\nelements 1\n0 1 2\n";
        let m = import_mesh(Cursor::new(txt)).unwrap();
        let em = element_metrics(&m, 0).unwrap();
        assert_relative_eq!(em.area, 1.0);
        assert_relative_eq!(em.h_k, 2f64.sqrt());
    }

    #[test]
    fn import_rejects_bad_index() {
        let txt = "nodes 4\n0 0 1\n1 0 1\n1 1 1\n0 1 1\nelements 1\n0 1 99\n";
        let err = import_mesh(Cursor::new(txt)).unwrap_err();
        assert!(matches!(err, GeometryError::NodeIndexOutOfRange { line: 7 }));
        assert!(err.to_string().contains("line 7"));
    }

    #[test]
    fn import_rejects_degenerate() {
        let txt = "nodes 3\n0 0 1\n1 0 1\n2 0 1\nelements 1\n0 1 2\n";
        let err = import_mesh(Cursor::new(txt)).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateElement { .. }));
    }

    #[test]
    fn export_import_round_trip() {
        let m = build_structured_mesh(1.0, 1.0, 5, 5).unwrap();
        let mut buf = Vec::new();
        export_mesh(&m, &mut buf).unwrap();
        let m2 = import_mesh(Cursor::new(&buf)).unwrap();
        assert_eq!(m.node_coords, m2.node_coords);
        assert_eq!(m.elements, m2.elements);
        assert_eq!(m.boundary_node_flags, m2.boundary_node_flags);
        // a second export is byte-identical
        let mut buf2 = Vec::new();
        export_mesh(&m2, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn red_refinement_nests_coarse_nodes() {
        let m = build_structured_mesh(1.0, 1.0, 4, 4).unwrap();
        let (fine, midpoints) = refine_uniform(&m);
        assert_eq!(fine.num_elements(), 4 * m.num_elements());
        for (i, p) in m.node_coords.iter().enumerate() {
            assert_eq!(fine.node_coords[i], *p);
        }
        assert_eq!(fine.num_nodes(), m.num_nodes() + midpoints.len());
        let total: f64 = (0..fine.num_elements())
            .map(|e| element_metrics(&fine, e).unwrap().area)
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        // boundary midpoints only on the outer square
        for (k, &(a, b)) in midpoints.iter().enumerate() {
            let p = fine.node_coords[m.num_nodes() + k];
            if fine.boundary_node_flags[m.num_nodes() + k] {
                let on = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
                assert!(on, "midpoint of ({a},{b}) flagged but off-boundary");
            }
        }
    }
}
