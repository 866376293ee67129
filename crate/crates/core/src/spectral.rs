//! Explicit eigen-pairs of the Laplace and advection-diffusion operators on
//! square and right-isosceles-triangle elements, plus the composite triangle
//! quadrature used to verify their properties.
//!
//! Everything here is a pure function of its inputs.

use crate::geometry::Orientation;
use thiserror::Error;

pub const PI: f64 = std::f64::consts::PI;

/// Eigenmode index pair, both components starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeIndex {
    pub j: u32,
    pub s: u32,
}

impl ModeIndex {
    pub fn new(j: u32, s: u32) -> Self {
        assert!(j >= 1 && s >= 1, "mode indices start at 1");
        Self { j, s }
    }
}

/// Element-constant advection data: velocity, diffusivity and side size.
#[derive(Debug, Clone, Copy)]
pub struct LocalAdvection {
    pub a1: f64,
    pub a2: f64,
    pub mu: f64,
    pub h: f64,
}

impl LocalAdvection {
    pub fn new(a1: f64, a2: f64, mu: f64, h: f64) -> Self {
        assert!(mu > 0.0, "diffusivity must be positive");
        assert!(h > 0.0, "element size must be positive");
        Self { a1, a2, mu, h }
    }

    pub fn speed(&self) -> f64 {
        self.a1.hypot(self.a2)
    }

    /// Directional grid Peclet numbers `(h a1 / 2mu, h a2 / 2mu)`.
    pub fn peclets(&self) -> (f64, f64) {
        (
            self.h * self.a1 / (2.0 * self.mu),
            self.h * self.a2 / (2.0 * self.mu),
        )
    }
}

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("spectral eigen-pairs are only defined on structured A/B triangles")]
    UnsupportedElement,
}

/// `sin(k pi t)` evaluated through the reduction
/// `sin(k pi (1-t)) = (-1)^(k+1) sin(k pi t)`; used so that complementary
/// arguments produce exactly opposite/equal values instead of nearly so.
#[inline]
fn sin_k_pi(k: u32, t: f64) -> f64 {
    (k as f64 * PI * t).sin()
}

/// Laplace eigenfunction on a square element of side `h`, evaluated at a
/// point in local coordinates `[-h,0]^2` relative to the upper-right node.
pub fn w_square(m: ModeIndex, h: f64, local: [f64; 2]) -> f64 {
    let (x, y) = (local[0], local[1]);
    (m.j as f64 * PI / h * x).sin() * (m.s as f64 * PI / h * y).sin()
}

/// Laplace eigenvalue on a square element: `(j pi / h)^2 + (s pi / h)^2`.
pub fn sigma_square(m: ModeIndex, h: f64) -> f64 {
    let sj = m.j as f64 * PI / h;
    let ss = m.s as f64 * PI / h;
    sj * sj + ss * ss
}

/// Parity sign `(-1)^(j+s)`.
#[inline]
pub fn mode_parity(m: ModeIndex) -> f64 {
    if (m.j + m.s) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Laplace eigenfunction on the reference triangle
/// `T = {x in (0,1), y in (0,1-x)}`:
/// `sin(j pi x) sin(s pi y) - sin(s pi (1-x)) sin(j pi (1-y))`,
/// evaluated in the argument-reduced form
/// `sin(j pi x) sin(s pi y) - (-1)^(j+s) sin(s pi x) sin(j pi y)`.
pub fn w_triangle_ref(m: ModeIndex, p: [f64; 2]) -> f64 {
    let (x, y) = (p[0], p[1]);
    sin_k_pi(m.j, x) * sin_k_pi(m.s, y) - mode_parity(m) * sin_k_pi(m.s, x) * sin_k_pi(m.j, y)
}

/// Advection-diffusion eigenvalue
/// `mu (|a|^2 / 4 mu^2 + (j pi / h)^2 + (s pi / h)^2)`; the same formula
/// serves square and triangle elements.
pub fn lambda_ad(m: ModeIndex, la: &LocalAdvection) -> f64 {
    let speed = la.speed();
    la.mu * (speed * speed / (4.0 * la.mu * la.mu) + sigma_square(m, la.h))
}

/// Reference coordinates of a physical point inside a structured A or B
/// triangle with vertex set `coords`. Returns the pair the matching affine
/// map `G_A`/`G_B` produces.
pub fn to_reference(
    coords: &[[f64; 2]; 3],
    orientation: Orientation,
    h: f64,
    p: [f64; 2],
) -> Result<[f64; 2], SpectralError> {
    let x0 = coords.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
    let y0 = coords.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
    match orientation {
        Orientation::A => Ok([(p[0] - x0) / h, (p[1] - y0) / h]),
        Orientation::B => Ok([(x0 + h - p[0]) / h, (y0 + h - p[1]) / h]),
        Orientation::General => Err(SpectralError::UnsupportedElement),
    }
}

/// Advection-diffusion eigenfunction on a structured A/B triangle, evaluated
/// at physical point `p`:
/// `exp(Pe1 xa + Pe2 ya) * W(G(p))`, where `(xa, ya)` are the `G_A`
/// coordinates of `p` (for both element kinds) and `G` is the element's own
/// affine map. The exponential equals `exp(a . (p - cell origin) / 2 mu)`.
pub fn eigenfunction_physical(
    coords: &[[f64; 2]; 3],
    orientation: Orientation,
    m: ModeIndex,
    la: &LocalAdvection,
    p: [f64; 2],
) -> Result<f64, SpectralError> {
    if orientation == Orientation::General {
        return Err(SpectralError::UnsupportedElement);
    }
    let x0 = coords.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
    let y0 = coords.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
    let (pe1, pe2) = la.peclets();
    let xa = (p[0] - x0) / la.h;
    let ya = (p[1] - y0) / la.h;
    let expo = (pe1 * xa + pe2 * ya).exp();
    let pref = to_reference(coords, orientation, la.h, p)?;
    Ok(expo * w_triangle_ref(m, pref))
}

/// Orthogonality weight `p_K = psi^-2 = exp(-(a . x)/mu)`, with `x` the
/// element-local offset matching the eigenfunction exponential.
pub fn weight_p(la: &LocalAdvection, p_local: [f64; 2]) -> f64 {
    (-(la.a1 * p_local[0] + la.a2 * p_local[1]) / la.mu).exp()
}

// 7-point degree-5 rule on a triangle, barycentric coordinates and weights
// normalized to sum 1.
const QUAD7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059715871789769820;
    const B1: f64 = 0.470142064105115090;
    const W1: f64 = 0.132394152788506180;
    const A2: f64 = 0.797426985353087320;
    const B2: f64 = 0.101286507323456340;
    const W2: f64 = 0.125939180544827150;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Applies the 7-point rule on the triangle with the given vertices.
pub fn quad7_triangle<F: FnMut(f64, f64) -> f64>(v: &[[f64; 2]; 3], f: &mut F) -> f64 {
    let area = crate::geometry::Mesh::signed_area(v).abs();
    let mut acc = 0.0;
    for (bc, w) in QUAD7 {
        let x = bc[0] * v[0][0] + bc[1] * v[1][0] + bc[2] * v[2][0];
        let y = bc[0] * v[0][1] + bc[1] * v[1][1] + bc[2] * v[2][1];
        acc += w * f(x, y);
    }
    acc * area
}

/// Composite rule over the reference triangle: uniform refinement into `k^2`
/// congruent sub-triangles, 7-point rule on each.
pub fn integrate_ref_composite<F: FnMut(f64, f64) -> f64>(mut f: F, k: usize) -> f64 {
    let kf = k as f64;
    let mut acc = 0.0;
    for q in 0..k {
        for p in 0..k - q {
            let (x, y) = (p as f64 / kf, q as f64 / kf);
            let d = 1.0 / kf;
            let up = [[x, y], [x + d, y], [x, y + d]];
            acc += quad7_triangle(&up, &mut f);
            if p + q < k - 1 {
                let down = [[x + d, y], [x + d, y + d], [x, y + d]];
                acc += quad7_triangle(&down, &mut f);
            }
        }
    }
    acc
}

/// Refinement cap for the adaptive composite rule.
pub const QUAD_MAX_K: usize = 512;

/// Doubles the composite refinement until the relative change drops below
/// `1e-10` (capped at `k = 512`). Returns the value and the final `k`.
pub fn integrate_ref_adaptive<F: FnMut(f64, f64) -> f64>(mut f: F) -> (f64, usize) {
    let mut k = 1usize;
    let mut prev = integrate_ref_composite(&mut f, k);
    loop {
        let next_k = k * 2;
        if next_k > QUAD_MAX_K {
            return (prev, k);
        }
        let next = integrate_ref_composite(&mut f, next_k);
        let scale = next.abs().max(1e-300);
        if (next - prev).abs() <= 1e-10 * scale {
            return (next, next_k);
        }
        prev = next;
        k = next_k;
    }
}
