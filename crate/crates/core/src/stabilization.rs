//! Stabilization coefficients: the spectral `tau = 8 h^2 psi / mu` built from
//! weighted eigenfunction integrals over the reference triangle, the
//! generalized 1D optimum, Codina's coefficient, and the Fig.-style
//! comparison curves.
//!
//! The triangle integrals have a closed form. With
//! `J(P1, P2; j, s) = int_T exp(P1 x + P2 y) W_js`, the shifted integrals of
//! the series are `I- = exp(P1 + P2) J(-P1, -P2)` and
//! `I+ = exp(-(P1 + P2)) J(P1, P2)`, so their product is shift-free:
//! `I- I+ = J(P1, P2) J(-P1, -P2)`. The closed form is what makes dense
//! tabulation affordable; the composite quadrature of the spectral module
//! serves as the independent cross-check in the tests.

use crate::spectral::{self, ModeIndex, PI};
use std::io::Write;
use thiserror::Error;

/// Signed directional grid Peclet numbers of an element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PecletPair {
    pub pe1: f64,
    pub pe2: f64,
}

impl PecletPair {
    pub fn new(pe1: f64, pe2: f64) -> Self {
        assert!(pe1.is_finite() && pe2.is_finite());
        Self { pe1, pe2 }
    }

    /// `Pe^2 = Pe1^2 + Pe2^2`.
    pub fn norm_sq(&self) -> f64 {
        self.pe1 * self.pe1 + self.pe2 * self.pe2
    }

    pub fn norm(&self) -> f64 {
        self.pe1.hypot(self.pe2)
    }
}

/// Series truncation bounds `(M1, M2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub m1: u32,
    pub m2: u32,
}

impl Truncation {
    pub fn new(m1: u32, m2: u32) -> Self {
        assert!(m1 >= 1 && m2 >= 1, "truncation bounds start at 1");
        Self { m1, m2 }
    }

    pub fn square(m: u32) -> Self {
        Self::new(m, m)
    }
}

impl Default for Truncation {
    /// `M1 = M2 = 40`; the series tail is below interpolation error for the
    /// moderate Peclet numbers the tabulation targets.
    fn default() -> Self {
        Self::square(40)
    }
}

/// Largest |Pe| component accepted by the integral evaluations.
pub const PE_GUARD: f64 = 60.0;

#[derive(Debug, Error)]
pub enum StabilizationError {
    #[error("directional Peclet number {pe} exceeds the overflow guard (|Pe| <= {PE_GUARD}); use the product form or rescale")]
    PecletOutOfRange { pe: f64 },
    #[error("Codina coefficient undefined for mu = 0 and |a| = 0")]
    UndefinedCoefficient,
}

fn guard(pe: PecletPair) -> Result<(), StabilizationError> {
    for p in [pe.pe1, pe.pe2] {
        if p.abs() > PE_GUARD {
            return Err(StabilizationError::PecletOutOfRange { pe: p });
        }
    }
    Ok(())
}

/// Modal coefficient `beta_js = h^2 / (mu (Pe^2 + pi^2 (j^2 + s^2)))`,
/// the reciprocal of the advection-diffusion eigenvalue.
pub fn beta(m: ModeIndex, h: f64, mu: f64, pe: f64) -> f64 {
    let js = (m.j * m.j + m.s * m.s) as f64;
    h * h / (mu * (pe * pe + PI * PI * js))
}

/// `int_0^1 exp(c t) sin(k pi t) dt = k pi (1 - (-1)^k e^c) / (c^2 + k^2 pi^2)`.
fn int_exp_sin(c: f64, k: u32) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let kpi = k as f64 * PI;
    let num = if k % 2 == 0 { -c.exp_m1() } else { 1.0 + c.exp() };
    kpi * num / (c * c + kpi * kpi)
}

/// `int_0^1 exp(c t) cos(k pi t) dt = c ((-1)^k e^c - 1) / (c^2 + k^2 pi^2)`.
fn int_exp_cos(c: f64, k: u32) -> f64 {
    if k == 0 {
        // (e^c - 1)/c, continuous through c = 0
        return if c.abs() < 1e-8 {
            1.0 + c / 2.0 + c * c / 6.0
        } else {
            c.exp_m1() / c
        };
    }
    let kpi = k as f64 * PI;
    let num = if k % 2 == 0 { c.exp_m1() } else { -c.exp() - 1.0 };
    c * num / (c * c + kpi * kpi)
}

/// `int_0^1 exp(c t) sin(s pi t) sin(j pi t) dt` via product-to-sum.
fn int_exp_sin_sin(c: f64, j: u32, s: u32) -> f64 {
    let d = j.abs_diff(s);
    (int_exp_cos(c, d) - int_exp_cos(c, j + s)) / 2.0
}

/// `int_0^1 exp(c t) sin(j pi t) cos(s pi t) dt` via product-to-sum.
fn int_exp_sin_cos(c: f64, j: u32, s: u32) -> f64 {
    let d = j.abs_diff(s);
    let sign = if j > s {
        1.0
    } else if j < s {
        -1.0
    } else {
        0.0
    };
    (int_exp_sin(c, j + s) + sign * int_exp_sin(c, d)) / 2.0
}

/// `int_T exp(P1 x + P2 y) sin(j pi x) sin(s pi y) dx dy` over the reference
/// triangle, from integrating the inner `y` integral by closed form.
fn k_term(p1: f64, p2: f64, j: u32, s: u32) -> f64 {
    let spi = s as f64 * PI;
    let c = p1 - p2;
    let sign_s = if s % 2 == 0 { 1.0 } else { -1.0 };
    let iss = int_exp_sin_sin(c, j, s);
    let isc = int_exp_sin_cos(c, j, s);
    let num = -sign_s * p2.exp() * (p2 * iss + spi * isc) + spi * int_exp_sin(p1, j);
    num / (p2 * p2 + spi * spi)
}

/// `J(P1, P2; j, s) = int_T exp(P1 x + P2 y) W_js dx dy`, closed form.
///
/// The reflection `x <-> y` maps the integrand onto itself up to the mode
/// parity, giving the exact identity
/// `J(P1, P2; j, s) = -(-1)^(j+s) J(P2, P1; j, s)`.
/// Arguments are canonicalized through it so that swapped exponent pairs
/// reuse the identical floating-point evaluation (a sign flip is exact),
/// which keeps `psi` bit-symmetric under exchanging the Peclet components.
pub fn integral_j(p1: f64, p2: f64, m: ModeIndex) -> f64 {
    if m.j == m.s {
        return 0.0;
    }
    if p1 < p2 {
        return -spectral::mode_parity(m) * integral_j_raw(p2, p1, m);
    }
    integral_j_raw(p1, p2, m)
}

fn integral_j_raw(p1: f64, p2: f64, m: ModeIndex) -> f64 {
    k_term(p1, p2, m.j, m.s) - spectral::mode_parity(m) * k_term(p1, p2, m.s, m.j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralSign {
    Plus,
    Minus,
}

/// Shifted weighted integral `I^±_js(Pe1, Pe2)`:
/// `int_T exp(±Pe1 (x - 1) ± Pe2 (y - 1)) W_js dx dy`.
pub fn integral_i(
    sign: IntegralSign,
    m: ModeIndex,
    pe: PecletPair,
) -> Result<f64, StabilizationError> {
    guard(pe)?;
    let v = match sign {
        IntegralSign::Plus => (-(pe.pe1 + pe.pe2)).exp() * integral_j(pe.pe1, pe.pe2, m),
        IntegralSign::Minus => (pe.pe1 + pe.pe2).exp() * integral_j(-pe.pe1, -pe.pe2, m),
    };
    Ok(v)
}

/// Shift-free product `I^-_js I^+_js = J(Pe1, Pe2) J(-Pe1, -Pe2)`; the
/// `exp(±(Pe1 + Pe2))` prefactors cancel exactly.
pub fn integral_product(m: ModeIndex, pe: PecletPair) -> f64 {
    if m.j == m.s {
        return 0.0;
    }
    integral_j(pe.pe1, pe.pe2, m) * integral_j(-pe.pe1, -pe.pe2, m)
}

/// Dimensionless double sum
/// `psi = sum_{j<=M1, s<=M2} (pi^2 (j^2 + s^2) + Pe^2)^-1 I^-_js I^+_js`.
/// Diagonal modes contribute exactly zero and are skipped; the summation
/// order is fixed for bit-reproducible results.
pub fn psi(pe: PecletPair, tr: Truncation) -> Result<f64, StabilizationError> {
    guard(pe)?;
    let pe_sq = pe.norm_sq();
    let m_min = tr.m1.min(tr.m2);
    let mut acc = 0.0;
    // Accumulate the transposed index pairs (j, s) and (s, j) together: the
    // two terms have matching magnitudes, which keeps the sum symmetric under
    // swapping the Peclet components to within a few ulps even when the
    // truncated terms are individually large.
    for j in 1..m_min {
        for s in (j + 1)..=m_min {
            let denom = PI * PI * ((j * j + s * s) as f64) + pe_sq;
            let pair = integral_product(ModeIndex::new(j, s), pe)
                + integral_product(ModeIndex::new(s, j), pe);
            acc += pair / denom;
        }
    }
    // Rectangular remainder when the truncation orders differ.
    for j in 1..=tr.m1 {
        for s in (m_min + 1).max(j + 1)..=tr.m2 {
            let denom = PI * PI * ((j * j + s * s) as f64) + pe_sq;
            acc += integral_product(ModeIndex::new(j, s), pe) / denom;
        }
    }
    for s in 1..=tr.m2 {
        for j in (m_min + 1).max(s + 1)..=tr.m1 {
            let denom = PI * PI * ((j * j + s * s) as f64) + pe_sq;
            acc += integral_product(ModeIndex::new(j, s), pe) / denom;
        }
    }
    Ok(acc)
}

/// Spectral stabilization coefficient `tau = 8 h^2 psi(Pe1, Pe2) / mu`.
pub fn tau_spectral(
    h: f64,
    mu: f64,
    pe: PecletPair,
    tr: Truncation,
) -> Result<f64, StabilizationError> {
    assert!(h > 0.0 && mu > 0.0);
    Ok(8.0 * h * h / mu * psi(pe, tr)?)
}

/// Upwind function `phi(P) = P coth(P) - 1`, with the Taylor series
/// `P^2/3 - P^4/45` below `1e-4` where the direct form cancels.
pub fn phi(p: f64) -> f64 {
    let p = p.abs();
    if p < 1e-4 {
        p * p / 3.0 - p * p * p * p / 45.0
    } else {
        p / p.tanh() - 1.0
    }
}

/// Generalized 1D coefficient `tau_G = (mu / |a|^2) phi(h |a| / 2 mu)`, with
/// the analytic limit `h^2 / (12 mu)` at `|a| = 0`.
pub fn tau_gen1d(h: f64, mu: f64, a_norm: f64) -> f64 {
    assert!(h > 0.0 && mu > 0.0 && a_norm >= 0.0);
    if a_norm == 0.0 {
        // phi(P) ~ P^2/3, so (mu/a^2) phi -> h^2 / (12 mu)
        return h * h / (12.0 * mu);
    }
    let pe = h * a_norm / (2.0 * mu);
    mu / (a_norm * a_norm) * phi(pe)
}

/// 1D optimal coefficient; identical formula to [`tau_gen1d`] applied to the
/// scalar velocity.
pub fn tau_1d(h: f64, mu: f64, a: f64) -> f64 {
    tau_gen1d(h, mu, a.abs())
}

/// Codina's coefficient `((4 mu / h^2)^2 + (2 |a| / h)^2)^(-1/2)`.
pub fn tau_codina(h: f64, mu: f64, a_norm: f64) -> Result<f64, StabilizationError> {
    assert!(h > 0.0);
    if mu == 0.0 && a_norm == 0.0 {
        return Err(StabilizationError::UndefinedCoefficient);
    }
    let d = 4.0 * mu / (h * h);
    let a = 2.0 * a_norm / h;
    Ok(1.0 / d.hypot(a))
}

/// One row of the coefficient comparison: `phi(P)/(4P)` against the spectral
/// curves `8 P psi(P, 0)` and `8 P psi(0, P)`.
#[derive(Debug, Clone, Copy)]
pub struct Fig2Row {
    pub p: f64,
    pub phi_over_4p: f64,
    pub curve_pe1: f64,
    pub curve_pe2: f64,
}

pub fn fig2_curves(p_grid: &[f64], tr: Truncation) -> Result<Vec<Fig2Row>, StabilizationError> {
    p_grid
        .iter()
        .map(|&p| {
            assert!(p > 0.0 && p <= PE_GUARD, "P values must lie in (0, 60]");
            Ok(Fig2Row {
                p,
                phi_over_4p: phi(p) / (4.0 * p),
                curve_pe1: 8.0 * p * psi(PecletPair::new(p, 0.0), tr)?,
                curve_pe2: 8.0 * p * psi(PecletPair::new(0.0, p), tr)?,
            })
        })
        .collect()
}

pub fn write_fig2_csv<W: Write>(rows: &[Fig2Row], mut w: W) -> std::io::Result<()> {
    writeln!(w, "P,phi_over_4P,curve_Pe1,curve_Pe2")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.p, r.phi_over_4p, r.curve_pe1, r.curve_pe2
        )?;
    }
    Ok(())
}
