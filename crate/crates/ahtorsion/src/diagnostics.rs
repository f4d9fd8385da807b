//! Harmonicity criteria, curvature couplings and identities as named
//! residuals, plus Gray–Hervella classification.
//!
//! All tensors are orthonormal-frame components taken from a
//! [`PointAnalysis`]. Inner products of endomorphisms and forms are plain
//! sums of products of frame components.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, CatalogError, GeometrySpec};
use crate::exprlang::{self, EvalError, Expr};
use crate::jets::Jet;
use crate::unstruct::{
    act_on_form, gray_hervella_decompose, intrinsic_torsion, minimal_connection_contract, xi_vs_nabla_omega,
    AlmostHermitianStructure, GrayHervella, Mat, PointAnalysis, Psi, StructureError, CROSS_CHECK_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cross-check `{check}` failed (residual {residual:e})")]
    CrossCheck { check: &'static str, residual: f64 },
    #[error("no sample points")]
    NoPoints,
}

fn cross_check(check: &'static str, residual: f64, scale: f64, tol: f64) -> Result<(), DiagnosticsError> {
    if residual > tol * scale || residual.is_nan() {
        return Err(DiagnosticsError::CrossCheck { check, residual });
    }
    Ok(())
}

/// `Σ_m v_m ψ[m, x, y]`, i.e. the matrix `[X, Y] ↦ ⟨ξ_V X, Y⟩`.
fn along(psi: &Psi, v: &DVector<f64>) -> Mat {
    let d = psi.d;
    Mat::from_fn(d, d, |x, y| (0..d).map(|m| v[m] * psi.at(m, x, y)).sum())
}

fn family_sum(fam: &[Mat], w: &DVector<f64>) -> Mat {
    fam.iter().enumerate().fold(Mat::zeros(fam[0].nrows(), fam[0].ncols()), |acc, (m, x)| acc + x * w[m])
}

/// Largest singular value.
fn operator_norm(m: &Mat) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// `Σ_i (∇_{e_i} ξ)_{e_i}`.
fn divergence(nabla: &[Vec<Mat>]) -> Mat {
    let d = nabla.len();
    (0..d).fold(Mat::zeros(d, d), |acc, i| acc + &nabla[i][i])
}

/// `d*ξ` from the definition, cross-checked against the minimal-connection
/// expression and against membership in `u(n)⊥`.
pub fn coderivative_xi(pa: &PointAnalysis) -> Result<Mat, DiagnosticsError> {
    let (def, other) = coderivative_pair(pa);
    cross_check("d*xi definition vs minimal connection", (&def - other).norm(), pa.scale(), 1e-8)?;
    let perp = 0.5 * (&def + &pa.j * &def * &pa.j);
    cross_check("d*xi in u(n)perp", (&def - perp).norm(), pa.scale(), 1e-8)?;
    Ok(def)
}

fn coderivative_pair(pa: &PointAnalysis) -> (Mat, Mat) {
    let def = -divergence(&pa.nabla_xi);
    let other = -divergence(&pa.nabla_u_xi) - pa.xi_along(&pa.lee);
    (def, other)
}

/// `β(X) = ⟨ξ_{e_i}, R(e_i, X)⟩`, frame components.
pub fn harmonic_map_form(pa: &PointAnalysis) -> DVector<f64> {
    let d = pa.dim();
    DVector::from_fn(d, |x, _| (0..d).map(|i| pa.curv[i][x].dot(&pa.xi[i])).sum())
}

/// `R(X, Y)_{u(n)⊥}` for all frame pairs.
pub fn curvature_perp(pa: &PointAnalysis) -> Vec<Vec<Mat>> {
    pa.curv
        .iter()
        .map(|row| row.iter().map(|r| 0.5 * (r + &pa.j * r * &pa.j)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionResiduals {
    pub harmonic: f64,
    pub harmonic_map: f64,
    pub vert_geodesic: f64,
    pub horiz_geodesic: f64,
    pub flatness: f64,
    pub superflat: f64,
    pub torsion_iv_a: f64,
    pub torsion_iv_b: f64,
    /// `‖a + D − Dᵀ‖` with `a(X,Y) = ⟨(∇_{e_i}T)(X,Y), e_i⟩`, `D(X,Y) = ⟨d*T(X), Y⟩`;
    /// equals `2‖d*ξ‖`. The symmetric part of `D` alone is not tied to harmonicity.
    pub torsion_iv_skew: f64,
}

/// `⟨(∇_{e_c} T)(X, Y), Z⟩` with `T(X, Y) = ξ_X Y − ξ_Y X`, as `[c][x][(y, z)]`.
fn nabla_torsion(pa: &PointAnalysis) -> Vec<Vec<Mat>> {
    let d = pa.dim();
    (0..d)
        .map(|c| {
            (0..d)
                .map(|x| Mat::from_fn(d, d, |y, z| pa.nabla_xi[c][x][(z, y)] - pa.nabla_xi[c][y][(z, x)]))
                .collect()
        })
        .collect()
}

pub fn section_residuals(pa: &PointAnalysis) -> SectionResiduals {
    let d = pa.dim();
    let (dsxi, _) = coderivative_pair(pa);
    let beta = harmonic_map_form(pa);
    let mut vert = 0.0;
    let mut superflat = 0.0;
    let perp = curvature_perp(pa);
    let mut flat = 0.0;
    for x in 0..d {
        for y in 0..d {
            let sym = &pa.nabla_xi[x][y] + &pa.nabla_xi[y][x];
            vert += sym.norm_squared();
            superflat += (-0.5 * (sym + &perp[x][y])).norm_squared();
            flat += perp[x][y].norm_squared();
        }
    }
    let mut horiz = 0.0;
    let h = |x: usize, y: usize, z: usize| pa.xi[x].dot(&pa.curv[y][z]);
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                horiz += (h(x, y, z) + h(y, x, z)).powi(2);
            }
        }
    }
    let nt = nabla_torsion(pa);
    let iv_a = Mat::from_fn(d, d, |x, y| (0..d).map(|i| nt[i][x][(y, i)]).sum());
    // d*T(X) = −(∇_{e_i} T)(e_i, X); matrix [Z, X]
    let dst = Mat::from_fn(d, d, |z, x| -(0..d).map(|i| nt[i][i][(x, z)]).sum::<f64>());
    SectionResiduals {
        harmonic: dsxi.norm(),
        harmonic_map: beta.norm(),
        vert_geodesic: vert.sqrt(),
        horiz_geodesic: horiz.sqrt(),
        flatness: flat.sqrt(),
        superflat: superflat.sqrt(),
        torsion_iv_a: operator_norm(&iv_a),
        torsion_iv_b: (0.5 * (&dst + dst.transpose())).norm(),
        // dst is [Z, X], so D − Dᵀ = dstᵀ − dst
        torsion_iv_skew: (&iv_a + dst.transpose() - &dst).norm(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarRicci {
    pub ric_star: Mat,
    pub s_star: f64,
    pub sym: Mat,
    pub alt: Mat,
}

/// `Ric*(X, Y) = ⟨R(X, e_i) JY, J e_i⟩` with the skew part cross-checked
/// against its torsion expression.
pub fn star_ricci(pa: &PointAnalysis) -> Result<StarRicci, DiagnosticsError> {
    let rs = pa.ric_star.clone();
    let alt = 0.5 * (&rs - rs.transpose());
    let scale = pa.scale();
    cross_check("Ric* frame contraction", (&rs - ric_star_contraction(pa)).norm(), scale * scale, 1e-8)?;
    cross_check("Ric*(JX,JY) = Ric*(Y,X)", ric_star_jj_defect(pa), scale * scale, 1e-9)?;
    cross_check("Ric*_alt torsion expression", (&alt - ric_star_alt_torsion(pa)).norm(), scale * scale, 1e-8)?;
    Ok(StarRicci {
        s_star: rs.trace(),
        sym: 0.5 * (&rs + rs.transpose()),
        ric_star: rs,
        alt,
    })
}

fn ric_star_contraction(pa: &PointAnalysis) -> Mat {
    let d = pa.dim();
    let j = &pa.j;
    // Σ_i ⟨R(X,e_i) J e_y, J e_i⟩ = Σ_i (Jᵀ R(X,e_i) J)[i, y]
    Mat::from_fn(d, d, |x, y| (0..d).map(|i| (j.transpose() * &pa.curv[x][i] * j)[(i, y)]).sum())
}

fn ric_star_jj_defect(pa: &PointAnalysis) -> f64 {
    (pa.j.transpose() * &pa.ric_star * &pa.j - pa.ric_star.transpose()).norm()
}

/// `−⟨ξ_{Jv} JX, Y⟩ + ⟨(∇^U_{e_i} ξ)_{J e_i} JX, Y⟩`, matrix `[X, Y]`.
fn ric_star_alt_torsion(pa: &PointAnalysis) -> Mat {
    let d = pa.dim();
    let a1 = pa.xi_along(&(&pa.j * &pa.lee));
    let a2 = (0..d).fold(Mat::zeros(d, d), |acc, i| {
        acc + family_sum(&pa.nabla_u_xi[i], &pa.j.column(i).into_owned())
    });
    (-(a1 * &pa.j) + a2 * &pa.j).transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermitianHarmonicity {
    pub comm_j_lap_j: f64,
    pub herm_defect: f64,
    pub cond_iv: f64,
}

pub fn hermitian_harmonicity(pa: &PointAnalysis) -> HermitianHarmonicity {
    let j = &pa.j;
    let lap = &pa.lap_omega;
    let quad = pa.xi.iter().fold(Mat::zeros(pa.dim(), pa.dim()), |acc, x| {
        acc + x.transpose() * &pa.omega * x
    });
    HermitianHarmonicity {
        comm_j_lap_j: (j * &pa.lap_j - &pa.lap_j * j).norm(),
        herm_defect: (j.transpose() * lap * j - lap).norm(),
        cond_iv: (lap + 4.0 * quad).norm(),
    }
}

/// The eight residuals that vanish exactly for harmonic structures.
pub fn harmonicity_equivalents(pa: &PointAnalysis) -> Vec<(&'static str, f64)> {
    let s = section_residuals(pa);
    let h = hermitian_harmonicity(pa);
    let min = divergence(&pa.nabla_u_xi) + pa.xi_along(&pa.lee);
    vec![
        ("harmonic", s.harmonic),
        ("carharm_iii", min.norm()),
        ("torsion_iv_a", s.torsion_iv_a),
        ("torsion_iv_b", s.torsion_iv_b),
        ("comm_JLapJ", h.comm_j_lap_j),
        ("herm_defect", h.herm_defect),
        ("cond_iv", h.cond_iv),
        ("omega_form", act_on_form(&min, &pa.omega).norm()),
    ]
}

/// Gray–Hervella parts of `ξ` and of every `∇^U_{e} ξ`.
struct Split {
    parts: GrayHervella,
    /// `div[k][(x, y)] = ⟨(∇^U_{e_i} ξ_(k))_{e_i} X, Y⟩`
    div: [Mat; 4],
}

fn split(pa: &PointAnalysis) -> Result<Split, StructureError> {
    let d = pa.dim();
    let parts = gray_hervella_decompose(&pa.psi(), &pa.j, pa.n, Some(&pa.d_star_omega))?;
    let mut div: [Mat; 4] = std::array::from_fn(|_| Mat::zeros(d, d));
    for i in 0..d {
        let gh = gray_hervella_decompose(&Psi::from_family(&pa.nabla_u_xi[i]), &pa.j, pa.n, None)?;
        for (k, part) in gh.parts.iter().enumerate() {
            for x in 0..d {
                for y in 0..d {
                    div[k][(x, y)] += part.at(i, x, y);
                }
            }
        }
    }
    Ok(Split { parts, div })
}

/// `d(ξ♭_{e_i} e_i)(X, Y)`.
fn d_lee(pa: &PointAnalysis) -> Mat {
    let d = pa.dim();
    let nv = Mat::from_fn(d, d, |x, a| (0..d).map(|i| pa.nabla_xi[x][i][(a, i)]).sum());
    &nv - nv.transpose()
}

/// `⟨Ric*, ξ♭_X⟩` for each frame `X`.
fn ric_star_pairing(pa: &PointAnalysis, psi: &Psi) -> DVector<f64> {
    let d = pa.dim();
    DVector::from_fn(d, |x, _| {
        let mut s = 0.0;
        for j in 0..d {
            for k in 0..d {
                s += pa.ric_star[(j, k)] * psi.at(x, j, k);
            }
        }
        s
    })
}

/// `d*Ric*ᵗ(X) = −(∇_{e_j} Ric*)(X, e_j)`.
fn d_star_ric_star_t(pa: &PointAnalysis) -> DVector<f64> {
    let d = pa.dim();
    DVector::from_fn(d, |x, _| -(0..d).map(|j| pa.nabla_ric_star[j][(x, j)]).sum::<f64>())
}

/// `d*Ric*(X) = −(∇_{e_j} Ric*)(e_j, X)`.
fn d_star_ric_star(pa: &PointAnalysis) -> DVector<f64> {
    let d = pa.dim();
    DVector::from_fn(d, |x, _| -(0..d).map(|j| pa.nabla_ric_star[j][(j, x)]).sum::<f64>())
}

fn ds_star(pa: &PointAnalysis) -> DVector<f64> {
    DVector::from_iterator(pa.dim(), pa.nabla_ric_star.iter().map(|m| m.trace()))
}

/// Named residuals of identities valid on every almost Hermitian manifold.
pub fn identity_suite(pa: &PointAnalysis) -> Result<Vec<(&'static str, f64)>, DiagnosticsError> {
    let n = pa.n;
    let nf = n as f64;
    let d = pa.dim();
    let j = &pa.j;
    let psi = pa.psi();
    let Split { parts, div } = split(pa)?;
    let [x1, x2, x3, x4] = &parts.parts;

    let v4 = x4.trace12();
    let cross = |a: &Psi, b: &Psi| {
        Mat::from_fn(d, d, |x, y| {
            let mut s = 0.0;
            for i in 0..d {
                for m in 0..d {
                    s += a.at(x, i, m) * b.at(i, y, m) - a.at(y, i, m) * b.at(i, x, m);
                }
            }
            s
        })
    };
    let d2omega = 3.0 * &div[0] - &div[2] + (nf - 2.0) * &div[3] + cross(x3, x1) + cross(x3, x2)
        - (nf - 5.0) / (nf - 1.0) * along(x1, &v4)
        - (nf - 2.0) / (nf - 1.0) * along(x2, &v4)
        + along(x3, &v4);

    let v = &pa.lee;
    let dv = d_lee(pa);
    let previo = 2.0 * (nf - 1.0) * &div[3]
        - (&dv - j.transpose() * &dv * j - 4.0 * along(x1, v) + 2.0 * along(x2, v));

    let om = &pa.omega;
    let t1 = act_on_form(&divergence(&pa.nabla_u_xi), om);
    let t2 = act_on_form(&pa.xi_along(v), om);
    let t3 = pa
        .xi
        .iter()
        .fold(Mat::zeros(d, d), |acc, x| acc - act_on_form(x, &act_on_form(x, om)));
    let lapstaten = &pa.lap_omega - (t1 + t2 + t3);

    let term1 = DVector::from_fn(d, |x, _| {
        (0..d)
            .map(|i| pa.curv[i][x].dot(&(family_sum(&pa.xi, &j.column(i).into_owned()) * j)))
            .sum::<f64>()
    });
    let lhs = 2.0 * d_star_ric_star_t(pa) + ds_star(pa);
    let rhs = 2.0 * term1 - 4.0 * (&pa.ric_star * v) + 4.0 * ric_star_pairing(pa, &psi);
    let genera = (lhs - rhs).norm();

    let (def, other) = coderivative_pair(pa);
    let w4 = crate::unstruct::w4_from_dstar_omega(&pa.d_star_omega, j, n)
        .sub(&crate::unstruct::w4_from_lee(v, j, n))
        .norm();
    let lee = (2.0 * v + j * &pa.d_star_omega).norm();
    Ok(vec![
        ("d2omega", d2omega.norm()),
        ("previo", previo.norm()),
        ("lapstaten", lapstaten.norm()),
        ("id_genera", genera),
        ("coderxi", (def - other).norm()),
        ("torsionw4", if n >= 2 { w4 } else { 0.0 }),
        ("lee", lee),
        ("xi_nabla_omega", xi_vs_nabla_omega(pa)),
    ])
}

/// Classes with a harmonicity criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionClass {
    /// `W₁⊕W₂⊕W₄`
    W124,
    QuasiKahler,
    /// `W₂⊕W₄`
    LocallyConformalAlmostKahler,
    /// `W₁⊕W₄`, `n ≠ 2`
    W14,
    Hermitian,
    HarmonicMapW124,
    HarmonicMapQuasiKahler,
    HarmonicMapHermitian,
}

impl CriterionClass {
    pub const ALL: [CriterionClass; 8] = [
        CriterionClass::W124,
        CriterionClass::QuasiKahler,
        CriterionClass::LocallyConformalAlmostKahler,
        CriterionClass::W14,
        CriterionClass::Hermitian,
        CriterionClass::HarmonicMapW124,
        CriterionClass::HarmonicMapQuasiKahler,
        CriterionClass::HarmonicMapHermitian,
    ];

    /// Components allowed in the class, `W₁..W₄`.
    pub fn allowed(self) -> [bool; 4] {
        use CriterionClass::*;
        match self {
            W124 | HarmonicMapW124 => [true, true, false, true],
            QuasiKahler | HarmonicMapQuasiKahler => [true, true, false, false],
            LocallyConformalAlmostKahler => [false, true, false, true],
            W14 => [true, false, false, true],
            Hermitian | HarmonicMapHermitian => [false, false, true, true],
        }
    }

    pub fn is_harmonic_map(self) -> bool {
        matches!(
            self,
            CriterionClass::HarmonicMapW124 | CriterionClass::HarmonicMapQuasiKahler | CriterionClass::HarmonicMapHermitian
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClassCheck {
    /// `criterion` is the left-minus-right residual; `target` the matching
    /// harmonic (or harmonic-map) residual.
    Applicable { criterion: f64, target: f64 },
    Inapplicable { reason: String },
}

pub fn class_criteria(pa: &PointAnalysis, class: CriterionClass, tol: f64) -> Result<ClassCheck, DiagnosticsError> {
    let n = pa.n;
    let nf = n as f64;
    if class == CriterionClass::W14 && n == 2 {
        return Ok(ClassCheck::Inapplicable {
            reason: "criterion excludes n = 2".into(),
        });
    }
    let Split { parts, .. } = split(pa)?;
    let scale = pa.scale();
    let norms = parts.norms();
    for (k, ok) in class.allowed().iter().enumerate() {
        if !ok && norms[k] > tol * scale {
            return Ok(ClassCheck::Inapplicable {
                reason: format!("W{} component {:.3e} present", k + 1, norms[k]),
            });
        }
    }
    let st = star_ricci(pa)?;
    let alt = &st.alt;
    let psi = pa.psi();
    let v = &pa.lee;
    let xv = along(&psi, v);
    let sec = section_residuals(pa);
    let hm_target = sec.harmonic + sec.harmonic_map;
    let pairing = ric_star_pairing(pa, &psi);
    use CriterionClass::*;
    let (criterion, target) = match class {
        W124 => {
            let dv = d_lee(pa);
            let rhs = &dv - pa.j.transpose() * &dv * &pa.j
                + 2.0 * (nf - 3.0) * along(&parts.parts[0], v)
                + 2.0 * nf * along(&parts.parts[1], v);
            (((nf - 1.0) * alt - rhs).norm(), sec.harmonic)
        }
        QuasiKahler => (alt.norm(), sec.harmonic),
        LocallyConformalAlmostKahler => (((nf - 1.0) * alt - 2.0 * nf * &xv).norm(), sec.harmonic),
        W14 => (
            ((nf - 1.0) * (nf - 5.0) * alt - 2.0 * (nf + 1.0) * (nf - 3.0) * &xv).norm(),
            sec.harmonic,
        ),
        Hermitian => ((alt + 2.0 * &xv).norm(), sec.harmonic),
        HarmonicMapW124 => {
            let lhs = (nf - 1.0) * d_star_ric_star_t(pa) + 0.5 * (nf - 1.0) * ds_star(pa);
            let rhs = &pa.ric * v - (2.0 * nf - 1.0) * (&pa.ric_star * v) + 2.0 * (nf - 1.0) * &pairing;
            (sec.harmonic + (lhs - rhs).norm(), hm_target)
        }
        HarmonicMapQuasiKahler => (
            alt.norm() + (2.0 * d_star_ric_star(pa) + ds_star(pa)).norm(),
            hm_target,
        ),
        HarmonicMapHermitian => {
            let e = 2.0 * d_star_ric_star_t(pa) + ds_star(pa) + 4.0 * (&pa.ric_star * v) - 4.0 * &pairing;
            ((alt + 2.0 * &xv).norm() + e.norm(), hm_target)
        }
    };
    Ok(ClassCheck::Applicable { criterion, target })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearlyKahlerResiduals {
    pub ecxy: f64,
    pub ecjxjy: f64,
    pub ecxyzw: f64,
    pub nabla_u_xi: f64,
    pub flatness_relation: f64,
    /// `‖R_{u(n)⊥}‖` small forces `‖ξ‖` small.
    pub flat_implies_kahler: bool,
    /// `‖Ψ_ξ‖²` for `Ψ_ξ(X, Y, Z) = ⟨ξ_(1)X Y, Z⟩`.
    pub psi_norm_sq: f64,
    /// `∇*∇ω − 4⟨X⌟Ψ, JY⌟Ψ⟩ − d*ω∧Jd*ω / (4(n−1)²)`.
    pub laplacian_formula: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NearlyKahlerCheck {
    Applicable(NearlyKahlerResiduals),
    Inapplicable { reason: String },
}

pub fn nearly_kahler_suite(pa: &PointAnalysis, tol: f64) -> Result<NearlyKahlerCheck, DiagnosticsError> {
    let d = pa.dim();
    let psi = pa.psi();
    let parts = gray_hervella_decompose(&psi, &pa.j, pa.n, Some(&pa.d_star_omega))?;
    let x1 = &parts.parts[0];
    let rest = psi.sub(x1).norm();
    let scale = pa.scale();
    if rest > tol * scale {
        return Ok(NearlyKahlerCheck::Inapplicable {
            reason: format!("|xi - xi_1| = {rest:.3e}"),
        });
    }
    let j = &pa.j;
    let r4 = |x: usize, y: usize, z: usize, w: usize| pa.r4(x, y, z, w);
    // ⟨R(X,Y)JZ, JW⟩
    let rjj = |x: usize, y: usize, z: usize, w: usize| (j.transpose() * &pa.curv[x][y] * j)[(w, z)];
    let xixy = |x: usize, y: usize| Mat::from_fn(d, 1, |z, _| psi.at(x, y, z));
    let mut ecxy = 0.0f64;
    let mut ecxyzw = 0.0f64;
    let mut ecjxjy = 0.0f64;
    let mut flat_rel = 0.0f64;
    let perp = curvature_perp(pa);
    let jt = j.transpose();
    for x in 0..d {
        for y in 0..d {
            let a = xixy(x, y);
            ecxy = ecxy.max((r4(x, y, x, y) - rjj(x, y, x, y) - 4.0 * a.norm_squared()).abs());
            flat_rel = flat_rel.max((perp[x][y][(y, x)] - 2.0 * a.norm_squared()).abs());
            for z in 0..d {
                for w in 0..d {
                    let b = xixy(z, w);
                    ecxyzw = ecxyzw.max((r4(x, y, z, w) - rjj(x, y, z, w) - 4.0 * a.dot(&b)).abs());
                }
            }
        }
    }
    // ⟨R(JX,JY)JZ, JW⟩ = Σ_ab J[a,x] J[b,y] (Jᵀ R(e_a,e_b) J)[w,z]
    let twisted: Vec<Vec<Mat>> = pa
        .curv
        .iter()
        .map(|row| row.iter().map(|r| &jt * r * j).collect())
        .collect();
    for x in 0..d {
        for y in 0..d {
            let mut m = Mat::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    let c = j[(a, x)] * j[(b, y)];
                    if c != 0.0 {
                        m += c * &twisted[a][b];
                    }
                }
            }
            for z in 0..d {
                for w in 0..d {
                    ecjxjy = ecjxjy.max((m[(w, z)] - r4(x, y, z, w)).abs());
                }
            }
        }
    }
    let nu = pa
        .nabla_u_xi
        .iter()
        .flatten()
        .map(|m| m.norm_squared())
        .sum::<f64>()
        .sqrt();
    let flatness = perp.iter().flatten().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let flat_implies_kahler = flatness >= tol * scale || pa.xi_norm() < tol * scale;

    let theta = &pa.d_star_omega;
    let jtheta = -(j.transpose() * theta);
    let nf = pa.n as f64;
    let lapf = Mat::from_fn(d, d, |x, y| {
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                let jy: f64 = (0..d).map(|m| j[(m, y)] * x1.at(m, a, b)).sum();
                s += x1.at(x, a, b) * jy;
            }
        }
        4.0 * s + (theta[x] * jtheta[y] - theta[y] * jtheta[x]) / (4.0 * (nf - 1.0).powi(2))
    });
    Ok(NearlyKahlerCheck::Applicable(NearlyKahlerResiduals {
        ecxy,
        ecjxjy,
        ecxyzw,
        nabla_u_xi: nu,
        flatness_relation: flat_rel,
        flat_implies_kahler,
        psi_norm_sq: x1.dot(x1),
        laplacian_formula: (&pa.lap_omega - lapf).norm(),
    }))
}

/// Harmonic-map one-form of `e^f δ` against its flat closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCheck {
    /// Coordinate components `β(∂_k)`.
    pub numeric: Vec<f64>,
    /// `[−((2n−3)/2) d‖df‖² + d*(df) df + (∇_{J·} df)(J grad f)] / (16 e^f)`.
    pub closed_form: Vec<f64>,
    pub rel_error: f64,
    /// Ratio `numeric / closed_form` along the largest closed-form component.
    pub ratio: f64,
    /// For `f = sin(x1)`: `((n−1)/8) e^{−sin x₁} sin x₁ cos x₁ dx₁`.
    pub sin_closed_form: Option<Vec<f64>>,
    pub sin_rel_error: Option<f64>,
    pub harmonic: f64,
    pub scale: f64,
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let size = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if size == 0.0 {
        diff
    } else {
        diff / size
    }
}

pub fn conformal_example_check(n: usize, f: &str, p: &[f64], degree: usize) -> Result<ConformalCheck, DiagnosticsError> {
    let spec = catalog::conformal(n, f, false)?;
    let s = spec.build()?;
    let pa = PointAnalysis::new(&s, p, degree)?;
    let d = 2 * n;
    let beta = harmonic_map_form(&pa);
    let numeric: Vec<f64> = pa
        .frame
        .frame
        .transpose()
        .lu()
        .solve(&beta)
        .expect("frame is invertible")
        .iter()
        .cloned()
        .collect();

    let expr = exprlang::parse(f).map_err(CatalogError::from)?;
    let fj = exprlang::eval_expr(&expr, p, 2)?;
    let unit = |k: usize| -> Vec<u8> { (0..d).map(|i| u8::from(i == k)).collect() };
    let df: Vec<f64> = (0..d).map(|k| fj.partial(&unit(k)).expect("order 1")).collect();
    let hess = Mat::from_fn(d, d, |a, b| {
        let mut alpha = vec![0u8; d];
        alpha[a] += 1;
        alpha[b] += 1;
        fj.partial(&alpha).expect("order 2")
    });
    let dfv = DVector::from_vec(df.clone());
    let j0 = crate::unstruct::standard_j(n);
    let grad_norm_sq = 2.0 * (&hess * &dfv);
    let lap = -hess.trace();
    let jdf = &j0 * &dfv;
    let nf = n as f64;
    let ef = fj.value().exp();
    let closed_form: Vec<f64> = (0..d)
        .map(|k| {
            let jx = j0.column(k);
            let t3 = (jx.transpose() * &hess * &jdf)[(0, 0)];
            (-(2.0 * nf - 3.0) / 2.0 * grad_norm_sq[k] + lap * df[k] + t3) / (16.0 * ef)
        })
        .collect();
    let kmax = (0..d)
        .max_by(|&a, &b| closed_form[a].abs().total_cmp(&closed_form[b].abs()))
        .unwrap_or(0);
    let ratio = numeric[kmax] / closed_form[kmax];
    let is_sin = expr == exprlang::parse("sin(x1)").expect("literal");
    let sin_closed_form = is_sin.then(|| {
        let x = p[0];
        let mut v = vec![0.0; d];
        v[0] = (nf - 1.0) / 8.0 * (-x.sin()).exp() * x.sin() * x.cos();
        v
    });
    let sin_rel_error = sin_closed_form.as_ref().map(|c| rel_error(&numeric, c));
    Ok(ConformalCheck {
        rel_error: rel_error(&numeric, &closed_form),
        numeric,
        closed_form,
        ratio,
        sin_closed_form,
        sin_rel_error,
        harmonic: section_residuals(&pa).harmonic,
        scale: pa.scale(),
    })
}

/// `−2 e^{−f} ⟨R(X,Y)Z,W⟩` against its closed form in `df` and the flat
/// Hessian; returns `(max abs defect, max abs closed form)`.
pub fn conformal_curvature_check(n: usize, f: &Expr, p: &[f64]) -> Result<(f64, f64), DiagnosticsError> {
    let d = 2 * n;
    let spec = catalog::conformal(n, &f.to_string(), false)?;
    let s = spec.build()?;
    let geo = s.local_geometry(p, 2).map_err(StructureError::from)?;
    let r = geo.curvature(false).map_err(StructureError::from)?.r;
    let g = geo.metric();
    let fj = exprlang::eval_expr(f, p, 2)?;
    let df = DVector::from_fn(d, |k, _| {
        let mut a = vec![0u8; d];
        a[k] = 1;
        fj.partial(&a).expect("order 1")
    });
    let h = Mat::from_fn(d, d, |a, b| {
        let mut alpha = vec![0u8; d];
        alpha[a] += 1;
        alpha[b] += 1;
        fj.partial(&alpha).expect("order 2")
    });
    let l = &h - 0.5 * &df * df.transpose();
    let q = 0.5 * df.norm_squared();
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let ef = fj.value().exp();
    let mut defect = 0.0f64;
    let mut size = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                for w in 0..d {
                    let r4: f64 = (0..d).map(|m| g[(w, m)] * r.get(&[x, y, m, z])).sum();
                    let lhs = -2.0 / ef * r4;
                    let rhs = l[(x, z)] * delta(y, w) + l[(y, w)] * delta(x, z)
                        - l[(x, w)] * delta(y, z)
                        - l[(y, z)] * delta(x, w)
                        + q * (delta(x, z) * delta(y, w) - delta(y, z) * delta(x, w));
                    defect = defect.max((lhs - rhs).abs());
                    size = size.max(rhs.abs());
                }
            }
        }
    }
    Ok((defect, size))
}

/// Run the convention audit on a fixed conformal example.
pub fn sign_audit() -> &'static str {
    let f = exprlang::parse("sin(x1)*cos(x2) + 0.3*x3").expect("literal");
    match conformal_curvature_check(2, &f, &[0.4, -0.3, 0.8, 0.1]) {
        Ok((defect, size)) if defect < 1e-10 * (1.0 + size) => "paper-convention",
        _ => "failed",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: String,
    /// Max over points of `‖ξ_(i)‖`.
    pub max_norms: [f64; 4],
}

pub fn gh_label(norms: &[f64; 4], tol: f64) -> String {
    let parts: Vec<String> = (0..4).filter(|&k| norms[k] > tol).map(|k| format!("W{}", k + 1)).collect();
    if parts.is_empty() {
        "Kähler".into()
    } else {
        parts.join("+")
    }
}

pub fn classify_gh(
    s: &AlmostHermitianStructure,
    points: &[Vec<f64>],
    tol: f64,
    degree: usize,
) -> Result<Classification, DiagnosticsError> {
    if points.is_empty() {
        return Err(DiagnosticsError::NoPoints);
    }
    let norms: Vec<[f64; 4]> = points
        .par_iter()
        .map(|p| -> Result<[f64; 4], DiagnosticsError> {
            let pa = PointAnalysis::new(s, p, degree)?;
            Ok(intrinsic_torsion(&pa)?.components.norms())
        })
        .collect::<Result<_, _>>()?;
    let max_norms = norms.iter().fold([0.0f64; 4], |acc, n| std::array::from_fn(|k| acc[k].max(n[k])));
    Ok(Classification {
        label: gh_label(&max_norms, tol),
        max_norms,
    })
}

/// All diagnostics at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub x: Vec<f64>,
    pub scale: f64,
    pub class: String,
    pub gh_norms: [f64; 4],
    pub harmonic: bool,
    pub harmonic_map: bool,
    pub residuals: BTreeMap<String, f64>,
    pub values: BTreeMap<String, f64>,
    pub class_checks: BTreeMap<String, ClassCheck>,
    pub nearly_kahler: NearlyKahlerCheck,
}

impl PointReport {
    /// Residual divided by the point scale.
    pub fn normalized(&self, name: &str) -> Option<f64> {
        self.residuals.get(name).map(|r| r / self.scale)
    }
}

pub const IDENTITY_NAMES: [&str; 8] = [
    "d2omega",
    "previo",
    "lapstaten",
    "id_genera",
    "coderxi",
    "torsionw4",
    "lee",
    "xi_nabla_omega",
];

pub fn diagnose_point(
    s: &AlmostHermitianStructure,
    p: &[f64],
    degree: usize,
    tol: f64,
) -> Result<PointReport, DiagnosticsError> {
    let pa = PointAnalysis::new(s, p, degree)?;
    let scale = pa.scale();
    let torsion = intrinsic_torsion(&pa)?;
    cross_check("minimal connection contract", minimal_connection_contract(&pa), scale, CROSS_CHECK_TOL)?;
    coderivative_xi(&pa)?;
    let st = star_ricci(&pa)?;
    let sec = section_residuals(&pa);
    let herm = hermitian_harmonicity(&pa);
    let mut residuals = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        residuals.insert(k.to_string(), v);
    };
    put("harmonic", sec.harmonic);
    put("harmonic_map", sec.harmonic_map);
    put("vert_geodesic", sec.vert_geodesic);
    put("horiz_geodesic", sec.horiz_geodesic);
    put("flatness", sec.flatness);
    put("superflat", sec.superflat);
    put("torsion_iv_a", sec.torsion_iv_a);
    put("torsion_iv_b", sec.torsion_iv_b);
    put("torsion_iv_skew", sec.torsion_iv_skew);
    put("comm_JLapJ", herm.comm_j_lap_j);
    put("herm_defect", herm.herm_defect);
    put("cond_iv", herm.cond_iv);
    put("ric_star_alt", st.alt.norm());
    put("ric_star_jj", ric_star_jj_defect(&pa));
    for (k, v) in harmonicity_equivalents(&pa) {
        put(k, v);
    }
    for (k, v) in identity_suite(&pa)? {
        put(k, v);
    }
    let nk = nearly_kahler_suite(&pa, tol)?;
    if let NearlyKahlerCheck::Applicable(r) = &nk {
        put("nk_ecxy", r.ecxy);
        put("nk_ecjxjy", r.ecjxjy);
        put("nk_ecxyzw", r.ecxyzw);
        put("nk_nabla_u_xi", r.nabla_u_xi);
        put("nk_flatness_relation", r.flatness_relation);
    }
    let mut class_checks = BTreeMap::new();
    for c in CriterionClass::ALL {
        let key = serde_json::to_value(c).expect("enum").as_str().expect("string").to_string();
        class_checks.insert(key, class_criteria(&pa, c, tol)?);
    }
    let mut values = BTreeMap::new();
    values.insert("s_star".to_string(), st.s_star);
    values.insert("xi_norm".to_string(), pa.xi_norm());
    values.insert("lee_norm".to_string(), pa.lee.norm());
    values.insert("energy_density".to_string(), 0.5 * pa.xi_norm().powi(2));
    values.insert("psi_norm_sq".to_string(), torsion.components.parts[0].dot(&torsion.components.parts[0]));
    let gh_norms = torsion.components.norms();
    Ok(PointReport {
        x: p.to_vec(),
        scale,
        class: gh_label(&gh_norms, tol * scale),
        gh_norms,
        harmonic: sec.harmonic < tol * scale,
        harmonic_map: sec.harmonic < tol * scale && sec.harmonic_map < tol * scale,
        residuals,
        values,
        class_checks,
        nearly_kahler: nk,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub jet_degree: usize,
    pub sign_audit: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema: u32,
    pub geometry: GeometrySpec,
    pub sign_audit: String,
    pub tol: f64,
    pub metadata: Metadata,
    pub class: String,
    pub harmonic: bool,
    pub harmonic_map: bool,
    pub points: Vec<PointReport>,
    pub summary: BTreeMap<String, Stat>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Evaluate every point in parallel and assemble the report.
pub fn diagnose(
    spec: &GeometrySpec,
    points: &[Vec<f64>],
    tol: f64,
    seed: Option<u64>,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    if points.is_empty() {
        return Err(DiagnosticsError::NoPoints);
    }
    let s = spec.build()?;
    let reports: Vec<PointReport> = points
        .par_iter()
        .map(|p| diagnose_point(&s, p, spec.jet_degree, tol))
        .collect::<Result<_, _>>()?;
    Ok(assemble(spec, reports, tol, seed))
}

fn assemble(spec: &GeometrySpec, points: Vec<PointReport>, tol: f64, seed: Option<u64>) -> DiagnosticsReport {
    let mut summary: BTreeMap<String, Stat> = BTreeMap::new();
    for name in points[0].residuals.keys() {
        let vals: Vec<f64> = points.iter().filter_map(|p| p.residuals.get(name).copied()).collect();
        summary.insert(
            name.clone(),
            Stat {
                max: vals.iter().cloned().fold(0.0, f64::max),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
            },
        );
    }
    let max_norms = points
        .iter()
        .fold([0.0f64; 4], |acc, p| std::array::from_fn(|k| acc[k].max(p.gh_norms[k] / p.scale)));
    let class = gh_label(&max_norms, tol);
    let harmonic = points.iter().all(|p| p.harmonic);
    let harmonic_map = points.iter().all(|p| p.harmonic_map);

    let mut checks = Vec::new();
    for name in IDENTITY_NAMES {
        let worst = points.iter().filter_map(|p| p.normalized(name)).fold(0.0, f64::max);
        checks.push(Check {
            name: name.to_string(),
            pass: worst < tol,
            detail: format!("max residual/scale {worst:.3e}"),
        });
    }
    let worst = points.iter().filter_map(|p| p.normalized("ric_star_jj")).fold(0.0, f64::max);
    checks.push(Check {
        name: "ric_star_jj".into(),
        pass: worst < tol,
        detail: format!("max residual/scale {worst:.3e}"),
    });
    if let Some(want) = &spec.expected.class {
        checks.push(Check {
            name: "class".into(),
            pass: &class == want,
            detail: format!("expected {want}, got {class}"),
        });
    }
    if let Some(want) = spec.expected.harmonic {
        checks.push(Check {
            name: "harmonic".into(),
            pass: harmonic == want,
            detail: format!("expected {want}, got {harmonic}"),
        });
    }
    if let Some(want) = spec.expected.harmonic_map {
        checks.push(Check {
            name: "harmonic_map".into(),
            pass: harmonic_map == want,
            detail: format!("expected {want}, got {harmonic_map}"),
        });
    }
    let nk: Vec<_> = points
        .iter()
        .filter_map(|p| match &p.nearly_kahler {
            NearlyKahlerCheck::Applicable(r) => Some((r, p.scale)),
            NearlyKahlerCheck::Inapplicable { .. } => None,
        })
        .collect();
    if !nk.is_empty() {
        let worst = nk
            .iter()
            .map(|(r, s)| r.ecxy.max(r.ecjxjy).max(r.ecxyzw).max(r.nabla_u_xi).max(r.flatness_relation) / s)
            .fold(0.0, f64::max);
        checks.push(Check {
            name: "nearly_kahler".into(),
            pass: worst < tol && nk.iter().all(|(r, _)| r.flat_implies_kahler),
            detail: format!("max residual/scale {worst:.3e}"),
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    let sign_audit = sign_audit().to_string();
    DiagnosticsReport {
        schema: 1,
        geometry: spec.clone(),
        sign_audit: sign_audit.clone(),
        tol,
        metadata: Metadata {
            jet_degree: spec.jet_degree,
            sign_audit,
            seed,
        },
        class,
        harmonic,
        harmonic_map,
        points,
        summary,
        checks,
        pass,
    }
}

/// Coordinate jets of `f` at a point, for callers building their own closed forms.
pub fn expr_jet(f: &str, p: &[f64], degree: usize) -> Result<Jet, DiagnosticsError> {
    let e = exprlang::parse(f).map_err(CatalogError::from)?;
    Ok(exprlang::eval_expr(&e, p, degree)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{conformal, flat_kahler, hopf_chart, s6_nearly_kahler};
    use crate::unstruct::random_curved_structure;

    #[test]
    fn flat_is_all_zero() {
        let s = flat_kahler(2).unwrap().build().unwrap();
        let r = diagnose_point(&s, &[0.1, 0.2, 0.3, 0.4], 3, 1e-7).unwrap();
        assert!(r.residuals.values().all(|v| *v == 0.0), "{:?}", r.residuals);
        assert_eq!(r.class, "Kähler");
    }

    #[test]
    fn identities_on_curved_random() {
        for (n, seed) in [(2, 1), (3, 2)] {
            let s = random_curved_structure(seed, n, 0.4).unwrap();
            let p: Vec<f64> = (0..2 * n).map(|k| 0.3 + 0.7 * k as f64).collect();
            let pa = PointAnalysis::new(&s, &p, 4).unwrap();
            let scale = pa.scale();
            for (name, v) in identity_suite(&pa).unwrap() {
                assert!(v < 1e-9 * scale, "{name} {v:e} n={n}");
            }
            star_ricci(&pa).unwrap();
            coderivative_xi(&pa).unwrap();
        }
    }

    #[test]
    fn hopf_is_harmonic_map_but_not_geodesic() {
        let s = hopf_chart(2).unwrap().build().unwrap();
        let pa = PointAnalysis::new(&s, &[0.9, 0.3, -0.4, 0.6], 4).unwrap();
        let r = section_residuals(&pa);
        assert!(r.harmonic < 1e-10 * pa.scale());
        assert!(r.harmonic_map < 1e-10 * pa.scale());
        assert!(r.vert_geodesic > 1e-2 && r.horiz_geodesic > 1e-2, "{r:?}");
        assert!(r.torsion_iv_skew < 1e-10 * pa.scale() && r.torsion_iv_b > 1e-2, "{r:?}");
    }

    #[test]
    fn torsion_skew_part_is_twice_coderivative() {
        let s = random_curved_structure(3, 2, 0.4).unwrap();
        let pa = PointAnalysis::new(&s, &[0.3, 1.0, 1.7, 2.4], 4).unwrap();
        let r = section_residuals(&pa);
        assert!((r.torsion_iv_skew - 2.0 * r.harmonic).abs() < 1e-12 * pa.scale(), "{r:?}");
        assert!(r.harmonic > 1e-2);
    }

    #[test]
    fn s6_nearly_kahler_identities() {
        let s = s6_nearly_kahler().build().unwrap();
        let pa = PointAnalysis::new(&s, &[0.2, -0.1, 0.3, 0.15, -0.25, 0.1], 4).unwrap();
        let NearlyKahlerCheck::Applicable(r) = nearly_kahler_suite(&pa, 1e-9).unwrap() else {
            panic!("S6 must be nearly Kähler");
        };
        assert!(r.ecxy < 1e-9 && r.ecjxjy < 1e-9 && r.ecxyzw < 1e-9, "{r:?}");
        assert!(r.nabla_u_xi < 1e-9 && r.flatness_relation < 1e-9, "{r:?}");
        assert!((r.psi_norm_sq - 6.0).abs() < 1e-9);
        assert!(r.laplacian_formula < 1e-9, "{r:?}");
        assert!((&pa.ric - 5.0 * Mat::identity(6, 6)).amax() < 1e-9);
        assert!((&pa.lap_omega - 4.0 * &pa.omega).amax() < 1e-9);
    }

    #[test]
    fn conformal_closed_form_is_off_by_four() {
        for n in [2, 3] {
            let p = [0.7, 0.1, 0.3, -0.2, 0.5, 0.4];
            let c = conformal_example_check(n, "sin(x1)", &p[..2 * n], 3).unwrap();
            assert!((c.ratio - 4.0).abs() < 1e-9, "{}", c.ratio);
            assert!(c.harmonic < 1e-12);
        }
    }

    #[test]
    fn conformal_curvature_audit() {
        assert_eq!(sign_audit(), "paper-convention");
        let f = exprlang::parse("sin(x1)*cos(x2)").unwrap();
        let (defect, size) = conformal_curvature_check(3, &f, &[0.2, 1.1, -0.4, 0.3, 0.9, 2.0]).unwrap();
        assert!(defect < 1e-12 * size.max(1.0));
    }

    #[test]
    fn inapplicable_markers() {
        let s = conformal(2, "sin(x1)", true).unwrap().build().unwrap();
        let pa = PointAnalysis::new(&s, &[0.7, 0.1, 0.3, -0.2], 4).unwrap();
        assert!(matches!(
            class_criteria(&pa, CriterionClass::W14, 1e-9).unwrap(),
            ClassCheck::Inapplicable { .. }
        ));
        assert!(matches!(
            class_criteria(&pa, CriterionClass::QuasiKahler, 1e-9).unwrap(),
            ClassCheck::Inapplicable { .. }
        ));
        assert!(matches!(nearly_kahler_suite(&pa, 1e-9).unwrap(), NearlyKahlerCheck::Inapplicable { .. }));
        let ClassCheck::Applicable { criterion, target } =
            class_criteria(&pa, CriterionClass::LocallyConformalAlmostKahler, 1e-9).unwrap()
        else {
            panic!("lcK applies");
        };
        assert!(criterion < 1e-10 && target < 1e-10);
    }
}
