//! U(n)-structures: complex structure fields, Kähler form, intrinsic torsion
//! `ξ_X = −½ J(∇_X J)`, the `u(n)`/`u(n)⊥` splitting and the Gray–Hervella
//! decomposition.
//!
//! Everything pointwise is evaluated in the Cholesky orthonormal frame. In a
//! frame, an endomorphism `A` has matrix `A[a, b] = ⟨A e_b, e_a⟩`, so
//! `⟨ξ_X Y, Z⟩ = xi[X][(Z, Y)]` and `⟨R(X,Y)Z, W⟩ = curv[X][Y][(W, Z)]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{GeometryError, JetTensor, LocalGeometry, MetricField};
use crate::jets::{Jet, Scalar};
use crate::matfield;
use crate::tensor::{FramePack, PointTensor, Slot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("almost Hermitian invariant `{check}` violated at {point:?}: residual {residual:e}")]
    Invariant {
        check: &'static str,
        point: Vec<f64>,
        residual: f64,
    },
    #[error("cross-check `{check}` failed (residual {residual:e}); convention bug")]
    CrossCheck { check: &'static str, residual: f64 },
    #[error("input is not skew (residual {0:e})")]
    NotSkew(f64),
    #[error("random structures need n >= 2, got {0}")]
    TooSmall(usize),
}

/// A metric and a complex structure on a chart, evaluated as jets.
pub trait ChartStructure: Send + Sync {
    fn dim(&self) -> usize;
    /// Row-major `g_ij`.
    fn metric(&self, x: &[Jet]) -> Vec<Jet>;
    /// Row-major `J^i_j`, with `J ∂_j = Σ_i J^i_j ∂_i`.
    fn complex_structure(&self, x: &[Jet]) -> Vec<Jet>;
    fn contains(&self, _point: &[f64]) -> bool {
        true
    }
}

struct MetricOf<'a>(&'a dyn ChartStructure);

impl MetricField for MetricOf<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn metric(&self, x: &[Jet]) -> Vec<Jet> {
        self.0.metric(x)
    }
}

/// Structure-group interface: projectors onto the stabiliser algebra and its complement.
pub trait StructureGroup {
    fn name(&self) -> &'static str;
    fn algebra_part(&self, a: &DMatrix<f64>) -> DMatrix<f64>;
    fn complement_part(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a - self.algebra_part(a)
    }
}

/// U(n) as the stabiliser of a complex structure `J` (frame matrix).
pub struct Unitary<'a>(pub &'a DMatrix<f64>);

impl StructureGroup for Unitary<'_> {
    fn name(&self) -> &'static str {
        "U(n)"
    }
    fn algebra_part(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (a - self.0 * a * self.0) * 0.5
    }
    fn complement_part(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (a + self.0 * a * self.0) * 0.5
    }
}

#[derive(Clone)]
pub struct AlmostHermitianStructure {
    pub name: String,
    pub n: usize,
    pub field: Arc<dyn ChartStructure>,
}

impl std::fmt::Debug for AlmostHermitianStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AlmostHermitianStructure({}, n={})", self.name, self.n)
    }
}

pub const INVARIANT_TOL: f64 = 1e-10;

impl AlmostHermitianStructure {
    pub fn new(name: impl Into<String>, field: Arc<dyn ChartStructure>) -> Self {
        let n = field.dim() / 2;
        AlmostHermitianStructure {
            name: name.into(),
            n,
            field,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Metric and `J` values at a point.
    pub fn values(&self, point: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dim();
        let x = Jet::point(point, 0);
        let g = self.field.metric(&x);
        let j = self.field.complex_structure(&x);
        (
            DMatrix::from_fn(d, d, |a, b| g[a * d + b].value()),
            DMatrix::from_fn(d, d, |a, b| j[a * d + b].value()),
        )
    }

    /// Check `J² = −1` and `⟨JX, JY⟩ = ⟨X, Y⟩` on values and first derivatives.
    pub fn check_invariants(&self, point: &[f64]) -> Result<(), StructureError> {
        let d = self.dim();
        let x = Jet::point(point, 1);
        let g = self.field.metric(&x);
        let j = self.field.complex_structure(&x);
        let jj = matfield::mul(&j, &j, d);
        let gjj = matfield::mul(&matfield::mul(&matfield::transpose(&j, d), &g, d), &j, d);
        let mut sq = 0.0f64;
        let mut compat = 0.0f64;
        for k in 0..d * d {
            let id = if k / d == k % d { 1.0 } else { 0.0 };
            for (c, coeff) in jj[k].coeffs().iter().enumerate() {
                let want = if c == 0 { -id } else { 0.0 };
                sq = sq.max((coeff - want).abs());
            }
            for (a, b) in gjj[k].coeffs().iter().zip(g[k].coeffs()) {
                compat = compat.max((a - b).abs());
            }
        }
        let scale = 1.0 + g.iter().map(|v| v.value().abs()).fold(0.0, f64::max);
        if sq > INVARIANT_TOL * scale {
            return Err(StructureError::Invariant {
                check: "J^2 = -Id",
                point: point.to_vec(),
                residual: sq,
            });
        }
        if compat > INVARIANT_TOL * scale {
            return Err(StructureError::Invariant {
                check: "<JX,JY> = <X,Y>",
                point: point.to_vec(),
                residual: compat,
            });
        }
        Ok(())
    }

    pub fn local_geometry(&self, point: &[f64], degree: usize) -> Result<LocalGeometry, GeometryError> {
        if !self.field.contains(point) {
            return Err(GeometryError::OutsideDomain(point.to_vec()));
        }
        LocalGeometry::new(&MetricOf(self.field.as_ref()), point, degree)
    }

    pub fn j_jets(&self, point: &[f64], degree: usize) -> JetTensor {
        let d = self.dim();
        let comps = self.field.complex_structure(&Jet::point(point, degree));
        JetTensor::from_comps(d, &[Slot::Up, Slot::Down], comps)
    }
}

/// Kähler form `ω(X, Y) = ⟨X, JY⟩`, i.e. `ω_ij = g_im J^m_j`.
pub fn kahler_form(s: &AlmostHermitianStructure, point: &[f64], degree: usize) -> JetTensor {
    let d = s.dim();
    let x = Jet::point(point, degree);
    let g = s.field.metric(&x);
    let j = s.field.complex_structure(&x);
    let w = matfield::mul(&g, &j, d);
    JetTensor::from_comps(d, &[Slot::Down, Slot::Down], w)
}

/// Coordinate components of everything the diagnostics need at one point.
#[derive(Debug, Clone)]
pub struct CoordinateData {
    pub point: Vec<f64>,
    pub n: usize,
    pub metric: DMatrix<f64>,
    pub j: PointTensor,
    pub nabla_j: PointTensor,
    pub xi: PointTensor,
    pub nabla_xi: PointTensor,
    pub omega: PointTensor,
    pub nabla_omega: PointTensor,
    pub lap_omega: PointTensor,
    pub lap_j: PointTensor,
    pub curvature: PointTensor,
    pub nabla_curvature: PointTensor,
    pub ric: PointTensor,
    pub ric_star: PointTensor,
    pub nabla_ric_star: PointTensor,
}

impl CoordinateData {
    /// Requires jet degree ≥ 3.
    pub fn compute(
        s: &AlmostHermitianStructure,
        point: &[f64],
        degree: usize,
    ) -> Result<CoordinateData, StructureError> {
        if degree < 3 {
            return Err(GeometryError::InsufficientDegree { need: 3, have: degree }.into());
        }
        s.check_invariants(point)?;
        let d = s.dim();
        let geo = s.local_geometry(point, degree)?;
        let j = s.j_jets(point, degree);
        let nabla_j = geo.covariant_derivative(&j)?;
        let j_low = j.truncate(degree - 1);
        let xi = JetTensor::from_fn(d, &[Slot::Down, Slot::Up, Slot::Down], |idx| {
            let (c, a, b) = (idx[0], idx[1], idx[2]);
            let mut acc = Jet::zero(j_low.comps()[0].space());
            for m in 0..d {
                acc.add_product(-0.5, j_low.get(&[a, m]), nabla_j.get(&[c, m, b]));
            }
            acc
        });
        let nabla_xi = geo.covariant_derivative(&xi)?;
        let omega = kahler_form(s, point, degree);
        let nabla_omega = geo.covariant_derivative(&omega)?;
        let lap_omega = geo.connection_laplacian(&omega)?;
        let lap_j = geo.connection_laplacian(&j)?;
        let rj = geo.curvature_jets()?;
        let nabla_curvature = geo.covariant_derivative(&rj)?.value();
        let curvature = rj.value();
        let ric = PointTensor::from_fn(d, &[Slot::Down, Slot::Down], |idx| {
            (0..d).map(|i| curvature.get(&[idx[0], i, i, idx[1]])).sum()
        });
        let ric_star_j = ric_star_jets(&geo, &rj, &j, &omega);
        let nabla_ric_star = geo.covariant_derivative(&ric_star_j)?.value();
        Ok(CoordinateData {
            point: point.to_vec(),
            n: s.n,
            metric: geo.metric(),
            j: j.value(),
            nabla_j: nabla_j.value(),
            xi: xi.value(),
            nabla_xi: nabla_xi.value(),
            omega: omega.value(),
            nabla_omega: nabla_omega.value(),
            lap_omega,
            lap_j,
            curvature,
            nabla_curvature,
            ric,
            ric_star: ric_star_j.value(),
            nabla_ric_star,
        })
    }
}

/// `Ric*(∂_x, ∂_y) = g^{pq} ⟨R(∂_x, ∂_p) J∂_y, J∂_q⟩` as jets.
fn ric_star_jets(geo: &LocalGeometry, rj: &JetTensor, j: &JetTensor, omega: &JetTensor) -> JetTensor {
    let d = geo.dim();
    let deg = rj.degree();
    let j = j.truncate(deg);
    let omega = omega.truncate(deg);
    let ginv = geo.inverse_metric_jets().truncate(deg);
    let space = rj.comps()[0].space().clone();
    // ⟨R(x,p)J∂_y, J∂_q⟩ = Σ_{l,z} R[x,p,l,z] J^z_y ω_{lq}
    let c = JetTensor::from_fn(d, &[Slot::Down; 4], |idx| {
        let (x, p, q, z) = (idx[0], idx[1], idx[2], idx[3]);
        let mut acc = Jet::zero(&space);
        for l in 0..d {
            acc.add_product(1.0, rj.get(&[x, p, l, z]), omega.get(&[l, q]));
        }
        acc
    });
    JetTensor::from_fn(d, &[Slot::Down, Slot::Down], |idx| {
        let (x, y) = (idx[0], idx[1]);
        let mut acc = Jet::zero(&space);
        for p in 0..d {
            for q in 0..d {
                let mut inner = Jet::zero(&space);
                for z in 0..d {
                    inner.add_product(1.0, c.get(&[x, p, q, z]), j.get(&[z, y]));
                }
                acc.add_product(1.0, ginv.get(&[p, q]), &inner);
            }
        }
        acc
    })
}

pub type Mat = DMatrix<f64>;

fn split3(t: &PointTensor) -> Vec<Mat> {
    let d = t.dim();
    (0..d)
        .map(|c| Mat::from_row_slice(d, d, &t.data()[c * d * d..(c + 1) * d * d]))
        .collect()
}

fn split4(t: &PointTensor) -> Vec<Vec<Mat>> {
    let d = t.dim();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| {
                    let o = (a * d + b) * d * d;
                    Mat::from_row_slice(d, d, &t.data()[o..o + d * d])
                })
                .collect()
        })
        .collect()
}

/// Action of a skew endomorphism on a torsion-like family `T_Y`:
/// `(A·T)_Y = [A, T_Y] − T_{AY}`.
pub fn act_on_family(a: &Mat, t: &[Mat]) -> Vec<Mat> {
    let d = t.len();
    (0..d)
        .map(|y| {
            let mut out = a * &t[y] - &t[y] * a;
            for m in 0..d {
                out -= &t[m] * a[(m, y)];
            }
            out
        })
        .collect()
}

/// Action on a bilinear form: `(A·b)(X, Y) = −b(AX, Y) − b(X, AY)`.
pub fn act_on_form(a: &Mat, b: &Mat) -> Mat {
    -(a.transpose() * b) - b * a
}

/// Frame-component snapshot of a structure at one point.
#[derive(Debug, Clone)]
pub struct PointAnalysis {
    pub point: Vec<f64>,
    pub n: usize,
    pub frame: FramePack,
    pub j: Mat,
    pub omega: Mat,
    pub nabla_j: Vec<Mat>,
    /// `xi[c]` is the matrix of `ξ_{e_c}`.
    pub xi: Vec<Mat>,
    /// `nabla_xi[e][c]` is the matrix of `(∇_{e_e} ξ)_{e_c}`.
    pub nabla_xi: Vec<Vec<Mat>>,
    pub nabla_u_xi: Vec<Vec<Mat>>,
    /// `nabla_omega[c][(x, y)] = (∇_{e_c} ω)(e_x, e_y)`.
    pub nabla_omega: Vec<Mat>,
    pub lap_omega: Mat,
    pub lap_j: Mat,
    /// `curv[x][y]` is the matrix of `R(e_x, e_y)`.
    pub curv: Vec<Vec<Mat>>,
    pub nabla_curv: Vec<Vec<Vec<Mat>>>,
    pub ric: Mat,
    pub ric_star: Mat,
    pub nabla_ric_star: Vec<Mat>,
    /// `d*ω(X) = −(∇_{e_i} ω)(e_i, X)`.
    pub d_star_omega: DVector<f64>,
    /// `ξ_{e_i} e_i`.
    pub lee: DVector<f64>,
}

impl PointAnalysis {
    pub fn new(s: &AlmostHermitianStructure, point: &[f64], degree: usize) -> Result<Self, StructureError> {
        let data = CoordinateData::compute(s, point, degree)?;
        let frame = FramePack::new(point, &data.metric).map_err(GeometryError::from)?;
        Ok(PointAnalysis::from_coordinates(&data, &frame))
    }

    pub fn from_coordinates(data: &CoordinateData, frame: &FramePack) -> Self {
        let d = 2 * data.n;
        let f = |t: &PointTensor| frame.to_frame(t);
        let j = f(&data.j).matrix();
        let xi = split3(&f(&data.xi));
        let nabla_xi: Vec<Vec<Mat>> = split4(&f(&data.nabla_xi));
        let nabla_u_xi = (0..d)
            .map(|e| {
                let act = act_on_family(&xi[e], &xi);
                nabla_xi[e].iter().zip(act).map(|(a, b)| a + b).collect()
            })
            .collect();
        let nabla_omega = split3(&f(&data.nabla_omega));
        let d_star_omega = DVector::from_fn(d, |x, _| -(0..d).map(|i| nabla_omega[i][(i, x)]).sum::<f64>());
        let lee = DVector::from_fn(d, |a, _| (0..d).map(|i| xi[i][(a, i)]).sum());
        let nr = f(&data.nabla_curvature);
        let nabla_curv = (0..d)
            .map(|w| {
                (0..d)
                    .map(|x| {
                        (0..d)
                            .map(|y| {
                                let o = ((w * d + x) * d + y) * d * d;
                                Mat::from_row_slice(d, d, &nr.data()[o..o + d * d])
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        PointAnalysis {
            point: data.point.clone(),
            n: data.n,
            frame: frame.clone(),
            omega: f(&data.omega).matrix(),
            nabla_j: split3(&f(&data.nabla_j)),
            j,
            xi,
            nabla_xi,
            nabla_u_xi,
            nabla_omega,
            lap_omega: f(&data.lap_omega).matrix(),
            lap_j: f(&data.lap_j).matrix(),
            curv: split4(&f(&data.curvature)),
            nabla_curv,
            ric: f(&data.ric).matrix(),
            ric_star: f(&data.ric_star).matrix(),
            nabla_ric_star: split3(&f(&data.nabla_ric_star)),
            d_star_omega,
            lee,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// `ψ[x, y, z] = ⟨ξ_X Y, Z⟩`.
    pub fn psi(&self) -> Psi {
        Psi::from_family(&self.xi)
    }

    /// `⟨R(X,Y)Z, W⟩`.
    pub fn r4(&self, x: usize, y: usize, z: usize, w: usize) -> f64 {
        self.curv[x][y][(w, z)]
    }

    /// Extended norm of ξ.
    pub fn xi_norm(&self) -> f64 {
        self.xi.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn curvature_norm(&self) -> f64 {
        self.curv
            .iter()
            .flatten()
            .map(|m| m.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Residual normalisation `1 + ‖ξ‖ + ‖R‖`.
    pub fn scale(&self) -> f64 {
        1.0 + self.xi_norm() + self.curvature_norm()
    }

    /// `ξ_V` for a frame vector `V`.
    pub fn xi_along(&self, v: &DVector<f64>) -> Mat {
        self.xi
            .iter()
            .enumerate()
            .fold(Mat::zeros(self.dim(), self.dim()), |acc, (m, x)| acc + x * v[m])
    }
}

/// A (0,3) frame tensor `ψ[x, y, z]`, used for `⟨ξ_X Y, Z⟩` and its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Psi {
    pub d: usize,
    pub data: Vec<f64>,
}

impl Psi {
    pub fn zeros(d: usize) -> Psi {
        Psi {
            d,
            data: vec![0.0; d * d * d],
        }
    }

    pub fn from_fn(d: usize, f: impl Fn(usize, usize, usize) -> f64) -> Psi {
        let mut p = Psi::zeros(d);
        for x in 0..d {
            for y in 0..d {
                for z in 0..d {
                    p.data[(x * d + y) * d + z] = f(x, y, z);
                }
            }
        }
        p
    }

    pub fn from_family(xi: &[Mat]) -> Psi {
        Psi::from_fn(xi.len(), |x, y, z| xi[x][(z, y)])
    }

    pub fn to_family(&self) -> Vec<Mat> {
        (0..self.d)
            .map(|x| Mat::from_fn(self.d, self.d, |z, y| self.at(x, y, z)))
            .collect()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[(x * self.d + y) * self.d + z]
    }

    pub fn add(&self, o: &Psi) -> Psi {
        Psi {
            d: self.d,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Psi) -> Psi {
        Psi {
            d: self.d,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn dot(&self, o: &Psi) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Σ_i ψ[i, i, z]`.
    pub fn trace12(&self) -> DVector<f64> {
        DVector::from_fn(self.d, |z, _| (0..self.d).map(|i| self.at(i, i, z)).sum())
    }

    /// `ψ(JX, JY, Z)`.
    pub fn jj(&self, j: &Mat) -> Psi {
        let d = self.d;
        Psi::from_fn(d, |x, y, z| {
            let mut s = 0.0;
            for m in 0..d {
                for k in 0..d {
                    s += j[(m, x)] * j[(k, y)] * self.at(m, k, z);
                }
            }
            s
        })
    }
}

/// `A_u = ½(A − JAJ)`, `A_⊥ = ½(A + JAJ)`.
pub fn project_u_uperp(a: &Mat, j: &Mat) -> Result<(Mat, Mat), StructureError> {
    let skew = (a + a.transpose()).amax();
    if skew > 1e-9 * (1.0 + a.amax()) {
        return Err(StructureError::NotSkew(skew));
    }
    let g = Unitary(j);
    Ok((g.algebra_part(a), g.complement_part(a)))
}

/// The four Gray–Hervella parts of a torsion form.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayHervella {
    pub parts: [Psi; 4],
}

impl GrayHervella {
    pub fn norms(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.parts[k].norm())
    }
}

/// `⟨ξ₄_X Y, Z⟩` from `d*ω`:
/// `ξ₄ = −1/(4(n−1)) (X♭∧d*ω − JX♭∧Jd*ω)` read as `⟨ξ₄_X Y, JZ⟩`, `Jθ(Z) = −θ(JZ)`.
pub fn w4_from_dstar_omega(theta: &DVector<f64>, j: &Mat, n: usize) -> Psi {
    let d = 2 * n;
    let jt = -(j.transpose() * theta);
    let jx = j.transpose();
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let c = -1.0 / (4.0 * (n as f64 - 1.0));
    let g = Psi::from_fn(d, |x, y, z| {
        c * (delta(x, y) * theta[z] - delta(x, z) * theta[y] - jx[(x, y)] * jt[z] + jx[(x, z)] * jt[y])
    });
    Psi::from_fn(d, |x, y, w| -(0..d).map(|m| g.at(x, y, m) * j[(m, w)]).sum::<f64>())
}

/// `2(n−1)ξ₄_X = X♭⊗v − v♭⊗X − JX♭⊗Jv + Jv♭⊗JX` with `v = ξ_{e_i}e_i`.
pub fn w4_from_lee(v: &DVector<f64>, j: &Mat, n: usize) -> Psi {
    let d = 2 * n;
    let jv = j * v;
    let jx = j.transpose();
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let c = 1.0 / (2.0 * (n as f64 - 1.0));
    Psi::from_fn(d, |x, y, z| {
        c * (delta(x, y) * v[z] - v[y] * delta(x, z) - jx[(x, y)] * jv[z] + jv[y] * jx[(x, z)])
    })
}

pub const CROSS_CHECK_TOL: f64 = 1e-9;

/// Split `ψ` into `W₁..W₄` parts. `theta` is `d*ω` when known; otherwise it is
/// derived from the trace of `ψ` through `d*ω = 2Jv`.
pub fn gray_hervella_decompose(
    psi: &Psi,
    j: &Mat,
    n: usize,
    theta: Option<&DVector<f64>>,
) -> Result<GrayHervella, StructureError> {
    let d = psi.d;
    if n < 2 {
        return Ok(GrayHervella {
            parts: std::array::from_fn(|_| Psi::zeros(d)),
        });
    }
    let a = Psi {
        d,
        data: psi
            .data
            .iter()
            .zip(&psi.jj(j).data)
            .map(|(p, q)| 0.5 * (p - q))
            .collect(),
    };
    let b = psi.sub(&a);
    let w1 = Psi::from_fn(d, |x, y, z| (a.at(x, y, z) + a.at(y, z, x) + a.at(z, x, y)) / 3.0);
    let w2 = a.sub(&w1);
    let v = psi.trace12();
    let derived = 2.0 * (j * &v);
    let theta = theta.unwrap_or(&derived);
    let w4 = w4_from_dstar_omega(theta, j, n);
    let check = w4.sub(&w4_from_lee(&v, j, n)).max_abs();
    if check > CROSS_CHECK_TOL * (1.0 + psi.max_abs()) {
        return Err(StructureError::CrossCheck {
            check: "torsionw4 vs w4expre",
            residual: check,
        });
    }
    let w3 = b.sub(&w4);
    Ok(GrayHervella {
        parts: [w1, w2, w3, w4],
    })
}

/// Intrinsic torsion at a point with its Gray–Hervella parts and Lee vector.
#[derive(Debug, Clone)]
pub struct TorsionTensor {
    pub point: Vec<f64>,
    pub xi: Vec<Mat>,
    pub components: GrayHervella,
    pub lee_vector: DVector<f64>,
}

impl TorsionTensor {
    pub fn norm(&self) -> f64 {
        self.xi.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Max residuals of skewness and `ξJ + Jξ = 0`.
pub fn torsion_invariants(xi: &[Mat], j: &Mat) -> (f64, f64) {
    let skew = xi.iter().map(|m| (m + m.transpose()).amax()).fold(0.0, f64::max);
    let anti = xi.iter().map(|m| (m * j + j * m).amax()).fold(0.0, f64::max);
    (skew, anti)
}

/// `ξ_{e_i} e_i`, cross-checked against `−½ J (d*ω)♯`.
pub fn lee_vector(pa: &PointAnalysis) -> Result<DVector<f64>, StructureError> {
    let other = -0.5 * (&pa.j * &pa.d_star_omega);
    let residual = (&pa.lee - other).amax();
    if residual > CROSS_CHECK_TOL * pa.scale() {
        return Err(StructureError::CrossCheck {
            check: "2 xi_{e_i} e_i = -J (d* omega)^sharp",
            residual,
        });
    }
    Ok(pa.lee.clone())
}

/// Residual of `2⟨ξ_X Y, Z⟩ = −(∇_X ω)(Y, JZ)`.
pub fn xi_vs_nabla_omega(pa: &PointAnalysis) -> f64 {
    let d = pa.dim();
    let mut worst = 0.0f64;
    for x in 0..d {
        let rhs = -(&pa.nabla_omega[x] * &pa.j);
        for y in 0..d {
            for z in 0..d {
                worst = worst.max((2.0 * pa.xi[x][(z, y)] - rhs[(y, z)]).abs());
            }
        }
    }
    worst
}

pub fn intrinsic_torsion(pa: &PointAnalysis) -> Result<TorsionTensor, StructureError> {
    let residual = xi_vs_nabla_omega(pa);
    if residual > CROSS_CHECK_TOL * pa.scale() {
        return Err(StructureError::CrossCheck {
            check: "2<xi_X Y, Z> = -(nabla_X omega)(Y, JZ)",
            residual,
        });
    }
    let (skew, anti) = torsion_invariants(&pa.xi, &pa.j);
    if skew.max(anti) > INVARIANT_TOL * pa.scale() {
        return Err(StructureError::CrossCheck {
            check: "xi in T* x u(n)^perp",
            residual: skew.max(anti),
        });
    }
    let lee = lee_vector(pa)?;
    let components = gray_hervella_decompose(&pa.psi(), &pa.j, pa.n, Some(&pa.d_star_omega))?;
    Ok(TorsionTensor {
        point: pa.point.clone(),
        xi: pa.xi.clone(),
        components,
        lee_vector: lee,
    })
}

/// `∇^U_X T = ∇_X T + ξ_X·T` on orthonormal frame components; `nabla_t` has the
/// direction slot first. In an orthonormal frame the skew action looks the same
/// on every slot: `Σ_m ξ_X[a, m] T[..m..]`.
pub fn minimal_derivative(xi: &[Mat], t: &PointTensor, nabla_t: &PointTensor) -> PointTensor {
    let d = xi.len();
    let r = t.rank();
    let block = d.pow(r as u32);
    let mut out = nabla_t.clone();
    let data = t.data();
    let outd = out.data_mut();
    let mut idx = vec![0; r];
    for flat in 0..block {
        for (s, &a) in idx.iter().enumerate() {
            let stride = d.pow((r - 1 - s) as u32);
            let base = flat - a * stride;
            for (c, x) in xi.iter().enumerate() {
                outd[c * block + flat] += (0..d).map(|m| x[(a, m)] * data[base + m * stride]).sum::<f64>();
            }
        }
        crate::tensor::increment(&mut idx, d);
    }
    out
}

/// Max of `‖∇^U J‖` and `‖∇^U ω‖`; both vanish when the action convention is right.
pub fn minimal_connection_contract(pa: &PointAnalysis) -> f64 {
    let d = pa.dim();
    let lift3 = |mats: &[Mat]| PointTensor::from_fn(d, &[Slot::Down; 3], |i| mats[i[0]][(i[1], i[2])]);
    let lift2 = |m: &Mat| PointTensor::from_fn(d, &[Slot::Down; 2], |i| m[(i[0], i[1])]);
    let nj = minimal_derivative(&pa.xi, &lift2(&pa.j), &lift3(&pa.nabla_j));
    let nw = minimal_derivative(&pa.xi, &lift2(&pa.omega), &lift3(&pa.nabla_omega));
    nj.max_abs().max(nw.max_abs())
}

/// Helper for the flat-metric and curved random fields: `½(M − Mᵀ)` of
/// trigonometric polynomials with seeded coefficients.
#[derive(Debug, Clone)]
struct TrigField {
    d: usize,
    freqs: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigField {
    fn new(rng: &mut ChaCha8Rng, d: usize, freqs: usize, amplitude: f64) -> Self {
        let count = d * d * d * freqs;
        let mut draw = || (0..count).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect();
        let cos = draw();
        let sin = draw();
        TrigField { d, freqs, cos, sin }
    }

    /// `M_ab(x) = Σ_{c,k} C_abck cos(k x_c) + S_abck sin(k x_c)`.
    fn raw<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let d = self.d;
        let trig: Vec<(S, S)> = x
            .iter()
            .flat_map(|xc| (1..=self.freqs).map(move |k| ((xc.clone() * k as f64).cos(), (xc.clone() * k as f64).sin())))
            .collect();
        (0..d * d)
            .map(|ab| {
                let mut acc = x[0].lift(0.0);
                for (ck, (c, s)) in trig.iter().enumerate() {
                    let o = ab * d * self.freqs + ck;
                    acc = acc + c.clone() * self.cos[o] + s.clone() * self.sin[o];
                }
                acc
            })
            .collect()
    }

    fn skew<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let m = self.raw(x);
        let mt = matfield::transpose(&m, self.d);
        m.into_iter().zip(mt).map(|(a, b)| (a - b) * 0.5).collect()
    }

    fn symmetric<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let m = self.raw(x);
        let mt = matfield::transpose(&m, self.d);
        m.into_iter().zip(mt).map(|(a, b)| (a + b) * 0.5).collect()
    }
}

/// Standard complex structure `J₀ e_{2k} = e_{2k+1}` (0-based).
pub fn standard_j(n: usize) -> Mat {
    let mut j = Mat::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(2 * k + 1, 2 * k)] = 1.0;
        j[(2 * k, 2 * k + 1)] = -1.0;
    }
    j
}

fn lift_matrix<S: Scalar>(seed: &S, m: &Mat) -> Vec<S> {
    let d = m.nrows();
    (0..d * d).map(|k| seed.lift(m[(k / d, k % d)])).collect()
}

/// `J = e^{S} J₀ e^{−S}` with `S` a 2π-periodic skew trigonometric field; flat metric
/// unless `metric` is set, in which case `g = exp(H)` and `J` is carried over by the
/// Cholesky frame of `g`.
#[derive(Debug, Clone)]
pub struct RandomField {
    n: usize,
    s: TrigField,
    metric: Option<TrigField>,
}

impl RandomField {
    /// `J` at a point, generic over plain values and jets.
    pub fn j_matrix<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let d = 2 * self.n;
        let q = matfield::exp(&self.s.skew(x), d);
        let j0 = lift_matrix(&x[0], &standard_j(self.n));
        let k0 = matfield::mul(&matfield::mul(&q, &j0, d), &matfield::transpose(&q, d), d);
        match &self.metric {
            None => k0,
            Some(_) => {
                // E = L^{-T} frame, J = E K0 E^{-1} = L^{-T} K0 L^T
                let l = matfield::cholesky(&self.g_matrix(x), d).expect("exp(H) is positive definite");
                let lt = matfield::transpose(&l, d);
                let lti = matfield::inverse(&lt, d).expect("triangular factor invertible");
                matfield::mul(&matfield::mul(&lti, &k0, d), &lt, d)
            }
        }
    }

    pub fn g_matrix<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let d = 2 * self.n;
        match &self.metric {
            None => matfield::identity(&x[0], d),
            Some(h) => matfield::exp(&h.symmetric(x), d),
        }
    }
}

impl ChartStructure for RandomField {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn metric(&self, x: &[Jet]) -> Vec<Jet> {
        self.g_matrix(x)
    }
    fn complex_structure(&self, x: &[Jet]) -> Vec<Jet> {
        self.j_matrix(x)
    }
}

impl RandomField {
    /// Seeded field with first-harmonic skew generator of the given amplitude;
    /// `curved` adds the metric `exp(H)`.
    pub fn new(seed: u64, n: usize, amplitude: f64, curved: bool) -> Result<RandomField, StructureError> {
        if n < 2 {
            return Err(StructureError::TooSmall(n));
        }
        let d = 2 * n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = TrigField::new(&mut rng, d, 1, amplitude);
        let metric = curved.then(|| TrigField::new(&mut rng, d, 1, 0.1));
        Ok(RandomField { n, s, metric })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn random_field(seed: u64, n: usize, amplitude: f64, curved: bool) -> Result<RandomField, StructureError> {
    RandomField::new(seed, n, amplitude, curved)
}

/// Seeded smooth 2π-periodic skew matrix field on `R^d`.
pub fn random_skew_sampler(seed: u64, d: usize, amplitude: f64) -> impl Fn(&[f64]) -> Mat + Sync {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = TrigField::new(&mut rng, d, 1, amplitude);
    move |x: &[f64]| Mat::from_row_slice(d, d, &field.skew(x))
}

/// Random almost Hermitian structure on the flat torus.
pub fn random_structure(seed: u64, n: usize, amplitude: f64) -> Result<AlmostHermitianStructure, StructureError> {
    let f = random_field(seed, n, amplitude, false)?;
    Ok(AlmostHermitianStructure::new(format!("random-{seed}"), Arc::new(f)))
}

/// Random structure on a curved 2π-periodic metric.
pub fn random_curved_structure(
    seed: u64,
    n: usize,
    amplitude: f64,
) -> Result<AlmostHermitianStructure, StructureError> {
    let f = random_field(seed, n, amplitude, true)?;
    Ok(AlmostHermitianStructure::new(format!("random-curved-{seed}"), Arc::new(f)))
}

/// The plain-value field of a flat random structure, for sampling onto grids.
pub fn random_j_sampler(seed: u64, n: usize, amplitude: f64) -> Result<impl Fn(&[f64]) -> Mat + Sync, StructureError> {
    let f = random_field(seed, n, amplitude, false)?;
    let d = 2 * n;
    Ok(move |x: &[f64]| {
        let v = f.j_matrix(x);
        Mat::from_row_slice(d, d, &v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_j_is_complex_structure() {
        let s = random_structure(3, 2, 0.3).unwrap();
        for p in [[0.1, 0.2, 0.3, 0.4], [2.0, -1.0, 0.5, 3.0]] {
            let (g, j) = s.values(&p);
            assert!((&j * &j + Mat::identity(4, 4)).amax() < 1e-12);
            assert!((j.transpose() * &g * &j - &g).amax() < 1e-12);
            s.check_invariants(&p).unwrap();
        }
        let c = random_curved_structure(3, 3, 0.3).unwrap();
        c.check_invariants(&[0.3, 0.1, -0.2, 0.5, 0.7, 1.1]).unwrap();
        assert!(random_structure(1, 1, 0.3).is_err());
    }

    #[test]
    fn zero_amplitude_is_kahler() {
        let s = random_structure(5, 2, 0.0).unwrap();
        let pa = PointAnalysis::new(&s, &[0.3, 0.2, 0.1, 0.0], 3).unwrap();
        assert!(pa.xi_norm() == 0.0);
    }

    #[test]
    fn projections() {
        let j = standard_j(2);
        let (u, p) = project_u_uperp(&j, &j).unwrap();
        assert!((u - &j).amax() < 1e-15 && p.amax() < 1e-15);
        let mut a = Mat::zeros(4, 4);
        a[(0, 2)] = 1.0;
        a[(2, 0)] = -1.0;
        a[(1, 3)] = -1.0;
        a[(3, 1)] = 1.0;
        assert!((&a * &j + &j * &a).amax() < 1e-15);
        let (u, p) = project_u_uperp(&a, &j).unwrap();
        assert!(u.amax() < 1e-15 && (p - &a).amax() < 1e-15);
        assert!(project_u_uperp(&Mat::identity(4, 4), &j).is_err());
    }

    #[test]
    fn torsion_cross_checks_on_curved_structure() {
        let s = random_curved_structure(11, 3, 0.4).unwrap();
        let pa = PointAnalysis::new(&s, &[0.3, -0.4, 1.2, 0.8, -0.6, 0.2], 4).unwrap();
        let t = intrinsic_torsion(&pa).unwrap();
        let sum = t.components.parts.iter().fold(Psi::zeros(6), |acc, p| acc.add(p));
        assert!(sum.sub(&pa.psi()).max_abs() < 1e-14);
        assert!(minimal_connection_contract(&pa) < 1e-9);
        let norms = t.components.norms();
        assert!(norms.iter().all(|v| *v > 1e-3), "{norms:?}");
    }
}
