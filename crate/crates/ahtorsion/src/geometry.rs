//! Levi-Civita connection, curvature and covariant derivatives at a point,
//! computed from jets of the metric.
//!
//! Curvature follows `R(X,Y) = ∇_[X,Y] − [∇_X, ∇_Y]`, the negative of the
//! more common convention. With it `⟨R(X,Y)X,Y⟩` is the sectional curvature
//! and `Ric(X,Y) = ⟨R(X,e_i)Y,e_i⟩` is positive on round spheres.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::jets::{Jet, JetError};
use crate::matfield;
use crate::tensor::{increment, FramePack, PointTensor, Slot, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("metric is not positive definite at {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("metric is not symmetric (defect {0:e})")]
    NotSymmetric(f64),
    #[error("jet degree {have} too low, need {need}")]
    InsufficientDegree { need: usize, have: usize },
    #[error("point {0:?} outside the chart domain")]
    OutsideDomain(Vec<f64>),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A metric on a chart, evaluated as jets.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    /// Row-major `g_ij` in the jet space of `x`.
    fn metric(&self, x: &[Jet]) -> Vec<Jet>;
}

/// Tensor field components near a point, one jet per coordinate component.
#[derive(Debug, Clone)]
pub struct JetTensor {
    dim: usize,
    slots: Vec<Slot>,
    comps: Vec<Jet>,
}

impl JetTensor {
    pub fn from_comps(dim: usize, slots: &[Slot], comps: Vec<Jet>) -> Self {
        assert_eq!(comps.len(), dim.pow(slots.len() as u32), "component count");
        JetTensor {
            dim,
            slots: slots.to_vec(),
            comps,
        }
    }

    pub fn from_fn(dim: usize, slots: &[Slot], mut f: impl FnMut(&[usize]) -> Jet) -> Self {
        let count = dim.pow(slots.len() as u32);
        let mut idx = vec![0; slots.len()];
        let mut comps = Vec::with_capacity(count);
        for _ in 0..count {
            comps.push(f(&idx));
            increment(&mut idx, dim);
        }
        JetTensor::from_comps(dim, slots, comps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn comps(&self) -> &[Jet] {
        &self.comps
    }

    pub fn degree(&self) -> usize {
        self.comps[0].degree()
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.comps[idx.iter().fold(0, |acc, &i| acc * self.dim + i)]
    }

    pub fn truncate(&self, degree: usize) -> JetTensor {
        JetTensor {
            dim: self.dim,
            slots: self.slots.clone(),
            comps: self.comps.iter().map(|c| c.truncate(degree)).collect(),
        }
    }

    /// Values at the base point.
    pub fn value(&self) -> PointTensor {
        PointTensor::from_data(
            self.dim,
            &self.slots,
            self.comps.iter().map(Jet::value).collect(),
        )
        .expect("shape")
    }
}

/// Metric, inverse metric and Christoffel symbols as jets at one point.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    point: Vec<f64>,
    degree: usize,
    g: JetTensor,
    ginv: JetTensor,
    /// `Γ^k_ij` stored as `[k, i, j]`, one degree below the metric.
    gamma: JetTensor,
}

/// Curvature data at a point, coordinate components.
#[derive(Debug, Clone)]
pub struct CurvaturePack {
    pub point: Vec<f64>,
    /// `R(∂_i, ∂_j)^l_k` stored as `[i, j, l, k]`.
    pub r: PointTensor,
    pub ric: PointTensor,
    pub scalar: f64,
    /// `(∇_{∂_w} R)(∂_i, ∂_j)^l_k` stored as `[w, i, j, l, k]`.
    pub nabla_r: Option<PointTensor>,
}

/// Christoffel symbols `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
pub fn christoffel(
    field: &dyn MetricField,
    point: &[f64],
    degree: usize,
) -> Result<JetTensor, GeometryError> {
    Ok(LocalGeometry::new(field, point, degree)?.gamma)
}

impl LocalGeometry {
    pub fn new(field: &dyn MetricField, point: &[f64], degree: usize) -> Result<Self, GeometryError> {
        if degree < 1 {
            return Err(GeometryError::InsufficientDegree { need: 1, have: degree });
        }
        let d = field.dim();
        let x = Jet::point(point, degree);
        let g = field.metric(&x);
        let asym = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| {
                g[i * d + j]
                    .coeffs()
                    .iter()
                    .zip(g[j * d + i].coeffs())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0, f64::max);
        if asym > 1e-12 {
            return Err(GeometryError::NotSymmetric(asym));
        }
        let values: Vec<f64> = g.iter().map(Jet::value).collect();
        if values.iter().any(|v| !v.is_finite()) || matfield::cholesky(&values, d).is_none() {
            return Err(GeometryError::NotPositiveDefinite(point.to_vec()));
        }
        let ginv = matfield::inverse(&g, d)
            .ok_or_else(|| GeometryError::NotPositiveDefinite(point.to_vec()))?;
        let g = JetTensor::from_comps(d, &[Slot::Down, Slot::Down], g);
        let ginv = JetTensor::from_comps(d, &[Slot::Up, Slot::Up], ginv);

        let low = degree - 1;
        let dg: Vec<JetTensor> = (0..d)
            .map(|c| -> Result<JetTensor, JetError> {
                let comps = g
                    .comps
                    .iter()
                    .map(|j| j.derivative(c))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(JetTensor::from_comps(d, &[Slot::Down, Slot::Down], comps))
            })
            .collect::<Result<_, _>>()?;
        let ginv_low = ginv.truncate(low);
        let gamma = JetTensor::from_fn(d, &[Slot::Up, Slot::Down, Slot::Down], |idx| {
            let (k, i, j) = (idx[0], idx[1], idx[2]);
            let mut acc = Jet::zero(ginv_low.comps[0].space());
            for l in 0..d {
                let mut t = dg[i].get(&[j, l]).clone();
                t += dg[j].get(&[i, l]);
                t -= dg[l].get(&[i, j]);
                acc.add_product(0.5, ginv_low.get(&[k, l]), &t);
            }
            acc
        });
        Ok(LocalGeometry {
            point: point.to_vec(),
            degree,
            g,
            ginv,
            gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.dim
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn metric_jets(&self) -> &JetTensor {
        &self.g
    }

    pub fn inverse_metric_jets(&self) -> &JetTensor {
        &self.ginv
    }

    pub fn christoffel(&self) -> &JetTensor {
        &self.gamma
    }

    pub fn metric(&self) -> DMatrix<f64> {
        self.g.value().matrix()
    }

    pub fn inverse_metric(&self) -> DMatrix<f64> {
        self.ginv.value().matrix()
    }

    pub fn frame(&self) -> Result<FramePack, GeometryError> {
        Ok(FramePack::new(&self.point, &self.metric())?)
    }

    /// `∇T` with the direction prepended as a new covariant slot; one jet degree is consumed.
    pub fn covariant_derivative(&self, t: &JetTensor) -> Result<JetTensor, GeometryError> {
        let q = t.degree().min(self.degree);
        if q == 0 {
            return Err(GeometryError::InsufficientDegree { need: 1, have: 0 });
        }
        let d = t.dim;
        let r = t.slots.len();
        let t = t.truncate(q);
        let t_low = t.truncate(q - 1);
        let gamma = self.gamma.truncate(q - 1);
        let mut slots = vec![Slot::Down];
        slots.extend_from_slice(&t.slots);
        let count = d.pow(slots.len() as u32);
        let comps = (0..count)
            .into_par_iter()
            .map(|flat| -> Result<Jet, JetError> {
                let mut idx = vec![0; r + 1];
                let mut rem = flat;
                for k in (0..=r).rev() {
                    idx[k] = rem % d;
                    rem /= d;
                }
                let c = idx[0];
                let inner = &idx[1..];
                let mut acc = t.get(inner).derivative(c)?;
                let mut probe = inner.to_vec();
                for (s, slot) in t.slots.iter().enumerate() {
                    let a = inner[s];
                    for m in 0..d {
                        probe[s] = m;
                        match slot {
                            Slot::Up => acc.add_product(1.0, gamma.get(&[a, c, m]), t_low.get(&probe)),
                            Slot::Down => acc.add_product(-1.0, gamma.get(&[m, c, a]), t_low.get(&probe)),
                        }
                    }
                    probe[s] = a;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(JetTensor::from_comps(d, &slots, comps))
    }

    /// `∇²T` with slots `[X, Y, ...]`, i.e. `∇_X(∇_Y T) − ∇_{∇_X Y} T`.
    pub fn second_cov_derivative(&self, t: &JetTensor) -> Result<JetTensor, GeometryError> {
        if t.degree().min(self.degree) < 2 {
            return Err(GeometryError::InsufficientDegree {
                need: 2,
                have: t.degree().min(self.degree),
            });
        }
        self.covariant_derivative(&self.covariant_derivative(t)?)
    }

    /// Rough Laplacian `∇*∇T = −g^{ab}(∇²T)_{ab}`.
    pub fn connection_laplacian(&self, t: &JetTensor) -> Result<PointTensor, GeometryError> {
        let hess = self.second_cov_derivative(t)?.value();
        Ok(trace_first_pair(&hess, &self.inverse_metric()).scale(-1.0))
    }

    /// Curvature endomorphisms `R(∂_i, ∂_j)^l_k` as jets `[i, j, l, k]`, two degrees below the metric.
    pub fn curvature_jets(&self) -> Result<JetTensor, GeometryError> {
        if self.degree < 2 {
            return Err(GeometryError::InsufficientDegree {
                need: 2,
                have: self.degree,
            });
        }
        let d = self.dim();
        let low = self.degree - 2;
        let dgamma: Vec<Vec<Jet>> = (0..d)
            .map(|c| self.gamma.comps.iter().map(|j| j.derivative(c)).collect())
            .collect::<Result<_, _>>()?;
        let dgam = |c: usize, l: usize, j: usize, k: usize| &dgamma[c][(l * d + j) * d + k];
        let gamma = self.gamma.truncate(low);
        let slots = [Slot::Down, Slot::Down, Slot::Up, Slot::Down];
        Ok(JetTensor::from_fn(d, &slots, |idx| {
            let (i, j, l, k) = (idx[0], idx[1], idx[2], idx[3]);
            // R_std^l_kij, negated
            let mut acc = dgam(j, l, i, k).clone();
            acc -= dgam(i, l, j, k);
            for m in 0..d {
                acc.add_product(-1.0, gamma.get(&[l, i, m]), gamma.get(&[m, j, k]));
                acc.add_product(1.0, gamma.get(&[l, j, m]), gamma.get(&[m, i, k]));
            }
            acc
        }))
    }

    pub fn curvature(&self, with_nabla: bool) -> Result<CurvaturePack, GeometryError> {
        if with_nabla && self.degree < 3 {
            return Err(GeometryError::InsufficientDegree {
                need: 3,
                have: self.degree,
            });
        }
        let rj = self.curvature_jets()?;
        let r = rj.value();
        let d = self.dim();
        let ric = PointTensor::from_fn(d, &[Slot::Down, Slot::Down], |idx| {
            (0..d).map(|i| r.get(&[idx[0], i, i, idx[1]])).sum()
        });
        let ginv = self.inverse_metric();
        let scalar = (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| ginv[(a, b)] * ric.get(&[a, b]))
            .sum();
        let nabla_r = if with_nabla {
            Some(self.covariant_derivative(&rj)?.value())
        } else {
            None
        };
        Ok(CurvaturePack {
            point: self.point.clone(),
            r,
            ric,
            scalar,
            nabla_r,
        })
    }
}

/// `Σ_ab h^{ab} t[a, b, ...]`.
pub(crate) fn trace_first_pair(t: &PointTensor, h: &DMatrix<f64>) -> PointTensor {
    let d = t.dim();
    let rest = &t.slots()[2..];
    let block = d.pow(rest.len() as u32);
    let mut data = vec![0.0; block];
    for a in 0..d {
        for b in 0..d {
            let w = h[(a, b)];
            let base = (a * d + b) * block;
            for (k, v) in data.iter_mut().enumerate() {
                *v += w * t.data()[base + k];
            }
        }
    }
    PointTensor::from_data(d, rest, data).expect("shape")
}
