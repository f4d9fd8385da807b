//! Built-in geometries: flat Kähler space, conformal changes of it, the Hopf
//! cylinder chart and the nearly Kähler six-sphere.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{self, Expr, ParseError};
use crate::jets::{Jet, Scalar};
use crate::matfield;
use crate::unstruct::{
    random_curved_structure, random_structure, standard_j, AlmostHermitianStructure, ChartStructure,
    StructureError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("n must be at least {min}, got {n}")]
    Dimension { n: usize, min: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("expression uses x{var} but the chart has dimension {dim}")]
    Variable { var: usize, dim: usize },
    #[error("f is not 2π-periodic in x{axis}: mismatch {mismatch:e}")]
    NotPeriodic { axis: usize, mismatch: f64 },
    #[error("f is not finite at {0:?}")]
    NotFinite(Vec<f64>),
    #[error("domain {0:?} touches the excluded set")]
    BadDomain(Domain),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// Sampling region of a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `inner < |x| < outer`.
    Annulus { inner: f64, outer: f64 },
    /// `|x| < radius`.
    Ball { radius: f64 },
}

impl Domain {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Domain {
        Domain::Box {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| a <= v && v <= b),
            Domain::Annulus { inner, outer } => *inner < r && r < *outer,
            Domain::Ball { radius } => r < *radius,
        }
    }

    /// Map a point of the unit cube into the domain. Radial shapes use
    /// `u[0]` for the radius and the rest for a direction.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Domain::Box { lo, hi } => u.iter().zip(lo.iter().zip(hi)).map(|(t, (a, b))| a + t * (b - a)).collect(),
            Domain::Annulus { inner, outer } => radial(u, |t| inner + (0.05 + 0.9 * t) * (outer - inner)),
            Domain::Ball { radius } => radial(u, |t| 0.95 * t * radius),
        }
    }
}

fn radial(u: &[f64], radius: impl Fn(f64) -> f64) -> Vec<f64> {
    let dir: Vec<f64> = u.iter().map(|t| 2.0 * t - 1.0).collect();
    let dir: Vec<f64> = if dir.iter().all(|v| v.abs() < 1e-12) {
        let mut e = vec![0.0; u.len()];
        e[0] = 1.0;
        e
    } else {
        dir
    };
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = radius(u[0]);
    dir.iter().map(|v| r * v / norm).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricKind {
    Flat,
    Conformal { f: String },
    S6Round,
    /// `exp(H)` with a seeded trigonometric symmetric `H`.
    RandomCurved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComplexKind {
    Standard,
    S6Cross,
    Conjugated { seed: u64, amplitude: f64 },
}

/// What the test suite expects of a catalog geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub class: Option<String>,
    pub harmonic: Option<bool>,
    pub harmonic_map: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub name: String,
    pub n: usize,
    pub metric: MetricKind,
    pub complex: ComplexKind,
    pub domain: Domain,
    pub periodic: bool,
    pub jet_degree: usize,
    pub expected: Expected,
}

pub const DEFAULT_JET_DEGREE: usize = 4;

pub fn flat_kahler(n: usize) -> Result<GeometrySpec, CatalogError> {
    if n < 1 {
        return Err(CatalogError::Dimension { n, min: 1 });
    }
    Ok(GeometrySpec {
        name: "flat".into(),
        n,
        metric: MetricKind::Flat,
        complex: ComplexKind::Standard,
        domain: Domain::cube(2 * n, 0.0, 2.0 * PI),
        periodic: true,
        jet_degree: DEFAULT_JET_DEGREE,
        expected: Expected {
            class: Some("Kähler".into()),
            harmonic: Some(true),
            harmonic_map: Some(true),
        },
    })
}

/// `g = e^f δ` with the standard `J`.
pub fn conformal(n: usize, f: &str, periodic: bool) -> Result<GeometrySpec, CatalogError> {
    if n < 2 {
        return Err(CatalogError::Dimension { n, min: 2 });
    }
    let expr = exprlang::parse(f)?;
    check_vars(&expr, 2 * n)?;
    let domain = Domain::cube(2 * n, 0.0, 2.0 * PI);
    if periodic {
        check_periodic(&expr, 2 * n)?;
    }
    let constant = expr.max_var() == 0;
    Ok(GeometrySpec {
        name: "conformal".into(),
        n,
        metric: MetricKind::Conformal { f: f.to_string() },
        complex: ComplexKind::Standard,
        domain,
        periodic,
        jet_degree: DEFAULT_JET_DEGREE,
        expected: Expected {
            class: Some(if constant { "Kähler" } else { "W4" }.into()),
            harmonic: Some(true),
            harmonic_map: None,
        },
    })
}

/// `C^n∖{0}` with `g = |z|^{-2} δ`, sampled on the annulus `0.5 < |z| < 2`.
pub fn hopf_chart(n: usize) -> Result<GeometrySpec, CatalogError> {
    hopf_chart_on(n, 0.5, 2.0)
}

pub fn hopf_chart_on(n: usize, inner: f64, outer: f64) -> Result<GeometrySpec, CatalogError> {
    if n < 2 {
        return Err(CatalogError::Dimension { n, min: 2 });
    }
    let domain = Domain::Annulus { inner, outer };
    if !(inner > 0.0 && outer > inner) {
        return Err(CatalogError::BadDomain(domain));
    }
    let squares: Vec<String> = (1..=2 * n).map(|k| format!("x{k}^2")).collect();
    Ok(GeometrySpec {
        name: "hopf".into(),
        n,
        metric: MetricKind::Conformal {
            f: format!("-log({})", squares.join(" + ")),
        },
        complex: ComplexKind::Standard,
        domain,
        periodic: false,
        jet_degree: DEFAULT_JET_DEGREE,
        expected: Expected {
            class: Some("W4".into()),
            harmonic: Some(true),
            harmonic_map: Some(true),
        },
    })
}

/// Round `S⁶` in the graph chart over `|x| < 0.9` with `J_p X = p × X`.
pub fn s6_nearly_kahler() -> GeometrySpec {
    GeometrySpec {
        name: "s6".into(),
        n: 3,
        metric: MetricKind::S6Round,
        complex: ComplexKind::S6Cross,
        domain: Domain::Ball { radius: 0.9 },
        periodic: false,
        jet_degree: DEFAULT_JET_DEGREE,
        expected: Expected {
            class: Some("W1".into()),
            harmonic: Some(true),
            harmonic_map: Some(true),
        },
    }
}

/// Seeded structure `e^S J₀ e^{−S}`, flat or on a seeded curved metric.
pub fn random(n: usize, seed: u64, amplitude: f64, curved: bool) -> Result<GeometrySpec, CatalogError> {
    if n < 2 {
        return Err(CatalogError::Dimension { n, min: 2 });
    }
    Ok(GeometrySpec {
        name: "random".into(),
        n,
        metric: if curved { MetricKind::RandomCurved } else { MetricKind::Flat },
        complex: ComplexKind::Conjugated { seed, amplitude },
        domain: Domain::cube(2 * n, 0.0, 2.0 * PI),
        periodic: true,
        jet_degree: DEFAULT_JET_DEGREE,
        expected: Expected {
            class: None,
            harmonic: None,
            harmonic_map: None,
        },
    })
}

fn check_vars(expr: &Expr, dim: usize) -> Result<(), CatalogError> {
    let var = expr.max_var();
    if var > dim {
        return Err(CatalogError::Variable { var, dim });
    }
    Ok(())
}

fn check_periodic(expr: &Expr, dim: usize) -> Result<(), CatalogError> {
    let probes = [0.13, 0.71, 1.9, 3.3, 5.2];
    for axis in 0..dim {
        for (k, &t) in probes.iter().enumerate() {
            let mut x: Vec<f64> = (0..dim).map(|i| probes[(i + k) % probes.len()] + 0.1 * i as f64).collect();
            x[axis] = t;
            let a = expr.eval(&x).map_err(|_| CatalogError::NotFinite(x.clone()))?;
            x[axis] = t + 2.0 * PI;
            let b = expr.eval(&x).map_err(|_| CatalogError::NotFinite(x.clone()))?;
            let mismatch = (a - b).abs();
            if !(mismatch <= 1e-9 * (1.0 + a.abs())) {
                return Err(CatalogError::NotPeriodic { axis: axis + 1, mismatch });
            }
        }
    }
    Ok(())
}

impl GeometrySpec {
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn build(&self) -> Result<AlmostHermitianStructure, CatalogError> {
        let n = self.n;
        match (&self.metric, &self.complex) {
            (MetricKind::Flat, ComplexKind::Standard) => Ok(AlmostHermitianStructure::new(
                "flat",
                Arc::new(ConformalField::flat(n)),
            )),
            (MetricKind::Conformal { f }, ComplexKind::Standard) => {
                let expr = exprlang::parse(f)?;
                check_vars(&expr, 2 * n)?;
                if self.periodic {
                    check_periodic(&expr, 2 * n)?;
                }
                let field = ConformalField {
                    n,
                    f: Some(expr),
                    domain: self.domain.clone(),
                };
                Ok(AlmostHermitianStructure::new(self.name.clone(), Arc::new(field)))
            }
            (MetricKind::S6Round, ComplexKind::S6Cross) => {
                if !matches!(self.domain, Domain::Ball { radius } if radius < 1.0) {
                    return Err(CatalogError::BadDomain(self.domain.clone()));
                }
                Ok(AlmostHermitianStructure::new(
                    "s6",
                    Arc::new(SixSphere {
                        domain: self.domain.clone(),
                    }),
                ))
            }
            (MetricKind::Flat, ComplexKind::Conjugated { seed, amplitude }) => {
                Ok(random_structure(*seed, n, *amplitude)?)
            }
            (MetricKind::RandomCurved, ComplexKind::Conjugated { seed, amplitude }) => {
                Ok(random_curved_structure(*seed, n, *amplitude)?)
            }
            _ => Err(CatalogError::BadDomain(self.domain.clone())),
        }
    }
}

/// `e^f δ` with the standard complex structure; `f = None` is flat.
#[derive(Debug, Clone)]
pub struct ConformalField {
    n: usize,
    f: Option<Expr>,
    domain: Domain,
}

impl ConformalField {
    pub fn flat(n: usize) -> Self {
        ConformalField {
            n,
            f: None,
            domain: Domain::cube(2 * n, f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl ChartStructure for ConformalField {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn metric(&self, x: &[Jet]) -> Vec<Jet> {
        let scale = match &self.f {
            None => x[0].lift(1.0),
            Some(f) => match f.eval(x) {
                Ok(v) => v.exp(),
                Err(_) => x[0].lift(f64::NAN),
            },
        };
        let d = self.dim();
        (0..d * d)
            .map(|k| if k / d == k % d { scale.clone() } else { x[0].lift(0.0) })
            .collect()
    }

    fn complex_structure(&self, x: &[Jet]) -> Vec<Jet> {
        let j0 = standard_j(self.n);
        let d = self.dim();
        (0..d * d).map(|k| x[0].lift(j0[(k / d, k % d)])).collect()
    }

    /// A box is only a sampling region; the chart itself is all of `R^{2n}`.
    fn contains(&self, point: &[f64]) -> bool {
        matches!(self.domain, Domain::Box { .. }) || self.domain.contains(point)
    }
}

/// Oriented triples `(a, b, c)` with `e_a e_b = e_c` among the imaginary units `e_1..e_7`.
pub const FANO_TRIPLES: [[usize; 3]; 7] = [
    [1, 2, 4],
    [2, 3, 5],
    [3, 4, 6],
    [4, 5, 7],
    [5, 6, 1],
    [6, 7, 2],
    [7, 1, 3],
];

/// `(e_a e_b)` for imaginary units, as `(sign, index)` with index 0 the real unit.
fn unit_product(a: usize, b: usize) -> (f64, usize) {
    if a == 0 {
        return (1.0, b);
    }
    if b == 0 {
        return (1.0, a);
    }
    if a == b {
        return (-1.0, 0);
    }
    for t in FANO_TRIPLES {
        for r in 0..3 {
            let (p, q, s) = (t[r], t[(r + 1) % 3], t[(r + 2) % 3]);
            if (p, q) == (a, b) {
                return (1.0, s);
            }
            if (q, p) == (a, b) {
                return (-1.0, s);
            }
        }
    }
    unreachable!("every pair of distinct units lies on one line")
}

/// Octonion product in the basis `1, e_1..e_7`.
pub fn octonion_mul(x: &[f64; 8], y: &[f64; 8]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for a in 0..8 {
        for b in 0..8 {
            let (s, c) = unit_product(a, b);
            out[c] += s * x[a] * y[b];
        }
    }
    out
}

/// Cross product on `Im O = R⁷`: `x × y = ½(xy − yx)`.
pub fn cross7<S: Scalar>(x: &[S], y: &[S]) -> Vec<S> {
    let mut out: Vec<S> = (0..7).map(|_| x[0].lift(0.0)).collect();
    for t in FANO_TRIPLES {
        for r in 0..3 {
            let (p, q, s) = (t[r] - 1, t[(r + 1) % 3] - 1, t[(r + 2) % 3] - 1);
            out[s] = out[s].clone() + x[p].clone() * y[q].clone() - x[q].clone() * y[p].clone();
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SixSphere {
    domain: Domain,
}

impl SixSphere {
    /// Graph chart `x ↦ (x, √(1 − |x|²))`: `g = I + x xᵀ / h²`.
    pub fn metric_of<S: Scalar>(x: &[S]) -> Vec<S> {
        let h2 = x.iter().fold(x[0].lift(1.0), |acc, v| acc - v.clone() * v.clone());
        let inv = x[0].lift(1.0) / h2;
        let mut g = matfield::identity(&x[0], 6);
        for i in 0..6 {
            for j in 0..6 {
                g[i * 6 + j] = g[i * 6 + j].clone() + x[i].clone() * x[j].clone() * inv.clone();
            }
        }
        g
    }

    /// `J ∂_j` is the chart part of `p × (e_j − (x_j/h) e_7)`.
    pub fn j_of<S: Scalar>(x: &[S]) -> Vec<S> {
        let h = x.iter().fold(x[0].lift(1.0), |acc, v| acc - v.clone() * v.clone()).sqrt();
        let mut p: Vec<S> = x.to_vec();
        p.push(h.clone());
        let mut j = vec![x[0].lift(0.0); 36];
        for col in 0..6 {
            let mut tangent: Vec<S> = (0..7).map(|k| x[0].lift(if k == col { 1.0 } else { 0.0 })).collect();
            tangent[6] = -(x[col].clone() / h.clone());
            let c = cross7(&p, &tangent);
            for row in 0..6 {
                j[row * 6 + col] = c[row].clone();
            }
        }
        j
    }
}

impl ChartStructure for SixSphere {
    fn dim(&self) -> usize {
        6
    }
    fn metric(&self, x: &[Jet]) -> Vec<Jet> {
        SixSphere::metric_of(x)
    }
    fn complex_structure(&self, x: &[Jet]) -> Vec<Jet> {
        SixSphere::j_of(x)
    }
    fn contains(&self, point: &[f64]) -> bool {
        self.domain.contains(point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_octonion(rng: &mut ChaCha8Rng) -> [f64; 8] {
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn octonions_are_alternative_and_normed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let norm = |x: &[f64; 8]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..50 {
            let x = random_octonion(&mut rng);
            let y = random_octonion(&mut rng);
            let left = octonion_mul(&octonion_mul(&x, &x), &y);
            let right = octonion_mul(&x, &octonion_mul(&x, &y));
            assert!(left.iter().zip(right).all(|(a, b)| (a - b).abs() < 1e-12));
            let l2 = octonion_mul(&octonion_mul(&y, &x), &x);
            let r2 = octonion_mul(&y, &octonion_mul(&x, &x));
            assert!(l2.iter().zip(r2).all(|(a, b)| (a - b).abs() < 1e-12));
            assert!((norm(&octonion_mul(&x, &y)) - norm(&x) * norm(&y)).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_matches_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_octonion(&mut rng);
        let y = random_octonion(&mut rng);
        let (mut xi, mut yi) = (x, y);
        xi[0] = 0.0;
        yi[0] = 0.0;
        let xy = octonion_mul(&xi, &yi);
        let yx = octonion_mul(&yi, &xi);
        let c = cross7(&xi[1..], &yi[1..]);
        for k in 0..7 {
            assert!((0.5 * (xy[k + 1] - yx[k + 1]) - c[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn periodicity_is_enforced() {
        assert!(conformal(2, "sin(x1)*cos(x2)", true).is_ok());
        assert!(matches!(
            conformal(2, "x1^2", true),
            Err(CatalogError::NotPeriodic { axis: 1, .. })
        ));
        assert!(conformal(2, "x1^2", false).is_ok());
        assert!(matches!(conformal(2, "sin(x5)", false), Err(CatalogError::Variable { .. })));
        assert!(conformal(1, "0", false).is_err());
    }

    #[test]
    fn hopf_domain_must_avoid_origin() {
        assert!(hopf_chart(2).is_ok());
        assert!(matches!(hopf_chart_on(2, 0.0, 1.0), Err(CatalogError::BadDomain(_))));
    }

    #[test]
    fn domain_sampling_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dom in [
            Domain::cube(4, -1.0, 2.0),
            Domain::Annulus { inner: 0.5, outer: 2.0 },
            Domain::Ball { radius: 0.9 },
        ] {
            for _ in 0..100 {
                let u: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
                assert!(dom.contains(&dom.from_unit(&u)), "{dom:?}");
            }
        }
    }

    #[test]
    fn catalog_geometries_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let specs = vec![
            flat_kahler(2).unwrap(),
            conformal(2, "sin(x1)", true).unwrap(),
            conformal(3, "sin(x1)*cos(x2)", true).unwrap(),
            hopf_chart(2).unwrap(),
            s6_nearly_kahler(),
        ];
        for spec in specs {
            let s = spec.build().unwrap();
            for _ in 0..50 {
                let u: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(0.0..1.0)).collect();
                let p = spec.domain.from_unit(&u);
                s.check_invariants(&p).unwrap();
            }
        }
    }
}
