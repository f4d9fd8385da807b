//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f / α!` of a scalar field at a
//! base point for every multi-index with `|α| ≤ K`, densely, in graded
//! lexicographic order. All derivative data used by the geometry layer comes
//! from a single jet of sufficient degree.
//!
//! Spaces are interned: every `(dim, degree)` pair maps to one shared
//! [`JetSpace`] holding the product and derivative tables.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("jet spaces differ: (dim {0}, degree {1}) vs (dim {2}, degree {3})")]
    SpaceMismatch(usize, usize, usize, usize),
    #[error("division by a jet with zero constant term")]
    DivisionByZero,
    #[error("{func} of non-positive constant term {value}")]
    Domain { func: &'static str, value: f64 },
    #[error("multi-index of order {order} exceeds jet degree {degree}")]
    OrderTooHigh { order: usize, degree: usize },
    #[error("multi-index has {got} entries, expected {dim}")]
    BadMultiIndex { got: usize, dim: usize },
    #[error("cannot differentiate a degree-0 jet")]
    InsufficientDegree,
}

/// Monomial tables for jets of a fixed dimension and degree.
pub struct JetSpace {
    dim: usize,
    degree: usize,
    monomials: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)`: monomial i times monomial j is monomial k.
    products: Vec<(u32, u32, u32)>,
    /// `lowered[c][b]`: index here of `β + e_c` for monomial β of the
    /// degree-(K-1) space, with the factor `β_c + 1`.
    lowered: Vec<Vec<(u32, f64)>>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JetSpace(dim={}, degree={})", self.dim, self.degree)
    }
}

fn monomials_of_degree(dim: usize, total: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(prefix: &mut Vec<u8>, dim: usize, left: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() + 1 == dim {
            prefix.push(left as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in (0..=left).rev() {
            prefix.push(a as u8);
            rec(prefix, dim, left - a, out);
            prefix.pop();
        }
    }
    if dim == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return;
    }
    rec(&mut Vec::with_capacity(dim), dim, total, out);
}

impl JetSpace {
    fn build(dim: usize, degree: usize) -> Self {
        let mut monomials = Vec::new();
        for t in 0..=degree {
            monomials_of_degree(dim, t, &mut monomials);
        }
        let lookup: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let order = |m: &[u8]| m.iter().map(|&a| a as usize).sum::<usize>();
        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            let da = order(a);
            for (j, b) in monomials.iter().enumerate() {
                if da + order(b) > degree {
                    // graded order: every later b has at least this degree
                    if order(b) > degree - da {
                        break;
                    }
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        let lowered = if degree == 0 {
            Vec::new()
        } else {
            let count_lower = monomials.iter().filter(|m| order(m) < degree).count();
            (0..dim)
                .map(|c| {
                    monomials[..count_lower]
                        .iter()
                        .map(|m| {
                            let mut up = m.clone();
                            up[c] += 1;
                            (lookup[&up] as u32, up[c] as f64)
                        })
                        .collect()
                })
                .collect()
        };
        JetSpace {
            dim,
            degree,
            monomials,
            lookup,
            products,
            lowered,
        }
    }

    /// Shared space for `(dim, degree)`.
    pub fn get(dim: usize, degree: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry((dim, degree))
            .or_insert_with(|| Arc::new(JetSpace::build(dim, degree)))
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Multi-indices in storage order.
    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monomials
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }
}

/// Truncated Taylor expansion of a scalar field at a base point.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.space.dim)
            .field("degree", &self.space.degree)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.same_space(other) && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, value: f64) -> Jet {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = value;
        Jet {
            space: space.clone(),
            coeffs,
        }
    }

    pub fn zero(space: &Arc<JetSpace>) -> Jet {
        Jet::constant(space, 0.0)
    }

    /// The coordinate function `x_i` expanded at a point where it equals `value`.
    pub fn variable(index: usize, value: f64, dim: usize, degree: usize) -> Result<Jet, JetError> {
        Jet::variable_in(&JetSpace::get(dim, degree), index, value)
    }

    pub fn variable_in(space: &Arc<JetSpace>, index: usize, value: f64) -> Result<Jet, JetError> {
        if index >= space.dim {
            return Err(JetError::IndexOutOfRange {
                index,
                dim: space.dim,
            });
        }
        let mut jet = Jet::constant(space, value);
        if space.degree >= 1 {
            jet.coeffs[1 + index] = 1.0;
        }
        Ok(jet)
    }

    /// Coordinate jets for every axis at `point`.
    pub fn point(point: &[f64], degree: usize) -> Vec<Jet> {
        let space = JetSpace::get(point.len(), degree);
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable_in(&space, i, v).expect("index in range"))
            .collect()
    }

    pub fn from_coeffs(space: &Arc<JetSpace>, coeffs: Vec<f64>) -> Result<Jet, JetError> {
        if coeffs.len() != space.len() {
            return Err(JetError::BadMultiIndex {
                got: coeffs.len(),
                dim: space.len(),
            });
        }
        Ok(Jet {
            space: space.clone(),
            coeffs,
        })
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn degree(&self) -> usize {
        self.space.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value at the base point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn same_space(&self, other: &Jet) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    fn check(&self, other: &Jet) -> Result<(), JetError> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(JetError::SpaceMismatch(
                self.dim(),
                self.degree(),
                other.dim(),
                other.degree(),
            ))
        }
    }

    fn order_check(&self, alpha: &[u8]) -> Result<usize, JetError> {
        if alpha.len() != self.dim() {
            return Err(JetError::BadMultiIndex {
                got: alpha.len(),
                dim: self.dim(),
            });
        }
        let order: usize = alpha.iter().map(|&a| a as usize).sum();
        if order > self.degree() {
            return Err(JetError::OrderTooHigh {
                order,
                degree: self.degree(),
            });
        }
        Ok(self.space.index_of(alpha).expect("order checked"))
    }

    /// Stored coefficient `∂^α f / α!`.
    pub fn coeff(&self, alpha: &[u8]) -> Result<f64, JetError> {
        Ok(self.coeffs[self.order_check(alpha)?])
    }

    /// The partial derivative `∂^α f` at the base point.
    pub fn partial(&self, alpha: &[u8]) -> Result<f64, JetError> {
        let c = self.coeff(alpha)?;
        let fact: f64 = alpha
            .iter()
            .map(|&a| (1..=a as u64).product::<u64>() as f64)
            .product();
        Ok(c * fact)
    }

    /// Lift a constant into this jet's space.
    pub fn lift(&self, value: f64) -> Jet {
        Jet::constant(&self.space, value)
    }

    /// `∂_c f` as a jet of one degree less.
    pub fn derivative(&self, c: usize) -> Result<Jet, JetError> {
        if c >= self.dim() {
            return Err(JetError::IndexOutOfRange {
                index: c,
                dim: self.dim(),
            });
        }
        if self.degree() == 0 {
            return Err(JetError::InsufficientDegree);
        }
        let lower = JetSpace::get(self.dim(), self.degree() - 1);
        let coeffs = self.space.lowered[c]
            .iter()
            .map(|&(src, factor)| factor * self.coeffs[src as usize])
            .collect();
        Ok(Jet {
            space: lower,
            coeffs,
        })
    }

    /// Drop all terms above `degree`.
    pub fn truncate(&self, degree: usize) -> Jet {
        if degree >= self.degree() {
            return self.clone();
        }
        let lower = JetSpace::get(self.dim(), degree);
        let coeffs = self.coeffs[..lower.len()].to_vec();
        Jet {
            space: lower,
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        assert!(self.same_space(other), "jet space mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    /// `self += s * a * b`.
    pub fn add_product(&mut self, s: f64, a: &Jet, b: &Jet) {
        assert!(
            self.same_space(a) && self.same_space(b),
            "jet space mismatch"
        );
        for &(i, j, k) in &self.space.products {
            self.coeffs[k as usize] += s * a.coeffs[i as usize] * b.coeffs[j as usize];
        }
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn try_sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    pub fn try_mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        let mut out = Jet::zero(&self.space);
        out.add_product(1.0, self, other);
        Ok(out)
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        self.try_mul(&other.try_recip()?)
    }

    pub fn try_recip(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0 == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        let k = self.degree();
        let mut series = Vec::with_capacity(k + 1);
        let mut term = 1.0 / u0;
        for _ in 0..=k {
            series.push(term);
            term *= -1.0 / u0;
        }
        Ok(self.compose(&series))
    }

    pub fn try_ln(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0.is_nan() || u0 <= 0.0 {
            return Err(JetError::Domain {
                func: "log",
                value: u0,
            });
        }
        let mut series = vec![u0.ln()];
        let mut pow = 1.0;
        for n in 1..=self.degree() {
            pow /= u0;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            series.push(sign * pow / n as f64);
        }
        Ok(self.compose(&series))
    }

    pub fn try_sqrt(&self) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0.is_nan() || u0 <= 0.0 {
            return Err(JetError::Domain {
                func: "sqrt",
                value: u0,
            });
        }
        Ok(self.compose(&binomial_series(u0, 0.5, self.degree())))
    }

    /// Real power; requires a positive constant term.
    pub fn try_powf(&self, p: f64) -> Result<Jet, JetError> {
        let u0 = self.value();
        if u0.is_nan() || u0 <= 0.0 {
            return Err(JetError::Domain {
                func: "pow",
                value: u0,
            });
        }
        Ok(self.compose(&binomial_series(u0, p, self.degree())))
    }

    /// Integer power by repeated squaring; negative exponents need a nonzero constant term.
    pub fn try_powi(&self, p: i32) -> Result<Jet, JetError> {
        let base = if p < 0 {
            self.try_recip()?
        } else {
            self.clone()
        };
        let mut e = p.unsigned_abs();
        let mut acc = self.lift(1.0);
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &sq;
            }
            e >>= 1;
            if e > 0 {
                sq = &sq * &sq;
            }
        }
        Ok(acc)
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let mut series = Vec::with_capacity(self.degree() + 1);
        let mut fact = 1.0;
        for n in 0..=self.degree() {
            if n > 0 {
                fact *= n as f64;
            }
            series.push(e0 / fact);
        }
        self.compose(&series)
    }

    pub fn sin(&self) -> Jet {
        self.compose(&trig_series(self.value(), 0, self.degree()))
    }

    pub fn cos(&self) -> Jet {
        self.compose(&trig_series(self.value(), 1, self.degree()))
    }

    fn nan_like(&self) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: vec![f64::NAN; self.space.len()],
        }
    }

    /// `Σ series[k] δ^k` with `δ = self − value`, by Horner's rule.
    fn compose(&self, series: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let k = series.len() - 1;
        let mut acc = self.lift(series[k]);
        for s in series[..k].iter().rev() {
            acc = &acc * &delta;
            acc.coeffs[0] += s;
        }
        acc
    }
}

fn binomial_series(u0: f64, p: f64, degree: usize) -> Vec<f64> {
    let mut series = Vec::with_capacity(degree + 1);
    let mut binom = 1.0;
    for n in 0..=degree {
        if n > 0 {
            binom *= (p - (n - 1) as f64) / n as f64;
        }
        series.push(binom * u0.powf(p - n as f64));
    }
    series
}

/// Taylor coefficients of sin (`shift` 0) or cos (`shift` 1) at `u0`.
fn trig_series(u0: f64, shift: usize, degree: usize) -> Vec<f64> {
    let (s, c) = u0.sin_cos();
    let cycle = [s, c, -s, -c];
    let mut fact = 1.0;
    (0..=degree)
        .map(|n| {
            if n > 0 {
                fact *= n as f64;
            }
            cycle[(n + shift) % 4] / fact
        })
        .collect()
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Result<Jet, JetError> = $body;
                f(self, rhs).unwrap_or_else(|e| panic!("{e}"))
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| a.try_add(b));
binop!(Sub, sub, |a, b| a.try_sub(b));
binop!(Mul, mul, |a, b| a.try_mul(b));
// Division by a zero constant term yields NaN coefficients, like f64.
binop!(Div, div, |a, b| Ok(a
    .try_div(b)
    .unwrap_or_else(|_| a.nan_like())));

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs.scale(self)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        self.axpy(-1.0, rhs);
    }
}

/// Arithmetic shared by plain floats and jets, so field definitions can be
/// written once and evaluated either pointwise or with derivatives.
pub trait Scalar:
    Clone
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// A constant living in the same space as `self`.
    fn lift(&self, value: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    /// NaN outside the domain.
    fn ln(&self) -> Self;
    /// NaN outside the domain.
    fn sqrt(&self) -> Self;
}

impl Scalar for f64 {
    fn lift(&self, value: f64) -> f64 {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> f64 {
        f64::sin(*self)
    }
    fn cos(&self) -> f64 {
        f64::cos(*self)
    }
    fn exp(&self) -> f64 {
        f64::exp(*self)
    }
    fn ln(&self) -> f64 {
        f64::ln(*self)
    }
    fn sqrt(&self) -> f64 {
        f64::sqrt(*self)
    }
}

impl Scalar for Jet {
    fn lift(&self, value: f64) -> Jet {
        Jet::lift(self, value)
    }
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn sin(&self) -> Jet {
        Jet::sin(self)
    }
    fn cos(&self) -> Jet {
        Jet::cos(self)
    }
    fn exp(&self) -> Jet {
        Jet::exp(self)
    }
    fn ln(&self) -> Jet {
        self.try_ln().unwrap_or_else(|_| self.nan_like())
    }
    fn sqrt(&self) -> Jet {
        self.try_sqrt().unwrap_or_else(|_| self.nan_like())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn variable_layout() {
        let x = Jet::variable(0, 2.0, 2, 2).unwrap();
        assert_eq!(x.coeff(&[0, 0]).unwrap(), 2.0);
        assert_eq!(x.coeff(&[1, 0]).unwrap(), 1.0);
        assert_eq!(x.coeff(&[0, 1]).unwrap(), 0.0);
        let y = Jet::variable(1, 0.0, 2, 1).unwrap();
        assert_eq!(y.coeffs(), &[0.0, 0.0, 1.0]);
        assert!(Jet::variable(2, 0.0, 2, 1).is_err());
    }

    #[test]
    fn square_has_unit_second_coefficient() {
        let x = Jet::variable(0, 1.3, 2, 3).unwrap();
        let sq = &x * &x;
        assert!(close(sq.coeff(&[2, 0]).unwrap(), 1.0, 1e-15));
        assert!(close(sq.partial(&[2, 0]).unwrap(), 2.0, 1e-15));
    }

    #[test]
    fn graded_order() {
        let s = JetSpace::get(2, 2);
        assert_eq!(
            s.monomials(),
            &[
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
    }

    #[test]
    fn sin_maclaurin() {
        let x = Jet::variable(0, 0.0, 1, 3).unwrap();
        let s = x.sin();
        let want = [0.0, 1.0, 0.0, -1.0 / 6.0];
        for (c, w) in s.coeffs().iter().zip(want) {
            assert!(close(*c, w, 1e-15));
        }
    }

    #[test]
    fn exp_of_sin() {
        let x = Jet::variable(0, 0.0, 1, 2).unwrap();
        let e = x.sin().exp();
        assert!(close(e.coeffs()[0], 1.0, 1e-15));
        assert!(close(e.coeffs()[1], 1.0, 1e-15));
        assert!(close(e.coeffs()[2], 0.5, 1e-15));
        assert!(close(e.partial(&[2]).unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn constant_has_no_derivatives() {
        let s = JetSpace::get(3, 3);
        let c = Jet::constant(&s, 4.5);
        assert_eq!(c.partial(&[1, 1, 0]).unwrap(), 0.0);
        assert_eq!(c.partial(&[0, 0, 0]).unwrap(), 4.5);
        assert!(c.partial(&[2, 2, 0]).is_err());
    }

    #[test]
    fn domain_errors() {
        let z = Jet::variable(0, 0.0, 1, 2).unwrap();
        assert_eq!(z.try_recip().unwrap_err(), JetError::DivisionByZero);
        assert!(matches!(z.try_ln(), Err(JetError::Domain { .. })));
        assert!(matches!((-z.lift(1.0)).try_sqrt(), Err(JetError::Domain { .. })));
        let a = Jet::variable(0, 1.0, 1, 2).unwrap();
        let b = Jet::variable(0, 1.0, 2, 2).unwrap();
        assert!(matches!(a.try_add(&b), Err(JetError::SpaceMismatch(..))));
    }

    #[test]
    fn derivative_and_truncate() {
        // f = x^2 y at (1, 2): ∂_x f = 2xy
        let p = Jet::point(&[1.0, 2.0], 3);
        let f = &(&p[0] * &p[0]) * &p[1];
        let fx = f.derivative(0).unwrap();
        assert_eq!(fx.degree(), 2);
        assert!(close(fx.value(), 4.0, 1e-15));
        assert!(close(fx.partial(&[1, 0]).unwrap(), 4.0, 1e-15));
        assert!(close(fx.partial(&[0, 1]).unwrap(), 2.0, 1e-15));
        assert!(close(fx.partial(&[1, 1]).unwrap(), 2.0, 1e-15));
        let t = f.truncate(1);
        assert_eq!(t.coeffs(), &f.coeffs()[..3]);
    }

    #[test]
    fn powers() {
        let x = Jet::variable(0, 1.7, 1, 4).unwrap();
        let a = x.try_powi(3).unwrap();
        let b = &(&x * &x) * &x;
        for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
            assert!(close(*u, *v, 1e-14));
        }
        let r = x.try_powi(-2).unwrap();
        let one = &r * &(&x * &x);
        assert!(close(one.value(), 1.0, 1e-14));
        assert!(one.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
        let s = x.try_powf(0.5).unwrap();
        let t = x.try_sqrt().unwrap();
        for (u, v) in s.coeffs().iter().zip(t.coeffs()) {
            assert!(close(*u, *v, 1e-14));
        }
    }
}
