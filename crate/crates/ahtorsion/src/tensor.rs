//! Pointwise multilinear algebra in a chart.
//!
//! Coordinate tensors carry a variance per slot. Frame components (see
//! [`FramePack::to_frame`]) are taken in an orthonormal frame, where raising
//! and lowering are trivial, and are stored with every slot marked `Down`.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("variance mismatch: {0}")]
    Variance(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("metric is not positive definite")]
    SingularMetric,
    #[error("input is not skew (residual {0:e})")]
    NotSkew(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Musical {
    Flat,
    Sharp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointTensor {
    dim: usize,
    slots: Vec<Slot>,
    data: Vec<f64>,
}

impl PointTensor {
    pub fn zeros(dim: usize, slots: &[Slot]) -> Self {
        PointTensor {
            dim,
            slots: slots.to_vec(),
            data: vec![0.0; dim.pow(slots.len() as u32)],
        }
    }

    pub fn from_data(dim: usize, slots: &[Slot], data: Vec<f64>) -> Result<Self, TensorError> {
        let want = dim.pow(slots.len() as u32);
        if data.len() != want {
            return Err(TensorError::Shape(format!(
                "{} entries for {want} components",
                data.len()
            )));
        }
        Ok(PointTensor {
            dim,
            slots: slots.to_vec(),
            data,
        })
    }

    pub fn from_fn(dim: usize, slots: &[Slot], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = PointTensor::zeros(dim, slots);
        let mut idx = vec![0; slots.len()];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            increment(&mut idx, dim);
        }
        t
    }

    pub fn vector(v: &[f64]) -> Self {
        PointTensor::from_data(v.len(), &[Slot::Up], v.to_vec()).expect("shape")
    }

    pub fn covector(v: &[f64]) -> Self {
        PointTensor::from_data(v.len(), &[Slot::Down], v.to_vec()).expect("shape")
    }

    /// `(Up, Down)` tensor from an endomorphism matrix `A^i_j = m[(i, j)]`.
    pub fn endomorphism(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        PointTensor::from_fn(d, &[Slot::Up, Slot::Down], |i| m[(i[0], i[1])])
    }

    /// `(Down, Down)` tensor from a bilinear form matrix.
    pub fn bilinear(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        PointTensor::from_fn(d, &[Slot::Down, Slot::Down], |i| m[(i[0], i[1])])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Counts of contravariant and covariant slots.
    pub fn valence(&self) -> (usize, usize) {
        let up = self.slots.iter().filter(|s| **s == Slot::Up).count();
        (up, self.slots.len() - up)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.slots.len());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let k = self.offset(idx);
        self.data[k] = v;
    }

    /// Rank-2 tensor as a matrix `m[(i, j)] = t[i, j]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.rank(), 2, "matrix view needs rank 2");
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Frobenius norm of the component array.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &PointTensor) -> Result<PointTensor, TensorError> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(PointTensor {
            dim: self.dim,
            slots: self.slots.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &PointTensor) -> Result<PointTensor, TensorError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> PointTensor {
        PointTensor {
            dim: self.dim,
            slots: self.slots.clone(),
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn same_shape(&self, other: &PointTensor) -> Result<(), TensorError> {
        if self.dim != other.dim || self.slots != other.slots {
            return Err(TensorError::Shape(format!(
                "{:?}/{} vs {:?}/{}",
                self.slots, self.dim, other.slots, other.dim
            )));
        }
        Ok(())
    }

    /// Tensor product; slots of `self` come first.
    pub fn outer(&self, other: &PointTensor) -> Result<PointTensor, TensorError> {
        if self.dim != other.dim {
            return Err(TensorError::Shape("dimension".into()));
        }
        let mut slots = self.slots.clone();
        slots.extend_from_slice(&other.slots);
        let data = self
            .data
            .iter()
            .flat_map(|a| other.data.iter().map(move |b| a * b))
            .collect();
        Ok(PointTensor {
            dim: self.dim,
            slots,
            data,
        })
    }

    /// Trace over an up slot and a down slot.
    pub fn contract(&self, a: usize, b: usize) -> Result<PointTensor, TensorError> {
        let r = self.rank();
        if a >= r || b >= r || a == b {
            return Err(TensorError::Shape(format!("slots {a}, {b} of rank {r}")));
        }
        if self.slots[a] == self.slots[b] {
            return Err(TensorError::Variance(format!(
                "contracting two {:?} slots",
                self.slots[a]
            )));
        }
        Ok(self.trace_unchecked(a, b))
    }

    /// Sum over equal indices in two slots regardless of variance.
    /// Only meaningful for frame components.
    pub fn trace_unchecked(&self, a: usize, b: usize) -> PointTensor {
        let slots: Vec<Slot> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != a && *k != b)
            .map(|(_, s)| *s)
            .collect();
        let mut full = vec![0; self.rank()];
        PointTensor::from_fn(self.dim, &slots, |rest| {
            let mut it = rest.iter();
            let mut s = 0.0;
            for i in 0..self.dim {
                for (k, slot) in full.iter_mut().enumerate() {
                    *slot = if k == a || k == b { i } else { *it.next().unwrap() };
                }
                it = rest.iter();
                s += self.get(&full);
            }
            s
        })
    }

    /// Reorder slots: slot `k` of the result is slot `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> PointTensor {
        assert_eq!(perm.len(), self.rank());
        let slots: Vec<Slot> = perm.iter().map(|&p| self.slots[p]).collect();
        let mut src = vec![0; self.rank()];
        PointTensor::from_fn(self.dim, &slots, |idx| {
            for (k, &p) in perm.iter().enumerate() {
                src[p] = idx[k];
            }
            self.get(&src)
        })
    }

    /// Replace all variance markers; used for orthonormal-frame components.
    pub(crate) fn with_slots(mut self, slots: &[Slot]) -> PointTensor {
        assert_eq!(slots.len(), self.slots.len());
        self.slots = slots.to_vec();
        self
    }
}

pub(crate) fn increment(idx: &mut [usize], dim: usize) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < dim {
            return;
        }
        idx[k] = 0;
    }
}

/// Apply the matrix `m` (as `out_a = Σ_i m[(i, a)] in_i`) along one slot.
fn transform_slot(t: &PointTensor, slot: usize, m: &DMatrix<f64>, new: Slot) -> PointTensor {
    let mut slots = t.slots.clone();
    slots[slot] = new;
    let mut src = vec![0; t.rank()];
    PointTensor::from_fn(t.dim, &slots, |idx| {
        src.copy_from_slice(idx);
        let a = idx[slot];
        let mut s = 0.0;
        for i in 0..t.dim {
            src[slot] = i;
            s += m[(i, a)] * t.get(&src);
        }
        s
    })
}

fn check_metric(t: &PointTensor, g: &DMatrix<f64>) -> Result<(), TensorError> {
    if g.nrows() != t.dim || g.ncols() != t.dim {
        return Err(TensorError::Shape("metric size".into()));
    }
    Ok(())
}

/// Lower (`Flat`) or raise (`Sharp`) one slot with the metric.
pub fn musical(
    t: &PointTensor,
    slot: usize,
    dir: Musical,
    g: &DMatrix<f64>,
) -> Result<PointTensor, TensorError> {
    check_metric(t, g)?;
    if slot >= t.rank() {
        return Err(TensorError::Shape(format!("slot {slot}")));
    }
    match (dir, t.slots[slot]) {
        (Musical::Flat, Slot::Up) => Ok(transform_slot(t, slot, g, Slot::Down)),
        (Musical::Sharp, Slot::Down) => {
            let ginv = g
                .clone()
                .cholesky()
                .ok_or(TensorError::SingularMetric)?
                .inverse();
            Ok(transform_slot(t, slot, &ginv, Slot::Up))
        }
        (d, s) => Err(TensorError::Variance(format!("{d:?} of a {s:?} slot"))),
    }
}

/// `(α∧β)(Y,Z) = α(Y)β(Z) − α(Z)β(Y)`.
pub fn wedge2(alpha: &PointTensor, beta: &PointTensor) -> Result<PointTensor, TensorError> {
    for t in [alpha, beta] {
        if t.slots != [Slot::Down] {
            return Err(TensorError::Variance("wedge2 takes covectors".into()));
        }
    }
    if alpha.dim != beta.dim {
        return Err(TensorError::Shape("dimension".into()));
    }
    let (a, b) = (&alpha.data, &beta.data);
    Ok(PointTensor::from_fn(alpha.dim, &[Slot::Down, Slot::Down], |i| {
        a[i[0]] * b[i[1]] - a[i[1]] * b[i[0]]
    }))
}

/// Orthonormal frame at a point, from the Cholesky factor of the metric.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePack {
    pub point: Vec<f64>,
    /// Columns are the frame vectors in the coordinate basis.
    pub frame: DMatrix<f64>,
    /// Inverse transpose of `frame`.
    pub coframe: DMatrix<f64>,
}

impl FramePack {
    /// With `g = L Lᵀ` the frame is `L⁻ᵀ`.
    pub fn new(point: &[f64], g: &DMatrix<f64>) -> Result<Self, TensorError> {
        let chol = g.clone().cholesky().ok_or(TensorError::SingularMetric)?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or(TensorError::SingularMetric)?;
        Ok(FramePack {
            point: point.to_vec(),
            frame: linv.transpose(),
            coframe: l,
        })
    }

    pub fn dim(&self) -> usize {
        self.frame.nrows()
    }

    /// Frame `e'_b = Σ_a q[(a, b)] e_a` for an orthogonal `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> FramePack {
        FramePack {
            point: self.point.clone(),
            frame: &self.frame * q,
            coframe: &self.coframe * q,
        }
    }

    /// `max |g(e_a, e_b) − δ_ab|`.
    pub fn orthonormality_defect(&self, g: &DMatrix<f64>) -> f64 {
        let m = self.frame.transpose() * g * &self.frame;
        (m - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    /// Components in the frame; up slots use the coframe, down slots the frame.
    pub fn to_frame(&self, t: &PointTensor) -> PointTensor {
        let mut out = t.clone();
        for (k, s) in t.slots.iter().enumerate() {
            let m = match s {
                Slot::Up => &self.coframe,
                Slot::Down => &self.frame,
            };
            out = transform_slot(&out, k, m, Slot::Down);
        }
        out
    }

    /// Inverse of [`to_frame`](Self::to_frame) for the given variance.
    pub fn from_frame(&self, t: &PointTensor, slots: &[Slot]) -> PointTensor {
        let mut out = t.clone();
        for (k, s) in slots.iter().enumerate() {
            let m = match s {
                Slot::Up => self.frame.transpose(),
                Slot::Down => self.coframe.transpose(),
            };
            out = transform_slot(&out, k, &m, *s);
        }
        out.with_slots(slots)
    }
}

/// Extended inner product: sum of products of orthonormal-frame components.
pub fn inner_product(
    a: &PointTensor,
    b: &PointTensor,
    frame: &FramePack,
) -> Result<f64, TensorError> {
    if a.slots != b.slots || a.dim != b.dim {
        return Err(TensorError::Variance(format!(
            "{:?} vs {:?}",
            a.slots, b.slots
        )));
    }
    let fa = frame.to_frame(a);
    let fb = frame.to_frame(b);
    Ok(fa.data.iter().zip(&fb.data).map(|(x, y)| x * y).sum())
}

/// `b_A(X, Y) = ⟨AX, Y⟩` for a skew endomorphism `A`.
pub fn endo_to_form(a: &PointTensor, g: &DMatrix<f64>) -> Result<PointTensor, TensorError> {
    if a.slots != [Slot::Up, Slot::Down] {
        return Err(TensorError::Variance("expected an endomorphism".into()));
    }
    check_metric(a, g)?;
    // b_{jk} = g_{ik} A^i_j
    let b = (g * a.matrix()).transpose();
    let defect = (&b + b.transpose()).amax();
    if defect > 1e-9 * (1.0 + b.amax()) {
        return Err(TensorError::NotSkew(defect));
    }
    Ok(PointTensor::bilinear(&b))
}

/// Inverse of [`endo_to_form`]: `A^i_j = g^{ik} b_{jk}`.
pub fn form_to_endo(b: &PointTensor, g: &DMatrix<f64>) -> Result<PointTensor, TensorError> {
    if b.slots != [Slot::Down, Slot::Down] {
        return Err(TensorError::Variance("expected a 2-form".into()));
    }
    check_metric(b, g)?;
    let m = b.matrix();
    let defect = (&m + m.transpose()).amax();
    if defect > 1e-9 * (1.0 + m.amax()) {
        return Err(TensorError::NotSkew(defect));
    }
    let ginv = g
        .clone()
        .cholesky()
        .ok_or(TensorError::SingularMetric)?
        .inverse();
    Ok(PointTensor::endomorphism(&(ginv * m.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    fn random_tensor(rng: &mut ChaCha8Rng, d: usize, slots: &[Slot]) -> PointTensor {
        PointTensor::from_fn(d, slots, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn sharp_flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g = spd(&mut rng, 4);
            let x = random_tensor(&mut rng, 4, &[Slot::Up]);
            let back = musical(&musical(&x, 0, Musical::Flat, &g).unwrap(), 0, Musical::Sharp, &g).unwrap();
            assert!(back.sub(&x).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn sharp_pairs_with_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = spd(&mut rng, 6);
        let theta = random_tensor(&mut rng, 6, &[Slot::Down]);
        let y = random_tensor(&mut rng, 6, &[Slot::Up]);
        let ts = musical(&theta, 0, Musical::Sharp, &g).unwrap();
        let lhs = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)] * ts.get(&[i]) * y.get(&[j]))
            .sum::<f64>();
        let rhs: f64 = (0..6).map(|i| theta.get(&[i]) * y.get(&[i])).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(musical(&theta, 0, Musical::Flat, &g).is_err());
    }

    #[test]
    fn flat_of_basis_vector() {
        let g = DMatrix::identity(3, 3);
        let e1 = PointTensor::vector(&[1.0, 0.0, 0.0]);
        let f = musical(&e1, 0, Musical::Flat, &g).unwrap();
        assert_eq!(f, PointTensor::covector(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn skew_inner_product_is_minus_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 4;
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let a = &m - m.transpose();
        let frame = FramePack::new(&[0.0; 4], &DMatrix::identity(d, d)).unwrap();
        let t = PointTensor::endomorphism(&a);
        let ip = inner_product(&t, &t, &frame).unwrap();
        assert!((ip + (&a * &a).trace()).abs() < 1e-12);
    }

    #[test]
    fn metric_norm_is_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = spd(&mut rng, 6);
        let frame = FramePack::new(&[0.0; 6], &g).unwrap();
        assert!(frame.orthonormality_defect(&g) < 1e-10);
        let gt = PointTensor::bilinear(&g);
        assert!((inner_product(&gt, &gt, &frame).unwrap() - 6.0).abs() < 1e-10);
    }

    #[test]
    fn inner_product_frame_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = spd(&mut rng, 4);
        let frame = FramePack::new(&[0.0; 4], &g).unwrap();
        let s = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = (&s - s.transpose()).exp();
        let rotated = frame.rotated(&q);
        assert!(rotated.orthonormality_defect(&g) < 1e-10);
        let slots = [Slot::Up, Slot::Down, Slot::Down];
        let a = random_tensor(&mut rng, 4, &slots);
        let b = random_tensor(&mut rng, 4, &slots);
        let x = inner_product(&a, &b, &frame).unwrap();
        let y = inner_product(&a, &b, &rotated).unwrap();
        assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        let back = frame.from_frame(&frame.to_frame(&a), &slots);
        assert!(back.sub(&a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn wedge_basics() {
        let e1 = PointTensor::covector(&[1.0, 0.0, 0.0]);
        let e2 = PointTensor::covector(&[0.0, 1.0, 0.0]);
        let w = wedge2(&e1, &e2).unwrap();
        assert_eq!(w.get(&[0, 1]), 1.0);
        assert_eq!(w.get(&[1, 0]), -1.0);
        assert_eq!(wedge2(&e1, &e1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn wedge_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_tensor(&mut rng, 5, &[Slot::Down]);
        let b = random_tensor(&mut rng, 5, &[Slot::Down]);
        let c = random_tensor(&mut rng, 5, &[Slot::Down]);
        let lhs = wedge2(&a.add(&b.scale(2.5)).unwrap(), &c).unwrap();
        let rhs = wedge2(&a, &c)
            .unwrap()
            .add(&wedge2(&b, &c).unwrap().scale(2.5))
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn endo_form_conversion() {
        // standard J on R^4: b_J(X, Y) = <JX, Y> = -ω(X, Y) with ω = <·, J·>
        let mut j = DMatrix::zeros(4, 4);
        j[(1, 0)] = 1.0;
        j[(0, 1)] = -1.0;
        j[(3, 2)] = 1.0;
        j[(2, 3)] = -1.0;
        let g = DMatrix::identity(4, 4);
        let b = endo_to_form(&PointTensor::endomorphism(&j), &g).unwrap();
        let omega = &g * &j;
        assert!((b.matrix() + omega).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let gm = spd(&mut rng, 4);
            let s = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let form = PointTensor::bilinear(&(&s - s.transpose()));
            let a = form_to_endo(&form, &gm).unwrap();
            let back = endo_to_form(&a, &gm).unwrap();
            assert!(back.sub(&form).unwrap().max_abs() < 1e-12);
        }
        let sym = PointTensor::bilinear(&DMatrix::identity(4, 4));
        assert!(matches!(form_to_endo(&sym, &g), Err(TensorError::NotSkew(_))));
    }

    #[test]
    fn contraction_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = random_tensor(&mut rng, 3, &[Slot::Down, Slot::Up, Slot::Down]);
        let c = t.contract(1, 2).unwrap();
        for x in 0..3 {
            let mut s = 0.0;
            for i in 0..3 {
                s += t.data()[x * 9 + i * 3 + i];
            }
            assert_eq!(c.get(&[x]), s);
        }
        assert!(t.contract(0, 2).is_err());
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p.get(&[1, 2, 0]), t.get(&[2, 0, 1]));
    }
}
