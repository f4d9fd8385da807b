//! Total bending energy of almost complex structures on the flat torus
//! `R^{2n} / (2πZ)^{2n}`, discretized on a periodic grid with 4th-order central
//! differences: energy, gradient, second variation and Armijo descent.
//!
//! On a flat torus with the coordinate frame, `ξ_c = −½ J ∂_c J` and
//! `d*ξ = −Σ_c ∂_c ξ_c`. Node fields store one row-major `d×d` matrix per node.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::unstruct::{self, gray_hervella_decompose, Mat, Psi, StructureError, TorsionTensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("grid resolution {0} is below 4, the stencil needs 4 distinct neighbours")]
    Resolution(usize),
    #[error("complex dimension must be at least 1, got {0}")]
    Dimension(usize),
    #[error("grid with {0} nodes is too large")]
    TooLarge(usize),
    #[error("node {node}: not an orthogonal complex structure (defect {defect:e})")]
    InvalidNode { node: usize, defect: f64 },
    #[error("node {node} out of range")]
    Node { node: usize },
    #[error("field shape does not match the grid")]
    Shape,
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// Tolerance on `J² + I` and `JᵀJ − I` for a valid grid.
pub const VALIDITY_TOL: f64 = 1e-10;

/// Allowed growth of the constraint defect in one conjugation step.
pub const DRIFT_TOL: f64 = 1e-8;

/// Sign `s` in `dE(φ) = −s ∫⟨d*ξ, φ⟩` for `J_ε = e^{εφ} J e^{−εφ}`.
pub const VARIATION_SIGN: f64 = 1.0;

const MAX_ENTRIES: usize = 1 << 27;
const CHUNK: usize = 2048;

/// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`.
#[inline]
pub fn fd4(fm2: f64, fm1: f64, fp1: f64, fp2: f64, h: f64) -> f64 {
    (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)
}

/// One `d×d` matrix per node of a periodic `m^d` grid, first axis slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    d: usize,
    m: usize,
    data: Vec<f64>,
}

impl NodeField {
    pub fn zeros(d: usize, m: usize) -> Result<NodeField, FlowError> {
        let nodes = m
            .checked_pow(d as u32)
            .filter(|k| k.saturating_mul(d * d) <= MAX_ENTRIES)
            .ok_or(FlowError::TooLarge(m.saturating_pow(d as u32)))?;
        Ok(NodeField {
            d,
            m,
            data: vec![0.0; nodes * d * d],
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / (self.d * self.d)
    }

    pub fn spacing(&self) -> f64 {
        std::f64::consts::TAU / self.m as f64
    }

    #[inline]
    pub fn node(&self, k: usize) -> &[f64] {
        let b = self.d * self.d;
        &self.data[k * b..(k + 1) * b]
    }

    pub fn matrix(&self, k: usize) -> Mat {
        Mat::from_row_slice(self.d, self.d, self.node(k))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Grid coordinates `x_a = i_a h` of a node.
    pub fn coords(&self, k: usize) -> Vec<f64> {
        let h = self.spacing();
        let mut x = vec![0.0; self.d];
        let mut r = k;
        for a in (0..self.d).rev() {
            x[a] = (r % self.m) as f64 * h;
            r /= self.m;
        }
        x
    }

    fn same_shape(&self, o: &NodeField) -> Result<(), FlowError> {
        if self.d == o.d && self.m == o.m {
            Ok(())
        } else {
            Err(FlowError::Shape)
        }
    }

    fn from_nodes(d: usize, m: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Result<NodeField, FlowError> {
        NodeField::from_nodes_with(d, m, || (), |_, k, slot| f(k, slot))
    }

    /// Fill node blocks in parallel with per-worker scratch from `init`.
    fn from_nodes_with<T>(
        d: usize,
        m: usize,
        init: impl Fn() -> T + Sync + Send,
        f: impl Fn(&mut T, usize, &mut [f64]) + Sync,
    ) -> Result<NodeField, FlowError> {
        let mut out = NodeField::zeros(d, m)?;
        let b = d * d;
        out.data
            .par_chunks_mut(b)
            .enumerate()
            .for_each_init(init, |t, (k, slot)| f(t, k, slot));
        Ok(out)
    }

    /// Sample a matrix-valued function at the grid nodes.
    pub fn sample(d: usize, m: usize, f: impl Fn(&[f64]) -> Mat + Sync) -> Result<NodeField, FlowError> {
        let probe = NodeField {
            d,
            m,
            data: Vec::new(),
        };
        NodeField::from_nodes(d, m, |k, slot| {
            let a = f(&probe.coords(k));
            for r in 0..d {
                for c in 0..d {
                    slot[r * d + c] = a[(r, c)];
                }
            }
        })
    }

    pub fn scaled(&self, c: f64) -> NodeField {
        NodeField {
            d: self.d,
            m: self.m,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// `∫⟨a, b⟩ dv` with the flat volume `h^d` per node.
    pub fn inner(&self, o: &NodeField) -> Result<f64, FlowError> {
        self.same_shape(o)?;
        let s = chunked_sum(self.nodes(), |k| dot(self.node(k), o.node(k)));
        Ok(s * self.spacing().powi(self.d as i32))
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).expect("same shape").sqrt()
    }

    /// Largest pointwise Frobenius norm.
    pub fn max_norm(&self) -> f64 {
        (0..self.nodes())
            .map(|k| dot(self.node(k), self.node(k)).sqrt())
            .fold(0.0, f64::max)
    }

    /// Node matrices as nested rows, in node order.
    pub fn to_matrices(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.nodes())
            .map(|k| self.node(k).chunks(self.d).map(<[f64]>::to_vec).collect())
            .collect()
    }

}

/// Periodic stencil offsets of a grid: for a node, the neighbours at
/// `−2, −1, +1, +2` steps along each axis.
struct Stencil {
    d: usize,
    m: usize,
    h: f64,
    strides: Vec<usize>,
    /// `wrap[i]` = digits `i − 2, i − 1, i + 1, i + 2` mod `m`.
    wrap: Vec<[usize; 4]>,
}

impl Stencil {
    fn of(field: &NodeField) -> Stencil {
        let (d, m) = (field.d, field.m);
        Stencil {
            d,
            m,
            h: field.spacing(),
            strides: (0..d).map(|a| m.pow((d - 1 - a) as u32)).collect(),
            wrap: (0..m).map(|i| [m - 2, m - 1, 1, 2].map(|o| (i + o) % m)).collect(),
        }
    }

    /// Neighbour node indices of `k`, one row per axis.
    fn sites(&self, k: usize, out: &mut [[usize; 4]]) {
        let mut r = k;
        for a in (0..self.d).rev() {
            let digit = r % self.m;
            r /= self.m;
            let base = k - digit * self.strides[a];
            out[a] = self.wrap[digit].map(|w| base + w * self.strides[a]);
        }
    }

    /// Stencil derivative from the neighbour row `site` of entries
    /// `offset..offset + out.len()` within the `block`-sized node blocks of `data`.
    #[inline]
    fn fd4_block(&self, data: &[f64], block: usize, offset: usize, site: &[usize; 4], out: &mut [f64]) {
        let len = out.len();
        let at = |i: usize| &data[site[i] * block + offset..site[i] * block + offset + len];
        let (s0, s1, s2, s3) = (at(0), at(1), at(2), at(3));
        for e in 0..len {
            out[e] = fd4(s0[e], s1[e], s2[e], s3[e], self.h);
        }
    }
}

/// Per-worker buffers.
struct Scratch {
    sites: Vec<[usize; 4]>,
    mats: [Vec<f64>; 5],
    xi: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Scratch {
        Scratch {
            sites: vec![[0; 4]; d],
            mats: [(); 5].map(|_| vec![0.0; d * d]),
            xi: vec![0.0; d * d * d],
        }
    }
}

/// Deterministic parallel sum over nodes: fixed chunks, summed in order.
fn chunked_sum(nodes: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let starts: Vec<usize> = (0..nodes).step_by(CHUNK).collect();
    let parts: Vec<f64> = starts
        .par_iter()
        .map(|&s| (s..(s + CHUNK).min(nodes)).map(&f).sum())
        .collect();
    parts.iter().sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major `d×d` products. `A`/`B` pick plain or transposed operands; the
/// common dimensions get constant-size loops.
#[inline(always)]
fn product<const D: usize, const TA: bool, const TB: bool>(a: &[f64], b: &[f64], out: &mut [f64]) {
    let (a, b, out) = (&a[..D * D], &b[..D * D], &mut out[..D * D]);
    for i in 0..D {
        for j in 0..D {
            let mut s = 0.0;
            for k in 0..D {
                let x = if TA { a[k * D + i] } else { a[i * D + k] };
                let y = if TB { b[j * D + k] } else { b[k * D + j] };
                s += x * y;
            }
            out[i * D + j] = s;
        }
    }
}

fn product_dyn<const TA: bool, const TB: bool>(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                let x = if TA { a[k * d + i] } else { a[i * d + k] };
                let y = if TB { b[j * d + k] } else { b[k * d + j] };
                s += x * y;
            }
            out[i * d + j] = s;
        }
    }
}

#[inline]
fn product_any<const TA: bool, const TB: bool>(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    match d {
        2 => product::<2, TA, TB>(a, b, out),
        4 => product::<4, TA, TB>(a, b, out),
        6 => product::<6, TA, TB>(a, b, out),
        _ => product_dyn::<TA, TB>(a, b, out, d),
    }
}

/// `out = a b`.
#[inline]
fn mul_into(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    product_any::<false, false>(a, b, out, d)
}

/// `out = aᵀ b`.
#[inline]
fn mul_tn_into(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    product_any::<true, false>(a, b, out, d)
}

/// `out = a bᵀ`.
#[inline]
fn mul_nt_into(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    product_any::<false, true>(a, b, out, d)
}

/// `max(|J² + I|, |JᵀJ − I|)` entrywise.
fn structure_defect(j: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..d {
        for c in 0..d {
            let id = if r == c { 1.0 } else { 0.0 };
            let (mut sq, mut tt) = (0.0, 0.0);
            for k in 0..d {
                sq += j[r * d + k] * j[k * d + c];
                tt += j[k * d + r] * j[k * d + c];
            }
            worst = worst.max((sq + id).abs()).max((tt - id).abs());
        }
    }
    worst
}

/// Nearest orthogonal skew matrix: skew part, then Newton–Schulz polar iteration
/// `X ← ½ X (3I − XᵀX)`.
fn polar_correct(j: &mut [f64], d: usize, scratch: &mut [f64]) {
    let (xtx, rest) = scratch.split_at_mut(d * d);
    let next = &mut rest[..d * d];
    for r in 0..d {
        for c in r..d {
            let a = 0.5 * (j[r * d + c] - j[c * d + r]);
            j[r * d + c] = a;
            j[c * d + r] = -a;
        }
    }
    for _ in 0..8 {
        if structure_defect(j, d) < 1e-15 {
            break;
        }
        mul_tn_into(j, j, xtx, d);
        for r in 0..d {
            for c in 0..d {
                xtx[r * d + c] = if r == c { 3.0 } else { 0.0 } - xtx[r * d + c];
            }
        }
        mul_into(j, xtx, next, d);
        for (a, b) in j.iter_mut().zip(next.iter()) {
            *a = 0.5 * b;
        }
    }
}

/// `e^a` by scaling and squaring of a Taylor series of at most 16 terms.
fn expm_into(a: &[f64], out: &mut [f64], d: usize, scratch: &mut [f64]) {
    let (scaled, rest) = scratch.split_at_mut(d * d);
    let (term, rest) = rest.split_at_mut(d * d);
    let tmp = &mut rest[..d * d];
    let norm: f64 = a.iter().map(|v| v.abs()).sum();
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let f = 0.5f64.powi(squarings);
    for (s, v) in scaled.iter_mut().zip(a) {
        *s = f * v;
    }
    for r in 0..d {
        for c in 0..d {
            let id = if r == c { 1.0 } else { 0.0 };
            out[r * d + c] = id;
            term[r * d + c] = id;
        }
    }
    for k in 1..=16 {
        mul_into(term, scaled, tmp, d);
        let inv = 1.0 / k as f64;
        let mut size = 0.0f64;
        for ((t, v), o) in term.iter_mut().zip(tmp.iter()).zip(out.iter_mut()) {
            *t = v * inv;
            *o += *t;
            size = size.max(t.abs());
        }
        if size < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        mul_into(out, out, tmp, d);
        out.copy_from_slice(tmp);
    }
}

/// Almost complex structure on the flat torus sampled at `m^{2n}` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct JGrid {
    n: usize,
    field: NodeField,
}

impl JGrid {
    /// Wrap node matrices, checking resolution and the pointwise constraints.
    pub fn new(n: usize, field: NodeField) -> Result<JGrid, FlowError> {
        if n < 1 {
            return Err(FlowError::Dimension(n));
        }
        if field.d != 2 * n {
            return Err(FlowError::Shape);
        }
        if field.m < 4 {
            return Err(FlowError::Resolution(field.m));
        }
        let grid = JGrid { n, field };
        if let Some((node, defect)) = grid.worst_node() {
            if defect > VALIDITY_TOL {
                return Err(FlowError::InvalidNode { node, defect });
            }
        }
        Ok(grid)
    }

    pub fn sample(n: usize, m: usize, j: impl Fn(&[f64]) -> Mat + Sync) -> Result<JGrid, FlowError> {
        if m < 4 {
            return Err(FlowError::Resolution(m));
        }
        JGrid::new(n, NodeField::sample(2 * n, m, j)?)
    }

    /// The constant standard structure (a Kähler grid).
    pub fn constant(n: usize, m: usize) -> Result<JGrid, FlowError> {
        let j0 = unstruct::standard_j(n.max(1));
        JGrid::sample(n, m, |_| j0.clone())
    }

    /// Grid sampled from the seeded flat random structure.
    pub fn from_random_structure(seed: u64, n: usize, m: usize, amplitude: f64) -> Result<JGrid, FlowError> {
        let f = unstruct::random_j_sampler(seed, n, amplitude)?;
        JGrid::sample(n, m, f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn resolution(&self) -> usize {
        self.field.m
    }

    pub fn spacing(&self) -> f64 {
        self.field.spacing()
    }

    pub fn nodes(&self) -> usize {
        self.field.nodes()
    }

    pub fn field(&self) -> &NodeField {
        &self.field
    }

    pub fn j(&self, node: usize) -> Mat {
        self.field.matrix(node)
    }

    fn worst_node(&self) -> Option<(usize, f64)> {
        let d = self.dim();
        (0..self.nodes())
            .map(|k| (k, structure_defect(self.field.node(k), d)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Largest pointwise defect of `J² = −I` and `JᵀJ = I`.
    pub fn validity_defect(&self) -> f64 {
        self.worst_node().map_or(0.0, |(_, v)| v)
    }

    /// `ξ_c = −½ J D_c J` at node `k` into `s.xi` (`d` blocks of `d²`).
    fn xi_at(&self, st: &Stencil, k: usize, s: &mut Scratch) {
        let d = self.dim();
        let b = d * d;
        let j = self.field.node(k);
        st.sites(k, &mut s.sites);
        let dj = &mut s.mats[0];
        for c in 0..d {
            st.fd4_block(&self.field.data, b, 0, &s.sites[c], dj);
            let xc = &mut s.xi[c * b..(c + 1) * b];
            mul_into(j, dj, xc, d);
            for v in xc.iter_mut() {
                *v *= -0.5;
            }
        }
    }

    /// Sum of `f(s, k)` over nodes after `xi_at` filled `s`; fixed chunks keep
    /// the result independent of scheduling.
    fn sum_over_xi(&self, f: impl Fn(&mut Scratch, usize) -> f64 + Sync) -> f64 {
        let d = self.dim();
        let st = Stencil::of(&self.field);
        let nodes = self.nodes();
        let starts: Vec<usize> = (0..nodes).step_by(CHUNK).collect();
        let parts: Vec<f64> = starts
            .par_iter()
            .map(|&s0| {
                let mut s = Scratch::new(d);
                let mut acc = 0.0;
                for k in s0..(s0 + CHUNK).min(nodes) {
                    self.xi_at(&st, k, &mut s);
                    acc += f(&mut s, k);
                }
                acc
            })
            .collect();
        parts.iter().sum()
    }
}

/// `ξ` at a node from the stencil, with its Gray–Hervella parts and Lee vector.
pub fn grid_torsion(grid: &JGrid, node: usize) -> Result<TorsionTensor, FlowError> {
    if node >= grid.nodes() {
        return Err(FlowError::Node { node });
    }
    let d = grid.dim();
    let mut s = Scratch::new(d);
    grid.xi_at(&Stencil::of(&grid.field), node, &mut s);
    let buf = s.xi;
    let xi: Vec<Mat> = buf.chunks(d * d).map(|c| Mat::from_row_slice(d, d, c)).collect();
    let psi = Psi::from_family(&xi);
    let j = grid.j(node);
    let components = gray_hervella_decompose(&psi, &j, grid.n, None)?;
    Ok(TorsionTensor {
        point: grid.field.coords(node),
        lee_vector: psi.trace12(),
        xi,
        components,
    })
}

/// The same stencil applied to a closed-form field: `ξ_c(x)` from samples of
/// `J` at `x ± h e_c, x ± 2h e_c`.
pub fn stencil_torsion(j_at: impl Fn(&[f64]) -> Mat, x: &[f64], h: f64) -> Vec<Mat> {
    let d = x.len();
    let j = j_at(x);
    (0..d)
        .map(|c| {
            let at = |o: f64| {
                let mut y = x.to_vec();
                y[c] += o * h;
                j_at(&y)
            };
            let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            let dj = Mat::from_fn(d, d, |r, s| fd4(m2[(r, s)], m1[(r, s)], p1[(r, s)], p2[(r, s)], h));
            -0.5 * (&j * dj)
        })
        .collect()
}

/// `½ Σ_nodes ‖ξ‖² h^{2n}`, streamed without storing `ξ`.
pub fn energy(grid: &JGrid) -> f64 {
    let vol = grid.spacing().powi(grid.dim() as i32);
    0.5 * grid.sum_over_xi(|s, _| dot(&s.xi, &s.xi)) * vol
}

/// Energy and its exact discrete gradient.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub energy: f64,
    /// Per-node `u(n)⊥` field `g` with `dE(φ) = −s ∫⟨g, φ⟩`; approximates `d*ξ`.
    pub gradient: NodeField,
    pub norm: f64,
}

/// Gradient of the discrete energy, exact for the stencil: the adjoint of the
/// difference operator is applied to `Jᵀξ_c`, the result pulled back through
/// `δJ = [φ, J]` and projected onto `u(n)⊥`.
pub fn gradient(grid: &JGrid) -> GradientEval {
    let d = grid.dim();
    let b = d * d;
    let b3 = b * d;
    let st = Stencil::of(&grid.field);
    let vol = grid.spacing().powi(d as i32);

    // Jᵀξ_c at every node; the energy comes out of the same pass.
    let mut jt_xi = vec![0.0; grid.nodes() * b3];
    let sums: Vec<f64> = jt_xi
        .par_chunks_mut(b3 * CHUNK)
        .enumerate()
        .map(|(chunk, slots)| {
            let mut s = Scratch::new(d);
            let mut acc = 0.0;
            for (i, slot) in slots.chunks_mut(b3).enumerate() {
                let k = chunk * CHUNK + i;
                grid.xi_at(&st, k, &mut s);
                acc += dot(&s.xi, &s.xi);
                let j = grid.field.node(k);
                for c in 0..d {
                    mul_tn_into(j, &s.xi[c * b..(c + 1) * b], &mut slot[c * b..(c + 1) * b], d);
                }
            }
            acc
        })
        .collect();
    let e = 0.5 * sums.iter().sum::<f64>() * vol;

    let gradient = NodeField::from_nodes_with(
        d,
        grid.resolution(),
        || Scratch::new(d),
        |s, k, out| {
            grid.xi_at(&st, k, s);
            let j = grid.field.node(k);
            let [gj, dj, tmp, dk, a] = &mut s.mats;
            gj.fill(0.0);
            for c in 0..d {
                st.fd4_block(&grid.field.data, b, 0, &s.sites[c], dj);
                mul_nt_into(&s.xi[c * b..(c + 1) * b], dj, tmp, d);
                st.fd4_block(&jt_xi, b3, c * b, &s.sites[c], dk);
                for e in 0..b {
                    gj[e] += -0.5 * tmp[e] + 0.5 * dk[e];
                }
            }
            // ⟨GJ, φJ − Jφ⟩ = ⟨GJ Jᵀ − Jᵀ GJ, φ⟩
            mul_nt_into(gj, j, a, d);
            mul_tn_into(j, gj, tmp, d);
            for e in 0..b {
                a[e] -= tmp[e];
            }
            for r in 0..d {
                for c in r..d {
                    let v = 0.5 * (a[r * d + c] - a[c * d + r]);
                    a[r * d + c] = v;
                    a[c * d + r] = -v;
                }
            }
            mul_into(j, a, tmp, d);
            mul_into(tmp, j, dj, d);
            for e in 0..b {
                out[e] = -0.5 * (a[e] + dj[e]);
            }
        },
    )
    .expect("shape of an existing grid");
    let norm = gradient.l2_norm();
    GradientEval {
        energy: e,
        gradient,
        norm,
    }
}

/// `d*ξ = −Σ_c D_c ξ_c` by differencing the stencil `ξ` once more.
pub fn dstar_xi_fd(grid: &JGrid) -> NodeField {
    let d = grid.dim();
    let b = d * d;
    let b3 = b * d;
    let st = Stencil::of(&grid.field);
    let mut xi = vec![0.0; grid.nodes() * b3];
    xi.par_chunks_mut(b3).enumerate().for_each_init(
        || Scratch::new(d),
        |s, (k, slot)| {
            grid.xi_at(&st, k, s);
            slot.copy_from_slice(&s.xi);
        },
    );
    NodeField::from_nodes_with(
        d,
        grid.resolution(),
        || Scratch::new(d),
        |s, k, out| {
            st.sites(k, &mut s.sites);
            out.fill(0.0);
            for c in 0..d {
                st.fd4_block(&xi, b3, c * b, &s.sites[c], &mut s.mats[0]);
                for e in 0..b {
                    out[e] -= s.mats[0][e];
                }
            }
        },
    )
    .expect("shape of an existing grid")
}

/// `J ← e^{tP} J e^{−tP}` at every node for a skew field `P`, followed by the
/// polar correction. Returns the new grid and the largest defect before correction.
pub fn conjugate(grid: &JGrid, p: &NodeField, t: f64) -> Result<(JGrid, f64), FlowError> {
    grid.field.same_shape(p)?;
    let d = grid.dim();
    let b = d * d;
    let mut field = grid.field.clone();
    let drift: Vec<f64> = field
        .data
        .par_chunks_mut(b)
        .enumerate()
        .map_init(
            || (vec![0.0; 3 * b], [(); 3].map(|_| vec![0.0; b])),
            |(scratch, [tp, e, tmp]), (k, j)| {
                for (x, v) in tp.iter_mut().zip(p.node(k)) {
                    *x = t * v;
                }
                expm_into(tp, e, d, scratch);
                mul_into(e, j, tmp, d);
                mul_nt_into(tmp, e, j, d);
                let defect = structure_defect(j, d);
                polar_correct(j, d, scratch);
                defect
            },
        )
        .collect();
    let drift = drift.into_iter().fold(0.0, f64::max);
    Ok((JGrid { n: grid.n, field }, drift))
}

/// Seeded smooth variation `φ = ½(P + JPJ)` in `u(n)⊥` at every node.
pub fn random_variation(grid: &JGrid, seed: u64, amplitude: f64) -> NodeField {
    let d = grid.dim();
    let p = unstruct::random_skew_sampler(seed, d, amplitude);
    let b = d * d;
    NodeField::from_nodes(d, grid.resolution(), |k, out| {
        let pk = p(&grid.field.coords(k));
        let j = grid.j(k);
        let perp = 0.5 * (&pk + &j * &pk * &j);
        for e in 0..b {
            out[e] = perp[(e / d, e % d)];
        }
    })
    .expect("shape of an existing grid")
}

/// Central difference of the energy along `φ` against `−s ∫⟨g, φ⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub finite_difference: f64,
    pub predicted: f64,
    pub rel_error: f64,
}

pub fn directional_check(
    grid: &JGrid,
    grad: &GradientEval,
    phi: &NodeField,
    eps: f64,
) -> Result<DirectionalCheck, FlowError> {
    let (plus, _) = conjugate(grid, phi, eps)?;
    let (minus, _) = conjugate(grid, phi, -eps)?;
    let fd = (energy(&plus) - energy(&minus)) / (2.0 * eps);
    let predicted = -VARIATION_SIGN * grad.gradient.inner(phi)?;
    Ok(DirectionalCheck {
        finite_difference: fd,
        predicted,
        rel_error: (fd - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE),
    })
}

/// `(E(J_ε) + E(J_{−ε}) − 2E(J)) / ε²`.
pub fn second_difference(grid: &JGrid, phi: &NodeField, eps: f64) -> Result<f64, FlowError> {
    let (plus, _) = conjugate(grid, phi, eps)?;
    let (minus, _) = conjugate(grid, phi, -eps)?;
    Ok((energy(&plus) + energy(&minus) - 2.0 * energy(grid)) / (eps * eps))
}

/// `∫(Σ_c ‖D_c φ‖² − 2 Σ_c ‖[ξ_c, φ]‖²) dv` with stencil derivatives.
pub fn hessian_quadratic(grid: &JGrid, phi: &NodeField) -> Result<f64, FlowError> {
    grid.field.same_shape(phi)?;
    let d = grid.dim();
    let b = d * d;
    let vol = grid.spacing().powi(d as i32);
    let st = Stencil::of(phi);
    let sum = grid.sum_over_xi(|s, k| {
        let [dphi, ab, ba, ..] = &mut s.mats;
        let p = phi.node(k);
        let mut acc = 0.0;
        for c in 0..d {
            st.fd4_block(&phi.data, b, 0, &s.sites[c], dphi);
            acc += dot(dphi, dphi);
            let xc = &s.xi[c * b..(c + 1) * b];
            mul_into(xc, p, ab, d);
            mul_into(p, xc, ba, d);
            acc -= 2.0 * ab.iter().zip(ba.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        acc
    });
    Ok(sum * vol)
}

/// Second variation at a numerically critical grid, or why it was not evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HessianValue {
    Value { hessian: f64 },
    Inapplicable { grad_norm: f64, threshold: f64 },
}

/// The second variation form, evaluated only when `‖g‖_{L²} < 10 tol_grad`.
pub fn hessian_form(grid: &JGrid, phi: &NodeField, tol_grad: f64) -> Result<HessianValue, FlowError> {
    let g = gradient(grid);
    let threshold = 10.0 * tol_grad;
    if !(g.norm < threshold) {
        return Ok(HessianValue::Inapplicable {
            grad_norm: g.norm,
            threshold,
        });
    }
    Ok(HessianValue::Value {
        hessian: hessian_quadratic(grid, phi)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentParams {
    pub max_iter: usize,
    pub tol_grad: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    /// Trial step is `growth ×` the last accepted step, capped at `max_step`.
    pub growth: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for DescentParams {
    fn default() -> Self {
        DescentParams {
            max_iter: 5000,
            tol_grad: 1e-5,
            initial_step: 1e-2,
            shrink: 0.5,
            armijo: 1e-4,
            growth: 2.0,
            max_step: 1.0,
            min_step: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub millis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxIter,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub grid: JGrid,
    pub trace: Vec<TraceRow>,
    pub status: FlowStatus,
    /// Largest constraint defect seen before a polar correction.
    pub max_drift: f64,
    /// Largest pointwise `‖d*ξ‖` on the final grid (stencil gradient field).
    pub terminal_harmonic: f64,
}

impl FlowResult {
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iteration)
    }

    pub fn initial_energy(&self) -> f64 {
        self.trace[0].energy
    }

    pub fn final_energy(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.energy)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.grad_norm)
    }

    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1].energy <= w[0].energy)
    }
}

/// Gradient descent `J ← e^{t s g} J e^{−t s g}` with Armijo backtracking.
pub fn descend(start: &JGrid, params: &DescentParams) -> Result<FlowResult, FlowError> {
    let clock = Instant::now();
    let mut grid = start.clone();
    let mut eval = gradient(&grid);
    let mut trace = vec![TraceRow {
        iteration: 0,
        energy: eval.energy,
        grad_norm: eval.norm,
        step: 0.0,
        millis: 0.0,
    }];
    let mut max_drift = 0.0f64;
    let mut step = params.initial_step;
    let mut status = FlowStatus::MaxIter;
    for iteration in 1..=params.max_iter {
        if eval.norm < params.tol_grad {
            status = FlowStatus::Converged;
            break;
        }
        let descent = eval.gradient.scaled(VARIATION_SIGN);
        let mut t = (step * params.growth).min(params.max_step);
        let accepted = loop {
            if t < params.min_step {
                break None;
            }
            let (trial, drift) = conjugate(&grid, &descent, t)?;
            let e = energy(&trial);
            if e <= eval.energy - params.armijo * t * eval.norm * eval.norm {
                break Some((trial, drift));
            }
            t *= params.shrink;
        };
        let Some((next, drift)) = accepted else {
            status = FlowStatus::Stalled;
            break;
        };
        max_drift = max_drift.max(drift);
        grid = next;
        eval = gradient(&grid);
        step = t;
        trace.push(TraceRow {
            iteration,
            energy: eval.energy,
            grad_norm: eval.norm,
            step: t,
            millis: clock.elapsed().as_secs_f64() * 1e3,
        });
    }
    if status == FlowStatus::MaxIter && eval.norm < params.tol_grad {
        status = FlowStatus::Converged;
    }
    let terminal_harmonic = eval.gradient.max_norm();
    Ok(FlowResult {
        grid,
        trace,
        status,
        max_drift,
        terminal_harmonic,
    })
}

/// Trace as CSV with header `iteration,energy,grad_norm,step,millis`.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "energy", "grad_norm", "step", "millis"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            crate::numfmt::sig17(r.energy),
            crate::numfmt::sig17(r.grad_norm),
            crate::numfmt::sig17(r.step),
            crate::numfmt::sig17(r.millis),
        ])?;
    }
    w.flush()?;
    Ok(())
}
