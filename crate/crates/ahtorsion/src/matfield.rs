//! Small dense row-major matrices over any [`Scalar`].

use crate::jets::Scalar;

pub fn identity<S: Scalar>(seed: &S, d: usize) -> Vec<S> {
    (0..d * d)
        .map(|k| seed.lift(if k / d == k % d { 1.0 } else { 0.0 }))
        .collect()
}

pub fn transpose<S: Scalar>(a: &[S], d: usize) -> Vec<S> {
    (0..d * d).map(|k| a[(k % d) * d + k / d].clone()).collect()
}

pub fn mul<S: Scalar>(a: &[S], b: &[S], d: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut s = a[i * d].clone() * b[j].clone();
            for k in 1..d {
                s = s + a[i * d + k].clone() * b[k * d + j].clone();
            }
            out.push(s);
        }
    }
    out
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

pub fn scale<S: Scalar>(a: &[S], s: f64) -> Vec<S> {
    a.iter().map(|x| x.clone() * s).collect()
}

/// Gauss-Jordan inverse with partial pivoting on the values; `None` if singular.
pub fn inverse<S: Scalar>(a: &[S], d: usize) -> Option<Vec<S>> {
    let mut m = a.to_vec();
    let mut inv = identity(&a[0], d);
    for col in 0..d {
        let pivot = (col..d).max_by(|&r, &s| {
            m[r * d + col]
                .value()
                .abs()
                .total_cmp(&m[s * d + col].value().abs())
        })?;
        if m[pivot * d + col].value().abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..d {
                m.swap(pivot * d + k, col * d + k);
                inv.swap(pivot * d + k, col * d + k);
            }
        }
        let p = m[col * d + col].lift(1.0) / m[col * d + col].clone();
        for k in 0..d {
            m[col * d + k] = m[col * d + k].clone() * p.clone();
            inv[col * d + k] = inv[col * d + k].clone() * p.clone();
        }
        for r in 0..d {
            if r == col {
                continue;
            }
            let f = m[r * d + col].clone();
            for k in 0..d {
                m[r * d + k] = m[r * d + k].clone() - f.clone() * m[col * d + k].clone();
                inv[r * d + k] = inv[r * d + k].clone() - f.clone() * inv[col * d + k].clone();
            }
        }
    }
    Some(inv)
}

/// Lower Cholesky factor `L` with `a = L Lᵀ`; `None` unless positive definite.
pub fn cholesky<S: Scalar>(a: &[S], d: usize) -> Option<Vec<S>> {
    let zero = a[0].lift(0.0);
    let mut l = vec![zero; d * d];
    for j in 0..d {
        let mut s = a[j * d + j].clone();
        for k in 0..j {
            s = s - l[j * d + k].clone() * l[j * d + k].clone();
        }
        if !(s.value() > 0.0) {
            return None;
        }
        let diag = s.sqrt();
        for i in j + 1..d {
            let mut t = a[i * d + j].clone();
            for k in 0..j {
                t = t - l[i * d + k].clone() * l[j * d + k].clone();
            }
            l[i * d + j] = t / diag.clone();
        }
        l[j * d + j] = diag;
    }
    Some(l)
}

/// Matrix exponential by scaling and squaring of the Taylor series.
pub fn exp<S: Scalar>(a: &[S], d: usize) -> Vec<S> {
    let norm = a.iter().map(|x| x.value().abs()).sum::<f64>();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = scale(a, 0.5f64.powi(squarings as i32));
    let mut out = identity(&a[0], d);
    let mut term = out.clone();
    for k in 1..=18 {
        term = scale(&mul(&term, &scaled, d), 1.0 / k as f64);
        out = add(&out, &term);
    }
    for _ in 0..squarings {
        out = mul(&out, &out, d);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::Jet;

    #[test]
    fn inverse_of_jets() {
        let x = Jet::point(&[0.3, -0.2], 3);
        let a = vec![
            x[0].clone().exp(),
            x[1].clone() * 0.5,
            x[0].clone() * x[1].clone(),
            x[1].clone().cos() + 1.0,
        ];
        let inv = inverse(&a, 2).unwrap();
        let prod = mul(&a, &inv, 2);
        for (k, p) in prod.iter().enumerate() {
            let want = if k % 3 == 0 { 1.0 } else { 0.0 };
            assert!((p.value() - want).abs() < 1e-14);
            assert!(p.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 2.0];
        let l = cholesky(&a, 3).unwrap();
        let back = mul(&l, &transpose(&l, 3), 3);
        for (u, v) in back.iter().zip(a) {
            assert!((u - v).abs() < 1e-14);
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn exp_of_rotation_generator() {
        let t = 2.7f64;
        let e = exp(&[0.0, -t, t, 0.0], 2);
        let want = [t.cos(), -t.sin(), t.sin(), t.cos()];
        for (u, v) in e.iter().zip(want) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}
