//! Property-based invariants.

use ahtorsion::cli::halton_points;
use ahtorsion::flow::{self, JGrid};
use ahtorsion::numfmt;
use ahtorsion::unstruct::{gray_hervella_decompose, random_j_sampler, standard_j, Mat, Psi};
use proptest::prelude::*;

fn skew(d: usize, v: &[f64]) -> Mat {
    let a = Mat::from_fn(d, d, |r, c| v[r * d + c]);
    0.5 * (&a - a.transpose())
}

/// Random `ψ` with every `ξ_X` in `u(n)⊥`.
fn random_psi(n: usize, v: &[f64]) -> Psi {
    let d = 2 * n;
    let j = standard_j(n);
    let xi: Vec<Mat> = (0..d)
        .map(|x| {
            let a = skew(d, &v[x * d * d..(x + 1) * d * d]);
            0.5 * (&a + &j * &a * &j)
        })
        .collect();
    Psi::from_family(&xi)
}

/// `U ∈ U(n)` as the exponential of a random element of `u(n)`.
fn unitary(n: usize, v: &[f64]) -> Mat {
    let d = 2 * n;
    let j = standard_j(n);
    let a = skew(d, v);
    (0.5 * (&a - &j * &a * &j)).exp()
}

fn rotate(psi: &Psi, u: &Mat) -> Psi {
    let d = u.nrows();
    Psi::from_fn(d, |x, y, z| {
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    s += u[(x, a)] * u[(y, b)] * u[(z, c)] * psi.at(a, b, c);
                }
            }
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gray_hervella_parts_are_orthogonal_and_rotation_invariant(
        n in 2usize..=3,
        v in prop::collection::vec(-1.0f64..1.0, 216),
        w in prop::collection::vec(-2.0f64..2.0, 36),
    ) {
        let d = 2 * n;
        let psi = random_psi(n, &v);
        let j = standard_j(n);
        let gh = gray_hervella_decompose(&psi, &j, n, None).unwrap();
        let total = psi.dot(&psi);
        for a in 0..4 {
            for b in (a + 1)..4 {
                prop_assert!(gh.parts[a].dot(&gh.parts[b]).abs() < 1e-12 * (1.0 + total));
            }
        }
        let sum: f64 = gh.norms().iter().map(|x| x * x).sum();
        prop_assert!((sum - total).abs() < 1e-12 * (1.0 + total));

        let u = unitary(n, &w[..d * d]);
        prop_assert!((&u * &j - &j * &u).amax() < 1e-12);
        let rotated = gray_hervella_decompose(&rotate(&psi, &u), &j, n, None).unwrap();
        for (a, b) in gh.norms().iter().zip(rotated.norms()) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
        }
    }

    #[test]
    fn random_j_is_orthogonal_complex_structure(
        seed in 0u64..1000,
        n in 2usize..=3,
        x in prop::collection::vec(-10.0f64..10.0, 6),
    ) {
        let j = random_j_sampler(seed, n, 0.5).unwrap();
        let m = j(&x[..2 * n]);
        let d = 2 * n;
        prop_assert!((&m * &m + Mat::identity(d, d)).amax() < 1e-12);
        prop_assert!((&m + m.transpose()).amax() < 1e-12);
    }

    #[test]
    fn halton_points_stay_in_unit_cube(dim in 1usize..=8, count in 1usize..64, seed in any::<u64>()) {
        let pts = halton_points(dim, count, seed);
        prop_assert_eq!(pts.len(), count);
        prop_assert!(pts.iter().all(|p| p.len() == dim && p.iter().all(|u| (0.0..1.0).contains(u))));
    }

    #[test]
    fn json_floats_round_trip(xs in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 0..20)) {
        let text = numfmt::to_json_string(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, xs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_is_invariant_under_constant_rotation_and_shift(
        seed in 0u64..100,
        w in prop::collection::vec(-2.0f64..2.0, 16),
        shift in 0usize..6,
    ) {
        let (n, m) = (2, 6);
        let j = random_j_sampler(seed, n, 0.3).unwrap();
        let base = JGrid::sample(n, m, &j).unwrap();
        let e = flow::energy(&base);
        let u = skew(4, &w).exp();
        let rotated = JGrid::sample(n, m, |x| &u * j(x) * u.transpose()).unwrap();
        prop_assert!((flow::energy(&rotated) - e).abs() < 1e-10 * e);
        let h = base.spacing();
        let shifted = JGrid::sample(n, m, |x| {
            let mut y = x.to_vec();
            y[shift % 4] += (shift as f64) * h;
            j(&y)
        })
        .unwrap();
        prop_assert!((flow::energy(&shifted) - e).abs() < 1e-10 * e);
    }

    #[test]
    fn conjugation_stays_on_structures(seed in 0u64..100, t in -0.5f64..0.5) {
        let g = JGrid::from_random_structure(seed, 2, 4, 0.3).unwrap();
        let phi = flow::random_variation(&g, seed + 1, 1.0);
        let (next, drift) = flow::conjugate(&g, &phi, t).unwrap();
        prop_assert!(drift < 1e-10);
        prop_assert!(next.validity_defect() < 1e-10);
    }
}
