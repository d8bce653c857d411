//! Random problem generators and reference routines shared by the property
//! suites. Nothing here calls into the solver under test.
#![allow(dead_code)]

pub mod criteria;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ustad_core::domain::ConstraintSystem;
use ustad_core::poly::QuadPoly;

pub type Q = BigRational;

pub fn q(k: i64) -> Q {
    BigRational::from_integer(BigInt::from(k))
}

pub fn qf(x: f64) -> Q {
    BigRational::from_float(x).expect("finite")
}

fn small(rng: &mut ChaCha8Rng, k: i64) -> f64 {
    rng.gen_range(-k..=k) as f64
}

/// A random system around an integer point, so it is never empty. About a
/// third of the rows involve one variable and feed the box.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ConstraintSystem {
    let p: Vec<f64> = (0..n).map(|_| small(rng, 3)).collect();
    let mut sys = ConstraintSystem::new(n);
    while sys.len() < m {
        let row: Vec<f64> = if rng.gen_bool(0.35) {
            let mut r = vec![0.0; n];
            r[rng.gen_range(0..n)] = if rng.gen_bool(0.5) { 1.0 } else { -(rng.gen_range(1..=2) as f64) };
            r
        } else {
            (0..n).map(|_| small(rng, 3)).collect()
        };
        if row.iter().all(|&a| a == 0.0) {
            continue;
        }
        let ap: f64 = row.iter().zip(&p).map(|(a, x)| a * x).sum();
        sys.push(row, ap + rng.gen_range(0..=3) as f64).unwrap();
    }
    sys
}

pub fn random_linear(rng: &mut ChaCha8Rng, n: usize) -> QuadPoly {
    QuadPoly::linear((0..n).map(|_| small(rng, 3)).collect(), small(rng, 5))
}

/// Degree at most two; each quadratic monomial is present with
/// probability one half.
pub fn random_quad(rng: &mut ChaCha8Rng, n: usize) -> QuadPoly {
    let mut bil = Vec::new();
    let mut sq = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.5) {
            sq.push((i, small(rng, 2)));
        }
        for k in i + 1..n {
            if rng.gen_bool(0.4) {
                bil.push(((i, k), small(rng, 2)));
            }
        }
    }
    QuadPoly::from_parts(n, bil, sq, (0..n).map(|_| small(rng, 3)).collect(), small(rng, 5)).unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> (QuadPoly, ConstraintSystem) {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    let sys = random_system(rng, n, m);
    let f = if rng.gen_bool(0.4) { random_linear(rng, n) } else { random_quad(rng, n) };
    (f, sys)
}

/// Per-variable bounds from rows with a single nonzero coefficient.
pub fn naive_box(sys: &ConstraintSystem) -> Vec<(f64, f64)> {
    let n = sys.n_vars();
    let mut out = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
    for (row, b) in sys.rows() {
        let nz: Vec<usize> = (0..n).filter(|&j| row[j] != 0.0).collect();
        if let [j] = nz[..] {
            let v = b / row[j];
            if row[j] > 0.0 {
                out[j].1 = out[j].1.min(v);
            } else {
                out[j].0 = out[j].0.max(v);
            }
        }
    }
    out
}

/// Extended product with `0 * inf = 0`.
fn xmul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Infimum of `f` over the box, each monomial minimized on its own.
/// `-inf` when some monomial is unbounded below.
pub fn interval_relaxation(f: &QuadPoly, sys: &ConstraintSystem) -> f64 {
    let bx = naive_box(sys);
    let mut total = f.constant_term();
    for (j, &c) in f.linear_coeffs().iter().enumerate() {
        let (lo, hi) = bx[j];
        total += if c > 0.0 {
            c * lo
        } else if c < 0.0 {
            c * hi
        } else {
            0.0
        };
    }
    for (&i, &a) in f.square() {
        let (lo, hi) = bx[i];
        total += if a > 0.0 {
            if lo <= 0.0 && 0.0 <= hi {
                0.0
            } else {
                (a * lo * lo).min(a * hi * hi)
            }
        } else if lo.is_infinite() || hi.is_infinite() {
            f64::NEG_INFINITY
        } else {
            (a * lo * lo).min(a * hi * hi)
        };
    }
    for (&(i, k), &h) in f.bilinear() {
        let (l1, u1) = bx[i];
        let (l2, u2) = bx[k];
        let m = [(l1, l2), (l1, u2), (u1, l2), (u1, u2)]
            .iter()
            .map(|&(x, y)| xmul(h, xmul(x, y)))
            .fold(f64::INFINITY, f64::min);
        total += m;
    }
    total
}

fn solve_square(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let n = b.len();
    let mut m: Vec<Vec<Q>> = a.iter().zip(b).map(|(r, x)| r.iter().cloned().chain([x.clone()]).collect()).collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col].clone();
        for x in m[col].iter_mut() {
            *x = &*x / &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    let v = &m[col][c] * &f;
                    m[r][c] -= v;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n].clone()).collect())
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if m < k {
        return Vec::new();
    }
    let mut out = subsets(m - 1, k);
    for mut s in subsets(m - 1, k - 1) {
        s.push(m - 1);
        out.push(s);
    }
    out
}

/// `min c·v + d` over the vertices of `{A v <= b}`, or `None` if there are
/// none.
pub fn vertex_min(c: &[f64], d: f64, sys: &ConstraintSystem) -> Option<Q> {
    let n = sys.n_vars();
    let a: Vec<Vec<Q>> = sys.a().iter().map(|r| r.iter().map(|&x| qf(x)).collect()).collect();
    let b: Vec<Q> = sys.b().iter().map(|&x| qf(x)).collect();
    let c: Vec<Q> = c.iter().map(|&x| qf(x)).collect();
    let mut best: Option<Q> = None;
    for s in subsets(a.len(), n) {
        let sa: Vec<Vec<Q>> = s.iter().map(|&i| a[i].clone()).collect();
        let sb: Vec<Q> = s.iter().map(|&i| b[i].clone()).collect();
        let Some(v) = solve_square(&sa, &sb) else { continue };
        let feasible = a.iter().zip(&b).all(|(r, bi)| {
            let lhs: Q = r.iter().zip(&v).map(|(x, y)| x * y).sum();
            !(lhs - bi).is_positive()
        });
        if feasible {
            let val: Q = c.iter().zip(&v).map(|(x, y)| x * y).sum::<Q>() + qf(d);
            if best.as_ref().map_or(true, |b| val < *b) {
                best = Some(val);
            }
        }
    }
    best
}

/// Cyclic projection onto `{M θ <= h - margin}`; `None` if it stalls.
pub fn project_inside(m: &[Vec<f64>], h: &[f64], mut theta: Vec<f64>, margin: f64) -> Option<Vec<f64>> {
    for _ in 0..2000 {
        let mut worst: Option<(usize, f64)> = None;
        for (j, (row, hj)) in m.iter().zip(h).enumerate() {
            let s = hj - margin - row.iter().zip(&theta).map(|(a, t)| a * t).sum::<f64>();
            if s < 0.0 && worst.map_or(true, |(_, w)| s < w) {
                worst = Some((j, s));
            }
        }
        let Some((j, s)) = worst else { return Some(theta) };
        let nn: f64 = m[j].iter().map(|a| a * a).sum();
        if nn == 0.0 {
            return None;
        }
        for (t, a) in theta.iter_mut().zip(&m[j]) {
            *t += (s - margin * 1e-3) / nn * a;
        }
    }
    None
}
