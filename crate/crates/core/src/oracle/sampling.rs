//! Sampling upper estimates of `min f` over a polyhedron.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::domain::{dot, extract_box, ConstraintSystem};
use crate::error::{Error, Result};
use crate::poly::QuadPoly;

use super::simplex::{lp_min_system, rational_to_f64, LpOutcome};

/// Coordinates are confined to `[-CLAMP, CLAMP]`.
pub const CLAMP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMin {
    pub value: f64,
    pub point: Vec<f64>,
    pub evaluated: usize,
}

fn grad(f: &QuadPoly, x: &[f64]) -> Vec<f64> {
    let mut g = f.linear_coeffs().to_vec();
    for (&i, &q) in f.square() {
        g[i] += 2.0 * q * x[i];
    }
    for (&(i, k), &h) in f.bilinear() {
        g[i] += h * x[k];
        g[k] += h * x[i];
    }
    g
}

fn curvature(f: &QuadPoly, d: &[f64]) -> f64 {
    f.square().iter().map(|(&i, &q)| q * d[i] * d[i]).sum::<f64>()
        + f.bilinear().iter().map(|(&(i, k), &h)| h * d[i] * d[k]).sum::<f64>()
}

/// Feasible step interval of `x + t d`.
fn chord(sys: &ConstraintSystem, x: &[f64], d: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (row, b) in sys.rows() {
        let rate = dot(row, d);
        let slack = (b - dot(row, x)).max(0.0);
        if rate > 1e-14 {
            hi = hi.min(slack / rate);
        } else if rate < -1e-14 {
            lo = lo.max(-slack / -rate);
        }
    }
    (lo.min(0.0), hi.max(0.0))
}

struct Best {
    value: f64,
    point: Vec<f64>,
    evaluated: usize,
}

impl Best {
    fn offer(&mut self, f: &QuadPoly, x: &[f64]) {
        self.evaluated += 1;
        if let Ok(v) = f.eval(x) {
            if v < self.value {
                self.value = v;
                self.point = x.to_vec();
            }
        }
    }
}

/// Exact minimizer of `f` on the chord through `x` along `d`.
fn line_min(f: &QuadPoly, sys: &ConstraintSystem, x: &[f64], d: &[f64]) -> Vec<f64> {
    let (lo, hi) = chord(sys, x, d);
    let (lo, hi) = (lo * (1.0 - 1e-12), hi * (1.0 - 1e-12));
    let beta = dot(&grad(f, x), d);
    let gamma = curvature(f, d);
    let val = |t: f64| beta * t + gamma * t * t;
    let mut t = if val(lo) <= val(hi) { lo } else { hi };
    if gamma > 0.0 {
        let star = (-beta / (2.0 * gamma)).clamp(lo, hi);
        if val(star) < val(t) {
            t = star;
        }
    }
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// The system with every coordinate clamped to `[-CLAMP, CLAMP]`.
pub fn clamped(sys: &ConstraintSystem) -> Result<ConstraintSystem> {
    let n = sys.n_vars();
    let (bx, _) = extract_box(sys)?;
    if bx.dims().iter().any(|d| !d.is_bounded()) {
        log::warn!("unbounded coordinates clamped to +/-{CLAMP:e} for sampling");
    }
    let mut out = sys.clone();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        out.push(e.clone(), CLAMP)?;
        e[i] = -1.0;
        out.push(e, CLAMP)?;
    }
    Ok(out)
}

/// A feasible point: the average of LP vertices in coordinate directions.
fn seed(sys: &ConstraintSystem, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = sys.n_vars();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            dirs.push(e);
        }
    }
    for _ in 0..2 {
        dirs.push((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    let mut vertices = Vec::new();
    for d in dirs {
        match lp_min_system(&d, 0.0, sys)? {
            LpOutcome::Optimal { point, .. } => vertices.push(point.iter().map(rational_to_f64).collect::<Vec<_>>()),
            LpOutcome::Infeasible => return Err(Error::NoFeasibleSeed("the constraint system is empty".into())),
            LpOutcome::Unbounded => {}
        }
    }
    if vertices.is_empty() {
        return Err(Error::NoFeasibleSeed("no bounded vertex found".into()));
    }
    let k = vertices.len() as f64;
    let center = (0..n).map(|j| vertices.iter().map(|v| v[j]).sum::<f64>() / k).collect();
    Ok((center, vertices))
}

/// Minimum of `f` over hit-and-run samples, LP vertices, feasible box
/// corners and line-minimization polishing. Never below the true minimum
/// beyond float error.
pub fn sample_min(f: &QuadPoly, sys: &ConstraintSystem, n_samples: usize, rng_seed: u64) -> Result<SampleMin> {
    let n = sys.n_vars();
    if f.n_vars() != n {
        return Err(Error::DimensionMismatch { expected: n, found: f.n_vars() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let sys = clamped(sys)?;
    if n == 0 {
        let v = f.eval(&[])?;
        return Ok(SampleMin { value: v, point: Vec::new(), evaluated: 1 });
    }
    let (center, vertices) = seed(&sys, &mut rng)?;
    let mut best = Best { value: f64::INFINITY, point: center.clone(), evaluated: 0 };
    best.offer(f, &center);
    for v in &vertices {
        best.offer(f, v);
    }
    if let LpOutcome::Optimal { point, .. } = lp_min_system(f.linear_coeffs(), 0.0, &sys)? {
        best.offer(f, &point.iter().map(rational_to_f64).collect::<Vec<_>>());
    }
    let (bx, _) = extract_box(&sys)?;
    if n <= 12 {
        for mask in 0u32..(1 << n) {
            let corner: Vec<f64> = (0..n)
                .map(|i| {
                    let d = bx.dim(i);
                    if mask >> i & 1 == 1 { d.hi.to_f64() } else { d.lo.to_f64() }
                })
                .collect();
            if sys.satisfied_by(&corner, 1e-9) {
                best.offer(f, &corner);
            }
        }
    }

    let mut x = center;
    for _ in 0..n_samples {
        let d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (lo, hi) = chord(&sys, &x, &d);
        let (lo, hi) = (lo * (1.0 - 1e-9), hi * (1.0 - 1e-9));
        let t = if hi > lo { rng.gen_range(lo..=hi) } else { 0.0 };
        x = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
        best.offer(f, &x);
        let polished = line_min(f, &sys, &x, &d);
        best.offer(f, &polished);
    }

    for round in 0..(4 * n + 8) {
        let start = best.point.clone();
        let d: Vec<f64> = if round < 2 * n {
            let mut e = vec![0.0; n];
            e[round % n] = 1.0;
            e
        } else if round % 2 == 0 {
            grad(f, &start).iter().map(|g| -g).collect()
        } else {
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        if d.iter().all(|x| *x == 0.0) {
            continue;
        }
        let p = line_min(f, &sys, &start, &d);
        best.offer(f, &p);
    }
    Ok(SampleMin { value: best.value, point: best.point, evaluated: best.evaluated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_quad;

    #[test]
    fn quadratic_example_near_quarter() {
        // x >= 0, 0 <= y <= 16, x + y >= 0, x - y >= -16
        let sys = ConstraintSystem::from_rows(
            2,
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0], vec![-1.0, -1.0], vec![-1.0, 1.0]],
            vec![0.0, 0.0, 16.0, 0.0, 16.0],
        )
        .unwrap();
        let f = parse_quad("x^2 - x", &["x", "y"]).unwrap();
        let s = sample_min(&f, &sys, 1000, 3).unwrap();
        assert!(s.value <= -0.2499 && s.value >= -0.25 - 1e-12, "{}", s.value);
    }

    #[test]
    fn constant_objective() {
        let sys = ConstraintSystem::from_rows(1, vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        let s = sample_min(&QuadPoly::constant(1, 7.0), &sys, 10, 0).unwrap();
        assert_eq!(s.value, 7.0);
    }

    #[test]
    fn empty_region_has_no_seed() {
        let sys = ConstraintSystem::from_rows(1, vec![vec![1.0], vec![-1.0]], vec![-1.0, 0.0]).unwrap();
        assert!(matches!(sample_min(&QuadPoly::var(1, 0), &sys, 10, 0), Err(Error::Infeasible { .. }) | Err(Error::NoFeasibleSeed(_))));
    }
}
