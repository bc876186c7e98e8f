//! Numerical kernels: Jacobi-preconditioned conjugate gradients, a locking
//! Lanczos eigensolver, and exact rank of integer matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Relative residual `‖b − Ax‖ / ‖b‖` to reach.
    pub tol: f64,
    pub max_iter: usize,
}

impl CgOptions {
    pub fn new(tol: f64, n: usize) -> Self {
        CgOptions {
            tol,
            max_iter: 20 * n + 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `Ax = b` for symmetric positive (semi-)definite `A` given as a
/// matrix-free product. `diag` is the Jacobi preconditioner; non-positive
/// entries fall back to 1. Semi-definite systems converge when `b ∈ range(A)`.
pub fn pcg<A>(apply: A, diag: &[f64], rhs: &[f64], opts: &CgOptions) -> Result<CgOutcome>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut rel;
    let mut last_true = f64::INFINITY;
    let mut stalls = 0;
    let mut best = Vec::new();
    let floor = 1e4 * f64::EPSILON * (n as f64).sqrt();
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // only happens for b ∉ range(A) or a loss of definiteness
            break;
        }
        let alpha = rz / pap;
        alphas.push(alpha);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= opts.tol {
            // confirm against the true residual; the recurrence drifts
            apply(&x, &mut ap);
            for i in 0..n {
                r[i] = rhs[i] - ap[i];
            }
            rel = norm(&r) / bnorm;
            if rel <= opts.tol {
                return Ok(CgOutcome {
                    x,
                    iterations: it,
                    rel_residual: rel,
                });
            }
            if rel > 0.5 * last_true {
                stalls += 1;
            }
            if rel < last_true {
                last_true = rel;
                best.clone_from(&x);
            }
            if stalls >= 5 {
                // stalled: round-off floor, or b ∉ range(A)
                if last_true <= floor {
                    return Ok(CgOutcome {
                        x: best,
                        iterations: it,
                        rel_residual: last_true,
                    });
                }
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv[i];
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    apply(&x, &mut ap);
    let true_rel = norm(&rhs.iter().zip(&ap).map(|(b, a)| b - a).collect::<Vec<_>>()) / bnorm;
    Err(Error::NonConvergence {
        iterations: alphas.len(),
        residual: true_rel,
        condition: condition_from_cg(&alphas, &betas),
    })
}

/// Condition estimate of the preconditioned operator from the Lanczos
/// tridiagonal implied by the CG coefficients (last 300 steps).
fn condition_from_cg(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len().min(300);
    if k == 0 {
        return f64::NAN;
    }
    let off = alphas.len() - k;
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        let a = alphas[off + i];
        let mut d = 1.0 / a;
        if off + i > 0 {
            if let Some(&b) = betas.get(off + i - 1) {
                d += b / alphas[off + i - 1];
            }
        }
        t[(i, i)] = d;
        if i + 1 < k {
            if let Some(&b) = betas.get(off + i) {
                let e = b.sqrt() / a;
                t[(i, i + 1)] = e;
                t[(i + 1, i)] = e;
            }
        }
    }
    let ev = SymmetricEigen::new(t).eigenvalues;
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub tol: f64,
    pub max_subspace: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-8,
            max_subspace: 1200,
            seed: 0,
        }
    }
}

/// The `count` smallest eigenvalues of a symmetric operator.
///
/// Each restart grows a Krylov basis from a random vector orthogonal to the
/// locked eigenvectors, then runs Rayleigh-Ritz on the locked vectors plus
/// that basis and locks one more Ritz pair once its explicit residual
/// `‖Ay − θy‖` is at most `tol · ‖A‖`. One pair per restart lets repeated
/// eigenvalues surface one copy at a time.
pub fn lanczos_smallest<A>(
    apply: A,
    n: usize,
    count: usize,
    opts: &LanczosOptions,
) -> Result<Vec<f64>>
where
    A: Fn(&[f64], &mut [f64]),
{
    let count = count.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut locked_images: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut values: Vec<f64> = Vec::with_capacity(count);
    let mut scale = 0.0f64;
    let mut subspace = (3 * count + 40).min(n).max(1);
    let mut total_steps = 0usize;
    while locked.len() < count {
        let free = n - locked.len();
        let m = subspace.min(free);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut v, &locked);
        orthogonalize(&mut v, &locked);
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let mut basis = vec![v];
        let mut images: Vec<Vec<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            let mut w = vec![0.0; n];
            apply(&basis[j], &mut w);
            total_steps += 1;
            images.push(w.clone());
            if j + 1 == m {
                break;
            }
            orthogonalize(&mut w, &locked);
            orthogonalize(&mut w, &basis);
            orthogonalize(&mut w, &locked);
            orthogonalize(&mut w, &basis);
            let b = norm(&w);
            let a = dot(&images[j], &basis[j]).abs();
            if b <= 1e-12 * scale.max(a).max(f64::MIN_POSITIVE) {
                break;
            }
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }
        basis.truncate(images.len());
        let vs: Vec<&Vec<f64>> = locked.iter().chain(&basis).collect();
        let avs: Vec<&Vec<f64>> = locked_images.iter().chain(&images).collect();
        let k = vs.len();
        let mut h = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let x = 0.5 * (dot(vs[i], avs[j]) + dot(vs[j], avs[i]));
                h[(i, j)] = x;
                h[(j, i)] = x;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        scale = order
            .iter()
            .map(|&i| eig.eigenvalues[i].abs())
            .fold(scale, f64::max);
        let want = locked.len() + 1;
        let mut new_vecs = Vec::with_capacity(want);
        let mut new_imgs = Vec::with_capacity(want);
        let mut worst = 0.0f64;
        for &c in order.iter().take(want) {
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for r in 0..k {
                let coef = eig.eigenvectors[(r, c)];
                for i in 0..n {
                    y[i] += coef * vs[r][i];
                    ay[i] += coef * avs[r][i];
                }
            }
            let theta = eig.eigenvalues[c];
            let res: f64 = ay
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - theta * b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(res);
            new_vecs.push(y);
            new_imgs.push(ay);
        }
        if worst <= opts.tol * scale.max(f64::MIN_POSITIVE) {
            values = order
                .iter()
                .take(want)
                .map(|&c| eig.eigenvalues[c])
                .collect();
            locked = new_vecs;
            locked_images = new_imgs;
        } else if subspace >= opts.max_subspace.min(free) {
            return Err(Error::NonConvergence {
                iterations: total_steps,
                residual: worst / scale.max(f64::MIN_POSITIVE),
                condition: f64::NAN,
            });
        } else {
            subspace = (subspace * 2).min(opts.max_subspace);
        }
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn orthogonalize(w: &mut [f64], against: &[Vec<f64>]) {
    for q in against {
        let c = dot(w, q);
        for (x, y) in w.iter_mut().zip(q) {
            *x -= c * y;
        }
    }
}

const RANK_PRIMES: [u64; 2] = [2_305_843_009_213_693_951, 4_294_967_291];

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, p);
        }
        a = mul_mod(a, a, p);
        e >>= 1;
    }
    r
}

/// Rank over GF(p) of a sparse integer matrix given as rows of
/// `(column, value)` pairs sorted by column.
pub fn rank_mod_p(rows: &[Vec<(u32, i64)>], p: u64) -> usize {
    let reduce = |v: i64| -> u64 { v.rem_euclid(p as i64) as u64 };
    let mut pivots: std::collections::HashMap<u32, Vec<(u32, u64)>> = Default::default();
    let mut rank = 0;
    for row in rows {
        let mut cur: Vec<(u32, u64)> = row
            .iter()
            .map(|&(c, v)| (c, reduce(v)))
            .filter(|&(_, v)| v != 0)
            .collect();
        while let Some(&(lead, a)) = cur.first() {
            match pivots.get(&lead) {
                Some(piv) => {
                    // cur ← cur − a · piv (piv has leading coefficient 1)
                    let mut out = Vec::with_capacity(cur.len() + piv.len());
                    let (mut i, mut j) = (0, 0);
                    while i < cur.len() || j < piv.len() {
                        let ci = cur.get(i).map(|x| x.0).unwrap_or(u32::MAX);
                        let cj = piv.get(j).map(|x| x.0).unwrap_or(u32::MAX);
                        if ci < cj {
                            out.push(cur[i]);
                            i += 1;
                        } else if cj < ci {
                            let v = (p - mul_mod(a, piv[j].1, p)) % p;
                            if v != 0 {
                                out.push((cj, v));
                            }
                            j += 1;
                        } else {
                            let v = (cur[i].1 + p - mul_mod(a, piv[j].1, p)) % p;
                            if v != 0 {
                                out.push((ci, v));
                            }
                            i += 1;
                            j += 1;
                        }
                    }
                    cur = out;
                }
                None => {
                    let inv = pow_mod(a, p - 2, p);
                    let normed = cur.iter().map(|&(c, v)| (c, mul_mod(v, inv, p))).collect();
                    pivots.insert(lead, normed);
                    rank += 1;
                    break;
                }
            }
        }
    }
    rank
}

/// Rank of an integer matrix: the larger of its ranks modulo two large
/// primes. Modular rank never exceeds rational rank, and both primes would
/// have to divide every maximal minor for this to undercount.
pub fn integer_rank(rows: &[Vec<(u32, i64)>]) -> usize {
    RANK_PRIMES
        .iter()
        .map(|&p| rank_mod_p(rows, p))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 2.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn cg_solves_grounded_path() {
        let n = 50;
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let out = pcg(
            path_laplacian(n),
            &vec![2.0; n],
            &b,
            &CgOptions::new(1e-12, n),
        )
        .unwrap();
        // h(i) = 1 - (i+1)/(n+1)
        for (i, x) in out.x.iter().enumerate() {
            let exact = 1.0 - (i as f64 + 1.0) / (n as f64 + 1.0);
            assert!((x - exact).abs() < 1e-10);
        }
        assert!(out.rel_residual <= 1e-12);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let n = 200;
        let mut b = vec![0.0; n];
        b[n / 2] = 1.0;
        let err = pcg(
            path_laplacian(n),
            &vec![2.0; n],
            &b,
            &CgOptions {
                tol: 1e-14,
                max_iter: 5,
            },
        )
        .unwrap_err();
        match err {
            Error::NonConvergence {
                iterations,
                condition,
                ..
            } => {
                assert_eq!(iterations, 5);
                assert!(condition > 1.0);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn lanczos_matches_dense_with_multiplicity() {
        // complete graph K6: eigenvalues 0 and 6 (five times), plus a diagonal shift block
        let n = 6;
        let apply = |x: &[f64], y: &mut [f64]| {
            let s: f64 = x.iter().sum();
            for i in 0..n {
                y[i] = n as f64 * x[i] - s;
            }
        };
        let ev = lanczos_smallest(apply, n, 6, &LanczosOptions::default()).unwrap();
        assert!(ev[0].abs() < 1e-10);
        for v in &ev[1..] {
            assert!((v - 6.0).abs() < 1e-8, "{ev:?}");
        }
    }

    #[test]
    fn lanczos_path_spectrum() {
        let n = 300;
        let ev = lanczos_smallest(path_laplacian(n), n, 4, &LanczosOptions::default()).unwrap();
        for (k, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-7 * 4.0, "{k}: {v} vs {exact}");
        }
    }

    #[test]
    fn modular_rank_small_cases() {
        // boundary of a triangle: rank 2
        let rows = vec![
            vec![(0, -1), (1, 1)],
            vec![(0, -1), (2, 1)],
            vec![(1, -1), (2, 1)],
        ];
        assert_eq!(integer_rank(&rows), 2);
        // 2x2 with determinant 2 keeps full rank over the large primes
        let rows = vec![vec![(0, 1), (1, 1)], vec![(0, 1), (1, -1)]];
        assert_eq!(integer_rank(&rows), 2);
        assert_eq!(rank_mod_p(&rows, 2), 1);
        assert_eq!(integer_rank(&[]), 0);
    }
}
