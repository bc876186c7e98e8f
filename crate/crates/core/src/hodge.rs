//! Hodge theory on finite complexes.
//!
//! Degree-`k` Laplacians are `Δ⁺ = ∂δ`, `Δ⁻ = δ∂` and `Δ^H = Δ⁺ + Δ⁻`. All of
//! them are self-adjoint for the weighted inner product, so numerical work
//! happens on the symmetric conjugate `M^{1/2} Δ M^{-1/2}`.
//!
//! With `∅` included, degree `−1` takes part and Betti numbers are reduced.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex::{Simplex, WeightedComplex};
use crate::error::{Error, Result};
use crate::generators::Truncation;
use crate::linalg::{integer_rank, lanczos_smallest, pcg, CgOptions, LanczosOptions};
use crate::operators::{boundary_vec, coboundary_vec, Cochain};
use crate::par::Execution;

/// Above this many simplices in one degree, eigenvalues come from Lanczos.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laplacian {
    Up,
    Down,
    Hodge,
}

impl fmt::Display for Laplacian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Laplacian::Up => "up",
            Laplacian::Down => "down",
            Laplacian::Hodge => "hodge",
        })
    }
}

impl FromStr for Laplacian {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(Laplacian::Up),
            "down" => Ok(Laplacian::Down),
            "hodge" => Ok(Laplacian::Hodge),
            _ => Err(Error::InvalidParameter(format!("unknown laplacian {s:?}"))),
        }
    }
}

fn check_degree(complex: &WeightedComplex, k: isize) -> Result<()> {
    if k < complex.min_degree() || k > complex.top_dimension() {
        return Err(Error::DegreeOutOfRange(k));
    }
    Ok(())
}

/// `Δ x` for a real dense degree-`k` vector.
pub fn laplacian_vec(
    complex: &WeightedComplex,
    tag: Laplacian,
    k: isize,
    x: &[f64],
    exec: Execution,
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if matches!(tag, Laplacian::Up | Laplacian::Hodge) && k < complex.top_dimension() {
        let up = boundary_vec(complex, k, &coboundary_vec(complex, k, x, exec), exec);
        out.iter_mut().zip(up).for_each(|(o, u)| *o += u);
    }
    if matches!(tag, Laplacian::Down | Laplacian::Hodge) && k > complex.min_degree() {
        let down = coboundary_vec(complex, k - 1, &boundary_vec(complex, k - 1, x, exec), exec);
        out.iter_mut().zip(down).for_each(|(o, d)| *o += d);
    }
    out
}

fn split_parts(values: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    values.iter().map(|z| (z.re, z.im)).unzip()
}

fn join_parts(re: &[f64], im: &[f64]) -> Vec<Complex64> {
    re.iter()
        .zip(im)
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect()
}

/// Applies a real-linear map to both parts of a complex cochain.
fn apply_complex<F>(
    complex: &WeightedComplex,
    f: &Cochain,
    out_degree: isize,
    map: F,
) -> Result<Cochain>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let (re, im) = split_parts(&f.to_dense(complex)?);
    Ok(Cochain::from_dense(
        complex,
        out_degree,
        &join_parts(&map(&re), &map(&im)),
    ))
}

pub fn laplacian_apply(complex: &WeightedComplex, tag: Laplacian, f: &Cochain) -> Result<Cochain> {
    let k = f.degree();
    check_degree(complex, k)?;
    apply_complex(complex, f, k, |x| {
        laplacian_vec(complex, tag, k, x, Execution::default())
    })
}

/// `(δ + ∂)` on a graded cochain, one entry per degree from `min_degree`.
pub fn dirac_apply(complex: &WeightedComplex, graded: &[Cochain]) -> Result<Vec<Cochain>> {
    let lo = complex.min_degree();
    let hi = complex.top_dimension();
    let len = (hi - lo + 1) as usize;
    if graded.len() != len {
        return Err(Error::InvalidParameter(format!(
            "expected {len} graded parts"
        )));
    }
    for (i, part) in graded.iter().enumerate() {
        let k = lo + i as isize;
        if part.degree() != k {
            return Err(Error::DegreeMismatch {
                expected: k,
                found: part.degree(),
            });
        }
    }
    let exec = Execution::default();
    let mut out: Vec<Cochain> = (0..len).map(|i| Cochain::zero(lo + i as isize)).collect();
    for (i, part) in graded.iter().enumerate() {
        let k = lo + i as isize;
        if k < hi {
            let d = apply_complex(complex, part, k + 1, |x| {
                coboundary_vec(complex, k, x, exec)
            })?;
            out[i + 1] = out[i + 1].add(&d)?;
        }
        if k > lo {
            let b = apply_complex(complex, part, k - 1, |x| {
                boundary_vec(complex, k - 1, x, exec)
            })?;
            out[i - 1] = out[i - 1].add(&b)?;
        }
    }
    Ok(out)
}

/// `f = harmonic + exact + coexact` with `exact ∈ range δ`, `coexact ∈ range ∂`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HodgeSplit {
    pub degree: isize,
    #[serde(skip)]
    pub harmonic: Cochain,
    #[serde(skip)]
    pub exact: Cochain,
    #[serde(skip)]
    pub coexact: Cochain,
    pub input_norm: f64,
    pub harmonic_norm: f64,
    pub exact_norm: f64,
    pub coexact_norm: f64,
    /// Largest pairwise `|⟨a,b⟩| / ‖f‖²`.
    pub orthogonality: f64,
    /// `‖f − Σ parts‖ / ‖f‖`.
    pub reconstruction: f64,
    /// `‖Δ^H h‖ / (ρ(Δ^H) ‖f‖)`.
    pub harmonic_residual: f64,
}

fn weighted_dot(m: &[f64], a: &[f64], b: &[f64]) -> f64 {
    m.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Gershgorin bound on the spectral radius of `Δ` on degree `k`.
pub fn spectral_radius_bound(complex: &WeightedComplex, tag: Laplacian, k: isize) -> f64 {
    (0..complex.count(k))
        .map(|i| row_abs_sum(complex, tag, k, i))
        .fold(0.0, f64::max)
}

fn row_abs_sum(complex: &WeightedComplex, tag: Laplacian, k: isize, i: usize) -> f64 {
    let mut sum = 0.0;
    if matches!(tag, Laplacian::Up | Laplacian::Hodge) && k < complex.top_dimension() {
        let wk = complex.weights(k);
        let wu = complex.weights(k + 1);
        let up: f64 = complex
            .coface_indices(k, i)
            .iter()
            .map(|&j| wu[j as usize])
            .sum::<f64>()
            / wk[i];
        sum += up * (k + 2) as f64;
    }
    if matches!(tag, Laplacian::Down | Laplacian::Hodge) && k > complex.min_degree() {
        let wk = complex.weights(k);
        let wl = complex.weights(k - 1);
        for (f, _) in complex.face_indices(k, i) {
            let mass: f64 = complex
                .coface_indices(k - 1, f)
                .iter()
                .map(|&j| wk[j as usize])
                .sum();
            sum += mass / wl[f];
        }
    }
    sum
}

/// Weighted least squares `min ‖f − δg‖` returns `δg`.
fn exact_part(complex: &WeightedComplex, k: isize, f: &[f64], tol: f64) -> Result<Vec<f64>> {
    if k <= complex.min_degree() {
        return Ok(vec![0.0; f.len()]);
    }
    let exec = Execution::default();
    let wl = complex.weights(k - 1);
    let wk = complex.weights(k);
    // Dᵀ M_k D g = Dᵀ M_k f, the M_{k-1}-scaled normal equations
    let rhs: Vec<f64> = boundary_vec(complex, k - 1, f, exec)
        .iter()
        .zip(wl)
        .map(|(x, m)| x * m)
        .collect();
    let diag: Vec<f64> = (0..wl.len())
        .map(|i| {
            complex
                .coface_indices(k - 1, i)
                .iter()
                .map(|&j| wk[j as usize])
                .sum()
        })
        .collect();
    let apply = |g: &[f64], out: &mut [f64]| {
        let dg = coboundary_vec(complex, k - 1, g, exec);
        let bdg = boundary_vec(complex, k - 1, &dg, exec);
        out.iter_mut()
            .zip(bdg)
            .zip(wl)
            .for_each(|((o, b), m)| *o = b * m);
    };
    let sol = pcg(apply, &diag, &rhs, &CgOptions::new(tol, wl.len()))?;
    Ok(coboundary_vec(complex, k - 1, &sol.x, exec))
}

/// Weighted least squares `min ‖f − ∂ξ‖` returns `∂ξ`.
fn coexact_part(complex: &WeightedComplex, k: isize, f: &[f64], tol: f64) -> Result<Vec<f64>> {
    if k >= complex.top_dimension() {
        return Ok(vec![0.0; f.len()]);
    }
    let exec = Execution::default();
    let wk = complex.weights(k);
    let wu = complex.weights(k + 1);
    // ∂ξ = M_k⁻¹ Dᵀ η with η = M_{k+1}ξ; normal equations D M_k⁻¹ Dᵀ η = D f
    let to_form = |eta: &[f64]| -> Vec<f64> {
        let xi: Vec<f64> = eta.iter().zip(wu).map(|(e, m)| e / m).collect();
        boundary_vec(complex, k, &xi, exec)
    };
    let rhs = coboundary_vec(complex, k, f, exec);
    let diag: Vec<f64> = (0..wu.len())
        .map(|j| {
            complex
                .face_indices(k + 1, j)
                .iter()
                .map(|&(i, _)| 1.0 / wk[i])
                .sum()
        })
        .collect();
    let apply = |eta: &[f64], out: &mut [f64]| {
        out.copy_from_slice(&coboundary_vec(complex, k, &to_form(eta), exec));
    };
    let sol = pcg(apply, &diag, &rhs, &CgOptions::new(tol, wu.len()))?;
    Ok(to_form(&sol.x))
}

fn decompose_real(
    complex: &WeightedComplex,
    k: isize,
    f: &[f64],
    tol: f64,
) -> Result<[Vec<f64>; 3]> {
    let exact = exact_part(complex, k, f, tol)?;
    let rest: Vec<f64> = f.iter().zip(&exact).map(|(a, b)| a - b).collect();
    let coexact = coexact_part(complex, k, &rest, tol)?;
    let harmonic = rest.iter().zip(&coexact).map(|(a, b)| a - b).collect();
    Ok([harmonic, exact, coexact])
}

/// Weak Hodge decomposition of a degree-`k` cochain. `tol` is the relative
/// residual for both least-squares solves.
pub fn hodge_decompose(complex: &WeightedComplex, f: &Cochain, tol: f64) -> Result<HodgeSplit> {
    let k = f.degree();
    check_degree(complex, k)?;
    let (re, im) = split_parts(&f.to_dense(complex)?);
    let [hr, er, cr] = decompose_real(complex, k, &re, tol)?;
    let [hi, ei, ci] = decompose_real(complex, k, &im, tol)?;
    let m = complex.weights(k);
    let nsq = |a: &[f64], b: &[f64]| weighted_dot(m, a, a) + weighted_dot(m, b, b);
    // Re⟨a,b⟩ and Im⟨a,b⟩ for a = ar + i ai
    let cdot = |ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]| {
        let re = weighted_dot(m, ar, br) + weighted_dot(m, ai, bi);
        let im = weighted_dot(m, ai, br) - weighted_dot(m, ar, bi);
        re.hypot(im)
    };
    let parts = [(&hr, &hi), (&er, &ei), (&cr, &ci)];
    let norms: Vec<f64> = parts.iter().map(|(a, b)| nsq(a, b).sqrt()).collect();
    let input_norm = nsq(&re, &im).sqrt();
    let mut orth = 0.0f64;
    for a in 0..3 {
        for b in a + 1..3 {
            let c = cdot(parts[a].0, parts[a].1, parts[b].0, parts[b].1);
            orth = orth.max(c / (input_norm * input_norm).max(f64::MIN_POSITIVE));
        }
    }
    let recon_re: Vec<f64> = (0..re.len())
        .map(|i| re[i] - hr[i] - er[i] - cr[i])
        .collect();
    let recon_im: Vec<f64> = (0..im.len())
        .map(|i| im[i] - hi[i] - ei[i] - ci[i])
        .collect();
    let scale = input_norm.max(f64::MIN_POSITIVE);
    let exec = Execution::default();
    let lh_re = laplacian_vec(complex, Laplacian::Hodge, k, &hr, exec);
    let lh_im = laplacian_vec(complex, Laplacian::Hodge, k, &hi, exec);
    let radius = spectral_radius_bound(complex, Laplacian::Hodge, k).max(f64::MIN_POSITIVE);
    Ok(HodgeSplit {
        degree: k,
        harmonic: Cochain::from_dense(complex, k, &join_parts(&hr, &hi)),
        exact: Cochain::from_dense(complex, k, &join_parts(&er, &ei)),
        coexact: Cochain::from_dense(complex, k, &join_parts(&cr, &ci)),
        input_norm,
        harmonic_norm: norms[0],
        exact_norm: norms[1],
        coexact_norm: norms[2],
        orthogonality: orth,
        reconstruction: nsq(&recon_re, &recon_im).sqrt() / scale,
        harmonic_residual: nsq(&lh_re, &lh_im).sqrt() / (radius * scale),
    })
}

/// Dense `M^{1/2} Δ M^{-1/2}` on degree `k`.
pub fn symmetric_matrix(
    complex: &WeightedComplex,
    tag: Laplacian,
    k: isize,
) -> Result<DMatrix<f64>> {
    check_degree(complex, k)?;
    let n = complex.count(k);
    let wk = complex.weights(k);
    let mut a = DMatrix::<f64>::zeros(n, n);
    if matches!(tag, Laplacian::Up | Laplacian::Hodge) && k < complex.top_dimension() {
        let wu = complex.weights(k + 1);
        for j in 0..complex.count(k + 1) {
            let faces = complex.face_indices(k + 1, j);
            for &(p, tp) in &faces {
                for &(q, tq) in &faces {
                    a[(p, q)] += wu[j] * f64::from(tp * tq) / (wk[p] * wk[q]).sqrt();
                }
            }
        }
    }
    if matches!(tag, Laplacian::Down | Laplacian::Hodge) && k > complex.min_degree() {
        let wl = complex.weights(k - 1);
        for r in 0..complex.count(k - 1) {
            let cof = complex.coface_indices(k - 1, r);
            let theta = |j: usize| -> f64 {
                complex
                    .face_indices(k, j)
                    .iter()
                    .find(|&&(f, _)| f == r)
                    .map(|&(_, t)| f64::from(t))
                    .expect("face")
            };
            let signs: Vec<(usize, f64)> = cof
                .iter()
                .map(|&j| (j as usize, theta(j as usize)))
                .collect();
            for &(p, tp) in &signs {
                for &(q, tq) in &signs {
                    a[(p, q)] += tp * tq * (wk[p] * wk[q]).sqrt() / wl[r];
                }
            }
        }
    }
    Ok(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenMethod {
    Dense,
    Lanczos,
    /// Dense up to [`DENSE_LIMIT`] simplices, Lanczos above.
    Auto,
}

impl FromStr for EigenMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(EigenMethod::Dense),
            "lanczos" => Ok(EigenMethod::Lanczos),
            "auto" => Ok(EigenMethod::Auto),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    pub degree: isize,
    pub tag: Laplacian,
    pub method: EigenMethod,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `M`-orthonormal eigenvectors as columns, dense method only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

/// The `count` smallest eigenvalues of `Δ` on degree `k` (all of them when
/// `count` is `None`). Lanczos converges to `1e-8` relative to `‖Δ‖`.
pub fn spectrum(
    complex: &WeightedComplex,
    tag: Laplacian,
    k: isize,
    count: Option<usize>,
    method: EigenMethod,
    vectors: bool,
) -> Result<Spectrum> {
    check_degree(complex, k)?;
    let n = complex.count(k);
    let count = count.unwrap_or(n);
    if count > n {
        return Err(Error::InvalidParameter(format!(
            "count {count} exceeds dimension {n}"
        )));
    }
    let method = match method {
        EigenMethod::Auto if n <= DENSE_LIMIT => EigenMethod::Dense,
        EigenMethod::Auto => EigenMethod::Lanczos,
        m => m,
    };
    let wk = complex.weights(k);
    let (eigenvalues, eigenvectors) = match method {
        EigenMethod::Dense => {
            let eig = SymmetricEigen::new(symmetric_matrix(complex, tag, k)?);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            order.truncate(count);
            let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
            let vecs = vectors.then(|| {
                order
                    .iter()
                    .map(|&c| {
                        (0..n)
                            .map(|r| eig.eigenvectors[(r, c)] / wk[r].sqrt())
                            .collect()
                    })
                    .collect()
            });
            (values, vecs)
        }
        _ => {
            let exec = Execution::default();
            let sq: Vec<f64> = wk.iter().map(|m| m.sqrt()).collect();
            let apply = |x: &[f64], out: &mut [f64]| {
                let y: Vec<f64> = x.iter().zip(&sq).map(|(a, s)| a / s).collect();
                let ly = laplacian_vec(complex, tag, k, &y, exec);
                out.iter_mut()
                    .zip(ly)
                    .zip(&sq)
                    .for_each(|((o, l), s)| *o = l * s);
            };
            let mut ev = lanczos_smallest(apply, n, count, &LanczosOptions::default())?;
            ev.iter_mut().for_each(|x| *x = x.max(0.0));
            ev.sort_by(f64::total_cmp);
            (ev, None)
        }
    };
    Ok(Spectrum {
        degree: k,
        tag,
        method,
        eigenvalues,
        eigenvectors,
    })
}

/// Relative kernel threshold on eigenvalues.
pub const KERNEL_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BettiEntry {
    pub degree: isize,
    pub betti: usize,
    /// Exact rank of `D_k` (degree `k` to `k + 1`).
    pub rank: usize,
    /// Eigenvalues of the unit-weight `Δ^H_k` below `1e-8 · ρ(Δ^H_k)`.
    pub numeric_kernel: usize,
}

fn integer_rows(complex: &WeightedComplex, k: isize) -> Vec<Vec<(u32, i64)>> {
    (0..complex.count(k + 1))
        .map(|j| {
            let mut row: Vec<(u32, i64)> = complex
                .face_indices(k + 1, j)
                .iter()
                .map(|&(i, t)| (i as u32, i64::from(t)))
                .collect();
            row.sort_unstable();
            row
        })
        .collect()
}

/// Exact rank of `D_k`.
pub fn coboundary_rank(complex: &WeightedComplex, k: isize) -> usize {
    if k < complex.min_degree() || k >= complex.top_dimension() {
        return 0;
    }
    integer_rank(&integer_rows(complex, k))
}

// The harmonic dimension does not depend on the weights, and unit weights
// keep the spectral gap away from round-off.
fn numeric_kernel(complex: &WeightedComplex, k: isize, expected: usize) -> Result<usize> {
    let unit = complex.map_weights(|_, _| 1.0)?;
    let complex = &unit;
    let n = complex.count(k);
    if n == 0 {
        return Ok(0);
    }
    if n <= DENSE_LIMIT {
        let ev = spectrum(
            complex,
            Laplacian::Hodge,
            k,
            None,
            EigenMethod::Dense,
            false,
        )?
        .eigenvalues;
        let top = ev.last().copied().unwrap_or(0.0);
        let thr = KERNEL_THRESHOLD * top.max(f64::MIN_POSITIVE);
        return Ok(ev.iter().filter(|&&x| x < thr).count());
    }
    let want = (expected + 1).min(n);
    let ev = spectrum(
        complex,
        Laplacian::Hodge,
        k,
        Some(want),
        EigenMethod::Lanczos,
        false,
    )?
    .eigenvalues;
    let thr = KERNEL_THRESHOLD * spectral_radius_bound(complex, Laplacian::Hodge, k);
    Ok(ev.iter().filter(|&&x| x < thr).count())
}

/// `dim ker D_k − rank D_{k−1}`, checked against the numeric kernel of
/// `Δ^H_k`. A mismatch is [`Error::Invariant`].
pub fn betti(complex: &WeightedComplex, k: isize) -> Result<BettiEntry> {
    check_degree(complex, k)?;
    let rank = coboundary_rank(complex, k);
    let below = if k > complex.min_degree() {
        coboundary_rank(complex, k - 1)
    } else {
        0
    };
    let betti = complex.count(k) - rank - below;
    let numeric_kernel = numeric_kernel(complex, k, betti)?;
    if numeric_kernel != betti {
        return Err(Error::Invariant(format!(
            "degree {k}: exact Betti number {betti} but numeric kernel {numeric_kernel}"
        )));
    }
    Ok(BettiEntry {
        degree: k,
        betti,
        rank,
        numeric_kernel,
    })
}

pub fn betti_numbers(complex: &WeightedComplex) -> Result<Vec<BettiEntry>> {
    (complex.min_degree()..=complex.top_dimension())
        .map(|k| betti(complex, k))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairingReport {
    pub degree: isize,
    pub up_nonzero: usize,
    pub down_nonzero: usize,
    /// Largest `|λ⁺_i − λ⁻_i|` over matched nonzero eigenvalues, relative
    /// to the largest eigenvalue.
    pub max_difference: f64,
    pub matched: bool,
}

/// Compares the nonzero spectra of `Δ⁺_k` and `Δ⁻_{k+1}`, solved separately.
pub fn supersymmetry_check(
    complex: &WeightedComplex,
    k: isize,
    method: EigenMethod,
) -> Result<PairingReport> {
    check_degree(complex, k + 1)?;
    let up = spectrum(complex, Laplacian::Up, k, None, method, false)?.eigenvalues;
    let down = spectrum(complex, Laplacian::Down, k + 1, None, method, false)?.eigenvalues;
    let top = up.iter().chain(&down).copied().fold(0.0, f64::max);
    let thr = KERNEL_THRESHOLD * top.max(f64::MIN_POSITIVE);
    let nz = |v: &[f64]| v.iter().copied().filter(|&x| x >= thr).collect::<Vec<_>>();
    let (a, b) = (nz(&up), nz(&down));
    let matched = a.len() == b.len();
    let max_difference = if matched {
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            / top.max(f64::MIN_POSITIVE)
    } else {
        f64::INFINITY
    };
    Ok(PairingReport {
        degree: k,
        up_nonzero: a.len(),
        down_nonzero: b.len(),
        max_difference,
        matched,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenformReport {
    pub rho: Simplex,
    /// `‖δ1_ρ‖`.
    pub coboundary_norm: f64,
    /// `‖Δ⁺δ1_ρ‖ / ‖δ1_ρ‖`.
    pub up_residual: f64,
    /// `‖Δ⁻∂1_ρ‖ / ‖∂1_ρ‖` when `dim ρ ≥ 1`.
    pub down_residual: Option<f64>,
}

/// Checks that `δ1_ρ` lies in the kernel of `Δ⁺`, and `∂1_ρ` in that of
/// `Δ⁻`. A simplex without cofaces is [`Error::NoCoface`].
pub fn harmonic_eigenform_check(
    complex: &WeightedComplex,
    rho: &Simplex,
) -> Result<EigenformReport> {
    let k = rho.dim();
    let i = complex
        .index_of(rho)
        .ok_or_else(|| Error::UnknownSimplex(rho.clone()))?;
    if complex.coface_indices(k, i).is_empty() {
        return Err(Error::NoCoface(rho.clone()));
    }
    let exec = Execution::default();
    let mut ind = vec![0.0; complex.count(k)];
    ind[i] = 1.0;
    let norm = |d: isize, x: &[f64]| weighted_dot(complex.weights(d), x, x).sqrt();
    let d1 = coboundary_vec(complex, k, &ind, exec);
    let coboundary_norm = norm(k + 1, &d1);
    let up = laplacian_vec(complex, Laplacian::Up, k + 1, &d1, exec);
    let down_residual = if k >= 1 && k > complex.min_degree() {
        let b1 = boundary_vec(complex, k - 1, &ind, exec);
        let nb = norm(k - 1, &b1);
        let down = laplacian_vec(complex, Laplacian::Down, k - 1, &b1, exec);
        Some(if nb == 0.0 {
            0.0
        } else {
            norm(k - 1, &down) / nb
        })
    } else {
        None
    };
    Ok(EigenformReport {
        rho: rho.clone(),
        coboundary_norm,
        up_residual: norm(k + 1, &up) / coboundary_norm,
        down_residual,
    })
}

/// `max_τ Σ_{σ≻τ} Σ_{τ'≺σ} m(σ)²/m(τ')` over interior `τ` of `degree`.
/// Finite on every truncation; growth along levels signals that `∂δ` does
/// not map finitely supported forms into square-summable ones.
pub fn summability_diagnostic(trunc: &Truncation, degree: isize) -> f64 {
    let c = &trunc.complex;
    if degree < c.min_degree() || degree >= c.top_dimension() {
        return 0.0;
    }
    let lower = c.weights(degree);
    let upper = c.weights(degree + 1);
    (0..c.count(degree))
        .filter(|&i| trunc.is_interior_at(degree, i))
        .map(|i| {
            c.coface_indices(degree, i)
                .iter()
                .map(|&j| {
                    let j = j as usize;
                    c.face_indices(degree + 1, j)
                        .iter()
                        .map(|&(f, _)| upper[j] * upper[j] / lower[f])
                        .sum::<f64>()
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
