//! Cochains, the coboundary `δ`, the weighted boundary `∂`, quadratic forms,
//! and sparse matrices of both operators per degree.
//!
//! With `θ(τ, σ) = (−1)^i` for the position `i` of `σ ∖ τ` in `σ`:
//!
//! ```text
//! δω(σ) = Σ_{τ≺σ} θ(τ,σ) ω(τ)
//! ∂ω(ρ) = (1/m(ρ)) Σ_{τ≻ρ} m(τ) θ(ρ,τ) ω(τ)
//! ```

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{parity_sign, Simplex, WeightedComplex};
use crate::error::{Error, Result};
use crate::generators::Truncation;
use crate::par::Execution;

/// A finitely supported function on the simplices of one degree.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cochain {
    degree: isize,
    values: BTreeMap<Simplex, Complex64>,
}

impl Cochain {
    pub fn zero(degree: isize) -> Self {
        Cochain {
            degree,
            values: BTreeMap::new(),
        }
    }

    /// `1_τ`.
    pub fn indicator(tau: &Simplex) -> Self {
        let mut c = Cochain::zero(tau.dim());
        c.values.insert(tau.clone(), Complex64::new(1.0, 0.0));
        c
    }

    pub fn from_values<I>(degree: isize, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Simplex, Complex64)>,
    {
        let mut c = Cochain::zero(degree);
        for (s, v) in values {
            c.set(s, v)?;
        }
        Ok(c)
    }

    pub fn degree(&self) -> isize {
        self.degree
    }

    pub fn get(&self, s: &Simplex) -> Complex64 {
        self.values.get(s).copied().unwrap_or_default()
    }

    /// Stores `v` at `s`; zero values are dropped.
    pub fn set(&mut self, s: Simplex, v: Complex64) -> Result<()> {
        if s.dim() != self.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: s.dim(),
            });
        }
        if v == Complex64::default() {
            self.values.remove(&s);
        } else {
            self.values.insert(s, v);
        }
        Ok(())
    }

    pub(crate) fn add_at(&mut self, s: &Simplex, v: Complex64) {
        let e = self.values.entry(s.clone()).or_default();
        *e += v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Simplex, Complex64)> + '_ {
        self.values.iter().map(|(s, v)| (s, *v))
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.values().all(|v| *v == Complex64::default())
    }

    pub fn scale(&self, c: Complex64) -> Cochain {
        Cochain {
            degree: self.degree,
            values: self
                .values
                .iter()
                .map(|(s, v)| (s.clone(), v * c))
                .collect(),
        }
    }

    pub fn add(&self, other: &Cochain) -> Result<Cochain> {
        check_degree(self.degree, other.degree)?;
        let mut out = self.clone();
        for (s, v) in other.iter() {
            out.add_at(s, v);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Cochain) -> Result<Cochain> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Largest absolute value.
    pub fn sup_norm(&self) -> f64 {
        self.values.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Values in the sorted order of `complex.simplices(degree)`.
    pub fn to_dense(&self, complex: &WeightedComplex) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::default(); complex.count(self.degree)];
        for (s, v) in self.iter() {
            let i = complex
                .index_of(s)
                .ok_or_else(|| Error::UnknownSimplex(s.clone()))?;
            out[i] = v;
        }
        Ok(out)
    }

    pub fn from_dense(complex: &WeightedComplex, degree: isize, values: &[Complex64]) -> Cochain {
        let mut c = Cochain::zero(degree);
        for (s, v) in complex.simplices(degree).iter().zip(values) {
            if *v != Complex64::default() {
                c.values.insert(s.clone(), *v);
            }
        }
        c
    }

    pub fn from_real(complex: &WeightedComplex, degree: isize, values: &[f64]) -> Cochain {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Cochain::from_dense(complex, degree, &v)
    }

    fn check_in(&self, complex: &WeightedComplex) -> Result<()> {
        match self.values.keys().find(|s| !complex.contains(s)) {
            Some(s) => Err(Error::UnknownSimplex(s.clone())),
            None => Ok(()),
        }
    }
}

fn check_degree(expected: isize, found: isize) -> Result<()> {
    if expected != found {
        return Err(Error::DegreeMismatch { expected, found });
    }
    Ok(())
}

pub fn coboundary(complex: &WeightedComplex, omega: &Cochain) -> Result<Cochain> {
    omega.check_in(complex)?;
    let d = omega.degree;
    let upper = complex.simplices(d + 1);
    let mut out = Cochain::zero(d + 1);
    for (tau, v) in omega.iter() {
        let i = complex.index_of(tau).expect("checked");
        for &j in complex.coface_indices(d, i) {
            let sigma = &upper[j as usize];
            let (pos, _) = tau.missing_vertex(sigma).expect("coface");
            out.add_at(sigma, v * f64::from(parity_sign(pos)));
        }
    }
    out.values.retain(|_, v| *v != Complex64::default());
    Ok(out)
}

fn check_boundary_degree(complex: &WeightedComplex, degree: isize) -> Result<()> {
    if degree < 0 || (degree == 0 && !complex.include_empty()) {
        return Err(Error::DegreeUnderflow(degree));
    }
    Ok(())
}

pub fn boundary(complex: &WeightedComplex, omega: &Cochain) -> Result<Cochain> {
    check_boundary_degree(complex, omega.degree)?;
    omega.check_in(complex)?;
    let d = omega.degree;
    let lower_w = complex.weights(d - 1);
    let lower = complex.simplices(d - 1);
    let mut out = Cochain::zero(d - 1);
    for (tau, v) in omega.iter() {
        let i = complex.index_of(tau).expect("checked");
        let m_tau = complex.weights(d)[i];
        for (j, theta) in complex.face_indices(d, i) {
            out.add_at(&lower[j], v * (m_tau * f64::from(theta) / lower_w[j]));
        }
    }
    out.values.retain(|_, v| *v != Complex64::default());
    Ok(out)
}

/// `∂ω` together with the support simplices whose value is not final because
/// they are not interior to the truncation.
#[derive(Clone, Debug)]
pub struct FlaggedCochain {
    pub value: Cochain,
    pub non_interior: Vec<Simplex>,
}

pub fn boundary_on(trunc: &Truncation, omega: &Cochain) -> Result<FlaggedCochain> {
    let value = boundary(&trunc.complex, omega)?;
    let non_interior = value
        .iter()
        .map(|(s, _)| s)
        .filter(|s| !trunc.is_interior(s))
        .cloned()
        .collect();
    Ok(FlaggedCochain {
        value,
        non_interior,
    })
}

/// `Σ m f ḡ`.
pub fn inner(complex: &WeightedComplex, f: &Cochain, g: &Cochain) -> Result<Complex64> {
    check_degree(f.degree, g.degree)?;
    let mut acc = Complex64::default();
    for (s, v) in f.iter() {
        let w = g.get(s);
        if w != Complex64::default() {
            acc += complex.require_weight(s)? * v * w.conj();
        }
    }
    Ok(acc)
}

/// `Σ m |f|²`.
pub fn norm_sq(complex: &WeightedComplex, f: &Cochain) -> Result<f64> {
    f.iter()
        .map(|(s, v)| Ok(complex.require_weight(s)? * v.norm_sqr()))
        .sum()
}

pub fn q_plus(complex: &WeightedComplex, omega: &Cochain) -> Result<f64> {
    norm_sq(complex, &coboundary(complex, omega)?)
}

pub fn q_minus(complex: &WeightedComplex, omega: &Cochain) -> Result<f64> {
    if check_boundary_degree(complex, omega.degree).is_err() {
        return Ok(0.0);
    }
    norm_sq(complex, &boundary(complex, omega)?)
}

/// `Q⁻` summed over interior simplices of a truncation only.
pub fn q_minus_interior(trunc: &Truncation, omega: &Cochain) -> Result<f64> {
    if check_boundary_degree(&trunc.complex, omega.degree).is_err() {
        return Ok(0.0);
    }
    let b = boundary(&trunc.complex, omega)?;
    Ok(b.iter()
        .filter(|(s, _)| trunc.is_interior(s))
        .map(|(s, v)| trunc.complex.weight(s).unwrap() * v.norm_sqr())
        .sum())
}

/// `Σ m |δω + ∂ω|²` for a graded cochain given as homogeneous parts.
pub fn q_hodge(complex: &WeightedComplex, parts: &[Cochain]) -> Result<f64> {
    let mut by_degree: BTreeMap<isize, Cochain> = BTreeMap::new();
    let mut push = |c: Cochain| -> Result<()> {
        match by_degree.get_mut(&c.degree) {
            Some(acc) => *acc = acc.add(&c)?,
            None => {
                by_degree.insert(c.degree, c);
            }
        }
        Ok(())
    };
    for omega in parts {
        push(coboundary(complex, omega)?)?;
        if check_boundary_degree(complex, omega.degree).is_ok() {
            push(boundary(complex, omega)?)?;
        }
    }
    by_degree.values().map(|c| norm_sq(complex, c)).sum()
}

/// Random cochain supported on every simplex of `degree`, with values whose
/// real and imaginary parts are uniform in `[-1, 1]`.
pub fn random_cochain<R: Rng>(
    complex: &WeightedComplex,
    degree: isize,
    rng: &mut R,
    complex_valued: bool,
) -> Cochain {
    let values: Vec<Complex64> = (0..complex.count(degree))
        .map(|_| {
            let re = rng.random_range(-1.0..1.0);
            let im = if complex_valued {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            };
            Complex64::new(re, im)
        })
        .collect();
    Cochain::from_dense(complex, degree, &values)
}

/// Real dense `δ`: `out[σ] = Σ θ x[τ]` from degree `k` to `k + 1`.
pub fn coboundary_vec(complex: &WeightedComplex, k: isize, x: &[f64], exec: Execution) -> Vec<f64> {
    let mut out = vec![0.0; complex.count(k + 1)];
    exec.fill(&mut out, |j, o| {
        *o = complex
            .face_indices(k + 1, j)
            .iter()
            .map(|&(i, t)| f64::from(t) * x[i])
            .sum();
    });
    out
}

/// Real dense `∂`: from degree `k + 1` to `k`.
pub fn boundary_vec(complex: &WeightedComplex, k: isize, y: &[f64], exec: Execution) -> Vec<f64> {
    let lower = complex.simplices(k);
    let upper = complex.simplices(k + 1);
    let wl = complex.weights(k);
    let wu = complex.weights(k + 1);
    let mut out = vec![0.0; lower.len()];
    exec.fill(&mut out, |i, o| {
        let rho = &lower[i];
        let s: f64 = complex
            .coface_indices(k, i)
            .iter()
            .map(|&j| {
                let j = j as usize;
                let (pos, _) = rho.missing_vertex(&upper[j]).expect("coface");
                wu[j] * f64::from(parity_sign(pos)) * y[j]
            })
            .sum();
        *o = s / wl[i];
    });
    out
}

/// `δ` and `∂` between degrees `k` and `k + 1` as sparse matrices.
#[derive(Clone, Debug)]
pub struct DegreeOperators {
    pub degree: isize,
    /// `D_k`: `n_{k+1} × n_k`, entries ±1.
    pub d: CsrMatrix<i64>,
    /// `B_k`: `n_k × n_{k+1}`, entries `m(τ)θ(ρ,τ)/m(ρ)`.
    pub b: CsrMatrix<f64>,
}

pub fn assemble(complex: &WeightedComplex, k: isize, exec: Execution) -> Result<DegreeOperators> {
    if k < complex.min_degree() || k > complex.top_dimension() {
        return Err(Error::DegreeOutOfRange(k));
    }
    let nk = complex.count(k);
    let nk1 = complex.count(k + 1);
    let rows: Vec<Vec<(usize, i8)>> =
        exec.map_range(nk1, |j| complex.face_indices(k + 1, j).to_vec());
    let mut d = CooMatrix::new(nk1, nk);
    let wk = complex.weights(k);
    let wk1 = complex.weights(k + 1);
    let mut b_coo = CooMatrix::new(nk, nk1);
    for (j, row) in rows.iter().enumerate() {
        for &(i, t) in row {
            d.push(j, i, i64::from(t));
            b_coo.push(i, j, wk1[j] * f64::from(t) / wk[i]);
        }
    }
    Ok(DegreeOperators {
        degree: k,
        d: CsrMatrix::from(&d),
        b: CsrMatrix::from(&b_coo),
    })
}

impl DegreeOperators {
    /// Largest relative deviation of `B_k` from `M_k⁻¹ D_kᵀ M_{k+1}`.
    pub fn weighted_transpose_error(&self, complex: &WeightedComplex) -> f64 {
        let wk = complex.weights(self.degree);
        let wk1 = complex.weights(self.degree + 1);
        let mut dense_d: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for (j, i, &v) in self.d.triplet_iter() {
            dense_d.insert((i, j), v);
        }
        let mut worst = 0.0f64;
        let mut seen = 0usize;
        for (i, j, &v) in self.b.triplet_iter() {
            let expect = dense_d.get(&(i, j)).copied().unwrap_or(0) as f64 * wk1[j] / wk[i];
            worst = worst.max((v - expect).abs() / expect.abs().max(f64::MIN_POSITIVE));
            seen += 1;
        }
        if seen != dense_d.len() {
            return f64::INFINITY;
        }
        worst
    }

    /// Writes `row col value` lines for `D_k` (integer) and `B_k`.
    pub fn write_coo<W: Write>(&self, mut d_out: W, mut b_out: W) -> Result<()> {
        for (r, c, v) in self.d.triplet_iter() {
            writeln!(d_out, "{r} {c} {v}")?;
        }
        for (r, c, v) in self.b.triplet_iter() {
            writeln!(b_out, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

/// Number of nonzero entries of `D_{k+1} D_k`, computed in integers.
pub fn chain_defect(lower: &DegreeOperators, upper: &DegreeOperators) -> Result<usize> {
    check_degree(lower.degree + 1, upper.degree)?;
    let product = &upper.d * &lower.d;
    Ok(product.values().iter().filter(|&&v| v != 0).count())
}

/// Writes `index simplex` lines for the simplices of one degree.
pub fn write_index<W: Write>(complex: &WeightedComplex, degree: isize, mut out: W) -> Result<()> {
    for (i, s) in complex.simplices(degree).iter().enumerate() {
        let v: Vec<String> = s.vertices().iter().map(|x| x.to_string()).collect();
        writeln!(out, "{i} {}", v.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{unit_weight, ComplexBuilder};
    use crate::generators::Family;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: &[u64]) -> Simplex {
        Simplex::new(v.iter().copied()).unwrap()
    }

    fn triangle(include_empty: bool) -> WeightedComplex {
        let mut b = ComplexBuilder::new().include_empty(include_empty);
        b.insert_closed(&s(&[1, 2, 3]), unit_weight).unwrap();
        b.build().unwrap()
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn coboundary_of_edge_indicator() {
        let t = triangle(false);
        let d = coboundary(&t, &Cochain::indicator(&s(&[1, 3]))).unwrap();
        assert_eq!(d.get(&s(&[1, 2, 3])), c(-1.0));
        assert_eq!(d.support_len(), 1);
    }

    #[test]
    fn coboundary_of_function_is_difference() {
        let t = triangle(false);
        let f = Cochain::from_values(0, [(s(&[1]), c(2.0)), (s(&[2]), c(7.0))]).unwrap();
        let d = coboundary(&t, &f).unwrap();
        // θ({2},{1,2}) = +1 and θ({1},{1,2}) = −1
        assert_eq!(d.get(&s(&[1, 2])), c(7.0 - 2.0));
    }

    #[test]
    fn boundary_of_edge_and_degree_underflow() {
        let t = triangle(false);
        let b = boundary(&t, &Cochain::indicator(&s(&[1, 2]))).unwrap();
        assert_eq!(b.get(&s(&[1])), c(-1.0));
        assert_eq!(b.get(&s(&[2])), c(1.0));
        assert!(matches!(
            boundary(&t, &Cochain::indicator(&s(&[1]))),
            Err(Error::DegreeUnderflow(0))
        ));
        let te = triangle(true);
        assert!(boundary(&te, &Cochain::indicator(&s(&[1]))).is_ok());
        assert!(boundary(&te, &Cochain::indicator(&Simplex::empty())).is_err());
    }

    #[test]
    fn up_laplacian_of_vertex_indicator() {
        let t = triangle(false);
        let f = Cochain::indicator(&s(&[2]));
        let lap = boundary(&t, &coboundary(&t, &f).unwrap()).unwrap();
        assert_eq!(lap.get(&s(&[2])), c(2.0));
        assert_eq!(q_plus(&t, &f).unwrap(), 2.0);
    }

    #[test]
    fn inner_products_of_indicators() {
        let mut b = ComplexBuilder::new();
        b.insert_closed(&s(&[1, 2]), |x| if x.len() == 2 { 3.5 } else { 1.0 })
            .unwrap();
        let k = b.build().unwrap();
        let e = Cochain::indicator(&s(&[1, 2]));
        assert_eq!(inner(&k, &e, &e).unwrap(), c(3.5));
        let a = Cochain::indicator(&s(&[1]));
        let bb = Cochain::indicator(&s(&[2]));
        assert_eq!(inner(&k, &a, &bb).unwrap(), c(0.0));
        assert!(inner(&k, &a, &e).is_err());
    }

    #[test]
    fn hodge_form_splits_for_homogeneous_input() {
        let t = Family::Octahedron.generate(0).unwrap().complex;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_cochain(&t, 1, &mut rng, true);
        let qh = q_hodge(&t, std::slice::from_ref(&f)).unwrap();
        let sum = q_plus(&t, &f).unwrap() + q_minus(&t, &f).unwrap();
        assert!((qh - sum).abs() <= 1e-12 * sum);
    }

    #[test]
    fn assembled_operators_satisfy_identities() {
        let t = Family::Octahedron.generate(0).unwrap().complex;
        let ops0 = assemble(&t, 0, Execution::Sequential).unwrap();
        let ops1 = assemble(&t, 1, Execution::Parallel).unwrap();
        assert_eq!((ops0.d.nrows(), ops0.d.ncols()), (12, 6));
        assert_eq!(chain_defect(&ops0, &ops1).unwrap(), 0);
        assert!(ops0.weighted_transpose_error(&t) < 1e-14);
        let bb = &ops0.b * &ops1.b;
        assert!(bb.values().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(assemble(&t, 2, Execution::Sequential).unwrap().d.nrows(), 0);
        assert!(assemble(&t, 3, Execution::Sequential).is_err());
    }

    #[test]
    fn dense_and_sparse_paths_agree() {
        let t = Family::TorusGrid { p: 4, q: 5 }
            .generate(0)
            .unwrap()
            .complex
            .map_weights(|s, _| 1.0 + s.vertices().iter().sum::<u64>() as f64 / 7.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_cochain(&t, 1, &mut rng, false);
        let dense: Vec<f64> = f.to_dense(&t).unwrap().iter().map(|z| z.re).collect();
        let a = Cochain::from_real(&t, 2, &coboundary_vec(&t, 1, &dense, Execution::Parallel));
        assert!(a.sub(&coboundary(&t, &f).unwrap()).unwrap().sup_norm() < 1e-12);
        let g = random_cochain(&t, 2, &mut rng, false);
        let gd: Vec<f64> = g.to_dense(&t).unwrap().iter().map(|z| z.re).collect();
        let b = Cochain::from_real(&t, 1, &boundary_vec(&t, 1, &gd, Execution::Sequential));
        assert!(b.sub(&boundary(&t, &g).unwrap()).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn coo_export_lines() {
        let t = triangle(false);
        let ops = assemble(&t, 0, Execution::Sequential).unwrap();
        let (mut d, mut b) = (Vec::new(), Vec::new());
        ops.write_coo(&mut d, &mut b).unwrap();
        assert_eq!(String::from_utf8(d).unwrap().lines().count(), 6);
        let mut idx = Vec::new();
        write_index(&t, 1, &mut idx).unwrap();
        assert_eq!(
            String::from_utf8(idx).unwrap().lines().next(),
            Some("0 1,2")
        );
    }
}
