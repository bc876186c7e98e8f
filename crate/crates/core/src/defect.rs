//! The value of `∂∂ω` at a simplex `ρ`, witness forms for transient links,
//! the cutoff bound for recurrent links, local balancedness, and minimum-norm
//! solutions of `∂ω = 1_σ` supported in top degree.
//!
//! On a truncation, `∂∂ω(ρ)` is evaluated with the outer sum restricted to
//! interior cofaces of `ρ`, where `∂ω` already has its final value. For the
//! witness `ω_n = δπ^ρu_n` with `u_n` the grounded monopole at `v₀`, that sum
//! equals `m(v₀ρ)/m(ρ)` at every level.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{parity_sign, Simplex, VertexId, WeightedComplex};
use crate::error::{Error, Result};
use crate::generators::{Family, Truncation};
use crate::linalg::{pcg, CgOptions};
use crate::links::{LinkFunction, LinkGraph};
use crate::operators::{boundary_vec, coboundary_vec, Cochain};
use crate::par::Execution;
use crate::recurrence::{
    classify_components, combine_verdicts, effective_resistance, grounded_link, monopole_on,
    ClassificationReport, LinkBase, LinkExhaustion, Policy, Verdict,
};

/// `(1/m(ρ)) Σ_j w_j θ(ρ,τ_j) Σ_{σ≻τ_j} m(σ) θ(τ_j,σ) ω(σ)` over the cofaces
/// `τ_j` of `ρ`; `w_j = 1` gives `∂∂ω(ρ)`.
fn dd_local<W, F>(
    complex: &WeightedComplex,
    rho: &Simplex,
    weight: W,
    omega_at: F,
) -> Result<Complex64>
where
    W: Fn(usize, VertexId) -> f64,
    F: Fn(usize) -> Complex64,
{
    let ri = complex
        .index_of(rho)
        .ok_or_else(|| Error::UnknownSimplex(rho.clone()))?;
    let d = rho.dim();
    let up1 = complex.simplices(d + 1);
    let up2 = complex.simplices(d + 2);
    let w2 = complex.weights(d + 2);
    let mut acc = Complex64::default();
    for &j in complex.coface_indices(d, ri) {
        let j = j as usize;
        let (pos, v) = rho.missing_vertex(&up1[j]).expect("coface");
        let wj = weight(j, v);
        if wj == 0.0 {
            continue;
        }
        let mut inner = Complex64::default();
        for &k in complex.coface_indices(d + 1, j) {
            let k = k as usize;
            let (p2, _) = up1[j].missing_vertex(&up2[k]).expect("coface");
            inner += omega_at(k) * (w2[k] * f64::from(parity_sign(p2)));
        }
        acc += inner * (wj * f64::from(parity_sign(pos)));
    }
    Ok(acc / complex.weights(d)[ri])
}

fn check_form_degree(rho: &Simplex, omega: &Cochain) -> Result<()> {
    if omega.degree() != rho.dim() + 2 {
        return Err(Error::DegreeMismatch {
            expected: rho.dim() + 2,
            found: omega.degree(),
        });
    }
    Ok(())
}

fn lookup<'a>(
    complex: &'a WeightedComplex,
    omega: &'a Cochain,
) -> impl Fn(usize) -> Complex64 + 'a {
    let sims = complex.simplices(omega.degree());
    move |k| omega.get(&sims[k])
}

/// `∂∂ω(ρ)` on a finite complex, all cofaces included.
pub fn dd_defect_finite(
    complex: &WeightedComplex,
    omega: &Cochain,
    rho: &Simplex,
) -> Result<Complex64> {
    check_form_degree(rho, omega)?;
    dd_local(complex, rho, |_, _| 1.0, lookup(complex, omega))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DefectValue {
    pub value: Complex64,
    /// `ρ` is interior to depth 2, so the value is that of the infinite
    /// complex for forms supported in the truncation.
    pub authoritative: bool,
    pub skipped_cofaces: usize,
}

/// `∂∂ω(ρ)` on a truncation, summing only over interior cofaces of `ρ`.
pub fn dd_defect(trunc: &Truncation, omega: &Cochain, rho: &Simplex) -> Result<DefectValue> {
    check_form_degree(rho, omega)?;
    let d = rho.dim();
    let skipped = std::cell::Cell::new(0usize);
    let value = dd_local(
        &trunc.complex,
        rho,
        |j, _| {
            if trunc.is_interior_at(d + 1, j) {
                1.0
            } else {
                skipped.set(skipped.get() + 1);
                0.0
            }
        },
        lookup(&trunc.complex, omega),
    )?;
    Ok(DefectValue {
        value,
        authoritative: trunc.is_interior_to_depth2(rho),
        skipped_cofaces: skipped.get(),
    })
}

/// `(1/m(ρ)) Σ_v m_ρ(v) φ(v) π_ρ∂ω(v)`, the cutoff approximation of
/// `∂∂ω(ρ)`. Bounded by `‖ω‖ Q_ρ(φ)^{1/2} / m(ρ)` whenever `φ` vanishes on
/// link vertices whose `vρ` is not interior.
pub fn dd_defect_cutoff(
    complex: &WeightedComplex,
    omega: &Cochain,
    rho: &Simplex,
    phi: &LinkFunction,
) -> Result<Complex64> {
    check_form_degree(rho, omega)?;
    dd_local(complex, rho, |_, v| phi.get(v).re, lookup(complex, omega))
}

/// `ω = δπ^ρu` for the grounded monopole `u` at `v₀` on one truncation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub level: usize,
    pub rho: Simplex,
    pub v0: VertexId,
    /// `m(v₀ρ)/m(ρ)`.
    pub predicted: f64,
    /// Interior-coface defect.
    pub defect: f64,
    /// Defect with every coface present in the truncation.
    pub full_defect: f64,
    /// `‖ω‖²`.
    pub norm_sq: f64,
    /// `Q_ρ(u)`, equal to `‖ω‖²`.
    pub link_energy: f64,
    /// Largest `|∂ω(τ) − π^ρL_ρu(τ)|` over interior `τ ≻ ρ`, relative to
    /// `max |L_ρu|`.
    pub chained_residual: f64,
    pub monopole_residual: f64,
    pub authoritative: bool,
    /// Dense values of `ω` on `complex.simplices(dim ρ + 2)`.
    #[serde(skip)]
    pub omega: Vec<f64>,
}

impl Witness {
    pub fn to_cochain(&self, complex: &WeightedComplex) -> Cochain {
        Cochain::from_real(complex, self.rho.dim() + 2, &self.omega)
    }
}

/// Dense `π^ρu` on degree `dim ρ + 1`.
fn lift_dense(complex: &WeightedComplex, rho: &Simplex, link: &LinkGraph, u: &[f64]) -> Vec<f64> {
    let d = rho.dim() + 1;
    let mut out = vec![0.0; complex.count(d)];
    for (i, &v) in link.verts.iter().enumerate() {
        if u[i] != 0.0 {
            let s = rho.with_vertex(v).expect("link vertex");
            let (pos, _) = rho.missing_vertex(&s).expect("coface");
            out[complex.index_of(&s).expect("coface")] = f64::from(parity_sign(pos)) * u[i];
        }
    }
    out
}

pub fn build_witness(
    trunc: &Truncation,
    rho: &Simplex,
    v0: Option<VertexId>,
    tol: f64,
    exec: Execution,
) -> Result<Witness> {
    let complex = &trunc.complex;
    let (g, link) = grounded_link(trunc, rho)?;
    let v0 = v0
        .or_else(|| g.default_root())
        .ok_or_else(|| Error::NoCoface(rho.clone()))?;
    let mono = monopole_on(&g, trunc.level, v0, tol)?;
    let u = &mono.values;
    let lifted = lift_dense(complex, rho, &link, u);
    let k = rho.dim() + 1;
    let omega = coboundary_vec(complex, k, &lifted, exec);
    let norm_sq: f64 = omega
        .iter()
        .zip(complex.weights(k + 1))
        .map(|(x, m)| m * x * x)
        .sum();
    let at = |j: usize| Complex64::new(omega[j], 0.0);
    let interior = |j: usize, _| if trunc.is_interior_at(k, j) { 1.0 } else { 0.0 };
    let defect = dd_local(complex, rho, interior, at)?.re;
    let full_defect = dd_local(complex, rho, |_, _| 1.0, at)?.re;

    // ∂ω(τ) against π^ρ L_ρ u(τ) at interior τ ≻ ρ
    let dw = boundary_vec(complex, k, &omega, exec);
    let mut lu_max = 0.0f64;
    let mut worst = 0.0f64;
    for (i, &v) in link.verts.iter().enumerate() {
        let tau = rho.with_vertex(v).expect("link vertex");
        let j = complex.index_of(&tau).expect("coface");
        if !trunc.is_interior_at(k, j) {
            continue;
        }
        let lu: f64 = link
            .neighbors(i)
            .iter()
            .map(|&(y, b)| b * (u[i] - u[y as usize]))
            .sum::<f64>()
            / link.m_rho[i];
        let (pos, _) = rho.missing_vertex(&tau).expect("coface");
        lu_max = lu_max.max(lu.abs());
        worst = worst.max((dw[j] - f64::from(parity_sign(pos)) * lu).abs());
    }
    let v0rho = rho.with_vertex(v0).expect("link vertex");
    Ok(Witness {
        level: trunc.level,
        rho: rho.clone(),
        v0,
        predicted: complex.require_weight(&v0rho)? / complex.require_weight(rho)?,
        defect,
        full_defect,
        norm_sq,
        link_energy: g.edge_energy(u),
        chained_residual: worst / lu_max.max(f64::MIN_POSITIVE),
        monopole_residual: mono.residual,
        authoritative: trunc.is_interior_to_depth2(rho),
        omega,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectReport {
    pub family: String,
    pub rho: Simplex,
    pub v0: VertexId,
    pub levels: Vec<usize>,
    pub defects: Vec<f64>,
    pub full_defects: Vec<f64>,
    pub predicted: f64,
    pub witness_norms: Vec<f64>,
    pub link_energies: Vec<f64>,
    pub chained_residual: f64,
    /// Known type of the link, when the family has one.
    pub reference: Option<Verdict>,
    pub relative_error_last: f64,
}

impl DefectReport {
    /// `|d_n − predicted|` is non-increasing (up to `slack·|predicted|`) from
    /// index `burn_in` on.
    pub fn monotone_after(&self, burn_in: usize, slack: f64) -> bool {
        let err: Vec<f64> = self
            .defects
            .iter()
            .map(|d| (d - self.predicted).abs())
            .collect();
        err.iter()
            .skip(burn_in)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| *w[1] <= *w[0] + slack * self.predicted.abs())
    }
}

pub fn defect_sequence(
    family: &Family,
    base: &LinkBase,
    v0: Option<VertexId>,
    levels: &[usize],
    tol: f64,
    exec: Execution,
) -> Result<DefectReport> {
    let exh = LinkExhaustion {
        family: family.clone(),
        base: base.clone(),
    };
    let mut ws = Vec::with_capacity(levels.len());
    let mut v0 = v0;
    for &n in levels {
        let trunc = family.generate(n)?;
        let rho = exh.rho(&trunc)?;
        let w = build_witness(&trunc, &rho, v0, tol, exec)?;
        v0 = Some(w.v0);
        ws.push(w);
    }
    let last = ws
        .last()
        .ok_or_else(|| Error::InvalidParameter("no levels".into()))?;
    Ok(DefectReport {
        family: family.to_string(),
        rho: last.rho.clone(),
        v0: last.v0,
        levels: levels.to_vec(),
        defects: ws.iter().map(|w| w.defect).collect(),
        full_defects: ws.iter().map(|w| w.full_defect).collect(),
        predicted: last.predicted,
        witness_norms: ws.iter().map(|w| w.norm_sq.sqrt()).collect(),
        link_energies: ws.iter().map(|w| w.link_energy).collect(),
        chained_residual: ws.iter().map(|w| w.chained_residual).fold(0.0, f64::max),
        reference: matches!(base, LinkBase::Apex)
            .then(|| family.apex_link_verdict())
            .flatten(),
        relative_error_last: (last.defect - last.predicted).abs() / last.predicted.abs(),
    })
}

/// Seeded random form of `degree` with values damped by
/// `(1 + max vertex id)^{-3/4}`, square-summable along every family.
pub fn decaying_form<R: Rng>(complex: &WeightedComplex, degree: isize, rng: &mut R) -> Cochain {
    let vals: Vec<Complex64> = complex
        .simplices(degree)
        .iter()
        .map(|s| {
            let top = s.vertices().last().copied().unwrap_or(0) as f64;
            let damp = (1.0 + top).powf(-0.75);
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * damp
        })
        .collect();
    Cochain::from_dense(complex, degree, &vals)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub level: usize,
    /// Capacity of the link root (`Q` of the equilibrium potential).
    pub capacity: f64,
    /// `Q_ρ(h)` of the cutoff, without leaks.
    pub cutoff_energy: f64,
    pub forms: usize,
    /// Largest `|cutoff defect| / (‖ω‖ Q_ρ(h)^{1/2} / m(ρ))`.
    pub max_ratio: f64,
    pub violations: usize,
    /// Ratio attained by the extremal form `δπ^ρh`.
    pub extremal_ratio: f64,
}

/// Checks the cutoff bound on `forms − 1` seeded random forms and on the
/// extremal form `δπ^ρh`, where `h` is the equilibrium potential of the link
/// root.
pub fn recurrent_bound_check(
    trunc: &Truncation,
    rho: &Simplex,
    forms: usize,
    seed: u64,
    tol: f64,
) -> Result<BoundCheck> {
    let complex = &trunc.complex;
    let (g, link) = grounded_link(trunc, rho)?;
    let root = g
        .default_root()
        .ok_or_else(|| Error::NoCoface(rho.clone()))?;
    let sol = effective_resistance(&g, root, tol)?;
    let h = &sol.potential;
    let cutoff_energy = g.edge_energy(h);
    let phi = LinkFunction(
        link.verts
            .iter()
            .zip(h)
            .filter(|(_, &x)| x != 0.0)
            .map(|(&v, &x)| (v, Complex64::new(x, 0.0)))
            .collect(),
    );
    let m_rho = complex.require_weight(rho)?;
    let scale = cutoff_energy.sqrt() / m_rho;
    let deg = rho.dim() + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = |omega: &Cochain| -> Result<f64> {
        let d = dd_defect_cutoff(complex, omega, rho, &phi)?;
        let n = crate::operators::norm_sq(complex, omega)?.sqrt();
        Ok(if n == 0.0 {
            0.0
        } else {
            d.norm() / (n * scale)
        })
    };
    let mut max_ratio = 0.0f64;
    let mut violations = 0usize;
    for _ in 1..forms {
        let r = ratio(&decaying_form(complex, deg, &mut rng))?;
        max_ratio = max_ratio.max(r);
        violations += usize::from(r > 1.0 + 1e-10);
    }
    let extremal = Cochain::from_real(
        complex,
        deg,
        &coboundary_vec(
            complex,
            deg - 1,
            &lift_dense(complex, rho, &link, h),
            Execution::Sequential,
        ),
    );
    let extremal_ratio = ratio(&extremal)?;
    max_ratio = max_ratio.max(extremal_ratio);
    violations += usize::from(extremal_ratio > 1.0 + 1e-10);
    Ok(BoundCheck {
        level: trunc.level,
        capacity: sol.capacity,
        cutoff_energy,
        forms,
        max_ratio,
        violations,
        extremal_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropertyVerdict {
    /// `∂∂ω(ρ) = 0` for every square-summable `ω`.
    Holds,
    /// Some square-summable `ω` has `∂∂ω(ρ) ≠ 0`.
    Fails,
    Undetermined,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropertyReport {
    pub rho: Simplex,
    pub verdict: PropertyVerdict,
    pub components: Vec<ClassificationReport>,
    /// Witness on the first transient component at the last level.
    pub witness: Option<Witness>,
}

pub fn check_complex_property(
    family: &Family,
    base: &LinkBase,
    levels: &[usize],
    policy: &Policy,
    exec: Execution,
) -> Result<PropertyReport> {
    let exh = LinkExhaustion {
        family: family.clone(),
        base: base.clone(),
    };
    let last = *levels
        .last()
        .ok_or_else(|| Error::InvalidParameter("no levels".into()))?;
    let trunc = family.generate(last)?;
    let rho = exh.rho(&trunc)?;
    let components = classify_components(&exh, levels, policy)?;
    let verdict = match combine_verdicts(components.iter().map(|c| c.verdict)) {
        Verdict::Recurrent => PropertyVerdict::Holds,
        Verdict::Transient => PropertyVerdict::Fails,
        Verdict::Undetermined => PropertyVerdict::Undetermined,
    };
    let witness = match components.iter().find(|c| c.verdict == Verdict::Transient) {
        Some(c) => Some(build_witness(
            &trunc,
            &rho,
            Some(c.root),
            policy.solver_tol,
            exec,
        )?),
        None => None,
    };
    Ok(PropertyReport {
        rho,
        verdict,
        components,
        witness,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Balance {
    /// `sup m(vv'ρ)/m(vv'ρ∖w)` over link edges `vv'` and `w ∈ ρ`.
    pub sup: f64,
    /// The truncation may not contain every coface, so `sup` is only a lower
    /// bound for the infinite complex.
    pub lower_bound: bool,
}

pub fn local_balancedness(complex: &WeightedComplex, rho: &Simplex) -> Result<f64> {
    if !complex.contains(rho) {
        return Err(Error::UnknownSimplex(rho.clone()));
    }
    let link = crate::links::link_of(complex, rho)?;
    let mut sup = 0.0f64;
    for (v, w, b) in link.edges() {
        let top = rho
            .with_vertex(v)
            .and_then(|s| s.with_vertex(w))
            .expect("link edge");
        for i in 0..rho.len() {
            let face_v = rho.vertices()[i];
            let pos = top
                .vertices()
                .iter()
                .position(|&x| x == face_v)
                .expect("vertex of ρ");
            let face = top.without_index(pos);
            sup = sup.max(b / complex.require_weight(&face)?);
        }
    }
    Ok(sup)
}

pub fn local_balancedness_in(trunc: &Truncation, rho: &Simplex) -> Result<Balance> {
    Ok(Balance {
        sup: local_balancedness(&trunc.complex, rho)?,
        lower_bound: !trunc.is_interior_to_depth2(rho),
    })
}

/// Which `(d−1)`-simplices carry the constraint `∂ω = 1_σ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TPrimeMode {
    /// Every interior `(d−1)`-simplex.
    Global,
    /// Interior cofaces of the given simplex `ρ ≺ σ`.
    Local(Simplex),
    /// Only `σ`.
    Single,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TPrimeSolution {
    pub sigma: Simplex,
    pub level: usize,
    pub mode: TPrimeMode,
    /// `‖ω‖₂`.
    pub norm: f64,
    pub constraints: usize,
    pub unknowns: usize,
    /// `‖∂ω − 1_σ‖ / ‖1_σ‖` in `ℓ²(m)` over the constraint set.
    pub residual: f64,
    /// Largest `|∂ω(τ)|` over interior `(d−1)`-simplices outside it.
    pub off_constraint_residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub omega: Vec<f64>,
}

/// Minimum-norm `ω` in top degree `d` with `∂ω = 1_σ` on the constraint set,
/// `ω = M⁻¹Bᵀy` with `(B M⁻¹ Bᵀ) y = 1_σ` where `B` is `∂` restricted to the
/// constraint rows. Inconsistent systems are reported as
/// [`Error::Singular`] with the relative residual where CG stagnated.
pub fn tprime_solve(
    trunc: &Truncation,
    sigma: &Simplex,
    mode: &TPrimeMode,
    tol: f64,
) -> Result<TPrimeSolution> {
    let complex = &trunc.complex;
    let d = complex.top_dimension();
    let k = d - 1;
    if sigma.dim() != k {
        return Err(Error::DegreeMismatch {
            expected: k,
            found: sigma.dim(),
        });
    }
    let si = complex
        .index_of(sigma)
        .ok_or_else(|| Error::UnknownSimplex(sigma.clone()))?;
    if complex.coface_indices(k, si).is_empty() {
        return Err(Error::NoCoface(sigma.clone()));
    }
    let rows: Vec<usize> = match mode {
        TPrimeMode::Single => vec![si],
        TPrimeMode::Global => (0..complex.count(k))
            .filter(|&i| trunc.is_interior_at(k, i))
            .collect(),
        TPrimeMode::Local(rho) => {
            if !rho.is_face_of(sigma) {
                return Err(Error::NotAFace {
                    face: rho.clone(),
                    coface: sigma.clone(),
                });
            }
            let ri = complex.index_of(rho).expect("face of σ");
            complex
                .coface_indices(k - 1, ri)
                .iter()
                .map(|&j| j as usize)
                .filter(|&j| trunc.is_interior_at(k, j))
                .collect()
        }
    };
    if !rows.contains(&si) {
        return Err(Error::InvalidParameter(format!("{sigma} is not interior")));
    }
    let wk = complex.weights(k);
    let wd = complex.weights(d);
    let mut row_pos = vec![usize::MAX; complex.count(k)];
    for (r, &i) in rows.iter().enumerate() {
        row_pos[i] = r;
    }
    let mut cols: Vec<usize> = rows
        .iter()
        .flat_map(|&i| complex.coface_indices(k, i).iter().map(|&j| j as usize))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    // (row, θ) pairs per column restricted to constraint rows
    let col_faces: Vec<Vec<(usize, f64)>> = cols
        .iter()
        .map(|&t| {
            complex
                .face_indices(d, t)
                .iter()
                .filter(|&&(i, _)| row_pos[i] != usize::MAX)
                .map(|&(i, th)| (row_pos[i], f64::from(th)))
                .collect()
        })
        .collect();
    let row_cols: Vec<Vec<(usize, f64)>> = {
        let mut rc = vec![Vec::new(); rows.len()];
        for (c, faces) in col_faces.iter().enumerate() {
            for &(r, th) in faces {
                rc[r].push((c, th));
            }
        }
        rc
    };
    let mt: Vec<f64> = cols.iter().map(|&t| wd[t]).collect();
    let mr: Vec<f64> = rows.iter().map(|&i| wk[i]).collect();
    // ω(t) = Σ θ y(τ)/m(τ); (Bω)(τ) = Σ m(t) θ ω(t) / m(τ)
    let to_omega = |y: &[f64]| -> Vec<f64> {
        col_faces
            .iter()
            .map(|f| f.iter().map(|&(r, th)| th * y[r] / mr[r]).sum())
            .collect()
    };
    let apply_b = |w: &[f64], out: &mut [f64]| {
        for (r, o) in out.iter_mut().enumerate() {
            *o = row_cols[r]
                .iter()
                .map(|&(c, th)| mt[c] * th * w[c])
                .sum::<f64>()
                / mr[r];
        }
    };
    let diag: Vec<f64> = (0..rows.len())
        .map(|r| row_cols[r].iter().map(|&(c, _)| mt[c]).sum::<f64>() / (mr[r] * mr[r]))
        .collect();
    let mut rhs = vec![0.0; rows.len()];
    rhs[row_pos[si]] = 1.0;
    // symmetric Jacobi scaling; the weights span many orders of magnitude
    let sc: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { d.sqrt().recip() } else { 1.0 })
        .collect();
    let scaled_rhs: Vec<f64> = rhs.iter().zip(&sc).map(|(b, s)| b * s).collect();
    let opts = CgOptions::new(tol, rows.len());
    let scaled = |z: &[f64], out: &mut [f64]| {
        let y: Vec<f64> = z.iter().zip(&sc).map(|(a, s)| a * s).collect();
        apply_b(&to_omega(&y), out);
        out.iter_mut().zip(&sc).for_each(|(o, s)| *o *= s);
    };
    let sol = match pcg(scaled, &vec![1.0; rows.len()], &scaled_rhs, &opts) {
        Ok(mut s) => {
            s.x.iter_mut().zip(&sc).for_each(|(x, s)| *x *= s);
            s
        }
        Err(Error::NonConvergence { residual, .. }) if residual > 1e-8 => {
            return Err(Error::Singular {
                kernel_projection: range_gap(&scaled, &scaled_rhs, tol),
            })
        }
        Err(e) => return Err(e),
    };
    let w_cols = to_omega(&sol.x);
    let mut check = vec![0.0; rows.len()];
    apply_b(&w_cols, &mut check);
    // ‖∂ω − 1_σ‖ in ℓ²(m), relative to ‖1_σ‖
    let residual = (check
        .iter()
        .zip(&rhs)
        .zip(&mr)
        .map(|((a, b), m)| m * (a - b) * (a - b))
        .sum::<f64>()
        / mr[row_pos[si]])
        .sqrt();
    if residual > 1e-6 {
        return Err(Error::Singular {
            kernel_projection: range_gap(&scaled, &scaled_rhs, tol),
        });
    }
    let mut omega = vec![0.0; complex.count(d)];
    for (c, &t) in cols.iter().enumerate() {
        omega[t] = w_cols[c];
    }
    let norm = omega
        .iter()
        .zip(wd)
        .map(|(x, m)| m * x * x)
        .sum::<f64>()
        .sqrt();
    let full = boundary_vec(complex, k, &omega, Execution::default());
    let off = (0..complex.count(k))
        .filter(|&i| row_pos[i] == usize::MAX && trunc.is_interior_at(k, i))
        .map(|i| full[i].abs())
        .fold(0.0, f64::max);
    Ok(TPrimeSolution {
        sigma: sigma.clone(),
        level: trunc.level,
        mode: mode.clone(),
        norm,
        constraints: rows.len(),
        unknowns: cols.len(),
        residual,
        off_constraint_residual: off,
        iterations: sol.iterations,
        omega,
    })
}

/// `‖b − Ay‖ / ‖b‖` for the least-squares `y`, from CG on `A²y = Ab`: the
/// relative size of the kernel component of `b` for symmetric `A`.
fn range_gap<A: Fn(&[f64], &mut [f64])>(apply: &A, b: &[f64], tol: f64) -> f64 {
    let n = b.len();
    let mut ab = vec![0.0; n];
    apply(b, &mut ab);
    let square = |x: &[f64], out: &mut [f64]| {
        let mut t = vec![0.0; n];
        apply(x, &mut t);
        apply(&t, out);
    };
    let y = match pcg(square, &vec![1.0; n], &ab, &CgOptions::new(tol, n)) {
        Ok(s) => s.x,
        Err(_) => return f64::NAN,
    };
    let mut ay = vec![0.0; n];
    apply(&y, &mut ay);
    let r: f64 = b.iter().zip(&ay).map(|(x, z)| (x - z) * (x - z)).sum();
    (r / b.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TPrimeReport {
    pub family: String,
    pub sigma: Simplex,
    pub mode: TPrimeMode,
    pub levels: Vec<usize>,
    pub norms: Vec<f64>,
    pub residuals: Vec<f64>,
    pub off_constraint_residuals: Vec<f64>,
    /// `norm_last / norm_first − 1`.
    pub growth: f64,
    /// Growth below 1% across the levels.
    pub bounded: bool,
}

impl TPrimeReport {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "level,norm,residual,off_constraint_residual")?;
        for i in 0..self.levels.len() {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                self.levels[i], self.norms[i], self.residuals[i], self.off_constraint_residuals[i]
            )?;
        }
        Ok(())
    }
}

pub fn tprime_sequence(
    family: &Family,
    sigma: &Simplex,
    mode: &TPrimeMode,
    levels: &[usize],
    tol: f64,
) -> Result<TPrimeReport> {
    let sols = levels
        .iter()
        .map(|&n| tprime_solve(&family.generate(n)?, sigma, mode, tol))
        .collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = sols.iter().map(|s| s.norm).collect();
    let growth = norms.last().unwrap_or(&0.0) / norms.first().copied().unwrap_or(1.0) - 1.0;
    Ok(TPrimeReport {
        family: family.to_string(),
        sigma: sigma.clone(),
        mode: mode.clone(),
        levels: levels.to_vec(),
        residuals: sols.iter().map(|s| s.residual).collect(),
        off_constraint_residuals: sols.iter().map(|s| s.off_constraint_residual).collect(),
        norms,
        growth,
        bounded: growth.abs() < 0.01,
    })
}
