//! Links of simplices and the maps between link functions and cochains.
//!
//! For `ρ` in the complex, `lk(ρ)` is the set of vertices `v ∉ ρ` with
//! `vρ = ρ ∪ {v}` a simplex. It carries the vertex measure `m_ρ(v) = m(vρ)`
//! and edge weights `b_ρ(v, v') = m(vv'ρ)`. The lift `π^ρ` and restriction
//! `π_ρ` are
//!
//! ```text
//! π^ρ u(τ) = 1_{τ≻ρ} θ(ρ,τ) u(τ∖ρ)        π_ρ ω(v) = θ(ρ,vρ) ω(vρ)
//! ```

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{parity_sign, sign, Simplex, VertexId, WeightedComplex};
use crate::error::{Error, Result};
use crate::generators::Truncation;
use crate::operators::{boundary, coboundary, norm_sq, random_cochain, Cochain};

/// Weighted graph on `lk(ρ)` with symmetric adjacency in CSR form.
#[derive(Clone, Debug)]
pub struct LinkGraph {
    pub base: Simplex,
    pub verts: Vec<VertexId>,
    pub m_rho: Vec<f64>,
    offsets: Vec<usize>,
    adj: Vec<(u32, f64)>,
    /// False when the link was taken at a simplex that is not interior to
    /// depth 2 of a truncation, so `b_ρ` may still grow.
    pub authoritative: bool,
}

#[derive(Serialize, Deserialize)]
struct LinkGraphJson {
    base: Simplex,
    verts: Vec<VertexId>,
    m_rho: Vec<f64>,
    edges: Vec<(VertexId, VertexId, f64)>,
    authoritative: bool,
}

impl LinkGraph {
    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.verts.binary_search(&v).ok()
    }

    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adj[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `Σ_y b_ρ(x, y)`.
    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors(i).iter().map(|&(_, b)| b).sum()
    }

    /// `b_ρ(v, v')`, zero for non-edges.
    pub fn weight(&self, v: VertexId, w: VertexId) -> f64 {
        let (Some(i), Some(j)) = (self.index_of(v), self.index_of(w)) else {
            return 0.0;
        };
        self.neighbors(i)
            .iter()
            .find(|&&(k, _)| k as usize == j)
            .map_or(0.0, |&(_, b)| b)
    }

    /// `Σ_v m_ρ(v)`.
    pub fn volume(&self) -> f64 {
        self.m_rho.iter().sum()
    }

    /// Each edge once, as `(v, v', b)` with `v < v'`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, f64)> + '_ {
        (0..self.len()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&(j, _)| (j as usize) > i)
                .map(move |&(j, b)| (self.verts[i], self.verts[j as usize], b))
        })
    }

    /// Connected components over positive-weight edges, each sorted, ordered
    /// by smallest vertex.
    pub fn components(&self) -> Vec<Vec<VertexId>> {
        let mut uf = UnionFind::new(self.len());
        for i in 0..self.len() {
            for &(j, b) in self.neighbors(i) {
                if b > 0.0 {
                    uf.union(i, j as usize);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<VertexId>> = BTreeMap::new();
        for i in 0..self.len() {
            groups.entry(uf.find(i)).or_default().push(self.verts[i]);
        }
        let mut out: Vec<Vec<VertexId>> = groups.into_values().collect();
        out.sort_by_key(|c| c[0]);
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(LinkGraphJson {
            base: self.base.clone(),
            verts: self.verts.clone(),
            m_rho: self.m_rho.clone(),
            edges: self.edges().collect(),
            authoritative: self.authoritative,
        })
        .expect("serializable")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<LinkGraph> {
        let j: LinkGraphJson = serde_json::from_value(value.clone())?;
        let mut verts = j.verts.clone();
        verts.sort_unstable();
        verts.dedup();
        if verts != j.verts || j.m_rho.len() != verts.len() {
            return Err(Error::InvalidParameter(
                "link vertices must be sorted and weighted".into(),
            ));
        }
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); verts.len()];
        for (a, b, w) in j.edges {
            let (Ok(i), Ok(k)) = (verts.binary_search(&a), verts.binary_search(&b)) else {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a},{b}) leaves the link"
                )));
            };
            if i == k || w < 0.0 {
                return Err(Error::InvalidParameter(format!("bad edge ({a},{b},{w})")));
            }
            lists[i].push((k as u32, w));
            lists[k].push((i as u32, w));
        }
        Ok(from_lists(j.base, verts, j.m_rho, lists, j.authoritative))
    }
}

fn from_lists(
    base: Simplex,
    verts: Vec<VertexId>,
    m_rho: Vec<f64>,
    mut lists: Vec<Vec<(u32, f64)>>,
    authoritative: bool,
) -> LinkGraph {
    let mut offsets = Vec::with_capacity(verts.len() + 1);
    let mut adj = Vec::new();
    offsets.push(0);
    for l in lists.iter_mut() {
        l.sort_by_key(|&(j, _)| j);
        adj.extend_from_slice(l);
        offsets.push(adj.len());
    }
    LinkGraph {
        base,
        verts,
        m_rho,
        offsets,
        adj,
        authoritative,
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

pub fn link_of(complex: &WeightedComplex, rho: &Simplex) -> Result<LinkGraph> {
    let ri = complex
        .index_of(rho)
        .ok_or_else(|| Error::UnknownSimplex(rho.clone()))?;
    let d = rho.dim();
    let up1 = complex.simplices(d + 1);
    let w1 = complex.weights(d + 1);
    let up2 = complex.simplices(d + 2);
    let w2 = complex.weights(d + 2);
    let cof = complex.coface_indices(d, ri);
    // Cofaces are sorted, but their extra vertices need not be.
    let mut entries: Vec<(VertexId, usize)> = cof
        .iter()
        .map(|&j| {
            let (_, v) = rho.missing_vertex(&up1[j as usize]).expect("coface");
            (v, j as usize)
        })
        .collect();
    entries.sort_unstable();
    let verts: Vec<VertexId> = entries.iter().map(|e| e.0).collect();
    let m_rho = entries.iter().map(|&(_, j)| w1[j]).collect();
    let lists = entries
        .iter()
        .map(|&(_, j)| {
            complex
                .coface_indices(d + 1, j)
                .iter()
                .map(|&k| {
                    let (_, w) = up1[j].missing_vertex(&up2[k as usize]).expect("coface");
                    let idx = verts.binary_search(&w).expect("link vertex");
                    (idx as u32, w2[k as usize])
                })
                .collect()
        })
        .collect();
    Ok(from_lists(rho.clone(), verts, m_rho, lists, true))
}

/// The link inside a truncation, flagged non-authoritative unless `ρ` is
/// interior to depth 2.
pub fn link_in(trunc: &Truncation, rho: &Simplex) -> Result<LinkGraph> {
    let mut g = link_of(&trunc.complex, rho)?;
    g.authoritative = trunc.is_interior_to_depth2(rho);
    Ok(g)
}

/// A finitely supported function on link vertices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkFunction(pub BTreeMap<VertexId, Complex64>);

impl LinkFunction {
    pub fn indicator(v: VertexId) -> Self {
        LinkFunction(BTreeMap::from([(v, Complex64::new(1.0, 0.0))]))
    }

    pub fn get(&self, v: VertexId) -> Complex64 {
        self.0.get(&v).copied().unwrap_or_default()
    }

    pub fn to_dense(&self, link: &LinkGraph) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::default(); link.len()];
        for (&v, &x) in &self.0 {
            let i = link.index_of(v).ok_or_else(|| {
                Error::InvalidParameter(format!("vertex {v} is not in the link of {}", link.base))
            })?;
            out[i] = x;
        }
        Ok(out)
    }

    pub fn from_dense(link: &LinkGraph, values: &[Complex64]) -> Self {
        LinkFunction(
            link.verts
                .iter()
                .zip(values)
                .filter(|(_, x)| **x != Complex64::default())
                .map(|(&v, &x)| (v, x))
                .collect(),
        )
    }

    pub fn random<R: Rng>(link: &LinkGraph, rng: &mut R) -> Self {
        let vals: Vec<Complex64> = (0..link.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        LinkFunction::from_dense(link, &vals)
    }

    /// `Σ m_ρ |u|²`.
    pub fn norm_sq(&self, link: &LinkGraph) -> Result<f64> {
        let d = self.to_dense(link)?;
        Ok(d.iter()
            .zip(&link.m_rho)
            .map(|(x, m)| m * x.norm_sqr())
            .sum())
    }
}

/// `π^ρ`.
pub fn lift(complex: &WeightedComplex, rho: &Simplex, u: &LinkFunction) -> Result<Cochain> {
    let mut out = Cochain::zero(rho.dim() + 1);
    for (&v, &x) in &u.0 {
        let sigma = rho
            .with_vertex(v)
            .ok_or_else(|| Error::InvalidParameter(format!("vertex {v} already lies in {rho}")))?;
        if !complex.contains(&sigma) {
            return Err(Error::UnknownSimplex(sigma));
        }
        let t = sign(rho, &sigma)?;
        out.set(sigma, x * f64::from(t))?;
    }
    Ok(out)
}

/// `π_ρ`.
pub fn restrict(rho: &Simplex, omega: &Cochain) -> Result<LinkFunction> {
    if omega.degree() != rho.dim() + 1 {
        return Err(Error::DegreeMismatch {
            expected: rho.dim() + 1,
            found: omega.degree(),
        });
    }
    let mut out = BTreeMap::new();
    for (sigma, x) in omega.iter() {
        if let Some((pos, v)) = rho.missing_vertex(sigma) {
            out.insert(v, x * f64::from(parity_sign(pos)));
        }
    }
    Ok(LinkFunction(out))
}

/// `L_ρ u(x) = (1/m_ρ(x)) Σ_y b_ρ(x,y)(u(x) − u(y))` on every link vertex.
pub fn link_laplacian(link: &LinkGraph, u: &LinkFunction) -> Result<LinkFunction> {
    let d = u.to_dense(link)?;
    let out: Vec<Complex64> = (0..link.len())
        .map(|i| {
            let s: Complex64 = link
                .neighbors(i)
                .iter()
                .map(|&(j, b)| (d[i] - d[j as usize]) * b)
                .sum();
            s / link.m_rho[i]
        })
        .collect();
    Ok(LinkFunction::from_dense(link, &out))
}

/// `Q_ρ(u) = ½ Σ_{x,y} b_ρ(x,y) |u(x) − u(y)|²`.
pub fn link_energy(link: &LinkGraph, u: &LinkFunction) -> Result<f64> {
    let d = u.to_dense(link)?;
    Ok((0..link.len())
        .flat_map(|i| {
            let d = &d;
            link.neighbors(i)
                .iter()
                .filter(move |&&(j, _)| j as usize > i)
                .map(move |&(j, b)| b * (d[i] - d[j as usize]).norm_sqr())
        })
        .sum())
}

/// Largest residual seen for each localization identity.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub base: Simplex,
    pub trials: usize,
    /// `m(ρ)∂ω(ρ) = Σ m_ρ π_ρω`
    pub a: f64,
    /// `Σ m_ρ u = m(ρ)∂π^ρu(ρ)`
    pub b: f64,
    /// `Q_ρ(u) = Q⁺(π^ρu)`
    pub c: f64,
    /// `π^ρ L_ρ u(τ) = ∂δπ^ρu(τ)` for `τ ≻ ρ`
    pub d: f64,
    /// `∂δπ^ρu` is finite everywhere (always true on finite data)
    pub e: f64,
    pub authoritative: bool,
}

impl LocalizationReport {
    pub fn max_residual(&self) -> f64 {
        self.a.max(self.b).max(self.c).max(self.d).max(self.e)
    }
}

fn rel(lhs: Complex64, rhs: Complex64, scale: f64) -> f64 {
    (lhs - rhs).norm() / scale.max(1.0)
}

/// Checks the localization identities with `trials` random forms and link
/// functions. Residuals are relative to the size of the summed terms.
pub fn verify_localization(
    complex: &WeightedComplex,
    rho: &Simplex,
    trials: usize,
    seed: u64,
) -> Result<LocalizationReport> {
    let link = link_of(complex, rho)?;
    let m_rho_base = complex.require_weight(rho)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = LocalizationReport {
        base: rho.clone(),
        trials,
        authoritative: true,
        ..Default::default()
    };
    if complex.count(rho.dim() + 1) == 0 {
        return Ok(rep);
    }
    for _ in 0..trials {
        // (a)
        let omega = random_cochain(complex, rho.dim() + 1, &mut rng, true);
        let lhs = boundary(complex, &omega)?.get(rho) * m_rho_base;
        let pi = restrict(rho, &omega)?.to_dense(&link)?;
        let terms: Vec<Complex64> = pi.iter().zip(&link.m_rho).map(|(x, m)| x * m).collect();
        let scale: f64 = terms.iter().map(|t| t.norm()).sum();
        rep.a = rep.a.max(rel(lhs, terms.iter().sum(), scale));

        // (b)
        let u = LinkFunction::random(&link, &mut rng);
        let ud = u.to_dense(&link)?;
        let lifted = lift(complex, rho, &u)?;
        let lhs: Complex64 = ud.iter().zip(&link.m_rho).map(|(x, m)| x * m).sum();
        let scale: f64 = ud.iter().zip(&link.m_rho).map(|(x, m)| x.norm() * m).sum();
        let rhs = boundary(complex, &lifted)?.get(rho) * m_rho_base;
        rep.b = rep.b.max(rel(lhs, rhs, scale));

        // (c)
        let q_link = link_energy(&link, &u)?;
        let dl = coboundary(complex, &lifted)?;
        let q_up = norm_sq(complex, &dl)?;
        rep.c = rep.c.max((q_link - q_up).abs() / q_link.abs().max(1.0));

        // (d), (e)
        let ddl = boundary(complex, &dl)?;
        let lu = lift(complex, rho, &link_laplacian(&link, &u)?)?;
        let scale = lu.sup_norm().max(ddl.sup_norm());
        for &v in &link.verts {
            let tau = rho.with_vertex(v).expect("link vertex");
            rep.d = rep.d.max(rel(lu.get(&tau), ddl.get(&tau), scale));
        }
        if ddl
            .iter()
            .any(|(_, x)| !x.re.is_finite() || !x.im.is_finite())
        {
            rep.e = f64::INFINITY;
        }
    }
    Ok(rep)
}

/// [`verify_localization`] on a truncation; the report is authoritative only
/// when `ρ` is interior to depth 2.
pub fn verify_localization_in(
    trunc: &Truncation,
    rho: &Simplex,
    trials: usize,
    seed: u64,
) -> Result<LocalizationReport> {
    let mut rep = verify_localization(&trunc.complex, rho, trials, seed)?;
    rep.authoritative = trunc.is_interior_to_depth2(rho);
    Ok(rep)
}
