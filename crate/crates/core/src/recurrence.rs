//! Recurrence and transience of weighted graphs from grounded exhaustions.
//!
//! A level of an exhaustion is a [`FiniteGraph`] whose boundary vertices are
//! grounded (held at potential 0) and whose vertices may additionally leak to
//! ground through a known conductance. The effective resistance `R_n` from
//! the root to ground is non-decreasing in `n`; the root's component is
//! recurrent exactly when `R_n → ∞`, i.e. when the capacity `1/R_n` tends to 0.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{Simplex, VertexId};
use crate::error::{Error, Result};
use crate::generators::{box_points, Family, Truncation};
use crate::linalg::{pcg, CgOptions};
use crate::links::{link_in, LinkFunction, LinkGraph, UnionFind};
use crate::par::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Recurrent,
    Transient,
    Undetermined,
}

/// One level of an exhaustion.
#[derive(Clone, Debug)]
pub struct FiniteGraph {
    pub ids: Vec<VertexId>,
    pub mass: Vec<f64>,
    offsets: Vec<usize>,
    adj: Vec<(u32, f64)>,
    pub grounded: Vec<bool>,
    pub leak: Vec<f64>,
    pub root: Option<VertexId>,
}

impl FiniteGraph {
    /// `edges` hold index pairs into `ids`, each undirected edge once.
    pub fn new(
        ids: Vec<VertexId>,
        mass: Vec<f64>,
        edges: &[(usize, usize, f64)],
        grounded: Vec<bool>,
        leak: Vec<f64>,
        root: Option<VertexId>,
    ) -> Result<FiniteGraph> {
        let n = ids.len();
        if mass.len() != n || grounded.len() != n || leak.len() != n {
            return Err(Error::InvalidParameter(
                "graph arrays differ in length".into(),
            ));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "graph ids must be strictly increasing".into(),
            ));
        }
        let mut deg = vec![0usize; n + 1];
        for &(a, b, w) in edges {
            if a == b || a >= n || b >= n || w.is_nan() || w < 0.0 {
                return Err(Error::InvalidParameter(format!("bad edge ({a},{b},{w})")));
            }
            deg[a + 1] += 1;
            deg[b + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut fill = deg.clone();
        let mut adj = vec![(0u32, 0.0); edges.len() * 2];
        for &(a, b, w) in edges {
            adj[fill[a]] = (b as u32, w);
            fill[a] += 1;
            adj[fill[b]] = (a as u32, w);
            fill[b] += 1;
        }
        for i in 0..n {
            adj[deg[i]..deg[i + 1]].sort_by_key(|e| e.0);
        }
        Ok(FiniteGraph {
            ids,
            mass,
            offsets: deg,
            adj,
            grounded,
            leak,
            root,
        })
    }

    /// A link graph with nothing grounded.
    pub fn from_link(link: &LinkGraph) -> FiniteGraph {
        let edges: Vec<(usize, usize, f64)> = (0..link.len())
            .flat_map(|i| {
                link.neighbors(i)
                    .iter()
                    .filter(move |&&(j, _)| j as usize > i)
                    .map(move |&(j, b)| (i, j as usize, b))
            })
            .collect();
        let n = link.len();
        FiniteGraph::new(
            link.verts.clone(),
            link.m_rho.clone(),
            &edges,
            vec![false; n],
            vec![0.0; n],
            None,
        )
        .expect("link graphs are well formed")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.ids.binary_search(&v).ok()
    }

    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adj[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors(i).iter().map(|e| e.1).sum()
    }

    /// Scales every conductance (edges and leaks) by `c`.
    pub fn scaled(&self, c: f64) -> FiniteGraph {
        let mut g = self.clone();
        g.adj.iter_mut().for_each(|e| e.1 *= c);
        g.leak.iter_mut().for_each(|l| *l *= c);
        g
    }

    /// Component labels over positive-weight edges (label = smallest index).
    pub fn component_labels(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.len());
        for i in 0..self.len() {
            for &(j, b) in self.neighbors(i) {
                if b > 0.0 {
                    uf.union(i, j as usize);
                }
            }
        }
        (0..self.len()).map(|i| uf.find(i)).collect()
    }

    /// Default root: the designated one, else the smallest non-grounded id.
    pub fn default_root(&self) -> Option<VertexId> {
        self.root.or_else(|| {
            (0..self.len())
                .find(|&i| !self.grounded[i])
                .map(|i| self.ids[i])
        })
    }

    /// Energy `½ Σ b |u(x) − u(y)|² + Σ leak |u|²` of a potential.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.edge_energy(u)
            + (0..self.len())
                .map(|i| self.leak[i] * u[i] * u[i])
                .sum::<f64>()
    }

    /// `½ Σ b |u(x) − u(y)|²` without the leak term.
    pub fn edge_energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.len() {
            for &(j, b) in self.neighbors(i) {
                if (j as usize) > i {
                    let d = u[i] - u[j as usize];
                    e += b * d * d;
                }
            }
        }
        e
    }
}

/// Grounded Laplacian restricted to a set of unknown vertices.
struct Reduced<'a> {
    g: &'a FiniteGraph,
    unknown: Vec<usize>,
    // position of each vertex among the unknowns, usize::MAX if fixed
    pos: Vec<usize>,
    diag: Vec<f64>,
    exec: Execution,
}

impl<'a> Reduced<'a> {
    fn new(g: &'a FiniteGraph, unknown: Vec<usize>) -> Self {
        let mut pos = vec![usize::MAX; g.len()];
        for (k, &i) in unknown.iter().enumerate() {
            pos[i] = k;
        }
        let diag = unknown.iter().map(|&i| g.degree(i) + g.leak[i]).collect();
        let exec = if unknown.len() > 20_000 {
            Execution::default()
        } else {
            Execution::Sequential
        };
        Reduced {
            g,
            unknown,
            pos,
            diag,
            exec,
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.exec.fill(y, |k, out| {
            let i = self.unknown[k];
            let mut s = self.diag[k] * x[k];
            for &(j, b) in self.g.neighbors(i) {
                let p = self.pos[j as usize];
                if p != usize::MAX {
                    s -= b * x[p];
                }
            }
            *out = s;
        });
    }

    fn solve(&self, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, usize, f64)> {
        let opts = CgOptions::new(tol, self.unknown.len());
        let out = pcg(|x, y| self.apply(x, y), &self.diag, rhs, &opts)?;
        Ok((out.x, out.iterations, out.rel_residual))
    }
}

/// Vertices of `root`'s component, and whether it touches ground.
fn component_of(g: &FiniteGraph, root: usize) -> (Vec<usize>, bool) {
    let labels = g.component_labels();
    let members: Vec<usize> = (0..g.len())
        .filter(|&i| labels[i] == labels[root])
        .collect();
    let grounded = members.iter().any(|&i| g.grounded[i] || g.leak[i] > 0.0);
    (members, grounded)
}

/// Root-to-ground resistance, capacity, and the equilibrium potential.
#[derive(Clone, Debug)]
pub struct ResistanceSolve {
    pub resistance: f64,
    /// `Q(h)` of the computed potential; equals `1/R` up to solver error.
    pub capacity: f64,
    /// `h` on every vertex (1 at the root, 0 on ground and off-component).
    pub potential: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

pub fn effective_resistance(g: &FiniteGraph, root: VertexId, tol: f64) -> Result<ResistanceSolve> {
    let r = g
        .index_of(root)
        .ok_or_else(|| Error::InvalidParameter(format!("root {root} not in graph")))?;
    if g.grounded[r] {
        return Err(Error::InvalidParameter(format!("root {root} is grounded")));
    }
    let (members, touches) = component_of(g, r);
    let mut potential = vec![0.0; g.len()];
    potential[r] = 1.0;
    if !touches {
        return Ok(ResistanceSolve {
            resistance: f64::INFINITY,
            capacity: 0.0,
            potential: members.iter().fold(potential, |mut p, &i| {
                p[i] = 1.0;
                p
            }),
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let unknown: Vec<usize> = members
        .into_iter()
        .filter(|&i| i != r && !g.grounded[i])
        .collect();
    let red = Reduced::new(g, unknown);
    let mut rhs = vec![0.0; red.unknown.len()];
    for &(j, b) in g.neighbors(r) {
        let p = red.pos[j as usize];
        if p != usize::MAX {
            rhs[p] += b;
        }
    }
    let (x, iterations, rel_residual) = red.solve(&rhs, tol)?;
    for (k, &i) in red.unknown.iter().enumerate() {
        potential[i] = x[k];
    }
    let flux: f64 = g
        .neighbors(r)
        .iter()
        .map(|&(j, b)| b * (1.0 - potential[j as usize]))
        .sum::<f64>()
        + g.leak[r];
    let capacity = g.energy(&potential);
    Ok(ResistanceSolve {
        resistance: 1.0 / flux,
        capacity,
        potential,
        iterations,
        rel_residual,
    })
}

/// Dirichlet solution of `L u = 1_{v₀}` with `u = 0` on ground.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonopoleSolution {
    pub level: usize,
    pub v0: VertexId,
    pub ids: Vec<VertexId>,
    pub values: Vec<f64>,
    pub energy: f64,
    /// Largest `|L u − 1_{v₀}|` over non-grounded vertices.
    pub residual: f64,
    pub iterations: usize,
}

impl MonopoleSolution {
    pub fn as_link_function(&self) -> LinkFunction {
        LinkFunction(
            self.ids
                .iter()
                .zip(&self.values)
                .filter(|(_, &x)| x != 0.0)
                .map(|(&v, &x)| (v, num_complex::Complex64::new(x, 0.0)))
                .collect(),
        )
    }
}

pub fn monopole_on(
    g: &FiniteGraph,
    level: usize,
    v0: VertexId,
    tol: f64,
) -> Result<MonopoleSolution> {
    let r = g
        .index_of(v0)
        .ok_or_else(|| Error::InvalidParameter(format!("vertex {v0} not in graph")))?;
    if g.grounded[r] {
        return Err(Error::InvalidParameter(format!("v0 = {v0} is grounded")));
    }
    let (members, touches) = component_of(g, r);
    let mut values = vec![0.0; g.len()];
    let unknown: Vec<usize> = members.into_iter().filter(|&i| !g.grounded[i]).collect();
    let red = Reduced::new(g, unknown);
    let mut rhs = vec![0.0; red.unknown.len()];
    if touches {
        rhs[red.pos[r]] = g.mass[r];
    } else {
        // no ground: solve with the source balanced by a uniform sink
        let vol: f64 = red.unknown.iter().map(|&i| g.mass[i]).sum();
        for (k, &i) in red.unknown.iter().enumerate() {
            rhs[k] = -g.mass[r] * g.mass[i] / vol;
        }
        rhs[red.pos[r]] += g.mass[r];
    }
    let (x, iterations, _) = red.solve(&rhs, tol)?;
    for (k, &i) in red.unknown.iter().enumerate() {
        values[i] = x[k];
    }
    let mut residual = 0.0f64;
    for (k, &i) in red.unknown.iter().enumerate() {
        let mut lu = (g.degree(i) + g.leak[i]) * values[i];
        for &(j, b) in g.neighbors(i) {
            lu -= b * values[j as usize];
        }
        let target = rhs[k];
        residual = residual.max((lu - target).abs() / g.mass[i]);
    }
    Ok(MonopoleSolution {
        level,
        v0,
        ids: g.ids.clone(),
        energy: g.energy(&values),
        values,
        residual,
        iterations,
    })
}

/// A nested sequence of grounded finite graphs.
pub trait GraphExhaustion: Sync {
    fn name(&self) -> String;
    fn graph(&self, level: usize) -> Result<FiniteGraph>;
}

/// `Z^dim` with unit conductances on sup-norm boxes of radius `n`; the box
/// boundary is grounded and the origin is the root.
#[derive(Clone, Debug)]
pub struct LatticeExhaustion {
    pub dim: usize,
    pub conductance: f64,
}

impl LatticeExhaustion {
    pub fn new(dim: usize) -> Self {
        LatticeExhaustion {
            dim,
            conductance: 1.0,
        }
    }
}

/// Ids for lattice exhaustions: lexicographic rank in the box of radius `n`.
pub(crate) fn lattice_index(p: &[i64], n: i64) -> usize {
    p.iter().fold(0usize, |acc, &c| {
        acc * (2 * n as usize + 1) + (c + n) as usize
    })
}

impl GraphExhaustion for LatticeExhaustion {
    fn name(&self) -> String {
        format!("lattice:{}", self.dim)
    }

    fn graph(&self, n: usize) -> Result<FiniteGraph> {
        if !(1..=3).contains(&self.dim) || n == 0 {
            return Err(Error::InvalidParameter(
                "lattice dim 1..=3 and level >= 1".into(),
            ));
        }
        let pts = box_points(self.dim, n);
        let ni = n as i64;
        // Ids must be stable across levels: pack coordinates, origin smallest.
        let id = |p: &[i64]| -> VertexId {
            p.iter()
                .enumerate()
                .map(|(i, &c)| {
                    let z = if c >= 0 {
                        2 * c as u64
                    } else {
                        (-2 * c - 1) as u64
                    };
                    z << (21 * i as u32)
                })
                .sum()
        };
        let mut order: Vec<(VertexId, usize)> =
            pts.iter().enumerate().map(|(k, p)| (id(p), k)).collect();
        order.sort_unstable();
        let mut rank = vec![0usize; pts.len()];
        for (r, &(_, k)) in order.iter().enumerate() {
            rank[k] = r;
        }
        let mut edges = Vec::new();
        for p in &pts {
            for axis in 0..self.dim {
                if p[axis] < ni {
                    let mut q = p.clone();
                    q[axis] += 1;
                    edges.push((
                        rank[lattice_index(p, ni)],
                        rank[lattice_index(&q, ni)],
                        self.conductance,
                    ));
                }
            }
        }
        let mut grounded = vec![false; pts.len()];
        for (k, p) in pts.iter().enumerate() {
            grounded[rank[k]] = p.iter().any(|c| c.abs() == ni);
        }
        let m = pts.len();
        FiniteGraph::new(
            order.iter().map(|o| o.0).collect(),
            vec![1.0; m],
            &edges,
            grounded,
            vec![0.0; m],
            Some(id(&vec![0; self.dim])),
        )
    }
}

/// The rooted tree with `branching` children per vertex, unit conductances,
/// grounded at depth `n`. The lumped form merges each generation into one
/// vertex, which leaves root resistance and capacity unchanged by symmetry.
#[derive(Clone, Debug)]
pub struct TreeExhaustion {
    pub branching: usize,
    pub lumped: bool,
}

impl GraphExhaustion for TreeExhaustion {
    fn name(&self) -> String {
        format!(
            "tree:{}{}",
            self.branching,
            if self.lumped { ":lumped" } else { "" }
        )
    }

    fn graph(&self, n: usize) -> Result<FiniteGraph> {
        if self.branching == 0 || n == 0 {
            return Err(Error::InvalidParameter(
                "branching and level must be >= 1".into(),
            ));
        }
        let b = self.branching as f64;
        if self.lumped {
            let edges: Vec<_> = (0..n).map(|k| (k, k + 1, b.powi(k as i32 + 1))).collect();
            let mut grounded = vec![false; n + 1];
            grounded[n] = true;
            return FiniteGraph::new(
                (1..=n as u64 + 1).collect(),
                (0..=n).map(|k| b.powi(k as i32)).collect(),
                &edges,
                grounded,
                vec![0.0; n + 1],
                Some(1),
            );
        }
        let bu = self.branching as u64;
        let mut count = 1usize;
        let mut layer = 1usize;
        for _ in 0..n {
            layer *= self.branching;
            count += layer;
        }
        if count > 50_000_000 {
            return Err(Error::InvalidParameter(
                "tree too large; use the lumped form".into(),
            ));
        }
        let first_leaf = count - layer;
        // heap ids 1..=count map to indices 0..count
        let edges: Vec<_> = (2..=count as u64)
            .map(|v| (((v - 2) / bu) as usize, (v - 1) as usize, 1.0))
            .collect();
        FiniteGraph::new(
            (1..=count as u64).collect(),
            vec![1.0; count],
            &edges,
            (0..count).map(|i| i >= first_leaf).collect(),
            vec![0.0; count],
            Some(1),
        )
    }
}

/// Which simplex of a family the link is taken at.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkBase {
    Apex,
    Simplex(Simplex),
}

/// Links of one simplex across the truncations of a family. A link vertex
/// `v` is grounded when `vρ` is not interior, unless the family knows the
/// missing coface mass of `vρ`, which then becomes a leak to ground.
#[derive(Clone, Debug)]
pub struct LinkExhaustion {
    pub family: Family,
    pub base: LinkBase,
}

impl LinkExhaustion {
    pub fn rho(&self, trunc: &Truncation) -> Result<Simplex> {
        match &self.base {
            LinkBase::Apex => trunc
                .apex()
                .cloned()
                .ok_or_else(|| Error::InvalidParameter(format!("{} has no apex", self.family))),
            LinkBase::Simplex(s) => Ok(s.clone()),
        }
    }

    pub fn link_graph(&self, level: usize) -> Result<(FiniteGraph, LinkGraph)> {
        let trunc = self.family.generate(level)?;
        let rho = self.rho(&trunc)?;
        let (mut g, link) = grounded_link(&trunc, &rho)?;
        if self.base != LinkBase::Apex {
            g.root = None;
        }
        Ok((g, link))
    }
}

/// The link of `ρ` in a truncation as a grounded graph: `v` is grounded when
/// `vρ` is not interior, unless the missing coface mass of `vρ` is known, in
/// which case it becomes a leak. The root is the family's link root when `ρ`
/// is the family's apex.
pub fn grounded_link(trunc: &Truncation, rho: &Simplex) -> Result<(FiniteGraph, LinkGraph)> {
    let link = link_in(trunc, rho)?;
    let mut g = FiniteGraph::from_link(&link);
    for (i, &v) in link.verts.iter().enumerate() {
        let vr = rho.with_vertex(v).expect("link vertex");
        if !trunc.is_interior(&vr) {
            match trunc.tail_mass(&vr) {
                Some(t) => g.leak[i] = t,
                None => g.grounded[i] = true,
            }
        }
    }
    g.root = match (trunc.apex(), trunc.link_root()) {
        (Some(a), Some(r)) if a == rho && g.index_of(r).is_some() => Some(r),
        _ => None,
    };
    Ok((g, link))
}

impl GraphExhaustion for LinkExhaustion {
    fn name(&self) -> String {
        match &self.base {
            LinkBase::Apex => format!("link:{}:apex", self.family),
            LinkBase::Simplex(s) => format!("link:{}:{s}", self.family),
        }
    }

    fn graph(&self, level: usize) -> Result<FiniteGraph> {
        Ok(self.link_graph(level)?.0)
    }
}

/// A single finite graph, repeated at every level.
#[derive(Clone, Debug)]
pub struct FixedGraph(pub FiniteGraph);

impl GraphExhaustion for FixedGraph {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn graph(&self, _level: usize) -> Result<FiniteGraph> {
        Ok(self.0.clone())
    }
}

/// Thresholds for turning finite sequences into verdicts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Policy {
    /// Transient: relative resistance increments below this...
    pub transient_eps: f64,
    /// ...over this many consecutive levels...
    pub window: usize,
    /// ...and increments decaying at least like `n^{-min_decay_exponent}`.
    pub min_decay_exponent: f64,
    /// Recurrent: final capacity below this, non-increasing, fitted decay.
    pub recurrent_capacity: f64,
    pub solver_tol: f64,
    /// Also solve the root monopole at each level.
    pub monopole: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            transient_eps: 1e-3,
            window: 5,
            min_decay_exponent: 1.5,
            recurrent_capacity: 1e-2,
            solver_tol: 1e-12,
            monopole: true,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Extrapolation {
    /// Aitken Δ² estimate of `lim R_n` from the last three levels.
    pub aitken_resistance: Option<f64>,
    /// Fitted `α` in `R_n − R_{n−1} ≈ C n^{−α}` over the window; `inf` when
    /// the increments vanish.
    pub increment_decay_exponent: Option<f64>,
    /// Fitted slope of `log cap_n` against `log n` over the window.
    pub capacity_log_slope: Option<f64>,
    pub last_relative_increment: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McEstimate {
    pub walks: u64,
    pub returns: u64,
    pub escapes: u64,
    pub timeouts: u64,
    pub probability: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub half_width: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub exhaustion: String,
    pub root: VertexId,
    pub levels: Vec<usize>,
    pub resistance_seq: Vec<f64>,
    pub capacity_seq: Vec<f64>,
    pub monopole_energy_seq: Option<Vec<f64>>,
    pub iterations: Vec<usize>,
    /// Largest `|cap_n · R_n − 1|`.
    pub duality_residual: f64,
    pub mc_return_estimate: Option<McEstimate>,
    pub verdict: Verdict,
    pub extrapolation: Extrapolation,
    pub policy: Policy,
}

impl ClassificationReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "level,resistance,capacity,monopole_energy")?;
        for (k, &n) in self.levels.iter().enumerate() {
            let q = self
                .monopole_energy_seq
                .as_ref()
                .map(|v| format!("{:e}", v[k]))
                .unwrap_or_default();
            writeln!(
                out,
                "{n},{:e},{:e},{q}",
                self.resistance_seq[k], self.capacity_seq[k]
            )?;
        }
        Ok(())
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Applies `policy` to resistance and capacity sequences.
pub fn verdict_from_sequences(
    levels: &[usize],
    resistance: &[f64],
    capacity: &[f64],
    policy: &Policy,
) -> (Verdict, Extrapolation) {
    let mut ex = Extrapolation::default();
    let k = resistance.len();
    if k == 0 {
        return (Verdict::Undetermined, ex);
    }
    if resistance[k - 1].is_infinite() {
        return (Verdict::Recurrent, ex);
    }
    if k >= 3 {
        let (a, b, c) = (resistance[k - 3], resistance[k - 2], resistance[k - 1]);
        let d2 = (c - b) - (b - a);
        ex.aitken_resistance = Some(if d2.abs() > 0.0 {
            c - (c - b) * (c - b) / d2
        } else {
            c
        });
    }
    let w = policy.window.max(2).min(k.saturating_sub(1));
    if w < 2 {
        return (Verdict::Undetermined, ex);
    }
    let lo = k - 1 - w;
    let rel_inc: Vec<f64> = (lo + 1..k)
        .map(|i| (resistance[i] - resistance[i - 1]) / resistance[i])
        .collect();
    ex.last_relative_increment = rel_inc.last().copied();

    let floor = 1e-13;
    let positive: Vec<(f64, f64)> = (lo + 1..k)
        .filter(|&i| resistance[i] - resistance[i - 1] > floor * resistance[i])
        .map(|i| {
            (
                (levels[i] as f64).ln(),
                (resistance[i] - resistance[i - 1]).ln(),
            )
        })
        .collect();
    ex.increment_decay_exponent = if positive.len() < 2 {
        Some(f64::INFINITY)
    } else {
        let (xs, ys): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        slope(&xs, &ys).map(|s| -s)
    };
    let caps: Vec<(f64, f64)> = (lo..k)
        .filter(|&i| capacity[i] > 0.0)
        .map(|i| ((levels[i] as f64).ln(), capacity[i].ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = caps.into_iter().unzip();
    ex.capacity_log_slope = slope(&xs, &ys);

    let transient = rel_inc.iter().all(|&r| r < policy.transient_eps)
        && ex
            .increment_decay_exponent
            .is_some_and(|a| a >= policy.min_decay_exponent)
        && capacity[k - 1] > 0.0;
    let monotone = capacity.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-10));
    let recurrent = capacity[k - 1] < policy.recurrent_capacity
        && monotone
        && ex.capacity_log_slope.is_some_and(|s| s < 0.0);
    let v = match (recurrent, transient) {
        (true, false) => Verdict::Recurrent,
        (false, true) => Verdict::Transient,
        _ => Verdict::Undetermined,
    };
    (v, ex)
}

/// Resistance, capacity and (optionally) monopole energy at each level.
pub fn classify<E: GraphExhaustion + ?Sized>(
    exh: &E,
    levels: &[usize],
    root: Option<VertexId>,
    policy: &Policy,
) -> Result<ClassificationReport> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "levels must be strictly increasing".into(),
        ));
    }
    let mut resistance = Vec::new();
    let mut capacity = Vec::new();
    let mut energy = Vec::new();
    let mut iterations = Vec::new();
    let mut duality = 0.0f64;
    let mut root_id = root;
    for &n in levels {
        let g = exh.graph(n)?;
        let r = match root_id {
            Some(r) => r,
            None => {
                let r = g
                    .default_root()
                    .ok_or_else(|| Error::InvalidParameter("every vertex is grounded".into()))?;
                root_id = Some(r);
                r
            }
        };
        let sol = effective_resistance(&g, r, policy.solver_tol)?;
        if let Some(&prev) = resistance.last() {
            let prev: f64 = prev;
            if sol.resistance < prev * (1.0 - 1e-10) {
                return Err(Error::Invariant(format!(
                    "Rayleigh monotonicity: R_{n} = {} < {prev}",
                    sol.resistance
                )));
            }
        }
        if sol.resistance.is_finite() {
            duality = duality.max((sol.capacity * sol.resistance - 1.0).abs());
        }
        if policy.monopole {
            energy.push(monopole_on(&g, n, r, policy.solver_tol)?.energy);
        }
        resistance.push(sol.resistance);
        capacity.push(sol.capacity);
        iterations.push(sol.iterations);
    }
    let (verdict, extrapolation) = verdict_from_sequences(levels, &resistance, &capacity, policy);
    Ok(ClassificationReport {
        exhaustion: exh.name(),
        root: root_id.expect("set at first level"),
        levels: levels.to_vec(),
        resistance_seq: resistance,
        capacity_seq: capacity,
        monopole_energy_seq: policy.monopole.then_some(energy),
        iterations,
        duality_residual: duality,
        mc_return_estimate: None,
        verdict,
        extrapolation,
        policy: policy.clone(),
    })
}

/// One report per connected component of the first level, each rooted at
/// the designated root if it lies in the component, else at its smallest
/// non-grounded vertex. Components are matched across levels by root id.
pub fn classify_components<E: GraphExhaustion + ?Sized>(
    exh: &E,
    levels: &[usize],
    policy: &Policy,
) -> Result<Vec<ClassificationReport>> {
    let first = exh.graph(
        *levels
            .first()
            .ok_or_else(|| Error::InvalidParameter("no levels".into()))?,
    )?;
    let labels = first.component_labels();
    let mut roots: BTreeMap<usize, VertexId> = BTreeMap::new();
    if let Some(r) = first.root.and_then(|r| first.index_of(r)) {
        roots.insert(labels[r], first.ids[r]);
    }
    for i in 0..first.len() {
        if !first.grounded[i] {
            roots.entry(labels[i]).or_insert(first.ids[i]);
        }
    }
    roots
        .values()
        .map(|&r| classify(exh, levels, Some(r), policy))
        .collect()
}

/// Worst verdict across components: any transient component wins, then any
/// undetermined one.
pub fn combine_verdicts<I: IntoIterator<Item = Verdict>>(vs: I) -> Verdict {
    let mut out = Verdict::Recurrent;
    for v in vs {
        match v {
            Verdict::Transient => return Verdict::Transient,
            Verdict::Undetermined => out = Verdict::Undetermined,
            Verdict::Recurrent => {}
        }
    }
    out
}

/// State space of a random walk with a fixed start.
pub trait WalkSpace: Sync {
    type State: Copy + PartialEq;
    fn start(&self) -> Self::State;
    /// Next state, or `None` when the walk leaves the region.
    fn step<R: Rng>(&self, s: Self::State, rng: &mut R) -> Option<Self::State>;
}

/// Simple random walk on `Z^dim` (`dim ≤ 3`), escaping once the Euclidean
/// norm reaches `escape_radius`.
#[derive(Clone, Debug)]
pub struct LatticeWalk {
    pub dim: usize,
    pub escape_radius: f64,
}

impl WalkSpace for LatticeWalk {
    type State = [i32; 3];

    fn start(&self) -> [i32; 3] {
        [0; 3]
    }

    fn step<R: Rng>(&self, mut s: [i32; 3], rng: &mut R) -> Option<[i32; 3]> {
        let k = rng.random_range(0..2 * self.dim);
        s[k / 2] += if k % 2 == 0 { 1 } else { -1 };
        let r2: i64 = s.iter().map(|&c| i64::from(c) * i64::from(c)).sum();
        if (r2 as f64) >= self.escape_radius * self.escape_radius {
            None
        } else {
            Some(s)
        }
    }
}

/// Walk on a finite graph with `P(x → y) = b(x,y) / Σ_z b(x,z)`. Grounded
/// vertices, leaks, and vertices beyond `radius` hops from the start count
/// as escape.
#[derive(Clone, Debug)]
pub struct GraphWalk {
    g: FiniteGraph,
    start: usize,
    cumulative: Vec<Vec<f64>>,
    escaped: Vec<bool>,
}

impl GraphWalk {
    pub fn new(g: FiniteGraph, start: VertexId, radius: Option<usize>) -> Result<Self> {
        let s = g
            .index_of(start)
            .ok_or_else(|| Error::InvalidParameter(format!("start {start} not in graph")))?;
        let mut escaped = g.grounded.clone();
        if let Some(r) = radius {
            let mut dist = vec![usize::MAX; g.len()];
            dist[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                for &(y, b) in g.neighbors(x) {
                    let y = y as usize;
                    if b > 0.0 && dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        queue.push_back(y);
                    }
                }
            }
            for (e, d) in escaped.iter_mut().zip(dist) {
                *e |= d != usize::MAX && d >= r;
            }
        }
        let cumulative = (0..g.len())
            .map(|i| {
                let mut acc = 0.0;
                let mut c: Vec<f64> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(_, b)| {
                        acc += b;
                        acc
                    })
                    .collect();
                c.push(acc + g.leak[i]);
                c
            })
            .collect::<Vec<_>>();
        if cumulative[s].last().copied().unwrap_or(0.0) <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "start {start} is isolated"
            )));
        }
        Ok(GraphWalk {
            g,
            start: s,
            cumulative,
            escaped,
        })
    }
}

impl WalkSpace for GraphWalk {
    type State = usize;

    fn start(&self) -> usize {
        self.start
    }

    fn step<R: Rng>(&self, s: usize, rng: &mut R) -> Option<usize> {
        let c = &self.cumulative[s];
        let total = *c.last().expect("non-empty");
        if total <= 0.0 {
            return None;
        }
        let x = rng.random::<f64>() * total;
        let k = c.partition_point(|&v| v <= x);
        let nb = self.g.neighbors(s);
        if k >= nb.len() {
            return None;
        }
        let y = nb[k].0 as usize;
        if self.escaped[y] {
            None
        } else {
            Some(y)
        }
    }
}

const MC_BATCH: u64 = 10_000;

/// Fraction of walks that come back to the start before escaping or
/// exceeding `max_steps`. Walks run in batches of 10 000; batch `b` draws
/// from stream `b` of a ChaCha8 generator seeded with `seed`, so the result
/// does not depend on the thread count.
pub fn mc_return_probability<S: WalkSpace>(
    space: &S,
    walks: u64,
    max_steps: u64,
    seed: u64,
    exec: Execution,
) -> McEstimate {
    let batches = walks.div_ceil(MC_BATCH) as usize;
    let counts = exec.map_range(batches, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let size = MC_BATCH.min(walks - b as u64 * MC_BATCH);
        let (mut ret, mut esc, mut tmo) = (0u64, 0u64, 0u64);
        let start = space.start();
        for _ in 0..size {
            let mut s = start;
            let mut outcome = 2;
            for _ in 0..max_steps {
                match space.step(s, &mut rng) {
                    None => {
                        outcome = 1;
                        break;
                    }
                    Some(t) if t == start => {
                        outcome = 0;
                        break;
                    }
                    Some(t) => s = t,
                }
            }
            match outcome {
                0 => ret += 1,
                1 => esc += 1,
                _ => tmo += 1,
            }
        }
        (ret, esc, tmo)
    });
    let (returns, escapes, timeouts) = counts
        .into_iter()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let p = returns as f64 / walks.max(1) as f64;
    McEstimate {
        walks,
        returns,
        escapes,
        timeouts,
        probability: p,
        half_width: 1.96 * (p * (1.0 - p) / walks.max(1) as f64).sqrt(),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Root-to-leaves resistance of a full tree by series/parallel reduction.
    fn tree_oracle(branching: usize, depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        (1.0 + tree_oracle(branching, depth - 1)) / branching as f64
    }

    #[test]
    fn z_resistance_is_half_the_radius() {
        let exh = LatticeExhaustion::new(1);
        for n in [1, 2, 7, 40] {
            let g = exh.graph(n).unwrap();
            let s = effective_resistance(&g, g.root.unwrap(), 1e-12).unwrap();
            assert!((s.resistance - n as f64 / 2.0).abs() < 1e-10 * n as f64);
            assert!((s.capacity * s.resistance - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tree_matches_oracle_full_and_lumped() {
        for b in [2, 3] {
            for n in 1..7 {
                let full = TreeExhaustion {
                    branching: b,
                    lumped: false,
                }
                .graph(n)
                .unwrap();
                let lumped = TreeExhaustion {
                    branching: b,
                    lumped: true,
                }
                .graph(n)
                .unwrap();
                let rf = effective_resistance(&full, 1, 1e-12).unwrap().resistance;
                let rl = effective_resistance(&lumped, 1, 1e-12).unwrap().resistance;
                let o = tree_oracle(b, n);
                assert!((rf - o).abs() < 1e-10 && (rl - o).abs() < 1e-10, "{b} {n}");
            }
        }
    }

    #[test]
    fn isolated_component_has_infinite_resistance() {
        let g = FiniteGraph::new(
            vec![1, 2, 3, 4],
            vec![1.0; 4],
            &[(0, 1, 1.0), (2, 3, 1.0)],
            vec![false, false, false, true],
            vec![0.0; 4],
            None,
        )
        .unwrap();
        assert!(effective_resistance(&g, 1, 1e-12)
            .unwrap()
            .resistance
            .is_infinite());
        assert_eq!(effective_resistance(&g, 3, 1e-12).unwrap().resistance, 1.0);
    }

    #[test]
    fn single_vertex_monopole() {
        let g = FiniteGraph::new(
            vec![1, 2],
            vec![1.0, 1.0],
            &[(0, 1, 1.0)],
            vec![false, true],
            vec![0.0; 2],
            Some(1),
        )
        .unwrap();
        let m = monopole_on(&g, 1, 1, 1e-12).unwrap();
        assert!((m.values[0] - 1.0).abs() < 1e-14);
        assert!((m.energy - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monopole_energy_is_mass_squared_times_resistance() {
        let mut g = TreeExhaustion {
            branching: 2,
            lumped: true,
        }
        .graph(6)
        .unwrap();
        g.mass[0] = 2.5;
        let m = monopole_on(&g, 6, 1, 1e-13).unwrap();
        let r = effective_resistance(&g, 1, 1e-13).unwrap().resistance;
        assert!((m.energy - 2.5 * 2.5 * r).abs() < 1e-10);
        assert!(m.residual < 1e-9);
    }

    #[test]
    fn scaling_conductances_divides_resistance() {
        let g = LatticeExhaustion::new(2).graph(4).unwrap();
        let r1 = effective_resistance(&g, g.root.unwrap(), 1e-12)
            .unwrap()
            .resistance;
        let r3 = effective_resistance(&g.scaled(3.0), g.root.unwrap(), 1e-12)
            .unwrap()
            .resistance;
        assert!((r1 / 3.0 - r3).abs() < 1e-10 * r1);
    }

    #[test]
    fn classify_z_and_tree() {
        let levels: Vec<usize> = (1..=256).collect();
        let mut p = Policy::default();
        p.monopole = false;
        let z = classify(&LatticeExhaustion::new(1), &levels, None, &p).unwrap();
        assert_eq!(z.verdict, Verdict::Recurrent);
        let levels: Vec<usize> = (1..=30).collect();
        let t = classify(
            &TreeExhaustion {
                branching: 2,
                lumped: true,
            },
            &levels,
            None,
            &p,
        )
        .unwrap();
        assert_eq!(t.verdict, Verdict::Transient);
        assert!((t.resistance_seq[29] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn star_link_leaks_and_is_recurrent() {
        let exh = LinkExhaustion {
            family: Family::StarLink,
            base: LinkBase::Apex,
        };
        let levels: Vec<usize> = (1..=12).collect();
        let r = classify(&exh, &levels, None, &Policy::default()).unwrap();
        assert_eq!(r.root, 1);
        for (k, &c) in r.capacity_seq.iter().enumerate() {
            assert!((c - 0.5f64.powi(levels[k] as i32)).abs() < 1e-12);
        }
        assert_eq!(r.verdict, Verdict::Recurrent);
    }

    #[test]
    fn finite_link_components_are_recurrent() {
        let exh = LinkExhaustion {
            family: Family::Octahedron,
            base: LinkBase::Simplex(Simplex::vertex(0)),
        };
        let reps = classify_components(&exh, &[1], &Policy::default()).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].verdict, Verdict::Recurrent);
    }

    #[test]
    fn mc_single_edge_always_returns() {
        let g = FiniteGraph::new(
            vec![1, 2],
            vec![1.0; 2],
            &[(0, 1, 1.0)],
            vec![false; 2],
            vec![0.0; 2],
            None,
        )
        .unwrap();
        let w = GraphWalk::new(g, 1, None).unwrap();
        let e = mc_return_probability(&w, 1000, 10, 5, Execution::Parallel);
        assert_eq!(e.returns, 1000);
    }

    #[test]
    fn mc_is_independent_of_execution_mode() {
        let w = LatticeWalk {
            dim: 2,
            escape_radius: 10.0,
        };
        let a = mc_return_probability(&w, 25_000, 1000, 7, Execution::Sequential);
        let b = mc_return_probability(&w, 25_000, 1000, 7, Execution::Parallel);
        assert_eq!(
            (a.returns, a.escapes, a.timeouts),
            (b.returns, b.escapes, b.timeouts)
        );
    }

    #[test]
    fn csv_has_one_row_per_level() {
        let r = classify(
            &LatticeExhaustion::new(1),
            &[1, 2, 3],
            None,
            &Policy::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
