//! Complex families and their finite truncations.
//!
//! Finite families (`full_simplex`, `octahedron`, `torus_grid`) ignore the
//! level and mark every simplex interior. Infinite families produce nested
//! truncations: level `n` is a sub-complex of level `n + 1` with identical
//! weights, and a simplex is *interior* at level `n` when all of its cofaces
//! in the infinite complex are already present.
//!
//! Cone families put an apex (vertex id 0) over a base graph so that the link
//! of the apex is exactly that graph: `b(v, v') = m(apex v v')`. Apex edges
//! carry summable weights `m(apex v)` that decay with the distance of `v`
//! from the base root.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::complex::{Simplex, VertexId, WeightedComplex};
use crate::error::{Error, Result};
use crate::recurrence::Verdict;

const LATTICE_BITS: u32 = 21;
const LATTICE_MAX_RADIUS: usize = 1 << 19;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    FullSimplex { k: usize },
    Octahedron,
    TorusGrid { p: usize, q: usize },
    ConeOverPath,
    ConeOverTree { branching: usize },
    ConeOverLattice { dim: usize },
    SkeletonLattice { dim: usize, include_empty: bool },
    StarLink,
}

/// A finite piece of a (possibly infinite) family.
#[derive(Clone, Debug)]
pub struct Truncation {
    /// `None` for a complex loaded from elsewhere.
    pub family: Option<Family>,
    pub level: usize,
    pub complex: WeightedComplex,
    // interior[d + 1][i] for the i-th d-simplex
    interior: Vec<Vec<bool>>,
    tail_mass: BTreeMap<Simplex, f64>,
    apex: Option<Simplex>,
    link_root: Option<VertexId>,
}

impl Truncation {
    /// Treats a finite complex as its own truncation, everything interior.
    pub fn from_finite(complex: WeightedComplex) -> Truncation {
        let interior = (-1..=complex.top_dimension())
            .map(|d| vec![true; complex.count(d)])
            .collect();
        Truncation {
            family: None,
            level: 0,
            complex,
            interior,
            tail_mass: BTreeMap::new(),
            apex: None,
            link_root: None,
        }
    }

    pub fn is_interior(&self, s: &Simplex) -> bool {
        match self.complex.index_of(s) {
            Some(i) => self.interior[(s.dim() + 1) as usize][i],
            None => false,
        }
    }

    pub(crate) fn is_interior_at(&self, degree: isize, index: usize) -> bool {
        self.interior
            .get((degree + 1) as usize)
            .and_then(|v| v.get(index))
            .copied()
            .unwrap_or(false)
    }

    /// Interior, and so are all of its cofaces.
    pub fn is_interior_to_depth2(&self, s: &Simplex) -> bool {
        let Some(i) = self.complex.index_of(s) else {
            return false;
        };
        self.is_interior_at(s.dim(), i)
            && self
                .complex
                .coface_indices(s.dim(), i)
                .iter()
                .all(|&j| self.is_interior_at(s.dim() + 1, j as usize))
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().flatten().filter(|&&b| b).count()
    }

    /// Total weight of the cofaces of `s` lying outside this truncation, when
    /// the family knows it in closed form.
    pub fn tail_mass(&self, s: &Simplex) -> Option<f64> {
        if self.is_interior(s) {
            return Some(0.0);
        }
        self.tail_mass.get(s).copied()
    }

    /// The distinguished simplex of the family (cone apex, or ∅ for the
    /// lattice skeleton with ∅ included).
    pub fn apex(&self) -> Option<&Simplex> {
        self.apex.as_ref()
    }

    /// The distinguished vertex of the apex link (path origin, tree root,
    /// lattice origin, star centre).
    pub fn link_root(&self) -> Option<VertexId> {
        self.link_root
    }

    /// Rebuilds the complex with ∅ included. Only allowed when the vertex
    /// weights of the family are summable.
    pub fn with_empty(mut self, empty_weight: f64) -> Result<Truncation> {
        let summable = match &self.family {
            None => true,
            Some(f) => matches!(
                f,
                Family::FullSimplex { .. }
                    | Family::Octahedron
                    | Family::TorusGrid { .. }
                    | Family::SkeletonLattice { .. }
            ),
        };
        if !summable {
            return Err(Error::InvalidParameter(format!(
                "vertex weights of {} are not summable; ∅ cannot be included",
                self.family.as_ref().expect("named family")
            )));
        }
        let finite = self.family.as_ref().is_none_or(Family::is_finite);
        let complex = WeightedComplex::from_simplices(
            true,
            empty_weight,
            self.complex
                .iter()
                .filter(|(s, _)| !s.is_empty())
                .map(|(s, w)| (s.clone(), w)),
        )?;
        let mut interior = vec![vec![finite]];
        interior.extend(self.interior.into_iter().skip(1));
        self.interior = interior;
        self.complex = complex;
        Ok(self)
    }
}

impl Family {
    pub fn is_finite(&self) -> bool {
        matches!(
            self,
            Family::FullSimplex { .. } | Family::Octahedron | Family::TorusGrid { .. }
        )
    }

    /// Known recurrence type of the link of the family's apex.
    pub fn apex_link_verdict(&self) -> Option<Verdict> {
        match self {
            Family::ConeOverPath | Family::StarLink => Some(Verdict::Recurrent),
            Family::ConeOverTree { branching } => Some(if *branching >= 2 {
                Verdict::Transient
            } else {
                Verdict::Recurrent
            }),
            Family::ConeOverLattice { dim } | Family::SkeletonLattice { dim, .. } => {
                Some(if *dim >= 3 {
                    Verdict::Transient
                } else {
                    Verdict::Recurrent
                })
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match *self {
            Family::TorusGrid { p, q } if p < 3 || q < 3 => bad("torus_grid needs p, q >= 3"),
            Family::ConeOverTree { branching: 0 } => bad("cone_over_tree needs branching >= 1"),
            Family::ConeOverLattice { dim } | Family::SkeletonLattice { dim, .. }
                if !(1..=3).contains(&dim) =>
            {
                bad("lattice dimension must be 1, 2 or 3")
            }
            Family::FullSimplex { k } if k > 20 => bad("full_simplex supports k <= 20"),
            _ => Ok(()),
        }
    }

    /// The truncation at `level` (ignored by finite families).
    pub fn generate(&self, level: usize) -> Result<Truncation> {
        self.validate()?;
        if !self.is_finite() && level == 0 {
            return Err(Error::InvalidParameter(
                "infinite families start at level 1".into(),
            ));
        }
        match *self {
            Family::FullSimplex { k } => finite(self, full_simplex(k)),
            Family::Octahedron => finite(self, octahedron()),
            Family::TorusGrid { p, q } => finite(self, torus(p, q)),
            Family::ConeOverPath => cone(self, level, path_base(level)),
            Family::ConeOverTree { branching } => {
                if tree_size(branching, level) > 50_000_000 {
                    return Err(Error::InvalidParameter(format!(
                        "tree of depth {level} is too large"
                    )));
                }
                cone(self, level, tree_base(branching, level))
            }
            Family::ConeOverLattice { dim } => {
                check_radius(level)?;
                cone(self, level, lattice_base(dim, level))
            }
            Family::SkeletonLattice { dim, include_empty } => {
                check_radius(level)?;
                skeleton_lattice(self, dim, level, include_empty)
            }
            Family::StarLink => star(self, level),
        }
    }
}

fn check_radius(level: usize) -> Result<()> {
    if level >= LATTICE_MAX_RADIUS {
        return Err(Error::InvalidParameter("lattice radius too large".into()));
    }
    Ok(())
}

fn finite(family: &Family, simplices: Vec<Simplex>) -> Result<Truncation> {
    let complex =
        WeightedComplex::from_simplices(false, 1.0, simplices.into_iter().map(|s| (s, 1.0)))?;
    let mut t = Truncation::from_finite(complex);
    t.family = Some(family.clone());
    Ok(t)
}

fn all_subsets(vertices: &[VertexId]) -> Vec<Simplex> {
    let n = vertices.len();
    (1u64..(1u64 << n))
        .map(|mask| {
            Simplex::from_unsorted((0..n).filter(|i| mask >> i & 1 == 1).map(|i| vertices[i]))
                .unwrap()
        })
        .collect()
}

fn full_simplex(k: usize) -> Vec<Simplex> {
    let v: Vec<VertexId> = (0..=k as u64).collect();
    all_subsets(&v)
}

fn octahedron() -> Vec<Simplex> {
    let mut out = Vec::new();
    for a in [0, 1] {
        for b in [2, 3] {
            for c in [4, 5] {
                out.extend(all_subsets(&[a, b, c]));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

fn torus(p: usize, q: usize) -> Vec<Simplex> {
    let id = |i: usize, j: usize| ((i % p) * q + (j % q)) as VertexId;
    let mut out = Vec::new();
    for i in 0..p {
        for j in 0..q {
            for tri in [
                [id(i, j), id(i + 1, j), id(i + 1, j + 1)],
                [id(i, j), id(i, j + 1), id(i + 1, j + 1)],
            ] {
                out.extend(all_subsets(&tri));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Base graph of a cone: vertices with their apex-edge weight and interior
/// flag, edges with base weight `m(v v')` and link weight `b = m(apex v v')`.
struct ConeBase {
    vertices: Vec<(VertexId, f64, bool)>,
    edges: Vec<(VertexId, VertexId, f64, f64)>,
    root: VertexId,
    tails: Vec<(Simplex, f64)>,
}

fn zigzag(k: i64) -> u64 {
    if k >= 0 {
        2 * k as u64
    } else {
        (-2 * k - 1) as u64
    }
}

fn path_base(n: usize) -> ConeBase {
    let n = n as i64;
    let id = |k: i64| 1 + zigzag(k);
    ConeBase {
        vertices: (-n..=n)
            .map(|k| (id(k), 0.5f64.powi(k.abs() as i32), k.abs() < n))
            .collect(),
        edges: (-n..n).map(|k| (id(k), id(k + 1), 1.0, 1.0)).collect(),
        root: id(0),
        tails: Vec::new(),
    }
}

fn tree_size(branching: usize, depth: usize) -> usize {
    let mut total = 0usize;
    let mut layer = 1usize;
    for _ in 0..=depth {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(branching);
    }
    total
}

/// Heap-labelled tree: root 1, children of `v` are `β(v−1)+2 ..= β(v−1)+β+1`.
fn tree_base(branching: usize, depth: usize) -> ConeBase {
    let b = branching as u64;
    let decay = 1.0 / (2.0 * branching as f64);
    let mut vertices = vec![(1, 1.0, depth > 0)];
    let mut edges = Vec::new();
    let mut layer = vec![1u64];
    for d in 1..=depth {
        let w = decay.powi(d as i32);
        let mut next = Vec::with_capacity(layer.len() * branching);
        for &v in &layer {
            for c in 0..b {
                let child = b * (v - 1) + 2 + c;
                vertices.push((child, w, d < depth));
                edges.push((v, child, 1.0, 1.0));
                next.push(child);
            }
        }
        layer = next;
    }
    ConeBase {
        vertices,
        edges,
        root: 1,
        tails: Vec::new(),
    }
}

fn lattice_id(x: &[i64]) -> u64 {
    x.iter()
        .enumerate()
        .map(|(i, &c)| zigzag(c) << (LATTICE_BITS * i as u32))
        .sum()
}

/// Lattice points of the sup-norm box of radius `n`, in lexicographic order.
pub(crate) fn box_points(dim: usize, n: usize) -> Vec<Vec<i64>> {
    let n = n as i64;
    let mut pts: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                (-n..=n).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    pts
}

fn lattice_base(dim: usize, n: usize) -> ConeBase {
    let pts = box_points(dim, n);
    let ni = n as i64;
    let mut vertices = Vec::with_capacity(pts.len());
    let mut edges = Vec::new();
    for p in &pts {
        let l1: i64 = p.iter().map(|c| c.abs()).sum();
        let sup = p.iter().map(|c| c.abs()).max().unwrap_or(0);
        vertices.push((1 + lattice_id(p), 0.5f64.powi(l1 as i32), sup < ni));
        for axis in 0..dim {
            if p[axis] < ni {
                let mut q = p.clone();
                q[axis] += 1;
                edges.push((1 + lattice_id(p), 1 + lattice_id(&q), 1.0, 1.0));
            }
        }
    }
    ConeBase {
        vertices,
        edges,
        root: 1 + lattice_id(&vec![0; dim]),
        tails: Vec::new(),
    }
}

fn cone(family: &Family, level: usize, base: ConeBase) -> Result<Truncation> {
    let apex: VertexId = 0;
    let mut list = Vec::with_capacity(2 + 2 * base.vertices.len() + 2 * base.edges.len());
    let mut interior_of = BTreeMap::new();
    list.push((Simplex::vertex(apex), 1.0));
    interior_of.insert(Simplex::vertex(apex), false);
    for &(v, w, inner) in &base.vertices {
        list.push((Simplex::vertex(v), 1.0));
        list.push((Simplex::new([apex, v])?, w));
        interior_of.insert(Simplex::vertex(v), inner);
        interior_of.insert(Simplex::new([apex, v])?, inner);
    }
    for &(a, b, m, link_w) in &base.edges {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        list.push((Simplex::new([a, b])?, m));
        list.push((Simplex::new([apex, a, b])?, link_w));
    }
    let complex = WeightedComplex::from_simplices(false, 1.0, list)?;
    let interior = mark_interior(&complex, |s| interior_of.get(s).copied().unwrap_or(true));
    Ok(Truncation {
        family: Some(family.clone()),
        level,
        complex,
        interior,
        tail_mass: base.tails.into_iter().collect(),
        apex: Some(Simplex::vertex(apex)),
        link_root: Some(base.root),
    })
}

fn mark_interior<F: Fn(&Simplex) -> bool>(complex: &WeightedComplex, f: F) -> Vec<Vec<bool>> {
    (-1..=complex.top_dimension())
        .map(|d| complex.simplices(d).iter().map(&f).collect())
        .collect()
}

fn star(family: &Family, n: usize) -> Result<Truncation> {
    let apex = 0;
    let centre = 1;
    let tail = 0.5f64.powi(n as i32);
    let mut list = vec![
        (Simplex::vertex(apex), 1.0),
        (Simplex::vertex(centre), 1.0),
        (Simplex::new([apex, centre])?, 1.0),
    ];
    for k in 1..=n {
        let leaf = k as VertexId + 1;
        let w = 0.5f64.powi(k as i32);
        list.push((Simplex::vertex(leaf), 1.0));
        list.push((Simplex::new([apex, leaf])?, w));
        list.push((Simplex::new([centre, leaf])?, w));
        list.push((Simplex::new([apex, centre, leaf])?, w));
    }
    let complex = WeightedComplex::from_simplices(false, 1.0, list)?;
    let non_interior = [
        Simplex::vertex(apex),
        Simplex::vertex(centre),
        Simplex::new([apex, centre])?,
    ];
    let interior = mark_interior(&complex, |s| !non_interior.contains(s));
    let tail_mass = non_interior.iter().map(|s| (s.clone(), tail)).collect();
    Ok(Truncation {
        family: Some(family.clone()),
        level: n,
        complex,
        interior,
        tail_mass,
        apex: Some(Simplex::vertex(apex)),
        link_root: Some(centre),
    })
}

fn skeleton_lattice(
    family: &Family,
    dim: usize,
    n: usize,
    include_empty: bool,
) -> Result<Truncation> {
    let pts = box_points(dim, n);
    let ni = n as i64;
    let mut list = Vec::new();
    let mut boundary = std::collections::BTreeSet::new();
    for p in &pts {
        let l1: i64 = p.iter().map(|c| c.abs()).sum();
        let v = lattice_id(p);
        list.push((Simplex::vertex(v), 0.5f64.powi(l1 as i32)));
        if p.iter().any(|c| c.abs() == ni) {
            boundary.insert(Simplex::vertex(v));
        }
        for axis in 0..dim {
            if p[axis] < ni {
                let mut q = p.clone();
                q[axis] += 1;
                list.push((Simplex::from_unsorted([v, lattice_id(&q)])?, 1.0));
            }
        }
    }
    let complex = WeightedComplex::from_simplices(include_empty, 1.0, list)?;
    let interior = mark_interior(&complex, |s| !s.is_empty() && !boundary.contains(s));
    Ok(Truncation {
        family: Some(family.clone()),
        level: n,
        complex,
        interior,
        tail_mass: BTreeMap::new(),
        apex: include_empty.then(Simplex::empty),
        link_root: Some(lattice_id(&vec![0; dim])),
    })
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::FullSimplex { k } => write!(f, "full_simplex:{k}"),
            Family::Octahedron => write!(f, "octahedron"),
            Family::TorusGrid { p, q } => write!(f, "torus_grid:{p}x{q}"),
            Family::ConeOverPath => write!(f, "cone_over_path"),
            Family::ConeOverTree { branching } => write!(f, "cone_over_tree:{branching}"),
            Family::ConeOverLattice { dim } => write!(f, "cone_over_lattice:{dim}"),
            Family::SkeletonLattice { dim, include_empty } => {
                write!(f, "skeleton_lattice:{dim}")?;
                if *include_empty {
                    write!(f, ":empty")?;
                }
                Ok(())
            }
            Family::StarLink => write!(f, "star_link"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    /// `name[:params]`, e.g. `torus_grid:7x7`, `cone_over_tree:2`,
    /// `skeleton_lattice:3:empty`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::InvalidParameter(format!("cannot parse family {s:?}"));
        let num = |i: usize, default: Option<usize>| -> Result<usize> {
            match args.get(i) {
                Some(a) => a.parse().map_err(|_| bad()),
                None => default.ok_or_else(bad),
            }
        };
        let family = match name {
            "full_simplex" => Family::FullSimplex { k: num(0, None)? },
            "octahedron" => Family::Octahedron,
            "torus_grid" => {
                let spec = args.first().ok_or_else(bad)?;
                let (p, q) = spec.split_once('x').ok_or_else(bad)?;
                Family::TorusGrid {
                    p: p.parse().map_err(|_| bad())?,
                    q: q.parse().map_err(|_| bad())?,
                }
            }
            "cone_over_path" => Family::ConeOverPath,
            "cone_over_tree" => Family::ConeOverTree {
                branching: num(0, Some(2))?,
            },
            "cone_over_lattice" => Family::ConeOverLattice {
                dim: num(0, Some(3))?,
            },
            "skeleton_lattice" => Family::SkeletonLattice {
                dim: num(0, Some(3))?,
                include_empty: args.get(1).is_some_and(|a| *a == "empty"),
            },
            "star_link" => Family::StarLink,
            _ => return Err(bad()),
        };
        family.validate()?;
        Ok(family)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_simplex_counts() {
        let t = Family::FullSimplex { k: 3 }.generate(0).unwrap();
        assert_eq!(t.complex.len(), 15);
        assert_eq!(t.interior_count(), 15);
    }

    #[test]
    fn octahedron_and_torus_counts() {
        let t = Family::Octahedron.generate(0).unwrap();
        assert_eq!(
            (t.complex.count(0), t.complex.count(1), t.complex.count(2)),
            (6, 12, 8)
        );
        for e in t.complex.simplices(1) {
            assert_eq!(t.complex.cofaces(e).unwrap().len(), 2);
        }
        let t = Family::TorusGrid { p: 7, q: 7 }.generate(0).unwrap();
        assert_eq!(
            (t.complex.count(0), t.complex.count(1), t.complex.count(2)),
            (49, 147, 98)
        );
        assert!(Family::TorusGrid { p: 2, q: 5 }.generate(0).is_err());
    }

    #[test]
    fn cone_over_tree_structure() {
        let t = Family::ConeOverTree { branching: 2 }.generate(3).unwrap();
        // 15 tree vertices + apex
        assert_eq!(t.complex.count(0), 16);
        assert_eq!(t.complex.count(2), 14);
        let apex = t.apex().unwrap().clone();
        assert!(!t.is_interior(&apex));
        let root_edge = Simplex::new([0, 1]).unwrap();
        assert!(t.is_interior(&root_edge));
        assert!(!t.is_interior(&Simplex::new([0, 8]).unwrap()));
        assert_eq!(t.complex.weight(&Simplex::new([0, 2]).unwrap()), Some(0.25));
        assert_eq!(t.link_root(), Some(1));
    }

    #[test]
    fn truncations_are_nested_with_equal_weights() {
        for fam in [
            Family::ConeOverPath,
            Family::ConeOverTree { branching: 3 },
            Family::ConeOverLattice { dim: 2 },
            Family::SkeletonLattice {
                dim: 2,
                include_empty: true,
            },
            Family::StarLink,
        ] {
            for n in 1..4 {
                let a = fam.generate(n).unwrap();
                let b = fam.generate(n + 1).unwrap();
                for (s, w) in a.complex.iter() {
                    assert_eq!(b.complex.weight(s), Some(w), "{fam} level {n}: {s}");
                    if a.is_interior(s) {
                        assert!(b.is_interior(s));
                        assert_eq!(
                            a.complex.coface_mass(s).unwrap(),
                            b.complex.coface_mass(s).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lattice_root_is_origin() {
        let t = Family::ConeOverLattice { dim: 3 }.generate(2).unwrap();
        assert_eq!(t.link_root(), Some(1));
        assert_eq!(t.complex.count(0), 1 + 125);
        let s = Family::SkeletonLattice {
            dim: 3,
            include_empty: true,
        }
        .generate(2)
        .unwrap();
        assert_eq!(s.apex(), Some(&Simplex::empty()));
        assert!(s.complex.include_empty());
        assert_eq!(s.complex.weight(&Simplex::vertex(0)), Some(1.0));
    }

    #[test]
    fn star_tail_mass() {
        let t = Family::StarLink.generate(4).unwrap();
        let ac = Simplex::new([0, 1]).unwrap();
        assert_eq!(t.tail_mass(&ac), Some(1.0 / 16.0));
        assert_eq!(t.tail_mass(&Simplex::new([0, 2]).unwrap()), Some(0.0));
    }

    #[test]
    fn family_strings_round_trip() {
        for s in [
            "full_simplex:4",
            "octahedron",
            "torus_grid:7x9",
            "cone_over_path",
            "cone_over_tree:2",
            "cone_over_lattice:3",
            "skeleton_lattice:3:empty",
            "star_link",
        ] {
            let f: Family = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("torus_grid:2x9".parse::<Family>().is_err());
        assert!("nonsense".parse::<Family>().is_err());
    }

    #[test]
    fn with_empty_only_for_summable_families() {
        let t = Family::Octahedron
            .generate(0)
            .unwrap()
            .with_empty(1.0)
            .unwrap();
        assert!(t.complex.include_empty());
        assert!(t.is_interior(&Simplex::empty()));
        assert!(Family::ConeOverPath
            .generate(2)
            .unwrap()
            .with_empty(1.0)
            .is_err());
    }
}
