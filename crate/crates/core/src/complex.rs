//! Weighted simplicial complexes.
//!
//! A [`Simplex`] is a strictly increasing list of vertex ids; the empty list is
//! the empty simplex ∅ of dimension −1. A [`WeightedComplex`] is a finite,
//! face-closed set of simplices with a positive weight on each one. The complex
//! is immutable once built; mutation goes through [`ComplexBuilder`].
//!
//! Orientation follows the global order of vertex ids: removing the vertex at
//! position `i` of σ gives a face τ with `sign(τ, σ) = (−1)^i`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type VertexId = u64;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<VertexId>", into = "Vec<VertexId>")]
pub struct Simplex(SmallVec<[VertexId; 4]>);

impl Simplex {
    /// Builds a simplex from a strictly increasing vertex list.
    pub fn new<I: IntoIterator<Item = VertexId>>(vertices: I) -> Result<Self> {
        let v: SmallVec<[VertexId; 4]> = vertices.into_iter().collect();
        if v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedVertices(v.to_vec()));
        }
        Ok(Simplex(v))
    }

    /// Sorts the vertices first; duplicates are still rejected.
    pub fn from_unsorted<I: IntoIterator<Item = VertexId>>(vertices: I) -> Result<Self> {
        let mut v: SmallVec<[VertexId; 4]> = vertices.into_iter().collect();
        v.sort_unstable();
        Simplex::new(v)
    }

    pub fn empty() -> Self {
        Simplex(SmallVec::new())
    }

    pub fn vertex(v: VertexId) -> Self {
        let mut s = SmallVec::new();
        s.push(v);
        Simplex(s)
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> isize {
        self.0.len() as isize - 1
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    /// The face obtained by dropping the vertex at position `i`.
    pub fn without_index(&self, i: usize) -> Simplex {
        let mut v = self.0.clone();
        v.remove(i);
        Simplex(v)
    }

    /// All codimension-1 faces, in the order of the removed position.
    /// The only face of a vertex is ∅; ∅ has none.
    pub fn faces(&self) -> impl Iterator<Item = Simplex> + '_ {
        (0..self.0.len()).map(move |i| self.without_index(i))
    }

    /// `self ∪ {v}`, or `None` if `v` is already a vertex.
    pub fn with_vertex(&self, v: VertexId) -> Option<Simplex> {
        match self.0.binary_search(&v) {
            Ok(_) => None,
            Err(pos) => {
                let mut out = self.0.clone();
                out.insert(pos, v);
                Some(Simplex(out))
            }
        }
    }

    pub fn is_subset_of(&self, other: &Simplex) -> bool {
        let mut it = other.0.iter();
        self.0.iter().all(|v| it.any(|w| w == v))
    }

    /// Position in `sigma` and id of the vertex `sigma ∖ self`, if `self ≺ sigma`.
    pub fn missing_vertex(&self, sigma: &Simplex) -> Option<(usize, VertexId)> {
        if sigma.len() != self.len() + 1 {
            return None;
        }
        let i = self
            .0
            .iter()
            .zip(sigma.0.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(self.len());
        if self.0[i..] == sigma.0[i + 1..] {
            Some((i, sigma.0[i]))
        } else {
            None
        }
    }

    pub fn is_face_of(&self, sigma: &Simplex) -> bool {
        self.missing_vertex(sigma).is_some()
    }

    pub fn union(&self, other: &Simplex) -> Simplex {
        let mut v: SmallVec<[VertexId; 4]> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        Simplex(v)
    }

    /// Vertices of `self` that are not in `other`.
    pub fn difference(&self, other: &Simplex) -> Vec<VertexId> {
        self.0
            .iter()
            .copied()
            .filter(|v| !other.contains_vertex(*v))
            .collect()
    }
}

impl TryFrom<Vec<VertexId>> for Simplex {
    type Error = Error;

    fn try_from(v: Vec<VertexId>) -> Result<Self> {
        Simplex::new(v)
    }
}

impl From<Simplex> for Vec<VertexId> {
    fn from(s: Simplex) -> Self {
        s.0.to_vec()
    }
}

impl fmt::Display for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

impl std::str::FromStr for Simplex {
    type Err = Error;

    /// `{0,1,2}`, `0,1,2`, or `∅` / `empty` / `{}` for the empty simplex.
    /// Vertices may come in any order.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t
            .strip_prefix('{')
            .and_then(|x| x.strip_suffix('}'))
            .unwrap_or(t)
            .trim();
        if t.is_empty() || t == "∅" || t == "empty" {
            return Ok(Simplex::empty());
        }
        let vs = t
            .split(',')
            .map(|x| x.trim().parse::<VertexId>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidParameter(format!("cannot parse simplex {s:?}: {e}")))?;
        Simplex::from_unsorted(vs)
    }
}

impl fmt::Debug for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[inline]
pub(crate) fn parity_sign(position: usize) -> i8 {
    if position.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// θ(τ, σ) for τ ≺ σ: `(−1)^i` with `i` the position of `σ ∖ τ` in σ.
pub fn sign(tau: &Simplex, sigma: &Simplex) -> Result<i8> {
    tau.missing_vertex(sigma)
        .map(|(i, _)| parity_sign(i))
        .ok_or_else(|| Error::NotAFace {
            face: tau.clone(),
            coface: sigma.clone(),
        })
}

#[derive(Clone, Debug, Default)]
struct DegreeStore {
    simplices: Vec<Simplex>,
    weights: Vec<f64>,
    coface_offsets: Vec<usize>,
    cofaces: Vec<u32>,
}

/// A finite weighted simplicial complex, stored per degree in sorted order.
#[derive(Clone, Debug)]
pub struct WeightedComplex {
    include_empty: bool,
    empty_weight: f64,
    // store[d + 1] holds the d-simplices; store[0] holds ∅ when included.
    store: Vec<DegreeStore>,
}

impl WeightedComplex {
    pub fn builder() -> ComplexBuilder {
        ComplexBuilder::new()
    }

    /// Builds a complex from an explicit list. The list must already be closed
    /// under faces (∅ excepted, which is added when `include_empty`).
    pub fn from_simplices<I>(include_empty: bool, empty_weight: f64, simplices: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Simplex, f64)>,
    {
        let mut by_dim: Vec<Vec<(Simplex, f64)>> = Vec::new();
        for (s, w) in simplices {
            if s.is_empty() {
                return Err(Error::InvalidParameter(
                    "∅ is controlled by the include_empty flag".into(),
                ));
            }
            let d = s.len() - 1;
            if by_dim.len() <= d {
                by_dim.resize_with(d + 1, Vec::new);
            }
            by_dim[d].push((s, w));
        }
        let mut store = Vec::with_capacity(by_dim.len() + 1);
        store.push(DegreeStore::default());
        if include_empty {
            check_weight(&Simplex::empty(), empty_weight)?;
            store[0].simplices.push(Simplex::empty());
            store[0].weights.push(empty_weight);
        }
        for mut list in by_dim {
            list.sort_by(|a, b| a.0.cmp(&b.0));
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DuplicateSimplex(w[0].0.clone()));
            }
            let mut ds = DegreeStore::default();
            for (s, w) in list {
                check_weight(&s, w)?;
                ds.simplices.push(s);
                ds.weights.push(w);
            }
            store.push(ds);
        }
        let mut complex = WeightedComplex {
            include_empty,
            empty_weight,
            store,
        };
        complex.check_face_closed()?;
        complex.index_cofaces();
        Ok(complex)
    }

    fn index_cofaces(&mut self) {
        let n_store = self.store.len();
        for s in 0..n_store {
            let n = self.store[s].simplices.len();
            let mut counts = vec![0usize; n + 1];
            let mut pairs: Vec<(usize, u32)> = Vec::new();
            if s + 1 < n_store {
                let upper = &self.store[s + 1];
                for (j, sigma) in upper.simplices.iter().enumerate() {
                    for face in sigma.faces() {
                        if let Ok(i) = self.store[s].simplices.binary_search(&face) {
                            counts[i + 1] += 1;
                            pairs.push((i, j as u32));
                        }
                    }
                }
            }
            for i in 0..n {
                counts[i + 1] += counts[i];
            }
            let mut fill = counts.clone();
            let mut cofaces = vec![0u32; pairs.len()];
            // pairs arrive ordered by coface index, so each list ends up sorted
            for (i, j) in pairs {
                cofaces[fill[i]] = j;
                fill[i] += 1;
            }
            self.store[s].coface_offsets = counts;
            self.store[s].cofaces = cofaces;
        }
    }

    /// Full scan for face-closure and positive weights.
    pub fn check_face_closed(&self) -> Result<()> {
        for (s, ds) in self.store.iter().enumerate().skip(1) {
            for (sigma, &w) in ds.simplices.iter().zip(&ds.weights) {
                check_weight(sigma, w)?;
                for face in sigma.faces() {
                    if face.is_empty() && !self.include_empty {
                        continue;
                    }
                    if self.store[s - 1].simplices.binary_search(&face).is_err() {
                        return Err(Error::NotFaceClosed {
                            simplex: sigma.clone(),
                            face,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn include_empty(&self) -> bool {
        self.include_empty
    }

    pub fn empty_weight(&self) -> f64 {
        self.empty_weight
    }

    /// Highest dimension present (−1 for a complex with no vertices).
    pub fn top_dimension(&self) -> isize {
        (self.store.len() as isize) - 2
    }

    /// Lowest degree carrying simplices: −1 with ∅, else 0.
    pub fn min_degree(&self) -> isize {
        if self.include_empty {
            -1
        } else {
            0
        }
    }

    fn slot(&self, degree: isize) -> Option<&DegreeStore> {
        if degree < -1 {
            return None;
        }
        self.store.get((degree + 1) as usize)
    }

    pub fn simplices(&self, degree: isize) -> &[Simplex] {
        self.slot(degree)
            .map(|d| d.simplices.as_slice())
            .unwrap_or(&[])
    }

    pub fn weights(&self, degree: isize) -> &[f64] {
        self.slot(degree)
            .map(|d| d.weights.as_slice())
            .unwrap_or(&[])
    }

    pub fn count(&self, degree: isize) -> usize {
        self.simplices(degree).len()
    }

    pub fn len(&self) -> usize {
        self.store.iter().map(|d| d.simplices.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, s: &Simplex) -> Option<usize> {
        self.slot(s.dim())?.simplices.binary_search(s).ok()
    }

    pub fn contains(&self, s: &Simplex) -> bool {
        self.index_of(s).is_some()
    }

    pub fn weight(&self, s: &Simplex) -> Option<f64> {
        let i = self.index_of(s)?;
        Some(self.weights(s.dim())[i])
    }

    pub(crate) fn require_weight(&self, s: &Simplex) -> Result<f64> {
        self.weight(s)
            .ok_or_else(|| Error::UnknownSimplex(s.clone()))
    }

    /// Indices (into degree `degree + 1`) of the cofaces of simplex `index`.
    pub fn coface_indices(&self, degree: isize, index: usize) -> &[u32] {
        match self.slot(degree) {
            Some(ds) if index < ds.simplices.len() => {
                &ds.cofaces[ds.coface_offsets[index]..ds.coface_offsets[index + 1]]
            }
            _ => &[],
        }
    }

    pub fn cofaces(&self, tau: &Simplex) -> Result<Vec<(Simplex, f64)>> {
        let i = self
            .index_of(tau)
            .ok_or_else(|| Error::UnknownSimplex(tau.clone()))?;
        let d = tau.dim();
        let upper = self.simplices(d + 1);
        let w = self.weights(d + 1);
        Ok(self
            .coface_indices(d, i)
            .iter()
            .map(|&j| (upper[j as usize].clone(), w[j as usize]))
            .collect())
    }

    /// `Σ_{σ ≻ τ} m(σ)`.
    pub fn coface_mass(&self, tau: &Simplex) -> Result<f64> {
        let i = self
            .index_of(tau)
            .ok_or_else(|| Error::UnknownSimplex(tau.clone()))?;
        let w = self.weights(tau.dim() + 1);
        Ok(self
            .coface_indices(tau.dim(), i)
            .iter()
            .map(|&j| w[j as usize])
            .sum())
    }

    /// Faces of σ that belong to the complex (∅ only when included).
    pub fn faces(&self, sigma: &Simplex) -> Vec<Simplex> {
        sigma.faces().filter(|f| self.contains(f)).collect()
    }

    /// `(face index, θ(face, σ))` for every face of the simplex `index` in `degree`.
    pub fn face_indices(&self, degree: isize, index: usize) -> SmallVec<[(usize, i8); 5]> {
        let sigma = &self.simplices(degree)[index];
        let lower = self.simplices(degree - 1);
        let mut out = SmallVec::new();
        for pos in 0..sigma.len() {
            let face = sigma.without_index(pos);
            if let Ok(i) = lower.binary_search(&face) {
                out.push((i, parity_sign(pos)));
            }
        }
        out
    }

    /// All simplices in degree order, then sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&Simplex, f64)> + '_ {
        self.store
            .iter()
            .flat_map(|d| d.simplices.iter().zip(d.weights.iter().copied()))
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.simplices(0).iter().map(|s| s.vertices()[0])
    }

    /// Same simplices, reweighted by `f(σ, m(σ))`.
    pub fn map_weights<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&Simplex, f64) -> f64,
    {
        let mut out = self.clone();
        for ds in out.store.iter_mut() {
            for (s, w) in ds.simplices.iter().zip(ds.weights.iter_mut()) {
                *w = f(s, *w);
                check_weight(s, *w)?;
            }
        }
        if out.include_empty {
            out.empty_weight = out.store[0].weights[0];
        }
        Ok(out)
    }
}

fn check_weight(s: &Simplex, w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveWeight {
            simplex: s.clone(),
            weight: w,
        })
    }
}

/// Single-writer builder; every insertion keeps the complex face-closed.
#[derive(Clone, Debug)]
pub struct ComplexBuilder {
    include_empty: bool,
    empty_weight: f64,
    by_dim: Vec<BTreeMap<Simplex, f64>>,
}

impl Default for ComplexBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ComplexBuilder {
    pub fn new() -> Self {
        ComplexBuilder {
            include_empty: false,
            empty_weight: 1.0,
            by_dim: Vec::new(),
        }
    }

    pub fn include_empty(mut self, include: bool) -> Self {
        self.include_empty = include;
        self
    }

    pub fn empty_weight(mut self, w: f64) -> Self {
        self.empty_weight = w;
        self
    }

    pub fn contains(&self, s: &Simplex) -> bool {
        if s.is_empty() {
            return self.include_empty;
        }
        self.by_dim
            .get(s.len() - 1)
            .is_some_and(|m| m.contains_key(s))
    }

    /// Inserts σ and every missing face, weighting new simplices with `rule`.
    /// Weights already present are left untouched.
    pub fn insert_closed<F>(&mut self, sigma: &Simplex, rule: F) -> Result<()>
    where
        F: Fn(&Simplex) -> f64,
    {
        if sigma.is_empty() {
            return Ok(());
        }
        // collect first so a bad weight leaves the builder unchanged
        let mut pending: Vec<(Simplex, f64)> = Vec::new();
        let mut stack = vec![sigma.clone()];
        let mut seen = std::collections::BTreeSet::new();
        while let Some(s) = stack.pop() {
            if s.is_empty() || self.contains(&s) || !seen.insert(s.clone()) {
                continue;
            }
            let w = rule(&s);
            check_weight(&s, w)?;
            stack.extend(s.faces());
            pending.push((s, w));
        }
        for (s, w) in pending {
            let d = s.len() - 1;
            if self.by_dim.len() <= d {
                self.by_dim.resize_with(d + 1, BTreeMap::new);
            }
            self.by_dim[d].insert(s, w);
        }
        Ok(())
    }

    pub fn build(self) -> Result<WeightedComplex> {
        WeightedComplex::from_simplices(
            self.include_empty,
            self.empty_weight,
            self.by_dim.into_iter().flat_map(|m| m.into_iter()),
        )
    }
}

/// Weight rule giving every simplex weight 1.
pub fn unit_weight(_: &Simplex) -> f64 {
    1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[u64]) -> Simplex {
        Simplex::new(v.iter().copied()).unwrap()
    }

    fn full_triangle() -> WeightedComplex {
        let mut b = ComplexBuilder::new();
        b.insert_closed(&s(&[1, 2, 3]), unit_weight).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn sign_examples() {
        assert_eq!(sign(&s(&[1, 3]), &s(&[1, 2, 3])).unwrap(), -1);
        assert_eq!(sign(&Simplex::empty(), &s(&[7])).unwrap(), 1);
        assert!(matches!(
            sign(&s(&[1]), &s(&[1, 2, 3])),
            Err(Error::NotAFace { .. })
        ));
        assert!(sign(&s(&[4, 5]), &s(&[1, 2, 3])).is_err());
    }

    #[test]
    fn faces_in_removal_order() {
        let f: Vec<_> = s(&[1, 2, 3]).faces().collect();
        assert_eq!(f, vec![s(&[2, 3]), s(&[1, 3]), s(&[1, 2])]);
        assert_eq!(Simplex::empty().faces().count(), 0);
    }

    #[test]
    fn vertex_face_is_empty_only_when_included() {
        let mut b = ComplexBuilder::new().include_empty(true);
        b.insert_closed(&s(&[5]), unit_weight).unwrap();
        let c = b.build().unwrap();
        assert_eq!(c.faces(&s(&[5])), vec![Simplex::empty()]);

        let mut b = ComplexBuilder::new();
        b.insert_closed(&s(&[5]), unit_weight).unwrap();
        let c = b.build().unwrap();
        assert!(c.faces(&s(&[5])).is_empty());
    }

    #[test]
    fn unsorted_and_duplicate_vertices_rejected() {
        assert!(Simplex::new([2, 1]).is_err());
        assert!(Simplex::new([1, 1]).is_err());
        assert!(Simplex::from_unsorted([3, 1, 2]).is_ok());
        assert!(serde_json::from_str::<Simplex>("[3,1]").is_err());
    }

    #[test]
    fn insert_closed_counts_and_idempotence() {
        let c = full_triangle();
        assert_eq!(c.len(), 7);

        let mut b = ComplexBuilder::new().include_empty(true);
        b.insert_closed(&s(&[1, 2, 3]), unit_weight).unwrap();
        b.insert_closed(&s(&[1, 2]), |_| 5.0).unwrap();
        let c = b.build().unwrap();
        assert_eq!(c.len(), 8);
        assert_eq!(c.weight(&s(&[1, 2])), Some(1.0));
    }

    #[test]
    fn insert_closed_with_dimension_rule() {
        let mut b = ComplexBuilder::new();
        b.insert_closed(&s(&[1, 2, 3]), |x| 2f64.powi(-(x.dim() as i32)))
            .unwrap();
        let c = b.build().unwrap();
        assert_eq!(c.weight(&s(&[2])), Some(1.0));
        assert_eq!(c.weight(&s(&[1, 3])), Some(0.5));
        assert_eq!(c.weight(&s(&[1, 2, 3])), Some(0.25));
    }

    #[test]
    fn non_positive_weight_rejected() {
        let mut b = ComplexBuilder::new();
        let err = b.insert_closed(&s(&[1, 2]), |x| if x.dim() == 0 { 1.0 } else { 0.0 });
        assert!(matches!(err, Err(Error::NonPositiveWeight { .. })));
        assert!(!b.contains(&s(&[1])));
    }

    #[test]
    fn cofaces_and_mass() {
        let c = full_triangle();
        let cf: Vec<_> = c
            .cofaces(&s(&[1]))
            .unwrap()
            .into_iter()
            .map(|x| x.0)
            .collect();
        assert_eq!(cf, vec![s(&[1, 2]), s(&[1, 3])]);
        assert!(matches!(c.cofaces(&s(&[9])), Err(Error::UnknownSimplex(_))));

        let mut b = ComplexBuilder::new().include_empty(true);
        b.insert_closed(&s(&[1, 2, 3]), unit_weight).unwrap();
        let c = b.build().unwrap();
        assert_eq!(c.coface_mass(&Simplex::empty()).unwrap(), 3.0);
    }

    #[test]
    fn from_simplices_rejects_open_lists() {
        let r =
            WeightedComplex::from_simplices(false, 1.0, vec![(s(&[1, 2]), 1.0), (s(&[1]), 1.0)]);
        assert!(matches!(r, Err(Error::NotFaceClosed { .. })));
        let r = WeightedComplex::from_simplices(false, 1.0, vec![(s(&[1]), 1.0), (s(&[1]), 2.0)]);
        assert!(matches!(r, Err(Error::DuplicateSimplex(_))));
    }

    /// δδ1_ρ(σ) = 0 written out as the two-path sign rule.
    #[test]
    fn two_path_sign_rule_on_tetrahedron() {
        let mut b = ComplexBuilder::new().include_empty(true);
        b.insert_closed(&s(&[0, 1, 2, 3]), unit_weight).unwrap();
        let c = b.build().unwrap();
        for d in -1..=1 {
            for rho in c.simplices(d) {
                for sigma in c.simplices(d + 2) {
                    if !rho.is_subset_of(sigma) {
                        continue;
                    }
                    let mids: Vec<_> = sigma.faces().filter(|t| rho.is_face_of(t)).collect();
                    assert_eq!(mids.len(), 2);
                    let total: i8 = mids
                        .iter()
                        .map(|t| sign(rho, t).unwrap() * sign(t, sigma).unwrap())
                        .sum();
                    assert_eq!(total, 0, "{rho} < {sigma}");
                }
            }
        }
    }
}
