//! Rooted-tree combinatorics: vertex addresses, arcs, rays, cylinders and the
//! confluence operation.
//!
//! Vertices are addressed by their arc from the origin as a sequence of child
//! indices, so `""` (displayed `o`) is the origin and `0.1` is the second
//! child of the origin's first child. Addresses make arcs, boundary cylinders
//! and ray prefixes canonical. A model may carry a homogeneous tail: every
//! frontier leaf continues into an infinite `q`-ary tree with constant
//! potential, and vertices inside the tail are addressed by extending the
//! frontier address (child indices `0..q`). Tail vertices are never stored;
//! operations unfold them on demand.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Address of a vertex: child indices along the arc from the origin.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(Vec<u32>);

impl VertexId {
    pub fn origin() -> Self {
        VertexId(Vec::new())
    }

    pub fn from_path(path: impl Into<Vec<u32>>) -> Self {
        VertexId(path.into())
    }

    pub fn is_origin(&self) -> bool {
        self.0.is_empty()
    }

    /// Distance from the origin.
    pub fn depth(&self) -> u32 {
        self.0.len() as u32
    }

    pub fn child(&self, index: u32) -> Self {
        let mut path = self.0.clone();
        path.push(index);
        VertexId(path)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.is_origin() {
            None
        } else {
            Some(VertexId(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    /// Truncate to the first `n` steps from the origin.
    pub fn ancestor_at(&self, n: u32) -> Option<Self> {
        if n > self.depth() {
            None
        } else {
            Some(VertexId(self.0[..n as usize].to_vec()))
        }
    }

    pub fn is_prefix_of(&self, other: &VertexId) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// Parse an origin-relative address: `o` (or the empty string) is the
    /// origin, otherwise dot-separated child indices such as `0.1.0`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "o" {
            return Ok(VertexId::origin());
        }
        let mut path = Vec::new();
        for part in s.split('.') {
            let idx: u32 = part
                .parse()
                .map_err(|_| Error::Parse(format!("bad vertex address '{s}'")))?;
            path.push(idx);
        }
        Ok(VertexId(path))
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_origin() {
            return write!(f, "o");
        }
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Directed edge `(from | to)`: the tree with the branch from `from` through
/// `to` removed keeps `from`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DirectedEdge {
    pub from: VertexId,
    pub to: VertexId,
}

impl DirectedEdge {
    pub fn new(from: VertexId, to: VertexId) -> Self {
        DirectedEdge { from, to }
    }

    pub fn reversed(&self) -> Self {
        DirectedEdge {
            from: self.to.clone(),
            to: self.from.clone(),
        }
    }
}

/// A boundary point: a finite prefix plus the deterministic "first forward
/// child" extension. Two prefixes describe the same ray when one extends the
/// other along that rule, so the canonical prefix has its trailing zero steps
/// stripped.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RayAddress {
    prefix: VertexId,
}

impl RayAddress {
    /// Canonicalize and validate: the first-child extension from the prefix
    /// must continue forever (it must reach the homogeneous tail).
    pub fn new(model: &TreeModel, prefix: VertexId) -> Result<Self> {
        let mut path = prefix.indices().to_vec();
        while let Some(&last) = path.last() {
            if last == 0 {
                path.pop();
            } else {
                break;
            }
        }
        let ray = RayAddress {
            prefix: VertexId(path),
        };
        model.resolve(&ray.prefix)?;
        // Walk first children from the prefix until the tail absorbs the ray.
        let mut at = ray.prefix.clone();
        loop {
            match model.resolve(&at)? {
                Locus::Tail { .. } => break,
                Locus::Core(i) => {
                    if model.vertices[i].is_frontier {
                        break;
                    }
                    if model.vertices[i].children.is_empty() {
                        return Err(Error::RayExtension(format!(
                            "first-child extension dies at leaf {at}"
                        )));
                    }
                    at = at.child(0);
                }
            }
        }
        Ok(ray)
    }

    pub fn prefix(&self) -> &VertexId {
        &self.prefix
    }

    /// The vertex the ray passes at distance `n` from the origin.
    pub fn vertex_at_depth(&self, n: u32) -> VertexId {
        if n <= self.prefix.depth() {
            self.prefix.ancestor_at(n).unwrap()
        } else {
            let mut path = self.prefix.indices().to_vec();
            path.resize(n as usize, 0);
            VertexId(path)
        }
    }

    /// Whether the ray lies in the boundary cylinder below `v`.
    pub fn passes_through(&self, v: &VertexId) -> bool {
        *v == self.vertex_at_depth(v.depth())
    }

    /// Confluence `v ∧ ξ`: the deepest vertex shared by `[o,v]` and `[o,ξ]`.
    pub fn confluence_with(&self, v: &VertexId) -> VertexId {
        let ray_path = self.vertex_at_depth(v.depth());
        let mut n = 0;
        while n < v.indices().len() && v.indices()[n] == ray_path.indices()[n] {
            n += 1;
        }
        VertexId(v.indices()[..n].to_vec())
    }
}

impl fmt::Display for RayAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, 0, 0, ...]", self.prefix)
    }
}

/// A boundary cylinder: the full boundary or the set of rays through a vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cylinder {
    Full,
    At(VertexId),
}

impl Cylinder {
    pub fn base(&self) -> Option<&VertexId> {
        match self {
            Cylinder::Full => None,
            Cylinder::At(v) => Some(v),
        }
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cylinder::Full => write!(f, "boundary"),
            Cylinder::At(v) => write!(f, "boundary@{v}"),
        }
    }
}

/// Description of the infinite homogeneous continuation past the frontier:
/// each frontier leaf gains `branching` forward children, every tail vertex
/// again has `branching` forward children, constant potential and edge weight.
#[derive(Clone, Debug)]
pub struct HomogeneousTail {
    pub frontier: Vec<VertexId>,
    pub branching: u32,
    pub potential: f64,
    pub weight: f64,
}

impl HomogeneousTail {
    /// The open energy band `(V0 - 2√q·|w|, V0 + 2√q·|w|)` inside which
    /// boundary values `E + i0` exist in closed form.
    pub fn band(&self) -> (f64, f64) {
        let half = 2.0 * (self.branching as f64).sqrt() * self.weight.abs();
        (self.potential - half, self.potential + half)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct CoreVertex {
    pub addr: VertexId,
    pub doc_id: String,
    pub potential: f64,
    pub diagonal: f64,
    /// Core index of the parent and the weight of the connecting edge.
    pub parent: Option<(usize, f64)>,
    /// Core indices of stored children with edge weights, in canonical order.
    pub children: Vec<(usize, f64)>,
    pub is_frontier: bool,
}

/// Where an address lands in a model.
#[derive(Clone, Debug)]
pub(crate) enum Locus {
    Core(usize),
    /// Inside the tail below frontier core vertex `frontier`; `steps ≥ 1` is
    /// the distance beyond it.
    Tail { frontier: usize, steps: u32 },
}

/// A Schrödinger operator `H` on a rooted tree: finite stored core, optional
/// homogeneous tail, per-vertex potential/diagonal and per-edge weights.
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct TreeModel {
    pub(crate) degree_bound: usize,
    pub(crate) vertices: Vec<CoreVertex>,
    pub(crate) index: HashMap<VertexId, usize>,
    pub(crate) tail: Option<HomogeneousTail>,
}

impl TreeModel {
    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn tail(&self) -> Option<&HomogeneousTail> {
        self.tail.as_ref()
    }

    pub fn origin(&self) -> VertexId {
        VertexId::origin()
    }

    /// Number of stored (core) vertices.
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// All stored vertex addresses in canonical (construction) order.
    pub fn core_vertices(&self) -> impl Iterator<Item = &VertexId> {
        self.vertices.iter().map(|v| &v.addr)
    }

    pub fn max_core_depth(&self) -> u32 {
        self.vertices
            .iter()
            .map(|v| v.addr.depth())
            .max()
            .unwrap_or(0)
    }

    /// Document id of a stored vertex, if any.
    pub fn doc_id(&self, v: &VertexId) -> Option<&str> {
        self.index.get(v).map(|&i| self.vertices[i].doc_id.as_str())
    }

    /// Address of the stored vertex declared under `doc_id` in the model file.
    pub fn address_of_doc_id(&self, doc_id: &str) -> Option<&VertexId> {
        self.vertices
            .iter()
            .find(|v| v.doc_id == doc_id)
            .map(|v| &v.addr)
    }

    pub(crate) fn resolve(&self, v: &VertexId) -> Result<Locus> {
        if let Some(&i) = self.index.get(v) {
            return Ok(Locus::Core(i));
        }
        // Not stored: must extend a frontier address with indices < branching.
        let tail = self
            .tail
            .as_ref()
            .ok_or_else(|| Error::UnknownVertex(v.to_string()))?;
        let mut depth = v.depth();
        let mut at = v.clone();
        loop {
            if depth == 0 {
                return Err(Error::UnknownVertex(v.to_string()));
            }
            depth -= 1;
            let step = at.indices()[depth as usize];
            if step >= tail.branching {
                return Err(Error::UnknownVertex(v.to_string()));
            }
            at = at.parent().unwrap();
            if let Some(&i) = self.index.get(&at) {
                if !self.vertices[i].is_frontier {
                    return Err(Error::UnknownVertex(v.to_string()));
                }
                return Ok(Locus::Tail {
                    frontier: i,
                    steps: v.depth() - depth,
                });
            }
        }
    }

    pub fn contains(&self, v: &VertexId) -> bool {
        self.resolve(v).is_ok()
    }

    pub fn is_frontier(&self, v: &VertexId) -> bool {
        matches!(self.resolve(v), Ok(Locus::Core(i)) if self.vertices[i].is_frontier)
    }

    /// Diagonal coefficient `p_v(v)` (equals the potential unless overridden).
    pub fn diagonal(&self, v: &VertexId) -> Result<f64> {
        Ok(match self.resolve(v)? {
            Locus::Core(i) => self.vertices[i].diagonal,
            Locus::Tail { .. } => self.tail.as_ref().unwrap().potential,
        })
    }

    pub fn potential(&self, v: &VertexId) -> Result<f64> {
        Ok(match self.resolve(v)? {
            Locus::Core(i) => self.vertices[i].potential,
            Locus::Tail { .. } => self.tail.as_ref().unwrap().potential,
        })
    }

    /// Neighbors of `v` with edge weights, parent first, then children in
    /// canonical order (stored children before tail children).
    pub fn neighbors(&self, v: &VertexId) -> Result<Vec<(VertexId, f64)>> {
        let mut out = Vec::new();
        if let Some(p) = v.parent() {
            out.push((p, self.edge_weight_unchecked(v)?));
        }
        out.extend(self.forward_neighbors(v)?);
        Ok(out)
    }

    /// Forward neighbors `N_v^+` with edge weights, in child-index order.
    pub fn forward_neighbors(&self, v: &VertexId) -> Result<Vec<(VertexId, f64)>> {
        match self.resolve(v)? {
            Locus::Core(i) => {
                let cv = &self.vertices[i];
                let mut out: Vec<(VertexId, f64)> = cv
                    .children
                    .iter()
                    .map(|&(c, w)| (self.vertices[c].addr.clone(), w))
                    .collect();
                if cv.is_frontier {
                    let tail = self.tail.as_ref().unwrap();
                    let base = cv.children.len() as u32;
                    for k in 0..tail.branching {
                        out.push((v.child(base + k), tail.weight));
                    }
                }
                Ok(out)
            }
            Locus::Tail { .. } => {
                let tail = self.tail.as_ref().unwrap();
                Ok((0..tail.branching)
                    .map(|k| (v.child(k), tail.weight))
                    .collect())
            }
        }
    }

    /// Weight of the edge between `v` and its parent.
    fn edge_weight_unchecked(&self, v: &VertexId) -> Result<f64> {
        match self.resolve(v)? {
            Locus::Core(i) => Ok(self.vertices[i]
                .parent
                .map(|(_, w)| w)
                .expect("non-origin core vertex has a parent")),
            Locus::Tail { .. } => Ok(self.tail.as_ref().unwrap().weight),
        }
    }

    /// Weight of the (undirected) edge `v ~ w`.
    pub fn edge_weight(&self, v: &VertexId, w: &VertexId) -> Result<f64> {
        if w.parent().as_ref() == Some(v) {
            self.edge_weight_unchecked(w)
        } else if v.parent().as_ref() == Some(w) {
            self.edge_weight_unchecked(v)
        } else {
            Err(Error::UnknownVertex(format!("{v} ~ {w} is not an edge")))
        }
    }

    /// The unique non-backtracking path `[v, w]`, endpoints included.
    pub fn arc_between(&self, v: &VertexId, w: &VertexId) -> Result<Vec<VertexId>> {
        self.resolve(v)?;
        self.resolve(w)?;
        let mut n = 0;
        let max = v.indices().len().min(w.indices().len());
        while n < max && v.indices()[n] == w.indices()[n] {
            n += 1;
        }
        let mut arc = Vec::with_capacity(v.indices().len() + w.indices().len() - 2 * n + 1);
        for k in (n..=v.indices().len()).rev() {
            arc.push(VertexId(v.indices()[..k].to_vec()));
        }
        for k in n + 1..=w.indices().len() {
            arc.push(VertexId(w.indices()[..k].to_vec()));
        }
        Ok(arc)
    }

    pub fn distance(&self, v: &VertexId, w: &VertexId) -> Result<u32> {
        Ok(self.arc_between(v, w)?.len() as u32 - 1)
    }

    /// Confluence `v ∧ ξ`.
    pub fn confluence(&self, v: &VertexId, xi: &RayAddress) -> Result<VertexId> {
        self.resolve(v)?;
        Ok(xi.confluence_with(v))
    }

    /// All vertices at distance exactly `depth` from the origin, unfolding the
    /// tail as needed, in canonical order.
    pub fn shell(&self, depth: u32) -> Result<Vec<VertexId>> {
        if depth == 0 {
            return Ok(vec![VertexId::origin()]);
        }
        let mut frontier_shell: Vec<VertexId> = vec![VertexId::origin()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for v in &frontier_shell {
                for (c, _) in self.forward_neighbors(v)? {
                    next.push(c);
                }
            }
            frontier_shell = next;
            if frontier_shell.is_empty() {
                break;
            }
        }
        Ok(frontier_shell)
    }

    /// The cylinders `{∂T_s : |s| = depth}`, which partition the boundary.
    pub fn cylinder_partition(&self, depth: u32) -> Result<Vec<Cylinder>> {
        if depth == 0 {
            return Err(Error::DepthRange {
                depth,
                reason: "cylinder partitions start at depth 1".into(),
            });
        }
        let shell = self.shell(depth)?;
        if shell.is_empty() {
            return Err(Error::DepthRange {
                depth,
                reason: "no vertices at this depth".into(),
            });
        }
        Ok(shell.into_iter().map(Cylinder::At).collect())
    }

    /// All vertices with depth ≤ `radius` (the ball around the origin),
    /// unfolding the tail.
    pub fn ball(&self, radius: u32) -> Result<Vec<VertexId>> {
        let mut out = Vec::new();
        for d in 0..=radius {
            let shell = self.shell(d)?;
            if shell.is_empty() {
                break;
            }
            out.extend(shell);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{three_regular_doc, two_path_doc};

    fn vid(s: &str) -> VertexId {
        VertexId::parse(s).unwrap()
    }

    #[test]
    fn address_parse_roundtrip() {
        assert_eq!(vid("o"), VertexId::origin());
        assert_eq!(vid(""), VertexId::origin());
        assert_eq!(vid("0.1.0").indices(), &[0, 1, 0]);
        assert_eq!(vid("0.1.0").to_string(), "0.1.0");
        assert_eq!(VertexId::origin().to_string(), "o");
        assert!(VertexId::parse("0.x").is_err());
        assert!(VertexId::parse("-1").is_err());
    }

    #[test]
    fn arcs_on_the_three_regular_ball() {
        let model = crate::model::load_model_str(&three_regular_doc(2, true)).unwrap();
        let o = VertexId::origin();
        assert_eq!(model.arc_between(&o, &o).unwrap(), vec![o.clone()]);
        let g = vid("0.1");
        assert_eq!(
            model.arc_between(&o, &g).unwrap(),
            vec![o.clone(), vid("0"), g.clone()]
        );
        assert_eq!(
            model.arc_between(&g, &o).unwrap(),
            vec![g.clone(), vid("0"), o.clone()]
        );
        // across the origin
        assert_eq!(
            model.arc_between(&vid("0.1"), &vid("2.0")).unwrap(),
            vec![vid("0.1"), vid("0"), o, vid("2"), vid("2.0")]
        );
        assert_eq!(model.distance(&vid("0.1"), &vid("2.0")).unwrap(), 4);
    }

    #[test]
    fn arc_reaches_into_the_tail() {
        let model = crate::model::load_model_str(&three_regular_doc(2, true)).unwrap();
        let deep = vid("0.0.1.0");
        let arc = model.arc_between(&VertexId::origin(), &deep).unwrap();
        assert_eq!(arc.len(), 5);
        assert_eq!(arc.last(), Some(&deep));
        // tail vertices only exist below frontier leaves with index < q
        assert!(model.resolve(&vid("0.0.2")).is_err());
        assert!(model.resolve(&vid("0.3")).is_err());
        assert!(model.contains(&vid("0.0.1.1.0")));
    }

    #[test]
    fn confluence_examples() {
        let model = crate::model::load_model_str(&three_regular_doc(2, true)).unwrap();
        let xi = RayAddress::new(&model, vid("0.1")).unwrap();
        assert_eq!(model.confluence(&VertexId::origin(), &xi).unwrap(), VertexId::origin());
        // v on the ray at depth 3
        let on_ray = vid("0.1.0");
        assert_eq!(model.confluence(&on_ray, &xi).unwrap(), on_ray);
        // sibling subtree branching off at depth 1
        assert_eq!(model.confluence(&vid("0.0.1"), &xi).unwrap(), vid("0"));
        // prefix truncation does not change the confluence once past the branch
        let xi_long = RayAddress::new(&model, vid("0.1.0.0")).unwrap();
        assert_eq!(xi, xi_long);
        assert_eq!(model.confluence(&vid("0.0.1"), &xi_long).unwrap(), vid("0"));
    }

    #[test]
    fn ray_canonicalization_and_extension() {
        let model = crate::model::load_model_str(&three_regular_doc(2, true)).unwrap();
        let xi = RayAddress::new(&model, vid("0.1.0.0")).unwrap();
        assert_eq!(xi.prefix(), &vid("0.1"));
        assert_eq!(xi.vertex_at_depth(1), vid("0"));
        assert_eq!(xi.vertex_at_depth(4), vid("0.1.0.0"));
        assert!(xi.passes_through(&vid("0.1.0")));
        assert!(!xi.passes_through(&vid("0.0")));

        // finite model: the extension dies at a leaf
        let finite = crate::model::load_model_str(&two_path_doc()).unwrap();
        assert!(RayAddress::new(&finite, VertexId::origin()).is_err());
    }

    #[test]
    fn cylinder_partition_counts() {
        let model = crate::model::load_model_str(&three_regular_doc(2, true)).unwrap();
        assert_eq!(model.cylinder_partition(1).unwrap().len(), 3);
        assert_eq!(model.cylinder_partition(2).unwrap().len(), 6);
        // beyond the stored core the tail keeps branching
        assert_eq!(model.cylinder_partition(3).unwrap().len(), 12);
        assert_eq!(model.cylinder_partition(4).unwrap().len(), 24);

        let finite = crate::model::load_model_str(&two_path_doc()).unwrap();
        assert_eq!(finite.cylinder_partition(1).unwrap().len(), 1);
        assert!(finite.cylinder_partition(2).is_err());
    }

    #[test]
    fn shell_counts_match_tail_unfolding() {
        let model = crate::model::load_model_str(&three_regular_doc(2, true)).unwrap();
        // shells: 1, 3, 6, 12, 24, ... (frontier size times q^k)
        for (d, n) in [(0u32, 1usize), (1, 3), (2, 6), (3, 12), (4, 24), (5, 48)] {
            assert_eq!(model.shell(d).unwrap().len(), n, "shell {d}");
        }
    }
}
