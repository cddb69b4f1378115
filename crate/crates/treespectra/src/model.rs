//! Model-file ingestion and validation.
//!
//! A model document is JSON:
//!
//! ```json
//! {
//!   "degree_bound": 16,
//!   "origin": "o",
//!   "vertices": [ { "id": "o", "potential": 0.0, "diagonal": 0.0 } ],
//!   "edges":    [ { "a": "o", "b": "c0", "weight": 1.0 } ],
//!   "tail":     { "frontier": ["c0"], "branching": 2, "potential": 0.0, "weight": 1.0 }
//! }
//! ```
//!
//! `weight` defaults to 1, `diagonal` defaults to the potential, and
//! `degree_bound` defaults to 16. After validation the loader canonicalizes
//! vertex identities into origin-relative child-index addresses; children are
//! ordered by first appearance of their edge in the document.

use std::collections::HashMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::tree::{CoreVertex, HomogeneousTail, TreeModel, VertexId};

pub const DEFAULT_DEGREE_BOUND: usize = 16;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    degree_bound: Option<usize>,
    origin: String,
    vertices: Vec<VertexDoc>,
    edges: Vec<EdgeDoc>,
    tail: Option<TailDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexDoc {
    id: String,
    potential: f64,
    diagonal: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    a: String,
    b: String,
    weight: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TailDoc {
    frontier: Vec<String>,
    branching: u32,
    potential: f64,
    weight: Option<f64>,
}

/// Load a model from JSON text. All invariants are checked here; a returned
/// model is structurally sound.
pub fn load_model_str(text: &str) -> Result<TreeModel> {
    let doc: ModelDoc =
        serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    build(doc)
}

/// Load a model from raw JSON bytes.
pub fn load_model_bytes(bytes: &[u8]) -> Result<TreeModel> {
    let doc: ModelDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::ModelFormat(e.to_string()))?;
    build(doc)
}

/// Load a model from a file on disk.
pub fn load_model(path: &std::path::Path) -> Result<TreeModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
    load_model_str(&text)
}

fn build(doc: ModelDoc) -> Result<TreeModel> {
    let degree_bound = doc.degree_bound.unwrap_or(DEFAULT_DEGREE_BOUND);
    if degree_bound == 0 {
        return Err(Error::ModelFormat("degree_bound must be positive".into()));
    }
    if doc.vertices.is_empty() {
        return Err(Error::ModelFormat("no vertices".into()));
    }
    if !doc.vertices[0].potential.is_finite() {
        // checked again below for every vertex; this early exit just keeps the
        // error message close to the common single-vertex case
        return Err(Error::ModelFormat("non-finite potential".into()));
    }

    let mut ids: HashMap<&str, usize> = HashMap::new();
    for (i, v) in doc.vertices.iter().enumerate() {
        if !v.potential.is_finite() || v.diagonal.map_or(false, |d| !d.is_finite()) {
            return Err(Error::ModelFormat(format!(
                "non-finite potential or diagonal at '{}'",
                v.id
            )));
        }
        if ids.insert(v.id.as_str(), i).is_some() {
            return Err(Error::ModelFormat(format!("duplicate vertex id '{}'", v.id)));
        }
    }
    let origin_doc = *ids
        .get(doc.origin.as_str())
        .ok_or_else(|| Error::UnknownVertex(doc.origin.clone()))?;

    if doc.edges.len() + 1 != doc.vertices.len() {
        return Err(Error::NotATree(format!(
            "{} vertices need {} edges, document has {}",
            doc.vertices.len(),
            doc.vertices.len() - 1,
            doc.edges.len()
        )));
    }

    // adjacency in document order
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); doc.vertices.len()];
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
    for e in &doc.edges {
        let a = *ids
            .get(e.a.as_str())
            .ok_or_else(|| Error::UnknownVertex(e.a.clone()))?;
        let b = *ids
            .get(e.b.as_str())
            .ok_or_else(|| Error::UnknownVertex(e.b.clone()))?;
        if a == b {
            return Err(Error::NotATree(format!("self-loop at '{}'", e.a)));
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key, ()).is_some() {
            return Err(Error::NotATree(format!(
                "duplicate edge '{}' -- '{}'",
                e.a, e.b
            )));
        }
        let w = e.weight.unwrap_or(1.0);
        if w == 0.0 || !w.is_finite() {
            return Err(Error::ZeroEdgeWeight {
                a: e.a.clone(),
                b: e.b.clone(),
            });
        }
        adj[a].push((b, w));
        adj[b].push((a, w));
    }

    let tail_doc = doc.tail.as_ref();
    if let Some(t) = tail_doc {
        if t.branching == 0 {
            return Err(Error::ModelFormat("tail branching must be ≥ 1".into()));
        }
        if t.frontier.is_empty() {
            return Err(Error::ModelFormat("tail frontier is empty".into()));
        }
        let w = t.weight.unwrap_or(1.0);
        if w == 0.0 || !w.is_finite() || !t.potential.is_finite() {
            return Err(Error::ModelFormat("bad tail weight or potential".into()));
        }
        if t.branching as usize + 1 > degree_bound {
            return Err(Error::DegreeBound {
                vertex: "<tail>".into(),
                degree: t.branching as usize + 1,
                bound: degree_bound,
            });
        }
    }
    let mut frontier_flags = vec![false; doc.vertices.len()];
    if let Some(t) = tail_doc {
        for id in &t.frontier {
            let i = *ids
                .get(id.as_str())
                .ok_or_else(|| Error::UnknownVertex(id.clone()))?;
            if frontier_flags[i] {
                return Err(Error::ModelFormat(format!(
                    "duplicate frontier vertex '{id}'"
                )));
            }
            if adj[i].len() > 1 {
                return Err(Error::ModelFormat(format!(
                    "frontier vertex '{id}' is not a leaf of the stored core"
                )));
            }
            frontier_flags[i] = true;
        }
    }

    for (i, v) in doc.vertices.iter().enumerate() {
        let mut degree = adj[i].len();
        if frontier_flags[i] {
            degree += tail_doc.unwrap().branching as usize;
        }
        if degree > degree_bound {
            return Err(Error::DegreeBound {
                vertex: v.id.clone(),
                degree,
                bound: degree_bound,
            });
        }
    }

    // BFS from the origin assigns canonical addresses; since |E| = |V| - 1,
    // reaching every vertex exactly once certifies the tree property.
    let mut vertices: Vec<CoreVertex> = Vec::with_capacity(doc.vertices.len());
    let mut index: HashMap<VertexId, usize> = HashMap::with_capacity(doc.vertices.len());
    let mut core_of_doc: Vec<Option<usize>> = vec![None; doc.vertices.len()];
    let mut queue = std::collections::VecDeque::new();

    let push = |vertices: &mut Vec<CoreVertex>,
                index: &mut HashMap<VertexId, usize>,
                core_of_doc: &mut Vec<Option<usize>>,
                doc_i: usize,
                addr: VertexId,
                parent: Option<(usize, f64)>|
     -> usize {
        let v = &doc.vertices[doc_i];
        let core_i = vertices.len();
        vertices.push(CoreVertex {
            addr: addr.clone(),
            doc_id: v.id.clone(),
            potential: v.potential,
            diagonal: v.diagonal.unwrap_or(v.potential),
            parent,
            children: Vec::new(),
            is_frontier: frontier_flags[doc_i],
        });
        index.insert(addr, core_i);
        core_of_doc[doc_i] = Some(core_i);
        core_i
    };

    let root = push(
        &mut vertices,
        &mut index,
        &mut core_of_doc,
        origin_doc,
        VertexId::origin(),
        None,
    );
    queue.push_back((origin_doc, root, None::<usize>));
    while let Some((doc_i, core_i, parent_doc)) = queue.pop_front() {
        let addr = vertices[core_i].addr.clone();
        let mut slot = 0u32;
        for &(nbr_doc, w) in &adj[doc_i] {
            if Some(nbr_doc) == parent_doc {
                continue;
            }
            if core_of_doc[nbr_doc].is_some() {
                return Err(Error::NotATree(format!(
                    "cycle through '{}'",
                    doc.vertices[nbr_doc].id
                )));
            }
            let child_addr = addr.child(slot);
            let child_core = push(
                &mut vertices,
                &mut index,
                &mut core_of_doc,
                nbr_doc,
                child_addr,
                Some((core_i, w)),
            );
            vertices[core_i].children.push((child_core, w));
            queue.push_back((nbr_doc, child_core, Some(doc_i)));
            slot += 1;
        }
    }
    if let Some(un) = core_of_doc.iter().position(|c| c.is_none()) {
        return Err(Error::NotATree(format!(
            "vertex '{}' is disconnected from the origin",
            doc.vertices[un].id
        )));
    }

    let tail = tail_doc.map(|t| HomogeneousTail {
        frontier: t
            .frontier
            .iter()
            .map(|id| vertices[core_of_doc[ids[id.as_str()]].unwrap()].addr.clone())
            .collect(),
        branching: t.branching,
        potential: t.potential,
        weight: t.weight.unwrap_or(1.0),
    });

    Ok(TreeModel {
        degree_bound,
        vertices,
        index,
        tail,
    })
}

#[cfg(test)]
mod tests {
    use crate::testutil::{three_regular_doc, two_path_doc};
    use crate::tree::VertexId;

    use super::*;

    #[test]
    fn smallest_tree_loads() {
        let model = load_model_str(&two_path_doc()).unwrap();
        assert_eq!(model.vertex_count(), 2);
        assert!(model.tail().is_none());
        assert_eq!(model.degree_bound(), 16);
    }

    #[test]
    fn three_regular_ball_has_ten_stored_vertices() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        assert_eq!(model.vertex_count(), 10);
        let t = model.tail().unwrap();
        assert_eq!(t.branching, 2);
        assert_eq!(t.frontier.len(), 6);
    }

    #[test]
    fn cycle_is_rejected() {
        let text = r#"{
            "origin": "o",
            "vertices": [{"id":"o","potential":0},{"id":"a","potential":0},{"id":"b","potential":0}],
            "edges": [{"a":"o","b":"a"},{"a":"a","b":"b"},{"a":"b","b":"o"}]
        }"#;
        let err = load_model_str(text).unwrap_err();
        assert!(matches!(err, Error::NotATree(_)), "{err}");
    }

    #[test]
    fn zero_weight_is_rejected() {
        let text = r#"{
            "origin": "o",
            "vertices": [{"id":"o","potential":0},{"id":"a","potential":0}],
            "edges": [{"a":"o","b":"a","weight":0.0}]
        }"#;
        assert!(matches!(
            load_model_str(text).unwrap_err(),
            Error::ZeroEdgeWeight { .. }
        ));
    }

    #[test]
    fn degree_bound_is_enforced() {
        let mut vertices = vec![r#"{"id":"o","potential":0}"#.to_string()];
        let mut edges = Vec::new();
        for k in 0..5 {
            vertices.push(format!(r#"{{"id":"v{k}","potential":0}}"#));
            edges.push(format!(r#"{{"a":"o","b":"v{k}"}}"#));
        }
        let text = format!(
            r#"{{"degree_bound": 4, "origin": "o", "vertices": [{}], "edges": [{}]}}"#,
            vertices.join(","),
            edges.join(",")
        );
        assert!(matches!(
            load_model_str(&text).unwrap_err(),
            Error::DegreeBound { degree: 5, bound: 4, .. }
        ));
    }

    #[test]
    fn disconnected_and_malformed_are_rejected() {
        // 4 vertices, 3 edges, but one component is an edgeless pair
        let text = r#"{
            "origin": "o",
            "vertices": [{"id":"o","potential":0},{"id":"a","potential":0},
                         {"id":"b","potential":0},{"id":"c","potential":0}],
            "edges": [{"a":"o","b":"a"},{"a":"b","b":"c"},{"a":"c","b":"b"}]
        }"#;
        assert!(load_model_str(text).is_err());
        assert!(load_model_str("{").is_err());
        assert!(load_model_str("[]").is_err());
    }

    #[test]
    fn frontier_must_be_a_core_leaf() {
        let text = r#"{
            "origin": "o",
            "vertices": [{"id":"o","potential":0},{"id":"a","potential":0},{"id":"b","potential":0}],
            "edges": [{"a":"o","b":"a"},{"a":"a","b":"b"}],
            "tail": {"frontier": ["a"], "branching": 2, "potential": 0}
        }"#;
        assert!(load_model_str(text).is_err());
    }

    #[test]
    fn canonical_addresses_follow_document_edge_order() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        assert_eq!(model.doc_id(&VertexId::origin()), Some("o"));
        let first_child = VertexId::parse("0").unwrap();
        assert!(model.doc_id(&first_child).is_some());
        assert_eq!(
            model.address_of_doc_id(model.doc_id(&first_child).unwrap()),
            Some(&first_child)
        );
    }
}
