//! Model-document builders shared by the unit tests.

use rand::Rng;
use serde_json::json;

/// `o -- a`, zero potential, no tail.
pub fn two_path_doc() -> String {
    json!({
        "origin": "o",
        "vertices": [{"id": "o", "potential": 0.0}, {"id": "a", "potential": 0.0}],
        "edges": [{"a": "o", "b": "a"}]
    })
    .to_string()
}

pub fn single_vertex_doc(potential: f64) -> String {
    json!({
        "origin": "o",
        "vertices": [{"id": "o", "potential": potential}],
        "edges": []
    })
    .to_string()
}

/// Ball of the given radius in the 3-regular tree, zero potential, unit
/// weights; optionally continued by a `q = 2` homogeneous tail.
pub fn three_regular_doc(radius: u32, with_tail: bool) -> String {
    regular_ball_doc(radius, 2, 0.0, 1.0, with_tail)
}

/// Ball of a `(q+1)`-regular tree with constant potential and edge weight.
pub fn regular_ball_doc(radius: u32, q: u32, potential: f64, weight: f64, with_tail: bool) -> String {
    let mut vertices = vec![json!({"id": "o", "potential": potential})];
    let mut edges = Vec::new();
    let mut shell: Vec<String> = vec!["o".to_string()];
    let mut counter = 0usize;
    for depth in 1..=radius {
        let mut next = Vec::new();
        for parent in &shell {
            let fanout = if depth == 1 { q + 1 } else { q };
            for _ in 0..fanout {
                let id = format!("v{counter}");
                counter += 1;
                vertices.push(json!({"id": id, "potential": potential}));
                edges.push(json!({"a": parent, "b": id, "weight": weight}));
                next.push(id);
            }
        }
        shell = next;
    }
    let mut doc = json!({
        "origin": "o",
        "vertices": vertices,
        "edges": edges,
    });
    if with_tail {
        doc["tail"] = json!({
            "frontier": shell,
            "branching": q,
            "potential": potential,
            "weight": weight,
        });
    }
    doc.to_string()
}

/// Random tree document: `n` vertices grown by uniform attachment under a
/// degree cap, potentials uniform in `[-pot, pot]`, and (optionally) random
/// edge weights with magnitude in `[0.1, 2]` and random sign.
pub fn random_tree_doc<R: Rng>(
    rng: &mut R,
    n: usize,
    max_degree: usize,
    pot: f64,
    random_weights: bool,
) -> String {
    assert!(n >= 1);
    let mut degrees = vec![0usize; n];
    let mut vertices = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for i in 0..n {
        let p = if pot > 0.0 { rng.gen_range(-pot..=pot) } else { 0.0 };
        vertices.push(json!({"id": format!("v{i}"), "potential": p}));
        if i > 0 {
            let parent = loop {
                let c = rng.gen_range(0..i);
                if degrees[c] < max_degree {
                    break c;
                }
            };
            degrees[parent] += 1;
            degrees[i] += 1;
            let w = if random_weights {
                let mag = rng.gen_range(0.1..=2.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            } else {
                1.0
            };
            edges.push(json!({
                "a": format!("v{parent}"),
                "b": format!("v{i}"),
                "weight": w,
            }));
        }
    }
    json!({
        "degree_bound": max_degree + 1,
        "origin": "v0",
        "vertices": vertices,
        "edges": edges,
    })
    .to_string()
}
