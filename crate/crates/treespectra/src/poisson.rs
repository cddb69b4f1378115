//! The Poisson kernel `P_{γ,ξ}(v) = G(v∧ξ, v; γ) / G(o, v∧ξ; γ)`.
//!
//! Evaluation uses the ζ-product form: with the arc `(v_0=o, …, v_k=v)` and
//! confluence `v_r = v∧ξ`,
//! `P = ∏_{j=r}^{k-1} ζ_{v_j}(v_{j+1}) / ∏_{j=0}^{r-1} ζ_{v_{j+1}}(v_j)`.
//! The numerator walks from the confluence out to `v` (messages pointing back
//! toward the ray), the denominator walks the ray from the origin to the
//! confluence. `P_{γ,ξ}(o) = 1`, and the kernel depends on ξ only through the
//! cylinder containing it once the cylinder is deeper than `v`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::green::{green_pair, ZetaField};
use crate::tree::{RayAddress, TreeModel, VertexId};

#[derive(Clone, Debug)]
pub struct PoissonEvaluation {
    pub value: Complex64,
    pub confluence_vertex: VertexId,
    /// ζ factors from the confluence out to `v` (numerator).
    pub toward_factors: Vec<Complex64>,
    /// ζ factors from the origin to the confluence along the ray (denominator).
    pub against_factors: Vec<Complex64>,
}

/// Evaluate the kernel given the confluence vertex `v ∧ ξ`.
fn eval_with_confluence(
    model: &TreeModel,
    field: &ZetaField,
    confluence: VertexId,
    v: &VertexId,
) -> Result<PoissonEvaluation> {
    debug_assert!(confluence.is_prefix_of(v));
    let r = confluence.depth();
    let k = v.depth();
    let mut toward_factors = Vec::with_capacity((k - r) as usize);
    for j in r..k {
        let child = v.ancestor_at(j + 1).unwrap();
        let parent = v.ancestor_at(j).unwrap();
        toward_factors.push(field.zeta_directed(model, &child, &parent)?);
    }
    let mut against_factors = Vec::with_capacity(r as usize);
    for j in 0..r {
        let here = confluence.ancestor_at(j).unwrap();
        let next = confluence.ancestor_at(j + 1).unwrap();
        against_factors.push(field.zeta_directed(model, &here, &next)?);
    }
    let mut value = Complex64::new(1.0, 0.0);
    for z in &toward_factors {
        value *= z;
    }
    for z in &against_factors {
        value /= z;
    }
    Ok(PoissonEvaluation {
        value,
        confluence_vertex: confluence,
        toward_factors,
        against_factors,
    })
}

/// `P_{γ,ξ}(v)` via the ζ-product formula.
pub fn poisson_eval(
    model: &TreeModel,
    field: &ZetaField,
    xi: &RayAddress,
    v: &VertexId,
) -> Result<PoissonEvaluation> {
    model.resolve(v)?;
    eval_with_confluence(model, field, xi.confluence_with(v), v)
}

/// Kernel value shared by every ray in the cylinder below `s`. Defined
/// whenever the cylinder pins the confluence down, in particular for
/// `|s| > |v|`.
pub fn poisson_for_cylinder(
    model: &TreeModel,
    field: &ZetaField,
    s: &VertexId,
    v: &VertexId,
) -> Result<Complex64> {
    if s.is_prefix_of(v) && s != v {
        return Err(Error::DepthRange {
            depth: s.depth(),
            reason: format!("cylinder at {s} does not determine the kernel at {v}"),
        });
    }
    let mut n = 0;
    let max = s.indices().len().min(v.indices().len());
    while n < max && s.indices()[n] == v.indices()[n] {
        n += 1;
    }
    let confluence = v.ancestor_at(n as u32).unwrap();
    Ok(eval_with_confluence(model, field, confluence, v)?.value)
}

/// One-step recursion to a forward neighbor: multiply by ζ when stepping away
/// from the ray, divide when stepping along it.
pub fn poisson_step(
    model: &TreeModel,
    field: &ZetaField,
    xi: &RayAddress,
    u: &VertexId,
    u_plus: &VertexId,
    base: Complex64,
) -> Result<Complex64> {
    if u_plus.parent().as_ref() != Some(u) || !model.contains(u_plus) {
        return Err(Error::UnknownVertex(format!(
            "{u_plus} is not a forward neighbor of {u}"
        )));
    }
    if xi.passes_through(u_plus) {
        Ok(base / field.zeta_directed(model, u, u_plus)?)
    } else {
        Ok(base * field.zeta_directed(model, u_plus, u)?)
    }
}

#[derive(Clone, Debug)]
pub struct PoissonLimitReport {
    pub value: Complex64,
    /// `(depth, |G(u,v)/G(o,u) - P|)` for the probe vertex `u` on the ray.
    pub deviations: Vec<(u32, f64)>,
}

impl PoissonLimitReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|d| d.1).fold(0.0, f64::max)
    }
}

/// The ratio `G(u,v;γ)/G(o,u;γ)` stabilizes exactly once `u` lies past the
/// confluence on the ray; report its deviation from the product formula at
/// the given depths.
pub fn poisson_limit_check(
    model: &TreeModel,
    field: &ZetaField,
    xi: &RayAddress,
    v: &VertexId,
    depths: &[u32],
) -> Result<PoissonLimitReport> {
    let confluence = model.confluence(v, xi)?;
    let value = poisson_eval(model, field, xi, v)?.value;
    let origin = model.origin();
    let mut deviations = Vec::with_capacity(depths.len());
    for &n in depths {
        if n <= confluence.depth() {
            return Err(Error::DepthRange {
                depth: n,
                reason: format!("probe not past the confluence {confluence}"),
            });
        }
        let u = xi.vertex_at_depth(n);
        let ratio =
            green_pair(model, &u, v, field)? / green_pair(model, &origin, &u, field)?;
        deviations.push((n, (ratio - value).norm()));
    }
    Ok(PoissonLimitReport { value, deviations })
}

/// Max residual of `(H P_{γ,ξ})(v) - γ P_{γ,ξ}(v)` over the region.
pub fn eigen_check(
    model: &TreeModel,
    field: &ZetaField,
    xi: &RayAddress,
    region: &[VertexId],
) -> Result<f64> {
    let gamma = field.gamma();
    let mut cache: HashMap<VertexId, Complex64> = HashMap::new();
    let mut kernel = |model: &TreeModel, at: &VertexId| -> Result<Complex64> {
        if let Some(&p) = cache.get(at) {
            return Ok(p);
        }
        let p = poisson_eval(model, field, xi, at)?.value;
        cache.insert(at.clone(), p);
        Ok(p)
    };
    let mut worst = 0.0f64;
    for v in region {
        let p_v = kernel(model, v)?;
        let mut acc = model.diagonal(v)? * p_v;
        for (u, w) in model.neighbors(v)? {
            acc += w * kernel(model, &u)?;
        }
        worst = worst.max((acc - gamma * p_v).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{compute_zeta_field, SpectralParameter};
    use crate::model::load_model_str;
    use crate::testutil::{regular_ball_doc, three_regular_doc};

    fn vid(s: &str) -> VertexId {
        VertexId::parse(s).unwrap()
    }

    #[test]
    fn homogeneous_values_at_distance_one() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        let gamma = SpectralParameter::new(0.0, 1.0).unwrap();
        let field = compute_zeta_field(&model, gamma).unwrap();
        let xi = RayAddress::new(&model, vid("0")).unwrap();

        let at_origin = poisson_eval(&model, &field, &xi, &VertexId::origin()).unwrap();
        assert!((at_origin.value - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        // first vertex on the ray: 1/ζ = 2i
        let on_ray = poisson_eval(&model, &field, &xi, &vid("0")).unwrap();
        assert!((on_ray.value - Complex64::new(0.0, 2.0)).norm() < 1e-12);

        // neighbor of the origin off the ray: ζ = -i/2
        let off_ray = poisson_eval(&model, &field, &xi, &vid("1")).unwrap();
        assert!((off_ray.value - Complex64::new(0.0, -0.5)).norm() < 1e-12);
    }

    #[test]
    fn step_recursion_matches_product() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        let gamma = SpectralParameter::new(0.3, 0.7).unwrap();
        let field = compute_zeta_field(&model, gamma).unwrap();
        let xi = RayAddress::new(&model, vid("0.1")).unwrap();

        for target in ["0", "0.1", "0.1.1", "1.0", "2", "0.0.1"] {
            let v = vid(target);
            let direct = poisson_eval(&model, &field, &xi, &v).unwrap().value;
            let mut chained = Complex64::new(1.0, 0.0);
            for pair in model
                .arc_between(&VertexId::origin(), &v)
                .unwrap()
                .windows(2)
            {
                chained =
                    poisson_step(&model, &field, &xi, &pair[0], &pair[1], chained).unwrap();
            }
            assert!(
                (direct - chained).norm() < 1e-12,
                "mismatch at {target}: {direct} vs {chained}"
            );
        }
    }

    #[test]
    fn ratio_stabilizes_past_the_confluence() {
        let model = load_model_str(&three_regular_doc(3, true)).unwrap();
        let gamma = SpectralParameter::new(0.0, 1.0).unwrap();
        let field = compute_zeta_field(&model, gamma).unwrap();
        let xi = RayAddress::new(&model, vid("2")).unwrap();
        let v = vid("0.1");
        let report = poisson_limit_check(&model, &field, &xi, &v, &[1, 3, 5, 8]).unwrap();
        assert!(report.max_deviation() < 1e-12, "{report:?}");

        // depth not past the confluence is rejected
        let on_ray = vid("2.0.0");
        assert!(poisson_limit_check(&model, &field, &xi, &on_ray, &[2]).is_err());
    }

    #[test]
    fn kernel_is_cylinder_local() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        let gamma = SpectralParameter::new(-0.4, 0.2).unwrap();
        let field = compute_zeta_field(&model, gamma).unwrap();
        let v = vid("1.0");
        // two different rays through the same depth-3 cylinder
        let xi1 = RayAddress::new(&model, vid("0.1.1")).unwrap();
        let xi2 = RayAddress::new(&model, vid("0.1.1.1")).unwrap();
        let p1 = poisson_eval(&model, &field, &xi1, &v).unwrap().value;
        let p2 = poisson_eval(&model, &field, &xi2, &v).unwrap().value;
        assert!((p1 - p2).norm() < 1e-15);
        let via_cyl = poisson_for_cylinder(&model, &field, &vid("0.1.1"), &v).unwrap();
        assert!((p1 - via_cyl).norm() < 1e-15);

        // a cylinder above v does not determine the kernel
        assert!(poisson_for_cylinder(&model, &field, &vid("1"), &vid("1.0")).is_err());
    }

    #[test]
    fn eigenfunction_property_complex_and_boundary() {
        let model = load_model_str(&three_regular_doc(3, true)).unwrap();
        let region = model.ball(3).unwrap();
        let xi = RayAddress::new(&model, vid("1.0.1")).unwrap();

        for p in [
            SpectralParameter::new(0.0, 1.0).unwrap(),
            SpectralParameter::new(0.5, 0.1).unwrap(),
            SpectralParameter::boundary(0.0).unwrap(),
            SpectralParameter::boundary(1.3).unwrap(),
        ] {
            let field = compute_zeta_field(&model, p).unwrap();
            let residual = eigen_check(&model, &field, &xi, &region).unwrap();
            assert!(residual < 1e-10, "residual {residual:.3e} at {p}");
        }
    }

    #[test]
    fn eigenfunction_property_weighted() {
        let model = load_model_str(&regular_ball_doc(3, 2, 0.0, 2.0, true)).unwrap();
        let region = model.ball(3).unwrap();
        let xi = RayAddress::new(&model, vid("0")).unwrap();
        let field =
            compute_zeta_field(&model, SpectralParameter::new(0.2, 0.9).unwrap()).unwrap();
        let residual = eigen_check(&model, &field, &xi, &region).unwrap();
        assert!(residual < 1e-10, "residual {residual:.3e}");
    }

    #[test]
    fn boundary_modulus_on_the_homogeneous_tree() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        let field =
            compute_zeta_field(&model, SpectralParameter::boundary(0.7).unwrap()).unwrap();
        let xi = RayAddress::new(&model, vid("0.0.1")).unwrap();
        let q: f64 = 2.0;
        for target in ["o", "0", "0.0", "0.0.1.0", "1", "1.1", "0.1.0"] {
            let v = vid(target);
            let eval = poisson_eval(&model, &field, &xi, &v).unwrap();
            let r = eval.confluence_vertex.depth() as f64;
            let d = v.depth() as f64;
            let expected = q.powf((2.0 * r - d) / 2.0);
            assert!(
                (eval.value.norm() - expected).abs() < 1e-12,
                "|P| at {target}: {} vs {expected}",
                eval.value.norm()
            );
        }
    }
}
