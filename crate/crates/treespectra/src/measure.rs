//! Finitely additive measures on the cylinder algebra of the boundary.
//!
//! Two kinds are built. From a generalized eigenfunction `Hf = γf` the
//! complex measure
//! `ν(∂T_{u+}) = -p_u(u+) · G(o,u;γ) · (f(u+) - ζ_u(u+) f(u))`,
//! `ν(∂T) = f(o)`, which reproduces `f` as a boundary integral of Poisson
//! kernels. At admissible boundary energies the nonnegative spectral measure
//! `ν_E(∂T_{u+}) = |G(o,u;E+i0)|² · |Im (p_u(u+) ζ_u(u+))| / π`,
//! `ν_E(∂T) = Ψ_{E,o}(o)`, which factorizes the spectral density kernel
//! through Poisson kernels. The weight factors reduce to the familiar
//! unweighted formulas when `p ≡ 1`.
//!
//! Measures are stored down to a requested depth; deeper values come from the
//! defining formulas, never from subdividing stored values.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::green::{compute_zeta_field, green_pair, psi_with_field, SpectralParameter, ZetaField};
use crate::poisson::poisson_for_cylinder;
use crate::tree::{Cylinder, TreeModel, VertexId};

/// An eigen-equation residual above this gate rejects the input function.
pub const EIGEN_RESIDUAL_GATE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    Eigenfunction,
    Spectral,
}

/// A finitely additive assignment on cylinders, stored down to `depth`.
#[derive(Clone, Debug)]
pub struct CylinderMeasure {
    kind: MeasureKind,
    parameter: SpectralParameter,
    total: Complex64,
    depth: u32,
    assignments: Vec<(VertexId, Complex64)>,
    index: HashMap<VertexId, usize>,
}

impl CylinderMeasure {
    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn parameter(&self) -> SpectralParameter {
        self.parameter
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// `ν(∂T)`.
    pub fn total(&self) -> Complex64 {
        self.total
    }

    pub fn value(&self, cylinder: &Cylinder) -> Option<Complex64> {
        match cylinder {
            Cylinder::Full => Some(self.total),
            Cylinder::At(v) => self.index.get(v).map(|&i| self.assignments[i].1),
        }
    }

    /// Stored `(base vertex, value)` pairs, shallow to deep.
    pub fn assignments(&self) -> &[(VertexId, Complex64)] {
        &self.assignments
    }

    /// Max additivity defect `|ν(∂T_u) - Σ ν(∂T_{u+})|` over stored interior
    /// vertices, including the split of the total mass at the origin.
    pub fn additivity_residual(&self, model: &TreeModel) -> Result<f64> {
        let mut worst = 0.0f64;
        let shell1: Complex64 = model
            .shell(1)?
            .iter()
            .map(|s| self.index.get(s).map(|&i| self.assignments[i].1))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().sum())
            .ok_or_else(|| Error::DepthRange {
                depth: 1,
                reason: "measure does not cover depth 1".into(),
            })?;
        worst = worst.max((self.total - shell1).norm());
        for (u, nu_u) in &self.assignments {
            if u.depth() + 1 > self.depth {
                continue;
            }
            let mut children_sum = Complex64::new(0.0, 0.0);
            for (c, _) in model.forward_neighbors(u)? {
                let i = self.index.get(&c).ok_or_else(|| Error::DepthRange {
                    depth: c.depth(),
                    reason: format!("missing stored cylinder at {c}"),
                })?;
                children_sum += self.assignments[*i].1;
            }
            worst = worst.max((nu_u - children_sum).norm());
        }
        Ok(worst)
    }

    /// Serialize as rows `address,re,im` with a leading `total` row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "total,{:.16e},{:.16e}\n",
            self.total.re, self.total.im
        ));
        for (v, z) in &self.assignments {
            out.push_str(&format!("{v},{:.16e},{:.16e}\n", z.re, z.im));
        }
        out
    }
}

/// Parse the `to_text` format back into `(total, assignments)`.
pub fn parse_measure_text(text: &str) -> Result<(Complex64, Vec<(VertexId, Complex64)>)> {
    let mut total = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (addr, re, im) = (parts.next(), parts.next(), parts.next());
        if parts.next().is_some() {
            return Err(Error::Parse(format!("line {}: too many fields", lineno + 1)));
        }
        let (addr, re, im) = match (addr, re, im) {
            (Some(a), Some(r), Some(i)) => (a.trim(), r.trim(), i.trim()),
            _ => return Err(Error::Parse(format!("line {}: want 3 fields", lineno + 1))),
        };
        let re: f64 = re
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad real part", lineno + 1)))?;
        let im: f64 = im
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad imaginary part", lineno + 1)))?;
        let z = Complex64::new(re, im);
        if addr == "total" {
            if total.replace(z).is_some() {
                return Err(Error::Parse("duplicate total row".into()));
            }
        } else {
            rows.push((VertexId::parse(addr)?, z));
        }
    }
    let total = total.ok_or_else(|| Error::Parse("missing total row".into()))?;
    Ok((total, rows))
}

fn build_index(assignments: &[(VertexId, Complex64)]) -> HashMap<VertexId, usize> {
    assignments
        .iter()
        .enumerate()
        .map(|(i, (v, _))| (v.clone(), i))
        .collect()
}

/// The complex boundary measure attached to a generalized eigenfunction,
/// stored on all cylinders down to `depth`. The eigen-equation is verified on
/// the ball of radius `depth` first; a residual above [`EIGEN_RESIDUAL_GATE`]
/// is an error since the defining formula is meaningless off eigenfunctions.
pub fn nu_from_eigenfunction<F>(
    model: &TreeModel,
    field: &ZetaField,
    mut f: F,
    depth: u32,
) -> Result<CylinderMeasure>
where
    F: FnMut(&VertexId) -> Result<Complex64>,
{
    let gamma = field.gamma();
    let mut cache: HashMap<VertexId, Complex64> = HashMap::new();
    let mut value = |at: &VertexId, f: &mut F| -> Result<Complex64> {
        if let Some(&v) = cache.get(at) {
            return Ok(v);
        }
        let v = f(at)?;
        cache.insert(at.clone(), v);
        Ok(v)
    };

    for v in model.ball(depth)? {
        let mut acc = model.diagonal(&v)? * value(&v, &mut f)?;
        for (u, w) in model.neighbors(&v)? {
            acc += w * value(&u, &mut f)?;
        }
        let residual = (acc - gamma * value(&v, &mut f)?).norm();
        if residual > EIGEN_RESIDUAL_GATE {
            return Err(Error::EigenResidual {
                vertex: v.to_string(),
                residual,
                gate: EIGEN_RESIDUAL_GATE,
            });
        }
    }

    let origin = model.origin();
    let total = value(&origin, &mut f)?;
    let mut assignments = Vec::new();
    for d in 1..=depth {
        for u_plus in model.shell(d)? {
            let u = u_plus.parent().unwrap();
            let weight = model.edge_weight(&u, &u_plus)?;
            let g_ou = green_pair(model, &origin, &u, field)?;
            let zeta = field.zeta_directed(model, &u_plus, &u)?;
            let nu = -weight * g_ou * (value(&u_plus, &mut f)? - zeta * value(&u, &mut f)?);
            assignments.push((u_plus, nu));
        }
    }
    let index = build_index(&assignments);
    Ok(CylinderMeasure {
        kind: MeasureKind::Eigenfunction,
        parameter: field.parameter(),
        total,
        depth,
        assignments,
        index,
    })
}

/// Realize the boundary integral `∫ P_{γ,ξ}(v) dν(ξ)` as the exact finite sum
/// over the cylinders at `depth` (the kernel is cylinder-constant there).
pub fn reconstruct(
    model: &TreeModel,
    field: &ZetaField,
    measure: &CylinderMeasure,
    v: &VertexId,
    depth: u32,
) -> Result<Complex64> {
    if depth <= v.depth() {
        return Err(Error::DepthRange {
            depth,
            reason: format!("reconstruction at {v} needs depth > {}", v.depth()),
        });
    }
    if depth > measure.depth() {
        return Err(Error::DepthRange {
            depth,
            reason: format!("measure stored only to depth {}", measure.depth()),
        });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for s in model.shell(depth)? {
        let nu = measure
            .value(&Cylinder::At(s.clone()))
            .expect("stored depth covers the shell");
        acc += poisson_for_cylinder(model, field, &s, v)? * nu;
    }
    Ok(acc)
}

/// Spectral-measure evaluations sharing one boundary field; caches the
/// `G(o, ·)` values that repeat across sibling cylinders.
pub(crate) struct BoundaryEvaluator<'a> {
    model: &'a TreeModel,
    field: &'a ZetaField,
    green_to_origin: HashMap<VertexId, Complex64>,
}

impl<'a> BoundaryEvaluator<'a> {
    pub fn new(model: &'a TreeModel, field: &'a ZetaField) -> Self {
        BoundaryEvaluator {
            model,
            field,
            green_to_origin: HashMap::new(),
        }
    }

    fn green_to_origin(&mut self, u: &VertexId) -> Result<Complex64> {
        if let Some(&g) = self.green_to_origin.get(u) {
            return Ok(g);
        }
        let g = green_pair(self.model, &self.model.origin(), u, self.field)?;
        self.green_to_origin.insert(u.clone(), g);
        Ok(g)
    }

    /// `ν_E(∂T_{u+})`.
    pub fn nu(&mut self, u_plus: &VertexId) -> Result<f64> {
        let u = u_plus.parent().ok_or_else(|| Error::DepthRange {
            depth: 0,
            reason: "the full boundary is not a proper cylinder".into(),
        })?;
        let weight = self.model.edge_weight(&u, u_plus)?;
        let g = self.green_to_origin(&u)?;
        let zeta = self.field.zeta_directed(self.model, u_plus, &u)?;
        Ok(g.norm_sqr() * (weight * zeta).im.abs() / std::f64::consts::PI)
    }

    pub fn poisson(&self, s: &VertexId, v: &VertexId) -> Result<Complex64> {
        poisson_for_cylinder(self.model, self.field, s, v)
    }
}

/// `ν_E(∂T_{u+})` at the boundary energy `E`; nonnegative by construction.
pub fn nu_e_cylinder(model: &TreeModel, energy: f64, u_plus: &VertexId) -> Result<f64> {
    let field = compute_zeta_field(model, SpectralParameter::boundary(energy)?)?;
    BoundaryEvaluator::new(model, &field).nu(u_plus)
}

/// The spectral measure stored on all cylinders down to `depth`, with total
/// mass `Ψ_{E,o}(o)`.
pub fn nu_e_measure(model: &TreeModel, energy: f64, depth: u32) -> Result<CylinderMeasure> {
    let parameter = SpectralParameter::boundary(energy)?;
    let field = compute_zeta_field(model, parameter)?;
    let origin = model.origin();
    let total = psi_with_field(model, &origin, &origin, &field)?;
    let mut ev = BoundaryEvaluator::new(model, &field);
    let mut assignments = Vec::new();
    for d in 1..=depth {
        for u_plus in model.shell(d)? {
            let nu = ev.nu(&u_plus)?;
            assignments.push((u_plus, Complex64::new(nu, 0.0)));
        }
    }
    let index = build_index(&assignments);
    Ok(CylinderMeasure {
        kind: MeasureKind::Spectral,
        parameter,
        total: Complex64::new(total, 0.0),
        depth,
        assignments,
        index,
    })
}

/// `Ψ_{E,v}(w)` through the boundary factorization:
/// `Σ_{|s| = depth} conj(P_{E,s}(v)) P_{E,s}(w) ν_E(∂T_s)`.
pub fn psi_via_boundary(
    model: &TreeModel,
    energy: f64,
    v: &VertexId,
    w: &VertexId,
    depth: u32,
) -> Result<Complex64> {
    if depth <= v.depth().max(w.depth()) {
        return Err(Error::DepthRange {
            depth,
            reason: format!("need depth > max(|{v}|, |{w}|)"),
        });
    }
    let field = compute_zeta_field(model, SpectralParameter::boundary(energy)?)?;
    let mut ev = BoundaryEvaluator::new(model, &field);
    let mut acc = Complex64::new(0.0, 0.0);
    for s in model.shell(depth)? {
        let nu = ev.nu(&s)?;
        acc += ev.poisson(&s, v)?.conj() * ev.poisson(&s, w)? * nu;
    }
    Ok(acc)
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::Eigenfunction => write!(f, "eigenfunction"),
            MeasureKind::Spectral => write!(f, "spectral"),
        }
    }
}
