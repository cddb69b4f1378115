//! Green functions on trees.
//!
//! Everything is driven by the directed-edge quantities ζ: for adjacent `v ~ w`,
//! `ζ_w(v) = -p_v(w) · G^(v|w)(v,v;γ)` is (minus, weight-scaled) the diagonal
//! Green function at `v` of the operator with the branch through `w` removed.
//! The ζ satisfy a leaf-inward recursion; the full diagonal follows as
//! `G(v,v;γ) = 1/(p_v(v) - γ + Σ_u p_v(u) ζ_v(u))`, and off-diagonal entries
//! are ζ-products along arcs. A homogeneous tail contributes its closed-form
//! fixed point, which also gives exact boundary values `E + i0` strictly
//! inside the tail band.
//!
//! For unit weights `p ≡ 1` these are the classical relations for `H = A + V`:
//! leaf `ζ_w(v) = -1/(V(v) - γ)`, interior
//! `ζ_w(v) = -1/(V(v) - γ + Σ_{u ≠ w} ζ_v(u))`.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tree::{DirectedEdge, Locus, TreeModel, VertexId};

/// Denominators below this magnitude abort a boundary evaluation.
pub const NEAR_POLE_EPS: f64 = 1e-12;

/// Default residual tolerance for the identity suite.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;

/// Energy `E + iη` with `η > 0`, or the boundary value `E + i0` (`η = 0`,
/// admissible only on models with a homogeneous tail, strictly inside its
/// band).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralParameter {
    energy: f64,
    eta: f64,
}

impl SpectralParameter {
    pub fn new(energy: f64, eta: f64) -> Result<Self> {
        if !energy.is_finite() || !eta.is_finite() {
            return Err(Error::InadmissibleParameter("non-finite parameter".into()));
        }
        if eta < 0.0 {
            return Err(Error::InadmissibleParameter(
                "lower half-plane is not supported".into(),
            ));
        }
        Ok(SpectralParameter { energy, eta })
    }

    /// The boundary value `E + i0`.
    pub fn boundary(energy: f64) -> Result<Self> {
        Self::new(energy, 0.0)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> Complex64 {
        Complex64::new(self.energy, self.eta)
    }

    pub fn is_boundary(&self) -> bool {
        self.eta == 0.0
    }

    /// Parse `E+ETAi` (for example `0+1i`, `-1.5+0.25i`); a plain real number
    /// is read as the boundary value `E + i0`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let body = match s.strip_suffix('i') {
            None => {
                let e: f64 = s
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad spectral parameter '{s}'")))?;
                return Self::new(e, 0.0);
            }
            Some(body) => body,
        };
        let bytes = body.as_bytes();
        let mut split = None;
        for i in (1..bytes.len()).rev() {
            let c = bytes[i];
            if (c == b'+' || c == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                split = Some(i);
                break;
            }
        }
        let i = split.ok_or_else(|| Error::Parse(format!("bad spectral parameter '{s}'")))?;
        let e: f64 = body[..i]
            .parse()
            .map_err(|_| Error::Parse(format!("bad spectral parameter '{s}'")))?;
        let eta: f64 = body[i..]
            .parse()
            .map_err(|_| Error::Parse(format!("bad spectral parameter '{s}'")))?;
        Self::new(e, eta)
    }

    /// Check admissibility against a model: `η > 0` always, `η = 0` only with
    /// a tail and `E` strictly inside the open tail band.
    pub fn check_admissible(&self, model: &TreeModel) -> Result<()> {
        if !self.is_boundary() {
            return Ok(());
        }
        let tail = model.tail().ok_or_else(|| {
            Error::InadmissibleParameter(
                "boundary values need a homogeneous tail".into(),
            )
        })?;
        let (lo, hi) = tail.band();
        if self.energy <= lo || self.energy >= hi {
            return Err(Error::InadmissibleParameter(format!(
                "E = {} outside the open band ({lo}, {hi})",
                self.energy
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SpectralParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}i", self.energy, self.eta)
    }
}

/// ζ on the q-ary homogeneous tree with constant potential `v0` and edge
/// weight `weight`: the root with negative imaginary part (of `weight·ζ`) of
/// `q·(wζ)² + (v0-γ)(wζ) + w² = 0`, which for unit weight is
/// `q·ζ² + (v0-γ)·ζ + 1 = 0`. At `η = 0` the branch is fixed by continuity.
pub fn zeta_homogeneous(
    branching: u32,
    tail_potential: f64,
    tail_weight: f64,
    parameter: SpectralParameter,
) -> Result<Complex64> {
    if branching == 0 {
        return Err(Error::InadmissibleParameter("tail branching q = 0".into()));
    }
    let q = branching as f64;
    let w = tail_weight;
    let e0 = tail_potential;
    if parameter.is_boundary() {
        let x = parameter.energy() - e0;
        let disc = 4.0 * q * w * w - x * x;
        if disc <= 0.0 {
            return Err(Error::InadmissibleParameter(format!(
                "E = {} outside the open band around {e0}",
                parameter.energy()
            )));
        }
        // z := w·ζ on the continuity branch from η ↓ 0
        let z = Complex64::new(x / (2.0 * q), -disc.sqrt() / (2.0 * q));
        return Ok(z / w);
    }
    // q z² + b z + c with z = wζ, b = v0 - γ, c = w²
    let gamma = parameter.gamma();
    let b = Complex64::new(e0, 0.0) - gamma;
    let c = Complex64::new(w * w, 0.0);
    let disc = (b * b - 4.0 * q * c).sqrt();
    // stable split: avoid cancellation between b and the square root
    let s = if (b.conj() * disc).re >= 0.0 { disc } else { -disc };
    let big = -(b + s) / 2.0;
    let z1 = big / q;
    let z2 = c / big;
    let z = if z1.im < 0.0 { z1 } else { z2 };
    debug_assert!(z.im < 0.0, "no root with negative imaginary part");
    Ok(z / w)
}

/// All ζ on the stored core plus the tail fixed point, the diagonal Green
/// function, and `m_v` with `G(v,v;γ) = -1/(2 m_v)`. Pure function of
/// `(model, parameter)`; immutable afterwards.
#[derive(Clone, Debug)]
pub struct ZetaField {
    parameter: SpectralParameter,
    gamma: Complex64,
    /// ζ at vertex `i` toward its parent (origin entry unused).
    up: Vec<Complex64>,
    /// ζ at vertex `i` toward stored child slot `k`.
    down: Vec<Vec<Complex64>>,
    /// ζ at a frontier vertex toward one of its tail children.
    tail_down: Vec<Complex64>,
    g_diag: Vec<Complex64>,
    /// Homogeneous fixed point (`None` without a tail).
    zeta_tail: Option<Complex64>,
}

pub fn compute_zeta_field(model: &TreeModel, parameter: SpectralParameter) -> Result<ZetaField> {
    parameter.check_admissible(model)?;
    let gamma = parameter.gamma();
    let n = model.vertex_count();

    let (zeta_tail, tail_entry) = match model.tail() {
        Some(t) => {
            let z = zeta_homogeneous(t.branching, t.potential, t.weight, parameter)?;
            (Some(z), t.weight * z)
        }
        None => (None, Complex64::new(0.0, 0.0)),
    };

    let guard = |den: Complex64, at: &VertexId| -> Result<Complex64> {
        if den.norm() < NEAR_POLE_EPS {
            Err(Error::NearPole(format!("at vertex {at}")))
        } else {
            Ok(den)
        }
    };

    let mut up = vec![Complex64::new(0.0, 0.0); n];
    let mut down: Vec<Vec<Complex64>> = vec![Vec::new(); n];
    let mut tail_down = vec![Complex64::new(0.0, 0.0); n];
    let mut g_diag = vec![Complex64::new(0.0, 0.0); n];

    // Vertices are stored in BFS order, so a reverse scan visits children
    // before parents.
    for i in (1..n).rev() {
        let v = &model.vertices[i];
        let mut sum = Complex64::new(0.0, 0.0);
        for &(c, w) in &v.children {
            sum += w * up[c];
        }
        if v.is_frontier {
            sum += model.tail().unwrap().branching as f64 * tail_entry;
        }
        let den = guard(v.diagonal - gamma + sum, &v.addr)?;
        let (_, pw) = v.parent.expect("non-origin vertex has a parent");
        up[i] = -pw / den;
    }

    // Forward scan visits parents before children; exclusion sums via
    // prefix/suffix avoid subtracting from the total.
    for i in 0..n {
        let v = &model.vertices[i];
        let mut contribs: Vec<Complex64> = Vec::with_capacity(v.children.len() + 2);
        if let Some((p, pw)) = v.parent {
            let slot = v.addr.indices().last().copied().unwrap() as usize;
            contribs.push(pw * down[p][slot]);
        }
        let child_base = contribs.len();
        for &(c, w) in &v.children {
            contribs.push(w * up[c]);
        }
        if v.is_frontier {
            contribs.push(model.tail().unwrap().branching as f64 * tail_entry);
        }
        let total: Complex64 = contribs.iter().sum();
        g_diag[i] = 1.0 / guard(v.diagonal - gamma + total, &v.addr)?;

        let nc = v.children.len();
        if nc > 0 {
            let mut prefix = vec![Complex64::new(0.0, 0.0); contribs.len() + 1];
            for (k, c) in contribs.iter().enumerate() {
                prefix[k + 1] = prefix[k] + c;
            }
            let mut suffix = vec![Complex64::new(0.0, 0.0); contribs.len() + 1];
            for k in (0..contribs.len()).rev() {
                suffix[k] = suffix[k + 1] + contribs[k];
            }
            let mut slots = Vec::with_capacity(nc);
            for (k, &(_, w)) in v.children.iter().enumerate() {
                let excl = prefix[child_base + k] + suffix[child_base + k + 1];
                let den = guard(v.diagonal - gamma + excl, &v.addr)?;
                slots.push(-w / den);
            }
            down[i] = slots;
        }
        if v.is_frontier {
            let t = model.tail().unwrap();
            let den = guard(v.diagonal - gamma + total - tail_entry, &v.addr)?;
            tail_down[i] = -t.weight / den;
        }
    }

    Ok(ZetaField {
        parameter,
        gamma,
        up,
        down,
        tail_down,
        g_diag,
        zeta_tail,
    })
}

impl ZetaField {
    pub fn parameter(&self) -> SpectralParameter {
        self.parameter
    }

    pub fn gamma(&self) -> Complex64 {
        self.gamma
    }

    /// The tail fixed point, if the model has one.
    pub fn zeta_tail(&self) -> Option<Complex64> {
        self.zeta_tail
    }

    /// ζ_to(from) for adjacent `from ~ to`, unfolding the tail on demand.
    pub fn zeta(&self, model: &TreeModel, edge: &DirectedEdge) -> Result<Complex64> {
        self.zeta_directed(model, &edge.from, &edge.to)
    }

    pub fn zeta_directed(
        &self,
        model: &TreeModel,
        from: &VertexId,
        to: &VertexId,
    ) -> Result<Complex64> {
        if to.parent().as_ref() == Some(from) {
            // downward message
            match model.resolve(from)? {
                Locus::Core(i) => {
                    let slot = *to.indices().last().unwrap() as usize;
                    let stored = model.vertices[i].children.len();
                    if slot < stored {
                        Ok(self.down[i][slot])
                    } else if model.vertices[i].is_frontier {
                        model.resolve(to)?;
                        Ok(self.tail_down[i])
                    } else {
                        Err(Error::UnknownVertex(to.to_string()))
                    }
                }
                Locus::Tail { frontier, steps } => {
                    model.resolve(to)?;
                    Ok(self.tail_chain(model, frontier, steps).0)
                }
            }
        } else if from.parent().as_ref() == Some(to) {
            // upward message
            match model.resolve(from)? {
                Locus::Core(i) => Ok(self.up[i]),
                Locus::Tail { .. } => Ok(self.zeta_tail.expect("tail vertex implies a tail")),
            }
        } else {
            Err(Error::UnknownVertex(format!("{from} ~ {to} is not an edge")))
        }
    }

    /// `G(v,v;γ)`.
    pub fn g_diag(&self, model: &TreeModel, v: &VertexId) -> Result<Complex64> {
        match model.resolve(v)? {
            Locus::Core(i) => Ok(self.g_diag[i]),
            Locus::Tail { frontier, steps } => Ok(self.tail_chain(model, frontier, steps).1),
        }
    }

    /// `m_v` with `G(v,v;γ) = -1/(2 m_v)`.
    pub fn m(&self, model: &TreeModel, v: &VertexId) -> Result<Complex64> {
        Ok(-1.0 / (2.0 * self.g_diag(model, v)?))
    }

    /// Down-message and diagonal at the tail vertex `steps ≥ 1` below frontier
    /// vertex `f`: returns (ζ toward a child, `G(t,t;γ)`).
    fn tail_chain(&self, model: &TreeModel, f: usize, steps: u32) -> (Complex64, Complex64) {
        let t = model.tail().expect("tail locus implies a tail");
        let q = t.branching as f64;
        let w = t.weight;
        let z_hom = w * self.zeta_tail.unwrap();
        let gamma = self.gamma;
        let mut incoming = self.tail_down[f];
        for _ in 1..steps {
            incoming = -w / (t.potential - gamma + w * incoming + (q - 1.0) * z_hom);
        }
        let g = 1.0 / (t.potential - gamma + w * incoming + q * z_hom);
        let down = -w / (t.potential - gamma + w * incoming + (q - 1.0) * z_hom);
        (down, g)
    }
}

/// `G(v,w;γ)` as the ζ-product along the arc `[v,w]` times `G(w,w;γ)`.
pub fn green_pair(
    model: &TreeModel,
    v: &VertexId,
    w: &VertexId,
    field: &ZetaField,
) -> Result<Complex64> {
    let arc = model.arc_between(v, w)?;
    let mut acc = field.g_diag(model, w)?;
    for pair in arc.windows(2) {
        acc *= field.zeta_directed(model, &pair[0], &pair[1])?;
    }
    Ok(acc)
}

/// `Ψ_{γ,v}(w) = Im G(v,w;γ) / π`, the spectral density kernel.
pub fn psi(
    model: &TreeModel,
    v: &VertexId,
    w: &VertexId,
    parameter: SpectralParameter,
) -> Result<f64> {
    let field = compute_zeta_field(model, parameter)?;
    psi_with_field(model, v, w, &field)
}

pub fn psi_with_field(
    model: &TreeModel,
    v: &VertexId,
    w: &VertexId,
    field: &ZetaField,
) -> Result<f64> {
    Ok(green_pair(model, v, w, field)?.im / std::f64::consts::PI)
}

/// Green function of the operator with the branch from `remove.from` through
/// `remove.to` deleted, evaluated at `(v0, vk)` in the kept component.
pub fn green_restricted(
    model: &TreeModel,
    remove: &DirectedEdge,
    v0: &VertexId,
    vk: &VertexId,
    field: &ZetaField,
) -> Result<Complex64> {
    let a = &remove.from;
    let b = &remove.to;
    model.edge_weight(a, b)?; // validates adjacency
    for x in [v0, vk] {
        if !on_kept_side(model, x, a, b)? {
            return Err(Error::SeparatedByCut(v0.to_string(), vk.to_string()));
        }
    }
    let mut memo = HashMap::new();
    let arc = model.arc_between(v0, vk)?;
    let mut acc = restricted_diag(model, field, a, b, vk, &mut memo)?;
    for pair in arc.windows(2) {
        acc *= zeta_cut(model, field, a, b, &pair[0], &pair[1], &mut memo)?;
    }
    Ok(acc)
}

/// Whether `x` lies in the component of `a` after cutting the edge `a ~ b`.
fn on_kept_side(model: &TreeModel, x: &VertexId, a: &VertexId, b: &VertexId) -> Result<bool> {
    if x == b {
        return Ok(false);
    }
    if x == a {
        return Ok(true);
    }
    let arc = model.arc_between(x, b)?;
    Ok(arc[arc.len() - 2] == *a)
}

/// Whether `b` lies in the component of `x` after cutting the edge `x ~ y`
/// (the side that generates the message ζ_y(x)).
fn b_in_message_side(model: &TreeModel, x: &VertexId, y: &VertexId, b: &VertexId) -> Result<bool> {
    if x == b {
        return Ok(true);
    }
    let arc = model.arc_between(x, b)?;
    Ok(arc[1] != *y)
}

fn zeta_cut(
    model: &TreeModel,
    field: &ZetaField,
    a: &VertexId,
    b: &VertexId,
    x: &VertexId,
    y: &VertexId,
    memo: &mut HashMap<(VertexId, VertexId), Complex64>,
) -> Result<Complex64> {
    if !b_in_message_side(model, x, y, b)? {
        return field.zeta_directed(model, x, y);
    }
    if let Some(&z) = memo.get(&(x.clone(), y.clone())) {
        return Ok(z);
    }
    let gamma = field.gamma();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut w_xy = None;
    for (u, w) in model.neighbors(x)? {
        if u == *y {
            w_xy = Some(w);
            continue;
        }
        if x == a && u == *b {
            continue;
        }
        sum += w * zeta_cut(model, field, a, b, &u, x, memo)?;
    }
    let w_xy = w_xy.ok_or_else(|| Error::UnknownVertex(format!("{x} ~ {y} is not an edge")))?;
    let den = model.diagonal(x)? - gamma + sum;
    if den.norm() < NEAR_POLE_EPS {
        return Err(Error::NearPole(format!("restricted recursion at {x}")));
    }
    let z = -w_xy / den;
    memo.insert((x.clone(), y.clone()), z);
    Ok(z)
}

fn restricted_diag(
    model: &TreeModel,
    field: &ZetaField,
    a: &VertexId,
    b: &VertexId,
    v: &VertexId,
    memo: &mut HashMap<(VertexId, VertexId), Complex64>,
) -> Result<Complex64> {
    let gamma = field.gamma();
    let mut sum = Complex64::new(0.0, 0.0);
    for (u, w) in model.neighbors(v)? {
        if v == a && u == *b {
            continue;
        }
        sum += w * zeta_cut(model, field, a, b, &u, v, memo)?;
    }
    let den = model.diagonal(v)? - gamma + sum;
    if den.norm() < NEAR_POLE_EPS {
        return Err(Error::NearPole(format!("restricted diagonal at {v}")));
    }
    Ok(1.0 / den)
}

/// Maximum absolute residuals of the ζ/Green identities over random samples.
/// Identity names describe the relation they check; every residual of an
/// exact relation should sit at floating-point noise.
#[derive(Clone, Debug, Default)]
pub struct IdentityReport {
    /// γ = p_v(v) + Σ_{u~v} p_v(u) ζ_v(u) + 2 m_v
    pub vertex_sum_full: f64,
    /// γ = p_v(v) + Σ_{u≠w} p_v(u) ζ_v(u) + p_v(w)/ζ_w(v)
    pub vertex_sum_excluding: f64,
    /// G(v0,vk) = -∏ ζ / (2 m_{vk})
    pub path_product_over_m: f64,
    /// G(v0,vk) = ζ_{v_{k-1}}(v_k) G(v0,v_{k-1})
    pub single_step_peel: f64,
    /// restricted Green at the far end of a path vs the ζ-product
    pub restricted_product_forward: f64,
    /// restricted Green past the near end of a path vs the reversed ζ-product
    pub restricted_product_reverse: f64,
    /// ζ_w(v) = (m_w/m_v) ζ_v(w)
    pub m_ratio_symmetry: f64,
    /// p_v(w)(1/ζ_w(v) - ζ_v(w)) = 2 m_v
    pub reciprocal_difference: f64,
    /// G(v,w) = G(w,v)
    pub green_symmetry: f64,
    /// Σ_{u≠w} |Im p_v(u)ζ_v(u)| = |Im p_v(w)ζ_w(v)|/|ζ_w(v)|² - η
    pub imag_sum_rule: f64,
    /// Ψ recursion: Ψ_{v0}(vk) - ζ Ψ_{v0}(v_{k-1}) = Im ζ · conj(G)/π
    pub spectral_density_step: f64,
    pub samples: usize,
}

impl IdentityReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("vertex_sum_full", self.vertex_sum_full),
            ("vertex_sum_excluding", self.vertex_sum_excluding),
            ("path_product_over_m", self.path_product_over_m),
            ("single_step_peel", self.single_step_peel),
            ("restricted_product_forward", self.restricted_product_forward),
            ("restricted_product_reverse", self.restricted_product_reverse),
            ("m_ratio_symmetry", self.m_ratio_symmetry),
            ("reciprocal_difference", self.reciprocal_difference),
            ("green_symmetry", self.green_symmetry),
            ("imag_sum_rule", self.imag_sum_rule),
            ("spectral_density_step", self.spectral_density_step),
        ]
    }

    pub fn max_residual(&self) -> f64 {
        self.rows().iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, r) in self.rows() {
            writeln!(f, "{name}: {r:.3e}")?;
        }
        write!(f, "samples: {}", self.samples)
    }
}

/// Evaluate residuals of all ζ/Green identities on `samples` random vertices
/// and non-backtracking paths of the stored core.
pub fn identity_suite(
    model: &TreeModel,
    parameter: SpectralParameter,
    samples: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let field = compute_zeta_field(model, parameter)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport::default();
    let core: Vec<VertexId> = model.core_vertices().cloned().collect();
    let gamma = parameter.gamma();
    let eta = parameter.eta();

    let track = |slot: &mut f64, r: f64| *slot = slot.max(r);

    for _ in 0..samples {
        report.samples += 1;
        let v = core.choose(&mut rng).unwrap().clone();

        // vertex sums and m/ζ relations need a neighbor
        let nbrs = model.neighbors(&v)?;
        let full_sum: Complex64 = nbrs
            .iter()
            .map(|(u, w)| Ok(*w * field.zeta_directed(model, u, &v)?))
            .sum::<Result<Complex64>>()?;
        let m_v = field.m(model, &v)?;
        let diag = model.diagonal(&v)?;
        track(
            &mut report.vertex_sum_full,
            (gamma - (diag + full_sum + 2.0 * m_v)).norm(),
        );

        if !nbrs.is_empty() {
            let (w_id, w_weight) = nbrs[rng.gen_range(0..nbrs.len())].clone();
            let zeta_out = field.zeta_directed(model, &v, &w_id)?;
            let zeta_in = field.zeta_directed(model, &w_id, &v)?;
            let excl_sum = full_sum - w_weight * zeta_in;
            track(
                &mut report.vertex_sum_excluding,
                (gamma - (diag + excl_sum + w_weight / zeta_out)).norm(),
            );
            let m_w = field.m(model, &w_id)?;
            track(
                &mut report.m_ratio_symmetry,
                (zeta_out - (m_w / m_v) * zeta_in).norm(),
            );
            track(
                &mut report.reciprocal_difference,
                (w_weight * (1.0 / zeta_out - zeta_in) - 2.0 * m_v).norm(),
            );
            let lhs: f64 = nbrs
                .iter()
                .filter(|(u, _)| *u != w_id)
                .map(|(u, w)| Ok((*w * field.zeta_directed(model, u, &v)?).im.abs()))
                .sum::<Result<f64>>()?;
            let rhs = (w_weight * zeta_out).im.abs() / zeta_out.norm_sqr() - eta;
            track(&mut report.imag_sum_rule, (lhs - rhs).abs());
        }

        // path identities
        let path = random_path(model, &core, &mut rng, 6)?;
        if path.len() >= 2 {
            let v0 = &path[0];
            let k = path.len() - 1;
            let vk = &path[k];
            let g = green_pair(model, v0, vk, &field)?;

            let mut prod = Complex64::new(1.0, 0.0);
            for pair in path.windows(2) {
                prod *= field.zeta_directed(model, &pair[0], &pair[1])?;
            }
            let m_k = field.m(model, vk)?;
            track(&mut report.path_product_over_m, (g - (-prod / (2.0 * m_k))).norm());

            let g_head = green_pair(model, v0, &path[k - 1], &field)?;
            let zeta_last = field.zeta_directed(model, vk, &path[k - 1])?;
            track(&mut report.single_step_peel, (g - zeta_last * g_head).norm());

            track(
                &mut report.green_symmetry,
                (g - green_pair(model, vk, v0, &field)?).norm(),
            );

            // Ψ is real; ζ·Ψ is not, so the step relation is complex-valued
            let pi = std::f64::consts::PI;
            let lhs = Complex64::new(g.im / pi, 0.0) - zeta_last * (g_head.im / pi);
            let rhs = zeta_last.im * g_head.conj() / pi;
            track(&mut report.spectral_density_step, (lhs - rhs).norm());
        }
        if path.len() >= 3 {
            let k = path.len() - 2;
            // forward: remove the edge past the end of [v0 .. v_k]
            let remove = DirectedEdge::new(path[k].clone(), path[k + 1].clone());
            let lhs = green_restricted(model, &remove, &path[0], &path[k], &field)?;
            let mut prod = Complex64::new(1.0, 0.0);
            for pair in path[..=k + 1].windows(2) {
                prod *= field.zeta_directed(model, &pair[0], &pair[1])?;
            }
            let w_last = model.edge_weight(&path[k], &path[k + 1])?;
            track(&mut report.restricted_product_forward, (lhs - (-prod / w_last)).norm());

            // reverse: remove the edge before the start of [v1 .. v_end]
            let remove = DirectedEdge::new(path[1].clone(), path[0].clone());
            let end = path.len() - 1;
            let lhs = green_restricted(model, &remove, &path[1], &path[end], &field)?;
            let mut prod = Complex64::new(1.0, 0.0);
            for j in 0..end {
                prod *= field.zeta_directed(model, &path[j + 1], &path[j])?;
            }
            let w_first = model.edge_weight(&path[1], &path[0])?;
            track(&mut report.restricted_product_reverse, (lhs - (-prod / w_first)).norm());
        }
    }
    Ok(report)
}

/// A random non-backtracking path in the stored core, length ≥ 1 vertex.
fn random_path<R: Rng>(
    model: &TreeModel,
    core: &[VertexId],
    rng: &mut R,
    max_len: usize,
) -> Result<Vec<VertexId>> {
    let mut path = vec![core.choose(rng).unwrap().clone()];
    let target = rng.gen_range(1..=max_len);
    while path.len() <= target {
        let last = path.last().unwrap();
        let mut options: Vec<VertexId> = model
            .neighbors(last)?
            .into_iter()
            .map(|(u, _)| u)
            .filter(|u| model.index.contains_key(u))
            .collect();
        if path.len() >= 2 {
            let prev = &path[path.len() - 2];
            options.retain(|u| u != prev);
        }
        if options.is_empty() {
            break;
        }
        path.push(options[rng.gen_range(0..options.len())].clone());
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_model_str;
    use crate::testutil::{
        regular_ball_doc, single_vertex_doc, three_regular_doc, two_path_doc,
    };

    fn vid(s: &str) -> VertexId {
        VertexId::parse(s).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Scalar truncation recursion for the homogeneous tree: the upward ζ of
    /// a depth-`h` finite q-ary subtree, a route fully independent of the
    /// field computation.
    fn zeta_truncated(q: u32, v0: f64, gamma: Complex64, height: u32) -> Complex64 {
        let mut z = -1.0 / (v0 - gamma);
        for _ in 0..height {
            z = -1.0 / (v0 - gamma + q as f64 * z);
        }
        z
    }

    #[test]
    fn homogeneous_fixed_point_anchors() {
        let gamma_i = SpectralParameter::new(0.0, 1.0).unwrap();
        // q = 2: 2ζ² - iζ + 1 = 0 with Im ζ < 0 gives ζ = -i/2
        let z = zeta_homogeneous(2, 0.0, 1.0, gamma_i).unwrap();
        assert!((z - c(0.0, -0.5)).norm() < 1e-14);
        // q = 1: ζ² - iζ + 1 = 0 gives ζ = i(1-√5)/2
        let z = zeta_homogeneous(1, 0.0, 1.0, gamma_i).unwrap();
        assert!((z - c(0.0, (1.0 - 5.0f64.sqrt()) / 2.0)).norm() < 1e-14);
        // boundary value at the band center: ζ = -i√2/2
        let z = zeta_homogeneous(2, 0.0, 1.0, SpectralParameter::boundary(0.0).unwrap()).unwrap();
        assert!((z - c(0.0, -(2.0f64.sqrt()) / 2.0)).norm() < 1e-14);
        // outside the open band the boundary value does not exist
        assert!(zeta_homogeneous(2, 0.0, 1.0, SpectralParameter::boundary(3.0).unwrap()).is_err());
        assert!(zeta_homogeneous(0, 0.0, 1.0, gamma_i).is_err());
    }

    #[test]
    fn fixed_point_agrees_with_deep_truncations() {
        let gamma = c(0.0, 1.0);
        let exact = zeta_homogeneous(2, 0.0, 1.0, SpectralParameter::new(0.0, 1.0).unwrap())
            .unwrap();
        let mut prev = f64::INFINITY;
        for height in [5, 10, 20] {
            let err = (zeta_truncated(2, 0.0, gamma, height) - exact).norm();
            assert!(err < prev, "no contraction at height {height}");
            prev = err;
        }
        assert!((zeta_truncated(2, 0.0, gamma, 20) - exact).norm() < 1e-6);
        assert!((zeta_truncated(2, 0.0, gamma, 40) - exact).norm() < 1e-12);
    }

    #[test]
    fn boundary_modulus_is_inverse_sqrt_q() {
        for q in [1u32, 2, 3, 5] {
            let band = 2.0 * (q as f64).sqrt();
            for frac in [-0.9, -0.3, 0.0, 0.55, 0.99] {
                let e = frac * band;
                let z =
                    zeta_homogeneous(q, 0.0, 1.0, SpectralParameter::boundary(e).unwrap())
                        .unwrap();
                assert!(
                    (z.norm() - 1.0 / (q as f64).sqrt()).abs() < 1e-13,
                    "q={q}, E={e}"
                );
            }
        }
    }

    #[test]
    fn weighted_fixed_point_satisfies_its_quadratic() {
        let p = SpectralParameter::new(0.4, 0.8).unwrap();
        for weight in [2.0, -1.3, 0.5] {
            let z = zeta_homogeneous(3, -0.2, weight, p).unwrap();
            let residual = 3.0 * weight * z * z + (c(-0.2, 0.0) - p.gamma()) * z
                + c(weight, 0.0);
            assert!(residual.norm() < 1e-13, "weight {weight}");
            assert!((weight * z).im < 0.0, "sign convention at weight {weight}");
        }
    }

    #[test]
    fn two_vertex_anchors() {
        let model = load_model_str(&two_path_doc()).unwrap();
        let field = compute_zeta_field(&model, SpectralParameter::new(0.0, 1.0).unwrap())
            .unwrap();
        let o = VertexId::origin();
        let a = vid("0");
        // leaf message ζ_a(o) = -1/(V(o) - γ) = -i
        assert!((field.zeta_directed(&model, &o, &a).unwrap() - c(0.0, -1.0)).norm() < 1e-15);
        // G(a,a;i) = 1/(-i + (-i)) = i/2
        assert!((field.g_diag(&model, &a).unwrap() - c(0.0, 0.5)).norm() < 1e-15);
        // restricted diagonal with the only edge removed is the scalar value
        let cut = DirectedEdge::new(a.clone(), o.clone());
        let g = green_restricted(&model, &cut, &a, &a, &field).unwrap();
        assert!((g - c(0.0, 1.0)).norm() < 1e-15);
        // and equals -ζ_o(a)
        assert!((g + field.zeta_directed(&model, &a, &o).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn single_vertex_scalar_resolvent() {
        let model = load_model_str(&single_vertex_doc(2.0)).unwrap();
        let field = compute_zeta_field(&model, SpectralParameter::new(0.0, 1.0).unwrap())
            .unwrap();
        let o = VertexId::origin();
        let expected = 1.0 / c(2.0, -1.0);
        assert!((field.g_diag(&model, &o).unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn three_regular_anchors_at_gamma_i() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        let field = compute_zeta_field(&model, SpectralParameter::new(0.0, 1.0).unwrap())
            .unwrap();
        let o = VertexId::origin();
        // every outward ζ is the fixed point -i/2
        for edge in [("o", "0"), ("0", "0.1"), ("0", "o"), ("1.0", "1")] {
            let z = field
                .zeta_directed(&model, &vid(edge.0), &vid(edge.1))
                .unwrap();
            assert!((z - c(0.0, -0.5)).norm() < 1e-14, "edge {edge:?}");
        }
        // deep into the tail as well
        let z = field
            .zeta_directed(&model, &vid("0.0.1.0"), &vid("0.0.1.0.1"))
            .unwrap();
        assert!((z - c(0.0, -0.5)).norm() < 1e-13);

        // G(o,o;i) = 1/(-i + 3(-i/2)) = 0.4i, m_o = 1.25i
        assert!((field.g_diag(&model, &o).unwrap() - c(0.0, 0.4)).norm() < 1e-14);
        assert!((field.m(&model, &o).unwrap() - c(0.0, 1.25)).norm() < 1e-14);

        // G at distance one: (-(-i/2)) / (2·1.25i) = 0.2
        let g = green_pair(&model, &o, &vid("1"), &field).unwrap();
        assert!((g - c(0.2, 0.0)).norm() < 1e-14);

        // ψ at the band center
        let density = psi(&model, &o, &o, SpectralParameter::boundary(0.0).unwrap()).unwrap();
        assert!((density - 2.0f64.sqrt() / (3.0 * std::f64::consts::PI)).abs() < 1e-14);
        // G(v,w;E+i0) between neighbors is real at E = 0
        let field0 = compute_zeta_field(&model, SpectralParameter::boundary(0.0).unwrap())
            .unwrap();
        let g01 = green_pair(&model, &o, &vid("1"), &field0).unwrap();
        assert!(g01.im.abs() < 1e-12, "Im G = {}", g01.im);
    }

    #[test]
    fn herglotz_signs_everywhere() {
        let model = load_model_str(&three_regular_doc(2, true)).unwrap();
        for eta in [1e-3, 0.1, 2.0] {
            let field =
                compute_zeta_field(&model, SpectralParameter::new(0.7, eta).unwrap()).unwrap();
            for v in model.core_vertices() {
                assert!(field.g_diag(&model, v).unwrap().im > 0.0);
                for (u, w) in model.neighbors(v).unwrap() {
                    let z = field.zeta_directed(&model, v, &u).unwrap();
                    assert!((w * z).im < 0.0, "Im p·ζ at ({v}, {u})");
                }
            }
        }
    }

    #[test]
    fn tail_fixed_point_is_stable_under_core_growth() {
        let small = load_model_str(&three_regular_doc(2, true)).unwrap();
        let large = load_model_str(&three_regular_doc(4, true)).unwrap();
        let p = SpectralParameter::new(-0.3, 0.45).unwrap();
        let f_small = compute_zeta_field(&small, p).unwrap();
        let f_large = compute_zeta_field(&large, p).unwrap();
        for edge in [("o", "1"), ("0", "o"), ("0.1", "0"), ("o", "2")] {
            let a = vid(edge.0);
            let b = vid(edge.1);
            let zs = f_small.zeta_directed(&small, &a, &b).unwrap();
            let zl = f_large.zeta_directed(&large, &a, &b).unwrap();
            assert!((zs - zl).norm() < 1e-12, "edge {edge:?}");
        }
    }

    #[test]
    fn boundary_requires_a_tail_and_the_open_band() {
        let finite = load_model_str(&two_path_doc()).unwrap();
        assert!(matches!(
            compute_zeta_field(&finite, SpectralParameter::boundary(0.0).unwrap()),
            Err(Error::InadmissibleParameter(_))
        ));
        let tailed = load_model_str(&three_regular_doc(2, true)).unwrap();
        let edge = 2.0 * 2.0f64.sqrt();
        assert!(compute_zeta_field(&tailed, SpectralParameter::boundary(edge).unwrap()).is_err());
        assert!(
            compute_zeta_field(&tailed, SpectralParameter::boundary(edge - 1e-3).unwrap())
                .is_ok()
        );
    }

    #[test]
    fn identity_suite_is_quiet_on_homogeneous_and_weighted_models() {
        let plain = load_model_str(&three_regular_doc(3, true)).unwrap();
        let weighted = load_model_str(&regular_ball_doc(3, 2, 0.3, -1.5, true)).unwrap();
        for (model, name) in [(&plain, "plain"), (&weighted, "weighted")] {
            for p in [
                SpectralParameter::new(0.0, 1.0).unwrap(),
                SpectralParameter::new(-1.2, 0.05).unwrap(),
            ] {
                let report = identity_suite(model, p, 40, 7).unwrap();
                assert!(
                    report.max_residual() < 1e-10,
                    "{name} at {p}:\n{report}"
                );
            }
        }
    }

    #[test]
    fn parse_spectral_parameters() {
        let p = SpectralParameter::parse("0+1i").unwrap();
        assert_eq!((p.energy(), p.eta()), (0.0, 1.0));
        let p = SpectralParameter::parse("-1.5+0.25i").unwrap();
        assert_eq!((p.energy(), p.eta()), (-1.5, 0.25));
        let p = SpectralParameter::parse("1e-3+2e-2i").unwrap();
        assert_eq!((p.energy(), p.eta()), (1e-3, 2e-2));
        let p = SpectralParameter::parse("0.7").unwrap();
        assert!(p.is_boundary());
        assert!(SpectralParameter::parse("1-0.5i").is_err());
        assert!(SpectralParameter::parse("i").is_err());
        assert!(SpectralParameter::parse("abc").is_err());
    }
}
