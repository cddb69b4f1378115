//! Spectral expansion over energy and boundary.
//!
//! On a model whose spectrum is purely absolutely continuous inside the
//! window (a user assertion, true for homogeneous-tail models inside the tail
//! band), the kernel of a bounded Borel `F` factorizes as
//!
//! `F(H)(v,w) = ∫ F(E) Ψ_{E,v}(w) dE
//!            = ∫ ∫ F(E) P_{E,ξ}(v) conj(P_{E,ξ}(w)) dν_E(ξ) dE`,
//!
//! with the boundary integral realized exactly as a finite cylinder sum at
//! any depth past `max(|v|, |w|)`. The Fourier coefficient of a finitely
//! supported `f` is `f̂_ξ(E) = Σ_w conj(P_{E,ξ}(w)) f(w)`, with inversion,
//! Plancherel and trace identities checked against brute-force truncations.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::green::{compute_zeta_field, psi_with_field, SpectralParameter, ZetaField};
use crate::measure::BoundaryEvaluator;
use crate::oracle::DenseTruncation;
use crate::poisson::poisson_eval;
use crate::quad::integrate_energy;
use crate::tree::{RayAddress, TreeModel, VertexId};

pub const DEFAULT_PANELS: usize = 64;
pub const DEFAULT_NODES: usize = 16;
/// Margin kept from the band edges, as a fraction of the band width.
pub const BAND_MARGIN_FRACTION: f64 = 1e-9;
/// Truncation radius of the brute-force reference in `plancherel_check`.
pub const DEFAULT_ORACLE_RADIUS: u32 = 14;

/// Energy interval with its quadrature scheme. Construction clamps the
/// interval into the open tail band (minus a margin) where boundary values
/// exist.
#[derive(Clone, Debug)]
pub struct EnergyWindow {
    a: f64,
    b: f64,
    panels: usize,
    nodes: usize,
    threads: usize,
}

impl EnergyWindow {
    pub fn new(model: &TreeModel, a: f64, b: f64) -> Result<Self> {
        let tail = model.tail().ok_or_else(|| {
            Error::InadmissibleParameter("energy windows need a homogeneous tail".into())
        })?;
        if !(a < b) {
            return Err(Error::InadmissibleParameter(format!(
                "empty energy window [{a}, {b}]"
            )));
        }
        let (lo, hi) = tail.band();
        let margin = BAND_MARGIN_FRACTION * (hi - lo);
        let a = a.max(lo + margin);
        let b = b.min(hi - margin);
        if !(a < b) {
            return Err(Error::InadmissibleParameter(
                "energy window misses the band".into(),
            ));
        }
        Ok(EnergyWindow {
            a,
            b,
            panels: DEFAULT_PANELS,
            nodes: DEFAULT_NODES,
            threads: 1,
        })
    }

    /// The full tail band (minus the margin).
    pub fn full_band(model: &TreeModel) -> Result<Self> {
        let tail = model.tail().ok_or_else(|| {
            Error::InadmissibleParameter("energy windows need a homogeneous tail".into())
        })?;
        let (lo, hi) = tail.band();
        Self::new(model, lo, hi)
    }

    pub fn with_quadrature(mut self, panels: usize, nodes: usize) -> Self {
        self.panels = panels.max(1);
        self.nodes = nodes.max(1);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Interval actually integrated for `F`: indicators clip the window.
    fn clipped(&self, f: &TestFunction) -> Option<(f64, f64)> {
        match f {
            TestFunction::Indicator(lo, hi) => {
                let a = self.a.max(*lo);
                let b = self.b.min(*hi);
                (a < b).then_some((a, b))
            }
            _ => Some((self.a, self.b)),
        }
    }

    fn integrate<G>(&self, f: &TestFunction, components: usize, eval: G) -> Result<Vec<Complex64>>
    where
        G: Fn(f64) -> Result<Vec<Complex64>> + Sync,
    {
        match self.clipped(f) {
            Some((a, b)) => {
                integrate_energy(a, b, self.panels, self.nodes, self.threads, components, eval)
            }
            None => Ok(vec![Complex64::new(0.0, 0.0); components]),
        }
    }
}

/// A bounded Borel symbol on the energy axis.
#[derive(Clone, Debug)]
pub enum TestFunction {
    One,
    /// `c0 + c1 E + c2 E² + …`
    Polynomial(Vec<Complex64>),
    /// Characteristic function of `[lo, hi]`.
    Indicator(f64, f64),
    /// Piecewise-linear interpolation of `(E, value)` knots, zero outside.
    Tabulated(Vec<(f64, f64)>),
}

impl TestFunction {
    pub fn monomial(degree: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); degree + 1];
        coeffs[degree] = Complex64::new(1.0, 0.0);
        TestFunction::Polynomial(coeffs)
    }

    pub fn eval(&self, e: f64) -> Complex64 {
        match self {
            TestFunction::One => Complex64::new(1.0, 0.0),
            TestFunction::Polynomial(coeffs) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    acc = acc * e + c;
                }
                acc
            }
            TestFunction::Indicator(lo, hi) => {
                if (*lo..=*hi).contains(&e) {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            TestFunction::Tabulated(knots) => {
                let v = match knots.binary_search_by(|(x, _)| x.total_cmp(&e)) {
                    Ok(i) => knots[i].1,
                    Err(0) => 0.0,
                    Err(i) if i == knots.len() => 0.0,
                    Err(i) => {
                        let (x0, y0) = knots[i - 1];
                        let (x1, y1) = knots[i];
                        y0 + (y1 - y0) * (e - x0) / (x1 - x0)
                    }
                };
                Complex64::new(v, 0.0)
            }
        }
    }

    pub fn conjugate(&self) -> Self {
        match self {
            TestFunction::Polynomial(coeffs) => {
                TestFunction::Polynomial(coeffs.iter().map(|c| c.conj()).collect())
            }
            other => other.clone(),
        }
    }

    /// Parse `one`, `poly:c0,c1,...` or `indicator:a,b`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "one" {
            return Ok(TestFunction::One);
        }
        if let Some(rest) = s.strip_prefix("poly:") {
            let coeffs = rest
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map(|x| Complex64::new(x, 0.0))
                        .map_err(|_| Error::Parse(format!("bad coefficient '{c}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            if coeffs.is_empty() {
                return Err(Error::Parse("poly: needs coefficients".into()));
            }
            return Ok(TestFunction::Polynomial(coeffs));
        }
        if let Some(rest) = s.strip_prefix("indicator:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::Parse("indicator: wants two bounds".into()));
            }
            let lo: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad bound '{}'", parts[0])))?;
            let hi: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad bound '{}'", parts[1])))?;
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Parse("indicator bounds must satisfy a < b".into()));
            }
            return Ok(TestFunction::Indicator(lo, hi));
        }
        Err(Error::Parse(format!("unknown test function '{s}'")))
    }

    /// Polynomial coefficients when the oracle can apply the symbol by
    /// repeated sparse products.
    fn as_polynomial(&self) -> Option<Vec<Complex64>> {
        match self {
            TestFunction::One => Some(vec![Complex64::new(1.0, 0.0)]),
            TestFunction::Polynomial(c) => Some(c.clone()),
            _ => None,
        }
    }
}

/// Finitely supported vector on the tree.
#[derive(Clone, Debug, Default)]
pub struct FiniteVector {
    entries: Vec<(VertexId, Complex64)>,
}

impl FiniteVector {
    pub fn new(mut entries: Vec<(VertexId, Complex64)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        entries.retain(|(_, c)| c.norm() != 0.0);
        FiniteVector { entries }
    }

    pub fn delta(v: VertexId) -> Self {
        FiniteVector {
            entries: vec![(v, Complex64::new(1.0, 0.0))],
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&VertexId, Complex64)> {
        self.entries.iter().map(|(v, c)| (v, *c))
    }

    pub fn get(&self, v: &VertexId) -> Complex64 {
        self.entries
            .iter()
            .find(|(u, _)| u == v)
            .map(|(_, c)| *c)
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn max_depth(&self) -> u32 {
        self.entries.iter().map(|(v, _)| v.depth()).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Finitely supported kernel `K(w, v)`, applied as `(Kψ)(w) = Σ_v K(w,v)ψ(v)`.
#[derive(Clone, Debug, Default)]
pub struct KernelOperator {
    entries: Vec<(VertexId, VertexId, Complex64)>,
}

impl KernelOperator {
    pub fn new(entries: Vec<(VertexId, VertexId, Complex64)>) -> Self {
        KernelOperator { entries }
    }

    pub fn rank_one(w: VertexId, v: VertexId) -> Self {
        KernelOperator {
            entries: vec![(w, v, Complex64::new(1.0, 0.0))],
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&VertexId, &VertexId, Complex64)> {
        self.entries.iter().map(|(w, v, c)| (w, v, *c))
    }

    pub fn max_depth(&self) -> u32 {
        self.entries
            .iter()
            .map(|(w, v, _)| w.depth().max(v.depth()))
            .max()
            .unwrap_or(0)
    }
}

/// `f̂_ξ(E) = Σ_w conj(P_{E,ξ}(w)) f(w)`.
pub fn fourier_coeff(
    model: &TreeModel,
    energy: f64,
    xi: &RayAddress,
    f: &FiniteVector,
) -> Result<Complex64> {
    let field = compute_zeta_field(model, SpectralParameter::boundary(energy)?)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, c) in f.entries() {
        acc += poisson_eval(model, &field, xi, w)?.value.conj() * c;
    }
    Ok(acc)
}

/// `F(H)(v,w)` computed along both routes at matched quadrature: the
/// energy-density form `∫ F Ψ_{E,v}(w) dE` (the `value`) and the boundary
/// form `∫∫ F P(v) conj(P(w)) dν_E dE`.
#[derive(Clone, Debug)]
pub struct TwoRouteEntry {
    pub value: Complex64,
    pub boundary_value: Complex64,
    pub discrepancy: f64,
    pub depth: u32,
}

pub fn kernel_entry(
    model: &TreeModel,
    f: &TestFunction,
    v: &VertexId,
    w: &VertexId,
    window: &EnergyWindow,
) -> Result<TwoRouteEntry> {
    let depth = v.depth().max(w.depth()) + 1;
    let values = window.integrate(f, 2, |energy| {
        let field = compute_zeta_field(model, SpectralParameter::boundary(energy)?)?;
        let fe = f.eval(energy);
        let density = psi_with_field(model, v, w, &field)?;
        let mut ev = BoundaryEvaluator::new(model, &field);
        let mut boundary = Complex64::new(0.0, 0.0);
        for s in model.shell(depth)? {
            let nu = ev.nu(&s)?;
            boundary += ev.poisson(&s, v)? * ev.poisson(&s, w)?.conj() * nu;
        }
        Ok(vec![fe * density, fe * boundary])
    })?;
    Ok(TwoRouteEntry {
        value: values[0],
        boundary_value: values[1],
        discrepancy: (values[0] - values[1]).norm(),
        depth,
    })
}

/// `[F(H)f](v)` through the boundary Fourier coefficients, at the minimal
/// cylinder depth.
pub fn apply_function(
    model: &TreeModel,
    f: &TestFunction,
    vector: &FiniteVector,
    v: &VertexId,
    window: &EnergyWindow,
) -> Result<Complex64> {
    let depth = v.depth().max(vector.max_depth()) + 1;
    apply_function_at_depth(model, f, vector, v, window, depth)
}

pub fn apply_function_at_depth(
    model: &TreeModel,
    f: &TestFunction,
    vector: &FiniteVector,
    v: &VertexId,
    window: &EnergyWindow,
    depth: u32,
) -> Result<Complex64> {
    if depth <= v.depth().max(vector.max_depth()) {
        return Err(Error::DepthRange {
            depth,
            reason: "cylinders must be deeper than the support".into(),
        });
    }
    let values = window.integrate(f, 1, |energy| {
        let field = compute_zeta_field(model, SpectralParameter::boundary(energy)?)?;
        let fe = f.eval(energy);
        let mut ev = BoundaryEvaluator::new(model, &field);
        let mut acc = Complex64::new(0.0, 0.0);
        for s in model.shell(depth)? {
            let nu = ev.nu(&s)?;
            let mut coeff = Complex64::new(0.0, 0.0);
            for (w, c) in vector.entries() {
                coeff += ev.poisson(&s, w)?.conj() * c;
            }
            acc += ev.poisson(&s, v)? * coeff * nu;
        }
        Ok(vec![fe * acc])
    })?;
    Ok(values[0])
}

/// `tr[F(H) K] = ∫∫ F(E) ⟨P_{E,ξ}, K P_{E,ξ}⟩ dν_E dE`.
pub fn trace_functional(
    model: &TreeModel,
    f: &TestFunction,
    kernel: &KernelOperator,
    window: &EnergyWindow,
) -> Result<Complex64> {
    let depth = kernel.max_depth() + 1;
    let values = window.integrate(f, 1, |energy| {
        let field = compute_zeta_field(model, SpectralParameter::boundary(energy)?)?;
        let fe = f.eval(energy);
        let mut ev = BoundaryEvaluator::new(model, &field);
        let mut acc = Complex64::new(0.0, 0.0);
        for s in model.shell(depth)? {
            let nu = ev.nu(&s)?;
            let mut pairing = Complex64::new(0.0, 0.0);
            for (w, v, c) in kernel.entries() {
                pairing += ev.poisson(&s, w)?.conj() * c * ev.poisson(&s, v)?;
            }
            acc += pairing * nu;
        }
        Ok(vec![fe * acc])
    })?;
    Ok(values[0])
}

#[derive(Clone, Debug)]
pub struct PlancherelReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub panels: usize,
    pub nodes: usize,
    pub depth: u32,
}

impl fmt::Display for PlancherelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lhs = {:+.12e}{:+.12e}i", self.lhs.re, self.lhs.im)?;
        writeln!(f, "rhs = {:+.12e}{:+.12e}i", self.rhs.re, self.rhs.im)?;
        writeln!(f, "abs_err = {:.3e}", self.abs_err)?;
        writeln!(f, "rel_err = {:.3e}", self.rel_err)?;
        write!(
            f,
            "quadrature = {} panels x {} nodes, depth = {}",
            self.panels, self.nodes, self.depth
        )
    }
}

/// Two-sided check of `⟨f, F(H) g⟩`: brute-force truncation on the left,
/// energy-and-boundary quadrature on the right.
pub fn plancherel_check(
    model: &TreeModel,
    f: &TestFunction,
    left: &FiniteVector,
    right: &FiniteVector,
    window: &EnergyWindow,
) -> Result<PlancherelReport> {
    plancherel_check_with_radius(model, f, left, right, window, DEFAULT_ORACLE_RADIUS)
}

pub fn plancherel_check_with_radius(
    model: &TreeModel,
    f: &TestFunction,
    left: &FiniteVector,
    right: &FiniteVector,
    window: &EnergyWindow,
    oracle_radius: u32,
) -> Result<PlancherelReport> {
    let trunc = DenseTruncation::new(model, oracle_radius)?;
    let lhs = match f.as_polynomial() {
        Some(coeffs) => trunc.polynomial_pairing(&coeffs, left, right)?,
        None => trunc.dense_function_pairing(f, left, right)?,
    };

    let depth = left.max_depth().max(right.max_depth()) + 1;
    let values = window.integrate(f, 1, |energy| {
        let field = compute_zeta_field(model, SpectralParameter::boundary(energy)?)?;
        let fe = f.eval(energy);
        let mut ev = BoundaryEvaluator::new(model, &field);
        let mut acc = Complex64::new(0.0, 0.0);
        for s in model.shell(depth)? {
            let nu = ev.nu(&s)?;
            let mut fc = Complex64::new(0.0, 0.0);
            for (w, c) in left.entries() {
                fc += ev.poisson(&s, w)?.conj() * c;
            }
            let mut gc = Complex64::new(0.0, 0.0);
            for (w, c) in right.entries() {
                gc += ev.poisson(&s, w)?.conj() * c;
            }
            acc += fc.conj() * gc * nu;
        }
        Ok(vec![fe * acc])
    })?;
    let rhs = values[0];
    let abs_err = (lhs - rhs).norm();
    let rel_err = abs_err / lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
    Ok(PlancherelReport {
        lhs,
        rhs,
        abs_err,
        rel_err,
        panels: window.panels(),
        nodes: window.nodes(),
        depth,
    })
}

/// Convenience wrapper for the spectral-density field at a boundary energy.
pub fn boundary_field(model: &TreeModel, energy: f64) -> Result<ZetaField> {
    compute_zeta_field(model, SpectralParameter::boundary(energy)?)
}
