//! Brute-force verification backend: materialize the operator on a finite
//! ball (free boundary, rows of boundary vertices simply lack outward
//! neighbors) and compute resolvents by direct linear solves and functional
//! calculus by full symmetric eigendecomposition. No recursions are shared
//! with the ζ engine, so agreement is meaningful.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{FiniteVector, TestFunction};
use crate::tree::{DirectedEdge, TreeModel, VertexId};

/// Largest vertex count for dense factorizations; polynomial application by
/// repeated sparse products has no such bound.
pub const DENSE_LIMIT: usize = 3000;

#[derive(Clone, Debug)]
pub struct DenseTruncation {
    radius: u32,
    ids: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    diag: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl DenseTruncation {
    /// Restrict the model to the ball of the given radius around the origin,
    /// unfolding the tail.
    pub fn new(model: &TreeModel, radius: u32) -> Result<Self> {
        let ids = model.ball(radius)?;
        let mut index = HashMap::with_capacity(ids.len());
        for (i, v) in ids.iter().enumerate() {
            index.insert(v.clone(), i);
        }
        let mut diag = Vec::with_capacity(ids.len());
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
        for (i, v) in ids.iter().enumerate() {
            diag.push(model.diagonal(v)?);
            if let Some(p) = v.parent() {
                let w = model.edge_weight(&p, v)?;
                let pi = index[&p];
                adj[i].push((pi, w));
                adj[pi].push((i, w));
            }
        }
        Ok(DenseTruncation {
            radius,
            ids,
            index,
            diag,
            adj,
        })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn vertex_count(&self) -> usize {
        self.ids.len()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.ids
    }

    pub fn contains(&self, v: &VertexId) -> bool {
        self.index.contains_key(v)
    }

    fn require(&self, v: &VertexId) -> Result<usize> {
        self.index
            .get(v)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(v.to_string()))
    }

    fn check_dense(&self, n: usize) -> Result<()> {
        if n > DENSE_LIMIT {
            Err(Error::TruncationTooLarge(n))
        } else {
            Ok(())
        }
    }

    /// The operator as a dense real symmetric matrix.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        self.check_dense(self.ids.len())?;
        let n = self.ids.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = self.diag[i];
            for &(j, w) in &self.adj[i] {
                h[(i, j)] = w;
            }
        }
        Ok(h)
    }

    fn shifted(&self, gamma: Complex64) -> Result<DMatrix<Complex64>> {
        self.check_dense(self.ids.len())?;
        let n = self.ids.len();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(self.diag[i], 0.0) - gamma;
            for &(j, w) in &self.adj[i] {
                m[(i, j)] = Complex64::new(w, 0.0);
            }
        }
        Ok(m)
    }

    /// `⟨δ_v, (H-γ)⁻¹ δ_w⟩` by a partial-pivoted direct solve.
    pub fn dense_resolvent_entry(
        &self,
        v: &VertexId,
        w: &VertexId,
        gamma: Complex64,
    ) -> Result<Complex64> {
        if gamma.im == 0.0 {
            return Err(Error::InadmissibleParameter(
                "dense resolvent needs Im γ ≠ 0".into(),
            ));
        }
        let iv = self.require(v)?;
        let iw = self.require(w)?;
        let lu = self.shifted(gamma)?.lu();
        let mut rhs = DVector::<Complex64>::zeros(self.ids.len());
        rhs[iw] = Complex64::new(1.0, 0.0);
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::NearPole("singular dense system".into()))?;
        Ok(x[iv])
    }

    /// The full inverse `(H-γ)⁻¹`, row/column order matching `vertices()`.
    pub fn dense_resolvent_matrix(&self, gamma: Complex64) -> Result<DMatrix<Complex64>> {
        if gamma.im == 0.0 {
            return Err(Error::InadmissibleParameter(
                "dense resolvent needs Im γ ≠ 0".into(),
            ));
        }
        self.shifted(gamma)?
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::NearPole("singular dense system".into()))
    }

    /// Eigenvalues and eigenvectors of the dense symmetric matrix.
    pub fn eigensystem(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let eig = SymmetricEigen::new(self.matrix()?);
        Ok((eig.eigenvalues, eig.eigenvectors))
    }

    /// `F(H)(v,w) = Σ_k F(λ_k) φ_k(v) φ_k(w)` over the truncation's spectrum.
    pub fn dense_function_entry(
        &self,
        f: &TestFunction,
        v: &VertexId,
        w: &VertexId,
    ) -> Result<Complex64> {
        let iv = self.require(v)?;
        let iw = self.require(w)?;
        let (vals, vecs) = self.eigensystem()?;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..vals.len() {
            acc += f.eval(vals[k]) * vecs[(iv, k)] * vecs[(iw, k)];
        }
        Ok(acc)
    }

    /// `⟨f, F(H) g⟩` through the eigendecomposition.
    pub fn dense_function_pairing(
        &self,
        f: &TestFunction,
        left: &FiniteVector,
        right: &FiniteVector,
    ) -> Result<Complex64> {
        let (vals, vecs) = self.eigensystem()?;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..vals.len() {
            let mut lk = Complex64::new(0.0, 0.0);
            for (v, c) in left.entries() {
                lk += c.conj() * vecs[(self.require(v)?, k)];
            }
            let mut rk = Complex64::new(0.0, 0.0);
            for (v, c) in right.entries() {
                rk += c * vecs[(self.require(v)?, k)];
            }
            acc += f.eval(vals[k]) * lk * rk;
        }
        Ok(acc)
    }

    /// Resolvent entry of the operator restricted to the component of
    /// `remove.from` after deleting the branch through `remove.to`.
    pub fn restricted_dense_resolvent(
        &self,
        remove: &DirectedEdge,
        v: &VertexId,
        w: &VertexId,
        gamma: Complex64,
    ) -> Result<Complex64> {
        if gamma.im == 0.0 {
            return Err(Error::InadmissibleParameter(
                "dense resolvent needs Im γ ≠ 0".into(),
            ));
        }
        let a = self.require(&remove.from)?;
        let b = self.require(&remove.to)?;
        // component of `a` without crossing the edge a ~ b
        let mut keep = vec![false; self.ids.len()];
        let mut stack = vec![a];
        keep[a] = true;
        while let Some(x) = stack.pop() {
            for &(y, _) in &self.adj[x] {
                if (x == a && y == b) || (x == b && y == a) || keep[y] {
                    continue;
                }
                keep[y] = true;
                stack.push(y);
            }
        }
        let iv = self.require(v)?;
        let iw = self.require(w)?;
        if !keep[iv] || !keep[iw] {
            return Err(Error::SeparatedByCut(v.to_string(), w.to_string()));
        }
        let rows: Vec<usize> = (0..self.ids.len()).filter(|&i| keep[i]).collect();
        let pos: HashMap<usize, usize> = rows.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        self.check_dense(rows.len())?;
        let mut m = DMatrix::<Complex64>::zeros(rows.len(), rows.len());
        for (k, &i) in rows.iter().enumerate() {
            m[(k, k)] = Complex64::new(self.diag[i], 0.0) - gamma;
            for &(j, wt) in &self.adj[i] {
                if let Some(&l) = pos.get(&j) {
                    m[(k, l)] = Complex64::new(wt, 0.0);
                }
            }
        }
        let lu = m.lu();
        let mut rhs = DVector::<Complex64>::zeros(rows.len());
        rhs[pos[&iw]] = Complex64::new(1.0, 0.0);
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::NearPole("singular restricted system".into()))?;
        Ok(x[pos[&iv]])
    }

    /// One sparse application of `H`.
    pub fn apply_h(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        for i in 0..x.len() {
            let mut acc = self.diag[i] * x[i];
            for &(j, w) in &self.adj[i] {
                acc += w * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// `p(H) f` by Horner's scheme with sparse products; exact for walks that
    /// stay inside the ball, i.e. whenever
    /// `deg p + depth(supp f) ≤ radius`.
    pub fn polynomial_apply(&self, coeffs: &[Complex64], f: &FiniteVector) -> Result<Vec<Complex64>> {
        let n = self.ids.len();
        let mut base = vec![Complex64::new(0.0, 0.0); n];
        for (v, c) in f.entries() {
            base[self.require(v)?] += c;
        }
        if coeffs.is_empty() {
            return Ok(vec![Complex64::new(0.0, 0.0); n]);
        }
        let mut acc: Vec<Complex64> = base.iter().map(|&b| coeffs[coeffs.len() - 1] * b).collect();
        for &c in coeffs[..coeffs.len() - 1].iter().rev() {
            let hx = self.apply_h(&acc);
            for i in 0..n {
                acc[i] = hx[i] + c * base[i];
            }
        }
        Ok(acc)
    }

    /// `⟨f, p(H) g⟩` via sparse polynomial application.
    pub fn polynomial_pairing(
        &self,
        coeffs: &[Complex64],
        f: &FiniteVector,
        g: &FiniteVector,
    ) -> Result<Complex64> {
        let pg = self.polynomial_apply(coeffs, g)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (v, c) in f.entries() {
            acc += c.conj() * pg[self.require(v)?];
        }
        Ok(acc)
    }
}
