use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stream::{SeededStream, StreamRng};

/// Affine patch `{offset + B·u : u ∈ [0,1]^d}` in `R^D` with feasibility
/// tolerance `epsilon`, plus the off-manifold emission knobs used by
/// [`decode_affine`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineManifoldSpec {
    /// Orthonormal columns, each of length `D`.
    basis: Vec<Vec<f64>>,
    offset: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub off_scale: f64,
}

const ORTHONORMAL_TOL: f64 = 1e-10;

impl AffineManifoldSpec {
    pub fn new(
        basis: Vec<Vec<f64>>,
        offset: Vec<f64>,
        epsilon: f64,
        delta: f64,
        off_scale: f64,
    ) -> Result<Self> {
        let dim = offset.len();
        let d = basis.len();
        if d == 0 || d >= dim {
            return Err(Error::InvalidArgument(format!(
                "intrinsic dimension {d} must satisfy 1 <= d < D = {dim}"
            )));
        }
        for col in &basis {
            check_dim("manifold basis column", dim, col.len())?;
        }
        for i in 0..d {
            for j in 0..d {
                let g = dot(&basis[i], &basis[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "basis is not orthonormal: gram[{i}][{j}] = {g}"
                    )));
                }
            }
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!("delta must lie in [0, 1], got {delta}")));
        }
        if !(off_scale > 1.0 && off_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "off_scale must be > 1 so off-manifold points are infeasible, got {off_scale}"
            )));
        }
        Ok(Self {
            basis,
            offset,
            epsilon,
            delta,
            off_scale,
        })
    }

    /// Unit-length segment from `start` along `direction` (normalized here).
    pub fn segment(
        start: Vec<f64>,
        direction: &[f64],
        epsilon: f64,
        delta: f64,
        off_scale: f64,
    ) -> Result<Self> {
        let norm = dot(direction, direction).sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("segment direction must be non-zero".into()));
        }
        let col = direction.iter().map(|v| v / norm).collect();
        Self::new(vec![col], start, epsilon, delta, off_scale)
    }

    /// Unit-length segment along the main diagonal of `[0,1]^D`, centered on
    /// the box center.
    pub fn centered_diagonal_segment(
        ambient_dim: usize,
        epsilon: f64,
        delta: f64,
        off_scale: f64,
    ) -> Result<Self> {
        let c = 0.5 / (ambient_dim as f64).sqrt();
        Self::segment(
            vec![0.5 - c; ambient_dim],
            &vec![1.0; ambient_dim],
            epsilon,
            delta,
            off_scale,
        )
    }

    pub fn ambient_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.basis.clone(), self.offset.clone(), epsilon, self.delta, self.off_scale)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.basis.clone(), self.offset.clone(), self.epsilon, delta, self.off_scale)
    }

    /// `offset + B·u`.
    pub fn point(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.offset.clone();
        for (col, uj) in self.basis.iter().zip(u) {
            x.iter_mut().zip(col).for_each(|(xi, bi)| *xi += uj * bi);
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Decode a latent into the ambient space: squash through the logistic into
/// the parameter box and map onto the patch. With probability `delta` the
/// point is pushed `off_scale·epsilon` away along a random direction
/// orthogonal to the patch, and reported as off-manifold.
pub fn decode_affine(
    z: &[f64],
    spec: &AffineManifoldSpec,
    stream: &SeededStream,
) -> Result<(Vec<f64>, bool)> {
    decode_affine_with(z, spec, &mut stream.rng())
}

pub fn decode_affine_with(
    z: &[f64],
    spec: &AffineManifoldSpec,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, bool)> {
    check_dim("decode_affine latent", spec.intrinsic_dim(), z.len())?;
    let u: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
    let mut x = spec.point(&u);
    if !rng.bernoulli(spec.delta) {
        return Ok((x, true));
    }
    let dir = loop {
        let mut g = rng.standard_normal_vec(spec.ambient_dim());
        for col in &spec.basis {
            let c = dot(&g, col);
            g.iter_mut().zip(col).for_each(|(gi, bi)| *gi -= c * bi);
        }
        let norm = dot(&g, &g).sqrt();
        if norm > 1e-8 {
            g.iter_mut().for_each(|v| *v /= norm);
            break g;
        }
    };
    let step = spec.off_scale * spec.epsilon;
    x.iter_mut().zip(&dir).for_each(|(xi, di)| *xi += step * di);
    Ok((x, false))
}

/// Distance from `x` to the patch via clamped projection. Exact when the
/// unconstrained projection falls inside the parameter box (always for
/// `d = 1`); an upper bound otherwise.
pub fn manifold_distance(x: &[f64], spec: &AffineManifoldSpec) -> Result<f64> {
    check_dim("manifold_distance point", spec.ambient_dim(), x.len())?;
    let mut r: Vec<f64> = x.iter().zip(&spec.offset).map(|(a, b)| a - b).collect();
    let coords: Vec<f64> = spec
        .basis
        .iter()
        .map(|col| dot(&r, col).clamp(0.0, 1.0))
        .collect();
    for (col, u) in spec.basis.iter().zip(&coords) {
        r.iter_mut().zip(col).for_each(|(ri, bi)| *ri -= u * bi);
    }
    Ok(dot(&r, &r).sqrt())
}

/// Membership in the closed `epsilon`-neighbourhood of the patch.
pub fn is_feasible(x: &[f64], spec: &AffineManifoldSpec) -> Result<bool> {
    Ok(manifold_distance(x, spec)? <= spec.epsilon)
}
