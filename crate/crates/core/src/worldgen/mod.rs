//! Trajectory spaces and the two latent trajectory generators: an analytic
//! affine-manifold generator for the geometry experiments and a control-knot
//! point-mass generator for planning.

mod affine;
mod pointmass;

pub use affine::{decode_affine, decode_affine_with, is_feasible, manifold_distance, AffineManifoldSpec};
pub use pointmass::{decode_knots, render, rollout, Circle, PointMassWorld, Workspace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::StreamRng;

/// Bounded box `X = S^H × A^H` with per-coordinate bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpace {
    pub horizon: usize,
    pub dim_state: usize,
    pub dim_action: usize,
    bounds: Vec<(f64, f64)>,
}

impl TrajectorySpace {
    pub fn new(
        horizon: usize,
        dim_state: usize,
        dim_action: usize,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if horizon == 0 || dim_state + dim_action == 0 {
            return Err(Error::InvalidArgument(
                "trajectory space needs horizon >= 1 and a non-empty step".into(),
            ));
        }
        let d = horizon * (dim_state + dim_action);
        crate::error::check_dim("TrajectorySpace bounds", d, bounds.len())?;
        if let Some((i, _)) = bounds
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::InvalidArgument(format!(
                "bound {i} is not a finite non-empty interval"
            )));
        }
        Ok(Self {
            horizon,
            dim_state,
            dim_action,
            bounds,
        })
    }

    /// `[0, 1]^D`.
    pub fn unit_box(horizon: usize, dim_state: usize, dim_action: usize) -> Result<Self> {
        let d = horizon * (dim_state + dim_action);
        Self::new(horizon, dim_state, dim_action, vec![(0.0, 1.0); d])
    }

    /// `D = H·(dim S + dim A)`.
    pub fn ambient_dim(&self) -> usize {
        self.horizon * (self.dim_state + self.dim_action)
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Lebesgue measure of the box.
    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn sample_uniform_into(&self, rng: &mut StreamRng, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bounds.iter().map(|(lo, hi)| rng.uniform_in(*lo, *hi)));
    }
}

/// Grayscale raster, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    size: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn filled(size: usize, value: f64) -> Self {
        Self {
            size,
            pixels: vec![value; size * size],
        }
    }

    pub fn from_pixels(size: usize, pixels: Vec<f64>) -> Result<Self> {
        crate::error::check_dim("Frame pixels", size * size, pixels.len())?;
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.size + col] = value;
    }
}

/// H-step rollout. `states[i]` is the state reached after applying `actions[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub frames: Option<Vec<Frame>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }
}

/// First `chunk_len` rows of the action sequence.
pub fn extract_action_chunk(traj: &Trajectory, chunk_len: usize) -> Result<Vec<Vec<f64>>> {
    if chunk_len == 0 || chunk_len > traj.horizon() {
        return Err(Error::InvalidArgument(format!(
            "chunk length {chunk_len} must lie in 1..={}",
            traj.horizon()
        )));
    }
    Ok(traj.actions[..chunk_len].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(h: usize) -> Trajectory {
        Trajectory {
            states: vec![vec![0.0; 4]; h],
            actions: (0..h).map(|i| vec![i as f64, -(i as f64)]).collect(),
            frames: None,
        }
    }

    #[test]
    fn chunk_extraction() {
        let t = traj(5);
        assert_eq!(extract_action_chunk(&t, 1).unwrap(), vec![vec![0.0, -0.0]]);
        assert_eq!(extract_action_chunk(&t, 5).unwrap(), t.actions);
        assert!(extract_action_chunk(&t, 6).is_err());
        assert!(extract_action_chunk(&t, 0).is_err());
    }

    #[test]
    fn space_dimensions() {
        let s = TrajectorySpace::unit_box(4, 1, 1).unwrap();
        assert_eq!(s.ambient_dim(), 8);
        assert_eq!(s.volume(), 1.0);
        assert!(TrajectorySpace::new(2, 1, 1, vec![(0.0, 1.0); 3]).is_err());
        assert!(TrajectorySpace::new(1, 1, 0, vec![(1.0, 1.0)]).is_err());
    }
}
