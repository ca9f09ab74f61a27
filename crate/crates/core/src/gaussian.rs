//! Diagonal Gaussian search distributions and their elite-refit / smoothing
//! updates.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stream::SeededStream;

/// Mean and per-dimension standard deviation with `std >= 0`.
///
/// This is what an elite refit produces before the variance floor is applied;
/// [`DiagonalGaussian`] is the floored, strictly positive form used for sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Moments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Multiply every std component by `factor`.
    pub fn scale_std(mut self, factor: f64) -> Self {
        self.std.iter_mut().for_each(|s| *s *= factor);
        self
    }

    /// Clamp std components from below at `sigma_min` and validate.
    pub fn floored(self, sigma_min: f64) -> Result<DiagonalGaussian> {
        if !(sigma_min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma_min must be > 0, got {sigma_min}"
            )));
        }
        let std = self.std.into_iter().map(|s| s.max(sigma_min)).collect();
        DiagonalGaussian::new(self.mean, std)
    }
}

/// N(mean, diag(std²)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidDistribution("dimension must be >= 1".into()));
        }
        check_dim("DiagonalGaussian std", mean.len(), std.len())?;
        if let Some(i) = mean.iter().position(|m| !m.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "mean[{i}] = {} is not finite",
                mean[i]
            )));
        }
        if let Some(i) = std.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "std[{i}] = {} must be finite and > 0",
                std[i]
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn mean_std(&self) -> f64 {
        self.std.iter().sum::<f64>() / self.std.len() as f64
    }

    pub fn moments(&self) -> Moments {
        Moments {
            mean: self.mean.clone(),
            std: self.std.clone(),
        }
    }

    /// Reparameterized draw `mean + std ⊙ eps`.
    pub fn transform(&self, eps: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .zip(eps)
            .map(|((m, s), e)| m + s * e)
            .collect()
    }
}

/// `count` draws from `dist`, consuming `stream` from its start.
pub fn gaussian_sample(
    dist: &DiagonalGaussian,
    stream: &SeededStream,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| dist.transform(&rng.standard_normal_vec(dist.dim())))
        .collect())
}

/// Per-dimension mean and population standard deviation (divides by the
/// sample count). No floor is applied.
pub fn gaussian_fit<V: AsRef<[f64]>>(samples: &[V]) -> Result<Moments> {
    let first = samples.first().ok_or(Error::Empty("gaussian_fit samples"))?;
    let dim = first.as_ref().len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        let s = s.as_ref();
        check_dim("gaussian_fit sample", dim, s.len())?;
        mean.iter_mut().zip(s).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((v, x), m) in var.iter_mut().zip(s.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(Moments { mean, std })
}

/// Exponential smoothing: `mean = α·current + (1−α)·previous`,
/// `std = β·current + (1−β)·previous`, componentwise.
pub fn gaussian_blend(
    current: &Moments,
    previous: &Moments,
    alpha: f64,
    beta: f64,
) -> Result<Moments> {
    for (name, w) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidArgument(format!(
                "{name} must lie in [0, 1], got {w}"
            )));
        }
    }
    check_dim("gaussian_blend mean", current.mean.len(), previous.mean.len())?;
    check_dim("gaussian_blend std", current.std.len(), previous.std.len())?;
    let mix = |w: f64, a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| w * x + (1.0 - w) * y).collect()
    };
    Ok(Moments {
        mean: mix(alpha, &current.mean, &previous.mean),
        std: mix(beta, &current.std, &previous.std),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sampling_is_deterministic() {
        let d = DiagonalGaussian::standard(2).unwrap();
        let s = SeededStream::new(11).derive("x");
        let a = gaussian_sample(&d, &s, 3).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|v| v.len() == 2));
        assert_eq!(a, gaussian_sample(&d, &s, 3).unwrap());
    }

    #[test]
    fn mean_shift_is_affine() {
        let s = SeededStream::new(5);
        let zero = DiagonalGaussian::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let five = DiagonalGaussian::new(vec![5.0, 5.0], vec![1.0, 1.0]).unwrap();
        let a = gaussian_sample(&zero, &s, 4).unwrap();
        let b = gaussian_sample(&five, &s, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.iter().zip(y) {
                assert!((q - p - 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_sample_moments() {
        let d = DiagonalGaussian::standard(2).unwrap();
        let xs = gaussian_sample(&d, &SeededStream::new(2024), 100_000).unwrap();
        let fit = gaussian_fit(&xs).unwrap();
        for k in 0..2 {
            assert!(fit.mean[k].abs() < 0.02, "mean {}", fit.mean[k]);
            assert!((fit.std[k] - 1.0).abs() < 0.02, "std {}", fit.std[k]);
        }
    }

    #[test]
    fn rejects_bad_std() {
        assert!(DiagonalGaussian::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagonalGaussian::new(vec![0.0], vec![-1.0]).is_err());
        assert!(DiagonalGaussian::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(DiagonalGaussian::new(vec![], vec![]).is_err());
        assert!(DiagonalGaussian::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn fit_two_points() {
        let m = gaussian_fit(&[vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(m.mean, vec![2.0, 2.0]);
        assert_eq!(m.std, vec![1.0, 1.0]);
    }

    #[test]
    fn fit_degenerate() {
        let m = gaussian_fit(&[vec![4.0, -1.0]]).unwrap();
        assert_eq!(m.mean, vec![4.0, -1.0]);
        assert_eq!(m.std, vec![0.0, 0.0]);
        let m = gaussian_fit(&vec![vec![2.5; 3]; 5]).unwrap();
        assert_eq!(m.mean, vec![2.5; 3]);
        assert_eq!(m.std, vec![0.0; 3]);
        let g = m.floored(1e-3).unwrap();
        assert_eq!(g.std(), &[1e-3; 3]);
    }

    #[test]
    fn fit_errors() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(gaussian_fit(&empty), Err(Error::Empty(_))));
        assert!(matches!(
            gaussian_fit(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn blend_limits() {
        let cur = Moments { mean: vec![2.0], std: vec![0.5] };
        let prev = Moments { mean: vec![0.0], std: vec![1.0] };
        assert_eq!(gaussian_blend(&cur, &prev, 1.0, 1.0).unwrap(), cur);
        assert_eq!(gaussian_blend(&cur, &prev, 0.0, 0.0).unwrap(), prev);
        let half = gaussian_blend(&cur, &prev, 0.5, 0.5).unwrap();
        assert_eq!(half.mean, vec![1.0]);
        assert_eq!(half.std, vec![0.75]);
        assert!(gaussian_blend(&cur, &prev, 1.5, 0.5).is_err());
        assert!(gaussian_blend(&cur, &prev, 0.5, -0.1).is_err());
        let other = Moments { mean: vec![0.0, 0.0], std: vec![1.0, 1.0] };
        assert!(gaussian_blend(&cur, &other, 0.5, 0.5).is_err());
    }

    fn sample_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4).prop_flat_map(|dim| {
            prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dim), 1..12)
        })
    }

    proptest! {
        #[test]
        fn fit_then_identity_blend_is_idempotent(xs in sample_sets()) {
            let m = gaussian_fit(&xs).unwrap();
            prop_assert_eq!(gaussian_blend(&m, &m, 1.0, 1.0).unwrap(), m);
        }

        #[test]
        fn fit_is_permutation_invariant(xs in sample_sets(), seed in any::<u64>()) {
            let mut ys = xs.clone();
            let mut rng = SeededStream::new(seed).rng();
            for i in (1..ys.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                ys.swap(i, j);
            }
            let a = gaussian_fit(&xs).unwrap();
            let b = gaussian_fit(&ys).unwrap();
            for (p, q) in a.mean.iter().zip(&b.mean) { prop_assert!((p - q).abs() < 1e-9); }
            for (p, q) in a.std.iter().zip(&b.std) { prop_assert!((p - q).abs() < 1e-9); }
        }

        #[test]
        fn fit_is_shift_equivariant(xs in sample_sets(), shift in -20.0f64..20.0) {
            let ys: Vec<Vec<f64>> = xs.iter().map(|v| v.iter().map(|x| x + shift).collect()).collect();
            let a = gaussian_fit(&xs).unwrap();
            let b = gaussian_fit(&ys).unwrap();
            for (p, q) in a.mean.iter().zip(&b.mean) { prop_assert!((p + shift - q).abs() < 1e-9); }
            for (p, q) in a.std.iter().zip(&b.std) { prop_assert!((p - q).abs() < 1e-7); }
        }
    }
}
