//! Gaussian messages in moment and canonical (information) form.
//!
//! Fusion of two messages is a plain addition of precisions and transformed
//! means, so most of the filtering code stays in canonical form and only
//! converts to moments when a mean or covariance is actually needed.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Gaussian density parameterized by mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGaussian {
    pub mean: Vector,
    pub cov: Matrix,
}

/// Gaussian (possibly improper) parameterized by precision `W` and `w = W η`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGaussian {
    pub precision: Matrix,
    pub transformed_mean: Vector,
}

/// Normalizing constant and Mahalanobis term of a Gaussian density,
/// kept apart so the caller can combine many of them in the log domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityParts {
    /// `ln((2π)^(-D/2) det(C)^(-1/2))`
    pub log_normalizer: f64,
    /// `(x - η)ᵀ C⁻¹ (x - η)`
    pub quad: f64,
}

impl DensityParts {
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn log_value(&self) -> f64 {
        self.log_normalizer - 0.5 * self.quad
    }

    pub fn value(&self) -> f64 {
        self.log_value().exp()
    }
}

impl MomentGaussian {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: cov.nrows() });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Zero-covariance density at `mean`.
    pub fn point_mass(mean: Vector) -> Self {
        let d = mean.len();
        Self { mean, cov: Matrix::zeros(d, d) }
    }
}

impl CanonicalGaussian {
    pub fn new(precision: Matrix, transformed_mean: Vector) -> Result<Self> {
        let d = transformed_mean.len();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: precision.nrows() });
        }
        Ok(Self { precision, transformed_mean })
    }

    /// The flat (improper, zero-information) message over `d` dimensions.
    pub fn flat(d: usize) -> Self {
        Self { precision: Matrix::zeros(d, d), transformed_mean: Vector::zeros(d) }
    }

    pub fn dim(&self) -> usize {
        self.transformed_mean.len()
    }

    /// Mean of a proper message.
    pub fn mean(&self) -> Result<Vector> {
        Ok(to_moment(self)?.mean)
    }
}

/// Weighted sum of Gaussian components.
#[derive(Debug, Clone, Default)]
pub struct WeightedGaussianMixture {
    pub components: Vec<(f64, MomentGaussian)>,
}

impl WeightedGaussianMixture {
    pub fn new(components: Vec<(f64, MomentGaussian)>) -> Result<Self> {
        if let Some((_, first)) = components.first() {
            let d = first.dim();
            for (_, c) in &components {
                if c.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: c.dim() });
                }
            }
        }
        Ok(Self { components })
    }

    /// Rescales the weights to sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        let s: f64 = self.components.iter().map(|(w, _)| *w).sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        for (w, _) in &mut self.components {
            *w /= s;
        }
        Ok(self)
    }
}

pub fn to_canonical(g: &MomentGaussian) -> Result<CanonicalGaussian> {
    let precision = linalg::spd_inverse(&g.cov)?;
    let transformed_mean = &precision * &g.mean;
    Ok(CanonicalGaussian { precision, transformed_mean })
}

pub fn to_moment(g: &CanonicalGaussian) -> Result<MomentGaussian> {
    let chol = linalg::cholesky(&g.precision).map_err(|_| Error::SingularPrecision)?;
    let mean = chol.solve(&g.transformed_mean);
    let mut cov = chol.inverse();
    linalg::symmetrize(&mut cov);
    Ok(MomentGaussian { mean, cov })
}

/// Product of two messages over the same variable (precision addition).
pub fn product(a: &CanonicalGaussian, b: &CanonicalGaussian) -> Result<CanonicalGaussian> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(CanonicalGaussian {
        precision: &a.precision + &b.precision,
        transformed_mean: &a.transformed_mean + &b.transformed_mean,
    })
}

/// Restriction of a Gaussian to the coordinates in `keep` (in the given order).
pub fn marginalize(g: &MomentGaussian, keep: &[usize]) -> Result<MomentGaussian> {
    let d = g.dim();
    if let Some(&bad) = keep.iter().find(|&&i| i >= d) {
        return Err(Error::IndexOutOfRange { index: bad, dim: d });
    }
    let mean = Vector::from_iterator(keep.len(), keep.iter().map(|&i| g.mean[i]));
    let cov = Matrix::from_fn(keep.len(), keep.len(), |r, c| g.cov[(keep[r], keep[c])]);
    Ok(MomentGaussian { mean, cov })
}

/// Leading block of `len` coordinates starting at `start`.
pub fn block(g: &MomentGaussian, start: usize, len: usize) -> MomentGaussian {
    MomentGaussian {
        mean: g.mean.rows(start, len).into_owned(),
        cov: g.cov.view((start, start), (len, len)).into_owned(),
    }
}

/// Density of `x` split into normalizer and quadratic term.
pub fn log_density(g: &MomentGaussian, x: &Vector) -> Result<DensityParts> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: x.len() });
    }
    let chol = linalg::cholesky(&g.cov)?;
    let logdet = linalg::chol_logdet(&chol);
    let r = x - &g.mean;
    let quad = r.dot(&chol.solve(&r));
    let d = g.dim() as f64;
    Ok(DensityParts { log_normalizer: -0.5 * d * (2.0 * PI).ln() - 0.5 * logdet, quad })
}

/// `∫ N(z; a) N(z; b) dz = N(μa; μb, Ca + Cb)` as density parts.
pub fn gaussian_correlation_parts(a: &MomentGaussian, b: &MomentGaussian) -> Result<DensityParts> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    // elementwise addition commutes exactly and the quadratic form is invariant
    // to negating the residual, so swapping a and b is bit-identical
    let s = MomentGaussian { mean: a.mean.clone(), cov: &a.cov + &b.cov };
    log_density(&s, &b.mean)
}

pub fn gaussian_correlation(a: &MomentGaussian, b: &MomentGaussian) -> Result<f64> {
    Ok(gaussian_correlation_parts(a, b)?.value())
}

/// Moment-matched single Gaussian of a mixture.
///
/// The covariance is symmetrized and clamped to PSD; the second return value
/// reports whether the clamp fired.
pub fn mixture_moments_flagged(m: &WeightedGaussianMixture) -> Result<(MomentGaussian, bool)> {
    let (_, first) = m.components.first().ok_or(Error::EmptyMixture)?;
    if m.components.len() == 1 {
        return Ok((first.clone(), false));
    }
    let d = first.dim();
    let mut mean = Vector::zeros(d);
    for (w, c) in &m.components {
        mean.axpy(*w, &c.mean, 1.0);
    }
    // accumulate centered second moments: numerically kinder than E[xxᵀ] - μμᵀ
    let mut cov = Matrix::zeros(d, d);
    for (w, c) in &m.components {
        let r = &c.mean - &mean;
        cov += (&c.cov + &r * r.transpose()) * *w;
    }
    let clamped = linalg::psd_clamp(&mut cov);
    Ok((MomentGaussian { mean, cov }, clamped))
}

pub fn mixture_moments(m: &WeightedGaussianMixture) -> Result<MomentGaussian> {
    Ok(mixture_moments_flagged(m)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }
    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn canonical_of_identity() {
        let g = MomentGaussian::new(Vector::zeros(2), Matrix::identity(2, 2)).unwrap();
        let c = to_canonical(&g).unwrap();
        assert_eq!(c.precision, Matrix::identity(2, 2));
        assert_eq!(c.transformed_mean, Vector::zeros(2));
    }

    #[test]
    fn canonical_scalar() {
        let c = to_canonical(&MomentGaussian::new(s(3.0), m1(2.0)).unwrap()).unwrap();
        assert_relative_eq!(c.precision[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.transformed_mean[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn canonical_rejects_singular() {
        let g = MomentGaussian::new(Vector::zeros(2), Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0])))
            .unwrap();
        assert!(matches!(to_canonical(&g), Err(Error::SingularCovariance)));
    }

    #[test]
    fn moment_examples() {
        let g = to_moment(&CanonicalGaussian::new(Matrix::identity(2, 2), Vector::from_vec(vec![1.0, 2.0])).unwrap())
            .unwrap();
        assert_eq!(g.mean, Vector::from_vec(vec![1.0, 2.0]));
        let g = to_moment(&CanonicalGaussian::new(m1(4.0), s(2.0)).unwrap()).unwrap();
        assert_relative_eq!(g.mean[0], 0.5);
        assert_relative_eq!(g.cov[(0, 0)], 0.25);
        assert!(matches!(to_moment(&CanonicalGaussian::flat(2)), Err(Error::SingularPrecision)));
    }

    #[test]
    fn product_examples() {
        let b = CanonicalGaussian::new(m1(3.0), s(-1.0)).unwrap();
        assert_eq!(product(&CanonicalGaussian::flat(1), &b).unwrap(), b);
        let a = to_canonical(&MomentGaussian::new(s(0.0), m1(1.0)).unwrap()).unwrap();
        let c = to_canonical(&MomentGaussian::new(s(2.0), m1(1.0)).unwrap()).unwrap();
        let p = product(&a, &c).unwrap();
        assert_eq!(p.precision[(0, 0)], 2.0);
        assert_eq!(p.transformed_mean[0], 2.0);
        let pm = to_moment(&p).unwrap();
        assert_relative_eq!(pm.mean[0], 1.0);
        assert_relative_eq!(pm.cov[(0, 0)], 0.5);
        let aa = product(&a, &a).unwrap();
        assert_eq!(aa.precision[(0, 0)], 2.0);
        assert_eq!(aa.transformed_mean[0], 0.0);
        assert!(product(&a, &CanonicalGaussian::flat(2)).is_err());
    }

    #[test]
    fn marginalize_examples() {
        let g = MomentGaussian::new(
            Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0])),
        )
        .unwrap();
        assert_eq!(marginalize(&g, &[0, 1, 2, 3]).unwrap(), g);
        let m = marginalize(&g, &[0, 1]).unwrap();
        assert_eq!(m.mean, Vector::from_vec(vec![1.0, 2.0]));
        assert_eq!(m.cov, Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0])));
        assert!(matches!(marginalize(&g, &[4]), Err(Error::IndexOutOfRange { index: 4, dim: 4 })));
    }

    #[test]
    fn correlation_examples() {
        let n = MomentGaussian::new(s(0.0), m1(1.0)).unwrap();
        assert_relative_eq!(gaussian_correlation(&n, &n).unwrap(), 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-15);
        let far = MomentGaussian::new(s(100.0), m1(1.0)).unwrap();
        assert!(gaussian_correlation(&n, &far).unwrap() < 1e-300);
        assert_eq!(gaussian_correlation(&n, &far).unwrap(), gaussian_correlation(&far, &n).unwrap());
        // a = b = N(μ, C): (4π)^(-D/2) det(C)^(-1/2)
        let c = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let g = MomentGaussian::new(Vector::from_vec(vec![0.4, -1.0]), c.clone()).unwrap();
        let expect = (4.0 * PI).powi(-1) / c.determinant().sqrt();
        assert_relative_eq!(gaussian_correlation(&g, &g).unwrap(), expect, max_relative = 1e-13);
    }

    #[test]
    fn log_density_examples() {
        let n = MomentGaussian::new(s(0.0), m1(1.0)).unwrap();
        let p = log_density(&n, &s(2.0)).unwrap();
        assert_relative_eq!(p.normalizer(), 0.398942280401432, epsilon = 1e-12);
        assert_eq!(p.quad, 4.0);
        assert_eq!(log_density(&n, &s(0.0)).unwrap().quad, 0.0);
        let g = MomentGaussian::new(s(1.0), m1(4.0)).unwrap();
        assert_relative_eq!(log_density(&g, &s(3.0)).unwrap().quad, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let one = MomentGaussian::new(s(0.7), m1(0.2)).unwrap();
        let mix = WeightedGaussianMixture::new(vec![(1.0, one.clone())]).unwrap();
        assert_eq!(mixture_moments(&mix).unwrap(), one);

        let pts = WeightedGaussianMixture::new(vec![
            (0.5, MomentGaussian::point_mass(s(1.0))),
            (0.5, MomentGaussian::point_mass(s(-1.0))),
        ])
        .unwrap();
        let g = mixture_moments(&pts).unwrap();
        assert_eq!(g.mean[0], 0.0);
        assert_relative_eq!(g.cov[(0, 0)], 1.0);

        let blobs = WeightedGaussianMixture::new(vec![
            (0.5, MomentGaussian::new(s(1.0), m1(0.25)).unwrap()),
            (0.5, MomentGaussian::new(s(-1.0), m1(0.25)).unwrap()),
        ])
        .unwrap();
        assert_relative_eq!(mixture_moments(&blobs).unwrap().cov[(0, 0)], 1.25);
        assert!(matches!(mixture_moments(&WeightedGaussianMixture::default()), Err(Error::EmptyMixture)));
    }
}
