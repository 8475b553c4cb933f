//! Gaussian messages in moment and canonical form.
//!
//! Converts between the two forms, multiplies messages by adding their
//! canonical parameters, and evaluates the correlation integral of two
//! Gaussians against its closed form.

use dbsmooth::gaussian::{gaussian_correlation, marginalize, mixture_moments, product, to_canonical, to_moment};
use dbsmooth::gaussian::{MomentGaussian, WeightedGaussianMixture};
use dbsmooth::linalg::{Matrix, Vector};

fn main() -> dbsmooth::error::Result<()> {
    let prior = MomentGaussian::new(Vector::from_vec(vec![0.0, 1.0]), Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]))?;
    let evidence = MomentGaussian::new(Vector::from_vec(vec![1.0, 0.5]), Matrix::identity(2, 2) * 0.5)?;

    let a = to_canonical(&prior)?;
    let b = to_canonical(&evidence)?;
    println!("canonical prior: W = {:.4?}, w = {:.4?}", a.precision.as_slice(), a.transformed_mean.as_slice());

    // the product of two messages is precision addition
    let post = to_moment(&product(&a, &b)?)?;
    println!("posterior mean {:.4?}", post.mean.as_slice());
    println!("posterior cov {:.4?}", post.cov.as_slice());

    let back = to_moment(&a)?;
    println!("round trip error {:.2e}", (&back.cov - &prior.cov).norm());

    // ∫ N(x; m1, C1) N(x; m2, C2) dx = N(m1; m2, C1 + C2)
    let c = gaussian_correlation(&prior, &evidence)?;
    let sum = MomentGaussian::new(evidence.mean.clone(), &prior.cov + &evidence.cov)?;
    let direct = dbsmooth::gaussian::log_density(&sum, &prior.mean)?.value();
    println!("correlation {c:.6} (direct {direct:.6})");

    let first = marginalize(&post, &[0])?;
    println!("first component: mean {:.4}, var {:.4}", first.mean[0], first.cov[(0, 0)]);

    let mix = WeightedGaussianMixture::new(vec![(0.3, prior), (0.7, evidence)])?;
    let m = mixture_moments(&mix)?;
    println!("mixture mean {:.4?}", m.mean.as_slice());
    Ok(())
}
