//! Latent-space edits applied to inverted codes.

use crate::error::{Error, Result};
use crate::generator::{LatentCode, SemanticDirection};
use crate::inversion::compose_codes;
use crate::scalar::Scalar;

/// Move along `direction` by `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct EditSpec<T> {
    pub direction: SemanticDirection<T>,
    pub alpha: T,
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("latent dimension {a} vs {b}")));
    }
    Ok(())
}

/// `w + alpha · direction`.
pub fn edit<T: Scalar>(w: &LatentCode<T>, spec: &EditSpec<T>) -> Result<LatentCode<T>> {
    check_dims(w.dim(), spec.direction.dim())?;
    if !spec.alpha.is_finite() {
        return Err(Error::invalid("edit alpha must be finite"));
    }
    Ok(LatentCode(
        w.0.iter()
            .zip(&spec.direction.0)
            .map(|(&a, &n)| a + spec.alpha * n)
            .collect(),
    ))
}

/// Linear interpolation `(1 − t)·a + t·b`, exact at both endpoints.
pub fn morph<T: Scalar>(a: &LatentCode<T>, b: &LatentCode<T>, t: T) -> Result<LatentCode<T>> {
    check_dims(a.dim(), b.dim())?;
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::invalid(format!(
            "morph parameter must lie in [0, 1], got {t}"
        )));
    }
    if t == T::zero() {
        return Ok(a.clone());
    }
    if t == T::one() {
        return Ok(b.clone());
    }
    let s = T::one() - t;
    Ok(LatentCode(
        a.0.iter().zip(&b.0).map(|(&x, &y)| s * x + t * y).collect(),
    ))
}

/// Replays a learned direction trajectory on `target`: returns
/// `target + scale·(n_1 + … + n_K)` for `K = 0..=dirs.len()`.
pub fn transfer<T: Scalar>(
    dirs: &[SemanticDirection<T>],
    target: &LatentCode<T>,
    scale: T,
) -> Result<Vec<LatentCode<T>>> {
    for d in dirs {
        check_dims(d.dim(), target.dim())?;
    }
    if scale == T::one() {
        return (0..=dirs.len())
            .map(|k| compose_codes(target, dirs, k))
            .collect();
    }
    let scaled: Vec<_> = dirs
        .iter()
        .map(|d| SemanticDirection(d.0.iter().map(|&v| v * scale).collect()))
        .collect();
    (0..=dirs.len())
        .map(|k| compose_codes(target, &scaled, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> LatentCode<f64> {
        LatentCode(vec![0.5, -1.0, 2.0])
    }

    fn n() -> SemanticDirection<f64> {
        SemanticDirection(vec![0.0, 0.6, 0.8])
    }

    #[test]
    fn edit_zero_alpha_and_additivity() {
        let spec = |a| EditSpec {
            direction: n(),
            alpha: a,
        };
        assert_eq!(edit(&w(), &spec(0.0)).unwrap(), w());
        let twice = edit(&edit(&w(), &spec(1.25)).unwrap(), &spec(-0.5)).unwrap();
        let once = edit(&w(), &spec(0.75)).unwrap();
        for (a, b) in twice.0.iter().zip(&once.0) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(edit(
            &w(),
            &EditSpec {
                direction: SemanticDirection(vec![1.0]),
                alpha: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn morph_endpoints_and_midpoint() {
        let b = LatentCode(vec![1.5, 0.0, -2.0]);
        assert_eq!(morph(&w(), &b, 0.0).unwrap(), w());
        assert_eq!(morph(&w(), &b, 1.0).unwrap(), b);
        assert_eq!(morph(&w(), &b, 0.5).unwrap().0, vec![1.0, -0.5, 0.0]);
        assert!(morph(&w(), &b, 1.5).is_err());
        assert!(morph(&w(), &b, -0.1).is_err());
        assert!(morph(&w(), &b, f64::NAN).is_err());
    }

    #[test]
    fn transfer_zero_dirs_and_compose_agreement() {
        let zeros = vec![SemanticDirection::zeros(3); 2];
        for c in transfer(&zeros, &w(), 1.0).unwrap() {
            assert_eq!(c, w());
        }
        let dirs = vec![n(), SemanticDirection(vec![1.0, 1.0, 1.0])];
        let out = transfer(&dirs, &w(), 1.0).unwrap();
        assert_eq!(out.len(), 3);
        for (k, c) in out.iter().enumerate() {
            assert_eq!(*c, compose_codes(&w(), &dirs, k).unwrap());
        }
        let half = transfer(&dirs, &w(), 0.5).unwrap();
        for (a, b) in half[2].0.iter().zip([1.0, -0.2, 2.9]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
