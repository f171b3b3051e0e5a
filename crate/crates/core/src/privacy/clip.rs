use crate::tensor::{ParameterVector, PerExampleGrads, TensorError};

/// Scale `g` down to norm `clip_bound` when it is longer; otherwise return it untouched.
pub fn clip_gradient(g: &ParameterVector, clip_bound: f64) -> ParameterVector {
    debug_assert!(clip_bound > 0.0);
    let norm = g.norm();
    if norm <= clip_bound {
        return g.clone();
    }
    g.scale(clip_bound / norm)
        .expect("scaling down keeps entries finite")
}

/// Sum of the clipped per-example gradients, accumulated in example order.
pub fn clip_and_sum(
    grads: &PerExampleGrads,
    clip_bound: f64,
) -> Result<ParameterVector, TensorError> {
    let clipped: Vec<ParameterVector> = grads
        .grads()
        .iter()
        .map(|g| clip_gradient(g, clip_bound))
        .collect();
    ParameterVector::sum(&clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn short_gradients_are_unchanged() {
        let g = pv(&[0.3, -0.4]);
        assert_eq!(clip_gradient(&g, 1.0), g);
        assert_eq!(clip_gradient(&g, 0.5), g);
    }

    #[test]
    fn three_four_five() {
        let c = clip_gradient(&pv(&[3.0, 4.0]), 2.5);
        assert_eq!(c.as_slice(), &[1.5, 2.0]);
        assert_eq!(c.norm(), 2.5);
    }

    #[test]
    fn zero_vector() {
        let z = ParameterVector::zeros(4);
        assert_eq!(clip_gradient(&z, 0.1), z);
    }

    proptest! {
        #[test]
        fn clip_is_bounded_idempotent_and_direction_preserving(
            v in proptest::collection::vec(-1e3f64..1e3, 1..12),
            c in 1e-3f64..1e2,
        ) {
            let g = pv(&v);
            let once = clip_gradient(&g, c);
            prop_assert!(once.norm() <= c * (1.0 + 1e-12));
            let twice = clip_gradient(&once, c);
            prop_assert!(twice.max_abs_diff(&once) <= 1e-12 * c);
            let dot: f64 = once.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
            prop_assert!((dot - once.norm() * g.norm()).abs() <= 1e-9 * (1.0 + once.norm() * g.norm()));
        }
    }
}
