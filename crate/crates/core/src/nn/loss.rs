use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Below this norm the Euclidean-norm gradient is taken to be zero.
pub const NORM_EPS: f64 = 1e-12;

/// Binary cross-entropy `-y ln p - (1 - y) ln(1 - p)` with clamped `p`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}

/// `d bce_loss / dp`. Zero where the clamp is active.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("l2_distance", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Reduction applied to a regularized difference vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `||v||_2`; gradient is zero at the origin.
    #[default]
    Euclidean,
    /// `||v||_2^2`
    Squared,
    /// `||v||_2^2 / len(v)`, the usual mean-squared-error reduction.
    MeanSquared,
}

impl Penalty {
    pub fn value(self, v: &[f64]) -> f64 {
        let sq: f64 = v.iter().map(|x| x * x).sum();
        match self {
            Penalty::Euclidean => sq.sqrt(),
            Penalty::Squared => sq,
            Penalty::MeanSquared => sq / v.len().max(1) as f64,
        }
    }

    /// Writes `scale * d value / dv` into `out`.
    pub fn grad_into(self, v: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(v.len(), out.len());
        let factor = match self {
            Penalty::Euclidean => {
                let norm = l2_norm(v);
                if norm < NORM_EPS {
                    0.0
                } else {
                    1.0 / norm
                }
            }
            Penalty::Squared => 2.0,
            Penalty::MeanSquared => 2.0 / v.len().max(1) as f64,
        };
        for (o, x) in out.iter_mut().zip(v) {
            *o = scale * factor * x;
        }
    }

    pub fn scalar(self, d: f64) -> f64 {
        self.value(&[d])
    }

    pub fn scalar_grad(self, d: f64) -> f64 {
        let mut g = [0.0];
        self.grad_into(&[d], 1.0, &mut g);
        g[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bce_examples() {
        assert!(bce_loss(1.0 - BCE_EPS, 1.0) < 1e-6);
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.2, 0.0) - 0.223_143_551_314_209_76).abs() < 1e-12);
    }

    #[test]
    fn bce_is_finite_at_saturation() {
        assert!(bce_loss(0.0, 1.0).is_finite());
        assert!(bce_loss(1.0, 0.0).is_finite());
        assert_eq!(bce_grad(1.0, 0.0), 0.0);
    }

    #[test]
    fn l2_examples() {
        assert_eq!(l2_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(l2_distance(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(l2_distance(&[1.0; 4], &[0.0; 4]).unwrap(), 2.0);
        assert!(l2_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn euclidean_gradient_at_origin_is_zero() {
        let mut g = [1.0; 3];
        Penalty::Euclidean.grad_into(&[0.0; 3], 1.0, &mut g);
        assert_eq!(g, [0.0; 3]);
        assert_eq!(Penalty::Euclidean.scalar_grad(0.0), 0.0);
        assert_eq!(Penalty::Euclidean.scalar_grad(-0.3), -1.0);
    }

    #[test]
    fn penalty_gradients_match_central_differences() {
        let v = [0.3, -1.2, 0.7, 2.0];
        for penalty in [Penalty::Euclidean, Penalty::Squared, Penalty::MeanSquared] {
            let mut g = [0.0; 4];
            penalty.grad_into(&v, 1.0, &mut g);
            for i in 0..4 {
                let h = 1e-6;
                let mut up = v;
                let mut dn = v;
                up[i] += h;
                dn[i] -= h;
                let fd = (penalty.value(&up) - penalty.value(&dn)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-8, "{penalty:?} {i}");
            }
        }
    }

    proptest! {
        #[test]
        fn bce_is_nonnegative(p in 0.0f64..=1.0, y in prop::bool::ANY) {
            let target = if y { 1.0 } else { 0.0 };
            prop_assert!(bce_loss(p, target) >= 0.0);
        }

        #[test]
        fn l2_is_a_metric(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
            c in prop::collection::vec(-10.0f64..10.0, 6),
        ) {
            let ab = l2_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, l2_distance(&b, &a).unwrap());
            let ac = l2_distance(&a, &c).unwrap();
            let cb = l2_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }
}
