//! Huber loss: quadratic within `δ` of the target, linear beyond.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberParams {
    delta: f64,
}

impl HuberParams {
    /// `None` unless `delta` is finite and positive.
    pub fn new(delta: f64) -> Option<Self> {
        (delta.is_finite() && delta > 0.0).then_some(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl Default for HuberParams {
    fn default() -> Self {
        Self { delta: 1.0 }
    }
}

/// Returns `(loss, d loss / d prediction)` for `K = prediction - target`.
pub fn huber(prediction: f64, target: f64, p: HuberParams) -> (f64, f64) {
    let k = prediction - target;
    let d = p.delta;
    if libm::fabs(k) <= d {
        (0.5 * k * k, k)
    } else {
        (d * (libm::fabs(k) - 0.5 * d), d * libm::copysign(1.0, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = HuberParams::default();
        assert_eq!(huber(0.3, 0.3, p), (0.0, 0.0));
        assert_eq!(huber(3.0, 0.0, p), (2.5, 1.0));
        assert_eq!(huber(-3.0, 0.0, p), (2.5, -1.0));
        assert_eq!(huber(1.0, 0.0, p).0, 0.5);
    }

    #[test]
    fn continuous_at_knee() {
        for delta in [0.25, 1.0, 3.5] {
            let p = HuberParams::new(delta).unwrap();
            let quad = (0.5 * delta * delta, delta);
            let lin = (delta * (delta - 0.5 * delta), delta);
            assert_eq!(quad, lin);
            let just_out = huber(delta + 1e-12, 0.0, p);
            assert!((just_out.0 - quad.0).abs() < 1e-11);
            assert_eq!(just_out.1, quad.1);
        }
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(HuberParams::new(0.0).is_none());
        assert!(HuberParams::new(-1.0).is_none());
        assert!(HuberParams::new(f64::NAN).is_none());
    }
}
