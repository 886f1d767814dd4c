/// A scalar loss and its gradient with respect to the differentiated argument.
///
/// The gradient is flattened in the argument's natural memory order (for a
/// flow field: interleaved `(du, dv)` per pixel, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl LossValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// Subgradient of `|x|` with the value at zero fixed to 0.
#[inline]
pub(crate) fn l1_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
