//! Central finite-difference audits for analytic gradients.
//!
//! Only loss *values* are evaluated here, never the analytic gradient code
//! path, so the comparison is an independent check.

/// Default step for central differences.
pub const STEP: f64 = 1e-5;
/// Default pass threshold on relative error.
pub const TOLERANCE: f64 = 1e-4;
/// Magnitude below which the relative error is measured against this floor.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Index of the worst component, if any was checked.
    pub worst: Option<usize>,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        let worst = if other.max_rel_err > self.max_rel_err {
            other.worst
        } else {
            self.worst
        };
        GradCheck {
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            worst,
        }
    }
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference<F>(f: &F, x: &[f64], i: usize, h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    xp[i] = x[i] + h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

/// Compare `analytic` against central differences of `f` at `x`, skipping
/// components for which `skip(i)` is true (documented non-smooth loci).
pub fn check<F, S>(f: F, x: &[f64], analytic: &[f64], h: f64, skip: S) -> GradCheck
where
    F: Fn(&[f64]) -> f64,
    S: Fn(usize) -> bool,
{
    assert_eq!(x.len(), analytic.len(), "gradient length must match argument");
    let mut out = GradCheck {
        checked: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for (i, &a) in analytic.iter().enumerate() {
        if skip(i) {
            out.skipped += 1;
            continue;
        }
        let numeric = central_difference(&f, x, i, h);
        let err = crate::numeric::relative_error(a, numeric, REL_FLOOR);
        out.checked += 1;
        if err > out.max_rel_err || out.worst.is_none() {
            out.max_rel_err = out.max_rel_err.max(err);
            out.worst = Some(i);
        }
    }
    out
}
