//! Central finite differences against tape gradients.

use super::store::ParamStore;
use super::tape::{Tape, Var};
use super::NumericError;

/// Denominator floor of the relative error, so coordinates whose true
/// derivative is zero are compared absolutely at this scale. The floor is
/// multiplied by `max(1, |f|)`: the rounding noise of a central difference
/// grows with `|f|`, not with the derivative.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Number of scalar coordinates compared.
    pub coordinates: usize,
    pub kink_margin: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compares the tape gradient of the scalar `f` against
/// `(f(x+h) − f(x−h)) / 2h` for every coordinate of every tensor in `store`.
///
/// Fails with [`NumericError::KinkAdjacent`] when any relu, set-minimum or
/// hinge pre-activation lies within `10·h` of its kink; callers resample
/// the probe in that case.
pub fn grad_check<F, E>(store: &ParamStore, f: F, h: f64, tol: f64) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, E>,
    E: From<NumericError>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let margin = tape.kink_margin();
    if margin < 10.0 * h {
        return Err(NumericError::KinkAdjacent { margin }.into());
    }
    let floor = REL_ERROR_FLOOR * tape.scalar(out).abs().max(1.0);
    let grads = tape.backward(out)?;

    let mut analytic: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    for (slice, g) in grads.iter() {
        let dense = &mut analytic[slice.tensor.0];
        for (k, v) in g.iter().enumerate() {
            dense[slice.offset + k] += v;
        }
    }

    let eval = |probe: &ParamStore| -> Result<f64, E> {
        let mut t = Tape::new();
        let v = f(&mut t, probe)?;
        Ok(t.scalar(v))
    };

    let mut probe = store.clone();
    let mut max_rel_error: f64 = 0.0;
    let mut coordinates = 0;
    for (ti, tensor) in store.tensors().iter().enumerate() {
        for k in 0..tensor.len() {
            let id = super::TensorId(ti);
            let base = tensor.data[k];
            probe.get_mut(id).data[k] = base + h;
            let plus = eval(&probe)?;
            probe.get_mut(id).data[k] = base - h;
            let minus = eval(&probe)?;
            probe.get_mut(id).data[k] = base;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti][k];
            let denom = a.abs().max(numeric.abs()).max(floor);
            max_rel_error = max_rel_error.max((a - numeric).abs() / denom);
            coordinates += 1;
        }
    }
    Ok(GradCheckReport { max_rel_error, coordinates, kink_margin: margin, tolerance: tol })
}
