//! Central finite-difference checking of analytic parameter gradients.
//!
//! The forward path is re-evaluated under perturbed parameters, so the check
//! is independent of the backward-pass implementation it verifies.

use ndarray::Array1;

use crate::numerics::encoder::{encode, encode_backward, EncoderParams};

const FD_STEP: f64 = 1e-5;

/// Compares analytic gradients of `loss(encode(params, x))` against central
/// finite differences over every weight and bias. `loss` maps the normalized
/// feature to a scalar and `grad` gives its gradient wrt the feature.
///
/// Returns the maximum relative error over all parameter entries.
pub fn finite_diff_check<L, G>(
    params: &EncoderParams,
    x: &Array1<f64>,
    loss: L,
    grad: G,
) -> f64
where
    L: Fn(&Array1<f64>) -> f64,
    G: Fn(&Array1<f64>) -> Array1<f64>,
{
    let (f, cache) = encode(params, x).expect("finite_diff_check: forward failed");
    let analytic = encode_backward(params, &cache, &grad(&f))
        .expect("finite_diff_check: backward failed");

    let mut max_rel: f64 = 0.0;
    let mut check = |analytic_entry: f64, perturb: &mut dyn FnMut(&mut EncoderParams, f64)| {
        let mut plus = params.clone();
        perturb(&mut plus, FD_STEP);
        let mut minus = params.clone();
        perturb(&mut minus, -FD_STEP);
        let lp = loss(&encode(&plus, x).unwrap().0);
        let lm = loss(&encode(&minus, x).unwrap().0);
        let fd = (lp - lm) / (2.0 * FD_STEP);
        let denom = analytic_entry.abs().max(fd.abs()).max(1e-6);
        let rel = (analytic_entry - fd).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    };

    for li in 0..params.layers.len() {
        let (rows, cols) = params.layers[li].weight.dim();
        for r in 0..rows {
            for c in 0..cols {
                check(analytic.layers[li].weight[[r, c]], &mut |p, h| {
                    p.layers[li].weight[[r, c]] += h;
                });
            }
            check(analytic.layers[li].bias[r], &mut |p, h| {
                p.layers[li].bias[r] += h;
            });
        }
    }
    max_rel
}
