//! Network evaluation generic over the scalar algebra.
//!
//! `forward_into` runs the MLP with any [`Scalar`]: `f64` for values,
//! [`Tay`](super::taylor::Tay) for input-derivative jets. `backward_into`
//! then accumulates d(scalar objective)/d(parameters) for an objective
//! that may read *any* coefficient of the network output jet; PDE
//! residuals read several at once.
//!
//! The reverse sweep relies on the reversed-adjoint convention: the
//! adjoint of every program variable is stored as a jet whose `[i][l]`
//! entry is the true adjoint of coefficient `[NX-1-i][NT-1-l]`. Under
//! that storage the chain rule through a truncated product is again a
//! truncated product, so the sweep below is written in ordinary jet
//! arithmetic and works unchanged for `f64` (where it is textbook
//! backprop). A parameter's gradient entry is the *top* coefficient of
//! (local partial x incoming adjoint), hence the `top_mul`/`top` calls.

use super::taylor::Scalar;
use crate::model::ModelSpec;

/// Scratch buffers for one evaluation: activations per layer and adjoint
/// carriers per layer. Reused across points to keep the hot loops
/// allocation-free.
pub struct NetWorkspace<S> {
    acts: Vec<Vec<S>>,
    adj: Vec<Vec<S>>,
}

impl<S: Scalar> NetWorkspace<S> {
    pub fn new(spec: &ModelSpec) -> Self {
        let acts: Vec<Vec<S>> = spec
            .layer_sizes()
            .iter()
            .map(|&n| vec![S::zero(); n])
            .collect();
        let adj = acts.clone();
        Self { acts, adj }
    }
}

/// Evaluate the network at inputs `(x, t)`, keeping all intermediate
/// activations in `ws` for a subsequent reverse sweep.
pub fn forward_into<S: Scalar>(
    spec: &ModelSpec,
    params: &[f64],
    x: S,
    t: S,
    ws: &mut NetWorkspace<S>,
) -> S {
    let sizes = spec.layer_sizes();
    let n_layers = sizes.len() - 1;
    ws.acts[0][0] = x;
    ws.acts[0][1] = t;
    let mut off = 0;
    for li in 0..n_layers {
        let (n_in, n_out) = (sizes[li], sizes[li + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        let (prev_acts, rest) = ws.acts.split_at_mut(li + 1);
        let prev = &prev_acts[li];
        let cur = &mut rest[0];
        for j in 0..n_out {
            let row = &w[j * n_in..(j + 1) * n_in];
            let mut z = S::from_const(b[j]);
            for (a, &wk) in prev.iter().zip(row) {
                z = z.add(a.scale(wk));
            }
            cur[j] = if li == n_layers - 1 { z } else { z.tanh() };
        }
        off += n_in * n_out + n_out;
    }
    ws.acts[n_layers][0]
}

/// Reverse sweep from a seeded output adjoint, accumulating into `grad`
/// (callers zero it, or stack several sweeps). `ws` must hold the
/// activations of the matching `forward_into` call.
pub fn backward_into<S: Scalar>(
    spec: &ModelSpec,
    params: &[f64],
    ws: &mut NetWorkspace<S>,
    seed: S,
    grad: &mut [f64],
) {
    let sizes = spec.layer_sizes();
    let n_layers = sizes.len() - 1;
    let acts = &ws.acts;
    let adj = &mut ws.adj;
    adj[n_layers][0] = seed;
    let mut off = params.len();
    for li in (0..n_layers).rev() {
        let (n_in, n_out) = (sizes[li], sizes[li + 1]);
        off -= n_in * n_out + n_out;
        let w = &params[off..off + n_in * n_out];
        let (adj_lower, adj_upper) = adj.split_at_mut(li + 1);
        let prev_adj = &mut adj_lower[li];
        let cur_adj = &mut adj_upper[0];
        // Pull the adjoint back through this layer's activation: tanh for
        // hidden layers (y' = 1 - y^2 in terms of the output y), identity
        // for the final layer.
        if li != n_layers - 1 {
            for (dz, &a) in cur_adj.iter_mut().zip(&acts[li + 1]) {
                *dz = dz.mul(S::from_const(1.0).sub(a.mul(a)));
            }
        }
        for j in 0..n_out {
            let dz = cur_adj[j];
            grad[off + n_in * n_out + j] += dz.top();
            let row_off = off + j * n_in;
            for (k, &a) in acts[li].iter().enumerate() {
                grad[row_off + k] += dz.top_mul(a);
            }
        }
        if li > 0 {
            for pa in prev_adj.iter_mut() {
                *pa = S::zero();
            }
            for j in 0..n_out {
                let dz = cur_adj[j];
                let row = &w[j * n_in..(j + 1) * n_in];
                for (pa, &wk) in prev_adj.iter_mut().zip(row) {
                    *pa = pa.add(dz.scale(wk));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelSpec};
    use approx::assert_relative_eq;

    #[test]
    fn forward_matches_hand_rolled_two_layer() {
        // [2,2,1]: y = w2 . tanh(W1 [x,t] + b1) + b2, checked by hand.
        let spec = ModelSpec::new(vec![2, 2, 1]).unwrap();
        let params = vec![
            0.5, -0.3, // W1 row 0
            0.2, 0.8, // W1 row 1
            0.1, -0.2, // b1
            1.5, -2.0, // W2
            0.25, // b2
        ];
        let mut ws = NetWorkspace::new(&spec);
        let y = forward_into(&spec, &params, 0.7_f64, -0.4, &mut ws);
        let h0 = (0.5 * 0.7 + (-0.3) * (-0.4) + 0.1_f64).tanh();
        let h1 = (0.2 * 0.7 + 0.8 * (-0.4) + (-0.2_f64)).tanh();
        let expect = 1.5 * h0 - 2.0 * h1 + 0.25;
        assert_relative_eq!(y, expect, max_relative = 1e-15);
    }

    #[test]
    fn backward_f64_matches_finite_differences() {
        let spec = ModelSpec::new(vec![2, 4, 3, 1]).unwrap();
        let params = init_params(&spec, 11);
        let mut entries = params.entries().to_vec();
        let (x, t) = (0.3, 0.6);

        let mut ws = NetWorkspace::new(&spec);
        let _ = forward_into(&spec, &entries, x, t, &mut ws);
        let mut grad = vec![0.0; entries.len()];
        backward_into(&spec, &entries, &mut ws, 1.0, &mut grad);

        let h = 1e-6;
        for i in 0..entries.len() {
            let orig = entries[i];
            entries[i] = orig + h;
            let up = forward_into(&spec, &entries, x, t, &mut ws);
            entries[i] = orig - h;
            let dn = forward_into(&spec, &entries, x, t, &mut ws);
            entries[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, max_relative = 1e-6, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_last_layer_gives_bias_output() {
        let spec = ModelSpec::new(vec![2, 3, 1]).unwrap();
        let mut params = init_params(&spec, 3);
        let n = params.len();
        // Last layer: 3 weights + 1 bias at the tail of the flat vector.
        let entries = params.entries_mut();
        entries[n - 4] = 0.0;
        entries[n - 3] = 0.0;
        entries[n - 2] = 0.0;
        entries[n - 1] = 0.7;
        let mut ws = NetWorkspace::new(&spec);
        for &(x, t) in &[(0.0, 0.0), (-0.9, 0.4), (1.0, 1.0)] {
            assert_eq!(forward_into(&spec, entries, x, t, &mut ws), 0.7);
        }
    }
}
