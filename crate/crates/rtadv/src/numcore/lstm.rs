//! Standard LSTM cell and its backward pass through time.
//!
//! Parameter block layout (one flat slice): a fused matrix `W [4H][D+H]`
//! applied to the concatenation `[x, h_prev]`, then bias `[4H]`; gate rows
//! ordered input, forget, cell, output. The fused layout makes every gate
//! pre-activation one long contiguous dot product. The forget bias is
//! initialized to 1 at network construction.

use super::layer::{axpy, dot};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step. `zin` is caller-provided scratch of length `d + h`; it is
/// filled with `[x, h_prev]` and left that way (the backward pass wants it).
/// Writes post-activation gates (i,f,g,o), the new cell state, its tanh, and
/// the new hidden state.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_cell(
    params: &[f64],
    d: usize,
    h: usize,
    zin: &mut [f64],
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c_out: &mut [f64],
    tanh_c: &mut [f64],
    h_out: &mut [f64],
) {
    debug_assert_eq!(x.len(), d);
    debug_assert_eq!(h_prev.len(), h);
    debug_assert_eq!(zin.len(), d + h);
    debug_assert_eq!(gates.len(), 4 * h);
    let dh = d + h;
    zin[..d].copy_from_slice(x);
    zin[d..].copy_from_slice(h_prev);
    let b = &params[4 * h * dh..];
    for r in 0..4 * h {
        let z = dot(&params[r * dh..(r + 1) * dh], zin) + b[r];
        gates[r] = if r / h == 2 { z.tanh() } else { sigmoid(z) };
    }
    let (gi, rest) = gates.split_at(h);
    let (gf, rest) = rest.split_at(h);
    let (gg, go) = rest.split_at(h);
    for u in 0..h {
        let c = gf[u] * c_prev[u] + gi[u] * gg[u];
        c_out[u] = c;
        let tc = c.tanh();
        tanh_c[u] = tc;
        h_out[u] = go[u] * tc;
    }
}

/// Gradient of one step. `zin` must hold `[x, h_prev]` for this step. `dh`
/// and `dc` carry the incoming gradients for `h_t`/`c_t`; on return
/// `dzin` holds the gradient for `[x, h_prev]`, `dc_prev` the cell-state
/// gradient, and `dparams` accumulates.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_cell_backward(
    params: &[f64],
    d: usize,
    h: usize,
    zin: &[f64],
    c_prev: &[f64],
    gates: &[f64],
    tanh_c: &[f64],
    dh: &[f64],
    dc: &[f64],
    dparams: &mut [f64],
    dzin: &mut [f64],
    dc_prev: &mut [f64],
) {
    let dhlen = d + h;
    let (gi, rest) = gates.split_at(h);
    let (gf, rest) = rest.split_at(h);
    let (gg, go) = rest.split_at(h);

    // Pre-activation gate gradients, rows ordered like the parameter block.
    let mut dpre = vec![0.0; 4 * h];
    for u in 0..h {
        let dct = dc[u] + dh[u] * go[u] * (1.0 - tanh_c[u] * tanh_c[u]);
        let do_ = dh[u] * tanh_c[u];
        dpre[u] = dct * gg[u] * gi[u] * (1.0 - gi[u]); // input gate
        dpre[h + u] = dct * c_prev[u] * gf[u] * (1.0 - gf[u]); // forget gate
        dpre[2 * h + u] = dct * gi[u] * (1.0 - gg[u] * gg[u]); // cell candidate
        dpre[3 * h + u] = do_ * go[u] * (1.0 - go[u]); // output gate
        dc_prev[u] = dct * gf[u];
    }

    let bias_base = 4 * h * dhlen;
    for (r, &g) in dpre.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        axpy(g, zin, &mut dparams[r * dhlen..(r + 1) * dhlen]);
        dparams[bias_base + r] += g;
        axpy(g, &params[r * dhlen..(r + 1) * dhlen], dzin);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_zero_state_give_activation_of_zero() {
        // All-zero parameters and state: every gate pre-activation is 0, so
        // i=f=o=sigmoid(0)=0.5, g=tanh(0)=0, c=0, h=0.
        let (d, h) = (3, 2);
        let params = vec![0.0; 4 * h * (d + h) + 4 * h];
        let x = vec![0.7, -0.1, 0.4];
        let mut zin = vec![0.0; d + h];
        let mut gates = vec![0.0; 4 * h];
        let mut c = vec![0.0; h];
        let mut tc = vec![0.0; h];
        let mut hh = vec![0.0; h];
        lstm_cell(
            &params,
            d,
            h,
            &mut zin,
            &x,
            &vec![0.0; h],
            &vec![0.0; h],
            &mut gates,
            &mut c,
            &mut tc,
            &mut hh,
        );
        for u in 0..h {
            assert!((gates[u] - 0.5).abs() < 1e-15); // i
            assert!((gates[h + u] - 0.5).abs() < 1e-15); // f
            assert!(gates[2 * h + u].abs() < 1e-15); // g
            assert!((gates[3 * h + u] - 0.5).abs() < 1e-15); // o
            assert_eq!(c[u], 0.0);
            assert_eq!(hh[u], 0.0);
        }
        assert_eq!(&zin[..d], &x[..], "zin carries the concatenated input");
    }

    #[test]
    fn sigmoid_is_bounded_and_centered() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) <= 1.0 && sigmoid(40.0) > 0.999_999);
        assert!(sigmoid(-40.0) >= 0.0 && sigmoid(-40.0) < 1e-6);
    }
}
