//! Layer specifications and the per-frame compute kernels.
//!
//! The same kernel functions run in both the batch forward (training) and the
//! streaming step path (online attack), so the two agree bitwise: batch mode
//! is literally a loop over frames calling the per-frame kernel.
//!
//! Within a frame, rank-3 data is laid out channel-last `(W, C)`: adjacent
//! positions are adjacent in memory, so a kernel window over `k` positions is
//! one contiguous slice of `k * cin` values and the conv inner loop is a
//! single long dot product (with a gathered zero-padded window only at the
//! frame borders).

use crate::error::{Result, RtError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation *output* (all three
    /// activations here admit that form, which saves caching pre-activations).
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// One layer of a network. Parameter layouts (flat `Vec<f64>` per layer):
/// - `Conv1d`: weights `[out_ch][kernel][in_ch]`, then bias `[out_ch]`.
/// - `Dense`: weights `[out][in]`, then bias `[out]`.
/// - `Recurrent` (standard LSTM): one fused matrix `W [4H][D+H]` acting on
///   the concatenation `[x, h_prev]`, then bias `[4H]`; gate row order
///   i, f, g, o.
/// - `Framing`, `MaxPool1d`: no parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// Chop a rank-1 stream into `(T, frame_len)` rows, zero-padding the tail.
    Framing { frame_len: usize },
    /// Same-padded, stride-1 1-D convolution within each frame.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        activation: Activation,
    },
    /// Non-overlapping max pooling within each frame (stride = width).
    MaxPool1d { width: usize },
    /// Standard LSTM over the frame axis.
    Recurrent { input_dim: usize, hidden: usize },
    /// Affine + activation applied to every row independently.
    Dense {
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Framing { .. } | LayerSpec::MaxPool1d { .. } => 0,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel + out_channels,
            LayerSpec::Recurrent { input_dim, hidden } => {
                4 * hidden * input_dim + 4 * hidden * hidden + 4 * hidden
            }
            LayerSpec::Dense {
                input_dim,
                output_dim,
                ..
            } => output_dim * input_dim + output_dim,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Framing { .. } => "framing",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool1d { .. } => "maxpool1d",
            LayerSpec::Recurrent { .. } => "recurrent",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// Shape this layer produces for a given input shape; the composability
    /// check for network construction. Shapes: `[t]` raw stream, `[T, W]`
    /// frames, `[T, W, C]` channel-last frames, `[T, D]` feature rows.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |msg: String| Err(RtError::shape(msg));
        match *self {
            LayerSpec::Framing { frame_len } => {
                if frame_len == 0 {
                    return fail("framing: frame_len must be positive".into());
                }
                if input.len() != 1 {
                    return fail(format!("framing wants rank-1 input, got {input:?}"));
                }
                Ok(vec![input[0].div_ceil(frame_len), frame_len])
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                if kernel % 2 == 0 || kernel == 0 {
                    return fail(format!("conv1d kernel must be odd, got {kernel}"));
                }
                let (w, c) = match input {
                    [_, w] => (*w, 1),
                    [_, w, c] => (*w, *c),
                    _ => return fail(format!("conv1d wants rank-2/3 input, got {input:?}")),
                };
                if c != in_channels {
                    return fail(format!(
                        "conv1d expects {in_channels} input channels, got {c}"
                    ));
                }
                Ok(vec![input[0], w, out_channels])
            }
            LayerSpec::MaxPool1d { width } => {
                if width == 0 {
                    return fail("maxpool1d width must be positive".into());
                }
                let (w, c) = match input {
                    [_, w] => (*w, 1),
                    [_, w, c] => (*w, *c),
                    _ => return fail(format!("maxpool1d wants rank-2/3 input, got {input:?}")),
                };
                if w < width {
                    return fail(format!("maxpool1d width {width} exceeds frame width {w}"));
                }
                Ok(vec![input[0], w / width, c])
            }
            LayerSpec::Recurrent { input_dim, hidden } => {
                if input.len() < 2 {
                    return fail(format!("recurrent wants rank-2/3 input, got {input:?}"));
                }
                let d: usize = input[1..].iter().product();
                if d != input_dim {
                    return fail(format!(
                        "recurrent expects input_dim {input_dim}, got {d} from {input:?}"
                    ));
                }
                Ok(vec![input[0], hidden])
            }
            LayerSpec::Dense {
                input_dim,
                output_dim,
                ..
            } => {
                if input.len() < 2 {
                    return fail(format!("dense wants rank-2/3 input, got {input:?}"));
                }
                let d: usize = input[1..].iter().product();
                if d != input_dim {
                    return fail(format!(
                        "dense expects input_dim {input_dim}, got {d} from {input:?}"
                    ));
                }
                Ok(vec![input[0], output_dim])
            }
        }
    }
}

/// Dot product with four accumulators. The fixed association order keeps the
/// result deterministic while letting the compiler vectorize the reduction;
/// `chunks_exact` lets it drop the bounds checks.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in (&mut ca).zip(&mut cb) {
        s0 += x[0] * y[0];
        s1 += x[1] * y[1];
        s2 += x[2] * y[2];
        s3 += x[3] * y[3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// `dst[i] += k * src[i]`, bounds-checked once.
#[inline]
pub(crate) fn axpy(k: f64, src: &[f64], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

/// Chop a raw stream into complete frames plus a zero-padded tail frame.
pub fn frame_series(series: &[f64], frame_len: usize) -> Vec<f64> {
    let t = series.len().div_ceil(frame_len);
    let mut out = vec![0.0; t * frame_len];
    out[..series.len()].copy_from_slice(series);
    out
}

/// Same-padded stride-1 conv over one frame. `input` is `(w, cin)`, `out` is
/// `(w, cout)`, both channel-last. For interior positions the kernel window
/// is one contiguous slice of `k * cin` input values, so each output value is
/// a single dot product; only the `pad` positions at each border gather a
/// zero-padded window.
pub(crate) fn conv_frame(
    input: &[f64],
    cin: usize,
    w: usize,
    cout: usize,
    k: usize,
    params: &[f64],
    act: Activation,
    out: &mut [f64],
) {
    debug_assert_eq!(input.len(), cin * w);
    debug_assert_eq!(out.len(), cout * w);
    let pad = k / 2;
    let klen = k * cin;
    let bias = &params[cout * klen..];
    let mut window = vec![0.0; klen];
    for wi in 0..w {
        let seg: &[f64] = if wi >= pad && wi + pad < w {
            &input[(wi - pad) * cin..(wi - pad + k) * cin]
        } else {
            window.fill(0.0);
            for j in 0..k {
                let src = wi as isize + j as isize - pad as isize;
                if src >= 0 && (src as usize) < w {
                    let src = src as usize;
                    window[j * cin..(j + 1) * cin].copy_from_slice(&input[src * cin..(src + 1) * cin]);
                }
            }
            &window
        };
        let out_row = &mut out[wi * cout..(wi + 1) * cout];
        for (o, dst) in out_row.iter_mut().enumerate() {
            *dst = act.apply(dot(&params[o * klen..(o + 1) * klen], seg) + bias[o]);
        }
    }
}

/// Backward of `conv_frame`. `dout` is the gradient at the layer output
/// (post-activation); `output` is the cached forward output. Accumulates into
/// `dparams` and `dinput`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_frame_backward(
    input: &[f64],
    output: &[f64],
    dout: &[f64],
    cin: usize,
    w: usize,
    cout: usize,
    k: usize,
    params: &[f64],
    act: Activation,
    dparams: &mut [f64],
    dinput: &mut [f64],
) {
    let pad = k / 2;
    let klen = k * cin;
    let dbias_base = cout * klen;
    for wi in 0..w {
        let out_row = &output[wi * cout..(wi + 1) * cout];
        let dout_row = &dout[wi * cout..(wi + 1) * cout];
        for o in 0..cout {
            let g = dout_row[o] * act.grad_from_output(out_row[o]);
            if g == 0.0 {
                continue;
            }
            dparams[dbias_base + o] += g;
            let wrow = &params[o * klen..(o + 1) * klen];
            let dwrow_base = o * klen;
            if wi >= pad && wi + pad < w {
                let src = (wi - pad) * cin;
                axpy(g, &input[src..src + klen], &mut dparams[dwrow_base..dwrow_base + klen]);
                axpy(g, wrow, &mut dinput[src..src + klen]);
            } else {
                for j in 0..k {
                    let src = wi as isize + j as isize - pad as isize;
                    if src >= 0 && (src as usize) < w {
                        let src = src as usize * cin;
                        axpy(
                            g,
                            &input[src..src + cin],
                            &mut dparams[dwrow_base + j * cin..dwrow_base + (j + 1) * cin],
                        );
                        axpy(g, &wrow[j * cin..(j + 1) * cin], &mut dinput[src..src + cin]);
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pool over one `(w, c)` frame, recording winner indices
/// (flat within the frame) for the backward pass. Ties go to the first
/// maximum, which keeps gradients deterministic.
pub(crate) fn maxpool_frame(
    input: &[f64],
    c: usize,
    w: usize,
    width: usize,
    out: &mut [f64],
    winners: &mut [usize],
) {
    let w_out = w / width;
    debug_assert_eq!(out.len(), c * w_out);
    for b in 0..w_out {
        let base = b * width;
        for ci in 0..c {
            let mut best = input[base * c + ci];
            let mut best_w = base;
            for j in 1..width {
                let v = input[(base + j) * c + ci];
                if v > best {
                    best = v;
                    best_w = base + j;
                }
            }
            out[b * c + ci] = best;
            winners[b * c + ci] = best_w * c + ci;
        }
    }
}

/// Max pool over a plain vector; the layer applies this per channel.
pub fn maxpool1d(input: &[f64], width: usize, stride: usize) -> Vec<f64> {
    assert!(width > 0 && stride > 0, "maxpool1d needs positive width/stride");
    if input.len() < width {
        return Vec::new();
    }
    let n_out = (input.len() - width) / stride + 1;
    (0..n_out)
        .map(|i| {
            input[i * stride..i * stride + width]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Dense affine + activation on a single row.
pub(crate) fn dense_row(
    input: &[f64],
    din: usize,
    dout: usize,
    params: &[f64],
    act: Activation,
    out: &mut [f64],
) {
    debug_assert_eq!(input.len(), din);
    debug_assert_eq!(out.len(), dout);
    let bias = &params[dout * din..];
    for o in 0..dout {
        let wrow = &params[o * din..(o + 1) * din];
        out[o] = act.apply(dot(wrow, input) + bias[o]);
    }
}

/// Backward of `dense_row`; accumulates into `dparams` and `dinput`.
pub(crate) fn dense_row_backward(
    input: &[f64],
    output: &[f64],
    dout: &[f64],
    din: usize,
    dout_dim: usize,
    params: &[f64],
    act: Activation,
    dparams: &mut [f64],
    dinput: &mut [f64],
) {
    let dbias_base = dout_dim * din;
    for o in 0..dout_dim {
        let dpre = dout[o] * act.grad_from_output(output[o]);
        if dpre == 0.0 {
            continue;
        }
        dparams[dbias_base + o] += dpre;
        let wrow = &params[o * din..(o + 1) * din];
        let dwrow = &mut dparams[o * din..(o + 1) * din];
        for i in 0..din {
            dwrow[i] += dpre * input[i];
            dinput[i] += dpre * wrow[i];
        }
    }
}
