//! Layer stacks: initialization, batch forward/backward, streaming steps.
//!
//! The batch forward is a loop over frames calling the same per-frame kernels
//! the streaming path uses, so "unroll step by step" and "run the whole
//! sequence at once" agree bitwise — a property the online simulator leans on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::array::NdArray;
use super::layer::{
    conv_frame, conv_frame_backward, dense_row, dense_row_backward, frame_series, maxpool_frame,
    LayerSpec,
};
use super::lstm::{lstm_cell, lstm_cell_backward};
use crate::error::{Result, RtError};

#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    params: Vec<Vec<f64>>,
}

/// Per-layer auxiliary data captured in the forward pass.
#[derive(Debug, Clone)]
enum LayerAux {
    None,
    Pool { winners: Vec<usize> },
    Recurrent { gates: Vec<f64>, c: Vec<f64>, tanh_c: Vec<f64> },
}

/// Everything the backward pass needs: the network input plus every layer's
/// output (a layer's input is its predecessor's output).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: NdArray,
    outputs: Vec<NdArray>,
    aux: Vec<LayerAux>,
}

/// Incremental evaluation state: buffered raw points that do not yet form a
/// complete frame, plus (h, c) for every recurrent layer.
#[derive(Debug, Clone)]
pub struct StreamState {
    pending: Vec<f64>,
    frames_consumed: usize,
    recurrent: Vec<(Vec<f64>, Vec<f64>)>,
}

impl StreamState {
    pub fn frames_consumed(&self) -> usize {
        self.frames_consumed
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

impl Network {
    /// Build a network with Glorot-uniform weights, zero biases, and LSTM
    /// forget biases at 1. When the stack starts with a framing layer the
    /// whole chain is shape-checked here; otherwise mismatches surface at the
    /// first forward call.
    pub fn new(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(RtError::shape("network needs at least one layer"));
        }
        for (i, spec) in specs.iter().enumerate() {
            if matches!(spec, LayerSpec::Framing { .. }) && i != 0 {
                return Err(RtError::shape(format!(
                    "framing layer only allowed at position 0, found at {i}"
                )));
            }
        }
        if let LayerSpec::Framing { frame_len } = specs[0] {
            // One dummy frame is enough: shape math is independent of T.
            let mut shape = vec![frame_len];
            for (i, spec) in specs.iter().enumerate() {
                shape = spec.output_shape(&shape).map_err(|e| {
                    RtError::shape(format!("layer {i} ({}): {e}", spec.kind_name()))
                })?;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(specs.len());
        for spec in &specs {
            params.push(init_layer(spec, &mut rng));
        }
        Ok(Network { specs, params })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn param_blocks(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn param_blocks_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.params.iter().map(|b| b.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|b| b.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|b| vec![0.0; b.len()]).collect()
    }

    /// Replace all parameters (used by deserialization). Block sizes must
    /// match the specs exactly.
    pub fn set_params(&mut self, params: Vec<Vec<f64>>) -> Result<()> {
        if params.len() != self.specs.len() {
            return Err(RtError::shape(format!(
                "expected {} parameter blocks, got {}",
                self.specs.len(),
                params.len()
            )));
        }
        for (i, (spec, block)) in self.specs.iter().zip(&params).enumerate() {
            if block.len() != spec.param_count() {
                return Err(RtError::shape(format!(
                    "layer {i} ({}) wants {} parameters, got {}",
                    spec.kind_name(),
                    spec.param_count(),
                    block.len()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Batch forward. Returns the final layer output and a cache for
    /// `backward`.
    pub fn forward(&self, input: &NdArray) -> Result<(NdArray, ForwardCache)> {
        let n = self.specs.len();
        let mut outputs: Vec<NdArray> = Vec::with_capacity(n);
        let mut aux: Vec<LayerAux> = Vec::with_capacity(n);
        for (li, spec) in self.specs.iter().enumerate() {
            let cur = if li == 0 { input } else { &outputs[li - 1] };
            let out_shape = spec
                .output_shape(cur.shape())
                .map_err(|e| RtError::shape(format!("layer {li} ({}): {e}", spec.kind_name())))?;
            let (out, a) = self.forward_layer(li, spec, cur, &out_shape)?;
            outputs.push(out);
            aux.push(a);
        }
        let final_out = outputs.last().expect("nonempty network").clone();
        Ok((
            final_out,
            ForwardCache {
                input: input.clone(),
                outputs,
                aux,
            },
        ))
    }

    fn forward_layer(
        &self,
        li: usize,
        spec: &LayerSpec,
        cur: &NdArray,
        out_shape: &[usize],
    ) -> Result<(NdArray, LayerAux)> {
        let params = &self.params[li];
        match *spec {
            LayerSpec::Framing { frame_len } => {
                let data = frame_series(cur.data(), frame_len);
                Ok((NdArray::from_vec(out_shape.to_vec(), data)?, LayerAux::None))
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                activation,
            } => {
                let t = cur.shape()[0];
                let w = cur.shape()[1];
                let fin = in_channels * w;
                let fout = out_channels * w;
                let mut data = vec![0.0; t * fout];
                for ti in 0..t {
                    conv_frame(
                        &cur.data()[ti * fin..(ti + 1) * fin],
                        in_channels,
                        w,
                        out_channels,
                        kernel,
                        params,
                        activation,
                        &mut data[ti * fout..(ti + 1) * fout],
                    );
                }
                Ok((NdArray::from_vec(out_shape.to_vec(), data)?, LayerAux::None))
            }
            LayerSpec::MaxPool1d { width } => {
                let t = cur.shape()[0];
                let w = cur.shape()[1];
                let c = if cur.rank() == 3 { cur.shape()[2] } else { 1 };
                let w_out = w / width;
                let fin = c * w;
                let fout = c * w_out;
                let mut data = vec![0.0; t * fout];
                let mut winners = vec![0usize; t * fout];
                for ti in 0..t {
                    let mut local = vec![0usize; fout];
                    maxpool_frame(
                        &cur.data()[ti * fin..(ti + 1) * fin],
                        c,
                        w,
                        width,
                        &mut data[ti * fout..(ti + 1) * fout],
                        &mut local,
                    );
                    for (k, &lw) in local.iter().enumerate() {
                        winners[ti * fout + k] = ti * fin + lw;
                    }
                }
                Ok((
                    NdArray::from_vec(out_shape.to_vec(), data)?,
                    LayerAux::Pool { winners },
                ))
            }
            LayerSpec::Recurrent { input_dim, hidden } => {
                let t = cur.shape()[0];
                let mut gates = vec![0.0; t * 4 * hidden];
                let mut c_all = vec![0.0; t * hidden];
                let mut tanh_c = vec![0.0; t * hidden];
                let mut h_all = vec![0.0; t * hidden];
                let mut h_prev = vec![0.0; hidden];
                let mut c_prev = vec![0.0; hidden];
                let mut zin = vec![0.0; input_dim + hidden];
                for ti in 0..t {
                    let x = &cur.data()[ti * input_dim..(ti + 1) * input_dim];
                    let (g, c_o, tc, h_o) = (
                        &mut gates[ti * 4 * hidden..(ti + 1) * 4 * hidden],
                        &mut c_all[ti * hidden..(ti + 1) * hidden],
                        &mut tanh_c[ti * hidden..(ti + 1) * hidden],
                        &mut h_all[ti * hidden..(ti + 1) * hidden],
                    );
                    lstm_cell(params, input_dim, hidden, &mut zin, x, &h_prev, &c_prev, g, c_o, tc, h_o);
                    h_prev.copy_from_slice(h_o);
                    c_prev.copy_from_slice(c_o);
                }
                Ok((
                    NdArray::from_vec(out_shape.to_vec(), h_all)?,
                    LayerAux::Recurrent {
                        gates,
                        c: c_all,
                        tanh_c,
                    },
                ))
            }
            LayerSpec::Dense {
                input_dim,
                output_dim,
                activation,
            } => {
                let t = cur.shape()[0];
                let mut data = vec![0.0; t * output_dim];
                for ti in 0..t {
                    dense_row(
                        &cur.data()[ti * input_dim..(ti + 1) * input_dim],
                        input_dim,
                        output_dim,
                        params,
                        activation,
                        &mut data[ti * output_dim..(ti + 1) * output_dim],
                    );
                }
                Ok((NdArray::from_vec(out_shape.to_vec(), data)?, LayerAux::None))
            }
        }
    }

    /// Reverse-mode gradients. Returns per-layer parameter gradients (layout
    /// mirrors `param_blocks`) and the gradient at the network input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &NdArray) -> Result<(Vec<Vec<f64>>, NdArray)> {
        let n = self.specs.len();
        let last = cache.outputs.last().expect("cache from forward");
        if grad_out.shape() != last.shape() {
            return Err(RtError::shape(format!(
                "grad shape {:?} does not match output shape {:?}",
                grad_out.shape(),
                last.shape()
            )));
        }
        let mut grads = self.zero_grads();
        let mut dcur: Vec<f64> = grad_out.data().to_vec();
        for li in (0..n).rev() {
            let layer_in: &NdArray = if li == 0 { &cache.input } else { &cache.outputs[li - 1] };
            let layer_out = &cache.outputs[li];
            let mut dinput = vec![0.0; layer_in.len()];
            self.backward_layer(li, layer_in, layer_out, &cache.aux[li], &dcur, &mut grads[li], &mut dinput);
            dcur = dinput;
        }
        let din = NdArray::from_vec(cache.input.shape().to_vec(), dcur)?;
        Ok((grads, din))
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_layer(
        &self,
        li: usize,
        layer_in: &NdArray,
        layer_out: &NdArray,
        aux: &LayerAux,
        dout: &[f64],
        dparams: &mut [f64],
        dinput: &mut [f64],
    ) {
        let params = &self.params[li];
        match self.specs[li] {
            LayerSpec::Framing { .. } => {
                // Gradient of zero-pad positions is discarded.
                dinput.copy_from_slice(&dout[..dinput.len()]);
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                activation,
            } => {
                let t = layer_in.shape()[0];
                let w = layer_in.shape()[1];
                let fin = in_channels * w;
                let fout = out_channels * w;
                for ti in 0..t {
                    conv_frame_backward(
                        &layer_in.data()[ti * fin..(ti + 1) * fin],
                        &layer_out.data()[ti * fout..(ti + 1) * fout],
                        &dout[ti * fout..(ti + 1) * fout],
                        in_channels,
                        w,
                        out_channels,
                        kernel,
                        params,
                        activation,
                        dparams,
                        &mut dinput[ti * fin..(ti + 1) * fin],
                    );
                }
            }
            LayerSpec::MaxPool1d { .. } => {
                let LayerAux::Pool { winners } = aux else {
                    unreachable!("pool layer cached without winners");
                };
                for (k, &src) in winners.iter().enumerate() {
                    dinput[src] += dout[k];
                }
            }
            LayerSpec::Recurrent { input_dim, hidden } => {
                let LayerAux::Recurrent { gates, c, tanh_c } = aux else {
                    unreachable!("recurrent layer cached without state");
                };
                let t = layer_in.shape()[0];
                let h_all = layer_out.data();
                let zeros = vec![0.0; hidden];
                let mut dh_next = vec![0.0; hidden];
                let mut dc_next = vec![0.0; hidden];
                let mut dh = vec![0.0; hidden];
                let mut dc_prev = vec![0.0; hidden];
                let mut zin = vec![0.0; input_dim + hidden];
                let mut dzin = vec![0.0; input_dim + hidden];
                for ti in (0..t).rev() {
                    for u in 0..hidden {
                        dh[u] = dout[ti * hidden + u] + dh_next[u];
                    }
                    let h_prev = if ti == 0 { &zeros[..] } else { &h_all[(ti - 1) * hidden..ti * hidden] };
                    let c_prev = if ti == 0 { &zeros[..] } else { &c[(ti - 1) * hidden..ti * hidden] };
                    zin[..input_dim]
                        .copy_from_slice(&layer_in.data()[ti * input_dim..(ti + 1) * input_dim]);
                    zin[input_dim..].copy_from_slice(h_prev);
                    dzin.fill(0.0);
                    dc_prev.fill(0.0);
                    lstm_cell_backward(
                        params,
                        input_dim,
                        hidden,
                        &zin,
                        c_prev,
                        &gates[ti * 4 * hidden..(ti + 1) * 4 * hidden],
                        &tanh_c[ti * hidden..(ti + 1) * hidden],
                        &dh,
                        &dc_next,
                        dparams,
                        &mut dzin,
                        &mut dc_prev,
                    );
                    dinput[ti * input_dim..(ti + 1) * input_dim].copy_from_slice(&dzin[..input_dim]);
                    dh_next.copy_from_slice(&dzin[input_dim..]);
                    dc_next.copy_from_slice(&dc_prev);
                }
            }
            LayerSpec::Dense {
                input_dim,
                output_dim,
                activation,
            } => {
                let t = layer_in.shape()[0];
                for ti in 0..t {
                    dense_row_backward(
                        &layer_in.data()[ti * input_dim..(ti + 1) * input_dim],
                        &layer_out.data()[ti * output_dim..(ti + 1) * output_dim],
                        &dout[ti * output_dim..(ti + 1) * output_dim],
                        input_dim,
                        output_dim,
                        params,
                        activation,
                        dparams,
                        &mut dinput[ti * input_dim..(ti + 1) * input_dim],
                    );
                }
            }
        }
    }

    /// Start incremental evaluation. The stack must begin with a framing
    /// layer, contain at least one recurrent layer, and have only dense
    /// layers after the last recurrent one (so a readout exists at any time).
    pub fn stream_init(&self) -> Result<StreamState> {
        if !matches!(self.specs[0], LayerSpec::Framing { .. }) {
            return Err(RtError::shape("streaming needs a framing layer first"));
        }
        let last_rec = self
            .specs
            .iter()
            .rposition(|s| matches!(s, LayerSpec::Recurrent { .. }))
            .ok_or_else(|| RtError::shape("streaming needs at least one recurrent layer"))?;
        for (i, s) in self.specs.iter().enumerate().skip(last_rec + 1) {
            if !matches!(s, LayerSpec::Dense { .. }) {
                return Err(RtError::shape(format!(
                    "layer {i} ({}) after the last recurrent layer; only dense allowed",
                    s.kind_name()
                )));
            }
        }
        let recurrent = self
            .specs
            .iter()
            .filter_map(|s| match *s {
                LayerSpec::Recurrent { hidden, .. } => Some((vec![0.0; hidden], vec![0.0; hidden])),
                _ => None,
            })
            .collect();
        Ok(StreamState {
            pending: Vec::new(),
            frames_consumed: 0,
            recurrent,
        })
    }

    /// Feed raw points; complete frames are consumed immediately, the
    /// remainder is buffered. Returns the number of frames consumed.
    pub fn stream_push(&self, state: &mut StreamState, points: &[f64]) -> Result<usize> {
        let LayerSpec::Framing { frame_len } = self.specs[0] else {
            return Err(RtError::shape("stream_push on a non-streaming network"));
        };
        state.pending.extend_from_slice(points);
        let mut consumed = 0;
        while state.pending.len() >= frame_len {
            let frame: Vec<f64> = state.pending.drain(..frame_len).collect();
            self.step_frame(state, &frame)?;
            consumed += 1;
        }
        Ok(consumed)
    }

    fn step_frame(&self, state: &mut StreamState, frame: &[f64]) -> Result<()> {
        let mut cur = frame.to_vec();
        // (width, channels) of `cur` while it is still frame-shaped
        // (channel-last, matching the kernels).
        let mut w = frame.len();
        let mut c = 1usize;
        let mut ri = 0usize;
        for (li, spec) in self.specs.iter().enumerate().skip(1) {
            let params = &self.params[li];
            match *spec {
                LayerSpec::Framing { .. } => unreachable!("validated in stream_init"),
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    activation,
                } => {
                    if c != in_channels {
                        return Err(RtError::shape(format!(
                            "layer {li}: conv1d expects {in_channels} channels, got {c}"
                        )));
                    }
                    let mut out = vec![0.0; w * out_channels];
                    conv_frame(&cur, c, w, out_channels, kernel, params, activation, &mut out);
                    cur = out;
                    c = out_channels;
                }
                LayerSpec::MaxPool1d { width } => {
                    let w_out = w / width;
                    let mut out = vec![0.0; w_out * c];
                    let mut winners = vec![0usize; w_out * c];
                    maxpool_frame(&cur, c, w, width, &mut out, &mut winners);
                    cur = out;
                    w = w_out;
                }
                LayerSpec::Recurrent { input_dim, hidden } => {
                    if cur.len() != input_dim {
                        return Err(RtError::shape(format!(
                            "layer {li}: recurrent expects input_dim {input_dim}, got {}",
                            cur.len()
                        )));
                    }
                    let mut zin = vec![0.0; input_dim + hidden];
                    let mut gates = vec![0.0; 4 * hidden];
                    let mut c_new = vec![0.0; hidden];
                    let mut tanh_c = vec![0.0; hidden];
                    let mut h_new = vec![0.0; hidden];
                    {
                        let (h_prev, c_prev) = &state.recurrent[ri];
                        lstm_cell(
                            params, input_dim, hidden, &mut zin, &cur, h_prev, c_prev,
                            &mut gates, &mut c_new, &mut tanh_c, &mut h_new,
                        );
                    }
                    state.recurrent[ri].0.copy_from_slice(&h_new);
                    state.recurrent[ri].1.copy_from_slice(&c_new);
                    cur = h_new;
                    w = cur.len();
                    c = 1;
                    ri += 1;
                }
                LayerSpec::Dense {
                    input_dim,
                    output_dim,
                    activation,
                } => {
                    let mut out = vec![0.0; output_dim];
                    dense_row(&cur, input_dim, output_dim, params, activation, &mut out);
                    cur = out;
                    w = output_dim;
                    c = 1;
                }
            }
        }
        state.frames_consumed += 1;
        Ok(())
    }

    /// Readout at the current stream position: the dense layers after the
    /// last recurrent layer applied to its hidden state. Valid even before
    /// any frame has been consumed (all-zero hidden state).
    pub fn stream_output(&self, state: &StreamState) -> Result<Vec<f64>> {
        let last_rec = self
            .specs
            .iter()
            .rposition(|s| matches!(s, LayerSpec::Recurrent { .. }))
            .ok_or_else(|| RtError::shape("stream_output needs a recurrent layer"))?;
        let n_rec = self
            .specs
            .iter()
            .filter(|s| matches!(s, LayerSpec::Recurrent { .. }))
            .count();
        let mut cur = state.recurrent[n_rec - 1].0.clone();
        for (li, spec) in self.specs.iter().enumerate().skip(last_rec + 1) {
            let LayerSpec::Dense {
                input_dim,
                output_dim,
                activation,
            } = *spec
            else {
                unreachable!("validated in stream_init");
            };
            let mut out = vec![0.0; output_dim];
            dense_row(&cur, input_dim, output_dim, &self.params[li], activation, &mut out);
            cur = out;
            let _ = li;
        }
        Ok(cur)
    }
}

fn init_layer(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut uniform = |n: usize, limit: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
    };
    match *spec {
        LayerSpec::Framing { .. } | LayerSpec::MaxPool1d { .. } => Vec::new(),
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => {
            let limit = (6.0 / ((in_channels + out_channels) * kernel) as f64).sqrt();
            let mut p = uniform(out_channels * in_channels * kernel, limit);
            p.extend(std::iter::repeat(0.0).take(out_channels));
            p
        }
        LayerSpec::Recurrent { input_dim, hidden } => {
            let limit = (6.0 / (input_dim + 2 * hidden) as f64).sqrt();
            let mut p = uniform(4 * hidden * (input_dim + hidden), limit);
            // Biases: zero, except the forget gate rows start at 1 so early
            // training does not wash out the cell state.
            let mut bias = vec![0.0; 4 * hidden];
            bias[hidden..2 * hidden].fill(1.0);
            p.extend(bias);
            p
        }
        LayerSpec::Dense {
            input_dim,
            output_dim,
            ..
        } => {
            let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
            let mut p = uniform(output_dim * input_dim, limit);
            p.extend(std::iter::repeat(0.0).take(output_dim));
            p
        }
    }
}
