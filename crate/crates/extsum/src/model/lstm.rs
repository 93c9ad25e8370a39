//! Minimal LSTM forward/backward primitives used by the recurrent encoder.
//!
//! Gate packing inside the `4H`-row weight matrices and bias is
//! `[input, forget, cell, output]`. Initial hidden and cell states are zero.

use crate::model::{matvec_add, matvec_t_add, outer_add, sigmoid};

/// Weight views for one LSTM direction: `w` is `4H x I`, `u` is `4H x H`,
/// `b` is `4H`, all row-major.
#[derive(Clone, Copy)]
pub(crate) struct LstmWeights<'a> {
    pub w: &'a [f64],
    pub u: &'a [f64],
    pub b: &'a [f64],
}

/// Per-step activations cached for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct LstmCache {
    pub gate_i: Vec<Vec<f64>>,
    pub gate_f: Vec<Vec<f64>>,
    pub gate_g: Vec<Vec<f64>>,
    pub gate_o: Vec<Vec<f64>>,
    pub cell: Vec<Vec<f64>>,
    pub tanh_cell: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmGrads {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
}

pub(crate) fn lstm_forward(
    weights: LstmWeights<'_>,
    hidden_dim: usize,
    inputs: &[Vec<f64>],
) -> LstmCache {
    let h = hidden_dim;
    let t_len = inputs.len();
    let input_dim = if t_len == 0 { 0 } else { inputs[0].len() };
    let mut cache = LstmCache::default();
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];

    for x in inputs {
        let mut z = weights.b.to_vec();
        matvec_add(weights.w, x, &mut z, 4 * h, input_dim);
        matvec_add(weights.u, &h_prev, &mut z, 4 * h, h);

        let gi: Vec<f64> = z[0..h].iter().map(|&v| sigmoid(v)).collect();
        let gf: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let gg: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let go: Vec<f64> = z[3 * h..4 * h].iter().map(|&v| sigmoid(v)).collect();

        let mut c = vec![0.0; h];
        for k in 0..h {
            c[k] = gf[k] * c_prev[k] + gi[k] * gg[k];
        }
        let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let hid: Vec<f64> = go.iter().zip(&tc).map(|(o, t)| o * t).collect();

        cache.gate_i.push(gi);
        cache.gate_f.push(gf);
        cache.gate_g.push(gg);
        cache.gate_o.push(go);
        cache.cell.push(c.clone());
        cache.tanh_cell.push(tc);
        cache.hidden.push(hid.clone());
        h_prev = hid;
        c_prev = c;
    }
    cache
}

/// Backward through time: gradients for the weights and for every input,
/// given the upstream gradient on each hidden state.
pub(crate) fn lstm_backward(
    weights: LstmWeights<'_>,
    hidden_dim: usize,
    inputs: &[Vec<f64>],
    cache: &LstmCache,
    d_hidden: &[Vec<f64>],
) -> LstmGrads {
    let h = hidden_dim;
    let t_len = inputs.len();
    let input_dim = if t_len == 0 { 0 } else { inputs[0].len() };
    let mut grads = LstmGrads {
        w: vec![0.0; 4 * h * input_dim],
        u: vec![0.0; 4 * h * h],
        b: vec![0.0; 4 * h],
        inputs: vec![vec![0.0; input_dim]; t_len],
    };

    let zero = vec![0.0; h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];

    for t in (0..t_len).rev() {
        let gi = &cache.gate_i[t];
        let gf = &cache.gate_f[t];
        let gg = &cache.gate_g[t];
        let go = &cache.gate_o[t];
        let tc = &cache.tanh_cell[t];
        let c_prev = if t == 0 { &zero } else { &cache.cell[t - 1] };
        let h_prev = if t == 0 { &zero } else { &cache.hidden[t - 1] };

        let mut dz = vec![0.0; 4 * h];
        for k in 0..h {
            let dh = d_hidden[t][k] + dh_next[k];
            let d_o = dh * tc[k];
            let dc = dc_next[k] + dh * go[k] * (1.0 - tc[k] * tc[k]);
            let d_i = dc * gg[k];
            let d_g = dc * gi[k];
            let d_f = dc * c_prev[k];
            dc_next[k] = dc * gf[k];

            dz[k] = d_i * gi[k] * (1.0 - gi[k]);
            dz[h + k] = d_f * gf[k] * (1.0 - gf[k]);
            dz[2 * h + k] = d_g * (1.0 - gg[k] * gg[k]);
            dz[3 * h + k] = d_o * go[k] * (1.0 - go[k]);
        }

        outer_add(&mut grads.w, &dz, &inputs[t]);
        outer_add(&mut grads.u, &dz, h_prev);
        for (gb, v) in grads.b.iter_mut().zip(&dz) {
            *gb += v;
        }
        matvec_t_add(weights.w, &dz, &mut grads.inputs[t], 4 * h, input_dim);
        dh_next = vec![0.0; h];
        matvec_t_add(weights.u, &dz, &mut dh_next, 4 * h, h);
    }
    grads
}

/// Forward and reversed-direction caches for one bidirectional layer.
#[derive(Debug, Clone)]
pub(crate) struct BiLstmCache {
    pub fwd: LstmCache,
    pub bwd: LstmCache,
    pub rev_inputs: Vec<Vec<f64>>,
}

/// Runs both directions and concatenates their hidden states per step:
/// `out[t] = [h_fwd[t], h_bwd[T-1-t]]`.
pub(crate) fn bilstm_forward(
    fw: LstmWeights<'_>,
    bw: LstmWeights<'_>,
    hidden_dim: usize,
    inputs: &[Vec<f64>],
) -> (Vec<Vec<f64>>, BiLstmCache) {
    let t_len = inputs.len();
    let fwd = lstm_forward(fw, hidden_dim, inputs);
    let rev_inputs: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
    let bwd = lstm_forward(bw, hidden_dim, &rev_inputs);
    let mut outputs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut out = fwd.hidden[t].clone();
        out.extend_from_slice(&bwd.hidden[t_len - 1 - t]);
        outputs.push(out);
    }
    (outputs, BiLstmCache { fwd, bwd, rev_inputs })
}

pub(crate) struct BiLstmGrads {
    pub fwd: LstmGrads,
    pub bwd: LstmGrads,
    pub inputs: Vec<Vec<f64>>,
}

pub(crate) fn bilstm_backward(
    fw: LstmWeights<'_>,
    bw: LstmWeights<'_>,
    hidden_dim: usize,
    inputs: &[Vec<f64>],
    cache: &BiLstmCache,
    d_outputs: &[Vec<f64>],
) -> BiLstmGrads {
    let h = hidden_dim;
    let t_len = inputs.len();
    let d_fwd: Vec<Vec<f64>> = d_outputs.iter().map(|d| d[0..h].to_vec()).collect();
    let d_bwd: Vec<Vec<f64>> = (0..t_len)
        .map(|t| d_outputs[t_len - 1 - t][h..2 * h].to_vec())
        .collect();

    let fwd = lstm_backward(fw, h, inputs, &cache.fwd, &d_fwd);
    let bwd = lstm_backward(bw, h, &cache.rev_inputs, &cache.bwd, &d_bwd);

    let mut d_inputs = fwd.inputs.clone();
    for t in 0..t_len {
        for (a, b) in d_inputs[t].iter_mut().zip(&bwd.inputs[t_len - 1 - t]) {
            *a += b;
        }
    }
    BiLstmGrads {
        fwd,
        bwd,
        inputs: d_inputs,
    }
}
