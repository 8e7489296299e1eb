//! Parameter layouts and forward graphs for the three sequence classifiers.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::graph::{Mat, NodeId, Tape};
use super::{Architecture, ModelConfig, TsModelError};
use crate::embed::MultimodalSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Layer-norm scale, initialized to one.
    Gain,
    /// Learned positional encoding.
    Positional,
}

#[derive(Debug, Clone)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

/// Named layout over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    entries: Vec<LayoutEntry>,
    total: usize,
}

impl ParamLayout {
    fn push(&mut self, name: String, rows: usize, cols: usize, kind: ParamKind) {
        self.entries.push(LayoutEntry {
            name,
            offset: self.total,
            rows,
            cols,
            kind,
        });
        self.total += rows * cols;
    }

    pub fn get(&self, name: &str) -> &LayoutEntry {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

fn push_transformer_layers(layout: &mut ParamLayout, n_layers: usize, d: usize) {
    for l in 0..n_layers {
        let p = |s: &str| format!("l{l}.{s}");
        layout.push(p("ln1.g"), 1, d, ParamKind::Gain);
        layout.push(p("ln1.b"), 1, d, ParamKind::Bias);
        for name in ["wq", "wk", "wv", "wo"] {
            layout.push(p(name), d, d, ParamKind::Weight);
        }
        for name in ["bq", "bk", "bv", "bo"] {
            layout.push(p(name), 1, d, ParamKind::Bias);
        }
        layout.push(p("ln2.g"), 1, d, ParamKind::Gain);
        layout.push(p("ln2.b"), 1, d, ParamKind::Bias);
        layout.push(p("w1"), d, 4 * d, ParamKind::Weight);
        layout.push(p("b1"), 1, 4 * d, ParamKind::Bias);
        layout.push(p("w2"), 4 * d, d, ParamKind::Weight);
        layout.push(p("b2"), 1, d, ParamKind::Bias);
    }
}

/// Patch count for the channel-independent variant.
pub fn patch_count(t: usize, patch_len: usize, stride: usize) -> usize {
    (t - patch_len) / stride + 1
}

pub fn build_layout(config: &ModelConfig) -> ParamLayout {
    let d = config.d_model;
    let mut layout = ParamLayout {
        entries: Vec::new(),
        total: 0,
    };
    match config.architecture {
        Architecture::ITransformer => {
            layout.push("embed.w".into(), config.t_months, d, ParamKind::Weight);
            layout.push("embed.b".into(), 1, d, ParamKind::Bias);
            push_transformer_layers(&mut layout, config.n_layers, d);
            layout.push("head.w".into(), d, 1, ParamKind::Weight);
            layout.push("head.b".into(), 1, 1, ParamKind::Bias);
        }
        Architecture::PatchTst => {
            let p = patch_count(config.t_months, config.patch_len, config.stride);
            layout.push("embed.w".into(), config.patch_len, d, ParamKind::Weight);
            layout.push("embed.b".into(), 1, d, ParamKind::Bias);
            layout.push("pos".into(), p, d, ParamKind::Positional);
            push_transformer_layers(&mut layout, config.n_layers, d);
            layout.push("head.w".into(), d, 1, ParamKind::Weight);
            layout.push("head.b".into(), 1, 1, ParamKind::Bias);
        }
        Architecture::MeanPool => {
            layout.push("w1".into(), config.n_variates, d, ParamKind::Weight);
            layout.push("b1".into(), 1, d, ParamKind::Bias);
            layout.push("w2".into(), d, 1, ParamKind::Weight);
            layout.push("b2".into(), 1, 1, ParamKind::Bias);
        }
    }
    layout
}

/// Scaled-uniform weight init from the model seed; biases zero, norm gains
/// one.
pub fn init_params(config: &ModelConfig) -> Vec<f64> {
    let layout = build_layout(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = vec![0.0; layout.total()];
    for entry in layout.entries() {
        let slice = &mut params[entry.offset..entry.offset + entry.rows * entry.cols];
        match entry.kind {
            ParamKind::Weight | ParamKind::Positional => {
                let bound = (6.0 / (entry.rows + entry.cols) as f64).sqrt();
                for v in slice {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            ParamKind::Bias => {}
            ParamKind::Gain => slice.fill(1.0),
        }
    }
    params
}

/// Dropout source during a training forward pass.
pub struct DropoutState<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub rate: f64,
}

fn param_node(tape: &mut Tape, params: &[f64], layout: &ParamLayout, name: &str) -> NodeId {
    let e = layout.get(name);
    tape.param(params, e.offset, e.rows, e.cols)
}

fn maybe_dropout(tape: &mut Tape, node: NodeId, dropout: &mut Option<DropoutState<'_>>) -> NodeId {
    let Some(state) = dropout else { return node };
    if state.rate <= 0.0 {
        return node;
    }
    let value = tape.value(node);
    let (rows, cols) = (value.rows, value.cols);
    let keep = 1.0 - state.rate;
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            if state.rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    let mask = tape.constant(Mat::from_vec(rows, cols, data));
    tape.hadamard(node, mask)
}

/// One pre-norm block: x + Drop(MHA(LN(x))), then x + Drop(FFN(LN(x))).
/// Dropout sits on the attention output projection and the FFN output.
fn transformer_block(
    tape: &mut Tape,
    params: &[f64],
    layout: &ParamLayout,
    layer: usize,
    x: NodeId,
    config: &ModelConfig,
    dropout: &mut Option<DropoutState<'_>>,
) -> NodeId {
    let p = |s: &str| format!("l{layer}.{s}");
    let d = config.d_model;
    let dh = d / config.n_heads;

    let ln1_g = param_node(tape, params, layout, &p("ln1.g"));
    let ln1_b = param_node(tape, params, layout, &p("ln1.b"));
    let normed = tape.layer_norm(x, ln1_g, ln1_b);

    let proj = |tape: &mut Tape, w: &str, b: &str| {
        let w = param_node(tape, params, layout, &p(w));
        let b = param_node(tape, params, layout, &p(b));
        let xw = tape.matmul(normed, w);
        tape.add_row(xw, b)
    };
    let q = proj(tape, "wq", "bq");
    let k = proj(tape, "wk", "bk");
    let v = proj(tape, "wv", "bv");

    let mut heads = Vec::with_capacity(config.n_heads);
    for h in 0..config.n_heads {
        let qh = tape.slice_cols(q, h * dh, dh);
        let kh = tape.slice_cols(k, h * dh, dh);
        let vh = tape.slice_cols(v, h * dh, dh);
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt);
        let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = tape.softmax_rows(scaled);
        heads.push(tape.matmul(attn, vh));
    }
    let merged = tape.concat_cols(&heads);
    let wo = param_node(tape, params, layout, &p("wo"));
    let bo = param_node(tape, params, layout, &p("bo"));
    let ow = tape.matmul(merged, wo);
    let out = tape.add_row(ow, bo);
    let out = maybe_dropout(tape, out, dropout);
    let x = tape.add(x, out);

    let ln2_g = param_node(tape, params, layout, &p("ln2.g"));
    let ln2_b = param_node(tape, params, layout, &p("ln2.b"));
    let normed = tape.layer_norm(x, ln2_g, ln2_b);
    let w1 = param_node(tape, params, layout, &p("w1"));
    let b1 = param_node(tape, params, layout, &p("b1"));
    let h1 = tape.matmul(normed, w1);
    let h1 = tape.add_row(h1, b1);
    let act = tape.gelu(h1);
    let w2 = param_node(tape, params, layout, &p("w2"));
    let b2 = param_node(tape, params, layout, &p("b2"));
    let h2 = tape.matmul(act, w2);
    let ffn = tape.add_row(h2, b2);
    let ffn = maybe_dropout(tape, ffn, dropout);
    tape.add(x, ffn)
}

fn check_shape(z: &MultimodalSequence, config: &ModelConfig) -> Result<(), TsModelError> {
    if z.t_months() != config.t_months || z.width() != config.n_variates {
        return Err(TsModelError::Shape {
            expected: (config.t_months, config.n_variates),
            got: (z.t_months(), z.width()),
        });
    }
    Ok(())
}

fn head(tape: &mut Tape, params: &[f64], layout: &ParamLayout, pooled: NodeId) -> NodeId {
    let w = param_node(tape, params, layout, "head.w");
    let b = param_node(tape, params, layout, "head.b");
    let hw = tape.matmul(pooled, w);
    tape.add(hw, b)
}

/// Each variate's length-T series becomes one token via a shared affine
/// map; attention mixes the variate tokens; mean-pool, affine head.
pub fn forward_itransformer(
    tape: &mut Tape,
    params: &[f64],
    layout: &ParamLayout,
    z: &MultimodalSequence,
    config: &ModelConfig,
    mut dropout: Option<DropoutState<'_>>,
) -> Result<NodeId, TsModelError> {
    check_shape(z, config)?;
    let t = config.t_months;
    let v = config.n_variates;
    let flat: Vec<f64> = z.rows.iter().flatten().copied().collect();
    let zmat = tape.constant(Mat::from_vec(t, v, flat));
    let zt = tape.transpose(zmat);
    let ew = param_node(tape, params, layout, "embed.w");
    let eb = param_node(tape, params, layout, "embed.b");
    let emb = tape.matmul(zt, ew);
    let mut tokens = tape.add_row(emb, eb);
    for layer in 0..config.n_layers {
        tokens = transformer_block(tape, params, layout, layer, tokens, config, &mut dropout);
    }
    let pooled = tape.mean_rows(tokens);
    Ok(head(tape, params, layout, pooled))
}

/// Channel-independent: each variate's series is patched, embedded with a
/// learned positional encoding, run through the shared transformer, and
/// pooled; channel means are averaged before the head.
pub fn forward_patchtst(
    tape: &mut Tape,
    params: &[f64],
    layout: &ParamLayout,
    z: &MultimodalSequence,
    config: &ModelConfig,
    mut dropout: Option<DropoutState<'_>>,
) -> Result<NodeId, TsModelError> {
    check_shape(z, config)?;
    if config.patch_len > config.t_months {
        return Err(TsModelError::Config(format!(
            "patch_len {} exceeds sequence length {}",
            config.patch_len, config.t_months
        )));
    }
    let n_patches = patch_count(config.t_months, config.patch_len, config.stride);
    let mut channel_means = Vec::with_capacity(config.n_variates);
    for channel in 0..config.n_variates {
        let mut data = Vec::with_capacity(n_patches * config.patch_len);
        for p in 0..n_patches {
            for i in 0..config.patch_len {
                data.push(z.rows[p * config.stride + i][channel]);
            }
        }
        let patches = tape.constant(Mat::from_vec(n_patches, config.patch_len, data));
        let ew = param_node(tape, params, layout, "embed.w");
        let eb = param_node(tape, params, layout, "embed.b");
        let pos = param_node(tape, params, layout, "pos");
        let emb = tape.matmul(patches, ew);
        let emb = tape.add_row(emb, eb);
        let mut tokens = tape.add(emb, pos);
        for layer in 0..config.n_layers {
            tokens = transformer_block(tape, params, layout, layer, tokens, config, &mut dropout);
        }
        channel_means.push(tape.mean_rows(tokens));
    }
    let mut acc = channel_means[0];
    for &m in &channel_means[1..] {
        acc = tape.add(acc, m);
    }
    let pooled = tape.scale(acc, 1.0 / config.n_variates as f64);
    Ok(head(tape, params, layout, pooled))
}

/// Masked mean over months, then a 2-layer GELU MLP. All months missing
/// degenerates to the zero vector, which is still a valid input.
pub fn forward_meanpool(
    tape: &mut Tape,
    params: &[f64],
    layout: &ParamLayout,
    z: &MultimodalSequence,
    config: &ModelConfig,
) -> Result<NodeId, TsModelError> {
    check_shape(z, config)?;
    let v = config.n_variates;
    let mut mean = vec![0.0; v];
    let present = z.mask.iter().filter(|&&m| m).count();
    if present > 0 {
        for (row, &keep) in z.rows.iter().zip(&z.mask) {
            if keep {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
        }
        for m in &mut mean {
            *m /= present as f64;
        }
    }
    let x = tape.constant(Mat::from_vec(1, v, mean));
    let w1 = param_node(tape, params, layout, "w1");
    let b1 = param_node(tape, params, layout, "b1");
    let h = tape.matmul(x, w1);
    let h = tape.add_row(h, b1);
    let act = tape.gelu(h);
    let w2 = param_node(tape, params, layout, "w2");
    let b2 = param_node(tape, params, layout, "b2");
    let hw = tape.matmul(act, w2);
    Ok(tape.add(hw, b2))
}

/// Builds the forward graph for the configured architecture and returns the
/// logit node.
pub fn forward(
    tape: &mut Tape,
    params: &[f64],
    layout: &ParamLayout,
    z: &MultimodalSequence,
    config: &ModelConfig,
    dropout: Option<DropoutState<'_>>,
) -> Result<NodeId, TsModelError> {
    match config.architecture {
        Architecture::ITransformer => forward_itransformer(tape, params, layout, z, config, dropout),
        Architecture::PatchTst => forward_patchtst(tape, params, layout, z, config, dropout),
        Architecture::MeanPool => forward_meanpool(tape, params, layout, z, config),
    }
}
