//! Forward and reverse passes for one turn-group: every candidate slot that
//! shares a context and current turn is scored against a single encoding.

use super::lstm::{lstm_backward, lstm_forward, LstmTrace};
use super::params::{axpy, dot, sigmoid, BiLstm, Mat, Params};

pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSlot {
    pub key: Vec<usize>,
    pub value: Vec<usize>,
    pub distance: usize,
    pub label: Option<bool>,
}

/// Token ids of one context window and current turn plus the candidates
/// scored against them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGroup {
    pub context: Vec<usize>,
    pub current: Vec<usize>,
    pub slots: Vec<EncodedSlot>,
}

struct SideTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
    len: usize,
}

impl SideTrace {
    fn state(&self, p: usize, out: &mut Vec<f64>) {
        out.extend_from_slice(self.fwd.h(p));
        out.extend_from_slice(self.bwd.h(self.len - 1 - p));
    }
}

fn encode_side(enc: &BiLstm, emb: &Mat, ids: &[usize]) -> SideTrace {
    SideTrace {
        fwd: lstm_forward(&enc.fwd, ids.iter().map(|&i| emb.row(i))),
        bwd: lstm_forward(&enc.bwd, ids.iter().rev().map(|&i| emb.row(i))),
        len: ids.len(),
    }
}

struct SlotTrace {
    /// [mean key; mean value; distance] embedding.
    u: Vec<f64>,
    s: Vec<f64>,
    /// tanh(W_q s + W_m m_i), one row per memory position.
    att_tanh: Vec<f64>,
    alpha: Vec<f64>,
    dec_in: Vec<f64>,
    z: Vec<f64>,
    clamped: bool,
    p: f64,
    logit: f64,
}

pub struct GroupTrace {
    context: Option<SideTrace>,
    current: SideTrace,
    /// Memory states, context positions first, each 2H wide.
    memory: Vec<f64>,
    mem_len: usize,
    slots: Vec<SlotTrace>,
}

impl GroupTrace {
    pub fn probabilities(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.p).collect()
    }

    pub fn logits(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.logit).collect()
    }

    /// Attention weights of slot `k` over all memory positions.
    pub fn attention(&self, k: usize) -> &[f64] {
        &self.slots[k].alpha
    }
}

fn mean_rows(emb: &Mat, ids: &[usize], out: &mut Vec<f64>) {
    let start = out.len();
    out.extend(std::iter::repeat_n(0.0, emb.cols));
    let scale = 1.0 / ids.len() as f64;
    for &i in ids {
        axpy(scale, emb.row(i), &mut out[start..]);
    }
}

pub fn forward_group(params: &Params, group: &EncodedGroup) -> GroupTrace {
    let emb = &params.embedding;
    let two_h = 2 * params.context_encoder.fwd.hidden();
    let context = (!group.context.is_empty()).then(|| encode_side(&params.context_encoder, emb, &group.context));
    let current = encode_side(&params.current_encoder, emb, &group.current);

    let mut memory = Vec::with_capacity((group.context.len() + group.current.len()) * two_h);
    if let Some(ctx) = &context {
        for p in 0..ctx.len {
            ctx.state(p, &mut memory);
        }
    }
    for p in 0..current.len {
        current.state(p, &mut memory);
    }
    let mem_len = memory.len() / two_h;
    let a = params.att_score.rows;
    let mut projected = vec![0.0; mem_len * a];
    for i in 0..mem_len {
        params.att_memory.matvec_into(&memory[i * two_h..(i + 1) * two_h], &mut projected[i * a..(i + 1) * a]);
    }
    let mut final_state = Vec::with_capacity(two_h);
    final_state.extend_from_slice(current.fwd.h(current.len - 1));
    final_state.extend_from_slice(current.bwd.h(current.len - 1));

    let slots = group
        .slots
        .iter()
        .map(|slot| {
            let mut u = Vec::with_capacity(3 * emb.cols);
            mean_rows(emb, &slot.key, &mut u);
            mean_rows(emb, &slot.value, &mut u);
            let d = slot.distance.min(params.distance.rows - 1);
            u.extend_from_slice(params.distance.row(d));

            let mut s = params.slot_b.data.clone();
            params.slot_w.matvec_into(&u, &mut s);
            let mut q = vec![0.0; a];
            params.att_query.matvec_into(&s, &mut q);

            let mut att_tanh = vec![0.0; mem_len * a];
            let mut scores = vec![0.0; mem_len];
            for i in 0..mem_len {
                let row = &mut att_tanh[i * a..(i + 1) * a];
                for ((r, qv), pv) in row.iter_mut().zip(&q).zip(&projected[i * a..(i + 1) * a]) {
                    *r = (qv + pv).tanh();
                }
                scores[i] = dot(&params.att_score.data, row);
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut alpha: Vec<f64> = scores.iter().map(|e| (e - max).exp()).collect();
            let total: f64 = alpha.iter().sum();
            alpha.iter_mut().for_each(|v| *v /= total);

            let mut dec_in = Vec::with_capacity(3 * two_h);
            dec_in.extend_from_slice(&s);
            let cstart = dec_in.len();
            dec_in.extend(std::iter::repeat_n(0.0, two_h));
            for (i, &al) in alpha.iter().enumerate() {
                axpy(al, &memory[i * two_h..(i + 1) * two_h], &mut dec_in[cstart..]);
            }
            dec_in.extend_from_slice(&final_state);

            let mut z = params.dec_b.data.clone();
            params.dec_w.matvec_into(&dec_in, &mut z);
            z.iter_mut().for_each(|v| *v = v.tanh());
            let raw = dot(&params.out_w.data, &z) + params.out_b.data[0];
            let clamped = raw.abs() > LOGIT_CLAMP;
            let logit = raw.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
            SlotTrace { u, s, att_tanh, alpha, dec_in, z, clamped, p: sigmoid(logit), logit }
        })
        .collect();
    GroupTrace { context, current, memory, mem_len, slots }
}

/// ln σ(x) without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Class-weighted binary cross-entropy of one prediction and its derivative
/// with respect to the (clamped) logit.
pub fn weighted_bce(logit: f64, label: bool, positive_weight: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    if label {
        (-positive_weight * log_sigmoid(logit), positive_weight * (p - 1.0))
    } else {
        (-log_sigmoid(-logit), p)
    }
}

/// Accumulates the gradient of Σ dlogit[k]·logit[k] into `grads`.
pub fn backward_group(params: &Params, group: &EncodedGroup, trace: &GroupTrace, dlogits: &[f64], grads: &mut Params) {
    let emb = &params.embedding;
    let e = emb.cols;
    let h = params.context_encoder.fwd.hidden();
    let two_h = 2 * h;
    let a = params.att_score.rows;
    let n = trace.mem_len;
    let mut d_memory = vec![0.0; n * two_h];
    let mut d_projected = vec![0.0; n * a];
    let mut d_final = vec![0.0; two_h];

    for ((slot, st), &dl) in group.slots.iter().zip(&trace.slots).zip(dlogits) {
        if dl == 0.0 || st.clamped {
            continue;
        }
        grads.out_b.data[0] += dl;
        axpy(dl, &st.z, &mut grads.out_w.data);
        let d_pre: Vec<f64> = st.z.iter().zip(&params.out_w.data).map(|(z, w)| dl * w * (1.0 - z * z)).collect();
        grads.dec_w.add_outer(&d_pre, &st.dec_in);
        axpy(1.0, &d_pre, &mut grads.dec_b.data);
        let mut d_in = vec![0.0; 3 * two_h];
        params.dec_w.matvec_t_into(&d_pre, &mut d_in);
        let (d_s_dec, rest) = d_in.split_at(two_h);
        let (d_c, d_f) = rest.split_at(two_h);
        axpy(1.0, d_f, &mut d_final);

        // Attention: c = Σ α_i m_i, α = softmax(v · tanh(q + P_i)).
        let d_alpha: Vec<f64> = (0..n).map(|i| dot(d_c, &trace.memory[i * two_h..(i + 1) * two_h])).collect();
        let mean: f64 = st.alpha.iter().zip(&d_alpha).map(|(al, da)| al * da).sum();
        let mut d_q = vec![0.0; a];
        for i in 0..n {
            let al = st.alpha[i];
            axpy(al, d_c, &mut d_memory[i * two_h..(i + 1) * two_h]);
            let d_score = al * (d_alpha[i] - mean);
            if d_score == 0.0 {
                continue;
            }
            let t = &st.att_tanh[i * a..(i + 1) * a];
            axpy(d_score, t, &mut grads.att_score.data);
            let dp = &mut d_projected[i * a..(i + 1) * a];
            for k in 0..a {
                let g = d_score * params.att_score.data[k] * (1.0 - t[k] * t[k]);
                dp[k] += g;
                d_q[k] += g;
            }
        }
        grads.att_query.add_outer(&d_q, &st.s);
        let mut d_s = d_s_dec.to_vec();
        params.att_query.matvec_t_into(&d_q, &mut d_s);

        grads.slot_w.add_outer(&d_s, &st.u);
        axpy(1.0, &d_s, &mut grads.slot_b.data);
        let mut d_u = vec![0.0; 3 * e];
        params.slot_w.matvec_t_into(&d_s, &mut d_u);
        let kscale = 1.0 / slot.key.len() as f64;
        for &i in &slot.key {
            axpy(kscale, &d_u[..e], grads.embedding.row_mut(i));
        }
        let vscale = 1.0 / slot.value.len() as f64;
        for &i in &slot.value {
            axpy(vscale, &d_u[e..2 * e], grads.embedding.row_mut(i));
        }
        let d = slot.distance.min(params.distance.rows - 1);
        axpy(1.0, &d_u[2 * e..], grads.distance.row_mut(d));
    }

    for i in 0..n {
        let dp = &d_projected[i * a..(i + 1) * a];
        grads.att_memory.add_outer(dp, &trace.memory[i * two_h..(i + 1) * two_h]);
        params.att_memory.matvec_t_into(dp, &mut d_memory[i * two_h..(i + 1) * two_h]);
    }

    let ctx_len = trace.context.as_ref().map_or(0, |c| c.len);
    if let Some(ctx) = &trace.context {
        backward_side(
            &params.context_encoder,
            ctx,
            &group.context,
            &d_memory[..ctx_len * two_h],
            None,
            &mut grads.context_encoder,
            &mut grads.embedding,
        );
    }
    backward_side(
        &params.current_encoder,
        &trace.current,
        &group.current,
        &d_memory[ctx_len * two_h..],
        Some(&d_final),
        &mut grads.current_encoder,
        &mut grads.embedding,
    );
}

fn backward_side(
    enc: &BiLstm,
    side: &SideTrace,
    ids: &[usize],
    d_states: &[f64],
    d_final: Option<&[f64]>,
    grad: &mut BiLstm,
    grad_emb: &mut Mat,
) {
    let h = enc.fwd.hidden();
    let e = enc.fwd.input();
    let len = side.len;
    let mut dh_f = vec![0.0; len * h];
    let mut dh_b = vec![0.0; len * h];
    for p in 0..len {
        let row = &d_states[p * 2 * h..(p + 1) * 2 * h];
        dh_f[p * h..(p + 1) * h].copy_from_slice(&row[..h]);
        let t = len - 1 - p;
        dh_b[t * h..(t + 1) * h].copy_from_slice(&row[h..]);
    }
    if let Some(df) = d_final {
        axpy(1.0, &df[..h], &mut dh_f[(len - 1) * h..]);
        axpy(1.0, &df[h..], &mut dh_b[(len - 1) * h..]);
    }
    let mut dx_f = vec![0.0; len * e];
    let mut dx_b = vec![0.0; len * e];
    lstm_backward(&enc.fwd, &side.fwd, &dh_f, &mut grad.fwd, &mut dx_f);
    lstm_backward(&enc.bwd, &side.bwd, &dh_b, &mut grad.bwd, &mut dx_b);
    for (p, &id) in ids.iter().enumerate() {
        let row = grad_emb.row_mut(id);
        axpy(1.0, &dx_f[p * e..(p + 1) * e], row);
        let t = len - 1 - p;
        axpy(1.0, &dx_b[t * e..(t + 1) * e], row);
    }
}

/// Mean weighted loss over every labeled slot in `groups`, with gradients
/// accumulated into `grads` (which the caller zeroes).
pub fn loss_and_grad_groups(
    params: &Params,
    groups: &[&EncodedGroup],
    positive_weight: f64,
    grads: &mut Params,
) -> Result<f64, String> {
    let count: usize = groups.iter().map(|g| g.slots.len()).sum();
    if count == 0 {
        return Err("empty batch".into());
    }
    let scale = 1.0 / count as f64;
    let mut total = 0.0;
    for g in groups {
        let trace = forward_group(params, g);
        let mut dl = Vec::with_capacity(g.slots.len());
        for (slot, st) in g.slots.iter().zip(&trace.slots) {
            let label = slot.label.ok_or("candidate without a label")?;
            let (loss, d) = weighted_bce(st.logit, label, positive_weight);
            total += loss;
            dl.push(d * scale);
        }
        backward_group(params, g, &trace, &dl, grads);
    }
    Ok(total * scale)
}
