use super::params::{sigmoid, LstmCell};

/// Activations of one direction over a sequence, in processing order.
#[derive(Debug, Clone, Default)]
pub struct LstmTrace {
    pub steps: usize,
    hidden: usize,
    /// `[x_t; h_{t-1}]` per step.
    inputs: Vec<f64>,
    /// Activated gates (i, f, g, o) per step.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    pub hs: Vec<f64>,
}

impl LstmTrace {
    pub fn h(&self, t: usize) -> &[f64] {
        &self.hs[t * self.hidden..(t + 1) * self.hidden]
    }

    fn c_prev(&self, t: usize) -> Option<&[f64]> {
        (t > 0).then(|| &self.cells[(t - 1) * self.hidden..t * self.hidden])
    }
}

/// Runs the cell over `xs` (each of the cell's input width) from zero state.
pub fn lstm_forward<'a>(cell: &LstmCell, xs: impl Iterator<Item = &'a [f64]>) -> LstmTrace {
    let h = cell.hidden();
    let e = cell.input();
    let mut tr = LstmTrace { hidden: h, ..Default::default() };
    let mut z = vec![0.0; 4 * h];
    for (t, x) in xs.enumerate() {
        debug_assert_eq!(x.len(), e);
        let start = tr.inputs.len();
        tr.inputs.extend_from_slice(x);
        if t == 0 {
            tr.inputs.extend(std::iter::repeat_n(0.0, h));
        } else {
            tr.inputs.extend_from_slice(&tr.hs[(t - 1) * h..t * h]);
        }
        z.copy_from_slice(&cell.b.data);
        cell.w.matvec_into(&tr.inputs[start..], &mut z);
        for k in 0..h {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[h + k]);
            let g = z[2 * h + k].tanh();
            let o = sigmoid(z[3 * h + k]);
            let c_prev = if t == 0 { 0.0 } else { tr.cells[(t - 1) * h + k] };
            let c = f * c_prev + i * g;
            let tc = c.tanh();
            z[k] = i;
            z[h + k] = f;
            z[2 * h + k] = g;
            z[3 * h + k] = o;
            tr.cells.push(c);
            tr.tanh_cells.push(tc);
        }
        tr.gates.extend_from_slice(&z);
        let base = t * h;
        for k in 0..h {
            let o = z[3 * h + k];
            tr.hs.push(o * tr.tanh_cells[base + k]);
        }
        tr.steps += 1;
    }
    tr
}

/// Backpropagates `dh` (gradient w.r.t. every output h_t, processing order)
/// through the sequence, accumulating into `grad` and writing input
/// gradients into `dx` (steps × input width).
pub fn lstm_backward(cell: &LstmCell, tr: &LstmTrace, dh: &[f64], grad: &mut LstmCell, dx: &mut [f64]) {
    let h = tr.hidden;
    let e = cell.input();
    let width = e + h;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut dinput = vec![0.0; width];
    for t in (0..tr.steps).rev() {
        let gates = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
        let c_prev = tr.c_prev(t);
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = tr.tanh_cells[t * h + k];
            let dht = dh[t * h + k] + dh_next[k];
            let d_o = dht * tc;
            let dc = dc_next[k] + dht * o * (1.0 - tc * tc);
            let cp = c_prev.map_or(0.0, |c| c[k]);
            dz[k] = dc * g * i * (1.0 - i);
            dz[h + k] = dc * cp * f * (1.0 - f);
            dz[2 * h + k] = dc * i * (1.0 - g * g);
            dz[3 * h + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let input = &tr.inputs[t * width..(t + 1) * width];
        grad.w.add_outer(&dz, input);
        for (gb, d) in grad.b.data.iter_mut().zip(&dz) {
            *gb += d;
        }
        dinput.iter_mut().for_each(|v| *v = 0.0);
        cell.w.matvec_t_into(&dz, &mut dinput);
        dx[t * e..(t + 1) * e].copy_from_slice(&dinput[..e]);
        dh_next.copy_from_slice(&dinput[e..]);
    }
}
