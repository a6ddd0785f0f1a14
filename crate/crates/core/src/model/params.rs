use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix. Vectors are `cols == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Glorot uniform: U(−a, a) with a = √(6 / (fan_in + fan_out)).
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Mat { rows, cols, data: (0..rows * cols).map(|_| rng.random_range(-a..a)).collect() }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// out += self · v.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), v);
        }
    }

    /// out += selfᵀ · d.
    pub fn matvec_t_into(&self, d: &[f64], out: &mut [f64]) {
        for (r, &dr) in d.iter().enumerate() {
            if dr != 0.0 {
                axpy(dr, self.row(r), out);
            }
        }
    }

    /// self += d ⊗ v.
    pub fn add_outer(&mut self, d: &[f64], v: &[f64]) {
        for (r, &dr) in d.iter().enumerate() {
            if dr != 0.0 {
                axpy(dr, v, self.row_mut(r));
            }
        }
    }
}

/// Dot product with a fixed four-lane reduction order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// y += a·x.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One LSTM direction: `w` is 4H × (E + H) acting on `[x; h_prev]`, gates in
/// the order input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w: Mat,
    pub b: Mat,
}

impl LstmCell {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        LstmCell { w: Mat::glorot(4 * hidden, input + hidden, rng), b: Mat::zeros(4 * hidden, 1) }
    }

    pub fn zeros_like(&self) -> Self {
        LstmCell { w: Mat::zeros(self.w.rows, self.w.cols), b: Mat::zeros(self.b.rows, 1) }
    }

    pub fn hidden(&self) -> usize {
        self.b.rows / 4
    }

    pub fn input(&self) -> usize {
        self.w.cols - self.hidden()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl BiLstm {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstm { fwd: LstmCell::new(input, hidden, rng), bwd: LstmCell::new(input, hidden, rng) }
    }

    pub fn zeros_like(&self) -> Self {
        BiLstm { fwd: self.fwd.zeros_like(), bwd: self.bwd.zeros_like() }
    }
}

/// Every trainable block of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Mat,
    pub context_encoder: BiLstm,
    pub current_encoder: BiLstm,
    pub distance: Mat,
    pub slot_w: Mat,
    pub slot_b: Mat,
    pub att_query: Mat,
    pub att_memory: Mat,
    pub att_score: Mat,
    pub dec_w: Mat,
    pub dec_b: Mat,
    pub out_w: Mat,
    pub out_b: Mat,
}

impl Params {
    pub const BLOCK_NAMES: [&'static str; 19] = [
        "embedding",
        "context_encoder.fwd.w",
        "context_encoder.fwd.b",
        "context_encoder.bwd.w",
        "context_encoder.bwd.b",
        "current_encoder.fwd.w",
        "current_encoder.fwd.b",
        "current_encoder.bwd.w",
        "current_encoder.bwd.b",
        "distance",
        "slot.w",
        "slot.b",
        "attention.query",
        "attention.memory",
        "attention.score",
        "decoder.w",
        "decoder.b",
        "output.w",
        "output.b",
    ];

    pub fn blocks(&self) -> [&Mat; 19] {
        [
            &self.embedding,
            &self.context_encoder.fwd.w,
            &self.context_encoder.fwd.b,
            &self.context_encoder.bwd.w,
            &self.context_encoder.bwd.b,
            &self.current_encoder.fwd.w,
            &self.current_encoder.fwd.b,
            &self.current_encoder.bwd.w,
            &self.current_encoder.bwd.b,
            &self.distance,
            &self.slot_w,
            &self.slot_b,
            &self.att_query,
            &self.att_memory,
            &self.att_score,
            &self.dec_w,
            &self.dec_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Mat; 19] {
        [
            &mut self.embedding,
            &mut self.context_encoder.fwd.w,
            &mut self.context_encoder.fwd.b,
            &mut self.context_encoder.bwd.w,
            &mut self.context_encoder.bwd.b,
            &mut self.current_encoder.fwd.w,
            &mut self.current_encoder.fwd.b,
            &mut self.current_encoder.bwd.w,
            &mut self.current_encoder.bwd.b,
            &mut self.distance,
            &mut self.slot_w,
            &mut self.slot_b,
            &mut self.att_query,
            &mut self.att_memory,
            &mut self.att_score,
            &mut self.dec_w,
            &mut self.dec_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        Params {
            embedding: z(&self.embedding),
            context_encoder: self.context_encoder.zeros_like(),
            current_encoder: self.current_encoder.zeros_like(),
            distance: z(&self.distance),
            slot_w: z(&self.slot_w),
            slot_b: z(&self.slot_b),
            att_query: z(&self.att_query),
            att_memory: z(&self.att_memory),
            att_score: z(&self.att_score),
            dec_w: z(&self.dec_w),
            dec_b: z(&self.dec_b),
            out_w: z(&self.out_w),
            out_b: z(&self.out_b),
        }
    }

    pub fn fill_zero(&mut self) {
        for b in self.blocks_mut() {
            b.fill_zero();
        }
    }

    pub fn num_values(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }

    /// Name and flat index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        for (name, b) in Self::BLOCK_NAMES.iter().zip(self.blocks()) {
            if let Some(i) = b.data.iter().position(|v| !v.is_finite()) {
                return Some((name, i));
            }
        }
        None
    }
}
