//! Word vectors: text-format loading, OOV handling and orthogonal alignment
//! of one language's vectors into another's space.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::seed::fnv1a;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("alignment needs at least {needed} dictionary pairs present in both vocabularies, found {found}")]
    TooFewPairs { needed: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What [`EmbeddingTable::lookup`] returns for tokens outside the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OovPolicy {
    Zero,
    /// Hash the token into one of `buckets` fixed random vectors.
    HashBuckets { buckets: usize, seed: u64 },
}

impl Default for OovPolicy {
    fn default() -> Self {
        OovPolicy::HashBuckets { buckets: 1000, seed: 0x00c0_ffee }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub language: String,
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    pub shared_space: bool,
    pub oov: OovPolicy,
}

impl EmbeddingTable {
    pub fn new(language: &str, dim: usize) -> Self {
        EmbeddingTable {
            language: language.to_string(),
            dim,
            vocab: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            shared_space: false,
            oov: OovPolicy::default(),
        }
    }

    /// Adds a row. Returns false (and keeps the existing row) for duplicates.
    pub fn push(&mut self, token: &str, vector: &[f64]) -> Result<bool, EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch(vector.len(), self.dim));
        }
        if self.index.contains_key(token) {
            return Ok(false);
        }
        self.index.insert(token.to_string(), self.vocab.len());
        self.vocab.push(token.to_string());
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// The stored vector, or the OOV policy's vector. Never fails.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.get(token) {
            return v.to_vec();
        }
        match self.oov {
            OovPolicy::Zero => vec![0.0; self.dim],
            OovPolicy::HashBuckets { buckets, seed } => {
                let bucket = fnv1a(token.as_bytes()) % buckets.max(1) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ bucket.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                (0..self.dim).map(|_| rng.random_range(-0.1..0.1)).collect()
            }
        }
    }

    /// Copy with every row scaled to unit length (zero rows stay zero).
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for row in out.vectors.chunks_mut(self.dim.max(1)) {
            normalize(row);
        }
        out
    }

    /// Rows of `self` plus rows of `other` for tokens `self` lacks.
    pub fn merged_with(&self, other: &EmbeddingTable) -> Result<Self, EmbeddingError> {
        if other.dim != self.dim {
            return Err(EmbeddingError::DimMismatch(other.dim, self.dim));
        }
        let mut out = self.clone();
        for (i, tok) in other.vocab.iter().enumerate() {
            out.push(tok, other.row(i))?;
        }
        Ok(out)
    }

    /// Applies `mapping` (dim×dim, row-major, acting on column vectors) to
    /// every row.
    pub fn mapped(&self, mapping: &[f64]) -> Self {
        let d = self.dim;
        let mut out = self.clone();
        for (dst, src) in out.vectors.chunks_mut(d).zip(self.vectors.chunks(d)) {
            for (r, v) in dst.iter_mut().enumerate() {
                *v = (0..d).map(|c| mapping[r * d + c] * src[c]).sum();
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.vocab.len(), self.dim)?;
        for (i, tok) in self.vocab.iter().enumerate() {
            write!(w, "{tok}")?;
            for v in self.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Reads the `count dim` header format. Duplicate tokens keep their first row.
pub fn load_word_vectors<R: BufRead>(reader: R, language: &str) -> Result<EmbeddingTable, EmbeddingError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| EmbeddingError::Parse { line: 1, message: "missing header".into() })?;
    let parse_err = |line: usize, message: String| EmbeddingError::Parse { line, message };
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(1, format!("bad header {header:?}: {e}")))?;
    let [count, dim] = nums[..] else {
        return Err(parse_err(1, format!("header must be 'count dim', got {header:?}")));
    };
    let mut table = EmbeddingTable::new(language, dim);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if rows == count {
            return Err(parse_err(line_no, format!("more rows than the header count {count}")));
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a token");
        let values: Vec<f64> = parts
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(line_no, format!("bad number: {e}")))?;
        if values.len() != dim {
            return Err(parse_err(line_no, format!("expected {dim} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(line_no, "non-finite value".into()));
        }
        if !table.push(token, &values)? {
            log::warn!("line {line_no}: duplicate token {token:?} ignored");
        }
        rows += 1;
    }
    if rows != count {
        return Err(parse_err(rows + 2, format!("header announces {count} rows, found {rows}")));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub dim: usize,
    /// Orthogonal dim×dim matrix W, row-major, mapping a source column
    /// vector x to W·x in the target space.
    pub mapping: Vec<f64>,
    /// ‖W·X − Y‖_F over the (normalized) dictionary pairs.
    pub residual: f64,
    /// Fraction of dictionary pairs whose mapped source vector has the
    /// paired target word as cosine nearest neighbour.
    pub dictionary_accuracy: f64,
    pub pairs_used: usize,
    /// Set when the dictionary cross-covariance is numerically rank deficient.
    pub ill_conditioned: bool,
}

impl AlignmentResult {
    /// max |WᵀW − I|.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim;
        let w = &self.mapping;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| w[k * d + i] * w[k * d + j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// `src` normalized, mapped into the target space and flagged as shared.
    pub fn apply(&self, src: &EmbeddingTable) -> EmbeddingTable {
        let mut out = src.normalized().mapped(&self.mapping);
        out.shared_space = true;
        out
    }
}

/// Orthogonal Procrustes: the orthogonal W minimizing ‖W·X − Y‖_F over the
/// dictionary, from the SVD of YᵀX = UΣVᵀ as W = UVᵀ. Vectors are length
/// normalized first.
pub fn procrustes_align(
    src: &EmbeddingTable,
    tgt: &EmbeddingTable,
    dictionary: &[(String, String)],
) -> Result<AlignmentResult, EmbeddingError> {
    if src.dim != tgt.dim {
        return Err(EmbeddingError::DimMismatch(src.dim, tgt.dim));
    }
    let d = src.dim;
    let src_n = src.normalized();
    let tgt_n = tgt.normalized();
    let pairs: Vec<(&[f64], &str)> = dictionary
        .iter()
        .filter_map(|(s, t)| Some((src_n.get(s)?, tgt_n.index.get(t.as_str()).map(|_| t.as_str())?)))
        .collect();
    if pairs.len() < d.max(1) {
        return Err(EmbeddingError::TooFewPairs { needed: d.max(1), found: pairs.len() });
    }
    let n = pairs.len();
    let x = DMatrix::from_fn(n, d, |i, j| pairs[i].0[j]);
    let y = DMatrix::from_fn(n, d, |i, j| tgt_n.get(pairs[i].1).expect("filtered")[j]);
    let m = y.transpose() * &x;
    let svd = m.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let ill_conditioned = smax <= 0.0 || smin / smax < 1e-10;
    if ill_conditioned {
        log::warn!("alignment dictionary is rank deficient (σmin/σmax = {:e}); proceeding", smin / smax.max(f64::MIN_POSITIVE));
    }
    let w = svd.u.expect("requested U") * svd.v_t.expect("requested Vᵀ");
    let mapped = &x * w.transpose();
    let residual = (&mapped - &y).norm();

    let mut mapping = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            mapping[r * d + c] = w[(r, c)];
        }
    }

    let mut correct = 0;
    for (i, (_, t)) in pairs.iter().enumerate() {
        let q: Vec<f64> = (0..d).map(|j| mapped[(i, j)]).collect();
        if nearest(&tgt_n, &q) == Some(*t) {
            correct += 1;
        }
    }
    Ok(AlignmentResult {
        dim: d,
        mapping,
        residual,
        dictionary_accuracy: correct as f64 / n as f64,
        pairs_used: n,
        ill_conditioned,
    })
}

/// Cosine nearest neighbour of `q` among the rows of a normalized table.
fn nearest<'a>(table: &'a EmbeddingTable, q: &[f64]) -> Option<&'a str> {
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, usize)> = None;
    for i in 0..table.len() {
        let s: f64 = table.row(i).iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / qn;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, i));
        }
    }
    best.map(|(_, i)| table.vocab[i].as_str())
}

/// Haar-random orthogonal matrix (row-major) from the QR decomposition of a
/// Gaussian matrix with R's diagonal signs folded into Q.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] = q[(i, j)];
        }
    }
    out
}

/// Synthetic bilingual vectors with a planted relation: source words get
/// Gaussian vectors (unit expected norm); every target word paired with a
/// source word in `dictionary` gets Q·x + N(0, noise²), where Q is a random
/// rotation; other target words are independent Gaussians.
pub fn synthesize_bilingual(
    src_lang: &str,
    src_vocab: &[String],
    tgt_lang: &str,
    tgt_vocab: &[String],
    dictionary: &[(String, String)],
    dim: usize,
    noise: f64,
    seed: u64,
) -> (EmbeddingTable, EmbeddingTable, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(dim, &mut rng);
    let scale = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid normal");
    let mut src = EmbeddingTable::new(src_lang, dim);
    for tok in src_vocab {
        let v: Vec<f64> = (0..dim).map(|_| scale.sample(&mut rng)).collect();
        src.push(tok, &v).expect("dim matches");
    }
    let noise_dist = Normal::new(0.0, noise.max(0.0)).expect("valid normal");
    let counterpart: HashMap<&str, &str> =
        dictionary.iter().map(|(s, t)| (t.as_str(), s.as_str())).rev().collect();
    let mut tgt = EmbeddingTable::new(tgt_lang, dim);
    for tok in tgt_vocab {
        let v: Vec<f64> = match counterpart.get(tok.as_str()).and_then(|s| src.get(s)) {
            Some(x) => (0..dim)
                .map(|r| (0..dim).map(|c| q[r * dim + c] * x[c]).sum::<f64>() + noise_dist.sample(&mut rng))
                .collect(),
            None => (0..dim).map(|_| scale.sample(&mut rng)).collect(),
        };
        tgt.push(tok, &v).expect("dim matches");
    }
    (src, tgt, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "3 4\nthe 0.1 0.2 0.3 0.4\ncat -1 0 1 2.5\nmat 0 0 0 1e-3\n";

    #[test]
    fn loads_fixture() {
        let t = load_word_vectors(FIXTURE.as_bytes(), "en_US").unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));
        assert_eq!(t.get("cat").unwrap(), &[-1.0, 0.0, 1.0, 2.5]);
    }

    #[test]
    fn short_file_and_bad_rows_fail_with_line() {
        let err = load_word_vectors("4 4\nthe 0.1 0.2 0.3 0.4\n".as_bytes(), "en").unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { .. }));
        let err = load_word_vectors("2 4\nthe 0.1 0.2 0.3 0.4\ncat 1 2 3\n".as_bytes(), "en").unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 3, .. }), "{err}");
        assert!(load_word_vectors("".as_bytes(), "en").is_err());
        assert!(load_word_vectors("1 2\na nan 1\n".as_bytes(), "en").is_err());
    }

    #[test]
    fn duplicate_keeps_first() {
        let t = load_word_vectors("2 1\na 1\na 2\n".as_bytes(), "en").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a").unwrap(), &[1.0]);
    }

    #[test]
    fn write_read_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = EmbeddingTable::new("de_DE", 5);
        for i in 0..20 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            t.push(&format!("w{i}"), &v).unwrap();
        }
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = load_word_vectors(buf.as_slice(), "de_DE").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn lookup_policies() {
        let mut t = load_word_vectors(FIXTURE.as_bytes(), "en").unwrap();
        assert_eq!(t.lookup("the"), vec![0.1, 0.2, 0.3, 0.4]);
        let a = t.lookup("zebra");
        assert_eq!(a, t.lookup("zebra"));
        assert!(a.iter().any(|v| *v != 0.0) && a.iter().all(|v| v.abs() <= 0.1));
        t.oov = OovPolicy::Zero;
        assert_eq!(t.lookup("zebra"), vec![0.0; 4]);
    }

    fn random_table(lang: &str, n: usize, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = EmbeddingTable::new(lang, dim);
        for i in 0..n {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            t.push(&format!("w{i}"), &v).unwrap();
        }
        t
    }

    #[test]
    fn identity_alignment() {
        let t = random_table("en", 50, 16, 3);
        let dict: Vec<_> = t.vocab().iter().map(|w| (w.clone(), w.clone())).collect();
        let r = procrustes_align(&t, &t, &dict).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((r.mapping[i * 16 + j] - e).abs() < 1e-6);
            }
        }
        assert_eq!(r.dictionary_accuracy, 1.0);
        assert!(r.orthogonality_error() < 1e-6);
    }

    #[test]
    fn too_few_pairs_and_dim_mismatch() {
        let t = random_table("en", 10, 16, 3);
        let dict: Vec<_> = t.vocab().iter().map(|w| (w.clone(), w.clone())).collect();
        assert!(matches!(procrustes_align(&t, &t, &dict), Err(EmbeddingError::TooFewPairs { .. })));
        let u = random_table("de", 10, 8, 3);
        assert!(matches!(procrustes_align(&t, &u, &dict), Err(EmbeddingError::DimMismatch(..))));
    }

    #[test]
    fn rank_deficient_dictionary_still_aligns() {
        let mut t = EmbeddingTable::new("en", 4);
        for i in 0..8 {
            t.push(&format!("w{i}"), &[1.0 + i as f64, 0.0, 0.0, 0.0]).unwrap();
        }
        let dict: Vec<_> = t.vocab().iter().map(|w| (w.clone(), w.clone())).collect();
        let r = procrustes_align(&t, &t, &dict).unwrap();
        assert!(r.ill_conditioned);
        assert!(r.orthogonality_error() < 1e-6);
    }

    #[test]
    fn mapping_preserves_norms_and_cosines() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthogonal(8, &mut rng);
        let t = random_table("en", 5, 8, 1);
        let m = t.mapped(&q);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for i in 0..5 {
            for j in 0..5 {
                assert!((dot(t.row(i), t.row(j)) - dot(m.row(i), m.row(j))).abs() < 1e-9);
            }
        }
    }

    fn words(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn recovers_planted_rotation() {
        let (en, de) = (words("e", 80), words("d", 80));
        let dict: Vec<_> = en.iter().cloned().zip(de.iter().cloned()).collect();
        let (src, tgt, q) = synthesize_bilingual("en", &en, "de", &de, &dict, 16, 0.0, 11);
        let r = procrustes_align(&src, &tgt, &dict[..50]).unwrap();
        let worst = r.mapping.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-4, "max |W - Q| = {worst}");
        assert!(r.residual < 1e-6);
        assert_eq!(r.dictionary_accuracy, 1.0);
        assert!(r.orthogonality_error() < 1e-9);
    }

    #[test]
    fn noisy_rotation_keeps_high_accuracy() {
        let (en, de) = (words("e", 200), words("d", 200));
        let dict: Vec<_> = en.iter().cloned().zip(de.iter().cloned()).collect();
        let (src, tgt, _) = synthesize_bilingual("en", &en, "de", &de, &dict, 16, 0.01, 12);
        let r = procrustes_align(&src, &tgt, &dict[..50]).unwrap();
        assert!(r.dictionary_accuracy >= 0.95, "{}", r.dictionary_accuracy);
        let aligned = r.apply(&src);
        assert!(aligned.shared_space);
        for i in 0..aligned.len() {
            let n: f64 = aligned.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn merge_prefers_primary() {
        let mut a = EmbeddingTable::new("de", 1);
        a.push("museum", &[1.0]).unwrap();
        let mut b = EmbeddingTable::new("en", 1);
        b.push("museum", &[2.0]).unwrap();
        b.push("find", &[3.0]).unwrap();
        let m = a.merged_with(&b).unwrap();
        assert_eq!(m.get("museum").unwrap(), &[1.0]);
        assert_eq!(m.get("find").unwrap(), &[3.0]);
    }
}
