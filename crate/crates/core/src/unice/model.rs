//! Backbone, layer pooling and prediction heads with hand-written gradients.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::{ExampleKey, SegmentTag, UnifiedSequence};
use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    fn random(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · y`, accumulated into `out`.
    fn matvec_t_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, yi) in y.iter().enumerate() {
            if *yi != 0.0 {
                axpy(*yi, self.row(i), out);
            }
        }
    }

    /// `self += a · bᵀ`
    fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (i, ai) in a.iter().enumerate() {
            if *ai != 0.0 {
                axpy(*ai, b, self.row_mut(i));
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-layer, per-token embeddings; layer `k` of `per_layer` has one row per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneOutput {
    pub per_layer: Vec<Matrix>,
}

impl BackboneOutput {
    pub fn layers(&self) -> usize {
        self.per_layer.len()
    }

    pub fn tokens(&self) -> usize {
        self.per_layer.first().map_or(0, |m| m.rows)
    }

    pub fn dim(&self) -> usize {
        self.per_layer.first().map_or(0, |m| m.cols)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, d) = (self.tokens(), self.dim());
        if self.per_layer.is_empty() || t == 0 || d == 0 {
            return Err(Error::Shape("backbone output must have layers, tokens and dimensions".into()));
        }
        if self.per_layer.iter().any(|m| m.rows != t || m.cols != d || m.data.len() != t * d) {
            return Err(Error::Shape("backbone layers disagree in token count or dimension".into()));
        }
        Ok(())
    }
}

/// Attention-free encoder. Layer 0 is an embedding lookup plus a segment
/// vector; each later layer applies a shared affine map and tanh to every
/// token, plus (when `segment_context` is on) a term from the mean of each
/// content segment of the previous layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltinBackbone {
    pub dim: usize,
    pub layers: usize,
    pub segment_context: bool,
    pub embed: Matrix,
    pub segment: Matrix,
    pub w: Vec<Matrix>,
    /// `d × 3d`, applied to the stacked gen, ref and nl means.
    pub u: Vec<Matrix>,
    pub b: Vec<Vec<f64>>,
}

/// Intermediate values of one built-in forward pass.
#[derive(Debug, Clone)]
pub struct BuiltinTrace {
    /// Layers 0..=l, one row per token.
    pub h: Vec<Matrix>,
    /// For each layer k ≥ 1, the stacked segment means of layer k−1.
    pub means: Vec<Vec<f64>>,
    pub counts: [usize; 3],
}

impl BuiltinBackbone {
    pub fn new(vocab_size: usize, dim: usize, layers: usize, segment_context: bool, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        BuiltinBackbone {
            dim,
            layers,
            segment_context,
            embed: Matrix::random(vocab_size, dim, 1.0, rng),
            segment: Matrix::random(SegmentTag::COUNT, dim, 0.1, rng),
            w: (0..layers).map(|_| Matrix::random(dim, dim, scale, rng)).collect(),
            u: (0..layers)
                .map(|_| match segment_context {
                    true => Matrix::random(dim, 3 * dim, scale, rng),
                    false => Matrix::zeros(dim, 3 * dim),
                })
                .collect(),
            b: vec![vec![0.0; dim]; layers],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.rows
    }

    pub fn trace(&self, seq: &UnifiedSequence) -> Result<BuiltinTrace> {
        let (t_len, d) = (seq.len(), self.dim);
        if t_len == 0 || seq.segment_tags.len() != t_len {
            return Err(Error::Shape("sequence ids and segment tags must be non-empty and parallel".into()));
        }
        let mut h0 = Matrix::zeros(t_len, d);
        let mut counts = [0usize; 3];
        for (t, (&id, &tag)) in seq.ids.iter().zip(&seq.segment_tags).enumerate() {
            if id as usize >= self.embed.rows {
                return Err(Error::Shape(format!("token id {id} outside vocabulary of {}", self.embed.rows)));
            }
            let row = h0.row_mut(t);
            row.copy_from_slice(self.embed.row(id as usize));
            axpy(1.0, self.segment.row(tag.index()), row);
            if let Some(s) = tag.content_slot() {
                counts[s] += 1;
            }
        }
        let mut h = vec![h0];
        let mut means = Vec::with_capacity(self.layers);
        for k in 0..self.layers {
            let prev = &h[k];
            let m = if self.segment_context {
                segment_means(prev, &seq.segment_tags, &counts)
            } else {
                vec![0.0; 3 * d]
            };
            let mut shared = self.u[k].matvec(&m);
            axpy(1.0, &self.b[k], &mut shared);
            let mut next = Matrix::zeros(t_len, d);
            for t in 0..t_len {
                let x = prev.row(t);
                let out = next.row_mut(t);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (dot(self.w[k].row(i), x) + shared[i]).tanh();
                }
            }
            means.push(m);
            h.push(next);
        }
        Ok(BuiltinTrace { h, means, counts })
    }

    /// Accumulates parameter gradients given dL/dh^k for k = 1..=l.
    fn backward(&self, seq: &UnifiedSequence, trace: &BuiltinTrace, mut g: Vec<Matrix>, grads: &mut BuiltinBackbone) {
        let d = self.dim;
        for k in (1..=self.layers).rev() {
            let hk = &trace.h[k];
            let prev = &trace.h[k - 1];
            let mut delta = std::mem::replace(&mut g[k], Matrix::zeros(0, 0));
            let mut dc = vec![0.0; d];
            for t in 0..hk.rows {
                let row = delta.row_mut(t);
                for (x, y) in row.iter_mut().zip(hk.row(t)) {
                    *x *= 1.0 - y * y;
                }
                axpy(1.0, row, &mut dc);
            }
            let gw = &mut grads.w[k - 1];
            let gprev = &mut g[k - 1];
            for t in 0..hk.rows {
                let dt = delta.row(t);
                gw.add_outer(dt, prev.row(t));
                self.w[k - 1].matvec_t_add(dt, gprev.row_mut(t));
            }
            axpy(1.0, &dc, &mut grads.b[k - 1]);
            if self.segment_context {
                grads.u[k - 1].add_outer(&dc, &trace.means[k - 1]);
                let mut dm = vec![0.0; 3 * d];
                self.u[k - 1].matvec_t_add(&dc, &mut dm);
                for (t, tag) in seq.segment_tags.iter().enumerate() {
                    if let Some(s) = tag.content_slot() {
                        let share = 1.0 / trace.counts[s] as f64;
                        axpy(share, &dm[s * d..(s + 1) * d], gprev.row_mut(t));
                    }
                }
            }
        }
        for (t, (&id, &tag)) in seq.ids.iter().zip(&seq.segment_tags).enumerate() {
            let gt = g[0].row(t);
            axpy(1.0, gt, grads.embed.row_mut(id as usize));
            axpy(1.0, gt, grads.segment.row_mut(tag.index()));
        }
    }
}

fn segment_means(h: &Matrix, tags: &[SegmentTag], counts: &[usize; 3]) -> Vec<f64> {
    let d = h.cols;
    let mut m = vec![0.0; 3 * d];
    for (t, tag) in tags.iter().enumerate() {
        if let Some(s) = tag.content_slot() {
            axpy(1.0, h.row(t), &mut m[s * d..(s + 1) * d]);
        }
    }
    for s in 0..3 {
        if counts[s] > 0 {
            let inv = 1.0 / counts[s] as f64;
            m[s * d..(s + 1) * d].iter_mut().for_each(|x| *x *= inv);
        }
    }
    m
}

/// Precomputed per-layer embeddings keyed by example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileBackbone {
    pub path: String,
    pub dim: usize,
    pub layers: usize,
    #[serde(skip)]
    pub records: Arc<HashMap<ExampleKey, BackboneOutput>>,
}

impl PartialEq for FileBackbone {
    fn eq(&self, other: &Self) -> bool {
        self.path == other.path && self.dim == other.dim && self.layers == other.layers
    }
}

#[derive(Deserialize)]
struct FileRecord {
    task_id: String,
    candidate_id: String,
    format: super::vocab::InputFormat,
    layers: Vec<Vec<Vec<f64>>>,
}

impl FileBackbone {
    /// Reads one JSON record per line:
    /// `{"task_id", "candidate_id", "format", "layers": [l][tokens][d]}`.
    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = HashMap::new();
        let mut shape: Option<(usize, usize)> = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: FileRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.into(),
                line: i + 1,
                field: String::new(),
                message: e.to_string(),
            })?;
            let per_layer = rec
                .layers
                .iter()
                .map(|l| Matrix::from_rows(l))
                .collect::<Result<Vec<_>>>()?;
            let out = BackboneOutput { per_layer };
            out.validate()?;
            let s = (out.layers(), out.dim());
            if *shape.get_or_insert(s) != s {
                return Err(Error::Shape(format!("{path}:{}: layer count or dimension differs from earlier records", i + 1)));
            }
            let key = ExampleKey {
                task_id: rec.task_id,
                candidate_id: rec.candidate_id,
                format: rec.format,
            };
            records.insert(key, out);
        }
        let (layers, dim) = shape.ok_or_else(|| Error::Validation(format!("{path} holds no embedding records")))?;
        Ok(FileBackbone {
            path: path.into(),
            dim,
            layers,
            records: Arc::new(records),
        })
    }

    fn lookup(&self, seq: &UnifiedSequence) -> Result<&BackboneOutput> {
        let key = seq
            .key
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("file-backed backbone needs an example key".into()))?;
        let out = self.records.get(key).ok_or_else(|| {
            Error::Validation(format!(
                "no precomputed embeddings for {}/{}/{}",
                key.task_id, key.candidate_id, key.format
            ))
        })?;
        if out.tokens() != seq.len() {
            return Err(Error::Shape(format!(
                "precomputed embeddings have {} tokens, sequence has {}",
                out.tokens(),
                seq.len()
            )));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backbone {
    BuiltIn(BuiltinBackbone),
    FileBacked(FileBackbone),
}

impl Backbone {
    pub fn layers(&self) -> usize {
        match self {
            Backbone::BuiltIn(b) => b.layers,
            Backbone::FileBacked(f) => f.layers,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Backbone::BuiltIn(b) => b.dim,
            Backbone::FileBacked(f) => f.dim,
        }
    }
}

pub fn backbone_forward(seq: &UnifiedSequence, backbone: &Backbone) -> Result<BackboneOutput> {
    match backbone {
        Backbone::BuiltIn(b) => {
            let mut trace = b.trace(seq)?;
            trace.h.remove(0);
            Ok(BackboneOutput { per_layer: trace.h })
        }
        Backbone::FileBacked(f) => f.lookup(seq).cloned(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingWeights {
    pub gamma: f64,
    pub layer_logits: Vec<f64>,
}

impl PoolingWeights {
    pub fn uniform(layers: usize) -> Self {
        PoolingWeights {
            gamma: 1.0,
            layer_logits: vec![0.0; layers],
        }
    }

    pub fn softmax(&self) -> Vec<f64> {
        let max = self.layer_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.layer_logits.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    }

    /// Pooled embedding of token `t`.
    pub fn pool_token(&self, out: &BackboneOutput, t: usize) -> Result<Vec<f64>> {
        if out.layers() != self.layer_logits.len() {
            return Err(Error::Shape(format!(
                "{} backbone layers but {} pooling weights",
                out.layers(),
                self.layer_logits.len()
            )));
        }
        if t >= out.tokens() {
            return Err(Error::Shape(format!("token {t} outside sequence of {}", out.tokens())));
        }
        let a = self.softmax();
        let mut e = vec![0.0; out.dim()];
        for (k, layer) in out.per_layer.iter().enumerate() {
            axpy(self.gamma * a[k], layer.row(t), &mut e);
        }
        Ok(e)
    }
}

/// `e_t = γ Σ_k softmax(λ)_k e^k_t` for every token.
pub fn pool_layers(out: &BackboneOutput, pw: &PoolingWeights) -> Result<Vec<Vec<f64>>> {
    out.validate()?;
    (0..out.tokens()).map(|t| pw.pool_token(out, t)).collect()
}

/// Three affine maps with tanh between them; the last is two wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
}

impl Heads {
    pub fn new(input: usize, dims: [usize; 3], rng: &mut ChaCha8Rng) -> Self {
        let [h1, h2, h3] = dims;
        let std = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        Heads {
            w1: Matrix::random(h1, input, std(input), rng),
            b1: vec![0.0; h1],
            w2: Matrix::random(h2, h1, std(h1), rng),
            b2: vec![0.0; h2],
            w3: Matrix::random(h3, h2, std(h2), rng),
            b3: vec![0.0; h3],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.w1.rows, self.w2.rows, self.w3.rows]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub code_score: f64,
    pub p_exec: f64,
    pub exec: u8,
}

impl Prediction {
    pub fn from_logits(o: [f64; 2]) -> Self {
        let code_score = sigmoid(o[0]);
        let p_exec = sigmoid(o[1]);
        Prediction {
            code_score,
            p_exec,
            exec: u8::from(p_exec >= 0.5),
        }
    }
}

/// Everything needed to backpropagate one sequence.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    trace: Option<BuiltinTrace>,
    first: Vec<Vec<f64>>,
    e0: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
    pub logits: [f64; 2],
}

impl ForwardPass {
    pub fn prediction(&self) -> Prediction {
        Prediction::from_logits(self.logits)
    }

    /// Pooled first-token representation.
    pub fn representation(&self) -> &[f64] {
        &self.e0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub backbone: Backbone,
    pub pooling: PoolingWeights,
    pub heads: Heads,
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        let (l, d) = (self.backbone.layers(), self.backbone.dim());
        let bad = |m: &str| Err(Error::Shape(m.into()));
        if l == 0 || d == 0 {
            return bad("backbone needs at least one layer and dimension");
        }
        if self.pooling.layer_logits.len() != l {
            return bad("pooling weights do not match layer count");
        }
        let h = &self.heads;
        let [h1, h2, h3] = h.dims();
        if h3 != 2 {
            return bad("final head width must be 2");
        }
        let shapes = [
            (h.w1.cols, d),
            (h.w2.cols, h1),
            (h.w3.cols, h2),
            (h.b1.len(), h1),
            (h.b2.len(), h2),
            (h.b3.len(), h3),
        ];
        if shapes.iter().any(|(a, b)| a != b) {
            return bad("head shapes are inconsistent");
        }
        for m in [&h.w1, &h.w2, &h.w3] {
            if m.data.len() != m.rows * m.cols {
                return bad("matrix data length does not match its shape");
            }
        }
        if let Backbone::BuiltIn(b) = &self.backbone {
            let ok = b.embed.cols == d
                && b.embed.data.len() == b.embed.rows * d
                && b.segment.rows == SegmentTag::COUNT
                && b.segment.cols == d
                && b.segment.data.len() == SegmentTag::COUNT * d
                && b.w.len() == l
                && b.u.len() == l
                && b.b.len() == l
                && b.w.iter().all(|m| m.rows == d && m.cols == d && m.data.len() == d * d)
                && b.u.iter().all(|m| m.rows == d && m.cols == 3 * d && m.data.len() == 3 * d * d)
                && b.b.iter().all(|v| v.len() == d);
            if !ok {
                return bad("built-in backbone shapes are inconsistent");
            }
        }
        Ok(())
    }

    pub fn forward(&self, seq: &UnifiedSequence) -> Result<ForwardPass> {
        let (trace, first) = match &self.backbone {
            Backbone::BuiltIn(b) => {
                let trace = b.trace(seq)?;
                let first: Vec<Vec<f64>> = trace.h[1..].iter().map(|m| m.row(0).to_vec()).collect();
                (Some(trace), first)
            }
            Backbone::FileBacked(f) => {
                let out = f.lookup(seq)?;
                (None, out.per_layer.iter().map(|m| m.row(0).to_vec()).collect())
            }
        };
        if first.len() != self.pooling.layer_logits.len() {
            return Err(Error::Shape("backbone layer count differs from pooling weights".into()));
        }
        let a = self.pooling.softmax();
        let mut e0 = vec![0.0; self.backbone.dim()];
        for (k, v) in first.iter().enumerate() {
            axpy(self.pooling.gamma * a[k], v, &mut e0);
        }
        let h = &self.heads;
        let layer = |w: &Matrix, b: &[f64], x: &[f64]| -> Vec<f64> {
            w.matvec(x).iter().zip(b).map(|(y, bi)| (y + bi).tanh()).collect()
        };
        let z1 = layer(&h.w1, &h.b1, &e0);
        let z2 = layer(&h.w2, &h.b2, &z1);
        let o = h.w3.matvec(&z2);
        let logits = [o[0] + h.b3[0], o[1] + h.b3[1]];
        Ok(ForwardPass {
            trace,
            first,
            e0,
            z1,
            z2,
            logits,
        })
    }

    pub fn predict(&self, seq: &UnifiedSequence) -> Result<Prediction> {
        Ok(self.forward(seq)?.prediction())
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the two head outputs is `d_logits`.
    pub fn backward(&self, seq: &UnifiedSequence, fwd: &ForwardPass, d_logits: [f64; 2], grads: &mut Model) {
        let h = &self.heads;
        let gh = &mut grads.heads;
        gh.w3.add_outer(&d_logits, &fwd.z2);
        axpy(1.0, &d_logits, &mut gh.b3);
        let mut dz2 = vec![0.0; fwd.z2.len()];
        h.w3.matvec_t_add(&d_logits, &mut dz2);
        let dp2: Vec<f64> = dz2.iter().zip(&fwd.z2).map(|(g, z)| g * (1.0 - z * z)).collect();
        gh.w2.add_outer(&dp2, &fwd.z1);
        axpy(1.0, &dp2, &mut gh.b2);
        let mut dz1 = vec![0.0; fwd.z1.len()];
        h.w2.matvec_t_add(&dp2, &mut dz1);
        let dp1: Vec<f64> = dz1.iter().zip(&fwd.z1).map(|(g, z)| g * (1.0 - z * z)).collect();
        gh.w1.add_outer(&dp1, &fwd.e0);
        axpy(1.0, &dp1, &mut gh.b1);
        let mut de0 = vec![0.0; fwd.e0.len()];
        h.w1.matvec_t_add(&dp1, &mut de0);

        let pw = &self.pooling;
        let a = pw.softmax();
        let mut mixed = vec![0.0; de0.len()];
        for (k, v) in fwd.first.iter().enumerate() {
            axpy(a[k], v, &mut mixed);
        }
        grads.pooling.gamma += dot(&de0, &mixed);
        let da: Vec<f64> = fwd.first.iter().map(|v| pw.gamma * dot(&de0, v)).collect();
        let mean_da = dot(&a, &da);
        for k in 0..a.len() {
            grads.pooling.layer_logits[k] += a[k] * (da[k] - mean_da);
        }

        if let (Backbone::BuiltIn(b), Some(trace), Backbone::BuiltIn(gb)) =
            (&self.backbone, &fwd.trace, &mut grads.backbone)
        {
            let mut g: Vec<Matrix> = trace.h.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect();
            for k in 0..b.layers {
                axpy(pw.gamma * a[k], &de0, g[k + 1].row_mut(0));
            }
            b.backward(seq, trace, g, gb);
        }
    }

    /// Same shapes, every parameter zero.
    pub fn zeros_like(&self) -> Model {
        let mut m = self.clone();
        for (_, p) in m.params_mut() {
            p.fill(0.0);
        }
        m
    }

    /// Trainable parameter groups in a fixed order.
    pub fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        if let Backbone::BuiltIn(b) = &mut self.backbone {
            let context = b.segment_context;
            out.push(("backbone.embed".into(), &mut b.embed.data));
            out.push(("backbone.segment".into(), &mut b.segment.data));
            for (k, ((w, u), bias)) in b.w.iter_mut().zip(b.u.iter_mut()).zip(b.b.iter_mut()).enumerate() {
                out.push((format!("backbone.w{}", k + 1), &mut w.data));
                if context {
                    out.push((format!("backbone.u{}", k + 1), &mut u.data));
                }
                out.push((format!("backbone.b{}", k + 1), bias));
            }
        }
        out.push(("pooling.gamma".into(), std::slice::from_mut(&mut self.pooling.gamma)));
        out.push(("pooling.layer_logits".into(), &mut self.pooling.layer_logits));
        let h = &mut self.heads;
        out.push(("heads.w1".into(), &mut h.w1.data));
        out.push(("heads.b1".into(), &mut h.b1));
        out.push(("heads.w2".into(), &mut h.w2.data));
        out.push(("heads.b2".into(), &mut h.b2));
        out.push(("heads.w3".into(), &mut h.w3.data));
        out.push(("heads.b3".into(), &mut h.b3));
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|(_, p)| p.len()).sum()
    }
}

/// Random built-in model; `rng` must be the only source of randomness.
pub fn init_builtin(
    vocab_size: usize,
    dim: usize,
    layers: usize,
    segment_context: bool,
    head_dims: [usize; 3],
    rng: &mut ChaCha8Rng,
) -> Model {
    let backbone = BuiltinBackbone::new(vocab_size, dim, layers, segment_context, rng);
    let heads = Heads::new(dim, head_dims, rng);
    Model {
        backbone: Backbone::BuiltIn(backbone),
        pooling: PoolingWeights::uniform(layers),
        heads,
    }
}

pub fn init_file_backed(file: FileBackbone, head_dims: [usize; 3], rng: &mut ChaCha8Rng) -> Model {
    let heads = Heads::new(file.dim, head_dims, rng);
    let layers = file.layers;
    Model {
        backbone: Backbone::FileBacked(file),
        pooling: PoolingWeights::uniform(layers),
        heads,
    }
}

/// Uniform draw used to perturb parameters in tests and gradient checks.
pub fn jitter(model: &mut Model, scale: f64, rng: &mut ChaCha8Rng) {
    for (_, p) in model.params_mut() {
        for x in p.iter_mut() {
            *x += rng.gen_range(-scale..scale);
        }
    }
}
