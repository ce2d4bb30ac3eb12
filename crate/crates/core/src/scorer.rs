//! Additive-interaction relevance scorer.
//!
//! For a query embedding `q` and candidate embeddings `d_i`:
//!
//! ```text
//! h_q   = W_q q
//! h_d_i = W_d d_i
//! s_i   = w · tanh(h_q + h_d_i)
//! ```
//!
//! `W_q, W_d` are `h×d`, `w` has length `h`, and there are no bias terms.
//! With `d = 384, h = 256` the model holds 196,864 parameters.
//!
//! Note that without biases the score is odd in its joint input:
//! `s(-q, -D) = -s(q, D)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::{put_f32s, read_file, write_atomic, ByteReader};
use crate::numcore::{axpy, dot, matvec_into, DenseMatrix, DenseVector, SeededRng};

pub const DEFAULT_EMBED_DIM: usize = 384;
pub const DEFAULT_HIDDEN_DIM: usize = 256;

pub const MODEL_MAGIC: &[u8; 4] = b"SRSM";
pub const MODEL_VERSION: u32 = 1;
pub const MODEL_HEADER_BYTES: usize = 24;

/// Learnable state of the selector.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorParams {
    pub w_q: DenseMatrix,
    pub w_d: DenseMatrix,
    pub w: DenseVector,
}

/// Gradients with the same shapes as [`SelectorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub w_q: DenseMatrix,
    pub w_d: DenseMatrix,
    pub w: DenseVector,
}

impl ScoreGradients {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            w_q: DenseMatrix::zeros(h, d),
            w_d: DenseMatrix::zeros(h, d),
            w: DenseVector::zeros(h),
        }
    }

    pub fn add_assign(&mut self, other: &ScoreGradients) {
        axpy(1.0, other.w_q.as_slice(), self.w_q.as_mut_slice());
        axpy(1.0, other.w_d.as_slice(), self.w_d.as_mut_slice());
        axpy(1.0, &other.w, &mut self.w);
    }

    pub fn scale(&mut self, factor: f64) {
        for x in self
            .w_q
            .as_mut_slice()
            .iter_mut()
            .chain(self.w_d.as_mut_slice())
            .chain(self.w.iter_mut())
        {
            *x *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w_q.is_finite() && self.w_d.is_finite() && self.w.is_finite()
    }
}

/// Hidden-unit sensitivities of one candidate set, from [`SelectorParams::backprop`].
#[derive(Debug, Clone)]
pub struct Backprop {
    delta: Vec<f64>,
    head: Vec<f64>,
}

/// One candidate set's inputs paired with its [`Backprop`].
pub struct BackpropItem<'a> {
    pub query: &'a [f64],
    pub docs: &'a [&'a [f64]],
    pub backprop: &'a Backprop,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub scores: Vec<f64>,
    /// `tanh(z_i)` for each candidate, `n×h` row-major.
    activations: Vec<f64>,
}

impl SelectorParams {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            w_q: DenseMatrix::zeros(h, d),
            w_d: DenseMatrix::zeros(h, d),
            w: DenseVector::zeros(h),
        }
    }

    /// Uniform init in `±1/√d` for the projections and `±1/√h` for `w`,
    /// drawn in the order `W_q`, `W_d`, `w`.
    pub fn init_random(d: usize, h: usize, rng: &mut SeededRng) -> Result<Self> {
        if d == 0 || h == 0 {
            return Err(Error::Argument(format!("dimensions must be >= 1, got d={d}, h={h}")));
        }
        let mut p = Self::zeros(d, h);
        let a = 1.0 / (d as f64).sqrt();
        for x in p.w_q.as_mut_slice().iter_mut().chain(p.w_d.as_mut_slice()) {
            *x = rng.uniform_range(-a, a);
        }
        let b = 1.0 / (h as f64).sqrt();
        for x in p.w.iter_mut() {
            *x = rng.uniform_range(-b, b);
        }
        Ok(p)
    }

    /// Embedding dimension.
    pub fn d(&self) -> usize {
        self.w_q.cols()
    }

    /// Hidden dimension.
    pub fn h(&self) -> usize {
        self.w_q.rows()
    }

    pub fn param_count(&self) -> usize {
        param_count(self.d(), self.h())
    }

    pub fn is_finite(&self) -> bool {
        self.w_q.is_finite() && self.w_d.is_finite() && self.w.is_finite()
    }

    /// Rounds every weight to the nearest `f32`, i.e. to what a save/load
    /// cycle produces.
    pub fn quantize_f32(&mut self) {
        for x in self
            .w_q
            .as_mut_slice()
            .iter_mut()
            .chain(self.w_d.as_mut_slice())
            .chain(self.w.iter_mut())
        {
            *x = *x as f32 as f64;
        }
    }

    fn check_inputs(&self, q: &[f64], docs: &[&[f64]]) -> Result<()> {
        let d = self.d();
        if q.len() != d {
            return Err(Error::Shape(format!("query has dim {}, model expects {d}", q.len())));
        }
        if docs.is_empty() {
            return Err(Error::Shape("no candidate documents".into()));
        }
        if let Some((i, doc)) = docs.iter().enumerate().find(|(_, doc)| doc.len() != d) {
            return Err(Error::Shape(format!(
                "candidate {i} has dim {}, model expects {d}",
                doc.len()
            )));
        }
        Ok(())
    }

    /// One score per candidate; `W_q q` is computed once.
    pub fn score_candidates(&self, q: &[f64], docs: &[&[f64]]) -> Result<DenseVector> {
        Ok(self.forward(q, docs)?.scores.into())
    }

    /// Forward pass retaining hidden activations.
    pub fn forward(&self, q: &[f64], docs: &[&[f64]]) -> Result<Forward> {
        self.check_inputs(q, docs)?;
        let h = self.h();
        let mut hq = vec![0.0; h];
        matvec_into(&self.w_q, q, &mut hq);
        let mut activations = vec![0.0; docs.len() * h];
        let mut scores = Vec::with_capacity(docs.len());
        for (doc, act) in docs.iter().zip(activations.chunks_exact_mut(h)) {
            matvec_into(&self.w_d, doc, act);
            for (a, b) in act.iter_mut().zip(&hq) {
                *a = (*a + b).tanh();
            }
            scores.push(dot(&self.w, act));
        }
        Ok(Forward {
            scores,
            activations,
        })
    }

    /// Gradients of `Σ_i upstream_i · s_i` with respect to every parameter.
    pub fn score_gradients(&self, q: &[f64], docs: &[&[f64]], upstream: &[f64]) -> Result<ScoreGradients> {
        let fwd = self.forward(q, docs)?;
        let bp = self.backprop(&fwd, upstream)?;
        let mut grads = ScoreGradients::zeros(self.d(), self.h());
        self.accumulate(&[BackpropItem { query: q, docs, backprop: &bp }], &mut grads, 1)?;
        Ok(grads)
    }

    /// Per-candidate hidden-unit sensitivities for one candidate set:
    /// `δ_i = upstream_i · w ⊙ (1 - tanh²(z_i))`.
    pub fn backprop(&self, fwd: &Forward, upstream: &[f64]) -> Result<Backprop> {
        let n = fwd.scores.len();
        if upstream.len() != n {
            return Err(Error::Shape(format!(
                "upstream has {} entries for {n} candidates",
                upstream.len()
            )));
        }
        let h = self.h();
        let mut delta = vec![0.0; n * h];
        let mut head = vec![0.0; h];
        for ((act, out), &g) in fwd.activations.chunks_exact(h).zip(delta.chunks_exact_mut(h)).zip(upstream) {
            axpy(g, act, &mut head);
            for j in 0..h {
                out[j] = g * self.w[j] * (1.0 - act[j] * act[j]);
            }
        }
        Ok(Backprop { delta, head })
    }

    /// Adds the parameter gradients of every item into `grads`.
    ///
    /// Work is split across `workers` threads by hidden unit; each gradient
    /// row is summed in item order, so the result does not depend on the
    /// worker count.
    pub fn accumulate(&self, items: &[BackpropItem<'_>], grads: &mut ScoreGradients, workers: usize) -> Result<()> {
        let (d, h) = (self.d(), self.h());
        if grads.w_q.rows() != h || grads.w_q.cols() != d {
            return Err(Error::Shape("gradient buffer does not match parameters".into()));
        }
        for it in items {
            if it.query.len() != d
                || it.docs.iter().any(|doc| doc.len() != d)
                || it.backprop.delta.len() != it.docs.len() * h
                || it.backprop.head.len() != h
            {
                return Err(Error::Shape("backprop item does not match parameters".into()));
            }
        }
        for it in items {
            axpy(1.0, &it.backprop.head, &mut grads.w);
        }

        let rows_per = h.div_ceil(workers.max(1));
        let work = |first_row: usize, wq: &mut [f64], wd: &mut [f64]| {
            for (r, (gq, gd)) in wq.chunks_exact_mut(d).zip(wd.chunks_exact_mut(d)).enumerate() {
                let j = first_row + r;
                for it in items {
                    let mut delta_sum = 0.0;
                    for (i, doc) in it.docs.iter().enumerate() {
                        let dij = it.backprop.delta[i * h + j];
                        if dij != 0.0 {
                            axpy(dij, doc, gd);
                            delta_sum += dij;
                        }
                    }
                    if delta_sum != 0.0 {
                        axpy(delta_sum, it.query, gq);
                    }
                }
            }
        };
        if workers <= 1 {
            work(0, grads.w_q.as_mut_slice(), grads.w_d.as_mut_slice());
        } else {
            std::thread::scope(|s| {
                let wq = grads.w_q.as_mut_slice().chunks_mut(rows_per * d);
                let wd = grads.w_d.as_mut_slice().chunks_mut(rows_per * d);
                for (c, (a, b)) in wq.zip(wd).enumerate() {
                    let work = &work;
                    s.spawn(move || work(c * rows_per, a, b));
                }
            });
        }
        Ok(())
    }

    /// Model file bytes: header then `W_q`, `W_d`, `w` as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(model_file_size(self.d(), self.h()));
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.d() as u32).to_le_bytes());
        out.extend_from_slice(&(self.h() as u32).to_le_bytes());
        out.extend_from_slice(&0u64.to_le_bytes());
        put_f32s(&mut out, self.w_q.as_slice());
        put_f32s(&mut out, self.w_d.as_slice());
        put_f32s(&mut out, &self.w);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4, "magic")? != MODEL_MAGIC {
            return Err(Error::format("magic", "expected \"SRSM\""));
        }
        let version = r.u32("version")?;
        if version != MODEL_VERSION {
            return Err(Error::format("version", format!("unsupported version {version}")));
        }
        let d = r.u32("d")? as usize;
        let h = r.u32("h")? as usize;
        if d == 0 || h == 0 {
            return Err(Error::format("dims", format!("d={d}, h={h} must both be >= 1")));
        }
        let reserved = r.u64("reserved")?;
        if reserved != 0 {
            return Err(Error::format("reserved", format!("expected 0, got {reserved}")));
        }
        let expected = model_file_size(d, h);
        if bytes.len() != expected {
            let field = if bytes.len() < expected { "weights" } else { "trailing bytes" };
            return Err(Error::format(
                field,
                format!("file is {} bytes, d={d} h={h} requires {expected}", bytes.len()),
            ));
        }
        let w_q = DenseMatrix::from_rows(h, d, r.f32s(h * d, "W_q")?)?;
        let w_d = DenseMatrix::from_rows(h, d, r.f32s(h * d, "W_d")?)?;
        let w = DenseVector::from(r.f32s(h, "w")?);
        Ok(Self { w_q, w_d, w })
    }
}

/// `2·h·d + h`
pub fn param_count(d: usize, h: usize) -> usize {
    2 * h * d + h
}

/// Exact size in bytes of a serialized model.
pub fn model_file_size(d: usize, h: usize) -> usize {
    MODEL_HEADER_BYTES + 4 * param_count(d, h)
}

/// Writes the model atomically.
pub fn save_params(params: &SelectorParams, path: &Path) -> Result<()> {
    write_atomic(path, &params.to_bytes())
}

pub fn load_params(path: &Path) -> Result<SelectorParams> {
    SelectorParams::from_bytes(&read_file(path)?)
}
