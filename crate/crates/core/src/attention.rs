//! Attention forward passes over descriptor tokens: softmax attention, the
//! normalized linear-attention kernel, residual self/cross blocks and the
//! self → cross → self enhancement stack.
//!
//! Tokens are rows. A projection `W` (d × d) maps a token matrix `T` to `T W`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rgbd::FeatureCloud;

pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("feature cloud is empty")]
    EmptyCloud,
    #[error("weights file: {0}")]
    Weights(String),
}

/// `N × d` matrix of token rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix(pub DMatrix<f64>);

impl TokenMatrix {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }
}

impl From<DMatrix<f64>> for TokenMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        TokenMatrix(m)
    }
}

fn check_qkv(q: &TokenMatrix, k: &TokenMatrix, v: &TokenMatrix) -> Result<(), AttentionError> {
    if k.rows() != v.rows() {
        return Err(AttentionError::ShapeMismatch(format!("{} keys vs {} values", k.rows(), v.rows())));
    }
    if q.cols() != k.cols() {
        return Err(AttentionError::ShapeMismatch(format!("query width {} vs key width {}", q.cols(), k.cols())));
    }
    if k.rows() == 0 {
        return Err(AttentionError::ShapeMismatch("no keys".into()));
    }
    Ok(())
}

/// `softmax(Q Kᵀ) V` with row-wise, max-shifted softmax.
pub fn softmax_attention(q: &TokenMatrix, k: &TokenMatrix, v: &TokenMatrix) -> Result<TokenMatrix, AttentionError> {
    check_qkv(q, k, v)?;
    let scores = &q.0 * k.0.transpose();
    let mut out = DMatrix::zeros(q.rows(), v.cols());
    for i in 0..q.rows() {
        let row = scores.row(i);
        let max = row.max();
        let weights: Vec<f64> = row.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        for (j, w) in weights.iter().enumerate() {
            let w = w / z;
            for c in 0..v.cols() {
                out[(i, c)] += w * v.0[(j, c)];
            }
        }
    }
    Ok(TokenMatrix(out))
}

/// `elu(x) + 1`, strictly positive.
pub fn feature_map(x: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

/// Normalized linear attention: row `i` is
/// `φ(q_i) (Σ_j φ(k_j) v_jᵀ) / (φ(q_i) · Σ_j φ(k_j))`, evaluated in
/// O(N·d²) by summing over keys first.
pub fn linear_attention(q: &TokenMatrix, k: &TokenMatrix, v: &TokenMatrix) -> Result<TokenMatrix, AttentionError> {
    check_qkv(q, k, v)?;
    if k.rows() == 1 {
        // one key: every weight is exactly 1
        let mut out = DMatrix::zeros(q.rows(), v.cols());
        for i in 0..q.rows() {
            out.row_mut(i).copy_from(&v.0.row(0));
        }
        return Ok(TokenMatrix(out));
    }
    let phi_q = q.0.map(feature_map);
    let phi_k = k.0.map(feature_map);
    let kv = phi_k.transpose() * &v.0;
    let k_sum: DVector<f64> = phi_k.row_sum().transpose();
    let mut out = &phi_q * kv;
    let z = &phi_q * k_sum;
    for i in 0..out.nrows() {
        let zi = z[i];
        out.row_mut(i).iter_mut().for_each(|x| *x /= zi);
    }
    Ok(TokenMatrix(out))
}

/// Query/key/value/output projections of one residual attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub query: DMatrix<f64>,
    pub key: DMatrix<f64>,
    pub value: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

impl BlockWeights {
    pub fn zeros(d: usize) -> Self {
        BlockWeights {
            query: DMatrix::zeros(d, d),
            key: DMatrix::zeros(d, d),
            value: DMatrix::zeros(d, d),
            output: DMatrix::zeros(d, d),
        }
    }

    fn random(d: usize, rng: &mut ChaCha8Rng, normal: &Normal<f64>) -> Self {
        let mut m = || DMatrix::from_fn(d, d, |_, _| normal.sample(rng));
        let query = m();
        let key = m();
        let value = m();
        let output = m();
        BlockWeights { query, key, value, output }
    }

    pub fn dim(&self) -> usize {
        self.query.nrows()
    }

    fn check(&self, width: usize) -> Result<(), AttentionError> {
        for m in [&self.query, &self.key, &self.value, &self.output] {
            if m.nrows() != width || m.ncols() != width {
                return Err(AttentionError::ShapeMismatch(format!(
                    "{}x{} projection for width {width}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(())
    }

    fn matrices(&self) -> [(&'static str, &DMatrix<f64>); 4] {
        [("query", &self.query), ("key", &self.key), ("value", &self.value), ("output", &self.output)]
    }
}

/// `tokens + OutProj(linear_attention(tokens Wq, tokens Wk, tokens Wv))`.
pub fn self_attention_block(tokens: &TokenMatrix, w: &BlockWeights) -> Result<TokenMatrix, AttentionError> {
    cross_attention_block(tokens, tokens, w)
}

/// `target + OutProj(linear_attention(target Wq, context Wk, context Wv))`.
pub fn cross_attention_block(
    target: &TokenMatrix,
    context: &TokenMatrix,
    w: &BlockWeights,
) -> Result<TokenMatrix, AttentionError> {
    if target.cols() != context.cols() {
        return Err(AttentionError::ShapeMismatch(format!(
            "target width {} vs context width {}",
            target.cols(),
            context.cols()
        )));
    }
    w.check(target.cols())?;
    let q = TokenMatrix(&target.0 * &w.query);
    let k = TokenMatrix(&context.0 * &w.key);
    let v = TokenMatrix(&context.0 * &w.value);
    let attended = linear_attention(&q, &k, &v)?;
    Ok(TokenMatrix(&target.0 + attended.0 * &w.output))
}

/// Parameters of the whole enhancement stack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub descriptor_dim: usize,
    pub seed: u64,
    pub support_self: BlockWeights,
    pub query_self: BlockWeights,
    /// Support tokens attending to query tokens.
    pub support_cross: BlockWeights,
    /// Query tokens attending to support tokens.
    pub query_cross: BlockWeights,
    pub support_post: BlockWeights,
    pub query_post: BlockWeights,
}

const BLOCK_NAMES: [&str; 6] =
    ["support_self", "query_self", "support_cross", "query_cross", "support_post", "query_post"];

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    descriptor_dim: usize,
    seed: u64,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    header: WeightsHeader,
    /// `"<block>.<projection>"` → row-major d×d values.
    matrices: BTreeMap<String, Vec<f64>>,
}

impl AttentionWeights {
    pub fn zeros(d: usize) -> Self {
        AttentionWeights {
            descriptor_dim: d,
            seed: 0,
            support_self: BlockWeights::zeros(d),
            query_self: BlockWeights::zeros(d),
            support_cross: BlockWeights::zeros(d),
            query_cross: BlockWeights::zeros(d),
            support_post: BlockWeights::zeros(d),
            query_post: BlockWeights::zeros(d),
        }
    }

    /// Gaussian entries with σ = 1/√d from a seeded stream.
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("positive sigma");
        let mut next = || BlockWeights::random(d, &mut rng, &normal);
        AttentionWeights {
            descriptor_dim: d,
            seed,
            support_self: next(),
            query_self: next(),
            support_cross: next(),
            query_cross: next(),
            support_post: next(),
            query_post: next(),
        }
    }

    /// Shares one set of blocks between both sides, so swapping the
    /// support and query inputs swaps the outputs.
    pub fn mirrored(&self) -> Self {
        AttentionWeights {
            query_self: self.support_self.clone(),
            query_cross: self.support_cross.clone(),
            query_post: self.support_post.clone(),
            ..self.clone()
        }
    }

    fn blocks(&self) -> [&BlockWeights; 6] {
        [
            &self.support_self,
            &self.query_self,
            &self.support_cross,
            &self.query_cross,
            &self.support_post,
            &self.query_post,
        ]
    }

    pub fn to_json(&self) -> Result<String, AttentionError> {
        let mut matrices = BTreeMap::new();
        for (name, block) in BLOCK_NAMES.iter().zip(self.blocks()) {
            for (proj, m) in block.matrices() {
                let mut values = Vec::with_capacity(m.len());
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        values.push(m[(r, c)]);
                    }
                }
                matrices.insert(format!("{name}.{proj}"), values);
            }
        }
        let file = WeightsFile {
            header: WeightsHeader { descriptor_dim: self.descriptor_dim, seed: self.seed, version: WEIGHTS_VERSION },
            matrices,
        };
        serde_json::to_string(&file).map_err(|e| AttentionError::Weights(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, AttentionError> {
        let mut file: WeightsFile = serde_json::from_str(text).map_err(|e| AttentionError::Weights(e.to_string()))?;
        if file.header.version != WEIGHTS_VERSION {
            return Err(AttentionError::Weights(format!("unsupported version {}", file.header.version)));
        }
        let d = file.header.descriptor_dim;
        let mut take = |name: &str| -> Result<DMatrix<f64>, AttentionError> {
            let values =
                file.matrices.remove(name).ok_or_else(|| AttentionError::Weights(format!("missing matrix {name}")))?;
            if values.len() != d * d {
                return Err(AttentionError::Weights(format!("{name} has {} values, want {}", values.len(), d * d)));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(AttentionError::Weights(format!("{name} has non-finite entries")));
            }
            Ok(DMatrix::from_row_slice(d, d, &values))
        };
        let mut blocks = Vec::with_capacity(6);
        for name in BLOCK_NAMES {
            blocks.push(BlockWeights {
                query: take(&format!("{name}.query"))?,
                key: take(&format!("{name}.key"))?,
                value: take(&format!("{name}.value"))?,
                output: take(&format!("{name}.output"))?,
            });
        }
        let mut it = blocks.into_iter();
        let mut next = || it.next().expect("six blocks");
        Ok(AttentionWeights {
            descriptor_dim: d,
            seed: file.header.seed,
            support_self: next(),
            query_self: next(),
            support_cross: next(),
            query_cross: next(),
            support_post: next(),
            query_post: next(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), AttentionError> {
        fs::write(path, self.to_json()?).map_err(|e| AttentionError::Weights(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AttentionError> {
        let text = fs::read_to_string(path).map_err(|e| AttentionError::Weights(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
}

/// Self-attention on each side, bidirectional cross-attention, a second
/// self-attention on each side, then unit-normalized descriptors. Points and
/// pixel provenance are carried over untouched.
pub fn enhance(
    support: &FeatureCloud,
    query: &FeatureCloud,
    weights: &AttentionWeights,
) -> Result<(FeatureCloud, FeatureCloud), AttentionError> {
    if support.is_empty() || query.is_empty() {
        return Err(AttentionError::EmptyCloud);
    }
    if support.dim() != query.dim() || support.dim() != weights.descriptor_dim {
        return Err(AttentionError::ShapeMismatch(format!(
            "support dim {}, query dim {}, weights dim {}",
            support.dim(),
            query.dim(),
            weights.descriptor_dim
        )));
    }
    let s = self_attention_block(&TokenMatrix(support.descriptors.clone()), &weights.support_self)?;
    let q = self_attention_block(&TokenMatrix(query.descriptors.clone()), &weights.query_self)?;
    let s_cross = cross_attention_block(&s, &q, &weights.support_cross)?;
    let q_cross = cross_attention_block(&q, &s, &weights.query_cross)?;
    let mut s_out = self_attention_block(&s_cross, &weights.support_post)?.0;
    let mut q_out = self_attention_block(&q_cross, &weights.query_post)?.0;
    normalize_rows(&mut s_out);
    normalize_rows(&mut q_out);
    Ok((FeatureCloud { descriptors: s_out, ..support.clone() }, FeatureCloud { descriptors: q_out, ..query.clone() }))
}
