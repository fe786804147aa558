//! Text-encoder stand-ins mapping the learnable placeholder token `e_c` to a
//! class text embedding `z_c`, plus the vector-Jacobian product used to carry
//! loss gradients from `z_c` back to `e_c`.
//!
//! [`Encoder::Identity`] sets `z_c = e_c`. [`Encoder::Toy`] runs a small frozen
//! network: token + positional embeddings, one single-head self-attention
//! block and one tanh feed-forward block (both residual), read out at the
//! last position and projected to the output dimension.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emb::{check_dim, dot};
use crate::error::{Error, Result};

pub const SOT: usize = 0;
pub const EOT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Token(usize),
    Placeholder,
}

/// Token ids with exactly one placeholder slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    slots: Vec<Slot>,
}

impl PromptTemplate {
    pub fn new(slots: Vec<Slot>) -> Result<Self> {
        let holes = slots.iter().filter(|s| **s == Slot::Placeholder).count();
        if holes != 1 {
            return Err(Error::InvalidTemplate(format!(
                "expected exactly one placeholder, found {holes}"
            )));
        }
        Ok(Self { slots })
    }

    /// `<sot> a photo of * <eot>`
    pub fn photo_of() -> Self {
        Self {
            slots: vec![
                Slot::Token(SOT),
                Slot::Token(2),
                Slot::Token(3),
                Slot::Token(4),
                Slot::Placeholder,
                Slot::Token(EOT),
            ],
        }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn placeholder(&self) -> usize {
        self.slots
            .iter()
            .position(|s| *s == Slot::Placeholder)
            .expect("validated on construction")
    }
}

/// The trainable token of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnableToken {
    pub class_name: String,
    pub e_c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub d_tok: usize,
    pub ctx_len: usize,
    pub out_dim: usize,
}

impl ToyConfig {
    pub fn with_out_dim(out_dim: usize) -> Self {
        Self {
            vocab_size: 32,
            d_tok: 16,
            ctx_len: 8,
            out_dim,
        }
    }
}

type Matrix = Vec<Vec<f64>>;

fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

fn matvec_t(m: &Matrix, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.first().map_or(0, Vec::len)];
    for (row, c) in m.iter().zip(y) {
        out.iter_mut().zip(row).for_each(|(o, r)| *o += c * r);
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Frozen toy text encoder. Weights never change after [`ToyTextEncoder::init_frozen`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTextEncoder {
    config: ToyConfig,
    token_table: Matrix,
    positions: Matrix,
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
    proj: Matrix,
}

/// Intermediate values of one forward pass, kept for the reverse pass.
struct Trace {
    inputs: Matrix,
    keys: Matrix,
    values: Matrix,
    query: Vec<f64>,
    attn: Vec<f64>,
    act: Vec<f64>,
    output: Vec<f64>,
}

impl ToyTextEncoder {
    /// Draws every weight uniformly from `[-1/sqrt(d_tok), 1/sqrt(d_tok))` from a
    /// ChaCha8 stream seeded with `seed`, in field declaration order, row by row.
    pub fn init_frozen(seed: u64, config: ToyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (config.d_tok as f64).sqrt();
        let mut mat = |rows: usize, cols: usize| -> Matrix {
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
                .collect()
        };
        let d = config.d_tok;
        let token_table = mat(config.vocab_size, d);
        let positions = mat(config.ctx_len, d);
        let wq = mat(d, d);
        let wk = mat(d, d);
        let wv = mat(d, d);
        let wo = mat(d, d);
        let w1 = mat(4 * d, d);
        let b1 = mat(1, 4 * d).remove(0);
        let w2 = mat(d, 4 * d);
        let b2 = mat(1, d).remove(0);
        let proj = mat(config.out_dim, d);
        Self {
            config,
            token_table,
            positions,
            wq,
            wk,
            wv,
            wo,
            w1,
            b1,
            w2,
            b2,
            proj,
        }
    }

    pub fn config(&self) -> ToyConfig {
        self.config
    }

    pub fn token_embedding(&self, id: usize) -> Option<&[f64]> {
        self.token_table.get(id).map(Vec::as_slice)
    }

    /// Mean row of the token table; the default starting point for `e_c`.
    pub fn mean_token(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.config.d_tok];
        for row in &self.token_table {
            add_assign(&mut m, row);
        }
        let n = self.token_table.len() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Overwrites one token-table row. Only meant for probing locality.
    pub fn with_token_row(mut self, id: usize, row: Vec<f64>) -> Self {
        self.token_table[id] = row;
        self
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let mats = [
            &self.token_table,
            &self.positions,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.w1,
            &self.w2,
            &self.proj,
        ];
        for m in mats {
            for x in m.iter().flatten() {
                h.update(x.to_le_bytes());
            }
        }
        for x in self.b1.iter().chain(&self.b2) {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn validate(&self, template: &PromptTemplate, e_c: &[f64]) -> Result<()> {
        check_dim(self.config.d_tok, e_c.len())?;
        if template.len() > self.config.ctx_len {
            return Err(Error::InvalidTemplate(format!(
                "{} slots exceed context length {}",
                template.len(),
                self.config.ctx_len
            )));
        }
        for s in template.slots() {
            if let Slot::Token(id) = s {
                if *id >= self.config.vocab_size {
                    return Err(Error::InvalidTemplate(format!("token id {id} outside vocabulary")));
                }
            }
        }
        Ok(())
    }

    fn forward(&self, template: &PromptTemplate, e_c: &[f64]) -> Result<Trace> {
        self.validate(template, e_c)?;
        let d = self.config.d_tok;
        let inputs: Matrix = template
            .slots()
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let tok = match s {
                    Slot::Token(id) => self.token_table[*id].as_slice(),
                    Slot::Placeholder => e_c,
                };
                add(tok, &self.positions[j])
            })
            .collect();
        let last = inputs.last().expect("validated nonempty");
        let query = matvec(&self.wq, last);
        let keys: Matrix = inputs.iter().map(|x| matvec(&self.wk, x)).collect();
        let values: Matrix = inputs.iter().map(|x| matvec(&self.wv, x)).collect();

        let scale = 1.0 / (d as f64).sqrt();
        let scores: Vec<f64> = keys.iter().map(|k| dot(&query, k) * scale).collect();
        let peak = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - peak).exp()).collect();
        let z: f64 = exps.iter().sum();
        let attn: Vec<f64> = exps.iter().map(|e| e / z).collect();

        let mut mixed = vec![0.0; d];
        for (a, v) in attn.iter().zip(&values) {
            mixed.iter_mut().zip(v).for_each(|(m, x)| *m += a * x);
        }
        let hidden = add(last, &matvec(&self.wo, &mixed));
        let act: Vec<f64> = add(&matvec(&self.w1, &hidden), &self.b1)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let ff = add(&matvec(&self.w2, &act), &self.b2);
        let pooled = add(&hidden, &ff);
        let output = matvec(&self.proj, &pooled);
        Ok(Trace {
            inputs,
            keys,
            values,
            query,
            attn,
            act,
            output,
        })
    }

    pub fn encode(&self, template: &PromptTemplate, e_c: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(template, e_c)?.output)
    }

    /// `(dz/de_c)^T * upstream`.
    pub fn encode_vjp(&self, template: &PromptTemplate, e_c: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.config.out_dim, upstream.len())?;
        let tr = self.forward(template, e_c)?;
        let d = self.config.d_tok;
        let scale = 1.0 / (d as f64).sqrt();
        let slot = template.placeholder();
        let last = tr.inputs.len() - 1;

        // pooled = hidden + W2 tanh(W1 hidden + b1) + b2
        let g_pooled = matvec_t(&self.proj, upstream);
        let g_act = matvec_t(&self.w2, &g_pooled);
        let g_pre: Vec<f64> = g_act.iter().zip(&tr.act).map(|(g, a)| g * (1.0 - a * a)).collect();
        let mut g_hidden = g_pooled;
        add_assign(&mut g_hidden, &matvec_t(&self.w1, &g_pre));

        // hidden = x_last + Wo * sum_j attn_j v_j
        let g_mixed = matvec_t(&self.wo, &g_hidden);
        let g_attn: Vec<f64> = tr.values.iter().map(|v| dot(&g_mixed, v)).collect();
        let weighted: f64 = tr.attn.iter().zip(&g_attn).map(|(a, g)| a * g).sum();
        let g_scores: Vec<f64> = tr.attn.iter().zip(&g_attn).map(|(a, g)| a * (g - weighted)).collect();

        let mut g_slot = matvec_t(&self.wv, &g_mixed.iter().map(|g| g * tr.attn[slot]).collect::<Vec<_>>());
        let g_key: Vec<f64> = tr.query.iter().map(|q| q * g_scores[slot] * scale).collect();
        add_assign(&mut g_slot, &matvec_t(&self.wk, &g_key));

        if slot == last {
            add_assign(&mut g_slot, &g_hidden);
            let mut g_query = vec![0.0; d];
            for (k, gs) in tr.keys.iter().zip(&g_scores) {
                g_query.iter_mut().zip(k).for_each(|(q, x)| *q += gs * scale * x);
            }
            add_assign(&mut g_slot, &matvec_t(&self.wq, &g_query));
        }
        Ok(g_slot)
    }
}

/// How the learnable token becomes a text embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Identity,
    Toy(Box<ToyTextEncoder>),
}

impl Encoder {
    pub fn encode(&self, template: &PromptTemplate, e_c: &[f64]) -> Result<Vec<f64>> {
        match self {
            Encoder::Identity => Ok(e_c.to_vec()),
            Encoder::Toy(t) => t.encode(template, e_c),
        }
    }

    pub fn encode_vjp(&self, template: &PromptTemplate, e_c: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        match self {
            Encoder::Identity => {
                check_dim(e_c.len(), upstream.len())?;
                Ok(upstream.to_vec())
            }
            Encoder::Toy(t) => t.encode_vjp(template, e_c, upstream),
        }
    }

    pub fn checksum(&self) -> Option<String> {
        match self {
            Encoder::Identity => None,
            Encoder::Toy(t) => Some(t.checksum()),
        }
    }
}
