use serde::{Deserialize, Serialize};

use super::layers::{LayerNorm, Linear};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    /// Square layers over the block's channel set.
    pub mlp: Vec<Linear>,
}

/// All trainable tensors of a network except the architecture parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub patch_embed: Linear,
    pub pos_embed: Option<Matrix>,
    pub blocks: Vec<BlockParams>,
    pub ln_f: LayerNorm,
    /// Classifier `W₁`, `d_feat × C`, no bias.
    pub head: Matrix,
}

fn push_linear<'a>(out: &mut Vec<(String, &'a Matrix)>, name: &str, l: &'a Linear) {
    out.push((format!("{name}.w"), &l.w));
    out.push((format!("{name}.b"), &l.b));
}

fn push_ln<'a>(out: &mut Vec<(String, &'a Matrix)>, name: &str, l: &'a LayerNorm) {
    out.push((format!("{name}.gamma"), &l.gamma));
    out.push((format!("{name}.beta"), &l.beta));
}

impl Params {
    /// Same structure, every entry zero.
    pub fn zeros_like(&self) -> Params {
        Params {
            patch_embed: self.patch_embed.zeros_like(),
            pos_embed: self.pos_embed.as_ref().map(|p| Matrix::zeros(p.rows(), p.cols())),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    ln1: b.ln1.zeros_like(),
                    q: b.q.zeros_like(),
                    k: b.k.zeros_like(),
                    v: b.v.zeros_like(),
                    o: b.o.zeros_like(),
                    ln2: b.ln2.zeros_like(),
                    mlp: b.mlp.iter().map(Linear::zeros_like).collect(),
                })
                .collect(),
            ln_f: self.ln_f.zeros_like(),
            head: Matrix::zeros(self.head.rows(), self.head.cols()),
        }
    }

    /// Tensors in canonical order with their dotted names.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        push_linear(&mut out, "patch_embed", &self.patch_embed);
        if let Some(p) = &self.pos_embed {
            out.push(("pos_embed".into(), p));
        }
        for (j, b) in self.blocks.iter().enumerate() {
            push_ln(&mut out, &format!("blocks.{j}.ln1"), &b.ln1);
            push_linear(&mut out, &format!("blocks.{j}.attn.q"), &b.q);
            push_linear(&mut out, &format!("blocks.{j}.attn.k"), &b.k);
            push_linear(&mut out, &format!("blocks.{j}.attn.v"), &b.v);
            push_linear(&mut out, &format!("blocks.{j}.attn.o"), &b.o);
            push_ln(&mut out, &format!("blocks.{j}.ln2"), &b.ln2);
            for (k, l) in b.mlp.iter().enumerate() {
                push_linear(&mut out, &format!("blocks.{j}.mlp.{k}"), l);
            }
        }
        push_ln(&mut out, "ln_f", &self.ln_f);
        out.push(("head.w".into(), &self.head));
        out
    }

    pub fn names(&self) -> Vec<String> {
        self.named().into_iter().map(|(n, _)| n).collect()
    }

    /// Mutable tensors, same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.push(&mut self.patch_embed.w);
        out.push(&mut self.patch_embed.b);
        if let Some(p) = &mut self.pos_embed {
            out.push(p);
        }
        for b in &mut self.blocks {
            out.push(&mut b.ln1.gamma);
            out.push(&mut b.ln1.beta);
            for l in [&mut b.q, &mut b.k, &mut b.v, &mut b.o] {
                out.push(&mut l.w);
                out.push(&mut l.b);
            }
            out.push(&mut b.ln2.gamma);
            out.push(&mut b.ln2.beta);
            for l in &mut b.mlp {
                out.push(&mut l.w);
                out.push(&mut l.b);
            }
        }
        out.push(&mut self.ln_f.gamma);
        out.push(&mut self.ln_f.beta);
        out.push(&mut self.head);
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.named().into_iter().map(|(_, m)| m).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }
}
