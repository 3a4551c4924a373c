//! The embedding network, the twin match-score network built on it, and the
//! plain CNN classifier used as a baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{sigmoid, Graph, Var};
use crate::data::ImageTensor;
use crate::error::{Error, Result};
use crate::nn::{Activation, BatchNorm2d, Conv3x3, Init, Linear, Mode, ParamStore, Pass};
use crate::tensor::Tensor;

/// Number of conv → batchnorm → relu → maxpool blocks.
pub const CONV_BLOCKS: usize = 5;

/// Architecture hyperparameters. Everything that changes tensor shapes lives here.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Square input side in pixels; must be a multiple of 32.
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub embedding_dim: usize,
    /// Adds a bias to the match head. Off by default, which pins `M(I, I) = 0.5`.
    #[serde(default)]
    pub head_bias: bool,
}

impl ArchConfig {
    /// 224×224 inputs, VGG-like widths, 4096-d embeddings.
    pub fn paper() -> Self {
        ArchConfig {
            input_size: 224,
            channels: vec![64, 128, 256, 512, 512],
            embedding_dim: 4096,
            head_bias: false,
        }
    }

    /// 64×64 inputs with narrow blocks, small enough to train on a laptop CPU.
    pub fn desk() -> Self {
        ArchConfig {
            input_size: 64,
            channels: vec![8, 16, 32, 64, 64],
            embedding_dim: 256,
            head_bias: false,
        }
    }

    /// 32×32 inputs and a few channels per block, for gradient checks and fast tests.
    pub fn tiny() -> Self {
        ArchConfig {
            input_size: 32,
            channels: vec![2, 3, 3, 4, 4],
            embedding_dim: 6,
            head_bias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != CONV_BLOCKS {
            return Err(Error::contract(format!(
                "expected {CONV_BLOCKS} channel widths, got {}",
                self.channels.len()
            )));
        }
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return Err(Error::dim(format!(
                "input size {} is not a positive multiple of 32",
                self.input_size
            )));
        }
        if self.embedding_dim == 0 || self.channels.contains(&0) {
            return Err(Error::contract("zero-width layer in architecture"));
        }
        Ok(())
    }

    /// Spatial side after the last pool.
    pub fn final_side(&self) -> usize {
        self.input_size >> CONV_BLOCKS
    }

    pub fn flat_features(&self) -> usize {
        self.channels[CONV_BLOCKS - 1] * self.final_side() * self.final_side()
    }
}

#[derive(Clone, Debug)]
struct ConvBlock {
    conv: Conv3x3,
    bn: BatchNorm2d,
}

/// Five conv blocks followed by two sigmoid fully-connected layers.
#[derive(Clone, Debug)]
pub struct EmbeddingNetwork {
    blocks: Vec<ConvBlock>,
    fc1: Linear,
    fc2: Linear,
    arch: ArchConfig,
}

impl EmbeddingNetwork {
    pub fn new(store: &mut ParamStore, arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        arch.validate()?;
        let mut blocks = Vec::with_capacity(CONV_BLOCKS);
        let mut in_ch = 3;
        for (i, &out_ch) in arch.channels.iter().enumerate() {
            let conv = Conv3x3::new(store, &format!("embed.block{i}.conv"), in_ch, out_ch, false, rng);
            let bn = BatchNorm2d::new(store, &format!("embed.block{i}.bn"), out_ch);
            blocks.push(ConvBlock { conv, bn });
            in_ch = out_ch;
        }
        let e = arch.embedding_dim;
        let fc1 = Linear::new(store, "embed.fc1", arch.flat_features(), e, true, Init::XavierUniform, rng);
        let fc2 = Linear::new(store, "embed.fc2", e, e, true, Init::XavierUniform, rng);
        Ok(EmbeddingNetwork { blocks, fc1, fc2, arch: arch.clone() })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    /// `N×3×S×S → N×embedding_dim`, values in (0, 1).
    pub fn forward(&self, pass: &mut Pass<'_>, x: Var) -> Result<Var> {
        let shape = pass.graph.shape(x);
        let s = self.arch.input_size;
        if shape.len() != 4 || shape[1] != 3 || shape[2] != s || shape[3] != s {
            return Err(Error::dim(format!("embedding network expects N×3×{s}×{s}, got {shape:?}")));
        }
        let mut h = x;
        for block in &self.blocks {
            h = block.conv.forward(pass, h)?;
            h = block.bn.forward(pass, h)?;
            h = Activation::Relu.apply(pass, h)?;
            h = pass.graph.maxpool2x2(h)?;
        }
        let h = pass.graph.flatten(h)?;
        let h = self.fc1.forward(pass, h)?;
        let h = Activation::Sigmoid.apply(pass, h)?;
        let h = self.fc2.forward(pass, h)?;
        Activation::Sigmoid.apply(pass, h)
    }
}

/// Shared access to the parameters of a trainable model.
pub trait Trainable: Sized {
    /// Tag stored in checkpoints so one model kind is never loaded as another.
    const KIND: &'static str;

    /// Freshly initialised model.
    fn build(arch: &ArchConfig, seed: u64) -> Result<Self>;

    fn arch(&self) -> &ArchConfig;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
}

pub type Embedding = Vec<f64>;

/// Twin network: one embedding network applied to both inputs, then
/// `M = σ(w · |f(a) - f(b)|)`.
#[derive(Clone, Debug)]
pub struct JuxtapositionNetwork {
    store: ParamStore,
    embedding: EmbeddingNetwork,
    head: Linear,
}

impl JuxtapositionNetwork {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embedding = EmbeddingNetwork::new(&mut store, arch, &mut rng)?;
        let head = Linear::new(&mut store, "head", arch.embedding_dim, 1, arch.head_bias, Init::XavierUniform, &mut rng);
        Ok(JuxtapositionNetwork { store, embedding, head })
    }

    pub fn embedding_network(&self) -> &EmbeddingNetwork {
        &self.embedding
    }

    /// Eval-mode embedding of a single image.
    pub fn embed(&self, img: &ImageTensor) -> Result<Embedding> {
        let mut out = embed_eval(&self.embedding, &self.store, &[img])?;
        Ok(out.pop().expect("one image in, one embedding out"))
    }

    /// Eval-mode embeddings, one image at a time so each result depends only
    /// on its own image.
    pub fn embed_all(&self, imgs: &[&ImageTensor]) -> Result<Vec<Embedding>> {
        use rayon::prelude::*;
        imgs.par_iter().map(|img| self.embed(img)).collect()
    }

    /// Match score from two precomputed embeddings.
    pub fn score_embeddings(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.store.param(self.head.weight).data();
        let mut z: f64 = w.iter().zip(a.iter().zip(b)).map(|(w, (a, b))| w * (a - b).abs()).sum();
        if let Some(bias) = self.head.bias {
            z += self.store.param(bias).data()[0];
        }
        sigmoid(z)
    }

    /// Probability that the two designs share a style.
    pub fn match_score(&self, a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
        let (fa, fb) = (self.embed(a)?, self.embed(b)?);
        Ok(self.score_embeddings(&fa, &fb))
    }

    /// Graph form of the twin: both batches go through the embedding network
    /// as one stacked batch, giving an `N×1` column of match scores.
    pub fn pair_forward(&self, pass: &mut Pass<'_>, a: Var, b: Var) -> Result<Var> {
        let n = pass.graph.shape(a)[0];
        if pass.graph.shape(b)[0] != n {
            return Err(Error::dim("pair batches differ in length"));
        }
        let both = pass.graph.concat_rows(a, b)?;
        let emb = self.embedding.forward(pass, both)?;
        let fa = pass.graph.slice_rows(emb, 0, n)?;
        let fb = pass.graph.slice_rows(emb, n, 2 * n)?;
        let d = pass.graph.abs_diff(fa, fb)?;
        let z = self.head.forward(pass, d)?;
        pass.graph.sigmoid(z)
    }
}

impl Trainable for JuxtapositionNetwork {
    const KIND: &'static str = "juxtaposition";

    fn build(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Self::new(arch, seed)
    }

    fn arch(&self) -> &ArchConfig {
        self.embedding.arch()
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// Embedding trunk with a single sigmoid output: a direct like/dislike classifier.
#[derive(Clone, Debug)]
pub struct CnnBaseline {
    store: ParamStore,
    trunk: EmbeddingNetwork,
    out: Linear,
}

impl CnnBaseline {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let trunk = EmbeddingNetwork::new(&mut store, arch, &mut rng)?;
        let out = Linear::new(&mut store, "classifier", arch.embedding_dim, 1, true, Init::XavierUniform, &mut rng);
        Ok(CnnBaseline { store, trunk, out })
    }

    /// `N×3×S×S → N×1` like-probabilities.
    pub fn forward(&self, pass: &mut Pass<'_>, x: Var) -> Result<Var> {
        let h = self.trunk.forward(pass, x)?;
        let z = self.out.forward(pass, h)?;
        pass.graph.sigmoid(z)
    }

    /// Eval-mode probability that the image is liked.
    pub fn classify(&self, img: &ImageTensor) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g, false);
        let mut pass = Pass::new(&mut g, &bound, &self.store, Mode::Eval);
        let x = pass.graph.constant(batch_of(&[img])?);
        let y = self.forward(&mut pass, x)?;
        g.value(y).item()
    }
}

impl Trainable for CnnBaseline {
    const KIND: &'static str = "cnn";

    fn build(arch: &ArchConfig, seed: u64) -> Result<Self> {
        Self::new(arch, seed)
    }

    fn arch(&self) -> &ArchConfig {
        self.trunk.arch()
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// Stacks images into one `N×3×H×W` tensor.
pub fn batch_of(imgs: &[&ImageTensor]) -> Result<Tensor> {
    let ts: Vec<&Tensor> = imgs.iter().map(|i| i.tensor()).collect();
    Tensor::stack(&ts)
}

fn embed_eval(net: &EmbeddingNetwork, store: &ParamStore, imgs: &[&ImageTensor]) -> Result<Vec<Embedding>> {
    let mut g = Graph::new();
    let bound = store.bind(&mut g, false);
    let mut pass = Pass::new(&mut g, &bound, store, Mode::Eval);
    let x = pass.graph.constant(batch_of(imgs)?);
    let y = net.forward(&mut pass, x)?;
    let e = net.arch().embedding_dim;
    Ok(g.value(y).data().chunks(e).map(|c| c.to_vec()).collect())
}
