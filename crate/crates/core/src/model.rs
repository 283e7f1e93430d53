//! Conditional autoencoders: an encoder summarizes the observed depth image
//! into a latent code, a decoder renders a depth image from that code and a
//! condition state. The generator variant additionally paints
//! state-dependent features per pixel and fuses them with the decoder
//! output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{half_pad, Real, Tape, Tensor, Var};
use crate::render::DepthImage;
use crate::rng::{self, Domain};
use crate::scene::ModeledState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cae,
    CaeGenerator,
}

/// Architecture of a [`CaeModel`]. Encoder and decoder use 4×4 stride-2
/// (de)convolutions, one per entry of `channels`; generator and output
/// block use 1×1 stride-1 convolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub variant: Variant,
    pub height: usize,
    pub width: usize,
    pub latent_dim: usize,
    pub state_dim: usize,
    /// Depth that maps to 1.0 in the network's normalized units.
    pub max_depth: f64,
    /// Output channels of each encoder convolution; the decoder mirrors them.
    pub channels: Vec<usize>,
    /// Width of the two hidden linear layers between convolutions and latent.
    pub hidden: usize,
    /// Generator variant: width of the 7 generator layers.
    pub generator_width: usize,
    /// Generator variant: decoder output channels fed to the output block.
    pub decoder_features: usize,
    /// Generator variant: width of the first output-block layer.
    pub fuse_width: usize,
    /// Fixed affine map applied to condition states, `(x - offset) * scale`.
    /// Empty means identity.
    #[serde(default)]
    pub condition_offset: Vec<f64>,
    #[serde(default)]
    pub condition_scale: Vec<f64>,
}

pub const KERNEL: usize = 4;
pub const GENERATOR_LAYERS: usize = 7;

impl ModelDescriptor {
    /// 32×64 input, latent 16, four stride-2 stages.
    pub fn desk(variant: Variant, state_dim: usize, max_depth: f64) -> Self {
        ModelDescriptor {
            variant,
            height: 32,
            width: 64,
            latent_dim: 16,
            state_dim,
            max_depth,
            channels: vec![8, 16, 32, 64],
            hidden: 128,
            generator_width: 16,
            decoder_features: 8,
            fuse_width: 16,
            condition_offset: Vec::new(),
            condition_scale: Vec::new(),
        }
    }

    /// 128×256 input, latent 64, six stride-2 stages.
    pub fn paper(variant: Variant, state_dim: usize, max_depth: f64) -> Self {
        ModelDescriptor {
            variant,
            height: 128,
            width: 256,
            latent_dim: 64,
            state_dim,
            max_depth,
            channels: vec![8, 16, 32, 64, 128, 256],
            hidden: 256,
            generator_width: 32,
            decoder_features: 16,
            fuse_width: 32,
            condition_offset: Vec::new(),
            condition_scale: Vec::new(),
        }
    }

    /// Spatial size of the innermost feature map.
    pub fn seed_size(&self) -> (usize, usize) {
        let f = 1 << self.channels.len();
        (self.height / f, self.width / f)
    }

    fn seed_len(&self) -> usize {
        let (h, w) = self.seed_size();
        self.channels.last().copied().unwrap_or(0) * h * w
    }

    pub fn validate(&self) -> Result<()> {
        let f = 1usize << self.channels.len();
        let problems: Vec<String> = [
            (self.channels.is_empty(), "at least one encoder stage is required".into()),
            (
                self.height % f != 0 || self.width % f != 0 || self.height < f || self.width < f,
                format!("{}x{} is not divisible by 2^{}", self.height, self.width, self.channels.len()),
            ),
            (self.channels.iter().any(|c| *c == 0), "channel widths must be positive".into()),
            (self.latent_dim == 0 || self.hidden == 0, "latent and hidden widths must be positive".into()),
            (!(self.max_depth > 0.0), "max_depth must be positive".into()),
            (
                !(self.condition_offset.is_empty() && self.condition_scale.is_empty())
                    && (self.condition_offset.len() != self.state_dim || self.condition_scale.len() != self.state_dim),
                format!("condition normalization needs {} offsets and scales", self.state_dim),
            ),
            (
                self.variant == Variant::CaeGenerator
                    && (self.generator_width == 0 || self.decoder_features == 0 || self.fuse_width == 0),
                "generator widths must be positive".into(),
            ),
        ]
        .into_iter()
        .filter_map(|(bad, msg)| bad.then_some(msg))
        .collect();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// Name and shape of every parameter tensor, in storage order.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let ch = &self.channels;
        let k = KERNEL;
        for (i, &c) in ch.iter().enumerate() {
            let cin = if i == 0 { 3 } else { ch[i - 1] };
            out.push((format!("encoder.conv{i}.weight"), vec![c, cin, k, k]));
            out.push((format!("encoder.conv{i}.bias"), vec![c]));
        }
        let dims = [self.seed_len(), self.hidden, self.hidden, self.latent_dim];
        for i in 0..3 {
            out.push((format!("encoder.fc{i}.weight"), vec![dims[i + 1], dims[i]]));
            out.push((format!("encoder.fc{i}.bias"), vec![dims[i + 1]]));
        }
        out.push(("decoder.fc.weight".into(), vec![self.seed_len(), self.latent_dim + self.state_dim]));
        out.push(("decoder.fc.bias".into(), vec![self.seed_len()]));
        let last_out = match self.variant {
            Variant::Cae => 1,
            Variant::CaeGenerator => self.decoder_features,
        };
        for i in 0..ch.len() {
            let cin = ch[ch.len() - 1 - i];
            let cout = if i + 1 == ch.len() { last_out } else { ch[ch.len() - 2 - i] };
            out.push((format!("decoder.deconv{i}.weight"), vec![cin, cout, k, k]));
            out.push((format!("decoder.deconv{i}.bias"), vec![cout]));
        }
        if self.variant == Variant::CaeGenerator {
            let g = self.generator_width;
            for i in 0..GENERATOR_LAYERS {
                let cin = if i == 0 { self.state_dim + 2 } else { g };
                out.push((format!("generator.conv{i}.weight"), vec![g, cin, 1, 1]));
                out.push((format!("generator.conv{i}.bias"), vec![g]));
            }
            out.push(("output.conv0.weight".into(), vec![self.fuse_width, g + self.decoder_features, 1, 1]));
            out.push(("output.conv0.bias".into(), vec![self.fuse_width]));
            out.push(("output.conv1.weight".into(), vec![1, self.fuse_width, 1, 1]));
            out.push(("output.conv1.bias".into(), vec![1]));
        }
        out
    }

    /// Sets the condition normalization.
    pub fn with_condition_affine(mut self, (offset, scale): (Vec<f64>, Vec<f64>)) -> Self {
        self.condition_offset = offset;
        self.condition_scale = scale;
        self
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Encoder output, one per image.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent(pub Vec<f64>);

impl Latent {
    pub fn cosine_similarity(&self, other: &Latent) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na: f64 = self.0.iter().map(|a| a * a).sum::<f64>();
        let nb: f64 = other.0.iter().map(|b| b * b).sum::<f64>();
        if na == 0.0 || nb == 0.0 {
            return if na == nb { 1.0 } else { 0.0 };
        }
        dot / num_traits::Float::sqrt(na * nb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel<T> {
    pub descriptor: ModelDescriptor,
    pub params: Vec<Tensor<T>>,
}

/// Parameter handles of a model registered on a tape.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Real> CaeModel<T> {
    /// He-uniform weights, zero biases; the final output bias starts at the
    /// middle of the normalized depth range.
    pub fn init(descriptor: ModelDescriptor, seed: u64) -> Result<Self> {
        descriptor.validate()?;
        let mut rng = rng::rng_for(seed, Domain::Init, &[]);
        let shapes = descriptor.layer_shapes();
        let last = shapes.len() - 1;
        let params = shapes
            .iter()
            .enumerate()
            .map(|(i, (name, shape))| {
                let n: usize = shape.iter().product();
                if name.ends_with(".bias") {
                    let v = if i == last { 0.5 } else { 0.0 };
                    return Tensor::full(shape, T::of(v));
                }
                let fan_in = if name.contains("deconv") {
                    // Each output pixel of a stride-2 transposed conv sees a quarter of the taps.
                    shape[0] * shape[2] * shape[3] / 4
                } else {
                    shape[1..].iter().product()
                };
                let bound = num_traits::Float::sqrt(6.0 / fan_in.max(1) as f64);
                Tensor { shape: shape.clone(), data: (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect() }
            })
            .collect();
        Ok(CaeModel { descriptor, params })
    }

    pub fn from_params(descriptor: ModelDescriptor, params: Vec<Tensor<T>>) -> Result<Self> {
        descriptor.validate()?;
        let shapes = descriptor.layer_shapes();
        if shapes.len() != params.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, got {}", shapes.len(), params.len())));
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if &p.shape != shape {
                return Err(Error::Checkpoint(format!("{name}: expected shape {shape:?}, got {:?}", p.shape)));
            }
        }
        Ok(CaeModel { descriptor, params })
    }

    pub fn cast<U: Real>(&self) -> CaeModel<U> {
        CaeModel { descriptor: self.descriptor.clone(), params: self.params.iter().map(|p| p.cast()).collect() }
    }

    /// Registers all parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { tape.param(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        Bound { vars }
    }

    fn check_image(&self, y: &DepthImage) -> Result<()> {
        let d = &self.descriptor;
        if y.width != d.width || y.height != d.height {
            return Err(Error::Dimension {
                expected: format!("{}x{} image", d.width, d.height),
                actual: format!("{}x{}", y.width, y.height),
            });
        }
        Ok(())
    }

    fn check_state(&self, x: &ModeledState) -> Result<()> {
        if x.len() != self.descriptor.state_dim {
            return Err(Error::Dimension {
                expected: format!("state of length {}", self.descriptor.state_dim),
                actual: format!("{}", x.len()),
            });
        }
        Ok(())
    }

    /// Stacks images into a normalized `[N,1,H,W]` tensor.
    pub fn image_tensor(&self, ys: &[&DepthImage]) -> Result<Tensor<T>> {
        let d = &self.descriptor;
        let mut data = Vec::with_capacity(ys.len() * d.height * d.width);
        for y in ys {
            self.check_image(y)?;
            data.extend(y.data.iter().map(|v| T::of(*v as f64 / d.max_depth)));
        }
        Tensor::new(&[ys.len(), 1, d.height, d.width], data)
    }

    pub fn state_tensor(&self, xs: &[&ModeledState]) -> Result<Tensor<T>> {
        let d = &self.descriptor;
        let mut data = Vec::with_capacity(xs.len() * d.state_dim);
        for x in xs {
            self.check_state(x)?;
            if d.condition_scale.is_empty() {
                data.extend(x.0.iter().map(|v| T::of(*v)));
            } else {
                data.extend((0..x.len()).map(|i| T::of((x.0[i] - d.condition_offset[i]) * d.condition_scale[i])));
            }
        }
        Tensor::new(&[xs.len(), self.descriptor.state_dim], data)
    }

    /// Encoder on a normalized `[N,1,H,W]` input; returns `[N, latent]`.
    pub fn encode_vars(&self, tape: &mut Tape<T>, p: &Bound, input: Var) -> Result<Var> {
        let d = &self.descriptor;
        let n = tape.shape(input)[0];
        let mut h = tape.coordconv(input)?;
        let mut i = 0;
        for _ in 0..d.channels.len() {
            h = tape.conv2d(h, p.vars[i], Some(p.vars[i + 1]), 2, half_pad(KERNEL))?;
            h = tape.relu(h)?;
            i += 2;
        }
        h = tape.reshape(h, &[n, d.seed_len()])?;
        for layer in 0..3 {
            h = tape.linear(h, p.vars[i], Some(p.vars[i + 1]))?;
            // The latent projection itself stays linear so no code unit can die.
            if layer < 2 {
                h = tape.relu(h)?;
            }
            i += 2;
        }
        Ok(h)
    }

    /// Decoder (plus generator and output block) from `[N, latent]` and
    /// `[N, state]`; returns a normalized `[N,1,H,W]` image.
    pub fn decode_vars(&self, tape: &mut Tape<T>, p: &Bound, latent: Var, cond: Var) -> Result<Var> {
        let d = &self.descriptor;
        let n = tape.shape(latent)[0];
        let mut i = 2 * d.channels.len() + 6;
        let z = tape.concat(latent, cond)?;
        let mut h = tape.linear(z, p.vars[i], Some(p.vars[i + 1]))?;
        h = tape.relu(h)?;
        i += 2;
        let (sh, sw) = d.seed_size();
        h = tape.reshape(h, &[n, *d.channels.last().expect("validated"), sh, sw])?;
        let stages = d.channels.len();
        for s in 0..stages {
            h = tape.deconv2d(h, p.vars[i], Some(p.vars[i + 1]), 2, half_pad(KERNEL))?;
            i += 2;
            if s + 1 < stages || d.variant == Variant::CaeGenerator {
                h = tape.relu(h)?;
            }
        }
        if d.variant == Variant::Cae {
            return Ok(h);
        }
        let painted = tape.broadcast_spatial(cond, d.height, d.width)?;
        let mut g = tape.coordconv(painted)?;
        for _ in 0..GENERATOR_LAYERS {
            g = tape.conv2d(g, p.vars[i], Some(p.vars[i + 1]), 1, 0)?;
            g = tape.relu(g)?;
            i += 2;
        }
        let fused = tape.concat(h, g)?;
        let mut o = tape.conv2d(fused, p.vars[i], Some(p.vars[i + 1]), 1, 0)?;
        o = tape.relu(o)?;
        i += 2;
        tape.conv2d(o, p.vars[i], Some(p.vars[i + 1]), 1, 0)
    }

    /// `ψ(φ(y), x)` on normalized tensors.
    pub fn reconstruct_vars(&self, tape: &mut Tape<T>, p: &Bound, input: Var, cond: Var) -> Result<Var> {
        let latent = self.encode_vars(tape, p, input)?;
        self.decode_vars(tape, p, latent, cond)
    }

    fn to_image(&self, data: &[T]) -> DepthImage {
        let d = &self.descriptor;
        let max = d.max_depth;
        let pixels = data.iter().map(|v| (v.f64() * max).clamp(0.0, max) as f32).collect();
        DepthImage { width: d.width, height: d.height, data: pixels }
    }

    pub fn encode(&self, y: &DepthImage) -> Result<Latent> {
        Ok(self.encode_batch(&[y])?.remove(0))
    }

    pub fn encode_batch(&self, ys: &[&DepthImage]) -> Result<Vec<Latent>> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let input = tape.constant(self.image_tensor(ys)?);
        let l = self.encode_vars(&mut tape, &p, input)?;
        let k = self.descriptor.latent_dim;
        Ok(tape.value(l).data.chunks(k).map(|c| Latent(c.iter().map(|v| v.f64()).collect())).collect())
    }

    pub fn decode(&self, latent: &Latent, x: &ModeledState) -> Result<DepthImage> {
        Ok(self.decode_many(latent, core::slice::from_ref(x))?.remove(0))
    }

    /// One latent decoded under many condition states.
    pub fn decode_many(&self, latent: &Latent, xs: &[ModeledState]) -> Result<Vec<DepthImage>> {
        let d = &self.descriptor;
        if latent.0.len() != d.latent_dim {
            return Err(Error::Dimension {
                expected: format!("latent of length {}", d.latent_dim),
                actual: format!("{}", latent.0.len()),
            });
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let lat: Vec<T> = (0..xs.len()).flat_map(|_| latent.0.iter().map(|v| T::of(*v))).collect();
        let lv = tape.constant(Tensor::new(&[xs.len(), d.latent_dim], lat)?);
        let refs: Vec<&ModeledState> = xs.iter().collect();
        let cv = tape.constant(self.state_tensor(&refs)?);
        let out = self.decode_vars(&mut tape, &p, lv, cv)?;
        let plane = d.height * d.width;
        Ok(tape.value(out).data.chunks(plane).map(|c| self.to_image(c)).collect())
    }

    /// `ψ(φ(y_in), x_cond)`.
    pub fn reconstruct(&self, y_in: &DepthImage, x_cond: &ModeledState) -> Result<DepthImage> {
        let latent = self.encode(y_in)?;
        self.decode(&latent, x_cond)
    }

    /// One encode of `y_in` shared by every condition state.
    pub fn reconstruct_many(&self, y_in: &DepthImage, xs: &[ModeledState]) -> Result<Vec<DepthImage>> {
        let latent = self.encode(y_in)?;
        self.decode_many(&latent, xs)
    }
}
