use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motiondata::{FlowStack, STACK_CHANNELS};
use crate::nncore::{
    activation, activation_backward, conv2d_backward, conv2d_forward, deconv2d_backward, deconv2d_forward,
    global_average_pool, Activation, Checkpoint, LayerGrads, LayerParams, Real, Tensor, TrainSchedule,
};

/// Architecture and schedule of the flow autoencoder.
///
/// Seven layers: three stride-2 encoder convolutions, one stride-1
/// bottleneck convolution, and three stride-2 transposed convolutions back
/// to the input resolution. Every layer is followed by ReLU except the last,
/// which is linear so it can reproduce signed flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanConfig {
    pub input_channels: usize,
    pub height: usize,
    pub width: usize,
    pub encoder_widths: [usize; 3],
    pub bottleneck_channels: usize,
    pub kernel: usize,
    pub decoder_kernel: usize,
    pub schedule: TrainSchedule,
}

impl Default for TanConfig {
    fn default() -> Self {
        TanConfig {
            input_channels: STACK_CHANNELS,
            height: 64,
            width: 64,
            encoder_widths: [64, 128, 256],
            bottleneck_channels: 1024,
            kernel: 3,
            decoder_kernel: 4,
            schedule: TrainSchedule {
                learning_rate: 0.005,
                iterations: 5000,
                milestones: vec![2500, 4000],
                batch_size: 8,
                seed: 0,
            },
        }
    }
}

pub const LAYER_NAMES: [&str; 7] =
    ["tan/enc1", "tan/enc2", "tan/enc3", "tan/bottleneck", "tan/dec1", "tan/dec2", "tan/dec3"];

struct LayerSpec {
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    transposed: bool,
    act: Activation,
}

impl TanConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.height == 0 || self.height % 8 != 0 || self.width == 0 || self.width % 8 != 0 {
            errs.push(format!("input size {}x{} must be a positive multiple of 8", self.height, self.width));
        }
        if self.input_channels == 0 || self.bottleneck_channels == 0 || self.encoder_widths.contains(&0) {
            errs.push("channel counts must be positive".to_string());
        }
        if self.kernel != 3 {
            errs.push(format!("encoder kernel must be 3 (padding 1 keeps stride arithmetic exact), got {}", self.kernel));
        }
        if self.decoder_kernel != 4 {
            errs.push(format!("decoder kernel must be 4 (stride 2, padding 1 doubles size), got {}", self.decoder_kernel));
        }
        if let Err(Error::Config(mut e)) = self.schedule.validate() {
            errs.append(&mut e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn layers(&self) -> [LayerSpec; 7] {
        let [w1, w2, w3] = self.encoder_widths;
        let b = self.bottleneck_channels;
        let (k, dk) = (self.kernel, self.decoder_kernel);
        let conv = |c_in, c_out, stride| LayerSpec { c_in, c_out, kernel: k, stride, transposed: false, act: Activation::Relu };
        let deconv = |c_in, c_out, act| LayerSpec { c_in, c_out, kernel: dk, stride: 2, transposed: true, act };
        [
            conv(self.input_channels, w1, 2),
            conv(w1, w2, 2),
            conv(w2, w3, 2),
            conv(w3, b, 1),
            deconv(b, w3, Activation::Relu),
            deconv(w3, w2, Activation::Relu),
            deconv(w2, self.input_channels, Activation::Identity),
        ]
    }

    pub fn bottleneck_shape(&self) -> [usize; 3] {
        [self.bottleneck_channels, self.height / 8, self.width / 8]
    }
}

fn padding_for(spec: &LayerSpec) -> usize {
    if spec.transposed {
        1
    } else {
        spec.kernel / 2
    }
}

/// Parameters of the seven autoencoder layers, in [`LAYER_NAMES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct TanParams<T = f32> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> TanParams<T> {
    pub fn init(config: &TanConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layers()
            .iter()
            .map(|s| {
                let kk = s.kernel * s.kernel;
                let shape = if s.transposed {
                    [s.c_in, s.c_out, s.kernel, s.kernel]
                } else {
                    [s.c_out, s.c_in, s.kernel, s.kernel]
                };
                LayerParams::glorot(&shape, s.c_out, s.c_in * kk, s.c_out * kk, &mut rng)
            })
            .collect();
        TanParams { layers }
    }

    pub fn cast<U: Real>(&self) -> TanParams<U> {
        TanParams { layers: self.layers.iter().map(LayerParams::cast).collect() }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }

    /// Flat addressing across all layers, for gradient probes.
    pub fn locate(&self, mut i: usize) -> (usize, usize) {
        for (l, p) in self.layers.iter().enumerate() {
            if i < p.param_count() {
                return (l, i);
            }
            i -= p.param_count();
        }
        panic!("parameter index out of range");
    }
}

impl TanParams<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for (name, p) in LAYER_NAMES.iter().zip(&self.layers) {
            ck.push(*name, p.clone());
        }
        ck
    }

    pub fn from_checkpoint(config: &TanConfig, ck: &Checkpoint) -> Result<Self> {
        let reference = TanParams::<f32>::init(config, 0);
        let mut layers = Vec::with_capacity(7);
        for (name, expect) in LAYER_NAMES.iter().zip(&reference.layers) {
            let p = ck.take(name)?;
            if p.weight.shape() != expect.weight.shape() || p.bias.shape() != expect.bias.shape() {
                return Err(Error::shape("tan checkpoint", expect.weight.shape(), p.weight.shape()));
            }
            layers.push(p);
        }
        Ok(TanParams { layers })
    }
}

/// Post-activation outputs of every layer for one forward pass.
#[derive(Clone, Debug)]
pub struct TanActivations<T = f32> {
    pub input: Tensor<T>,
    pub outputs: Vec<Tensor<T>>,
}

impl<T: Real> TanActivations<T> {
    pub fn bottleneck(&self) -> &Tensor<T> {
        &self.outputs[3]
    }

    pub fn reconstruction(&self) -> &Tensor<T> {
        &self.outputs[6]
    }
}

fn check_input<T: Real>(config: &TanConfig, input: &Tensor<T>) -> Result<()> {
    let expect = [config.input_channels, config.height, config.width];
    let ok = match input.shape() {
        [c, h, w] => [*c, *h, *w] == expect,
        [_, c, h, w] => [*c, *h, *w] == expect,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::shape("tan_forward", &expect, input.shape()))
    }
}

fn layer_forward<T: Real>(spec: &LayerSpec, p: &LayerParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let pad = padding_for(spec);
    let z = if spec.transposed {
        deconv2d_forward(x, p, spec.stride, pad)?
    } else {
        conv2d_forward(x, p, spec.stride, pad)?
    };
    Ok(activation(&z, spec.act))
}

/// Forward pass through all layers (`upto = 7`) or just the encoder and
/// bottleneck (`upto = 4`). Input is `[N,30,H,W]` or `[30,H,W]`.
pub fn tan_forward_layers<T: Real>(config: &TanConfig, params: &TanParams<T>, input: &Tensor<T>, upto: usize) -> Result<TanActivations<T>> {
    check_input(config, input)?;
    let specs = config.layers();
    let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(upto);
    for (spec, p) in specs.iter().zip(&params.layers).take(upto) {
        let x = outputs.last().unwrap_or(input);
        let y = layer_forward(spec, p, x)?;
        outputs.push(y);
    }
    Ok(TanActivations { input: input.clone(), outputs })
}

pub fn tan_forward<T: Real>(config: &TanConfig, params: &TanParams<T>, input: &Tensor<T>) -> Result<TanActivations<T>> {
    tan_forward_layers(config, params, input, 7)
}

/// Backpropagates `grad_recon` (gradient of the loss w.r.t. the
/// reconstruction) through all seven layers.
pub fn tan_backward<T: Real>(
    config: &TanConfig,
    params: &TanParams<T>,
    acts: &TanActivations<T>,
    grad_recon: &Tensor<T>,
) -> Result<Vec<LayerGrads<T>>> {
    let specs = config.layers();
    let mut grads: Vec<Option<LayerGrads<T>>> = vec![None; 7];
    let mut g = grad_recon.clone();
    for l in (0..7).rev() {
        let spec = &specs[l];
        let x = if l == 0 { &acts.input } else { &acts.outputs[l - 1] };
        let gz = activation_backward(&acts.outputs[l], &g, spec.act);
        let pad = padding_for(spec);
        let (gi, gp) = if spec.transposed {
            deconv2d_backward(x, &params.layers[l], &gz, spec.stride, pad, l > 0)?
        } else {
            conv2d_backward(x, &params.layers[l], &gz, spec.stride, pad, l > 0)?
        };
        grads[l] = Some(gp);
        if let Some(gi) = gi {
            g = gi;
        }
    }
    Ok(grads.into_iter().map(|g| g.expect("every layer visited")).collect())
}

/// Mean absolute error between the flow input and its reconstruction.
pub fn recon_loss<T: Real>(input: &Tensor<T>, reconstruction: &Tensor<T>) -> Result<f64> {
    if input.shape() != reconstruction.shape() {
        return Err(Error::shape("recon_loss", input.shape(), reconstruction.shape()));
    }
    if input.is_empty() {
        return Err(Error::InvalidInput("recon_loss of empty tensors".into()));
    }
    let total: f64 = input.data().iter().zip(reconstruction.data()).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum();
    Ok(total / input.len() as f64)
}

/// Subgradient of [`recon_loss`] w.r.t. the reconstruction (`sign(r - x) / n`).
pub fn recon_loss_grad<T: Real>(input: &Tensor<T>, reconstruction: &Tensor<T>) -> Tensor<T> {
    let inv = T::one() / T::from_usize(input.len()).unwrap_or_else(T::one);
    let mut g = reconstruction.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        let d = *gv - x;
        *gv = if d > T::zero() {
            inv
        } else if d < T::zero() {
            -inv
        } else {
            T::zero()
        };
    }
    g
}

/// One clip's motion descriptor: the bottleneck after global average pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionFeature {
    pub clip_id: String,
    pub values: Vec<f32>,
}

/// A trained (or freshly initialized) autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct TanModel {
    pub config: TanConfig,
    pub params: TanParams<f32>,
}

impl TanModel {
    pub fn new(config: TanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = TanParams::init(&config, seed);
        Ok(TanModel { config, params })
    }

    /// Reconstruction and bottleneck of one normalized stack.
    pub fn forward(&self, stack: &FlowStack) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut acts = tan_forward(&self.config, &self.params, &stack.normalized())?;
        let recon = acts.outputs.pop().expect("seven outputs");
        let bottleneck = acts.outputs.swap_remove(3);
        Ok((recon, bottleneck))
    }

    /// Encoder and bottleneck only, then per-channel spatial mean.
    pub fn extract_feature(&self, stack: &FlowStack) -> Result<MotionFeature> {
        let acts = tan_forward_layers(&self.config, &self.params, &stack.normalized(), 4)?;
        let pooled = global_average_pool(acts.bottleneck())?;
        Ok(MotionFeature { clip_id: stack.clip_id(), values: pooled.into_vec() })
    }

    pub fn stack_loss(&self, stack: &FlowStack) -> Result<f64> {
        let (recon, _) = self.forward(stack)?;
        recon_loss(&stack.normalized(), &recon)
    }
}
