use rand::Rng;

use super::layer::{Conv3x3, InstanceNorm, Layer, LayerCache};
use super::{NamedTensor, Tensor4};
use crate::{Error, Real, Result};

pub const DEFAULT_SLOPE: f64 = 0.1;
pub const DEFAULT_WIDTH: usize = 64;

/// A feed-forward stack of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Net<T> {
    layers: Vec<Layer<T>>,
}

/// Activations recorded by [`Net::forward_train`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    shapes: Vec<[usize; 4]>,
    layers: Vec<LayerCache<T>>,
}

/// Parameter gradients, one vector per parameter tensor in [`Net::params`] order.
pub type Grads<T> = Vec<Vec<T>>;

impl<T: Real> Net<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        let mut c: Option<usize> = None;
        for (idx, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Conv3x3(conv) => {
                    if conv.weight.len() != conv.out_ch * conv.in_ch * 9 || conv.bias.len() != conv.out_ch {
                        return Err(Error::shape(format!("layer {idx}: conv3x3 parameter count")));
                    }
                    if c.is_some_and(|c| c != conv.in_ch) {
                        return Err(Error::shape(format!(
                            "layer {idx}: conv3x3 expects {} channels, previous layer gives {}",
                            conv.in_ch,
                            c.unwrap_or(0)
                        )));
                    }
                    c = Some(conv.out_ch);
                }
                Layer::InstanceNorm(norm) => {
                    if norm.beta.len() != norm.gamma.len() {
                        return Err(Error::shape(format!("layer {idx}: instance_norm parameter count")));
                    }
                    if c.is_some_and(|c| c != norm.channels()) {
                        return Err(Error::shape(format!(
                            "layer {idx}: instance_norm over {} channels, previous layer gives {}",
                            norm.channels(),
                            c.unwrap_or(0)
                        )));
                    }
                    c = Some(norm.channels());
                }
                Layer::PixelShuffle { factor } => {
                    if let Some(ch) = c {
                        let rr = factor * factor;
                        if *factor == 0 || ch % rr != 0 {
                            return Err(Error::shape(format!(
                                "layer {idx}: pixel_shuffle({factor}) on {ch} channels"
                            )));
                        }
                        c = Some(ch / rr);
                    }
                }
                Layer::LeakyRelu { .. } | Layer::SoftmaxChannels => {}
            }
        }
        Ok(Self { layers })
    }

    /// Weight predictor: `depth` convs of `width` channels, each but the last
    /// followed by instance norm and leaky ReLU, ending in `n_out` channels and
    /// an optional channel softmax.
    pub fn predictor<R: Rng + ?Sized>(
        in_ch: usize,
        width: usize,
        n_out: usize,
        depth: usize,
        softmax: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut c = in_ch;
        for _ in 0..depth.saturating_sub(1) {
            layers.push(Layer::Conv3x3(Conv3x3::kaiming(c, width, DEFAULT_SLOPE, rng)));
            layers.push(Layer::InstanceNorm(InstanceNorm::new(width)));
            layers.push(Layer::LeakyRelu {
                slope: T::lit(DEFAULT_SLOPE),
            });
            c = width;
        }
        layers.push(Layer::Conv3x3(Conv3x3::kaiming(c, n_out, DEFAULT_SLOPE, rng)));
        if softmax {
            layers.push(Layer::SoftmaxChannels);
        }
        Self::new(layers)
    }

    /// Temporal branch: `depth` convs with leaky ReLU between them, the last
    /// producing `r²·out_ch` channels, then a pixel shuffle by `r`.
    pub fn temporal<R: Rng + ?Sized>(
        in_ch: usize,
        width: usize,
        out_ch: usize,
        depth: usize,
        scale: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut c = in_ch;
        for _ in 0..depth.saturating_sub(1) {
            layers.push(Layer::Conv3x3(Conv3x3::kaiming(c, width, DEFAULT_SLOPE, rng)));
            layers.push(Layer::LeakyRelu {
                slope: T::lit(DEFAULT_SLOPE),
            });
            c = width;
        }
        layers.push(Layer::Conv3x3(Conv3x3::kaiming(
            c,
            out_ch * scale * scale,
            DEFAULT_SLOPE,
            rng,
        )));
        layers.push(Layer::PixelShuffle { factor: scale });
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn in_channels(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Conv3x3(c) => Some(c.in_ch),
            Layer::InstanceNorm(n) => Some(n.channels()),
            _ => None,
        })
    }

    pub fn out_shape(&self, mut shape: [usize; 4]) -> Result<[usize; 4]> {
        for layer in &self.layers {
            shape = layer.out_shape(shape)?;
        }
        Ok(shape)
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Zero every weight and bias of the last conv layer.
    pub fn zero_last_conv(&mut self) {
        if let Some(Layer::Conv3x3(conv)) = self.layers.iter_mut().rev().find(|l| matches!(l, Layer::Conv3x3(_))) {
            conv.weight.iter_mut().for_each(|v| *v = T::zero());
            conv.bias.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Zero every parameter, leaving norm scales at zero too.
    pub fn zero_all(&mut self) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut cur = x.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            cur = layer
                .forward(&cur, false)
                .map_err(|e| annotate(e, idx, layer.kind()))?
                .0;
        }
        Ok(cur)
    }

    /// Sign of every LeakyReLU input on `x`, in layer order. Finite-difference
    /// checks use it to detect probes that cross a kink.
    pub fn relu_signs(&self, x: &Tensor4<T>) -> Result<Vec<bool>> {
        let mut cur = x.clone();
        let mut signs = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            if matches!(layer, Layer::LeakyRelu { .. }) {
                signs.extend(cur.data().iter().map(|&v| v > T::zero()));
            }
            cur = layer
                .forward(&cur, false)
                .map_err(|e| annotate(e, idx, layer.kind()))?
                .0;
        }
        Ok(signs)
    }

    pub fn forward_train(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, ForwardCache<T>)> {
        let mut cur = x.clone();
        let mut cache = ForwardCache {
            shapes: Vec::with_capacity(self.layers.len()),
            layers: Vec::with_capacity(self.layers.len()),
        };
        for (idx, layer) in self.layers.iter().enumerate() {
            cache.shapes.push(cur.shape());
            let (y, c) = layer.forward(&cur, true).map_err(|e| annotate(e, idx, layer.kind()))?;
            cache.layers.push(c);
            cur = y;
        }
        Ok((cur, cache))
    }

    /// Gradients of every parameter and of the input, given the upstream
    /// gradient of the output.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Tensor4<T>) -> Result<(Grads<T>, Tensor4<T>)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::invalid("backward: cache does not belong to this net"));
        }
        let expected = match cache.shapes.first() {
            Some(&s) => self.out_shape(s)?,
            None => dy.shape(),
        };
        if dy.shape() != expected {
            return Err(Error::shape(format!(
                "backward: upstream gradient {:?}, output {:?}",
                dy.shape(),
                expected
            )));
        }
        let mut per_layer: Vec<Vec<Vec<T>>> = Vec::with_capacity(self.layers.len());
        let mut g = dy.clone();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let (dx, pg) = layer
                .backward(&cache.layers[idx], &g, cache.shapes[idx])
                .map_err(|e| annotate(e, idx, layer.kind()))?;
            per_layer.push(pg);
            g = dx;
        }
        per_layer.reverse();
        Ok((per_layer.into_iter().flatten().collect(), g))
    }

    /// Parameters and shape-bearing hyper-parameters as named tensors, each
    /// name prefixed by `prefix`.
    pub fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            let name = |field: &str| format!("{prefix}{idx}.{}.{field}", layer.kind());
            let f32s = |v: &[T]| v.iter().map(|x| x.as_f64() as f32).collect::<Vec<_>>();
            match layer {
                Layer::Conv3x3(c) => {
                    out.push(NamedTensor::new(
                        name("weight"),
                        vec![c.out_ch, c.in_ch, 3, 3],
                        f32s(&c.weight),
                    ));
                    out.push(NamedTensor::new(name("bias"), vec![c.out_ch], f32s(&c.bias)));
                }
                Layer::InstanceNorm(n) => {
                    out.push(NamedTensor::new(name("gamma"), vec![n.channels()], f32s(&n.gamma)));
                    out.push(NamedTensor::new(name("beta"), vec![n.channels()], f32s(&n.beta)));
                }
                Layer::LeakyRelu { slope } => {
                    out.push(NamedTensor::new(name("slope"), vec![1], vec![slope.as_f64() as f32]));
                }
                Layer::PixelShuffle { factor } => {
                    out.push(NamedTensor::new(name("factor"), vec![1], vec![*factor as f32]));
                }
                Layer::SoftmaxChannels => out.push(NamedTensor::new(name("marker"), vec![0], Vec::new())),
            }
        }
        out
    }

    /// Rebuild a net from the tensors whose names start with `prefix`.
    pub fn from_tensors(prefix: &str, tensors: &[NamedTensor]) -> Result<Self> {
        let mut layers: Vec<Layer<T>> = Vec::new();
        let mine: Vec<&NamedTensor> = tensors.iter().filter(|t| t.name.starts_with(prefix)).collect();
        let mut i = 0;
        while i < mine.len() {
            let rest = &mine[i].name[prefix.len()..];
            let mut parts = rest.splitn(3, '.');
            let (Some(idx), Some(kind), Some(_)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::invalid(format!("malformed tensor name {:?}", mine[i].name)));
            };
            if idx.parse::<usize>().ok() != Some(layers.len()) {
                return Err(Error::invalid(format!(
                    "tensor {:?}: expected layer index {}",
                    mine[i].name,
                    layers.len()
                )));
            }
            let field = |k: usize, want: &str| -> Result<&NamedTensor> {
                let t = mine
                    .get(i + k)
                    .ok_or_else(|| Error::invalid(format!("{prefix}{idx}.{kind}: missing {want}")))?;
                if t.name != format!("{prefix}{idx}.{kind}.{want}") {
                    return Err(Error::invalid(format!(
                        "expected {prefix}{idx}.{kind}.{want}, found {}",
                        t.name
                    )));
                }
                Ok(t)
            };
            let conv = |v: &[f32]| v.iter().map(|&x| T::lit(x as f64)).collect::<Vec<T>>();
            let scalar = |t: &NamedTensor| -> Result<f32> {
                match t.data.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(Error::invalid(format!("{} must hold one value", t.name))),
                }
            };
            match kind {
                "conv3x3" => {
                    let w = field(0, "weight")?;
                    let b = field(1, "bias")?;
                    let [o, c, 3, 3] = w.shape[..] else {
                        return Err(Error::shape(format!("{}: shape {:?}", w.name, w.shape)));
                    };
                    if b.shape != [o] {
                        return Err(Error::shape(format!("{}: shape {:?}", b.name, b.shape)));
                    }
                    layers.push(Layer::Conv3x3(Conv3x3 {
                        in_ch: c,
                        out_ch: o,
                        weight: conv(&w.data),
                        bias: conv(&b.data),
                    }));
                    i += 2;
                }
                "instance_norm" => {
                    let g = field(0, "gamma")?;
                    let b = field(1, "beta")?;
                    if g.shape.len() != 1 || b.shape != g.shape {
                        return Err(Error::shape(format!("{}: shape {:?}", g.name, g.shape)));
                    }
                    layers.push(Layer::InstanceNorm(InstanceNorm {
                        gamma: conv(&g.data),
                        beta: conv(&b.data),
                    }));
                    i += 2;
                }
                "leaky_relu" => {
                    let s = scalar(field(0, "slope")?)?;
                    layers.push(Layer::LeakyRelu {
                        slope: T::lit(s as f64),
                    });
                    i += 1;
                }
                "pixel_shuffle" => {
                    let f = scalar(field(0, "factor")?)?;
                    if !(f >= 1.0 && f.fract() == 0.0 && f <= 64.0) {
                        return Err(Error::invalid(format!("pixel_shuffle factor {f}")));
                    }
                    layers.push(Layer::PixelShuffle { factor: f as usize });
                    i += 1;
                }
                "softmax" => {
                    field(0, "marker")?;
                    layers.push(Layer::SoftmaxChannels);
                    i += 1;
                }
                other => return Err(Error::invalid(format!("unknown layer kind {other:?}"))),
            }
        }
        if layers.is_empty() {
            return Err(Error::invalid(format!("no tensors with prefix {prefix:?}")));
        }
        Self::new(layers)
    }

    pub fn cast<U: Real>(&self) -> Net<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv3x3(k) => Layer::Conv3x3(Conv3x3 {
                    in_ch: k.in_ch,
                    out_ch: k.out_ch,
                    weight: c(&k.weight),
                    bias: c(&k.bias),
                }),
                Layer::InstanceNorm(n) => Layer::InstanceNorm(InstanceNorm {
                    gamma: c(&n.gamma),
                    beta: c(&n.beta),
                }),
                Layer::LeakyRelu { slope } => Layer::LeakyRelu {
                    slope: U::lit(slope.as_f64()),
                },
                Layer::PixelShuffle { factor } => Layer::PixelShuffle { factor: *factor },
                Layer::SoftmaxChannels => Layer::SoftmaxChannels,
            })
            .collect();
        Net { layers }
    }
}

fn annotate(e: Error, idx: usize, kind: &str) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("layer {idx} ({kind}): {m}")),
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("layer {idx} ({kind}): {m}")),
        other => other,
    }
}
