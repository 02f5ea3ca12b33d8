use crate::nncore::{Activation, Param, ParamKind, ParamSet, Rng};

use super::{Image, PixelFeatures, ScoreMaps};

/// Stride-1, same-padded 2D convolution over a `[C][H][W]` buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

impl Conv2d {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd for same padding");
        let area = kernel * kernel;
        Conv2d {
            weight: Param::xavier(
                format!("{name}.weight"),
                &[out_channels, in_channels, kernel, kernel],
                in_channels * area,
                out_channels * area,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), ParamKind::Bias, &[out_channels]),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Pre-activation output, `[out][H][W]`.
    pub fn forward(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let m = h * w;
        debug_assert_eq!(input.len(), self.in_channels * m);
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let wd = self.weight.value.data();
        let mut out = vec![0.0; self.out_channels * m];
        for o in 0..self.out_channels {
            let plane = &mut out[o * m..(o + 1) * m];
            plane.fill(self.bias.value.data()[o]);
            for i in 0..self.in_channels {
                let src = &input[i * m..(i + 1) * m];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wd[((o * self.in_channels + i) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let dy = ky as isize - pad;
                        let dx = kx as isize - pad;
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let (x0, x1) = span(w, dx);
                            let row = y * w;
                            let srow = sy as usize * w;
                            for x in x0..x1 {
                                plane[row + x] += wv * src[srow + (x as isize + dx) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulate weight and bias gradients; returns `dL/dinput` when asked.
    pub fn backward(
        &mut self,
        input: &[f64],
        h: usize,
        w: usize,
        dout: &[f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let m = h * w;
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let mut dinput = want_input_grad.then(|| vec![0.0; self.in_channels * m]);
        let wd = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        for o in 0..self.out_channels {
            let dplane = &dout[o * m..(o + 1) * m];
            gb[o] += dplane.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let src = &input[i * m..(i + 1) * m];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * self.in_channels + i) * k + ky) * k + kx;
                        let dy = ky as isize - pad;
                        let dx = kx as isize - pad;
                        let (x0, x1) = span(w, dx);
                        let mut acc = 0.0;
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let row = y * w;
                            let srow = sy as usize * w;
                            for x in x0..x1 {
                                let s = srow + (x as isize + dx) as usize;
                                acc += dplane[row + x] * src[s];
                                if let Some(di) = dinput.as_mut() {
                                    di[i * m + s] += dplane[row + x] * wd[widx];
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        dinput
    }
}

/// Output columns `x` for which `x + dx` stays inside `0..w`.
fn span(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (w as isize - dx).min(w as isize).max(0) as usize;
    (lo.min(hi), hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnConfig {
    /// `K + 1`, background included.
    pub classes: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
}

impl CnnConfig {
    /// conv3x3(3->8) -> conv3x3(8->16) -> conv3x3(16->16) -> conv1x1(16->K+1).
    pub fn toy(classes: usize) -> Self {
        CnnConfig {
            classes,
            hidden: vec![8, 16],
            feature_dim: 16,
            activation: Activation::Relu,
        }
    }
}

/// The pixel scorer: stacked 3x3 convolutions followed by a 1x1 score layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    pub layers: Vec<Conv2d>,
    pub score: Conv2d,
    activation: Activation,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct CnnTrace {
    pub height: usize,
    pub width: usize,
    input: Vec<f64>,
    activations: Vec<Vec<f64>>,
    pub scores: ScoreMaps,
    pub features: PixelFeatures,
}

impl Cnn {
    pub fn new(config: &CnnConfig, rng: &mut Rng) -> Self {
        let mut widths = vec![3];
        widths.extend(&config.hidden);
        widths.push(config.feature_dim);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, pair)| Conv2d::new(&format!("cnn.conv{}", i + 1), pair[0], pair[1], 3, rng))
            .collect();
        let score = Conv2d::new("cnn.score", config.feature_dim, config.classes, 1, rng);
        Cnn {
            layers,
            score,
            activation: config.activation,
        }
    }

    pub fn classes(&self) -> usize {
        self.score.out_channels()
    }

    pub fn feature_dim(&self) -> usize {
        self.score.in_channels()
    }

    pub fn forward(&self, image: &Image) -> (ScoreMaps, PixelFeatures) {
        let trace = self.trace(image);
        (trace.scores, trace.features)
    }

    pub fn trace(&self, image: &Image) -> CnnTrace {
        let (h, w) = (image.height(), image.width());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = image.data().to_vec();
        for layer in &self.layers {
            let pre = layer.forward(&current, h, w);
            current = self.activation.forward(&pre);
            activations.push(current.clone());
        }
        let scores = ScoreMaps {
            classes: self.classes(),
            height: h,
            width: w,
            data: self.score.forward(&current, h, w),
        };
        let features = PixelFeatures {
            dim: self.feature_dim(),
            height: h,
            width: w,
            data: current,
        };
        CnnTrace {
            height: h,
            width: w,
            input: image.data().to_vec(),
            activations,
            scores,
            features,
        }
    }

    /// Backpropagate score gradients and any extra gradient on the pixel
    /// features (from pooling) into every parameter.
    pub fn backward(&mut self, trace: &CnnTrace, dscores: &[f64], dfeatures: Option<&[f64]>) {
        let (h, w) = (trace.height, trace.width);
        let feats = &trace.features.data;
        let mut grad = self
            .score
            .backward(feats, h, w, dscores, true)
            .expect("input grad requested");
        if let Some(extra) = dfeatures {
            for (g, e) in grad.iter_mut().zip(extra) {
                *g += e;
            }
        }
        for idx in (0..self.layers.len()).rev() {
            let dpre = self.activation.backward(&trace.activations[idx], &grad);
            let input = if idx == 0 {
                &trace.input
            } else {
                &trace.activations[idx - 1]
            };
            match self.layers[idx].backward(input, h, w, &dpre, idx > 0) {
                Some(g) => grad = g,
                None => break,
            }
        }
    }
}

impl ParamSet for Cnn {
    fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for l in self.layers.iter().chain(std::iter::once(&self.score)) {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for l in self.layers.iter_mut().chain(std::iter::once(&mut self.score)) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}
