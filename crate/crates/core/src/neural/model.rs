use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers;
use super::tensor::{Scalar, Tensor};
use super::NeuralError;

/// Architecture of a four-path residual CNN.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub output_channels: usize,
    /// Filters per convolution (`C`).
    pub filters: usize,
    pub blocks_per_path: usize,
    /// Down-sampling factor of each path.
    pub factors: Vec<usize>,
}

impl ModelSpec {
    /// Fringe image → `(M, D)`.
    pub fn cnn1(filters: usize) -> Self {
        Self {
            input_channels: 1,
            output_channels: 2,
            filters,
            blocks_per_path: 4,
            factors: vec![1, 2, 4, 8],
        }
    }

    /// Camera-1/2 fringes + reference fringes + reference orders → `k/K`.
    pub fn cnn2(filters: usize) -> Self {
        Self {
            input_channels: 5,
            output_channels: 1,
            ..Self::cnn1(filters)
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.input_channels == 0 || self.filters == 0 || self.factors.is_empty() {
            return Err(NeuralError::Shape("empty model spec".into()));
        }
        if !(1..=2).contains(&self.output_channels) {
            return Err(NeuralError::Shape("output channels must be 1 or 2".into()));
        }
        if self.factors.iter().any(|&f| f == 0) {
            return Err(NeuralError::Shape("zero down-sampling factor".into()));
        }
        Ok(())
    }

    /// Input height/width must be divisible by every path's factor.
    pub fn check_input(&self, h: usize, w: usize, c: usize) -> Result<(), NeuralError> {
        if c != self.input_channels {
            return Err(NeuralError::Shape(format!(
                "expected {} input channels, got {c}",
                self.input_channels
            )));
        }
        for (i, &f) in self.factors.iter().enumerate() {
            if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
                return Err(NeuralError::Shape(format!("shape incompatible with path {}", i + 1)));
            }
        }
        Ok(())
    }

    /// Ordered convolution layers as `(name, C_in, C_out)`.
    pub fn layers(&self) -> Vec<(String, usize, usize)> {
        let c = self.filters;
        let mut out = Vec::new();
        for (p, &f) in self.factors.iter().enumerate() {
            let p = p + 1;
            out.push((format!("path{p}.in"), self.input_channels, c));
            for b in 1..=self.blocks_per_path {
                out.push((format!("path{p}.block{b}.conv1"), c, c));
                out.push((format!("path{p}.block{b}.conv2"), c, c));
            }
            out.push((format!("path{p}.out"), c, c));
            if f > 1 {
                out.push((format!("path{p}.up"), c, c));
            }
        }
        out.push(("final".into(), c * self.factors.len(), self.output_channels));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|(_, i, o)| 9 * i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParam<T> {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    /// `(9·C_in) × C_out`, rows ordered (ky, kx, c_in).
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Network parameters: one weight and one bias tensor per convolution, in
/// [`ModelSpec::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub spec: ModelSpec,
    pub convs: Vec<ConvParam<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            spec: spec.clone(),
            convs: spec
                .layers()
                .into_iter()
                .map(|(name, cin, cout)| ConvParam {
                    name,
                    cin,
                    cout,
                    weight: vec![T::ZERO; 9 * cin * cout],
                    bias: vec![T::ZERO; cout],
                })
                .collect(),
        }
    }

    /// Named tensors in file order: `<layer>.weight`, `<layer>.bias`.
    pub fn named(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.push((format!("{}.weight", c.name), vec![3, 3, c.cin, c.cout], c.weight.as_slice()));
            out.push((format!("{}.bias", c.name), vec![c.cout], c.bias.as_slice()));
        }
        out
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.convs
            .iter()
            .flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        self.convs
            .iter_mut()
            .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            spec: self.spec.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| ConvParam {
                    name: c.name.clone(),
                    cin: c.cin,
                    cout: c.cout,
                    weight: c.weight.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                    bias: c.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// He-normal weights (σ = √(2 / (9·C_in))), zero biases.
pub fn build_model<T: Scalar>(spec: &ModelSpec, init_seed: u64) -> Result<Params<T>, NeuralError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut p = Params::zeros(spec);
    for c in p.convs.iter_mut() {
        let normal = Normal::new(0.0, (2.0 / (9 * c.cin) as f64).sqrt()).expect("positive sigma");
        for w in c.weight.iter_mut() {
            *w = T::from_f64(normal.sample(&mut rng));
        }
    }
    Ok(p)
}

enum Node {
    Input,
    Conv { x: usize, layer: usize },
    Relu { x: usize },
    Pool { x: usize, arg: Vec<u32> },
    Up { x: usize, s: usize },
    Add { a: usize, b: usize },
    Concat { parts: Vec<usize> },
}

/// Recorded forward pass for reverse-mode differentiation.
pub struct Tape<T> {
    values: Vec<Tensor<T>>,
    nodes: Vec<Node>,
    requires_grad: Vec<bool>,
    scratch: Vec<T>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            nodes: Vec::new(),
            requires_grad: Vec::new(),
            scratch: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, node: Node, requires_grad: bool) -> usize {
        self.values.push(value);
        self.nodes.push(node);
        self.requires_grad.push(requires_grad);
        self.values.len() - 1
    }

    pub fn value(&self, id: usize) -> &Tensor<T> {
        &self.values[id]
    }

    pub fn input(&mut self, x: Tensor<T>) -> usize {
        self.push(x, Node::Input, false)
    }

    pub fn conv(&mut self, x: usize, layer: usize, params: &Params<T>) -> usize {
        let p = &params.convs[layer];
        let out = layers::conv3x3(&self.values[x], &p.weight, &p.bias, &mut self.scratch);
        self.push(out, Node::Conv { x, layer }, true)
    }

    pub fn relu(&mut self, x: usize) -> usize {
        let out = layers::relu(&self.values[x]);
        let rg = self.requires_grad[x];
        self.push(out, Node::Relu { x }, rg)
    }

    pub fn pool(&mut self, x: usize, s: usize) -> usize {
        let (out, arg) = layers::max_pool(&self.values[x], s);
        let rg = self.requires_grad[x];
        self.push(out, Node::Pool { x, arg }, rg)
    }

    pub fn upsample(&mut self, x: usize, s: usize) -> usize {
        let out = layers::upsample(&self.values[x], s);
        let rg = self.requires_grad[x];
        self.push(out, Node::Up { x, s }, rg)
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        let out = layers::add(&self.values[a], &self.values[b]);
        let rg = self.requires_grad[a] || self.requires_grad[b];
        self.push(out, Node::Add { a, b }, rg)
    }

    pub fn concat(&mut self, parts: &[usize]) -> usize {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|&p| &self.values[p]).collect();
        let out = layers::concat(&refs);
        let rg = parts.iter().any(|&p| self.requires_grad[p]);
        self.push(out, Node::Concat { parts: parts.to_vec() }, rg)
    }

    /// Back-propagates `dout` from node `out`; parameter gradients are added
    /// into `grads`.
    pub fn backward(&mut self, out: usize, dout: Tensor<T>, params: &Params<T>, grads: &mut Params<T>) {
        let mut g: Vec<Option<Tensor<T>>> = (0..self.values.len()).map(|_| None).collect();
        g[out] = Some(dout);
        fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, d: Tensor<T>) {
            match slot {
                Some(t) => t.data.iter_mut().zip(&d.data).for_each(|(a, &b)| *a += b),
                None => *slot = Some(d),
            }
        }
        for id in (0..=out).rev() {
            let Some(d) = g[id].take() else { continue };
            match &self.nodes[id] {
                Node::Input => {}
                Node::Conv { x, layer } => {
                    let (x, layer) = (*x, *layer);
                    let need_dx = self.requires_grad[x];
                    let p = &params.convs[layer];
                    let gp = &mut grads.convs[layer];
                    if let Some(dx) = layers::conv3x3_backward(
                        &self.values[x],
                        &p.weight,
                        &d,
                        &mut gp.weight,
                        &mut gp.bias,
                        need_dx,
                        &mut self.scratch,
                    ) {
                        accumulate(&mut g[x], dx);
                    }
                }
                Node::Relu { x } => {
                    if self.requires_grad[*x] {
                        let dx = layers::relu_backward(&self.values[id], &d);
                        accumulate(&mut g[*x], dx);
                    }
                }
                Node::Pool { x, arg } => {
                    if self.requires_grad[*x] {
                        let xv = &self.values[*x];
                        let dx = layers::max_pool_backward(&d, arg, xv.h, xv.w);
                        accumulate(&mut g[*x], dx);
                    }
                }
                Node::Up { x, s } => {
                    if self.requires_grad[*x] {
                        let dx = layers::upsample_backward(&d, *s);
                        accumulate(&mut g[*x], dx);
                    }
                }
                Node::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires_grad[b] {
                        accumulate(&mut g[b], d.clone());
                    }
                    if self.requires_grad[a] {
                        accumulate(&mut g[a], d);
                    }
                }
                Node::Concat { parts } => {
                    let channels: Vec<usize> = parts.iter().map(|&p| self.values[p].c).collect();
                    for (&p, dp) in parts.iter().zip(layers::concat_backward(&d, &channels)) {
                        if self.requires_grad[p] {
                            accumulate(&mut g[p], dp);
                        }
                    }
                }
            }
        }
    }
}

/// Records the network on `tape` and returns the output node.
pub fn forward_on_tape<T: Scalar>(
    params: &Params<T>,
    input: Tensor<T>,
    tape: &mut Tape<T>,
) -> Result<usize, NeuralError> {
    let spec = &params.spec;
    spec.check_input(input.h, input.w, input.c)?;
    let x = tape.input(input);
    let mut layer = 0;
    let mut next = || {
        layer += 1;
        layer - 1
    };
    let mut outs = Vec::with_capacity(spec.factors.len());
    for &f in &spec.factors {
        let mut h = if f > 1 { tape.pool(x, f) } else { x };
        let c = tape.conv(h, next(), params);
        h = tape.relu(c);
        for _ in 0..spec.blocks_per_path {
            let c1 = tape.conv(h, next(), params);
            let r1 = tape.relu(c1);
            let c2 = tape.conv(r1, next(), params);
            let r2 = tape.relu(c2);
            h = tape.add(h, r2);
        }
        let c = tape.conv(h, next(), params);
        h = tape.relu(c);
        if f > 1 {
            let u = tape.upsample(h, f);
            let c = tape.conv(u, next(), params);
            h = tape.relu(c);
        }
        outs.push(h);
    }
    let cat = tape.concat(&outs);
    Ok(tape.conv(cat, next(), params))
}

/// Deterministic inference.
pub fn forward<T: Scalar>(params: &Params<T>, input: &Tensor<T>) -> Result<Tensor<T>, NeuralError> {
    let mut tape = Tape::new();
    let out = forward_on_tape(params, input.clone(), &mut tape)?;
    Ok(tape.values.swap_remove(out))
}

/// One supervised example: input `(H, W, C_in)`, target `(H, W, C_out)` and
/// the pixels that contribute to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
    pub mask: Vec<bool>,
}

impl<T: Scalar> TrainSample<T> {
    pub fn cast<U: Scalar>(&self) -> TrainSample<U> {
        TrainSample {
            input: self.input.cast(),
            target: self.target.cast(),
            mask: self.mask.clone(),
        }
    }
}

/// Masked MSE over the batch (mean over supervised pixels and channels) and
/// its gradient with respect to every parameter.
pub fn loss_and_grad<T: Scalar>(
    params: &Params<T>,
    batch: &[TrainSample<T>],
) -> Result<(f64, Params<T>), NeuralError> {
    let total: usize = batch
        .iter()
        .map(|s| s.mask.iter().filter(|&&m| m).count() * s.target.c)
        .sum();
    if batch.is_empty() || total == 0 {
        return Err(NeuralError::NoSupervisedPixels);
    }
    let mut grads = Params::zeros(&params.spec);
    let mut loss = 0.0;
    for s in batch {
        let mut tape = Tape::new();
        let out = forward_on_tape(params, s.input.clone(), &mut tape)?;
        if tape.value(out).shape() != s.target.shape() {
            return Err(NeuralError::Shape("target shape differs from network output".into()));
        }
        let (l, d) = layers::masked_mse(tape.value(out), &s.target, &s.mask, total as f64);
        loss += l;
        tape.backward(out, d, params, &mut grads);
    }
    Ok((loss, grads))
}

/// Batch loss without gradients.
pub fn loss<T: Scalar>(params: &Params<T>, batch: &[TrainSample<T>]) -> Result<f64, NeuralError> {
    let total: usize = batch
        .iter()
        .map(|s| s.mask.iter().filter(|&&m| m).count() * s.target.c)
        .sum();
    if batch.is_empty() || total == 0 {
        return Err(NeuralError::NoSupervisedPixels);
    }
    let mut sum = 0.0;
    for s in batch {
        let out = forward(params, &s.input)?;
        sum += layers::masked_mse(&out, &s.target, &s.mask, total as f64).0;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            input_channels: 2,
            output_channels: 2,
            filters: 3,
            blocks_per_path: 1,
            factors: vec![1, 2, 4, 8],
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a: Params<f32> = build_model(&tiny_spec(), 4).unwrap();
        let b: Params<f32> = build_model(&tiny_spec(), 4).unwrap();
        let c: Params<f32> = build_model(&tiny_spec(), 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), tiny_spec().parameter_count());
    }

    #[test]
    fn zero_weights_output_final_bias() {
        let mut p: Params<f64> = Params::zeros(&tiny_spec());
        let last = p.convs.len() - 1;
        p.convs[last].bias = vec![0.25, -1.5];
        let x = Tensor::from_vec(8, 16, 2, (0..256).map(|i| (i % 7) as f64 * 0.1).collect());
        let out = forward(&p, &x).unwrap();
        for px in out.data.chunks(2) {
            assert_eq!(px, &[0.25, -1.5]);
        }
    }

    #[test]
    fn zero_input_output_is_reproducible() {
        let p: Params<f32> = build_model(&tiny_spec(), 9).unwrap();
        let x = Tensor::zeros(16, 8, 2);
        let a = forward(&p, &x).unwrap();
        assert!(a.all_finite());
        assert_eq!(a, forward(&p, &x).unwrap());
    }

    #[test]
    fn shape_errors() {
        let p: Params<f32> = build_model(&tiny_spec(), 1).unwrap();
        let err = forward(&p, &Tensor::zeros(12, 16, 2)).unwrap_err();
        assert_eq!(err.to_string(), "shape incompatible with path 4");
        assert!(forward(&p, &Tensor::zeros(16, 16, 1)).is_err());
        let mut bad = tiny_spec();
        bad.output_channels = 3;
        assert!(build_model::<f32>(&bad, 0).is_err());
    }

    #[test]
    fn perfect_output_has_zero_loss_and_gradient() {
        let mut p: Params<f64> = Params::zeros(&tiny_spec());
        let last = p.convs.len() - 1;
        p.convs[last].bias = vec![0.5, 0.5];
        let s = TrainSample {
            input: Tensor::from_vec(8, 8, 2, vec![0.3; 128]),
            target: Tensor::from_vec(8, 8, 2, vec![0.5; 128]),
            mask: vec![true; 64],
        };
        let (l, g) = loss_and_grad(&p, &[s]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn loss_is_order_invariant_and_needs_pixels() {
        let p: Params<f64> = build_model(&tiny_spec(), 2).unwrap();
        let mk = |v: f64, m: bool| TrainSample {
            input: Tensor::from_vec(8, 8, 2, (0..128).map(|i| v * (i % 5) as f64).collect()),
            target: Tensor::from_vec(8, 8, 2, vec![v; 128]),
            mask: vec![m; 64],
        };
        let (a, b) = (mk(0.2, true), mk(0.7, true));
        let (l1, g1) = loss_and_grad(&p, &[a.clone(), b.clone()]).unwrap();
        let (l2, g2) = loss_and_grad(&p, &[b, a]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (x, y) in g1.slices().iter().zip(g2.slices()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        let err = loss_and_grad(&p, &[mk(0.1, false)]).unwrap_err();
        assert_eq!(err.to_string(), "no supervised pixels");
    }

    #[test]
    fn desk_smoke_forward_is_fast() {
        let spec = ModelSpec {
            input_channels: 1,
            ..ModelSpec::cnn1(8)
        };
        let p: Params<f32> = build_model(&spec, 0).unwrap();
        let x = Tensor::zeros(64, 64, 1);
        let t = std::time::Instant::now();
        let out = forward(&p, &x).unwrap();
        assert_eq!(out.shape(), (64, 64, 2));
        assert!(t.elapsed().as_secs_f64() < 1.0);
    }
}
