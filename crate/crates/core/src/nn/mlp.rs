use rand::Rng;

use super::init::orthogonal_init;
use crate::{Error, Result};

/// Fully connected layer `y = W x + b` with a row-major `rows × cols` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    rows: usize,
    cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    /// Orthogonal weight scaled by `gain`, zero bias.
    pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            rows,
            cols,
            weight: orthogonal_init(rows, cols, gain, rng),
            bias: vec![0.0; rows],
        }
    }

    pub fn from_parts(rows: usize, cols: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != rows * cols {
            return Err(Error::Dimension {
                context: "dense weight",
                expected: rows * cols,
                got: weight.len(),
            });
        }
        if bias.len() != rows {
            return Err(Error::Dimension {
                context: "dense bias",
                expected: rows,
                got: bias.len(),
            });
        }
        Ok(Self { rows, cols, weight, bias })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weight
                .chunks_exact(self.cols)
                .zip(&self.bias)
                .map(|(row, b)| b + dot(row, x)),
        );
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x: &[f64; 4] = x.try_into().unwrap();
        let y: &[f64; 4] = y.try_into().unwrap();
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `tanh` through a single `exp`; absolute error stays below 1e-15.
#[inline]
fn fast_tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

/// `y += a * x` over the common prefix.
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    let n = x.len().min(y.len());
    for (yi, xi) in y[..n].iter_mut().zip(&x[..n]) {
        *yi += a * xi;
    }
}

/// Activations recorded by [`Mlp::forward`]; entry 0 is the input and the
/// last entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache always holds the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

/// Tanh MLP with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(Error::Dimension {
                    context: "layer chain",
                    expected: pair[0].rows,
                    got: pair[1].cols,
                });
            }
        }
        Ok(Self { layers })
    }

    /// Orthogonally initialized network with layer widths `sizes`
    /// (`sizes[0]` is the input dimension). Hidden layers use `hidden_gain`,
    /// the output layer `output_gain`.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need an input and an output width");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let gain = if k == last { output_gain } else { hidden_gain };
                Dense::orthogonal(w[1], w[0], gain, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.rows);
            layer.affine(&activations[k], &mut out);
            if k != last {
                out.iter_mut().for_each(|h| *h = fast_tanh(*h));
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Forward pass keeping only the output.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if k != last {
                next.iter_mut().for_each(|h| *h = fast_tanh(*h));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Gradient of `grad_out · output` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<Mlp> {
        let mut grads = self.zeros_like();
        self.accumulate_backward(cache, grad_out, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but adds into an existing gradient accumulator.
    pub fn accumulate_backward(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut Mlp) -> Result<()> {
        self.check_cache(cache)?;
        if grad_out.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "mlp output gradient",
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Dimension {
                context: "gradient accumulator depth",
                expected: self.layers.len(),
                got: grads.layers.len(),
            });
        }

        // `delta` is the gradient w.r.t. the pre-activation of layer k.
        let mut delta = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &cache.activations[k];
            let g = &mut grads.layers[k];
            for ((row, gb), &d) in g.weight.chunks_exact_mut(layer.cols).zip(&mut g.bias).zip(&delta) {
                *gb += d;
                if d != 0.0 {
                    axpy(d, input, row);
                }
            }
            if k == 0 {
                break;
            }
            // Back through W, then through the tanh that produced `input`.
            let mut prev = vec![0.0; layer.cols];
            for (row, &d) in layer.weight.chunks_exact(layer.cols).zip(&delta) {
                if d != 0.0 {
                    axpy(d, row, &mut prev);
                }
            }
            prev.iter_mut().zip(input).for_each(|(p, h)| *p *= 1.0 - h * h);
            delta = prev;
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let stale = cache.activations.len() != self.layers.len() + 1
            || cache.activations[0].len() != self.input_dim()
            || self
                .layers
                .iter()
                .zip(&cache.activations[1..])
                .any(|(l, a)| a.len() != l.rows);
        if stale {
            return Err(Error::Config("forward cache does not match this network".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line recomputation used as an independent forward oracle.
    #[allow(clippy::needless_range_loop)]
    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let n = net.layers().len();
        for (k, l) in net.layers().iter().enumerate() {
            let mut out = vec![0.0; l.rows()];
            for r in 0..l.rows() {
                let mut s = l.bias[r];
                for c in 0..l.cols() {
                    s += l.weight[r * l.cols() + c] * cur[c];
                }
                out[r] = if k + 1 < n { s.tanh() } else { s };
            }
            cur = out;
        }
        cur
    }

    #[test]
    fn fast_tanh_tracks_libm() {
        let worst = (-4000..=4000)
            .map(|k| k as f64 * 0.005)
            .chain([-800.0, -40.0, 1e-300, 40.0, 800.0])
            .map(|x| (fast_tanh(x) - x.tanh()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-15, "{worst}");
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::new(vec![Dense::zeros(5, 3), Dense::zeros(2, 5)]).unwrap();
        let out = net.predict(&[0.3, -1.0, 7.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_passes_through() {
        let layer = Dense::from_parts(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let net = Mlp::new(vec![layer]).unwrap();
        assert_eq!(net.predict(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_matches_naive_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::orthogonal(&[3, 7, 2], 1.3, 0.7, &mut rng);
        let x = [0.5, -0.25, 1.5];
        let fast = net.forward(&x).unwrap();
        let slow = naive_forward(&net, &x);
        for (a, b) in fast.output().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(net.predict(&x).unwrap(), fast.output());
    }

    #[test]
    fn bad_input_dimension_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::orthogonal(&[3, 4, 1], 1.0, 1.0, &mut rng);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mismatched_layers_are_rejected() {
        assert!(Mlp::new(vec![Dense::zeros(4, 3), Dense::zeros(1, 5)]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::orthogonal(&[3, 8, 8, 2], 1.0, 1.0, &mut rng);
        let cache = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert_eq!(g, net.zeros_like());
    }

    #[test]
    fn linear_scalar_gradient_is_input() {
        let layer = Dense::from_parts(1, 3, vec![0.4, -2.0, 1.0], vec![0.5]).unwrap();
        let net = Mlp::new(vec![layer]).unwrap();
        let x = [1.5, -0.5, 2.0];
        let cache = net.forward(&x).unwrap();
        let g = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.layers()[0].weight, x.to_vec());
        assert_eq!(g.layers()[0].bias, vec![1.0]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Mlp::orthogonal(&[3, 4, 1], 1.0, 1.0, &mut rng);
        let b = Mlp::orthogonal(&[3, 5, 1], 1.0, 1.0, &mut rng);
        let cache = b.forward(&[0.0, 0.0, 0.0]).unwrap();
        assert!(a.backward(&cache, &[1.0]).is_err());
    }
}
