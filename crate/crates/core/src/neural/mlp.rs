use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network with rectifier hidden layers and a linear output.
///
/// Parameters live in one flat vector; layer `l` stores its `(out, in)`
/// row-major weight matrix followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer activations from a batched forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("non-empty cache")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.acts.pop().expect("non-empty cache")
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; weights and biases uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            for _ in 0..n_in * n_out + n_out {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != Self::param_count(sizes) {
            return Err(Error::Data(format!(
                "parameter vector of length {} does not fit layer sizes {sizes:?}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Data("non-finite network parameter".into()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0usize, |off, w| {
            let start = *off;
            *off += w[0] * w[1] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    fn layer(&self, start: usize, n_in: usize, n_out: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[start..start + n_in * n_out]).unwrap();
        let b = ArrayView1::from(&self.params[start + n_in * n_out..start + n_in * n_out + n_out]);
        (w, b)
    }

    /// Batched forward pass over the rows of `input`.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_size() {
            return Err(Error::Contract(format!(
                "input has {} features, network expects {}",
                input.ncols(),
                self.input_size()
            )));
        }
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_owned());
        for (l, (start, n_in, n_out)) in self.layer_offsets().enumerate() {
            let (w, b) = self.layer(start, n_in, n_out);
            let mut z = acts[l].dot(&w.t());
            z += &b;
            if l + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Ok(ForwardCache { acts })
    }

    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(input)?.into_output())
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let input = ArrayView2::from_shape((1, x.len()), x).unwrap();
        Ok(self.predict(input)?.into_raw_vec_and_offset().0)
    }

    /// Accumulates parameter gradients for `grad_out = dL/d output` into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_out: ArrayView2<'_, f64>, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        let layers: Vec<_> = self.layer_offsets().collect();
        let mut g = grad_out.to_owned();
        for l in (0..layers.len()).rev() {
            let (start, n_in, n_out) = layers[l];
            let x = &cache.acts[l];
            let (wpart, bpart) = grads[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut dw = ArrayViewMut2::from_shape((n_out, n_in), wpart).unwrap();
            general_mat_mul(1.0, &g.t(), x, 1.0, &mut dw);
            let mut db = ArrayViewMut1::from(bpart);
            db += &g.sum_axis(Axis(0));
            if l > 0 {
                let (w, _) = self.layer(start, n_in, n_out);
                let mut gx = g.dot(&w);
                // rectifier derivative of the previous layer
                ndarray::Zip::from(&mut gx).and(x).for_each(|gv, &a| {
                    if a <= 0.0 {
                        *gv = 0.0;
                    }
                });
                g = gx;
            }
        }
    }

    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, grad_out, &mut grads);
        grads
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::with_stream;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]);
        assert_eq!(net.predict_one(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn unit_chain() {
        let net = Mlp::from_params(&[1, 1, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(net.predict_one(&[2.0]).unwrap(), vec![2.0]);
        // negative pre-activation is cut by the rectifier
        assert_eq!(net.predict_one(&[-2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(net.predict_one(&[1.0]).is_err());
        assert!(Mlp::from_params(&[3, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let net = Mlp::new(&[3, 5, 2], &mut with_stream(0, 0));
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let cache = net.forward(x.view()).unwrap();
        let g = net.backward(&cache, Array2::zeros((2, 2)).view());
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_unit_blocks_gradient() {
        // hidden unit bias -10 keeps it off for small inputs
        let net = Mlp::from_params(&[1, 1, 1], vec![1.0, -10.0, 1.0, 0.0]).unwrap();
        let x = array![[1.0]];
        let cache = net.forward(x.view()).unwrap();
        let g = net.backward(&cache, array![[1.0]].view());
        assert_eq!(&g[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(g[3], 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = with_stream(42, 0);
        for trial in 0..100 {
            let sizes = [
                rng.random_range(1..5),
                rng.random_range(1..6),
                rng.random_range(1..6),
                rng.random_range(1..4),
            ];
            let net = Mlp::new(&sizes, &mut rng);
            let b = rng.random_range(1..4);
            let x = Array2::from_shape_fn((b, sizes[0]), |_| rng.random_range(-2.0..2.0));
            let w = Array2::from_shape_fn((b, sizes[3]), |_| rng.random_range(-1.0..1.0));
            let loss = |n: &Mlp| (n.predict(x.view()).unwrap() * &w).sum();
            let cache = net.forward(x.view()).unwrap();
            let analytic = net.backward(&cache, w.view());
            let h = 1e-5;
            let numeric: Vec<f64> = (0..net.params.len())
                .map(|k| {
                    let mut p = net.clone();
                    p.params[k] += h;
                    let up = loss(&p);
                    p.params[k] -= 2.0 * h;
                    (up - loss(&p)) / (2.0 * h)
                })
                .collect();
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
            let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
            assert!(scale == 0.0 || diff / scale < 1e-4, "trial {trial}: rel err {}", diff / scale);
        }
    }
}
