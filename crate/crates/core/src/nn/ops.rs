use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Affine map `y = x W + b` with `W` stored `[din, dout]`.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Vec<f32>,
    bias: Vec<f32>,
    din: usize,
    dout: usize,
}

impl Linear {
    pub fn new(weight: &Tensor, bias: &Tensor) -> Result<Self> {
        let &[din, dout] = weight.shape() else {
            return Err(Error::Shape(format!(
                "linear weight must be [din, dout], got {:?}",
                weight.shape()
            )));
        };
        if bias.shape() != [dout] {
            return Err(Error::Shape(format!(
                "linear bias must be [{dout}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            weight: weight.data().to_vec(),
            bias: bias.data().to_vec(),
            din,
            dout,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.din
    }

    pub fn out_dim(&self) -> usize {
        self.dout
    }

    pub fn forward_row(&self, x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.din);
        out.copy_from_slice(&self.bias);
        for (i, &xv) in x.iter().enumerate() {
            let w = &self.weight[i * self.dout..(i + 1) * self.dout];
            for (o, wv) in out.iter_mut().zip(w) {
                *o += xv * wv;
            }
        }
    }

    /// Applies the map to every row of a `[T, din]` tensor.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let t = x.expect_2d("linear input", self.din)?;
        let mut out = vec![0.0; t * self.dout];
        for (row, o) in x
            .data()
            .chunks_exact(self.din)
            .zip(out.chunks_exact_mut(self.dout))
        {
            self.forward_row(row, o);
        }
        Tensor::new(vec![t, self.dout], out)
    }
}

pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let layer = Linear::new(w, b)?;
    if x.shape().len() != 2 || x.shape()[1] != layer.din {
        return Err(Error::Shape(format!(
            "linear: input {:?} incompatible with weight {:?}",
            x.shape(),
            w.shape()
        )));
    }
    layer.forward(x)
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Vec<f32>,
    beta: Vec<f32>,
    eps: f32,
}

impl LayerNorm {
    pub fn new(gamma: &Tensor, beta: &Tensor) -> Result<Self> {
        if gamma.shape().len() != 1 || gamma.shape() != beta.shape() {
            return Err(Error::Shape(format!(
                "layer norm params {:?} / {:?}",
                gamma.shape(),
                beta.shape()
            )));
        }
        Ok(Self {
            gamma: gamma.data().to_vec(),
            beta: beta.data().to_vec(),
            eps: 1e-5,
        })
    }

    pub fn forward_inplace(&self, x: &mut Tensor) -> Result<()> {
        x.expect_2d("layer norm input", self.gamma.len())?;
        let d = self.gamma.len();
        for row in x.data_mut().chunks_exact_mut(d) {
            let mean = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
            let inv = 1.0 / (var + self.eps).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        Ok(())
    }
}

pub fn relu_inplace(x: &mut [f32]) {
    for v in x {
        *v = v.max(0.0);
    }
}

pub fn leaky_relu_inplace(x: &mut [f32], slope: f32) {
    for v in x {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

pub fn tanh_inplace(x: &mut [f32]) {
    for v in x {
        *v = v.tanh();
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_inplace(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows(x: &mut Tensor) {
    let c = x.cols();
    for row in x.data_mut().chunks_exact_mut(c) {
        softmax_inplace(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn identity_weights() {
        let y = linear(
            &t(&[1, 2], &[1., 2.]),
            &t(&[2, 2], &[1., 0., 0., 1.]),
            &t(&[2], &[0., 0.]),
        )
        .unwrap();
        assert_eq!(y.data(), &[1., 2.]);
    }

    #[test]
    fn hand_multiplied() {
        let y = linear(
            &t(&[2, 2], &[1., 0., 0., 1.]),
            &t(&[2, 2], &[3., 0., 0., 5.]),
            &t(&[2], &[1., 1.]),
        )
        .unwrap();
        assert_eq!(y.data(), &[4., 1., 1., 6.]);
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let x = t(&[3, 2], &[0.3, -7., 2., 9., 1e3, -4.]);
        let y = linear(&x, &Tensor::zeros(&[2, 3]), &t(&[3], &[1.5, -2., 0.25])).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), &[1.5, -2., 0.25]);
        }
    }

    #[test]
    fn inner_dim_mismatch() {
        let r = linear(
            &t(&[1, 3], &[1., 2., 3.]),
            &Tensor::zeros(&[2, 2]),
            &Tensor::zeros(&[2]),
        );
        assert!(matches!(r, Err(Error::Shape(_))));
        assert!(Linear::new(&Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let ln = LayerNorm::new(&t(&[4], &[1.; 4]), &Tensor::zeros(&[4])).unwrap();
        let mut x = t(&[1, 4], &[1., 2., 3., 4.]);
        ln.forward_inplace(&mut x).unwrap();
        let mean: f32 = x.data().iter().sum::<f32>() / 4.0;
        let var: f32 = x.data().iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1000.0, 999.0, -5.0];
        softmax_inplace(&mut v);
        assert!((v.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(v.iter().all(|p| p.is_finite()));
    }
}
