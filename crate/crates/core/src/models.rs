//! Conditional generator and discriminator networks.
//!
//! Both are small feed-forward MLPs over a flat `f64` parameter vector.
//! Three execution paths share one parameter layout:
//!  - `forward`: plain evaluation, used everywhere geometry probes the map;
//!  - `jvp`: forward-mode tangent propagation, used to assemble Jacobian
//!    columns without one backward pass per output coordinate;
//!  - `record`: replays the forward pass on a [`Tape`] so losses can be
//!    differentiated with respect to parameters and latent inputs.

use crate::error::{Error, Result};
use crate::numerics::{Grads, Matrix, RngState, Tape, Var};
use serde::{Deserialize, Serialize};

/// Smooth activations only: the metric tensor needs `dG/dz` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// Derivative given the pre-activation.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    fn record(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(v),
            Activation::Softplus => tape.softplus(v),
        }
    }
}

/// Architecture description: input width, hidden widths, output width.
/// Hidden layers use the configured activation; the output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, activation: Activation) -> Self {
        Self { input_dim, hidden: hidden.to_vec(), output_dim, activation }
    }

    /// (in, out) per layer, including the final linear layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// A feed-forward MLP over a flat parameter vector.
///
/// Layout per layer: weight matrix `out x in` in row-major order, then the
/// bias vector of length `out`.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl Mlp {
    /// All parameters drawn from Normal(0, 0.5).
    pub fn init(spec: MlpSpec, rng: &mut RngState) -> Self {
        let n = spec.param_count();
        Self { spec, params: rng.normal_vec(n, 0.0, 0.5) }
    }

    pub fn with_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                params.len()
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn zeroed(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        Self { spec, params: vec![0.0; n] }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    /// Offsets of (weights, biases) for each layer in the flat vector.
    fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        for (i, o) in self.spec.layer_dims() {
            out.push((pos, i * o, pos + i * o, o));
            pos += i * o + o;
        }
        out
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.spec.input_dim, "mlp input length");
        let dims = self.spec.layer_dims();
        let offs = self.layer_offsets();
        let last = dims.len() - 1;
        let mut h = input.to_vec();
        for (l, ((in_d, out_d), (w0, wlen, b0, _))) in dims.iter().zip(offs).enumerate() {
            let w = &self.params[w0..w0 + wlen];
            let b = &self.params[b0..b0 + out_d];
            let mut next = vec![0.0; *out_d];
            for r in 0..*out_d {
                let row = &w[r * in_d..(r + 1) * in_d];
                let mut acc = b[r];
                for (wi, hi) in row.iter().zip(&h) {
                    acc += wi * hi;
                }
                next[r] = if l == last { acc } else { self.spec.activation.apply(acc) };
            }
            h = next;
        }
        h
    }

    /// Jacobian-vector product: directional derivative of the output along
    /// `tangent` at `input`, via one forward pass.
    pub fn jvp(&self, input: &[f64], tangent: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.spec.input_dim);
        assert_eq!(tangent.len(), self.spec.input_dim);
        let dims = self.spec.layer_dims();
        let offs = self.layer_offsets();
        let last = dims.len() - 1;
        let mut h = input.to_vec();
        let mut t = tangent.to_vec();
        for (l, ((in_d, out_d), (w0, wlen, b0, _))) in dims.iter().zip(offs).enumerate() {
            let w = &self.params[w0..w0 + wlen];
            let b = &self.params[b0..b0 + out_d];
            let mut next_h = vec![0.0; *out_d];
            let mut next_t = vec![0.0; *out_d];
            for r in 0..*out_d {
                let row = &w[r * in_d..(r + 1) * in_d];
                let mut acc = b[r];
                let mut tac = 0.0;
                for ((wi, hi), ti) in row.iter().zip(&h).zip(&t) {
                    acc += wi * hi;
                    tac += wi * ti;
                }
                if l == last {
                    next_h[r] = acc;
                    next_t[r] = tac;
                } else {
                    next_h[r] = self.spec.activation.apply(acc);
                    next_t[r] = self.spec.activation.derivative(acc) * tac;
                }
            }
            h = next_h;
            t = next_t;
        }
        t
    }

    /// Full Jacobian with respect to the input, one JVP per column.
    pub fn jacobian_input(&self, input: &[f64]) -> Matrix {
        let k = self.spec.input_dim;
        let m = self.spec.output_dim;
        let mut jac = Matrix::zeros(m, k);
        let mut tangent = vec![0.0; k];
        for j in 0..k {
            tangent[j] = 1.0;
            let col = self.jvp(input, &tangent);
            tangent[j] = 0.0;
            for i in 0..m {
                jac.set(i, j, col[i]);
            }
        }
        jac
    }

    /// Register the parameters as tape leaves, one `(weights, bias)` pair
    /// per layer. With `train_params` they are differentiable inputs,
    /// otherwise constants.
    pub fn param_leaves(&self, tape: &mut Tape, train_params: bool) -> Vec<(Var, Var)> {
        let dims = self.spec.layer_dims();
        let offs = self.layer_offsets();
        dims.iter()
            .zip(offs)
            .map(|((in_d, out_d), (w0, wlen, b0, _))| {
                let w_m = Matrix::from_vec(*out_d, *in_d, self.params[w0..w0 + wlen].to_vec())
                    .expect("finite weights");
                let b_m = Matrix::from_vec(*out_d, 1, self.params[b0..b0 + out_d].to_vec())
                    .expect("finite biases");
                if train_params {
                    (tape.input(w_m), tape.input(b_m))
                } else {
                    (tape.constant(w_m), tape.constant(b_m))
                }
            })
            .collect()
    }

    /// Replay the forward pass on a tape through existing parameter
    /// leaves, so several forwards can share (and jointly train) one
    /// parameter set.
    pub fn record_with(&self, tape: &mut Tape, input: Var, leaves: &[(Var, Var)]) -> Var {
        let dims = self.spec.layer_dims();
        debug_assert_eq!(leaves.len(), dims.len());
        let last = dims.len() - 1;
        let mut h = input;
        for (l, &(w, b)) in leaves.iter().enumerate() {
            let lin = tape.matmul(w, h);
            let pre = tape.add(lin, b);
            h = if l == last { pre } else { self.spec.activation.record(tape, pre) };
        }
        h
    }

    /// Replay the forward pass on a tape with fresh parameter leaves.
    pub fn record(
        &self,
        tape: &mut Tape,
        input: Var,
        train_params: bool,
    ) -> (Var, Vec<(Var, Var)>) {
        let leaves = self.param_leaves(tape, train_params);
        let out = self.record_with(tape, input, &leaves);
        (out, leaves)
    }

    /// Assemble the flat parameter gradient from a backward sweep over vars
    /// returned by [`Mlp::record`].
    pub fn flat_grad(&self, tape: &Tape, grads: &Grads, vars: &[(Var, Var)]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.len());
        for &(w, b) in vars {
            out.extend_from_slice(grads.wrt(w, tape).data());
            out.extend_from_slice(grads.wrt(b, tape).data());
        }
        debug_assert_eq!(out.len(), self.params.len());
        out
    }

    /// Spectral norm of each weight matrix (largest singular value).
    pub fn layer_spectral_norms(&self) -> Vec<f64> {
        let dims = self.spec.layer_dims();
        let offs = self.layer_offsets();
        dims.iter()
            .zip(offs)
            .map(|((in_d, out_d), (w0, wlen, _, _))| {
                let w = Matrix::from_vec(*out_d, *in_d, self.params[w0..w0 + wlen].to_vec())
                    .expect("finite weights");
                let gram = w.transpose().matmul(&w).expect("shapes");
                crate::linalg::spectral_radius(&gram, 200).unwrap_or(0.0).sqrt()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Conditional generator `G(z, x)`: the latent code and the condition are
/// concatenated at the input, `[z; x]`.
#[derive(Debug, Clone)]
pub struct GeneratorNet {
    mlp: Mlp,
    latent_dim: usize,
    cond_dim: usize,
}

impl GeneratorNet {
    pub fn new(
        latent_dim: usize,
        cond_dim: usize,
        output_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut RngState,
    ) -> Self {
        let spec = MlpSpec::new(latent_dim + cond_dim, hidden, output_dim, activation);
        Self { mlp: Mlp::init(spec, rng), latent_dim, cond_dim }
    }

    pub fn from_mlp(mlp: Mlp, latent_dim: usize, cond_dim: usize) -> Result<Self> {
        if mlp.spec().input_dim != latent_dim + cond_dim {
            return Err(Error::Shape(format!(
                "mlp input {} != latent {} + cond {}",
                mlp.spec().input_dim,
                latent_dim,
                cond_dim
            )));
        }
        Ok(Self { mlp, latent_dim, cond_dim })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.spec().output_dim
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.mlp.params_mut()
    }

    fn joined(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.latent_dim, "latent length");
        assert_eq!(x.len(), self.cond_dim, "condition length");
        let mut input = Vec::with_capacity(z.len() + x.len());
        input.extend_from_slice(z);
        input.extend_from_slice(x);
        input
    }

    pub fn forward(&self, z: &[f64], x: &[f64]) -> Vec<f64> {
        self.mlp.forward(&self.joined(z, x))
    }

    /// Exact Jacobian `dG/dz`, as forward-mode columns (one JVP per latent
    /// coordinate; the condition block of the tangent stays zero).
    pub fn jacobian_z(&self, z: &[f64], x: &[f64]) -> Matrix {
        let input = self.joined(z, x);
        let k = self.latent_dim;
        let m = self.output_dim();
        let mut jac = Matrix::zeros(m, k);
        let mut tangent = vec![0.0; input.len()];
        for j in 0..k {
            tangent[j] = 1.0;
            let col = self.mlp.jvp(&input, &tangent);
            tangent[j] = 0.0;
            for i in 0..m {
                jac.set(i, j, col[i]);
            }
        }
        jac
    }

    /// Record `G(z, x)` on a tape. `z` may be an existing differentiable
    /// var; `x` enters as a constant.
    pub fn record(
        &self,
        tape: &mut Tape,
        z: Var,
        x: &[f64],
        train_params: bool,
    ) -> (Var, Vec<(Var, Var)>) {
        assert_eq!(x.len(), self.cond_dim, "condition length");
        let xv = tape.constant_vec(x);
        let input = tape.concat_rows(&[z, xv]);
        self.mlp.record(tape, input, train_params)
    }

    /// Record another forward through already-registered parameter leaves.
    pub fn record_with(&self, tape: &mut Tape, z: Var, x: &[f64], leaves: &[(Var, Var)]) -> Var {
        assert_eq!(x.len(), self.cond_dim, "condition length");
        let xv = tape.constant_vec(x);
        let input = tape.concat_rows(&[z, xv]);
        self.mlp.record_with(tape, input, leaves)
    }
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

/// Conditional discriminator `D(x, y) -> logit`.
#[derive(Debug, Clone)]
pub struct DiscriminatorNet {
    mlp: Mlp,
    cond_dim: usize,
    data_dim: usize,
}

impl DiscriminatorNet {
    pub fn new(
        cond_dim: usize,
        data_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut RngState,
    ) -> Self {
        let spec = MlpSpec::new(cond_dim + data_dim, hidden, 1, activation);
        Self { mlp: Mlp::init(spec, rng), cond_dim, data_dim }
    }

    pub fn from_mlp(mlp: Mlp, cond_dim: usize, data_dim: usize) -> Result<Self> {
        if mlp.spec().input_dim != cond_dim + data_dim || mlp.spec().output_dim != 1 {
            return Err(Error::Shape("discriminator dims do not match mlp".into()));
        }
        Ok(Self { mlp, cond_dim, data_dim })
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    /// Scalar logit.
    pub fn forward(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.cond_dim, "condition length");
        assert_eq!(y.len(), self.data_dim, "data length");
        let mut input = Vec::with_capacity(x.len() + y.len());
        input.extend_from_slice(x);
        input.extend_from_slice(y);
        self.mlp.forward(&input)[0]
    }

    /// Record `D(x, y)` where `y` is a tape var (so adversarial gradients
    /// can flow back into the generator that produced it).
    pub fn record(
        &self,
        tape: &mut Tape,
        x: &[f64],
        y: Var,
        train_params: bool,
    ) -> (Var, Vec<(Var, Var)>) {
        assert_eq!(x.len(), self.cond_dim, "condition length");
        let xv = tape.constant_vec(x);
        let input = tape.concat_rows(&[xv, y]);
        self.mlp.record(tape, input, train_params)
    }

    /// Record another forward through already-registered parameter leaves.
    pub fn record_with(&self, tape: &mut Tape, x: &[f64], y: Var, leaves: &[(Var, Var)]) -> Var {
        assert_eq!(x.len(), self.cond_dim, "condition length");
        let xv = tape.constant_vec(x);
        let input = tape.concat_rows(&[xv, y]);
        self.mlp.record_with(tape, input, leaves)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_jacobian;

    fn tiny_gen(seed: u64) -> GeneratorNet {
        let mut rng = RngState::new(seed);
        GeneratorNet::new(3, 2, 4, &[8, 8], Activation::Tanh, &mut rng)
    }

    #[test]
    fn init_params_match_declared_distribution() {
        let mut rng = RngState::new(42);
        let spec = MlpSpec::new(10, &[100, 90], 10, Activation::Tanh);
        let mlp = Mlp::init(spec, &mut rng);
        let n = mlp.params().len() as f64;
        assert!(n >= 1e4);
        let mean = mlp.params().iter().sum::<f64>() / n;
        let std = (mlp.params().iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n).sqrt();
        // 3-sigma bands for the sample mean and sample std of N(0, 0.5).
        assert!(mean.abs() < 3.0 * 0.5 / n.sqrt(), "mean {mean}");
        assert!((std - 0.5).abs() < 3.0 * 0.5 / (2.0 * n).sqrt(), "std {std}");
    }

    #[test]
    fn same_seed_same_params() {
        let a = tiny_gen(7);
        let b = tiny_gen(7);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn zero_weight_network_outputs_bias() {
        let spec = MlpSpec::new(2, &[3], 2, Activation::Tanh);
        let mut mlp = Mlp::zeroed(spec.clone());
        // set final layer bias to (1.5, -0.5)
        let n = mlp.params().len();
        mlp.params_mut()[n - 2] = 1.5;
        mlp.params_mut()[n - 1] = -0.5;
        assert_eq!(mlp.forward(&[0.7, -0.3]), vec![1.5, -0.5]);
    }

    #[test]
    fn single_linear_layer_equals_matmul() {
        let spec = MlpSpec::new(3, &[], 2, Activation::Tanh);
        let w = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0]]).unwrap();
        let mut params = w.data().to_vec();
        params.extend_from_slice(&[0.0, 0.0]);
        let mlp = Mlp::with_params(spec, params).unwrap();
        let z = [0.2, -0.4, 1.0];
        assert_eq!(mlp.forward(&z), w.matvec(&z).unwrap());
    }

    #[test]
    fn output_ignores_condition_only_when_its_weights_are_zero() {
        // one hidden layer; zero out the columns of W1 that read x.
        let mut rng = RngState::new(3);
        let mut g = GeneratorNet::new(2, 2, 3, &[5], Activation::Tanh, &mut rng);
        let (in_d, out_d) = (4, 5);
        for r in 0..out_d {
            for c in 2..in_d {
                g.mlp_mut().params_mut()[r * in_d + c] = 0.0;
            }
        }
        let z = [0.3, -0.8];
        let base = g.forward(&z, &[0.0, 0.0]);
        assert_eq!(g.forward(&z, &[5.0, -2.0]), base);

        // with non-zero condition weights the output must move
        let g2 = tiny_gen(4);
        let z2 = [0.1, 0.2, 0.3];
        let a = g2.forward(&z2, &[0.0, 0.0]);
        let b = g2.forward(&z2, &[1.0, -1.0]);
        assert!(a.iter().zip(&b).any(|(p, q)| (p - q).abs() > 1e-9));
    }

    #[test]
    fn linear_generator_jacobian_is_its_weight_block() {
        // G(z, x) = W [z; x]: dG/dz is the first k columns of W.
        let spec = MlpSpec::new(4, &[], 2, Activation::Tanh);
        let mut rng = RngState::new(5);
        let mlp = Mlp::init(spec, &mut rng);
        let g = GeneratorNet::from_mlp(mlp, 3, 1).unwrap();
        let jac = g.jacobian_z(&[0.5, -0.5, 0.2], &[0.9]);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(jac.get(i, j), g.params()[i * 4 + j]);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for seed in 0..20 {
            let g = tiny_gen(seed);
            let mut rng = RngState::stream(seed, 99);
            let z = rng.normal_vec(3, 0.0, 0.7);
            let x = rng.normal_vec(2, 0.0, 0.7);
            let exact = g.jacobian_z(&z, &x);
            let fd = finite_diff_jacobian(|zz| g.forward(zz, &x), &z, 1e-5).unwrap();
            assert!(
                exact.max_abs_diff(&fd) < 1e-4,
                "seed {seed}: deviation {}",
                exact.max_abs_diff(&fd)
            );
        }
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let g = tiny_gen(11);
        let z = [0.1, -0.2, 0.4];
        let x = [0.3, 0.6];
        let plain = g.forward(&z, &x);
        let mut tape = Tape::new();
        let zv = tape.input_vec(&z);
        let (out, _) = g.record(&mut tape, zv, &x, true);
        assert!(
            plain
                .iter()
                .zip(tape.value(out).data())
                .all(|(a, b)| (a - b).abs() < 1e-14)
        );
    }

    #[test]
    fn lipschitz_bound_from_layer_spectral_norms() {
        // |G(z1) - G(z2)| <= prod(spectral norms) * |z1 - z2| for tanh nets.
        let g = tiny_gen(13);
        let bound: f64 = g.mlp().layer_spectral_norms().iter().product();
        let mut rng = RngState::new(14);
        for _ in 0..200 {
            let z1 = rng.normal_vec(3, 0.0, 1.0);
            let z2 = rng.normal_vec(3, 0.0, 1.0);
            let x = rng.normal_vec(2, 0.0, 1.0);
            let dy = crate::numerics::norm(&crate::numerics::sub(
                &g.forward(&z1, &x),
                &g.forward(&z2, &x),
            ));
            let dz = crate::numerics::norm(&crate::numerics::sub(&z1, &z2));
            assert!(dy <= bound * dz * (1.0 + 1e-9), "ratio {} vs bound {bound}", dy / dz);
        }
    }

    #[test]
    fn discriminator_outputs_scalar_logit() {
        let mut rng = RngState::new(21);
        let d = DiscriminatorNet::new(2, 3, &[6], Activation::Tanh, &mut rng);
        let logit = d.forward(&[0.1, 0.2], &[0.3, 0.4, 0.5]);
        assert!(logit.is_finite());
    }
}
