//! Small tanh MLPs with scalar output and a choice of output head.
//!
//! Parameters live in one flat buffer (weights then biases, layer by layer)
//! so gradient accumulators and optimizer state are plain slices of the same
//! shape. Backprop reuses a caller-held workspace; no per-call allocation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `ln(1 + e^z)` without overflow on large `z`.
pub fn softplus<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z + z.neg().exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function, evaluated on the side that avoids overflow.
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + z.neg().exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Scalar output transforms. `Square`, `Softplus` and `Exp` keep a ratio
/// model nonnegative; `CapLn2` keeps a critic below `ln 2`, the boundary of
/// the Jensen-Shannon conjugate domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Identity,
    Square,
    Softplus,
    Exp,
    CapLn2,
}

impl OutputHead {
    pub fn name(self) -> &'static str {
        match self {
            OutputHead::Identity => "identity",
            OutputHead::Square => "square",
            OutputHead::Softplus => "softplus",
            OutputHead::Exp => "exp",
            OutputHead::CapLn2 => "cap_ln2",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(OutputHead::Identity),
            "square" => Ok(OutputHead::Square),
            "softplus" => Ok(OutputHead::Softplus),
            "exp" => Ok(OutputHead::Exp),
            "cap_ln2" => Ok(OutputHead::CapLn2),
            other => Err(Error::UnknownName {
                kind: "output head",
                name: other.to_string(),
            }),
        }
    }

    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            OutputHead::Identity => z,
            OutputHead::Square => z * z,
            OutputHead::Softplus => softplus(z),
            OutputHead::Exp => z.exp(),
            OutputHead::CapLn2 => S::of(core::f64::consts::LN_2) - softplus(z.neg()),
        }
    }

    pub fn deriv<S: Scalar>(self, z: S) -> S {
        match self {
            OutputHead::Identity => S::one(),
            OutputHead::Square => S::of(2.0) * z,
            OutputHead::Softplus => sigmoid(z),
            OutputHead::Exp => z.exp(),
            OutputHead::CapLn2 => sigmoid(z.neg()),
        }
    }

    /// Whether the head's range is contained in `[0, inf)`.
    pub fn is_nonnegative(self) -> bool {
        matches!(
            self,
            OutputHead::Square | OutputHead::Softplus | OutputHead::Exp
        )
    }

    /// A `z` with `apply(z) = v`, for `v` in the head's range.
    pub fn preimage<S: Scalar>(self, v: S) -> Result<S> {
        let out_of_range = |requirement| Error::InvalidArgument {
            what: "head preimage",
            requirement,
            value: v.to_f64(),
        };
        match self {
            OutputHead::Identity => Ok(v),
            OutputHead::Square => {
                if v < S::zero() {
                    Err(out_of_range("nonnegative for square head"))
                } else {
                    Ok(v.sqrt())
                }
            }
            OutputHead::Softplus => {
                if v <= S::zero() {
                    Err(out_of_range("positive for softplus head"))
                } else {
                    // softplus^-1(v) = ln(e^v - 1).
                    Ok(v.exp_m1().ln())
                }
            }
            OutputHead::Exp => {
                if v <= S::zero() {
                    Err(out_of_range("positive for exp head"))
                } else {
                    Ok(v.ln())
                }
            }
            OutputHead::CapLn2 => {
                let ln2 = S::of(core::f64::consts::LN_2);
                if v >= ln2 {
                    Err(out_of_range("below ln 2 for cap_ln2 head"))
                } else {
                    Ok(-(ln2 - v).exp_m1().ln())
                }
            }
        }
    }
}

/// Fully connected tanh network with a single output unit.
///
/// `data` holds, per layer, the weight matrix in input-major order
/// (`w[i * n_out + j]`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<S> {
    layer_sizes: Vec<usize>,
    head: OutputHead,
    offsets: Vec<(usize, usize)>,
    data: Vec<S>,
}

/// Scratch buffers for forward and backward passes.
#[derive(Debug, Clone)]
pub struct MlpWorkspace<S> {
    acts: Vec<Vec<S>>,
    deltas: Vec<Vec<S>>,
}

impl<S: Scalar> MlpParams<S> {
    /// Glorot-uniform weights, zero biases; deterministic per seed.
    /// `layer_sizes` runs input to output and must end in a single unit.
    pub fn init(layer_sizes: &[usize], head: OutputHead, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument {
                what: "layer_sizes",
                requirement: "at least two nonzero sizes",
                value: layer_sizes.len() as f64,
            });
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArgument {
                what: "layer_sizes",
                requirement: "single output unit",
                value: *layer_sizes.last().unwrap() as f64,
            });
        }
        let mut offsets = Vec::with_capacity(layer_sizes.len() - 1);
        let mut total = 0;
        for w in layer_sizes.windows(2) {
            offsets.push((total, total + w[0] * w[1]));
            total += w[0] * w[1] + w[1];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![S::zero(); total];
        for (l, w) in layer_sizes.windows(2).enumerate() {
            let bound = S::of((6.0 / (w[0] + w[1]) as f64).sqrt());
            let (w_off, b_off) = offsets[l];
            for v in &mut data[w_off..b_off] {
                let u = S::of(rng.random::<f64>());
                *v = (S::of(2.0) * u - S::one()) * bound;
            }
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            head,
            offsets,
            data,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn workspace(&self) -> MlpWorkspace<S> {
        MlpWorkspace {
            acts: self
                .layer_sizes
                .iter()
                .map(|&n| vec![S::zero(); n])
                .collect(),
            deltas: self.layer_sizes[1..]
                .iter()
                .map(|&n| vec![S::zero(); n])
                .collect(),
        }
    }

    /// Runs the network, leaving per-layer activations in the workspace.
    /// Returns the head output; the final pre-activation is `acts.last()[0]`.
    fn forward_into(&self, x: &[S], ws: &mut MlpWorkspace<S>) -> S {
        debug_assert_eq!(x.len(), self.input_dim());
        ws.acts[0].copy_from_slice(x);
        let n_layers = self.layer_sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w_off, b_off) = self.offsets[l];
            let last = l + 1 == n_layers;
            // Split borrows: input activations and output buffer.
            let (head_slices, tail_slices) = ws.acts.split_at_mut(l + 1);
            let input = &head_slices[l];
            let output = &mut tail_slices[0];
            for j in 0..n_out {
                let mut z = self.data[b_off + j];
                for i in 0..n_in {
                    z = z + input[i] * self.data[w_off + i * n_out + j];
                }
                output[j] = if last { z } else { z.tanh() };
            }
        }
        self.head.apply(ws.acts[n_layers][0])
    }

    pub fn forward(&self, x: &[S], ws: &mut MlpWorkspace<S>) -> S {
        self.forward_into(x, ws)
    }

    /// Computes the head output and adds `upstream * d(output)/d(param)` to
    /// `grad`, which must have `n_params()` entries.
    pub fn value_and_grad(
        &self,
        x: &[S],
        upstream: S,
        ws: &mut MlpWorkspace<S>,
        grad: &mut [S],
    ) -> S {
        debug_assert_eq!(grad.len(), self.data.len());
        let value = self.forward_into(x, ws);
        let n_layers = self.layer_sizes.len() - 1;
        let z_out = ws.acts[n_layers][0];
        ws.deltas[n_layers - 1][0] = upstream * self.head.deriv(z_out);
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w_off, b_off) = self.offsets[l];
            for j in 0..n_out {
                let d = ws.deltas[l][j];
                grad[b_off + j] = grad[b_off + j] + d;
                for i in 0..n_in {
                    grad[w_off + i * n_out + j] = grad[w_off + i * n_out + j] + ws.acts[l][i] * d;
                }
            }
            if l > 0 {
                // tanh' recovered from the stored post-activation.
                let (prev, cur) = ws.deltas.split_at_mut(l);
                let d_out = &cur[0];
                let d_in = &mut prev[l - 1];
                for i in 0..n_in {
                    let mut back = S::zero();
                    for j in 0..n_out {
                        back = back + self.data[w_off + i * n_out + j] * d_out[j];
                    }
                    let a = ws.acts[l][i];
                    d_in[i] = back * (S::one() - a * a);
                }
            }
        }
        value
    }
}
