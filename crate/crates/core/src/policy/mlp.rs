//! Fully connected tanh networks over a flat parameter vector.
//!
//! Layout: for each layer, the weight matrix (rows = outputs, row-major)
//! followed by the bias vector. Hidden layers use tanh, the last layer is
//! linear.

use rand::Rng;

use super::autodiff::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Activations recorded by a forward pass, reused by the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    /// Output of the last forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// `sizes` lists the input width, hidden widths, and output width.
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self { sizes }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Initial parameters: uniform fan-in scaling for hidden layers, and a
    /// last layer shrunk by `out_scale` so the initial outputs are near zero.
    pub fn init<R: Rng>(&self, rng: &mut R, out_scale: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let mut bound = 1.0 / (n_in as f64).sqrt();
            if l + 1 == layers {
                bound *= out_scale;
            }
            for _ in 0..n_in * n_out {
                p.push(rng.gen_range(-bound..=bound));
            }
            p.extend(std::iter::repeat(0.0).take(n_out));
        }
        p
    }

    /// Forward pass; the output is left in the workspace and returned.
    pub fn forward<'w>(&self, params: &[f64], x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(x.len(), self.input());
        let layers = self.sizes.len() - 1;
        ws.acts.resize_with(layers + 1, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let a_in = &prev[l];
            let a_out = &mut rest[0];
            a_out.clear();
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = b[o];
                for (wi, ai) in row.iter().zip(a_in) {
                    z += wi * ai;
                }
                a_out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            off += n_in * n_out + n_out;
        }
        &ws.acts[layers]
    }

    /// Accumulates `d_out · ∂out/∂params` into `grad`, using the activations of
    /// the last forward pass.
    pub fn backward(&self, params: &[f64], ws: &mut Workspace, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let Workspace { acts, delta, next } = ws;
        delta.clear();
        delta.extend_from_slice(d_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let a_in = &acts[l];
            {
                let gw = &mut grad[off..off + n_in * n_out];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(a_in) {
                            *g += d * a;
                        }
                    }
                }
                let gb = &mut grad[off + n_in * n_out..off + n_in * n_out + n_out];
                for (g, d) in gb.iter_mut().zip(delta.iter()) {
                    *g += d;
                }
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                next.clear();
                next.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (n, wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *n += d * wi;
                        }
                    }
                }
                for (n, a) in next.iter_mut().zip(a_in) {
                    *n *= 1.0 - a * a;
                }
                std::mem::swap(delta, next);
            }
        }
    }

    /// Forward-mode directional derivative: returns `(out, ∂out/∂params · v)`.
    pub fn jvp(&self, params: &[f64], x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ws = Workspace::default();
        let mut dout = Vec::new();
        self.jvp_into(params, x, v, &mut ws, &mut dout);
        (ws.acts[self.sizes.len() - 1].clone(), dout)
    }

    /// Forward pass that also leaves `∂out/∂params · v` in `dout`. The
    /// workspace is left ready for [`Mlp::backward`].
    pub fn jvp_into(
        &self,
        params: &[f64],
        x: &[f64],
        v: &[f64],
        ws: &mut Workspace,
        dout: &mut Vec<f64>,
    ) {
        let layers = self.sizes.len() - 1;
        ws.acts.resize_with(layers + 1, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        // `delta` carries the tangent of the previous layer, `next` the new one.
        ws.delta.clear();
        ws.delta.resize(x.len(), 0.0);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let dw = &v[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let db = &v[off + n_in * n_out..off + n_in * n_out + n_out];
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let a = &prev[l];
            let out = &mut rest[0];
            out.clear();
            ws.next.clear();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let drow = &dw[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                let mut ds = db[o];
                for i in 0..n_in {
                    s += row[i] * a[i];
                    ds += drow[i] * a[i] + row[i] * ws.delta[i];
                }
                if l + 1 < layers {
                    let t = s.tanh();
                    out.push(t);
                    ws.next.push(ds * (1.0 - t * t));
                } else {
                    out.push(s);
                    ws.next.push(ds);
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.next);
            off += n_in * n_out + n_out;
        }
        dout.clear();
        dout.extend_from_slice(&ws.delta);
    }

    /// The same network evaluated on a tape, for exact generic gradients.
    pub fn forward_tape<'t>(&self, tape: &'t Tape, params: &[Var<'t>], x: &[f64]) -> Vec<Var<'t>> {
        let layers = self.sizes.len() - 1;
        let mut a: Vec<Var<'t>> = x.iter().map(|&v| tape.constant(v)).collect();
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let mut z = params[off + n_in * n_out + o];
                for i in 0..n_in {
                    z = z + params[off + o * n_in + i] * a[i];
                }
                out.push(if l + 1 < layers { z.tanh() } else { z });
            }
            a = out;
            off += n_in * n_out + n_out;
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_tape_and_jvp() {
        let mlp = Mlp::new(vec![3, 5, 4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = mlp.init(&mut rng, 1.0);
        let x = [0.2, -0.4, 0.9];
        let d_out = [0.7, -1.3];
        let mut ws = Workspace::default();
        let out = mlp.forward(&p, &x, &mut ws).to_vec();
        let mut g = vec![0.0; p.len()];
        mlp.backward(&p, &mut ws, &d_out, &mut g);

        let tg = super::super::autodiff::gradient(&p, |t, vars| {
            let o = mlp.forward_tape(t, vars, &x);
            o[0] * d_out[0] + o[1] * d_out[1]
        })
        .unwrap();
        for (a, b) in g.iter().zip(&tg) {
            assert!((a - b).abs() < 1e-12);
        }

        let v: Vec<f64> = (0..p.len()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let (o2, dout) = mlp.jvp(&p, &x, &v);
        assert_eq!(o2, out);
        let dir: f64 = d_out.iter().zip(&dout).map(|(a, b)| a * b).sum();
        let via_grad: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((dir - via_grad).abs() < 1e-10);
    }
}
