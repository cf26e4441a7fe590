//! Policy and value function approximators.

pub mod autodiff;
mod dist;
pub mod mlp;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

pub use autodiff::{gradient, value_and_gradient, Tape, Var};
pub use dist::ActionDistribution;
pub use mlp::{Mlp, Workspace};

use crate::env::ActionSpace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Logits over `n` discrete actions.
    Categorical(usize),
    /// Mean of a `d`-dimensional diagonal Gaussian with a learnable,
    /// state-independent log-std.
    Gaussian(usize),
}

impl Head {
    pub fn for_space(space: ActionSpace) -> Self {
        match space {
            ActionSpace::Discrete(n) => Head::Categorical(n),
            ActionSpace::Continuous(d) => Head::Gaussian(d),
        }
    }

    fn outputs(self) -> usize {
        match self {
            Head::Categorical(n) | Head::Gaussian(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyArch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
}

impl PolicyArch {
    pub fn new(input: usize, hidden: Vec<usize>, head: Head) -> Self {
        Self {
            input,
            hidden,
            head,
        }
    }

    pub fn mlp(&self) -> Mlp {
        let mut sizes = vec![self.input];
        sizes.extend(&self.hidden);
        sizes.push(self.head.outputs());
        Mlp::new(sizes)
    }

    pub fn num_params(&self) -> usize {
        let extra = match self.head {
            Head::Categorical(_) => 0,
            Head::Gaussian(d) => d,
        };
        self.mlp().num_params() + extra
    }
}

/// Maps an observation to an action distribution.
pub trait Policy {
    /// `ws` is scratch space the implementation may use.
    fn distribution(&self, obs: &[f64], ws: &mut Workspace) -> ActionDistribution;
}

impl Policy for PolicyParams {
    fn distribution(&self, obs: &[f64], ws: &mut Workspace) -> ActionDistribution {
        self.eval(obs, ws)
    }
}

/// A policy: architecture plus flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    arch: PolicyArch,
    mlp: Mlp,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(arch: PolicyArch) -> Self {
        let mlp = arch.mlp();
        let theta = vec![0.0; arch.num_params()];
        Self { arch, mlp, theta }
    }

    pub fn init<R: Rng>(arch: PolicyArch, rng: &mut R) -> Self {
        let mlp = arch.mlp();
        let mut theta = mlp.init(rng, 0.01);
        if let Head::Gaussian(d) = arch.head {
            theta.extend(std::iter::repeat(0.0).take(d));
        }
        Self { arch, mlp, theta }
    }

    pub fn from_theta(arch: PolicyArch, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != arch.num_params() {
            return Err(Error::DimensionMismatch {
                expected: arch.num_params(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        let mlp = arch.mlp();
        Ok(Self { arch, mlp, theta })
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        debug_assert_eq!(theta.len(), self.theta.len());
        Self {
            arch: self.arch.clone(),
            mlp: self.mlp.clone(),
            theta,
        }
    }

    pub fn arch(&self) -> &PolicyArch {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn net_len(&self) -> usize {
        self.mlp.num_params()
    }

    /// Action distribution for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<ActionDistribution> {
        if obs.len() != self.arch.input {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input,
                got: obs.len(),
            });
        }
        Ok(self.eval(obs, &mut Workspace::default()))
    }

    /// Unchecked forward pass that keeps activations in `ws` for
    /// [`PolicyParams::backprop`].
    pub fn eval(&self, obs: &[f64], ws: &mut Workspace) -> ActionDistribution {
        let n = self.net_len();
        let out = self.mlp.forward(&self.theta[..n], obs, ws).to_vec();
        match self.arch.head {
            Head::Categorical(_) => ActionDistribution::Categorical { logits: out },
            Head::Gaussian(_) => ActionDistribution::Gaussian {
                mean: out,
                log_std: self.theta[n..].to_vec(),
            },
        }
    }

    /// Accumulates `d_head · ∂head/∂θ` into `grad` for the observation last
    /// passed to [`PolicyParams::eval`] with the same workspace.
    pub fn backprop(&self, ws: &mut Workspace, d_head: &[f64], grad: &mut [f64]) {
        let n = self.net_len();
        let k = self.arch.head.outputs();
        self.mlp
            .backward(&self.theta[..n], ws, &d_head[..k], &mut grad[..n]);
        if let Head::Gaussian(d) = self.arch.head {
            for i in 0..d {
                grad[n + i] += d_head[k + i];
            }
        }
    }

    /// Head outputs and their directional derivative along `v`.
    pub fn head_jvp(&self, obs: &[f64], v: &[f64]) -> (ActionDistribution, Vec<f64>) {
        let mut ws = Workspace::default();
        let mut d = Vec::new();
        let dist = self.head_jvp_into(obs, v, &mut ws, &mut d);
        (dist, d)
    }

    /// As [`PolicyParams::head_jvp`], leaving `ws` ready for
    /// [`PolicyParams::backprop`] at `obs`.
    pub fn head_jvp_into(
        &self,
        obs: &[f64],
        v: &[f64],
        ws: &mut Workspace,
        d_head: &mut Vec<f64>,
    ) -> ActionDistribution {
        let n = self.net_len();
        self.mlp.jvp_into(&self.theta[..n], obs, &v[..n], ws, d_head);
        let out = ws.output().to_vec();
        match self.arch.head {
            Head::Categorical(_) => ActionDistribution::Categorical { logits: out },
            Head::Gaussian(_) => {
                d_head.extend_from_slice(&v[n..]);
                ActionDistribution::Gaussian {
                    mean: out,
                    log_std: self.theta[n..].to_vec(),
                }
            }
        }
    }

    /// Head outputs built on a tape: logits, or mean followed by log-std.
    pub fn head_tape<'t>(&self, tape: &'t Tape, theta: &[Var<'t>], obs: &[f64]) -> Vec<Var<'t>> {
        let n = self.net_len();
        let mut out = self.mlp.forward_tape(tape, &theta[..n], obs);
        if let Head::Gaussian(_) = self.arch.head {
            out.extend_from_slice(&theta[n..]);
        }
        out
    }

    pub fn to_checkpoint(&self) -> String {
        let head = match self.arch.head {
            Head::Categorical(n) => format!("categorical {n}"),
            Head::Gaussian(d) => format!("gaussian {d}"),
        };
        write_checkpoint("policy", self.arch.input, &self.arch.hidden, &head, &self.theta)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck = read_checkpoint(text, "policy")?;
        let head = match ck.head.as_slice() {
            [kind, n] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad head size `{n}`")))?;
                match kind.as_str() {
                    "categorical" => Head::Categorical(n),
                    "gaussian" => Head::Gaussian(n),
                    other => return Err(Error::Checkpoint(format!("unknown head `{other}`"))),
                }
            }
            _ => return Err(Error::Checkpoint("malformed head line".into())),
        };
        Self::from_theta(PolicyArch::new(ck.input, ck.hidden, head), ck.theta)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// State-value approximator.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParams {
    mlp: Mlp,
    pub theta: Vec<f64>,
}

impl ValueParams {
    pub fn init<R: Rng>(input: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![input];
        sizes.extend(hidden);
        sizes.push(1);
        let mlp = Mlp::new(sizes);
        let theta = mlp.init(rng, 1.0);
        Self { mlp, theta }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn eval(&self, obs: &[f64], ws: &mut Workspace) -> f64 {
        self.mlp.forward(&self.theta, obs, ws)[0]
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.eval(obs, &mut Workspace::default())
    }

    pub fn backprop(&self, ws: &mut Workspace, d_value: f64, grad: &mut [f64]) {
        self.mlp.backward(&self.theta, ws, &[d_value], grad);
    }

    pub fn to_checkpoint(&self) -> String {
        let sizes = self.mlp.sizes();
        write_checkpoint(
            "value",
            sizes[0],
            &sizes[1..sizes.len() - 1],
            "value 1",
            &self.theta,
        )
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck = read_checkpoint(text, "value")?;
        let mut sizes = vec![ck.input];
        sizes.extend(&ck.hidden);
        sizes.push(1);
        let mlp = Mlp::new(sizes);
        if ck.theta.len() != mlp.num_params() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                mlp.num_params(),
                ck.theta.len()
            )));
        }
        Ok(Self {
            mlp,
            theta: ck.theta,
        })
    }
}

fn write_checkpoint(kind: &str, input: usize, hidden: &[usize], head: &str, theta: &[f64]) -> String {
    let mut out = String::new();
    let hidden: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
    let _ = writeln!(out, "kind {kind}");
    let _ = writeln!(out, "input {input}");
    let _ = writeln!(out, "hidden {}", if hidden.is_empty() { "-".into() } else { hidden.join(",") });
    let _ = writeln!(out, "activation tanh");
    let _ = writeln!(out, "head {head}");
    let _ = writeln!(out, "params {}", theta.len());
    for v in theta {
        // `{:e}` is the shortest representation that parses back exactly.
        let _ = writeln!(out, "{v:e}");
    }
    out
}

struct RawCheckpoint {
    input: usize,
    hidden: Vec<usize>,
    head: Vec<String>,
    theta: Vec<f64>,
}

fn read_checkpoint(text: &str, expected_kind: &str) -> Result<RawCheckpoint> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut header = |name: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Checkpoint(format!("missing `{name}` line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(Error::Checkpoint(format!("expected `{name}`, found `{line}`")));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let kind = header("kind")?;
    if kind.first().map(String::as_str) != Some(expected_kind) {
        return Err(Error::Checkpoint(format!(
            "expected a {expected_kind} checkpoint, found {kind:?}"
        )));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Checkpoint(format!("bad integer `{s}`")))
    };
    let input = parse_usize(header("input")?.first().map_or("", String::as_str))?;
    let hidden_field = header("hidden")?;
    let hidden = match hidden_field.first().map(String::as_str) {
        None | Some("-") => Vec::new(),
        Some(h) => h.split(',').map(parse_usize).collect::<Result<Vec<_>>>()?,
    };
    let activation = header("activation")?;
    if activation.first().map(String::as_str) != Some("tanh") {
        return Err(Error::Checkpoint(format!("unsupported activation {activation:?}")));
    }
    let head = header("head")?;
    let n = parse_usize(header("params")?.first().map_or("", String::as_str))?;
    let theta = lines
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("bad parameter `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if theta.len() != n {
        return Err(Error::Checkpoint(format!(
            "header declares {n} parameters, found {}",
            theta.len()
        )));
    }
    Ok(RawCheckpoint {
        input,
        hidden,
        head,
        theta,
    })
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Action;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs() {
        let p = PolicyParams::zeros(PolicyArch::new(2, vec![8, 8], Head::Categorical(4)));
        let d = p.forward(&[0.3, -0.2]).unwrap();
        let probs = d.probs().unwrap();
        assert!(probs.iter().all(|q| (q - 0.25).abs() < 1e-15));
        let g = PolicyParams::zeros(PolicyArch::new(2, vec![8], Head::Gaussian(2)));
        let ActionDistribution::Gaussian { mean, log_std } = g.forward(&[1.0, 1.0]).unwrap() else {
            unreachable!()
        };
        assert_eq!(mean, vec![0.0, 0.0]);
        assert_eq!(log_std, vec![0.0, 0.0]);
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = PolicyParams::init(PolicyArch::new(2, vec![16, 16], Head::Categorical(4)), &mut rng);
        assert_eq!(p.forward(&[0.1, 0.7]).unwrap(), p.forward(&[0.1, 0.7]).unwrap());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for head in [Head::Categorical(4), Head::Gaussian(2)] {
            let mut p = PolicyParams::init(PolicyArch::new(2, vec![5, 3], head), &mut rng);
            p.theta.iter_mut().for_each(|v| *v += 1e-17 + *v / 3.0);
            let back = PolicyParams::from_checkpoint(&p.to_checkpoint()).unwrap();
            assert_eq!(back, p);
        }
        let v = ValueParams::init(2, &[4], &mut rng);
        assert_eq!(ValueParams::from_checkpoint(&v.to_checkpoint()).unwrap(), v);
        assert!(PolicyParams::from_checkpoint(&v.to_checkpoint()).is_err());
        assert!(PolicyParams::from_checkpoint("kind policy\ninput 2\n").is_err());
    }

    #[test]
    fn backprop_matches_finite_differences_for_log_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (head, action) in [
            (Head::Categorical(3), Action::Discrete(1)),
            (Head::Gaussian(2), Action::Continuous(vec![0.4, -0.3])),
        ] {
            let p = PolicyParams::init(PolicyArch::new(2, vec![4, 4], head), &mut rng);
            let p = p.with_theta(p.theta.iter().map(|v| v * 30.0).collect());
            let obs = [0.3, -0.8];
            let mut ws = Workspace::default();
            let d = p.eval(&obs, &mut ws);
            let dh = d.d_log_prob(&action).unwrap();
            let mut g = vec![0.0; p.len()];
            p.backprop(&mut ws, &dh, &mut g);
            let h = 1e-6;
            for i in 0..p.len() {
                let mut tp = p.theta.clone();
                tp[i] += h;
                let mut tm = p.theta.clone();
                tm[i] -= h;
                let fp = p.with_theta(tp).forward(&obs).unwrap().log_prob(&action).unwrap();
                let fm = p.with_theta(tm).forward(&obs).unwrap().log_prob(&action).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert!((g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}");
            }
        }
    }
}
