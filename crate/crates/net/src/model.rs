//! UNet / MSNet graphs with a forward tape and reverse-mode backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layers::{
    concat_backward, concat_forward, conv2d_backward, conv2d_forward, downsample2_backward,
    downsample2_forward, relu_backward, relu_forward, upsample_backward, upsample_forward,
};
use crate::tensor::Tensor;
use crate::{NetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    UNet,
    MSNet,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::UNet => "unet",
            Architecture::MSNet => "msnet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unet" => Ok(Architecture::UNet),
            "msnet" => Ok(Architecture::MSNet),
            other => Err(NetError::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub architecture: Architecture,
    /// Number of branches (scales).
    pub n_b: usize,
    /// Convolutions per branch, finest first.
    pub depths: Vec<usize>,
    pub kernel: usize,
    /// Relative channel width of each branch.
    pub width_ratios: Vec<f64>,
    /// Target parameter count; widths are scaled to meet it.
    pub budget: Option<usize>,
    /// Width of a ratio-1 branch when no budget is given.
    pub base_width: usize,
    pub bias: bool,
}

impl NetConfig {
    pub fn new(architecture: Architecture, depths: Vec<usize>, kernel: usize) -> Self {
        let n_b = depths.len();
        Self {
            architecture,
            n_b,
            depths,
            kernel,
            width_ratios: vec![1.0; n_b],
            budget: None,
            base_width: 16,
            bias: false,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 || self.depths.len() != self.n_b {
            return Err(NetError::Config(format!(
                "n_b = {} but {} depths given",
                self.n_b,
                self.depths.len()
            )));
        }
        if self.depths.iter().any(|d| *d == 0) {
            return Err(NetError::Config("every branch needs at least one convolution".into()));
        }
        if self.kernel < 3 || self.kernel % 2 == 0 {
            return Err(NetError::Config(format!("kernel size must be odd and >= 3, got {}", self.kernel)));
        }
        if self.width_ratios.len() != self.n_b || self.width_ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(NetError::Config("width ratios must be positive, one per branch".into()));
        }
        if self.budget.is_none() && self.base_width == 0 {
            return Err(NetError::Config("base width must be positive".into()));
        }
        Ok(())
    }

    /// Total convolution count along the longest path.
    pub fn global_depth(&self) -> usize {
        self.depths.iter().sum()
    }

    pub fn widths_for(&self, base: f64) -> Vec<usize> {
        self.width_ratios
            .iter()
            .map(|r| ((base * r).round() as usize).max(1))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Input,
    Conv { layer: usize, relu: bool },
    Down,
    /// Second input supplies the target spatial size only.
    Up,
    Concat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub op: Op,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub w_offset: usize,
    pub b_offset: Option<usize>,
    /// Level (branch) the layer runs at.
    pub branch: usize,
}

impl ConvLayer {
    fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Plan {
    nodes: Vec<Node>,
    convs: Vec<ConvLayer>,
    n_params: usize,
}

struct Builder {
    plan: Plan,
    k: usize,
    bias: bool,
}

impl Builder {
    fn push(&mut self, op: Op, inputs: Vec<usize>) -> usize {
        self.plan.nodes.push(Node { op, inputs });
        self.plan.nodes.len() - 1
    }

    fn conv(&mut self, from: usize, cin: usize, cout: usize, relu: bool, branch: usize) -> usize {
        let w_offset = self.plan.n_params;
        let mut layer = ConvLayer {
            cin,
            cout,
            k: self.k,
            w_offset,
            b_offset: None,
            branch,
        };
        self.plan.n_params += layer.weight_len();
        if self.bias {
            layer.b_offset = Some(self.plan.n_params);
            self.plan.n_params += cout;
        }
        self.plan.convs.push(layer);
        let id = self.plan.convs.len() - 1;
        self.push(Op::Conv { layer: id, relu }, vec![from])
    }
}

fn plan(config: &NetConfig, widths: &[usize]) -> Plan {
    let mut b = Builder {
        plan: Plan {
            nodes: Vec::new(),
            convs: Vec::new(),
            n_params: 0,
        },
        k: config.kernel,
        bias: config.bias,
    };
    let input = b.push(Op::Input, vec![]);
    let last = config.n_b - 1;
    let d = &config.depths;
    match config.architecture {
        Architecture::UNet => {
            let mut cur = input;
            let mut ch = 1;
            let mut skips = Vec::new();
            for br in 0..last {
                for _ in 0..d[br] / 2 {
                    cur = b.conv(cur, ch, widths[br], true, br);
                    ch = widths[br];
                }
                skips.push((cur, ch));
                cur = b.push(Op::Down, vec![cur]);
            }
            for c in 0..d[last] {
                let output = last == 0 && c + 1 == d[last];
                let cout = if output { 1 } else { widths[last] };
                cur = b.conv(cur, ch, cout, !output, last);
                ch = cout;
            }
            for br in (0..last).rev() {
                let (skip, sch) = skips[br];
                let up = b.push(Op::Up, vec![cur, skip]);
                cur = b.push(Op::Concat, vec![up, skip]);
                ch += sch;
                let dec = d[br] - d[br] / 2;
                for c in 0..dec {
                    let output = br == 0 && c + 1 == dec;
                    let cout = if output { 1 } else { widths[br] };
                    cur = b.conv(cur, ch, cout, !output, br);
                    ch = cout;
                }
            }
        }
        Architecture::MSNet => {
            let mut scales = vec![input];
            for _ in 0..last {
                let prev = *scales.last().unwrap();
                scales.push(b.push(Op::Down, vec![prev]));
            }
            let mut prev: Option<usize> = None;
            for br in (0..=last).rev() {
                let (mut cur, mut ch) = match prev {
                    None => (scales[br], 1),
                    Some(p) => {
                        let up = b.push(Op::Up, vec![p, scales[br]]);
                        (b.push(Op::Concat, vec![up, scales[br]]), 2)
                    }
                };
                for c in 0..d[br] {
                    let output = c + 1 == d[br];
                    let cout = if output { 1 } else { widths[br] };
                    cur = b.conv(cur, ch, cout, !output, br);
                    ch = cout;
                }
                prev = Some(cur);
            }
        }
    }
    b.plan
}

/// Parameter count of a configuration at explicit branch widths.
pub fn count_params(config: &NetConfig, widths: &[usize]) -> usize {
    plan(config, widths).n_params
}

/// Branch widths whose parameter count is closest to the budget (or the
/// base-width widths when no budget is set).
pub fn resolve_widths(config: &NetConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let Some(budget) = config.budget else {
        return Ok(config.widths_for(config.base_width as f64));
    };
    let mut best = (usize::MAX, config.widths_for(1.0));
    let mut base = 1.0;
    while base <= 2048.0 {
        let widths = config.widths_for(base);
        let n = count_params(config, &widths);
        let gap = n.abs_diff(budget);
        if gap < best.0 {
            best = (gap, widths);
        }
        if n > budget {
            break;
        }
        base += 0.25;
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetConfig,
    pub widths: Vec<usize>,
    pub nodes: Vec<Node>,
    pub convs: Vec<ConvLayer>,
    pub params: Vec<f64>,
    /// Identity activations (receptive-field probing).
    pub linear: bool,
}

/// Forward activations of every node, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub values: Vec<Tensor>,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.values.last().expect("tape is never empty")
    }
}

impl Network {
    /// Build with budget-matched widths and fan-in scaled uniform weights.
    pub fn build(config: &NetConfig, seed: u64) -> Result<Self> {
        let widths = resolve_widths(config)?;
        Self::with_widths(config, widths, seed)
    }

    pub fn with_widths(config: &NetConfig, widths: Vec<usize>, seed: u64) -> Result<Self> {
        config.validate()?;
        if widths.len() != config.n_b || widths.iter().any(|w| *w == 0) {
            return Err(NetError::Config("one positive width per branch required".into()));
        }
        let p = plan(config, &widths);
        let mut params = vec![0.0; p.n_params];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let relu_of: Vec<bool> = {
            let mut v = vec![false; p.convs.len()];
            for n in &p.nodes {
                if let Op::Conv { layer, relu } = n.op {
                    v[layer] = relu;
                }
            }
            v
        };
        for (l, c) in p.convs.iter().enumerate() {
            let fan_in = (c.cin * c.k * c.k) as f64;
            let gain = if relu_of[l] { 6.0 } else { 3.0 };
            let lim = (gain / fan_in).sqrt();
            for w in &mut params[c.w_offset..c.w_offset + c.weight_len()] {
                *w = rng.gen_range(-lim..lim);
            }
        }
        Ok(Self {
            config: config.clone(),
            widths,
            nodes: p.nodes,
            convs: p.convs,
            params,
            linear: false,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Smallest (pooled) image side at the coarsest branch for an input side.
    pub fn coarsest_size(&self, n_p: usize) -> usize {
        n_p >> (self.config.n_b - 1)
    }

    /// Set when the coarsest branch image is no larger than the kernel.
    pub fn degenerate_branch_warning(&self, nx: usize, ny: usize) -> Option<String> {
        let n_p = nx.min(ny);
        let s = self.coarsest_size(n_p);
        (s <= self.config.kernel).then(|| {
            format!(
                "coarsest branch image is {s} pixels for n_p = {n_p}, not larger than k_s = {}",
                self.config.kernel
            )
        })
    }

    /// Copy with identity activations and positive weights.
    pub fn probe(&self) -> Self {
        let mut p = self.clone();
        p.linear = true;
        for c in &p.convs {
            let v = 1.0 / (c.cin * c.k * c.k) as f64;
            p.params[c.w_offset..c.w_offset + c.weight_len()].fill(v);
            if let Some(b) = c.b_offset {
                p.params[b..b + c.cout].fill(0.0);
            }
        }
        p
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != 1 {
            return Err(NetError::Shape(format!("network input must have 1 channel, got {}", x.channels())));
        }
        let min = 1usize << (self.config.n_b - 1);
        if x.height() < min || x.width() < min {
            return Err(NetError::Shape(format!(
                "{}x{} input is too small for {} branches",
                x.height(),
                x.width(),
                self.config.n_b
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tape> {
        self.check_input(x)?;
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Input => x.clone(),
                Op::Conv { layer, relu } => {
                    let c = &self.convs[layer];
                    let w = &self.params[c.w_offset..c.w_offset + c.weight_len()];
                    let b = c.b_offset.map(|o| &self.params[o..o + c.cout]);
                    let y = conv2d_forward(&values[node.inputs[0]], w, b, c.cout, c.k)?;
                    if relu && !self.linear {
                        relu_forward(&y)
                    } else {
                        y
                    }
                }
                Op::Down => downsample2_forward(&values[node.inputs[0]])?,
                Op::Up => {
                    let like = &values[node.inputs[1]];
                    upsample_forward(&values[node.inputs[0]], (like.height(), like.width()))
                }
                Op::Concat => {
                    let parts: Vec<&Tensor> = node.inputs.iter().map(|i| &values[*i]).collect();
                    concat_forward(&parts)?
                }
            };
            values.push(v);
        }
        Ok(Tape { values })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.values.pop().expect("non-empty tape"))
    }

    /// Accumulates parameter gradients into `grads`; returns the input
    /// gradient when requested.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_out: &Tensor,
        grads: &mut [f64],
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        if grads.len() != self.params.len() {
            return Err(NetError::Shape("gradient buffer length differs from parameter count".into()));
        }
        if grad_out.shape != tape.output().shape {
            return Err(NetError::Shape("output gradient shape differs from the output".into()));
        }
        let n = self.nodes.len();
        let mut g: Vec<Option<Tensor>> = vec![None; n];
        g[n - 1] = Some(grad_out.clone());
        let acc = |g: &mut Vec<Option<Tensor>>, i: usize, t: Tensor| match &mut g[i] {
            Some(e) => e.add_assign(&t),
            slot => *slot = Some(t),
        };
        for id in (0..n).rev() {
            let Some(gi) = g[id].take() else { continue };
            let node = &self.nodes[id];
            match node.op {
                Op::Input => {
                    g[id] = Some(gi);
                }
                Op::Conv { layer, relu } => {
                    let gi = if relu && !self.linear {
                        relu_backward(&tape.values[id], &gi)
                    } else {
                        gi
                    };
                    let c = self.convs[layer];
                    let src = node.inputs[0];
                    let w = &self.params[c.w_offset..c.w_offset + c.weight_len()];
                    let (gw, gb) = split_grads(grads, &c);
                    let need = want_input || src != 0;
                    if let Some(t) = conv2d_backward(&tape.values[src], w, c.cout, c.k, &gi, gw, gb, need)? {
                        acc(&mut g, src, t);
                    }
                }
                Op::Down => {
                    let src = node.inputs[0];
                    acc(&mut g, src, downsample2_backward(tape.values[src].shape, &gi));
                }
                Op::Up => {
                    let src = node.inputs[0];
                    acc(&mut g, src, upsample_backward(tape.values[src].shape, &gi));
                }
                Op::Concat => {
                    let shapes: Vec<[usize; 4]> = node.inputs.iter().map(|i| tape.values[*i].shape).collect();
                    for (src, t) in node.inputs.iter().zip(concat_backward(&shapes, &gi)) {
                        acc(&mut g, *src, t);
                    }
                }
            }
        }
        Ok(if want_input { g[0].take() } else { None })
    }
}

fn split_grads<'a>(grads: &'a mut [f64], c: &ConvLayer) -> (&'a mut [f64], Option<&'a mut [f64]>) {
    let wl = c.weight_len();
    match c.b_offset {
        None => (&mut grads[c.w_offset..c.w_offset + wl], None),
        Some(b) => {
            debug_assert_eq!(b, c.w_offset + wl);
            let (w, rest) = grads[c.w_offset..b + c.cout].split_at_mut(wl);
            (w, Some(rest))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::new(Architecture::UNet, vec![2, 2], 3).validate().is_ok());
        assert!(NetConfig::new(Architecture::UNet, vec![2, 0], 3).validate().is_err());
        assert!(NetConfig::new(Architecture::UNet, vec![2, 2], 4).validate().is_err());
        let mut c = NetConfig::new(Architecture::MSNet, vec![2, 2], 3);
        c.n_b = 3;
        assert!(c.validate().is_err());
        assert_eq!(NetConfig::new(Architecture::UNet, vec![2, 3, 4], 3).global_depth(), 9);
        assert_eq!(Architecture::parse("MSNet").unwrap(), Architecture::MSNet);
    }

    #[test]
    fn output_shape_matches_input_for_odd_sizes() {
        for arch in [Architecture::UNet, Architecture::MSNet] {
            let mut cfg = NetConfig::new(arch, vec![2, 1, 3], 3);
            cfg.base_width = 3;
            let net = Network::build(&cfg, 1).unwrap();
            let x = random_input([2, 1, 21, 17], 2);
            let y = net.predict(&x).unwrap();
            assert_eq!(y.shape, [2, 1, 21, 17]);
            assert!(y.is_finite());
        }
    }

    #[test]
    fn budget_is_matched_within_twenty_percent() {
        for arch in [Architecture::UNet, Architecture::MSNet] {
            for depths in [vec![2, 2, 2], vec![3, 3, 3, 3], vec![2, 2, 2, 2, 4]] {
                for budget in [20_000, 100_000] {
                    let cfg = NetConfig::new(arch, depths.clone(), 3).with_budget(budget);
                    let net = Network::build(&cfg, 0).unwrap();
                    let rel = (net.n_params() as f64 - budget as f64).abs() / budget as f64;
                    assert!(rel < 0.2, "{arch:?} {depths:?} {budget}: {}", net.n_params());
                }
            }
        }
    }

    #[test]
    fn degenerate_branch_flag() {
        let net = Network::build(&NetConfig::new(Architecture::UNet, vec![1; 6], 3), 0).unwrap();
        assert!(net.degenerate_branch_warning(101, 101).is_some());
        let net = Network::build(&NetConfig::new(Architecture::UNet, vec![1; 5], 3), 0).unwrap();
        assert!(net.degenerate_branch_warning(101, 101).is_none());
    }

    #[test]
    fn probe_network_is_linear() {
        let net = Network::build(&NetConfig::new(Architecture::UNet, vec![2, 2, 2], 3), 3)
            .unwrap()
            .probe();
        let x = random_input([1, 1, 16, 16], 4);
        let y1 = net.predict(&x).unwrap();
        let mut x2 = x.clone();
        x2.data.iter_mut().for_each(|v| *v *= 3.0);
        let y2 = net.predict(&x2).unwrap();
        for (a, b) in y1.data.iter().zip(&y2.data) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_free_relu_network_is_positively_homogeneous() {
        let net = Network::build(&NetConfig::new(Architecture::UNet, vec![2, 2, 2], 3), 5).unwrap();
        let x = random_input([1, 1, 16, 16], 6);
        let y1 = net.predict(&x).unwrap();
        let mut x2 = x.clone();
        x2.data.iter_mut().for_each(|v| *v *= 1e-5);
        let y2 = net.predict(&x2).unwrap();
        for (a, b) in y1.data.iter().zip(&y2.data) {
            assert!((1e-5 * a - b).abs() < 1e-12 * a.abs().max(1e-3));
        }
    }

    /// Scalar `Σ g ⊙ net(x)` differentiated by hand and by central differences.
    fn network_fd(arch: Architecture, bias: bool) -> f64 {
        let mut cfg = NetConfig::new(arch, vec![2, 1, 2], 3);
        cfg.base_width = 2;
        cfg.bias = bias;
        let mut net = Network::build(&cfg, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        if bias {
            for c in net.convs.clone() {
                if let Some(b) = c.b_offset {
                    for v in &mut net.params[b..b + c.cout] {
                        *v = rng.gen_range(-0.5..0.5);
                    }
                }
            }
        }
        let x = random_input([1, 1, 9, 10], 11);
        let tape = net.forward(&x).unwrap();
        let g = random_input(tape.output().shape, 12);
        let mut grads = vec![0.0; net.n_params()];
        let gx = net.backward(&tape, &g, &mut grads, true).unwrap().unwrap();
        let f = |n: &Network, x: &Tensor| -> f64 {
            n.predict(x).unwrap().data.iter().zip(&g.data).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        let rel = |fd: f64, a: f64| (fd - a).abs() / fd.abs().max(a.abs()).max(1e-3);
        for i in (0..net.n_params()).step_by(3) {
            let mut p = net.clone();
            p.params[i] += eps;
            let mut m = net.clone();
            m.params[i] -= eps;
            worst = worst.max(rel((f(&p, &x) - f(&m, &x)) / (2.0 * eps), grads[i]));
        }
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data[i] += eps;
            let mut m = x.clone();
            m.data[i] -= eps;
            worst = worst.max(rel((f(&net, &p) - f(&net, &m)) / (2.0 * eps), gx.data[i]));
        }
        worst
    }

    #[test]
    fn unet_gradients_match_finite_differences() {
        assert!(network_fd(Architecture::UNet, false) < 1e-5);
        assert!(network_fd(Architecture::UNet, true) < 1e-5);
    }

    #[test]
    fn msnet_gradients_match_finite_differences() {
        assert!(network_fd(Architecture::MSNet, false) < 1e-5);
    }

    #[test]
    fn same_seed_same_weights() {
        let cfg = NetConfig::new(Architecture::MSNet, vec![2, 2], 3);
        assert_eq!(Network::build(&cfg, 4).unwrap(), Network::build(&cfg, 4).unwrap());
        assert_ne!(Network::build(&cfg, 4).unwrap().params, Network::build(&cfg, 5).unwrap().params);
    }
}
