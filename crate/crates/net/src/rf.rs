//! Receptive-field calculus and its empirical measurement.

use crate::model::{NetConfig, Network};
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceptiveField {
    pub total: usize,
    /// Contribution of each branch; branch 0 includes the centre pixel.
    pub per_branch: Vec<usize>,
}

/// `RF_b = d_b (k_s − 1) 2^b`, plus one for the centre pixel on branch 0.
pub fn branch_rf(branch: usize, depth: usize, kernel: usize) -> usize {
    let r = depth * (kernel - 1) << branch;
    if branch == 0 {
        r + 1
    } else {
        r
    }
}

pub fn receptive_field(config: &NetConfig) -> ReceptiveField {
    let per_branch: Vec<usize> = config
        .depths
        .iter()
        .enumerate()
        .map(|(b, d)| branch_rf(b, *d, config.kernel))
        .collect();
    ReceptiveField {
        total: per_branch.iter().sum(),
        per_branch,
    }
}

/// Footprint of a single convolution run at branch `b`, measured in input
/// pixels: the `2^b` block of one coarse pixel grown by `d(k_s − 1)2^b`.
pub fn layer_footprint(branch: usize, depth: usize, kernel: usize) -> usize {
    (1 << branch) + (depth * (kernel - 1) << branch)
}

/// `(2 n_p, max{b : ⌊n_p / 2^b⌋ > k_s} + 1)`.
pub fn optimal_params(n_p: usize, kernel: usize) -> Option<(usize, usize)> {
    if n_p <= kernel {
        return None;
    }
    let mut b = 0;
    while (n_p >> (b + 1)) > kernel {
        b += 1;
    }
    Some((2 * n_p, b + 1))
}

/// Receptive field left after discarding branches whose pooled image is
/// no larger than the kernel (they cannot propagate information spatially).
pub fn effective_rf(nominal: usize, config: &NetConfig, n_p: usize) -> usize {
    let rf = receptive_field(config);
    let lost: usize = rf
        .per_branch
        .iter()
        .enumerate()
        .filter(|(b, _)| (n_p >> b) <= config.kernel)
        .map(|(_, r)| *r)
        .sum();
    nominal.saturating_sub(lost)
}

/// Side of the input region reached by a unit gradient seeded at the output
/// centre of the probe network.
pub fn empirical_rf(network: &Network, height: usize, width: usize) -> Result<usize> {
    let probe = if network.linear {
        network.clone()
    } else {
        network.probe()
    };
    let x = Tensor::zeros([1, 1, height, width]);
    let tape = probe.forward(&x)?;
    let mut g = Tensor::zeros(tape.output().shape);
    let c = g.idx(0, 0, height / 2, width / 2);
    g.data[c] = 1.0;
    let mut grads = vec![0.0; probe.n_params()];
    let gx = probe
        .backward(&tape, &g, &mut grads, true)?
        .expect("input gradient requested");
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for y in 0..height {
        for x in 0..width {
            if gx.at(0, 0, y, x) != 0.0 {
                y0 = y0.min(y);
                y1 = y1.max(y);
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
        }
    }
    if y0 == usize::MAX {
        return Ok(0);
    }
    Ok((y1 - y0 + 1).max(x1 - x0 + 1))
}
