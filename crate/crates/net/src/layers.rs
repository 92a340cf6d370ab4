//! Layer kernels with explicit backward passes.

use matrixmultiply::dgemm;

use crate::tensor::Tensor;
use crate::{NetError, Result};

fn im2col(src: &[f64], cin: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..cin {
        let plane = &src[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let shift = kx as isize - p as isize;
                    let (lo, hi) = if shift < 0 {
                        ((-shift) as usize, w)
                    } else {
                        (0, w - shift as usize)
                    };
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    for x in lo..hi {
                        out[x] = srow[(x as isize + shift) as usize];
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], cin: usize, h: usize, w: usize, k: usize, dst: &mut [f64]) {
    let p = k / 2;
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut dst[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let drow = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let shift = kx as isize - p as isize;
                    let (lo, hi) = if shift < 0 {
                        ((-shift) as usize, w)
                    } else {
                        (0, w - shift as usize)
                    };
                    let src = &row[y * w..(y + 1) * w];
                    for x in lo..hi {
                        drow[(x as isize + shift) as usize] += src[x];
                    }
                }
            }
        }
    }
}

/// Weights are `(cout, cin, k, k)` row-major; zero "same" padding.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &[f64],
    bias: Option<&[f64]>,
    cout: usize,
    k: usize,
) -> Result<Tensor> {
    let [n, cin, h, w] = input.shape;
    check_conv(cin, cout, k, weights.len(), bias.map(|b| b.len()))?;
    let hw = h * w;
    let kk = cin * k * k;
    let mut out = Tensor::zeros([n, cout, h, w]);
    let mut cols = vec![0.0; kk * hw];
    for s in 0..n {
        im2col(input.sample(s), cin, h, w, k, &mut cols);
        let o = out.sample_mut(s);
        if let Some(b) = bias {
            for (c, bc) in b.iter().enumerate() {
                o[c * hw..(c + 1) * hw].fill(*bc);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        // SAFETY: the slices cover m×k, k×n and m×n row-major matrices.
        unsafe {
            dgemm(
                cout, kk, hw, 1.0,
                weights.as_ptr(), kk as isize, 1,
                cols.as_ptr(), hw as isize, 1,
                beta, o.as_mut_ptr(), hw as isize, 1,
            );
        }
    }
    Ok(out)
}

/// Accumulates into `grad_w` (and `grad_b`); returns the input gradient when
/// `want_input` is set.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    input: &Tensor,
    weights: &[f64],
    cout: usize,
    k: usize,
    grad_out: &Tensor,
    grad_w: &mut [f64],
    grad_b: Option<&mut [f64]>,
    want_input: bool,
) -> Result<Option<Tensor>> {
    let [n, cin, h, w] = input.shape;
    check_conv(cin, cout, k, weights.len(), None)?;
    if grad_out.shape != [n, cout, h, w] || grad_w.len() != weights.len() {
        return Err(NetError::Shape("conv backward shapes disagree".into()));
    }
    let hw = h * w;
    let kk = cin * k * k;
    let mut cols = vec![0.0; kk * hw];
    let mut dcols = vec![0.0; kk * hw];
    let mut grad_in = want_input.then(|| Tensor::zeros(input.shape));
    let mut grad_b = grad_b;
    for s in 0..n {
        let go = grad_out.sample(s);
        if let Some(gb) = grad_b.as_deref_mut() {
            for (c, g) in gb.iter_mut().enumerate() {
                *g += go[c * hw..(c + 1) * hw].iter().sum::<f64>();
            }
        }
        im2col(input.sample(s), cin, h, w, k, &mut cols);
        // SAFETY: dW (cout×kk) += dOut (cout×hw) · colsᵀ (hw×kk).
        unsafe {
            dgemm(
                cout, hw, kk, 1.0,
                go.as_ptr(), hw as isize, 1,
                cols.as_ptr(), 1, hw as isize,
                1.0, grad_w.as_mut_ptr(), kk as isize, 1,
            );
        }
        if let Some(gi) = grad_in.as_mut() {
            // SAFETY: dcols (kk×hw) = Wᵀ (kk×cout) · dOut (cout×hw).
            unsafe {
                dgemm(
                    kk, cout, hw, 1.0,
                    weights.as_ptr(), 1, kk as isize,
                    go.as_ptr(), hw as isize, 1,
                    0.0, dcols.as_mut_ptr(), hw as isize, 1,
                );
            }
            col2im(&dcols, cin, h, w, k, gi.sample_mut(s));
        }
    }
    Ok(grad_in)
}

fn check_conv(cin: usize, cout: usize, k: usize, wlen: usize, blen: Option<usize>) -> Result<()> {
    if k % 2 == 0 || k == 0 {
        return Err(NetError::Config(format!("kernel size must be odd, got {k}")));
    }
    if wlen != cout * cin * k * k {
        return Err(NetError::Shape(format!(
            "conv expects {} weights for {cin}->{cout} k={k}, got {wlen}",
            cout * cin * k * k
        )));
    }
    if let Some(b) = blen {
        if b != cout {
            return Err(NetError::Shape(format!("bias length {b} != {cout}")));
        }
    }
    Ok(())
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape,
        data: input.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// Uses the forward output as the mask.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: output.shape,
        data: output
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(o, g)| if *o > 0.0 { *g } else { 0.0 })
            .collect(),
    }
}

/// 2×2 average pooling; an odd trailing row or column is dropped.
pub fn downsample2_forward(input: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape;
    if h < 2 || w < 2 {
        return Err(NetError::Shape(format!("cannot pool a {h}x{w} image")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, ho, wo]);
    for s in 0..n * c {
        let src = &input.data[s * h * w..(s + 1) * h * w];
        let dst = &mut out.data[s * ho * wo..(s + 1) * ho * wo];
        for y in 0..ho {
            for x in 0..wo {
                let a = (2 * y) * w + 2 * x;
                dst[y * wo + x] = 0.25 * (src[a] + src[a + 1] + src[a + w] + src[a + w + 1]);
            }
        }
    }
    Ok(out)
}

pub fn downsample2_backward(input_shape: [usize; 4], grad_out: &Tensor) -> Tensor {
    let [n, c, h, w] = input_shape;
    let (ho, wo) = (h / 2, w / 2);
    let mut g = Tensor::zeros(input_shape);
    for s in 0..n * c {
        let src = &grad_out.data[s * ho * wo..(s + 1) * ho * wo];
        let dst = &mut g.data[s * h * w..(s + 1) * h * w];
        for y in 0..ho {
            for x in 0..wo {
                let v = 0.25 * src[y * wo + x];
                let a = (2 * y) * w + 2 * x;
                dst[a] += v;
                dst[a + 1] += v;
                dst[a + w] += v;
                dst[a + w + 1] += v;
            }
        }
    }
    g
}

/// Interpolation stencil `(i0, i1, f)` for each of `n_out` fine pixels reading
/// a coarse axis of `n_in` pooled pixels. Coarse pixel `k` sits at fine
/// coordinate `2k + 1/2`, so ramps are reproduced exactly away from the
/// clamped edges whatever the parity of the fine size.
fn up_axis(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let s = ((i as f64 - 0.5) / 2.0).clamp(0.0, (n_in - 1) as f64);
            let i0 = (s.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear upsampling to an exact target size.
pub fn upsample_forward(input: &Tensor, target: (usize, usize)) -> Tensor {
    let [n, c, h, w] = input.shape;
    let (ho, wo) = target;
    let ay = up_axis(h, ho);
    let ax = up_axis(w, wo);
    let mut out = Tensor::zeros([n, c, ho, wo]);
    for s in 0..n * c {
        let src = &input.data[s * h * w..(s + 1) * h * w];
        let dst = &mut out.data[s * ho * wo..(s + 1) * ho * wo];
        for (y, &(y0, y1, fy)) in ay.iter().enumerate() {
            for (x, &(x0, x1, fx)) in ax.iter().enumerate() {
                let top = (1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
                let bot = (1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
                dst[y * wo + x] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    out
}

pub fn upsample_backward(input_shape: [usize; 4], grad_out: &Tensor) -> Tensor {
    let [n, c, h, w] = input_shape;
    let (ho, wo) = (grad_out.height(), grad_out.width());
    let ay = up_axis(h, ho);
    let ax = up_axis(w, wo);
    let mut g = Tensor::zeros(input_shape);
    for s in 0..n * c {
        let src = &grad_out.data[s * ho * wo..(s + 1) * ho * wo];
        let dst = &mut g.data[s * h * w..(s + 1) * h * w];
        for (y, &(y0, y1, fy)) in ay.iter().enumerate() {
            for (x, &(x0, x1, fx)) in ax.iter().enumerate() {
                let v = src[y * wo + x];
                // Zero weights are skipped so probe gradients keep an exact footprint.
                let mut add = |k: usize, wgt: f64| {
                    if wgt != 0.0 {
                        dst[k] += wgt * v;
                    }
                };
                add(y0 * w + x0, (1.0 - fy) * (1.0 - fx));
                add(y0 * w + x1, (1.0 - fy) * fx);
                add(y1 * w + x0, fy * (1.0 - fx));
                add(y1 * w + x1, fy * fx);
            }
        }
    }
    g
}

pub fn concat_forward(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| NetError::Shape("empty concat".into()))?;
    let [n, _, h, w] = first.shape;
    if parts.iter().any(|p| p.batch() != n || p.height() != h || p.width() != w) {
        return Err(NetError::Shape("concat inputs differ in batch or spatial size".into()));
    }
    let c: usize = parts.iter().map(|p| p.channels()).sum();
    let mut out = Tensor::zeros([n, c, h, w]);
    for s in 0..n {
        let dst = out.sample_mut(s);
        let mut off = 0;
        for p in parts {
            let src = p.sample(s);
            dst[off..off + src.len()].copy_from_slice(src);
            off += src.len();
        }
    }
    Ok(out)
}

pub fn concat_backward(shapes: &[[usize; 4]], grad_out: &Tensor) -> Vec<Tensor> {
    let mut grads: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(*s)).collect();
    for s in 0..grad_out.batch() {
        let src = grad_out.sample(s);
        let mut off = 0;
        for g in grads.iter_mut() {
            let dst = g.sample_mut(s);
            let len = dst.len();
            dst.copy_from_slice(&src[off..off + len]);
            off += len;
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct convolution oracle.
    fn conv_naive(t: &Tensor, wts: &[f64], bias: Option<&[f64]>, cout: usize, k: usize) -> Tensor {
        let [n, cin, h, w] = t.shape;
        let p = (k / 2) as isize;
        let mut out = Tensor::zeros([n, cout, h, w]);
        for s in 0..n {
            for co in 0..cout {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = bias.map_or(0.0, |b| b[co]);
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - p;
                                    let sx = x as isize + kx as isize - p;
                                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                        acc += wts[((co * cin + ci) * k + ky) * k + kx]
                                            * t.at(s, ci, sy as usize, sx as usize);
                                    }
                                }
                            }
                        }
                        let i = out.idx(s, co, y, x);
                        out.data[i] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [1, 3, 5] {
            let t = random([2, 3, 7, 6], &mut rng);
            let wts: Vec<f64> = (0..4 * 3 * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = conv2d_forward(&t, &wts, Some(&b), 4, k).unwrap();
            let slow = conv_naive(&t, &wts, Some(&b), 4, k);
            for (a, c) in fast.data.iter().zip(&slow.data) {
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kernel_and_impulse_footprint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random([1, 1, 5, 5], &mut rng);
        let mut id = vec![0.0; 9];
        id[4] = 1.0;
        assert_eq!(conv2d_forward(&t, &id, None, 1, 3).unwrap(), t);

        let mut imp = Tensor::zeros([1, 1, 7, 7]);
        imp.data[3 * 7 + 3] = 1.0;
        let out = conv2d_forward(&imp, &[1.0; 9], None, 1, 3).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let inside = (2..=4).contains(&y) && (2..=4).contains(&x);
                assert_eq!(out.at(0, 0, y, x), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn shape_errors() {
        let t = Tensor::zeros([1, 2, 4, 4]);
        assert!(conv2d_forward(&t, &[0.0; 9], None, 1, 3).is_err());
        assert!(conv2d_forward(&t, &[0.0; 8], None, 1, 2).is_err());
        assert!(downsample2_forward(&Tensor::zeros([1, 1, 1, 4])).is_err());
        assert!(Tensor::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn resampling_preserves_constants() {
        let t = Tensor::from_vec([1, 1, 9, 7], vec![2.5; 63]).unwrap();
        let d = downsample2_forward(&t).unwrap();
        assert_eq!(d.shape, [1, 1, 4, 3]);
        assert!(d.data.iter().all(|v| (*v - 2.5).abs() < 1e-15));
        let u = upsample_forward(&d, (9, 7));
        assert!(u.data.iter().all(|v| (*v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn odd_size_chain() {
        let mut sizes = vec![101usize];
        let mut t = Tensor::zeros([1, 1, 101, 101]);
        for _ in 0..4 {
            t = downsample2_forward(&t).unwrap();
            sizes.push(t.height());
        }
        assert_eq!(sizes, vec![101, 50, 25, 12, 6]);
    }

    #[test]
    fn ramp_survives_down_up_in_interior() {
        for n in [16usize, 17, 101] {
            let data: Vec<f64> = (0..n * n).map(|k| 0.3 * (k % n) as f64 - 1.7 * (k / n) as f64).collect();
            let t = Tensor::from_vec([1, 1, n, n], data).unwrap();
            let u = upsample_forward(&downsample2_forward(&t).unwrap(), (n, n));
            let m = n / 2;
            for y in 1..2 * m - 1 {
                for x in 1..2 * m - 1 {
                    assert!((u.at(0, 0, y, x) - t.at(0, 0, y, x)).abs() < 1e-12, "n={n} ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn concat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random([2, 1, 3, 3], &mut rng);
        let b = random([2, 2, 3, 3], &mut rng);
        let c = concat_forward(&[&a, &b]).unwrap();
        assert_eq!(c.shape, [2, 3, 3, 3]);
        assert_eq!(c.at(1, 2, 1, 1), b.at(1, 1, 1, 1));
        let parts = concat_backward(&[a.shape, b.shape], &c);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    /// `Σ g·f(x)` as the downstream scalar; compare analytic and central
    /// finite-difference gradients.
    fn fd_check(x: &Tensor, g: &Tensor, f: impl Fn(&Tensor) -> Tensor, analytic: &Tensor) -> f64 {
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        let dotg = |t: &Tensor| t.data.iter().zip(&g.data).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data[i] += eps;
            let mut m = x.clone();
            m.data[i] -= eps;
            let fd = (dotg(&f(&p)) - dotg(&f(&m))) / (2.0 * eps);
            let a = analytic.data[i];
            worst = worst.max((fd - a).abs() / (fd.abs().max(a.abs()).max(1e-3)));
        }
        worst
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random([1, 2, 8, 8], &mut rng);
        let wts: Vec<f64> = (0..3 * 2 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = conv2d_forward(&x, &wts, Some(&b), 3, 3).unwrap();
        let g = random(y.shape, &mut rng);
        let mut gw = vec![0.0; wts.len()];
        let mut gb = vec![0.0; 3];
        let gi = conv2d_backward(&x, &wts, 3, 3, &g, &mut gw, Some(&mut gb), true).unwrap().unwrap();
        assert!(fd_check(&x, &g, |t| conv2d_forward(t, &wts, Some(&b), 3, 3).unwrap(), &gi) < 1e-5);
        let wt = Tensor::from_vec([1, 1, 1, wts.len()], wts.clone()).unwrap();
        let gwt = Tensor::from_vec([1, 1, 1, wts.len()], gw).unwrap();
        assert!(fd_check(&wt, &g, |t| conv2d_forward(&x, &t.data, Some(&b), 3, 3).unwrap(), &gwt) < 1e-5);
        let bt = Tensor::from_vec([1, 1, 1, 3], b.clone()).unwrap();
        let gbt = Tensor::from_vec([1, 1, 1, 3], gb).unwrap();
        assert!(fd_check(&bt, &g, |t| conv2d_forward(&x, &wts, Some(&t.data), 3, 3).unwrap(), &gbt) < 1e-5);
    }

    #[test]
    fn resampling_and_relu_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random([2, 2, 9, 8], &mut rng);
        let d = downsample2_forward(&x).unwrap();
        let g = random(d.shape, &mut rng);
        let gi = downsample2_backward(x.shape, &g);
        assert!(fd_check(&x, &g, |t| downsample2_forward(t).unwrap(), &gi) < 1e-5);

        let s = random([1, 2, 4, 5], &mut rng);
        let u = upsample_forward(&s, (9, 11));
        let g = random(u.shape, &mut rng);
        let gi = upsample_backward(s.shape, &g);
        assert!(fd_check(&s, &g, |t| upsample_forward(t, (9, 11)), &gi) < 1e-5);

        // Keep inputs away from the kink.
        let mut r = random([1, 1, 6, 6], &mut rng);
        for v in r.data.iter_mut() {
            if v.abs() < 0.05 {
                *v += 0.1;
            }
        }
        let o = relu_forward(&r);
        let g = random(o.shape, &mut rng);
        let gi = relu_backward(&o, &g);
        assert!(fd_check(&r, &g, relu_forward, &gi) < 1e-5);
    }
}
