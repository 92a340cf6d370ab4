//! Training losses on batched single-channel outputs `(b_s, 1, n_y, n_x)`.
//! Each returns the value and its gradient with respect to the output.

use plasmanet_core::field::{Geometry, GridSpec};

use crate::tensor::Tensor;
use crate::{NetError, Result};

fn check(out: &Tensor, grid: &GridSpec) -> Result<()> {
    if out.channels() != 1 || out.height() != grid.ny || out.width() != grid.nx {
        return Err(NetError::Shape(format!(
            "loss expects (b, 1, {}, {}), got {:?}",
            grid.ny, grid.nx, out.shape
        )));
    }
    Ok(())
}

/// Nodes carrying `φ = 0`: every boundary node, except the symmetry axis of an
/// axisymmetric grid (its end points stay, they lie on `x = 0`, `x = Lx`).
pub fn dirichlet_nodes(grid: &GridSpec) -> Vec<usize> {
    let (nx, ny) = (grid.nx, grid.ny);
    let axis = grid.geometry == Geometry::Axisymmetric;
    let mut v = Vec::with_capacity(2 * (nx + ny));
    for j in 0..ny {
        for i in 0..nx {
            if !grid.is_boundary(i, j) {
                continue;
            }
            if axis && j == 0 && i > 0 && i < nx - 1 {
                continue;
            }
            v.push(j * nx + i);
        }
    }
    v
}

/// `Σ φ² / (b_s (2n_x + 2n_y − 4))` over Dirichlet nodes.
pub fn loss_dirichlet(out: &Tensor, grid: &GridSpec) -> Result<(f64, Tensor)> {
    check(out, grid)?;
    let bs = out.batch();
    let scale = 1.0 / (bs * (2 * grid.nx + 2 * grid.ny - 4)) as f64;
    let nodes = dirichlet_nodes(grid);
    let mut grad = Tensor::zeros(out.shape);
    let mut sum = 0.0;
    for b in 0..bs {
        let base = b * grid.len();
        for k in &nodes {
            let v = out.data[base + k];
            sum += v * v;
            grad.data[base + k] = 2.0 * scale * v;
        }
    }
    Ok((sum * scale, grad))
}

/// `Σ (φ − φ_t)² / (b_s (n_x − 1)(n_y − 1))` over interior nodes.
pub fn loss_inside(out: &Tensor, target: &Tensor, grid: &GridSpec) -> Result<(f64, Tensor)> {
    check(out, grid)?;
    if target.shape != out.shape {
        return Err(NetError::Shape("inside loss target shape differs from output".into()));
    }
    let bs = out.batch();
    let scale = 1.0 / (bs * (grid.nx - 1) * (grid.ny - 1)) as f64;
    let mut grad = Tensor::zeros(out.shape);
    let mut sum = 0.0;
    for b in 0..bs {
        for j in 1..grid.ny - 1 {
            for i in 1..grid.nx - 1 {
                let k = b * grid.len() + j * grid.nx + i;
                let d = out.data[k] - target.data[k];
                sum += d * d;
                grad.data[k] = 2.0 * scale * d;
            }
        }
    }
    Ok((sum * scale, grad))
}

/// Rows of the discrete Laplacian as `(node, [(neighbour, coefficient)])`,
/// identical to `plasmanet_core::field::laplacian` on the nodes where that
/// operator is defined.
pub fn laplacian_stencil(grid: &GridSpec) -> Vec<(usize, Vec<(usize, f64)>)> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (dx2, dy2) = (grid.dx().powi(2), grid.dy().powi(2));
    let mut rows = Vec::new();
    match grid.geometry {
        Geometry::Cartesian => {
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    let k = j * nx + i;
                    rows.push((
                        k,
                        vec![
                            (k - 1, 1.0 / dx2),
                            (k + 1, 1.0 / dx2),
                            (k - nx, 1.0 / dy2),
                            (k + nx, 1.0 / dy2),
                            (k, -2.0 / dx2 - 2.0 / dy2),
                        ],
                    ));
                }
            }
        }
        Geometry::Axisymmetric => {
            for j in 0..ny - 1 {
                for i in 1..nx - 1 {
                    let k = j * nx + i;
                    let mut row = vec![(k - 1, 1.0 / dx2), (k + 1, 1.0 / dx2)];
                    if j == 0 {
                        row.push((k + nx, 4.0 / dy2));
                        row.push((k, -2.0 / dx2 - 4.0 / dy2));
                    } else {
                        let jf = j as f64;
                        let up = (jf + 0.5) / jf / dy2;
                        let dn = (jf - 0.5) / jf / dy2;
                        row.push((k + nx, up));
                        row.push((k - nx, dn));
                        row.push((k, -2.0 / dx2 - up - dn));
                    }
                    rows.push((k, row));
                }
            }
        }
    }
    rows
}

/// `Lx² Ly² / (b_s (n_x − 1)(n_y − 1)) · Σ (∇²φ + R)²`.
pub fn loss_laplacian(out: &Tensor, rhs: &Tensor, grid: &GridSpec) -> Result<(f64, Tensor)> {
    let stencil = laplacian_stencil(grid);
    loss_laplacian_with(out, rhs, grid, &stencil)
}

pub fn loss_laplacian_with(
    out: &Tensor,
    rhs: &Tensor,
    grid: &GridSpec,
    stencil: &[(usize, Vec<(usize, f64)>)],
) -> Result<(f64, Tensor)> {
    check(out, grid)?;
    if rhs.shape != out.shape {
        return Err(NetError::Shape("laplacian loss charge shape differs from output".into()));
    }
    let bs = out.batch();
    let scale = (grid.lx * grid.ly).powi(2) / (bs * (grid.nx - 1) * (grid.ny - 1)) as f64;
    let mut grad = Tensor::zeros(out.shape);
    let mut sum = 0.0;
    for b in 0..bs {
        let base = b * grid.len();
        let phi = &out.data[base..base + grid.len()];
        for (k, row) in stencil {
            let r = row.iter().map(|(q, c)| c * phi[*q]).sum::<f64>() + rhs.data[base + k];
            sum += r * r;
            for (q, c) in row {
                grad.data[base + q] += 2.0 * scale * r * c;
            }
        }
    }
    Ok((sum * scale, grad))
}

/// `Σ (∂φ/∂r at r = 0)² / (b_s (n_x − 2))` with a second-order one-sided
/// derivative, over `i = 1..n_x−2`.
pub fn loss_neumann(out: &Tensor, grid: &GridSpec) -> Result<(f64, Tensor)> {
    check(out, grid)?;
    let bs = out.batch();
    let nx = grid.nx;
    let scale = 1.0 / (bs * (nx - 2)) as f64;
    let h = 2.0 * grid.dy();
    let mut grad = Tensor::zeros(out.shape);
    let mut sum = 0.0;
    for b in 0..bs {
        let base = b * grid.len();
        for i in 1..nx - 1 {
            let (k0, k1, k2) = (base + i, base + nx + i, base + 2 * nx + i);
            let d = (-3.0 * out.data[k0] + 4.0 * out.data[k1] - out.data[k2]) / h;
            sum += d * d;
            let g = 2.0 * scale * d / h;
            grad.data[k0] += -3.0 * g;
            grad.data[k1] += 4.0 * g;
            grad.data[k2] += -g;
        }
    }
    Ok((sum * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use plasmanet_core::field::{laplacian, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn stencil_agrees_with_field_laplacian() {
        for grid in [
            GridSpec::cartesian(7, 6, 0.3, 0.2).unwrap(),
            GridSpec::axisymmetric(7, 6, 0.3, 0.2).unwrap(),
        ] {
            let t = random([1, 1, grid.ny, grid.nx], 1);
            let f = ScalarField::from_values(grid, t.data.clone()).unwrap();
            let lap = laplacian(&f).unwrap();
            for (k, row) in laplacian_stencil(&grid) {
                let v: f64 = row.iter().map(|(q, c)| c * t.data[*q]).sum();
                assert!((v - lap.values[k]).abs() < 1e-9 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn trivial_zeros() {
        let g = GridSpec::square(8, 1.0).unwrap();
        let mut t = random([2, 1, 8, 8], 2);
        for b in 0..2 {
            for k in dirichlet_nodes(&g) {
                t.data[b * 64 + k] = 0.0;
            }
        }
        assert_eq!(loss_dirichlet(&t, &g).unwrap().0, 0.0);
        assert_eq!(loss_inside(&t, &t, &g).unwrap().0, 0.0);
        // Symmetric about the axis row: φ(j=1) = φ(j=−1) gives a quadratic
        // profile with zero slope at r = 0.
        let ga = GridSpec::axisymmetric(6, 5, 1.0, 1.0).unwrap();
        let sym = Tensor::from_vec([1, 1, 5, 6], (0..30).map(|k| ((k / 6) as f64).powi(2)).collect()).unwrap();
        assert!(loss_neumann(&sym, &ga).unwrap().0 < 1e-24);
    }

    #[test]
    fn shape_errors() {
        let g = GridSpec::square(8, 1.0).unwrap();
        assert!(loss_dirichlet(&Tensor::zeros([1, 1, 8, 7]), &g).is_err());
        assert!(loss_inside(&Tensor::zeros([1, 1, 8, 8]), &Tensor::zeros([2, 1, 8, 8]), &g).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let grids = [
            GridSpec::cartesian(6, 5, 0.02, 0.01).unwrap(),
            GridSpec::axisymmetric(6, 5, 0.02, 0.01).unwrap(),
        ];
        for g in grids {
            let out = random([2, 1, 5, 6], 3);
            let tgt = random([2, 1, 5, 6], 4);
            let rhs = random([2, 1, 5, 6], 5);
            let fns: Vec<Box<dyn Fn(&Tensor) -> (f64, Tensor)>> = vec![
                Box::new(|o| loss_dirichlet(o, &g).unwrap()),
                Box::new(|o| loss_inside(o, &tgt, &g).unwrap()),
                Box::new(|o| loss_laplacian(o, &rhs, &g).unwrap()),
                Box::new(|o| loss_neumann(o, &g).unwrap()),
            ];
            for f in fns {
                let (_, grad) = f(&out);
                let eps = 1e-5;
                for i in 0..out.len() {
                    let mut p = out.clone();
                    p.data[i] += eps;
                    let mut m = out.clone();
                    m.data[i] -= eps;
                    let fd = (f(&p).0 - f(&m).0) / (2.0 * eps);
                    let a = grad.data[i];
                    let scale = fd.abs().max(a.abs()).max(1e-8);
                    assert!((fd - a).abs() / scale < 1e-5, "{fd} vs {a}");
                }
            }
        }
    }
}
