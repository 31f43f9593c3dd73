//! Least-squares integration of a gradient field on a pixel grid.
//!
//! Minimizes `sum (f[x+1] - f[x] - gx)^2 + sum (f[y+1] - f[y] - gy)^2`
//! over valid forward differences (Neumann boundary). The normal equations
//! are the graph Laplacian, solved by conjugate gradients with a Jacobi
//! preconditioner. The result is normalized to zero mean.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{ImageBuffer, ImageError};

#[derive(Debug, Error)]
pub enum PoissonError {
    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("gradient fields must be single-channel and equally sized")]
    Shape,
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Relative residual `||b - A f|| / ||b||` at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub field: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Row-major grid Laplacian with Neumann boundaries.
struct GridLaplacian {
    width: usize,
    height: usize,
}

impl GridLaplacian {
    fn degree(&self, x: usize, y: usize) -> f64 {
        let mut d = 0.0;
        if x > 0 {
            d += 1.0;
        }
        if x + 1 < self.width {
            d += 1.0;
        }
        if y > 0 {
            d += 1.0;
        }
        if y + 1 < self.height {
            d += 1.0;
        }
        d
    }

    fn apply(&self, f: &[f64], out: &mut [f64]) {
        let w = self.width;
        for y in 0..self.height {
            for x in 0..w {
                let i = y * w + x;
                let fi = f[i];
                let mut acc = 0.0;
                if x > 0 {
                    acc += fi - f[i - 1];
                }
                if x + 1 < w {
                    acc += fi - f[i + 1];
                }
                if y > 0 {
                    acc += fi - f[i - w];
                }
                if y + 1 < self.height {
                    acc += fi - f[i + w];
                }
                out[i] = acc;
            }
        }
    }
}

/// Right-hand side of the normal equations: negative divergence of the gradients.
fn divergence(width: usize, height: usize, gx: &[f64], gy: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                b[i] -= gx[i];
                b[i + 1] += gx[i];
            }
            if y + 1 < height {
                b[i] -= gy[i];
                b[i + width] += gy[i];
            }
        }
    }
    b
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integrates forward-difference gradients. `gx[i]` is `f[i+1] - f[i]` along
/// a row (ignored in the last column); `gy[i]` is `f[i+w] - f[i]` (ignored
/// in the last row).
pub fn solve_poisson(width: usize, height: usize, gx: &[f64], gy: &[f64], params: &SolverParams) -> Result<PoissonSolution, PoissonError> {
    if gx.len() != width * height || gy.len() != width * height {
        return Err(PoissonError::Shape);
    }
    if !(params.tolerance > 0.0) {
        return Err(PoissonError::BadTolerance);
    }
    let n = width * height;
    let op = GridLaplacian { width, height };
    let b = divergence(width, height, gx, gy);
    let b_norm = dot(&b, &b).sqrt();
    if b_norm == 0.0 {
        return Ok(PoissonSolution {
            field: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = op.degree(i % width, i / width);
            if d > 0.0 {
                1.0 / d
            } else {
                0.0
            }
        })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= params.tolerance {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if residual > params.tolerance {
        return Err(PoissonError::NotConverged { iterations, residual });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    Ok(PoissonSolution {
        field: x,
        iterations,
        residual,
    })
}

/// Image-level wrapper around [`solve_poisson`].
pub fn poisson_solve(gradient_x: &ImageBuffer, gradient_y: &ImageBuffer, params: &SolverParams) -> Result<ImageBuffer, PoissonError> {
    if gradient_x.channels() != 1 || gradient_y.channels() != 1 || !gradient_x.same_size(gradient_y) {
        return Err(PoissonError::Shape);
    }
    let gx: Vec<f64> = gradient_x.data().iter().map(|&v| v as f64).collect();
    let gy: Vec<f64> = gradient_y.data().iter().map(|&v| v as f64).collect();
    let sol = solve_poisson(gradient_x.width(), gradient_x.height(), &gx, &gy, params)?;
    Ok(ImageBuffer::new(
        gradient_x.width(),
        gradient_x.height(),
        1,
        sol.field.iter().map(|&v| v as f32).collect(),
    )?)
}

/// Forward differences of a row-major field, zero on the last column/row.
pub fn forward_gradients(width: usize, height: usize, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; width * height];
    let mut gy = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                gx[i] = f[i + 1] - f[i];
            }
            if y + 1 < height {
                gy[i] = f[i + width] - f[i];
            }
        }
    }
    (gx, gy)
}
