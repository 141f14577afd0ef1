//! Phase unwrapping of single interferograms.
//!
//! Two methods: direct path integration (Itoh) for residue-free inputs, and
//! a coherence-weighted least-squares solve for everything else. The LS
//! method minimizes `sum_e w_e (u_q - u_p - g_e)^2` over every 4-neighbour
//! edge e = (p, q), where `g_e` is the wrapped phase difference. Its normal
//! equations form a weighted graph Laplacian (a discrete Poisson problem)
//! solved by Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sim::wrap_value;

/// Relative residual at which the conjugate-gradient solve is converged.
pub const CG_REL_TOL: f64 = 1e-8;
/// Hard iteration cap; hitting it is an error, not a warning.
pub const CG_MAX_ITER: usize = 10_000;

/// Residue charges on the (width-1) x (height-1) plaquette grid. A nonzero
/// charge marks a point where wrapped gradients are path-dependent.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueMap {
    width: usize,
    height: usize,
    charges: Vec<i32>,
}

impl ResidueMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Charge of the plaquette whose top-left pixel is (x, y).
    pub fn charge(&self, x: usize, y: usize) -> i32 {
        self.charges[y * self.width + x]
    }

    pub fn charges(&self) -> &[i32] {
        &self.charges
    }

    pub fn nonzero_count(&self) -> usize {
        self.charges.iter().filter(|&&c| c != 0).count()
    }

    pub fn total_charge(&self) -> i64 {
        self.charges.iter().map(|&c| c as i64).sum()
    }

    /// Positions of nonzero charges as (x, y, charge).
    pub fn nonzero(&self) -> Vec<(usize, usize, i32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.charge(x, y);
                if c != 0 {
                    out.push((x, y, c));
                }
            }
        }
        out
    }
}

fn check_phase_input(wrapped: &Raster) -> Result<()> {
    if let Some(bad) = wrapped.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!(
            "wrapped phase contains non-finite value {bad}"
        )));
    }
    Ok(())
}

/// Wrapped-gradient circulation of every 2x2 plaquette, in units of 2 pi.
/// The loop runs (x,y) -> (x+1,y) -> (x+1,y+1) -> (x,y+1) -> (x,y).
pub fn compute_residues(wrapped: &Raster) -> Result<ResidueMap> {
    check_phase_input(wrapped)?;
    let (w, h) = (wrapped.width(), wrapped.height());
    if w < 2 || h < 2 {
        return Err(Error::Invalid(format!(
            "residue computation needs at least a 2x2 raster, got {w}x{h}"
        )));
    }
    let v = wrapped.values();
    let mut charges = vec![0i32; (w - 1) * (h - 1)];
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let p00 = v[y * w + x];
            let p10 = v[y * w + x + 1];
            let p11 = v[(y + 1) * w + x + 1];
            let p01 = v[(y + 1) * w + x];
            let circ = wrap_value(p10 - p00)
                + wrap_value(p11 - p10)
                + wrap_value(p01 - p11)
                + wrap_value(p00 - p01);
            charges[y * (w - 1) + x] = (circ / std::f64::consts::TAU).round() as i32;
        }
    }
    Ok(ResidueMap {
        width: w - 1,
        height: h - 1,
        charges,
    })
}

/// Path-integration unwrapping: integrate wrapped differences along the first
/// row, then down each column. Exact on residue-free input; anchored so
/// `output[0,0] == wrapped[0,0]`.
pub fn unwrap_itoh(wrapped: &Raster) -> Result<Raster> {
    check_phase_input(wrapped)?;
    let (w, h) = (wrapped.width(), wrapped.height());
    if w >= 2 && h >= 2 {
        let residues = compute_residues(wrapped)?;
        let count = residues.nonzero_count();
        if count > 0 {
            return Err(Error::Residues { count });
        }
    }
    let mut out = wrapped.clone();
    let v = out.values_mut();
    for x in 1..w {
        v[x] = v[x - 1] + wrap_value(v[x] - v[x - 1]);
    }
    for y in 1..h {
        for x in 0..w {
            v[y * w + x] = v[(y - 1) * w + x] + wrap_value(v[y * w + x] - v[(y - 1) * w + x]);
        }
    }
    Ok(out)
}

/// Weighted least-squares unwrapping.
///
/// Pixel weights are the coherence values, zeroed below `coh_threshold`;
/// each edge takes the minimum of its endpoint weights. The result is shifted
/// so the reference pixel (maximum coherence, ties broken by lowest row-major
/// index — the same rule the inversion uses) keeps its wrapped value. Pixels
/// isolated by zero weights carry no information and come back near the
/// field mean; they are not marked nodata.
pub fn unwrap_ls(wrapped: &Raster, coherence: &Raster, coh_threshold: f64) -> Result<Raster> {
    check_phase_input(wrapped)?;
    if !wrapped.same_shape(coherence) {
        return Err(Error::Invalid(format!(
            "coherence raster {}x{} does not match phase raster {}x{}",
            coherence.width(),
            coherence.height(),
            wrapped.width(),
            wrapped.height()
        )));
    }
    if !(0.0..=1.0).contains(&coh_threshold) {
        return Err(Error::Invalid(format!(
            "coherence threshold must lie in [0, 1], got {coh_threshold}"
        )));
    }
    let (w, h) = (wrapped.width(), wrapped.height());
    let n = w * h;
    let weights: Vec<f64> = coherence
        .values()
        .iter()
        .map(|&c| {
            if coherence.is_nodata(c) || !c.is_finite() || c < coh_threshold {
                0.0
            } else {
                c
            }
        })
        .collect();
    if weights.iter().all(|&wgt| wgt == 0.0) {
        return Err(Error::Invalid(
            "all pixels fall below the coherence threshold".into(),
        ));
    }
    let ref_idx = reference_pixel_index(&weights);

    // Edge weights and wrapped gradients, +x and +y oriented.
    let v = wrapped.values();
    let mut wx = vec![0.0; n]; // edge (x,y)-(x+1,y), stored at (x,y), last column unused
    let mut gx = vec![0.0; n];
    let mut wy = vec![0.0; n]; // edge (x,y)-(x,y+1), stored at (x,y), last row unused
    let mut gy = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                wx[i] = weights[i].min(weights[i + 1]);
                gx[i] = wrap_value(v[i + 1] - v[i]);
            }
            if y + 1 < h {
                wy[i] = weights[i].min(weights[i + w]);
                gy[i] = wrap_value(v[i + w] - v[i]);
            }
        }
    }

    // Right-hand side: b[p] = sum(entering w*g) - sum(leaving w*g).
    let mut b = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut acc = 0.0;
            if x + 1 < w {
                acc -= wx[i] * gx[i];
            }
            if x > 0 {
                acc += wx[i - 1] * gx[i - 1];
            }
            if y + 1 < h {
                acc -= wy[i] * gy[i];
            }
            if y > 0 {
                acc += wy[i - w] * gy[i - w];
            }
            b[i] = acc;
        }
    }

    // Laplacian diagonal doubles as the Jacobi preconditioner.
    let mut diag = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut d = 0.0;
            if x + 1 < w {
                d += wx[i];
            }
            if x > 0 {
                d += wx[i - 1];
            }
            if y + 1 < h {
                d += wy[i];
            }
            if y > 0 {
                d += wy[i - w];
            }
            diag[i] = d;
        }
    }

    let apply = |u: &[f64], out: &mut [f64]| {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let mut acc = diag[i] * u[i];
                if x + 1 < w {
                    acc -= wx[i] * u[i + 1];
                }
                if x > 0 {
                    acc -= wx[i - 1] * u[i - 1];
                }
                if y + 1 < h {
                    acc -= wy[i] * u[i + w];
                }
                if y > 0 {
                    acc -= wy[i - w] * u[i - w];
                }
                out[i] = acc;
            }
        }
    };

    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(&b, &b).sqrt();
    let mut u = vec![0.0; n];
    if b_norm > 0.0 {
        // Preconditioned CG on the (singular but consistent) Laplacian system.
        let precond: Vec<f64> = diag
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&precond).map(|(ri, pi)| ri * pi).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut converged = false;
        let mut resid = 1.0;
        for _ in 0..CG_MAX_ITER {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break; // numerical nullspace component; current iterate is the answer
            }
            let alpha = rz / pap;
            for i in 0..n {
                u[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            resid = dot(&r, &r).sqrt() / b_norm;
            if resid <= CG_REL_TOL {
                converged = true;
                break;
            }
            for i in 0..n {
                z[i] = r[i] * precond[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if !converged && resid > CG_REL_TOL {
            return Err(Error::CgStalled {
                tol: CG_REL_TOL,
                iters: CG_MAX_ITER,
                residual: resid,
            });
        }
    }

    let shift = v[ref_idx] - u[ref_idx];
    let mut out = wrapped.clone();
    for (o, ui) in out.values_mut().iter_mut().zip(&u) {
        *o = ui + shift;
    }
    Ok(out)
}

/// Index of the maximum-weight pixel, ties broken by lowest row-major index.
pub(crate) fn reference_pixel_index(weights: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best
}
