//! Leapfrog stepper on the conservative discretization `M u'' = -S u + B f`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Grids, InteriorField, Layout, Shape, SpeedField};

use super::{SolverSettings, SpaceTimeField};

/// How often the state vector is scanned for non-finite values.
const STABILITY_CHECK_STRIDE: usize = 50;

pub(super) fn run(
    c: &SpeedField,
    f: &SpaceTimeField,
    settings: &SolverSettings,
    want_energy: bool,
) -> Result<(SpaceTimeField, InteriorField, Vec<f64>)> {
    settings.validate_against(c)?;
    let grids = c.grids();
    if matches!(grids.spec.shape, Shape::Disk { .. }) {
        return Err(Error::config(
            "the time-domain solver supports interval and rectangle domains",
        ));
    }
    let nb = grids.boundary.len();
    if f.n_boundary() != nb {
        return Err(Error::GridMismatch(format!(
            "source has {} boundary channels but the grid has {nb}",
            f.n_boundary()
        )));
    }
    if f.time() != settings.time() {
        return Err(Error::GridMismatch(
            "source time grid does not match the solver settings".into(),
        ));
    }

    let stencil = Stencil::new(grids);
    let n = grids.interior.len();
    let time = settings.time();
    let dt = time.dt();
    let dt2 = dt * dt;

    // Inverse lumped mass c^2 / w and mass w / c^2 per interior node.
    let mut minv = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    for i in 0..n {
        let w = grids.interior.weight(i);
        let density = c.interior_density(i);
        minv.push(1.0 / (w * density));
        mass.push(w * density);
    }

    // Boundary load weights: quadrature weight times the boundary measure
    // density, applied at the grid node each boundary node sits on.
    let mut load = Vec::with_capacity(nb);
    for j in 0..nb {
        let node = grids.boundary.grid_node(j).ok_or_else(|| {
            Error::GridMismatch("boundary node does not coincide with a grid node".into())
        })?;
        load.push((node, grids.boundary.weight(j) * c.boundary_density(j)));
    }

    let mut u_prev = vec![0.0f64; n];
    let mut u_cur = vec![0.0f64; n];
    let mut u_next = vec![0.0f64; n];
    let mut su = vec![0.0f64; n];

    let mut trace = SpaceTimeField::zeros(time, nb);
    let mut snapshot = InteriorField::zeros(Arc::clone(grids));
    let mut energy = Vec::new();

    // First step from rest: u^1 = (Δt²/2) M⁻¹ B f^0.
    for (&(node, w), &fv) in load.iter().zip(f.row(0)) {
        u_cur[node] += 0.5 * dt2 * minv[node] * w * fv;
    }
    record_trace(&mut trace, 1, &u_cur, &load);
    if want_energy {
        // S u^0 = 0, so the first half-step energy is kinetic only.
        let mut e = 0.0;
        for i in 0..n {
            let v = u_cur[i] / dt;
            e += 0.5 * mass[i] * v * v;
        }
        energy.push(e);
    }
    if time.half_index() == 1 {
        snapshot.values_mut().copy_from_slice(&u_cur);
    }

    for k in 1..time.steps() {
        stencil.apply(&u_cur, &mut su);
        let fk = f.row(k);
        for i in 0..n {
            u_next[i] = 2.0 * u_cur[i] - u_prev[i] - dt2 * minv[i] * su[i];
        }
        for (&(node, w), &fv) in load.iter().zip(fk) {
            u_next[node] += dt2 * minv[node] * w * fv;
        }
        record_trace(&mut trace, k + 1, &u_next, &load);
        if want_energy {
            let mut kinetic = 0.0;
            let mut potential = 0.0;
            for i in 0..n {
                let v = (u_next[i] - u_cur[i]) / dt;
                kinetic += 0.5 * mass[i] * v * v;
                potential += 0.5 * su[i] * u_next[i];
            }
            energy.push(kinetic + potential);
        }
        std::mem::swap(&mut u_prev, &mut u_cur);
        std::mem::swap(&mut u_cur, &mut u_next);
        if k + 1 == time.half_index() {
            snapshot.values_mut().copy_from_slice(&u_cur);
        }
        if (k + 1) % STABILITY_CHECK_STRIDE == 0 || k + 1 == time.steps() {
            if let Some(step) = first_non_finite(&u_cur, k + 1) {
                return Err(Error::Instability { step });
            }
        }
    }

    Ok((trace, snapshot, energy))
}

fn record_trace(trace: &mut SpaceTimeField, k: usize, u: &[f64], load: &[(usize, f64)]) {
    for (j, &(node, _)) in load.iter().enumerate() {
        trace.set(k, j, u[node]);
    }
}

fn first_non_finite(u: &[f64], step: usize) -> Option<usize> {
    u.iter().any(|v| !v.is_finite()).then_some(step)
}

/// Neumann stiffness of the unweighted Laplacian, `S·1 = 0` by construction.
enum Stencil {
    Line {
        n: usize,
        h: f64,
    },
    Rect {
        nx: usize,
        ny: usize,
        h: f64,
        /// 1-D trapezoid weights along x and y (h, halved at the ends).
        wx: Vec<f64>,
        wy: Vec<f64>,
    },
}

impl Stencil {
    fn new(grids: &Arc<Grids>) -> Stencil {
        let h = grids.interior.h();
        match &grids.interior.layout {
            Layout::Line { n } => Stencil::Line { n: *n, h },
            Layout::Grid(mask) => {
                let line_weights = |n: usize| -> Vec<f64> {
                    (0..n)
                        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                        .collect()
                };
                Stencil::Rect {
                    nx: mask.nx,
                    ny: mask.ny,
                    h,
                    wx: line_weights(mask.nx),
                    wy: line_weights(mask.ny),
                }
            }
        }
    }

    /// `su = S u`, overwriting `su`.
    fn apply(&self, u: &[f64], su: &mut [f64]) {
        match self {
            Stencil::Line { n, h } => {
                let n = *n;
                let inv_h = 1.0 / h;
                su[0] = (u[0] - u[1]) * inv_h;
                for i in 1..n - 1 {
                    su[i] = (2.0 * u[i] - u[i - 1] - u[i + 1]) * inv_h;
                }
                su[n - 1] = (u[n - 1] - u[n - 2]) * inv_h;
            }
            Stencil::Rect { nx, ny, h, wx, wy } => {
                let (nx, ny) = (*nx, *ny);
                let inv_h = 1.0 / h;
                for iy in 0..ny {
                    let row = iy * nx;
                    let wyv = wy[iy];
                    for ix in 0..nx {
                        let id = row + ix;
                        let uc = u[id];
                        // One-sided differences at the edges keep the matrix
                        // symmetric with zero row sums.
                        let sx = match ix {
                            0 => uc - u[id + 1],
                            _ if ix == nx - 1 => uc - u[id - 1],
                            _ => 2.0 * uc - u[id - 1] - u[id + 1],
                        };
                        let sy = match iy {
                            0 => uc - u[id + nx],
                            _ if iy == ny - 1 => uc - u[id - nx],
                            _ => 2.0 * uc - u[id - nx] - u[id + nx],
                        };
                        su[id] = (wyv * sx + wx[ix] * sy) * inv_h;
                    }
                }
            }
        }
    }
}
