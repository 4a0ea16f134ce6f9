"""NumPy reference kernels for the staggered-grid update sweeps.

Same call signatures as the compiled module; used when the extension is
unavailable and as the ground truth it is tested against.  Arrays follow
the edge/face staggering documented in fdtd: for cell counts (nx, ny, nz),
Ex is (nx, ny+1, nz+1), Hx is (nx+1, ny, nz), with the other components
by cyclic permutation.
"""

import numpy as np

COMPILED = False


def update_h(ex, ey, ez, hx, hy, hz, ch):
    """H -= ch * curl E on the face lattices (ch = dt / (mu h))."""
    hx -= ch * ((ez[:, 1:, :] - ez[:, :-1, :])
                - (ey[:, :, 1:] - ey[:, :, :-1]))
    hy -= ch * ((ex[:, :, 1:] - ex[:, :, :-1])
                - (ez[1:, :, :] - ez[:-1, :, :]))
    hz -= ch * ((ey[1:, :, :] - ey[:-1, :, :])
                - (ex[:, 1:, :] - ex[:, :-1, :]))


def update_e(ex, ey, ez, hx, hy, hz, ce):
    """E += ce * curl H on interior edges (ce = dt / (eps h)).

    Outer tangential edges are left untouched (hard wall zero).
    """
    ny = ey.shape[1]
    nz = ez.shape[2]
    nx = ex.shape[0]
    ex[:, 1:ny, 1:nz] += ce * (
        (hz[:, 1:, :] - hz[:, :-1, :])[:, :, 1:nz]
        - (hy[:, :, 1:] - hy[:, :, :-1])[:, 1:ny, :])
    ey[1:nx, :, 1:nz] += ce * (
        (hx[:, :, 1:] - hx[:, :, :-1])[1:nx, :, :]
        - (hz[1:, :, :] - hz[:-1, :, :])[:, :, 1:nz])
    ez[1:nx, 1:ny, :] += ce * (
        (hy[1:, :, :] - hy[:-1, :, :])[:, 1:ny, :]
        - (hx[:, 1:, :] - hx[:, :-1, :])[1:nx, :, :])


def inject(comp, idx, frac, amp):
    """comp.flat[idx] += amp * frac (current source on one component)."""
    np.add.at(comp.reshape(-1), idx, amp * frac)


def zero_edges(comp, idx):
    """comp.flat[idx] = 0 (PEC edges of one component)."""
    comp.reshape(-1)[idx] = 0.0


def gather(comp, idx8, w8):
    """Trilinear gather: sum over the 8 surrounding lattice values."""
    return (comp.reshape(-1)[idx8] * w8).sum(axis=1)
