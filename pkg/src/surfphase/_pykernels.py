"""Pure-numpy stencil kernels.

Reference implementation of the hot loops. The compiled module
``_ckernels`` exposes the same functions with identical signatures; every
function takes plain ``(N, N)`` float64 arrays, axis 0 is the x index ``i``
and axis 1 the y index ``j``. An x-edge value at ``(i+1/2, j)`` lives at
index ``[i, j]``.
"""

import numpy as np


def laplacian(v, h):
    return (
        np.roll(v, -1, 0) + np.roll(v, 1, 0) + np.roll(v, -1, 1) + np.roll(v, 1, 1) - 4.0 * v
    ) / (h * h)


def avg_grad_mag(phi, h, delta):
    dx = (np.roll(phi, -1, 0) - phi) / h
    dy = (np.roll(phi, -1, 1) - phi) / h
    sx = dx * dx
    sy = dy * dy
    return np.sqrt(0.5 * (sx + np.roll(sx, 1, 0) + sy + np.roll(sy, 1, 1)) + delta * delta)


def weighted_div_grad_edges(dx_w, dy_w, v, h):
    """div(D grad v) with the weight D already sampled on x- and y-edges."""
    fx = dx_w * (np.roll(v, -1, 0) - v) / h
    fy = dy_w * (np.roll(v, -1, 1) - v) / h
    return (fx - np.roll(fx, 1, 0) + fy - np.roll(fy, 1, 1)) / h


def coupling_div(phi, rho, nmag, h):
    """div( A(rho / nmag) grad phi ) with A the two-point edge average."""
    w = rho / nmag
    wx = 0.5 * (w + np.roll(w, -1, 0))
    wy = 0.5 * (w + np.roll(w, -1, 1))
    return weighted_div_grad_edges(wx, wy, phi, h)


def coupling_lin(phi, rho, nmag, u, v, h):
    """Directional derivatives of ``coupling_div`` and ``avg_grad_mag``.

    Returns ``(dC, dN)`` for the perturbation ``(phi, rho) -> (phi + s u, rho + s v)``.
    """
    dx = (np.roll(phi, -1, 0) - phi) / h
    dy = (np.roll(phi, -1, 1) - phi) / h
    ux = (np.roll(u, -1, 0) - u) / h
    uy = (np.roll(u, -1, 1) - u) / h
    px = dx * ux
    py = dy * uy
    dn = 0.5 * (px + np.roll(px, 1, 0) + py + np.roll(py, 1, 1)) / nmag
    w = rho / nmag
    dw = v / nmag - rho * dn / (nmag * nmag)
    fx = 0.5 * (dw + np.roll(dw, -1, 0)) * dx + 0.5 * (w + np.roll(w, -1, 0)) * ux
    fy = 0.5 * (dw + np.roll(dw, -1, 1)) * dy + 0.5 * (w + np.roll(w, -1, 1)) * uy
    dc = (fx - np.roll(fx, 1, 0) + fy - np.roll(fy, 1, 1)) / h
    return dc, dn
