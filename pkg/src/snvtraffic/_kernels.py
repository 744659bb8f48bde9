"""Compiled inner loop of the finite-volume update (batched over realizations)."""

import numba


@numba.njit(cache=True, nogil=True)
def convolve_and_update(ve, rho, gamma, lam, out, V):
    """One conservative step for every row of ``rho``.

    ``ve[b]`` holds limited velocities on cells ``0 .. J + n_eta - 1`` (right
    ghosts included).  ``V[b, i]`` receives the convolved velocity at interface
    ``i`` (``i = 0`` is the upstream boundary), and the upwind value left of
    cell 0 is cell 0 itself.
    """
    n_batch, n_cells = rho.shape
    n_eta = gamma.shape[0]
    for b in range(n_batch):
        for i in range(n_cells + 1):
            s = 0.0
            for k in range(n_eta):
                s += gamma[k] * ve[b, i + k]
            V[b, i] = s
        flux_left = rho[b, 0] * V[b, 0]
        for j in range(n_cells):
            flux_right = rho[b, j] * V[b, j + 1]
            out[b, j] = rho[b, j] - lam * (flux_right - flux_left)
            flux_left = flux_right
