"""NumPy implementations of the hot kernels (reference and fallback)."""

import numpy as np


def bilinear_polar(values, fr, ft, n_r, n_theta):
    """Bilinear interpolation in (r, theta) index space.

    ``values`` has shape ``(..., n_r, n_theta)``; ``fr`` and ``ft`` are
    fractional indices of any common shape. The theta axis is periodic and
    radial indices outside ``[0, n_r - 1]`` extrapolate linearly.
    """
    fr = np.asarray(fr, dtype=float)
    ft = np.asarray(ft, dtype=float)
    i0 = np.clip(np.floor(fr).astype(np.int64), 0, n_r - 2)
    wr = fr - i0
    jf = np.floor(ft)
    wt = ft - jf
    j0 = np.mod(jf.astype(np.int64), n_theta)
    j1 = np.mod(j0 + 1, n_theta)
    v00 = values[..., i0, j0]
    v01 = values[..., i0, j1]
    v10 = values[..., i0 + 1, j0]
    v11 = values[..., i0 + 1, j1]
    return (1 - wr) * ((1 - wt) * v00 + wt * v01) + wr * ((1 - wt) * v10 + wt * v11)


def transformed_rhs(Up, hr, d1den, d2den, inv_r, cos, sin,
                    gup, dg, Bc, Cc, Gam, Yd, Em, mu):
    """Evaluate -N(U) - M(U) + mu L(U) at every node.

    ``Up`` is the ghost-padded velocity ``(2, n_r + 2, n_theta)``. The
    coefficient arrays are node-wise: ``gup[a, b]`` the inverse metric,
    ``dg[b] = d_a g^{ab}``, ``Bc[i, j, l]`` and ``Cc[i, j]`` the first- and
    zeroth-order coefficients of L, ``Gam[k, i, j]`` the Christoffel
    symbols, ``Yd`` the material derivative of the inverse map and
    ``Em[i, j]`` the zeroth-order coefficient of M.
    """
    U = Up[:, 1:-1, :]
    up = np.roll(Up, -1, axis=-1)
    um = np.roll(Up, 1, axis=-1)
    fr = (Up[:, 2:, :] - Up[:, :-2, :]) / (2 * hr)
    frr = (Up[:, 2:, :] - 2 * U + Up[:, :-2, :]) / hr**2
    ft = (up[:, 1:-1, :] - um[:, 1:-1, :]) / d1den
    ftt = (up[:, 1:-1, :] - 2 * U + um[:, 1:-1, :]) / d2den
    frt = ((up[:, 2:, :] - up[:, :-2, :]) - (um[:, 2:, :] - um[:, :-2, :])) / (2 * hr * d1den)
    ir = inv_r[:, None]
    c, s = cos, sin
    ftr = ft * ir
    G = np.stack([c * fr - s * ftr, s * fr + c * ftr], axis=1)  # G[i, k] = d_k U_i
    a = frr
    b = frt * ir - ft * ir**2
    d = fr * ir + ftt * ir**2
    h11 = c * c * a - 2 * c * s * b + s * s * d
    h12 = c * s * (a - d) + (c * c - s * s) * b
    h22 = s * s * a + 2 * c * s * b + c * c * d
    lap = gup[0, 0] * h11 + 2 * gup[0, 1] * h12 + gup[1, 1] * h22
    lap = lap + np.einsum("bxy,ibxy->ixy", dg, G)
    lap = lap + np.einsum("ijlxy,jlxy->ixy", Bc, G)
    lap = lap + np.einsum("ijxy,jxy->ixy", Cc, U)
    conv = np.einsum("jxy,ijxy->ixy", U, G) + np.einsum("ijkxy,jxy,kxy->ixy", Gam, U, U)
    mov = np.einsum("jxy,ijxy->ixy", Yd, G) + np.einsum("ijxy,jxy->ixy", Em, U)
    return mu * lap - conv - mov
