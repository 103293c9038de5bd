"""Compiled inner loops for two-layer pair networks.

A pair network scores pairs (p, q) drawn from a left set embedded as phiL and
a right set embedded as phiR. With one hidden layer the input weights split
into a left half acting on phiL and a right half acting on phiR, so the
hidden pre-activation over the whole grid is U[p] + V[q] + b1 with
U = phiL @ W1a.T and V = phiR @ W1b.T precomputed by dense matmuls. These
kernels run the remaining per-cell relu/accumulate loops, which dominate the
cost and vectorize poorly in numpy without materializing the grid.

The backward kernel is specialized to 2-wide embeddings; callers fall back to
a numpy path for other widths or deeper networks.
"""

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True, fastmath=True)
def grid_forward(U, VT, b1, w2, b2, out):
    """out[p, q] = w2 . relu(U[p] + V[q] + b1) + b2 for the full grid.

    VT is V transposed and C-contiguous so the innermost loop streams one
    hidden unit's row. out must be preallocated (mL, mR).
    """
    mL, H = U.shape
    mR = VT.shape[1]
    for p in range(mL):
        row = out[p]
        for q in range(mR):
            row[q] = b2
        for h in range(H):
            u = U[p, h] + b1[h]
            wh = w2[h]
            vrow = VT[h]
            for q in range(mR):
                z = u + vrow[q]
                if z > 0.0:
                    row[q] += wh * z
    return out


@njit(cache=True, fastmath=True)
def grid_backward_k2(U, VT, b1, w2, coef, phiL, phiR,
                     dW1a, dW1b, db1, dw2):
    """Accumulate parameter gradients for the grid given per-cell upstream
    coefficients coef[p, q] = dLoss/dpsi(p, q). Embedding width must be 2.

    Adds into dW1a (H, 2), dW1b (H, 2), db1 (H,), dw2 (H,); returns the b2
    gradient. Gradients follow from psi(p,q) = sum_h w2[h] * relu(z_pqh) + b2
    with z_pqh = U[p,h] + V[q,h] + b1[h]: each active cell contributes
    coef * w2[h] to db1, coef * z to dw2, and coef * w2[h] * phi to the
    matching half of the input weights.
    """
    mL, H = U.shape
    mR = VT.shape[1]
    db2 = 0.0
    for p in range(mL):
        crow = coef[p]
        pl0 = phiL[p, 0]
        pl1 = phiL[p, 1]
        for q in range(mR):
            db2 += crow[q]
        for h in range(H):
            u = U[p, h] + b1[h]
            wh = w2[h]
            vrow = VT[h]
            a = 0.0
            bz = 0.0
            c0 = 0.0
            c1 = 0.0
            for q in range(mR):
                z = u + vrow[q]
                if z > 0.0:
                    c = crow[q]
                    a += c
                    bz += c * z
                    c0 += c * phiR[q, 0]
                    c1 += c * phiR[q, 1]
            dw2[h] += bz
            db1[h] += wh * a
            dW1a[h, 0] += wh * a * pl0
            dW1a[h, 1] += wh * a * pl1
            dW1b[h, 0] += wh * c0
            dW1b[h, 1] += wh * c1
    return db2


def grid_forward_numpy(U, V, b1, w2, b2):
    """Reference grid forward for any embedding width; returns (mL, mR)."""
    z = U[:, None, :] + V[None, :, :] + b1
    return np.maximum(z, 0.0) @ w2 + b2


def grid_backward_numpy(U, V, b1, w2, coef, phiL, phiR):
    """Reference grid backward; returns (dW1a, dW1b, db1, dw2, db2).

    Materializes the (mL, mR, H) activation tensor, so only suitable for
    small grids; the compiled kernel handles the large ones.
    """
    z = U[:, None, :] + V[None, :, :] + b1
    active = z > 0.0
    dz = coef[:, :, None] * active * w2    # (mL, mR, H)
    dw2 = np.einsum("pq,pqh->h", coef, np.maximum(z, 0.0))
    db1 = dz.sum(axis=(0, 1))
    dW1a = np.einsum("pqh,pk->hk", dz, phiL)
    dW1b = np.einsum("pqh,qk->hk", dz, phiR)
    return dW1a, dW1b, db1, dw2, float(coef.sum())
