"""Matrix-free block Hankel products through a circulant embedding.

Reversing the block rows of a depth-K Hankel matrix gives a Toeplitz
matrix, which embeds in a block circulant over the full record length; the
circulant diagonalizes under the DFT, so products with the Hankel matrix
and its transpose cost O(q T log T) and only the q spectra of the rotated
data are stored. Works for any record length, prime sizes included (the
FFT backend switches to a chirp transform there).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .deepc import DeepcConfig, DeepcSolution
from .plants import Trajectory


class FftHankelOperator:
    """Depth-K block Hankel operator of a single record, never densified.

    matvec(g) equals build_hankel(w, K) @ g and rmatvec(v) the transposed
    product, both computed via FFTs of the cached circulant spectra.
    """

    def __init__(self, w, depth: int):
        if isinstance(w, Trajectory):
            w = w.w
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        T, q = w.shape
        if not (1 <= depth <= T):
            raise ValueError(f"depth {depth} incompatible with {T} samples")
        self.T = T
        self.q = q
        self.K = depth
        self.L = T - depth + 1
        # first block column of the circulant embedding: w[(K-1-i) mod T]
        idx = (depth - 1 - np.arange(T)) % T
        self._spectra = np.fft.fft(w[idx], axis=0)

    @property
    def shape(self):
        return (self.q * self.K, self.L)

    @property
    def stored_entries(self) -> int:
        return int(self._spectra.size)

    def matvec(self, g) -> np.ndarray:
        """H @ g for g of length L = T - K + 1."""
        g = np.asarray(g, dtype=float).reshape(-1)
        if g.shape[0] != self.L:
            raise ValueError(f"expected length {self.L}, got {g.shape[0]}")
        v = np.zeros(self.T)
        v[:self.L] = g
        V = np.fft.fft(v)
        y = np.fft.ifft(self._spectra * V[:, None], axis=0).real
        # circulant rows carry the block-reversed Hankel; flip back
        return y[:self.K][::-1].reshape(-1)

    def rmatvec(self, v) -> np.ndarray:
        """H.T @ v for v of length q*K."""
        v = np.asarray(v, dtype=float).reshape(self.K, self.q)
        pad = np.zeros((self.T, self.q))
        pad[:self.K] = v[::-1]
        D = np.fft.fft(pad, axis=0)
        d = np.fft.ifft(D * np.conj(self._spectra), axis=0).real
        return d[:self.L].sum(axis=1)


def matfree_deepc_unconstrained(op: FftHankelOperator, m: int,
                                config: DeepcConfig, u_ini, y_ini, r,
                                max_iter: int = 5000,
                                tol: float = 1e-9) -> DeepcSolution:
    """Unconstrained soft-regime step without ever forming the Hankel stack.

    Solves the combiner normal equations by conjugate gradients; every
    iteration costs one matvec/rmatvec pair. Requires the fully penalized
    past (both slack channels on) and lambda_g > 0, which make the system
    positive definite. Stops when the gradient norm falls below
    tol * (1 + ||linear term||), or at max_iter with status "max_iter".
    """
    if config.hard_past or not config.use_input_slack:
        raise ValueError("matrix-free path needs both past channels penalized")
    if config.lambda_g <= 0:
        raise ValueError("matrix-free path needs lambda_g > 0")
    t0 = time.perf_counter()
    q, K, L = op.q, op.K, op.L
    p = q - m
    T_ini, N = config.T_ini, config.N
    if T_ini + N != K:
        raise ValueError("operator depth must equal T_ini + N")
    Q, R = config.weights.Q, config.weights.R
    lu, ly, lg = config.lambda_u, config.lambda_y, config.lambda_g
    u_ini = np.asarray(u_ini, dtype=float).reshape(T_ini, m)
    y_ini = np.asarray(y_ini, dtype=float).reshape(T_ini, p)
    r_win = np.asarray(r, dtype=float).reshape(N, p)

    def weighted(h):
        """Apply the block weights to an interleaved window stack."""
        h = h.reshape(K, q)
        out = np.empty_like(h)
        out[:T_ini, :m] = lu * h[:T_ini, :m]
        out[:T_ini, m:] = ly * h[:T_ini, m:]
        out[T_ini:, :m] = h[T_ini:, :m] @ R
        out[T_ini:, m:] = h[T_ini:, m:] @ Q
        return out.reshape(-1)

    def apply_hessian(g):
        return 2.0 * (op.rmatvec(weighted(op.matvec(g))) + lg * g)

    target = np.zeros((K, q))
    target[:T_ini, :m] = lu * u_ini
    target[:T_ini, m:] = ly * y_ini
    target[T_ini:, m:] = r_win @ Q
    f = -2.0 * op.rmatvec(target.reshape(-1))

    b = -f
    g = np.zeros(L)
    res = b.copy()
    d = res.copy()
    rr = float(res @ res)
    stop = tol * (1.0 + np.linalg.norm(f))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.sqrt(rr) <= stop:
            iterations -= 1
            break
        Ad = apply_hessian(d)
        alpha = rr / float(d @ Ad)
        g += alpha * d
        res -= alpha * Ad
        rr_new = float(res @ res)
        d = res + (rr_new / rr) * d
        rr = rr_new
    converged = np.sqrt(rr) <= stop

    h = op.matvec(g).reshape(K, q)
    u = h[T_ini:, :m]
    y = h[T_ini:, m:]
    sigma_u = h[:T_ini, :m] - u_ini
    sigma_y = h[:T_ini, m:] - y_ini
    err = y - r_win
    obj = float(np.sum((err @ Q) * err) + np.sum((u @ R) * u)
                + lu * np.sum(sigma_u ** 2) + ly * np.sum(sigma_y ** 2)
                + lg * float(g @ g))
    return DeepcSolution(
        g=g, u=u.copy(), y=y.copy(), sigma_u=sigma_u, sigma_y=sigma_y,
        objective=obj, status="optimal" if converged else "max_iter",
        active_set=(), iterations=iterations,
        solve_time=time.perf_counter() - t0, decision_dim=L)
