"""Hankel data matrices, excitation checks, and the past/future partition.

Everything downstream consumes the stacked block structure built here:
rows ordered (U_p, Y_p, U_f, Y_f), columns indexing length-K windows of the
recorded data. Multiple episodes concatenate column-wise (mosaic form).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plants import Trajectory


def build_hankel(w, depth: int) -> np.ndarray:
    """Depth-K block Hankel matrix of a time-major signal.

    Args:
        w: (T, q) samples, or 1-D of length T for q == 1.
        depth: window length K.

    Returns:
        (q*K, T-K+1) matrix whose column j stacks w[j], ..., w[j+K-1].

    >>> build_hankel([1., 2., 3., 4., 5.], 3)
    array([[1., 2., 3.],
           [2., 3., 4.],
           [3., 4., 5.]])
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w.reshape(-1, 1)
    T, q = w.shape
    if depth < 1 or depth > T:
        raise ValueError(f"depth {depth} incompatible with {T} samples")
    L = T - depth + 1
    H = np.empty((q * depth, L))
    for i in range(depth):
        H[i * q:(i + 1) * q, :] = w[i:i + L].T
    return H


def build_mosaic(signals, depth: int) -> np.ndarray:
    """Column-wise concatenation of per-episode Hankel matrices.

    With z episodes of total length T the result has T - z*(depth-1) columns.
    Episode channel counts must agree.
    """
    blocks = [build_hankel(w, depth) for w in signals]
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise ValueError("episodes disagree on channel count")
    return np.hstack(blocks)


def numeric_rank(M, tol: float = 1e-9) -> int:
    """Number of singular values above tol * sigma_max."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def pe_order(u, order: int, tol: float = 1e-9) -> bool:
    """Persistency of excitation check: depth-`order` input Hankel full row rank.

    Accepts a single (T, m) record or a list of episode records (mosaic form).
    """
    if isinstance(u, (list, tuple)):
        H = build_mosaic([np.asarray(e, dtype=float) for e in u], order)
        m = H.shape[0] // order
    else:
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        m = u.shape[1]
        H = build_hankel(u, order)
    if H.shape[1] < H.shape[0]:
        return False
    return numeric_rank(H, tol) == m * order


def min_data_length(m: int, K: int, n: int, z: int = 1) -> int:
    """Smallest record length sufficient for rank q*K+... identifiability.

    Single episode: (m+1)*(K+n) - 1 samples guarantee an input can be PE of
    order K+n. With z > 1 equal-length episodes the mosaic variant needs
    (m+z)*K + n - z total samples, i.e. m*n fewer for two episodes and more
    savings as z grows.
    """
    if min(m, K, z) < 1 or n < 0:
        raise ValueError("m, K, z must be positive and n nonnegative")
    if z == 1:
        return (m + 1) * (K + n) - 1
    return (m + z) * K + n - z


@dataclass(frozen=True)
class DataBlocks:
    """Past/future partition of the stacked input/output Hankel matrix.

    U_p: (m*T_ini, L)   past inputs
    Y_p: (p*T_ini, L)   past outputs
    U_f: (m*N, L)       future inputs
    Y_f: (p*N, L)       future outputs

    The stacked matrix property H returns them in exactly that row order.
    """

    U_p: np.ndarray
    Y_p: np.ndarray
    U_f: np.ndarray
    Y_f: np.ndarray
    T_ini: int
    N: int
    m: int
    p: int

    @property
    def K(self) -> int:
        return self.T_ini + self.N

    @property
    def q(self) -> int:
        return self.m + self.p

    @property
    def L(self) -> int:
        return self.U_p.shape[1]

    @property
    def H(self) -> np.ndarray:
        return np.vstack([self.U_p, self.Y_p, self.U_f, self.Y_f])

    @property
    def H_past(self) -> np.ndarray:
        return np.vstack([self.U_p, self.Y_p])


def partition(data, T_ini: int, N: int) -> DataBlocks:
    """Build the (U_p, Y_p, U_f, Y_f) blocks from recorded trajectories.

    Args:
        data: a Trajectory or list of Trajectory episodes.
        T_ini: past window length (conditioning horizon).
        N: future window length (prediction horizon).

    Episode records shorter than T_ini + N are rejected.
    """
    if isinstance(data, Trajectory):
        data = [data]
    if not data:
        raise ValueError("need at least one trajectory")
    K = T_ini + N
    if T_ini < 1 or N < 1:
        raise ValueError("T_ini and N must be positive")
    for tr in data:
        if tr.T < K:
            raise ValueError(f"episode of {tr.T} samples shorter than T_ini+N={K}")
    m = data[0].u.shape[1]
    p = data[0].y.shape[1]
    Hu = build_mosaic([tr.u for tr in data], K)
    Hy = build_mosaic([tr.y for tr in data], K)
    return DataBlocks(
        U_p=Hu[:m * T_ini], Y_p=Hy[:p * T_ini],
        U_f=Hu[m * T_ini:], Y_f=Hy[p * T_ini:],
        T_ini=T_ini, N=N, m=m, p=p,
    )


@dataclass(frozen=True)
class SvdReduction:
    """Rank-truncated surrogate of the stacked Hankel matrix.

    blocks holds the reduced partition (same row structure, r_a columns);
    V_r maps reduced coefficients back to the original column space. The
    retained matrix is U_r * diag(s_r), so column space and the first r_a
    principal directions of the original stack are preserved exactly.
    """

    blocks: DataBlocks
    V_r: np.ndarray
    singular_values: np.ndarray
    r_a: int

    @property
    def discarded_energy(self) -> float:
        return float(np.sum(self.singular_values[self.r_a:] ** 2))


def svd_reduce(blocks: DataBlocks, r_a="auto", tol: float = 1e-9) -> SvdReduction:
    """Compress the stacked Hankel matrix to r_a columns by SVD truncation.

    r_a = "auto" keeps the numeric rank for clean data; with noisy data the
    caller should pass an explicit order (e.g. m*K + n from a model-order
    guess) or "gap" to cut at the largest singular-value gap ratio.
    Keeping r_a equal to the full numeric rank reproduces the original
    behavior exactly; smaller r_a trades accuracy for speed.
    """
    H = blocks.H
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    rank = int(np.sum(s > tol * s[0])) if s[0] > 0 else 0
    if r_a == "auto":
        r_a = rank
    elif r_a == "gap":
        ratios = s[:-1] / np.maximum(s[1:], np.finfo(float).tiny)
        r_a = int(np.argmax(ratios)) + 1
    r_a = int(r_a)
    if not (1 <= r_a <= min(H.shape)):
        raise ValueError(f"r_a={r_a} outside [1, {min(H.shape)}]")
    H_red = U[:, :r_a] * s[:r_a]
    mTi = blocks.m * blocks.T_ini
    pTi = blocks.p * blocks.T_ini
    qTi = mTi + pTi
    reduced = DataBlocks(
        U_p=H_red[:mTi], Y_p=H_red[mTi:qTi],
        U_f=H_red[qTi:qTi + blocks.m * blocks.N],
        Y_f=H_red[qTi + blocks.m * blocks.N:],
        T_ini=blocks.T_ini, N=blocks.N, m=blocks.m, p=blocks.p,
    )
    return SvdReduction(blocks=reduced, V_r=Vt[:r_a].T, singular_values=s, r_a=r_a)
