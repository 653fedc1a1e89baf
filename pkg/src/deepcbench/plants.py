"""Discrete-time plants, data collection, and state reconstruction.

Linear plants are explicit (A, B, C, D) state-space models; the registry
also ships one mildly nonlinear pendulum used to exercise slack/regularization
handling. All randomness is routed through seeded generators so datasets are
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


def _as_2d(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return M


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time LTI plant x+ = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    name: str = "lti"

    def __post_init__(self):
        object.__setattr__(self, "A", _as_2d(self.A))
        object.__setattr__(self, "B", _as_2d(self.B))
        object.__setattr__(self, "C", _as_2d(self.C))
        object.__setattr__(self, "D", _as_2d(self.D))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.B.shape[0] != n:
            raise ValueError("B row count must match A")
        if self.C.shape[1] != n:
            raise ValueError("C column count must match A")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise ValueError("D must be p x m")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def is_linear(self) -> bool:
        return True

    def step_state(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u

    def output(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.C @ x + self.D @ u


@dataclass(frozen=True)
class Pendulum:
    """Damped pendulum discretized with an explicit Euler step.

    State is (angle, angular rate), input is a torque, output is the angle.
    Around the hanging equilibrium the model is only mildly nonlinear, which
    is the regime the data-driven controllers are expected to tolerate.
    """

    dt: float = 0.05
    gravity_over_length: float = 9.81
    damping: float = 0.5
    name: str = "pendulum"

    n = 2
    m = 1
    p = 1

    @property
    def is_linear(self) -> bool:
        return False

    def step_state(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        theta, omega = x
        dtheta = omega
        domega = -self.gravity_over_length * np.sin(theta) - self.damping * omega + u[0]
        return np.array([theta + self.dt * dtheta, omega + self.dt * domega])

    def output(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.array([x[0]])


@dataclass(frozen=True)
class Trajectory:
    """One input/output record, time-major: u is (T, m), y is (T, p)."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        y = np.asarray(self.y, dtype=float)
        # 1-D sequences are treated as single-channel, time-major
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if u.shape[0] != y.shape[0]:
            raise ValueError("u and y must cover the same number of steps")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def w(self) -> np.ndarray:
        """Interleaved samples (u_k, y_k) as a (T, m+p) array."""
        return np.hstack([self.u, self.y])


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian process/measurement noise levels; zero std disables a channel."""

    process_std: float = 0.0
    measurement_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.process_std < 0 or self.measurement_std < 0:
            raise ValueError("noise levels must be nonnegative")


@dataclass(frozen=True)
class Excitation:
    """Excitation input spec for data collection.

    kind: "gaussian" (amplitude * standard normal) or "prbs" (+-amplitude).
    length: samples per episode. episodes: number of independent records.
    """

    length: int
    amplitude: float = 1.0
    kind: str = "gaussian"
    episodes: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "prbs"):
            raise ValueError(f"unknown excitation kind {self.kind!r}")
        if self.length < 1 or self.episodes < 1:
            raise ValueError("length and episodes must be positive")


def simulate(model, x0, u_seq, noise: NoiseSpec | None = None,
             rng: np.random.Generator | None = None) -> Trajectory:
    """Roll the plant forward under a given input sequence.

    Args:
        model: anything with step_state/output (LTI model or pendulum).
        x0: initial state, length model.n.
        u_seq: (T, m) input sequence (1-D accepted when m == 1).
        noise: optional Gaussian noise spec; its seed is used unless an
            explicit generator is passed.
        rng: optional generator overriding the spec seed, so callers can
            share one stream across several rolls.

    Returns:
        Trajectory of the noisy measured outputs alongside the inputs.
    """
    u_seq = np.asarray(u_seq, dtype=float)
    if u_seq.ndim == 1:
        u_seq = u_seq.reshape(-1, 1)
    T = u_seq.shape[0]
    if u_seq.shape[1] != model.m:
        raise ValueError(f"input width {u_seq.shape[1]} does not match m={model.m}")
    x = np.asarray(x0, dtype=float).reshape(model.n)
    if noise is None:
        noise = NoiseSpec()
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    ys = np.empty((T, model.p))
    for k in range(T):
        y = model.output(x, u_seq[k])
        if noise.measurement_std > 0:
            y = y + noise.measurement_std * rng.standard_normal(model.p)
        ys[k] = y
        x = model.step_state(x, u_seq[k])
        if noise.process_std > 0:
            x = x + noise.process_std * rng.standard_normal(model.n)
    return Trajectory(u=u_seq, y=ys)


def collect_dataset(model, excitation: Excitation,
                    noise: NoiseSpec | None = None,
                    seed: int = 0) -> list[Trajectory]:
    """Collect excitation records from a plant, one Trajectory per episode.

    Episodes use independent substreams of a single seeded generator, so the
    whole dataset is a pure function of (model, excitation, noise, seed).
    Initial states are drawn small to keep marginally stable and nonlinear
    plants in a sane operating range.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(excitation.episodes):
        if excitation.kind == "gaussian":
            u = excitation.amplitude * rng.standard_normal((excitation.length, model.m))
        else:
            u = excitation.amplitude * rng.choice([-1.0, 1.0], size=(excitation.length, model.m))
        x0 = 0.1 * rng.standard_normal(model.n)
        out.append(simulate(model, x0, u, noise=noise, rng=rng))
    return out


def observability_matrix(model: StateSpaceModel, k: int) -> np.ndarray:
    """Stacked maps x -> (y_0, ..., y_{k-1}) under zero input: col(C, CA, ..., CA^{k-1})."""
    rows = []
    Ak = np.eye(model.n)
    for _ in range(k):
        rows.append(model.C @ Ak)
        Ak = model.A @ Ak
    return np.vstack(rows)


def impulse_toeplitz(model: StateSpaceModel, k: int) -> np.ndarray:
    """Block lower-triangular map u_{0:k-1} -> forced response y_{0:k-1}.

    Block (i, j) is D on the diagonal, C A^{i-j-1} B below it, zero above.
    Together with the observability matrix this gives the exact rollout
    identity y = O_k x0 + T_k u.
    """
    p, m, n = model.p, model.m, model.n
    # markov[j] = response at lag j to a unit impulse
    markov = [model.D]
    Ak = np.eye(n)
    for _ in range(k - 1):
        markov.append(model.C @ Ak @ model.B)
        Ak = model.A @ Ak
    T = np.zeros((p * k, m * k))
    for i in range(k):
        for j in range(i + 1):
            T[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j]
    return T


def lag(model: StateSpaceModel, tol: float = 1e-9) -> int:
    """Smallest k such that the k-step observability matrix has rank n.

    Raises if the model is unobservable (no such k <= n exists).
    """
    for k in range(1, model.n + 1):
        O = observability_matrix(model, k)
        s = np.linalg.svd(O, compute_uv=False)
        if np.sum(s > tol * s[0]) == model.n:
            return k
    raise ValueError("model is not observable")


def estimate_state_from_history(model: StateSpaceModel, u_hist, y_hist,
                                tol: float = 1e-9) -> np.ndarray:
    """Reconstruct the current state from an input/output window.

    Solves y_hist = O_h x_past + T_h u_hist for the state at the start of
    the window (least squares, pivoted QR), then rolls it forward through
    the recorded inputs. The window length h must be at least lag(model).

    Returns the state at the first step after the window.
    """
    u_hist = np.asarray(u_hist, dtype=float).reshape(-1, model.m)
    y_hist = np.asarray(y_hist, dtype=float).reshape(-1, model.p)
    h = u_hist.shape[0]
    if y_hist.shape[0] != h:
        raise ValueError("u_hist and y_hist must have equal length")
    if h < lag(model):
        raise ValueError(f"window of {h} steps is shorter than the model lag")
    O = observability_matrix(model, h)
    T = impulse_toeplitz(model, h)
    rhs = y_hist.reshape(-1) - T @ u_hist.reshape(-1)
    x_past, *_ = scipy.linalg.lstsq(O, rhs, lapack_driver="gelsy")
    x = x_past
    for k in range(h):
        x = model.step_state(x, u_hist[k])
    return x


def _controllability_matrix(model: StateSpaceModel) -> np.ndarray:
    cols = []
    Ak = np.eye(model.n)
    for _ in range(model.n):
        cols.append(Ak @ model.B)
        Ak = model.A @ Ak
    return np.hstack(cols)


def make_integrator() -> StateSpaceModel:
    return StateSpaceModel(A=[[1.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], name="integrator")


def make_double_integrator() -> StateSpaceModel:
    return StateSpaceModel(A=[[1.0, 1.0], [0.0, 1.0]], B=[[0.0], [1.0]],
                           C=[[1.0, 0.0]], D=[[0.0]], name="double_integrator")


def make_oscillator(rho: float = 0.9, theta: float = 0.6) -> StateSpaceModel:
    """Damped rotation: complex pole pair rho * exp(+-i theta), strictly stable."""
    c, s = np.cos(theta), np.sin(theta)
    A = rho * np.array([[c, s], [-s, c]])
    return StateSpaceModel(A=A, B=[[0.0], [1.0]], C=[[1.0, 0.0]], D=[[0.0]],
                           name="oscillator")


def make_random_lti(seed: int = 0, n: int = 3, m: int = 1, p: int = 1,
                    rho_max: float = 0.95) -> StateSpaceModel:
    """Seeded random stable LTI plant.

    Draws A with spectral radius rescaled into (0, rho_max], Gaussian B and C,
    and resamples until the n-step controllability and observability matrices
    both have smallest singular value above 1e-6, so every registry plant is
    safely minimal.
    """
    if not (1 <= n <= 8 and 1 <= m <= 4 and 1 <= p <= 4):
        raise ValueError("requested dimensions outside the supported range")
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        A = rng.standard_normal((n, n))
        radius = max(abs(np.linalg.eigvals(A)))
        A *= (rho_max * rng.uniform(0.6, 1.0)) / max(radius, 1e-12)
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = np.zeros((p, m))
        model = StateSpaceModel(A=A, B=B, C=C, D=D, name=f"random_lti(seed={seed},n={n},m={m},p={p})")
        sc = np.linalg.svd(_controllability_matrix(model), compute_uv=False)
        so = np.linalg.svd(observability_matrix(model, n), compute_uv=False)
        if sc[min(n, len(sc)) - 1] > 1e-6 and so[min(n, len(so)) - 1] > 1e-6:
            return model
    raise RuntimeError("could not sample a minimal plant; widen the margins")


def plant_registry() -> dict:
    """Name -> factory map of the built-in plants."""
    return {
        "integrator": make_integrator,
        "double_integrator": make_double_integrator,
        "oscillator": make_oscillator,
        "random_lti": make_random_lti,
        "pendulum": Pendulum,
    }


def get_plant(name: str, **params):
    """Instantiate a registry plant by name with keyword parameters."""
    registry = plant_registry()
    if name not in registry:
        known = ", ".join(sorted(registry))
        raise KeyError(f"unknown plant {name!r}; available: {known}")
    return registry[name](**params)
