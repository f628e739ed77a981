"""Regressor generation, measurement synthesis, surrogates, and the quantizer.

Each regressor entry is a sinusoid ``offset + sin_amp*sin(w t) + cos_amp*cos(w t)``
with coefficients sampled once per scenario from a seeded counter-based RNG
(Philox). Noise and packet-loss draws use independent seed-derived streams so
enabling one never perturbs another.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Stream tags appended to the scenario seed; one independent stream per purpose.
_STREAM_COEFFS = 0
_STREAM_NOISE = 1
_STREAM_LOSS = 2


def _philox(key: list[int]) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def coefficient_stream(seed: int) -> np.random.Generator:
    return _philox([seed, _STREAM_COEFFS])


def noise_stream(seed: int, agent: int) -> np.random.Generator:
    return _philox([seed, _STREAM_NOISE, agent])


def loss_stream(seed: int) -> np.random.Generator:
    return _philox([seed, _STREAM_LOSS])


@dataclass(frozen=True)
class RegressorGenerator:
    """Per-agent time-varying regressor rows built from sinusoidal tables.

    Coefficient arrays are per-agent tuples of shape (p_i, n): ``offset`` is
    the constant part, ``sin_amp``/``cos_amp`` the sine/cosine amplitudes and
    ``freq`` the angular frequency of each entry.
    """

    n_params: int
    rows_per_agent: tuple[int, ...]
    offset: tuple[np.ndarray, ...]
    sin_amp: tuple[np.ndarray, ...]
    cos_amp: tuple[np.ndarray, ...]
    freq: tuple[np.ndarray, ...]
    seed: int | None = None

    @property
    def n_agents(self) -> int:
        return len(self.rows_per_agent)

    @property
    def uniform_rows(self) -> bool:
        return len(set(self.rows_per_agent)) == 1

    @cached_property
    def _batched(self):
        # (N, p, n) coefficient stacks; only valid when all p_i are equal.
        return (
            np.stack(self.offset),
            np.stack(self.sin_amp),
            np.stack(self.cos_amp),
            np.stack(self.freq),
        )

    def evaluate(self, agent: int, t: float) -> np.ndarray:
        a, b, d, w = (
            self.offset[agent],
            self.sin_amp[agent],
            self.cos_amp[agent],
            self.freq[agent],
        )
        return a + b * np.sin(w * t) + d * np.cos(w * t)

    def evaluate_dot(self, agent: int, t: float) -> np.ndarray:
        """Analytic time derivative of the regressor of one agent."""
        b, d, w = self.sin_amp[agent], self.cos_amp[agent], self.freq[agent]
        return w * (b * np.cos(w * t) - d * np.sin(w * t))

    def evaluate_all(self, t: float) -> np.ndarray:
        """All agents' regressors at time t, shape (N, p, n). Uniform rows only."""
        if not self.uniform_rows:
            raise ValueError("evaluate_all requires uniform rows per agent")
        a, b, d, w = self._batched
        return a + b * np.sin(w * t) + d * np.cos(w * t)

    def evaluate_all_dot(self, t: float) -> np.ndarray:
        if not self.uniform_rows:
            raise ValueError("evaluate_all_dot requires uniform rows per agent")
        _, b, d, w = self._batched
        return w * (b * np.cos(w * t) - d * np.sin(w * t))

    def entry_bound(self) -> float:
        """Upper bound on |entry| valid for all t: max over entries of |A|+|B|+|D|."""
        return max(
            float(np.max(np.abs(a) + np.abs(b) + np.abs(d)))
            for a, b, d in zip(self.offset, self.sin_amp, self.cos_amp)
        )

    def to_jsonable(self) -> dict:
        """Dump coefficient tables for exact reproducibility."""
        return {
            "n_params": self.n_params,
            "rows_per_agent": list(self.rows_per_agent),
            "offset": [a.tolist() for a in self.offset],
            "sin_amp": [a.tolist() for a in self.sin_amp],
            "cos_amp": [a.tolist() for a in self.cos_amp],
            "freq": [a.tolist() for a in self.freq],
            "seed": self.seed,
        }

    @classmethod
    def from_tables(cls, offset, sin_amp, cos_amp, freq, seed=None) -> "RegressorGenerator":
        """Build a generator from explicit per-agent coefficient tables."""
        off = tuple(np.asarray(a, dtype=float) for a in offset)
        samp = tuple(np.asarray(a, dtype=float) for a in sin_amp)
        camp = tuple(np.asarray(a, dtype=float) for a in cos_amp)
        frq = tuple(np.asarray(a, dtype=float) for a in freq)
        ref = [a.shape for a in off]
        for group in (samp, camp, frq):
            if len(group) != len(off) or [a.shape for a in group] != ref:
                raise ValueError("coefficient tables have inconsistent shapes")
        n = off[0].shape[1]
        if any(a.shape[1] != n for a in off):
            raise ValueError("all agents must share n columns")
        return cls(
            n_params=n,
            rows_per_agent=tuple(a.shape[0] for a in off),
            offset=off,
            sin_amp=samp,
            cos_amp=camp,
            freq=frq,
            seed=seed,
        )


def sample_coefficients(
    n: int,
    n_agents: int,
    rows,
    coeff_range,
    freq_range,
    seed: int,
) -> RegressorGenerator:
    """Sample a RegressorGenerator with i.i.d. uniform coefficients.

    ``rows`` is either a single int (same p for every agent) or a sequence of
    per-agent row counts. Sampling order is fixed (per agent: offset, sine,
    cosine amplitudes, then frequencies) so the same seed always reproduces
    the same tables.
    """
    if n < 1 or n_agents < 1:
        raise ValueError("dimensions must be positive")
    if isinstance(rows, int):
        rows = [rows] * n_agents
    rows = [int(p) for p in rows]
    if len(rows) != n_agents or any(p < 1 for p in rows):
        raise ValueError("rows must give a positive row count per agent")
    clo, chi = float(coeff_range[0]), float(coeff_range[1])
    flo, fhi = float(freq_range[0]), float(freq_range[1])
    for lo, hi in ((clo, chi), (flo, fhi)):
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise ValueError(f"invalid range [{lo}, {hi}]")

    rng = coefficient_stream(seed)
    offset, sin_amp, cos_amp, freq = [], [], [], []
    for p in rows:
        offset.append(rng.uniform(clo, chi, size=(p, n)))
        sin_amp.append(rng.uniform(clo, chi, size=(p, n)))
        cos_amp.append(rng.uniform(clo, chi, size=(p, n)))
        freq.append(rng.uniform(flo, fhi, size=(p, n)))
    return RegressorGenerator(
        n_params=n,
        rows_per_agent=tuple(rows),
        offset=tuple(offset),
        sin_amp=tuple(sin_amp),
        cos_amp=tuple(cos_amp),
        freq=tuple(freq),
        seed=seed,
    )


def evaluate_regressor(gen: RegressorGenerator, agent: int, t: float) -> np.ndarray:
    """Regressor matrix C_i(t) of one agent, shape (p_i, n)."""
    if not (0 <= agent < gen.n_agents):
        raise IndexError(f"agent {agent} out of range")
    return gen.evaluate(agent, t)


@dataclass(frozen=True)
class Measurement:
    """One agent's sensor sample: output vector y, regressor C, and time t."""

    y: np.ndarray
    C: np.ndarray
    t: float


def measure(
    gen: RegressorGenerator,
    theta: np.ndarray,
    agent: int,
    t: float,
    noise_sd: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Measurement:
    """Synthesize y_i(t) = C_i(t) theta, plus optional Gaussian noise."""
    c = evaluate_regressor(gen, agent, t)
    theta = np.asarray(theta, dtype=float)
    y = c @ theta
    if noise_sd > 0.0:
        if rng is None:
            raise ValueError("noise_sd > 0 requires an rng")
        y = y + noise_sd * rng.standard_normal(c.shape[0])
    return Measurement(y=y, C=c, t=t)


@dataclass(frozen=True)
class Surrogate:
    """Premultiplied regression data: Cp = C^T C (n x n PSD), yp = C^T y."""

    Cp: np.ndarray
    yp: np.ndarray


def surrogate(m: Measurement) -> Surrogate:
    return Surrogate(Cp=m.C.T @ m.C, yp=m.C.T @ m.y)


def surrogate_all(c_all: np.ndarray, y_all: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched surrogate construction: (N,p,n),(N,p) -> (N,n,n),(N,n)."""
    cp = np.einsum("api,apj->aij", c_all, c_all)
    yp = np.einsum("api,ap->ai", c_all, y_all)
    return cp, yp


def stack_centralized(measurements) -> tuple[np.ndarray, np.ndarray]:
    """Row-stack per-agent measurements into the centralized (C, y) pair."""
    n_cols = {m.C.shape[1] for m in measurements}
    if len(n_cols) != 1:
        raise ValueError(f"agents disagree on n: {sorted(n_cols)}")
    c = np.vstack([m.C for m in measurements])
    y = np.concatenate([np.atleast_1d(m.y) for m in measurements])
    if y.shape[0] != c.shape[0]:
        raise ValueError("stacked y and C row counts differ")
    return c, y


def quantize(value, eps: float):
    """Floor quantizer Q(s) = eps*floor(s/eps), applied element-wise.

    eps = 0 means identity (exact communication). The error is one-sided:
    0 <= s - Q(s) < eps.
    """
    if eps < 0:
        raise ValueError("quantization step must be nonnegative")
    arr = np.asarray(value, dtype=float)
    if eps == 0.0:
        return arr
    return eps * np.floor(arr / eps)
