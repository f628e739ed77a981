"""Dynamic average consensus: derivative fields, outputs, and error measures.

All quantities are batched over agents: integrator states X (N,n,n) and
x (N,n), surrogate inputs Cp (N,n,n) and yp (N,n). The quantized and
packet-loss variants share the nominal derivative field; eps = 0 means exact
communication and a missing loss mask means all links up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Topology
from .signals import quantize


@dataclass
class ConsensusState:
    """Per-agent integrator states for the matrix and vector channels."""

    X: np.ndarray  # (N, n, n)
    x: np.ndarray  # (N, n)

    @classmethod
    def zeros(cls, n_agents: int, n: int) -> "ConsensusState":
        # Standard initialization: per-agent sums start (and stay) at zero.
        return cls(X=np.zeros((n_agents, n, n)), x=np.zeros((n_agents, n)))


@dataclass
class ConsensusOutput:
    """Consensus outputs per agent: Chat = Cp - X, yhat = yp - x."""

    Chat: np.ndarray  # (N, n, n)
    yhat: np.ndarray  # (N, n)


def consensus_outputs(state: ConsensusState, Cp: np.ndarray, yp: np.ndarray) -> ConsensusOutput:
    return ConsensusOutput(Chat=Cp - state.X, yhat=yp - state.x)


def effective_laplacian(topo: Topology, loss_mask: np.ndarray | None = None) -> np.ndarray:
    """Laplacian of the topology with lost edges removed symmetrically.

    loss_mask is an (N,N) boolean matrix, True where the link is up; it is
    symmetrized so a down edge vanishes from both endpoints' neighbor sums.
    """
    a = topo.adjacency
    if loss_mask is not None:
        up = np.logical_and(loss_mask, loss_mask.T)
        a = a * up
    return np.diag(a.sum(axis=1)) - a


def dac_derivative(
    state: ConsensusState,
    Cp: np.ndarray,
    yp: np.ndarray,
    topo: Topology,
    k: float,
    eps: float = 0.0,
    loss_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrator-state derivatives (dX, dx) of the consensus block.

    Each agent integrates k times the sum over its active neighbors of the
    difference of transmitted outputs; transmission applies the floor
    quantizer at step eps (identity when eps = 0).
    """
    if k <= 0:
        raise ValueError("consensus gain k must be positive")
    out = consensus_outputs(state, Cp, yp)
    if out.Chat.shape[0] != topo.n_agents:
        raise ValueError("state/topology agent count mismatch")
    qc = quantize(out.Chat, eps)
    qy = quantize(out.yhat, eps)
    lap = effective_laplacian(topo, loss_mask)
    dX = k * np.einsum("ij,jab->iab", lap, qc)
    dx = k * (lap @ qy)
    return dX, dx


def average_reference(Cp: np.ndarray, yp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Network averages of the surrogate signals (the ideal consensus target)."""
    return Cp.mean(axis=0), yp.mean(axis=0)


def spectral_norms(mats: np.ndarray) -> np.ndarray:
    """Induced 2-norm of each matrix in a batch (...,m,n)."""
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def consensus_error(
    output: ConsensusOutput, Cbar: np.ndarray, ybar: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-agent deviations from the network average: (matrix norms, vector norms)."""
    cerr = spectral_norms(output.Chat - Cbar)
    yerr = np.linalg.norm(output.yhat - ybar, axis=-1)
    return cerr, yerr


def residual(output: ConsensusOutput, theta: np.ndarray) -> np.ndarray:
    """Regression-identity residual r_i = yhat_i - Chat_i theta, shape (N,n).

    Identically zero for zero-initialized, noiseless, non-quantized runs; under
    quantization its norm is diagnosed against the r(eps) ceiling.
    """
    theta = np.asarray(theta, dtype=float)
    return output.yhat - np.einsum("aij,j->ai", output.Chat, theta)
