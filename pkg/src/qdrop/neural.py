"""Fully connected tanh networks with exact input derivatives.

Parameters live in one flat float64 vector laid out layer by layer, each
layer as its weight matrix (row-major, ``out x in``) followed by its bias.
Input derivatives are propagated forward through the layers as Taylor jets
(value, first derivatives, pure second derivatives); gradients with respect
to parameters are taken by reverse-mode autodiff through that computation,
so losses built from second derivatives differentiate exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

DTYPE = torch.float64


@dataclass
class MlpParams:
    layer_sizes: tuple[int, ...]
    theta: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64).ravel()
        if self.theta.size != n_params(self.layer_sizes):
            raise ValueError(
                f"expected {n_params(self.layer_sizes)} parameters, got {self.theta.size}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("non-finite network parameters")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def weights(self) -> list[np.ndarray]:
        return [w for w, _ in _split(self.theta, self.layer_sizes)]

    def biases(self) -> list[np.ndarray]:
        return [b for _, b in _split(self.theta, self.layer_sizes)]

    def copy(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, self.theta.copy(), self.seed)

    def with_theta(self, theta) -> "MlpParams":
        return MlpParams(self.layer_sizes, theta, self.seed)


@dataclass
class NetJet:
    """Network outputs and their input derivatives at a batch of points.

    ``value`` is ``(N, n_out)``, ``grad`` is ``(N, n_out, n_in)`` and
    ``second`` is ``(N, n_out, 2)`` holding d2/dx2 and d2/dy2.
    """

    value: np.ndarray
    grad: np.ndarray
    second: np.ndarray

    @property
    def laplacian(self) -> np.ndarray:
        return self.second.sum(axis=-1)


def n_params(layer_sizes: Sequence[int]) -> int:
    return sum(layer_sizes[j] * layer_sizes[j - 1] + layer_sizes[j]
               for j in range(1, len(layer_sizes)))


def _split(theta, layer_sizes):
    """Slice a flat vector (numpy or torch) into per-layer (W, b) views."""
    out = []
    k = 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        W = theta[k:k + n_in * n_out].reshape(n_out, n_in)
        k += n_in * n_out
        b = theta[k:k + n_out]
        k += n_out
        out.append((W, b))
    return out


def glorot_normal_init(layer_sizes: Sequence[int], rng_seed: int) -> MlpParams:
    """Zero biases and weights drawn from N(0, 2 / (fan_in + fan_out))."""
    layer_sizes = tuple(int(n) for n in layer_sizes)
    if len(layer_sizes) < 3:
        raise ValueError("need at least one hidden layer")
    rng = np.random.default_rng(rng_seed)
    parts = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = np.sqrt(2.0 / (n_in + n_out))
        parts.append(rng.normal(0.0, std, size=(n_out, n_in)).ravel())
        parts.append(np.zeros(n_out))
    return MlpParams(layer_sizes, np.concatenate(parts), seed=rng_seed)


# -- torch kernels -----------------------------------------------------------

def as_tensor(a) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a.to(DTYPE)
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


def torch_forward(theta: torch.Tensor, layer_sizes, x: torch.Tensor) -> torch.Tensor:
    layers = _split(theta, layer_sizes)
    a = x
    for W, b in layers[:-1]:
        a = torch.tanh(a @ W.T + b)
    W, b = layers[-1]
    return a @ W.T + b


def torch_jet(theta: torch.Tensor, layer_sizes, x: torch.Tensor,
              second: str | None = "split", n_space: int = 2):
    """Propagate value, first and second input derivatives through the net.

    Returns ``(value, first, sec)`` where ``value`` is ``(N, out)``, ``first``
    is ``(n_in, N, out)`` and ``sec`` is ``(n_space, N, out)`` for
    ``second="split"``, ``(N, out)`` for ``second="lap"`` (sum of the pure
    second derivatives over the first ``n_space`` inputs), or ``None``.
    Cross derivatives are never formed.
    """
    layers = _split(theta, layer_sizes)
    n_in = layer_sizes[0]
    W0, b0 = layers[0]
    z = x @ W0.T + b0
    # first-layer input derivatives are constant rows of W0; second are zero
    dz = [W0[:, c] for c in range(n_in)]
    d2z = None
    for W, b in layers[1:]:
        a = torch.tanh(z)
        a1 = 1.0 - a * a
        chans = [a] + [a1 * d for d in dz]
        if second == "split":
            a2 = -2.0 * a * a1
            if d2z is None:
                chans += [a2 * dz[c] ** 2 for c in range(n_space)]
            else:
                chans += [a2 * dz[c] ** 2 + a1 * d2z[c] for c in range(n_space)]
        elif second == "lap":
            a2 = -2.0 * a * a1
            g2 = sum(dz[c] ** 2 for c in range(n_space))
            chans.append(a2 * g2 if d2z is None else a2 * g2 + a1 * d2z)
        N = x.shape[0]
        S = torch.stack([c.expand(N, -1) for c in chans])
        Z = S @ W.T
        z = Z[0] + b
        dz = list(Z[1:1 + n_in])
        if second == "split":
            d2z = list(Z[1 + n_in:])
        elif second == "lap":
            d2z = Z[1 + n_in]
    first = torch.stack(dz)
    if second == "split":
        return z, first, torch.stack(d2z)
    return z, first, d2z


# -- numpy-facing API --------------------------------------------------------

def _check_input(params: MlpParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2 or x2.shape[1] != params.n_inputs:
        raise ValueError(
            f"input has shape {x.shape}, network expects {params.n_inputs} inputs")
    return x2, single


def forward(params: MlpParams, x) -> np.ndarray:
    """Network output for one input vector or an ``(N, n_in)`` batch."""
    x2, single = _check_input(params, x)
    with torch.no_grad():
        out = torch_forward(as_tensor(params.theta), params.layer_sizes, as_tensor(x2)).numpy()
    return out[0] if single else out


def input_jet(params: MlpParams, x) -> NetJet:
    """Value, input gradient and pure second derivatives d2/dx2, d2/dy2."""
    x2, single = _check_input(params, x)
    with torch.no_grad():
        v, d1, d2 = torch_jet(as_tensor(params.theta), params.layer_sizes, as_tensor(x2),
                              second="split")
    jet = NetJet(v.numpy(), d1.permute(1, 2, 0).numpy(), d2.permute(1, 2, 0).numpy())
    if single:
        return NetJet(jet.value[0], jet.grad[0], jet.second[0])
    return jet


def loss_gradient(loss: Callable[[torch.Tensor], torch.Tensor], params) -> tuple[float, np.ndarray]:
    """Value and exact gradient of ``loss(theta)`` with respect to all parameters.

    ``loss`` receives the flat float64 parameter tensor and must return a
    scalar tensor; ``params`` is an :class:`MlpParams` or a flat array.
    """
    theta = params.theta if isinstance(params, MlpParams) else np.asarray(params, dtype=np.float64)
    t = torch.tensor(theta, dtype=DTYPE, requires_grad=True)
    value = loss(t)
    if not torch.isfinite(value):
        raise FloatingPointError(f"loss is not finite: {value.item()}")
    (g,) = torch.autograd.grad(value, t)
    return float(value.item()), g.numpy().copy()


def loss_value(loss: Callable[[torch.Tensor], torch.Tensor], params) -> float:
    theta = params.theta if isinstance(params, MlpParams) else np.asarray(params, dtype=np.float64)
    with torch.no_grad():
        return float(loss(as_tensor(theta)).item())


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(params: MlpParams, path, counter: int = 0) -> None:
    """JSON header line followed by the little-endian float64 parameter vector."""
    header = {"layer_sizes": list(params.layer_sizes), "seed": params.seed,
              "counter": int(counter), "n_params": int(params.theta.size)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        fh.write(params.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    payload = raw[nl + 1:]
    if len(payload) != 8 * header["n_params"]:
        raise ValueError("truncated checkpoint payload")
    theta = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return MlpParams(header["layer_sizes"], theta, header.get("seed")), header
