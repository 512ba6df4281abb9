"""Dense layers and MLP containers with explicit forward/backward passes.

Forward passes cache what backward needs, so each network object is a
single-writer: one forward, then at most one backward against that forward.
The stacked variants batch K parameter-disjoint copies of a layer through one
BLAS call; slice k of every weight tensor belongs to block k alone, which is
what makes per-block gradient isolation exact rather than approximate.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    lim = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=shape)


class Dense:
    """Affine layer y = x @ W + b."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.n_in = n_in
        self.n_out = n_out
        self.W = _uniform_init(rng, (n_in, n_out), n_in)
        self.b = _uniform_init(rng, (n_out,), n_in)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got {x.shape[-1]}")
        self._x = x
        return x @ self.W + self.b

    def backward(self, dout: np.ndarray, accumulate: bool = True) -> np.ndarray:
        if accumulate:
            self.dW += self._x.T @ dout
            self.db += dout.sum(axis=0)
        return dout @ self.W.T

    def zero_grad(self):
        self.dW[:] = 0.0
        self.db[:] = 0.0

    def named_parameters(self, prefix: str):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]

    def gradients(self):
        return [self.dW, self.db]


class StackedDense:
    """K parameter-disjoint affine layers evaluated as one batched matmul.

    Input is either (R, n_in), shared by every block, or (K, R, n_in) with one
    slice per block. Output is always (K, R, n_out).
    """

    def __init__(self, n_blocks: int, n_in: int, n_out: int, rng: np.random.Generator):
        self.n_blocks = n_blocks
        self.n_in = n_in
        self.n_out = n_out
        self.W = _uniform_init(rng, (n_blocks, n_in, n_out), n_in)
        self.b = _uniform_init(rng, (n_blocks, 1, n_out), n_in)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"expected input width {self.n_in}, got {x.shape[-1]}")
        self._x = x
        return np.matmul(x, self.W) + self.b

    def backward(self, dout: np.ndarray, accumulate: bool = True) -> np.ndarray:
        if accumulate:
            x = self._x
            if x.ndim == 2:
                # shared input: xT (1, n_in, R) broadcasts against (K, R, n_out)
                self.dW += np.matmul(x.T[None, :, :], dout)
            else:
                self.dW += np.matmul(x.transpose(0, 2, 1), dout)
            self.db += dout.sum(axis=1, keepdims=True)
        return np.matmul(dout, self.W.transpose(0, 2, 1))

    def zero_grad(self):
        self.dW[:] = 0.0
        self.db[:] = 0.0

    def named_parameters(self, prefix: str):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]

    def gradients(self):
        return [self.dW, self.db]


class _MlpBase:
    """Shared plumbing for the plain and stacked MLP containers."""

    def __init__(self, layers, activate_final: bool):
        self.layers = layers
        self.activate_final = activate_final
        self._acts = None

    def _activated(self, idx: int) -> bool:
        return idx < len(self.layers) - 1 or self.activate_final

    def forward(self, x: np.ndarray) -> np.ndarray:
        acts = []
        h = x
        for i, layer in enumerate(self.layers):
            h = layer.forward(h)
            if self._activated(i):
                h = kernels.relu(h)
            acts.append(h)
        self._acts = acts
        return h

    def backward(self, dout: np.ndarray, accumulate: bool = True) -> np.ndarray:
        for i in range(len(self.layers) - 1, -1, -1):
            if self._activated(i):
                dout = kernels.relu_bwd(dout, self._acts[i])
            dout = self.layers[i].backward(dout, accumulate=accumulate)
        return dout

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_parameters(self, prefix: str):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend(layer.named_parameters(f"{prefix}.{i}"))
        return out

    def gradients(self):
        out = []
        for layer in self.layers:
            out.extend(layer.gradients())
        return out

    def count_parameters(self) -> int:
        return sum(arr.size for _, arr in self.named_parameters("x"))


class Mlp(_MlpBase):
    """Dense layers with ReLU after every layer except (optionally) the last."""

    def __init__(self, sizes, rng: np.random.Generator, activate_final: bool = False):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        layers = [Dense(sizes[i], sizes[i + 1], rng) for i in range(len(sizes) - 1)]
        super().__init__(layers, activate_final)
        self.sizes = tuple(sizes)


class StackedMlp(_MlpBase):
    """K parameter-disjoint MLPs sharing one batched forward/backward."""

    def __init__(self, n_blocks, sizes, rng: np.random.Generator, activate_final: bool = False):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        layers = [
            StackedDense(n_blocks, sizes[i], sizes[i + 1], rng) for i in range(len(sizes) - 1)
        ]
        super().__init__(layers, activate_final)
        self.n_blocks = n_blocks
        self.sizes = tuple(sizes)
