"""Tied-weight ReLU autoencoder with exact gradients and Hessian-vector products.

With weights ``W_1 (h x d), W_2..W_l (h x h)`` and biases ``b_1..b_2l`` the
encoder computes ``a = relu(W_l ... relu(W_1 z + b_1) ... + b_l)`` and the
decoder reuses the transposed matrices in reverse order,
``zhat = W_1^T relu(... relu(W_l^T a + b_{l+1}) ...) + b_2l``. The output layer
is affine. The loss is the batch mean of ``||z - zhat||^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np


class NonFiniteActivation(FloatingPointError):
    def __init__(self, layer: int):
        super().__init__(f"non-finite activation at layer {layer}")
        self.layer = layer


@dataclass(frozen=True)
class Shape:
    ell: int
    d: int
    h: int

    def __post_init__(self):
        if self.ell < 1 or self.d < 1 or self.h < 1:
            raise ValueError("ell, d and h must be >= 1")

    @property
    def weight_shapes(self) -> List[Tuple[int, int]]:
        return [(self.h, self.d)] + [(self.h, self.h)] * (self.ell - 1)

    @property
    def bias_sizes(self) -> List[int]:
        # encoder b_1..b_l, decoder hidden b_{l+1}..b_{2l-1}, output b_{2l}
        return [self.h] * self.ell + [self.h] * (self.ell - 1) + [self.d]

    @property
    def size(self) -> int:
        return self.h * self.d + (self.ell - 1) * self.h ** 2 + self.ell * self.h + (self.ell - 1) * self.h + self.d


@dataclass
class AutoencoderParams:
    shape: Shape
    W: List[np.ndarray]
    b: List[np.ndarray]

    @property
    def flat(self) -> np.ndarray:
        return flatten(self)


def flatten(params: AutoencoderParams) -> np.ndarray:
    return np.concatenate([w.ravel() for w in params.W] + [b.ravel() for b in params.b])


def unflatten(shape: Shape, x) -> AutoencoderParams:
    """Views into ``x`` (row-major ``vec``); no copy is made."""
    x = np.asarray(x, dtype=float)
    if x.shape != (shape.size,):
        raise ValueError(f"expected {shape.size} parameters, got shape {x.shape}")
    W, b, pos = [], [], 0
    for r, c in shape.weight_shapes:
        W.append(x[pos:pos + r * c].reshape(r, c))
        pos += r * c
    for n in shape.bias_sizes:
        b.append(x[pos:pos + n])
        pos += n
    return AutoencoderParams(shape, W, b)


def glorot_init(rng: np.random.Generator, ell: int, d: int, h: int) -> AutoencoderParams:
    """Uniform ``[-limit, limit]`` weights with ``limit = sqrt(6/(fan_in+fan_out))``; zero biases."""
    shape = Shape(ell, d, h)
    W = []
    for fan_out, fan_in in shape.weight_shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
    b = [np.zeros(n) for n in shape.bias_sizes]
    return AutoencoderParams(shape, W, b)


def _layers(shape: Shape):
    """(weight index, transposed, bias index, relu) for each layer in order.

    Rows are examples, so an encoder layer multiplies by ``W_i^T`` and a
    decoder layer by ``W_i``.
    """
    ell = shape.ell
    layers = [(i, True, i, True) for i in range(ell)]
    for j in range(ell):
        w = ell - 1 - j
        layers.append((w, False, ell + j, j < ell - 1))
    return layers


def _mat(W, idx, transposed):
    return W[idx].T if transposed else W[idx]


def forward(params: AutoencoderParams, z) -> np.ndarray:
    """Reconstruction of one example (``d``-vector) or a batch (``n x d``)."""
    z = np.asarray(z, dtype=float)
    out = z[None, :] if z.ndim == 1 else z
    for k, (wi, tr, bi, relu) in enumerate(_layers(params.shape)):
        out = out @ _mat(params.W, wi, tr) + params.b[bi]
        if relu:
            out = np.maximum(out, 0.0)
    return out[0] if z.ndim == 1 else out


def _pass(shape: Shape, x: np.ndarray, Z: np.ndarray, vdir: Optional[np.ndarray] = None,
          want_grad: bool = True):
    """Forward, reverse and (with ``vdir``) R-operator passes.

    Returns ``(loss, grad, hvp)``; the latter two may be ``None``.
    """
    p = unflatten(shape, x)
    rp = unflatten(shape, vdir) if vdir is not None else None
    layers = _layers(shape)
    n = Z.shape[0]

    inputs, masks, r_inputs = [], [], []
    out = Z
    r_out = np.zeros_like(Z) if rp is not None else None
    for k, (wi, tr, bi, relu) in enumerate(layers):
        M = _mat(p.W, wi, tr)
        inputs.append(out)
        pre = out @ M + p.b[bi]
        if rp is not None:
            r_inputs.append(r_out)
            r_pre = r_out @ M + out @ _mat(rp.W, wi, tr) + rp.b[bi]
        if not np.all(np.isfinite(pre)):
            raise NonFiniteActivation(k + 1)
        if relu:
            mask = pre > 0.0  # derivative at the kink is 0
            masks.append(mask)
            out = pre * mask
            if rp is not None:
                r_out = r_pre * mask
        else:
            masks.append(None)
            out = pre
            if rp is not None:
                r_out = r_pre
    resid = out - Z
    loss = float(np.sum(resid * resid)) / n
    if not want_grad and rp is None:
        return loss, None, None

    gW = [np.zeros_like(w) for w in p.W]
    gb = [np.zeros_like(b) for b in p.b]
    hW = [np.zeros_like(w) for w in p.W] if rp is not None else None
    hb = [np.zeros_like(b) for b in p.b] if rp is not None else None

    dout = (2.0 / n) * resid
    r_dout = (2.0 / n) * r_out if rp is not None else None
    for k in range(len(layers) - 1, -1, -1):
        wi, tr, bi, relu = layers[k]
        if relu:
            dout = dout * masks[k]
            if rp is not None:
                r_dout = r_dout * masks[k]
        X = inputs[k]
        M = _mat(p.W, wi, tr)
        gM = X.T @ dout
        gW[wi] += gM.T if tr else gM
        gb[bi] += dout.sum(axis=0)
        if rp is not None:
            RX = r_inputs[k]
            RM = _mat(rp.W, wi, tr)
            hM = RX.T @ dout + X.T @ r_dout
            hW[wi] += hM.T if tr else hM
            hb[bi] += r_dout.sum(axis=0)
            r_dout = r_dout @ M.T + dout @ RM.T
        dout = dout @ M.T

    g = np.concatenate([w.ravel() for w in gW] + list(gb))
    hv = np.concatenate([w.ravel() for w in hW] + list(hb)) if rp is not None else None
    return loss, g, hv


def batch_loss(shape: Shape, x, Z) -> float:
    return _pass(shape, np.asarray(x, dtype=float), np.atleast_2d(Z), want_grad=False)[0]


def batch_loss_and_grad(params_or_shape, batch, x=None):
    """Mean squared reconstruction loss and its gradient w.r.t. the flat parameters.

    Accepts either ``(params, batch)`` or ``(shape, batch, flat_x)``. Each tied
    matrix collects the sum of its encoder and decoder contributions.
    """
    shape, x = _resolve(params_or_shape, x)
    loss, g, _ = _pass(shape, x, np.atleast_2d(np.asarray(batch, dtype=float)))
    return loss, g


def pearlmutter_hvp(params_or_shape, batch, vdir, x=None) -> np.ndarray:
    """Exact Hessian-vector product by forward differentiation of backprop."""
    shape, x = _resolve(params_or_shape, x)
    vdir = np.asarray(vdir, dtype=float)
    if vdir.shape != x.shape:
        raise ValueError("direction must match the parameter vector")
    return _pass(shape, x, np.atleast_2d(np.asarray(batch, dtype=float)), vdir=vdir)[2]


def _resolve(params_or_shape, x):
    if isinstance(params_or_shape, AutoencoderParams):
        return params_or_shape.shape, flatten(params_or_shape)
    if x is None:
        raise ValueError("a flat parameter vector is needed with a bare shape")
    return params_or_shape, np.asarray(x, dtype=float)


def kink_distance(shape: Shape, x, Z) -> float:
    """Smallest ``|pre-activation|`` over all ReLU units and batch rows."""
    p = unflatten(shape, x)
    out = np.atleast_2d(Z)
    best = np.inf
    for wi, tr, bi, relu in _layers(shape):
        pre = out @ _mat(p.W, wi, tr) + p.b[bi]
        if relu:
            best = min(best, float(np.min(np.abs(pre))))
            out = np.maximum(pre, 0.0)
        else:
            out = pre
    return best
