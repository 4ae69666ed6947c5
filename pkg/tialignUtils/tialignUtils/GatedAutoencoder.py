# MIT License
#
# Copyright (c) 2025 Hammerspace, Inc
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.
# -----------------------------------------------------------------------------
# GatedAutoencoder.py
#
# The gated autoencoder that learns interval (mapping) codes between an
# n-frame context and the following frame.
#
#   factors    fu = U x_ctx,  fv = V x_tgt                   (F)
#   mapping    m  = tanh(W1 tanh(W0 (fu * fv)))              (H2)
#   recon      x~ = g(V^T ((W0^T W1^T m) * U x_ctx'))        (M)
#
# x_ctx' is the (optionally shifted) context, g is the output nonlinearity
# (identity by default, tanh optional). Everything works on stacked batches
# (rows are windows); the single-window functions wrap the batch ones.
#
# Losses of a batch are SUMS over its windows. Each window's total carries the
# full parameter penalties (L2, column-norm deviation) plus its own sparsity
# term, so a batch of B windows pays the parameter penalties B times.

import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from tialignUtils.Errors import CheckpointError, IncompatibleModel, ShapeMismatch
from tialignUtils.SignalFrontend import NGramWindow

# Define the name of the Program, Description, and Version

progname = "GatedAutoencoder"
progdesc = "Gated autoencoder for transposition-invariant interval codes"
progvers = "1.0.0"

GAEM_MAGIC = b"GAEM"
GAEM_VERSION = 1
GAEM_HEADER = struct.Struct("<4sIIIIIIQ")
GAEM_CRC = struct.Struct("<I")

OUTPUT_NONLINEARITIES = ("identity", "tanh")


@dataclass
class GaeParams:
    U: np.ndarray       # F x nM
    V: np.ndarray       # F x M
    W0: np.ndarray      # H1 x F
    W1: np.ndarray      # H2 x H1
    n: int
    seed: int = 0

    def __post_init__(self):
        F, nM = self.U.shape
        if (self.n <= 0 or nM % self.n != 0 or self.V.shape != (F, nM // self.n)
                or self.W0.shape[1] != F or self.W1.shape[1] != self.W0.shape[0]):
            raise ShapeMismatch(f"shape mismatch: U{self.U.shape} V{self.V.shape}"
                                f" W0{self.W0.shape} W1{self.W1.shape} n={self.n}")

    @property
    def M(self) -> int:
        return self.V.shape[1]

    @property
    def F(self) -> int:
        return self.U.shape[0]

    @property
    def H1(self) -> int:
        return self.W0.shape[0]

    @property
    def H2(self) -> int:
        return self.W1.shape[0]

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.U, self.V, self.W0, self.W1)

    def copy(self) -> "GaeParams":
        return replace(self, U=self.U.copy(), V=self.V.copy(), W0=self.W0.copy(), W1=self.W1.copy())

    def astype(self, dtype) -> "GaeParams":
        return replace(self, U=self.U.astype(dtype), V=self.V.astype(dtype),
                       W0=self.W0.astype(dtype), W1=self.W1.astype(dtype))

    def zeros_like(self) -> "GaeParams":
        return replace(self, U=np.zeros_like(self.U), V=np.zeros_like(self.V),
                       W0=np.zeros_like(self.W0), W1=np.zeros_like(self.W1))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def __add__(self, other: "GaeParams") -> "GaeParams":
        return replace(self, U=self.U + other.U, V=self.V + other.V,
                       W0=self.W0 + other.W0, W1=self.W1 + other.W1)

    def scaled(self, factor: float) -> "GaeParams":
        return replace(self, U=self.U * factor, V=self.V * factor,
                       W0=self.W0 * factor, W1=self.W1 * factor)

    def equals(self, other: "GaeParams") -> bool:
        return (self.n == other.n and
                all(a.shape == b.shape and a.dtype == b.dtype and np.array_equal(a, b)
                    for a, b in zip(self.arrays(), other.arrays())))


@dataclass(frozen=True)
class Regularizers:
    l2: float = 1e-4
    sparsity: float = 1e-4
    norm_deviation: float = 1e-4
    max_norm: float = 2.0


NO_REGULARIZATION = Regularizers(l2=0.0, sparsity=0.0, norm_deviation=0.0, max_norm=np.inf)


@dataclass
class LossBreakdown:
    mse: float = 0.0
    l2_penalty: float = 0.0
    sparsity_penalty: float = 0.0
    norm_deviation_penalty: float = 0.0
    count: int = 0

    @property
    def total(self) -> float:
        return self.mse + self.l2_penalty + self.sparsity_penalty + self.norm_deviation_penalty

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(mse=self.mse + other.mse,
                             l2_penalty=self.l2_penalty + other.l2_penalty,
                             sparsity_penalty=self.sparsity_penalty + other.sparsity_penalty,
                             norm_deviation_penalty=self.norm_deviation_penalty + other.norm_deviation_penalty,
                             count=self.count + other.count)

    def mean(self) -> "LossBreakdown":
        k = max(self.count, 1)
        return LossBreakdown(mse=self.mse / k, l2_penalty=self.l2_penalty / k,
                             sparsity_penalty=self.sparsity_penalty / k,
                             norm_deviation_penalty=self.norm_deviation_penalty / k,
                             count=1)


def default_factors(n: int) -> int:
    return {8: 256, 16: 512}.get(n, 32 * n)


def init_params(n: int,
                M: int = 120,
                F: Optional[int] = None,
                H1: int = 128,
                H2: int = 64,
                seed: int = 0,
                dtype=np.float64) -> GaeParams:
    '''
    Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)), drawn in the order
    U, V, W0, W1 from one seeded generator.
    '''

    F = default_factors(n) if F is None else F
    rng = np.random.default_rng(seed)

    def glorot(rows, cols):
        s = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-s, s, size=(rows, cols)).astype(dtype)

    return GaeParams(U=glorot(F, n * M), V=glorot(F, M), W0=glorot(H1, F), W1=glorot(H2, H1),
                     n=n, seed=int(seed))


# ----------------------------------------------------------------------------
# Shape handling

def _stack(params: GaeParams, contexts, targets) -> Tuple[np.ndarray, np.ndarray]:

    contexts = np.asarray(contexts, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)

    if contexts.ndim == 2:
        contexts = contexts[np.newaxis]
    if targets.ndim == 1:
        targets = targets[np.newaxis]

    if (contexts.ndim != 3 or contexts.shape[1:] != (params.n, params.M)
            or targets.shape[1:] != (params.M,) or targets.shape[0] != contexts.shape[0]):
        raise ShapeMismatch(f"shape mismatch: contexts {contexts.shape}, targets {targets.shape}"
                            f" for n={params.n}, M={params.M}")

    return contexts, targets


def _shift_contexts(contexts: np.ndarray, delta: int) -> np.ndarray:

    # Each time step is shifted on its own, before linearization

    return np.roll(contexts, -int(delta), axis=2)


def _output(x: np.ndarray, nonlinearity: str) -> np.ndarray:
    if nonlinearity == "identity":
        return x
    if nonlinearity == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown output nonlinearity '{nonlinearity}'")


# ----------------------------------------------------------------------------
# Inference and reconstruction

def infer_mapping_batch(params: GaeParams, contexts, targets) -> np.ndarray:

    contexts, targets = _stack(params, contexts, targets)
    xc = contexts.reshape(len(contexts), -1)
    factors = (xc @ params.U.T) * (targets @ params.V.T)

    return np.tanh(np.tanh(factors @ params.W0.T) @ params.W1.T)


def infer_mapping(params: GaeParams, window: NGramWindow) -> np.ndarray:
    return infer_mapping_batch(params, window.context, window.target)[0]


def reconstruct_batch(params: GaeParams, contexts, mappings, nonlinearity: str = "identity") -> np.ndarray:

    contexts = np.asarray(contexts, dtype=np.float64)
    mappings = np.atleast_2d(np.asarray(mappings, dtype=np.float64))
    if contexts.ndim == 2:
        contexts = contexts[np.newaxis]
    if contexts.shape[1:] != (params.n, params.M) or mappings.shape != (len(contexts), params.H2):
        raise ShapeMismatch(f"shape mismatch: contexts {contexts.shape}, mappings {mappings.shape}")

    gates = (mappings @ params.W1) @ params.W0
    xc = contexts.reshape(len(contexts), -1)

    return _output((gates * (xc @ params.U.T)) @ params.V, nonlinearity)


def reconstruct(params: GaeParams, context, mapping, nonlinearity: str = "identity") -> np.ndarray:
    return reconstruct_batch(params, context, mapping, nonlinearity)[0]


# ----------------------------------------------------------------------------
# Regularizers

def column_norms(matrix: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(matrix * matrix, axis=0))


def l2_penalty(params: GaeParams, weight: float) -> float:
    return float(weight * (np.sum(params.U * params.U) + np.sum(params.V * params.V)))


def norm_deviation_penalty(params: GaeParams, weight: float) -> float:

    total = 0.0
    for matrix in (params.U, params.V):
        norms = column_norms(matrix)
        total += float(np.sum((norms - norms.mean()) ** 2))

    return weight * total


def _norm_deviation_gradient(matrix: np.ndarray, weight: float) -> np.ndarray:

    # The mean's own derivative drops out because deviations sum to zero

    norms = column_norms(matrix)
    safe = np.where(norms > 0.0, norms, 1.0)
    coeff = np.where(norms > 0.0, 2.0 * weight * (norms - norms.mean()) / safe, 0.0)

    return matrix * coeff[np.newaxis, :]


def project_norms(params: GaeParams, max_norm: float) -> GaeParams:
    '''
    Rescale every column of U and V whose norm exceeds max_norm down to it.
    '''

    def clip(matrix):
        norms = column_norms(matrix)
        scale = np.where(norms > max_norm, max_norm / np.where(norms > 0.0, norms, 1.0), 1.0)
        return matrix * scale[np.newaxis, :]

    return replace(params, U=clip(params.U), V=clip(params.V))


def apply_regularizers(params: GaeParams, reg: Regularizers) -> LossBreakdown:
    '''
    Parameter penalties of one window (sparsity depends on activations and is
    added by the loss functions).
    '''

    return LossBreakdown(l2_penalty=l2_penalty(params, reg.l2),
                         norm_deviation_penalty=norm_deviation_penalty(params, reg.norm_deviation))


# ----------------------------------------------------------------------------
# Losses and gradients

def make_dropout_masks(rng: np.random.Generator, count: int, size: int, rate: float) -> np.ndarray:
    '''
    Inverted dropout masks: kept units are scaled by 1 / (1 - rate).
    '''

    if rate <= 0.0:
        return np.ones((count, size))
    keep = rng.random((count, size)) >= rate

    return keep / (1.0 - rate)


def loss_and_gradients(params: GaeParams,
                       contexts,
                       targets,
                       delta: int = 0,
                       masks: Optional[np.ndarray] = None,
                       reg: Regularizers = Regularizers(),
                       nonlinearity: str = "identity",
                       need_gradients: bool = True) -> Tuple[LossBreakdown, Optional[GaeParams]]:
    '''
    Summed transposed reconstruction loss of a batch and its analytic
    gradient. The mapping comes from the unshifted (masked) pair; the
    reconstruction uses the masked context shifted by delta and is compared
    against the target shifted by delta. delta = 0 is the plain objective.
    '''

    contexts, targets = _stack(params, contexts, targets)
    B = len(contexts)
    M = params.M
    U, V, W0, W1 = params.arrays()

    if masks is not None:
        masks = np.asarray(masks, dtype=np.float64).reshape(B, params.n, M)
        contexts = contexts * masks

    xc = contexts.reshape(B, -1)
    xs = _shift_contexts(contexts, delta).reshape(B, -1)
    y = targets
    t = np.roll(targets, -int(delta), axis=1)

    # Mapping inference

    fu = xc @ U.T
    fv = y @ V.T
    p = fu * fv
    h0 = np.tanh(p @ W0.T)
    m = np.tanh(h0 @ W1.T)

    # Reconstruction from the shifted context

    s = m @ W1
    r = s @ W0
    fus = xs @ U.T
    q = r * fus
    xr = q @ V
    out = _output(xr, nonlinearity)

    err = out - t
    penalties = apply_regularizers(params, reg)
    loss = LossBreakdown(mse=float(np.sum(err * err)) / M,
                         l2_penalty=B * penalties.l2_penalty,
                         sparsity_penalty=float(reg.sparsity * np.sum(np.abs(m))),
                         norm_deviation_penalty=B * penalties.norm_deviation_penalty,
                         count=B)

    if not need_gradients:
        return loss, None

    d_out = (2.0 / M) * err
    d_xr = d_out if nonlinearity == "identity" else d_out * (1.0 - out * out)

    gV = q.T @ d_xr
    d_q = d_xr @ V.T
    d_r = d_q * fus
    gU = (d_q * r).T @ xs

    gW0 = s.T @ d_r
    d_s = d_r @ W0.T
    gW1 = m.T @ d_s

    d_m = d_s @ W1.T + reg.sparsity * np.sign(m)
    d_a1 = d_m * (1.0 - m * m)
    gW1 += d_a1.T @ h0
    d_a0 = (d_a1 @ W1) * (1.0 - h0 * h0)
    gW0 += d_a0.T @ p
    d_p = d_a0 @ W0
    gU += (d_p * fv).T @ xc
    gV += (d_p * fu).T @ y

    gU += B * (2.0 * reg.l2 * U + _norm_deviation_gradient(U, reg.norm_deviation))
    gV += B * (2.0 * reg.l2 * V + _norm_deviation_gradient(V, reg.norm_deviation))

    return loss, replace(params, U=gU, V=gV, W0=gW0, W1=gW1)


def loss_plain(params: GaeParams,
               window: NGramWindow,
               reg: Regularizers = Regularizers(),
               nonlinearity: str = "identity") -> LossBreakdown:

    loss, _ = loss_and_gradients(params, window.context, window.target, 0,
                                 reg=reg, nonlinearity=nonlinearity, need_gradients=False)
    return loss


def loss_transposed(params: GaeParams,
                    window: NGramWindow,
                    delta: int,
                    reg: Regularizers = Regularizers(),
                    nonlinearity: str = "identity") -> LossBreakdown:

    loss, _ = loss_and_gradients(params, window.context, window.target, delta,
                                 reg=reg, nonlinearity=nonlinearity, need_gradients=False)
    return loss


def gradients(params: GaeParams,
              window: NGramWindow,
              delta: int = 0,
              dropout_mask: Optional[np.ndarray] = None,
              reg: Regularizers = Regularizers(),
              nonlinearity: str = "identity") -> GaeParams:

    _, grads = loss_and_gradients(params, window.context, window.target, delta,
                                  masks=dropout_mask, reg=reg, nonlinearity=nonlinearity)
    return grads


# ----------------------------------------------------------------------------
# Checkpoints: header, then U, V, W0, W1 as little-endian f32, then CRC32

def checkpoint_bytes(params: GaeParams) -> bytes:

    header = GAEM_HEADER.pack(GAEM_MAGIC, GAEM_VERSION, params.n, params.M, params.F,
                              params.H1, params.H2, int(params.seed))
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in params.arrays())

    return header + payload + GAEM_CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF)


def save_checkpoint(path: Union[str, Path], params: GaeParams, logger=None):

    data = checkpoint_bytes(params)
    with open(path, "wb") as fp:
        fp.write(data)

    if logger is not None:
        logger.debug(f"Wrote checkpoint {path} ({len(data)} bytes, n={params.n}, F={params.F})")


def load_checkpoint(path: Union[str, Path], n: Optional[int] = None, M: Optional[int] = None) -> GaeParams:
    '''
    Load a checkpoint as float32 parameters. n / M, when given, must match
    the stored model.
    '''

    try:
        with open(path, "rb") as fp:
            raw = fp.read()
    except OSError as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from e

    if len(raw) < GAEM_HEADER.size + GAEM_CRC.size:
        raise CheckpointError(f"corrupt checkpoint: {path} is truncated")

    magic, version, cn, cM, cF, cH1, cH2, seed = GAEM_HEADER.unpack_from(raw)
    if magic != GAEM_MAGIC or version != GAEM_VERSION:
        raise CheckpointError(f"corrupt checkpoint: {path} has a bad header")

    shapes = [(cF, cn * cM), (cF, cM), (cH1, cF), (cH2, cH1)]
    payload_size = 4 * sum(r * c for r, c in shapes)
    if len(raw) != GAEM_HEADER.size + payload_size + GAEM_CRC.size:
        raise CheckpointError(f"corrupt checkpoint: {path} has the wrong size")

    payload = raw[GAEM_HEADER.size:GAEM_HEADER.size + payload_size]
    (crc,) = GAEM_CRC.unpack_from(raw, GAEM_HEADER.size + payload_size)
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise CheckpointError(f"corrupt checkpoint: {path} failed its CRC check")

    if (n is not None and n != cn) or (M is not None and M != cM):
        raise IncompatibleModel(f"incompatible model: checkpoint has n={cn}, M={cM};"
                                f" expected n={n}, M={M}")

    arrays = []
    offset = 0
    for rows, cols in shapes:
        count = rows * cols
        arrays.append(np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
                      .reshape(rows, cols).astype(np.float32))
        offset += 4 * count

    return GaeParams(U=arrays[0], V=arrays[1], W0=arrays[2], W1=arrays[3], n=cn, seed=seed)
