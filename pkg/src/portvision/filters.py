"""Pixel-labeling filters: a small CNN inference engine and a classical baseline.

The CNN engine executes one fixed architecture pattern,

    3 x (conv 3x3 + ReLU + maxpool 2x2)  ->  3 x (deconv + ReLU)  ->  1x1 conv + sigmoid,

but is shape-generic: channel widths and kernel sizes come from the weight
file, never from code.  Inputs are reflect-padded to a multiple of 8 so the
three pooling stages divide evenly, and the output is cropped back, making
the mask the same size as the frame.

Weight container (PORTCNN1, little-endian):

    magic  8s   b"PORTCNN1"
    version u32
    modality u8      1 = event (1 input channel), 3 = rgb (3 input channels)
    target   u8      0 = ring, 1 = reflector
    layer_count u32
    per layer:
        kind u8          1 conv, 2 maxpool, 3 deconv, 4 sigmoid
        dims 4 x u32     out_channels, in_channels, kh, kw (zeros when unused)
        stride u32
        padding u32
        bias   f32 x out_channels        (conv/deconv only)
        weight f32 x out*in*kh*kw        (row-major, conv/deconv only)
    crc32 u32 of every byte between the magic and this field
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

WEIGHT_MAGIC = b"PORTCNN1"
WEIGHT_VERSION = 1

KIND_CONV = 1
KIND_MAXPOOL = 2
KIND_DECONV = 3
KIND_SIGMOID = 4

MODALITY_EVENT = 1
MODALITY_RGB = 3

TARGET_RING = 0
TARGET_REFLECTOR = 1


class WeightFormatError(ValueError):
    """Base class for weight-file problems."""


class BadMagicError(WeightFormatError):
    pass


class TruncatedWeightsError(WeightFormatError):
    pass


class ShapeChainError(WeightFormatError):
    """Layer pattern, dimension chain, or metadata violates the architecture."""


class ChecksumError(WeightFormatError):
    pass


@dataclass
class CnnLayer:
    kind: int
    out_channels: int = 0
    in_channels: int = 0
    kh: int = 0
    kw: int = 0
    stride: int = 1
    padding: int = 0
    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    relu: bool = False  # derived at validation time, not stored on disk


@dataclass
class CnnWeights:
    modality: int
    target: int
    layers: List[CnnLayer] = field(default_factory=list)

    def input_channels(self) -> int:
        return 1 if self.modality == MODALITY_EVENT else 3

    def parameter_count(self) -> int:
        total = 0
        for layer in self.layers:
            if layer.weight is not None:
                total += layer.weight.size
            if layer.bias is not None:
                total += layer.bias.size
        return total

    def validate(self) -> None:
        """Enforce the fixed layer pattern and a consistent dimension chain."""
        if self.modality not in (MODALITY_EVENT, MODALITY_RGB):
            raise ShapeChainError(f"unknown modality byte {self.modality}")
        if self.target not in (TARGET_RING, TARGET_REFLECTOR):
            raise ShapeChainError(f"unknown target byte {self.target}")
        expected = [
            KIND_CONV, KIND_MAXPOOL, KIND_CONV, KIND_MAXPOOL, KIND_CONV, KIND_MAXPOOL,
            KIND_DECONV, KIND_DECONV, KIND_DECONV, KIND_CONV, KIND_SIGMOID,
        ]
        kinds = [layer.kind for layer in self.layers]
        if kinds != expected:
            raise ShapeChainError(
                f"layer pattern {kinds} does not match the required architecture"
            )
        channels = self.input_channels()
        for i, layer in enumerate(self.layers):
            if layer.kind == KIND_CONV:
                if layer.in_channels != channels:
                    raise ShapeChainError(
                        f"layer {i}: expects {layer.in_channels} input channels, "
                        f"chain carries {channels}"
                    )
                if layer.kh % 2 == 0 or layer.stride != 1 or layer.padding != (layer.kh - 1) // 2:
                    raise ShapeChainError(
                        f"layer {i}: conv must be odd-kernel, stride 1, same-padding"
                    )
                if layer.kh != layer.kw:
                    raise ShapeChainError(f"layer {i}: non-square kernel")
                if layer.weight.shape != (layer.out_channels, layer.in_channels, layer.kh, layer.kw):
                    raise ShapeChainError(f"layer {i}: weight tensor shape mismatch")
                channels = layer.out_channels
            elif layer.kind == KIND_DECONV:
                if layer.in_channels != channels:
                    raise ShapeChainError(
                        f"layer {i}: deconv expects {layer.in_channels} channels, "
                        f"chain carries {channels}"
                    )
                if layer.stride != 2 or (layer.kh - 2 * layer.padding) != 2 or layer.kh != layer.kw:
                    raise ShapeChainError(
                        f"layer {i}: deconv must double resolution (k - 2p = s = 2)"
                    )
                if layer.weight.shape != (layer.out_channels, layer.in_channels, layer.kh, layer.kw):
                    raise ShapeChainError(f"layer {i}: weight tensor shape mismatch")
                channels = layer.out_channels
            elif layer.kind == KIND_MAXPOOL:
                if layer.kh != 2 or layer.kw != 2 or layer.stride != 2 or layer.padding != 0:
                    raise ShapeChainError(f"layer {i}: maxpool must be 2x2 stride 2")
            elif layer.kind == KIND_SIGMOID:
                pass
            else:
                raise ShapeChainError(f"layer {i}: unknown kind {layer.kind}")
        final_conv = self.layers[9]
        if final_conv.out_channels != 1 or final_conv.kh != 1 or final_conv.kw != 1:
            raise ShapeChainError("final conv must be 1x1 with a single output channel")
        # ReLU follows every weighted layer except the sigmoid-activated head
        for layer in self.layers:
            layer.relu = layer.kind in (KIND_CONV, KIND_DECONV)
        final_conv.relu = False


# ---------------------------------------------------------------------------
# primitive ops

def conv2d(x: np.ndarray, weight: np.ndarray, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of (C,H,W) input with (O,C,kh,kw) kernels."""
    x = np.asarray(x, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[1] != x.shape[0]:
        raise ValueError("conv2d expects (C,H,W) input and matching (O,C,kh,kw) weights")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    out_ch, _, kh, kw = weight.shape
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    _, h, w = x.shape
    if h < kh or w < kw:
        raise ValueError("kernel larger than padded input")
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    _, ho, wo, _, _ = win.shape
    cols = win.transpose(0, 3, 4, 1, 2).reshape(-1, ho * wo)
    out = (weight.reshape(out_ch, -1) @ cols).reshape(out_ch, ho, wo)
    if bias is not None:
        out += np.asarray(bias, dtype=float)[:, None, None]
    return out


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 stride-2 max pooling; spatial dims must be even."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError("maxpool2 requires even spatial dimensions")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def deconv2d(x: np.ndarray, weight: np.ndarray, bias=None, stride: int = 2, padding: int = 1) -> np.ndarray:
    """Transposed convolution: the adjoint of conv2d with the same meta.

    Scatter semantics: out[o, i*s - p + u, j*s - p + v] += x[c,i,j] * w[o,c,u,v].
    Implemented as one dense matmul per kernel offset.
    """
    x = np.asarray(x, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[1] != x.shape[0]:
        raise ValueError("deconv2d expects (C,H,W) input and (O,C,kh,kw) weights")
    out_ch, _, kh, kw = weight.shape
    _, h, w = x.shape
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (w - 1) * stride - 2 * padding + kw
    if ho < 1 or wo < 1:
        raise ValueError("deconv output would be empty")
    out = np.zeros((out_ch, ho, wo))
    for u in range(kh):
        for v in range(kw):
            # input rows i land at y = i*stride + u - padding
            i0 = 0
            while i0 * stride + u - padding < 0:
                i0 += 1
            i1 = h
            while i1 > i0 and (i1 - 1) * stride + u - padding >= ho:
                i1 -= 1
            j0 = 0
            while j0 * stride + v - padding < 0:
                j0 += 1
            j1 = w
            while j1 > j0 and (j1 - 1) * stride + v - padding >= wo:
                j1 -= 1
            if i0 >= i1 or j0 >= j1:
                continue
            block = np.tensordot(weight[:, :, u, v], x[:, i0:i1, j0:j1], axes=1)
            ys = slice(i0 * stride + u - padding, (i1 - 1) * stride + u - padding + 1, stride)
            xs = slice(j0 * stride + v - padding, (j1 - 1) * stride + v - padding + 1, stride)
            out[:, ys, xs] += block
    if bias is not None:
        out += np.asarray(bias, dtype=float)[:, None, None]
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# network execution

def run_cnn(weights: CnnWeights, frame: np.ndarray) -> np.ndarray:
    """Forward pass producing a per-pixel mask the same size as the frame."""
    weights.validate()
    x = _to_channels_first(frame, weights.input_channels())
    _, h, w = x.shape
    pad_h = (-h) % 8
    pad_w = (-w) % 8
    if pad_h or pad_w:
        x = np.pad(x, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    for layer in weights.layers:
        if layer.kind == KIND_CONV:
            x = conv2d(x, layer.weight, layer.bias, stride=layer.stride, padding=layer.padding)
            if layer.relu:
                np.maximum(x, 0.0, out=x)
        elif layer.kind == KIND_MAXPOOL:
            x = maxpool2(x)
        elif layer.kind == KIND_DECONV:
            x = deconv2d(x, layer.weight, layer.bias, stride=layer.stride, padding=layer.padding)
            if layer.relu:
                np.maximum(x, 0.0, out=x)
        elif layer.kind == KIND_SIGMOID:
            x = _sigmoid(x)
    return x[0, :h, :w]


def _to_channels_first(frame: np.ndarray, expected_channels: int) -> np.ndarray:
    f = np.asarray(frame, dtype=float)
    if f.ndim == 2:
        stack = f[None, :, :]
        if expected_channels == 3:
            # grayscale frames feed rgb-modality nets replicated
            stack = np.repeat(stack, 3, axis=0)
    elif f.ndim == 3 and f.shape[2] in (1, 3):
        stack = np.moveaxis(f, 2, 0)
        if stack.shape[0] == 1 and expected_channels == 3:
            stack = np.repeat(stack, 3, axis=0)
    else:
        raise ValueError("frame must be (H,W) or (H,W,1|3)")
    if stack.shape[0] != expected_channels:
        raise ValueError(
            f"frame has {stack.shape[0]} channels, weights expect {expected_channels}"
        )
    return np.ascontiguousarray(stack)


# ---------------------------------------------------------------------------
# PORTCNN1 container

_HEADER = struct.Struct("<IBBI")  # version, modality, target, layer_count
_LAYER_META = struct.Struct("<BIIIIII")  # kind, dims[4], stride, padding


def save_weights(path, weights: CnnWeights) -> None:
    weights.validate()
    payload = bytearray()
    payload += _HEADER.pack(WEIGHT_VERSION, weights.modality, weights.target, len(weights.layers))
    for layer in weights.layers:
        payload += _LAYER_META.pack(
            layer.kind, layer.out_channels, layer.in_channels,
            layer.kh, layer.kw, layer.stride, layer.padding,
        )
        if layer.kind in (KIND_CONV, KIND_DECONV):
            payload += np.asarray(layer.bias, dtype="<f4").tobytes()
            payload += np.ascontiguousarray(layer.weight, dtype="<f4").tobytes()
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_weights(path) -> CnnWeights:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(WEIGHT_MAGIC)] != WEIGHT_MAGIC:
        raise BadMagicError(f"{path}: not a PORTCNN1 weight file")
    if len(blob) < len(WEIGHT_MAGIC) + _HEADER.size + 4:
        raise TruncatedWeightsError(f"{path}: file shorter than a minimal container")
    payload = blob[len(WEIGHT_MAGIC) : -4]
    pos = 0
    version, modality, target, layer_count = _HEADER.unpack_from(payload, pos)
    pos += _HEADER.size
    if version != WEIGHT_VERSION:
        raise ShapeChainError(f"{path}: unsupported version {version}")
    if layer_count > 64:
        raise ShapeChainError(f"{path}: implausible layer count {layer_count}")
    layers = []
    for i in range(layer_count):
        if pos + _LAYER_META.size > len(payload):
            raise TruncatedWeightsError(f"{path}: truncated at layer {i} metadata")
        kind, oc, ic, kh, kw, stride, padding = _LAYER_META.unpack_from(payload, pos)
        pos += _LAYER_META.size
        layer = CnnLayer(kind=kind, out_channels=oc, in_channels=ic, kh=kh, kw=kw,
                         stride=stride, padding=padding)
        if kind in (KIND_CONV, KIND_DECONV):
            if max(oc, ic, kh, kw) > 65536 or min(oc, ic, kh, kw) < 1:
                raise ShapeChainError(f"{path}: layer {i} has implausible dims")
            nb = 4 * oc
            nw = 4 * oc * ic * kh * kw
            if pos + nb + nw > len(payload):
                raise TruncatedWeightsError(f"{path}: truncated tensors at layer {i}")
            layer.bias = np.frombuffer(payload, dtype="<f4", count=oc, offset=pos).astype(float)
            pos += nb
            layer.weight = (
                np.frombuffer(payload, dtype="<f4", count=oc * ic * kh * kw, offset=pos)
                .astype(float)
                .reshape(oc, ic, kh, kw)
            )
            pos += nw
        layers.append(layer)
    if pos != len(payload):
        raise ShapeChainError(f"{path}: {len(payload) - pos} trailing bytes after layers")
    weights = CnnWeights(modality=modality, target=target, layers=layers)
    weights.validate()
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"{path}: crc mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})"
        )
    return weights


# ---------------------------------------------------------------------------
# classical baseline

_BRIGHT_QUANTILE = 0.965
_BRIGHT_FLOOR = 0.25
_RING_SMALL, _RING_LARGE = 1, 5      # box radii: 3x3 minus 11x11 means
_RING_GAIN = 1.0 / 0.35
_BLOB_RADIUS = 4                     # 9x9 mean
_BLOB_OFFSET, _BLOB_GAIN = 0.3, 1.0 / 0.4


def _box_mean(img: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2r+1)^2 window clamped at the borders."""
    h, w = img.shape
    integ = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=integ[1:, 1:])
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - radius, 0, h)[:, None]
    y1 = np.clip(ys + radius + 1, 0, h)[:, None]
    x0 = np.clip(xs - radius, 0, w)[None, :]
    x1 = np.clip(xs + radius + 1, 0, w)[None, :]
    total = integ[y1, x1] - integ[y0, x1] - integ[y1, x0] + integ[y0, x0]
    area = (y1 - y0) * (x1 - x0)
    return total / area


def grayscale_of(frame: np.ndarray) -> np.ndarray:
    f = np.asarray(frame, dtype=float)
    if f.ndim == 3:
        return f.mean(axis=2)
    return f


def classical_filter(frame: np.ndarray, target: int) -> np.ndarray:
    """Quantile-threshold heuristic masks, no learning involved.

    Ring target: bright pixels that look thin (small-window density well above
    medium-window density).  Reflector target: bright pixels that look like
    compact blobs (high medium-window density).  Useful as a baseline and for
    bootstrapping; the CNN path replaces it wholesale.
    """
    g = grayscale_of(frame)
    if g.size == 0:
        raise ValueError("empty frame")
    threshold = max(float(np.quantile(g, _BRIGHT_QUANTILE)), _BRIGHT_FLOOR)
    bright = (g >= threshold).astype(float)
    if target == TARGET_RING:
        thin = _box_mean(bright, _RING_SMALL) - _box_mean(bright, _RING_LARGE)
        score = np.clip(thin * _RING_GAIN, 0.0, 1.0)
    elif target == TARGET_REFLECTOR:
        blob = _box_mean(bright, _BLOB_RADIUS)
        score = np.clip((blob - _BLOB_OFFSET) * _BLOB_GAIN, 0.0, 1.0)
    else:
        raise ValueError(f"unknown filter target {target}")
    return bright * score


FILTER_CLASSICAL = "classical"
FILTER_CNN = "cnn"


def run_filter(frame: np.ndarray, kind: str, target: int, weights: CnnWeights = None) -> np.ndarray:
    """Dispatch a frame to the classical or CNN filter for one target."""
    if kind == FILTER_CLASSICAL:
        return classical_filter(frame, target)
    if kind == FILTER_CNN:
        if weights is None:
            raise ValueError("cnn filter requires loaded weights")
        if weights.target != target:
            raise ValueError("weight file trained for a different target")
        return run_cnn(weights, frame)
    raise ValueError(f"unknown filter kind {kind!r}")
