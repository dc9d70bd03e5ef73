"""Convolution, residual block, global average pooling and the small CNN backbone"""
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import ContractViolation, DimensionError
from nn.base import Layer, Parameter, PathFilter
from nn.linear import MlpLayer
from numerics.rng import Rng

# Per-sample squared gradients of conv weights are materialized this many samples at a time
SQUARE_CHUNK = 16


class Conv2d(Layer):
    """Square-kernel 2-D convolution via im2col"""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: Rng, stride: int = 1, padding: int = 0):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel * kernel
        self.params["weight"] = Parameter(
            rng.child("weight").normal((out_channels, in_channels, kernel, kernel), scale=np.sqrt(2.0 / fan_in))
        )
        self.params["bias"] = Parameter(np.zeros(out_channels))

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(
                f"conv expects [batch, {self.in_channels}, H, W], got {list(x.shape)}"
            )
        B, C, H, W = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        if xp.shape[2] < k or xp.shape[3] < k:
            raise DimensionError(f"input {H}x{W} too small for kernel {k} with padding {p}")
        windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        Ho, Wo = windows.shape[2], windows.shape[3]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
        wmat = self.params["weight"].value.reshape(self.out_channels, -1)
        out = cols @ wmat.T + self.params["bias"].value
        y = out.reshape(B, Ho, Wo, self.out_channels).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(y), {"cols": cols, "in_shape": x.shape, "out_hw": (Ho, Wo)}

    def backward(
        self,
        cache: dict,
        upstream: np.ndarray,
        collect: str = "grad",
        prefix: str = "",
        wanted: Optional[PathFilter] = None,
        need_input_grad: bool = True,
    ) -> Tuple[Optional[np.ndarray], Dict[str, np.ndarray]]:
        B, C, H, W = cache["in_shape"]
        Ho, Wo = cache["out_hw"]
        O, k, s, p = self.out_channels, self.kernel, self.stride, self.padding
        if upstream.shape != (B, O, Ho, Wo):
            raise ContractViolation(
                "stale conv cache: upstream shape does not match",
                {"upstream": list(upstream.shape), "expected": [B, O, Ho, Wo]},
            )
        cols = cache["cols"]
        gm = upstream.transpose(0, 2, 3, 1).reshape(-1, O)
        out: Dict[str, np.ndarray] = {}

        if self._wants(prefix, "weight", wanted):
            wshape = self.params["weight"].shape
            if collect == "grad":
                out[f"{prefix}weight"] = (gm.T @ cols).reshape(wshape)
            else:
                gb = gm.reshape(B, Ho * Wo, O)
                cb = cols.reshape(B, Ho * Wo, -1)
                if collect == "square":
                    acc = np.zeros((O, cb.shape[2]))
                    for start in range(0, B, SQUARE_CHUNK):
                        per = np.einsum("blo,bld->bod", gb[start:start + SQUARE_CHUNK], cb[start:start + SQUARE_CHUNK])
                        acc += (per ** 2).sum(axis=0)
                    out[f"{prefix}weight"] = acc.reshape(wshape)
                else:
                    out[f"{prefix}weight"] = np.einsum("blo,bld->bod", gb, cb).reshape((B,) + wshape)
        if self._wants(prefix, "bias", wanted):
            if collect == "grad":
                out[f"{prefix}bias"] = gm.sum(axis=0)
            else:
                per = gm.reshape(B, Ho * Wo, O).sum(axis=1)
                out[f"{prefix}bias"] = (per ** 2).sum(axis=0) if collect == "square" else per

        dx = None
        if need_input_grad:
            wmat = self.params["weight"].value.reshape(O, -1)
            dcols = (gm @ wmat).reshape(B, Ho, Wo, C, k, k)
            dxp = np.zeros((B, C, H + 2 * p, W + 2 * p))
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + s * Ho:s, j:j + s * Wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            dx = dxp[:, :, p:p + H, p:p + W] if p else dxp
        return dx, out


class GlobalAvgPool(Layer):
    """[B, C, H, W] -> [B, C]"""

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        if x.ndim != 4:
            raise DimensionError(f"GAP expects [batch, C, H, W], got {list(x.shape)}")
        return x.mean(axis=(2, 3)), {"in_shape": x.shape}

    def backward(self, cache, upstream, collect="grad", prefix="", wanted=None, need_input_grad=True):
        B, C, H, W = cache["in_shape"]
        if upstream.shape != (B, C):
            raise ContractViolation("stale GAP cache", {"upstream": list(upstream.shape), "expected": [B, C]})
        dx = np.broadcast_to(upstream[:, :, None, None] / (H * W), (B, C, H, W)).copy() if need_input_grad else None
        return dx, {}


class ResidualBlock(Layer):
    """relu(conv2(relu(conv1(x))) + shortcut(x)); 1x1 projection when the shape changes"""

    def __init__(self, in_channels: int, out_channels: int, rng: Rng, stride: int = 1):
        super().__init__()
        self.children["conv1"] = Conv2d(in_channels, out_channels, 3, rng.child("conv1"), stride=stride, padding=1)
        self.children["conv2"] = Conv2d(out_channels, out_channels, 3, rng.child("conv2"), stride=1, padding=1)
        if stride != 1 or in_channels != out_channels:
            self.children["proj"] = Conv2d(in_channels, out_channels, 1, rng.child("proj"), stride=stride, padding=0)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        h1, c1 = self.children["conv1"].forward(x)
        a1 = np.maximum(h1, 0.0)
        h2, c2 = self.children["conv2"].forward(a1)
        if "proj" in self.children:
            sc, cp = self.children["proj"].forward(x)
        else:
            sc, cp = x, None
        y = np.maximum(h2 + sc, 0.0)
        return y, {"c1": c1, "c2": c2, "cp": cp, "h1": h1, "pre": h2 + sc}

    def backward(self, cache, upstream, collect="grad", prefix="", wanted=None, need_input_grad=True):
        out: Dict[str, np.ndarray] = {}
        g = upstream * (cache["pre"] > 0.0)
        da1, o2 = self.children["conv2"].backward(cache["c2"], g, collect, f"{prefix}conv2.", wanted)
        out.update(o2)
        dh1 = da1 * (cache["h1"] > 0.0)
        dx1, o1 = self.children["conv1"].backward(cache["c1"], dh1, collect, f"{prefix}conv1.", wanted, need_input_grad)
        out.update(o1)
        if "proj" in self.children:
            dx2, op = self.children["proj"].backward(cache["cp"], g, collect, f"{prefix}proj.", wanted, need_input_grad)
            out.update(op)
        else:
            dx2 = g
        dx = dx1 + dx2 if need_input_grad else None
        return dx, out


class CnnBackbone(Layer):
    """3x3 stem, three residual stages (stride-2 transitions), GAP, linear projection"""

    def __init__(
        self,
        in_channels: int,
        rng: Rng,
        stem_width: int = 32,
        stage_widths: Sequence[int] = (32, 64, 128),
        feature_dim: int = 256,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.feature_dim = feature_dim
        self.children["stem"] = Conv2d(in_channels, stem_width, 3, rng.child("stem"), stride=1, padding=1)
        prev = stem_width
        for idx, width in enumerate(stage_widths):
            stride = 1 if idx == 0 else 2
            self.children[f"stage{idx + 1}"] = ResidualBlock(prev, width, rng.child(f"stage{idx + 1}"), stride=stride)
            prev = width
        self.pool = GlobalAvgPool()
        self.children["proj"] = MlpLayer(prev, feature_dim, rng.child("proj"), activation="identity")
        self._stages = [name for name in self.children if name.startswith("stage")]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        caches = {}
        h, caches["stem"] = self.children["stem"].forward(x)
        caches["stem_pre"] = h
        h = np.maximum(h, 0.0)
        for name in self._stages:
            h, caches[name] = self.children[name].forward(h)
        h, caches["pool"] = self.pool.forward(h)
        z, caches["proj"] = self.children["proj"].forward(h)
        return z, caches

    def backward(self, cache, upstream, collect="grad", prefix="", wanted=None, need_input_grad=True):
        out: Dict[str, np.ndarray] = {}
        g, o = self.children["proj"].backward(cache["proj"], upstream, collect, f"{prefix}proj.", wanted)
        out.update(o)
        g, _ = self.pool.backward(cache["pool"], g)
        for name in reversed(self._stages):
            g, o = self.children[name].backward(cache[name], g, collect, f"{prefix}{name}.", wanted)
            out.update(o)
        g = g * (cache["stem_pre"] > 0.0)
        dx, o = self.children["stem"].backward(cache["stem"], g, collect, f"{prefix}stem.", wanted, need_input_grad)
        out.update(o)
        return dx, out
