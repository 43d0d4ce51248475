"""
Forward pass of the 2D-to-3D generator.

Each view runs a densely connected 2D encoder and a 3D decoder. The bottleneck
is bridged by a fully connected layer reshaped to a cube (connection A); every
other encoder level reaches the decoder through a channel-matching 2D conv,
duplication along the ray axis and a 3D conv (connection B). In biplanar mode a
third decoder consumes the average of both views' decoder features after the
lateral ones are rotated into the PA frame (connection C).

Tensors are channel-first without a batch axis. 2D features are indexed
``[C, u, v]`` in detector coordinates, 3D features ``[C, u, depth, v]``. For the
PA view that is ``[C, x, y, z]``, the volume frame itself.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .tensor import ConvSpec, conv2d, conv3d, conv_out_extent, fully_connected, instance_norm, relu, \
    seeded_init, sigmoid, transposed_conv
from .volume import Image2D, Volume3D

DOWN = ConvSpec(4, 2, 1)
SAME3 = ConvSpec(3, 1, 1)
POINT = ConvSpec(1, 1, 0)
UP = ConvSpec(4, 2, 1)

# Lateral feature frame (u, depth, v) -> PA frame (x, y, z): x = depth, y = -u, z = v.
# Rows are PA axes, columns lateral axes.
LATERAL_TO_PA = np.array([
    [0, 1, 0],
    [-1, 0, 0],
    [0, 0, 1],
])


@dataclass(frozen=True)
class GeneratorConfig:
    input_size: int = 128
    output_size: int = 128
    levels: int = 5
    base_channels: int = 32
    growth_rate: int = 16
    dense_layers_per_block: int = 4
    connection_a_bottleneck_dim: int = 64
    decoder_min_channels: int = 8
    biplanar: bool = True
    field_of_view_mm: float = 320.0

    @classmethod
    def desk(cls, **kw) -> "GeneratorConfig":
        """32-pixel configuration that runs in seconds on one core."""
        base = dict(input_size=32, output_size=32, levels=3, base_channels=8, growth_rate=8,
                    dense_layers_per_block=2, connection_a_bottleneck_dim=32, decoder_min_channels=8)
        base.update(kw)
        return cls(**base)

    @property
    def bottleneck_extent(self) -> int:
        return self.input_size >> self.levels

    def encoder_channels(self) -> list[int]:
        # downsample doubles, dense block adds layers*growth, compress halves
        ch = [self.base_channels]
        for _ in range(self.levels):
            ch.append((2 * ch[-1] + self.dense_layers_per_block * self.growth_rate) // 2)
        return ch

    def decoder_channels(self) -> list[int]:
        a = self.connection_a_bottleneck_dim
        return [a] + [max(a >> j, self.decoder_min_channels) for j in range(1, self.levels + 1)]


def _fail(layer: str, msg: str):
    raise ValueError(f"layer {layer}: {msg}")


def weight_shapes(cfg: GeneratorConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Every parameter tensor the configuration needs, in creation order."""
    if min(cfg.input_size, cfg.levels, cfg.base_channels, cfg.growth_rate,
           cfg.dense_layers_per_block, cfg.connection_a_bottleneck_dim, cfg.decoder_min_channels) < 1:
        raise ValueError(f"generator config entries must be positive: {cfg}")
    enc, dec = cfg.encoder_channels(), cfg.decoder_channels()
    L, g, n = cfg.levels, cfg.growth_rate, cfg.dense_layers_per_block
    s = cfg.bottleneck_extent
    shapes: "OrderedDict[str, tuple[int, ...]]" = OrderedDict()

    def conv(name, *shape):
        shapes[name + ".w"] = tuple(shape)
        shapes[name + ".b"] = (shape[0],)

    def tconv(name, cin, cout, k):
        shapes[name + ".w"] = (cin, cout, k, k, k)
        shapes[name + ".b"] = (cout,)

    views = ("pa.", "lat.") if cfg.biplanar else ("pa.",)
    for p in views:
        conv(p + "enc.stem", enc[0], 1, 3, 3)
        for i in range(1, L + 1):
            d = 2 * enc[i - 1]
            conv(f"{p}enc.{i}.down", d, enc[i - 1], 4, 4)
            for j in range(n):
                conv(f"{p}enc.{i}.dense.{j}", g, d + j * g, 3, 3)
            conv(f"{p}enc.{i}.compress", enc[i], d + n * g, 1, 1)
        shapes[p + "conna.w"] = (dec[0] * s ** 3, enc[L] * s * s)
        shapes[p + "conna.b"] = (dec[0] * s ** 3,)
        for j in range(1, L + 1):
            tconv(f"{p}dec.{j}.up", dec[j - 1], dec[j], 4)
            conv(f"{p}dec.{j}.skip2d", dec[j], enc[L - j], 3, 3)
            conv(f"{p}dec.{j}.skip3d", dec[j], dec[j], 3, 3, 3)
            conv(f"{p}dec.{j}.merge", dec[j], dec[j], 3, 3, 3)
        if not cfg.biplanar:
            conv(p + "head", 1, dec[L], 1, 1, 1)
    if cfg.biplanar:
        for j in range(1, L + 1):
            tconv(f"fuse.dec.{j}.up", dec[j - 1], dec[j], 4)
            conv(f"fuse.dec.{j}.merge", dec[j], dec[j], 3, 3, 3)
        conv("fuse.head", 1, dec[L], 1, 1, 1)
    return shapes


def audit_shapes(cfg: GeneratorConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Walk every layer symbolically and return each intermediate feature shape.

    Raises ``ValueError`` naming the first layer whose shapes do not fit.
    """
    if cfg.output_size != cfg.input_size:
        _fail("output", f"output_size {cfg.output_size} must equal input_size {cfg.input_size}")
    if (cfg.dense_layers_per_block * cfg.growth_rate) % 2:
        _fail("enc.1.compress", "dense_layers_per_block * growth_rate must be even to halve channels")
    wshapes = weight_shapes(cfg)
    enc, dec = cfg.encoder_channels(), cfg.decoder_channels()
    L, g, n = cfg.levels, cfg.growth_rate, cfg.dense_layers_per_block
    report: "OrderedDict[str, tuple[int, ...]]" = OrderedDict()
    views = ("pa.", "lat.") if cfg.biplanar else ("pa.",)
    for p in views:
        e = cfg.input_size
        report[p + "input"] = (1, e, e)
        report[p + "enc.0"] = (enc[0], e, e)
        for i in range(1, L + 1):
            if e % 2:
                _fail(f"{p}enc.{i}.down", f"extent {e} is odd; input_size must be divisible by 2^levels")
            e = conv_out_extent(e, 4, 2, 1)
            d = wshapes[f"{p}enc.{i}.down.w"][0]
            report[f"{p}enc.{i}.down"] = (d, e, e)
            report[f"{p}enc.{i}.dense"] = (d + n * g, e, e)
            report[f"{p}enc.{i}"] = (enc[i], e, e)
        s = e
        if wshapes[p + "conna.w"][1] != enc[L] * s * s:
            _fail(p + "conna", "fully connected input does not match the flattened bottleneck")
        report[p + "conna"] = (dec[0], s, s, s)
        for j in range(1, L + 1):
            e = (e - 1) * 2 - 2 + 4
            report[f"{p}dec.{j}.up"] = (dec[j], e, e, e)
            skip = report[f"{p}enc.{L - j}"]
            if skip[1] != e:
                _fail(f"{p}dec.{j}.skip2d", f"encoder extent {skip[1]} != decoder extent {e}")
            if wshapes[f"{p}dec.{j}.skip2d.w"][1] != skip[0]:
                _fail(f"{p}dec.{j}.skip2d", "input channels do not match encoder level")
            skip_out = wshapes[f"{p}dec.{j}.skip3d.w"][0]
            if skip_out != dec[j]:
                _fail(f"{p}dec.{j}.skip3d", f"skip channels {skip_out} != decoder channels {dec[j]}")
            report[f"{p}dec.{j}.skip"] = (skip_out, e, e, e)
            report[f"{p}dec.{j}"] = (dec[j], e, e, e)
        if not cfg.biplanar:
            report["output"] = (1, e, e, e)
    if cfg.biplanar:
        e = cfg.bottleneck_extent
        report["fuse.dec.0"] = (dec[0], e, e, e)
        for j in range(1, L + 1):
            e *= 2
            report[f"fuse.dec.{j}"] = (dec[j], e, e, e)
        report["output"] = (1, e, e, e)
    if report["output"][1:] != (cfg.output_size,) * 3:
        _fail("output", f"decoder ends at {report['output'][1:]}, expected {cfg.output_size}^3")
    return report


def encoder_feature_shapes(report, view: str = "pa") -> list[tuple[int, ...]]:
    keys = [k for k in report if k.startswith(view + ".enc.") and k.count(".") == 2]
    return [report[k] for k in keys]


def init_weights(cfg: GeneratorConfig, seed: int = 0, dtype=np.float64) -> dict[str, np.ndarray]:
    """Normal(0, 0.02) kernels and zero biases, one PCG64 stream per tensor."""
    weights = {}
    for idx, (name, shape) in enumerate(weight_shapes(cfg).items()):
        if name.endswith(".b"):
            weights[name] = np.zeros(shape, dtype=dtype)
        else:
            sub = int(np.random.SeedSequence([seed, idx]).generate_state(1, np.uint64)[0])
            weights[name] = seeded_init(shape, "normal", sub, dtype=dtype)
    return weights


def check_weights(cfg: GeneratorConfig, weights: dict[str, np.ndarray]) -> None:
    expected = weight_shapes(cfg)
    missing = [k for k in expected if k not in weights]
    if missing:
        raise ValueError(f"missing weight tensors: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    for name, shape in expected.items():
        if tuple(weights[name].shape) != shape:
            _fail(name, f"weight shape {tuple(weights[name].shape)} != expected {shape}")


# -- building blocks ------------------------------------------------------------

def _block2d(x, weights, name, spec=SAME3):
    return relu(instance_norm(conv2d(x, weights[name + ".w"], weights[name + ".b"], spec)))


def _block3d(x, weights, name, spec=SAME3):
    return relu(instance_norm(conv3d(x, weights[name + ".w"], weights[name + ".b"], spec)))


def dense_module(x, weights, name: str, layers: int) -> np.ndarray:
    """Stride-2 downsample, dense block of ``layers`` convs, 1x1 compression."""
    if x.shape[1] % 2 or x.shape[2] % 2:
        raise ValueError(f"dense_module {name}: spatial extents {x.shape[1:]} must be even")
    h = _block2d(x, weights, name + ".down", DOWN)
    feats = [h]
    for j in range(layers):
        feats.append(_block2d(np.concatenate(feats, axis=0), weights, f"{name}.dense.{j}"))
    return _block2d(np.concatenate(feats, axis=0), weights, name + ".compress", POINT)


def connection_a(feat2d, weight, bias, shape3d) -> np.ndarray:
    """Flatten, fully connected layer, reshape to ``shape3d`` = ``(C, D, H, W)``."""
    shape3d = tuple(shape3d)
    if weight.shape[0] != int(np.prod(shape3d)):
        raise ValueError(f"connection_a: weight produces {weight.shape[0]} values, shape {shape3d} "
                         f"needs {int(np.prod(shape3d))}")
    return fully_connected(feat2d, weight, bias).reshape(shape3d)


def duplicate_depth(feat2d, depth: int) -> np.ndarray:
    """``[C, u, v]`` -> ``[C, u, depth, v]`` with identical copies along depth."""
    feat2d = np.asarray(feat2d)
    return np.ascontiguousarray(np.broadcast_to(feat2d[:, :, None, :],
                                                (feat2d.shape[0], feat2d.shape[1], depth, feat2d.shape[2])))


def connection_b(feat2d, depth: int, weights, name: str) -> np.ndarray:
    """Channel-matching 2D block, duplication along depth, 3D block."""
    h = _block2d(feat2d, weights, name + ".skip2d")
    return _block3d(duplicate_depth(h, depth), weights, name + ".skip3d")


def lateral_to_pa(feat) -> np.ndarray:
    """Rotate ``[C, u, depth, v]`` lateral features into the PA frame (see ``LATERAL_TO_PA``)."""
    return np.ascontiguousarray(np.flip(np.swapaxes(feat, 1, 2), axis=2))


def pa_to_lateral(feat) -> np.ndarray:
    return np.ascontiguousarray(np.swapaxes(np.flip(feat, axis=2), 1, 2))


def connection_c(feat_pa, feat_lat) -> np.ndarray:
    """Average PA features with lateral features mapped into the PA frame."""
    lat = lateral_to_pa(feat_lat)
    if lat.shape != np.shape(feat_pa):
        raise ValueError(f"connection_c: shapes {np.shape(feat_pa)} and transformed {lat.shape} differ")
    return 0.5 * (np.asarray(feat_pa) + lat)


# -- full network -----------------------------------------------------------------

def _encode(x, cfg, weights, p, trace):
    feats = [_block2d(x, weights, p + "enc.stem")]
    _record(trace, p + "enc.0", feats[-1])
    for i in range(1, cfg.levels + 1):
        feats.append(dense_module(feats[-1], weights, f"{p}enc.{i}", cfg.dense_layers_per_block))
        _record(trace, f"{p}enc.{i}", feats[-1])
    return feats


def _decode_view(feats, cfg, weights, p, trace):
    s = cfg.bottleneck_extent
    dec = cfg.decoder_channels()
    h = connection_a(feats[-1], weights[p + "conna.w"], weights[p + "conna.b"], (dec[0], s, s, s))
    h = relu(instance_norm(h))
    _record(trace, p + "conna", h)
    states = [h]
    for j in range(1, cfg.levels + 1):
        up = relu(instance_norm(transposed_conv(h, weights[f"{p}dec.{j}.up.w"], weights[f"{p}dec.{j}.up.b"], UP)))
        _record(trace, f"{p}dec.{j}.up", up)
        skip = connection_b(feats[cfg.levels - j], up.shape[2], weights, f"{p}dec.{j}")
        _record(trace, f"{p}dec.{j}.skip", skip)
        h = _block3d(up + skip, weights, f"{p}dec.{j}.merge")
        _record(trace, f"{p}dec.{j}", h)
        states.append(h)
    return states


def _record(trace, name, arr):
    if trace is not None:
        trace[name] = tuple(arr.shape)


def _as_input(img, size, name, dtype):
    a = np.asarray(img.values if isinstance(img, Image2D) else img, dtype=dtype)
    if a.shape != (size, size):
        raise ValueError(f"{name} image has dims {a.shape}, generator expects ({size}, {size})")
    return a[None]


def generator_forward(x_pa, x_lat, cfg: GeneratorConfig, weights: dict[str, np.ndarray],
                      dtype=np.float64, trace: dict | None = None) -> Volume3D:
    """Reconstruct a ``output_size``-cube volume in [0, 1] from one or two radiographs.

    ``trace``, if given, receives the shape of every intermediate feature map
    under the same names :func:`audit_shapes` uses.
    """
    check_weights(cfg, weights)
    if cfg.biplanar and x_lat is None:
        raise ValueError("biplanar generator needs a lateral image")
    w = {k: v.astype(dtype, copy=False) for k, v in weights.items()}
    pa = _as_input(x_pa, cfg.input_size, "PA", dtype)
    _record(trace, "pa.input", pa)
    pa_states = _decode_view(_encode(pa, cfg, w, "pa.", trace), cfg, w, "pa.", trace)
    if not cfg.biplanar:
        out = conv3d(pa_states[-1], w["pa.head.w"], w["pa.head.b"], POINT)
    else:
        lat = _as_input(x_lat, cfg.input_size, "lateral", dtype)
        _record(trace, "lat.input", lat)
        lat_states = _decode_view(_encode(lat, cfg, w, "lat.", trace), cfg, w, "lat.", trace)
        h = connection_c(pa_states[0], lat_states[0])
        _record(trace, "fuse.dec.0", h)
        for j in range(1, cfg.levels + 1):
            up = relu(instance_norm(transposed_conv(h, w[f"fuse.dec.{j}.up.w"], w[f"fuse.dec.{j}.up.b"], UP)))
            h = _block3d(up + connection_c(pa_states[j], lat_states[j]), w, f"fuse.dec.{j}.merge")
            _record(trace, f"fuse.dec.{j}", h)
        out = conv3d(h, w["fuse.head.w"], w["fuse.head.b"], POINT)
    _record(trace, "output", out)
    values = sigmoid(out[0])
    return Volume3D.centered(values, cfg.field_of_view_mm / cfg.output_size)
