"""Network derivation, weight containers and the floating-point reference path.

The network has three blocks. Block 1 is a single spatial convolution
(3x3 for patch size 5, 1x1 for patch size 3) that keeps the channel count at
N_c and leaves a 3x3 spatial map. That map is flattened row-major into a
9-long axis and split along the spectral axis into N_b equal bands. Block 2
runs the same four-layer chain of valid 3x3 convolutions (channels
1 -> 2 -> 4 -> 4 -> 4, ReLU after each) over every band with one shared
weight set. The band outputs are concatenated and Block 3 finishes with
fc -> ReLU -> fc -> softmax.

Weight files use the ``HSIW`` container: magic ``HSIW``, u32 version=1,
u32 layer_count, then per weighted layer a kernel tensor and a bias tensor.
Each tensor is: u8 rank, u32 dims[rank], u8 has_quant, i8 scale_exponent if
quantized, float32 little-endian payload, then an int16 little-endian
quantized copy if has_quant=1. The kernel tensor is preceded by a u8 layer
kind (1=conv3x3, 2=conv1x1, 3=fc). Kernel dims are (C_out, C_in, kh, kw)
for convolutions and (out, in) for fully-connected layers, C-order.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError, TruncationError, WeightShapeError
from .quant import QFormat, choose_qformat, quantize

WEIGHT_MAGIC = b"HSIW"
WEIGHT_VERSION = 1

KIND_CODES = {"conv3x3": 1, "conv1x1": 2, "fc": 3}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}

BLOCK2_CHANNELS = (1, 2, 4, 4, 4)
BLOCK3_HIDDEN = 120
PAPER_PAIRINGS = {(5, "3x3"), (3, "1x1")}


@dataclass(frozen=True)
class NetParams:
    """Tunable network parameters: band count, patch size, Block-1 kernel."""

    n_b: int
    p: int
    block1_kernel: str

    def __post_init__(self):
        if self.n_b not in (2, 4, 8):
            raise ConfigError(f"N_b must be 2, 4 or 8, got {self.n_b}")
        if self.p not in (3, 5):
            raise ConfigError(f"patch size must be 3 or 5, got {self.p}")
        if self.block1_kernel not in ("1x1", "3x3"):
            raise ConfigError(f"block1 kernel must be '1x1' or '3x3', got {self.block1_kernel}")
        if (self.p, self.block1_kernel) not in PAPER_PAIRINGS:
            warnings.warn(
                f"patch {self.p} with {self.block1_kernel} Block-1 kernel is not a "
                "published configuration"
            )


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the resolved network.

    ``n_branches`` > 1 marks the band-parallel Block-2 section; shapes are
    then per band and ``band_shared`` says the weights are stored once.
    """

    kind: str
    name: str
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    weight_shape: tuple[int, ...] | None = None
    band_shared: bool = False
    n_branches: int = 1

    @property
    def weighted(self) -> bool:
        return self.weight_shape is not None

    @property
    def bias_shape(self) -> tuple[int, ...]:
        if self.weight_shape is None:
            raise ValueError(f"layer {self.name} has no weights")
        return (self.weight_shape[0],)


@dataclass(frozen=True)
class NetworkSpec:
    """Fully shape-resolved layer list plus the dataset variables it serves."""

    layers: tuple[LayerSpec, ...]
    n_c: int
    n_classes: int
    n_b: int
    p: int
    concat_len: int

    def weighted_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.weighted]

    def layer(self, name: str) -> LayerSpec:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    def relu_after(self, name: str) -> bool:
        """True when the named layer is immediately followed by a ReLU."""
        for i, l in enumerate(self.layers):
            if l.name == name:
                return i + 1 < len(self.layers) and self.layers[i + 1].kind == "relu"
        raise KeyError(name)


@dataclass
class WeightSet:
    """Float parameters per weighted layer; Block-2 tensors stored once.

    ``quant`` optionally carries per-tensor int16 copies with their scale
    exponents, keyed like ``weights``; each entry is
    (w_int16, w_exponent, b_int16, b_exponent).
    """

    weights: dict[str, tuple[np.ndarray, np.ndarray]]
    quant: dict[str, tuple[np.ndarray, int, np.ndarray, int]] = field(default_factory=dict)

    def validate(self, spec: NetworkSpec) -> None:
        expected = spec.weighted_layers()
        names = [l.name for l in expected]
        if list(self.weights.keys()) != names:
            raise WeightShapeError(
                f"weight set layers {list(self.weights.keys())} != spec layers {names}"
            )
        for layer in expected:
            w, b = self.weights[layer.name]
            if tuple(w.shape) != layer.weight_shape:
                raise WeightShapeError(
                    f"layer {layer.name}: weight shape {tuple(w.shape)} != "
                    f"expected {layer.weight_shape}"
                )
            if tuple(b.shape) != layer.bias_shape:
                raise WeightShapeError(
                    f"layer {layer.name}: bias shape {tuple(b.shape)} != "
                    f"expected {layer.bias_shape}"
                )


def derive_config(n_c: int, n_classes: int, params: NetParams) -> NetworkSpec:
    """Resolve every layer shape for a dataset with n_c bands and C classes."""
    if n_c < 1 or n_classes < 1:
        raise ConfigError("band and class counts must be positive")
    if n_c % params.n_b != 0:
        raise ConfigError(f"N_c={n_c} is not divisible by N_b={params.n_b}")

    k = 3 if params.block1_kernel == "3x3" else 1
    spatial_out = params.p - k + 1
    if spatial_out != 3:
        raise ConfigError(
            f"Block-1 output is {spatial_out}x{spatial_out}, expected 3x3 "
            f"(patch {params.p} with {params.block1_kernel} kernel)"
        )
    band_width = n_c // params.n_b
    if band_width - 8 < 1:
        raise ConfigError(
            f"band width {band_width} too small for four 3x3 convolutions "
            f"(needs at least 9 spectral channels per band)"
        )

    layers: list[LayerSpec] = []
    block1_kind = "conv3x3" if k == 3 else "conv1x1"
    layers.append(
        LayerSpec(
            kind=block1_kind,
            name="block1_conv",
            in_shape=(params.p, params.p, n_c),
            out_shape=(3, 3, n_c),
            weight_shape=(n_c, n_c, k, k),
        )
    )
    layers.append(
        LayerSpec(
            kind="band_split",
            name="band_split",
            in_shape=(3, 3, n_c),
            out_shape=(9, band_width, 1),
            n_branches=params.n_b,
        )
    )
    h, w = 9, band_width
    for i in range(4):
        c_in, c_out = BLOCK2_CHANNELS[i], BLOCK2_CHANNELS[i + 1]
        layers.append(
            LayerSpec(
                kind="conv3x3",
                name=f"block2_conv{i + 1}",
                in_shape=(h, w, c_in),
                out_shape=(h - 2, w - 2, c_out),
                weight_shape=(c_out, c_in, 3, 3),
                band_shared=True,
                n_branches=params.n_b,
            )
        )
        h, w = h - 2, w - 2
        layers.append(
            LayerSpec(
                kind="relu",
                name=f"block2_relu{i + 1}",
                in_shape=(h, w, c_out),
                out_shape=(h, w, c_out),
                band_shared=True,
                n_branches=params.n_b,
            )
        )
    per_band = h * w * BLOCK2_CHANNELS[-1]
    concat_len = params.n_b * per_band
    layers.append(
        LayerSpec(
            kind="concat",
            name="concat",
            in_shape=(h, w, BLOCK2_CHANNELS[-1]),
            out_shape=(concat_len,),
            n_branches=params.n_b,
        )
    )
    layers.append(
        LayerSpec(
            kind="fc",
            name="fc1",
            in_shape=(concat_len,),
            out_shape=(BLOCK3_HIDDEN,),
            weight_shape=(BLOCK3_HIDDEN, concat_len),
        )
    )
    layers.append(
        LayerSpec(kind="relu", name="fc1_relu", in_shape=(BLOCK3_HIDDEN,), out_shape=(BLOCK3_HIDDEN,))
    )
    layers.append(
        LayerSpec(
            kind="fc",
            name="fc2",
            in_shape=(BLOCK3_HIDDEN,),
            out_shape=(n_classes,),
            weight_shape=(n_classes, BLOCK3_HIDDEN),
        )
    )
    layers.append(
        LayerSpec(kind="softmax", name="softmax", in_shape=(n_classes,), out_shape=(n_classes,))
    )
    return NetworkSpec(
        layers=tuple(layers),
        n_c=n_c,
        n_classes=n_classes,
        n_b=params.n_b,
        p=params.p,
        concat_len=concat_len,
    )


def band_partition(block1_out: np.ndarray, n_b: int) -> list[np.ndarray]:
    """Flatten the 3x3 spatial map row-major to a 9-axis and split the
    spectral axis into n_b equal bands of shape (9, N_c/n_b, 1).

    Band b holds spectral channels [b*N_c/n_b, (b+1)*N_c/n_b).
    """
    if block1_out.ndim != 3 or block1_out.shape[:2] != (3, 3):
        raise ConfigError(f"expected a 3x3xN_c tensor, got shape {block1_out.shape}")
    n_c = block1_out.shape[2]
    if n_b < 1 or n_c % n_b != 0:
        raise ConfigError(f"N_c={n_c} is not divisible by N_b={n_b}")
    flat = block1_out.reshape(9, n_c)
    width = n_c // n_b
    return [flat[:, b * width : (b + 1) * width].reshape(9, width, 1) for b in range(n_b)]


def conv2d_valid(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid convolution, stride 1. x: (H, W, C_in), w: (C_out, C_in, kh, kw)."""
    kh, kw = w.shape[2], w.shape[3]
    if x.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeError(f"conv input {x.shape} does not match kernel {w.shape}")
    if x.shape[0] < kh or x.shape[1] < kw:
        raise ShapeError(f"conv input {x.shape} smaller than kernel {kh}x{kw}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    return np.einsum("ijcab,fcab->ijf", windows, w, optimize=True) + b


def _forward_float(
    spec: NetworkSpec, wset: WeightSet, patch_data: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Run the reference float path; returns (probabilities, taps).

    Taps record the value flowing out of every weighted layer after its
    activation, keyed by layer name, plus the raw input under 'input'.
    """
    if tuple(patch_data.shape) != spec.layers[0].in_shape:
        raise ShapeError(
            f"patch shape {tuple(patch_data.shape)} != expected {spec.layers[0].in_shape}"
        )
    taps: dict[str, np.ndarray] = {"input": np.asarray(patch_data, dtype=np.float64)}
    act: np.ndarray | list[np.ndarray] = taps["input"]
    pending: str | None = None  # weighted layer whose tap waits for its ReLU

    def record(name: str) -> None:
        taps[name] = np.stack(act) if isinstance(act, list) else act

    for i, layer in enumerate(spec.layers):
        if layer.kind in ("conv3x3", "conv1x1"):
            w, b = wset.weights[layer.name]
            w64, b64 = w.astype(np.float64), b.astype(np.float64)
            if layer.band_shared:
                act = [conv2d_valid(a, w64, b64) for a in act]
            else:
                act = conv2d_valid(act, w64, b64)
        elif layer.kind == "fc":
            w, b = wset.weights[layer.name]
            if isinstance(act, list) or act.shape != layer.in_shape:
                raise ShapeError(f"{layer.name}: input does not match {layer.in_shape}")
            act = w.astype(np.float64) @ act + b.astype(np.float64)
        elif layer.kind == "relu":
            if isinstance(act, list):
                act = [np.maximum(a, 0.0) for a in act]
            else:
                act = np.maximum(act, 0.0)
            if pending is not None:
                record(pending)
                pending = None
        elif layer.kind == "band_split":
            act = band_partition(act, layer.n_branches)
        elif layer.kind == "concat":
            act = np.concatenate([a.reshape(-1) for a in act])
        elif layer.kind == "softmax":
            z = act - act.max()
            ez = np.exp(z)
            act = ez / ez.sum()
        else:
            raise ShapeError(f"unknown layer kind {layer.kind}")
        if layer.weighted:
            # post-activation tap: deferred to the ReLU when one follows
            follows = i + 1 < len(spec.layers) and spec.layers[i + 1].kind == "relu"
            if follows:
                pending = layer.name
            else:
                record(layer.name)
    return act, taps


def infer_float(spec: NetworkSpec, wset: WeightSet, patch) -> np.ndarray:
    """Floating-point reference inference; returns the C-long probability
    vector (sums to 1). ``patch`` is a Patch or a raw (p, p, N_c) array."""
    data = patch.data if hasattr(patch, "data") else np.asarray(patch)
    probs, _ = _forward_float(spec, wset, data)
    return probs


def float_taps(spec: NetworkSpec, wset: WeightSet, patch) -> dict[str, np.ndarray]:
    """Post-activation values per weighted layer, for calibration."""
    data = patch.data if hasattr(patch, "data") else np.asarray(patch)
    _, taps = _forward_float(spec, wset, data)
    return taps


def random_weights(spec: NetworkSpec, seed: int, scale: float = 0.5) -> WeightSet:
    """Uniform fan-in-scaled random weights, for tests and demos."""
    rng = np.random.default_rng(seed)
    weights: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for layer in spec.weighted_layers():
        fan_in = int(np.prod(layer.weight_shape[1:]))
        bound = scale / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=layer.weight_shape).astype(np.float32)
        b = np.zeros(layer.bias_shape, dtype=np.float32)
        weights[layer.name] = (w, b)
    return WeightSet(weights)


def _write_tensor(out: list[bytes], arr: np.ndarray, quant: tuple[np.ndarray, int] | None) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    out.append(struct.pack("<B", arr.ndim))
    out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    if quant is None:
        out.append(struct.pack("<B", 0))
        out.append(arr.tobytes())
    else:
        q_values, q_exp = quant
        out.append(struct.pack("<Bb", 1, q_exp))
        out.append(arr.tobytes())
        out.append(np.ascontiguousarray(q_values, dtype="<i2").tobytes())


def save_weights(wset: WeightSet, path, spec: NetworkSpec | None = None) -> None:
    """Write an HSIW container. Kind codes come from the paired spec when
    given, otherwise from tensor rank (rank 4 kernels with kh=3 are conv3x3,
    kh=1 conv1x1, rank 2 fc)."""
    if spec is not None:
        wset.validate(spec)
        kinds = {l.name: l.kind for l in spec.weighted_layers()}
    else:
        kinds = {}
        for name, (w, _) in wset.weights.items():
            if w.ndim == 2:
                kinds[name] = "fc"
            elif w.ndim == 4:
                kinds[name] = "conv3x3" if w.shape[2] == 3 else "conv1x1"
            else:
                raise WeightShapeError(f"layer {name}: unsupported tensor rank {w.ndim}")
    out: list[bytes] = [WEIGHT_MAGIC, struct.pack("<II", WEIGHT_VERSION, len(wset.weights))]
    for name, (w, b) in wset.weights.items():
        out.append(struct.pack("<B", KIND_CODES[kinds[name]]))
        q = wset.quant.get(name)
        _write_tensor(out, w, (q[0], q[1]) if q else None)
        _write_tensor(out, b, (q[2], q[3]) if q else None)
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def _read_tensor(fh) -> tuple[np.ndarray, tuple[np.ndarray, int] | None]:
    def pull(n: int, what: str) -> bytes:
        buf = fh.read(n)
        if len(buf) < n:
            raise TruncationError(f"weight file ends inside {what}")
        return buf

    (rank,) = struct.unpack("<B", pull(1, "tensor rank"))
    if rank < 1 or rank > 4:
        raise FormatError(f"unsupported tensor rank {rank}")
    dims = struct.unpack(f"<{rank}I", pull(4 * rank, "tensor dims"))
    if any(d < 1 for d in dims):
        raise FormatError(f"non-positive tensor dim in {dims}")
    (has_quant,) = struct.unpack("<B", pull(1, "quant flag"))
    if has_quant not in (0, 1):
        raise FormatError(f"bad quant flag {has_quant}")
    exp = 0
    if has_quant:
        (exp,) = struct.unpack("<b", pull(1, "scale exponent"))
    count = int(np.prod(dims))
    flat = np.frombuffer(pull(4 * count, "float payload"), dtype="<f4", count=count)
    arr = flat.reshape(dims).astype(np.float32)
    quant = None
    if has_quant:
        qflat = np.frombuffer(pull(2 * count, "quant payload"), dtype="<i2", count=count)
        quant = (qflat.reshape(dims).astype(np.int16), exp)
    return arr, quant


def load_weights(path, spec: NetworkSpec | None = None) -> WeightSet:
    """Read an HSIW container; validates shapes against ``spec`` when given."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if len(magic) < 4:
            raise TruncationError("weight file shorter than magic")
        if magic != WEIGHT_MAGIC:
            raise FormatError(f"bad weight magic {magic!r}")
        head = fh.read(8)
        if len(head) < 8:
            raise TruncationError("weight file ends inside header")
        version, layer_count = struct.unpack("<II", head)
        if version != WEIGHT_VERSION:
            raise FormatError(f"unsupported weight version {version}")
        names = None
        if spec is not None:
            expected = spec.weighted_layers()
            if layer_count != len(expected):
                raise WeightShapeError(
                    f"file has {layer_count} layers, spec expects {len(expected)}"
                )
            names = [l.name for l in expected]
        weights: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        quant: dict[str, tuple[np.ndarray, int, np.ndarray, int]] = {}
        for i in range(layer_count):
            kind_buf = fh.read(1)
            if len(kind_buf) < 1:
                raise TruncationError("weight file ends at layer kind")
            (kind_code,) = struct.unpack("<B", kind_buf)
            if kind_code not in CODE_KINDS:
                raise FormatError(f"unknown layer kind code {kind_code}")
            w, wq = _read_tensor(fh)
            b, bq = _read_tensor(fh)
            name = names[i] if names else f"layer{i}"
            weights[name] = (w, b)
            if wq is not None and bq is not None:
                quant[name] = (wq[0], wq[1], bq[0], bq[1])
        if fh.read(1):
            raise FormatError("trailing bytes after weight payload")
    wset = WeightSet(weights, quant)
    if spec is not None:
        wset.validate(spec)
    return wset


def attach_quantized(wset: WeightSet) -> WeightSet:
    """Fill per-tensor int16 sections (symmetric power-of-two scales)."""
    quant: dict[str, tuple[np.ndarray, int, np.ndarray, int]] = {}
    for name, (w, b) in wset.weights.items():
        wq = quantize(w, choose_qformat(w))
        bq = quantize(b, choose_qformat(b) if np.any(b) else QFormat(-15))
        quant[name] = (wq.values, wq.qformat.exponent, bq.values, bq.qformat.exponent)
    return WeightSet(dict(wset.weights), quant)
