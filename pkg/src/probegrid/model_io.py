"""Model file format, size accounting, and random-access decode.

Layout of a ``.cngp`` file (all integers little-endian):

  52-byte header: magic ``CNGP``, version, model shape fields, and the
  source image dimensions;
  per level, in level order: the feature table as N_f x F float16, then
  (hashed levels with probing only) N_c baked probe offsets packed at
  log2(N_p) bits each, LSB-first within each byte;
  decoder weights and biases per layer, float16.

Reads are strictly validated so fuzzed input yields typed errors, never
crashes.  Decoding is random access: a query touches only the index and
feature rows reachable from its corner set.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from . import backends
from .codebooks import BakedIndexCodebook, FeatureCodebook
from .encoding import encode_forward
from .errors import (
    BadMagic,
    DomainViolation,
    InvariantViolation,
    TruncatedFile,
    UnbakedModel,
    VersionMismatch,
)
from .indexing import LevelMode, build_level_specs
from .mlp import MlpParams
from .model import HyperParams, LevelState, Model

MAGIC = b"CNGP"
VERSION = 1
_HEADER = struct.Struct("<4sIBBBBIIIIIIIIII")
HEADER_BYTES = _HEADER.size  # 52

_DECODE_CHUNK = 16384


@dataclass(frozen=True)
class SizeReport:
    """Exact byte breakdown of a serialized model."""

    header_bytes: int
    feature_bytes: int
    index_bytes: int
    mlp_bytes: int

    @property
    def total_bytes(self) -> int:
        return (self.header_bytes + self.feature_bytes + self.index_bytes
                + self.mlp_bytes)


def _mlp_param_count(hyper: HyperParams) -> int:
    widths = hyper.mlp_widths()
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def _log2(n: int) -> int:
    return int(n).bit_length() - 1


def _index_block_bytes(hyper: HyperParams) -> int:
    if hyper.n_p <= 1:
        return 0
    return (hyper.n_c * _log2(hyper.n_p) + 7) // 8


def size_report(hyper: HyperParams) -> SizeReport:
    hyper.validate()
    specs = build_level_specs(hyper.n_min, hyper.n_max, hyper.n_levels,
                              hyper.n_f, hyper.d)
    feature_bytes = hyper.n_levels * hyper.n_f * hyper.feature_dim * 2
    per_level_index = _index_block_bytes(hyper)
    index_bytes = sum(per_level_index for s in specs
                      if s.mode is LevelMode.HASHED)
    return SizeReport(header_bytes=HEADER_BYTES,
                      feature_bytes=feature_bytes,
                      index_bytes=index_bytes,
                      mlp_bytes=_mlp_param_count(hyper) * 2)


@dataclass
class InferenceModel:
    """Deserialized or downcast model ready for random-access decode.

    Holds the half-precision payload exactly as stored on disk plus a
    float32 compute twin used by the decode paths.
    """

    hyper: HyperParams
    width: int
    height: int
    feats16: list[np.ndarray]
    baked: list[np.ndarray | None]
    mlp_w16: list[np.ndarray]
    mlp_b16: list[np.ndarray]
    model: Model

    @property
    def out_dim(self) -> int:
        return self.hyper.out_dim


def _compute_twin(hyper: HyperParams, feats16, baked, w16, b16) -> Model:
    specs = build_level_specs(hyper.n_min, hyper.n_max, hyper.n_levels,
                              hyper.n_f, hyper.d)
    levels = []
    for spec, f16, bk in zip(specs, feats16, baked):
        lv = LevelState(spec=spec,
                        features=FeatureCodebook(values=f16.astype(np.float32)))
        if bk is not None:
            lv.baked = BakedIndexCodebook(entries=bk)
        levels.append(lv)
    mlp = MlpParams(weights=[w.astype(np.float32) for w in w16],
                    biases=[b.astype(np.float32) for b in b16])
    return Model(hyper=hyper, levels=levels, mlp=mlp,
                 dtype=np.dtype(np.float32), seed=0)


def to_inference(model: Model, width: int = 0, height: int = 0) -> InferenceModel:
    """Downcast a trained model to its storable half-precision form."""
    feats16, baked = [], []
    for lv in model.levels:
        feats16.append(lv.features.values.astype(np.float16))
        if lv.conf is not None:
            if lv.baked is None:
                raise UnbakedModel(
                    f"level {lv.spec.level} has confidences but no baked indices")
            baked.append(lv.baked.entries.copy())
        else:
            baked.append(None)
    w16 = [w.astype(np.float16) for w in model.mlp.weights]
    b16 = [b.astype(np.float16) for b in model.mlp.biases]
    twin = _compute_twin(model.hyper, feats16, baked, w16, b16)
    return InferenceModel(hyper=model.hyper, width=width, height=height,
                          feats16=feats16, baked=baked,
                          mlp_w16=w16, mlp_b16=b16, model=twin)


def pack_indices(entries: np.ndarray, n_p: int) -> bytes:
    """Pack probe offsets at log2(n_p) bits each, LSB-first per byte."""
    w = _log2(n_p)
    if w == 0:
        return b""
    bits = np.unpackbits(entries[:, None], axis=1, bitorder="little")[:, :w]
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def unpack_indices(raw: bytes, n_c: int, n_p: int) -> np.ndarray:
    w = _log2(n_p)
    if w == 0:
        return np.zeros(n_c, dtype=np.uint8)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8),
                         bitorder="little", count=n_c * w)
    weights = (1 << np.arange(w, dtype=np.uint16))
    return (bits.reshape(n_c, w).astype(np.uint16) @ weights).astype(np.uint8)


def serialize(model) -> bytes:
    """Serialize a trained :class:`Model` or an :class:`InferenceModel`."""
    if isinstance(model, Model):
        model = to_inference(model)
    inf: InferenceModel = model
    hyper = inf.hyper
    flags = 1 if hyper.out_sigmoid else 0
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, VERSION, hyper.d, hyper.n_levels,
                           hyper.feature_dim, flags, hyper.n_min, hyper.n_max,
                           hyper.n_f, hyper.n_c, hyper.n_p, hyper.n_neurons,
                           hyper.n_hidden_layers, hyper.out_dim,
                           inf.width, inf.height))
    for f16, bk in zip(inf.feats16, inf.baked):
        out.write(np.ascontiguousarray(f16, dtype="<f2").tobytes())
        if bk is not None:
            out.write(pack_indices(bk, hyper.n_p))
    for w, b in zip(inf.mlp_w16, inf.mlp_b16):
        out.write(np.ascontiguousarray(w, dtype="<f2").tobytes())
        out.write(np.ascontiguousarray(b, dtype="<f2").tobytes())
    return out.getvalue()


def read_header(data: bytes):
    """Parse and validate the fixed-size header only.

    Returns (hyper, width, height).  Raises the typed format errors on any
    malformed input.
    """
    if len(data) < HEADER_BYTES:
        raise TruncatedFile(f"need {HEADER_BYTES} header bytes, have {len(data)}")
    (magic, version, d, n_levels, feature_dim, flags, n_min, n_max, n_f, n_c,
     n_p, n_neurons, n_hidden, out_dim, width, height) = \
        _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"unsupported version {version}")
    if flags > 1:
        raise InvariantViolation(f"unknown flag bits 0x{flags:02x}")
    limits = [(d, 2, 3, "d"), (n_levels, 1, 64, "levels"),
              (feature_dim, 1, 16, "feature dim"),
              (n_min, 1, 2**24, "n_min"), (n_max, 1, 2**24, "n_max"),
              (n_f, 1, 2**24, "n_f"), (n_c, 1, 2**26, "n_c"),
              (n_p, 1, 256, "n_p"), (n_neurons, 1, 2**14, "neurons"),
              (n_hidden, 1, 16, "hidden layers"), (out_dim, 1, 64, "out dim"),
              (width, 0, 2**20, "width"), (height, 0, 2**20, "height")]
    for value, lo, hi, name in limits:
        if not lo <= value <= hi:
            raise InvariantViolation(f"{name}={value} outside [{lo}, {hi}]")
    hyper = HyperParams(n_f=n_f, n_c=n_c, n_p=n_p, n_levels=n_levels,
                        feature_dim=feature_dim, n_min=n_min, n_max=n_max,
                        n_neurons=n_neurons, n_hidden_layers=n_hidden,
                        d=d, out_dim=out_dim, out_sigmoid=bool(flags & 1))
    try:
        hyper.validate()
    except Exception as exc:
        raise InvariantViolation(str(exc)) from None
    return hyper, width, height


def deserialize(data: bytes) -> InferenceModel:
    """Reconstruct an inference-ready model; inverse of :func:`serialize`."""
    hyper, width, height = read_header(data)
    report = size_report(hyper)
    if len(data) < report.total_bytes:
        raise TruncatedFile(
            f"payload needs {report.total_bytes} bytes, file has {len(data)}")
    if len(data) > report.total_bytes:
        raise InvariantViolation(
            f"{len(data) - report.total_bytes} trailing bytes")

    specs = build_level_specs(hyper.n_min, hyper.n_max, hyper.n_levels,
                              hyper.n_f, hyper.d)
    pos = HEADER_BYTES
    feat_nbytes = hyper.n_f * hyper.feature_dim * 2
    idx_nbytes = _index_block_bytes(hyper)
    feats16, baked = [], []
    for spec in specs:
        f16 = np.frombuffer(data, dtype="<f2", count=hyper.n_f * hyper.feature_dim,
                            offset=pos).reshape(hyper.n_f, hyper.feature_dim)
        pos += feat_nbytes
        feats16.append(f16)
        if spec.mode is LevelMode.HASHED and hyper.n_p > 1:
            entries = unpack_indices(data[pos:pos + idx_nbytes], hyper.n_c,
                                     hyper.n_p)
            pos += idx_nbytes
            if entries.max(initial=0) >= hyper.n_p:
                raise InvariantViolation("baked probe offset out of range")
            baked.append(entries)
        else:
            baked.append(None)

    w16, b16 = [], []
    widths = hyper.mlp_widths()
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = np.frombuffer(data, dtype="<f2", count=fan_in * fan_out,
                          offset=pos).reshape(fan_in, fan_out)
        pos += fan_in * fan_out * 2
        b = np.frombuffer(data, dtype="<f2", count=fan_out, offset=pos)
        pos += fan_out * 2
        w16.append(w)
        b16.append(b)
    assert pos == report.total_bytes

    twin = _compute_twin(hyper, feats16, baked, w16, b16)
    return InferenceModel(hyper=hyper, width=width, height=height,
                          feats16=feats16, baked=baked,
                          mlp_w16=w16, mlp_b16=b16, model=twin)


@dataclass
class TouchCounter:
    """Counts codebook rows touched by instrumented decode queries."""

    feature_rows: int = 0
    index_rows: int = 0

    @property
    def total(self) -> int:
        return self.feature_rows + self.index_rows


def decode_pixels(inf: InferenceModel, xs: np.ndarray,
                  counter: TouchCounter | None = None) -> np.ndarray:
    """Decode arbitrary coordinates; each output row depends only on its
    own input row, so any batching of the same queries is bit-identical."""
    xs = np.asarray(xs, dtype=np.float32)
    kern = backends.get()
    out = np.empty((xs.shape[0], inf.hyper.out_dim), dtype=np.float32)
    for lo in range(0, xs.shape[0], _DECODE_CHUNK):
        chunk = xs[lo:lo + _DECODE_CHUNK]
        y, traces = encode_forward(inf.model, chunk)
        if counter is not None:
            for tr in traces:
                n = tr.weights.size  # B * 2^d corner lookups
                counter.feature_rows += n
                if tr.kind == "probed":
                    counter.index_rows += n
        out[lo:lo + _DECODE_CHUNK] = kern.mlp_infer_rows(
            y, inf.model.mlp.weights, inf.model.mlp.biases,
            inf.hyper.out_sigmoid)
    return out


def decode_at(inf: InferenceModel, x,
              counter: TouchCounter | None = None) -> np.ndarray:
    """Random-access decode of a single point in [0,1]^d."""
    x = np.asarray(x, dtype=np.float32).reshape(1, -1)
    return decode_pixels(inf, x, counter)[0]


def _grid_coords(width: int, height: int, x0: int, y0: int, x1: int, y1: int):
    cols, rows = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    xs = np.stack([(cols.ravel() + 0.5) / width,
                   (rows.ravel() + 0.5) / height], axis=1)
    return xs.astype(np.float32)

def decode_rect(inf: InferenceModel, rect,
                width: int | None = None, height: int | None = None) -> np.ndarray:
    """Decode the half-open pixel rectangle (x0, y0, x1, y1)."""
    width = width or inf.width
    height = height or inf.height
    if width < 1 or height < 1:
        raise DomainViolation("model stores no image dimensions; pass them")
    x0, y0, x1, y1 = (int(v) for v in rect)
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise DomainViolation(
            f"rect {rect} invalid for {width}x{height} image")
    out = decode_pixels(inf, _grid_coords(width, height, x0, y0, x1, y1))
    return out.reshape(y1 - y0, x1 - x0, inf.hyper.out_dim)


def decode_image(inf: InferenceModel, width: int | None = None,
                 height: int | None = None) -> np.ndarray:
    """Decode the full image stored in the model header."""
    width = width or inf.width
    height = height or inf.height
    if width < 1 or height < 1:
        raise DomainViolation("model stores no image dimensions; pass them")
    return decode_rect(inf, (0, 0, width, height), width, height)
