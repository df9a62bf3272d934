"""Binary model files: magic 'MCELQNN1', little-endian, crc-checked.

Layout after the 8-byte magic:

    header:  version u32, bits u32, seed i64, logit_scale f64,
             arch string (u32 length + utf-8), layer count u32
    layers:  kind u8 (0 quant, 1 binary), activation u8 (0 none, 1 relu),
             bits u8, in u32, out u32,
             weights f64[out * in], bias or thresholds f64[out]
    footer:  crc32 u32 over everything between magic and footer

Weights are stored as raw float64, so a saved model reloads to bit-
identical forward passes.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ModelFormatError
from .network import BinFcLayer, Model, QuantFcLayer

MAGIC = b"MCELQNN1"
VERSION = 1

_KIND_QUANT = 0
_KIND_BIN = 1
_ACT_CODES = {"none": 0, "relu": 1}
_ACT_NAMES = {0: "none", 1: "relu"}


def _pack_array(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _layer_bytes(layer) -> bytes:
    if layer.kind == "quant":
        head = struct.pack("<BBBII", _KIND_QUANT, _ACT_CODES[layer.activation],
                           layer.bits, layer.in_features, layer.out_features)
        return head + _pack_array(layer.weights.data) + _pack_array(layer.bias.data)
    head = struct.pack("<BBBII", _KIND_BIN, 0, 1,
                       layer.in_features, layer.out_features)
    return head + _pack_array(layer.weights.data) + _pack_array(layer.thresholds.data)


def save_model(model: Model, path) -> None:
    path = Path(path)
    arch = model.arch.encode("utf-8")
    body = struct.pack("<IIqd", VERSION, model.bits, model.seed, model.logit_scale)
    body += struct.pack("<I", len(arch)) + arch
    body += struct.pack("<I", len(model.layers))
    for layer in model.layers:
        body += _layer_bytes(layer)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC + body + struct.pack("<I", crc))


class _Cursor:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.blob):
            raise ModelFormatError("%s: corrupt length, needed %d more bytes"
                                   % (self.path, self.pos + nbytes - len(self.blob)))
        out = self.blob[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _check_arch(model: Model, path: Path) -> None:
    dims = model.arch.split("-")
    expected = [(int(a), int(b)) for a, b in zip(dims, dims[1:])]
    actual = [(l.in_features, l.out_features) for l in model.layers]
    if expected != actual:
        raise ModelFormatError("%s: layer shapes %r disagree with architecture %r"
                               % (path, actual, model.arch))


def load_model(path) -> Model:
    path = Path(path)
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 4:
        raise ModelFormatError("%s: corrupt length, too short for a model file" % path)
    if blob[:len(MAGIC)] != MAGIC:
        raise ModelFormatError("%s: bad magic %r" % (path, blob[:len(MAGIC)]))
    body, (stored_crc,) = blob[len(MAGIC):-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ModelFormatError("%s: checksum failure" % path)
    cur = _Cursor(body, path)
    version, bits, seed, logit_scale = cur.unpack("<IIqd")
    if version != VERSION:
        raise ModelFormatError("%s: unsupported version %d, expected %d"
                               % (path, version, VERSION))
    arch_len, = cur.unpack("<I")
    arch = cur.take(arch_len).decode("utf-8")
    layer_count, = cur.unpack("<I")
    layers = []
    for i in range(layer_count):
        kind, act_code, layer_bits, n_in, n_out = cur.unpack("<BBBII")
        weights = np.frombuffer(cur.take(8 * n_in * n_out), dtype="<f8")
        weights = weights.reshape(n_out, n_in).astype(np.float64)
        second = np.frombuffer(cur.take(8 * n_out), dtype="<f8").astype(np.float64)
        if kind == _KIND_QUANT:
            if act_code not in _ACT_NAMES:
                raise ModelFormatError("%s: unknown activation code %d" % (path, act_code))
            layers.append(QuantFcLayer(weights, second, int(layer_bits),
                                       _ACT_NAMES[act_code], name="fc%d" % i))
        elif kind == _KIND_BIN:
            layers.append(BinFcLayer(weights, second, name="bfc%d" % i))
        else:
            raise ModelFormatError("%s: unknown layer kind %d" % (path, kind))
    if cur.pos != len(body):
        raise ModelFormatError("%s: %d trailing bytes after last layer"
                               % (path, len(body) - cur.pos))
    model = Model(layers, bits=int(bits), logit_scale=float(logit_scale),
                  arch=arch, seed=int(seed))
    _check_arch(model, path)
    return model
