"""Named parameter containers, Polyak averaging and the checkpoint format.

Checkpoint layout (all integers little-endian)::

    magic     b"EGPOPARM"
    version   u32 (= 1)
    count     u32 number of arrays
    per array:
        name_len u32, name (utf-8)
        dtype    4 ascii bytes, "<f4 " or "<f8 "
        ndim     u32, then ndim x u32 dims
        payload  prod(dims) little-endian floats

Training networks use ``<f4``; float64 networks (used for gradient
checks) round-trip as ``<f8`` so serialization stays bit-exact.
"""

from __future__ import annotations

import io
import struct
from collections import OrderedDict
from typing import Iterator, Mapping

import numpy as np

from .autodiff import Tensor

MAGIC = b"EGPOPARM"
VERSION = 1
_DTYPES = {np.dtype("<f4"): b"<f4 ", np.dtype("<f8"): b"<f8 "}
_CODES = {v: k for k, v in _DTYPES.items()}


class ShapeMismatchError(ValueError):
    pass


class ParamSet(Mapping[str, np.ndarray]):
    """Ordered mapping of parameter names to arrays with frozen shapes.

    Arrays are updated in place by optimizers; the shapes recorded at
    construction are checked on every bulk assignment.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None):
        self._arrays: OrderedDict[str, np.ndarray] = OrderedDict()
        for k, v in (arrays or {}).items():
            self._arrays[k] = np.ascontiguousarray(v)

    def __getitem__(self, key: str) -> np.ndarray:
        return self._arrays[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self._arrays:
            raise KeyError(f"duplicate parameter {name!r}")
        self._arrays[name] = np.ascontiguousarray(array)

    @property
    def shapes(self) -> dict[str, tuple]:
        return {k: v.shape for k, v in self._arrays.items()}

    def check_compatible(self, other: Mapping[str, np.ndarray]) -> None:
        if list(self.keys()) != list(other.keys()):
            raise ShapeMismatchError(f"parameter names differ: {list(self)} vs {list(other)}")
        for k, v in self._arrays.items():
            if v.shape != other[k].shape:
                raise ShapeMismatchError(f"{k}: shape {v.shape} vs {other[k].shape}")

    def leaves(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self._arrays.items()}

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self._arrays.items()})

    def assign(self, other: Mapping[str, np.ndarray]) -> None:
        self.check_compatible(other)
        for k, v in self._arrays.items():
            v[...] = other[k]

    def flat(self) -> np.ndarray:
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._arrays.values()])

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self._arrays.values())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<II", VERSION, len(self._arrays)))
        for name, arr in self._arrays.items():
            dt = arr.dtype.newbyteorder("<")
            if dt not in _DTYPES:
                raise TypeError(f"unsupported dtype {arr.dtype} for {name}")
            raw = name.encode("utf-8")
            buf.write(struct.pack("<I", len(raw)))
            buf.write(raw)
            buf.write(_DTYPES[dt])
            buf.write(struct.pack("<I", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(arr.astype(dt, copy=False).tobytes(order="C"))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamSet":
        view = memoryview(blob)
        if bytes(view[:8]) != MAGIC:
            raise ValueError("not a parameter checkpoint")
        version, count = struct.unpack_from("<II", view, 8)
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        off = 16
        out = cls()
        for _ in range(count):
            (n,) = struct.unpack_from("<I", view, off)
            off += 4
            name = bytes(view[off:off + n]).decode("utf-8")
            off += n
            dt = _CODES[bytes(view[off:off + 4])]
            off += 4
            (ndim,) = struct.unpack_from("<I", view, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", view, off)
            off += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            arr = np.frombuffer(view[off:off + size], dtype=dt).reshape(shape).copy()
            off += size
            out.add(name, arr.astype(dt.newbyteorder("="), copy=False))
        return out


def polyak_update(target: ParamSet, source: ParamSet, tau: float) -> ParamSet:
    """In-place ``target <- tau * source + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    target.check_compatible(source)
    for k in target:
        t = target[k]
        t *= 1.0 - tau
        t += tau * source[k]
    return target


def save_params(path, named: Mapping[str, ParamSet]) -> None:
    """Write several ParamSets into one checkpoint, prefixing names with ``<group>/``."""
    merged = ParamSet()
    for group, ps in named.items():
        for k, v in ps.items():
            merged.add(f"{group}/{k}", v)
    with open(path, "wb") as fh:
        fh.write(merged.to_bytes())


def load_params(path) -> dict[str, ParamSet]:
    with open(path, "rb") as fh:
        merged = ParamSet.from_bytes(fh.read())
    groups: dict[str, ParamSet] = {}
    for k, v in merged.items():
        group, _, name = k.partition("/")
        groups.setdefault(group, ParamSet()).add(name, v)
    return groups
