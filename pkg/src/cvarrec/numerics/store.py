"""Named parameter groups, freezing, checksums and a bit-exact checkpoint format."""

from __future__ import annotations

import hashlib
import json
import struct
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

import numpy as np

from .tensor import Tensor

MAGIC = b"CVARPS"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ParameterStore:
    """Ordered mapping from a path like ``"deep/w0"`` to a leaf Tensor.

    Freezing a parameter drops it from the autodiff tape (``requires_grad``
    goes False) and makes the optimizer skip it.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._frozen: set[str] = set()

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    def freeze(self, names=None) -> None:
        for n in self._params if names is None else names:
            self._frozen.add(n)
            self._params[n].requires_grad = False

    def unfreeze(self, names=None) -> None:
        for n in list(self._params) if names is None else names:
            self._frozen.discard(n)
            self._params[n].requires_grad = True

    @contextmanager
    def frozen(self):
        """Temporarily freeze every parameter, restoring prior flags on exit."""
        before = set(self._frozen)
        self.freeze()
        try:
            yield self
        finally:
            self.unfreeze([n for n in self._params if n not in before])

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, t in self._params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            missing = set(self._params) ^ set(state)
            raise CheckpointError(f"parameter names differ: {sorted(missing)}")
        for n, arr in state.items():
            if arr.shape != self._params[n].shape:
                raise CheckpointError(f"{n}: shape {arr.shape} != {self._params[n].shape}")
            self._params[n].data = np.array(arr, dtype=np.float64)

    def save(self, path, metadata: dict | None = None) -> None:
        save_arrays(path, self.state_dict(), {**(metadata or {}), "frozen": sorted(self._frozen)})

    @classmethod
    def load(cls, path) -> tuple["ParameterStore", dict]:
        arrays, meta = load_arrays(path)
        store = cls()
        for n, arr in arrays.items():
            store.add(n, arr)
        store.freeze(meta.get("frozen", []))
        return store, meta


def save_arrays(path, arrays: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    """Write ``MAGIC | version u16 | header-len u64 | JSON header | raw float64 LE``.

    Written to a temporary sibling and renamed, so a crash never leaves a
    half-written checkpoint behind.
    """
    path = Path(path)
    entries = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = json.dumps({"params": entries, "metadata": metadata or {}}, sort_keys=True).encode()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a parameter checkpoint (bad magic)")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<HQ", raw, pos)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos += struct.calcsize("<HQ")
    header = json.loads(raw[pos:pos + hlen])
    body = pos + hlen
    arrays = {}
    for e in header["params"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        start = body + e["offset"]
        arrays[e["name"]] = np.frombuffer(raw, dtype="<f8", count=n, offset=start).reshape(e["shape"]).astype(np.float64)
    return arrays, header["metadata"]
