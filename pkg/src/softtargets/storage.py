"""Binary file formats for matrices, targets, alignments, models.

Every format starts with a 5-byte ASCII magic, followed by 8-byte
little-endian unsigned integer header fields, then 8-byte little-endian
IEEE-754 double payloads (row-major for matrices). Alignment labels are
4-byte little-endian unsigned integers.

======  ===========================================================
magic   layout after the magic
======  ===========================================================
SSTM1   rows, cols, then rows*cols doubles
SSTT1   n_classes, n_frames, then one posterior (n_classes doubles)
        per frame
SSTA1   n_frames, then one uint32 class index per frame
SSEB1   class_id, n_classes, rank, variance fraction (double),
        mean log-posterior (n_classes doubles), kept eigenvalues
        (rank doubles), basis (n_classes x rank doubles)
SSDC1   class_id, n_classes, n_atoms, training lambda (double),
        atoms (n_classes x n_atoms doubles)
SSNN1   n_sizes, layer sizes, then per layer the weight matrix
        (fan_out x fan_in doubles) and bias (fan_out doubles);
        trailing init seed and epochs-trained counters
======  ===========================================================
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import RejectedInputError

MAGIC_MATRIX = b"SSTM1"
MAGIC_TARGETS = b"SSTT1"
MAGIC_ALIGNMENT = b"SSTA1"
MAGIC_BASIS = b"SSEB1"
MAGIC_DICTIONARY = b"SSDC1"
MAGIC_MODEL = b"SSNN1"

_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


class _Reader:
    """Sequential reader that rejects truncated or oversized files."""

    def __init__(self, path: str | Path, magic: bytes):
        self.path = Path(path)
        try:
            self.data = self.path.read_bytes()
        except OSError as exc:
            raise RejectedInputError(f"cannot read {self.path}: {exc}") from exc
        self.pos = 0
        got = self._take(len(magic))
        if got != magic:
            raise RejectedInputError(
                f"{self.path}: bad magic {got!r}, expected {magic!r}")

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise RejectedInputError(f"{self.path}: truncated file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self._take(8))[0]

    def doubles(self, count: int) -> np.ndarray:
        raw = self._take(8 * count)
        return np.frombuffer(raw, dtype="<f8", count=count).astype(np.float64)

    def uint32s(self, count: int) -> np.ndarray:
        raw = self._take(4 * count)
        return np.frombuffer(raw, dtype="<u4", count=count).astype(np.int64)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise RejectedInputError(
                f"{self.path}: {len(self.data) - self.pos} trailing bytes")


def _doubles_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def write_matrix(path: str | Path, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise RejectedInputError("matrix payload must be 2-D")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_MATRIX)
        fh.write(_U64.pack(rows))
        fh.write(_U64.pack(cols))
        fh.write(_doubles_bytes(m))


def read_matrix(path: str | Path) -> np.ndarray:
    r = _Reader(path, MAGIC_MATRIX)
    rows = r.u64()
    cols = r.u64()
    m = r.doubles(rows * cols).reshape(rows, cols)
    r.done()
    return m


def write_targets(path: str | Path, targets: np.ndarray) -> None:
    """One soft-target posterior per frame, frames in file order."""
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim != 2:
        raise RejectedInputError("targets payload must be 2-D (n_frames, n_classes)")
    n_frames, n_classes = t.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_TARGETS)
        fh.write(_U64.pack(n_classes))
        fh.write(_U64.pack(n_frames))
        fh.write(_doubles_bytes(t))


def read_targets(path: str | Path) -> np.ndarray:
    r = _Reader(path, MAGIC_TARGETS)
    n_classes = r.u64()
    n_frames = r.u64()
    t = r.doubles(n_frames * n_classes).reshape(n_frames, n_classes)
    r.done()
    return t


def write_alignment(path: str | Path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise RejectedInputError("alignment payload must be 1-D")
    if arr.size and (np.any(arr < 0) or np.any(arr >= 2 ** 32)):
        raise RejectedInputError("alignment labels must fit in uint32")
    with open(path, "wb") as fh:
        fh.write(MAGIC_ALIGNMENT)
        fh.write(_U64.pack(arr.size))
        fh.write(np.ascontiguousarray(arr, dtype="<u4").tobytes())


def read_alignment(path: str | Path) -> np.ndarray:
    r = _Reader(path, MAGIC_ALIGNMENT)
    n_frames = r.u64()
    labels = r.uint32s(n_frames)
    r.done()
    return labels


def write_basis(path: str | Path, basis) -> None:
    from .lowrank import LowRankBasis  # late import: avoid cycle

    if not isinstance(basis, LowRankBasis):
        raise RejectedInputError("expected a LowRankBasis")
    n_classes = basis.mean_log.shape[0]
    with open(path, "wb") as fh:
        fh.write(MAGIC_BASIS)
        fh.write(_U64.pack(basis.class_id))
        fh.write(_U64.pack(n_classes))
        fh.write(_U64.pack(basis.rank))
        fh.write(_F64.pack(basis.variance_fraction))
        fh.write(_doubles_bytes(basis.mean_log))
        fh.write(_doubles_bytes(basis.kept_eigenvalues))
        fh.write(_doubles_bytes(basis.basis))


def read_basis(path: str | Path):
    from .lowrank import LowRankBasis

    r = _Reader(path, MAGIC_BASIS)
    class_id = r.u64()
    n_classes = r.u64()
    rank = r.u64()
    variance_fraction = r.f64()
    mean_log = r.doubles(n_classes)
    kept = r.doubles(rank)
    basis = r.doubles(n_classes * rank).reshape(n_classes, rank)
    r.done()
    return LowRankBasis(class_id=class_id, mean_log=mean_log, basis=basis,
                        kept_eigenvalues=kept, variance_fraction=variance_fraction)


def write_dictionary(path: str | Path, dictionary) -> None:
    from .sparse import SparseDictionary

    if not isinstance(dictionary, SparseDictionary):
        raise RejectedInputError("expected a SparseDictionary")
    n_classes, n_atoms = dictionary.atoms.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_DICTIONARY)
        fh.write(_U64.pack(dictionary.class_id))
        fh.write(_U64.pack(n_classes))
        fh.write(_U64.pack(n_atoms))
        fh.write(_F64.pack(dictionary.lambda_train))
        fh.write(_doubles_bytes(dictionary.atoms))


def read_dictionary(path: str | Path):
    from .sparse import SparseDictionary

    r = _Reader(path, MAGIC_DICTIONARY)
    class_id = r.u64()
    n_classes = r.u64()
    n_atoms = r.u64()
    lambda_train = r.f64()
    atoms = r.doubles(n_classes * n_atoms).reshape(n_classes, n_atoms)
    r.done()
    return SparseDictionary(class_id=class_id, atoms=atoms, lambda_train=lambda_train)


def write_model(path: str | Path, model) -> None:
    from .mlp import MlpModel

    if not isinstance(model, MlpModel):
        raise RejectedInputError("expected an MlpModel")
    sizes = model.layer_sizes
    with open(path, "wb") as fh:
        fh.write(MAGIC_MODEL)
        fh.write(_U64.pack(len(sizes)))
        for s in sizes:
            fh.write(_U64.pack(s))
        for w, b in zip(model.weights, model.biases):
            fh.write(_doubles_bytes(w))
            fh.write(_doubles_bytes(b))
        fh.write(_U64.pack(model.seed))
        fh.write(_U64.pack(model.epochs_trained))


def read_model(path: str | Path):
    from .mlp import MlpModel

    r = _Reader(path, MAGIC_MODEL)
    n_sizes = r.u64()
    if n_sizes < 3:
        raise RejectedInputError(f"{path}: model needs at least 3 layer sizes")
    sizes = tuple(r.u64() for _ in range(n_sizes))
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(r.doubles(fan_out * fan_in).reshape(fan_out, fan_in))
        biases.append(r.doubles(fan_out))
    seed = r.u64()
    epochs_trained = r.u64()
    r.done()
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases,
                    seed=seed, epochs_trained=epochs_trained)
