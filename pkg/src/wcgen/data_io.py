"""Dataset loaders, checkpoint persistence, and report emission.

Checkpoints use a custom versioned binary layout so the theta0/thetaF
float64 bit patterns survive a round trip exactly: a fixed preamble
(magic, version, section lengths, CRCs), a JSON header describing the
layer table, then the raw little-endian arrays.
"""

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .nn import LayerSpec

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_SIZE = 3073
CHECKPOINT_MAGIC = b"WCCK"
CHECKPOINT_VERSION = 1
_PREAMBLE = struct.Struct("<4sIQIQI")   # magic, version, hlen, hcrc, plen, pcrc


class DataFormatError(ValueError):
    """Base class for malformed input files."""


class MagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


class RecordSizeError(DataFormatError):
    pass


class LabelRangeError(DataFormatError):
    pass


class CheckpointVersionError(DataFormatError):
    pass


class CheckpointCorruptError(DataFormatError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray             # n x input shape, values in [0, 1] for images
    labels: np.ndarray             # integer class indices
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.inputs) == 0:
            raise ValueError("dataset must be non-empty")
        if np.any(self.labels < 0) or np.any(self.labels >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    def pair(self):
        return self.inputs, self.labels


def _read_u32(buf, offset, path):
    if offset + 4 > len(buf):
        raise TruncatedFileError(f"{path}: truncated header")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path, num_classes=10, split="train"):
    """Parse a big-endian IDX image/label file pair, pixels scaled to [0,1]."""
    with open(images_path, "rb") as fh:
        img = fh.read()
    with open(labels_path, "rb") as fh:
        lab = fh.read()
    magic = _read_u32(img, 0, images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise MagicError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    n = _read_u32(img, 4, images_path)
    rows = _read_u32(img, 8, images_path)
    cols = _read_u32(img, 12, images_path)
    if len(img) < 16 + n * rows * cols:
        raise TruncatedFileError(f"{images_path}: expected {n} images, file too short")
    magic = _read_u32(lab, 0, labels_path)
    if magic != IDX_LABELS_MAGIC:
        raise MagicError(
            f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )
    n_lab = _read_u32(lab, 4, labels_path)
    if n_lab != n:
        raise CountMismatchError(f"{n} images but {n_lab} labels")
    if len(lab) < 8 + n_lab:
        raise TruncatedFileError(f"{labels_path}: expected {n_lab} labels, file too short")
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=16)
    inputs = pixels.reshape(n, rows, cols, 1).astype(np.float64) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    return Dataset(inputs, labels, num_classes=num_classes, split=split)


def load_cifar_binary(path, split="train"):
    """Parse CIFAR-10 binary records (label byte + 3x1024 channel planes)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_SIZE != 0:
        raise RecordSizeError(
            f"{path}: length {len(raw)} is not a positive multiple of {CIFAR_RECORD_SIZE}"
        )
    n = len(raw) // CIFAR_RECORD_SIZE
    records = np.frombuffer(raw, dtype=np.uint8).reshape(n, CIFAR_RECORD_SIZE)
    labels = records[:, 0].astype(np.int64)
    bad = labels[(labels < 0) | (labels >= 10)]
    if bad.size:
        raise LabelRangeError(f"{path}: label byte {int(bad[0])} outside [0, 10)")
    planes = records[:, 1:].reshape(n, 3, 32, 32)
    inputs = planes.transpose(0, 2, 3, 1).astype(np.float64) / 255.0
    return Dataset(inputs, labels, num_classes=10, split=split)


def synthetic_dataset(seed, n, classes, dims, separation, split="train"):
    """Balanced Gaussian blobs with pairwise class-mean distance `separation`.

    The class means sit on an orthonormal frame drawn from the seed, so the
    dataset is a pure function of its arguments.
    """
    if classes < 2:
        raise ValueError("classes must be >= 2")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    if dims < classes:
        raise ValueError("dims must be >= classes for an orthonormal frame")
    # Frame depends only on the seed so train/test splits share class means;
    # the noise stream additionally depends on the split tag.
    frame_rng = np.random.default_rng(np.random.SeedSequence([0xB10B5, int(seed)]))
    frame, _ = np.linalg.qr(frame_rng.standard_normal((dims, classes)))
    means = frame.T * (separation / np.sqrt(2.0))
    labels = np.arange(n) % classes
    noise_rng = np.random.default_rng(
        np.random.SeedSequence([0xB10B5, int(seed), zlib.crc32(split.encode())])
    )
    inputs = means[labels] + noise_rng.standard_normal((n, dims))
    return Dataset(inputs, labels.astype(np.int64), num_classes=classes, split=split)


@dataclass
class TrainableLayer:
    index: int
    spec: LayerSpec
    w0: np.ndarray
    b0: np.ndarray
    wf: np.ndarray
    bf: np.ndarray


@dataclass
class NetworkCheckpoint:
    input_shape: tuple
    specs: list
    theta0_weights: list
    theta0_biases: list
    theta_f_weights: list
    theta_f_biases: list
    provenance: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def trainable_layers(self):
        out = []
        for i, spec in enumerate(self.specs):
            if spec.trainable:
                out.append(TrainableLayer(
                    i, spec,
                    self.theta0_weights[i], self.theta0_biases[i],
                    self.theta_f_weights[i], self.theta_f_biases[i],
                ))
        return out


def checkpoint_from_params(params, provenance=None):
    return NetworkCheckpoint(
        input_shape=tuple(params.input_shape),
        specs=list(params.specs),
        theta0_weights=[None if w is None else np.array(w) for w in params.theta0_weights],
        theta0_biases=[None if b is None else np.array(b) for b in params.theta0_biases],
        theta_f_weights=[None if w is None else np.array(w) for w in params.weights],
        theta_f_biases=[None if b is None else np.array(b) for b in params.biases],
        provenance=dict(provenance or {}),
    )


def params_from_checkpoint(ckpt):
    """Rebuild NetworkParams carrying thetaF, with theta0 re-snapshotted."""
    from .nn import NetworkParams

    params = NetworkParams(
        specs=list(ckpt.specs),
        input_shape=tuple(ckpt.input_shape),
        weights=[None if w is None else np.array(w) for w in ckpt.theta_f_weights],
        biases=[None if b is None else np.array(b) for b in ckpt.theta_f_biases],
        theta0_weights=[None if w is None else np.array(w) for w in ckpt.theta0_weights],
        theta0_biases=[None if b is None else np.array(b) for b in ckpt.theta0_biases],
    )
    return params


def _array_entries(ckpt):
    for i, spec in enumerate(ckpt.specs):
        if spec.trainable:
            yield i, "w0", ckpt.theta0_weights[i]
            yield i, "b0", ckpt.theta0_biases[i]
            yield i, "wf", ckpt.theta_f_weights[i]
            yield i, "bf", ckpt.theta_f_biases[i]


def save_checkpoint(ckpt, path):
    arrays = list(_array_entries(ckpt))
    header = {
        "input_shape": list(ckpt.input_shape),
        "specs": [s.to_dict() for s in ckpt.specs],
        "provenance": ckpt.provenance,
        "arrays": [
            {"layer": i, "name": name, "shape": list(a.shape)}
            for i, name, a in arrays
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for _, _, a in arrays
    )
    with open(path, "wb") as fh:
        fh.write(_PREAMBLE.pack(
            CHECKPOINT_MAGIC, ckpt.version,
            len(header_bytes), zlib.crc32(header_bytes),
            len(payload), zlib.crc32(payload),
        ))
        fh.write(header_bytes)
        fh.write(payload)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PREAMBLE.size:
        raise TruncatedFileError(f"{path}: file shorter than the preamble")
    magic, version, hlen, hcrc, plen, pcrc = _PREAMBLE.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise MagicError(f"{path}: bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: file version {version}, reader supports {CHECKPOINT_VERSION}"
        )
    end_header = _PREAMBLE.size + hlen
    if len(raw) < end_header + plen:
        raise TruncatedFileError(f"{path}: truncated payload")
    header_bytes = raw[_PREAMBLE.size:end_header]
    payload = raw[end_header:end_header + plen]
    if zlib.crc32(header_bytes) != hcrc:
        raise CheckpointCorruptError(f"{path}: header checksum mismatch")
    if zlib.crc32(payload) != pcrc:
        raise CheckpointCorruptError(f"{path}: payload checksum mismatch")
    try:
        header = json.loads(header_bytes)
        specs = [LayerSpec.from_dict(d) for d in header["specs"]]
        entries = header["arrays"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointCorruptError(f"{path}: unreadable header ({exc})") from exc
    n_layers = len(specs)
    slots = {
        "w0": [None] * n_layers, "b0": [None] * n_layers,
        "wf": [None] * n_layers, "bf": [None] * n_layers,
    }
    offset = 0
    for entry in entries:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise CheckpointCorruptError(f"{path}: array table exceeds payload")
        a = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        slots[entry["name"]][entry["layer"]] = a.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointCorruptError(f"{path}: trailing bytes in payload")
    return NetworkCheckpoint(
        input_shape=tuple(header["input_shape"]),
        specs=specs,
        theta0_weights=slots["w0"],
        theta0_biases=slots["b0"],
        theta_f_weights=slots["wf"],
        theta_f_biases=slots["bf"],
        provenance=header.get("provenance", {}),
        version=version,
    )


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path, header, rows):
    try:
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def write_jsonl(path, rows):
    try:
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def write_measure_report(report, path, fmt="csv"):
    header = list(report.COLUMNS)
    if fmt == "csv":
        write_csv(path, header, [report.row()])
    else:
        write_jsonl(path, [dict(zip(header, report.row()))])


def write_matrix_csv(matrix, path):
    write_csv(
        path,
        [f"c{j}" for j in range(matrix.shape[1])],
        [list(row) for row in matrix],
    )


def read_table_csv(path):
    """Read a numeric CSV with one header row; returns (header, rows)."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty table")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows
