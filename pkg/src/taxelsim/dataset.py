"""On-disk formats, manifests and dataset splits.

Every artifact self-describes. CSV files start with a ``# kind=<kind>
schema_version=<n>`` comment (optional on read, so plain hardware logs with
just the column header are accepted); JSON files carry ``kind`` and
``schema_version`` keys; ``frames.bin`` starts with the ``TWF1`` magic.

Digests are 64-bit FNV-1a over the raw file bytes, written as 16 hex digits.
"""

import base64
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import ConfigurationError, CorruptionError, InvalidArgument, UnsupportedVersionError

SCHEMA_VERSION = 1
KINDS = (
    "sim_recording", "taxel_trace", "force_trace", "pairs", "model", "report",
    "warp_path", "sequence_set", "mesh", "grid", "image",
)
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
FRAMES_MAGIC = b"TWF1"


@numba.njit(cache=True)
def _fnv1a(data):
    h = np.uint64(FNV_OFFSET)
    p = np.uint64(FNV_PRIME)
    for b in data:
        h = (h ^ np.uint64(b)) * p
    return h


def fnv1a64(data: bytes) -> str:
    return "%016x" % int(_fnv1a(np.frombuffer(bytes(data), dtype=np.uint8)))


def file_digest(path) -> str:
    return fnv1a64(Path(path).read_bytes())


def check_version(version, path):
    if version != SCHEMA_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported schema_version {version}")


def fmt(x):
    return "%.17g" % x


# --------------------------------------------------------------------- JSON


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def load_json(path, kind=None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    obj = json.loads(path.read_text())
    if kind is not None:
        if obj.get("kind") != kind:
            raise InvalidArgument(f"{path}: expected kind {kind!r}, found {obj.get('kind')!r}")
        check_version(obj.get("schema_version"), path)
    return obj


# ---------------------------------------------------------------------- CSV


def write_csv(path, kind, columns, rows):
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.shape[1] != len(columns):
        raise InvalidArgument(f"{len(columns)} columns but rows have {rows.shape[1]} values")
    lines = [f"# kind={kind} schema_version={SCHEMA_VERSION}", ",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")
    return file_digest(path)


def read_csv(path, kind=None, columns=None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = path.read_text().splitlines()
    if lines and lines[0].startswith("#"):
        meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
        if kind is not None and meta.get("kind", kind) != kind:
            raise InvalidArgument(f"{path}: expected kind {kind!r}, found {meta.get('kind')!r}")
        if "schema_version" in meta:
            check_version(int(meta["schema_version"]), path)
        lines = lines[1:]
    header = lines[0].strip().split(",")
    if columns is not None and header != list(columns):
        raise InvalidArgument(f"{path}: expected columns {columns}, found {header}")
    body = [ln for ln in lines[1:] if ln.strip()]
    data = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=float).reshape(len(body), len(header))
    return header, data


TAXEL_COLUMNS = ["t"] + [f"s{i}" for i in range(1, 9)]
FORCE_COLUMNS = ["t", "fz"]
CONTACT_COLUMNS = ["t", "cx", "cy"]
PAIR_COLUMNS = ["t"] + [f"f{i}" for i in range(1, 9)] + [f"s{i}" for i in range(1, 9)]
WARP_COLUMNS = ["sim_idx", "real_idx"]


def write_taxel_trace(trace, path):
    return write_csv(path, "taxel_trace", TAXEL_COLUMNS, np.column_stack([trace.times, trace.samples]))


def read_taxel_trace(path):
    from .oracle import TaxelTrace

    _, data = read_csv(path, "taxel_trace", TAXEL_COLUMNS)
    return TaxelTrace(data[:, 0].copy(), data[:, 1:].copy(), _rate_of(data[:, 0]))


def write_force_trace(trace, path):
    return write_csv(path, "force_trace", FORCE_COLUMNS, np.column_stack([trace.times, trace.samples]))


def read_force_trace(path):
    from .oracle import ForceTrace

    _, data = read_csv(path, "force_trace", FORCE_COLUMNS)
    return ForceTrace(data[:, 0].copy(), data[:, 1].copy(), _rate_of(data[:, 0]))


def _rate_of(times):
    if len(times) < 2:
        return float("nan")
    return float(1.0 / np.median(np.diff(times)))


def write_pairs(times, inputs, targets, path):
    return write_csv(path, "pairs", PAIR_COLUMNS, np.column_stack([times, inputs, targets]))


def read_pairs(path):
    _, data = read_csv(path, "pairs", PAIR_COLUMNS)
    return data[:, 0].copy(), data[:, 1:9].copy(), data[:, 9:17].copy()


def write_warp_path(path_obj, path):
    return write_csv(path, "warp_path", WARP_COLUMNS, np.asarray(path_obj.pairs, dtype=float).reshape(-1, 2))


def read_warp_path(path, total_cost=float("nan")):
    from .align import WarpPath

    _, data = read_csv(path, "warp_path", WARP_COLUMNS)
    return WarpPath([tuple(int(v) for v in row) for row in data], total_cost)


# --------------------------------------------------------------- recordings


def write_frames(frames, path):
    frames = np.ascontiguousarray(frames, dtype="<f8")
    T, n = frames.shape[:2]
    with open(path, "wb") as fh:
        fh.write(FRAMES_MAGIC + struct.pack("<II", T, n))
        fh.write(frames.tobytes())
    return file_digest(path)


def read_frames(path):
    raw = Path(path).read_bytes()
    if raw[:4] != FRAMES_MAGIC:
        raise CorruptionError(f"{path}: bad magic {raw[:4]!r}")
    T, n = struct.unpack("<II", raw[4:12])
    if len(raw) != 12 + T * n * 32:
        raise CorruptionError(f"{path}: expected {T}x{n} frames, size is {len(raw)} bytes")
    return np.frombuffer(raw, dtype="<f8", offset=12).reshape(T, n, 4).astype(np.float64)


def write_recording(rec, directory):
    """Write ``manifest.json``, ``frames.bin``, ``force_sim.csv`` and ``contact_sim.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {
        "frames.bin": write_frames(rec.frames, d / "frames.bin"),
        "force_sim.csv": write_csv(d / "force_sim.csv", "force_trace", FORCE_COLUMNS,
                                   np.column_stack([rec.times, rec.force])),
        "contact_sim.csv": write_csv(d / "contact_sim.csv", "contact_trace", CONTACT_COLUMNS,
                                     np.column_stack([rec.times, rec.contact_xy])),
    }
    dump_json({"kind": "sim_recording", "schema_version": SCHEMA_VERSION, "metadata": rec.metadata,
               "files": files}, d / "manifest.json")
    return files


def read_recording(directory):
    from .scenario import SimRecording

    d = Path(directory)
    if not (d / "manifest.json").exists():
        raise FileNotFoundError(d / "manifest.json")
    man = load_json(d / "manifest.json", "sim_recording")
    for name, digest in man["files"].items():
        verify_digest(d / name, digest)
    frames = read_frames(d / "frames.bin")
    _, force = read_csv(d / "force_sim.csv", "force_trace", FORCE_COLUMNS)
    _, contact = read_csv(d / "contact_sim.csv", "contact_trace", CONTACT_COLUMNS)
    if not (len(frames) == len(force) == len(contact)):
        raise CorruptionError(f"{d}: frame/force/contact lengths disagree")
    return SimRecording(force[:, 0].copy(), frames, force[:, 1].copy(), contact[:, 1:].copy(), man["metadata"])


def read_contact_history(directory):
    """Force and contact centroid of a recording without loading its frames."""
    from .oracle import ContactHistory

    d = Path(directory)
    man = load_json(d / "manifest.json", "sim_recording")
    for name in ("force_sim.csv", "contact_sim.csv"):
        verify_digest(d / name, man["files"][name])
    _, force = read_csv(d / "force_sim.csv", "force_trace", FORCE_COLUMNS)
    _, contact = read_csv(d / "contact_sim.csv", "contact_trace", CONTACT_COLUMNS)
    if len(force) != len(contact):
        raise CorruptionError(f"{d}: force/contact lengths disagree")
    return ContactHistory(force[:, 0].copy(), force[:, 1].copy(), contact[:, 1:].copy(), man["metadata"])


def verify_digest(path, digest):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    actual = file_digest(path)
    if actual != digest:
        raise CorruptionError(f"{path}: digest {actual} does not match manifest {digest}")


# ------------------------------------------------------ binary-blob documents


def encode_arrays(arrays):
    """Pack an ordered ``{name: array}`` into (layout, base64 blob of little-endian f64)."""
    layout, chunks = [], []
    for name, a in arrays.items():
        a = np.ascontiguousarray(a, dtype="<f8")
        layout.append({"name": name, "shape": list(a.shape)})
        chunks.append(a.tobytes())
    return layout, base64.b64encode(b"".join(chunks)).decode("ascii")


def decode_arrays(layout, blob):
    raw = base64.b64decode(blob)
    out, pos = {}, 0
    for item in layout:
        n = int(np.prod(item["shape"], dtype=np.int64)) * 8
        if pos + n > len(raw):
            raise CorruptionError("parameter blob shorter than its layout")
        out[item["name"]] = np.frombuffer(raw[pos : pos + n], dtype="<f8").reshape(item["shape"]).astype(np.float64)
        pos += n
    if pos != len(raw):
        raise CorruptionError("parameter blob longer than its layout")
    return out


def write_blob_document(path, kind, header, arrays):
    layout, blob = encode_arrays(arrays)
    doc = {"kind": kind, "schema_version": SCHEMA_VERSION, "format_version": SCHEMA_VERSION,
           "header": header, "layout": layout, "blob_digest": fnv1a64(base64.b64decode(blob)), "blob": blob}
    dump_json(doc, path)
    return file_digest(path)


def read_blob_document(path, kind):
    doc = load_json(path, kind)
    if fnv1a64(base64.b64decode(doc["blob"])) != doc["blob_digest"]:
        raise CorruptionError(f"{path}: parameter blob digest mismatch")
    return doc["header"], decode_arrays(doc["layout"], doc["blob"])


def write_report(report, path):
    dump_json({"kind": "report", "schema_version": SCHEMA_VERSION, **report}, path)
    return file_digest(path)


def read_report(path):
    return load_json(path, "report")


# ----------------------------------------------------------------- manifest


@dataclass
class ManifestEntry:
    id: str
    kind: str
    path: str
    digest: str
    seed: int = 0
    note: str = ""


class Manifest:
    """Dataset index with relative paths, so a dataset directory can be moved wholesale."""

    FILENAME = "manifest.json"

    def __init__(self, root, entries=None):
        self.root = Path(root)
        self.entries = {}
        for e in entries or []:
            self.add(e)

    def add(self, entry):
        if entry.kind not in KINDS:
            raise InvalidArgument(f"unknown artifact kind {entry.kind!r}")
        self.entries[entry.id] = entry

    def register(self, id, kind, path, seed=0, note=""):
        rel = Path(path).relative_to(self.root).as_posix()
        entry = ManifestEntry(id, kind, rel, file_digest(path), int(seed), note)
        self.add(entry)
        return entry

    def of_kind(self, kind):
        return [e for e in self.sorted() if e.kind == kind]

    def sorted(self):
        return [self.entries[k] for k in sorted(self.entries)]

    def get(self, id):
        return self.entries.get(id)

    def path(self, id):
        return self.root / self.entries[id].path

    def require(self, id, kind):
        from .errors import MissingArtifactError

        e = self.entries.get(id)
        if e is None or e.kind != kind or not (self.root / e.path).exists():
            raise MissingArtifactError(kind)
        verify_digest(self.root / e.path, e.digest)
        return self.root / e.path

    def save(self):
        doc = {
            "kind": "manifest", "schema_version": SCHEMA_VERSION,
            "entries": [e.__dict__ for e in self.sorted()],
        }
        dump_json(doc, self.root / self.FILENAME)

    @classmethod
    def load(cls, root, verify=True):
        root = Path(root)
        doc = load_json(root / cls.FILENAME, "manifest")
        m = cls(root, [ManifestEntry(**e) for e in doc["entries"]])
        if verify:
            for e in m.sorted():
                verify_digest(root / e.path, e.digest)
        return m

    @classmethod
    def open(cls, root):
        root = Path(root)
        if (root / cls.FILENAME).exists():
            return cls.load(root, verify=False)
        return cls(root)


# -------------------------------------------------------------------- split


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    fractions: tuple = (0.8, 0.1, 0.1)
    granularity: str = "frame"

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ConfigurationError(f"split fractions must be three non-negative values, got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must sum to 1, got {sum(self.fractions)}")
        if self.granularity not in ("frame", "trial"):
            raise ConfigurationError(f"granularity must be 'frame' or 'trial', got {self.granularity!r}")


def split(items, spec, groups=None):
    """Seeded shuffle then contiguous partition into (train, val, test) index arrays.

    ``items`` is a count or a sequence. At trial granularity ``groups`` gives each
    item's trial id and whole trials are assigned to one split.
    """
    from .rng import make_rng

    n = items if isinstance(items, (int, np.integer)) else len(items)
    if spec.granularity == "trial" and groups is not None:
        groups = np.asarray(groups)
        units = np.unique(groups)
    else:
        units = np.arange(n)
    m = len(units)
    counts = [int(round(f * m)) for f in spec.fractions[:2]]
    counts.append(m - sum(counts))
    for f, c, name in zip(spec.fractions, counts, ("train", "val", "test")):
        if f > 0 and c <= 0:
            raise ConfigurationError(f"too few items ({m}) for a nonempty {name} split")
    if counts[2] < 0:
        raise ConfigurationError(f"too few items ({m}) for split {spec.fractions}")
    perm = units[make_rng(spec.seed).permutation(m)]
    bounds = np.cumsum([0] + counts)
    parts = [np.sort(perm[bounds[k] : bounds[k + 1]]) for k in range(3)]
    if spec.granularity == "trial" and groups is not None:
        parts = [np.flatnonzero(np.isin(groups, p)) for p in parts]
    return tuple(parts)
