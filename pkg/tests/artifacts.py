"""Writer/reader pairs and sample payloads for every artifact kind, shared by the
dataset tests and the acceptance suite."""

import numpy as np

from taxelsim import dataset, mesh as meshlib, vis
from taxelsim.align import WarpPath
from taxelsim.nn.mlp import init_mlp, load_mlp, save_mlp
from taxelsim.oracle import ForceTrace, TaxelTrace
from taxelsim.scenario import SimRecording


def _awkward(rng, shape):
    """Floats that do not survive a short decimal representation."""
    return rng.normal(size=shape) * np.pi / 3 + 1e-17


def _write_recording(rec, path):
    dataset.write_recording(rec, path)


def _write_blob(doc, path):
    dataset.write_blob_document(path, "sequence_set", *doc)


def _read_blob(path):
    return dataset.read_blob_document(path, "sequence_set")


def _write_pairs(p, path):
    dataset.write_pairs(*p, path)


def _write_image(samples, path):
    # samples are already 16-bit levels; map them through an identity range
    grid = vis.PressureGrid(samples.shape[1], samples.shape[0], (0.0, 0.0), (1.0, 1.0), samples.astype(float))
    vis.export_pgm(grid, path, (0.0, 65535.0))


def samples(seed=0):
    """``{kind: (payload, write(payload, path), read(path), filename)}``."""
    rng = np.random.default_rng(seed)
    T = 7
    t = np.arange(T) / 55.0
    msh = meshlib.generate_box_mesh((0.04, 0.024, 0.01), (3, 2, 1))
    msh = meshlib.TetMesh(msh.vertices + _awkward(rng, msh.vertices.shape) * 1e-4, msh.tets, msh.surface_faces)
    return {
        "sim_recording": (
            SimRecording(t, _awkward(rng, (T, 5, 4)), _awkward(rng, T), _awkward(rng, (T, 2)),
                         {"indenter": "sphere", "depth": 0.0015}),
            _write_recording, dataset.read_recording, "rec"),
        "taxel_trace": (TaxelTrace(t, _awkward(rng, (T, 8)), 55.0), dataset.write_taxel_trace,
                        dataset.read_taxel_trace, "taxels.csv"),
        "force_trace": (ForceTrace(t, _awkward(rng, T), 55.0), dataset.write_force_trace, dataset.read_force_trace,
                        "force.csv"),
        "pairs": ((t, _awkward(rng, (T, 8)), _awkward(rng, (T, 8))), _write_pairs, dataset.read_pairs, "pairs.csv"),
        "model": (init_mlp(rng), save_mlp, load_mlp, "model.json"),
        "report": ({"stage": "x", "value": float(_awkward(rng, 1)[0]), "list": [1, 2, 3]}, dataset.write_report,
                   lambda p: {k: v for k, v in dataset.read_report(p).items() if k not in ("kind", "schema_version")},
                   "report.json"),
        "warp_path": (WarpPath([(0, 0), (1, 0), (1, 1), (2, 2)], 0.0), dataset.write_warp_path,
                      dataset.read_warp_path, "warp.csv"),
        "sequence_set": (({"labels": ["a", "b"]}, {"x_real": _awkward(rng, (3, 4, 8)), "y_real": np.array([0.0, 1, 1])}),
                         _write_blob, _read_blob, "seq.json"),
        "mesh": (msh, meshlib.write_mesh, meshlib.read_mesh, "mesh.txt"),
        "grid": (vis.PressureGrid(4, 3, (0.1, 0.2), (0.3, 0.4), _awkward(rng, (3, 4))), vis.export_grid_csv,
                 vis.read_grid_csv, "grid.csv"),
        "image": (rng.integers(0, 65536, size=(3, 5)), _write_image, vis.read_pgm, "image.pgm"),
    }


def tree_digest(path):
    """Digest of a file, or of every file in a directory keyed by name."""
    if path.is_dir():
        return {p.name: dataset.file_digest(p) for p in sorted(path.iterdir())}
    return dataset.file_digest(path)


def write_read_write(kind, tmp, seed=0):
    """Write the sample, read it back, write the result again; return both digests."""
    payload, write, read, name = samples(seed)[kind]
    first, second = tmp / f"1_{name}", tmp / f"2_{name}"
    write(payload, first)
    write(read(first), second)
    return tree_digest(first), tree_digest(second)
