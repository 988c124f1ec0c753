"""Pipeline stages over a workspace directory.

Layout under the output root::

    manifest.json             index of every artifact (relative paths + digests)
    mesh/mesh.tetmesh
    dataset/<rid>/            one simulated indentation per recording id
        manifest.json frames.bin force_sim.csv contact_sim.csv   (simulate)
        taxels_real.csv force_real.csv                          (oracle)
        warp.csv                                                (align)
        pairs.csv                                               (features)
        taxels_pred.csv                                         (predict)
    models/digitac.json
    reports/*.json
    render/*.pgm render/*.csv

Stages communicate only through these files; each one opens the manifest,
checks that its inputs exist and registers what it writes. Nothing time- or
host-dependent is written, so equal configs and seeds give equal trees.
"""

import logging
from pathlib import Path

import numpy as np

from . import dataset, features, mesh as meshlib, scenario
from .align import dtw, normalize_for_dtw, warp_taxels
from .dataset import Manifest, SplitSpec
from .errors import MissingArtifactError, SolverFailure
from .nn.mlp import load_mlp, predict_digitac, save_mlp, train_digitac
from .oracle import emulate
from .rng import Stream, derive_seed
from .vis import GridSpec, export_grid_csv, export_pgm, rbf_pressure_map

log = logging.getLogger(__name__)

STAGES = ("mesh-gen", "simulate", "oracle", "align", "features", "train", "predict", "eval", "render")


class Workspace:
    def __init__(self, cfg, root):
        self.cfg = cfg
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest.open(self.root)

    def dir(self, *parts):
        d = self.root.joinpath(*parts)
        d.mkdir(parents=True, exist_ok=True)
        return d

    def require(self, id, kind):
        return self.manifest.require(id, kind)

    def register(self, id, kind, path, seed=0, note=""):
        return self.manifest.register(id, kind, path, seed, note)

    def recordings(self):
        """Ids of the successfully simulated recordings, in order."""
        ids = [e.id.split("/")[0] for e in self.manifest.of_kind("sim_recording")]
        if not ids:
            raise MissingArtifactError("sim_recording")
        return ids

    def load_mesh(self):
        return meshlib.read_mesh(self.require("mesh", "mesh"))

    def node_sets(self, mesh):
        return meshlib.classify_nodes(mesh, self.cfg.taxel_positions, self.cfg.taxels.cluster_radius)

    def clusters(self, mesh):
        f = self.cfg.features
        return features.centroid_clusters(mesh, self.cfg.taxel_positions, f.cluster_radius, f.top_fraction)

    def split(self):
        """Recording-level train/test partition (whole recordings go to one side)."""
        ids = self.recordings()
        spec = SplitSpec(derive_seed(self.cfg.seed, Stream.SPLIT),
                         (1.0 - self.cfg.eval.test_fraction, 0.0, self.cfg.eval.test_fraction), "trial")
        train, _, test = dataset.split(len(ids), spec)
        return [ids[i] for i in train], [ids[i] for i in test]

    def save(self):
        self.manifest.save()


def stage_mesh_gen(ws):
    m = meshlib.generate_box_mesh(ws.cfg.mesh.dims, ws.cfg.mesh.resolution)
    ws.node_sets(m)  # fail early if a taxel cluster is empty
    path = ws.dir("mesh") / "mesh.tetmesh"
    meshlib.write_mesh(m, path)
    ws.register("mesh", "mesh", path, note=f"{m.n_vertices} vertices, {m.n_tets} tets")
    log.info("mesh: %d vertices, %d tets", m.n_vertices, m.n_tets)
    return {"n_vertices": m.n_vertices, "n_tets": m.n_tets}


def stage_simulate(ws, threads=1):
    m = ws.load_mesh()
    seed = derive_seed(ws.cfg.seed, Stream.SIMULATE)
    entries = scenario.batch_generate(ws.cfg.scenarios, m, ws.node_sets(m), ws.cfg.material, ws.dir("dataset"),
                                      seed, ws.cfg.solver, threads, ws.manifest.get("mesh").digest)
    for e in entries:
        if e["status"] == "ok":
            ws.register(f"{e['id']}/sim", "sim_recording", ws.root / "dataset" / e["id"] / "manifest.json",
                        e["seed"])
    failed = [e for e in entries if e["status"] != "ok"]
    report = {"stage": "simulate", "recordings": entries, "n_ok": len(entries) - len(failed), "n_failed": len(failed)}
    path = ws.dir("reports") / "simulate.json"
    dataset.write_report(report, path)
    ws.register("simulate", "report", path)
    if len(failed) == len(entries):
        raise SolverFailure(f"all {len(entries)} scenarios failed; first error: {failed[0]['error']}")
    log.info("simulate: %d recordings (%d failed)", report["n_ok"], len(failed))
    return report


def stage_oracle(ws):
    root = derive_seed(ws.cfg.seed, Stream.ORACLE)
    taxel_xy = ws.cfg.taxel_positions
    for k, rid in enumerate(ws.recordings()):
        ws.require(f"{rid}/sim", "sim_recording")
        hist = dataset.read_contact_history(ws.root / "dataset" / rid)
        seed = derive_seed(root, k)
        taxels, force = emulate(hist, taxel_xy, ws.cfg.oracle.with_seed(seed))
        d = ws.root / "dataset" / rid
        dataset.write_taxel_trace(taxels, d / "taxels_real.csv")
        dataset.write_force_trace(force, d / "force_real.csv")
        ws.register(f"{rid}/taxels", "taxel_trace", d / "taxels_real.csv", seed)
        ws.register(f"{rid}/force", "force_trace", d / "force_real.csv", seed)
    return {"n_recordings": len(ws.recordings())}


def stage_align(ws):
    a = ws.cfg.align
    rows = []
    for rid in ws.recordings():
        taxels = dataset.read_taxel_trace(ws.require(f"{rid}/taxels", "taxel_trace"))
        real_force = dataset.read_force_trace(ws.require(f"{rid}/force", "force_trace"))
        hist = dataset.read_contact_history(ws.root / "dataset" / rid)
        path = dtw(normalize_for_dtw(hist.force, a.normalize), normalize_for_dtw(real_force.samples, a.normalize),
                   a.band)
        warp_path = ws.root / "dataset" / rid / "warp.csv"
        dataset.write_warp_path(path, warp_path)
        ws.register(f"{rid}/warp", "warp_path", warp_path)
        rows.append({"id": rid, "total_cost": path.total_cost, "path_length": len(path),
                     "n_sim": len(hist), "n_real": len(taxels)})
    report = {"stage": "align", "normalize": a.normalize, "band": a.band, "policy": a.policy, "recordings": rows}
    path = ws.dir("reports") / "align.json"
    dataset.write_report(report, path)
    ws.register("align", "report", path)
    return report


def stage_features(ws):
    m = ws.load_mesh()
    clusters = ws.clusters(m)
    baselines = np.asarray(ws.cfg.oracle.baselines, float)
    n_pairs = 0
    for rid in ws.recordings():
        taxels = dataset.read_taxel_trace(ws.require(f"{rid}/taxels", "taxel_trace"))
        path = dataset.read_warp_path(ws.require(f"{rid}/warp", "warp_path"))
        rec = dataset.read_recording(ws.root / "dataset" / rid)
        warped = warp_taxels(taxels, path, len(rec), ws.cfg.align.policy)
        times, inputs, targets = features.build_pairs(rec, warped, clusters, baselines,
                                                      ws.cfg.features.epsilon_floor)
        out = ws.root / "dataset" / rid / "pairs.csv"
        dataset.write_pairs(times, inputs, targets, out)
        ws.register(f"{rid}/pairs", "pairs", out)
        n_pairs += len(times)
    return {"n_pairs": n_pairs}


def _load_pairs(ws, ids):
    parts = [dataset.read_pairs(ws.require(f"{rid}/pairs", "pairs")) for rid in ids]
    return np.concatenate([p[1] for p in parts]), np.concatenate([p[2] for p in parts])


def stage_train(ws):
    train_ids, test_ids = ws.split()
    inputs, targets = _load_pairs(ws, train_ids)
    tcfg = ws.cfg.train
    tcfg.seed = derive_seed(ws.cfg.seed, Stream.TRAIN)
    model, report = train_digitac(inputs, targets, tcfg, ws.cfg.oracle.baselines)
    report.update(train_recordings=train_ids, test_recordings=test_ids)
    path = ws.dir("models") / "digitac.json"
    save_mlp(model, path)
    ws.register("digitac", "model", path, tcfg.seed)
    rpath = ws.dir("reports") / "train_digitac.json"
    dataset.write_report(report, rpath)
    ws.register("train_digitac", "report", rpath, tcfg.seed)
    log.info("train: %d pairs, best val L1 %.4f at epoch %d", report["n_pairs"], report["best_val_loss"],
             report["best_epoch"])
    return report


def stage_predict(ws):
    model = load_mlp(ws.require("digitac", "model"))
    for rid in ws.recordings():
        times, inputs, _ = dataset.read_pairs(ws.require(f"{rid}/pairs", "pairs"))
        pred = predict_digitac(model, inputs)
        out = ws.root / "dataset" / rid / "taxels_pred.csv"
        dataset.write_csv(out, "taxel_trace", dataset.TAXEL_COLUMNS, np.column_stack([times, pred]))
        ws.register(f"{rid}/pred", "taxel_trace", out, note="DigiTac prediction on the simulation timeline")
    return {"n_recordings": len(ws.recordings())}


def fidelity(ws, ids):
    """Mean |prediction - aligned oracle reading| over frames and taxels, and the peak gauge pressure."""
    lam = np.asarray(ws.cfg.oracle.baselines, float)
    errs, peak = [], 0.0
    for rid in ids:
        _, _, targets = dataset.read_pairs(ws.require(f"{rid}/pairs", "pairs"))
        _, pred = dataset.read_csv(ws.require(f"{rid}/pred", "taxel_trace"), "taxel_trace", dataset.TAXEL_COLUMNS)
        errs.append(np.abs(pred[:, 1:] - lam - targets).ravel())
        peak = max(peak, float(targets.max()))
    mae = float(np.concatenate(errs).mean())
    return mae, peak


def stage_eval(ws):
    train_ids, test_ids = ws.split()
    mae, peak = fidelity(ws, test_ids)
    train_mae, _ = fidelity(ws, train_ids)
    report = {
        "stage": "eval",
        "test_recordings": test_ids,
        "mae_kpa": mae,
        "train_mae_kpa": train_mae,
        "max_pressure_kpa": peak,
        "fidelity_pct": 100.0 * mae / peak if peak > 0 else float("nan"),
    }
    path = ws.dir("reports") / "eval.json"
    dataset.write_report(report, path)
    ws.register("eval", "report", path)
    return report


def stage_render(ws):
    """Oracle and predicted pressure maps at the peak frame of the strongest test recording."""
    _, test_ids = ws.split()
    r = ws.cfg.render
    lam = np.asarray(ws.cfg.oracle.baselines, float)
    best = None
    for rid in test_ids:
        _, _, targets = dataset.read_pairs(ws.require(f"{rid}/pairs", "pairs"))
        t = int(np.argmax(targets.sum(axis=1)))
        if best is None or targets[t].sum() > best[2]:
            best = (rid, t, targets[t].sum())
    rid, t, _ = best
    _, _, targets = dataset.read_pairs(ws.require(f"{rid}/pairs", "pairs"))
    _, pred = dataset.read_csv(ws.require(f"{rid}/pred", "taxel_trace"), "taxel_trace", dataset.TAXEL_COLUMNS)
    dims = ws.cfg.mesh.dims
    spec = GridSpec(r.width, r.height, (0.0, 0.0, dims[0], dims[1]))
    maps = {
        "oracle": rbf_pressure_map(targets[t] + lam, lam, ws.cfg.taxel_positions, spec, r.shape_sigma, r.mode,
                                   r.paper_literal_sign),
        "pred": rbf_pressure_map(pred[t, 1:], lam, ws.cfg.taxel_positions, spec, r.shape_sigma, r.mode,
                                 r.paper_literal_sign),
    }
    lo = min(0.0, min(g.values.min() for g in maps.values()))
    hi = max(g.values.max() for g in maps.values())
    if hi <= lo:
        hi = lo + 1.0
    out = ws.dir("render")
    for name, grid in maps.items():
        export_grid_csv(grid, out / f"{name}.csv")
        export_pgm(grid, out / f"{name}.pgm", (lo, hi))
        ws.register(f"render/{name}_grid", "grid", out / f"{name}.csv")
        ws.register(f"render/{name}_image", "image", out / f"{name}.pgm", note=f"range {lo:.6g}..{hi:.6g} kPa")
    return {"recording": rid, "frame": t, "value_range": [float(lo), float(hi)]}


def run_stage(ws, name, threads=1):
    fn = {
        "mesh-gen": stage_mesh_gen, "simulate": lambda w: stage_simulate(w, threads), "oracle": stage_oracle,
        "align": stage_align, "features": stage_features, "train": stage_train, "predict": stage_predict,
        "eval": stage_eval, "render": stage_render,
    }[name]
    try:
        return fn(ws)
    finally:
        ws.save()


def run_pipeline(ws, threads=1):
    results = {}
    for name in STAGES:
        log.info("stage %s", name)
        results[name] = run_stage(ws, name, threads)
    return results
