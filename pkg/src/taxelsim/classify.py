"""Indenter-shape classification with and without simulated augmentation.

Real trials: FEM ground truth -> sensor emulator -> 55 Hz taxel trace.
Simulated trials: FEM -> stress features -> trained regressor -> taxel trace.
Both are resampled on a fixed time window to ``length`` samples, so absolute
timing (ramp duration, hold) is preserved across trials.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import fem
from . import dataset
from .dataset import SplitSpec, split
from .features import StressClusters, aggregate_frames
from .nn.mlp import load_mlp, predict_digitac
from .nn.transformer import evaluate, load_classifier, save_classifier, train_classifier
from .oracle import ContactHistory, emulate
from .rng import Stream, derive_seed, make_rng
from .scenario import GreenContactSolver, Indenter, check_scenario, make_trajectory

log = logging.getLogger(__name__)


@dataclass
class Trial:
    label: int
    indenter: Indenter
    depth: float
    speed: float
    seed: int
    source: str  # "real" or "sim"

    def to_dict(self):
        return {"label": self.label, "indenter": self.indenter.to_dict(), "depth": self.depth, "speed": self.speed,
                "seed": self.seed, "source": self.source}


def sample_trials(ccfg, dims, source, per_class, rng, seed_base):
    names = list(ccfg.indenters)
    center = np.array(dims[:2]) / 2
    trials = []
    for label, name in enumerate(names):
        base = Indenter.from_dict(ccfg.indenters[name])
        for _ in range(per_class):
            depth = rng.uniform(*ccfg.depth_range)
            speed = rng.uniform(*ccfg.speed_range)
            yaw = rng.uniform(*ccfg.yaw_range)
            offset = center + rng.uniform(-ccfg.jitter, ccfg.jitter, 2)
            seed = derive_seed(seed_base, len(trials))
            trials.append(Trial(label, base.with_pose(offset, yaw), float(depth), float(speed), seed, source))
    return trials


def contact_onset(times, samples, fraction=0.05):
    """First time the summed gauge signal reaches ``fraction`` of its peak."""
    total = np.asarray(samples, float).sum(axis=1)
    peak = total.max()
    if peak <= 0:
        return float(times[0])
    return float(times[np.argmax(total >= fraction * peak)])


def resample_window(times, samples, window, length, pre_roll=0.1):
    """Linear resampling of (n, C) samples onto ``length`` points spanning ``window`` seconds
    from ``pre_roll`` before contact onset. Onset alignment removes the sensor latency,
    which simulated traces do not have."""
    start = contact_onset(times, samples) - pre_roll
    grid = start + np.linspace(0.0, window, length)
    samples = np.asarray(samples, float)
    return np.column_stack([np.interp(grid, times, samples[:, c]) for c in range(samples.shape[1])])


class TrialSimulator:
    def __init__(self, mesh, node_sets, material, clusters):
        self.mesh = mesh
        self.contact = GreenContactSolver(mesh, node_sets, material)
        rows = np.unique(np.concatenate(clusters.rows))
        self.recovery = fem.StressRecovery(mesh, material, rows)
        remap = {r: i for i, r in enumerate(rows)}
        self.clusters = StressClusters(tuple(np.array([remap[r] for r in c]) for c in clusters.rows),
                                       clusters.taxel_positions)

    def run(self, trial, ccfg, with_features):
        traj = make_trajectory("press_hold_release", trial.depth, trial.speed, ccfg.hold, ccfg.frame_rate,
                               trial.indenter.offset, trial.indenter.yaw)
        check_scenario(self.mesh, trial.indenter, traj)
        n = len(traj)
        force = np.empty(n)
        cxy = np.empty((n, 2))
        frames = np.empty((n, len(self.recovery.tets), 4)) if with_features else None
        for t in range(n):
            u, f, c, _ = self.contact.displacements(trial.indenter, traj.depth[t])
            force[t], cxy[t] = f, c
            if with_features:
                st = self.recovery(u)
                frames[t, :, :3] = st.centroids
                frames[t, :, 3] = st.von_mises
        feats = aggregate_frames(frames, self.clusters) if with_features else None
        return traj.times, force, cxy, feats


def build_sequences(cfg, mesh, node_sets, clusters, digitac, seed):
    """Simulate all real and synthetic trials; return arrays plus trial metadata."""
    ccfg = cfg.classify
    rng = make_rng(derive_seed(seed, Stream.CLASSIFY_TRIALS))
    oracle_root = derive_seed(seed, Stream.ORACLE)
    real = sample_trials(ccfg, cfg.mesh.dims, "real", ccfg.real_trials_per_class, rng, oracle_root)
    sim = sample_trials(ccfg, cfg.mesh.dims, "sim", ccfg.sim_trials_per_class, rng, oracle_root + 1)
    sim_runner = TrialSimulator(mesh, node_sets, cfg.material, clusters)
    length = ccfg.model_config.length
    taxel_xy = cfg.taxel_positions
    lam = np.asarray(cfg.oracle.baselines, float)

    def real_seq(tr):
        times, force, cxy, _ = sim_runner.run(tr, ccfg, with_features=False)
        trace, _ = emulate(ContactHistory(times, force, cxy), taxel_xy, cfg.oracle.with_seed(tr.seed))
        return resample_window(trace.times, trace.samples - lam, ccfg.window, length)

    def sim_seq(tr):
        times, _, _, feats = sim_runner.run(tr, ccfg, with_features=True)
        pred = predict_digitac(digitac, feats) - lam
        return resample_window(times, pred, ccfg.window, length)

    xr = np.stack([real_seq(t) for t in real]) if real else np.zeros((0, length, 8))
    xs = np.stack([sim_seq(t) for t in sim]) if sim else np.zeros((0, length, 8))
    yr = np.array([t.label for t in real], dtype=np.int64)
    ys = np.array([t.label for t in sim], dtype=np.int64)
    return xr, yr, xs, ys, [t.to_dict() for t in real + sim]


def split_real(labels, ccfg, seed):
    """Per-class trial split of the real set into train/test index arrays."""
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        spec = SplitSpec(derive_seed(seed, int(c)), (ccfg.real_train_fraction, 0.0, 1.0 - ccfg.real_train_fraction),
                         "trial")
        tr, _, te = split(len(idx), spec)
        train.append(idx[tr])
        test.append(idx[te])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def train_arms(xr, yr, xs, ys, labels, ccfg, seed):
    """Train the real-only and hybrid classifiers on the training part of the real set."""
    train_idx, test_idx = split_real(yr, ccfg, derive_seed(seed, Stream.CLASSIFY_SPLIT))
    tcfg = ccfg.train_config
    tcfg.seed = derive_seed(seed, Stream.CLASSIFY_TRAIN)
    arms = {
        "real_only": (xr[train_idx], yr[train_idx]),
        "hybrid": (np.concatenate([xr[train_idx], xs]), np.concatenate([yr[train_idx], ys])),
    }
    results = {}
    for arm, (x, y) in arms.items():
        log.info("training %s classifier on %d sequences", arm, len(x))
        model, report = train_classifier(x, y, labels, tcfg, ccfg.model_config)
        report.update(arm=arm, n_real_train=int(len(train_idx)), n_sim_train=int(len(x) - len(train_idx)))
        results[arm] = (model, report)
    return results, train_idx, test_idx


# ------------------------------------------------------------------ stages

ARMS = ("real_only", "hybrid")


def _require_classify(ws):
    if ws.cfg.classify is None:
        from .errors import ConfigurationError

        raise ConfigurationError("config has no [classify] section")
    return ws.cfg.classify


def stage_classify_train(ws):
    ccfg = _require_classify(ws)
    digitac = load_mlp(ws.require("digitac", "model"))
    m = ws.load_mesh()
    xr, yr, xs, ys, trials = build_sequences(ws.cfg, m, ws.node_sets(m), ws.clusters(m), digitac, ws.cfg.seed)
    labels = list(ccfg.indenters)
    results, train_idx, test_idx = train_arms(xr, yr, xs, ys, labels, ccfg, ws.cfg.seed)

    out = ws.dir("classify")
    header = {"labels": labels, "window": ccfg.window, "length": ccfg.model_config.length, "trials": trials,
              "real_train": train_idx.tolist(), "real_test": test_idx.tolist()}
    dataset.write_blob_document(out / "sequences.json", "sequence_set", header,
                                {"x_real": xr, "y_real": yr, "x_sim": xs, "y_sim": ys})
    ws.register("classify/sequences", "sequence_set", out / "sequences.json", ws.cfg.seed)
    summary = {}
    for arm, (model, report) in results.items():
        mpath = ws.dir("models") / f"classifier_{arm}.json"
        save_classifier(model, mpath)
        ws.register(f"classifier_{arm}", "model", mpath, report["seed"])
        rpath = ws.dir("reports") / f"classify_train_{arm}.json"
        dataset.write_report(report, rpath)
        ws.register(f"classify_train_{arm}", "report", rpath, report["seed"])
        summary[arm] = {"n_train": report["n_train"], "best_epoch": report["best_epoch"]}
    return summary


def stage_classify_eval(ws):
    header, arrays = dataset.read_blob_document(ws.require("classify/sequences", "sequence_set"), "sequence_set")
    test = np.asarray(header["real_test"], dtype=np.int64)
    x, y = arrays["x_real"][test], arrays["y_real"][test].astype(np.int64)
    report = {"stage": "classify_eval", "labels": header["labels"], "n_test": int(len(test))}
    for arm in ARMS:
        model = load_classifier(ws.require(f"classifier_{arm}", "model"))
        report[arm] = evaluate(model, x, y)
    report["gap_pp"] = 100.0 * (report["hybrid"]["accuracy"] - report["real_only"]["accuracy"])
    path = ws.dir("reports") / "classify_eval.json"
    dataset.write_report(report, path)
    ws.register("classify_eval", "report", path)
    return report
