"""Gaussian RBF pressure maps over the sensor surface, with PGM and CSV export.

Coefficients are ``p_i - lambda_i``, so a loaded sensor maps to positive
pressure and an unloaded one to an identically zero grid.
``paper_literal_sign=True`` flips them to ``lambda_i - p_i``.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, InvalidArgument


@dataclass
class PressureGrid:
    width: int
    height: int
    origin: tuple  # (x0, y0) of the first cell center, m
    cell_size: tuple  # (dx, dy), m
    values: np.ndarray  # (height, width) kPa gauge

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.height, self.width)
        if self.width < 1 or self.height < 1:
            raise InvalidArgument("grid dimensions must be >= 1")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgument("grid values must be finite")

    def centers(self):
        xs = self.origin[0] + self.cell_size[0] * np.arange(self.width)
        ys = self.origin[1] + self.cell_size[1] * np.arange(self.height)
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class GridSpec:
    width: int = 64
    height: int = 32
    extent: tuple = (0.0, 0.0, 0.040, 0.024)  # xmin, ymin, xmax, ymax

    def grid(self, values=None):
        x0, y0, x1, y1 = self.extent
        dx, dy = (x1 - x0) / self.width, (y1 - y0) / self.height
        v = np.zeros((self.height, self.width)) if values is None else values
        return PressureGrid(self.width, self.height, (x0 + dx / 2, y0 + dy / 2), (dx, dy), v)


def gaussian(r, sigma):
    return np.exp(-(np.asarray(r) ** 2) / (2.0 * sigma * sigma))


def rbf_coefficients(readings, baselines, taxel_xy, shape_sigma, mode="direct", paper_literal_sign=False):
    delta = np.asarray(readings, float) - np.asarray(baselines, float)
    if paper_literal_sign:
        delta = -delta
    if mode == "direct":
        return delta
    if mode != "exact":
        raise InvalidArgument(f"unknown RBF mode {mode!r}")
    xy = np.asarray(taxel_xy, float)[:, :2]
    phi = gaussian(np.linalg.norm(xy[:, None] - xy[None], axis=2), shape_sigma)
    if np.linalg.cond(phi) > 1e12:
        raise DegenerateGeometryError("RBF interpolation matrix is singular (coincident taxels?)")
    return np.linalg.solve(phi, delta)


def rbf_pressure_map(readings, baselines, taxel_xy, grid=GridSpec(), shape_sigma=0.008, mode="direct",
                     paper_literal_sign=False):
    """Gauge pressure map ``f(x) = sum_i c_i * exp(-|x - x_i|^2 / (2 sigma^2))``."""
    if not shape_sigma > 0:
        raise InvalidArgument("shape_sigma must be positive")
    c = rbf_coefficients(readings, baselines, taxel_xy, shape_sigma, mode, paper_literal_sign)
    out = grid.grid() if isinstance(grid, GridSpec) else grid
    gx, gy = out.centers()
    xy = np.asarray(taxel_xy, float)[:, :2]
    values = np.zeros_like(gx)
    for ci, (tx, ty) in zip(c, xy):
        values += ci * gaussian(np.hypot(gx - tx, gy - ty), shape_sigma)
    out.values = values
    return out


def rbf_evaluate(points_xy, readings, baselines, taxel_xy, shape_sigma=0.008, mode="direct",
                 paper_literal_sign=False):
    c = rbf_coefficients(readings, baselines, taxel_xy, shape_sigma, mode, paper_literal_sign)
    p = np.atleast_2d(np.asarray(points_xy, float))
    xy = np.asarray(taxel_xy, float)[:, :2]
    return gaussian(np.linalg.norm(p[:, None] - xy[None], axis=2), shape_sigma) @ c


def to_samples(values, vmin, vmax):
    if not vmax > vmin:
        raise InvalidArgument("value range max must exceed min")
    scaled = (np.asarray(values, float) - vmin) / (vmax - vmin) * 65535.0
    return np.clip(np.round(scaled), 0, 65535).astype(np.uint16)


def export_pgm(grid, path, value_range):
    """Binary 16-bit PGM; ``value_range`` maps linearly onto 0..65535, clamped."""
    samples = to_samples(grid.values, *value_range)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.width} {grid.height}\n65535\n".encode("ascii"))
        fh.write(samples.astype(">u2").tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise InvalidArgument(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw[pos + 1 :], dtype=dtype, count=w * h).reshape(h, w).astype(np.int64)


def export_grid_csv(grid, path):
    if not str(path):
        raise InvalidArgument("empty output path")
    lines = [
        f"# origin={grid.origin[0]!r},{grid.origin[1]!r} cell_size={grid.cell_size[0]!r},{grid.cell_size[1]!r}"
        f" width={grid.width} height={grid.height}"
    ]
    lines += [",".join("%.17g" % v for v in row) for row in grid.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_csv(path):
    lines = Path(path).read_text().splitlines()
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    origin = tuple(float(v) for v in meta["origin"].split(","))
    cell = tuple(float(v) for v in meta["cell_size"].split(","))
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln.strip()])
    return PressureGrid(int(meta["width"]), int(meta["height"]), origin, cell, values)
