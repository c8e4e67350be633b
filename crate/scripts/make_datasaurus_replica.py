#!/usr/bin/env python3
"""Regenerate a Datasaurus Dozen replica TSV.

The dino seed points and the simulated-annealing procedure come from the
`same-stats` package (Apache-2.0), itself a port of the Autodesk "Same Stats,
Different Graphs" code that produced the original Datasaurus Dozen. Each target
shape is reached by perturbing the dino one point at a time while keeping the
x/y means, standard deviations and correlation fixed to two decimals.

The output is NOT the published DatasaurusDozen.tsv; it has the same layout
(`dataset\tx\ty`, 13 sets x 142 points) and the same construction. Supply the
real file through `--datasaurus` / `RPD_DATA_DIR` when it is available.

usage: make_datasaurus_replica.py DINO_CSV OUT_TSV [--iters N] [--seed S]
"""

import argparse
import math

import numpy as np

CX, CY = 54.26, 47.83

LINES = {
    "x_shape": [[(20, 0), (100, 100)], [(20, 100), (100, 0)]],
    "h_lines": [[(0, y), (100, y)] for y in (10, 30, 50, 70, 90)],
    "v_lines": [[(x, 0), (x, 100)] for x in (10, 30, 50, 70, 90)],
    "wide_lines": [[(10, 0), (10, 100)], [(90, 0), (90, 100)]],
    "high_lines": [[(0, 10), (100, 10)], [(0, 90), (100, 90)]],
    "slant_up": [
        [(0, 0), (100, 100)],
        [(0, 30), (70, 100)],
        [(30, 0), (100, 70)],
        [(50, 0), (100, 50)],
        [(0, 50), (50, 100)],
    ],
    "slant_down": [
        [(0, 100), (100, 0)],
        [(0, 70), (70, 0)],
        [(30, 100), (100, 30)],
        [(0, 50), (50, 0)],
        [(50, 100), (100, 50)],
    ],
}


def _star():
    raw = [10, 40, 40, 40, 50, 10, 60, 40, 90, 40, 65, 60, 75, 90, 50, 70, 25, 90, 35, 60]
    pts = [(raw[i] * 0.8 + 20, 100 - raw[i + 1]) for i in range(0, len(raw), 2)]
    pts.append(pts[0])
    return [[pts[i], pts[i + 1]] for i in range(len(pts) - 1)]


LINES["star"] = _star()

ORDER = [
    "dino", "away", "h_lines", "v_lines", "x_shape", "star", "high_lines",
    "dots", "circle", "bullseye", "slant_up", "slant_down", "wide_lines",
]


def seg_dist(px, py, a, b):
    (x1, y1), (x2, y2) = a, b
    mag = math.hypot(x2 - x1, y2 - y1)
    u = ((px - x1) * (x2 - x1) + (py - y1) * (y2 - y1)) / (mag * mag)
    if u < 1e-5 or u > 1:
        return min(math.hypot(px - x1, py - y1), math.hypot(px - x2, py - y2))
    return math.hypot(px - (x1 + u * (x2 - x1)), py - (y1 + u * (y2 - y1)))


def shape_dist(target, x, y):
    if target == "circle":
        return abs(math.hypot(x - CX, y - CY) - 30)
    if target == "bullseye":
        d = math.hypot(x - CX, y - CY)
        return min(abs(d - 18), abs(d - 37))
    if target == "dots":
        return min(math.hypot(cx - x, cy - y) for cx in (25, 50, 75) for cy in (20, 50, 80))
    if target == "away":
        return 0.0
    return min(seg_dist(x, y, l[0], l[1]) for l in LINES[target])


def stats(xs, ys):
    return np.array([
        xs.mean(), ys.mean(), xs.std(ddof=1), ys.std(ddof=1), np.corrcoef(xs, ys)[0, 1],
    ])


def same(a, b):
    return np.all(np.floor(a * 100) == np.floor(b * 100))


def anneal(xs, ys, target, iters, rng, shake=0.1, allowed=2.0, max_temp=0.4):
    base = stats(xs, ys)
    xs, ys = xs.copy(), ys.copy()
    n = len(xs)
    for i in range(iters + 1):
        v = (iters - i) / iters
        ease = 2 * v * v if v < 0.5 else -2 * v * v + 4 * v - 1
        temp = max_temp * ease
        row = rng.integers(n)
        ox, oy = xs[row], ys[row]
        do_bad = target == "away" or rng.random() < temp
        old = shape_dist(target, ox, oy)
        while True:
            nx = ox + rng.standard_normal() * shake
            ny = oy + rng.standard_normal() * shake
            new = shape_dist(target, nx, ny)
            if (new < old or new < allowed or do_bad) and 0 < nx < 100 and 0 < ny < 100:
                break
        xs[row], ys[row] = nx, ny
        if not same(base, stats(xs, ys)):
            xs[row], ys[row] = ox, oy
    return xs, ys


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dino_csv")
    ap.add_argument("out_tsv")
    ap.add_argument("--iters", type=int, default=200000)
    ap.add_argument("--seed", type=int, default=2017)
    args = ap.parse_args()

    dino = np.loadtxt(args.dino_csv, delimiter=",")
    xs0, ys0 = dino[:, 0], dino[:, 1]
    with open(args.out_tsv, "w") as out:
        out.write("dataset\tx\ty\n")
        for k, name in enumerate(ORDER):
            if name == "dino":
                xs, ys = xs0, ys0
            else:
                rng = np.random.default_rng(args.seed + k)
                xs, ys = anneal(xs0, ys0, name, args.iters, rng)
            for x, y in zip(xs, ys):
                out.write(f"{name}\t{x:.6f}\t{y:.6f}\n")
            print(name, stats(xs, ys).round(3))


if __name__ == "__main__":
    main()
