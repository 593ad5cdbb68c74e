#!/usr/bin/env python3
"""Convert public graph dataset releases to the plain files hgcae reads.

Output directory layout:
    edges.txt   one "i j" pair per line, 0-based
    attrs.csv   headerless CSV, one row per node (omitted if no features)
    labels.txt  one integer per line (omitted if no labels)

Supported inputs:
    planetoid  ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}
    linqs      <name>.content and <name>.cites
    edgelist   any two-column edge file with arbitrary node ids
               (optional node feature CSV keyed by the same ids)

Needs numpy; the planetoid format also needs scipy.
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np


def write(out, edges, feats=None, labels=None):
    out.mkdir(parents=True, exist_ok=True)
    pairs = sorted({(min(a, b), max(a, b)) for a, b in edges if a != b})
    with open(out / "edges.txt", "w") as f:
        f.writelines(f"{a} {b}\n" for a, b in pairs)
    if feats is not None:
        np.savetxt(out / "attrs.csv", feats, delimiter=",", fmt="%.10g")
    if labels is not None:
        with open(out / "labels.txt", "w") as f:
            f.writelines(f"{int(l)}\n" for l in labels)
    n = feats.shape[0] if feats is not None else 1 + max(max(p) for p in pairs)
    print(f"{out}: {n} nodes, {len(pairs)} edges", file=sys.stderr)


def load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def planetoid(src, name):
    import scipy.sparse as sp

    obj = {k: load_pickle(src / f"ind.{name}.{k}") for k in ("x", "tx", "allx", "y", "ty", "ally", "graph")}
    test_idx = [int(l) for l in open(src / f"ind.{name}.test.index")]
    order = np.sort(test_idx)
    tx, ty = obj["tx"], obj["ty"]
    if name == "citeseer":
        # isolated test nodes are missing from tx/ty
        full = range(min(test_idx), max(test_idx) + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[order - min(order), :] = tx
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[order - min(order), :] = ty
        tx, ty = tx_ext, ty_ext
    feats = sp.vstack((obj["allx"], tx)).tolil()
    feats[test_idx, :] = feats[order, :]
    labels = np.vstack((obj["ally"], ty))
    labels[test_idx, :] = labels[order, :]
    n = feats.shape[0]
    edges = [(i, j) for i, nbrs in obj["graph"].items() for j in nbrs if i < n and j < n]
    return edges, np.asarray(feats.todense()), labels.argmax(1)


def linqs(src, name):
    ids, feats, classes = [], [], []
    for line in open(src / f"{name}.content"):
        f = line.split()
        ids.append(f[0])
        feats.append([float(v) for v in f[1:-1]])
        classes.append(f[-1])
    index = {p: i for i, p in enumerate(ids)}
    names = {c: i for i, c in enumerate(sorted(set(classes)))}
    edges = []
    for line in open(src / f"{name}.cites"):
        a, b = line.split()
        if a in index and b in index:
            edges.append((index[a], index[b]))
    return edges, np.array(feats), [names[c] for c in classes]


def edgelist(path, feats_path):
    raw = []
    for line in open(path):
        f = line.replace(",", " ").split()
        if len(f) < 2 or line.lstrip().startswith("#"):
            continue
        raw.append((f[0], f[1]))
    if raw and not all(t.lstrip("-").isdigit() for t in raw[0]):
        raw = raw[1:]  # header
    ids = sorted({t for p in raw for t in p}, key=lambda t: (len(t), t))
    feats = None
    if feats_path is not None:
        rows = {}
        for line in open(feats_path):
            f = line.strip().split(",")
            rows[f[0]] = [float(v) for v in f[1:]]
        ids = sorted(set(ids) | set(rows), key=lambda t: (len(t), t))
        feats = np.array([rows[i] for i in ids])
    index = {t: i for i, t in enumerate(ids)}
    return [(index[a], index[b]) for a, b in raw], feats


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("format", choices=["planetoid", "linqs", "edgelist"])
    ap.add_argument("src", type=Path, help="input directory (planetoid, linqs) or edge file (edgelist)")
    ap.add_argument("out", type=Path)
    ap.add_argument("--name", default="cora", help="dataset name used in input file names")
    ap.add_argument("--features", type=Path, help="edgelist only: CSV of `id,f1,f2,...`")
    a = ap.parse_args()
    if a.format == "planetoid":
        write(a.out, *planetoid(a.src, a.name))
    elif a.format == "linqs":
        write(a.out, *linqs(a.src, a.name))
    else:
        write(a.out, *edgelist(a.src, a.features))


if __name__ == "__main__":
    main()
