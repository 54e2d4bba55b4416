"""Result exports (edge lists, dense matrices, GraphML, DOT, TSV tables) and run manifests."""
import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__

# fixed palette so that chromosome colours do not depend on the run
PALETTE = ["#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a6a629", "#a65628",
           "#f781bf", "#999999", "#66c2a5", "#fc8d62", "#8da0cb"]


def fmt(x):
    """Shortest round-trip text for a float (stable across platforms)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "NA"
    return repr(x) if x != 0 else "0"


def _writer(fh):
    return csv.writer(fh, delimiter="\t", lineterminator="\n")


def partial_from_theta(theta):
    d = np.sqrt(np.diag(theta))
    rho = -theta / np.outer(d, d)
    np.fill_diagonal(rho, 1.0)
    return rho


def write_edge_list(path, theta, names):
    """Sparse triplets ``marker_i, marker_j, theta_ij, partial_correlation``.

    A ``#nodes`` comment line lists every marker so that isolated nodes
    survive a round trip.
    """
    theta = np.asarray(theta, dtype=float)
    rho = partial_from_theta(theta)
    iu, ju = np.nonzero(np.triu(theta != 0, 1))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("#nodes\t" + "\t".join(names) + "\n")
        w = _writer(fh)
        w.writerow(["marker_i", "marker_j", "theta_ij", "partial_correlation"])
        for i, j in zip(iu, ju):
            w.writerow([names[i], names[j], fmt(theta[i, j]), fmt(rho[i, j])])


def read_edge_list(path):
    """Inverse of ``write_edge_list``: ``(names, adjacency, theta_offdiag)``."""
    names = None
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#nodes"):
                names = line.split("\t")[1:]
            elif line and not line.startswith("#"):
                rows.append(line.split("\t"))
    if not rows or rows[0][:2] != ["marker_i", "marker_j"]:
        raise ValueError(f"{path}: not an edge list (missing marker_i/marker_j header)")
    body = rows[1:]
    if names is None:
        names = sorted({r[0] for r in body} | {r[1] for r in body})
    index = {n: i for i, n in enumerate(names)}
    p = len(names)
    adj = np.zeros((p, p), dtype=bool)
    theta = np.zeros((p, p))
    for r in body:
        try:
            i, j = index[r[0]], index[r[1]]
        except KeyError as exc:
            raise ValueError(f"{path}: unknown marker {exc.args[0]}") from None
        val = float(r[2]) if len(r) > 2 and r[2] not in ("", "NA") else 1.0
        adj[i, j] = adj[j, i] = True
        theta[i, j] = theta[j, i] = val
    return names, adj, theta


def write_dense(path, matrix, names):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow([""] + list(names))
        for name, row in zip(names, np.asarray(matrix)):
            w.writerow([name] + [fmt(v) for v in row])


def _colours(chromosomes, p):
    if chromosomes is None:
        return ["1"] * p, [PALETTE[0]] * p
    labels = [str(c) for c in chromosomes]
    order = list(dict.fromkeys(labels))
    return labels, [PALETTE[order.index(c) % len(PALETTE)] for c in labels]


def write_graphml(path, theta, names, chromosomes=None):
    """GraphML with ``chromosome``/``color`` node attributes and signed edge weights."""
    import networkx as nx

    theta = np.asarray(theta, dtype=float)
    rho = partial_from_theta(theta)
    labels, colours = _colours(chromosomes, len(names))
    graph = nx.Graph()
    for name, chrom, col in zip(names, labels, colours):
        graph.add_node(name, chromosome=chrom, color=col)
    iu, ju = np.nonzero(np.triu(theta != 0, 1))
    for i, j in zip(iu, ju):
        graph.add_edge(names[i], names[j], weight=float(rho[i, j]),
                       sign="positive" if rho[i, j] > 0 else "negative")
    nx.write_graphml(graph, path)


def write_dot(path, theta, names, chromosomes=None):
    """Graphviz DOT; nodes coloured by chromosome, red/blue edges for positive/negative partial correlation."""
    theta = np.asarray(theta, dtype=float)
    rho = partial_from_theta(theta)
    labels, colours = _colours(chromosomes, len(names))
    lines = ["graph epinet {", "  node [style=filled, shape=circle, fontsize=8];"]
    for name, chrom, col in zip(names, labels, colours):
        lines.append(f'  "{name}" [fillcolor="{col}", chromosome="{chrom}"];')
    iu, ju = np.nonzero(np.triu(theta != 0, 1))
    for i, j in zip(iu, ju):
        col = "red" if rho[i, j] > 0 else "blue"
        lines.append(f'  "{names[i]}" -- "{names[j]}" [color={col}, weight="{fmt(rho[i, j])}"];')
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating, int, np.integer))
                        and not isinstance(v, bool) else v for v in r])


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command, config, seeds, inputs, outputs, wall_clock, extra=None):
    """JSON run record with digests of every input and output file.

    ``extra`` holds command-specific results (e.g. the penalty grid and scores).
    """
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_clock_seconds": round(wall_clock, 3),
    }
    if extra:
        manifest["results"] = extra
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                          encoding="utf-8")
    return manifest


def verify_manifest(path):
    """Names of output files whose digest no longer matches the manifest."""
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    return [p for p, digest in manifest["outputs"].items()
            if not Path(p).exists() or sha256(p) != digest]
