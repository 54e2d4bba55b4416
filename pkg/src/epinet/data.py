"""Genotype matrices, marker maps and the empirical cut-points of the copula.

Missing genotypes are stored as ``-1`` in an integer matrix; every other
entry of column ``j`` lies in ``0 .. k_j - 1``.
"""
import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri


MISSING = -1
_NA_TOKENS = {"", "NA", "na", "NaN", "nan", "."}


class GenotypeError(ValueError):
    """Malformed genotype or map input."""


class DegenerateMarker(GenotypeError):
    """A marker with fewer than two observed states."""

    def __init__(self, column, name=None):
        self.column = column
        label = f"{name!r} (column {column})" if name is not None else f"column {column}"
        super().__init__(f"marker {label} has fewer than two distinct observed values")


@dataclass
class GenotypeMatrix:
    """n x p ordinal genotypes with per-marker state counts.

    Attributes
    ----------
    values : ndarray of int, shape (n, p)
        Genotype codes, ``MISSING`` (-1) where unobserved.
    states : ndarray of int, shape (p,)
        Number of ordinal states ``k_j`` of every marker.
    names : list of str
        Marker names, one per column.
    """

    values: np.ndarray
    states: np.ndarray = None
    names: list = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise GenotypeError("genotype matrix must be two-dimensional")
        if not np.issubdtype(values.dtype, np.integer):
            as_float = values.astype(float)
            bad = np.isfinite(as_float) & (as_float != np.round(as_float))
            if bad.any():
                i, j = np.argwhere(bad)[0]
                raise GenotypeError(f"non-integer genotype at row {i}, column {j}")
            as_float[~np.isfinite(as_float)] = MISSING
            values = as_float.astype(np.int64)
        self.values = values.astype(np.int64)
        if np.any(self.values < MISSING):
            raise GenotypeError("genotype codes must be non-negative")
        n, p = self.values.shape
        if self.names is None:
            self.names = [f"m{j + 1}" for j in range(p)]
        self.names = [str(s) for s in self.names]
        if len(self.names) != p:
            raise GenotypeError(f"{len(self.names)} marker names for {p} columns")
        if len(set(self.names)) != p:
            dup = sorted({s for s in self.names if self.names.count(s) > 1})
            raise GenotypeError(f"duplicate marker names: {dup}")
        observed_max = np.where(self.missing, MISSING, self.values).max(axis=0, initial=MISSING)
        if self.states is None:
            self.states = np.maximum(observed_max + 1, 2)
        self.states = np.asarray(self.states, dtype=np.int64).reshape(-1)
        if self.states.shape != (p,):
            raise GenotypeError("states must have one entry per marker")
        if np.any(self.states < 2):
            raise GenotypeError("every marker needs k_j >= 2 states")
        if np.any(observed_max >= self.states):
            j = int(np.argmax(observed_max >= self.states))
            raise GenotypeError(
                f"column {j} ({self.names[j]}) has value {observed_max[j]} outside 0..{self.states[j] - 1}"
            )

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def missing(self):
        return self.values == MISSING

    @property
    def missing_rate(self):
        if self.n == 0:
            return np.zeros(self.p)
        return self.missing.mean(axis=0)

    def category_counts(self, j):
        col = self.values[:, j]
        return np.bincount(col[col != MISSING], minlength=self.states[j])

    def take_rows(self, idx):
        return GenotypeMatrix(self.values[np.asarray(idx)], self.states.copy(), list(self.names))

    def take_columns(self, idx):
        idx = np.asarray(idx)
        return GenotypeMatrix(self.values[:, idx], self.states[idx], [self.names[j] for j in idx])


@dataclass
class MarkerMap:
    """Per-marker name, chromosome label and ordinal position."""

    names: list
    chromosomes: list
    positions: np.ndarray

    def __post_init__(self):
        self.names = [str(s) for s in self.names]
        self.chromosomes = [str(c) for c in self.chromosomes]
        self.positions = np.asarray(self.positions, dtype=float)
        if not (len(self.names) == len(self.chromosomes) == len(self.positions)):
            raise GenotypeError("map columns have different lengths")

    def __len__(self):
        return len(self.names)

    def chromosome_codes(self):
        """Integer chromosome index per marker, in order of first appearance."""
        order = {}
        for c in self.chromosomes:
            order.setdefault(c, len(order))
        return np.array([order[c] for c in self.chromosomes], dtype=np.int64)

    def ordering_violations(self):
        """Names of markers whose position does not increase within their chromosome."""
        last = {}
        bad = []
        for name, chrom, pos in zip(self.names, self.chromosomes, self.positions):
            if chrom in last and not pos > last[chrom]:
                bad.append(name)
            last[chrom] = pos
        return bad


@dataclass
class CutPointTable:
    """Latent thresholds per marker on the standard-normal scale.

    ``cuts[j]`` holds ``k_j + 1`` values starting with ``-inf`` and ending with
    ``+inf``; category ``y`` of marker ``j`` is the interval
    ``(cuts[j][y], cuts[j][y + 1]]``.
    """

    cuts: list

    @property
    def p(self):
        return len(self.cuts)

    def bounds(self, g):
        """Per-entry latent interval of a genotype matrix, ``(-inf, inf)`` if missing."""
        if g.p != self.p:
            raise GenotypeError(f"cut-point table has {self.p} markers, genotypes have {g.p}")
        lower = np.full(g.values.shape, -np.inf)
        upper = np.full(g.values.shape, np.inf)
        for j, c in enumerate(self.cuts):
            col = g.values[:, j]
            obs = col != MISSING
            if np.any(col[obs] >= len(c) - 1):
                raise GenotypeError(f"marker {j} has categories beyond its cut-points")
            lower[obs, j] = c[col[obs]]
            upper[obs, j] = c[col[obs] + 1]
        return lower, upper


def estimate_cutpoints(g):
    """Cut-points from the shrunken empirical CDF of every marker.

    The interior cut-point between categories ``l`` and ``l + 1`` is
    ``ndtri(count(y <= l) / (m_j + 1))`` with ``m_j`` the number of observed
    entries of column ``j``; missing entries do not contribute.

    Raises
    ------
    DegenerateMarker
        If a column has fewer than two distinct observed values.
    """
    cuts = []
    for j in range(g.p):
        counts = g.category_counts(j)
        if np.count_nonzero(counts) < 2:
            raise DegenerateMarker(j, g.names[j])
        if np.any(counts == 0):
            raise GenotypeError(
                f"marker {g.names[j]} has empty categories; call collapse_empty_categories first"
            )
        cum = np.cumsum(counts)[:-1]
        interior = ndtri(cum / (counts.sum() + 1.0))
        cuts.append(np.concatenate([[-np.inf], interior, [np.inf]]))
    return CutPointTable(cuts)


def collapse_empty_categories(g):
    """Relabel every column so that its observed categories are 0..k'-1.

    Columns whose state set has gaps (a category with zero observations) are
    compressed and ``k_j`` reduced; a warning names the affected markers.
    """
    values = g.values.copy()
    states = g.states.copy()
    touched = []
    for j in range(g.p):
        counts = g.category_counts(j)
        present = np.flatnonzero(counts)
        if len(present) == len(counts):
            continue
        remap = np.full(len(counts), MISSING)
        remap[present] = np.arange(len(present))
        obs = values[:, j] != MISSING
        values[obs, j] = remap[values[obs, j]]
        states[j] = max(len(present), 2)
        touched.append(g.names[j])
    if touched:
        warnings.warn(f"collapsed empty categories in {len(touched)} marker(s): {touched[:10]}")
    return GenotypeMatrix(values, states, list(g.names))


@dataclass
class ValidationReport:
    missing_rate: np.ndarray
    state_counts: list
    dropped: list = field(default_factory=list)
    issues: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.issues


def validate(g, marker_map=None, max_missing=0.5):
    """Report-only consistency check of a genotype matrix and its map."""
    rate = g.missing_rate
    counts = [g.category_counts(j) for j in range(g.p)]
    report = ValidationReport(missing_rate=rate, state_counts=counts)
    for j, name in enumerate(g.names):
        if rate[j] > max_missing:
            report.dropped.append(name)
            report.issues.append(f"{name}: missing rate {rate[j]:.2f} exceeds cap {max_missing}")
        elif np.count_nonzero(counts[j]) < 2:
            report.dropped.append(name)
            report.issues.append(f"{name}: fewer than two observed states")
        elif np.any(counts[j] == 0):
            report.issues.append(f"{name}: empty category, will be collapsed")
    if marker_map is not None:
        if len(marker_map) != g.p:
            report.issues.append(f"map has {len(marker_map)} rows for {g.p} markers")
        elif list(marker_map.names) != list(g.names):
            report.issues.append("map marker names do not match genotype columns")
        for name in marker_map.ordering_violations():
            report.issues.append(f"{name}: position does not increase within chromosome")
    return report


def prepare(g, max_missing=0.5):
    """Drop over-missing or degenerate columns and collapse empty categories.

    Returns the cleaned matrix and the kept column indices.
    """
    report = validate(g, max_missing=max_missing)
    keep = [j for j, name in enumerate(g.names) if name not in set(report.dropped)]
    if report.dropped:
        warnings.warn(f"dropping {len(report.dropped)} marker(s): {report.dropped[:10]}")
    g = g.take_columns(keep)
    return collapse_empty_categories(g), np.asarray(keep, dtype=np.int64)


def _sniff_delimiter(path, fmt):
    if fmt in ("csv", "tsv"):
        return "," if fmt == "csv" else "\t"
    return "\t" if str(path).endswith((".tsv", ".txt")) else ","


def load_genotypes(path, fmt=None, map_path=None, states=None):
    """Read a genotype table (header = marker names, rows = individuals).

    Parameters
    ----------
    path : str or Path
    fmt : {"csv", "tsv"}, optional
        Inferred from the extension when omitted.
    map_path : str or Path, optional
        Tab-separated map with columns ``marker``, ``chromosome``, ``position``.
    states : array-like, optional
        Override the inferred ``k_j``.

    Returns
    -------
    GenotypeMatrix, MarkerMap or None
    """
    delim = _sniff_delimiter(path, fmt)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delim) if r and not r[0].startswith("#")]
    if not rows:
        raise GenotypeError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    values = np.empty((len(body), len(header)), dtype=np.int64)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise GenotypeError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell in _NA_TOKENS:
                values[i, j] = MISSING
                continue
            try:
                values[i, j] = int(cell)
            except ValueError:
                raise GenotypeError(
                    f"{path}: non-integer cell {cell!r} at row {i + 2}, column {j + 1} ({header[j]})"
                ) from None
    g = GenotypeMatrix(values, states, [h.strip() for h in header])
    marker_map = load_map(map_path) if map_path is not None else None
    if marker_map is not None and list(marker_map.names) != list(g.names):
        raise GenotypeError(f"{map_path}: map markers do not match genotype columns")
    return g, marker_map


def load_map(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r and not r[0].startswith("#")]
    header = [h.strip().lower() for h in rows[0]]
    try:
        im, ic, ip = header.index("marker"), header.index("chromosome"), header.index("position")
    except ValueError:
        raise GenotypeError(f"{path}: map header must contain marker, chromosome, position") from None
    body = rows[1:]
    return MarkerMap(
        [r[im] for r in body], [r[ic] for r in body], [float(r[ip]) for r in body]
    )


def write_genotypes(g, path, fmt=None):
    delim = _sniff_delimiter(path, fmt)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delim, lineterminator="\n")
        w.writerow(g.names)
        for row in g.values:
            w.writerow(["NA" if v == MISSING else str(v) for v in row])


def write_map(marker_map, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["marker", "chromosome", "position"])
        for name, chrom, pos in zip(marker_map.names, marker_map.chromosomes, marker_map.positions):
            w.writerow([name, chrom, f"{pos:g}"])


def normal_scores(g):
    """Per-column normal scores ``ndtri(rank / (m + 1))`` with NaN for missing."""
    from scipy.stats import rankdata

    out = np.full(g.values.shape, np.nan)
    for j in range(g.p):
        obs = ~g.missing[:, j]
        r = rankdata(g.values[obs, j])
        out[obs, j] = ndtri(r / (obs.sum() + 1.0))
    return out
