import warnings

import numpy as np
import pytest
from mpmath import mp, erfinv, sqrt

from epinet.data import (
    MISSING,
    DegenerateMarker,
    GenotypeError,
    GenotypeMatrix,
    MarkerMap,
    collapse_empty_categories,
    estimate_cutpoints,
    load_genotypes,
    normal_scores,
    prepare,
    validate,
    write_genotypes,
    write_map,
)


def _ndtri_hp(q):
    mp.dps = 40
    return float(sqrt(2) * erfinv(2 * mp.mpf(q) - 1))


def test_csv_readback(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("a,b\n0,1\n2,1\n0,NA\n")
    g, marker_map = load_genotypes(path)
    assert marker_map is None
    assert (g.n, g.p) == (3, 2)
    assert list(g.states) == [3, 2]
    assert g.missing.sum() == 1 and g.values[2, 1] == MISSING


def test_non_integer_cell_reports_position(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("a,b\n0,1\n2,x\n")
    with pytest.raises(GenotypeError, match=r"row 3, column 2"):
        load_genotypes(path)


def test_duplicate_names_rejected(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text("a,a\n0,1\n1,0\n")
    with pytest.raises(GenotypeError, match="duplicate"):
        load_genotypes(path)


def test_map_mismatch_rejected(tmp_path):
    path = tmp_path / "g.tsv"
    path.write_text("a\tb\n0\t1\n1\t0\n")
    mpath = tmp_path / "m.tsv"
    mpath.write_text("marker\tchromosome\tposition\na\t1\t0\nc\t1\t5\n")
    with pytest.raises(GenotypeError, match="map"):
        load_genotypes(path, map_path=mpath)


def test_roundtrip_with_map(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.integers(0, 3, size=(12, 4))
    vals[3, 2] = MISSING
    g = GenotypeMatrix(vals, None, ["m1", "m2", "m3", "m4"])
    mm = MarkerMap(g.names, ["1", "1", "2", "2"], [0.0, 3.5, 1.0, 2.0])
    write_genotypes(g, tmp_path / "g.tsv")
    write_map(mm, tmp_path / "m.tsv")
    back, mback = load_genotypes(tmp_path / "g.tsv", map_path=tmp_path / "m.tsv")
    assert np.array_equal(back.values, g.values)
    assert list(mback.positions) == [0.0, 3.5, 1.0, 2.0]


def test_binary_cutpoint():
    g = GenotypeMatrix(np.array([[0], [0], [1], [1]]), None, ["a"])
    c = estimate_cutpoints(g).cuts[0]
    assert c[0] == -np.inf and c[-1] == np.inf
    assert c[1] == pytest.approx(_ndtri_hp(2 / 5), abs=1e-14)
    assert c[1] == pytest.approx(-0.2533, abs=1e-4)


def test_three_state_cutpoints():
    g = GenotypeMatrix(np.array([[0], [1], [2]]), None, ["a"])
    c = estimate_cutpoints(g).cuts[0]
    assert c[1:3] == pytest.approx([_ndtri_hp(0.25), 0.0], abs=1e-14)
    assert c[1] == pytest.approx(-0.6745, abs=1e-4)


def test_missing_entries_do_not_count():
    g = GenotypeMatrix(np.array([[0], [MISSING], [1], [MISSING], [0], [1]]), None, ["a"])
    assert estimate_cutpoints(g).cuts[0][1] == pytest.approx(_ndtri_hp(2 / 5), abs=1e-14)


def test_constant_column_is_degenerate():
    g = GenotypeMatrix(np.array([[0, 0], [0, 1], [0, 0], [0, 1]]), [2, 2], ["const", "ok"])
    with pytest.raises(DegenerateMarker, match="const"):
        estimate_cutpoints(g)


def test_bounds_match_categories():
    g = GenotypeMatrix(np.array([[0, 1], [2, MISSING], [1, 0]]), [3, 2], ["a", "b"])
    cuts = estimate_cutpoints(g)
    lo, hi = cuts.bounds(g)
    assert lo[1, 1] == -np.inf and hi[1, 1] == np.inf
    assert lo[0, 0] == -np.inf and hi[1, 0] == np.inf
    assert hi[0, 0] == lo[2, 0]


def test_validate_clean_matrix():
    g = GenotypeMatrix(np.array([[0, 1], [1, 0], [1, 1]]), None, ["a", "b"])
    assert validate(g).ok


def test_validate_flags_missing_and_ordering():
    vals = np.array([[0, MISSING], [1, MISSING], [0, MISSING], [1, 0], [0, 1]])
    g = GenotypeMatrix(vals, [2, 2], ["a", "b"])
    mm = MarkerMap(["a", "b"], ["1", "1"], [5.0, 2.0])
    report = validate(g, mm, max_missing=0.5)
    assert report.dropped == ["b"]
    assert any("position" in s for s in report.issues)


def test_prepare_drops_and_collapses():
    vals = np.array([[0, 0, 0], [2, 0, 1], [0, 0, 0], [2, 0, 1]])
    g = GenotypeMatrix(vals, [3, 2, 2], ["a", "b", "c"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out, keep = prepare(g)
    assert list(keep) == [0, 2]
    assert list(out.states) == [2, 2]
    assert set(out.values[:, 0]) == {0, 1}


def test_collapse_is_identity_without_gaps():
    g = GenotypeMatrix(np.array([[0, 1], [1, 0]]), None, ["a", "b"])
    assert np.array_equal(collapse_empty_categories(g).values, g.values)


def test_normal_scores_are_rank_quantiles():
    g = GenotypeMatrix(np.array([[0], [2], [1], [MISSING]]), None, ["a"])
    s = normal_scores(g)[:, 0]
    assert np.isnan(s[3])
    assert s[:3] == pytest.approx([_ndtri_hp(0.25), _ndtri_hp(0.75), 0.0], abs=1e-14)
