import json
import xml.etree.ElementTree as ET

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epinet.io import (
    fmt,
    read_edge_list,
    verify_manifest,
    write_dense,
    write_dot,
    write_edge_list,
    write_graphml,
    write_manifest,
    write_table,
)

THETA = np.array([[2.0, -0.6, 0.0, 0.0],
                  [-0.6, 1.5, 0.4, 0.0],
                  [0.0, 0.4, 1.2, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])
NAMES = ["m1", "m2", "m3", "m4"]


def test_fmt():
    assert fmt(3) == "3"
    assert fmt(np.int64(4)) == "4"
    assert fmt(float("nan")) == "NA"
    assert fmt(0.0) == fmt(-0.0) == "0"
    assert fmt(0.1) == "0.1"


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_edge_list_round_trip(tmp_path):
    path = tmp_path / "edges.tsv"
    write_edge_list(path, THETA, NAMES)
    lines = path.read_text().splitlines()
    assert lines[0] == "#nodes\tm1\tm2\tm3\tm4"
    assert lines[1] == "marker_i\tmarker_j\ttheta_ij\tpartial_correlation"
    assert len(lines) == 4
    names, adj, theta = read_edge_list(path)
    assert names == NAMES
    assert adj.sum() == 4 and not adj[3].any()
    off = THETA - np.diag(np.diag(THETA))
    assert np.array_equal(theta, off)
    rho = float(lines[2].split("\t")[3])
    assert rho == pytest.approx(0.6 / np.sqrt(3.0))


def test_edge_list_without_node_line(tmp_path):
    path = tmp_path / "e.tsv"
    path.write_text("marker_i\tmarker_j\nb\ta\n")
    names, adj, theta = read_edge_list(path)
    assert names == ["a", "b"] and adj[0, 1] and theta[0, 1] == 1.0


def test_edge_list_errors(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("x\ty\n")
    with pytest.raises(ValueError):
        read_edge_list(bad)
    unknown = tmp_path / "unknown.tsv"
    unknown.write_text("#nodes\ta\tb\nmarker_i\tmarker_j\na\tz\n")
    with pytest.raises(ValueError, match="unknown marker"):
        read_edge_list(unknown)


def test_graphml_attributes(tmp_path):
    path = tmp_path / "g.graphml"
    write_graphml(path, THETA, NAMES, ["1", "1", "2", "2"])
    graph = nx.read_graphml(path)
    assert set(graph.nodes) == set(NAMES)
    assert graph.nodes["m3"]["chromosome"] == "2"
    assert graph.nodes["m1"]["color"] != graph.nodes["m3"]["color"]
    assert graph.edges["m1", "m2"]["sign"] == "positive"
    assert graph.edges["m1", "m2"]["weight"] == pytest.approx(0.6 / np.sqrt(3.0))
    assert graph.number_of_edges() == 2
    ET.parse(path)


def test_dot_output(tmp_path):
    path = tmp_path / "g.dot"
    write_dot(path, THETA, NAMES)
    text = path.read_text()
    assert text.startswith("graph epinet {") and text.rstrip().endswith("}")
    assert '"m1" -- "m2" [color=red' in text
    assert '"m2" -- "m3" [color=blue' in text
    assert text.count(" -- ") == 2


def test_dense_and_table(tmp_path):
    write_dense(tmp_path / "d.tsv", np.eye(2), ["a", "b"])
    assert (tmp_path / "d.tsv").read_text() == "\ta\tb\na\t1.0\t0\nb\t0\t1.0\n"
    write_table(tmp_path / "t.tsv", ["k", "v", "flag"], [["x", 0.5, True], ["y", np.nan, False]])
    assert (tmp_path / "t.tsv").read_text() == "k\tv\tflag\nx\t0.5\tTrue\ny\tNA\tFalse\n"


def test_manifest_detects_tampering(tmp_path):
    out = tmp_path / "o.txt"
    out.write_text("hello\n")
    m = write_manifest(tmp_path / "manifest.json", "x", {"a": 1}, [1], [], [out], 0.5,
                       {"lambdas": [1.0]})
    assert json.loads((tmp_path / "manifest.json").read_text()) == m
    assert verify_manifest(tmp_path / "manifest.json") == []
    out.write_text("changed\n")
    assert verify_manifest(tmp_path / "manifest.json") == [str(out)]
    out.unlink()
    assert verify_manifest(tmp_path / "manifest.json") == [str(out)]
