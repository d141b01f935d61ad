import unittest

import numpy as np
import pytest

from causal_graph import Graph
from graph_export import dot_id, export_graph, frequency_attributes, render_dot
from search_pipeline import EdgeFrequencies

HEADER = [
    '  rankdir=TB;',
    '  node [shape=ellipse, fontname="Helvetica"];',
]


class TestRenderDot(unittest.TestCase):
    def test_empty_graph(self):
        lines = render_dot(Graph(2), ["a", "b"], title="g").splitlines()
        self.assertEqual(lines, ['digraph "g" {', *HEADER, '  "a";', '  "b";', "}"])

    def test_graph_edges_in_canonical_order(self):
        text = render_dot(Graph(3, {(2, 0), (0, 1)}), ["a", "b", "c"])
        edge_lines = [line for line in text.splitlines() if "->" in line]
        self.assertEqual(edge_lines, ['  "a" -> "b";', '  "c" -> "a";'])

    def test_frequency_styling(self):
        freq = np.array([[0.0, 1.0], [0.25, 0.0]])
        text = render_dot(EdgeFrequencies(freq, runs=4), ["a", "b"])
        self.assertIn('  "a" -> "b" [penwidth=5.000, color="#000000ff", label="1.00"];', text)
        self.assertIn('label="0.25"', text)

    def test_min_frequency_filters_edges(self):
        freq = np.array([[0.0, 0.9], [0.1, 0.0]])
        text = render_dot(EdgeFrequencies(freq, runs=10), ["a", "b"], min_frequency=0.5)
        self.assertIn('"a" -> "b"', text)
        self.assertNotIn('"b" -> "a"', text)

    def test_name_count_mismatch(self):
        with self.assertRaises(ValueError):
            render_dot(Graph(3), ["a", "b"])

    def test_quoting(self):
        self.assertEqual(dot_id('say "hi"'), '"say \\"hi\\""')
        self.assertIn('"p\\\\q"', render_dot(Graph(1), ["p\\q"]))


@pytest.mark.parametrize(
    "freq, expected",
    [
        (0.0, 'penwidth=0.500, color="#00000000", label="0.00"'),
        (1.0, 'penwidth=5.000, color="#000000ff", label="1.00"'),
        (0.5, 'penwidth=2.750, color="#00000080", label="0.50"'),
    ],
)
def test_frequency_attributes(freq, expected):
    assert frequency_attributes(freq) == expected


def test_export_is_deterministic(tmp_path):
    g = Graph(3, {(0, 1), (1, 2), (2, 0)})
    first = export_graph(g, tmp_path / "loop.dot", ["x", "y", "z"])
    second = export_graph(g, tmp_path / "again" / "loop.dot", ["x", "y", "z"])
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().startswith('digraph "loop" {')
