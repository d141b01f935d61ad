"""
DOT export of causal graphs and edge-frequency maps using Jinja2 templates.

Frequencies are drawn with pen width and opacity proportional to the
selection frequency; output is deterministic (canonical node and edge order).
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

from jinja2 import Environment, FileSystemLoader

import config
from causal_graph import Graph
from search_pipeline import EdgeFrequencies

logger = logging.getLogger(__name__)


def dot_id(value) -> str:
    """Quote a DOT identifier."""
    text = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{text}"'


def _environment() -> Environment:
    env = Environment(
        loader=FileSystemLoader(config.TEMPLATES_DIR),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
    env.filters["dot_id"] = dot_id
    return env


def frequency_attributes(freq: float) -> str:
    width = config.DOT_MIN_PENWIDTH + (config.DOT_MAX_PENWIDTH - config.DOT_MIN_PENWIDTH) * freq
    alpha = int(round(255 * freq))
    return f'penwidth={width:.3f}, color="#000000{alpha:02x}", label="{freq:.2f}"'


def render_dot(
    graph: Union[Graph, EdgeFrequencies],
    compound_names: Sequence[str],
    title: str = "causal_graph",
    min_frequency: float = 0.0,
) -> str:
    """DOT text for a graph, or for the edges of a frequency map above `min_frequency`."""
    edges = []
    if isinstance(graph, EdgeFrequencies):
        d = graph.freq.shape[0]
        for i in range(d):
            for j in range(d):
                f = float(graph.freq[i, j])
                if i != j and f > 0 and f >= min_frequency:
                    edges.append(
                        {
                            "source": compound_names[i],
                            "target": compound_names[j],
                            "attributes": frequency_attributes(f),
                        }
                    )
    else:
        d = graph.d
        edges = [
            {"source": compound_names[i], "target": compound_names[j], "attributes": ""}
            for i, j in sorted(graph.edges)
        ]
    if len(compound_names) != d:
        raise ValueError(f"{len(compound_names)} names for {d} compounds")

    template = _environment().get_template("graph.dot.j2")
    return template.render(title=title, nodes=list(compound_names), edges=edges)


def export_graph(
    graph: Union[Graph, EdgeFrequencies],
    path: Path,
    compound_names: Sequence[str],
    title: Optional[str] = None,
    min_frequency: float = 0.0,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = render_dot(graph, compound_names, title or path.stem, min_frequency)
    path.write_text(text, encoding="utf-8")
    logger.info("Graph written to: %s", path)
    return path
