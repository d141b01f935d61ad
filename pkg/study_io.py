"""
Study ingestion, export and exploratory statistics.

A study directory holds:

    design.csv           index,name,kind,targets,file  (targets ';'-separated names)
    condition_01.csv     one table per condition, header row = compound names
    study.json           optional manifest: schema_version, scale, censor_threshold

Values in `raw` scale are censored at the detection limit theta and
log-transformed, value <- log(max(raw, theta)). Values in `log` scale are
only clamped, value <- max(x, log theta). Exports are always written in log
scale with exact float text, so a reloaded export is bit-identical.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

import config
from causal_graph import ExperimentDesign, Graph, Intervention, InterventionKind
from causal_utils import DesignError, StudyFormatError, validate_input_file
from simulation import SimulatedStudy

logger = logging.getLogger(__name__)

DESIGN_COLUMNS = ("index", "name", "kind", "targets", "file")
SCALES = ("raw", "log")

# Share of a condition's rows found verbatim in another condition before warning
DUPLICATE_ROW_WARNING_FRACTION = 0.5


@dataclass(eq=False)
class Study:
    compound_names: Tuple[str, ...]
    design: ExperimentDesign
    data: Tuple[np.ndarray, ...]
    censor_threshold: float = config.CENSOR_THRESHOLD
    censor_fractions: Optional[np.ndarray] = None
    source: Optional[Path] = None

    def __post_init__(self):
        self.compound_names = tuple(self.compound_names)
        self.data = tuple(np.asarray(x, dtype=float) for x in self.data)
        d = len(self.compound_names)
        if len(set(self.compound_names)) != d:
            raise StudyFormatError(f"duplicate compound names: {self.compound_names}")
        if len(self.data) != self.design.k:
            raise StudyFormatError(
                f"design has {self.design.k} conditions but {len(self.data)} data tables were given"
            )
        for c, x in enumerate(self.data):
            if x.ndim != 2 or x.shape[1] != d:
                raise StudyFormatError(
                    f"condition {c + 1} has shape {x.shape}, expected {d} columns"
                )
        self.design.validate_for(d)
        if self.censor_fractions is None:
            self.censor_fractions = np.zeros((self.design.k, d))

    @property
    def d(self) -> int:
        return len(self.compound_names)

    def index_of(self, name: str) -> int:
        try:
            return self.compound_names.index(name)
        except ValueError:
            raise DesignError(f"unknown compound name {name!r}") from None

    @classmethod
    def from_simulation(
        cls, sim: SimulatedStudy, names: Optional[Sequence[str]] = None
    ) -> "Study":
        """Simulated data are already log-abundances; no censoring is applied."""
        names = tuple(names) if names is not None else sim.compound_names
        return cls(names, sim.design, sim.data, censor_threshold=0.0)


# Helpers


def _parse_float(text: str, path: Path, line: int, column: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise StudyFormatError(f"not a number: {text!r}", path, line, column) from None
    if not math.isfinite(value):
        raise StudyFormatError(f"non-finite value: {text!r}", path, line, column)
    return value


def _read_condition_table(path: Path) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Header of compound names plus an N x D matrix of floats."""
    validate_input_file(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise StudyFormatError("missing header row", path, 1) from None
        if not header or any(not h for h in header):
            raise StudyFormatError("header has empty compound names", path, 1)
        rows = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise StudyFormatError(
                    f"expected {len(header)} fields, found {len(row)}", path, reader.line_num
                )
            rows.append(
                [_parse_float(cell, path, reader.line_num, col + 1) for col, cell in enumerate(row)]
            )
    matrix = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, matrix


def _read_manifest(study_dir: Path) -> dict:
    path = study_dir / config.MANIFEST_FILENAME
    if not path.exists():
        return {}
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise StudyFormatError(e.msg, path, e.lineno, e.colno) from e
    if manifest.get("schema_version") != config.RESULT_SCHEMA_VERSION:
        raise StudyFormatError(
            f"unsupported schema_version {manifest.get('schema_version')!r}", path
        )
    if manifest.get("scale", "raw") not in SCALES:
        raise StudyFormatError(f"scale must be one of {SCALES}, got {manifest['scale']!r}", path)
    return manifest


def read_design_table(path: Path) -> List[dict]:
    """Rows of a design file with 1-based line numbers attached."""
    validate_input_file(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in DESIGN_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise StudyFormatError(f"design is missing column(s) {missing}", path, 1)
        rows = []
        for row in reader:
            row = {k: (v or "").strip() for k, v in row.items() if k is not None}
            row["line"] = reader.line_num
            rows.append(row)
    if not rows:
        raise StudyFormatError("design lists no conditions", path)
    return rows


def parse_design(rows: Sequence[dict], compound_names: Sequence[str], path: Path) -> ExperimentDesign:
    """Interventions from design rows, resolving target names to compound indices."""
    column = {name: i + 1 for i, name in enumerate(DESIGN_COLUMNS)}
    index_of = {name: i for i, name in enumerate(compound_names)}
    conditions = []
    names = []
    for expected, row in enumerate(rows, start=1):
        line = row["line"]
        if row["index"] != str(expected):
            raise StudyFormatError(
                f"condition index {row['index']!r} out of order, expected {expected}",
                path, line, column["index"],
            )
        try:
            kind = InterventionKind(row["kind"])
        except ValueError:
            raise StudyFormatError(
                f"unknown intervention kind {row['kind']!r}", path, line, column["kind"]
            ) from None
        targets = [t.strip() for t in row["targets"].split(";") if t.strip()]
        unknown = [t for t in targets if t not in index_of]
        if unknown:
            raise StudyFormatError(
                f"unknown compound name(s) {unknown}", path, line, column["targets"]
            )
        try:
            conditions.append(Intervention(kind, frozenset(index_of[t] for t in targets)))
        except DesignError as e:
            raise StudyFormatError(str(e), path, line, column["targets"]) from e
        names.append(row["name"] or f"condition {expected}")
    return ExperimentDesign(tuple(conditions), tuple(names))


def _censor(x: np.ndarray, scale: str, threshold: float, path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """Clamp at the detection limit and log-transform; returns values and the censored mask."""
    if scale == "raw":
        if threshold > 0:
            censored = x <= threshold
            return np.log(np.maximum(x, threshold)), censored
        if np.any(x <= 0):
            raise StudyFormatError("raw abundances must be positive when censoring is off", path)
        return np.log(x), np.zeros(x.shape, dtype=bool)
    if threshold > 0:
        floor = math.log(threshold)
        return np.maximum(x, floor), x <= floor
    return x, np.zeros(x.shape, dtype=bool)


def warn_duplicate_blocks(study: Study) -> List[Tuple[int, int]]:
    """Log a warning for every pair of conditions sharing most of their rows."""
    row_sets = [{row.tobytes() for row in x} for x in study.data]
    pairs = []
    for c in range(study.design.k):
        for c2 in range(c + 1, study.design.k):
            x, x2 = study.data[c], study.data[c2]
            if x.shape[0] == 0 or x2.shape[0] == 0:
                continue
            if x.shape == x2.shape and np.array_equal(x, x2):
                logger.warning(
                    "Conditions %d ('%s') and %d ('%s') are identical",
                    c + 1, study.design.names[c], c2 + 1, study.design.names[c2],
                )
                pairs.append((c, c2))
                continue
            shared = len(row_sets[c] & row_sets[c2])
            if shared > DUPLICATE_ROW_WARNING_FRACTION * min(x.shape[0], x2.shape[0]):
                logger.warning(
                    "Conditions %d ('%s') and %d ('%s') share %d identical rows",
                    c + 1, study.design.names[c], c2 + 1, study.design.names[c2], shared,
                )
                pairs.append((c, c2))
    return pairs


def load_study(
    study_dir: Path,
    design_path: Optional[Path] = None,
    censor_threshold: Optional[float] = None,
) -> Study:
    """
    Load and preprocess a study directory.

    Args:
        study_dir: Directory with the condition tables (and optional manifest)
        design_path: Design file (default: study_dir/design.csv)
        censor_threshold: Detection limit; overrides the manifest (0 disables censoring)

    Raises:
        StudyFormatError: On parse errors, dimension mismatches or unknown names
    """
    study_dir = Path(study_dir)
    if not study_dir.is_dir():
        raise FileNotFoundError(f"Study directory not found: {study_dir}")
    manifest = _read_manifest(study_dir)
    scale = manifest.get("scale", "raw")
    if censor_threshold is None:
        censor_threshold = float(manifest.get("censor_threshold", config.CENSOR_THRESHOLD))
    if censor_threshold < 0:
        raise ValueError(f"censor_threshold must be nonnegative, got {censor_threshold}")

    design_path = Path(design_path) if design_path else study_dir / config.DESIGN_FILENAME
    rows = read_design_table(design_path)

    compound_names = None
    data = []
    fractions = []
    for row in rows:
        table_path = study_dir / row["file"]
        header, raw = _read_condition_table(table_path)
        if compound_names is None:
            compound_names = header
        elif header != compound_names:
            raise StudyFormatError(
                f"compound columns {list(header)} differ from {list(compound_names)}",
                table_path, 1,
            )
        values, censored = _censor(raw, scale, censor_threshold, table_path)
        data.append(values)
        fractions.append(censored.mean(axis=0) if raw.shape[0] else np.zeros(len(header)))

    design = parse_design(rows, compound_names, design_path)
    study = Study(
        compound_names, design, tuple(data), censor_threshold, np.array(fractions), study_dir
    )
    warn_duplicate_blocks(study)
    logger.info(
        "Loaded study %s: %d conditions, %d compounds, %d samples",
        study_dir, design.k, study.d, sum(x.shape[0] for x in study.data),
    )
    return study


def write_design_table(path: Path, design: ExperimentDesign, compound_names: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DESIGN_COLUMNS)
        for c, (iv, name) in enumerate(zip(design.conditions, design.names), start=1):
            targets = ";".join(compound_names[t] for t in sorted(iv.targets))
            writer.writerow(
                [c, name, iv.kind.value, targets, config.CONDITION_FILE_PATTERN.format(index=c)]
            )


def export_study(study: Study, out_dir: Path) -> Path:
    """Write a study in log scale; loading the result reproduces study.data exactly."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_design_table(out_dir / config.DESIGN_FILENAME, study.design, study.compound_names)
    for c, x in enumerate(study.data, start=1):
        path = out_dir / config.CONDITION_FILE_PATTERN.format(index=c)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(study.compound_names)
            writer.writerows([repr(float(v)) for v in row] for row in x)
    manifest = {
        "schema_version": config.RESULT_SCHEMA_VERSION,
        "scale": "log",
        "censor_threshold": study.censor_threshold,
    }
    (out_dir / config.MANIFEST_FILENAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("Exported study to %s", out_dir)
    return out_dir


# ============================================================================
# GRAPH FILES
# ============================================================================


def save_graph(path: Path, g: Graph, compound_names: Sequence[str]) -> Path:
    """Edge list `source,target` by compound name, canonical edge order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "target"])
        writer.writerows(g.named_edges(compound_names))
    return path


def load_graph(path: Path, compound_names: Sequence[str]) -> Graph:
    validate_input_file(path)
    index_of = {name: i for i, name in enumerate(compound_names)}
    edges = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"source", "target"} - set(reader.fieldnames):
            raise StudyFormatError("graph file needs 'source' and 'target' columns", path, 1)
        for row in reader:
            for col, key in enumerate(("source", "target"), start=1):
                if (row[key] or "").strip() not in index_of:
                    raise StudyFormatError(
                        f"unknown compound name {row[key]!r}", path, reader.line_num, col
                    )
            i, j = index_of[row["source"].strip()], index_of[row["target"].strip()]
            if i == j:
                raise StudyFormatError(
                    f"self-loop on {row['source']!r}", path, reader.line_num
                )
            edges.add((i, j))
    return Graph(len(compound_names), frozenset(edges))


# ============================================================================
# EXPLORATORY STATISTICS
# ============================================================================


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float


def ks_two_sample(x, y) -> KsResult:
    """
    Two-sample Kolmogorov-Smirnov test.

    The statistic is the exact sup-distance of the empirical CDFs; the p-value
    uses the asymptotic Kolmogorov distribution with effective sample size
    n_x n_y / (n_x + n_y).
    """
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    statistic = float(np.max(np.abs(cdf_x - cdf_y)))
    en = math.sqrt(x.size * y.size / (x.size + y.size))
    p_value = float(stats.kstwobign.sf(en * statistic))
    return KsResult(statistic, min(max(p_value, 0.0), 1.0))


def neg_log_p(p_value: float) -> float:
    """-log p, capped where p underflows double precision."""
    if p_value <= 0:
        return config.KS_NEG_LOG_P_CEILING
    return min(-math.log(p_value), config.KS_NEG_LOG_P_CEILING)


def explore(study: Study) -> np.ndarray:
    """K x D table of -log p comparing every condition with condition 1, per compound."""
    baseline = study.data[0]
    if baseline.shape[0] == 0:
        raise ValueError("baseline condition has no samples")
    table = np.zeros((study.design.k, study.d))
    for c in range(1, study.design.k):
        x = study.data[c]
        if x.shape[0] == 0:
            logger.warning("Condition %d has no samples; KS row left at zero", c + 1)
            continue
        for i in range(study.d):
            table[c, i] = neg_log_p(ks_two_sample(x[:, i], baseline[:, i]).p_value)
    return table


def write_ks_table(path: Path, table: np.ndarray, study: Study) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "name", *study.compound_names])
        for c, row in enumerate(table):
            writer.writerow([c + 1, study.design.names[c], *(repr(float(v)) for v in row)])
    return path
