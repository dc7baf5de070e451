"""File formats: node/measurement CSVs, dataset bundles, scenario configs, run reports.

Nodes file      ``id,x_m,y_m,role``  (role is ``sensor`` or ``anchor``; sensor
                coordinates may be blank when the truth is unknown)
Measurements    ``i,j,range_m[,nlos]``  (``i < j``; ``nlos`` optional 0/1)
Report          JSON lines: a header record carrying the schema version, one
                record per MC run, one aggregate record.
Tables written by the CLI start with ``# `` comment lines echoing the config.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Network
from .evaluation import RunRecord, RunReport, ScenarioConfig
from .measurement import MeasurementSet

REPORT_SCHEMA = "robustloc.run_report"
REPORT_VERSION = 1

NODES_FILE = "nodes.csv"
RANGES_FILE = "ranges.csv"
META_FILE = "meta.json"


class DatasetError(ValueError):
    pass


class ReportSchemaError(ValueError):
    pass


class DatasetWarning(UserWarning):
    pass


def _rows(path, required):
    """CSV rows as dicts, skipping ``#`` comment lines; checks the header."""
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DatasetError(f"{path}: empty file")
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = [c for c in required if c not in header]
    if missing:
        raise DatasetError(f"{path}: header missing column(s) {missing}; got {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        out.append((lineno, {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}))
    return out


def _float(path, lineno, row, key, allow_blank=False):
    v = row.get(key, "")
    if v == "" and allow_blank:
        return None
    try:
        x = float(v)
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: field {key!r} is not a number: {v!r}") from None
    if not math.isfinite(x):
        raise DatasetError(f"{path}:{lineno}: field {key!r} must be finite")
    return x


# -- node / measurement files -------------------------------------------------

def _comment_block(comments) -> str:
    return "".join(f"# {c}\n" for c in comments or [])


def write_nodes(path, net: Network, ids=None, comments=None):
    ids = list(range(net.num_nodes)) if ids is None else list(ids)
    truth = net.true_sensor_positions
    with open(path, "w", newline="") as fh:
        fh.write(_comment_block(comments))
        w = csv.writer(fh)
        w.writerow(["id", "x_m", "y_m", "role"])
        for i in range(net.num_sensors):
            xy = ["", ""] if truth is None else [repr(float(truth[i, 0])), repr(float(truth[i, 1]))]
            w.writerow([ids[i], *xy, "sensor"])
        for k, a in enumerate(net.anchor_positions):
            w.writerow([ids[net.num_sensors + k], repr(float(a[0])), repr(float(a[1])), "anchor"])


def read_nodes(path):
    """Returns ``(sensor_xy or None, anchor_xy, ids)``; internal order is sensors then anchors."""
    rows = _rows(path, ["id", "x_m", "y_m", "role"])
    sensors, anchors = [], []
    seen = set()
    for lineno, row in rows:
        nid = row["id"]
        if nid in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate node id {nid!r}")
        seen.add(nid)
        role = row["role"].lower()
        if role not in ("sensor", "anchor"):
            raise DatasetError(f"{path}:{lineno}: role must be 'sensor' or 'anchor', got {row['role']!r}")
        x = _float(path, lineno, row, "x_m", allow_blank=(role == "sensor"))
        y = _float(path, lineno, row, "y_m", allow_blank=(role == "sensor"))
        if role == "anchor":
            anchors.append((nid, (x, y)))
        else:
            if (x is None) != (y is None):
                raise DatasetError(f"{path}:{lineno}: sensor {nid!r} has only one coordinate")
            sensors.append((nid, None if x is None else (x, y)))
    known = [p is not None for _, p in sensors]
    if any(known) and not all(known):
        raise DatasetError(f"{path}: sensor coordinates must be all present or all blank")
    truth = np.array([p for _, p in sensors], dtype=float).reshape(-1, 2) if all(known) and sensors else None
    if not sensors:
        truth = np.zeros((0, 2))
    ids = [nid for nid, _ in sensors] + [nid for nid, _ in anchors]
    anchor_xy = np.array([p for _, p in anchors], dtype=float).reshape(-1, 2)
    return truth, anchor_xy, ids


def write_measurements(path, ms: MeasurementSet, ids=None, comments=None, labels=True):
    with open(path, "w", newline="") as fh:
        fh.write(_comment_block(comments))
        w = csv.writer(fh)
        with_labels = labels and ms.nlos is not None
        w.writerow(["i", "j", "range_m"] + (["nlos"] if with_labels else []))
        for k, (i, j) in enumerate(ms.edges.tolist()):
            a, b = (i, j) if ids is None else (ids[i], ids[j])
            row = [a, b, repr(float(ms.ranges[k]))]
            if with_labels:
                row.append(int(ms.nlos[k]))
            w.writerow(row)


def _read_pairs(path, index, sigma=None):
    """Parse a measurements file into averaged per-pair ranges.

    Rows may list a pair in either direction; duplicate directions are
    averaged, with a warning when they disagree by more than ``3 * sigma``.
    """
    rows = _rows(path, ["i", "j", "range_m"])
    acc: dict[tuple[int, int], list] = {}
    labels: dict[tuple[int, int], int] = {}
    has_label = None
    for lineno, row in rows:
        try:
            a, b = index[row["i"]], index[row["j"]]
        except KeyError as exc:
            raise DatasetError(f"{path}:{lineno}: unknown node id {exc.args[0]!r}") from None
        if a == b:
            raise DatasetError(f"{path}:{lineno}: self-measurement for node {row['i']!r}")
        r = _float(path, lineno, row, "range_m")
        key = (min(a, b), max(a, b))
        acc.setdefault(key, []).append(r)
        lab = row.get("nlos", "")
        if has_label is None:
            has_label = lab != ""
        if has_label:
            if lab not in ("0", "1"):
                raise DatasetError(f"{path}:{lineno}: nlos must be 0 or 1, got {lab!r}")
            labels[key] = max(labels.get(key, 0), int(lab))
    if not acc:
        raise DatasetError(f"{path}: no measurements")
    bad = []
    if sigma is not None:
        for key, vals in acc.items():
            if len(vals) > 1 and max(vals) - min(vals) > 3.0 * sigma:
                bad.append(key)
    keys = sorted(acc)
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    ranges = np.array([float(np.mean(acc[k])) for k in keys])
    nlos = np.array([labels[k] for k in keys], dtype=bool) if has_label else None
    return edges, ranges, nlos, bad


def load_network_files(nodes_path, meas_path):
    """Network + MeasurementSet from a nodes file and a measurements file."""
    truth, anchors, ids = read_nodes(nodes_path)
    index = {nid: k for k, nid in enumerate(ids)}
    edges, ranges, nlos, _ = _read_pairs(meas_path, index)
    n_sensors = len(ids) - anchors.shape[0]
    net = Network(n_sensors, anchors.shape[0], anchors, edges, truth)
    return net, MeasurementSet(net.edges.copy(), ranges, nlos), ids


# -- real-data bundle -----------------------------------------------------------

class DebiasMode(str, enum.Enum):
    RAW = "raw"
    HALF = "half"
    FULL = "full"


@dataclass
class DatasetBundle:
    """Node coordinates, anchor roles and measured ranges of a fixed deployment."""

    ids: list
    sensor_positions: np.ndarray
    anchor_positions: np.ndarray
    edges: np.ndarray
    ranges: np.ndarray
    avg_bias: float | None = None
    sigma_n: float = 1.0
    surrogate: bool = False
    warnings: list[str] = field(default_factory=list)

    @property
    def num_sensors(self) -> int:
        return self.sensor_positions.shape[0]

    @property
    def num_anchors(self) -> int:
        return self.anchor_positions.shape[0]

    def network(self) -> Network:
        return Network(self.num_sensors, self.num_anchors, self.anchor_positions,
                       self.edges, self.sensor_positions)

    def measurements(self) -> MeasurementSet:
        return MeasurementSet(self.edges, self.ranges)


def _corner_nodes(positions: np.ndarray) -> set[int]:
    lo, hi = positions.min(axis=0), positions.max(axis=0)
    corners = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]
    return {int(np.argmin(np.hypot(*(positions - c).T))) for c in corners}


def load_dataset(path) -> DatasetBundle:
    """Load a bundle directory holding ``nodes.csv``, ``ranges.csv`` and optional ``meta.json``."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset bundle directory not found: {path}")
    nodes, ranges_path = path / NODES_FILE, path / RANGES_FILE
    for p in (nodes, ranges_path):
        if not p.exists():
            raise FileNotFoundError(f"missing bundle file: {p}")
    meta = {}
    if (path / META_FILE).exists():
        try:
            meta = json.loads((path / META_FILE).read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path / META_FILE}: {exc}") from None
    truth, anchors, ids = read_nodes(nodes)
    if truth is None:
        raise DatasetError(f"{nodes}: missing coordinates; a dataset bundle needs every node position")
    if anchors.shape[0] == 0:
        raise DatasetError(f"{nodes}: no anchor nodes")
    sigma = float(meta.get("sigma_n", 1.0))
    index = {nid: k for k, nid in enumerate(ids)}
    edges, ranges, _, bad = _read_pairs(ranges_path, index, sigma)
    notes = []
    if bad:
        listed = ", ".join(f"({ids[a]}, {ids[b]})" for a, b in bad)
        notes.append(f"asymmetric duplicate measurements differ by > 3 sigma: {listed}")
    allpos = np.vstack([truth, anchors])
    corners = _corner_nodes(allpos)
    n_s = truth.shape[0]
    off = [ids[n_s + k] for k in range(anchors.shape[0]) if n_s + k not in corners]
    if off:
        notes.append(f"anchor(s) not at a corner of the deployment: {off}")
    for msg in notes:
        warnings.warn(msg, DatasetWarning, stacklevel=2)
    avg = meta.get("avg_bias")
    return DatasetBundle(ids, truth, anchors, edges, ranges,
                         None if avg is None else float(avg), sigma,
                         bool(meta.get("surrogate", False)), notes)


def save_dataset(bundle: DatasetBundle, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    net = bundle.network()
    write_nodes(path / NODES_FILE, net, bundle.ids)
    write_measurements(path / RANGES_FILE, bundle.measurements(), bundle.ids)
    meta = {"avg_bias": bundle.avg_bias, "sigma_n": bundle.sigma_n, "surrogate": bundle.surrogate}
    (path / META_FILE).write_text(json.dumps(meta, indent=2) + "\n")


def apply_debias(bundle: DatasetBundle, mode, avg_bias: float | None = None, seed=None):
    """Network and ranges for one of the three debiasing scenarios.

    raw: ranges unchanged. half: ``avg_bias`` subtracted from exactly
    ``floor(E/2)`` links drawn uniformly with ``seed``. full: subtracted from
    every link.
    """
    mode = DebiasMode(mode)
    b = bundle.avg_bias if avg_bias is None else avg_bias
    if b is None:
        raise ValueError("avg_bias is required (bundle carries none)")
    if not b >= 0:
        raise ValueError(f"avg_bias must be >= 0, got {b}")
    r = bundle.ranges.astype(float).copy()
    if mode is DebiasMode.FULL:
        r = r - b
    elif mode is DebiasMode.HALF:
        if seed is None:
            raise ValueError("half debiasing needs a seed")
        E = r.shape[0]
        pick = np.random.default_rng(seed).permutation(E)[: E // 2]
        r[pick] -= b
    net = bundle.network()
    return net, MeasurementSet(net.edges.copy(), r)


def make_surrogate_bundle(seed, num_nodes: int = 44, width: float = 14.0, height: float = 13.0,
                          sigma_n: float = 1.0, biased_frac: float = 0.9,
                          bias_offset: float = 1.5, bias_tail: float = 1.0) -> DatasetBundle:
    """Synthetic office-scale stand-in for the 44-node campaign.

    Four anchors sit at the room corners; the rest are uniform inside. Every
    pair is measured. A ``biased_frac`` share of links carries a positive
    bias ``bias_offset + Exp(bias_tail)``; the bundle's ``avg_bias`` is the
    mean range error over all links.
    """
    rng = np.random.default_rng(seed)
    anchors = np.array([[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])
    sensors = np.column_stack([rng.uniform(0.5, width - 0.5, num_nodes - 4),
                               rng.uniform(0.5, height - 0.5, num_nodes - 4)])
    pos = np.vstack([sensors, anchors])
    iu, ju = np.triu_indices(pos.shape[0], k=1)
    d = np.hypot(*(pos[iu] - pos[ju]).T)
    biased = rng.random(d.size) < biased_frac
    bias = np.where(biased, bias_offset + rng.exponential(bias_tail, d.size), 0.0)
    r = d + bias + rng.normal(0.0, sigma_n, d.size)
    avg = float(np.mean(r - d))
    ids = [f"s{k}" for k in range(num_nodes - 4)] + [f"a{k}" for k in range(4)]
    return DatasetBundle(ids, sensors, anchors, np.column_stack([iu, ju]), r, avg, sigma_n, True)


# -- scenario configs -------------------------------------------------------------

def load_scenario(path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be an object")
    return ScenarioConfig.from_dict(data)


def save_scenario(cfg: ScenarioConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


# -- run reports ------------------------------------------------------------------

def _run_to_record(r: RunRecord) -> dict:
    return {"record": "run", "run": r.run, "error": r.error, "sensor_errors": r.sensor_errors,
            "traces": r.traces, "measurement_digest": r.measurement_digest,
            "failed": r.failed, "message": r.message}


def save_report(report: RunReport, path):
    header = {"record": "header", "schema": REPORT_SCHEMA, "version": REPORT_VERSION,
              "method": report.method, "scenario": report.scenario,
              "master_seed": report.master_seed, "label": report.label}
    lines = [json.dumps(header)]
    lines += [json.dumps(_run_to_record(r)) for r in report.runs]
    lines.append(json.dumps({"record": "aggregate", **report.summary()}))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_report(path) -> RunReport:
    with open(path) as fh:
        records = [json.loads(ln) for ln in fh if ln.strip()]
    if not records or records[0].get("record") != "header":
        raise ReportSchemaError(f"{path}: missing header record")
    head = records[0]
    if head.get("schema") != REPORT_SCHEMA or head.get("version") != REPORT_VERSION:
        raise ReportSchemaError(
            f"{path}: unsupported report schema {head.get('schema')!r} version {head.get('version')!r} "
            f"(expected {REPORT_SCHEMA!r} version {REPORT_VERSION})")
    runs = [RunRecord(d["run"], d["error"], d["sensor_errors"], d["traces"],
                      d["measurement_digest"], d["failed"], d["message"])
            for d in records[1:] if d.get("record") == "run"]
    return RunReport(head["method"], runs, head["scenario"], head["master_seed"], head["label"])


def write_table(path, header, rows, comments=None):
    with open(path, "w", newline="") as fh:
        fh.write(_comment_block(comments))
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
