"""File formats shared by the CLI and the scenario engine.

All writers go through :func:`atomic_write_text` (write to a temp file in the
target directory, then rename), so a crashed run never leaves a partial file.
All floats are serialised with ``repr``, the shortest round-trip form, which
keeps outputs byte-identical across runs.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .network import Network


def atomic_write_text(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a same-directory temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x: float) -> str:
    """Shortest round-trip decimal form of a float."""
    return repr(float(x))


def _read_json(path: str, what: str) -> object:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# probability vectors over nodes
# ---------------------------------------------------------------------------


def vector_from_obj(obj: object, n: int, what: str) -> np.ndarray:
    """Decode a length-``n`` probability vector from a JSON array or id->mass map."""
    out = np.zeros(n, dtype=float)
    if isinstance(obj, list):
        if len(obj) != n:
            raise ValidationError(f"{what}: expected {n} entries, got {len(obj)}")
        out[:] = [float(v) for v in obj]
    elif isinstance(obj, dict):
        for key, val in obj.items():
            idx = int(key)
            if not (1 <= idx <= n):
                raise ValidationError(f"{what}: unknown node id {idx}")
            out[idx - 1] = float(val)
    else:
        raise ValidationError(f"{what}: expected a JSON array or object")
    if np.any(out < 0):
        raise ValidationError(f"{what}: negative mass")
    total = float(out.sum())
    if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-6):
        raise ValidationError(f"{what}: masses sum to {total!r}, expected 1")
    return out / total


def load_marginal(path: str, n: int) -> np.ndarray:
    return vector_from_obj(_read_json(path, "marginal"), n, f"marginal {path}")


# ---------------------------------------------------------------------------
# path distributions (q-files)
# ---------------------------------------------------------------------------


def load_path_distribution(path: str) -> tuple[int, dict[tuple[int, ...], float]]:
    """Load a q-file: ``{"horizon": T, "entries": [{"path": [...], "prob": p}]}``."""
    doc = _read_json(path, "path distribution")
    if not isinstance(doc, dict) or "horizon" not in doc or "entries" not in doc:
        raise ValidationError(
            f"path distribution {path}: need keys 'horizon' and 'entries'")
    horizon = int(doc["horizon"])
    table: dict[tuple[int, ...], float] = {}
    for ent in doc["entries"]:
        try:
            nodes = tuple(int(v) for v in ent["path"])
            prob = float(ent["prob"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"path distribution {path}: bad entry {ent}") from exc
        if len(nodes) != horizon + 1:
            raise ValidationError(
                f"path distribution {path}: path {nodes} has wrong length for "
                f"horizon {horizon}")
        if prob < 0:
            raise ValidationError(f"path distribution {path}: negative prob on {nodes}")
        if nodes in table:
            raise ValidationError(f"path distribution {path}: duplicate path {nodes}")
        table[nodes] = prob
    if not table:
        raise ValidationError(f"path distribution {path}: no entries")
    return horizon, table


def save_path_distribution(path: str, horizon: int,
                           table: Mapping[tuple[int, ...], float]) -> None:
    entries = [{"path": list(p), "prob": float(v)}
               for p, v in sorted(table.items())]
    atomic_write_text(path, json.dumps({"horizon": horizon, "entries": entries},
                                       indent=2) + "\n")


# ---------------------------------------------------------------------------
# imitation-step-weight files (rq-files)
# ---------------------------------------------------------------------------


def load_step_weights(path: str, network: Network) -> tuple[np.ndarray | None, np.ndarray]:
    """Load Markov step weights for an imitation target.

    Dense form: ``{"matrix": [[...]] [, "initial": [...]]}``.
    Sparse form: ``{"default": w0, "entries": [[i, j, w], ...]}`` where the
    default applies to every existing network edge not listed; pairs without a
    network edge always get weight 0.
    """
    doc = _read_json(path, "step weights")
    n = network.n
    initial = None
    if isinstance(doc, dict) and "initial" in doc:
        initial = vector_from_obj(doc["initial"], n, f"step weights {path} initial")
    if isinstance(doc, dict) and "matrix" in doc:
        mat = np.asarray(doc["matrix"], dtype=float)
        if mat.shape != (n, n):
            raise ValidationError(
                f"step weights {path}: matrix shape {mat.shape}, expected {(n, n)}")
    elif isinstance(doc, dict) and ("entries" in doc or "default" in doc):
        default = float(doc.get("default", 1.0))
        mat = np.zeros((n, n), dtype=float)
        for (i, j) in network.edge_pairs():
            mat[i - 1, j - 1] = default
        for ent in doc.get("entries", []):
            try:
                i, j, w = int(ent[0]), int(ent[1]), float(ent[2])
            except (TypeError, ValueError, IndexError) as exc:
                raise ValidationError(f"step weights {path}: bad entry {ent}") from exc
            if not network.has_edge(i, j):
                raise ValidationError(
                    f"step weights {path}: entry ({i},{j}) is not a network edge")
            mat[i - 1, j - 1] = w
    else:
        raise ValidationError(f"step weights {path}: need 'matrix' or 'entries'")
    if np.any(mat < 0):
        raise ValidationError(f"step weights {path}: negative weight")
    off = [(i + 1, j + 1) for i, j in zip(*np.nonzero(mat))
           if not network.has_edge(i + 1, j + 1)]
    if off:
        raise ValidationError(
            f"step weights {path}: positive weight off the edge set, e.g. {off[:5]}")
    return initial, mat


# ---------------------------------------------------------------------------
# prior files
# ---------------------------------------------------------------------------


def load_prior(path: str):
    """Load a prior file into a MarkovPrior or PathPrior.

    Markov form: ``{"type": "markov", "initial": [...], "matrix": [[...]]}``
    (or ``"matrices"`` for a time-varying list).  Path form:
    ``{"type": "paths", "horizon": T, "n": n, "paths": [[...]], "weights": [...]}``.
    """
    from .bridge import MarkovPrior, PathPrior
    from .network import PathSpace

    doc = _read_json(path, "prior")
    if not isinstance(doc, dict) or "type" not in doc:
        raise ValidationError(f"prior {path}: need a 'type' key")
    kind = doc["type"]
    if kind == "markov":
        try:
            initial = np.asarray(doc["initial"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"prior {path}: bad 'initial': {exc}") from exc
        if "matrix" in doc:
            return MarkovPrior(initial=initial,
                               matrix=np.asarray(doc["matrix"], dtype=float))
        if "matrices" in doc:
            mats = tuple(np.asarray(m, dtype=float) for m in doc["matrices"])
            return MarkovPrior(initial=initial, matrices=mats)
        raise ValidationError(f"prior {path}: markov prior needs 'matrix' or 'matrices'")
    if kind == "paths":
        try:
            horizon = int(doc["horizon"])
            paths = tuple(tuple(int(v) for v in p) for p in doc["paths"])
            weights = np.asarray(doc["weights"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"prior {path}: bad path prior: {exc}") from exc
        if len(paths) != weights.shape[0]:
            raise ValidationError(
                f"prior {path}: {len(paths)} paths but {weights.shape[0]} weights")
        if len(set(paths)) != len(paths):
            raise ValidationError(f"prior {path}: duplicate paths")
        n = int(doc.get("n", max(max(p) for p in paths)))
        order = sorted(range(len(paths)), key=lambda k: paths[k])
        paths = tuple(paths[k] for k in order)
        weights = weights[order]
        try:
            space = PathSpace(horizon=horizon, n=n, paths=paths)
        except ValueError as exc:
            raise ValidationError(f"prior {path}: inconsistent path lengths") from exc
        return PathPrior(path_space=space, weights=weights)
    raise ValidationError(f"prior {path}: unknown type {kind!r}")


# ---------------------------------------------------------------------------
# plan files
# ---------------------------------------------------------------------------

PLAN_PROB_FLOOR = 1e-12


def format_path(nodes: Sequence[int]) -> str:
    return ">".join(str(int(v)) for v in nodes)


def parse_path(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(">"))
    except ValueError as exc:
        raise ValidationError(f"bad path string {text!r}") from exc


def plan_to_text(plan) -> str:
    """Serialise a TransportPlan to the sectioned plan format."""
    space = plan.path_space
    lines = ["[meta]"]
    lines.append(f"horizon\t{space.horizon}")
    lines.append(f"nodes\t{space.n}")
    lines.append(f"paths\t{space.size}")
    lines.append(f"alpha\t{fmt(plan.alpha)}")
    lines.append("[objective]")
    lines.append(f"expected_cost\t{fmt(plan.objective.expected_cost)}")
    lines.append(f"kl_to_target\t{fmt(plan.objective.kl_to_target)}")
    lines.append(f"total\t{fmt(plan.objective.total)}")
    lines.append("[paths]")
    for k, p in enumerate(space.paths):
        prob = float(plan.path_law[k])
        if prob >= PLAN_PROB_FLOOR:
            lines.append(f"{format_path(p)}\t{fmt(prob)}\t{fmt(plan.path_costs[k])}")
    lines.append("[edge_usage]")
    lines.append("t\tfrom\tto\tmass")
    for (t, i, j) in sorted(plan.edge_usage):
        mass = plan.edge_usage[(t, i, j)]
        if mass >= PLAN_PROB_FLOOR:
            lines.append(f"{t}\t{i}\t{j}\t{fmt(mass)}")
    return "\n".join(lines) + "\n"


def write_plan(path: str, plan) -> None:
    atomic_write_text(path, plan_to_text(plan))


def parse_plan_text(text: str) -> dict:
    """Parse a plan file back into meta/objective/paths/edge_usage dicts."""
    section = None
    meta: dict[str, str] = {}
    objective: dict[str, float] = {}
    paths: dict[tuple[int, ...], tuple[float, float]] = {}
    usage: dict[tuple[int, int, int], float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("["):
            section = line.strip()
            continue
        cols = line.split("\t")
        try:
            if section == "[meta]":
                meta[cols[0]] = cols[1]
            elif section == "[objective]":
                objective[cols[0]] = float(cols[1])
            elif section == "[paths]":
                paths[parse_path(cols[0])] = (float(cols[1]), float(cols[2]))
            elif section == "[edge_usage]":
                if cols[0] == "t":
                    continue
                usage[(int(cols[0]), int(cols[1]), int(cols[2]))] = float(cols[3])
            else:
                raise ValidationError(f"line {lineno}: outside any known section")
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"plan line {lineno} malformed: {line!r}") from exc
    if not paths:
        raise ValidationError("plan file has no [paths] entries")
    return {"meta": meta, "objective": objective, "paths": paths,
            "edge_usage": usage}


def read_plan(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_plan_text(fh.read())
    except OSError as exc:
        raise ValidationError(f"cannot read plan file {path}: {exc}") from exc
