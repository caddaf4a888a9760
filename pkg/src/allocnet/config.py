"""Scenario files: a small TOML dialect, parsed strictly and serialized back.

Layout::

    algorithm = "nonsmooth"            # or "smooth"
    [graph]
    nodes = 6
    edges = [[1, 2, 1.0], ...]         # [from, to, weight], 1-indexed
    [gains]
    k1 = 9.0
    k2 = 326.0
    k3 = 5.0
    [integrator]
    h = 1e-3
    horizon = 60.0
    record_every = 100
    [agents.1]
    cost = "dispatch 0.5 3 2 30"       # alpha beta gamma c
    set = "box 20 40"                  # lo.. hi.. / "ball cx cy r" / "free"
    d = [45.0]
    x0 = [30.0]                        # optional; defaults to projecting d
    mu0 = [0.0]                        # optional
    eta0 = [0.0]                       # optional
    [[events]]
    time = 20.0
    agent = 6
    d = [10.0]

Unknown keys anywhere are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

import sys
from importlib import resources

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .costs import (
    DispatchCost,
    LogCoshQuadratic,
    Quadratic,
    SaturatingQuadratic,
    SquaredDistance,
)
from .errors import ConfigError
from .graph import Digraph
from .model import Gains, Problem, ResourceEvent, Scenario, make_scenario
from .sets import Ball, Box, ConvexSet, WholeSpace

_ROOT_KEYS = {"algorithm", "graph", "gains", "integrator", "agents", "events"}
_GRAPH_KEYS = {"nodes", "edges"}
_GAIN_KEYS = {"k1", "k2", "k3"}
_INTEGRATOR_KEYS = {"h", "horizon", "record_every"}
_AGENT_KEYS = {"cost", "set", "d", "x0", "mu0", "eta0"}
_EVENT_KEYS = {"time", "agent", "d"}


def loads(text: str) -> dict:
    """Parse scenario TOML text into plain dicts/lists, with key validation."""
    try:
        data = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    _check_keys(data, _ROOT_KEYS, "top level")
    _check_keys(data.get("graph", {}), _GRAPH_KEYS, "[graph]")
    _check_keys(data.get("gains", {}), _GAIN_KEYS, "[gains]")
    _check_keys(data.get("integrator", {}), _INTEGRATOR_KEYS, "[integrator]")
    for name, tbl in data.get("agents", {}).items():
        if not isinstance(tbl, dict):
            raise ConfigError(f"[agents.{name}] must be a table")
        _check_keys(tbl, _AGENT_KEYS, f"[agents.{name}]")
    for k, ev in enumerate(data.get("events", [])):
        _check_keys(ev, _EVENT_KEYS, f"[[events]] entry {k + 1}")
    return data


def load(path: str) -> dict:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return loads(text)


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _require(table, key, where):
    if key not in table:
        raise ConfigError(f"missing key '{key}' in {where}")
    return table[key]


def parse_cost(spec: str, dimension: int):
    """Cost spec string -> CostFunction.

    Forms: "dispatch alpha beta gamma c", "quadratic q11 .. qnn b1 .. bn",
    "squared_distance c1 .. cn [weight]", "saturating a weight",
    "logcosh scale weight".
    """
    tokens = spec.split()
    if not tokens:
        raise ConfigError("empty cost spec")
    kind, args = tokens[0], [float(t) for t in tokens[1:]]
    if kind == "dispatch":
        if len(args) != 4:
            raise ConfigError("dispatch cost needs: alpha beta gamma c")
        return DispatchCost(alpha=args[0], beta=args[1], gamma=args[2], c=args[3])
    if kind == "quadratic":
        n = dimension
        if len(args) == n * n + n:
            q = np.array(args[: n * n]).reshape(n, n)
            b = np.array(args[n * n :])
        elif len(args) == n + n:  # diagonal shorthand
            q = np.diag(args[:n])
            b = np.array(args[n:])
        else:
            raise ConfigError("quadratic cost needs n*n+n (or 2n diagonal) numbers")
        return Quadratic(Q=q, b=b)
    if kind == "squared_distance":
        if len(args) == dimension:
            return SquaredDistance(center=np.array(args))
        if len(args) == dimension + 1:
            return SquaredDistance(center=np.array(args[:-1]), weight=args[-1])
        raise ConfigError("squared_distance needs n center values and optional weight")
    if kind == "saturating":
        if len(args) != 2:
            raise ConfigError("saturating cost needs: a weight")
        return SaturatingQuadratic(dim=dimension, a=args[0], weight=args[1])
    if kind == "logcosh":
        if len(args) != 2:
            raise ConfigError("logcosh cost needs: scale weight")
        return LogCoshQuadratic(dim=dimension, scale=args[0], weight=args[1])
    raise ConfigError(f"unknown cost kind '{kind}'")


def parse_set(spec: str, dimension: int) -> ConvexSet:
    """Set spec string -> ConvexSet: "box lo.. hi..", "ball c.. r", "free"."""
    tokens = spec.split()
    if not tokens:
        raise ConfigError("empty set spec")
    kind, args = tokens[0], [float(t) for t in tokens[1:]]
    if kind == "free":
        if args:
            raise ConfigError("'free' takes no arguments")
        return WholeSpace(dim=dimension)
    if kind == "box":
        if len(args) != 2 * dimension:
            raise ConfigError("box needs n lower then n upper bounds")
        return Box(lower=np.array(args[:dimension]), upper=np.array(args[dimension:]))
    if kind == "ball":
        if len(args) != dimension + 1:
            raise ConfigError("ball needs n center values then a radius")
        return Ball(center=np.array(args[:-1]), radius=args[-1])
    raise ConfigError(f"unknown set kind '{kind}'")


def build_scenario(data: dict) -> Scenario:
    """Assemble a Scenario from parsed file data."""
    algorithm = _require(data, "algorithm", "top level")

    gtab = _require(data, "graph", "top level")
    nodes = int(_require(gtab, "nodes", "[graph]"))
    edges = _require(gtab, "edges", "[graph]")
    triples = []
    for e in edges:
        if len(e) != 3:
            raise ConfigError(f"edge {e} must be [from, to, weight]")
        u, v, w = int(e[0]), int(e[1]), float(e[2])
        if not (1 <= u <= nodes and 1 <= v <= nodes):
            raise ConfigError(f"edge {e} references nodes outside 1..{nodes}")
        triples.append((u - 1, v - 1, w))
    graph = Digraph.from_edges(nodes, triples)

    agents = _require(data, "agents", "top level")
    try:
        order = sorted(agents, key=int)
    except ValueError as exc:
        raise ConfigError("agent table names must be integers 1..N") from exc
    if [int(k) for k in order] != list(range(1, nodes + 1)):
        raise ConfigError(f"agent tables must be exactly 1..{nodes}")

    demands, costs, sets = [], [], []
    x0_rows, mu0_rows, eta0_rows = [], [], []
    any_init = {"x0": False, "mu0": False, "eta0": False}
    dimension = None
    for name in order:
        tbl = agents[name]
        d = np.atleast_1d(np.asarray(_require(tbl, "d", f"[agents.{name}]"), dtype=float))
        if dimension is None:
            dimension = d.shape[0]
        elif d.shape[0] != dimension:
            raise ConfigError(f"[agents.{name}]: demand dimension differs from agent 1")
        demands.append(d)
        costs.append(parse_cost(_require(tbl, "cost", f"[agents.{name}]"), dimension))
        sets.append(parse_set(_require(tbl, "set", f"[agents.{name}]"), dimension))
        for key, rows in (("x0", x0_rows), ("mu0", mu0_rows), ("eta0", eta0_rows)):
            if key in tbl:
                any_init[key] = True
                rows.append(np.atleast_1d(np.asarray(tbl[key], dtype=float)))
            else:
                rows.append(None)

    problem = Problem(graph=graph, costs=tuple(costs), sets=tuple(sets), d=np.vstack(demands))

    def stack(key, rows):
        if not any_init[key]:
            return None
        if any(r is None for r in rows):
            raise ConfigError(f"'{key}' must be given for every agent or for none")
        return np.vstack(rows)

    gains_tbl = _require(data, "gains", "top level")
    gains = Gains(
        k1=float(_require(gains_tbl, "k1", "[gains]")),
        k2=float(_require(gains_tbl, "k2", "[gains]")),
        k3=float(_require(gains_tbl, "k3", "[gains]")),
    )

    itab = _require(data, "integrator", "top level")
    events = []
    for k, ev in enumerate(data.get("events", [])):
        agent = int(_require(ev, "agent", f"[[events]] entry {k + 1}"))
        if not (1 <= agent <= nodes):
            raise ConfigError(f"[[events]] entry {k + 1}: unknown agent {agent}")
        events.append(
            ResourceEvent(
                time=float(_require(ev, "time", f"[[events]] entry {k + 1}")),
                agent=agent - 1,
                d=np.asarray(_require(ev, "d", f"[[events]] entry {k + 1}"), dtype=float),
            )
        )

    return make_scenario(
        problem,
        algorithm=algorithm,
        gains=gains,
        x0=stack("x0", x0_rows),
        mu0=stack("mu0", mu0_rows),
        eta0=stack("eta0", eta0_rows),
        h=float(_require(itab, "h", "[integrator]")),
        horizon=float(_require(itab, "horizon", "[integrator]")),
        record_every=int(_require(itab, "record_every", "[integrator]")),
        events=tuple(events),
    )


def load_scenario(path: str) -> Scenario:
    return build_scenario(load(path))


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)  # shortest exact round-trip form; TOML accepts 'inf'
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, list):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def dumps(data: dict) -> str:
    """Serialize parsed scenario data back to TOML text.

    Supports exactly the structures `loads` produces; floats use repr so a
    parse -> dumps -> parse round trip is value-exact.
    """
    lines = []
    for key, val in data.items():
        if not isinstance(val, (dict, list)) or (
            isinstance(val, list) and not all(isinstance(e, dict) for e in val)
        ):
            lines.append(f"{key} = {_fmt_value(val)}")
    for key, val in data.items():
        if isinstance(val, dict):
            sub_tables = {k: v for k, v in val.items() if isinstance(v, dict)}
            plain = {k: v for k, v in val.items() if not isinstance(v, dict)}
            if plain or not sub_tables:
                lines.append("")
                lines.append(f"[{key}]")
                for k, v in plain.items():
                    lines.append(f"{k} = {_fmt_value(v)}")
            for sub, tbl in sub_tables.items():
                lines.append("")
                lines.append(f"[{key}.{sub}]")
                for k, v in tbl.items():
                    if isinstance(v, dict):
                        raise ConfigError("tables nested deeper than two levels")
                    lines.append(f"{k} = {_fmt_value(v)}")
        elif isinstance(val, list) and val and all(isinstance(e, dict) for e in val):
            for entry in val:
                lines.append("")
                lines.append(f"[[{key}]]")
                for k, v in entry.items():
                    lines.append(f"{k} = {_fmt_value(v)}")
    return "\n".join(lines) + "\n"


def parse_toml_value(raw: str):
    """Parse a single TOML literal ('9', '1e-3', '[1, 2]', '"s"'); fall back to str."""
    try:
        return _toml.loads(f"v = {raw}")["v"]
    except _toml.TOMLDecodeError:
        return raw


def bundled_scenario_path(name: str):
    """Path of a scenario file shipped with the package (name without .toml)."""
    return resources.files("allocnet") / "scenarios" / f"{name}.toml"


def resolve_scenario(ref: str) -> dict:
    """Load scenario data from a path, path+'.toml', or a bundled name."""
    import os

    for candidate in (ref, ref + ".toml"):
        if os.path.isfile(candidate):
            return load(candidate)
    base = os.path.basename(ref)
    if base.endswith(".toml"):
        base = base[:-5]
    bundled = bundled_scenario_path(base)
    if bundled.is_file():
        return loads(bundled.read_text(encoding="utf-8"))
    raise ConfigError(f"cannot find scenario '{ref}' (not a file or bundled name)")
