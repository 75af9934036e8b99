"""Configuration-driven experiment runner.

One INI document describes an experiment: a [run] section (command,
seed, output path), a [graph] section where the command needs one, and
a section named after the command holding its parameters.  The command
line adds only --config, --seed and --out; seed and out override the
document.  Every key is validated before any computation starts, rows
are written in deterministic order with repr floats, and a JSON
manifest with the fully resolved configuration lands next to each
output so a run can be reproduced from its artifacts alone.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
non-convergence, 3 tuning failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone

from . import __version__
from .coupling import (
    BlockScheme,
    DriftRegionError,
    SchemeError,
    TuningError,
    cluster_survival,
    drift_csv_rows,
    estimate_block_success,
    find_drift_region,
    g_lambda,
    iid_oriented_percolation,
    sample_block_driven_field,
    tune_block,
    write_field,
)
from .graphs import GraphError, ZdStepKernel, finite_box, make_family
from .randenv import PercolationError, convergence_experiment
from .rng import mix64
from .sim import (
    INF,
    PlanError,
    SimulationPlan,
    estimate_survival,
    scan_critical,
)
from .spectral import SpectralError, truncation_ladder

COMMANDS = ("spectral", "simulate", "scan", "coupling", "drift", "percolation")

# commands whose [graph] section is required; drift and percolation
# have no graph input and reject the section outright
_GRAPH_COMMANDS = frozenset({"spectral", "simulate", "scan", "coupling"})


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config document access


def _fmt(value) -> str:
    """Canonical text form used in resolved configs and CSV cells."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


class _Section:
    """One config section with consumption tracking.

    Every getter records the resolved value, so after a command parses
    its parameters the section reports unknown keys and can emit a
    fully resolved copy of itself for the manifest.
    """

    def __init__(self, name: str, raw: dict):
        self.name = name
        self._raw = dict(raw)
        self._seen = set()
        self.resolved = {}

    def _fetch(self, key: str, required: bool):
        self._seen.add(key)
        if key in self._raw:
            return self._raw[key].strip()
        if required:
            raise ConfigError(f"[{self.name}] is missing required key {key!r}")
        return None

    def text(self, key: str, default=None, required: bool = False):
        raw = self._fetch(key, required)
        value = default if raw is None else raw
        if value is not None:
            self.resolved[key] = str(value)
        return value

    def integer(self, key: str, default=None, required: bool = False,
                minimum=None):
        raw = self._fetch(key, required)
        if raw is None:
            value = default
        else:
            try:
                value = int(raw)
            except ValueError:
                raise ConfigError(
                    f"[{self.name}] {key} = {raw!r} is not an integer"
                ) from None
        if value is not None:
            if minimum is not None and value < minimum:
                raise ConfigError(
                    f"[{self.name}] {key} must be >= {minimum}"
                )
            self.resolved[key] = _fmt(value)
        return value

    def floating(self, key: str, default=None, required: bool = False):
        raw = self._fetch(key, required)
        if raw is None:
            value = default
        else:
            try:
                value = float(raw)
            except ValueError:
                raise ConfigError(
                    f"[{self.name}] {key} = {raw!r} is not a number"
                ) from None
        if value is not None:
            self.resolved[key] = _fmt(float(value))
            value = float(value)
        return value

    def boolean(self, key: str, default=None):
        raw = self._fetch(key, False)
        if raw is None:
            value = default
        elif raw.lower() in ("true", "yes", "1", "on"):
            value = True
        elif raw.lower() in ("false", "no", "0", "off"):
            value = False
        else:
            raise ConfigError(f"[{self.name}] {key} = {raw!r} is not a boolean")
        if value is not None:
            self.resolved[key] = _fmt(bool(value))
        return value

    def cap(self, key: str, default=INF):
        """Site / generation / birth caps: a nonnegative integer or inf."""
        raw = self._fetch(key, False)
        if raw is None or raw.lower() == "inf":
            value = INF if raw is not None else default
        else:
            try:
                value = int(raw)
            except ValueError:
                raise ConfigError(
                    f"[{self.name}] {key} = {raw!r} is not an integer or inf"
                ) from None
        self.resolved[key] = _fmt(float(value) if value == INF else value)
        return value

    def int_list(self, key: str, default=None, required: bool = False):
        """Comma list "1,2,3" or inclusive range "1:30" / "2:10:2"."""
        raw = self._fetch(key, required)
        if raw is None:
            value = list(default) if default is not None else None
        elif ":" in raw:
            parts = raw.split(":")
            if len(parts) not in (2, 3):
                raise ConfigError(f"[{self.name}] {key}: bad range {raw!r}")
            try:
                lo, hi = int(parts[0]), int(parts[1])
                step = int(parts[2]) if len(parts) == 3 else 1
            except ValueError:
                raise ConfigError(
                    f"[{self.name}] {key}: bad range {raw!r}"
                ) from None
            if step < 1 or hi < lo:
                raise ConfigError(f"[{self.name}] {key}: bad range {raw!r}")
            value = list(range(lo, hi + 1, step))
        else:
            try:
                value = [int(tok) for tok in raw.split(",") if tok.strip()]
            except ValueError:
                raise ConfigError(
                    f"[{self.name}] {key} = {raw!r} is not an integer list"
                ) from None
        if value is not None:
            self.resolved[key] = ",".join(str(v) for v in value)
        return value

    def float_list(self, key: str, default=None, required: bool = False):
        """Comma list of numbers, or "lo:hi:count" for a uniform grid."""
        raw = self._fetch(key, required)
        if raw is None:
            value = list(default) if default is not None else None
        elif raw.count(":") == 2:
            lo_s, hi_s, n_s = raw.split(":")
            try:
                lo, hi, n = float(lo_s), float(hi_s), int(n_s)
            except ValueError:
                raise ConfigError(
                    f"[{self.name}] {key}: bad grid {raw!r}"
                ) from None
            if n < 2 or hi <= lo:
                raise ConfigError(f"[{self.name}] {key}: bad grid {raw!r}")
            step = (hi - lo) / (n - 1)
            value = [lo + i * step for i in range(n - 1)] + [hi]
        else:
            try:
                value = [float(tok) for tok in raw.split(",") if tok.strip()]
            except ValueError:
                raise ConfigError(
                    f"[{self.name}] {key} = {raw!r} is not a number list"
                ) from None
        if value is not None:
            self.resolved[key] = ",".join(_fmt(float(v)) for v in value)
        return value

    def finish(self) -> None:
        unknown = set(self._raw) - self._seen
        if unknown:
            names = ", ".join(sorted(unknown))
            raise ConfigError(f"[{self.name}] has unknown keys: {names}")


class Config:
    """Parsed experiment document plus command-line overrides."""

    def __init__(self, command: str, sections: dict, seed: int, out: str):
        self.command = command
        self.sections = sections
        self.seed = seed
        self.out = out
        self._used = set()

    def section(self, name: str) -> _Section:
        self._used.add(name)
        return self.sections.setdefault(name, _Section(name, {}))

    def check_sections(self) -> None:
        extra = set(self.sections) - self._used - {"run"}
        if extra:
            names = ", ".join(sorted(extra))
            raise ConfigError(f"config has unused sections: {names}")

    def resolved(self) -> dict:
        out = {}
        for name in sorted(self._used | {"run"}):
            sec = self.sections.get(name)
            if sec is not None and sec.resolved:
                out[name] = dict(sorted(sec.resolved.items()))
        return out


def load_config(path: str, command: str, seed_override, out_override) -> Config:
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#", ";")
    )
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise UsageError(f"cannot read config {path!r}: {e}") from None
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path!r}: {e}") from None
    if parser.defaults():
        raise ConfigError("top-level keys outside a section are not allowed")
    sections = {
        name: _Section(name, dict(parser.items(name)))
        for name in parser.sections()
    }

    run = sections.setdefault("run", _Section("run", {}))
    declared = run.text("command", default=command)
    if declared not in COMMANDS:
        raise ConfigError(f"unknown command {declared!r} in [run]")
    if declared != command:
        raise ConfigError(
            f"config declares command {declared!r} but {command!r} was invoked"
        )
    run.resolved["command"] = command
    seed = run.integer("seed", default=0)
    out = run.text("out", default=None)
    run.finish()
    if seed_override is not None:
        seed = seed_override
    if out_override is not None:
        out = out_override
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    if out is None:
        out = "field.txt" if _is_field_run(sections, command) else f"{command}.csv"
    run.resolved["seed"] = str(seed)
    run.resolved["out"] = out

    cfg = Config(command, sections, seed, out)
    if command in _GRAPH_COMMANDS:
        # coupling's iid mode runs without a graph; its other modes
        # check for the section themselves
        needs_graph = command != "coupling"
        if needs_graph and "graph" not in sections:
            raise ConfigError(f"command {command!r} needs a [graph] section")
    elif "graph" in sections:
        raise ConfigError(f"command {command!r} takes no [graph] section")
    return cfg


def _is_field_run(sections: dict, command: str) -> bool:
    if command != "coupling" or "coupling" not in sections:
        return False
    return sections["coupling"]._raw.get("mode", "").strip() == "field"


def _build_graph(cfg: Config):
    sec = cfg.section("graph")
    family = sec.text("family", required=True)
    sec.finish()
    try:
        return make_family(family)
    except (GraphError, ValueError, KeyError) as e:
        raise ConfigError(f"[graph] bad family {family!r}: {e}") from None


def _vertex(graph, text: str, where: str):
    try:
        return graph.vertex_from_text(text)
    except (GraphError, ValueError) as e:
        raise ConfigError(f"{where}: bad vertex {text!r}: {e}") from None


# ---------------------------------------------------------------------------
# CSV plumbing


def _write_rows(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_manifest(cfg: Config, started: str, summary: dict) -> str:
    path = cfg.out + ".manifest.json"
    payload = {
        "tool": "brwlab",
        "version": __version__,
        "command": cfg.command,
        "config": cfg.resolved(),
        "out": cfg.out,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "summary": summary,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def manifest_to_ini(manifest: dict) -> str:
    """Rebuild an INI document from a manifest's resolved config.

    Feeding the result back through the same command reproduces the
    original tables byte for byte.
    """
    buf = io.StringIO()
    for name, keys in manifest["config"].items():
        buf.write(f"[{name}]\n")
        for key, value in keys.items():
            buf.write(f"{key} = {value}\n")
        buf.write("\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands


def cmd_spectral(cfg: Config) -> dict:
    graph = _build_graph(cfg)
    sec = cfg.section("spectral")
    radii = sec.int_list("radii", required=True)
    tol = sec.floating("tol", default=1e-10)
    max_vertices = sec.integer("max_vertices", default=200_000, minimum=1)
    center_text = sec.text("center", default=None)
    sec.finish()
    cfg.check_sections()
    if not radii:
        raise ConfigError("[spectral] radii is empty")
    if any(r < 0 for r in radii):
        raise ConfigError("[spectral] radii must be nonnegative")
    center = (
        _vertex(graph, center_text, "[spectral] center")
        if center_text is not None else None
    )
    ladder = truncation_ladder(
        graph, radii, center=center, tol=tol, max_vertices=max_vertices
    )
    rows = [
        (r.radius, r.ball_size, r.eigenvalue, r.critical_estimate,
         r.iterations, r.residual)
        for r in ladder.rungs
    ]
    _write_rows(
        cfg.out,
        ("radius", "ball_size", "eigenvalue", "critical_estimate",
         "iterations", "residual"),
        rows,
    )
    return {"rungs": len(rows), "final_estimate": ladder.final_estimate()}


def _plan_from_config(cfg: Config, sec: _Section, graph,
                      need_lam: bool) -> SimulationPlan:
    lam = sec.floating("lam", required=need_lam, default=1.0)
    horizon = sec.floating("horizon", required=True)
    m = sec.cap("m")
    gen_cap = sec.cap("gen_cap")
    birth_cap = sec.cap("birth_cap")
    replicas = sec.integer("replicas", default=100, minimum=1)
    ceiling = sec.integer("ceiling", default=1_000_000, minimum=1)
    x0_text = sec.text("x0", default=None)
    initial_text = sec.text("initial", default=None)
    checkpoints = sec.float_list("checkpoints", default=None)

    x0 = _vertex(graph, x0_text, f"[{sec.name}] x0") if x0_text is not None else None
    initial = ()
    if initial_text:
        pairs = []
        for part in initial_text.split(";"):
            part = part.strip()
            if not part:
                continue
            text, _, count = part.rpartition(":")
            if not text:
                raise ConfigError(
                    f"[{sec.name}] initial entry {part!r} is not vertex:count"
                )
            try:
                pairs.append((_vertex(graph, text, f"[{sec.name}] initial"), int(count)))
            except ValueError as e:
                raise ConfigError(
                    f"[{sec.name}] bad initial entry {part!r}: {e}"
                ) from None
        initial = tuple(pairs)
    return SimulationPlan(
        graph=graph,
        lam=lam,
        horizon=horizon,
        m=m,
        gen_cap=gen_cap,
        birth_cap=birth_cap,
        initial=initial,
        x0=x0,
        master_seed=cfg.seed,
        replicas=replicas,
        ceiling=ceiling,
        checkpoints=tuple(checkpoints) if checkpoints else (),
    )


_SURVIVAL_HEADER = (
    "lam", "mode", "m", "gen_cap", "birth_cap", "horizon",
    "replicas", "successes", "p_hat", "ci_lo", "ci_hi",
)


def _survival_row(est, plan: SimulationPlan, mode: str) -> tuple:
    return (
        est.lam, mode, plan.m, plan.gen_cap, plan.birth_cap, plan.horizon,
        est.replicas, est.successes, est.p_hat, est.ci_lo, est.ci_hi,
    )


def cmd_simulate(cfg: Config) -> dict:
    graph = _build_graph(cfg)
    sec = cfg.section("simulate")
    mode = sec.text("mode", default="weak")
    plan = _plan_from_config(cfg, sec, graph, need_lam=True)
    sec.finish()
    cfg.check_sections()
    if mode not in ("weak", "local"):
        raise ConfigError("[simulate] mode must be weak or local")
    plan.validate()
    est = estimate_survival(plan, mode)
    _write_rows(cfg.out, _SURVIVAL_HEADER, [_survival_row(est, plan, mode)])
    return {"p_hat": est.p_hat, "ci": [est.ci_lo, est.ci_hi]}


def cmd_scan(cfg: Config) -> dict:
    graph = _build_graph(cfg)
    sec = cfg.section("scan")
    mode = sec.text("mode", default="weak")
    bracket = sec.float_list("bracket", required=True)
    steps = sec.integer("steps", default=6, minimum=1)
    threshold = sec.floating("threshold", default=0.05)
    plan = _plan_from_config(cfg, sec, graph, need_lam=False)
    sec.finish()
    cfg.check_sections()
    if mode not in ("weak", "local"):
        raise ConfigError("[scan] mode must be weak or local")
    if len(bracket) != 2:
        raise ConfigError("[scan] bracket must be two numbers lo,hi")
    if not 0 < threshold < 1:
        raise ConfigError("[scan] threshold must lie in (0, 1)")
    plan.validate()
    result = scan_critical(plan, mode, tuple(bracket), steps=steps,
                           threshold=threshold)
    rows = [
        _survival_row(probe.estimate, plan, mode) for probe in result.probes
    ]
    _write_rows(cfg.out, _SURVIVAL_HEADER, rows)
    return {
        "separated": result.separated,
        "bracket": list(result.bracket),
        "threshold": result.threshold,
        "note": result.note,
    }


def _parse_blocks(sec: _Section, graph) -> dict:
    raw = sec.text("blocks", required=True)
    if raw.startswith("zline:"):
        parts = raw.split(":")
        if len(parts) != 3:
            raise ConfigError("[coupling] blocks zline form is zline:lo:hi")
        if not isinstance(graph, ZdStepKernel) or graph.d != 1:
            raise ConfigError(
                "[coupling] zline blocks need a one-dimensional lattice walk"
            )
        try:
            lo, hi = int(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError("[coupling] blocks zline form is zline:lo:hi") from None
        if hi < lo:
            raise ConfigError("[coupling] zline blocks need lo <= hi")
        return {i: ((i,),) for i in range(lo, hi + 1)}
    blocks = {}
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        idx_text, _, verts = part.partition(":")
        if not verts:
            raise ConfigError(
                f"[coupling] block entry {part!r} is not index:v|v|..."
            )
        try:
            idx = int(idx_text)
        except ValueError:
            raise ConfigError(
                f"[coupling] block index {idx_text!r} is not an integer"
            ) from None
        try:
            blocks[idx] = tuple(
                _vertex(graph, v.strip(), "[coupling] blocks")
                for v in verts.split("|")
            )
        except (ValueError, GraphError) as e:
            raise ConfigError(f"[coupling] bad block vertex: {e}") from None
    if not blocks:
        raise ConfigError("[coupling] blocks is empty")
    return blocks


def _scheme_from_config(sec: _Section, graph) -> tuple:
    blocks = _parse_blocks(sec, graph)
    offsets = sec.int_list("offsets", required=True)
    block_time = sec.floating("block_time", default=1.0)
    k = sec.integer("k", default=1, minimum=1)
    m = sec.cap("m")
    gen_cap = sec.cap("gen_cap")
    birth_cap = sec.cap("birth_cap")
    lam = sec.floating("lam", required=True)
    scheme = BlockScheme(
        graph=graph,
        blocks=blocks,
        offsets=tuple(offsets),
        block_time=block_time,
        k=k,
        m=m,
        gen_cap=gen_cap,
        birth_cap=birth_cap,
    )
    scheme.validate()
    return scheme, lam


def cmd_coupling(cfg: Config) -> dict:
    sec = cfg.section("coupling")
    mode = sec.text("mode", required=True)
    if mode not in ("iid", "block", "tune", "field"):
        raise ConfigError(
            "[coupling] mode must be iid, block, tune or field"
        )

    if mode == "iid":
        # pure site-free percolation; a [graph] section, when present,
        # is validated but plays no role
        if "graph" in cfg.sections:
            _build_graph(cfg)
        offsets = sec.int_list("offsets", default=(0, 1))
        p = sec.floating("p", required=True)
        lo = sec.integer("window_lo", required=True)
        hi = sec.integer("window_hi", required=True)
        depth = sec.integer("depth", required=True, minimum=1)
        samples = sec.integer("samples", default=1, minimum=1)
        origin = sec.integer("origin", default=0)
        sec.finish()
        cfg.check_sections()
        if not 0.0 <= p <= 1.0:
            raise ConfigError("[coupling] p must lie in [0, 1]")
        rows = []
        survived = 0
        for s in range(samples):
            field = iid_oriented_percolation(
                offsets, p, (lo, hi, depth), mix64(cfg.seed, s), origin=origin
            )
            report = cluster_survival(field)
            survived += int(report.survived)
            rows.append((s, int(report.survived), report.max_depth,
                         report.column_hits, field.overflow))
        _write_rows(
            cfg.out,
            ("sample", "survived", "max_depth", "column_hits", "overflow"),
            rows,
        )
        return {"samples": samples, "survival_frequency": survived / samples}

    if "graph" not in cfg.sections:
        raise ConfigError(f"coupling mode {mode!r} needs a [graph] section")
    graph = _build_graph(cfg)

    if mode == "block":
        scheme, lam = _scheme_from_config(sec, graph)
        source = sec.integer("source", default=0)
        variants_text = sec.text("variants", default="free")
        replicas = sec.integer("replicas", default=400, minimum=1)
        ceiling = sec.integer("ceiling", default=1_000_000, minimum=1)
        sec.finish()
        cfg.check_sections()
        variants = tuple(
            v.strip() for v in variants_text.split(",") if v.strip()
        )
        estimate = estimate_block_success(
            scheme, source, lam, variants=variants, replicas=replicas,
            seed=cfg.seed, ceiling=ceiling,
        )
        # per-target rows first, then one joint row per variant
        rows = []
        for name in variants:
            var = estimate.variants[name]
            for tgt in var.per_target:
                rows.append((
                    name, str(tgt.target), tgt.successes, tgt.p_hat,
                    tgt.ci_lo, tgt.ci_hi, int(tgt.structural_zero), 0,
                ))
            rows.append((
                name, "joint", var.joint_successes, var.joint_p,
                var.joint_ci_lo, var.joint_ci_hi, int(not var.source_fits),
                var.overflow,
            ))
        _write_rows(
            cfg.out,
            ("variant", "target", "successes", "p_hat", "ci_lo", "ci_hi",
             "structural_zero", "overflow"),
            rows,
        )
        return {
            "source": estimate.source,
            "replicas": estimate.replicas,
            "joint_p": {
                name: estimate.variants[name].joint_p for name in variants
            },
        }

    if mode == "tune":
        scheme, lam = _scheme_from_config(sec, graph)
        eps = sec.floating("eps", default=0.05)
        replicas = sec.integer("replicas", default=200, minimum=1)
        source = sec.integer("source", default=None)
        t_grid = sec.float_list("t_grid", default=None)
        max_doublings = sec.integer("max_doublings", default=12, minimum=1)
        ladder_radii = sec.int_list("ladder_radii", default=(4, 8, 12))
        ceiling = sec.integer("ceiling", default=1_000_000, minimum=1)
        sec.finish()
        cfg.check_sections()
        if not 0 < eps < 1:
            raise ConfigError("[coupling] eps must lie in (0, 1)")
        tuned = tune_block(
            scheme, lam, eps=eps, seed=cfg.seed, source=source,
            replicas=replicas, t_grid=t_grid, max_doublings=max_doublings,
            ladder_radii=tuple(ladder_radii), ceiling=ceiling,
        )
        _write_rows(
            cfg.out,
            ("block_time", "k", "gen_cap", "birth_cap", "joint_p",
             "joint_ci_lo", "joint_ci_hi", "eps", "ladder_estimate",
             "source", "h_walks", "m_bound"),
            [(
                tuned.block_time, tuned.k, tuned.gen_cap, tuned.birth_cap,
                tuned.joint_p, tuned.joint_ci_lo, tuned.joint_ci_hi,
                tuned.eps, tuned.ladder_estimate, tuned.source,
                "" if tuned.h_walks is None else tuned.h_walks,
                "" if tuned.m_bound is None else tuned.m_bound,
            )],
        )
        return {
            "block_time": tuned.block_time,
            "k": tuned.k,
            "gen_cap": tuned.gen_cap,
            "birth_cap": tuned.birth_cap,
            "joint_p": tuned.joint_p,
        }

    # mode == "field"
    scheme, lam = _scheme_from_config(sec, graph)
    lo = sec.integer("window_lo", required=True)
    hi = sec.integer("window_hi", required=True)
    depth = sec.integer("depth", required=True, minimum=1)
    origin = sec.integer("origin", default=0)
    variant = sec.text("variant", default="hat")
    ceiling = sec.integer("ceiling", default=1_000_000, minimum=1)
    sec.finish()
    cfg.check_sections()
    field = sample_block_driven_field(
        scheme, lam, (lo, hi, depth), cfg.seed, variant=variant,
        origin=origin, ceiling=ceiling,
    )
    report = cluster_survival(field)
    with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
        write_field(field, fh)
    return {
        "edges": len(field.edges),
        "overflow": field.overflow,
        "survived": report.survived,
        "max_depth": report.max_depth,
        "column_hits": report.column_hits,
    }


def cmd_drift(cfg: Config) -> dict:
    sec = cfg.section("drift")
    p = sec.floating("p", required=True)
    q = sec.floating("q", required=True)
    lam = sec.floating("lam", required=True)
    grid = sec.integer("grid", default=161, minimum=3)
    margin = sec.floating("margin", default=1e-3)
    n_max = sec.integer("n_max", default=10_000, minimum=2)
    sec.finish()
    cfg.check_sections()
    analysis = find_drift_region(p, q, lam, grid=grid, margin=margin,
                                 n_max=n_max)
    _write_rows(cfg.out, ("alpha", "beta", "g_value"),
                drift_csv_rows(analysis))
    anchor_gap = abs(g_lambda(p - q, p, p, q, lam) - lam)
    summary = analysis.summary()
    summary.update({
        "p": p, "q": q, "lam": lam,
        "anchor_gap": anchor_gap,
        "anchor_ok": anchor_gap <= 1e-12,
    })
    return summary


def cmd_percolation(cfg: Config) -> dict:
    sec = cfg.section("percolation")
    d = sec.integer("d", default=2, minimum=1)
    side = sec.integer("side", required=True, minimum=2)
    levels = sec.int_list("levels", default=None)
    p_values = sec.float_list("p_values", default=None)
    seeds = sec.integer("seeds", default=1, minimum=1)
    min_over = sec.boolean("min_over_clusters", default=True)
    sec.finish()
    cfg.check_sections()
    if p_values is None and levels is None:
        raise ConfigError("[percolation] needs levels or p_values")
    if p_values is None:
        if any(n < 1 for n in levels):
            raise ConfigError("[percolation] levels must be >= 1")
        p_values = [1.0 - 2.0 ** -n for n in levels]
    elif levels is not None and len(levels) != len(p_values):
        raise ConfigError(
            "[percolation] levels and p_values must have equal length"
        )
    box = finite_box(d, side)
    table = convergence_experiment(
        box, p_values,
        seeds=[mix64(cfg.seed, s) for s in range(seeds)],
        levels=levels,
    )
    rows = [
        (r.n, r.p, side, r.largest_size, r.lam_largest,
         r.lam_min_clusters, r.lam_box, r.seed, r.gap)
        for r in table.rows
    ]
    _write_rows(
        cfg.out,
        ("n", "p", "box_side", "largest_cluster_size", "lambda_s_largest",
         "lambda_s_min_over_clusters", "lambda_s_full_box", "seed", "gap"),
        rows,
    )
    return {
        "rows": len(rows),
        "lambda_s_full_box": table.lam_box,
        "residual_mass": table.residual_mass,
    }


_RUNNERS = {
    "spectral": cmd_spectral,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "coupling": cmd_coupling,
    "drift": cmd_drift,
    "percolation": cmd_percolation,
}


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_args(argv):
    parser = _Parser(
        prog="brwlab",
        description="branching-walk experiments driven by INI configs",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", required=True,
                       help="path to the experiment INI document")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed from [run]")
        p.add_argument("--out", default=None,
                       help="override the output path from [run]")
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required: " + " | ".join(COMMANDS))
    return args


def main(argv=None) -> int:
    try:
        args = _parse_args(argv)
        cfg = load_config(args.config, args.command, args.seed, args.out)
        started = datetime.now(timezone.utc).isoformat()
        summary = _RUNNERS[cfg.command](cfg)
        manifest = _write_manifest(cfg, started, summary)
    except (UsageError, ConfigError, GraphError, PlanError, SchemeError,
            PercolationError) as e:
        print(f"brwlab: error: {e}", file=sys.stderr)
        return 1
    except SpectralError as e:
        print(f"brwlab: did not converge: {e}", file=sys.stderr)
        return 2
    except TuningError as e:
        # DriftRegionError lands here too
        print(f"brwlab: tuning failed: {e}", file=sys.stderr)
        return 3
    print(f"wrote {cfg.out} and {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
