"""Multi-trial falsification experiments and their summary tables.

An experiment runs every (property, agent, dt) cell ``trials`` times with
seeds derived from one master seed, picks each agent's best dt, and compares
the best agent of the "ours" group against the best baseline with Fisher's
exact test (success counts) and the Mann-Whitney U test (episode counts,
failures capped at the budget).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .agents import make_agent
from .falsify import falsify
from .presets import load_property
from .stats import capped_episode_counts, capped_median, fisher_exact, mann_whitney_u, significance_marks
from .system import EchoModel, SurrogateAT

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("property", "agent", "dt", "success_rate", "median_episodes",
                   "p_fisher", "p_mwu", "marks")


class ConfigError(ValueError):
    pass


@dataclass
class PropertySpec:
    name: str
    ref: str  # preset name or path
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    properties: list
    agents: list  # dicts with at least "name" and "kind"
    model: dict
    dts: list
    t_end: float
    episodes: int
    trials: int
    seed: int
    jobs: int = 1
    early_exit: bool = False
    bool_margin: float = 1.0
    name: str = "experiment"
    base_dir: str = "."

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.episodes < 1:
            raise ConfigError("episodes must be at least 1")
        if not self.dts or any(not d > 0 for d in self.dts):
            raise ConfigError("dt values must be positive")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if not self.agents:
            raise ConfigError("at least one agent is required")
        names = [a["name"] for a in self.agents]
        if len(set(names)) != len(names):
            raise ConfigError(f"agent names must be unique: {names}")
        if not self.properties:
            raise ConfigError("at least one property is required")


def _property_spec(d: dict, base: Path) -> PropertySpec:
    if "preset" in d:
        ref = d["preset"]
    elif "file" in d:
        ref = str((base / d["file"]).resolve())
    else:
        raise ConfigError("a property needs 'preset' or 'file'")
    name = d.get("name") or Path(ref).stem
    return PropertySpec(name, ref, dict(d.get("params", {})))


def config_from_dict(raw: dict, base_dir=".") -> ExperimentConfig:
    base = Path(base_dir)
    exp = raw.get("experiment", {})
    props = raw.get("properties") or ([raw["property"]] if "property" in raw else [])
    agents = []
    for a in raw.get("agents", []):
        a = dict(a)
        if "kind" not in a:
            raise ConfigError(f"agent entry without 'kind': {a}")
        a.setdefault("name", a["kind"])
        agents.append(a)
    model = dict(raw.get("model", {"id": "surrogate-at"}))
    dts = exp.get("dts", exp.get("dt", [1.0]))
    try:
        return ExperimentConfig(
            properties=[_property_spec(p, base) for p in props],
            agents=agents,
            model=model,
            dts=[float(d) for d in (dts if isinstance(dts, list) else [dts])],
            t_end=float(exp.get("t_end", 100.0)),
            episodes=int(exp.get("episodes", 200)),
            trials=int(exp.get("trials", 20)),
            seed=int(exp.get("seed", 0)),
            jobs=int(exp.get("jobs", 1)),
            early_exit=bool(exp.get("early_exit", False)),
            bool_margin=float(exp.get("bool_margin", 1.0)),
            name=str(exp.get("name", "experiment")),
            base_dir=str(base),
        )
    except (TypeError, KeyError) as e:
        raise ConfigError(f"invalid experiment config: {e}") from e


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_dict(raw, path.parent)


def build_model(spec: dict, dt: float | None = None, prop=None):
    """``surrogate-at``, ``echo`` or ``external:<command>`` from a model table."""
    mid = spec.get("id", "surrogate-at")
    opts = dict(spec.get("options", {}))
    if mid == "surrogate-at":
        return SurrogateAT(**opts)
    if mid == "echo":
        return EchoModel(**opts)
    if mid.startswith("external:"):
        from .bridge import external_model_connect
        from .formula import Schema

        if prop is None or dt is None:
            raise ConfigError("external models need a property schema and dt")
        bounds = spec.get("input_bounds")
        names = spec.get("inputs")
        if not bounds or not names or len(bounds) != len(names):
            raise ConfigError("external models need matching 'inputs' and 'input_bounds'")
        return external_model_connect(mid[len("external:"):], Schema(names), prop.schema,
                                      bounds, dt, float(spec.get("timeout", 30.0)))
    raise ConfigError(f"unknown model id {mid!r}")


def _key(s: str) -> int:
    return zlib.crc32(s.encode())


def trial_seed(master: int, prop: str, agent: str, dt_index: int, trial: int) -> int:
    """Per-trial seed, stable under reordering of the experiment's cells."""
    ss = np.random.SeedSequence([master, _key(prop), _key(agent), dt_index, trial])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class TrialRecord:
    property: str
    agent: str
    dt: float
    trial: int
    seed: int
    outcome: str
    episodes: int
    falsified: bool
    error: str | None = None
    wall_ms: float = 0.0


def run_trial(cfg: ExperimentConfig, prop_spec: PropertySpec, agent_cfg: dict,
              dt_index: int, trial: int) -> TrialRecord:
    dt = cfg.dts[dt_index]
    seed = trial_seed(cfg.seed, prop_spec.name, agent_cfg["name"], dt_index, trial)
    base = TrialRecord(prop_spec.name, agent_cfg["name"], dt, trial, seed, "error", 0, False)
    model = None
    try:
        pf = load_property(prop_spec.ref, prop_spec.params)
        model = build_model(cfg.model, dt, pf)
        n_steps = max(1, math.ceil(cfg.t_end / dt - 1e-9))
        agent = make_agent(agent_cfg, model, n_steps, seed=seed, episodes=cfg.episodes)
        res = falsify(model, agent, pf.life_long(), dt, cfg.t_end, cfg.episodes,
                      seed=seed, bool_margin=cfg.bool_margin, early_exit=cfg.early_exit)
    except Exception as e:  # recorded, never fatal for the experiment
        log.error("trial %s/%s/dt=%g/#%d failed: %s", prop_spec.name, agent_cfg["name"], dt, trial, e)
        base.error = f"{type(e).__name__}: {e}"
        return base
    finally:
        if model is not None and hasattr(model, "close"):
            model.close()
    base.outcome, base.episodes, base.falsified = res.outcome, res.num_episodes, res.falsified
    base.error, base.wall_ms = res.error, res.wall_ms
    return base


@dataclass
class Cell:
    property: str
    agent: str
    dt: float
    trials: list  # TrialRecord, ordered by trial index
    budget: int

    @property
    def successes(self) -> int:
        return sum(t.falsified for t in self.trials)

    @property
    def success_rate(self) -> float:
        return self.successes / len(self.trials)

    def capped(self) -> list:
        return capped_episode_counts([(t.falsified, t.episodes) for t in self.trials], self.budget)

    @property
    def median(self) -> float:
        return capped_median([(t.falsified, t.episodes) for t in self.trials], self.budget)


@dataclass
class SummaryRow:
    property: str
    agent: str
    dt: float
    success_rate: float
    median_episodes: float
    p_fisher: float | None = None
    p_mwu: float | None = None
    marks: str = ""


def _rank(cell: Cell):
    # higher success, then lower median, then smaller dt
    return (-cell.success_rate, cell.median, cell.dt)


def best_cell(cells: list) -> Cell:
    return min(cells, key=_rank)


def summarize(cells: list, agents: list) -> list:
    """One row per (property, agent) at its best dt, with significance columns."""
    ours = {a["name"] for a in agents if a.get("ours", a["kind"] == "q")}
    rows = []
    by_prop: dict = {}
    for c in cells:
        by_prop.setdefault(c.property, {}).setdefault(c.agent, []).append(c)
    for prop, per_agent in by_prop.items():
        best = {name: best_cell(cs) for name, cs in per_agent.items()}
        our_best = [best[a["name"]] for a in agents if a["name"] in best and a["name"] in ours]
        base_best = [best[a["name"]] for a in agents if a["name"] in best and a["name"] not in ours]
        p_f = p_m = None
        marks: dict = {}
        if our_best and base_best:
            # success rates: compare the highest-rate cells of each group
            o = min(our_best, key=lambda c: (-c.success_rate, c.dt))
            b = min(base_best, key=lambda c: (-c.success_rate, c.dt))
            p_f = fisher_exact([[o.successes, len(o.trials) - o.successes],
                                [b.successes, len(b.trials) - b.successes]])
            if o.success_rate > b.success_rate and significance_marks(p_f):
                marks.setdefault(o.agent, []).append("success_rate" + significance_marks(p_f))
            # episode counts: compare the lowest-median cells of each group
            o = min(our_best, key=lambda c: (c.median, c.dt))
            b = min(base_best, key=lambda c: (c.median, c.dt))
            p_m = mann_whitney_u(o.capped(), b.capped())[1]
            if o.median < b.median and significance_marks(p_m):
                marks.setdefault(o.agent, []).append("median_episodes" + significance_marks(p_m))
        for a in agents:
            if a["name"] not in best:
                continue
            c = best[a["name"]]
            rows.append(SummaryRow(prop, a["name"], c.dt, c.success_rate, c.median,
                                   p_f, p_m, ";".join(marks.get(a["name"], []))))
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list
    rows: list
    wall_s: float = 0.0

    def summary_csv(self) -> str:
        return summary_csv(self.rows)

    def raw(self) -> dict:
        return {
            "name": self.config.name,
            "seed": self.config.seed,
            "episodes": self.config.episodes,
            "trials": self.config.trials,
            "t_end": self.config.t_end,
            "cells": [{"property": c.property, "agent": c.agent, "dt": c.dt,
                       "trials": [asdict(t) for t in c.trials]} for c in self.cells],
            "wall_s": self.wall_s,
        }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def summary_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in SUMMARY_COLUMNS])
    return buf.getvalue()


def _run_job(args):
    return run_trial(*args)


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> ExperimentResult:
    """Run every cell; trial order and completion order do not affect the output."""
    jobs = cfg.jobs if jobs is None else jobs
    start = time.perf_counter()
    plan = [(p, a, i, k) for p in cfg.properties for a in cfg.agents
            for i in range(len(cfg.dts)) for k in range(cfg.trials)]
    jobs_args = [(cfg, p, a, i, k) for p, a, i, k in plan]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_job, jobs_args))
    else:
        records = [_run_job(x) for x in jobs_args]
    cells = []
    for (p, a, i, k), rec in zip(plan, records):
        if k == 0:
            cells.append(Cell(p.name, a["name"], cfg.dts[i], [], cfg.episodes))
        cells[-1].trials.append(rec)
    rows = summarize(cells, cfg.agents)
    return ExperimentResult(cfg, cells, rows, time.perf_counter() - start)


def write_outputs(result: ExperimentResult, summary_path=None, raw_path=None) -> None:
    if summary_path is not None:
        Path(summary_path).write_text(result.summary_csv())
    if raw_path is not None:
        Path(raw_path).write_text(json.dumps(result.raw(), indent=1))
