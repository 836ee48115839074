"""Scenario-driven command-line runner.

Verbs: ``run``, ``validate`` and ``list-presets``.  A scenario is a TOML
document; its format is described in ``docs/formats.md``.  Exit codes: 0
on success, 2 on validation failure, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import functools
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import sequences as seq
from .bv1d import BV1D
from .errors import NumericalError, RelaxkitError
from .funclib import check_growth, get_preset, list_presets
from .measure1d import Measure1D
from .meshfield import NdMeasure, NodalField
from .relax import (Integrands, evaluate_relaxed_1d, evaluate_relaxed_nd, g_split,
                    solve_cell_fw0)
from .textio import read_toml, write_csv, write_toml

logger = logging.getLogger("relaxkit")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
TASKS = ("evaluate", "cell", "g_table", "recover", "probe", "concentration")
GENERATORS = ("jump", "spikes", "mollify", "constant")


class ScenarioError(Exception):
    """Invalid scenario document; the message names the offending field."""


@dataclass
class Scenario:
    name: str
    dimension: str
    integrands: dict
    tasks: list
    seed: int = 0
    u_doc: Optional[str] = None
    v_doc: Optional[str] = None
    sections: dict = field(default_factory=dict)
    base_dir: str = "."

    @property
    def n(self) -> int:
        return 1 if self.dimension == "1d" else 2

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})


def bundled_scenarios() -> list[str]:
    root = resources.files("relaxkit") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario(arg: str) -> str:
    """A path, or the name of a bundled scenario."""
    if os.path.exists(arg):
        return arg
    path = resources.files("relaxkit") / "scenarios" / f"{arg}.toml"
    if path.is_file():
        return str(path)
    raise ScenarioError(f"scenario: no file or bundled scenario named {arg!r}")


def load_scenario(path: str) -> Scenario:
    try:
        doc = read_toml(path)
    except OSError as exc:
        raise ScenarioError(f"scenario: cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ScenarioError(f"scenario: not valid TOML: {exc}") from None
    for key in ("name", "dimension", "integrands", "tasks"):
        if key not in doc:
            raise ScenarioError(f"{key}: required field missing")
    if doc["dimension"] not in ("1d", "2d"):
        raise ScenarioError("dimension: must be '1d' or '2d'")
    tasks = doc["tasks"]
    if not isinstance(tasks, list) or not tasks:
        raise ScenarioError("tasks: must be a non-empty list")
    for t in tasks:
        if t not in TASKS:
            raise ScenarioError(f"tasks: unknown task {t!r} (known: {', '.join(TASKS)})")
    ints = doc["integrands"]
    for role in ("f1", "f2", "W"):
        if role not in ints:
            raise ScenarioError(f"integrands.{role}: required field missing")
    known = set(list_presets())
    for role in ("f1", "f2", "W"):
        if ints[role] not in known:
            raise ScenarioError(f"integrands.{role}: unknown preset {ints[role]!r}")
    sections = {k: v for k, v in doc.items() if isinstance(v, dict) and k != "integrands"}
    sc = Scenario(name=str(doc["name"]), dimension=doc["dimension"], integrands=dict(ints),
                  tasks=list(tasks), seed=int(doc.get("seed", 0)), u_doc=doc.get("u_doc"),
                  v_doc=doc.get("v_doc"), sections=sections,
                  base_dir=os.path.dirname(os.path.abspath(path)))
    needs_data = [t for t in tasks if t not in ("g_table", "cell")]
    for key in ("u_doc", "v_doc"):
        if needs_data and getattr(sc, key) is None:
            raise ScenarioError(f"{key}: required by tasks {needs_data}")
        rel = getattr(sc, key)
        if rel is not None and not os.path.isfile(os.path.join(sc.base_dir, rel)):
            raise ScenarioError(f"{key}: file not found: {rel}")
    return sc


@functools.lru_cache(maxsize=16)
def _integrands(f1: str, f2: str, W: str, m: int, d: int, n: int) -> Integrands:
    return Integrands.build(get_preset(f1, m), get_preset(f2, d), get_preset(W, m * n))


def build_integrands(sc: Scenario) -> Integrands:
    ints = sc.integrands
    try:
        return _integrands(ints["f1"], ints["f2"], ints["W"], int(ints.get("m", 1)),
                           int(ints.get("d", 1)), sc.n)
    except KeyError as exc:
        raise ScenarioError(f"integrands: {exc.args[0]}") from None


def load_data(sc: Scenario):
    """Read the u and v documents; kinds must match the dimension."""
    out = []
    for key, kinds in (("u_doc", ("bv1d", "nodal_field")), ("v_doc", ("measure1d", "nd_measure"))):
        doc = read_toml(os.path.join(sc.base_dir, getattr(sc, key)))
        want = kinds[0] if sc.n == 1 else kinds[1]
        if doc.get("kind") != want:
            raise ScenarioError(f"{key}: expected a {want} document for dimension {sc.dimension}")
        loader = {"bv1d": BV1D, "nodal_field": NodalField, "measure1d": Measure1D,
                  "nd_measure": NdMeasure}[want]
        out.append(loader.from_document(doc))
    return tuple(out)


def validate_scenario(sc: Scenario) -> list[str]:
    """Schema and growth-hypothesis problems; an empty list means OK."""
    problems = []
    try:
        ints = build_integrands(sc)
    except (ScenarioError, RelaxkitError, ValueError) as exc:
        return [str(exc)]
    for role, model in (("f1", ints.f1), ("f2", ints.f2), ("W", ints.W)):
        rep = check_growth(model, role)
        if not rep.passed:
            problems.append(f"integrands.{role} = {model.name!r} violates {rep.hypothesis}: "
                            f"{rep.message}")
    if sc.u_doc and sc.v_doc and not problems:
        try:
            u, v = load_data(sc)
        except (ScenarioError, RelaxkitError, ValueError, KeyError) as exc:
            problems.append(str(exc))
        else:
            if sc.n == 1 and u.interval != v.interval:
                problems.append("v_doc: interval differs from u_doc")
            if sc.n == 2 and u.mesh != v.mesh:
                problems.append("v_doc: mesh differs from u_doc")
    return problems


# ---------------------------------------------------------------------------
# tasks


@dataclass
class TaskResult:
    name: str
    files: list
    status: str = "OK"
    numerical_failure: bool = False
    summary: dict = field(default_factory=dict)


class Runner:
    def __init__(self, sc: Scenario, out: str, seed: int, svg: bool, jobs: int):
        self.sc, self.out, self.seed, self.svg, self.jobs = sc, out, seed, svg, jobs
        self.ints = build_integrands(sc)
        self.data = load_data(sc) if sc.u_doc and sc.v_doc else None
        self._relaxed = None
        self._pairs = {}

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def relaxed(self):
        if self._relaxed is None:
            u, v = self.data
            I = self.ints
            if self.sc.n == 1:
                cells = self.sc.section("mesh").get("cells")
                self._relaxed = evaluate_relaxed_1d(I.f1, I.f2env, I.Wenv, I.f1min, u, v,
                                                    cells=cells)
            else:
                self._relaxed = evaluate_relaxed_nd(I.f1, I.f2env, I.Wenv, I.f1min, u, v)
        return self._relaxed

    def _cell(self):
        u, v = self.data
        x0 = float(self.sc.section("recover").get("x0", v.atom_x[0] if v.atom_x.size else 0.5))
        b = v.atom_w[list(v.atom_x).index(x0)] if x0 in v.atom_x else np.zeros(v.dim)
        N = int(self.sc.section("cell").get("N", 256))
        I = self.ints
        cell = solve_cell_fw0(I.f1, I.f2env, I.Wenv, u.trace(x0, "right"), u.trace(x0, "left"),
                              b, N=N)
        return x0, cell

    def generator(self, kind: str):
        """``(generator, schedule)`` for a named generator; pairs are cached per task run."""
        gen, sched = self._generator(kind)
        cache = self._pairs.setdefault(kind, {})

        def cached(k, p):
            if k not in cache:
                cache[k] = gen(k, p)
            return cache[k]

        return cached, sched

    def _generator(self, kind: str):
        u, v = self.data
        I, cfg = self.ints, self.sc.section("recover")
        if kind == "jump":
            if self.sc.n != 1:
                raise ScenarioError("probe.generator: 'jump' needs dimension 1d")
            x0, cell = self._cell()
            eps = cfg.get("eps", [p["eps"] for p in seq.JUMP_SCHEDULE])
            return (lambda k, p: seq.build_recovery_1d_jump(I, u, v, x0, p["eps"], cell, k=k),
                    [{"eps": float(e)} for e in eps])
        if kind == "spikes":
            if self.sc.n != 2:
                raise ScenarioError("probe.generator: 'spikes' needs dimension 2d")
            sched = [dict(p) for p in cfg.get("schedule", seq.SPIKE_SCHEDULE)]
            return (lambda k, p: seq.build_recovery_nd(I, u, v, p["eta"], p["delta"], p["eps"],
                                                       k=k), sched)
        if kind == "mollify":
            widths = cfg.get("widths", list(seq.MOLLIFIER_BATTERY))
            sched = [{"width": float(w)} for w in widths]
            if self.sc.n == 1:
                return (lambda k, p: seq.mollify_1d(I, u, v, p["width"], k=k), sched)
            j = int(cfg.get("j", 5))
            return (lambda k, p: seq.mollify_nd(I, u, v, p["width"], j, k=k), sched)
        if kind == "constant":
            if self.sc.n != 1:
                raise ScenarioError("probe.generator: 'constant' needs dimension 1d")
            return (lambda k, p: seq.constant_pair(I, u, v, k=k), [{}, {}])
        raise ScenarioError(f"probe.generator: unknown generator {kind!r}")

    # -- individual tasks ------------------------------------------------

    def task_evaluate(self) -> TaskResult:
        rep = self.relaxed()
        kv = {"scenario": self.sc.name, **rep.to_kv()}
        write_toml(self.path("report.toml"), kv)
        write_csv(self.path("report.csv"), list(rep.CSV_COLUMNS), [rep.csv_row()])
        return TaskResult("evaluate", ["report.toml", "report.csv"], summary={"total": rep.total})

    def task_cell(self) -> TaskResult:
        cfg = self.sc.section("cell")
        I = self.ints
        if {"a_plus", "a_minus", "b"} <= set(cfg):
            cell = solve_cell_fw0(I.f1, I.f2env, I.Wenv, cfg["a_plus"], cfg["a_minus"], cfg["b"],
                                  N=int(cfg.get("N", 256)))
        elif self.data is not None and self.sc.n == 1:
            _, cell = self._cell()
        else:
            raise ScenarioError("cell: give a_plus, a_minus and b")
        doc = {"value": cell.value, "reduced_value": cell.reduced_value,
               "z_star": np.atleast_1d(cell.z_star), "rel_gap": cell.rel_gap,
               "agree": cell.agree, "sweeps": cell.sweeps, "nodes": cell.nodes}
        write_toml(self.path("cell.toml"), doc)
        vp = np.asarray(cell.v_profile).reshape(cell.nodes, -1)[:, 0]
        rows = [{"x": float(x), "u": float(uu), "v": float(vp[i]) if i < cell.nodes else ""}
                for i, (x, uu) in enumerate(zip(cell.x, cell.u_profile))]
        write_csv(self.path("cell_profile.csv"), ["x", "u", "v"], rows)
        status = "OK" if cell.agree else "DISAGREE"
        return TaskResult("cell", ["cell.toml", "cell_profile.csv"], status,
                          numerical_failure=not cell.agree, summary={"value": cell.value})

    def task_g_table(self) -> TaskResult:
        cfg = self.sc.section("g_table")
        a = np.asarray(cfg.get("a", [-2.0, -1.0, 0.0, 0.5, 1.0, 3.0]), dtype=float)
        b = np.asarray(cfg.get("b", list(range(-5, 6))), dtype=float)
        A, B = np.meshgrid(a, b, indexing="ij")
        I = self.ints
        vals, b1 = g_split(I.f1, I.f2env, I.f1min, A.reshape(-1), B.reshape(-1))
        rows = [{"a": float(x), "b": float(y), "g": float(g), "b1": float(np.ravel(s)[0])}
                for x, y, g, s in zip(A.reshape(-1), B.reshape(-1), np.ravel(vals),
                                      np.asarray(b1).reshape(A.size, -1))]
        write_csv(self.path("g_table.csv"), ["a", "b", "g", "b1"], rows)
        return TaskResult("g_table", ["g_table.csv"], summary={"rows": len(rows)})

    def _probe(self, kind: str, tag: str, expect: Optional[str], tol) -> TaskResult:
        u, v = self.data
        gen, sched = self.generator(kind)
        rep = seq.gamma_probe(u, v, gen, sched, self.relaxed().total, tol=tol, seed=self.seed,
                              jobs=self.jobs)
        files = [f"{tag}_{kind}.csv"]
        rep.write_csv(self.path(files[0]))
        if self.svg:
            files.append(f"{tag}_{kind}.svg")
            rep.write_svg(self.path(files[1]), title=f"{self.sc.name}: {kind}")
        bad = expect is not None and rep.status != expect
        return TaskResult(f"{tag}:{kind}", files, rep.status, numerical_failure=bad,
                          summary={"liminf": rep.liminf, "gap": rep.gap, "status": rep.status})

    def task_recover(self) -> TaskResult:
        kind = self.sc.section("recover").get("generator", "jump" if self.sc.n == 1 else "spikes")
        return self._probe(kind, "recover", None, None)

    def task_probe(self) -> list[TaskResult]:
        cfg = self.sc.section("probe")
        kinds = cfg.get("generators", [cfg.get("generator", "jump" if self.sc.n == 1 else "spikes")])
        expect = cfg.get("expect", {})
        return [self._probe(k, "probe", expect.get(k), cfg.get("tol")) for k in kinds]

    def task_concentration(self) -> TaskResult:
        cfg = self.sc.section("concentration")
        kind = cfg.get("generator", "spikes" if self.sc.n == 2 else "jump")
        gen, sched = self.generator(kind)
        pairs = [gen(k, p) for k, p in enumerate(sched)]
        rep = seq.concentration_detector(pairs)
        cols = list(rep.rows[0])
        write_csv(self.path(f"concentration_{kind}.csv"), cols, rep.rows)
        return TaskResult("concentration", [f"concentration_{kind}.csv"],
                          summary={"purely_concentrating": rep.purely_concentrating})

    def run_task(self, name: str) -> list[TaskResult]:
        res = getattr(self, f"task_{name}")()
        return res if isinstance(res, list) else [res]


def run(path: str, out: Optional[str] = None, seed: Optional[int] = None, svg: bool = False,
        jobs: int = 1) -> int:
    try:
        sc = load_scenario(resolve_scenario(path))
        problems = validate_scenario(sc)
        if problems:
            for p in problems:
                logger.error("%s", p)
            return EXIT_INVALID
        out = out or os.path.join("relaxkit-out", sc.name)
        runner = Runner(sc, out, sc.seed if seed is None else seed, svg, jobs)
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                batches = list(pool.map(runner.run_task, sc.tasks))
        else:
            batches = [runner.run_task(t) for t in sc.tasks]
    except ScenarioError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except RelaxkitError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    results = [r for batch in batches for r in batch]
    summary = {"scenario": sc.name, "tasks": {r.name: {"status": r.status, "files": r.files,
                                                     **r.summary} for r in results}}
    write_toml(os.path.join(out, "summary.toml"), summary)
    for r in results:
        print(f"{r.name}: {r.status} {' '.join(r.files)}")
    return EXIT_NUMERICAL if any(r.numerical_failure for r in results) else EXIT_OK


def validate(path: str) -> int:
    try:
        sc = load_scenario(resolve_scenario(path))
    except ScenarioError as exc:
        print(f"INVALID: {exc}")
        return EXIT_INVALID
    problems = validate_scenario(sc)
    for p in problems:
        print(f"INVALID: {p}")
    if not problems:
        print(f"OK: {sc.name}")
    return EXIT_INVALID if problems else EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relaxkit", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run a scenario file or bundled scenario")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory (default relaxkit-out/<name>)")
    r.add_argument("--jobs", type=int, default=1, help="parallel tasks and probe pairs")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--svg", action="store_true", help="also write probe energy traces as SVG")
    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario")
    sub.add_parser("list-presets", help="print preset and bundled scenario names")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.verb == "run":
        if args.jobs < 1:
            logger.error("--jobs must be positive")
            return EXIT_INVALID
        return run(args.scenario, args.out, args.seed, args.svg, args.jobs)
    if args.verb == "validate":
        return validate(args.scenario)
    print("presets:")
    for name in list_presets():
        print(f"  {name}")
    print("scenarios:")
    for name in bundled_scenarios():
        print(f"  {name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
