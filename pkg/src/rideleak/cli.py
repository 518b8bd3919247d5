"""Command-line experiment runner.

    rideleak simulate     --grid 10x10 --eta 8 --l 2 --m 5 --drivers 30 --seed 42 --out runs/
    rideleak attack       runs/ --out reports/
    rideleak coupon       --l-range 1..4 --trials 100000 --seed 1
    rideleak lemma-check  --l-max 8

Exit codes: 0 ok, 1 property violation, 2 config error, 3 I/O error,
4 inconsistent input data.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import attack as atk
from .coupon_analysis import CSV_HEADER, monte_carlo_drivers_needed
from .errors import ConfigMismatch, CoordinateOverflow, EtaExceedsBudget, InconsistentObservation, RideLeakError
from .protocol_sim import MatchTranscript, random_vector, simulate_query
from .road_network import (
    EmbeddingConfig,
    RoadGraph,
    build_reference_sets,
    embed_all,
    grid_graph,
    load_edge_list,
    parse_grid_spec,
)

log = logging.getLogger("rideleak")

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_IO, EXIT_DATA = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class ExperimentConfig:
    graph: str  # "grid:WxH" or "file:PATH"
    eta: int
    l: int
    m: int
    drivers: int
    queries: int
    seed: int
    placement: str = "nodes"
    set_size: int | None = None


def load_graph(source: str) -> RoadGraph:
    kind, _, arg = source.partition(":")
    if kind == "grid":
        return grid_graph(*parse_grid_spec(arg))
    if kind == "file":
        try:
            return load_edge_list(arg)
        except OSError as e:
            raise CliError(EXIT_IO, f"cannot read graph file {arg}: {e}") from e
    raise CliError(EXIT_CONFIG, f"unknown graph source {source!r}")


def _graph_source(ns: argparse.Namespace) -> str:
    if ns.grid and ns.graph:
        raise CliError(EXIT_CONFIG, "give either --grid or --graph, not both")
    if ns.graph:
        return f"file:{ns.graph}"
    return f"grid:{ns.grid or '10x10'}"


def _config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(
        graph=_graph_source(ns),
        eta=ns.eta,
        l=ns.l,
        m=ns.m,
        drivers=ns.drivers,
        queries=ns.queries,
        seed=ns.seed,
        placement=ns.placement,
        set_size=ns.set_size,
    )
    if cfg.drivers < 1:
        raise CliError(EXIT_CONFIG, f"--drivers must be >= 1, got {cfg.drivers}")
    if cfg.queries < 1:
        raise CliError(EXIT_CONFIG, f"--queries must be >= 1, got {cfg.queries}")
    return cfg


def _write_json(path: Path, doc: Any) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write {path}: {e}") from e


def cmd_simulate(ns: argparse.Namespace) -> int:
    cfg = _config_from_args(ns)
    try:
        ecfg = EmbeddingConfig(cfg.eta, cfg.l, cfg.m, cfg.seed, cfg.set_size)
        g = load_graph(cfg.graph)
        refs_ss, queries_ss = np.random.SeedSequence(cfg.seed).spawn(2)
        refs = build_reference_sets(g, ecfg, np.random.default_rng(refs_ss))
    except (ValueError, CoordinateOverflow, EtaExceedsBudget) as e:
        raise CliError(EXIT_CONFIG, str(e)) from e
    table = embed_all(g, refs)
    meta = {
        "graph": cfg.graph,
        "seed": cfg.seed,
        "placement": cfg.placement,
        "set_size": len(refs.sets[0]),
    }
    out = Path(ns.out) if ns.out else None
    for q, child in enumerate(queries_ss.spawn(cfg.queries)):
        rng = np.random.default_rng(child)
        if cfg.placement == "nodes":
            rider = table[int(rng.integers(g.node_count))]
            drivers = {k: table[int(u)] for k, u in enumerate(rng.integers(g.node_count, size=cfg.drivers))}
        else:
            rider = random_vector(ecfg, rng)
            drivers = {k: random_vector(ecfg, rng) for k in range(cfg.drivers)}
        result, transcript = simulate_query(rider, drivers, ecfg, rng, query_id=q)
        transcript = MatchTranscript(
            transcript.eta, transcript.l, transcript.m, q, transcript.per_driver,
            transcript.winner, transcript.rider_hidden, meta,
        )
        doc = transcript.to_dict(reveal_truth=ns.reveal_truth)
        if out is None:
            print(json.dumps(doc, sort_keys=True))
        else:
            _write_json(out / f"transcript_{q:04d}.json", doc)
        log.info("query %d: winner %d at distance %d", q, result.winner, result.distances[result.winner])
    return EXIT_OK


def _transcript_paths(inputs: Sequence[str]) -> list[Path]:
    paths: list[Path] = []
    for raw in inputs:
        p = Path(raw)
        if p.is_dir():
            paths.extend(sorted(p.glob("transcript_*.json")))
        elif p.exists():
            paths.append(p)
        else:
            raise CliError(EXIT_IO, f"no such transcript: {p}")
    if not paths:
        raise CliError(EXIT_IO, "no transcripts found")
    return paths


def _load_transcript(path: Path) -> MatchTranscript:
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise CliError(EXIT_DATA, f"{path}: not JSON: {e}") from e
    try:
        return MatchTranscript.from_dict(doc)
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(EXIT_DATA, f"{path}: malformed transcript: {e}") from e


_map_cache: dict[tuple, list] = {}


def _map_table(t: MatchTranscript) -> list | None:
    meta = t.meta
    if meta.get("placement", "nodes") != "nodes" or "graph" not in meta:
        return None
    key = (meta["graph"], meta.get("seed"), meta.get("set_size"), t.eta, t.l, t.m)
    if key not in _map_cache:
        g = load_graph(meta["graph"])
        ecfg = EmbeddingConfig(t.eta, t.l, t.m, int(meta["seed"]), meta.get("set_size"))
        refs_ss, _ = np.random.SeedSequence(ecfg.seed).spawn(2)
        _map_cache[key] = embed_all(g, build_reference_sets(g, ecfg, np.random.default_rng(refs_ss)))
    return _map_cache[key]


def cmd_attack(ns: argparse.Namespace) -> int:
    transcripts = [(p, _load_transcript(p)) for p in _transcript_paths(ns.transcripts)]
    reports: list[tuple[str, dict]] = []
    try:
        if ns.same_rider:
            first = transcripts[0][1]
            state = atk.AttackState.for_transcript(first)
            for _, t in transcripts:
                atk.observe(state, t, same_rider=True)
            table = None if ns.leakage_only else _map_table(first)
            if table is not None and not state.complete:
                atk.refine_with_map(state, table)
            rec = atk.recover(state)
            reports.append(("report_combined.json", atk.report_dict(rec)))
        else:
            for path, t in transcripts:
                table = None if ns.leakage_only else _map_table(t)
                _, rec = atk.attack_transcript(t, table)
                name = path.name.replace("transcript", "report")
                reports.append((name, atk.report_dict(rec, atk.exact_match(rec, t))))
    except ConfigMismatch as e:
        raise CliError(EXIT_CONFIG, str(e)) from e
    except InconsistentObservation as e:
        raise CliError(EXIT_DATA, str(e)) from e
    for name, doc in reports:
        if ns.out:
            _write_json(Path(ns.out) / name, doc)
        else:
            print(json.dumps(doc, sort_keys=True))
        log.info("%s: complete=%s", name, doc["complete"])
    return EXIT_OK


def parse_l_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError as e:
        raise CliError(EXIT_CONFIG, f"bad --l-range {text!r}") from e
    if not 1 <= a <= b <= 16:
        raise CliError(EXIT_CONFIG, f"--l-range must satisfy 1 <= A <= B <= 16, got {text!r}")
    return a, b


def cmd_coupon(ns: argparse.Namespace) -> int:
    a, b = parse_l_range(ns.l_range)
    if ns.trials < 1:
        raise CliError(EXIT_CONFIG, f"--trials must be >= 1, got {ns.trials}")
    rngs = np.random.default_rng(ns.seed).spawn(b - a + 1)
    rows = [monte_carlo_drivers_needed(l, ns.trials, rng).csv_row() for l, rng in zip(range(a, b + 1), rngs)]
    try:
        fh = open(ns.out, "w", newline="") if ns.out else sys.stdout
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot write {ns.out}: {e}") from e
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_lemma_check(ns: argparse.Namespace) -> int:
    if not 1 <= ns.l_max <= 8:
        raise CliError(EXIT_CONFIG, f"--l-max must be in [1, 8], got {ns.l_max}")
    rng = np.random.default_rng(ns.seed)
    total = failures = 0
    for l in range(1, ns.l_max + 1):
        n = 1 << l
        bad = 0
        for x in range(n):
            diffs = [int(z) - x for z in rng.permutation(n)]
            try:
                ok = atk.lemma1_recover(diffs, l) == x
            except RideLeakError:
                ok = False
            bad += not ok
        total += n
        failures += bad
        print(f"l={l}: {n} cases, {bad} failures")
    print(f"total: {total} cases, {failures} failures -> {'PASS' if failures == 0 else 'FAIL'}")
    return EXIT_OK if failures == 0 else EXIT_PROPERTY


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError(EXIT_IO, f"cannot read config {path}: {e}") from e
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(EXIT_CONFIG, f"{path}:{lineno}: expected key=value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError(EXIT_CONFIG, message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; command-line flags take precedence")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="rideleak", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[common], help="simulate ride requests, write SP transcripts")
    src = sim.add_mutually_exclusive_group()
    src.add_argument("--grid", help="WxH unit grid (default 10x10)")
    src.add_argument("--graph", help="edge-list file ('nodes N' header, then 'u v w' lines)")
    sim.add_argument("--eta", type=int, default=8)
    sim.add_argument("--l", type=int, default=2)
    sim.add_argument("--m", type=int, default=5)
    sim.add_argument("--set-size", type=int, default=None, help="reference set size (default ceil(log2 n))")
    sim.add_argument("--drivers", type=int, default=30)
    sim.add_argument("--queries", type=int, default=1)
    sim.add_argument("--placement", choices=("nodes", "uniform-blocks"), default="nodes")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", help="output directory (default: JSON lines on stdout)")
    sim.add_argument("--reveal-truth", action="store_true", help="embed ground truth for oracle checks")
    sim.set_defaults(func=cmd_simulate)

    at = sub.add_parser("attack", parents=[common], help="recover locations from transcripts")
    at.add_argument("transcripts", nargs="+", help="transcript files or directories")
    at.add_argument("--out", help="output directory (default: JSON lines on stdout)")
    at.add_argument("--leakage-only", action="store_true", help="do not use the public map")
    at.add_argument("--same-rider", action="store_true", help="accumulate all transcripts into one state")
    at.set_defaults(func=cmd_attack)

    cp = sub.add_parser("coupon", parents=[common], help="closed-form vs Monte Carlo driver counts")
    cp.add_argument("--l-range", default="1..4")
    cp.add_argument("--trials", type=int, default=100_000)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--out", help="CSV path (default stdout)")
    cp.set_defaults(func=cmd_coupon)

    lc = sub.add_parser("lemma-check", parents=[common], help="exhaustive single-block recovery check")
    lc.add_argument("--l-max", type=int, default=8)
    lc.add_argument("--seed", type=int, default=0)
    lc.set_defaults(func=cmd_lemma_check)
    return p


_BOOL_KEYS = {"reveal_truth", "leakage_only", "same_rider", "verbose"}


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        file_values = _read_config_file(ns.config)
        defaults: dict[str, Any] = {}
        for key, value in file_values.items():
            if key in _BOOL_KEYS:
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = value
        # re-parse so explicit flags override file values; argparse applies `type` to string defaults
        subparser = parser._subparsers._group_actions[0].choices[ns.command]  # type: ignore[union-attr]
        subparser.set_defaults(**defaults)
        ns = parser.parse_args(argv)
    return ns


def main(argv: Sequence[str] | None = None) -> int:
    try:
        ns = parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
        return ns.func(ns)
    except CliError as e:
        print(f"rideleak: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
