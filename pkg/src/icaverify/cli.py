"""Command-line entry points.

    icaverify verify  --network net.json --config query.json [--pool-in p.json] [--pool-out p.json]
    icaverify radius  --network net.json --config radius.json ...
    icaverify split   --network net.json --config split.json ...
    icaverify explain --network net.json --config explain.json ...
    icaverify oracle  --network net.json --config query.json
    icaverify generate --widths 2,8,2 --seed 0 [--out net.json]

Exit status: 0 when the command completed (whatever the verdict), 1 on usage
or IO errors, 2 on internal errors. Stats JSON goes to --stats-out, or to
stdout when that flag is omitted.

Pool files hold the conflict pool plus an ``origins`` map from pool id to the
query that produced it. A later run inherits a stored id only when its own
query provably refines that origin, so reuse across processes stays sound.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys

import numpy as np

from .bab import SolveConfig, solve
from .ica import ConflictPool, ICAState, PoolError
from .model import NetworkError, load_network, random_network
from .oracle import OracleError, brute_force_verify
from .query import Box, QueryError, Refinement, check_refinement, query_from_dict
from .tasks import (
    MsfsTask,
    RadiusTask,
    SplitTask,
    TaskError,
    input_split_verify,
    msfs_extract,
    robustness_radius,
)

log = logging.getLogger("icaverify")

USER_ERRORS = (OSError, NetworkError, QueryError, PoolError, TaskError, OracleError, ValueError, KeyError, TypeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icaverify", description="ReLU network verification with conflict reuse")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_ in (
        ("verify", "decide one query by branch and bound"),
        ("radius", "bracket the local robustness radius"),
        ("split", "verify a query with input splitting"),
        ("explain", "extract a minimal sufficient feature set"),
        ("oracle", "decide one query by phase-pattern enumeration"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--network", required=True)
        s.add_argument("--config", required=True)
        s.add_argument("--pool-in")
        s.add_argument("--pool-out")
        s.add_argument("--stats-out")
        s.add_argument("--timeout", type=float, help="override the per-query timeout (seconds)")
        s.add_argument("--trusted-refinement", action="store_true")
        s.add_argument("--seed", type=int, help="unused by solving; accepted for uniform manifests")

    g = sub.add_parser("generate", help="write a random test network")
    g.add_argument("--widths", required=True, help="comma separated layer widths, input first")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--out")
    return p


def _read_json(path):
    with open(path) as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: malformed JSON ({e})") from e


def _emit(doc: dict, path):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def network_fingerprint(net) -> str:
    text = json.dumps(net.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


class PoolFile:
    """Conflict pool plus the origin query of every pool id."""

    def __init__(self, net, path=None):
        self.pool = ConflictPool()
        self.origins: dict[int, dict] = {}
        self.net = net
        if path:
            with open(path) as f:
                text = f.read()
            if text.strip():
                try:
                    doc = json.loads(text)
                except json.JSONDecodeError as e:
                    raise PoolError(f"malformed pool document: {e}") from e
                self.pool = ConflictPool.from_dict(doc)
                self.origins = {int(k): v for k, v in doc.get("origins", {}).items()}
                stamp = doc.get("network_sha256")
                if stamp is not None and stamp != network_fingerprint(net):
                    raise PoolError(f"{path}: pool was written for a different network")

    def external(self, network) -> list:
        """(pool id, origin query) pairs usable on ``network``."""
        out = []
        for qid, doc in sorted(self.origins.items()):
            q = query_from_dict(doc, network, qid)
            out.append((qid, q))
        return out

    def inherit_for(self, query) -> frozenset:
        return frozenset(
            qid for qid, origin in self.external(query.network)
            if check_refinement(query, origin) is Refinement.REFINES
        )

    def record(self, queries):
        for q in queries:
            self.origins[q.id] = q.to_dict()

    def save(self, path, ica: ICAState):
        doc = ica.pool.to_dict()
        doc["network_sha256"] = network_fingerprint(self.net)
        doc["origins"] = {str(k): v for k, v in sorted(self.origins.items()) if k in ica.pool}
        with open(path, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")


def _query_doc(cfg: dict) -> dict:
    return cfg.get("query", cfg)


def cmd_verify(args, net, cfg, pf: PoolFile, ica: ICAState) -> dict:
    qid = max(ica.pool.ids(), default=-1) + 1
    q = query_from_dict(_query_doc(cfg), net, qid)
    inherit = pf.inherit_for(q)
    timeout = args.timeout or float(cfg.get("timeout", 60.0))
    res = solve(q, qid, inherit, ica, SolveConfig(timeout=timeout, node_cap=cfg.get("node_cap")))
    pf.record([q])
    doc = res.to_dict()
    doc["query_id"] = qid
    doc["inherited_ids"] = sorted(inherit)
    return doc


def cmd_oracle(args, net, cfg, pf, ica) -> dict:
    q = query_from_dict(_query_doc(cfg), net)
    rep = brute_force_verify(q, exhaustive=bool(cfg.get("exhaustive", False)))
    doc = {"verdict": rep.verdict.value, "patterns": rep.patterns, "pruned": rep.pruned}
    if rep.witness is not None:
        doc["witness"] = [float(v) for v in rep.witness]
    return doc


def cmd_split(args, net, cfg, pf: PoolFile, ica: ICAState) -> dict:
    base = max(ica.pool.ids(), default=-1) + 1
    q = query_from_dict(_query_doc(cfg), net, base)
    task = SplitTask(
        q,
        t0=args.timeout or float(cfg.get("t0", 5.0)),
        alpha=float(cfg.get("alpha", 1.5)),
        global_timeout=float(cfg.get("global_timeout", 600.0)),
    )
    inherit = pf.inherit_for(q)
    res, nodes = input_split_verify(task, ica, inherit=inherit)
    pf.record(q.with_input(n.box, id=n.id) for n in nodes)
    doc = res.to_dict()
    doc["subqueries"] = len(nodes)
    doc["max_depth"] = max((n.depth for n in nodes), default=0)
    return doc


def cmd_radius(args, net, cfg, pf: PoolFile, ica: ICAState) -> dict:
    task = RadiusTask(
        net,
        np.asarray(cfg["x0"], dtype=np.float64),
        target=cfg.get("target"),
        eps_min=float(cfg.get("eps_min", 0.0)),
        eps_max=float(cfg.get("eps_max", 1.0)),
        delta=float(cfg.get("delta", 0.001)),
        budget=float(cfg.get("budget", 60.0)),
        query_timeout=args.timeout or float(cfg.get("query_timeout", 10.0)),
    )
    res = robustness_radius(
        task, ica, trusted=args.trusted_refinement,
        check_bracket=bool(cfg.get("check_bracket", True)), external=pf.external(net),
    )
    pf.record(r.query for r in res.issued)
    return res.to_dict()


def cmd_explain(args, net, cfg, pf: PoolFile, ica: ICAState) -> dict:
    n = net.input_dim
    domain = Box(cfg.get("domain_lower", [0.0] * n), cfg.get("domain_upper", [1.0] * n))
    task = MsfsTask(
        net,
        np.asarray(cfg["x0"], dtype=np.float64),
        domain,
        query_timeout=args.timeout or float(cfg.get("query_timeout", 10.0)),
        budget=float(cfg.get("budget", 600.0)),
        ordering=cfg.get("ordering", "sensitivity"),
    )
    res = msfs_extract(task, ica, trusted=args.trusted_refinement, external=pf.external(net))
    pf.record(r.query for r in res.issued)
    return res.to_dict()


COMMANDS = {
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "split": cmd_split,
    "radius": cmd_radius,
    "explain": cmd_explain,
}


def cmd_generate(args):
    widths = [int(w) for w in args.widths.split(",")]
    if len(widths) < 2 or min(widths) < 1:
        raise UsageError("--widths needs at least two positive integers")
    net = random_network(np.random.default_rng(args.seed), widths, args.scale)
    _emit(net.to_dict(), args.out)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"icaverify: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            cmd_generate(args)
            return 0
        with open(args.network) as f:
            net = load_network(f.read())
        cfg = _read_json(args.config)
        if not isinstance(cfg, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        pf = PoolFile(net, args.pool_in)
        ica = ICAState(pool=pf.pool)
        doc = COMMANDS[args.command](args, net, cfg, pf, ica)
        doc["command"] = args.command
        if args.pool_out:
            pf.save(args.pool_out, ica)
        _emit(doc, args.stats_out)
        return 0
    except (UsageError, *USER_ERRORS) as e:
        print(f"icaverify: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"icaverify: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
