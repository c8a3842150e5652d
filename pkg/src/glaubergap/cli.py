"""Command-line driver: config-file experiments with flat-file outputs.

Configs are INI files (configparser).  Numeric results go to a fixed-schema
CSV (columns n, radius, beta, bc, exact_gap, upper, lower, tau1); audits go
to JSONL records {graph_meta, op, params, worst_case, violation_count}.
Runs are deterministic: every stochastic step takes an explicit seed from
the config (or --seed-override), outputs carry no wall-clock, and sweep
loops iterate in the order written in the config.

Exit codes: 0 on full success, 1 for configuration problems, 2 when any
task failed (sweeps record failing cells on stderr and keep going).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys

import numpy as np

from .errors import ConfigError, GlauberGapError
from .graphs import LayeredGraph, BallSystem, ball, serialize, parse
from .generators import (gen_tree, gen_hyperbolic, gen_expander_tree,
                         ExpanderTreeParams, hyperbolic_face_audit)
from .geometry import (growth_parameter, hyperbolic_vertex_audit,
                       cheeger_exact, enumerate_connected_sets,
                       peierls_audit, _popcount)
from .gibbs import (BoundaryCondition, GibbsParams, exact_gibbs,
                    magnetization_distribution, correlation_decay_profile,
                    claim32_audit)
from .glauber import HeatBathChain
from . import spectral

CSV_COLUMNS = ("n", "radius", "beta", "bc", "exact_gap", "upper", "lower",
               "tau1")

_REQUIRED = object()


# ---------------------------------------------------------------------------
# config access
# ---------------------------------------------------------------------------

class Config:
    """Typed access to an INI config with located errors."""

    def __init__(self, parser: configparser.ConfigParser, path: str):
        self._p = parser
        self.path = path

    def get(self, section: str, option: str, cast=str, default=_REQUIRED):
        if not self._p.has_option(section, option):
            if default is not _REQUIRED:
                return default
            raise ConfigError("missing required option",
                              section=section, field=option)
        raw = self._p.get(section, option)
        try:
            return cast(raw)
        except (ValueError, TypeError):
            raise ConfigError(
                f"cannot parse value {raw!r} as {cast.__name__}",
                section=section, field=option) from None

    def get_list(self, section: str, option: str, cast=str,
                 default=_REQUIRED):
        raw = self.get(section, option, str, default)
        if raw is default and default is not _REQUIRED:
            return default
        try:
            return [cast(tok) for tok in str(raw).split()]
        except (ValueError, TypeError):
            raise ConfigError(
                f"cannot parse list {raw!r} of {cast.__name__}",
                section=section, field=option) from None

    def has(self, section: str, option: str) -> bool:
        return self._p.has_option(section, option)


def _load_config(path: str) -> Config:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return Config(parser, path)


def _bool(raw: str) -> bool:
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


# ---------------------------------------------------------------------------
# object builders
# ---------------------------------------------------------------------------

def _graph_from_config(cfg: Config, seed_override: int | None) -> LayeredGraph:
    family = cfg.get("graph", "family")
    if family == "tree":
        return gen_tree(cfg.get("graph", "delta", int),
                        cfg.get("graph", "depth", int))
    if family == "hyperbolic":
        return gen_hyperbolic(cfg.get("graph", "v", int),
                              cfg.get("graph", "s", int),
                              cfg.get("graph", "depth", int))
    if family == "expander":
        seed = seed_override if seed_override is not None \
            else cfg.get("graph", "seed", int)
        degrees = cfg.get_list("graph", "degrees", int, default=None)
        params = ExpanderTreeParams(
            delta=cfg.get("graph", "delta", int),
            d=cfg.get("graph", "d", int),
            depth=cfg.get("graph", "depth", int),
            seed=seed,
            layer_degrees=tuple(degrees) if degrees else None)
        return gen_expander_tree(params)
    if family == "file":
        path = cfg.get("graph", "path")
        if not os.path.exists(path):
            raise ConfigError(f"graph file not found: {path}",
                              section="graph", field="path")
        with open(path) as fh:
            return parse(fh.read())
    raise ConfigError(f"unknown family {family!r}",
                      section="graph", field="family")


def _ball_from_config(cfg: Config, seed_override: int | None,
                      radius: int | None = None) -> BallSystem:
    g = _graph_from_config(cfg, seed_override)
    r = radius if radius is not None else cfg.get("graph", "radius", int)
    return ball(g, r)


def _params_from_config(cfg: Config, beta: float | None = None) -> GibbsParams:
    b = beta if beta is not None else cfg.get("model", "beta", float)
    return GibbsParams(beta=b, h=cfg.get("model", "h", float, 0.0))


def _bc_from_config(cfg: Config, name: str | None = None) -> BoundaryCondition:
    kind = name if name is not None else cfg.get("model", "bc")
    if kind == "free":
        return BoundaryCondition.free()
    if kind == "plus":
        return BoundaryCondition.plus()
    if kind == "minus":
        return BoundaryCondition.minus()
    raise ConfigError(f"unknown boundary condition {kind!r}",
                      section="model", field="bc")


def _level_sites(cfg: Config, b: BallSystem, section: str = "audit"):
    i = cfg.get(section, "level", int)
    sites = cfg.get_list(section, "sites", int, default=None)
    if sites is None:
        sites = [int(v) for v in b.interior.level_set(i)]
    return i, tuple(sites)


def _graph_meta(obj) -> dict:
    if isinstance(obj, BallSystem):
        return {"family": obj.interior.family, "ball_radius": obj.m,
                "interior": obj.n, "ghosts": obj.ghost_count}
    return {"family": obj.family, "vertices": obj.vertex_count,
            "radius": obj.radius}


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([row.get(c, "") for c in CSV_COLUMNS])
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return x


def _audit_record(graph_meta: dict, op: str, params: dict, worst_case,
                  violation_count: int, extra: dict | None = None) -> str:
    rec = {"graph_meta": graph_meta, "op": op, "params": params,
           "worst_case": worst_case, "violation_count": violation_count}
    if extra:
        rec.update(extra)
    return json.dumps(rec, sort_keys=True)


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_generate_graph(args, cfg: Config) -> str:
    g = _graph_from_config(cfg, args.seed_override)
    return serialize(g)


def _cmd_verify_geometry(args, cfg: Config) -> str:
    g = _graph_from_config(cfg, args.seed_override)
    g.validate()
    out = {"family": g.family, "vertices": g.vertex_count,
           "edges": g.edge_count, "radius": g.radius,
           "growth": growth_parameter(g), "valid": True}
    family = cfg.get("graph", "family")
    if family == "hyperbolic":
        v = cfg.get("graph", "v", int)
        s = cfg.get("graph", "s", int)
        out["vertex_audit"] = hyperbolic_vertex_audit(g, v, s)
        out["face_audit"] = hyperbolic_face_audit(
            v, s, cfg.get("graph", "depth", int))
    if cfg.get("geometry", "cheeger", _bool, False):
        out["cheeger"] = float(cheeger_exact(g))
    return _json_text(out)


def _cmd_peierls_audit(args, cfg: Config) -> str:
    b = _ball_from_config(cfg, args.seed_override)
    i, sites = _level_sites(cfg, b)
    cap = cfg.get("audit", "size_cap", int)
    res = peierls_audit(b, i, sites, cap)
    params = {"level": i, "sites": list(sites), "size_cap": cap,
              "growth": res["growth"]}
    worst = {"slack": res["worst_slack"],
             "set": list(res["worst_set"]) if res["worst_set"] else None,
             "checked": res["checked"]}
    return _audit_record(_graph_meta(b), "peierls-audit", params, worst,
                         res["violations"]) + "\n"


def _cmd_kesten_audit(args, cfg: Config) -> str:
    g = _graph_from_config(cfg, args.seed_override)
    x = cfg.get("audit", "vertex", int, 0)
    p_max = cfg.get("audit", "p_max", int)
    res = enumerate_connected_sets(g, x, p_max)
    counts, bounds = res["counts"], res["bounds"]
    violations = sum(1 for c, b_ in zip(counts, bounds) if c > b_)
    margins = [b_ / c for c, b_ in zip(counts, bounds) if c]
    worst = {"counts": counts, "bounds": bounds,
             "min_bound_ratio": min(margins) if margins else None}
    params = {"vertex": x, "p_max": p_max, "max_degree": res["max_degree"]}
    return _audit_record(_graph_meta(g), "kesten-audit", params, worst,
                         violations) + "\n"


def _cmd_exact_gibbs(args, cfg: Config) -> str:
    b = _ball_from_config(cfg, args.seed_override)
    pr = _params_from_config(cfg)
    bc = _bc_from_config(cfg)
    table = exact_gibbs(b, bc, pr)
    out = {"graph_meta": _graph_meta(b), "bc": bc.label, "beta": pr.beta,
           "h": pr.h, "log_z": table.log_z,
           "normalization_error": abs(table.probabilities().sum() - 1.0)}
    if b.n <= 20:
        mag = magnetization_distribution(b, bc, pr)
        out["magnetization"] = {str(m): p for m, p in sorted(mag.items())}
    return _json_text(out)


def _cmd_correlation(args, cfg: Config) -> str:
    b = _ball_from_config(cfg, args.seed_override)
    pr = _params_from_config(cfg)
    bc = _bc_from_config(cfg)
    i, sites = _level_sites(cfg, b, "correlation")
    x = cfg.get("correlation", "x", int)
    probes = cfg.get_list("correlation", "probes", int)
    tau_kind = cfg.get("correlation", "tau")
    if tau_kind not in ("plus", "minus"):
        raise ConfigError(f"tau must be plus or minus, got {tau_kind!r}",
                          section="correlation", field="tau")
    tau = {v: (1 if tau_kind == "plus" else -1) for v in range(b.n)}
    prof = correlation_decay_profile(b, bc, pr, i, sites, x, probes, tau)
    out = {"graph_meta": _graph_meta(b), "op": "correlation",
           "params": {"level": i, "sites": list(sites), "x": x,
                      "tau": tau_kind, "beta": pr.beta, "h": pr.h,
                      "bc": bc.label},
           "profile": prof}
    return _json_text(out)


def _cmd_claim32(args, cfg: Config) -> str:
    b = _ball_from_config(cfg, args.seed_override)
    pr = _params_from_config(cfg)
    i, sites = _level_sites(cfg, b)
    cap = cfg.get("audit", "size_cap", int)
    res = claim32_audit(b, pr, i, sites, cap)
    params = {"level": i, "sites": list(sites), "size_cap": cap,
              "beta": pr.beta, "growth": res["growth"]}
    worst = {"log_ratio": res["worst_log_ratio"],
             "set": list(res["worst_set"]) if res["worst_set"] else None,
             "checked": res["checked"]}
    return _audit_record(_graph_meta(b), "claim32", params, worst,
                         res["violations"]) + "\n"


def _gap_row(b: BallSystem, bc: BoundaryCondition, pr: GibbsParams,
             with_bounds: bool) -> dict:
    chain = HeatBathChain(exact_gibbs(b, bc, pr))
    rep = spectral.exact_gap(chain)
    row = {"n": b.n, "radius": b.m, "beta": _fmt(pr.beta), "bc": bc.label,
           "exact_gap": _fmt(rep.gap)}
    if with_bounds and b.n <= spectral.MARTINGALE_CAP:
        pop = _popcount(np.arange(1 << chain.k, dtype=np.uint32))
        m = (2 * pop - chain.k).astype(np.float64)
        row["upper"] = _fmt(spectral.variational_gap_upper(chain, m))
        if b.n <= spectral.CONTRACTION_EXACT_CAP:
            con = spectral.coupling_contraction(b, bc, pr)
            if con.contracting:
                row["lower"] = _fmt(con.alpha)
    return row


def _cmd_gap(args, cfg: Config) -> str:
    b = _ball_from_config(cfg, args.seed_override)
    pr = _params_from_config(cfg)
    bc = _bc_from_config(cfg)
    return _csv_text([_gap_row(b, bc, pr, with_bounds=True)])


def _cmd_mixing(args, cfg: Config) -> str:
    b = _ball_from_config(cfg, args.seed_override)
    pr = _params_from_config(cfg)
    bc = _bc_from_config(cfg)
    chain = HeatBathChain(exact_gibbs(b, bc, pr))
    rep = spectral.tv_mixing_time(chain)
    row = {"n": b.n, "radius": b.m, "beta": _fmt(pr.beta), "bc": bc.label,
           "exact_gap": _fmt(rep.gap), "tau1": _fmt(rep.tau1)}
    return _csv_text([row])


def _cmd_free_vs_plus(args, cfg: Config, failures: list) -> str:
    g = _graph_from_config(cfg, args.seed_override)
    radii = cfg.get_list("sweep", "radii", int)
    pr = _params_from_config(cfg)
    rows = []
    for r in radii:
        try:
            b = ball(g, r)
        except GlauberGapError as exc:
            failures.append((f"r={r}", str(exc)))
            continue
        for bc_name in ("free", "plus"):
            try:
                rows.append(_gap_row(b, _bc_from_config(cfg, bc_name), pr,
                                     with_bounds=False))
            except GlauberGapError as exc:
                failures.append((f"r={r} bc={bc_name}", str(exc)))
    return _csv_text(rows)


def _cmd_run(args, cfg: Config, failures: list) -> str:
    g = _graph_from_config(cfg, args.seed_override)
    radii = cfg.get_list("sweep", "radii", int)
    betas = cfg.get_list("sweep", "betas", float,
                         default=[cfg.get("model", "beta", float)])
    bcs = cfg.get_list("sweep", "bcs", str, default=["free", "plus"])
    ops = cfg.get_list("sweep", "ops", str, default=["gap"])
    for op in ops:
        if op not in ("gap", "mixing"):
            raise ConfigError(f"run sweeps support gap and mixing, got {op!r}",
                              section="sweep", field="ops")
    rows = []
    for r in radii:
        try:
            b = ball(g, r)
        except GlauberGapError as exc:
            failures.append((f"r={r}", str(exc)))
            continue
        for beta in betas:
            pr = _params_from_config(cfg, beta)
            for bc_name in bcs:
                bc = _bc_from_config(cfg, bc_name)
                # one failing cell is recorded and the sweep continues
                try:
                    if "gap" in ops:
                        row = _gap_row(b, bc, pr, with_bounds=True)
                    else:
                        row = {"n": b.n, "radius": b.m, "beta": _fmt(pr.beta),
                               "bc": bc.label}
                    if "mixing" in ops:
                        chain = HeatBathChain(exact_gibbs(b, bc, pr))
                        rep = spectral.tv_mixing_time(chain)
                        row["tau1"] = _fmt(rep.tau1)
                        row.setdefault("exact_gap", _fmt(rep.gap))
                except GlauberGapError as exc:
                    failures.append(
                        (f"r={r} beta={_fmt(beta)} bc={bc_name}", str(exc)))
                    continue
                rows.append(row)
    return _csv_text(rows)


_COMMANDS = {
    "generate-graph": _cmd_generate_graph,
    "verify-geometry": _cmd_verify_geometry,
    "peierls-audit": _cmd_peierls_audit,
    "kesten-audit": _cmd_kesten_audit,
    "exact-gibbs": _cmd_exact_gibbs,
    "correlation": _cmd_correlation,
    "claim32": _cmd_claim32,
    "gap": _cmd_gap,
    "mixing": _cmd_mixing,
    "free-vs-plus": _cmd_free_vs_plus,
    "run": _cmd_run,
}


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="glaubergap",
        description="Boundary conditions and the Glauber spectral gap on "
                    "growing graphs: exact tables, eigensolvers, audits.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="INI config file")
        p.add_argument("--out", default=None,
                       help="output file (default: stdout)")
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS thread cap")
        p.add_argument("--seed-override", type=int, default=None,
                       help="replace every config seed with this value")
    return ap


def main(argv=None) -> int:
    """Exit codes: 0 full success, 1 config error, 2 recorded task failures."""
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    failures: list[tuple[str, str]] = []
    try:
        cfg = _load_config(args.config)
        cmd = _COMMANDS[args.command]
        if cmd in (_cmd_free_vs_plus, _cmd_run):
            text = cmd(args, cfg, failures)
        else:
            text = cmd(args, cfg)
        _emit(text, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except GlauberGapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for cell, msg in failures:
        print(f"failed cell {cell}: {msg}", file=sys.stderr)
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
