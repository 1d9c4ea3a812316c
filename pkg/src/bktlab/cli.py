"""Command-line front end: ``bktlab <command> [--config FILE] [flags]``.

Every command reads an optional JSON config whose keys are listed under
``--help``; flags override config values.  Output goes to ``--out``, else to
``$BKTLAB_OUT_DIR/<command>.<ext>`` when that variable is set, else stdout.

Exit codes: 0 ok, 1 a pass/fail check failed, 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import BktError, CheckFailed, ConfigInvalid

OUT_DIR_ENV = "BKTLAB_OUT_DIR"

# key -> (type, default, help); the type doubles as the JSON validator
SCHEMAS = {
    "sample": {
        "model": (str, "villain", "gff | iv | villain"),
        "kind": (str, None, "domain kind; default zero for villain, free otherwise"),
        "L": (int, 4, "side length"),
        "beta": (float, 1.0, "inverse temperature"),
        "x": (str, "1,1", "observable site as 'a,b'"),
        "seeds": (list, [0], "list of seeds"),
        "chains": (int, 1, "chains per seed"),
        "steps": (int, 2000, "samples or sweeps per chain"),
        "burn_in": (int, 200, "discarded sweeps per chain (MCMC models)"),
        "m_cut": (int, 5, "Villain winding cutoff"),
    },
    "green": {
        "L": (int, 8, "free-domain side length"),
        "rows": (list, None, "list of [y0, y1]; default every row with y1 < L-1"),
        "dense_cutoff": (int, 4096, "largest vertex count solved densely"),
        "cg_tol": (float, 1e-11, "conjugate-gradient tolerance above the cutoff"),
    },
    "cover": {
        "density": (dict, None, "{'kind': 'free', 'L': 8, 'charges': {'a,b': q, ...}}"),
        "profile": (str, "paper", "paper | test-scaled"),
        "M_test": (int, 2, "separation constant of the test-scaled profile"),
    },
    "expand": {
        "L": (int, 2, "free-domain side length (at most 3)"),
        "N": (int, 2, "Fejer order of the site weights"),
        "profile": (str, "paper", "paper | test-scaled"),
        "M_test": (int, 2, "separation constant of the test-scaled profile"),
        "dump": (bool, False, "include every ensemble term"),
        "dump_cap": (int, 10 ** 6, "largest number of dumped terms"),
    },
    "spinwave": {
        "density": (dict, None, "{'kind': 'free', 'L': 16, 'charges': {'a,b': q, ...}}"),
        "beta": (float, 1.0, "inverse temperature"),
        "profile": (str, "paper", "paper | test-scaled"),
        "M_test": (int, 2, "separation constant of the test-scaled profile"),
    },
    "duality": {
        "L": (int, 2, "primal side length"),
        "beta": (float, 1.0, "Villain inverse temperature"),
        "x": (str, "0,0", "observable site as 'a,b'"),
        "K": (int, 8, "height cutoff of the dual sum"),
        "m_cut": (int, 8, "Villain winding cutoff"),
        "steps": (int, 20000, "Villain sweeps when quadrature is out of reach"),
        "seed": (int, 0, "seed for the Monte Carlo side"),
    },
    "verify": {
        "suite": (str, "identities", "identities | bounds | duality | all"),
        "profile": (str, "paper", "paper | test-scaled"),
        "seed": (int, 0, "seed for every randomized check"),
        "timings": (bool, False, "include wall-clock runtimes (breaks byte-identical reruns)"),
    },
}

FORMATS = {"sample": "csv", "green": "csv"}


# configuration ------------------------------------------------------------------


def load_config(path: str) -> dict:
    """Parse a JSON config; syntax errors carry line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigInvalid(f"{path}: top level must be a JSON object")
    return cfg


def _coerce(key: str, typ, value):
    if value is None:
        return None
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        value = float(value)
    if typ is int and isinstance(value, bool):
        raise ConfigInvalid(f"{key}: expected int, got bool")
    if not isinstance(value, typ):
        raise ConfigInvalid(f"{key}: expected {typ.__name__}, got {type(value).__name__}")
    if typ is float and not math.isfinite(value):
        raise ConfigInvalid(f"{key}: must be finite")
    return value


def resolve_config(command: str, file_cfg: dict, flags: dict) -> dict:
    """Schema defaults, then the config file, then explicit flags."""
    schema = SCHEMAS[command]
    unknown = sorted(set(file_cfg) - set(schema) - {"command"})
    if unknown:
        raise ConfigInvalid(f"unknown config keys for {command}: {', '.join(unknown)}")
    if file_cfg.get("command", command) != command:
        raise ConfigInvalid(f"config is for {file_cfg['command']!r}, not {command!r}")
    out = {}
    for key, (typ, default, _) in schema.items():
        val = default
        if key in file_cfg:
            val = _coerce(key, typ, file_cfg[key])
        if flags.get(key) is not None:
            val = _coerce(key, typ, flags[key])
        out[key] = val
    return out


def parse_site(text) -> tuple:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    try:
        site = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigInvalid(f"bad site {text!r}; expected 'a,b'") from exc
    if len(site) != 2:
        raise ConfigInvalid(f"bad site {text!r}; expected 'a,b'")
    return site


def _profile(name: str, M_test: int):
    from .density import PAPER, scaled_profile

    if name == "paper":
        return PAPER
    if name == "test-scaled":
        if M_test not in (2, 4, 8):
            raise ConfigInvalid("M_test must be 2, 4 or 8")
        return scaled_profile(M_test)
    raise ConfigInvalid(f"unknown profile {name!r}")


def _density(spec):
    from .density import ChargeDensity
    from .lattice import build_domain

    if not isinstance(spec, dict) or not {"kind", "L", "charges"} <= set(spec):
        raise ConfigInvalid("density needs keys kind, L and charges")
    extra = set(spec) - {"kind", "L", "charges"}
    if extra:
        raise ConfigInvalid(f"unknown density keys: {', '.join(sorted(extra))}")
    try:
        dom = build_domain(spec["kind"], int(spec["L"]))
        items = [(parse_site(k), int(q)) for k, q in spec["charges"].items()]
        return ChargeDensity(dom, items)
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ConfigInvalid(f"bad density: {exc}") from exc


# commands -------------------------------------------------------------------------


def _sample_chain(model, dom, beta, site, seed, chain, steps, burn_in, m_cut):
    from .fields import ModelParams, batch_means, iv_mcmc, rng_stream, sample_gff, villain_mcmc

    rng = rng_stream(seed, chain)
    j = dom.idx(site)
    if model == "gff":
        phi = sample_gff(dom, ModelParams(beta=beta), steps, rng)
        return "cos(phi_x-phi_v)", batch_means(np.cos(phi[:, j] - phi[:, 0]))
    if model == "iv":
        m = iv_mcmc(dom, ModelParams(beta=beta), steps, burn_in, rng=rng)
        return "m_x^2", batch_means(m[:, j].astype(float) ** 2)
    th = villain_mcmc(dom, ModelParams(beta=beta, m_cut=m_cut), steps, burn_in, rng=rng)
    return "cos(theta_x)", batch_means(np.cos(th[:, j]))


def cmd_sample(cfg: dict, threads: int):
    from .lattice import build_domain

    model = cfg["model"]
    if model not in ("gff", "iv", "villain"):
        raise ConfigInvalid(f"unknown model {model!r}")
    kind = cfg["kind"] or ("zero" if model == "villain" else "free")
    dom = build_domain(kind, cfg["L"])
    site = parse_site(cfg["x"])
    if not all(isinstance(s, int) for s in cfg["seeds"]):
        raise ConfigInvalid("seeds must be integers")
    jobs = [(s, c) for s in cfg["seeds"] for c in range(cfg["chains"])]

    def run(job):
        return _sample_chain(model, dom, cfg["beta"], site, job[0], job[1], cfg["steps"], cfg["burn_in"], cfg["m_cut"])

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        res = list(pool.map(run, jobs))
    # chains are independent: average the estimates, combine errors in quadrature
    est = float(np.mean([r[1][0] for r in res]))
    se = float(math.sqrt(sum(r[1][1] ** 2 for r in res)) / len(res))
    header = ["model", "L", "beta", "observable", "estimate", "se", "n"]
    return header, [[model, cfg["L"], cfg["beta"], res[0][0], est, se, cfg["steps"] * len(res)]]


def cmd_green(cfg: dict, threads: int):
    from .errors import BadRow
    from .green import GreenOperator, claim_green_lower, green_log_constant
    from .lattice import build_domain

    L = cfg["L"]
    G = GreenOperator(build_domain("free", L), dense_cutoff=cfg["dense_cutoff"], cg_tol=cfg["cg_tol"])
    rows = cfg["rows"] or [[y0, y1] for y0 in range(L) for y1 in range(L - 1)]
    c6 = green_log_constant()
    out = []
    for y in rows:
        y = parse_site(y)
        if not (0 <= y[0] < L and 0 <= y[1] < L - 1):
            raise BadRow(f"row {y} outside 0 <= y0 < L, 0 <= y1 < L-1")
        r = claim_green_lower(L, y, c6, G)
        out.append([L, y[0], y[1], r["lhs"], r["bound"], r["eqGreenId2"]])
    return ["L", "y0", "y1", "lhs", "bound", "eqGreenId2"], out


def cmd_cover(cfg: dict, threads: int):
    from .density import A_functional, multiscale_cover, prop21_constants

    rho = _density(cfg["density"])
    prof = _profile(cfg["profile"], cfg["M_test"])
    mc = multiscale_cover(rho, prof)
    r = A_functional(rho, prof, prop21_constants(prof).D1)
    return {
        "diameter": rho.diameter,
        "n": mc.n,
        "cover_sizes": [mc.size(k) for k in range(mc.n + 1)],
        "separated_sizes": [len(mc.separated.get(k, [])) for k in range(mc.n + 1)],
        "A": r["A"],
        "lower": r["lower"],
        "S0": r["S0"],
        "sep_total": r["sep_total"],
        "D1": r["D1"],
        "bound_ratio": r["bound_ratio"],
        "doubling_conflicts": mc.doubling_conflicts,
    }


def cmd_expand(cfg: dict, threads: int):
    from .ensemble import run_renormalization, weights_to_density_mixture
    from .lattice import build_domain
    from .weights import fejer

    if not 2 <= cfg["L"] <= 3 or cfg["N"] > 2 or cfg["N"] < 1:
        raise ConfigInvalid("expansion is exact only for 2 <= L <= 3 and N <= 2")
    dom = build_domain("free", cfg["L"])
    prof = _profile(cfg["profile"], cfg["M_test"])
    n_terms = n_neutral = n_charged = n_with_charged = 0
    max_K = 0.0
    total = 0.0
    claim_ok = True
    dump = []
    for xi, items in weights_to_density_mixture(dom, fejer(cfg["N"])):
        res = run_renormalization(items, prof)
        claim_ok &= res.scale_claim_ok
        for c, ens in res.ensembles():
            n_terms += 1
            total += xi * c
            ch = sum(1 for it in ens if not it.rho.neutral)
            n_charged += ch
            n_neutral += len(ens) - ch
            n_with_charged += ch > 0
            max_K = max([max_K] + [abs(it.K) for it in ens])
            if cfg["dump"] and len(dump) < cfg["dump_cap"]:
                dump.append({"weight": xi * c,
                             "items": [{"charges": [[dom.vertices[j], q] for j, q in it.rho.items], "K": it.K}
                                       for it in ens]})
    out = {"L": cfg["L"], "N": cfg["N"], "terms": n_terms, "total_weight": total, "max_abs_K": max_K,
           "neutral_densities": n_neutral, "charged_densities": n_charged,
           "ensembles_with_charged": n_with_charged, "scale_claim_ok": claim_ok}
    if cfg["dump"]:
        out["dump"] = dump
        out["dump_truncated"] = n_terms > len(dump)
    return out


def cmd_spinwave(cfg: dict, threads: int):
    from .spinwave import assemble_spinwave

    rho = _density(cfg["density"])
    if not rho.neutral:
        raise ConfigInvalid("spin waves need a neutral density")
    prof = _profile(cfg["profile"], cfg["M_test"])
    aw = assemble_spinwave(rho, cfg["beta"], prof)
    parts = [{"piece": str(p.meta.get("square", "a0")), "energy": p.energy} for p in aw.parts]
    return {"beta": cfg["beta"], "norm2sq": rho.norm2sq, "diameter": rho.diameter, "parts": parts,
            "checks": aw.checks}


def cmd_duality(cfg: dict, threads: int):
    from .duality import duality_check

    x = parse_site(cfg["x"])
    L = cfg["L"]
    if not (0 <= x[0] < L and 0 <= x[1] < L):
        raise ConfigInvalid(f"site {x} outside the {L}x{L} domain")
    r = duality_check(L, cfg["beta"], x, K=cfg["K"], m_cut=cfg["m_cut"], n_sweeps=cfg["steps"], seed=cfg["seed"])
    tol = {"tolerance": r["tolerance"]}
    for k in ("iv_truncation", "villain_se", "iv_se"):
        if k in r:
            tol[k] = r[k]
    return {"L": L, "beta": cfg["beta"], "x": list(x), "villain": r["villain"], "iv": r["iv"], "diff": r["diff"],
            "tolerances": tol, "villain_method": r["villain_method"], "iv_method": r["iv_method"], "ok": r["ok"]}


def cmd_verify(cfg: dict, threads: int):
    from .verify import PROFILES, SUITES, run_suite

    if cfg["suite"] not in SUITES:
        raise ConfigInvalid(f"unknown suite {cfg['suite']!r}")
    if cfg["profile"] not in PROFILES:
        raise ConfigInvalid(f"unknown profile {cfg['profile']!r}")
    reports = run_suite(cfg["suite"], cfg["profile"], cfg["seed"], threads)
    rows = []
    for r in reports:
        d = r.to_dict()
        if not cfg["timings"]:
            d.pop("runtime")
        rows.append(d)
        print(f"{r.status.upper():12s} {r.check_id:40s} margin={r.margin:.3g}", file=sys.stderr)
    failed = [r.check_id for r in reports if r.failed]
    summary = {"checks": rows, "failed": failed,
               "counts": {s: sum(r.status == s for r in reports) for s in ("pass", "fail", "report-only")}}
    return summary, (CheckFailed(f"{len(failed)} checks failed: {', '.join(failed)}") if failed else None)


COMMANDS = {"sample": cmd_sample, "green": cmd_green, "cover": cmd_cover, "expand": cmd_expand,
            "spinwave": cmd_spinwave, "duality": cmd_duality, "verify": cmd_verify}


# output ------------------------------------------------------------------------------


def _finite(x):
    from .verify import jsonable

    return jsonable(x)


def render(command: str, cfg: dict, payload) -> str:
    from .verify import config_hash

    h = config_hash(dict(cfg, command=command))
    if FORMATS.get(command) == "csv":
        header, rows = payload
        buf = io.StringIO()
        buf.write(f"# bktlab {__version__} {command} config_hash={h}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in _finite(row)])
        return buf.getvalue()
    doc = {"command": command, "version": __version__, "config_hash": h, "config": cfg, "result": payload}
    if "profile" in cfg:
        doc["profile"] = cfg["profile"]
    return json.dumps(_finite(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _schema_text(command: str) -> str:
    lines = ["config keys (JSON file or flags; flags win):"]
    for key, (typ, default, text) in SCHEMAS[command].items():
        lines.append(f"  {key:<14s} {typ.__name__:<6s} default={default!r:<12s} {text}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bktlab", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"bktlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name, epilog=_schema_text(name), formatter_class=argparse.RawDescriptionHelpFormatter,
                            help=f"run {name}")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help=f"output file (default: ${OUT_DIR_ENV}/{name}.<ext> or stdout)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads")
        for key, (typ, _, text) in schema.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=text)
            elif typ in (list, dict):
                sp.add_argument(flag, dest=key, type=_json_arg, default=None, help=text + " (JSON)")
            else:
                sp.add_argument(flag, dest=key, type=typ, default=None, help=text)
    return p


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"line {exc.lineno} column {exc.colno}: {exc.msg}")


def _output_path(command: str, out: str | None) -> str | None:
    if out:
        return out
    d = os.environ.get(OUT_DIR_ENV)
    if d:
        return os.path.join(d, f"{command}.{FORMATS.get(command, 'json')}")
    return None


def parse_and_dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    flags = {k: v for k, v in vars(args).items() if k in SCHEMAS[command]}
    try:
        file_cfg = load_config(args.config) if args.config else {}
        cfg = resolve_config(command, file_cfg, flags)
        if args.threads < 1:
            raise ConfigInvalid("--threads must be at least 1")
        payload = COMMANDS[command](cfg, args.threads)
        failure = None
        if command == "verify":
            payload, failure = payload
        text = render(command, cfg, payload)
        path = _output_path(command, args.out)
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if failure is not None:
            raise failure
    except ConfigInvalid as exc:
        print(f"bktlab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except CheckFailed as exc:
        print(f"bktlab: {exc}", file=sys.stderr)
        return 1
    except (BktError, ValueError) as exc:
        # precondition errors from the modules are configuration problems
        print(f"bktlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
