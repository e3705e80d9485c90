"""Command-line front end: ``delayrisk <command> <config> [--out DIR] [--format csv|json] [--seed N]``.

Commands write one result file per run (``profile``, ``sweep``, ``sequence``
or ``validate`` with a ``.csv`` or ``.json`` suffix) into the output
directory, plus a ``<command>.provenance.json`` sidecar holding the
timestamp. Result files carry no timestamp so reruns are byte-identical.

Exit status: 0 success, 2 configuration error, 3 numerical or ill-posed
error, 4 validation failure. Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, load_config, to_dict
from .errors import (
    AgentIndexError,
    ConfigError,
    ConnectivityError,
    DegenerateError,
    DelayRiskError,
    DivergenceError,
    InsufficientAcceptanceError,
    InvalidEdgeError,
    NumericalError,
    ParameterError,
    StabilityError,
)
from .graphs import laplacian, spectral
from .risk import RiskProfile, most_vulnerable_sequence, risk_profile
from .simulation import conditional_exceedance_oracle, simulate
from .stats import FailureScenario, SteadyStateCovariance, steady_state_covariance

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 2, 3, 4
OUT_ENV = "DELAYRISK_OUT"
DEFAULT_OUT = "delayrisk-out"

PROFILE_COLUMNS = ["agent", "failed", "risk", "risk_is_inf", "mu_tilde", "sigma_tilde"]
SEQUENCE_COLUMNS = ["step", "agent", "risk"]
VALIDATE_COLUMNS = ["check", "agent_i", "agent_j", "analytical", "empirical", "std_error", "z", "passed"]


class CommandFailed(Exception):
    def __init__(self, code, errors):
        super().__init__("; ".join(errors))
        self.code = code
        self.errors = errors


def fmt(x) -> str:
    """Full-precision CSV number (17 significant digits); ``inf``/``nan`` spelled out."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def json_number(x):
    x = float(x)
    return None if math.isnan(x) else x


def json_risk(r):
    if r.is_inf:
        return {"inf": True, "trigger": r.trigger}
    return r.value


def _covariance(cfg: ScenarioConfig):
    g = cfg.build_graph()
    s = spectral(laplacian(g))
    return g, steady_state_covariance(s, cfg.noise)


def profile_rows(cov: SteadyStateCovariance, scenario: FailureScenario, prof: RiskProfile):
    failed = dict(zip(scenario.indices, scenario.values))
    rows = []
    for j in range(1, cov.n + 1):
        r = prof.values[j - 1]
        if j in failed:
            # conditioned on its own observation a failed agent is a point mass
            mu, sd = failed[j], 0.0
        elif j in prof.stats:
            mu, sd = prof.stats[j].mu_tilde, prof.stats[j].sigma_tilde
        else:
            mu = sd = math.nan
        rows.append({"agent": j, "failed": j in failed, "risk": r, "mu_tilde": mu, "sigma_tilde": sd})
    return rows


def _profile_csv_row(row, extra=()):
    r = row["risk"]
    return list(extra) + [
        fmt(row["agent"]), fmt(row["failed"]), fmt(r.value), fmt(r.is_inf),
        fmt(row["mu_tilde"]), fmt(row["sigma_tilde"]),
    ]


def _profile_json_row(row):
    return {
        "agent": row["agent"],
        "failed": row["failed"],
        "risk": json_risk(row["risk"]),
        "classification": row["risk"].classification,
        "mu_tilde": json_number(row["mu_tilde"]),
        "sigma_tilde": json_number(row["sigma_tilde"]),
    }


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _record(command, cfg, **body):
    return {"command": command, "tool_version": __version__, "seed": cfg.seed, "scenario": to_dict(cfg), **body}


def run_profile(cfg: ScenarioConfig, fmt_name: str, out_dir: Path):
    _, cov = _covariance(cfg)
    prof = risk_profile(cov, cfg.failures, cfg.risk)
    rows = profile_rows(cov, cfg.failures, prof)
    if fmt_name == "csv":
        text = _csv_text(PROFILE_COLUMNS, [_profile_csv_row(r) for r in rows])
    else:
        text = _json_text(_record("profile", cfg, agents=[_profile_json_row(r) for r in rows]))
    return text, []


def run_sweep(cfg: ScenarioConfig, fmt_name: str, out_dir: Path):
    if cfg.sweep is None:
        raise CommandFailed(EXIT_CONFIG, ["sweep: section required for the sweep command"])
    _, cov = _covariance(cfg)
    points, errors = [], []
    for i, sc in enumerate(cfg.sweep.expand(cov.n)):
        try:
            prof = risk_profile(cov, sc, cfg.risk)
            points.append((i, sc, profile_rows(cov, sc, prof), None))
        except DelayRiskError as err:
            errors.append(f"sweep point {i}: {err}")
            points.append((i, sc, [], str(err)))
    if fmt_name == "csv":
        body = [_profile_csv_row(r, extra=[fmt(i)]) for i, _, rows, _ in points for r in rows]
        text = _csv_text(["sweep_point"] + PROFILE_COLUMNS, body)
    else:
        text = _json_text(_record("sweep", cfg, points=[
            {
                "sweep_point": i,
                "failures": {"agents": list(sc.indices), "values": list(sc.values)},
                "error": err,
                "agents": [_profile_json_row(r) for r in rows],
            }
            for i, sc, rows, err in points
        ]))
    return text, errors


def run_sequence(cfg: ScenarioConfig, fmt_name: str, out_dir: Path):
    if cfg.sequence is None:
        raise CommandFailed(EXIT_CONFIG, ["sequence: section required for the sequence command"])
    _, cov = _covariance(cfg)
    seq = most_vulnerable_sequence(cov, cfg.risk, cfg.sequence.y_f, cfg.sequence.length, cfg.failures)
    if fmt_name == "csv":
        rows = [[fmt(k), fmt(a), fmt(r.value)] for k, (a, r) in enumerate(zip(seq.order, seq.risks), 1)]
        text = _csv_text(SEQUENCE_COLUMNS, rows)
    else:
        steps = [
            {"step": k, "agent": a, "risk": json_risk(r), "classification": r.classification}
            for k, (a, r) in enumerate(zip(seq.order, seq.risks), 1)
        ]
        text = _json_text(_record("sequence", cfg, steps=steps))
    return text, []


def _z(diff, se):
    if se > 0:
        return abs(diff) / se
    return 0.0 if diff == 0 else math.inf


def run_validate(cfg: ScenarioConfig, fmt_name: str, out_dir: Path):
    if cfg.simulation is None:
        raise CommandFailed(EXIT_CONFIG, ["simulation: section required for the validate command"])
    g, cov = _covariance(cfg)
    v = cfg.validation
    sim = cfg.simulation.to_sim_config(cfg.seed, str(out_dir / "trajectories"))
    emp = simulate(g, cfg.noise, sim)
    checks = []
    for i in range(g.n):
        for j in range(g.n):
            diff = emp.cov_hat[i, j] - cov.sigma[i, j]
            z = _z(diff, emp.cov_se[i, j])
            checks.append(("covariance", i + 1, j + 1, cov.sigma[i, j], emp.cov_hat[i, j], emp.cov_se[i, j], z, z <= v.z_max))
    cov_pass = all(c[-1] for c in checks)

    prof = risk_profile(cov, cfg.failures, cfg.risk)
    deltas = {
        j: r.value
        for j, r in enumerate(prof.values, 1)
        if j not in cfg.failures and r.classification == "positive"
    }
    oracle_pass = True
    if deltas:
        est = conditional_exceedance_oracle(
            cov, cfg.failures, cfg.risk.c, deltas, band=v.band, count=v.oracle_count, seed=cfg.seed, method=v.method
        )
        eps = cfg.risk.epsilon
        hits = 0
        for j, e in est.items():
            se = math.sqrt(eps * (1 - eps) / e.accepted)
            z = _z(e.probability - eps, se)
            hits += z <= v.z_max
            checks.append(("conditional_exceedance", j, None, eps, e.probability, se, z, z <= v.z_max))
        oracle_pass = hits >= v.min_fraction * len(est)

    passed = cov_pass and oracle_pass
    if fmt_name == "csv":
        text = _csv_text(VALIDATE_COLUMNS, [[c[0]] + [fmt(x) for x in c[1:]] for c in checks])
    else:
        keys = VALIDATE_COLUMNS
        text = _json_text(_record(
            "validate", cfg,
            samples=emp.samples,
            covariance_passed=cov_pass,
            oracle_passed=oracle_pass,
            passed=passed,
            checks=[
                {k: (json_number(x) if isinstance(x, (float, np.floating)) else x) for k, x in zip(keys, c)}
                for c in checks
            ],
        ))
    summary = (
        f"covariance: max z {max(c[6] for c in checks if c[0] == 'covariance'):.3g} "
        f"({'pass' if cov_pass else 'FAIL'}); conditional oracle: "
        + (f"{sum(c[7] for c in checks if c[0] != 'covariance')}/{len(deltas)} agents within z_max "
           f"({'pass' if oracle_pass else 'FAIL'})" if deltas else "no positive risks, skipped")
    )
    print(summary)
    if not passed:
        return text, [CommandFailed(EXIT_VALIDATION, [f"validation failed: {summary}"])]
    return text, []


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return json_number(x)
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


COMMANDS = {"profile": run_profile, "sweep": run_sweep, "sequence": run_sequence, "validate": run_validate}

CONFIG_ERRORS = (ConfigError, ParameterError, ConnectivityError, InvalidEdgeError, StabilityError, AgentIndexError)
NUMERICAL_ERRORS = (NumericalError, DivergenceError, InsufficientAcceptanceError, DegenerateError)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="delayrisk",
        description="Cascading-failure risk in noisy time-delay consensus networks.",
    )
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="YAML scenario file")
    ap.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--seed", type=int, help="overrides the scenario seed")
    return ap


def _fail(code, errors):
    print(json.dumps({"exit_code": code, "errors": list(errors)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError([f"--seed must be a non-negative 64-bit integer, got {args.seed}"])
            cfg = cfg.with_seed(args.seed)
        out_dir.mkdir(parents=True, exist_ok=True)
        text, problems = COMMANDS[args.command](cfg, args.format, out_dir)
    except CommandFailed as err:
        return _fail(err.code, err.errors)
    except ConfigError as err:
        return _fail(EXIT_CONFIG, err.errors)
    except CONFIG_ERRORS as err:
        return _fail(EXIT_CONFIG, [str(err)])
    except NUMERICAL_ERRORS as err:
        msg = str(err)
        if isinstance(err, InsufficientAcceptanceError):
            msg += "; raise validation.oracle_count or widen validation.band"
        return _fail(EXIT_NUMERICAL, [msg])
    except OSError as err:
        return _fail(EXIT_CONFIG, [f"cannot write to {out_dir}: {err}"])

    target = out_dir / f"{args.command}.{args.format}"
    target.write_text(text, encoding="utf-8")
    provenance = {
        "command": args.command,
        "tool_version": __version__,
        "seed": cfg.seed,
        "config": str(Path(args.config)),
        "output": target.name,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    (out_dir / f"{args.command}.provenance.json").write_text(json.dumps(provenance, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {target}")

    failures = [p for p in problems if isinstance(p, CommandFailed)]
    if failures:
        return _fail(failures[0].code, failures[0].errors)
    if problems:
        return _fail(EXIT_NUMERICAL, problems)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
