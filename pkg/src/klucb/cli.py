"""Command-line front end.

Usage::

    klucb run --config scenario.cfg [--out regret.csv] [--paper-scale] [--threads N]
    klucb bounds --config scenario.cfg [--out bounds.csv]
    klucb check deviation --divergence bernoulli --mu 0.5 --t 1000 --epsilon 8
    klucb check coverage --arm "bernoulli 0.5" --n 50 --epsilon 0.2

Scenario files hold ``key = value`` lines; ``#`` starts a comment.  ``arm``
and ``policy`` may repeat.  Bundled scenarios can be named as
``builtin:<name>``.

Exit codes: 0 on success, 2 on a configuration error, 3 on a runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Tuple

import numpy as np

from . import analysis
from .divergence import DomainError, Family
from .environments import ArmModel, parse_arm
from .policies import PolicySpec, parse_divergence
from .simulator import Scenario, run_monte_carlo

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "load_config", "main"]

log = logging.getLogger(__name__)

THREADS_ENV = "KLUCB_THREADS"
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_SCALAR_KEYS = ("horizon", "replications", "paper_replications", "seed", "rescale_bound", "checkpoints")
_KEYS = _SCALAR_KEYS + ("arm", "policy")


class ConfigError(ValueError):
    """Invalid scenario file or arguments."""


@dataclass(frozen=True)
class ScenarioConfig:
    horizon: int
    replications: int
    seed: int = 0
    rescale_bound: float = 1.0
    arms: Tuple[ArmModel, ...] = ()
    policies: Tuple[PolicySpec, ...] = ()
    checkpoints: Optional[Tuple[int, ...]] = None
    paper_replications: Optional[int] = None

    def scenario(self, paper_scale: bool = False) -> Scenario:
        reps = self.replications
        if paper_scale:
            if self.paper_replications is None:
                raise ConfigError("--paper-scale needs paper_replications in the config")
            reps = self.paper_replications
        return Scenario(
            arms=self.arms,
            horizon=self.horizon,
            replications=reps,
            master_seed=self.seed,
            rescale_bound=self.rescale_bound,
            checkpoints=self.checkpoints,
        )

    def to_text(self) -> str:
        lines = [
            f"horizon = {self.horizon}",
            f"replications = {self.replications}",
        ]
        if self.paper_replications is not None:
            lines.append(f"paper_replications = {self.paper_replications}")
        lines += [f"seed = {self.seed}", f"rescale_bound = {self.rescale_bound!r}"]
        if self.checkpoints is not None:
            lines.append("checkpoints = " + " ".join(str(c) for c in self.checkpoints))
        lines += [f"arm = {a.spec()}" for a in self.arms]
        lines += [f"policy = {p.text()}" for p in self.policies]
        return "\n".join(lines) + "\n"

    def scenario_hash(self) -> str:
        """Digest of the semantic content, independent of layout and comments."""
        blob = json.dumps(
            {
                "horizon": self.horizon,
                "replications": self.replications,
                "paper_replications": self.paper_replications,
                "seed": self.seed,
                "rescale_bound": float(self.rescale_bound),
                "checkpoints": list(self.checkpoints) if self.checkpoints is not None else None,
                "arms": [repr(a) for a in self.arms],
                "policies": [p.text() for p in self.policies],
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()


def _int(value: str, key: str, minimum: int) -> int:
    try:
        out = int(value)
    except ValueError:
        raise ValueError(f"{key} must be an integer, got {value!r}") from None
    if out < minimum:
        raise ValueError(f"{key} must be >= {minimum}")
    return out


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    scalars = {}
    arms: List[ArmModel] = []
    policies: List[PolicySpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        key, sep, value = line.partition("=")
        key, value = key.strip().lower(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value'")
        if key not in _KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if not value:
            raise ConfigError(f"{where}: empty value for {key!r}")
        try:
            if key == "arm":
                arms.append(parse_arm(value))
            elif key == "policy":
                policies.append(PolicySpec.parse(value))
            elif key in scalars:
                raise ValueError(f"duplicate key {key!r}")
            elif key == "horizon":
                scalars[key] = _int(value, key, 1)
            elif key in ("replications", "paper_replications"):
                scalars[key] = _int(value, key, 1)
            elif key == "seed":
                scalars[key] = _int(value, key, 0)
            elif key == "rescale_bound":
                b = float(value)
                if not (b > 0 and math.isfinite(b)):
                    raise ValueError("rescale_bound must be positive and finite")
                scalars[key] = b
            else:
                ck = tuple(_int(v, key, 1) for v in value.replace(",", " ").split())
                if any(b <= a for a, b in zip(ck, ck[1:])):
                    raise ValueError("checkpoints must be strictly increasing")
                scalars[key] = ck
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    for key in ("horizon", "replications"):
        if key not in scalars:
            raise ConfigError(f"{source}: missing required key {key!r}")
    if not arms:
        raise ConfigError(f"{source}: no arms")
    cfg = ScenarioConfig(arms=tuple(arms), policies=tuple(policies), **scalars)
    try:
        cfg.scenario()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def builtin_configs() -> List[str]:
    return sorted(
        p.name[: -len(".cfg")]
        for p in resources.files("klucb").joinpath("configs").iterdir()
        if p.name.endswith(".cfg")
    )


def load_config(path: str) -> ScenarioConfig:
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        res = resources.files("klucb").joinpath("configs").joinpath(f"{name}.cfg")
        if not res.is_file():
            raise ConfigError(f"unknown builtin config {name!r}; have {', '.join(builtin_configs())}")
        return parse_config(res.read_text(), path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path)


# -- commands -----------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".9g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_run(cfg: ScenarioConfig, paper_scale=False, threads=1) -> str:
    if not cfg.policies:
        raise ConfigError("no policies")
    scenario = cfg.scenario(paper_scale)
    kinf = analysis.scenario_kinf(scenario.arms, scenario.rescale_bound)
    means = scenario.means
    if np.all(means == means.max()):
        const = 0.0
    else:
        const = analysis.lower_bound_constant(means, kinf)
    rows = []
    for spec in sorted(cfg.policies, key=lambda p: p.label):
        summary = run_monte_carlo(spec, scenario, threads=threads)
        for i, c in enumerate(summary.checkpoints):
            rows.append(
                [
                    int(c),
                    spec.label,
                    _fmt(summary.mean[i]),
                    _fmt(summary.q0005[i]),
                    _fmt(summary.q0995[i]),
                    _fmt(summary.q09995[i]),
                    _fmt(const * math.log(c)),
                ]
            )
    rows.sort(key=lambda r: (r[1], r[0]))
    header = ["checkpoint", "policy", "mean_regret", "q0005", "q0995", "q09995", "lower_bound"]
    return _csv_text(header, rows)


def _bound_reports(cfg: ScenarioConfig):
    """(arm index, label, report, scale) for each suboptimal arm and relevant bound."""
    scale = cfg.rescale_bound
    means = np.array([a.true_mean() for a in cfg.arms])
    mu_star = means.max()
    T = cfg.horizon
    kinds = set()
    for p in cfg.policies:
        if p.kind == "klucb":
            if p.divergence.family is Family.BERNOULLI:
                kinds.add(("corollary1", None))
            elif p.divergence.family is Family.QUADRATIC:
                kinds.add(("corollary2", None))
            else:
                kinds.add(("thm1", p.divergence.name))
        elif p.kind in ("ucb", "ucb-cor2"):
            kinds.add(("corollary2", None))
        elif p.kind == "empklucb":
            kinds.add(("kinf", None))
    out = []
    kinf = analysis.scenario_kinf(cfg.arms, scale) if ("kinf", None) in kinds else None
    for a, mu in enumerate(means):
        if mu >= mu_star:
            continue
        for kind, name in sorted(kinds, key=lambda k: (k[0], k[1] or "")):
            if kind == "corollary1":
                out.append((a, "corollary1", analysis.corollary1_bound(T, mu / scale, mu_star / scale), scale))
            elif kind == "corollary2":
                out.append((a, "corollary2", analysis.corollary2_bound(T, mu / scale, mu_star / scale), scale))
            elif kind == "thm1":
                d = parse_divergence(name)
                out.append((a, f"thm1-{name}", analysis.thm1_bound(T, mu, mu_star, d), 1.0))
            else:
                lead = analysis.kinf_leading_term(T, kinf[a])
                rep = analysis.BoundReport(mu_a=mu / scale, mu_star=mu_star / scale, leading_term=lead, label="kinf")
                out.append((a, "kinf", rep, scale))
    return out


def cmd_bounds(cfg: ScenarioConfig) -> str:
    if not cfg.policies:
        raise ConfigError("no policies")
    rows = []
    for arm, label, rep, scale in _bound_reports(cfg):
        for name, value in rep.terms():
            rows.append([arm, f"{label}:{name}", _fmt(value)])
        rows.append([arm, f"{label}:regret_contribution", _fmt(scale * rep.regret_contribution)])
    return _csv_text(["arm", "term", "value"], rows)


def cmd_check(args) -> str:
    rng = np.random.default_rng(args.seed)
    if args.kind == "deviation":
        d = parse_divergence(args.divergence)
        res = analysis.deviation_check(d, args.mu, args.t, args.epsilon, args.samples, rng)
    else:
        res = analysis.coverage_check(parse_arm(args.arm), args.n, args.epsilon, args.samples, rng)
    if res.vacuous:
        print(f"note: bound {res.bound:.6g} >= 1, the check is vacuous", file=sys.stderr)
    return _csv_text(["empirical", "bound"], [[_fmt(res.empirical), _fmt(res.bound)]])


# -- entry point --------------------------------------------------------------


def _default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klucb", description="kl-UCB bandit simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario file or builtin:<name>")
        p.add_argument("--out", help="output CSV path (default: stdout)")

    run = sub.add_parser("run", help="Monte-Carlo regret curves")
    common(run)
    run.add_argument("--paper-scale", action="store_true", help="use paper_replications")
    run.add_argument("--threads", type=int, default=None, help=f"worker processes (default ${THREADS_ENV} or 1)")

    bounds = sub.add_parser("bounds", help="finite-time pull bounds per suboptimal arm")
    common(bounds)

    check = sub.add_parser("check", help="Monte-Carlo check of an inequality")
    check.add_argument("kind", choices=("deviation", "coverage"))
    check.add_argument("--divergence", default="bernoulli", help="deviation: family divergence")
    check.add_argument("--mu", type=float, default=0.5, help="deviation: true mean")
    check.add_argument("--t", type=int, default=1000, help="deviation: stream length")
    check.add_argument("--arm", default="bernoulli 0.5", help="coverage: law on [0, 1]")
    check.add_argument("--n", type=int, default=50, help="coverage: sample size")
    check.add_argument("--epsilon", type=float, required=True)
    check.add_argument("--samples", type=int, default=100_000)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--out", help="output CSV path (default: stdout)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "check":
            try:
                text = cmd_check(args)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        else:
            cfg = load_config(args.config)
            if args.command == "run":
                threads = args.threads if args.threads is not None else _default_threads()
                if threads < 1:
                    raise ConfigError("--threads must be >= 1")
                text = cmd_run(cfg, args.paper_scale, threads)
            else:
                text = cmd_bounds(cfg)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except ConfigError as exc:
        print(f"klucb: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ValueError, OSError, ArithmeticError) as exc:
        print(f"klucb: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
