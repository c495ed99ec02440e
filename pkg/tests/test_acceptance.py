"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the pytest terminal
summary.  Long Monte-Carlo runs are shared through module-scoped fixtures.
Set ``KLUCB_THREADS`` to spread replications over several processes.
"""

import math
import pathlib
import subprocess
import sys
import warnings

import numpy as np
import pytest

from klucb import (
    Bernoulli,
    Divergence,
    EmpiricalDistribution,
    EmpiricalKLUCB,
    ExplorationSchedule,
    FiniteSupport,
    KLUCB,
    PolicySpec,
    Scenario,
    UCB,
    el_upper_bound,
    kinf,
    run_monte_carlo,
)
from klucb.analysis import coverage_check, deviation_check, lower_bound_line, scenario_kinf, thm1_bound
from klucb.cli import _default_threads, load_config
from klucb.index import ScheduleKind
from oracles import grid_el_bound, grid_kinf
from streams import random_streams, replay

VERDICTS = []
THREADS = _default_threads()


def verdict(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def regrets(cfg_name, labels):
    cfg = load_config(f"builtin:{cfg_name}")
    scenario = cfg.scenario()
    out = {}
    for spec in cfg.policies:
        if spec.label in labels:
            out[spec.label] = run_monte_carlo(spec, scenario, threads=THREADS).at(scenario.horizon)
    return out


@pytest.fixture(scope="module")
def bernoulli10():
    cfg = load_config("builtin:bernoulli10")
    scenario = cfg.scenario()
    kl = run_monte_carlo(PolicySpec.parse("klucb bernoulli logt"), scenario, threads=THREADS)
    ucb = run_monte_carlo(PolicySpec.parse("ucb"), scenario, threads=THREADS)
    return scenario, kl, ucb


def test_c01_klucb_beats_ucb_on_ten_arms(bernoulli10):
    scenario, kl, ucb = bernoulli10
    T = scenario.horizon
    a, b = kl.at(T), ucb.at(T)
    ok = a <= 0.6 * b
    verdict(1, ok, f"kl-UCB {a:.2f} vs UCB {b:.2f} at T={T}, N={scenario.replications}; need ratio <= 0.6, got {a / b:.3f}")
    assert ok


def test_c02_klucb_near_lower_bound(bernoulli10):
    scenario, kl, _ = bernoulli10
    T = scenario.horizon
    line = lower_bound_line(scenario.means, Divergence.bernoulli())
    a, lb = kl.at(T), float(line(T))
    ok = a <= 1.1 * lb
    verdict(2, ok, f"kl-UCB {a:.2f} vs lower bound {lb:.2f}; need ratio <= 1.1, got {a / lb:.3f}")
    assert ok


def test_c03_finite_time_bound_holds():
    scenario = Scenario((Bernoulli(0.6), Bernoulli(0.5)), horizon=5000, replications=500, master_seed=31)
    policy = KLUCB(Divergence.bernoulli(), ExplorationSchedule(ScheduleKind.LOG_PLUS_3LOGLOG))
    s = run_monte_carlo(policy, scenario, threads=THREADS)
    pulls, se = s.pulls_mean[1], s.pulls_std[1] / math.sqrt(s.replications)
    bound = thm1_bound(5000, 0.5, 0.6, Divergence.bernoulli()).total_bound
    ok = pulls - 3 * se <= bound
    verdict(3, ok, f"mean pulls {pulls:.1f} (se {se:.1f}) vs bound {bound:.1f}")
    assert ok


def test_c04_ucb_is_quadratic_klucb():
    mismatches = 0
    for table in random_streams(404, 100, 0, 500, binary=False):
        a = replay(UCB(), table, 500)
        b = replay(KLUCB(Divergence.quadratic(2.0)), table, 500)
        mismatches += a != b
    ok = mismatches == 0
    verdict(4, ok, f"{mismatches} mismatching action sequences out of 100")
    assert ok


def test_c05_empirical_reduces_to_bernoulli():
    mismatches, worst = 0, 0.0
    for table in random_streams(505, 100, 0, 500):
        kl, emp = KLUCB(Divergence.bernoulli()), EmpiricalKLUCB()
        s1, s2 = kl.new_state(table.shape[0]), emp.new_state(table.shape[0])
        pos = np.zeros(table.shape[0], dtype=int)
        for _ in range(500):
            a1, a2 = kl.select_arm(s1), emp.select_arm(s2)
            if s1.t >= s1.n_arms:
                u1 = kl.indices(s1.pulls, s1.reward_sum, s1.reward_sq_sum, s1.t)
                worst = max(worst, float(np.max(np.abs(u1 - emp.all_indices(s2)))))
            if a1 != a2:
                mismatches += 1
                break
            r = table[a1, pos[a1]]
            pos[a1] += 1
            kl.update(s1, a1, r)
            emp.update(s2, a2, r)
    ok = mismatches == 0 and worst <= 1e-9
    verdict(5, ok, f"{mismatches} mismatching sequences out of 100; largest index gap {worst:.2e}")
    assert ok


def test_c06_kinf_and_el_match_grid_oracle():
    rng = np.random.default_rng(606)
    err_k, err_u = 0.0, 0.0
    for _ in range(1000):
        k = rng.integers(1, 4)
        x = rng.random(k)
        d = EmpiricalDistribution(x, rng.integers(1, 30, k))
        m = d.mean()
        mu = rng.uniform(m, 1.0) if m < 0.999 else 0.9995
        mu = min(max(mu, 1e-3), 0.999)
        eps = math.exp(rng.uniform(math.log(1e-3), 0.0))
        err_k = max(err_k, abs(kinf(d, mu) - grid_kinf(d.values, d.weights, mu)))
        err_u = max(err_u, abs(el_upper_bound(d, eps) - grid_el_bound(d.values, d.weights, eps)))
    ok = max(err_k, err_u) <= 2e-4
    verdict(6, ok, f"largest gap K_inf {err_k:.2e}, EL bound {err_u:.2e} over 1000 laws; need <= 2e-4")
    assert ok


def _beta_like(a, b, atoms=64):
    grid = (np.arange(atoms) + 0.5) / atoms
    w = grid ** (a - 1) * (1 - grid) ** (b - 1)
    return FiniteSupport(tuple(grid), tuple(w / w.sum()))


COVERAGE_SETTINGS = [
    ("Bernoulli(0.5)", Bernoulli(0.5), 50, 0.2),
    ("three atoms", FiniteSupport((0.0, 0.5, 1.0), (0.3, 0.3, 0.4)), 30, 0.25),
    ("Beta(2,5) on 64 atoms", _beta_like(2, 5), 100, 0.1),
    ("Bernoulli(0.2)", Bernoulli(0.2), 200, 0.05),
    ("uniform on 64 atoms", FiniteSupport(tuple(np.linspace(0, 1, 64)), tuple(np.full(64, 1 / 64))), 80, 0.12),
]


def test_c07_coverage():
    rng = np.random.default_rng(707)
    lines, ok = [], True
    for name, arm, n, eps in COVERAGE_SETTINGS:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            res = coverage_check(arm, n, eps, 100_000, rng)
        good = not res.vacuous and res.holds(3.0)
        ok &= good
        lines.append(f"{name} n={n} eps={eps}: {res.empirical:.5f} <= {res.bound:.5f}")
    first = COVERAGE_SETTINGS[0]
    assert first[2] == 50 and first[3] == 0.2
    verdict(7, ok, "; ".join(lines))
    assert ok


def test_c08_deviation():
    res = deviation_check(Divergence.bernoulli(), 0.5, 1000, 8.0, 100_000, np.random.default_rng(808))
    ok = res.empirical <= res.bound
    verdict(8, ok, f"empirical {res.empirical:.5f} vs bound {res.bound:.5f}")
    assert ok


def test_c09_poisson_ordering():
    labels = ["klucb-poisson-logt", "empklucb-logt", "klucb-bernoulli-logt", "ucb"]
    r = regrets("tpoisson6", labels)
    seq = [r[k] for k in labels]
    ok = all(a <= 0.9 * b for a, b in zip(seq, seq[1:])) and seq[0] <= 0.25 * seq[-1]
    verdict(9, ok, ", ".join(f"{k} {v:.1f}" for k, v in zip(labels, seq)) + f"; kl-poisson/UCB {seq[0] / seq[-1]:.3f}")
    assert ok


def test_c10_exponential():
    exp_label = PolicySpec.parse("klucb exponential logt").label
    labels = [exp_label, "empklucb-logt", "ucb"]
    r = regrets("texponential5", labels)
    ucb = r["ucb"]
    ok = r[exp_label] <= 0.5 * ucb and r["empklucb-logt"] <= 0.5 * ucb
    verdict(10, ok, ", ".join(f"{k} {r[k]:.1f}" for k in labels))
    assert ok


PROPERTY_SELECTION = (
    "Properties or bit_identical or logarithmic or monotone_traces or lockstep"
    " or round_trip or bit_stable or sample_mean or sample_range or frozen or nondecreasing"
)


def test_c11_property_suites():
    here = pathlib.Path(__file__).parent
    files = sorted(str(p) for p in here.glob("test_*.py") if p.name != "test_acceptance.py")
    res = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "-k", PROPERTY_SELECTION, *files],
        capture_output=True,
        text=True,
        cwd=here.parent,
    )
    tail = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr.strip()
    ok = res.returncode == 0
    verdict(11, ok, tail)
    assert ok, res.stdout[-3000:]
