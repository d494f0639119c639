"""End-to-end acceptance suite: one test per criterion, each recording a
PASS/FAIL line that is echoed in the pytest terminal summary."""

import math
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from sdaas.composer import PricingParams, node_time, profit_of
from sdaas.core import Drone, Node, ProviderConfig, Swarm
from sdaas.energy import EnergyParams, charge_time, energy_consumed
from sdaas.fcfs import allocate_fcfs
from sdaas.harness import composition_problems, generate_scenario, oracle_optimal
from sdaas.rl import QLearningAllocator, QTable, q_update
from sdaas.schedule import ActionGrid, arrival_slots

from helpers import report

R_VALUES = (10, 20, 30, 40, 50)
SAT_SEEDS = (0, 1, 2)


def swarm_at(levels):
    return Swarm([Drone(i, b) for i, b in enumerate(levels)], 0)


def eligible_total(services, fleet):
    """Summed profit of every request that has at least one usable slot."""
    grid = ActionGrid(services, fleet)
    return math.fsum(grid.services[r].profit for r in grid.request_ids)


# -- shared scenario sets ------------------------------------------------------

@pytest.fixture(scope="module")
def oracle_instances():
    out = []
    for seed in range(50):
        fleet = int(np.random.default_rng(seed).integers(3, 7))
        sc = generate_scenario(n_nodes=40, n_requests=6, fleet_size=fleet,
                               max_packages=min(5, fleet), seed=seed)
        out.append((sc, sc.compose()))
    return out


@pytest.fixture(scope="module")
def contention_instances():
    out = {}
    for seed in range(20):
        for r in R_VALUES:
            sc = generate_scenario(seed=seed, n_requests=r, fleet_size=30)
            out[seed, r] = (sc, sc.compose())
    return out


@pytest.fixture(scope="module")
def saturation_instances():
    out = {}
    for seed in SAT_SEEDS:
        base = generate_scenario(seed=seed)
        total_swarm = sum(r.swarm_size for r in base.requests)
        for fleet in (10, 20, 30, 40, 60, 80, total_swarm):
            sc = base.with_fleet(fleet)
            out[seed, fleet] = (sc, sc.compose())
    return out


# -- criteria ------------------------------------------------------------------

def test_criterion_1_oracle_equivalence(oracle_instances):
    t0 = time.perf_counter()
    ratios = []
    for sc, services in oracle_instances:
        fleet = sc.provider.fleet_size
        assert all(len(arrival_slots(s, 1200.0)) <= 4 for s in services if s.eligible)
        best = oracle_optimal(services, fleet, 1200.0).total_profit
        est = QLearningAllocator(episodes=5000, alpha=0.5, gamma=1.0, encoder="exact",
                                 slot_granularity=1200.0, seed=sc.seed).fit(services, fleet)
        got = est.schedule_.total_profit
        assert est.schedule_.check(services, fleet) == []
        ratios.append(1.0 if best == 0 else got / best)
    seconds = time.perf_counter() - t0
    ratios = np.array(ratios)
    exact = np.mean(np.isclose(ratios, 1.0, rtol=1e-9, atol=0.0))
    ok = exact >= 0.95 and ratios.min() >= 0.95 and seconds < 300
    report(1, ok, f"{len(ratios)} instances, {exact:.0%} equal the optimum, "
                  f"worst ratio {ratios.min():.4f}, {seconds:.0f}s")
    assert ok


def test_criterion_2_rl_beats_fcfs(contention_instances):
    t0 = time.perf_counter()
    rl = {r: [] for r in R_VALUES}
    fcfs = {r: [] for r in R_VALUES}
    for (seed, r), (sc, services) in contention_instances.items():
        fcfs[r].append(allocate_fcfs(services, 30).total_profit)
        est = QLearningAllocator(episodes=5000, seed=seed).fit(services, 30)
        assert est.schedule_.check(services, 30) == []
        rl[r].append(est.schedule_.total_profit)
    seconds = time.perf_counter() - t0
    ok = seconds < 1800
    parts = []
    for r in R_VALUES:
        m_rl, m_fc = np.mean(rl[r]), np.mean(fcfs[r])
        ok &= m_rl >= m_fc - 1e-9
        if r >= 30:
            ok &= m_rl > m_fc + 1e-9
        parts.append(f"r={r} rl {m_rl:.1f} fcfs {m_fc:.1f}")
    report(2, ok, "; ".join(parts) + f"; {seconds:.0f}s")
    assert ok


def test_criterion_3_fleet_saturation(saturation_instances):
    inversions, ok, parts = [], True, []
    for seed in SAT_SEEDS:
        fleets = sorted(f for s, f in saturation_instances if s == seed)
        profits = []
        for fleet in fleets:
            sc, services = saturation_instances[seed, fleet]
            est = QLearningAllocator(episodes=5000, seed=seed).fit(services, fleet)
            profits.append(est.schedule_.total_profit)
        for a, b in zip(profits, profits[1:]):
            if b < a - 1e-9:
                inversions.append((a - b) / a)
        target = eligible_total(saturation_instances[seed, fleets[-1]][1], fleets[-1])
        reached = math.isclose(profits[-1], target, rel_tol=1e-9)
        ok &= reached
        parts.append(f"seed {seed}: {profits[0]:.1f} -> {profits[-1]:.1f} "
                     f"of {target:.1f} (fleet {fleets[-1]})")
    ok &= len(inversions) <= 1 and all(d <= 0.02 for d in inversions)
    report(3, ok, "; ".join(parts) + f"; inversions {len(inversions)}")
    assert ok


@pytest.mark.xfail(strict=True, reason="returns still drift in the last quartile at the "
                   "default epsilon schedule; see README, Known limitations")
def test_criterion_4_convergence():
    sc = generate_scenario(seed=0)
    services = sc.compose()
    budget = 20000
    history = QLearningAllocator(episodes=budget, seed=0).fit(services, 30).reward_history_
    ma = np.convolve(history, np.ones(2000) / 2000, mode="valid")
    final = ma[-1]
    quartile = budget - budget // 4
    # last moving-average point below 99% of the final value (index in episodes)
    below = np.flatnonzero(ma < 0.99 * final)
    settled = int(below[-1]) + 2000 if len(below) else 1999
    tail = history[quartile:]
    fit = stats.linregress(np.arange(len(tail)), tail)
    reached = settled < quartile
    flat = fit.pvalue >= 0.05
    report(4, reached and flat,
           f"moving average within 1% of {final:.1f} from episode {settled} "
           f"(needs < {quartile}); last-quartile slope {fit.slope:.2e}/episode, p={fit.pvalue:.2g}")
    assert reached and flat


def test_criterion_5_runtime_shape():
    fcfs_t, rl_t, n_actions = [], [], []
    QLearningAllocator(episodes=2, seed=0).fit(generate_scenario(seed=0, n_requests=5).compose(), 30)
    for r in R_VALUES:
        services = generate_scenario(seed=0, n_requests=r).compose()
        n_actions.append(len(ActionGrid(services, 30)))
        best = math.inf
        for _ in range(30):
            t0 = time.perf_counter()
            allocate_fcfs(services, 30)
            best = min(best, time.perf_counter() - t0)
        fcfs_t.append(best)
        best = math.inf
        for _ in range(2):
            t0 = time.perf_counter()
            QLearningAllocator(episodes=1000, seed=0).fit(services, 30)
            best = min(best, time.perf_counter() - t0)
        rl_t.append(best)
    fcfs_slope = np.polyfit(np.log(R_VALUES), np.log(fcfs_t), 1)[0]
    rl_slope = np.polyfit(np.log(n_actions), np.log(rl_t), 1)[0]
    min_gap = min(b / a for a, b in zip(fcfs_t, rl_t))
    ok = 0.5 <= fcfs_slope <= 1.5 and min_gap >= 100 and rl_slope < 1.2
    report(5, ok, f"FCFS log-log slope in r {fcfs_slope:.2f}, RL/FCFS time ratio >= {min_gap:.0f}x, "
                  f"RL log-log slope in actions {rl_slope:.2f} ({n_actions[0]}..{n_actions[-1]} actions)")
    assert ok


def test_criterion_6_composition_invariants(oracle_instances, contention_instances,
                                            saturation_instances):
    problems, n_services = [], 0
    groups = (oracle_instances, contention_instances.values(), saturation_instances.values())
    for group in groups:
        for sc, services in group:
            problems += composition_problems(sc, services)
            n_services += sum(s.servable for s in services)
    report(6, not problems, f"{n_services} composed requests, {len(problems)} violations"
                            + (f", first: {problems[0]}" if problems else ""))
    assert not problems


def _sdaas_cmd():
    exe = shutil.which("sdaas")
    return [exe] if exe else [sys.executable, "-m", "sdaas.cli"]


def test_criterion_7_cli_determinism(tmp_path):
    cmd = _sdaas_cmd()
    scenario = tmp_path / "scenario.json"
    subprocess.run(cmd + ["generate", "--seed", "5", "--requests", "20", "-o", str(scenario)],
                   check=True, capture_output=True)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        subprocess.run(cmd + ["allocate", str(scenario), "--seed", "11", "--episodes", "3000",
                              "-o", str(out)], check=True, capture_output=True)
        outs.append(out / "rl")
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("schedule.csv", "reward_history.csv"))
    rows = len((outs[0] / "schedule.csv").read_text().splitlines()) - 1
    report(7, same and rows > 0, f"two runs with --seed 11, {rows} scheduled requests, "
                                 f"CSVs {'identical' if same else 'differ'}")
    assert same and rows > 0


def test_criterion_8_formula_checks():
    cases = {}
    q = QTable(2)
    q_update(q, "s", 0, 10.0, None, alpha=0.1, gamma=0.9, terminal=True)
    cases["q_update terminal"] = q.get("s", 0) == 1.0
    q = QTable(2)
    q_update(q, "s", 1, 0.0, "t", alpha=0.1, gamma=0.9)
    cases["q_update fixed point"] = q.get("s", 1) == 0.0

    hour = EnergyParams(full_charge_time=3600.0)
    big = ProviderConfig(fleet_size=30, source=0, max_swarm_size=5)
    small = ProviderConfig(fleet_size=6, source=0, max_swarm_size=5)
    cases["node_time contended"] = node_time(swarm_at([0.5, 0.7, 0.9]), Node(1, (0, 0), 2),
                                             hour, big) == 7200.0
    cases["node_time one round"] = node_time(swarm_at([0.5, 0.75]), Node(1, (0, 0), 6),
                                             hour, small) == 1800.0
    cases["node_time full swarm"] = node_time(swarm_at([1.0] * 3), Node(1, (0, 0), 1),
                                              hour, big) == 0.0

    cases["charge_time nothing"] = charge_time(Drone(0, 1.0), 1.0, hour) == 0.0
    cases["charge_time 0.4"] = charge_time(Drone(0, 0.4), 1.0, hour) == 2160.0
    cases["charge_time empty"] = charge_time(Drone(0, 0.0), 1.0, hour) == 3600.0

    e = EnergyParams(rate_empty=0.05, payload_factor=1.0)
    cases["energy zero distance"] = energy_consumed(0.0, 2.0, e) == 0.0
    cases["energy empty 1 km"] = energy_consumed(1000.0, 0.0, e) == 0.05
    cases["energy full 2 km"] = energy_consumed(2000.0, 2.5, e) == 0.20

    pricing = PricingParams(revenue_per_package=10.0, cost_per_drone_second=0.001)
    cases["profit 24"] = profit_of(3, 2000.0, pricing) == 24.0
    cases["profit break-even"] = profit_of(3, 10000.0, pricing) == 0.0
    cases["profit linear"] = profit_of(6, 2000.0, pricing) == 2 * profit_of(3, 2000.0, pricing)

    failed = [k for k, v in cases.items() if not v]
    report(8, not failed, f"{len(cases) - len(failed)}/{len(cases)} closed-form examples exact"
                          + (f", failed: {failed}" if failed else ""))
    assert not failed
