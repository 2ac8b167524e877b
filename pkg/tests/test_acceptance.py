"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Mathematical criteria (1-3) run in seconds; the behavioral reproductions
(4-9) drive full online runs on synthetic streams and together take tens of
minutes.  Run with `pytest tests/test_acceptance.py -v -s`.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from dmeg.hedge import (DualVariable, ExpertWeights, combine, constraint_certificate,
                        eg_update_experts, eg_update_lambda, theorem_rates)
from dmeg.net import backward, forward, init_network
from dmeg.objectives import NPObjective, instantaneous_lagrangian
from dmeg.runner import (ExperimentConfig, emit_report, extract_best_expert,
                         run_baseline_bl, run_dmeg, run_gamma_sweep)
from dmeg.streams import StreamSpec

WORKERS = 2
GAMMA_GRID = [0.15, 0.18, 0.21, 0.24, 0.27, 0.3]


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# shared heavy runs (computed once per session)


def stationary_sweep_config() -> ExperimentConfig:
    return ExperimentConfig(
        stream=StreamSpec(kind="stationary_synthetic", dim=18, T=500_000, seed=101,
                          class_prior=0.65, separation=1.0),
        hidden_dim=32, depth=6, gamma=0.2, eta=0.01, eta_lambda=0.01,
        learning_rate=0.001, momentum=0.9, gamma_sweep=list(GAMMA_GRID),
        seed=51, window=50_000)


def drift_sweep_config() -> ExperimentConfig:
    return ExperimentConfig(
        stream=StreamSpec(kind="concept_drift_synthetic", dim=50, T=500_000, seed=102),
        hidden_dim=32, depth=6, gamma=0.2, eta=0.01, eta_lambda=0.01,
        learning_rate=0.001, momentum=0.9, gamma_sweep=list(GAMMA_GRID),
        seed=52, window=50_000)


@pytest.fixture(scope="module")
def sweep_results():
    out = {}
    for name, cfg in (("stationary", stationary_sweep_config()),
                      ("concept_drift", drift_sweep_config())):
        t0 = time.perf_counter()
        out[name] = run_gamma_sweep(cfg, workers=WORKERS)
        print(f"\n[sweep {name}] {time.perf_counter() - t0:.0f}s")
    return out


def certificate_config() -> ExperimentConfig:
    return ExperimentConfig(
        stream=StreamSpec(kind="stationary_synthetic", dim=18, T=200_000, seed=103,
                          class_prior=0.5, separation=0.8),
        hidden_dim=32, depth=4, gamma=0.2, rates_mode="theorem",
        lambda_max=10.0, artificial_expert=True, seed=53, window=25_000)


# ---------------------------------------------------------------------------
# criterion 1: gradient exactness


def test_criterion_1_gradient_exactness():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    configs = 0
    while configs < 100:
        depth = int(rng.integers(1, 5))          # depth <= 4
        width = int(rng.integers(2, 17))         # width <= 16
        in_dim = int(rng.integers(2, 8))
        net = init_network(in_dim, width, depth, seed=int(rng.integers(1 << 30)))
        x = rng.standard_normal(in_dim)
        y = int(rng.integers(0, 2))
        lam = float(rng.uniform(0.0, 4.0))
        gamma = float(rng.uniform(0.1, 0.4))
        obj = NPObjective(gamma=gamma, lambda_max=5.0)
        p = ExpertWeights(depth, eta=0.01)
        v = rng.exponential(size=depth)
        p.p = v / v.sum()
        trace = forward(net, x)
        # central differences need a differentiable neighbourhood: skip draws
        # sitting on a relu/clamp/clip kink
        if any(a.size and np.abs(a).min() < 1e-3 for a in trace.layer_activations):
            continue
        if np.any(np.abs(trace.head_logits) > 28.0):
            continue
        b = combine(p, trace.expert_probs)
        bce = -math.log(b) if y == 1 else -math.log(1.0 - b)
        if abs(bce - obj.loss_clip) < 1e-2:
            continue
        grads = backward(net, trace, p, lam, y, obj)

        def loss_at(params_flat):
            net.params[:] = params_flat
            tr = forward(net, x)
            return instantaneous_lagrangian(combine(p, tr.expert_probs), lam, y, obj)

        base = net.params.copy()
        h = 1e-5
        idx = rng.choice(net.num_params(), size=min(30, net.num_params()), replace=False)
        for i in idx:
            pert = base.copy()
            pert[i] = base[i] + h
            up = loss_at(pert)
            pert[i] = base[i] - h
            down = loss_at(pert)
            fd = (up - down) / (2 * h)
            rel = abs(grads[i] - fd) / max(1.0, abs(fd), abs(grads[i]))
            worst = max(worst, rel)
        net.params[:] = base
        configs += 1
    elapsed = time.perf_counter() - t0
    report("1 (gradient exactness)",
           worst < 1e-6 and elapsed < 10.0,
           f"100 configs, max relative error {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: expert regret bound


def test_criterion_2_eg_regret():
    n, T, G1 = 10, 10_000, 1.0
    eta = math.sqrt(math.log(n) / T) / G1
    bound = 2 * G1 * math.sqrt(math.log(n) / T)
    t0 = time.perf_counter()
    worst = -math.inf
    violations = 0
    for seed in range(20):
        rng = np.random.default_rng(3000 + seed)
        grads = rng.uniform(0.0, 1.0, size=(T, n))
        w = ExpertWeights(n, eta=eta)
        incurred = 0.0
        for t in range(T):
            incurred += float(w.p @ grads[t])
            eg_update_experts(w, grads[t])
        regret = incurred / T - grads.sum(axis=0).min() / T
        worst = max(worst, regret)
        violations += regret > bound
    elapsed = time.perf_counter() - t0
    report("2 (EG regret)",
           violations == 0 and elapsed < 10.0,
           f"20 seeds, worst average regret {worst:.5f} vs bound {bound:.5f}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 3: dual-update oracle and simplex preservation


def test_criterion_3_dual_oracle():
    rng = np.random.default_rng(77)
    lam_max, eta_lam = 7.0, 0.02
    d = DualVariable(lambda_max=lam_max, eta_lambda=eta_lam)
    total = 0.0
    max_err = 0.0
    ok_range = True
    for _ in range(100_000):
        g = float(rng.uniform(-4.0, 4.0))
        total += g
        eg_update_lambda(d, g)
        expected = lam_max / (1.0 + math.exp(-eta_lam * total))
        max_err = max(max_err, abs(d.lam - expected))
        ok_range &= 0.0 <= d.lam <= lam_max
    w = ExpertWeights(6, eta=0.3)
    max_sum_err = 0.0
    for _ in range(100_000):
        eg_update_experts(w, rng.uniform(-2.0, 2.0, size=6))
        max_sum_err = max(max_sum_err, abs(float(w.p.sum()) - 1.0))
        if np.any(w.p < 0.0):
            ok_range = False
    report("3 (dual oracle + simplex)",
           max_err <= 1e-12 and ok_range and max_sum_err <= 1e-12,
           f"dual error {max_err:.2e}, simplex sum error {max_sum_err:.2e}")


# ---------------------------------------------------------------------------
# criterion 4: Theorem-rate constraint certificate


def test_criterion_4_certificate():
    cfg = certificate_config()
    obj = cfg.make_objective()
    cert = constraint_certificate(obj.G1, obj.G2, cfg.stream.T, cfg.depth, cfg.gamma)
    t0 = time.perf_counter()
    log = run_dmeg(cfg)
    elapsed = time.perf_counter() - t0
    avg = log.final["constraint_avg"]
    report("4 (Theorem certificate)",
           avg <= cert,
           f"running avg constraint surrogate {avg:.4f} <= certificate {cert:.4f} "
           f"(zero tolerance), {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 5: gamma-sweep stage-wise control


def test_criterion_5_gamma_sweep_control(sweep_results):
    lines = []
    ok = True
    for name, logs in sweep_results.items():
        for log in logs:
            limit = log.gamma + 0.03
            for q, v in enumerate(log.final["quarter_type1"]):
                if not v <= limit:
                    ok = False
                    lines.append(f"{name} gamma={log.gamma:g} Q{q+1} type1={v:.3f} > {limit:.3f}")
            lines.append(f"{name} g={log.gamma:g} quarters="
                         + ",".join(f"{v:.3f}" for v in log.final["quarter_type1"]))
    report("5 (gamma-sweep stage control)", ok, "; ".join(lines[:14]))


# ---------------------------------------------------------------------------
# criterion 6: best-expert tracking


def _be_run(seed: int):
    cfg = ExperimentConfig(
        stream=StreamSpec(kind="concept_drift_synthetic", dim=50, T=150_000, seed=seed),
        hidden_dim=32, depth=6, gamma=0.2, eta=0.01, eta_lambda=0.01,
        learning_rate=0.001, seed=seed, window=25_000)
    return run_dmeg(cfg)


def test_criterion_6_best_expert_tracking():
    details = []
    ok = True
    with ProcessPoolExecutor(max_workers=WORKERS) as pool:
        logs = list(pool.map(_be_run, [201, 202, 203]))
    for seed, log in zip([201, 202, 203], logs):
        best = extract_best_expert(log, gamma=0.2)
        assert best["feasible"], f"seed {seed}: no feasible expert"
        d1 = abs(log.final["type1"] - best["type1"])
        d2 = abs(log.final["type2"] - best["type2"])
        ok &= d1 <= 0.02 and d2 <= 0.02
        details.append(f"seed {seed}: |dI|={d1:.3f} |dII|={d2:.3f} (expert {best['expert']})")
    report("6 (best-expert tracking)", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 7: constraint necessity


def test_criterion_7_constraint_necessity():
    # equal priors, separation 0.4: the unconstrained optimum's conditional
    # error on each class is Phi(-0.4) = 0.345 > 0.3 by construction
    sep = 0.4
    unconstrained_type1 = 0.5 * math.erfc(sep / math.sqrt(2.0))
    assert unconstrained_type1 > 0.3
    stream = StreamSpec(kind="stationary_synthetic", dim=10, T=100_000, seed=104,
                        class_prior=0.5, separation=sep)
    cfg = ExperimentConfig(stream=stream, hidden_dim=32, depth=6, gamma=0.2,
                           seed=54, window=25_000)
    dmeg_log = run_dmeg(cfg)
    bl_log = run_baseline_bl(cfg, total_depth=3)
    ok = bl_log.final["type1"] > 0.2 and dmeg_log.final["type1"] <= 0.2 + 0.03
    report("7 (constraint necessity)", ok,
           f"unconstrained optimum type1 {unconstrained_type1:.3f} > 0.3; "
           f"BL type1 {bl_log.final['type1']:.3f} > 0.2; "
           f"DMEG type1 {dmeg_log.final['type1']:.3f} <= 0.23")


# ---------------------------------------------------------------------------
# criterion 8: trade-off monotonicity


def test_criterion_8_tradeoff_monotonicity(sweep_results):
    details = []
    ok = True
    for name, logs in sweep_results.items():
        lo = next(l for l in logs if l.gamma == GAMMA_GRID[0])
        hi = next(l for l in logs if l.gamma == GAMMA_GRID[-1])
        ok &= lo.final["type2"] >= hi.final["type2"]
        details.append(f"{name}: type2({GAMMA_GRID[0]})={lo.final['type2']:.3f} >= "
                       f"type2({GAMMA_GRID[-1]})={hi.final['type2']:.3f}")
    report("8 (trade-off monotonicity)", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 9: determinism and metric identity


def test_criterion_9_determinism_and_metric_identity(tmp_path):
    cfg = replace(certificate_config(),
                  stream=replace(certificate_config().stream, T=50_000),
                  window=10_000)
    logs = []
    for d in ("first", "second"):
        log = run_dmeg(cfg)
        emit_report([(cfg, log)], str(tmp_path / d))
        logs.append(log)
    tag = f"dmeg_g{cfg.gamma:g}_s{cfg.seed}"
    same_csv = ((tmp_path / "first" / f"{tag}_trajectory.csv").read_bytes()
                == (tmp_path / "second" / f"{tag}_trajectory.csv").read_bytes())
    same_json = ((tmp_path / "first" / f"{tag}_summary.json").read_bytes()
                 == (tmp_path / "second" / f"{tag}_summary.json").read_bytes())

    # independent counting pass over the committed prediction log
    log = logs[0]
    identical = True
    prev = 0
    for rec in log.windows:
        err_c = cnt_c = err_o = cnt_o = 0
        for yy, pp in zip(log.y[prev:rec.round].tolist(),
                          log.yhat[prev:rec.round].tolist()):
            if yy == cfg.constraint_class:
                cnt_c += 1
                err_c += yy != pp
            else:
                cnt_o += 1
                err_o += yy != pp
        t1 = err_c / cnt_c if cnt_c else math.nan
        t2 = err_o / cnt_o if cnt_o else math.nan
        if not (rec.type1 == t1 and rec.type2 == t2):
            identical = False
        prev = rec.round
    report("9 (determinism + metric identity)",
           same_csv and same_json and identical,
           f"trajectory bytes equal: {same_csv}; summaries equal: {same_json}; "
           f"windowed recount identical: {identical}")
