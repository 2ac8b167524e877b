"""Pilot runs to calibrate acceptance configurations (not part of the package)."""
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from dmeg.hedge import constraint_certificate
from dmeg.runner import ExperimentConfig, run_baseline_bl, run_dmeg
from dmeg.streams import StreamSpec


def stationary(T, seed=0, sep=0.8, prior=0.5, dim=18):
    return StreamSpec(kind="stationary_synthetic", dim=dim, T=T, seed=seed,
                      class_prior=prior, separation=sep)


def drift(T, seed=0, dim=50):
    return StreamSpec(kind="concept_drift_synthetic", dim=dim, T=T, seed=seed)


def job(name, cfg, fn="dmeg"):
    t0 = time.perf_counter()
    if fn == "dmeg":
        log = run_dmeg(cfg)
    else:
        log = run_baseline_bl(cfg, total_depth=fn)
    el = time.perf_counter() - t0
    f = log.final
    out = {
        "name": name, "secs": round(el, 1),
        "type1": f["type1"], "type2": f["type2"],
        "q1": f["quarter_type1"], "q2": f["quarter_type2"],
        "cavg": f["constraint_avg"], "lam": f["lambda"],
        "p": f["p"],
    }
    if f.get("expert_type1"):
        out["e1"] = f["expert_type1"]
        out["e2"] = f["expert_type2"]
        out["best"] = f.get("best_expert")
    return out


def main():
    T = 200_000
    jobs = []
    # A/B: sweep ends on both streams, both conditioning modes
    for mode in ("prior_weighted", "class_normalized"):
        for g in (0.15, 0.3):
            jobs.append((f"stat-{mode}-g{g}", ExperimentConfig(
                stream=stationary(T, seed=11), hidden_dim=32, depth=6, gamma=g,
                conditioning=mode, seed=1, window=25_000), "dmeg"))
            jobs.append((f"cd-{mode}-g{g}", ExperimentConfig(
                stream=drift(T, seed=12), hidden_dim=32, depth=6, gamma=g,
                conditioning=mode, seed=2, window=25_000), "dmeg"))
    # C: certificate run, theorem rates, artificial expert, depth 4
    for lm in (1.0, 10.0):
        cfg = ExperimentConfig(
            stream=stationary(T, seed=13), hidden_dim=32, depth=4, gamma=0.2,
            rates_mode="theorem", lambda_max=lm, artificial_expert=True,
            seed=3, window=25_000)
        jobs.append((f"cert-lmax{lm}", cfg, "dmeg"))
    # D: constraint-necessity stream (imbalanced, weak separation)
    hard = StreamSpec(kind="stationary_synthetic", dim=10, T=100_000, seed=14,
                      class_prior=0.25, separation=0.75)
    jobs.append(("necessity-dmeg", ExperimentConfig(
        stream=hard, hidden_dim=32, depth=6, gamma=0.2, seed=4, window=25_000), "dmeg"))
    jobs.append(("necessity-bl3", ExperimentConfig(
        stream=hard, hidden_dim=32, depth=6, gamma=0.2, seed=4, window=25_000), 3))
    jobs.append(("necessity-bl8", ExperimentConfig(
        stream=hard, hidden_dim=32, depth=6, gamma=0.2, seed=4, window=25_000), 8))
    # E: best-expert tracking on drift, 3 seeds
    for s in (21, 22, 23):
        jobs.append((f"be-seed{s}", ExperimentConfig(
            stream=drift(150_000, seed=s), hidden_dim=32, depth=6, gamma=0.2,
            seed=s, window=25_000), "dmeg"))

    with ProcessPoolExecutor(max_workers=2) as pool:
        futures = [pool.submit(job, n, c, f) for n, c, f in jobs]
        results = [f.result() for f in futures]
    cert5 = constraint_certificate(4.0, 4.0, T, 4, 0.2)      # lmax=1 -> G1=4
    cert40 = constraint_certificate(40.0, 4.0, T, 4, 0.2)    # lmax=10 -> G1=40
    print("certificate lmax=1:", cert5, " lmax=10:", cert40)
    with open("/root/pkg/pilot_results.json", "w") as f:
        json.dump(results, f, indent=1)
    for r in results:
        print(json.dumps(r))


if __name__ == "__main__":
    main()
