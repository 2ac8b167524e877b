"""Second pilot round after teacher sharpening + stream re-parameterization."""
import json
import time
from concurrent.futures import ProcessPoolExecutor

from dmeg.runner import ExperimentConfig, run_baseline_bl, run_dmeg
from dmeg.streams import StreamSpec


def job(name, cfg, fn="dmeg"):
    t0 = time.perf_counter()
    log = run_dmeg(cfg) if fn == "dmeg" else run_baseline_bl(cfg, total_depth=fn)
    el = time.perf_counter() - t0
    f = log.final
    out = {"name": name, "secs": round(el, 1), "type1": f["type1"], "type2": f["type2"],
           "q1": f["quarter_type1"], "q2": f["quarter_type2"],
           "cavg": f["constraint_avg"], "lam": f["lambda"], "p": f["p"]}
    if f.get("expert_type1"):
        out["e1"], out["e2"], out["best"] = f["expert_type1"], f["expert_type2"], f.get("best_expert")
    return out


def main():
    T = 200_000
    stat = lambda seed: StreamSpec(kind="stationary_synthetic", dim=18, T=T, seed=seed,
                                   class_prior=0.65, separation=1.0)
    cd = lambda seed, TT=T: StreamSpec(kind="concept_drift_synthetic", dim=50, T=TT, seed=seed)
    jobs = []
    for g in (0.15, 0.21, 0.3):
        jobs.append((f"stat-g{g}", ExperimentConfig(
            stream=stat(11), hidden_dim=32, depth=6, gamma=g, seed=1, window=25_000), "dmeg"))
        jobs.append((f"cd-g{g}", ExperimentConfig(
            stream=cd(12), hidden_dim=32, depth=6, gamma=g, seed=2, window=25_000), "dmeg"))
    # criterion 6: BE tracking, gamma=0.2, 3 seeds
    for s in (21, 22, 23):
        jobs.append((f"be-seed{s}", ExperimentConfig(
            stream=cd(s, 150_000), hidden_dim=32, depth=6, gamma=0.2,
            seed=s, window=25_000), "dmeg"))
    # criterion 7: equal priors, heavy overlap
    hard = StreamSpec(kind="stationary_synthetic", dim=10, T=100_000, seed=14,
                      class_prior=0.5, separation=0.4)
    jobs.append(("nec-dmeg", ExperimentConfig(
        stream=hard, hidden_dim=32, depth=6, gamma=0.2, seed=4, window=25_000), "dmeg"))
    jobs.append(("nec-bl3", ExperimentConfig(
        stream=hard, hidden_dim=32, depth=6, gamma=0.2, seed=4, window=25_000), 3))
    with ProcessPoolExecutor(max_workers=2) as pool:
        futures = [pool.submit(job, n, c, f) for n, c, f in jobs]
        results = [f.result() for f in futures]
    with open("/root/pkg/pilot2_results.json", "w") as f:
        json.dump(results, f, indent=1)
    for r in results:
        print(json.dumps(r))


if __name__ == "__main__":
    main()
