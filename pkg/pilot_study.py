"""Pilot run: 25 reps of each acceptance study cell, printing the aggregates."""
import json
import time

from splam.simulation import SimConfig, run_study

REPS = 25

def show(tag, result, keys):
    for agg in result.aggregates:
        picked = {k: round(agg[k], 4) for k in keys if k in agg}
        print(f"{tag} {agg['method']:6s} failed={agg['failed']}", json.dumps(picked))

t0 = time.time()
c0 = run_study(SimConfig(n=200, contamination="c0", replications=REPS, seed=0),
               with_oracle=True)
print(f"[c0 both+oracle] {time.time()-t0:.1f}s")
show("c0", c0, ["mean_c_linear", "mean_c_additive", "mean_cf_complete",
                "mean_oracle_gmse", "mean_gmse", "mean_rase"])

t0 = time.time()
c5 = run_study(SimConfig(n=200, contamination="c5", replications=REPS, seed=0),
               with_oracle=False)
print(f"[c5 both] {time.time()-t0:.1f}s")
show("c5", c5, ["mean_c_linear", "mean_cf_complete"])

t0 = time.time()
c4 = run_study(SimConfig(n=200, contamination="c4", replications=REPS, seed=0),
               with_oracle=False)
print(f"[c4 both] {time.time()-t0:.1f}s")
show("c4", c4, ["mean_gmse", "mean_rase"])

t0 = time.time()
c7 = run_study(SimConfig(n=200, contamination="c7", replications=REPS, seed=0),
               with_oracle=False)
print(f"[c7 both] {time.time()-t0:.1f}s")
show("c7", c7, ["trimmed_gmse", "mean_gmse"])
