"""
Operating region of the censored filter
=======================================

Sweep the censoring threshold on the default chain network and watch the
transmission rate fall while the tracking error grows. Uses 5 seeds and
100 steps so it finishes in about a minute.
"""

from pathlib import Path

from voifilter import harness

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

s = harness.load_scenario(CONFIGS / "default.yaml")
s = harness.with_overrides(s, runs=5, steps=100)

# identical seeds at every threshold, so rows are directly comparable
rows = harness.sweep_gamma(s)

print(f"{'gamma':>6} {'tx rate':>8} {'error [m]':>10}")
for r in rows:
    print(f"{r.gamma:6g} {r.mean_tx_rate:8.3f} {r.mean_err_m:10.1f}")

# the same table as the CLI writes it
print()
print(harness.sweep_csv(rows), end="")
