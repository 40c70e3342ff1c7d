"""
Where a mission sits changes how much the network talks
=======================================================

The same accuracy requirement is placed first on a leaf node hanging off a
star, then on the hub. The leaf has a single neighbor, so meeting its
requirement drags more traffic through the network.
"""

from pathlib import Path

from voifilter import harness

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

s = harness.with_overrides(harness.load_scenario(CONFIGS / "flow.yaml"), runs=5)
leaf, hub = s.missions
rows, per_run = harness.flow_analysis(s, {"leaf": leaf, "hub": hub})

for label in ("leaf", "hub"):
    rates = {r.node: r.tx_rate for r in rows if r.placement_label == label}
    shown = " ".join(f"{i}:{v:.2f}" for i, v in rates.items())
    print(f"mission on {label:>4}: per-node rates {shown}, network {sum(rates.values()) / len(rates):.3f}")
