"""Command-line entry point.

Subcommands ``simulate``, ``sweep``, ``mission``, ``flow`` and ``validate``.
Outputs are only written once every run has finished, so a failing
invocation never leaves partial files behind.

Exit codes: 0 success, 1 usage or config error, 2 validation failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import checks, harness
from .harness import ConfigError, MissionEntry

EXIT_OK, EXIT_USAGE, EXIT_VALIDATE, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _gamma_grid(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("gamma grid is empty")
    return vals


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="voifilter", description="VoI-censored distributed rolling-window MAP filter")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="scenario YAML file")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--seed", type=_seed, help="override run.seed")
        sp.add_argument("--runs", type=int, help="override run.runs")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")

    sp = sub.add_parser("simulate", help="run the scenario and write trace.csv")
    common(sp)
    sp.add_argument("--gamma", type=float, help="override filter.gamma")

    sp = sub.add_parser("sweep", help="censoring-threshold sweep, writes sweep.csv")
    common(sp)
    sp.add_argument("--gamma-grid", type=_gamma_grid, help="comma-separated thresholds, ascending")
    sp.add_argument("--traces", action="store_true", help="also write trace_gamma_<k>.csv per threshold")

    sp = sub.add_parser("mission", help="mission-aware vs mission-agnostic on the first configured mission")
    common(sp)
    sp.add_argument("--gamma", type=float, help="override filter.gamma")

    sp = sub.add_parser("flow", help="per-node transmission rates for each configured mission placement")
    common(sp)
    sp.add_argument("--gamma", type=float, help="override filter.gamma")

    sp = sub.add_parser("validate", help="run the oracle cross-checks")
    sp.add_argument("--config", help="optional scenario file to validate as well")
    sp.add_argument("--quiet", action="store_true")
    return p


def _write_all(out_dir: Path, files: dict[str, str]):
    """Write every file or none: stage in a temp dir, then rename into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".voifilter-") as tmp:
        for name, text in files.items():
            path = Path(tmp) / name
            with open(path, "w", newline="") as fh:
                fh.write(text)
            staged.append((path, out_dir / name))
        for src, dst in staged:
            os.replace(src, dst)


def _scenario(args) -> harness.Scenario:
    if not Path(args.config).is_file():
        raise ConfigError("--config", f"no such file: {args.config}")
    s = harness.load_scenario(args.config)
    return harness.with_overrides(s, seed=args.seed, runs=args.runs, gamma=getattr(args, "gamma", None))


def _say(args, msg):
    if not args.quiet:
        print(msg)


def cmd_simulate(args) -> int:
    s = _scenario(args)
    metrics, traces = harness.run_scenario(s)
    _write_all(Path(args.out), {"trace.csv": harness.trace_csv(traces)})
    _say(args, f"mean position error {metrics.mean_err:.2f} m, network transmission rate {metrics.network_rate:.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    s = _scenario(args)
    grid = args.gamma_grid or (list(s.gamma_grid) if s.gamma_grid else None)
    if not grid:
        raise ConfigError("filter.gamma_grid", "no grid in config and no --gamma-grid given")
    if grid != sorted(grid) or any(g < 0 for g in grid):
        raise ConfigError("--gamma-grid", "values must be non-negative and ascending")
    files = {}
    if args.traces:
        rows = []
        for k, g in enumerate(grid):
            traces = harness.run_traces(s, g)
            rows.append(harness.sweep_row(g, traces))
            files[f"trace_gamma_{k}.csv"] = harness.trace_csv(traces)
    else:
        rows = harness.sweep_gamma(s, grid)
    files["sweep.csv"] = harness.sweep_csv(rows)
    _write_all(Path(args.out), files)
    for r in rows:
        _say(args, f"gamma {r.gamma:g}: error {r.mean_err_m:.2f} m, rate {r.mean_tx_rate:.3f}")
    return EXIT_OK


def cmd_mission(args) -> int:
    s = _scenario(args)
    if not s.missions:
        raise ConfigError("missions", "the mission subcommand needs at least one mission")
    m = s.missions[0]
    cmp = harness.mission_experiment(s, m.owner, m.requirement_m)
    _write_all(Path(args.out), {
        "trace_aware.csv": harness.trace_csv(cmp.aware_traces),
        "trace_agnostic.csv": harness.trace_csv(cmp.agnostic_traces),
    })
    aware, agn = cmp.final_running("aware"), cmp.final_running("agnostic")
    both = sum(a and b for a, b in cmp.verdicts())
    print(f"owner {m.owner}, requirement {m.requirement_m:g} m")
    print(f"mission-aware:    final running-average error {aware.mean():.2f} m, "
          f"satisfied in {int((aware <= m.requirement_m).sum())}/{len(aware)} runs")
    print(f"mission-agnostic: final running-average error {agn.mean():.2f} m, "
          f"satisfied in {int((agn <= m.requirement_m).sum())}/{len(agn)} runs")
    print(f"runs where only the mission-aware filter meets the requirement: {both}/{len(aware)}")
    return EXIT_OK


def cmd_flow(args) -> int:
    s = _scenario(args)
    if not s.missions:
        raise ConfigError("missions", "the flow subcommand needs at least one mission placement")
    placements = {f"node{m.owner}": MissionEntry(m.owner, m.requirement_m) for m in s.missions}
    rows, _ = harness.flow_analysis(s, placements)
    _write_all(Path(args.out), {"flow.csv": harness.flow_csv(rows)})
    seen = set()
    for r in rows:
        if r.placement_label not in seen:
            seen.add(r.placement_label)
            _say(args, f"{r.placement_label}: network transmission rate {r.network_rate:.3f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError("--config", f"no such file: {args.config}")
        harness.load_scenario(args.config)
        _say(args, f"config {args.config}: ok")
    results = checks.run_checks()
    for r in results:
        _say(args, r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATE


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "mission": cmd_mission,
    "flow": cmd_flow,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
