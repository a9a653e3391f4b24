"""Command-line front end: ``solve``, ``advise``, ``audit`` and ``hull-sample``.

Exit codes for ``solve``: 0 solved and audit passed, 1 configuration error,
2 no usable solution (infeasible, unbounded, iteration limit, failed repair),
3 solved but the audit failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audit import (AuditTolerances, audit_schedule, extract_schedule, hull_containment_sample,
                    schedule_from_csv, schedule_to_csv)
from .caseio import CaseError, load_case
from .ess import HULL_VARIANTS, EssModel
from .grid import Horizon, Network
from .network import NetworkBlockKind, ObjectiveKind
from .problem import (ADVISE_NETWORKS, DEVICE_KINDS, GRID_LEVELS, AssemblyError, advise, assemble,
                      classify, emit_blocks)
from .solvers import SolverOptions, solve

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_AUDIT = 0, 1, 2, 3

log = logging.getLogger("essopt")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    case_path: Path
    ess_model: str = "linear"
    network: str = "dc"
    objective: str = "cost"
    prices_path: Path | None = None
    num_periods: int | None = None
    dt_hours: float | None = None
    terminal_soc: bool = False
    hull_variant: str = "as_printed"
    solver: SolverOptions = field(default_factory=SolverOptions)
    audit_tol: AuditTolerances = field(default_factory=AuditTolerances)
    output_dir: Path = Path(".")
    seed: int = 0
    dump_block: Path | None = None
    dump_problem: Path | None = None

    def __post_init__(self):
        try:
            model = EssModel(self.ess_model)
            net = NetworkBlockKind(self.network)
            ObjectiveKind(self.objective)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if model.needs_voltage and net is not NetworkBlockKind.BRANCH_FLOW_SOCP:
            raise ConfigError(f"--ess-model {model.value} needs --network distflow "
                              f"(it uses bus voltages); got --network {net.value}")
        if (self.objective == "arbitrage") != (self.prices_path is not None):
            raise ConfigError("--prices is required with --objective arbitrage and only allowed there")
        if self.hull_variant not in HULL_VARIANTS:
            raise ConfigError(f"--hull-variant must be one of {HULL_VARIANTS}")


def read_prices(path: Path, num_periods: int) -> list[float]:
    """Two-column CSV ``period,price`` with a header row."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read prices: {exc}") from None
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigError("prices file is empty")
    header, body = rows[0], rows[1:]
    try:
        float(header[0])
        raise ConfigError("prices file needs a header row (period,price)")
    except ValueError:
        pass
    prices: dict[int, float] = {}
    for i, r in enumerate(body, start=2):
        if len(r) != 2:
            raise ConfigError(f"prices line {i}: expected 2 columns")
        try:
            prices[int(r[0])] = float(r[1])
        except ValueError:
            raise ConfigError(f"prices line {i}: not a number") from None
    if sorted(prices) != list(range(num_periods)):
        raise ConfigError(f"prices must cover periods 0..{num_periods - 1} exactly once")
    return [prices[t] for t in range(num_periods)]


def apply_horizon(net: Network, num_periods: int | None, dt_hours: float | None) -> Network:
    h = net.horizon
    T = h.num_periods if num_periods is None else num_periods
    try:
        new_h = Horizon(T, h.dt_hours if dt_hours is None else dt_hours)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    P, Q = net.loads_p(), net.loads_q()
    if T <= h.num_periods:
        P, Q = P[:, :T], Q[:, :T]
    elif np.all(P == P[:, :1]) and np.all(Q == Q[:, :1]):
        P, Q = np.repeat(P[:, :1], T, axis=1), np.repeat(Q[:, :1], T, axis=1)
    else:
        raise ConfigError(f"case has {h.num_periods} periods of time-varying load; cannot extend to {T}")
    return net.replace(horizon=new_h, load_active=P.tolist(), load_reactive=Q.tolist())


def _summary(cfg: RunConfig, problem_class: str, sol, audit_ok: bool | None) -> str:
    lines = [f"case {Path(cfg.case_path).name}",
             f"ess_model {cfg.ess_model}",
             f"network {cfg.network}",
             f"objective_kind {cfg.objective}",
             f"problem_class {problem_class}",
             f"status {sol.status}",
             f"objective {sol.objective!r}"]
    if cfg.objective == "arbitrage" and np.isfinite(sol.objective):
        lines.append(f"profit {-sol.objective!r}")
    lines.append(f"iterations {sol.stats.get('iterations', 0)}")
    if "nodes" in sol.stats:
        lines.append(f"nodes {sol.stats['nodes']}")
    if "rounds" in sol.stats:
        lines.append(f"penalty_rounds {sol.stats['rounds']}")
    for key in ("bnb_gap", "complementarity", "max_loss_gap", "relaxation_objective"):
        if key in sol.gaps:
            lines.append(f"{key} {sol.gaps[key]!r}")
    if audit_ok is not None:
        lines.append(f"audit {'pass' if audit_ok else 'fail'}")
    if sol.message:
        lines.append(f"message {sol.message}")
    return "\n".join(lines) + "\n"


def cmd_solve(cfg: RunConfig) -> int:
    try:
        net = load_case(cfg.case_path)
    except (OSError, CaseError) as exc:
        raise ConfigError(f"case: {exc}") from None
    net = apply_horizon(net, cfg.num_periods, cfg.dt_hours)
    prices = read_prices(cfg.prices_path, net.horizon.num_periods) if cfg.prices_path else None
    try:
        nblk, blocks, obj = emit_blocks(net, cfg.ess_model, cfg.network, cfg.objective, prices,
                                        terminal_soc=cfg.terminal_soc, hull_variant=cfg.hull_variant)
        p = assemble(obj, nblk, blocks, options=dict(hull_variant=cfg.hull_variant,
                                                     terminal_soc=cfg.terminal_soc))
    except (AssemblyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.dump_block:
        Path(cfg.dump_block).write_text("".join(b.dump() for b in (nblk, *blocks)), encoding="utf-8")
    if cfg.dump_problem:
        Path(cfg.dump_problem).write_text(p.dump(), encoding="utf-8")
    pclass = classify(p).value
    sol = solve(p, cfg.solver)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not sol.ok:
        (out / "summary.txt").write_text(_summary(cfg, pclass, sol, None), encoding="utf-8")
        print(f"status {sol.status}: {sol.message}", file=sys.stderr)
        return EXIT_INFEASIBLE
    sched = extract_schedule(p, sol)
    report = audit_schedule(sched, net.devices, net.horizon, cfg.audit_tol, terminal_soc=cfg.terminal_soc)
    (out / "schedule.csv").write_text(schedule_to_csv(sched), encoding="utf-8")
    (out / "audit.csv").write_text(report.to_csv(), encoding="utf-8")
    summary = _summary(cfg, pclass, sol, report.passed)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return EXIT_OK if report.passed else EXIT_AUDIT


def cmd_advise(network: str, level: str, device: str) -> int:
    rec = advise(network, level, device)
    print(rec.headline())
    print(f"problem class: {rec.problem_class}")
    print(rec.rationale)
    return EXIT_OK


def cmd_audit(schedule_path: Path, case_path: Path, tol: AuditTolerances, terminal_soc: bool) -> int:
    try:
        net = load_case(case_path)
        sched = schedule_from_csv(Path(schedule_path).read_text(encoding="utf-8"), net.base_mva)
        report = audit_schedule(sched, net.devices, net.horizon, tol, terminal_soc=terminal_soc)
    except (OSError, CaseError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_AUDIT


def cmd_hull_sample(case_path: Path, device: int, samples: int, seed: int, variant: str) -> int:
    try:
        net = load_case(case_path)
        dev = net.devices[device]
        rep = hull_containment_sample(dev, net.bus(dev.bus), samples, seed, base_mva=net.base_mva,
                                      variant=variant)
    except (OSError, CaseError, IndexError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    sys.stdout.write(rep.to_text())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="essopt", description="Storage-aware optimal power flow toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="build, solve and audit one problem")
    s.add_argument("--case", required=True, type=Path)
    s.add_argument("--ess-model", default="linear", choices=[m.value for m in EssModel])
    s.add_argument("--network", default="dc", choices=[k.value for k in NetworkBlockKind])
    s.add_argument("--objective", default="cost", choices=[k.value for k in ObjectiveKind])
    s.add_argument("--prices", type=Path)
    s.add_argument("--num-periods", type=int)
    s.add_argument("--dt-hours", type=float)
    s.add_argument("--terminal-soc", action="store_true")
    s.add_argument("--hull-variant", default="as_printed", choices=HULL_VARIANTS)
    s.add_argument("--output-dir", type=Path, default=Path("."))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--feasibility-tol", type=float, default=1e-8)
    s.add_argument("--optimality-tol", type=float, default=1e-8)
    s.add_argument("--max-iterations", type=int, default=200)
    s.add_argument("--audit-tol", type=float, help="one absolute tolerance for every audit family")
    s.add_argument("--dump-block", type=Path, help="write every constraint block as text rows")
    s.add_argument("--dump-problem", type=Path, help="write the assembled problem as text rows")

    a = sub.add_parser("advise", help="recommend storage models")
    a.add_argument("--network", default="ac", choices=ADVISE_NETWORKS)
    a.add_argument("--level", required=True, choices=GRID_LEVELS)
    a.add_argument("--device", default="generic", choices=DEVICE_KINDS)

    u = sub.add_parser("audit", help="audit a schedule CSV against a case")
    u.add_argument("--schedule", required=True, type=Path)
    u.add_argument("--case", required=True, type=Path)
    u.add_argument("--tol", type=float, help="one absolute tolerance for every family")
    u.add_argument("--terminal-soc", action="store_true")

    h = sub.add_parser("hull-sample", help="sample the loss surface and test the hull rows")
    h.add_argument("--case", required=True, type=Path)
    h.add_argument("--device", type=int, default=0)
    h.add_argument("--samples", type=int, default=100000)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--variant", default="as_printed", choices=HULL_VARIANTS)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            try:
                tol = AuditTolerances.uniform(args.audit_tol) if args.audit_tol is not None else AuditTolerances()
                opts = SolverOptions(feasibility_tol=args.feasibility_tol, optimality_tol=args.optimality_tol,
                                     max_ip_iterations=args.max_iterations, random_seed=args.seed)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            cfg = RunConfig(args.case, args.ess_model, args.network, args.objective, args.prices,
                            args.num_periods, args.dt_hours, args.terminal_soc, args.hull_variant,
                            opts, tol, args.output_dir, args.seed, args.dump_block, args.dump_problem)
            return cmd_solve(cfg)
        if args.command == "advise":
            return cmd_advise(args.network, args.level, args.device)
        if args.command == "audit":
            try:
                tol = AuditTolerances.uniform(args.tol) if args.tol is not None else AuditTolerances()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            return cmd_audit(args.schedule, args.case, tol, args.terminal_soc)
        return cmd_hull_sample(args.case, args.device, args.samples, args.seed, args.variant)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
