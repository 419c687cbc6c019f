#!/usr/bin/env python3
"""Smoke test for the ptctr_py extension module.

Build the module first, then run this script from anywhere:

    cargo build -p ptctr-py --release
    python3 python/smoke_test.py

The script locates the compiled shared library inside the workspace's
target/ directory (preferring release over debug) and loads it directly, so
no packaging step or third-party tooling is needed.
"""

from __future__ import annotations

import importlib.machinery
import importlib.util
import math
import sys
from pathlib import Path


def load_module():
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libptctr_py.so", "ptctr_py.so", "libptctr_py.dylib")
    ]
    for path in candidates:
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("ptctr_py", str(path))
            spec = importlib.util.spec_from_loader("ptctr_py", loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            print(f"loaded {path}")
            return module
    sys.exit(
        "ptctr_py library not found; run `cargo build -p ptctr-py` (or --release) first"
    )


def check(label: str, condition: bool, detail: str = "") -> None:
    if not condition:
        sys.exit(f"FAIL {label}: {detail}")
    print(f"PASS {label}{': ' + detail if detail else ''}")


def main() -> None:
    ptctr = load_module()

    check("module exposes the registry", list(ptctr.EXAMPLES)[:2] == ["ex1", "ex2"])

    # A generated problem carries its reference optimum.
    problem = ptctr.make_example("ex1", 10)
    check(
        "problem metadata",
        problem.name == "ex1" and problem.n == 10 and problem.m == 5,
        repr(problem),
    )
    x0 = problem.x0()
    check("x0 length", len(x0) == 10)
    value = problem.value(x0)
    check("objective evaluates", math.isfinite(value), f"f(x0) = {value}")

    # Gradient sanity against a central difference in one coordinate.
    h = 1e-6
    bumped_up = list(x0)
    bumped_dn = list(x0)
    bumped_up[3] += h
    bumped_dn[3] -= h
    fd = (problem.value(bumped_up) - problem.value(bumped_dn)) / (2 * h)
    grad = problem.gradient(x0)
    check(
        "gradient matches finite differences",
        abs(grad[3] - fd) <= 1e-5 * max(1.0, abs(fd)),
        f"analytic {grad[3]:.9e} vs fd {fd:.9e}",
    )

    # Continuation solve reaches the reference optimum.
    report = ptctr.solve(problem)
    check(
        "solver converges",
        report.converged and report.status == "Converged",
        repr(report),
    )
    rel = abs(report.f_star - problem.f_star) / abs(problem.f_star)
    check("optimum matches the reference", rel <= 1e-8, f"relative error {rel:.3e}")
    check("iterate returned", len(report.x()) == 10)

    # The two baselines land on the same optimum.
    penalty = ptctr.penalty_solve(problem)
    flow = ptctr.gradient_flow_solve(problem)
    spread = max(report.f_star, penalty.f_star, flow.f_star) - min(
        report.f_star, penalty.f_star, flow.f_star
    )
    check(
        "baselines agree",
        spread / abs(report.f_star) <= 1e-4,
        f"ptctr {report.f_star:.9e}, penalty {penalty.f_star:.9e}, flow {flow.f_star:.9e}",
    )

    # Constraint preprocessing: a duplicated row does not change the rank,
    # and the projector behaves like an orthogonal projector.
    reduced = ptctr.reduce([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]], [2.0, 4.0])
    check(
        "duplicate rows collapse",
        reduced.rank == 1 and reduced.is_consistent,
        repr(reduced),
    )
    direction = [0.3, -1.2, 2.5]
    projected = reduced.apply_projector(direction)
    twice = reduced.apply_projector(projected)
    check(
        "projector is idempotent",
        all(abs(a - b) <= 1e-12 for a, b in zip(projected, twice)),
    )
    point = reduced.project_point([0.0, 0.0, 7.0])
    check(
        "projected point is feasible",
        reduced.feasibility_residual(point) <= 1e-10,
        f"residual {reduced.feasibility_residual(point):.3e}",
    )

    # An inconsistent system is relaxed, and says so.
    noisy = ptctr.reduce([[1.0, 0.0], [1.0, 0.0]], [1.0, 1.5])
    check(
        "inconsistent systems are flagged",
        not noisy.is_consistent and noisy.relaxation_residual > 0.1,
        f"relaxation residual {noisy.relaxation_residual:.3e}",
    )

    # Penalty conditioning blows up with the weight.
    rows = ptctr.penalty_conditioning("ex1", 4, [1.0, 1e3, 1e6])
    check(
        "conditioning grows with sigma",
        rows[-1][1] > 1e5 and rows[-1][1] > rows[0][1],
        f"kappa: {['%.3e' % kappa for _, kappa in rows]}",
    )

    # A short clean localization run tracks the trajectory.
    run = ptctr.vin_simulate(1, frames=20)
    check(
        "clean localization tracks",
        run["failures"] == 0 and run["max_err_xy"] <= 1e-4,
        f"max err {run['max_err_xy']:.3e} m over {run['frames']} frames",
    )
    check(
        "per-frame records present",
        len(run["estimates"]) == 19
        and run["estimates"][0]["status"] == "Converged"
        and run["estimates"][0]["rank"] == 16,
    )

    # A seeded noisy run is reproducible.
    first = ptctr.vin_simulate(3, frames=20, seed=42)
    second = ptctr.vin_simulate(3, frames=20, seed=42)
    check(
        "seeded runs reproduce",
        first["max_err_xy"] == second["max_err_xy"]
        and [e["err_xy"] for e in first["estimates"]]
        == [e["err_xy"] for e in second["estimates"]],
    )

    # Errors surface as Python exceptions.
    for label, call in [
        ("unknown example", lambda: ptctr.make_example("ex11", 10)),
        ("bad dimension", lambda: ptctr.make_example("ex1", 7)),
        ("ragged matrix", lambda: ptctr.reduce([[1.0, 2.0], [3.0]], [1.0, 2.0])),
        ("bad trajectory", lambda: ptctr.vin_simulate(9, frames=20)),
    ]:
        try:
            call()
        except ValueError as err:
            check(f"{label} raises ValueError", True, str(err))
        else:
            sys.exit(f"FAIL {label}: expected ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
