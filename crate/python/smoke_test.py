#!/usr/bin/env python3
"""Smoke test for the rsjd Python extension.

Builds nothing itself: it locates the compiled cdylib under target/
(`cargo build -p rsjd-py --release` or a debug build), copies it next to
a temp module path as `rsjd.so`, imports it, and exercises the main
operations with small budgets. Exits nonzero on any failed check.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    candidates = [
        REPO / "target" / "release" / "librsjd.so",
        REPO / "target" / "debug" / "librsjd.so",
    ]
    for c in candidates:
        if c.exists():
            return c
    sys.exit("build the extension first: cargo build -p rsjd-py [--release]")


def import_module():
    lib = locate_cdylib()
    tmp = Path(tempfile.mkdtemp(prefix="rsjd-py-"))
    shutil.copy2(lib, tmp / "rsjd.so")
    sys.path.insert(0, str(tmp))
    import rsjd  # noqa: E402

    return rsjd


def check(name: str, ok: bool, detail: str = "") -> bool:
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return ok


def main() -> int:
    rsjd = import_module()
    ok = True

    names = [n for (n, _, _) in rsjd.list_models()]
    ok &= check("registry lists coupled-ou", "coupled-ou" in names, str(names))

    # auxiliary generator rows for kappa = 1 (first and third row)
    ok &= check("qhat row 0", rsjd.qhat_row_targets(1, 0) == [1, 2])
    ok &= check("qhat row 2", rsjd.qhat_row_targets(1, 2) == [1, 3])

    model = rsjd.Model.coupled_ou_instance(up=1.0, down=1.0)
    ok &= check("kappa", model.kappa == 1)

    row = model.q_row([0.3], 2)
    ok &= check("q_row total", abs(row["total"] - 2.0) < 1e-12, str(row))

    part = model.partition([0.0], 2)
    ok &= check("partition covers [0, q_k)", part == [(1, 0.0, 1.0), (3, 1.0, 2.0)], str(part))
    ok &= check("h_eval inside", model.h_eval([0.0], 2, 1.5) == 1)
    ok &= check("h_eval past mass", model.h_eval([0.0], 2, 5.0) == 0)

    path = model.simulate([0.5], 0, t=1.0, dt=0.01, seed=7)
    ok &= check(
        "simulate completes",
        path["status"] == "completed" and path["times"][-1] == 1.0,
        f"nodes={len(path['times'])} switches={len(path['switches'])}",
    )
    again = model.simulate([0.5], 0, t=1.0, dt=0.01, seed=7)
    ok &= check("simulate deterministic", path["states"] == again["states"])

    # generator on the worked example: AV(x,0) = -3 x^2 + 3 for V = (k+1)x^2
    g = model.generator("regime-weighted-norm-sq", [1.3], 0)
    expected = -3.0 * 1.3**2 + 3.0
    ok &= check(
        "generator worked-example value",
        abs(g["total"] - expected) < 1e-6,
        f"{g['total']} vs {expected}",
    )

    # stationary second moment of the single-regime OU with jumps
    ou = rsjd.Model.single_regime_ou(alpha=-1.0, sigma=1.0, beta=0.5, mass=1.0)
    stats = ou.simulate_batch([0.0], 0, t=30.0, dt=0.005, n=64, seed=3, burn_in=5.0)
    m2 = stats["time_avg_norm_sq"]
    se = stats["time_avg_norm_sq_se"]
    ok &= check(
        "OU stationary E[X^2] near 0.75",
        abs(m2 - 0.75) < max(3.0 * se, 0.08),
        f"{m2} ± {se}",
    )

    series = ou.transition_series(0, t=1.0, x0=0.3, lo=0.0, hi=1.0, terms=6, mark_budget=4000)
    ok &= check(
        "series leading weight e^-1",
        abs(series["terms"][0][1] - math.exp(-1.0)) < 1e-12,
    )
    ok &= check(
        "series remainder is small",
        0.0 < series["remainder_bound"] < 1e-3,
        str(series["remainder_bound"]),
    )

    rep = model.couple([1.0], [0.0], 0, checkpoints=[0.5, 1.0], n=400, dt=0.01, seed=5)
    ok &= check(
        "coupling contracts",
        rep["fitted_rate"] < 0.0 and rep["p_decouple"] == 0.0,
        f"rate={rep['fitted_rate']}",
    )

    est = model.change_measure(
        "clipped-norm-sq",
        [0.3],
        0,
        t=1.0,
        dt=0.01,
        n=4000,
        params={"r1": 4.0, "r2": 8.0},
        seed=11,
    )
    ok &= check(
        "weight normalization E[M] = 1",
        abs(est["weight_mean"] - 1.0) <= 3.0 * est["weight_se"],
        f"{est['weight_mean']} ± {est['weight_se']}",
    )

    cert = model.drift_check(
        "regime-weighted-norm-sq", alpha=3.0, gamma=3.0, radius=50.0, max_regime=30, budget=300
    )
    ok &= check("drift certificate passes", cert["passed"], cert["summary"])

    print("\nsmoke test:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
