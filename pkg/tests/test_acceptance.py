"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports its measured values.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_band_limited, record_acceptance
from electrodiff.cli import EXIT_OK, main
from electrodiff.diagnostics import NORM_RATIO_BOUNDS, curl_free_defect, norm_ratio, regularity_checks
from electrodiff.fields import NpnsState, Params, build_profile, recover_np, well_prepared_initial
from electrodiff.harness import io
from electrodiff.harness.config import OUT_ENV, load_config
from electrodiff.harness.experiments import make_setup, run_sweep
from electrodiff.harness.mms import run_mms
from electrodiff.npns import poisson_residual, solve_poisson
from electrodiff.quasineutral import solve_limit_potential
from electrodiff.spectral import Grid, ScalarField, VectorField, divergence, gradient, laplacian, leray_project

from test_quasineutral import dense_limit_potential

ACCEPTANCE_TOML = Path(__file__).resolve().parents[1] / "configs" / "acceptance.toml"


def _rel(a, b):
    return float(np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b)))


@pytest.fixture(scope="module")
def config():
    mp = pytest.MonkeyPatch()
    mp.delenv(OUT_ENV, raising=False)
    cfg = load_config(ACCEPTANCE_TOML)
    mp.undo()
    return cfg


@pytest.fixture(scope="module")
def sweep(config):
    start = time.perf_counter()
    result = run_sweep(config, keep_bundles=True)
    return result, time.perf_counter() - start


def test_c1_spectral_identities():
    start = time.perf_counter()
    g = Grid(2, 16)
    rng = np.random.default_rng(11)
    worst = {}
    for _ in range(10):
        f = random_band_limited(g, rng, kmax=7, mean=0.3)
        F = random_band_limited(g, rng, kmax=7, rank=1)
        parseval = abs(np.mean(f.values**2) - np.sum(np.abs(f.coeffs) ** 2)) / np.mean(f.values**2)
        lap = _rel(laplacian(f).values, divergence(gradient(f)).values)
        P = leray_project(F)
        idem = _rel(leray_project(P).values, P.values)
        grad_f = gradient(f)
        annihilate = np.linalg.norm(leray_project(grad_f).values) / np.linalg.norm(grad_f.values)
        curl_free = gradient(random_band_limited(g, rng, kmax=7))
        jac = g.grad(curl_free.coeffs)
        lhs = np.sqrt(sum(g.norm_sq(jac[i, j]) for i in range(2) for j in range(2)))
        rhs = np.sqrt(g.norm_sq(divergence(curl_free).coeffs))
        for key, val in (("parseval", parseval), ("lap", lap), ("leray_idem", idem),
                         ("leray_grad", annihilate), ("curl_free", abs(lhs - rhs) / rhs)):
            worst[key] = max(worst.get(key, 0.0), float(val))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-12 and elapsed < 1.0
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", {elapsed:.2f}s"
    record_acceptance("1 spectral identities", ok, detail)
    assert ok, detail


def test_c2_poisson_manufactured():
    start = time.perf_counter()
    g = Grid(2, 16)
    phi_star = ScalarField.from_function(g, lambda x, y: np.cos(x) * np.cos(y))
    one = ScalarField.constant(g, 1.0)
    D = ScalarField.zeros(g)
    errs = []
    for lam in (1.0, 0.1):
        state = NpnsState(0.0, one - 2 * lam**2 * phi_star, one, VectorField.zeros(g))
        sol = solve_poisson(state.n, state.p, D, lam)
        errs.append(max(poisson_residual(state, D, lam), _rel(sol.phi.values, phi_star.values)))
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 1e-12 and elapsed < 1.0
    detail = f"residual/error {max(errs):.1e} at lambda in (1, 0.1), {elapsed:.2f}s"
    record_acceptance("2 Poisson solve", ok, detail)
    assert ok, detail


def test_c3_limit_elliptic_dense_oracle():
    g = Grid(2, 16)
    Z = build_profile(g, [((1, 0), 0.3, "cos")], 2.0)
    D = build_profile(g, [((1, 0), 0.1, "cos")])
    pot = solve_limit_potential(Z, D, VectorField.zeros(g))
    err = _rel(pot.phi.values, dense_limit_potential(Z.values, D.values))
    ok = err <= 1e-8 and pot.report.converged and pot.report.iterations <= 100
    detail = f"relative error {err:.1e}, {pot.report.iterations} iterations"
    record_acceptance("3 limit elliptic solve", ok, detail)
    assert ok, detail


def test_c4_manufactured_solutions(config):
    start = time.perf_counter()
    lines, ok = [], True
    for system in ("npns", "limit"):
        rows = run_mms(system, "dt", config.mms_dts, lam=config.mms_lambda, mu=config.mu, T=config.mms_T, n=32)
        orders = [r.order for r in rows[1:]]
        ok &= all(abs(o - 2.0) <= 0.2 for o in orders)
        rows_n = run_mms(system, "n", config.mms_ns, lam=config.mms_lambda, mu=config.mu, T=config.mms_n_T,
                         dt=config.mms_n_dt)
        errs = [r.error for r in rows_n]
        drops = [e0 / e1 if e1 > 0 else np.inf for e0, e1 in zip(errs, errs[1:])]
        ok &= all(d >= 10 for e0, d in zip(errs, drops) if e0 > 1e-10) and errs[-1] <= 1e-10
        lines.append(f"{system}: dt orders {', '.join(f'{o:.3f}' for o in orders)}; "
                     f"N errors {', '.join(f'{e:.1e}' for e in errs)}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    detail = "; ".join(lines) + f"; {elapsed:.1f}s"
    record_acceptance("4 manufactured solutions", ok, detail)
    assert ok, detail


def test_c5_conservation(sweep):
    result, _ = sweep
    comp = next(c for c in result.comparisons if c.lam == 0.1)
    rows = comp.npns.diagnostics
    drift_n = max(abs(r["mean_n"] - rows[0]["mean_n"]) for r in rows) / abs(rows[0]["mean_n"])
    drift_p = max(abs(r["mean_p"] - rows[0]["mean_p"]) for r in rows) / abs(rows[0]["mean_p"])
    lrows = result.limit.diagnostics
    drift_z = max(abs(r["mean_Z"] - lrows[0]["mean_Z"]) for r in lrows) / abs(lrows[0]["mean_Z"])
    div_v = max(max(r["div_v"] for r in rows), max(r["div_v"] for r in lrows))
    ok = max(drift_n, drift_p, drift_z) <= 1e-11 and div_v <= 1e-10
    detail = f"mean drift n={drift_n:.1e} p={drift_p:.1e} Z={drift_z:.1e}, div v={div_v:.1e}"
    record_acceptance("5 conservation", ok, detail)
    assert ok, detail


def test_c6_discrete_inequalities(sweep):
    result, _ = sweep
    lo, hi = NORM_RATIO_BOUNDS
    bundles = [b for c in result.comparisons for b in c.bundles]
    reg_fail = sum(not all(ok for _, _, ok in regularity_checks(b).values()) for b in bundles)
    ratios = [norm_ratio(b) for b in bundles]
    ratios = [r for r in ratios if np.isfinite(r)]
    curl = max(curl_free_defect(b.E) for b in bundles)
    ok = bool(bundles) and reg_fail == 0 and all(lo <= r <= hi for r in ratios)
    detail = (f"{len(bundles)} bundles, regularity failures {reg_fail}, ratio in "
              f"[{min(ratios):.3f}, {max(ratios):.3f}] vs [{lo}, {hi}], curl defect {curl:.1e}")
    record_acceptance("6 discrete inequalities", ok, detail)
    assert ok, detail


def test_c7_quasineutral_rates(sweep):
    result, elapsed = sweep
    total, gam = result.fits["theorem_sum"], result.fits["gamma"]
    ok = (not result.failed and total.slope >= 0.9 and total.r_squared >= 0.95
          and gam.slope >= 1.8 and gam.r_squared >= 0.95 and elapsed <= 600)
    detail = (f"norm sum slope {total.slope:.3f} (r2 {total.r_squared:.4f}), "
              f"Gamma slope {gam.slope:.3f} (r2 {gam.r_squared:.4f}), sweep {elapsed:.1f}s")
    record_acceptance("7 quasineutral rates", ok, detail)
    assert ok, detail


def test_sweep_monotone_and_floor(sweep, config):
    result, _ = sweep
    sups = [c.sup("h1_error") for c in result.comparisons]
    min_z = min(r["min_Z"] for r in result.limit.diagnostics)
    ok = all(b < a for a, b in zip(sups, sups[1:])) and all(np.isfinite(sups)) and min_z >= config.kappa0
    detail = f"sup h1_error {', '.join(f'{s:.3e}' for s in sups)}; min Z {min_z:.3f}"
    record_acceptance("sweep monotonicity", ok, detail)
    assert ok, detail


def test_c8_well_prepared_identity(config):
    setup = make_setup(config)
    limit0 = setup.limit0
    _, p0 = recover_np(limit0.Z, setup.D)
    worst = 0.0
    for lam1, lam2 in ((0.2, 0.1), (0.1, 0.025), (0.05, 0.025)):
        d1 = (well_prepared_initial(limit0, setup.D, Params(lam=lam1)).p - p0).norm()
        d2 = (well_prepared_initial(limit0, setup.D, Params(lam=lam2)).p - p0).norm()
        worst = max(worst, abs(d1 / d2 - (lam1 / lam2) ** 2) / (lam1 / lam2) ** 2)
    ok = worst <= 1e-10
    detail = f"worst relative deviation {worst:.1e}"
    record_acceptance("8 well-prepared data", ok, detail)
    assert ok, detail


def test_c9_determinism(sweep, tmp_path):
    result, _ = sweep
    first = tmp_path / "first"
    for c in result.comparisons:
        io.write_rows_csv(first / f"compare_lam{c.lam:.6g}.csv", c.rows)
    second = tmp_path / "second"
    code = main(["sweep", "--config", str(ACCEPTANCE_TOML), "--out", str(second)])
    names = sorted(p.name for p in first.glob("*.csv"))
    same = [(first / n).read_bytes() == (second / n).read_bytes() for n in names]
    ok = code == EXIT_OK and len(names) == 4 and all(same)
    detail = f"{sum(same)}/{len(names)} CSV files bit-identical"
    record_acceptance("9 determinism", ok, detail)
    assert ok, detail
