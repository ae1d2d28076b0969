"""Acceptance criteria, one test per criterion.

Each test records a ``[PASS]``/``[FAIL]`` line (shown in the pytest
terminal summary) and then asserts the same condition.
"""
import math
import time

import numpy as np
import pytest

from oracles import RHO_1_100, grid_search_oo0, manufactured_error_ratios
from schwarzgrav.cli import RunConfig, cmd_optimize, gridify, optimize_transmission
from schwarzgrav.cmaes import CmaEsConfig, cmaes_minimize
from schwarzgrav.linalg import PcgConfig, pcg
from schwarzgrav.model import (G, assemble_poisson, ball_anomaly, direct_integration_potential, interpolate_nodes,
                               make_grid, pad_field, point_mass_potential, synthetic_crater_anomaly)
from schwarzgrav.rate import REFERENCE_OPTIMA, TransmissionParams, default_band, reference_band
from schwarzgrav.schwarz import SchwarzConfig, monolithic_solve, partition_x, schwarz_solve


def test_c01_oo0_symmetric_optimum(acceptance, tmp_path):
    t0 = time.perf_counter()
    (res,) = cmd_optimize(RunConfig(mode="oo0_sym", band=(1.0, 100.0), out=str(tmp_path)))
    elapsed = time.perf_counter() - t0
    p_oracle, rho_oracle = grid_search_oo0(1.0, 100.0)
    ok = (abs(res.params.p1 - 10.0) <= 1e-3 * 10.0 and abs(res.rho_max - RHO_1_100) <= 1e-6
          and abs(p_oracle - 10.0) <= 1e-3 * 10.0 and abs(rho_oracle - RHO_1_100) <= 1e-6 and elapsed < 10.0)
    acceptance("C1 OO0-sym optimum on [1,100]", ok,
               f"p={res.params.p1:.7f} rho={res.rho_max:.9f} (closed form {RHO_1_100:.9f}, "
               f"grid search p={p_oracle:.5f} rho={rho_oracle:.9f}) in {elapsed:.2f}s")
    assert ok


def test_c02_reference_optima_with_recovered_band(acceptance, tmp_path):
    t0 = time.perf_counter()
    band = reference_band()
    results = {r.mode: r for r in cmd_optimize(RunConfig(mode="all", band="reference", out=str(tmp_path)))}
    elapsed = time.perf_counter() - t0
    rho = {m: r.rho_max for m, r in results.items()}
    limits = {m: REFERENCE_OPTIMA[m][4] + 0.02 for m in ("oo0_unsym", "oo2_sym", "oo2_unsym")}
    ok_row1 = abs(rho["oo0_sym"] - 0.6823) <= 1e-3
    ok_rest = all(rho[m] <= lim for m, lim in limits.items())
    ok_order = rho["oo0_sym"] > rho["oo0_unsym"] > rho["oo2_sym"] > rho["oo2_unsym"]
    ok = ok_row1 and ok_rest and ok_order and elapsed < 60.0
    acceptance("C2 reference optima with recovered band", ok,
               f"band=[{band.k_min:.5f}, {band.k_max:.5f}] rho: "
               + ", ".join(f"{m}={v:.4f} (reference {REFERENCE_OPTIMA[m][4]})" for m, v in rho.items())
               + f"; ordered={ok_order}; {elapsed:.1f}s")
    assert ok


def test_c03_cmaes_sanity(acceptance):
    def sphere(x):
        return float(x @ x)

    def rosenbrock(x):
        return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)

    lines, ok = [], True
    for dim in (2, 4):
        cfg = CmaEsConfig(np.full(dim, 3.0), initial_step_size=1.0, population_size=25,
                          max_iterations=7200, f_tolerance=5e-11)
        a = cmaes_minimize(sphere, cfg)
        b = cmaes_minimize(sphere, CmaEsConfig(np.full(dim, 3.0), initial_step_size=1.0))
        same = [h["best_value"] for h in a.history] == [h["best_value"] for h in b.history]
        ok &= a.best_value < 1e-10 and a.generations_used <= 7200 and same
        lines.append(f"sphere{dim} best={a.best_value:.2e} gens={a.generations_used} deterministic={same}")
    r = cmaes_minimize(rosenbrock, CmaEsConfig([-1.0, 2.0], initial_step_size=0.5))
    dist = float(np.max(np.abs(r.best_point - 1.0)))
    ok &= dist <= 1e-3
    lines.append(f"rosenbrock |x-(1,1)|_inf={dist:.1e}")
    acceptance("C3 CMA-ES sanity", ok, "; ".join(lines))
    assert ok


def test_c04_exact_dtn_two_iterations(acceptance):
    g = make_grid(32, 32, 1, 1.0, 1.0, 1.0)
    field = synthetic_crater_anomaly(g, (0.5, 0.5), 0.2, 1e10)
    cfg = SchwarzConfig()
    t0 = time.perf_counter()
    _, rep = schwarz_solve(field, partition_x(g, 2), None, cfg, transmission="dtn")
    elapsed = time.perf_counter() - t0
    inner = cfg.subdomain.tolerance
    ok = (rep.converged and rep.outer_iterations == 2
          and rep.interface_residual_history[-1] <= 10 * inner and elapsed < 5.0)
    acceptance("C4 exact DtN converges in two iterations", ok,
               f"iterations={rep.outer_iterations} interface residual={rep.interface_residual_history[-1]:.2e} "
               f"(limit {10 * inner:.0e}) global={rep.global_residual_history[-1]:.2e} {elapsed:.2f}s")
    assert ok


def _schwarz_cases():
    g2 = make_grid(64, 64, 1, 250e3, 250e3, 15e3)
    f2 = synthetic_crater_anomaly(g2, (125e3, 125e3), 50e3, 300.0)
    g3 = make_grid(32, 32, 8, 250e3, 250e3, 15e3)
    f3 = synthetic_crater_anomaly(g3, (125e3, 125e3), 50e3, 300.0, depth=5e3)
    return [("2D 64x64", f2), ("3D 32x32x8", f3)]


def test_c05_schwarz_equals_monolithic(acceptance):
    t0 = time.perf_counter()
    worst, lines, ok = 0.0, [], True
    monotone = True
    for name, field in _schwarz_cases():
        system = assemble_poisson(field)
        ref, st = monolithic_solve(field, PcgConfig(1e-12, 100_000), system)
        assert st.converged
        scale = float(np.max(np.abs(ref)))
        band = default_band(field.grid)
        for mode in ("oo2_sym", "oo2_unsym"):
            tp = optimize_transmission(mode, band).params
            for nsub in (2, 4):
                phi, rep = schwarz_solve(field, partition_x(field.grid, nsub), tp, SchwarzConfig(1e-6), system=system)
                diff = float(np.max(np.abs(phi - ref))) / scale
                worst = max(worst, diff)
                ok &= rep.converged and diff <= 1e-5
                h = rep.interface_residual_history[3:]
                monotone &= all(b <= a for a, b in zip(h, h[1:]))
                lines.append(f"{name} {mode} n={nsub}: its={rep.outer_iterations} diff={diff:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    acceptance("C5 Schwarz equals monolithic", ok, f"worst={worst:.2e} {elapsed:.1f}s; " + "; ".join(lines))
    acceptance("C5b interface residual nonincreasing after iteration 3", monotone, "all C5 runs")
    assert ok and monotone


def test_c06_transmission_quality_ordering(acceptance):
    g = make_grid(64, 64, 1, 1.0, 1.0, 1.0)
    field = synthetic_crater_anomaly(g, (0.5, 0.5), 0.2, 1e10)
    system = assemble_poisson(field)
    band = default_band(g)
    part = partition_x(g, 4)
    its = {}
    for mode in ("oo2_unsym", "oo2_sym", "oo0_unsym", "oo0_sym"):
        _, rep = schwarz_solve(field, part, optimize_transmission(mode, band).params, system=system)
        assert rep.converged
        its[mode] = rep.outer_iterations
    _, rep = schwarz_solve(field, part, TransmissionParams.robin(1.0), system=system)
    its["untuned"] = rep.outer_iterations
    ok = rep.converged and max(its["oo2_sym"], its["oo2_unsym"]) < min(its["oo0_sym"], its["oo0_unsym"]) \
        and max(its["oo0_sym"], its["oo0_unsym"]) < its["untuned"]
    acceptance("C6 OO2 < OO0 < untuned iteration counts", ok,
               ", ".join(f"{k}={v}" for k, v in its.items()) + " (64x64 unit square, 4 subdomains)")
    assert ok


def test_c07_gravity_oracles(acceptance):
    t0 = time.perf_counter()
    m, r = 5.972e24, 6.371e6
    ok_point = point_mass_potential(m, r) == G * m / r
    # uniform ball against the point mass
    g = make_grid(32, 32, 32, 1.0, 1.0, 1.0)
    R, rho = 0.25, 1000.0
    ball = ball_anomaly(g, (0.5, 0.5, 0.5), R, rho)
    mass = rho * 4.0 / 3.0 * math.pi * R**3
    ball_err = max(abs(direct_integration_potential(ball, (0.5 + d, 0.5, 0.5)) / point_mass_potential(mass, d) - 1)
                   for d in (3 * R, 4 * R))
    # padded Poisson solve against direct integration at interior probes
    core = make_grid(16, 16, 16, 16e3, 16e3, 16e3)
    src = ball_anomaly(core, (8e3, 8e3, 8e3), 3e3, 500.0)
    big = pad_field(src, 2.0)
    system = assemble_poisson(big)
    phi, st = pcg(system.matrix, system.rhs, PcgConfig(1e-10, 100_000))
    probes = [(8e3, 8e3, 8e3), (10e3, 8e3, 8e3), (8e3, 6e3, 8e3), (8e3, 8e3, 10e3), (10e3, 10e3, 8e3)]
    pad_err = max(abs(interpolate_nodes(big.grid, phi, x) / direct_integration_potential(src, x) - 1) for x in probes)
    elapsed = time.perf_counter() - t0
    ok = ok_point and ball_err <= 0.02 and st.converged and pad_err <= 0.10 and elapsed < 60.0
    acceptance("C7 gravity oracles", ok,
               f"point mass exact={ok_point}; ball vs Gm/r max rel err={ball_err:.2%} (<=2%); "
               f"padded Poisson vs direct max rel err={pad_err:.2%} (<=10%, padding 2x, {big.grid.nx}^3); "
               f"{elapsed:.1f}s")
    assert ok


def test_c08_discretization_order(acceptance):
    r2 = manufactured_error_ratios((1.0, 2.0, None))
    r3 = manufactured_error_ratios((1.0, 2.0, 1.5))
    ok = all(3.4 <= r <= 4.6 for r in r2 + r3)
    acceptance("C8 second-order discretization", ok,
               f"2D ratios={[round(r, 3) for r in r2]} 3D ratios={[round(r, 3) for r in r3]}")
    assert ok


def test_c09_gridification(acceptance):
    got = [gridify("daxpy", 1000, 256).nBlocks, gridify("spmv", 1000, 256, 8).nBlocks,
           gridify("daxpy", 19_933_056, 256).nBlocks]
    threads = [gridify("daxpy", 1000, 256).nThreadsPerBlock, gridify("dot", 1000).nThreadsPerBlock]
    ok = got == [4, 32, 77_864] and threads == [256, 128]
    acceptance("C9 gridification arithmetic", ok, f"nBlocks={got} threads={threads}")
    assert ok


def test_c10_property_suites(acceptance):
    from test_cmaes import test_covariance_symmetric_positive_definite_every_generation as cov_pd
    from test_linalg import test_pcg_a_norm_error_nonincreasing as a_norm
    from test_linalg import test_spmv_matches_dense_oracle as spmv_oracle
    from test_rate import test_oo0_mobius_symmetry as mobius
    from test_rate import test_side_swap_invariance as side_swap

    t0 = time.perf_counter()
    failures = []
    for name, prop in [("spmv dense oracle", spmv_oracle), ("PCG A-norm", a_norm), ("CMA-ES covariance", cov_pd),
                       ("side swap", side_swap), ("Mobius", mobius)]:
        try:
            prop()
        except Exception as exc:  # report every suite, then fail
            failures.append(f"{name}: {type(exc).__name__}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 120.0
    acceptance("C10 property suites", ok, f"{'all green' if not failures else failures} in {elapsed:.1f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
