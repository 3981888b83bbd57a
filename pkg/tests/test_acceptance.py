"""Acceptance suite: one test per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.  Criterion 3's transient-spike clause is expected to fail
(strict xfail): the stated 0.701 s is not reproducible from the published
closed loop, whose rise time and overshoot pin the true transient maximum at
0.7128 s.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from logsens.classical import (
    RLC_LAMBDA3_DEFAULT,
    close_loop,
    rlc_scenario,
    spring_mass_scenario,
)
from logsens.cli import table1_repro, validate_config
from logsens.matexp import (
    Spectrum,
    couplings,
    dderiv_diag,
    dderiv_jordan,
    dderiv_oracle_blockaug,
    dderiv_oracle_fd,
    dderiv_oracle_quadrature,
    eig_decompose,
)
from logsens.quantum import spin_chain_scenario, two_qubit_scenario
from logsens.sensan import (
    ErrorSystem,
    classify,
    detect_spikes,
    error_signal,
    fit_polynomial_degree,
    fit_slope,
    trace,
)

GRID_DT = 0.01
CLASSICAL_GRID = np.arange(0.0, 50.0 + GRID_DT / 2, GRID_DT)


def report(criterion, ok, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def rel_dev(X, Y):
    scale = max(np.linalg.norm(X), np.linalg.norm(Y), 1e-300)
    return np.linalg.norm(np.asarray(X) - np.asarray(Y)) / scale


def test_criterion_1_spring_mass_real():
    t_start = time.perf_counter()
    plant = spring_mass_scenario(4.0)
    loop, sys_ = close_loop(plant, [-2.0, -5.0])
    spec = sys_.spectrum()
    cls = classify(spec, couplings(spec, sys_.S, sys_.c, loop.beta), sys_.xi0)
    tr = trace(sys_, CLASSICAL_GRID)
    fitted = fit_slope(tr, (10.0, 50.0))
    elapsed = time.perf_counter() - t_start
    ok = (abs(abs(fitted) - 4.0 / 3.0) <= 0.01 * (4.0 / 3.0)
          and abs(cls.constants["sbar_dom"] - (-1.0 / 3.0)) <= 1e-6
          and elapsed < 5.0)
    report(1, ok,
           f"fitted |s| slope {abs(fitted):.6f} (target 4/3 +-1%), "
           f"sbar_11 {cls.constants['sbar_dom']:.9f} (target -1/3 +-1e-6), "
           f"runtime {elapsed:.2f}s (< 5s)")


def test_criterion_2_spring_mass_complex():
    plant = spring_mass_scenario(4.0)
    poles = [-1 + 1j * np.pi / 5, -1 - 1j * np.pi / 5]
    loop, sys_ = close_loop(plant, poles)
    spec = sys_.spectrum()
    cls = classify(spec, couplings(spec, sys_.S, sys_.c, loop.beta), sys_.xi0)
    tr = trace(sys_, CLASSICAL_GRID)
    spikes = detect_spikes(tr)
    period = float(np.median(np.diff(spikes)))
    re_p = cls.constants["re_z1w1z2w2"]
    im_p = cls.constants["im_z1w1z2w2"]
    ok = (abs(cls.t0 - 4.107) <= 0.01
          and abs(period - 5.0) <= GRID_DT
          and abs(re_p - (-0.197)) <= 5e-3
          and abs(im_p - (-0.409)) <= 5e-3)
    report(2, ok,
           f"t0 {cls.t0:.4f} (4.107 +-0.01), spike period {period:.4f} "
           f"(5.0 +-{GRID_DT}), Re {re_p:.4f} (-0.197 +-5e-3), "
           f"Im {im_p:.4f} (-0.409 +-5e-3)")


def test_criterion_3_rlc_real_slope():
    plant = rlc_scenario(0.5)
    loop, sys_ = close_loop(plant, [-1.0, -2.0, -4.0])
    spec = sys_.spectrum()
    cls = classify(spec, couplings(spec, sys_.S, sys_.c, loop.beta), sys_.xi0)
    tr = trace(sys_, CLASSICAL_GRID)
    fitted = fit_slope(tr, (10.0, 50.0))
    ok = (abs(abs(fitted) - 1.58) <= 0.01 * 1.58
          and abs(abs(cls.slope) - 1.58) <= 0.01 * 1.58)
    report("3 (slope)", ok,
           f"fitted |s| slope {abs(fitted):.5f}, predicted "
           f"{abs(cls.slope):.5f} (target 1.58 +-1%)")


@pytest.mark.xfail(
    strict=True,
    reason="stated transient time 0.701 s is not reproducible: the published "
    "closed loop (rise time 0.49 s and 30% overshoot both confirmed) has its "
    "error zero crossing, hence the |s| transient maximum, at 0.7128 s",
)
def test_criterion_3_rlc_real_transient():
    _, sys_ = close_loop(rlc_scenario(0.5), [-1.0, -2.0, -4.0])
    tr = trace(sys_, CLASSICAL_GRID)
    spikes = detect_spikes(tr)
    ok = len(spikes) == 1 and abs(spikes[0] - 0.701) <= 0.01
    report("3 (transient)", ok,
           f"transient |s| maximum at {spikes[0]:.4f} (stated 0.701 +-0.01)")


def test_criterion_4_rlc_complex():
    plant = rlc_scenario(0.5)
    poles = [-2 + 1j * np.pi / 10, -2 - 1j * np.pi / 10, RLC_LAMBDA3_DEFAULT]
    loop, sys_ = close_loop(plant, poles)
    spec = sys_.spectrum()
    cls = classify(spec, couplings(spec, sys_.S, sys_.c, loop.beta), sys_.xi0)
    tr = trace(sys_, CLASSICAL_GRID)
    spikes = detect_spikes(tr)
    period = float(np.median(np.diff(spikes[1:])))
    ok = (abs(cls.t0 - 10.49) <= 0.05
          and abs(period - 10.0) <= GRID_DT
          and abs(spikes[0] - 0.350) <= 0.005)
    report(4, ok,
           f"t0 {cls.t0:.4f} (10.49 +-0.05), spike period {period:.4f} "
           f"(10 +-{GRID_DT}), first transient spike {spikes[0]:.4f} "
           f"(0.350 +-0.005; lambda3 = {RLC_LAMBDA3_DEFAULT})")


def test_criterion_5_two_qubit():
    t_start = time.perf_counter()
    lam2 = None
    details = []
    ok = True
    for pert, target in (("S1", 0.00344), ("S2", 0.00344),
                         ("S3", 0.00351), ("S4", 0.00351)):
        model, sys_ = two_qubit_scenario(perturbation=pert)
        spec = sys_.spectrum()
        coup = sys_.couplings(spec)
        if lam2 is None:
            lam2 = spec.eigenvalues[1]
            ok &= abs(lam2 - (-0.0035)) <= 1e-4
        cls = classify(spec, coup, sys_.xi0)
        slope = abs(cls.slope)
        ok &= abs(slope - target) <= 0.02 * target
        ok &= abs(coup.Sbar[0, 0]) < 1e-10
        details.append(f"{pert}: |slope| {slope:.6f} (target {target})")
    elapsed = time.perf_counter() - t_start
    ok &= elapsed < 30.0
    report(5, ok,
           f"lambda_2 {lam2.real:.6f} (-0.0035 +-1e-4); "
           + "; ".join(details)
           + f"; zero-mode sbar_11 < 1e-10; runtime {elapsed:.1f}s (< 30s)")


def test_criterion_6_spin_chains():
    grid = np.arange(0.0, 30.0 + GRID_DT / 2, GRID_DT)
    _, sys2 = spin_chain_scenario(2)
    tr2 = trace(sys2, grid)
    th = np.pi * grid / 5
    e2_dev = np.max(np.abs(tr2.error - 0.5 * (1 + np.cos(th))))
    de2_dev = np.max(np.abs(tr2.derror - (-grid * np.sin(th))))
    _, sys3 = spin_chain_scenario(3, perturbed_coupling=2)
    tr3 = trace(sys3, grid)
    e3_dev = np.max(np.abs(
        tr3.error - (5.0 / 8.0 + 0.5 * np.cos(th) - np.cos(2 * th) / 8.0)))
    de3_dev = np.max(np.abs(
        tr3.derror - (-np.sqrt(2) / 4 * grid * np.sin(th)
                      + np.sqrt(2) / 8 * grid * np.sin(2 * th))))
    pst = {}
    for N in (2, 3, 4, 5):
        model, sysN = spin_chain_scenario(N)
        pst[N] = abs(float(sysN.c @ expm(model.A * 5.0) @ sysN.v))
    ok = (e2_dev <= 1e-10 and de2_dev <= 1e-8
          and e3_dev <= 1e-8 and de3_dev <= 1e-8
          and all(v <= 1e-10 for v in pst.values()))
    report(6, ok,
           f"N=2 error dev {e2_dev:.2e} (<=1e-10), derivative dev {de2_dev:.2e} "
           f"(<=1e-8, against -t sin(pi t/5)); N=3 devs {e3_dev:.2e}/{de3_dev:.2e} "
           f"(<=1e-8); |e(pi/lambda)| max {max(pst.values()):.2e} (<=1e-10)")


TABLE1_TARGETS = {
    "n2": [(1.0, 66664.00), (0.9999, 311.95), (0.99899, 97.271),
           (0.98999, 29.264), (0.90001, 7.4949)],
    "n3": [(1.0, 24998.00), (0.9999, 220.72), (0.99899, 69.195),
           (0.98996, 21.079), (0.90008, 5.6196)],
}


def test_criterion_7_table1():
    ok = True
    details = []
    for chain, targets in TABLE1_TARGETS.items():
        rows = table1_repro(chain, [f for f, _ in targets])
        for (fid, ref), row in zip(targets, rows):
            got = row["abs_logsens"]
            if fid == 1.0:
                good = ref / 2 <= got <= ref * 2
                details.append(f"{chain}@{fid}: {got:.0f} vs {ref:.0f} (x2)")
            else:
                good = abs(got - ref) <= 5e-3 * ref
                details.append(f"{chain}@{fid}: {got:.4g} vs {ref:.4g} (0.5%)")
            ok &= good
    report(7, ok, "; ".join(details))


def _random_stable(rng, n):
    while True:
        A = rng.standard_normal((n, n))
        lam = np.linalg.eigvals(A)
        A = A - (np.max(lam.real) + rng.uniform(0.05, 0.5)) * np.eye(n)
        spec = eig_decompose(A)
        gaps = np.abs(spec.eigenvalues[:, None] - spec.eigenvalues[None, :])
        gaps += np.eye(n)
        if spec.cond_M < 1e4 and gaps.min() > 1e-3:
            return A, spec


def test_criterion_8_oracle_suite():
    rng = np.random.default_rng(20260810)
    worst_triangle = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        A, spec = _random_stable(rng, n)
        S = rng.standard_normal((n, n))
        t = float(rng.uniform(0.5, 10.0))
        coup = couplings(spec, S, rng.standard_normal(n), rng.standard_normal(n))
        paths = [
            dderiv_diag(spec, coup, t),
            dderiv_oracle_quadrature(A, S, t, abs_tol=1e-9),
            dderiv_oracle_blockaug(A, S, t),
            dderiv_oracle_fd(A, S, t),
        ]
        for i in range(4):
            for j in range(i + 1, 4):
                worst_triangle = max(worst_triangle, rel_dev(paths[i], paths[j]))
    ok = worst_triangle < 1e-6

    worst_jordan = 0.0
    for case in range(20):
        ell = 2 + case % 2
        n_extra = int(rng.integers(1, 3))
        n = ell + n_extra
        lam1 = -float(rng.uniform(0.05, 0.5))
        rest = lam1 - 1.0 - np.sort(rng.uniform(0.0, 2.0, n_extra))
        J = np.diag(np.concatenate([np.full(ell, lam1), rest]))
        for i in range(ell - 1):
            J[i, i + 1] = 1.0
        while True:
            M = np.eye(n) + 0.4 * rng.standard_normal((n, n))
            if np.linalg.cond(M) < 50:
                break
        A = M @ J @ np.linalg.inv(M)
        spec = Spectrum.from_jordan(np.diag(J), M, [(0, ell)])
        S = rng.standard_normal((n, n))
        t = float(rng.uniform(0.5, 5.0))
        got = dderiv_jordan(spec, spec.Minv @ S @ spec.M, t)
        ref = dderiv_oracle_quadrature(A, S, t, abs_tol=1e-12)
        worst_jordan = max(worst_jordan, rel_dev(got, ref))
    ok &= worst_jordan < 1e-8

    worst_commute = 0.0
    for _ in range(10):
        A, spec = _random_stable(rng, 4)
        S = rng.uniform(-1, 1) * np.eye(4) + 0.3 * A + 0.05 * A @ A
        t = float(rng.uniform(0.5, 3.0))
        expected = t * S @ expm(t * A)
        coup = couplings(spec, S, np.ones(4), np.ones(4))
        for D in (dderiv_diag(spec, coup, t),
                  dderiv_oracle_blockaug(A, S, t),
                  dderiv_oracle_quadrature(A, S, t, abs_tol=1e-13)):
            worst_commute = max(worst_commute, rel_dev(D, expected))
    ok &= worst_commute < 1e-9
    report(8, ok,
           f"oracle triangle max rel dev {worst_triangle:.2e} (<1e-6, 100 systems); "
           f"jordan vs quadrature {worst_jordan:.2e} (<1e-8, 20 systems); "
           f"commuting identity {worst_commute:.2e} (<1e-9)")


def test_criterion_9_polynomial_degree():
    # dominant eigenvalue -0.2 with a size-2 Jordan block, one simple mode
    lam1, lam3 = -0.2, -1.5
    J = np.array([[lam1, 1.0, 0.0], [0.0, lam1, 0.0], [0.0, 0.0, lam3]])
    rng = np.random.default_rng(3)
    M = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
    A = M @ J @ np.linalg.inv(M)
    spec = Spectrum.from_jordan([lam1, lam1, lam3], M, [(0, 2)])
    S = rng.standard_normal((3, 3))
    c = rng.standard_normal(3)
    v = rng.standard_normal(3)
    sys_ = ErrorSystem(A0=A, S=S, c=c, v=v, xi0=1.0)
    grid = np.arange(0.0, 120.0, 0.5)
    tr = trace(sys_, grid, method="analytic", spectrum=spec)
    # spot-check the analytic Jordan derivative against quadrature
    for t in (10.0, 60.0):
        i = int(t / 0.5)
        ref = float(c @ dderiv_oracle_quadrature(A, S, t, abs_tol=1e-12) @ v)
        assert abs(tr.derror[i] - ref) <= 1e-8 * max(1.0, abs(ref))
    cls = classify(spec, couplings(spec, S, c, v), 1.0)
    degree = fit_polynomial_degree(tr, (30.0, 120.0))
    ok = cls.kind == "PolynomialJordan" and cls.degree == 2 and degree == 2
    report(9, ok,
           f"classified {cls.kind} degree {cls.degree}, fitted log-log degree "
           f"{degree} (target 2)")


def test_criterion_10_invariants():
    checks = {}
    # trace preservation (two-qubit) and purity bound
    model, _ = two_qubit_scenario()
    G = model.generator
    devs = [abs(float((expm(G * t) @ model.r0)[-1]) - 0.5)
            for t in (0.0, 3.0, 100.0, 1500.0)]
    checks["trace_preservation"] = max(devs) <= 1e-10
    # antisymmetry of coherent Bloch generators
    checks["antisymmetry"] = np.max(np.abs(model.A + model.A.T)) <= 1e-12
    # normality of every chain generator
    norm_dev = 0.0
    for N in (2, 3, 4, 5):
        mN, _ = spin_chain_scenario(N)
        norm_dev = max(norm_dev, float(np.max(np.abs(
            mN.A @ mN.A.T - mN.A.T @ mN.A))))
    checks["chain_normality"] = norm_dev <= 1e-12
    # e(0) = 1 and DC gain for every tracking construction
    e0_dev = dc_dev = 0.0
    for plant, poles in [
        (spring_mass_scenario(4.0), [-2.0, -5.0]),
        (spring_mass_scenario(4.0), [-1 + 1j * np.pi / 5, -1 - 1j * np.pi / 5]),
        (rlc_scenario(0.5), [-1.0, -2.0, -4.0]),
        (rlc_scenario(0.5), [-2 + 1j * np.pi / 10, -2 - 1j * np.pi / 10,
                             RLC_LAMBDA3_DEFAULT]),
    ]:
        loop, sys_ = close_loop(plant, poles)
        e0_dev = max(e0_dev, abs(error_signal(sys_, 0.0) - 1.0))
        dc = -loop.k0 * float(plant.c @ np.linalg.solve(loop.A0, plant.b))
        dc_dev = max(dc_dev, abs(dc - 1.0))
    checks["e0_equals_1"] = e0_dev <= 1e-12
    checks["dc_gain"] = dc_dev <= 1e-12
    # similarity invariance of the log-sensitivity
    rng = np.random.default_rng(11)
    _, sys_ = close_loop(spring_mass_scenario(4.0), [-2.0, -5.0])
    T = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
    Ti = np.linalg.inv(T)
    sys_t = ErrorSystem(A0=T @ sys_.A0 @ Ti, S=T @ sys_.S @ Ti,
                        c=sys_.c @ Ti, v=T @ sys_.v, xi0=sys_.xi0)
    grid = np.linspace(0.2, 12.0, 30)
    tr_a, tr_b = trace(sys_, grid), trace(sys_t, grid)
    both = ~tr_a.spike_mask & ~tr_b.spike_mask
    sim_dev = float(np.max(np.abs(tr_a.logsens[both] - tr_b.logsens[both])))
    checks["similarity_invariance"] = (np.array_equal(tr_a.spike_mask,
                                                      tr_b.spike_mask)
                                       and sim_dev <= 1e-8)
    ok = all(checks.values())
    report(10, ok, "; ".join(f"{k}={'ok' if v else 'FAIL'}"
                             for k, v in checks.items()))
