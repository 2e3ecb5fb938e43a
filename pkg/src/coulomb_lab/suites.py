"""Verification suites run by ``coulomb-lab verify``.

Each suite is a function ``(spec, cfg) -> SuiteResult``.  ``cfg`` holds the
resolutions, the seed and debug switches.  Suites are independent of each
other, which lets the command line run them in a worker pool.  Failure
messages always start with the suite identifier.
"""
from __future__ import annotations

import tempfile
from dataclasses import dataclass, field

import numpy as np

from .bundle import (
    GaugeFixError,
    coulomb_gauge_fix,
    gauge_act_arrays,
    horizontal_project,
    orbit_displacement,
    verify_bct,
)
from .forms import (
    FormField,
    covariant_d0,
    covariant_d0_adjoint,
    d1,
    d1_adjoint,
    inner0,
    inner1,
    inner2,
    project0,
    project1,
)
from .geometry import build_grid
from .holonomy import horizontal_lift, retrace_loop
from .io import IntegrityError, save_certificate, verify_certificate_file
from .lie import LieElement, commutator_decompose, expm_batch, logm_batch, su2
from .solver import ConnectionState, green_arrays, poincare_estimate
from .spans import bump, interior_realize
from .studies import (
    random_conductor,
    random_modes,
    study_bct,
    study_decompose,
    study_lbo,
    study_smooth1,
    study_smooth2,
)

__all__ = ["SuiteResult", "SUITES", "run_suite"]


@dataclass
class SuiteResult:
    identifier: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def check(self, ok, message):
        if not ok:
            self.passed = False
            self.failures.append(f"{self.identifier}: {message}")
        return ok

    def as_dict(self):
        return {
            "identifier": self.identifier,
            "passed": self.passed,
            "metrics": self.metrics,
            "failures": list(self.failures),
        }


def _grid(spec, cfg, level=0):
    n, m = cfg["resolutions"][min(level, len(cfg["resolutions"]) - 1)]
    return build_grid(spec, n, m)


def _two_levels(cfg):
    """Smallest resolution and its refinement (N, M) -> (2N, 2M - 1)."""
    res = cfg["resolutions"]
    if len(res) >= 2:
        return [res[0], res[1]]
    n, m = res[0]
    return [(n, m), (2 * n, 2 * m - 1)]


def _rng(cfg, salt):
    return np.random.default_rng([int(cfg.get("seed", 0)), salt])


def _random_eta(grid, rng, scale=0.3):
    eta = project1(rng.standard_normal((3, 3) + grid.shape))
    return scale * eta / max(np.abs(eta).max(), 1e-300)


# --------------------------------------------------------------------------
# suites
# --------------------------------------------------------------------------


def suite_lie(spec, cfg):
    r = SuiteResult("lie", True)
    rng = _rng(cfg, 1)
    x, y, z = rng.standard_normal((3, 3, 50))
    b = su2.bracket_coeffs
    jac = b(x, b(y, z)) + b(y, b(z, x)) + b(z, b(x, y))
    anti = b(x, y) + b(y, x)
    r.metrics["jacobi"] = float(np.abs(jac).max())
    r.metrics["antisymmetry"] = float(np.abs(anti).max())
    r.check(r.metrics["jacobi"] <= 1e-12, "Jacobi identity defect")
    r.check(r.metrics["antisymmetry"] <= 1e-14, "bracket not antisymmetric")
    X = su2.to_matrix(0.9 * x / np.linalg.norm(x, axis=0))
    back = su2.to_coeffs(logm_batch(expm_batch(X)))
    r.metrics["exp_log"] = float(np.abs(back - su2.to_coeffs(X)).max())
    r.check(r.metrics["exp_log"] <= 1e-12, "exp/log round trip")
    worst = 0.0
    for k in range(10):
        el = LieElement.from_coeffs(x[:, k])
        worst = max(worst, float(np.abs(commutator_decompose(el).reconstruct().mat - el.mat).max()))
    r.metrics["commutator_decompose"] = worst
    r.check(worst <= 1e-14, "commutator decomposition does not reconstruct")
    return r


def suite_stokes(spec, cfg):
    """<d_A u, v> = <u, d*_A v> on conductor u, arbitrary v."""
    r = SuiteResult("stokes-adjoint", True)
    grid = _grid(spec, cfg)
    rng = _rng(cfg, 2)
    worst = 0.0
    for k in range(10):
        eta = _random_eta(grid, rng) if k % 2 else None
        u = project0(rng.standard_normal((3,) + grid.shape))
        v = rng.standard_normal((3, 3) + grid.shape)
        lhs = inner1(grid, covariant_d0(grid, eta, u), v)
        rhs = inner0(grid, u, covariant_d0_adjoint(grid, eta, v))
        scale = np.sqrt(inner0(grid, u, u) * inner1(grid, v, v))
        worst = max(worst, abs(lhs - rhs) / scale)
        a = project1(rng.standard_normal((3, 3) + grid.shape))
        w = rng.standard_normal((3, 3) + grid.shape)
        lhs = inner2(grid, d1(grid, a), w)
        rhs = inner1(grid, a, d1_adjoint(grid, w))
        scale = np.sqrt(inner1(grid, a, a) * inner2(grid, w, w))
        worst = max(worst, abs(lhs - rhs) / scale)
    r.metrics["adjoint_defect"] = worst
    r.check(worst <= 1e-11, f"adjointness defect {worst:.3e}")
    return r


def suite_green(spec, cfg):
    r = SuiteResult("green-operator", True)
    grid = _grid(spec, cfg)
    rng = _rng(cfg, 3)
    eta = _random_eta(grid, rng, 0.5)
    A = ConnectionState(grid, eta, tol=1e-11)
    worst = 0.0
    for _ in range(3):
        f = project0(rng.standard_normal((3,) + grid.shape))
        u, _ = green_arrays(A, f, tol=1e-11)
        res = A.apply(u) - f
        worst = max(worst, np.sqrt(A.inner(res, res) / A.inner(f, f)))
    r.metrics["relative_residual"] = float(worst)
    r.check(worst <= 1e-9, f"relative residual {worst:.3e}")
    if spec.family == "flat":
        X3 = grid.X[2]
        f = np.zeros((3,) + grid.shape)
        f[0] = np.pi**2 * np.sin(np.pi * X3)
        u, _ = green_arrays(ConnectionState.flat(grid), f, tol=1e-12)
        err = float(np.abs(u[0] - np.sin(np.pi * X3)).max() + np.abs(u[1:]).max())
        r.metrics["analytic_error_over_h2"] = err / grid.h_norm**2
        r.check(err <= 5 * grid.h_norm**2, f"analytic eigenfunction error {err:.3e}")
    return r


def suite_poincare(spec, cfg):
    r = SuiteResult("poincare", True)
    grid = _grid(spec, cfg)
    A = ConnectionState.flat(grid)
    sharp = poincare_estimate(A, method="inverse_power", seed=int(cfg.get("seed", 0)))
    sampled = poincare_estimate(A, samples=10, seed=int(cfg.get("seed", 0)))
    r.metrics["sharp"] = sharp
    r.metrics["sampled"] = sampled
    r.check(sampled <= sharp * (1 + 1e-8), "sampled ratio exceeds the sharp constant")
    if spec.family == "flat":
        rel = abs(sharp * np.pi - 1)
        r.metrics["relative_to_inverse_pi"] = rel
        r.check(rel <= 0.02, f"constant {sharp:.6f} not within 2% of 1/pi")
    return r


def suite_projector(spec, cfg):
    r = SuiteResult("coulomb-projector", True)
    grid = _grid(spec, cfg)
    rng = _rng(cfg, 5)
    A = ConnectionState(grid, _random_eta(grid, rng), tol=1e-12)
    idem = codiv = orth = 0.0
    for _ in range(3):
        om = FormField(1, project1(rng.standard_normal((3, 3) + grid.shape)), grid)
        P = horizontal_project(A, om, tol=1e-12).data
        PP = horizontal_project(A, FormField(1, P, grid), tol=1e-12).data
        n = om.norm()
        idem = max(idem, np.sqrt(inner1(grid, PP - P, PP - P)) / n)
        dv = covariant_d0_adjoint(grid, A.eta_array, P)
        codiv = max(codiv, np.sqrt(inner0(grid, dv, dv)) / n)
        gam = project0(rng.standard_normal((3,) + grid.shape))
        dg = covariant_d0(grid, A.eta_array, gam)
        orth = max(orth, abs(inner1(grid, P, dg)) / (n * np.sqrt(inner0(grid, gam, gam))))
    r.metrics.update(idempotence=float(idem), codivergence=float(codiv), orthogonality=float(orth))
    r.check(idem <= 1e-8, f"P^2 - P = {idem:.3e}")
    r.check(codiv <= 1e-8, f"d*P = {codiv:.3e}")
    r.check(orth <= 1e-8, f"<P w, d gamma> = {orth:.3e}")
    return r


def suite_gauge_fix(spec, cfg):
    r = SuiteResult("gauge-fix", True)
    grid = _grid(spec, cfg)
    rng = _rng(cfg, 6)
    A = ConnectionState.flat(grid, tol=1e-12)
    iters = []
    for _ in range(3):
        eta = _random_eta(grid, rng, 0.05)
        try:
            _, rep = coulomb_gauge_fix(A, FormField(1, eta, grid))
        except GaugeFixError as exc:
            r.check(False, str(exc))
            return r
        iters.append(rep.iterations)
        r.check(rep.residual <= 1e-9, f"residual {rep.residual:.3e}")
    r.metrics["newton_iterations"] = iters
    r.check(max(iters) <= 10, f"Newton needed {max(iters)} iterations")
    gamma = FormField(0, 0.01 * random_conductor(grid, random_modes(rng, 3), 0).data, grid)
    eta = orbit_displacement(A, gamma)
    g, _ = coulomb_gauge_fix(A, eta)
    back = gauge_act_arrays(grid, eta.data, g.values)
    diff = np.sqrt(inner1(grid, back, back)) / gamma.norm()
    r.metrics["vertical_return"] = float(diff)
    r.check(diff <= 1e-6, f"vertical displacement not undone ({diff:.3e})")
    return r


def suite_bct(spec, cfg):
    """Boundary identity for horizontal pairs, always on the warped metric."""
    from .studies import metric_for

    r = SuiteResult("lemma-bct", True)
    warped = spec if spec.family == "warped" else metric_for("warped")
    st = study_bct(_two_levels(cfg), family="warped", params=warped.params,
                   seed=int(cfg.get("seed", 0)), tau_sign=cfg.get("tau_sign", 1.0))
    r.metrics.update(residual=st.residuals, fitted_order=st.order)
    r.check(st.passed, f"residual order {st.order:.3f} < 0.9")
    return r


def suite_t_kernel(spec, cfg):
    """[a.b] vanishing near the faces: identity holds to roundoff."""
    r = SuiteResult("t-kernel", True)
    grid = _grid(spec, cfg)
    A = ConnectionState.flat(grid, tol=1e-12)
    X3 = grid.X[2]
    cut = bump((X3 - 0.5) / 0.25)
    rng = _rng(cfg, 8)
    worst = 0.0
    for _ in range(2):
        a = random_conductor(grid, random_modes(rng, 9), 1).data * cut
        b = random_conductor(grid, random_modes(rng, 9), 1).data * cut
        rep = verify_bct(A, FormField(1, a, grid), FormField(1, b, grid), tau_sign=cfg.get("tau_sign", 1.0),
                         require_horizontal=False)
        worst = max(worst, rep.residual)
    r.metrics["residual"] = worst
    r.check(worst <= 1e-10, f"residual {worst:.3e} for face-free pairs")
    return r


def suite_noboundary(spec, cfg):
    r = SuiteResult("lemma-noboundary", True)
    grid = _grid(spec, cfg)
    X1, X2, X3 = grid.X
    psi = bump((X1 - 0.5) / 0.17) * bump((X2 - 0.5) / 0.17) * bump((X3 - 0.5) / 0.17)
    cert = interior_realize(psi, np.eye(3)[0], np.eye(3)[1], grid=grid)
    r.metrics.update(error=cert.error, div_residual=cert.div_residual)
    r.check(cert.error <= 10 * grid.h_lat**2, f"reconstruction error {cert.error:.3e}")
    r.check(cert.div_residual <= 1e-10, f"d* residual {cert.div_residual:.3e}")
    return r


def suite_lbo(spec, cfg):
    r = SuiteResult("lemma-lbo", True)
    st = study_lbo(_two_levels(cfg), family=spec.family, params=spec.params)
    r.metrics.update(error=st.residuals, cbc_trace=st.extra["cbc_trace"])
    r.check(max(st.extra["cbc_trace"]) <= 1e-12, "constructed forms violate the conductor condition")
    r.check(st.passed, f"reconstruction order {st.order:.3f}")
    return r


def _study_suite(identifier, fn, key=None):
    def run(spec, cfg):
        r = SuiteResult(identifier, True)
        st = fn(_two_levels(cfg), family=spec.family, params=spec.params, seed=int(cfg.get("seed", 0)))
        r.metrics.update(residual=st.residuals, fitted_order=st.order, **st.extra)
        r.check(st.passed, f"residual order {st.order:.3f} < {st.threshold}")
        return r

    run.__name__ = f"suite_{identifier.replace('-', '_')}"
    return run


def suite_holonomy(spec, cfg):
    r = SuiteResult("holonomy", True)
    grid = build_grid(spec, 8, 9)
    A = ConnectionState.flat(grid, tol=1e-12)
    rng = _rng(cfg, 12)
    alpha = horizontal_project(A, random_conductor(grid, random_modes(rng, 9), 1), tol=1e-12).form
    res = horizontal_lift(retrace_loop(A, alpha.data / alpha.sup(), 0.1), steps=8, tol=1e-12)
    lg = float(np.abs(res.log().data).max())
    r.metrics.update(retrace_log=lg, max_vertical=float(res.vertical_residuals.max()))
    r.check(lg <= 1e-8, f"retraced loop has |log g| = {lg:.3e}")
    return r


def suite_serialization(spec, cfg):
    r = SuiteResult("serialization", True)
    n, m = cfg["resolutions"][0]
    # the test bump needs room for one box core; coarser grids are bumped up
    grid = build_grid(spec, max(n, 16), max(m, 17))
    X1, X2, X3 = grid.X
    psi = bump((X1 - 0.5) / 0.17) * bump((X2 - 0.5) / 0.17) * bump((X3 - 0.5) / 0.17)
    cert = interior_realize(psi, np.eye(3)[0], np.eye(3)[1], grid=grid)
    with tempfile.TemporaryDirectory() as tmp:
        save_certificate(cert, tmp)
        rep = verify_certificate_file(tmp)
        r.metrics.update(bit_exact=rep["bit_exact"], error_agreement=rep["error_agreement"])
        r.check(rep["bit_exact"], "reloaded certificate does not reproduce bit-exactly")
        blob = f"{tmp}/psi.clf"
        data = bytearray(open(blob, "rb").read())
        data[len(data) // 2] ^= 0xFF
        open(blob, "wb").write(bytes(data))
        try:
            verify_certificate_file(tmp)
            r.check(False, "corrupted blob was accepted")
        except IntegrityError:
            r.metrics["corruption_detected"] = True
    return r


SUITES = {
    "lie": suite_lie,
    "stokes-adjoint": suite_stokes,
    "green-operator": suite_green,
    "poincare": suite_poincare,
    "coulomb-projector": suite_projector,
    "gauge-fix": suite_gauge_fix,
    "lemma-bct": suite_bct,
    "t-kernel": suite_t_kernel,
    "lemma-noboundary": suite_noboundary,
    "lemma-lbo": suite_lbo,
    "lemma-smooth1": _study_suite("lemma-smooth1", study_smooth1),
    "lemma-smooth2": _study_suite("lemma-smooth2", study_smooth2),
    "theorem-decomposition": _study_suite("theorem-decomposition", study_decompose),
    "holonomy": suite_holonomy,
    "serialization": suite_serialization,
}


def run_suite(name, spec, cfg):
    """Run one suite; unexpected exceptions become a failed result."""
    try:
        return SUITES[name](spec, cfg)
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        r = SuiteResult(name, False)
        r.failures.append(f"{name}: {type(exc).__name__}: {exc}")
        return r
