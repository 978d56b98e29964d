"""Seeded audit suite: every closed form against an independent reference.

Each check produces one :class:`CheckRow` holding the worst deviation seen
over its instances and the tolerance it must stay under.  Solvers are looked
up through their modules at call time, so a patched or broken build of a
solver is caught by the suite rather than bypassed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import align, diagnose, linalg, loss, oracle, simulate
from .align import Formulation
from .tensor import ImageRGB


@dataclass(frozen=True)
class CheckRow:
    name: str
    deviation: float
    tolerance: float
    instances: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.deviation) and self.deviation <= self.tolerance)


def _pairs(seed: int, count: int, size: int = 8, structural: float = 0.05):
    rng = np.random.default_rng(seed)
    return [oracle.random_pair(rng, size, size, structural) for _ in range(count)]


def check_affine_oracle(seed: int, count: int) -> list[CheckRow]:
    rows = []
    for form in Formulation:
        for eps in (0.0, 1e-3):
            worst, ok = 0.0, True
            for pred, gt in _pairs(seed, count):
                rep = oracle.oracle_affine(pred, gt, eps, formulation=form)
                worst = max(worst, rep.max_deviation)
                ok &= rep.gradient_norm <= 1e-10
            rows.append(CheckRow(f"affine oracle {form.value} eps={eps:g}",
                                 worst if ok else float("inf"), 1e-6, count))
    return rows


def check_scalar_oracles(seed: int, count: int) -> list[CheckRow]:
    worst_s = worst_d = 0.0
    span = (-4.0, 4.0)  # crosstalk in the random pairs can push a per-channel gain below 0
    for pred, gt in _pairs(seed + 1, count):
        worst_s = max(worst_s, oracle.oracle_scalar_grid(pred, gt, span).max_deviation)
        worst_d = max(worst_d, oracle.oracle_diagonal_grid(pred, gt, span).max_deviation)
    return [CheckRow("scalar grid", worst_s, 1e-4, count),
            CheckRow("diagonal grid", worst_d, 1e-4, count)]


def check_recovery(seed: int, count: int) -> CheckRow:
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for _ in range(count):
        pred = ImageRGB(rng.uniform(0.05, 0.95, size=(3, 16, 16)))
        c0, b0 = oracle.random_transform(rng)
        gt = ImageRGB(np.einsum("ij,jhw->ihw", c0, pred.data) + b0[:, None, None])
        m = align.solve_affine(pred, gt, 0.0, Formulation.COVARIANCE)
        worst = max(worst, float(np.max(np.abs(m.C - c0))), float(np.max(np.abs(m.b - b0))))
    return CheckRow("transform recovery eps=0", worst, 1e-8, count)


def check_pythagorean(seed: int, count: int) -> list[CheckRow]:
    gap = cross = 0.0
    for pred, gt in _pairs(seed + 3, count, size=16):
        r0 = diagnose.verify_pythagorean(pred, gt, 0.0)
        gap = max(gap, abs(r0.identity_gap) / r0.mse_total)
        r1 = diagnose.verify_pythagorean(pred, gt, 1e-3)
        cross = max(cross, r1.cross_term_error / max(abs(r1.predicted_cross_term), 1e-300))
    return [CheckRow("pythagorean eps=0 (relative)", gap, 1e-9, count),
            CheckRow("ridge cross-term eps=1e-3 (relative)", cross, 1e-8, count)]


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


def check_pal_gradient(seed: int, count: int) -> CheckRow:
    cfg = loss.LossConfig(norm=loss.Norm.L2, pixel_norm=loss.Norm.L2)
    worst = 0.0
    for pred, gt in _pairs(seed + 4, count):
        m = loss.solve_alignment(pred, gt, cfg)
        analytic = loss.pal_gradient(pred, gt, cfg, transform=m).total
        fd = oracle.finite_diff(
            lambda x: loss.pal_loss(ImageRGB(x), gt, cfg, transform=m).total_loss,
            pred.data, 1e-6)
        worst = max(worst, _relative(fd, analytic))
    return CheckRow("PAL gradient vs FD (relative)", worst, 1e-6, count)


def check_simulator_gradient(seed: int, count: int) -> CheckRow:
    cfg = simulate.SimulationConfig().with_seed(seed)
    pairs = simulate.generate_pairs(cfg.pairs, 2 * count, stream=5)
    rng = np.random.default_rng(seed + 5)
    worst = 0.0
    for k in range(count):
        model = simulate.ToyModel.initial(rng, jitter=0.2)
        batch = pairs[2 * k:2 * k + 2]
        _, grad, frozen = simulate.loss_and_gradient(model, batch, cfg.loss)
        fd = oracle.finite_diff(
            lambda v: simulate.batch_loss(simulate.ToyModel.from_vector(v), batch, cfg.loss,
                                          transforms=frozen),
            model.to_vector(), 1e-6)
        worst = max(worst, _relative(fd, grad))
    return CheckRow("simulator 33-parameter gradient vs FD (relative)", worst, 1e-5, count)


def check_solve_sym(seed: int, count: int) -> CheckRow:
    rng = np.random.default_rng(seed + 6)
    worst = 0.0
    for _ in range(count):
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        a = q @ np.diag(np.logspace(0, rng.uniform(0, 6), 4)) @ q.T
        a = 0.5 * (a + a.T)
        r = rng.standard_normal((4, 3))
        ref = oracle.gaussian_elimination(a, r)
        worst = max(worst, _relative(linalg.solve_sym(a, r), ref))
    return CheckRow("solve_sym vs Gaussian elimination (relative)", worst, 1e-10, count)


def run_suite(seed: int = 0, quick: bool = False) -> list[CheckRow]:
    """All checks; ``quick`` trims instance counts for a fast smoke run."""
    n_oracle, n_small, n_sim = (4, 5, 1) if quick else (20, 20, 3)
    rows = check_affine_oracle(seed, n_oracle)
    rows += check_scalar_oracles(seed, n_small)
    rows.append(check_recovery(seed, n_small))
    rows += check_pythagorean(seed, n_small if quick else 50)
    rows.append(check_pal_gradient(seed, n_small))
    rows.append(check_simulator_gradient(seed, n_sim))
    rows.append(check_solve_sym(seed, n_small))
    return rows


def format_table(rows: list[CheckRow]) -> str:
    width = max(len(r.name) for r in rows)
    lines = [f"{'check':<{width}}  {'deviation':>12}  {'tolerance':>10}  {'n':>3}  result"]
    for r in rows:
        lines.append(f"{r.name:<{width}}  {r.deviation:12.3e}  {r.tolerance:10.1e}  "
                     f"{r.instances:3d}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
