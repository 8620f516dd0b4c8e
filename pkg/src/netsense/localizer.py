"""Nonlinear least-squares localization from direct and sum ranges.

Each term measures |x - a| + |x - b| - D for a pair of BS positions (a == b
for a direct/monostatic term with D the round-trip range). The fit minimizes
the sum of squared terms with damped Gauss-Newton, multistarted from the
circle intersections of the two smallest direct ranges plus the BS centroid
(two direct ranges alone leave a mirror-location ambiguity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class NlsProblem:
    bs_a: np.ndarray  # (n, 2)
    bs_b: np.ndarray  # (n, 2)
    ranges: np.ndarray  # (n,)

    def __post_init__(self) -> None:
        self.bs_a = np.atleast_2d(np.asarray(self.bs_a, dtype=float))
        self.bs_b = np.atleast_2d(np.asarray(self.bs_b, dtype=float))
        self.ranges = np.asarray(self.ranges, dtype=float)
        stations = {tuple(p) for p in self.bs_a} | {tuple(p) for p in self.bs_b}
        if len(stations) < 3:
            raise ValueError("localization needs at least 3 distinct BSs")

    def residuals(self, xy: np.ndarray) -> np.ndarray:
        da = np.linalg.norm(xy - self.bs_a, axis=1)
        db = np.linalg.norm(xy - self.bs_b, axis=1)
        return da + db - self.ranges

    def jacobian(self, xy: np.ndarray) -> np.ndarray:
        da = xy - self.bs_a
        db = xy - self.bs_b
        na = np.maximum(np.linalg.norm(da, axis=1, keepdims=True), 1e-12)
        nb = np.maximum(np.linalg.norm(db, axis=1, keepdims=True), 1e-12)
        return da / na + db / nb


@dataclass
class GnConfig:
    max_iterations: int = 50
    step_tol: float = 1e-6
    damping: float = 1e-3
    multistart: int = 3


@dataclass
class LocalizationFit:
    location: tuple[float, float]
    residual: float
    converged: bool
    iterations: int


def circle_intersections(
    c1, r1: float, c2, r2: float
) -> list[tuple[float, float]]:
    """Intersection points of two circles; empty list when degenerate."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    d = float(np.linalg.norm(c2 - c1))
    if d < 1e-12:
        return []
    a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h2 = r1 * r1 - a * a
    ex = (c2 - c1) / d
    mid = c1 + a * ex
    if h2 < 0:
        return []
    h = math.sqrt(h2)
    perp = np.array([-ex[1], ex[0]])
    if h < 1e-12:
        return [tuple(mid)]
    return [tuple(mid + h * perp), tuple(mid - h * perp)]


def _midpoint_projection(c1, r1, c2, r2) -> tuple[float, float]:
    """Fallback start when the two circles do not intersect."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    d = float(np.linalg.norm(c2 - c1))
    if d < 1e-12:
        return tuple(c1 + np.array([r1, 0.0]))
    ex = (c2 - c1) / d
    return tuple(c1 + ex * (0.5 * (d + r1 - r2)))


def initial_guess(problem: NlsProblem) -> list[tuple[float, float]]:
    """Candidate starting points: circle intersections then the BS centroid."""
    mono = [
        (tuple(problem.bs_a[i]), problem.ranges[i] / 2.0)
        for i in range(len(problem.ranges))
        if np.allclose(problem.bs_a[i], problem.bs_b[i])
    ]
    mono.sort(key=lambda cr: cr[1])
    starts: list[tuple[float, float]] = []
    picked = []
    for c, r in mono:
        if all(not np.allclose(c, pc) for pc, _ in picked):
            picked.append((c, r))
        if len(picked) == 2:
            break
    if len(picked) == 2:
        (c1, r1), (c2, r2) = picked
        pts = circle_intersections(c1, r1, c2, r2)
        starts.extend(pts if pts else [_midpoint_projection(c1, r1, c2, r2)])
    stations = np.unique(np.vstack([problem.bs_a, problem.bs_b]), axis=0)
    starts.append(tuple(stations.mean(axis=0)))
    return starts


def gauss_newton(
    problem: NlsProblem, start, cfg: GnConfig
) -> LocalizationFit:
    """Damped Gauss-Newton descent from one starting point."""
    xy = np.asarray(start, dtype=float).copy()
    lam = cfg.damping
    # a start sitting exactly on a BS makes the gradient singular
    for p in np.vstack([problem.bs_a, problem.bs_b]):
        if np.linalg.norm(xy - p) < 1e-9:
            xy = xy + 1e-6
    r = problem.residuals(xy)
    sse = float(r @ r)
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        jac = problem.jacobian(xy)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        step = None
        while lam < 1e9:
            try:
                step = np.linalg.solve(jtj + lam * np.eye(2), -jtr)
            except np.linalg.LinAlgError:
                lam *= 4.0
                continue
            trial = xy + step
            r_trial = problem.residuals(trial)
            sse_trial = float(r_trial @ r_trial)
            if sse_trial <= sse:
                xy, r, sse = trial, r_trial, sse_trial
                lam = max(lam * 0.5, 1e-12)
                break
            lam *= 4.0
            step = None
        if step is None:
            break
        if np.linalg.norm(step) < cfg.step_tol:
            converged = True
            break
    return LocalizationFit(
        location=(float(xy[0]), float(xy[1])),
        residual=sse,
        converged=converged,
        iterations=it,
    )


def fit(problem: NlsProblem, cfg: GnConfig) -> LocalizationFit:
    """Best fit over all multistart initial points."""
    starts = initial_guess(problem)[: max(cfg.multistart, 1)]
    best: LocalizationFit | None = None
    for s in starts:
        f = gauss_newton(problem, s, cfg)
        if best is None or f.residual < best.residual:
            best = f
    if best is None or not math.isfinite(best.residual):
        return LocalizationFit((math.nan, math.nan), math.inf, False, 0)
    return best
