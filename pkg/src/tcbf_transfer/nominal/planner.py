"""RRT* over a box workspace with inflated spherical obstacles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..abstraction import Obstacle


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    step_length: float = 0.75
    goal_bias: float = 0.1
    rewire_radius: float | None = None  # None: shrinking gamma (log n / n)^(1/3) rule
    max_iterations: int = 1500
    rng_seed: int = 0
    bounds_min: tuple[float, float, float] = (-1.0, -3.0, 0.0)
    bounds_max: tuple[float, float, float] = (11.0, 3.0, 3.0)
    clearance: float = 0.05  # extra distance kept from every inflated sphere
    goal_tolerance: float = 1e-9
    shortcut: bool = True

    def __post_init__(self):
        if not self.step_length > 0:
            raise ValueError("step_length must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if np.any(np.asarray(self.bounds_min) >= np.asarray(self.bounds_max)):
            raise ValueError("workspace bounds must satisfy min < max on every axis")


def segment_sphere_distance(a, b, center) -> float:
    """Distance from ``center`` to the closest point of segment [a, b]."""
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, center))
    d = b - a
    dd = d @ d
    t = 0.0 if dd == 0 else min(1.0, max(0.0, (c - a) @ d / dd))
    return float(np.linalg.norm(a + t * d - c))


def segment_clearance(a, b, obstacles, inflated: bool = True) -> float:
    """min over spheres of (closest-point distance - radius)."""
    best = math.inf
    for o in obstacles:
        rad = o.rho if inflated else o.geometric_radius
        best = min(best, segment_sphere_distance(a, b, o.center) - rad)
    return best


def _segment_free(a, b, centers, radii) -> bool:
    if centers.shape[0] == 0:
        return True
    d = b - a
    dd = d @ d
    if dd == 0:
        t = np.zeros(len(radii))
    else:
        t = np.clip((centers - a) @ d / dd, 0.0, 1.0)
    closest = a + t[:, None] * d
    return bool(np.all(np.linalg.norm(closest - centers, axis=1) > radii))


def rrt_star(config: PlannerConfig, start, goal, obstacles: list[Obstacle]) -> np.ndarray:
    """Waypoints (k, 3) from start to goal; deterministic for a given seed."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    centers = np.array([o.center for o in obstacles]).reshape(-1, 3)
    radii = np.array([o.rho + config.clearance for o in obstacles])
    for name, pt in (("start", start), ("goal", goal)):
        if centers.size and np.any(np.linalg.norm(centers - pt, axis=1) <= radii):
            raise PlanningError(f"{name} {pt.tolist()} lies inside an inflated obstacle")
    lo, hi = np.asarray(config.bounds_min, float), np.asarray(config.bounds_max, float)
    if np.any(start < lo) or np.any(start > hi) or np.any(goal < lo) or np.any(goal > hi):
        raise PlanningError("start and goal must lie inside the workspace bounds")

    rng = np.random.default_rng(config.rng_seed)
    cap = config.max_iterations + 2
    nodes = np.empty((cap, 3))
    parent = np.full(cap, -1, dtype=int)
    cost = np.zeros(cap)
    nodes[0] = start
    n = 1
    volume = float(np.prod(hi - lo))
    gamma = 2.0 * (1.0 + 1.0 / 3.0) ** (1.0 / 3.0) * (volume / (4.0 / 3.0 * math.pi)) ** (1.0 / 3.0)
    best_goal_parent, best_goal_cost = -1, math.inf

    for _ in range(config.max_iterations):
        sample = goal if rng.random() < config.goal_bias else rng.uniform(lo, hi)
        dist = np.linalg.norm(nodes[:n] - sample, axis=1)
        near_idx = int(np.argmin(dist))
        nearest = nodes[near_idx]
        step = sample - nearest
        L = float(np.linalg.norm(step))
        if L == 0.0:
            continue
        new = sample if L <= config.step_length else nearest + step * (config.step_length / L)
        if not _segment_free(nearest, new, centers, radii):
            continue
        if config.rewire_radius is not None:
            radius = config.rewire_radius
        else:
            radius = min(gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / 3.0), 3.0 * config.step_length)
        d_new = np.linalg.norm(nodes[:n] - new, axis=1)
        near = np.flatnonzero(d_new <= max(radius, config.step_length * 1e-9))
        best_p, best_c = near_idx, cost[near_idx] + float(np.linalg.norm(new - nearest))
        free = {}
        for j in near:
            c = cost[j] + d_new[j]
            if c < best_c:
                ok = _segment_free(nodes[j], new, centers, radii)
                free[j] = ok
                if ok:
                    best_p, best_c = int(j), c
        k = n
        nodes[k], parent[k], cost[k] = new, best_p, best_c
        n += 1
        for j in near:
            if j == best_p:
                continue
            c = best_c + d_new[j]
            if c < cost[j] - 1e-12:
                ok = free.get(j)
                if ok is None:
                    ok = _segment_free(nodes[j], new, centers, radii)
                if ok:
                    delta = c - cost[j]
                    parent[j] = k
                    # propagate cost change to the subtree
                    stack = [int(j)]
                    while stack:
                        q = stack.pop()
                        cost[q] += delta
                        stack.extend(np.flatnonzero(parent[:n] == q).tolist())
        d_goal = float(np.linalg.norm(goal - new))
        if d_goal <= config.step_length and _segment_free(new, goal, centers, radii):
            if best_c + d_goal < best_goal_cost:
                best_goal_parent, best_goal_cost = k, best_c + d_goal

    if best_goal_parent < 0:
        raise PlanningError(f"no path found after {config.max_iterations} iterations")
    # rewiring changes branch costs, so re-pick the goal parent over the final tree
    d_goal = np.linalg.norm(nodes[:n] - goal, axis=1)
    cand = np.flatnonzero(d_goal <= config.step_length)
    best_total = cost[best_goal_parent] + d_goal[best_goal_parent]
    for j in cand:
        tot = cost[j] + d_goal[j]
        if tot < best_total and _segment_free(nodes[j], goal, centers, radii):
            best_goal_parent, best_total = int(j), tot
    path = [goal]
    j = best_goal_parent
    while j >= 0:
        path.append(nodes[j])
        j = parent[j]
    path = np.array(path[::-1])
    if np.linalg.norm(path[-1] - path[-2]) <= config.goal_tolerance:
        path = np.delete(path, -2, axis=0)
    if config.shortcut:
        path = shortcut_path(path, obstacles, config.clearance)
    return path


def shortcut_path(path, obstacles: list[Obstacle], clearance: float = 0.0) -> np.ndarray:
    """Greedy line-of-sight pruning: keep a waypoint only when the straight
    segment skipping it would hit an inflated sphere."""
    path = np.asarray(path, dtype=float)
    centers = np.array([o.center for o in obstacles]).reshape(-1, 3)
    radii = np.array([o.rho + clearance for o in obstacles])
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not _segment_free(path[i], path[j], centers, radii):
            j -= 1
        out.append(path[j])
        i = j
    return np.array(out)


def path_length(path) -> float:
    path = np.asarray(path, dtype=float)
    return float(np.linalg.norm(np.diff(path, axis=0), axis=1).sum())


def path_clearance(path, obstacles: list[Obstacle]) -> float:
    path = np.asarray(path, dtype=float)
    return min(segment_clearance(path[i], path[i + 1], obstacles) for i in range(len(path) - 1)) if obstacles else math.inf
