"""
Chaos and regularity probes.

Every probe returns a ``ProbeReport``. Bounded searches only ever report
``EvidenceFor`` or ``NoWitnessUpToBound`` together with the bounds used;
``Established`` is reserved for exact, exhaustive checks and exact witnesses
of existential claims.
"""

import logging
import math
import time
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import settings
from .exact import Quad, TorusPoint, circle_gap, quad_cmp, rat, rat_to_str, sq_dist
from .exceptions import BadParams, SearchFailed, UnsupportedRegion
from .pseudogroup import (
    BiSeq,
    CantorPoint,
    CompactGenSystem,
    GeneratorSet,
    LevelPoint,
    LinePoint,
    OrbitStatus,
    PartialMap,
    Word,
    apply_word,
    combine,
    enumerate_words,
    identity_rule,
    orbit_bfs,
    point_sq_distance,
    point_to_dict,
    point_to_float,
    restricted_orbit,
    sigma_of_system,
    sq_dist_batch,
    torus_part,
    word_germ,
)
from .regions import FULL, INSIDE, OUTSIDE, Ball, Box, Cylinder, IntervalSet, LevelRegion, Region
from .schemas import IsometryCertificate, IsometryCheck, ProbeReport, Verdict
from .systems import BuiltSystem, FamilyBData

logger = logging.getLogger(__name__)

TRANSITIVITY_THRESHOLD = 0.95
DEFAULT_SENSITIVITY_C = Fraction(1, 8)
DYADIC_BITS = 20

_CELL_OFFSETS = np.array([1.0, 3.0, 5.0]) / 6.0


def _timing(t0: float) -> Dict[str, float]:
    return {"seconds": round(time.perf_counter() - t0, 6)}


def _point_label(point) -> str:
    return repr(point)


def _with_coords(point, x: Fraction, y: Fraction = Fraction(0)):
    """A point of the same space and level as ``point`` at new coordinates."""
    if isinstance(point, TorusPoint):
        return TorusPoint(x, y)
    if isinstance(point, LevelPoint):
        return LevelPoint(point.level, TorusPoint(x, y))
    if isinstance(point, LinePoint):
        return LinePoint(x)
    raise UnsupportedRegion(f"no coordinate perturbations for {type(point).__name__}")


def _coords(point) -> Tuple[Fraction, Fraction]:
    if isinstance(point, LinePoint):
        return point.t, Fraction(0)
    tp = torus_part(point)
    return tp.x, tp.y


def default_start(space: str, level: int = 0):
    if space == "torus":
        return TorusPoint.of("1/10", "1/10")
    if space == "torus-level":
        return LevelPoint.of("1/10", "1/10", level)
    if space == "line":
        return LinePoint(Fraction(1, 10))
    raise UnsupportedRegion(f"no default start point on a {space} space")


def random_points(space: str, count: int, rng: np.random.Generator, level: int = 0) -> List:
    """Seeded dyadic points (denominator 2^20) of the given space."""
    scale = 1 << DYADIC_BITS
    out = []
    for _ in range(count):
        x = Fraction(int(rng.integers(0, scale)), scale)
        y = Fraction(int(rng.integers(0, scale)), scale)
        if space == "torus":
            out.append(TorusPoint(x, y))
        elif space == "torus-level":
            out.append(LevelPoint(level, TorusPoint(x, y)))
        elif space == "line":
            out.append(LinePoint(x))
        else:
            raise UnsupportedRegion(f"cannot sample points of a {space} space")
    return out


def perturbations(point, r: Fraction, rng: np.random.Generator, n_random: int = 4,
                  fractions: Sequence[Fraction] = (Fraction(1, 2),)) -> List:
    """Points of the open ball B(point, r): an axis/diagonal pattern plus seeded dyadic points.

    For each entry f of ``fractions`` the pattern holds the four axis points
    at distance f*r and the four diagonal points (±f*r*2/3, ±f*r*2/3).
    """
    r = rat(r)
    line = isinstance(point, LinePoint)
    x, y = _coords(point)
    offsets: List[Tuple[Fraction, Fraction]] = []
    for f in fractions:
        a = f * r
        d = a * Fraction(2, 3)
        if line:
            offsets += [(a, 0), (-a, 0), (d, 0), (-d, 0)]
        else:
            offsets += [(a, 0), (-a, 0), (0, a), (0, -a), (d, d), (d, -d), (-d, d), (-d, -d)]
    scale = 1 << DYADIC_BITS
    r_float = float(r)
    for _ in range(n_random):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        radius = r_float * math.sqrt(rng.uniform(0.0, 1.0))
        dx = Fraction(round(radius * math.cos(angle) * scale), scale)
        dy = Fraction(0) if line else Fraction(round(radius * math.sin(angle) * scale), scale)
        while dx * dx + dy * dy >= r * r:
            dx, dy = dx / 2, dy / 2
        if dx or dy:
            offsets.append((dx, dy))
    return [_with_coords(point, x + dx, y + dy) for dx, dy in offsets]


# -----------------------------
# Transitivity
# -----------------------------
def target_cells(target: Region, grid: int, level: int = 0) -> np.ndarray:
    """Cells of the grid x grid partition meeting ``target``, probed at 9 points per cell."""
    i, j, a, b = np.meshgrid(np.arange(grid), np.arange(grid), _CELL_OFFSETS, _CELL_OFFSETS, indexing="ij")
    x = ((i + a) / grid).ravel()
    y = ((j + b) / grid).ravel()
    inside = target.contains_batch(x, y, np.full(x.shape, level))
    return np.asarray(inside, dtype=bool).reshape(grid, grid, 9).any(axis=2)


def _mark(visited: np.ndarray, x, y, level, on_level: int) -> None:
    grid = visited.shape[0]
    keep = level == on_level
    ci = np.minimum((x[keep] * grid).astype(int), grid - 1)
    cj = np.minimum((y[keep] * grid).astype(int), grid - 1)
    visited[ci, cj] = True


def _walk(gens: GeneratorSet, letters, start, steps: int, walkers: int, rng: np.random.Generator,
          grid: int, spread: float, trace_len: int):
    sx, sy, sl = point_to_float(start)
    x = (sx + rng.uniform(-spread, spread, walkers)) % 1.0
    y = (sy + rng.uniform(-spread, spread, walkers)) % 1.0
    level = np.full(walkers, sl, dtype=int)
    visited = np.zeros((grid, grid), dtype=bool)
    _mark(visited, x, y, level, sl)
    trace = []
    if letters:
        for step in range(steps):
            choice = rng.integers(len(letters), size=walkers)
            for k, (gid, e) in enumerate(letters):
                mask = choice == k
                if not mask.any():
                    continue
                nx, ny, nl, ok = gens[gid].apply_batch(x[mask], y[mask], level[mask], e)
                idx = np.flatnonzero(mask)[ok]
                x[idx], y[idx], level[idx] = nx[ok], ny[ok], nl[ok]
            _mark(visited, x, y, level, sl)
            if step < trace_len:
                trace.append({"step": step + 1, "x": float(x[0]), "y": float(y[0]), "level": int(level[0])})
    return visited, trace


def probe_transitivity(system: BuiltSystem, start=None, grid: int = 32, max_steps: int = 100_000,
                       seed: int = 0, target: Optional[Region] = None, walkers: int = 64,
                       threshold: float = TRANSITIVITY_THRESHOLD, retries: int = 3,
                       letters: str = "forward", spread: float = 1e-6, trace_len: int = 0) -> ProbeReport:
    """Seeded random word walk; coverage of the grid cells meeting the target region.

    The walkers start in a box of half-width ``spread`` around ``start`` and
    each takes ceil(max_steps / walkers) steps. A retry reseeds the walk.
    """
    t0 = time.perf_counter()
    gens = system.generators
    if gens.space not in ("torus", "torus-level"):
        raise UnsupportedRegion(f"transitivity cells need a torus space, {system.name} acts on {gens.space}")
    if grid < 1 or walkers < 1 or max_steps < 0 or retries < 1:
        raise BadParams("grid, walkers and retries must be positive")
    if letters not in ("forward", "both"):
        raise BadParams("letters must be 'forward' or 'both'")
    start = start if start is not None else default_start(gens.space)
    target = target if target is not None else (system.target or FULL)
    _, _, level = point_to_float(start)
    cells = target_cells(target, grid, level)
    n_cells = int(cells.sum())
    if n_cells == 0:
        raise BadParams("the target region meets no grid cell")
    alphabet = [(gid, 1) for gid in gens.ids] if letters == "forward" else gens.letters
    steps = -(-max_steps // walkers)

    attempts = []
    trace: List[dict] = []
    coverage = 0.0
    for attempt in range(retries):
        rng = np.random.default_rng([seed, attempt])
        visited, walk_trace = _walk(gens, alphabet, start, steps, walkers, rng, grid, spread,
                                    trace_len if attempt == 0 else 0)
        if attempt == 0:
            trace = walk_trace
        hit = int((visited & cells).sum())
        coverage = hit / n_cells
        attempts.append({"attempt": attempt, "seed": [seed, attempt], "cells_visited": hit, "coverage": coverage})
        logger.info("transitivity %s attempt %d: %d/%d cells", system.name, attempt, hit, n_cells)
        if coverage >= threshold:
            break

    verdict = Verdict.EVIDENCE_FOR if coverage >= threshold else Verdict.NO_WITNESS
    tables = {"attempts": attempts}
    if trace:
        tables["trace"] = trace
    return ProbeReport(
        probe="transitivity",
        system=system.name,
        claim="orbit walks from the start point visit every cell meeting the target region",
        presentation=gens.ids,
        params={"start": point_to_dict(start), "grid": grid, "max_steps": max_steps, "walkers": walkers,
                "seed": seed, "letters": letters, "spread": spread, "threshold": threshold},
        verdict=verdict,
        metrics={"coverage": coverage, "cells_total": n_cells, "attempts": len(attempts),
                 "steps_per_walker": steps},
        bounds={"max_steps": max_steps, "retries": retries},
        timing=_timing(t0),
        tables=tables,
    )


# -----------------------------
# Sensitivity
# -----------------------------
class _FloatBatch:
    """Groups of points (base point first) moved through words in float arithmetic."""

    def __init__(self, space: str, x, y, level, alive):
        self.space = space
        self.x, self.y, self.level, self.alive = x, y, level, alive

    @classmethod
    def of(cls, space: str, groups: Sequence[Sequence]) -> "_FloatBatch":
        coords = np.array([[point_to_float(p) for p in g] for g in groups], dtype=float)
        return cls(space, coords[..., 0], coords[..., 1], coords[..., 2].astype(int),
                   np.ones(coords.shape[:2], dtype=bool))

    def step(self, gen, exponent: int) -> "_FloatBatch":
        shape = self.x.shape
        nx, ny, nl, ok = gen.apply_batch(self.x.ravel(), self.y.ravel(), self.level.ravel(), exponent)
        alive = self.alive & np.asarray(ok, dtype=bool).reshape(shape)
        alive &= alive[:, :1]
        return _FloatBatch(self.space, nx.reshape(shape), ny.reshape(shape), np.asarray(nl).reshape(shape), alive)

    def any_base_alive(self) -> bool:
        return bool(self.alive[:, 0].any())

    def separations(self, threshold_sq: Quad) -> Tuple[np.ndarray, np.ndarray]:
        d2 = sq_dist_batch(self.space, self.x[:, :1], self.y[:, :1], self.level[:, :1],
                           self.x, self.y, self.level)
        d2 = np.where(self.alive, d2, 0.0).max(axis=1)
        return np.sqrt(d2), d2 >= float(threshold_sq)


class _ExactBatch:
    def __init__(self, groups: List[List]):
        self.groups = groups

    @classmethod
    def of(cls, space: str, groups: Sequence[Sequence]) -> "_ExactBatch":
        return cls([list(g) for g in groups])

    def step(self, gen, exponent: int) -> "_ExactBatch":
        out = []
        for g in self.groups:
            if g[0] is None:
                out.append([None] * len(g))
                continue
            moved = [None if p is None else gen.apply(p, exponent) for p in g]
            out.append(moved if moved[0] is not None else [None] * len(g))
        return _ExactBatch(out)

    def any_base_alive(self) -> bool:
        return any(g[0] is not None for g in self.groups)

    def separations(self, threshold_sq: Quad) -> Tuple[np.ndarray, np.ndarray]:
        seps, reached = [], []
        for g in self.groups:
            best = Quad(0)
            if g[0] is not None:
                for p in g[1:]:
                    if p is not None:
                        d = point_sq_distance(g[0], p)
                        if quad_cmp(d, best) > 0:
                            best = d
            seps.append(math.sqrt(float(best)))
            reached.append(quad_cmp(best, threshold_sq) >= 0)
        return np.array(seps), np.array(reached, dtype=bool)


def _search_word_tree(batch, gens: GeneratorSet, depth: int, threshold_sq: Quad, max_words: int,
                      stop_early: bool):
    """Iterative deepening over the reduced word tree.

    Layer k visits the words of length k in breadth-first order, so a deeper
    search always repeats the shallower one first.
    """
    n = len(batch.groups) if isinstance(batch, _ExactBatch) else batch.x.shape[0]
    best = np.zeros(n)
    reached = np.zeros(n, dtype=bool)
    best_word: List[Optional[str]] = [None] * n
    letters = gens.letters
    words = 0
    layers = 0
    for k in range(1, depth + 1):
        layers = k
        stack = [(batch, ())]
        while stack:
            parent, word = stack.pop()
            if word:
                gid, e = word[-1]
                current = parent.step(gens[gid], e)
                if not current.any_base_alive():
                    continue
            else:
                current = parent
            if len(word) == k:
                words += 1
                seps, hit = current.separations(threshold_sq)
                better = seps > best
                if better.any():
                    label = str(Word(word))
                    for idx in np.flatnonzero(better):
                        best_word[idx] = label
                    best = np.maximum(best, seps)
                reached |= hit
                if (stop_early and reached.all()) or words >= max_words:
                    return best, reached, best_word, words, layers
                continue
            children = [l for l in letters if not (word and word[-1] == (l[0], -l[1]))]
            for letter in reversed(children):
                stack.append((current, word + (letter,)))
    return best, reached, best_word, words, layers


def probe_sensitivity(system: BuiltSystem, presentation: Optional[GeneratorSet] = None, samples=32,
                      radius_schedule: Sequence = (Fraction(1, 64),), depth: int = 10, seed: int = 0,
                      threshold: Optional[Fraction] = None, compact: Optional[CompactGenSystem] = None,
                      n_random: int = 4, max_words: int = 200_000, mode: str = "float",
                      level: int = 0, stop_early: bool = True) -> ProbeReport:
    """Bounded search for a sensitivity constant of one presentation.

    For every sample x and radius r the reduced words up to ``depth`` are
    applied to x and to perturbed points y in B(x, r); the empirical constant
    is the minimum over (x, r) of the largest d(wx, wy) found. The threshold
    is ``threshold`` if given, else sigma/2 of ``compact``, else 1/8.
    """
    t0 = time.perf_counter()
    gens = presentation if presentation is not None else system.generators
    rng = np.random.default_rng(seed)
    if isinstance(samples, int):
        points = random_points(gens.space, samples, rng, level)
    else:
        points = list(samples)
    radii = [rat(r) for r in radius_schedule]
    if not points or not radii:
        raise BadParams("sensitivity needs at least one sample and one radius")
    if mode not in ("float", "exact"):
        raise BadParams("sensitivity mode must be 'float' or 'exact'")

    if threshold is not None:
        c = rat(threshold)
        threshold_sq = Quad(c * c)
        source = "caller"
    elif compact is not None:
        threshold_sq = sigma_of_system(compact) * Fraction(1, 4)
        source = "sigma/2"
    else:
        threshold_sq = Quad(DEFAULT_SENSITIVITY_C ** 2)
        source = "default"
    threshold_value = float(threshold_sq) ** 0.5 if not threshold_sq.infinite else math.inf

    groups, keys = [], []
    for p in points:
        for r in radii:
            groups.append([p] + perturbations(p, r, rng, n_random))
            keys.append((p, r))
    width = max(len(g) for g in groups)
    groups = [g + [g[0]] * (width - len(g)) for g in groups]
    batch = _FloatBatch.of(gens.space, groups) if mode == "float" else _ExactBatch.of(gens.space, groups)

    best, reached, best_word, words, layers = _search_word_tree(batch, gens, depth, threshold_sq,
                                                                max_words, stop_early)
    c_hat = float(best.min()) if len(best) else 0.0
    verdict = Verdict.EVIDENCE_FOR if bool(reached.all()) else Verdict.NO_WITNESS
    rows = [{"sample": _point_label(p), "radius": rat_to_str(r), "max_separation": float(s), "word": w}
            for (p, r), s, w in zip(keys, best, best_word)]
    weakest = int(np.argmin(best))
    logger.info("sensitivity %s: c_hat=%.6g after %d words (threshold %.6g)", system.name, c_hat, words,
                threshold_value)
    return ProbeReport(
        probe="sensitivity",
        system=system.name,
        claim="a sensitivity constant exists for this presentation and metric",
        presentation=gens.ids,
        params={"samples": len(points), "radius_schedule": [rat_to_str(r) for r in radii], "depth": depth,
                "seed": seed, "n_random": n_random, "mode": mode, "threshold_source": source},
        verdict=verdict,
        metrics={"c_hat": c_hat, "threshold": threshold_value, "max_separation": float(best.max()),
                 "words_evaluated": words, "depth_searched": layers,
                 "samples_reaching_threshold": int(reached.sum())},
        witnesses=[rows[weakest]],
        bounds={"depth": depth, "max_words": max_words},
        timing=_timing(t0),
        tables={"samples": rows},
    )


# -----------------------------
# Density of periodic orbits
# -----------------------------
def _grid_candidates(center, eps: Fraction, denominator: int) -> List:
    x, y = _coords(center)
    i0, j0 = round(x * denominator), round(y * denominator)
    out = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            p = _with_coords(center, Fraction(i0 + di, denominator), Fraction(j0 + dj, denominator))
            d = sq_dist(torus_part(p), torus_part(center))
            if d <= eps * eps:
                out.append((d, p))
    out.sort(key=lambda item: (item[0], item[1].sort_key()))
    return [p for _, p in out]


def _family_b_candidates(center: LevelPoint, eps: Fraction, data: FamilyBData, tilde_sets) -> List:
    out = []
    for m in range(1, data.n_max + 1):
        for p in _grid_candidates(center.point, eps, 2 ** m):
            if p in tilde_sets[m]:
                out.append(LevelPoint(center.level, p))
    return out


def _cantor_candidate(cylinder: Cylinder) -> CantorPoint:
    """The periodic point repeating the cylinder word followed by a 1, aligned with the cylinder."""
    word = "".join(map(str, cylinder.word)) + "1"
    seq = BiSeq.periodic(word).shift(-cylinder.start)
    return CantorPoint(cylinder.level, seq)


def _cantor_cylinders(count: int, window: int, rng: np.random.Generator) -> List[Cylinder]:
    out = []
    for s in range(count):
        level = s % 2
        bits = [int(b) for b in rng.integers(0, 2, size=2 * window + 1)]
        for i in range(-level + 1, level):
            bits[window + i] = 0
        out.append(Cylinder(level, -window, bits))
    return out


def probe_dpo(system: BuiltSystem, U: Optional[Region] = None, grid: int = 4, samples: int = 10,
              eps: Optional[Fraction] = None, levels: Optional[Sequence[int]] = None, denominator: int = 16,
              window: int = 2, seed: int = 0, max_nodes: Optional[int] = None, max_level: Optional[int] = None,
              global_check: int = 0, global_bound: int = 1000) -> ProbeReport:
    """Look for points with a finite restricted orbit near every sample of U.

    Torus systems sample the centers of a grid x grid partition, the line
    ``samples`` evenly spaced points of U, the Cantor system ``samples``
    seeded cylinders of radius ``window``. Candidates come from a rational
    grid of the given denominator, from the Q~_m sets for family B, from the
    sample itself on the line and from periodic points in the cylinder.
    """
    t0 = time.perf_counter()
    gens = system.generators
    space = gens.space
    max_nodes = max_nodes or settings.max_nodes
    max_level = max_level if max_level is not None else settings.max_level
    eps = rat(eps) if eps is not None else Fraction(1, 16)
    rng = np.random.default_rng(seed)
    data = system.data

    if space == "line":
        U = U if U is not None else IntervalSet.parse("0:3/2")
        lo, hi = U.bounds()
        sample_points = [LinePoint(lo + (hi - lo) * Fraction(2 * i + 1, 2 * samples)) for i in range(samples)]
        sample_points = [p for p in sample_points if U.contains(p)]
    elif space == "cantor":
        U = U if U is not None else FULL
        sample_points = _cantor_cylinders(samples, window, rng)
    elif space in ("torus", "torus-level"):
        levels = list(levels) if levels is not None else [0]
        if U is None:
            if isinstance(data, FamilyBData):
                U = LevelRegion({n: data.M(data.n_max) for n in data.levels})
            else:
                U = system.target or FULL
        sample_points = []
        for lv in levels:
            for i in range(grid):
                for j in range(grid):
                    c = TorusPoint(Fraction(2 * i + 1, 2 * grid), Fraction(2 * j + 1, 2 * grid))
                    p = c if space == "torus" else LevelPoint(lv, c)
                    if U.contains(p):
                        sample_points.append(p)
    else:
        raise UnsupportedRegion(f"no sampling rule for a {space} space")

    tilde_sets = ({m: set(pts) for m, pts in data.Q_tilde.items()} if isinstance(data, FamilyBData) else None)
    witnesses, missing = [], []
    for sample in sample_points:
        if isinstance(sample, Cylinder):
            candidates = [_cantor_candidate(sample)]
        elif space == "line":
            candidates = [sample]
        elif tilde_sets is not None:
            candidates = _family_b_candidates(sample, eps, data, tilde_sets)
        else:
            candidates = _grid_candidates(sample, eps, denominator)
        found = None
        for cand in candidates:
            if not U.contains(cand):
                continue
            ro = restricted_orbit(gens, U, cand, max_nodes, max_level)
            if ro.finite:
                found = (cand, ro)
                break
        label = sample.to_dict() if isinstance(sample, Cylinder) else point_to_dict(sample)
        if found is None:
            missing.append(label)
            continue
        cand, ro = found
        witnesses.append({"sample": label, "witness": point_to_dict(cand), "orbit_size": ro.count,
                          "method": ro.method})

    metrics = {"samples": len(sample_points), "witnessed": len(witnesses),
               "max_orbit_size": max((w["orbit_size"] for w in witnesses), default=0)}
    if global_check:
        if space != "line":
            raise BadParams("the global finite-orbit comparison is implemented for the line")
        lo, hi = U.bounds()
        finite = 0
        for i in range(global_check):
            p = LinePoint(lo + (hi - lo) * Fraction(2 * i + 1, 2 * global_check))
            if orbit_bfs(gens, p, global_bound, max_level).status == OrbitStatus.COMPLETE:
                finite += 1
        metrics.update({"global_samples": global_check, "global_finite_orbits": finite})

    established = bool(sample_points) and not missing
    verdict = Verdict.ESTABLISHED if established else Verdict.NO_WITNESS
    logger.info("dpo %s: %d/%d samples witnessed", system.name, len(witnesses), len(sample_points))
    return ProbeReport(
        probe="dpo",
        system=system.name,
        claim="points with finite restricted orbit are dense in U",
        presentation=gens.ids,
        params={"U": U.to_dict(), "grid": grid, "samples": samples, "eps": rat_to_str(eps), "seed": seed,
                "denominator": denominator, "window": window, "levels": levels},
        verdict=verdict,
        metrics=metrics,
        witnesses=witnesses,
        bounds={"max_nodes": max_nodes, "max_level": max_level, "unwitnessed": missing,
                "global_bound": global_bound if global_check else None},
        timing=_timing(t0),
        tables={"witnesses": [{"sample": str(w["sample"]), "witness": str(w["witness"]),
                               "orbit_size": w["orbit_size"]} for w in witnesses]},
    )


# -----------------------------
# Orbits and isometry certificates
# -----------------------------
def probe_orbit(system: BuiltSystem, x, max_nodes: Optional[int] = None,
                max_level: Optional[int] = None) -> ProbeReport:
    """Breadth-first orbit graph of x; the graph goes in the witness, its edges in a table."""
    t0 = time.perf_counter()
    max_nodes = max_nodes or settings.max_nodes
    max_level = max_level if max_level is not None else settings.max_level
    gens = system.generators
    graph = orbit_bfs(gens, x, max_nodes, max_level)
    closed = graph.complete and graph.verify_closure(gens)
    logger.info("orbit of %r in %s: %d nodes, %s", x, system.name, len(graph), graph.status.value)
    return ProbeReport(
        probe="orbit",
        system=system.name,
        claim="the orbit of x is finite",
        presentation=gens.ids,
        params={"x": point_to_dict(x), "max_nodes": max_nodes, "max_level": max_level},
        verdict=Verdict.ESTABLISHED if closed else Verdict.NO_WITNESS,
        metrics={"nodes": len(graph), "edges": len(graph.edges), "status": graph.status.value,
                 "levels": graph.levels()},
        witnesses=[graph.to_dict()],
        bounds={"max_nodes": max_nodes, "max_level": max_level},
        timing=_timing(t0),
        tables={"edges": graph.edges_frame().to_dict("records"),
                "nodes": [dict(index=i, **point_to_dict(p)) for i, p in enumerate(graph.nodes)]},
    )


def certify_orbit_isometry(system_name: str, presentation: GeneratorSet, base, max_nodes: Optional[int] = None,
                           max_level: Optional[int] = None,
                           claim: str = "every generator acting at the orbit is an isometry") -> IsometryCertificate:
    """Inspect the local action of every letter at every node of the orbit of ``base``."""
    max_nodes = max_nodes or settings.max_nodes
    max_level = max_level if max_level is not None else settings.max_level
    graph = orbit_bfs(presentation, base, max_nodes, max_level)
    checks: List[IsometryCheck] = []
    counterexample = None
    for node in graph.nodes:
        for gid, e in presentation.letters:
            action = presentation[gid].local_action(node, e)
            if action is None:
                continue
            check = IsometryCheck(node=point_to_dict(node), **action.to_dict())
            checks.append(check)
            if not check.isometric and counterexample is None:
                counterexample = check
    if counterexample is not None:
        verdict = Verdict.COUNTEREXAMPLE
    elif graph.status == OrbitStatus.TRUNCATED_BY_NODE_BOUND:
        verdict = Verdict.NO_WITNESS
    else:
        verdict = Verdict.ESTABLISHED
    logger.info("isometry certificate for %s at %r: %d nodes, %d checks, %s", system_name, base,
                len(graph), len(checks), verdict.value)
    return IsometryCertificate(
        system=system_name,
        claim=claim,
        base=point_to_dict(base),
        presentation=presentation.ids,
        orbit_status=graph.status.value,
        nodes_visited=len(graph),
        checks=checks,
        verdict=verdict,
        counterexample=counterexample,
        bounds={"max_nodes": max_nodes, "max_level": max_level},
    )


# -----------------------------
# Halo dichotomy
# -----------------------------
def _defined_words(gens: GeneratorSet, x, depth: int, limit: int) -> List[Tuple[Word, object]]:
    """Reduced words up to ``depth`` defined at x, breadth first, with their images."""
    out = []
    layer = [((), x)]
    for _ in range(depth):
        nxt = []
        for letters, p in layer:
            for gid, e in gens.letters:
                if letters and letters[-1] == (gid, -e):
                    continue
                q = gens[gid].apply(p, e)
                if q is None:
                    continue
                w = letters + ((gid, e),)
                nxt.append((w, q))
                out.append((Word(w), q))
                if len(out) >= limit:
                    return out
        layer = nxt
    return out


def _halo_separation(sys: CompactGenSystem, x, words, candidates, half_sigma_sq: Quad) -> Optional[dict]:
    for word, _ in words:
        extended = sys.extend_word(word)
        image = apply_word(sys.Ftilde, extended, x)
        if not image.defined:
            continue
        for y in candidates:
            ev = apply_word(sys.Ftilde, extended, y)
            if not ev.defined:
                continue
            d = point_sq_distance(image.point, ev.point)
            if quad_cmp(d, half_sigma_sq) >= 0:
                return {"word": str(word), "extended_word": str(extended), "y": point_to_dict(y),
                        "separation": math.sqrt(float(d))}
    return None


def _halo_transport(sys: CompactGenSystem, x, r_sq: Quad, depth: int, limit: int) -> Tuple[bool, int, Optional[str]]:
    """Push B(x, rho) through every reduced F-word up to ``depth``.

    Returns (certified, balls checked, word at which a ball straddled a boundary).
    """
    layer = [((), x, r_sq)]
    checked = 0
    for _ in range(depth):
        nxt = []
        for letters, center, radius in layer:
            for gid, e in sys.F.letters:
                if letters and letters[-1] == (gid, -e):
                    continue
                step = sys.F[gid].transport(center, radius, e)
                checked += 1
                if step.status == OUTSIDE:
                    continue
                w = letters + ((gid, e),)
                if step.status != INSIDE:
                    return False, checked, str(Word(w))
                nxt.append((w, step.center, step.r_sq))
                if checked >= limit:
                    return False, checked, None
        layer = nxt
    return True, checked, None


def _dyadic_at_most(value: Fraction) -> Fraction:
    """Largest 2**-k (k >= 0) that is <= value, for 0 < value."""
    k = 0
    while Fraction(1, 2 ** k) > value:
        k += 1
    return Fraction(1, 2 ** k)


def halo_schedule(sigma_sq: Quad) -> Tuple[Fraction, Fraction]:
    """Default radii: dyadic sigma/4 and sigma/16, or 1/8 and 1/16 when sigma is infinite."""
    if sigma_sq.infinite:
        return Fraction(1, 8), Fraction(1, 16)
    sigma_lo = sigma_sq.sqrt_bounds()[0]
    if sigma_lo <= 0:
        raise BadParams("sigma is zero; the extended domains touch the restricted ones")
    return _dyadic_at_most(sigma_lo / 4), _dyadic_at_most(sigma_lo / 16)


def halo_dichotomy_probe(sys: CompactGenSystem, x, depth: int = 6,
                         rho_schedule: Optional[Sequence] = None, seed: int = 0,
                         n_random: int = 16, limit: int = 100_000, system_name: Optional[str] = None) -> ProbeReport:
    """Per radius rho: branch (ii) if some F-word w defined at x and y in B(x, rho) give
    d(w~x, w~y) >= sigma/2, else branch (i) if ball transport keeps B(x, rho) inside
    every domain along every F-word. Overall (ii) needs a witness at every rho.

    Separation is only searched within sigma/4 of x (``rho_separation``), so a
    witness always means the word at least doubled a distance. Without a
    schedule the radii are taken from :func:`halo_schedule`.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    sigma_sq = sigma_of_system(sys)
    half_sigma_sq = sigma_sq * Fraction(1, 4)
    words = _defined_words(sys.F, x, depth, limit)
    if rho_schedule is None:
        rho_schedule = halo_schedule(sigma_sq)
    separation_cap = None if sigma_sq.infinite else sigma_sq.sqrt_bounds()[0] / 4
    per_rho = []
    for rho in (rat(r) for r in rho_schedule):
        entry = {"rho": rat_to_str(rho), "branch": None}
        if separation_cap:
            rho_sep = min(rho, separation_cap)
            entry["rho_separation"] = rat_to_str(rho_sep)
            candidates = perturbations(x, rho_sep, rng, n_random, fractions=(Fraction(1, 2), Fraction(7, 8)))
            witness = _halo_separation(sys, x, words, candidates, half_sigma_sq)
            if witness is not None:
                entry.update(branch="ii", witness=witness)
                per_rho.append(entry)
                continue
        certified, checked, straddle = _halo_transport(sys, x, Quad(rho * rho), depth, limit)
        entry["balls_checked"] = checked
        if certified:
            entry["branch"] = "i"
        elif straddle is not None:
            entry["straddles_at"] = straddle
        per_rho.append(entry)

    if per_rho and all(e["branch"] == "ii" for e in per_rho):
        branch = "ii"
    elif any(e["branch"] == "i" for e in per_rho):
        branch = "i"
    else:
        branch = None
    verdict = Verdict.EVIDENCE_FOR if branch else Verdict.NO_WITNESS
    witnesses = []
    if branch == "ii":
        witnesses = [dict(e["witness"], rho=e["rho"], rho_separation=e["rho_separation"]) for e in per_rho]
    elif branch == "i":
        first = next(e for e in per_rho if e["branch"] == "i")
        witnesses = [{"rho": first["rho"], "balls_checked": first["balls_checked"]}]
    return ProbeReport(
        probe="halo",
        system=system_name or sys.label,
        claim="either a ball around x stays inside the extended domains along every word, "
              "or words separate nearby points by sigma/2",
        presentation=sys.F.ids,
        params={"x": point_to_dict(x), "depth": depth, "rho_schedule": [e["rho"] for e in per_rho],
                "seed": seed, "n_random": n_random},
        verdict=verdict,
        metrics={"branch": branch, "sigma_sq": sigma_sq.to_dict(), "words_defined_at_x": len(words),
                 "per_rho": per_rho},
        witnesses=witnesses,
        bounds={"depth": depth, "limit": limit},
        timing=_timing(t0),
    )


# -----------------------------
# Naive sensitivity
# -----------------------------
def _box_gap_sq(a: Box, b: Box) -> Fraction:
    gaps = []
    for arc_a, arc_b in ((a.x_arc, b.x_arc), (a.y_arc, b.y_arc)):
        mid_a = arc_a.lo + arc_a.length / 2
        mid_b = arc_b.lo + arc_b.length / 2
        gaps.append(max(circle_gap(mid_a, mid_b) - arc_a.length / 2 - arc_b.length / 2, Fraction(0)))
    return gaps[0] ** 2 + gaps[1] ** 2


def _annulus_points(x: TorusPoint, r: Fraction, denominator: int) -> List[TorusPoint]:
    """Grid points z with r < d(x, z) < 2r."""
    out = []
    span = int(math.ceil(2 * r * denominator)) + 1
    i0, j0 = math.floor(x.x * denominator), math.floor(x.y * denominator)
    for di in range(-span, span + 1):
        for dj in range(-span, span + 1):
            z = TorusPoint(Fraction(i0 + di, denominator), Fraction(j0 + dj, denominator))
            d = sq_dist(x, z)
            if r * r < d < 4 * r * r:
                out.append(z)
    return sorted(set(out))


def _certified_germ(gens: GeneratorSet, word: Word, z: TorusPoint, x: TorusPoint, r: Fraction):
    d_sq = sq_dist(x, z)
    for j in range(4, 24):
        rho = Fraction(1, 2 ** j)
        if (r + rho) ** 2 > d_sq:
            continue
        germ = word_germ(gens, word, z, Quad(rho * rho))
        if germ is not None:
            return germ, rho
    return None, None


def naive_sensitivity_demo(system: BuiltSystem, x: TorusPoint, r=Fraction(1, 8), c=Fraction(1, 8),
                           depth: int = 8, denominator: int = 64, half_width=Fraction(1, 16)) -> ProbeReport:
    """Separate x from a point of B(x, 2r) with a combination of a word germ and the identity.

    Two boxes W1, W2 at distance >= 2c are placed around (1/4, 1/4) and
    (3/4, 3/4); x is at distance >= c from one of them. A word mapping an
    annulus point z into that box, combined with the identity on B(x, r),
    is a single pseudogroup element h with h(x) = x and d(h(x), h(z)) >= c.
    """
    t0 = time.perf_counter()
    gens = system.generators
    if gens.space != "torus" or not isinstance(x, TorusPoint):
        raise UnsupportedRegion("the naive-sensitivity demonstration runs on a single torus")
    r, c = rat(r), rat(c)
    boxes = [Box.around(TorusPoint.of("1/4", "1/4"), half_width), Box.around(TorusPoint.of("3/4", "3/4"), half_width)]
    if _box_gap_sq(boxes[0], boxes[1]) < 4 * c * c:
        raise BadParams("the target boxes are closer than 2c")
    target_index = next((i for i, box in enumerate(boxes) if quad_cmp(box.sq_dist_to(x), Quad(c * c)) >= 0), None)
    if target_index is None:
        raise BadParams(f"{x!r} is within {c} of both target boxes")
    target = boxes[target_index]
    annulus = _annulus_points(x, r, denominator)
    ax = np.array([float(z.x) for z in annulus])
    ay = np.array([float(z.y) for z in annulus])
    zero = np.zeros(len(annulus), dtype=int)

    tried = 0
    for word in enumerate_words(gens.letters, depth):
        fx, fy, lv = ax, ay, zero
        ok = np.ones(len(annulus), dtype=bool)
        for gid, e in word:
            fx, fy, lv, step_ok = gens[gid].apply_batch(fx, fy, lv, e)
            ok &= np.asarray(step_ok, dtype=bool)
        hits = np.flatnonzero(ok & target.contains_batch(fx, fy))
        for idx in hits:
            tried += 1
            z = annulus[int(idx)]
            ev = apply_word(gens, word, z)
            if not ev.defined or not target.contains(ev.point):
                continue
            germ, rho = _certified_germ(gens, word, z, x, r)
            if germ is None:
                continue
            identity = PartialMap(Ball(x, Quad(r * r), closed=False), identity_rule(), "id")
            h = combine([germ, identity])
            hx, hz = h(x), h(z)
            if hx != x or hz != ev.point or sq_dist(hx, hz) < c * c:
                logger.warning("combined map failed its exact check at z=%r, word %s", z, word)
                continue
            logger.info("naive sensitivity witness for %s: z=%r, word %s", system.name, z, word)
            return ProbeReport(
                probe="naive-demo",
                system=system.name,
                claim="a transitive pseudogroup separates x from nearby points by c using the identity near x",
                presentation=gens.ids,
                params={"x": point_to_dict(x), "r": rat_to_str(r), "c": rat_to_str(c), "depth": depth,
                        "denominator": denominator, "half_width": rat_to_str(rat(half_width))},
                verdict=Verdict.ESTABLISHED,
                metrics={"target_box": target_index + 1, "annulus_points": len(annulus),
                         "separation": math.sqrt(float(sq_dist(hx, hz))), "candidates_checked": tried},
                witnesses=[{"y": point_to_dict(z), "word": str(word), "h_of_x": point_to_dict(hx),
                            "h_of_y": point_to_dict(hz), "germ_radius": rat_to_str(rho),
                            "h": h.to_dict()}],
                bounds={"depth": depth},
                timing=_timing(t0),
            )
    raise SearchFailed(f"no word of length <= {depth} maps an annulus point around {x!r} into the target box")
