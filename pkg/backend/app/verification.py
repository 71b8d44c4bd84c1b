"""
Exact checks behind ``verify``: each function rebuilds what it needs, checks
one statement exhaustively over a finite range and returns a
``VerificationReport``. ``verify`` raises ``VerificationFailed`` (carrying the
report) when the verdict is not Established.
"""

import logging
import time
from fractions import Fraction
from itertools import product
from typing import Callable, Dict, List, Optional

import numpy as np

from .config import settings
from .exact import Quad, TorusPoint, quad_cmp, sq_dist
from .exceptions import BadParams, VerificationFailed
from .pseudogroup import (
    ZERO_SEQUENCE,
    BiSeq,
    CantorPoint,
    LevelPoint,
    OrbitStatus,
    orbit_bfs,
    point_to_dict,
)
from .regions import INSIDE, OUTSIDE, Arc, IntervalSet, ball_relation
from .schemas import Verdict, VerificationReport
from .systems import (
    BuiltSystem,
    TwistInterval,
    build_cantor,
    build_family_A,
    build_family_B,
    build_line,
    build_linked_twist,
    cantor_orbit_oracle,
    family_b_spec,
    grid_masks,
    mask_points,
    with_extra_vertical_twist,
)
from .diagnostics import certify_orbit_isometry, probe_dpo, probe_sensitivity

logger = logging.getLogger(__name__)

ORIGIN = TorusPoint(Fraction(0), Fraction(0))


def _report(lemma: str, claim: str, ok: bool, t0: float, params: dict, details: Optional[dict] = None,
            witness: Optional[dict] = None, **extra) -> VerificationReport:
    verdict = Verdict.ESTABLISHED if ok else Verdict.COUNTEREXAMPLE
    logger.info("verify %s: %s (%.2fs)", lemma, verdict.value, time.perf_counter() - t0)
    return VerificationReport(lemma=lemma, claim=claim, verdict=verdict, params=params, details=details or {},
                              witness=witness, timing={"seconds": round(time.perf_counter() - t0, 6)}, **extra)


# -----------------------------
# Periodic sets of family B
# -----------------------------
def verify_tq(n: int = 5, m: int = 5) -> VerificationReport:
    """T_m maps every Q_k onto itself, k <= n, m <= m."""
    t0 = time.perf_counter()
    if n < 1 or m < 0:
        raise BadParams("tq needs n >= 1 and m >= 0")
    q_masks, _ = grid_masks(n)
    Q = {k: mask_points(q_masks[k]) for k in range(1, n + 1)}
    twists = {j: build_linked_twist(family_b_spec(j)) for j in range(m + 1)}
    expected_q1 = {TorusPoint.of(0, "1/2"), TorusPoint.of("1/2", "1/2"), TorusPoint.of("1/2", 0)}
    params = {"n": n, "m": m}
    if set(Q[1]) != expected_q1:
        return _report("tq", "Q_1 = {(0,1/2), (1/2,1/2), (1/2,0)}", False, t0, params,
                       witness={"Q_1": [p.to_dict() for p in sorted(Q[1])]})
    checked = 0
    for k, j in product(range(1, n + 1), range(m + 1)):
        points = set(Q[k])
        T = twists[j].T
        images = set()
        for p in Q[k]:
            q = T(p)
            checked += 1
            if q not in points:
                return _report("tq", "T_m(Q_n) = Q_n for every n and m", False, t0, params,
                               witness={"n": k, "m": j, "point": p.to_dict(),
                                        "image": q.to_dict() if q is not None else None})
            images.add(q)
        if images != points:
            missing = sorted(points - images)[0]
            return _report("tq", "T_m(Q_n) = Q_n for every n and m", False, t0, params,
                           witness={"n": k, "m": j, "not_hit": missing.to_dict()})
    return _report("tq", "T_m(Q_n) = Q_n for every n and m", True, t0, params,
                   details={"sizes": {str(k): len(Q[k]) for k in Q}, "images_checked": checked,
                            "note": "V_n^+ is taken as [l_n^+, r_n^+]"})


def verify_finiteorbits(n_max: int = 4, max_nodes: Optional[int] = None) -> VerificationReport:
    """Orbits starting in Q~_n x {0..n} are complete and stay there; g is undefined on Q~_n x {n}."""
    t0 = time.perf_counter()
    max_nodes = max_nodes or settings.max_nodes
    data = build_family_B(n_max, settings.radius_cap)
    claim = "orbits of Q~_n x {0..n} are finite and contained in Q~_n x {0..n}"
    params = {"n_max": n_max}
    covered = set()
    orbits = 0
    for n in range(1, n_max + 1):
        allowed = set(data.Q_tilde[n])
        for q in data.Q_tilde[n]:
            top = LevelPoint(n, q)
            if data.g.apply(top, 1) is not None or data.g.reaches_beyond(top, 1):
                return _report("finiteorbits", claim, False, t0, params,
                               witness={"reason": "g defined on the top level", "point": point_to_dict(top)})
            for m in range(n + 1):
                start = LevelPoint(m, q)
                if start in covered:
                    continue
                graph = orbit_bfs(data.gens, start, max_nodes, n_max)
                orbits += 1
                stray = next((p for p in graph.nodes if p.level > n or p.point not in allowed), None)
                if graph.status != OrbitStatus.COMPLETE or stray is not None:
                    return _report("finiteorbits", claim, False, t0, params,
                                   witness={"start": point_to_dict(start), "status": graph.status.value,
                                            "stray": point_to_dict(stray) if stray is not None else None})
                covered.update(graph.nodes)
    return _report("finiteorbits", claim, True, t0, params,
                   details={"orbits_searched": orbits, "points_covered": len(covered)})


def verify_radii(n_max: int = 4, probes: int = 10_000, seed: int = 0) -> VerificationReport:
    """Re-check the radius conditions through the region API, independently of the radius search."""
    t0 = time.perf_counter()
    data = build_family_B(n_max, settings.radius_cap)
    r_sq = data.r_sq
    claim = "a strictly decreasing sequence of radii separates the periodic sets"
    params = {"n_max": n_max, "probes": probes, "seed": seed}
    for a, b in zip(r_sq, r_sq[1:]):
        if quad_cmp(b, a) >= 0:
            return _report("radii", claim, False, t0, params, witness={"not_decreasing": [a.to_dict(), b.to_dict()]})

    boundary = {n: set(pts) for n, pts in data.radii.boundary_centers.items()}
    for n in range(1, n_max + 1):
        M, delta = data.M(n), data.delta(n)
        for c in data.Q_tilde[n]:
            if c in boundary.get(n, ()):
                continue
            if ball_relation(M, c, r_sq[n]) != INSIDE:
                return _report("radii", claim, False, t0, params,
                               witness={"condition": "ball inside M_n", "n": n, "center": c.to_dict()})
            if ball_relation(delta, c, r_sq[n]) != OUTSIDE:
                return _report("radii", claim, False, t0, params,
                               witness={"condition": "ball misses Delta_n", "n": n, "center": c.to_dict()})

    # r_m -+ r_n = (a -+ b) 2^(1/4), so their squares lie in Q(sqrt 2)
    pairs = 0
    for n in range(2, n_max + 1):
        b = Fraction(1, 2 ** data.radii.exponents[n])
        for m in range(1, n):
            a = Fraction(1, 2 ** data.radii.exponents[m])
            lower, upper = Quad.root2((a - b) ** 2), Quad.root2((a + b) ** 2)
            for c in data.Q_tilde[n]:
                for c2 in data.Q_tilde[m]:
                    d = Quad(sq_dist(c, c2))
                    pairs += 1
                    if quad_cmp(d, lower) > 0 and quad_cmp(d, upper) <= 0:
                        return _report("radii", claim, False, t0, params,
                                       witness={"condition": "separation", "n": n, "m": m,
                                                "center": c.to_dict(), "other": c2.to_dict()})

    rng = np.random.default_rng(seed)
    den = rng.integers(1, 4096, size=(probes, 2))
    num = rng.integers(0, 4096, size=(probes, 2)) % den
    px, py = num[:, 0] / den[:, 0], num[:, 1] / den[:, 1]
    suspicious = 0
    for n in range(1, n_max + 1):
        if not data.Q_tilde[n]:
            continue
        r = float(r_sq[n]) ** 0.5
        cx = np.array([float(c.x) for c in data.Q_tilde[n]])
        cy = np.array([float(c.y) for c in data.Q_tilde[n]])
        dx = np.abs(px[:, None] - cx[None, :]) % 1.0
        dy = np.abs(py[:, None] - cy[None, :]) % 1.0
        d = np.sqrt(np.minimum(dx, 1 - dx) ** 2 + np.minimum(dy, 1 - dy) ** 2)
        for i, j in np.argwhere(np.abs(d - r) < 1e-9):
            suspicious += 1
            p = TorusPoint(Fraction(int(num[i, 0]), int(den[i, 0])), Fraction(int(num[i, 1]), int(den[i, 1])))
            if quad_cmp(Quad(sq_dist(p, data.Q_tilde[n][j])), r_sq[n]) == 0:
                return _report("radii", claim, False, t0, params,
                               witness={"condition": "rational point on a sphere", "n": n, "point": p.to_dict()})
    return _report("radii", claim, True, t0, params, details={
        "radius_exponents": data.radii.exponents,
        "separation_pairs": pairs,
        "irrationality_probes": probes,
        "near_sphere_probes": suspicious,
        "boundary_centers": {str(n): len(pts) for n, pts in boundary.items()},
    })


# -----------------------------
# Isometry certificates
# -----------------------------
def verify_isometry_b(n_max: int = 8) -> VerificationReport:
    """Certificate at ((0,0),0) for family B, and the same check flipped by an extra twist through (0,0)."""
    t0 = time.perf_counter()
    data = build_family_B(n_max, settings.radius_cap)
    base = LevelPoint(0, ORIGIN)
    claim = "every map of the generating set acting at ((0,0),0) is an isometry"
    certificate = certify_orbit_isometry("family-b", data.gens, base, max_level=n_max, claim=claim)
    control_twist = TwistInterval(Arc.between(Fraction(-1, 64), Fraction(1, 64)), 1, Fraction(0))
    control = certify_orbit_isometry("family-b+extra-twist", with_extra_vertical_twist(data, control_twist),
                                     base, max_level=n_max, claim=claim)
    ok = certificate.established and control.verdict == Verdict.COUNTEREXAMPLE
    return _report("isometry-b", claim, ok, t0, {"n_max": n_max},
                   details={"control_verdict": control.verdict,
                            "control_counterexample": control.counterexample.dict() if control.counterexample else None},
                   witness=certificate.counterexample.dict() if certificate.counterexample else None,
                   certificate=certificate)


def verify_isometry_a(m_max: int = 4, depth: int = 10, seed: int = 0) -> VerificationReport:
    """Restricted generating set: isometries at ((0,0),0). Unrestricted {sigma, tau}: sensitivity evidence."""
    t0 = time.perf_counter()
    data = build_family_A(m_max)
    base = LevelPoint(0, ORIGIN)
    claim = "the restricted generating set acts by isometries at ((0,0),0) while the group action is sensitive"
    certificate = certify_orbit_isometry("family-a restricted", data.restricted.F, base, max_level=m_max,
                                         claim=claim)
    samples = [LevelPoint.of(Fraction(2 * i + 1, 16), Fraction(2 * j + 1, 8), 0) for i in range(8) for j in range(4)]
    system = BuiltSystem("family-a", {"m_max": m_max}, data.gens, data)
    evidence = probe_sensitivity(system, samples=samples, radius_schedule=[Fraction(1, 64)], depth=depth,
                                 seed=seed, threshold=Fraction(1, 8))
    return _report("isometry-a", claim, certificate.established, t0, {"m_max": m_max, "depth": depth, "seed": seed},
                   details={"band_union_check": data.union_check, "group_action_c_hat": evidence.metrics["c_hat"],
                            "group_action_verdict": evidence.verdict},
                   witness=certificate.counterexample.dict() if certificate.counterexample else None,
                   certificate=certificate, evidence=evidence)


# -----------------------------
# Cantor pseudogroup
# -----------------------------
def _periodic_sequences(max_period: int, count: int) -> List[BiSeq]:
    seqs = []
    for p in range(1, max_period + 1):
        for bits in product("01", repeat=p):
            s = BiSeq.periodic("".join(bits))
            if not s.is_zero and s not in seqs:
                seqs.append(s)
    return seqs[:count]


def verify_gna(period: int = 4, levels: int = 6, count: int = 20, max_nodes: Optional[int] = None) -> VerificationReport:
    """Orbit of (0, alpha) = {(m, beta) : beta in the shift orbit of alpha, beta in U_m, m <= levels}."""
    t0 = time.perf_counter()
    max_nodes = max_nodes or settings.max_nodes
    gens = build_cantor()
    claim = "the orbit of (0, a) is the set of (m, b) with b a shift of a and b in U_m"
    params = {"period": period, "levels": levels, "count": count}
    seqs = _periodic_sequences(period, count)
    for alpha in seqs:
        graph = orbit_bfs(gens, CantorPoint(0, alpha), max_nodes, levels)
        oracle = cantor_orbit_oracle(alpha, levels)
        if graph.status != OrbitStatus.COMPLETE or graph.node_set() != oracle:
            extra = sorted(graph.node_set() ^ oracle, key=lambda p: p.sort_key())
            return _report("gna", claim, False, t0, params,
                           witness={"alpha": str(alpha), "status": graph.status.value,
                                    "difference": [point_to_dict(p) for p in extra[:5]]})
    return _report("gna", claim, True, t0, params,
                   details={"sequences": [str(s) for s in seqs], "three_node_orbit_of_01": len(
                       orbit_bfs(gens, CantorPoint(0, BiSeq.periodic("01")), max_nodes, levels)) == 3})


def verify_cantor_mu(levels: int = 10) -> VerificationReport:
    """f and its inverse are undefined at every (n, mu); the orbit of (0, mu) is certified isometric."""
    t0 = time.perf_counter()
    gens = build_cantor()
    claim = "(0, mu) is a point of equicontinuity: only level shifts act on its orbit"
    f = gens["f"]
    for n in range(levels + 1):
        p = CantorPoint(n, ZERO_SEQUENCE)
        if f.apply(p, 1) is not None or f.apply(p, -1) is not None:
            return _report("cantor-mu", claim, False, t0, {"levels": levels},
                           witness={"reason": "f defined at mu", "point": point_to_dict(p)})
    certificate = certify_orbit_isometry("cantor", gens, CantorPoint(0, ZERO_SEQUENCE), max_level=levels,
                                         claim=claim)
    g_defined = gens["g"].apply(CantorPoint(0, ZERO_SEQUENCE), 1) is not None
    return _report("cantor-mu", claim, certificate.established, t0, {"levels": levels},
                   details={"g_defined_at_mu": g_defined,
                            "note": "g acts at (n, mu) as a level shift, which is an isometry between levels"},
                   certificate=certificate)


# -----------------------------
# Line translations
# -----------------------------
def verify_dpo_rz(samples: int = 10, global_samples: int = 100, global_bound: int = 1000) -> VerificationReport:
    """Finite restricted orbits are dense in (0, 3/2) although no orbit of t -> t + 1 is finite."""
    t0 = time.perf_counter()
    gens = build_line(1)
    system = BuiltSystem("line", {"step": Fraction(1)}, gens)
    U = IntervalSet.parse("0:3/2")
    report = probe_dpo(system, U=U, samples=samples, global_check=global_samples, global_bound=global_bound)
    m = report.metrics
    ok = (report.verdict == Verdict.ESTABLISHED and m["max_orbit_size"] <= 2
          and m["global_finite_orbits"] == 0)
    return _report("dpo-rz", "points with finite restricted orbit are dense in (0, 3/2) for t -> t + 1", ok, t0,
                   {"samples": samples, "global_samples": global_samples, "global_bound": global_bound},
                   details={"max_restricted_orbit": m["max_orbit_size"],
                            "global_finite_orbits": m["global_finite_orbits"]},
                   evidence=report)


LEMMAS: Dict[str, Callable[..., VerificationReport]] = {
    "tq": verify_tq,
    "finiteorbits": verify_finiteorbits,
    "gna": verify_gna,
    "radii": verify_radii,
    "isometry-b": verify_isometry_b,
    "isometry-a": verify_isometry_a,
    "cantor-mu": verify_cantor_mu,
    "dpo-rz": verify_dpo_rz,
}


def run_verification(lemma: str, **params) -> VerificationReport:
    try:
        check = LEMMAS[lemma]
    except KeyError:
        raise BadParams(f"unknown lemma {lemma!r}; expected one of {', '.join(LEMMAS)}") from None
    try:
        return check(**params)
    except TypeError as exc:
        raise BadParams(f"bad parameters for {lemma}: {exc}") from exc


def verify(lemma: str, **params) -> VerificationReport:
    """Like ``run_verification`` but raises ``VerificationFailed`` unless Established."""
    report = run_verification(lemma, **params)
    if not report.established:
        raise VerificationFailed(f"{lemma}: {report.claim} was not established", report)
    return report
