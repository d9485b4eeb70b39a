"""Closed-form planar pose recovery from matched normalized features.

Every unordered pair of matched features with known reference depths yields
one linear constraint a sin(theta) + b cos(theta) + c = 0 on the rotation.
Stacking the constraints and minimizing the squared residual subject to
sin^2 + cos^2 = 1 gives a Lagrange stationarity system

    (M + lambda I) w = b,    M = [[a1, a2], [a2, a3]],  w = (sin, cos),

whose multiplier lambda solves a quartic.  The translation then follows from
an unconstrained linear least squares with a closed-form solution.

The whole pipeline is deterministic: pairs are put into a canonical order
before any summation, so permuting the input list cannot change a single
bit of the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    DegenerateFeature,
    DegenerateGeometry,
    InsufficientFeatures,
    InvalidParams,
    NumericalFailure,
)
from .geometry import NormalizedFeature, PlanarTransform

_Y_TOL = 1e-12
MAX_FEATURES = 64  # reject rather than silently subsample


@dataclass(frozen=True)
class MatchedPair:
    """One feature correspondence: current view, reference view, reference depth."""

    cur: NormalizedFeature
    ref: NormalizedFeature
    X_star: float

    def __post_init__(self) -> None:
        if abs(self.cur.y) < _Y_TOL or abs(self.ref.y) < _Y_TOL:
            raise DegenerateFeature("vertical normalized coordinate too close to zero")
        if not self.X_star > 0.0:
            raise InvalidParams("reference depth must be positive")


@dataclass(frozen=True)
class PairCoeffs:
    a: float
    b: float
    c: float


@dataclass(frozen=True)
class NormalAccumulators:
    """Sums of pair-constraint products over all unordered pairs.

    a1 = sum a^2, a2 = sum ab, a3 = sum b^2, b1 = -sum ac, b2 = -sum bc.
    c_sq = sum c^2 is carried so the rotation cost can be evaluated from the
    accumulators alone.
    """

    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    c_sq: float
    pairs: int


@dataclass(frozen=True)
class RotationEstimate:
    sin_theta: float
    cos_theta: float
    lam: float
    residual: float


@dataclass(frozen=True)
class PlanarTransformEstimate:
    transform: PlanarTransform
    rotation: RotationEstimate
    translation_residual: float


def pair_coeffs(p_i: MatchedPair, p_j: MatchedPair) -> PairCoeffs:
    """Rotation constraint coefficients for one unordered feature pair."""
    xi, yi = p_i.cur.x, p_i.cur.y
    xj, yj = p_j.cur.x, p_j.cur.y
    xi_r, yi_r = p_i.ref.x, p_i.ref.y
    xj_r, yj_r = p_j.ref.x, p_j.ref.y
    ri = yi_r / yi
    rj = yj_r / yj
    a = ri * (xi * xj_r + 1.0) - rj * (xi_r * xj + 1.0)
    b = ri * (xj_r - xi) - rj * (xi_r - xj)
    c = (yi_r * yj_r) / (yi * yj) * (xi - xj) + (xi_r - xj_r)
    return PairCoeffs(a, b, c)


def _canonical(pairs: list[MatchedPair]) -> list[MatchedPair]:
    # fixed summation order makes the estimate permutation-invariant bit for bit
    return sorted(pairs, key=lambda p: (p.ref.x, p.ref.y, p.cur.x, p.cur.y, p.X_star))


def accumulate(pairs: list[MatchedPair], max_features: int = MAX_FEATURES) -> NormalAccumulators:
    """Accumulate the normal sums over all unordered pairs in canonical order."""
    if len(pairs) > max_features:
        raise InvalidParams(f"more than {max_features} features; refusing to subsample")
    if len(pairs) < 2:
        raise InsufficientFeatures("at least two matched features are required")
    ordered = _canonical(pairs)
    a1 = a2 = a3 = b1 = b2 = c_sq = 0.0
    n = 0
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            pc = pair_coeffs(ordered[i], ordered[j])
            a1 += pc.a * pc.a
            a2 += pc.a * pc.b
            a3 += pc.b * pc.b
            b1 -= pc.a * pc.c
            b2 -= pc.b * pc.c
            c_sq += pc.c * pc.c
            n += 1
    return NormalAccumulators(a1, a2, a3, b1, b2, c_sq, n)


def quartic_coeffs(acc: NormalAccumulators) -> tuple[float, float, float, float]:
    """Coefficients (c1..c4) of the multiplier quartic l^4 + 2 c1 l^3 + c2 l^2 + 2 c3 l + c4."""
    tr = acc.a1 + acc.a3
    det = acc.a1 * acc.a3 - acc.a2 * acc.a2
    c1 = tr
    c2 = tr * tr - acc.b1 * acc.b1 - acc.b2 * acc.b2 + 2.0 * det
    c3 = (
        tr * det
        + 2.0 * acc.a2 * acc.b1 * acc.b2
        - acc.a3 * acc.b1 * acc.b1
        - acc.a1 * acc.b2 * acc.b2
    )
    c4 = (
        det * det
        - (acc.a3 * acc.b1 - acc.a2 * acc.b2) ** 2
        - (acc.a1 * acc.b2 - acc.a2 * acc.b1) ** 2
    )
    return (c1, c2, c3, c4)


def _real_cubic_roots(b: float, c: float, d: float) -> list[float]:
    """Real roots of m^3 + b m^2 + c m + d."""
    # depress: m = t - b/3
    p = c - b * b / 3.0
    q = d - b * c / 3.0 + 2.0 * b ** 3 / 27.0
    shift = -b / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0.0:
        s = math.sqrt(disc)
        t = cbrt(-q / 2.0 + s) + cbrt(-q / 2.0 - s)
        return [t + shift]
    if p == 0.0 and q == 0.0:
        return [shift]
    # three real roots: trigonometric form
    r = math.sqrt(-p / 3.0)
    arg = max(-1.0, min(1.0, 3.0 * q / (2.0 * p * r)))
    ang = math.acos(arg) / 3.0
    return [2.0 * r * math.cos(ang - 2.0 * math.pi * k / 3.0) + shift for k in range(3)]


def cbrt(x: float) -> float:
    return math.copysign(abs(x) ** (1.0 / 3.0), x)


def _quadratic_roots(b: float, c: float, rescue_band: float = 0.0) -> list[float]:
    """Real roots of y^2 + b y + c, clamping marginally negative discriminants.

    A double root computed through upstream cancellation can surface with a
    discriminant several orders below zero; rescue_band widens the clamp to
    that relative level and returns the vertex -b/2 alone.  Callers opting in
    must be able to reject a vertex that turns out not to be a root.
    """
    disc = b * b - 4.0 * c
    tol = 1e-12 * max(1.0, b * b, abs(c))
    if disc < -tol:
        if rescue_band > 0.0 and disc >= -rescue_band * max(1.0, b * b, abs(c)):
            return [-b / 2.0]
        return []
    if disc < 0.0:
        disc = 0.0
    s = math.sqrt(disc)
    # subtract-free form to avoid cancellation on the small root
    if b >= 0.0:
        r1 = (-b - s) / 2.0
    else:
        r1 = (-b + s) / 2.0
    if r1 == 0.0:
        return [0.0] if disc == 0.0 else [0.0, -b]
    r2 = c / r1
    return [r1] if disc == 0.0 else [r1, r2]


def solve_quartic(c1: float, c2: float, c3: float, c4: float) -> list[float]:
    """All real roots of l^4 + 2 c1 l^3 + c2 l^2 + 2 c3 l + c4, ascending.

    Resolvent-cubic factorization into two quadratics, then a guarded Newton
    polish on the original quartic.  Each returned root satisfies
    |p(l)| < 1e-9 * max(1, |c4|, terms of p at l); anything worse raises
    NumericalFailure.  The per-root terms enter the bar because evaluating a
    quartic at a root of magnitude L carries a rounding floor near eps * L^4,
    which exceeds any fixed absolute tolerance once L is large; a root is
    accepted when its residual is small relative to that floor (backward
    stability), which reduces to the absolute bar for small roots.

    A near-double real pair can surface from the factorization with a
    marginally negative discriminant.  Its vertex is kept as a speculative
    seed: polished like the others, accepted only if it meets the same
    residual bar, and dropped silently otherwise (the pair may genuinely be
    complex, which is not an error).
    """
    a3, a2, a1, a0 = 2.0 * c1, c2, 2.0 * c3, c4

    def poly(x: float) -> float:
        return (((x + a3) * x + a2) * x + a1) * x + a0

    def dpoly(x: float) -> float:
        return ((4.0 * x + 3.0 * a3) * x + 2.0 * a2) * x + a1

    # depressed form y^4 + p y^2 + q y + r with l = y - a3/4
    p = a2 - 3.0 * a3 * a3 / 8.0
    q = a1 - a3 * a2 / 2.0 + a3 ** 3 / 8.0
    r = a0 - a3 * a1 / 4.0 + a3 * a3 * a2 / 16.0 - 3.0 * a3 ** 4 / 256.0
    scale = max(1.0, abs(p), abs(q), abs(r))

    seeds: list[tuple[float, bool]] = []  # (y, must_converge)
    if abs(q) <= 1e-14 * scale:
        # biquadratic: z^2 + p z + r with z = y^2
        zs = _quadratic_roots(p, r)
        mandatory = True
        if not zs:
            zs = _quadratic_roots(p, r, rescue_band=1e-7)
            mandatory = False
        for z in zs:
            ztol = 1e-12 * max(1.0, abs(p), abs(r))
            if z > ztol:
                s = math.sqrt(z)
                seeds.extend([(s, mandatory), (-s, mandatory)])
            elif z >= -ztol:
                seeds.append((0.0, mandatory))
    else:
        # any positive root of the resolvent works; take the largest real one
        ms = _real_cubic_roots(p, p * p / 4.0 - r, -q * q / 8.0)
        m = max(ms)
        if m <= 0.0:
            raise NumericalFailure("resolvent cubic produced no positive root")
        s = math.sqrt(2.0 * m)
        half = p / 2.0 + m
        for bq, cq in ((s, half - q / (2.0 * s)), (-s, half + q / (2.0 * s))):
            ys = _quadratic_roots(bq, cq)
            if ys:
                seeds.extend((y, True) for y in ys)
            else:
                seeds.extend(
                    (y, False) for y in _quadratic_roots(bq, cq, rescue_band=1e-7)
                )

    shift = -a3 / 4.0

    def tol_at(x: float) -> float:
        x2 = x * x
        return 1e-9 * max(
            1.0, abs(a0), x2 * x2, abs(a3 * x2 * x), abs(a2 * x2), abs(a1 * x)
        )

    polished: list[tuple[float, float, bool]] = []
    for y, mandatory in seeds:
        x = y + shift
        best, best_val = x, abs(poly(x))
        for _ in range(30):
            d = dpoly(x)
            if d == 0.0:
                break
            x_next = x - poly(x) / d
            if not math.isfinite(x_next):
                break
            val = abs(poly(x_next))
            if val < best_val:
                best, best_val = x_next, val
            if x_next == x:
                break
            x = x_next
        polished.append((best, best_val, mandatory))

    # a double root yields two polish copies of uneven quality: cluster first,
    # keep each cluster's best, and only then judge it
    polished.sort()
    roots: list[float] = []
    idx = 0
    while idx < len(polished):
        x, val, mandatory = polished[idx]
        end = idx + 1
        while (
            end < len(polished)
            and abs(polished[end][0] - x) <= 1e-8 * max(1.0, abs(polished[end][0]))
        ):
            if polished[end][1] < val:
                x, val = polished[end][0], polished[end][1]
            mandatory = mandatory or polished[end][2]
            end = end + 1
        if val < tol_at(x):
            roots.append(x)
        elif mandatory:
            raise NumericalFailure(f"root refinement stalled at |p| = {val:.3e}")
        idx = end
    return roots


def _polish_on_circle(acc: NormalAccumulators, s: float, c: float) -> tuple[float, float]:
    """Newton-polish a candidate along the circle, keeping the best gradient.

    Quadratic convergence wherever the restricted cost has curvature; near a
    tangency (double-well) the curvature vanishes and the guard leaves the
    candidate untouched rather than divide by noise.
    """
    curv_floor = 1e-7 * max(
        1.0, abs(acc.a1) + abs(acc.a3), math.hypot(acc.b1, acc.b2)
    )
    phi = math.atan2(s, c)

    def grad(p: float) -> float:
        st, ct = math.sin(p), math.cos(p)
        return 2.0 * (
            st * ct * (acc.a1 - acc.a3)
            + acc.a2 * (ct * ct - st * st)
            - acc.b1 * ct
            + acc.b2 * st
        )

    best, best_g = phi, abs(grad(phi))
    for _ in range(3):
        st, ct = math.sin(phi), math.cos(phi)
        h = 2.0 * (
            (ct * ct - st * st) * (acc.a1 - acc.a3)
            - 4.0 * acc.a2 * st * ct
            + acc.b1 * st
            + acc.b2 * ct
        )
        if abs(h) <= curv_floor:
            break
        phi_next = phi - grad(phi) / h
        if not math.isfinite(phi_next):
            break
        g_next = abs(grad(phi_next))
        if g_next < best_g:
            best, best_g = phi_next, g_next
        if phi_next == phi:
            break
        phi = phi_next
    return math.sin(best), math.cos(best)


def _rotation_cost(acc: NormalAccumulators, s: float, c: float) -> float:
    """Sum of squared pair residuals at (sin, cos) = (s, c)."""
    return (
        acc.a1 * s * s
        + 2.0 * acc.a2 * s * c
        + acc.a3 * c * c
        - 2.0 * acc.b1 * s
        - 2.0 * acc.b2 * c
        + acc.c_sq
    )


def _singular_candidates(acc: NormalAccumulators, lam: float) -> list[tuple[float, float]]:
    """Stationary points when (M + lam I) is singular.

    The solution set of the rank-deficient system is a line (or the whole
    plane); its intersection with the unit circle supplies the candidates
    the plain-division formula misses.  This path is what makes scenes with
    a zero rotation angle solvable at all.

    lam carries its own refinement error, which shifts the eigenvalue that
    should vanish away from zero by more than working precision.  The
    smallest eigenvalue is therefore treated as null over a loose band; a
    wrongly nulled direction only adds candidates the cost ordering
    discards, while a missed null line loses the true solution outright.
    """
    m11, m12, m22 = acc.a1 + lam, acc.a2, acc.a3 + lam
    scale = max(abs(m11), abs(m12), abs(m22))
    if scale <= 1e-14 * max(1.0, acc.a1 + acc.a3):
        # the system is 0 = b: every direction is stationary; the cost is
        # linear in w there, minimized along b (any unit vector if b = 0)
        norm_b = math.hypot(acc.b1, acc.b2)
        if norm_b == 0.0:
            return [(0.0, 1.0)]
        return [(acc.b1 / norm_b, acc.b2 / norm_b)]
    # eigen-decomposition of the symmetric 2x2
    half_tr = 0.5 * (m11 + m22)
    radius = math.hypot(0.5 * (m11 - m22), m12)
    eigs = (half_tr + radius, half_tr - radius)
    if abs(m12) > 1e-300:
        v1 = (eigs[0] - m22, m12)
    else:
        v1 = (1.0, 0.0) if m11 >= m22 else (0.0, 1.0)
    n1 = math.hypot(*v1)
    v1 = (v1[0] / n1, v1[1] / n1)
    v2 = (-v1[1], v1[0])
    cands: list[tuple[float, float]] = []
    etol = 1e-10 * max(1.0, scale)
    loose = 1e-6 * max(1.0, scale)
    smallest = min(abs(eigs[0]), abs(eigs[1]))
    nulled: list[tuple[float, float]] = []
    kept: list[tuple[float, tuple[float, float]]] = []
    for eig, v in ((eigs[0], v1), (eigs[1], v2)):
        near_null = abs(eig) <= etol or (abs(eig) == smallest and smallest <= loose)
        if near_null:
            nulled.append((eig, v))
        else:
            kept.append((eig, v))
    # shift lam so the nulled eigenvalue is exactly zero; the kept divisor
    # moves with it, pinning the solution line independently of lam's error
    shift = nulled[0][0] if len(nulled) == 1 else 0.0
    w0 = [0.0, 0.0]
    null_dirs = [v for _, v in nulled]
    for eig, v in kept:
        proj = acc.b1 * v[0] + acc.b2 * v[1]
        w0[0] += proj / (eig - shift) * v[0]
        w0[1] += proj / (eig - shift) * v[1]
    for v in null_dirs:
        # intersect {w0 + t v} with the unit circle: t^2 + 2 t (w0.v) + |w0|^2 - 1 = 0;
        # near tangency the discriminant sits at the noise floor, so rescue the
        # vertex and let the caller's circle-distance filter judge it
        dot = w0[0] * v[0] + w0[1] * v[1]
        ts = _quadratic_roots(
            2.0 * dot, w0[0] ** 2 + w0[1] ** 2 - 1.0, rescue_band=1e-7
        )
        for t in ts:
            cands.append((w0[0] + t * v[0], w0[1] + t * v[1]))
    if not null_dirs:
        cands.append((w0[0], w0[1]))
    return cands


def rotation_candidates(acc: NormalAccumulators) -> list[RotationEstimate]:
    """All unit-circle stationary points, cheapest first.

    For each real multiplier root the stationarity system is solved by
    plain division when well conditioned.  Whenever the system is close
    to rank deficient, or the divided point lands off the unit circle,
    the singular path is solved as well and its points are added; near
    the deficiency boundary division loses most of its digits, so both
    answers are kept and cost selection arbitrates.  Candidates further
    than 1e-6 from the unit circle are discarded; survivors are
    renormalized and sorted by the accumulated squared residual (ties by
    angle, for determinism).

    More than one candidate can tie at zero cost: when all features share
    one depth, every pair yields the same constraint line, which cuts the
    unit circle twice.  Rotation cost alone cannot split that tie; the
    pose-level selection in estimate_pose does.
    """
    c1, c2, c3, c4 = quartic_coeffs(acc)
    lams = solve_quartic(c1, c2, c3, c4)
    scale = max(1.0, acc.a1 + acc.a3)
    found: list[RotationEstimate] = []

    def admit(s: float, c: float) -> bool:
        if abs(s * s + c * c - 1.0) >= 1e-6:
            return False
        norm = math.hypot(s, c)
        s, c = _polish_on_circle(acc, s / norm, c / norm)
        if any(math.hypot(s - r.sin_theta, c - r.cos_theta) < 1e-7 for r in found):
            return True
        found.append(RotationEstimate(s, c, lam, _rotation_cost(acc, s, c)))
        return True

    for lam in lams:
        den = (acc.a1 + lam) * (acc.a3 + lam) - acc.a2 * acc.a2
        divided_ok = False
        if abs(den) > 1e-12 * scale * scale:
            divided_ok = admit(
                ((acc.a3 + lam) * acc.b1 - acc.a2 * acc.b2) / den,
                ((acc.a1 + lam) * acc.b2 - acc.a2 * acc.b1) / den,
            )
        if not divided_ok or abs(den) <= 1e-6 * scale * scale:
            for s, c in _singular_candidates(acc, lam):
                admit(s, c)
    found.sort(key=lambda r: (r.residual, math.atan2(r.sin_theta, r.cos_theta)))
    return found


def estimate_rotation(acc: NormalAccumulators) -> RotationEstimate:
    """The minimal-cost unit-circle stationary point."""
    found = rotation_candidates(acc)
    if not found:
        raise DegenerateGeometry("no multiplier root admits a unit-circle solution")
    return found[0]


def translation_terms(p: MatchedPair, r: RotationEstimate) -> tuple[float, float]:
    """Per-feature right-hand sides of the translation least squares."""
    if abs(p.cur.y) < _Y_TOL or abs(p.ref.y) < _Y_TOL:
        raise DegenerateFeature("vertical normalized coordinate too close to zero")
    s, c = r.sin_theta, r.cos_theta
    d = p.X_star * (p.ref.y / p.cur.y - (c - p.ref.x * s))
    e = p.X_star * ((p.cur.x - p.ref.x) * c - (p.cur.x * p.ref.x + 1.0) * s)
    return (d, e)


def estimate_translation(pairs: list[MatchedPair], r: RotationEstimate) -> tuple[float, float]:
    """Closed-form minimizer of sum (d_i - t_x)^2 + (e_i + x_i t_x - t_y)^2."""
    if not pairs:
        raise InsufficientFeatures("at least one matched feature is required")
    ordered = _canonical(pairs)
    n = float(len(ordered))
    sum_x = sum_e = sum_dxe = sum_xx = 0.0
    for p in ordered:
        d, e = translation_terms(p, r)
        x = p.cur.x
        sum_x += x
        sum_e += e
        sum_dxe += d - x * e
        sum_xx += 1.0 + x * x
    den = n * sum_xx - sum_x * sum_x
    if den < 1e-12:
        raise DegenerateGeometry("translation normal equations are singular")
    t_x = (n * sum_dxe + sum_x * sum_e) / den
    t_y = (sum_x * t_x + sum_e) / n
    return (t_x, t_y)


def _translation_residual(
    pairs: list[MatchedPair], rot: RotationEstimate, t_x: float, t_y: float
) -> float:
    resid = 0.0
    for p in pairs:
        d, e = translation_terms(p, rot)
        resid += (d - t_x) ** 2 + (e + p.cur.x * t_x - t_y) ** 2
    return resid


def estimate_pose(pairs: list[MatchedPair]) -> PlanarTransformEstimate:
    """Full rotation-then-translation recovery from matched features.

    Every admissible rotation candidate is carried through the translation
    stage, and the winner minimizes the combined residual.  The combination
    is what resolves the one-depth-plane ambiguity: the two rotations that
    fit the pairwise constraints equally well differ grossly in how
    consistent a single translation can make the per-feature equations.
    """
    acc = accumulate(pairs)
    if acc.a1 == 0.0 and acc.a3 == 0.0:
        raise DegenerateGeometry("feature pairs carry no rotation information")
    ordered = _canonical(pairs)
    best: PlanarTransformEstimate | None = None
    best_key: tuple[float, float] | None = None
    for rot in rotation_candidates(acc):
        try:
            t_x, t_y = estimate_translation(ordered, rot)
        except DegenerateGeometry:
            continue
        resid = _translation_residual(ordered, rot, t_x, t_y)
        key = (rot.residual + resid, math.atan2(rot.sin_theta, rot.cos_theta))
        if best_key is None or key < best_key:
            best_key = key
            phi = math.atan2(rot.sin_theta, rot.cos_theta)
            best = PlanarTransformEstimate(PlanarTransform(phi, t_x, t_y), rot, resid)
    if best is None:
        raise DegenerateGeometry("no multiplier root admits a unit-circle solution")
    return best
