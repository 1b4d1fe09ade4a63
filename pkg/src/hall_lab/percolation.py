"""Site percolation on the triangular lattice.

Patches are stored as boolean arrays indexed [i, j] with lattice
coordinates m = i - (rows - 1) / 2 and n = j - (cols - 1) / 2, so that the
site of a centred odd-sized patch sits at z = m a1 + n a2.  Neighbours of
(m, n) are (m +- 1, n), (m, n +- 1), (m + 1, n - 1) and (m - 1, n + 1).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage, stats

from .errors import GeometryViolated, InsufficientDecay
from .model import SQRT3, DisorderRealization, ModelConfig, RegionMask, bump, _check_odd

# 6-neighbour structure of the triangular lattice in (m, n) index space
TRI = np.array([[0, 1, 1], [1, 1, 1], [1, 1, 0]], dtype=bool)
NEIGHBOR_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


def occupation_probability(cfg: ModelConfig) -> float:
    """p = int_{-lam_minus}^{lam_plus} g, by numerical quadrature."""
    lo, hi = cfg.g.support
    a, b = max(-cfg.lam_minus, lo), min(cfg.lam_plus, hi)
    return 0.0 if b <= a else float(min(max(cfg.g.quad_mass(a, b), 0.0), 1.0))


def is_supercritical(p: float) -> bool:
    return p > 0.5


@dataclass
class OccupationMap:
    occupied: np.ndarray  # per lattice site, lattice order
    thresholds: tuple[float, float]
    source: DisorderRealization | None = None


def occupation_map(cfg: ModelConfig, realization: DisorderRealization) -> OccupationMap:
    lam = realization.couplings
    occ = (lam > -cfg.lam_minus) & (lam < cfg.lam_plus)
    return OccupationMap(occ, (cfg.lam_minus, cfg.lam_plus), realization)


def patch_from_sites(mn: np.ndarray, values: np.ndarray, rows: int, cols: int, center=(0, 0)) -> np.ndarray:
    """Cut a centred rows x cols (m, n) patch out of per-site values (e.g. a torus lattice)."""
    out = np.zeros((rows, cols), dtype=values.dtype)
    i = mn[:, 0] - center[0] + (rows - 1) // 2
    j = mn[:, 1] - center[1] + (cols - 1) // 2
    ok = (i >= 0) & (i < rows) & (j >= 0) & (j < cols)
    seen = np.zeros((rows, cols), dtype=int)
    np.add.at(seen, (i[ok], j[ok]), 1)
    if np.any(seen != 1):
        raise GeometryViolated("patch does not fit inside the lattice without wrapping")
    out[i[ok], j[ok]] = values[ok]
    return out


def patch_positions(rows: int, cols: int, a: float = 1.0) -> np.ndarray:
    """(rows, cols, 2) planar positions of a centred patch."""
    m = np.arange(rows) - (rows - 1) / 2
    n = np.arange(cols) - (cols - 1) / 2
    M, N = np.meshgrid(m, n, indexing="ij")
    return np.stack([(M + 0.5 * N) * a, N * SQRT3 / 2 * a], axis=-1)


# ---------------------------------------------------------------------------
# crossings


def crossing_exists(occ: np.ndarray, direction: str = "lr", state: bool = True) -> bool:
    """Is there a path of sites in ``state`` joining the two named sides?

    'lr' joins the side i = 0 to i = rows - 1, 'tb' joins j = 0 to j = cols - 1.
    """
    grid = np.asarray(occ, bool) == state
    lab, _ = ndimage.label(grid, structure=TRI)
    if direction == "lr":
        a, b = lab[0, :], lab[-1, :]
    elif direction == "tb":
        a, b = lab[:, 0], lab[:, -1]
    else:
        raise ValueError(f"direction must be 'lr' or 'tb', got {direction!r}")
    common = np.intersect1d(a[a > 0], b[b > 0])
    return len(common) > 0


def unoccupied_crossing(occ: np.ndarray, direction: str = "tb") -> bool:
    return crossing_exists(occ, direction, state=False)


# ---------------------------------------------------------------------------
# annuli and circuits


def annulus_masks(l: int, lp: int) -> tuple[np.ndarray, np.ndarray]:
    """(annulus, hole) masks on the 3l x 3l' patch."""
    _check_odd(l, lp)
    hole = np.zeros((3 * l, 3 * lp), dtype=bool)
    hole[l : 2 * l, lp : 2 * lp] = True
    return ~hole, hole


def has_occupied_circuit(occ: np.ndarray, l: int, lp: int) -> bool:
    """Occupied circuit around the hole iff no unoccupied path joins hole and outer rim."""
    ann, hole = annulus_masks(l, lp)
    free = ~np.asarray(occ, bool) & ann
    lab, _ = ndimage.label(free, structure=TRI)
    inner = ndimage.binary_dilation(hole, structure=TRI) & ann
    rim = np.zeros_like(ann)
    rim[0, :] = rim[-1, :] = rim[:, 0] = rim[:, -1] = True
    a, b = lab[inner], lab[rim]
    return len(np.intersect1d(a[a > 0], b[b > 0])) == 0


@dataclass
class Circuit:
    sites: np.ndarray  # (k + 1, 2) lattice coordinates (m, n), first == last
    positions: np.ndarray  # (k + 1, 2) planar positions
    enclosed: RegionMask  # the hole, on the patch sites
    winding: int
    shape: tuple[int, int]

    @property
    def length(self) -> int:
        return len(self.sites) - 1


def winding_number(positions: np.ndarray, center=(0.0, 0.0)) -> int:
    p = np.asarray(positions, float) - np.asarray(center, float)
    ang = np.arctan2(p[:, 1], p[:, 0])
    d = np.angle(np.exp(1j * np.diff(ang)))
    return int(round(d.sum() / (2 * math.pi)))


def _cancel_backtracks(path: list) -> list:
    out: list = []
    for s in path:
        if len(out) >= 2 and out[-2] == s:
            out.pop()
        else:
            out.append(s)
    return out


def find_occupied_circuit(occ: np.ndarray, l: int, lp: int, a: float = 1.0) -> Circuit | None:
    """Explicit occupied circuit of winding +-1 around the l x l' hole, or None."""
    occ = np.asarray(occ, bool)
    if not has_occupied_circuit(occ, l, lp):
        return None
    ann, hole = annulus_masks(l, lp)
    rows, cols = occ.shape
    pos = patch_positions(rows, cols, a)
    # region reachable from the hole through unoccupied annulus sites
    free = (~occ & ann) | hole
    lab, _ = ndimage.label(free, structure=TRI)
    reach = np.isin(lab, np.unique(lab[hole]))
    # start on the exterior boundary: first site right of the reachable set on the centre row
    jc = (cols - 1) // 2
    i0 = int(np.flatnonzero(reach[:, jc]).max()) + 1
    start = (i0, jc)
    theta = np.arctan2(pos[..., 1], pos[..., 0])
    good = occ & ann

    # BFS on the winding cover: states (i, j, sheet)
    prev: dict = {(start[0], start[1], 0): None}
    dq = deque([(start[0], start[1], 0)])
    target = (start[0], start[1], 1)
    while dq and target not in prev:
        i, j, s = dq.popleft()
        for di, dj in NEIGHBOR_OFFSETS:
            u, v = i + di, j + dj
            if not (0 <= u < rows and 0 <= v < cols) or not good[u, v]:
                continue
            step = np.angle(np.exp(1j * (theta[u, v] - theta[i, j])))
            ds = int(round((theta[i, j] + step - theta[u, v]) / (2 * math.pi)))
            ns = s + ds
            if abs(ns) > 1:
                continue
            key = (u, v, ns)
            if key not in prev:
                prev[key] = (i, j, s)
                dq.append(key)
    if target not in prev:  # pragma: no cover - excluded by the duality check above
        raise GeometryViolated("circuit extraction failed despite a blocking occupied set")
    walk = []
    node = target
    while node is not None:
        walk.append((node[0], node[1]))
        node = prev[node]
    walk = _cancel_backtracks(walk[::-1])
    idx = np.array(walk)
    sites = np.column_stack([idx[:, 0] - (rows - 1) // 2, idx[:, 1] - (cols - 1) // 2])
    p = pos[idx[:, 0], idx[:, 1]]
    enclosed = RegionMask("parallelogram", hole, {"l": l, "lp": lp, "center": (0, 0)}, "sites")
    return Circuit(sites, p, enclosed, winding_number(p), (rows, cols))


# ---------------------------------------------------------------------------
# ribbon


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points p (P, 2) to segments a-b (S, 2) -> (P, S)."""
    ab = b - a
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None]).sum(-1) / np.maximum((ab**2).sum(-1), 1e-300)[None], 0.0, 1.0)
    q = a[None] + t[..., None] * ab[None]
    return np.hypot(*(p[:, None, :] - q).transpose(2, 0, 1))


def segment_distance(a0, a1, b0, b1) -> np.ndarray:
    """Pairwise distances between non-crossing segment sets (A, S) via endpoint tests."""
    d = np.minimum(_point_segment_distance(a0, b0, b1), _point_segment_distance(a1, b0, b1))
    e = np.minimum(_point_segment_distance(b0, a0, a1), _point_segment_distance(b1, a0, a1)).T
    return np.minimum(d, e)


def annulus_boundary_sides(l: int, lp: int, a: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Hexagon sides separating annulus cells from non-annulus cells."""
    ann, _ = annulus_masks(l, lp)
    rows, cols = ann.shape
    pos = patch_positions(rows, cols, a)
    r = a / SQRT3
    starts, ends = [], []
    for di, dj in NEIGHBOR_OFFSETS:
        nb_vec = np.array([di + 0.5 * dj, dj * SQRT3 / 2]) * a
        phi = math.atan2(nb_vec[1], nb_vec[0])
        # the side facing a neighbour spans the two vertices at phi +- 30 degrees
        v0 = r * np.array([math.cos(phi - math.pi / 6), math.sin(phi - math.pi / 6)])
        v1 = r * np.array([math.cos(phi + math.pi / 6), math.sin(phi + math.pi / 6)])
        ii, jj = np.nonzero(ann)
        u, v = ii + di, jj + dj
        inside = (u >= 0) & (u < rows) & (v >= 0) & (v < cols)
        nb_in = np.zeros(len(ii), dtype=bool)
        nb_in[inside] = ann[u[inside], v[inside]]
        sel = ~nb_in
        c = pos[ii[sel], jj[sel]]
        starts.append(c + v0)
        ends.append(c + v1)
    return np.concatenate(starts), np.concatenate(ends)


@dataclass
class RibbonRegion:
    circuit: Circuit
    r1: float
    r2: float
    clearance: float  # dist(ribbon, annulus boundary)
    points: np.ndarray  # probe points (planar)
    mask: RegionMask  # probe points within r1 of a circuit edge

    def potential_check(self, cfg: ModelConfig, couplings: np.ndarray) -> tuple[bool, float, float]:
        """Check -lam_minus u_1 <= V <= lam_plus u_1 on the ribbon probes.

        ``couplings`` is the (rows, cols) array of lambda_z on the patch.
        Returns (ok, min V, max V).
        """
        rows, cols = self.circuit.shape
        sites = patch_positions(rows, cols, cfg.a).reshape(-1, 2)
        lam = np.asarray(couplings, float).reshape(-1)
        pts = self.points[self.mask.indicator]
        V = np.zeros(len(pts))
        for start in range(0, len(pts), 1024):
            p = pts[start : start + 1024]
            d = p[:, None, :] - sites[None, :, :]
            V[start : start + 1024] = bump(cfg, d) @ lam
        lo, hi = float(V.min(initial=0.0)), float(V.max(initial=0.0))
        tol = 1e-12
        ok = lo >= -cfg.lam_minus * cfg.u_1 - tol and hi <= cfg.lam_plus * cfg.u_1 + tol
        return ok, lo, hi


def ribbon_widths(cfg: ModelConfig) -> tuple[float, float]:
    """(r1, r2) = (sqrt3 a / 2 - r_u, r_u - sqrt3 a / 3)."""
    return SQRT3 * cfg.a / 2 - cfg.r_u, cfg.r_u - SQRT3 * cfg.a / 3


def ribbon_from_circuit(circuit: Circuit, cfg: ModelConfig, l: int, lp: int, probe_step: float | None = None) -> RibbonRegion:
    """Union of r1-neighbourhoods of the circuit edges, with its boundary clearance."""
    r1, r2 = ribbon_widths(cfg)
    if r1 <= 0 or r2 <= 0:
        raise GeometryViolated(f"r_u = {cfg.r_u} gives r1 = {r1:.4g}, r2 = {r2:.4g}")
    p = circuit.positions
    e0, e1 = p[:-1], p[1:]
    b0, b1 = annulus_boundary_sides(l, lp, cfg.a)
    clearance = float(segment_distance(e0, e1, b0, b1).min()) - r1
    if clearance < r2 - 1e-9:
        raise GeometryViolated(f"ribbon clearance {clearance:.6g} < r2 = {r2:.6g}")
    h = probe_step or r1 / 4
    lo = p.min(axis=0) - r1 - h
    hi = p.max(axis=0) + r1 + h
    xs = np.arange(lo[0], hi[0] + h, h)
    ys = np.arange(lo[1], hi[1] + h, h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    dmin = np.full(len(pts), np.inf)
    for start in range(0, len(pts), 4096):
        q = pts[start : start + 4096]
        dmin[start : start + 4096] = _point_segment_distance(q, e0, e1).min(axis=1)
    mask = RegionMask("ribbon", dmin <= r1, {"r1": r1, "l": l, "lp": lp}, "grid")
    return RibbonRegion(circuit, r1, r2, clearance, pts, mask)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class Event:
    """A percolation event evaluated on i.i.d. uniforms (site occupied iff U < p).

    Using the same seed for different p couples the samples monotonically.
    """

    name: str
    shape: tuple[int, int]
    fn: Callable[[np.ndarray], bool] = field(compare=False)

    def __call__(self, U: np.ndarray) -> bool:
        return bool(self.fn(U))


def crossing_event(rows: int, cols: int, p: float, direction: str = "lr", state: bool = True) -> Event:
    return Event(f"crossing-{direction}-{'occ' if state else 'unocc'}", (rows, cols), lambda U: crossing_exists(U < p, direction, state))


def circuit_event(l: int, lp: int, p: float) -> Event:
    _check_odd(l, lp)
    return Event("circuit", (3 * l, 3 * lp), lambda U: has_occupied_circuit(U < p, l, lp))


def always_event(shape=(1, 1)) -> Event:
    return Event("always", shape, lambda U: True)


def trial_rngs(seed: int, trials: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def estimate_event_probability(event: Event, trials: int, seed: int) -> tuple[float, float]:
    """(p_hat, stderr) with stderr = sqrt(p_hat (1 - p_hat) / trials)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits = sum(event(rng.random(event.shape)) for rng in trial_rngs(seed, trials))
    p_hat = hits / trials
    return p_hat, math.sqrt(p_hat * (1 - p_hat) / trials)


@dataclass
class PercolationDecay:
    m_p: float
    ci: float  # 95% half-width
    C_perc: float  # prefactor in P <= C width exp(-m_p l')
    distances: np.ndarray
    probs: np.ndarray
    stderr: np.ndarray
    width: int


def connectivity_decay_fit(p: float, distances, trials: int, seed: int, width: int = 5) -> PercolationDecay:
    """Fit P(unoccupied bottom-top path across a width x l' patch) ~ C width exp(-m_p l')."""
    if not p > 0.5:
        raise ValueError(f"p = {p} is not supercritical")
    d = np.asarray(distances, int)
    if np.any(np.diff(d) <= 0):
        raise ValueError("distances must be increasing")
    probs, ses = [], []
    for lp in d:
        ph, se = estimate_event_probability(crossing_event(width, int(lp), p, "tb", state=False), trials, seed)
        probs.append(ph)
        ses.append(se)
    probs, ses = np.array(probs), np.array(ses)
    ok = probs > 0
    if ok.sum() < 2:
        raise InsufficientDecay(f"only {int(ok.sum())} distances have nonzero spanning frequency at {trials} trials")
    x, y = d[ok].astype(float), np.log(probs[ok])
    # binomial weights: var(log p_hat) ~ (1 - p) / (n p)
    w = trials * probs[ok] / np.maximum(1 - probs[ok], 1.0 / trials)
    res = _weighted_linregress(x, y, w)
    m, icpt, se = -res[0], res[1], res[2]
    tq = stats.t.ppf(0.975, max(len(x) - 2, 1)) if len(x) > 2 else stats.norm.ppf(0.975)
    return PercolationDecay(float(m), float(tq * se), float(math.exp(icpt) / width), d, probs, ses, width)


def _weighted_linregress(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    """Weighted least squares y = b x + c; returns (b, c, stderr(b)) with known weights."""
    W = w / w.sum()
    xm, ym = W @ x, W @ y
    sxx = (w * (x - xm) ** 2).sum()
    b = (w * (x - xm) * (y - ym)).sum() / sxx
    c = ym - b * xm
    if len(x) > 2:
        resid = y - (b * x + c)
        s2 = (w * resid**2).sum() / (len(x) - 2)
        se = math.sqrt(max(s2, 1.0) / sxx)  # never tighter than the binomial weights imply
    else:
        se = math.sqrt(1.0 / sxx)
    return float(b), float(c), float(se)
