"""Experiment orchestration: config validation, seeded ensembles, CSV + JSON manifest output."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, ConfigInvalid, HallLabError, MissingOutput, TrialFailed
from .msa import smallest_odd_at_least_sqrt
from .model import Density, FourierField, ModelConfig, VectorFourierField, build_lattice, evaluate_potential, sample_disorder

KINDS = ("percolation", "spectrum", "wegner", "localization", "msa-cert", "conductance", "staircase", "drive")


# ---------------------------------------------------------------------------
# spec and validation


@dataclass
class ExperimentSpec:
    kind: str
    model: dict  # raw model section; resolved lazily (some kinds build several sizes)
    params: dict
    trials: int
    master_seed: int
    output_dir: str
    threads: int = 1

    def canonical(self) -> dict:
        return {"kind": self.kind, "model": self.model, "params": self.params, "trials": self.trials, "master_seed": self.master_seed}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    kind: str
    config_hash: str
    master_seed: int
    trial_seeds: list[int]
    tool_version: str
    wall_time: float
    outputs: list[str]
    threads: int
    config: dict
    summary: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True, default=_jsonable) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _num(d: dict, key: str, path: str, default=None, *, kind=float, lo=None, hi=None, lo_open=False, required=False):
    if key not in d:
        if required:
            raise ConfigInvalid(f"{path}.{key}", "missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigInvalid(f"{path}.{key}", f"expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigInvalid(f"{path}.{key}", f"expected an integer, got {v!r}")
    v = kind(v)
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigInvalid(f"{path}.{key}", f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v > hi:
        raise ConfigInvalid(f"{path}.{key}", f"must be <= {hi}")
    return v


def _list(d: dict, key: str, path: str, default=None, *, required=False) -> list:
    if key not in d:
        if required:
            raise ConfigInvalid(f"{path}.{key}", "missing")
        return default
    v = d[key]
    if not isinstance(v, list) or not v:
        raise ConfigInvalid(f"{path}.{key}", "expected a non-empty list")
    return v


def _odd(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 1 or v % 2 == 0:
        raise ConfigInvalid(path, f"must be an odd positive integer, got {v!r}")
    return v


_MODEL_KEYS = {
    "ctor", "B", "M", "h", "nx", "ny", "a", "aspect", "r_u", "u_0", "u_amp", "bump_profile",
    "lam_min", "lam_max", "lam_minus", "lam_plus", "g", "V0", "AP", "n_max",
}


def build_model(m: dict, path: str = "model", **override) -> ModelConfig:
    """ModelConfig from a config section; ``override`` replaces keys (e.g. nx, ny)."""
    if not isinstance(m, dict):
        raise ConfigInvalid(path, "expected a mapping")
    m = {**m, **override}
    unknown = set(m) - _MODEL_KEYS
    if unknown:
        raise ConfigInvalid(f"{path}.{sorted(unknown)[0]}", "unknown key")
    ctor = m.get("ctor", "lattice")
    B = _num(m, "B", path, lo=0, lo_open=True, required=True)
    h = _num(m, "h", path, math.sqrt(0.12 / B), lo=0, lo_open=True)
    kw: dict[str, Any] = {}
    for key in ("r_u", "u_0", "u_amp", "lam_min", "lam_max", "lam_minus", "lam_plus"):
        if key in m:
            kw[key] = _num(m, key, path)
    if "n_max" in m:
        kw["n_max"] = _num(m, "n_max", path, kind=int, lo=1)
    if "bump_profile" in m:
        kw["bump_profile"] = str(m["bump_profile"])
    if "g" in m:
        g = m["g"]
        if not isinstance(g, dict):
            raise ConfigInvalid(f"{path}.g", "expected a mapping")
        try:
            if g.get("kind") == "tabulated":
                xs, ys = zip(*g["table"])
                kw["g"] = Density.tabulated(xs, ys)
            else:
                kw["g"] = Density(kind=g.get("kind", "uniform"), lo=float(g.get("lo", -1.0)), hi=float(g.get("hi", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"{path}.g", str(exc)) from exc
    if "V0" in m:
        v = m["V0"]
        kw["V0"] = FourierField(tuple(tuple(x) for x in v.get("modes", [])), float(v.get("const", 0.0)))
    if "AP" in m:
        v = m["AP"]
        kw["AP"] = VectorFourierField(tuple(tuple(x) for x in v.get("modes", [])))
    try:
        if ctor == "landau":
            M = _num(m, "M", path, kind=int, lo=1, required=True)
            return ModelConfig.landau(B, M, h, aspect=_num(m, "aspect", path, 1.0, lo=0, lo_open=True), **kw)
        if ctor == "lattice":
            nx = _num(m, "nx", path, kind=int, lo=2, required=True)
            ny = _num(m, "ny", path, kind=int, lo=2, required=True)
            if ny % 2:
                raise ConfigInvalid(f"{path}.ny", "must be even")
            return ModelConfig.from_lattice(B, nx, ny, h, a=_num(m, "a", path, 1.0, lo=0, lo_open=True), **kw)
    except ConfigInvalid:
        raise
    except ConfigError as exc:
        head, sep, _ = str(exc).partition(":")
        raise ConfigInvalid(f"{path}.{head}" if sep and head.isidentifier() else path, str(exc)) from exc
    raise ConfigInvalid(f"{path}.ctor", f"unknown constructor {ctor!r} (landau or lattice)")


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigInvalid("config", f"cannot read {p}: {exc}") from exc
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigInvalid("config", f"parse error: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config", "top level must be a mapping")
    return data


def make_spec(kind: str, raw: dict, trials: int, seed: int, out: str, threads: int | None = None) -> ExperimentSpec:
    """Validate a raw config against the kind's schema and return the spec."""
    if kind not in KINDS:
        raise ConfigInvalid("kind", f"unknown kind {kind!r}")
    if raw.get("kind", kind) != kind:
        raise ConfigInvalid("kind", f"config is for {raw['kind']!r}, not {kind!r}")
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigInvalid("trials", "must be a positive integer")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigInvalid("seed", "must be a non-negative integer")
    threads = (os.cpu_count() or 1) if threads is None else threads
    if threads < 1:
        raise ConfigInvalid("threads", "must be >= 1")
    unknown = set(raw) - {"kind", "model", "params"}
    if unknown:
        raise ConfigInvalid(sorted(unknown)[0], "unknown top-level key")
    spec = ExperimentSpec(kind, raw.get("model", {}) or {}, raw.get("params", {}) or {}, trials, seed, str(out), threads)
    if not isinstance(spec.params, dict):
        raise ConfigInvalid("params", "expected a mapping")
    PIPELINES[kind].validate(spec)
    return spec


# ---------------------------------------------------------------------------
# tables


Table = tuple[list[str], list[list]]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    """Counter-based split: the k-th child of SeedSequence(master_seed)."""
    return [int(c.generate_state(1, np.uint64)[0]) for c in np.random.SeedSequence(master_seed).spawn(trials)]


def _run_trials(fn: Callable[[int, int], Any], seeds: list[int], threads: int) -> list:
    def task(k):
        try:
            return fn(k, seeds[k])
        except HallLabError as exc:
            if isinstance(exc, (TrialFailed, ConfigError)):
                raise
            raise TrialFailed(k, seeds[k], exc) from exc
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise TrialFailed(k, seeds[k], exc) from exc

    idx = range(len(seeds))
    if threads <= 1 or len(seeds) <= 1:
        return [task(k) for k in idx]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, idx))  # map preserves trial order


# ---------------------------------------------------------------------------
# pipelines


@dataclass
class Pipeline:
    validate: Callable[[ExperimentSpec], None]
    execute: Callable[[ExperimentSpec, list[int]], tuple[dict[str, Table], dict]]
    uses_trials: bool = True


def _v_percolation(spec):
    p = spec.params
    _num(p, "p", "params", lo=0, hi=1)
    scales = _list(p, "scales", "params", [[11, 11]])
    for i, s in enumerate(scales):
        if not isinstance(s, list) or len(s) != 2:
            raise ConfigInvalid(f"params.scales[{i}]", "expected [l, lp]")
        _odd(s[0], f"params.scales[{i}][0]")
        _odd(s[1], f"params.scales[{i}][1]")
    for i, e in enumerate(_list(p, "events", "params", ["circuit", "crossing"])):
        if e not in ("circuit", "crossing", "dual-crossing"):
            raise ConfigInvalid(f"params.events[{i}]", f"unknown event {e!r}")


def _percolation_p(spec) -> float:
    if "p" in spec.params:
        return float(spec.params["p"])
    return build_model(spec.model).occupation_probability if spec.model else 0.6


def _x_percolation(spec, seeds):
    from .percolation import circuit_event, crossing_event

    p = _percolation_p(spec)
    scales = spec.params.get("scales", [[11, 11]])
    names = spec.params.get("events", ["circuit", "crossing"])
    events = []
    for l, lp in scales:
        for name in names:
            if name == "circuit":
                events.append((l, lp, circuit_event(l, lp, p)))
            elif name == "crossing":
                events.append((l, lp, crossing_event(l, lp, p, "lr", True)))
            else:
                events.append((l, lp, crossing_event(l, lp, p, "tb", False)))

    def trial(k, seed):
        rng = np.random.default_rng(seed)
        return [ev(rng.random(ev.shape)) for _, _, ev in events]

    hits = np.array(_run_trials(trial, seeds, spec.threads), dtype=float)
    n = len(seeds)
    rows = []
    for j, (l, lp, ev) in enumerate(events):
        ph = hits[:, j].mean()
        rows.append([l, lp, ev.name, ph, math.sqrt(ph * (1 - ph) / n)])
    return {"percolation.csv": (["l", "lp", "event", "p_hat", "stderr"], rows)}, {"p": p}


def _v_model(spec):
    _model_for_disorder(spec)


def _model_for_disorder(spec, path: str = "model", **override) -> ModelConfig:
    """Build the model and, unless ``params.clean``, the disorder lattice it needs."""
    cfg = build_model(spec.model, path, **override)
    if not spec.params.get("clean", False):
        try:
            build_lattice(cfg)
        except ConfigError as exc:
            raise ConfigInvalid(path, f"disorder needs a lattice-commensurate box ({exc})") from exc
    return cfg


def _realization_potential(cfg, seed, lat, pts):
    return evaluate_potential(cfg, sample_disorder(cfg, seed, lat.n_sites), pts, lat)


def _x_spectrum(spec, seeds):
    from .operators import build_hamiltonian, potential_on_grid

    cfg = build_model(spec.model)
    clean = bool(spec.params.get("clean", False))
    base, pts = potential_on_grid(cfg), cfg.grid_points()
    lat = None if clean else build_lattice(cfg)
    n_levels = int(spec.params.get("n_levels", 3 * cfg.M))
    bins = int(spec.params.get("bins", 60))

    def trial(k, seed):
        pot = base if clean else base + _realization_potential(cfg, seed, lat, pts)
        return np.linalg.eigvalsh(build_hamiltonian(cfg, potential=pot).entries)[:n_levels]

    evs = _run_trials(trial, seeds, spec.threads)
    rows = [[k, seeds[k], i, float(e)] for k, ev in enumerate(evs) for i, e in enumerate(ev)]
    allv = np.concatenate(evs)
    counts, edges = np.histogram(allv, bins=bins)
    dos = [[edges[i], edges[i + 1], int(c), c / (len(seeds) * cfg.area * (edges[i + 1] - edges[i]))] for i, c in enumerate(counts)]
    return {
        "spectrum.csv": (["trial", "seed", "index", "energy"], rows),
        "dos.csv": (["E_lo", "E_hi", "count", "density"], dos),
    }, {"M": cfg.M, "dim": cfg.grid_Nx * cfg.grid_Ny}


def _v_wegner(spec):
    p = spec.params
    sizes = _list(p, "sizes", "params", required=True)
    for i, s in enumerate(sizes):
        if not isinstance(s, list) or len(s) != 2:
            raise ConfigInvalid(f"params.sizes[{i}]", "expected [nx, ny]")
        _model_for_disorder(spec, f"params.sizes[{i}]", nx=s[0], ny=s[1])
    _num(p, "E", "params", required=True)
    for i, d in enumerate(_list(p, "dE", "params", required=True)):
        if isinstance(d, bool) or not isinstance(d, (int, float)) or d <= 0:
            raise ConfigInvalid(f"params.dE[{i}]", "must be a positive number")


def _x_wegner(spec, seeds):
    from .operators import build_hamiltonian, potential_on_grid
    from .spectral import _fit_through_origin

    p = spec.params
    E = float(p["E"])
    dE = np.asarray(p["dE"], float)
    cfgs = [build_model(spec.model, nx=s[0], ny=s[1]) for s in p["sizes"]]
    ctx = [(c, build_lattice(c), potential_on_grid(c), c.grid_points()) for c in cfgs]

    def trial(k, seed):
        out = np.zeros((len(cfgs), len(dE)))
        for s, (cfg, lat, base, pts) in enumerate(ctx):
            ev = np.linalg.eigvalsh(build_hamiltonian(cfg, potential=base + _realization_potential(cfg, seed, lat, pts)).entries)
            out[s] = np.searchsorted(ev, E + dE, side="right") - np.searchsorted(ev, E - dE, side="left")
        return out

    counts = np.array(_run_trials(trial, seeds, spec.threads))
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(len(seeds)) if len(seeds) > 1 else np.zeros_like(mean)
    rows = [[p["sizes"][s][0], p["sizes"][s][1], cfgs[s].area, dE[j], mean[s, j], se[s, j]] for s in range(len(cfgs)) for j in range(len(dE))]
    fits = []
    for s, cfg in enumerate(cfgs):
        c, r2 = _fit_through_origin(dE, mean[s])
        fits.append(["dE", cfg.area, c, r2])
    if len(cfgs) > 1:
        areas = np.array([c.area for c in cfgs])
        for j in range(len(dE)):
            c, r2 = _fit_through_origin(areas, mean[:, j])
            fits.append(["area", dE[j], c, r2])
    return {
        "wegner.csv": (["nx", "ny", "area", "dE", "mean_count", "stderr"], rows),
        "wegner_fits.csv": (["variable", "fixed", "slope", "r2"], fits),
    }, {}


def _v_localization(spec):
    p = spec.params
    mode = p.get("mode", "gap")
    if mode not in ("gap", "moment", "projection"):
        raise ConfigInvalid("params.mode", f"unknown mode {mode!r}")
    d = _list(p, "distances", "params", required=True)
    if len(d) < 4 or any(b <= a for a, b in zip(d, d[1:])):
        raise ConfigInvalid("params.distances", "need at least 4 strictly increasing distances")
    if mode in ("gap", "moment"):
        _num(p, "E", "params", required=True)
    if mode == "moment":
        s = _num(p, "s", "params", 0.25)
        if not 0 < s < 1 / 3:
            raise ConfigInvalid("params.s", "must lie in (0, 1/3)")
    if mode == "projection":
        _num(p, "N", "params", kind=int, lo=0, required=True)
    if mode == "gap":
        build_model(spec.model)
    else:
        _model_for_disorder(spec)


def _x_localization(spec, seeds):
    from .localization import gap_decay_fit, moment_fit_from_samples, moment_trial, probe_masks
    from .operators import build_hamiltonian, potential_on_grid
    from .spectral import eigensolve

    p = spec.params
    cfg = build_model(spec.model)
    mode = p.get("mode", "gap")
    dist = np.asarray(p["distances"], float)
    radius = float(p.get("radius", 0.5 * cfg.ell_B))
    summary: dict = {"mode": mode}
    if mode == "gap":
        fit, gap = gap_decay_fit(cfg, build_hamiltonian(cfg), float(p["E"]), dist, radius=radius)
        summary.update(gap=list(gap))
    else:
        A, Bs = probe_masks(cfg, (0.0, 0.0), dist, radius)
        lat, base = build_lattice(cfg), potential_on_grid(cfg)
        if mode == "moment":
            eps = np.asarray(p.get("eps", [1e-2, 3e-3, 1e-3]), float)
            s = float(p.get("s", 0.25))
            samples = np.array(_run_trials(lambda k, sd: moment_trial(cfg, sd, float(p["E"]), s, eps, A, Bs, lat, base), seeds, spec.threads))
            fit = moment_fit_from_samples(dist, eps, samples).fit
        else:
            from .localization import fit_decay

            N = int(p["N"])

            def trial(k, sd):
                pot = base + _realization_potential(cfg, sd, lat, cfg.grid_points())
                V = eigensolve(build_hamiltonian(cfg, potential=pot)).eigenvectors[:, :N]
                return [np.linalg.norm(V[A] @ V[B].conj().T, 2) for B in Bs]

            fit = fit_decay(dist, np.mean(_run_trials(trial, seeds, spec.threads), axis=0))
    rows = [[r, ln, fl] for r, ln, fl in zip(fit.distances, fit.log_norms, fit.fit_line)]
    summary.update(rate=fit.rate, ci=fit.ci, rate_times_ellB=fit.rate * cfg.ell_B)
    return {
        "decay.csv": (["r", "log_norm", "fit_line"], rows),
        "decay_fit.csv": (["rate", "ci", "stderr", "intercept"], [[fit.rate, fit.ci, fit.stderr, fit.intercept]]),
    }, summary


def _v_msa(spec):
    p = spec.params
    ell0 = _num(p, "ell0", "params", kind=int, required=True)
    if ell0 % 2 == 0 or ell0 < 5:
        raise ConfigInvalid("params.ell0", "must be odd and >= 5")
    if smallest_odd_at_least_sqrt(ell0) <= 4:
        raise ConfigInvalid("params.ell0", f"canonical next scale of {ell0} is not above 4 ell0; need ell0 >= 11")
    _num(p, "gamma0", "params", required=True)
    _num(p, "xi", "params", lo=0, lo_open=True, required=True)
    _num(p, "k_max", "params", 8, kind=int, lo=1, hi=12)
    c = p.get("constants", [1.0, 1.0, 1.0])
    if not isinstance(c, list) or len(c) != 3 or any(isinstance(x, bool) or not isinstance(x, (int, float)) or x <= 0 for x in c):
        raise ConfigInvalid("params.constants", "expected three positive numbers [c0, K3, |E|]")


def _x_msa(spec, seeds):
    from .msa import certify

    p = spec.params
    cert = certify(
        int(p["ell0"]), float(p["gamma0"]), float(p["xi"]), tuple(float(x) for x in p.get("constants", [1, 1, 1])), int(p.get("k_max", 8)),
        eta0=p.get("eta0"), s_exp=p.get("s_exp"),
    )
    rows = []
    for k, ell in enumerate(cert.scales):
        prod = cert.products[k - 1] if k else 1.0
        dsum = cert.d_sums[k - 1] if k else 0.0
        rows.append([k, ell, cert.gammas[k], cert.log_etas[k], -float(p["xi"]) * math.log(ell), prod, dsum])
    summary = {"gamma_inf_lower": cert.gamma_inf_lower, "eta_ok": cert.eta_ok, "first_eta_failure": cert.first_eta_failure, "certified": cert.certified}
    return {"msa.csv": (["k", "ell", "gamma", "log_eta", "log_eta_bound", "product", "d_sum"], rows)}, summary


_COND_METHODS = ("kubo", "commutator", "chern_marker", "relative_index", "switch_index")


def _v_conductance(spec):
    p = spec.params
    for i, m in enumerate(_list(p, "methods", "params", ["kubo", "commutator"])):
        if m not in _COND_METHODS:
            raise ConfigInvalid(f"params.methods[{i}]", f"unknown method {m!r}")
    if p.get("backend", "grid") not in ("grid", "projected"):
        raise ConfigInvalid("params.backend", "grid or projected")
    _num(p, "nu", "params", 1.0, lo=0)
    _model_for_disorder(spec)


def _x_conductance(spec, seeds):
    from . import transport as tr
    from .operators import build_hamiltonian, compress, potential_on_grid, project_to_landau_bands, position_operators, velocity_operators
    from .model import region_mask
    from .spectral import eigensolve

    p = spec.params
    cfg = build_model(spec.model)
    methods = p.get("methods", ["kubo", "commutator"])
    backend = p.get("backend", "grid")
    clean = bool(p.get("clean", False))
    N = int(round(float(p.get("nu", 1.0)) * cfg.M))
    H0 = build_hamiltonian(cfg)
    vx, vy = velocity_operators(cfg)
    clean_spec = np.linalg.eigh(H0.entries) if backend == "projected" else None
    lat, base, pts = (build_lattice(cfg), potential_on_grid(cfg), cfg.grid_points()) if not clean else (None, None, None)
    x, y = position_operators(cfg)
    quarter = region_mask("rectangle", {"wx": cfg.Lx / 2, "wy": cfg.Ly / 2}, cfg)

    def trial(k, seed):
        H = H0 if clean else build_hamiltonian(cfg, potential=base + _realization_potential(cfg, seed, lat, pts))
        if backend == "projected":
            H = project_to_landau_bands(cfg, H0, H, cfg.n_max, clean_spec)
        s = eigensolve(H)
        out = []
        P = None
        for m in methods:
            if m == "kubo":
                v = tr.kubo_sigma_xy(s, compress(vx, H), compress(vy, H), N, cfg.area).value
            elif m == "commutator":
                v = tr.commutator_sigma_xy(s, compress(vx, H), compress(vy, H), N, cfg.area).value
            else:
                if P is None:
                    V = s.eigenvectors[:, :N]
                    P = H.to_grid(V @ V.conj().T)
                if m == "chern_marker":
                    v = tr.chern_marker(P, quarter, x, y, cfg=cfg).value
                elif m == "relative_index":
                    v = tr.relative_index(P, tr.IndexProbe(), cfg).value
                else:
                    v = tr.switch_index(P, (0.0, 0.0), cfg).value
            out.append(v)
        return out

    run_seeds = seeds[:1] if clean else seeds
    vals = _run_trials(trial, run_seeds, spec.threads)
    rows = [[k, run_seeds[k], m, v] for k, vs in enumerate(vals) for m, v in zip(methods, vs)]
    arr = np.array(vals)
    summ = [[m, arr[:, j].mean(), arr[:, j].std(ddof=1) if len(arr) > 1 else 0.0] for j, m in enumerate(methods)]
    return {
        "conductance.csv": (["trial", "seed", "method", "value"], rows),
        "conductance_summary.csv": (["method", "mean", "std"], summ),
    }, {"N": N, "M": cfg.M}


def _v_staircase(spec):
    p = spec.params
    if p.get("method", "kubo") not in ("kubo", "chern_marker", "relative_index"):
        raise ConfigInvalid("params.method", "kubo, chern_marker or relative_index")
    if p.get("backend", "projected") not in ("grid", "projected"):
        raise ConfigInvalid("params.backend", "grid or projected")
    _num(p, "tol_flat", "params", 0.1, lo=0, lo_open=True)
    _num(p, "nu_max", "params", None, lo=0, lo_open=True)
    _model_for_disorder(spec)


def _x_staircase(spec, seeds):
    from .plateau import StaircaseBackend, filling_counts, staircase_from_samples, staircase_trial

    p = spec.params
    cfg = build_model(spec.model)
    backend = p.get("backend", "projected")
    nu_max = float(p.get("nu_max", cfg.n_max))
    nu = p.get("nu") or list(np.arange(0, int(round(nu_max * cfg.M)) + 1) / cfg.M)
    try:
        N = filling_counts(nu, cfg.M)
    except ValueError as exc:
        raise ConfigInvalid("params.nu", str(exc)) from exc
    method = p.get("method", "kubo")
    be = StaircaseBackend(cfg, backend, cfg.n_max)
    if p.get("clean", False):
        seeds = seeds[:1]
        samples = np.array([staircase_trial(be, None, N, method)])
    else:
        samples = np.array(_run_trials(lambda k, sd: staircase_trial(be, sd, N, method), seeds, spec.threads))
    scan = staircase_from_samples(N, samples, method, cfg.M, float(p.get("tol_flat", 0.1)), seeds)
    rows = [[a, b, c, d] for a, b, c, d in zip(scan.nu, scan.sigma, scan.ci_lo, scan.ci_hi)]
    pl = [[q.level, q.nu_lo, q.nu_hi, q.width, q.flatness] for q in scan.plateaus]
    return {
        "staircase.csv": (["nu", "sigma_xy", "ci_lo", "ci_hi"], rows),
        "plateaus.csv": (["level", "nu_lo", "nu_hi", "width", "flatness"], pl),
    }, {"M": cfg.M}


def _v_drive(spec):
    p = spec.params
    _num(p, "nu", "params", 1.0, lo=0)
    for i, F in enumerate(_list(p, "F", "params", [5e-4, 1e-3, 2e-3])):
        if isinstance(F, bool) or not isinstance(F, (int, float)) or F <= 0:
            raise ConfigInvalid(f"params.F[{i}]", "must be a positive number")
    _num(p, "eta", "params", 0.1, lo=0, lo_open=True)
    _num(p, "tau", "params", 10.0, lo=3)
    build_model(spec.model)


def _x_drive(spec, seeds):
    from .transport import drive_scan

    p = spec.params
    cfg = build_model(spec.model)
    N = int(round(float(p.get("nu", 1.0)) * cfg.M))
    scan = drive_scan(
        cfg, None, N,
        F_values=tuple(p.get("F", (5e-4, 1e-3, 2e-3))),
        eta=float(p.get("eta", 0.1)),
        tau=float(p.get("tau", 10.0)),
        eta_values=tuple(p.get("eta_values", (0.1, 0.2, 0.4))),
        tau_values=tuple(p.get("tau_values", (3.0, 4.0, 5.0, 6.0))),
        backend=p.get("backend", "projected"),
    )
    return {
        "drive_F.csv": (["F", "sigma_xy"], [[f, s] for f, s in zip(scan.F_values, scan.sigma_by_F)]),
        "drive_eta.csv": (["eta", "correction"], [[e, c] for e, c in zip(scan.eta_values, scan.corrections)]),
        "drive_tau.csv": (["tau", "transient"], [[t, c] for t, c in zip(scan.tau_values, scan.transients)]),
    }, {"sigma_linear": scan.sigma_linear, "sigma_kubo": scan.sigma_kubo, "rel_error": scan.rel_error, "exponent": scan.exponent, "max_drift": scan.max_drift}


PIPELINES: dict[str, Pipeline] = {
    "percolation": Pipeline(_v_percolation, _x_percolation),
    "spectrum": Pipeline(_v_model, _x_spectrum),
    "wegner": Pipeline(_v_wegner, _x_wegner),
    "localization": Pipeline(_v_localization, _x_localization),
    "msa-cert": Pipeline(_v_msa, _x_msa, uses_trials=False),
    "conductance": Pipeline(_v_conductance, _x_conductance),
    "staircase": Pipeline(_v_staircase, _x_staircase),
    "drive": Pipeline(_v_drive, _x_drive, uses_trials=False),
}


def run(spec: ExperimentSpec) -> RunManifest:
    """Execute the pipeline, write CSV tables and manifest.json into spec.output_dir."""
    t0 = time.perf_counter()
    pipe = PIPELINES[spec.kind]
    seeds = trial_seeds(spec.master_seed, spec.trials)
    tables, summary = pipe.execute(spec, seeds)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, (header, rows) in tables.items():
        (out / name).write_text(format_csv(header, rows))
        names.append(name)
    man = RunManifest(
        kind=spec.kind,
        config_hash=spec.config_hash,
        master_seed=spec.master_seed,
        trial_seeds=seeds if pipe.uses_trials else [],
        tool_version=__version__,
        wall_time=time.perf_counter() - t0,
        outputs=names,
        threads=spec.threads,
        config=spec.canonical(),
        summary=summary,
    )
    man.write(out / "manifest.json")
    return man


def rerun(manifest_path, out_dir, threads: int | None = None) -> RunManifest:
    """Re-execute the experiment recorded in a manifest."""
    man = RunManifest.read(manifest_path)
    c = man.config
    spec = make_spec(c["kind"], {"model": c["model"], "params": c["params"]}, c["trials"], c["master_seed"], str(out_dir), threads or man.threads)
    return run(spec)


# ---------------------------------------------------------------------------
# plot data


_PLOTS = {
    "staircase": ("staircase.csv", ["nu", "sigma_xy", "ci_lo", "ci_hi"], "nu", "sigma_xy (e^2/h)"),
    "decay": ("decay.csv", ["r", "log_norm", "fit_line"], "r", "log norm"),
    "dos": ("dos.csv", ["E_lo", "E_hi", "count", "density"], "E", "density of states"),
}

_GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set xlabel '{xlabel}'
set ylabel '{ylabel}'
set terminal pngcairo size 800,600
set output '{png}'
{plot}
"""


def emit_plot_data(manifest: RunManifest | str | Path, plot_kind: str, out_dir=None) -> list[Path]:
    """Columnar data plus a gnuplot script for ``plot_kind``."""
    if isinstance(manifest, (str, Path)):
        mpath = Path(manifest)
        man = RunManifest.read(mpath)
        base = mpath.parent
    else:
        man = manifest
        base = Path(out_dir) if out_dir is not None else Path(".")
    if plot_kind not in _PLOTS:
        raise MissingOutput(f"unknown plot kind {plot_kind!r} (known: {', '.join(_PLOTS)})")
    src, cols, xl, yl = _PLOTS[plot_kind]
    if src not in man.outputs or not (base / src).exists():
        raise MissingOutput(f"{plot_kind} needs {src}, which this run did not produce")
    with open(base / src, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    idx = [head.index(c) for c in cols]
    data = base / f"plot_{plot_kind}.csv"
    if plot_kind == "dos":
        body = [[repr((float(r[0]) + float(r[1])) / 2), r[3]] for r in rows[1:]]
        data.write_text(format_csv(["E", "density"], body))
        plot = f"plot '{data.name}' using 1:2 with steps"
    else:
        data.write_text(format_csv(cols, [[r[i] for i in idx] for r in rows[1:]]))
        if plot_kind == "staircase":
            plot = f"plot '{data.name}' using 1:2:3:4 with yerrorbars, '' using 1:2 with lines"
        else:
            plot = f"plot '{data.name}' using 1:2 with points, '' using 1:3 with lines"
    script = base / f"plot_{plot_kind}.gp"
    script.write_text(_GNUPLOT.format(xlabel=xl, ylabel=yl, png=f"plot_{plot_kind}.png", plot=plot))
    return [data, script]
