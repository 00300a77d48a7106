"""Config-driven Monte Carlo benchmark harness.

A sweep is the Cartesian product of uplink powers and pilot budgets; every
cell runs ``trials`` independent channel draws.  All schemes inside one
trial see the same channel and the same noise (common random numbers), and
every trial derives its RNG seed from (base_seed, power, q, trial) alone,
so results are bit-identical regardless of worker count or scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import estimators, protocol
from .gamp import SolverConfig
from .geometry import Deployment, UpaGeometry, draw_realization
from .protocol import dbm_to_mw

WORKERS_ENV = "DRISCE_WORKERS"
CSV_COLUMNS = ("scheme", "channel", "q_pilot", "power_dbm", "trial", "seed",
               "nmse", "runtime_ms")
PLOT_COLUMNS = ("scheme", "channel", "power_dbm", "q_pilot", "trials",
                "mean_nmse_db", "std_nmse_db")
LARGE_FRAMEWORKS = ("svd_mmv", "svd_cs", "kronecker")
SMALL_MODES = ("mae", "direct")
ASSUMPTIONS = ("perfect", "imperfect")


class ConfigError(ValueError):
    """Raised for unparseable, unknown or inconsistent configuration keys."""


@dataclass(frozen=True)
class Scheme:
    """One benchmark arm: recovery route, solver, grid mode, aux assumption."""

    kind: str        # large framework or small mode
    solver: str      # "gamp" | "somp"
    offgrid: bool
    assumption: str  # "perfect" | "imperfect"

    @property
    def label(self):
        parts = [self.kind, self.solver]
        if self.offgrid:
            parts.append("offgrid")
        parts.append(self.assumption)
        return ":".join(parts)


def parse_scheme(text, assumption, small=False):
    parts = text.strip().split(":")
    kind = parts[0]
    allowed = SMALL_MODES if small else LARGE_FRAMEWORKS
    if kind == "kron":
        kind = "kronecker"
    if kind not in allowed:
        raise ConfigError(f"unknown scheme kind {parts[0]!r}; expected one of {allowed}")
    solver = parts[1] if len(parts) > 1 else "gamp"
    if solver not in ("gamp", "somp"):
        raise ConfigError(f"unknown solver {solver!r} in scheme {text!r}")
    offgrid = "offgrid" in parts[2:]
    extras = [p for p in parts[2:] if p != "offgrid"]
    if extras:
        raise ConfigError(f"unknown scheme flags {extras} in {text!r}")
    if offgrid and not small and kind != "svd_mmv":
        raise ConfigError(f"off-grid refinement only applies to svd_mmv, not {kind}")
    return Scheme(kind=kind, solver=solver, offgrid=offgrid, assumption=assumption)


@dataclass(frozen=True)
class SystemConfig:
    """Everything one sweep needs; plain data so workers can be forked."""

    bs_antennas: int
    ris_elements: int
    users: int
    pilot_symbols: int
    grid_bs: int
    grid_ris: int
    frequency_ghz: float
    bandwidth_hz: float
    noise_figure_db: float
    paths_bs_ris: int
    paths_ris_ris: int
    paths_ris_user: int
    path_profile: str
    bs_pos: tuple
    ris1_pos: tuple
    ris2_pos: tuple
    user_ring: tuple
    budget_bs_ris_db: float
    budget_ris_ris_db: float
    budget_ris_user_db: float
    power_dbm: tuple
    q_pilot: tuple
    trials: int
    base_seed: int
    stages: tuple
    schemes: tuple
    small_schemes: tuple
    assumptions: tuple
    gamp_iters: int
    em_iters: int
    inner_tol: float
    gm_components: int
    damping: float
    offgrid_iters: int

    def noise_power_dbm(self):
        return -174.0 + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    def noise_power_mw(self):
        return dbm_to_mw(self.noise_power_dbm())

    def bs_geom(self):
        return _square_upa(self.bs_antennas)

    def ris_geom(self):
        return _square_upa(self.ris_elements)

    def deployment(self):
        return Deployment(bs_pos=self.bs_pos, ris1_pos=self.ris1_pos,
                          ris2_pos=self.ris2_pos, user_ring_min=self.user_ring[0],
                          user_ring_max=self.user_ring[1])

    def solver_config(self):
        return SolverConfig(gamp_iters=self.gamp_iters, em_iters=self.em_iters,
                            inner_tol=self.inner_tol, gm_components=self.gm_components,
                            damping=self.damping)

    def parsed_schemes(self):
        large = [parse_scheme(s, a) for s in self.schemes for a in self.assumptions]
        small = [parse_scheme(s, a, small=True)
                 for s in self.small_schemes for a in self.assumptions]
        return large, small


def _square_upa(count):
    side = int(math.isqrt(count))
    while count % side:
        side -= 1
    return UpaGeometry(n_y=count // side, n_z=side)


def _grid_split(count):
    side = int(math.isqrt(count))
    while count % side:
        side -= 1
    return (side, count // side)


_SCHEMA = {
    "system": {
        "bs_antennas": int, "ris_elements": int, "users": int, "pilot_symbols": int,
        "grid_bs": int, "grid_ris": int, "frequency_ghz": float, "bandwidth_hz": float,
        "noise_figure_db": float, "paths_bs_ris": int, "paths_ris_ris": int,
        "paths_ris_user": int, "path_profile": str,
    },
    "deployment": {"bs": list, "ris1": list, "ris2": list, "user_ring": list,
                   "budget_bs_ris_db": float, "budget_ris_ris_db": float,
                   "budget_ris_user_db": float},
    "sweep": {"power_dbm": list, "q_pilot": list, "trials": int, "base_seed": int},
    "run": {"stages": list, "schemes": list, "small_schemes": list, "assumptions": list},
    "solver": {"gamp_iters": int, "em_iters": int, "inner_tol": float,
               "gm_components": int, "damping": float, "offgrid_iters": int},
}

_DEFAULTS = {
    ("system", "pilot_symbols"): None,   # filled with users
    ("system", "grid_bs"): None,         # filled with bs_antennas
    ("system", "grid_ris"): None,        # filled with ris_elements
    ("system", "frequency_ghz"): 28.0,
    ("system", "bandwidth_hz"): 1.0e8,
    ("system", "noise_figure_db"): 9.0,
    ("system", "paths_bs_ris"): 3,
    ("system", "paths_ris_ris"): 3,
    ("system", "paths_ris_user"): 3,
    ("system", "path_profile"): "classed",
    ("deployment", "user_ring"): [1.0, 30.0],
    ("deployment", "budget_bs_ris_db"): 0.0,
    ("deployment", "budget_ris_ris_db"): 0.0,
    ("deployment", "budget_ris_user_db"): 0.0,
    ("sweep", "trials"): 100,
    ("sweep", "base_seed"): 1,
    ("run", "stages"): ["large", "small"],
    ("run", "schemes"): ["svd_mmv:gamp:offgrid"],
    ("run", "small_schemes"): ["mae:gamp:offgrid", "direct:gamp:offgrid"],
    ("run", "assumptions"): ["imperfect"],
    ("solver", "gamp_iters"): 40,
    ("solver", "em_iters"): 10,
    ("solver", "inner_tol"): 1e-10,
    ("solver", "gm_components"): 3,
    ("solver", "damping"): 0.7,
    ("solver", "offgrid_iters"): 10,
}


def load_config(path):
    """Parse and validate a TOML config; unknown keys are rejected."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    values = {}
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, val in content.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"[{section}].{key}: unknown key")
            want = _SCHEMA[section][key]
            if want is float and isinstance(val, int):
                val = float(val)
            if not isinstance(val, want):
                raise ConfigError(f"[{section}].{key}: expected {want.__name__}")
            values[(section, key)] = val

    for (section, key), default in _DEFAULTS.items():
        values.setdefault((section, key), default)
    for section, keys in _SCHEMA.items():
        for key in keys:
            if values.get((section, key)) is None and (section, key) not in _DEFAULTS:
                raise ConfigError(f"[{section}].{key}: missing required key")

    def get(section, key):
        return values[(section, key)]

    users = get("system", "users")
    if values[("system", "pilot_symbols")] is None:
        values[("system", "pilot_symbols")] = users
    if values[("system", "grid_bs")] is None:
        values[("system", "grid_bs")] = get("system", "bs_antennas")
    if values[("system", "grid_ris")] is None:
        values[("system", "grid_ris")] = get("system", "ris_elements")

    cfg = SystemConfig(
        bs_antennas=get("system", "bs_antennas"),
        ris_elements=get("system", "ris_elements"),
        users=users,
        pilot_symbols=get("system", "pilot_symbols"),
        grid_bs=get("system", "grid_bs"),
        grid_ris=get("system", "grid_ris"),
        frequency_ghz=get("system", "frequency_ghz"),
        bandwidth_hz=get("system", "bandwidth_hz"),
        noise_figure_db=get("system", "noise_figure_db"),
        paths_bs_ris=get("system", "paths_bs_ris"),
        paths_ris_ris=get("system", "paths_ris_ris"),
        paths_ris_user=get("system", "paths_ris_user"),
        path_profile=get("system", "path_profile"),
        bs_pos=tuple(get("deployment", "bs")),
        ris1_pos=tuple(get("deployment", "ris1")),
        ris2_pos=tuple(get("deployment", "ris2")),
        user_ring=tuple(get("deployment", "user_ring")),
        budget_bs_ris_db=get("deployment", "budget_bs_ris_db"),
        budget_ris_ris_db=get("deployment", "budget_ris_ris_db"),
        budget_ris_user_db=get("deployment", "budget_ris_user_db"),
        power_dbm=tuple(float(p) for p in get("sweep", "power_dbm")),
        q_pilot=tuple(int(q) for q in get("sweep", "q_pilot")),
        trials=get("sweep", "trials"),
        base_seed=get("sweep", "base_seed"),
        stages=tuple(get("run", "stages")),
        schemes=tuple(get("run", "schemes")),
        small_schemes=tuple(get("run", "small_schemes")),
        assumptions=tuple(get("run", "assumptions")),
        gamp_iters=get("solver", "gamp_iters"),
        em_iters=get("solver", "em_iters"),
        inner_tol=get("solver", "inner_tol"),
        gm_components=get("solver", "gm_components"),
        damping=get("solver", "damping"),
        offgrid_iters=get("solver", "offgrid_iters"),
    )
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.pilot_symbols < cfg.users:
        raise ConfigError("[system].pilot_symbols must be >= [system].users "
                          f"({cfg.pilot_symbols} < {cfg.users})")
    for name in ("bs_antennas", "ris_elements", "users", "pilot_symbols", "grid_bs",
                 "grid_ris", "paths_bs_ris", "paths_ris_ris", "paths_ris_user",
                 "trials"):
        if getattr(cfg, name) < 0 or (name != "trials" and getattr(cfg, name) == 0):
            raise ConfigError(f"[?].{name}: must be positive")
    if not (0 < cfg.user_ring[0] <= cfg.user_ring[1]):
        raise ConfigError("[deployment].user_ring: need 0 < min <= max")
    for stage in cfg.stages:
        if stage not in ("large", "small"):
            raise ConfigError(f"[run].stages: unknown stage {stage!r}")
    for assumption in cfg.assumptions:
        if assumption not in ASSUMPTIONS:
            raise ConfigError(f"[run].assumptions: unknown value {assumption!r}")
    if cfg.path_profile not in ("classed", "shared"):
        raise ConfigError(f"[system].path_profile: unknown value {cfg.path_profile!r}")
    cfg.parsed_schemes()  # raises on malformed scheme strings
    cfg.deployment()


@dataclass
class TrialResult:
    scheme: str
    channel: str
    q_pilot: int
    power_dbm: float
    trial: int
    seed: int
    nmse: float
    runtime_ms: float


def trial_seed(base_seed, power_dbm, q, trial):
    """Deterministic 64-bit seed from the cell coordinates alone."""
    payload = f"{power_dbm!r}|{q!r}|{trial!r}".encode()
    digest = hashlib.sha256(payload).digest()
    return (base_seed ^ int.from_bytes(digest[:8], "little")) & (2 ** 63 - 1)


def _simulate_records(cfg, chan, pilots, q, rng, noise):
    l_total = cfg.ris_elements
    sched1 = protocol.gen_reflection_schedule(rng, l_total, q)
    sched2 = protocol.gen_reflection_schedule(rng, l_total, q)
    sched3 = protocol.gen_reflection_schedule(rng, l_total, q * q, pairing=(q, q))
    recs = {
        "sched1": sched1, "sched2": sched2, "sched3": sched3,
        "ris1": protocol.simulate_uplink(chan, pilots, sched1, "ris1_rx", rng, noise),
        "bs1": protocol.simulate_uplink(chan, pilots, sched1, "bs_rx_single_1", rng, noise),
        "ris2": protocol.simulate_uplink(chan, pilots, sched2, "ris2_rx", rng, noise),
        "bs2": protocol.simulate_uplink(chan, pilots, sched2, "bs_rx_single_2", rng, noise),
        "double": protocol.simulate_uplink(chan, pilots, sched3, "bs_rx_double", rng, noise),
    }
    if "small" in cfg.stages:
        sched_s1 = protocol.gen_reflection_schedule(rng, l_total, q)
        sched_s2 = protocol.gen_reflection_schedule(rng, l_total, q)
        recs.update({
            "sched_s1": sched_s1, "sched_s2": sched_s2,
            "ris_s1": protocol.simulate_uplink(chan, pilots, sched_s1, "ris1_rx", rng, noise),
            "bs_s1": protocol.simulate_uplink(chan, pilots, sched_s1, "bs_rx_single_1", rng, noise),
            "ris_s2": protocol.simulate_uplink(chan, pilots, sched_s2, "ris2_rx", rng, noise),
            "bs_s2": protocol.simulate_uplink(chan, pilots, sched_s2, "bs_rx_single_2", rng, noise),
        })
    return recs


def _run_large_scheme(cfg, scheme, chan, pilots, recs, dicts, solver_cfg, h_cache):
    """Large-timescale chain for one scheme; returns an EstimationReport."""
    report = estimators.EstimationReport(scheme=scheme.label,
                                         assumption=scheme.assumption)
    aux = {}
    if scheme.assumption == "perfect":
        aux["h1"] = estimators.perfect(chan.h[0].T)
        aux["h2"] = estimators.perfect(chan.h[1].T)
    else:
        key = (scheme.solver, scheme.offgrid)
        if key not in h_cache:
            h_cache[key] = tuple(
                estimators.estimate_ris_user_at_ris(
                    recs[name], pilots, recs[sched], dicts["ris_user"],
                    solver=scheme.solver, sparsity=cfg.paths_ris_user,
                    cfg=solver_cfg, offgrid=scheme.offgrid,
                    offgrid_iters=cfg.offgrid_iters)
                for name, sched in (("ris1", "sched1"), ("ris2", "sched2")))
        aux["h1"], aux["h2"] = h_cache[key]

    f_hat = {}
    for i, (rec, sched, bs_d, ris_d, truth, label) in enumerate((
            (recs["bs1"], recs["sched1"], dicts["bs_f1"], dicts["ris_f1"], chan.F1, "f1"),
            (recs["bs2"], recs["sched2"], dicts["bs_f2"], dicts["ris_f2"], chan.F2, "f2"))):
        t0 = time.perf_counter()
        est = estimators.estimate_bs_ris(
            rec, pilots, sched, bs_d, ris_d, aux[f"h{i + 1}"],
            framework=scheme.kind, solver=scheme.solver,
            sparsity=cfg.paths_bs_ris, cfg=solver_cfg,
            offgrid=scheme.offgrid, offgrid_iters=cfg.offgrid_iters)
        report.channels[label] = est.value
        report.nmse[label] = estimators.compute_nmse(truth, est.value)
        report.runtime_ms[label] = 1e3 * (time.perf_counter() - t0)
        f_hat[label] = est

    if scheme.assumption == "perfect":
        d_aux = (estimators.perfect(chan.F1), estimators.perfect(chan.F2),
                 aux["h1"], aux["h2"])
    else:
        d_aux = (f_hat["f1"], f_hat["f2"], aux["h1"], aux["h2"])
    t0 = time.perf_counter()
    est = estimators.estimate_inter_ris(
        recs["double"], pilots, recs["sched3"], dicts["ris_d_rx"], dicts["ris_d_tx"],
        *d_aux, framework=scheme.kind, solver=scheme.solver,
        sparsity=cfg.paths_ris_ris, cfg=solver_cfg,
        offgrid=scheme.offgrid, offgrid_iters=cfg.offgrid_iters)
    report.channels["d"] = est.value
    report.nmse["d"] = estimators.compute_nmse(chan.D, est.value)
    report.runtime_ms["d"] = 1e3 * (time.perf_counter() - t0)
    return report


def _run_small_scheme(cfg, scheme, chan, pilots, recs, dicts, solver_cfg, f_cache):
    """Small-timescale re-estimation for one scheme; returns an EstimationReport."""
    report = estimators.EstimationReport(scheme=scheme.label,
                                         assumption=scheme.assumption)
    for i, label in ((0, "h1"), (1, "h2")):
        rec_ris = recs[f"ris_s{i + 1}"]
        rec_bs = recs[f"bs_s{i + 1}"]
        sched = recs[f"sched_s{i + 1}"]
        truth = chan.h[i].T
        t0 = time.perf_counter()
        if scheme.kind == "direct":
            est = estimators.estimate_ris_user_at_ris(
                rec_ris, pilots, sched, dicts["ris_user"], solver=scheme.solver,
                sparsity=cfg.paths_ris_user, cfg=solver_cfg,
                offgrid=scheme.offgrid, offgrid_iters=cfg.offgrid_iters)
        else:
            if scheme.assumption == "perfect":
                f_aux = estimators.perfect(chan.F1 if i == 0 else chan.F2)
            else:
                f_aux = f_cache[f"f{i + 1}"]
            est = estimators.estimate_small_timescale(
                rec_bs, pilots, sched, dicts["ris_user"], f_aux,
                solver=scheme.solver, sparsity=cfg.paths_ris_user, cfg=solver_cfg,
                offgrid=scheme.offgrid, offgrid_iters=cfg.offgrid_iters)
        report.channels[label] = est.value
        report.nmse[label] = estimators.compute_nmse(truth, est.value)
        report.runtime_ms[label] = 1e3 * (time.perf_counter() - t0)
    return report


def run_trial(cfg, power_dbm, q, trial):
    """One seeded trial: draw, simulate once, run every scheme on the same data."""
    seed = trial_seed(cfg.base_seed, power_dbm, q, trial)
    rng = np.random.default_rng(seed)
    bs_geom, ris_geom = cfg.bs_geom(), cfg.ris_geom()
    deploy = cfg.deployment()
    chan = draw_realization(rng, bs_geom, ris_geom, deploy, cfg.users,
                            paths_f=cfg.paths_bs_ris, paths_d=cfg.paths_ris_ris,
                            paths_h=cfg.paths_ris_user,
                            budget_offsets={"bs_ris": cfg.budget_bs_ris_db,
                                            "ris_ris": cfg.budget_ris_ris_db,
                                            "ris_user": cfg.budget_ris_user_db},
                            shared_class=cfg.path_profile == "shared")
    pilots = protocol.gen_pilots(cfg.users, cfg.pilot_symbols, power_dbm)
    noise = cfg.noise_power_mw()
    recs = _simulate_records(cfg, chan, pilots, q, rng, noise)
    dicts = estimators.anchored_dictionaries(deploy, bs_geom, ris_geom,
                                             _grid_split(cfg.grid_bs),
                                             _grid_split(cfg.grid_ris))
    solver_cfg = cfg.solver_config()
    large, small = cfg.parsed_schemes()

    rows = []
    h_cache = {}

    def emit(scheme, report=None, failed_channels=()):
        channels = report.nmse.keys() if report is not None else failed_channels
        for channel in channels:
            if report is not None:
                nmse, ms = report.nmse[channel], report.runtime_ms[channel]
                label = scheme.label
            else:
                nmse, ms = float("nan"), float("nan")
                label = scheme.label + "!error"
            rows.append(TrialResult(scheme=label, channel=channel, q_pilot=q,
                                    power_dbm=power_dbm, trial=trial, seed=seed,
                                    nmse=nmse, runtime_ms=ms))

    f_for_small = {}
    if "large" in cfg.stages:
        for scheme in large:
            try:
                emit(scheme, _run_large_scheme(cfg, scheme, chan, pilots, recs,
                                               dicts, solver_cfg, h_cache))
            except Exception:
                emit(scheme, failed_channels=("f1", "f2", "d"))

    if "small" in cfg.stages:
        # imperfect small-timescale consumes the best available large-scale
        # chain (off-grid svd_mmv with the scheme's own solver)
        for scheme in small:
            f_cache = {}
            if scheme.kind == "mae" and scheme.assumption == "imperfect":
                key = scheme.solver
                if key not in f_for_small:
                    f_for_small[key] = _estimate_f_for_small(
                        cfg, scheme, chan, pilots, recs, dicts, solver_cfg, h_cache)
                f_cache = f_for_small[key]
            try:
                emit(scheme, _run_small_scheme(cfg, scheme, chan, pilots, recs,
                                               dicts, solver_cfg, f_cache))
            except Exception:
                emit(scheme, failed_channels=("h1", "h2"))
    return rows


def _estimate_f_for_small(cfg, scheme, chan, pilots, recs, dicts, solver_cfg, h_cache):
    chain = parse_scheme(f"svd_mmv:{scheme.solver}:offgrid", "imperfect")
    out = {}
    aux = {}
    key = (chain.solver, chain.offgrid)
    if key not in h_cache:
        h_cache[key] = tuple(
            estimators.estimate_ris_user_at_ris(
                recs[name], pilots, recs[sched], dicts["ris_user"],
                solver=chain.solver, sparsity=cfg.paths_ris_user, cfg=solver_cfg,
                offgrid=chain.offgrid, offgrid_iters=cfg.offgrid_iters)
            for name, sched in (("ris1", "sched1"), ("ris2", "sched2")))
    aux["h1"], aux["h2"] = h_cache[key]
    for i, (rec, sched, bs_d, ris_d, label) in enumerate((
            (recs["bs1"], recs["sched1"], dicts["bs_f1"], dicts["ris_f1"], "f1"),
            (recs["bs2"], recs["sched2"], dicts["bs_f2"], dicts["ris_f2"], "f2"))):
        out[label] = estimators.estimate_bs_ris(
            rec, pilots, sched, bs_d, ris_d, aux[f"h{i + 1}"],
            framework="svd_mmv", solver=chain.solver, sparsity=cfg.paths_bs_ris,
            cfg=solver_cfg, offgrid=True, offgrid_iters=cfg.offgrid_iters)
    return out


def _trial_task(args):
    cfg, power, q, trial = args
    return run_trial(cfg, power, q, trial)


def run_sweep(cfg, workers=None, out_path=None, keep_timing=True):
    """Full sweep with trial-level parallelism and deterministic ordering.

    With ``out_path`` set, each completed (power, q) cell is appended to
    the CSV immediately so an interrupted sweep keeps its finished cells.
    ``keep_timing=False`` zeroes runtime_ms, making the CSV bit-identical
    across runs (wall time is the one physically non-deterministic column).
    """
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, os.cpu_count() or 1))
    cells = [(p, q) for p in cfg.power_dbm for q in cfg.q_pilot]
    all_rows = []
    started_file = False
    sort_key = None

    for power, q in cells:
        tasks = [(cfg, power, q, t) for t in range(cfg.trials)]
        if workers <= 1 or len(tasks) <= 1:
            per_trial = [_trial_task(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                per_trial = list(pool.map(_trial_task, tasks))
        cell_rows = [row for rows in per_trial for row in rows]
        cell_rows.sort(key=lambda r: (r.trial, r.scheme, r.channel))
        if not keep_timing:
            cell_rows = [replace(r, runtime_ms=0.0) for r in cell_rows]
        all_rows.extend(cell_rows)
        if out_path is not None:
            emit_results(cell_rows, out_path, "csv", append=started_file)
            started_file = True
    return all_rows


def aggregate(rows):
    """Mean/std NMSE (dB) per (scheme, channel, power, q); NaNs dropped."""
    groups = {}
    for r in rows:
        groups.setdefault((r.scheme, r.channel, r.power_dbm, r.q_pilot), []).append(r.nmse)
    out = []
    for (scheme, channel, power, q), vals in sorted(groups.items()):
        arr = np.asarray(vals, dtype=float)
        arr = arr[np.isfinite(arr)]
        if len(arr) == 0:
            out.append((scheme, channel, power, q, 0, float("nan"), float("nan")))
            continue
        mean = arr.mean()
        std_db = float(np.std(10.0 * np.log10(np.maximum(arr, 1e-300)), ddof=0))
        out.append((scheme, channel, power, q, len(arr),
                    float(10.0 * np.log10(max(mean, 1e-300))), std_db))
    return out


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(rows, path, fmt="csv", append=False):
    """Write trial rows (csv) or aggregated figure series (plot_data)."""
    if fmt not in ("csv", "plot_data"):
        raise ValueError(f"unknown format {fmt!r}")
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if fmt == "csv":
            if not append:
                writer.writerow(CSV_COLUMNS)
            for r in rows:
                writer.writerow([r.scheme, r.channel, r.q_pilot, _fmt(r.power_dbm),
                                 r.trial, r.seed, _fmt(r.nmse), _fmt(r.runtime_ms)])
        else:
            if not append:
                writer.writerow(PLOT_COLUMNS)
            for scheme, channel, power, q, n, mean_db, std_db in aggregate(rows):
                writer.writerow([scheme, channel, _fmt(power), q, n,
                                 _fmt(mean_db), _fmt(std_db)])
    return path


def read_results(path):
    """Round-trip loader for CSVs produced by emit_results."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(CSV_COLUMNS):
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(TrialResult(
                scheme=rec["scheme"], channel=rec["channel"],
                q_pilot=int(rec["q_pilot"]), power_dbm=float(rec["power_dbm"]),
                trial=int(rec["trial"]), seed=int(rec["seed"]),
                nmse=float(rec["nmse"]), runtime_ms=float(rec["runtime_ms"])))
    return rows
