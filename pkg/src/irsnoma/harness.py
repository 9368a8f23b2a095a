"""Monte-Carlo experiment runner, validation oracles and CSV output."""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .baselines import noma_no_irs, oma_from_strengths, oma_maxmin, quantize_phases
from .channels import (DEFAULT_USER_AREA, REFERENCE_BS_POSITION, REFERENCE_IRS_POSITION,
                       REFERENCE_TWO_USER_POSITIONS, ChannelParams, ChannelSet, Geometry,
                       channel_strengths, combined_channels, dbm_to_watt, default_irs_grid,
                       sample_channels)
from .errors import ConfigError, ContractViolation
from .kernels import siso_grid_search
from .miso import solve_miso, target_sinrs_miso
from .ordering import OrderingResult, order_users
from .siso import (SolverConfig, effective_strengths, optimal_power_allocation, solve_siso,
                   target_sinrs_siso)

CONFIG_VERSION = 1
SCHEMES = ("irs-noma", "irs-oma", "noma", "oma")
SWEEP_PARAMS = ("power_dbm", "elements", "users", "antennas", "bits")
CSV_COLUMNS = ("sweep_param", "sweep_value", "trial", "scheme", "user_index", "rate",
               "q_linear", "iterations", "runtime_ms", "seed", "status")
MAX_ORACLE_USERS = 5
MAX_GRID_ELEMENTS = 4
MAX_GRID_LEVELS = 64


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Scenario:
    users: int = 2
    antennas: int = 1
    elements: int = 32
    irs_grid: tuple | None = None
    power_dbm: float = 10.0
    noise_dbm: float = -114.0
    user_positions: object = "reference"
    bs_position: tuple = REFERENCE_BS_POSITION
    irs_position: tuple = REFERENCE_IRS_POSITION
    user_area: tuple = DEFAULT_USER_AREA
    user_height: float = 1.5
    carrier_frequency: float = 2.5e9
    bs_antenna_spacing: float = 0.5
    irs_element_spacing: float = 0.125
    pathloss_ref_db: float = -30.0
    exponent_bs_user: float = 4.0
    exponent_bs_irs: float = 2.0
    exponent_irs_user: float = 2.5
    rician_bs_irs: float = 10.0
    rician_irs_user: float = 10.0

    def __post_init__(self):
        def tup(x):
            return tuple(tup(i) for i in x) if isinstance(x, (list, tuple)) else x
        for name in ("irs_grid", "user_positions", "bs_position", "irs_position", "user_area"):
            object.__setattr__(self, name, tup(getattr(self, name)))

    def positions(self):
        if self.user_positions is None or self.user_positions == "random":
            return None
        if self.user_positions == "reference":
            return REFERENCE_TWO_USER_POSITIONS
        return tuple(tuple(float(c) for c in p) for p in self.user_positions)

    def geometry(self) -> Geometry:
        grid = tuple(self.irs_grid) if self.irs_grid is not None else default_irs_grid(self.elements)
        if grid[0] * grid[1] != self.elements:
            raise ConfigError(f"irs_grid {grid} does not have {self.elements} elements")
        return Geometry(tuple(self.bs_position), tuple(self.irs_position), self.positions(),
                        self.carrier_frequency, self.bs_antenna_spacing, self.irs_element_spacing,
                        grid, tuple(map(tuple, self.user_area)), self.user_height)

    def channel_params(self) -> ChannelParams:
        return ChannelParams(10.0 ** (self.pathloss_ref_db / 10.0), self.exponent_bs_user,
                             self.exponent_bs_irs, self.exponent_irs_user, self.rician_bs_irs,
                             self.rician_irs_user, dbm_to_watt(self.noise_dbm))

    @property
    def power(self) -> float:
        return dbm_to_watt(self.power_dbm)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario = field(default_factory=Scenario)
    mode: str = "auto"
    schemes: tuple = SCHEMES
    sweep_param: str = "power_dbm"
    sweep_values: tuple = (10.0,)
    trials: int = 10
    master_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    bits: int | None = None
    oma_per_slot_phases: bool = False
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.sweep_values:
            raise ConfigError("sweep values must be non-empty")
        if self.sweep_param not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {self.sweep_param!r}")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown schemes {bad}" if bad else "no schemes selected")
        if self.mode not in ("auto", "siso", "miso"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.bits is not None and self.bits < 1:
            raise ConfigError("bits must be >= 1")
        if self.master_seed < 0:
            raise ConfigError("seed must be non-negative")

    def scenario_at(self, value) -> tuple:
        """``(scenario, bits)`` with the sweep parameter set to ``value``."""
        sc, bits = self.scenario, self.bits
        if self.sweep_param == "power_dbm":
            sc = replace(sc, power_dbm=float(value))
        elif self.sweep_param == "elements":
            sc = replace(sc, elements=int(value), irs_grid=None)
        elif self.sweep_param == "users":
            sc = replace(sc, users=int(value))
        elif self.sweep_param == "antennas":
            sc = replace(sc, antennas=int(value))
        else:
            bits = None if value in (None, "continuous") else int(value)
        return sc, bits

    def mode_for(self, sc: Scenario) -> str:
        if self.mode != "auto":
            return self.mode
        return "siso" if sc.antennas == 1 else "miso"


_SCENARIO_KEYS = {f for f in Scenario.__dataclass_fields__}
_SOLVER_KEYS = {"eps": "eps", "eps_b": "eps_b", "D": "randomization",
                "randomization": "randomization", "iteration_cap": "iteration_cap",
                "multi_start": "multi_start"}
_TOP_KEYS = {"version", "scenario", "mode", "schemes", "sweep", "trials", "seed", "solver",
             "bits", "oma_per_slot_phases", "workers", "timing"}


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _parse_bits(value):
    if value is None or value == "continuous":
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bits must be an integer or 'continuous', got {value!r}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    _check_keys(data, _TOP_KEYS, "config")
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    sc_data = data.get("scenario", {}) or {}
    _check_keys(sc_data, _SCENARIO_KEYS, "scenario")
    solver_data = data.get("solver", {}) or {}
    _check_keys(solver_data, _SOLVER_KEYS, "solver")
    sweep = data.get("sweep", {}) or {}
    _check_keys(sweep, {"param", "values"}, "sweep")
    try:
        scenario = Scenario(**sc_data)
        solver = SolverConfig(**{_SOLVER_KEYS[k]: v for k, v in solver_data.items()})
        schemes = data.get("schemes", list(SCHEMES))
        if isinstance(schemes, str):
            schemes = [s.strip() for s in schemes.split(",") if s.strip()]
        param = sweep.get("param", "power_dbm")
        values = sweep.get("values", [getattr(scenario, param)] if param in _SCENARIO_KEYS else [None])
        cfg = ExperimentConfig(
            scenario=scenario, mode=data.get("mode", "auto"), schemes=tuple(schemes),
            sweep_param=param, sweep_values=tuple(values), trials=int(data.get("trials", 10)),
            master_seed=int(data.get("seed", 0)), solver=solver,
            bits=_parse_bits(data.get("bits")),
            oma_per_slot_phases=bool(data.get("oma_per_slot_phases", False)),
            workers=int(data.get("workers", 1)), timing=bool(data.get("timing", False)))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """Check that every sweep point yields a buildable scenario."""
    for value in cfg.sweep_values:
        try:
            sc, _ = cfg.scenario_at(value)
            geo = sc.geometry()
            sc.channel_params()
        except (ContractViolation, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario at {cfg.sweep_param}={value}: {exc}") from exc
        if sc.users < 1 or sc.antennas < 1 or sc.elements < 0:
            raise ConfigError("users and antennas must be >= 1, elements >= 0")
        if geo.user_positions is not None and len(geo.user_positions) != sc.users:
            raise ConfigError(f"{len(geo.user_positions)} fixed user positions but "
                              f"{sc.users} users; set user_positions: random")
        if cfg.mode_for(sc) == "siso" and sc.antennas != 1:
            raise ConfigError("siso mode needs antennas = 1")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return config_from_dict(data or {})


# --------------------------------------------------------------------------
# per-trial work


@dataclass(frozen=True)
class ResultRow:
    sweep_param: str
    sweep_value: object
    trial: int
    scheme: str
    user_index: int
    rate: float
    q_linear: float
    iterations: int | None
    runtime_ms: float | None
    seed: int
    status: str = "ok"


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(trial,))


def _streams(master_seed: int, trial: int):
    """Channel, ordering and solver seeds for one trial, identical across sweep values."""
    ss = trial_seed(master_seed, trial)
    chan, order, solver, oma = ss.spawn(4)
    return chan, order, solver, oma, int(ss.generate_state(1)[0])


def _noma_rows(result, bits, ch: ChannelSet, power: float, mode: str):
    """Per-user target SINRs, in original user order, of a NOMA result.

    With ``bits`` the phases are quantized first; the single-antenna case
    then re-balances power, the multi-antenna case keeps its beams.
    """
    chd = ch.reorder(result.order)
    theta = result.phases.theta if bits is None else quantize_phases(result.phases.theta, bits)
    if mode == "siso":
        s = channel_strengths(chd, theta)
        alpha = result.allocation.alpha
        if bits is not None:
            alpha = optimal_power_allocation(effective_strengths(s), power, ch.noise_power)[0].alpha
        gam = target_sinrs_siso(s, alpha, power / ch.noise_power)
    else:
        gam = target_sinrs_miso(combined_channels(chd, theta), result.allocation, ch.noise_power)
    out = np.empty(ch.K)
    out[np.asarray(result.order)] = gam
    return out


class _SolveCache:
    """Reuses one solve per (scenario, scheme) across a bits sweep."""

    def __init__(self):
        self.store = {}

    def get(self, key, fn):
        if key not in self.store:
            self.store[key] = fn()
        return self.store[key]


def run_scheme(scheme: str, ch: ChannelSet, sc: Scenario, mode: str, cfg: ExperimentConfig,
               bits, seeds, cache: _SolveCache | None = None):
    """``(per-user q_linear, per-user rate, iterations)`` for one scheme."""
    _, order_ss, solver_ss, oma_ss, _ = seeds
    power = sc.power
    cache = cache or _SolveCache()
    key = (sc, scheme)
    if scheme in ("irs-noma", "noma"):
        def solve():
            if scheme == "noma":
                return noma_no_irs(ch, power, mode, cfg.solver, _child(solver_ss, 0))
            ordering = order_users(ch, cfg.solver.randomization, _child(order_ss, 0))
            solver = solve_siso if mode == "siso" else solve_miso
            return solver(ch, ordering, power, cfg.solver, _child(solver_ss, 1))
        res = cache.get(key, solve)
        if scheme == "noma":
            q = _noma_rows(res, None, ch.without_irs(), power, mode)
        else:
            q = _noma_rows(res, bits, ch, power, mode)
        return q, np.log2(1.0 + q), res.iterations
    with_irs = scheme == "irs-oma"
    res = cache.get(key, lambda: oma_maxmin(ch, power, with_irs, cfg.solver.randomization,
                                            _child(oma_ss, 0), cfg.oma_per_slot_phases))
    if with_irs and bits is not None and res.theta is not None:
        s = channel_strengths(ch, quantize_phases(res.theta, bits))
        res = oma_from_strengths(s, power, ch.noise_power)
    rates = np.asarray(res.rates, float)
    return 2.0 ** rates - 1.0, rates, None


def _child(ss: np.random.SeedSequence, i: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,))


def _fmt_value(v):
    return "continuous" if v is None else v


def run_trial(cfg: ExperimentConfig, trial: int) -> list:
    seeds = _streams(cfg.master_seed, trial)
    chan_ss, seed_int = seeds[0], seeds[4]
    cache = _SolveCache()
    rows = []
    for vi, value in enumerate(cfg.sweep_values):
        sc, bits = cfg.scenario_at(value)
        mode = cfg.mode_for(sc)
        ch = sample_channels(sc.geometry(), sc.channel_params(), sc.users, sc.antennas,
                             _child(chan_ss, 0))
        for si, scheme in enumerate(cfg.schemes):
            t0 = time.perf_counter()
            try:
                q, rates, iters = run_scheme(scheme, ch, sc, mode, cfg, bits, seeds, cache)
                status = "ok"
            except Exception as exc:  # recorded per row, never aborts the batch
                q = rates = np.full(sc.users, math.nan)
                iters, status = None, f"error:{type(exc).__name__}"
            ms = (time.perf_counter() - t0) * 1e3 if cfg.timing else None
            for k in range(sc.users):
                rows.append(((vi, trial, si, k), ResultRow(
                    cfg.sweep_param, _fmt_value(value), trial, scheme, k, float(rates[k]),
                    float(q[k]), iters, ms, seed_int, status)))
    return rows


def run_experiment(cfg: ExperimentConfig) -> list:
    """All result rows, ordered by (sweep value, trial, scheme, user)."""
    trials = range(cfg.trials)
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(run_trial, itertools.repeat(cfg), trials))
    else:
        chunks = [run_trial(cfg, t) for t in trials]
    keyed = [item for chunk in chunks for item in chunk]
    keyed.sort(key=lambda item: item[0])
    return [row for _, row in keyed]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def mean_min_rates(rows) -> dict:
    """Mean over trials of each scheme's minimum user rate, keyed by (value, scheme)."""
    per = {}
    for r in rows:
        key = (r.sweep_value, r.scheme, r.trial)
        per[key] = min(per.get(key, math.inf), r.rate)
    out = {}
    for (value, scheme, _), rate in per.items():
        out.setdefault((value, scheme), []).append(rate)
    return {k: float(np.mean(v)) for k, v in out.items()}


# --------------------------------------------------------------------------
# validation oracles


def _solver_for(mode: str):
    return solve_siso if mode == "siso" else solve_miso


def exhaustive_order_oracle(ch: ChannelSet, power: float, mode: str = "siso",
                            config: SolverConfig | None = None, seed=0,
                            ordering: OrderingResult | None = None):
    """Best decoding order by solving under all ``K!`` permutations.

    Returns ``(permutation, q)``; ties keep the lexicographically first
    permutation.
    """
    if ch.K > MAX_ORACLE_USERS:
        raise ContractViolation(f"exhaustive ordering refused for K={ch.K} > {MAX_ORACLE_USERS}")
    config = config or SolverConfig()
    base = ordering or order_users(ch, config.randomization, seed)
    solver = _solver_for(mode)
    best_perm, best_q = None, -math.inf
    for perm in itertools.permutations(range(ch.K)):
        trial = OrderingResult(np.array(perm), base.strengths, base.best_phases)
        q = solver(ch, trial, power, config, seed).q_star
        if q > best_q:
            best_perm, best_q = np.array(perm), q
    return best_perm, best_q


def balanced_siso_q(ch_decoding: ChannelSet, theta, power: float) -> float:
    """Best max-min SINR for fixed phases and decoding order (single antenna)."""
    s = channel_strengths(ch_decoding, theta)
    _, q = optimal_power_allocation(effective_strengths(s), power, ch_decoding.noise_power)
    return float(q)


def grid_phase_oracle(ch: ChannelSet, levels: int, inner=None, power: float | None = None,
                      enforce_order: bool = False):
    """Maximum of ``inner(theta)`` over all ``levels**M`` uniform phase tuples.

    ``ch`` is in decoding order. Without ``inner`` the balanced
    single-antenna SINR is used (requires ``power``) and the compiled grid
    kernel does the enumeration. Returns ``(q, theta)``.
    """
    if ch.M > MAX_GRID_ELEMENTS or levels > MAX_GRID_LEVELS or levels < 1:
        raise ContractViolation(f"grid oracle limited to M <= {MAX_GRID_ELEMENTS}, "
                                f"levels <= {MAX_GRID_LEVELS}")
    step = 2.0 * math.pi / levels
    if inner is None:
        if power is None or ch.N != 1:
            raise ContractViolation("default inner solver needs N=1 and a power budget")
        if ch.M == 0:
            return balanced_siso_q(ch, np.zeros(0), power), np.zeros(0)
        cas = ch.cascades()[:, :, 0]
        q, idx = siso_grid_search(cas[:, :-1], cas[:, -1], power / ch.noise_power, levels,
                                  enforce_order)
        if idx < 0:
            return -math.inf, None
        digits = [(idx // levels ** (ch.M - 1 - m)) % levels for m in range(ch.M)]
        return float(q), np.array(digits) * step
    best_q, best_theta = -math.inf, None
    for digits in itertools.product(range(levels), repeat=ch.M):
        theta = np.array(digits, float) * step
        q = inner(theta)
        if q > best_q:
            best_q, best_theta = q, theta
    return float(best_q), best_theta
