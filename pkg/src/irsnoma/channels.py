"""Channel realizations for the IRS-assisted downlink.

Conventions
-----------
* The combined channel of user ``k`` is the length-``N`` row vector
  ``h_k = g_k^H diag(exp(1j*theta)) F + v_k^H``.
* With ``w = [exp(1j*theta); 1]`` the same channel is ``h_k = w^T Gamma_k``
  where ``Gamma_k = [diag(conj(g_k)) F; v_k^H]`` is ``(M+1) x N``.
* The IRS is a rectangular array lying in the vertical x-z plane; the BS
  array is a ULA along the y axis.
* All powers are Watts. dBm conversion happens at the config boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, DomainError

SPEED_OF_LIGHT = 299_792_458.0

REFERENCE_BS_POSITION = (0.0, 0.0, 10.0)
REFERENCE_IRS_POSITION = (25.0 * math.sqrt(2.0), 25.0 * math.sqrt(2.0), 10.0)
REFERENCE_TWO_USER_POSITIONS = ((32.52, 23.48, 1.5), (48.45, 19.55, 1.5))
# The drop rectangle is only shown in a figure; this is a documented default.
DEFAULT_USER_AREA = ((30.0, 50.0), (15.0, 30.0))
DEFAULT_USER_HEIGHT = 1.5


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


def default_irs_grid(m: int) -> tuple[int, int]:
    """Near-square ``(rows, cols)`` with ``rows * cols == m``.

    ``rows`` is the largest divisor of ``m`` not exceeding ``floor(sqrt(m))``.
    """
    if m < 0:
        raise DomainError("element count must be >= 0")
    if m == 0:
        return (0, 0)
    rows = math.isqrt(m)
    while m % rows:
        rows -= 1
    return (rows, m // rows)


@dataclass(frozen=True)
class Geometry:
    bs_position: tuple = REFERENCE_BS_POSITION
    irs_position: tuple = REFERENCE_IRS_POSITION
    user_positions: tuple | None = REFERENCE_TWO_USER_POSITIONS
    carrier_frequency: float = 2.5e9
    bs_antenna_spacing: float = 0.5
    irs_element_spacing: float = 0.125
    irs_grid: tuple = (4, 4)
    user_area: tuple = DEFAULT_USER_AREA
    user_height: float = DEFAULT_USER_HEIGHT

    def __post_init__(self):
        rows, cols = self.irs_grid
        if rows < 0 or cols < 0 or (rows * cols == 0 and rows + cols != 0):
            raise ContractViolation(f"invalid IRS grid {self.irs_grid}")
        if self.bs_antenna_spacing <= 0 or self.irs_element_spacing <= 0:
            raise ContractViolation("array spacings must be positive")
        pts = [self.bs_position, self.irs_position]
        if self.user_positions is not None:
            pts += list(self.user_positions)
        if not np.all(np.isfinite(np.asarray(pts, dtype=float))):
            raise ContractViolation("positions must be finite")

    @property
    def n_elements(self) -> int:
        return self.irs_grid[0] * self.irs_grid[1]

    def with_elements(self, m: int) -> "Geometry":
        return replace(self, irs_grid=default_irs_grid(m))


@dataclass(frozen=True)
class ChannelParams:
    pathloss_ref_gain: float = 1e-3
    exponent_bs_user: float = 4.0
    exponent_bs_irs: float = 2.0
    exponent_irs_user: float = 2.5
    rician_K1: float = 10.0
    rician_K2: float = 10.0
    noise_power: float = field(default_factory=lambda: dbm_to_watt(-114.0))

    def __post_init__(self):
        if min(self.exponent_bs_user, self.exponent_bs_irs, self.exponent_irs_user) <= 0:
            raise ContractViolation("pathloss exponents must be positive")
        if self.rician_K1 < 0 or self.rician_K2 < 0:
            raise ContractViolation("Rician factors must be >= 0")
        if self.noise_power <= 0:
            raise ContractViolation("noise power must be positive")


@dataclass(frozen=True)
class ChannelSet:
    """One realization of every link.

    ``F`` is ``M x N``; ``g`` is ``K x M`` (row ``k`` is ``g_k``);
    ``v`` is ``K x N`` (row ``k`` is ``v_k``).
    """

    F: np.ndarray
    g: np.ndarray
    v: np.ndarray
    noise_power: float

    def __post_init__(self):
        m, n = self.F.shape
        if self.g.shape != (self.v.shape[0], m) or self.v.shape[1] != n:
            raise ContractViolation(
                f"inconsistent shapes F{self.F.shape} g{self.g.shape} v{self.v.shape}"
            )
        if not (np.all(np.isfinite(self.F)) and np.all(np.isfinite(self.g))
                and np.all(np.isfinite(self.v))):
            raise ContractViolation("channel entries must be finite")

    @property
    def M(self) -> int:
        return self.F.shape[0]

    @property
    def N(self) -> int:
        return self.F.shape[1]

    @property
    def K(self) -> int:
        return self.v.shape[0]

    def reorder(self, permutation) -> "ChannelSet":
        perm = np.asarray(permutation, dtype=int)
        return ChannelSet(self.F, self.g[perm], self.v[perm], self.noise_power)

    def without_irs(self) -> "ChannelSet":
        return ChannelSet(
            np.zeros((0, self.N), complex), np.zeros((self.K, 0), complex),
            self.v, self.noise_power,
        )

    def cascade(self, user: int) -> np.ndarray:
        """``Gamma_k``: the ``(M+1) x N`` matrix with ``h_k = [e; 1]^T Gamma_k``."""
        if not 0 <= user < self.K:
            raise IndexError(f"user {user} out of range")
        top = self.g[user].conj()[:, None] * self.F
        return np.vstack([top, self.v[user].conj()[None, :]])

    def cascades(self) -> np.ndarray:
        """All ``Gamma_k`` stacked, shape ``(K, M+1, N)``."""
        top = self.g.conj()[:, :, None] * self.F[None, :, :]
        return np.concatenate([top, self.v.conj()[:, None, :]], axis=1)


def pathloss(distance: float, exponent: float, ref_gain: float = 1e-3) -> float:
    if not distance > 0:
        raise DomainError("distance must be positive")
    return ref_gain * distance ** (-exponent)


def steering_ula(angle: float, n: int, spacing: float) -> np.ndarray:
    """``exp(1j*2*pi*spacing*i*sin(angle))`` for ``i = 0..n-1``."""
    return _ula_from_cosine(math.sin(angle), n, spacing)


def _ula_from_cosine(direction_cosine: float, n: int, spacing: float) -> np.ndarray:
    if n < 0:
        raise ContractViolation("array size must be >= 0")
    return np.exp(1j * 2.0 * np.pi * spacing * np.arange(n) * direction_cosine)


def steering_ura(azimuth: float, elevation: float, grid: tuple, spacing: float) -> np.ndarray:
    """Rectangular-array response, row-major over ``(rows, cols)``.

    The row axis is horizontal (direction cosine ``sin(az) cos(el)``); the
    column axis is vertical (direction cosine ``sin(el)``).
    """
    rows, cols = grid
    a_rows = _ula_from_cosine(math.sin(azimuth) * math.cos(elevation), rows, spacing)
    a_cols = _ula_from_cosine(math.sin(elevation), cols, spacing)
    return np.kron(a_rows, a_cols)


def _irs_angles(irs_pos, other_pos) -> tuple[float, float]:
    # IRS faces -y; azimuth measured from the surface normal in the horizontal plane.
    d = np.asarray(other_pos, float) - np.asarray(irs_pos, float)
    u = d / np.linalg.norm(d)
    return math.atan2(u[0], -u[1]), math.asin(float(np.clip(u[2], -1.0, 1.0)))


def _bs_angle(bs_pos, other_pos) -> float:
    # ULA along y: the phase progression uses the y direction cosine.
    d = np.asarray(other_pos, float) - np.asarray(bs_pos, float)
    u = d / np.linalg.norm(d)
    return math.asin(float(np.clip(u[1], -1.0, 1.0)))


def _rician_weights(kfactor: float) -> tuple[float, float]:
    if math.isinf(kfactor):
        return 1.0, 0.0
    return math.sqrt(kfactor / (kfactor + 1.0)), math.sqrt(1.0 / (kfactor + 1.0))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def drop_users(geometry: Geometry, k_users: int, rng: np.random.Generator) -> np.ndarray:
    (x0, x1), (y0, y1) = geometry.user_area
    xy = np.column_stack([rng.uniform(x0, x1, k_users), rng.uniform(y0, y1, k_users)])
    return np.column_stack([xy, np.full(k_users, geometry.user_height)])


def sample_channels(geometry: Geometry, params: ChannelParams, k_users: int,
                    n_antennas: int, seed) -> ChannelSet:
    """Draw one channel realization; bit-identical for identical inputs.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`. Separate
    child streams drive the user drop and each link so that changing, e.g.,
    ``N`` leaves the IRS-user links untouched.
    """
    if k_users < 1 or n_antennas < 1:
        raise ContractViolation("need K >= 1 and N >= 1")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    drop_ss, f_ss, g_ss, v_ss = ss.spawn(4)
    m = geometry.n_elements

    if geometry.user_positions is not None:
        users = np.asarray(geometry.user_positions, float)
        if users.shape[0] != k_users:
            raise ContractViolation(
                f"geometry has {users.shape[0]} fixed users but K={k_users}")
    else:
        users = drop_users(geometry, k_users, np.random.default_rng(drop_ss))

    bs = np.asarray(geometry.bs_position, float)
    irs = np.asarray(geometry.irs_position, float)
    ref = params.pathloss_ref_gain

    rho = np.array([pathloss(np.linalg.norm(u - bs), params.exponent_bs_user, ref) for u in users])
    v = np.sqrt(rho)[:, None] * _cn(np.random.default_rng(v_ss), (k_users, n_antennas))

    if m == 0:
        return ChannelSet(np.zeros((0, n_antennas), complex), np.zeros((k_users, 0), complex),
                          v, params.noise_power)

    kappa = pathloss(np.linalg.norm(irs - bs), params.exponent_bs_irs, ref)
    az, el = _irs_angles(irs, bs)
    a_irs = steering_ura(az, el, geometry.irs_grid, geometry.irs_element_spacing)
    a_bs = steering_ula(_bs_angle(bs, irs), n_antennas, geometry.bs_antenna_spacing)
    w_los, w_nlos = _rician_weights(params.rician_K1)
    f_los = np.outer(a_irs, a_bs.conj())
    F = math.sqrt(kappa) * (w_los * f_los + w_nlos * _cn(np.random.default_rng(f_ss), (m, n_antennas)))

    w_los, w_nlos = _rician_weights(params.rician_K2)
    g_rng = np.random.default_rng(g_ss)
    g = np.empty((k_users, m), complex)
    for k, u in enumerate(users):
        beta = pathloss(np.linalg.norm(u - irs), params.exponent_irs_user, ref)
        az, el = _irs_angles(irs, u)
        los = steering_ura(az, el, geometry.irs_grid, geometry.irs_element_spacing)
        g[k] = math.sqrt(beta) * (w_los * los + w_nlos * _cn(g_rng, m))
    return ChannelSet(F, g, v, params.noise_power)


def phase_vector(theta) -> np.ndarray:
    return np.exp(1j * np.asarray(theta, float))


def combined_channel(ch: ChannelSet, theta, user: int) -> np.ndarray:
    """``g_k^H diag(exp(1j*theta)) F + v_k^H`` as a length-``N`` vector."""
    if not 0 <= user < ch.K:
        raise IndexError(f"user {user} out of range")
    theta = np.asarray(theta, float)
    if theta.shape != (ch.M,):
        raise ContractViolation(f"expected {ch.M} phases, got {theta.shape}")
    return (ch.g[user].conj() * phase_vector(theta)) @ ch.F + ch.v[user].conj()


def combined_channels(ch: ChannelSet, theta) -> np.ndarray:
    """All combined channels, shape ``(K, N)``."""
    theta = np.asarray(theta, float)
    if theta.shape != (ch.M,):
        raise ContractViolation(f"expected {ch.M} phases, got {theta.shape}")
    return (ch.g.conj() * phase_vector(theta)[None, :]) @ ch.F + ch.v.conj()


def channel_strengths(ch: ChannelSet, theta) -> np.ndarray:
    h = combined_channels(ch, theta)
    return np.sum(np.abs(h) ** 2, axis=1)


def wrap_phase(theta) -> np.ndarray:
    """Map phases into ``[0, 2*pi)``."""
    t = np.mod(np.asarray(theta, float), 2.0 * np.pi)
    # mod can return exactly 2*pi for tiny negative inputs
    return np.where(t >= 2.0 * np.pi, 0.0, t)
