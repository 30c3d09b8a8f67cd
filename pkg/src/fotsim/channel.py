"""Bidirectional fiber link and per-site hardware delay chains.

One LinkModel owns a single slow fluctuation realization that both
propagation directions sample at equal query times, so reciprocity of the
fluctuating part is exact by construction.  Non-reciprocal contributions are
modeled as constants: a chromatic-dispersion term set by the two laser
wavelengths and the accumulated dispersion, a signed Sagnac term, and
per-wavelength amplifier delays.  Sign convention throughout:

    delay(server->user) - delay(user->server)
        = (lambda_user - lambda_server) * D_A  +  sagnac  +  (oa_l1 - oa_l2)

where the server laser (lambda_server) lights the server->user direction and
the user laser (lambda_user) the reverse one.  Dispersion and Sagnac are
split half-and-half between the directions so the mean one-way delay stays
at the reciprocal value.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


class Direction(enum.Enum):
    USER_TO_SERVER = "u->s"
    SERVER_TO_USER = "s->u"


@dataclass(frozen=True)
class HardwareDelays:
    """Constant per-site hardware delays, all in seconds."""

    tx_server_s: float = 0.0
    rx_server_s: float = 0.0
    tx_user_s: float = 0.0
    rx_user_s: float = 0.0
    delay_unit_dev_server_s: float = 0.0
    delay_unit_dev_user_s: float = 0.0
    biedfa_lambda1_s: float = 0.0
    biedfa_lambda2_s: float = 0.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if not math.isfinite(value):
                raise ValidationError(f"hardware delay {name} must be finite")


@dataclass(frozen=True)
class FluctuationSpec:
    """Slow reciprocal delay wander: stationary std and correlation time."""

    amplitude_s: float = 0.0
    timescale_s: float = 600.0
    grid_s: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.amplitude_s < 0:
            raise ValidationError("fluctuation amplitude_s must be >= 0")
        if self.amplitude_s > 0 and not self.timescale_s > 0:
            raise ValidationError("fluctuation timescale_s must be > 0")
        if self.grid_s is not None and not self.grid_s > 0:
            raise ValidationError("fluctuation grid_s must be > 0")


class _OuProcess:
    """Ornstein-Uhlenbeck path on a lazy grid, one realization per link.

    Samples are generated strictly in grid order from a seeded stream, so
    values do not depend on the order in which times are queried.
    """

    def __init__(self, spec: FluctuationSpec):
        self.spec = spec
        self.grid = spec.grid_s if spec.grid_s is not None else spec.timescale_s / 10.0
        self._rho = math.exp(-self.grid / spec.timescale_s)
        self._sigma_step = spec.amplitude_s * math.sqrt(1.0 - self._rho ** 2)
        self._rng = np.random.default_rng(spec.rng_seed)
        self._path = [spec.amplitude_s * float(self._rng.standard_normal())]

    def value(self, t: float) -> float:
        idx = int(t / self.grid)
        while len(self._path) <= idx:
            prev = self._path[-1]
            self._path.append(self._rho * prev + self._sigma_step * float(self._rng.standard_normal()))
        return self._path[idx]


class LinkModel:
    """Fiber span between server (position 0) and user (position length_km).

    Exactly one dispersion source must be set: the per-km coefficient or the
    measured accumulated dispersion.  The fluctuation path is stateful and
    single-writer; independent simulation runs need independent instances.
    """

    def __init__(
        self,
        length_km: float,
        group_delay_s_per_km: float = 4.9e-6,
        dispersion_coeff_ps_per_nm_km: float | None = None,
        accumulated_dispersion_ps_per_nm: float | None = None,
        sagnac_s: float = 0.0,
        lambda_server_nm: float = 1546.12,
        lambda_user_nm: float = 1546.92,
        fluctuation: FluctuationSpec | None = None,
        evaluate_at_emit_time: bool = False,
        biedfa_position_km: float | None = None,
    ):
        if length_km < 0:
            raise ValidationError("length_km must be >= 0")
        if (dispersion_coeff_ps_per_nm_km is None) == (accumulated_dispersion_ps_per_nm is None):
            raise ValidationError(
                "exactly one of dispersion_coeff_ps_per_nm_km / "
                "accumulated_dispersion_ps_per_nm must be set"
            )
        self.length_km = float(length_km)
        self.group_delay_s_per_km = float(group_delay_s_per_km)
        self.dispersion_coeff_ps_per_nm_km = dispersion_coeff_ps_per_nm_km
        self.accumulated_dispersion_ps_per_nm = accumulated_dispersion_ps_per_nm
        self.sagnac_s = float(sagnac_s)
        self.lambda_server_nm = float(lambda_server_nm)
        self.lambda_user_nm = float(lambda_user_nm)
        self.fluctuation = fluctuation or FluctuationSpec(amplitude_s=0.0)
        self.evaluate_at_emit_time = bool(evaluate_at_emit_time)
        if biedfa_position_km is None:
            biedfa_position_km = self.length_km / 2.0
        if not 0.0 <= biedfa_position_km <= max(self.length_km, 0.0):
            raise ValidationError("biedfa_position_km must lie on the link")
        self.biedfa_position_km = float(biedfa_position_km)
        self._fluct = _OuProcess(self.fluctuation) if self.fluctuation.amplitude_s > 0 else None

    def base_delay_s(self) -> float:
        return self.length_km * self.group_delay_s_per_km

    def fluctuation_value(self, t: float) -> float:
        return self._fluct.value(t) if self._fluct is not None else 0.0

    def dispersion_asymmetry_s(self) -> float:
        """Server->user minus user->server delay due to chromatic dispersion."""
        d_a = accumulated_dispersion(self)
        return (self.lambda_user_nm - self.lambda_server_nm) * d_a * 1e-12

    def fiber_delay_s(self, direction: Direction, t: float) -> float:
        """One-way fiber propagation delay (no site hardware, no amplifier)."""
        asym = self.dispersion_asymmetry_s() + self.sagnac_s
        half = 0.5 * asym if direction is Direction.SERVER_TO_USER else -0.5 * asym
        return self.base_delay_s() + self.fluctuation_value(t) + half


def accumulated_dispersion(link: LinkModel) -> float:
    """Accumulated dispersion of the link in ps/nm.

    Product D * L when the per-km coefficient is configured, pass-through
    when a measured value is configured.
    """
    coeff = link.dispersion_coeff_ps_per_nm_km
    direct = link.accumulated_dispersion_ps_per_nm
    if (coeff is None) == (direct is None):
        raise ValidationError("exactly one dispersion source must be configured")
    if coeff is not None:
        return float(coeff) * link.length_km
    return float(direct)


def one_way_delay(
    link: LinkModel, hw: HardwareDelays, direction: Direction, t_emit: float
) -> float:
    """Full one-way path delay at emission time t_emit.

    Composes transmitter hardware, fiber (with fluctuation and the
    direction's asymmetry share), the amplifier delay at the direction's
    wavelength, and receiver hardware.
    """
    if t_emit < 0:
        raise ValidationError("t_emit must be >= 0")
    fiber = link.fiber_delay_s(direction, t_emit)
    if direction is Direction.USER_TO_SERVER:
        return hw.tx_user_s + fiber + hw.biedfa_lambda2_s + hw.rx_server_s
    if direction is Direction.SERVER_TO_USER:
        return hw.tx_server_s + fiber + hw.biedfa_lambda1_s + hw.rx_user_s
    raise ValidationError(f"invalid direction {direction!r}")


def asymmetry(link: LinkModel, hw: HardwareDelays) -> float:
    """Total server->user minus user->server path delay difference.

    Includes dispersion, Sagnac and the amplifier's per-wavelength split;
    independent of the fluctuation realization.  Zero for a fully
    reciprocal link.
    """
    return (
        link.dispersion_asymmetry_s()
        + link.sagnac_s
        + hw.biedfa_lambda1_s
        - hw.biedfa_lambda2_s
    )
