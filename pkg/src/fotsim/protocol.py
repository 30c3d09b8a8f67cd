"""The two-step reversal synchronization protocol and session loop.

One round, all in true time relative to the round's pulse mark:

    1. the user emits its pulse, which crosses the link to the server;
    2. the server counter measures T1 between its own pulse and the arrival;
    3. the server re-emits its pulse delayed by C - T1 (plus its delay-unit
       deviation) and the reversed signal crosses back;
    4. the user counter measures T2 between its own pulse and the arrival;
    5. half of T2 - C (after calibration corrections, if enabled) is the
       clock-offset estimate.

Event times within a round are kept relative to the round's nominal epoch so
that double precision holds femtosecond-level cancellations even late in a
long session.  In the default quasi-static mode both link crossings sample
the fluctuation at the round epoch; the flight-time-accurate mode is
available on the link model for sensitivity checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import CalibrationSet, corrected_offset
from .channel import Direction, HardwareDelays, LinkModel, one_way_delay
from .errors import NonCausalError, ReversalOverflowError, ValidationError
from .timebase import ClockModel, TimeErrorSeries


class TicModel:
    """Time interval counter: Gaussian single-shot jitter plus quantization.

    Each reading draws the next jitter sample from the counter's own seeded
    stream, so a session is reproducible reading-by-reading.  resolution_s
    is the quantization LSB; 0 disables quantization.
    """

    def __init__(self, jitter_rms_s: float = 0.0, resolution_s: float = 0.0, rng_seed: int = 0):
        if jitter_rms_s < 0:
            raise ValidationError("jitter_rms_s must be >= 0")
        if resolution_s < 0:
            raise ValidationError("resolution_s must be >= 0")
        self.jitter_rms_s = float(jitter_rms_s)
        self.resolution_s = float(resolution_s)
        self.rng_seed = rng_seed
        self._rng = np.random.default_rng(rng_seed)

    def measure_interval(self, t_start_s: float, t_stop_s: float) -> float:
        """Measured interval t_stop - t_start with jitter and quantization."""
        if not (math.isfinite(t_start_s) and math.isfinite(t_stop_s)):
            raise ValidationError("timestamps must be finite")
        value = (t_stop_s - t_start_s) + self.jitter_rms_s * float(self._rng.standard_normal())
        if self.resolution_s > 0:
            value = float(np.rint(value / self.resolution_s)) * self.resolution_s
        return value


def measure_interval(tic: TicModel, t_start_s: float, t_stop_s: float) -> float:
    return tic.measure_interval(t_start_s, t_stop_s)


@dataclass
class ProtocolConfig:
    """Protocol constants for a run.

    reversal_constant_s (C) must stay above any measured request interval.
    textbook_mode zeroes all hardware terms inside the round, reproducing
    the bare protocol algebra.
    """

    reversal_constant_s: float = 5e-3
    compensation_period_s: float = 1.0
    calibration: CalibrationSet | None = None
    apply_calibration: bool = False
    textbook_mode: bool = False

    def __post_init__(self):
        if not self.reversal_constant_s > 0:
            raise ValidationError("reversal_constant_s must be > 0")
        if not self.compensation_period_s > 0:
            raise ValidationError("compensation_period_s must be > 0")
        if self.apply_calibration:
            if self.calibration is None:
                raise ValidationError("apply_calibration requires a calibration set")
            if self.calibration.reversal_constant_s != self.reversal_constant_s:
                raise ValidationError(
                    "calibration reversal constant differs from protocol config"
                )


@dataclass
class RoundEvents:
    """Event times of one round (relative to the round epoch) plus the
    channel realization, enough to derive any mid-link tap."""

    epoch_s: float
    user_emit_rel_s: float
    server_pulse_rel_s: float
    rxs_rel_s: float
    reversal_emit_rel_s: float
    rxu_rel_s: float
    fiber_us_s: float
    fiber_su_s: float
    reversal_constant_s: float
    link: LinkModel
    hw: HardwareDelays


@dataclass
class SyncRoundResult:
    """Measurements and ground truth of one protocol round."""

    t_round_s: float
    t1_s: float
    t2_s: float
    reversal_delay_applied_s: float
    offset_estimate_s: float
    true_offset_s: float
    residual_s: float
    events: RoundEvents = field(repr=False, default=None)


def compute_reversal_delay(reversal_constant_s: float, t1_s: float) -> float:
    """Reversal delay C - T1; raises ReversalOverflowError when T1 >= C."""
    if t1_s >= reversal_constant_s:
        raise ReversalOverflowError(
            f"T1 = {t1_s:.9e} s reaches the reversal constant C = "
            f"{reversal_constant_s:.9e} s; increase C"
        )
    return reversal_constant_s - t1_s


def sync_round(
    server: ClockModel,
    user: ClockModel,
    link: LinkModel,
    hw: HardwareDelays,
    tic_server: TicModel,
    tic_user: TicModel,
    cfg: ProtocolConfig,
    t: float,
    user_steer_s: float = 0.0,
) -> SyncRoundResult:
    """Execute one synchronization round at epoch t (a pulse mark of both sites).

    user_steer_s is subtracted from the user clock's time error, which is how
    the session loop applies accumulated step corrections.
    """
    if hw is None:
        hw = HardwareDelays()
    if cfg.textbook_mode:
        hw = HardwareDelays()

    x_server = server.time_error(t)
    x_user = user.time_error(t) - user_steer_s
    true_offset = x_user - x_server  # server pulse minus user pulse, in true time

    user_emit = -x_user
    server_pulse = -x_server

    q_us = t if not link.evaluate_at_emit_time else t + user_emit
    tau_us = one_way_delay(link, hw, Direction.USER_TO_SERVER, q_us)
    if tau_us < 0:
        raise NonCausalError("user->server path delay is negative")
    rxs = user_emit + tau_us

    t1 = tic_server.measure_interval(server_pulse, rxs)
    reversal_delay = compute_reversal_delay(cfg.reversal_constant_s, t1)
    applied_delay = reversal_delay + hw.delay_unit_dev_server_s
    reversal_emit = server_pulse + applied_delay
    if reversal_emit < rxs:
        raise NonCausalError(
            "reversal emission precedes the request measurement; C is too small"
        )

    q_su = t if not link.evaluate_at_emit_time else t + reversal_emit
    tau_su = one_way_delay(link, hw, Direction.SERVER_TO_USER, q_su)
    if tau_su < 0:
        raise NonCausalError("server->user path delay is negative")
    rxu = reversal_emit + tau_su

    t2 = tic_user.measure_interval(user_emit, rxu)

    if cfg.apply_calibration:
        estimate = corrected_offset(t2, cfg.calibration)
        steering_shift = hw.delay_unit_dev_user_s - cfg.calibration.tau_delay_u_s
    else:
        estimate = 0.5 * (t2 - cfg.reversal_constant_s)
        steering_shift = hw.delay_unit_dev_user_s

    events = RoundEvents(
        epoch_s=t,
        user_emit_rel_s=user_emit,
        server_pulse_rel_s=server_pulse,
        rxs_rel_s=rxs,
        reversal_emit_rel_s=reversal_emit,
        rxu_rel_s=rxu,
        fiber_us_s=link.fiber_delay_s(Direction.USER_TO_SERVER, q_us),
        fiber_su_s=link.fiber_delay_s(Direction.SERVER_TO_USER, q_su),
        reversal_constant_s=cfg.reversal_constant_s,
        link=link,
        hw=hw,
    )
    return SyncRoundResult(
        t_round_s=t,
        t1_s=t1,
        t2_s=t2,
        reversal_delay_applied_s=applied_delay,
        offset_estimate_s=estimate,
        true_offset_s=true_offset,
        residual_s=estimate - true_offset + steering_shift,
        events=events,
    )


def run_session(
    server: ClockModel,
    user: ClockModel,
    link: LinkModel,
    hw: HardwareDelays,
    tic_server: TicModel,
    tic_user: TicModel,
    cfg: ProtocolConfig,
    duration_s: float,
    steering_enabled: bool = True,
    on_round=None,
) -> list[SyncRoundResult]:
    """Repeat sync rounds every compensation period over duration_s.

    Between rounds the user clock is steered by the latest offset estimate
    (step correction), so each round's true_offset_s is the tracking error
    just before that round's correction.  on_round, when given, is called
    with each SyncRoundResult as it is produced.
    """
    n_rounds = int(math.floor(duration_s / cfg.compensation_period_s))
    if n_rounds < 1:
        raise ValidationError("duration_s must cover at least one compensation period")
    steer = 0.0
    rounds: list[SyncRoundResult] = []
    for k in range(n_rounds):
        epoch = k * cfg.compensation_period_s
        result = sync_round(server, user, link, hw, tic_server, tic_user, cfg,
                            epoch, user_steer_s=steer)
        rounds.append(result)
        if on_round is not None:
            on_round(result)
        if steering_enabled:
            steer += result.offset_estimate_s
    return rounds


def tracking_error_series(
    rounds: list[SyncRoundResult],
    cfg: ProtocolConfig,
    hw: HardwareDelays,
    warmup_rounds: int = 1,
) -> TimeErrorSeries:
    """Per-round error of the steered user output against the server.

    The value at round k is the effective clock offset before round k's
    correction, shifted by the (un)calibrated user delay-unit deviation.
    The first warmup_rounds samples cover initial acquisition and are
    dropped; with step steering one round suffices.
    """
    if warmup_rounds < 0 or warmup_rounds > len(rounds) - 4:
        raise ValidationError("warmup_rounds leaves too few rounds for analysis")
    if cfg.apply_calibration:
        shift = hw.delay_unit_dev_user_s - cfg.calibration.tau_delay_u_s
    else:
        shift = hw.delay_unit_dev_user_s
    values = [r.true_offset_s + shift for r in rounds[warmup_rounds:]]
    return TimeErrorSeries(
        tau0_s=cfg.compensation_period_s,
        values=np.asarray(values),
        meta={"kind": "tracking_error", "warmup_rounds": warmup_rounds},
    )


def two_way_offset(t_forward_s: float, t_reverse_s: float) -> float:
    """Classic two-way estimate from the two one-way counter readings.

    t_forward is the user->server reading (path delay minus offset),
    t_reverse the server->user reading (path delay plus offset); the offset
    estimate is half their difference.  On a symmetric link this equals the
    true offset; a constant path asymmetry enters with weight one half.
    """
    return 0.5 * (t_reverse_s - t_forward_s)


def tdm_admission(
    n_users: int, period_s: float, slot_s: float, holdover_limit_s: float | None = None
) -> tuple[bool, list[float]]:
    """Feasibility of time-division multiplexing n_users onto one server.

    Admitted when n_users slots fit in the service period (and, if a
    holdover limit is given, the period does not exceed it).  Returns the
    admission flag and the slot start times (empty when rejected).
    """
    if n_users < 1:
        raise ValidationError("n_users must be >= 1")
    if not slot_s > 0 or not period_s > 0:
        raise ValidationError("slot_s and period_s must be > 0")
    fits = n_users * slot_s <= period_s or math.isclose(
        n_users * slot_s, period_s, rel_tol=1e-12
    )
    if holdover_limit_s is not None and period_s > holdover_limit_s:
        fits = False
    if not fits:
        return False, []
    return True, [k * slot_s for k in range(n_users)]
