"""Transmission rates and bandwidth shares for the RSU uplink/downlink.

Two allocation policies: Fixed gives every transmission the full effective
bandwidth (so the engine serializes them), Shared splits it equally across a
cohort of simultaneous transmissions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .scenario import RadioParams


class BandwidthPolicy(Enum):
    FIXED = "fixed"
    SHARED = "shared"


@dataclass(frozen=True)
class RateQuote:
    bandwidth_hz: float
    rate_bps: float
    concurrency: int


def shannon_rate(radio: RadioParams, bandwidth_hz: float) -> float:
    """Capacity in bits/s of a `bandwidth_hz` slice at the radio's SNR."""
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth_hz}")
    return bandwidth_hz * math.log2(1.0 + radio.snr)


def allocate_bandwidth(policy: BandwidthPolicy, cohort_size: int, radio: RadioParams) -> float:
    """Bandwidth granted to each member of a cohort of simultaneous transmissions."""
    if cohort_size < 1:
        raise ValueError(f"cohort_size must be >= 1, got {cohort_size}")
    eff = radio.effective_bandwidth_hz
    if policy is BandwidthPolicy.FIXED:
        return eff  # engine never forms fixed-policy cohorts > 1
    return eff / cohort_size


def transmission_time(size_bits: float, rate_bps: float) -> float:
    if rate_bps <= 0:
        raise ValueError(f"rate must be > 0, got {rate_bps}")
    return size_bits / rate_bps


def quote(radio: RadioParams, policy: BandwidthPolicy, cohort_size: int) -> RateQuote:
    bw = allocate_bandwidth(policy, cohort_size, radio)
    return RateQuote(bandwidth_hz=bw, rate_bps=shannon_rate(radio, bw), concurrency=cohort_size)
