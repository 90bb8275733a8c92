"""Reference values and small parsing helpers shared by the tests."""

import csv
import io
import math

# First positive root of tan x = x.
TAN_ROOT = 4.4934094579
SECOND_TAN_ROOT = 7.7252518369
# Location of the ratio maximum, in wavelengths.
OVERSHOOT_A_OVER_LAMBDA = TAN_ROOT / (2 * math.pi)
OVERSHOOT_RATIO = 1.217234


def sinc(x: float) -> float:
    return 1.0 if x == 0 else math.sin(x) / x


def exponential_kernel_rate(memory_time: float, omega: float) -> float:
    """Γ_L for G = e^{−|τ|/τ_c}·cos(Ωτ): 2∫G dτ = 4τ_c/(1 + Ω²τ_c²)."""
    return 4.0 * memory_time / (1.0 + (omega * memory_time) ** 2)


def spontaneous_rate(omega: float, dipole_strength: float = 1.0) -> float:
    return omega**3 * dipole_strength / (6.0 * math.pi)


def closed_form_ratio(a_over_lambda: float) -> float:
    """Γ/Γ_L for a single channel."""
    return 1.0 - sinc(2.0 * math.pi * a_over_lambda)


def mismatch_ratio(x: float, omega_a: float = 0.0) -> float:
    """Γ_NL/γ̄ for one channel: −sinc(ω̄a)·sinc(δωΔt)."""
    return -sinc(omega_a) * sinc(x)


def parse_csv(text: str) -> list[dict[str, float]]:
    """Parse a numeric CSV table into a list of row dicts."""
    reader = csv.DictReader(io.StringIO(text))
    return [{k: float(v) for k, v in row.items()} for row in reader]
