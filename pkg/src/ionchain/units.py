"""Trap parameters, physical constants and the dimensionless unit system.

Lengths are measured in ``l0 = (k Z^2 e^2 / (m w_z^2))^(1/3)``, energies in
``e0 = m w_z^2 l0^2`` and frequencies in units of the longitudinal trap
frequency ``w_z``.  The single quantum parameter of the problem is

    eta = hbar / (m w_z l0^2) = hbar w_z / e0,

so a phonon of frequency ``w_a`` (units of ``w_z``) carries the scaled
energy ``eta * w_a``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

# CODATA 2018; the only place SI constants live.
CONSTANTS_VERSION = "CODATA-2018"
ELEMENTARY_CHARGE = 1.602176634e-19  # C
HBAR = 1.054571817e-34  # J s
BOLTZMANN = 1.380649e-23  # J / K
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F / m
COULOMB_CONSTANT = 1.0 / (4.0 * math.pi * VACUUM_PERMITTIVITY)  # N m^2 / C^2

FREQUENCY_CONVENTIONS = ("angular", "ordinary")

YB171_MASS_U = 170.936


class ConfigError(ValueError):
    """Raised for invalid trap parameters or malformed config files."""


@dataclass(frozen=True)
class TrapConfig:
    """Physical description of a single-species linear Paul trap.

    ``omega_z`` is always stored as an angular frequency in rad/s;
    ``frequency_convention`` records how the user-supplied number was read
    (see :meth:`from_user_frequency`).
    """

    ion_mass: float  # atomic mass units
    charge_number: int
    omega_z: float  # rad / s
    beta_x: float
    beta_y: float
    n_ions: int
    frequency_convention: str = "angular"

    def __post_init__(self):
        if not self.ion_mass > 0:
            raise ConfigError(f"ion_mass must be positive, got {self.ion_mass}")
        if not self.omega_z > 0:
            raise ConfigError(f"omega_z must be positive, got {self.omega_z}")
        if int(self.charge_number) != self.charge_number or self.charge_number < 1:
            raise ConfigError(f"charge_number must be a positive integer, got {self.charge_number}")
        if int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise ConfigError(f"n_ions must be a positive integer, got {self.n_ions}")
        if self.beta_x < 1 or self.beta_y < 1:
            raise ConfigError(
                f"transverse ratios must be >= 1, got beta_x={self.beta_x}, beta_y={self.beta_y}"
            )
        if self.frequency_convention not in FREQUENCY_CONVENTIONS:
            raise ConfigError(
                f"frequency_convention must be one of {FREQUENCY_CONVENTIONS}, "
                f"got {self.frequency_convention!r}"
            )

    @classmethod
    def from_user_frequency(cls, ion_mass, charge_number, frequency, beta_x, beta_y, n_ions,
                            frequency_convention="angular"):
        """Build a config from a user-facing frequency value.

        With ``frequency_convention="angular"`` the number is taken as
        ``w_z`` in rad/s; with ``"ordinary"`` it is ``f_z`` in Hz and
        ``w_z = 2 pi f_z``.
        """
        if frequency_convention not in FREQUENCY_CONVENTIONS:
            raise ConfigError(f"unknown frequency_convention {frequency_convention!r}")
        omega = float(frequency)
        if frequency_convention == "ordinary":
            omega *= 2.0 * math.pi
        return cls(float(ion_mass), int(charge_number), omega, float(beta_x), float(beta_y),
                   int(n_ions), frequency_convention)

    @property
    def user_frequency(self):
        """The frequency as the user supplied it (inverse of the convention)."""
        if self.frequency_convention == "ordinary":
            return self.omega_z / (2.0 * math.pi)
        return self.omega_z

    @property
    def betas(self):
        return (self.beta_x, self.beta_y, 1.0)

    def with_ions(self, n_ions):
        return TrapConfig(self.ion_mass, self.charge_number, self.omega_z, self.beta_x,
                          self.beta_y, int(n_ions), self.frequency_convention)


@dataclass(frozen=True)
class ScaleSet:
    l0: float  # m
    e0: float  # J
    eta: float
    kB_over_e0: float  # 1 / K
    omega_z: float  # rad / s


def reference_config(frequency_convention="angular"):
    """The 24-ion Yb-171 chain at 500 kHz with beta_x = beta_y = 10."""
    return TrapConfig.from_user_frequency(YB171_MASS_U, 1, 500e3, 10.0, 10.0, 24,
                                          frequency_convention)


def derive_scales(config: TrapConfig) -> ScaleSet:
    m = config.ion_mass * ATOMIC_MASS_UNIT
    w = config.omega_z
    if not (m > 0 and w > 0):
        raise ConfigError("mass and trap frequency must be positive")
    q2 = COULOMB_CONSTANT * (config.charge_number * ELEMENTARY_CHARGE) ** 2
    l0 = (q2 / (m * w * w)) ** (1.0 / 3.0)
    e0 = m * w * w * l0 * l0
    eta = HBAR / (m * w * l0 * l0)
    return ScaleSet(l0=l0, e0=e0, eta=eta, kB_over_e0=BOLTZMANN / e0, omega_z=w)


def temperature_to_dimensionless(T, scales: ScaleSet):
    """``k_B T / e0`` for a temperature in kelvin."""
    if T < 0:
        raise ValueError(f"temperature must be non-negative, got {T}")
    return scales.kB_over_e0 * T


def temperature_from_dimensionless(theta, scales: ScaleSet):
    return theta / scales.kB_over_e0


def temperature_for_ratio(t, omega, scales: ScaleSet):
    """Kelvin such that ``k_B T = t * hbar * omega`` (``omega`` in units of w_z)."""
    if t < 0:
        raise ValueError(f"temperature ratio must be non-negative, got {t}")
    return t * scales.eta * omega / scales.kB_over_e0


def length_to_si(x, scales: ScaleSet):
    return x * scales.l0


def length_from_si(x, scales: ScaleSet):
    return x / scales.l0


def energy_to_si(e, scales: ScaleSet):
    return e * scales.e0


def energy_from_si(e, scales: ScaleSet):
    return e / scales.e0


def frequency_to_si(w, scales: ScaleSet):
    """Angular frequency in rad/s for ``w`` in units of w_z."""
    return w * scales.omega_z


def frequency_from_si(omega, scales: ScaleSet):
    return omega / scales.omega_z


_CONFIG_KEYS = {
    "ion_mass_u": float,
    "charge_number": int,
    "omega_z_hz": float,
    "frequency_convention": str,
    "beta_x": float,
    "beta_y": float,
    "n_ions": int,
}


def parse_config(text: str) -> TrapConfig:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       delimiters=("=",))
    try:
        parser.read_string("[trap]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = dict(parser["trap"])
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    values = {}
    for key, cast in _CONFIG_KEYS.items():
        if key not in raw:
            continue
        try:
            values[key] = cast(raw[key].strip())
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw[key]!r}") from None
    missing = {"ion_mass_u", "omega_z_hz", "beta_x", "beta_y", "n_ions"} - set(values)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    return TrapConfig.from_user_frequency(
        values["ion_mass_u"],
        values.get("charge_number", 1),
        values["omega_z_hz"],
        values["beta_x"],
        values["beta_y"],
        values["n_ions"],
        values.get("frequency_convention", "angular"),
    )


def load_config(path) -> TrapConfig:
    return parse_config(Path(path).read_text())


def format_config(config: TrapConfig) -> str:
    return (
        f"ion_mass_u = {config.ion_mass!r}\n"
        f"charge_number = {config.charge_number}\n"
        f"omega_z_hz = {config.user_frequency!r}\n"
        f"frequency_convention = {config.frequency_convention}\n"
        f"beta_x = {config.beta_x!r}\n"
        f"beta_y = {config.beta_y!r}\n"
        f"n_ions = {config.n_ions}\n"
    )
