"""Run configuration: an INI file with sections for rates, constants, sequence
timing, drive, tau sweep, numerics and noise.

Every key is optional; missing keys take the reference values. Errors are
reported as ``ConfigError`` naming the file line and the offending field.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields

import numpy as np

from .constants import CONSTANTS, GAMMA2_DARK, OMEGA_R_DEFAULT, PhysicalConstants
from .model import DEFAULT_RATES, DriveParams, TransitionRates, gamma_c
from .pulses import PulseSequence

SECTIONS = ("rates", "constants", "sequence", "drive", "sweep", "numerics", "noise")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a simulation run.

    Exactly one of ``W_p`` and ``s`` is set; the other follows from
    ``W_p = s * constants.W_p_sat``. ``gamma2_laser = None`` means the
    optically induced value ``gamma_c(s)``.
    """

    rates: TransitionRates = DEFAULT_RATES
    constants: PhysicalConstants = CONSTANTS
    laser_duration: float = 10e-6
    wait_duration: float = 400e-9
    rf_duration: float = 0.0
    W_p: float | None = None
    s: float | None = 0.1
    Omega_R: float = OMEGA_R_DEFAULT
    gamma2_laser: float | None = None
    gamma2_wait: float = GAMMA2_DARK
    gamma2_rf: float = GAMMA2_DARK
    tau_start: float = 0.5e-6
    tau_stop: float = 4e-6
    tau_step: float = 20e-9
    dt: float = 1e-9
    tol: float = 1e-8
    max_cycles: int = 1000
    workers: int | None = None
    seed: int = 0
    contrast_noise: float = 0.0
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if (self.W_p is None) == (self.s is None):
            raise ConfigError(self._where("drive", "W_p", "s")
                              + "exactly one of 'W_p' and 's' must be given in [drive]")
        for name in ("laser_duration", "wait_duration", "rf_duration", "Omega_R",
                     "gamma2_wait", "gamma2_rf", "contrast_noise"):
            self._require(getattr(self, name) >= 0, name, ">= 0")
        for name in ("W_p", "s", "gamma2_laser"):
            v = getattr(self, name)
            self._require(v is None or v >= 0, name, ">= 0")
        self._require(self.tau_step > 0, "tau_step", "> 0")
        self._require(0 <= self.tau_start < self.tau_stop, "tau_start", ">= 0 and < tau_stop")
        self._require(self.dt > 0, "dt", "> 0")
        self._require(self.tol > 0, "tol", "> 0")
        self._require(self.max_cycles >= 1, "max_cycles", ">= 1")
        self._require(self.workers is None or self.workers >= 1, "workers", ">= 1")

    def _where(self, section, *keys):
        found = [f"line {self.lines[(section, k)]}" for k in keys if (section, k) in self.lines]
        return ", ".join(found) + ": " if found else ""

    def _require(self, ok, name, what):
        if not ok:
            section = _SECTION_OF[name]
            raise ConfigError(self._where(section, name) + f"[{section}] {name} must be {what}")

    @property
    def pump_rate(self) -> float:
        return self.W_p if self.W_p is not None else self.s * self.constants.W_p_sat

    @property
    def saturation(self) -> float:
        return self.s if self.s is not None else self.W_p / self.constants.W_p_sat

    def sequence(self, tau: float | None = None) -> PulseSequence:
        g2 = self.gamma2_laser
        if g2 is None:
            g2 = gamma_c(self.saturation, self.constants.Gamma_c_inf)
        return PulseSequence(
            laser_duration=self.laser_duration,
            wait_duration=self.wait_duration,
            rf_duration=self.rf_duration if tau is None else tau,
            laser_phase=DriveParams(self.pump_rate, 0.0, g2),
            wait_phase=DriveParams(0.0, 0.0, self.gamma2_wait),
            rf_phase=DriveParams(0.0, self.Omega_R, self.gamma2_rf),
        )

    def tau_grid(self) -> np.ndarray:
        """start, start + step, ... up to stop (inclusive when it lands on the grid)."""
        n = int(np.floor((self.tau_stop - self.tau_start) / self.tau_step + 1e-9)) + 1
        return self.tau_start + np.arange(n) * self.tau_step


# Which section each RunConfig field lives in, and the value type.
_LAYOUT = {
    "sequence": {"laser_duration": float, "wait_duration": float, "rf_duration": float},
    "drive": {"W_p": float, "s": float, "Omega_R": float, "gamma2_laser": float,
              "gamma2_wait": float, "gamma2_rf": float},
    "sweep": {"tau_start": float, "tau_stop": float, "tau_step": float},
    "numerics": {"dt": float, "tol": float, "max_cycles": int, "workers": int},
    "noise": {"seed": int, "contrast_noise": float},
}
_SECTION_OF = {k: sec for sec, keys in _LAYOUT.items() for k in keys}
_OPTIONAL_AUTO = {"gamma2_laser", "workers"}


def _line_numbers(text: str) -> dict:
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = i
        elif section and line and line[0] not in "#;":
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            lines.setdefault((section, key), i)
    return lines


def parse_config(text: str) -> RunConfig:
    """Build a RunConfig from INI text."""
    lines = _line_numbers(text)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (W_p vs w_p)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e).replace("\n", " ")) from None

    def where(section, key=None):
        n = lines.get((section, key))
        return f"line {n}: " if n else ""

    def number(section, key, kind):
        raw = parser[section][key].strip()
        try:
            return kind(raw)
        except ValueError:
            raise ConfigError(f"{where(section, key)}[{section}] {key}: "
                              f"expected {kind.__name__}, got {raw!r}") from None

    groups = {"rates": {}, "constants": {}}
    typed = {"rates": {f.name for f in fields(TransitionRates)},
             "constants": {f.name for f in fields(PhysicalConstants)}}
    values = {}
    drive_keys = set()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{where(section)}unknown section [{section}]; "
                              f"expected one of {', '.join(SECTIONS)}")
        for key in parser[section]:
            if section in typed:
                if key not in typed[section]:
                    raise ConfigError(f"{where(section, key)}unknown key '{key}' in [{section}]")
                groups[section][key] = number(section, key, float)
                continue
            if key not in _LAYOUT[section]:
                raise ConfigError(f"{where(section, key)}unknown key '{key}' in [{section}]")
            if key in _OPTIONAL_AUTO and parser[section][key].strip() == "auto":
                values[key] = None
            else:
                values[key] = number(section, key, _LAYOUT[section][key])
            if section == "drive":
                drive_keys.add(key)

    if "W_p" in drive_keys and "s" in drive_keys:
        raise ConfigError(f"lines {lines[('drive', 'W_p')]} and {lines[('drive', 's')]}: "
                          "both 'W_p' and 's' are set in [drive]; give only one")
    if "W_p" in drive_keys:
        values["s"] = None
    try:
        rates = TransitionRates(**groups["rates"])
        constants = PhysicalConstants(**groups["constants"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return RunConfig(rates=rates, constants=constants, lines=lines, **values)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    try:
        return parse_config(text)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


def dump_config(cfg: RunConfig) -> str:
    """INI text that parses back to an equal RunConfig (all defaults written out)."""
    out = ["[rates]"]
    out += [f"{k} = {float(v)!r}" for k, v in cfg.rates.as_dict().items()]
    out += ["", "[constants]"]
    out += [f"{f.name} = {float(getattr(cfg.constants, f.name))!r}" for f in fields(PhysicalConstants)]
    for section, keys in _LAYOUT.items():
        out += ["", f"[{section}]"]
        for key, kind in keys.items():
            v = getattr(cfg, key)
            if v is None:
                if key in _OPTIONAL_AUTO:
                    out.append(f"{key} = auto")
                continue
            out.append(f"{key} = {kind(v)!r}")
    return "\n".join(out) + "\n"


def default_config() -> RunConfig:
    return RunConfig()
