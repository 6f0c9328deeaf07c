import logging
import os
import pathlib
from dataclasses import dataclass, fields
from pathlib import Path

import yaml
from dotenv import dotenv_values
from pydantic import ValidationError

from .qsim import NoiseModel
from .tabler import SessionParams

logger = logging.getLogger("qotp")

ENV_PREFIX = "OTP_"


@dataclass
class OtpConfig:
    """
    Operator configuration, read from a key=value file (qotp.env) and
    overridden by OTP_<KEY> environment variables.
    """

    role: str = "alice"
    listen: str = "127.0.0.1:7401"
    connect: str = "127.0.0.1:7401"
    alice_table: str = "alice.otpt"
    bob_table: str = "bob.otpt"
    seed: int = 0
    key_seed: int = 1
    noise: str = "ideal"
    coincidence_window_ps: int = 6000
    pair_rate: float = 10000.0
    duration: float = 10.0
    clock_offset_ps: int = 0
    clock_skew_ppm: float = 0.0
    jitter_ps: float = 100.0
    sig_n: int = 1000
    sig_m: int = 224
    sig_tau: float = 0.776
    chsh_abort_below: float = 2.5
    keepalive_s: float = 30.0
    max_frame_bytes: int = 16777216
    constant_round_factor: int = 0  # 0 = off

    class InvalidConfig(Exception):
        pass

    def __init__(self, **kwargs):
        for f in fields(self):
            setattr(self, f.name, f.default)

        types = {f.name: f.type for f in fields(self)}
        for key, value in kwargs.items():
            if key not in types:
                raise OtpConfig.InvalidConfig(f"Unknown configuration key '{key}'")
            setattr(self, key, self._coerce(key, types[key], value))

        if self.role not in ("alice", "bob"):
            raise OtpConfig.InvalidConfig(f"role must be alice or bob, got {self.role}")
        if self.noise not in self.get_presets():
            raise OtpConfig.InvalidConfig(
                f"Unknown noise preset {self.noise}; available: {', '.join(self.get_presets())}"
            )

    @staticmethod
    def _coerce(key: str, kind, value):
        if value is None:
            raise OtpConfig.InvalidConfig(f"Configuration key '{key}' has no value")
        if kind in (int, "int"):
            cast = int
        elif kind in (float, "float"):
            cast = float
        else:
            cast = str
        try:
            return cast(value.strip()) if isinstance(value, str) else cast(value)
        except ValueError:
            raise OtpConfig.InvalidConfig(
                f"Configuration key '{key}' expects {cast.__name__}, got {value!r}"
            ) from None

    @staticmethod
    def from_file(path: str | Path | None = None, environ: dict | None = None) -> "OtpConfig":
        """
        Build the config from an optional key=value file, then apply
        OTP_<KEY> environment overrides.
        """
        values = {}
        if path is not None:
            if not Path(path).is_file():
                raise FileNotFoundError(f"Config file not found: {path}")
            values.update({key.lower(): value for key, value in dotenv_values(path).items()})
            logger.debug(f"Loaded {len(values)} keys from {path}")
        environ = os.environ if environ is None else environ
        for name, value in environ.items():
            if name.startswith(ENV_PREFIX):
                values[name[len(ENV_PREFIX) :].lower()] = value
        return OtpConfig(**values)

    def session_params(self) -> SessionParams:
        return SessionParams(
            pair_rate=self.pair_rate,
            duration=self.duration,
            coincidence_window=self.coincidence_window_ps,
            clock_offset=self.clock_offset_ps,
            clock_skew=self.clock_skew_ppm,
            jitter=self.jitter_ps,
            noise=self.parse_preset(self.noise),
            seed=self.seed,
        )

    @staticmethod
    def preset_dir() -> Path:
        """Returns the path to the noise presets directory"""
        preset_dir = pathlib.Path(__file__).parent / "presets"
        if preset_dir.exists():
            return preset_dir
        raise ValueError("Presets directory not found. Please ensure qotp is installed correctly.")

    @staticmethod
    def get_presets() -> list[str]:
        """Returns the available noise presets"""
        return sorted(f.stem for f in OtpConfig.preset_dir().glob("*.yml"))

    @staticmethod
    def parse_preset(preset_name: str) -> NoiseModel:
        preset_path = OtpConfig.preset_dir() / f"{preset_name}.yml"
        try:
            with open(preset_path, "r") as f:
                parsed_file = yaml.safe_load(f)
        except FileNotFoundError:
            raise OtpConfig.InvalidConfig(
                f"Could not find {preset_name} preset at {preset_path}"
            ) from None
        except yaml.YAMLError as e:
            raise OtpConfig.InvalidConfig(f"Error parsing preset YAML at {preset_path}: {e}") from None
        if not isinstance(parsed_file, dict):
            raise OtpConfig.InvalidConfig(
                f"Invalid preset format in {preset_path} - expected a dictionary"
            )
        try:
            return NoiseModel(**parsed_file)
        except ValidationError as e:
            raise OtpConfig.InvalidConfig(f"Invalid preset {preset_name}: {e}") from None
