"""Variable catalogs for the v1 and v2 ClimSim variable sets.

Profile variables span 60 vertical levels ordered top of atmosphere first
(index 0); scalars occupy one channel. Energy scales convert native units
to W/m^2 for metric reporting: column tendencies are weighted by the layer
mass (dp/g) times the relevant heat constant, precipitation rates by water
density times latent heat. Wind tendencies are left unconverted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_LEVELS = 60

CP = 1004.64        # J/kg/K
LV = 2.501e6        # J/kg
LF = 3.337e5        # J/kg
GRAV = 9.80616      # m/s^2
RHO_WATER = 1000.0  # kg/m^3
P_SURF = 1.0e5      # Pa


@dataclass
class VariableSpec:
    name: str
    levels: int
    unit: str
    energy_scale: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.energy_scale is None:
            self.energy_scale = np.ones(self.levels)
        self.energy_scale = np.asarray(self.energy_scale, dtype=np.float64).reshape(-1)
        if self.levels < 1:
            raise ValueError(f"{self.name}: levels must be positive")
        if self.energy_scale.shape != (self.levels,):
            raise ValueError(f"{self.name}: energy_scale has {self.energy_scale.size} "
                             f"entries for {self.levels} levels")
        if not np.all(self.energy_scale > 0):
            raise ValueError(f"{self.name}: energy_scale must be positive")

    @property
    def is_profile(self) -> bool:
        return self.levels > 1

    def to_dict(self) -> dict:
        return {"name": self.name, "levels": self.levels, "unit": self.unit,
                "energy_scale": [float(v) for v in self.energy_scale]}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSpec":
        return cls(d["name"], int(d["levels"]), d["unit"], np.asarray(d["energy_scale"], dtype=np.float64))


def layer_thickness(n_levels: int = N_LEVELS) -> np.ndarray:
    """Pressure thickness (Pa) of a quadratically stretched column, top first."""
    edges = P_SURF * (np.arange(n_levels + 1) / n_levels) ** 2
    return np.diff(edges)


def _mass():
    return layer_thickness() / GRAV


def _profile(name, unit, scale=None):
    return VariableSpec(name, N_LEVELS, unit, scale)


def _scalar(name, unit, scale=1.0):
    return VariableSpec(name, 1, unit, [scale])


def _v1_inputs():
    return [
        _profile("Temperature", "K"),
        _profile("Specific humidity", "kg/kg"),
        _scalar("Surface pressure", "Pa"),
        _scalar("Insolation", "W/m2"),
        _scalar("Surface latent heat flux", "W/m2"),
        _scalar("Surface sensible heat flux", "W/m2"),
    ]


def _flux_outputs():
    prec = RHO_WATER * LV
    return [
        _scalar("NETSW", "W/m2"),
        _scalar("FLWDS", "W/m2"),
        _scalar("PRECSC", "m/s", prec),
        _scalar("PRECC", "m/s", prec),
        _scalar("SOLS", "W/m2"),
        _scalar("SOLL", "W/m2"),
        _scalar("SOLSD", "W/m2"),
        _scalar("SOLLD", "W/m2"),
    ]


def _v1_outputs():
    return [
        _profile("dT/dt", "K/s", CP * _mass()),
        _profile("dq/dt", "kg/kg/s", LV * _mass()),
    ] + _flux_outputs()


def _v2_inputs():
    profiles = [
        ("Temperature", "K"),
        ("Specific humidity", "kg/kg"),
        ("Cloud liquid mixing ratio", "kg/kg"),
        ("Cloud ice mixing ratio", "kg/kg"),
        ("Zonal wind speed", "m/s"),
        ("Meridional wind speed", "m/s"),
        ("Ozone volume mixing ratio", "mol/mol"),
        ("Methane volume mixing ratio", "mol/mol"),
        ("Nitrous oxide volume mixing ratio", "mol/mol"),
    ]
    scalars = [
        ("Surface pressure", "Pa"),
        ("Insolation", "W/m2"),
        ("Surface latent heat flux", "W/m2"),
        ("Surface sensible heat flux", "W/m2"),
        ("Zonal surface stress", "W/m2"),
        ("Meridional surface stress", "W/m2"),
        ("Cosine of solar zenith angle", "1"),
        ("Albedo for diffuse longwave radiation", "1"),
        ("Albedo for direct longwave radiation", "1"),
        ("Albedo for diffuse shortwave radiation", "1"),
        ("Albedo for direct shortwave radiation", "1"),
        ("Upward longwave flux", "W/m2"),
        ("Sea-ice area fraction", "1"),
        ("Land area fraction", "1"),
        ("Ocean area fraction", "1"),
        ("Snow depth over ice", "m"),
        ("Snow depth over land", "m"),
    ]
    return [_profile(n, u) for n, u in profiles] + [_scalar(n, u) for n, u in scalars]


def _v2_outputs():
    return [
        _profile("dT/dt", "K/s", CP * _mass()),
        _profile("dq/dt", "kg/kg/s", LV * _mass()),
        _profile("dql/dt", "kg/kg/s", LV * _mass()),
        _profile("dqi/dt", "kg/kg/s", (LV + LF) * _mass()),
        _profile("du/dt", "m/s2"),
        _profile("dv/dt", "m/s2"),
    ] + _flux_outputs()


CATALOGS = {
    "v1": (_v1_inputs, _v1_outputs),
    "v2": (_v2_inputs, _v2_outputs),
}


def catalog(name: str) -> tuple[list[VariableSpec], list[VariableSpec]]:
    """Fresh (inputs, outputs) variable lists for ``"v1"`` or ``"v2"``."""
    key = name.split("_")[0]
    if key not in CATALOGS:
        raise KeyError(f"unknown variable set {name!r}")
    ins, outs = CATALOGS[key]
    return ins(), outs()


def total_channels(variables) -> int:
    return sum(v.levels for v in variables)


def channel_slices(variables) -> list[slice]:
    out, start = [], 0
    for v in variables:
        out.append(slice(start, start + v.levels))
        start += v.levels
    return out


def energy_scale_vector(variables) -> np.ndarray:
    return np.concatenate([v.energy_scale for v in variables])
