"""Built-in model zoo. Each preset is a complete experiment config."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

GAUSS = {"sigma": [[1.0]]}
CP1 = {"atoms": [1.0], "masses": [1.0], "compound_poisson": True}
CP2PI = {"atoms": [2 * math.pi], "masses": [1.0], "compound_poisson": True}
OU = {"type": "exponential", "rate": 1.0}
BOX = {"type": "indicator", "lo": [0.0], "hi": [1.0]}

SEQ_1D = [
    {"kind": "ray", "n": 40, "t_max": 20.0},
    {"kind": "alternating", "n": 40, "t_max": 20.0},
    {"kind": "geometric", "n": 30, "t_min": 0.25, "t_max": 20.0},
]
SEQ_2D = [
    {"kind": "ray", "n": 20, "t_min": 0.5, "t_max": 20.0},
    {"kind": "diagonal", "n": 20, "t_min": 0.5, "t_max": 20.0},
    {"kind": "spiral", "n": 20, "t_min": 0.5, "t_max": 20.0},
]
ANALYTIC = ["integrability", "combined", "pair", "maruyama", "smallball", "law", "codifference"]


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    expected: str
    model: dict
    diagnostics: list
    l: int = 1
    simulation: dict = field(default_factory=dict)

    def config(self) -> dict:
        sim = {"seed": 20240601, "replicates": 10000, "h": 0.01 if self.l == 1 else 0.2,
               "tail_rtol": 1e-8 if self.l == 1 else 1e-6}
        sim.update(self.simulation)
        return copy.deepcopy({
            "model": self.model,
            "sequence": SEQ_1D if self.l == 1 else SEQ_2D,
            "diagnostics": {"run": list(self.diagnostics), "threshold": 1e-6,
                            "theta_min": -2.0, "theta_max": 2.0, "theta_n": 21},
            "simulation": sim,
            "output": {"directory": f"runs/{self.name}", "formats": ["csv", "npz"]},
        })


def _mma(name, kernel, basis, l=1):
    return {"kind": "mma", "name": name, "l": l, "kernel": kernel, "basis": basis}


_LIST = [
    Preset("ou-gaussian", "OU-type kernel exp(-s) 1{s>=0} over a Gaussian basis (Sigma=1)", "mixing",
           _mma("ou-gaussian", OU, GAUSS), ANALYTIC + ["mc_triplet"]),
    Preset("ou-cp", "OU-type kernel over a compound-Poisson basis (rate 1, jumps of size 1)", "mixing",
           _mma("ou-cp", OU, CP1), ANALYTIC + ["mc_triplet"]),
    Preset("indicator-cp", "kernel 1_[0,1] over a compound-Poisson basis (rate 1, jumps of size 1)", "mixing",
           _mma("indicator-cp", BOX, CP1), ANALYTIC + ["mc_triplet"]),
    Preset("constant-field", "X_t = Z for all t with Z compound Poisson (rate 1, jumps 1)", "non-mixing",
           {"kind": "constant", "name": "constant-field", "l": 1, "basis": CP1},
           ["pair", "combined", "law", "weak_mixing", "mc_triplet", "ergodic"],
           simulation={"ergodic_T": 100.0, "ergodic_replicates": 64}),
    Preset("sum-of-ou", "independent sum of Gaussian OU fields with rates 1 and 2", "mixing",
           {"kind": "sum", "name": "sum-of-ou", "components": [
               _mma("ou-rate-1", OU, GAUSS),
               _mma("ou-rate-2", {"type": "exponential", "rate": 2.0}, GAUSS)]},
           ["combined", "pair", "law", "mc_triplet"]),
    Preset("subordinated-ou", "OU kernel over a Gaussian sheet subordinated by a Poisson sheet", "mixing",
           {"kind": "subordinated", "name": "subordinated-ou", "l": 1, "kernel": OU, "basis": GAUSS,
            "time": {"type": "poisson", "rate": 1.0, "jump": 1.0}},
           ["integrability", "combined", "pair", "maruyama", "smallball", "mc_triplet"]),
    Preset("atom-2pi", "kernel 1_[0,1] over compound Poisson jumps of size 2 pi (needs rescaling)", "mixing",
           _mma("atom-2pi", BOX, CP2PI), ["pair", "rescaled", "combined", "mc_triplet"]),
    Preset("ou-gaussian-2d", "isotropic kernel exp(-|s|^2) on R^2 over a Gaussian basis", "mixing",
           _mma("ou-gaussian-2d", {"type": "radial-gaussian", "rate": 1.0}, GAUSS, l=2),
           ["combined", "pair", "norm_free", "mc_triplet"], l=2),
    Preset("indicator-cp-2d", "kernel 1_[0,1]^2 on R^2 over a compound-Poisson basis", "mixing",
           _mma("indicator-cp-2d", {"type": "indicator", "lo": [0.0, 0.0], "hi": [1.0, 1.0]}, CP1, l=2),
           ["combined", "pair", "maruyama", "smallball", "mc_triplet"], l=2),
]

PRESETS = {p.name: p for p in _LIST}


def list_presets():
    """``(name, description, expected)`` for every preset, in a fixed order."""
    return [(p.name, p.description, f"expected: {p.expected}") for p in _LIST]
