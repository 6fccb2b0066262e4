"""Built-in experiment presets.

Two benchmark populations of N = 10 agents in three groups:

    group-a: (alpha, sigma) in {(1, 2), (10, 1), (100, 0.5)}
             slow movers are the most volatile
    group-b: (alpha, sigma) in {(1, 0.5), (10, 1), (100, 2)}
             slow movers are the least volatile

plus composition sweeps over the ratios 8:1:1, 1:8:1, 1:1:8, 5:3:2,
2:5:3, 2:3:5, near-homogeneous populations with mean rates 10/50/100
used for the expansion benchmark, and rate-convergence studies.  All
presets use T = 1, dt = 1e-3 and default level eta = -0.7.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

GROUP_A_PAIRS = ((1.0, 2.0), (10.0, 1.0), (100.0, 0.5))
GROUP_B_PAIRS = ((1.0, 0.5), (10.0, 1.0), (100.0, 2.0))

RATIOS = ((8, 1, 1), (1, 8, 1), (1, 1, 8), (5, 3, 2), (2, 5, 3), (2, 3, 5))

EXPANSION_DIRECTION = (-60.0, 0.0, 40.0)
EXPANSION_SIGMA = (5.0, 2.0, 1.0)
EXPANSION_RHO = (0.2, 0.5, 0.3)
EXPANSION_DELTA = 1e-3
EXPANSION_ALPHA_BARS = (10.0, 50.0, 100.0)

CONVERGENCE_N_LIST = (10, 20, 30, 40, 50, 60)
CONVERGENCE_REPLICATIONS = 2_000


def config_dict(
    pairs,
    counts,
    seed: int,
    replications: int = 10_000,
) -> dict[str, Any]:
    """JSON-schema config for a (alpha, sigma) pair list with head counts."""
    return {
        "groups": [
            {"alpha": a, "sigma": s, "count": int(c)}
            for (a, s), c in zip(pairs, counts)
        ],
        "T": 1.0,
        "dt": 1e-3,
        "eta": -0.7,
        "y0": 0.0,
        "seed": int(seed),
        "replications": int(replications),
    }


def expansion_pairs(alpha_bar: float, delta: float = EXPANSION_DELTA):
    """(alpha, sigma) pairs of the near-homogeneous expansion benchmark."""
    return tuple(
        (alpha_bar * (1.0 + delta * c), s)
        for c, s in zip(EXPANSION_DIRECTION, EXPANSION_SIGMA)
    )


def _ratio_counts(rho=EXPANSION_RHO):
    return tuple(int(round(10 * r)) for r in rho)


@dataclass(frozen=True)
class Preset:
    """A named experiment: one or more configs plus the action to run."""

    name: str
    action: str  # one of {"report", "loss-table", "expansion-table", "convergence"}
    configs: dict[str, dict[str, Any]] = field(default_factory=dict)
    n_list: tuple[int, ...] = ()
    alpha_bars: tuple[float, ...] = ()


def _loss_table(name: str, pairs, seed0: int) -> Preset:
    configs = {}
    for i, ratio in enumerate(RATIOS):
        label = "".join(str(r) for r in ratio)
        configs[label] = config_dict(pairs, ratio, seed=seed0 + i)
    return Preset(name=name, action="loss-table", configs=configs)


PRESETS: dict[str, Preset] = {
    "group-a": Preset(
        name="group-a", action="report",
        configs={"": config_dict(GROUP_A_PAIRS, (2, 5, 3), seed=20201)},
    ),
    "group-b": Preset(
        name="group-b", action="report",
        configs={"": config_dict(GROUP_B_PAIRS, (2, 5, 3), seed=20202)},
    ),
    "table-1": _loss_table("table-1", GROUP_A_PAIRS, seed0=30100),
    "table-2": _loss_table("table-2", GROUP_B_PAIRS, seed0=30200),
    "vhat-table": Preset(
        name="vhat-table", action="expansion-table",
        alpha_bars=EXPANSION_ALPHA_BARS,
    ),
    "convergence-a-811": Preset(
        name="convergence-a-811", action="convergence",
        configs={"": config_dict(GROUP_A_PAIRS, (8, 1, 1), seed=40811,
                                 replications=CONVERGENCE_REPLICATIONS)},
        n_list=CONVERGENCE_N_LIST,
    ),
    "convergence-a-253": Preset(
        name="convergence-a-253", action="convergence",
        configs={"": config_dict(GROUP_A_PAIRS, (2, 5, 3), seed=40253,
                                 replications=CONVERGENCE_REPLICATIONS)},
        n_list=CONVERGENCE_N_LIST,
    ),
}

for _abar in EXPANSION_ALPHA_BARS:
    _name = f"convergence-vhat-{int(_abar)}"
    PRESETS[_name] = Preset(
        name=_name, action="convergence",
        configs={"": config_dict(expansion_pairs(_abar), _ratio_counts(),
                                 seed=50000 + int(_abar),
                                 replications=CONVERGENCE_REPLICATIONS)},
        n_list=CONVERGENCE_N_LIST,
    )
