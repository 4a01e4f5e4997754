"""Built-in experiment configurations, one per reproduced figure."""

from __future__ import annotations

from .config import ExperimentConfig, parse_config

_FIG1 = """
[experiment]
name = fig1-exact-mdps
T = 10000
instances = 3
repeats = 1

[env]
kind = mdp
names = cliff_world, deep_sea, flat_grad

[algorithm PG-LS]
eps = 1e-4
h = 0.5

[algorithm PG-Log-LS]
eps = 1e-4
h = 0.5

[algorithm GNPG]

[algorithm PG-A]

[algorithm PG]
"""

_FIG2 = """
[experiment]
name = fig2-{level}-{family}
T = 100000
instances = 25
repeats = 5

[env]
kind = bandit
family = {family}
A = 10
gap = {gap}

[algorithm SPG-ESS]
eta0 = {eta0}
beta = 1

[algorithm SPG-ESS-D]
eta0 = {eta0}
beta = 1
T0 = 5000

[algorithm SPG-O-G]

[algorithm SPG-O-R]
"""

_FIG3 = """
[experiment]
name = fig3-exact-entropy
T = 100000
instances = 50
repeats = 1

[env]
kind = bandit
family = deterministic
A = 10
gap = 0.05

[algorithm PG]
init = bad
init_value = 12

[algorithm PG-E]
tau = 0.1
init = bad
init_value = 12

[algorithm PG-E-MS]
p = 1
B1 = 0.01
tau0 = 0.5
init = bad
init_value = 12

[algorithm PG uniform]
algorithm = PG

[algorithm PG-E uniform]
algorithm = PG-E
tau = 0.1

[algorithm PG-E-MS uniform]
algorithm = PG-E-MS
p = 1
B1 = 0.01
tau0 = 0.5
"""

_FIG45 = """
[experiment]
name = {name}
T = 100000
instances = 25
repeats = 5

[env]
kind = bandit
family = bernoulli
A = 10
gap = 0.5

[algorithm SPG-E-MS]
stage_mode = doubling
T1 = 5000
tau0 = 0.5
B1 = 1
beta = 1
init = {init}
init_value = 9

[algorithm SPG-ESS]
eta0 = {eta0}
beta = 1
init = {init}
init_value = 9

[algorithm SPG-ESS-D]
eta0 = {eta0}
beta = 1
init = {init}
init_value = 9

[algorithm SPG-E-ESS]
tau = 0.1
beta = 1
init = {init}
init_value = 9

[algorithm SPG-O-G]
init = {init}
init_value = 9

[algorithm SPG-O-R]
init = {init}
init_value = 9
"""

_VERIFY = """
[experiment]
name = verify-all
mode = verify
instances = 1
repeats = 1

[verify]
trials = 10000
bandit_instances = 10
bandit_A = 5
bandit_gap = 0.2
mdps = cliff_world, deep_sea, flat_grad
small_mdps = 20
"""

ETA0 = repr(1.0 / 18.0)


def _texts() -> dict[str, str]:
    out = {"fig1-exact-mdps": _FIG1}
    for level, gap in (("easy", 0.5), ("hard", 0.1)):
        for family in ("bernoulli", "gaussian", "beta"):
            name = f"fig2-{level}-{family}"
            out[name] = _FIG2.format(level=level, family=family, gap=gap, eta0=ETA0)
    out["fig3-exact-entropy"] = _FIG3
    out["fig4-entropy-uniform"] = _FIG45.format(name="fig4-entropy-uniform", init="uniform", eta0=ETA0)
    out["fig5-entropy-bad"] = _FIG45.format(name="fig5-entropy-bad", init="bad", eta0=ETA0)
    out["verify-all"] = _VERIFY
    return out


PRESETS = _texts()


def list_presets() -> list[str]:
    return list(PRESETS)


def preset_text(name: str) -> str:
    try:
        return PRESETS[name].lstrip()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; try one of {list_presets()}") from None


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name), source=f"preset:{name}")
