import pytest

from dcmgsim import run
from dcmgsim.config import build_scenario, build_sweep_config, resolve
from dcmgsim.sweep import TransferFunctionId, run_sweeps

import paper_system


@pytest.fixture(scope="session")
def paper_traces():
    """One shared run of the full 10 s two-DER scenario."""
    return run(paper_system.make_scenario())


@pytest.fixture(scope="session")
def full_sweep():
    """All four closed-loop Bode curves over the default sweep grid.

    This is the expensive fixture (~2 x 600 simulated seconds); shared by
    the acceptance criteria and the frequency-domain invariant tests.
    """
    cfg = resolve({"preset": "paper-fig4"})
    scenario = build_scenario(cfg)
    sweep_cfg = build_sweep_config(cfg)
    curves, meta = run_sweeps(scenario.network, scenario.controllers,
                              list(TransferFunctionId), sweep_cfg,
                              dt=scenario.dt)
    return curves, meta, sweep_cfg
