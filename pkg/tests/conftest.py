import pytest

from densnav import config, scenario
from densnav import navprog as nv


@pytest.fixture(scope="session")
def small():
    """s1 at an unpadded 6x6x4 dictionary: problem, auto-gamma solution and LP."""
    cfg = config.load_config("s1")
    cfg["dictionary"].update(counts=[6, 6, 4], sigma_ratio=1.2, pad=0.0, pad_cost=0.0)
    D, gen = scenario.run_fit(cfg)
    problem = scenario.build_problem(cfg, D, gen)
    sol, lp = nv.solve_problem(problem)
    return problem, sol, lp
