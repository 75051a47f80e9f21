"""Crowdsourced local topology discovery: tile measures, knowledge chains, mobility."""
from .chain import (UNBOUNDED, UNREACHABLE, ChainSolution, eigenvalues, expected_absorption_steps,
                    fk_reachable, report_bound, second_largest_eigenvalue, solve_delta, solve_fk,
                    tail_bound, transition_prob)
from .scenario import (Disc, Point2D, Raster, Scenario, contains, generate_random_scenario,
                       load_raster_scenario, load_scenario, save_scenario)
from .tessellation import (OUTSIDE, TileMeasure, classify_point, coverage_fraction,
                           estimate_tessellation)

__version__ = "0.1.0"
