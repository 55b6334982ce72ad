"""Moment-SOS hierarchies for min-max of rational functions and for games.

Modules: ``polycore`` (polynomials and sets), ``momentkit`` (moment and
localizing matrices), ``sdpgate`` (conic solver gateway), ``atomreco`` (rank
tests and atom extraction), ``mrf`` (min-max rational hierarchy),
``finite_games``, ``polygame``, ``absorbing`` and ``cli``.
"""

from .atomreco import AtomicMeasure, extract_atoms, flat_test, numeric_rank
from .finite_games import (FiniteAbsorbingGame, FiniteGame, LoomisGame, solve_absorbing_finite,
                           solve_loomis, solve_minmax, solve_nash)
from .momentkit import MomentVector, localizing_matrix, moment_matrix
from .mrf import MrfProblem, solve_hierarchy
from .polycore import Polynomial, RationalFunction, SemiAlgebraicSet
from .polygame import PolynomialGame, solve_game
from .absorbing import PolynomialAbsorbingGame, value_search

__version__ = "0.1.0"
