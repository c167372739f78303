"""Variable-order subordination: symbols, torus operators and Feller traces."""
__version__ = "0.1.0"

from .errors import (CapabilityError, DegenerateFamilyError, DomainError, IncompatibilityError,
                     InputError, NearSingularityError, NonConvergenceError,
                     NumericalIntegrityError, SemigroupAborted, SymmetryIntegrityError)
from .ndf import (BernsteinFamily, PsiSpec, envelope_and_growth, eval_bernstein_family,
                  eval_psi, verify_bernstein, verify_lambda_class)
from .reports import CheckResult, ClassEntry, ClassReport, FellerReport
from .symcalc import (Symbol, compose_symbols_leading, hoh_power_symbol, inverse_symbol,
                      reference_functions, subordinate_symbol, generation_budget,
                      variable_order_example_symbol, verify_ellipticity, verify_symbol_class)
from .torus import (TorusGrid, TorusGridFn, apply_pdo, bilinear_form, garding_probe,
                    regularity_probe, resolvent_solve, semigroup_evolve, sobolev_norm)
from .feller import (check_positive_maximum_principle, check_positivity_contraction,
                     check_subordination_consistency)
