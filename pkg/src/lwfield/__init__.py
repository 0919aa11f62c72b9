"""Retarded-time fields of relativistic point sources, identity checks and n-body dynamics.

Units are natural (c = 1) throughout.
"""
from .errors import (AdmissibilityError, CollisionError, ContractionError, HistoryError,
                     LwfieldError, ScriptSyntaxError, SingularityError, SmoothnessError,
                     StepError, SymbolicError)
from .fields import (EmField, FundamentalFields, PartialDerivatives, Potentials, T_MIN,
                     analytic_partials, boost_em_field, feynman_field, feynman_field_fd,
                     field_from_potentials, fundamental_fields, lw_potentials)
from .retarded import oracle_retarded_time, explicit_rate_bound, retarded_time
from .trajectory import (Analytic, Boosted, Circular, Rest, Trajectory, Uniform,
                         admissibility_check, boost_trajectory, from_config, gamma_factor,
                         lorentz_boost)

__version__ = "0.1.0"
