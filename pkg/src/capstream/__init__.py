"""Sample-and-hold style stream sampling over the SH_l spectrum.

Samplers for unaggregated key/weight streams (discrete and continuous,
fixed threshold and fixed size, one and two passes, coordinated
multi-objective) with unbiased estimators of frequency statistics such as
cap_T, distinct count and sum.
"""

from .continuous import ContinuousConfig, ContinuousSample, ContinuousSampler
from .continuous_est import (
    estimate_continuous_1pass,
    estimate_continuous_2pass,
    inclusion_probability_continuous,
)
from .core import ALL, INF, FrequencyFunction, HashRange, InputError, KeyHasher, KeySet, aggregate, exact_query
from .discrete import DiscreteConfig, DiscreteSample, DiscreteSampler
from .discrete_est import DiscreteCoefficients, estimate_discrete_1pass, estimate_discrete_2pass
from .multiobjective import INTERVAL, build_multi_sample, estimate_multi, mo_inclusion_probability
from .twopass import PassOneConfig, PassOneSummary, merge_pass_one, pass_one, pass_two, two_pass

__all__ = [
    "ALL",
    "INF",
    "INTERVAL",
    "ContinuousConfig",
    "ContinuousSample",
    "ContinuousSampler",
    "DiscreteCoefficients",
    "DiscreteConfig",
    "DiscreteSample",
    "DiscreteSampler",
    "FrequencyFunction",
    "HashRange",
    "InputError",
    "KeyHasher",
    "KeySet",
    "PassOneConfig",
    "PassOneSummary",
    "aggregate",
    "build_multi_sample",
    "estimate_continuous_1pass",
    "estimate_continuous_2pass",
    "estimate_discrete_1pass",
    "estimate_discrete_2pass",
    "estimate_multi",
    "exact_query",
    "inclusion_probability_continuous",
    "merge_pass_one",
    "mo_inclusion_probability",
    "pass_one",
    "pass_two",
    "two_pass",
]
