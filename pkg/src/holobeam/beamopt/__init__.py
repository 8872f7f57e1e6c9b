"""Beamformer optimization: QCQP engine, trade-off fronts, JCAS, co-design, distributed sensing."""

from .codesign import SensingTarget, codesign_maxmin, max_user_snr, qt_auxiliary, qt_surrogate
from .core import (
    CONSTRAINT_TOL,
    AmplitudeDomain,
    BallDomain,
    ParetoPoint,
    SolveReport,
    child_rngs,
    monotone,
)
from .distsense import Scatterer, check_waveforms, dft_waveforms, distsense_maxmin, distsense_sinrs
from .jcas import JcasUser, hdma_basis, hdma_weights, jcas_transmit
from .pareto import (
    ParetoScenario,
    feasible_points,
    max_snr,
    pa_reference_front,
    pareto_front,
    pareto_rows,
    sensing_form,
    snr_form,
)
from .qcqp import (
    OracleResult,
    QcqpConstraint,
    QcqpSpec,
    QuadForm,
    brute_force_oracle,
    max_directional_power,
    power_form,
    probe_vector,
    quantize_solution,
    solve_pattern_qcqp,
)

__all__ = [
    "AmplitudeDomain",
    "BallDomain",
    "CONSTRAINT_TOL",
    "JcasUser",
    "OracleResult",
    "ParetoPoint",
    "ParetoScenario",
    "QcqpConstraint",
    "QcqpSpec",
    "QuadForm",
    "Scatterer",
    "SensingTarget",
    "SolveReport",
    "brute_force_oracle",
    "check_waveforms",
    "child_rngs",
    "codesign_maxmin",
    "dft_waveforms",
    "distsense_maxmin",
    "distsense_sinrs",
    "feasible_points",
    "hdma_basis",
    "hdma_weights",
    "jcas_transmit",
    "max_directional_power",
    "max_snr",
    "max_user_snr",
    "monotone",
    "pa_reference_front",
    "pareto_front",
    "pareto_rows",
    "power_form",
    "probe_vector",
    "qt_auxiliary",
    "qt_surrogate",
    "quantize_solution",
    "sensing_form",
    "snr_form",
    "solve_pattern_qcqp",
]
