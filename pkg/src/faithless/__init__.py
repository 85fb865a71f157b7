"""faithless: feedback-control simulation and correlation analysis.

Simulates simple control loops and related dynamical systems, measures
their (conditional) correlation structure with calibrated significance,
contrasts it with the declared causal graph, and automates the
controlled-variable test for detecting loops from the outside.
"""

__version__ = "0.1.0"

from .signals import (
    Waveform,
    SmoothNoiseSpec,
    derive_seed,
    gen_smooth_noise,
    gen_step,
    gen_constant,
    differentiate,
    integrate,
    autocorrelation,
)
from .plant import (
    ScenarioSpec,
    Trace,
    SmoothNoiseInput,
    StepInput,
    ConstantInput,
    RampInput,
    InstabilityError,
    simulate,
    calibrate_sigma_do,
    settling_time,
)
from .stats import (
    Undefined,
    ZeroVarianceError,
    correlation,
    partial_correlation,
    SignificanceCalibration,
    calibrate_significance,
    Classification,
    classify,
    rejection_ratio,
    decimate,
    mutual_information,
    verify_derivative_theorems,
    CorrelationReport,
    build_report,
    trace_report,
)
from .causal import (
    CausalGraph,
    CyclicGraphError,
    d_separated,
    FaithfulnessReport,
    faithfulness_violations,
    pc_skeleton,
    skeleton_f1,
    triangle_faithfulness_tables,
    loop_ground_truth,
    random_dag,
    linear_gaussian_data,
    causality_vs_correlation_text,
)
from .tcv import TcvReport, run_tcv
from .tables import run_table, table_numbers

__all__ = [
    "__version__",
    "Waveform", "SmoothNoiseSpec", "derive_seed", "gen_smooth_noise", "gen_step",
    "gen_constant", "differentiate", "integrate", "autocorrelation",
    "ScenarioSpec", "Trace", "SmoothNoiseInput", "StepInput", "ConstantInput",
    "RampInput", "InstabilityError", "simulate", "calibrate_sigma_do", "settling_time",
    "Undefined", "ZeroVarianceError", "correlation", "partial_correlation",
    "SignificanceCalibration", "calibrate_significance", "Classification",
    "classify", "rejection_ratio", "decimate", "mutual_information",
    "verify_derivative_theorems", "CorrelationReport", "build_report", "trace_report",
    "CausalGraph", "CyclicGraphError", "d_separated", "FaithfulnessReport",
    "faithfulness_violations", "pc_skeleton", "skeleton_f1",
    "triangle_faithfulness_tables", "loop_ground_truth", "random_dag",
    "linear_gaussian_data", "causality_vs_correlation_text",
    "TcvReport", "run_tcv", "run_table", "table_numbers",
]
