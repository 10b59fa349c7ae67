"""Subcycle squeezed-vacuum generation and electro-optic noise readout."""

__version__ = "0.1.0"

from .config import Scenario, load_scenario, parse_scenario_text  # noqa: E402
from .detect import (  # noqa: E402
    CoherentReadout,
    DetectionParams,
    RdnTrace,
    coherent_readout,
    probe_convolve,
    rdn_exact,
    rdn_linearized,
    rdn_trace_analytic,
    simulate_lockin_rdn,
    vacuum_fraction,
)
from .errors import ConfigError, EosqueezeError, NumericalInstabilityError  # noqa: E402
from .fit import (  # noqa: E402
    AsymmetryMetric,
    FitResult,
    SweepPoint,
    asymmetry_series,
    fit_sweep,
    forward_model,
    product_invariant_check,
)
from .runner import RunManifest, run_scenario, run_sweep_and_fit  # noqa: E402
from .squeeze import (  # noqa: E402
    PropagationConfig,
    SqueezingProfile,
    analytic_noise,
    calibrate_gain,
    extrema_of_noise,
    pockels_velocity,
    propagate_numeric,
    squeezing_factor,
)
from .vacuum import (  # noqa: E402
    FieldEnsemble,
    VacuumStats,
    make_reference_vacuum,
    sample_vacuum_ensemble,
    vacuum_amplitude,
)
from .waveforms import (  # noqa: E402
    CoherentTransient,
    CrystalParams,
    ProbeParams,
    TimeGrid,
    TransientSpec,
    synthesize_transient,
)

__all__ = [
    "__version__",
    "AsymmetryMetric",
    "CoherentReadout",
    "CoherentTransient",
    "ConfigError",
    "CrystalParams",
    "DetectionParams",
    "EosqueezeError",
    "FieldEnsemble",
    "FitResult",
    "NumericalInstabilityError",
    "ProbeParams",
    "PropagationConfig",
    "RdnTrace",
    "RunManifest",
    "Scenario",
    "SqueezingProfile",
    "SweepPoint",
    "TimeGrid",
    "TransientSpec",
    "VacuumStats",
    "analytic_noise",
    "asymmetry_series",
    "calibrate_gain",
    "coherent_readout",
    "extrema_of_noise",
    "fit_sweep",
    "forward_model",
    "load_scenario",
    "make_reference_vacuum",
    "parse_scenario_text",
    "pockels_velocity",
    "probe_convolve",
    "product_invariant_check",
    "propagate_numeric",
    "rdn_exact",
    "rdn_linearized",
    "rdn_trace_analytic",
    "run_scenario",
    "run_sweep_and_fit",
    "sample_vacuum_ensemble",
    "simulate_lockin_rdn",
    "squeezing_factor",
    "synthesize_transient",
    "vacuum_amplitude",
    "vacuum_fraction",
]
