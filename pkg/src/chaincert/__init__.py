"""Risk certificates for learners trained on contractive Markov chain data.

The pieces compose in pipeline order: a generator samples chain states, a
hypothesis class plus loss environment turns states into loss rows, the
learner picks a member within its slack, complexity and transport estimates
feed the certificate formulas, and the validators replay the whole pipeline
against the stated confidence.
"""
from .certificates import (
    Certificate,
    ValidationReport,
    certify_empirical,
    certify_population,
    check_certificate,
    confidence_level,
    coverage_experiment,
    deviation_constant,
    invert_epsilon,
    sample_complexity,
    validate_lemma1,
    validate_lemma2,
    validate_lemma3,
)
from .complexity import (
    LossMatrix,
    RademacherEstimate,
    growth_bound,
    loss_matrix,
    rademacher_exact,
    rademacher_expected,
    rademacher_mc,
    vc_bound,
)
from .config import ExperimentConfig, build_bundle, load_config, parse_config
from .erm import RiskReport, erm, opt_risk, true_risk, true_risk_table
from .errors import (
    AssumptionViolationError,
    ChainCertError,
    GeneratorContractError,
    InvalidInputError,
    SizeCapError,
)
from .generators import (
    Generator,
    Trajectory,
    affine_ifs_generator,
    analytic_lip_factor,
    burn_in_steps,
    deterministic_map_generator,
    empirical_contraction_probe,
    iid_generator,
    labeled_lipschitz_generator,
    sample_chain,
    sample_stationary_chain,
)
from .hypotheses import (
    HypothesisClass,
    LossEnv,
    constant_grid,
    constant_hypothesis,
    finalize_env,
    linear_hypothesis,
    make_abs_loss,
    make_squared_loss,
    tabulated_hypothesis,
    verify_a2,
)
from .metric import MetricSpec, SeedSpec, ZPoint, derive_stream, dist
from .presets import PresetBundle, load_preset, preset_names
from .transport import (
    EmpiricalMeasure,
    TransportPlan,
    contraction_curve,
    kr_dual_lower_bound,
    w1_exact,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolationError",
    "Certificate",
    "ChainCertError",
    "EmpiricalMeasure",
    "ExperimentConfig",
    "Generator",
    "GeneratorContractError",
    "HypothesisClass",
    "InvalidInputError",
    "LossEnv",
    "LossMatrix",
    "MetricSpec",
    "PresetBundle",
    "RademacherEstimate",
    "RiskReport",
    "SeedSpec",
    "SizeCapError",
    "Trajectory",
    "TransportPlan",
    "ValidationReport",
    "ZPoint",
    "affine_ifs_generator",
    "analytic_lip_factor",
    "build_bundle",
    "burn_in_steps",
    "certify_empirical",
    "certify_population",
    "check_certificate",
    "confidence_level",
    "constant_grid",
    "constant_hypothesis",
    "contraction_curve",
    "coverage_experiment",
    "deterministic_map_generator",
    "deviation_constant",
    "derive_stream",
    "dist",
    "empirical_contraction_probe",
    "erm",
    "finalize_env",
    "growth_bound",
    "iid_generator",
    "invert_epsilon",
    "kr_dual_lower_bound",
    "labeled_lipschitz_generator",
    "linear_hypothesis",
    "load_config",
    "load_preset",
    "loss_matrix",
    "make_abs_loss",
    "make_squared_loss",
    "opt_risk",
    "parse_config",
    "preset_names",
    "rademacher_exact",
    "rademacher_expected",
    "rademacher_mc",
    "sample_chain",
    "sample_complexity",
    "sample_stationary_chain",
    "tabulated_hypothesis",
    "true_risk",
    "true_risk_table",
    "validate_lemma1",
    "validate_lemma2",
    "validate_lemma3",
    "vc_bound",
    "verify_a2",
    "w1_exact",
]
