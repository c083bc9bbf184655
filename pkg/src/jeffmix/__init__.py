"""Jeffreys priors and hierarchical priors for univariate mixtures.

The modules build expected Fisher information matrices of location-scale
mixtures by one-dimensional quadrature (:mod:`jeffmix.fisher`), turn them
into Jeffreys priors (:mod:`jeffmix.jeffreys`), combine a conditional
Jeffreys prior on the weights with a hierarchical prior on the component
parameters (:mod:`jeffmix.hierarchical`), sample the resulting posteriors
(:mod:`jeffmix.mcmc`) and run the simulation studies and data analyses
(:mod:`jeffmix.experiments`).
"""

from .errors import (
    AllocationError,
    BoundaryEvaluationError,
    ConfigError,
    DegenerateInformationError,
    EstimationError,
    InitializationError,
    InstanceTooLargeError,
    IntegrationError,
    JeffmixError,
    ParameterDomainError,
)
from .fisher import (
    FisherMatrix,
    IntegratorConfig,
    Scenario,
    analytic_fim_gaussian_single,
    fim,
    fim_element,
    select_integrator,
)
from .hierarchical import HierarchicalHyper, log_hier_prior, log_hyperprior, log_mu_prior, log_sigma_prior
from .jeffreys import (
    log_delta_conditional,
    log_dirichlet_half,
    log_jeffreys,
    log_jeffreys_weights,
    log_rubio_steel,
    reparam_jacobian,
    weights_fim,
)
from .mcmc import (
    ChainTrace,
    DivergenceThresholds,
    LogPrior,
    McmcConfig,
    PriorMode,
    adapt_scales,
    diagnose,
    log_posterior,
    make_prior,
    load_trace,
    propose_weights,
    relabel,
    run_chain,
    save_trace,
)
from .mixture import (
    GAUSSIAN,
    ComponentFamily,
    Dataset,
    FamilyKind,
    MixtureParams,
    ReparamParams,
    brute_force_log_likelihood,
    complete_log_likelihood,
    from_reparam,
    log_density,
    log_likelihood,
    simulate,
    to_reparam,
)

__version__ = "0.1.0"
