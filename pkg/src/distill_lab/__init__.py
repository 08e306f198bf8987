"""distill-lab: score-distillation gradient rules over pluggable score oracles.

The package cross-validates five gradient-rule families (sds, nfsd, csd,
bridge, tbsd) against an exact analytic Gaussian-mixture oracle, and speaks a
newline-delimited JSON wire protocol for plugging in real pretrained
denoisers.
"""

from .errors import ConfigError, DistillError, OracleError, SchemaError
from .oracle import (
    AnalyticOracle,
    Condition,
    GaussianComponent,
    GaussianMixtureScene,
    Slot,
    gather_terms,
    log_density,
    marginal_at,
)
from .optim import (
    AdamState,
    InitSpec,
    Parameterization,
    RunConfig,
    RunRecord,
    StepTrace,
    adam_update,
    distill_step,
    run,
)
from .remote import DEFAULT_NEGATIVE_FRAGMENT, PromptSpec, RemoteOracle
from .rules import (
    BridgeRule,
    CsdRule,
    FactorSchedule,
    FixedARule,
    GuidanceTerms,
    MgdaResult,
    NfsdRule,
    RuleConfig,
    SdsRule,
    TbsdRule,
    anneal_w2,
    delta_bridge,
    delta_cls,
    delta_csd,
    delta_fixed_a,
    delta_nfsd,
    delta_post,
    delta_sds,
    delta_tbsd,
    factor,
    shape_texture_objectives,
    solve_mu,
    tbsd_cfg_form,
)
from .harness import (
    CanonicalTestbed,
    FieldScan,
    GridSpec,
    Metrics,
    SummaryTable,
    SweepCell,
    build_canonical_testbed,
    canonical_testbed,
    compute_metrics,
    field_scan,
    single_target_scene,
    sweep,
)
from .schedule import DEFAULT_TIMESTEP_RANGE, NoiseSchedule, add_noise, sample_timestep
from .serialize import load, persist, records_equal

__version__ = "0.1.0"
